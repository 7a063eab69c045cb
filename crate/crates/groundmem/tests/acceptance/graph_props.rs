use std::collections::{BTreeMap, BTreeSet};

use groundmem_core::graph::Node;
use groundmem_core::providers::StubEmbedder;
use groundmem_core::{EdgeKind, IngestItem, Memory, Timestamp};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use crate::GRAPH_CASES;

const VOCAB: [&str; 6] = ["person_1", "person_2", "cup_1", "sofa_1", "walk_1", "door_1"];
const TYPES: [&str; 3] = ["Agent", "Object", "Action"];

#[derive(Debug, Clone)]
enum Op {
    Image(Vec<(usize, usize)>),
    Background(Vec<(usize, usize)>),
    Break,
}

fn mentions() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0..VOCAB.len(), 0..TYPES.len()), 0..4)
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        6 => mentions().prop_map(Op::Image),
        1 => mentions().prop_map(Op::Background),
        1 => Just(Op::Break),
    ]
}

fn caption(ms: &[(usize, usize)], background: bool) -> String {
    let mut s = String::from(if background { "Background:" } else { "scene" });
    for &(l, t) in ms {
        s.push_str(&format!(" near [{}:{}]", VOCAB[l], TYPES[t]));
    }
    s
}

/// Replays the operations and checks the resulting graph with a scan that
/// shares no code with the graph's own bookkeeping.
fn check_ops(ops: &[Op]) -> Result<(), TestCaseError> {
    let mut memory = Memory::new();
    let mut types: BTreeMap<&str, usize> = BTreeMap::new();
    let mut images = 0usize;
    let mut chains = 0usize;
    let mut chain_open = false;
    for (i, op) in ops.iter().enumerate() {
        let (ms, background) = match op {
            Op::Break => {
                memory.begin_stream();
                chain_open = false;
                continue;
            }
            Op::Image(ms) => (ms, false),
            Op::Background(ms) => (ms, true),
        };
        let mut local: BTreeMap<&str, usize> = BTreeMap::new();
        let consistent = ms.iter().all(|&(l, t)| {
            let prior = types.get(VOCAB[l]).or(local.get(VOCAB[l])).copied();
            local.insert(VOCAB[l], t);
            prior.is_none_or(|p| p == t)
        });
        let should_succeed = consistent && !(background && ms.is_empty());
        let before = memory.graph().fingerprint();
        let text = caption(ms, background);
        let item = if background { IngestItem::background(&text, Timestamp(i as i64)) } else { IngestItem::image(&text, Timestamp(i as i64)) };
        let result = memory.ingest(item, &StubEmbedder);
        prop_assert_eq!(result.is_ok(), should_succeed, "op {} {:?}: {:?}", i, text, result);
        if result.is_err() {
            prop_assert_eq!(memory.graph().fingerprint(), before, "failed ingest changed the graph");
            continue;
        }
        for &(l, t) in ms {
            types.entry(VOCAB[l]).or_insert(t);
        }
        if !background {
            images += 1;
            if !chain_open {
                chains += 1;
                chain_open = true;
            }
        }
    }

    let graph = memory.graph();
    let kind_of: BTreeMap<&str, &Node> = graph.nodes().iter().map(|n| (n.id(), n)).collect();
    prop_assert_eq!(kind_of.len(), graph.node_count(), "duplicate node ids");
    let triples: Vec<(&str, EdgeKind, &str)> = graph.edge_triples().collect();
    let unique: BTreeSet<_> = triples.iter().collect();
    prop_assert_eq!(unique.len(), triples.len(), "duplicate edges");

    let mut prev_out: BTreeMap<&str, usize> = BTreeMap::new();
    let mut prev_in: BTreeMap<&str, usize> = BTreeMap::new();
    let mut element_in: BTreeMap<&str, u64> = BTreeMap::new();
    for &(s, k, t) in &triples {
        let (src, dst) = (kind_of[s], kind_of[t]);
        match k {
            EdgeKind::HasPrevious => {
                prop_assert!(src.is_image() && dst.is_image(), "HAS_PREVIOUS {} -> {} joins a non-image", s, t);
                *prev_out.entry(s).or_default() += 1;
                *prev_in.entry(t).or_default() += 1;
            }
            EdgeKind::HasElement => {
                prop_assert!(src.as_note().is_some() && dst.as_entity().is_some(), "HAS_ELEMENT {} -> {} has wrong endpoints", s, t);
                *element_in.entry(t).or_default() += 1;
            }
        }
    }
    prop_assert!(prev_out.values().all(|&d| d <= 1), "an image has two previous images");
    prop_assert!(prev_in.values().all(|&d| d <= 1), "an image is previous to two images");
    prop_assert_eq!(prev_out.len(), images - chains, "HAS_PREVIOUS count");

    let mut entity_count = 0;
    for e in graph.entities() {
        entity_count += 1;
        let incoming = element_in.get(e.label.as_str()).copied().unwrap_or(0);
        prop_assert_eq!(e.mention_count, incoming, "mention_count of {}", &e.label);
        prop_assert_eq!(e.entity_type.name(), TYPES[types[e.label.as_str()]], "type of {}", &e.label);
    }
    prop_assert_eq!(entity_count, types.len());
    prop_assert_eq!(graph.notes().filter(|n| n.is_image()).count(), images);
    Ok(())
}

pub fn check() -> Result<String, String> {
    let mut runner = crate::runner(GRAPH_CASES);
    runner.run(&prop::collection::vec(op(), 0..24), |ops| check_ops(&ops)).map_err(|e| e.to_string())?;
    Ok(format!("{GRAPH_CASES} random ingestion sequences keep chains, typing and mention counts consistent"))
}
