use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use groundmem::config::ServiceConfig;
use groundmem::fixture::load_fixture;
use groundmem::live::Providers;
use groundmem::service::{ask, ingest_records};
use groundmem::snapshot::{load_snapshot, save_snapshot};
use groundmem::vault::{export_vault, import_vault};
use groundmem_core::agent::Agent;
use groundmem_core::graph::Node;
use groundmem_core::perception::{make_windows, sample_frames};
use groundmem_core::providers::{ScriptedChat, StubEmbedder};
use groundmem_core::{EntityType, Memory, MemoryGraph};

use crate::{ensure, EXPANSION_K};

pub fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn load_memory(name: &str) -> Result<(Memory, ServiceConfig, Providers), String> {
    let config = ServiceConfig::default();
    let providers = Providers::stub();
    let records = load_fixture(&fixture_path(name)).map_err(|e| e.to_string())?;
    let mut memory = Memory::new().with_embed_model(config.provider.embed_model());
    let report = ingest_records(&mut memory, &records, &config, &providers);
    ensure(report.errors.is_empty(), || format!("fixture {name} had ingest errors: {:?}", report.errors))?;
    Ok((memory, config, providers))
}

fn numbers(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_digit()).filter(|s| !s.is_empty()).map(str::to_string).collect()
}

pub fn counting() -> Result<String, String> {
    let (memory, config, providers) = load_memory("table1.jsonl")?;
    let mut details = Vec::new();
    for (question, expected) in [("How many images are there in memory?", "329"), ("How many people are there?", "1")] {
        let body = ask(&memory, question, &config, &providers).map_err(|e| e.to_string())?;
        let got = numbers(&body.answer);
        ensure(got == [expected], || format!("{question:?} answered {:?}, expected the number {expected}", body.answer))?;
        details.push(format!("{question:?} -> {}", body.answer));
    }
    Ok(details.join("; "))
}

pub fn expansion() -> Result<String, String> {
    let (memory, config, _) = load_memory("expansion.jsonl")?;
    let question = "What does person_1 usually drink?";
    let graph = memory.graph();
    let find = |needle: &str| {
        graph
            .notes()
            .find(|n| !n.is_image() && n.plain_caption.contains(needle))
            .map(|n| n.id.to_string())
            .ok_or_else(|| format!("no background note containing {needle:?}"))
    };
    let target = find("green tea")?;
    let decoy = find("stamps")?;
    let links = graph.entities_of(&target);
    ensure(!links.is_empty() && links.iter().all(|e| e.entity_type == EntityType::Agent), || {
        format!("{target} should link only to Agent entities")
    })?;
    let chat = ScriptedChat::default();
    let agent = Agent::new(&memory, &chat, &StubEmbedder).with_config(config.agent_config());
    let hits: Vec<String> =
        agent.semantic_hits(question, EXPANSION_K).map_err(|e| e.to_string())?.into_iter().map(|n| n.note_id.to_string()).collect();
    ensure(!hits.contains(&target), || format!("background note {target} is already a semantic hit: {hits:?}"))?;
    let expanded: Vec<String> = agent
        .tool_graph_expansion(question, EXPANSION_K)
        .map_err(|e| e.to_string())?
        .context_notes
        .into_iter()
        .map(|n| n.note_id.to_string())
        .collect();
    ensure(expanded.contains(&target), || format!("expansion missed {target}: {expanded:?}"))?;
    ensure(!expanded.contains(&decoy), || format!("expansion reached the disconnected note {decoy}"))?;
    Ok(format!("semantic top-{EXPANSION_K} {hits:?} lacks {target}; expansion adds it and not {decoy}"))
}

pub fn windowing() -> Result<String, String> {
    let sampled = sample_frames(11, 5);
    ensure(sampled == [0, 5, 10], || format!("sample_frames(11, 5) = {sampled:?}"))?;
    let windows = make_windows(&[0, 5, 10, 15, 20], 3).map_err(|e| e.to_string())?;
    let frames: Vec<Vec<usize>> = windows.iter().map(|w| w.frame_indices.clone()).collect();
    ensure(frames == [vec![0, 5, 10], vec![10, 15, 20]], || format!("windows = {frames:?}"))?;
    let anchors: Vec<usize> = windows.iter().map(|w| w.anchor()).collect();
    ensure(anchors == [10, 20], || format!("anchors = {anchors:?}"))?;
    Ok("[0, 5, 10] sampled; windows [0, 5, 10] and [10, 15, 20]".into())
}

#[derive(Debug, PartialEq)]
enum Shape {
    Note { kind: String, caption: String, plain: String, files: Vec<String>, created: i64, seq: Option<u64>, chunks: Vec<(String, Vec<u64>)> },
    Entity { ty: String, first_seen: String, mentions: u64 },
}

fn shape(graph: &MemoryGraph) -> (BTreeMap<String, Shape>, Vec<(String, String, String)>) {
    let nodes = graph
        .nodes()
        .iter()
        .map(|node| {
            let s = match node {
                Node::Note(n) => Shape::Note {
                    kind: n.kind.name().into(),
                    caption: n.caption.clone(),
                    plain: n.plain_caption.clone(),
                    files: n.data_files.clone(),
                    created: n.created_at.0,
                    seq: n.sequence_index,
                    chunks: n
                        .chunks
                        .iter()
                        .map(|c| (c.text.clone(), c.vector.as_slice().iter().map(|x| x.to_bits()).collect()))
                        .collect(),
                },
                Node::Entity(e) => {
                    Shape::Entity { ty: e.entity_type.name().into(), first_seen: e.first_seen.to_string(), mentions: e.mention_count }
                }
            };
            (node.id().to_string(), s)
        })
        .collect();
    let mut edges: Vec<(String, String, String)> =
        graph.edge_triples().map(|(a, k, b)| (a.to_string(), k.name().to_string(), b.to_string())).collect();
    edges.sort();
    (nodes, edges)
}

fn same_graph(label: &str, a: &MemoryGraph, b: &MemoryGraph) -> Result<(), String> {
    let (na, ea) = shape(a);
    let (nb, eb) = shape(b);
    ensure(a.node_count() == na.len() && b.node_count() == nb.len(), || format!("{label}: duplicate node ids"))?;
    if let Some((id, _)) = na.iter().find(|(id, s)| nb.get(*id) != Some(s)) {
        return Err(format!("{label}: node {id} differs"));
    }
    ensure(na.len() == nb.len(), || format!("{label}: {} nodes vs {}", na.len(), nb.len()))?;
    ensure(ea == eb, || format!("{label}: edge sets differ ({} vs {})", ea.len(), eb.len()))
}

fn index_bits(memory: &Memory) -> Vec<(String, usize, Vec<u64>)> {
    let mut v: Vec<_> = memory
        .index()
        .entries()
        .iter()
        .map(|e| (e.note_id.to_string(), e.chunk_ordinal, e.vector.as_slice().iter().map(|x| x.to_bits()).collect()))
        .collect();
    v.sort();
    v
}

pub fn persistence() -> Result<String, String> {
    let (memory, _, _) = load_memory("table1.jsonl")?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;

    let path = dir.path().join("memory.json");
    save_snapshot(memory.graph(), &path).map_err(|e| e.to_string())?;
    let restored = Memory::from_graph(load_snapshot(&path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    same_graph("snapshot", memory.graph(), restored.graph())?;
    ensure(index_bits(&memory) == index_bits(&restored), || "snapshot: index vectors differ".into())?;

    let vault = dir.path().join("vault");
    let written = export_vault(memory.graph(), &vault).map_err(|e| e.to_string())?;
    let imported = import_vault(&vault, &StubEmbedder).map_err(|e| e.to_string())?;
    same_graph("vault", memory.graph(), imported.graph())?;
    ensure(index_bits(&memory) == index_bits(&imported), || "vault: index vectors differ".into())?;

    let stats = memory.graph().stats();
    Ok(format!(
        "{} nodes, {} edges, {} index entries preserved through snapshot and {written}-file vault",
        memory.graph().node_count(),
        stats.edge_counts_by_kind.has_previous + stats.edge_counts_by_kind.has_element,
        memory.index().len()
    ))
}

struct Run {
    code: Option<i32>,
    stdout: String,
    stderr: String,
}

fn groundmem(data_dir: &Path, args: &[&str]) -> Result<Run, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_groundmem"))
        .arg("--data-dir")
        .arg(data_dir)
        .args(args)
        .env_clear()
        .env("MEM_HERMETIC", "1")
        .output()
        .map_err(|e| format!("cannot run groundmem: {e}"))?;
    Ok(Run {
        code: out.status.code(),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    })
}

pub fn replay() -> Result<String, String> {
    let fixture = fixture_path("table1.jsonl");
    let fixture = fixture.to_str().ok_or("fixture path is not UTF-8")?;
    let question = "How many images are there in memory?";
    let mut transcripts = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let ingest = groundmem(dir.path(), &["ingest", fixture])?;
        ensure(ingest.code == Some(0), || format!("ingest exited {:?}: {}", ingest.code, ingest.stderr))?;
        let answer = groundmem(dir.path(), &["ask", "--json", question])?;
        ensure(answer.code == Some(0), || format!("ask exited {:?}: {}", answer.code, answer.stderr))?;
        let stats = groundmem(dir.path(), &["stats"])?;
        transcripts.push(format!("{}{}{}", ingest.stdout, answer.stdout, stats.stdout));
    }
    ensure(transcripts[0] == transcripts[1], || "two runs printed different output".into())?;
    ensure(transcripts[0].contains("329"), || format!("replay output lacks the image count: {}", transcripts[0]))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let live = groundmem(dir.path(), &["--provider-mode", "live", "ingest", fixture])?;
    ensure(live.code == Some(2), || format!("live mode under the hermetic guard exited {:?}", live.code))?;
    ensure(live.stderr.contains("hermetic"), || format!("guard message missing: {}", live.stderr))?;
    Ok(format!("{} identical bytes across two runs; live mode refused with exit 2", transcripts[0].len()))
}
