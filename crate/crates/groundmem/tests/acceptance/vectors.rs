use std::collections::BTreeMap;

use groundmem_core::embedding::IndexEntry;
use groundmem_core::{Embedding, NoteId, VectorIndex};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;

use crate::{ensure, VECTOR_ENTRIES, VECTOR_KS, VECTOR_QUERIES, VECTOR_SCORE_TOL};

const DIM: usize = 8;

fn vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, DIM).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn scan(entries: &[(String, Vec<f64>)], q: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for (id, v) in entries {
        let s = cos(v, q);
        let slot = best.entry(id).or_insert(f64::NEG_INFINITY);
        if s > *slot {
            *slot = s;
        }
    }
    let mut ranked: Vec<(String, f64)> = best.into_iter().map(|(id, s)| (id.to_string(), s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

pub fn check() -> Result<String, String> {
    let mut runner = crate::runner(0);
    let strategy = vector();
    let draw = |r: &mut TestRunner| strategy.new_tree(r).map(|t| t.current()).map_err(|e| e.to_string());

    let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
    let mut ordinals: BTreeMap<String, usize> = BTreeMap::new();
    let mut index = VectorIndex::new();
    for i in 0..VECTOR_ENTRIES {
        let note = format!("note-{:03}", (i * 37) % 140);
        let v = if i % 10 == 9 { entries[i - 5].1.clone() } else { draw(&mut runner)? };
        let ordinal = ordinals.entry(note.clone()).or_default();
        index
            .insert(IndexEntry {
                note_id: NoteId::new(note.clone()).map_err(|e| e.to_string())?,
                chunk_ordinal: *ordinal,
                text: String::new(),
                vector: Embedding::new(v.clone()),
            })
            .map_err(|e| e.to_string())?;
        *ordinal += 1;
        entries.push((note, v));
    }

    let mut queries = Vec::new();
    for i in 0..VECTOR_QUERIES {
        queries.push(if i % 5 == 0 { entries[i].1.clone() } else { draw(&mut runner)? });
    }
    for k in VECTOR_KS {
        for (qi, q) in queries.iter().enumerate() {
            let hits = index.search_top_k(&Embedding::new(q.clone()), k).map_err(|e| e.to_string())?;
            let expected = scan(&entries, q, k);
            let got_ids: Vec<&str> = hits.iter().map(|h| h.note_id.as_str()).collect();
            let want_ids: Vec<&str> = expected.iter().map(|(id, _)| id.as_str()).collect();
            ensure(got_ids == want_ids, || format!("k={k} query {qi}: {got_ids:?} != {want_ids:?}"))?;
            for (h, (_, s)) in hits.iter().zip(&expected) {
                ensure((h.score - s).abs() <= VECTOR_SCORE_TOL, || format!("k={k} query {qi}: score {} vs {s}", h.score))?;
            }
        }
    }
    Ok(format!("{VECTOR_ENTRIES} entries over {} notes, {VECTOR_QUERIES} queries for each k in {VECTOR_KS:?}", ordinals.len()))
}
