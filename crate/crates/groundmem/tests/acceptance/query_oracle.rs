//! Differential test of the query engine against a nested-loop interpreter
//! that enumerates every assignment of pattern nodes to graph nodes.

use std::collections::{BTreeMap, BTreeSet};

use groundmem_core::graph::Node;
use groundmem_core::providers::StubEmbedder;
use groundmem_core::query::{
    evaluate, parse_query, CmpOp, Direction, Literal, Operand, Query, QueryError, ReturnExpr, Value, MUTATION_KEYWORDS,
};
use groundmem_core::{EdgeKind, NoteKind, IngestItem, Memory, MemoryGraph, Timestamp};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;

use crate::{ensure, QUERIES_PER_GRAPH, QUERY_GRAPHS, QUERY_MAX_NODES};

const ENTITIES: [(&str, &str); 6] =
    [("person_1", "Agent"), ("person_2", "Agent"), ("cup_1", "Object"), ("sofa_1", "Object"), ("walk_1", "Action"), ("sit_1", "Action")];
const LABELS: [&str; 6] = ["Image", "MemoryNote", "Agent", "Object", "Action", "Thing"];
const KEYS: [&str; 11] =
    ["id", "kind", "caption", "raw_caption", "created_at", "sequence_index", "label", "type", "first_seen", "mention_count", "colour"];
const LITERALS: [&str; 9] = ["'image'", "'agent'", "'cup_1'", "'Agent'", "1", "2", "true", "null", "'person_1'"];
const INLINE: [&str; 6] = ["kind: 'image'", "label: 'cup_1'", "sequence_index: 1", "mention_count: 2", "type: 'Agent'", "colour: 'red'"];

struct Rng(TestRunner);

impl Rng {
    fn below(&mut self, n: usize) -> usize {
        (0..n).new_tree(&mut self.0).expect("range strategy").current()
    }

    fn chance(&mut self, percent: usize) -> bool {
        self.below(100) < percent
    }

    fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len())]
    }
}

fn random_graph(rng: &mut Rng) -> Result<Memory, String> {
    let mut memory = Memory::new();
    let images = 2 + rng.below(11);
    for i in 0..images {
        if rng.chance(15) {
            memory.begin_stream();
        }
        let mut caption = format!("frame {i}");
        for _ in 0..rng.below(4) {
            let (l, t) = rng.pick(&ENTITIES);
            caption.push_str(&format!(" with [{l}:{t}]"));
        }
        let item = if rng.chance(12) {
            let (l, t) = rng.pick(&ENTITIES);
            IngestItem::background(format!("Background: [{l}:{t}] {caption}"), Timestamp(i as i64))
        } else {
            IngestItem::image(caption, Timestamp(i as i64 * 3))
        };
        memory.ingest(item, &StubEmbedder).map_err(|e| e.to_string())?;
    }
    ensure(memory.graph().node_count() <= QUERY_MAX_NODES, || "random graph too large".into())?;
    Ok(memory)
}

fn random_query(rng: &mut Rng) -> String {
    let mut named: Vec<&str> = Vec::new();
    let mut slots = 0;
    let mut node = |rng: &mut Rng, named: &mut Vec<&'static str>| {
        let fresh = slots < 3;
        let var = if !fresh || rng.chance(70) {
            let pool: &[&str] = if fresh { &["a", "b", "c"] } else { named.as_slice() };
            let v = *rng.pick(if pool.is_empty() { &["a"] } else { pool });
            if !named.contains(&v) {
                named.push(v);
                slots += 1;
            }
            v.to_string()
        } else {
            slots += 1;
            String::new()
        };
        let mut s = format!("({var}");
        if rng.chance(55) {
            s.push(':');
            s.push_str(rng.pick(&LABELS));
        }
        if rng.chance(15) {
            s.push_str(&format!(" {{{}}}", rng.pick(&INLINE)));
        }
        s.push(')');
        s
    };
    let mut patterns = Vec::new();
    for _ in 0..1 + rng.below(2) {
        let mut p = node(rng, &mut named);
        for _ in 0..rng.below(3) {
            let kind = match rng.below(8) {
                0..=2 => String::new(),
                3..=4 => ":HAS_PREVIOUS".into(),
                5..=6 => ":HAS_ELEMENT".into(),
                _ => ":KNOWS".into(),
            };
            p.push_str(&match rng.below(3) {
                0 => format!("-[{kind}]->"),
                1 => format!("<-[{kind}]-"),
                _ => format!("-[{kind}]-"),
            });
            p.push_str(&node(rng, &mut named));
        }
        patterns.push(p);
    }
    if named.is_empty() {
        patterns[0] = format!("(a), {}", patterns[0]);
        named.push("a");
    }

    let operand = |rng: &mut Rng| match rng.below(5) {
        0 => rng.pick(&named).to_string(),
        1 => rng.pick(&LITERALS).to_string(),
        _ => format!("{}.{}", rng.pick(&named), rng.pick(&KEYS)),
    };
    let mut text = format!("MATCH {}", patterns.join(", "));
    let conditions: Vec<String> = (0..rng.below(3))
        .map(|_| format!("{} {} {}", operand(rng), if rng.chance(60) { "=" } else { "<>" }, operand(rng)))
        .collect();
    if !conditions.is_empty() {
        text.push_str(&format!(" WHERE {}", conditions.join(" AND ")));
    }
    let mut items = Vec::new();
    if rng.chance(35) {
        if rng.chance(60) {
            items.push(operand(rng));
        }
        items.push(match rng.below(3) {
            0 => "count(*)".to_string(),
            1 => format!("count({})", operand(rng)),
            _ => format!("count(DISTINCT {})", operand(rng)),
        });
    } else {
        for _ in 0..1 + rng.below(2) {
            items.push(operand(rng));
        }
    }
    let items: Vec<String> = items.iter().enumerate().map(|(i, e)| format!("{e} AS c{i}")).collect();
    text.push_str(&format!(" RETURN {}{}", if rng.chance(30) { "DISTINCT " } else { "" }, items.join(", ")));
    if rng.chance(50) {
        text.push_str(&format!(" ORDER BY c{} {}", rng.below(items.len()), if rng.chance(50) { "DESC" } else { "ASC" }));
    }
    if rng.chance(30) {
        text.push_str(&format!(" LIMIT {}", 1 + rng.below(5)));
    }
    text
}

fn prop(node: &Node, key: &str) -> Value {
    match node {
        Node::Note(n) => match key {
            "id" => Value::Str(n.id.as_str().into()),
            "kind" => Value::Str(match n.kind {
                NoteKind::Image => "image".into(),
                NoteKind::About(t) => t.name().to_lowercase(),
            }),
            "caption" => Value::Str(n.plain_caption.clone()),
            "raw_caption" => Value::Str(n.caption.clone()),
            "created_at" => Value::Int(n.created_at.0),
            "sequence_index" => n.sequence_index.map_or(Value::Null, |s| Value::Int(s as i64)),
            _ => Value::Null,
        },
        Node::Entity(e) => match key {
            "id" | "label" => Value::Str(e.label.clone()),
            "type" => Value::Str(e.entity_type.name().into()),
            "first_seen" => Value::Str(e.first_seen.as_str().into()),
            "mention_count" => Value::Int(e.mention_count as i64),
            _ => Value::Null,
        },
    }
}

fn literal(l: &Literal) -> Value {
    match l {
        Literal::String(s) => Value::Str(s.clone()),
        Literal::Integer(i) => Value::Int(*i),
        Literal::Boolean(b) => Value::Bool(*b),
        Literal::Null => Value::Null,
    }
}

fn label_ok(node: &Node, label: Option<&str>) -> bool {
    match (label, node) {
        (None, _) => true,
        (Some("MemoryNote"), Node::Note(_)) => true,
        (Some("Image"), Node::Note(n)) => n.is_image(),
        (Some(t), Node::Entity(e)) => e.entity_type.name() == t,
        _ => false,
    }
}

/// Rows of the reference interpreter, before the shared output ordering.
fn reference(q: &Query, g: &MemoryGraph) -> Vec<Vec<Value>> {
    let mut slot_of: BTreeMap<String, usize> = BTreeMap::new();
    let mut pattern_slots: Vec<Vec<usize>> = Vec::new();
    let mut slots = 0;
    for p in &q.patterns {
        let mut ids = Vec::new();
        for n in p.nodes() {
            let s = match &n.variable {
                Some(v) => *slot_of.entry(v.clone()).or_insert_with(|| {
                    slots += 1;
                    slots - 1
                }),
                None => {
                    slots += 1;
                    slots - 1
                }
            };
            ids.push(s);
        }
        pattern_slots.push(ids);
    }

    let n = g.node_count();
    let edges = g.edges();
    let mut bindings: Vec<Vec<usize>> = Vec::new();
    let mut assign = vec![0usize; slots];
    let total = n.checked_pow(slots as u32).expect("small graphs");
    for code in 0..total {
        let mut c = code;
        for a in assign.iter_mut() {
            *a = c % n;
            c /= n;
        }
        let node_ok = q.patterns.iter().zip(&pattern_slots).all(|(p, ids)| {
            p.nodes().zip(ids).all(|(np, &s)| {
                let node = g.node(assign[s]);
                label_ok(node, np.label.as_deref()) && np.properties.iter().all(|(k, l)| prop(node, k).equals(&literal(l)))
            })
        });
        if !node_ok {
            continue;
        }
        let mut multiplicity = 1usize;
        for (p, ids) in q.patterns.iter().zip(&pattern_slots) {
            let candidates: Vec<Vec<usize>> = p
                .steps
                .iter()
                .enumerate()
                .map(|(i, (rel, _))| {
                    let (a, b) = (assign[ids[i]], assign[ids[i + 1]]);
                    (0..edges.len())
                        .filter(|&e| {
                            let edge = &edges[e];
                            let kind_ok = rel.kind.as_deref().is_none_or(|k| EdgeKind::from_name(k) == Some(edge.kind));
                            let dir_ok = match rel.direction {
                                Direction::Right => edge.source == a && edge.target == b,
                                Direction::Left => edge.source == b && edge.target == a,
                                Direction::Either => {
                                    (edge.source == a && edge.target == b) || (edge.source == b && edge.target == a)
                                }
                            };
                            kind_ok && dir_ok
                        })
                        .collect()
                })
                .collect();
            multiplicity *= count_distinct_choices(&candidates, &mut Vec::new());
        }
        for _ in 0..multiplicity {
            bindings.push(assign.clone());
        }
    }

    let value = |b: &[usize], o: &Operand| match o {
        Operand::Literal(l) => literal(l),
        Operand::Variable(v) => Value::Str(g.node(b[slot_of[v]]).id().into()),
        Operand::Property { variable, key } => prop(g.node(b[slot_of[variable]]), key),
    };
    bindings.retain(|b| {
        q.conditions.iter().all(|c| {
            let (l, r) = (value(b, &c.left), value(b, &c.right));
            match c.op {
                CmpOp::Eq => !l.is_null() && !r.is_null() && l == r,
                CmpOp::Ne => !l.is_null() && !r.is_null() && l != r,
            }
        })
    });

    let mut rows: Vec<Vec<Value>> = if q.returns.iter().any(|r| matches!(r.expr, ReturnExpr::Count { .. })) {
        let mut groups: BTreeMap<Vec<Value>, Vec<&Vec<usize>>> = BTreeMap::new();
        for b in &bindings {
            let key = q
                .returns
                .iter()
                .filter_map(|r| match &r.expr {
                    ReturnExpr::Operand(o) => Some(value(b, o)),
                    ReturnExpr::Count { .. } => None,
                })
                .collect();
            groups.entry(key).or_default().push(b);
        }
        let has_keys = q.returns.iter().any(|r| matches!(r.expr, ReturnExpr::Operand(_)));
        if groups.is_empty() && !has_keys {
            groups.insert(Vec::new(), Vec::new());
        }
        groups
            .into_iter()
            .map(|(key, members)| {
                let mut key = key.into_iter();
                q.returns
                    .iter()
                    .map(|r| match &r.expr {
                        ReturnExpr::Operand(_) => key.next().expect("one key per operand"),
                        ReturnExpr::Count { arg: None, .. } => Value::Int(members.len() as i64),
                        ReturnExpr::Count { distinct, arg: Some(o) } => {
                            let vals: Vec<Value> = members.iter().map(|b| value(b, o)).filter(|v| !v.is_null()).collect();
                            let n = if *distinct { vals.iter().collect::<BTreeSet<_>>().len() } else { vals.len() };
                            Value::Int(n as i64)
                        }
                    })
                    .collect()
            })
            .collect()
    } else {
        bindings
            .iter()
            .map(|b| {
                q.returns
                    .iter()
                    .map(|r| match &r.expr {
                        ReturnExpr::Operand(o) => value(b, o),
                        ReturnExpr::Count { .. } => unreachable!(),
                    })
                    .collect()
            })
            .collect()
    };
    if q.distinct {
        let set: BTreeSet<Vec<Value>> = rows.into_iter().collect();
        rows = set.into_iter().collect();
    }
    rows.sort_by(|a, b| {
        let primary = match q.order_by {
            Some(o) if o.descending => b[o.column].cmp(&a[o.column]),
            Some(o) => a[o.column].cmp(&b[o.column]),
            None => std::cmp::Ordering::Equal,
        };
        primary.then_with(|| a.cmp(b))
    });
    if let Some(limit) = q.limit {
        rows.truncate(limit as usize);
    }
    rows
}

/// Ways to pick one edge per step with no edge used twice.
fn count_distinct_choices(candidates: &[Vec<usize>], used: &mut Vec<usize>) -> usize {
    let Some((first, rest)) = candidates.split_first() else {
        return 1;
    };
    let mut total = 0;
    for &e in first {
        if !used.contains(&e) {
            used.push(e);
            total += count_distinct_choices(rest, used);
            used.pop();
        }
    }
    total
}

pub fn check() -> Result<String, String> {
    let mut rng = Rng(crate::runner(0));
    let mut queries = 0;
    let mut nonempty = 0;
    for graph_no in 0..QUERY_GRAPHS {
        let memory = random_graph(&mut rng)?;
        let graph = memory.graph();
        for _ in 0..QUERIES_PER_GRAPH {
            let text = random_query(&mut rng);
            let q = parse_query(&text).map_err(|e| format!("generated query {text:?} did not parse: {e}"))?;
            let before = graph.fingerprint();
            let got = evaluate(&q, graph).map_err(|e| format!("{text:?}: {e}"))?;
            ensure(graph.fingerprint() == before, || format!("{text:?} modified the graph"))?;
            let want = reference(&q, graph);
            ensure(got.table.rows == want, || {
                format!("graph {graph_no}, {text:?}:\n engine    {:?}\n reference {want:?}", got.table.rows)
            })?;
            queries += 1;
            nonempty += usize::from(!want.is_empty());
        }
    }

    for keyword in MUTATION_KEYWORDS {
        let text = format!("MATCH (a) {keyword} a RETURN a");
        match parse_query(&text) {
            Err(QueryError::ForbiddenClause { .. }) => {}
            other => return Err(format!("{text:?} was not rejected as a mutation: {other:?}")),
        }
    }
    for keyword in ["CREATE", "DELETE", "DETACH", "SET", "MERGE", "REMOVE"] {
        ensure(MUTATION_KEYWORDS.contains(&keyword), || format!("{keyword} is not in the rejected keyword list"))?;
    }
    Ok(format!(
        "{queries} random queries over {QUERY_GRAPHS} graphs agree ({nonempty} with rows); {} mutation keywords rejected",
        MUTATION_KEYWORDS.len()
    ))
}
