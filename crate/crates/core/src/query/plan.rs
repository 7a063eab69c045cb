use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use super::ast::*;
use super::eval::{literal_value, node_property, KNOWN_PROPERTIES};
use crate::graph::{EdgeKind, EntityType, MemoryGraph, Node};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LabelTest {
    Any,
    Image,
    MemoryNote,
    Entity(EntityType),
    Unknown,
}

impl LabelTest {
    fn resolve(label: Option<&str>) -> Self {
        match label {
            None => LabelTest::Any,
            Some("Image") => LabelTest::Image,
            Some("MemoryNote") => LabelTest::MemoryNote,
            Some(other) => EntityType::from_name(other).map_or(LabelTest::Unknown, LabelTest::Entity),
        }
    }

    fn matches(self, node: &Node) -> bool {
        match self {
            LabelTest::Any => true,
            LabelTest::Image => node.is_image(),
            LabelTest::MemoryNote => node.as_note().is_some(),
            LabelTest::Entity(t) => node.as_entity().is_some_and(|e| e.entity_type == t),
            LabelTest::Unknown => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum KindTest {
    Any,
    Kind(EdgeKind),
    Unknown,
}

impl KindTest {
    fn resolve(kind: Option<&str>) -> Self {
        match kind {
            None => KindTest::Any,
            Some(k) => EdgeKind::from_name(k).map_or(KindTest::Unknown, KindTest::Kind),
        }
    }

    pub(crate) fn matches(self, kind: EdgeKind) -> bool {
        match self {
            KindTest::Any => true,
            KindTest::Kind(k) => k == kind,
            KindTest::Unknown => false,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NodeTest<'q> {
    pub label: LabelTest,
    pub pattern: &'q NodePattern,
}

impl NodeTest<'_> {
    pub(crate) fn matches(&self, node: &Node) -> bool {
        self.label.matches(node)
            && self.pattern.properties.iter().all(|(k, lit)| node_property(node, k).equals(&literal_value(lit)))
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Step<'q> {
    Scan { slot: usize, test: NodeTest<'q> },
    Check { slot: usize, test: NodeTest<'q> },
    Expand { pattern: usize, from: usize, to: usize, kind: KindTest, direction: Direction, to_bound: bool, test: NodeTest<'q> },
    Filter { conditions: Vec<&'q Comparison> },
}

#[derive(Debug, Clone)]
pub(crate) struct Plan<'q> {
    pub slot_names: Vec<String>,
    pub steps: Vec<Step<'q>>,
    pub estimates: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

fn reverse(d: Direction) -> Direction {
    match d {
        Direction::Right => Direction::Left,
        Direction::Left => Direction::Right,
        Direction::Either => Direction::Either,
    }
}

fn operand_vars<'a>(o: &'a Operand, out: &mut Vec<&'a str>) {
    if let Operand::Property { variable, .. } | Operand::Variable(variable) = o {
        out.push(variable);
    }
}

fn scan_estimate(test: &NodeTest<'_>, graph: Option<&MemoryGraph>) -> f64 {
    match graph {
        Some(g) => g.nodes().iter().filter(|n| test.matches(n)).count() as f64,
        None => {
            if test.label == LabelTest::Unknown {
                0.0
            } else if test.pattern.properties.iter().any(|(k, _)| k == "id" || k == "label") {
                1.0
            } else if test.label != LabelTest::Any || !test.pattern.properties.is_empty() {
                100.0
            } else {
                1000.0
            }
        }
    }
}

fn fanout(kind: KindTest, direction: Direction, graph: &MemoryGraph) -> f64 {
    let edges = graph.edges().iter().filter(|e| kind.matches(e.kind)).count() as f64;
    let mult = if direction == Direction::Either { 2.0 } else { 1.0 };
    edges * mult / graph.node_count().max(1) as f64
}

pub(crate) fn build<'q>(q: &'q Query, graph: Option<&MemoryGraph>) -> Plan<'q> {
    let mut slot_names: Vec<String> = Vec::new();
    let mut pattern_slots: Vec<Vec<usize>> = Vec::new();
    let mut anon = 0;
    for p in &q.patterns {
        let mut slots = Vec::new();
        for n in p.nodes() {
            let slot = match &n.variable {
                Some(v) => match slot_names.iter().position(|s| s == v) {
                    Some(i) => i,
                    None => {
                        slot_names.push(v.clone());
                        slot_names.len() - 1
                    }
                },
                None => {
                    anon += 1;
                    slot_names.push(format!("anon#{anon}"));
                    slot_names.len() - 1
                }
            };
            slots.push(slot);
        }
        pattern_slots.push(slots);
    }

    let mut warnings = Vec::new();
    let mut warn = |w: String| {
        if !warnings.contains(&w) {
            warnings.push(w);
        }
    };
    for p in &q.patterns {
        for n in p.nodes() {
            if let Some(l) = &n.label {
                if LabelTest::resolve(Some(l)) == LabelTest::Unknown {
                    warn(format!("unknown label `{l}` matches no nodes"));
                }
            }
            for (k, _) in &n.properties {
                if !KNOWN_PROPERTIES.contains(&k.as_str()) {
                    warn(format!("unknown property `{k}` is always null"));
                }
            }
        }
        for (r, _) in &p.steps {
            if let Some(k) = &r.kind {
                if KindTest::resolve(Some(k)) == KindTest::Unknown {
                    warn(format!("unknown relationship kind `{k}` matches no edges"));
                }
            }
        }
    }
    let mut props: Vec<&str> = Vec::new();
    for c in &q.conditions {
        for o in [&c.left, &c.right] {
            if let Operand::Property { key, .. } = o {
                props.push(key);
            }
        }
    }
    for r in &q.returns {
        if let ReturnExpr::Operand(Operand::Property { key, .. }) | ReturnExpr::Count { arg: Some(Operand::Property { key, .. }), .. } = &r.expr {
            props.push(key);
        }
    }
    for k in props {
        if !KNOWN_PROPERTIES.contains(&k) {
            warn(format!("unknown property `{k}` is always null"));
        }
    }

    let tests: Vec<Vec<NodeTest<'q>>> = q
        .patterns
        .iter()
        .map(|p| p.nodes().map(|n| NodeTest { label: LabelTest::resolve(n.label.as_deref()), pattern: n }).collect())
        .collect();

    let mut bound: BTreeSet<usize> = BTreeSet::new();
    let mut remaining: Vec<usize> = (0..q.patterns.len()).collect();
    let mut steps: Vec<Step<'q>> = Vec::new();
    let mut estimates: Vec<Option<f64>> = Vec::new();
    let mut pending: Vec<&'q Comparison> = q.conditions.iter().collect();
    let mut rows: f64 = 1.0;

    let mut flush = |bound: &BTreeSet<usize>, steps: &mut Vec<Step<'q>>, estimates: &mut Vec<Option<f64>>, rows: f64| {
        let mut ready = Vec::new();
        pending.retain(|c| {
            let mut vars = Vec::new();
            operand_vars(&c.left, &mut vars);
            operand_vars(&c.right, &mut vars);
            let ok = vars.iter().all(|v| slot_names.iter().position(|s| s == v).is_some_and(|i| bound.contains(&i)));
            if ok {
                ready.push(*c);
            }
            !ok
        });
        if !ready.is_empty() {
            steps.push(Step::Filter { conditions: ready });
            estimates.push(graph.map(|_| rows));
        }
    };

    while !remaining.is_empty() {
        let mut best: Option<(bool, f64, usize, usize)> = None;
        for (ri, &pi) in remaining.iter().enumerate() {
            let slots = &pattern_slots[pi];
            let (connected, anchor, est) = match slots.iter().position(|s| bound.contains(s)) {
                Some(pos) => (true, pos, 0.0),
                None => {
                    let mut a = 0;
                    let mut e = f64::INFINITY;
                    for (i, t) in tests[pi].iter().enumerate() {
                        let est = scan_estimate(t, graph);
                        if est < e {
                            e = est;
                            a = i;
                        }
                    }
                    (false, a, e)
                }
            };
            let better = match best {
                None => true,
                Some((bc, be, _, _)) => (connected && !bc) || (connected == bc && est < be),
            };
            if better {
                best = Some((connected, est, ri, anchor));
            }
        }
        let (_, _, ri, anchor) = best.expect("remaining is non-empty");
        let pi = remaining.remove(ri);
        let slots = &pattern_slots[pi];
        let pattern = &q.patterns[pi];
        let test = tests[pi][anchor].clone();

        if bound.contains(&slots[anchor]) {
            steps.push(Step::Check { slot: slots[anchor], test });
        } else {
            let est = scan_estimate(&test, graph);
            rows = if bound.is_empty() { est } else { rows * est };
            steps.push(Step::Scan { slot: slots[anchor], test });
            bound.insert(slots[anchor]);
        }
        estimates.push(graph.map(|_| rows));
        flush(&bound, &mut steps, &mut estimates, rows);

        let mut hops: Vec<(usize, usize, Direction, Option<&str>)> = Vec::new();
        for i in anchor..pattern.steps.len() {
            let (rel, _) = &pattern.steps[i];
            hops.push((i, i + 1, rel.direction, rel.kind.as_deref()));
        }
        for i in (1..=anchor).rev() {
            let (rel, _) = &pattern.steps[i - 1];
            hops.push((i, i - 1, reverse(rel.direction), rel.kind.as_deref()));
        }
        for (from, to, direction, kind) in hops {
            let kind = KindTest::resolve(kind);
            let to_bound = bound.contains(&slots[to]);
            if let Some(g) = graph {
                rows *= fanout(kind, direction, g);
                if to_bound {
                    rows /= g.node_count().max(1) as f64;
                }
            }
            steps.push(Step::Expand {
                pattern: pi,
                from: slots[from],
                to: slots[to],
                kind,
                direction,
                to_bound,
                test: tests[pi][to].clone(),
            });
            bound.insert(slots[to]);
            estimates.push(graph.map(|_| rows));
            flush(&bound, &mut steps, &mut estimates, rows);
        }
    }

    Plan { slot_names, steps, estimates, warnings }
}

fn named(pattern: &NodePattern, name: &str) -> String {
    let mut n = pattern.clone();
    n.variable = Some(name.to_string());
    n.to_string()
}

/// Human-readable plan: the match steps in join order with estimated row
/// counts (when a graph is given), then the projection stages.
pub fn explain(q: &Query, graph: Option<&MemoryGraph>) -> String {
    let plan = build(q, graph);
    let mut out = String::new();
    let _ = writeln!(out, "Match ({} pattern(s), join order):", q.patterns.len());
    let mut n = 0;
    for (step, est) in plan.steps.iter().zip(&plan.estimates) {
        n += 1;
        let text = match step {
            Step::Scan { slot, test } => format!("Scan {}", named(test.pattern, &plan.slot_names[*slot])),
            Step::Check { slot, test } => format!("Check {}", named(test.pattern, &plan.slot_names[*slot])),
            Step::Expand { from, to, kind, direction, test, to_bound, .. } => {
                let kind = match kind {
                    KindTest::Any => String::new(),
                    KindTest::Kind(k) => format!(":{}", k.name()),
                    KindTest::Unknown => String::from(":?"),
                };
                let rel = RelPattern { direction: *direction, kind: None }.to_string().replace("[]", &format!("[{kind}]"));
                format!(
                    "{} ({}){rel}{}",
                    if *to_bound { "Join" } else { "Expand" },
                    plan.slot_names[*from],
                    named(test.pattern, &plan.slot_names[*to])
                )
            }
            Step::Filter { conditions } => {
                let parts: Vec<String> = conditions.iter().map(|c| c.to_string()).collect();
                format!("Filter {}", parts.join(" AND "))
            }
        };
        let _ = match est {
            Some(e) => writeln!(out, "  {n}. {text}  [est. {} rows]", libm::ceil(*e) as u64),
            None => writeln!(out, "  {n}. {text}"),
        };
    }
    let _ = writeln!(out, "Then:");
    let items: Vec<String> = q.returns.iter().map(|r| r.expr.to_string()).collect();
    if q.is_aggregate() {
        let keys: Vec<&String> =
            q.returns.iter().zip(&items).filter(|(r, _)| !r.expr.is_aggregate()).map(|(_, s)| s).collect();
        if keys.is_empty() {
            let _ = writeln!(out, "  Aggregate {}", items.join(", "));
        } else {
            let keys: Vec<&str> = keys.iter().map(|s| s.as_str()).collect();
            let _ = writeln!(out, "  Aggregate {} grouped by {}", items.join(", "), keys.join(", "));
        }
    } else {
        let _ = writeln!(out, "  Project {}", items.join(", "));
    }
    if q.distinct {
        let _ = writeln!(out, "  Distinct");
    }
    match q.order_by {
        Some(o) => {
            let dir = if o.descending { "DESC" } else { "ASC" };
            let _ = writeln!(out, "  Sort by {} {dir}", q.returns[o.column].column_name());
        }
        None => {
            let _ = writeln!(out, "  Sort by all columns ASC");
        }
    }
    if let Some(l) = q.limit {
        let _ = writeln!(out, "  Limit {l}");
    }
    for w in &plan.warnings {
        let _ = writeln!(out, "Warning: {w}");
    }
    out
}
