use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use super::ast::*;
use super::plan::{self, Plan, Step};
use super::{parser, QueryError};
use crate::graph::{MemoryGraph, Node};

/// Properties defined on at least one node type. Anything else reads as null.
pub const KNOWN_PROPERTIES: [&str; 10] = [
    "id",
    "kind",
    "caption",
    "raw_caption",
    "created_at",
    "sequence_index",
    "label",
    "type",
    "first_seen",
    "mention_count",
];

/// A scalar result cell. Ordering is `Null < Bool < Int < Str`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(untagged))]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Str(String),
}

impl Value {
    /// Equality as used by `=`: false whenever either side is null.
    pub fn equals(&self, other: &Value) -> bool {
        !self.is_null() && !other.is_null() && self == other
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("null"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

pub fn literal_value(lit: &Literal) -> Value {
    match lit {
        Literal::String(s) => Value::Str(s.clone()),
        Literal::Integer(i) => Value::Int(*i),
        Literal::Boolean(b) => Value::Bool(*b),
        Literal::Null => Value::Null,
    }
}

pub fn node_property(node: &Node, key: &str) -> Value {
    match node {
        Node::Note(n) => match key {
            "id" => Value::Str(n.id.to_string()),
            "kind" => Value::Str(n.kind.name().into()),
            "caption" => Value::Str(n.plain_caption.clone()),
            "raw_caption" => Value::Str(n.caption.clone()),
            "created_at" => Value::Int(n.created_at.0),
            "sequence_index" => n.sequence_index.map_or(Value::Null, |i| Value::Int(i as i64)),
            _ => Value::Null,
        },
        Node::Entity(e) => match key {
            "id" | "label" => Value::Str(e.label.clone()),
            "type" => Value::Str(e.entity_type.name().into()),
            "first_seen" => Value::Str(e.first_seen.to_string()),
            "mention_count" => Value::Int(e.mention_count as i64),
            _ => Value::Null,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl ResultTable {
    /// The only cell of a one-by-one table.
    pub fn single_value(&self) -> Option<&Value> {
        match (self.columns.len(), self.rows.as_slice()) {
            (1, [row]) => row.first(),
            _ => None,
        }
    }
}

impl fmt::Display for ResultTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "columns: {}", self.columns.join(" | "))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(ToString::to_string).collect();
            writeln!(f, "row: {}", cells.join(" | "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Evaluation {
    pub table: ResultTable,
    pub warnings: Vec<String>,
}

const UNBOUND: usize = usize::MAX;

struct Exec<'a, 'q> {
    graph: &'a MemoryGraph,
    plan: &'a Plan<'q>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
}

fn slot_of(plan: &Plan<'_>, name: &str) -> usize {
    plan.slot_names.iter().position(|s| s == name).expect("validated variables are bound")
}

fn operand_value(graph: &MemoryGraph, plan: &Plan<'_>, o: &Operand, binding: &[usize]) -> Value {
    match o {
        Operand::Variable(v) => Value::Str(graph.node(binding[slot_of(plan, v)]).id().to_string()),
        Operand::Property { variable, key } => node_property(graph.node(binding[slot_of(plan, variable)]), key),
        Operand::Literal(l) => literal_value(l),
    }
}

fn holds(graph: &MemoryGraph, plan: &Plan<'_>, c: &Comparison, binding: &[usize]) -> bool {
    let l = operand_value(graph, plan, &c.left, binding);
    let r = operand_value(graph, plan, &c.right, binding);
    match c.op {
        CmpOp::Eq => l.equals(&r),
        CmpOp::Ne => !l.is_null() && !r.is_null() && l != r,
    }
}

impl Exec<'_, '_> {
    fn run(&self, step: usize, binding: &mut Vec<usize>, used: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<usize>>) {
        let Some(s) = self.plan.steps.get(step) else {
            out.push(binding.clone());
            return;
        };
        match s {
            Step::Scan { slot, test } => {
                for (i, node) in self.graph.nodes().iter().enumerate() {
                    if test.matches(node) {
                        binding[*slot] = i;
                        self.run(step + 1, binding, used, out);
                    }
                }
                binding[*slot] = UNBOUND;
            }
            Step::Check { slot, test } => {
                if test.matches(self.graph.node(binding[*slot])) {
                    self.run(step + 1, binding, used, out);
                }
            }
            Step::Filter { conditions } => {
                if conditions.iter().all(|c| holds(self.graph, self.plan, c, binding)) {
                    self.run(step + 1, binding, used, out);
                }
            }
            Step::Expand { pattern, from, to, kind, direction, to_bound, test } => {
                let u = binding[*from];
                let mut candidates: Vec<(usize, usize)> = Vec::new();
                if matches!(direction, Direction::Right | Direction::Either) {
                    for &e in &self.out_adj[u] {
                        candidates.push((e, self.graph.edges()[e].target));
                    }
                }
                if matches!(direction, Direction::Left | Direction::Either) {
                    for &e in &self.in_adj[u] {
                        let edge = self.graph.edges()[e];
                        if *direction == Direction::Either && edge.source == edge.target {
                            continue;
                        }
                        candidates.push((e, edge.source));
                    }
                }
                for (e, v) in candidates {
                    if !kind.matches(self.graph.edges()[e].kind) || used.contains(&(*pattern, e)) {
                        continue;
                    }
                    if *to_bound && binding[*to] != v {
                        continue;
                    }
                    if !test.matches(self.graph.node(v)) {
                        continue;
                    }
                    let previous = binding[*to];
                    binding[*to] = v;
                    used.push((*pattern, e));
                    self.run(step + 1, binding, used, out);
                    used.pop();
                    binding[*to] = previous;
                }
            }
        }
    }
}

enum Acc {
    Rows(i64),
    Distinct(BTreeSet<Value>),
}

/// Runs a query against the graph. Unknown labels, relationship kinds, and
/// properties are not errors; they are reported in `warnings`.
pub fn evaluate(q: &Query, graph: &MemoryGraph) -> Result<Evaluation, QueryError> {
    parser::validate(q)?;
    let plan = plan::build(q, Some(graph));

    let mut out_adj = vec![Vec::new(); graph.node_count()];
    let mut in_adj = vec![Vec::new(); graph.node_count()];
    for (i, e) in graph.edges().iter().enumerate() {
        out_adj[e.source].push(i);
        in_adj[e.target].push(i);
    }
    let exec = Exec { graph, plan: &plan, out_adj, in_adj };
    let mut bindings = Vec::new();
    if !graph.is_empty() {
        exec.run(0, &mut vec![UNBOUND; plan.slot_names.len()], &mut Vec::new(), &mut bindings);
    }

    let columns: Vec<String> = q.returns.iter().map(ReturnItem::column_name).collect();
    let value = |o: &Operand, b: &[usize]| operand_value(graph, &plan, o, b);
    let mut rows: Vec<Vec<Value>> = if q.is_aggregate() {
        let key_cols: Vec<usize> = (0..q.returns.len()).filter(|&i| !q.returns[i].expr.is_aggregate()).collect();
        let mut groups: BTreeMap<Vec<Value>, Vec<Acc>> = BTreeMap::new();
        let fresh = || -> Vec<Acc> {
            q.returns
                .iter()
                .filter_map(|r| match &r.expr {
                    ReturnExpr::Count { distinct: true, .. } => Some(Acc::Distinct(BTreeSet::new())),
                    ReturnExpr::Count { .. } => Some(Acc::Rows(0)),
                    ReturnExpr::Operand(_) => None,
                })
                .collect()
        };
        if key_cols.is_empty() {
            groups.insert(Vec::new(), fresh());
        }
        for b in &bindings {
            let key: Vec<Value> = key_cols
                .iter()
                .map(|&i| match &q.returns[i].expr {
                    ReturnExpr::Operand(o) => value(o, b),
                    ReturnExpr::Count { .. } => unreachable!("key columns are not aggregates"),
                })
                .collect();
            let accs = groups.entry(key).or_insert_with(fresh);
            let mut ai = 0;
            for r in &q.returns {
                let ReturnExpr::Count { arg, .. } = &r.expr else { continue };
                let v = arg.as_ref().map(|o| value(o, b));
                match &mut accs[ai] {
                    Acc::Rows(n) => {
                        if !v.as_ref().is_some_and(Value::is_null) {
                            *n += 1;
                        }
                    }
                    Acc::Distinct(set) => {
                        if let Some(v) = v.filter(|v| !v.is_null()) {
                            set.insert(v);
                        }
                    }
                }
                ai += 1;
            }
        }
        groups
            .into_iter()
            .map(|(key, accs)| {
                let mut keys = key.into_iter();
                let mut accs = accs.into_iter();
                q.returns
                    .iter()
                    .map(|r| {
                        if r.expr.is_aggregate() {
                            match accs.next().expect("one accumulator per aggregate") {
                                Acc::Rows(n) => Value::Int(n),
                                Acc::Distinct(s) => Value::Int(s.len() as i64),
                            }
                        } else {
                            keys.next().expect("one key per plain column")
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
                        ReturnExpr::Operand(o) => value(o, b),
                        ReturnExpr::Count { .. } => unreachable!("no aggregates in this branch"),
                    })
                    .collect()
            })
            .collect()
    };

    if q.distinct {
        rows.sort();
        rows.dedup();
    }
    sort_rows(&mut rows, q.order_by);
    if let Some(limit) = q.limit {
        rows.truncate(usize::try_from(limit).unwrap_or(usize::MAX));
    }
    Ok(Evaluation { table: ResultTable { columns, rows }, warnings: plan.warnings })
}

/// Sorts by the ORDER BY column if any, then by whole rows ascending.
pub fn sort_rows(rows: &mut [Vec<Value>], order_by: Option<OrderBy>) {
    rows.sort_by(|a, b| {
        let primary = match order_by {
            Some(o) if o.descending => b[o.column].cmp(&a[o.column]),
            Some(o) => a[o.column].cmp(&b[o.column]),
            None => Ordering::Equal,
        };
        primary.then_with(|| a.cmp(b))
    });
}
