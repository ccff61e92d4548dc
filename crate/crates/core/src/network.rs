//! Cell transmission model networks: cells, connections, and the set of
//! signalized merging cells.
//!
//! Cells are identified by stable string ids. Every collection held by a
//! [`Network`] is kept in canonical (lexicographic) order so that serialized
//! output is reproducible and tie-breaking elsewhere is deterministic.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type CellId = String;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Ordinary,
    Diverging,
    Merging,
    Source,
    Sink,
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CellKind::Ordinary => "ordinary",
            CellKind::Diverging => "diverging",
            CellKind::Merging => "merging",
            CellKind::Source => "source",
            CellKind::Sink => "sink",
        };
        f.write_str(s)
    }
}

/// A flow or occupancy limit. Unbounded limits never become LP rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Capacity {
    Finite(f64),
    Unbounded,
}

impl Capacity {
    pub fn finite(self) -> Option<f64> {
        match self {
            Capacity::Finite(v) => Some(v),
            Capacity::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, Capacity::Unbounded)
    }
}

impl Serialize for Capacity {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Capacity::Finite(v) => serializer.serialize_f64(*v),
            Capacity::Unbounded => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Capacity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct CapacityVisitor;

        impl<'de> Visitor<'de> for CapacityVisitor {
            type Value = Capacity;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a nonnegative number or the string \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Capacity, E> {
                Ok(Capacity::Finite(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Capacity, E> {
                Ok(Capacity::Finite(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Capacity, E> {
                Ok(Capacity::Finite(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Capacity, E> {
                if v == "inf" {
                    Ok(Capacity::Unbounded)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        deserializer.deserialize_any(CapacityVisitor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: CellId,
    pub kind: CellKind,
    #[serde(rename = "Q")]
    pub q: Capacity,
    #[serde(rename = "N")]
    pub n: Capacity,
    pub delta: f64,
    /// Vehicles entering at interval `t`; zero past the end of the list.
    #[serde(default)]
    pub demand: Vec<f64>,
}

impl Cell {
    pub fn new(id: impl Into<CellId>, kind: CellKind, q: Capacity, n: Capacity, delta: f64) -> Self {
        Cell {
            id: id.into(),
            kind,
            q,
            n,
            delta,
            demand: Vec::new(),
        }
    }

    pub fn with_demand(mut self, demand: Vec<f64>) -> Self {
        self.demand = demand;
        self
    }

    pub fn demand_at(&self, t: usize) -> f64 {
        self.demand.get(t).copied().unwrap_or(0.0)
    }

    pub fn total_demand(&self) -> f64 {
        self.demand.iter().sum()
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    cells: Vec<Cell>,
    edges: Vec<(CellId, CellId)>,
    #[serde(default)]
    signalized: Vec<CellId>,
}

/// A CTM network. Construction never fails so that malformed input can be
/// reported by [`Network::validate`]; dangling edges are kept in the edge list
/// but excluded from the adjacency.
#[derive(Clone, Debug)]
pub struct Network {
    cells: Vec<Cell>,
    edges: Vec<(CellId, CellId)>,
    signalized: Vec<CellId>,
    index: HashMap<CellId, usize>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.cells == other.cells && self.edges == other.edges && self.signalized == other.signalized
    }
}

impl Network {
    pub fn new(mut cells: Vec<Cell>, mut edges: Vec<(CellId, CellId)>, mut signalized: Vec<CellId>) -> Self {
        cells.sort_by(|a, b| a.id.cmp(&b.id));
        edges.sort();
        edges.dedup();
        signalized.sort();
        signalized.dedup();

        let mut index = HashMap::with_capacity(cells.len());
        for (i, c) in cells.iter().enumerate() {
            index.entry(c.id.clone()).or_insert(i);
        }
        let mut preds = vec![Vec::new(); cells.len()];
        let mut succs = vec![Vec::new(); cells.len()];
        for (from, to) in &edges {
            if let (Some(&a), Some(&b)) = (index.get(from), index.get(to)) {
                succs[a].push(b);
                preds[b].push(a);
            }
        }
        Network {
            cells,
            edges,
            signalized,
            index,
            preds,
            succs,
        }
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn edges(&self) -> &[(CellId, CellId)] {
        &self.edges
    }

    /// Signalized merging cells, sorted.
    pub fn signalized(&self) -> &[CellId] {
        &self.signalized
    }

    pub fn cell(&self, id: &str) -> Option<&Cell> {
        self.index.get(id).map(|&i| &self.cells[i])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Predecessor indices of cell `i` (in canonical order).
    pub fn preds_of(&self, i: usize) -> &[usize] {
        &self.preds[i]
    }

    pub fn succs_of(&self, i: usize) -> &[usize] {
        &self.succs[i]
    }

    /// Predecessor ids of the cell `id`, sorted. Empty for unknown ids.
    pub fn predecessors(&self, id: &str) -> Vec<&str> {
        match self.index.get(id) {
            Some(&i) => self.preds[i].iter().map(|&k| self.cells[k].id.as_str()).collect(),
            None => Vec::new(),
        }
    }

    pub fn is_signalized(&self, id: &str) -> bool {
        self.signalized.binary_search_by(|s| s.as_str().cmp(id)).is_ok()
    }

    pub fn total_demand(&self) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.kind == CellKind::Source)
            .map(Cell::total_demand)
            .sum()
    }

    /// Number of (predecessor, signalized merge) pairs, i.e. the number of
    /// extreme single-signal attack candidates.
    pub fn signal_approach_count(&self) -> usize {
        self.signalized.iter().map(|s| self.predecessors(s).len()).sum()
    }

    /// Longest source-to-sink path length in connections, or `None` when the
    /// network contains a cycle reachable from a source.
    pub fn longest_source_sink_hops(&self) -> Option<usize> {
        let order = self.topological_order()?;
        let mut best: Vec<Option<usize>> = vec![None; self.cells.len()];
        for (i, c) in self.cells.iter().enumerate() {
            if c.kind == CellKind::Source {
                best[i] = Some(0);
            }
        }
        let mut longest = 0;
        for &i in &order {
            if let Some(d) = best[i] {
                if self.cells[i].kind == CellKind::Sink {
                    longest = longest.max(d);
                }
                for &j in &self.succs[i] {
                    best[j] = Some(best[j].map_or(d + 1, |b| b.max(d + 1)));
                }
            }
        }
        Some(longest)
    }

    fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indeg: Vec<usize> = self.preds.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.cells.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(self.cells.len());
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &j in &self.succs[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    queue.push_back(j);
                }
            }
        }
        (order.len() == self.cells.len()).then_some(order)
    }

    pub fn to_json(&self) -> String {
        let doc = NetworkDoc {
            cells: self.cells.clone(),
            edges: self.edges.clone(),
            signalized: self.signalized.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("network serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NetworkDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(Network::new(doc.cells, doc.edges, doc.signalized))
    }

    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        let mut push = |cell: Option<&str>, message: String| {
            issues.push(ValidationIssue {
                cell: cell.map(str::to_owned),
                message,
            })
        };

        let mut seen = BTreeSet::new();
        for c in &self.cells {
            if !seen.insert(c.id.as_str()) {
                push(Some(&c.id), "duplicate cell id".into());
            }
        }
        for (from, to) in &self.edges {
            for end in [from, to] {
                if !self.index.contains_key(end) {
                    push(Some(end), format!("edge {from}->{to} references an unknown cell"));
                }
            }
            if from == to {
                push(Some(from), "self-loop".into());
            }
        }

        for (i, c) in self.cells.iter().enumerate() {
            let np = self.preds[i].len();
            let ns = self.succs[i].len();
            let degree_ok = match c.kind {
                CellKind::Ordinary => np == 1 && ns == 1,
                CellKind::Diverging => np == 1 && ns >= 2,
                CellKind::Merging => np >= 2 && ns == 1,
                CellKind::Source => np == 0 && ns >= 1,
                CellKind::Sink => np >= 1 && ns == 0,
            };
            if !degree_ok {
                push(
                    Some(&c.id),
                    format!("degree violation for {} cell: {np} predecessor(s), {ns} successor(s)", c.kind),
                );
            }
            if let Capacity::Finite(q) = c.q {
                if !(q >= 0.0) {
                    push(Some(&c.id), format!("Q must be nonnegative, got {q}"));
                }
            }
            if let Capacity::Finite(n) = c.n {
                if !(n >= 0.0) {
                    push(Some(&c.id), format!("N must be nonnegative, got {n}"));
                }
            }
            if !(c.delta > 0.0 && c.delta <= 1.0) {
                push(Some(&c.id), format!("delta must lie in (0, 1], got {}", c.delta));
            }
            if c.demand.iter().any(|d| !(*d >= 0.0)) {
                push(Some(&c.id), "demand values must be nonnegative".into());
            }
            if c.kind != CellKind::Source && c.demand.iter().any(|d| *d != 0.0) {
                push(Some(&c.id), "only source cells may carry demand".into());
            }
            match c.kind {
                CellKind::Sink => {
                    if !c.q.is_unbounded() || !c.n.is_unbounded() {
                        push(Some(&c.id), "sink cells must have Q = N = inf".into());
                    }
                }
                CellKind::Source => {
                    if !c.n.is_unbounded() {
                        push(Some(&c.id), "source cells must have N = inf".into());
                    }
                    if c.q.is_unbounded() {
                        push(Some(&c.id), "source cells need a finite Q".into());
                    }
                }
                _ => {
                    if c.q.is_unbounded() || c.n.is_unbounded() {
                        push(Some(&c.id), "interior cells need finite Q and N".into());
                    }
                }
            }
        }

        for s in &self.signalized {
            match self.cell(s) {
                None => push(Some(s), "signalized id is not a cell".into()),
                Some(c) if c.kind != CellKind::Merging => {
                    push(Some(s), format!("signalized cell is {} rather than merging", c.kind))
                }
                _ => {}
            }
        }

        let sources: Vec<usize> = self.kind_indices(CellKind::Source);
        let sinks: Vec<usize> = self.kind_indices(CellKind::Sink);
        if sources.is_empty() {
            push(None, "network has no source cell".into());
        }
        if sinks.is_empty() {
            push(None, "network has no sink cell".into());
        }
        if !sinks.is_empty() {
            let reach = self.reaches_sink();
            for &s in &sources {
                if !reach[s] {
                    push(Some(&self.cells[s].id), "source cannot reach any sink".into());
                }
            }
        }
        if self.topological_order().is_none() {
            push(None, "network contains a directed cycle".into());
        }

        ValidationReport { issues }
    }

    fn kind_indices(&self, kind: CellKind) -> Vec<usize> {
        (0..self.cells.len()).filter(|&i| self.cells[i].kind == kind).collect()
    }

    fn reaches_sink(&self) -> Vec<bool> {
        let mut reach = vec![false; self.cells.len()];
        let mut queue: VecDeque<usize> = self.kind_indices(CellKind::Sink).into();
        for &s in &queue {
            reach[s] = true;
        }
        while let Some(i) = queue.pop_front() {
            for &k in &self.preds[i] {
                if !reach[k] {
                    reach[k] = true;
                    queue.push_back(k);
                }
            }
        }
        reach
    }

    /// Returns `Err(Error::InvalidNetwork)` carrying every violation.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_pass() {
            Ok(())
        } else {
            Err(Error::InvalidNetwork(report.issues.iter().map(ToString::to_string).collect()))
        }
    }

    /// Predecessor ids keyed by signalized merge.
    pub fn signal_approaches(&self) -> BTreeMap<&str, Vec<&str>> {
        self.signalized
            .iter()
            .map(|s| (s.as_str(), self.predecessors(s)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationIssue {
    pub cell: Option<CellId>,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.cell {
            Some(c) => write!(f, "{c}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.issues.iter().any(|i| i.to_string().contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_pass() {
            return f.write_str("pass");
        }
        writeln!(f, "fail: {} issue(s)", self.issues.len())?;
        for issue in &self.issues {
            writeln!(f, "  {issue}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fin(v: f64) -> Capacity {
        Capacity::Finite(v)
    }

    pub(crate) fn chain() -> Network {
        let cells = vec![
            Cell::new("a", CellKind::Source, fin(2.0), Capacity::Unbounded, 1.0).with_demand(vec![3.0]),
            Cell::new("b", CellKind::Ordinary, fin(2.0), fin(4.0), 1.0),
            Cell::new("c", CellKind::Sink, Capacity::Unbounded, Capacity::Unbounded, 1.0),
        ];
        let edges = vec![("a".into(), "b".into()), ("b".into(), "c".into())];
        Network::new(cells, edges, vec![])
    }

    #[test]
    fn empty_network_fails() {
        let report = Network::new(vec![], vec![], vec![]).validate();
        assert!(!report.is_pass());
        assert!(report.mentions("no source"));
        assert!(report.mentions("no sink"));
    }

    #[test]
    fn chain_passes() {
        let report = chain().validate();
        assert!(report.is_pass(), "{report}");
    }

    #[test]
    fn merging_with_one_predecessor_is_a_degree_violation() {
        let mut cells = chain().cells().to_vec();
        cells[1].kind = CellKind::Merging;
        let net = Network::new(cells, chain().edges().to_vec(), vec!["b".into()]);
        let report = net.validate();
        assert!(report.mentions("b: degree violation"), "{report}");
    }

    #[test]
    fn signalized_must_be_merging() {
        let net = Network::new(chain().cells().to_vec(), chain().edges().to_vec(), vec!["b".into()]);
        assert!(net.validate().mentions("rather than merging"));
    }

    #[test]
    fn dangling_edge_is_reported() {
        let mut edges = chain().edges().to_vec();
        edges.push(("b".into(), "zz".into()));
        let net = Network::new(chain().cells().to_vec(), edges, vec![]);
        assert!(net.validate().mentions("unknown cell"));
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let net = chain();
        let text = net.to_json();
        assert!(text.contains("\"inf\""));
        let again = Network::from_json(&text).unwrap();
        assert_eq!(again, net);
        assert_eq!(again.to_json(), text);
    }

    #[test]
    fn canonical_order_is_independent_of_input_order() {
        let mut cells = chain().cells().to_vec();
        cells.reverse();
        let mut edges = chain().edges().to_vec();
        edges.reverse();
        assert_eq!(Network::new(cells, edges, vec![]).to_json(), chain().to_json());
    }

    #[test]
    fn longest_hops() {
        assert_eq!(chain().longest_source_sink_hops(), Some(2));
    }
}
