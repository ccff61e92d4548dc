//! The cell-transmission linear program whose optimum is total travel time.
//!
//! Time runs over intervals `0..H`. Occupancy `x[i][t]` is defined for
//! `t = 0..=H` with `x[·][0] = 0`; flow `y[e][t]` moves vehicles along
//! connection `e` during interval `t`, so
//!
//! ```text
//! x[i][t+1] = x[i][t] + d[i][t] + sum_in y[·][t] - sum_out y[·][t]
//! ```
//!
//! Every non-sink cell must be empty at `t = H`. The objective sums `x` over
//! non-sink cells and `t = 1..=H`.
//!
//! Variables that are forced to zero are never created: a cell cannot hold
//! vehicles before the earliest time they can reach it, nor later than `H`
//! minus its hop distance to a sink, and connections with a zero inflow
//! proportion carry no flow. This pruning leaves the feasible set unchanged.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{AutoSolver, Cmp, LinearProgram, LpError, LpSolver};
use crate::network::{CellId, CellKind, Network};
use crate::proportions::Proportions;

/// Default cap on the horizon doubling sequence.
pub const DEFAULT_H_MAX: usize = 512;

const ZERO_PROPORTION: f64 = 1e-12;

/// Total travel time in vehicle-intervals.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct TravelTime(pub f64);

impl TravelTime {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// A solved traffic state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficState {
    pub horizon: usize,
    /// Occupancy per cell, `horizon + 1` entries each.
    pub occupancy: BTreeMap<CellId, Vec<f64>>,
    /// Flow per connection keyed `"from->to"`, `horizon` entries each.
    pub flows: BTreeMap<String, Vec<f64>>,
}

impl TrafficState {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("state serialize")
    }
}

pub fn flow_key(from: &str, to: &str) -> String {
    format!("{from}->{to}")
}

struct LpLayout {
    lp: LinearProgram,
    x: Vec<Vec<Option<usize>>>,
    y: Vec<Vec<Option<usize>>>,
}

enum RowOutcome {
    Ok,
    Infeasible,
}

/// Indexed view of a validated network, reusable across many solves.
#[derive(Clone)]
pub struct TrafficModel {
    net: Network,
    edges: Vec<(usize, usize)>,
    in_edges: Vec<Vec<usize>>,
    out_edges: Vec<Vec<usize>>,
    solver: Arc<dyn LpSolver>,
    h_max: usize,
}

impl std::fmt::Debug for TrafficModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrafficModel")
            .field("cells", &self.net.cells().len())
            .field("edges", &self.edges.len())
            .field("solver", &self.solver.name())
            .field("h_max", &self.h_max)
            .finish()
    }
}

impl TrafficModel {
    pub fn new(net: &Network) -> Result<Self> {
        net.ensure_valid()?;
        let n = net.cells().len();
        let mut edges = Vec::new();
        let mut in_edges = vec![Vec::new(); n];
        let mut out_edges = vec![Vec::new(); n];
        for (from, to) in net.edges() {
            let a = net.index_of(from).expect("validated");
            let b = net.index_of(to).expect("validated");
            in_edges[b].push(edges.len());
            out_edges[a].push(edges.len());
            edges.push((a, b));
        }
        Ok(TrafficModel {
            net: net.clone(),
            edges,
            in_edges,
            out_edges,
            solver: Arc::new(AutoSolver::default()),
            h_max: DEFAULT_H_MAX,
        })
    }

    pub fn with_solver(mut self, solver: Arc<dyn LpSolver>) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_h_max(mut self, h_max: usize) -> Self {
        self.h_max = h_max;
        self
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn h_max(&self) -> usize {
        self.h_max
    }

    pub fn solver_name(&self) -> &'static str {
        self.solver.name()
    }

    /// First element of the horizon doubling sequence: the longest
    /// source-to-sink hop count plus total demand (rounded up), and never
    /// shorter than the demand schedule.
    pub fn initial_horizon(&self) -> usize {
        let hops = self
            .net
            .longest_source_sink_hops()
            .unwrap_or(self.net.cells().len());
        let last_demand = self
            .net
            .cells()
            .iter()
            .filter_map(|c| c.demand.iter().rposition(|&d| d > 0.0))
            .max()
            .map_or(0, |t| t + 1);
        (hops + self.net.total_demand().ceil() as usize).max(last_demand + hops).max(1)
    }

    /// Smallest horizon in `H0, 2·H0, …` (capped at `h_max`) for which the
    /// drained-network LP with `fixed` proportions is feasible.
    pub fn choose_horizon_with(&self, fixed: &Proportions) -> Result<usize> {
        let mut h = self.initial_horizon();
        if self.net.total_demand() == 0.0 {
            return Ok(h);
        }
        loop {
            if h > self.h_max {
                return Err(Error::HorizonExceeded { h_max: self.h_max });
            }
            match self.solve(fixed, h) {
                Ok(_) => return Ok(h),
                Err(Error::Infeasible { .. }) => {
                    if h == self.h_max {
                        return Err(Error::HorizonExceeded { h_max: self.h_max });
                    }
                    h = (2 * h).min(self.h_max);
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// No schedule can drain the network faster than the last demand plus
    /// the longest source-to-sink path.
    pub fn horizon_lower_bound(&self) -> usize {
        let hops = self
            .net
            .longest_source_sink_hops()
            .unwrap_or(self.net.cells().len());
        let last_demand = self
            .net
            .cells()
            .iter()
            .filter_map(|c| c.demand.iter().rposition(|&d| d > 0.0))
            .max()
            .map_or(0, |t| t + 1);
        (last_demand + hops).clamp(1, self.h_max)
    }

    /// The horizon after `h` in the geometric search: a quarter longer,
    /// and at least one step, capped at `h_max`.
    pub fn next_horizon(&self, h: usize) -> usize {
        (h + 1).max(h + h.div_ceil(4)).min(self.h_max)
    }

    /// Smallest horizon in the sequence `start, next_horizon(start), …` at
    /// which `fixed` drains. Travel time does not change once the network
    /// drains, so this gives the same optimum as any longer horizon with
    /// smaller programs.
    pub fn tight_horizon_with(&self, fixed: &Proportions, start: usize) -> Result<usize> {
        Ok(self.solve_tight(fixed, start)?.0)
    }

    /// [`Self::tight_horizon_with`] together with the optimum found there.
    pub fn solve_tight(&self, fixed: &Proportions, start: usize) -> Result<(usize, TravelTime)> {
        let mut h = start.clamp(1, self.h_max);
        loop {
            match self.solve(fixed, h) {
                Ok((tt, _)) => return Ok((h, tt)),
                Err(Error::Infeasible { .. }) if h < self.h_max => h = self.next_horizon(h),
                Err(Error::Infeasible { .. }) => return Err(Error::HorizonExceeded { h_max: self.h_max }),
                Err(e) => return Err(e),
            }
        }
    }

    /// Horizon for the network with every signal unconstrained.
    pub fn choose_horizon(&self) -> Result<usize> {
        self.choose_horizon_with(&Proportions::new())
    }

    /// Optimal travel time with `props` enforced at every signalized merge
    /// and a witness state. Every signalized merge must be assigned.
    pub fn total_travel_time(&self, props: &Proportions, horizon: usize) -> Result<(TravelTime, TrafficState)> {
        props.check_complete(&self.net)?;
        self.solve(props, horizon)
    }

    /// Solves with proportion constraints only at the merges in `fixed`;
    /// other signalized merges obey the plain merging-cell inequalities.
    /// Returns `fixed` extended with flow-weighted proportions extracted for
    /// every free merge, plus the relaxed optimum.
    pub fn system_optimal_control(&self, fixed: &Proportions, horizon: usize) -> Result<(Proportions, TravelTime)> {
        fixed.check(&self.net)?;
        let (tt, state) = self.solve(fixed, horizon)?;
        let mut out = fixed.clone();
        for merge in self.net.signalized() {
            if fixed.contains(merge) {
                continue;
            }
            let preds = self.net.predecessors(merge);
            let totals: Vec<f64> = preds
                .iter()
                .map(|k| state.flows[&flow_key(k, merge)].iter().sum::<f64>().max(0.0))
                .collect();
            let denom: f64 = totals.iter().sum();
            let values: BTreeMap<CellId, f64> = if denom > 1e-9 {
                preds.iter().zip(&totals).map(|(k, v)| (k.to_string(), v / denom)).collect()
            } else {
                let share = 1.0 / preds.len() as f64;
                preds.iter().map(|k| (k.to_string(), share)).collect()
            };
            out.set(merge.clone(), values);
        }
        Ok((out, tt))
    }

    /// Solves the LP with proportion constraints at the merges present in
    /// `fixed` (which must already be normalized).
    pub fn solve(&self, fixed: &Proportions, horizon: usize) -> Result<(TravelTime, TrafficState)> {
        let edge_p = self.edge_proportions(fixed)?;
        let layout = match self.build(&edge_p, horizon) {
            Some(layout) => layout,
            None => return Err(Error::Infeasible { horizon }),
        };
        let sol = match self.solver.solve(&layout.lp) {
            Ok(sol) => sol,
            Err(LpError::Infeasible) => return Err(Error::Infeasible { horizon }),
            Err(LpError::Unbounded) => return Err(Error::NumericalFailure("unbounded traffic LP".into())),
            Err(LpError::NumericalFailure(m)) => return Err(Error::NumericalFailure(m)),
        };
        let cells = self.net.cells();
        let mut occupancy = BTreeMap::new();
        for (i, c) in cells.iter().enumerate() {
            let series: Vec<f64> = layout.x[i]
                .iter()
                .map(|v| v.map_or(0.0, |j| sol.values[j].max(0.0)))
                .collect();
            occupancy.insert(c.id.clone(), series);
        }
        let mut flows = BTreeMap::new();
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            let series: Vec<f64> = layout.y[e]
                .iter()
                .map(|v| v.map_or(0.0, |j| sol.values[j].max(0.0)))
                .collect();
            flows.insert(flow_key(&cells[a].id, &cells[b].id), series);
        }
        Ok((
            TravelTime(sol.objective),
            TrafficState {
                horizon,
                occupancy,
                flows,
            },
        ))
    }

    fn edge_proportions(&self, fixed: &Proportions) -> Result<Vec<Option<f64>>> {
        let cells = self.net.cells();
        let mut out = vec![None; self.edges.len()];
        for (merge, values) in fixed.iter() {
            let i = self
                .net
                .index_of(merge)
                .ok_or_else(|| Error::UnknownIntersection(merge.clone()))?;
            for &e in &self.in_edges[i] {
                let k = &cells[self.edges[e].0].id;
                let p = values
                    .get(k)
                    .ok_or_else(|| Error::InvalidInput(format!("missing proportion for {k} -> {merge}")))?;
                out[e] = Some(*p);
            }
        }
        Ok(out)
    }

    /// Whether every demand cell can reach a sink once `fixed` closes its
    /// zero-proportion approaches. When this holds, some finite horizon
    /// drains the network.
    pub fn can_drain(&self, fixed: &Proportions) -> Result<bool> {
        let enabled: Vec<bool> = self
            .edge_proportions(fixed)?
            .iter()
            .map(|p| p.map_or(true, |p| p > ZERO_PROPORTION))
            .collect();
        let to_sink = self.hops_to_sink(&enabled);
        Ok(self
            .net
            .cells()
            .iter()
            .zip(&to_sink)
            .all(|(c, &d)| d != usize::MAX || c.demand.iter().all(|&v| v <= 0.0)))
    }

    /// Hop distance to the nearest sink over enabled connections.
    fn hops_to_sink(&self, enabled: &[bool]) -> Vec<usize> {
        let cells = self.net.cells();
        let mut dist = vec![usize::MAX; cells.len()];
        let mut queue = VecDeque::new();
        for (i, c) in cells.iter().enumerate() {
            if c.kind == CellKind::Sink {
                dist[i] = 0;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            for &e in &self.in_edges[i] {
                let k = self.edges[e].0;
                if enabled[e] && dist[k] == usize::MAX {
                    dist[k] = dist[i] + 1;
                    queue.push_back(k);
                }
            }
        }
        dist
    }

    /// Earliest `t` at which `x[i][t]` can be positive.
    fn earliest_occupancy(&self, enabled: &[bool]) -> Vec<usize> {
        let cells = self.net.cells();
        let mut first = vec![usize::MAX; cells.len()];
        let mut queue = VecDeque::new();
        for (i, c) in cells.iter().enumerate() {
            if let Some(t) = c.demand.iter().position(|&d| d > 0.0) {
                first[i] = t + 1;
                queue.push_back(i);
            }
        }
        // Multi-source shortest arrival; a BFS over layers is exact here
        // because sources may start at different times, so relax until stable.
        while let Some(i) = queue.pop_front() {
            for &e in &self.out_edges[i] {
                let j = self.edges[e].1;
                if enabled[e] && first[i] + 1 < first[j] {
                    first[j] = first[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        first
    }

    fn build(&self, edge_p: &[Option<f64>], horizon: usize) -> Option<LpLayout> {
        let cells = self.net.cells();
        let nc = cells.len();
        let h = horizon;
        let enabled: Vec<bool> = edge_p.iter().map(|p| p.map_or(true, |p| p > ZERO_PROPORTION)).collect();
        let to_sink = self.hops_to_sink(&enabled);
        let first = self.earliest_occupancy(&enabled);
        let is_sink: Vec<bool> = cells.iter().map(|c| c.kind == CellKind::Sink).collect();

        // Demand must be able to enter and leave in time.
        for (i, c) in cells.iter().enumerate() {
            if let Some(last) = c.demand.iter().rposition(|&d| d > 0.0) {
                if to_sink[i] == usize::MAX || last + 1 + to_sink[i] > h {
                    return None;
                }
            }
        }

        let mut lp = LinearProgram::new();
        let mut x: Vec<Vec<Option<usize>>> = vec![vec![None; h + 1]; nc];
        for i in 0..nc {
            if is_sink[i] || to_sink[i] == usize::MAX || first[i] == usize::MAX {
                continue;
            }
            let last = h.saturating_sub(to_sink[i]);
            for t in first[i].max(1)..=last {
                x[i][t] = Some(lp.add_var(1.0, 0.0, f64::INFINITY));
            }
        }
        let mut y: Vec<Vec<Option<usize>>> = vec![vec![None; h]; self.edges.len()];
        for (e, &(k, i)) in self.edges.iter().enumerate() {
            if !enabled[e] {
                continue;
            }
            for t in 0..h {
                let from_ok = x[k][t].is_some();
                let to_ok = is_sink[i] || (t + 1 <= h && x[i][t + 1].is_some());
                if from_ok && to_ok {
                    y[e][t] = Some(lp.add_var(0.0, 0.0, f64::INFINITY));
                }
            }
        }

        let push = |lp: &mut LinearProgram, coeffs: Vec<(usize, f64)>, cmp: Cmp, rhs: f64| -> RowOutcome {
            match coeffs.len() {
                0 => {
                    let ok = match cmp {
                        Cmp::Le => 0.0 <= rhs + 1e-9,
                        Cmp::Ge => 0.0 >= rhs - 1e-9,
                        Cmp::Eq => rhs.abs() <= 1e-9,
                    };
                    if ok {
                        RowOutcome::Ok
                    } else {
                        RowOutcome::Infeasible
                    }
                }
                1 if cmp == Cmp::Le && coeffs[0].1 > 0.0 => {
                    lp.tighten_upper(coeffs[0].0, rhs / coeffs[0].1);
                    if rhs < -1e-9 {
                        RowOutcome::Infeasible
                    } else {
                        RowOutcome::Ok
                    }
                }
                _ => {
                    lp.add_constraint(coeffs, cmp, rhs);
                    RowOutcome::Ok
                }
            }
        };

        // Conservation.
        for i in 0..nc {
            if is_sink[i] {
                continue;
            }
            for t in 1..=h {
                let mut row = Vec::new();
                if let Some(v) = x[i][t] {
                    row.push((v, 1.0));
                }
                if let Some(v) = x[i][t - 1] {
                    row.push((v, -1.0));
                }
                for &e in &self.in_edges[i] {
                    if let Some(v) = y[e][t - 1] {
                        row.push((v, -1.0));
                    }
                }
                for &e in &self.out_edges[i] {
                    if let Some(v) = y[e][t - 1] {
                        row.push((v, 1.0));
                    }
                }
                let d = cells[i].demand_at(t - 1);
                if row.is_empty() && d == 0.0 {
                    continue;
                }
                if let RowOutcome::Infeasible = push(&mut lp, row, Cmp::Eq, d) {
                    return None;
                }
            }
        }

        for t in 0..h {
            for i in 0..nc {
                let cell = &cells[i];
                // Outflow: limited by occupancy and by Q of the sending cell.
                let outs: Vec<usize> = self.out_edges[i].iter().filter_map(|&e| y[e][t]).collect();
                if !outs.is_empty() {
                    let xv = x[i][t].expect("outflow requires occupancy");
                    let mut row: Vec<(usize, f64)> = outs.iter().map(|&v| (v, 1.0)).collect();
                    row.push((xv, -1.0));
                    lp.add_constraint(row, Cmp::Le, 0.0);
                    if let Some(q) = cell.q.finite() {
                        let row = outs.iter().map(|&v| (v, 1.0)).collect();
                        push(&mut lp, row, Cmp::Le, q);
                    }
                }

                // Inflow: Q and backward-wave limits of the receiving cell.
                let ins: Vec<(usize, usize)> = self.in_edges[i]
                    .iter()
                    .filter_map(|&e| y[e][t].map(|v| (e, v)))
                    .collect();
                if ins.is_empty() {
                    continue;
                }
                if let Some(q) = cell.q.finite() {
                    let row = ins.iter().map(|&(_, v)| (v, 1.0)).collect();
                    push(&mut lp, row, Cmp::Le, q);
                }
                if let Some(n) = cell.n.finite() {
                    let mut row: Vec<(usize, f64)> = ins.iter().map(|&(_, v)| (v, 1.0)).collect();
                    if let Some(xv) = x[i][t] {
                        row.push((xv, cell.delta));
                    }
                    push(&mut lp, row, Cmp::Le, cell.delta * n);
                }
                // Signalized merge with fixed proportions.
                for &(e, v) in &ins {
                    let Some(p) = edge_p[e] else { continue };
                    if let Some(q) = cell.q.finite() {
                        push(&mut lp, vec![(v, 1.0)], Cmp::Le, p * q);
                    }
                    if let Some(n) = cell.n.finite() {
                        let mut row = vec![(v, 1.0)];
                        if let Some(xv) = x[i][t] {
                            row.push((xv, p * cell.delta));
                        }
                        push(&mut lp, row, Cmp::Le, p * cell.delta * n);
                    }
                }
            }
        }

        Some(LpLayout { lp, x, y })
    }

    /// Largest violation by `state` of any CTM relation, evaluated directly
    /// from the cell equations with `fixed` proportions enforced. Used to
    /// certify LP witnesses.
    pub fn state_residual(&self, fixed: &Proportions, state: &TrafficState) -> f64 {
        let cells = self.net.cells();
        let h = state.horizon;
        let x = |i: usize, t: usize| state.occupancy[&cells[i].id][t];
        let y = |e: usize, t: usize| {
            let (a, b) = self.edges[e];
            state.flows[&flow_key(&cells[a].id, &cells[b].id)][t]
        };
        let mut worst = 0.0f64;
        let mut viol = |v: f64| worst = worst.max(v);
        for (i, c) in cells.iter().enumerate() {
            if c.kind == CellKind::Sink {
                continue;
            }
            viol(x(i, 0).abs());
            viol(x(i, h).abs());
            for t in 0..h {
                let inflow: f64 = self.in_edges[i].iter().map(|&e| y(e, t)).sum();
                let outflow: f64 = self.out_edges[i].iter().map(|&e| y(e, t)).sum();
                viol((x(i, t + 1) - (x(i, t) + c.demand_at(t) + inflow - outflow)).abs());
                viol(-x(i, t + 1));
                viol(outflow - x(i, t));
                if let Some(q) = c.q.finite() {
                    viol(outflow - q);
                    viol(inflow - q);
                }
                if let Some(n) = c.n.finite() {
                    viol(inflow - c.delta * (n - x(i, t)));
                }
                if let Some(values) = fixed.get(&c.id) {
                    for &e in &self.in_edges[i] {
                        let p = values[&cells[self.edges[e].0].id];
                        let f = y(e, t);
                        viol(-f);
                        if let Some(q) = c.q.finite() {
                            viol(f - p * q);
                        }
                        if let Some(n) = c.n.finite() {
                            viol(f - p * c.delta * (n - x(i, t)));
                        }
                    }
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{DenseSimplex, SparseSimplex};
    use crate::network::{Capacity, Cell};

    fn fin(v: f64) -> Capacity {
        Capacity::Finite(v)
    }

    /// source -> a -> b -> sink with the given capacities.
    fn chain(demand: Vec<f64>, q: f64, n: f64) -> Network {
        let cells = vec![
            Cell::new("0src", CellKind::Source, fin(q), Capacity::Unbounded, 1.0).with_demand(demand),
            Cell::new("1a", CellKind::Ordinary, fin(q), fin(n), 1.0),
            Cell::new("2b", CellKind::Ordinary, fin(q), fin(n), 1.0),
            Cell::new("3snk", CellKind::Sink, Capacity::Unbounded, Capacity::Unbounded, 1.0),
        ];
        let edges = vec![
            ("0src".into(), "1a".into()),
            ("1a".into(), "2b".into()),
            ("2b".into(), "3snk".into()),
        ];
        Network::new(cells, edges, vec![])
    }

    /// Two approaches merging into one signalized cell.
    fn merge_net() -> Network {
        let cells = vec![
            Cell::new("s1", CellKind::Source, fin(4.0), Capacity::Unbounded, 1.0).with_demand(vec![4.0]),
            Cell::new("s2", CellKind::Source, fin(4.0), Capacity::Unbounded, 1.0).with_demand(vec![4.0]),
            Cell::new("a1", CellKind::Ordinary, fin(4.0), fin(8.0), 1.0),
            Cell::new("a2", CellKind::Ordinary, fin(4.0), fin(8.0), 1.0),
            Cell::new("m", CellKind::Merging, fin(4.0), fin(8.0), 1.0),
            Cell::new("z", CellKind::Sink, Capacity::Unbounded, Capacity::Unbounded, 1.0),
        ];
        let edges = vec![
            ("s1".into(), "a1".into()),
            ("s2".into(), "a2".into()),
            ("a1".into(), "m".into()),
            ("a2".into(), "m".into()),
            ("m".into(), "z".into()),
        ];
        Network::new(cells, edges, vec!["m".into()])
    }

    #[test]
    fn zero_demand_has_zero_travel_time() {
        let net = chain(vec![], 2.0, 4.0);
        let model = TrafficModel::new(&net).unwrap();
        let h = model.choose_horizon().unwrap();
        assert_eq!(h, model.initial_horizon());
        let (tt, _) = model.total_travel_time(&Proportions::new(), h).unwrap();
        assert_eq!(tt.value(), 0.0);
    }

    #[test]
    fn single_vehicle_chain_counts_each_cell_once() {
        // One vehicle spends one interval in each of src, a, b.
        let net = chain(vec![1.0], 2.0, 4.0);
        let model = TrafficModel::new(&net).unwrap();
        let h = model.choose_horizon().unwrap();
        let (tt, state) = model.total_travel_time(&Proportions::new(), h).unwrap();
        assert!((tt.value() - 3.0).abs() < 1e-9);
        assert!(model.state_residual(&Proportions::new(), &state) < 1e-6);
    }

    #[test]
    fn too_short_horizon_is_infeasible() {
        let net = chain(vec![1.0], 2.0, 4.0);
        let model = TrafficModel::new(&net).unwrap();
        assert!(matches!(model.solve(&Proportions::new(), 2), Err(Error::Infeasible { .. })));
        assert!(model.solve(&Proportions::new(), 4).is_ok());
    }

    #[test]
    fn horizon_cap_is_reported() {
        let net = chain(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0], 1.0, 4.0);
        let model = TrafficModel::new(&net).unwrap().with_h_max(5);
        assert!(matches!(model.choose_horizon(), Err(Error::HorizonExceeded { h_max: 5 })));
    }

    #[test]
    fn symmetric_merge_default_and_relaxation() {
        let net = merge_net();
        let model = TrafficModel::new(&net).unwrap();
        let props = Proportions::uniform(&net);
        let h = model.choose_horizon_with(&props).unwrap();
        let (fixed_tt, state) = model.total_travel_time(&props, h).unwrap();
        assert!(model.state_residual(&props, &state) < 1e-6);
        let (extracted, relaxed_tt) = model.system_optimal_control(&Proportions::new(), h).unwrap();
        assert!(relaxed_tt.value() <= fixed_tt.value() + 1e-9);
        extracted.check_complete(&net).unwrap();
        let p1 = extracted.value("m", "a1").unwrap();
        assert!((p1 - 0.5).abs() < 1e-9, "{p1}");
    }

    #[test]
    fn all_fixed_matches_total_travel_time() {
        let net = merge_net();
        let model = TrafficModel::new(&net).unwrap();
        let props = Proportions::uniform(&net);
        let h = model.choose_horizon_with(&props).unwrap();
        let (tt, _) = model.total_travel_time(&props, h).unwrap();
        let (out, tt2) = model.system_optimal_control(&props, h).unwrap();
        assert_eq!(out, props);
        assert!((tt.value() - tt2.value()).abs() < 1e-9);
    }

    #[test]
    fn blocked_approach_still_drains_through_the_other() {
        let net = merge_net();
        let model = TrafficModel::new(&net).unwrap();
        let mut props = Proportions::new();
        props.set("m", Proportions::extreme(&net, "m", "a1").unwrap());
        // a2's vehicles have no way out.
        assert!(matches!(model.solve(&props, 40), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn dense_and_sparse_agree_on_traffic_lp() {
        let net = merge_net();
        let props = Proportions::uniform(&net);
        let dense = TrafficModel::new(&net).unwrap().with_solver(Arc::new(DenseSimplex::default()));
        let sparse = TrafficModel::new(&net).unwrap().with_solver(Arc::new(SparseSimplex));
        let h = dense.choose_horizon_with(&props).unwrap();
        let (a, _) = dense.total_travel_time(&props, h).unwrap();
        let (b, _) = sparse.total_travel_time(&props, h).unwrap();
        assert!((a.value() - b.value()).abs() < 1e-7);
    }
}
