//! Random grid networks with extra edges.
//!
//! Intersections sit on a `width × height` lattice. Roads run right and up
//! between neighbours, and each candidate extra road (the diagonal to the
//! upper-right neighbour, or a skip of two nodes right or up) is added
//! independently. The bottom-left node is fed by the source and the
//! top-right node drains into the sink.
//!
//! Every road becomes one cell. Junctions expand as follows:
//!
//! ```text
//!   in >= 2, out >= 2:   roads ──> M ──> D ──> roads
//!   in >= 2, out == 1:   roads ──> M ──> road
//!   in == 1, out >= 2:   road (diverging) ──> roads
//!   in == 1, out == 1:   road ──> road
//! ```
//!
//! `M` is a merging cell and is always signalized.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ctm_lp::TrafficModel;
use crate::error::{Error, Result};
use crate::network::{Capacity, Cell, CellId, CellKind, Network};
use crate::proportions::Proportions;

pub const SOURCE_ID: &str = "source";
pub const SINK_ID: &str = "sink";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreParams {
    pub width: usize,
    pub height: usize,
    pub p_extra: f64,
    pub seed: u64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub delta: f64,
    #[serde(rename = "N")]
    pub n: f64,
    pub source_demand: Vec<f64>,
}

impl Default for GreParams {
    fn default() -> Self {
        GreParams {
            width: 4,
            height: 4,
            p_extra: 0.1,
            seed: 0,
            q: 6.0,
            delta: 1.0,
            n: 10.0,
            source_demand: vec![8.0, 12.0, 8.0],
        }
    }
}

impl GreParams {
    pub fn with_seed(seed: u64) -> Self {
        GreParams {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidInput("grid width and height must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.p_extra) {
            return Err(Error::InvalidInput("p_extra must lie in [0, 1]".into()));
        }
        if self.q < 0.0 || self.n < 0.0 || !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidInput("cell parameters out of range".into()));
        }
        if self.source_demand.iter().any(|&d| d < 0.0) {
            return Err(Error::InvalidInput("negative demand".into()));
        }
        Ok(())
    }
}

type Node = (usize, usize);

fn road_id(a: Node, b: Node) -> CellId {
    format!("r{}{}_{}{}", a.0, a.1, b.0, b.1)
}

fn merge_id(v: Node) -> CellId {
    format!("m{}{}", v.0, v.1)
}

fn diverge_id(v: Node) -> CellId {
    format!("d{}{}", v.0, v.1)
}

/// Builds a random network. Identical parameters give identical networks;
/// the generator is ChaCha8 seeded from `seed`.
pub fn generate_gre(gp: &GreParams) -> Result<Network> {
    gp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(gp.seed);
    let (w, h) = (gp.width, gp.height);
    let mut roads: Vec<(Node, Node)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                roads.push(((x, y), (x + 1, y)));
            }
            if y + 1 < h {
                roads.push(((x, y), (x, y + 1)));
            }
        }
    }
    // Candidates are drawn in a fixed order so the seed fully determines the result.
    for y in 0..h {
        for x in 0..w {
            let candidates = [(x + 1, y + 1), (x + 2, y), (x, y + 2)];
            for (cx, cy) in candidates {
                if cx < w && cy < h && rng.gen_bool(gp.p_extra) {
                    roads.push(((x, y), (cx, cy)));
                }
            }
        }
    }

    let mut ins: BTreeMap<Node, Vec<(Node, Node)>> = BTreeMap::new();
    let mut outs: BTreeMap<Node, Vec<(Node, Node)>> = BTreeMap::new();
    for &r in &roads {
        outs.entry(r.0).or_default().push(r);
        ins.entry(r.1).or_default().push(r);
    }

    let source_node = (0, 0);
    let sink_node = (w - 1, h - 1);
    let q = Capacity::Finite(gp.q);
    let n = Capacity::Finite(gp.n);
    let mut cells = vec![
        Cell::new(SOURCE_ID, CellKind::Source, q, Capacity::Unbounded, gp.delta).with_demand(gp.source_demand.clone()),
        Cell::new(SINK_ID, CellKind::Sink, Capacity::Unbounded, Capacity::Unbounded, gp.delta),
    ];
    let mut edges: Vec<(CellId, CellId)> = Vec::new();
    let mut signalized = Vec::new();
    let mut road_kind: BTreeMap<(Node, Node), CellKind> = roads.iter().map(|&r| (r, CellKind::Ordinary)).collect();

    for y in 0..h {
        for x in 0..w {
            let v = (x, y);
            let vin = ins.get(&v).cloned().unwrap_or_default();
            let vout = outs.get(&v).cloned().unwrap_or_default();
            // Cells that carry traffic out of the junction.
            let exits: Vec<CellId> = if v == sink_node {
                vec![SINK_ID.to_owned()]
            } else {
                vout.iter().map(|&(a, b)| road_id(a, b)).collect()
            };
            // The cell (or cells) that traffic entering the junction sits in.
            let feeders: Vec<CellId> = if v == source_node {
                vec![SOURCE_ID.to_owned()]
            } else if vin.len() >= 2 {
                let m = merge_id(v);
                for &(a, b) in &vin {
                    edges.push((road_id(a, b), m.clone()));
                }
                signalized.push(m.clone());
                if exits.len() >= 2 {
                    cells.push(Cell::new(m.clone(), CellKind::Merging, q, n, gp.delta));
                    let d = diverge_id(v);
                    cells.push(Cell::new(d.clone(), CellKind::Diverging, q, n, gp.delta));
                    edges.push((m, d.clone()));
                    vec![d]
                } else {
                    cells.push(Cell::new(m.clone(), CellKind::Merging, q, n, gp.delta));
                    vec![m]
                }
            } else {
                let r = vin[0];
                if exits.len() >= 2 {
                    road_kind.insert(r, CellKind::Diverging);
                }
                vec![road_id(r.0, r.1)]
            };
            for f in &feeders {
                for e in &exits {
                    edges.push((f.clone(), e.clone()));
                }
            }
        }
    }
    for (&(a, b), &kind) in &road_kind {
        cells.push(Cell::new(road_id(a, b), kind, q, n, gp.delta));
    }
    let net = Network::new(cells, edges, signalized);
    net.ensure_valid()?;
    Ok(net)
}

/// System-optimal proportions for every signalized merge, extracted from the
/// relaxed traffic LP.
pub fn default_schedule(model: &TrafficModel) -> Result<Proportions> {
    let h = model.choose_horizon()?;
    let (props, _) = model.system_optimal_control(&Proportions::new(), h)?;
    Ok(props)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_two_by_two_lattice() {
        let gp = GreParams {
            width: 2,
            height: 2,
            p_extra: 0.0,
            ..GreParams::default()
        };
        let net = generate_gre(&gp).unwrap();
        assert!(net.validate().is_pass());
        // Four roads, one merge at the top-right node, source and sink.
        assert_eq!(net.cells().len(), 7);
        assert_eq!(net.signalized(), ["m11".to_owned()]);
        assert_eq!(net.cell("r00_10").unwrap().kind, CellKind::Ordinary);
    }

    #[test]
    fn reference_grid_has_28_vehicles_of_demand() {
        let net = generate_gre(&GreParams::with_seed(3)).unwrap();
        assert_eq!(net.total_demand(), 28.0);
        assert!(net.cells().iter().all(|c| c.kind == CellKind::Source
            || c.kind == CellKind::Sink
            || (c.q == Capacity::Finite(6.0) && c.n == Capacity::Finite(10.0) && c.delta == 1.0)));
    }

    #[test]
    fn same_seed_same_network() {
        for seed in 0..10 {
            let a = generate_gre(&GreParams::with_seed(seed)).unwrap();
            let b = generate_gre(&GreParams::with_seed(seed)).unwrap();
            assert_eq!(a.to_json(), b.to_json());
        }
    }

    #[test]
    fn all_merges_are_signalized_and_ensembles_validate() {
        for seed in 0..50 {
            let gp = GreParams {
                p_extra: 0.3,
                seed,
                ..GreParams::default()
            };
            let net = generate_gre(&gp).unwrap();
            let merges: Vec<&str> = net
                .cells()
                .iter()
                .filter(|c| c.kind == CellKind::Merging)
                .map(|c| c.id.as_str())
                .collect();
            assert_eq!(merges, net.signalized().iter().map(String::as_str).collect::<Vec<_>>());
        }
    }

    #[test]
    fn rejects_degenerate_grid() {
        let gp = GreParams {
            width: 1,
            ..GreParams::default()
        };
        assert!(generate_gre(&gp).is_err());
    }
}
