//! Set cover instances and their reduction to an attacker's decision problem.
//!
//! The reduction network has a source `r`, one cell per subset, one cell per
//! element, and a sink `s`:
//!
//! ```text
//!        +--> C1 --+--> u1 --+
//!   r ---+--> C2 --+--> u2 --+--> s
//!        +--> C3 -----> u3 --+
//! ```
//!
//! Subset cells let one vehicle through per interval, so `k + 1` vehicles can
//! only traverse the three hops without waiting when at least `k + 1` subset
//! cells stay usable. An attack that routes every element cell to a cover of
//! size at most `k` therefore pushes total travel time above `3(k + 1)`.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Attack, DetectorCharacteristic, GameParams};
use crate::network::{Capacity, Cell, CellId, CellKind, Network};
use crate::proportions::Proportions;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetCoverInstance {
    pub universe: Vec<String>,
    pub subsets: Vec<BTreeSet<String>>,
    pub k: usize,
}

impl SetCoverInstance {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidInput("cover size bound k must be positive".into()));
        }
        if self.k > self.subsets.len() {
            return Err(Error::InvalidInput(format!(
                "k = {} exceeds the number of subsets {}",
                self.k,
                self.subsets.len()
            )));
        }
        let universe: BTreeSet<&str> = self.universe.iter().map(String::as_str).collect();
        if universe.len() != self.universe.len() {
            return Err(Error::InvalidInput("duplicate universe element".into()));
        }
        for (i, c) in self.subsets.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::InvalidInput(format!("subset {i} is empty")));
            }
            if let Some(u) = c.iter().find(|u| !universe.contains(u.as_str())) {
                return Err(Error::InvalidInput(format!("subset {i} contains unknown element {u}")));
            }
        }
        for u in &self.universe {
            if !self.subsets.iter().any(|c| c.contains(u)) {
                return Err(Error::InvalidInput(format!("element {u} is in no subset")));
            }
        }
        Ok(())
    }

    /// Random instance with `|U| <= max_u`, `|C| <= max_c`, `k <= max_k`.
    pub fn random<R: Rng>(rng: &mut R, max_u: usize, max_c: usize, max_k: usize) -> Self {
        let nu = rng.gen_range(1..=max_u);
        let nc = rng.gen_range(1..=max_c);
        let universe: Vec<String> = (0..nu).map(|i| format!("e{i}")).collect();
        let mut subsets: Vec<BTreeSet<String>> = (0..nc)
            .map(|_| {
                universe
                    .iter()
                    .filter(|_| rng.gen_bool(0.4))
                    .cloned()
                    .collect::<BTreeSet<_>>()
            })
            .collect();
        for c in subsets.iter_mut() {
            if c.is_empty() {
                c.insert(universe[rng.gen_range(0..nu)].clone());
            }
        }
        for u in &universe {
            if !subsets.iter().any(|c| c.contains(u)) {
                let i = rng.gen_range(0..nc);
                subsets[i].insert(u.clone());
            }
        }
        let k = rng.gen_range(1..=max_k.min(nc));
        SetCoverInstance { universe, subsets, k }
    }

    fn covers(&self, chosen: &[usize]) -> bool {
        self.universe
            .iter()
            .all(|u| chosen.iter().any(|&i| self.subsets[i].contains(u)))
    }

    /// Smallest cover by exhaustive enumeration in order of size.
    pub fn minimum_cover(&self) -> Option<Vec<usize>> {
        let n = self.subsets.len();
        for size in 0..=n {
            let mut found = None;
            for_each_combination(n, size, &mut |combo| {
                if found.is_none() && self.covers(combo) {
                    found = Some(combo.to_vec());
                }
            });
            if found.is_some() {
                return found;
            }
        }
        None
    }

    pub fn has_cover_within_k(&self) -> bool {
        self.minimum_cover().is_some_and(|c| c.len() <= self.k)
    }
}

fn for_each_combination(n: usize, size: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == size {
            f(cur);
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, size, cur, f);
            cur.pop();
        }
    }
    rec(0, n, size, &mut Vec::with_capacity(size), f);
}

/// The reduction output: network, game parameters, and the gain threshold.
#[derive(Clone, Debug)]
pub struct ReductionInstance {
    pub network: Network,
    pub params: GameParams,
    pub threshold_gain: f64,
}

pub fn subset_cell_id(i: usize) -> CellId {
    format!("c{i:02}")
}

pub fn element_cell_id(u: &str) -> CellId {
    format!("u_{u}")
}

pub const SOURCE_ID: &str = "r";
pub const SINK_ID: &str = "s";

pub fn build_reduction_network(sc: &SetCoverInstance) -> Result<ReductionInstance> {
    sc.validate()?;
    let k1 = (sc.k + 1) as f64;
    let mut cells = vec![
        Cell::new(SOURCE_ID, CellKind::Source, Capacity::Finite(k1), Capacity::Unbounded, 1.0)
            .with_demand(vec![0.0, k1]),
        Cell::new(SINK_ID, CellKind::Sink, Capacity::Unbounded, Capacity::Unbounded, 1.0),
    ];
    let mut edges = Vec::new();
    let mut in_degree: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &sc.subsets {
        for u in c {
            *in_degree.entry(u.as_str()).or_default() += 1;
        }
    }
    for (i, c) in sc.subsets.iter().enumerate() {
        let id = subset_cell_id(i);
        let kind = if c.len() >= 2 { CellKind::Diverging } else { CellKind::Ordinary };
        cells.push(Cell::new(id.clone(), kind, Capacity::Finite(1.0), Capacity::Finite(k1), 1.0));
        edges.push((SOURCE_ID.to_owned(), id.clone()));
        for u in c {
            edges.push((id.clone(), element_cell_id(u)));
        }
    }
    let mut signalized = Vec::new();
    for u in &sc.universe {
        let id = element_cell_id(u);
        let kind = if in_degree[u.as_str()] >= 2 {
            signalized.push(id.clone());
            CellKind::Merging
        } else {
            CellKind::Ordinary
        };
        cells.push(Cell::new(id.clone(), kind, Capacity::Finite(k1), Capacity::Finite(k1), 1.0));
        edges.push((id, SINK_ID.to_owned()));
    }
    let network = Network::new(cells, edges, signalized);
    let params = GameParams {
        budget: sc.universe.len(),
        false_alarm_cost: 0.0,
        mitigation_minutes: 0.0,
        detectors: network.signalized().to_vec(),
        characteristic: DetectorCharacteristic::constant(1.0),
    };
    Ok(ReductionInstance {
        network,
        params,
        threshold_gain: 3.0 * k1,
    })
}

/// For every signalized element cell, give all capacity to the first subset
/// of `cover` that contains it.
pub fn cover_attack(sc: &SetCoverInstance, net: &Network, cover: &[usize]) -> Result<Attack> {
    let mut tampered = Proportions::new();
    for u in &sc.universe {
        let id = element_cell_id(u);
        if !net.is_signalized(&id) {
            continue;
        }
        let chosen = cover
            .iter()
            .copied()
            .filter(|&i| sc.subsets[i].contains(u))
            .min()
            .ok_or_else(|| Error::InvalidInput(format!("cover misses element {u}")))?;
        tampered.set(id.clone(), Proportions::extreme(net, &id, &subset_cell_id(chosen))?);
    }
    Attack::new(tampered.merges().map(str::to_owned).collect(), tampered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_element_gadget_is_a_four_cell_chain() {
        let sc = SetCoverInstance {
            universe: vec!["u".into()],
            subsets: vec![set(&["u"])],
            k: 1,
        };
        let inst = build_reduction_network(&sc).unwrap();
        let net = &inst.network;
        assert_eq!(net.cells().len(), 4);
        assert_eq!(net.edges().len(), 3);
        assert!(net.validate().is_pass(), "{}", net.validate());
        assert_eq!(net.cell("c00").unwrap().q, Capacity::Finite(1.0));
        assert_eq!(net.cell("r").unwrap().demand_at(1), 2.0);
        assert_eq!(net.cell("r").unwrap().demand_at(0), 0.0);
        assert_eq!(net.longest_source_sink_hops(), Some(3));
        assert_eq!(inst.threshold_gain, 6.0);
        assert_eq!(inst.params.budget, 1);
        assert_eq!(inst.params.mitigation_minutes, 0.0);
    }

    #[test]
    fn rejects_nonpositive_k() {
        let sc = SetCoverInstance {
            universe: vec!["u".into()],
            subsets: vec![set(&["u"])],
            k: 0,
        };
        assert!(build_reduction_network(&sc).is_err());
    }

    #[test]
    fn random_gadgets_validate_and_subset_cells_pass_one_vehicle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let sc = SetCoverInstance::random(&mut rng, 5, 5, 3);
            sc.validate().unwrap();
            let inst = build_reduction_network(&sc).unwrap();
            let report = inst.network.validate();
            assert!(report.is_pass(), "{report}");
            for i in 0..sc.subsets.len() {
                assert_eq!(inst.network.cell(&subset_cell_id(i)).unwrap().q, Capacity::Finite(1.0));
            }
            assert_eq!(inst.params.budget, sc.universe.len());
        }
    }

    #[test]
    fn minimum_cover_brute_force() {
        let sc = SetCoverInstance {
            universe: vec!["a".into(), "b".into(), "c".into()],
            subsets: vec![set(&["a"]), set(&["b"]), set(&["c"]), set(&["a", "b"]), set(&["b", "c"])],
            k: 2,
        };
        assert_eq!(sc.minimum_cover().unwrap().len(), 2);
        assert!(sc.has_cover_within_k());
        let tighter = SetCoverInstance { k: 1, ..sc };
        assert!(!tighter.has_cover_within_k());
    }

    #[test]
    fn cover_attack_is_normalized() {
        let sc = SetCoverInstance {
            universe: vec!["a".into(), "b".into()],
            subsets: vec![set(&["a", "b"]), set(&["b"])],
            k: 1,
        };
        let inst = build_reduction_network(&sc).unwrap();
        let atk = cover_attack(&sc, &inst.network, &[0]).unwrap();
        atk.tampered.check(&inst.network).unwrap();
        assert_eq!(atk.tampered.value("u_b", "c00"), Some(1.0));
    }
}
