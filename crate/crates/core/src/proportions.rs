//! Inflow proportions at signalized merges.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{CellId, Network};

pub const NORMALIZATION_TOL: f64 = 1e-9;

/// `p[merge][predecessor]`, for a subset of the signalized merges.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Proportions(BTreeMap<CellId, BTreeMap<CellId, f64>>);

impl Proportions {
    pub fn new() -> Self {
        Self::default()
    }

    /// Equal split over predecessors at every signalized merge.
    pub fn uniform(net: &Network) -> Self {
        let mut p = Proportions::new();
        for (merge, preds) in net.signal_approaches() {
            let share = 1.0 / preds.len() as f64;
            p.0.insert(
                merge.to_owned(),
                preds.into_iter().map(|k| (k.to_owned(), share)).collect(),
            );
        }
        p
    }

    /// All of `merge`'s capacity goes to `pred`.
    pub fn extreme(net: &Network, merge: &str, pred: &str) -> Result<BTreeMap<CellId, f64>> {
        let preds = net.predecessors(merge);
        if !net.is_signalized(merge) {
            return Err(Error::UnknownIntersection(merge.to_owned()));
        }
        if !preds.contains(&pred) {
            return Err(Error::InvalidInput(format!("{pred} is not a predecessor of {merge}")));
        }
        Ok(preds
            .into_iter()
            .map(|k| (k.to_owned(), if k == pred { 1.0 } else { 0.0 }))
            .collect())
    }

    pub fn get(&self, merge: &str) -> Option<&BTreeMap<CellId, f64>> {
        self.0.get(merge)
    }

    pub fn value(&self, merge: &str, pred: &str) -> Option<f64> {
        self.0.get(merge).and_then(|m| m.get(pred)).copied()
    }

    pub fn contains(&self, merge: &str) -> bool {
        self.0.contains_key(merge)
    }

    pub fn merges(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellId, &BTreeMap<CellId, f64>)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Replaces the assignment at `merge`. The caller is responsible for
    /// normalization; [`Proportions::check`] verifies it.
    pub fn set(&mut self, merge: impl Into<CellId>, values: BTreeMap<CellId, f64>) {
        self.0.insert(merge.into(), values);
    }

    pub fn remove(&mut self, merge: &str) -> Option<BTreeMap<CellId, f64>> {
        self.0.remove(merge)
    }

    /// Restriction to the given merges.
    pub fn restrict<'a>(&self, merges: impl IntoIterator<Item = &'a str>) -> Proportions {
        let mut out = Proportions::new();
        for m in merges {
            if let Some(v) = self.0.get(m) {
                out.0.insert(m.to_owned(), v.clone());
            }
        }
        out
    }

    /// `self` with every assignment of `other` laid on top.
    pub fn overlay(&self, other: &Proportions) -> Proportions {
        let mut out = self.clone();
        for (m, v) in &other.0 {
            out.0.insert(m.clone(), v.clone());
        }
        out
    }

    /// Checks that every merge is signalized, every key is a predecessor,
    /// values lie in [0, 1], every predecessor is present, and sums are 1.
    pub fn check(&self, net: &Network) -> Result<()> {
        for (merge, values) in &self.0 {
            if !net.is_signalized(merge) {
                return Err(Error::UnknownIntersection(merge.clone()));
            }
            let preds = net.predecessors(merge);
            for k in values.keys() {
                if !preds.contains(&k.as_str()) {
                    return Err(Error::InvalidInput(format!("{k} is not a predecessor of {merge}")));
                }
            }
            for k in &preds {
                if !values.contains_key(*k) {
                    return Err(Error::InvalidInput(format!("missing proportion for {k} -> {merge}")));
                }
            }
            if values.values().any(|v| !(-NORMALIZATION_TOL..=1.0 + NORMALIZATION_TOL).contains(v)) {
                return Err(Error::InvalidInput(format!("proportion outside [0, 1] at {merge}")));
            }
            let sum: f64 = values.values().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::NotNormalized {
                    cell: merge.clone(),
                    sum,
                });
            }
        }
        Ok(())
    }

    /// Like [`Proportions::check`] and additionally requires every signalized
    /// merge to be present.
    pub fn check_complete(&self, net: &Network) -> Result<()> {
        self.check(net)?;
        for s in net.signalized() {
            if !self.0.contains_key(s) {
                return Err(Error::InvalidInput(format!("no proportions for signalized merge {s}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("proportions serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Total-variation distance between two proportion vectors over the same keys.
pub fn total_variation(a: &BTreeMap<CellId, f64>, b: &BTreeMap<CellId, f64>) -> f64 {
    let mut sum = 0.0;
    for (k, va) in a {
        sum += (va - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, vb) in b {
        if !a.contains_key(k) {
            sum += vb.abs();
        }
    }
    (0.5 * sum).clamp(0.0, 1.0)
}
