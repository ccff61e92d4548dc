//! Attacker best responses: the greedy heuristic and exhaustive search.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Attack, DetectorConfig, GainBound, GameEvaluator};
use crate::network::{CellId, Network};
use crate::proportions::Proportions;

/// Default ceiling on the number of attacks exhaustive search may evaluate.
pub const DEFAULT_EVALUATION_CAP: u64 = 2_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSearchResult {
    pub attack: Attack,
    pub gain: f64,
    /// Gain evaluations requested by the search.
    pub evaluations: u64,
    pub wall_time: f64,
}

/// Extreme assignments at `merge`, one per predecessor in id order.
pub fn extreme_assignments(net: &Network, merge: &str) -> Result<Vec<BTreeMap<CellId, f64>>> {
    net.predecessors(merge)
        .into_iter()
        .map(|k| Proportions::extreme(net, merge, k))
        .collect()
}

/// Points of the simplex lattice with `levels` values per predecessor
/// (`0, 1/(levels-1), …, 1`) that sum to one, in lexicographic order.
pub fn lattice_assignments(net: &Network, merge: &str, levels: usize) -> Result<Vec<BTreeMap<CellId, f64>>> {
    if levels < 2 {
        return Err(Error::InvalidInput("grid quantization needs at least 2 levels".into()));
    }
    if !net.is_signalized(merge) {
        return Err(Error::UnknownIntersection(merge.to_owned()));
    }
    let preds = net.predecessors(merge);
    let steps = levels - 1;
    let mut out = Vec::new();
    let mut counts = vec![0usize; preds.len()];
    fn rec(
        pos: usize,
        left: usize,
        steps: usize,
        counts: &mut Vec<usize>,
        preds: &[&str],
        out: &mut Vec<BTreeMap<CellId, f64>>,
    ) {
        if pos + 1 == counts.len() {
            counts[pos] = left;
            out.push(
                preds
                    .iter()
                    .zip(counts.iter())
                    .map(|(k, &c)| (k.to_string(), c as f64 / steps as f64))
                    .collect(),
            );
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            rec(pos + 1, left - c, steps, counts, preds, out);
        }
    }
    rec(0, steps, steps, &mut counts, &preds, &mut out);
    Ok(out)
}

/// Greedy attack search. Each of `budget` rounds starts from the incumbent
/// attack, tries every extreme assignment at every signalized merge, and
/// moves to any candidate whose gain is at least the best seen so far in the
/// round. Candidates are scanned in (merge, predecessor) id order, so among
/// equal gains the last one scanned wins.
pub fn greedy_attack(ev: &GameEvaluator, cfg: &DetectorConfig, budget: usize) -> Result<AttackSearchResult> {
    let start = Instant::now();
    let net = ev.network();
    let mut candidates_per_round: Vec<(String, BTreeMap<CellId, f64>)> = Vec::new();
    for merge in net.signalized() {
        for values in extreme_assignments(net, merge)? {
            candidates_per_round.push((merge.clone(), values));
        }
    }
    let mut incumbent = Attack::empty();
    let mut incumbent_gain = 0.0;
    let mut evaluations = 0u64;
    for _ in 0..budget {
        let candidates: Vec<Attack> = candidates_per_round
            .iter()
            .map(|(merge, values)| incumbent.with(merge, values.clone()))
            .collect();
        let gains: Vec<f64> = candidates
            .par_iter()
            .map(|atk| ev.gain(atk, cfg))
            .collect::<Result<_>>()?;
        evaluations += candidates.len() as u64;
        let mut round_best = (incumbent.clone(), incumbent_gain);
        for (atk, g) in candidates.into_iter().zip(gains) {
            if g >= round_best.1 {
                round_best = (atk, g);
            }
        }
        (incumbent, incumbent_gain) = round_best;
    }
    Ok(AttackSearchResult {
        attack: incumbent,
        gain: incumbent_gain,
        evaluations,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantization {
    ExtremeOnly,
    Grid(usize),
}

impl Quantization {
    fn assignments(self, net: &Network, merge: &str) -> Result<Vec<BTreeMap<CellId, f64>>> {
        match self {
            Quantization::ExtremeOnly => extreme_assignments(net, merge),
            Quantization::Grid(m) => lattice_assignments(net, merge, m),
        }
    }
}

/// Number of attacks with at most `budget` compromised merges, where merge
/// `i` admits `options[i]` assignments.
fn attack_count(options: &[u64], budget: usize) -> u64 {
    // by_size[s] counts attacks on exactly s merges among those seen so far.
    let mut by_size = vec![0u64; budget + 1];
    by_size[0] = 1;
    for &o in options {
        for s in (1..=budget).rev() {
            by_size[s] = by_size[s].saturating_add(by_size[s - 1].saturating_mul(o));
        }
    }
    by_size.iter().fold(0u64, |a, &b| a.saturating_add(b))
}

/// Best attack for every budget `0..=max_budget` from one enumeration of all
/// attacks on at most `max_budget` merges. Attacks are visited by merge
/// subset in lexicographic order; a later attack replaces the incumbent only
/// if its gain is strictly larger.
pub fn exhaustive_attack_all(
    ev: &GameEvaluator,
    cfg: &DetectorConfig,
    max_budget: usize,
    quantization: Quantization,
    cap: u64,
) -> Result<Vec<AttackSearchResult>> {
    let start = Instant::now();
    let net = ev.network();
    let merges: Vec<&CellId> = net.signalized().iter().collect();
    let options: Vec<Vec<BTreeMap<CellId, f64>>> = merges
        .iter()
        .map(|m| quantization.assignments(net, m))
        .collect::<Result<_>>()?;
    let required = attack_count(&options.iter().map(|o| o.len() as u64).collect::<Vec<_>>(), max_budget);
    if required > cap {
        return Err(Error::EvaluationCapExceeded { cap, required });
    }

    let mut attacks: Vec<Attack> = vec![Attack::empty()];
    let mut subset = Vec::new();
    enumerate_attacks(&merges, &options, max_budget, 0, &mut subset, &Attack::empty(), &mut attacks);
    // Solving the attacked program first bounds each gain, so the
    // mitigation program is only solved for attacks that could still beat
    // the incumbent of their size. Chunks keep the parallel work
    // independent of the thread count.
    let bounds: Vec<GainBound> = attacks
        .par_iter()
        .map(|atk| ev.gain_bound(atk, cfg))
        .collect::<Result<_>>()?;
    let mut best: Vec<Option<(usize, f64)>> = vec![None; max_budget + 1];
    const CHUNK: usize = 64;
    for chunk_start in (0..attacks.len()).step_by(CHUNK) {
        let idx: Vec<usize> = (chunk_start..(chunk_start + CHUNK).min(attacks.len())).collect();
        let needed: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&i| match bounds[i] {
                GainBound::Exact(_) => false,
                GainBound::AtMost(ub) => best[attacks[i].compromised.len()].map_or(true, |(_, bg)| ub > bg),
            })
            .collect();
        let solved: Vec<(usize, f64)> = needed
            .par_iter()
            .map(|&i| Ok((i, ev.gain(&attacks[i], cfg)?)))
            .collect::<Result<_>>()?;
        let mut solved = solved.into_iter().peekable();
        for i in idx {
            let g = match bounds[i] {
                GainBound::Exact(g) => g,
                GainBound::AtMost(_) => match solved.peek() {
                    Some(&(j, g)) if j == i => {
                        solved.next();
                        g
                    }
                    // The bound cannot beat the incumbent.
                    _ => continue,
                },
            };
            let size = attacks[i].compromised.len();
            match best[size] {
                Some((_, bg)) if g <= bg => {}
                _ => best[size] = Some((i, g)),
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();

    // Budget b admits every attack of size <= b; keep the earliest maximum.
    let mut out = Vec::with_capacity(max_budget + 1);
    let mut running: (usize, f64) = best[0].expect("empty attack is always enumerated");
    let mut evaluated_upto = 0u64;
    let mut by_size = vec![0u64; max_budget + 1];
    for atk in &attacks {
        by_size[atk.compromised.len()] += 1;
    }
    for b in 0..=max_budget {
        if let Some((idx, g)) = best[b] {
            if g > running.1 || (g == running.1 && idx < running.0) {
                running = (idx, g);
            }
        }
        evaluated_upto += by_size[b];
        out.push(AttackSearchResult {
            attack: attacks[running.0].clone(),
            gain: running.1,
            evaluations: evaluated_upto,
            wall_time: elapsed,
        });
    }
    Ok(out)
}

fn enumerate_attacks(
    merges: &[&CellId],
    options: &[Vec<BTreeMap<CellId, f64>>],
    max_budget: usize,
    from: usize,
    subset: &mut Vec<usize>,
    current: &Attack,
    out: &mut Vec<Attack>,
) {
    if subset.len() == max_budget {
        return;
    }
    for i in from..merges.len() {
        subset.push(i);
        for values in &options[i] {
            let next = current.with(merges[i], values.clone());
            out.push(next.clone());
            enumerate_attacks(merges, options, max_budget, i + 1, subset, &next, out);
        }
        subset.pop();
    }
}

/// Exhaustive search for a single budget.
pub fn exhaustive_attack(
    ev: &GameEvaluator,
    cfg: &DetectorConfig,
    budget: usize,
    quantization: Quantization,
    cap: u64,
) -> Result<AttackSearchResult> {
    let mut all = exhaustive_attack_all(ev, cfg, budget, quantization, cap)?;
    Ok(all.pop().expect("at least the empty budget"))
}
