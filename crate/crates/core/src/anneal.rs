//! Defender configuration search by simulated annealing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{DetectorConfig, GameParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealParams {
    pub k_max: usize,
    /// Initial temperature; `t0_fraction` times the loss of the starting
    /// configuration if unset.
    pub t0: Option<f64>,
    #[serde(default = "default_t0_fraction")]
    pub t0_fraction: f64,
    /// Cooling rate; `5 / k_max` if unset.
    pub beta: Option<f64>,
    pub epsilon: f64,
    pub seed: u64,
}

/// At the full initial loss the chain wanders for most of its budget
/// before settling; a hundredth of it converges within a few hundred
/// iterations and ends lower.
fn default_t0_fraction() -> f64 {
    0.01
}

impl Default for AnnealParams {
    fn default() -> Self {
        AnnealParams {
            k_max: 2000,
            t0: None,
            t0_fraction: default_t0_fraction(),
            beta: None,
            epsilon: 0.1,
            seed: 0,
        }
    }
}

impl AnnealParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(t0) = self.t0 {
            if !(t0 > 0.0) {
                return Err(Error::InvalidInput("T0 must be positive".into()));
            }
        }
        if !(self.t0_fraction > 0.0) {
            return Err(Error::InvalidInput("T0 fraction must be positive".into()));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0) {
                return Err(Error::InvalidInput("beta must be positive".into()));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidInput("epsilon must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn beta_or_default(&self) -> f64 {
        self.beta.unwrap_or(5.0 / self.k_max.max(1) as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub best_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealOutcome {
    pub config: DetectorConfig,
    pub loss: f64,
    pub trace: Vec<TraceRow>,
}

/// Draws every rate uniformly from `[D(1-ε), D(1+ε)]` and clamps it to
/// `[lo, hi]`.
pub fn perturb<R: Rng>(cfg: &DetectorConfig, epsilon: f64, bounds: (f64, f64), rng: &mut R) -> DetectorConfig {
    DetectorConfig {
        rates: cfg
            .rates
            .iter()
            .map(|(k, &d)| (k.clone(), perturb_rate(d, epsilon, bounds, rng)))
            .collect(),
    }
}

fn perturb_rate<R: Rng>(d: f64, epsilon: f64, (lo, hi): (f64, f64), rng: &mut R) -> f64 {
    let (a, b) = (d * (1.0 - epsilon), d * (1.0 + epsilon));
    let v = if b > a { rng.gen_range(a..=b) } else { d };
    v.clamp(lo, hi)
}

/// `max_A 𝒢(D, A) + C · Σ D_i`.
pub fn defender_loss_with<F>(cfg: &DetectorConfig, params: &GameParams, best_gain: &F) -> Result<f64>
where
    F: Fn(&DetectorConfig) -> Result<f64>,
{
    Ok(best_gain(cfg)? + cfg.total_rate() * params.false_alarm_cost)
}

/// Core annealing loop over an arbitrary state, shared by the full and the
/// uniform search. Worse moves are accepted with probability
/// `exp(-(L' - L) / T)` at temperature `T = T0 · exp(-β k)`.
fn anneal_loop<S: Clone, P, L>(
    start: S,
    ap: &AnnealParams,
    mut perturb: P,
    loss: L,
) -> Result<(S, f64, Vec<TraceRow>)>
where
    P: FnMut(&S, &mut ChaCha8Rng) -> S,
    L: Fn(&S) -> Result<f64>,
{
    ap.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(ap.seed);
    let mut current = start;
    let mut current_loss = loss(&current)?;
    let mut best = (current.clone(), current_loss);
    let t0 = ap.t0.unwrap_or((ap.t0_fraction * current_loss.abs()).max(1e-9));
    let beta = ap.beta_or_default();
    let mut trace = Vec::with_capacity(ap.k_max + 1);
    trace.push(TraceRow {
        iteration: 0,
        loss: current_loss,
        best_loss: current_loss,
    });
    for k in 1..=ap.k_max {
        let candidate = perturb(&current, &mut rng);
        let candidate_loss = loss(&candidate)?;
        let temperature = t0 * (-beta * k as f64).exp();
        let u: f64 = rng.gen();
        let accept = candidate_loss < current_loss || u <= (-(candidate_loss - current_loss) / temperature).exp();
        if accept {
            current = candidate;
            current_loss = candidate_loss;
            if current_loss < best.1 {
                best = (current.clone(), current_loss);
            }
        }
        trace.push(TraceRow {
            iteration: k,
            loss: current_loss,
            best_loss: best.1,
        });
    }
    Ok((best.0, best.1, trace))
}

/// Anneals the full false-positive-rate vector, starting from all ones.
/// `best_gain` is the attacker's best response for a configuration.
/// Returns the best configuration seen.
pub fn anneal_config<F>(params: &GameParams, ap: &AnnealParams, best_gain: F) -> Result<AnnealOutcome>
where
    F: Fn(&DetectorConfig) -> Result<f64>,
{
    let bounds = params.characteristic.fp_domain();
    let start = DetectorConfig::uniform(&params.detectors, 1.0_f64.clamp(bounds.0, bounds.1));
    let (config, loss, trace) = anneal_loop(
        start,
        ap,
        |cfg, rng| perturb(cfg, ap.epsilon, bounds, rng),
        |cfg| defender_loss_with(cfg, params, &best_gain),
    )?;
    Ok(AnnealOutcome { config, loss, trace })
}

/// Anneals a single rate shared by every detector.
pub fn uniform_config_search<F>(params: &GameParams, ap: &AnnealParams, best_gain: F) -> Result<AnnealOutcome>
where
    F: Fn(&DetectorConfig) -> Result<f64>,
{
    let bounds = params.characteristic.fp_domain();
    let detectors = &params.detectors;
    let (rate, loss, trace) = anneal_loop(
        1.0_f64.clamp(bounds.0, bounds.1),
        ap,
        |&d, rng| perturb_rate(d, ap.epsilon, bounds, rng),
        |&d| defender_loss_with(&DetectorConfig::uniform(detectors, d), params, &best_gain),
    )?;
    Ok(AnnealOutcome {
        config: DetectorConfig::uniform(detectors, rate),
        loss,
        trace,
    })
}
