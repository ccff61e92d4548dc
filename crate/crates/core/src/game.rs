//! Payoffs of the attack, detection and mitigation game.
//!
//! Congestion levels are total travel times from the traffic LP in
//! vehicle-intervals and delays are minutes, so gains are in
//! vehicle-interval-minutes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::ctm_lp::TrafficModel;
use crate::error::{Error, Result};
use crate::network::{CellId, Network};
use crate::proportions::{total_variation, Proportions};

/// Delay assigned to attacks that no detector notices.
pub const DEFAULT_MAX_DELAY_MIN: f64 = 1440.0;

/// Detection delay as a function of false-positive rate and attack
/// magnitude, sampled on a grid and interpolated bilinearly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorCharacteristic {
    /// Strictly increasing false-positive rates (alarms per month).
    pub fp_rates: Vec<f64>,
    /// Strictly increasing magnitudes in [0, 1].
    pub magnitudes: Vec<f64>,
    /// `delays[i][j]` is the delay at `fp_rates[i]` and `magnitudes[j]`.
    pub delays: Vec<Vec<f64>>,
    pub max_delay: f64,
}

impl DetectorCharacteristic {
    /// A flat characteristic: every attack is detected after `minutes`.
    pub fn constant(minutes: f64) -> Self {
        DetectorCharacteristic {
            fp_rates: vec![0.0, 1e6],
            magnitudes: vec![0.0, 1.0],
            delays: vec![vec![minutes; 2]; 2],
            max_delay: minutes,
        }
    }

    /// Power-law curve anchored at one hour for a 4.4% attack at 0.1 alarms
    /// per month, capped at one day:
    ///
    /// ```text
    /// delay(D, m) = 60 · (D / 0.1)^-0.277 · (m / 0.044)^-0.5
    /// ```
    pub fn default_curve() -> Self {
        let fp_rates = vec![0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0];
        let magnitudes = vec![0.0, 0.01, 0.02, 0.044, 0.1, 0.25, 0.5, 0.75, 1.0];
        let max_delay = DEFAULT_MAX_DELAY_MIN;
        let delays = fp_rates
            .iter()
            .map(|&d: &f64| {
                magnitudes
                    .iter()
                    .map(|&m: &f64| {
                        if m == 0.0 {
                            max_delay
                        } else {
                            (60.0 * (d / 0.1).powf(-0.277) * (m / 0.044).powf(-0.5)).min(max_delay)
                        }
                    })
                    .collect()
            })
            .collect();
        DetectorCharacteristic {
            fp_rates,
            magnitudes,
            delays,
            max_delay,
        }
    }

    pub fn fp_domain(&self) -> (f64, f64) {
        (self.fp_rates[0], *self.fp_rates.last().expect("validated"))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("detector characteristic: {m}")));
        if self.fp_rates.is_empty() || self.magnitudes.is_empty() {
            return bad("empty grid");
        }
        if self.fp_rates.windows(2).any(|w| w[0] >= w[1]) || self.fp_rates[0] < 0.0 {
            return bad("fp rates must be nonnegative and strictly increasing");
        }
        if self.magnitudes.windows(2).any(|w| w[0] >= w[1])
            || self.magnitudes[0] < 0.0
            || *self.magnitudes.last().unwrap() > 1.0
        {
            return bad("magnitudes must be strictly increasing within [0, 1]");
        }
        if self.delays.len() != self.fp_rates.len() || self.delays.iter().any(|r| r.len() != self.magnitudes.len()) {
            return bad("delay table shape does not match the grid");
        }
        if !(self.max_delay >= 0.0) {
            return bad("max_delay must be nonnegative");
        }
        for row in &self.delays {
            if row.iter().any(|&v| !(0.0..=self.max_delay).contains(&v)) {
                return bad("delays must lie in [0, max_delay]");
            }
            if row.windows(2).any(|w| w[1] > w[0] + 1e-9) {
                return bad("delay must not increase with magnitude");
            }
        }
        for j in 0..self.magnitudes.len() {
            if self.delays.windows(2).any(|w| w[1][j] > w[0][j] + 1e-9) {
                return bad("delay must not increase with fp rate");
            }
        }
        Ok(())
    }

    /// Interpolated delay. Magnitude 0 always maps to `max_delay`; the fp
    /// rate must lie in the table domain, magnitude is clamped.
    pub fn delay(&self, fp_rate: f64, magnitude: f64) -> Result<f64> {
        let (lo, hi) = self.fp_domain();
        if !(fp_rate >= lo - 1e-12 && fp_rate <= hi + 1e-12) {
            return Err(Error::RateOutOfDomain {
                rate: fp_rate,
                min: lo,
                max: hi,
            });
        }
        if magnitude <= 0.0 {
            return Ok(self.max_delay);
        }
        let (i0, i1, u) = bracket(&self.fp_rates, fp_rate);
        let (j0, j1, v) = bracket(&self.magnitudes, magnitude.min(1.0));
        let d = &self.delays;
        let value = (1.0 - u) * (1.0 - v) * d[i0][j0]
            + u * (1.0 - v) * d[i1][j0]
            + (1.0 - u) * v * d[i0][j1]
            + u * v * d[i1][j1];
        Ok(value.clamp(0.0, self.max_delay))
    }
}

/// Neighbouring grid indices and the interpolation weight of the upper one,
/// clamping outside the grid.
fn bracket(grid: &[f64], x: f64) -> (usize, usize, f64) {
    let last = grid.len() - 1;
    if x <= grid[0] {
        return (0, 0, 0.0);
    }
    if x >= grid[last] {
        return (last, last, 0.0);
    }
    let hi = grid.partition_point(|&g| g <= x);
    let lo = hi - 1;
    (lo, hi, (x - grid[lo]) / (grid[hi] - grid[lo]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    #[serde(rename = "B")]
    pub budget: usize,
    #[serde(rename = "C")]
    pub false_alarm_cost: f64,
    #[serde(rename = "delta_M")]
    pub mitigation_minutes: f64,
    pub detectors: Vec<CellId>,
    pub characteristic: DetectorCharacteristic,
}

impl GameParams {
    /// Detectors at every signalized merge with the default curve.
    pub fn for_network(net: &Network, budget: usize, false_alarm_cost: f64, mitigation_minutes: f64) -> Self {
        GameParams {
            budget,
            false_alarm_cost,
            mitigation_minutes,
            detectors: net.signalized().to_vec(),
            characteristic: DetectorCharacteristic::default_curve(),
        }
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        if !(self.false_alarm_cost >= 0.0) || !(self.mitigation_minutes >= 0.0) {
            return Err(Error::InvalidInput("C and delta_M must be nonnegative".into()));
        }
        if let Some(d) = self.detectors.iter().find(|d| !net.is_signalized(d)) {
            return Err(Error::UnknownIntersection(d.clone()));
        }
        self.characteristic.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Attack {
    pub compromised: BTreeSet<CellId>,
    pub tampered: Proportions,
}

impl Attack {
    pub fn new(compromised: BTreeSet<CellId>, tampered: Proportions) -> Result<Self> {
        let keys: BTreeSet<CellId> = tampered.merges().map(str::to_owned).collect();
        if keys != compromised {
            return Err(Error::InvalidInput(
                "tampered proportions must cover exactly the compromised intersections".into(),
            ));
        }
        Ok(Attack { compromised, tampered })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.compromised.is_empty()
    }

    /// `self` with intersection `merge` set to `values`.
    pub fn with(&self, merge: &str, values: BTreeMap<CellId, f64>) -> Attack {
        let mut out = self.clone();
        out.compromised.insert(merge.to_owned());
        out.tampered.set(merge, values);
        out
    }

    pub fn check(&self, net: &Network, budget: usize) -> Result<()> {
        if self.compromised.len() > budget {
            return Err(Error::InvalidInput(format!(
                "attack compromises {} intersections, budget is {budget}",
                self.compromised.len()
            )));
        }
        self.tampered.check(net)?;
        let keys: BTreeSet<&str> = self.tampered.merges().collect();
        if keys != self.compromised.iter().map(String::as_str).collect() {
            return Err(Error::InvalidInput("tampered proportions do not match compromised set".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("attack serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let atk: Attack = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Attack::new(atk.compromised, atk.tampered)
    }
}

/// False-positive rate per monitored intersection.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub rates: BTreeMap<CellId, f64>,
}

impl DetectorConfig {
    pub fn uniform(detectors: &[CellId], rate: f64) -> Self {
        DetectorConfig {
            rates: detectors.iter().map(|d| (d.clone(), rate)).collect(),
        }
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.values().sum()
    }

    pub fn validate(&self, params: &GameParams) -> Result<()> {
        let (lo, hi) = params.characteristic.fp_domain();
        for d in &params.detectors {
            let rate = *self
                .rates
                .get(d)
                .ok_or_else(|| Error::InvalidInput(format!("no false-positive rate for detector {d}")))?;
            if !(rate >= lo && rate <= hi) {
                return Err(Error::RateOutOfDomain { rate, min: lo, max: hi });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Total-variation distance between tampered and default proportions at `i`,
/// or 0 if `i` is not compromised.
pub fn attack_magnitude(net: &Network, default: &Proportions, atk: &Attack, i: &str) -> Result<f64> {
    if !net.is_signalized(i) {
        return Err(Error::UnknownIntersection(i.to_owned()));
    }
    match (atk.tampered.get(i), default.get(i)) {
        (Some(t), Some(d)) => Ok(total_variation(t, d)),
        (Some(_), None) => Err(Error::InvalidInput(format!("no default proportions for {i}"))),
        (None, _) => Ok(0.0),
    }
}

/// Earliest alarm across all detectors, in minutes.
pub fn detection_delay(
    params: &GameParams,
    cfg: &DetectorConfig,
    net: &Network,
    default: &Proportions,
    atk: &Attack,
) -> Result<f64> {
    let mut best = params.characteristic.max_delay;
    for d in &params.detectors {
        let rate = *cfg
            .rates
            .get(d)
            .ok_or_else(|| Error::InvalidInput(format!("no false-positive rate for detector {d}")))?;
        let m = attack_magnitude(net, default, atk, d)?;
        best = best.min(params.characteristic.delay(rate, m)?);
    }
    Ok(best)
}

fn attack_key(atk: &Attack) -> String {
    serde_json::to_string(&atk.tampered).expect("proportions serialize")
}

pub fn attacker_gain(t: f64, t_a: f64, t_m: f64, delta_d: f64, params: &GameParams) -> f64 {
    (t_a - t) * delta_d + (t_m - t) * params.mitigation_minutes
}

pub fn defender_loss(gain: f64, cfg: &DetectorConfig, params: &GameParams) -> f64 {
    gain + cfg.total_rate() * params.false_alarm_cost
}

/// Defender's mitigation: the system-optimal control with the compromised
/// signals held at their tampered proportions.
pub fn best_response_mitigation(model: &TrafficModel, atk: &Attack, horizon: usize) -> Result<(Proportions, f64)> {
    let (props, tt) = model.system_optimal_control(&atk.tampered, horizon)?;
    Ok((props, tt.value()))
}

/// Congestion levels of one attack; independent of the detector configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Congestion {
    pub t: f64,
    pub t_a: f64,
    /// Mitigated travel time, clamped to `[T, max(T, T_A)]`.
    pub t_m: f64,
    /// Unclamped optimum of the mitigation program. Freeing the unattacked
    /// signals can beat the default schedule, so this may fall below `T`.
    pub t_m_raw: f64,
    pub horizon: usize,
    /// The attacked network could not drain within the horizon cap.
    pub blocked: bool,
}

impl Congestion {
    pub fn new(t: f64, t_a: f64, t_m_raw: f64, horizon: usize, blocked: bool) -> Self {
        Congestion {
            t,
            t_a,
            t_m: t_m_raw.clamp(t, t.max(t_a)),
            t_m_raw,
            horizon,
            blocked,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub congestion: Congestion,
    pub delta_d: f64,
    pub gain: f64,
}

/// Evaluates gains for many attacks against one network and default
/// schedule, caching LP results.
///
/// Each attack is solved at the shortest horizon, searched upward from the
/// default schedule's, at which the attacked network drains. Travel times
/// do not depend on the horizon once the network drains, so comparing
/// levels from different horizons is sound. If the attacked network cannot
/// drain below the cap, its level is the blocking level
/// `total_demand · h_max`.
pub struct GameEvaluator {
    model: TrafficModel,
    default: Proportions,
    params: GameParams,
    base_horizon: usize,
    baseline: Mutex<BTreeMap<usize, f64>>,
    levels: Mutex<HashMap<String, AttackedLevel>>,
    cache: Mutex<HashMap<String, Congestion>>,
    calls: AtomicU64,
}

/// Travel time under an attack before any mitigation.
#[derive(Clone, Copy, Debug, PartialEq)]
struct AttackedLevel {
    t_a: f64,
    horizon: usize,
    blocked: bool,
}

/// What is known about an attack's gain after solving only the attacked
/// program.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GainBound {
    Exact(f64),
    AtMost(f64),
}

impl GameEvaluator {
    pub fn new(model: TrafficModel, default: Proportions, params: GameParams) -> Result<Self> {
        default.check_complete(model.network())?;
        params.validate(model.network())?;
        let base_horizon = model.tight_horizon_with(&default, model.horizon_lower_bound())?;
        Ok(GameEvaluator {
            model,
            default,
            params,
            base_horizon,
            baseline: Mutex::new(BTreeMap::new()),
            levels: Mutex::new(HashMap::new()),
            cache: Mutex::new(HashMap::new()),
            calls: AtomicU64::new(0),
        })
    }

    pub fn model(&self) -> &TrafficModel {
        &self.model
    }

    pub fn network(&self) -> &Network {
        self.model.network()
    }

    pub fn default_proportions(&self) -> &Proportions {
        &self.default
    }

    pub fn params(&self) -> &GameParams {
        &self.params
    }

    pub fn base_horizon(&self) -> usize {
        self.base_horizon
    }

    /// Number of gain evaluations requested so far (cache hits included).
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset_calls(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    /// Travel time under the default schedule at horizon `h`.
    pub fn baseline(&self, h: usize) -> Result<f64> {
        if let Some(&t) = self.baseline.lock().unwrap().get(&h) {
            return Ok(t);
        }
        let (tt, _) = self.model.total_travel_time(&self.default, h)?;
        self.baseline.lock().unwrap().insert(h, tt.value());
        Ok(tt.value())
    }

    pub fn blocking_level(&self) -> f64 {
        self.network().total_demand() * self.model.h_max() as f64
    }

    pub fn congestion(&self, atk: &Attack) -> Result<Congestion> {
        let key = attack_key(atk);
        if let Some(&c) = self.cache.lock().unwrap().get(&key) {
            return Ok(c);
        }
        let t = self.baseline(self.base_horizon)?;
        let level = self.attacked_level(atk)?;
        let t_m = self.mitigated_level(atk, &level)?;
        let c = Congestion::new(t, level.t_a, t_m, level.horizon, level.blocked);
        self.cache.lock().unwrap().insert(key, c);
        Ok(c)
    }

    fn attacked_level(&self, atk: &Attack) -> Result<AttackedLevel> {
        let key = attack_key(atk);
        if let Some(&l) = self.levels.lock().unwrap().get(&key) {
            return Ok(l);
        }
        let attacked = self.default.overlay(&atk.tampered);
        let solved = if self.model.can_drain(&attacked)? {
            match self.model.solve_tight(&attacked, self.base_horizon) {
                Ok(found) => Some(found),
                Err(Error::HorizonExceeded { .. }) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        let level = match solved {
            Some((horizon, t_a)) => AttackedLevel {
                t_a: t_a.value(),
                horizon,
                blocked: false,
            },
            None => AttackedLevel {
                t_a: self.blocking_level(),
                horizon: self.model.h_max(),
                blocked: true,
            },
        };
        self.levels.lock().unwrap().insert(key, level);
        Ok(level)
    }

    fn mitigated_level(&self, atk: &Attack, level: &AttackedLevel) -> Result<f64> {
        if !level.blocked {
            // Freeing the other signals only relaxes the attacked program,
            // so mitigation is feasible at the same horizon.
            return Ok(best_response_mitigation(&self.model, atk, level.horizon)?.1);
        }
        if !self.model.can_drain(&atk.tampered)? {
            return Ok(self.blocking_level());
        }
        match self.model.tight_horizon_with(&atk.tampered, self.base_horizon) {
            Ok(h) => Ok(best_response_mitigation(&self.model, atk, h)?.1),
            Err(Error::HorizonExceeded { .. }) => Ok(self.blocking_level()),
            Err(e) => Err(e),
        }
    }

    /// Bounds the gain using only the attacked program. Since the
    /// mitigated level lies in `[T, max(T, T_A)]`, the gain is exact when
    /// `T_A <= T` and at most `(T_A - T)(Δ_D + Δ_M)` otherwise. Does not
    /// count as an oracle call.
    pub fn gain_bound(&self, atk: &Attack, cfg: &DetectorConfig) -> Result<GainBound> {
        if atk.is_empty() {
            return Ok(GainBound::Exact(0.0));
        }
        if let Some(c) = self.cache.lock().unwrap().get(&attack_key(atk)) {
            let delta_d = detection_delay(&self.params, cfg, self.network(), &self.default, atk)?;
            return Ok(GainBound::Exact(attacker_gain(c.t, c.t_a, c.t_m, delta_d, &self.params)));
        }
        let t = self.baseline(self.base_horizon)?;
        let level = self.attacked_level(atk)?;
        let delta_d = detection_delay(&self.params, cfg, self.network(), &self.default, atk)?;
        let rise = level.t_a - t;
        Ok(if rise <= 0.0 {
            GainBound::Exact(attacker_gain(t, level.t_a, t, delta_d, &self.params))
        } else {
            GainBound::AtMost(rise * (delta_d + self.params.mitigation_minutes))
        })
    }

    /// Attacker gain against `cfg` with the defender's best-response
    /// mitigation. The empty attack has gain 0.
    pub fn evaluate(&self, atk: &Attack, cfg: &DetectorConfig) -> Result<Evaluation> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if atk.is_empty() {
            let t = self.baseline(self.base_horizon)?;
            return Ok(Evaluation {
                congestion: Congestion::new(t, t, t, self.base_horizon, false),
                delta_d: self.params.characteristic.max_delay,
                gain: 0.0,
            });
        }
        let congestion = self.congestion(atk)?;
        let delta_d = detection_delay(&self.params, cfg, self.network(), &self.default, atk)?;
        let gain = attacker_gain(congestion.t, congestion.t_a, congestion.t_m, delta_d, &self.params);
        Ok(Evaluation {
            congestion,
            delta_d,
            gain,
        })
    }

    pub fn gain(&self, atk: &Attack, cfg: &DetectorConfig) -> Result<f64> {
        Ok(self.evaluate(atk, cfg)?.gain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Capacity, Cell, CellKind};

    fn two_way_merge() -> Network {
        let f = Capacity::Finite;
        let cells = vec![
            Cell::new("s1", CellKind::Source, f(4.0), Capacity::Unbounded, 1.0).with_demand(vec![4.0]),
            Cell::new("s2", CellKind::Source, f(4.0), Capacity::Unbounded, 1.0).with_demand(vec![4.0]),
            Cell::new("a1", CellKind::Ordinary, f(4.0), f(8.0), 1.0),
            Cell::new("a2", CellKind::Ordinary, f(4.0), f(8.0), 1.0),
            Cell::new("m", CellKind::Merging, f(4.0), f(8.0), 1.0),
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
    fn magnitude_is_total_variation() {
        let net = two_way_merge();
        let default = Proportions::uniform(&net);
        assert_eq!(attack_magnitude(&net, &default, &Attack::empty(), "m").unwrap(), 0.0);
        let atk = Attack::empty().with("m", Proportions::extreme(&net, "m", "a1").unwrap());
        assert!((attack_magnitude(&net, &default, &atk, "m").unwrap() - 0.5).abs() < 1e-12);
        let same = Attack::empty().with("m", default.get("m").unwrap().clone());
        assert_eq!(attack_magnitude(&net, &default, &same, "m").unwrap(), 0.0);
        assert!(attack_magnitude(&net, &default, &atk, "a1").is_err());
    }

    #[test]
    fn gain_and_loss_arithmetic() {
        let mut params = GameParams::for_network(&two_way_merge(), 1, 10.0, 20.0);
        assert_eq!(attacker_gain(100.0, 100.0, 100.0, 60.0, &params), 0.0);
        assert_eq!(attacker_gain(100.0, 150.0, 110.0, 60.0, &params), 3200.0);
        params.mitigation_minutes = 0.0;
        assert_eq!(attacker_gain(100.0, 150.0, 110.0, 60.0, &params), 3000.0);
        params.detectors = vec!["a".into(), "b".into()];
        let cfg = DetectorConfig::uniform(&params.detectors, 1.0);
        assert_eq!(defender_loss(3200.0, &cfg, &params), 3220.0);
        assert_eq!(defender_loss(0.0, &DetectorConfig::uniform(&params.detectors, 0.0), &params), 0.0);
    }

    #[test]
    fn default_curve_matches_anchor_and_is_monotone() {
        let c = DetectorCharacteristic::default_curve();
        c.validate().unwrap();
        let d = c.delay(0.1, 0.044).unwrap();
        assert!((d - 60.0).abs() < 1e-9, "{d}");
        assert_eq!(c.delay(5.0, 0.0).unwrap(), 1440.0);
        assert!(c.delay(0.05, 0.1).is_err());
        assert!(c.delay(2000.0, 0.1).is_err());
        for &m in &[0.003, 0.03, 0.2, 0.6] {
            let mut prev = f64::INFINITY;
            for i in 0..200 {
                let fp = 0.1 * 10f64.powf(i as f64 * 4.0 / 199.0);
                let v = c.delay(fp.min(1000.0), m).unwrap();
                assert!(v <= prev + 1e-9);
                prev = v;
            }
        }
    }

    #[test]
    fn detection_uses_the_fastest_detector() {
        let net = two_way_merge();
        let default = Proportions::uniform(&net);
        let mut params = GameParams::for_network(&net, 1, 0.0, 0.0);
        params.characteristic = DetectorCharacteristic {
            fp_rates: vec![0.0, 10.0],
            magnitudes: vec![0.0, 1.0],
            delays: vec![vec![100.0, 50.0], vec![100.0, 30.0]],
            max_delay: 100.0,
        };
        let atk = Attack::empty().with("m", Proportions::extreme(&net, "m", "a1").unwrap());
        let cfg = DetectorConfig::uniform(&params.detectors, 10.0);
        // Magnitude 0.5 at fp 10 interpolates between 100 and 30.
        assert!((detection_delay(&params, &cfg, &net, &default, &atk).unwrap() - 65.0).abs() < 1e-9);
        assert_eq!(detection_delay(&params, &cfg, &net, &default, &Attack::empty()).unwrap(), 100.0);
    }

    #[test]
    fn attack_construction_checks_keys() {
        let net = two_way_merge();
        let mut p = Proportions::new();
        p.set("m", Proportions::extreme(&net, "m", "a2").unwrap());
        assert!(Attack::new(BTreeSet::new(), p.clone()).is_err());
        let atk = Attack::new(["m".to_owned()].into(), p).unwrap();
        atk.check(&net, 1).unwrap();
        assert!(atk.check(&net, 0).is_err());
        let back = Attack::from_json(&atk.to_json()).unwrap();
        assert_eq!(back, atk);
    }

    #[test]
    fn evaluator_orders_congestion_levels() {
        let net = two_way_merge();
        let model = TrafficModel::new(&net).unwrap();
        let default = Proportions::uniform(&net);
        let params = GameParams::for_network(&net, 1, 10.0, 20.0);
        let ev = GameEvaluator::new(model, default, params).unwrap();
        let cfg = DetectorConfig::uniform(&ev.params().detectors, 1.0);
        assert_eq!(ev.gain(&Attack::empty(), &cfg).unwrap(), 0.0);
        let skew = Attack::empty().with(
            "m",
            [("a1".to_owned(), 0.8), ("a2".to_owned(), 0.2)].into_iter().collect(),
        );
        let e = ev.evaluate(&skew, &cfg).unwrap();
        let c = e.congestion;
        assert!(!c.blocked);
        assert!(c.t <= c.t_m + 1e-9 && c.t_m <= c.t_a + 1e-9, "{c:?}");
        assert!(c.t_a > c.t);
        assert!(e.gain > 0.0);
        assert_eq!(ev.calls(), 2);
    }

    #[test]
    fn params_json_keys() {
        let net = two_way_merge();
        let params = GameParams::for_network(&net, 2, 10.0, 20.0);
        let text = params.to_json();
        assert!(text.contains("\"B\": 2") && text.contains("\"delta_M\""));
        assert_eq!(GameParams::from_json(&text).unwrap(), params);
    }
}
