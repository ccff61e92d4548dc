//! A stochastic model of one signalized four-way intersection.
//!
//! Each approach has two FIFO queues: through-and-right, and left. Vehicles
//! arrive as independent Poisson streams, and a queue discharges one vehicle
//! per saturation headway while its movement is green. Yellow phases
//! discharge nothing. Because no two queues share a green, every queue can be
//! simulated on its own.
//!
//! Sensors sit on the incoming lane of each leg (counting vehicles crossing
//! the stop line) and on the outgoing lane (counting vehicles leaving the
//! intersection onto that leg).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::TrafficTrace;

pub const MEASUREMENT_INTERVAL_S: f64 = 15.0;
pub const DEFAULT_SATURATION_RATE: f64 = 0.5;
/// Seconds from the stop line to the outgoing sensor.
pub const CROSSING_TIME_S: f64 = 2.0;

/// Legs in clockwise order; sensor columns follow this order.
pub const LEGS: [&str; 4] = ["east", "south", "west", "north"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Road {
    EastWest,
    NorthSouth,
}

impl Road {
    fn of_leg(leg: usize) -> Road {
        if leg % 2 == 0 {
            Road::EastWest
        } else {
            Road::NorthSouth
        }
    }

    pub fn other(self) -> Road {
        match self {
            Road::EastWest => Road::NorthSouth,
            Road::NorthSouth => Road::EastWest,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Through,
    Left,
    Yellow,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub road: Road,
    pub kind: PhaseKind,
    pub duration: f64,
}

/// A fixed-time signal plan. Phases run one after another, so at most one
/// road has a green at any moment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalSchedule {
    pub phases: Vec<Phase>,
}

impl Default for SignalSchedule {
    /// 90 s cycle, 45 s per road: 35 s through, 6 s left, 4 s yellow.
    fn default() -> Self {
        let mut phases = Vec::new();
        for road in [Road::EastWest, Road::NorthSouth] {
            phases.push(Phase {
                road,
                kind: PhaseKind::Through,
                duration: 35.0,
            });
            phases.push(Phase {
                road,
                kind: PhaseKind::Left,
                duration: 6.0,
            });
            phases.push(Phase {
                road,
                kind: PhaseKind::Yellow,
                duration: 4.0,
            });
        }
        SignalSchedule { phases }
    }
}

impl SignalSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::InvalidInput("schedule has no phases".into()));
        }
        if self.phases.iter().any(|p| !(p.duration > 0.0)) {
            return Err(Error::InvalidInput("phase durations must be positive".into()));
        }
        Ok(())
    }

    pub fn cycle_length(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }

    pub fn time_of(&self, road: Road, kind: PhaseKind) -> f64 {
        self.phases
            .iter()
            .filter(|p| p.road == road && p.kind == kind)
            .map(|p| p.duration)
            .sum()
    }

    /// Moves `magnitude · cycle` seconds of green from road `from` to the
    /// through phase of the other road, taking first from `from`'s through
    /// phase, then its left phase (neither below `min_green`), then its
    /// yellow. Phases reduced to zero are dropped.
    pub fn tamper(&self, magnitude: f64, from: Road, min_green: f64) -> Result<SignalSchedule> {
        self.validate()?;
        if !(0.0..1.0).contains(&magnitude) {
            return Err(Error::InvalidInput("tamper magnitude must lie in [0, 1)".into()));
        }
        let mut shift = magnitude * self.cycle_length();
        let available: f64 = self
            .phases
            .iter()
            .filter(|p| p.road == from)
            .map(|p| match p.kind {
                PhaseKind::Yellow => p.duration,
                _ => (p.duration - min_green).max(0.0),
            })
            .sum();
        if shift > available + 1e-9 {
            return Err(Error::MagnitudeTooLarge {
                magnitude,
                available_s: available,
            });
        }
        let to = from.other();
        let Some(target) = self.phases.iter().position(|p| p.road == to && p.kind == PhaseKind::Through) else {
            return Err(Error::InvalidInput("receiving road has no through phase".into()));
        };
        let mut phases = self.phases.clone();
        phases[target].duration += shift;
        for kind in [PhaseKind::Through, PhaseKind::Left, PhaseKind::Yellow] {
            for p in phases.iter_mut().filter(|p| p.road == from && p.kind == kind) {
                let floor = if kind == PhaseKind::Yellow { 0.0 } else { min_green };
                let take = shift.min((p.duration - floor).max(0.0));
                p.duration -= take;
                shift -= take;
            }
        }
        phases.retain(|p| p.duration > 1e-9);
        Ok(SignalSchedule { phases })
    }

    /// Green windows of a movement within one cycle, as offsets.
    fn windows(&self, road: Road, kind: PhaseKind) -> Vec<(f64, f64)> {
        let mut t = 0.0;
        let mut out = Vec::new();
        for p in &self.phases {
            if p.road == road && p.kind == kind {
                out.push((t, t + p.duration));
            }
            t += p.duration;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrivalModel {
    /// Vehicles per second per approach.
    pub rate: f64,
    pub p_left: f64,
    pub p_straight: f64,
    pub p_right: f64,
}

impl Default for ArrivalModel {
    fn default() -> Self {
        ArrivalModel {
            rate: 0.19,
            p_left: 0.053,
            p_straight: 0.737,
            p_right: 0.211,
        }
    }
}

impl ArrivalModel {
    pub fn validate(&self) -> Result<()> {
        let sum = self.p_left + self.p_straight + self.p_right;
        if !(self.rate >= 0.0) || [self.p_left, self.p_straight, self.p_right].iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidInput("arrival rate and turn probabilities must be nonnegative".into()));
        }
        // The published split sums to 1.001, so allow a little rounding slack.
        if (sum - 1.0).abs() > 5e-3 {
            return Err(Error::InvalidInput(format!("turn probabilities sum to {sum}")));
        }
        Ok(())
    }
}

/// Schedule in force over time: `before` until `switch_at`, then `after`.
/// Cycles restart at `switch_at`.
#[derive(Clone, Debug)]
struct Timeline {
    before: SignalSchedule,
    after: SignalSchedule,
    switch_at: f64,
}

impl Timeline {
    /// The green window of a movement containing `t`, or the next one.
    fn next_window(&self, road: Road, kind: PhaseKind, t: f64) -> Option<(f64, f64)> {
        if t < self.switch_at {
            if let Some(w) = next_in(&self.before, road, kind, 0.0, t) {
                if w.0 < self.switch_at {
                    return Some((w.0, w.1.min(self.switch_at)));
                }
            }
            return next_in(&self.after, road, kind, self.switch_at, self.switch_at);
        }
        next_in(&self.after, road, kind, self.switch_at, t)
    }
}

fn next_in(s: &SignalSchedule, road: Road, kind: PhaseKind, origin: f64, t: f64) -> Option<(f64, f64)> {
    let windows = s.windows(road, kind);
    if windows.is_empty() {
        return None;
    }
    let c = s.cycle_length();
    let k = ((t - origin) / c).floor();
    for cycle in [k, k + 1.0] {
        let base = origin + cycle * c;
        for &(a, b) in &windows {
            if base + b > t {
                return Some((base + a, base + b));
            }
        }
    }
    None
}

/// Per-simulation bookkeeping used by the tests and the impact metric.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationOutcome {
    pub trace: TrafficTrace,
    pub arrivals: u64,
    pub departures: u64,
    /// Departures per approach inside `[count_from, duration)`.
    pub departures_after: u64,
    pub queued_at_end: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub duration_s: f64,
    pub seed: u64,
    pub saturation_rate: f64,
    #[serde(default)]
    pub in_sensors: SensorPlacement,
}

/// Where the incoming-lane sensors sit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorPlacement {
    /// At the stop line: a vehicle is counted when it enters the
    /// intersection, so counts are zero while the approach is red.
    #[default]
    StopLine,
    /// Upstream of any queue: a vehicle is counted when it arrives.
    Upstream,
}

impl SimConfig {
    pub fn new(duration_s: f64, seed: u64) -> Self {
        SimConfig {
            duration_s,
            seed,
            saturation_rate: DEFAULT_SATURATION_RATE,
            in_sensors: SensorPlacement::StopLine,
        }
    }
}

pub fn sensor_ids() -> Vec<String> {
    LEGS.iter()
        .flat_map(|l| [format!("{l}_in"), format!("{l}_out")])
        .collect()
}

/// Simulates under one schedule.
pub fn simulate(schedule: &SignalSchedule, arrivals: &ArrivalModel, cfg: &SimConfig) -> Result<TrafficTrace> {
    Ok(simulate_switch(schedule, schedule, f64::INFINITY, arrivals, cfg, 0.0)?.trace)
}

/// Simulates with `before` in force until `switch_at` seconds and `after`
/// from then on. `departures_after` counts stop-line crossings at or after
/// `count_from`. Arrivals depend only on the seed, so runs with the same
/// seed and different schedules see the same vehicles.
pub fn simulate_switch(
    before: &SignalSchedule,
    after: &SignalSchedule,
    switch_at: f64,
    arrivals: &ArrivalModel,
    cfg: &SimConfig,
    count_from: f64,
) -> Result<SimulationOutcome> {
    before.validate()?;
    after.validate()?;
    arrivals.validate()?;
    let steps = cfg.duration_s / MEASUREMENT_INTERVAL_S;
    if !(cfg.duration_s >= 0.0) || (steps - steps.round()).abs() > 1e-9 {
        return Err(Error::InvalidInput("duration must be a nonnegative multiple of 15 s".into()));
    }
    if !(cfg.saturation_rate > 0.0) {
        return Err(Error::InvalidInput("saturation rate must be positive".into()));
    }
    let rows = steps.round() as usize;
    let headway = 1.0 / cfg.saturation_rate;
    let timeline = Timeline {
        before: before.clone(),
        after: after.clone(),
        switch_at,
    };
    let mut values = vec![vec![0.0; 8]; rows];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut total_arrivals = 0u64;
    let mut departures = 0u64;
    let mut departures_after = 0u64;
    let mut queued = 0u64;
    let bin = |t: f64| -> Option<usize> {
        if t < cfg.duration_s {
            Some((t / MEASUREMENT_INTERVAL_S) as usize)
        } else {
            None
        }
    };

    for leg in 0..4 {
        let road = Road::of_leg(leg);
        let queues = [
            (PhaseKind::Through, arrivals.p_straight + arrivals.p_right),
            (PhaseKind::Left, arrivals.p_left),
        ];
        for (kind, share) in queues {
            let rate = arrivals.rate * share;
            // Arrival times and exit legs are drawn before any service so
            // they do not depend on the schedule.
            let mut stream: Vec<(f64, usize)> = Vec::new();
            if rate > 0.0 {
                let exp = Exp::new(rate).expect("positive rate");
                let mut t = 0.0;
                loop {
                    t += exp.sample(&mut rng);
                    if t >= cfg.duration_s {
                        break;
                    }
                    let exit = match kind {
                        PhaseKind::Left => (leg + 1) % 4,
                        _ => {
                            if rng.gen::<f64>() * share < arrivals.p_straight {
                                (leg + 2) % 4
                            } else {
                                (leg + 3) % 4
                            }
                        }
                    };
                    stream.push((t, exit));
                }
            }
            total_arrivals += stream.len() as u64;
            let mut last_departure = f64::NEG_INFINITY;
            for (arrival, exit) in stream {
                if cfg.in_sensors == SensorPlacement::Upstream {
                    if let Some(r) = bin(arrival) {
                        values[r][2 * leg] += 1.0;
                    }
                }
                if last_departure == f64::INFINITY {
                    // FIFO: everyone behind a stuck vehicle stays queued.
                    queued += 1;
                    continue;
                }
                let mut t = arrival.max(last_departure + headway);
                let departure = loop {
                    match timeline.next_window(road, kind, t) {
                        None => break None,
                        Some((a, b)) => {
                            if a > t {
                                t = a;
                            }
                            if t + headway <= b + 1e-9 {
                                break Some(t);
                            }
                            t = b;
                        }
                    }
                    if t >= cfg.duration_s {
                        break None;
                    }
                };
                match departure.filter(|&d| d < cfg.duration_s) {
                    Some(d) => {
                        last_departure = d;
                        departures += 1;
                        if d >= count_from {
                            departures_after += 1;
                        }
                        if cfg.in_sensors == SensorPlacement::StopLine {
                            if let Some(r) = bin(d) {
                                values[r][2 * leg] += 1.0;
                            }
                        }
                        if let Some(r) = bin(d + CROSSING_TIME_S) {
                            values[r][2 * exit + 1] += 1.0;
                        }
                    }
                    None => {
                        queued += 1;
                        last_departure = f64::INFINITY;
                    }
                }
            }
        }
    }
    let trace = TrafficTrace::new(sensor_ids(), MEASUREMENT_INTERVAL_S, 0.0, values)?;
    Ok(SimulationOutcome {
        trace,
        arrivals: total_arrivals,
        departures,
        departures_after,
        queued_at_end: queued,
    })
}

/// Fraction of vehicles that no longer get through during an attack:
/// `1 - tampered / default` throughput over `[onset, onset + attacked_s)`,
/// with identical arrivals in both runs.
pub fn blocked_fraction(
    default: &SignalSchedule,
    tampered: &SignalSchedule,
    arrivals: &ArrivalModel,
    onset_s: f64,
    attacked_s: f64,
    seed: u64,
) -> Result<f64> {
    let cfg = SimConfig::new(onset_s + attacked_s, seed);
    let base = simulate_switch(default, default, f64::INFINITY, arrivals, &cfg, onset_s)?;
    let hit = simulate_switch(default, tampered, onset_s, arrivals, &cfg, onset_s)?;
    if base.departures_after == 0 {
        return Ok(0.0);
    }
    Ok((1.0 - hit.departures_after as f64 / base.departures_after as f64).max(0.0))
}

/// Expected vehicles blocked before detection: blocked fraction times the
/// total arrival rate times the detection delay.
pub fn attack_impact(blocked_fraction: f64, arrivals: &ArrivalModel, delay_minutes: f64) -> f64 {
    blocked_fraction * arrivals.rate * 4.0 * 60.0 * delay_minutes
}
