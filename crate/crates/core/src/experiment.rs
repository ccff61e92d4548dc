//! Experiment drivers producing plot-ready tables.
//!
//! Every experiment is described by an [`ExperimentSpec`] holding all of its
//! parameters and seeds. Running the same spec again reproduces the same
//! tables bit for bit; wall-clock measurements are kept apart in the
//! `timing` section of the output because they cannot be replayed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::anneal::{anneal_config, uniform_config_search, AnnealOutcome, AnnealParams};
use crate::attack::{exhaustive_attack, greedy_attack, Quantization, DEFAULT_EVALUATION_CAP};
use crate::ctm_lp::{TrafficModel, DEFAULT_H_MAX};
use crate::error::{Error, Result};
use crate::game::{DetectorConfig, GameEvaluator, GameParams};
use crate::gp::{self, alarms_from_scores, PreparedModel, Statistic};
use crate::netgen::{default_schedule, generate_gre, GreParams};
use crate::setcover::{build_reduction_network, cover_attack, SetCoverInstance};
use crate::sim::{
    attack_impact, blocked_fraction, simulate, simulate_switch, ArrivalModel, Road, SensorPlacement, SignalSchedule, SimConfig,
    MEASUREMENT_INTERVAL_S,
};
use crate::trace::TrafficTrace;

/// A CSV table headed by a `# schema: <name>` line.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub schema: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.to_owned(),
            schema: format!("transec.{name}.v1"),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
        format!("# schema: {}\n{body}", self.schema)
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Mean and the half-width of a normal-approximation 95% interval.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

fn summary_stat(values: &[f64]) -> Value {
    let (mean, ci) = mean_ci(values);
    json!({ "mean": mean, "ci95": ci, "n": values.len() })
}

// ---------------------------------------------------------------------------
// Specs

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GadgetCheckParams {
    pub instances: usize,
    pub max_universe: usize,
    pub max_subsets: usize,
    pub max_k: usize,
    pub seed: u64,
}

impl Default for GadgetCheckParams {
    fn default() -> Self {
        GadgetCheckParams {
            instances: 20,
            max_universe: 5,
            max_subsets: 5,
            max_k: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleParams {
    pub networks: usize,
    /// Network `i` uses seed `seed + i`.
    pub seed: u64,
    pub gre: GreParams,
    #[serde(rename = "C")]
    pub false_alarm_cost: f64,
    #[serde(rename = "delta_M")]
    pub mitigation_minutes: f64,
    /// Horizon cap of every LP.
    pub h_max: usize,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        EnsembleParams {
            networks: 30,
            seed: 0,
            gre: GreParams::default(),
            false_alarm_cost: 10.0,
            mitigation_minutes: 20.0,
            h_max: DEFAULT_H_MAX,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreedyVsExhaustiveParams {
    pub ensemble: EnsembleParams,
    pub max_budget: usize,
    /// Uniform false-positive rate of every detector.
    pub fp_rate: f64,
    pub cap: u64,
}

impl Default for GreedyVsExhaustiveParams {
    fn default() -> Self {
        GreedyVsExhaustiveParams {
            ensemble: EnsembleParams::default(),
            max_budget: 4,
            fp_rate: 1.0,
            cap: DEFAULT_EVALUATION_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealVsUniformParams {
    pub ensemble: EnsembleParams,
    #[serde(rename = "B")]
    pub budget: usize,
    pub anneal: AnnealParams,
}

impl Default for AnnealVsUniformParams {
    fn default() -> Self {
        AnnealVsUniformParams {
            ensemble: EnsembleParams {
                networks: 10,
                ..EnsembleParams::default()
            },
            budget: 2,
            anneal: AnnealParams::default(),
        }
    }
}

/// Shared setup of the detector experiments: one training month, one
/// held-out month, and attacked days that run the default schedule until
/// `onset_s` and the tampered one afterwards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    pub train_hours: f64,
    pub test_hours: f64,
    pub window_minutes: f64,
    pub onset_s: f64,
    pub attacked_hours: f64,
    pub min_green_s: f64,
    pub arrivals: ArrivalModel,
    pub in_sensors: SensorPlacement,
    /// Training, held-out and attacked traces use `seed`, `seed + 1` and
    /// `seed + 2`.
    pub seed: u64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            train_hours: 720.0,
            test_hours: 720.0,
            window_minutes: 3.0,
            onset_s: 3600.0,
            attacked_hours: 23.0,
            min_green_s: 0.0,
            arrivals: ArrivalModel::default(),
            in_sensors: SensorPlacement::StopLine,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParetoParams {
    pub detector: DetectorParams,
    pub magnitude: f64,
    pub thresholds: usize,
}

impl Default for ParetoParams {
    fn default() -> Self {
        ParetoParams {
            detector: DetectorParams::default(),
            magnitude: 0.044,
            thresholds: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpcParams {
    pub detector: DetectorParams,
    pub n_rep: usize,
}

impl Default for PpcParams {
    fn default() -> Self {
        PpcParams {
            detector: DetectorParams::default(),
            n_rep: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StealthParams {
    pub detector: DetectorParams,
    pub magnitudes: Vec<f64>,
}

impl Default for StealthParams {
    fn default() -> Self {
        StealthParams {
            detector: DetectorParams::default(),
            magnitudes: vec![0.044, 0.1, 0.25, 0.5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentSpec {
    GadgetCheck(GadgetCheckParams),
    GreedyVsExhaustive(GreedyVsExhaustiveParams),
    AnnealVsUniform(AnnealVsUniformParams),
    Pareto(ParetoParams),
    Ppc(PpcParams),
    StealthSweep(StealthParams),
}

impl ExperimentSpec {
    pub const KINDS: [&'static str; 6] = [
        "gadget-check",
        "greedy-vs-exhaustive",
        "anneal-vs-uniform",
        "pareto",
        "ppc",
        "stealth-sweep",
    ];

    /// The spec of `kind` with default parameters.
    pub fn default_for(kind: &str) -> Result<Self> {
        Ok(match kind {
            "gadget-check" => ExperimentSpec::GadgetCheck(Default::default()),
            "greedy-vs-exhaustive" => ExperimentSpec::GreedyVsExhaustive(Default::default()),
            "anneal-vs-uniform" => ExperimentSpec::AnnealVsUniform(Default::default()),
            "pareto" => ExperimentSpec::Pareto(Default::default()),
            "ppc" => ExperimentSpec::Ppc(Default::default()),
            "stealth-sweep" => ExperimentSpec::StealthSweep(Default::default()),
            other => return Err(Error::InvalidInput(format!("unknown experiment kind `{other}`"))),
        })
    }

    /// Reads a spec from JSON; fields left out take their defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentSpec::GadgetCheck(_) => "gadget-check",
            ExperimentSpec::GreedyVsExhaustive(_) => "greedy-vs-exhaustive",
            ExperimentSpec::AnnealVsUniform(_) => "anneal-vs-uniform",
            ExperimentSpec::Pareto(_) => "pareto",
            ExperimentSpec::Ppc(_) => "ppc",
            ExperimentSpec::StealthSweep(_) => "stealth-sweep",
        }
    }

    /// Overrides the LP horizon cap of the game experiments; detector
    /// experiments have no LP and are left unchanged.
    pub fn with_h_max(mut self, h_max: usize) -> Self {
        match &mut self {
            ExperimentSpec::GreedyVsExhaustive(p) => p.ensemble.h_max = h_max,
            ExperimentSpec::AnnealVsUniform(p) => p.ensemble.h_max = h_max,
            _ => {}
        }
        self
    }

    /// Overrides the base seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            ExperimentSpec::GadgetCheck(p) => p.seed = seed,
            ExperimentSpec::GreedyVsExhaustive(p) => p.ensemble.seed = seed,
            ExperimentSpec::AnnealVsUniform(p) => {
                p.ensemble.seed = seed;
                p.anneal.seed = seed;
            }
            ExperimentSpec::Pareto(p) => p.detector.seed = seed,
            ExperimentSpec::Ppc(p) => p.detector.seed = seed,
            ExperimentSpec::StealthSweep(p) => p.detector.seed = seed,
        }
        self
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub spec: ExperimentSpec,
    /// Tables reproduced exactly by a replay.
    pub tables: Vec<Table>,
    /// Wall-clock measurements, which differ from run to run.
    pub timing_tables: Vec<Table>,
    pub summary: Value,
    pub timing: Value,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub spec: ExperimentSpec,
    pub files: Vec<String>,
    pub summary: Value,
    pub timing: Value,
}

impl ExperimentOutput {
    pub fn manifest(&self) -> Manifest {
        Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            spec: self.spec.clone(),
            files: self.tables.iter().chain(&self.timing_tables).map(Table::file_name).collect(),
            summary: self.summary.clone(),
            timing: self.timing.clone(),
        }
    }

    /// Writes every table plus `manifest.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for t in self.tables.iter().chain(&self.timing_tables) {
            let path = dir.join(t.file_name());
            fs::write(&path, t.to_csv())?;
            written.push(path);
        }
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        fs::write(&path, text)?;
        written.push(path);
        Ok(written)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().chain(&self.timing_tables).find(|t| t.name == name)
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    match spec {
        ExperimentSpec::GadgetCheck(p) => gadget_check(p),
        ExperimentSpec::GreedyVsExhaustive(p) => greedy_vs_exhaustive(p),
        ExperimentSpec::AnnealVsUniform(p) => anneal_vs_uniform(p),
        ExperimentSpec::Pareto(p) => pareto(p),
        ExperimentSpec::Ppc(p) => ppc(p),
        ExperimentSpec::StealthSweep(p) => stealth_sweep(p),
    }
}

/// Reruns the experiment recorded in a manifest file.
pub fn replay(manifest_path: &Path) -> Result<ExperimentOutput> {
    let text = fs::read_to_string(manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    run_experiment(&manifest.spec)
}

// ---------------------------------------------------------------------------
// Game experiments

/// Checks the set-cover reduction: the optimal travel time under the
/// attack derived from a minimum cover exceeds `3(k + 1)` exactly when a
/// cover of size at most `k` exists.
pub fn gadget_check(p: &GadgetCheckParams) -> Result<ExperimentOutput> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut table = Table::new(
        "gadget_check",
        &["instance", "universe", "subsets", "k", "min_cover", "cover_within_k", "travel_time", "threshold", "exceeds", "agrees"],
    );
    let mut agreements = 0;
    for i in 0..p.instances {
        let sc = SetCoverInstance::random(&mut rng, p.max_universe, p.max_subsets, p.max_k);
        let cover = sc
            .minimum_cover()
            .ok_or_else(|| Error::InvalidInput("random instance has no cover".into()))?;
        let inst = build_reduction_network(&sc)?;
        let atk = cover_attack(&sc, &inst.network, &cover)?;
        let model = TrafficModel::new(&inst.network)?;
        let (_, tt) = model.solve_tight(&atk.tampered, model.horizon_lower_bound())?;
        // Travel times here are integers; the tolerance absorbs LP round-off.
        let exceeds = tt.value() > inst.threshold_gain + 1e-6;
        let within = cover.len() <= sc.k;
        let agrees = exceeds == within;
        agreements += usize::from(agrees);
        table.push(vec![
            i.to_string(),
            sc.universe.len().to_string(),
            sc.subsets.len().to_string(),
            sc.k.to_string(),
            cover.len().to_string(),
            within.to_string(),
            num(tt.value()),
            num(inst.threshold_gain),
            exceeds.to_string(),
            agrees.to_string(),
        ]);
    }
    Ok(ExperimentOutput {
        spec: ExperimentSpec::GadgetCheck(p.clone()),
        tables: vec![table],
        timing_tables: Vec::new(),
        summary: json!({ "instances": p.instances, "agreements": agreements }),
        timing: json!({ "wall_seconds": start.elapsed().as_secs_f64() }),
    })
}

/// Network `i` of an ensemble with its default schedule, wrapped in a
/// fresh evaluator.
fn ensemble_member(e: &EnsembleParams, i: usize, budget: usize) -> Result<GameEvaluator> {
    let gre = GreParams {
        seed: e.seed + i as u64,
        ..e.gre.clone()
    };
    let net = generate_gre(&gre)?;
    let model = TrafficModel::new(&net)?.with_h_max(e.h_max);
    let default = default_schedule(&model)?;
    let params = GameParams::for_network(&net, budget, e.false_alarm_cost, e.mitigation_minutes);
    GameEvaluator::new(model, default, params)
}

struct GreedyRow {
    network: usize,
    budget: usize,
    greedy: f64,
    exhaustive: f64,
    greedy_calls: u64,
    expected_calls: u64,
    greedy_seconds: f64,
    exhaustive_seconds: f64,
}

/// Greedy and exhaustive (extreme-only) attacks on an ensemble of GRE
/// networks for every budget up to `max_budget`. Each search runs on a
/// fresh evaluator so that its wall time includes its own LP solves.
pub fn greedy_vs_exhaustive(p: &GreedyVsExhaustiveParams) -> Result<ExperimentOutput> {
    let start = Instant::now();
    let per_network: Vec<Vec<GreedyRow>> = (0..p.ensemble.networks)
        .into_par_iter()
        .map(|i| {
            let mut rows = Vec::new();
            for b in 1..=p.max_budget {
                let ev = ensemble_member(&p.ensemble, i, b)?;
                let cfg = DetectorConfig::uniform(ev.network().signalized(), p.fp_rate);
                let g = greedy_attack(&ev, &cfg, b)?;
                let greedy_calls = ev.calls();
                let expected_calls = (b * ev.network().signal_approach_count()) as u64;
                let ev = ensemble_member(&p.ensemble, i, b)?;
                let x = exhaustive_attack(&ev, &cfg, b, Quantization::ExtremeOnly, p.cap)?;
                rows.push(GreedyRow {
                    network: i,
                    budget: b,
                    greedy: g.gain,
                    exhaustive: x.gain,
                    greedy_calls,
                    expected_calls,
                    greedy_seconds: g.wall_time,
                    exhaustive_seconds: x.wall_time,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<GreedyRow> = per_network.into_iter().flatten().collect();

    let mut gains = Table::new(
        "greedy_vs_exhaustive",
        &["network", "budget", "greedy_gain", "exhaustive_gain", "greedy_calls", "expected_calls"],
    );
    let mut timing_table = Table::new("greedy_vs_exhaustive_timing", &["network", "budget", "greedy_s", "exhaustive_s"]);
    for r in &rows {
        gains.push(vec![
            r.network.to_string(),
            r.budget.to_string(),
            num(r.greedy),
            num(r.exhaustive),
            r.greedy_calls.to_string(),
            r.expected_calls.to_string(),
        ]);
        timing_table.push(vec![
            r.network.to_string(),
            r.budget.to_string(),
            num(r.greedy_seconds),
            num(r.exhaustive_seconds),
        ]);
    }
    let mut by_budget = Table::new(
        "greedy_vs_exhaustive_by_budget",
        &["budget", "greedy_mean", "greedy_ci95", "exhaustive_mean", "exhaustive_ci95", "ratio_of_means"],
    );
    let mut summary = Vec::new();
    let mut timing = Vec::new();
    for b in 1..=p.max_budget {
        let sel: Vec<&GreedyRow> = rows.iter().filter(|r| r.budget == b).collect();
        let g: Vec<f64> = sel.iter().map(|r| r.greedy).collect();
        let x: Vec<f64> = sel.iter().map(|r| r.exhaustive).collect();
        let (gm, gci) = mean_ci(&g);
        let (xm, xci) = mean_ci(&x);
        let ratio = if xm > 0.0 { gm / xm } else { 1.0 };
        by_budget.push(vec![b.to_string(), num(gm), num(gci), num(xm), num(xci), num(ratio)]);
        summary.push(json!({
            "budget": b,
            "greedy": summary_stat(&g),
            "exhaustive": summary_stat(&x),
            "ratio_of_means": ratio,
            "calls_match": sel.iter().all(|r| r.greedy_calls == r.expected_calls),
        }));
        let gt: Vec<f64> = sel.iter().map(|r| r.greedy_seconds).collect();
        let xt: Vec<f64> = sel.iter().map(|r| r.exhaustive_seconds).collect();
        timing.push(json!({
            "budget": b,
            "greedy_seconds": summary_stat(&gt),
            "exhaustive_seconds": summary_stat(&xt),
        }));
    }
    Ok(ExperimentOutput {
        spec: ExperimentSpec::GreedyVsExhaustive(p.clone()),
        tables: vec![gains, by_budget],
        timing_tables: vec![timing_table],
        summary: json!({ "budgets": summary }),
        timing: json!({ "wall_seconds": start.elapsed().as_secs_f64(), "budgets": timing }),
    })
}

/// Annealed per-detector rates against a single annealed uniform rate, with
/// the greedy attack as the attacker's best response.
pub fn anneal_vs_uniform(p: &AnnealVsUniformParams) -> Result<ExperimentOutput> {
    let start = Instant::now();
    let outcomes: Vec<(AnnealOutcome, AnnealOutcome)> = (0..p.ensemble.networks)
        .into_par_iter()
        .map(|i| {
            let ev = ensemble_member(&p.ensemble, i, p.budget)?;
            let params = ev.params().clone();
            let best_gain = |cfg: &DetectorConfig| Ok(greedy_attack(&ev, cfg, p.budget)?.gain);
            let ap = AnnealParams {
                seed: p.anneal.seed + i as u64,
                ..p.anneal
            };
            let strategic = anneal_config(&params, &ap, best_gain)?;
            let uniform = uniform_config_search(&params, &ap, best_gain)?;
            Ok((strategic, uniform))
        })
        .collect::<Result<_>>()?;

    let mut per_network = Table::new("anneal_vs_uniform", &["network", "strategic_loss", "uniform_loss"]);
    for (i, (s, u)) in outcomes.iter().enumerate() {
        per_network.push(vec![i.to_string(), num(s.loss), num(u.loss)]);
    }
    let iterations = p.anneal.k_max + 1;
    let n = outcomes.len().max(1) as f64;
    let mean_curve = |pick: &dyn Fn(&(AnnealOutcome, AnnealOutcome)) -> &AnnealOutcome, best: bool| -> Vec<f64> {
        (0..iterations)
            .map(|k| {
                outcomes
                    .iter()
                    .map(|o| {
                        let row = &pick(o).trace[k];
                        if best {
                            row.best_loss
                        } else {
                            row.loss
                        }
                    })
                    .sum::<f64>()
                    / n
            })
            .collect()
    };
    let s_best = mean_curve(&|o| &o.0, true);
    let u_best = mean_curve(&|o| &o.1, true);
    let s_cur = mean_curve(&|o| &o.0, false);
    let u_cur = mean_curve(&|o| &o.1, false);
    let mut curve = Table::new(
        "anneal_trace",
        &["iteration", "strategic_loss", "strategic_best_loss", "uniform_loss", "uniform_best_loss"],
    );
    for k in 0..iterations {
        curve.push(vec![k.to_string(), num(s_cur[k]), num(s_best[k]), num(u_cur[k]), num(u_best[k])]);
    }
    let strategic: Vec<f64> = outcomes.iter().map(|o| o.0.loss).collect();
    let uniform: Vec<f64> = outcomes.iter().map(|o| o.1.loss).collect();
    let by = 500.min(iterations - 1);
    Ok(ExperimentOutput {
        spec: ExperimentSpec::AnnealVsUniform(p.clone()),
        tables: vec![per_network, curve],
        timing_tables: Vec::new(),
        summary: json!({
            "strategic": summary_stat(&strategic),
            "uniform": summary_stat(&uniform),
            "strategic_improvement_share_by_500": improvement_share(&s_best, by),
            "uniform_improvement_share_by_500": improvement_share(&u_best, by),
        }),
        timing: json!({ "wall_seconds": start.elapsed().as_secs_f64() }),
    })
}

/// Fraction of the total decrease of a best-loss curve reached by index
/// `by`; 1 when the curve never improves.
pub fn improvement_share(best: &[f64], by: usize) -> f64 {
    let total = best[0] - best[best.len() - 1];
    if total <= 0.0 {
        return 1.0;
    }
    (best[0] - best[by]) / total
}

// ---------------------------------------------------------------------------
// Detector experiments

fn hours_to_seconds(h: f64) -> f64 {
    (h * 3600.0 / MEASUREMENT_INTERVAL_S).round() * MEASUREMENT_INTERVAL_S
}

impl DetectorParams {
    pub fn period(&self) -> Result<usize> {
        let p = self.window_minutes * 60.0 / MEASUREMENT_INTERVAL_S;
        if !(p >= 1.0) || (p - p.round()).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "window of {} min is not a positive multiple of the {MEASUREMENT_INTERVAL_S} s interval",
                self.window_minutes
            )));
        }
        Ok(p.round() as usize)
    }

    fn sim_config(&self, duration_s: f64, seed: u64) -> SimConfig {
        SimConfig {
            in_sensors: self.in_sensors,
            ..SimConfig::new(duration_s, seed)
        }
    }

    fn normal_trace(&self, hours: f64, seed: u64) -> Result<TrafficTrace> {
        simulate(
            &SignalSchedule::default(),
            &self.arrivals,
            &self.sim_config(hours_to_seconds(hours), seed),
        )
    }

    pub fn training_trace(&self) -> Result<TrafficTrace> {
        self.normal_trace(self.train_hours, self.seed)
    }

    pub fn held_out_trace(&self) -> Result<TrafficTrace> {
        self.normal_trace(self.test_hours, self.seed + 1)
    }

    pub fn tampered_schedule(&self, magnitude: f64) -> Result<SignalSchedule> {
        SignalSchedule::default().tamper(magnitude, Road::EastWest, self.min_green_s)
    }

    /// The attacked day: default schedule until the onset, tampered after.
    pub fn attacked_trace(&self, magnitude: f64) -> Result<TrafficTrace> {
        let tampered = self.tampered_schedule(magnitude)?;
        let cfg = self.sim_config(self.onset_s + hours_to_seconds(self.attacked_hours), self.seed + 2);
        Ok(simulate_switch(&SignalSchedule::default(), &tampered, self.onset_s, &self.arrivals, &cfg, self.onset_s)?.trace)
    }

    pub fn trained_model(&self) -> Result<PreparedModel> {
        gp::train(&self.training_trace()?, self.period()?)?.prepare()
    }
}

/// Pareto curve of the detector for a tamper of the given magnitude, plus
/// per-window scores of the attacked day next to the same day without the
/// attack.
pub fn pareto(p: &ParetoParams) -> Result<ExperimentOutput> {
    let start = Instant::now();
    let d = &p.detector;
    let model = d.trained_model()?;
    let normal = d.held_out_trace()?;
    let attacked = d.attacked_trace(p.magnitude)?;
    let normal_scores = model.score(&normal)?;
    let attacked_scores = model.score(&attacked)?;
    let all: Vec<f64> = normal_scores
        .iter()
        .chain(&attacked_scores)
        .map(|w| w.log_likelihood)
        .collect();
    let mut thresholds = gp::threshold_grid(&all, p.thresholds);
    let zero_fp = gp::zero_fp_threshold(&model, &normal)?;
    thresholds.push(zero_fp);
    thresholds.sort_by(f64::total_cmp);
    let curve = gp::pareto_curve(&model, &normal, &attacked, d.onset_s, &thresholds)?;
    let mut table = Table::new("pareto", &["ln_tau", "fp_per_month", "delay_minutes"]);
    for pt in &curve {
        table.push(vec![num(pt.ln_tau), num(pt.fp_per_month), num(pt.delay_minutes)]);
    }

    let same_day = {
        let cfg = d.sim_config(d.onset_s + hours_to_seconds(d.attacked_hours), d.seed + 2);
        simulate(&SignalSchedule::default(), &d.arrivals, &cfg)?
    };
    let same_day_scores = model.score(&same_day)?;
    let mut scores = Table::new("window_scores", &["window_end_s", "normal_ln_l", "tampered_ln_l"]);
    for (a, b) in same_day_scores.iter().zip(&attacked_scores) {
        scores.push(vec![num(a.end), num(a.log_likelihood), num(b.log_likelihood)]);
    }
    let at_zero = alarms_from_scores(&attacked_scores, zero_fp, Some(d.onset_s));
    let monotone = curve.windows(2).all(|w| w[1].delay_minutes <= w[0].delay_minutes);
    Ok(ExperimentOutput {
        spec: ExperimentSpec::Pareto(p.clone()),
        tables: vec![table, scores],
        timing_tables: Vec::new(),
        summary: json!({
            "points": curve.len(),
            "monotone": monotone,
            "zero_fp_ln_tau": zero_fp,
            "zero_fp_held_out_alarms": alarms_from_scores(&normal_scores, zero_fp, None).fp_count,
            "delay_minutes_at_zero_fp": at_zero.delay_minutes,
            "false_alarms_before_onset_at_zero_fp": at_zero.fp_count,
            "jitter": model.jitter,
        }),
        timing: json!({ "wall_seconds": start.elapsed().as_secs_f64() }),
    })
}

/// Posterior predictive p-values per sensor for a held-out simulated month
/// and for a month sampled from the trained model itself.
pub fn ppc(p: &PpcParams) -> Result<ExperimentOutput> {
    let start = Instant::now();
    let d = &p.detector;
    if p.n_rep < 1000 {
        return Err(Error::InvalidInput("posterior predictive checks need n_rep >= 1000".into()));
    }
    let model = d.trained_model()?;
    let held_out = d.held_out_trace()?;
    let mut rng = ChaCha8Rng::seed_from_u64(d.seed + 3);
    let windows = held_out.len() / model.model.period;
    let sampled = model.model.sample_trace(&model, windows, &mut rng);
    let statistics = [
        ("mean", Statistic::Mean),
        ("variance", Statistic::Variance),
        ("median", Statistic::Median),
    ];
    let mut table = Table::new("ppc", &["observed", "statistic", "sensor", "p_value"]);
    let mut self_mean = Vec::new();
    for (source, trace) in [("simulated", &held_out), ("model", &sampled)] {
        for (name, stat) in statistics {
            let ps = model.posterior_predictive_check(trace, stat, p.n_rep, &mut rng)?;
            for (sensor, pv) in model.model.sensors.iter().zip(&ps) {
                table.push(vec![source.to_owned(), name.to_owned(), sensor.clone(), num(*pv)]);
            }
            if source == "model" && name == "mean" {
                self_mean = ps;
            }
        }
    }
    let in_band = self_mean.iter().all(|&v| (0.3..=0.7).contains(&v));
    Ok(ExperimentOutput {
        spec: ExperimentSpec::Ppc(p.clone()),
        tables: vec![table],
        timing_tables: Vec::new(),
        summary: json!({ "model_mean_p_values": self_mean, "model_mean_in_0.3_0.7": in_band }),
        timing: json!({ "wall_seconds": start.elapsed().as_secs_f64() }),
    })
}

/// Impact of tampers of growing magnitude at the zero-false-positive
/// threshold. Undetected attacks count as running for the whole attacked
/// period.
pub fn stealth_sweep(p: &StealthParams) -> Result<ExperimentOutput> {
    let start = Instant::now();
    let d = &p.detector;
    let model = d.trained_model()?;
    let normal = d.held_out_trace()?;
    let zero_fp = gp::zero_fp_threshold(&model, &normal)?;
    let attacked_s = hours_to_seconds(d.attacked_hours);
    let rows: Vec<(f64, f64, Option<f64>, f64)> = p
        .magnitudes
        .par_iter()
        .map(|&m| {
            let tampered = d.tampered_schedule(m)?;
            let fraction = blocked_fraction(&SignalSchedule::default(), &tampered, &d.arrivals, d.onset_s, attacked_s, d.seed + 2)?;
            let report = model.detect(&d.attacked_trace(m)?, zero_fp, Some(d.onset_s))?;
            let delay = report.delay_minutes.unwrap_or(attacked_s / 60.0);
            Ok((m, fraction, report.delay_minutes, attack_impact(fraction, &d.arrivals, delay)))
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new("stealth_sweep", &["magnitude", "blocked_fraction", "detected", "delay_minutes", "impact_vehicles"]);
    for (m, f, delay, impact) in &rows {
        table.push(vec![
            num(*m),
            num(*f),
            delay.is_some().to_string(),
            num(delay.unwrap_or(attacked_s / 60.0)),
            num(*impact),
        ]);
    }
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let non_decreasing = sorted.windows(2).all(|w| w[1].3 >= w[0].3);
    Ok(ExperimentOutput {
        spec: ExperimentSpec::StealthSweep(p.clone()),
        tables: vec![table],
        timing_tables: Vec::new(),
        summary: json!({ "zero_fp_ln_tau": zero_fp, "impact_non_decreasing": non_decreasing }),
        timing: json!({ "wall_seconds": start.elapsed().as_secs_f64() }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_carry_a_schema_line() {
        let mut t = Table::new("demo", &["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        assert_eq!(t.to_csv(), "# schema: transec.demo.v1\na,b\n1,\"x,y\"\n");
        assert_eq!(t.column("b").unwrap(), vec!["x,y"]);
    }

    #[test]
    fn confidence_interval() {
        let (m, ci) = mean_ci(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((ci - 1.96 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(mean_ci(&[5.0]), (5.0, 0.0));
    }

    #[test]
    fn improvement_share_of_curves() {
        assert_eq!(improvement_share(&[10.0, 5.0, 0.0], 1), 0.5);
        assert_eq!(improvement_share(&[3.0, 3.0], 1), 1.0);
    }

    #[test]
    fn spec_round_trip_with_defaults() {
        let spec = ExperimentSpec::from_json(r#"{"kind":"gadget-check","instances":3}"#).unwrap();
        match &spec {
            ExperimentSpec::GadgetCheck(p) => {
                assert_eq!(p.instances, 3);
                assert_eq!(p.max_k, 3);
            }
            _ => panic!("wrong kind"),
        }
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(ExperimentSpec::from_json(&text).unwrap(), spec);
        for kind in ExperimentSpec::KINDS {
            assert_eq!(ExperimentSpec::default_for(kind).unwrap().kind(), kind);
        }
        assert!(ExperimentSpec::default_for("nope").is_err());
    }

    #[test]
    fn gadget_check_agrees_and_replays() {
        let spec = ExperimentSpec::GadgetCheck(GadgetCheckParams {
            instances: 6,
            ..Default::default()
        });
        let a = run_experiment(&spec).unwrap();
        assert_eq!(a.summary["agreements"], 6);
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.tables, b.tables);
    }

    #[test]
    fn window_must_fit_the_interval() {
        let d = DetectorParams {
            window_minutes: 0.1,
            ..Default::default()
        };
        assert!(d.period().is_err());
        assert_eq!(DetectorParams::default().period().unwrap(), 12);
    }
}
