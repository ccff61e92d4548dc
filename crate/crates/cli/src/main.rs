use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use transec_core::anneal::{anneal_config, uniform_config_search, AnnealParams};
use transec_core::attack::{exhaustive_attack, greedy_attack, Quantization, DEFAULT_EVALUATION_CAP};
use transec_core::ctm_lp::{TrafficModel, DEFAULT_H_MAX};
use transec_core::experiment::{replay, run_experiment, ExperimentSpec, Table};
use transec_core::game::{Attack, DetectorConfig, GameEvaluator, GameParams};
use transec_core::gp::{self, GpModel, PreparedModel, Statistic};
use transec_core::netgen::{default_schedule, generate_gre, GreParams};
use transec_core::network::Network;
use transec_core::proportions::Proportions;
use transec_core::sim::{self, ArrivalModel, Road, SensorPlacement, SignalSchedule, SimConfig};
use transec_core::trace::TrafficTrace;
use transec_core::{Error, Result};

/// Like `println!`, but a closed pipe becomes an error instead of a panic.
macro_rules! out {
    ($($arg:tt)*) => {
        writeln!(io::stdout().lock(), $($arg)*)?
    };
}

#[derive(Parser)]
#[command(name = "transec", version, about = "Attacks, defenses and anomaly detection for signalized traffic networks")]
struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for ensemble runs (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Largest LP horizon tried before a network is declared undrainable.
    #[arg(long, global = true)]
    h_max: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a network file and report every problem found.
    Validate { net: PathBuf },
    /// Print the optimal total travel time of a network.
    Solve {
        net: PathBuf,
        /// Fixed turning proportions; merges not listed are optimized.
        #[arg(long)]
        props: Option<PathBuf>,
        /// Use this horizon instead of the shortest one at which the network drains.
        #[arg(long)]
        horizon: Option<usize>,
        /// Write the optimal occupancies and flows here.
        #[arg(long)]
        emit_state: Option<PathBuf>,
    },
    /// Generate a random grid network.
    Gen(GenArgs),
    /// Print the attacker's gain and the defender's loss for one attack.
    Evaluate {
        net: PathBuf,
        game: PathBuf,
        attack: PathBuf,
        config: PathBuf,
        #[command(flatten)]
        default: DefaultArg,
    },
    /// Search for a high-gain attack.
    Attack {
        net: PathBuf,
        game: PathBuf,
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Greedy)]
        method: Method,
        /// Defaults to the budget in the game file.
        #[arg(long)]
        budget: Option<usize>,
        /// Assignments tried per merge by the exhaustive search: `extreme`
        /// or `grid:M` for an M-level lattice.
        #[arg(long, default_value = "extreme")]
        quantization: String,
        /// Most gain evaluations the exhaustive search may need.
        #[arg(long, default_value_t = DEFAULT_EVALUATION_CAP)]
        cap: u64,
        #[command(flatten)]
        default: DefaultArg,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Choose detector false-positive rates by simulated annealing.
    Configure {
        net: PathBuf,
        game: PathBuf,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        /// Search a single rate shared by every detector.
        #[arg(long)]
        uniform: bool,
        /// Relative size of a perturbation step.
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Starting temperature as a fraction of the initial loss.
        #[arg(long)]
        t0_fraction: Option<f64>,
        #[command(flatten)]
        default: DefaultArg,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Per-iteration loss and best loss as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Simulate the four-leg intersection and write its sensor trace.
    Sim(SimArgs),
    /// Gaussian-process anomaly detector.
    #[command(subcommand)]
    Gp(GpCommand),
    /// Run an experiment and write its tables and manifest.
    Experiment {
        /// One of gadget-check, greedy-vs-exhaustive, anneal-vs-uniform,
        /// pareto, ppc, stealth-sweep. Omit when replaying.
        kind: Option<String>,
        /// JSON spec; fields left out take their defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Rerun the experiment recorded in this manifest.
        #[arg(long, conflicts_with_all = ["kind", "spec"])]
        replay: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DefaultArg {
    /// Default signal proportions; derived from the network if omitted.
    #[arg(long = "default")]
    default_props: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Greedy,
    Exhaustive,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 4)]
    width: usize,
    #[arg(long, default_value_t = 4)]
    height: usize,
    #[arg(long, default_value_t = 0.1)]
    p_extra: f64,
    #[arg(long = "Q", default_value_t = 6.0)]
    q: f64,
    #[arg(long = "N", default_value_t = 10.0)]
    n: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Source inflow per interval, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [8.0, 12.0, 8.0])]
    demand: Vec<f64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write a game file monitoring every signalized merge.
    #[arg(long)]
    game: Option<PathBuf>,
    /// Attacker budget written to the game file.
    #[arg(long, default_value_t = 2)]
    budget: usize,
    /// Cost of one false alarm written to the game file.
    #[arg(long = "C", default_value_t = 10.0)]
    false_alarm_cost: f64,
    /// Mitigation time in minutes written to the game file.
    #[arg(long = "delta-M", default_value_t = 20.0)]
    mitigation_minutes: f64,
    /// Also write a detector configuration with this rate everywhere.
    #[arg(long)]
    config: Option<PathBuf>,
    /// False-positive rate used with `--config`, in alarms per month.
    #[arg(long, default_value_t = 1.0)]
    config_rate: f64,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    hours: f64,
    /// Move this fraction of the cycle from east-west green to north-south.
    #[arg(long)]
    tamper: Option<f64>,
    /// Seconds from the start at which the tampered schedule takes over.
    #[arg(long, default_value_t = 0.0)]
    onset: f64,
    /// Green time the tampered road keeps at least, in seconds.
    #[arg(long, default_value_t = 0.0)]
    min_green: f64,
    /// Vehicles per second per approach.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, value_enum, default_value_t = Placement::StopLine)]
    in_sensors: Placement,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Placement {
    StopLine,
    Upstream,
}

#[derive(Subcommand)]
enum GpCommand {
    /// Fit the periodic mean and covariance tables to a trace.
    Train {
        trace: PathBuf,
        /// Detector window length; must be a whole number of intervals.
        #[arg(long, default_value_t = 3.0)]
        window_minutes: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Log-likelihood of every detector window.
    Score {
        model: PathBuf,
        trace: PathBuf,
        /// Start a window at every interval instead of every period.
        #[arg(long)]
        overlapping: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Alarms raised at a threshold, as JSON.
    Detect {
        model: PathBuf,
        trace: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        ln_tau: f64,
        /// Attack onset in seconds; alarms up to it count as false positives.
        #[arg(long)]
        onset: Option<f64>,
        #[arg(long)]
        overlapping: bool,
    },
    /// False-positive rate against detection delay over a threshold sweep.
    Pareto {
        model: PathBuf,
        normal: PathBuf,
        attacked: PathBuf,
        #[arg(long)]
        onset: f64,
        #[arg(long, default_value_t = 200)]
        thresholds: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Posterior predictive p-value per sensor.
    Ppc {
        model: PathBuf,
        trace: PathBuf,
        /// mean, variance, median or quantile:Q.
        #[arg(long, default_value = "mean")]
        statistic: String,
        #[arg(long, default_value_t = 10_000)]
        n_rep: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("cannot size the worker pool: {e}")))?;
    }
    let seed = cli.seed.unwrap_or(0);
    let h_max = cli.h_max.unwrap_or(DEFAULT_H_MAX);
    if h_max == 0 {
        return Err(Error::InvalidInput("--h-max must be positive".into()));
    }
    match cli.command {
        Command::Validate { net } => validate(&net),
        Command::Solve {
            net,
            props,
            horizon,
            emit_state,
        } => solve(&net, props.as_deref(), horizon, emit_state.as_deref(), h_max),
        Command::Gen(args) => gen(&args, seed),
        Command::Evaluate {
            net,
            game,
            attack,
            config,
            default,
        } => {
            let ev = evaluator(&net, &game, &default, h_max)?;
            let atk = Attack::from_json(&read(&attack)?)?;
            let cfg = DetectorConfig::from_json(&read(&config)?)?;
            atk.check(ev.network(), ev.params().budget)?;
            cfg.validate(ev.params())?;
            let e = ev.evaluate(&atk, &cfg)?;
            out!("gain {}", e.gain);
            out!("loss {}", transec_core::game::defender_loss(e.gain, &cfg, ev.params()));
            Ok(())
        }
        Command::Attack {
            net,
            game,
            config,
            method,
            budget,
            quantization,
            cap,
            default,
            output,
        } => {
            let ev = evaluator(&net, &game, &default, h_max)?;
            let cfg = DetectorConfig::from_json(&read(&config)?)?;
            cfg.validate(ev.params())?;
            let budget = budget.unwrap_or(ev.params().budget);
            let result = match method {
                Method::Greedy => greedy_attack(&ev, &cfg, budget)?,
                Method::Exhaustive => exhaustive_attack(&ev, &cfg, budget, parse_quantization(&quantization)?, cap)?,
            };
            eprintln!(
                "gain {} after {} evaluations in {:.3} s",
                result.gain, result.evaluations, result.wall_time
            );
            emit(output.as_deref(), &result.attack.to_json())
        }
        Command::Configure {
            net,
            game,
            iters,
            uniform,
            epsilon,
            t0_fraction,
            default,
            output,
            trace,
        } => {
            let ev = evaluator(&net, &game, &default, h_max)?;
            let params = ev.params().clone();
            let mut ap = AnnealParams {
                k_max: iters,
                epsilon,
                seed,
                ..AnnealParams::default()
            };
            if let Some(f) = t0_fraction {
                ap.t0_fraction = f;
            }
            let budget = params.budget;
            let best_gain = |cfg: &DetectorConfig| Ok(greedy_attack(&ev, cfg, budget)?.gain);
            let outcome = if uniform {
                uniform_config_search(&params, &ap, best_gain)?
            } else {
                anneal_config(&params, &ap, best_gain)?
            };
            if let Some(path) = trace {
                let mut t = Table::new("configure_trace", &["iteration", "loss", "best_loss"]);
                for row in &outcome.trace {
                    t.push(vec![row.iteration.to_string(), row.loss.to_string(), row.best_loss.to_string()]);
                }
                write(&path, &t.to_csv())?;
            }
            eprintln!("loss {}", outcome.loss);
            emit(output.as_deref(), &outcome.config.to_json())
        }
        Command::Sim(args) => simulate(&args, seed),
        Command::Gp(cmd) => gp_command(cmd, seed),
        Command::Experiment {
            kind,
            spec,
            replay: manifest,
            out,
        } => {
            let output = match manifest {
                Some(path) => replay(&path)?,
                None => {
                    let mut s = match (&kind, &spec) {
                        (_, Some(path)) => ExperimentSpec::from_json(&read(path)?)?,
                        (Some(k), None) => ExperimentSpec::default_for(k)?,
                        (None, None) => return Err(Error::InvalidInput("give an experiment kind or --spec".into())),
                    };
                    if let (Some(k), true) = (&kind, spec.is_some()) {
                        if k != s.kind() {
                            return Err(Error::InvalidInput(format!(
                                "spec describes `{}`, not `{k}`",
                                s.kind()
                            )));
                        }
                    }
                    if let Some(seed) = cli.seed {
                        s = s.with_seed(seed);
                    }
                    if let Some(h) = cli.h_max {
                        s = s.with_h_max(h);
                    }
                    run_experiment(&s)?
                }
            };
            for path in output.write_to(&out)? {
                out!("{}", path.display());
            }
            out!("{}", serde_json::to_string_pretty(&output.summary).expect("summary serializes"));
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(fs::write(path, text)?)
}

/// Writes to `path`, or to standard output without one.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write(p, text),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn load_network(path: &Path) -> Result<Network> {
    let net = Network::from_json(&read(path)?)?;
    net.ensure_valid()?;
    Ok(net)
}

fn validate(path: &Path) -> Result<()> {
    let net = Network::from_json(&read(path)?)?;
    let report = net.validate();
    if report.is_pass() {
        out!(
            "ok: {} cells, {} edges, {} signalized merges",
            net.cells().len(),
            net.edges().len(),
            net.signalized().len()
        );
        Ok(())
    } else {
        for issue in &report.issues {
            out!("{issue}");
        }
        Err(Error::InvalidNetwork(report.issues.iter().map(ToString::to_string).collect()))
    }
}

fn solve(path: &Path, props: Option<&Path>, horizon: Option<usize>, emit_state: Option<&Path>, h_max: usize) -> Result<()> {
    let net = load_network(path)?;
    let model = TrafficModel::new(&net)?.with_h_max(h_max);
    let fixed = match props {
        Some(p) => Proportions::from_json(&read(p)?)?,
        None => Proportions::new(),
    };
    fixed.check(&net)?;
    let h = match horizon {
        Some(h) => h,
        None => model.tight_horizon_with(&fixed, model.horizon_lower_bound())?,
    };
    let (tt, state) = model.solve(&fixed, h)?;
    if let Some(p) = emit_state {
        write(p, &state.to_json())?;
    }
    out!("{}", tt.value());
    Ok(())
}

fn gen(args: &GenArgs, seed: u64) -> Result<()> {
    let gp = GreParams {
        width: args.width,
        height: args.height,
        p_extra: args.p_extra,
        seed,
        q: args.q,
        delta: args.delta,
        n: args.n,
        source_demand: args.demand.clone(),
    };
    let net = generate_gre(&gp)?;
    let params = GameParams::for_network(&net, args.budget, args.false_alarm_cost, args.mitigation_minutes);
    if let Some(path) = &args.game {
        params.validate(&net)?;
        write(path, &params.to_json())?;
    }
    if let Some(path) = &args.config {
        let cfg = DetectorConfig::uniform(&params.detectors, args.config_rate);
        cfg.validate(&params)?;
        write(path, &cfg.to_json())?;
    }
    emit(args.output.as_deref(), &net.to_json())
}

fn evaluator(net: &Path, game: &Path, default: &DefaultArg, h_max: usize) -> Result<GameEvaluator> {
    let net = load_network(net)?;
    let params = GameParams::from_json(&read(game)?)?;
    params.validate(&net)?;
    let model = TrafficModel::new(&net)?.with_h_max(h_max);
    let props = match &default.default_props {
        Some(p) => {
            let props = Proportions::from_json(&read(p)?)?;
            props.check_complete(&net)?;
            props
        }
        None => default_schedule(&model)?,
    };
    GameEvaluator::new(model, props, params)
}

fn parse_quantization(text: &str) -> Result<Quantization> {
    if text == "extreme" {
        return Ok(Quantization::ExtremeOnly);
    }
    text.strip_prefix("grid:")
        .and_then(|m| m.parse::<usize>().ok())
        .filter(|&m| m >= 2)
        .map(Quantization::Grid)
        .ok_or_else(|| Error::InvalidInput(format!("quantization `{text}` is not `extreme` or `grid:M` with M >= 2")))
}

fn simulate(args: &SimArgs, seed: u64) -> Result<()> {
    if !(args.hours > 0.0) {
        return Err(Error::InvalidInput("--hours must be positive".into()));
    }
    let mut arrivals = ArrivalModel::default();
    if let Some(rate) = args.rate {
        arrivals.rate = rate;
    }
    let cfg = SimConfig {
        in_sensors: match args.in_sensors {
            Placement::StopLine => SensorPlacement::StopLine,
            Placement::Upstream => SensorPlacement::Upstream,
        },
        ..SimConfig::new(args.hours * 3600.0, seed)
    };
    let normal = SignalSchedule::default();
    let trace = match args.tamper {
        Some(m) => {
            let tampered = normal.tamper(m, Road::EastWest, args.min_green)?;
            sim::simulate_switch(&normal, &tampered, args.onset, &arrivals, &cfg, args.onset)?.trace
        }
        None => sim::simulate(&normal, &arrivals, &cfg)?,
    };
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    emit(args.output.as_deref(), &String::from_utf8(buf).expect("csv is utf-8"))
}

fn load_trace(path: &Path) -> Result<TrafficTrace> {
    let file = fs::File::open(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    TrafficTrace::read_csv(io::BufReader::new(file))
}

fn load_model(path: &Path) -> Result<PreparedModel> {
    let file = fs::File::open(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    GpModel::read_json(io::BufReader::new(file))?.prepare()
}

fn gp_command(cmd: GpCommand, seed: u64) -> Result<()> {
    match cmd {
        GpCommand::Train {
            trace,
            window_minutes,
            output,
        } => {
            let t = load_trace(&trace)?;
            let period = window_minutes * 60.0 / t.interval_seconds;
            if !(period >= 1.0) || (period - period.round()).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "a {window_minutes} min window is not a whole number of {} s intervals",
                    t.interval_seconds
                )));
            }
            let model = gp::train(&t, period.round() as usize)?;
            model.prepare()?;
            let mut buf = Vec::new();
            model.write_json(&mut buf)?;
            emit(output.as_deref(), &String::from_utf8(buf).expect("json is utf-8"))
        }
        GpCommand::Score {
            model,
            trace,
            overlapping,
            output,
        } => {
            let m = load_model(&model)?;
            let scores = m.score_with(&load_trace(&trace)?, overlapping)?;
            let mut t = Table::new("window_scores", &["start", "end", "log_likelihood"]);
            for s in &scores {
                t.push(vec![s.start.to_string(), s.end.to_string(), s.log_likelihood.to_string()]);
            }
            emit(output.as_deref(), &t.to_csv())
        }
        GpCommand::Detect {
            model,
            trace,
            ln_tau,
            onset,
            overlapping,
        } => {
            let m = load_model(&model)?;
            let scores = m.score_with(&load_trace(&trace)?, overlapping)?;
            let report = gp::alarms_from_scores(&scores, ln_tau, onset);
            out!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
        GpCommand::Pareto {
            model,
            normal,
            attacked,
            onset,
            thresholds,
            output,
        } => {
            let m = load_model(&model)?;
            let normal = load_trace(&normal)?;
            let attacked = load_trace(&attacked)?;
            let all: Vec<f64> = m
                .score(&normal)?
                .iter()
                .chain(&m.score(&attacked)?)
                .map(|w| w.log_likelihood)
                .collect();
            let grid = gp::threshold_grid(&all, thresholds);
            let curve = gp::pareto_curve(&m, &normal, &attacked, onset, &grid)?;
            let mut t = Table::new("pareto", &["ln_tau", "fp_per_month", "delay_minutes"]);
            for pt in &curve {
                t.push(vec![pt.ln_tau.to_string(), pt.fp_per_month.to_string(), pt.delay_minutes.to_string()]);
            }
            emit(output.as_deref(), &t.to_csv())
        }
        GpCommand::Ppc {
            model,
            trace,
            statistic,
            n_rep,
        } => {
            if n_rep < 1000 {
                return Err(Error::InvalidInput("--n-rep must be at least 1000".into()));
            }
            let m = load_model(&model)?;
            let stat = Statistic::parse(&statistic)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ps = m.posterior_predictive_check(&load_trace(&trace)?, stat, n_rep, &mut rng)?;
            for (sensor, p) in m.model.sensors.iter().zip(&ps) {
                out!("{sensor} {p}");
            }
            Ok(())
        }
    }
}
