//! `querytrack` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error
//! (including missing input files).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand};
use querytrack::baselines::TbdConfig;
use querytrack::io::{
    read_detections, read_json, read_jsonl, to_jsonl, write_atomic, write_json, ForecastRecord,
    TrackRecord,
};
use querytrack::manifest::RunManifest;
use querytrack::metrics::{evaluate, EvalConfig, EvalSequence};
use querytrack::model::ModelParams;
use querytrack::modes::{run_mode, Mode, Weights};
use querytrack::past::{flop_closed_form, flop_compare};
use querytrack::plot::bev_svg;
use querytrack::repro::{repro, simulate_suite, ReproOptions};
use querytrack::sim::{simulate, ScenarioConfig, Simulation, Suite};
use querytrack::train::{train_all, Schedule};
use querytrack::types::{LossConfig, TrackerConfig};
use querytrack::{par, Error, Result};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(
    name = "querytrack",
    version,
    about = "Query-based 3D multi-object tracking with past and future reasoning"
)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate scenarios into gt.jsonl + detections.jsonl directories.
    Simulate(SimulateArgs),
    /// Run a tracker mode over a detections log.
    Track(TrackArgs),
    /// Score a track log against ground truth.
    Eval(EvalArgs),
    /// Compare attention FLOPs of the global and decoupled layouts.
    Bench(BenchArgs),
    /// Train refinement and motion heads on simulated suites.
    Train(TrainArgs),
    /// Bird's-eye SVG of ground truth and predicted tracks.
    Plot(PlotArgs),
    /// Regenerate the full ablation study into one directory.
    Repro(ReproArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["scenario", "suite"])))]
pub struct SimulateArgs {
    /// Scenario config (JSON).
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Named suite: occlusion, turning, crowded, handoff.
    #[arg(long)]
    pub suite: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Suite seed, or the noise seed of a single scenario (defaults to its own).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TbdArgs {
    #[arg(long, default_value_t = TbdConfig::default().score_thresh)]
    pub score_thresh: f64,
    #[arg(long, default_value_t = TbdConfig::default().gate)]
    pub gate: f64,
    #[arg(long, default_value_t = TbdConfig::default().max_age)]
    pub max_age: u32,
    #[arg(long, default_value_t = TbdConfig::default().min_hits)]
    pub min_hits: u32,
}

impl TbdArgs {
    fn config(&self) -> TbdConfig {
        TbdConfig {
            score_thresh: self.score_thresh,
            gate: self.gate,
            max_age: self.max_age,
            min_hits: self.min_hits,
            ..TbdConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub detections: PathBuf,
    /// Weights file; required by every mode except tbd-*.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Tracker config (JSON); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// pftrack, pftrack-no-ext, pftrack-no-past, velocity, tbd-hungarian, tbd-greedy.
    #[arg(long)]
    pub mode: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-frame forecasts here.
    #[arg(long)]
    pub forecasts: Option<PathBuf>,
    /// Pad the log with empty frames up to this count.
    #[arg(long)]
    pub frames: Option<u64>,
    #[command(flatten)]
    pub tbd: TbdArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// Forecast log for ADE/FDE.
    #[arg(long)]
    pub forecasts: Option<PathBuf>,
    #[arg(long, default_value_t = EvalConfig::default().match_dist)]
    pub match_dist: f64,
    #[arg(long, default_value_t = EvalConfig::default().n_recall)]
    pub n_recall: usize,
    #[arg(long, default_value_t = EvalConfig::default().horizon)]
    pub horizon: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Object counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    /// History lengths, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub tau: Vec<usize>,
    #[arg(long, default_value_t = 32)]
    pub d: usize,
    /// CSV output; the table is printed either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training suites, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "occlusion,turning,crowded"
    )]
    pub suite: Vec<String>,
    /// Scenarios per suite.
    #[arg(long, default_value_t = 15)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output weights of the full model.
    #[arg(long)]
    pub out: PathBuf,
    /// Output weights of the model without past reasoning.
    #[arg(long)]
    pub no_past_out: Option<PathBuf>,
    /// Loss curve CSV; defaults to `<out>.loss.csv`.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub refine_steps: Option<usize>,
    #[arg(long)]
    pub motion_steps: Option<usize>,
    /// Leave the past-reasoning blocks and refinement heads at their seeded values.
    #[arg(long)]
    pub no_refine: bool,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub title: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReproArgs {
    #[arg(long, default_value_t = 17)]
    pub seed: u64,
    #[arg(long, default_value = "repro_out")]
    pub out: PathBuf,
    /// Scenarios per evaluation suite.
    #[arg(long)]
    pub suite_size: Option<usize>,
    /// Training scenarios per suite.
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn sidecar(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn to_value<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn load_tracker_config(path: Option<&Path>) -> Result<TrackerConfig> {
    let c = match path {
        Some(p) => read_json::<TrackerConfig>(p)?,
        None => TrackerConfig::default(),
    };
    c.validate()?;
    Ok(c)
}

fn write_sim(dir: &Path, config: &ScenarioConfig, sim: &Simulation) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("gt.jsonl"), to_jsonl(&sim.gt).as_bytes())?;
    write_atomic(
        &dir.join("detections.jsonl"),
        to_jsonl(&sim.detections).as_bytes(),
    )?;
    write_json(&dir.join("scenario.json"), config)
}

fn cmd_simulate(a: &SimulateArgs, m: &mut RunManifest) -> Result<Option<PathBuf>> {
    if a.count == 0 {
        return Err(Error::config("count", "must be ≥ 1"));
    }
    if let Some(path) = &a.scenario {
        let config: ScenarioConfig = read_json(path)?;
        config.validate()?;
        let sim = simulate(&config, a.seed.unwrap_or(config.seed))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or("scenario".into());
        let dir = a.out.join(stem);
        write_sim(&dir, &config, &sim)?;
        m.inputs.push(path_str(path));
        m.outputs.push(path_str(&dir));
    } else {
        let suite: Suite = a.suite.as_deref().unwrap_or_default().parse()?;
        let seed = a.seed.unwrap_or(0);
        let configs = querytrack::sim::scenario_suite(suite, a.count, seed)?;
        let sims = simulate_suite(suite, a.count, seed)?;
        for (i, (c, s)) in configs.iter().zip(&sims).enumerate() {
            let dir = a.out.join(format!("{}-{i:03}", suite.name()));
            write_sim(&dir, c, s)?;
            m.outputs.push(path_str(&dir));
        }
    }
    Ok(Some(a.out.join("manifest.json")))
}

fn cmd_track(a: &TrackArgs, m: &mut RunManifest) -> Result<Option<PathBuf>> {
    let mode: Mode = a.mode.parse()?;
    let config = load_tracker_config(a.config.as_deref())?;
    let records = read_detections(&a.detections)?;
    m.inputs.push(path_str(&a.detections));
    let weights = if mode.uses_weights() {
        let path = a.weights.as_ref().ok_or_else(|| {
            Error::config("weights", format!("--weights is required for mode {mode}"))
        })?;
        m.inputs.push(path_str(path));
        let w = ModelParams::load(path, &config)?;
        if let Some(r) = records.iter().find(|r| r.feature.len() != config.d) {
            return Err(Error::config(
                "detections.feature",
                format!(
                    "frame {}: feature length {} does not match weights d = {}",
                    r.frame,
                    r.feature.len(),
                    config.d
                ),
            ));
        }
        Weights {
            full: w.clone(),
            no_past: w,
        }
    } else {
        let w = ModelParams::seeded(&config, 0)?;
        Weights {
            full: w.clone(),
            no_past: w,
        }
    };
    let tbd = a.tbd.config();
    tbd.validate()?;
    let out = run_mode(mode, &records, a.frames, &weights, &config, &tbd)?;
    write_atomic(&a.out, to_jsonl(&out.tracks).as_bytes())?;
    m.outputs.push(path_str(&a.out));
    if let Some(f) = &a.forecasts {
        write_atomic(f, to_jsonl(&out.forecasts).as_bytes())?;
        m.outputs.push(path_str(f));
    }
    m.config = json!({ "mode": mode.name(), "tracker": to_value(&config), "tbd": to_value(&tbd), "frames": a.frames });
    m.config_hash = querytrack::manifest::config_hash(&m.config);
    Ok(Some(sidecar(&a.out)))
}

fn cmd_eval(a: &EvalArgs, m: &mut RunManifest) -> Result<Option<PathBuf>> {
    let gt: Vec<TrackRecord> = read_jsonl(&a.gt)?;
    let pred: Vec<TrackRecord> = read_jsonl(&a.pred)?;
    let forecasts: Vec<ForecastRecord> = match &a.forecasts {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let config = EvalConfig {
        match_dist: a.match_dist,
        n_recall: a.n_recall,
        horizon: a.horizon,
    };
    let report = evaluate(
        &[EvalSequence {
            gt,
            pred,
            forecasts,
        }],
        &config,
    )?;
    write_json(&a.report, &report)?;
    let g = &report.aggregate;
    println!(
        "amota {:.4} amotp {:.4} mota {:.4} motp {:.4} ids {} fp {} fn {}",
        g.amota, g.amotp, g.mota, g.motp, g.ids, g.fp, g.fn_
    );
    if let (Some(ade), Some(fde)) = (report.ade, report.fde) {
        println!(
            "ade {ade:.4} fde {fde:.4} over {} forecasts",
            report.forecasts_evaluated
        );
    }
    m.inputs.extend([path_str(&a.gt), path_str(&a.pred)]);
    m.inputs.extend(a.forecasts.as_deref().map(path_str));
    m.outputs.push(path_str(&a.report));
    m.config = to_value(&config);
    m.config_hash = querytrack::manifest::config_hash(&m.config);
    Ok(Some(sidecar(&a.report)))
}

/// FLOP table rows: measured and closed-form counts for both layouts.
pub fn bench_table(ns: &[usize], taus: &[usize], d: usize) -> Result<String> {
    if d == 0 {
        return Err(Error::config("d", "must be ≥ 1"));
    }
    let mut s =
        String::from("n,tau,global_macs,decoupled_macs,closed_global,closed_decoupled,ratio\n");
    for &n in ns {
        for &tau in taus {
            if n == 0 || tau == 0 {
                return Err(Error::config("n/tau", "values must be ≥ 1"));
            }
            let (g, dc) = flop_compare(n, tau, d)?;
            let (cg, cd) = flop_closed_form(n, tau, d);
            let _ = writeln!(
                s,
                "{n},{tau},{},{},{cg},{cd},{:.4}",
                g.attention_macs,
                dc.attention_macs,
                g.attention_macs as f64 / dc.attention_macs as f64
            );
        }
    }
    Ok(s)
}

fn cmd_bench(a: &BenchArgs, m: &mut RunManifest) -> Result<Option<PathBuf>> {
    let table = bench_table(&a.n, &a.tau, a.d)?;
    print!("{table}");
    if let Some(out) = &a.out {
        write_atomic(out, table.as_bytes())?;
        m.outputs.push(path_str(out));
        return Ok(Some(sidecar(out)));
    }
    Ok(None)
}

fn cmd_train(a: &TrainArgs, m: &mut RunManifest) -> Result<Option<PathBuf>> {
    let config = load_tracker_config(a.config.as_deref())?;
    if a.count == 0 {
        return Err(Error::config("count", "must be ≥ 1"));
    }
    let mut schedule = Schedule::default();
    if let Some(r) = a.rounds {
        schedule.rounds = r;
    }
    if let Some(s) = a.refine_steps {
        schedule.refine.steps = s;
    }
    if let Some(s) = a.motion_steps {
        schedule.motion.steps = s;
    }
    schedule.refine_heads = !a.no_refine;
    schedule.validate()?;
    let mut sims = Vec::new();
    for name in &a.suite {
        let suite: Suite = name.parse()?;
        sims.extend(simulate_suite(suite, a.count, a.seed)?);
    }
    let lc = LossConfig::default();
    let trained = train_all(&sims, &config, &lc, &schedule)?;
    trained.weights.full.save(&a.out, &config)?;
    m.outputs.push(path_str(&a.out));
    if let Some(p) = &a.no_past_out {
        trained.weights.no_past.save(p, &config)?;
        m.outputs.push(path_str(p));
    }
    let csv_path = a.loss_csv.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".loss.csv");
        PathBuf::from(s)
    });
    let mut csv = String::from("phase,step,loss\n");
    for (phase, c) in [
        ("refine", &trained.refine_curve),
        ("motion", &trained.motion_curve),
        ("no_past", &trained.no_past_curve),
    ] {
        for (i, l) in c.losses.iter().enumerate() {
            let _ = writeln!(csv, "{phase},{i},{l:.10e}");
        }
    }
    write_atomic(&csv_path, csv.as_bytes())?;
    m.outputs.push(path_str(&csv_path));
    m.config = json!({
        "suites": a.suite,
        "count": a.count,
        "tracker": to_value(&config),
        "loss": to_value(&lc),
        "schedule": to_value(&schedule),
    });
    m.config_hash = querytrack::manifest::config_hash(&m.config);
    Ok(Some(sidecar(&a.out)))
}

fn cmd_plot(a: &PlotArgs, m: &mut RunManifest) -> Result<Option<PathBuf>> {
    let gt: Vec<TrackRecord> = read_jsonl(&a.gt)?;
    let pred: Vec<TrackRecord> = read_jsonl(&a.pred)?;
    let title = a.title.clone().unwrap_or_else(|| {
        a.pred
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    write_atomic(&a.out, bev_svg(&gt, &pred, &title).as_bytes())?;
    m.inputs.extend([path_str(&a.gt), path_str(&a.pred)]);
    m.outputs.push(path_str(&a.out));
    m.config = json!({ "title": title });
    m.config_hash = querytrack::manifest::config_hash(&m.config);
    Ok(Some(sidecar(&a.out)))
}

fn cmd_repro(a: &ReproArgs, m: &mut RunManifest) -> Result<Option<PathBuf>> {
    let mut opts = ReproOptions {
        seed: a.seed,
        ..ReproOptions::default()
    };
    if let Some(n) = a.suite_size {
        opts.suite_size = n;
    }
    if let Some(n) = a.train_count {
        opts.train_count = n;
    }
    if let Some(r) = a.rounds {
        opts.schedule.rounds = r;
    }
    let summary = repro(&a.out, &opts)?;
    for r in &summary.table {
        println!(
            "{:<10} {:<16} amota {:.4} amotp {:.4} mota {:.4} ids {}",
            r.suite, r.mode, r.amota, r.amotp, r.mota, r.ids
        );
    }
    m.config = to_value(&opts);
    m.config_hash = summary.config_hash.clone();
    m.outputs.push(path_str(&a.out));
    Ok(Some(a.out.join("manifest.json")))
}

fn manifest_for(cli: &Cli, args: &[String]) -> RunManifest {
    let (name, seed) = match &cli.command {
        Command::Simulate(a) => ("simulate", a.seed),
        Command::Track(_) => ("track", None),
        Command::Eval(_) => ("eval", None),
        Command::Bench(_) => ("bench", None),
        Command::Train(a) => ("train", Some(a.seed)),
        Command::Plot(_) => ("plot", None),
        Command::Repro(a) => ("repro", Some(a.seed)),
    };
    RunManifest::new(name, args.to_vec(), json!({}), seed)
}

pub fn run(cli: &Cli, args: &[String]) -> Result<()> {
    let start = Instant::now();
    let mut m = manifest_for(cli, args);
    let manifest_path = match &cli.command {
        Command::Simulate(a) => {
            m.config = json!({ "scenario": a.scenario.as_deref().map(path_str), "suite": a.suite, "count": a.count, "seed": a.seed });
            m.config_hash = querytrack::manifest::config_hash(&m.config);
            cmd_simulate(a, &mut m)
        }
        Command::Track(a) => cmd_track(a, &mut m),
        Command::Eval(a) => cmd_eval(a, &mut m),
        Command::Bench(a) => {
            m.config = json!({ "n": a.n, "tau": a.tau, "d": a.d });
            m.config_hash = querytrack::manifest::config_hash(&m.config);
            cmd_bench(a, &mut m)
        }
        Command::Train(a) => cmd_train(a, &mut m),
        Command::Plot(a) => cmd_plot(a, &mut m),
        Command::Repro(a) => cmd_repro(a, &mut m),
    }?;
    m.wall_clock_s = start.elapsed().as_secs_f64();
    log::info!("{} finished in {:.2}s", m.command, m.wall_clock_s);
    match manifest_path {
        Some(p) => m.write(&p),
        None => Ok(()),
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    let workers = par::init_pool();
    log::debug!("{workers} worker threads");
    let printable: Vec<String> = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match run(&cli, &printable) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
