//! One-shot reproduction of the ablation table: simulate, train, track with
//! every mode, evaluate, sweep the extension length and write all artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::TbdConfig;
use crate::error::{Error, Result};
use crate::io::{to_jsonl, write_atomic, write_json};
use crate::metrics::{evaluate, EvalConfig, EvalSequence, MetricsReport};
use crate::modes::{run_mode, Mode, Weights};
use crate::par;
use crate::plot::{bev_svg, line_chart_svg, Series};
use crate::sim::{scenario_suite, simulate, Simulation, Suite};
use crate::tracker::{PipelineOptions, SequenceOutput};
use crate::train::{collect_dataset, compare_forecasts, train_all, LossCurve, Schedule};
use crate::types::{LossConfig, TrackerConfig};

/// Mixed into the seed for training and tuning scenarios so they never
/// coincide with the evaluation suites.
const TRAIN_SALT: u64 = 0x5eed_0000_7ea1_0001;
const TUNE_SALT: u64 = 0x5eed_0000_7ea1_0002;

pub const EVAL_SUITES: [Suite; 4] = [
    Suite::Occlusion,
    Suite::Crowded,
    Suite::Turning,
    Suite::Handoff,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproOptions {
    pub seed: u64,
    /// Scenarios per evaluation suite.
    pub suite_size: usize,
    /// Training scenarios per suite (occlusion, turning, crowded).
    pub train_count: usize,
    /// Extra multiplier on turning training scenarios.
    pub turning_mult: usize,
    pub schedule: Schedule,
    pub tracker: TrackerConfig,
    pub loss: LossConfig,
    pub tbd: TbdConfig,
    /// Candidate TBD score thresholds, tuned by AMOTA on held-out scenarios.
    pub tbd_grid: Vec<f64>,
    pub eval: EvalConfig,
    /// Largest extension length in the sweep (inclusive, starting at 0).
    pub sweep_max: u32,
}

impl Default for ReproOptions {
    fn default() -> Self {
        Self {
            seed: 17,
            suite_size: 50,
            train_count: 15,
            turning_mult: 3,
            schedule: Schedule::default(),
            tracker: TrackerConfig::default(),
            loss: LossConfig::default(),
            tbd: TbdConfig::default(),
            tbd_grid: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            eval: EvalConfig::default(),
            sweep_max: 6,
        }
    }
}

impl ReproOptions {
    pub fn validate(&self) -> Result<()> {
        if self.suite_size == 0 {
            return Err(Error::config("suite_size", "must be ≥ 1"));
        }
        if self.train_count == 0 || self.turning_mult == 0 {
            return Err(Error::config(
                "train_count",
                "training scenarios must be ≥ 1",
            ));
        }
        if self.tbd_grid.is_empty() || self.tbd_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::config("tbd_grid", "needs thresholds in [0, 1]"));
        }
        self.schedule.validate()?;
        self.tracker.validate()?;
        self.loss.validate()?;
        self.tbd.validate()
    }
}

/// Simulates `count` scenarios of a suite, each with its own stored seed.
pub fn simulate_suite(suite: Suite, count: usize, seed: u64) -> Result<Vec<Simulation>> {
    let configs = scenario_suite(suite, count, seed)?;
    par::map(&configs, |c| simulate(c, c.seed))
        .into_iter()
        .collect()
}

pub fn training_sims(opts: &ReproOptions) -> Result<Vec<Simulation>> {
    let seed = opts.seed ^ TRAIN_SALT;
    let mut sims = simulate_suite(Suite::Occlusion, opts.train_count, seed)?;
    sims.extend(simulate_suite(
        Suite::Turning,
        opts.train_count * opts.turning_mult,
        seed,
    )?);
    sims.extend(simulate_suite(Suite::Crowded, opts.train_count, seed)?);
    Ok(sims)
}

fn frame_count(sim: &Simulation) -> Option<u64> {
    sim.gt.iter().map(|g| g.frame + 1).max()
}

/// Runs one mode over every simulation and evaluates the result.
pub fn evaluate_mode(
    mode: Mode,
    sims: &[Simulation],
    weights: &Weights,
    tracker: &TrackerConfig,
    tbd: &TbdConfig,
    eval: &EvalConfig,
) -> Result<(MetricsReport, Vec<SequenceOutput>)> {
    let outputs: Vec<SequenceOutput> = par::map(sims, |s| {
        run_mode(mode, &s.detections, frame_count(s), weights, tracker, tbd)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let seqs: Vec<EvalSequence> = sims
        .iter()
        .zip(&outputs)
        .map(|(s, o)| EvalSequence {
            gt: s.gt.clone(),
            pred: o.tracks.clone(),
            forecasts: o.forecasts.clone(),
        })
        .collect();
    Ok((evaluate(&seqs, eval)?, outputs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub suite: String,
    pub mode: String,
    pub amota: f64,
    pub amotp: f64,
    pub mota: f64,
    pub motp: f64,
    pub ids: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub ade: Option<f64>,
    pub fde: Option<f64>,
}

impl TableRow {
    fn new(suite: Suite, mode: Mode, r: &MetricsReport) -> Self {
        let a = &r.aggregate;
        Self {
            suite: suite.name().into(),
            mode: mode.name().into(),
            amota: a.amota,
            amotp: a.amotp,
            mota: a.mota,
            motp: a.motp,
            ids: a.ids,
            fp: a.fp,
            fn_: a.fn_,
            ade: r.ade,
            fde: r.fde,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau_e: u32,
    pub ids: u64,
    pub amota: f64,
    pub mota: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub score_thresh: f64,
    pub hungarian_amota: f64,
    pub greedy_amota: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastComparison {
    pub suite: String,
    pub samples: usize,
    pub learned_ade: f64,
    pub learned_fde: f64,
    pub constant_velocity_ade: f64,
    pub constant_velocity_fde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproSummary {
    pub seed: u64,
    pub config_hash: String,
    pub table: Vec<TableRow>,
    pub tbd_tuning: Vec<TuneRow>,
    pub tbd_score_thresh: f64,
    pub sweep: Vec<SweepRow>,
    pub sweep_knee: Option<u32>,
    pub max_occlusion: u64,
    pub forecasts: ForecastComparison,
    pub final_losses: FinalLosses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalLosses {
    pub refine: f64,
    pub motion: f64,
    pub no_past: f64,
}

impl ReproSummary {
    pub fn row(&self, suite: Suite, mode: Mode) -> Option<&TableRow> {
        self.table
            .iter()
            .find(|r| r.suite == suite.name() && r.mode == mode.name())
    }
}

/// Smallest `τ_e` from which IDS never changes again, or `None` when the
/// sweep is not nonincreasing.
pub fn sweep_knee(rows: &[SweepRow]) -> Option<u32> {
    if rows.windows(2).any(|w| w[1].ids > w[0].ids) {
        return None;
    }
    let last = rows.last()?.ids;
    rows.iter().find(|r| r.ids == last).map(|r| r.tau_e)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut s = String::from("suite,mode,amota,amotp,mota,motp,ids,fp,fn,ade,fde\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{}",
            r.suite,
            r.mode,
            r.amota,
            r.amotp,
            r.mota,
            r.motp,
            r.ids,
            r.fp,
            r.fn_,
            fmt_opt(r.ade),
            fmt_opt(r.fde)
        );
    }
    s
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("tau_e,ids,amota,mota\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:.6},{:.6}", r.tau_e, r.ids, r.amota, r.mota);
    }
    s
}

struct Writer {
    root: PathBuf,
    written: Vec<String>,
    log: String,
}

impl Writer {
    fn file(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        write_atomic(&self.root.join(rel), contents)?;
        self.written.push(rel.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        write_json(&self.root.join(rel), value)?;
        self.written.push(rel.to_string());
        Ok(())
    }

    fn note(&mut self, line: impl AsRef<str>) {
        log::info!("{}", line.as_ref());
        self.log.push_str(line.as_ref());
        self.log.push('\n');
    }
}

fn loss_series(name: &str, c: &LossCurve) -> Series {
    Series {
        name: name.into(),
        points: c
            .losses
            .iter()
            .enumerate()
            .map(|(i, l)| (i as f64, *l))
            .collect(),
    }
}

fn tail_mean(c: &LossCurve) -> f64 {
    let n = c.losses.len().min(20);
    if n == 0 {
        return 0.0;
    }
    c.losses[c.losses.len() - n..].iter().sum::<f64>() / n as f64
}

/// Runs the whole study into `out`. Returns the summary, also written as
/// `summary.json`. Every file is a pure function of `opts`.
pub fn repro(out: &Path, opts: &ReproOptions) -> Result<ReproSummary> {
    opts.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let config_value = serde_json::to_value(opts).map_err(|e| Error::Invalid(e.to_string()))?;
    let hash = crate::manifest::config_hash(&config_value);
    let mut w = Writer {
        root: out.to_path_buf(),
        written: Vec::new(),
        log: String::new(),
    };
    w.note(format!("repro seed={} config_hash={hash}", opts.seed));

    let train = training_sims(opts)?;
    w.note(format!("training scenarios: {}", train.len()));
    let trained = train_all(&train, &opts.tracker, &opts.loss, &opts.schedule)?;
    let weights = trained.weights;
    let final_losses = FinalLosses {
        refine: tail_mean(&trained.refine_curve),
        motion: tail_mean(&trained.motion_curve),
        no_past: tail_mean(&trained.no_past_curve),
    };
    w.note(format!(
        "trained: refine loss {:.6}, motion loss {:.6}, no-past motion loss {:.6}",
        final_losses.refine, final_losses.motion, final_losses.no_past
    ));
    let meta = |name: &str| serde_json::json!({ "model": name, "seed": opts.seed });
    w.file(
        "weights/full.json",
        crate::io::weights_to_json(&weights.full, &meta("full")).as_bytes(),
    )?;
    w.file(
        "weights/no_past.json",
        crate::io::weights_to_json(&weights.no_past, &meta("no_past")).as_bytes(),
    )?;
    w.file("loss/refine.csv", trained.refine_curve.to_csv().as_bytes())?;
    w.file("loss/motion.csv", trained.motion_curve.to_csv().as_bytes())?;
    w.file(
        "loss/no_past.csv",
        trained.no_past_curve.to_csv().as_bytes(),
    )?;
    w.file(
        "loss/curves.svg",
        line_chart_svg(
            "Training loss",
            "step",
            "loss",
            &[
                loss_series("refinement", &trained.refine_curve),
                loss_series("motion", &trained.motion_curve),
                loss_series("motion (no past)", &trained.no_past_curve),
            ],
        )
        .as_bytes(),
    )?;

    let tune = simulate_suite(
        Suite::Occlusion,
        opts.suite_size.min(20),
        opts.seed ^ TUNE_SALT,
    )?;
    let mut tbd_tuning = Vec::new();
    for &t in &opts.tbd_grid {
        let cfg = TbdConfig {
            score_thresh: t,
            ..opts.tbd
        };
        let h = evaluate_mode(
            Mode::TbdHungarian,
            &tune,
            &weights,
            &opts.tracker,
            &cfg,
            &opts.eval,
        )?
        .0;
        let g = evaluate_mode(
            Mode::TbdGreedy,
            &tune,
            &weights,
            &opts.tracker,
            &cfg,
            &opts.eval,
        )?
        .0;
        tbd_tuning.push(TuneRow {
            score_thresh: t,
            hungarian_amota: h.aggregate.amota,
            greedy_amota: g.aggregate.amota,
        });
    }
    let best = tbd_tuning
        .iter()
        .fold(None::<&TuneRow>, |acc, r| match acc {
            Some(a) if a.hungarian_amota >= r.hungarian_amota => Some(a),
            _ => Some(r),
        })
        .expect("nonempty grid");
    let tbd = TbdConfig {
        score_thresh: best.score_thresh,
        ..opts.tbd
    };
    w.note(format!("tbd score threshold tuned to {}", tbd.score_thresh));

    let mut table = Vec::new();
    let mut eval_sims = Vec::new();
    for suite in EVAL_SUITES {
        let sims = simulate_suite(suite, opts.suite_size, opts.seed)?;
        for mode in Mode::ALL {
            let (report, outputs) =
                evaluate_mode(mode, &sims, &weights, &opts.tracker, &tbd, &opts.eval)?;
            let row = TableRow::new(suite, mode, &report);
            w.note(format!(
                "{} {}: amota {:.4} amotp {:.4} mota {:.4} ids {}",
                suite.name(),
                mode.name(),
                row.amota,
                row.amotp,
                row.mota,
                row.ids
            ));
            let stem = format!("{}-{}", suite.name(), mode.name());
            w.json(&format!("reports/{stem}.json"), &report)?;
            w.file(
                &format!("tracks/{stem}.jsonl"),
                to_jsonl(&outputs[0].tracks).as_bytes(),
            )?;
            w.file(
                &format!("plots/{stem}.svg"),
                bev_svg(
                    &sims[0].gt,
                    &outputs[0].tracks,
                    &format!("{} / {} / scenario 0", suite.name(), mode.name()),
                )
                .as_bytes(),
            )?;
            table.push(row);
        }
        w.file(
            &format!("tracks/{}-gt.jsonl", suite.name()),
            to_jsonl(&sims[0].gt).as_bytes(),
        )?;
        eval_sims.push((suite, sims));
    }
    w.file("ablation.csv", table_csv(&table).as_bytes())?;

    let occlusion = &eval_sims[0].1;
    let max_occlusion = scenario_suite(Suite::Occlusion, opts.suite_size, opts.seed)?
        .iter()
        .flat_map(|c| c.sensor.occlusions.iter().map(|o| o.len()))
        .max()
        .unwrap_or(0);
    let mut sweep = Vec::new();
    for tau_e in 0..=opts.sweep_max {
        let cfg = TrackerConfig {
            tau_e,
            ..opts.tracker
        };
        let report = evaluate_mode(Mode::Pftrack, occlusion, &weights, &cfg, &tbd, &opts.eval)?.0;
        sweep.push(SweepRow {
            tau_e,
            ids: report.aggregate.ids,
            amota: report.aggregate.amota,
            mota: report.aggregate.mota,
        });
    }
    let knee = sweep_knee(&sweep);
    w.note(format!(
        "extension sweep ids: {:?}, knee {:?}, max occlusion {max_occlusion}",
        sweep.iter().map(|r| r.ids).collect::<Vec<_>>(),
        knee
    ));
    w.file("extension_sweep.csv", sweep_csv(&sweep).as_bytes())?;
    w.file(
        "extension_sweep.svg",
        line_chart_svg(
            "ID switches vs extension length (occlusion suite)",
            "extension length (frames)",
            "ID switches",
            &[Series {
                name: "pftrack".into(),
                points: sweep
                    .iter()
                    .map(|r| (f64::from(r.tau_e), r.ids as f64))
                    .collect(),
            }],
        )
        .as_bytes(),
    )?;

    let turning = &eval_sims[2].1;
    let data = collect_dataset(
        turning,
        &weights.full,
        &opts.tracker,
        &PipelineOptions::default(),
        1,
    )?;
    let horizon = opts.eval.horizon.min(opts.tracker.tau_f);
    let (learned, cv) = compare_forecasts(&data.motion, &weights.full, &opts.tracker, horizon)?;
    let forecasts = ForecastComparison {
        suite: Suite::Turning.name().into(),
        samples: learned.count,
        learned_ade: learned.ade,
        learned_fde: learned.fde,
        constant_velocity_ade: cv.ade,
        constant_velocity_fde: cv.fde,
    };
    w.note(format!(
        "turning forecasts over {} samples: learned ADE {:.4}, constant-velocity ADE {:.4}",
        forecasts.samples, forecasts.learned_ade, forecasts.constant_velocity_ade
    ));

    let summary = ReproSummary {
        seed: opts.seed,
        config_hash: hash,
        table,
        tbd_tuning,
        tbd_score_thresh: tbd.score_thresh,
        sweep,
        sweep_knee: knee,
        max_occlusion,
        forecasts,
        final_losses,
    };
    w.json("summary.json", &summary)?;
    let log = std::mem::take(&mut w.log);
    w.file("repro.log", log.as_bytes())?;
    Ok(summary)
}

/// Files written by [`repro`], relative to the output directory, excluding
/// the manifest.
pub fn artifact_list(out: &Path) -> Result<Vec<PathBuf>> {
    fn walk(dir: &Path, root: &Path, acc: &mut Vec<PathBuf>) -> Result<()> {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(dir, e))?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let p = e.path();
            if p.is_dir() {
                walk(&p, root, acc)?;
            } else if p.file_name().is_some_and(|n| n != "manifest.json") {
                acc.push(p.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut acc = Vec::new();
    walk(out, out, &mut acc)?;
    Ok(acc)
}
