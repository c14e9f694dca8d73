//! Subcommand implementations. Each takes a loaded [`Experiment`], optional
//! command-line overrides, an output directory and an executor.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use neurocomm_core::baseline::DigitalBaseline;
use neurocomm_core::data::{prepare_samples, synth_dataset, DataSplit, Sample, SensorSplit};
use neurocomm_core::exec::{Executor, Sequential};
use neurocomm_core::modem::Scheme;
use neurocomm_core::pipeline::{LossHorizon, ModelParams, ParamGroup, Regime};
use neurocomm_core::trainer::{evaluate, evaluate_per_channel, grad_check, grad_check_fixture, MetricTrace, StepReport, Trainer};

use crate::checkpoint::{self, CheckpointHeader};
use crate::config::{ExperimentConfig, RunKind, SweepAxis};
use crate::error::{Error, Result};
use crate::trace::{self, SweepPoint, SweepRow, TraceMeta, TraceSummary};
use crate::{alist, loader};

/// A validated config, its hash and the directory relative paths in it
/// are resolved against.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub hash: String,
    pub base_dir: PathBuf,
}

impl Experiment {
    pub fn new(config: ExperimentConfig, base_dir: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        Ok(Experiment {
            hash: config.hash(),
            config,
            base_dir: base_dir.into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let config = ExperimentConfig::load(path)?;
        Self::new(config, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    /// The config with command-line overrides applied. The hash stays that
    /// of the file, so runs that differ only in overrides can be merged.
    pub fn effective(&self, ov: &Overrides) -> ExperimentConfig {
        let mut cfg = self.config.clone();
        if let Some(seed) = ov.seed {
            cfg.train.seed = seed;
            cfg.baseline.ann.seed = seed;
        }
        if let Some(regime) = ov.run.and_then(RunKind::regime) {
            cfg.train.regime = regime;
        }
        if let Some(scheme) = ov.scheme {
            cfg.system.scheme = scheme;
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub run: Option<RunKind>,
    pub scheme: Option<Scheme>,
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub split: SensorSplit,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

fn load_split(exp: &Experiment, cfg: &ExperimentConfig) -> Result<DataSplit> {
    let data = match &cfg.data.manifest {
        Some(m) => loader::load_events(&exp.resolve(m))?,
        None => synth_dataset(&cfg.data.synthetic)?,
    };
    data.train.validate()?;
    data.test.validate()?;
    Ok(data)
}

/// Loads or generates the dataset and cuts it into per-device views.
pub fn prepare_data(exp: &Experiment, cfg: &ExperimentConfig) -> Result<PreparedData> {
    let data = load_split(exp, cfg)?;
    let d = &data.train;
    if data.test.channels() != d.channels() || data.test.steps != d.steps {
        return Err(Error::invalid("train and test splits differ in shape"));
    }
    if d.is_empty() || data.test.is_empty() {
        return Err(Error::invalid("train and test splits must both be non-empty"));
    }
    cfg.check_shape(d.channels(), d.steps, d.classes)?;
    let split = SensorSplit::new(cfg.system.devices(), cfg.data.sensor_fraction, d.channels())?;
    Ok(PreparedData {
        train: prepare_samples(&data.train, &split)?,
        test: prepare_samples(&data.test, &split)?,
        split,
    })
}

fn data_channels(exp: &Experiment, cfg: &ExperimentConfig) -> Result<usize> {
    Ok(match &cfg.data.manifest {
        Some(m) => {
            let m = loader::read_manifest(&exp.resolve(m))?;
            m.rows * m.cols
        }
        None => cfg.data.synthetic.rows * cfg.data.synthetic.cols,
    })
}

fn spiking_regime(run: RunKind) -> Result<Regime> {
    match run {
        RunKind::Hyper => Ok(Regime::Hyper),
        RunKind::Joint => Ok(Regime::Joint),
        _ => Err(Error::invalid(format!(
            "{run} has no single trained model; evaluate it with `eval --regime {run}`"
        ))),
    }
}

/// Trains the configured regime from a fresh initialization.
pub fn train_model<E: Executor>(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    exec: &E,
    log: impl FnMut(&StepReport),
) -> Result<ModelParams> {
    spiking_regime(cfg.train.regime.into())?;
    let params = ModelParams::init(&cfg.system, cfg.train.seed)?;
    let mut trainer = Trainer::new(cfg.system.clone(), cfg.train.clone(), params)?;
    trainer.run(&data.train, exec, log)?;
    Ok(trainer.params)
}

/// Evaluation trace of one run kind. Hyper and joint use `params` when
/// given and train in-process otherwise; the per-channel reference and the
/// digital baseline always train their own models.
pub fn evaluate_run<E: Executor>(
    exp: &Experiment,
    cfg: &ExperimentConfig,
    data: &PreparedData,
    run: RunKind,
    params: Option<&ModelParams>,
    exec: &E,
) -> Result<MetricTrace> {
    let ev = &cfg.eval;
    let trace = match run {
        RunKind::Hyper | RunKind::Joint => {
            let regime = spiking_regime(run)?;
            let trained;
            let params = match params {
                Some(p) => p,
                None => {
                    let mut c = cfg.clone();
                    c.train.regime = regime;
                    trained = train_model(&c, data, exec, |_| {})?;
                    &trained
                }
            };
            evaluate(&cfg.system, params, regime, &data.test, ev.realizations, ev.seed, exec)?
        }
        RunKind::PerChannel => {
            let init = ModelParams::init(&cfg.system, cfg.train.seed)?;
            evaluate_per_channel(&cfg.system, &init, &cfg.train, &data.train, &data.test, ev.realizations, ev.seed, exec)?
        }
        RunKind::Digital => {
            let baseline = match &cfg.baseline.parity_matrix {
                Some(p) => {
                    let code = alist::load_code(&exp.resolve(Path::new(p)))?;
                    DigitalBaseline::train_with_code(&cfg.system, &cfg.baseline, code, &data.train)?
                }
                None => DigitalBaseline::train(&cfg.system, &cfg.baseline, &data.train)?,
            };
            baseline.evaluate(&cfg.system, &data.test, ev.realizations, ev.seed, exec)?
        }
    };
    trace::validate_trace(&trace)?;
    Ok(trace)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn run_seed(cfg: &ExperimentConfig, run: RunKind) -> u64 {
    match run {
        RunKind::Digital => cfg.baseline.ann.seed,
        _ => cfg.train.seed,
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub final_loss: f64,
}

/// Trains and writes `checkpoint.bin` and `train_log.jsonl` into `out`.
pub fn cmd_train<E: Executor>(exp: &Experiment, ov: &Overrides, out: &Path, exec: &E) -> Result<TrainArtifacts> {
    let cfg = exp.effective(ov);
    let regime = spiking_regime(ov.run.unwrap_or(cfg.train.regime.into()))?;
    let data = prepare_data(exp, &cfg)?;
    create_dir(out)?;
    let log_path = out.join("train_log.jsonl");
    let file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    let mut io_error = None;
    let mut final_loss = f64::NAN;
    let start = Instant::now();
    let params = train_model(&cfg, &data, exec, |r| {
        final_loss = r.loss;
        let rec = LogRecord {
            step: r.step,
            loss: r.loss,
            accuracy: r.accuracy,
            wall_ms: cfg.log_wall_time.then(|| start.elapsed().as_secs_f64() * 1e3),
        };
        let line = serde_json::to_string(&rec).expect("log record serializes");
        if let Err(e) = writeln!(writer, "{line}") {
            io_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_error {
        return Err(Error::io(&log_path, e));
    }
    writer.flush().map_err(|e| Error::io(&log_path, e))?;
    let header = CheckpointHeader::describe(&params, &exp.hash, regime, cfg.system.scheme, cfg.train.seed, cfg.train.steps);
    let ckpt = out.join("checkpoint.bin");
    checkpoint::save(&ckpt, &header, &params)?;
    Ok(TrainArtifacts {
        checkpoint: ckpt,
        log: log_path,
        final_loss,
    })
}

/// Loads a checkpoint written for this experiment. Its regime, scheme and
/// seed replace the configured ones; conflicting overrides are refused.
pub fn load_checkpoint(exp: &Experiment, ov: &Overrides, path: &Path) -> Result<(ExperimentConfig, ModelParams)> {
    let header = checkpoint::read_header(path)?;
    let conflict = |what: &str| Err(Error::invalid(format!("--{what} conflicts with the checkpoint")));
    if ov.run.is_some_and(|r| r != header.regime.into()) {
        return conflict("regime");
    }
    if ov.scheme.is_some_and(|s| s != header.scheme) {
        return conflict("scheme");
    }
    if ov.seed.is_some_and(|s| s != header.seed) {
        return conflict("seed");
    }
    let mut cfg = exp.effective(ov);
    cfg.train.regime = header.regime;
    cfg.train.seed = header.seed;
    cfg.system.scheme = header.scheme;
    let template = ModelParams::init(&cfg.system, header.seed)?;
    let (_, params) = checkpoint::load(path, &template, &exp.hash)?;
    Ok((cfg, params))
}

/// A written trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedTrace {
    pub meta: TraceMeta,
    pub trace: MetricTrace,
    pub csv: PathBuf,
}

fn emit(exp: &Experiment, cfg: &ExperimentConfig, out: &Path, stem: &str, run: RunKind, trace: MetricTrace) -> Result<EmittedTrace> {
    let meta = TraceMeta {
        run,
        scheme: cfg.system.scheme,
        seed: run_seed(cfg, run),
        config_hash: exp.hash.clone(),
    };
    let summary = TraceSummary::new(&trace, &meta, cfg.eval.realizations, cfg.eval.target_accuracy);
    trace::write_trace_files(out, stem, &trace, &summary)?;
    Ok(EmittedTrace {
        meta,
        trace,
        csv: out.join(format!("{stem}.csv")),
    })
}

/// Evaluates one run kind (plus the digital baseline if configured) and
/// writes `trace_<regime>_<scheme>.{csv,json}` per trace.
pub fn cmd_eval<E: Executor>(
    exp: &Experiment,
    ov: &Overrides,
    checkpoint: Option<&Path>,
    out: &Path,
    exec: &E,
) -> Result<Vec<EmittedTrace>> {
    let (cfg, params, run) = match checkpoint {
        Some(p) => {
            let (cfg, params) = load_checkpoint(exp, ov, p)?;
            let run = cfg.train.regime.into();
            (cfg, Some(params), run)
        }
        None => {
            let cfg = exp.effective(ov);
            let run = ov.run.unwrap_or(cfg.train.regime.into());
            (cfg, None, run)
        }
    };
    let data = prepare_data(exp, &cfg)?;
    create_dir(out)?;
    let mut runs = vec![run];
    if cfg.eval.baseline && run != RunKind::Digital {
        runs.push(RunKind::Digital);
    }
    runs.into_iter()
        .map(|r| {
            let trace = evaluate_run(exp, &cfg, &data, r, params.as_ref(), exec)?;
            emit(exp, &cfg, out, &format!("trace_{r}_{}", cfg.system.scheme), r, trace)
        })
        .collect()
}

/// Applies one sweep coordinate to a config.
pub fn apply_axis(exp: &Experiment, cfg: &mut ExperimentConfig, axis: SweepAxis, value: f64) -> Result<()> {
    match axis {
        SweepAxis::Expansion => cfg.system.expansion = value as usize,
        SweepAxis::Snr => cfg.system.snr_db = value,
        SweepAxis::Mu => {
            let split = SensorSplit::new(cfg.system.devices(), value, data_channels(exp, cfg)?)?;
            cfg.data.sensor_fraction = value;
            cfg.system.sensor_channels = split.per_device();
        }
    }
    cfg.validate()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub points: Vec<SweepPoint>,
    pub rows: Vec<SweepRow>,
    pub csv: PathBuf,
}

/// Trains and evaluates every (value, run, scheme, seed) point as an
/// independent job, writes each point's trace under `out/points/`, then
/// aggregates over seeds into `out/sweep.csv` and `out/sweep.json`.
pub fn cmd_sweep<E: Executor>(
    exp: &Experiment,
    ov: &Overrides,
    axis: Option<SweepAxis>,
    values: Option<&[f64]>,
    out: &Path,
    exec: &E,
) -> Result<SweepOutput> {
    let sw = &exp.config.sweep;
    let axis = axis.unwrap_or(sw.axis);
    let values = values.unwrap_or(&sw.values);
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    let runs = ov.run.map_or(sw.runs.clone(), |r| vec![r]);
    let schemes = ov.scheme.map_or(sw.schemes.clone(), |s| vec![s]);
    let seeds = ov.seed.map_or(sw.seeds.clone(), |s| vec![s]);
    let mut jobs = Vec::new();
    for &value in values {
        for &run in &runs {
            for &scheme in &schemes {
                for &seed in &seeds {
                    let point_ov = Overrides {
                        seed: Some(seed),
                        run: Some(run),
                        scheme: Some(scheme),
                    };
                    let mut cfg = exp.effective(&point_ov);
                    apply_axis(exp, &mut cfg, axis, value)?;
                    jobs.push((value, run, cfg));
                }
            }
        }
    }
    let dir = out.join("points");
    create_dir(&dir)?;
    let results = exec.map(jobs.len(), |i| {
        let (value, run, cfg) = &jobs[i];
        let data = prepare_data(exp, cfg)?;
        let trace = evaluate_run(exp, cfg, &data, *run, None, &Sequential)?;
        let stem = format!("{axis}_{value}_{run}_{}_seed{}", cfg.system.scheme, run_seed(cfg, *run));
        let e = emit(exp, cfg, &dir, &stem, *run, trace)?;
        Ok::<_, Error>(SweepPoint {
            value: *value,
            meta: e.meta,
            trace: e.trace,
        })
    });
    let points = results.into_iter().collect::<Result<Vec<_>>>()?;
    let rows = trace::aggregate(axis, &points, exp.config.eval.target_accuracy)?;
    let csv_path = out.join("sweep.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    trace::write_sweep_csv(std::io::BufWriter::new(file), &rows)?;
    let json_path = out.join("sweep.json");
    let text = serde_json::to_string_pretty(&rows).map_err(|e| Error::json("sweep summary", e))?;
    std::fs::write(&json_path, text + "\n").map_err(|e| Error::io(&json_path, e))?;
    Ok(SweepOutput {
        points,
        rows,
        csv: csv_path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckCase {
    pub scheme: Scheme,
    pub regime: Regime,
    pub horizon: LossHorizon,
    pub max_rel_error: f64,
    pub worst_group: Option<String>,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckSummary {
    pub config_hash: String,
    pub step: f64,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub worst: Option<GradCheckCase>,
    pub passed: bool,
    pub cases: Vec<GradCheckCase>,
}

/// Finite-difference check of the relaxed pipeline on the tiny system for
/// every configured (scheme, regime, horizon). Writes `gradcheck.json`;
/// exceeding the tolerance is a numeric failure.
pub fn cmd_gradcheck(exp: &Experiment, ov: &Overrides, out: &Path) -> Result<GradCheckSummary> {
    let gc = &exp.config.gradcheck;
    let seed = ov.seed.unwrap_or(gc.seed);
    let schemes = ov.scheme.map_or(gc.schemes.clone(), |s| vec![s]);
    let runs = ov.run.map_or(gc.runs.clone(), |r| vec![r]);
    let mut cases = Vec::new();
    for &scheme in &schemes {
        for &run in &runs {
            let regime = spiking_regime(run)?;
            for &horizon in &gc.horizons {
                let (system, params, sample, channel) = grad_check_fixture(scheme, seed)?;
                let r = grad_check(&system, &params, regime, &sample, &channel, seed, horizon, gc.step)?;
                cases.push(GradCheckCase {
                    scheme,
                    regime,
                    horizon,
                    max_rel_error: r.max_rel_error,
                    worst_group: r.worst_group.map(|g: ParamGroup| g.to_string()),
                    checked: r.checked,
                });
            }
        }
    }
    let worst = cases
        .iter()
        .filter(|c| !c.max_rel_error.is_nan())
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .cloned();
    let max = if cases.iter().any(|c| c.max_rel_error.is_nan()) {
        f64::NAN
    } else {
        worst.as_ref().map_or(0.0, |w| w.max_rel_error)
    };
    let summary = GradCheckSummary {
        config_hash: exp.hash.clone(),
        step: gc.step,
        tolerance: gc.tolerance,
        max_rel_error: max,
        passed: max <= gc.tolerance,
        worst,
        cases,
    };
    create_dir(out)?;
    let path = out.join("gradcheck.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::json("gradcheck report", e))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    if !summary.passed {
        return Err(Error::Numeric(format!(
            "gradient check failed: max relative error {max:e} exceeds {:e}",
            gc.tolerance
        )));
    }
    Ok(summary)
}

/// Writes the configured synthetic dataset as a manifest plus event files.
pub fn cmd_synth_data(exp: &Experiment, ov: &Overrides, out: &Path) -> Result<PathBuf> {
    let mut synth = exp.config.data.synthetic.clone();
    if let Some(seed) = ov.seed {
        synth.seed = seed;
    }
    loader::write_dataset(out, &synth_dataset(&synth)?)
}
