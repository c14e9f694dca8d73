use std::path::Path;
use std::process::Command;

use proptest::prelude::*;

use neurocomm::exec::Pool;
use neurocomm::runner::{self, Experiment, Overrides};
use neurocomm::{trace, ExperimentConfig, RunKind, SweepAxis};
use neurocomm_core::exec::Sequential;

/// Small enough to train in a couple of seconds.
fn quick() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.train.steps = 8;
    cfg.train.batch_size = 4;
    cfg.eval.realizations = 2;
    cfg.data.synthetic.train_per_class = 8;
    cfg.data.synthetic.test_per_class = 4;
    cfg
}

fn experiment(cfg: ExperimentConfig) -> Experiment {
    Experiment::new(cfg, ".").unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_neurocomm"))
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

#[test]
fn train_then_eval_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let exp = experiment(quick());
    let ov = Overrides::default();
    let art = runner::cmd_train(&exp, &ov, dir.path(), &Sequential).unwrap();
    assert!(art.final_loss.is_finite());
    let log = std::fs::read_to_string(&art.log).unwrap();
    assert_eq!(log.lines().count(), 8);
    let records: Vec<runner::LogRecord> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(records.iter().all(|r| r.wall_ms.is_none()));

    let (cfg, params) = runner::load_checkpoint(&exp, &ov, &art.checkpoint).unwrap();
    assert_eq!(cfg, exp.config);
    let traces = runner::cmd_eval(&exp, &ov, Some(&art.checkpoint), dir.path(), &Sequential).unwrap();
    assert_eq!(traces.len(), 1);
    let t = &traces[0];
    assert_eq!(t.meta.run, RunKind::Hyper);
    assert_eq!(t.trace.rows.len(), cfg.system.steps);
    let (read, meta) = trace::read_csv(std::fs::File::open(&t.csv).unwrap()).unwrap();
    assert_eq!(meta, t.meta);
    assert_eq!(read.rows.len(), t.trace.rows.len());

    let data = runner::prepare_data(&exp, &cfg).unwrap();
    let again = runner::evaluate_run(&exp, &cfg, &data, RunKind::Hyper, Some(&params), &Sequential).unwrap();
    assert_eq!(again, t.trace);
}

#[test]
fn eval_can_add_the_digital_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick();
    cfg.eval.baseline = true;
    cfg.baseline.ann.hidden = 16;
    cfg.baseline.ann.steps = 10;
    let traces = runner::cmd_eval(&experiment(cfg), &Overrides::default(), None, dir.path(), &Sequential).unwrap();
    let runs: Vec<RunKind> = traces.iter().map(|t| t.meta.run).collect();
    assert_eq!(runs, [RunKind::Hyper, RunKind::Digital]);
    for t in &traces {
        assert!(t.csv.exists());
        assert!(t.csv.with_extension("json").exists());
    }
}

#[test]
fn single_point_sweep_matches_eval() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick();
    cfg.sweep.axis = SweepAxis::Snr;
    cfg.sweep.values = vec![cfg.system.snr_db];
    let exp = experiment(cfg);
    let pool = Pool::new(2).unwrap();
    let sweep = runner::cmd_sweep(&exp, &Overrides::default(), None, None, &dir.path().join("s"), &pool).unwrap();
    assert_eq!(sweep.points.len(), 1);
    assert_eq!(sweep.rows.len(), 1);
    assert!(sweep.csv.exists());
    let eval = runner::cmd_eval(&exp, &Overrides::default(), None, &dir.path().join("e"), &Sequential).unwrap();
    assert_eq!(sweep.points[0].trace, eval[0].trace);
    assert_eq!(sweep.rows[0].final_accuracy, eval[0].trace.final_accuracy());
}

#[test]
fn sweep_results_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick();
    cfg.sweep.values = vec![1.0, 2.0];
    cfg.sweep.seeds = vec![0, 1];
    let exp = experiment(cfg);
    let one = runner::cmd_sweep(&exp, &Overrides::default(), None, None, &dir.path().join("a"), &Sequential).unwrap();
    let three = runner::cmd_sweep(&exp, &Overrides::default(), None, None, &dir.path().join("b"), &Pool::new(3).unwrap()).unwrap();
    assert_eq!(one.points, three.points);
    assert_eq!(
        std::fs::read(dir.path().join("a/sweep.csv")).unwrap(),
        std::fs::read(dir.path().join("b/sweep.csv")).unwrap()
    );
}

#[test]
fn gradcheck_passes_and_reports_every_case() {
    let dir = tempfile::tempdir().unwrap();
    let s = runner::cmd_gradcheck(&experiment(ExperimentConfig::default()), &Overrides::default(), dir.path()).unwrap();
    assert!(s.passed);
    assert_eq!(s.cases.len(), 8);
    assert!(dir.path().join("gradcheck.json").exists());
}

#[test]
fn impossible_gradcheck_tolerance_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.gradcheck.tolerance = 1e-300;
    cfg.gradcheck.schemes.truncate(1);
    cfg.gradcheck.runs.truncate(1);
    let path = write_config(dir.path(), &cfg);
    let status = bin()
        .args(["gradcheck", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn synthetic_data_round_trips_through_the_loader() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick();
    let exp = experiment(cfg.clone());
    let manifest = runner::cmd_synth_data(&exp, &Overrides::default(), dir.path()).unwrap();

    let mut from_files = cfg.clone();
    from_files.data.manifest = Some(manifest);
    let a = runner::prepare_data(&exp, &cfg).unwrap();
    let b = runner::prepare_data(&experiment(from_files.clone()), &from_files).unwrap();
    assert_eq!(a.train, b.train);
    assert_eq!(a.test, b.test);
}

#[test]
fn unknown_config_key_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"train": {"learning_rat": 0.1}}"#).unwrap();
    let out = bin().args(["train", "--config"]).arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));
}

#[test]
fn bad_worker_count_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &quick());
    for bad in ["0", "many"] {
        let status = bin()
            .env("NEUROCOMM_WORKERS", bad)
            .args(["train", "--config"])
            .arg(&path)
            .arg("--out")
            .arg(dir.path())
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(2), "{bad}");
    }
}

#[test]
fn cli_train_writes_checkpoint_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &quick());
    let out = dir.path().join("run");
    let status = bin()
        .env("NEUROCOMM_WORKERS", "1")
        .args(["train", "--seed", "4", "--regime", "joint", "--scheme", "th", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("checkpoint.bin").exists());
    assert!(out.join("train_log.jsonl").exists());
}

#[test]
fn overrides_do_not_change_the_config_hash() {
    let exp = experiment(quick());
    let ov = Overrides {
        seed: Some(9),
        run: Some(RunKind::Joint),
        scheme: None,
    };
    let eff = exp.effective(&ov);
    assert_eq!(eff.train.seed, 9);
    assert_ne!(eff.hash(), exp.hash);
    assert_eq!(exp.hash, quick().hash());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn config_json_round_trips(lr in 0.0f64..5.0, steps in 1usize..1000, seed in any::<u64>(), snr in -20.0f64..30.0) {
        let mut cfg = ExperimentConfig::default();
        cfg.train.learning_rate = lr;
        cfg.train.steps = steps;
        cfg.train.seed = seed;
        cfg.system.snr_db = snr;
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }
}
