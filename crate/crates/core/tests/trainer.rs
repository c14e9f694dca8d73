use neurocomm_core::data::{prepare_samples, synth_dataset, Sample, SensorSplit, SynthConfig};
use neurocomm_core::exec::Sequential;
use neurocomm_core::pipeline::{example_loss, LossHorizon, ModelParams, Regime, SystemConfig};
use neurocomm_core::snn::Mode;
use neurocomm_core::trainer::{eval_channel, evaluate, evaluate_per_channel, TrainConfig, Trainer};

fn task() -> (SystemConfig, Vec<Sample>, Vec<Sample>) {
    let system = SystemConfig::default();
    let data = synth_dataset(&SynthConfig {
        train_per_class: 40,
        test_per_class: 10,
        ..SynthConfig::default()
    })
    .unwrap();
    let split = SensorSplit::new(1, 1.0, system.sensor_channels).unwrap();
    (
        system,
        prepare_samples(&data.train, &split).unwrap(),
        prepare_samples(&data.test, &split).unwrap(),
    )
}

fn config(regime: Regime, steps: usize) -> TrainConfig {
    TrainConfig {
        regime,
        steps,
        clip_norm: 1.0,
        horizon: LossHorizon::AllSteps,
        seed: 1,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let (system, train, _) = task();
    let init = ModelParams::init(&system, 0).unwrap();
    for regime in [Regime::Hyper, Regime::Joint] {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            momentum: 0.5,
            ..config(regime, 3)
        };
        let mut t = Trainer::new(system.clone(), cfg, init.clone()).unwrap();
        t.run(&train, &Sequential, |_| {}).unwrap();
        assert_eq!(t.params, init);
        assert_eq!(t.steps_done(), 3);
    }
}

/// Smoke test: a fixed batch on one frozen realization, scored with the
/// same hard forward pass the trainer differentiates through.
#[test]
fn loss_on_a_fixed_batch_decreases() {
    let (system, train, _) = task();
    let batch: Vec<Sample> = train.iter().step_by(5).take(16).cloned().collect();
    let channel = eval_channel(&system, 77, 0).unwrap();
    let loss = |p: &ModelParams| {
        batch
            .iter()
            .enumerate()
            .map(|(i, s)| {
                example_loss(&system, p, Regime::PerChannel, s, &channel, i as u64, LossHorizon::AllSteps, Mode::Hard)
                    .unwrap()
            })
            .sum::<f64>()
            / batch.len() as f64
    };
    let init = ModelParams::init(&system, 0).unwrap();
    let mut t = Trainer::per_channel(system.clone(), config(Regime::PerChannel, 50), init.clone(), channel.clone()).unwrap();
    let mut reports = Vec::new();
    t.run(&batch, &Sequential, |r| reports.push(*r)).unwrap();
    assert_eq!(reports.len(), 50);
    let (before, after) = (loss(&init), loss(&t.params));
    assert!(after < before - 0.05, "{before} -> {after}");
}

#[test]
fn joint_training_leaves_hypernetwork_and_pilots_alone() {
    let (system, train, _) = task();
    let init = ModelParams::init(&system, 0).unwrap();
    let mut t = Trainer::new(system, config(Regime::Joint, 5), init.clone()).unwrap();
    t.run(&train, &Sequential, |_| {}).unwrap();
    assert_eq!(t.params.hyper, init.hyper);
    assert_eq!(t.params.pilots, init.pilots);
    assert_ne!(t.params.decoder, init.decoder);
}

#[test]
fn hyper_training_keeps_pilots_within_budget() {
    let (system, train, _) = task();
    let init = ModelParams::init(&system, 0).unwrap();
    let cfg = TrainConfig {
        learning_rate: 5.0,
        clip_norm: 0.0,
        ..config(Regime::Hyper, 5)
    };
    let mut t = Trainer::new(system.clone(), cfg, init.clone()).unwrap();
    t.run(&train, &Sequential, |_| {}).unwrap();
    assert_ne!(t.params.pilots, init.pilots);
    for p in &t.params.pilots {
        assert!(p.norm_squared() <= system.pilot_budget() * (1.0 + 1e-9));
    }
}

#[test]
fn fixed_seed_training_is_reproducible() {
    let (system, train, test) = task();
    let run = || {
        let mut t = Trainer::new(system.clone(), config(Regime::Hyper, 10), ModelParams::init(&system, 3).unwrap()).unwrap();
        let mut log = Vec::new();
        t.run(&train, &Sequential, |r| log.push(*r)).unwrap();
        let trace = evaluate(&system, &t.params, Regime::Hyper, &test, 2, 4, &Sequential).unwrap();
        (t.params, log, trace)
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
}

#[test]
fn per_channel_training_uses_the_frozen_realization() {
    let (system, train, test) = task();
    let init = ModelParams::init(&system, 0).unwrap();
    let trace = evaluate_per_channel(&system, &init, &config(Regime::PerChannel, 2), &train, &test, 2, 6, &Sequential).unwrap();
    assert_eq!(trace.rows.len(), system.steps);
    assert!(Trainer::new(system.clone(), config(Regime::PerChannel, 2), init.clone()).is_err());
    let h = eval_channel(&system, 6, 0).unwrap();
    let mut t = Trainer::per_channel(system, config(Regime::Joint, 1), init, h).unwrap();
    assert_eq!(t.config.regime, Regime::PerChannel);
    t.run(&train, &Sequential, |_| {}).unwrap();
}

#[test]
fn invalid_configs_are_rejected() {
    for bad in [
        TrainConfig { learning_rate: -1.0, ..TrainConfig::default() },
        TrainConfig { momentum: 1.0, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { clip_norm: f64::NAN, ..TrainConfig::default() },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
}
