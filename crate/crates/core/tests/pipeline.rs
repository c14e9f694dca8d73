use nalgebra::DMatrix;
use rand::Rng;

use neurocomm_core::channel::ConstraintKind;
use neurocomm_core::data::{prepare_samples, synth_dataset, Sample, SensorSplit, SynthConfig};
use neurocomm_core::exec::Sequential;
use neurocomm_core::modem::Scheme;
use neurocomm_core::pipeline::{draw_channel, forward, ModelParams, Regime, SystemConfig};
use neurocomm_core::rng::stream;
use neurocomm_core::snn::Mode;
use neurocomm_core::trainer::evaluate;

fn system(scheme: Scheme) -> SystemConfig {
    SystemConfig {
        scheme,
        ..SystemConfig::default()
    }
}

fn random_sample<R: Rng>(system: &SystemConfig, rng: &mut R, p: f64) -> Sample {
    Sample {
        inputs: (0..system.devices())
            .map(|_| {
                DMatrix::from_fn(system.sensor_channels, system.steps, |_, _| f64::from(u8::from(rng.random_bool(p))))
            })
            .collect(),
        label: rng.random_range(0..system.classes),
    }
}

#[test]
fn silent_sensors_transmit_nothing() {
    for scheme in [Scheme::Lth, Scheme::Th] {
        let mut sys = system(scheme);
        sys.channel = neurocomm_core::channel::ChannelConfig::uniform(2, 2, 2, 5);
        let params = ModelParams::init(&sys, 1).unwrap();
        let silent = Sample {
            inputs: vec![DMatrix::zeros(sys.sensor_channels, sys.steps); 2],
            label: 0,
        };
        let channel = draw_channel(&sys, &mut stream(1, &[])).unwrap();
        for regime in [Regime::Hyper, Regime::Joint] {
            let (out, _) = forward(&sys, &params, regime, &silent, &channel, 5, Mode::Hard).unwrap();
            assert!(out.encoder_spikes.iter().all(|&s| s == 0.0), "{scheme} {regime}");
            assert!(out.block_energy.iter().all(|&e| e == 0.0), "{scheme} {regime}");
        }
    }
}

#[test]
fn no_energy_before_the_stimulus_onset() {
    let cfg = SynthConfig {
        onset: 10,
        train_per_class: 1,
        test_per_class: 20,
        ..SynthConfig::default()
    };
    let data = synth_dataset(&cfg).unwrap();
    for scheme in [Scheme::Lth, Scheme::Th] {
        let sys = system(scheme);
        let split = SensorSplit::new(1, 1.0, sys.sensor_channels).unwrap();
        let test = prepare_samples(&data.test, &split).unwrap();
        let params = ModelParams::init(&sys, 2).unwrap();
        let trace = evaluate(&sys, &params, Regime::Hyper, &test, 3, 9, &Sequential).unwrap();
        for row in &trace.rows {
            if row.step <= 10 {
                assert_eq!(row.cumulative_energy, 0.0, "{scheme} step {}", row.step);
                assert_eq!(row.encoder_spikes, 0.0);
            }
        }
        assert!(trace.rows.last().unwrap().cumulative_energy > 0.0);
    }
}

#[test]
fn outputs_up_to_a_step_ignore_later_inputs() {
    let mut rng = stream(41, &[]);
    for scheme in [Scheme::Lth, Scheme::Th] {
        for constraint in [ConstraintKind::PerSymbol, ConstraintKind::PerFrame] {
            let sys = SystemConfig {
                constraint,
                ..system(scheme)
            };
            let params = ModelParams::init(&sys, 3).unwrap();
            for trial in 0..10 {
                let a = random_sample(&sys, &mut rng, 0.1);
                let cut = rng.random_range(1..sys.steps);
                let mut b = random_sample(&sys, &mut rng, 0.1);
                b.label = a.label;
                for (ua, ub) in a.inputs.iter().zip(b.inputs.iter_mut()) {
                    ub.columns_mut(0, cut).copy_from(&ua.columns(0, cut));
                }
                let channel = draw_channel(&sys, &mut stream(trial, &[])).unwrap();
                let (oa, _) = forward(&sys, &params, Regime::Hyper, &a, &channel, trial, Mode::Hard).unwrap();
                let (ob, _) = forward(&sys, &params, Regime::Hyper, &b, &channel, trial, Mode::Hard).unwrap();
                assert_eq!(oa.probs.columns(0, cut), ob.probs.columns(0, cut), "{scheme} {constraint:?}");
                assert_eq!(oa.block_energy[..cut], ob.block_energy[..cut]);
                assert_eq!(oa.encoder_spikes[..cut], ob.encoder_spikes[..cut]);
            }
        }
    }
}

#[test]
fn forward_is_a_function_of_its_seed() {
    let sys = system(Scheme::Th);
    let params = ModelParams::init(&sys, 4).unwrap();
    let mut rng = stream(42, &[]);
    let sample = random_sample(&sys, &mut rng, 0.1);
    let channel = draw_channel(&sys, &mut rng).unwrap();
    let run = |seed| forward(&sys, &params, Regime::Hyper, &sample, &channel, seed, Mode::Hard).unwrap().0;
    let (a, b, c) = (run(7), run(7), run(8));
    assert_eq!(a.decoder_output, b.decoder_output);
    assert_eq!(a.block_energy, b.block_energy);
    // hop offsets and noise change with the seed
    assert_ne!(a.probs, c.probs);
}

#[test]
fn parameter_init_is_seeded() {
    let sys = system(Scheme::Lth);
    assert_eq!(ModelParams::init(&sys, 5).unwrap(), ModelParams::init(&sys, 5).unwrap());
    assert_ne!(ModelParams::init(&sys, 5).unwrap(), ModelParams::init(&sys, 6).unwrap());
    let p = ModelParams::init(&sys, 5).unwrap();
    for pilot in &p.pilots {
        assert!(pilot.norm_squared() <= sys.pilot_budget() * (1.0 + 1e-12));
    }
}
