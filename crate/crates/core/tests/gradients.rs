use neurocomm_core::channel::ChannelRealization;
use neurocomm_core::data::Sample;
use neurocomm_core::modem::Scheme;
use neurocomm_core::pipeline::{example_gradient, LossHorizon, ModelParams, Regime, SystemConfig};
use neurocomm_core::snn::Mode;
use neurocomm_core::trainer::{grad_check, grad_check_fixture};

fn setup(scheme: Scheme, seed: u64) -> (SystemConfig, ModelParams, Sample, ChannelRealization) {
    grad_check_fixture(scheme, seed).unwrap()
}

#[test]
fn relaxed_gradients_match_finite_differences() {
    for scheme in [Scheme::Lth, Scheme::Th] {
        for horizon in [LossHorizon::FinalStep, LossHorizon::AllSteps] {
            for regime in [Regime::Hyper, Regime::Joint] {
                let (system, params, sample, channel) = setup(scheme, 3);
                let r = grad_check(&system, &params, regime, &sample, &channel, 7, horizon, 1e-5).unwrap();
                println!("{scheme} {horizon:?} {regime}: {:?}", r.groups);
                assert!(r.max_rel_error <= 1e-4, "{scheme} {horizon:?} {regime}: {r:?}");
            }
        }
    }
}

#[test]
fn pilot_gradient_depends_on_regime() {
    let (system, params, sample, channel) = setup(Scheme::Lth, 5);
    let (_, g) = example_gradient(&system, &params, Regime::Hyper, &sample, &channel, 1, LossHorizon::FinalStep, Mode::Relaxed).unwrap();
    assert!(g.pilots[0].iter().any(|&v| v != 0.0));
    let (_, g) = example_gradient(&system, &params, Regime::Joint, &sample, &channel, 1, LossHorizon::FinalStep, Mode::Relaxed).unwrap();
    assert!(g.pilots[0].iter().all(|&v| v == 0.0));
    assert!(g.hyper.w1.iter().chain(g.hyper.b2.iter()).all(|&v| v == 0.0));
}
