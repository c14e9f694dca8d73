//! Stochastic gradient training over sampled channel and noise realizations,
//! evaluation traces and the finite-difference gradient check.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
use rand::Rng;

use crate::channel::ChannelRealization;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::exec::{Executor, Sequential};
use crate::hypernet::argmax;
use crate::pipeline::{
    self, draw_channel, example_gradient, example_loss, LossHorizon, ModelParams, ParamGroup, Regime, SystemConfig,
};
use crate::modem::Scheme;
use crate::rng::{derive_seed, normal, stream, tag};
use crate::snn::Mode;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Heavy-ball momentum; zero gives plain SGD.
    pub momentum: f64,
    /// Rescales the mean gradient of the trained groups to at most this
    /// Euclidean norm; zero disables clipping.
    pub clip_norm: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Channel and noise draws per batch example.
    pub draws_per_example: usize,
    pub regime: Regime,
    pub horizon: LossHorizon,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.2,
            momentum: 0.0,
            clip_norm: 0.0,
            batch_size: 16,
            steps: 500,
            draws_per_example: 1,
            regime: Regime::Hyper,
            horizon: LossHorizon::FinalStep,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config("learning rate must be finite and non-negative"));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm >= 0.0) {
            return Err(Error::config("clip norm must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if self.batch_size == 0 || self.draws_per_example == 0 {
            return Err(Error::config("batch size and draws per example must be positive"));
        }
        Ok(())
    }
}

/// Loss and batch accuracy (final-step decision) of one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub system: SystemConfig,
    pub config: TrainConfig,
    pub params: ModelParams,
    velocity: Option<ModelParams>,
    /// Realization used for every draw in the `per_channel` regime.
    frozen: Option<ChannelRealization>,
    step: usize,
}

impl Trainer {
    pub fn new(system: SystemConfig, config: TrainConfig, params: ModelParams) -> Result<Self> {
        system.validate()?;
        config.validate()?;
        if config.regime == Regime::PerChannel {
            return Err(Error::config("per_channel training needs a frozen realization; use Trainer::per_channel"));
        }
        Ok(Trainer {
            system,
            config,
            params,
            velocity: None,
            frozen: None,
            step: 0,
        })
    }

    pub fn per_channel(
        system: SystemConfig,
        config: TrainConfig,
        params: ModelParams,
        channel: ChannelRealization,
    ) -> Result<Self> {
        system.validate()?;
        config.validate()?;
        Ok(Trainer {
            system,
            config: TrainConfig {
                regime: Regime::PerChannel,
                ..config
            },
            params,
            velocity: None,
            frozen: Some(channel),
            step: 0,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// One SGD update on a batch drawn from `samples`.
    ///
    /// The gradient is the mean over all batch examples and draws, reduced in
    /// index order.
    pub fn train_step<E: Executor>(&mut self, samples: &[Sample], exec: &E) -> Result<StepReport> {
        if samples.is_empty() {
            return Err(Error::config("empty training set"));
        }
        let cfg = &self.config;
        let seed = cfg.seed;
        let step = self.step as u64;
        let mut batch_rng = stream(seed, &[tag::BATCH, step]);
        let picks: Vec<usize> = (0..cfg.batch_size)
            .map(|_| batch_rng.random_range(0..samples.len()))
            .collect();
        let draws = cfg.draws_per_example;
        let system = &self.system;
        let params = &self.params;
        let frozen = self.frozen.as_ref();
        let (regime, horizon) = (cfg.regime, cfg.horizon);

        let results = exec.map(picks.len() * draws, |j| {
            let sample = &samples[picks[j / draws]];
            let drawn;
            let channel = match frozen {
                Some(h) => h,
                None => {
                    drawn = draw_channel(system, &mut stream(seed, &[tag::TRAIN_CHANNEL, step, j as u64]))?;
                    &drawn
                }
            };
            let noise = derive_seed(seed, &[tag::TRAIN_NOISE, step, j as u64]);
            let (out, tape) = pipeline::forward(system, params, regime, sample, channel, noise, Mode::Hard)?;
            let (loss, g) = pipeline::output_loss(&out.decoder_output, sample.label, horizon);
            let grads = pipeline::backward(system, params, channel, &tape, &g)?;
            let l = out.probs.ncols() - 1;
            let correct = argmax(out.probs.column(l).as_slice()) == sample.label;
            Ok::<_, Error>((loss, correct, grads))
        });

        let n = results.len() as f64;
        let mut total = params.zeros_like();
        let mut loss = 0.0;
        let mut correct = 0usize;
        for r in results {
            let (l, c, g) = r?;
            loss += l;
            correct += usize::from(c);
            total.add_scaled(1.0, &g, |_| true);
        }
        loss /= n;
        if !loss.is_finite() || !total.is_finite() {
            return Err(Error::NonFinite(alloc::format!(
                "loss {loss} at training step {}",
                self.step
            )));
        }

        let regime = self.config.regime;
        let trainable = move |g: ParamGroup| regime.trains(g);
        let lr = self.config.learning_rate;
        let clip = self.config.clip_norm;
        if clip > 0.0 {
            let norm = libm::sqrt(
                total
                    .named()
                    .iter()
                    .filter(|(_, g, _, _)| trainable(*g))
                    .flat_map(|(_, _, _, s)| s.iter())
                    .map(|v| v * v)
                    .sum::<f64>(),
            ) / n;
            if norm > clip {
                for (_, s) in total.slices_mut() {
                    s.iter_mut().for_each(|x| *x *= clip / norm);
                }
            }
        }
        let update = if self.config.momentum > 0.0 {
            let v = self.velocity.get_or_insert_with(|| total.zeros_like());
            let mu = self.config.momentum;
            for (_, s) in v.slices_mut() {
                s.iter_mut().for_each(|x| *x *= mu);
            }
            v.add_scaled(1.0 / n, &total, trainable);
            v.clone()
        } else {
            let mut t = total;
            for (_, s) in t.slices_mut() {
                s.iter_mut().for_each(|x| *x /= n);
            }
            t
        };
        self.params.add_scaled(-lr, &update, trainable);
        if regime.uses_hypernet() {
            self.params.project_pilots(self.system.pilot_budget());
        }
        if !self.params.is_finite() {
            return Err(Error::NonFinite(alloc::format!("parameters after step {}", self.step)));
        }
        self.step += 1;
        Ok(StepReport {
            step: self.step,
            loss,
            accuracy: correct as f64 / n,
        })
    }

    /// Runs `config.steps - steps_done()` updates, calling `log` after each.
    pub fn run<E: Executor>(
        &mut self,
        samples: &[Sample],
        exec: &E,
        mut log: impl FnMut(&StepReport),
    ) -> Result<()> {
        while self.step < self.config.steps {
            let r = self.train_step(samples, exec)?;
            log(&r);
        }
        Ok(())
    }
}

/// One row per sensed step `l = 1..=L`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRow {
    pub step: usize,
    pub accuracy: f64,
    /// Mean energy transmitted up to and including block `step`.
    pub cumulative_energy: f64,
    /// Mean cumulative transmitted pulses.
    pub encoder_spikes: f64,
    /// Mean cumulative decoder spikes.
    pub decoder_spikes: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricTrace {
    pub rows: Vec<TraceRow>,
}

impl MetricTrace {
    pub fn final_accuracy(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.accuracy)
    }

    /// First step whose accuracy reaches `target`.
    pub fn time_to_accuracy(&self, target: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.accuracy >= target).map(|r| r.step)
    }

    /// Element-wise mean of traces with equal length.
    pub fn mean(traces: &[MetricTrace]) -> Result<MetricTrace> {
        let first = traces.first().ok_or_else(|| Error::config("no traces to average"))?;
        if traces.iter().any(|t| t.rows.len() != first.rows.len()) {
            return Err(Error::config("traces differ in length"));
        }
        let n = traces.len() as f64;
        let rows = (0..first.rows.len())
            .map(|i| {
                let sum = |f: fn(&TraceRow) -> f64| traces.iter().map(|t| f(&t.rows[i])).sum::<f64>() / n;
                TraceRow {
                    step: first.rows[i].step,
                    accuracy: sum(|r| r.accuracy),
                    cumulative_energy: sum(|r| r.cumulative_energy),
                    encoder_spikes: sum(|r| r.encoder_spikes),
                    decoder_spikes: sum(|r| r.decoder_spikes),
                }
            })
            .collect();
        Ok(MetricTrace { rows })
    }
}

/// Per-step sums over a set of frames.
#[derive(Debug, Clone)]
struct Tally {
    frames: usize,
    correct: Vec<usize>,
    energy: Vec<f64>,
    enc: Vec<f64>,
    dec: Vec<f64>,
}

impl Tally {
    fn new(steps: usize) -> Self {
        Tally {
            frames: 0,
            correct: vec![0; steps],
            energy: vec![0.0; steps],
            enc: vec![0.0; steps],
            dec: vec![0.0; steps],
        }
    }

    fn merge(&mut self, other: &Tally) {
        self.frames += other.frames;
        for l in 0..self.correct.len() {
            self.correct[l] += other.correct[l];
            self.energy[l] += other.energy[l];
            self.enc[l] += other.enc[l];
            self.dec[l] += other.dec[l];
        }
    }

    fn into_trace(self) -> MetricTrace {
        let n = self.frames.max(1) as f64;
        let (mut e, mut s, mut d) = (0.0, 0.0, 0.0);
        let rows = (0..self.correct.len())
            .map(|l| {
                e += self.energy[l];
                s += self.enc[l];
                d += self.dec[l];
                TraceRow {
                    step: l + 1,
                    accuracy: self.correct[l] as f64 / n,
                    cumulative_energy: e / n,
                    encoder_spikes: s / n,
                    decoder_spikes: d / n,
                }
            })
            .collect();
        MetricTrace { rows }
    }
}

/// The `r`-th evaluation channel for `seed`, shared by every regime.
pub fn eval_channel(system: &SystemConfig, seed: u64, r: usize) -> Result<ChannelRealization> {
    draw_channel(system, &mut stream(seed, &[tag::EVAL_CHANNEL, r as u64]))
}

fn eval_on_channel(
    system: &SystemConfig,
    params: &ModelParams,
    regime: Regime,
    test: &[Sample],
    channel: &ChannelRealization,
    seed: u64,
    r: usize,
) -> Result<Tally> {
    let mut tally = Tally::new(system.steps);
    for (i, sample) in test.iter().enumerate() {
        let noise = derive_seed(seed, &[tag::EVAL_NOISE, r as u64, i as u64]);
        let (out, _) = pipeline::forward(system, params, regime, sample, channel, noise, Mode::Hard)?;
        tally.frames += 1;
        for l in 0..system.steps {
            if argmax(out.probs.column(l).as_slice()) == sample.label {
                tally.correct[l] += 1;
            }
            tally.energy[l] += out.block_energy[l];
            tally.enc[l] += out.encoder_spikes[l];
            tally.dec[l] += out.decoder_spikes[l];
        }
    }
    Ok(tally)
}

/// Accuracy and energy per step, averaged over `realizations` channel draws
/// and every test example.
pub fn evaluate<E: Executor>(
    system: &SystemConfig,
    params: &ModelParams,
    regime: Regime,
    test: &[Sample],
    realizations: usize,
    seed: u64,
    exec: &E,
) -> Result<MetricTrace> {
    let tallies = exec.map(realizations, |r| {
        let channel = eval_channel(system, seed, r)?;
        eval_on_channel(system, params, regime, test, &channel, seed, r)
    });
    let mut total = Tally::new(system.steps);
    for t in tallies {
        total.merge(&t?);
    }
    Ok(total.into_trace())
}

/// Ideal per-channel reference: for every evaluation realization, trains a
/// fresh copy of `init` on that frozen realization and evaluates on it.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_per_channel<E: Executor>(
    system: &SystemConfig,
    init: &ModelParams,
    train_cfg: &TrainConfig,
    train: &[Sample],
    test: &[Sample],
    realizations: usize,
    seed: u64,
    exec: &E,
) -> Result<MetricTrace> {
    let tallies = exec.map(realizations, |r| {
        let channel = eval_channel(system, seed, r)?;
        let cfg = TrainConfig {
            seed: derive_seed(train_cfg.seed, &[r as u64]),
            ..train_cfg.clone()
        };
        let mut trainer = Trainer::per_channel(system.clone(), cfg, init.clone(), channel.clone())?;
        trainer.run(train, &Sequential, |_| {})?;
        eval_on_channel(system, &trainer.params, Regime::PerChannel, test, &channel, seed, r)
    });
    let mut total = Tally::new(system.steps);
    for t in tallies {
        total.merge(&t?);
    }
    Ok(total.into_trace())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_group: Option<ParamGroup>,
    /// Worst relative error per parameter group.
    pub groups: Vec<(ParamGroup, f64)>,
    pub checked: usize,
}

/// The tiny system, parameters, random frame and channel used by gradient
/// checks. Encoder and decoder weights are scaled up so that relaxed
/// potentials sit near threshold, and the hypernetwork output layer is made
/// non-zero so every parameter group carries gradient.
pub fn grad_check_fixture(scheme: Scheme, seed: u64) -> Result<(SystemConfig, ModelParams, Sample, ChannelRealization)> {
    let system = SystemConfig::tiny(scheme);
    let mut params = ModelParams::init(&system, seed)?;
    let mut rng = stream(seed, &[99]);
    for (g, s) in params.slices_mut() {
        if matches!(g, ParamGroup::Encoder(_) | ParamGroup::Decoder) {
            s.iter_mut().for_each(|v| *v *= 4.0);
        }
    }
    params.hyper.w2.iter_mut().for_each(|v| *v = 0.3 * normal(&mut rng));
    let (d, l) = (system.sensor_channels, system.steps);
    let sample = Sample {
        inputs: vec![DMatrix::from_fn(d, l, |_, _| f64::from(u8::from(rng.random_bool(0.4))))],
        label: 1,
    };
    let channel = draw_channel(&system, &mut rng)?;
    Ok((system, params, sample, channel))
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares relaxed-mode analytic gradients with central differences of
/// step `h` for every trainable parameter of `regime`.
#[allow(clippy::too_many_arguments)]
pub fn grad_check(
    system: &SystemConfig,
    params: &ModelParams,
    regime: Regime,
    sample: &Sample,
    channel: &ChannelRealization,
    noise_seed: u64,
    horizon: LossHorizon,
    h: f64,
) -> Result<GradCheckReport> {
    let (_, grads) = example_gradient(system, params, regime, sample, channel, noise_seed, horizon, Mode::Relaxed)?;
    let analytic: Vec<(ParamGroup, Vec<f64>)> = grads
        .named()
        .into_iter()
        .map(|(_, g, _, s)| (g, s.to_vec()))
        .collect();
    let mut groups: Vec<(ParamGroup, f64)> = Vec::new();
    let mut checked = 0;
    let mut probe = params.clone();
    for (t, (group, a)) in analytic.iter().enumerate() {
        if !regime.trains(*group) {
            continue;
        }
        for i in 0..a.len() {
            let orig = probe.slices_mut()[t].1[i];
            probe.slices_mut()[t].1[i] = orig + h;
            let up = example_loss(system, &probe, regime, sample, channel, noise_seed, horizon, Mode::Relaxed)?;
            probe.slices_mut()[t].1[i] = orig - h;
            let down = example_loss(system, &probe, regime, sample, channel, noise_seed, horizon, Mode::Relaxed)?;
            probe.slices_mut()[t].1[i] = orig;
            let err = relative_error(a[i], (up - down) / (2.0 * h));
            checked += 1;
            match groups.iter_mut().find(|(g, _)| g == group) {
                Some((_, e)) => *e = e.max(err),
                None => groups.push((*group, err)),
            }
        }
    }
    let worst = groups
        .iter()
        .copied()
        .fold(None, |acc: Option<(ParamGroup, f64)>, x| match acc {
            Some(a) if a.1 >= x.1 => Some(a),
            _ => Some(x),
        });
    Ok(GradCheckReport {
        max_rel_error: worst.map_or(0.0, |w| w.1),
        worst_group: worst.map(|w| w.0),
        groups,
        checked,
    })
}
