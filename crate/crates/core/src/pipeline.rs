//! End-to-end differentiable transmission chain.
//!
//! ```text
//! u^k -> encoder SNN^k -> (TH placement | LTH) -> amplitude -> energy
//!     -> multipath MAC + noise -> framing -> decoder SNN (weights scaled by
//!        the hypernetwork fed with received pilots) -> rate decoding
//! ```
//!
//! [`forward`] records a [`PipelineTape`]; [`backward`] turns a gradient on
//! the decoder's output spikes into gradients for every model parameter.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::channel::{
    self, db_to_linear, enforce_energy, enforce_energy_backward, ChannelConfig, ChannelRealization,
    ConstraintKind, EnergyConstraint,
};
use crate::data::Sample;
use crate::error::{check_dim, Error, Result};
use crate::hypernet::{modulate_backward, modulate_weights, rate_decode_prefixes, HyperCache, HyperNet, ScalingVectors};
use crate::modem::{lth_expand_matrix, rx_frame, rx_unframe, th_place, th_place_backward, HopPattern, Scheme};
use crate::rng::{normal, stream, tag};
use crate::snn::{self, Mode, NeuronConfig, Tape};

/// Static description of the whole system (shapes, physics, neuron model).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SystemConfig {
    pub channel: ChannelConfig,
    /// Sensor channels observed by each device.
    pub sensor_channels: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub classes: usize,
    /// Sensed steps per frame.
    pub steps: usize,
    /// Channel uses per sensed step.
    pub expansion: usize,
    pub scheme: Scheme,
    pub pilot_len: usize,
    pub hyper_hidden: usize,
    pub neuron: NeuronConfig,
    pub constraint: ConstraintKind,
    pub snr_db: f64,
    /// Pulse amplitude relative to the square root of the symbol energy.
    pub pulse_gain: f64,
    /// Pilot energy budget relative to `symbol energy * N_T * L_p`.
    pub pilot_gain: f64,
    /// Decoder input gain; see [`SystemConfig::receive_scale`].
    pub receive_gain: f64,
    /// Encoder weights start uniform in `+-encoder_gain / sqrt(fan_in)`.
    pub encoder_gain: f64,
    /// Decoder weights start uniform in `+-decoder_gain / sqrt(fan_in)`.
    pub decoder_gain: f64,
}

impl Default for SystemConfig {
    /// Desk-scale single-device setting for the synthetic task.
    fn default() -> Self {
        let mut channel = ChannelConfig::uniform(1, 2, 2, 5);
        channel.noise_psd = 1.0;
        SystemConfig {
            channel,
            sensor_channels: 64,
            encoder_hidden: vec![16],
            decoder_hidden: vec![16],
            classes: 2,
            steps: 40,
            expansion: 4,
            scheme: Scheme::Lth,
            pilot_len: 8,
            hyper_hidden: 32,
            neuron: NeuronConfig::default(),
            constraint: ConstraintKind::PerFrame,
            snr_db: 10.0,
            pulse_gain: 1.0,
            pilot_gain: 1.0,
            receive_gain: 2.0,
            encoder_gain: 4.0,
            decoder_gain: 1.0,
        }
    }
}

impl SystemConfig {
    /// Full-scale setting of the two-device event-camera experiment.
    pub fn full_scale(expansion: usize) -> Self {
        SystemConfig {
            channel: ChannelConfig::uniform(2, 10, 20, 5),
            sensor_channels: 676,
            encoder_hidden: vec![128],
            decoder_hidden: vec![128],
            steps: 80,
            expansion,
            pilot_len: 64,
            hyper_hidden: 1024,
            ..SystemConfig::default()
        }
    }

    /// The small system used for finite-difference gradient checks.
    pub fn tiny(scheme: Scheme) -> Self {
        SystemConfig {
            channel: ChannelConfig::uniform(1, 2, 2, 2),
            sensor_channels: 4,
            encoder_hidden: vec![3],
            decoder_hidden: vec![3],
            steps: 8,
            expansion: 2,
            scheme,
            pilot_len: 3,
            hyper_hidden: 4,
            ..SystemConfig::default()
        }
    }

    pub fn devices(&self) -> usize {
        self.channel.devices
    }

    pub fn tx_antennas(&self) -> usize {
        self.channel.tx_antennas
    }

    pub fn rx_antennas(&self) -> usize {
        self.channel.rx_antennas
    }

    pub fn samples_per_frame(&self) -> usize {
        self.steps * self.expansion
    }

    pub fn symbol_energy(&self) -> f64 {
        db_to_linear(self.snr_db) * self.channel.noise_psd
    }

    pub fn amplitude(&self) -> f64 {
        self.pulse_gain * libm::sqrt(self.symbol_energy())
    }

    pub fn energy_constraint(&self) -> EnergyConstraint {
        EnergyConstraint::from_snr(
            self.constraint,
            db_to_linear(self.snr_db),
            self.channel.noise_psd,
            self.tx_antennas(),
            self.samples_per_frame(),
        )
    }

    pub fn pilot_budget(&self) -> f64 {
        self.pilot_gain * self.symbol_energy() * (self.tx_antennas() * self.pilot_len) as f64
    }

    /// Fixed whitening factor for the hypernetwork input: the inverse RMS of
    /// a received pilot sample.
    pub fn pilot_scale(&self) -> f64 {
        1.0 / libm::sqrt(self.pilot_budget() / self.pilot_len as f64 + self.channel.noise_psd)
    }

    /// Fixed gain applied to the framed decoder input, relative to the
    /// inverse RMS amplitude of a received pulse plus noise.
    pub fn receive_scale(&self) -> f64 {
        self.receive_gain / libm::sqrt(self.symbol_energy() + self.channel.noise_psd)
    }

    pub fn encoder_steps(&self) -> usize {
        match self.scheme {
            Scheme::Th => self.steps,
            Scheme::Lth => self.steps * self.expansion,
        }
    }

    pub fn encoder_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.sensor_channels];
        s.extend(&self.encoder_hidden);
        s.push(self.tx_antennas());
        s
    }

    pub fn decoder_sizes(&self) -> Vec<usize> {
        let mut s = vec![2 * self.expansion * self.rx_antennas()];
        s.extend(&self.decoder_hidden);
        s.push(self.classes);
        s
    }

    pub fn hyper_inputs(&self) -> usize {
        2 * self.pilot_len * self.devices() * self.rx_antennas()
    }

    pub fn hyper_outputs(&self) -> usize {
        let sizes = self.decoder_sizes();
        sizes[..sizes.len() - 1].iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.neuron.validate()?;
        if self.sensor_channels == 0 || self.classes < 2 || self.steps == 0 {
            return Err(Error::config("need sensor channels, at least two classes and one step"));
        }
        if self.expansion == 0 || self.expansion > 256 {
            return Err(Error::config("bandwidth expansion must lie in 1..=256"));
        }
        if self.pilot_len == 0 || self.hyper_hidden == 0 {
            return Err(Error::config("pilot length and hypernetwork width must be positive"));
        }
        if self.encoder_hidden.contains(&0) || self.decoder_hidden.contains(&0) {
            return Err(Error::config("hidden layers must be non-empty"));
        }
        for (name, v) in [("snr_db", self.snr_db), ("pulse_gain", self.pulse_gain), ("pilot_gain", self.pilot_gain), ("receive_gain", self.receive_gain), ("encoder_gain", self.encoder_gain), ("decoder_gain", self.decoder_gain)] {
            if !v.is_finite() || (name != "snr_db" && v <= 0.0) {
                return Err(Error::config(format!("{name} must be finite and positive")));
            }
        }
        Ok(())
    }
}

/// Which parameters are trained and whether the decoder is adapted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Regime {
    /// Pilot-conditioned hypernetwork scales the decoder.
    Hyper,
    /// No hypernetwork or pilots; one decoder for all channels.
    Joint,
    /// Like `Joint`, but trained on one frozen channel realization.
    PerChannel,
}

impl Regime {
    pub fn uses_hypernet(self) -> bool {
        matches!(self, Regime::Hyper)
    }

    pub fn trains(self, group: ParamGroup) -> bool {
        match group {
            ParamGroup::Encoder(_) | ParamGroup::Decoder => true,
            ParamGroup::Hyper | ParamGroup::Pilot(_) => self.uses_hypernet(),
        }
    }
}

impl core::fmt::Display for Regime {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Regime::Hyper => "hyper",
            Regime::Joint => "joint",
            Regime::PerChannel => "per_channel",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Encoder(usize),
    Decoder,
    Hyper,
    Pilot(usize),
}

impl core::fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ParamGroup::Encoder(k) => write!(f, "encoder[{k}]"),
            ParamGroup::Decoder => f.write_str("decoder"),
            ParamGroup::Hyper => f.write_str("hypernetwork"),
            ParamGroup::Pilot(k) => write!(f, "pilots[{k}]"),
        }
    }
}

/// All trainable quantities: encoders, decoder base weights, hypernetwork
/// and per-device pilot matrices (`N_T x L_p`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoders: Vec<Vec<DMatrix<f64>>>,
    pub decoder: Vec<DMatrix<f64>>,
    pub hyper: HyperNet,
    pub pilots: Vec<DMatrix<f64>>,
}

impl ModelParams {
    pub fn init(system: &SystemConfig, seed: u64) -> Result<Self> {
        system.validate()?;
        let encoders = (0..system.devices())
            .map(|k| snn::init_layers(&system.encoder_sizes(), system.encoder_gain, &mut stream(seed, &[tag::INIT, k as u64])))
            .collect();
        let decoder = snn::init_layers(&system.decoder_sizes(), system.decoder_gain, &mut stream(seed, &[tag::INIT, 1000]));
        let hyper = HyperNet::new(
            system.hyper_inputs(),
            system.hyper_hidden,
            system.hyper_outputs(),
            &mut stream(seed, &[tag::INIT, 2000]),
        );
        let budget = system.pilot_budget();
        let pilots = (0..system.devices())
            .map(|k| {
                let mut rng = stream(seed, &[tag::INIT, 3000 + k as u64]);
                let mut p = DMatrix::from_fn(system.tx_antennas(), system.pilot_len, |_, _| normal(&mut rng));
                let e = p.norm_squared();
                p *= libm::sqrt(budget / e);
                p
            })
            .collect();
        Ok(ModelParams {
            encoders,
            decoder,
            hyper,
            pilots,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &DMatrix<f64>| DMatrix::zeros(m.nrows(), m.ncols());
        ModelParams {
            encoders: self.encoders.iter().map(|e| e.iter().map(z).collect()).collect(),
            decoder: self.decoder.iter().map(z).collect(),
            hyper: HyperNet::zeros(self.hyper.inputs(), self.hyper.w1.nrows(), self.hyper.outputs()),
            pilots: self.pilots.iter().map(z).collect(),
        }
    }

    /// Every tensor with a stable name, its group and `(rows, cols)`.
    pub fn named(&self) -> Vec<(String, ParamGroup, (usize, usize), &[f64])> {
        let mut out = Vec::new();
        for (k, enc) in self.encoders.iter().enumerate() {
            for (l, w) in enc.iter().enumerate() {
                out.push((format!("encoder.{k}.{l}"), ParamGroup::Encoder(k), w.shape(), w.as_slice()));
            }
        }
        for (l, w) in self.decoder.iter().enumerate() {
            out.push((format!("decoder.{l}"), ParamGroup::Decoder, w.shape(), w.as_slice()));
        }
        let h = &self.hyper;
        out.push(("hyper.w1".into(), ParamGroup::Hyper, h.w1.shape(), h.w1.as_slice()));
        out.push(("hyper.b1".into(), ParamGroup::Hyper, h.b1.shape(), h.b1.as_slice()));
        out.push(("hyper.w2".into(), ParamGroup::Hyper, h.w2.shape(), h.w2.as_slice()));
        out.push(("hyper.b2".into(), ParamGroup::Hyper, h.b2.shape(), h.b2.as_slice()));
        for (k, p) in self.pilots.iter().enumerate() {
            out.push((format!("pilot.{k}"), ParamGroup::Pilot(k), p.shape(), p.as_slice()));
        }
        out
    }

    /// Mutable slices in the same order as [`ModelParams::named`].
    pub fn slices_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        let mut out: Vec<(ParamGroup, &mut [f64])> = Vec::new();
        for (k, enc) in self.encoders.iter_mut().enumerate() {
            for w in enc.iter_mut() {
                out.push((ParamGroup::Encoder(k), w.as_mut_slice()));
            }
        }
        for w in self.decoder.iter_mut() {
            out.push((ParamGroup::Decoder, w.as_mut_slice()));
        }
        let h = &mut self.hyper;
        out.push((ParamGroup::Hyper, h.w1.as_mut_slice()));
        out.push((ParamGroup::Hyper, h.b1.as_mut_slice()));
        out.push((ParamGroup::Hyper, h.w2.as_mut_slice()));
        out.push((ParamGroup::Hyper, h.b2.as_mut_slice()));
        for (k, p) in self.pilots.iter_mut().enumerate() {
            out.push((ParamGroup::Pilot(k), p.as_mut_slice()));
        }
        out
    }

    /// `self += scale * other` on the groups accepted by `filter`.
    pub fn add_scaled(&mut self, scale: f64, other: &ModelParams, filter: impl Fn(ParamGroup) -> bool) {
        let src: Vec<&[f64]> = other.named().into_iter().map(|(_, _, _, s)| s).collect();
        for ((group, dst), s) in self.slices_mut().into_iter().zip(src) {
            if filter(group) {
                for (d, v) in dst.iter_mut().zip(s) {
                    *d += scale * v;
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, _, _, s)| s.iter().all(|v| v.is_finite()))
    }

    pub fn same_shapes(&self, other: &ModelParams) -> bool {
        let a = self.named();
        let b = other.named();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.0 == y.0 && x.2 == y.2)
    }

    /// Projects each pilot matrix onto its energy ball.
    pub fn project_pilots(&mut self, budget: f64) {
        for p in &mut self.pilots {
            channel::project_energy_ball(p, budget);
        }
    }
}

/// Forward results needed by metrics.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Decoder output spikes `[D_v x L]` (sigmoid values in relaxed mode).
    pub decoder_output: DMatrix<f64>,
    /// Rate-decoded probabilities after every step, `[D_v x L]`.
    pub probs: DMatrix<f64>,
    /// Transmitted energy of every sensed step's block, summed over devices.
    pub block_energy: Vec<f64>,
    /// Transmitted pulses per block, summed over devices and antennas.
    pub encoder_spikes: Vec<f64>,
    /// Decoder spikes per step, all layers.
    pub decoder_spikes: Vec<f64>,
}

#[derive(Debug, Clone)]
struct DeviceTape {
    tape: Tape,
    hops: Option<HopPattern>,
    /// Pulse frame before energy enforcement.
    frame: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineTape {
    regime: Regime,
    devices: Vec<DeviceTape>,
    decoder_weights: Vec<DMatrix<f64>>,
    decoder_tape: Tape,
    scaling: Option<(ScalingVectors, HyperCache)>,
}

/// Sub-stream indices under a frame's noise seed.
const PILOT_NOISE: u64 = 0;
const HOPS: u64 = 1;
const DATA_NOISE: u64 = 2;

fn check_sample(system: &SystemConfig, sample: &Sample) -> Result<()> {
    check_dim("sample devices", system.devices(), sample.inputs.len())?;
    for u in &sample.inputs {
        check_dim("sample channels", system.sensor_channels, u.nrows())?;
        check_dim("sample steps", system.steps, u.ncols())?;
    }
    if sample.label >= system.classes {
        return Err(Error::config("label out of range"));
    }
    Ok(())
}

/// Received-pilot observation fed to the hypernetwork (already whitened).
pub fn pilot_input(
    system: &SystemConfig,
    params: &ModelParams,
    channel: &ChannelRealization,
    noise_seed: u64,
) -> Result<DVector<f64>> {
    let mut rng = stream(noise_seed, &[PILOT_NOISE]);
    let rx = channel::transmit_pilots(channel, &params.pilots, system.channel.noise_psd, &mut rng)?;
    Ok(channel::pilot_observation(&rx) * system.pilot_scale())
}

/// Runs one frame through the whole chain. All randomness (pilot noise, hop
/// offsets, data noise) derives from `noise_seed`, so repeated calls with the
/// same seed see identical noise.
pub fn forward(
    system: &SystemConfig,
    params: &ModelParams,
    regime: Regime,
    sample: &Sample,
    channel: &ChannelRealization,
    noise_seed: u64,
    mode: Mode,
) -> Result<(PipelineOutput, PipelineTape)> {
    check_sample(system, sample)?;
    check_dim("channel devices", system.devices(), channel.devices())?;
    let lb = system.expansion;
    let amplitude = system.amplitude();
    let constraint = system.energy_constraint();
    let mut hop_rng = stream(noise_seed, &[HOPS]);

    let mut devices = Vec::with_capacity(system.devices());
    let mut frames = Vec::with_capacity(system.devices());
    let mut encoder_spikes = vec![0.0; system.steps];
    for (enc, u) in params.encoders.iter().zip(&sample.inputs) {
        let (frame, tape, hops) = match system.scheme {
            Scheme::Lth => {
                let input = lth_expand_matrix(u, lb);
                let (out, tape) = snn::forward(enc, &input, &system.neuron, mode)?;
                (out * amplitude, tape, None)
            }
            Scheme::Th => {
                let (out, tape) = snn::forward(enc, u, &system.neuron, mode)?;
                let hops = HopPattern::draw(out.nrows(), out.ncols(), lb, &mut hop_rng);
                (th_place(&out, &hops)? * amplitude, tape, Some(hops))
            }
        };
        let sent = enforce_energy(&frame, &constraint);
        for (l, count) in encoder_spikes.iter_mut().enumerate() {
            *count += frame.columns(l * lb, lb).iter().filter(|&&v| v != 0.0).count() as f64;
        }
        frames.push(sent);
        devices.push(DeviceTape { tape, hops, frame });
    }
    let block_energy = (0..system.steps)
        .map(|l| frames.iter().map(|f| f.columns(l * lb, lb).norm_squared()).sum())
        .collect();

    let mut noise_rng = stream(noise_seed, &[DATA_NOISE]);
    let y = channel::transmit_mac(channel, &frames, system.channel.noise_psd, &mut noise_rng)?;
    let framed = rx_frame(&y, lb)? * system.receive_scale();

    let (decoder_weights, scaling) = if regime.uses_hypernet() {
        let obs = pilot_input(system, params, channel, noise_seed)?;
        let (flat, cache) = params.hyper.forward(&obs)?;
        let s = ScalingVectors::split(&flat, &params.decoder)?;
        (modulate_weights(&params.decoder, &s)?, Some((s, cache)))
    } else {
        (params.decoder.clone(), None)
    };
    let (decoder_output, decoder_tape) = snn::forward(&decoder_weights, &framed, &system.neuron, mode)?;
    let decoder_spikes = (0..system.steps)
        .map(|l| decoder_tape.layers.iter().map(|t| t.output.column(l).sum()).sum())
        .collect();
    let probs = rate_decode_prefixes(&decoder_output);
    Ok((
        PipelineOutput {
            decoder_output,
            probs,
            block_energy,
            encoder_spikes,
            decoder_spikes,
        },
        PipelineTape {
            regime,
            devices,
            decoder_weights,
            decoder_tape,
            scaling,
        },
    ))
}

/// Backpropagates dL/d(decoder output) through the chain.
///
/// Parameter groups that the tape's regime does not use get exactly zero
/// gradient.
pub fn backward(
    system: &SystemConfig,
    params: &ModelParams,
    channel: &ChannelRealization,
    tape: &PipelineTape,
    grad_output: &DMatrix<f64>,
) -> Result<ModelParams> {
    let mut grads = params.zeros_like();
    let dec = snn::backward(&tape.decoder_weights, &tape.decoder_tape, grad_output, &system.neuron)?;

    match &tape.scaling {
        Some((s, cache)) => {
            let (gbase, gscale) = modulate_backward(&params.decoder, s, &dec.weights);
            grads.decoder = gbase;
            let (ghyper, gobs) = params.hyper.backward(cache, &gscale.flatten())?;
            grads.hyper = ghyper;
            let gobs = gobs * system.pilot_scale();
            let gy = channel::pilot_observation_adjoint(&gobs, system.devices(), system.rx_antennas(), system.pilot_len)?;
            grads.pilots = channel::pilots_adjoint(channel, &gy)?;
        }
        None => grads.decoder = dec.weights,
    }
    debug_assert_eq!(tape.regime.uses_hypernet(), tape.scaling.is_some());

    let gy = rx_unframe(&(&dec.input * system.receive_scale()), system.expansion, system.rx_antennas())?;
    let gsent = channel::mac_adjoint(channel, &gy)?;
    let constraint = system.energy_constraint();
    let amplitude = system.amplitude();
    for (k, (dt, gs)) in tape.devices.iter().zip(gsent).enumerate() {
        let gframe = enforce_energy_backward(&dt.frame, &gs, &constraint) * amplitude;
        let gout = match &dt.hops {
            Some(h) => th_place_backward(&gframe, h),
            None => gframe,
        };
        grads.encoders[k] = snn::backward(&params.encoders[k], &dt.tape, &gout, &system.neuron)?.weights;
    }
    Ok(grads)
}

/// When the classification loss is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LossHorizon {
    /// Cross-entropy of the rate-decoded output after the last step.
    #[default]
    FinalStep,
    /// Mean cross-entropy over every prefix.
    AllSteps,
}

/// `-sum_j v_j ln p_j`, with probabilities floored at `1e-30`.
pub fn loss_ce(probs: &DVector<f64>, target: &DVector<f64>) -> f64 {
    -probs
        .iter()
        .zip(target.iter())
        .map(|(&p, &v)| if v == 0.0 { 0.0 } else { v * libm::log(p.max(1e-30)) })
        .sum::<f64>()
}

pub fn one_hot(label: usize, classes: usize) -> DVector<f64> {
    DVector::from_fn(classes, |j, _| if j == label { 1.0 } else { 0.0 })
}

/// Loss and its gradient with respect to the decoder output spikes.
pub fn output_loss(decoder_output: &DMatrix<f64>, label: usize, horizon: LossHorizon) -> (f64, DMatrix<f64>) {
    let (dv, t) = decoder_output.shape();
    let target = one_hot(label, dv);
    let probs = rate_decode_prefixes(decoder_output);
    match horizon {
        LossHorizon::FinalStep => {
            let p = probs.column(t - 1).into_owned();
            let g = &p - &target;
            let mut grad = DMatrix::zeros(dv, t);
            for mut col in grad.column_iter_mut() {
                col.copy_from(&g);
            }
            (loss_ce(&p, &target), grad)
        }
        LossHorizon::AllSteps => {
            let mut loss = 0.0;
            let mut grad = DMatrix::zeros(dv, t);
            let mut acc = DVector::zeros(dv);
            for l in (0..t).rev() {
                let p = probs.column(l).into_owned();
                loss += loss_ce(&p, &target);
                acc += (&p - &target) / t as f64;
                grad.set_column(l, &acc);
            }
            (loss / t as f64, grad)
        }
    }
}

/// Loss and parameter gradients for one frame.
#[allow(clippy::too_many_arguments)]
pub fn example_gradient(
    system: &SystemConfig,
    params: &ModelParams,
    regime: Regime,
    sample: &Sample,
    channel: &ChannelRealization,
    noise_seed: u64,
    horizon: LossHorizon,
    mode: Mode,
) -> Result<(f64, ModelParams)> {
    let (out, tape) = forward(system, params, regime, sample, channel, noise_seed, mode)?;
    let (loss, g) = output_loss(&out.decoder_output, sample.label, horizon);
    Ok((loss, backward(system, params, channel, &tape, &g)?))
}

/// Loss only.
pub fn example_loss(
    system: &SystemConfig,
    params: &ModelParams,
    regime: Regime,
    sample: &Sample,
    channel: &ChannelRealization,
    noise_seed: u64,
    horizon: LossHorizon,
    mode: Mode,
) -> Result<f64> {
    let (out, _) = forward(system, params, regime, sample, channel, noise_seed, mode)?;
    Ok(output_loss(&out.decoder_output, sample.label, horizon).0)
}

/// Draws a channel realization for the system.
pub fn draw_channel<R: Rng + ?Sized>(system: &SystemConfig, rng: &mut R) -> Result<ChannelRealization> {
    channel::sample_channel(&system.channel, rng)
}
