//! Spike Response Model neurons and layered, fully connected spiking networks.
//!
//! A layer maps an input sequence `x` (`N_in x T`, binary spikes or real
//! samples) to output spikes `b` (`N_out x T`) through
//!
//! ```text
//! o[k, l] = sum_j W[k, j] (alpha * x_j)[l] + sign (beta * b_k)[l]
//! b[k, l] = H(o[k, l] - threshold)
//! ```
//!
//! with `alpha[d] = exp(-d/tau_mem) - exp(-d/tau_syn)` and
//! `beta[d] = exp(-d/tau_ref)` for `d >= 1`. Both kernels start at lag one, so
//! a spike at step `l` first influences potentials at step `l + 1`. The
//! convolutions are evaluated through first-order recurrences (two for
//! `alpha`, one for `beta`), which are exact for the untruncated kernels.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, Error, Result};

/// Sign applied to the self-feedback kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FeedbackSign {
    /// Hyperpolarizing: a spike lowers the neuron's subsequent potential.
    Inhibitory,
    /// Self-exciting, as the kernel is literally written.
    Excitatory,
}

impl FeedbackSign {
    pub fn factor(self) -> f64 {
        match self {
            FeedbackSign::Inhibitory => -1.0,
            FeedbackSign::Excitatory => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct NeuronConfig {
    pub tau_mem: f64,
    pub tau_syn: f64,
    pub tau_ref: f64,
    pub threshold: f64,
    pub feedback_sign: FeedbackSign,
    /// Steepness of the sigmoid that stands in for the step function.
    pub surrogate_slope: f64,
    /// Longest kernel window `filter_responses` will tabulate.
    pub filter_truncation: usize,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        NeuronConfig {
            tau_mem: 20.0,
            tau_syn: 5.0,
            tau_ref: 1.0,
            threshold: 1.0,
            feedback_sign: FeedbackSign::Inhibitory,
            surrogate_slope: 5.0,
            filter_truncation: 40,
        }
    }
}

impl NeuronConfig {
    pub fn validate(&self) -> Result<()> {
        let taus = [self.tau_mem, self.tau_syn, self.tau_ref];
        if taus.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::config("time constants must be positive and finite"));
        }
        if self.tau_mem == self.tau_syn {
            return Err(Error::config("tau_mem must differ from tau_syn"));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::config("threshold must be positive"));
        }
        if !(self.surrogate_slope.is_finite() && self.surrogate_slope > 0.0) {
            return Err(Error::config("surrogate slope must be positive"));
        }
        if self.filter_truncation == 0 {
            return Err(Error::config("filter truncation must be at least 1"));
        }
        Ok(())
    }

    fn decays(&self) -> Decays {
        Decays {
            mem: libm::exp(-1.0 / self.tau_mem),
            syn: libm::exp(-1.0 / self.tau_syn),
            refr: libm::exp(-1.0 / self.tau_ref),
        }
    }
}

#[derive(Clone, Copy)]
struct Decays {
    mem: f64,
    syn: f64,
    refr: f64,
}

/// Tabulates `alpha[1..=window]` and `beta[1..=window]`.
pub fn filter_responses(cfg: &NeuronConfig, window: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    if window > cfg.filter_truncation {
        return Err(Error::config("window exceeds filter truncation"));
    }
    let alpha = (1..=window)
        .map(|l| {
            let l = l as f64;
            libm::exp(-l / cfg.tau_mem) - libm::exp(-l / cfg.tau_syn)
        })
        .collect();
    let beta = (1..=window)
        .map(|l| libm::exp(-(l as f64) / cfg.tau_ref))
        .collect();
    Ok((alpha, beta))
}

/// Whether the forward pass uses the step function or its sigmoid relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Hard,
    /// Sigmoid in the forward pass too; gradients are then exact.
    Relaxed,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
fn fire(cfg: &NeuronConfig, mode: Mode, potential: f64) -> f64 {
    match mode {
        Mode::Hard => {
            if potential >= cfg.threshold {
                1.0
            } else {
                0.0
            }
        }
        Mode::Relaxed => sigmoid(cfg.surrogate_slope * (potential - cfg.threshold)),
    }
}

/// d(spike)/d(potential) under the sigmoid surrogate.
#[inline]
fn surrogate_grad(cfg: &NeuronConfig, potential: f64) -> f64 {
    let s = sigmoid(cfg.surrogate_slope * (potential - cfg.threshold));
    cfg.surrogate_slope * s * (1.0 - s)
}

/// Uniform `[-c, c]` initialization with `c = gain / sqrt(fan_in)`.
///
/// `sizes` lists the neuron counts from the input layer to the output layer.
pub fn init_layers<R: Rng + ?Sized>(sizes: &[usize], gain: f64, rng: &mut R) -> Vec<DMatrix<f64>> {
    sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let c = gain / libm::sqrt(fan_in.max(1) as f64);
            DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-c..=c))
        })
        .collect()
}

fn check_chain(weights: &[DMatrix<f64>], input_dim: usize) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::config("network needs at least one layer"));
    }
    let mut dim = input_dim;
    for w in weights {
        check_dim("layer input", w.ncols(), dim)?;
        dim = w.nrows();
    }
    Ok(())
}

fn fingerprint(weights: &[DMatrix<f64>]) -> u64 {
    const PRIME: u64 = 0x100_0000_01B3;
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    let mut mix = |v: u64| {
        h ^= v;
        h = h.wrapping_mul(PRIME);
    };
    for w in weights {
        mix(w.nrows() as u64);
        mix(w.ncols() as u64);
        for x in w.iter() {
            mix(x.to_bits());
        }
    }
    h
}

/// Per-layer streaming state.
#[derive(Debug, Clone)]
pub struct LayerState {
    trace_mem: DVector<f64>,
    trace_syn: DVector<f64>,
    self_trace: DVector<f64>,
    prev_input: DVector<f64>,
    prev_output: DVector<f64>,
    potential: DVector<f64>,
    step: usize,
}

impl LayerState {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        LayerState {
            trace_mem: DVector::zeros(inputs),
            trace_syn: DVector::zeros(inputs),
            self_trace: DVector::zeros(outputs),
            prev_input: DVector::zeros(inputs),
            prev_output: DVector::zeros(outputs),
            potential: DVector::zeros(outputs),
            step: 0,
        }
    }

    pub fn potential(&self) -> &DVector<f64> {
        &self.potential
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn reset(&mut self) {
        *self = LayerState::new(self.trace_mem.len(), self.self_trace.len());
    }
}

/// Advances one layer by a single time step and returns its output spikes.
pub fn layer_step(
    state: &mut LayerState,
    weights: &DMatrix<f64>,
    input: &DVector<f64>,
    cfg: &NeuronConfig,
) -> Result<DVector<f64>> {
    check_dim("layer_step input", weights.ncols(), input.len())?;
    check_dim("layer_step state", state.trace_mem.len(), input.len())?;
    check_dim("layer_step outputs", state.self_trace.len(), weights.nrows())?;
    let d = cfg.decays();
    state.trace_mem = (&state.trace_mem + &state.prev_input) * d.mem;
    state.trace_syn = (&state.trace_syn + &state.prev_input) * d.syn;
    state.self_trace = (&state.self_trace + &state.prev_output) * d.refr;
    let filtered = &state.trace_mem - &state.trace_syn;
    state.potential = weights * filtered + &state.self_trace * cfg.feedback_sign.factor();
    let out = state.potential.map(|o| fire(cfg, Mode::Hard, o));
    state.prev_input.copy_from(input);
    state.prev_output.copy_from(&out);
    state.step += 1;
    Ok(out)
}

/// Streaming state for a whole network.
#[derive(Debug, Clone)]
pub struct SnnState {
    pub layers: Vec<LayerState>,
}

impl SnnState {
    pub fn new(weights: &[DMatrix<f64>]) -> Self {
        SnnState {
            layers: weights
                .iter()
                .map(|w| LayerState::new(w.ncols(), w.nrows()))
                .collect(),
        }
    }

    pub fn step(
        &mut self,
        weights: &[DMatrix<f64>],
        input: &DVector<f64>,
        cfg: &NeuronConfig,
    ) -> Result<DVector<f64>> {
        check_dim("network depth", self.layers.len(), weights.len())?;
        let mut x = input.clone();
        for (state, w) in self.layers.iter_mut().zip(weights) {
            x = layer_step(state, w, &x, cfg)?;
        }
        Ok(x)
    }

    pub fn reset(&mut self) {
        self.layers.iter_mut().for_each(LayerState::reset);
    }
}

/// `(alpha * x)[l]` for every row of `x`.
fn filter_alpha(x: &DMatrix<f64>, d: Decays) -> DMatrix<f64> {
    let (n, t) = x.shape();
    let mut out = DMatrix::zeros(n, t);
    let mut mem = vec![0.0; n];
    let mut syn = vec![0.0; n];
    for l in 1..t {
        for j in 0..n {
            let prev = x[(j, l - 1)];
            mem[j] = d.mem * (mem[j] + prev);
            syn[j] = d.syn * (syn[j] + prev);
            out[(j, l)] = mem[j] - syn[j];
        }
    }
    out
}

/// Adjoint of `filter_alpha`: `y[l] = sum_{d>=1} alpha[d] g[l + d]`.
fn filter_alpha_adjoint(g: &DMatrix<f64>, d: Decays) -> DMatrix<f64> {
    let (n, t) = g.shape();
    let mut out = DMatrix::zeros(n, t);
    let mut mem = vec![0.0; n];
    let mut syn = vec![0.0; n];
    for l in (0..t.saturating_sub(1)).rev() {
        for j in 0..n {
            let next = g[(j, l + 1)];
            mem[j] = d.mem * (mem[j] + next);
            syn[j] = d.syn * (syn[j] + next);
            out[(j, l)] = mem[j] - syn[j];
        }
    }
    out
}

/// Everything one layer's backward pass needs.
#[derive(Debug, Clone)]
pub struct LayerTape {
    /// `alpha`-filtered input, `N_in x T`.
    pub filtered: DMatrix<f64>,
    pub potential: DMatrix<f64>,
    pub output: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Tape {
    pub mode: Mode,
    pub layers: Vec<LayerTape>,
    fingerprint: u64,
}

impl Tape {
    pub fn output(&self) -> &DMatrix<f64> {
        &self.layers.last().expect("non-empty network").output
    }

    /// Spikes emitted by every layer, summed.
    pub fn spike_count(&self) -> f64 {
        self.layers.iter().map(|l| l.output.sum()).sum()
    }
}

fn layer_forward(w: &DMatrix<f64>, input: &DMatrix<f64>, cfg: &NeuronConfig, mode: Mode) -> LayerTape {
    let d = cfg.decays();
    let sign = cfg.feedback_sign.factor();
    let filtered = filter_alpha(input, d);
    let mut potential = w * &filtered;
    let (n, t) = potential.shape();
    let mut output = DMatrix::zeros(n, t);
    let mut self_trace = vec![0.0; n];
    for l in 0..t {
        for k in 0..n {
            if l > 0 {
                self_trace[k] = d.refr * (self_trace[k] + output[(k, l - 1)]);
            }
            let o = potential[(k, l)] + sign * self_trace[k];
            potential[(k, l)] = o;
            output[(k, l)] = fire(cfg, mode, o);
        }
    }
    LayerTape {
        filtered,
        potential,
        output,
    }
}

/// Runs the network over a whole input sequence (`N_0 x T`).
///
/// Returns the last layer's output and a tape for [`backward`].
pub fn forward(
    weights: &[DMatrix<f64>],
    input: &DMatrix<f64>,
    cfg: &NeuronConfig,
    mode: Mode,
) -> Result<(DMatrix<f64>, Tape)> {
    cfg.validate()?;
    check_chain(weights, input.nrows())?;
    let mut layers: Vec<LayerTape> = Vec::with_capacity(weights.len());
    for (i, w) in weights.iter().enumerate() {
        let x = match layers.last() {
            Some(prev) if i > 0 => &prev.output,
            _ => input,
        };
        let tape = layer_forward(w, x, cfg, mode);
        layers.push(tape);
    }
    let out = layers.last().unwrap().output.clone();
    Ok((
        out,
        Tape {
            mode,
            layers,
            fingerprint: fingerprint(weights),
        },
    ))
}

#[derive(Debug, Clone)]
pub struct SnnGrads {
    pub weights: Vec<DMatrix<f64>>,
    /// Gradient with respect to the network input sequence.
    pub input: DMatrix<f64>,
}

/// Backpropagation through time.
///
/// `out_grads` holds dL/d(output spike) for every output neuron and step. The
/// step function's derivative is replaced by the sigmoid surrogate; every other
/// operation, including the self-feedback path, is differentiated exactly.
pub fn backward(
    weights: &[DMatrix<f64>],
    tape: &Tape,
    out_grads: &DMatrix<f64>,
    cfg: &NeuronConfig,
) -> Result<SnnGrads> {
    if tape.layers.len() != weights.len() || tape.fingerprint != fingerprint(weights) {
        return Err(Error::StaleTape);
    }
    let out = tape.output();
    check_dim("output gradient rows", out.nrows(), out_grads.nrows())?;
    check_dim("output gradient steps", out.ncols(), out_grads.ncols())?;

    let d = cfg.decays();
    let sign = cfg.feedback_sign.factor();
    let mut grads = vec![DMatrix::zeros(0, 0); weights.len()];
    let mut g = out_grads.clone();
    for (i, (w, lt)) in weights.iter().zip(&tape.layers).enumerate().rev() {
        let (n, t) = lt.potential.shape();
        let mut dpot = DMatrix::zeros(n, t);
        // q[k] = sum_{d>=1} beta[d] dpot[k, l + d]
        let mut q = vec![0.0; n];
        for l in (0..t).rev() {
            for k in 0..n {
                if l + 1 < t {
                    q[k] = d.refr * (q[k] + dpot[(k, l + 1)]);
                }
                let db = g[(k, l)] + sign * q[k];
                dpot[(k, l)] = db * surrogate_grad(cfg, lt.potential[(k, l)]);
            }
        }
        grads[i] = &dpot * lt.filtered.transpose();
        let dfiltered = w.tr_mul(&dpot);
        g = filter_alpha_adjoint(&dfiltered, d);
    }
    Ok(SnnGrads {
        weights: grads,
        input: g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use alloc::vec;

    #[test]
    fn filter_values() {
        let cfg = NeuronConfig::default();
        let (alpha, beta) = filter_responses(&cfg, 3).unwrap();
        assert!((alpha[0] - 0.132_498_67).abs() < 1e-8);
        assert!((beta[0] - 0.367_88).abs() < 1e-5);
        assert!(beta.windows(2).all(|w| w[1] < w[0]));
        assert!(alpha.iter().all(|&a| a > 0.0));
    }

    #[test]
    fn degenerate_configs_rejected() {
        let mut cfg = NeuronConfig::default();
        cfg.tau_syn = cfg.tau_mem;
        assert!(filter_responses(&cfg, 1).is_err());
        let mut cfg = NeuronConfig::default();
        cfg.tau_ref = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = NeuronConfig::default();
        assert!(filter_responses(&cfg, 41).is_err());
    }

    #[test]
    fn recurrence_matches_direct_convolution() {
        let cfg = NeuronConfig::default();
        let mut rng = stream(3, &[]);
        let x = DMatrix::from_fn(3, 30, |_, _| f64::from(u8::from(rng.random_bool(0.3))));
        let filtered = filter_alpha(&x, cfg.decays());
        let (alpha, _) = filter_responses(&NeuronConfig { filter_truncation: 30, ..cfg }, 30).unwrap();
        for j in 0..3 {
            for l in 0..30 {
                let direct: f64 = (1..=l).map(|d| alpha[d - 1] * x[(j, l - d)]).sum();
                assert!((direct - filtered[(j, l)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_spike_two_step_potential() {
        let cfg = NeuronConfig::default();
        let w = DMatrix::from_element(1, 1, 10.0 * cfg.threshold);
        let mut x = DMatrix::zeros(1, 2);
        x[(0, 0)] = 1.0;
        let (out, tape) = forward(&[w], &x, &cfg, Mode::Hard).unwrap();
        let (alpha, _) = filter_responses(&cfg, 1).unwrap();
        assert_eq!(tape.layers[0].potential[(0, 0)], 0.0);
        assert!((tape.layers[0].potential[(0, 1)] - 10.0 * alpha[0]).abs() < 1e-12);
        assert_eq!(out[(0, 1)], if 10.0 * alpha[0] > 1.0 { 1.0 } else { 0.0 });
    }

    #[test]
    fn streaming_matches_batch() {
        let cfg = NeuronConfig::default();
        let mut rng = stream(11, &[]);
        let weights = init_layers(&[6, 8, 3], 3.0, &mut rng);
        let x = DMatrix::from_fn(6, 25, |_, _| f64::from(u8::from(rng.random_bool(0.4))));
        let (out, _) = forward(&weights, &x, &cfg, Mode::Hard).unwrap();
        let mut state = SnnState::new(&weights);
        for l in 0..25 {
            let y = state.step(&weights, &x.column(l).into_owned(), &cfg).unwrap();
            assert_eq!(y, out.column(l).into_owned());
        }
        assert!(out.sum() > 0.0, "test net should spike");
    }

    #[test]
    fn zero_out_grads_give_zero_gradients() {
        let cfg = NeuronConfig::default();
        let mut rng = stream(5, &[]);
        let weights = init_layers(&[4, 5, 2], 3.0, &mut rng);
        let x = DMatrix::from_fn(4, 10, |_, _| f64::from(u8::from(rng.random_bool(0.5))));
        let (_, tape) = forward(&weights, &x, &cfg, Mode::Hard).unwrap();
        let g = backward(&weights, &tape, &DMatrix::zeros(2, 10), &cfg).unwrap();
        assert!(g.weights.iter().all(|w| w.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn stale_tape_rejected() {
        let cfg = NeuronConfig::default();
        let mut rng = stream(5, &[]);
        let mut weights = init_layers(&[4, 2], 1.0, &mut rng);
        let x = DMatrix::zeros(4, 3);
        let (_, tape) = forward(&weights, &x, &cfg, Mode::Hard).unwrap();
        weights[0][(0, 0)] += 1.0;
        assert_eq!(
            backward(&weights, &tape, &DMatrix::zeros(2, 3), &cfg).unwrap_err(),
            Error::StaleTape
        );
    }

    #[test]
    fn silent_presynaptic_neuron_has_zero_gradient() {
        let cfg = NeuronConfig::default();
        let mut rng = stream(9, &[]);
        let weights = init_layers(&[3, 2], 4.0, &mut rng);
        let mut x = DMatrix::from_fn(3, 12, |_, _| f64::from(u8::from(rng.random_bool(0.6))));
        x.row_mut(1).fill(0.0);
        let (_, tape) = forward(&weights, &x, &cfg, Mode::Hard).unwrap();
        let g = backward(&weights, &tape, &DMatrix::from_element(2, 12, 1.0), &cfg).unwrap();
        assert!(g.weights[0].column(1).iter().all(|&v| v == 0.0));
        assert!(g.weights[0].column(0).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn dimension_errors() {
        let cfg = NeuronConfig::default();
        let w = vec![DMatrix::zeros(2, 3)];
        assert!(forward(&w, &DMatrix::zeros(4, 5), &cfg, Mode::Hard).is_err());
        let mut st = LayerState::new(3, 2);
        assert!(layer_step(&mut st, &w[0], &DVector::zeros(2), &cfg).is_err());
    }
}
