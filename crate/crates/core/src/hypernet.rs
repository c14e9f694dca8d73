//! Pilot-conditioned receiver: a fully connected hypernetwork maps received
//! pilots to one scaling factor per presynaptic decoder neuron, the scaled
//! decoder runs over the framed channel output, and per-class spike counts
//! are rate-decoded into probabilities at every step.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::modem::rx_frame;
use crate::snn::{self, Mode, NeuronConfig};

/// One-hidden-layer network: rectifier on the hidden layer, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperNet {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

impl HyperNet {
    /// Hidden layer uniform in `+-1/sqrt(inputs)`, output weights zero and
    /// output bias one, so a fresh hypernetwork emits the identity scaling.
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        let c = 1.0 / libm::sqrt(inputs.max(1) as f64);
        HyperNet {
            w1: DMatrix::from_fn(hidden, inputs, |_, _| rng.random_range(-c..=c)),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(outputs, hidden),
            b2: DVector::from_element(outputs, 1.0),
        }
    }

    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        HyperNet {
            w1: DMatrix::zeros(hidden, inputs),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(outputs, hidden),
            b2: DVector::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w1.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.w2.nrows()
    }

    pub fn forward(&self, input: &DVector<f64>) -> Result<(DVector<f64>, HyperCache)> {
        check_dim("hypernetwork input", self.inputs(), input.len())?;
        let pre = &self.w1 * input + &self.b1;
        let hidden = pre.map(|v| v.max(0.0));
        let out = &self.w2 * &hidden + &self.b2;
        Ok((
            out,
            HyperCache {
                input: input.clone(),
                pre,
                hidden,
            },
        ))
    }

    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &HyperCache, grad_out: &DVector<f64>) -> Result<(HyperNet, DVector<f64>)> {
        check_dim("hypernetwork output gradient", self.outputs(), grad_out.len())?;
        let gw2 = grad_out * cache.hidden.transpose();
        let gh = self.w2.tr_mul(grad_out);
        let gpre = gh.zip_map(&cache.pre, |g, p| if p > 0.0 { g } else { 0.0 });
        let gw1 = &gpre * cache.input.transpose();
        let gin = self.w1.tr_mul(&gpre);
        Ok((
            HyperNet {
                w1: gw1,
                b1: gpre,
                w2: gw2,
                b2: grad_out.clone(),
            },
            gin,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct HyperCache {
    input: DVector<f64>,
    pre: DVector<f64>,
    hidden: DVector<f64>,
}

/// Per-layer scaling vectors `w_l`, one entry per presynaptic neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingVectors(pub Vec<DVector<f64>>);

impl ScalingVectors {
    pub fn ones(base: &[DMatrix<f64>]) -> Self {
        ScalingVectors(base.iter().map(|w| DVector::from_element(w.ncols(), 1.0)).collect())
    }

    /// Splits a flat hypernetwork output by the decoder's layer input sizes.
    pub fn split(flat: &DVector<f64>, base: &[DMatrix<f64>]) -> Result<Self> {
        let total: usize = base.iter().map(|w| w.ncols()).sum();
        check_dim("scaling vector length", total, flat.len())?;
        let mut offset = 0;
        Ok(ScalingVectors(
            base.iter()
                .map(|w| {
                    let v = flat.rows(offset, w.ncols()).into_owned();
                    offset += w.ncols();
                    v
                })
                .collect(),
        ))
    }

    pub fn flatten(&self) -> DVector<f64> {
        let total = self.0.iter().map(|v| v.len()).sum();
        DVector::from_iterator(total, self.0.iter().flat_map(|v| v.iter().copied()))
    }
}

/// Total hypernetwork output size for a decoder.
pub fn scaling_len(base: &[DMatrix<f64>]) -> usize {
    base.iter().map(|w| w.ncols()).sum()
}

pub fn hyper_forward(pilot_obs: &DVector<f64>, hw: &HyperNet, base: &[DMatrix<f64>]) -> Result<ScalingVectors> {
    let (out, _) = hw.forward(pilot_obs)?;
    ScalingVectors::split(&out, base)
}

/// `W_l = W~_l diag(w_l)`: column `j` of layer `l` scaled by `w_l[j]`.
pub fn modulate_weights(base: &[DMatrix<f64>], s: &ScalingVectors) -> Result<Vec<DMatrix<f64>>> {
    check_dim("scaled layers", base.len(), s.0.len())?;
    base.iter()
        .zip(&s.0)
        .map(|(w, v)| {
            check_dim("scaling vector", w.ncols(), v.len())?;
            let mut out = w.clone();
            for (j, mut col) in out.column_iter_mut().enumerate() {
                col *= v[j];
            }
            Ok(out)
        })
        .collect()
}

/// Splits gradients of the effective weights into base-weight and
/// scaling-vector gradients.
pub fn modulate_backward(
    base: &[DMatrix<f64>],
    s: &ScalingVectors,
    grad_effective: &[DMatrix<f64>],
) -> (Vec<DMatrix<f64>>, ScalingVectors) {
    let mut gbase = Vec::with_capacity(base.len());
    let mut gscale = Vec::with_capacity(base.len());
    for ((w, v), g) in base.iter().zip(&s.0).zip(grad_effective) {
        let mut gb = g.clone();
        for (j, mut col) in gb.column_iter_mut().enumerate() {
            col *= v[j];
        }
        gbase.push(gb);
        gscale.push(DVector::from_fn(w.ncols(), |j, _| g.column(j).dot(&w.column(j))));
    }
    (gbase, ScalingVectors(gscale))
}

/// Numerically stable softmax.
pub fn softmax(x: &DVector<f64>) -> DVector<f64> {
    let max = x.max();
    let e = x.map(|v| libm::exp(v - max));
    let z = e.sum();
    e / z
}

/// First index of the maximum entry.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

/// Softmax of per-class spike counts over the raster `[D_v x l]`.
pub fn rate_decode(v: &DMatrix<f64>) -> Result<DVector<f64>> {
    if v.ncols() == 0 {
        return Err(Error::config("rate decoding needs at least one step"));
    }
    Ok(softmax(&v.column_sum()))
}

/// Rate-decoded probabilities after every prefix `1..=L`, as `[D_v x L]`.
pub fn rate_decode_prefixes(v: &DMatrix<f64>) -> DMatrix<f64> {
    let (dv, t) = v.shape();
    let mut out = DMatrix::zeros(dv, t);
    let mut counts = DVector::zeros(dv);
    for l in 0..t {
        counts += v.column(l);
        out.set_column(l, &softmax(&counts));
    }
    out
}

/// Received frame plus (optionally) pilot observation to per-step class
/// probabilities. Without a pilot observation the decoder runs on `base`
/// unscaled.
pub fn receiver_infer(
    y: &DMatrix<Complex64>,
    pilot_obs: Option<&DVector<f64>>,
    base: &[DMatrix<f64>],
    hw: &HyperNet,
    cfg: &NeuronConfig,
    expansion: usize,
) -> Result<DMatrix<f64>> {
    let framed = rx_frame(y, expansion)?;
    let weights = match pilot_obs {
        Some(obs) => modulate_weights(base, &hyper_forward(obs, hw, base)?)?,
        None => base.to_vec(),
    };
    let (out, _) = snn::forward(&weights, &framed, cfg, Mode::Hard)?;
    Ok(rate_decode_prefixes(&out))
}
