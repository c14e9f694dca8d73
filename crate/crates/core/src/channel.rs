//! Multipath Rayleigh-fading MIMO multiple-access channel.
//!
//! The pulse shape and matched filter are folded into the discrete taps, so a
//! realization is a set of complex FIR filters `h[k][n][m]` of length `L_h`,
//! one per (device, receive antenna, transmit antenna). Transmit samples are
//! real pulse amplitudes; received samples are complex.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::rng::complex_normal;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ChannelConfig {
    pub devices: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    /// Path delays in units of the sample period.
    pub delays: Vec<usize>,
    /// Average path powers; must sum to one.
    pub powers: Vec<f64>,
    /// Noise power spectral density `N_0` (linear).
    pub noise_psd: f64,
}

impl ChannelConfig {
    /// Equal-power paths at delays `0, 1, ..., paths - 1`.
    pub fn uniform(devices: usize, tx_antennas: usize, rx_antennas: usize, paths: usize) -> Self {
        ChannelConfig {
            devices,
            tx_antennas,
            rx_antennas,
            delays: (0..paths).collect(),
            powers: alloc::vec![1.0 / paths as f64; paths],
            noise_psd: 1.0,
        }
    }

    pub fn paths(&self) -> usize {
        self.delays.len()
    }

    pub fn tap_len(&self) -> usize {
        self.delays.iter().max().map_or(1, |d| d + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.devices == 0 || self.tx_antennas == 0 || self.rx_antennas == 0 {
            return Err(Error::config("device and antenna counts must be positive"));
        }
        if self.delays.is_empty() || self.delays.len() != self.powers.len() {
            return Err(Error::config("delays and powers must be non-empty and equally long"));
        }
        if self.powers.iter().any(|&p| !(p.is_finite() && p > 0.0)) {
            return Err(Error::config("path powers must be positive"));
        }
        let total: f64 = self.powers.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config("path powers must sum to one"));
        }
        let mut sorted = self.delays.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("path delays must be distinct"));
        }
        if !(self.noise_psd.is_finite() && self.noise_psd >= 0.0) {
            return Err(Error::config("noise PSD must be non-negative"));
        }
        Ok(())
    }
}

/// Complex taps, laid out `[device][rx][tx][tap]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    devices: usize,
    rx_antennas: usize,
    tx_antennas: usize,
    tap_len: usize,
    taps: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn from_taps(
        devices: usize,
        rx_antennas: usize,
        tx_antennas: usize,
        tap_len: usize,
        taps: Vec<Complex64>,
    ) -> Result<Self> {
        check_dim("channel taps", devices * rx_antennas * tx_antennas * tap_len, taps.len())?;
        if taps.iter().any(|t| !(t.re.is_finite() && t.im.is_finite())) {
            return Err(Error::NonFinite("channel taps".into()));
        }
        Ok(ChannelRealization {
            devices,
            rx_antennas,
            tx_antennas,
            tap_len,
            taps,
        })
    }

    pub fn devices(&self) -> usize {
        self.devices
    }

    pub fn rx_antennas(&self) -> usize {
        self.rx_antennas
    }

    pub fn tx_antennas(&self) -> usize {
        self.tx_antennas
    }

    pub fn tap_len(&self) -> usize {
        self.tap_len
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    /// Taps `h[k][n][m]`.
    pub fn response(&self, device: usize, rx: usize, tx: usize) -> &[Complex64] {
        let start = ((device * self.rx_antennas + rx) * self.tx_antennas + tx) * self.tap_len;
        &self.taps[start..start + self.tap_len]
    }

    fn response_mut(&mut self, device: usize, rx: usize, tx: usize) -> &mut [Complex64] {
        let start = ((device * self.rx_antennas + rx) * self.tx_antennas + tx) * self.tap_len;
        &mut self.taps[start..start + self.tap_len]
    }
}

/// Draws one realization: independent Rayleigh amplitudes per path and link.
pub fn sample_channel<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> Result<ChannelRealization> {
    cfg.validate()?;
    let tap_len = cfg.tap_len();
    let mut real = ChannelRealization {
        devices: cfg.devices,
        rx_antennas: cfg.rx_antennas,
        tx_antennas: cfg.tx_antennas,
        tap_len,
        taps: alloc::vec![Complex64::new(0.0, 0.0); cfg.devices * cfg.rx_antennas * cfg.tx_antennas * tap_len],
    };
    for k in 0..cfg.devices {
        for n in 0..cfg.rx_antennas {
            for m in 0..cfg.tx_antennas {
                let h = real.response_mut(k, n, m);
                for (&d, &p) in cfg.delays.iter().zip(&cfg.powers) {
                    h[d] = complex_normal(rng, p);
                }
            }
        }
    }
    Ok(real)
}

fn add_noise<R: Rng + ?Sized>(y: &mut DMatrix<Complex64>, noise_psd: f64, rng: &mut R) {
    if noise_psd > 0.0 {
        for v in y.iter_mut() {
            *v += complex_normal(rng, noise_psd);
        }
    }
}

/// Convolves device `k`'s antennas with its taps and accumulates into `y`.
fn accumulate_device(real: &ChannelRealization, k: usize, frame: &DMatrix<f64>, y: &mut DMatrix<Complex64>) {
    let len = frame.ncols();
    for n in 0..real.rx_antennas {
        for m in 0..real.tx_antennas {
            let h = real.response(k, n, m);
            for (t, &tap) in h.iter().enumerate() {
                if tap.re == 0.0 && tap.im == 0.0 {
                    continue;
                }
                for i in t..len {
                    let s = frame[(m, i - t)];
                    if s != 0.0 {
                        y[(n, i)] += tap * s;
                    }
                }
            }
        }
    }
}

fn check_frames(real: &ChannelRealization, frames: &[DMatrix<f64>]) -> Result<usize> {
    check_dim("device frames", real.devices, frames.len())?;
    let len = frames.first().map_or(0, |f| f.ncols());
    for f in frames {
        check_dim("frame antennas", real.tx_antennas, f.nrows())?;
        check_dim("frame length", len, f.ncols())?;
    }
    Ok(len)
}

/// Noiseless superposition of every device's convolved transmission.
pub fn mac_noiseless(real: &ChannelRealization, frames: &[DMatrix<f64>]) -> Result<DMatrix<Complex64>> {
    let len = check_frames(real, frames)?;
    let mut y = DMatrix::from_element(real.rx_antennas, len, Complex64::new(0.0, 0.0));
    for (k, frame) in frames.iter().enumerate() {
        accumulate_device(real, k, frame, &mut y);
    }
    Ok(y)
}

/// Received `[N_R x len]` samples for per-device `[N_T x len]` frames, plus
/// complex white noise of variance `noise_psd`.
pub fn transmit_mac<R: Rng + ?Sized>(
    real: &ChannelRealization,
    frames: &[DMatrix<f64>],
    noise_psd: f64,
    rng: &mut R,
) -> Result<DMatrix<Complex64>> {
    let mut y = mac_noiseless(real, frames)?;
    add_noise(&mut y, noise_psd, rng);
    Ok(y)
}

/// Adjoint of the noiseless MAC with respect to the (real) transmit samples.
///
/// `grad` packs dL/dRe(y) + i dL/dIm(y).
pub fn mac_adjoint(real: &ChannelRealization, grad: &DMatrix<Complex64>) -> Result<Vec<DMatrix<f64>>> {
    check_dim("gradient antennas", real.rx_antennas, grad.nrows())?;
    let len = grad.ncols();
    let mut out = Vec::with_capacity(real.devices);
    for k in 0..real.devices {
        let mut g = DMatrix::zeros(real.tx_antennas, len);
        for n in 0..real.rx_antennas {
            for m in 0..real.tx_antennas {
                for (t, &tap) in real.response(k, n, m).iter().enumerate() {
                    if tap.re == 0.0 && tap.im == 0.0 {
                        continue;
                    }
                    for j in 0..len.saturating_sub(t) {
                        let gy = grad[(n, j + t)];
                        g[(m, j)] += tap.re * gy.re + tap.im * gy.im;
                    }
                }
            }
        }
        out.push(g);
    }
    Ok(out)
}

/// Orthogonal pilot phase: each device's pilots see only its own channel.
///
/// Noise is drawn device by device, so device `k`'s output depends on the
/// stream position but never on the other devices' pilot values.
pub fn transmit_pilots<R: Rng + ?Sized>(
    real: &ChannelRealization,
    pilots: &[DMatrix<f64>],
    noise_psd: f64,
    rng: &mut R,
) -> Result<Vec<DMatrix<Complex64>>> {
    check_frames(real, pilots)?;
    let len = pilots.first().map_or(0, |p| p.ncols());
    if len == 0 {
        return Err(Error::config("pilot length must be at least 1"));
    }
    let mut out = Vec::with_capacity(pilots.len());
    for (k, p) in pilots.iter().enumerate() {
        let mut y = DMatrix::from_element(real.rx_antennas, len, Complex64::new(0.0, 0.0));
        accumulate_device(real, k, p, &mut y);
        add_noise(&mut y, noise_psd, rng);
        out.push(y);
    }
    Ok(out)
}

/// Adjoint of the noiseless pilot phase; one gradient per device.
pub fn pilots_adjoint(real: &ChannelRealization, grads: &[DMatrix<Complex64>]) -> Result<Vec<DMatrix<f64>>> {
    check_dim("pilot gradients", real.devices, grads.len())?;
    let mut out = Vec::with_capacity(grads.len());
    for (k, g) in grads.iter().enumerate() {
        // The single-device adjoint is the MAC adjoint restricted to device k.
        let mut single = real.clone();
        single.devices = 1;
        let start = k * real.rx_antennas * real.tx_antennas * real.tap_len;
        let end = start + real.rx_antennas * real.tx_antennas * real.tap_len;
        single.taps = real.taps[start..end].to_vec();
        out.push(mac_adjoint(&single, g)?.remove(0));
    }
    Ok(out)
}

/// Stacks received pilots into `[Re(y_p); Im(y_p)]`, where `y_p` runs over
/// device, then receive antenna, then pilot time.
pub fn pilot_observation(rx: &[DMatrix<Complex64>]) -> DVector<f64> {
    let flat: Vec<Complex64> = rx
        .iter()
        .flat_map(|y| (0..y.nrows()).flat_map(move |n| (0..y.ncols()).map(move |i| y[(n, i)])))
        .collect();
    let half = flat.len();
    DVector::from_fn(2 * half, |r, _| if r < half { flat[r].re } else { flat[r - half].im })
}

/// Inverse of [`pilot_observation`] for gradients.
pub fn pilot_observation_adjoint(grad: &DVector<f64>, devices: usize, rx_antennas: usize, len: usize) -> Result<Vec<DMatrix<Complex64>>> {
    let half = devices * rx_antennas * len;
    check_dim("pilot observation", 2 * half, grad.len())?;
    Ok((0..devices)
        .map(|k| {
            DMatrix::from_fn(rx_antennas, len, |n, i| {
                let idx = (k * rx_antennas + n) * len + i;
                Complex64::new(grad[idx], grad[half + idx])
            })
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ConstraintKind {
    /// `||s||^2 <= E_fr` over the whole frame of one device.
    PerFrame,
    /// `|s_i|^2 <= E_s` for every sample.
    PerSymbol,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyConstraint {
    pub kind: ConstraintKind,
    pub budget: f64,
}

impl EnergyConstraint {
    /// Budget that realizes `snr` (linear) under the average-symbol-power
    /// definition: `E_fr / (antennas * samples) / N_0` per frame, `E_s / N_0`
    /// per symbol.
    pub fn from_snr(kind: ConstraintKind, snr: f64, noise_psd: f64, antennas: usize, samples: usize) -> Self {
        let symbol = snr * noise_psd;
        let budget = match kind {
            ConstraintKind::PerFrame => symbol * (antennas * samples) as f64,
            ConstraintKind::PerSymbol => symbol,
        };
        EnergyConstraint { kind, budget }
    }

    pub fn is_satisfied(&self, frame: &DMatrix<f64>) -> bool {
        match self.kind {
            ConstraintKind::PerFrame => frame.norm_squared() <= self.budget + 1e-9,
            ConstraintKind::PerSymbol => {
                let cap = libm::sqrt(self.budget);
                frame.iter().all(|v| v.abs() <= cap + 1e-12)
            }
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

/// Rescales (per frame) or clips (per symbol) a device frame into its budget.
pub fn enforce_energy(frame: &DMatrix<f64>, c: &EnergyConstraint) -> DMatrix<f64> {
    match c.kind {
        ConstraintKind::PerFrame => {
            let e = frame.norm_squared();
            if e <= c.budget {
                frame.clone()
            } else {
                frame * libm::sqrt(c.budget / e)
            }
        }
        ConstraintKind::PerSymbol => {
            let cap = libm::sqrt(c.budget);
            frame.map(|v| v.clamp(-cap, cap))
        }
    }
}

/// Backward of [`enforce_energy`] given the pre-enforcement frame.
///
/// Per-symbol clipping passes gradients straight through inside the clip
/// region and blocks them outside.
pub fn enforce_energy_backward(frame: &DMatrix<f64>, grad: &DMatrix<f64>, c: &EnergyConstraint) -> DMatrix<f64> {
    match c.kind {
        ConstraintKind::PerFrame => {
            let e = frame.norm_squared();
            if e <= c.budget {
                grad.clone()
            } else {
                let scale = libm::sqrt(c.budget / e);
                let proj = frame.dot(grad) / e;
                (grad - frame * proj) * scale
            }
        }
        ConstraintKind::PerSymbol => {
            let cap = libm::sqrt(c.budget);
            grad.zip_map(frame, |g, v| if v.abs() <= cap { g } else { 0.0 })
        }
    }
}

/// Projects `v` onto the ball `||v||^2 <= budget`. Points within rounding
/// of the sphere are left alone, so projecting is idempotent.
pub fn project_energy_ball(v: &mut DMatrix<f64>, budget: f64) {
    let e = v.norm_squared();
    if e > budget * (1.0 + 1e-12) {
        *v *= libm::sqrt(budget / e);
    }
}
