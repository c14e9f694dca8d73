//! BPSK over the multipath MAC with a perfect-CSI linear MMSE block
//! equalizer.
//!
//! Each code bit is one real symbol `+-sqrt(E_sym)` (bit 0 maps to `+`),
//! repeated on every transmit antenna. The receiver sees the sum of the
//! transmit-antenna responses as one SIMO channel.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{transmit_mac, ChannelRealization};
use crate::error::{Error, Result};

pub fn bpsk_symbols(bits: &[u8]) -> Vec<f64> {
    bits.iter().map(|&b| if b == 0 { 1.0 } else { -1.0 }).collect()
}

/// Real-stacked convolution matrix `[2 N_R len x n]` of device `k`'s
/// effective channel, including the amplitude.
fn stacked_channel(real: &ChannelRealization, k: usize, n: usize, len: usize, amplitude: f64) -> DMatrix<f64> {
    let nr = real.rx_antennas();
    let mut h = DMatrix::zeros(2 * nr * len, n);
    for r in 0..nr {
        let mut eff = alloc::vec![Complex64::new(0.0, 0.0); real.tap_len()];
        for m in 0..real.tx_antennas() {
            for (e, t) in eff.iter_mut().zip(real.response(k, r, m)) {
                *e += t * amplitude;
            }
        }
        for j in 0..n {
            for (t, e) in eff.iter().enumerate() {
                let i = j + t;
                if i < len {
                    h[(r * len + i, j)] = e.re;
                    h[(nr * len + r * len + i, j)] = e.im;
                }
            }
        }
    }
    h
}

/// Transmits `bits` from `device` (every other device silent) and returns
/// per-bit LLRs from the MMSE estimates.
pub fn bpsk_chain<R: Rng + ?Sized>(
    bits: &[u8],
    real: &ChannelRealization,
    device: usize,
    noise_psd: f64,
    symbol_energy: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if device >= real.devices() {
        return Err(Error::config("device index out of range"));
    }
    if !(noise_psd > 0.0 && symbol_energy > 0.0) {
        return Err(Error::config("BPSK chain needs positive noise and symbol energy"));
    }
    let n = bits.len();
    let len = n + real.tap_len() - 1;
    let amplitude = libm::sqrt(symbol_energy);
    let symbols = bpsk_symbols(bits);
    let frames: Vec<DMatrix<f64>> = (0..real.devices())
        .map(|k| {
            DMatrix::from_fn(real.tx_antennas(), len, |_, i| {
                if k == device && i < n {
                    amplitude * symbols[i]
                } else {
                    0.0
                }
            })
        })
        .collect();
    let y = transmit_mac(real, &frames, noise_psd, rng)?;
    let nr = real.rx_antennas();
    let yr = DVector::from_fn(2 * nr * len, |row, _| {
        let (part, idx) = (row / (nr * len), row % (nr * len));
        let v = y[(idx / len, idx % len)];
        if part == 0 {
            v.re
        } else {
            v.im
        }
    });
    let h = stacked_channel(real, device, n, len, amplitude);
    let sigma2 = noise_psd / 2.0;
    let mut a = h.tr_mul(&h);
    for i in 0..n {
        a[(i, i)] += sigma2;
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::NonFinite("MMSE system is not positive definite".into()))?;
    let xhat = chol.solve(&h.tr_mul(&yr));
    let inv = chol.inverse();
    // Unbiased-Gaussian LLR: 2 mu x / nu with mu = 1 - s2 [A^-1]_ii and
    // nu = mu (1 - mu) reduces to 2 x / (s2 [A^-1]_ii).
    Ok((0..n).map(|i| 2.0 * xhat[i] / (sigma2 * inv[(i, i)])).collect())
}

/// Fraction of bits whose LLR sign disagrees with the transmitted bit.
pub fn hard_error_rate(bits: &[u8], llrs: &[f64]) -> f64 {
    let errors = bits
        .iter()
        .zip(llrs)
        .filter(|(&b, &l)| (l < 0.0) != (b == 1))
        .count();
    errors as f64 / bits.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn flat_unit() -> ChannelRealization {
        ChannelRealization::from_taps(1, 1, 1, 1, alloc::vec![Complex64::new(1.0, 0.0)]).unwrap()
    }

    #[test]
    fn flat_channel_llr_is_matched_filter() {
        let real = flat_unit();
        let bits = [0u8, 1, 1, 0, 1];
        // vanishing noise: LLR = 2 a y / (N0/2) with y ~ +-a
        let n0 = 1e-6;
        let llrs = bpsk_chain(&bits, &real, 0, n0, 1.0, &mut stream(1, &[])).unwrap();
        for (&b, &l) in bits.iter().zip(&llrs) {
            let expect = if b == 0 { 4.0 / n0 } else { -4.0 / n0 };
            assert!((l - expect).abs() < 1e-2 * expect.abs());
        }
        assert_eq!(hard_error_rate(&bits, &llrs), 0.0);
    }

    #[test]
    fn high_snr_multipath_decisions() {
        let real = ChannelRealization::from_taps(
            1,
            1,
            1,
            3,
            alloc::vec![Complex64::new(0.8, 0.1), Complex64::new(0.0, 0.0), Complex64::new(-0.3, 0.4)],
        )
        .unwrap();
        let bits: Vec<u8> = (0..40).map(|i| ((i * 7) % 3 == 0) as u8).collect();
        let llrs = bpsk_chain(&bits, &real, 0, 1e-3, 1.0, &mut stream(2, &[])).unwrap();
        assert_eq!(hard_error_rate(&bits, &llrs), 0.0);
    }
}
