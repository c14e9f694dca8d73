//! Spike-to-sample mapping at the transmitter and block framing at the
//! receiver.
//!
//! Sample `i` of block `l` (both zero-based here) sits at `l * L_b + i`.

use alloc::vec::Vec;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::raster::SpikeRaster;

/// Bandwidth-expansion scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Scheme {
    /// Time hopping: one encoder output per sensed step, placed at a random
    /// offset inside its block.
    Th,
    /// Learned time hopping: the encoder runs `L_b` times faster and emits
    /// every sample itself.
    Lth,
}

impl core::fmt::Display for Scheme {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Scheme::Th => "th",
            Scheme::Lth => "lth",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationConfig {
    pub scheme: Scheme,
    pub expansion: usize,
    pub pulse_amplitude: f64,
}

impl ModulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.expansion == 0 {
            return Err(Error::config("bandwidth expansion must be at least 1"));
        }
        if !(self.pulse_amplitude.is_finite() && self.pulse_amplitude > 0.0) {
            return Err(Error::config("pulse amplitude must be positive"));
        }
        Ok(())
    }
}

/// Hop offsets (zero-based, in `0..L_b`) for every (antenna, block).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopPattern {
    expansion: usize,
    rows: usize,
    offsets: Vec<u8>,
}

impl HopPattern {
    /// Draws one offset per slot in row-then-block order.
    ///
    /// Offsets are drawn for silent slots too, so the stream position after
    /// drawing depends only on the frame shape.
    pub fn draw<R: Rng + ?Sized>(rows: usize, blocks: usize, expansion: usize, rng: &mut R) -> Self {
        assert!(expansion >= 1 && expansion <= 256);
        let offsets = (0..rows * blocks)
            .map(|_| rng.random_range(0..expansion) as u8)
            .collect();
        HopPattern {
            expansion,
            rows,
            offsets,
        }
    }

    pub fn offset(&self, row: usize, block: usize) -> usize {
        self.offsets[block * self.rows + row] as usize
    }
}

/// Places every entry of `x` (`N_T x L`) at its hop position inside a block
/// of `L_b` samples; zeros stay zero.
pub fn th_place(x: &DMatrix<f64>, hops: &HopPattern) -> Result<DMatrix<f64>> {
    check_dim("hop rows", hops.rows, x.nrows())?;
    check_dim("hop blocks", hops.offsets.len(), x.nrows() * x.ncols())?;
    let lb = hops.expansion;
    let mut out = DMatrix::zeros(x.nrows(), x.ncols() * lb);
    for l in 0..x.ncols() {
        for m in 0..x.nrows() {
            out[(m, l * lb + hops.offset(m, l))] = x[(m, l)];
        }
    }
    Ok(out)
}

/// Straight-through gradient of [`th_place`]: each source entry receives the
/// gradient of the sample it was placed on.
pub fn th_place_backward(grad: &DMatrix<f64>, hops: &HopPattern) -> DMatrix<f64> {
    let lb = hops.expansion;
    let blocks = grad.ncols() / lb;
    DMatrix::from_fn(grad.nrows(), blocks, |m, l| grad[(m, l * lb + hops.offset(m, l))])
}

/// Time-hopping modulation of a spike raster with fresh random offsets.
pub fn th_modulate<R: Rng + ?Sized>(x: &SpikeRaster, expansion: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if expansion == 0 {
        return Err(Error::config("bandwidth expansion must be at least 1"));
    }
    let hops = HopPattern::draw(x.channels(), x.steps(), expansion, rng);
    th_place(&x.to_matrix(), &hops)
}

/// Inserts `L_b - 1` zero steps after every sensed step.
pub fn lth_expand_input(u: &SpikeRaster, expansion: usize) -> Result<SpikeRaster> {
    if expansion == 0 {
        return Err(Error::config("bandwidth expansion must be at least 1"));
    }
    let mut out = SpikeRaster::zeros(u.channels(), u.steps() * expansion);
    for l in 0..u.steps() {
        for d in 0..u.channels() {
            if u.get(d, l) {
                out.set(d, l * expansion, true);
            }
        }
    }
    Ok(out)
}

/// Matrix form of [`lth_expand_input`].
pub fn lth_expand_matrix(u: &DMatrix<f64>, expansion: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(u.nrows(), u.ncols() * expansion);
    for l in 0..u.ncols() {
        out.column_mut(l * expansion).copy_from(&u.column(l));
    }
    out
}

/// Pulse amplitudes for a spike train: `amplitude * s`.
pub fn pulse_map(s: &DMatrix<f64>, amplitude: f64) -> DMatrix<f64> {
    s * amplitude
}

/// Frames `[N_R x L*L_b]` complex samples into `[2*L_b*N_R x L]` real decoder
/// inputs. Column `l` holds, for each antenna in turn, the real parts of its
/// `L_b` samples followed by their imaginary parts.
pub fn rx_frame(y: &DMatrix<Complex64>, expansion: usize) -> Result<DMatrix<f64>> {
    if expansion == 0 || y.ncols() % expansion != 0 {
        return Err(Error::config("received length must be a multiple of the bandwidth expansion"));
    }
    let (nr, lb) = (y.nrows(), expansion);
    let blocks = y.ncols() / lb;
    Ok(DMatrix::from_fn(2 * lb * nr, blocks, |row, l| {
        let n = row / (2 * lb);
        let r = row % (2 * lb);
        let v = y[(n, l * lb + r % lb)];
        if r < lb {
            v.re
        } else {
            v.im
        }
    }))
}

/// Inverse of [`rx_frame`]; also its adjoint, packing gradients as
/// `dRe + i dIm`.
pub fn rx_unframe(frame: &DMatrix<f64>, expansion: usize, rx_antennas: usize) -> Result<DMatrix<Complex64>> {
    check_dim("framed rows", 2 * expansion * rx_antennas, frame.nrows())?;
    let lb = expansion;
    Ok(DMatrix::from_fn(rx_antennas, frame.ncols() * lb, |n, i| {
        let (l, r) = (i / lb, i % lb);
        Complex64::new(frame[(n * 2 * lb + r, l)], frame[(n * 2 * lb + lb + r, l)])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn lth_identity_at_unit_expansion() {
        let mut u = SpikeRaster::zeros(3, 5);
        u.set(1, 2, true);
        assert_eq!(lth_expand_input(&u, 1).unwrap(), u);
        let e = lth_expand_input(&u, 6).unwrap();
        assert_eq!(e.steps(), 30);
        assert!(e.get(1, 12));
        assert_eq!(e.count(), 1);
    }

    #[test]
    fn zero_raster_stays_zero() {
        let x = SpikeRaster::zeros(2, 7);
        let s = th_modulate(&x, 5, &mut stream(1, &[])).unwrap();
        assert_eq!(s.shape(), (2, 35));
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_antenna_frame_columns() {
        let y = DMatrix::from_row_slice(1, 2, &[Complex64::new(1.0, 2.0), Complex64::new(3.0, -4.0)]);
        let f = rx_frame(&y, 1).unwrap();
        assert_eq!(f, DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, -4.0]));
        assert_eq!(rx_unframe(&f, 1, 1).unwrap(), y);
        assert!(rx_frame(&y, 3).is_err());
    }

    #[test]
    fn pulse_energy_is_count_times_amplitude_squared() {
        let mut s = DMatrix::zeros(2, 10);
        for i in 0..7 {
            s[(i % 2, i)] = 1.0;
        }
        let a = 1.7;
        assert!((pulse_map(&s, a).norm_squared() - 7.0 * a * a).abs() < 1e-12);
    }
}
