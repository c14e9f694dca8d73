use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Binary `[channels x steps]` tensor.
///
/// Storage is step-major so that the spike vector of one time step is
/// contiguous, matching the column layout of `DMatrix`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpikeRaster {
    channels: usize,
    steps: usize,
    bits: Vec<u8>,
}

impl SpikeRaster {
    pub fn zeros(channels: usize, steps: usize) -> Self {
        SpikeRaster {
            channels,
            steps,
            bits: vec![0; channels * steps],
        }
    }

    /// Thresholds a real matrix at 0.5.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut r = Self::zeros(m.nrows(), m.ncols());
        for (dst, &v) in r.bits.iter_mut().zip(m.as_slice()) {
            *dst = u8::from(v >= 0.5);
        }
        r
    }

    /// Builds a raster from step-major bits, rejecting anything other than 0/1.
    pub fn from_bits(channels: usize, steps: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != channels * steps {
            return Err(Error::Dimension {
                context: "raster bits",
                expected: channels * steps,
                actual: bits.len(),
            });
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::config("raster entries must be 0 or 1"));
        }
        Ok(SpikeRaster {
            channels,
            steps,
            bits,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn get(&self, channel: usize, step: usize) -> bool {
        self.bits[step * self.channels + channel] != 0
    }

    pub fn set(&mut self, channel: usize, step: usize, value: bool) {
        self.bits[step * self.channels + channel] = u8::from(value);
    }

    pub fn step_slice(&self, step: usize) -> &[u8] {
        &self.bits[step * self.channels..(step + 1) * self.channels]
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn count_channel(&self, channel: usize) -> usize {
        (0..self.steps).filter(|&l| self.get(channel, l)).count()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_iterator(
            self.channels,
            self.steps,
            self.bits.iter().map(|&b| f64::from(b)),
        )
    }

    /// First `steps` columns.
    pub fn truncate(&self, steps: usize) -> Self {
        let steps = steps.min(self.steps);
        SpikeRaster {
            channels: self.channels,
            steps,
            bits: self.bits[..steps * self.channels].to_vec(),
        }
    }

    /// Raster restricted to the listed channels, in list order.
    pub fn select_channels(&self, channels: &[usize]) -> Self {
        let mut out = Self::zeros(channels.len(), self.steps);
        for l in 0..self.steps {
            for (i, &c) in channels.iter().enumerate() {
                out.set(i, l, self.get(c, l));
            }
        }
        out
    }
}
