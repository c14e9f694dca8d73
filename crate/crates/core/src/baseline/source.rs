//! Fixed-rate sparse source coder: a spike count followed by up to `k`
//! spike positions as fixed-width indices.
//!
//! Position of entry `(d, t)` is `t * D + d`. When a block holds more than
//! `k` spikes the lowest `k` positions are kept.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::SpikeRaster;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceCoder {
    pub channels: usize,
    pub steps: usize,
    /// Spike positions carried per block.
    pub capacity: usize,
}

fn bits_for(values: usize) -> usize {
    (usize::BITS - values.saturating_sub(1).leading_zeros()) as usize
}

impl SourceCoder {
    /// Largest capacity whose payload fits in `budget` bits.
    pub fn for_budget(channels: usize, steps: usize, budget: usize) -> Result<Self> {
        let mut best = None;
        for k in 0.. {
            let c = SourceCoder {
                channels,
                steps,
                capacity: k,
            };
            if c.payload_bits() > budget || k > channels * steps {
                break;
            }
            best = Some(c);
        }
        best.ok_or_else(|| Error::config("empty source block"))
    }

    pub fn index_bits(&self) -> usize {
        bits_for(self.channels * self.steps)
    }

    pub fn count_bits(&self) -> usize {
        bits_for(self.capacity + 1)
    }

    pub fn payload_bits(&self) -> usize {
        self.count_bits() + self.capacity * self.index_bits()
    }

    pub fn encode(&self, block: &SpikeRaster) -> Vec<u8> {
        let positions: Vec<usize> = (0..self.steps)
            .flat_map(|t| (0..self.channels).map(move |d| (d, t)))
            .filter(|&(d, t)| block.get(d, t))
            .map(|(d, t)| t * self.channels + d)
            .take(self.capacity)
            .collect();
        let mut bits = Vec::with_capacity(self.payload_bits());
        push_bits(&mut bits, positions.len(), self.count_bits());
        for i in 0..self.capacity {
            push_bits(&mut bits, positions.get(i).copied().unwrap_or(0), self.index_bits());
        }
        bits
    }

    /// Reconstructs the transmitted positions. Out-of-range fields (possible
    /// after undetected channel errors) are ignored.
    pub fn decode(&self, bits: &[u8]) -> Result<SpikeRaster> {
        if bits.len() != self.payload_bits() {
            return Err(Error::Dimension {
                context: "source payload",
                expected: self.payload_bits(),
                actual: bits.len(),
            });
        }
        let mut r = SpikeRaster::zeros(self.channels, self.steps);
        let cb = self.count_bits();
        let count = read_bits(&bits[..cb]).min(self.capacity);
        let ib = self.index_bits();
        for i in 0..count {
            let pos = read_bits(&bits[cb + i * ib..cb + (i + 1) * ib]);
            if pos < self.channels * self.steps {
                r.set(pos % self.channels, pos / self.channels, true);
            }
        }
        Ok(r)
    }
}

fn push_bits(out: &mut Vec<u8>, value: usize, width: usize) {
    for b in (0..width).rev() {
        out.push(((value >> b) & 1) as u8);
    }
}

fn read_bits(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_block_roundtrips() {
        let c = SourceCoder {
            channels: 4,
            steps: 5,
            capacity: 3,
        };
        assert_eq!(c.index_bits(), 5);
        assert_eq!(c.count_bits(), 2);
        let mut b = SpikeRaster::zeros(4, 5);
        b.set(3, 4, true);
        b.set(0, 1, true);
        assert_eq!(c.decode(&c.encode(&b)).unwrap(), b);
        let z = SpikeRaster::zeros(4, 5);
        let bits = c.encode(&z);
        assert!(bits.iter().all(|&x| x == 0));
        assert_eq!(c.decode(&bits).unwrap(), z);
    }

    #[test]
    fn overfull_block_keeps_lowest_positions() {
        let c = SourceCoder {
            channels: 3,
            steps: 4,
            capacity: 2,
        };
        let mut b = SpikeRaster::zeros(3, 4);
        for (d, t) in [(2, 0), (0, 1), (1, 3), (2, 2), (0, 3)] {
            b.set(d, t, true);
        }
        let r = c.decode(&c.encode(&b)).unwrap();
        assert_eq!(r.count(), 2);
        assert!(r.get(2, 0) && r.get(0, 1));
    }

    #[test]
    fn budget_fit() {
        let c = SourceCoder::for_budget(64, 20, 48).unwrap();
        assert!(c.payload_bits() <= 48);
        let bigger = SourceCoder {
            capacity: c.capacity + 1,
            ..c
        };
        assert!(bigger.payload_bits() > 48);
        assert_eq!(SourceCoder::for_budget(64, 20, 0).unwrap().capacity, 0);
    }
}
