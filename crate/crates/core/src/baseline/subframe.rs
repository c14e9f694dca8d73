//! Splitting a sensed frame into fixed-length subframes.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::SpikeRaster;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubframePlan {
    /// Sensed steps per frame.
    pub steps: usize,
    /// Steps per subframe.
    pub enc_len: usize,
}

impl SubframePlan {
    pub fn new(steps: usize, enc_len: usize) -> Result<Self> {
        if steps == 0 || enc_len == 0 {
            return Err(Error::config("subframe plan needs positive lengths"));
        }
        Ok(SubframePlan { steps, enc_len })
    }

    /// `ceil(L / L_enc)`.
    pub fn frames(&self) -> usize {
        self.steps.div_ceil(self.enc_len)
    }

    /// One-based step at which subframe `f` (zero-based) has been received.
    pub fn boundary(&self, f: usize) -> usize {
        ((f + 1) * self.enc_len).min(self.steps)
    }
}

/// Blocks of `enc_len` steps; the last one is zero-padded.
pub fn subframe_pack(u: &SpikeRaster, plan: &SubframePlan) -> Vec<SpikeRaster> {
    (0..plan.frames())
        .map(|f| {
            let mut b = SpikeRaster::zeros(u.channels(), plan.enc_len);
            for t in 0..plan.enc_len {
                let l = f * plan.enc_len + t;
                if l >= u.steps() {
                    break;
                }
                for d in 0..u.channels() {
                    if u.get(d, l) {
                        b.set(d, t, true);
                    }
                }
            }
            b
        })
        .collect()
}

/// Concatenates blocks and drops padding beyond `plan.steps`.
pub fn subframe_unpack(blocks: &[SpikeRaster], plan: &SubframePlan) -> Result<SpikeRaster> {
    if blocks.len() != plan.frames() {
        return Err(Error::config("block count does not match the subframe plan"));
    }
    let channels = blocks.first().map_or(0, SpikeRaster::channels);
    let mut u = SpikeRaster::zeros(channels, plan.steps);
    for (f, b) in blocks.iter().enumerate() {
        if b.channels() != channels || b.steps() != plan.enc_len {
            return Err(Error::config("block shape does not match the subframe plan"));
        }
        for t in 0..plan.enc_len {
            let l = f * plan.enc_len + t;
            if l < plan.steps {
                for d in 0..channels {
                    if b.get(d, t) {
                        u.set(d, l, true);
                    }
                }
            }
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_counts() {
        assert_eq!(SubframePlan::new(80, 20).unwrap().frames(), 4);
        let p = SubframePlan::new(81, 20).unwrap();
        assert_eq!(p.frames(), 5);
        let mut u = SpikeRaster::zeros(2, 81);
        for l in 0..81 {
            u.set(l % 2, l, true);
        }
        let blocks = subframe_pack(&u, &p);
        assert_eq!(blocks[4].count(), 1);
        assert!((1..20).all(|t| !blocks[4].get(0, t) && !blocks[4].get(1, t)));
        assert_eq!(subframe_unpack(&blocks, &p).unwrap(), u);
    }
}
