//! Labelled spike-raster datasets, sensor partitioning across devices and a
//! synthetic spatio-temporal pattern generator.

use alloc::vec::Vec;
use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::SpikeRaster;
use crate::rng::{stream, tag};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    /// `[rows*cols x steps]`, channels in row-major pixel order.
    pub raster: SpikeRaster,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub rows: usize,
    pub cols: usize,
    pub steps: usize,
    pub classes: usize,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn channels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for ex in &self.examples {
            if ex.raster.channels() != self.channels() || ex.raster.steps() != self.steps {
                return Err(Error::config("example raster shape differs from dataset shape"));
            }
            if ex.label >= self.classes {
                return Err(Error::config("label out of range"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    pub train: Dataset,
    pub test: Dataset,
}

/// Which channels each device observes.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSplit {
    pub fraction: f64,
    pub devices: Vec<Vec<usize>>,
}

impl SensorSplit {
    /// Every device sees `ceil(fraction * D)` consecutive channels of the
    /// row-major image. The first device starts at the top, the last ends at
    /// the bottom and any others are spaced evenly in between. Whole-row
    /// fractions therefore give whole row bands.
    pub fn new(devices: usize, fraction: f64, channels: usize) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::config("sensor fraction must lie in (0, 1]"));
        }
        if devices == 0 || channels == 0 {
            return Err(Error::config("need at least one device and one channel"));
        }
        let per_device = (libm::ceil(fraction * channels as f64) as usize).clamp(1, channels);
        let slack = channels - per_device;
        let lists = (0..devices)
            .map(|k| {
                let start = if devices == 1 {
                    0
                } else {
                    (k * slack + (devices - 1) / 2) / (devices - 1)
                };
                (start..start + per_device).collect()
            })
            .collect();
        Ok(SensorSplit {
            fraction,
            devices: lists,
        })
    }

    pub fn per_device(&self) -> usize {
        self.devices.first().map_or(0, Vec::len)
    }
}

/// Per-device views of a full raster.
pub fn split_sensors(raster: &SpikeRaster, split: &SensorSplit) -> Result<Vec<SpikeRaster>> {
    if split.devices.iter().flatten().any(|&c| c >= raster.channels()) {
        return Err(Error::config("sensor split exceeds raster channels"));
    }
    Ok(split.devices.iter().map(|c| raster.select_channels(c)).collect())
}

/// A dataset example prepared for the pipeline: one input matrix per device.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub inputs: Vec<DMatrix<f64>>,
    pub label: usize,
}

pub fn prepare_samples(data: &Dataset, split: &SensorSplit) -> Result<Vec<Sample>> {
    data.examples
        .iter()
        .map(|ex| {
            Ok(Sample {
                inputs: split_sensors(&ex.raster, split)?
                    .iter()
                    .map(SpikeRaster::to_matrix)
                    .collect(),
                label: ex.label,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SynthConfig {
    pub rows: usize,
    pub cols: usize,
    pub steps: usize,
    pub classes: usize,
    /// Spike probability of each prototype entry inside the active window.
    pub sparsity: f64,
    /// Maximum timing jitter in steps (uniform in `-jitter..=jitter`).
    pub jitter: usize,
    /// Probability that a prototype spike is dropped from an example.
    pub dropout: f64,
    /// First step at which the stimulus may spike.
    pub onset: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rows: 8,
            cols: 8,
            steps: 40,
            classes: 2,
            sparsity: 0.05,
            jitter: 1,
            dropout: 0.2,
            onset: 10,
            train_per_class: 200,
            test_per_class: 50,
            seed: 0,
        }
    }
}

/// Class prototypes are random rasters; examples are jittered, thinned
/// copies. Train and test examples alternate classes.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<DataSplit> {
    if !(cfg.sparsity > 0.0 && cfg.sparsity < 1.0) {
        return Err(Error::config("sparsity must lie in (0, 1)"));
    }
    if !(0.0..1.0).contains(&cfg.dropout) {
        return Err(Error::config("dropout must lie in [0, 1)"));
    }
    if cfg.classes == 0 || cfg.rows * cfg.cols == 0 || cfg.onset >= cfg.steps {
        return Err(Error::config("synthetic dataset shape is empty"));
    }
    let channels = cfg.rows * cfg.cols;
    let mut rng = stream(cfg.seed, &[tag::DATA, 0]);
    let prototypes: Vec<SpikeRaster> = (0..cfg.classes)
        .map(|_| {
            let mut p = SpikeRaster::zeros(channels, cfg.steps);
            for l in cfg.onset..cfg.steps {
                for d in 0..channels {
                    if rng.random_bool(cfg.sparsity) {
                        p.set(d, l, true);
                    }
                }
            }
            p
        })
        .collect();

    let make = |per_class: usize, rng: &mut crate::rng::SimRng| {
        let mut examples = Vec::with_capacity(per_class * cfg.classes);
        for _ in 0..per_class {
            for (label, proto) in prototypes.iter().enumerate() {
                let mut r = SpikeRaster::zeros(channels, cfg.steps);
                for l in cfg.onset..cfg.steps {
                    for d in 0..channels {
                        if !proto.get(d, l) || rng.random_bool(cfg.dropout) {
                            continue;
                        }
                        let shift = if cfg.jitter > 0 {
                            rng.random_range(0..=2 * cfg.jitter) as isize - cfg.jitter as isize
                        } else {
                            0
                        };
                        let t = (l as isize + shift).clamp(cfg.onset as isize, cfg.steps as isize - 1);
                        r.set(d, t as usize, true);
                    }
                }
                examples.push(Example { raster: r, label });
            }
        }
        Dataset {
            rows: cfg.rows,
            cols: cfg.cols,
            steps: cfg.steps,
            classes: cfg.classes,
            examples,
        }
    };
    let mut train_rng = stream(cfg.seed, &[tag::DATA, 1]);
    let mut test_rng = stream(cfg.seed, &[tag::DATA, 2]);
    Ok(DataSplit {
        train: make(cfg.train_per_class, &mut train_rng),
        test: make(cfg.test_per_class, &mut test_rng),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_view_is_identity() {
        let s = SensorSplit::new(1, 1.0, 676).unwrap();
        assert_eq!(s.devices[0], (0..676).collect::<Vec<_>>());
        assert!(SensorSplit::new(2, 0.0, 10).is_err());
        assert!(SensorSplit::new(2, 1.5, 10).is_err());
    }

    #[test]
    fn three_quarter_split_of_26_rows() {
        let s = SensorSplit::new(2, 0.75, 676).unwrap();
        assert_eq!(s.per_device(), 507);
        let rows = |c: &Vec<usize>| (c[0] / 26, c[c.len() - 1] / 26);
        assert_eq!(rows(&s.devices[0]), (0, 19)); // rows 1..20
        assert_eq!(rows(&s.devices[1]), (6, 25)); // rows 7..26
    }

    #[test]
    fn half_split_is_disjoint() {
        let s = SensorSplit::new(2, 0.5, 676).unwrap();
        assert_eq!(s.devices[0].last(), Some(&337));
        assert_eq!(s.devices[1].first(), Some(&338));
    }

    #[test]
    fn noiseless_examples_equal_prototypes() {
        let cfg = SynthConfig {
            jitter: 0,
            dropout: 0.0,
            train_per_class: 3,
            test_per_class: 1,
            ..SynthConfig::default()
        };
        let d = synth_dataset(&cfg).unwrap();
        let ex = &d.train.examples;
        assert_eq!(ex[0].raster, ex[2].raster);
        assert_eq!(ex[0].raster, d.test.examples[0].raster);
        assert_ne!(ex[0].raster, ex[1].raster);
        assert_eq!(ex[1].label, 1);
    }

    #[test]
    fn onset_silences_early_steps() {
        let d = synth_dataset(&SynthConfig::default()).unwrap();
        for ex in d.train.examples.iter().chain(&d.test.examples) {
            for l in 0..10 {
                assert!(ex.raster.step_slice(l).iter().all(|&b| b == 0));
            }
        }
    }

    #[test]
    fn expected_spike_count() {
        let cfg = SynthConfig {
            onset: 0,
            jitter: 0,
            dropout: 0.0,
            train_per_class: 1,
            test_per_class: 0,
            ..SynthConfig::default()
        };
        // average over many prototype seeds: D * L * sparsity = 128
        let n = 200;
        let total: usize = (0..n)
            .map(|s| {
                let d = synth_dataset(&SynthConfig { seed: s, ..cfg.clone() }).unwrap();
                d.train.examples.iter().map(|e| e.raster.count()).sum::<usize>()
            })
            .sum();
        let mean = total as f64 / (2 * n) as f64;
        assert!((mean - 128.0).abs() < 3.0, "mean {mean}");
    }
}
