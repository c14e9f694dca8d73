//! One-hidden-layer classifier applied to each decoded subframe.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::hypernet::{argmax, softmax};
use crate::raster::SpikeRaster;
use crate::rng::{stream, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct AnnClassifier {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

/// Flattens a block step by step into a 0/1 vector.
pub fn block_input(block: &SpikeRaster) -> DVector<f64> {
    DVector::from_iterator(block.bits().len(), block.bits().iter().map(|&b| f64::from(b)))
}

impl AnnClassifier {
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        let c1 = 1.0 / libm::sqrt(inputs.max(1) as f64);
        let c2 = 1.0 / libm::sqrt(hidden.max(1) as f64);
        AnnClassifier {
            w1: DMatrix::from_fn(hidden, inputs, |_, _| rng.random_range(-c1..=c1)),
            b1: DVector::zeros(hidden),
            w2: DMatrix::from_fn(classes, hidden, |_, _| rng.random_range(-c2..=c2)),
            b2: DVector::zeros(classes),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w1.ncols()
    }

    pub fn probs(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("classifier input", self.inputs(), x.len())?;
        let h = (&self.w1 * x + &self.b1).map(|v| v.max(0.0));
        Ok(softmax(&(&self.w2 * h + &self.b2)))
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<usize> {
        Ok(argmax(self.probs(x)?.as_slice()))
    }

    /// Adds `scale * dL/dparams` of the cross-entropy into `acc` and returns
    /// the loss.
    fn accumulate(&self, x: &DVector<f64>, label: usize, scale: f64, acc: &mut AnnClassifier) -> f64 {
        let pre = &self.w1 * x + &self.b1;
        let h = pre.map(|v| v.max(0.0));
        let p = softmax(&(&self.w2 * &h + &self.b2));
        let mut g = p.clone();
        g[label] -= 1.0;
        let gh = self.w2.tr_mul(&g).zip_map(&pre, |a, z| if z > 0.0 { a } else { 0.0 });
        acc.w2 += &g * h.transpose() * scale;
        acc.b2 += &g * scale;
        acc.w1 += &gh * x.transpose() * scale;
        acc.b1 += gh * scale;
        -libm::log(p[label].max(1e-30))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct AnnTrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for AnnTrainConfig {
    fn default() -> Self {
        AnnTrainConfig {
            hidden: 512,
            learning_rate: 0.05,
            batch_size: 16,
            steps: 300,
            seed: 0,
        }
    }
}

/// A training example: the subframe inputs of one frame and its label.
pub type SubframeExample = (Vec<DVector<f64>>, usize);

/// SGD on the cross-entropy summed over each example's subframes, averaged
/// over the batch. Returns the classifier and the per-step batch losses.
pub fn train_ann(
    examples: &[SubframeExample],
    classes: usize,
    cfg: &AnnTrainConfig,
) -> Result<(AnnClassifier, Vec<f64>)> {
    let inputs = examples
        .first()
        .and_then(|(blocks, _)| blocks.first())
        .map(|x| x.len())
        .ok_or_else(|| Error::config("empty classifier training set"))?;
    if cfg.hidden == 0 || cfg.batch_size == 0 || !(cfg.learning_rate >= 0.0) {
        return Err(Error::config("classifier needs hidden units, a batch and a non-negative rate"));
    }
    if examples.iter().any(|(_, l)| *l >= classes) {
        return Err(Error::config("label out of range"));
    }
    let mut ann = AnnClassifier::new(inputs, cfg.hidden, classes, &mut stream(cfg.seed, &[tag::BASELINE, 1]));
    let mut rng = stream(cfg.seed, &[tag::BASELINE, 2]);
    let mut losses = Vec::with_capacity(cfg.steps);
    let zero = AnnClassifier {
        w1: DMatrix::zeros(cfg.hidden, inputs),
        b1: DVector::zeros(cfg.hidden),
        w2: DMatrix::zeros(classes, cfg.hidden),
        b2: DVector::zeros(classes),
    };
    for _ in 0..cfg.steps {
        let mut acc = zero.clone();
        let mut loss = 0.0;
        let scale = 1.0 / cfg.batch_size as f64;
        for _ in 0..cfg.batch_size {
            let (blocks, label) = &examples[rng.random_range(0..examples.len())];
            for x in blocks {
                check_dim("classifier input", inputs, x.len())?;
                loss += ann.accumulate(x, *label, scale, &mut acc);
            }
        }
        let lr = cfg.learning_rate;
        ann.w1 -= acc.w1 * lr;
        ann.b1 -= acc.b1 * lr;
        ann.w2 -= acc.w2 * lr;
        ann.b2 -= acc.b2 * lr;
        if !loss.is_finite() {
            return Err(Error::NonFinite("classifier loss".into()));
        }
        losses.push(loss * scale);
    }
    Ok((ann, losses))
}
