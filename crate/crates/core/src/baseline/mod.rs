//! Frame-based digital benchmark.
//!
//! Each device cuts its raster into subframes, compresses every subframe
//! with a fixed-rate position coder, protects it with a rate-2/3 LDPC code
//! and sends it as BPSK when slotted ALOHA lets it through. The receiver
//! classifies every delivered subframe with an ANN and reports the majority
//! over the decisions so far, so its answer only changes at subframe
//! boundaries.

pub mod aloha;
pub mod ann;
pub mod bpsk;
pub mod ldpc;
pub mod source;
pub mod subframe;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::pipeline::SystemConfig;
use crate::raster::SpikeRaster;
use crate::rng::{stream, tag};
use crate::trainer::{eval_channel, MetricTrace, TraceRow};

pub use aloha::{aloha_round, AlohaOutcome};
pub use ann::{block_input, train_ann, AnnClassifier, AnnTrainConfig};
pub use bpsk::bpsk_chain;
pub use ldpc::LdpcCode;
pub use source::SourceCoder;
pub use subframe::{subframe_pack, subframe_unpack, SubframePlan};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct BaselineConfig {
    /// Sensed steps per subframe.
    pub enc_len: usize,
    pub transmit_prob: f64,
    pub bp_iterations: usize,
    pub var_degree: usize,
    pub check_degree: usize,
    pub ldpc_seed: u64,
    /// Path of an `alist` parity-check matrix to use instead of the seeded
    /// construction. Read by the host; see [`DigitalBaseline::train_with_code`].
    pub parity_matrix: Option<String>,
    pub ann: AnnTrainConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            enc_len: 20,
            transmit_prob: 0.5,
            bp_iterations: 50,
            var_degree: 3,
            check_degree: 9,
            ldpc_seed: 0,
            parity_matrix: None,
            ann: AnnTrainConfig::default(),
        }
    }
}

/// Running majority over subframe decisions; ties go to the lowest class.
/// `None` when nothing has been delivered.
pub fn majority(decisions: &[usize], classes: usize) -> Option<usize> {
    if decisions.is_empty() {
        return None;
    }
    let mut counts = vec![0usize; classes];
    for &d in decisions {
        counts[d] += 1;
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    Some(best)
}

/// Decision after the given subframe decisions, and whether it is informed
/// by at least one of them. Uninformed decisions fall back to class 0.
pub fn classify_aggregate(decisions: &[usize], classes: usize) -> (usize, bool) {
    match majority(decisions, classes) {
        Some(c) => (c, true),
        None => (0, false),
    }
}

#[derive(Debug, Clone)]
pub struct DigitalBaseline {
    pub plan: SubframePlan,
    pub coder: SourceCoder,
    pub code: LdpcCode,
    /// One classifier per device view.
    pub classifiers: Vec<AnnClassifier>,
    pub config: BaselineConfig,
}

impl DigitalBaseline {
    /// Sizes the code to the `L_b * L_enc` channel uses of one subframe and
    /// the source coder to the code's information bits, then trains the
    /// classifiers on source-coded (pre-channel) subframes.
    pub fn train(system: &SystemConfig, cfg: &BaselineConfig, train: &[Sample]) -> Result<Self> {
        let uses = system.expansion * cfg.enc_len;
        let n = cfg.check_degree * (uses / cfg.check_degree.max(1));
        let code = LdpcCode::gallager(n, cfg.var_degree, cfg.check_degree, cfg.ldpc_seed)?;
        Self::train_with_code(system, cfg, code, train)
    }

    /// Like [`DigitalBaseline::train`] with a caller-supplied code, which
    /// must fit in the `L_b * L_enc` channel uses of a subframe.
    pub fn train_with_code(system: &SystemConfig, cfg: &BaselineConfig, code: LdpcCode, train: &[Sample]) -> Result<Self> {
        let plan = SubframePlan::new(system.steps, cfg.enc_len)?;
        if code.len() > system.expansion * cfg.enc_len {
            return Err(Error::config("LDPC block length exceeds the channel uses of one subframe"));
        }
        let coder = SourceCoder::for_budget(system.sensor_channels, cfg.enc_len, code.info_len())?;
        let mut classifiers = Vec::with_capacity(system.devices());
        for k in 0..system.devices() {
            let examples: Vec<ann::SubframeExample> = train
                .iter()
                .map(|s| {
                    let raster = SpikeRaster::from_matrix(&s.inputs[k]);
                    let blocks = subframe_pack(&raster, &plan)
                        .iter()
                        .map(|b| Ok(block_input(&coder.decode(&coder.encode(b))?)))
                        .collect::<Result<Vec<_>>>()?;
                    Ok((blocks, s.label))
                })
                .collect::<Result<_>>()?;
            let ann_cfg = AnnTrainConfig {
                seed: crate::rng::derive_seed(cfg.ann.seed, &[k as u64]),
                ..cfg.ann.clone()
            };
            classifiers.push(train_ann(&examples, system.classes, &ann_cfg)?.0);
        }
        Ok(DigitalBaseline {
            plan,
            coder,
            code,
            classifiers,
            config: cfg.clone(),
        })
    }

    /// Sends one subframe from `device`; `None` if BP decoding failed.
    fn deliver(
        &self,
        system: &SystemConfig,
        block: &SpikeRaster,
        device: usize,
        channel: &crate::channel::ChannelRealization,
        rng: &mut crate::rng::SimRng,
    ) -> Result<Option<usize>> {
        let mut info = self.coder.encode(block);
        info.resize(self.code.info_len(), 0);
        let word = self.code.encode(&info)?;
        let llrs = bpsk_chain(&word, channel, device, system.channel.noise_psd, system.symbol_energy(), rng)?;
        match self.code.decode(&llrs, self.config.bp_iterations) {
            Ok((w, _)) => {
                let payload = self.code.extract_info(&w);
                let rec = self.coder.decode(&payload[..self.coder.payload_bits()])?;
                Ok(Some(self.classifiers[device].predict(&block_input(&rec))?))
            }
            Err(Error::DecodeFailure { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Accuracy and energy per sensed step over the same evaluation channels
    /// as the spiking pipeline.
    pub fn evaluate<E: Executor>(
        &self,
        system: &SystemConfig,
        test: &[Sample],
        realizations: usize,
        seed: u64,
        exec: &E,
    ) -> Result<MetricTrace> {
        let steps = system.steps;
        let block_energy = (system.expansion * system.tx_antennas()) as f64 * system.symbol_energy();
        let per_real = exec.map(realizations, |r| {
            let channel = eval_channel(system, seed, r)?;
            let mut correct = vec![0usize; steps];
            let mut energy = vec![0.0; steps];
            for (i, sample) in test.iter().enumerate() {
                let mut rng = stream(seed, &[tag::BASELINE, 10, r as u64, i as u64]);
                let blocks: Vec<Vec<SpikeRaster>> = sample
                    .inputs
                    .iter()
                    .map(|u| subframe_pack(&SpikeRaster::from_matrix(u), &self.plan))
                    .collect();
                let mut decisions = Vec::new();
                let mut current = classify_aggregate(&decisions, system.classes).0;
                let mut l = 0;
                for f in 0..self.plan.frames() {
                    let round = aloha_round(system.devices(), self.config.transmit_prob, &mut rng)?;
                    let active = round.transmit.iter().filter(|&&t| t).count() as f64;
                    if let Some(k) = round.delivered {
                        if let Some(d) = self.deliver(system, &blocks[k][f], k, &channel, &mut rng)? {
                            decisions.push(d);
                        }
                    }
                    let end = self.plan.boundary(f);
                    while l < end {
                        energy[l] += active * block_energy;
                        if l + 1 == end {
                            current = classify_aggregate(&decisions, system.classes).0;
                        }
                        correct[l] += usize::from(current == sample.label);
                        l += 1;
                    }
                }
            }
            Ok::<_, Error>((correct, energy))
        });
        let mut correct = vec![0usize; steps];
        let mut energy = vec![0.0; steps];
        for res in per_real {
            let (c, e) = res?;
            for l in 0..steps {
                correct[l] += c[l];
                energy[l] += e[l];
            }
        }
        let n = (realizations * test.len()).max(1) as f64;
        let mut cum = 0.0;
        Ok(MetricTrace {
            rows: (0..steps)
                .map(|l| {
                    cum += energy[l];
                    TraceRow {
                        step: l + 1,
                        accuracy: correct[l] as f64 / n,
                        cumulative_energy: cum / n,
                        encoder_spikes: 0.0,
                        decoder_spikes: 0.0,
                    }
                })
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_rules() {
        assert_eq!(majority(&[1, 1, 2], 3), Some(1));
        assert_eq!(majority(&[2, 1], 3), Some(1));
        assert_eq!(majority(&[], 2), None);
        assert_eq!(classify_aggregate(&[], 4), (0, false));
    }
}
