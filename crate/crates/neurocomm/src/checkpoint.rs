//! Checkpoint container: one line of JSON header, then every tensor as
//! little-endian `f64` values in header order (column-major within a
//! tensor).

use std::path::Path;

use serde::{Deserialize, Serialize};

use neurocomm_core::modem::Scheme;
use neurocomm_core::pipeline::{ModelParams, Regime};

use crate::error::{Error, Result};

pub const FORMAT: &str = "neurocomm-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Whether the regime that produced the checkpoint updates this tensor.
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub config_hash: String,
    pub regime: Regime,
    pub scheme: Scheme,
    pub seed: u64,
    pub steps: usize,
    pub tensors: Vec<TensorEntry>,
}

impl CheckpointHeader {
    pub fn describe(params: &ModelParams, config_hash: &str, regime: Regime, scheme: Scheme, seed: u64, steps: usize) -> Self {
        CheckpointHeader {
            format: FORMAT.to_string(),
            config_hash: config_hash.to_string(),
            regime,
            scheme,
            seed,
            steps,
            tensors: params
                .named()
                .into_iter()
                .map(|(name, group, (rows, cols), _)| TensorEntry {
                    name,
                    rows,
                    cols,
                    trainable: regime.trains(group),
                })
                .collect(),
        }
    }
}

pub fn to_bytes(header: &CheckpointHeader, params: &ModelParams) -> Result<Vec<u8>> {
    let named = params.named();
    if named.len() != header.tensors.len()
        || named
            .iter()
            .zip(&header.tensors)
            .any(|((n, _, shape, _), t)| *n != t.name || *shape != (t.rows, t.cols))
    {
        return Err(Error::invalid("checkpoint header does not describe the parameters"));
    }
    let mut out = serde_json::to_vec(header).map_err(|e| Error::json("checkpoint header", e))?;
    out.push(b'\n');
    for (_, _, _, data) in named {
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a checkpoint and fills a copy of `template`, whose tensor names
/// and shapes must match the header exactly. The config hash must equal
/// `config_hash`.
pub fn from_bytes(bytes: &[u8], template: &ModelParams, config_hash: &str) -> Result<(CheckpointHeader, ModelParams)> {
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::invalid("checkpoint has no header line"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..split]).map_err(|e| Error::json("checkpoint header", e))?;
    if header.format != FORMAT {
        return Err(Error::invalid(format!("unknown checkpoint format {:?}", header.format)));
    }
    if header.config_hash != config_hash {
        return Err(Error::invalid(format!(
            "checkpoint was written for config {} but the current config is {config_hash}",
            header.config_hash
        )));
    }
    let expected = template.named();
    if expected.len() != header.tensors.len() {
        return Err(Error::invalid("checkpoint tensor count differs from the configured model"));
    }
    for ((name, group, shape, _), t) in expected.iter().zip(&header.tensors) {
        if *name != t.name || *shape != (t.rows, t.cols) {
            return Err(Error::invalid(format!(
                "checkpoint tensor {} is {}x{}, model expects {name} of {}x{}",
                t.name, t.rows, t.cols, shape.0, shape.1
            )));
        }
        if t.trainable != header.regime.trains(*group) {
            return Err(Error::invalid(format!("checkpoint trainable flag of {name} contradicts its regime")));
        }
    }
    let blob = &bytes[split + 1..];
    let total: usize = header.tensors.iter().map(|t| t.rows * t.cols).sum();
    if blob.len() != 8 * total {
        return Err(Error::invalid(format!("checkpoint holds {} bytes of tensors, expected {}", blob.len(), 8 * total)));
    }
    let mut params = template.clone();
    let mut words = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight bytes")));
    for (_, slice) in params.slices_mut() {
        for v in slice.iter_mut() {
            *v = words.next().expect("length checked above");
        }
    }
    Ok((header, params))
}

pub fn save(path: &Path, header: &CheckpointHeader, params: &ModelParams) -> Result<()> {
    std::fs::write(path, to_bytes(header, params)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path, template: &ModelParams, config_hash: &str) -> Result<(CheckpointHeader, ModelParams)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, template, config_hash)
}

/// Header only, without shape or hash checks.
pub fn read_header(path: &Path) -> Result<CheckpointHeader> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let end = bytes.iter().position(|&b| b == b'\n').unwrap_or(bytes.len());
    serde_json::from_slice(&bytes[..end]).map_err(|e| Error::json("checkpoint header", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use neurocomm_core::pipeline::SystemConfig;

    fn sample() -> (ModelParams, CheckpointHeader) {
        let system = SystemConfig::tiny(Scheme::Lth);
        let p = ModelParams::init(&system, 4).unwrap();
        let h = CheckpointHeader::describe(&p, "abc", Regime::Joint, Scheme::Lth, 4, 10);
        (p, h)
    }

    #[test]
    fn round_trip_is_lossless_and_idempotent() {
        let (p, h) = sample();
        let bytes = to_bytes(&h, &p).unwrap();
        let (h2, p2) = from_bytes(&bytes, &p.zeros_like(), "abc").unwrap();
        assert_eq!((&h2, &p2), (&h, &p));
        assert_eq!(to_bytes(&h2, &p2).unwrap(), bytes);
    }

    #[test]
    fn joint_checkpoints_mark_hypernetwork_frozen() {
        let (_, h) = sample();
        for t in &h.tensors {
            let hyper = t.name.starts_with("hyper.") || t.name.starts_with("pilot.");
            assert_eq!(t.trainable, !hyper, "{}", t.name);
        }
    }

    #[test]
    fn tampering_is_detected() {
        let (p, h) = sample();
        let bytes = to_bytes(&h, &p).unwrap();
        assert!(from_bytes(&bytes, &p, "abd").is_err());
        assert!(from_bytes(&bytes[..bytes.len() - 8], &p, "abc").is_err());

        let mut bad = h.clone();
        bad.tensors[0].rows += 1;
        let mut forged = serde_json::to_vec(&bad).unwrap();
        forged.push(b'\n');
        forged.extend_from_slice(&bytes[bytes.iter().position(|&b| b == b'\n').unwrap() + 1..]);
        assert!(from_bytes(&forged, &p, "abc").is_err());

        let mut flipped = h;
        flipped.tensors[0].trainable = false;
        let mut forged = serde_json::to_vec(&flipped).unwrap();
        forged.push(b'\n');
        forged.extend_from_slice(&bytes[bytes.iter().position(|&b| b == b'\n').unwrap() + 1..]);
        assert!(from_bytes(&forged, &p, "abc").is_err());
    }
}
