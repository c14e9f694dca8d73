//! Event-file datasets.
//!
//! A JSON manifest `{rows, cols, L, classes, files: [{path, label, split}]}`
//! lists one text file per example. Each non-empty line of an event file is
//! `time_bin,channel_index`, zero-based, optionally followed by a polarity
//! field that is ignored: repeated events and both polarities of a pixel
//! collapse into one spike. Lines starting with `#` are comments. Relative
//! paths are resolved against the manifest's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use neurocomm_core::data::{DataSplit, Dataset, Example};
use neurocomm_core::SpikeRaster;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub rows: usize,
    pub cols: usize,
    #[serde(rename = "L")]
    pub steps: usize,
    pub classes: usize,
    pub files: Vec<ManifestEntry>,
}

/// Bins events into a `[channels x steps]` raster.
pub fn parse_events(text: &str, channels: usize, steps: usize) -> Result<SpikeRaster> {
    let mut raster = SpikeRaster::zeros(channels, steps);
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| Error::invalid(format!("line {}: {what}: {line:?}", n + 1));
        let mut fields = line.split(',').map(str::trim);
        let (Some(t), Some(c)) = (fields.next(), fields.next()) else {
            return Err(bad("expected time_bin,channel_index"));
        };
        if fields.clone().count() > 1 {
            return Err(bad("too many fields"));
        }
        let t: usize = t.parse().map_err(|_| bad("bad time bin"))?;
        let c: usize = c.parse().map_err(|_| bad("bad channel index"))?;
        if t >= steps || c >= channels {
            return Err(bad("event out of range"));
        }
        raster.set(c, t, true);
    }
    Ok(raster)
}

/// Event-file text for a raster, in time-major order.
pub fn format_events(raster: &SpikeRaster) -> String {
    let mut out = String::new();
    for l in 0..raster.steps() {
        for d in 0..raster.channels() {
            if raster.get(d, l) {
                writeln!(out, "{l},{d}").expect("writing to a string");
            }
        }
    }
    out
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Loads every example listed in the manifest, keeping manifest order
/// within each split.
pub fn load_events(manifest_path: &Path) -> Result<DataSplit> {
    let m = read_manifest(manifest_path)?;
    if m.rows * m.cols == 0 || m.steps == 0 || m.classes == 0 {
        return Err(Error::invalid("manifest declares an empty shape"));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let empty = || Dataset {
        rows: m.rows,
        cols: m.cols,
        steps: m.steps,
        classes: m.classes,
        examples: Vec::new(),
    };
    let (mut train, mut test) = (empty(), empty());
    for entry in &m.files {
        if entry.label >= m.classes {
            return Err(Error::invalid(format!("{}: label {} out of range", entry.path.display(), entry.label)));
        }
        let path = base.join(&entry.path);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let raster = parse_events(&text, m.rows * m.cols, m.steps)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        let ex = Example {
            raster,
            label: entry.label,
        };
        match entry.split {
            Split::Train => train.examples.push(ex),
            Split::Test => test.examples.push(ex),
        }
    }
    Ok(DataSplit { train, test })
}

/// Writes a split as a manifest plus one event file per example under
/// `dir`; returns the manifest path.
pub fn write_dataset(dir: &Path, data: &DataSplit) -> Result<PathBuf> {
    let events = dir.join("events");
    std::fs::create_dir_all(&events).map_err(|e| Error::io(&events, e))?;
    let d = &data.train;
    let mut files = Vec::new();
    for (split, set) in [(Split::Train, &data.train), (Split::Test, &data.test)] {
        let tag = if split == Split::Train { "train" } else { "test" };
        for (i, ex) in set.examples.iter().enumerate() {
            let rel = PathBuf::from("events").join(format!("{tag}_{i:05}.csv"));
            let path = dir.join(&rel);
            std::fs::write(&path, format_events(&ex.raster)).map_err(|e| Error::io(&path, e))?;
            files.push(ManifestEntry {
                path: rel,
                label: ex.label,
                split,
            });
        }
    }
    let manifest = Manifest {
        rows: d.rows,
        cols: d.cols,
        steps: d.steps,
        classes: d.classes,
        files,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json("manifest", e))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_silence() {
        let r = parse_events("", 4, 3).unwrap();
        assert_eq!(r.count(), 0);
        assert_eq!((r.channels(), r.steps()), (4, 3));
    }

    #[test]
    fn duplicate_events_merge() {
        let r = parse_events("5,3\n5,3\n", 8, 10).unwrap();
        assert_eq!(r.count(), 1);
        assert!(r.get(3, 5));
        // polarity field is accepted and merged
        let r = parse_events("# t,c,p\n5,3,1\n5,3,0\n", 8, 10).unwrap();
        assert_eq!(r.count(), 1);
    }

    #[test]
    fn malformed_lines_are_rejected() {
        for bad in ["5", "5;3", "a,3", "5,3,1,2", "10,3", "5,8", "-1,2"] {
            assert!(parse_events(bad, 8, 10).is_err(), "{bad}");
        }
    }

    #[test]
    fn format_then_parse_is_identity() {
        let mut r = SpikeRaster::zeros(5, 6);
        r.set(0, 0, true);
        r.set(4, 5, true);
        r.set(2, 3, true);
        assert_eq!(parse_events(&format_events(&r), 5, 6).unwrap(), r);
    }
}
