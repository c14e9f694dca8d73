//! Metric trace files: CSV with a fixed column order plus a JSON summary,
//! and the sweep aggregator.

use std::path::Path;

use serde::{Deserialize, Serialize};

use neurocomm_core::modem::Scheme;
use neurocomm_core::trainer::{MetricTrace, TraceRow};

use crate::config::{RunKind, SweepAxis};
use crate::error::{Error, Result};

pub const COLUMNS: [&str; 9] = [
    "l",
    "accuracy",
    "cumulative_energy",
    "encoder_spikes",
    "decoder_spikes",
    "regime",
    "scheme",
    "seed",
    "config_hash",
];

/// Identity of a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub run: RunKind,
    pub scheme: Scheme,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    l: usize,
    accuracy: f64,
    cumulative_energy: f64,
    encoder_spikes: f64,
    decoder_spikes: f64,
    regime: RunKind,
    scheme: Scheme,
    seed: u64,
    config_hash: String,
}

/// `l` strictly increasing from 1, accuracies in `[0, 1]`, cumulative
/// quantities finite and nondecreasing.
pub fn validate_trace(trace: &MetricTrace) -> Result<()> {
    let mut prev: Option<&TraceRow> = None;
    for (i, r) in trace.rows.iter().enumerate() {
        let fail = |what: &str| Err(Error::invalid(format!("trace row {}: {what}", i + 1)));
        if !(0.0..=1.0).contains(&r.accuracy) {
            return fail("accuracy outside [0, 1]");
        }
        if ![r.cumulative_energy, r.encoder_spikes, r.decoder_spikes].iter().all(|v| v.is_finite() && *v >= 0.0) {
            return fail("negative or non-finite cumulative value");
        }
        match prev {
            None if r.step != 1 => return fail("first step is not 1"),
            Some(p) if r.step <= p.step => return fail("steps not strictly increasing"),
            Some(p) if r.cumulative_energy < p.cumulative_energy => return fail("cumulative energy decreases"),
            _ => {}
        }
        prev = Some(r);
    }
    Ok(())
}

pub fn write_csv<W: std::io::Write>(out: W, trace: &MetricTrace, meta: &TraceMeta) -> Result<()> {
    validate_trace(trace)?;
    let mut w = csv::Writer::from_writer(out);
    for r in &trace.rows {
        w.serialize(CsvRow {
            l: r.step,
            accuracy: r.accuracy,
            cumulative_energy: r.cumulative_energy,
            encoder_spikes: r.encoder_spikes,
            decoder_spikes: r.decoder_spikes,
            regime: meta.run,
            scheme: meta.scheme,
            seed: meta.seed,
            config_hash: meta.config_hash.clone(),
        })?;
    }
    if trace.rows.is_empty() {
        w.write_record(COLUMNS)?;
    }
    w.flush().map_err(|e| Error::io("trace csv", e))?;
    Ok(())
}

/// Reads a trace CSV, checking the header against [`COLUMNS`], that every
/// row carries the same identity and the trace invariants.
pub fn read_csv<R: std::io::Read>(input: R) -> Result<(MetricTrace, TraceMeta)> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(Error::invalid(format!("trace columns {header:?} differ from {COLUMNS:?}")));
    }
    let mut meta: Option<TraceMeta> = None;
    let mut rows = Vec::new();
    for rec in rd.deserialize::<CsvRow>() {
        let r = rec?;
        let m = TraceMeta {
            run: r.regime,
            scheme: r.scheme,
            seed: r.seed,
            config_hash: r.config_hash,
        };
        match &meta {
            Some(prev) if *prev != m => return Err(Error::invalid("trace rows disagree on run identity")),
            None => meta = Some(m),
            _ => {}
        }
        rows.push(TraceRow {
            step: r.l,
            accuracy: r.accuracy,
            cumulative_energy: r.cumulative_energy,
            encoder_spikes: r.encoder_spikes,
            decoder_spikes: r.decoder_spikes,
        });
    }
    let trace = MetricTrace { rows };
    validate_trace(&trace)?;
    Ok((trace, meta.ok_or_else(|| Error::invalid("trace has no rows"))?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    #[serde(flatten)]
    pub meta: TraceMeta,
    pub realizations: usize,
    pub target_accuracy: f64,
    pub final_accuracy: f64,
    pub time_to_accuracy: Option<usize>,
    pub total_energy: f64,
    pub rows: Vec<TraceRow>,
}

impl TraceSummary {
    pub fn new(trace: &MetricTrace, meta: &TraceMeta, realizations: usize, target: f64) -> Self {
        TraceSummary {
            meta: meta.clone(),
            realizations,
            target_accuracy: target,
            final_accuracy: trace.final_accuracy(),
            time_to_accuracy: trace.time_to_accuracy(target),
            total_energy: trace.rows.last().map_or(0.0, |r| r.cumulative_energy),
            rows: trace.rows.clone(),
        }
    }
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_trace_files(dir: &Path, stem: &str, trace: &MetricTrace, summary: &TraceSummary) -> Result<()> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    write_csv(std::io::BufWriter::new(file), trace, &summary.meta)?;
    let json_path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::json("trace summary", e))?;
    std::fs::write(&json_path, text + "\n").map_err(|e| Error::io(&json_path, e))
}

/// One finished sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub meta: TraceMeta,
    pub trace: MetricTrace,
}

pub const SWEEP_COLUMNS: [&str; 9] = [
    "axis",
    "value",
    "regime",
    "scheme",
    "seeds",
    "final_accuracy",
    "time_to_target",
    "total_energy",
    "config_hash",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub regime: RunKind,
    pub scheme: Scheme,
    pub seeds: usize,
    pub final_accuracy: f64,
    /// Time to target of the seed-averaged trace; empty if never reached.
    pub time_to_target: Option<usize>,
    pub total_energy: f64,
    pub config_hash: String,
}

/// Averages the traces of every (value, regime, scheme) over seeds, in
/// order of first appearance. Points from different configs are refused.
pub fn aggregate(axis: SweepAxis, points: &[SweepPoint], target: f64) -> Result<Vec<SweepRow>> {
    let Some(first) = points.first() else {
        return Ok(Vec::new());
    };
    let hash = &first.meta.config_hash;
    if let Some(p) = points.iter().find(|p| p.meta.config_hash != *hash) {
        return Err(Error::invalid(format!(
            "refusing to merge sweep outputs from configs {hash} and {}",
            p.meta.config_hash
        )));
    }
    let mut groups: Vec<((f64, RunKind, Scheme), Vec<MetricTrace>)> = Vec::new();
    for p in points {
        let key = (p.value, p.meta.run, p.meta.scheme);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, traces)) => traces.push(p.trace.clone()),
            None => groups.push((key, vec![p.trace.clone()])),
        }
    }
    groups
        .into_iter()
        .map(|((value, regime, scheme), traces)| {
            let mean = MetricTrace::mean(&traces)?;
            Ok(SweepRow {
                axis,
                value,
                regime,
                scheme,
                seeds: traces.len(),
                final_accuracy: mean.final_accuracy(),
                time_to_target: mean.time_to_accuracy(target),
                total_energy: mean.rows.last().map_or(0.0, |r| r.cumulative_energy),
                config_hash: hash.clone(),
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: std::io::Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(SWEEP_COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("sweep csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(acc: &[f64]) -> MetricTrace {
        MetricTrace {
            rows: acc
                .iter()
                .enumerate()
                .map(|(i, &a)| TraceRow {
                    step: i + 1,
                    accuracy: a,
                    cumulative_energy: i as f64,
                    encoder_spikes: 0.0,
                    decoder_spikes: 0.5,
                })
                .collect(),
        }
    }

    fn meta(hash: &str) -> TraceMeta {
        TraceMeta {
            run: RunKind::Hyper,
            scheme: Scheme::Lth,
            seed: 1,
            config_hash: hash.into(),
        }
    }

    #[test]
    fn csv_round_trip_with_fixed_header() {
        let t = trace(&[0.5, 0.75, 1.0 / 3.0]);
        let mut buf = Vec::new();
        write_csv(&mut buf, &t, &meta("h")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), COLUMNS.join(","));
        let (back, m) = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        assert_eq!(m, meta("h"));
    }

    #[test]
    fn broken_traces_are_rejected() {
        let mut t = trace(&[0.5, 0.6]);
        t.rows[1].cumulative_energy = -1.0;
        assert!(validate_trace(&t).is_err());
        let mut t = trace(&[0.5, 0.6]);
        t.rows[1].step = 1;
        assert!(validate_trace(&t).is_err());
        assert!(validate_trace(&trace(&[1.2])).is_err());
        assert!(read_csv("l,accuracy\n1,0.5\n".as_bytes()).is_err());
    }

    #[test]
    fn aggregator_refuses_mixed_hashes() {
        let p = |h: &str, seed| SweepPoint {
            value: 2.0,
            meta: TraceMeta { seed, ..meta(h) },
            trace: trace(&[0.2, 0.4]),
        };
        assert!(aggregate(SweepAxis::Expansion, &[p("a", 0), p("b", 1)], 0.9).is_err());
        let rows = aggregate(SweepAxis::Expansion, &[p("a", 0), p("a", 1)], 0.3).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].seeds, 2);
        assert_eq!(rows[0].time_to_target, Some(2));
    }
}
