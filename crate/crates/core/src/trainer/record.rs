use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MepError, Result};
use crate::stats::{mean, sample_std};

/// Column names of a per-run metrics file, in order.
pub const RAW_HEADER: [&str; 8] = [
    "epoch",
    "env_steps",
    "success_rate",
    "goal_entropy",
    "critic_loss",
    "actor_loss",
    "pearson_r",
    "wall_seconds",
];

/// Metrics averaged across seeds; each gets a `_mean` and `_std` column.
pub const AGGREGATED_METRICS: [&str; 5] =
    ["success_rate", "goal_entropy", "critic_loss", "actor_loss", "pearson_r"];

pub fn aggregate_header() -> Vec<String> {
    let mut h = vec!["epoch".to_string(), "env_steps".to_string()];
    for m in AGGREGATED_METRICS {
        h.push(format!("{m}_mean"));
        h.push(format!("{m}_std"));
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Cumulative environment steps at the end of the epoch.
    pub env_steps: u64,
    pub success_rate: f64,
    /// Entropy (nats) of the final achieved goals in the buffer.
    pub goal_entropy: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub pearson_r: Option<f64>,
    /// Wall time spent in this epoch.
    pub wall_seconds: f64,
    /// The density fit failed and sampling fell back to uniform.
    pub density_fallback: bool,
}

impl EpochRecord {
    fn csv_fields(&self) -> [String; 8] {
        [
            self.epoch.to_string(),
            self.env_steps.to_string(),
            self.success_rate.to_string(),
            self.goal_entropy.to_string(),
            self.critic_loss.to_string(),
            self.actor_loss.to_string(),
            self.pearson_r.map(|r| r.to_string()).unwrap_or_default(),
            format!("{:.6}", self.wall_seconds),
        ]
    }
}

/// Metrics file that is flushed after every row, so an interrupted run
/// leaves only complete rows behind.
pub struct RecordWriter {
    inner: csv::Writer<File>,
}

impl RecordWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path)?;
        inner.write_record(RAW_HEADER)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn append(&mut self, record: &EpochRecord) -> Result<()> {
        self.inner.write_record(record.csv_fields())?;
        self.inner.flush()?;
        Ok(())
    }
}

fn check_header(found: &csv::StringRecord, expected: &[String]) -> Result<()> {
    for (i, want) in expected.iter().enumerate() {
        match found.get(i) {
            Some(col) if col == want => {}
            Some(col) => {
                return Err(MepError::InvalidArgument(format!(
                    "bad column {} `{col}`: expected `{want}`",
                    i + 1
                )))
            }
            None => {
                return Err(MepError::InvalidArgument(format!("missing column {} `{want}`", i + 1)))
            }
        }
    }
    if found.len() > expected.len() {
        return Err(MepError::InvalidArgument(format!(
            "unexpected column {} `{}`",
            expected.len() + 1,
            &found[expected.len()]
        )));
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, name: &str, line: usize) -> Result<T> {
    row.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| MepError::InvalidArgument(format!("line {line}: cannot parse `{name}`")))
}

fn parse_optional(row: &csv::StringRecord, i: usize, name: &str, line: usize) -> Result<Option<f64>> {
    match row.get(i) {
        Some("") => Ok(None),
        _ => parse_field(row, i, name, line).map(Some),
    }
}

/// Reads a per-run metrics file written by [`RecordWriter`].
pub fn read_records(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let expected: Vec<String> = RAW_HEADER.iter().map(|s| s.to_string()).collect();
    check_header(reader.headers()?, &expected)?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        out.push(EpochRecord {
            epoch: parse_field(&row, 0, "epoch", line)?,
            env_steps: parse_field(&row, 1, "env_steps", line)?,
            success_rate: parse_field(&row, 2, "success_rate", line)?,
            goal_entropy: parse_field(&row, 3, "goal_entropy", line)?,
            critic_loss: parse_field(&row, 4, "critic_loss", line)?,
            actor_loss: parse_field(&row, 5, "actor_loss", line)?,
            pearson_r: parse_optional(&row, 6, "pearson_r", line)?,
            wall_seconds: parse_field(&row, 7, "wall_seconds", line)?,
            density_fallback: false,
        });
    }
    Ok(out)
}

/// Mean and sample standard deviation of one metric at one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(xs: &[f64]) -> Option<Self> {
        (!xs.is_empty()).then(|| MeanStd {
            mean: mean(xs),
            std: sample_std(xs),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub epoch: usize,
    pub env_steps: u64,
    pub success_rate: MeanStd,
    pub goal_entropy: MeanStd,
    pub critic_loss: MeanStd,
    pub actor_loss: MeanStd,
    /// Over the runs that reported a correlation at this epoch.
    pub pearson_r: Option<MeanStd>,
}

/// Per-epoch mean and standard deviation across runs, over the epochs every
/// run completed. Wall time is left out so the result is reproducible.
pub fn aggregate(runs: &[Vec<EpochRecord>]) -> Result<Vec<AggregateRow>> {
    if runs.is_empty() {
        return Err(MepError::InvalidArgument("no runs to aggregate".into()));
    }
    let epochs = runs.iter().map(Vec::len).min().unwrap_or(0);
    let mut out = Vec::with_capacity(epochs);
    for e in 0..epochs {
        let rows: Vec<&EpochRecord> = runs.iter().map(|r| &r[e]).collect();
        let col = |f: fn(&EpochRecord) -> f64| {
            MeanStd::of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>()).expect("at least one run")
        };
        let pearson: Vec<f64> = rows.iter().filter_map(|r| r.pearson_r).collect();
        out.push(AggregateRow {
            epoch: rows[0].epoch,
            env_steps: rows[0].env_steps,
            success_rate: col(|r| r.success_rate),
            goal_entropy: col(|r| r.goal_entropy),
            critic_loss: col(|r| r.critic_loss),
            actor_loss: col(|r| r.actor_loss),
            pearson_r: MeanStd::of(&pearson),
        });
    }
    Ok(out)
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(aggregate_header())?;
    for r in rows {
        let mut fields = vec![r.epoch.to_string(), r.env_steps.to_string()];
        for m in [r.success_rate, r.goal_entropy, r.critic_loss, r.actor_loss] {
            fields.push(m.mean.to_string());
            fields.push(m.std.to_string());
        }
        match r.pearson_r {
            Some(m) => {
                fields.push(m.mean.to_string());
                fields.push(m.std.to_string());
            }
            None => fields.extend([String::new(), String::new()]),
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and std curves read from either a per-run or an aggregate file.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricCurves {
    pub epochs: Vec<f64>,
    pub success: Vec<MeanStd>,
    pub entropy: Vec<MeanStd>,
}

/// Loads success and entropy curves. The schema is picked from the third
/// column; every column is then checked and the first bad one is reported.
pub fn read_curves(path: &Path) -> Result<MetricCurves> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let aggregate_file = header.get(2).is_some_and(|c| c.ends_with("_mean"));
    let curves = if aggregate_file {
        check_header(&header, &aggregate_header())?;
        let mut c = MetricCurves {
            epochs: Vec::new(),
            success: Vec::new(),
            entropy: Vec::new(),
        };
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            let line = i + 2;
            c.epochs.push(parse_field(&row, 0, "epoch", line)?);
            c.success.push(MeanStd {
                mean: parse_field(&row, 2, "success_rate_mean", line)?,
                std: parse_field(&row, 3, "success_rate_std", line)?,
            });
            c.entropy.push(MeanStd {
                mean: parse_field(&row, 4, "goal_entropy_mean", line)?,
                std: parse_field(&row, 5, "goal_entropy_std", line)?,
            });
        }
        c
    } else {
        drop(reader);
        let records = read_records(path)?;
        let point = |v| MeanStd { mean: v, std: 0.0 };
        MetricCurves {
            epochs: records.iter().map(|r| r.epoch as f64).collect(),
            success: records.iter().map(|r| point(r.success_rate)).collect(),
            entropy: records.iter().map(|r| point(r.goal_entropy)).collect(),
        }
    };
    if curves.epochs.is_empty() {
        return Err(MepError::InvalidArgument(format!("{} has no data rows", path.display())));
    }
    Ok(curves)
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
