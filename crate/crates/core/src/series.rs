//! Time-series containers and CSV ingestion/emission.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled scalar sequence.
///
/// Construction validates: at least two samples, all finite, positive `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    samples: Vec<f64>,
    dt: f64,
    name: Option<String>,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, dt: Option<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidSeries(format!(
                "need at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "non-finite sample {} at index {i}",
                samples[i]
            )));
        }
        let dt = dt.unwrap_or(1.0);
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidSeries(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            samples,
            dt,
            name: None,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First `n` samples as a new series.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n > self.len() {
            return Err(Error::TooShort {
                needed: n,
                have: self.len(),
            });
        }
        let mut out = TimeSeries::new(self.samples[..n].to_vec(), Some(self.dt))?;
        out.name = self.name.clone();
        Ok(out)
    }

    /// Every sample multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut out = TimeSeries::new(
            self.samples.iter().map(|v| v * factor).collect(),
            Some(self.dt),
        )?;
        out.name = self.name.clone();
        Ok(out)
    }
}

/// Equal-length channels sharing one sample period, with an optional label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSeries {
    channels: Vec<TimeSeries>,
    label: Option<String>,
}

impl MultiSeries {
    pub fn new(channels: Vec<TimeSeries>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::InvalidSeries("at least one channel required".into()))?;
        let (n, dt) = (first.len(), first.dt());
        for (j, ch) in channels.iter().enumerate().skip(1) {
            if ch.len() != n {
                return Err(Error::InvalidSeries(format!(
                    "channel {j} has {} samples, channel 0 has {n}",
                    ch.len()
                )));
            }
            if ch.dt() != dt {
                return Err(Error::InvalidSeries(format!(
                    "channel {j} has dt {}, channel 0 has {dt}",
                    ch.dt()
                )));
            }
        }
        Ok(Self {
            channels,
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn channels(&self) -> &[TimeSeries] {
        &self.channels
    }

    pub fn channel(&self, j: usize) -> Option<&TimeSeries> {
        self.channels.get(j)
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.channels[0].dt()
    }

    /// Same channels at a different sample period.
    pub fn with_dt(self, dt: f64) -> Result<Self> {
        let label = self.label;
        let channels = self
            .channels
            .into_iter()
            .map(|c| {
                let name = c.name;
                let mut ts = TimeSeries::new(c.samples, Some(dt))?;
                ts.name = name;
                Ok(ts)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = MultiSeries::new(channels)?;
        out.label = label;
        Ok(out)
    }
}

/// Reads one channel per column. Row numbers in errors are 1-based file lines.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<MultiSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let names: Option<Vec<String>> = if has_header {
        let headers = reader.headers().map_err(|e| csv_error(path, e))?;
        Some(headers.iter().map(str::to_owned).collect())
    } else {
        None
    };

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut expected = names.as_ref().map(Vec::len);
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record.position().map_or(0, |p| p.line());
        let width = *expected.get_or_insert(record.len());
        if record.len() != width {
            return Err(Error::RaggedRow {
                row,
                expected: width,
                found: record.len(),
            });
        }
        if columns.is_empty() {
            columns = vec![Vec::new(); width];
        }
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: j + 1,
                message: format!("cannot parse {cell:?} as a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: j + 1,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            columns[j].push(value);
        }
    }
    if columns.is_empty() {
        return Err(Error::InvalidSeries(format!(
            "{} contains no data rows",
            path.display()
        )));
    }

    let channels = columns
        .into_iter()
        .enumerate()
        .map(|(j, col)| {
            let ts = TimeSeries::new(col, None)?;
            Ok(match names.as_ref().and_then(|n| n.get(j)) {
                Some(name) if !name.is_empty() => ts.with_name(name.clone()),
                _ => ts,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MultiSeries::new(channels)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Parse {
            row,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Writes a header row of channel names followed by one row per sample.
///
/// Values use the shortest representation that parses back to the same
/// `f64`, so a subsequent `load_csv(path, true)` is bit-exact.
pub fn write_csv(series: &MultiSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    let header: Vec<String> = series
        .channels()
        .iter()
        .enumerate()
        .map(|(j, c)| c.name().map_or_else(|| format!("ch{j}"), str::to_owned))
        .collect();
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;
    let mut line = String::new();
    for i in 0..series.len() {
        line.clear();
        for (j, ch) in series.channels().iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{:?}", ch.samples()[i]));
        }
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
