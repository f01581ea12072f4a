//! Sampled input/output records and their text format.
//!
//! A sequence file starts with `#`-prefixed metadata lines (`ts`, `seed`,
//! `snr_db`), then a comma-separated header naming the channels, then one row
//! per sample with the inputs first.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DataSequence {
    pub u: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub ts: f64,
    pub seed: u64,
    pub snr_db: f64,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
}

/// Per-channel mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn of(rows: &[Vec<f64>]) -> ChannelStats {
        let width = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut mean = vec![0.0; width];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        ChannelStats {
            mean,
            std: var.into_iter().map(|s| (s / n).sqrt()).collect(),
        }
    }
}

impl DataSequence {
    pub fn new(u: Vec<Vec<f64>>, y: Vec<Vec<f64>>, ts: f64) -> Result<Self> {
        if u.len() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "sequence length".into(),
                expected: u.len(),
                actual: y.len(),
            });
        }
        let n_u = u.first().map_or(0, Vec::len);
        let n_y = y.first().map_or(0, Vec::len);
        for (k, (uk, yk)) in u.iter().zip(&y).enumerate() {
            if uk.len() != n_u || yk.len() != n_y {
                return Err(Error::InvalidArgument(format!("ragged sample at index {k}")));
            }
        }
        Ok(DataSequence {
            input_names: (1..=n_u).map(|i| format!("u{i}")).collect(),
            output_names: (1..=n_y).map(|i| format!("y{i}")).collect(),
            u,
            y,
            ts,
            seed: 0,
            snr_db: f64::INFINITY,
        })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn n_u(&self) -> usize {
        self.input_names.len()
    }

    pub fn n_y(&self) -> usize {
        self.output_names.len()
    }

    pub fn input_stats(&self) -> ChannelStats {
        ChannelStats::of(&self.u)
    }

    pub fn output_stats(&self) -> ChannelStats {
        ChannelStats::of(&self.y)
    }

    pub fn write_to(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "# ts: {}", self.ts)?;
        writeln!(w, "# seed: {}", self.seed)?;
        writeln!(w, "# snr_db: {}", self.snr_db)?;
        let names: Vec<&str> = self
            .input_names
            .iter()
            .chain(&self.output_names)
            .map(String::as_str)
            .collect();
        writeln!(w, "{}", names.join(","))?;
        let mut line = String::new();
        for (uk, yk) in self.u.iter().zip(&self.y) {
            line.clear();
            for (i, v) in uk.iter().chain(yk).enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut ts = None;
        let mut seed = 0;
        let mut snr_db = f64::INFINITY;
        let mut header: Option<Vec<String>> = None;
        let (mut u, mut y) = (Vec::new(), Vec::new());
        let mut n_u = 0;
        for (idx, line) in BufReader::new(r).lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: line_no, message };
            if let Some(meta) = line.strip_prefix('#') {
                let (key, value) = meta
                    .split_once(':')
                    .ok_or_else(|| parse_err(format!("malformed metadata line {line:?}")))?;
                let value = value.trim();
                match key.trim() {
                    "ts" => ts = Some(value.parse::<f64>().map_err(|e| parse_err(format!("ts: {e}")))?),
                    "seed" => seed = value.parse().map_err(|e| parse_err(format!("seed: {e}")))?,
                    "snr_db" => snr_db = value.parse().map_err(|e| parse_err(format!("snr_db: {e}")))?,
                    _ => {}
                }
                continue;
            }
            match &header {
                None => {
                    let names: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
                    n_u = names.iter().take_while(|n| n.starts_with('u')).count();
                    if n_u == 0 || n_u == names.len() {
                        return Err(parse_err("header needs u* input columns followed by output columns".into()));
                    }
                    header = Some(names);
                }
                Some(names) => {
                    let values = line
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| parse_err(e.to_string()))?;
                    if values.len() != names.len() {
                        return Err(parse_err(format!(
                            "expected {} columns, found {}",
                            names.len(),
                            values.len()
                        )));
                    }
                    y.push(values[n_u..].to_vec());
                    u.push(values[..n_u].to_vec());
                }
            }
        }
        let names = header.ok_or(Error::Parse {
            line: 0,
            message: "missing channel header".into(),
        })?;
        let ts = ts.ok_or(Error::Parse {
            line: 0,
            message: "missing ts metadata".into(),
        })?;
        Ok(DataSequence {
            u,
            y,
            ts,
            seed,
            snr_db,
            input_names: names[..n_u].to_vec(),
            output_names: names[n_u..].to_vec(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(File::open(path)?)
    }
}
