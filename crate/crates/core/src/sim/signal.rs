use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};

/// Named, equally long sequences sampled every `period_s` seconds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignalSet {
    pub period_s: f64,
    series: Vec<(String, Vec<f64>)>,
    pub meta: BTreeMap<String, String>,
}

impl SignalSet {
    pub fn new(period_s: f64) -> Result<Self> {
        if !(period_s > 0.0 && period_s.is_finite()) {
            return Err(Error::InvalidParameter(format!("period_s must be positive, got {period_s}")));
        }
        Ok(Self {
            period_s,
            ..Default::default()
        })
    }

    /// Number of samples per sequence.
    pub fn len(&self) -> usize {
        self.series.first().map_or(0, |(_, v)| v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds or replaces a sequence; lengths must agree with existing ones.
    pub fn insert(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if name == "t_s" || name.is_empty() || name.contains(',') {
            return Err(Error::InvalidParameter(format!("invalid signal name '{name}'")));
        }
        let others = self.series.iter().filter(|(n, _)| *n != name).count();
        if others > 0 {
            let len = self
                .series
                .iter()
                .find(|(n, _)| *n != name)
                .map_or(0, |(_, v)| v.len());
            if values.len() != len {
                return Err(Error::DimensionMismatch {
                    expected: len,
                    found: values.len(),
                });
            }
        }
        match self.series.iter_mut().find(|(n, _)| *n == name) {
            Some((_, v)) => *v = values,
            None => self.series.push((name, values)),
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.series
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.series.iter().map(|(n, _)| n.as_str())
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.period_s).collect()
    }

    /// CSV with `# key=value` metadata lines, then `t_s,<names…>`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# period_s={}", self.period_s)?;
        for (k, v) in &self.meta {
            writeln!(out, "# {k}={v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t_s".to_string()];
        header.extend(self.names().map(str::to_string));
        w.write_record(&header)?;
        let t = self.times();
        for (i, ti) in t.iter().enumerate() {
            let mut row = vec![ti.to_string()];
            row.extend(self.series.iter().map(|(_, v)| v[i].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format written by [`SignalSet::write_csv`].
    ///
    /// Without a `period_s` metadata line the period is taken from the
    /// spacing of the `t_s` column.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut meta = BTreeMap::new();
        let mut body = String::new();
        for line in BufReader::new(input).lines() {
            let line = line?;
            if let Some(rest) = line.trim_start().strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
            } else if !line.trim().is_empty() {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let headers: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Format(format!("row {}: '{field}' is not a number", line + 1))
                })?;
                cols[j].push(v);
            }
        }
        let t_col = headers.iter().position(|h| h == "t_s");
        let period = match meta.remove("period_s") {
            Some(p) => p
                .parse()
                .map_err(|_| Error::Format(format!("bad period_s '{p}'")))?,
            None => match t_col {
                Some(j) if cols[j].len() >= 2 => cols[j][1] - cols[j][0],
                _ => return Err(Error::Format("cannot determine sampling period".into())),
            },
        };
        let mut set = SignalSet::new(period)?;
        set.meta = meta;
        for (j, name) in headers.into_iter().enumerate() {
            if Some(j) != t_col {
                set.insert(name, std::mem::take(&mut cols[j]))?;
            }
        }
        Ok(set)
    }
}
