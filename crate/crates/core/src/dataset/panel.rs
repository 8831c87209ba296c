use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use ndarray::{s, Array2};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Sampling period of the collected counters, in seconds (15 minutes).
pub const DEFAULT_STEP_SECONDS: i64 = 900;

/// 2022-10-01T00:00:00Z, the start of the collection window.
pub const DEFAULT_START: i64 = 1_664_582_400;

/// Per-cell multivariate counter series, each cell a `K x T` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    cell_ids: Vec<String>,
    signal_names: Vec<String>,
    /// Unix seconds, strictly increasing.
    timestamps: Vec<i64>,
    values: Vec<Array2<f64>>,
    scaled: bool,
}

impl TimeSeriesPanel {
    pub fn new(
        cell_ids: Vec<String>,
        signal_names: Vec<String>,
        timestamps: Vec<i64>,
        values: Vec<Array2<f64>>,
    ) -> Result<Self> {
        if cell_ids.is_empty() || signal_names.is_empty() || timestamps.is_empty() {
            return Err(Error::Data(
                "panel needs at least one cell, signal and step".into(),
            ));
        }
        if values.len() != cell_ids.len() {
            return Err(Error::shape(format!(
                "{} value matrices for {} cells",
                values.len(),
                cell_ids.len()
            )));
        }
        let shape = (signal_names.len(), timestamps.len());
        for (id, v) in cell_ids.iter().zip(&values) {
            if v.dim() != shape {
                return Err(Error::shape(format!(
                    "cell `{id}` is {:?}, expected {shape:?}",
                    v.dim()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!("cell `{id}` holds a non-finite value")));
            }
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data("timestamps must be strictly increasing".into()));
        }
        check_unique(&cell_ids, "cell id")?;
        check_unique(&signal_names, "signal name")?;
        Ok(Self {
            cell_ids,
            signal_names,
            timestamps,
            values,
            scaled: false,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.cell_ids.len()
    }

    pub fn num_signals(&self) -> usize {
        self.signal_names.len()
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    pub fn signal_names(&self) -> &[String] {
        &self.signal_names
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    /// `K x T` matrix of cell `i`.
    pub fn cell(&self, i: usize) -> &Array2<f64> {
        &self.values[i]
    }

    pub(crate) fn cell_mut(&mut self, i: usize) -> &mut Array2<f64> {
        &mut self.values[i]
    }

    pub fn cells(&self) -> &[Array2<f64>] {
        &self.values
    }

    pub fn is_scaled(&self) -> bool {
        self.scaled
    }

    pub(crate) fn set_scaled(&mut self, scaled: bool) {
        self.scaled = scaled;
    }

    /// Sub-panel with the listed cells, in the given order.
    pub fn select_cells(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::InvalidArgument("empty cell selection".into()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.num_cells()) {
            return Err(Error::InvalidArgument(format!(
                "cell index {bad} out of range"
            )));
        }
        Ok(Self {
            cell_ids: idx.iter().map(|&i| self.cell_ids[i].clone()).collect(),
            signal_names: self.signal_names.clone(),
            timestamps: self.timestamps.clone(),
            values: idx.iter().map(|&i| self.values[i].clone()).collect(),
            scaled: self.scaled,
        })
    }

    /// Sub-panel over time steps `range`.
    pub fn slice_time(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::InvalidArgument(format!(
                "time range {range:?} out of bounds"
            )));
        }
        Ok(Self {
            cell_ids: self.cell_ids.clone(),
            signal_names: self.signal_names.clone(),
            timestamps: self.timestamps[range.clone()].to_vec(),
            values: self
                .values
                .iter()
                .map(|v| v.slice(s![.., range.clone()]).to_owned())
                .collect(),
            scaled: self.scaled,
        })
    }

    /// Hex SHA-256 over ids, names, timestamps and value bits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for id in &self.cell_ids {
            h.update(id.as_bytes());
            h.update([0u8]);
        }
        for name in &self.signal_names {
            h.update(name.as_bytes());
            h.update([0u8]);
        }
        for t in &self.timestamps {
            h.update(t.to_le_bytes());
        }
        for v in &self.values {
            for x in v.iter() {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes `timestamp,cell_id,<signals...>`, one row per (timestamp, cell).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["timestamp".to_string(), "cell_id".to_string()];
        header.extend(self.signal_names.iter().cloned());
        out.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for (t, &ts) in self.timestamps.iter().enumerate() {
            let stamp = format_timestamp(ts);
            for (c, id) in self.cell_ids.iter().enumerate() {
                row.clear();
                row.push(stamp.clone());
                row.push(id.clone());
                row.extend(self.values[c].column(t).iter().map(|v| v.to_string()));
                out.write_record(&row)?;
            }
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(BufWriter::new(f))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(BufReader::new(f))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let table = read_table(r, |s, line| {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("non-numeric value at row {line}")))?;
            if !v.is_finite() {
                return Err(Error::Data(format!("non-numeric value at row {line}")));
            }
            Ok(v)
        })?;
        Self::new(table.cells, table.signals, table.timestamps, table.values)
    }
}

/// Boolean anomaly flags with the same layout as a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    cell_ids: Vec<String>,
    signal_names: Vec<String>,
    timestamps: Vec<i64>,
    flags: Vec<Array2<bool>>,
}

impl LabelSet {
    /// All-false labels shaped like `panel`.
    pub fn empty_like(panel: &TimeSeriesPanel) -> Self {
        Self {
            cell_ids: panel.cell_ids.clone(),
            signal_names: panel.signal_names.clone(),
            timestamps: panel.timestamps.clone(),
            flags: vec![
                Array2::from_elem((panel.num_signals(), panel.len()), false);
                panel.num_cells()
            ],
        }
    }

    pub fn new(
        cell_ids: Vec<String>,
        signal_names: Vec<String>,
        timestamps: Vec<i64>,
        flags: Vec<Array2<bool>>,
    ) -> Result<Self> {
        let shape = (signal_names.len(), timestamps.len());
        if flags.len() != cell_ids.len() || flags.iter().any(|f| f.dim() != shape) {
            return Err(Error::shape(
                "label matrices do not match ids/timestamps".to_string(),
            ));
        }
        Ok(Self {
            cell_ids,
            signal_names,
            timestamps,
            flags,
        })
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    pub fn signal_names(&self) -> &[String] {
        &self.signal_names
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn cell(&self, i: usize) -> &Array2<bool> {
        &self.flags[i]
    }

    pub fn cell_mut(&mut self, i: usize) -> &mut Array2<bool> {
        &mut self.flags[i]
    }

    pub fn cells(&self) -> &[Array2<bool>] {
        &self.flags
    }

    pub fn num_cells(&self) -> usize {
        self.cell_ids.len()
    }

    pub fn count(&self) -> usize {
        self.flags
            .iter()
            .map(|f| f.iter().filter(|&&b| b).count())
            .sum()
    }

    pub fn same_layout(&self, other: &LabelSet) -> bool {
        self.cell_ids == other.cell_ids
            && self.signal_names == other.signal_names
            && self.timestamps == other.timestamps
    }

    /// Copy with every flag outside `mask` (per cell, per time) cleared.
    pub fn masked(&self, mask: &[Vec<bool>]) -> Result<Self> {
        if mask.len() != self.flags.len() || mask.iter().any(|m| m.len() != self.timestamps.len()) {
            return Err(Error::shape(
                "evaluable mask does not match labels".to_string(),
            ));
        }
        let mut out = self.clone();
        for (f, m) in out.flags.iter_mut().zip(mask) {
            for ((_, t), v) in f.indexed_iter_mut() {
                if !m[t] {
                    *v = false;
                }
            }
        }
        Ok(out)
    }

    pub fn slice_time(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.timestamps.len() {
            return Err(Error::InvalidArgument(format!(
                "time range {range:?} out of bounds"
            )));
        }
        Ok(Self {
            cell_ids: self.cell_ids.clone(),
            signal_names: self.signal_names.clone(),
            timestamps: self.timestamps[range.clone()].to_vec(),
            flags: self
                .flags
                .iter()
                .map(|f| f.slice(s![.., range.clone()]).to_owned())
                .collect(),
        })
    }

    pub fn select_cells(&self, idx: &[usize]) -> Self {
        Self {
            cell_ids: idx.iter().map(|&i| self.cell_ids[i].clone()).collect(),
            signal_names: self.signal_names.clone(),
            timestamps: self.timestamps.clone(),
            flags: idx.iter().map(|&i| self.flags[i].clone()).collect(),
        }
    }

    /// Concatenates label sets over disjoint cells with a shared layout.
    pub fn concat(parts: &[LabelSet]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        let mut out = Self {
            cell_ids: Vec::new(),
            signal_names: first.signal_names.clone(),
            timestamps: first.timestamps.clone(),
            flags: Vec::new(),
        };
        for p in parts {
            if p.signal_names != out.signal_names || p.timestamps != out.timestamps {
                return Err(Error::shape(
                    "label sets differ in signals or timestamps".to_string(),
                ));
            }
            out.cell_ids.extend(p.cell_ids.iter().cloned());
            out.flags.extend(p.flags.iter().cloned());
        }
        Ok(out)
    }

    /// Same header as the panel CSV with 0/1 entries.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["timestamp".to_string(), "cell_id".to_string()];
        header.extend(self.signal_names.iter().cloned());
        out.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for (t, &ts) in self.timestamps.iter().enumerate() {
            let stamp = format_timestamp(ts);
            for (c, id) in self.cell_ids.iter().enumerate() {
                row.clear();
                row.push(stamp.clone());
                row.push(id.clone());
                row.extend(
                    self.flags[c]
                        .column(t)
                        .iter()
                        .map(|&b| if b { "1" } else { "0" }.to_string()),
                );
                out.write_record(&row)?;
            }
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(BufWriter::new(f))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(BufReader::new(f))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let table = read_table(r, |s, line| match s.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(Error::Data(format!("label must be 0 or 1 at row {line}"))),
        })?;
        Self::new(table.cells, table.signals, table.timestamps, table.values)
    }
}

fn check_unique(items: &[String], what: &str) -> Result<()> {
    let mut seen = HashMap::with_capacity(items.len());
    for it in items {
        if seen.insert(it.as_str(), ()).is_some() {
            return Err(Error::Data(format!("duplicate {what} `{it}`")));
        }
    }
    Ok(())
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .map(|d| d.naive_utc().format("%Y-%m-%dT%H:%M:%S").to_string())
        .unwrap_or_else(|| ts.to_string())
}

pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(d) = DateTime::parse_from_rfc3339(s) {
        return Some(d.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|d| d.and_utc().timestamp())
}

struct Table<T> {
    cells: Vec<String>,
    signals: Vec<String>,
    timestamps: Vec<i64>,
    values: Vec<Array2<T>>,
}

fn read_table<R, T, F>(r: R, parse: F) -> Result<Table<T>>
where
    R: Read,
    T: Clone + Default,
    F: Fn(&str, u64) -> Result<T>,
{
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.get(0).map(str::trim) != Some("timestamp") {
        return Err(Error::Data("missing timestamp column".into()));
    }
    if header.get(1).map(str::trim) != Some("cell_id") {
        return Err(Error::Data("second column must be cell_id".into()));
    }
    let signals: Vec<String> = header
        .iter()
        .skip(2)
        .map(|s| s.trim().to_string())
        .collect();
    if signals.is_empty() {
        return Err(Error::Data("no signal columns".into()));
    }
    let width = signals.len() + 2;

    let mut cells: Vec<String> = Vec::new();
    let mut cell_index: HashMap<String, usize> = HashMap::new();
    let mut timestamps: Vec<i64> = Vec::new();
    // (time index, cell index) -> row values
    let mut rows: HashMap<(usize, usize), Vec<T>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::Data(format!(
                "ragged row {line}: {} fields, expected {width}",
                rec.len()
            )));
        }
        let ts = parse_timestamp(&rec[0])
            .ok_or_else(|| Error::Data(format!("bad timestamp `{}` at row {line}", &rec[0])))?;
        let t = match timestamps.last() {
            Some(&last) if last == ts => timestamps.len() - 1,
            Some(&last) if ts < last => {
                return Err(Error::Data(format!(
                    "timestamps out of order at row {line}"
                )));
            }
            _ => {
                timestamps.push(ts);
                timestamps.len() - 1
            }
        };
        let id = rec[1].trim().to_string();
        let c = match cell_index.get(&id) {
            Some(&c) => c,
            None => {
                cells.push(id.clone());
                cell_index.insert(id.clone(), cells.len() - 1);
                cells.len() - 1
            }
        };
        let vals = (2..width)
            .map(|j| parse(&rec[j], line))
            .collect::<Result<Vec<T>>>()?;
        if rows.insert((t, c), vals).is_some() {
            return Err(Error::Data(format!(
                "duplicate (timestamp, cell) at row {line}"
            )));
        }
    }
    if rows.len() != cells.len() * timestamps.len() {
        return Err(Error::Data(format!(
            "ragged panel: {} rows for {} cells x {} timestamps",
            rows.len(),
            cells.len(),
            timestamps.len()
        )));
    }
    let k = signals.len();
    let t_len = timestamps.len();
    let mut values = vec![Array2::<T>::default((k, t_len)); cells.len()];
    for ((t, c), vals) in rows {
        for (s, v) in vals.into_iter().enumerate() {
            values[c][[s, t]] = v;
        }
    }
    Ok(Table {
        cells,
        signals,
        timestamps,
        values,
    })
}
