//! Raw series ingestion and the affine normalization to `[0,1] x [0,1]^s`.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MewlsError, Result};

/// A parametrized sequence of points as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub t: Vec<f64>,
    /// One row per sample, `s` components each.
    pub y: Vec<Vec<f64>>,
    /// `true` where the row is present; missing rows are skipped by [`normalize`].
    pub present: Vec<bool>,
    /// Source row of each sample (0-based data row in the input file).
    pub source_rows: Vec<usize>,
    pub t_name: String,
    pub y_names: Vec<String>,
}

impl RawSeries {
    /// Fully present series with generic column names.
    pub fn new(t: Vec<f64>, y: Vec<Vec<f64>>) -> Result<Self> {
        if t.is_empty() {
            return Err(MewlsError::EmptyInput("series has no rows".into()));
        }
        if t.len() != y.len() {
            return Err(MewlsError::InvalidArgument(format!(
                "{} parameters for {} points",
                t.len(),
                y.len()
            )));
        }
        let s = y[0].len();
        if s == 0 || y.iter().any(|p| p.len() != s) {
            return Err(MewlsError::InvalidArgument(
                "points must share a nonzero dimension".into(),
            ));
        }
        let m = t.len();
        Ok(Self {
            t,
            y,
            present: vec![true; m],
            source_rows: (0..m).collect(),
            t_name: "t".into(),
            y_names: (1..=s).map(|k| format!("y{k}")).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.y_names.len()
    }

    pub fn n_present(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }
}

/// Per-axis `(min, range)` maps; a zero range marks a flat component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub t_min: f64,
    pub t_range: f64,
    pub y_min: Vec<f64>,
    pub y_range: Vec<f64>,
}

impl AffineTransform {
    pub fn identity(s: usize) -> Self {
        Self {
            t_min: 0.0,
            t_range: 1.0,
            y_min: vec![0.0; s],
            y_range: vec![1.0; s],
        }
    }

    pub fn t_to_raw(&self, x: f64) -> f64 {
        self.t_min + x * self.t_range
    }

    pub fn t_to_unit(&self, t: f64) -> f64 {
        ((t - self.t_min) / self.t_range).clamp(0.0, 1.0)
    }

    pub fn y_to_raw(&self, k: usize, v: f64) -> f64 {
        if self.y_range[k] == 0.0 {
            self.y_min[k]
        } else {
            self.y_min[k] + v * self.y_range[k]
        }
    }

    pub fn point_to_raw(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .enumerate()
            .map(|(k, &v)| self.y_to_raw(k, v))
            .collect()
    }
}

/// Normalized data ready for fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub t: Vec<f64>,
    /// `m x s`.
    pub y: DMatrix<f64>,
    pub transform: AffineTransform,
    /// Components with zero range, mapped to the constant 0.5.
    pub flat_components: Vec<usize>,
    /// Source row of each kept sample.
    pub source_rows: Vec<usize>,
    pub t_name: String,
    pub y_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.y.ncols()
    }

    /// Sample `i` in original units.
    pub fn raw_point(&self, i: usize) -> (f64, Vec<f64>) {
        let p: Vec<f64> = self.y.row(i).iter().copied().collect();
        (
            self.transform.t_to_raw(self.t[i]),
            self.transform.point_to_raw(&p),
        )
    }
}

/// Maps present rows into `[0,1] x [0,1]^s`.
pub fn normalize(raw: &RawSeries) -> Result<Dataset> {
    let keep: Vec<usize> = (0..raw.len()).filter(|&i| raw.present[i]).collect();
    if keep.is_empty() {
        return Err(MewlsError::EmptyInput("no complete rows".into()));
    }
    let s = raw.dim();
    let (t_min, t_max) = min_max(keep.iter().map(|&i| raw.t[i]));
    if !(t_max > t_min) {
        return Err(MewlsError::DegenerateParameter);
    }
    let t_range = t_max - t_min;
    let mut y_min = Vec::with_capacity(s);
    let mut y_range = Vec::with_capacity(s);
    let mut flat = Vec::new();
    for k in 0..s {
        let (lo, hi) = min_max(keep.iter().map(|&i| raw.y[i][k]));
        y_min.push(lo);
        y_range.push(hi - lo);
        if hi == lo {
            log::warn!("component {} is constant; mapped to 0.5", raw.y_names[k]);
            flat.push(k);
        }
    }
    let t: Vec<f64> = keep
        .iter()
        .map(|&i| ((raw.t[i] - t_min) / t_range).clamp(0.0, 1.0))
        .collect();
    let y = DMatrix::from_fn(keep.len(), s, |r, k| {
        let v = raw.y[keep[r]][k];
        if y_range[k] == 0.0 {
            0.5
        } else {
            ((v - y_min[k]) / y_range[k]).clamp(0.0, 1.0)
        }
    });
    Ok(Dataset {
        t,
        y,
        transform: AffineTransform {
            t_min,
            t_range,
            y_min,
            y_range,
        },
        flat_components: flat,
        source_rows: keep.iter().map(|&i| raw.source_rows[i]).collect(),
        t_name: raw.t_name.clone(),
        y_names: raw.y_names.clone(),
    })
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

/// Maps `(x, point)` samples from normalized back to original units.
pub fn denormalize_curve(ds: &Dataset, samples: &[(f64, Vec<f64>)]) -> Vec<(f64, Vec<f64>)> {
    samples
        .iter()
        .map(|(x, p)| (ds.transform.t_to_raw(*x), ds.transform.point_to_raw(p)))
        .collect()
}

/// Column reference by 0-based index or header name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for ColumnSelector {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnSelector::Index(i),
            Err(_) => ColumnSelector::Name(s.to_string()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterOp {
    Lt,
    Le,
    Gt,
    Ge,
}

/// Keeps only rows whose `column` satisfies `op value`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowFilter {
    pub column: ColumnSelector,
    pub op: FilterOp,
    pub value: f64,
}

impl std::str::FromStr for RowFilter {
    type Err = String;

    /// Parses `col<=65`, `col<3`, `col>=0`, `col>1`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        for (token, op) in [
            ("<=", FilterOp::Le),
            (">=", FilterOp::Ge),
            ("<", FilterOp::Lt),
            (">", FilterOp::Gt),
        ] {
            if let Some((col, val)) = s.split_once(token) {
                let value = val
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad filter value {val:?}: {e}"))?;
                let column = col.trim().parse().expect("infallible");
                return Ok(RowFilter { column, op, value });
            }
        }
        Err(format!("filter {s:?} must look like COLUMN<=VALUE"))
    }
}

impl RowFilter {
    fn accepts(&self, v: f64) -> bool {
        match self.op {
            FilterOp::Lt => v < self.value,
            FilterOp::Le => v <= self.value,
            FilterOp::Gt => v > self.value,
            FilterOp::Ge => v >= self.value,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    /// Parameter column; `None` uses the row number.
    pub t_column: Option<ColumnSelector>,
    pub y_columns: Vec<ColumnSelector>,
    pub delimiter: u8,
    pub has_header: bool,
    pub missing: Vec<String>,
    pub filter: Option<RowFilter>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            t_column: Some(ColumnSelector::Index(0)),
            y_columns: vec![ColumnSelector::Index(1)],
            delimiter: b',',
            has_header: false,
            missing: vec!["NA".into(), String::new()],
            filter: None,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<RawSeries> {
    let file = std::fs::File::open(path)?;
    read_csv(file, opts)
}

/// Reads selected columns; rows with a missing marker in any selected column
/// are kept but marked absent. Output is stably sorted by `t`.
pub fn read_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<RawSeries> {
    if opts.y_columns.is_empty() {
        return Err(MewlsError::EmptyInput("no data columns selected".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Option<Vec<String>> = if opts.has_header {
        Some(rdr.headers()?.iter().map(str::to_string).collect())
    } else {
        None
    };
    let resolve = |sel: &ColumnSelector| -> Result<usize> {
        match (sel, &headers) {
            (ColumnSelector::Index(i), _) => Ok(*i),
            (ColumnSelector::Name(name), Some(h)) => h
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| MewlsError::InvalidArgument(format!("no column named {name:?}"))),
            (ColumnSelector::Name(name), None) => Err(MewlsError::InvalidArgument(format!(
                "column {name:?} selected by name but the file has no header"
            ))),
        }
    };
    let name_of = |idx: usize| -> String {
        headers
            .as_ref()
            .and_then(|h| h.get(idx).cloned())
            .unwrap_or_else(|| format!("col{idx}"))
    };
    let t_idx = opts.t_column.as_ref().map(&resolve).transpose()?;
    let y_idx: Vec<usize> = opts.y_columns.iter().map(&resolve).collect::<Result<_>>()?;
    let filter_idx = opts
        .filter
        .as_ref()
        .map(|f| resolve(&f.column))
        .transpose()?;

    let parse_cell = |record: &csv::StringRecord, idx: usize, line: usize| -> Result<Option<f64>> {
        let cell = record.get(idx).ok_or_else(|| MewlsError::Parse {
            row: line,
            column: name_of(idx),
            message: "missing column".into(),
        })?;
        if opts.missing.iter().any(|m| m == cell) {
            return Ok(None);
        }
        cell.parse::<f64>()
            .map(Some)
            .map_err(|e| MewlsError::Parse {
                row: line,
                column: name_of(idx),
                message: format!("{cell:?}: {e}"),
            })
    };

    let mut rows: Vec<(f64, Vec<f64>, bool, usize)> = Vec::new();
    for (data_row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record
            .position()
            .map_or(data_row + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if let (Some(f), Some(idx)) = (&opts.filter, filter_idx) {
            match parse_cell(&record, idx, line)? {
                Some(v) if f.accepts(v) => {}
                _ => continue,
            }
        }
        let t = match t_idx {
            Some(idx) => parse_cell(&record, idx, line)?,
            None => Some(data_row as f64),
        };
        let y: Vec<Option<f64>> = y_idx
            .iter()
            .map(|&idx| parse_cell(&record, idx, line))
            .collect::<Result<_>>()?;
        let present = t.is_some() && y.iter().all(Option::is_some);
        if let Some(bad) = t
            .into_iter()
            .chain(y.iter().flatten().copied())
            .find(|v| !v.is_finite())
        {
            return Err(MewlsError::Parse {
                row: line,
                column: String::new(),
                message: format!("non-finite value {bad}"),
            });
        }
        rows.push((
            t.unwrap_or(f64::NAN),
            y.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            present,
            data_row,
        ));
    }
    if rows.is_empty() {
        return Err(MewlsError::EmptyInput("no data rows".into()));
    }
    // Stable: ties keep input order; rows without a parameter go last.
    rows.sort_by(|a, b| match (a.0.is_nan(), b.0.is_nan()) {
        (false, false) => a.0.total_cmp(&b.0),
        (x, y) => x.cmp(&y),
    });
    let mut out = RawSeries {
        t: Vec::with_capacity(rows.len()),
        y: Vec::with_capacity(rows.len()),
        present: Vec::with_capacity(rows.len()),
        source_rows: Vec::with_capacity(rows.len()),
        t_name: t_idx.map_or_else(|| "row".to_string(), name_of),
        y_names: y_idx.iter().map(|&i| name_of(i)).collect(),
    };
    for (t, y, present, row) in rows {
        out.t.push(t);
        out.y.push(y);
        out.present.push(present);
        out.source_rows.push(row);
    }
    Ok(out)
}
