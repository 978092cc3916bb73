//! CSV ingestion of platforms and clinical outcomes, and CSV export of
//! matrices and allocations.
//!
//! Floating-point values are written in the shortest form that parses back to
//! the same bits; missing values are written as `NA`.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{clip_proportions, transform_platform, ClinicalOutcomes, Matrix, PlatformMatrix, Transform};

/// Raw table: header names after the id column, row ids and numeric body.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    pub columns: Vec<String>,
    pub ids: Vec<String>,
    pub values: Matrix,
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn records(path: &Path) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut out = Vec::new();
    for (i, rec) in reader(path)?.records().enumerate() {
        let rec = rec.map_err(|e| parse_error(path, i + 1, e.to_string()))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        out.push((line, rec));
    }
    Ok(out)
}

pub fn parse_value(s: &str) -> Option<f64> {
    match s {
        "NA" | "NaN" | "nan" => Some(f64::NAN),
        _ => s.parse().ok(),
    }
}

/// Read a table whose first row names the columns and whose first column
/// holds unique row ids.
pub fn read_numeric_table(path: &Path) -> Result<NumericTable> {
    let recs = records(path)?;
    let (_, header) = recs.first().ok_or_else(|| parse_error(path, 1, "empty file"))?;
    let columns: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    if columns.is_empty() {
        return Err(parse_error(path, 1, "header has no value columns"));
    }
    let width = columns.len() + 1;
    let mut ids = Vec::with_capacity(recs.len() - 1);
    let mut seen = HashMap::new();
    let mut data = Vec::with_capacity((recs.len() - 1) * columns.len());
    for (line, rec) in &recs[1..] {
        if rec.len() != width {
            return Err(parse_error(
                path,
                *line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        let id = rec[0].to_owned();
        if let Some(first) = seen.insert(id.clone(), *line) {
            return Err(parse_error(path, *line, format!("duplicate id `{id}` (first on line {first})")));
        }
        for (c, field) in rec.iter().enumerate().skip(1) {
            let v = parse_value(field).ok_or_else(|| {
                parse_error(path, *line, format!("non-numeric value `{field}` in column {}", c + 1))
            })?;
            data.push(v);
        }
        ids.push(id);
    }
    let values = Matrix::new(ids.len(), columns.len(), data)?;
    Ok(NumericTable { columns, ids, values })
}

/// Read and transform one platform. Returns the patient ids in file order.
pub fn load_platform(
    path: &Path,
    platform_id: usize,
    transform: Transform,
    clip_eps: Option<f64>,
) -> Result<(PlatformMatrix, Vec<String>)> {
    let table = read_numeric_table(path)?;
    let raw = match clip_eps {
        Some(eps) if transform == Transform::Logit => clip_proportions(&table.values, eps),
        _ => table.values,
    };
    let values = transform_platform(&raw, transform)?;
    let platform = PlatformMatrix::new(platform_id, values, table.columns, transform)?;
    Ok((platform, table.ids))
}

/// Read `patient_id,time,event` records and align them to `patient_ids`.
pub fn load_clinical(path: &Path, patient_ids: &[String]) -> Result<ClinicalOutcomes> {
    let recs = records(path)?;
    let (_, header) = recs.first().ok_or_else(|| parse_error(path, 1, "empty file"))?;
    let names: Vec<&str> = header.iter().collect();
    let col = |name: &str| {
        names
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| parse_error(path, 1, format!("missing column `{name}`")))
    };
    let (id_col, time_col, event_col) = (col("patient_id")?, col("time")?, col("event")?);
    let index: HashMap<&str, usize> = patient_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut time = vec![f64::NAN; patient_ids.len()];
    let mut event = vec![None; patient_ids.len()];
    for (line, rec) in &recs[1..] {
        if rec.len() != names.len() {
            return Err(parse_error(
                path,
                *line,
                format!("expected {} fields, found {}", names.len(), rec.len()),
            ));
        }
        let id = &rec[id_col];
        let &i = index
            .get(id)
            .ok_or_else(|| parse_error(path, *line, format!("unknown patient id `{id}`")))?;
        if event[i].is_some() {
            return Err(parse_error(path, *line, format!("duplicate patient id `{id}`")));
        }
        let t: f64 = rec[time_col]
            .parse()
            .map_err(|_| parse_error(path, *line, format!("non-numeric time `{}`", &rec[time_col])))?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(parse_error(path, *line, format!("time must be positive, got {t}")));
        }
        event[i] = Some(match &rec[event_col] {
            "1" => true,
            "0" => false,
            other => return Err(parse_error(path, *line, format!("event must be 0 or 1, got `{other}`"))),
        });
        time[i] = t;
    }
    if let Some(i) = event.iter().position(Option::is_none) {
        return Err(parse_error(
            path,
            recs.len(),
            format!("no record for patient `{}`", patient_ids[i]),
        ));
    }
    ClinicalOutcomes::new(time, event.into_iter().map(|e| e.expect("checked")).collect())
}

/// Text form of a float that parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        format!("{x:?}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), fmt_f64)
}

/// Buffered CSV writer that reports errors with the file path.
pub struct CsvOut {
    path: std::path::PathBuf,
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            inner: csv::Writer::from_writer(BufWriter::new(file)),
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner
            .write_record(fields)
            .map_err(|e| Error::io(&self.path, std::io::Error::other(e)))
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Write a matrix with a header row and row ids in the first column.
pub fn write_matrix(path: &Path, corner: &str, columns: &[String], ids: &[String], m: &Matrix) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row(std::iter::once(corner.to_owned()).chain(columns.iter().cloned()))?;
    for (i, id) in ids.iter().enumerate() {
        out.row(std::iter::once(id.clone()).chain(m.row(i).iter().map(|&v| fmt_f64(v))))?;
    }
    out.finish()
}

/// Write `id,cluster` pairs with one-based cluster labels.
pub fn write_allocation(path: &Path, id_name: &str, ids: &[String], labels: &[usize]) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row([id_name, "cluster"])?;
    for (id, &l) in ids.iter().zip(labels) {
        out.row([id.clone(), (l + 1).to_string()])?;
    }
    out.finish()
}

/// Read an allocation written by [`write_allocation`], returning ids and
/// zero-based labels.
pub fn read_allocation(path: &Path) -> Result<(Vec<String>, Vec<usize>)> {
    let table = read_numeric_table(path)?;
    if table.columns.len() != 1 {
        return Err(parse_error(path, 1, "expected exactly one label column"));
    }
    let labels = table
        .values
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize - 1)
            } else {
                Err(parse_error(path, i + 2, format!("cluster label {v} is not a positive integer")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((table.ids, labels))
}
