//! File formats: dataset CSV, headerless query CSV, JSON outputs with a
//! metadata block, and atomic writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use tempfile::NamedTempFile;
use wrf::synth::HTEDataset;

use crate::CliError;

/// An observational table: covariates, responses and, when present, the
/// treatment indicator.
pub struct Table {
    pub d: usize,
    pub dy: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: Option<Vec<u8>>,
}

impl Table {
    pub fn n(&self) -> usize {
        self.x.len() / self.d
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn into_hte(self) -> Result<HTEDataset, CliError> {
        let t = self.t.ok_or_else(|| CliError::Data("dataset has no t column".into()))?;
        Ok(HTEDataset::observed(self.d, self.dy, self.x, self.y, t)?)
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn parse_cell(path: &Path, line: u64, column: usize, cell: &str) -> Result<f64, CliError> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| CliError::Data(format!("{}:{line}: column {column}: not a number: {cell:?}", path.display())))?;
    if !v.is_finite() {
        return Err(CliError::Data(format!("{}:{line}: column {column}: non-finite value", path.display())));
    }
    Ok(v)
}

/// Splits a header `x1..xd,y1[,y2][,t]` into `(d, dy, has_t)`.
fn parse_header(path: &Path, names: &[&str]) -> Result<(usize, usize, bool), CliError> {
    let bad = |msg: &str| CliError::Data(format!("{}:1: {msg}; expected x1,...,xd,y1[,y2][,t]", path.display()));
    let has_t = names.last() == Some(&"t");
    let cols = if has_t { &names[..names.len() - 1] } else { names };
    let d = cols.iter().take_while(|c| c.starts_with('x')).count();
    let dy = cols.len() - d;
    if d == 0 || dy == 0 {
        return Err(bad("header needs at least one x and one y column"));
    }
    for (k, c) in cols[..d].iter().enumerate() {
        if *c != format!("x{}", k + 1) {
            return Err(bad(&format!("unexpected column {c:?}")));
        }
    }
    for (k, c) in cols[d..].iter().enumerate() {
        if *c != format!("y{}", k + 1) {
            return Err(bad(&format!("unexpected column {c:?}")));
        }
    }
    Ok((d, dy, has_t))
}

pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let (d, dy, has_t) = parse_header(path, &names)?;
    let width = names.len();
    let mut table = Table { d, dy, x: Vec::new(), y: Vec::new(), t: has_t.then(Vec::new) };
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(CliError::Data(format!(
                "{}:{line}: expected {width} columns, found {}",
                path.display(),
                record.len()
            )));
        }
        for (k, cell) in record.iter().enumerate() {
            let v = parse_cell(path, line, k + 1, cell)?;
            if k < d {
                table.x.push(v);
            } else if k < d + dy {
                table.y.push(v);
            } else {
                let arm = if v == 0.0 {
                    0
                } else if v == 1.0 {
                    1
                } else {
                    return Err(CliError::Data(format!(
                        "{}:{line}: column {}: treatment must be 0 or 1",
                        path.display(),
                        k + 1
                    )));
                };
                if let Some(t) = table.t.as_mut() {
                    t.push(arm);
                }
            }
        }
    }
    if table.x.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(table)
}

/// Headerless CSV of query points, each row of width `d`.
pub fn read_queries(path: &Path, d: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != d {
            return Err(CliError::Data(format!(
                "{}:{line}: expected {d} columns, found {}",
                path.display(),
                record.len()
            )));
        }
        out.push(record.iter().enumerate().map(|(k, c)| parse_cell(path, line, k + 1, c)).collect::<Result<_, _>>()?);
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: no query rows", path.display())));
    }
    Ok(out)
}

/// A comma-separated inline query.
pub fn parse_inline(text: &str, d: usize) -> Result<Vec<f64>, CliError> {
    let values: Vec<f64> = text
        .split(',')
        .enumerate()
        .map(|(k, c)| {
            c.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Data(format!("--x: value {} is not a finite number: {c:?}", k + 1)))
        })
        .collect::<Result<_, _>>()?;
    if values.len() != d {
        return Err(CliError::Data(format!("--x: expected {d} values, got {}", values.len())));
    }
    Ok(values)
}

/// Writes `contents` to a temporary file beside `path`, then renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| CliError::Internal(format!("writing {}: {e}", path.display()));
    let mut tmp = NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(contents).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

/// Serializes `body` and adds a `meta` entry recording the command and its flags.
pub fn with_meta(body: impl Serialize, meta: &Value) -> Result<Value, CliError> {
    let mut value = serde_json::to_value(body).map_err(|e| CliError::Internal(e.to_string()))?;
    match value.as_object_mut() {
        Some(obj) => {
            obj.insert("meta".into(), meta.clone());
            Ok(value)
        }
        None => Err(CliError::Internal("output is not a JSON object".into())),
    }
}

pub fn write_json(path: &Path, value: &Value, pretty: bool) -> Result<(), CliError> {
    let text = if pretty { serde_json::to_string_pretty(value) } else { serde_json::to_string(value) }
        .map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(path, format!("{text}\n").as_bytes())
}

/// A two-column CSV with a header.
pub fn write_pairs<T: std::fmt::Display>(path: &Path, header: [&str; 2], rows: &[(usize, T)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Internal(e.to_string());
    w.write_record(header).map_err(fail)?;
    for (i, v) in rows {
        w.write_record([i.to_string(), v.to_string()]).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// The observational view of a generated dataset: `x1..xd,y1[,y2],t`.
pub fn write_dataset(path: &Path, data: &HTEDataset) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Internal(e.to_string());
    let header: Vec<String> = (1..=data.d)
        .map(|k| format!("x{k}"))
        .chain((1..=data.dy).map(|k| format!("y{k}")))
        .chain(["t".to_string()])
        .collect();
    w.write_record(&header).map_err(fail)?;
    for i in 0..data.n() {
        let row: Vec<String> = data
            .x_row(i)
            .iter()
            .chain(data.y_row(i))
            .map(f64::to_string)
            .chain([data.t[i].to_string()])
            .collect();
        w.write_record(&row).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_shapes() {
        let p = Path::new("d.csv");
        assert_eq!(parse_header(p, &["x1", "x2", "y1", "t"]).unwrap(), (2, 1, true));
        assert_eq!(parse_header(p, &["x1", "y1", "y2"]).unwrap(), (1, 2, false));
        assert!(parse_header(p, &["x1", "x3", "y1"]).is_err());
        assert!(parse_header(p, &["x1", "t"]).is_err());
        assert!(parse_header(p, &["y1", "x1"]).is_err());
    }

    #[test]
    fn inline_queries() {
        assert_eq!(parse_inline("0.1, 2,-3e-1", 3).unwrap(), vec![0.1, 2.0, -0.3]);
        assert!(parse_inline("0.1,2", 3).is_err());
        assert!(parse_inline("0.1,nan,1", 3).is_err());
        assert!(parse_inline("0.1,a,1", 3).is_err());
    }

    #[test]
    fn round_trip_decimals() {
        let v = [0.1 + 0.2, 1e-300, -7.0 / 3.0, 123456789.12345679];
        for x in v {
            assert_eq!(x.to_string().parse::<f64>().unwrap(), x);
        }
    }
}
