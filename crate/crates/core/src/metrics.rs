//! Append-only per-iteration metrics CSV.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Version tag written as a comment line above the header.
pub const METRICS_SCHEMA: &str = "# locomimic-metrics v1";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema drift: column {index} is `{got}`, expected `{expected}`")]
    SchemaDrift { index: usize, expected: String, got: String },
    #[error("row has {got} columns, schema has {expected}")]
    Width { expected: usize, got: usize },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricValue {
    Int(i64),
    Float(f64),
}

impl MetricValue {
    pub fn as_f64(self) -> f64 {
        match self {
            MetricValue::Int(i) => i as f64,
            MetricValue::Float(f) => f,
        }
    }

    /// Integers verbatim; floats with 17 significant digits so they parse
    /// back to the same bits.
    pub fn format(self) -> String {
        match self {
            MetricValue::Int(i) => i.to_string(),
            MetricValue::Float(f) => format!("{f:.16e}"),
        }
    }
}

pub struct MetricsWriter {
    path: PathBuf,
    file: File,
    columns: Option<Vec<String>>,
}

impl MetricsWriter {
    /// Creates (truncating) the file. The header is written with the first row,
    /// or immediately if `columns` is given.
    pub fn create(path: &Path, columns: Option<Vec<String>>) -> Result<Self, MetricsError> {
        let file = File::create(path).map_err(|source| io_err(path, source))?;
        let mut w = MetricsWriter { path: path.to_path_buf(), file, columns: None };
        if let Some(c) = columns {
            w.write_header(c)?;
        }
        Ok(w)
    }

    /// Opens an existing file for appending, taking its header as the schema.
    pub fn append(path: &Path) -> Result<Self, MetricsError> {
        let table = MetricsTable::read(path)?;
        let file = OpenOptions::new().append(true).open(path).map_err(|source| io_err(path, source))?;
        Ok(MetricsWriter {
            path: path.to_path_buf(),
            file,
            columns: Some(table.columns),
        })
    }

    /// Keeps the header and the first `rows` data rows; used when resuming.
    pub fn truncate_rows(path: &Path, rows: usize) -> Result<(), MetricsError> {
        let text = std::fs::read_to_string(path).map_err(|source| io_err(path, source))?;
        let mut out = String::new();
        let mut data = 0;
        for line in text.lines() {
            let is_data = !line.starts_with('#') && !line.starts_with("iter");
            if is_data {
                if data == rows {
                    break;
                }
                data += 1;
            }
            out.push_str(line);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|source| io_err(path, source))
    }

    fn write_header(&mut self, columns: Vec<String>) -> Result<(), MetricsError> {
        let line = format!("{METRICS_SCHEMA}\n{}\n", columns.join(","));
        self.file.write_all(line.as_bytes()).map_err(|source| io_err(&self.path, source))?;
        self.file.flush().map_err(|source| io_err(&self.path, source))?;
        self.columns = Some(columns);
        Ok(())
    }

    pub fn columns(&self) -> Option<&[String]> {
        self.columns.as_deref()
    }

    /// Appends one row and flushes. Column names and order must match the
    /// schema fixed by the first row.
    pub fn write_row(&mut self, row: &[(String, MetricValue)]) -> Result<(), MetricsError> {
        match &self.columns {
            None => self.write_header(row.iter().map(|(k, _)| k.clone()).collect())?,
            Some(cols) => {
                if cols.len() != row.len() {
                    return Err(MetricsError::Width { expected: cols.len(), got: row.len() });
                }
                for (i, (c, (k, _))) in cols.iter().zip(row).enumerate() {
                    if c != k {
                        return Err(MetricsError::SchemaDrift { index: i, expected: c.clone(), got: k.clone() });
                    }
                }
            }
        }
        let line: Vec<String> = row.iter().map(|(_, v)| v.format()).collect();
        writeln!(self.file, "{}", line.join(",")).map_err(|source| io_err(&self.path, source))?;
        self.file.flush().map_err(|source| io_err(&self.path, source))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> MetricsError {
    MetricsError::Io { path: path.display().to_string(), source }
}

/// A parsed metrics file, values as f64.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl MetricsTable {
    pub fn read(path: &Path) -> Result<Self, MetricsError> {
        let f = File::open(path).map_err(|source| io_err(path, source))?;
        let lines = BufReader::new(f)
            .lines()
            .filter(|l| l.as_ref().map_or(true, |l| !l.starts_with('#')));
        let body: Vec<String> = lines.collect::<Result<_, _>>().map_err(|source| io_err(path, source))?;
        let joined = body.join("\n");
        let mut rdr = csv::ReaderBuilder::new().from_reader(joined.as_bytes());
        let parse = |msg: String| MetricsError::Parse { path: path.display().to_string(), msg };
        let columns: Vec<String> = rdr.headers().map_err(|e| parse(e.to_string()))?.iter().map(String::from).collect();
        if columns.is_empty() || columns.iter().all(|c| c.is_empty()) {
            return Err(parse("no header".into()));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| parse(e.to_string()))?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| parse(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(MetricsTable { columns, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize, MetricsError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| MetricsError::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, MetricsError> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }
}
