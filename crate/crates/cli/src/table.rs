use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::config::OutputFormat;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Real(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Self::Int(i) => i.to_string(),
            Self::Real(x) => format_real(*x),
            Self::Text(s) => s.clone(),
            Self::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Self::Int(i) => Value::from(*i),
            Self::Real(x) => {
                let rounded = format_real(*x).parse().unwrap_or(*x);
                serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number)
            }
            Self::Text(s) => Value::from(s.as_str()),
            Self::Empty => Value::Null,
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Self::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Self::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self::Real(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Self::Text(v.to_owned())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Self::Empty, Self::Real)
    }
}

/// Ten significant digits, shortest form.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let s = format!("{x:.9e}");
    let parsed: f64 = s.parse().unwrap_or(x);
    parsed.to_string()
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_columns(name: &str, columns: Vec<String>) -> Self {
        Self { name: name.into(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, out: W, format: OutputFormat) -> std::io::Result<()> {
        match format {
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(&self.columns)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::render))?;
                }
                w.flush()
            }
            OutputFormat::Jsonl => {
                let mut out = out;
                for row in &self.rows {
                    let record: Map<String, Value> =
                        self.columns.iter().cloned().zip(row.iter().map(Cell::json)).collect();
                    serde_json::to_writer(&mut out, &record)?;
                    out.write_all(b"\n")?;
                }
                out.flush()
            }
        }
    }

    /// Writes `<dir>/<name>.<ext>` and returns the path.
    pub fn save(&self, dir: &Path, format: OutputFormat) -> CliResult<PathBuf> {
        let path = dir.join(format!("{}.{}", self.name, format.extension()));
        let file = File::create(&path).map_err(CliError::io(&path))?;
        self.write_to(BufWriter::new(file), format).map_err(CliError::io(&path))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_to_ten_digits() {
        assert_eq!(format_real(0.1 + 0.2), "0.3");
        assert_eq!(format_real(0.0018), "0.0018");
        assert_eq!(format_real(1.0), "1");
        assert_eq!(format_real(-0.0), "0");
        assert_eq!(format_real(2.0 / 3.0), "0.6666666667");
    }

    #[test]
    fn csv_and_jsonl_agree() {
        let mut t = Table::new("t", &["a", "b", "c"]);
        t.push(vec![1usize.into(), 0.5.into(), Cell::Empty]);
        let mut csv = Vec::new();
        t.write_to(&mut csv, OutputFormat::Csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "a,b,c\n1,0.5,\n");
        let mut jsonl = Vec::new();
        t.write_to(&mut jsonl, OutputFormat::Jsonl).unwrap();
        assert_eq!(String::from_utf8(jsonl).unwrap(), "{\"a\":1,\"b\":0.5,\"c\":null}\n");
    }
}
