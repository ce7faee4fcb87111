use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const TOOL_VERSION: &str = concat!("rlab ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandName {
    Gen,
    Dist,
    Bounds,
    Mc,
    Fit,
    Verify,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub command: CommandName,
    /// `argv` plus the contents of any spec or manifest files read.
    pub inputs: BTreeMap<String, Value>,
    pub output_path: Option<String>,
    pub created_at: String,
    pub tool_version: String,
}

#[derive(Serialize)]
pub struct Envelope<'a, T> {
    pub manifest: &'a ExperimentManifest,
    pub generator_version: &'static str,
    pub report: T,
}

/// RFC 3339 timestamp, pinned by `SOURCE_DATE_EPOCH` when set.
pub fn timestamp(env: &BTreeMap<String, String>) -> Result<String, CliError> {
    let at = match env.get("SOURCE_DATE_EPOCH") {
        Some(s) => {
            let secs: i64 = s
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("SOURCE_DATE_EPOCH is not an integer: {s}")))?;
            chrono::DateTime::from_timestamp(secs, 0)
                .ok_or_else(|| CliError::Usage("SOURCE_DATE_EPOCH out of range".into()))?
        }
        None => chrono::Utc::now(),
    };
    Ok(at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {}", path.display(), e.error)))?;
    Ok(())
}

/// `%.12g`: 12 significant digits, trailing zeros trimmed.
pub fn g12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.11e}", x);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-5..12).contains(&exp) {
        let s = format!("{:.*}", (11 - exp).max(0) as usize, x);
        trim_zeros(&s)
    } else {
        format!("{}e{}", trim_zeros(mant), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// A CSV projection of a report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub enum Cell {
    Num(f64),
    Int(i128),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i128)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x as i128)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i128)
    }
}

impl From<u128> for Cell {
    fn from(x: u128) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map(Into::into).unwrap_or(Cell::Empty)
    }
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(
            row.into_iter()
                .map(|c| match c {
                    Cell::Num(x) => g12(x),
                    Cell::Int(i) => i.to_string(),
                    Cell::Text(s) => s,
                    Cell::Empty => String::new(),
                })
                .collect(),
        );
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}
