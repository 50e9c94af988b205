use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;

use crate::error::CliError;

static WARNINGS: Mutex<Vec<String>> = Mutex::new(Vec::new());

/// Routes `log` warnings from the library into the run summary.
struct Collector;

impl log::Log for Collector {
    fn enabled(&self, m: &log::Metadata) -> bool {
        m.level() <= log::Level::Warn
    }

    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            warn(record.args().to_string());
        }
    }

    fn flush(&self) {}
}

static COLLECTOR: Collector = Collector;

pub fn install_logger() {
    if log::set_logger(&COLLECTOR).is_ok() {
        log::set_max_level(log::LevelFilter::Warn);
    }
}

pub fn warn(msg: impl Into<String>) {
    let msg = msg.into();
    eprintln!("warning: {msg}");
    WARNINGS.lock().unwrap().push(msg);
}

pub fn take_warnings() -> Vec<String> {
    std::mem::take(&mut *WARNINGS.lock().unwrap())
}

/// One cell of a tab-separated table.
pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
    Flag(bool),
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Flag(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            // `{}` on f64 is the shortest string that parses back exactly.
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Flag(b) => f.write_str(if *b { "1" } else { "0" }),
            Cell::Missing => f.write_str("NA"),
        }
    }
}

pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(OutDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn table(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> Result<(), CliError> {
        let mut s = header.join("\t");
        s.push('\n');
        for row in rows {
            for (k, c) in row.iter().enumerate() {
                if k > 0 {
                    s.push('\t');
                }
                write!(s, "{c}").unwrap();
            }
            s.push('\n');
        }
        self.write(name, s.as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(self.path(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }
}

#[derive(Serialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub elapsed_ms: f64,
}

#[derive(Serialize)]
pub struct RunSummary {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: serde_json::Value,
    pub timing: Timing,
    pub outputs: serde_json::Value,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}
