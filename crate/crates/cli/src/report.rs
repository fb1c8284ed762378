//! JSON-lines and CSV output. Every real is printed with 17 significant
//! digits so reruns can be compared byte for byte.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{Map, Number, Value as Json};

use crate::config::{RunConfig, Value};

/// A real as a JSON number with 17 significant digits; non-finite values
/// become strings.
pub fn num(x: f64) -> Json {
    if x.is_finite() {
        let text = format!("{x:.16e}");
        Json::Number(text.parse::<Number>().expect("formatted float is a JSON number"))
    } else {
        Json::String(format!("{x}"))
    }
}

pub fn nums(xs: &[f64]) -> Json {
    Json::Array(xs.iter().map(|&x| num(x)).collect())
}

pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn config_json(cfg: &RunConfig) -> Json {
    let mut params = Map::new();
    for (k, v) in &cfg.params {
        let j = match v {
            Value::Int(i) => Json::from(*i),
            Value::Real(x) => num(*x),
            Value::Str(s) => Json::String(s.clone()),
        };
        params.insert(k.clone(), j);
    }
    let mut m = Map::new();
    m.insert("subcommand".into(), Json::String(cfg.subcommand.clone()));
    m.insert("params".into(), Json::Object(params));
    Json::Object(m)
}

#[derive(Debug)]
pub struct IoFailure {
    pub path: PathBuf,
    pub error: io::Error,
}

impl std::fmt::Display for IoFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.error)
    }
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> IoFailure + '_ {
    move |error| IoFailure { path: path.to_path_buf(), error }
}

/// One report line: `{"check": name, ...fields, "pass": bool, "config": {...}}`.
pub struct Line {
    fields: Map<String, Json>,
    pass: bool,
}

impl Line {
    pub fn new(check: &str) -> Self {
        let mut fields = Map::new();
        fields.insert("check".into(), Json::String(check.into()));
        Line { fields, pass: true }
    }

    pub fn real(mut self, key: &str, x: f64) -> Self {
        self.fields.insert(key.into(), num(x));
        self
    }

    pub fn reals(mut self, key: &str, xs: &[f64]) -> Self {
        self.fields.insert(key.into(), nums(xs));
        self
    }

    pub fn int(mut self, key: &str, v: i64) -> Self {
        self.fields.insert(key.into(), Json::from(v));
        self
    }

    pub fn text(mut self, key: &str, v: &str) -> Self {
        self.fields.insert(key.into(), Json::String(v.into()));
        self
    }

    pub fn flag(mut self, key: &str, v: bool) -> Self {
        self.fields.insert(key.into(), Json::Bool(v));
        self
    }

    pub fn pass(mut self, pass: bool) -> Self {
        self.pass = pass;
        self
    }
}

/// Collects report lines and writes them to stdout and, optionally, a file.
pub struct Reporter {
    config: Json,
    file: Option<(PathBuf, BufWriter<File>)>,
    csv_path: Option<PathBuf>,
    pub checks: usize,
    pub failures: usize,
}

impl Reporter {
    /// Opens the output files up front so a bad path fails before any work.
    pub fn open(cfg: &RunConfig) -> Result<Self, IoFailure> {
        let file = match cfg.path("out") {
            Some(p) => Some((p.to_path_buf(), BufWriter::new(File::create(p).map_err(io_err(p))?))),
            None => None,
        };
        let csv_path = cfg.path("csv").map(Path::to_path_buf);
        if let Some(p) = &csv_path {
            File::create(p).map_err(io_err(p))?;
        }
        Ok(Reporter { config: config_json(cfg), file, csv_path, checks: 0, failures: 0 })
    }

    fn write_json(&mut self, v: &Json) -> Result<(), IoFailure> {
        let text = serde_json::to_string(v).expect("report serializes");
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        writeln!(lock, "{text}").map_err(io_err(Path::new("<stdout>")))?;
        if let Some((path, w)) = &mut self.file {
            writeln!(w, "{text}").map_err(|error| IoFailure { path: path.clone(), error })?;
        }
        Ok(())
    }

    pub fn emit(&mut self, line: Line) -> Result<(), IoFailure> {
        let mut m = line.fields;
        m.insert("pass".into(), Json::Bool(line.pass));
        m.insert("config".into(), self.config.clone());
        self.checks += 1;
        if !line.pass {
            self.failures += 1;
        }
        self.write_json(&Json::Object(m))
    }

    /// Writes the closing summary line and flushes the report file.
    pub fn finish(mut self) -> Result<bool, IoFailure> {
        let pass = self.failures == 0;
        let mut m = Map::new();
        m.insert("check".into(), Json::String("summary".into()));
        m.insert("checks".into(), Json::from(self.checks));
        m.insert("failed".into(), Json::from(self.failures));
        m.insert("pass".into(), Json::Bool(pass));
        m.insert("config".into(), self.config.clone());
        self.write_json(&Json::Object(m))?;
        if let Some((path, w)) = &mut self.file {
            w.flush().map_err(|error| IoFailure { path: path.clone(), error })?;
        }
        Ok(pass)
    }

    /// Writes field data when `--csv` was given; columns must share a length.
    pub fn csv(&self, headers: &[&str], columns: &[&[f64]]) -> Result<(), IoFailure> {
        let Some(path) = &self.csv_path else { return Ok(()) };
        let csv_err = |e: csv::Error| IoFailure { path: path.clone(), error: io::Error::other(e.to_string()) };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(headers).map_err(csv_err)?;
        let rows = columns.first().map_or(0, |c| c.len());
        for i in 0..rows {
            w.write_record(columns.iter().map(|c| fmt_real(c[i]))).map_err(csv_err)?;
        }
        w.flush().map_err(io_err(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(serde_json::to_string(&num(0.1)).unwrap(), "1.0000000000000001e-1");
        assert_eq!(serde_json::to_string(&num(-2.0)).unwrap(), "-2.0000000000000000e+0");
        assert_eq!(serde_json::to_string(&num(f64::NAN)).unwrap(), "\"NaN\"");
        let back: f64 = serde_json::to_string(&num(1.0 / 3.0)).unwrap().parse().unwrap();
        assert_eq!(back, 1.0 / 3.0);
    }
}
