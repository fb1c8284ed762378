//! Run configuration: a per-subcommand schema, a flat `key=value` file format,
//! and the merge `defaults < file < flags`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, Command};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    Str(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Real(v) => write!(f, "{v}"),
            Value::Str(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    /// Integer in `[min, max]`.
    Int {
        min: i64,
        max: i64,
    },
    /// Finite real in `[min, max]`; `min` is exclusive when `open` is set.
    Real {
        min: f64,
        max: f64,
        open: bool,
    },
    Enum(&'static [&'static str]),
    Path,
}

#[derive(Debug, Clone, Copy)]
pub struct Param {
    pub key: &'static str,
    pub kind: Kind,
    /// Textual default, parsed like user input; `None` means required
    /// (or optional, for paths).
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn int(key: &'static str, min: i64, default: Option<&'static str>, help: &'static str) -> Param {
    Param { key, kind: Kind::Int { min, max: i64::MAX }, default, help }
}

const fn pos(key: &'static str, default: &'static str, help: &'static str) -> Param {
    Param { key, kind: Kind::Real { min: 0.0, max: f64::INFINITY, open: true }, default: Some(default), help }
}

const fn nonneg(key: &'static str, default: &'static str, help: &'static str) -> Param {
    Param { key, kind: Kind::Real { min: 0.0, max: f64::INFINITY, open: false }, default: Some(default), help }
}

const fn real(key: &'static str, default: &'static str, help: &'static str) -> Param {
    Param {
        key,
        kind: Kind::Real { min: f64::NEG_INFINITY, max: f64::INFINITY, open: false },
        default: Some(default),
        help,
    }
}

const fn choice(
    key: &'static str,
    values: &'static [&'static str],
    default: Option<&'static str>,
    help: &'static str,
) -> Param {
    Param { key, kind: Kind::Enum(values), default, help }
}

const MODELS: &[&str] = &["euclidean", "hyperbolic", "appendix"];

const COMMON: &[Param] = &[
    Param { key: "out", kind: Kind::Path, default: None, help: "also write the JSON lines to this file" },
    Param { key: "csv", kind: Kind::Path, default: None, help: "write field data as CSV to this file" },
    int("seed", 0, Some("0"), "seed for randomized data"),
];

const MODEL: &[Param] = &[
    choice("model", MODELS, Some("euclidean"), "model geometry"),
    int("dim", 1, Some("1"), "dimension n"),
    pos("kappa", "1", "curvature scale of the hyperbolic model"),
    pos("epsilon", "1", "exponent offset of the appendix warp"),
];

const GRID: &[Param] = &[
    choice("boundary", &["auto", "pole", "clamped", "reflect"], Some("auto"), "grid end conditions"),
    pos("r_max", "30", "outer radius (line models use [-r_max, r_max])"),
    int("nodes", 3, Some("1201"), "grid nodes"),
];

pub struct Subcommand {
    pub name: &'static str,
    pub about: &'static str,
    pub groups: &'static [&'static [Param]],
}

pub const SUBCOMMANDS: &[Subcommand] = &[
    Subcommand {
        name: "kernel",
        about: "Euclidean kernel profile, sign changes, decay fit and mass",
        groups: &[&[
            int("dim", 1, None, "dimension n"),
            pos("eta_max", "20", "largest similarity variable"),
            int("samples", 2, Some("2001"), "profile samples on [0, eta_max]"),
            pos("t", "1", "time for the kernel column and mass check"),
            int("resolution", 10, Some("10000"), "scan resolution for sign changes"),
            pos("fit_lo", "5", "decay-fit window start"),
            pos("fit_hi", "30", "decay-fit window end"),
        ]],
    },
    Subcommand {
        name: "geom",
        about: "Warp function, curvature bounds and volume ratio of a model",
        groups: &[MODEL, &[pos("r_max", "10", "outer radius"), int("samples", 2, Some("201"), "sample count")]],
    },
    Subcommand {
        name: "simulate",
        about: "Evolve radial data with the theta scheme",
        groups: &[
            MODEL,
            GRID,
            &[
                pos("dt", "0.001", "time step"),
                pos("t_end", "1", "final time"),
                Param {
                    key: "theta",
                    kind: Kind::Real { min: 0.5, max: 1.0, open: false },
                    default: Some("0.5"),
                    help: "theta in [1/2, 1]",
                },
                int("startup", 0, Some("4"), "implicit Euler startup steps"),
                int("outputs", 1, Some("10"), "evenly spaced snapshots"),
                choice("init", &["delta", "bumps"], Some("delta"), "initial data"),
                real("center", "0", "delta center"),
                nonneg("width", "0", "delta width (0 picks 4h)"),
                int("bump_count", 1, Some("6"), "bumps in the random family"),
                pos("bump_width", "0.1", "smallest bump width"),
            ],
        ],
    },
    Subcommand {
        name: "probe",
        about: "Kernel estimate from a mollified delta: mass and off-diagonal decay",
        groups: &[
            MODEL,
            GRID,
            &[
                pos("t", "1", "time"),
                real("center", "0", "source point"),
                pos("width_multiple", "4", "bump width in grid spacings"),
                int("steps", 10, Some("1000"), "time steps"),
                pos("leak_tolerance", "1e-6", "admissible rim magnitude"),
                pos("flux_tolerance", "1e-6", "admissible boundary mass flux"),
            ],
        ],
    },
    Subcommand {
        name: "distlike",
        about: "Distance-like function and cut-off on a pole model",
        groups: &[
            MODEL,
            &[
                pos("r_outer", "20", "cut-off level R"),
                pos("spacing", "0.02", "node spacing"),
                pos("k", "4", "cut-off sharpness (>= 4)"),
                pos("rho", "1", "cut-off annulus width"),
                pos("annulus_lo", "2", "inner radius of the verified annulus"),
            ],
        ],
    },
    Subcommand {
        name: "weights",
        about: "Weight calibration, weighted L2 monitoring and exponential L2 decay",
        groups: &[
            MODEL,
            GRID,
            &[
                choice("mode", &["calibrate", "monitor", "l2decay"], None, "what to run"),
                choice("variant", &["kernel", "l2decay", "uniqueness"], Some("kernel"), "weight variant"),
                pos("r", "1", "radius R"),
                pos("s", "1", "kernel collar width S"),
                nonneg("r1", "0", "l2decay inner radius R1 (0 picks R/2)"),
                pos("horizon", "0.5", "time horizon T"),
                pos("c", "80", "universal constant C"),
                pos("dt", "0.001", "time step of evolutions"),
                real("center", "0", "monitor: delta center"),
                pos("level", "10", "monitor: cut-off level"),
                pos("rho", "2", "monitor: cut-off width"),
            ],
        ],
    },
    Subcommand {
        name: "counterexample",
        about: "Nested-integral counterexample: bilaplacian check, bound and growth",
        groups: &[&[
            pos("epsilon", "1", "exponent offset"),
            int("dim", 2, Some("2"), "dimension n"),
            int("intervals", 2, Some("2000"), "output intervals on [0, r_max]"),
            nonneg("r_max", "0", "outer radius (0 picks the overflow-safe default)"),
            pos("t_factor", "10", "growth run to t_factor * F_sup"),
            int("samples", 2, Some("101"), "growth samples"),
        ]],
    },
    Subcommand {
        name: "suite",
        about: "Run the acceptance battery",
        groups: &[&[Param {
            key: "criteria",
            kind: Kind::Path,
            default: Some("all"),
            help: "comma-separated ids or 'all'",
        }]],
    },
];

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    UnknownKey(String),
    TypeMismatch { key: String, value: String, expected: String },
    MissingRequired(String),
    Syntax(String),
    Io { path: PathBuf, message: String },
    Help(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::UnknownKey(k) => write!(f, "unknown key `{k}`"),
            ConfigError::TypeMismatch { key, value, expected } => write!(f, "key `{key}`: `{value}` is not {expected}"),
            ConfigError::MissingRequired(k) => write!(f, "missing required key `{k}`"),
            ConfigError::Syntax(m) => write!(f, "{m}"),
            ConfigError::Io { path, message } => write!(f, "{}: {message}", path.display()),
            ConfigError::Help(text) => write!(f, "{text}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: String,
    pub params: BTreeMap<String, Value>,
}

impl RunConfig {
    pub fn int(&self, key: &str) -> i64 {
        match self.params.get(key) {
            Some(Value::Int(v)) => *v,
            other => panic!("`{key}` is not an integer parameter: {other:?}"),
        }
    }

    pub fn usize(&self, key: &str) -> usize {
        self.int(key) as usize
    }

    pub fn real(&self, key: &str) -> f64 {
        match self.params.get(key) {
            Some(Value::Real(v)) => *v,
            other => panic!("`{key}` is not a real parameter: {other:?}"),
        }
    }

    pub fn str(&self, key: &str) -> &str {
        match self.params.get(key) {
            Some(Value::Str(v)) => v,
            other => panic!("`{key}` is not a string parameter: {other:?}"),
        }
    }

    pub fn path(&self, key: &str) -> Option<&Path> {
        match self.params.get(key) {
            Some(Value::Str(v)) => Some(Path::new(v)),
            _ => None,
        }
    }
}

fn schema(sub: &Subcommand) -> Vec<Param> {
    let mut out: Vec<Param> = sub.groups.iter().flat_map(|g| g.iter().copied()).collect();
    for p in COMMON {
        if !out.iter().any(|q| q.key == p.key) {
            out.push(*p);
        }
    }
    // later groups override earlier ones with the same key
    let mut seen = Vec::new();
    for p in out.into_iter().rev() {
        if !seen.iter().any(|q: &Param| q.key == p.key) {
            seen.push(p);
        }
    }
    seen.reverse();
    seen
}

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

pub fn command() -> Command {
    let mut cmd = Command::new("biharm")
        .about("Numerical experiments for the biharmonic heat equation")
        .subcommand_required(true);
    for sub in SUBCOMMANDS {
        let mut sc = Command::new(sub.name).about(sub.about).arg(
            Arg::new("config").long("config").value_name("FILE").help("flat key=value file; flags take precedence"),
        );
        for p in schema(sub) {
            let mut help = p.help.to_string();
            if let Some(d) = p.default {
                help.push_str(&format!(" [default: {d}]"));
            }
            if let Kind::Enum(vals) = p.kind {
                help.push_str(&format!(" ({})", vals.join("|")));
            }
            sc = sc.arg(
                Arg::new(p.key)
                    .long(flag(p.key))
                    .value_name("VALUE")
                    .allow_hyphen_values(true)
                    .action(ArgAction::Set)
                    .help(help),
            );
        }
        cmd = cmd.subcommand(sc);
    }
    cmd
}

fn parse_value(p: &Param, raw: &str) -> Result<Value, ConfigError> {
    let raw = raw.trim();
    let mismatch = |expected: String| ConfigError::TypeMismatch { key: p.key.into(), value: raw.into(), expected };
    match p.kind {
        Kind::Int { min, max } => {
            let v: i64 = raw.parse().map_err(|_| mismatch("an integer".into()))?;
            if v < min || v > max {
                return Err(mismatch(format!("an integer >= {min}")));
            }
            Ok(Value::Int(v))
        }
        Kind::Real { min, max, open } => {
            let v: f64 = raw.parse().map_err(|_| mismatch("a real number".into()))?;
            let ok = v.is_finite() && v <= max && if open { v > min } else { v >= min };
            if !ok {
                let lo = if open { "(" } else { "[" };
                return Err(mismatch(format!("a finite real in {lo}{min}, {max}]")));
            }
            Ok(Value::Real(v))
        }
        Kind::Enum(vals) => {
            if vals.contains(&raw) {
                Ok(Value::Str(raw.into()))
            } else {
                Err(mismatch(format!("one of {}", vals.join("|"))))
            }
        }
        Kind::Path => {
            if raw.is_empty() {
                Err(mismatch("a nonempty string".into()))
            } else {
                Ok(Value::Str(raw.into()))
            }
        }
    }
}

/// Parses `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_file_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax(format!("line {}: expected key=value, got `{line}`", i + 1)))?;
        out.push((k.trim().replace('-', "_"), v.trim().to_string()));
    }
    Ok(out)
}

/// Parses argv (including the program name) into a validated configuration.
pub fn parse_config<I, S>(argv: I) -> Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let matches = command().try_get_matches_from(argv).map_err(|e| {
        use clap::error::{ContextKind, ContextValue, ErrorKind};
        match e.kind() {
            ErrorKind::DisplayHelp
            | ErrorKind::DisplayVersion
            | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ConfigError::Help(e.render().to_string()),
            ErrorKind::UnknownArgument => {
                let arg = match e.get(ContextKind::InvalidArg) {
                    Some(ContextValue::String(s)) => s.clone(),
                    _ => e.to_string(),
                };
                let key = arg.trim_start_matches('-').split('=').next().unwrap_or("").replace('-', "_");
                ConfigError::UnknownKey(key)
            }
            _ => ConfigError::Syntax(e.render().to_string()),
        }
    })?;
    let (name, sub_m) = matches.subcommand().expect("subcommand required");
    let sub = SUBCOMMANDS.iter().find(|s| s.name == name).expect("registered subcommand");
    let params = schema(sub);

    let mut raw: BTreeMap<String, String> = BTreeMap::new();
    for p in &params {
        if let Some(d) = p.default {
            raw.insert(p.key.into(), d.into());
        }
    }
    if let Some(path) = sub_m.get_one::<String>("config") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: PathBuf::from(path), message: e.to_string() })?;
        for (k, v) in parse_file_text(&text)? {
            if !params.iter().any(|p| p.key == k) {
                return Err(ConfigError::UnknownKey(k));
            }
            raw.insert(k, v);
        }
    }
    for p in &params {
        if let Some(v) = sub_m.get_one::<String>(p.key) {
            raw.insert(p.key.into(), v.clone());
        }
    }

    let mut values = BTreeMap::new();
    for p in &params {
        match raw.get(p.key) {
            Some(v) => {
                values.insert(p.key.to_string(), parse_value(p, v)?);
            }
            None if p.kind == Kind::Path => {}
            None => return Err(ConfigError::MissingRequired(p.key.into())),
        }
    }
    Ok(RunConfig { subcommand: name.to_string(), params: values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_format() {
        let kv = parse_file_text("# comment\ntheta = 0.5\n\nr-max=3 # trailing\n").unwrap();
        assert_eq!(kv, vec![("theta".into(), "0.5".into()), ("r_max".into(), "3".into())]);
        assert!(matches!(parse_file_text("theta 0.5"), Err(ConfigError::Syntax(_))));
    }

    #[test]
    fn schema_has_no_duplicates() {
        for sub in SUBCOMMANDS {
            let s = schema(sub);
            for (i, p) in s.iter().enumerate() {
                assert!(s[i + 1..].iter().all(|q| q.key != p.key), "{} repeats {}", sub.name, p.key);
            }
        }
        command().debug_assert();
    }

    #[test]
    fn kernel_example() {
        let c = parse_config(["biharm", "kernel", "--dim", "2", "--eta-max", "20"]).unwrap();
        assert_eq!(c.subcommand, "kernel");
        assert_eq!(c.int("dim"), 2);
        assert_eq!(c.real("eta_max"), 20.0);
    }

    #[test]
    fn errors_name_the_key() {
        let e = parse_config(["biharm", "kernel", "--dim", "-1"]).unwrap_err();
        assert!(matches!(&e, ConfigError::TypeMismatch { key, .. } if key == "dim"), "{e:?}");
        let e = parse_config(["biharm", "kernel", "--dim", "two"]).unwrap_err();
        assert!(matches!(&e, ConfigError::TypeMismatch { key, .. } if key == "dim"));
        let e = parse_config(["biharm", "kernel"]).unwrap_err();
        assert_eq!(e, ConfigError::MissingRequired("dim".into()));
        let e = parse_config(["biharm", "kernel", "--dim", "1", "--bogus", "3"]).unwrap_err();
        assert_eq!(e, ConfigError::UnknownKey("bogus".into()));
        let e = parse_config(["biharm", "simulate", "--theta", "0.4"]).unwrap_err();
        assert!(matches!(&e, ConfigError::TypeMismatch { key, .. } if key == "theta"));
        let e = parse_config(["biharm", "simulate", "--model", "sphere"]).unwrap_err();
        assert!(matches!(&e, ConfigError::TypeMismatch { key, .. } if key == "model"));
    }
}
