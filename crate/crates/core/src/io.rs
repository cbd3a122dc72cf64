//! CSV and JSON formats for patterns, posteriors, curves and priors.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! emitted file parses back to bit-identical values.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::abc::AbcPosterior;
use crate::error::{Error, Result};
use crate::geometry::{Point, PointPattern, Window};
use crate::params::{ModelKind, ModelParams};
use crate::prior::PriorSpec;
use crate::samplers::TraceRecord;
use crate::summaries::{Curve, SummaryConfig, SummaryVector};

const WINDOW_TAG: &str = "# window";

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct WindowJson {
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

/// Sidecar carrying the window of `pattern.csv`: `pattern.window.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("window.json")
}

pub fn window_from_json(text: &str) -> Result<Window> {
    let w: WindowJson = serde_json::from_str(text)?;
    Window::new(w.xmin, w.xmax, w.ymin, w.ymax)
}

pub fn window_to_json(w: &Window) -> String {
    let j = WindowJson { xmin: w.xmin(), xmax: w.xmax(), ymin: w.ymin(), ymax: w.ymax() };
    serde_json::to_string_pretty(&j).expect("plain struct serializes")
}

fn parse_window_line(line: &str, lineno: usize) -> Result<Window> {
    let rest = line[WINDOW_TAG.len()..].trim();
    let v: Vec<f64> = rest
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse { line: lineno, msg: format!("window header: {e}") })?;
    if v.len() != 4 {
        return Err(Error::Parse { line: lineno, msg: "window header needs xmin xmax ymin ymax".into() });
    }
    Window::new(v[0], v[1], v[2], v[3])
}

/// Parse a pattern CSV. The window comes from a `# window` comment line,
/// falling back to `sidecar`. Every malformed or out-of-window row is
/// reported, not just the first.
pub fn parse_pattern(text: &str, sidecar: Option<Window>) -> Result<PointPattern> {
    let mut window = None;
    let mut header_seen = false;
    let mut rows: Vec<(usize, f64, f64)> = Vec::new();
    let mut problems = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with(WINDOW_TAG) {
            window = Some(parse_window_line(line, lineno)?);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        if !header_seen {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["x", "y"] {
                return Err(Error::Parse { line: lineno, msg: format!("expected header `x,y`, found `{line}`") });
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match fields.as_slice() {
            [x, y] => match (x.parse::<f64>(), y.parse::<f64>()) {
                (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => rows.push((lineno, x, y)),
                _ => problems.push(format!("line {lineno}: not a pair of finite numbers: `{line}`")),
            },
            _ => problems.push(format!("line {lineno}: expected 2 fields, found {}", fields.len())),
        }
    }
    if !header_seen {
        return Err(Error::Parse { line: 0, msg: "missing `x,y` header".into() });
    }
    let window = window.or(sidecar).ok_or_else(|| {
        Error::InvalidWindow("no `# window` header line and no sidecar window".into())
    })?;
    for &(lineno, x, y) in &rows {
        if !window.contains(&Point::new(x, y)) {
            problems.push(format!("line {lineno}: point ({x}, {y}) outside the window"));
        }
    }
    if !problems.is_empty() {
        return Err(Error::MalformedPattern(problems));
    }
    PointPattern::new(window, rows.into_iter().map(|(_, x, y)| Point::new(x, y)).collect())
}

pub fn read_pattern(path: &Path) -> Result<PointPattern> {
    let text = fs::read_to_string(path)?;
    let side = sidecar_path(path);
    let sidecar = if side.exists() { Some(window_from_json(&fs::read_to_string(side)?)?) } else { None };
    parse_pattern(&text, sidecar)
}

pub fn pattern_to_csv(pattern: &PointPattern) -> String {
    let w = pattern.window();
    let mut s = format!("{WINDOW_TAG} {} {} {} {}\nx,y\n", w.xmin(), w.xmax(), w.ymin(), w.ymax());
    for p in pattern.points() {
        writeln!(s, "{},{}", p.x, p.y).unwrap();
    }
    s
}

pub const POSTERIOR_HEADER: &str = "mu,sigma2,s,gamma,R";

/// One row per draw with all five parameters; fixed parameters of a
/// sub-model carry their fixed values.
pub fn posterior_to_csv(posterior: &AbcPosterior) -> Result<String> {
    let mut s = format!("{POSTERIOR_HEADER}\n");
    for row in &posterior.samples {
        let p = posterior.kind.expand(row)?;
        let a = p.to_array();
        writeln!(s, "{},{},{},{},{}", a[0], a[1], a[2], a[3], a[4]).unwrap();
    }
    Ok(s)
}

pub fn parse_posterior(text: &str) -> Result<Vec<ModelParams>> {
    let rows = parse_numeric_table(text, &POSTERIOR_HEADER.split(',').collect::<Vec<_>>())?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            ModelParams::new(r[0], r[1], r[2], r[3], r[4])
                .map_err(|e| Error::Parse { line: i + 2, msg: e.to_string() })
        })
        .collect()
}

/// Free-parameter rows for `kind`; the fixed columns must hold the
/// sub-model's fixed values.
pub fn posterior_free_rows(params: &[ModelParams], kind: ModelKind) -> Result<Vec<Vec<f64>>> {
    params
        .iter()
        .map(|p| {
            let free = kind.project(p);
            if kind.expand(&free)? != *p {
                return Err(Error::Mismatch(format!("posterior row {:?} is not a {kind} parameter", p.to_array())));
            }
            Ok(free)
        })
        .collect()
}

pub fn read_posterior(path: &Path) -> Result<Vec<ModelParams>> {
    parse_posterior(&fs::read_to_string(path)?)
}

/// Rows of a headed CSV whose columns must equal `expected`.
pub fn parse_numeric_table(text: &str, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != expected {
        return Err(Error::Parse { line: 1, msg: format!("expected header `{}`", expected.join(",")) });
    }
    lines
        .map(|(i, l)| {
            let v: Vec<f64> = l
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
            if v.len() != expected.len() {
                return Err(Error::Parse { line: i + 1, msg: format!("expected {} fields", expected.len()) });
            }
            Ok(v)
        })
        .collect()
}

pub fn curve_to_csv(curve: &Curve) -> String {
    let mut buf = Vec::new();
    curve.write_csv(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii")
}

pub fn parse_curve(text: &str) -> Result<Curve> {
    let rows = parse_numeric_table(text, &["r", "value", "defined"])?;
    let r = rows.iter().map(|v| v[0]).collect();
    let values = rows.iter().map(|v| v[1]).collect();
    let defined = rows.iter().map(|v| v[2] != 0.0).collect();
    Curve::new(r, values, defined)
}

/// `name,value` rows in summary order.
pub fn summary_to_csv(t: &SummaryVector, cfg: &SummaryConfig) -> String {
    let mut s = String::from("name,value\n");
    for (name, v) in cfg.names().iter().zip(&t.values) {
        writeln!(s, "{name},{v}").unwrap();
    }
    s
}

pub fn parse_summary(text: &str, cfg: &SummaryConfig) -> Result<SummaryVector> {
    let names = cfg.names();
    let mut values = Vec::with_capacity(names.len());
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some("name,value") {
        return Err(Error::Parse { line: 1, msg: "expected header `name,value`".into() });
    }
    for (i, line) in lines.enumerate() {
        let (name, v) = line
            .split_once(',')
            .ok_or(Error::Parse { line: i + 2, msg: "expected `name,value`".into() })?;
        if names.get(i).map(String::as_str) != Some(name) {
            return Err(Error::Parse { line: i + 2, msg: format!("unexpected summary name `{name}`") });
        }
        values.push(v.trim().parse().map_err(|e| Error::Parse { line: i + 2, msg: format!("{e}") })?);
    }
    if values.len() != names.len() {
        return Err(Error::Mismatch(format!("expected {} summaries, found {}", names.len(), values.len())));
    }
    Ok(SummaryVector::new(values))
}

pub const TRACE_HEADER: &str = "iter,n,sR,init_label";

pub fn traces_to_csv(traces: &[(&str, &[TraceRecord])]) -> String {
    let mut s = format!("{TRACE_HEADER}\n");
    for (label, recs) in traces {
        for r in recs.iter() {
            writeln!(s, "{},{},{},{label}", r.iter, r.n, r.close_pairs).unwrap();
        }
    }
    s
}

pub fn parse_traces(text: &str) -> Result<Vec<(String, TraceRecord)>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    if lines.next().map(|(_, l)| l.trim()) != Some(TRACE_HEADER) {
        return Err(Error::Parse { line: 1, msg: format!("expected header `{TRACE_HEADER}`") });
    }
    lines
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = |m: String| Error::Parse { line: i + 1, msg: m };
            if f.len() != 4 {
                return Err(bad("expected 4 fields".into()));
            }
            let rec = TraceRecord {
                iter: f[0].parse().map_err(|e| bad(format!("{e}")))?,
                n: f[1].parse().map_err(|e| bad(format!("{e}")))?,
                close_pairs: f[2].parse().map_err(|e| bad(format!("{e}")))?,
            };
            Ok((f[3].to_string(), rec))
        })
        .collect()
}

/// Prior config: either a preset name (`"p1"`, `"oak"`, ...) or a full
/// specification object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorConfig {
    Preset(String),
    Spec(PriorSpec),
}

impl PriorConfig {
    pub fn resolve(&self) -> Result<PriorSpec> {
        let p = match self {
            PriorConfig::Preset(name) => PriorSpec::preset(name)?,
            PriorConfig::Spec(s) => *s,
        };
        p.validate()?;
        Ok(p)
    }
}

pub fn read_prior(path: &Path) -> Result<PriorSpec> {
    let cfg: PriorConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
    cfg.resolve()
}

/// Write `contents` to `path` via a temporary file and rename, so readers
/// never see a half-written artifact.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(contents)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}
