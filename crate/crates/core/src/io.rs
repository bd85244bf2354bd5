//! Model and path files in TOML or JSON.
//!
//! ```toml
//! dim = 2
//!
//! [[terms]]
//! p = 2
//! coef = [[1.0, 0.5], [0.5, 1.0]]   # or row-major [1.0, 0.5, 0.5, 1.0]
//!
//! [[atoms]]
//! tau = [1.0, 0.0]
//! weight = 0.5
//! ```
//!
//! A path file holds `breakpoints = [0.0, ..., 1.0]` and `values`, a list of
//! matrices in either layout. Semantic errors are reported against the line
//! where the offending entry starts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cascade::ParisiPath;
use crate::cone::SymMatrix;
use crate::error::{Error, Result};
use crate::model::{Atom, ModelXi, SpinMeasure, XiTerm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

/// A matrix written as nested rows, a flat row-major list or a scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixRepr {
    Scalar(f64),
    Flat(Vec<f64>),
    Nested(Vec<Vec<f64>>),
}

impl MatrixRepr {
    pub fn to_sym(&self, dim: usize) -> Result<SymMatrix> {
        match self {
            MatrixRepr::Scalar(v) if dim == 1 => Ok(SymMatrix::scalar(*v)),
            MatrixRepr::Scalar(_) => Err(Error::InvalidArgument(format!(
                "scalar given where a {dim}x{dim} matrix is expected"
            ))),
            MatrixRepr::Flat(v) => SymMatrix::from_row_major(dim, v),
            MatrixRepr::Nested(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::InvalidArgument(format!("expected {dim} rows of length {dim}")));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                let m = SymMatrix::from_row_major(dim, &flat)?;
                if m.to_row_major() != flat {
                    return Err(Error::InvalidArgument("matrix is not symmetric".into()));
                }
                Ok(m)
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    p: u32,
    coef: MatrixRepr,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAtom {
    tau: Vec<f64>,
    weight: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    dim: usize,
    terms: Vec<RawTerm>,
    atoms: Vec<RawAtom>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPath {
    breakpoints: Vec<f64>,
    values: Vec<MatrixRepr>,
}

/// A model file: the covariance function and the single-spin measure.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub xi: ModelXi,
    pub measure: SpinMeasure,
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<ModelSpec> {
    let text = read_to_string(path)?;
    parse_model(&text, Format::from_path(path), &path.display().to_string())
}

pub fn load_path(path: &Path) -> Result<ParisiPath> {
    let text = read_to_string(path)?;
    parse_path(&text, Format::from_path(path), &path.display().to_string())
}

pub fn parse_model(text: &str, format: Format, file: &str) -> Result<ModelSpec> {
    let raw: RawModel = deserialize(text, format, file)?;
    let err = |key: &str, index: Option<usize>, message: String| Error::Parse {
        file: file.to_string(),
        line: locate(text, key, index),
        message,
    };
    if raw.dim == 0 {
        return Err(err("dim", None, "dim must be positive".into()));
    }
    let mut terms = Vec::with_capacity(raw.terms.len());
    for (i, t) in raw.terms.iter().enumerate() {
        let coef = t
            .coef
            .to_sym(raw.dim)
            .map_err(|e| err("terms", Some(i), format!("term {}: {e}", i + 1)))?;
        let term = XiTerm { p: t.p, coef };
        ModelXi::new(raw.dim, vec![term.clone()]).map_err(|e| err("terms", Some(i), format!("term {}: {e}", i + 1)))?;
        terms.push(term);
    }
    let xi = ModelXi::new(raw.dim, terms).map_err(|e| err("terms", None, e.to_string()))?;
    let atoms: Vec<Atom> = raw
        .atoms
        .into_iter()
        .map(|a| Atom {
            tau: a.tau,
            weight: a.weight,
        })
        .collect();
    for (i, a) in atoms.iter().enumerate() {
        // Check each atom alone (with weight forced to 1) for a precise line.
        SpinMeasure::new(
            raw.dim,
            vec![Atom {
                tau: a.tau.clone(),
                weight: 1.0,
            }],
        )
        .and_then(|_| {
            if a.weight > 0.0 && a.weight.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidMeasure(format!("weight {} must be positive", a.weight)))
            }
        })
        .map_err(|e| err("atoms", Some(i), format!("atom {}: {e}", i + 1)))?;
    }
    let measure = SpinMeasure::new(raw.dim, atoms).map_err(|e| err("atoms", None, e.to_string()))?;
    Ok(ModelSpec { xi, measure })
}

pub fn parse_path(text: &str, format: Format, file: &str) -> Result<ParisiPath> {
    let raw: RawPath = deserialize(text, format, file)?;
    let err = |key: &str, index: Option<usize>, message: String| Error::Parse {
        file: file.to_string(),
        line: locate(text, key, index),
        message,
    };
    let dim = match raw.values.first() {
        None => return Err(err("values", None, "path has no values".into())),
        Some(MatrixRepr::Scalar(_)) => 1,
        Some(MatrixRepr::Flat(v)) => (v.len() as f64).sqrt().round() as usize,
        Some(MatrixRepr::Nested(rows)) => rows.len(),
    };
    let mut values = Vec::with_capacity(raw.values.len());
    for (i, v) in raw.values.iter().enumerate() {
        values.push(
            v.to_sym(dim)
                .map_err(|e| err("values", Some(i), format!("level {}: {e}", i + 1)))?,
        );
    }
    // Report the first non-monotone level against its own line.
    if let Err(Error::OrderViolation {
        context,
        min_eigenvalue,
        tol,
    }) = crate::cone::PsdChain::new(values.clone(), crate::cone::PSD_TOL)
    {
        let level = context
            .rsplit(' ')
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .unwrap_or(1);
        return Err(err(
            "values",
            Some(level - 1),
            format!("level {level} breaks monotonicity: min eigenvalue of increment {min_eigenvalue:e} below -{tol:e}"),
        ));
    }
    ParisiPath::new(raw.breakpoints, values).map_err(|e| err("breakpoints", None, e.to_string()))
}

pub(crate) fn deserialize<T: for<'de> Deserialize<'de>>(text: &str, format: Format, file: &str) -> Result<T> {
    match format {
        Format::Toml => toml::from_str(text).map_err(|e| Error::Parse {
            file: file.to_string(),
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
            message: e.message().to_string(),
        }),
        Format::Json => serde_json::from_str(text).map_err(|e| Error::Parse {
            file: file.to_string(),
            line: e.line().max(1),
            message: e.to_string(),
        }),
    }
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Best-effort line of `key` (or of element `index` of the array under
/// `key`) in TOML or JSON text. Falls back to the key's line, then to 1.
pub(crate) fn locate(text: &str, key: &str, index: Option<usize>) -> usize {
    // TOML arrays of tables: the i-th `[[key]]` header.
    let header = format!("[[{key}]]");
    let headers: Vec<usize> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| l.trim_start().starts_with(&header))
        .map(|(i, _)| i + 1)
        .collect();
    if !headers.is_empty() {
        return index.and_then(|i| headers.get(i).copied()).unwrap_or(headers[0]);
    }
    let Some(key_at) = find_key(text, key) else {
        return 1;
    };
    let key_line = line_of(text, key_at);
    let Some(i) = index else {
        return key_line;
    };
    element_offset(text, key_at, i)
        .map(|o| line_of(text, o))
        .unwrap_or(key_line)
}

/// Offset of `key` used as a key (bare or quoted, followed by `=` or `:`).
fn find_key(text: &str, key: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(pos) = text[from..].find(key) {
        let start = from + pos;
        let end = start + key.len();
        from = end;
        let before = if start == 0 { b'\n' } else { bytes[start - 1] };
        let quoted = before == b'"';
        if !(quoted || before.is_ascii_whitespace() || before == b'{' || before == b',') {
            continue;
        }
        let mut j = end;
        if quoted {
            if bytes.get(j) != Some(&b'"') {
                continue;
            }
            j += 1;
        }
        while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t') {
            j += 1;
        }
        if matches!(bytes.get(j), Some(b'=') | Some(b':')) {
            return Some(start);
        }
    }
    None
}

/// Offset of element `index` of the array that follows the key at `key_at`.
fn element_offset(text: &str, key_at: usize, index: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let open = key_at + text[key_at..].find('[')?;
    let mut depth = 0usize;
    let mut count = 0usize;
    let mut expecting = true;
    let mut i = open;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'"' => {
                if depth == 1 && expecting {
                    if count == index {
                        return Some(i);
                    }
                    expecting = false;
                }
                i += 1;
                while i < bytes.len() && bytes[i] != b'"' {
                    if bytes[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
            }
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'[' | b'{' => {
                if depth == 1 && expecting {
                    if count == index {
                        return Some(i);
                    }
                    expecting = false;
                }
                depth += 1;
            }
            b']' | b'}' => {
                depth -= 1;
                if depth == 0 {
                    return None;
                }
            }
            b',' if depth == 1 => {
                count += 1;
                expecting = true;
            }
            c if depth == 1 && expecting && !c.is_ascii_whitespace() => {
                if count == index {
                    return Some(i);
                }
                expecting = false;
            }
            _ => {}
        }
        i += 1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL: &str = r#"
dim = 2

[[terms]]
p = 2
coef = [[1.0, 0.5], [0.5, 1.0]]

[[atoms]]
tau = [1.0, 0.0]
weight = 0.5

[[atoms]]
tau = [0.6, 0.8]
weight = 0.5
"#;

    #[test]
    fn parses_toml_model() {
        let spec = parse_model(MODEL, Format::Toml, "m.toml").unwrap();
        assert_eq!(spec.xi.dim(), 2);
        assert_eq!(spec.measure.len(), 2);
    }

    #[test]
    fn flat_and_json_layouts() {
        let json = r#"{
  "dim": 1,
  "terms": [
    {"p": 2, "coef": [0.25]}
  ],
  "atoms": [
    {"tau": [1.0], "weight": 0.5},
    {"tau": [-1.0], "weight": 0.5}
  ]
}"#;
        let spec = parse_model(json, Format::Json, "m.json").unwrap();
        assert_eq!(spec.xi.eval(&SymMatrix::scalar(2.0)), 1.0);
    }

    #[test]
    fn odd_power_reports_its_line() {
        let bad = MODEL.replace("p = 2", "p = 3");
        match parse_model(&bad, Format::Toml, "m.toml") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_atom_outside_ball_reports_its_line() {
        let json = "{\n\"dim\": 1,\n\"terms\": [{\"p\": 2, \"coef\": 1.0}],\n\"atoms\": [\n  {\"tau\": [1.0], \"weight\": 0.5},\n  {\"tau\": [-2.0], \"weight\": 0.5}\n]\n}";
        match parse_model(json, Format::Json, "m.json") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 6, "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_line() {
        match parse_model("dim = 1\nterms = [\n", Format::Toml, "m.toml") {
            Err(Error::Parse { line, .. }) => assert!(line >= 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn path_monotonicity_violation_names_level() {
        let text = "breakpoints = [0.0, 0.3, 0.7, 1.0]\nvalues = [\n  [[0.1]],\n  [[0.5]],\n  [[0.2]],\n]\n";
        match parse_path(text, Format::Toml, "p.toml") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 5);
                assert!(message.contains("level 3"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let ok = text.replace("[[0.2]]", "[[0.9]]");
        assert_eq!(parse_path(&ok, Format::Toml, "p.toml").unwrap().k(), 3);
    }
}
