//! Dense matrix files: comma-separated text and MatrixMarket.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: expected {expected} values, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("unsupported MatrixMarket header: {0}")]
    Unsupported(String),
    #[error("no data")]
    Empty,
}

impl IoError {
    pub fn category(&self) -> &'static str {
        match self {
            IoError::Io { .. } => "io",
            IoError::Parse { .. } | IoError::Ragged { .. } | IoError::Empty => "parse",
            IoError::Unsupported(_) => "unsupported-format",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    MatrixMarket,
}

impl Format {
    /// `.mtx` and `.mm` are MatrixMarket, anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("mtx" | "mm") => Format::MatrixMarket,
            _ => Format::Csv,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_matrix(path: &Path, format: Format) -> Result<DMatrix<f64>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    match format {
        Format::Csv => parse_csv(&text),
        Format::MatrixMarket => parse_matrix_market(&text),
    }
}

/// Reads with the format implied by the extension.
pub fn read_matrix_auto(path: &Path) -> Result<DMatrix<f64>, IoError> {
    read_matrix(path, Format::from_path(path))
}

fn number(tok: &str, line: usize) -> Result<f64, IoError> {
    let tok = tok.trim();
    tok.parse::<f64>().map_err(|_| IoError::Parse {
        line,
        msg: format!("not a number: {tok:?}"),
    })
}

/// Comma-separated rows; blank lines and lines starting with `#` are skipped.
pub fn parse_csv(text: &str) -> Result<DMatrix<f64>, IoError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let row = t
            .split(',')
            .map(|tok| number(tok, line))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(IoError::Ragged {
                    line,
                    expected: first.len(),
                    found: row.len(),
                });
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().ok_or(IoError::Empty)?.len();
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    Skew,
}

/// `array` or `coordinate` layout, `real`/`integer`/`double` field,
/// `general`/`symmetric`/`skew-symmetric` symmetry.
pub fn parse_matrix_market(text: &str) -> Result<DMatrix<f64>, IoError> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim()));
    let (_, header) = lines.next().ok_or(IoError::Empty)?;
    let words: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(IoError::Unsupported(header.to_string()));
    }
    let coordinate = match words[2].as_str() {
        "array" => false,
        "coordinate" => true,
        _ => return Err(IoError::Unsupported(header.to_string())),
    };
    if !matches!(words[3].as_str(), "real" | "integer" | "double") {
        return Err(IoError::Unsupported(header.to_string()));
    }
    let symmetry = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::Skew,
        _ => return Err(IoError::Unsupported(header.to_string())),
    };
    let mut data = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let (size_line, size) = data.next().ok_or(IoError::Empty)?;
    let dims = size
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>().map_err(|_| IoError::Parse {
                line: size_line,
                msg: format!("bad size {t:?}"),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let expected = if coordinate { 3 } else { 2 };
    if dims.len() != expected {
        return Err(IoError::Ragged {
            line: size_line,
            expected,
            found: dims.len(),
        });
    }
    let (m, n) = (dims[0], dims[1]);
    if symmetry != Symmetry::General && m != n {
        return Err(IoError::Parse {
            line: size_line,
            msg: "symmetric storage needs a square matrix".into(),
        });
    }
    let mut a = DMatrix::zeros(m, n);
    let mirror = |a: &mut DMatrix<f64>, i: usize, j: usize, v: f64| {
        a[(i, j)] = v;
        match symmetry {
            Symmetry::General => {}
            Symmetry::Symmetric => a[(j, i)] = v,
            Symmetry::Skew => a[(j, i)] = -v,
        }
    };
    if coordinate {
        let nnz = dims[2];
        let mut count = 0;
        for (line, l) in data {
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(IoError::Ragged {
                    line,
                    expected: 3,
                    found: toks.len(),
                });
            }
            let index = |t: &str, bound: usize| -> Result<usize, IoError> {
                match t.parse::<usize>() {
                    Ok(k) if (1..=bound).contains(&k) => Ok(k - 1),
                    _ => Err(IoError::Parse {
                        line,
                        msg: format!("index {t:?} outside 1..={bound}"),
                    }),
                }
            };
            let (i, j) = (index(toks[0], m)?, index(toks[1], n)?);
            mirror(&mut a, i, j, number(toks[2], line)?);
            count += 1;
        }
        if count != nnz {
            return Err(IoError::Parse {
                line: size_line,
                msg: format!("declared {nnz} entries, found {count}"),
            });
        }
    } else {
        // column-major; symmetric storage lists the lower triangle only
        let positions: Vec<(usize, usize)> = (0..n)
            .flat_map(|j| (0..m).map(move |i| (i, j)))
            .filter(|&(i, j)| match symmetry {
                Symmetry::General => true,
                Symmetry::Symmetric => i >= j,
                Symmetry::Skew => i > j,
            })
            .collect();
        let mut values = Vec::with_capacity(positions.len());
        for (line, l) in data {
            for t in l.split_whitespace() {
                values.push((number(t, line)?, line));
            }
        }
        if values.len() != positions.len() {
            return Err(IoError::Parse {
                line: values.last().map_or(size_line, |v| v.1),
                msg: format!("expected {} values, found {}", positions.len(), values.len()),
            });
        }
        for (&(i, j), &(v, _)) in positions.iter().zip(&values) {
            mirror(&mut a, i, j, v);
        }
    }
    Ok(a)
}

/// 17 significant digits: enough to round-trip every `f64`.
fn fmt_value(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String");
}

pub fn format_csv(a: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if j > 0 {
                out.push(',');
            }
            fmt_value(&mut out, a[(i, j)]);
        }
        out.push('\n');
    }
    out
}

/// Array layout, general symmetry.
pub fn format_matrix_market(a: &DMatrix<f64>) -> String {
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    writeln!(out, "{} {}", a.nrows(), a.ncols()).expect("writing to a String");
    for v in a.iter() {
        fmt_value(&mut out, *v);
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, a: &DMatrix<f64>, format: Format) -> Result<(), IoError> {
    let text = match format {
        Format::Csv => format_csv(a),
        Format::MatrixMarket => format_matrix_market(a),
    };
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn create_dir(path: &Path) -> Result<(), IoError> {
    fs::create_dir_all(path).map_err(io_err(path))
}
