//! CSV ingestion for bivariate data files with header `w1,w2`.

use std::fs;
use std::path::Path;

use trunc_ellipse_core::{Error, Result};

/// An in-memory bivariate data set.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub rows: Vec<[f64; 2]>,
    pub source_path: String,
    pub n: usize,
}

/// Parse a two-column CSV with header `w1,w2`; rejects NaN and infinities.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "w1,w2" => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header \"w1,w2\", found {header:?}"),
            })
        }
        None => return Err(Error::Parse { line: 1, message: "empty file".to_string() }),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut field = |name: &str| -> Result<f64> {
            let raw = parts.next().ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("missing column {name}"),
            })?;
            let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("cannot parse {raw:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-finite value {raw:?}"),
                });
            }
            Ok(v)
        };
        let w1 = field("w1")?;
        let w2 = field("w2")?;
        if parts.next().is_some() {
            return Err(Error::Parse {
                line: line_no,
                message: "expected exactly two columns".to_string(),
            });
        }
        rows.push([w1, w2]);
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 1, message: "no data rows".to_string() });
    }
    let n = rows.len();
    Ok(Dataset { rows, source_path: path.display().to_string(), n })
}

/// Write a data set back out in the `w1,w2` format. Shortest round-trip
/// float formatting keeps save/load bit-exact.
#[cfg_attr(not(test), allow(dead_code))]
pub fn save_csv(path: &Path, rows: &[[f64; 2]]) -> Result<()> {
    let mut out = String::from("w1,w2\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r[0], r[1]));
    }
    fs::write(path, out).map_err(|e| Error::Parse {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })
}
