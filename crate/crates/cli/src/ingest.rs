//! Reading one-number-per-line data files.

use std::path::Path;

use qpyramid::{Dataset, UnitAffineMap};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Relative padding applied beyond the data range when no bounds are given.
pub const AUTO_PAD: f64 = 0.001;

#[derive(Debug)]
pub struct Ingested {
    /// Observations in file order, raw scale.
    pub raw: Vec<f64>,
    pub dataset: Dataset,
    pub sha256: String,
}

/// Parses decimal numbers, one per line. Blank lines and lines starting
/// with `#` are skipped.
pub fn parse_values(text: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        match t.parse::<f64>() {
            Ok(x) if x.is_finite() => out.push(x),
            _ => return Err(CliError::Data(format!("line {}: '{t}' is not a finite number", i + 1))),
        }
    }
    Ok(out)
}

pub fn read_file(path: &Path) -> CliResult<(String, String)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let sha = hex::encode(Sha256::digest(&bytes));
    let text = String::from_utf8(bytes).map_err(|_| CliError::Data(format!("{}: not UTF-8 text", path.display())))?;
    Ok((text, sha))
}

/// Loads a data file and maps it onto `[0, 1]`, through `bounds` when
/// given, otherwise through the data range padded by [`AUTO_PAD`].
pub fn ingest(path: &Path, bounds: Option<(f64, f64)>) -> CliResult<Ingested> {
    let (text, sha256) = read_file(path)?;
    let raw = parse_values(&text)?;
    if raw.is_empty() {
        return Err(CliError::Data(format!("{}: no observations", path.display())));
    }
    let affine = match bounds {
        Some((lo, hi)) => UnitAffineMap::new(lo, hi).map_err(|e| CliError::Usage(e.to_string()))?,
        None => {
            UnitAffineMap::fit_padded(&raw, AUTO_PAD).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        }
    };
    let dataset = Dataset::from_raw(&raw, affine).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(Ingested { raw, dataset, sha256 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        assert_eq!(parse_values("# header\n0.3\n\n  0.1 \n").unwrap(), vec![0.3, 0.1]);
    }

    #[test]
    fn bad_line_is_reported() {
        let err = parse_values("0.1\n0.2\nabc\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(parse_values("nan\n").is_err());
    }
}
