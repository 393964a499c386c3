//! ESRI ASCII grid reader.
//!
//! Header keys are case-insensitive: `ncols`, `nrows`, `xllcorner` (or
//! `xllcenter`), `yllcorner` (or `yllcenter`), `cellsize` and the optional
//! `NODATA_value`. Data follows as whitespace separated values, north row
//! first. Each value becomes a grid node at its cell centre.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use super::HeightField;
use crate::error::{Error, Result};

pub fn load_dem(path: impl AsRef<Path>) -> Result<HeightField> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_dem(&text, path)
}

#[derive(Default)]
struct Header {
    ncols: Option<usize>,
    nrows: Option<usize>,
    x_ll: Option<(f64, bool)>,
    y_ll: Option<(f64, bool)>,
    cellsize: Option<f64>,
    nodata: Option<f64>,
}

/// Parses grid text; `path` is only used in error messages.
pub fn parse_dem(text: &str, path: &Path) -> Result<HeightField> {
    let err = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        message,
    };

    let mut lines = text.lines().enumerate().peekable();
    let mut header = Header::default();
    while let Some(&(idx, line)) = lines.peek() {
        let mut parts = line.split_whitespace();
        let Some(key) = parts.next() else {
            lines.next();
            continue;
        };
        if key.parse::<f64>().is_ok() {
            break;
        }
        let lineno = idx + 1;
        let value = parts
            .next()
            .ok_or_else(|| err(lineno, format!("header key `{key}` has no value")))?;
        let num: f64 = value
            .parse()
            .map_err(|_| err(lineno, format!("header value `{value}` is not numeric")))?;
        let as_count = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(err(lineno, format!("`{key}` must be a positive integer, got {value}")))
            }
        };
        match key.to_ascii_lowercase().as_str() {
            "ncols" => header.ncols = Some(as_count(num)?),
            "nrows" => header.nrows = Some(as_count(num)?),
            "xllcorner" => header.x_ll = Some((num, false)),
            "xllcenter" => header.x_ll = Some((num, true)),
            "yllcorner" => header.y_ll = Some((num, false)),
            "yllcenter" => header.y_ll = Some((num, true)),
            "cellsize" => header.cellsize = Some(num),
            "nodata_value" => header.nodata = Some(num),
            other => return Err(err(lineno, format!("unknown header key `{other}`"))),
        }
        lines.next();
    }

    let header_end = lines.peek().map(|&(i, _)| i + 1).unwrap_or(text.lines().count() + 1);
    let missing = |name: &str| err(header_end, format!("missing header key `{name}`"));
    let ncols = header.ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = header.nrows.ok_or_else(|| missing("nrows"))?;
    let (x_ll, x_centered) = header.x_ll.ok_or_else(|| missing("xllcorner"))?;
    let (y_ll, y_centered) = header.y_ll.ok_or_else(|| missing("yllcorner"))?;
    let cellsize = header.cellsize.ok_or_else(|| missing("cellsize"))?;
    if !(cellsize > 0.0 && cellsize.is_finite()) {
        return Err(err(header_end, format!("cellsize must be positive, got {cellsize}")));
    }
    if ncols < 2 || nrows < 2 {
        return Err(err(
            header_end,
            format!("grid must be at least 2x2, got {ncols}x{nrows}"),
        ));
    }

    let mut values: Vec<Option<f64>> = Vec::with_capacity(ncols * nrows);
    let mut last_line = header_end;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != ncols {
            return Err(err(
                lineno,
                format!("expected {ncols} values in row, found {}", tokens.len()),
            ));
        }
        if values.len() >= ncols * nrows {
            return Err(err(lineno, format!("more than {nrows} data rows")));
        }
        for tok in tokens {
            let v: f64 = tok
                .parse()
                .map_err(|_| err(lineno, format!("cell value `{tok}` is not numeric")))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("cell value `{tok}` is not finite")));
            }
            let is_hole = header.nodata.is_some_and(|nd| v == nd);
            values.push((!is_hole).then_some(v));
        }
        last_line = lineno;
    }
    if values.len() != ncols * nrows {
        return Err(err(
            last_line + 1,
            format!(
                "truncated grid: expected {nrows} rows, found {}",
                values.len() / ncols
            ),
        ));
    }

    let heights = fill_holes(&values, ncols, nrows)
        .ok_or_else(|| err(header_end, "grid contains no valid cells".to_string()))?;
    let half = cellsize / 2.0;
    let x_min = if x_centered { x_ll } else { x_ll + half };
    let y_min = if y_centered { y_ll } else { y_ll + half };
    HeightField::new(
        ncols,
        nrows,
        (ncols - 1) as f64 * cellsize,
        (nrows - 1) as f64 * cellsize,
        (x_min, y_min),
        heights,
    )
}

/// Fills holes from the nearest valid cell in grid steps (breadth-first,
/// 4-connected, deterministic neighbour order).
fn fill_holes(values: &[Option<f64>], ncols: usize, nrows: usize) -> Option<Vec<f64>> {
    let mut out: Vec<Option<f64>> = values.to_vec();
    let mut queue: VecDeque<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    if queue.is_empty() {
        return None;
    }
    while let Some(i) = queue.pop_front() {
        let (r, c) = (i / ncols, i % ncols);
        let v = out[i];
        let neighbours = [
            (r > 0).then(|| i - ncols),
            (c + 1 < ncols).then(|| i + 1),
            (r + 1 < nrows).then(|| i + ncols),
            (c > 0).then(|| i - 1),
        ];
        for j in neighbours.into_iter().flatten() {
            if out[j].is_none() {
                out[j] = v;
                queue.push_back(j);
            }
        }
    }
    Some(out.into_iter().map(|v| v.unwrap_or_default()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<HeightField> {
        parse_dem(text, Path::new("test.asc"))
    }

    #[test]
    fn reads_small_grid_in_raster_order() {
        let hf = parse(
            "ncols 2\nnrows 2\nxllcorner 100\nyllcorner 200\ncellsize 1\nNODATA_value -9999\n0 1\n2 3\n",
        )
        .unwrap();
        assert_eq!(hf.heights(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!((hf.nx(), hf.ny()), (2, 2));
        assert_eq!(hf.dx(), 1.0);
        // North row first: the first value sits at the north-west node.
        assert_eq!(hf.sample_height(100.5, 201.5).unwrap(), 0.0);
        assert_eq!(hf.sample_height(101.5, 200.5).unwrap(), 3.0);
    }

    #[test]
    fn fills_nodata_from_nearest_neighbour() {
        let hf = parse(
            "NCOLS 3\nNROWS 3\nXLLCENTER 0\nYLLCENTER 0\nCELLSIZE 2\nNODATA_VALUE -9999\n\
             1 1 1\n1 -9999 5\n1 1 1\n",
        )
        .unwrap();
        let filled = hf.node_height(1, 1);
        assert_eq!(filled, 1.0);
        assert!(hf.heights().iter().all(|&h| h != -9999.0));
    }

    #[test]
    fn truncated_file_names_the_line() {
        let e = parse("ncols 2\nnrows 3\nxllcorner 0\nyllcorner 0\ncellsize 1\n0 1\n2 3\n").unwrap_err();
        match e {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 8);
                assert!(message.contains("truncated"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ragged_and_non_numeric_rows_fail() {
        let ragged =
            parse("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n0 1 7\n2 3\n").unwrap_err();
        assert!(matches!(ragged, Error::Parse { line: 6, .. }));
        let junk =
            parse("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n0 1\n2 x\n").unwrap_err();
        assert!(matches!(junk, Error::Parse { line: 7, .. }));
        let bad_header = parse("ncols two\nnrows 2\n").unwrap_err();
        assert!(matches!(bad_header, Error::Parse { line: 1, .. }));
        let missing = parse("ncols 2\nnrows 2\nxllcorner 0\n0 1\n2 3\n").unwrap_err();
        assert!(matches!(missing, Error::Parse { line: 4, .. }));
    }

    #[test]
    fn loads_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tile.asc");
        std::fs::write(
            &path,
            "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 0.5\n1 2 3\n4 5 6\n",
        )
        .unwrap();
        let hf = load_dem(&path).unwrap();
        assert_eq!(hf.width(), 1.0);
        assert_eq!(hf.depth(), 0.5);
        assert!(load_dem(dir.path().join("missing.asc")).is_err());
    }
}
