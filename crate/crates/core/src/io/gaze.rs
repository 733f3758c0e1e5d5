//! Plain-text gaze grids: a `rows cols` line, then row-major non-negative values.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{AttentionGrid, Grid};

/// File name of the gaze grid for dataset record `index`.
pub fn gaze_file_name(index: usize) -> String {
    format!("gaze_{:05}.txt", index)
}

/// Whitespace-separated tokens with their byte offsets.
fn tokens(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let base = text.as_ptr() as usize;
    text.split_ascii_whitespace()
        .map(move |t| (t.as_ptr() as usize - base, t))
}

/// Parses and normalizes a gaze grid.
pub fn parse_gaze(text: &str) -> Result<AttentionGrid> {
    let mut it = tokens(text);
    let mut dim = |what: &str| -> Result<usize> {
        let (at, t) = it
            .next()
            .ok_or_else(|| Error::parse(text.len(), format!("missing {}", what)))?;
        match t.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::parse(at, format!("{} '{}' is not a positive integer", what, t))),
        }
    };
    let rows = dim("rows")?;
    let cols = dim("cols")?;
    let n = rows
        .checked_mul(cols)
        .filter(|n| *n <= text.len())
        .ok_or_else(|| Error::parse(0, format!("{}x{} grid cannot fit in {} bytes", rows, cols, text.len())))?;
    let mut values = Vec::with_capacity(n);
    for (at, t) in it.by_ref().take(n) {
        let v: f64 = t
            .parse()
            .map_err(|_| Error::parse(at, format!("'{}' is not a number", t)))?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::parse(at, format!("gaze value {} must be finite and non-negative", v)));
        }
        values.push(v);
    }
    if values.len() < n {
        return Err(Error::parse(
            text.len(),
            format!("expected {} values, found {}", n, values.len()),
        ));
    }
    if let Some((at, _)) = it.next() {
        return Err(Error::parse(at, "trailing data after grid values"));
    }
    let grid = Grid::new(rows, cols, values)?;
    if grid.sum() <= 0.0 || !grid.sum().is_finite() {
        return Err(Error::parse(0, "gaze grid must have a positive finite sum"));
    }
    AttentionGrid::normalize(grid).map_err(|e| Error::parse(0, e.to_string()))
}

pub fn format_grid(grid: &Grid) -> String {
    let mut out = format!("{} {}\n", grid.rows(), grid.cols());
    for i in 0..grid.rows() {
        let row: Vec<String> = (0..grid.cols()).map(|j| format!("{}", grid.get(i, j))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn read_gaze(path: &Path) -> Result<AttentionGrid> {
    parse_gaze(&std::fs::read_to_string(path)?)
}

/// Gaze grids for records `0..count` from `dir`; missing files give `None`.
pub fn read_gaze_dir(dir: &Path, count: usize) -> Result<Vec<Option<AttentionGrid>>> {
    (0..count)
        .map(|i| {
            let p = dir.join(gaze_file_name(i));
            if p.exists() {
                read_gaze(&p).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_normalizes() {
        let g = parse_gaze("2 3\n1 0 1\n0 2 0\n").unwrap();
        assert_eq!((g.rows(), g.cols()), (2, 3));
        assert_eq!(g.values(), &[0.25, 0.0, 0.25, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn format_round_trips() {
        let grid = Grid::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let back = parse_gaze(&format_grid(&grid)).unwrap();
        for (a, b) in back.values().iter().zip(grid.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn errors_carry_offsets() {
        let cases: [(&str, usize); 6] = [
            ("", 0),
            ("2 x\n", 2),
            ("1 2\n1 -1\n", 6),
            ("1 2\n1 nan\n", 6),
            ("1 2\n1\n", 6),
            ("1 1\n1 9\n", 6),
        ];
        for (text, offset) in cases {
            match parse_gaze(text) {
                Err(Error::Parse { offset: o, .. }) => assert_eq!(o, offset, "{:?}", text),
                other => panic!("{:?} gave {:?}", text, other),
            }
        }
        assert!(matches!(parse_gaze("1 2\n0 0\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_gaze("99999999 99999999\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn directory_lookup_is_keyed_by_index() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(gaze_file_name(1)), "1 2\n1 3\n").unwrap();
        let got = read_gaze_dir(dir.path(), 3).unwrap();
        assert!(got[0].is_none() && got[2].is_none());
        assert_eq!(got[1].as_ref().unwrap().values(), &[0.25, 0.75]);
    }
}
