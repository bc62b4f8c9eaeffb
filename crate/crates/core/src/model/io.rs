//! Plain-text realization dumps.
//!
//! ```text
//! # realization d=2 n=2
//! 0 0 1.5 0.35
//! 0 1 1.5 -0.35
//! ...
//! ```
//!
//! Lines starting with `#` are comments; every other line is
//! `robot side x y [z]`.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use super::{Realization, SensorIndex};
use crate::error::{Error, Result};

pub fn write_realization<W: Write>(mut w: W, p: &Realization) -> Result<()> {
    writeln!(w, "# realization d={} n={}", p.d(), p.n_robots())?;
    for k in 0..p.matrix().ncols() {
        let s = SensorIndex::from_flat(k);
        write!(w, "{} {}", s.robot, s.side)?;
        for x in p.matrix().column(k).iter() {
            write!(w, " {x:.17e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_realization<R: BufRead>(r: R) -> Result<Realization> {
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: &str| Error::Parse(format!("line {}: {m}", lineno + 1));
        let mut fields = line.split_whitespace();
        let robot: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| bad("bad robot index"))?;
        let side: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .filter(|&s| s < 2)
            .ok_or_else(|| bad("bad sensor side"))?;
        let coords = fields
            .map(|f| f.parse::<f64>().map_err(|_| bad("bad coordinate")))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((SensorIndex::new(robot, side).flat(), coords));
    }
    let d = rows.first().map_or(0, |r| r.1.len());
    if d != 2 && d != 3 {
        return Err(Error::Parse(format!(
            "expected 2 or 3 coordinates, got {d}"
        )));
    }
    let cols = rows.len();
    let mut m = DMatrix::from_element(d, cols, f64::NAN);
    for (k, coords) in rows {
        if coords.len() != d {
            return Err(Error::Parse("rows have different dimensions".into()));
        }
        if k >= cols || !m[(0, k)].is_nan() {
            return Err(Error::Parse(format!("sensor {k} missing or repeated")));
        }
        m.set_column(k, &nalgebra::DVector::from_vec(coords));
    }
    Realization::new(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let m = DMatrix::from_fn(3, 6, |r, c| (r as f64 + 1.0) * 0.1 - c as f64 / 7.0);
        let p = Realization::new(m).unwrap();
        let mut buf = Vec::new();
        write_realization(&mut buf, &p).unwrap();
        let q = read_realization(buf.as_slice()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn rejects_missing_sensor() {
        let text = "0 0 1 2\n0 1 1 2\n1 1 1 2\n";
        assert!(read_realization(text.as_bytes()).is_err());
    }

    #[test]
    fn rejects_bad_side() {
        assert!(read_realization("0 2 1 2\n".as_bytes()).is_err());
    }
}
