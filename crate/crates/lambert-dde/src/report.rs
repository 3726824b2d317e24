//! Deterministic serialization: JSON with fixed field order and floats
//! printed at 17 significant digits (bit-exact round trip), and CSV tables
//! for plotting root sets.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};
use std::io;

use crate::error::Result;

/// 17 significant digits round-trip every f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

struct Sci17Formatter;

impl serde_json::ser::Formatter for Sci17Formatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:e}")
    }
}

/// Serialize any value to JSON with the deterministic float format.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sci17Formatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits utf-8"))
}

pub fn ser_complex<S: Serializer>(z: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

pub fn ser_pair<S: Serializer>(
    pair: &(Complex64, Complex64),
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    [[pair.0.re, pair.0.im], [pair.1.re, pair.1.im]].serialize(s)
}

pub fn ser_roots<S: Serializer>(roots: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(roots.len()))?;
    for r in roots {
        seq.serialize_element(&[r.re, r.im])?;
    }
    seq.end()
}

/// Complex matrix as rows of [re, im] pairs.
pub fn ser_cmat<S: Serializer>(
    m: &DMatrix<Complex64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect();
    rows.serialize(s)
}

/// CSV rows for a root table: re, im, residual.
pub fn roots_csv(roots: &[Complex64], residuals: &[f64]) -> String {
    let mut out = String::from("re,im,residual\n");
    for (r, res) in roots.iter().zip(residuals) {
        out.push_str(&format!("{},{},{}\n", fmt_f64(r.re), fmt_f64(r.im), fmt_f64(*res)));
    }
    out
}

/// CSV rows with branch attribution: re, im, residual, branch, source.
pub struct AttributedRoot {
    pub root: Complex64,
    pub residual: f64,
    pub branch: i64,
    pub source: &'static str,
}

pub fn attributed_roots_csv(rows: &[AttributedRoot]) -> String {
    let mut out = String::from("re,im,residual,branch,source\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(r.root.re),
            fmt_f64(r.root.im),
            fmt_f64(r.residual),
            r.branch,
            r.source
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.0, -0.0, 1.0 / 3.0, 1936.1, -1.1692e-12, f64::MAX, 5e-324] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn json_floats_use_scientific_form() {
        #[derive(Serialize)]
        struct T {
            a: f64,
            n: u32,
        }
        let s = to_json_string(&T { a: 0.5, n: 3 }).unwrap();
        assert_eq!(s, "{\"a\":5.0000000000000000e-1,\"n\":3}");
        let parsed: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(parsed["a"].as_f64().unwrap(), 0.5);
    }

    #[test]
    fn csv_shape() {
        let roots = vec![Complex64::new(0.5, -2.0)];
        let csv = roots_csv(&roots, &[1e-12]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "re,im,residual");
        assert!(lines[1].starts_with("5.0000000000000000e-1,-2.0000000000000000e0,"));
    }
}
