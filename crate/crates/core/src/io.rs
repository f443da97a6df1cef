//! CSV formats: matrices with `inf` diagonals, point clouds, modulus
//! tables and two-column dumps. No headers anywhere.
//!
//! Floats are written in shortest round-trip form, so reading back a
//! written file reproduces the same bits.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel::ExtReal;
use crate::profiles::TransitivityModulus;

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn reader<R: Read>(r: R, flexible: bool) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(flexible)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r)
}

fn records<R: Read>(r: R, flexible: bool) -> Result<Vec<csv::StringRecord>> {
    let mut out = Vec::new();
    for (i, rec) in reader(r, flexible).records().enumerate() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths {
                expected_len, len, ..
            } => Error::Format(format!(
                "row {} has {len} fields, expected {expected_len}",
                i + 1
            )),
            _ => Error::Format(format!("row {}: {e}", i + 1)),
        })?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        out.push(rec);
    }
    Ok(out)
}

fn parse_f64(tok: &str, row: usize, col: usize) -> Result<f64> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Format(format!("row {row}, column {col}: bad number {tok:?}")))
}

/// Square or not, every row must have the same length; squareness and the
/// kernel axioms are checked downstream.
pub fn parse_matrix<R: Read>(r: R) -> Result<Vec<Vec<ExtReal>>> {
    let recs = records(r, false)?;
    if recs.is_empty() {
        return Err(Error::Format("matrix is empty".into()));
    }
    recs.iter()
        .enumerate()
        .map(|(i, rec)| {
            rec.iter()
                .enumerate()
                .map(|(j, tok)| {
                    tok.parse::<ExtReal>()
                        .map_err(|e| Error::Format(format!("row {}, column {}: {e}", i + 1, j + 1)))
                })
                .collect()
        })
        .collect()
}

pub fn read_matrix(path: &Path) -> Result<Vec<Vec<ExtReal>>> {
    parse_matrix(open(path)?)
}

/// Plain finite matrix, e.g. a stored metric or correction factor.
pub fn parse_real_matrix<R: Read>(r: R) -> Result<Vec<Vec<f64>>> {
    let recs = records(r, false)?;
    if recs.is_empty() {
        return Err(Error::Format("matrix is empty".into()));
    }
    let rows: Vec<Vec<f64>> = recs
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            rec.iter()
                .enumerate()
                .map(|(j, tok)| parse_f64(tok, i + 1, j + 1))
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.iter().any(|r| r.len() != rows.len()) {
        return Err(Error::Format("matrix is not square".into()));
    }
    Ok(rows)
}

pub fn read_real_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    parse_real_matrix(open(path)?)
}

/// One point per row.
pub fn parse_points<R: Read>(r: R) -> Result<Vec<Vec<f64>>> {
    let recs = records(r, false)?;
    if recs.is_empty() {
        return Err(Error::Format("no points".into()));
    }
    recs.iter()
        .enumerate()
        .map(|(i, rec)| {
            rec.iter()
                .enumerate()
                .map(|(j, tok)| parse_f64(tok, i + 1, j + 1))
                .collect()
        })
        .collect()
}

pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    parse_points(open(path)?)
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn rows_to_csv<T>(rows: &[Vec<T>], cell: impl Fn(&T) -> String) -> String {
    let mut s = String::new();
    for row in rows {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            s.push_str(&cell(v));
        }
        s.push('\n');
    }
    s
}

pub fn matrix_to_csv(rows: &[Vec<ExtReal>]) -> String {
    rows_to_csv(rows, |v| fmt_f64(v.to_f64()))
}

pub fn real_matrix_to_csv(rows: &[Vec<f64>]) -> String {
    rows_to_csv(rows, |v| fmt_f64(*v))
}

/// Row-major square matrix.
pub fn flat_matrix_to_csv(n: usize, data: &[f64]) -> String {
    let rows: Vec<Vec<f64>> = data.chunks(n.max(1)).map(<[f64]>::to_vec).collect();
    real_matrix_to_csv(&rows)
}

pub fn pairs_to_csv(pairs: &[(f64, f64)]) -> String {
    let mut s = String::new();
    for (a, b) in pairs {
        let _ = writeln!(s, "{},{}", fmt_f64(*a), fmt_f64(*b));
    }
    s
}

/// Rows `lambda,nu(lambda)` starting at `0,0`; the final row carries the
/// tail slope as a third field.
pub fn parse_pwl<R: Read>(r: R) -> Result<TransitivityModulus> {
    let recs = records(r, true)?;
    if recs.len() < 2 {
        return Err(Error::Format(
            "modulus table needs at least two rows".into(),
        ));
    }
    let last = recs.len() - 1;
    let mut knots = Vec::with_capacity(recs.len());
    let mut values = Vec::with_capacity(recs.len());
    let mut tail = None;
    for (i, rec) in recs.iter().enumerate() {
        let want = if i == last { 3 } else { 2 };
        if rec.len() != want {
            return Err(Error::Format(format!(
                "modulus row {} has {} fields, expected {want}",
                i + 1,
                rec.len()
            )));
        }
        knots.push(parse_f64(&rec[0], i + 1, 1)?);
        values.push(parse_f64(&rec[1], i + 1, 2)?);
        if i == last {
            tail = Some(parse_f64(&rec[2], i + 1, 3)?);
        }
    }
    TransitivityModulus::piecewise_linear(knots, values, tail.unwrap_or(0.0))
}

pub fn read_pwl(path: &Path) -> Result<TransitivityModulus> {
    parse_pwl(open(path)?)
}

/// Tabulates a piecewise-linear modulus; closed forms have no table.
pub fn pwl_to_csv(nu: &TransitivityModulus) -> Option<String> {
    let TransitivityModulus::PiecewiseLinear(p) = nu else {
        return None;
    };
    let mut s = String::new();
    let last = p.knots().len() - 1;
    for (i, (l, v)) in p.knots().iter().zip(p.values()).enumerate() {
        let _ = write!(s, "{},{}", fmt_f64(*l), fmt_f64(*v));
        if i == last {
            let _ = write!(s, ",{}", fmt_f64(p.tail_slope()));
        }
        s.push('\n');
    }
    Some(s)
}

#[derive(Debug, Clone)]
pub enum ModulusSpec {
    Given(TransitivityModulus),
    /// Fit one from the data.
    Estimate,
}

/// `linear:<a>`, `log1p:<c>`, `pwl:<path>` or `estimate`.
pub fn parse_modulus_spec(spec: &str) -> Result<ModulusSpec> {
    let spec = spec.trim();
    if spec == "estimate" {
        return Ok(ModulusSpec::Estimate);
    }
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| Error::Format(format!("bad modulus spec {spec:?}")))?;
    let num = || {
        arg.trim()
            .parse::<f64>()
            .map_err(|_| Error::Format(format!("bad number in modulus spec {spec:?}")))
    };
    let nu = match kind.trim() {
        "linear" => TransitivityModulus::linear(num()?)?,
        "log1p" => TransitivityModulus::log1p(num()?)?,
        "pwl" => read_pwl(Path::new(arg))?,
        other => return Err(Error::Format(format!("unknown modulus kind {other:?}"))),
    };
    Ok(ModulusSpec::Given(nu))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_roundtrip() {
        let text = "inf, 4, 2\n4,INF,4\n2,4,inf\n";
        let m = parse_matrix(text.as_bytes()).unwrap();
        assert_eq!(m[0][0], ExtReal::Infinite);
        assert_eq!(m[1][1], ExtReal::Infinite);
        assert_eq!(m[0][2], ExtReal::Finite(2.0));
        let out = matrix_to_csv(&m);
        assert_eq!(out, "inf,4,2\n4,inf,4\n2,4,inf\n");
        assert_eq!(parse_matrix(out.as_bytes()).unwrap(), m);
    }

    #[test]
    fn ragged_rows_are_a_format_error() {
        let err = parse_matrix("inf,1\n1,inf,3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
        assert!(matches!(
            parse_matrix("inf,x\nx,inf\n".as_bytes()),
            Err(Error::Format(_))
        ));
        assert!(matches!(parse_matrix("".as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn floats_round_trip_bitwise() {
        for v in [
            0.1,
            1.0 / 3.0,
            1e-300,
            6.02e23,
            123456.789,
            2f64.powf(0.3),
            5e-324,
        ] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(4.0), "4");
        assert_eq!(fmt_f64(1e-7), "1e-7");
    }

    #[test]
    fn modulus_specs() {
        assert!(matches!(
            parse_modulus_spec("linear:0.5").unwrap(),
            ModulusSpec::Given(TransitivityModulus::Linear { .. })
        ));
        assert!(matches!(
            parse_modulus_spec("log1p:1").unwrap(),
            ModulusSpec::Given(TransitivityModulus::Log1p { .. })
        ));
        assert!(matches!(
            parse_modulus_spec("estimate").unwrap(),
            ModulusSpec::Estimate
        ));
        assert!(parse_modulus_spec("linear:1.5").is_err());
        assert!(parse_modulus_spec("cubic:1").is_err());
        assert!(parse_modulus_spec("linear").is_err());
    }

    #[test]
    fn pwl_table_roundtrip() {
        let nu =
            TransitivityModulus::piecewise_linear(vec![0.0, 1.0, 3.0], vec![0.0, 0.5, 1.0], 0.1)
                .unwrap();
        let text = pwl_to_csv(&nu).unwrap();
        assert_eq!(text, "0,0\n1,0.5\n3,1,0.1\n");
        let back = parse_pwl(text.as_bytes()).unwrap();
        assert_eq!(back.eval(2.0).unwrap(), nu.eval(2.0).unwrap());
        assert!(parse_pwl("0,0\n1,0.5\n".as_bytes()).is_err());
        assert!(parse_pwl("0.1,0\n1,0.5,0.2\n".as_bytes()).is_err());
        assert!(pwl_to_csv(&TransitivityModulus::linear(0.5).unwrap()).is_none());
    }

    #[test]
    fn points_and_real_matrices() {
        let p = parse_points("0,0\n0.5,0\n".as_bytes()).unwrap();
        assert_eq!(p, vec![vec![0.0, 0.0], vec![0.5, 0.0]]);
        assert!(parse_points("0,0\n1\n".as_bytes()).is_err());
        assert!(parse_real_matrix("0,1\n1,0\n".as_bytes()).is_ok());
        assert!(parse_real_matrix("0,inf\ninf,0\n".as_bytes()).is_err());
        assert!(parse_real_matrix("0,1,2\n1,0,3\n".as_bytes()).is_err());
    }
}
