//! CSV encodings of distribution, predictor and comparison tables.
//!
//! Reals are written with 17 significant digits (`{:.16e}`), which
//! round-trips every `f64`.

use std::io::{Read, Write};

use crate::asymptotics::AsymRow;
use crate::dist::{CfRow, DistRow};
use crate::error::{Error, Result};
use crate::linalg2::ScaledNonneg;
use crate::sim::CompareRow;

pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

pub const DIST_HEADER: [&str; 4] = ["n", "eta", "mass", "method"];

pub fn write_dist_csv<W: Write>(w: W, rows: &[DistRow], method: &str) -> Result<()> {
    write_dist_tables(w, &[(rows, method)])
}

/// One table holding several methods, distinguished by the `method` column.
pub fn write_dist_tables<W: Write>(w: W, tables: &[(&[DistRow], &str)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(DIST_HEADER).map_err(csv_err)?;
    for (rows, method) in tables {
        for r in *rows {
            out.write_record([r.n.to_string(), fmt_real(r.eta), fmt_real(r.mass), method.to_string()])
                .map_err(csv_err)?;
        }
    }
    out.flush().map_err(|e| Error::Config(e.to_string()))
}

/// Parses a table written by [`write_dist_csv`]; returns the rows carrying
/// the method of the first row, and that method.
pub fn read_dist_csv<R: Read>(r: R) -> Result<(Vec<DistRow>, String)> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != DIST_HEADER {
        return Err(Error::Config(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    let mut method = String::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| Error::Config(format!("field {i} of {rec:?}: {e}")))
        };
        if method.is_empty() {
            method = rec[3].to_string();
        } else if rec[3] != method {
            continue;
        }
        let n = rec[0].parse::<usize>().map_err(|e| Error::Config(format!("n in {rec:?}: {e}")))?;
        rows.push(DistRow { n, eta: num(1)?, mass: num(2)? });
    }
    Ok((rows, method))
}

pub fn write_cf_csv<W: Write>(w: W, rows: &[CfRow]) -> Result<()> {
    let dist: Vec<DistRow> = rows.iter().map(|r| DistRow::from(*r)).collect();
    write_dist_csv(w, &dist, "cf")
}

pub const ASYM_HEADER: [&str; 9] = [
    "n",
    "eta",
    "mass",
    "pred_tail_mant",
    "pred_tail_lexp",
    "pred_mass_mant",
    "pred_mass_lexp",
    "ratio_tail",
    "ratio_mass",
];

/// Splits `x` as `mant * e^lexp` with integer `lexp` and `mant` in `[1, e)`.
pub fn ln_pair(x: ScaledNonneg) -> (f64, f64) {
    if x.is_zero() {
        return (0.0, 0.0);
    }
    let l = x.ln();
    let e = l.floor();
    ((l - e).exp(), e)
}

pub fn write_asym_csv<W: Write>(w: W, rows: &[AsymRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ASYM_HEADER).map_err(csv_err)?;
    for r in rows {
        let (tm, te) = ln_pair(r.pred_tail);
        let (mm, me) = ln_pair(r.pred_mass);
        out.write_record([
            r.n.to_string(),
            fmt_real(r.eta),
            fmt_real(r.mass),
            fmt_real(tm),
            format!("{te}"),
            fmt_real(mm),
            format!("{me}"),
            fmt_real(r.ratio_tail),
            fmt_real(r.ratio_mass),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Config(e.to_string()))
}

pub const COMPARE_HEADER: [&str; 6] = ["n", "exact", "empirical", "count", "sigma", "z"];

pub fn write_compare_csv<W: Write>(w: W, rows: &[CompareRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(COMPARE_HEADER).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.n.to_string(),
            fmt_real(r.exact),
            fmt_real(r.empirical),
            r.count.to_string(),
            fmt_real(r.sigma),
            fmt_real(r.z),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Config(e.to_string()))
}
