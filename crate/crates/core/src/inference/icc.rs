//! ICC(3,1): two-way mixed effects, consistency, single measurement.

use crate::error::{Error, Result};

/// `(MS_R - MS_E) / (MS_R + (k - 1) MS_E)` for an `n x k` matrix of
/// subjects by repeated measurements.
pub fn icc31(rows: &[Vec<f64>]) -> Result<f64> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::invalid(format!("ICC needs at least 3 subjects, got {n}")));
    }
    let k = rows[0].len();
    if k < 2 {
        return Err(Error::invalid("ICC needs at least 2 measurements per subject"));
    }
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::DimensionMismatch("ragged measurement matrix".into()));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::invalid("ICC input must be finite"));
    }
    let (nf, kf) = (n as f64, k as f64);
    let row_means: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / kf).collect();
    let col_means: Vec<f64> =
        (0..k).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let grand = col_means.iter().sum::<f64>() / kf;

    let ss_rows = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_err = 0.0;
    let mut ss_total = 0.0;
    for (r, rm) in rows.iter().zip(&row_means) {
        for (x, cm) in r.iter().zip(&col_means) {
            let e = (x - rm) - (cm - grand);
            ss_err += e * e;
            ss_total += (x - grand).powi(2);
        }
    }
    if ss_total == 0.0 {
        return Err(Error::Degenerate("zero total variance".into()));
    }
    let ms_rows = ss_rows / (nf - 1.0);
    let ms_err = ss_err / ((nf - 1.0) * (kf - 1.0));
    let denom = ms_rows + (kf - 1.0) * ms_err;
    if denom == 0.0 {
        return Err(Error::Degenerate("no subject or residual variance".into()));
    }
    Ok((ms_rows - ms_err) / denom)
}
