//! Driscoll-Kraay covariance.
//!
//! Moment vectors `x_it * e_it` are summed across the cross-section within
//! each period, and the period sums `h_t` enter a Bartlett-kernel HAC
//! estimator over calendar time:
//!
//! ```text
//! S = sum_t h_t h_t'
//!   + sum_{l=1}^{L} (1 - l/(L+1)) sum_t (h_t h_{t-l}' + h_{t-l} h_t')
//! V = (X'X)^{-1} S (X'X)^{-1}
//! ```
//!
//! Lag `l` pairs periods exactly `l` years apart; a missing year contributes
//! no cross term. No finite-sample scaling is applied, so with a single unit
//! and `L = 0` the estimator is White's HC0.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;

fn period_sums(x: &DMatrix<f64>, resid: &[f64], periods: &[i32]) -> BTreeMap<i32, DVector<f64>> {
    let k = x.ncols();
    let mut sums: BTreeMap<i32, DVector<f64>> = BTreeMap::new();
    for (i, (&t, &e)) in periods.iter().zip(resid).enumerate() {
        let h = sums.entry(t).or_insert_with(|| DVector::zeros(k));
        for j in 0..k {
            h[j] += x[(i, j)] * e;
        }
    }
    sums
}

/// Kernel-weighted cross-moment of two sets of period sums.
fn meat(
    a: &BTreeMap<i32, DVector<f64>>,
    b: &BTreeMap<i32, DVector<f64>>,
    bandwidth: usize,
) -> DMatrix<f64> {
    let ka = a.values().next().map_or(0, |v| v.len());
    let kb = b.values().next().map_or(0, |v| v.len());
    let mut s = DMatrix::zeros(ka, kb);
    for (t, ha) in a {
        if let Some(hb) = b.get(t) {
            s += ha * hb.transpose();
        }
    }
    for lag in 1..=bandwidth {
        let w = 1.0 - lag as f64 / (bandwidth as f64 + 1.0);
        for (t, ha) in a {
            let earlier = t - lag as i32;
            if let Some(hb) = b.get(&earlier) {
                s += w * (ha * hb.transpose());
            }
            if let (Some(ha_prev), Some(hb)) = (a.get(&earlier), b.get(t)) {
                s += w * (ha_prev * hb.transpose());
            }
        }
    }
    s
}

/// `(X'X)^{-1}` or a singularity error.
pub fn bread(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let xtx = x.transpose() * x;
    xtx.cholesky()
        .map(|c| symmetrize(c.inverse()))
        .ok_or_else(|| Error::Singular {
            column: "X'X".to_string(),
        })
}

/// Driscoll-Kraay covariance of OLS coefficients.
///
/// `x` is the (demeaned) regressor matrix, `periods` the year of each row.
pub fn dk_covariance(
    x: &DMatrix<f64>,
    resid: &[f64],
    periods: &[i32],
    bandwidth: usize,
) -> Result<DMatrix<f64>> {
    let b = bread(x)?;
    Ok(dk_with_bread(&b, x, resid, periods, bandwidth))
}

pub(crate) fn dk_with_bread(
    bread: &DMatrix<f64>,
    x: &DMatrix<f64>,
    resid: &[f64],
    periods: &[i32],
    bandwidth: usize,
) -> DMatrix<f64> {
    check_lengths(x, resid, periods);
    let h = period_sums(x, resid, periods);
    let s = meat(&h, &h, bandwidth);
    symmetrize(bread * s * bread)
}

/// Cross-covariance between the coefficients of two regressions, possibly
/// on different rows: `bread_a S_ab bread_b`, where `S_ab` pairs the period
/// sums of the two moment series by calendar year.
pub fn dk_cross_covariance(
    (x_a, resid_a, periods_a): (&DMatrix<f64>, &[f64], &[i32]),
    (x_b, resid_b, periods_b): (&DMatrix<f64>, &[f64], &[i32]),
    bandwidth: usize,
) -> Result<DMatrix<f64>> {
    check_lengths(x_a, resid_a, periods_a);
    check_lengths(x_b, resid_b, periods_b);
    let ba = bread(x_a)?;
    let bb = bread(x_b)?;
    let ha = period_sums(x_a, resid_a, periods_a);
    let hb = period_sums(x_b, resid_b, periods_b);
    Ok(ba * meat(&ha, &hb, bandwidth) * bb)
}

fn check_lengths(x: &DMatrix<f64>, resid: &[f64], periods: &[i32]) {
    assert_eq!(x.nrows(), resid.len(), "residuals not aligned with rows");
    assert_eq!(x.nrows(), periods.len(), "periods not aligned with rows");
}

/// Default lag truncation for horizon `h`: `floor(1.5 (h + 1)) + 1`, capped
/// at `T - 1` periods.
pub fn auto_bandwidth(horizon: i32, n_periods: usize) -> usize {
    let h = horizon.max(0) as f64;
    let raw = (1.5 * (h + 1.0)).floor() as usize + 1;
    raw.min(n_periods.saturating_sub(1))
}
