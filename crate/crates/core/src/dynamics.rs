//! Dynamic-panel ARDL estimation, its impulse responses, and the
//! transitory/permanent shock decomposition.
//!
//! The model is
//!
//! ```text
//! y_t = alpha p_t + sum_{l=1}^{J} beta_l y_{t-l} + sum_{l=1}^{J} gamma_l p_{t-l} + effects + u_t
//! ```
//!
//! A transitory shock is a one-period unit impulse in `p`. Because the
//! measure has its own dynamics, an impulse in its innovation is followed by
//! further movements; the decomposition solves for the innovation path that
//! produces a pure one-period impulse in `p` and pushes it through the
//! outcome response.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, Bandwidth, FeOptions, LpSpec, RegressionFit, SampleFit};
use crate::panel::{lag_name, GroupKey, PanelFrame};

/// ARDL coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArdlParams {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ArdlParams {
    pub fn new(alpha: f64, beta: &[f64], gamma: &[f64]) -> Result<Self> {
        if beta.len() != gamma.len() {
            return Err(Error::Config(format!(
                "beta has {} lags but gamma has {}",
                beta.len(),
                gamma.len()
            )));
        }
        Ok(Self {
            alpha,
            beta: beta.to_vec(),
            gamma: gamma.to_vec(),
        })
    }

    pub fn lags(&self) -> usize {
        self.beta.len()
    }

    /// Largest modulus among the roots of the companion matrix of `beta`.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.beta)
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius() < 1.0
    }
}

/// Largest eigenvalue modulus of the companion matrix of an AR polynomial.
/// The polynomial `1 - sum c_l L^l` has all roots outside the unit circle
/// iff this is below one.
pub fn spectral_radius(coefs: &[f64]) -> f64 {
    let j = coefs.len();
    if j == 0 {
        return 0.0;
    }
    let mut c = DMatrix::zeros(j, j);
    for (l, &b) in coefs.iter().enumerate() {
        c[(0, l)] = b;
    }
    for r in 1..j {
        c[(r, r - 1)] = 1.0;
    }
    c.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct ArdlFit {
    pub params: ArdlParams,
    pub stable: bool,
    pub spectral_radius: f64,
    /// Regression details: names, covariance, residuals, sample.
    pub regression: RegressionFit,
}

/// Regressor names in estimation order: `p`, then outcome lags, then measure lags.
pub fn ardl_regressors(outcome: &str, measure: &str, lags: usize) -> Vec<String> {
    let mut names = vec![measure.to_string()];
    names.extend((1..=lags as u32).map(|l| lag_name(outcome, l)));
    names.extend((1..=lags as u32).map(|l| lag_name(measure, l)));
    names
}

/// Builds the lag columns and fits the ARDL regression.
pub fn ardl_sample(
    frame: &PanelFrame,
    outcome: &str,
    measure: &str,
    lags: usize,
    groups: &[GroupKey],
    bandwidth: Bandwidth,
    fe: FeOptions,
) -> Result<SampleFit> {
    if lags == 0 {
        return Err(Error::Config("the ARDL needs at least one lag".into()));
    }
    let y = frame.column(outcome)?;
    let p = frame.column(measure)?;
    let mut owned: Vec<Vec<f64>> = vec![p.to_vec()];
    for var in [outcome, measure] {
        for l in 1..=lags as i32 {
            owned.push(frame.shifted(var, -l)?);
        }
    }
    let names = ardl_regressors(outcome, measure, lags);
    let columns: Vec<(&str, &[f64])> = names.iter().map(String::as_str).zip(owned.iter().map(Vec::as_slice)).collect();
    lp::fit_panel_ols(frame, y, &columns, groups, bandwidth, 0, fe)?
        .ok_or_else(|| Error::Data("too few complete observations for the ARDL".into()))
}

/// Splits a coefficient vector ordered as in [`ardl_regressors`].
pub fn params_from_coefficients(c: &[f64], lags: usize) -> ArdlParams {
    ArdlParams {
        alpha: c[0],
        beta: c[1..=lags].to_vec(),
        gamma: c[lags + 1..=2 * lags].to_vec(),
    }
}

/// Fits the ARDL by OLS on demeaned data with Driscoll-Kraay covariance.
pub fn estimate_ardl(
    frame: &PanelFrame,
    outcome: &str,
    measure: &str,
    lags: usize,
    groups: &[GroupKey],
    bandwidth: Bandwidth,
    fe: FeOptions,
) -> Result<ArdlFit> {
    let sample = ardl_sample(frame, outcome, measure, lags, groups, bandwidth, fe)?;
    let params = params_from_coefficients(&sample.fit.coefficients, lags);
    let radius = params.spectral_radius();
    let stable = radius < 1.0;
    if !stable {
        log::warn!("estimated ARDL is not stable (spectral radius {radius:.4})");
    }
    Ok(ArdlFit {
        params,
        stable,
        spectral_radius: radius,
        regression: sample.fit,
    })
}

/// How measure lags enter the response recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecursionForm {
    /// `gamma_k` enters only at horizon `k <= J`.
    #[default]
    Consistent,
    /// `sum_{j <= min(k, J)} gamma_j` enters at every horizon `k >= 1`.
    AsPrinted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArdlIrf {
    pub phi: Vec<f64>,
    /// Long-run effect of a permanent unit shift; non-finite when `sum beta = 1`.
    pub phi_inf: f64,
    pub cumulative: Vec<f64>,
    pub stable: bool,
}

/// Response path `phi_0..phi_H` to a one-period unit impulse in the measure.
pub fn irf_from_ardl(params: &ArdlParams, horizon: usize, form: RecursionForm) -> ArdlIrf {
    let j = params.lags();
    let mut phi = Vec::with_capacity(horizon + 1);
    phi.push(params.alpha);
    for k in 1..=horizon {
        let top = k.min(j);
        let ar: f64 = (1..=top).map(|l| params.beta[l - 1] * phi[k - l]).sum();
        let dl = match form {
            RecursionForm::Consistent => {
                if k <= j {
                    params.gamma[k - 1]
                } else {
                    0.0
                }
            }
            RecursionForm::AsPrinted => params.gamma[..top].iter().sum(),
        };
        phi.push(ar + dl);
    }
    let sum_beta: f64 = params.beta.iter().sum();
    let sum_gamma: f64 = params.gamma.iter().sum();
    let phi_inf = (params.alpha + sum_gamma) / (1.0 - sum_beta);
    ArdlIrf {
        cumulative: permanent_outcome_irf(&phi),
        phi,
        phi_inf,
        stable: params.is_stable() && phi_inf.is_finite(),
    }
}

/// Rescales an impulse response so its first element is one.
pub fn normalize_own_irf(irf: &[f64]) -> Result<Vec<f64>> {
    let lead = *irf
        .first()
        .ok_or_else(|| Error::Numerical("own response is empty".into()))?;
    if !(lead.abs() > f64::EPSILON) {
        return Err(Error::Numerical(format!("own response starts at {lead}; cannot normalize")));
    }
    Ok(irf.iter().map(|v| v / lead).collect())
}

/// Solves `T(own_irf) x = e_0` by forward substitution, where `T` is the
/// lower-triangular Toeplitz matrix with first column `own_irf`.
pub fn solve_transitory_shock(own_irf: &[f64]) -> Result<Vec<f64>> {
    match own_irf.first() {
        Some(&v) if (v - 1.0).abs() <= 1e-12 => {}
        _ => return Err(Error::Numerical("own response must start at one; normalize it first".into())),
    }
    let n = own_irf.len();
    let mut x = vec![0.0; n];
    x[0] = 1.0;
    for m in 1..n {
        x[m] = -(1..=m).map(|k| own_irf[k] * x[m - k]).sum::<f64>();
    }
    Ok(x)
}

/// First `len(a)` terms of the discrete convolution of `a` and `b`.
pub fn convolve_truncated(a: &[f64], b: &[f64]) -> Vec<f64> {
    (0..a.len())
        .map(|h| (0..=h.min(b.len().saturating_sub(1))).map(|s| b[s] * a[h - s]).sum())
        .collect()
}

/// Outcome response to a one-period unit impulse in the measure:
/// `T(shock_path) alpha`.
pub fn transitory_outcome_irf(shock_path: &[f64], outcome_irf: &[f64]) -> Result<Vec<f64>> {
    if shock_path.len() != outcome_irf.len() {
        return Err(Error::Data(format!(
            "shock path has {} horizons but the outcome response has {}",
            shock_path.len(),
            outcome_irf.len()
        )));
    }
    Ok(convolve_truncated(shock_path, outcome_irf))
}

/// Running sums: the response to a permanent unit shift.
pub fn permanent_outcome_irf(transitory: &[f64]) -> Vec<f64> {
    transitory
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShockDecomposition {
    pub own_irf: Vec<f64>,
    pub shock_path: Vec<f64>,
    pub transitory_outcome: Vec<f64>,
    pub permanent_outcome: Vec<f64>,
}

/// Decomposes an outcome response given the measure's own response, both
/// to the same innovation.
pub fn decompose(own_irf: &[f64], outcome_irf: &[f64]) -> Result<ShockDecomposition> {
    let own = normalize_own_irf(own_irf)?;
    let shock_path = solve_transitory_shock(&own)?;
    let transitory = transitory_outcome_irf(&shock_path, outcome_irf)?;
    Ok(ShockDecomposition {
        own_irf: own,
        permanent_outcome: permanent_outcome_irf(&transitory),
        shock_path,
        transitory_outcome: transitory,
    })
}

/// Projection of the measure on itself over horizons `0..=h_max`.
pub fn own_irf_spec(measure: &str, controls: &[String], groups: &[GroupKey], h_max: i32) -> LpSpec {
    LpSpec::new(measure, &[measure], (0, h_max))
        .with_controls(controls)
        .with_groups(groups)
}

/// Coefficient path of `shock` with no gaps from horizon 0.
pub fn contiguous_path(result: &lp::LpResult, shock: &str) -> Result<Vec<f64>> {
    if !result.skipped.is_empty() {
        return Err(Error::Data(format!(
            "horizons {:?} could not be estimated; the response path has gaps",
            result.skipped
        )));
    }
    Ok(result.path(shock))
}

/// Writes `horizon,phi,cumulative`.
pub fn write_ardl_irf_csv<W: Write>(irf: &ArdlIrf, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["horizon", "phi", "cumulative"])?;
    for (h, (p, c)) in irf.phi.iter().zip(&irf.cumulative).enumerate() {
        w.write_record([h.to_string(), p.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `horizon,own_irf,shock_path,transitory,permanent`.
pub fn write_decomposition_csv<W: Write>(d: &ShockDecomposition, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["horizon", "own_irf", "shock_path", "transitory", "permanent"])?;
    for h in 0..d.own_irf.len() {
        w.write_record([
            h.to_string(),
            d.own_irf[h].to_string(),
            d.shock_path[h].to_string(),
            d.transitory_outcome[h].to_string(),
            d.permanent_outcome[h].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::PanelRecord;
    use approx::assert_abs_diff_eq;

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn static_model() {
        let p = ArdlParams::new(1.0, &[0.0], &[0.0]).unwrap();
        let irf = irf_from_ardl(&p, 5, RecursionForm::Consistent);
        close(&irf.phi, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0);
        assert_eq!(irf.phi_inf, 1.0);
    }

    #[test]
    fn geometric_response() {
        let p = ArdlParams::new(1.0, &[0.5], &[0.0]).unwrap();
        let irf = irf_from_ardl(&p, 10, RecursionForm::Consistent);
        for (k, v) in irf.phi.iter().enumerate() {
            assert_abs_diff_eq!(*v, 0.5f64.powi(k as i32), epsilon = 1e-15);
        }
        assert_eq!(irf.phi_inf, 2.0);
        assert!(irf.stable);
    }

    #[test]
    fn distributed_lag_response() {
        let p = ArdlParams::new(1.0, &[0.5], &[0.5]).unwrap();
        let irf = irf_from_ardl(&p, 200, RecursionForm::Consistent);
        close(&irf.phi[..4], &[1.0, 1.0, 0.5, 0.25], 1e-15);
        assert_eq!(irf.phi_inf, 3.0);
        assert_abs_diff_eq!(*irf.cumulative.last().unwrap(), 3.0, epsilon = 1e-6);
    }

    #[test]
    fn printed_form_differs_after_lag_order() {
        let p = ArdlParams::new(1.0, &[0.5], &[0.5]).unwrap();
        let irf = irf_from_ardl(&p, 3, RecursionForm::AsPrinted);
        close(&irf.phi, &[1.0, 1.0, 1.0, 1.0], 1e-15);
    }

    #[test]
    fn unit_root_has_no_long_run() {
        let p = ArdlParams::new(1.0, &[1.0], &[0.0]).unwrap();
        let irf = irf_from_ardl(&p, 3, RecursionForm::Consistent);
        assert!(!irf.phi_inf.is_finite());
        assert!(!irf.stable);
    }

    #[test]
    fn companion_roots() {
        assert!(spectral_radius(&[0.5]) < 1.0);
        assert!(spectral_radius(&[0.5, 0.6]) > 1.0);
        assert_abs_diff_eq!(spectral_radius(&[0.0, 0.25]), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn transitory_shock_examples() {
        close(&solve_transitory_shock(&[1.0, 0.0, 0.0]).unwrap(), &[1.0, 0.0, 0.0], 0.0);
        let ar: Vec<f64> = (0..8).map(|k| 0.5f64.powi(k)).collect();
        let x = solve_transitory_shock(&ar).unwrap();
        close(&x, &[1.0, -0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1e-15);
        close(&solve_transitory_shock(&[1.0; 5]).unwrap(), &[1.0, -1.0, 0.0, 0.0, 0.0], 0.0);
        assert!(solve_transitory_shock(&[2.0, 1.0]).is_err());
    }

    #[test]
    fn outcome_decomposition_examples() {
        let ones = [1.0; 4];
        close(&transitory_outcome_irf(&[1.0, 0.0, 0.0, 0.0], &ones).unwrap(), &ones, 0.0);
        let a = transitory_outcome_irf(&[1.0, -0.5, 0.0, 0.0], &ones).unwrap();
        close(&a, &[1.0, 0.5, 0.5, 0.5], 1e-15);
        close(&permanent_outcome_irf(&a), &[1.0, 1.5, 2.0, 2.5], 1e-15);
        close(&permanent_outcome_irf(&[1.0, 0.0, 0.0]), &[1.0, 1.0, 1.0], 0.0);
        assert!(transitory_outcome_irf(&[1.0], &ones).is_err());
    }

    #[test]
    fn round_trip_reconvolution() {
        let own = [1.0, 0.7, 0.3, -0.1, 0.05];
        let alpha = [2.0, 1.5, 0.4, 0.2, -0.3];
        let d = decompose(&own, &alpha).unwrap();
        close(&convolve_truncated(&d.transitory_outcome, &own), &alpha, 1e-12);
    }

    #[test]
    fn noiseless_ardl_recovered() {
        let mut recs = Vec::new();
        for c in 0..3 {
            let mut y_prev = 0.0;
            for t in 0..12 {
                let p = ((c * 3 + t * 5 + c * t * t) % 7) as f64 * 0.2 - 0.5;
                let y = 0.5 * y_prev + p;
                recs.push(PanelRecord {
                    country: format!("C{c}"),
                    year: 2000 + t,
                    region: "r".into(),
                    values: vec![("y".into(), y), ("p".into(), p)],
                    groups: vec![],
                });
                y_prev = y;
            }
        }
        let frame = PanelFrame::from_records(recs).unwrap();
        let fit = estimate_ardl(&frame, "y", "p", 1, &[GroupKey::Country], Bandwidth::Auto, FeOptions::default())
            .unwrap();
        assert_abs_diff_eq!(fit.params.alpha, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.params.beta[0], 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.params.gamma[0], 0.0, epsilon = 1e-8);
        assert!(fit.stable);
        assert_eq!(fit.regression.names, vec!["p", "y_lag1", "p_lag1"]);
    }

    #[test]
    fn zero_lags_rejected() {
        let frame = PanelFrame::from_records(vec![]).unwrap();
        assert!(matches!(
            estimate_ardl(&frame, "y", "p", 0, &[], Bandwidth::Auto, FeOptions::default()),
            Err(Error::Config(_))
        ));
    }
}
