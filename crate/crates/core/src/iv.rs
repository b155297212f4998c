//! Instrumental-variables local projections.
//!
//! The reduced form regresses `y_{t+h}` on the instrument `z_t` and controls;
//! the first stage regresses `p_t` on the same right-hand side. The response
//! at `h` is the ratio of the two instrument coefficients.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::lp::{self, Bandwidth, FeOptions, IrfResult, LpSpec, SampleFit};
use crate::panel::{GroupKey, PanelFrame};

/// First-stage coefficients at or below this magnitude leave the ratio undefined.
pub const FS_ZERO_TOL: f64 = 1e-12;
/// First-stage |t| below this triggers the weak-instrument flag.
pub const WEAK_T: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpIvSpec {
    pub outcome: String,
    pub shock: String,
    pub instrument: String,
    #[serde(default)]
    pub controls: Vec<String>,
    #[serde(default)]
    pub groups: Vec<GroupKey>,
    pub horizons: (i32, i32),
    #[serde(default)]
    pub bandwidth: Bandwidth,
    #[serde(default)]
    pub fe: FeOptions,
    /// Re-estimate the first stage on each horizon's reduced-form sample.
    #[serde(default)]
    pub per_horizon_first_stage: bool,
}

impl LpIvSpec {
    pub fn new(outcome: &str, shock: &str, instrument: &str, horizons: (i32, i32)) -> Self {
        Self {
            outcome: outcome.to_string(),
            shock: shock.to_string(),
            instrument: instrument.to_string(),
            controls: Vec::new(),
            groups: Vec::new(),
            horizons,
            bandwidth: Bandwidth::Auto,
            fe: FeOptions::default(),
            per_horizon_first_stage: false,
        }
    }

    pub fn with_controls(mut self, controls: &[String]) -> Self {
        self.controls = controls.to_vec();
        self
    }

    pub fn with_groups(mut self, groups: &[GroupKey]) -> Self {
        self.groups = groups.to_vec();
        self
    }

    /// Projection of the outcome on the instrument.
    pub fn reduced_form(&self) -> LpSpec {
        LpSpec {
            outcome: self.outcome.clone(),
            shocks: vec![self.instrument.clone()],
            controls: self.controls.clone(),
            groups: self.groups.clone(),
            horizons: self.horizons,
            bandwidth: self.bandwidth,
            fe: self.fe,
        }
    }

    /// Projection of the shock on the instrument.
    pub fn first_stage(&self) -> LpSpec {
        LpSpec {
            outcome: self.shock.clone(),
            ..self.reduced_form()
        }
    }

    pub fn validate(&self, frame: &PanelFrame) -> Result<()> {
        if self.instrument == self.shock {
            return Err(Error::Config("instrument must differ from the shock".into()));
        }
        if self.controls.contains(&self.shock) {
            return Err(Error::Config("the shock cannot also be a control".into()));
        }
        self.reduced_form().validate(frame)?;
        frame.column(&self.shock)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpIvResult {
    pub horizon: i32,
    pub rf_coef: f64,
    pub rf_se: f64,
    pub fs_coef: f64,
    pub fs_se: f64,
    pub fs_t: f64,
    /// `None` when the first stage is numerically zero.
    pub ratio: Option<f64>,
    pub ratio_se: Option<f64>,
    pub weak: bool,
    pub nobs: usize,
    pub n_countries: usize,
}

impl LpIvResult {
    pub fn lo95(&self) -> Option<f64> {
        Some(self.ratio? - lp::Z95 * self.ratio_se?)
    }

    pub fn hi95(&self) -> Option<f64> {
        Some(self.ratio? + lp::Z95 * self.ratio_se?)
    }
}

/// First stage on the rows where the horizon-`h` outcome is observed.
pub fn matched_first_stage(frame: &PanelFrame, spec: &LpIvSpec, horizon: i32) -> Result<Option<SampleFit>> {
    let lead = frame.shifted(&spec.outcome, horizon)?;
    let dependent: Vec<f64> = frame
        .column(&spec.shock)?
        .iter()
        .zip(&lead)
        .map(|(&p, &y)| if y.is_nan() { f64::NAN } else { p })
        .collect();
    let columns: Vec<(&str, &[f64])> = std::iter::once(&spec.instrument)
        .chain(&spec.controls)
        .map(|n| frame.column(n).map(|c| (n.as_str(), c)))
        .collect::<Result<_>>()?;
    lp::fit_panel_ols(frame, &dependent, &columns, &spec.groups, spec.bandwidth, 0, spec.fe)
}

/// Delta-method variance of `rf / fs`:
///
/// ```text
/// Var = Var(rf)/fs^2 + rf^2 Var(fs)/fs^4 - 2 rf Cov(rf, fs)/fs^3
/// ```
///
/// `Cov(rf, fs)` pairs the Driscoll-Kraay moment sums of the two
/// regressions by calendar year with the reduced form's bandwidth.
fn ratio_variance(rf: &SampleFit, fs: &SampleFit) -> Result<f64> {
    let r = rf.fit.coefficients[0];
    let f = fs.fit.coefficients[0];
    let cross = lp::dk_cross_covariance(
        (&rf.design, &rf.fit.residuals, &rf.periods),
        (&fs.design, &fs.fit.residuals, &fs.periods),
        rf.fit.bandwidth,
    )?;
    let var_rf = rf.fit.covariance[(0, 0)];
    let var_fs = fs.fit.covariance[(0, 0)];
    let cov = cross[(0, 0)];
    Ok(var_rf / (f * f) + r * r * var_fs / f.powi(4) - 2.0 * r * cov / f.powi(3))
}

fn assemble(horizon: i32, rf: &SampleFit, fs: &SampleFit, defined: bool) -> Result<LpIvResult> {
    let rf_coef = rf.fit.coefficients[0];
    let fs_coef = fs.fit.coefficients[0];
    let fs_se = fs.fit.se(0);
    let fs_t = fs_coef / fs_se;
    let (ratio, ratio_se) = if defined && fs_coef.abs() > FS_ZERO_TOL {
        let var = ratio_variance(rf, fs)?;
        (Some(rf_coef / fs_coef), Some(var.max(0.0).sqrt()))
    } else {
        (None, None)
    };
    Ok(LpIvResult {
        horizon,
        rf_coef,
        rf_se: rf.fit.se(0),
        fs_coef,
        fs_se,
        fs_t,
        ratio,
        ratio_se,
        weak: !(fs_t.abs() >= WEAK_T),
        nobs: rf.fit.nobs,
        n_countries: rf.fit.n_countries,
    })
}

/// Ratio-form LP-IV at every horizon of the spec.
pub fn estimate_lp_iv(frame: &PanelFrame, spec: &LpIvSpec) -> Result<Vec<LpIvResult>> {
    spec.validate(frame)?;
    let fs_spec = spec.first_stage();
    let first = lp::fit_lp_horizon(frame, &fs_spec, 0)?
        .ok_or_else(|| Error::Data("first-stage sample has too few complete observations".into()))?;
    let fs_coef = first.fit.coefficients[0];
    let defined = fs_coef.abs() > FS_ZERO_TOL;
    if !defined {
        log::warn!("first-stage coefficient is zero; LP-IV responses are undefined at every horizon");
    } else if !(fs_coef / first.fit.se(0)).abs().ge(&WEAK_T) {
        log::warn!(
            "weak instrument: first-stage t = {:.3} (below {WEAK_T}); ratios are unreliable",
            fs_coef / first.fit.se(0)
        );
    }

    let rf_spec = spec.reduced_form();
    let horizons: Vec<i32> = rf_spec.horizon_range().collect();
    let fits = exec::map_slice(&horizons, |&h| -> Result<Option<LpIvResult>> {
        let Some(rf) = lp::fit_lp_horizon(frame, &rf_spec, h)? else {
            return Ok(None);
        };
        if spec.per_horizon_first_stage {
            match matched_first_stage(frame, spec, h)? {
                Some(fs) => assemble(h, &rf, &fs, defined).map(Some),
                None => Ok(None),
            }
        } else {
            assemble(h, &rf, &first, defined).map(Some)
        }
    });
    let mut out = Vec::with_capacity(horizons.len());
    for (h, r) in horizons.into_iter().zip(fits) {
        match r? {
            Some(res) => out.push(res),
            None => log::warn!("horizon {h}: too few complete observations, skipped"),
        }
    }
    Ok(out)
}

/// Response of the endogenous shock itself to the instrument.
pub fn first_stage_irf(frame: &PanelFrame, spec: &LpIvSpec) -> Result<Vec<IrfResult>> {
    spec.validate(frame)?;
    Ok(lp::estimate_lp(frame, &spec.first_stage())?.irfs)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Writes `horizon,shock,coef,se,lo95,hi95,nobs,n_countries,rf_coef,fs_coef,fs_t,ratio,ratio_se`;
/// undefined ratios are written as `NA`.
pub fn write_lp_iv_csv<W: Write>(shock: &str, results: &[LpIvResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "horizon", "shock", "coef", "se", "lo95", "hi95", "nobs", "n_countries", "rf_coef", "fs_coef", "fs_t",
        "ratio", "ratio_se",
    ])?;
    for r in results {
        w.write_record([
            r.horizon.to_string(),
            shock.to_string(),
            opt(r.ratio),
            opt(r.ratio_se),
            opt(r.lo95()),
            opt(r.hi95()),
            r.nobs.to_string(),
            r.n_countries.to_string(),
            r.rf_coef.to_string(),
            r.fs_coef.to_string(),
            r.fs_t.to_string(),
            opt(r.ratio),
            opt(r.ratio_se),
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

    fn frame(z_of: impl Fn(usize, usize) -> f64, p_of: impl Fn(f64, usize, usize) -> f64) -> PanelFrame {
        let mut recs = Vec::new();
        for c in 0..4 {
            for t in 0..8 {
                let z = z_of(c, t);
                let p = p_of(z, c, t);
                recs.push(PanelRecord {
                    country: format!("C{c}"),
                    year: 1990 + t as i32,
                    region: "r".into(),
                    values: vec![("y".into(), 2.0 * p + c as f64), ("p".into(), p), ("z".into(), z)],
                    groups: vec![],
                });
            }
        }
        PanelFrame::from_records(recs).unwrap()
    }

    fn z_irregular(c: usize, t: usize) -> f64 {
        ((c * 5 + t * 3 + c * t) % 7) as f64 - 3.0 + 0.1 * t as f64
    }

    #[test]
    fn noiseless_ratio() {
        let f = frame(z_irregular, |z, c, t| 0.5 * z + 0.01 * ((c + 2 * t) % 3) as f64);
        // Exact only when p is an exact function of z; drop the perturbation.
        let f_exact = frame(z_irregular, |z, _, _| 0.5 * z);
        let spec = LpIvSpec::new("y", "p", "z", (0, 0)).with_groups(&[GroupKey::Country]);
        let r = &estimate_lp_iv(&f_exact, &spec).unwrap()[0];
        assert_abs_diff_eq!(r.fs_coef, 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(r.rf_coef, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(r.ratio.unwrap(), 2.0, epsilon = 1e-8);
        assert!(!r.weak);
        assert!(estimate_lp_iv(&f, &spec).unwrap()[0].ratio.is_some());
    }

    #[test]
    fn perfect_instrument_equals_ols() {
        let f = frame(z_irregular, |z, c, t| z + 0.3 * ((c * t) % 4) as f64);
        let mut f2 = f.clone();
        f2.insert_column("z2", f.column("p").unwrap().to_vec()).unwrap();
        let spec = LpIvSpec::new("y", "p", "z2", (0, 3)).with_groups(&[GroupKey::Country]);
        let iv = estimate_lp_iv(&f2, &spec).unwrap();
        let ols = lp::estimate_lp(&f2, &LpSpec::new("y", &["p"], (0, 3)).with_groups(&[GroupKey::Country])).unwrap();
        for (a, b) in iv.iter().zip(&ols.irfs) {
            assert_abs_diff_eq!(a.ratio.unwrap(), b.coef("p").unwrap(), epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_first_stage_is_undefined() {
        // p constant within country: demeaned first stage is exactly zero.
        let f = frame(z_irregular, |_, c, _| c as f64);
        let spec = LpIvSpec::new("y", "p", "z", (0, 2)).with_groups(&[GroupKey::Country]);
        let res = estimate_lp_iv(&f, &spec).unwrap();
        assert_eq!(res.len(), 3);
        assert!(res.iter().all(|r| r.ratio.is_none() && r.weak));
    }

    #[test]
    fn instrument_must_differ() {
        let f = frame(z_irregular, |z, _, _| z);
        assert!(matches!(
            estimate_lp_iv(&f, &LpIvSpec::new("y", "p", "p", (0, 0))),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn csv_marks_undefined() {
        let r = LpIvResult {
            horizon: 0,
            rf_coef: 1.0,
            rf_se: 0.1,
            fs_coef: 0.0,
            fs_se: 0.1,
            fs_t: 0.0,
            ratio: None,
            ratio_se: None,
            weak: true,
            nobs: 3,
            n_countries: 1,
        };
        let mut buf = Vec::new();
        write_lp_iv_csv("p", &[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().ends_with("fs_t,ratio,ratio_se"));
        assert!(text.lines().nth(1).unwrap().contains(",NA,"));
    }
}
