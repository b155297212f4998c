//! Panel local projections.
//!
//! For each horizon `h` the outcome led by `h` years is regressed on the
//! shocks and controls after the fixed effects are partialled out, on the
//! complete-case sample of that horizon. Coefficients on the shocks trace
//! the impulse response; standard errors are Driscoll-Kraay.

pub mod hac;

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::{matrix_from_columns, ols};
use crate::panel::{FixedEffects, GroupKey, PanelFrame, DEFAULT_MAX_ITER, DEFAULT_TOL};

pub use hac::{auto_bandwidth, dk_covariance, dk_cross_covariance};

/// Two-sided 95% normal critical value.
pub const Z95: f64 = 1.96;

/// HAC lag truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Bandwidth {
    #[default]
    Auto,
    Fixed(usize),
}

impl Bandwidth {
    pub fn resolve(self, horizon: i32, n_periods: usize) -> usize {
        match self {
            Bandwidth::Auto => auto_bandwidth(horizon, n_periods),
            Bandwidth::Fixed(l) => l,
        }
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Auto => f.write_str("auto"),
            Bandwidth::Fixed(l) => write!(f, "{l}"),
        }
    }
}

impl std::str::FromStr for Bandwidth {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Bandwidth::Auto);
        }
        s.parse::<usize>()
            .map(Bandwidth::Fixed)
            .map_err(|_| Error::Config(format!("bandwidth must be `auto` or a nonnegative integer, got {s:?}")))
    }
}

impl Serialize for Bandwidth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Bandwidth::Auto => s.serialize_str("auto"),
            Bandwidth::Fixed(l) => s.serialize_u64(*l as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => Ok(Bandwidth::Fixed(n as usize)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FeOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSpec {
    pub outcome: String,
    pub shocks: Vec<String>,
    #[serde(default)]
    pub controls: Vec<String>,
    #[serde(default)]
    pub groups: Vec<GroupKey>,
    pub horizons: (i32, i32),
    #[serde(default)]
    pub bandwidth: Bandwidth,
    #[serde(default)]
    pub fe: FeOptions,
}

impl LpSpec {
    pub fn new(outcome: &str, shocks: &[&str], horizons: (i32, i32)) -> Self {
        Self {
            outcome: outcome.to_string(),
            shocks: shocks.iter().map(|s| s.to_string()).collect(),
            controls: Vec::new(),
            groups: Vec::new(),
            horizons,
            bandwidth: Bandwidth::Auto,
            fe: FeOptions::default(),
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

    pub fn with_bandwidth(mut self, bandwidth: Bandwidth) -> Self {
        self.bandwidth = bandwidth;
        self
    }

    pub fn validate(&self, frame: &PanelFrame) -> Result<()> {
        if self.shocks.is_empty() {
            return Err(Error::Config("at least one shock is required".into()));
        }
        if self.horizons.0 > self.horizons.1 {
            return Err(Error::Config(format!("horizon range {:?} is reversed", self.horizons)));
        }
        let mut seen = BTreeSet::new();
        for name in self.shocks.iter().chain(&self.controls) {
            if !seen.insert(name) {
                return Err(Error::Config(format!("regressor `{name}` listed twice")));
            }
        }
        for name in std::iter::once(&self.outcome).chain(&self.shocks).chain(&self.controls) {
            frame.column(name)?;
        }
        for g in &self.groups {
            frame.group_labels(g)?;
        }
        Ok(())
    }

    pub fn horizon_range(&self) -> impl Iterator<Item = i32> {
        self.horizons.0..=self.horizons.1
    }
}

/// OLS results on one estimation sample.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub nobs: usize,
    pub n_countries: usize,
    /// R-squared of the regression on fixed-effect-demeaned data.
    pub within_r2: f64,
    pub bandwidth: usize,
}

impl RegressionFit {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn se(&self, j: usize) -> f64 {
        self.covariance[(j, j)].max(0.0).sqrt()
    }
}

/// A fit together with the sample and design it was computed on.
#[derive(Debug, Clone)]
pub struct SampleFit {
    pub fit: RegressionFit,
    /// Frame rows in the estimation sample.
    pub rows: Vec<usize>,
    /// Demeaned regressors, one row per sample row.
    pub design: DMatrix<f64>,
    /// `(X'X)^{-1}` of the demeaned design.
    pub bread: DMatrix<f64>,
    pub periods: Vec<i32>,
    /// Country index (into the frame's country list) of each sample row.
    pub clusters: Vec<usize>,
}

impl SampleFit {
    /// `(X'X)^{-1} X'`: coefficient change per unit change in the outcome.
    pub fn influence(&self) -> DMatrix<f64> {
        &self.bread * self.design.transpose()
    }
}

/// Regresses `dependent` on `regressors` after removing `groups` effects.
///
/// Rows with any missing cell are dropped. Returns `Ok(None)` when fewer
/// than `k + 1` complete rows remain.
pub fn fit_panel_ols(
    frame: &PanelFrame,
    dependent: &[f64],
    regressors: &[(&str, &[f64])],
    groups: &[GroupKey],
    bandwidth: Bandwidth,
    horizon: i32,
    fe: FeOptions,
) -> Result<Option<SampleFit>> {
    let k = regressors.len();
    let rows: Vec<usize> = (0..frame.nrows())
        .filter(|&i| !dependent[i].is_nan() && regressors.iter().all(|(_, c)| !c[i].is_nan()))
        .collect();
    if rows.len() < k + 1 {
        return Ok(None);
    }
    let n = rows.len();
    let effects = FixedEffects::new(frame.group_ids(groups, &rows)?, n);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    cols.push(rows.iter().map(|&i| dependent[i]).collect());
    for (_, c) in regressors {
        cols.push(rows.iter().map(|&i| c[i]).collect());
    }
    effects.demean_all(&mut cols, fe.tol, fe.max_iter)?;
    let y = DVector::from_vec(cols.remove(0));
    let x = matrix_from_columns(&cols, n);
    let names: Vec<String> = regressors.iter().map(|(n, _)| n.to_string()).collect();
    let sol = ols(&x, &y, &names)?;

    let periods: Vec<i32> = rows.iter().map(|&i| frame.years()[i]).collect();
    let n_periods = periods.iter().collect::<BTreeSet<_>>().len();
    let bw = bandwidth.resolve(horizon, n_periods);
    let residuals: Vec<f64> = sol.residuals.iter().copied().collect();
    let covariance = hac::dk_with_bread(&sol.bread, &x, &residuals, &periods, bw);

    let country_list = frame.country_list();
    let countries = frame.countries();
    let clusters: Vec<usize> = rows
        .iter()
        .map(|&i| country_list.binary_search(&countries[i]).expect("country in list"))
        .collect();
    let n_countries = clusters.iter().collect::<BTreeSet<_>>().len();

    let tss = y.norm_squared();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let within_r2 = if tss > 0.0 { 1.0 - ssr / tss } else { 0.0 };

    Ok(Some(SampleFit {
        fit: RegressionFit {
            names,
            coefficients: sol.coefficients.iter().copied().collect(),
            covariance,
            residuals,
            nobs: n,
            n_countries,
            within_r2,
            bandwidth: bw,
        },
        rows,
        design: x,
        bread: sol.bread,
        periods,
        clusters,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShockResponse {
    pub shock: String,
    pub coef: f64,
    pub se: f64,
    pub lo95: f64,
    pub hi95: f64,
}

impl ShockResponse {
    fn new(shock: &str, coef: f64, se: f64) -> Self {
        Self {
            shock: shock.to_string(),
            coef,
            se,
            lo95: coef - Z95 * se,
            hi95: coef + Z95 * se,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IrfResult {
    pub horizon: i32,
    pub responses: Vec<ShockResponse>,
    pub nobs: usize,
    pub n_countries: usize,
    pub within_r2: f64,
    pub bandwidth: usize,
}

impl IrfResult {
    pub fn coef(&self, shock: &str) -> Option<f64> {
        self.responses.iter().find(|r| r.shock == shock).map(|r| r.coef)
    }
}

#[derive(Debug, Clone, Default)]
pub struct LpResult {
    pub irfs: Vec<IrfResult>,
    /// Horizons dropped for lack of observations.
    pub skipped: Vec<i32>,
}

impl LpResult {
    pub fn at(&self, horizon: i32) -> Option<&IrfResult> {
        self.irfs.iter().find(|r| r.horizon == horizon)
    }

    /// Coefficient path of one shock over the estimated horizons.
    pub fn path(&self, shock: &str) -> Vec<f64> {
        self.irfs.iter().filter_map(|r| r.coef(shock)).collect()
    }
}

/// Fits the projection for one horizon.
pub fn fit_lp_horizon(frame: &PanelFrame, spec: &LpSpec, horizon: i32) -> Result<Option<SampleFit>> {
    let dependent = frame.shifted(&spec.outcome, horizon)?;
    let columns: Vec<(&str, &[f64])> = spec
        .shocks
        .iter()
        .chain(&spec.controls)
        .map(|n| frame.column(n).map(|c| (n.as_str(), c)))
        .collect::<Result<_>>()?;
    fit_panel_ols(frame, &dependent, &columns, &spec.groups, spec.bandwidth, horizon, spec.fe)
}

fn irf_from_fit(horizon: i32, spec: &LpSpec, fit: &RegressionFit) -> IrfResult {
    IrfResult {
        horizon,
        responses: spec
            .shocks
            .iter()
            .enumerate()
            .map(|(j, s)| ShockResponse::new(s, fit.coefficients[j], fit.se(j)))
            .collect(),
        nobs: fit.nobs,
        n_countries: fit.n_countries,
        within_r2: fit.within_r2,
        bandwidth: fit.bandwidth,
    }
}

/// Estimates the projection at every horizon in the spec.
pub fn estimate_lp(frame: &PanelFrame, spec: &LpSpec) -> Result<LpResult> {
    spec.validate(frame)?;
    let horizons: Vec<i32> = spec.horizon_range().collect();
    let fits = exec::map_slice(&horizons, |&h| fit_lp_horizon(frame, spec, h));
    let mut out = LpResult::default();
    for (h, fit) in horizons.into_iter().zip(fits) {
        match fit? {
            Some(sf) => out.irfs.push(irf_from_fit(h, spec, &sf.fit)),
            None => {
                log::warn!("horizon {h}: too few complete observations, skipped");
                out.skipped.push(h);
            }
        }
    }
    Ok(out)
}

/// Writes `horizon,shock,coef,se,lo95,hi95,nobs,n_countries`.
pub fn write_irf_csv<W: Write>(irfs: &[IrfResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["horizon", "shock", "coef", "se", "lo95", "hi95", "nobs", "n_countries"])?;
    for r in irfs {
        for s in &r.responses {
            w.write_record([
                r.horizon.to_string(),
                s.shock.clone(),
                s.coef.to_string(),
                s.se.to_string(),
                s.lo95.to_string(),
                s.hi95.to_string(),
                r.nobs.to_string(),
                r.n_countries.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Partials controls and fixed effects out of `x` and `y`; returns
/// `(x_resid, y_resid)` per complete row.
pub fn fwl_residualize(
    frame: &PanelFrame,
    y: &str,
    x: &str,
    controls: &[String],
    groups: &[GroupKey],
    fe: FeOptions,
) -> Result<Vec<(f64, f64)>> {
    let yc = frame.column(y)?;
    let xc = frame.column(x)?;
    let cc: Vec<&[f64]> = controls.iter().map(|c| frame.column(c)).collect::<Result<_>>()?;
    let rows: Vec<usize> = (0..frame.nrows())
        .filter(|&i| !yc[i].is_nan() && !xc[i].is_nan() && cc.iter().all(|c| !c[i].is_nan()))
        .collect();
    if rows.len() < controls.len() + 2 {
        return Err(Error::Data(format!("{} complete rows are too few to residualize", rows.len())));
    }
    let n = rows.len();
    let effects = FixedEffects::new(frame.group_ids(groups, &rows)?, n);
    let mut cols: Vec<Vec<f64>> = std::iter::once(xc)
        .chain(std::iter::once(yc))
        .chain(cc.iter().copied())
        .map(|c| rows.iter().map(|&i| c[i]).collect())
        .collect();
    effects.demean_all(&mut cols, fe.tol, fe.max_iter)?;
    let x_dm = DVector::from_vec(cols[0].clone());
    let y_dm = DVector::from_vec(cols[1].clone());
    let (x_res, y_res) = if controls.is_empty() {
        (x_dm, y_dm)
    } else {
        let z = matrix_from_columns(&cols[2..], n);
        let names: Vec<String> = controls.to_vec();
        (ols(&z, &x_dm, &names)?.residuals, ols(&z, &y_dm, &names)?.residuals)
    };
    Ok(x_res.iter().copied().zip(y_res.iter().copied()).collect())
}

/// Slope of `y` on `x` through the origin, for residualized pairs.
pub fn residual_slope(pairs: &[(f64, f64)]) -> f64 {
    let sxy: f64 = pairs.iter().map(|(x, y)| x * y).sum();
    let sxx: f64 = pairs.iter().map(|(x, _)| x * x).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bin {
    pub mean_x: f64,
    pub mean_y: f64,
    pub count: usize,
}

/// Equal-count bins on `x`; counts differ by at most one, larger bins first.
pub fn binscatter(pairs: &[(f64, f64)], n_bins: usize) -> Result<Vec<Bin>> {
    if n_bins == 0 || n_bins > pairs.len() {
        return Err(Error::Config(format!(
            "number of bins must be between 1 and {}, got {n_bins}",
            pairs.len()
        )));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let base = sorted.len() / n_bins;
    let extra = sorted.len() % n_bins;
    let mut out = Vec::with_capacity(n_bins);
    let mut start = 0;
    for b in 0..n_bins {
        let len = base + usize::from(b < extra);
        let chunk = &sorted[start..start + len];
        start += len;
        let count = chunk.len();
        out.push(Bin {
            mean_x: chunk.iter().map(|p| p.0).sum::<f64>() / count as f64,
            mean_y: chunk.iter().map(|p| p.1).sum::<f64>() / count as f64,
            count,
        });
    }
    Ok(out)
}

pub fn write_binscatter_csv<W: Write>(bins: &[Bin], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin", "mean_x", "mean_y", "count"])?;
    for (i, b) in bins.iter().enumerate() {
        w.write_record([i.to_string(), b.mean_x.to_string(), b.mean_y.to_string(), b.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
