//! Resampling inference: country-block and wild (Rademacher) bootstraps.
//!
//! Replicate `r` draws from its own generator stream, so results do not
//! depend on how replicates are scheduled across threads.
//!
//! The wild scheme keeps every regressor matrix fixed and flips residual
//! signs. Since OLS is linear in the outcome, each replicate is computed as
//! `b* = b + (X'X)^{-1} X' ((w - 1) e)` without re-running the regression;
//! fixed-effect demeaning drops out because `X` is already demeaned.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, params_from_coefficients, RecursionForm};
use crate::error::{Error, Result};
use crate::exec;
use crate::iv::{self, LpIvSpec};
use crate::lp::{self, Bandwidth, FeOptions, LpSpec, SampleFit};
use crate::panel::{GroupKey, PanelFrame};
use crate::rng::{streams, substream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    CountryBlock,
    WildRademacher,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "country_block" | "block" => Ok(Scheme::CountryBlock),
            "wild_rademacher" | "wild" => Ok(Scheme::WildRademacher),
            _ => Err(Error::Config(format!("unknown bootstrap scheme {s:?}"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::CountryBlock => "country_block",
            Scheme::WildRademacher => "wild_rademacher",
        })
    }
}

/// Unit receiving one Rademacher weight in the wild scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WildLevel {
    #[default]
    Country,
    Observation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArdlTarget {
    pub outcome: String,
    pub measure: String,
    pub lags: usize,
    #[serde(default)]
    pub groups: Vec<GroupKey>,
    /// Last horizon of the response path.
    pub horizon: usize,
    #[serde(default)]
    pub form: RecursionForm,
    #[serde(default)]
    pub bandwidth: Bandwidth,
    #[serde(default)]
    pub fe: FeOptions,
}

/// Estimator whose statistics are bootstrapped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    /// Shock coefficients per horizon, named `{shock}_h{h}`.
    Lp(LpSpec),
    /// Ratio per horizon, named `ratio_h{h}`.
    LpIv(LpIvSpec),
    /// `phi_h{k}` for `k = 0..=horizon` and `phi_inf`.
    Ardl(ArdlTarget),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub scheme: Scheme,
    pub replications: usize,
    pub seed: u64,
    pub target: Target,
    #[serde(default)]
    pub wild_level: WildLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapStat {
    pub statistic: String,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub sd: f64,
    pub n_effective: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub seed: u64,
    pub scheme: Scheme,
    pub replications: usize,
    pub failures: usize,
    pub stats: Vec<BootstrapStat>,
    /// Successful replicate draws, one vector per statistic in `stats` order.
    pub draws: Vec<Vec<f64>>,
}

impl BootstrapResult {
    pub fn stat(&self, name: &str) -> Option<&BootstrapStat> {
        self.stats.iter().find(|s| s.statistic == name)
    }
}

type Stats = Vec<(String, f64)>;

fn horizon_label(name: &str, h: i32) -> String {
    format!("{name}_h{h}")
}

/// Statistics of the target estimated on `frame`.
pub fn target_statistics(frame: &PanelFrame, target: &Target) -> Result<Stats> {
    match target {
        Target::Lp(spec) => {
            let res = lp::estimate_lp(frame, spec)?;
            Ok(res
                .irfs
                .iter()
                .flat_map(|r| r.responses.iter().map(|s| (horizon_label(&s.shock, r.horizon), s.coef)))
                .collect())
        }
        Target::LpIv(spec) => Ok(iv::estimate_lp_iv(frame, spec)?
            .iter()
            .filter_map(|r| r.ratio.map(|v| (horizon_label("ratio", r.horizon), v)))
            .collect()),
        Target::Ardl(t) => {
            let fit = dynamics::estimate_ardl(frame, &t.outcome, &t.measure, t.lags, &t.groups, t.bandwidth, t.fe)?;
            Ok(ardl_statistics(&fit.params, t))
        }
    }
}

fn ardl_statistics(params: &dynamics::ArdlParams, t: &ArdlTarget) -> Stats {
    let irf = dynamics::irf_from_ardl(params, t.horizon, t.form);
    let mut out: Stats = irf
        .phi
        .iter()
        .enumerate()
        .map(|(k, v)| (horizon_label("phi", k as i32), *v))
        .collect();
    out.push(("phi_inf".to_string(), irf.phi_inf));
    out
}

/// A fitted regression prepared for linear wild updates of its leading coefficients.
struct LinearFit {
    sample: SampleFit,
    influence: DMatrix<f64>,
}

impl LinearFit {
    fn new(sample: SampleFit, leading: usize) -> Self {
        let full = sample.influence();
        let influence = full.rows(0, leading).into_owned();
        Self { sample, influence }
    }

    /// Leading coefficients under outcome `fitted + w * resid`.
    fn perturbed(&self, row_weights: &[f64]) -> Vec<f64> {
        let shift: Vec<f64> = self
            .sample
            .rows
            .iter()
            .zip(&self.sample.fit.residuals)
            .map(|(&r, &e)| (row_weights[r] - 1.0) * e)
            .collect();
        (0..self.influence.nrows())
            .map(|j| {
                let delta: f64 = self.influence.row(j).iter().zip(&shift).map(|(a, s)| a * s).sum();
                self.sample.fit.coefficients[j] + delta
            })
            .collect()
    }
}

enum WildState {
    Lp {
        shocks: Vec<String>,
        horizons: Vec<(i32, LinearFit)>,
    },
    LpIv {
        horizons: Vec<(i32, LinearFit, Option<LinearFit>)>,
        first: LinearFit,
    },
    Ardl {
        fit: LinearFit,
        target: ArdlTarget,
    },
}

impl WildState {
    fn prepare(frame: &PanelFrame, target: &Target) -> Result<Self> {
        match target {
            Target::Lp(spec) => {
                spec.validate(frame)?;
                let mut horizons = Vec::new();
                for h in spec.horizon_range() {
                    if let Some(s) = lp::fit_lp_horizon(frame, spec, h)? {
                        horizons.push((h, LinearFit::new(s, spec.shocks.len())));
                    }
                }
                Ok(WildState::Lp {
                    shocks: spec.shocks.clone(),
                    horizons,
                })
            }
            Target::LpIv(spec) => {
                let results = iv::estimate_lp_iv(frame, spec)?;
                let defined: Vec<i32> = results.iter().filter(|r| r.ratio.is_some()).map(|r| r.horizon).collect();
                let rf_spec = spec.reduced_form();
                let fs_spec = spec.first_stage();
                let first = lp::fit_lp_horizon(frame, &fs_spec, 0)?
                    .ok_or_else(|| Error::Data("first-stage sample has too few complete observations".into()))?;
                let mut horizons = Vec::new();
                for h in defined {
                    let rf = lp::fit_lp_horizon(frame, &rf_spec, h)?
                        .ok_or_else(|| Error::Data(format!("horizon {h} reduced form unavailable")))?;
                    let matched = if spec.per_horizon_first_stage {
                        let fs = iv::matched_first_stage(frame, spec, h)?
                            .ok_or_else(|| Error::Data(format!("horizon {h} first stage unavailable")))?;
                        Some(LinearFit::new(fs, 1))
                    } else {
                        None
                    };
                    horizons.push((h, LinearFit::new(rf, 1), matched));
                }
                Ok(WildState::LpIv {
                    horizons,
                    first: LinearFit::new(first, 1),
                })
            }
            Target::Ardl(t) => {
                let s = dynamics::ardl_sample(frame, &t.outcome, &t.measure, t.lags, &t.groups, t.bandwidth, t.fe)?;
                let k = s.fit.coefficients.len();
                Ok(WildState::Ardl {
                    fit: LinearFit::new(s, k),
                    target: t.clone(),
                })
            }
        }
    }

    /// Whether every underlying regression fits without residual.
    fn exact(&self) -> bool {
        let zero = |f: &LinearFit| f.sample.fit.residuals.iter().all(|e| *e == 0.0);
        match self {
            WildState::Lp { horizons, .. } => horizons.iter().all(|(_, f)| zero(f)),
            WildState::LpIv { horizons, first } => {
                zero(first) && horizons.iter().all(|(_, rf, fs)| zero(rf) && fs.as_ref().is_none_or(zero))
            }
            WildState::Ardl { fit, .. } => zero(fit),
        }
    }

    fn replicate(&self, row_weights: &[f64]) -> Stats {
        match self {
            WildState::Lp { shocks, horizons } => horizons
                .iter()
                .flat_map(|(h, f)| {
                    let b = f.perturbed(row_weights);
                    shocks.iter().zip(b).map(|(s, v)| (horizon_label(s, *h), v)).collect::<Vec<_>>()
                })
                .collect(),
            WildState::LpIv { horizons, first } => {
                let fs0 = first.perturbed(row_weights)[0];
                horizons
                    .iter()
                    .map(|(h, rf, fs)| {
                        let denom = fs.as_ref().map_or(fs0, |f| f.perturbed(row_weights)[0]);
                        (horizon_label("ratio", *h), rf.perturbed(row_weights)[0] / denom)
                    })
                    .collect()
            }
            WildState::Ardl { fit, target } => {
                let c = fit.perturbed(row_weights);
                ardl_statistics(&params_from_coefficients(&c, target.lags), target)
            }
        }
    }
}

fn rademacher(rng: &mut StreamRng) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// Per-row Rademacher weights for one replicate.
pub fn wild_weights(frame: &PanelFrame, level: WildLevel, rng: &mut StreamRng) -> Vec<f64> {
    match level {
        WildLevel::Observation => (0..frame.nrows()).map(|_| rademacher(rng)).collect(),
        WildLevel::Country => {
            let list = frame.country_list();
            let signs: Vec<f64> = list.iter().map(|_| rademacher(rng)).collect();
            frame
                .countries()
                .iter()
                .map(|c| signs[list.binary_search(c).expect("country in list")])
                .collect()
        }
    }
}

/// Countries drawn with replacement for one block replicate.
pub fn block_draw(countries: &[String], rng: &mut StreamRng) -> Vec<String> {
    (0..countries.len())
        .map(|_| countries[rng.random_range(0..countries.len())].clone())
        .collect()
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    // Shifted by the first draw so identical draws give exactly zero.
    let k = v[0];
    let m = v.iter().map(|x| x - k).sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - k - m) * (x - k - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn summarize(point: &Stats, replicates: &[Option<Stats>]) -> (Vec<BootstrapStat>, Vec<Vec<f64>>) {
    let mut stats = Vec::with_capacity(point.len());
    let mut all_draws = Vec::with_capacity(point.len());
    for (j, (name, est)) in point.iter().enumerate() {
        let draws: Vec<f64> = replicates
            .iter()
            .flatten()
            .map(|r| r[j].1)
            .filter(|v| v.is_finite())
            .collect();
        let mut sorted = draws.clone();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = if sorted.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (quantile_sorted(&sorted, 0.025), quantile_sorted(&sorted, 0.975))
        };
        stats.push(BootstrapStat {
            statistic: name.clone(),
            estimate: *est,
            lo,
            hi,
            sd: sample_sd(&draws),
            n_effective: draws.len(),
        });
        all_draws.push(draws);
    }
    (stats, all_draws)
}

/// Runs the bootstrap described by `spec`.
pub fn run_bootstrap(frame: &PanelFrame, spec: &BootstrapSpec) -> Result<BootstrapResult> {
    if spec.replications == 0 {
        return Err(Error::Config("bootstrap needs at least one replication".into()));
    }
    let point = target_statistics(frame, &spec.target)?;
    let names: Vec<&str> = point.iter().map(|(n, _)| n.as_str()).collect();
    let stream = |r: usize| substream(spec.seed, streams::BOOTSTRAP + r as u64);

    let replicates: Vec<Option<Stats>> = match spec.scheme {
        Scheme::WildRademacher => {
            let state = WildState::prepare(frame, &spec.target)?;
            exec::map_indexed(spec.replications, |r| {
                let mut rng = stream(r);
                let w = wild_weights(frame, spec.wild_level, &mut rng);
                Some(state.replicate(&w))
            })
        }
        Scheme::CountryBlock => {
            let countries = frame.country_list();
            // An exact fit holds on every resample, so a replicate that
            // estimates at all reproduces the point estimate.
            let exact = WildState::prepare(frame, &spec.target).is_ok_and(|s| s.exact());
            exec::map_indexed(spec.replications, |r| {
                let mut rng = stream(r);
                let draw = block_draw(&countries, &mut rng);
                let resampled = frame.resample_countries(&draw).ok()?;
                match target_statistics(&resampled, &spec.target) {
                    Ok(_) if exact => Some(point.clone()),
                    Ok(s) => Some(s),
                    Err(e) => {
                        log::debug!("replicate {r} failed: {e}");
                        None
                    }
                }
            })
        }
    };

    // A replicate whose statistics do not line up with the point estimate counts as failed.
    let replicates: Vec<Option<Stats>> = replicates
        .into_iter()
        .map(|r| r.filter(|s| s.len() == names.len() && s.iter().zip(&names).all(|((a, _), b)| a == b)))
        .collect();
    let failures = replicates.iter().filter(|r| r.is_none()).count();
    if failures == spec.replications {
        return Err(Error::Inference(format!("all {failures} bootstrap replicates failed")));
    }
    if failures > 0 {
        log::warn!("{failures} of {} bootstrap replicates failed and were excluded", spec.replications);
    }
    let (stats, draws) = summarize(&point, &replicates);
    Ok(BootstrapResult {
        seed: spec.seed,
        scheme: spec.scheme,
        replications: spec.replications,
        failures,
        stats,
        draws,
    })
}

/// Writes a `# seed=...` header line, then `statistic,estimate,lo,hi,sd,n_effective`.
pub fn write_bootstrap_csv<W: Write>(result: &BootstrapResult, mut out: W) -> Result<()> {
    writeln!(
        out,
        "# seed={} scheme={} replications={} failures={}",
        result.seed, result.scheme, result.replications, result.failures
    )?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["statistic", "estimate", "lo", "hi", "sd", "n_effective"])?;
    for s in &result.stats {
        w.write_record([
            s.statistic.clone(),
            s.estimate.to_string(),
            s.lo.to_string(),
            s.hi.to_string(),
            s.sd.to_string(),
            s.n_effective.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
