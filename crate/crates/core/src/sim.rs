//! Synthetic panels and event streams with known dynamics.
//!
//! The measure follows an AR process driven by innovations and an optional
//! instrument; the outcome follows an ARDL in the measure. Fixed effects are
//! added to the observed outcome, so any estimator that absorbs the matching
//! groups sees the pure dynamic system. Every draw comes from a substream
//! keyed by the seed and the country (or pair), so output does not depend on
//! thread scheduling.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, convolve_truncated, spectral_radius, ArdlParams, RecursionForm};
use crate::error::{Error, Result};
use crate::events::{EconomicEvent, EventRecord, QuadClass, Relationship};
use crate::exec;
use crate::panel::{PanelFrame, PanelRecord};
use crate::relations::WeightTable;
use crate::rng::{streams, substream, StreamRng};

/// How measure innovations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnovationDesign {
    #[default]
    Gaussian,
    /// Country `c`, period `t` gets entry `(c, t + 1)` of a Sylvester
    /// Hadamard matrix: innovations of different periods are exactly
    /// orthogonal across countries and sum to zero within each period.
    Orthogonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpSpec {
    pub n_countries: usize,
    pub n_years: usize,
    pub first_year: i32,
    pub measure_ar: Vec<f64>,
    pub innovation_sd: f64,
    pub design: InnovationDesign,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub noise_sd: f64,
    pub country_sd: f64,
    pub year_sd: f64,
    pub region_year_sd: f64,
    /// Loading of the instrument `z` in the measure equation.
    pub instrument_loading: f64,
    /// Loading of the outcome shock in the measure innovation.
    pub endogeneity: f64,
    pub regions: usize,
    /// Periods simulated and discarded before the first reported year.
    pub burn_in: usize,
    pub truth_horizon: usize,
    pub seed: u64,
    pub allow_unstable: bool,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            n_countries: 50,
            n_years: 60,
            first_year: 1960,
            measure_ar: vec![0.6],
            innovation_sd: 1.0,
            design: InnovationDesign::Gaussian,
            alpha: 1.0,
            beta: vec![0.5],
            gamma: vec![0.0],
            noise_sd: 1.0,
            country_sd: 0.0,
            year_sd: 0.0,
            region_year_sd: 0.0,
            instrument_loading: 0.0,
            endogeneity: 0.0,
            regions: 1,
            burn_in: 50,
            truth_horizon: 30,
            seed: 0,
            allow_unstable: false,
        }
    }
}

impl DgpSpec {
    pub fn params(&self) -> Result<ArdlParams> {
        ArdlParams::new(self.alpha, &self.beta, &self.gamma)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_countries == 0 || self.n_years == 0 || self.regions == 0 {
            return Err(Error::Config("countries, years and regions must be positive".into()));
        }
        self.params()?;
        for (name, v) in [
            ("innovation_sd", self.innovation_sd),
            ("noise_sd", self.noise_sd),
            ("country_sd", self.country_sd),
            ("year_sd", self.year_sd),
            ("region_year_sd", self.region_year_sd),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !self.allow_unstable {
            if spectral_radius(&self.measure_ar) >= 1.0 {
                return Err(Error::Config("measure AR process is not stable".into()));
            }
            if spectral_radius(&self.beta) >= 1.0 {
                return Err(Error::Config("outcome lag polynomial is not stable".into()));
            }
        }
        if self.design == InnovationDesign::Orthogonal {
            if !self.n_countries.is_power_of_two() || self.n_countries < self.n_years + 1 {
                return Err(Error::Config(format!(
                    "orthogonal design needs a power-of-two country count of at least {}",
                    self.n_years + 1
                )));
            }
            if self.burn_in != 0 {
                return Err(Error::Config("orthogonal design requires burn_in = 0".into()));
            }
        }
        Ok(())
    }
}

/// True responses implied by a [`DgpSpec`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    /// Outcome response to a one-period unit impulse in the measure.
    pub phi: Vec<f64>,
    pub phi_inf: f64,
    /// Measure response to a unit innovation.
    pub measure_irf: Vec<f64>,
    /// Outcome response to a unit measure innovation; the target of a
    /// projection on `p_t` that controls for the measure's own lags.
    pub lp_truth: Vec<f64>,
    /// Measure response to a unit instrument shock.
    pub first_stage_irf: Vec<f64>,
}

/// Impulse response of an AR process to a unit innovation.
pub fn ar_irf(ar: &[f64], horizon: usize) -> Vec<f64> {
    let mut psi = vec![1.0];
    for k in 1..=horizon {
        let v = (1..=k.min(ar.len())).map(|l| ar[l - 1] * psi[k - l]).sum();
        psi.push(v);
    }
    psi
}

pub fn ground_truth(spec: &DgpSpec) -> Result<GroundTruth> {
    let irf = dynamics::irf_from_ardl(&spec.params()?, spec.truth_horizon, RecursionForm::Consistent);
    let measure_irf = ar_irf(&spec.measure_ar, spec.truth_horizon);
    Ok(GroundTruth {
        lp_truth: convolve_truncated(&irf.phi, &measure_irf),
        first_stage_irf: measure_irf.iter().map(|v| spec.instrument_loading * v).collect(),
        phi: irf.phi,
        phi_inf: irf.phi_inf,
        measure_irf,
    })
}

/// Sylvester Hadamard matrix of order `n` (a power of two), by rows.
pub fn hadamard(n: usize) -> Result<Vec<Vec<f64>>> {
    if !n.is_power_of_two() {
        return Err(Error::Config(format!("Hadamard order {n} is not a power of two")));
    }
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect())
}

fn std_normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

struct Effects {
    country: Vec<f64>,
    year: Vec<f64>,
    region_year: Vec<Vec<f64>>,
}

fn draw_effects(spec: &DgpSpec) -> Effects {
    let mut rng = substream(spec.seed, streams::PANEL_EFFECTS);
    let country = (0..spec.n_countries).map(|_| spec.country_sd * std_normal(&mut rng)).collect();
    let year = (0..spec.n_years).map(|_| spec.year_sd * std_normal(&mut rng)).collect();
    let region_year = (0..spec.regions)
        .map(|_| (0..spec.n_years).map(|_| spec.region_year_sd * std_normal(&mut rng)).collect())
        .collect();
    Effects {
        country,
        year,
        region_year,
    }
}

pub fn country_name(c: usize) -> String {
    format!("C{c:03}")
}

pub fn region_name(r: usize) -> String {
    format!("R{r}")
}

/// Simulated `(p, z, y)` of one country, burn-in removed, before fixed effects.
fn simulate_country(spec: &DgpSpec, c: usize, design: Option<&[f64]>) -> Vec<(f64, f64, f64)> {
    let mut rng = substream(spec.seed, streams::PANEL_COUNTRY + c as u64);
    let mut rng_z = substream(spec.seed, streams::PANEL_INSTRUMENT + c as u64);
    let total = spec.burn_in + spec.n_years;
    let (j_p, j_y) = (spec.measure_ar.len(), spec.beta.len());
    let mut p: Vec<f64> = Vec::with_capacity(total);
    let mut y: Vec<f64> = Vec::with_capacity(total);
    let mut out = Vec::with_capacity(spec.n_years);
    for t in 0..total {
        let z = std_normal(&mut rng_z);
        let eps_y = spec.noise_sd * std_normal(&mut rng);
        let v = match design {
            Some(row) => spec.innovation_sd * row[t + 1],
            None => spec.innovation_sd * std_normal(&mut rng),
        };
        let lag = |s: &[f64], l: usize| if t >= l { s[t - l] } else { 0.0 };
        let ar: f64 = (1..=j_p).map(|l| spec.measure_ar[l - 1] * lag(&p, l)).sum();
        let p_t = ar + spec.instrument_loading * z + spec.endogeneity * eps_y + v;
        p.push(p_t);
        let y_ar: f64 = (1..=j_y).map(|l| spec.beta[l - 1] * lag(&y, l)).sum();
        let p_dl: f64 = (1..=j_y).map(|l| spec.gamma[l - 1] * lag(&p, l)).sum();
        y.push(spec.alpha * p_t + y_ar + p_dl + eps_y);
        if t >= spec.burn_in {
            out.push((p_t, z, y[t]));
        }
    }
    out
}

/// Simulated panel with columns `y`, `p`, `z`, and its ground truth.
pub fn generate_panel(spec: &DgpSpec) -> Result<(PanelFrame, GroundTruth)> {
    spec.validate()?;
    let truth = ground_truth(spec)?;
    let effects = draw_effects(spec);
    let h = match spec.design {
        InnovationDesign::Orthogonal => Some(hadamard(spec.n_countries)?),
        InnovationDesign::Gaussian => None,
    };
    let paths = exec::map_indexed(spec.n_countries, |c| simulate_country(spec, c, h.as_ref().map(|m| m[c].as_slice())));
    let mut records = Vec::with_capacity(spec.n_countries * spec.n_years);
    for (c, path) in paths.into_iter().enumerate() {
        let region = c % spec.regions;
        for (t, (p, z, y)) in path.into_iter().enumerate() {
            let fe = effects.country[c] + effects.year[t] + effects.region_year[region][t];
            records.push(PanelRecord {
                country: country_name(c),
                year: spec.first_year + t as i32,
                region: region_name(region),
                values: vec![("y".into(), y + fe), ("p".into(), p), ("z".into(), z)],
                groups: vec![],
            });
        }
    }
    Ok((PanelFrame::from_records(records)?, truth))
}

/// Outcome process driven by an existing measure column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub noise_sd: f64,
    pub country_sd: f64,
    pub seed: u64,
}

/// Adds column `name` generated from `measure` by the ARDL in `spec`, with
/// pre-sample zeros in each country.
pub fn outcome_from_measure(frame: &PanelFrame, measure: &str, name: &str, spec: &OutcomeSpec) -> Result<PanelFrame> {
    let params = ArdlParams::new(spec.alpha, &spec.beta, &spec.gamma)?;
    let p = frame.column(measure)?;
    if let Some(i) = p.iter().position(|v| v.is_nan()) {
        return Err(Error::Data(format!(
            "measure `{measure}` is missing for ({}, {})",
            frame.countries()[i],
            frame.years()[i]
        )));
    }
    let countries = frame.country_list();
    let mut y = vec![0.0; frame.nrows()];
    let j = params.lags();
    for (ci, country) in countries.iter().enumerate() {
        let mut rng = substream(spec.seed, streams::PANEL_COUNTRY + ci as u64);
        let fe = spec.country_sd * std_normal(&mut rng);
        let rows: Vec<usize> = (0..frame.nrows()).filter(|&i| frame.countries()[i] == *country).collect();
        let mut hist_y: Vec<f64> = Vec::with_capacity(rows.len());
        for (t, &i) in rows.iter().enumerate() {
            let lag = |s: &[f64], l: usize| if t >= l { s[t - l] } else { 0.0 };
            let p_lag = |l: usize| if t >= l { p[rows[t - l]] } else { 0.0 };
            let v = params.alpha * p[i]
                + (1..=j).map(|l| params.beta[l - 1] * lag(&hist_y, l) + params.gamma[l - 1] * p_lag(l)).sum::<f64>()
                + spec.noise_sd * std_normal(&mut rng);
            hist_y.push(v);
            y[i] = v + fe;
        }
    }
    let mut out = frame.clone();
    out.insert_column(name, y)?;
    Ok(out)
}

/// Parameters of a synthetic event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventDgpSpec {
    pub countries: Vec<String>,
    pub first_year: i32,
    pub n_years: usize,
    /// Expected events per pair-year.
    pub rate: f64,
    pub goldstein_mean: f64,
    pub goldstein_sd: f64,
    /// Probability that an event carries an economic class.
    pub economic_share: f64,
    pub seed: u64,
}

impl Default for EventDgpSpec {
    fn default() -> Self {
        Self {
            countries: (0..6).map(country_name).collect(),
            first_year: 1960,
            n_years: 40,
            rate: 3.0,
            goldstein_mean: 1.0,
            goldstein_sd: 4.0,
            economic_share: 0.2,
            seed: 0,
        }
    }
}

fn quad_for_root(root: u8) -> QuadClass {
    match root {
        1..=5 => QuadClass::VerbalCooperation,
        6..=8 => QuadClass::MaterialCooperation,
        9..=13 => QuadClass::VerbalConflict,
        _ => QuadClass::MaterialConflict,
    }
}

fn relationship_for(goldstein: f64) -> Relationship {
    let idx = (((goldstein + 10.0) / 20.0) * 9.0).floor() as usize;
    Relationship::ALL[idx.min(8)]
}

fn draw_event(spec: &EventDgpSpec, year: i32, a: &str, b: &str, rng: &mut StreamRng) -> EventRecord {
    let g = (spec.goldstein_mean + spec.goldstein_sd * std_normal(rng)).clamp(-10.0, 10.0);
    let root: u8 = if g >= 0.0 {
        rng.random_range(1..=8)
    } else {
        rng.random_range(9..=20)
    };
    let code = u16::from(root) * 10 + rng.random_range(0..10u16);
    let economic_event = if rng.random_bool(spec.economic_share.clamp(0.0, 1.0)) {
        EconomicEvent::ALL[rng.random_range(0..4)]
    } else {
        EconomicEvent::NotAnEconomicEvent
    };
    EventRecord {
        year,
        country1: a.to_string(),
        country2: b.to_string(),
        event_name: format!("synthetic event {code}"),
        event_description: String::new(),
        cameo_quad_class: quad_for_root(root),
        cameo_root_code: root,
        cameo_event_code: code,
        economic_event,
        goldstein: g,
        relationship: relationship_for(g),
        evaluation_summary: String::new(),
    }
}

/// Poisson event counts per pair-year with clipped normal Goldstein scores.
pub fn generate_events(spec: &EventDgpSpec) -> Result<Vec<EventRecord>> {
    if !(spec.rate >= 0.0) || !(spec.goldstein_sd >= 0.0) {
        return Err(Error::Config("event rate and Goldstein spread must be nonnegative".into()));
    }
    if spec.rate == 0.0 {
        return Ok(Vec::new());
    }
    let poisson = Poisson::new(spec.rate).map_err(|e| Error::Config(format!("event rate: {e}")))?;
    let mut pairs = Vec::new();
    for (i, a) in spec.countries.iter().enumerate() {
        for b in &spec.countries[i + 1..] {
            pairs.push((a.as_str(), b.as_str()));
        }
    }
    let per_pair = exec::map_indexed(pairs.len(), |k| {
        let (a, b) = pairs[k];
        let mut rng = substream(spec.seed, streams::EVENTS_PAIR + k as u64);
        let mut out = Vec::new();
        for t in 0..spec.n_years {
            let n = poisson.sample(&mut rng) as usize;
            for _ in 0..n {
                out.push(draw_event(spec, spec.first_year + t as i32, a, b, &mut rng));
            }
        }
        out
    });
    Ok(per_pair.into_iter().flatten().collect())
}

/// Constant trade shares for `majors` over the given years.
pub fn uniform_weights(majors: &[String], first_year: i32, n_years: usize, share: f64) -> Result<WeightTable> {
    let mut w = WeightTable::new();
    for t in 0..n_years {
        for m in majors {
            w.insert(first_year + t as i32, m, share)?;
        }
    }
    Ok(w)
}

pub fn write_truth_json<W: Write>(truth: &GroundTruth, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, truth).map_err(|e| Error::Data(format!("cannot write ground truth: {e}")))
}
