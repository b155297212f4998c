//! Growth accounting with estimated responses.
//!
//! Outcome responses are carried in log points times 100, so a value of
//! `dy` corresponds to a `100 (exp(dy / 100) - 1)` percent level difference.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::panel::PanelFrame;
use crate::relations::MeasureSeries;

pub const DEFAULT_WINDOW: usize = 25;
/// Length of an accounting decade.
pub const DECADE: usize = 10;
pub const UNITS_NOTE: &str = "dy_geo in log points x100; pct = 100*(exp(dy_geo/100)-1)";

/// Country -> year -> measure value.
pub type MeasurePanel = BTreeMap<String, BTreeMap<i32, f64>>;

pub fn measure_panel_from_frame(frame: &PanelFrame, column: &str) -> Result<MeasurePanel> {
    let values = frame.column(column)?;
    let mut out = MeasurePanel::new();
    for ((c, &y), &v) in frame.countries().iter().zip(frame.years()).zip(values) {
        if !v.is_nan() {
            out.entry(c.clone()).or_default().insert(y, v);
        }
    }
    Ok(out)
}

pub fn measure_panel_from_series(series: &[MeasureSeries]) -> MeasurePanel {
    let mut out = MeasurePanel::new();
    for s in series {
        out.entry(s.country.clone()).or_default().insert(s.year, s.value);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccountingInputs {
    /// Response to a one-period unit impulse, horizons `0..`.
    pub transitory: Vec<f64>,
    /// Response to a permanent unit shift after 25 years.
    pub permanent_25: f64,
    pub measure: MeasurePanel,
    pub window: usize,
    /// Earliest year entering the gap sums; defaults to the first year in the panel.
    pub first_year: Option<i32>,
}

impl AccountingInputs {
    pub fn new(transitory: Vec<f64>, permanent_25: f64, measure: MeasurePanel) -> Self {
        Self {
            transitory,
            permanent_25,
            measure,
            window: DEFAULT_WINDOW,
            first_year: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("accounting window must be at least one year".into()));
        }
        if self.transitory.len() < self.window + 1 {
            return Err(Error::Config(format!(
                "transitory response has {} horizons; the window needs {}",
                self.transitory.len(),
                self.window + 1
            )));
        }
        Ok(())
    }

    fn start_year(&self) -> Option<i32> {
        self.first_year
            .or_else(|| self.measure.values().filter_map(|m| m.keys().next().copied()).min())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecadeEffect {
    pub country: String,
    pub decade: i32,
    pub contemporaneous: f64,
    pub long_run: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecadeEffects {
    pub rows: Vec<DecadeEffect>,
    /// Countries lacking measure values over the decade.
    pub excluded: Vec<String>,
}

/// Contemporaneous and long-run decade effects for decade starting at `start`:
///
/// ```text
/// contemporaneous = sum_{t=0}^{9} a_t (p_{start+t} - p_{start+t-1})
/// long_run        = permanent_25 (p_{start+9} - p_start)
/// ```
pub fn decade_effects(inputs: &AccountingInputs, start: i32) -> Result<DecadeEffects> {
    if inputs.transitory.len() < DECADE {
        return Err(Error::Config(format!(
            "transitory response needs {DECADE} horizons, got {}",
            inputs.transitory.len()
        )));
    }
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for (country, series) in &inputs.measure {
        let needed: Option<Vec<f64>> = (start - 1..start + DECADE as i32).map(|y| series.get(&y).copied()).collect();
        let Some(p) = needed else {
            excluded.push(country.clone());
            continue;
        };
        let contemporaneous = (0..DECADE).map(|t| inputs.transitory[t] * (p[t + 1] - p[t])).sum();
        let long_run = inputs.permanent_25 * (p[DECADE] - p[1]);
        rows.push(DecadeEffect {
            country: country.clone(),
            decade: start,
            contemporaneous,
            long_run,
        });
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("no country has complete measure data for the decade starting {start}")));
    }
    Ok(DecadeEffects { rows, excluded })
}

/// Long-run outcome change from a permanent shift of the measure.
pub fn steady_state_gain(shift: f64, long_run_effect: f64) -> f64 {
    shift * long_run_effect
}

/// Percent level difference implied by a gap in log points x100.
pub fn pct_from_log_points(dy: f64) -> f64 {
    100.0 * ((dy / 100.0).exp() - 1.0)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Cross-country median per year; even counts average the two middle values.
pub fn median_series(measure: &MeasurePanel) -> BTreeMap<i32, f64> {
    let mut by_year: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for series in measure.values() {
        for (&y, &v) in series {
            by_year.entry(y).or_default().push(v);
        }
    }
    by_year.into_iter().map(|(y, mut v)| (y, median(&mut v))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterfactualRow {
    pub country: String,
    pub year: i32,
    pub dy_geo: f64,
    pub pct: f64,
    /// Years inside the window without a measure value, which enter as zero gaps.
    pub missing_years: Vec<i32>,
}

/// Outcome gap relative to the median path:
///
/// ```text
/// dy_t = sum_{s = max(first, t - window)}^{t} a_{t-s} (p_s - median_s)
/// ```
///
/// evaluated for every year from the country's first to last observation.
pub fn counterfactual_path(
    inputs: &AccountingInputs,
    medians: &BTreeMap<i32, f64>,
    country: &str,
) -> Result<Vec<CounterfactualRow>> {
    inputs.validate()?;
    let series = inputs
        .measure
        .get(country)
        .ok_or_else(|| Error::Data(format!("country {country} is not in the measure panel")))?;
    let (Some(&first_obs), Some(&last_obs)) = (series.keys().next(), series.keys().next_back()) else {
        return Ok(Vec::new());
    };
    let floor = inputs.start_year().unwrap_or(first_obs);
    let gap = |s: i32| match (series.get(&s), medians.get(&s)) {
        (Some(p), Some(m)) => Some(p - m),
        _ => None,
    };
    let mut out = Vec::new();
    for t in first_obs..=last_obs {
        let lo = floor.max(t - inputs.window as i32);
        let mut dy = 0.0;
        let mut missing = Vec::new();
        for s in lo..=t {
            match gap(s) {
                Some(g) => dy += inputs.transitory[(t - s) as usize] * g,
                None => missing.push(s),
            }
        }
        out.push(CounterfactualRow {
            country: country.to_string(),
            year: t,
            dy_geo: dy,
            pct: pct_from_log_points(dy),
            missing_years: missing,
        });
    }
    Ok(out)
}

/// Counterfactual paths for every country in the panel.
pub fn counterfactual_all(inputs: &AccountingInputs) -> Result<Vec<CounterfactualRow>> {
    inputs.validate()?;
    let medians = median_series(&inputs.measure);
    let countries: Vec<&String> = inputs.measure.keys().collect();
    let paths = exec::map_slice(&countries, |c| counterfactual_path(inputs, &medians, c));
    let mut out = Vec::new();
    for p in paths {
        out.extend(p?);
    }
    Ok(out)
}

/// Cross-country distribution of one decade statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecadeSummary {
    pub decade: i32,
    pub statistic: String,
    pub n: usize,
    pub mean: f64,
    pub p10: f64,
    pub median: f64,
    pub p90: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean and quantiles of each decade statistic, equally weighting countries.
pub fn decade_summary(rows: &[DecadeEffect]) -> Vec<DecadeSummary> {
    let decades: BTreeSet<i32> = rows.iter().map(|r| r.decade).collect();
    let mut out = Vec::new();
    for d in decades {
        for (name, pick) in [
            ("contemporaneous", (|r: &DecadeEffect| r.contemporaneous) as fn(&DecadeEffect) -> f64),
            ("long_run", |r: &DecadeEffect| r.long_run),
        ] {
            let mut v: Vec<f64> = rows.iter().filter(|r| r.decade == d).map(pick).collect();
            v.sort_by(f64::total_cmp);
            out.push(DecadeSummary {
                decade: d,
                statistic: name.to_string(),
                n: v.len(),
                mean: v.iter().sum::<f64>() / v.len() as f64,
                p10: quantile(&v, 0.1),
                median: quantile(&v, 0.5),
                p90: quantile(&v, 0.9),
            });
        }
    }
    out
}

/// Writes a units line, then `country,year,dy_geo,pct,flags`.
pub fn write_counterfactual_csv<W: Write>(rows: &[CounterfactualRow], mut out: W) -> Result<()> {
    writeln!(out, "# units: {UNITS_NOTE}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["country", "year", "dy_geo", "pct", "flags"])?;
    for r in rows {
        let flags = if r.missing_years.is_empty() {
            String::new()
        } else {
            let years: Vec<String> = r.missing_years.iter().map(i32::to_string).collect();
            format!("missing:{}", years.join(";"))
        };
        w.write_record([r.country.clone(), r.year.to_string(), r.dy_geo.to_string(), r.pct.to_string(), flags])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `country,decade,contemporaneous,long_run`.
pub fn write_decade_csv<W: Write>(rows: &[DecadeEffect], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["country", "decade", "contemporaneous", "long_run"])?;
    for r in rows {
        w.write_record([
            r.country.clone(),
            r.decade.to_string(),
            r.contemporaneous.to_string(),
            r.long_run.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `decade,statistic,n,mean,p10,median,p90`.
pub fn write_decade_summary_csv<W: Write>(rows: &[DecadeSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["decade", "statistic", "n", "mean", "p10", "median", "p90"])?;
    for r in rows {
        w.write_record([
            r.decade.to_string(),
            r.statistic.clone(),
            r.n.to_string(),
            r.mean.to_string(),
            r.p10.to_string(),
            r.median.to_string(),
            r.p90.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
