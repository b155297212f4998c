//! Bilateral scores and country-level indices built from coded events.
//!
//! Yearly pair scores average Goldstein values scaled to [-1, 1]. Dynamic
//! scores smooth them with an effective event count that depreciates at rate
//! `delta`:
//!
//! ```text
//! N_t = (1 - delta) N_{t-1} + Ñ_t
//! phi_t = Ñ_t / N_t
//! S_t = (1 - phi_t) S_{t-1} + phi_t S̃_t
//! ```
//!
//! Country indices sum a country's scores with the major nations weighted by
//! their world GDP shares. Shares are used as given, without renormalizing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{filter_events, EventFilter, EventRecord};
use crate::exec;

pub type Pair = (String, String);

/// Depreciation that approximates a four-year moving average.
pub const DEFAULT_DELTA: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearlyPairScore {
    pub pair: Pair,
    pub year: i32,
    /// Mean Goldstein score divided by 10.
    pub s_tilde: f64,
    pub n_tilde: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicPairScore {
    pub pair: Pair,
    pub year: i32,
    pub s: f64,
    pub n_effective: f64,
    pub phi: f64,
    pub delta: f64,
}

impl DynamicPairScore {
    /// A pair with no history. The first update puts full weight on data.
    pub fn empty(pair: Pair, year: i32, delta: f64) -> Self {
        Self {
            pair,
            year,
            s: 0.0,
            n_effective: 0.0,
            phi: 0.0,
            delta,
        }
    }
}

/// What happens to the effective count in a year without events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingYear {
    /// `N` keeps depreciating by `1 - delta`.
    #[default]
    Decay,
    /// `N` is held at its last value.
    Freeze,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub delta: f64,
    #[serde(default)]
    pub missing_year: MissingYear,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            missing_year: MissingYear::Decay,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Config(format!(
                "depreciation rate must lie in (0, 1], got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Averages events per unordered pair and year. Pairs without events in a
/// year produce no row.
pub fn yearly_pair_scores(events: &[EventRecord]) -> Vec<YearlyPairScore> {
    let mut acc: BTreeMap<(Pair, i32), (f64, u32)> = BTreeMap::new();
    for ev in events {
        let slot = acc.entry((ev.pair(), ev.year)).or_insert((0.0, 0));
        slot.0 += ev.goldstein;
        slot.1 += 1;
    }
    acc.into_iter()
        .map(|((pair, year), (sum, n))| YearlyPairScore {
            pair,
            year,
            s_tilde: sum / f64::from(n) / 10.0,
            n_tilde: n,
        })
        .collect()
}

/// Advances a dynamic score by one year.
pub fn update_dynamic_score(
    prev: &DynamicPairScore,
    yearly: Option<&YearlyPairScore>,
    missing: MissingYear,
) -> Result<DynamicPairScore> {
    let year = prev.year + 1;
    let delta = prev.delta;
    match yearly.filter(|y| y.n_tilde > 0) {
        Some(obs) => {
            if obs.year != year {
                return Err(Error::Data(format!(
                    "yearly score for {} does not follow {}",
                    obs.year, prev.year
                )));
            }
            if obs.pair != prev.pair {
                return Err(Error::Data(format!(
                    "yearly score for {:?} applied to pair {:?}",
                    obs.pair, prev.pair
                )));
            }
            let n_tilde = f64::from(obs.n_tilde);
            let n_effective = (1.0 - delta) * prev.n_effective + n_tilde;
            let phi = n_tilde / n_effective;
            Ok(DynamicPairScore {
                pair: prev.pair.clone(),
                year,
                s: (1.0 - phi) * prev.s + phi * obs.s_tilde,
                n_effective,
                phi,
                delta,
            })
        }
        None => Ok(DynamicPairScore {
            pair: prev.pair.clone(),
            year,
            s: prev.s,
            n_effective: match missing {
                MissingYear::Decay => (1.0 - delta) * prev.n_effective,
                MissingYear::Freeze => prev.n_effective,
            },
            phi: 0.0,
            delta,
        }),
    }
}

/// Runs the recursion for every pair from its first event year through
/// `last_year` (default: the latest year with any event).
pub fn dynamic_pair_scores(
    yearly: &[YearlyPairScore],
    config: &ScoreConfig,
    last_year: Option<i32>,
) -> Result<Vec<DynamicPairScore>> {
    config.validate()?;
    let Some(latest) = last_year.or_else(|| yearly.iter().map(|y| y.year).max()) else {
        return Ok(Vec::new());
    };
    let mut by_pair: BTreeMap<&Pair, BTreeMap<i32, &YearlyPairScore>> = BTreeMap::new();
    for y in yearly {
        by_pair.entry(&y.pair).or_default().insert(y.year, y);
    }
    let pairs: Vec<(&Pair, BTreeMap<i32, &YearlyPairScore>)> = by_pair.into_iter().collect();
    let paths = exec::map_slice(&pairs, |(pair, obs)| -> Result<Vec<DynamicPairScore>> {
        let first = *obs.keys().next().expect("pair has at least one year");
        let mut state = DynamicPairScore::empty((*pair).clone(), first - 1, config.delta);
        let mut out = Vec::new();
        for year in first..=latest {
            state = update_dynamic_score(&state, obs.get(&year).copied(), config.missing_year)?;
            out.push(state.clone());
        }
        Ok(out)
    });
    let mut all = Vec::new();
    for path in paths {
        all.extend(path?);
    }
    Ok(all)
}

/// World GDP shares of the major nations by year.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightTable {
    shares: BTreeMap<i32, BTreeMap<String, f64>>,
}

impl WeightTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, year: i32, country: &str, share: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&share) {
            return Err(Error::Config(format!(
                "weight {share} for {country} in {year} outside [0, 1]"
            )));
        }
        let year_map = self.shares.entry(year).or_default();
        year_map.insert(country.to_string(), share);
        let total: f64 = year_map.values().sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::Config(format!("weights in {year} sum to {total} > 1")));
        }
        Ok(())
    }

    pub fn get(&self, year: i32, country: &str) -> Option<f64> {
        self.shares.get(&year).and_then(|m| m.get(country)).copied()
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        self.shares.keys().copied()
    }

    /// Every country holding a share in some year.
    pub fn countries(&self) -> BTreeSet<String> {
        self.shares.values().flat_map(|m| m.keys().cloned()).collect()
    }

    fn require(&self, year: i32, major: &str) -> Result<f64> {
        self.get(year, major).ok_or_else(|| {
            Error::Config(format!("no weight for major nation {major} in {year}"))
        })
    }

    /// Reads `year,country,share` rows.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            year: i32,
            country: String,
            share: f64,
        }
        let mut table = Self::new();
        let mut rdr = csv::Reader::from_reader(reader);
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            table.insert(row.year, row.country.trim(), row.share)?;
        }
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["year", "country", "share"])?;
        for (year, m) in &self.shares {
            for (c, s) in m {
                w.write_record([year.to_string(), c.clone(), s.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    DynamicRelation,
    YearlyEventScore,
    Instrument,
    SanctionsExposure,
    External,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 5] = [
        MeasureKind::DynamicRelation,
        MeasureKind::YearlyEventScore,
        MeasureKind::Instrument,
        MeasureKind::SanctionsExposure,
        MeasureKind::External,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MeasureKind::DynamicRelation => "dynamic_relation",
            MeasureKind::YearlyEventScore => "yearly_event_score",
            MeasureKind::Instrument => "instrument",
            MeasureKind::SanctionsExposure => "sanctions_exposure",
            MeasureKind::External => "external",
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MeasureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Data(format!("unknown measure kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureSeries {
    pub country: String,
    pub year: i32,
    pub kind: MeasureKind,
    pub value: f64,
}

/// Weighted sum over major partners. Each input entry is
/// `(pair, year, pair value)`; a country never counts itself.
fn aggregate<'a, I>(
    entries: I,
    weights: &WeightTable,
    majors: &BTreeSet<String>,
    kind: MeasureKind,
) -> Result<Vec<MeasureSeries>>
where
    I: IntoIterator<Item = (&'a Pair, i32, f64)>,
{
    let mut acc: BTreeMap<(String, i32), f64> = BTreeMap::new();
    for ((a, b), year, value) in entries {
        if a == b {
            continue;
        }
        if majors.contains(b) {
            let w = weights.require(year, b)?;
            *acc.entry((a.clone(), year)).or_insert(0.0) += value * w;
        }
        if majors.contains(a) {
            let w = weights.require(year, a)?;
            *acc.entry((b.clone(), year)).or_insert(0.0) += value * w;
        }
    }
    Ok(acc
        .into_iter()
        .map(|((country, year), value)| MeasureSeries {
            country,
            year,
            kind,
            value,
        })
        .collect())
}

/// GDP-weighted country index from dynamic pair scores.
pub fn aggregate_country(
    pair_scores: &[DynamicPairScore],
    weights: &WeightTable,
    majors: &BTreeSet<String>,
) -> Result<Vec<MeasureSeries>> {
    aggregate(
        pair_scores.iter().map(|s| (&s.pair, s.year, s.s)),
        weights,
        majors,
        MeasureKind::DynamicRelation,
    )
}

/// Unsmoothed variant: yearly scores, pairs without events that year skipped.
pub fn aggregate_yearly(
    yearly: &[YearlyPairScore],
    weights: &WeightTable,
    majors: &BTreeSet<String>,
) -> Result<Vec<MeasureSeries>> {
    aggregate(
        yearly.iter().map(|s| (&s.pair, s.year, s.s_tilde)),
        weights,
        majors,
        MeasureKind::YearlyEventScore,
    )
}

/// Instrument series from non-economic mild conflicts only.
pub fn build_instrument(
    events: &[EventRecord],
    weights: &WeightTable,
    majors: &BTreeSet<String>,
) -> Result<Vec<MeasureSeries>> {
    build_instrument_with(events, &EventFilter::instrument(), weights, majors)
}

pub fn build_instrument_with(
    events: &[EventRecord],
    filter: &EventFilter,
    weights: &WeightTable,
    majors: &BTreeSet<String>,
) -> Result<Vec<MeasureSeries>> {
    let selected = filter_events(events, filter);
    let yearly = yearly_pair_scores(&selected);
    aggregate(
        yearly.iter().map(|s| (&s.pair, s.year, s.s_tilde)),
        weights,
        majors,
        MeasureKind::Instrument,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanctionFlag {
    pub major: String,
    pub country: String,
    pub year: i32,
    pub sanctioned: u8,
}

/// Share of world GDP held by majors sanctioning each country.
pub fn build_sanctions_measure(
    flags: &[SanctionFlag],
    weights: &WeightTable,
) -> Result<Vec<MeasureSeries>> {
    let mut acc: BTreeMap<(String, i32), f64> = BTreeMap::new();
    for f in flags {
        if f.sanctioned > 1 {
            return Err(Error::Data(format!(
                "sanction indicator for {} by {} in {} must be 0 or 1, got {}",
                f.country, f.major, f.year, f.sanctioned
            )));
        }
        let w = weights.require(f.year, &f.major)?;
        *acc.entry((f.country.clone(), f.year)).or_insert(0.0) += f64::from(f.sanctioned) * w;
    }
    Ok(acc
        .into_iter()
        .map(|((country, year), value)| MeasureSeries {
            country,
            year,
            kind: MeasureKind::SanctionsExposure,
            value,
        })
        .collect())
}

pub fn read_sanction_flags<R: Read>(reader: R) -> Result<Vec<SanctionFlag>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Writes `country,year,kind,value` sorted by country, then year, then kind.
pub fn write_measures_csv<W: Write>(series: &[MeasureSeries], out: W) -> Result<()> {
    let mut rows: Vec<&MeasureSeries> = series.iter().collect();
    rows.sort_by(|a, b| (&a.country, a.year, a.kind).cmp(&(&b.country, b.year, b.kind)));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["country", "year", "kind", "value"])?;
    for r in rows {
        w.write_record([r.country.clone(), r.year.to_string(), r.kind.to_string(), r.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_measures_csv<R: Read>(reader: R) -> Result<Vec<MeasureSeries>> {
    #[derive(Deserialize)]
    struct Row {
        country: String,
        year: i32,
        kind: String,
        value: f64,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<Row>() {
        let row = row?;
        out.push(MeasureSeries {
            country: row.country,
            year: row.year,
            kind: row.kind.parse()?,
            value: row.value,
        });
    }
    Ok(out)
}
