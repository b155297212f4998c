//! Country-year panel frames.
//!
//! Rows are unique `(country, year)` keys kept sorted by country, then
//! year. Variables are `f64` columns with `NaN` marking a missing cell.
//! Group keys (country, year, region, custom labels and their interactions)
//! resolve to dense ids for the within transformation.

mod within;

pub use within::{FixedEffects, DEFAULT_MAX_ITER, DEFAULT_TOL};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GROUP_PREFIX: &str = "group:";

/// One input row for [`PanelFrame::from_records`].
#[derive(Debug, Clone, Default)]
pub struct PanelRecord {
    pub country: String,
    pub year: i32,
    pub region: String,
    pub values: Vec<(String, f64)>,
    pub groups: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelFrame {
    countries: Vec<String>,
    years: Vec<i32>,
    regions: Vec<String>,
    columns: Vec<(String, Vec<f64>)>,
    groups: Vec<(String, Vec<String>)>,
    index: HashMap<(String, i32), usize>,
}

impl PanelFrame {
    pub fn from_records(mut records: Vec<PanelRecord>) -> Result<Self> {
        records.sort_by(|a, b| (&a.country, a.year).cmp(&(&b.country, b.year)));
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert((r.country.clone(), r.year), i).is_some() {
                return Err(Error::Data(format!(
                    "duplicate panel row ({}, {})",
                    r.country, r.year
                )));
            }
        }
        let n = records.len();
        let mut col_names: Vec<String> = Vec::new();
        let mut group_names: Vec<String> = Vec::new();
        for r in &records {
            for (name, _) in &r.values {
                if !col_names.contains(name) {
                    col_names.push(name.clone());
                }
            }
            for (name, _) in &r.groups {
                if !group_names.contains(name) {
                    group_names.push(name.clone());
                }
            }
        }
        let mut columns: Vec<(String, Vec<f64>)> =
            col_names.into_iter().map(|c| (c, vec![f64::NAN; n])).collect();
        let mut groups: Vec<(String, Vec<String>)> =
            group_names.into_iter().map(|g| (g, vec![String::new(); n])).collect();
        for (i, r) in records.iter().enumerate() {
            for (name, v) in &r.values {
                let col = columns.iter_mut().find(|(c, _)| c == name).expect("collected");
                col.1[i] = *v;
            }
            for (name, v) in &r.groups {
                let g = groups.iter_mut().find(|(c, _)| c == name).expect("collected");
                g.1[i] = v.clone();
            }
        }
        Ok(Self {
            countries: records.iter().map(|r| r.country.clone()).collect(),
            years: records.iter().map(|r| r.year).collect(),
            regions: records.into_iter().map(|r| r.region).collect(),
            columns,
            groups,
            index,
        })
    }

    pub fn nrows(&self) -> usize {
        self.countries.len()
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|(n, _)| n == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn row_of(&self, country: &str, year: i32) -> Option<usize> {
        self.index.get(&(country.to_string(), year)).copied()
    }

    /// Distinct countries in row order.
    pub fn country_list(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.countries {
            if out.last() != Some(c) {
                out.push(c.clone());
            }
        }
        out
    }

    /// Adds or replaces a column aligned with the frame's row order.
    pub fn insert_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.nrows() {
            return Err(Error::Data(format!(
                "column `{name}` has {} values for {} rows",
                values.len(),
                self.nrows()
            )));
        }
        match self.columns.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = values,
            None => self.columns.push((name.to_string(), values)),
        }
        Ok(())
    }

    /// Adds a column from keyed values; keys absent from the frame are
    /// ignored and returned as a count.
    pub fn insert_keyed<'a, I>(&mut self, name: &str, values: I) -> Result<usize>
    where
        I: IntoIterator<Item = (&'a str, i32, f64)>,
    {
        let mut col = vec![f64::NAN; self.nrows()];
        let mut unmatched = 0;
        for (country, year, v) in values {
            match self.row_of(country, year) {
                Some(i) => col[i] = v,
                None => unmatched += 1,
            }
        }
        self.insert_column(name, col)?;
        Ok(unmatched)
    }

    pub fn insert_group(&mut self, name: &str, labels: Vec<String>) -> Result<()> {
        if labels.len() != self.nrows() {
            return Err(Error::Data(format!("group `{name}` length mismatch")));
        }
        match self.groups.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = labels,
            None => self.groups.push((name.to_string(), labels)),
        }
        Ok(())
    }

    /// Value of `name` at `(country, year + offset)` for every row.
    pub fn shifted(&self, name: &str, offset: i32) -> Result<Vec<f64>> {
        let col = self.column(name)?;
        if offset == 0 {
            return Ok(col.to_vec());
        }
        Ok((0..self.nrows())
            .map(|i| {
                self.row_of(&self.countries[i], self.years[i] + offset)
                    .map_or(f64::NAN, |j| col[j])
            })
            .collect())
    }

    /// Labels of one group key for every row.
    pub fn group_labels(&self, key: &GroupKey) -> Result<Vec<String>> {
        Ok(match key {
            GroupKey::Country => self.countries.clone(),
            GroupKey::Year => self.years.iter().map(|y| y.to_string()).collect(),
            GroupKey::Region => self.regions.clone(),
            GroupKey::Custom(name) => self
                .groups
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::MissingColumn(format!("{GROUP_PREFIX}{name}")))?,
            GroupKey::Interaction(parts) => {
                let labels: Vec<Vec<String>> =
                    parts.iter().map(|p| self.group_labels(p)).collect::<Result<_>>()?;
                (0..self.nrows())
                    .map(|i| labels.iter().map(|l| l[i].as_str()).collect::<Vec<_>>().join("\u{1f}"))
                    .collect()
            }
        })
    }

    /// Dense group ids for the given rows under each key.
    pub fn group_ids(&self, keys: &[GroupKey], rows: &[usize]) -> Result<Vec<Vec<u32>>> {
        keys.iter()
            .map(|k| {
                let labels = self.group_labels(k)?;
                let mut dict: HashMap<&str, u32> = HashMap::new();
                Ok(rows
                    .iter()
                    .map(|&i| {
                        let next = dict.len() as u32;
                        *dict.entry(labels[i].as_str()).or_insert(next)
                    })
                    .collect())
            })
            .collect()
    }

    /// Copy restricted to `rows` (frame row indices, any order).
    pub fn select_rows(&self, rows: &[usize]) -> Result<PanelFrame> {
        let records = rows.iter().map(|&i| self.record(i)).collect();
        PanelFrame::from_records(records)
    }

    fn record(&self, i: usize) -> PanelRecord {
        PanelRecord {
            country: self.countries[i].clone(),
            year: self.years[i],
            region: self.regions[i].clone(),
            values: self.columns.iter().map(|(n, v)| (n.clone(), v[i])).collect(),
            groups: self.groups.iter().map(|(n, v)| (n.clone(), v[i].clone())).collect(),
        }
    }

    /// Builds a frame from whole countries drawn with replacement. The `k`-th
    /// draw of a country becomes a distinct unit labelled `country#k`; region
    /// and custom group labels are kept as they were.
    pub fn resample_countries(&self, draws: &[String]) -> Result<PanelFrame> {
        let mut rows_by_country: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, c) in self.countries.iter().enumerate() {
            rows_by_country.entry(c.as_str()).or_default().push(i);
        }
        let mut records = Vec::new();
        for (k, c) in draws.iter().enumerate() {
            let rows = rows_by_country
                .get(c.as_str())
                .ok_or_else(|| Error::Data(format!("unknown country {c}")))?;
            for &i in rows {
                let mut r = self.record(i);
                r.country = format!("{c}#{k}");
                records.push(r);
            }
        }
        PanelFrame::from_records(records)
    }

    /// Reads `country,year,region,<variables...>`; empty cells are missing.
    /// Columns named `group:<name>` are read as group labels.
    pub fn from_csv<R: Read>(reader: R) -> Result<PanelFrame> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let pos = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (ci, yi, ri) = (pos("country")?, pos("year")?, pos("region")?);
        let extra: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| ![ci, yi, ri].contains(i))
            .map(|(i, h)| (i, h.trim().to_string()))
            .collect();
        let mut records = Vec::new();
        for (line, row) in rdr.records().enumerate() {
            let row = row?;
            let line = line + 2;
            let year = row[yi].trim().parse::<i32>().map_err(|_| {
                Error::Data(format!("line {line}: bad year {:?}", &row[yi]))
            })?;
            let mut rec = PanelRecord {
                country: row[ci].trim().to_string(),
                year,
                region: row[ri].trim().to_string(),
                ..Default::default()
            };
            for (i, name) in &extra {
                let cell = row.get(*i).unwrap_or("").trim();
                if let Some(g) = name.strip_prefix(GROUP_PREFIX) {
                    rec.groups.push((g.to_string(), cell.to_string()));
                    continue;
                }
                let v = if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                    f64::NAN
                } else {
                    cell.parse::<f64>().map_err(|_| {
                        Error::Data(format!("line {line}: column `{name}`: bad number {cell:?}"))
                    })?
                };
                rec.values.push((name.clone(), v));
            }
            records.push(rec);
        }
        PanelFrame::from_records(records)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["country".to_string(), "year".to_string(), "region".to_string()];
        header.extend(self.columns.iter().map(|(n, _)| n.clone()));
        header.extend(self.groups.iter().map(|(n, _)| format!("{GROUP_PREFIX}{n}")));
        w.write_record(&header)?;
        for i in 0..self.nrows() {
            let mut row = vec![self.countries[i].clone(), self.years[i].to_string(), self.regions[i].clone()];
            row.extend(self.columns.iter().map(|(_, v)| {
                if v[i].is_nan() {
                    String::new()
                } else {
                    v[i].to_string()
                }
            }));
            row.extend(self.groups.iter().map(|(_, v)| v[i].clone()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A fixed-effect grouping.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GroupKey {
    Country,
    Year,
    Region,
    Custom(String),
    Interaction(Vec<GroupKey>),
}

impl GroupKey {
    pub fn region_year() -> Self {
        GroupKey::Interaction(vec![GroupKey::Region, GroupKey::Year])
    }
}

impl FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Config("empty group key".into()));
        }
        if s.contains('*') {
            let parts = s.split('*').map(str::parse).collect::<Result<Vec<GroupKey>>>()?;
            return Ok(GroupKey::Interaction(parts));
        }
        Ok(match s {
            "country" => GroupKey::Country,
            "year" => GroupKey::Year,
            "region" => GroupKey::Region,
            "region_year" => GroupKey::region_year(),
            other => GroupKey::Custom(other.to_string()),
        })
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::Country => f.write_str("country"),
            GroupKey::Year => f.write_str("year"),
            GroupKey::Region => f.write_str("region"),
            GroupKey::Custom(n) => f.write_str(n),
            GroupKey::Interaction(parts) => {
                let names: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                f.write_str(&names.join("*"))
            }
        }
    }
}

impl TryFrom<String> for GroupKey {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GroupKey> for String {
    fn from(k: GroupKey) -> String {
        k.to_string()
    }
}

/// Lags and leads to materialize for one variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LagSpec {
    pub variable: String,
    pub lags: BTreeSet<u32>,
    pub leads: BTreeSet<u32>,
}

impl LagSpec {
    pub fn lags(variable: &str, max_lag: u32) -> Self {
        Self {
            variable: variable.to_string(),
            lags: (1..=max_lag).collect(),
            leads: BTreeSet::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lags.contains(&0) {
            return Err(Error::Config(format!("lag 0 of `{}` is not a lag", self.variable)));
        }
        Ok(())
    }
}

pub fn lag_name(variable: &str, lag: u32) -> String {
    format!("{variable}_lag{lag}")
}

pub fn lead_name(variable: &str, lead: u32) -> String {
    format!("{variable}_lead{lead}")
}

/// Adds `var_lagℓ` and `var_leadh` columns. Cells whose shifted year is
/// absent for that country are missing; shifts never cross countries.
pub fn build_shifts(frame: &PanelFrame, spec: &LagSpec) -> Result<PanelFrame> {
    spec.validate()?;
    frame.column(&spec.variable)?;
    let mut out = frame.clone();
    for &l in &spec.lags {
        let col = frame.shifted(&spec.variable, -(l as i32))?;
        out.insert_column(&lag_name(&spec.variable, l), col)?;
    }
    for &h in &spec.leads {
        let col = frame.shifted(&spec.variable, h as i32)?;
        out.insert_column(&lead_name(&spec.variable, h), col)?;
    }
    Ok(out)
}

/// Adds lags `1..=max_lag` of each variable; returns the new column names.
pub fn add_lags(frame: &PanelFrame, variables: &[&str], max_lag: u32) -> Result<(PanelFrame, Vec<String>)> {
    let mut out = frame.clone();
    let mut names = Vec::new();
    for v in variables {
        out = build_shifts(&out, &LagSpec::lags(v, max_lag))?;
        names.extend((1..=max_lag).map(|l| lag_name(v, l)));
    }
    Ok((out, names))
}

/// Residualizes `columns` on the fixed effects. The input frame is left
/// unchanged; rows must be complete on `columns`.
pub fn demean(
    frame: &PanelFrame,
    columns: &[&str],
    groups: &[GroupKey],
    tol: f64,
    max_iter: usize,
) -> Result<PanelFrame> {
    if groups.is_empty() {
        return Err(Error::Config("demeaning needs at least one group key".into()));
    }
    let rows: Vec<usize> = (0..frame.nrows()).collect();
    let fe = FixedEffects::new(frame.group_ids(groups, &rows)?, rows.len());
    let mut cols: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| frame.column(c).map(<[f64]>::to_vec))
        .collect::<Result<_>>()?;
    for (c, name) in cols.iter().zip(columns) {
        if c.iter().any(|v| v.is_nan()) {
            return Err(Error::Data(format!("column `{name}` has missing cells; drop incomplete rows first")));
        }
    }
    fe.demean_all(&mut cols, tol, max_iter)?;
    let mut out = frame.clone();
    for (name, c) in columns.iter().zip(cols) {
        out.insert_column(name, c)?;
    }
    Ok(out)
}

/// Keeps countries observed with every required column at every year the
/// horizon window can touch.
///
/// Estimation years are those `t` for which `t + h` stays inside the
/// frame's overall year span for every `h` in `horizons`; a country is kept
/// only if all required cells are present at every `t + h`.
pub fn balanced_subset(
    frame: &PanelFrame,
    required: &[&str],
    horizons: (i32, i32),
) -> Result<PanelFrame> {
    let (lo, hi) = if horizons.0 <= horizons.1 { horizons } else { (horizons.1, horizons.0) };
    let cols: Vec<&[f64]> = required.iter().map(|c| frame.column(c)).collect::<Result<_>>()?;
    let (Some(&ymin), Some(&ymax)) = (frame.years.iter().min(), frame.years.iter().max()) else {
        return Ok(frame.clone());
    };
    let first_t = ymin - lo.min(0);
    let last_t = ymax - hi.max(0);
    let needed: BTreeSet<i32> = (first_t..=last_t)
        .flat_map(|t| (lo..=hi).map(move |h| t + h))
        .collect();
    let complete = |c: &str| {
        needed.iter().all(|&y| {
            frame
                .row_of(c, y)
                .is_some_and(|i| cols.iter().all(|col| !col[i].is_nan()))
        })
    };
    let keep: BTreeSet<String> = frame.country_list().into_iter().filter(|c| complete(c)).collect();
    let rows: Vec<usize> = (0..frame.nrows()).filter(|&i| keep.contains(&frame.countries[i])).collect();
    frame.select_rows(&rows)
}
