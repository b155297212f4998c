//! Run configuration: one JSON document, overridable from the command line.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use geogrowth::dynamics::RecursionForm;
use geogrowth::events::{EconomicEvent, EventFilter, ParseMode};
use geogrowth::infer::{Scheme, WildLevel};
use geogrowth::lp::{Bandwidth, FeOptions};
use geogrowth::panel::GroupKey;
use geogrowth::relations::{MissingYear, ScoreConfig};
use geogrowth::sim::{DgpSpec, EventDgpSpec, OutcomeSpec};
use geogrowth::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Inputs,
    pub measures: MeasureConfig,
    pub panel: PanelConfig,
    pub estimation: EstimationConfig,
    pub decompose: DecomposeConfig,
    pub bootstrap: BootstrapConfig,
    pub account: AccountConfig,
    pub simulate: SimulateConfig,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: Inputs::default(),
            measures: MeasureConfig::default(),
            panel: PanelConfig::default(),
            estimation: EstimationConfig::default(),
            decompose: DecomposeConfig::default(),
            bootstrap: BootstrapConfig::default(),
            account: AccountConfig::default(),
            simulate: SimulateConfig::default(),
            output: PathBuf::from("out"),
        }
    }
}

/// Input files. Relative paths resolve against the working directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// Event records, JSON Lines or a JSON array.
    pub events: Option<PathBuf>,
    /// `year,country,share` rows.
    pub weights: Option<PathBuf>,
    /// `major,country,year,sanctioned` rows.
    pub sanctions: Option<PathBuf>,
    /// `country,year,region,...` rows.
    pub panel: Option<PathBuf>,
    /// `country,year,kind,value` rows, as written by `scores`.
    pub measures: Option<PathBuf>,
    /// Decomposition CSV, as written by `decompose`.
    pub decomposition: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseModeConfig {
    #[default]
    Strict,
    Lenient,
}

impl From<ParseModeConfig> for ParseMode {
    fn from(m: ParseModeConfig) -> Self {
        match m {
            ParseModeConfig::Strict => ParseMode::Strict,
            ParseModeConfig::Lenient => ParseMode::Lenient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub root_codes: Option<(u8, u8)>,
    pub economic_classes: Option<Vec<EconomicEvent>>,
    pub goldstein_min: Option<f64>,
    pub goldstein_max: Option<f64>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let f = EventFilter::instrument();
        Self {
            root_codes: f.root_codes,
            economic_classes: f.economic_classes.map(|s| s.into_iter().collect()),
            goldstein_min: f.goldstein_min,
            goldstein_max: f.goldstein_max,
        }
    }
}

impl FilterConfig {
    pub fn to_filter(&self) -> Result<EventFilter> {
        EventFilter::new(
            self.root_codes,
            self.economic_classes.as_ref().map(|v| v.iter().copied().collect::<BTreeSet<_>>()),
            self.goldstein_min,
            self.goldstein_max,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    pub delta: f64,
    pub missing_year: MissingYear,
    /// Partner set; empty means every country in the weight table.
    pub majors: Vec<String>,
    pub instrument_filter: FilterConfig,
    pub parse_mode: ParseModeConfig,
    /// Carry scores forward to this year; defaults to the last event year.
    pub last_year: Option<i32>,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        let s = ScoreConfig::default();
        Self {
            delta: s.delta,
            missing_year: s.missing_year,
            majors: Vec::new(),
            instrument_filter: FilterConfig::default(),
            parse_mode: ParseModeConfig::default(),
            last_year: None,
        }
    }
}

impl MeasureConfig {
    pub fn score_config(&self) -> ScoreConfig {
        ScoreConfig { delta: self.delta, missing_year: self.missing_year }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelConfig {
    /// Keep only countries complete over the estimation window.
    pub balanced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub outcome: String,
    pub shocks: Vec<String>,
    pub instrument: String,
    /// Extra control columns, used as given.
    pub controls: Vec<String>,
    /// Lags of the outcome and every shock added as controls; also the ARDL order.
    pub lags: u32,
    pub horizons: (i32, i32),
    pub groups: Vec<GroupKey>,
    pub bandwidth: Bandwidth,
    pub fe: FeOptions,
    pub per_horizon_first_stage: bool,
    /// Last horizon of the ARDL response path.
    pub ardl_horizon: usize,
    pub recursion: RecursionForm,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            outcome: "y".into(),
            shocks: vec!["p".into()],
            instrument: "z".into(),
            controls: Vec::new(),
            lags: 4,
            horizons: (0, 10),
            groups: vec![GroupKey::Country, GroupKey::Year],
            bandwidth: Bandwidth::Auto,
            fe: FeOptions::default(),
            per_horizon_first_stage: false,
            ardl_horizon: 30,
            recursion: RecursionForm::Consistent,
        }
    }
}

impl EstimationConfig {
    pub fn shock(&self) -> Result<&str> {
        self.shocks
            .first()
            .map(String::as_str)
            .ok_or_else(|| Error::Config("estimation.shocks is empty".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeSource {
    #[default]
    Lp,
    Ardl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeConfig {
    pub horizon: usize,
    /// Where the outcome response comes from.
    pub source: OutcomeSource,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self { horizon: 25, source: OutcomeSource::Lp }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    #[default]
    Lp,
    LpIv,
    Ardl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub scheme: Scheme,
    pub replications: usize,
    pub seed: u64,
    pub wild_level: WildLevel,
    pub target: TargetKind,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::CountryBlock,
            replications: 1000,
            seed: 0,
            wild_level: WildLevel::Country,
            target: TargetKind::Lp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccountConfig {
    pub window: usize,
    pub first_year: Option<i32>,
    /// Horizon of the permanent response used for long-run effects.
    pub permanent_horizon: usize,
    /// Measure column in the panel; defaults to the first shock.
    pub measure: Option<String>,
}

impl Default for AccountConfig {
    fn default() -> Self {
        Self {
            window: geogrowth::account::DEFAULT_WINDOW,
            first_year: None,
            permanent_horizon: 25,
            measure: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimulateKind {
    /// Measure, instrument and outcome drawn from the panel process.
    #[default]
    Panel,
    /// An event corpus, weights, and an outcome driven by the implied index.
    Events,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub kind: SimulateKind,
    pub panel: DgpSpec,
    pub events: EventDgpSpec,
    /// Partners receiving weight in the event design.
    pub majors: Vec<String>,
    pub major_share: f64,
    pub outcome: OutcomeSpec,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let events = EventDgpSpec::default();
        Self {
            kind: SimulateKind::Panel,
            majors: events.countries.iter().take(3).cloned().collect(),
            panel: DgpSpec::default(),
            events,
            major_share: 0.2,
            outcome: OutcomeSpec {
                alpha: 1.0,
                beta: vec![0.5],
                gamma: vec![0.0],
                noise_sd: 1.0,
                country_sd: 0.0,
                seed: 0,
            },
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
    }

    /// Sets `dotted.path` to `value`. The value is parsed as JSON when it
    /// parses, otherwise taken as a string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut doc = serde_json::to_value(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let mut slot = &mut doc;
        for key in path.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(key))
                .ok_or_else(|| Error::Config(format!("unknown config key `{path}`")))?;
        }
        *slot = value;
        *self = serde_json::from_value(doc).map_err(|e| Error::Config(format!("override `{path}`: {e}")))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.measure_config_valid()?;
        let e = &self.estimation;
        if e.horizons.0 > e.horizons.1 {
            return Err(Error::Config(format!("horizon range {:?} is reversed", e.horizons)));
        }
        if e.shocks.is_empty() {
            return Err(Error::Config("estimation.shocks is empty".into()));
        }
        if self.bootstrap.replications == 0 {
            return Err(Error::Config("bootstrap.replications must be positive".into()));
        }
        Ok(())
    }

    fn measure_config_valid(&self) -> Result<()> {
        self.measures.score_config().validate()?;
        self.measures.instrument_filter.to_filter()?;
        Ok(())
    }

    /// Canonical serialization used for hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

pub fn require<'a>(path: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    let p = path
        .as_deref()
        .ok_or_else(|| Error::Config(format!("inputs.{name} is not set")))?;
    if !p.exists() {
        return Err(Error::Config(format!("inputs.{name}: {} does not exist", p.display())));
    }
    Ok(p)
}
