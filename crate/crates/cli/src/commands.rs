//! Subcommand implementations. Each reads its inputs from the config, writes
//! CSV/JSON results into the output directory, and records what it did in a
//! [`Context`] that becomes the run manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use geogrowth::account::{self, AccountingInputs, MeasurePanel};
use geogrowth::dynamics::{self, ArdlParams};
use geogrowth::events::{self, parse_events};
use geogrowth::infer::{self, ArdlTarget, BootstrapSpec, Target};
use geogrowth::iv::{self, LpIvSpec};
use geogrowth::lp::{self, LpSpec};
use geogrowth::panel::{self, PanelFrame, PanelRecord};
use geogrowth::relations::{self, MeasureKind, WeightTable};
use geogrowth::sim;
use geogrowth::{Error, ErrorKind, Result};
use serde_json::{json, Value};

use crate::config::{require, OutcomeSource, RunConfig, SimulateKind, TargetKind};
use crate::manifest::{self, FileDigest, HorizonCount, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Scores,
    Panel,
    Lp,
    Lpiv,
    Ardl,
    Decompose,
    Bootstrap,
    Account,
    Simulate,
    Stats,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Scores => "scores",
            Command::Panel => "panel",
            Command::Lp => "lp",
            Command::Lpiv => "lpiv",
            Command::Ardl => "ardl",
            Command::Decompose => "decompose",
            Command::Bootstrap => "bootstrap",
            Command::Account => "account",
            Command::Simulate => "simulate",
            Command::Stats => "stats",
        }
    }
}

/// Bookkeeping for one command run.
pub struct Context<'a> {
    pub config: &'a RunConfig,
    out: PathBuf,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    samples: Vec<HorizonCount>,
    seed: Option<u64>,
    notes: serde_json::Map<String, Value>,
}

impl<'a> Context<'a> {
    fn new(config: &'a RunConfig) -> Result<Self> {
        let out = config.output.clone();
        fs::create_dir_all(&out)
            .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", out.display())))?;
        Ok(Self {
            config,
            out,
            inputs: Vec::new(),
            outputs: Vec::new(),
            samples: Vec::new(),
            seed: None,
            notes: serde_json::Map::new(),
        })
    }

    /// Resolves a required input and records its digest.
    fn input(&mut self, path: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        let p = require(path, name)?.to_path_buf();
        self.inputs.push(manifest::digest_file(&p, format!("{name}:{}", p.display()))?);
        Ok(p)
    }

    fn write<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.out.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        drop(w);
        self.outputs.push(manifest::digest_file(&path, name.to_string())?);
        Ok(())
    }

    fn note(&mut self, key: &str, value: Value) {
        self.notes.insert(key.to_string(), value);
    }

    fn finish(self, command: Command) -> Result<PathBuf> {
        let m = Manifest {
            command: command.name().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            core_version: geogrowth::VERSION.to_string(),
            parallel: geogrowth::exec::is_parallel(),
            config_sha256: manifest::sha256_hex(self.config.canonical_json().as_bytes()),
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
            samples: self.samples,
            notes: self.notes,
            timestamp: manifest::now(),
        };
        m.write(&self.out)
    }
}

/// Runs `command` and writes its manifest. Returns the manifest path.
pub fn execute(command: Command, config: &RunConfig) -> Result<PathBuf> {
    config.validate()?;
    let mut ctx = Context::new(config)?;
    match command {
        Command::Scores => cmd_scores(&mut ctx)?,
        Command::Panel => cmd_panel(&mut ctx)?,
        Command::Lp => cmd_lp(&mut ctx)?,
        Command::Lpiv => cmd_lpiv(&mut ctx)?,
        Command::Ardl => cmd_ardl(&mut ctx)?,
        Command::Decompose => cmd_decompose(&mut ctx)?,
        Command::Bootstrap => cmd_bootstrap(&mut ctx)?,
        Command::Account => cmd_account(&mut ctx)?,
        Command::Simulate => cmd_simulate(&mut ctx)?,
        Command::Stats => cmd_stats(&mut ctx)?,
    }
    ctx.finish(command)
}

/// Prefixes an error with the file it came from, keeping its kind.
fn in_file(path: &Path, e: Error) -> Error {
    let msg = format!("{}: {e}", path.display());
    match e {
        Error::Parse { line, message } => Error::Parse { line, message: format!("{}: {message}", path.display()) },
        Error::MissingColumn(c) => Error::MissingColumn(c),
        e => match e.kind() {
            ErrorKind::Config => Error::Config(msg),
            ErrorKind::Data => Error::Data(msg),
            ErrorKind::Numerical => Error::Numerical(msg),
        },
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))
}

fn read_panel(ctx: &mut Context) -> Result<PanelFrame> {
    let path = ctx.input(&ctx.config.inputs.panel.clone(), "panel")?;
    PanelFrame::from_csv(open(&path)?).map_err(|e| in_file(&path, e))
}

fn read_weights(ctx: &mut Context) -> Result<WeightTable> {
    let path = ctx.input(&ctx.config.inputs.weights.clone(), "weights")?;
    WeightTable::from_csv(open(&path)?).map_err(|e| in_file(&path, e))
}

/// Adds lags of the outcome and `vars` as controls, followed by the extra controls.
fn with_lag_controls(frame: &PanelFrame, config: &RunConfig, vars: &[&str]) -> Result<(PanelFrame, Vec<String>)> {
    let e = &config.estimation;
    let mut lagged: Vec<&str> = vec![e.outcome.as_str()];
    for v in vars {
        if !lagged.contains(v) {
            lagged.push(v);
        }
    }
    let (frame, mut controls) = if e.lags > 0 {
        panel::add_lags(frame, &lagged, e.lags)?
    } else {
        (frame.clone(), Vec::new())
    };
    controls.extend(e.controls.iter().cloned());
    Ok((frame, controls))
}

fn lp_spec(config: &RunConfig, controls: &[String]) -> LpSpec {
    let e = &config.estimation;
    let shocks: Vec<&str> = e.shocks.iter().map(String::as_str).collect();
    let mut spec = LpSpec::new(&e.outcome, &shocks, e.horizons)
        .with_controls(controls)
        .with_groups(&e.groups)
        .with_bandwidth(e.bandwidth);
    spec.fe = e.fe;
    spec
}

fn lpiv_spec(config: &RunConfig, controls: &[String]) -> Result<LpIvSpec> {
    let e = &config.estimation;
    let mut spec = LpIvSpec::new(&e.outcome, e.shock()?, &e.instrument, e.horizons)
        .with_controls(controls)
        .with_groups(&e.groups);
    spec.bandwidth = e.bandwidth;
    spec.fe = e.fe;
    spec.per_horizon_first_stage = e.per_horizon_first_stage;
    Ok(spec)
}

fn record_irf_samples(ctx: &mut Context, irfs: &[lp::IrfResult]) {
    ctx.samples = irfs
        .iter()
        .map(|r| HorizonCount { horizon: r.horizon, nobs: r.nobs, n_countries: r.n_countries })
        .collect();
}

fn cmd_scores(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.config;
    let events_path = ctx.input(&cfg.inputs.events.clone(), "events")?;
    let text = fs::read_to_string(&events_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", events_path.display())))?;
    let report = parse_events(&text, cfg.measures.parse_mode.into()).map_err(|e| in_file(&events_path, e))?;
    if report.events.is_empty() {
        log::warn!("{}: no events; measures will be empty", events_path.display());
    }
    if !report.rejections.is_empty() {
        log::warn!("{} records rejected", report.rejections.len());
        let rejections = report.rejections.clone();
        ctx.write("rejections.csv", |w| events::write_rejections_csv(&rejections, w))?;
    }
    ctx.note("events", json!(report.events.len()));
    ctx.note("rejected", json!(report.rejections.len()));
    ctx.note("duplicates", json!(report.duplicates));

    let weights = read_weights(ctx)?;
    let majors: BTreeSet<String> = if cfg.measures.majors.is_empty() {
        weights.countries()
    } else {
        cfg.measures.majors.iter().cloned().collect()
    };
    let yearly = relations::yearly_pair_scores(&report.events);
    let dynamic = relations::dynamic_pair_scores(&yearly, &cfg.measures.score_config(), cfg.measures.last_year)?;
    let mut series = relations::aggregate_country(&dynamic, &weights, &majors)?;
    series.extend(relations::aggregate_yearly(&yearly, &weights, &majors)?);
    let filter = cfg.measures.instrument_filter.to_filter()?;
    series.extend(relations::build_instrument_with(&report.events, &filter, &weights, &majors)?);
    if cfg.inputs.sanctions.is_some() {
        let path = ctx.input(&cfg.inputs.sanctions.clone(), "sanctions")?;
        let flags = relations::read_sanction_flags(open(&path)?).map_err(|e| in_file(&path, e))?;
        series.extend(relations::build_sanctions_measure(&flags, &weights)?);
    }
    ctx.write("pair_scores.csv", |w| write_pair_scores(&dynamic, w))?;
    ctx.write("measures.csv", |w| relations::write_measures_csv(&series, w))?;
    Ok(())
}

fn write_pair_scores<W: Write>(scores: &[relations::DynamicPairScore], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["country1", "country2", "year", "s", "n_effective", "phi"])?;
    for s in scores {
        w.write_record([
            s.pair.0.clone(),
            s.pair.1.clone(),
            s.year.to_string(),
            s.s.to_string(),
            s.n_effective.to_string(),
            s.phi.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_panel(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.config;
    let mut frame = read_panel(ctx)?;
    if cfg.inputs.measures.is_some() {
        let path = ctx.input(&cfg.inputs.measures.clone(), "measures")?;
        let series = relations::read_measures_csv(open(&path)?).map_err(|e| in_file(&path, e))?;
        let mut by_kind: BTreeMap<MeasureKind, Vec<&relations::MeasureSeries>> = BTreeMap::new();
        for s in &series {
            by_kind.entry(s.kind).or_default().push(s);
        }
        for (kind, rows) in by_kind {
            let unmatched =
                frame.insert_keyed(kind.as_str(), rows.iter().map(|s| (s.country.as_str(), s.year, s.value)))?;
            if unmatched > 0 {
                log::warn!("{unmatched} {kind} values have no panel row");
            }
            ctx.note(&format!("unmatched_{kind}"), json!(unmatched));
        }
    }
    if cfg.panel.balanced {
        let e = &cfg.estimation;
        let mut required: Vec<&str> = vec![e.outcome.as_str()];
        required.extend(e.shocks.iter().map(String::as_str));
        let before = frame.country_list().len();
        frame = panel::balanced_subset(&frame, &required, e.horizons)?;
        ctx.note("countries_dropped", json!(before - frame.country_list().len()));
    }
    ctx.note("rows", json!(frame.nrows()));
    ctx.write("panel.csv", |w| frame.write_csv(w))
}

fn cmd_lp(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.config;
    let frame = read_panel(ctx)?;
    let shocks: Vec<&str> = cfg.estimation.shocks.iter().map(String::as_str).collect();
    let (frame, controls) = with_lag_controls(&frame, cfg, &shocks)?;
    let result = lp::estimate_lp(&frame, &lp_spec(cfg, &controls))?;
    record_irf_samples(ctx, &result.irfs);
    ctx.note("controls", json!(controls));
    ctx.note("skipped_horizons", json!(result.skipped));
    ctx.write("irf.csv", |w| lp::write_irf_csv(&result.irfs, w))
}

fn cmd_lpiv(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.config;
    let frame = read_panel(ctx)?;
    let (frame, controls) = with_lag_controls(&frame, cfg, &[cfg.estimation.shock()?])?;
    let spec = lpiv_spec(cfg, &controls)?;
    let results = iv::estimate_lp_iv(&frame, &spec)?;
    let first = iv::first_stage_irf(&frame, &spec)?;
    ctx.samples = results
        .iter()
        .map(|r| HorizonCount { horizon: r.horizon, nobs: r.nobs, n_countries: r.n_countries })
        .collect();
    let weak: Vec<i32> = results.iter().filter(|r| r.weak).map(|r| r.horizon).collect();
    if !weak.is_empty() {
        log::warn!("weak first stage at horizons {weak:?}");
    }
    ctx.note("weak_horizons", json!(weak));
    ctx.note("controls", json!(controls));
    ctx.write("lp_iv.csv", |w| iv::write_lp_iv_csv(&spec.shock, &results, w))?;
    ctx.write("first_stage.csv", |w| lp::write_irf_csv(&first, w))
}

fn cmd_ardl(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.config;
    let e = &cfg.estimation;
    let frame = read_panel(ctx)?;
    let fit = dynamics::estimate_ardl(&frame, &e.outcome, e.shock()?, e.lags as usize, &e.groups, e.bandwidth, e.fe)?;
    let irf = dynamics::irf_from_ardl(&fit.params, e.ardl_horizon, e.recursion);
    ctx.samples = vec![HorizonCount {
        horizon: 0,
        nobs: fit.regression.nobs,
        n_countries: fit.regression.n_countries,
    }];
    ctx.note("stable", json!(fit.stable));
    ctx.note("spectral_radius", json!(fit.spectral_radius));
    ctx.note("phi_inf", json!(irf.phi_inf));
    let reg = &fit.regression;
    ctx.write("ardl_coefficients.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["term", "coef", "se"])?;
        for (j, name) in reg.names.iter().enumerate() {
            out.write_record([name.clone(), reg.coefficients[j].to_string(), reg.se(j).to_string()])?;
        }
        out.flush()?;
        Ok(())
    })?;
    ctx.write("ardl_irf.csv", |w| dynamics::write_ardl_irf_csv(&irf, w))
}

fn cmd_decompose(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.config;
    let e = &cfg.estimation;
    let h = cfg.decompose.horizon;
    let shock = e.shock()?;
    let frame = read_panel(ctx)?;
    let (frame, controls) = with_lag_controls(&frame, cfg, &[shock])?;
    let mut own_spec = dynamics::own_irf_spec(shock, &controls, &e.groups, h as i32).with_bandwidth(e.bandwidth);
    own_spec.fe = e.fe;
    let own_res = lp::estimate_lp(&frame, &own_spec)?;
    let own = dynamics::normalize_own_irf(&dynamics::contiguous_path(&own_res, shock)?)?;
    let outcome_irf = match cfg.decompose.source {
        OutcomeSource::Lp => {
            let mut spec = lp_spec(cfg, &controls);
            spec.shocks = vec![shock.to_string()];
            spec.horizons = (0, h as i32);
            let res = lp::estimate_lp(&frame, &spec)?;
            record_irf_samples(ctx, &res.irfs);
            dynamics::contiguous_path(&res, shock)?
        }
        OutcomeSource::Ardl => {
            let fit =
                dynamics::estimate_ardl(&frame, &e.outcome, shock, e.lags as usize, &e.groups, e.bandwidth, e.fe)?;
            dynamics::irf_from_ardl(&fit.params, h, e.recursion).phi
        }
    };
    let d = dynamics::decompose(&own, &outcome_irf)?;
    ctx.note("own_irf_samples", json!(own_res.irfs.iter().map(|r| r.nobs).collect::<Vec<_>>()));
    ctx.write("decomposition.csv", |w| dynamics::write_decomposition_csv(&d, w))
}

fn cmd_bootstrap(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.config;
    let e = &cfg.estimation;
    let b = &cfg.bootstrap;
    let frame = read_panel(ctx)?;
    let (frame, target) = match b.target {
        TargetKind::Lp => {
            let shocks: Vec<&str> = e.shocks.iter().map(String::as_str).collect();
            let (frame, controls) = with_lag_controls(&frame, cfg, &shocks)?;
            let spec = lp_spec(cfg, &controls);
            (frame, Target::Lp(spec))
        }
        TargetKind::LpIv => {
            let (frame, controls) = with_lag_controls(&frame, cfg, &[e.shock()?])?;
            let spec = lpiv_spec(cfg, &controls)?;
            (frame, Target::LpIv(spec))
        }
        TargetKind::Ardl => (
            frame,
            Target::Ardl(ArdlTarget {
                outcome: e.outcome.clone(),
                measure: e.shock()?.to_string(),
                lags: e.lags as usize,
                groups: e.groups.clone(),
                horizon: e.ardl_horizon,
                form: e.recursion,
                bandwidth: e.bandwidth,
                fe: e.fe,
            }),
        ),
    };
    let spec = BootstrapSpec {
        scheme: b.scheme,
        replications: b.replications,
        seed: b.seed,
        target,
        wild_level: b.wild_level,
    };
    let result = infer::run_bootstrap(&frame, &spec)?;
    ctx.seed = Some(b.seed);
    ctx.note("failures", json!(result.failures));
    ctx.write("bootstrap.csv", |w| infer::write_bootstrap_csv(&result, w))
}

/// Reads the transitory and permanent columns of a decomposition CSV.
fn read_decomposition(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    #[derive(serde::Deserialize)]
    struct Row {
        transitory: f64,
        permanent: f64,
    }
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let (mut transitory, mut permanent) = (Vec::new(), Vec::new());
    for row in rdr.deserialize::<Row>() {
        let row = row?;
        transitory.push(row.transitory);
        permanent.push(row.permanent);
    }
    Ok((transitory, permanent))
}

fn accounting_inputs(ctx: &mut Context) -> Result<AccountingInputs> {
    let cfg = ctx.config;
    let path = ctx.input(&cfg.inputs.decomposition.clone(), "decomposition")?;
    let (transitory, permanent) = read_decomposition(&path).map_err(|e| in_file(&path, e))?;
    let ph = cfg.account.permanent_horizon;
    let permanent_25 = *permanent.get(ph).ok_or_else(|| {
        Error::Config(format!("decomposition has {} horizons; permanent_horizon is {ph}", permanent.len()))
    })?;
    let frame = read_panel(ctx)?;
    let column = match &cfg.account.measure {
        Some(m) => m.clone(),
        None => cfg.estimation.shock()?.to_string(),
    };
    let measure: MeasurePanel = account::measure_panel_from_frame(&frame, &column)?;
    let mut inputs = AccountingInputs::new(transitory, permanent_25, measure);
    inputs.window = cfg.account.window;
    inputs.first_year = cfg.account.first_year;
    inputs.validate()?;
    Ok(inputs)
}

fn cmd_account(ctx: &mut Context) -> Result<()> {
    let inputs = accounting_inputs(ctx)?;
    let rows = account::counterfactual_all(&inputs)?;
    let medians = account::median_series(&inputs.measure);
    ctx.note("units", json!(account::UNITS_NOTE));
    ctx.write("counterfactual.csv", |w| account::write_counterfactual_csv(&rows, w))?;
    ctx.write("median.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["year", "median"])?;
        for (y, m) in &medians {
            out.write_record([y.to_string(), m.to_string()])?;
        }
        out.flush()?;
        Ok(())
    })
}

fn cmd_stats(ctx: &mut Context) -> Result<()> {
    let inputs = accounting_inputs(ctx)?;
    let years: BTreeSet<i32> = inputs.measure.values().flat_map(|m| m.keys().copied()).collect();
    let (Some(&lo), Some(&hi)) = (years.first(), years.last()) else {
        return Err(Error::Data("measure panel is empty".into()));
    };
    let first = (lo + 1).div_euclid(10) * 10 + if (lo + 1).rem_euclid(10) == 0 { 0 } else { 10 };
    let mut rows = Vec::new();
    let mut excluded = serde_json::Map::new();
    let mut start = first;
    while start + 9 <= hi {
        let d = account::decade_effects(&inputs, start)?;
        if !d.excluded.is_empty() {
            excluded.insert(start.to_string(), json!(d.excluded));
        }
        rows.extend(d.rows);
        start += 10;
    }
    if rows.is_empty() {
        log::warn!("no complete decade in {lo}-{hi}");
    }
    let summary = account::decade_summary(&rows);
    ctx.note("excluded", Value::Object(excluded));
    ctx.write("decades.csv", |w| account::write_decade_csv(&rows, w))?;
    ctx.write("decade_summary.csv", |w| account::write_decade_summary_csv(&summary, w))
}

fn cmd_simulate(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.config;
    let s = &cfg.simulate;
    match s.kind {
        SimulateKind::Panel => {
            let (frame, truth) = sim::generate_panel(&s.panel)?;
            ctx.seed = Some(s.panel.seed);
            ctx.write("panel.csv", |w| frame.write_csv(w))?;
            ctx.write("truth.json", |w| sim::write_truth_json(&truth, w))
        }
        SimulateKind::Events => {
            let ev = &s.events;
            let events = sim::generate_events(ev)?;
            let weights = sim::uniform_weights(&s.majors, ev.first_year, ev.n_years, s.major_share)?;
            let majors: BTreeSet<String> = s.majors.iter().cloned().collect();
            let yearly = relations::yearly_pair_scores(&events);
            let dynamic = relations::dynamic_pair_scores(&yearly, &cfg.measures.score_config(), None)?;
            let index = relations::aggregate_country(&dynamic, &weights, &majors)?;
            let frame = PanelFrame::from_records(
                index
                    .iter()
                    .map(|m| PanelRecord {
                        country: m.country.clone(),
                        year: m.year,
                        region: sim::region_name(0),
                        values: vec![("index".into(), m.value)],
                        groups: vec![],
                    })
                    .collect(),
            )?;
            let outcome = &cfg.estimation.outcome;
            let with_y = sim::outcome_from_measure(&frame, "index", outcome, &s.outcome)?;
            let y = with_y.column(outcome)?;
            let out = PanelFrame::from_records(
                (0..with_y.nrows())
                    .map(|i| PanelRecord {
                        country: with_y.countries()[i].clone(),
                        year: with_y.years()[i],
                        region: with_y.regions()[i].clone(),
                        values: vec![(outcome.clone(), y[i])],
                        groups: vec![],
                    })
                    .collect(),
            )?;
            let params = ArdlParams::new(s.outcome.alpha, &s.outcome.beta, &s.outcome.gamma)?;
            let truth = dynamics::irf_from_ardl(&params, cfg.estimation.ardl_horizon, cfg.estimation.recursion);
            ctx.seed = Some(ev.seed);
            ctx.note("events", json!(events.len()));
            ctx.write("events.jsonl", |w| events::write_jsonl(&events, w))?;
            ctx.write("weights.csv", |w| weights.write_csv(w))?;
            ctx.write("panel.csv", |w| out.write_csv(w))?;
            ctx.write("truth.json", |w| {
                serde_json::to_writer_pretty(&mut *w, &truth)
                    .map_err(|e| Error::Data(format!("cannot write truth: {e}")))?;
                Ok(())
            })
        }
    }
}
