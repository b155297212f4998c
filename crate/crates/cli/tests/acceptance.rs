//! Acceptance gate. Each criterion prints one PASS/FAIL line with its
//! elapsed time and budget; the process exits nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use geogrowth::account::{self, AccountingInputs, MeasurePanel};
use geogrowth::dynamics::{self, ArdlParams, RecursionForm};
use geogrowth::events::{EconomicEvent, EventRecord, QuadClass, Relationship};
use geogrowth::infer::{run_bootstrap, BootstrapSpec, Scheme, Target, WildLevel};
use geogrowth::iv::{self, LpIvSpec};
use geogrowth::lp::{self, dk_covariance, Bandwidth, FeOptions, LpSpec};
use geogrowth::panel::{self, add_lags, GroupKey, PanelFrame, PanelRecord};
use geogrowth::relations::{
    aggregate_country, dynamic_pair_scores, update_dynamic_score, yearly_pair_scores, DynamicPairScore,
    MissingYear, ScoreConfig, WeightTable,
};
use geogrowth::sim::{self, DgpSpec, EventDgpSpec, InnovationDesign};
use geogrowth_cli::commands::{execute, Command};
use geogrowth_cli::config::{RunConfig, SimulateKind};
use geogrowth_cli::manifest::{without_timestamp, MANIFEST_FILE};
use nalgebra::{DMatrix, DVector};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T>(r: geogrowth::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Deterministic values in `[0, 1)` for randomized inputs.
fn unit(i: u64, salt: u64) -> f64 {
    let x = (i.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt.wrapping_mul(0xBF58_476D_1CE4_E5B9)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (x >> 11) as f64 / (1u64 << 53) as f64
}

fn event(year: i32, a: &str, b: &str, goldstein: f64) -> EventRecord {
    let (quad, root, code) = if goldstein < 0.0 {
        (QuadClass::MaterialConflict, 16, 160)
    } else {
        (QuadClass::VerbalCooperation, 5, 50)
    };
    EventRecord {
        year,
        country1: a.into(),
        country2: b.into(),
        event_name: "e".into(),
        event_description: String::new(),
        cameo_quad_class: quad,
        cameo_root_code: root,
        cameo_event_code: code,
        economic_event: EconomicEvent::NotAnEconomicEvent,
        goldstein,
        relationship: Relationship::ALL[4],
        evaluation_summary: String::new(),
    }
}

fn ac1_score_recursion() -> Check {
    let ev = [event(2001, "USA", "RUS", 10.0), event(2001, "USA", "RUS", -10.0)];
    let yearly = yearly_pair_scores(&ev);
    ensure(yearly.len() == 1 && yearly[0].s_tilde == 0.0 && yearly[0].n_tilde == 2, || format!("{yearly:?}"))?;
    let pair = yearly[0].pair.clone();
    let prev = DynamicPairScore { s: 0.5, n_effective: 2.0, ..DynamicPairScore::empty(pair.clone(), 2000, 0.3) };
    let next = ok(update_dynamic_score(&prev, Some(&yearly[0]), MissingYear::Decay))?;
    ensure((next.s - 0.205882).abs() <= 1e-6, || format!("S_t = {}", next.s))?;

    let carried = ok(update_dynamic_score(&prev, None, MissingYear::Decay))?;
    ensure(carried.s == 0.5 && carried.n_effective == (1.0 - 0.3) * 2.0, || format!("carry {carried:?}"))?;
    let frozen = ok(update_dynamic_score(&prev, None, MissingYear::Freeze))?;
    ensure(frozen.s == 0.5 && frozen.n_effective == 2.0, || format!("freeze {frozen:?}"))?;

    let cold_ev = [event(1990, "USA", "RUS", 3.7)];
    let cold = ok(dynamic_pair_scores(&yearly_pair_scores(&cold_ev), &ScoreConfig::default(), None))?;
    ensure(cold.len() == 1 && cold[0].s == 0.37 && cold[0].phi == 1.0, || format!("cold {cold:?}"))?;
    Ok(format!("S_t = {:.6}", next.s))
}

fn weights_for(majors: &[String], first: i32, years: usize, shares: &[f64]) -> WeightTable {
    let mut w = WeightTable::new();
    for t in 0..years {
        for (m, s) in majors.iter().zip(shares) {
            w.insert(first + t as i32, m, *s).unwrap();
        }
    }
    w
}

fn keyed(series: &[geogrowth::relations::MeasureSeries]) -> BTreeMap<(String, i32), f64> {
    series.iter().map(|m| ((m.country.clone(), m.year), m.value)).collect()
}

fn ac2_aggregation() -> Check {
    let countries: Vec<String> = (0..5).map(sim::country_name).collect();
    let majors: Vec<String> = countries[..2].to_vec();
    let major_set: BTreeSet<String> = majors.iter().cloned().collect();
    let (first, years) = (2000, 8);
    let eps = 0.1;
    let mut worst = 0.0f64;
    for seed in 0..1000u64 {
        let spec = EventDgpSpec {
            countries: countries.clone(),
            first_year: first,
            n_years: years,
            rate: 1.5,
            goldstein_mean: 8.0 * unit(seed, 1) - 4.0,
            goldstein_sd: 6.0,
            economic_share: 0.2,
            seed,
        };
        let events = ok(sim::generate_events(&spec))?;
        let dynamic = ok(dynamic_pair_scores(&yearly_pair_scores(&events), &ScoreConfig::default(), None))?;
        let w1: Vec<f64> = (0..2).map(|j| 0.25 * unit(seed, 10 + j)).collect();
        let w2: Vec<f64> = (0..2).map(|j| 0.25 * unit(seed, 20 + j)).collect();
        let sum: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let idx = |w: &[f64]| -> Result<BTreeMap<(String, i32), f64>, String> {
            Ok(keyed(&ok(aggregate_country(&dynamic, &weights_for(&majors, first, years, w), &major_set))?))
        };
        let (i1, i2, is) = (idx(&w1)?, idx(&w2)?, idx(&sum)?);
        for (k, v) in &is {
            ensure(v.abs() <= 1.0, || format!("seed {seed}: index {v} at {k:?}"))?;
            let lin = (v - i1[k] - i2[k]).abs();
            worst = worst.max(lin);
            ensure(lin <= 1e-12, || format!("seed {seed}: weight linearity off by {lin:e}"))?;
        }

        let a = 0.37;
        let scaled: Vec<DynamicPairScore> =
            dynamic.iter().map(|d| DynamicPairScore { s: a * d.s, ..d.clone() }).collect();
        let isc = keyed(&ok(aggregate_country(&scaled, &weights_for(&majors, first, years, &w1), &major_set))?);
        for (k, v) in &isc {
            let lin = (v - a * i1[k]).abs();
            worst = worst.max(lin);
            ensure(lin <= 1e-12, || format!("seed {seed}: score linearity off by {lin:e}"))?;
        }

        let pair_score: BTreeMap<((String, String), i32), f64> =
            dynamic.iter().map(|d| ((d.pair.clone(), d.year), d.s)).collect();
        for (m, major) in majors.iter().enumerate() {
            let mut bumped = w1.clone();
            bumped[m] += eps;
            let ib = idx(&bumped)?;
            for (k, v) in &ib {
                let s = if k.0 == *major {
                    0.0
                } else {
                    let pair = geogrowth::events::ordered_pair(&k.0, major);
                    pair_score.get(&(pair, k.1)).copied().unwrap_or(0.0)
                };
                let delta = v - i1.get(k).copied().unwrap_or(0.0);
                let off = (delta - eps * s).abs();
                worst = worst.max(off);
                ensure(off <= 1e-12, || format!("seed {seed}: weight response off by {off:e}"))?;
                ensure(s * delta >= -1e-12, || format!("seed {seed}: more weight on {major} moved {k:?} against its score"))?;
            }
        }
    }
    Ok(format!("1000 corpora, worst deviation {worst:.1e}"))
}

fn frame_from(rows: &[(String, i32, f64)]) -> PanelFrame {
    PanelFrame::from_records(
        rows.iter()
            .map(|(c, t, v)| PanelRecord {
                country: c.clone(),
                year: *t,
                region: "R0".into(),
                values: vec![("y".into(), *v)],
                groups: vec![],
            })
            .collect(),
    )
    .unwrap()
}

/// Residuals from least squares on an intercept plus country and year dummies.
fn dummy_residuals(frame: &PanelFrame, y: &[f64]) -> Vec<f64> {
    let cs = frame.country_list();
    let ys: Vec<i32> = frame.years().iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let n = frame.nrows();
    let k = 1 + (cs.len() - 1) + (ys.len() - 1);
    let mut d = DMatrix::zeros(n, k);
    for i in 0..n {
        d[(i, 0)] = 1.0;
        let ci = cs.iter().position(|c| *c == frame.countries()[i]).unwrap();
        if ci > 0 {
            d[(i, ci)] = 1.0;
        }
        let ti = ys.iter().position(|t| *t == frame.years()[i]).unwrap();
        if ti > 0 {
            d[(i, cs.len() - 1 + ti)] = 1.0;
        }
    }
    let yv = DVector::from_column_slice(y);
    let b = d.clone().svd(true, true).solve(&yv, 1e-13).unwrap();
    (yv - d * b).iter().copied().collect()
}

fn ac3_demeaning() -> Check {
    let groups = [GroupKey::Country, GroupKey::Year];
    let mut worst = 0.0f64;
    let toys: [(usize, usize, bool); 2] = [(3, 3, false), (10, 20, true)];
    for (nc, nt, holes) in toys {
        let mut rows = Vec::new();
        for c in 0..nc {
            for t in 0..nt {
                if holes && (c * 7 + t * 3) % 11 == 0 {
                    continue;
                }
                let v = (c as f64 * 1.3 + t as f64 * 0.7).sin() * 5.0 + unit((c * 100 + t) as u64, 3);
                rows.push((sim::country_name(c), 2000 + t as i32, v));
            }
        }
        let f = frame_from(&rows);
        let once = ok(panel::demean(&f, &["y"], &groups, 1e-14, 100_000))?;
        let twice = ok(panel::demean(&once, &["y"], &groups, 1e-14, 100_000))?;
        let oracle = dummy_residuals(&f, ok(f.column("y"))?);
        let got = ok(once.column("y"))?;
        for i in 0..f.nrows() {
            let d = (got[i] - oracle[i]).abs();
            worst = worst.max(d);
            ensure(d <= 1e-10, || format!("{nc}x{nt}: residual off by {d:e}"))?;
            let idem = (ok(twice.column("y"))?[i] - got[i]).abs();
            ensure(idem <= 1e-10, || format!("{nc}x{nt}: not idempotent ({idem:e})"))?;
        }
    }
    Ok(format!("worst deviation {worst:.1e}"))
}

fn orthogonal_spec(alpha: f64, beta: Vec<f64>, gamma: Vec<f64>) -> DgpSpec {
    DgpSpec {
        n_countries: 64,
        n_years: 40,
        measure_ar: vec![0.0],
        design: InnovationDesign::Orthogonal,
        alpha,
        beta,
        gamma,
        noise_sd: 0.0,
        burn_in: 0,
        truth_horizon: 30,
        seed: 1,
        ..DgpSpec::default()
    }
}

fn ac4_lp_exactness() -> Check {
    let spec = orthogonal_spec(2.0, vec![0.6], vec![0.0]);
    let (frame, truth) = ok(sim::generate_panel(&spec))?;
    let res = ok(lp::estimate_lp(&frame, &LpSpec::new("y", &["p"], (0, 20))))?;
    ensure(res.skipped.is_empty(), || format!("skipped {:?}", res.skipped))?;
    let mut worst = 0.0f64;
    for r in &res.irfs {
        let d = (r.coef("p").unwrap() - truth.phi[r.horizon as usize]).abs();
        worst = worst.max(d);
        ensure(d <= 1e-8, || format!("h={}: off by {d:e}", r.horizon))?;
    }

    let g = DgpSpec { country_sd: 1.0, year_sd: 0.5, seed: 4, ..DgpSpec::default() };
    let (f, _) = ok(sim::generate_panel(&g))?;
    let (f, lags) = ok(add_lags(&f, &["y", "p"], 2))?;
    let groups = [GroupKey::Country, GroupKey::Year];
    let full = ok(lp::estimate_lp(&f, &LpSpec::new("y", &["p"], (0, 0)).with_controls(&lags).with_groups(&groups)))?;
    let pairs = ok(lp::fwl_residualize(&f, "y", "p", &lags, &groups, FeOptions::default()))?;
    let slope = lp::residual_slope(&pairs);
    let coef = full.irfs[0].coef("p").unwrap();
    let d = (slope - coef).abs();
    ensure(d <= 1e-8, || format!("FWL slope {slope} vs coefficient {coef}"))?;
    Ok(format!("worst IRF deviation {worst:.1e}, FWL gap {d:.1e}"))
}

/// Direct DK formula for two regressors: explicit 2x2 inverse, per-year
/// moment sums, Bartlett weights over calendar-year lags.
fn direct_dk(x: &[[f64; 2]], e: &[f64], years: &[i32], bw: usize) -> [[f64; 2]; 2] {
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for r in x {
        a += r[0] * r[0];
        b += r[0] * r[1];
        c += r[1] * r[1];
    }
    let det = a * c - b * b;
    let inv = [[c / det, -b / det], [-b / det, a / det]];
    let mut sums: BTreeMap<i32, [f64; 2]> = BTreeMap::new();
    for ((r, ei), t) in x.iter().zip(e).zip(years) {
        let s = sums.entry(*t).or_insert([0.0; 2]);
        s[0] += r[0] * ei;
        s[1] += r[1] * ei;
    }
    let mut meat = [[0.0; 2]; 2];
    for (t, st) in &sums {
        for l in 0..=bw as i32 {
            let Some(sl) = sums.get(&(t - l)) else { continue };
            let w = 1.0 - l as f64 / (bw as f64 + 1.0);
            for i in 0..2 {
                for j in 0..2 {
                    meat[i][j] += if l == 0 { st[i] * st[j] } else { w * (st[i] * sl[j] + sl[i] * st[j]) };
                }
            }
        }
    }
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for m in 0..2 {
                    out[i][j] += inv[i][k] * meat[k][m] * inv[m][j];
                }
            }
        }
    }
    out
}

fn ac5_driscoll_kraay() -> Check {
    let mut x = Vec::new();
    let mut e = Vec::new();
    let mut years = Vec::new();
    for c in 0..3 {
        for t in 0..7 {
            if (c, t) == (1, 3) || (c, t) == (2, 0) {
                continue;
            }
            let i = (c * 10 + t) as u64;
            x.push([unit(i, 1) - 0.5, 2.0 * unit(i, 2) - 0.3]);
            e.push(unit(i, 3) - 0.5);
            years.push(1990 + t);
        }
    }
    let xm = DMatrix::from_fn(x.len(), 2, |i, j| x[i][j]);
    let mut worst = 0.0f64;
    for bw in [0usize, 1, 2, 4] {
        let got = ok(dk_covariance(&xm, &e, &years, bw))?;
        let want = direct_dk(&x, &e, &years, bw);
        for i in 0..2 {
            for j in 0..2 {
                let d = (got[(i, j)] - want[i][j]).abs();
                worst = worst.max(d);
                ensure(d <= 1e-12, || format!("bandwidth {bw}: entry ({i},{j}) off by {d:e}"))?;
            }
        }
    }

    let n = 9;
    let xs: Vec<[f64; 2]> = (0..n).map(|i| [1.0, unit(i as u64, 7) * 3.0]).collect();
    let es: Vec<f64> = (0..n).map(|i| unit(i as u64, 8) - 0.5).collect();
    let ys: Vec<i32> = (0..n as i32).map(|t| 2000 + t).collect();
    let got = ok(dk_covariance(&DMatrix::from_fn(n, 2, |i, j| xs[i][j]), &es, &ys, 0))?;
    let xm = DMatrix::from_fn(n, 2, |i, j| xs[i][j]);
    let bread = (xm.transpose() * &xm).try_inverse().unwrap();
    let mut meat = DMatrix::zeros(2, 2);
    for i in 0..n {
        let r = DVector::from_column_slice(&xs[i]);
        meat += &r * r.transpose() * (es[i] * es[i]);
    }
    let hc0 = &bread * meat * &bread;
    let d = (got - hc0).abs().max();
    ensure(d <= 1e-12, || format!("HC0 gap {d:e}"))?;
    Ok(format!("worst deviation {worst:.1e}, HC0 gap {d:.1e}"))
}

fn ac6_lp_ardl() -> Check {
    let spec = orthogonal_spec(1.5, vec![0.5, 0.2], vec![0.3, -0.1]);
    let (frame, truth) = ok(sim::generate_panel(&spec))?;
    let res = ok(lp::estimate_lp(&frame, &LpSpec::new("y", &["p"], (0, 20))))?;
    let params = ok(ArdlParams::new(1.5, &[0.5, 0.2], &[0.3, -0.1]))?;
    let recursion = dynamics::irf_from_ardl(&params, 20, RecursionForm::Consistent).phi;
    let fit = ok(dynamics::estimate_ardl(&frame, "y", "p", 2, &[], Bandwidth::Auto, FeOptions::default()))?;
    let fitted = dynamics::irf_from_ardl(&fit.params, 20, RecursionForm::Consistent).phi;
    let mut worst = 0.0f64;
    for r in &res.irfs {
        let h = r.horizon as usize;
        let c = r.coef("p").unwrap();
        for (label, v) in [("recursion", recursion[h]), ("fitted ARDL", fitted[h]), ("truth", truth.phi[h])] {
            let d = (c - v).abs();
            worst = worst.max(d);
            ensure(d <= 1e-6, || format!("h={h}: LP {c} vs {label} {v}"))?;
        }
    }
    Ok(format!("h=0..20, worst deviation {worst:.1e}"))
}

fn ac7_decomposition() -> Check {
    let h = 60;
    let mut worst = 0.0f64;
    let mut e0 = vec![0.0; h + 1];
    e0[0] = 1.0;
    for i in 0..100u64 {
        let (a1, a2) = loop_stable(i);
        let own = sim::ar_irf(&[a1, a2], h);
        let shock = ok(dynamics::solve_transitory_shock(&own))?;
        let back = dynamics::convolve_truncated(&own, &shock);
        for k in 0..=h {
            let d = (back[k] - e0[k]).abs();
            worst = worst.max(d);
            ensure(d <= 1e-10, || format!("case {i}: Toeplitz product off by {d:e} at {k}"))?;
        }
        let outcome: Vec<f64> = (0..=h).map(|k| (0.3 * k as f64).cos() * 0.9f64.powi(k as i32)).collect();
        let trans = ok(dynamics::transitory_outcome_irf(&shock, &outcome))?;
        let recon = dynamics::convolve_truncated(&own, &trans);
        for k in 0..=h {
            let d = (recon[k] - outcome[k]).abs();
            worst = worst.max(d);
            ensure(d <= 1e-10, || format!("case {i}: reconvolution off by {d:e} at {k}"))?;
        }
    }
    for rho in [0.3, 0.6, 0.9, -0.4] {
        let shock = ok(dynamics::solve_transitory_shock(&sim::ar_irf(&[rho], 30)))?;
        let mut want = vec![0.0; 31];
        want[0] = 1.0;
        want[1] = -rho;
        ensure(shock == want, || format!("AR(1) rho={rho}: {:?}", &shock[..4]))?;
    }
    let cases = [(1.0, vec![0.5], vec![0.2], 0.6), (0.8, vec![0.7, 0.1], vec![-0.3, 0.1], 0.4), (2.0, vec![0.0], vec![0.0], 0.9)];
    for (alpha, beta, gamma, rho) in cases {
        let params = ok(ArdlParams::new(alpha, &beta, &gamma))?;
        let irf = dynamics::irf_from_ardl(&params, 200, RecursionForm::Consistent);
        let own = sim::ar_irf(&[rho], 200);
        let outcome = dynamics::convolve_truncated(&irf.phi, &own);
        let d = ok(dynamics::decompose(&own, &outcome))?;
        let gap = (d.permanent_outcome[200] - irf.phi_inf).abs();
        ensure(gap <= 1e-6, || format!("alpha={alpha}: cumulative {} vs {}", d.permanent_outcome[200], irf.phi_inf))?;
    }
    Ok(format!("100 random own responses, worst deviation {worst:.1e}"))
}

fn loop_stable(i: u64) -> (f64, f64) {
    let mut salt = 0;
    loop {
        let a1 = 1.8 * unit(i, 100 + salt) - 0.9;
        let a2 = 0.8 * unit(i, 200 + salt) - 0.4;
        if dynamics::spectral_radius(&[a1, a2]) < 0.95 {
            return (a1, a2);
        }
        salt += 1;
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn ac8_lp_iv() -> Check {
    let base = DgpSpec {
        n_countries: 50,
        n_years: 80,
        measure_ar: vec![0.5],
        alpha: 1.0,
        beta: vec![0.8],
        gamma: vec![0.0],
        noise_sd: 1.0,
        year_sd: 0.5,
        instrument_loading: 1.0,
        endogeneity: 0.5,
        truth_horizon: 10,
        ..DgpSpec::default()
    };
    let truth = ok(sim::ground_truth(&base))?.lp_truth;
    let reps = 200;
    let runs = geogrowth::exec::map_indexed(reps, |r| -> geogrowth::Result<(Vec<f64>, Vec<f64>)> {
        let spec = DgpSpec { seed: 40_000 + r as u64, ..base.clone() };
        let (frame, _) = sim::generate_panel(&spec)?;
        let (frame, lags) = add_lags(&frame, &["p"], 1)?;
        let groups = [GroupKey::Year];
        let ivr = iv::estimate_lp_iv(&frame, &LpIvSpec::new("y", "p", "z", (0, 10)).with_controls(&lags).with_groups(&groups))?;
        let ratio = ivr.iter().map(|x| x.ratio.unwrap_or(f64::NAN)).collect();
        let ols = lp::estimate_lp(&frame, &LpSpec::new("y", &["p"], (0, 10)).with_controls(&lags).with_groups(&groups))?;
        Ok((ratio, ols.path("p")))
    });
    let runs: Vec<(Vec<f64>, Vec<f64>)> = runs.into_iter().collect::<geogrowth::Result<_>>().map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut ols_bias0 = 0.0;
    for h in 0..=10 {
        let m = mean(&runs.iter().map(|r| r.0[h]).collect::<Vec<_>>());
        let rel = (m - truth[h]).abs() / truth[h].abs();
        worst = worst.max(rel);
        ensure(rel < 0.05, || format!("h={h}: IV mean {m} vs truth {} (rel bias {rel:.3})", truth[h]))?;
        if h == 0 {
            ols_bias0 = mean(&runs.iter().map(|r| r.1[0]).collect::<Vec<_>>()) - truth[0];
        }
    }

    let spec = DgpSpec { seed: 99, ..base };
    let (mut frame, _) = ok(sim::generate_panel(&spec))?;
    let z = ok(frame.column("z"))?.to_vec();
    ok(frame.insert_column("z_pow2", z.iter().map(|v| -4.0 * v).collect()))?;
    ok(frame.insert_column("z_odd", z.iter().map(|v| 3.7 * v).collect()))?;
    let run = |inst: &str| iv::estimate_lp_iv(&frame, &LpIvSpec::new("y", "p", inst, (0, 10)).with_groups(&[GroupKey::Year]));
    let (a, b, c) = (ok(run("z"))?, ok(run("z_pow2"))?, ok(run("z_odd"))?);
    for ((x, y), w) in a.iter().zip(&b).zip(&c) {
        ensure(x.ratio == y.ratio && x.ratio_se == y.ratio_se, || format!("h={}: power-of-two rescaling changed the ratio", x.horizon))?;
        let (rx, rw) = (x.ratio.unwrap(), w.ratio.unwrap());
        ensure((rx - rw).abs() <= 1e-12 * rx.abs().max(1.0), || format!("h={}: rescaled ratio {rw} vs {rx}", x.horizon))?;
    }
    Ok(format!("{reps} replications, worst relative bias {worst:.4}; OLS bias at h=0 {ols_bias0:.3}"))
}

fn pooled<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn ac9_bootstrap() -> Check {
    let noiseless = DgpSpec {
        n_countries: 20,
        n_years: 30,
        alpha: 2.0,
        beta: vec![0.0],
        gamma: vec![0.0],
        noise_sd: 0.0,
        seed: 5,
        ..DgpSpec::default()
    };
    let (frame, _) = ok(sim::generate_panel(&noiseless))?;
    for scheme in [Scheme::WildRademacher, Scheme::CountryBlock] {
        let spec = BootstrapSpec {
            scheme,
            replications: 200,
            seed: 1,
            target: Target::Lp(LpSpec::new("y", &["p"], (0, 0))),
            wild_level: WildLevel::Country,
        };
        let res = ok(run_bootstrap(&frame, &spec))?;
        for s in &res.stats {
            ensure(s.hi == s.lo && s.sd == 0.0, || format!("{scheme}: width {:e} for {}", s.hi - s.lo, s.statistic))?;
        }
    }

    let noisy = DgpSpec { n_countries: 30, n_years: 30, seed: 6, ..DgpSpec::default() };
    let (frame, _) = ok(sim::generate_panel(&noisy))?;
    let (frame, lags) = ok(add_lags(&frame, &["p"], 1))?;
    for scheme in [Scheme::WildRademacher, Scheme::CountryBlock] {
        let spec = BootstrapSpec {
            scheme,
            replications: 199,
            seed: 77,
            target: Target::Lp(LpSpec::new("y", &["p"], (0, 3)).with_controls(&lags).with_groups(&[GroupKey::Country])),
            wild_level: WildLevel::Country,
        };
        let one = pooled(1, || run_bootstrap(&frame, &spec)).map_err(|e| e.to_string())?;
        let many = pooled(8, || run_bootstrap(&frame, &spec)).map_err(|e| e.to_string())?;
        let again = pooled(3, || run_bootstrap(&frame, &spec)).map_err(|e| e.to_string())?;
        let bits = |r: &geogrowth::infer::BootstrapResult| -> Vec<u64> { r.draws.iter().flatten().map(|v| v.to_bits()).collect() };
        ensure(bits(&one) == bits(&many) && bits(&one) == bits(&again), || format!("{scheme}: draws differ across thread counts"))?;
    }

    let design = DgpSpec { n_countries: 50, n_years: 30, year_sd: 0.5, ..DgpSpec::default() };
    let alpha = design.alpha;
    let datasets = 200;
    let hits = geogrowth::exec::map_indexed(datasets, |d| -> geogrowth::Result<bool> {
        let spec = DgpSpec { seed: 70_000 + d as u64, ..design.clone() };
        let (frame, _) = sim::generate_panel(&spec)?;
        let (frame, lags) = add_lags(&frame, &["p"], 1)?;
        let b = BootstrapSpec {
            scheme: Scheme::WildRademacher,
            replications: 500,
            seed: d as u64,
            target: Target::Lp(LpSpec::new("y", &["p"], (0, 0)).with_controls(&lags).with_groups(&[GroupKey::Year])),
            wild_level: WildLevel::Country,
        };
        let res = run_bootstrap(&frame, &b)?;
        let s = res.stat("p_h0").expect("statistic present");
        Ok(s.lo <= alpha && alpha <= s.hi)
    });
    let hits: Vec<bool> = hits.into_iter().collect::<geogrowth::Result<_>>().map_err(|e| e.to_string())?;
    let coverage = hits.iter().filter(|h| **h).count() as f64 / datasets as f64;
    ensure((0.92..=0.98).contains(&coverage), || format!("wild coverage {coverage:.3}"))?;
    Ok(format!("zero width exact, bit-identical across 1/3/8 threads, wild coverage {coverage:.3} ({datasets} datasets x 500)"))
}

fn ac10_accounting() -> Check {
    let tau = 1990;
    let mut series = BTreeMap::new();
    for y in tau - 1..=tau + 9 {
        series.insert(y, if y == tau + 9 { 0.128 } else { 0.0 });
    }
    let measure: MeasurePanel = [("AAA".to_string(), series)].into_iter().collect();
    let transitory: Vec<f64> = (0..=25).map(|k| 0.5f64.powi(k)).collect();
    let inputs = AccountingInputs::new(transitory.clone(), 75.0, measure);
    let d = ok(account::decade_effects(&inputs, tau))?;
    let lr = d.rows[0].long_run;
    ensure(lr == 9.6, || format!("long run {lr}"))?;
    let gain = account::steady_state_gain(0.128, 105.0);
    ensure(gain == 0.128 * 105.0 && (gain * 10.0).round() / 10.0 == 13.4, || format!("steady state {gain}"))?;

    let path: BTreeMap<i32, f64> = (1960..2000).map(|y| (y, (y as f64 * 0.37).sin())).collect();
    let same: MeasurePanel = (0..5).map(|c| (sim::country_name(c), path.clone())).collect();
    let rows = ok(account::counterfactual_all(&AccountingInputs::new(transitory.clone(), 75.0, same)))?;
    ensure(rows.iter().all(|r| r.dy_geo == 0.0 && r.pct == 0.0), || "nonzero contribution at the median".into())?;

    let varied: MeasurePanel = (0..7)
        .map(|c| {
            let s: BTreeMap<i32, f64> = (1960..2000).map(|y| (y, unit((c * 1000 + y) as u64, 9) - 0.5)).collect();
            (sim::country_name(c as usize), s)
        })
        .collect();
    let shifted: MeasurePanel = varied
        .iter()
        .map(|(c, s)| (c.clone(), s.iter().map(|(y, v)| (*y, v + 3.7)).collect()))
        .collect();
    let a = ok(account::counterfactual_all(&AccountingInputs::new(transitory.clone(), 75.0, varied)))?;
    let b = ok(account::counterfactual_all(&AccountingInputs::new(transitory, 75.0, shifted)))?;
    let gap = a.iter().zip(&b).map(|(x, y)| (x.dy_geo - y.dy_geo).abs()).fold(0.0, f64::max);
    ensure(gap <= 1e-12, || format!("shift changed contributions by {gap:e}"))?;
    Ok(format!("long run {lr}, steady state {gain:.2}, shift gap {gap:.1e}"))
}

fn golden_config(root: &Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.simulate.kind = SimulateKind::Events;
    c.simulate.events.countries = (0..12).map(sim::country_name).collect();
    c.simulate.events.n_years = 60;
    c.simulate.events.rate = 2.0;
    c.simulate.events.seed = 2024;
    c.simulate.majors = c.simulate.events.countries[..3].to_vec();
    c.simulate.major_share = 0.3;
    c.simulate.outcome.alpha = 10.0;
    c.simulate.outcome.seed = 2024;
    c.estimation.shocks = vec!["dynamic_relation".into()];
    c.estimation.instrument = "instrument".into();
    c.estimation.lags = 2;
    c.estimation.groups = vec![GroupKey::Year];
    c.output = root.join("unused");
    c
}

/// Runs simulate, scores, panel, lp, decompose and account under `root`.
fn golden_run(root: &Path) -> geogrowth::Result<()> {
    let base = golden_config(root);
    let step = |cmd: Command, dir: &str, edit: &dyn Fn(&mut RunConfig)| -> geogrowth::Result<()> {
        let mut c = base.clone();
        c.output = root.join(dir);
        edit(&mut c);
        execute(cmd, &c).map(|_| ())
    };
    step(Command::Simulate, "sim", &|_| {})?;
    step(Command::Scores, "scores", &|c| {
        c.inputs.events = Some(root.join("sim/events.jsonl"));
        c.inputs.weights = Some(root.join("sim/weights.csv"));
    })?;
    step(Command::Panel, "panel", &|c| {
        c.inputs.panel = Some(root.join("sim/panel.csv"));
        c.inputs.measures = Some(root.join("scores/measures.csv"));
    })?;
    step(Command::Lp, "lp", &|c| c.inputs.panel = Some(root.join("panel/panel.csv")))?;
    step(Command::Decompose, "decompose", &|c| c.inputs.panel = Some(root.join("panel/panel.csv")))?;
    step(Command::Account, "account", &|c| {
        c.inputs.panel = Some(root.join("panel/panel.csv"));
        c.inputs.decomposition = Some(root.join("decompose/decomposition.csv"));
    })
}

fn collect_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for dir in fs::read_dir(root).unwrap() {
        let dir = dir.unwrap().path();
        if !dir.is_dir() {
            continue;
        }
        for f in fs::read_dir(&dir).unwrap() {
            let f = f.unwrap().path();
            let key = format!("{}/{}", dir.file_name().unwrap().to_string_lossy(), f.file_name().unwrap().to_string_lossy());
            out.insert(key, fs::read(&f).unwrap());
        }
    }
    out
}

fn ac11_golden_run() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    pooled(1, || golden_run(root)).map_err(|e| e.to_string())?;
    let first = collect_files(root);
    for entry in fs::read_dir(root).map_err(|e| e.to_string())? {
        fs::remove_dir_all(entry.map_err(|e| e.to_string())?.path()).map_err(|e| e.to_string())?;
    }
    pooled(8, || golden_run(root)).map_err(|e| e.to_string())?;
    let second = collect_files(root);
    ensure(first.keys().eq(second.keys()), || "runs produced different file sets".into())?;
    let mut compared = 0;
    for (name, bytes) in &first {
        if name.ends_with(MANIFEST_FILE) {
            let text = |b: &[u8]| without_timestamp(&String::from_utf8_lossy(b));
            ensure(text(bytes) == text(&second[name]), || format!("{name} differs beyond its timestamp"))?;
        } else {
            ensure(*bytes == second[name], || format!("{name} differs between runs"))?;
            compared += 1;
        }
    }
    for name in ["scores/measures.csv", "lp/irf.csv", "decompose/decomposition.csv", "account/counterfactual.csv"] {
        ensure(first.contains_key(name), || format!("missing {name}"))?;
    }
    Ok(format!("{compared} data files byte-identical across 1 and 8 threads, manifests equal up to timestamp"))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, &'static str, u64, fn() -> Check);
    let criteria: [Criterion; 11] = [
        ("AC01", "score recursion", 1, ac1_score_recursion),
        ("AC02", "aggregation bounds, linearity, weight monotonicity", 10, ac2_aggregation),
        ("AC03", "two-way demeaning against dummy regression", 5, ac3_demeaning),
        ("AC04", "noiseless LP exactness and FWL", 5, ac4_lp_exactness),
        ("AC05", "Driscoll-Kraay against direct formula and HC0", 5, ac5_driscoll_kraay),
        ("AC06", "LP equals ARDL recursion on noiseless panel", 30, ac6_lp_ardl),
        ("AC07", "decomposition algebra", 10, ac7_decomposition),
        ("AC08", "LP-IV Monte Carlo bias and scale invariance", 120, ac8_lp_iv),
        ("AC09", "bootstrap degeneracy, determinism, coverage", 900, ac9_bootstrap),
        ("AC10", "accounting identities", 1, ac10_accounting),
        ("AC11", "end-to-end golden run", 60, ac11_golden_run),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| id.contains(p.as_str()) || name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(budget);
        let (status, detail) = match (&outcome, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; over the {budget}s budget")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("{id} {status} {name} [{:.2}s / {budget}s] {detail}", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
