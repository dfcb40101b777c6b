//! Subcommand bodies. Each returns an [`Outcome`]; hard failures are errors.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use plapflow::decay::{late_window, log_corrected_fit, theorem11_statistic, universal_bound_statistic};
use plapflow::density::default_nu;
use plapflow::evolution::{evolve, DtPolicy};
use plapflow::inequalities::{
    estimate_sobolev_constant, gn_survey, lemma21_sums, random_test_function, verify_faber_krahn, witness_text,
    REPORT_HEADER,
};
use plapflow::operator::{caccioppoli_ratio, sample_pairs};
use plapflow::scaling::{decay_exponents, lemma24_bounds_check};
use plapflow::{DecayReport, DensityProfile, EvolutionConfig, FlowTrace, InequalityReport, VertexSet, WeightedGraph};
use rayon::prelude::*;

use crate::config::{scale_label, DensityKind, ExperimentConfig, ExperimentKind, InitialKind, Suite};
use crate::output::OutputDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Outcome {
    Pass,
    Warn,
    Fail,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Pass => 0,
            Outcome::Fail => 1,
            Outcome::Warn => 2,
        }
    }
}

/// Reads an `index value` field file; blank lines and `#` comments are skipped.
pub fn read_field(path: &Path, n: usize) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading field file {}", path.display()))?;
    let mut u = vec![0.0; n];
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed = line
            .split_once(char::is_whitespace)
            .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<f64>().ok()?)));
        let (x, v) = parsed.ok_or_else(|| anyhow!("{}: line {}: expected `index value`", path.display(), i + 1))?;
        if x >= n {
            bail!("{}: line {}: vertex {x} outside the graph ({n} vertices)", path.display(), i + 1);
        }
        u[x] = v;
    }
    Ok(u)
}

/// Unit-amplitude initial field before scaling.
pub fn initial_field(cfg: &ExperimentConfig, g: &WeightedGraph) -> Result<Vec<f64>> {
    let init = &cfg.initial_data;
    let mut u = vec![0.0; g.len()];
    match init.kind {
        InitialKind::Delta => u[g.origin()] = 1.0,
        InitialKind::Box => {
            for x in g.ball_range(init.radius.unwrap_or(0)) {
                u[x] = 1.0;
            }
        }
        InitialKind::Gaussian => {
            let w = init.width.unwrap_or(1.0);
            for x in g.ball_range(g.radius() / 2) {
                let r2: f64 = g.coords(x).iter().map(|&c| (c * c) as f64).sum();
                u[x] = (-r2 / (2.0 * w * w)).exp();
            }
        }
        InitialKind::FromFile => {
            let file = init.file.as_ref().expect("validated");
            u = read_field(&cfg.resolve(file), g.len())?;
        }
    }
    Ok(u)
}

fn initial_label(cfg: &ExperimentConfig) -> String {
    let init = &cfg.initial_data;
    match init.kind {
        InitialKind::Delta => "delta".into(),
        InitialKind::Box => format!("box(radius={})", init.radius.unwrap_or(0)),
        InitialKind::Gaussian => format!("gaussian(width={})", init.width.unwrap_or(1.0)),
        InitialKind::FromFile => {
            format!("from_file({})", init.file.as_ref().map(|f| f.display().to_string()).unwrap_or_default())
        }
    }
}

fn evolution_config(cfg: &ExperimentConfig) -> EvolutionConfig {
    let f = &cfg.flow;
    let mut ec = EvolutionConfig::new(f.p, f.horizon);
    ec.theta = f.theta;
    ec.snapshots = f.snapshots;
    ec.leak_threshold = f.leak_threshold;
    ec.linear_mode = f.linear_mode;
    ec.dt_policy = f.dt.map_or(DtPolicy::Adaptive, DtPolicy::Fixed);
    ec.moment_nu = cfg.analysis.nu.or_else(|| match cfg.experiment {
        ExperimentKind::Universal => default_nu(cfg.graph.dim, f.p, cfg.alpha()),
        _ => None,
    });
    ec
}

pub fn cmd_evolve(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome> {
    let g = cfg.graph()?;
    let profile = cfg.profile()?;
    let base = initial_field(cfg, &g)?;
    let ec = evolution_config(cfg);
    let mut out = OutputDir::create(out_dir)?;
    let mut outcome = Outcome::Pass;
    for &scale in &cfg.initial_data.scales {
        let label = scale_label(scale);
        let u0: Vec<f64> = base.iter().map(|v| v * scale).collect();
        let mut trace = evolve(&g, &profile, &u0, &ec).with_context(|| format!("evolving amplitude scale {label}"))?;
        trace.set_meta("experiment", format!("{:?}", cfg.experiment).to_lowercase());
        trace.set_meta("initial", initial_label(cfg));
        trace.set_meta("amplitude", label.clone());
        trace.set_meta("seed", cfg.seed.to_string());
        let last = trace.records.last().map_or(0.0, |r| r.linf);
        println!(
            "scale {label}: {} steps, final sup norm {last:.6e}{}",
            trace.steps,
            if trace.tainted { ", boundary tainted" } else { "" }
        );
        if trace.tainted {
            log::warn!("scale {label}: solution reached the boundary shell; truncation affects this run");
            outcome = Outcome::Warn;
        } else {
            log::info!("scale {label}: relative mass drift {:.3e}", trace.max_relative_mass_drift());
        }
        out.write(&format!("trace_{label}.csv"), &trace.csv_string())?;
    }
    out.write("resolved_evolve.toml", &cfg.to_toml())?;
    out.finish()?;
    Ok(outcome)
}

fn with_budget(mut rep: InequalityReport, budget: Option<f64>) -> InequalityReport {
    rep.budget = budget;
    rep.pass = rep.worst_ratio.is_finite() && budget.is_none_or(|b| rep.worst_ratio <= b);
    rep
}

fn run_suite(
    cfg: &ExperimentConfig,
    g: &WeightedGraph,
    profile: &DensityProfile,
    suite: Suite,
) -> Result<(InequalityReport, String)> {
    let v = &cfg.verify;
    let p = cfg.flow.p;
    let seed = cfg.seed;
    Ok(match suite {
        Suite::Sobolev => {
            let rep = estimate_sobolev_constant(g, p, v.trials, seed, v.polish_sweeps)?;
            let note = format!("best Sobolev ratio found {:.6e}", rep.worst_ratio);
            (with_budget(rep, v.sobolev_budget), note)
        }
        Suite::FaberKrahn => {
            let rows = (0..v.trials)
                .into_par_iter()
                .map(|i| {
                    let f = random_test_function(g, seed, i).1;
                    let support: Vec<usize> = (0..f.len()).filter(|&x| f[x] != 0.0).collect();
                    let set = VertexSet::new(g, support)?;
                    Ok((verify_faber_krahn(g, &set, &f, p)?, f))
                })
                .collect::<Result<Vec<_>>>()?;
            let chain_ok = rows.iter().all(|(fk, _)| fk.chain_ok);
            let (best, (fk, f)) = rows
                .into_iter()
                .enumerate()
                .max_by(|a, b| a.1 .0.ratio.total_cmp(&b.1 .0.ratio).then(b.0.cmp(&a.0)))
                .expect("at least one trial");
            let mut rep = with_budget(
                InequalityReport::new("faber_krahn", v.trials, fk.ratio, seed, None).with_witness(best, f),
                v.faber_krahn_budget,
            );
            rep.pass &= chain_ok;
            (rep, format!("Sobolev/Hölder chain {}", if chain_ok { "holds" } else { "broken" }))
        }
        Suite::Gn => {
            let tk = cfg.toolkit()?;
            let survey = gn_survey(g, profile, &tk, v.gn_q, v.gn_r, v.trials, seed)?;
            let witness = random_test_function(g, seed, survey.witness_index).1;
            let mut rep = survey.report(seed, None).with_witness(survey.witness_index, witness);
            rep.pass = survey.max.is_finite() && survey.spread() <= v.gn_spread_budget && survey.max_form_gap <= 1e-6;
            let note = format!(
                "{} evaluated, {} skipped, max/median {:.4}, form gap {:.2e}",
                survey.constants.len(),
                survey.skipped,
                survey.spread(),
                survey.max_form_gap
            );
            (rep, note)
        }
        Suite::Lemma21 => {
            let radii = v.lemma21_radii.clone().unwrap_or_else(|| {
                let r = cfg.graph.radius;
                let set: BTreeSet<usize> = [r / 4, r / 2, r].into_iter().filter(|&n| n > 0).collect();
                set.into_iter().collect()
            });
            let rep = lemma21_sums(g, v.lemma21_beta, &radii)?;
            let (worst, what) = match (rep.band, rep.tail_ratio) {
                (Some(b), _) => (b, "max/min of S(n)/n^(N-beta)"),
                (None, Some(t)) => (t, "S(n_max)/S(n_max/2)"),
                (None, None) => (f64::NAN, "no statistic"),
            };
            (
                InequalityReport::new("lemma21", radii.len(), worst, seed, Some(v.lemma21_budget)),
                format!("{what} = {worst:.6}"),
            )
        }
        Suite::Lemma24 => {
            let tk = cfg.toolkit()?;
            let rep = lemma24_bounds_check(&tk, &v.lemma24_gammas, &v.lemma24_radii);
            let checked: usize = rep.per_function.iter().map(|f| f.checked).sum();
            let mut ir = InequalityReport::new("lemma24", checked, rep.worst_margin, seed, None);
            ir.pass = rep.ok && checked > 0;
            (ir, format!("{} sandwich violations, worst relative slack {:.3e}", rep.violations.len(), rep.worst_margin))
        }
        Suite::Caccioppoli => {
            let [lo, hi] = v.caccioppoli_range;
            let pairs = sample_pairs(v.caccioppoli_samples, lo, hi, seed);
            let rep = caccioppoli_ratio(&pairs, v.caccioppoli_h, v.caccioppoli_q, p)?;
            let witness = rep.witness.map(|(a, b)| vec![a, b]).unwrap_or_default();
            let mut ir = InequalityReport::new("caccioppoli", v.caccioppoli_samples, rep.min_ratio, seed, None)
                .with_witness(0, witness);
            ir.pass = rep.min_ratio.is_finite() && rep.min_ratio > 0.0 && rep.sign_ok;
            (ir, format!("{} pairs counted, {} with zero right side", rep.counted, rep.excluded))
        }
    })
}

pub fn cmd_verify(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome> {
    let g = cfg.graph()?;
    let profile = cfg.profile()?;
    let mut out = OutputDir::create(out_dir)?;
    let mut outcome = Outcome::Pass;
    let mut seen = BTreeSet::new();
    for &suite in &cfg.verify.suites {
        if !seen.insert(suite.name()) {
            continue;
        }
        let (rep, note) = run_suite(cfg, &g, &profile, suite).with_context(|| format!("suite {}", suite.name()))?;
        let witness_file = if rep.witness.is_empty() {
            "-".to_string()
        } else {
            let name = format!("{}_witness.txt", suite.name());
            out.write(&name, &witness_text(&rep.witness))?;
            name
        };
        out.write(&format!("{}.csv", suite.name()), &format!("{REPORT_HEADER}\n{}\n", rep.csv_row(&witness_file)))?;
        println!(
            "{}: {} worst ratio {:.6e} over {} trials; {note}",
            suite.name(),
            if rep.pass { "PASS" } else { "FAIL" },
            rep.worst_ratio,
            rep.trials
        );
        if !rep.pass {
            outcome = Outcome::Fail;
        }
    }
    out.write("resolved_verify.toml", &cfg.to_toml())?;
    out.finish()?;
    Ok(outcome)
}

/// Echo that `evolve` writes for the graph of this config.
fn graph_echo(g: &WeightedGraph) -> String {
    format!("Z^{} ball R={} vertices={}", g.dim(), g.radius(), g.len())
}

fn report_stem(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_prefix("trace_").map(str::to_string).unwrap_or(stem)
}

pub fn cmd_analyze(cfg: &ExperimentConfig, paths: &[PathBuf], out_dir: &Path) -> Result<Outcome> {
    if paths.is_empty() {
        bail!("analyze needs at least one trace file");
    }
    let g = cfg.graph()?;
    let profile = cfg.profile()?;
    let p = cfg.flow.p;
    let expected = [("p", p.to_string()), ("density", profile.describe()), ("graph", graph_echo(&g))];
    let mut traces = Vec::with_capacity(paths.len());
    let mut stems = BTreeSet::new();
    for path in paths {
        let text = fs::read_to_string(path).with_context(|| format!("reading trace {}", path.display()))?;
        let trace = FlowTrace::parse_csv(&text).map_err(|e| anyhow!("trace {}: {e}", path.display()))?;
        for (key, want) in &expected {
            if let Some(have) = trace.meta_get(key) {
                if have != want {
                    bail!("mismatch: trace {} has {key} = {have} but the config gives {want}", path.display());
                }
            }
        }
        if !stems.insert(report_stem(path)) {
            bail!("two traces share the report name `{}`", report_stem(path));
        }
        traces.push(trace);
    }

    let frac = cfg.analysis.window_fraction;
    let tol = cfg.analysis.exponent_tolerance;
    let universal = if cfg.experiment == ExperimentKind::Universal {
        if traces.len() < 2 {
            bail!("experiment = \"universal\" needs at least two traces to compare");
        }
        let refs: Vec<&FlowTrace> = traces.iter().collect();
        Some(universal_bound_statistic(&refs, p, frac).map_err(|e| anyhow!("{e}"))?)
    } else {
        None
    };
    let theory = match (cfg.experiment, cfg.density.family) {
        (ExperimentKind::Universal, _) | (_, DensityKind::Table | DensityKind::PowerLog) => None,
        // Heat-kernel rate N/2 holds in every dimension.
        (ExperimentKind::Linear, DensityKind::Constant) => Some(-(cfg.graph.dim as f64) / 2.0),
        (ExperimentKind::Linear, _) => None,
        _ => decay_exponents(cfg.graph.dim, p, cfg.alpha()).ok().map(|e| -e.rate),
    };
    let toolkit = if cfg.experiment == ExperimentKind::Decay { cfg.toolkit().ok() } else { None };

    let mut out = OutputDir::create(out_dir)?;
    let mut outcome = Outcome::Pass;
    for (trace, path) in traces.iter().zip(paths) {
        let mut rep =
            DecayReport::from_trace(trace, frac, theory).map_err(|e| anyhow!("trace {}: {e}", path.display()))?;
        if let Some(tk) = &toolkit {
            let window = late_window(trace, frac)?;
            let first = trace.initial().ok_or_else(|| anyhow!("trace {} is empty", path.display()))?;
            rep.q = theorem11_statistic(trace, tk, first.mass, window.clone()).ok();
            if cfg.density.family == DensityKind::PowerLog {
                rep.log_fit = log_corrected_fit(trace, tk, first.linf, window).ok();
            }
        }
        rep.universal = universal.clone();

        let mut failures = Vec::new();
        if rep.exponent_within(tol) == Some(false) {
            failures.push(format!("exponent {:.4} vs theory {:.4}", rep.fit.exponent, rep.theory.unwrap_or(f64::NAN)));
        }
        if let Some(l) = &rep.log_fit {
            if l.deviation() > tol {
                failures.push(format!("log-corrected exponent {:.4} vs theory {:.4}", l.fit.exponent, l.theory));
            }
        }
        if let (Some(q), Some(budget)) = (&rep.q, cfg.analysis.q_ratio_budget) {
            if !(q.ratio <= budget) {
                failures.push(format!("Q max/min {:.4} above budget {budget}", q.ratio));
            }
        }
        if let Some(u) = &rep.universal {
            if !(u.worst_spread <= cfg.analysis.spread_budget) {
                failures.push(format!(
                    "universal spread {:.4} above budget {}",
                    u.worst_spread, cfg.analysis.spread_budget
                ));
            }
        }

        let stem = report_stem(path);
        out.write(&format!("decay_{stem}.csv"), &rep.to_csv())?;
        let mut text = rep.text_block();
        let verdict = if failures.is_empty() {
            "verdict: PASS".to_string()
        } else {
            format!("verdict: FAIL ({})", failures.join("; "))
        };
        let _ = writeln!(text, "{verdict}");
        out.write(&format!("decay_{stem}.txt"), &text)?;
        println!("{}: {verdict}", path.display());
        if !failures.is_empty() {
            outcome = Outcome::Fail;
        } else if trace.tainted && outcome == Outcome::Pass {
            log::warn!("trace {} is boundary tainted", path.display());
            outcome = Outcome::Warn;
        }
    }
    if let Some(u) = &universal {
        let mut csv = String::from("t,spread\n");
        for (t, s) in u.times.iter().zip(&u.spread_series) {
            let _ = writeln!(csv, "{t:.16e},{s:.16e}");
        }
        out.write("universal.csv", &csv)?;
        println!("universal spread: worst {:.4}, final {:.4}", u.worst_spread, u.final_spread);
    }
    out.write("resolved_analyze.toml", &cfg.to_toml())?;
    out.finish()?;
    Ok(outcome)
}

pub fn cmd_graph_dump(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<Outcome> {
    let g = cfg.graph()?;
    match out_dir {
        Some(dir) => {
            let mut out = OutputDir::create(dir)?;
            out.write("graph.txt", &g.dump_string())?;
            out.finish()?;
        }
        None => print!("{}", g.dump_string()),
    }
    Ok(Outcome::Pass)
}
