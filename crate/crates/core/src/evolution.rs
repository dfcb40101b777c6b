//! Explicit integration of `ρ(x) ∂ₜu = Δₚu` on a truncated ball.
//!
//! The driver takes adaptive forward-Euler steps, lands exactly on a
//! log-spaced snapshot schedule and records the monitored functionals there.

use std::fmt::Write as _;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::density::DensityProfile;
use crate::error::{invalid, Error, Result};
use crate::graph::WeightedGraph;
use crate::operator::{
    boundary_outflow, dirichlet_energy_unchecked, laplacian_and_stiffness, linf, weighted_norm_with, FieldState, Flux,
};
use crate::scalar::Real;

pub const CSV_MAGIC: &str = "# plap-flow v1";
pub const CSV_COLUMNS: &str = "t,dt,linf,mass,E2,Dp,boundary_max";

/// Floor on `|u(y) - u(x)|` inside the stability estimate.
const DELTA_FLOOR: f64 = 1e-12;
/// Values below `-NEG_TOL` after a step signal instability.
const NEG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtPolicy<T> {
    Adaptive,
    Fixed(T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig<T> {
    pub p: T,
    pub horizon: T,
    pub dt_policy: DtPolicy<T>,
    /// Safety factor on the stability estimate, in `(0, 1]`.
    pub theta: T,
    /// Number of log-spaced snapshots in `[T/1000, T]`.
    pub snapshots: usize,
    /// Taint threshold relative to `‖u₀‖_∞`.
    pub leak_threshold: T,
    /// Permits `p = 2` (heat-equation validation runs).
    pub linear_mode: bool,
    /// Records `E_{1+ν}` at each snapshot.
    pub moment_nu: Option<T>,
    /// Keeps the field at each snapshot.
    pub keep_fields: bool,
}

impl<T: Real> EvolutionConfig<T> {
    pub fn new(p: T, horizon: T) -> Self {
        Self {
            p,
            horizon,
            dt_policy: DtPolicy::Adaptive,
            theta: T::lit(0.5),
            snapshots: 200,
            leak_threshold: T::lit(1e-8),
            linear_mode: false,
            moment_nu: None,
            keep_fields: false,
        }
    }

    pub fn linear(horizon: T) -> Self {
        Self { linear_mode: true, ..Self::new(T::lit(2.0), horizon) }
    }

    pub fn validate(&self) -> Result<()> {
        let two = T::lit(2.0);
        if !(self.p > two || (self.p == two && self.linear_mode)) {
            return Err(invalid(format!("flow needs p > 2 (p = 2 only in linear mode), got p = {}", self.p)));
        }
        if !(self.horizon > T::zero()) || !self.horizon.is_finite() {
            return Err(invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.theta > T::zero() && self.theta <= T::one()) {
            return Err(invalid(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if self.snapshots < 2 {
            return Err(invalid(format!("need at least 2 snapshots, got {}", self.snapshots)));
        }
        if !(self.leak_threshold >= T::zero()) {
            return Err(invalid("leak threshold must be nonnegative"));
        }
        if let DtPolicy::Fixed(dt) = self.dt_policy {
            if !(dt > T::zero()) || !dt.is_finite() {
                return Err(invalid(format!("fixed dt must be positive, got {dt}")));
            }
        }
        if let Some(nu) = self.moment_nu {
            if !(nu > T::zero()) {
                return Err(invalid(format!("moment exponent nu must be positive, got {nu}")));
            }
        }
        Ok(())
    }

    pub fn dt_cap(&self) -> T {
        self.horizon / T::lit(1000.0)
    }

    fn echo(&self) -> Vec<(String, String)> {
        let policy = match self.dt_policy {
            DtPolicy::Adaptive => "adaptive".to_string(),
            DtPolicy::Fixed(dt) => format!("fixed({})", dt.as_f64()),
        };
        let mut out = vec![
            ("p".to_string(), self.p.as_f64().to_string()),
            ("horizon".to_string(), self.horizon.as_f64().to_string()),
            ("dt_policy".to_string(), policy),
            ("theta".to_string(), self.theta.as_f64().to_string()),
            ("snapshots".to_string(), self.snapshots.to_string()),
            ("leak_threshold".to_string(), self.leak_threshold.as_f64().to_string()),
            ("linear_mode".to_string(), self.linear_mode.to_string()),
        ];
        if let Some(nu) = self.moment_nu {
            out.push(("nu".to_string(), nu.as_f64().to_string()));
        }
        out
    }
}

/// `k` log-spaced times from `T/1000` to `T`, the last exactly `T`.
pub fn snapshot_times<T: Real>(horizon: T, k: usize) -> Vec<T> {
    let lo = (horizon / T::lit(1000.0)).ln();
    let hi = horizon.ln();
    let steps = T::from_usize_lossy(k.saturating_sub(1).max(1));
    let mut times: Vec<T> = (0..k).map(|i| (lo + (hi - lo) * T::from_usize_lossy(i) / steps).exp()).collect();
    if let Some(last) = times.last_mut() {
        *last = horizon;
    }
    times
}

fn dt_from_stiffness<T: Real>(g: &WeightedGraph<T>, rho: &[T], stiff: &[T], p: T, theta: T, cap: T) -> T {
    let pm1 = p - T::one();
    let mut dt = cap;
    for x in 0..g.len() {
        let k = pm1 * stiff[x];
        if k > T::zero() {
            dt = dt.min(theta * rho[x] * g.degree(x) / k);
        }
    }
    dt
}

/// `θ · min_x ρ(d(x)) m(x) / ((p-1) Σ_y w(x,y) max(|u(y)-u(x)|, 1e-12)^{p-2})`,
/// capped at `cap`; exterior edges count with `u = 0`.
pub fn stable_dt<T: Real>(
    g: &WeightedGraph<T>,
    profile: &DensityProfile<T>,
    u: &[T],
    p: T,
    theta: T,
    cap: T,
) -> Result<T> {
    if u.len() != g.len() {
        return Err(invalid("field length does not match graph"));
    }
    if !(p >= T::lit(2.0)) {
        return Err(invalid(format!("stable_dt needs p >= 2, got {p}")));
    }
    let rho = profile.vertex_values(g);
    let n = g.len();
    let (mut lap, mut stiff) = (vec![T::zero(); n], vec![T::zero(); n]);
    laplacian_and_stiffness(g, u, Flux::new(p), T::lit(DELTA_FLOOR), &mut lap, &mut stiff);
    Ok(dt_from_stiffness(g, &rho, &stiff, p, theta, cap))
}

fn apply_step<T: Real>(u: &[T], lap: &[T], rho: &[T], dt: T, t: T, out: &mut [T]) -> Result<()> {
    out.par_iter_mut().with_min_len(512).enumerate().for_each(|(x, o)| *o = u[x] + dt * lap[x] / rho[x]);
    let neg = T::lit(-NEG_TOL);
    if let Some(x) = out.iter().position(|v| !v.is_finite() || *v < neg) {
        return Err(Error::UnstableStep {
            t: t.as_f64(),
            reason: format!("u = {:e} at vertex {x} after dt = {:e}", out[x].as_f64(), dt.as_f64()),
        });
    }
    Ok(())
}

/// One forward-Euler step `u' = u + dt Δₚu / ρ`.
pub fn step_explicit<T: Real>(
    g: &WeightedGraph<T>,
    profile: &DensityProfile<T>,
    state: &FieldState<T>,
    p: T,
    dt: T,
) -> Result<FieldState<T>> {
    if !(dt > T::zero()) {
        return Err(invalid(format!("dt must be positive, got {dt}")));
    }
    let lap = crate::operator::p_laplacian(g, &state.u, p)?;
    let rho = profile.vertex_values(g);
    let mut out = vec![T::zero(); g.len()];
    apply_step(&state.u, &lap, &rho, dt, state.t, &mut out)?;
    Ok(FieldState { u: out, t: state.t + dt })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord<T> {
    pub t: T,
    /// Size of the step that landed on this snapshot (`0` for the initial record).
    pub dt: T,
    pub linf: T,
    pub mass: T,
    pub e2: T,
    pub dp: T,
    /// Max of `u` on the outermost distance shell.
    pub boundary_max: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace<T> {
    pub records: Vec<TraceRecord<T>>,
    /// `Σ ρ uₜ² m` at each record (empty when read from CSV).
    pub dissipation: Vec<T>,
    /// Mass lost through exterior edges up to each record.
    pub outflow: Vec<T>,
    /// `E_{1+ν}` at each record, when requested.
    pub moment: Option<(T, Vec<T>)>,
    pub fields: Vec<Vec<T>>,
    pub tainted: bool,
    pub steps: usize,
    /// Ordered `key = value` provenance lines.
    pub meta: Vec<(String, String)>,
}

impl<T: Real> FlowTrace<T> {
    pub fn meta_get(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn times(&self) -> Vec<T> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn linf_series(&self) -> Vec<T> {
        self.records.iter().map(|r| r.linf).collect()
    }

    pub fn initial(&self) -> Option<&TraceRecord<T>> {
        self.records.first()
    }

    pub fn max_relative_mass_drift(&self) -> T {
        let m0 = match self.records.first() {
            Some(r) if r.mass > T::zero() => r.mass,
            _ => return T::zero(),
        };
        self.records.iter().map(|r| ((r.mass - m0) / m0).abs()).fold(T::zero(), T::max)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        out.write_all(self.csv_string().as_bytes())
    }

    pub fn csv_string(&self) -> String {
        let mut s = String::new();
        s.push_str(CSV_MAGIC);
        s.push('\n');
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k} = {v}");
        }
        s.push_str(CSV_COLUMNS);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.t.as_f64(),
                r.dt.as_f64(),
                r.linf.as_f64(),
                r.mass.as_f64(),
                r.e2.as_f64(),
                r.dp.as_f64(),
                r.boundary_max.as_f64()
            );
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim_end() == CSV_MAGIC => {}
            Some((_, l)) => {
                return Err(Error::Parse { line: 1, message: format!("expected `{CSV_MAGIC}`, found `{l}`") })
            }
            None => return Err(Error::Parse { line: 1, message: "empty trace file".into() }),
        }
        let mut meta = Vec::new();
        let mut header_seen = false;
        let mut records = Vec::new();
        for (i, raw) in lines {
            let line = raw.trim_end();
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            if !header_seen {
                if let Some(rest) = line.strip_prefix('#') {
                    let (k, v) = rest.split_once('=').ok_or_else(|| Error::Parse {
                        line: lineno,
                        message: "comment without `key = value`".into(),
                    })?;
                    meta.push((k.trim().to_string(), v.trim().to_string()));
                    continue;
                }
                if line != CSV_COLUMNS {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("expected column header `{CSV_COLUMNS}`"),
                    });
                }
                header_seen = true;
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
            if vals.len() != 7 {
                return Err(Error::Parse { line: lineno, message: format!("expected 7 fields, found {}", vals.len()) });
            }
            records.push(TraceRecord {
                t: T::lit(vals[0]),
                dt: T::lit(vals[1]),
                linf: T::lit(vals[2]),
                mass: T::lit(vals[3]),
                e2: T::lit(vals[4]),
                dp: T::lit(vals[5]),
                boundary_max: T::lit(vals[6]),
            });
        }
        if !header_seen {
            return Err(Error::Parse { line: text.lines().count(), message: "missing column header".into() });
        }
        let mut trace = FlowTrace {
            records,
            dissipation: Vec::new(),
            outflow: Vec::new(),
            moment: None,
            fields: Vec::new(),
            tainted: false,
            steps: 0,
            meta,
        };
        trace.tainted = trace.meta_get("tainted") == Some("true");
        trace.steps = trace.meta_get("steps").and_then(|s| s.parse().ok()).unwrap_or(0);
        Ok(trace)
    }
}

struct Monitor<'a, T> {
    g: &'a WeightedGraph<T>,
    rho: &'a [T],
    p: T,
    nu: Option<T>,
    keep: bool,
}

impl<T: Real> Monitor<'_, T> {
    fn record(&self, u: &[T], lap: &[T], t: T, dt: T, trace: &mut FlowTrace<T>, outflow: T) {
        let g = self.g;
        let shell = g.shell(g.radius());
        let boundary_max = u[shell].iter().fold(T::zero(), |m, v| m.max(*v));
        trace.records.push(TraceRecord {
            t,
            dt,
            linf: linf(u),
            mass: weighted_norm_with(g, self.rho, u, T::one()),
            e2: weighted_norm_with(g, self.rho, u, T::lit(2.0)),
            dp: dirichlet_energy_unchecked(g, u, self.p),
            boundary_max,
        });
        let diss = lap.iter().zip(self.rho).zip(g.degrees()).map(|((&l, &r), &m)| l * l * m / r).sum();
        trace.dissipation.push(diss);
        trace.outflow.push(outflow);
        if let (Some(nu), Some((_, series))) = (self.nu, trace.moment.as_mut()) {
            series.push(weighted_norm_with(g, self.rho, u, T::one() + nu));
        }
        if self.keep {
            trace.fields.push(u.to_vec());
        }
    }
}

/// Integrates from `u₀` to the configured horizon.
pub fn evolve<T: Real>(
    g: &WeightedGraph<T>,
    profile: &DensityProfile<T>,
    u0: &[T],
    config: &EvolutionConfig<T>,
) -> Result<FlowTrace<T>> {
    config.validate()?;
    if u0.len() != g.len() {
        return Err(invalid(format!("initial field has {} values, graph has {} vertices", u0.len(), g.len())));
    }
    if let Some(x) = u0.iter().position(|v| !v.is_finite() || *v < T::zero()) {
        return Err(invalid(format!("initial field must be finite and nonnegative (vertex {x})")));
    }
    if let Some(x) = (0..g.len()).find(|&x| !(g.degree(x) > T::zero())) {
        return Err(Error::DegenerateDegree(x));
    }

    let n = g.len();
    let p = config.p;
    let flux = Flux::new(p);
    let floor = T::lit(DELTA_FLOOR);
    let cap = config.dt_cap();
    let rho = profile.vertex_values(g);
    let monitor = Monitor { g, rho: &rho, p, nu: config.moment_nu, keep: config.keep_fields };

    let mut meta = config.echo();
    meta.push(("graph".into(), format!("Z^{} ball R={} vertices={}", g.dim(), g.radius(), g.len())));
    meta.push(("density".into(), profile.describe()));

    let mut trace = FlowTrace {
        records: Vec::with_capacity(config.snapshots + 1),
        dissipation: Vec::new(),
        outflow: Vec::new(),
        moment: config.moment_nu.map(|nu| (nu, Vec::new())),
        fields: Vec::new(),
        tainted: false,
        steps: 0,
        meta,
    };

    let u0_max = linf(u0);
    let leak = config.leak_threshold * u0_max;
    let shell = g.shell(g.radius());

    let mut u = u0.to_vec();
    let mut next = vec![T::zero(); n];
    let mut lap = vec![T::zero(); n];
    let mut stiff = vec![T::zero(); n];
    laplacian_and_stiffness(g, &u, flux, floor, &mut lap, &mut stiff);

    let mut t = T::zero();
    let mut outflow = T::zero();
    let mut last_dt = T::zero();
    monitor.record(&u, &lap, t, last_dt, &mut trace, outflow);
    if u[shell.clone()].iter().any(|v| *v > leak) && u0_max > T::zero() {
        trace.tainted = true;
    }

    let land_tol = T::lit(1e-12);
    for target in snapshot_times(config.horizon, config.snapshots) {
        while t < target {
            let proposal = match config.dt_policy {
                DtPolicy::Adaptive => dt_from_stiffness(g, &rho, &stiff, p, config.theta, cap),
                DtPolicy::Fixed(dt) => dt,
            };
            let remaining = target - t;
            let landing = proposal >= remaining * (T::one() - land_tol);
            let dt = if landing { remaining } else { proposal };
            apply_step(&u, &lap, &rho, dt, t, &mut next)?;
            outflow = outflow + dt * boundary_outflow(g, &u, p);
            std::mem::swap(&mut u, &mut next);
            t = if landing { target } else { t + dt };
            last_dt = dt;
            trace.steps += 1;
            laplacian_and_stiffness(g, &u, flux, floor, &mut lap, &mut stiff);
            if !trace.tainted && u[shell.clone()].iter().any(|v| *v > leak) {
                trace.tainted = true;
                log::warn!("boundary shell exceeded leak threshold at t = {:e}", t.as_f64());
            }
        }
        monitor.record(&u, &lap, t, last_dt, &mut trace, outflow);
    }
    trace.set_meta("steps", trace.steps.to_string());
    trace.set_meta("tainted", trace.tainted.to_string());
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipationReport<T> {
    /// `(t, relative residual)` of `Σρuₜ²m + (1/(2p)) dD_p/dt` at interior snapshots.
    pub identity_rows: Vec<(T, T)>,
    pub max_residual: T,
    /// `(t, D_p(t) t / (2 ‖u₀‖_∞ M(0)))` at positive snapshots.
    pub bound_rows: Vec<(T, T)>,
    pub max_bound_ratio: T,
    /// Largest `D_p(t₂)/D_p(t₁) - 1` over consecutive snapshots.
    pub worst_energy_increase: T,
    pub identity_ok: bool,
    pub bound_ok: bool,
    pub monotone_ok: bool,
}

impl<T: Real> DissipationReport<T> {
    pub fn ok(&self) -> bool {
        self.identity_ok && self.bound_ok && self.monotone_ok
    }
}

/// Checks the energy identity by central differences of `D_p` over snapshot
/// triples, the bound `D_p(t) t ≤ 2 ‖u₀‖_∞ M(0)`, and monotonicity of `D_p`
/// (relative slack `1e-8`).
pub fn check_dissipation<T: Real>(trace: &FlowTrace<T>, p: T, tolerance: T) -> Result<DissipationReport<T>> {
    let recs = &trace.records;
    if recs.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 snapshots, trace has {}", recs.len())));
    }
    if trace.dissipation.len() != recs.len() {
        return Err(Error::InsufficientData("trace carries no dissipation series".into()));
    }
    let two_p = T::lit(2.0) * p;
    let mut identity_rows = Vec::new();
    let mut max_residual = T::zero();
    // interior snapshots whose neighbours are all at positive time
    for i in 2..recs.len() - 1 {
        let (t0, t1, t2) = (recs[i - 1].t, recs[i].t, recs[i + 1].t);
        let (h1, h2) = (t1 - t0, t2 - t1);
        if !(h1 > T::zero() && h2 > T::zero()) {
            continue;
        }
        let d_dt = -h2 / (h1 * (h1 + h2)) * recs[i - 1].dp
            + (h2 - h1) / (h1 * h2) * recs[i].dp
            + h1 / (h2 * (h1 + h2)) * recs[i + 1].dp;
        let s = trace.dissipation[i];
        let rate = d_dt / two_p;
        let scale = s.abs().max(rate.abs());
        let residual = if scale > T::zero() { (s + rate).abs() / scale } else { T::zero() };
        max_residual = max_residual.max(residual);
        identity_rows.push((t1, residual));
    }

    let (u0_max, m0) = (recs[0].linf, recs[0].mass);
    let denom = T::lit(2.0) * u0_max * m0;
    let mut bound_rows = Vec::new();
    let mut max_bound_ratio = T::zero();
    for r in recs.iter().filter(|r| r.t > T::zero()) {
        let ratio = if denom > T::zero() { r.dp * r.t / denom } else { T::zero() };
        max_bound_ratio = max_bound_ratio.max(ratio);
        bound_rows.push((r.t, ratio));
    }

    let mut worst_energy_increase = T::zero();
    let mut monotone_ok = true;
    for w in recs.windows(2) {
        if w[1].dp > w[0].dp * (T::one() + T::lit(1e-8)) {
            monotone_ok = false;
        }
        if w[0].dp > T::zero() {
            worst_energy_increase = worst_energy_increase.max(w[1].dp / w[0].dp - T::one());
        }
    }

    Ok(DissipationReport {
        identity_ok: max_residual <= tolerance,
        bound_ok: max_bound_ratio <= T::one(),
        monotone_ok,
        identity_rows,
        max_residual,
        bound_rows,
        max_bound_ratio,
        worst_energy_increase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_lattice_ball, WeightScheme};
    use crate::operator::weighted_norm;

    fn unit(dim: usize, r: usize) -> WeightedGraph<f64> {
        build_lattice_ball(dim, r, &WeightScheme::Unit).unwrap()
    }

    fn delta(g: &WeightedGraph<f64>) -> Vec<f64> {
        let mut u = vec![0.0; g.len()];
        u[g.origin()] = 1.0;
        u
    }

    #[test]
    fn snapshot_schedule() {
        let ts = snapshot_times(100.0f64, 7);
        assert_eq!(ts.len(), 7);
        assert!((ts[0] - 0.1).abs() < 1e-12);
        assert_eq!(*ts.last().unwrap(), 100.0);
        assert!((ts[1] / ts[0] - 10f64.powf(0.5)).abs() < 1e-9);
    }

    #[test]
    fn stable_dt_examples() {
        let g = unit(1, 3);
        let c = DensityProfile::constant();
        let dt = stable_dt(&g, &c, &delta(&g), 3.0, 0.5, 10.0).unwrap();
        assert!((dt - 0.25).abs() < 1e-15);
        assert_eq!(stable_dt(&g, &c, &vec![0.0; g.len()], 3.0, 0.5, 0.01).unwrap(), 0.01);
        let twice: Vec<f64> = delta(&g).iter().map(|v| 2.0 * v).collect();
        assert!((stable_dt(&g, &c, &twice, 3.0, 0.5, 10.0).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn single_linear_step() {
        let g = unit(1, 3);
        let c = DensityProfile::constant();
        let s = step_explicit(&g, &c, &FieldState::new(delta(&g)), 2.0, 0.1).unwrap();
        assert!((s.u[0] - 0.9).abs() < 1e-15);
        assert!((s.u[g.index_of(&[1]).unwrap()] - 0.05).abs() < 1e-15);
        assert!((s.u[g.index_of(&[-1]).unwrap()] - 0.05).abs() < 1e-15);
        assert!((s.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_step_and_interior_mass() {
        let g = unit(2, 6);
        let c = DensityProfile::constant();
        let flat = FieldState::new(vec![0.0; g.len()]);
        assert_eq!(step_explicit(&g, &c, &flat, 2.5, 0.1).unwrap().u, flat.u);

        let mut u = vec![0.0; g.len()];
        for x in g.ball_range(2) {
            u[x] = 1.0 + (x % 3) as f64;
        }
        let before = weighted_norm(&g, &c, &u, 1.0).unwrap();
        let s = step_explicit(&g, &c, &FieldState::new(u), 2.5, 0.05).unwrap();
        let after = weighted_norm(&g, &c, &s.u, 1.0).unwrap();
        assert!((before - after).abs() < 1e-12 * before);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let g = unit(1, 3);
        let c = DensityProfile::constant();
        let err = step_explicit(&g, &c, &FieldState::new(delta(&g)), 3.0, 5.0).unwrap_err();
        assert!(matches!(err, Error::UnstableStep { .. }));
    }

    #[test]
    fn config_validation() {
        assert!(EvolutionConfig::new(2.0f64, 1.0).validate().is_err());
        assert!(EvolutionConfig::linear(1.0f64).validate().is_ok());
        assert!(EvolutionConfig::new(2.5f64, 0.0).validate().is_err());
        let mut c = EvolutionConfig::new(2.5f64, 1.0);
        c.theta = 1.5;
        assert!(c.validate().is_err());
        c.theta = 0.5;
        c.snapshots = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_initial_data() {
        let g = unit(2, 4);
        let cfg = EvolutionConfig::new(2.5, 1.0);
        let tr = evolve(&g, &DensityProfile::constant(), &vec![0.0; g.len()], &cfg).unwrap();
        assert_eq!(tr.records.len(), 201);
        for r in &tr.records {
            assert_eq!((r.linf, r.mass, r.e2, r.dp), (0.0, 0.0, 0.0, 0.0));
        }
        assert!(!tr.tainted);
    }

    #[test]
    fn flow_invariants_small_run() {
        let g = unit(2, 10);
        let prof = DensityProfile::power(1.0).unwrap();
        let mut cfg = EvolutionConfig::new(3.0, 20.0);
        cfg.snapshots = 40;
        cfg.moment_nu = Some(1.5);
        let tr = evolve(&g, &prof, &delta(&g), &cfg).unwrap();
        assert!(!tr.tainted);
        let ts = tr.times();
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        assert!(tr.records.windows(2).all(|w| w[1].linf <= w[0].linf * (1.0 + 1e-12)));
        assert!(tr.max_relative_mass_drift() < 1e-9);
        let rep = check_dissipation(&tr, 3.0, 0.05).unwrap();
        assert!(rep.monotone_ok && rep.bound_ok, "{rep:?}");
        assert_eq!(tr.moment.as_ref().unwrap().1.len(), tr.records.len());
    }

    #[test]
    fn mass_loss_matches_outflow() {
        let g = unit(1, 6);
        let mut cfg = EvolutionConfig::linear(30.0);
        cfg.snapshots = 20;
        let c = DensityProfile::constant();
        let tr = evolve(&g, &c, &delta(&g), &cfg).unwrap();
        assert!(tr.tainted);
        let m0 = tr.records[0].mass;
        for (r, out) in tr.records.iter().zip(&tr.outflow) {
            assert!((m0 - r.mass - out).abs() < 1e-12, "{} vs {}", m0 - r.mass, out);
        }
    }

    #[test]
    fn linear_dissipation_identity_refines() {
        let g = unit(1, 30);
        let c = DensityProfile::constant();
        let run = |dt: f64, snapshots: usize| {
            let mut cfg = EvolutionConfig::linear(5.0);
            cfg.dt_policy = DtPolicy::Fixed(dt);
            cfg.snapshots = snapshots;
            check_dissipation(&evolve(&g, &c, &delta(&g), &cfg).unwrap(), 2.0, 1.0).unwrap().max_residual
        };
        let coarse = run(0.02, 200);
        let fine = run(0.002, 400);
        let finest = run(0.0005, 800);
        assert!(fine < coarse && finest < fine);
        assert!(finest < 1e-3, "{finest}");
    }

    #[test]
    fn csv_round_trip() {
        let g = unit(1, 4);
        let mut cfg = EvolutionConfig::new(2.5, 2.0);
        cfg.snapshots = 5;
        let tr = evolve(&g, &DensityProfile::constant(), &delta(&g), &cfg).unwrap();
        let text = tr.csv_string();
        assert!(text.starts_with("# plap-flow v1\n"));
        assert!(text.contains("\nt,dt,linf,mass,E2,Dp,boundary_max\n"));
        let back = FlowTrace::<f64>::parse_csv(&text).unwrap();
        assert_eq!(back.records, tr.records);
        assert_eq!(back.meta, tr.meta);
        assert_eq!(back.tainted, tr.tainted);
        assert!(FlowTrace::<f64>::parse_csv("# plap-flow v2\n").is_err());
        let bad = text.replacen("0.0000000000000000e0", "zero", 1);
        assert!(matches!(FlowTrace::<f64>::parse_csv(&bad), Err(Error::Parse { .. })));
    }
}
