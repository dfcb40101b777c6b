//! Decay-law statistics computed from flow traces.

use std::fmt::Write as _;
use std::ops::Range;

use crate::density::DensityFamily;
use crate::error::{invalid, Error, Result};
use crate::evolution::FlowTrace;
use crate::scalar::Real;
use crate::scaling::{decay_exponents, ScalingToolkit};

/// Minimum number of snapshots in a fit window.
pub const MIN_WINDOW: usize = 10;
/// Default late-window fraction of the positive-time snapshots.
pub const LATE_FRACTION: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit<T> {
    /// Slope of `ln y` against `ln t`.
    pub exponent: T,
    pub stderr: T,
    pub intercept: T,
    pub points: usize,
    pub t_lo: T,
    pub t_hi: T,
}

/// Ordinary least squares of `ln y` on `ln t`.
pub fn fit_power_law<T: Real>(t: &[T], y: &[T]) -> Result<PowerFit<T>> {
    if t.len() != y.len() {
        return Err(invalid("time and value series differ in length"));
    }
    if t.len() < MIN_WINDOW {
        return Err(Error::InsufficientData(format!("fit window has {} points, need {MIN_WINDOW}", t.len())));
    }
    if let Some(i) = (0..t.len()).find(|&i| !(t[i] > T::zero() && y[i] > T::zero())) {
        return Err(invalid(format!("fit needs positive t and y (point {i})")));
    }
    let xs: Vec<T> = t.iter().map(|v| v.ln()).collect();
    let ys: Vec<T> = y.iter().map(|v| v.ln()).collect();
    let (slope, intercept, stderr) = ols(&xs, &ys);
    Ok(PowerFit { exponent: slope, stderr, intercept, points: t.len(), t_lo: t[0], t_hi: t[t.len() - 1] })
}

fn ols<T: Real>(xs: &[T], ys: &[T]) -> (T, T, T) {
    let n = T::from_usize_lossy(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let sxy: T = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: T = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let dof = n - T::lit(2.0);
    let stderr = if dof > T::zero() && sxx > T::zero() { (sse / dof / sxx).sqrt() } else { T::zero() };
    (slope, intercept, stderr)
}

/// Record indices of the last `fraction` of the positive-time snapshots.
pub fn late_window<T: Real>(trace: &FlowTrace<T>, fraction: T) -> Result<Range<usize>> {
    if !(fraction > T::zero() && fraction <= T::one()) {
        return Err(invalid(format!("window fraction must lie in (0, 1], got {fraction}")));
    }
    let first = trace.records.iter().position(|r| r.t > T::zero()).unwrap_or(trace.records.len());
    let positive = trace.records.len() - first;
    let take = (T::from_usize_lossy(positive) * fraction).round().to_usize().unwrap_or(0);
    if take < MIN_WINDOW {
        return Err(Error::InsufficientData(format!("late window has {take} snapshots, need {MIN_WINDOW}")));
    }
    let end = trace.records.len();
    Ok(end - take..end)
}

/// Fits `‖u(t)‖_∞` over the given record range.
pub fn fit_trace<T: Real>(trace: &FlowTrace<T>, window: Range<usize>) -> Result<PowerFit<T>> {
    let recs = trace
        .records
        .get(window.clone())
        .ok_or_else(|| invalid(format!("window {window:?} outside trace of {} records", trace.records.len())))?;
    let t: Vec<T> = recs.iter().map(|r| r.t).collect();
    let y: Vec<T> = recs.iter().map(|r| r.linf).collect();
    fit_power_law(&t, &y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QReport<T> {
    /// `(t, Q(t))` for snapshots where `ω⁻¹` is defined.
    pub series: Vec<(T, T)>,
    pub min: T,
    pub max: T,
    pub last: T,
    pub ratio: T,
    /// Slope of `ln Q` against `ln t` over the final decade of the window.
    pub last_decade_slope: T,
    pub skipped: usize,
}

/// `Q(t) = ω⁻¹(‖u‖^{p-2} t)^{N-p} ‖u‖^{p-1} t M(0)` over the window; snapshots
/// where the inverse is undefined (including `‖u‖ = 0`) are skipped.
pub fn theorem11_statistic<T: Real>(
    trace: &FlowTrace<T>,
    toolkit: &ScalingToolkit<T>,
    m0: T,
    window: Range<usize>,
) -> Result<QReport<T>> {
    if !(m0 > T::zero()) {
        return Err(invalid(format!("M(0) must be positive, got {m0}")));
    }
    let recs = trace.records.get(window.clone()).ok_or_else(|| invalid(format!("window {window:?} outside trace")))?;
    let p = toolkit.p();
    let n_minus_p = T::from_usize_lossy(toolkit.dim()) - p;
    let mut series = Vec::new();
    let mut skipped = 0;
    for r in recs {
        if !(r.linf > T::zero() && r.t > T::zero()) {
            skipped += 1;
            continue;
        }
        match toolkit.omega_inv(r.linf.powf(p - T::lit(2.0)) * r.t) {
            Ok(s) => series.push((r.t, s.powf(n_minus_p) * r.linf.powf(p - T::one()) * r.t * m0)),
            Err(_) => skipped += 1,
        }
    }
    if series.len() < 2 {
        return Err(Error::InsufficientData(format!("Q defined at {} snapshots", series.len())));
    }
    let min = series.iter().map(|s| s.1).fold(T::infinity(), T::min);
    let max = series.iter().map(|s| s.1).fold(T::neg_infinity(), T::max);
    let last = series[series.len() - 1].1;
    let t_end = series[series.len() - 1].0;
    let tail: Vec<&(T, T)> = series.iter().filter(|s| s.0 >= t_end / T::lit(10.0)).collect();
    let last_decade_slope = if tail.len() >= 2 {
        let xs: Vec<T> = tail.iter().map(|s| s.0.ln()).collect();
        let ys: Vec<T> = tail.iter().map(|s| s.1.ln()).collect();
        ols(&xs, &ys).0
    } else {
        T::nan()
    };
    Ok(QReport { series, min, max, last, ratio: max / min, last_decade_slope, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogFitReport<T> {
    pub fit: PowerFit<T>,
    /// `β(N-p)/H`, the power of `ln(t ‖u₀‖^{p-2})` removed before fitting.
    pub log_power: T,
    /// `-(N-α)/H`.
    pub theory: T,
    pub skipped: usize,
}

impl<T: Real> LogFitReport<T> {
    pub fn deviation(&self) -> T {
        (self.fit.exponent - self.theory).abs()
    }
}

/// Fits `ln‖u‖_∞ - (β(N-p)/H) ln ln(t ‖u₀‖^{p-2})` against `ln t` for a
/// `power_log(α, β)` density. Snapshots with `t ‖u₀‖^{p-2} ≤ 1` are skipped.
pub fn log_corrected_fit<T: Real>(
    trace: &FlowTrace<T>,
    toolkit: &ScalingToolkit<T>,
    u0_max: T,
    window: Range<usize>,
) -> Result<LogFitReport<T>> {
    let (alpha, beta) = match toolkit.profile().family() {
        DensityFamily::PowerLog { alpha, beta } => (*alpha, *beta),
        other => return Err(invalid(format!("log-corrected fit needs a power_log density, got {other:?}"))),
    };
    let p = toolkit.p();
    let dim = toolkit.dim();
    let ex = decay_exponents(dim, p, alpha)?;
    let log_power = beta * (T::from_usize_lossy(dim) - p) / ex.h;
    let scale = u0_max.powf(p - T::lit(2.0));
    let recs = trace.records.get(window.clone()).ok_or_else(|| invalid(format!("window {window:?} outside trace")))?;
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    let mut skipped = 0;
    for r in recs {
        let arg = r.t * scale;
        if !(arg > T::one() && r.linf > T::zero()) {
            skipped += 1;
            continue;
        }
        ts.push(r.t);
        ys.push((r.linf.ln() - log_power * arg.ln().ln()).exp());
    }
    let fit = fit_power_law(&ts, &ys)?;
    Ok(LogFitReport { fit, log_power, theory: -ex.rate, skipped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniversalReport<T> {
    pub times: Vec<T>,
    /// `t^{1/(p-2)} ‖u_i(t)‖_∞` per trace (empty for `p = 2`).
    pub s_series: Vec<Vec<T>>,
    /// `t^{(1+ν)/(p-2)} E_{1+ν}(t)` per trace, when every trace carries the moment.
    pub i_series: Option<Vec<Vec<T>>>,
    /// `max_i ‖u_i(t)‖ / min_i ‖u_i(t)‖` at each window time.
    pub spread_series: Vec<T>,
    pub worst_spread: T,
    pub final_spread: T,
    pub moment_spread: Option<T>,
}

fn spread<T: Real>(vals: impl Iterator<Item = T> + Clone) -> T {
    let hi = vals.clone().fold(T::neg_infinity(), T::max);
    let lo = vals.fold(T::infinity(), T::min);
    if lo > T::zero() {
        hi / lo
    } else {
        T::infinity()
    }
}

/// Across-trace spread of the universal statistic over the late window.
/// Traces must share the time grid and the `p`, `graph` and `density` echo.
pub fn universal_bound_statistic<T: Real>(traces: &[&FlowTrace<T>], p: T, fraction: T) -> Result<UniversalReport<T>> {
    if traces.len() < 2 {
        return Err(invalid("universal-bound statistic needs at least two traces"));
    }
    let base = traces[0];
    for tr in &traces[1..] {
        for key in ["p", "graph", "density", "horizon", "snapshots"] {
            if tr.meta_get(key) != base.meta_get(key) {
                return Err(Error::Mismatch(format!(
                    "`{key}` differs: {:?} vs {:?}",
                    base.meta_get(key),
                    tr.meta_get(key)
                )));
            }
        }
        if tr.records.len() != base.records.len() || tr.records.iter().zip(&base.records).any(|(a, b)| a.t != b.t) {
            return Err(Error::Mismatch("traces do not share a time grid".into()));
        }
    }
    let window = late_window(base, fraction)?;
    let times: Vec<T> = base.records[window.clone()].iter().map(|r| r.t).collect();
    let linear = p <= T::lit(2.0);
    let s_series: Vec<Vec<T>> = if linear {
        Vec::new()
    } else {
        let e = T::one() / (p - T::lit(2.0));
        traces.iter().map(|tr| tr.records[window.clone()].iter().map(|r| r.t.powf(e) * r.linf).collect()).collect()
    };
    let spread_series: Vec<T> =
        window.clone().map(|i| spread(traces.iter().map(move |tr| tr.records[i].linf))).collect();
    let worst_spread = spread_series.iter().copied().fold(T::one(), T::max);
    let final_spread = *spread_series.last().expect("window is nonempty");

    let moments: Option<Vec<&(T, Vec<T>)>> = traces.iter().map(|tr| tr.moment.as_ref()).collect();
    let (i_series, moment_spread) = match moments {
        Some(ms) if !linear && ms.iter().all(|m| m.1.len() == base.records.len()) => {
            let nu = ms[0].0;
            let e = (T::one() + nu) / (p - T::lit(2.0));
            let series: Vec<Vec<T>> =
                ms.iter().map(|m| window.clone().map(|i| base.records[i].t.powf(e) * m.1[i]).collect()).collect();
            let worst = window.clone().map(|i| spread(ms.iter().map(move |m| m.1[i]))).fold(T::one(), T::max);
            (Some(series), Some(worst))
        }
        _ => (None, None),
    };

    Ok(UniversalReport { times, s_series, i_series, spread_series, worst_spread, final_spread, moment_spread })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport<T> {
    pub window: (T, T),
    pub fit: PowerFit<T>,
    /// Predicted slope `-(N-α)/H`, when the density has one.
    pub theory: Option<T>,
    pub q: Option<QReport<T>>,
    pub log_fit: Option<LogFitReport<T>>,
    pub universal: Option<UniversalReport<T>>,
    pub tainted: bool,
    pub meta: Vec<(String, String)>,
}

impl<T: Real> DecayReport<T> {
    /// Fit and late window only; the optional statistics are attached by the caller.
    pub fn from_trace(trace: &FlowTrace<T>, fraction: T, theory: Option<T>) -> Result<Self> {
        let window = late_window(trace, fraction)?;
        let fit = fit_trace(trace, window)?;
        Ok(Self {
            window: (fit.t_lo, fit.t_hi),
            fit,
            theory,
            q: None,
            log_fit: None,
            universal: None,
            tainted: trace.tainted,
            meta: trace.meta.clone(),
        })
    }

    pub fn exponent_within(&self, tol: T) -> Option<bool> {
        self.theory.map(|th| (self.fit.exponent - th).abs() <= tol)
    }

    fn rows(&self) -> Vec<(&'static str, f64)> {
        let mut rows = vec![
            ("t_lo", self.window.0.as_f64()),
            ("t_hi", self.window.1.as_f64()),
            ("points", self.fit.points as f64),
            ("exponent", self.fit.exponent.as_f64()),
            ("stderr", self.fit.stderr.as_f64()),
            ("intercept", self.fit.intercept.as_f64()),
        ];
        if let Some(th) = self.theory {
            rows.push(("theory_exponent", th.as_f64()));
        }
        if let Some(q) = &self.q {
            rows.extend([
                ("q_min", q.min.as_f64()),
                ("q_max", q.max.as_f64()),
                ("q_last", q.last.as_f64()),
                ("q_ratio", q.ratio.as_f64()),
                ("q_last_decade_slope", q.last_decade_slope.as_f64()),
                ("q_skipped", q.skipped as f64),
            ]);
        }
        if let Some(l) = &self.log_fit {
            rows.extend([("log_corrected_exponent", l.fit.exponent.as_f64()), ("log_power", l.log_power.as_f64())]);
        }
        if let Some(u) = &self.universal {
            rows.push(("universal_worst_spread", u.worst_spread.as_f64()));
            rows.push(("universal_final_spread", u.final_spread.as_f64()));
            if let Some(m) = u.moment_spread {
                rows.push(("moment_worst_spread", m.as_f64()));
            }
        }
        rows.push(("tainted", if self.tainted { 1.0 } else { 0.0 }));
        rows
    }

    /// `stat,value` rows preceded by the `#` provenance echo.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k} = {v}");
        }
        s.push_str("stat,value\n");
        for (k, v) in self.rows() {
            let _ = writeln!(s, "{k},{v:.16e}");
        }
        s
    }

    pub fn text_block(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(s, "{k}: {v}");
        }
        let _ = writeln!(
            s,
            "fit window [{:.4e}, {:.4e}] over {} snapshots",
            self.window.0.as_f64(),
            self.window.1.as_f64(),
            self.fit.points
        );
        let _ = write!(s, "decay exponent {:.4} ± {:.4}", self.fit.exponent.as_f64(), self.fit.stderr.as_f64());
        match self.theory {
            Some(th) => {
                let _ = writeln!(s, " (theory {:.4})", th.as_f64());
            }
            None => s.push('\n'),
        }
        if let Some(q) = &self.q {
            let _ = writeln!(
                s,
                "Q(t): min {:.4e} max {:.4e} last {:.4e} max/min {:.3} last-decade slope {:.4} ({} skipped)",
                q.min.as_f64(),
                q.max.as_f64(),
                q.last.as_f64(),
                q.ratio.as_f64(),
                q.last_decade_slope.as_f64(),
                q.skipped
            );
        }
        if let Some(l) = &self.log_fit {
            let _ =
                writeln!(s, "log-corrected exponent {:.4} (theory {:.4})", l.fit.exponent.as_f64(), l.theory.as_f64());
        }
        if let Some(u) = &self.universal {
            let _ = writeln!(
                s,
                "universal spread: worst {:.4} final {:.4}",
                u.worst_spread.as_f64(),
                u.final_spread.as_f64()
            );
        }
        if self.tainted {
            s.push_str("WARNING: boundary tainted; infinite-lattice conclusions do not apply\n");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityProfile;
    use crate::evolution::TraceRecord;

    fn synthetic(f: impl Fn(f64) -> f64, k: usize) -> FlowTrace<f64> {
        let mut records =
            vec![TraceRecord { t: 0.0, dt: 0.0, linf: 1.0, mass: 1.0, e2: 1.0, dp: 1.0, boundary_max: 0.0 }];
        for t in crate::evolution::snapshot_times(100.0, k) {
            records.push(TraceRecord { t, dt: 0.0, linf: f(t), mass: 1.0, e2: 0.0, dp: 0.0, boundary_max: 0.0 });
        }
        FlowTrace {
            records,
            dissipation: Vec::new(),
            outflow: Vec::new(),
            moment: None,
            fields: Vec::new(),
            tainted: false,
            steps: 0,
            meta: vec![("p".into(), "2.5".into())],
        }
    }

    #[test]
    fn exact_power_laws() {
        let tr = synthetic(|t| t.powf(-0.8), 50);
        let fit = fit_trace(&tr, late_window(&tr, 0.4).unwrap()).unwrap();
        assert!((fit.exponent + 0.8).abs() < 1e-12);
        assert!(fit.stderr < 1e-10);
        let tr = synthetic(|t| 5.0 * t.powf(-1.5), 50);
        let fit = fit_trace(&tr, late_window(&tr, 0.4).unwrap()).unwrap();
        assert!((fit.exponent + 1.5).abs() < 1e-12);
        assert!((fit.intercept - 5f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn window_rules() {
        let tr = synthetic(|t| 1.0 / t, 20);
        assert_eq!(late_window(&tr, 0.5).unwrap(), 11..21);
        assert!(matches!(late_window(&tr, 0.4), Err(Error::InsufficientData(_))));
        assert!(fit_power_law(&[1.0; 5], &[1.0; 5]).is_err());
    }

    fn power_toolkit(alpha: f64) -> ScalingToolkit<f64> {
        ScalingToolkit::new(2.5, 3, DensityProfile::power(alpha).unwrap(), alpha, alpha).unwrap()
    }

    #[test]
    fn q_constant_density_closed_form() {
        let tk = power_toolkit(0.0);
        let tr = synthetic(|t| 2.0 * t.powf(-0.4), 50);
        let m0 = 3.0;
        let q = theorem11_statistic(&tr, &tk, m0, late_window(&tr, 0.4).unwrap()).unwrap();
        let (p, n) = (2.5f64, 3.0);
        for &(t, v) in &q.series {
            let u = 2.0 * t.powf(-0.4);
            let closed = (u.powf(p - 2.0) * t).powf((n - p) / p) * u.powf(p - 1.0) * t * m0;
            assert!((v - closed).abs() <= 1e-9 * closed);
        }
    }

    #[test]
    fn q_is_flat_on_the_predicted_rate() {
        let tk = power_toolkit(1.0);
        let rate = tk.exponents(1.0).unwrap().rate;
        let tr = synthetic(|t| 7.0 * t.powf(-rate), 60);
        let q = theorem11_statistic(&tr, &tk, 2.0, late_window(&tr, 0.4).unwrap()).unwrap();
        assert!(q.ratio < 1.0 + 1e-8, "{}", q.ratio);
        assert!(q.last_decade_slope.abs() < 1e-8);
    }

    #[test]
    fn q_skips_zero_snapshots() {
        let tk = power_toolkit(1.0);
        let tr = synthetic(|t| if t > 50.0 { 0.0 } else { 1.0 }, 60);
        let q = theorem11_statistic(&tr, &tk, 1.0, late_window(&tr, 0.4).unwrap()).unwrap();
        assert!(q.skipped > 0);
        assert_eq!(q.series.len() + q.skipped, 24);
    }

    #[test]
    fn log_fit_recovers_manufactured_rate() {
        let (alpha, beta) = (1.0, 1.0);
        let tk = ScalingToolkit::new(2.5, 3, DensityProfile::power_log(alpha, beta).unwrap(), 0.0, 1.1).unwrap();
        let ex = decay_exponents(3, 2.5, alpha).unwrap();
        let u0 = 4.0f64;
        let lp = beta * 0.5 / ex.h;
        let tr = synthetic(|t| 3.0 * (t * u0.powf(0.5)).ln().powf(lp) * t.powf(-ex.rate), 60);
        let rep = log_corrected_fit(&tr, &tk, u0, late_window(&tr, 0.4).unwrap()).unwrap();
        assert!(rep.deviation() < 1e-10, "{rep:?}");

        let zero = ScalingToolkit::new(2.5, 3, DensityProfile::power_log(alpha, 0.0).unwrap(), 1.0, 1.0).unwrap();
        let tr = synthetic(|t| t.powf(-0.7), 60);
        let w = late_window(&tr, 0.4).unwrap();
        let a = log_corrected_fit(&tr, &zero, u0, w.clone()).unwrap();
        let b = fit_trace(&tr, w).unwrap();
        assert!((a.fit.exponent - b.exponent).abs() < 1e-12);
        assert!(log_corrected_fit(&tr, &power_toolkit(1.0), u0, 0..10).is_err());
    }

    #[test]
    fn universal_spread() {
        let a = synthetic(|t| 1.0 / (1.0 + t * t), 40);
        let b = a.clone();
        let rep = universal_bound_statistic(&[&a, &b], 2.5, 0.4).unwrap();
        assert_eq!(rep.worst_spread, 1.0);
        assert_eq!(rep.s_series.len(), 2);

        let mut c = synthetic(|t| 10.0 / (1.0 + t * t), 40);
        let rep = universal_bound_statistic(&[&a, &c], 2.0, 0.4).unwrap();
        assert!((rep.worst_spread - 10.0).abs() < 1e-12);
        assert!(rep.s_series.is_empty());

        c.set_meta("p", "3");
        assert!(matches!(universal_bound_statistic(&[&a, &c], 2.5, 0.4), Err(Error::Mismatch(_))));
        let short = synthetic(|t| 1.0 / t, 30);
        assert!(matches!(universal_bound_statistic(&[&a, &short], 2.5, 0.4), Err(Error::Mismatch(_))));
    }

    #[test]
    fn report_formats() {
        let tr = synthetic(|t| t.powf(-0.8), 50);
        let rep = DecayReport::from_trace(&tr, 0.4, Some(-0.8)).unwrap();
        assert_eq!(rep.exponent_within(1e-9), Some(true));
        let csv = rep.to_csv();
        assert!(csv.starts_with("# p = 2.5\nstat,value\n"));
        let exp_row = csv.lines().find(|l| l.starts_with("exponent,")).unwrap();
        let v: f64 = exp_row["exponent,".len()..].parse().unwrap();
        assert!((v + 0.8).abs() < 1e-12);
        assert!(rep.text_block().contains("decay exponent -0.8000"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn fit_is_exact_on_power_laws(a in -3.0f64..1.0, c in 0.01f64..100.0) {
                let tr = synthetic(|t| c * t.powf(a), 40);
                let fit = fit_trace(&tr, late_window(&tr, 0.4).unwrap()).unwrap();
                prop_assert!((fit.exponent - a).abs() < 1e-10);
            }

            #[test]
            fn q_boundedness_is_scale_consistent(c in 0.1f64..10.0) {
                let tk = power_toolkit(1.0);
                let tr = synthetic(|t| 1.0 / (1.0 + t).powf(0.75), 60);
                let w = late_window(&tr, 0.4).unwrap();
                let q1 = theorem11_statistic(&tr, &tk, 1.0, w.clone()).unwrap();
                let qc = theorem11_statistic(&tr, &tk, c, w).unwrap();
                prop_assert!((q1.ratio - qc.ratio).abs() < 1e-9 * q1.ratio);
            }
        }
    }
}
