//! Radial densities `ρ(d(x))` with values in `(0, 1]`.
//!
//! Every family is evaluated as `min(1, formula(max(s, knee)))`: below the
//! knee the formula is frozen at its knee value. The knee is `1` except for
//! `power_log` with `β > 0`, where the formula vanishes at `s = 1` and peaks
//! at `s = e^{β/α}`; freezing at the peak keeps ρ positive and nonincreasing.

use crate::error::{invalid, Result};
use crate::graph::WeightedGraph;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub enum DensityFamily<T> {
    Constant,
    /// `s^{-α}`
    Power {
        alpha: T,
    },
    /// `s^{-α} (log s)^β`
    PowerLog {
        alpha: T,
        beta: T,
    },
    /// Piecewise-linear interpolation of `(s, ρ)` pairs, constant outside the table.
    Table(Vec<(T, T)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile<T> {
    family: DensityFamily<T>,
    knee: T,
}

impl<T: Real> DensityProfile<T> {
    pub fn constant() -> Self {
        Self { family: DensityFamily::Constant, knee: T::one() }
    }

    pub fn power(alpha: T) -> Result<Self> {
        if !alpha.is_finite() || alpha < T::zero() {
            return Err(invalid(format!("power density needs alpha >= 0, got {alpha}")));
        }
        Ok(Self { family: DensityFamily::Power { alpha }, knee: T::one() })
    }

    pub fn power_log(alpha: T, beta: T) -> Result<Self> {
        if !alpha.is_finite() || !beta.is_finite() || alpha < T::zero() {
            return Err(invalid(format!("power_log density needs finite alpha >= 0, got ({alpha}, {beta})")));
        }
        let knee = if beta > T::zero() {
            if alpha == T::zero() {
                return Err(invalid("power_log with alpha = 0 and beta > 0 is increasing"));
            }
            (beta / alpha).exp().max(T::one())
        } else {
            T::one()
        };
        Ok(Self { family: DensityFamily::PowerLog { alpha, beta }, knee })
    }

    pub fn table(points: Vec<(T, T)>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("density table is empty"));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(invalid("density table abscissae must be strictly increasing"));
            }
            if w[1].1 > w[0].1 {
                return Err(invalid("density table values must be nonincreasing"));
            }
        }
        if points.iter().any(|&(s, r)| !s.is_finite() || !(r > T::zero()) || !r.is_finite()) {
            return Err(invalid("density table values must be finite and positive"));
        }
        Ok(Self { family: DensityFamily::Table(points), knee: T::one() })
    }

    pub fn family(&self) -> &DensityFamily<T> {
        &self.family
    }

    /// Below this argument the formula is frozen.
    pub fn knee(&self) -> T {
        self.knee
    }

    /// Power-law exponent of the tail (`0` for constant and table densities).
    pub fn tail_exponent(&self) -> T {
        match &self.family {
            DensityFamily::Power { alpha } | DensityFamily::PowerLog { alpha, .. } => *alpha,
            _ => T::zero(),
        }
    }

    fn formula(&self, s: T) -> T {
        match &self.family {
            DensityFamily::Constant => T::one(),
            DensityFamily::Power { alpha } => s.powf(-*alpha),
            DensityFamily::PowerLog { alpha, beta } => s.powf(-*alpha) * s.ln().powf(*beta),
            DensityFamily::Table(pts) => interpolate(pts, s),
        }
    }

    /// `ρ(s)` for `s ≥ 0`; negative arguments are treated as `0`.
    pub fn rho(&self, s: T) -> T {
        let s = s.max(self.knee);
        let v = self.formula(s);
        if v.is_nan() {
            T::one()
        } else {
            v.min(T::one())
        }
    }

    /// `ρ(d)` at an integer distance.
    pub fn rho_at(&self, d: usize) -> T {
        self.rho(T::from_usize_lossy(d))
    }

    /// Per-vertex density values `ρ(d(x))`.
    pub fn vertex_values(&self, g: &WeightedGraph<T>) -> Vec<T> {
        let mut by_dist = Vec::with_capacity(g.radius() + 1);
        for d in 0..=g.radius() {
            by_dist.push(self.rho_at(d));
        }
        g.distances().iter().map(|&d| by_dist[d]).collect()
    }

    /// Short human-readable description, used in file headers.
    pub fn describe(&self) -> String {
        match &self.family {
            DensityFamily::Constant => "constant".to_string(),
            DensityFamily::Power { alpha } => format!("power(alpha={alpha})"),
            DensityFamily::PowerLog { alpha, beta } => format!("power_log(alpha={alpha},beta={beta})"),
            DensityFamily::Table(pts) => {
                let body: Vec<String> = pts.iter().map(|(s, r)| format!("({s},{r})")).collect();
                format!("table[{}]", body.join(";"))
            }
        }
    }
}

fn interpolate<T: Real>(pts: &[(T, T)], s: T) -> T {
    let first = pts[0];
    let last = pts[pts.len() - 1];
    if s <= first.0 {
        return first.1;
    }
    if s >= last.0 {
        return last.1;
    }
    let k = pts.partition_point(|&(x, _)| x <= s);
    let (x0, y0) = pts[k - 1];
    let (x1, y1) = pts[k];
    y0 + (y1 - y0) * (s - x0) / (x1 - x0)
}

/// `ρ(s)` with argument validation.
pub fn eval_rho<T: Real>(profile: &DensityProfile<T>, s: T) -> Result<T> {
    if !(s >= T::zero()) || !s.is_finite() {
        return Err(invalid(format!("density argument must be finite and >= 0, got {s}")));
    }
    Ok(profile.rho(s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum H1Clause {
    /// `ρ(s) s^{α₂}` must be nondecreasing.
    UpperIncreasing,
    /// `ρ(s) s^{α₁}` must be nonincreasing.
    LowerDecreasing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct H1Violation<T> {
    pub clause: H1Clause,
    pub s_left: T,
    pub s_right: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct H1Report<T> {
    pub ok: bool,
    pub violations: Vec<H1Violation<T>>,
}

/// Checks the two monotonicity conditions of the `(α₁, α₂)` window on a grid.
pub fn check_h1<T: Real>(
    profile: &DensityProfile<T>,
    alpha_lo: T,
    alpha_hi: T,
    p: T,
    grid: &[T],
) -> Result<H1Report<T>> {
    if alpha_lo < T::zero() || alpha_lo > alpha_hi {
        return Err(invalid(format!("need 0 <= alpha1 <= alpha2, got ({alpha_lo}, {alpha_hi})")));
    }
    if alpha_hi >= p {
        return Err(invalid(format!("need alpha2 < p, got alpha2 = {alpha_hi}, p = {p}")));
    }
    if grid.iter().any(|&s| s < T::one()) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("H1 grid must be strictly increasing and >= 1"));
    }
    let tol = T::lit(1e-12);
    let mut violations = Vec::new();
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (ra, rb) = (profile.rho(a), profile.rho(b));
        let (ua, ub) = (ra * a.powf(alpha_hi), rb * b.powf(alpha_hi));
        if ub < ua * (T::one() - tol) {
            violations.push(H1Violation { clause: H1Clause::UpperIncreasing, s_left: a, s_right: b });
        }
        let (la, lb) = (ra * a.powf(alpha_lo), rb * b.powf(alpha_lo));
        if lb > la * (T::one() + tol) {
            violations.push(H1Violation { clause: H1Clause::LowerDecreasing, s_left: a, s_right: b });
        }
    }
    Ok(H1Report { ok: violations.is_empty(), violations })
}

/// Exponent `N(p-1+ν)/(λ+pν)` applied to ρ in the summability condition.
pub fn summability_power<T: Real>(dim: usize, p: T, nu: T) -> T {
    let n = T::from_usize_lossy(dim);
    let lambda = n * (p - T::lit(2.0)) + p;
    n * (p - T::one() + nu) / (lambda + p * nu)
}

/// Lower threshold on ν above which `α·N(p-1+ν)/(λ+pν) > N`, for `α > p`.
/// Returns `None` when `α ≤ p` (no ν works).
pub fn nu_threshold<T: Real>(dim: usize, p: T, alpha: T) -> Option<T> {
    let eps = alpha - p;
    if eps <= T::zero() {
        return None;
    }
    let n = T::from_usize_lossy(dim);
    Some((n - p) * (p - T::lit(2.0)) / eps - p + T::one())
}

/// Default ν for moment statistics: half a unit above the threshold, and at least `1/2`.
pub fn default_nu<T: Real>(dim: usize, p: T, alpha: T) -> Option<T> {
    nu_threshold(dim, p, alpha).map(|th| th.max(T::zero()) + T::lit(0.5))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummabilityReport<T> {
    /// Power applied to ρ.
    pub rho_power: T,
    /// Effective decay exponent `β = α · rho_power` of the summand.
    pub beta: T,
    /// `(n, Σ_{x∈B(n)} ρ(d(x))^{rho_power} m(x))` for `n = 1..=R`.
    pub partial_sums: Vec<(usize, T)>,
    pub convergent: bool,
}

impl<T: Real> SummabilityReport<T> {
    /// `S(R) / S(⌈R/2⌉)`.
    pub fn last_to_half(&self) -> T {
        let n = self.partial_sums.len();
        let half = self.partial_sums[n.div_ceil(2) - 1].1;
        self.partial_sums[n - 1].1 / half
    }
}

pub fn rho_summability_check<T: Real>(
    g: &WeightedGraph<T>,
    profile: &DensityProfile<T>,
    p: T,
    nu: T,
) -> Result<SummabilityReport<T>> {
    if !(p > T::lit(2.0)) || !(nu > T::zero()) {
        return Err(invalid(format!("summability check needs p > 2 and nu > 0, got p = {p}, nu = {nu}")));
    }
    let rho_power = summability_power(g.dim(), p, nu);
    let beta = profile.tail_exponent() * rho_power;
    let mut partial_sums = Vec::with_capacity(g.radius());
    let mut acc = T::zero();
    for d in 0..=g.radius() {
        let r = profile.rho_at(d).powf(rho_power);
        acc = acc + g.shell(d).map(|x| r * g.degree(x)).sum::<T>();
        if d >= 1 {
            partial_sums.push((d, acc));
        }
    }
    Ok(SummabilityReport { rho_power, beta, partial_sums, convergent: beta > T::from_usize_lossy(g.dim()) })
}
