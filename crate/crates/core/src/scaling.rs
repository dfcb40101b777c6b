//! Scaling functions built from the density and the volume growth exponent.
//!
//! With `ω(S) = S^p ρ(S)` the toolkit evaluates
//!
//! * `ψ(S; r) = ω(S) S^{(N-p)(p-r)/p}` and `Ψ(S) = ψ(S; 1)`,
//! * `φ(S; q, r) = (S ω(ψ⁻¹(S^{-r/p}; r)))^{(q-r)/(p-r)}` and
//!   `Φ(S) = (S ω(Ψ⁻¹(S^{-1/p})))^{1/(p-1)}`,
//!
//! together with their inverses. `ω` and `ψ` live on `[1, ∞)`. Because `φ`
//! feeds `S^{-r/p}` into `ψ⁻¹`, it lives on `(0, ψ(1)^{-p/r}]`, which is
//! `(0, 1]` whenever `ρ(1) = 1`.
//!
//! All inverses are computed numerically by bracketing and bisection, even
//! where closed forms exist.

use crate::density::DensityProfile;
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

const MAX_BISECTIONS: usize = 200;

/// Where an increasing function is defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain<T> {
    /// `[lo, ∞)`
    From(T),
    /// `(0, hi]`
    UpTo(T),
}

fn inversion_tol<T: Real>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(64.0))
}

/// Solves `f(x) = y` for increasing `f` on `[1, ∞)`.
pub fn invert_monotone<T: Real, F: Fn(T) -> T>(f: F, y: T) -> Result<T> {
    invert_monotone_on(f, y, Domain::From(T::one()))
}

/// Solves `f(x) = y` for increasing `f` on the given domain: the bracket is
/// grown geometrically away from the finite end of the domain and then
/// bisected until it stops shrinking (at most 200 bisections). The result
/// satisfies `|f(x) - y| ≤ 1e-10 · max(1, |y|)`.
pub fn invert_monotone_on<T: Real, F: Fn(T) -> T>(f: F, y: T, domain: Domain<T>) -> Result<T> {
    if !y.is_finite() {
        return Err(invalid(format!("cannot invert at non-finite target {y}")));
    }
    let two = T::lit(2.0);
    let (mut a, mut fa, mut b, mut fb) = match domain {
        Domain::From(lo) => {
            let flo = f(lo);
            if y < flo && flo - y <= inversion_tol::<T>() * T::one().max(y.abs()) {
                return Ok(lo);
            }
            if y < flo {
                return Err(Error::NoBracket { target: y.as_f64(), at_lower: flo.as_f64() });
            }
            if y == flo {
                return Ok(lo);
            }
            let mut a = lo;
            let mut fa = flo;
            let mut b = if lo > T::zero() { lo * two } else { T::one() };
            loop {
                let fb = f(b);
                if fb < fa || fb.is_nan() {
                    return Err(Error::NonMonotone(b.as_f64()));
                }
                if fb >= y {
                    break (a, fa, b, fb);
                }
                a = b;
                fa = fb;
                b = b * two;
                if !b.is_finite() {
                    return Err(Error::NoBracket { target: y.as_f64(), at_lower: flo.as_f64() });
                }
            }
        }
        Domain::UpTo(hi) => {
            let fhi = f(hi);
            if y > fhi && y - fhi <= inversion_tol::<T>() * T::one().max(y.abs()) {
                return Ok(hi);
            }
            if y > fhi {
                return Err(Error::OutOfDomain { what: "inverse (above range)", arg: y.as_f64(), lower: fhi.as_f64() });
            }
            if y == fhi {
                return Ok(hi);
            }
            let mut b = hi;
            let mut fb = fhi;
            let mut a = hi / two;
            loop {
                let fa = f(a);
                if fa > fb || fa.is_nan() {
                    return Err(Error::NonMonotone(a.as_f64()));
                }
                if fa <= y {
                    break (a, fa, b, fb);
                }
                b = a;
                fb = fa;
                a = a / two;
                if a == T::zero() {
                    return Err(Error::NoBracket { target: y.as_f64(), at_lower: fa.as_f64() });
                }
            }
        }
    };

    for _ in 0..MAX_BISECTIONS {
        let mid = a + (b - a) / two;
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        // ulp-level wiggles from composed powers are not monotonicity failures
        let slack = inversion_tol::<T>() * T::one().max(fm.abs());
        if fm < fa - slack || fm > fb + slack || fm.is_nan() {
            return Err(Error::NonMonotone(mid.as_f64()));
        }
        if fm < y {
            a = mid;
            fa = fm;
        } else {
            b = mid;
            fb = fm;
        }
    }
    let x = if (fa - y).abs() <= (fb - y).abs() { a } else { b };
    let err = (f(x) - y).abs();
    if err > inversion_tol::<T>() * T::one().max(y.abs()) {
        return Err(Error::NonMonotone(x.as_f64()));
    }
    Ok(x)
}

/// Exponents attached to a power density `ρ(s) = s^{-α}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents<T> {
    /// `λ = N(p-2) + p`
    pub lambda: T,
    /// `H = (N-α)(p-2) + p - α = λ - α(p-1)`
    pub h: T,
    /// `p* = Np/(N-p)`
    pub p_star: T,
    /// Decay rate `(N-α)/H` of `‖u(t)‖_∞`.
    pub rate: T,
}

/// Exponents for dimension `N`, nonlinearity `p` and density exponent `α`.
/// Valid for `0 ≤ α < p < N` and `p ≥ 2`; `p = 2` gives the linear heat rate `N/2`.
pub fn decay_exponents<T: Real>(dim: usize, p: T, alpha: T) -> Result<Exponents<T>> {
    let n = T::from_usize_lossy(dim);
    if !(p >= T::lit(2.0)) {
        return Err(invalid(format!("decay exponents need p >= 2, got {p}")));
    }
    if !(p < n) {
        return Err(invalid(format!("need p < N, got p = {p}, N = {dim}")));
    }
    if !(alpha >= T::zero()) || !(alpha < p) {
        return Err(invalid(format!("need 0 <= alpha < p, got alpha = {alpha}, p = {p}")));
    }
    let lambda = n * (p - T::lit(2.0)) + p;
    let critical = lambda / (p - T::one());
    if (alpha - critical).abs() < T::lit(1e-6) {
        return Err(invalid(format!("alpha = {alpha} is at the critical value {critical} where H = 0")));
    }
    let h = lambda - alpha * (p - T::one());
    Ok(Exponents { lambda, h, p_star: n * p / (n - p), rate: (n - alpha) / h })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingToolkit<T> {
    p: T,
    dim: usize,
    profile: DensityProfile<T>,
    alpha_lo: T,
    alpha_hi: T,
}

impl<T: Real> ScalingToolkit<T> {
    /// `(α₁, α₂)` is the monotonicity window of the density.
    pub fn new(p: T, dim: usize, profile: DensityProfile<T>, alpha_lo: T, alpha_hi: T) -> Result<Self> {
        let n = T::from_usize_lossy(dim);
        if !(p > T::lit(2.0)) {
            return Err(invalid(format!("scaling toolkit needs p > 2, got {p}")));
        }
        if !(n > p) {
            return Err(invalid(format!("scaling toolkit needs N > p, got N = {dim}, p = {p}")));
        }
        if !(alpha_lo >= T::zero()) || !(alpha_lo <= alpha_hi) || !(alpha_hi < p) {
            return Err(invalid(format!("need 0 <= alpha1 <= alpha2 < p, got ({alpha_lo}, {alpha_hi}) with p = {p}")));
        }
        let tk = Self { p, dim, profile, alpha_lo, alpha_hi };
        if !(tk.a2() > T::zero()) || !(tk.a1() > T::zero()) {
            return Err(invalid("window yields nonpositive A1/A2"));
        }
        Ok(tk)
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn n(&self) -> T {
        T::from_usize_lossy(self.dim)
    }

    pub fn profile(&self) -> &DensityProfile<T> {
        &self.profile
    }

    pub fn window(&self) -> (T, T) {
        (self.alpha_lo, self.alpha_hi)
    }

    pub fn lambda(&self) -> T {
        self.n() * (self.p - T::lit(2.0)) + self.p
    }

    pub fn p_star(&self) -> T {
        self.n() * self.p / (self.n() - self.p)
    }

    /// `h(q) = N(p-q) + qp`
    pub fn h(&self, q: T) -> T {
        self.n() * (self.p - q) + q * self.p
    }

    fn a_of(&self, a: T, b: T) -> T {
        let base = self.lambda() + self.n() - self.p * b;
        (base - self.p + a) / (base * (self.p - T::one()))
    }

    /// `A₁ = (λ+N+α₁-pα₂-p) / ((λ+N-pα₂)(p-1))`
    pub fn a1(&self) -> T {
        self.a_of(self.alpha_lo, self.alpha_hi)
    }

    /// `A₂ = (λ+N+α₂-pα₁-p) / ((λ+N-pα₁)(p-1))`
    pub fn a2(&self) -> T {
        self.a_of(self.alpha_hi, self.alpha_lo)
    }

    pub fn exponents(&self, alpha: T) -> Result<Exponents<T>> {
        decay_exponents(self.dim, self.p, alpha)
    }

    fn check_ge_one(&self, what: &'static str, s: T) -> Result<()> {
        if s >= T::one() && s.is_finite() {
            Ok(())
        } else {
            Err(Error::OutOfDomain { what, arg: s.as_f64(), lower: 1.0 })
        }
    }

    fn omega_raw(&self, s: T) -> T {
        s.powf(self.p) * self.profile.rho(s)
    }

    fn psi_raw(&self, s: T, r: T) -> T {
        self.omega_raw(s) * s.powf((self.n() - self.p) * (self.p - r) / self.p)
    }

    /// `ω(S) = S^p ρ(S)` for `S ≥ 1`.
    pub fn omega(&self, s: T) -> Result<T> {
        self.check_ge_one("omega", s)?;
        Ok(self.omega_raw(s))
    }

    pub fn omega_inv(&self, y: T) -> Result<T> {
        invert_monotone(|s| self.omega_raw(s), y)
    }

    fn check_r(&self, r: T) -> Result<()> {
        if r > T::zero() && r < self.p {
            Ok(())
        } else {
            Err(invalid(format!("need 0 < r < p, got r = {r}")))
        }
    }

    /// `ψ(S; r) = ω(S) S^{(N-p)(p-r)/p}` for `S ≥ 1`, `0 < r < p`.
    pub fn psi_small(&self, s: T, r: T) -> Result<T> {
        self.check_r(r)?;
        self.check_ge_one("psi", s)?;
        Ok(self.psi_raw(s, r))
    }

    /// `Ψ(S) = ψ(S; 1)`.
    pub fn psi_big(&self, s: T) -> Result<T> {
        self.psi_small(s, T::one())
    }

    pub fn psi_small_inv(&self, y: T, r: T) -> Result<T> {
        self.check_r(r)?;
        invert_monotone(|s| self.psi_raw(s, r), y)
    }

    pub fn psi_big_inv(&self, y: T) -> Result<T> {
        self.psi_small_inv(y, T::one())
    }

    /// Largest `S` with `ψ⁻¹(S^{-r/p}; r) ≥ 1`, i.e. the right end of φ's domain.
    pub fn phi_domain_max(&self, r: T) -> T {
        self.psi_raw(T::one(), r).powf(-self.p / r)
    }

    /// `φ(S; q, r) = (S ω(ψ⁻¹(S^{-r/p}; r)))^{(q-r)/(p-r)}`.
    pub fn phi_small(&self, s: T, q: T, r: T) -> Result<T> {
        self.check_r(r)?;
        if !(s > T::zero()) || s > self.phi_domain_max(r) {
            return Err(Error::OutOfDomain {
                what: "phi (inverse argument below psi(1))",
                arg: s.as_f64(),
                lower: self.phi_domain_max(r).as_f64(),
            });
        }
        let x = self.psi_small_inv(s.powf(-r / self.p), r)?;
        Ok((s * self.omega_raw(x)).powf((q - r) / (self.p - r)))
    }

    /// `Φ(S) = (S ω(Ψ⁻¹(S^{-1/p})))^{1/(p-1)}`.
    pub fn phi_big(&self, s: T) -> Result<T> {
        let one = T::one();
        if !(s > T::zero()) || s > self.phi_domain_max(one) {
            return Err(Error::OutOfDomain {
                what: "Phi (inverse argument below Psi(1))",
                arg: s.as_f64(),
                lower: self.phi_domain_max(one).as_f64(),
            });
        }
        let x = self.psi_big_inv(s.powf(-one / self.p))?;
        Ok((s * self.omega_raw(x)).powf(one / (self.p - one)))
    }

    /// Upper end of Φ's range, `Φ(ψ(1)^{-p})`.
    pub fn phi_big_range_max(&self) -> T {
        let smax = self.phi_domain_max(T::one());
        (smax * self.omega_raw(T::one())).powf(T::one() / (self.p - T::one()))
    }

    pub fn phi_big_inv(&self, y: T) -> Result<T> {
        if !(y > T::zero()) {
            return Err(Error::OutOfDomain { what: "Phi inverse", arg: y.as_f64(), lower: 0.0 });
        }
        let hi = self.phi_domain_max(T::one());
        invert_monotone_on(|s| self.phi_big(s).unwrap_or(T::nan()), y, Domain::UpTo(hi))
    }
}

/// One of the scaled functions covered by the two-sided scaling bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaledFn {
    Omega,
    Psi,
    PsiInv,
    Phi,
    PhiInv,
}

impl ScaledFn {
    pub const ALL: [ScaledFn; 5] = [Self::Omega, Self::Psi, Self::PsiInv, Self::Phi, Self::PhiInv];

    pub fn name(self) -> &'static str {
        match self {
            Self::Omega => "omega",
            Self::Psi => "Psi",
            Self::PsiInv => "Psi_inv",
            Self::Phi => "Phi",
            Self::PhiInv => "Phi_inv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichViolation<T> {
    pub func: ScaledFn,
    pub gamma: T,
    pub r: T,
    pub lower: T,
    pub ratio: T,
    pub upper: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnSummary<T> {
    pub func: ScaledFn,
    pub checked: usize,
    pub skipped: usize,
    /// Smallest relative slack; negative means a violation.
    pub worst_margin: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma24Report<T> {
    pub ok: bool,
    pub worst_margin: T,
    pub per_function: Vec<FnSummary<T>>,
    pub violations: Vec<SandwichViolation<T>>,
}

impl<T: Real> ScalingToolkit<T> {
    /// Exponent pair `(a, b)` such that `f(γR)/f(R)` lies between `γ^a` and `γ^b`.
    pub fn scaling_exponents(&self, func: ScaledFn) -> (T, T) {
        let p = self.p;
        let base = self.lambda() + self.n();
        let (lo, hi) = (self.alpha_lo, self.alpha_hi);
        match func {
            ScaledFn::Omega => (p - hi, p - lo),
            ScaledFn::Psi => ((base - p * hi) / p, (base - p * lo) / p),
            ScaledFn::PsiInv => (p / (base - p * lo), p / (base - p * hi)),
            ScaledFn::Phi => (self.a1(), self.a2()),
            ScaledFn::PhiInv => (T::one() / self.a2(), T::one() / self.a1()),
        }
    }

    fn eval_scaled(&self, func: ScaledFn, x: T) -> Option<T> {
        let v = match func {
            ScaledFn::Omega => self.omega(x),
            ScaledFn::Psi => self.psi_big(x),
            ScaledFn::PsiInv => self.psi_big_inv(x),
            ScaledFn::Phi => self.phi_big(x),
            ScaledFn::PhiInv => {
                if x > self.phi_big_range_max() {
                    return None;
                }
                self.phi_big_inv(x)
            }
        };
        v.ok()
    }
}

/// Checks `min(γ^a, γ^b) f(R) ≤ f(γR) ≤ max(γ^a, γ^b) f(R)` for ω, Ψ, Ψ⁻¹,
/// Φ and Φ⁻¹ on every `(γ, R)` pair where both arguments are in the domain
/// of `f`, with relative tolerance `1e-9`.
pub fn lemma24_bounds_check<T: Real>(tk: &ScalingToolkit<T>, gammas: &[T], radii: &[T]) -> Lemma24Report<T> {
    let tol = T::lit(1e-9);
    let mut per_function = Vec::new();
    let mut violations = Vec::new();
    let mut worst = T::infinity();
    for func in ScaledFn::ALL {
        let (a, b) = tk.scaling_exponents(func);
        let mut summary = FnSummary { func, checked: 0, skipped: 0, worst_margin: T::infinity() };
        for &r in radii {
            for &gamma in gammas {
                let (Some(base), Some(scaled)) = (tk.eval_scaled(func, r), tk.eval_scaled(func, gamma * r)) else {
                    summary.skipped += 1;
                    continue;
                };
                summary.checked += 1;
                let (ga, gb) = (gamma.powf(a), gamma.powf(b));
                let (lower, upper) = (ga.min(gb), ga.max(gb));
                let ratio = scaled / base;
                let margin = (ratio / lower - T::one()).min(T::one() - ratio / upper);
                summary.worst_margin = summary.worst_margin.min(margin);
                if margin < -tol {
                    violations.push(SandwichViolation { func, gamma, r, lower, ratio, upper });
                }
            }
        }
        worst = worst.min(summary.worst_margin);
        per_function.push(summary);
    }
    Lemma24Report { ok: violations.is_empty(), worst_margin: worst, per_function, violations }
}

/// True iff the slopes of `f` between consecutive grid points never decrease
/// by more than `1e-10` (relative to the slope magnitude).
pub fn convexity_on_grid<T: Real, F: Fn(T) -> Result<T>>(f: F, grid: &[T]) -> Result<bool> {
    if grid.len() < 3 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("convexity grid needs at least 3 increasing points"));
    }
    let values = grid.iter().map(|&x| f(x)).collect::<Result<Vec<T>>>()?;
    let slopes: Vec<T> = grid.windows(2).zip(values.windows(2)).map(|(x, v)| (v[1] - v[0]) / (x[1] - x[0])).collect();
    let tol = T::lit(1e-10);
    Ok(slopes.windows(2).all(|s| s[1] - s[0] >= -tol * T::one().max(s[0].abs()).max(s[1].abs())))
}

/// Convexity of Φ⁻¹ sampled on `grid` (points inside Φ's range).
pub fn convexity_check_phi_inverse<T: Real>(tk: &ScalingToolkit<T>, grid: &[T]) -> Result<bool> {
    convexity_on_grid(|y| tk.phi_big_inv(y), grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn power_tk(alpha: f64, p: f64, n: usize) -> ScalingToolkit<f64> {
        ScalingToolkit::new(p, n, DensityProfile::power(alpha).unwrap(), alpha, alpha).unwrap()
    }

    #[test]
    fn omega_examples() {
        let tk = power_tk(1.0, 3.0, 4);
        assert_eq!(tk.omega(2.0).unwrap(), 4.0);
        let c = ScalingToolkit::new(3.0, 4, DensityProfile::constant(), 0.0, 0.0).unwrap();
        assert_eq!(c.omega(5.0).unwrap(), 125.0);
        assert!(c.omega(0.5).is_err());

        let pl = ScalingToolkit::new(3.0, 4, DensityProfile::power_log(1.0, 2.0).unwrap(), 0.0, 1.0).unwrap();
        let e2 = std::f64::consts::E.powi(2);
        let want = std::f64::consts::E.powi(4) * 4.0;
        assert!(rel(pl.omega(e2).unwrap(), want) < 1e-14);
    }

    #[test]
    fn psi_examples() {
        let tk = power_tk(1.0, 3.0, 4);
        assert_eq!(tk.h(1.0), 11.0);
        let v = tk.psi_small(2.0, 1.0).unwrap();
        assert!(rel(v, 2f64.powf(8.0 / 3.0)) < 1e-14);
        let c = ScalingToolkit::new(3.0, 4, DensityProfile::constant(), 0.0, 0.0).unwrap();
        assert!(rel(c.psi_big(2.0).unwrap(), 8.0 * 2f64.powf(2.0 / 3.0)) < 1e-14);
        for s in [1.0, 1.5, 7.0, 300.0] {
            assert_eq!(tk.psi_big(s).unwrap(), tk.psi_small(s, 1.0).unwrap());
        }
        assert!(tk.psi_small(2.0, 3.0).is_err());
    }

    #[test]
    fn phi_constant_density_closed_form() {
        // Ψ(S) = S^{11/3}, Ψ⁻¹(S^{-1/3}) = S^{-1/11}, ω of that is S^{-3/11},
        // so Φ(S) = (S^{8/11})^{1/2} = S^{4/11} on (0, 1].
        let c = ScalingToolkit::new(3.0, 4, DensityProfile::constant(), 0.0, 0.0).unwrap();
        assert_eq!(c.phi_domain_max(1.0), 1.0);
        for s in [1.0, 0.5, 1e-3, 1e-6] {
            assert!(rel(c.phi_big(s).unwrap(), f64::powf(s, 4.0 / 11.0)) < 1e-12);
        }
        assert!(c.phi_big(2.0).is_err());
        assert!(c.phi_big(0.0).is_err());
    }

    #[test]
    fn phi_power_density_closed_form() {
        // ρ = s^{-1}, p = 3, N = 4: Ψ(S) = S^{(λ+N-pα)/p} = S^{8/3},
        // Φ(S) = S^{(λ+N-pα-p+α)/((λ+N-pα)(p-1))} = S^{6/16}.
        let tk = power_tk(1.0, 3.0, 4);
        let expo = (7.0 + 4.0 - 3.0 - 3.0 + 1.0) / ((7.0 + 4.0 - 3.0) * 2.0);
        assert!((tk.a1() - expo).abs() < 1e-15 && (tk.a2() - expo).abs() < 1e-15);
        for s in [1.0, 0.3, 1e-4] {
            assert!(rel(tk.phi_big(s).unwrap(), f64::powf(s, expo)) < 1e-9);
        }
    }

    #[test]
    fn phi_small_matches_phi_big_for_q2_r1() {
        let tk = ScalingToolkit::new(2.5, 3, DensityProfile::power_log(1.0, 1.0).unwrap(), 0.0, 1.1).unwrap();
        let smax = tk.phi_domain_max(1.0);
        for k in 0..20 {
            let s = smax * 10f64.powf(-(k as f64) * 0.3);
            let a = tk.phi_big(s).unwrap();
            let b = tk.phi_small(s, 2.0, 1.0).unwrap();
            assert!(rel(a, b) < 1e-14);
        }
    }

    #[test]
    fn phi_is_increasing() {
        let tk = power_tk(1.0, 3.0, 4);
        let mut prev = 0.0;
        for k in (0..40).rev() {
            let s = 10f64.powf(-(k as f64) / 8.0);
            let v = tk.phi_big(s).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn inversion_examples() {
        let tk = power_tk(1.0, 3.0, 4);
        assert!((tk.omega_inv(4.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((invert_monotone(|x: f64| x, 7.0).unwrap() - 7.0).abs() < 1e-12);
        let c = ScalingToolkit::new(3.0, 4, DensityProfile::constant(), 0.0, 0.0).unwrap();
        let y = 2f64.powf(11.0 / 3.0);
        assert!((c.psi_big_inv(y).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn inversion_tolerates_roundoff_wiggle() {
        let f = |x: f64| x + 1e-14 * (1e9 * x).sin();
        let x = invert_monotone(f, 3.25).unwrap();
        assert!((x - 3.25).abs() < 1e-12);
    }

    #[test]
    fn inversion_errors() {
        assert!(matches!(invert_monotone(|x: f64| x, 0.5), Err(Error::NoBracket { .. })));
        assert!(matches!(invert_monotone(|x: f64| 10.0 - x, 9.5), Err(Error::NonMonotone(_))));
        // non-monotone inside the bracket
        let wiggle = |x: f64| if (5.5..6.5).contains(&x) { 0.0 } else { x };
        assert!(invert_monotone(wiggle, 6.0).is_err());
        assert!(invert_monotone(|x: f64| x, f64::INFINITY).is_err());
    }

    #[test]
    fn inversion_accuracy_contract() {
        let f = |x: f64| x.powf(2.7) + x.ln();
        for y in [1.0, 3.3, 1e3, 1e9] {
            let x = invert_monotone(f, y).unwrap();
            assert!((f(x) - y).abs() <= 1e-10 * y.max(1.0));
        }
    }

    #[test]
    fn exponent_examples() {
        let e = decay_exponents(3, 2.5f64, 1.0).unwrap();
        assert!((e.lambda - 4.0).abs() < 1e-15);
        assert!((e.h - 2.5).abs() < 1e-15);
        assert!((e.rate - 0.8).abs() < 1e-15);
        assert!((e.p_star - 15.0).abs() < 1e-12);
        let z = decay_exponents(3, 2.5f64, 0.0).unwrap();
        assert_eq!(z.h, z.lambda);
        assert!((z.rate - 3.0 / 4.0).abs() < 1e-15);
        let lin = decay_exponents(3, 2.0f64, 0.0).unwrap();
        assert_eq!(lin.rate, 1.5);
        assert!(decay_exponents(3, 2.5, 2.5).is_err());
        assert!(decay_exponents(3, 3.0, 1.0).is_err());
    }

    #[test]
    fn rejects_alpha_near_critical() {
        // α* = λ/(p-1) exceeds p whenever p < N, so probe the guard directly.
        let n = 3usize;
        let p = 2.5;
        let lambda = 4.0;
        let crit: f64 = lambda / (p - 1.0);
        assert!(crit > p);
        assert!(decay_exponents(n, p, crit).is_err());
    }

    #[test]
    fn toolkit_validation() {
        let prof = DensityProfile::<f64>::constant();
        assert!(ScalingToolkit::new(2.0, 4, prof.clone(), 0.0, 0.0).is_err());
        assert!(ScalingToolkit::new(3.0, 3, prof.clone(), 0.0, 0.0).is_err());
        assert!(ScalingToolkit::new(3.0, 4, prof.clone(), 1.0, 0.5).is_err());
        assert!(ScalingToolkit::new(3.0, 4, prof, 0.0, 3.0).is_err());
    }

    #[test]
    fn h_identity() {
        let tk = power_tk(0.5, 2.5, 3);
        let (n, p) = (3.0, 2.5);
        for (q, r) in [(2.0, 1.0), (1.5, 0.3), (2.4, 2.0), (0.9, 0.1)] {
            let lhs = 1.0 - (q - r) * (n - p) / tk.h(r);
            assert!((lhs - tk.h(q) / tk.h(r)).abs() < 1e-14);
            assert!(tk.h(q) > 0.0);
        }
        assert!(tk.lambda() > 0.0 && tk.p_star() > tk.p());
    }

    #[test]
    fn lemma24_constant_and_power_hold() {
        let gammas = [0.25, 0.5, 0.9, 1.0, 2.0, 4.0];
        let radii = [1e-4, 0.01, 0.2, 0.5, 1.0, 3.0, 10.0, 100.0];
        let c = ScalingToolkit::new(3.0, 4, DensityProfile::constant(), 0.0, 0.0).unwrap();
        let rep = lemma24_bounds_check(&c, &gammas, &radii);
        assert!(rep.ok, "{:?}", rep.violations);
        assert!(rep.per_function.iter().all(|s| s.checked > 0));
        // homogeneity: ω(γR) = γ^p ω(R)
        assert!(rel(c.omega(20.0).unwrap(), 8.0 * c.omega(10.0).unwrap()) < 1e-14);

        let tk = power_tk(1.0, 3.0, 4);
        let rep = lemma24_bounds_check(&tk, &gammas, &radii);
        assert!(rep.ok, "{:?}", rep.violations);
        assert!(rel(tk.omega(5.0).unwrap(), 0.25 * tk.omega(10.0).unwrap()) < 1e-14);
    }

    #[test]
    fn lemma24_power_log() {
        let gammas = [0.25, 0.5, 2.0, 4.0];
        let radii = [1e-3, 0.05, 0.3, 1.0, 5.0, 10.0, 100.0];
        let prof = DensityProfile::power_log(1.0, 1.0).unwrap();
        // (0, 1.1) satisfies the monotonicity window on all of [1, ∞).
        let tk = ScalingToolkit::new(3.0, 4, prof.clone(), 0.0, 1.1).unwrap();
        let rep = lemma24_bounds_check(&tk, &gammas, &radii);
        assert!(rep.ok, "{:?}", rep.violations);
        assert!(rep.per_function.iter().all(|s| s.checked > 0));
        // (0.9, 1.1) does not: s^{-0.1} log s increases up to s = e^{10}.
        let narrow = ScalingToolkit::new(3.0, 4, prof, 0.9, 1.1).unwrap();
        let rep = lemma24_bounds_check(&narrow, &gammas, &[10.0, 100.0]);
        assert!(!rep.ok);
        assert!(rep.violations.iter().any(|v| v.func == ScaledFn::Omega));
    }

    #[test]
    fn convexity_examples() {
        let c = ScalingToolkit::new(3.0, 4, DensityProfile::constant(), 0.0, 0.0).unwrap();
        let grid: Vec<f64> = (1..=20).map(|k| k as f64 / 20.0).collect();
        assert!(convexity_check_phi_inverse(&c, &grid).unwrap());
        assert!(convexity_on_grid(|x: f64| Ok(3.0 * x - 2.0), &[0.0, 1.0, 5.0, 6.0]).unwrap());
        assert!(!convexity_on_grid(|x: f64| Ok(x.sqrt()), &[1.0, 2.0, 3.0]).unwrap());
        assert!(convexity_on_grid(|x: f64| Ok(x), &[1.0, 2.0]).is_err());
    }

    #[test]
    fn single_precision_toolkit() {
        let tk = ScalingToolkit::<f32>::new(3.0, 4, DensityProfile::power(1.0).unwrap(), 1.0, 1.0).unwrap();
        assert!((tk.omega_inv(4.0).unwrap() - 2.0).abs() < 1e-5);
    }
}
