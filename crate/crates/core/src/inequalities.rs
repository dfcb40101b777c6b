//! Empirical checks of the functional inequalities on concrete graphs.
//!
//! Every ratio here is homogeneous of degree zero in the test function, so
//! reports are invariant under `f ↦ cf`. Randomized searches derive one
//! generator per trial from the recorded seed, which keeps results identical
//! under any thread schedule.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::density::DensityProfile;
use crate::error::{invalid, Error, Result};
use crate::graph::{VertexSet, WeightedGraph};
use crate::operator::{dirichlet_energy_unchecked, weighted_norm_with};
use crate::scalar::Real;
use crate::scaling::ScalingToolkit;

pub const REPORT_HEADER: &str = "inequality,trials,worst_ratio,seed,witness_file";

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport<T> {
    pub id: String,
    pub trials: usize,
    pub worst_ratio: T,
    /// Trial that produced the witness.
    pub witness_trial: usize,
    pub witness: Vec<T>,
    pub seed: u64,
    pub budget: Option<T>,
    pub pass: bool,
}

impl<T: Real> InequalityReport<T> {
    pub fn new(id: impl Into<String>, trials: usize, worst_ratio: T, seed: u64, budget: Option<T>) -> Self {
        let pass = worst_ratio.is_finite() && budget.is_none_or(|b| worst_ratio <= b);
        Self { id: id.into(), trials, worst_ratio, witness_trial: 0, witness: Vec::new(), seed, budget, pass }
    }

    pub fn with_witness(mut self, trial: usize, witness: Vec<T>) -> Self {
        self.witness_trial = trial;
        self.witness = witness;
        self
    }

    pub fn csv_row(&self, witness_file: &str) -> String {
        format!("{},{},{:.16e},{},{}", self.id, self.trials, self.worst_ratio.as_f64(), self.seed, witness_file)
    }
}

/// `index value` lines, one per vertex with a nonzero value.
pub fn witness_text<T: Real>(f: &[T]) -> String {
    let mut s = String::new();
    for (i, v) in f.iter().enumerate().filter(|(_, v)| **v != T::zero()) {
        let _ = writeln!(s, "{i} {:.16e}", v.as_f64());
    }
    s
}

fn check_support<T: Real>(g: &WeightedGraph<T>, set: &VertexSet<T>, f: &[T]) -> Result<()> {
    if f.len() != g.len() {
        return Err(invalid(format!("function has {} values, graph has {} vertices", f.len(), g.len())));
    }
    if let Some(x) = (0..f.len()).find(|&x| f[x] != T::zero() && !set.contains(x)) {
        return Err(invalid(format!("function is nonzero at vertex {x} outside the set")));
    }
    if f.iter().all(|v| *v == T::zero()) {
        return Err(invalid("function is identically zero"));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(invalid("function has non-finite values"));
    }
    Ok(())
}

fn sobolev_exponent<T: Real>(dim: usize, p: T) -> Result<T> {
    let n = T::from_usize_lossy(dim);
    if !(p >= T::one() && n > p) {
        return Err(invalid(format!("Sobolev exponent needs N > p >= 1, got N = {dim}, p = {p}")));
    }
    Ok(n * p / (n - p))
}

fn lp_sum<T: Real>(g: &WeightedGraph<T>, f: &[T], q: T) -> T {
    f.iter().zip(g.degrees()).map(|(&v, &m)| v.abs().powf(q) * m).sum()
}

/// `(Σ_U |f|^{p*} m)^{1/p*} / (Σ_{x,y} |D_y f|^p w)^{1/p}`, with `f` extended by
/// zero beyond the ball.
pub fn verify_sobolev<T: Real>(g: &WeightedGraph<T>, set: &VertexSet<T>, f: &[T], p: T) -> Result<T> {
    let ps = sobolev_exponent(g.dim(), p)?;
    check_support(g, set, f)?;
    Ok(sobolev_ratio_unchecked(g, f, p, ps))
}

fn sobolev_ratio_unchecked<T: Real>(g: &WeightedGraph<T>, f: &[T], p: T, ps: T) -> T {
    lp_sum(g, f, ps).powf(T::one() / ps) / dirichlet_energy_unchecked(g, f, p).powf(T::one() / p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaberKrahn<T> {
    /// `Σ_U |f|^p m / (μ(U)^p Σ |D_y f|^p w)`
    pub ratio: T,
    pub sobolev_ratio: T,
    pub measure: T,
    /// Hölder step: `ratio · μ(U)^{p - p/N} ≤ sobolev_ratio^p`.
    pub chain_ok: bool,
}

pub fn verify_faber_krahn<T: Real>(g: &WeightedGraph<T>, set: &VertexSet<T>, f: &[T], p: T) -> Result<FaberKrahn<T>> {
    let sobolev_ratio = verify_sobolev(g, set, f, p)?;
    let mu = set.measure();
    let ratio = lp_sum(g, f, p) / (mu.powf(p) * dirichlet_energy_unchecked(g, f, p));
    let lifted = ratio * mu.powf(p - p / T::from_usize_lossy(g.dim()));
    let chain_ok = lifted <= sobolev_ratio.powf(p) * (T::one() + T::lit(1e-12));
    Ok(FaberKrahn { ratio, sobolev_ratio, measure: mu, chain_ok })
}

/// Seed of trial `i` derived from the run seed.
pub fn trial_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Kinds of random compactly supported test functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunction {
    GaussianBump,
    BallIndicator,
    RandomSign,
}

/// Random test function `index` from the family keyed by `seed`; kinds cycle
/// through bump, ball indicator and random-sign field. Supports are centred
/// in `B(R/2)`.
pub fn random_test_function<T: Real>(g: &WeightedGraph<T>, seed: u64, index: usize) -> (TestFunction, Vec<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, index));
    let kind = match index % 3 {
        0 => TestFunction::GaussianBump,
        1 => TestFunction::BallIndicator,
        _ => TestFunction::RandomSign,
    };
    let half = g.radius() / 2;
    let centre = rng.gen_range(g.ball_range(half));
    let c: Vec<i64> = g.coords(centre).to_vec();
    let l1 = |x: usize| -> i64 { g.coords(x).iter().zip(&c).map(|(a, b)| (a - b).abs()).sum() };
    let mut f = vec![T::zero(); g.len()];
    match kind {
        TestFunction::GaussianBump => {
            let width: f64 = rng.gen_range(0.5..(g.radius() as f64 / 3.0).max(1.0));
            let cutoff = (3.0 * width).ceil() as i64;
            for (x, v) in f.iter_mut().enumerate() {
                if l1(x) <= cutoff {
                    let r2: f64 = g.coords(x).iter().zip(&c).map(|(a, b)| ((a - b) * (a - b)) as f64).sum();
                    *v = T::lit((-r2 / (2.0 * width * width)).exp());
                }
            }
        }
        TestFunction::BallIndicator => {
            let r = rng.gen_range(0..=half) as i64;
            for (x, v) in f.iter_mut().enumerate() {
                if l1(x) <= r {
                    *v = T::one();
                }
            }
        }
        TestFunction::RandomSign => {
            let r = rng.gen_range(0..=half) as i64;
            for (x, v) in f.iter_mut().enumerate() {
                if l1(x) <= r {
                    *v = T::lit(rng.gen_range(-1.0..1.0));
                }
            }
            if f.iter().all(|v| *v == T::zero()) {
                f[centre] = T::one();
            }
        }
    }
    (kind, f)
}

/// Incremental state for coordinate ascent on `A^{p/p*} / B` with
/// `A = Σ |f|^{p*} m` and `B = D_p(f)`.
struct SobolevAscent<'a, T> {
    g: &'a WeightedGraph<T>,
    p: T,
    ps: T,
    f: Vec<T>,
    a: T,
    b: T,
}

impl<T: Real> SobolevAscent<'_, T> {
    fn objective(&self, a: T, b: T) -> T {
        if b > T::zero() {
            a.powf(self.p / self.ps) / b
        } else {
            T::neg_infinity()
        }
    }

    fn deltas(&self, x: usize, new: T) -> (T, T) {
        let old = self.f[x];
        let two = T::lit(2.0);
        let da = (new.abs().powf(self.ps) - old.abs().powf(self.ps)) * self.g.degree(x);
        let mut db = two * self.g.cut_weight(x) * (new.abs().powf(self.p) - old.abs().powf(self.p));
        for (y, w) in self.g.neighbors(x) {
            let fy = self.f[y];
            db = db + two * w * ((fy - new).abs().powf(self.p) - (fy - old).abs().powf(self.p));
        }
        (da, db)
    }

    fn sweep(&mut self, step: T) {
        let fmax = self.f.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let mut active = vec![false; self.g.len()];
        for x in 0..self.g.len() {
            if self.f[x] != T::zero() {
                active[x] = true;
                for (y, _) in self.g.neighbors(x) {
                    active[y] = true;
                }
            }
        }
        for x in (0..self.g.len()).filter(|&x| active[x]) {
            let v = self.f[x];
            let mut best = (self.objective(self.a, self.b), v, T::zero(), T::zero());
            for cand in [v * (T::one() + step), v * (T::one() - step), v + step * fmax, v - step * fmax] {
                let (da, db) = self.deltas(x, cand);
                let obj = self.objective(self.a + da, self.b + db);
                if obj > best.0 {
                    best = (obj, cand, da, db);
                }
            }
            if best.1 != v {
                self.f[x] = best.1;
                self.a = self.a + best.2;
                self.b = self.b + best.3;
            }
        }
        self.a = lp_sum(self.g, &self.f, self.ps);
        self.b = dirichlet_energy_unchecked(self.g, &self.f, self.p);
    }
}

fn polish<T: Real>(g: &WeightedGraph<T>, f: Vec<T>, p: T, ps: T, sweeps: usize) -> Vec<T> {
    let a = lp_sum(g, &f, ps);
    let b = dirichlet_energy_unchecked(g, &f, p);
    let mut st = SobolevAscent { g, p, ps, f, a, b };
    let mut step = T::lit(0.5);
    for _ in 0..sweeps {
        st.sweep(step);
        step = step * T::lit(0.5);
    }
    st.f
}

/// Lower bound on the best Sobolev constant: the largest ratio over `trials`
/// candidates, each refined by `polish_sweeps` rounds of coordinate ascent.
/// Trial 0 is the indicator of the origin; later trials are drawn by
/// [`random_test_function`].
pub fn estimate_sobolev_constant<T: Real>(
    g: &WeightedGraph<T>,
    p: T,
    trials: usize,
    seed: u64,
    polish_sweeps: usize,
) -> Result<InequalityReport<T>> {
    let ps = sobolev_exponent(g.dim(), p)?;
    if trials == 0 {
        return Err(invalid("need at least one trial"));
    }
    let results: Vec<(T, Vec<T>)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let f = if i == 0 {
                let mut f = vec![T::zero(); g.len()];
                f[g.origin()] = T::one();
                f
            } else {
                random_test_function(g, seed, i).1
            };
            let f = polish(g, f, p, ps, polish_sweeps);
            (sobolev_ratio_unchecked(g, &f, p, ps), f)
        })
        .collect();
    let (best, (ratio, f)) = results
        .into_iter()
        .enumerate()
        .fold(None::<(usize, (T, Vec<T>))>, |acc, (i, r)| match acc {
            Some((j, a)) if a.0 >= r.0 => Some((j, a)),
            _ => Some((i, r)),
        })
        .expect("at least one trial");
    Ok(InequalityReport::new("sobolev", trials, ratio, seed, None).with_witness(best, f))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GnOutcome<T> {
    Evaluated {
        /// `E_q / RHS`, the constant this function requires.
        constant: T,
        /// The same constant through `E_r^{q/r} φ(D_p E_r^{-p/r})`.
        constant_phi: T,
        e_q: T,
        e_r: T,
        d_p: T,
        /// `ψ⁻¹(D_p^{-r/p} E_r)`
        scale: T,
    },
    /// The scale condition `ψ⁻¹(D_p^{-r/p} E_r) ≥ 1` fails.
    Skipped { argument: T },
}

impl<T: Real> GnOutcome<T> {
    pub fn constant(&self) -> Option<T> {
        match self {
            GnOutcome::Evaluated { constant, .. } => Some(*constant),
            GnOutcome::Skipped { .. } => None,
        }
    }
}

fn check_gn_order<T: Real>(p: T, q: T, r: T) -> Result<()> {
    if !(r > T::zero() && r < q && q < p) {
        return Err(invalid(format!("need 0 < r < q < p, got r = {r}, q = {q}, p = {p}")));
    }
    Ok(())
}

/// Constant required by the weighted Gagliardo–Nirenberg bound
/// `E_q ≤ C (D_p^{q-r} ω(ψ⁻¹(D_p^{-r/p} E_r))^{q-r} E_r^{p-q})^{1/(p-r)}`.
pub fn verify_gn<T: Real>(
    g: &WeightedGraph<T>,
    profile: &DensityProfile<T>,
    toolkit: &ScalingToolkit<T>,
    f: &[T],
    q: T,
    r: T,
) -> Result<GnOutcome<T>> {
    let p = toolkit.p();
    check_gn_order(p, q, r)?;
    check_support(g, &VertexSet::all(g), f)?;
    if g.dim() != toolkit.dim() {
        return Err(Error::Mismatch(format!("graph dimension {} vs toolkit dimension {}", g.dim(), toolkit.dim())));
    }
    let rho = profile.vertex_values(g);
    let e_q = weighted_norm_with(g, &rho, f, q);
    let e_r = weighted_norm_with(g, &rho, f, r);
    let d_p = dirichlet_energy_unchecked(g, f, p);
    let argument = d_p.powf(-r / p) * e_r;
    if argument < toolkit.psi_small(T::one(), r)? {
        return Ok(GnOutcome::Skipped { argument });
    }
    let scale = toolkit.psi_small_inv(argument, r)?;
    let rhs = (d_p.powf(q - r) * toolkit.omega(scale)?.powf(q - r) * e_r.powf(p - q)).powf(T::one() / (p - r));
    let s = d_p * e_r.powf(-p / r);
    let rhs_phi = e_r.powf(q / r) * toolkit.phi_small(s.min(toolkit.phi_domain_max(r)), q, r)?;
    Ok(GnOutcome::Evaluated { constant: e_q / rhs, constant_phi: e_q / rhs_phi, e_q, e_r, d_p, scale })
}

/// Closed form of the Gagliardo–Nirenberg right-hand side for `ρ(s) = s^{-α}`:
/// `(E_r^{h(q) - pα} D_p^{(N-α)(q-r)})^{1/(h(r) - pα)}` with `h(q) = N(p-q) + qp`.
pub fn gn_power_rhs<T: Real>(dim: usize, p: T, alpha: T, q: T, r: T, e_r: T, d_p: T) -> T {
    let n = T::from_usize_lossy(dim);
    let h = |s: T| n * (p - s) + s * p;
    (e_r.powf(h(q) - p * alpha) * d_p.powf((n - alpha) * (q - r))).powf(T::one() / (h(r) - p * alpha))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnSurvey<T> {
    pub constants: Vec<T>,
    /// Largest disagreement between the two evaluations of each constant.
    pub max_form_gap: T,
    pub skipped: usize,
    pub max: T,
    pub median: T,
    pub witness_index: usize,
}

impl<T: Real> GnSurvey<T> {
    pub fn spread(&self) -> T {
        self.max / self.median
    }

    pub fn report(&self, seed: u64, budget: Option<T>) -> InequalityReport<T> {
        InequalityReport::new("gn", self.constants.len() + self.skipped, self.max, seed, budget)
    }
}

/// Required GN constants over `count` seeded random test functions.
pub fn gn_survey<T: Real>(
    g: &WeightedGraph<T>,
    profile: &DensityProfile<T>,
    toolkit: &ScalingToolkit<T>,
    q: T,
    r: T,
    count: usize,
    seed: u64,
) -> Result<GnSurvey<T>> {
    check_gn_order(toolkit.p(), q, r)?;
    let outcomes: Vec<GnOutcome<T>> = (0..count)
        .into_par_iter()
        .map(|i| verify_gn(g, profile, toolkit, &random_test_function(g, seed, i).1, q, r))
        .collect::<Result<_>>()?;
    let mut constants = Vec::new();
    let mut indices = Vec::new();
    let mut max_form_gap = T::zero();
    for (i, o) in outcomes.iter().enumerate() {
        if let GnOutcome::Evaluated { constant, constant_phi, .. } = *o {
            constants.push(constant);
            indices.push(i);
            max_form_gap = max_form_gap.max((constant - constant_phi).abs() / constant);
        }
    }
    if constants.is_empty() {
        return Err(Error::InsufficientData("no test function satisfied the scale condition".into()));
    }
    let mut sorted = constants.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite constants"));
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 { sorted[mid] } else { (sorted[mid - 1] + sorted[mid]) / T::lit(2.0) };
    let (arg, max) = constants
        .iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |(j, m), (i, &c)| if c > m { (i, c) } else { (j, m) });
    Ok(GnSurvey { skipped: count - constants.len(), constants, max_form_gap, max, median, witness_index: indices[arg] })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma21Report<T> {
    pub beta: T,
    /// `(n, Σ_{B(n)} max(d,1)^{-β} m, sum / n^{N-β})`; the ratio is present for `β < N`.
    pub rows: Vec<(usize, T, Option<T>)>,
    /// Max over min of the ratios (for `β < N`).
    pub band: Option<T>,
    /// `S(n_max) / S(n_max / 2)` (for `β > N`).
    pub tail_ratio: Option<T>,
}

/// Partial sums `Σ_{x∈B(n)} max(d(x),1)^{-β} m(x)` on the requested radii.
pub fn lemma21_sums<T: Real>(g: &WeightedGraph<T>, beta: T, ns: &[usize]) -> Result<Lemma21Report<T>> {
    let n_dim = T::from_usize_lossy(g.dim());
    if !(beta > T::zero()) {
        return Err(invalid(format!("need beta > 0, got {beta}")));
    }
    if (beta - n_dim).abs() < T::lit(1e-12) {
        return Err(invalid("beta = N is the logarithmic case"));
    }
    let n_max = ns.iter().copied().max().ok_or_else(|| invalid("empty radius grid"))?;
    if n_max > g.radius() {
        return Err(invalid(format!("radius {n_max} exceeds graph radius {}", g.radius())));
    }
    let mut partial = Vec::with_capacity(n_max + 1);
    let mut acc = T::zero();
    for d in 0..=n_max {
        let weight = T::from_usize_lossy(d.max(1)).powf(-beta);
        acc = acc + weight * g.shell(d).map(|x| g.degree(x)).sum::<T>();
        partial.push(acc);
    }
    let below = beta < n_dim;
    let rows: Vec<(usize, T, Option<T>)> = ns
        .iter()
        .map(|&n| {
            let ratio = below.then(|| partial[n] / T::from_usize_lossy(n).powf(n_dim - beta));
            (n, partial[n], ratio)
        })
        .collect();
    let band = below.then(|| {
        let rs = rows.iter().filter_map(|r| r.2);
        let hi = rs.clone().fold(T::neg_infinity(), T::max);
        let lo = rs.fold(T::infinity(), T::min);
        hi / lo
    });
    let tail_ratio = (!below).then(|| partial[n_max] / partial[(n_max / 2).max(1)]);
    Ok(Lemma21Report { beta, rows, band, tail_ratio })
}
