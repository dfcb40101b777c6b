//! The graph p-Laplacian and the functionals evaluated on fields.
//!
//! Fields are per-vertex slices indexed like the graph. Outside the ball the
//! field is zero: an edge to the exterior contributes `φ(0 - u(x)) w` to the
//! operator and `|u(x)|^p w` twice (once per orientation) to the energy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::density::DensityProfile;
use crate::error::{invalid, Error, Result};
use crate::graph::WeightedGraph;
use crate::scalar::{signed_pow, Real};

/// Below this many vertices the per-vertex passes run sequentially.
const PAR_MIN_LEN: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState<T> {
    pub u: Vec<T>,
    pub t: T,
}

impl<T: Real> FieldState<T> {
    pub fn new(u: Vec<T>) -> Self {
        Self { u, t: T::zero() }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![T::zero(); n])
    }

    pub fn linf(&self) -> T {
        linf(&self.u)
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|v| v.is_finite())
    }
}

pub fn linf<T: Real>(u: &[T]) -> T {
    u.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// `z ↦ |z|^{p-2} z`, specialised for the common exponents.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Flux<T> {
    Linear,
    Sqrt,
    Abs,
    General(T),
}

impl<T: Real> Flux<T> {
    pub(crate) fn new(p: T) -> Self {
        let e = p - T::lit(2.0);
        if e == T::zero() {
            Flux::Linear
        } else if e == T::lit(0.5) {
            Flux::Sqrt
        } else if e == T::one() {
            Flux::Abs
        } else {
            Flux::General(e)
        }
    }

    /// `|z|^{p-2}` (the continuous extension `0` at `z = 0` when `p > 2`).
    #[inline]
    pub(crate) fn modulus(self, z: T) -> T {
        match self {
            Flux::Linear => T::one(),
            Flux::Sqrt => z.abs().sqrt(),
            Flux::Abs => z.abs(),
            Flux::General(e) => {
                if z == T::zero() {
                    T::zero()
                } else {
                    z.abs().powf(e)
                }
            }
        }
    }

    #[inline]
    pub(crate) fn apply(self, z: T) -> T {
        match self {
            Flux::Linear => z,
            Flux::General(e) => signed_pow(z, e + T::one()),
            _ => self.modulus(z) * z,
        }
    }
}

fn check_len<T>(g: &WeightedGraph<T>, u: &[T]) -> Result<()>
where
    T: Real,
{
    if u.len() != g.len() {
        return Err(invalid(format!("field has {} values, graph has {} vertices", u.len(), g.len())));
    }
    Ok(())
}

/// `Δₚu(x) = (1/m(x)) Σ_{y∼x} |u(y)-u(x)|^{p-2} (u(y)-u(x)) w(x,y)`, with
/// exterior neighbours held at zero.
pub fn p_laplacian<T: Real>(g: &WeightedGraph<T>, u: &[T], p: T) -> Result<Vec<T>> {
    if !(p > T::one()) {
        return Err(invalid(format!("p-Laplacian needs p > 1, got {p}")));
    }
    check_len(g, u)?;
    if let Some(x) = (0..g.len()).find(|&x| !(g.degree(x) > T::zero())) {
        return Err(Error::DegenerateDegree(x));
    }
    let mut out = vec![T::zero(); g.len()];
    p_laplacian_into(g, u, Flux::new(p), &mut out);
    Ok(out)
}

#[inline]
fn vertex_flux<T: Real>(g: &WeightedGraph<T>, u: &[T], flux: Flux<T>, x: usize) -> T {
    let (nbrs, ws) = g.row(x);
    let ux = u[x];
    let mut acc = flux.apply(-ux) * g.cut_weight(x);
    for (&y, &w) in nbrs.iter().zip(ws) {
        acc = acc + flux.apply(u[y] - ux) * w;
    }
    acc
}

pub(crate) fn p_laplacian_into<T: Real>(g: &WeightedGraph<T>, u: &[T], flux: Flux<T>, out: &mut [T]) {
    out.par_iter_mut()
        .with_min_len(PAR_MIN_LEN)
        .enumerate()
        .for_each(|(x, o)| *o = vertex_flux(g, u, flux, x) / g.degree(x));
}

/// Per-vertex `(Δₚu(x), Σ_y w(x,y) max(|u(y)-u(x)|, floor)^{p-2})`, exterior
/// edges included in both.
pub(crate) fn laplacian_and_stiffness<T: Real>(
    g: &WeightedGraph<T>,
    u: &[T],
    flux: Flux<T>,
    floor: T,
    lap: &mut [T],
    stiff: &mut [T],
) {
    lap.par_iter_mut().zip(stiff.par_iter_mut()).with_min_len(PAR_MIN_LEN).enumerate().for_each(|(x, (l, s))| {
        let (nbrs, ws) = g.row(x);
        let ux = u[x];
        let cw = g.cut_weight(x);
        let mut acc = flux.apply(-ux) * cw;
        let mut k = flux.modulus(ux.abs().max(floor)) * cw;
        for (&y, &w) in nbrs.iter().zip(ws) {
            let z = u[y] - ux;
            acc = acc + flux.apply(z) * w;
            k = k + flux.modulus(z.abs().max(floor)) * w;
        }
        *l = acc / g.degree(x);
        *s = k;
    });
}

/// `D_p = Σ_{x,y} |u(y)-u(x)|^p w(x,y)` over ordered pairs, so each edge
/// counts twice; exterior edges contribute `2 |u(x)|^p w`.
pub fn dirichlet_energy<T: Real>(g: &WeightedGraph<T>, u: &[T], p: T) -> Result<T> {
    if !(p >= T::one()) {
        return Err(invalid(format!("Dirichlet energy needs p >= 1, got {p}")));
    }
    check_len(g, u)?;
    Ok(dirichlet_energy_unchecked(g, u, p))
}

pub(crate) fn dirichlet_energy_unchecked<T: Real>(g: &WeightedGraph<T>, u: &[T], p: T) -> T {
    let two = T::lit(2.0);
    let mut total = T::zero();
    for x in 0..g.len() {
        let (nbrs, ws) = g.row(x);
        let ux = u[x];
        let mut acc = two * g.cut_weight(x) * ux.abs().powf(p);
        for (&y, &w) in nbrs.iter().zip(ws) {
            if y > x {
                acc = acc + two * (u[y] - ux).abs().powf(p) * w;
            }
        }
        total = total + acc;
    }
    total
}

/// `E_q = Σ_x |u(x)|^q ρ(d(x)) m(x)`.
pub fn weighted_norm<T: Real>(g: &WeightedGraph<T>, profile: &DensityProfile<T>, u: &[T], q: T) -> Result<T> {
    if !(q > T::zero()) {
        return Err(invalid(format!("weighted norm needs q > 0, got {q}")));
    }
    check_len(g, u)?;
    let rho = profile.vertex_values(g);
    Ok(weighted_norm_with(g, &rho, u, q))
}

/// `E_q` with precomputed per-vertex density values.
pub fn weighted_norm_with<T: Real>(g: &WeightedGraph<T>, rho: &[T], u: &[T], q: T) -> T {
    let one = T::one();
    let two = T::lit(2.0);
    u.iter()
        .zip(rho)
        .zip(g.degrees())
        .map(|((&v, &r), &m)| {
            let a = v.abs();
            let pow = if q == one {
                a
            } else if q == two {
                a * a
            } else {
                a.powf(q)
            };
            pow * r * m
        })
        .sum()
}

/// Rate at which `Σ ρ u m` leaves through exterior edges: `Σ_x w_cut(x) |u(x)|^{p-2} u(x)`.
pub fn boundary_outflow<T: Real>(g: &WeightedGraph<T>, u: &[T], p: T) -> T {
    let flux = Flux::new(p);
    g.cut_weights().iter().zip(u).filter(|(&w, _)| w > T::zero()).map(|(&w, &v)| w * flux.apply(v)).sum()
}

/// `Σ_x m(x) Δₚu(x)`; equals `-boundary_outflow` (interior fluxes cancel).
pub fn divergence_sum<T: Real>(g: &WeightedGraph<T>, u: &[T], p: T) -> Result<T> {
    let lap = p_laplacian(g, u, p)?;
    Ok(lap.iter().zip(g.degrees()).map(|(&l, &m)| l * m).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaccioppoliReport<T> {
    /// Minimum of LHS/RHS over pairs with RHS > 0 (`+∞` when there are none).
    pub min_ratio: T,
    /// Pair attaining the minimum.
    pub witness: Option<(T, T)>,
    pub counted: usize,
    pub excluded: usize,
    /// Every excluded pair had LHS ≥ 0.
    pub sign_ok: bool,
}

/// Pointwise inequality
/// `|b-a|^{p-2}(b-a)((b-h)₊^q - (a-h)₊^q) ≥ C |(b-h)₊^{(q-1+p)/p} - (a-h)₊^{(q-1+p)/p}|^p`
/// evaluated on sampled pairs `(a, b) = (u(x), u(y))`.
pub fn caccioppoli_ratio<T: Real>(samples: &[(T, T)], h: T, q: T, p: T) -> Result<CaccioppoliReport<T>> {
    if !(q > T::zero()) {
        return Err(invalid(format!("need q > 0, got {q}")));
    }
    if !(p > T::one()) || !(h >= T::zero()) {
        return Err(invalid(format!("need p > 1 and h >= 0, got p = {p}, h = {h}")));
    }
    let flux = Flux::new(p);
    let s = (q - T::one() + p) / p;
    let pos = |v: T| (v - h).max(T::zero());
    let mut report =
        CaccioppoliReport { min_ratio: T::infinity(), witness: None, counted: 0, excluded: 0, sign_ok: true };
    for &(a, b) in samples {
        let (ah, bh) = (pos(a), pos(b));
        let lhs = flux.apply(b - a) * (bh.powf(q) - ah.powf(q));
        let rhs = (bh.powf(s) - ah.powf(s)).abs().powf(p);
        if rhs > T::zero() {
            report.counted += 1;
            let ratio = lhs / rhs;
            if ratio < report.min_ratio {
                report.min_ratio = ratio;
                report.witness = Some((a, b));
            }
        } else {
            report.excluded += 1;
            report.sign_ok &= lhs >= T::zero();
        }
    }
    Ok(report)
}

/// Uniform pairs in `[lo, hi)²` from a seeded generator.
pub fn sample_pairs<T: Real>(count: usize, lo: T, hi: T, seed: u64) -> Vec<(T, T)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (lo.as_f64(), hi.as_f64());
    (0..count).map(|_| (T::lit(rng.gen_range(lo..hi)), T::lit(rng.gen_range(lo..hi)))).collect()
}
