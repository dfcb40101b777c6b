//! Truncated integer lattices `B(R) = {x ∈ ℤᴺ : ‖x‖₁ ≤ R}` stored in CSR form.
//!
//! Vertices are ordered by ℓ¹ norm and then lexicographically by coordinates,
//! so the origin is vertex `0` and every distance shell is a contiguous index
//! range. Adjacency is stored as ordered pairs: each undirected edge appears
//! once in the row of each endpoint. Lattice neighbours that fall outside the
//! ball are not vertices; their summed weight is kept per vertex as the
//! *cut weight*, which is where the zero exterior enters the operator.

use std::collections::{HashMap, VecDeque};
use std::io::{self, Write};
use std::ops::Range;

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

pub const MAX_DIMENSION: usize = 4;

/// A single custom weight entry between two adjacent lattice points.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightEntry<T> {
    pub from: Vec<i64>,
    pub to: Vec<i64>,
    pub weight: T,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum WeightScheme<T> {
    /// Every lattice edge has weight one.
    #[default]
    Unit,
    /// Listed edges take the given weight; unlisted edges keep weight one.
    /// Either orientation may be listed; if both are, they must agree.
    Custom(Vec<WeightEntry<T>>),
}

#[derive(Debug, Clone)]
pub struct WeightedGraph<T> {
    dim: usize,
    radius: usize,
    coords: Vec<i64>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<T>,
    cut_weight: Vec<T>,
    degree: Vec<T>,
    dist: Vec<usize>,
    shell_start: Vec<usize>,
}

fn l1(x: &[i64]) -> i64 {
    x.iter().map(|c| c.abs()).sum()
}

fn enumerate_ball(dim: usize, radius: i64) -> Vec<Vec<i64>> {
    fn rec(dim: usize, budget: i64, prefix: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if prefix.len() == dim {
            out.push(prefix.clone());
            return;
        }
        for c in -budget..=budget {
            prefix.push(c);
            rec(dim, budget - c.abs(), prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, radius, &mut Vec::with_capacity(dim), &mut out);
    out.sort_by(|a, b| l1(a).cmp(&l1(b)).then_with(|| a.cmp(b)));
    out
}

struct WeightLookup<T> {
    table: HashMap<(Vec<i64>, Vec<i64>), T>,
}

impl<T: Real> WeightLookup<T> {
    fn new(dim: usize, scheme: &WeightScheme<T>) -> Result<Self> {
        let mut table: HashMap<(Vec<i64>, Vec<i64>), T> = HashMap::new();
        if let WeightScheme::Custom(entries) = scheme {
            for e in entries {
                if e.from.len() != dim || e.to.len() != dim {
                    return Err(invalid(format!(
                        "weight entry {:?} -> {:?} has wrong dimension (expected {dim})",
                        e.from, e.to
                    )));
                }
                let gap: i64 = e.from.iter().zip(&e.to).map(|(a, b)| (a - b).abs()).sum();
                if gap != 1 {
                    return Err(invalid(format!("weight entry {:?} -> {:?} is not a lattice edge", e.from, e.to)));
                }
                if !(e.weight > T::zero()) || !e.weight.is_finite() {
                    return Err(Error::NonpositiveWeight {
                        from: e.from.clone(),
                        to: e.to.clone(),
                        weight: e.weight.as_f64(),
                    });
                }
                let reverse = (e.to.clone(), e.from.clone());
                if let Some(&w) = table.get(&reverse) {
                    if w != e.weight {
                        return Err(Error::AsymmetricWeight {
                            from: e.from.clone(),
                            to: e.to.clone(),
                            forward: e.weight.as_f64(),
                            backward: w.as_f64(),
                        });
                    }
                }
                if let Some(&w) = table.get(&(e.from.clone(), e.to.clone())) {
                    if w != e.weight {
                        return Err(invalid(format!(
                            "conflicting duplicate weight entries for {:?} -> {:?}",
                            e.from, e.to
                        )));
                    }
                }
                table.insert((e.from.clone(), e.to.clone()), e.weight);
                table.insert(reverse, e.weight);
            }
        }
        Ok(Self { table })
    }

    fn get(&self, from: &[i64], to: &[i64]) -> T {
        self.table.get(&(from.to_vec(), to.to_vec())).copied().unwrap_or_else(T::one)
    }
}

/// Builds the ball `{x ∈ ℤᴺ : ‖x‖₁ ≤ R}` with nearest-neighbour edges.
pub fn build_lattice_ball<T: Real>(dim: usize, radius: usize, scheme: &WeightScheme<T>) -> Result<WeightedGraph<T>> {
    if dim == 0 || dim > MAX_DIMENSION {
        return Err(invalid(format!("dimension must be in 1..={MAX_DIMENSION}, got {dim}")));
    }
    if radius == 0 {
        return Err(invalid("radius must be positive"));
    }
    let lookup = WeightLookup::new(dim, scheme)?;
    let points = enumerate_ball(dim, radius as i64);
    let n = points.len();
    let index: HashMap<&[i64], usize> = points.iter().enumerate().map(|(i, p)| (p.as_slice(), i)).collect();

    let mut offsets = Vec::with_capacity(n + 1);
    let mut neighbors = Vec::with_capacity(2 * dim * n);
    let mut weights = Vec::with_capacity(2 * dim * n);
    let mut cut_weight = vec![T::zero(); n];
    let mut degree = vec![T::zero(); n];
    offsets.push(0);

    let mut row: Vec<(usize, T)> = Vec::with_capacity(2 * dim);
    for (i, x) in points.iter().enumerate() {
        row.clear();
        let mut y = x.clone();
        for axis in 0..dim {
            for step in [-1i64, 1] {
                y[axis] = x[axis] + step;
                let w = lookup.get(x, &y);
                match index.get(y.as_slice()) {
                    Some(&j) => row.push((j, w)),
                    None => cut_weight[i] = cut_weight[i] + w,
                }
            }
            y[axis] = x[axis];
        }
        row.sort_by_key(|&(j, _)| j);
        for &(j, w) in &row {
            neighbors.push(j);
            weights.push(w);
            degree[i] = degree[i] + w;
        }
        offsets.push(neighbors.len());
    }

    let dist = bfs_distances(&offsets, &neighbors, 0);
    let mut shell_start = vec![0usize; radius + 2];
    for &d in &dist {
        shell_start[d + 1] += 1;
    }
    for r in 1..shell_start.len() {
        shell_start[r] += shell_start[r - 1];
    }

    let coords = points.into_iter().flatten().collect();
    let g = WeightedGraph { dim, radius, coords, offsets, neighbors, weights, cut_weight, degree, dist, shell_start };
    let (lo, hi) = g.degree_bounds();
    if lo <= T::zero() {
        return Err(Error::DegenerateDegree(g.degree.iter().position(|&m| m <= T::zero()).unwrap_or(0)));
    }
    // Finite graphs always have inf m > 0; flag tables that are nearly degenerate.
    if lo < T::lit(1e-6) * hi {
        log::warn!("vertex measure nearly degenerate: min m = {lo}, max m = {hi}");
    }
    Ok(g)
}

fn bfs_distances(offsets: &[usize], neighbors: &[usize], root: usize) -> Vec<usize> {
    let n = offsets.len() - 1;
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    dist[root] = 0;
    queue.push_back(root);
    while let Some(x) = queue.pop_front() {
        for &y in &neighbors[offsets[x]..offsets[x + 1]] {
            if dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    dist
}

impl<T: Real> WeightedGraph<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    /// Index of the root vertex `x₀` (the lattice origin).
    pub fn origin(&self) -> usize {
        0
    }

    /// Number of stored directed adjacency entries.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn coords(&self, x: usize) -> &[i64] {
        &self.coords[x * self.dim..(x + 1) * self.dim]
    }

    /// Index of a lattice point, if it lies in the ball.
    pub fn index_of(&self, point: &[i64]) -> Option<usize> {
        if point.len() != self.dim || l1(point) > self.radius as i64 {
            return None;
        }
        let d = l1(point) as usize;
        let range = self.shell(d);
        let shell = &self.coords[range.start * self.dim..range.end * self.dim];
        shell.chunks(self.dim).position(|c| c == point).map(|k| range.start + k)
    }

    /// Neighbours of `x` with edge weights, in increasing index order.
    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.offsets[x]..self.offsets[x + 1];
        self.neighbors[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    pub(crate) fn row(&self, x: usize) -> (&[usize], &[T]) {
        let r = self.offsets[x]..self.offsets[x + 1];
        (&self.neighbors[r.clone()], &self.weights[r])
    }

    /// Weight `w(x, y)`, zero when `y` is not adjacent to `x`.
    pub fn weight(&self, x: usize, y: usize) -> T {
        let (nbrs, ws) = self.row(x);
        match nbrs.binary_search(&y) {
            Ok(k) => ws[k],
            Err(_) => T::zero(),
        }
    }

    /// Vertex measure `m(x) = Σ_{y∼x} w(x, y)` over neighbours inside the ball.
    pub fn degree(&self, x: usize) -> T {
        self.degree[x]
    }

    pub fn degrees(&self) -> &[T] {
        &self.degree
    }

    /// Summed weight of edges from `x` to lattice points outside the ball.
    pub fn cut_weight(&self, x: usize) -> T {
        self.cut_weight[x]
    }

    pub fn cut_weights(&self) -> &[T] {
        &self.cut_weight
    }

    /// Combinatorial distance from the origin.
    pub fn dist(&self, x: usize) -> usize {
        self.dist[x]
    }

    pub fn distances(&self) -> &[usize] {
        &self.dist
    }

    /// Index range of the vertices at distance exactly `r`.
    pub fn shell(&self, r: usize) -> Range<usize> {
        if r > self.radius {
            return self.len()..self.len();
        }
        self.shell_start[r]..self.shell_start[r + 1]
    }

    /// Index range of the ball `B(r)`.
    pub fn ball_range(&self, r: usize) -> Range<usize> {
        0..self.shell_start[(r + 1).min(self.radius + 1)]
    }

    pub fn ball(&self, r: usize) -> VertexSet<T> {
        let indices: Vec<usize> = self.ball_range(r).collect();
        let measure = indices.iter().map(|&x| self.degree[x]).sum();
        VertexSet { indices, measure }
    }

    pub fn degree_bounds(&self) -> (T, T) {
        self.degree.iter().fold((T::infinity(), T::zero()), |(lo, hi), &m| (lo.min(m), hi.max(m)))
    }

    /// `μ(U) = Σ_{x∈U} m(x)`.
    pub fn measure(&self, set: &VertexSet<T>) -> T {
        set.measure
    }

    /// Writes the plain-text dump: a header `N R vertex_count edge_count`,
    /// one `index coords... m d` line per vertex, then one `src dst w` line per
    /// directed edge.
    pub fn write_dump<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{} {} {} {}", self.dim, self.radius, self.len(), self.edge_count())?;
        for x in 0..self.len() {
            write!(out, "{x}")?;
            for c in self.coords(x) {
                write!(out, " {c}")?;
            }
            writeln!(out, " {} {}", self.degree[x], self.dist[x])?;
        }
        for x in 0..self.len() {
            for (y, w) in self.neighbors(x) {
                writeln!(out, "{x} {y} {w}")?;
            }
        }
        Ok(())
    }

    pub fn dump_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_dump(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("dump is ASCII")
    }
}

/// A finite vertex set with its cached measure.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexSet<T> {
    indices: Vec<usize>,
    measure: T,
}

impl<T: Real> VertexSet<T> {
    pub fn new(g: &WeightedGraph<T>, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&x| x >= g.len()) {
            return Err(Error::VertexOutOfBounds(bad));
        }
        let measure = indices.iter().map(|&x| g.degree(x)).sum();
        Ok(Self { indices, measure })
    }

    pub fn all(g: &WeightedGraph<T>) -> Self {
        Self { indices: (0..g.len()).collect(), measure: g.degrees().iter().copied().sum() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.indices.binary_search(&x).is_ok()
    }

    pub fn measure(&self) -> T {
        self.measure
    }

    pub fn union(&self, g: &WeightedGraph<T>, other: &Self) -> Self {
        let mut idx = self.indices.clone();
        idx.extend_from_slice(&other.indices);
        Self::new(g, idx).expect("indices already validated")
    }
}

/// `μ(B(r))` for `r = 0..=R` together with the extremes of `μ(B(r)) / r^N`
/// over `r ∈ [R/2, R]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeProfile<T> {
    pub measures: Vec<(usize, T)>,
    pub ratio_min: T,
    pub ratio_max: T,
}

pub fn ball_volume_profile<T: Real>(g: &WeightedGraph<T>) -> VolumeProfile<T> {
    let mut measures = Vec::with_capacity(g.radius() + 1);
    let mut acc = T::zero();
    for r in 0..=g.radius() {
        acc = acc + g.shell(r).map(|x| g.degree(x)).sum::<T>();
        measures.push((r, acc));
    }
    let lo = (g.radius() / 2).max(1);
    let n = T::from_usize_lossy(g.dim());
    let (ratio_min, ratio_max) = measures[lo..]
        .iter()
        .map(|&(r, mu)| mu / T::from_usize_lossy(r).powf(n))
        .fold((T::infinity(), T::neg_infinity()), |(a, b), v| (a.min(v), b.max(v)));
    VolumeProfile { measures, ratio_min, ratio_max }
}

/// `μ(∂U)`: total weight of graph edges with exactly one endpoint in `U`.
/// Edges to the truncated exterior are not graph edges and do not count.
pub fn boundary_measure<T: Real>(g: &WeightedGraph<T>, set: &VertexSet<T>) -> T {
    let mut member = vec![false; g.len()];
    for &x in set.indices() {
        member[x] = true;
    }
    set.indices().iter().flat_map(|&x| g.neighbors(x)).filter(|&(y, _)| !member[y]).map(|(_, w)| w).sum()
}
