//! Discrete Dirichlet problem on a Heisenberg lattice.
//!
//! Nodes are `(h a, h b, (h²/2) c)` for integer `(a, b, c)` inside a box.
//! With this central spacing the right translation by `exp(±h X_i)` or
//! `exp(±h Y_i)` maps integer nodes to integer nodes:
//!
//! ```text
//! ·X_i^{±1}: a_i ± 1, c ∓ b_i        ·Y_i^{±1}: b_i ± 1, c ± a_i
//! ```
//!
//! A node is on the boundary when one of its `4n` generator neighbors leaves
//! the box. The energy counts every edge `(p, p·g)` with at least one interior
//! endpoint, so each interior value enters exactly `4n` equally weighted terms
//! and the Gauss–Seidel update (the Fréchet mean of the neighbors) is an exact
//! coordinate minimization.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::cat0::{spider_distance, TargetPoint, TargetSpace};
use crate::domain::DomainBox;
use crate::error::{invalid, Error, Result};
use crate::heisenberg::{Generator, GroupPoint};
use crate::sampling;

const NONE: u32 = u32::MAX;

pub(crate) type Ints = SmallVec<[i64; 5]>;

/// Integer lattice in a coordinate box, with its generator neighbor table.
#[derive(Debug)]
pub struct Lattice {
    n: usize,
    h: f64,
    bounds: DomainBox,
    lo: Vec<i64>,
    dims: Vec<usize>,
    strides: Vec<usize>,
    neighbors: Vec<u32>,
    boundary: Vec<bool>,
    interior: Vec<u32>,
}

impl Lattice {
    /// Builds the lattice of spacing `h` inside `bounds`.
    pub fn new(bounds: DomainBox, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(invalid("geometry.h", format!("spacing must be positive, got {h}")));
        }
        let n = bounds.n();
        let dim = 2 * n + 1;
        let mut lo = Vec::with_capacity(dim);
        let mut dims = Vec::with_capacity(dim);
        for k in 0..dim {
            let unit = if k < 2 * n { h } else { 0.5 * h * h };
            let a = (bounds.lower()[k] / unit - 1e-9).ceil() as i64;
            let b = (bounds.upper()[k] / unit + 1e-9).floor() as i64;
            let count = if b >= a { (b - a + 1) as usize } else { 0 };
            if count == 0 || (k < 2 * n && count < 2) {
                return Err(Error::EmptyLattice(format!(
                    "coordinate {k} holds {count} nodes at spacing {unit}"
                )));
            }
            lo.push(a);
            dims.push(count);
        }
        let total: usize = dims.iter().product();
        if total >= NONE as usize {
            return Err(invalid("geometry.h", format!("{total} nodes exceed the supported size")));
        }
        let mut strides = vec![1usize; dim];
        for k in (0..dim - 1).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        let mut lat = Self {
            n,
            h,
            bounds,
            lo,
            dims,
            strides,
            neighbors: Vec::new(),
            boundary: Vec::new(),
            interior: Vec::new(),
        };
        let deg = 4 * n;
        let mut neighbors = vec![NONE; total * deg];
        let mut boundary = vec![false; total];
        let mut interior = Vec::new();
        for i in 0..total {
            let p = lat.ints(i);
            for g in 0..2 * n {
                for (slot, sign) in [(2 * g, 1), (2 * g + 1, -1)] {
                    let q = right_step(n, &p, g, sign);
                    match lat.index_of(&q) {
                        Some(j) => neighbors[i * deg + slot] = j as u32,
                        None => boundary[i] = true,
                    }
                }
            }
            if !boundary[i] {
                interior.push(i as u32);
            }
        }
        lat.neighbors = neighbors;
        lat.boundary = boundary;
        lat.interior = interior;
        Ok(lat)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn bounds(&self) -> &DomainBox {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary.is_empty()
    }

    /// Node counts per coordinate.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Lebesgue measure attached to each node, `h^{2n+2}/2`.
    pub fn cell_volume(&self) -> f64 {
        0.5 * self.h.powi(2 * self.n as i32 + 2)
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    /// Interior node indices in sweep order.
    pub fn interior(&self) -> &[u32] {
        &self.interior
    }

    /// Integer coordinates `(a, b, c)` of node `i`.
    pub fn ints(&self, i: usize) -> Ints {
        let mut rem = i;
        self.strides
            .iter()
            .zip(&self.lo)
            .map(|(s, lo)| {
                let k = rem / s;
                rem %= s;
                lo + k as i64
            })
            .collect()
    }

    pub fn index_of(&self, p: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for k in 0..p.len() {
            let off = p[k] - self.lo[k];
            if off < 0 || off as usize >= self.dims[k] {
                return None;
            }
            idx += off as usize * self.strides[k];
        }
        Some(idx)
    }

    pub fn point(&self, i: usize) -> GroupPoint {
        let p = self.ints(i);
        let coords: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                if k < 2 * self.n {
                    self.h * v as f64
                } else {
                    0.5 * self.h * self.h * v as f64
                }
            })
            .collect();
        GroupPoint::from_slice(&coords).expect("lattice coordinates are finite")
    }

    /// Node index of `p`, if `p` is (up to roundoff) a lattice node.
    pub fn locate(&self, p: &GroupPoint) -> Option<usize> {
        let n = self.n;
        let ints: Ints = p
            .coords()
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let unit = if k < 2 * n { self.h } else { 0.5 * self.h * self.h };
                (v / unit).round() as i64
            })
            .collect();
        let i = self.index_of(&ints)?;
        (self.point(i).max_abs_diff(p) < 1e-9 * (1.0 + self.h)).then_some(i)
    }

    /// Neighbor `p · exp(±h g)`; `forward` selects the sign.
    pub fn neighbor(&self, i: usize, generator: Generator, forward: bool) -> Option<usize> {
        let slot = 2 * generator.index() + usize::from(!forward);
        let j = self.neighbors[i * 4 * self.n + slot];
        (j != NONE).then_some(j as usize)
    }

    #[inline]
    fn stencil(&self, i: usize) -> &[u32] {
        let deg = 4 * self.n;
        &self.neighbors[i * deg..(i + 1) * deg]
    }

    /// Node reached from `i` by `steps` translations by a generator, on the
    /// given side. Intermediate nodes may leave the box only for left
    /// translations, which are computed in closed form.
    pub fn translate(&self, i: usize, generator: Generator, steps: i64, side: Side) -> Option<usize> {
        match side {
            Side::Right => {
                let mut j = i;
                for _ in 0..steps.unsigned_abs() {
                    j = self.neighbor(j, generator, steps > 0)?;
                }
                Some(j)
            }
            Side::Left => {
                let p = self.ints(i);
                let q = left_translate(self.n, &p, generator.index(), steps);
                self.index_of(&q)
            }
        }
    }
}

/// `p · g^{sign}` in integer coordinates.
fn right_step(n: usize, p: &[i64], g: usize, sign: i64) -> Ints {
    let mut q: Ints = p.iter().copied().collect();
    if g < n {
        q[g] += sign;
        q[2 * n] -= sign * p[n + g];
    } else {
        q[g] += sign;
        q[2 * n] += sign * p[g - n];
    }
    q
}

/// `g^{steps} · p` in integer coordinates.
fn left_translate(n: usize, p: &[i64], g: usize, steps: i64) -> Ints {
    let mut q: Ints = p.iter().copied().collect();
    if g < n {
        q[g] += steps;
        q[2 * n] += steps * p[n + g];
    } else {
        q[g] += steps;
        q[2 * n] -= steps * p[g - n];
    }
    q
}

/// Which side a group translation acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `p ↦ w · p`. Commutes with the right-invariant stencil.
    Left,
    /// `p ↦ p · w`.
    Right,
}

#[derive(Clone, Debug, PartialEq)]
enum Values {
    Euclid { dim: usize, data: Vec<f64> },
    Spider { legs: usize, leg: Vec<u16>, radius: Vec<f64> },
}

/// Target values on every lattice node.
#[derive(Clone, Debug)]
pub struct GridMap {
    lattice: Arc<Lattice>,
    space: TargetSpace,
    values: Values,
}

impl PartialEq for GridMap {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.lattice, &other.lattice) && self.space == other.space && self.values == other.values
    }
}

impl GridMap {
    /// Every node set to the base point of the space.
    pub fn new(lattice: Arc<Lattice>, space: TargetSpace) -> Result<Self> {
        space.validate()?;
        let len = lattice.len();
        let values = match space {
            TargetSpace::Euclidean { dim } => Values::Euclid {
                dim,
                data: vec![0.0; len * dim],
            },
            TargetSpace::Spider { legs } => {
                if legs > u16::MAX as usize {
                    return Err(invalid("target.legs", "too many legs"));
                }
                Values::Spider {
                    legs,
                    leg: vec![0; len],
                    radius: vec![0.0; len],
                }
            }
        };
        Ok(Self { lattice, space, values })
    }

    /// Values given by a closed form at every node.
    pub fn from_fn<F>(lattice: Arc<Lattice>, space: TargetSpace, f: F) -> Result<Self>
    where
        F: Fn(&GroupPoint) -> TargetPoint,
    {
        let mut m = Self::new(lattice, space)?;
        for i in 0..m.lattice.len() {
            let v = f(&m.lattice.point(i));
            m.set(i, &v)?;
        }
        Ok(m)
    }

    /// A real-valued map.
    pub fn from_real<F>(lattice: Arc<Lattice>, f: F) -> Result<Self>
    where
        F: Fn(&GroupPoint) -> f64,
    {
        Self::from_fn(lattice, TargetSpace::Euclidean { dim: 1 }, |p| TargetPoint::real(f(p)))
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn space(&self) -> TargetSpace {
        self.space
    }

    pub fn get(&self, i: usize) -> TargetPoint {
        match &self.values {
            Values::Euclid { dim, data } => TargetPoint::euclidean(&data[i * dim..(i + 1) * dim]),
            Values::Spider { leg, radius, .. } => TargetPoint::Spider {
                leg: leg[i] as usize,
                radius: radius[i],
            },
        }
    }

    /// The first coordinate of a Euclidean value.
    pub fn real(&self, i: usize) -> Option<f64> {
        match &self.values {
            Values::Euclid { dim, data } => Some(data[i * dim]),
            Values::Spider { .. } => None,
        }
    }

    pub fn set(&mut self, i: usize, v: &TargetPoint) -> Result<()> {
        self.space.check(v)?;
        match (&mut self.values, v) {
            (Values::Euclid { dim, data }, TargetPoint::Euclidean(c)) => {
                data[i * *dim..(i + 1) * *dim].copy_from_slice(c);
            }
            (Values::Spider { leg, radius, .. }, TargetPoint::Spider { leg: l, radius: r }) => {
                leg[i] = *l as u16;
                radius[i] = *r;
            }
            _ => unreachable!("checked by the space"),
        }
        Ok(())
    }

    /// Squared target distance between the values at two nodes.
    #[inline]
    pub fn dist_sq(&self, i: usize, j: usize) -> f64 {
        match &self.values {
            Values::Euclid { dim, data } => {
                let (a, b) = (&data[i * dim..(i + 1) * dim], &data[j * dim..(j + 1) * dim]);
                a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
            }
            Values::Spider { leg, radius, .. } => {
                let d = spider_distance(leg[i] as usize, radius[i], leg[j] as usize, radius[j]);
                d * d
            }
        }
    }

    /// Diameter of the boundary values; for Euclidean targets of dimension
    /// above one, the diagonal of their bounding box.
    pub fn boundary_diameter(&self) -> f64 {
        let b: Vec<usize> = (0..self.lattice.len()).filter(|&i| self.lattice.is_boundary(i)).collect();
        if b.is_empty() {
            return 0.0;
        }
        match &self.values {
            Values::Euclid { dim, data } => (0..*dim)
                .map(|k| {
                    let (lo, hi) = b.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                        (lo.min(data[i * dim + k]), hi.max(data[i * dim + k]))
                    });
                    (hi - lo).powi(2)
                })
                .sum::<f64>()
                .sqrt(),
            Values::Spider { legs, leg, radius } => {
                let mut hi = vec![f64::NEG_INFINITY; legs + 1];
                let mut lo = vec![f64::INFINITY; legs + 1];
                for &i in &b {
                    let l = leg[i] as usize;
                    hi[l] = hi[l].max(radius[i]);
                    lo[l] = lo[l].min(radius[i]);
                }
                let used: Vec<usize> = (1..=*legs).filter(|&l| hi[l].is_finite()).collect();
                match used.as_slice() {
                    [] => 0.0,
                    [l] if !hi[0].is_finite() => hi[*l] - lo[*l],
                    _ => {
                        let mut tops: Vec<f64> = used.iter().map(|&l| hi[l]).collect();
                        tops.push(0.0);
                        tops.sort_by(|a, c| c.total_cmp(a));
                        tops[0] + tops[1]
                    }
                }
            }
        }
    }
}

/// `½ · cell/h² · Σ d²(u(p), u(p·g))` over positive generators and edges
/// with at least one interior endpoint.
pub fn discrete_energy(u: &GridMap) -> f64 {
    let lat = &u.lattice;
    let n = lat.n;
    let mut sum = 0.0;
    for i in 0..lat.len() {
        let st = lat.stencil(i);
        for g in 0..2 * n {
            let j = st[2 * g];
            if j != NONE && (!lat.boundary[i] || !lat.boundary[j as usize]) {
                sum += u.dist_sq(i, j as usize);
            }
        }
    }
    0.5 * lat.cell_volume() / (lat.h * lat.h) * sum
}

/// `Σ_g [2u(p) − u(p·g) − u(p·g⁻¹)] / h²` at an interior node.
pub fn discrete_hormander(u: &GridMap, node: usize) -> Result<f64> {
    let lat = &u.lattice;
    if node >= lat.len() {
        return Err(invalid("node", format!("{node} is not a node index")));
    }
    if lat.boundary[node] {
        return Err(Error::BoundaryNode(node));
    }
    let Some(center) = u.real(node) else {
        return Err(Error::KindMismatch { space: "Euclidean" });
    };
    let st = lat.stencil(node);
    let mut s = 0.0;
    for g in 0..2 * lat.n {
        let plus = u.real(st[2 * g] as usize).unwrap_or(0.0);
        let minus = u.real(st[2 * g + 1] as usize).unwrap_or(0.0);
        s += 2.0 * center - plus - minus;
    }
    Ok(s / (lat.h * lat.h))
}

/// One lexicographic Gauss–Seidel sweep over the interior; returns the
/// largest distance a value moved.
pub fn relax_sweep(u: &mut GridMap) -> f64 {
    let lat = Arc::clone(&u.lattice);
    let deg = 4 * lat.n;
    let inv = 1.0 / deg as f64;
    let mut moved = 0.0f64;
    match &mut u.values {
        Values::Euclid { dim, data } => {
            let dim = *dim;
            let mut acc: SmallVec<[f64; 4]> = SmallVec::from_elem(0.0, dim);
            for &p in &lat.interior {
                let p = p as usize;
                acc.iter_mut().for_each(|a| *a = 0.0);
                for &q in lat.stencil(p) {
                    let q = q as usize;
                    for k in 0..dim {
                        acc[k] += data[q * dim + k];
                    }
                }
                let mut step = 0.0;
                for k in 0..dim {
                    let new = acc[k] * inv;
                    let d = new - data[p * dim + k];
                    step += d * d;
                    data[p * dim + k] = new;
                }
                moved = moved.max(step.sqrt());
            }
        }
        Values::Spider { legs, leg, radius } => {
            let mut sums = vec![0.0f64; *legs + 1];
            for &p in &lat.interior {
                let p = p as usize;
                sums.iter_mut().for_each(|s| *s = 0.0);
                let mut all = 0.0;
                for &q in lat.stencil(p) {
                    let q = q as usize;
                    sums[leg[q] as usize] += radius[q];
                    all += radius[q];
                }
                let (l, r) = crate::cat0::spider_mean_from_sums(&sums, all, deg as f64);
                let d = spider_distance(leg[p] as usize, radius[p], l, r);
                leg[p] = l as u16;
                radius[p] = r;
                moved = moved.max(d);
            }
        }
    }
    moved
}

/// Interior initialization for [`solve_dirichlet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// The Fréchet mean of all boundary values.
    BoundaryMean,
    /// Independent random boundary values, chosen per node from the seed.
    RandomBoundaryValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Convergence threshold on the per-sweep movement; the default is
    /// `1e-10 ×` the boundary diameter.
    pub tol: Option<f64>,
    pub max_sweeps: usize,
    pub seed: u64,
    pub init: InitialGuess,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: None,
            max_sweeps: 100_000,
            seed: 0,
            init: InitialGuess::BoundaryMean,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub map: GridMap,
    /// Energy before the first sweep and after every sweep.
    pub energy_trace: Vec<f64>,
    pub sweeps: usize,
    pub final_movement: f64,
    pub tol: f64,
}

/// Solves the Dirichlet problem with the boundary values of `boundary`.
pub fn solve_dirichlet(boundary: &GridMap, config: &SolverConfig) -> Result<Solution> {
    let lat = Arc::clone(&boundary.lattice);
    let space = boundary.space;
    if lat.interior.is_empty() {
        return Err(Error::EmptyLattice("the lattice has no interior nodes".into()));
    }
    let tol = match config.tol {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => return Err(invalid("numerics.tol", format!("tolerance must be positive, got {t}"))),
        None => {
            let d = boundary.boundary_diameter();
            if d > 0.0 {
                1e-10 * d
            } else {
                1e-14
            }
        }
    };
    let mut u = boundary.clone();
    let bnodes: Vec<usize> = (0..lat.len()).filter(|&i| lat.boundary[i]).collect();
    match config.init {
        InitialGuess::BoundaryMean => {
            let pts: Vec<TargetPoint> = bnodes.iter().map(|&i| boundary.get(i)).collect();
            let mean = crate::cat0::frechet_mean(&space, &pts, &vec![1.0; pts.len()])?;
            for &p in &lat.interior {
                u.set(p as usize, &mean)?;
            }
        }
        InitialGuess::RandomBoundaryValue => {
            let mut rng = sampling::stream(config.seed);
            for &p in &lat.interior {
                let v = boundary.get(bnodes[rng.random_range(0..bnodes.len())]);
                u.set(p as usize, &v)?;
            }
        }
    }
    let mut trace = vec![discrete_energy(&u)];
    let mut moved = f64::INFINITY;
    for sweep in 1..=config.max_sweeps {
        moved = relax_sweep(&mut u);
        trace.push(discrete_energy(&u));
        if moved < tol {
            return Ok(Solution {
                map: u,
                energy_trace: trace,
                sweeps: sweep,
                final_movement: moved,
                tol,
            });
        }
    }
    Err(Error::NonConvergence {
        sweeps: config.max_sweeps,
        movement: moved,
    })
}

/// A map defined on part of the lattice.
#[derive(Clone, Debug)]
pub struct PartialGridMap {
    pub lattice: Arc<Lattice>,
    pub space: TargetSpace,
    pub values: Vec<Option<TargetPoint>>,
}

impl PartialEq for PartialGridMap {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.lattice, &other.lattice) && self.space == other.space && self.values == other.values
    }
}

impl PartialGridMap {
    pub fn defined(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

impl From<&GridMap> for PartialGridMap {
    fn from(u: &GridMap) -> Self {
        Self {
            lattice: Arc::clone(&u.lattice),
            space: u.space,
            values: (0..u.lattice.len()).map(|i| Some(u.get(i))).collect(),
        }
    }
}

/// `u_w(p) = u(w · p)` (left) or `u(p · w)` (right) with `w = g^{steps}`,
/// defined where the translated node exists and `u` is defined there.
pub fn translate_map(u: &PartialGridMap, generator: Generator, steps: i64, side: Side) -> Result<PartialGridMap> {
    let lat = &u.lattice;
    Generator::new(lat.n, generator.index())?;
    let values: Vec<Option<TargetPoint>> = (0..lat.len())
        .map(|i| {
            lat.translate(i, generator, steps, side)
                .and_then(|j| u.values[j].clone())
        })
        .collect();
    if values.iter().all(|v| v.is_none()) {
        return Err(Error::EmptyLattice("the translated map has an empty domain".into()));
    }
    Ok(PartialGridMap {
        lattice: Arc::clone(lat),
        space: u.space,
        values,
    })
}

/// Nodes where the subsolution inequality is expected: `p` and its
/// translate are both interior, and every neighbor of `p` has a translate.
pub fn admissible_mask(lattice: &Lattice, generator: Generator, steps: i64, side: Side) -> Vec<bool> {
    (0..lattice.len())
        .map(|i| {
            !lattice.boundary[i]
                && lattice
                    .translate(i, generator, steps, side)
                    .is_some_and(|j| !lattice.boundary[j])
                && lattice
                    .stencil(i)
                    .iter()
                    .all(|&q| lattice.translate(q as usize, generator, steps, side).is_some())
        })
        .collect()
}

/// Discrete weak-subsolution pairings for a suite of test fields.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubsolutionReport {
    /// `Σ_edges (η(q) − η(p))(f(q) − f(p)) · cell/h²` per test field.
    pub pairings: Vec<f64>,
    /// `Σ_edges |η(q) − η(p)| |f(q) − f(p)| · cell/h²` per test field.
    pub scales: Vec<f64>,
    pub max_pairing: f64,
    /// Largest `pairing / scale` (zero when every scale vanishes).
    pub max_ratio: f64,
}

/// `f(p) = d²(u(p), u_w(p))` on the admissible set, zero elsewhere.
pub fn translation_defect(u: &GridMap, generator: Generator, steps: i64, side: Side) -> Result<(Vec<f64>, Vec<bool>)> {
    let lat = &u.lattice;
    Generator::new(lat.n, generator.index())?;
    let mask = admissible_mask(lat, generator, steps, side);
    let mut f = vec![0.0; lat.len()];
    for i in 0..lat.len() {
        // Neighbors of admissible nodes have defined translates.
        if let Some(j) = lat.translate(i, generator, steps, side) {
            f[i] = u.dist_sq(i, j);
        }
    }
    Ok((f, mask))
}

pub fn subsolution_residual(
    u: &GridMap,
    generator: Generator,
    steps: i64,
    side: Side,
    etas: &[Vec<f64>],
) -> Result<SubsolutionReport> {
    let lat = &u.lattice;
    let (f, mask) = translation_defect(u, generator, steps, side)?;
    let factor = lat.cell_volume() / (lat.h * lat.h);
    let mut pairings = Vec::with_capacity(etas.len());
    let mut scales = Vec::with_capacity(etas.len());
    for (k, eta) in etas.iter().enumerate() {
        if eta.len() != lat.len() {
            return Err(Error::DimensionMismatch {
                expected: lat.len(),
                found: eta.len(),
            });
        }
        for (i, &e) in eta.iter().enumerate() {
            if e < 0.0 || !e.is_finite() {
                return Err(invalid("eta", format!("test field {k} is {e} at node {i}")));
            }
            if e > 0.0 && !mask[i] {
                return Err(Error::SupportViolation(format!(
                    "test field {k} is positive at node {i}, outside the admissible set"
                )));
            }
        }
        let (mut pair, mut scale) = (0.0, 0.0);
        for i in 0..lat.len() {
            let st = lat.stencil(i);
            for g in 0..2 * lat.n {
                let j = st[2 * g];
                if j == NONE {
                    continue;
                }
                let j = j as usize;
                let de = eta[j] - eta[i];
                if de != 0.0 {
                    let df = f[j] - f[i];
                    pair += de * df;
                    scale += (de * df).abs();
                }
            }
        }
        pairings.push(factor * pair);
        scales.push(factor * scale);
    }
    let max_pairing = pairings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_ratio = pairings
        .iter()
        .zip(&scales)
        .map(|(p, s)| if *s > 0.0 { p / s } else { 0.0 })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SubsolutionReport {
        pairings,
        scales,
        max_pairing,
        max_ratio,
    })
}

/// Random smooth bumps `(1 − ρ²)²₊`, truncated to the nodes where `mask` holds.
///
/// Each bump is centered at a random masked node, with horizontal radius
/// drawn from `radius_range` and central radius its square.
pub fn random_bumps(lattice: &Lattice, mask: &[bool], count: usize, radius_range: (f64, f64), seed: u64) -> Result<Vec<Vec<f64>>> {
    let candidates: Vec<usize> = (0..lattice.len()).filter(|&i| mask[i]).collect();
    if candidates.is_empty() {
        return Err(Error::EmptyLattice("no admissible nodes for test fields".into()));
    }
    let (r0, r1) = radius_range;
    if !(r0 > 0.0 && r1 >= r0) {
        return Err(invalid("radius_range", format!("need 0 < min <= max, got ({r0}, {r1})")));
    }
    let mut rng = sampling::stream(seed);
    let n = lattice.n;
    let points: Vec<GroupPoint> = (0..lattice.len()).map(|i| lattice.point(i)).collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let c = &points[candidates[rng.random_range(0..candidates.len())]];
        let r = r0 + (r1 - r0) * rng.random::<f64>();
        let eta: Vec<f64> = points
            .iter()
            .zip(mask)
            .map(|(p, &ok)| {
                if !ok {
                    return 0.0;
                }
                let w = crate::heisenberg::relative(c, p);
                let mut rho2 = w.horizontal_norm_sq() / (r * r);
                rho2 += (w.t() / (r * r)).powi(2);
                let _ = n;
                if rho2 < 1.0 {
                    (1.0 - rho2).powi(2)
                } else {
                    0.0
                }
            })
            .collect();
        out.push(eta);
    }
    Ok(out)
}
