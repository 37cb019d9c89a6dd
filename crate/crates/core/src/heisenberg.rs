//! The Heisenberg group H^n in global exponential coordinates (x, y, t).
//!
//! The group law is
//!
//! ```text
//! (x, y, t) · (u, v, s) = (x + u, y + v, t + s + ½(x·v − y·u))
//! ```
//!
//! and the left-invariant horizontal frame is `X_i = ∂x_i − ½ y_i ∂t`,
//! `Y_i = ∂y_i + ½ x_i ∂t`. The flow of a left-invariant field is right
//! multiplication by the corresponding one-parameter subgroup, which is how
//! [`flow_step`] is implemented.

use rand::Rng;
use smallvec::SmallVec;

use crate::error::{invalid, Error, Result};
use crate::sampling::{self, MeanEstimate};

pub(crate) type Coords = SmallVec<[f64; 5]>;

/// A point of H^n. Coordinates are stored as `(x_1..x_n, y_1..y_n, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupPoint {
    n: usize,
    coords: Coords,
}

impl GroupPoint {
    /// Builds a point from its three blocks. `x` and `y` must have equal length.
    pub fn new(x: &[f64], y: &[f64], t: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        if x.is_empty() {
            return Err(invalid("n", "the Heisenberg group needs n >= 1"));
        }
        let mut coords = Coords::with_capacity(2 * x.len() + 1);
        coords.extend_from_slice(x);
        coords.extend_from_slice(y);
        coords.push(t);
        let p = Self { n: x.len(), coords };
        if !p.is_finite() {
            return Err(invalid("coords", "all coordinates must be finite"));
        }
        Ok(p)
    }

    /// Builds a point from a flat slice of length `2n + 1`.
    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        if coords.len() < 3 || coords.len().is_multiple_of(2) {
            return Err(invalid(
                "coords",
                format!("expected 2n + 1 coordinates, got {}", coords.len()),
            ));
        }
        let n = (coords.len() - 1) / 2;
        Self::new(&coords[..n], &coords[n..2 * n], coords[2 * n])
    }

    /// Convenience constructor for H^1.
    pub fn h1(x: f64, y: f64, t: f64) -> Self {
        Self {
            n: 1,
            coords: SmallVec::from_slice(&[x, y, t]),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            coords: SmallVec::from_elem(0.0, 2 * n + 1),
        }
    }

    pub(crate) fn from_coords_unchecked(n: usize, coords: Coords) -> Self {
        debug_assert_eq!(coords.len(), 2 * n + 1);
        Self { n, coords }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn x(&self) -> &[f64] {
        &self.coords[..self.n]
    }

    #[inline]
    pub fn y(&self) -> &[f64] {
        &self.coords[self.n..2 * self.n]
    }

    #[inline]
    pub fn t(&self) -> f64 {
        self.coords[2 * self.n]
    }

    /// All `2n + 1` coordinates in `(x, y, t)` order.
    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Squared Euclidean norm of the horizontal projection `(x, y)`.
    pub fn horizontal_norm_sq(&self) -> f64 {
        self.coords[..2 * self.n].iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|v| v.is_finite())
    }

    pub fn is_identity(&self) -> bool {
        self.coords.iter().all(|&v| v == 0.0)
    }

    /// Largest coordinate-wise absolute difference, used by tests and tolerances.
    pub fn max_abs_diff(&self, other: &GroupPoint) -> f64 {
        self.coords
            .iter()
            .zip(other.coords.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Group multiplication `p · q`.
pub fn multiply(p: &GroupPoint, q: &GroupPoint) -> GroupPoint {
    assert_eq!(p.n, q.n, "multiplying points of different dimension");
    let n = p.n;
    let mut coords = Coords::with_capacity(2 * n + 1);
    for k in 0..2 * n {
        coords.push(p.coords[k] + q.coords[k]);
    }
    let mut symplectic = 0.0;
    for i in 0..n {
        symplectic += p.coords[i] * q.coords[n + i] - p.coords[n + i] * q.coords[i];
    }
    coords.push(p.t() + q.t() + 0.5 * symplectic);
    GroupPoint { n, coords }
}

/// Group inverse; in exponential coordinates this is negation.
pub fn inverse(p: &GroupPoint) -> GroupPoint {
    GroupPoint {
        n: p.n,
        coords: p.coords.iter().map(|v| -v).collect(),
    }
}

/// `p⁻¹ · q`, the left-translation of `q` that brings `p` to the origin.
pub fn relative(p: &GroupPoint, q: &GroupPoint) -> GroupPoint {
    assert_eq!(p.n, q.n, "relative position of points of different dimension");
    let n = p.n;
    let mut coords = Coords::with_capacity(2 * n + 1);
    for k in 0..2 * n {
        coords.push(q.coords[k] - p.coords[k]);
    }
    let mut symplectic = 0.0;
    for i in 0..n {
        symplectic += p.coords[i] * q.coords[n + i] - p.coords[n + i] * q.coords[i];
    }
    coords.push(q.t() - p.t() - 0.5 * symplectic);
    GroupPoint { n, coords }
}

/// Anisotropic dilation `δ_ε(x, y, t) = (εx, εy, ε²t)`.
pub fn dilate(eps: f64, p: &GroupPoint) -> Result<GroupPoint> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid("eps", format!("dilation factor must be positive, got {eps}")));
    }
    Ok(dilate_unchecked(eps, p))
}

#[inline]
pub(crate) fn dilate_unchecked(eps: f64, p: &GroupPoint) -> GroupPoint {
    let n = p.n;
    let mut coords = Coords::with_capacity(2 * n + 1);
    for k in 0..2 * n {
        coords.push(eps * p.coords[k]);
    }
    coords.push(eps * eps * p.t());
    GroupPoint { n, coords }
}

/// One of the `2n` horizontal generators. Indices `0..n` are the `X_i`,
/// indices `n..2n` are the `Y_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Generator {
    index: usize,
}

impl Generator {
    pub fn new(n: usize, index: usize) -> Result<Self> {
        if index >= 2 * n {
            return Err(invalid(
                "generator",
                format!("index {index} out of range for n = {n} (expected < {})", 2 * n),
            ));
        }
        Ok(Self { index })
    }

    /// `X_{i+1}` (zero-based `i`).
    pub fn x(i: usize) -> Self {
        Self { index: i }
    }

    /// `Y_{i+1}` (zero-based `i`), for a group of dimension `n`.
    pub fn y(n: usize, i: usize) -> Self {
        Self { index: n + i }
    }

    pub fn index(self) -> usize {
        self.index
    }

    pub fn all(n: usize) -> impl Iterator<Item = Generator> {
        (0..2 * n).map(|index| Generator { index })
    }

    /// The group element `exp(h · generator)`.
    pub fn element(self, n: usize, h: f64) -> GroupPoint {
        let mut coords = Coords::from_elem(0.0, 2 * n + 1);
        coords[self.index] = h;
        GroupPoint { n, coords }
    }

    /// Coefficients of the generator as a horizontal vector.
    pub fn as_vector(self, n: usize) -> HorizontalVector {
        let mut v = HorizontalVector::zero(n);
        if self.index < n {
            v.a[self.index] = 1.0;
        } else {
            v.b[self.index - n] = 1.0;
        }
        v
    }
}

/// Moves `p` along the flow of a generator for time `h`: `p · exp(h g)`.
pub fn flow_step(p: &GroupPoint, generator: Generator, h: f64) -> GroupPoint {
    let n = p.n;
    assert!(generator.index < 2 * n, "generator out of range");
    let mut coords = p.coords.clone();
    coords[generator.index] += h;
    // t gains ½(x·v − y·u) with (u, v) = h e_k.
    if generator.index < n {
        coords[2 * n] -= 0.5 * p.coords[n + generator.index] * h;
    } else {
        coords[2 * n] += 0.5 * p.coords[generator.index - n] * h;
    }
    GroupPoint { n, coords }
}

/// A horizontal vector `Σ a_i X_i + b_i Y_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizontalVector {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl HorizontalVector {
    pub fn zero(n: usize) -> Self {
        Self {
            a: vec![0.0; n],
            b: vec![0.0; n],
        }
    }

    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                found: b.len(),
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("horizontal vector", "coefficients must be finite"));
        }
        Ok(Self { a, b })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.a.iter().chain(self.b.iter()).map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &HorizontalVector) -> f64 {
        self.a
            .iter()
            .zip(&other.a)
            .chain(self.b.iter().zip(&other.b))
            .map(|(u, v)| u * v)
            .sum()
    }

    /// Pairing with the horizontal part of a group element.
    pub fn dot_horizontal(&self, w: &GroupPoint) -> f64 {
        let n = self.n();
        (0..n)
            .map(|i| self.a[i] * w.x()[i] + self.b[i] * w.y()[i])
            .sum()
    }

    /// `exp(h ω)`: the element reached from the origin along this vector.
    pub fn exp(&self, h: f64) -> GroupPoint {
        let n = self.n();
        let mut coords = Coords::with_capacity(2 * n + 1);
        coords.extend(self.a.iter().map(|v| h * v));
        coords.extend(self.b.iter().map(|v| h * v));
        coords.push(0.0);
        GroupPoint { n, coords }
    }
}

/// `(f(p · δ_ε(w)) − f(p)) / ε`, the difference quotient defining the Pansu
/// differential of `f` at `p` in direction `w`.
pub fn pansu_quotient<F>(f: F, p: &GroupPoint, w: &GroupPoint, eps: f64) -> Result<f64>
where
    F: Fn(&GroupPoint) -> f64,
{
    let moved = multiply(p, &dilate(eps, w)?);
    Ok((f(&moved) - f(p)) / eps)
}

/// Horizontal gradient `(X_i f, Y_i f)` at `p` by central differences along the flows.
pub fn horizontal_gradient<F>(f: F, p: &GroupPoint, step: f64) -> HorizontalVector
where
    F: Fn(&GroupPoint) -> f64,
{
    let n = p.n();
    let mut grad = HorizontalVector::zero(n);
    for g in Generator::all(n) {
        let d = (f(&flow_step(p, g, step)) - f(&flow_step(p, g, -step))) / (2.0 * step);
        if g.index() < n {
            grad.a[g.index()] = d;
        } else {
            grad.b[g.index() - n] = d;
        }
    }
    grad
}

/// Euclidean coordinate partials `∂f/∂coord_k` at `p`, by central differences.
pub fn coordinate_gradient<F>(f: F, p: &GroupPoint, step: f64) -> Vec<f64>
where
    F: Fn(&GroupPoint) -> f64,
{
    let dim = p.coords.len();
    (0..dim)
        .map(|k| {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus.coords[k] += step;
            minus.coords[k] -= step;
            (f(&plus) - f(&minus)) / (2.0 * step)
        })
        .collect()
}

/// Monte Carlo volume of `δ_ε(g · E)` for the coordinate box `E = [lower, upper]`.
///
/// Points are drawn from the bounding box of the image and accepted when
/// their preimage lies in `E`.
pub fn dilated_box_volume(
    eps: f64,
    shift: &GroupPoint,
    lower: &[f64],
    upper: &[f64],
    samples: usize,
    seed: u64,
) -> Result<MeanEstimate> {
    let n = shift.n();
    let dim = 2 * n + 1;
    if lower.len() != dim || upper.len() != dim {
        return Err(invalid("box", format!("corners must have {dim} coordinates")));
    }
    if lower.iter().zip(upper).any(|(a, b)| !(a < b)) {
        return Err(invalid("box", "need lower < upper in every coordinate"));
    }
    if samples == 0 {
        return Err(invalid("samples", "at least one sample is required"));
    }
    // The central coordinate of g·e is affine in e, so the corners bound the image.
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for mask in 0..(1u32 << dim) {
        let corner: Coords = (0..dim)
            .map(|k| if mask >> k & 1 == 1 { upper[k] } else { lower[k] })
            .collect();
        let image = dilate(eps, &multiply(shift, &GroupPoint::from_coords_unchecked(n, corner)))?;
        for k in 0..dim {
            lo[k] = lo[k].min(image.coords[k]);
            hi[k] = hi[k].max(image.coords[k]);
        }
    }
    let bbox: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let back = inverse(shift);
    let mut rng = sampling::stream(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        let q: Coords = (0..dim)
            .map(|k| lo[k] + (hi[k] - lo[k]) * rng.random::<f64>())
            .collect();
        let e = multiply(&back, &dilate_unchecked(1.0 / eps, &GroupPoint { n, coords: q }));
        if e.coords.iter().zip(lower.iter().zip(upper)).all(|(v, (a, b))| a <= v && v <= b) {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    Ok(MeanEstimate {
        mean: bbox * p,
        standard_error: bbox * (p * (1.0 - p) / samples as f64).sqrt(),
        count: samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiply_matches_group_law() {
        let p = GroupPoint::h1(1.0, 0.0, 0.0);
        let q = GroupPoint::h1(0.0, 1.0, 0.0);
        assert_eq!(multiply(&p, &q), GroupPoint::h1(1.0, 1.0, 0.5));
        assert_eq!(multiply(&p, &GroupPoint::identity(1)), p);
    }

    #[test]
    fn associativity_example() {
        let a = GroupPoint::h1(1.0, 0.0, 0.0);
        let b = GroupPoint::h1(0.0, 1.0, 0.0);
        let c = GroupPoint::h1(0.0, 0.0, -0.5);
        let left = multiply(&multiply(&a, &b), &c);
        let right = multiply(&a, &multiply(&b, &c));
        assert_eq!(left, right);
    }

    #[test]
    fn inverse_examples() {
        let p = GroupPoint::h1(1.0, 1.0, 0.5);
        assert_eq!(inverse(&p), GroupPoint::h1(-1.0, -1.0, -0.5));
        assert!(multiply(&p, &inverse(&p)).is_identity());
        assert!(inverse(&GroupPoint::identity(2)).is_identity());
    }

    #[test]
    fn relative_is_inverse_times() {
        let p = GroupPoint::h1(0.3, -0.7, 0.2);
        let q = GroupPoint::h1(-1.1, 0.4, 0.9);
        let direct = multiply(&inverse(&p), &q);
        assert!(relative(&p, &q).max_abs_diff(&direct) < 1e-15);
    }

    #[test]
    fn dilation_examples() {
        let p = GroupPoint::h1(1.0, 1.0, 1.0);
        assert_eq!(dilate(1.0, &p).unwrap(), p);
        assert_eq!(dilate(2.0, &p).unwrap(), GroupPoint::h1(2.0, 2.0, 4.0));
        assert!(dilate(0.0, &p).is_err());
        assert!(dilate(-1.0, &p).is_err());
    }

    #[test]
    fn flow_step_examples() {
        let h = 0.37;
        let x = Generator::x(0);
        let y = Generator::y(1, 0);
        assert_eq!(
            flow_step(&GroupPoint::identity(1), x, h),
            GroupPoint::h1(h, 0.0, 0.0)
        );
        assert_eq!(
            flow_step(&GroupPoint::h1(0.0, 1.0, 0.0), x, h),
            GroupPoint::h1(h, 1.0, -h / 2.0)
        );
        let p = GroupPoint::h1(0.2, -0.4, 0.1);
        let back = flow_step(&flow_step(&p, y, h), y, -h);
        assert!(back.max_abs_diff(&p) < 1e-16);
    }

    #[test]
    fn commutator_loop_is_central_shift() {
        let h = 0.25;
        let x = Generator::x(0);
        let y = Generator::y(1, 0);
        let mut p = GroupPoint::identity(1);
        for (g, s) in [(x, h), (y, h), (x, -h), (y, -h)] {
            p = flow_step(&p, g, s);
        }
        assert_eq!(p, GroupPoint::h1(0.0, 0.0, h * h));
    }

    #[test]
    fn flow_step_agrees_with_multiplication() {
        let p = GroupPoint::new(&[0.3, -0.2], &[1.1, 0.5], -0.7).unwrap();
        for g in Generator::all(2) {
            let via_mul = multiply(&p, &g.element(2, 0.4));
            assert!(flow_step(&p, g, 0.4).max_abs_diff(&via_mul) < 1e-15);
        }
    }

    #[test]
    fn pansu_quotient_examples() {
        let fx = |p: &GroupPoint| p.x()[0];
        let ft = |p: &GroupPoint| p.t();
        let p = GroupPoint::h1(0.4, -1.2, 3.0);
        let w = GroupPoint::h1(1.0, 0.0, 0.0);
        for eps in [1.0, 0.5, 1e-3] {
            assert!((pansu_quotient(fx, &p, &w, eps).unwrap() - 1.0).abs() < 1e-12);
        }
        let origin = GroupPoint::identity(1);
        let e3 = GroupPoint::h1(0.0, 0.0, 1.0);
        for eps in [1.0, 0.25, 0.01] {
            let q = pansu_quotient(ft, &origin, &e3, eps).unwrap();
            assert!((q - eps).abs() < 1e-15);
        }
    }

    #[test]
    fn horizontal_gradient_of_t() {
        // X t = -y/2, Y t = x/2.
        let p = GroupPoint::h1(0.6, -0.8, 0.0);
        let g = horizontal_gradient(|q: &GroupPoint| q.t(), &p, 1e-4);
        assert!((g.a[0] - 0.4).abs() < 1e-10);
        assert!((g.b[0] - 0.3).abs() < 1e-10);
    }

    #[test]
    fn constructor_validation() {
        assert!(GroupPoint::new(&[1.0], &[1.0, 2.0], 0.0).is_err());
        assert!(GroupPoint::new(&[f64::NAN], &[1.0], 0.0).is_err());
        assert!(GroupPoint::from_slice(&[1.0, 2.0]).is_err());
        assert!(Generator::new(1, 2).is_err());
        assert_eq!(Generator::new(2, 3).unwrap(), Generator::y(2, 1));
    }

    #[test]
    fn dilated_box_volume_scales() {
        let g = GroupPoint::h1(0.3, -0.5, 0.2);
        let (lo, hi) = ([-0.5, 0.0, -0.25], [0.5, 0.75, 0.5]);
        let exact = 1.0 * 0.75 * 0.75;
        for eps in [1.0, 0.5] {
            let est = dilated_box_volume(eps, &g, &lo, &hi, 40_000, 5).unwrap();
            let want = eps.powi(4) * exact;
            assert!((est.mean - want).abs() < 4.0 * est.standard_error + 1e-15);
        }
    }
}
