//! Korevaar–Schoen approximate energies for maps from a box in H^n into a
//! CAT(0) target.
//!
//! The approximate density is the ball average
//! `e_ε(x) = ⨍_{B_ε(x)} d²(u(x), u(y)) / ε² dμ(y)`, estimated on uniform
//! ball samples. Estimators that take several values of ε reuse the same
//! unit-ball offsets, dilated, so their differences are not dominated by
//! sampling noise.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::cat0::{self, TargetPoint, TargetSpace};
use crate::cc_metric::sample_ball_offsets;
use crate::domain::DomainBox;
use crate::error::{invalid, Error, Result};
use crate::heisenberg::{dilate_unchecked, flow_step, multiply, Generator, GroupPoint};
use crate::sampling::{self, Accumulator};

/// A map from a coordinate box of H^n into a target space.
pub trait MapField {
    fn space(&self) -> TargetSpace;
    fn domain(&self) -> &DomainBox;
    /// Evaluates the map; points outside the domain are an error.
    fn eval(&self, p: &GroupPoint) -> Result<TargetPoint>;
}

type PointFn = dyn Fn(&GroupPoint) -> TargetPoint + Send + Sync;

/// A map given by a closed-form evaluator.
#[derive(Clone)]
pub struct SmoothMap {
    space: TargetSpace,
    domain: DomainBox,
    f: Arc<PointFn>,
}

impl SmoothMap {
    pub fn new<F>(space: TargetSpace, domain: DomainBox, f: F) -> Self
    where
        F: Fn(&GroupPoint) -> TargetPoint + Send + Sync + 'static,
    {
        Self {
            space,
            domain,
            f: Arc::new(f),
        }
    }

    /// A real-valued map.
    pub fn real<F>(domain: DomainBox, f: F) -> Self
    where
        F: Fn(&GroupPoint) -> f64 + Send + Sync + 'static,
    {
        Self::new(TargetSpace::Euclidean { dim: 1 }, domain, move |p| TargetPoint::real(f(p)))
    }

    pub fn constant(space: TargetSpace, domain: DomainBox, value: TargetPoint) -> Self {
        Self::new(space, domain, move |_| value.clone())
    }
}

impl std::fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothMap")
            .field("space", &self.space)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl MapField for SmoothMap {
    fn space(&self) -> TargetSpace {
        self.space
    }

    fn domain(&self) -> &DomainBox {
        &self.domain
    }

    fn eval(&self, p: &GroupPoint) -> Result<TargetPoint> {
        self.domain.check_point(p)?;
        Ok((self.f)(p))
    }
}

/// A map tabulated on a finite point set, optionally backed by a closed form
/// for points off the table.
#[derive(Clone, Debug)]
pub struct DiscreteMap {
    space: TargetSpace,
    domain: DomainBox,
    points: Vec<GroupPoint>,
    values: Vec<TargetPoint>,
    index: HashMap<Vec<u64>, usize>,
    evaluator: Option<SmoothMap>,
}

fn key(p: &GroupPoint) -> Vec<u64> {
    p.coords().iter().map(|v| v.to_bits()).collect()
}

impl DiscreteMap {
    pub fn new(space: TargetSpace, domain: DomainBox, points: Vec<GroupPoint>, values: Vec<TargetPoint>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: values.len(),
            });
        }
        for (p, v) in points.iter().zip(&values) {
            domain.check_point(p)?;
            space.check(v)?;
        }
        let index = points.iter().enumerate().map(|(i, p)| (key(p), i)).collect();
        Ok(Self {
            space,
            domain,
            points,
            values,
            index,
            evaluator: None,
        })
    }

    /// Tabulates `map` at `points`, keeping it as the off-table evaluator.
    pub fn tabulate(map: &SmoothMap, points: Vec<GroupPoint>) -> Result<Self> {
        let values = points.iter().map(|p| map.eval(p)).collect::<Result<Vec<_>>>()?;
        let mut d = Self::new(map.space(), map.domain().clone(), points, values)?;
        d.evaluator = Some(map.clone());
        Ok(d)
    }

    pub fn points(&self) -> &[GroupPoint] {
        &self.points
    }

    pub fn values(&self) -> &[TargetPoint] {
        &self.values
    }
}

impl MapField for DiscreteMap {
    fn space(&self) -> TargetSpace {
        self.space
    }

    fn domain(&self) -> &DomainBox {
        &self.domain
    }

    fn eval(&self, p: &GroupPoint) -> Result<TargetPoint> {
        if let Some(&i) = self.index.get(&key(p)) {
            return Ok(self.values[i].clone());
        }
        match &self.evaluator {
            Some(m) => m.eval(p),
            None => Err(Error::DomainEscape(format!(
                "{:?} is not a tabulated point and no evaluator is attached",
                p.coords()
            ))),
        }
    }
}

/// A Monte Carlo energy value at one scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyEstimate {
    pub epsilon: f64,
    pub value: f64,
    pub standard_error: f64,
    pub sample_count: usize,
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(invalid("eps", format!("scale must be positive and finite, got {eps}")))
    }
}

fn d2(space: &TargetSpace, a: &TargetPoint, b: &TargetPoint) -> Result<f64> {
    cat0::distance_sq(space, a, b)
}

/// Ball-average density at `x` over explicit unit-ball offsets.
fn density_on_offsets(u: &dyn MapField, x: &GroupPoint, eps: f64, offsets: &[GroupPoint]) -> Result<Accumulator> {
    let space = u.space();
    let ux = u.eval(x)?;
    let mut acc = Accumulator::new();
    for w in offsets {
        let y = multiply(x, &dilate_unchecked(eps, w));
        acc.push(d2(&space, &ux, &u.eval(&y)?)? / (eps * eps));
    }
    Ok(acc)
}

/// `e_ε(x)` with its Monte Carlo standard error.
pub fn approx_energy_density(u: &dyn MapField, x: &GroupPoint, eps: f64, samples: usize, seed: u64) -> Result<EnergyEstimate> {
    check_eps(eps)?;
    if !u.domain().contains_ball(x, eps) {
        return Err(Error::DomainEscape(format!(
            "B_{eps}({:?}) is not contained in the domain",
            x.coords()
        )));
    }
    let offsets = sample_ball_offsets(x.n(), 1.0, samples, seed)?.points;
    let acc = density_on_offsets(u, x, eps, &offsets)?;
    let e = acc.estimate();
    Ok(EnergyEstimate {
        epsilon: eps,
        value: e.mean,
        standard_error: e.standard_error,
        sample_count: samples,
    })
}

/// `d²(u(x), u(x · exp(ε g))) / ε²`.
pub fn directional_energy_density(u: &dyn MapField, x: &GroupPoint, generator: Generator, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Generator::new(x.n(), generator.index())?;
    let y = flow_step(x, generator, eps);
    d2(&u.space(), &u.eval(x)?, &u.eval(&y)?).map(|v| v / (eps * eps))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DirectionalRow {
    pub epsilon: f64,
    /// Square root of the directional density.
    pub root_density: f64,
    /// Change from the previous rung; absent on the first rung.
    pub increment: Option<f64>,
}

/// The directional quotients along a decreasing ladder of scales.
pub fn directional_pointwise_limit(
    u: &dyn MapField,
    x: &GroupPoint,
    generator: Generator,
    ladder: &[f64],
) -> Result<Vec<DirectionalRow>> {
    check_ladder(ladder)?;
    let mut rows: Vec<DirectionalRow> = Vec::with_capacity(ladder.len());
    for &eps in ladder {
        let root = directional_energy_density(u, x, generator, eps)?.sqrt();
        let increment = rows.last().map(|r| (root - r.root_density).abs());
        rows.push(DirectionalRow {
            epsilon: eps,
            root_density: root,
            increment,
        });
    }
    Ok(rows)
}

fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::EmptyInput("scale ladder"));
    }
    for &e in ladder {
        check_eps(e)?;
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("ladder", "scales must be strictly decreasing"));
    }
    Ok(())
}

/// Default scale ladder: six rungs with ratio ½ starting at an eighth of the
/// domain inradius.
pub fn default_ladder(domain: &DomainBox) -> Vec<f64> {
    sampling::geometric_ladder(domain.inradius() / 8.0, 0.5, 6)
}

/// Per-pair terms of the map-level interpolation inequality.
///
/// With `η(y) ≤ η(x)` (the pair is swapped otherwise), `u_a(z)` the point at
/// fraction `a` from `u0(z)` to `u1(z)` and `f = d²(u0, u1)`:
///
/// * `lhs = d²(u_η(x), u_η(y)) + d²(u_{1−η}(x), u_{1−η}(y))`
/// * `mid` is the same with `η` frozen at `η(y)` at both points
/// * `base = d²(u0(x), u0(y)) + d²(u1(x), u1(y))`
/// * `cross = −(η(y) − η(x))(1 − 2η(y))(f(y) − f(x))`
/// * `remainder = 2(f(x) + f(y))((η(y) − η(x))/(1 − 2η(y)))²`
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InterpolationTerms {
    pub lhs: f64,
    pub mid: f64,
    pub base: f64,
    pub cross: f64,
    pub remainder: f64,
}

impl InterpolationTerms {
    /// `mid + cross + remainder − lhs`.
    pub fn slack_first(&self) -> f64 {
        self.mid + self.cross + self.remainder - self.lhs
    }

    /// `base − mid`.
    pub fn slack_second(&self) -> f64 {
        self.base - self.mid
    }

    /// The two combined: `base + cross + remainder − lhs`.
    pub fn slack_combined(&self) -> f64 {
        self.base + self.cross + self.remainder - self.lhs
    }

    /// The combined form with the remainder dropped.
    pub fn slack_without_remainder(&self) -> f64 {
        self.base + self.cross - self.lhs
    }
}

/// Evaluates the interpolation terms for one pair of points.
pub fn interpolation_terms<E>(
    u0: &dyn MapField,
    u1: &dyn MapField,
    eta: &E,
    x: &GroupPoint,
    y: &GroupPoint,
) -> Result<InterpolationTerms>
where
    E: Fn(&GroupPoint) -> f64 + ?Sized,
{
    let space = u0.space();
    if u1.space() != space {
        return Err(invalid("u1", "both maps must share the target space"));
    }
    let (mut x, mut y) = (x, y);
    let (mut ex, mut ey) = (eta(x), eta(y));
    for e in [ex, ey] {
        if !(0.0..0.5).contains(&e) {
            return Err(invalid("eta", format!("η must take values in [0, ½), got {e}")));
        }
    }
    if ey > ex {
        std::mem::swap(&mut x, &mut y);
        std::mem::swap(&mut ex, &mut ey);
    }
    let (a0, a1, b0, b1) = (u0.eval(x)?, u1.eval(x)?, u0.eval(y)?, u1.eval(y)?);
    let at = |p: &TargetPoint, q: &TargetPoint, s: f64| cat0::geodesic_interpolate(&space, p, q, s);
    let lhs = d2(&space, &at(&a0, &a1, ex)?, &at(&b0, &b1, ey)?)?
        + d2(&space, &at(&a0, &a1, 1.0 - ex)?, &at(&b0, &b1, 1.0 - ey)?)?;
    let mid = d2(&space, &at(&a0, &a1, ey)?, &at(&b0, &b1, ey)?)?
        + d2(&space, &at(&a0, &a1, 1.0 - ey)?, &at(&b0, &b1, 1.0 - ey)?)?;
    let base = d2(&space, &a0, &b0)? + d2(&space, &a1, &b1)?;
    let (fx, fy) = (d2(&space, &a0, &a1)?, d2(&space, &b0, &b1)?);
    let cross = -(ey - ex) * (1.0 - 2.0 * ey) * (fy - fx);
    let ratio = (ey - ex) / (1.0 - 2.0 * ey);
    let remainder = 2.0 * (fx + fy) * ratio * ratio;
    Ok(InterpolationTerms {
        lhs,
        mid,
        base,
        cross,
        remainder,
    })
}

/// Violation counts and worst slacks of the interpolation inequality over
/// sampled pairs `(x, x · exp(±ε g))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InterpolationReport {
    pub pairs: usize,
    pub tolerance: f64,
    pub violations_first: usize,
    pub violations_second: usize,
    pub violations_combined: usize,
    pub violations_without_remainder: usize,
    pub min_slack_first: f64,
    pub min_slack_second: f64,
    pub min_slack_combined: f64,
    pub min_slack_without_remainder: f64,
    pub max_remainder: f64,
}

/// A violation is a slack below `−tol · (1 + base)`.
pub const INTERPOLATION_TOLERANCE: f64 = 1e-10;

pub fn interpolation_inequality_check<E>(
    u0: &dyn MapField,
    u1: &dyn MapField,
    eta: &E,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<InterpolationReport>
where
    E: Fn(&GroupPoint) -> f64 + ?Sized,
{
    check_eps(eps)?;
    if samples == 0 {
        return Err(invalid("samples", "at least one pair is required"));
    }
    let domain = u0.domain().clone();
    let n = domain.n();
    let mut rng = sampling::stream(seed);
    let tol = INTERPOLATION_TOLERANCE;
    let mut rep = InterpolationReport {
        pairs: 0,
        tolerance: tol,
        violations_first: 0,
        violations_second: 0,
        violations_combined: 0,
        violations_without_remainder: 0,
        min_slack_first: f64::INFINITY,
        min_slack_second: f64::INFINITY,
        min_slack_combined: f64::INFINITY,
        min_slack_without_remainder: f64::INFINITY,
        max_remainder: 0.0,
    };
    let mut misses = 0usize;
    while rep.pairs < samples {
        let x = domain.sample(&mut rng);
        let g = Generator::new(n, rng.random_range(0..2 * n))?;
        let h = if rng.random::<bool>() { eps } else { -eps };
        let y = flow_step(&x, g, h);
        if !domain.contains(&y) || !u1.domain().contains(&x) || !u1.domain().contains(&y) {
            misses += 1;
            if misses > 100 * samples + 1000 {
                return Err(Error::DomainEscape("flow steps of length ε rarely stay in the domain".into()));
            }
            continue;
        }
        let t = interpolation_terms(u0, u1, eta, &x, &y)?;
        let scale = tol * (1.0 + t.base);
        let tally = |slack: f64, count: &mut usize, min: &mut f64| {
            if slack < -scale {
                *count += 1;
            }
            *min = min.min(slack);
        };
        tally(t.slack_first(), &mut rep.violations_first, &mut rep.min_slack_first);
        tally(t.slack_second(), &mut rep.violations_second, &mut rep.min_slack_second);
        tally(t.slack_combined(), &mut rep.violations_combined, &mut rep.min_slack_combined);
        tally(
            t.slack_without_remainder(),
            &mut rep.violations_without_remainder,
            &mut rep.min_slack_without_remainder,
        );
        rep.max_remainder = rep.max_remainder.max(t.remainder);
        rep.pairs += 1;
    }
    Ok(rep)
}

/// Shared Monte Carlo design for integrated energies: outer points uniform
/// in the domain box, inner offsets uniform in the unit ball.
struct Design {
    outer: Vec<GroupPoint>,
    inner: Vec<GroupPoint>,
    box_volume: f64,
}

fn design(domain: &DomainBox, outer: usize, inner: usize, seed: u64) -> Result<Design> {
    if outer == 0 || inner == 0 {
        return Err(invalid("samples", "outer and inner sample counts must be positive"));
    }
    let mut rng = sampling::substream(seed, 0);
    let pts = (0..outer).map(|_| domain.sample(&mut rng)).collect();
    let inner = sample_ball_offsets(domain.n(), 1.0, inner, seed.wrapping_add(0x9e37_79b9))?.points;
    Ok(Design {
        outer: pts,
        inner,
        box_volume: domain.volume(),
    })
}

/// `E_ε(f) = ∫ f e_ε dμ` on the design, with `f` required to vanish wherever
/// `B_reach(x)` leaves the domain.
fn integrated_energy<F>(u: &dyn MapField, f: &F, eps: f64, reach: f64, d: &Design) -> Result<EnergyEstimate>
where
    F: Fn(&GroupPoint) -> f64 + ?Sized,
{
    let mut acc = Accumulator::new();
    for x in &d.outer {
        let fx = f(x);
        if fx == 0.0 {
            acc.push(0.0);
            continue;
        }
        if !u.domain().contains_ball(x, reach) {
            return Err(Error::SupportViolation(format!(
                "test function is {fx} at {:?}, closer than {reach} to the boundary",
                x.coords()
            )));
        }
        let e = density_on_offsets(u, x, eps, &d.inner)?.mean();
        acc.push(fx * e);
    }
    let est = acc.estimate();
    Ok(EnergyEstimate {
        epsilon: eps,
        value: d.box_volume * est.mean,
        standard_error: d.box_volume * est.standard_error,
        sample_count: d.outer.len(),
    })
}

/// `E_ε(ψ)` along a decreasing ladder, on one shared sample design.
pub fn energy_functional<F>(
    u: &dyn MapField,
    psi: &F,
    ladder: &[f64],
    outer: usize,
    inner: usize,
    seed: u64,
) -> Result<Vec<EnergyEstimate>>
where
    F: Fn(&GroupPoint) -> f64 + ?Sized,
{
    check_ladder(ladder)?;
    let d = design(u.domain(), outer, inner, seed)?;
    ladder
        .iter()
        .map(|&eps| integrated_energy(u, psi, eps, eps, &d))
        .collect()
}

/// Result of the sub-partition diagnostic.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubpartitionReport {
    pub epsilon: f64,
    pub lambdas: Vec<f64>,
    /// `E_ε(f)`.
    pub coarse: f64,
    /// `Σ λ_i E_{λ_i ε}(f + osc(f, 2ε))`.
    pub refined: f64,
    /// Smallest `C ≥ 0` with `coarse ≤ (1 + Cε) refined`; infinite when
    /// `refined = 0 < coarse`.
    pub constant: f64,
}

pub fn subpartition_diagnostic<F>(
    u: &dyn MapField,
    f: &F,
    eps: f64,
    lambdas: &[f64],
    outer: usize,
    inner: usize,
    seed: u64,
) -> Result<SubpartitionReport>
where
    F: Fn(&GroupPoint) -> f64 + ?Sized,
{
    check_eps(eps)?;
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(invalid("lambdas", "weights must be positive"));
    }
    let total: f64 = lambdas.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(invalid("lambdas", format!("weights must sum to 1, got {total}")));
    }
    let d = design(u.domain(), outer, inner, seed)?;
    let coarse = integrated_energy(u, f, eps, 2.0 * eps, &d)?.value;
    // Oscillation over the sampled points of B_{2ε}(x), plus x itself.
    let lifted = |x: &GroupPoint| -> f64 {
        let fx = f(x);
        if !u.domain().contains_ball(x, 2.0 * eps) {
            return fx;
        }
        let (mut lo, mut hi) = (fx, fx);
        for w in &d.inner {
            let v = f(&multiply(x, &dilate_unchecked(2.0 * eps, w)));
            lo = lo.min(v);
            hi = hi.max(v);
        }
        fx + (hi - lo)
    };
    let mut refined = 0.0;
    for &l in lambdas {
        refined += l * integrated_energy(u, &lifted, l * eps, 2.0 * eps, &d)?.value;
    }
    let constant = if coarse <= refined {
        0.0
    } else if refined > 0.0 {
        (coarse / refined - 1.0) / eps
    } else {
        f64::INFINITY
    };
    Ok(SubpartitionReport {
        epsilon: eps,
        lambdas: lambdas.to_vec(),
        coarse,
        refined,
        constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cc_metric::ball_moments;

    fn cube() -> DomainBox {
        DomainBox::centered_cube(1, 1.0).unwrap()
    }

    fn bump(p: &GroupPoint) -> f64 {
        let r2 = p.x()[0].powi(2) + p.y()[0].powi(2) + 4.0 * p.t().powi(2);
        if r2 < 0.25 {
            (1.0 - 4.0 * r2).powi(2)
        } else {
            0.0
        }
    }

    #[test]
    fn constant_map_has_zero_energy() {
        let u = SmoothMap::constant(TargetSpace::spider(3).unwrap(), cube(), TargetPoint::spider(2, 0.3).unwrap());
        let x = GroupPoint::h1(0.1, 0.0, 0.0);
        assert_eq!(approx_energy_density(&u, &x, 0.1, 200, 1).unwrap().value, 0.0);
        assert_eq!(directional_energy_density(&u, &x, Generator::x(0), 0.1).unwrap(), 0.0);
        let rows = directional_pointwise_limit(&u, &x, Generator::x(0), &[0.1, 0.05]).unwrap();
        assert!(rows.iter().all(|r| r.root_density == 0.0));
        let e = energy_functional(&u, &bump, &[0.1, 0.05], 200, 20, 1).unwrap();
        assert!(e.iter().all(|r| r.value == 0.0));
        let s = subpartition_diagnostic(&u, &bump, 0.05, &[0.5, 0.5], 100, 20, 1).unwrap();
        assert_eq!(s.constant, 0.0);
    }

    #[test]
    fn linear_map_density_matches_second_moment() {
        let u = SmoothMap::real(cube(), |p| p.x()[0]);
        let m = ball_moments(1, 1.0, 20_000, 4).unwrap();
        let target = m.get(0, 0) / m.volume;
        for x in [GroupPoint::h1(0.0, 0.0, 0.0), GroupPoint::h1(0.3, -0.2, 0.1)] {
            let e = approx_energy_density(&u, &x, 0.05, 20_000, 5).unwrap();
            assert!((e.value - target).abs() < 4.0 * (e.standard_error + m.se(0, 0) / m.volume));
        }
    }

    #[test]
    fn central_coordinate_density_stays_bounded() {
        // t(x·δ_ε w) − t(x) = ε(½(x w_y − y w_x)) + ε² w_t.
        let u = SmoothMap::real(cube(), |p| p.t());
        let x = GroupPoint::h1(0.4, 0.2, 0.0);
        let mut last = f64::INFINITY;
        for eps in [0.2, 0.1, 0.05] {
            let e = approx_energy_density(&u, &x, eps, 4000, 6).unwrap().value;
            assert!(e < 1.0 && e.is_finite());
            last = e;
        }
        let at_origin = approx_energy_density(&u, &GroupPoint::identity(1), 0.05, 4000, 6).unwrap().value;
        assert!(at_origin < 1e-2 && last > at_origin);
    }

    #[test]
    fn directional_examples() {
        let u = SmoothMap::real(cube(), |p| p.x()[0]);
        let x = GroupPoint::h1(0.2, 0.3, -0.1);
        for eps in [0.3, 0.1, 0.01] {
            assert!((directional_energy_density(&u, &x, Generator::x(0), eps).unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(directional_energy_density(&u, &x, Generator::y(1, 0), eps).unwrap(), 0.0);
        }
        let s = SmoothMap::real(cube(), |p| p.x()[0].sin());
        let ladder = sampling::geometric_ladder(0.4, 0.5, 6);
        let rows = directional_pointwise_limit(&s, &GroupPoint::identity(1), Generator::x(0), &ladder).unwrap();
        for w in rows.windows(2).skip(1) {
            assert!(w[1].increment.unwrap() <= 0.5 * w[0].increment.unwrap());
        }
        assert!(directional_pointwise_limit(&s, &x, Generator::x(0), &[0.1, 0.2]).is_err());
    }

    #[test]
    fn domain_escape_is_reported() {
        let u = SmoothMap::real(cube(), |p| p.x()[0]);
        let edge = GroupPoint::h1(0.95, 0.0, 0.0);
        assert!(matches!(approx_energy_density(&u, &edge, 0.1, 10, 1), Err(Error::DomainEscape(_))));
        assert!(directional_energy_density(&u, &edge, Generator::x(0), 0.1).is_err());
        let wide = |p: &GroupPoint| if p.x()[0].abs() < 0.99 { 1.0 } else { 0.0 };
        assert!(matches!(
            energy_functional(&u, &wide, &[0.1], 400, 10, 1),
            Err(Error::SupportViolation(_))
        ));
    }

    #[test]
    fn energy_is_quadratically_homogeneous() {
        let u = SmoothMap::real(cube(), |p| (2.0 * p.x()[0]).sin() + p.t());
        let v = SmoothMap::real(cube(), |p| 2.0 * ((2.0 * p.x()[0]).sin() + p.t()));
        let ladder = [0.1, 0.05];
        let a = energy_functional(&u, &bump, &ladder, 300, 30, 2).unwrap();
        let b = energy_functional(&v, &bump, &ladder, 300, 30, 2).unwrap();
        for (ea, eb) in a.iter().zip(&b) {
            assert_eq!(eb.value, 4.0 * ea.value);
        }
    }

    #[test]
    fn linear_map_energy_ladder_is_flat() {
        let u = SmoothMap::real(cube(), |p| p.x()[0]);
        let ladder = sampling::geometric_ladder(0.2, 0.5, 4);
        let e = energy_functional(&u, &bump, &ladder, 400, 40, 3).unwrap();
        for w in e.windows(2) {
            assert!((w[1].value - w[0].value).abs() <= 0.1 * w[0].value);
        }
    }

    #[test]
    fn distance_to_a_point_has_smaller_directional_density() {
        let space = TargetSpace::spider(3).unwrap();
        let u = SmoothMap::new(space, cube(), |p| {
            let r = p.x()[0] + 0.5 * p.t();
            if r >= 0.0 {
                TargetPoint::spider(1, r + 1e-300).unwrap()
            } else {
                TargetPoint::spider(2, -r).unwrap()
            }
        });
        let y0 = TargetPoint::spider(3, 0.4).unwrap();
        let uc = u.clone();
        let f = SmoothMap::real(cube(), move |p| cat0::distance(&space, &uc.eval(p).unwrap(), &y0).unwrap());
        let mut rng = sampling::stream(8);
        for _ in 0..500 {
            let x = DomainBox::centered_cube(1, 0.8).unwrap().sample(&mut rng);
            for g in Generator::all(1) {
                let a = directional_energy_density(&f, &x, g, 0.05).unwrap();
                let b = directional_energy_density(&u, &x, g, 0.05).unwrap();
                assert!(a <= b + 1e-12);
            }
        }
    }

    #[test]
    fn lower_semicontinuity_smoke() {
        let limit = SmoothMap::real(cube(), |p| p.x()[0]);
        let ladder = [0.05];
        let base = energy_functional(&limit, &bump, &ladder, 400, 40, 4).unwrap()[0];
        for k in [4.0, 8.0, 16.0] {
            let uk = SmoothMap::real(cube(), move |p| p.x()[0] + (k * p.y()[0]).sin() / k);
            let e = energy_functional(&uk, &bump, &ladder, 400, 40, 4).unwrap()[0];
            assert!(e.value >= base.value - 3.0 * base.standard_error);
        }
    }

    #[test]
    fn interpolation_degenerate_cases() {
        let space = TargetSpace::spider(3).unwrap();
        let u0 = SmoothMap::new(space, cube(), |p| TargetPoint::spider(1, 1.0 + p.x()[0]).unwrap());
        let u1 = SmoothMap::new(space, cube(), |p| TargetPoint::spider(2, 0.5 + p.y()[0].abs()).unwrap());
        let zero = |_: &GroupPoint| 0.0;
        let r = interpolation_inequality_check(&u0, &u1, &zero, 0.1, 500, 1).unwrap();
        assert_eq!(r.violations_combined, 0);
        assert!(r.min_slack_without_remainder >= -1e-12);
        let same = interpolation_inequality_check(&u0, &u0, &|p: &GroupPoint| 0.2 + 0.1 * p.x()[0], 0.1, 500, 2)
            .unwrap();
        assert_eq!(same.violations_second, 0);
        assert_eq!(same.violations_combined, 0);
        let bad = |_: &GroupPoint| 0.7;
        assert!(interpolation_inequality_check(&u0, &u1, &bad, 0.1, 5, 1).is_err());
    }

    #[test]
    fn remainder_is_needed() {
        // Constant u0, u1 with a nonconstant η: base = 0 and cross = 0, while
        // the left side is positive, so only the remainder closes the gap.
        let space = TargetSpace::euclidean(1).unwrap();
        let u0 = SmoothMap::constant(space, cube(), TargetPoint::real(0.0));
        let u1 = SmoothMap::constant(space, cube(), TargetPoint::real(1.0));
        let eta = |p: &GroupPoint| 0.2 + 0.2 * p.x()[0];
        let r = interpolation_inequality_check(&u0, &u1, &eta, 0.1, 200, 3).unwrap();
        assert_eq!(r.violations_combined, 0);
        assert_eq!(r.violations_first, 0);
        assert!(r.violations_without_remainder > 0);
    }

    #[test]
    fn subpartition_linear_map() {
        let u = SmoothMap::real(cube(), |p| p.x()[0]);
        let a = subpartition_diagnostic(&u, &bump, 0.05, &[0.5, 0.5], 400, 40, 1).unwrap();
        let b = subpartition_diagnostic(&u, &bump, 0.05, &[0.5, 0.5], 800, 40, 1).unwrap();
        assert!(a.constant.is_finite() && b.constant.is_finite());
        let trivial = subpartition_diagnostic(&u, &bump, 0.05, &[1.0], 400, 40, 1).unwrap();
        assert_eq!(trivial.constant, 0.0);
        assert!(subpartition_diagnostic(&u, &bump, 0.05, &[0.5, 0.4], 10, 10, 1).is_err());
    }
}
