//! The Carnot–Carathéodory metric of H^n.
//!
//! Geodesics from the origin are parameterized by a unit direction
//! `ζ = A + iB` on the horizontal sphere, a normalized phase `ψ ∈ [−2π, 2π]`
//! and the arc length `ρ₀`. Writing `w = x + iy` and `θ = sψ`,
//!
//! ```text
//! w(s) = (ρ₀/ψ) ζ (1 − e^{iθ}),     t(s) = ½ (ρ₀/ψ)² (θ − sin θ)
//! ```
//!
//! which is horizontal for the group law used in [`crate::heisenberg`].
//! Geodesics with `|ψ| ≤ 2π` are length minimizing; `ψ = ±2π` reaches the
//! central axis.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::domain::CENTRAL_EXTENT;
use crate::error::{invalid, Error, Result};
use crate::heisenberg::{relative, Coords, GroupPoint};
use crate::sampling::{self, Accumulator, MeanEstimate};

const TWO_PI: f64 = 2.0 * PI;

/// Parameters of a minimizing geodesic leaving the origin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeodesicParams {
    dir: Vec<f64>,
    psi: f64,
    rho0: f64,
}

impl GeodesicParams {
    /// `dir` holds `(A_1..A_n, B_1..B_n)` and must be a unit vector.
    pub fn new(dir: Vec<f64>, psi: f64, rho0: f64) -> Result<Self> {
        if dir.is_empty() || !dir.len().is_multiple_of(2) {
            return Err(invalid("dir", format!("expected 2n entries, got {}", dir.len())));
        }
        if dir.iter().any(|v| !v.is_finite()) {
            return Err(invalid("dir", "entries must be finite"));
        }
        let norm_sq: f64 = dir.iter().map(|v| v * v).sum();
        if (norm_sq - 1.0).abs() > 1e-12 {
            return Err(invalid("dir", format!("|A|² + |B|² = {norm_sq}, expected 1")));
        }
        if !psi.is_finite() || psi.abs() > TWO_PI * (1.0 + 1e-14) {
            return Err(invalid("psi", format!("{psi} is outside [−2π, 2π]")));
        }
        if !(rho0 >= 0.0) || !rho0.is_finite() {
            return Err(invalid("rho0", format!("{rho0} must be finite and nonnegative")));
        }
        Ok(Self {
            dir,
            psi: psi.clamp(-TWO_PI, TWO_PI),
            rho0,
        })
    }

    /// A direction drawn uniformly from the sphere, with the given phase and length.
    pub fn random_direction<R: Rng + ?Sized>(rng: &mut R, n: usize, psi: f64, rho0: f64) -> Result<Self> {
        Self::new(sampling::unit_sphere(rng, 2 * n), psi, rho0)
    }

    pub fn n(&self) -> usize {
        self.dir.len() / 2
    }

    pub fn dir(&self) -> &[f64] {
        &self.dir
    }

    pub fn a(&self) -> &[f64] {
        &self.dir[..self.n()]
    }

    pub fn b(&self) -> &[f64] {
        &self.dir[self.n()..]
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    pub fn is_trivial(&self) -> bool {
        self.rho0 == 0.0
    }
}

/// `(1 − cos θ)/θ`.
#[inline]
fn versin_ratio(theta: f64) -> f64 {
    if theta == 0.0 {
        0.0
    } else {
        let h = (0.5 * theta).sin();
        2.0 * h * h / theta
    }
}

/// `sin θ / θ`.
#[inline]
fn sinc(theta: f64) -> f64 {
    if theta.abs() < 1e-8 {
        1.0 - theta * theta / 6.0
    } else {
        theta.sin() / theta
    }
}

/// `(θ − sin θ)/θ²`.
#[inline]
fn area_ratio(theta: f64) -> f64 {
    if theta.abs() < 0.1 {
        let t2 = theta * theta;
        theta * (1.0 / 6.0 - t2 * (1.0 / 120.0 - t2 * (1.0 / 5040.0 - t2 / 362_880.0)))
    } else {
        (theta - theta.sin()) / (theta * theta)
    }
}

/// The point at parameter `s ∈ [0, 1]` along the geodesic.
pub fn geodesic_point(g: &GeodesicParams, s: f64) -> GroupPoint {
    let n = g.n();
    let theta = s * g.psi;
    let c1 = versin_ratio(theta);
    let c2 = sinc(theta);
    let len = g.rho0 * s;
    let mut coords = Coords::with_capacity(2 * n + 1);
    for i in 0..n {
        coords.push(len * (g.dir[i] * c1 + g.dir[n + i] * c2));
    }
    for i in 0..n {
        coords.push(len * (g.dir[n + i] * c1 - g.dir[i] * c2));
    }
    coords.push(0.5 * len * len * area_ratio(theta));
    GroupPoint::from_coords_unchecked(n, coords)
}

/// Analytic derivative of [`geodesic_point`] with respect to `s`.
pub fn geodesic_velocity(g: &GeodesicParams, s: f64) -> Vec<f64> {
    let n = g.n();
    let theta = s * g.psi;
    let (sn, cs) = theta.sin_cos();
    let mut v = Vec::with_capacity(2 * n + 1);
    for i in 0..n {
        v.push(g.rho0 * (g.dir[i] * sn + g.dir[n + i] * cs));
    }
    for i in 0..n {
        v.push(g.rho0 * (g.dir[n + i] * sn - g.dir[i] * cs));
    }
    v.push(0.5 * g.rho0 * g.rho0 * s * versin_ratio(theta));
    v
}

/// `ṫ − ½ Σ (x_i ẏ_i − y_i ẋ_i)` along the geodesic, from analytic derivatives.
pub fn horizontality_residual(g: &GeodesicParams, s: f64) -> f64 {
    let p = geodesic_point(g, s);
    let v = geodesic_velocity(g, s);
    area_defect(&p, &v)
}

/// The same residual for an arbitrary curve, with central-difference velocities.
pub fn curve_horizontality_residual<F>(curve: F, s: f64, step: f64) -> f64
where
    F: Fn(f64) -> GroupPoint,
{
    let p = curve(s);
    let plus = curve(s + step);
    let minus = curve(s - step);
    let v: Vec<f64> = plus
        .coords()
        .iter()
        .zip(minus.coords())
        .map(|(a, b)| (a - b) / (2.0 * step))
        .collect();
    area_defect(&p, &v)
}

fn area_defect(p: &GroupPoint, v: &[f64]) -> f64 {
    let n = p.n();
    let mut area = 0.0;
    for i in 0..n {
        area += p.x()[i] * v[n + i] - p.y()[i] * v[i];
    }
    v[2 * n] - 0.5 * area
}

struct HalfPhase {
    u: f64,
    sin_u: f64,
}

/// `N(u) = 2u − sin 2u`, with a series near zero.
#[inline]
fn phase_numerator(u: f64) -> f64 {
    if u < 0.1 {
        let z = 2.0 * u;
        let z2 = z * z;
        z * z2 * (1.0 / 6.0 - z2 * (1.0 / 120.0 - z2 * (1.0 / 5040.0 - z2 / 362_880.0)))
    } else {
        2.0 * u - (2.0 * u).sin()
    }
}

/// `h(u) = (2u − sin 2u)/(8 sin²u)` and its derivative, for `u ∈ (0, π/2]`.
#[inline]
fn h_low(u: f64) -> (f64, f64) {
    let (s, c) = u.sin_cos();
    let num = phase_numerator(u);
    (num / (8.0 * s * s), 0.5 - num * c / (4.0 * s * s * s))
}

/// `h` written in `v = π − u`, for `v ∈ (0, π/2]`.
#[inline]
fn h_high(v: f64) -> (f64, f64) {
    let (s, c) = v.sin_cos();
    let num = TWO_PI - 2.0 * v + (2.0 * v).sin();
    (num / (8.0 * s * s), -0.5 - num * c / (4.0 * s * s * s))
}

/// Bracketing bisection followed by Newton polish kept inside the bracket.
fn bracket_newton<F>(f: F, mut lo: f64, mut hi: f64, target: f64, increasing: bool) -> f64
where
    F: Fn(f64) -> (f64, f64),
{
    for _ in 0..200 {
        if hi - lo <= 1e-7 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let below = f(mid).0 < target;
        if below == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..6 {
        let (value, slope) = f(x);
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let next = x - (value - target) / slope;
        if !(next > lo && next < hi) {
            break;
        }
        let done = (next - x).abs() <= 1e-16 * x.abs();
        x = next;
        if done {
            break;
        }
    }
    x
}

/// Solves `h(u) = tau` for the half phase `u ∈ [0, π)`.
fn half_phase(tau: f64) -> HalfPhase {
    if tau == 0.0 {
        return HalfPhase { u: 0.0, sin_u: 0.0 };
    }
    // Both branches stay valid a little past π/2, so a root at the switch
    // is interior to either bracket and Newton can polish it.
    let top = 0.5 * PI + 0.05;
    if tau <= PI / 8.0 {
        let u = bracket_newton(h_low, 0.0, top, tau, true);
        HalfPhase { u, sin_u: u.sin() }
    } else {
        let v = bracket_newton(h_high, 0.0, top, tau, false);
        HalfPhase {
            u: PI - v,
            sin_u: v.sin(),
        }
    }
}

/// Parameters of the minimizing geodesic from the origin to `w`.
///
/// On the central axis the geodesic is not unique; the direction `A = e_1`
/// is returned.
pub fn solve_endpoint(w: &GroupPoint) -> Result<GeodesicParams> {
    let n = w.n();
    let r2 = w.horizontal_norm_sq();
    let t = w.t();
    if r2 == 0.0 {
        if t == 0.0 {
            return Err(Error::OriginEndpoint);
        }
        return Ok(axis_params(n, t));
    }
    let r = r2.sqrt();
    let tau = t.abs() / r2;
    if !tau.is_finite() {
        return Ok(axis_params(n, t));
    }
    let hp = half_phase(tau);
    let (psi, rho0) = if hp.u == 0.0 {
        (0.0, r)
    } else {
        (2.0 * hp.u * t.signum(), r * hp.u / hp.sin_u)
    };
    let (sp, cp) = (0.5 * psi).sin_cos();
    let mut dir = vec![0.0; 2 * n];
    for i in 0..n {
        let (x, y) = (w.x()[i], w.y()[i]);
        dir[i] = (x * sp - y * cp) / r;
        dir[n + i] = (x * cp + y * sp) / r;
    }
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    for d in dir.iter_mut() {
        *d /= norm;
    }
    Ok(GeodesicParams { dir, psi, rho0 })
}

fn axis_params(n: usize, t: f64) -> GeodesicParams {
    let mut dir = vec![0.0; 2 * n];
    dir[0] = 1.0;
    GeodesicParams {
        dir,
        psi: TWO_PI * t.signum(),
        rho0: 2.0 * (PI * t.abs()).sqrt(),
    }
}

/// `d_cc(0, w)`.
pub fn cc_norm(w: &GroupPoint) -> f64 {
    if w.is_identity() {
        0.0
    } else {
        solve_endpoint(w).map(|g| g.rho0).unwrap_or(0.0)
    }
}

/// `d_cc(p, q) = ‖p⁻¹ q‖`.
pub fn cc_distance(p: &GroupPoint, q: &GroupPoint) -> f64 {
    cc_norm(&relative(p, q))
}

/// Phase profile `j(ψ)` of the Jacobian: `J = 4^n ρ₀^{2n+1} j(ψ)`.
pub fn jacobian_profile(n: usize, psi: f64) -> f64 {
    let a = 0.5 * psi;
    let a2 = a * a;
    let (sinc_a, core) = if a.abs() < 0.05 {
        (
            1.0 - a2 / 6.0 + a2 * a2 / 120.0,
            1.0 / 24.0 - a2 / 240.0 + a2 * a2 / 6720.0 - a2 * a2 * a2 / 362_880.0,
        )
    } else {
        let (s, c) = a.sin_cos();
        (s / a, (s - a * c) / (8.0 * a2 * a))
    };
    (0.5 * sinc_a).powi(2 * n as i32 - 1) * core
}

/// Jacobian determinant of `(dir, ψ, ρ₀) ↦ geodesic_point(·, 1)`, with the
/// direction measured by surface measure on the sphere.
pub fn jacobian_det(g: &GeodesicParams) -> f64 {
    let n = g.n();
    4f64.powi(n as i32) * g.rho0.powi(2 * n as i32 + 1) * jacobian_profile(n, g.psi)
}

/// Absolute determinant of the same map by central finite differences, using
/// an orthonormal frame of the tangent space of the sphere at `dir`.
pub fn jacobian_det_fd(g: &GeodesicParams, step: f64) -> f64 {
    let n = g.n();
    let dim = 2 * n + 1;
    let tangents = sphere_tangent_frame(&g.dir);
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    let endpoint = |dir: &[f64], psi: f64, rho0: f64| {
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let unit: Vec<f64> = dir.iter().map(|v| v / norm).collect();
        geodesic_point(
            &GeodesicParams {
                dir: unit,
                psi,
                rho0,
            },
            1.0,
        )
    };
    let mut put = |col: usize, plus: GroupPoint, minus: GroupPoint| {
        for k in 0..dim {
            m[(k, col)] = (plus.coords()[k] - minus.coords()[k]) / (2.0 * step);
        }
    };
    for (col, tan) in tangents.iter().enumerate() {
        let dp: Vec<f64> = g.dir.iter().zip(tan).map(|(d, e)| d + step * e).collect();
        let dm: Vec<f64> = g.dir.iter().zip(tan).map(|(d, e)| d - step * e).collect();
        put(col, endpoint(&dp, g.psi, g.rho0), endpoint(&dm, g.psi, g.rho0));
    }
    put(
        2 * n - 1,
        endpoint(&g.dir, g.psi + step, g.rho0),
        endpoint(&g.dir, g.psi - step, g.rho0),
    );
    put(
        2 * n,
        endpoint(&g.dir, g.psi, g.rho0 + step),
        endpoint(&g.dir, g.psi, g.rho0 - step),
    );
    m.determinant().abs()
}

fn sphere_tangent_frame(dir: &[f64]) -> Vec<Vec<f64>> {
    let dim = dir.len();
    let mut basis: Vec<Vec<f64>> = vec![dir.to_vec()];
    for k in 0..dim {
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= d * bi;
            }
        }
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1e-8 {
            basis.push(v.into_iter().map(|c| c / norm).collect());
        }
        if basis.len() == dim {
            break;
        }
    }
    basis.split_off(1)
}

/// Surface area of the unit sphere `S^{2n−1}`.
pub fn sphere_area(n: usize) -> f64 {
    let factorial: f64 = (1..n).map(|k| k as f64).product();
    2.0 * PI.powi(n as i32) / factorial
}

/// `μ(B_r)` by quadrature of the Jacobian over sphere × phase × length.
pub fn ball_volume(n: usize, r: f64) -> Result<f64> {
    check_radius(r)?;
    check_n(n)?;
    let phase_integral = sampling::simpson(|psi| jacobian_profile(n, psi), -TWO_PI, TWO_PI, 4000);
    let m = 2 * n + 2;
    Ok(sphere_area(n) * 4f64.powi(n as i32) * r.powi(m as i32) / m as f64 * phase_integral)
}

/// Half widths of the rejection box for `B_r`: horizontal and central.
pub fn rejection_box(r: f64) -> (f64, f64) {
    let h = 1.1 * r;
    (h, h * h * CENTRAL_EXTENT)
}

fn rejection_box_volume(n: usize, r: f64) -> f64 {
    let (bh, bt) = rejection_box(r);
    (2.0 * bh).powi(2 * n as i32) * 2.0 * bt
}

/// Uniform offsets in `B_r(0)` from rejection sampling, plus the attempt count.
#[derive(Clone, Debug)]
pub struct BallSample {
    pub points: Vec<GroupPoint>,
    pub attempts: usize,
    pub box_volume: f64,
}

impl BallSample {
    pub fn acceptance_ratio(&self) -> f64 {
        self.points.len() as f64 / self.attempts as f64
    }
}

/// Draws `count` points uniformly from `B_r(0)` in H^n.
pub fn sample_ball_offsets(n: usize, r: f64, count: usize, seed: u64) -> Result<BallSample> {
    check_radius(r)?;
    check_n(n)?;
    if count == 0 {
        return Err(invalid("count", "at least one sample is required"));
    }
    let mut rng = sampling::stream(seed);
    let (bh, bt) = rejection_box(r);
    let r_sq = r * r;
    let mut points = Vec::with_capacity(count);
    let mut attempts = 0usize;
    let mut coords = Coords::from_elem(0.0, 2 * n + 1);
    while points.len() < count {
        attempts += 1;
        for c in coords.iter_mut().take(2 * n) {
            *c = bh * (2.0 * rng.random::<f64>() - 1.0);
        }
        coords[2 * n] = bt * (2.0 * rng.random::<f64>() - 1.0);
        let w = GroupPoint::from_coords_unchecked(n, coords.clone());
        // The horizontal radius never exceeds the distance.
        if w.horizontal_norm_sq() >= r_sq {
            continue;
        }
        if cc_norm(&w) < r {
            points.push(w);
        }
    }
    Ok(BallSample {
        points,
        attempts,
        box_volume: rejection_box_volume(n, r),
    })
}

/// `count` points uniformly distributed in `B_r(center)`.
pub fn sample_ball_uniform(center: &GroupPoint, r: f64, seed: u64, count: usize) -> Result<Vec<GroupPoint>> {
    let sample = sample_ball_offsets(center.n(), r, count, seed)?;
    Ok(sample
        .points
        .iter()
        .map(|w| crate::heisenberg::multiply(center, w))
        .collect())
}

/// Monte Carlo `μ(B_r)`: box volume times acceptance ratio.
pub fn ball_volume_monte_carlo(n: usize, r: f64, samples: usize, seed: u64) -> Result<MeanEstimate> {
    let sample = sample_ball_offsets(n, r, samples, seed)?;
    let p = sample.acceptance_ratio();
    let vol = sample.box_volume;
    Ok(MeanEstimate {
        mean: vol * p,
        standard_error: vol * (p * (1.0 - p) / sample.attempts as f64).sqrt(),
        count: sample.attempts,
    })
}

/// The weighted box `B^ω(ρ) = {|x_i|, |y_i| ≤ ρ, |t| ≤ ρ²}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallBoxSpec {
    pub weights: Vec<u32>,
    pub radius: f64,
}

impl BallBoxSpec {
    pub fn new(n: usize, radius: f64) -> Result<Self> {
        check_radius(radius)?;
        let mut weights = vec![1; 2 * n];
        weights.push(2);
        Ok(Self { weights, radius })
    }

    /// Smallest `ρ` with `w ∈ B^ω(ρ)`.
    pub fn gauge(w: &GroupPoint) -> f64 {
        let n = w.n();
        let h = w.coords()[..2 * n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        h.max(w.t().abs().sqrt())
    }

    pub fn contains(&self, w: &GroupPoint) -> bool {
        Self::gauge(w) <= self.radius
    }
}

/// Empirical ball-box constants: `B^ω(c r) ⊂ B_r ⊂ B^ω(C r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BallBoxConstants {
    pub radius: f64,
    pub c_lower: f64,
    pub c_upper: f64,
}

pub fn ball_box_constants(n: usize, r: f64, samples: usize, seed: u64) -> Result<BallBoxConstants> {
    check_radius(r)?;
    check_n(n)?;
    if r > 1.0 {
        return Err(invalid("r", "ball-box constants are sampled for r ≤ 1"));
    }
    if samples == 0 {
        return Err(invalid("samples", "at least one sample is required"));
    }
    let dim = 2 * n + 1;
    let mut rng = sampling::stream(seed);
    // Upper constant: the gauge over the metric sphere.
    let mut upper = 0.0f64;
    for _ in 0..samples {
        let psi = TWO_PI * (2.0 * rng.random::<f64>() - 1.0);
        let g = GeodesicParams::random_direction(&mut rng, n, psi, r)?;
        upper = upper.max(BallBoxSpec::gauge(&geodesic_point(&g, 1.0)));
    }
    // Lower constant: the distance over the surface of B^ω(r).
    let half = |k: usize| if k < 2 * n { r } else { r * r };
    let mut far = 0.0f64;
    for mask in 0..(1u32 << dim) {
        let c: Coords = (0..dim)
            .map(|k| if mask >> k & 1 == 1 { half(k) } else { -half(k) })
            .collect();
        far = far.max(cc_norm(&GroupPoint::from_coords_unchecked(n, c)));
    }
    for _ in 0..samples {
        let face = rng.random_range(0..dim);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let c: Coords = (0..dim)
            .map(|k| {
                if k == face {
                    sign * half(k)
                } else {
                    half(k) * (2.0 * rng.random::<f64>() - 1.0)
                }
            })
            .collect();
        far = far.max(cc_norm(&GroupPoint::from_coords_unchecked(n, c)));
    }
    Ok(BallBoxConstants {
        radius: r,
        c_lower: r / far,
        c_upper: upper / r,
    })
}

/// Monte Carlo second moments `∫_{B_r} w_i w_j dμ` with standard errors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentMatrix {
    pub dim: usize,
    pub radius: f64,
    pub samples: usize,
    pub volume: f64,
    /// Row-major `dim × dim` integrals.
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Standard error of `m_ii − m_jj` for horizontal `i, j`, row-major `2n × 2n`.
    pub diagonal_diff_se: Vec<f64>,
}

impl MomentMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    pub fn se(&self, i: usize, j: usize) -> f64 {
        self.std_errors[i * self.dim + j]
    }

    pub fn horizontal(&self) -> usize {
        self.dim - 1
    }

    pub fn diff_se(&self, i: usize, j: usize) -> f64 {
        self.diagonal_diff_se[i * self.horizontal() + j]
    }

    /// Ball average of `w_1²`, the normalization used by the product formula.
    pub fn normalized_horizontal(&self) -> f64 {
        let h = self.horizontal();
        (0..h).map(|i| self.get(i, i)).sum::<f64>() / h as f64 / self.volume
    }
}

pub fn ball_moments(n: usize, r: f64, samples: usize, seed: u64) -> Result<MomentMatrix> {
    let volume = ball_volume(n, r)?;
    let sample = sample_ball_offsets(n, r, samples, seed)?;
    let dim = 2 * n + 1;
    let h = 2 * n;
    let mut acc = vec![Accumulator::new(); dim * dim];
    let mut diff = vec![Accumulator::new(); h * h];
    for w in &sample.points {
        let c = w.coords();
        for i in 0..dim {
            for j in i..dim {
                acc[i * dim + j].push(c[i] * c[j]);
            }
        }
        for i in 0..h {
            for j in (i + 1)..h {
                diff[i * h + j].push(c[i] * c[i] - c[j] * c[j]);
            }
        }
    }
    let mut values = vec![0.0; dim * dim];
    let mut std_errors = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in i..dim {
            let e = acc[i * dim + j].estimate();
            for (a, b) in [(i, j), (j, i)] {
                values[a * dim + b] = volume * e.mean;
                std_errors[a * dim + b] = volume * e.standard_error;
            }
        }
    }
    let mut diagonal_diff_se = vec![0.0; h * h];
    for i in 0..h {
        for j in (i + 1)..h {
            let se = volume * diff[i * h + j].estimate().standard_error;
            diagonal_diff_se[i * h + j] = se;
            diagonal_diff_se[j * h + i] = se;
        }
    }
    Ok(MomentMatrix {
        dim,
        radius: r,
        samples,
        volume,
        values,
        std_errors,
        diagonal_diff_se,
    })
}

/// Outcome of a measure-contraction experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McpReport {
    pub tau: f64,
    pub radius: f64,
    pub samples: usize,
    /// Smallest θ satisfying the contraction inequality over all samples.
    pub theta: f64,
    pub mean_ratio: f64,
}

/// Contraction toward `x` along geodesics in H^n.
///
/// For an infinitesimal set `A` around `y` the inequality reduces to
/// `θ ≥ τ^{2n+2} / J_τ(y)`, with `J_τ` the Jacobian of `y ↦ Φ_τ(x, y)`;
/// `J_τ` is computed by finite differences.
pub fn mcp_check(x: &GroupPoint, r: f64, tau: f64, samples: usize, seed: u64) -> Result<McpReport> {
    check_tau(tau)?;
    if r > 1.0 {
        return Err(invalid("r", "the contraction check is run for r ≤ 1"));
    }
    let n = x.n();
    let sample = sample_ball_offsets(n, r, samples, seed)?;
    let dim = 2 * n + 1;
    let contraction = |c: &[f64]| -> Vec<f64> {
        let w = GroupPoint::from_coords_unchecked(n, Coords::from_slice(c));
        if tau == 1.0 {
            return c.to_vec();
        }
        match solve_endpoint(&w) {
            Ok(g) => geodesic_point(&g, tau).coords().to_vec(),
            Err(_) => vec![0.0; c.len()],
        }
    };
    let scale: Vec<f64> = (0..dim).map(|k| if k < 2 * n { r } else { r * r }).collect();
    let ball_ratio = tau.powi(dim as i32 + 1);
    let points = sample.points.iter().map(|w| w.coords().to_vec());
    Ok(theta_over(points, &contraction, &scale, ball_ratio, tau, r, samples))
}

/// Flat control: contraction `y ↦ τ y` of a Euclidean ball in `R^dim`.
pub fn mcp_check_euclidean(dim: usize, r: f64, tau: f64, samples: usize, seed: u64) -> Result<McpReport> {
    check_tau(tau)?;
    check_radius(r)?;
    if dim == 0 || samples == 0 {
        return Err(invalid("samples", "dimension and sample count must be positive"));
    }
    let mut rng = sampling::stream(seed);
    let mut points = Vec::with_capacity(samples);
    while points.len() < samples {
        let p: Vec<f64> = (0..dim).map(|_| r * (2.0 * rng.random::<f64>() - 1.0)).collect();
        if p.iter().map(|c| c * c).sum::<f64>() < r * r {
            points.push(p);
        }
    }
    let contraction = |c: &[f64]| -> Vec<f64> { c.iter().map(|v| tau * v).collect() };
    let scale = vec![r; dim];
    Ok(theta_over(
        points.into_iter(),
        &contraction,
        &scale,
        tau.powi(dim as i32),
        tau,
        r,
        samples,
    ))
}

fn theta_over<I, F>(points: I, map: &F, scale: &[f64], ball_ratio: f64, tau: f64, r: f64, samples: usize) -> McpReport
where
    I: Iterator<Item = Vec<f64>>,
    F: Fn(&[f64]) -> Vec<f64>,
{
    let dim = scale.len();
    let mut theta = 0.0f64;
    let mut acc = Accumulator::new();
    for p in points {
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        for k in 0..dim {
            let step = 1e-6 * scale[k];
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[k] += step;
            minus[k] -= step;
            let (fp, fm) = (map(&plus), map(&minus));
            for row in 0..dim {
                m[(row, k)] = (fp[row] - fm[row]) / (2.0 * step);
            }
        }
        let jac = m.determinant().abs();
        if jac > 0.0 && jac.is_finite() {
            let ratio = ball_ratio / jac;
            theta = theta.max(ratio);
            acc.push(ratio);
        }
    }
    McpReport {
        tau,
        radius: r,
        samples,
        theta,
        mean_ratio: acc.mean(),
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(invalid("r", format!("radius must be positive and finite, got {r}")))
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(invalid("n", "the Heisenberg group needs n >= 1"))
    } else {
        Ok(())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(invalid("tau", format!("contraction parameter must lie in (0, 1], got {tau}")))
    }
}
