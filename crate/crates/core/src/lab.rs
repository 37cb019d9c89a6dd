//! Regularity experiments: averaged-product limits, Taylor groups of the product
//! quotient, Pansu L² differentiation, mean-value constants of translation
//! defects and Lipschitz profiles of solved maps.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use ordered_float::OrderedFloat;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cat0::{TargetPoint, TargetSpace};
use crate::cc_metric::{ball_volume, cc_norm, sample_ball_offsets};
use crate::domain::{DomainBox, CENTRAL_EXTENT};
use crate::error::{invalid, Error, Result};
use crate::heisenberg::{coordinate_gradient, multiply, dilate, GroupPoint, HorizontalVector};
use crate::sampling::{self, linear_fit, Accumulator, MeanEstimate};
use crate::heisenberg::Generator;
use crate::solver::{discrete_energy, translation_defect, GridMap, Ints, Lattice, Side};

type ScalarFn = dyn Fn(&GroupPoint) -> f64 + Send + Sync;
type GradFn = dyn Fn(&GroupPoint) -> Vec<f64> + Send + Sync;

/// A smooth real function on H^n with its Euclidean coordinate gradient.
#[derive(Clone)]
pub struct Field {
    value: Arc<ScalarFn>,
    gradient: Option<Arc<GradFn>>,
}

impl std::fmt::Debug for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Field")
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl Field {
    /// A field whose gradient is taken by central differences.
    pub fn new(value: impl Fn(&GroupPoint) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            gradient: None,
        }
    }

    /// A field with the coordinate gradient `(∂_{x}, ∂_{y}, ∂_t)` in closed form.
    pub fn with_gradient(
        value: impl Fn(&GroupPoint) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&GroupPoint) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            gradient: Some(Arc::new(gradient)),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::with_gradient(move |_| c, |p| vec![0.0; p.coords().len()])
    }

    /// The coordinate `k` of exponential coordinates.
    pub fn coordinate(k: usize) -> Self {
        Self::with_gradient(
            move |p| p.coords()[k],
            move |p| {
                let mut g = vec![0.0; p.coords().len()];
                g[k] = 1.0;
                g
            },
        )
    }

    pub fn eval(&self, p: &GroupPoint) -> f64 {
        (self.value)(p)
    }

    pub fn coordinate_gradient(&self, p: &GroupPoint) -> Vec<f64> {
        match &self.gradient {
            Some(g) => g(p),
            None => coordinate_gradient(|q| (self.value)(q), p, 1e-5),
        }
    }

    /// `(X_i f, Y_i f)` with `X_i = ∂_{x_i} − ½ y_i ∂_t`, `Y_i = ∂_{y_i} + ½ x_i ∂_t`.
    pub fn horizontal_gradient(&self, p: &GroupPoint) -> HorizontalVector {
        let n = p.n();
        let d = self.coordinate_gradient(p);
        let dt = d[2 * n];
        HorizontalVector {
            a: (0..n).map(|i| d[i] - 0.5 * p.y()[i] * dt).collect(),
            b: (0..n).map(|i| d[n + i] + 0.5 * p.x()[i] * dt).collect(),
        }
    }
}

/// Test pairs `(η, f)` used by the averaged-product experiment, by name.
pub fn lemma53_pair(name: &str) -> Result<(Field, Field)> {
    match name {
        "x1-x1" => Ok((Field::coordinate(0), Field::coordinate(0))),
        "x1-y1" => Ok((Field::coordinate(0), Field::coordinate(1))),
        "mixed" => {
            let eta = Field::with_gradient(|p| p.x()[0] + 2.0 * p.y()[0], |_| vec![1.0, 2.0, 0.0]);
            let f = Field::with_gradient(
                |p| p.x()[0].sin() + p.t(),
                |p| vec![p.x()[0].cos(), 0.0, 1.0],
            );
            Ok((eta, f))
        }
        other => Err(invalid(
            "numerics.pair",
            format!("unknown test pair {other:?}; expected x1-x1, x1-y1 or mixed"),
        )),
    }
}

fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::EmptyInput("ladder"));
    }
    if ladder.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(invalid("numerics.ladder", "every rung must be positive and finite"));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("numerics.ladder", "rungs must be strictly decreasing"));
    }
    Ok(())
}

/// Errors at or below this level count as converged in halving ratios.
pub const ERROR_FLOOR: f64 = 1e-12;

/// Mean contraction of `errors` per halving of the scale, over consecutive
/// rungs whose first error is above [`ERROR_FLOOR`]. `None` when every
/// error is at the floor.
pub fn mean_halving_ratio(scales: &[f64], errors: &[f64]) -> Option<f64> {
    let mut acc = Vec::new();
    for k in 1..errors.len() {
        if errors[k - 1] > ERROR_FLOOR {
            let step = (scales[k - 1] / scales[k]).log2();
            acc.push((errors[k].max(ERROR_FLOOR) / errors[k - 1]).powf(1.0 / step));
        }
    }
    (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lemma53Row {
    pub epsilon: f64,
    /// Sample mean of the product quotient over `B_1`, unnormalized.
    pub raw_mean: f64,
    /// `raw_mean` divided by the sampled second moment.
    pub lhs: f64,
    pub lhs_se: f64,
    /// `Σ_j X_jη X_jf + Y_jη Y_jf` at the base point.
    pub rhs: f64,
    /// The ε → 0 limit of `lhs` on the same samples.
    pub limit_mc: f64,
    /// `|lhs − limit_mc|`: the deterministic part of the discrepancy.
    pub error: f64,
    /// `|limit_mc − rhs|`: the sampling error of the moment identities.
    pub moment_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lemma53Table {
    pub point: Vec<f64>,
    pub samples: usize,
    /// Sampled `∫_{B_1} w_1² / μ(B_1)`, averaged over horizontal coordinates.
    pub second_moment: f64,
    pub rows: Vec<Lemma53Row>,
    pub mean_halving_ratio: Option<f64>,
}

/// Product quotients `(η(p·δ_ε w) − η(p))/ε · (f(p·δ_ε w) − f(p))/ε` over one
/// set of unit-ball samples reused on every rung.
pub fn lemma53_experiment(
    eta: &Field,
    f: &Field,
    p: &GroupPoint,
    ladder: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Lemma53Table> {
    check_ladder(ladder)?;
    if samples < 2 {
        return Err(invalid("numerics.samples", "at least two samples are required"));
    }
    let n = p.n();
    let ball = sample_ball_offsets(n, 1.0, samples, seed)?.points;
    let m2 = ball.iter().map(|w| w.horizontal_norm_sq()).sum::<f64>() / (2 * n * samples) as f64;
    let ge = eta.horizontal_gradient(p);
    let gf = f.horizontal_gradient(p);
    let rhs = ge.dot(&gf);
    let limit: Accumulator = ball.iter().map(|w| ge.dot_horizontal(w) * gf.dot_horizontal(w)).collect();
    let limit_mc = limit.mean() / m2;
    let (e0, f0) = (eta.eval(p), f.eval(p));
    let mut rows = Vec::with_capacity(ladder.len());
    for &eps in ladder {
        let acc: Accumulator = ball
            .iter()
            .map(|w| {
                let q = multiply(p, &dilate(eps, w).expect("positive rung"));
                (eta.eval(&q) - e0) / eps * ((f.eval(&q) - f0) / eps)
            })
            .collect();
        let est = acc.estimate();
        let lhs = est.mean / m2;
        rows.push(Lemma53Row {
            epsilon: eps,
            raw_mean: est.mean,
            lhs,
            lhs_se: est.standard_error / m2,
            rhs,
            limit_mc,
            error: (lhs - limit_mc).abs(),
            moment_error: (limit_mc - rhs).abs(),
        });
    }
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    Ok(Lemma53Table {
        point: p.coords().to_vec(),
        samples,
        second_moment: m2,
        mean_halving_ratio: mean_halving_ratio(ladder, &errors),
        rows,
    })
}

/// The five groups of the first-order expansion of the product quotient,
/// with `c = Σ_j (p_j w_{j+n} − p_{j+n} w_j)` and coordinate partials at `p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaylorTerms {
    pub epsilon: f64,
    /// `Σ_i ∂_i f ∂_i η w_i²`
    pub diagonal: MeanEstimate,
    /// `Σ_{i≠j} ∂_i f ∂_j η w_i w_j`
    pub cross: MeanEstimate,
    /// `¼ ∂_t f ∂_t η c²`
    pub central: MeanEstimate,
    /// `½ ∂_t η (Σ_i ∂_i f w_i) c`
    pub mixed_eta: MeanEstimate,
    /// `½ ∂_t f (Σ_i ∂_i η w_i) c`
    pub mixed_f: MeanEstimate,
    pub group_sum: MeanEstimate,
    /// The product quotient itself at this ε.
    pub quotient: MeanEstimate,
    /// Quotient minus the group sum, per sample.
    pub remainder: MeanEstimate,
}

pub fn taylor_product_terms(eta: &Field, f: &Field, p: &GroupPoint, eps: f64, samples: usize, seed: u64) -> Result<TaylorTerms> {
    check_ladder(&[eps])?;
    if samples < 2 {
        return Err(invalid("numerics.samples", "at least two samples are required"));
    }
    let n = p.n();
    let ball = sample_ball_offsets(n, 1.0, samples, seed)?.points;
    let de = eta.coordinate_gradient(p);
    let df = f.coordinate_gradient(p);
    let (e0, f0) = (eta.eval(p), f.eval(p));
    let mut acc: [Accumulator; 8] = Default::default();
    for w in &ball {
        let wh = &w.coords()[..2 * n];
        let c: f64 = (0..n).map(|j| p.x()[j] * w.y()[j] - p.y()[j] * w.x()[j]).sum();
        let mut diag = 0.0;
        let mut cross = 0.0;
        for i in 0..2 * n {
            for j in 0..2 * n {
                let v = df[i] * de[j] * wh[i] * wh[j];
                if i == j {
                    diag += v;
                } else {
                    cross += v;
                }
            }
        }
        let fw: f64 = (0..2 * n).map(|i| df[i] * wh[i]).sum();
        let ew: f64 = (0..2 * n).map(|i| de[i] * wh[i]).sum();
        let central = 0.25 * df[2 * n] * de[2 * n] * c * c;
        let mixed_eta = 0.5 * de[2 * n] * fw * c;
        let mixed_f = 0.5 * df[2 * n] * ew * c;
        let sum = diag + cross + central + mixed_eta + mixed_f;
        let q = multiply(p, &dilate(eps, w)?);
        let quotient = (eta.eval(&q) - e0) / eps * ((f.eval(&q) - f0) / eps);
        for (a, v) in acc
            .iter_mut()
            .zip([diag, cross, central, mixed_eta, mixed_f, sum, quotient, quotient - sum])
        {
            a.push(v);
        }
    }
    let [a0, a1, a2, a3, a4, a5, a6, a7] = acc.map(|a| a.estimate());
    Ok(TaylorTerms {
        epsilon: eps,
        diagonal: a0,
        cross: a1,
        central: a2,
        mixed_eta: a3,
        mixed_f: a4,
        group_sum: a5,
        quotient: a6,
        remainder: a7,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PansuRow {
    pub epsilon: f64,
    /// Average over `(p, w) ∈ B_1 × B_1` of `|∇_H f(p)·w − (f(p·δ_ε w) − f(p))/ε|²`.
    pub error: MeanEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PansuTable {
    pub samples: usize,
    pub rows: Vec<PansuRow>,
    pub mean_halving_ratio: Option<f64>,
}

pub fn pansu_l2_convergence(f: &Field, n: usize, ladder: &[f64], samples: usize, seed: u64) -> Result<PansuTable> {
    check_ladder(ladder)?;
    if samples < 2 {
        return Err(invalid("numerics.samples", "at least two samples are required"));
    }
    let base = sample_ball_offsets(n, 1.0, samples, seed)?.points;
    let dirs = sample_ball_offsets(n, 1.0, samples, seed ^ 0x9e37_79b9_7f4a_7c15)?.points;
    let prepared: Vec<(f64, f64)> = base
        .iter()
        .zip(&dirs)
        .map(|(p, w)| (f.eval(p), f.horizontal_gradient(p).dot_horizontal(w)))
        .collect();
    let mut rows = Vec::with_capacity(ladder.len());
    for &eps in ladder {
        let acc: Accumulator = base
            .iter()
            .zip(&dirs)
            .zip(&prepared)
            .map(|((p, w), (fp, lin))| {
                let q = multiply(p, &dilate(eps, w).expect("positive rung"));
                let quotient = (f.eval(&q) - fp) / eps;
                (lin - quotient).powi(2)
            })
            .collect();
        rows.push(PansuRow {
            epsilon: eps,
            error: acc.estimate(),
        });
    }
    let errors: Vec<f64> = rows.iter().map(|r| r.error.mean).collect();
    Ok(PansuTable {
        samples,
        mean_halving_ratio: mean_halving_ratio(ladder, &errors),
        rows,
    })
}

/// Integer offsets `w` with `‖w‖_cc ≤ r`, so that `B_r(p)` is `{p · w}`.
pub fn ball_offsets(lattice: &Lattice, r: f64) -> Vec<Ints> {
    annulus_offsets(lattice, 0.0, r)
        .into_iter()
        .map(|(w, _)| w)
        .collect()
}

/// Offsets with `lo ≤ ‖w‖_cc ≤ hi`, paired with their norms.
fn annulus_offsets(lattice: &Lattice, lo: f64, hi: f64) -> Vec<(Ints, f64)> {
    let n = lattice.n();
    let h = lattice.h();
    let kh = (hi / h + 1e-9).floor() as i64;
    let kt = (CENTRAL_EXTENT * hi * hi / (0.5 * h * h) + 1e-9).floor() as i64;
    let mut out = Vec::new();
    let dim = 2 * n + 1;
    let mut w: Ints = std::iter::repeat_n(-kh, 2 * n).chain([-kt]).collect();
    loop {
        let coords: Vec<f64> = (0..dim)
            .map(|k| if k < 2 * n { h * w[k] as f64 } else { 0.5 * h * h * w[k] as f64 })
            .collect();
        let p = GroupPoint::from_slice(&coords).expect("finite offsets");
        let hn = p.horizontal_norm_sq().sqrt();
        if hn <= hi * (1.0 + 1e-12) {
            let d = cc_norm(&p);
            if d >= lo * (1.0 - 1e-12) && d <= hi * (1.0 + 1e-12) {
                out.push((w.clone(), d));
            }
        }
        // Odometer over the offset box.
        let mut k = dim;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            let top = if k < 2 * n { kh } else { kt };
            if w[k] < top {
                w[k] += 1;
                break;
            }
            w[k] = if k < 2 * n { -kh } else { -kt };
        }
    }
}

/// `p · w` for integer node coordinates.
fn compose(n: usize, p: &[i64], w: &[i64]) -> Ints {
    let mut q: Ints = p.iter().zip(w).map(|(a, b)| a + b).collect();
    for i in 0..n {
        q[2 * n] += p[i] * w[n + i] - p[n + i] * w[i];
    }
    q
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MoserRow {
    pub center: Vec<f64>,
    pub radius: f64,
    pub value: f64,
    pub ball_average: f64,
    pub nodes: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MoserTable {
    pub rows: Vec<MoserRow>,
    /// The empirical constant: the largest ratio.
    pub constant: f64,
}

/// `f(center) / (average of f over the lattice ball B_r(center))` for every
/// center and radius. Every ball node must lie where `defined` holds.
pub fn moser_mean_value_check(
    lattice: &Lattice,
    f: &[f64],
    defined: &[bool],
    centers: &[GroupPoint],
    radii: &[f64],
) -> Result<MoserTable> {
    if f.len() != lattice.len() || defined.len() != lattice.len() {
        return Err(Error::DimensionMismatch {
            expected: lattice.len(),
            found: f.len().min(defined.len()),
        });
    }
    if centers.is_empty() || radii.is_empty() {
        return Err(Error::EmptyInput("centers and radii"));
    }
    let n = lattice.n();
    let mut rows = Vec::new();
    for &r in radii {
        if !(r > 0.0) {
            return Err(invalid("numerics.radii", format!("radius must be positive, got {r}")));
        }
        let offsets = ball_offsets(lattice, r);
        for c in centers {
            let ci = lattice.locate(c).ok_or_else(|| {
                invalid("centers", format!("center {:?} is not a lattice node", c.coords()))
            })?;
            let cint = lattice.ints(ci);
            let mut acc = 0.0;
            for w in &offsets {
                let q = compose(n, &cint, w);
                match lattice.index_of(&q) {
                    Some(j) if defined[j] => acc += f[j],
                    _ => {
                        return Err(Error::DomainEscape(format!(
                            "ball of radius {r} around {:?} leaves the domain of the field",
                            c.coords()
                        )))
                    }
                }
            }
            let avg = acc / offsets.len() as f64;
            let value = f[ci];
            let ratio = if avg == 0.0 && value == 0.0 { 1.0 } else { value / avg };
            rows.push(MoserRow {
                center: c.coords().to_vec(),
                radius: r,
                value,
                ball_average: avg,
                nodes: offsets.len(),
                ratio,
            });
        }
    }
    let constant = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(MoserTable { rows, constant })
}

/// The unit-step left-translation defects `d²(u(p), u(g^{±1} p))` of one
/// solved map, with their admissible masks.
pub struct TranslationDefects<'a> {
    map: &'a GridMap,
    fields: Vec<(Vec<f64>, Vec<bool>)>,
}

impl<'a> TranslationDefects<'a> {
    pub fn new(map: &'a GridMap) -> Result<Self> {
        let n = map.lattice().n();
        let mut fields = Vec::with_capacity(4 * n);
        for g in Generator::all(n) {
            for steps in [1, -1] {
                fields.push(translation_defect(map, g, steps, Side::Left)?);
            }
        }
        Ok(Self { map, fields })
    }

    /// Mean-value constants of every defect over the given centers and radii.
    pub fn moser_table(&self, centers: &[GroupPoint], radii: &[f64]) -> Result<MoserTable> {
        let lat = self.map.lattice();
        let mut rows = Vec::new();
        for (f, mask) in &self.fields {
            rows.extend(moser_mean_value_check(lat, f, mask, centers, radii)?.rows);
        }
        let constant = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
        Ok(MoserTable { rows, constant })
    }
}

/// Points of the grid `spacing · ℤ^{2n+1}` in the box where every defect
/// set admits every radius.
pub fn common_core_centers(defects: &[TranslationDefects<'_>], spacing: f64, radii: &[f64]) -> Result<Vec<GroupPoint>> {
    let Some(first) = defects.first() else {
        return Err(Error::EmptyInput("maps"));
    };
    if !(spacing > 0.0) {
        return Err(invalid("spacing", format!("center spacing must be positive, got {spacing}")));
    }
    let bounds = first.map.lattice().bounds().clone();
    let per_axis: Vec<(i64, i64)> = (0..bounds.lower().len())
        .map(|k| {
            (
                (bounds.lower()[k] / spacing - 1e-9).ceil() as i64,
                (bounds.upper()[k] / spacing + 1e-9).floor() as i64,
            )
        })
        .collect();
    let mut out = Vec::new();
    let mut idx: Vec<i64> = per_axis.iter().map(|r| r.0).collect();
    'grid: loop {
        let c = GroupPoint::from_slice(&idx.iter().map(|&v| spacing * v as f64).collect::<Vec<_>>())?;
        if defects
            .iter()
            .all(|d| d.moser_table(std::slice::from_ref(&c), radii).is_ok())
        {
            out.push(c);
        }
        for k in (0..idx.len()).rev() {
            if idx[k] < per_axis[k].1 {
                idx[k] += 1;
                continue 'grid;
            }
            idx[k] = per_axis[k].0;
        }
        break;
    }
    if out.is_empty() {
        return Err(Error::EmptyLattice("no center admits every radius on every lattice".into()));
    }
    Ok(out)
}

/// Refinement study of mean-value constants: for each radius, the centers
/// admissible on every map; the constant of each map is the largest ratio
/// over all radii and centers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MoserRefinement {
    pub radii: Vec<f64>,
    pub centers_per_radius: Vec<usize>,
    pub tables: Vec<MoserTable>,
    pub constants: Vec<f64>,
}

pub fn moser_refinement(maps: &[&GridMap], spacing: f64, radii: &[f64]) -> Result<MoserRefinement> {
    let defects = maps.iter().map(|u| TranslationDefects::new(u)).collect::<Result<Vec<_>>>()?;
    let mut tables: Vec<MoserTable> = maps
        .iter()
        .map(|_| MoserTable {
            rows: Vec::new(),
            constant: f64::NEG_INFINITY,
        })
        .collect();
    let mut centers_per_radius = Vec::with_capacity(radii.len());
    for &r in radii {
        let centers = common_core_centers(&defects, spacing, &[r])?;
        centers_per_radius.push(centers.len());
        for (d, t) in defects.iter().zip(tables.iter_mut()) {
            let part = d.moser_table(&centers, &[r])?;
            t.constant = t.constant.max(part.constant);
            t.rows.extend(part.rows);
        }
    }
    Ok(MoserRefinement {
        radii: radii.to_vec(),
        centers_per_radius,
        constants: tables.iter().map(|t| t.constant).collect(),
        tables,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleQuotient {
    pub scale: f64,
    pub sup_quotient: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzOptions {
    /// Width of the excluded boundary collar; defaults to a quarter of the inradius.
    pub collar: Option<f64>,
    pub max_bases: usize,
    pub max_offsets: usize,
    pub seed: u64,
}

impl Default for LipschitzOptions {
    fn default() -> Self {
        Self {
            collar: None,
            max_bases: 2000,
            max_offsets: 4000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityReport {
    pub n: usize,
    pub h: f64,
    pub target: TargetSpace,
    pub seed: u64,
    pub collar: f64,
    pub scales: Vec<ScaleQuotient>,
    /// Least-squares slope of `log(sup_quotient · scale)` against `log(scale)`.
    pub holder_exponent: Option<f64>,
    pub energy: f64,
    pub moser_constant: Option<f64>,
    /// `C E / μ(B_{collar})`.
    pub bound_ball_normalized: Option<f64>,
    /// `C E`.
    pub bound_plain: Option<f64>,
    pub moser: Vec<MoserRow>,
    pub subsolution_max_ratio: Option<f64>,
}

impl RegularityReport {
    /// Attaches a mean-value constant and the two normalizations of the
    /// Lipschitz bound built from it.
    pub fn with_moser(mut self, table: &MoserTable) -> Result<Self> {
        let n = self.n;
        let c = table.constant;
        self.moser_constant = Some(c);
        self.bound_plain = Some(c * self.energy);
        self.bound_ball_normalized = Some(c * self.energy / ball_volume(n, self.collar)?);
        self.moser = table.rows.clone();
        Ok(self)
    }
}

/// Sup of `d(u(p), u(q)) / d_cc(p, q)` over node pairs with
/// `d_cc ∈ [σ, 2σ]`, both nodes at distance at least the collar from the
/// boundary, for each scale `σ`.
pub fn lipschitz_profile(u: &GridMap, scales: &[f64], opts: &LipschitzOptions) -> Result<RegularityReport> {
    let lat = u.lattice();
    check_ladder(scales)?;
    let h = lat.h();
    if let Some(s) = scales.iter().find(|&&s| s < 2.0 * h * (1.0 - 1e-12)) {
        return Err(invalid("numerics.scales", format!("scale {s} is below twice the spacing {h}")));
    }
    if opts.max_bases == 0 || opts.max_offsets == 0 {
        return Err(invalid("numerics.pairs", "pair budgets must be positive"));
    }
    let collar = opts.collar.unwrap_or(0.25 * lat.bounds().inradius());
    let core: Vec<bool> = (0..lat.len())
        .map(|i| lat.bounds().contains_ball(&lat.point(i), collar))
        .collect();
    let mut bases: Vec<usize> = (0..lat.len()).filter(|&i| core[i]).collect();
    let mut rng = sampling::stream(opts.seed);
    bases.shuffle(&mut rng);
    bases.truncate(opts.max_bases);
    bases.sort_unstable();
    let base_ints: Vec<Ints> = bases.iter().map(|&i| lat.ints(i)).collect();
    let n = lat.n();
    let space = u.space();
    let mut out = Vec::with_capacity(scales.len());
    for &s in scales {
        let mut offs = annulus_offsets(lat, s, 2.0 * s);
        offs.shuffle(&mut rng);
        offs.truncate(opts.max_offsets);
        let mut sup = 0.0f64;
        let mut pairs = 0usize;
        for (&i, pi) in bases.iter().zip(&base_ints) {
            let up = u.get(i);
            for (w, d) in &offs {
                let Some(j) = lat.index_of(&compose(n, pi, w)) else { continue };
                if !core[j] {
                    continue;
                }
                pairs += 1;
                let dn = crate::cat0::distance(&space, &up, &u.get(j))?;
                sup = sup.max(dn / d);
            }
        }
        if pairs == 0 {
            return Err(Error::TooFewPairs { scale: s });
        }
        out.push(ScaleQuotient {
            scale: s,
            sup_quotient: sup,
            pairs,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = out
        .iter()
        .filter(|q| q.sup_quotient > 0.0)
        .map(|q| (q.scale.ln(), (q.sup_quotient * q.scale).ln()))
        .unzip();
    let holder_exponent = if xs.len() >= 2 {
        linear_fit(&xs, &ys).map(|(slope, _)| slope)
    } else {
        None
    };
    Ok(RegularityReport {
        n,
        h,
        target: space,
        seed: opts.seed,
        collar,
        scales: out,
        holder_exponent,
        energy: discrete_energy(u),
        moser_constant: None,
        bound_ball_normalized: None,
        bound_plain: None,
        moser: Vec::new(),
        subsolution_max_ratio: None,
    })
}

/// Named boundary data on the unit box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPreset {
    /// Spider(3): the horizontal plane split into three sectors centered on the
    /// faces `x = ½`, `y = ½` and `y = −½` side, each sent to its own leg with
    /// radius `|z| |cos(3θ/2)| (1 + t)`, which vanishes on the sector edges.
    Tripod,
    /// `x_1` into ℝ.
    CoordinateX,
    /// `x_1 + 2 y_1` into ℝ.
    Linear,
    /// `1 + x_1 y_1 + t` into ℝ.
    Scalar,
    /// The `Scalar` profile placed on leg 1 of Spider(3).
    SingleLeg,
}

fn scalar_profile(p: &GroupPoint) -> f64 {
    1.0 + p.x()[0] * p.y()[0] + p.t()
}

fn tripod_value(p: &GroupPoint) -> TargetPoint {
    let (x, y) = (p.x()[0], p.y()[0]);
    let r = x.hypot(y);
    if r == 0.0 {
        return TargetPoint::hub();
    }
    // θ ∈ [−π/3, 5π/3): sector k covers [(2k − 3)π/3, (2k − 1)π/3).
    let theta = (y.atan2(x) + PI / 3.0).rem_euclid(TAU) - PI / 3.0;
    let leg = (((theta + PI / 3.0) / (2.0 * PI / 3.0)).floor() as usize).min(2) + 1;
    let radius = r * (1.5 * theta).cos().abs() * (1.0 + p.t());
    TargetPoint::spider(leg, radius.max(0.0)).expect("valid leg")
}

impl BoundaryPreset {
    pub fn space(self) -> TargetSpace {
        match self {
            Self::Tripod | Self::SingleLeg => TargetSpace::Spider { legs: 3 },
            _ => TargetSpace::Euclidean { dim: 1 },
        }
    }

    pub fn value(self, p: &GroupPoint) -> TargetPoint {
        match self {
            Self::Tripod => tripod_value(p),
            Self::CoordinateX => TargetPoint::real(p.x()[0]),
            Self::Linear => TargetPoint::real(p.x()[0] + 2.0 * p.y()[0]),
            Self::Scalar => TargetPoint::real(scalar_profile(p)),
            Self::SingleLeg => TargetPoint::spider(1, scalar_profile(p).max(0.0)).expect("valid leg"),
        }
    }

    /// Boundary map on `lattice` (every node is filled; interior values are
    /// replaced by the solver).
    pub fn boundary(self, lattice: Arc<Lattice>) -> Result<GridMap> {
        if lattice.n() != 1 {
            return Err(invalid("geometry.n", "boundary presets are defined for n = 1"));
        }
        GridMap::from_fn(lattice, self.space(), |p| self.value(p))
    }
}

/// The unit box `[−½, ½]³`.
pub fn unit_box() -> DomainBox {
    DomainBox::centered_cube(1, 0.5).expect("valid box")
}

/// Lattice cc-norms of `targets` from shortest paths out of the origin along
/// straight horizontal segments `(h a, h b)` with `max(|a|, |b|) ≤ reach`
/// (primitive directions only), on H¹ nodes inside the given box.
///
/// Every such path is a horizontal curve, so the result bounds the true
/// norm from above; the gap shrinks as `reach` grows and `h` falls.
pub fn lattice_geodesic_norms(bounds: &DomainBox, h: f64, reach: i64, targets: &[GroupPoint]) -> Result<Vec<f64>> {
    if bounds.n() != 1 {
        return Err(invalid("geometry.n", "the shortest-path oracle is implemented for n = 1"));
    }
    if reach < 1 {
        return Err(invalid("reach", "reach must be at least 1"));
    }
    let lat = Lattice::new(bounds.clone(), h)?;
    let origin = lat
        .locate(&GroupPoint::identity(1))
        .ok_or_else(|| invalid("bounds", "the box must contain the origin"))?;
    let mut dirs = Vec::new();
    for a in -reach..=reach {
        for b in -reach..=reach {
            if gcd(a.abs(), b.abs()) == 1 {
                dirs.push((a, b, h * ((a * a + b * b) as f64).sqrt()));
            }
        }
    }
    let mut dist = vec![f64::INFINITY; lat.len()];
    let mut heap = BinaryHeap::new();
    dist[origin] = 0.0;
    heap.push(Reverse((OrderedFloat(0.0), origin)));
    while let Some(Reverse((OrderedFloat(d), i))) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        let p = lat.ints(i);
        for &(a, b, len) in &dirs {
            let q = [p[0] + a, p[1] + b, p[2] + p[0] * b - p[1] * a];
            if let Some(j) = lat.index_of(&q) {
                let nd = d + len;
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(Reverse((OrderedFloat(nd), j)));
                }
            }
        }
    }
    targets
        .iter()
        .map(|t| {
            let j = lat
                .locate(t)
                .ok_or_else(|| invalid("targets", format!("{:?} is not a lattice node", t.coords())))?;
            Ok(dist[j])
        })
        .collect()
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
