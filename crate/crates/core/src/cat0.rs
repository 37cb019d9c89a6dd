//! CAT(0) target spaces: Euclidean space and the k-spider (k half-lines glued
//! at a hub).

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TargetSpace {
    Euclidean { dim: usize },
    Spider { legs: usize },
}

impl TargetSpace {
    pub fn euclidean(dim: usize) -> Result<Self> {
        let s = TargetSpace::Euclidean { dim };
        s.validate()?;
        Ok(s)
    }

    pub fn spider(legs: usize) -> Result<Self> {
        let s = TargetSpace::Spider { legs };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TargetSpace::Euclidean { dim: 0 } => {
                Err(invalid("target.dim", "Euclidean targets need dimension >= 1"))
            }
            TargetSpace::Spider { legs } if legs < 3 => {
                Err(invalid("target.legs", format!("a spider needs at least 3 legs, got {legs}")))
            }
            _ => Ok(()),
        }
    }

    /// Checks that `p` is a point of this space.
    pub fn check(&self, p: &TargetPoint) -> Result<()> {
        match (self, p) {
            (TargetSpace::Euclidean { dim }, TargetPoint::Euclidean(c)) => {
                if c.len() != *dim {
                    return Err(Error::DimensionMismatch {
                        expected: *dim,
                        found: c.len(),
                    });
                }
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("point", "coordinates must be finite"));
                }
                Ok(())
            }
            (TargetSpace::Spider { legs }, TargetPoint::Spider { leg, radius }) => {
                let canonical = (*radius == 0.0 && *leg == 0) || (*radius > 0.0 && (1..=*legs).contains(leg));
                if radius.is_finite() && canonical {
                    Ok(())
                } else {
                    Err(invalid(
                        "point",
                        format!("(leg {leg}, radius {radius}) is not a point of Spider({legs})"),
                    ))
                }
            }
            (TargetSpace::Euclidean { .. }, _) => Err(Error::KindMismatch { space: "Euclidean" }),
            (TargetSpace::Spider { .. }, _) => Err(Error::KindMismatch { space: "spider" }),
        }
    }

    /// The base point: the origin or the hub.
    pub fn origin(&self) -> TargetPoint {
        match *self {
            TargetSpace::Euclidean { dim } => TargetPoint::Euclidean(SmallVec::from_elem(0.0, dim)),
            TargetSpace::Spider { .. } => TargetPoint::hub(),
        }
    }
}

/// A point of a [`TargetSpace`]. Spider points with radius 0 are always
/// stored as `(leg 0, radius 0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TargetPoint {
    Euclidean(SmallVec<[f64; 4]>),
    Spider { leg: usize, radius: f64 },
}

impl TargetPoint {
    pub fn real(v: f64) -> Self {
        TargetPoint::Euclidean(SmallVec::from_slice(&[v]))
    }

    pub fn euclidean(coords: &[f64]) -> Self {
        TargetPoint::Euclidean(SmallVec::from_slice(coords))
    }

    pub fn hub() -> Self {
        TargetPoint::Spider { leg: 0, radius: 0.0 }
    }

    /// Spider point with hub canonicalization. Legs are numbered from 1.
    pub fn spider(leg: usize, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(invalid("radius", format!("spider radius must be finite and >= 0, got {radius}")));
        }
        if radius == 0.0 {
            return Ok(Self::hub());
        }
        if leg == 0 {
            return Err(invalid("leg", "legs are numbered from 1; leg 0 is reserved for the hub"));
        }
        Ok(TargetPoint::Spider { leg, radius })
    }

    /// First coordinate of a Euclidean point, if any.
    pub fn as_real(&self) -> Option<f64> {
        match self {
            TargetPoint::Euclidean(c) if !c.is_empty() => Some(c[0]),
            _ => None,
        }
    }
}

fn dist_sq_unchecked(p: &TargetPoint, q: &TargetPoint) -> f64 {
    match (p, q) {
        (TargetPoint::Euclidean(a), TargetPoint::Euclidean(b)) => {
            a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum()
        }
        (
            TargetPoint::Spider { leg: l1, radius: r1 },
            TargetPoint::Spider { leg: l2, radius: r2 },
        ) => {
            let d = spider_distance(*l1, *r1, *l2, *r2);
            d * d
        }
        _ => f64::NAN,
    }
}

/// Distance on a spider between `(l1, r1)` and `(l2, r2)`.
#[inline]
pub fn spider_distance(l1: usize, r1: f64, l2: usize, r2: f64) -> f64 {
    if l1 == l2 || r1 == 0.0 || r2 == 0.0 {
        (r1 - r2).abs()
    } else {
        r1 + r2
    }
}

pub fn distance(space: &TargetSpace, p: &TargetPoint, q: &TargetPoint) -> Result<f64> {
    Ok(distance_sq(space, p, q)?.sqrt())
}

pub fn distance_sq(space: &TargetSpace, p: &TargetPoint, q: &TargetPoint) -> Result<f64> {
    space.check(p)?;
    space.check(q)?;
    Ok(dist_sq_unchecked(p, q))
}

/// The point at fraction `t` of the geodesic from `p` to `q`.
pub fn geodesic_interpolate(space: &TargetSpace, p: &TargetPoint, q: &TargetPoint, t: f64) -> Result<TargetPoint> {
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid("t", format!("interpolation parameter {t} is outside [0, 1]")));
    }
    space.check(p)?;
    space.check(q)?;
    Ok(interpolate_unchecked(p, q, t))
}

fn interpolate_unchecked(p: &TargetPoint, q: &TargetPoint, t: f64) -> TargetPoint {
    if t == 0.0 {
        return p.clone();
    }
    if t == 1.0 {
        return q.clone();
    }
    match (p, q) {
        (TargetPoint::Euclidean(a), TargetPoint::Euclidean(b)) => {
            TargetPoint::Euclidean(a.iter().zip(b.iter()).map(|(u, v)| u + t * (v - u)).collect())
        }
        (
            TargetPoint::Spider { leg: l1, radius: r1 },
            TargetPoint::Spider { leg: l2, radius: r2 },
        ) => {
            if l1 == l2 || *r1 == 0.0 || *r2 == 0.0 {
                let leg = if *r1 > 0.0 { *l1 } else { *l2 };
                spider_point(leg, r1 + t * (r2 - r1))
            } else {
                // Signed position along the path, negative on the leg of p.
                let s = -r1 + t * (r1 + r2);
                if s < 0.0 {
                    spider_point(*l1, -s)
                } else {
                    spider_point(*l2, s)
                }
            }
        }
        _ => unreachable!("kinds checked by the caller"),
    }
}

#[inline]
fn spider_point(leg: usize, radius: f64) -> TargetPoint {
    if radius <= 0.0 {
        TargetPoint::hub()
    } else {
        TargetPoint::Spider { leg, radius }
    }
}

/// Slacks (right-hand side minus left-hand side) of the two quadrilateral
/// comparison inequalities, with `P_t` on `P → S` and `Q_t` on `Q → R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadResiduals {
    pub slack41: f64,
    pub slack42: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn quad_comparison_check(
    space: &TargetSpace,
    p: &TargetPoint,
    q: &TargetPoint,
    r: &TargetPoint,
    s: &TargetPoint,
    t: f64,
    s_weight: f64,
) -> Result<QuadResiduals> {
    if !(0.0..=1.0).contains(&s_weight) {
        return Err(invalid("s", format!("{s_weight} is outside [0, 1]")));
    }
    let pt = geodesic_interpolate(space, p, s, t)?;
    let qt = geodesic_interpolate(space, q, r, t)?;
    let q1t = interpolate_unchecked(q, r, 1.0 - t);
    let d = |a: &TargetPoint, b: &TargetPoint| dist_sq_unchecked(a, b).sqrt();
    let (d_pq, d_rs, d_sp, d_qr) = (d(p, q), d(r, s), d(s, p), d(q, r));
    let mix = s_weight * (d_sp - d_qr).powi(2) + (1.0 - s_weight) * (d_rs - d_pq).powi(2);
    let rhs41 = (1.0 - t) * d_pq * d_pq + t * d_rs * d_rs - t * (1.0 - t) * mix;
    let lhs41 = dist_sq_unchecked(&pt, &qt);
    let rhs42 = d_pq * d_pq + d_rs * d_rs + t * (d_sp * d_sp - d_qr * d_qr) + 2.0 * t * t * d_qr * d_qr - t * mix;
    let lhs42 = dist_sq_unchecked(p, &qt) + dist_sq_unchecked(s, &q1t);
    Ok(QuadResiduals {
        slack41: rhs41 - lhs41,
        slack42: rhs42 - lhs42,
    })
}

/// The minimizer of `Σ w_i d²(·, p_i)`.
pub fn frechet_mean(space: &TargetSpace, points: &[TargetPoint], weights: &[f64]) -> Result<TargetPoint> {
    if points.is_empty() {
        return Err(Error::EmptyInput("Fréchet mean of no points"));
    }
    if weights.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(invalid("weights", "weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(invalid("weights", "weights must have a positive sum"));
    }
    for p in points {
        space.check(p)?;
    }
    if points.iter().all(|p| *p == points[0]) {
        return Ok(points[0].clone());
    }
    match *space {
        TargetSpace::Euclidean { dim } => {
            let mut acc: SmallVec<[f64; 4]> = SmallVec::from_elem(0.0, dim);
            for (p, w) in points.iter().zip(weights) {
                if let TargetPoint::Euclidean(c) = p {
                    for (a, v) in acc.iter_mut().zip(c.iter()) {
                        *a += w * v;
                    }
                }
            }
            for a in acc.iter_mut() {
                *a /= total;
            }
            Ok(TargetPoint::Euclidean(acc))
        }
        TargetSpace::Spider { legs } => {
            let mut per_leg = vec![0.0; legs + 1];
            let mut all = 0.0;
            for (p, w) in points.iter().zip(weights) {
                if let TargetPoint::Spider { leg, radius } = p {
                    per_leg[*leg] += w * radius;
                    all += w * radius;
                }
            }
            let (leg, m) = spider_mean_from_sums(&per_leg, all, total);
            Ok(spider_point(leg, m))
        }
    }
}

/// Spider barycenter from per-leg weighted radius sums: leg `j` wins when
/// `(2 S_j − S)/W > 0`. Returns `(0, 0)` for the hub.
#[inline]
pub fn spider_mean_from_sums(per_leg: &[f64], all: f64, total_weight: f64) -> (usize, f64) {
    for (leg, s) in per_leg.iter().enumerate().skip(1) {
        let m = (2.0 * s - all) / total_weight;
        if m > 0.0 {
            return (leg, m);
        }
    }
    (0, 0.0)
}
