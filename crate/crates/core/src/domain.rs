//! Axis-aligned coordinate boxes in H^n and conservative containment of cc-balls.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::heisenberg::{Coords, GroupPoint};

/// Largest value of |t| on the unit cc-ball, attained by the half-turn geodesic.
pub const CENTRAL_EXTENT: f64 = 1.0 / (2.0 * std::f64::consts::PI);

/// A box `lower ≤ coords ≤ upper` in exponential coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() < 3 || lower.len().is_multiple_of(2) {
            return Err(invalid(
                "bounds",
                format!(
                    "expected two corners of length 2n + 1, got {} and {}",
                    lower.len(),
                    upper.len()
                ),
            ));
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(invalid(
                    "bounds",
                    format!("coordinate {k}: need finite lower < upper, got [{lo}, {hi}]"),
                ));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[-half, half]^{2n+1}`.
    pub fn centered_cube(n: usize, half: f64) -> Result<Self> {
        Self::new(vec![-half; 2 * n + 1], vec![half; 2 * n + 1])
    }

    pub fn n(&self) -> usize {
        (self.lower.len() - 1) / 2
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self) -> GroupPoint {
        let c: Coords = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        GroupPoint::from_coords_unchecked(self.n(), c)
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, p: &GroupPoint) -> bool {
        p.coords()
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    pub fn check_point(&self, p: &GroupPoint) -> Result<()> {
        if p.n() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: p.n(),
            });
        }
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::DomainEscape(format!(
                "point {:?} lies outside the domain box",
                p.coords()
            )))
        }
    }

    /// Conservative test for `B_r(center) ⊂ box`. Never returns true for a
    /// ball that escapes; may return false for a ball that barely fits.
    pub fn contains_ball(&self, center: &GroupPoint, r: f64) -> bool {
        let n = self.n();
        if center.n() != n {
            return false;
        }
        let c = center.coords();
        for k in 0..2 * n {
            if c[k] - r < self.lower[k] || c[k] + r > self.upper[k] {
                return false;
            }
        }
        let reach = CENTRAL_EXTENT * r * r + 0.5 * center.horizontal_norm_sq().sqrt() * r;
        c[2 * n] - reach >= self.lower[2 * n] && c[2 * n] + reach <= self.upper[2 * n]
    }

    /// Largest radius accepted by [`contains_ball`](Self::contains_ball) at the box center.
    pub fn inradius(&self) -> f64 {
        let n = self.n();
        let c = self.center();
        let mut r = f64::INFINITY;
        for k in 0..2 * n {
            r = r.min(0.5 * (self.upper[k] - self.lower[k]));
        }
        // κ r² + b r ≤ half_t with b = ½|c_h|.
        let half_t = 0.5 * (self.upper[2 * n] - self.lower[2 * n]);
        let b = 0.5 * c.horizontal_norm_sq().sqrt();
        let rt = (-b + (b * b + 4.0 * CENTRAL_EXTENT * half_t).sqrt()) / (2.0 * CENTRAL_EXTENT);
        r.min(rt)
    }

    /// Uniform point in the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupPoint {
        let c: Coords = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| a + (b - a) * rng.random::<f64>())
            .collect();
        GroupPoint::from_coords_unchecked(self.n(), c)
    }

    /// The box shrunk by `margin_h` horizontally and `margin_t` centrally.
    pub fn shrink(&self, margin_h: f64, margin_t: f64) -> Result<Self> {
        let n = self.n();
        let mut lower = self.lower.clone();
        let mut upper = self.upper.clone();
        for k in 0..=2 * n {
            let m = if k < 2 * n { margin_h } else { margin_t };
            lower[k] += m;
            upper[k] -= m;
        }
        Self::new(lower, upper)
    }
}
