//! Seeded random streams and small numerical helpers shared by the
//! Monte Carlo estimators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

/// The generator used by every estimator in the crate.
pub type Stream = ChaCha8Rng;

/// Root stream for a seed.
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An independent sub-stream of `seed`, keyed by `index`.
pub fn substream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

/// A seed for the `index`-th job derived from `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    substream(seed, index).random()
}

/// A point uniformly distributed on the unit sphere of `R^dim`.
pub fn unit_sphere<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|c| c / norm).collect();
        }
    }
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub count: usize,
}

/// Streaming mean/variance (Welford).
#[derive(Clone, Copy, Debug, Default)]
pub struct Accumulator {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn estimate(&self) -> MeanEstimate {
        let se = if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        };
        MeanEstimate {
            mean: self.mean,
            standard_error: se,
            count: self.count,
        }
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Accumulator::new();
        for v in iter {
            acc.push(v);
        }
        acc
    }
}

/// Composite Simpson rule on `[a, b]` with `intervals` (rounded up to even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let m = (intervals.max(2) + 1) & !1;
    let h = (b - a) / m as f64;
    let mut sum = f(a) + f(b);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + k as f64 * h);
    }
    sum * h / 3.0
}

/// Least-squares slope and intercept of `ys` against `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Geometric ladder `top, top·ratio, …` with `rungs` entries.
pub fn geometric_ladder(top: f64, ratio: f64, rungs: usize) -> Vec<f64> {
    (0..rungs).map(|k| top * ratio.powi(k as i32)).collect()
}
