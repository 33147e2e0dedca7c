//! Non-uniform sampling schedules and the undersampling operator pair.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::spectral::{ComplexSeries, Domain, Shape};

/// Name recorded in schedule files for [`poisson_gap_schedule`] output.
pub const POISSON_GAP_GENERATOR: &str = "poisson-gap/sine/knuth/chacha8";
pub const UNIFORM_GENERATOR: &str = "uniform/chacha8";

const MAX_TUNING_ROUNDS: u64 = 500;
const KNUTH_CHUNK: f64 = 30.0;

/// Sampled positions over an indirect-dimension grid.
///
/// Indices are flat row-major positions, so sorted flat indices are the
/// lexicographically sorted pairs of a plane grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    grid: Shape,
    indices: Vec<usize>,
    seed: u64,
}

impl Schedule {
    pub fn new(grid: Shape, indices: Vec<usize>, seed: u64) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::invalid("grid", "empty grid"));
        }
        if indices.is_empty() {
            return Err(Error::invalid("indices", "schedule is empty"));
        }
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::invalid(
                    "indices",
                    format!("not strictly increasing at {} -> {}", w[0], w[1]),
                ));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= grid.len() {
                return Err(Error::invalid("indices", format!("{last} outside grid of {}", grid.len())));
            }
        }
        Ok(Schedule { grid, indices, seed })
    }

    pub fn full(grid: Shape) -> Self {
        Schedule {
            grid,
            indices: (0..grid.len()).collect(),
            seed: 0,
        }
    }

    pub fn grid(&self) -> Shape {
        self.grid
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

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn density(&self) -> f64 {
        self.indices.len() as f64 / self.grid.len() as f64
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.grid.len()];
        for &k in &self.indices {
            m[k] = true;
        }
        m
    }
}

/// Knuth's product method, summed over chunks of mean <= 30 so `exp(-lambda)`
/// never underflows. Stops early once the running total reaches `cap`.
fn poisson_capped(lambda: f64, cap: u64, r: &mut rng::Rng) -> u64 {
    let mut total = 0u64;
    let mut left = lambda;
    while left > 0.0 && total < cap {
        let mean = left.min(KNUTH_CHUNK);
        left -= mean;
        let limit = (-mean).exp();
        let mut p: f64 = r.random();
        while p > limit {
            total += 1;
            p *= r.random::<f64>();
        }
    }
    total
}

fn gap_walk(n: usize, lambda: f64, r: &mut rng::Rng) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 0usize;
    while i < n {
        out.push(i);
        let mean = lambda * (FRAC_PI_2 * (i as f64 + 0.5) / n as f64).sin();
        let g = poisson_capped(mean, (n - i) as u64, r) as usize;
        i += 1 + g;
    }
    out
}

/// Poisson-gap schedule with exactly `count` of `n` points.
///
/// Gaps follow `Poisson(lambda * sin(pi/2 * (i + 0.5) / n))`, so sampling is
/// dense at the start of the decay. `lambda` is rescaled by the achieved/target
/// count ratio between rounds, each round on a fresh sub-stream of `seed`.
pub fn poisson_gap_schedule(n: usize, count: usize, seed: u64) -> Result<Schedule> {
    if count == 0 || count > n {
        return Err(Error::invalid("count", format!("{count} not in 1..={n}")));
    }
    let grid = Shape::Line(n);
    if count == n {
        return Ok(Schedule { seed, ..Schedule::full(grid) });
    }
    let mut lambda = n as f64 / count as f64 - 1.0;
    for round in 0..MAX_TUNING_ROUNDS {
        let mut r = rng::rng(rng::sub_seed(seed, round));
        let idx = gap_walk(n, lambda, &mut r);
        let k = idx.len();
        if k == count {
            return Ok(Schedule { grid, indices: idx, seed });
        }
        lambda = if lambda <= 0.0 {
            (n as f64 / count as f64 - 1.0).max(1e-3)
        } else {
            lambda * k as f64 / count as f64
        };
    }
    Err(Error::Generation(format!(
        "no exact {count}/{n} schedule after {MAX_TUNING_ROUNDS} rounds (seed {seed})"
    )))
}

/// Schedule with `count` points drawn uniformly from any grid, anchor 0 kept.
pub fn uniform_schedule(grid: Shape, count: usize, seed: u64) -> Result<Schedule> {
    let n = grid.len();
    if count == 0 || count > n {
        return Err(Error::invalid("count", format!("{count} not in 1..={n}")));
    }
    let mut r = rng::rng(seed);
    let mut idx: Vec<usize> = rand::seq::index::sample(&mut r, n - 1, count - 1)
        .into_iter()
        .map(|k| k + 1)
        .collect();
    idx.push(0);
    idx.sort_unstable();
    Ok(Schedule { grid, indices: idx, seed })
}

/// Number of points for a target density, at least one.
pub fn count_for_density(n: usize, density: f64) -> Result<usize> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::invalid("density", format!("{density} not in (0, 1]")));
    }
    Ok(((density * n as f64).round() as usize).clamp(1, n))
}

/// Embeds compact measurements at their scheduled positions (`U^T y`).
pub fn zero_fill<T: Scalar>(measured: &[Complex<T>], s: &Schedule) -> Result<ComplexSeries<T>> {
    if measured.len() != s.len() {
        return Err(Error::Shape(format!(
            "{} measured values for {} scheduled points",
            measured.len(),
            s.len()
        )));
    }
    let mut out = ComplexSeries::zeros(s.grid(), Domain::Time);
    let v = out.values_mut();
    for (&k, &m) in s.indices().iter().zip(measured) {
        v[k] = m;
    }
    Ok(out)
}

/// Samples of `r` at the scheduled positions (`U r`).
pub fn extract<T: Scalar>(r: &ComplexSeries<T>, s: &Schedule) -> Result<Vec<Complex<T>>> {
    if r.shape() != s.grid() {
        return Err(Error::Shape(format!("signal {:?} vs schedule grid {:?}", r.shape(), s.grid())));
    }
    Ok(s.indices().iter().map(|&k| r.values()[k]).collect())
}

/// Uniformly random sub-schedule of `keep_count` points; index 0 survives if
/// present.
pub fn subsample_schedule(s: &Schedule, keep_count: usize, seed: u64) -> Result<Schedule> {
    if keep_count == 0 {
        return Err(Error::invalid("keep_count", "must be >= 1"));
    }
    if keep_count > s.len() {
        return Err(Error::invalid("keep_count", format!("{keep_count} > {}", s.len())));
    }
    if keep_count == s.len() {
        return Ok(s.clone());
    }
    let anchored = s.indices()[0] == 0;
    let pool: &[usize] = if anchored { &s.indices()[1..] } else { s.indices() };
    let want = if anchored { keep_count - 1 } else { keep_count };
    let mut r = rng::rng(seed);
    let mut idx: Vec<usize> = rand::seq::index::sample(&mut r, pool.len(), want)
        .into_iter()
        .map(|j| pool[j])
        .collect();
    if anchored {
        idx.push(0);
    }
    idx.sort_unstable();
    Ok(Schedule { grid: s.grid(), indices: idx, seed })
}

/// Maps a schedule on `n` points into virtual-echo space of `2n` points:
/// `{k} ∪ {2n - k : k > 0} ∪ {n}`.
pub fn ve_schedule(s: &Schedule) -> Result<Schedule> {
    let n = match s.grid() {
        Shape::Line(n) => n,
        Shape::Plane(..) => return Err(Error::Unsupported("virtual echo of a plane schedule".into())),
    };
    let mut idx: Vec<usize> = s.indices().to_vec();
    idx.extend(s.indices().iter().filter(|&&k| k > 0).map(|&k| 2 * n - k));
    idx.push(n);
    idx.sort_unstable();
    idx.dedup();
    Ok(Schedule {
        grid: Shape::Line(2 * n),
        indices: idx,
        seed: s.seed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, idx: &[usize]) -> Schedule {
        Schedule::new(Shape::Line(n), idx.to_vec(), 0).unwrap()
    }

    #[test]
    fn invariants_enforced() {
        assert!(Schedule::new(Shape::Line(4), vec![0, 0, 1], 0).is_err());
        assert!(Schedule::new(Shape::Line(4), vec![2, 1], 0).is_err());
        assert!(Schedule::new(Shape::Line(4), vec![4], 0).is_err());
        assert_eq!(line(8, &[0, 3]).density(), 0.25);
    }

    #[test]
    fn full_count_is_identity() {
        let s = poisson_gap_schedule(32, 32, 3).unwrap();
        assert_eq!(s.indices(), (0..32).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn seeded_and_exact() {
        let a = poisson_gap_schedule(64, 16, 7).unwrap();
        let b = poisson_gap_schedule(64, 16, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
        assert_eq!(a.indices()[0], 0);
        assert!(poisson_gap_schedule(64, 0, 1).is_err());
        assert!(poisson_gap_schedule(64, 65, 1).is_err());
    }

    #[test]
    fn tiny_counts() {
        for n in [16, 256, 1024] {
            let s = poisson_gap_schedule(n, 1, 11).unwrap();
            assert_eq!(s.indices(), &[0]);
            assert_eq!(poisson_gap_schedule(n, 2, 11).unwrap().len(), 2);
        }
    }

    #[test]
    fn zero_fill_examples() {
        let s = line(4, &[2]);
        let y = zero_fill(&[Complex::new(5.0, 0.0)], &s).unwrap();
        assert_eq!(y.values()[2], Complex::new(5.0, 0.0));
        assert_eq!(y.values().iter().filter(|v| v.norm() == 0.0).count(), 3);
        assert!(zero_fill(&[Complex::new(1.0, 0.0); 2], &s).is_err());
        let full = Schedule::full(Shape::Line(3));
        let m = vec![Complex::new(1.0, 2.0), Complex::new(3.0, 4.0), Complex::new(5.0, 6.0)];
        assert_eq!(zero_fill(&m, &full).unwrap().values(), m.as_slice());
        let r = ComplexSeries::time(m.clone()).unwrap();
        assert_eq!(extract(&r, &full).unwrap(), m);
        assert!(extract(&r, &line(4, &[0])).is_err());
    }

    #[test]
    fn subsample_examples() {
        let s = poisson_gap_schedule(128, 30, 1).unwrap();
        assert_eq!(subsample_schedule(&s, 30, 4).unwrap(), s);
        let t = subsample_schedule(&s, 10, 4).unwrap();
        assert_eq!(t.len(), 10);
        assert_eq!(t.indices()[0], 0);
        assert!(t.indices().iter().all(|k| s.contains(*k)));
        assert!(subsample_schedule(&s, 0, 4).is_err());
        assert!(subsample_schedule(&s, 31, 4).is_err());
    }

    #[test]
    fn ve_schedule_examples() {
        assert_eq!(ve_schedule(&line(4, &[0])).unwrap().indices(), &[0, 4]);
        assert_eq!(ve_schedule(&line(4, &[0, 1, 3])).unwrap().indices(), &[0, 1, 3, 4, 5, 7]);
        let plane = Schedule::full(Shape::Plane(2, 2));
        assert!(ve_schedule(&plane).is_err());
    }

    #[test]
    fn uniform_plane() {
        let s = uniform_schedule(Shape::Plane(8, 8), 20, 2).unwrap();
        assert_eq!(s.len(), 20);
        assert_eq!(s.indices()[0], 0);
        assert_eq!(count_for_density(256, 0.25).unwrap(), 64);
        assert!(count_for_density(10, 0.0).is_err());
    }
}
