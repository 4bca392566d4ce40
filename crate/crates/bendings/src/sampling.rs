//! Deterministic chart-box sampling and the data-parallel map over sample
//! points (rayon when the `parallel` feature is on, plain iteration
//! otherwise).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The box center followed by `points` pseudo-random interior points. A 5%
/// margin keeps samples away from the box boundary so finite-difference
/// cross-checks never step outside the chart.
pub fn sample_points(chart_box: &[[f64; 2]], points: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(points + 1);
    out.push(chart_box.iter().map(|iv| 0.5 * (iv[0] + iv[1])).collect());
    for _ in 0..points {
        out.push(
            chart_box
                .iter()
                .map(|iv| {
                    let t = rng.gen_range(0.05..0.95);
                    iv[0] + t * (iv[1] - iv[0])
                })
                .collect(),
        );
    }
    out
}

/// Sequential evaluation, always available (used by the benchmark baseline).
pub fn map_points_sequential<T, F>(points: &[Vec<f64>], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[f64]) -> T + Sync,
{
    points.iter().map(|p| f(p)).collect()
}

/// Evaluate `f` on every sample point, in parallel when available. Results
/// keep the input order, so downstream aggregation is deterministic either
/// way.
#[cfg(feature = "parallel")]
pub fn map_points<T, F>(points: &[Vec<f64>], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[f64]) -> T + Sync,
{
    use rayon::prelude::*;
    points.par_iter().map(|p| f(p)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_points<T, F>(points: &[Vec<f64>], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[f64]) -> T + Sync,
{
    map_points_sequential(points, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic_and_interior() {
        let b = [[0.0, 1.0], [-2.0, 2.0]];
        let a = sample_points(&b, 16, 7);
        let c = sample_points(&b, 16, 7);
        assert_eq!(a, c);
        assert_eq!(a.len(), 17);
        assert_eq!(a[0], vec![0.5, 0.0]);
        for p in &a {
            assert!(p[0] > 0.0 && p[0] < 1.0);
            assert!(p[1] > -2.0 && p[1] < 2.0);
        }
        let d = sample_points(&b, 16, 8);
        assert_ne!(a, d);
    }

    #[test]
    fn parallel_and_sequential_maps_agree() {
        let b = [[0.0, 1.0]];
        let pts = sample_points(&b, 100, 0);
        let f = |p: &[f64]| (p[0] * 10.0).sin();
        assert_eq!(map_points(&pts, f), map_points_sequential(&pts, f));
    }
}
