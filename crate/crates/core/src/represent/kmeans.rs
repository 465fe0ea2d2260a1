//! Lloyd's k-means with k-means++ seeding on squared Euclidean distance.

use ndarray::{Array2, ArrayView1, Axis};
use rand::Rng;

use crate::rng;

pub const MAX_ITER: usize = 100;
pub const REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.axis_iter(Axis(0)).enumerate() {
        let d = sq_dist(p, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus(points: &Array2<f64>, k: usize, g: &mut impl Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    let first = g.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut d2: Vec<f64> = points
        .axis_iter(Axis(0))
        .map(|p| sq_dist(p, centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = g.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            g.random_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.axis_iter(Axis(0)).enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centroids.row(c)));
        }
    }
    centroids
}

/// Clusters the rows of `points` into `k` groups (clamped to the number of
/// rows). Empty clusters are re-seeded from the point farthest from its
/// centroid.
pub fn kmeans(points: &Array2<f64>, k: usize, seed: u64) -> KMeansFit {
    let n = points.nrows();
    let k = k.clamp(1, n.max(1));
    let mut g = rng::seeded(seed);
    let mut centroids = plus_plus(points, k, &mut g);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut prev = f64::INFINITY;
    let mut iterations = 0;

    loop {
        iterations += 1;
        for (i, p) in points.axis_iter(Axis(0)).enumerate() {
            let (c, d) = nearest(p, &centroids);
            labels[i] = c;
            dists[i] = d;
        }
        // re-seed empty clusters
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    counts[labels[i]] -= 1;
                    labels[i] = c;
                    dists[i] = 0.0;
                    counts[c] = 1;
                }
            }
        }
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        for (i, p) in points.axis_iter(Axis(0)).enumerate() {
            let mut row = sums.row_mut(labels[i]);
            row += &p;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = &sums.row(c) / counts[c] as f64;
                centroids.row_mut(c).assign(&mean);
            }
        }
        let inertia: f64 = points
            .axis_iter(Axis(0))
            .zip(&labels)
            .map(|(p, &l)| sq_dist(p, centroids.row(l)))
            .sum();
        let converged = prev.is_finite() && (prev - inertia).abs() <= REL_TOL * prev.max(f64::MIN_POSITIVE);
        prev = inertia;
        if converged || iterations >= MAX_ITER {
            break;
        }
    }

    // final assignment against the final centroids
    let mut inertia = 0.0;
    for (i, p) in points.axis_iter(Axis(0)).enumerate() {
        let (c, d) = nearest(p, &centroids);
        labels[i] = c;
        inertia += d;
    }
    KMeansFit {
        labels,
        centroids,
        inertia,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn separates_obvious_groups() {
        let p = array![[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [5.0, 5.0], [5.1, 5.0], [5.0, 5.1]];
        let fit = kmeans(&p, 2, 7);
        assert_eq!(fit.labels[0], fit.labels[1]);
        assert_eq!(fit.labels[0], fit.labels[2]);
        assert_eq!(fit.labels[3], fit.labels[4]);
        assert_ne!(fit.labels[0], fit.labels[3]);
        assert!(fit.inertia < 0.1);
    }

    #[test]
    fn one_cluster_inertia_is_total_scatter() {
        let p = array![[1.0, 0.0], [-1.0, 0.0], [0.0, 2.0], [0.0, -2.0]];
        let fit = kmeans(&p, 1, 0);
        assert!((fit.inertia - 10.0).abs() < 1e-12);
    }

    #[test]
    fn k_clamped_to_point_count() {
        let p = array![[0.0], [1.0]];
        let fit = kmeans(&p, 5, 0);
        assert_eq!(fit.centroids.nrows(), 2);
        assert!(fit.inertia.abs() < 1e-12);
    }

    #[test]
    fn deterministic_under_seed() {
        let p = Array2::from_shape_fn((50, 3), |(i, j)| ((i * 7 + j * 13) % 11) as f64);
        assert_eq!(kmeans(&p, 4, 42), kmeans(&p, 4, 42));
    }
}
