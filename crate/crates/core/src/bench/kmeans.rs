use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{IkError, Result};
use crate::geom::{self, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec3>,
    /// Cluster index of every input point.
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroid after each
    /// assignment step.
    pub inertia: Vec<f64>,
    pub iterations: usize,
}

fn sq(a: Vec3, b: Vec3) -> f64 {
    let d = geom::sub(a, b);
    geom::dot(d, d)
}

fn nearest(p: Vec3, centroids: &[Vec3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq(p, *c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Lloyd's algorithm with farthest-point initialization from a seeded first
/// centroid. Stops when assignments no longer change or after `max_iters`.
pub fn kmeans(points: &[Vec3], k: usize, seed: u64, max_iters: usize) -> Result<KMeans> {
    if k == 0 {
        return Err(IkError::InvalidArgument("k must be at least 1".into()));
    }
    let mut distinct: Vec<Vec3> = points.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    if k > distinct.len() {
        return Err(IkError::InvalidArgument(format!(
            "k = {k} exceeds the {} distinct points",
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.gen_range(0..points.len())]];
    let mut min_d: Vec<f64> = points.iter().map(|p| sq(*p, centroids[0])).collect();
    while centroids.len() < k {
        let far = argmax(&min_d);
        let c = points[far];
        centroids.push(c);
        for (d, p) in min_d.iter_mut().zip(points) {
            *d = d.min(sq(*p, c));
        }
    }

    let mut assignments = vec![usize::MAX; points.len()];
    let mut inertia = Vec::new();
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut changed = false;
        let mut total = 0.0;
        let mut dist = vec![0.0; points.len()];
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(*p, &centroids);
            if assignments[i] != j {
                assignments[i] = j;
                changed = true;
            }
            dist[i] = d;
            total += d;
        }
        inertia.push(total);
        if !changed {
            break;
        }

        let mut sums = vec![[0.0; 3]; k];
        let mut counts = vec![0usize; k];
        for (i, &j) in assignments.iter().enumerate() {
            sums[j] = geom::add(sums[j], points[i]);
            counts[j] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = geom::scale(sums[j], 1.0 / counts[j] as f64);
            } else {
                // Re-seed from the point worst served by its centroid.
                let far = argmax(&dist);
                centroids[j] = points[far];
                dist[far] = 0.0;
            }
        }
    }
    Ok(KMeans { centroids, assignments, inertia, iterations })
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_points() {
        let r = kmeans(&[[1.0, 2.0, 3.0]; 5], 1, 0, 100).unwrap();
        assert_eq!(r.centroids, vec![[1.0, 2.0, 3.0]]);
        assert!(kmeans(&[[1.0, 2.0, 3.0]; 5], 2, 0, 100).is_err());
        assert!(kmeans(&[], 1, 0, 100).is_err());
    }

    #[test]
    fn k_equals_distinct_points() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 5.0, 0.0], [1.0, 0.0, 0.0]];
        let mut c = kmeans(&pts, 3, 7, 100).unwrap().centroids;
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(c, vec![[0.0, 0.0, 0.0], [0.0, 5.0, 0.0], [1.0, 0.0, 0.0]]);
    }
}
