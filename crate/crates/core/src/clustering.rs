//! Lloyd's K-means with k-means++ seeding.
//!
//! Used for background/foreground pixel clustering and for building the
//! keypoint codebook. All arithmetic is `f64`. The assignment step may run on
//! several threads but centers are reduced sequentially in point order, so a
//! fit is bit-reproducible for a given `(points, k, seed)`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centers: Vec<Vec<f64>>,
    /// Sum of squared distances of the fitted points to their centers.
    pub inertia: f64,
    #[serde(default)]
    pub iterations: usize,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    /// Nearest center by squared Euclidean distance, lowest index on ties.
    pub fn assign(&self, point: &[f64]) -> Result<usize> {
        if point.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "point has dimension {}, model expects {}",
                point.len(),
                self.dim()
            )));
        }
        Ok(nearest(&self.centers, point).0)
    }
}

pub fn kmeans_assign(model: &KMeansModel, point: &[f64]) -> Result<usize> {
    model.assign(point)
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &[Vec<f64>], point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = squared_distance(c, point);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn kmeans_fit<P>(points: &[P], k: usize, max_iters: usize, seed: u64) -> Result<KMeansModel>
where
    P: AsRef<[f64]> + Sync,
{
    kmeans_fit_traced(points, k, max_iters, seed).map(|(model, _)| model)
}

/// Like [`kmeans_fit`], also returning the inertia after every assignment
/// step (the first entry is the inertia of the seeded centers).
pub fn kmeans_fit_traced<P>(
    points: &[P],
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<(KMeansModel, Vec<f64>)>
where
    P: AsRef<[f64]> + Sync,
{
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::InsufficientData(format!(
            "{} points cannot form {k} clusters",
            points.len()
        )));
    }
    let dim = points[0].as_ref().len();
    for (i, p) in points.iter().enumerate() {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(Error::InvalidInput(format!(
                "point {i} has dimension {}, expected {dim}",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(points, k, &mut rng);
    let (mut labels, mut dists) = assign_all(points, &centers);
    let mut trace = vec![dists.iter().sum::<f64>()];
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        update_centers(points, &labels, &mut centers);
        let (new_labels, new_dists) = assign_all(points, &centers);
        trace.push(new_dists.iter().sum());
        let stable = new_labels == labels;
        labels = new_labels;
        dists = new_dists;
        if stable {
            break;
        }
    }

    let inertia = dists.iter().sum();
    Ok((
        KMeansModel {
            centers,
            inertia,
            iterations,
        },
        trace,
    ))
}

fn seed_centers<P: AsRef<[f64]>>(points: &[P], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..n)].as_ref().to_vec());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p.as_ref(), &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            // rounding can leave `chosen` on a zero-weight tail point
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let c = points[idx].as_ref().to_vec();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p.as_ref(), &c));
        }
        centers.push(c);
    }
    centers
}

fn assign_all<P>(points: &[P], centers: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>)
where
    P: AsRef<[f64]> + Sync,
{
    points
        .par_iter()
        .with_min_len(512)
        .map(|p| nearest(centers, p.as_ref()))
        .unzip()
}

fn update_centers<P: AsRef<[f64]>>(points: &[P], labels: &[usize], centers: &mut [Vec<f64>]) {
    let k = centers.len();
    let dim = centers[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p.as_ref()) {
            *s += v;
        }
    }
    for ((c, s), &n) in centers.iter_mut().zip(&sums).zip(&counts) {
        if n > 0 {
            for (cv, sv) in c.iter_mut().zip(s) {
                *cv = sv / n as f64;
            }
        }
    }
    if counts.iter().all(|&n| n > 0) {
        return;
    }
    // Empty clusters jump to the points farthest from their own center.
    let mut far: Vec<f64> = points
        .iter()
        .zip(labels)
        .map(|(p, &l)| squared_distance(p.as_ref(), &centers[l]))
        .collect();
    for j in (0..k).filter(|&j| counts[j] == 0) {
        let mut best = 0;
        for (i, &d) in far.iter().enumerate() {
            if d > far[best] {
                best = i;
            }
        }
        centers[j] = points[best].as_ref().to_vec();
        far[best] = f64::NEG_INFINITY;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    /// Exhaustive search over every assignment of points to k labels.
    fn best_partition(points: &[Vec<f64>], k: usize) -> f64 {
        let n = points.len();
        let mut best = f64::INFINITY;
        for code in 0..k.pow(n as u32) {
            let mut labels = Vec::with_capacity(n);
            let mut c = code;
            for _ in 0..n {
                labels.push(c % k);
                c /= k;
            }
            let mut sse = 0.0;
            for j in 0..k {
                let members: Vec<&Vec<f64>> = points
                    .iter()
                    .zip(&labels)
                    .filter(|(_, &l)| l == j)
                    .map(|(p, _)| p)
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let dim = members[0].len();
                let mean: Vec<f64> = (0..dim)
                    .map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64)
                    .collect();
                sse += members
                    .iter()
                    .map(|p| squared_distance(p, &mean))
                    .sum::<f64>();
            }
            best = best.min(sse);
        }
        best
    }

    #[test]
    fn four_points_reach_exhaustive_optimum() {
        let points = pts(&[0.0, 1.0, 10.0, 11.0]);
        assert_eq!(best_partition(&points, 2), 1.0);
        let model = kmeans_fit(&points, 2, 100, 3).unwrap();
        let mut c: Vec<f64> = model.centers.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.5, 10.5]);
        assert_eq!(model.inertia, 1.0);
    }

    #[test]
    fn k_equal_to_n_gives_zero_inertia() {
        let points = pts(&[3.0, -1.0, 7.5, 2.0, 9.0]);
        let model = kmeans_fit(&points, 5, 100, 11).unwrap();
        assert_eq!(model.inertia, 0.0);
        let mut c: Vec<f64> = model.centers.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![-1.0, 2.0, 3.0, 7.5, 9.0]);
    }

    #[test]
    fn single_cluster_is_the_centroid() {
        let points = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 8.0]];
        let model = kmeans_fit(&points, 1, 100, 0).unwrap();
        assert_eq!(model.centers, vec![vec![2.0, 4.0]]);
    }

    #[test]
    fn too_few_points() {
        let err = kmeans_fit(&pts(&[1.0]), 2, 10, 0).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn assignment_examples() {
        let model = KMeansModel {
            centers: vec![vec![0.0], vec![10.0]],
            inertia: 0.0,
            iterations: 0,
        };
        assert_eq!(kmeans_assign(&model, &[10.0]).unwrap(), 1);
        assert_eq!(kmeans_assign(&model, &[4.0]).unwrap(), 0);
        assert_eq!(kmeans_assign(&model, &[5.0]).unwrap(), 0);
        assert!(matches!(
            kmeans_assign(&model, &[1.0, 2.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn duplicate_points_still_fill_every_center() {
        let points = pts(&[1.0, 1.0, 1.0, 1.0, 5.0]);
        let model = kmeans_fit(&points, 3, 50, 2).unwrap();
        assert_eq!(model.k(), 3);
        assert_eq!(model.inertia, 0.0);
    }

    fn cloud() -> impl Strategy<Value = (Vec<Vec<f64>>, usize, u64)> {
        (1usize..4, 4usize..40).prop_flat_map(|(dim, n)| {
            (
                proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, dim), n),
                1usize..5,
                any::<u64>(),
            )
        })
    }

    proptest! {
        #[test]
        fn inertia_never_increases((points, k, seed) in cloud()) {
            let (model, trace) = kmeans_fit_traced(&points, k, 100, seed).unwrap();
            for w in trace.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", trace);
            }
            prop_assert!(model.inertia >= 0.0);
            prop_assert_eq!(model.centers.len(), k);
            let again = kmeans_fit(&points, k, 100, seed).unwrap();
            prop_assert_eq!(&model, &again);
            for p in &points {
                let r = model.assign(p).unwrap();
                let d = squared_distance(p, &model.centers[r]);
                prop_assert!(model.centers.iter().all(|c| squared_distance(p, c) >= d));
            }
        }
    }
}
