//! Independent reference computations for the acceptance checks.

#![allow(dead_code)]

/// Direct summation of `m_pq`, central moments about the float centroid,
/// normalization and Hu invariants, all in plain `f64`.
pub struct MomentOracle {
    pub spatial: [f64; 10],
    pub central: [f64; 7],
    /// `sum |x - xb|^p |y - yb|^q I`, an upper bound on each central moment's size.
    pub central_scale: [f64; 7],
    pub m00: f64,
}

const ORDERS: [(i32, i32); 7] = [(2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)];

impl MomentOracle {
    pub fn new(points: &[(usize, usize)], weights: &[u32]) -> Self {
        let raw = |p: i32, q: i32| -> f64 {
            points
                .iter()
                .zip(weights)
                .map(|(&(x, y), &w)| (x as f64).powi(p) * (y as f64).powi(q) * w as f64)
                .sum()
        };
        let spatial = [
            raw(0, 0),
            raw(1, 0),
            raw(0, 1),
            raw(2, 0),
            raw(1, 1),
            raw(0, 2),
            raw(3, 0),
            raw(2, 1),
            raw(1, 2),
            raw(0, 3),
        ];
        let m00 = spatial[0];
        let (xb, yb) = (spatial[1] / m00, spatial[2] / m00);
        let mut central = [0.0; 7];
        let mut central_scale = [0.0; 7];
        for (k, &(p, q)) in ORDERS.iter().enumerate() {
            for (&(x, y), &w) in points.iter().zip(weights) {
                let t = (x as f64 - xb).powi(p) * (y as f64 - yb).powi(q) * w as f64;
                central[k] += t;
                central_scale[k] += t.abs();
            }
        }
        Self {
            spatial,
            central,
            central_scale,
            m00,
        }
    }

    /// `nu_pq = mu_pq / m00^e(p+q)` for the given exponent rule.
    pub fn normalized(&self, exponent: impl Fn(i32) -> f64) -> [f64; 7] {
        let mut nu = [0.0; 7];
        for (k, &(p, q)) in ORDERS.iter().enumerate() {
            nu[k] = self.central[k] / self.m00.powf(exponent(p + q));
        }
        nu
    }
}

/// Hu's seven invariants written out term by term.
pub fn hu(nu: &[f64; 7]) -> [f64; 7] {
    let [n20, n11, n02, n30, n21, n12, n03] = *nu;
    let h1 = n20 + n02;
    let h2 = (n20 - n02) * (n20 - n02) + 4.0 * n11 * n11;
    let h3 = (n30 - 3.0 * n12).powi(2) + (3.0 * n21 - n03).powi(2);
    let h4 = (n30 + n12).powi(2) + (n21 + n03).powi(2);
    let h5 = (n30 - 3.0 * n12) * (n30 + n12) * ((n30 + n12).powi(2) - 3.0 * (n21 + n03).powi(2))
        + (3.0 * n21 - n03) * (n21 + n03) * (3.0 * (n30 + n12).powi(2) - (n21 + n03).powi(2));
    let h6 = (n20 - n02) * ((n30 + n12).powi(2) - (n21 + n03).powi(2))
        + 4.0 * n11 * (n30 + n12) * (n21 + n03);
    let h7 = (3.0 * n21 - n03) * (n30 + n12) * ((n30 + n12).powi(2) - 3.0 * (n21 + n03).powi(2))
        - (n30 - 3.0 * n12) * (n21 + n03) * (3.0 * (n30 + n12).powi(2) - (n21 + n03).powi(2));
    [h1, h2, h3, h4, h5, h6, h7]
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (upper, lower) = a.split_at_mut(row);
            for (t, s) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *t -= f * s;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (-gamma * d2).exp()
}

pub fn dual_objective(alpha: &[f64], y: &[f64], k: &[Vec<f64>]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Maximum of the soft-margin dual by enumerating which box bound, if
/// any, each multiplier sits on and solving the stationarity system on
/// the free ones.
pub fn exhaustive_dual(points: &[Vec<f64>], y: &[f64], gamma: f64, cost: f64) -> f64 {
    let n = points.len();
    let k: Vec<Vec<f64>> = points
        .iter()
        .map(|a| points.iter().map(|b| rbf(a, b, gamma)).collect())
        .collect();
    let mut best = f64::NEG_INFINITY;
    for code in 0..3usize.pow(n as u32) {
        let state: Vec<usize> = (0..n).map(|i| code / 3usize.pow(i as u32) % 3).collect();
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state
            .iter()
            .map(|&s| if s == 1 { cost } else { 0.0 })
            .collect();
        let bound_sum: f64 = (0..n)
            .filter(|&i| state[i] != 2)
            .map(|i| alpha[i] * y[i])
            .sum();
        if free.is_empty() {
            if bound_sum.abs() < 1e-12 {
                best = best.max(dual_objective(&alpha, y, &k));
            }
            continue;
        }
        let m = free.len();
        let mut a = vec![vec![0.0; m + 1]; m + 1];
        let mut b = vec![0.0; m + 1];
        for (r, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                a[r][c] = y[i] * y[j] * k[i][j];
            }
            a[r][m] = -y[i];
            a[m][r] = y[i];
            b[r] = 1.0
                - (0..n)
                    .filter(|&j| state[j] != 2)
                    .map(|j| y[i] * y[j] * k[i][j] * alpha[j])
                    .sum::<f64>();
        }
        b[m] = -bound_sum;
        let Some(x) = solve(a, b) else { continue };
        if x[..m].iter().all(|&v| (-1e-12..=cost + 1e-12).contains(&v)) {
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = x[r].clamp(0.0, cost);
            }
            best = best.max(dual_objective(&alpha, y, &k));
        }
    }
    best
}

/// Smallest within-cluster sum of squares over every 2-partition of 1-D points.
pub fn exhaustive_two_means(points: &[f64]) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    for mask in 1..(1u32 << n) - 1 {
        let mut sse = 0.0;
        for side in [true, false] {
            let group: Vec<f64> = (0..n)
                .filter(|&i| (mask >> i & 1 == 1) == side)
                .map(|i| points[i])
                .collect();
            let mean = group.iter().sum::<f64>() / group.len() as f64;
            sse += group.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        }
        best = best.min(sse);
    }
    best
}
