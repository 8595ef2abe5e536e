//! Seeded k-means: k-means++ initialization followed by Lloyd iterations.
//!
//! Assignments use Hamerly-style upper/lower distance bounds to skip points
//! whose nearest centroid provably did not change; the fixed point is the
//! same as plain Lloyd. Ties go to the lowest centroid index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

/// Row-major `n × d` data.
#[derive(Debug, Clone, Copy)]
pub struct Rows<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> Rows<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::input(format!(
                "data length {} is not a multiple of dim {dim}",
                data.len()
            )));
        }
        Ok(Self { data, dim })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    /// Row-major `k × d` centroids.
    pub centroids: Vec<f64>,
    pub dim: usize,
    /// Cluster index per input row.
    pub assignment: Vec<usize>,
    /// Sum of squared distances to assigned centroids.
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step; non-increasing.
    pub inertia_trace: Vec<f64>,
}

impl Clustering {
    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Squared Euclidean distance with independent partial sums.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            let t = x[l] - y[l];
            acc[l] += t * t;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        let t = x - y;
        tail += t * t;
    }
    acc.iter().sum::<f64>() + tail
}

/// Clusters `rows` into `k` groups. Deterministic for a fixed seed.
pub fn run_kmeans(rows: Rows<'_>, k: usize, seed: u64, params: KMeansParams) -> Result<Clustering> {
    let n = rows.len();
    if k == 0 {
        return Err(Error::input("k must be at least 1"));
    }
    if k > n {
        return Err(Error::input(format!("k = {k} exceeds the {n} points")));
    }
    if rows.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite value in k-means input"));
    }
    let d = rows.dim;
    let mut state = State {
        rows,
        k,
        centroids: init_plus_plus(rows, k, seed),
        assign: vec![0; n],
        upper: vec![f64::INFINITY; n],
        lower: vec![0.0; n],
        dist2: vec![0.0; n],
    };

    let mut trace = Vec::new();
    let mut iterations = 0;
    state.assign_step();
    loop {
        let inertia = state.measure();
        debug_assert!(
            trace
                .last()
                .is_none_or(|&prev: &f64| inertia <= prev * (1.0 + 1e-9) + 1e-9),
            "inertia rose from {:?} to {inertia}",
            trace.last()
        );
        trace.push(inertia);
        state.repair_empty(false);
        let shifts = state.update_centroids();
        iterations += 1;
        let max_shift = shifts.iter().copied().fold(0.0, f64::max);
        state.relax_bounds(&shifts);
        state.assign_step();
        if max_shift < params.tol || iterations >= params.max_iter {
            break;
        }
    }
    // final assignment is against the final centroids
    state.repair_empty(true);
    let inertia = state.measure();
    trace.push(inertia);

    Ok(Clustering {
        k,
        centroids: state.centroids,
        dim: d,
        assignment: state.assign,
        inertia,
        iterations,
        inertia_trace: trace,
    })
}

fn init_plus_plus(rows: Rows<'_>, k: usize, seed: u64) -> Vec<f64> {
    let n = rows.len();
    let d = rows.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    taken[first] = true;
    let c0 = rows.row(first);
    let mut best: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| sq_dist(rows.row(i), c0))
        .collect();

    while chosen.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in best.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                if acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` just short of `target`
            pick.unwrap_or_else(|| best.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // every remaining point coincides with a chosen center
            taken.iter().position(|t| !t).unwrap()
        };
        chosen.push(next);
        taken[next] = true;
        let c = rows.row(next);
        best.par_iter_mut().enumerate().for_each(|(i, b)| {
            let dd = sq_dist(rows.row(i), c);
            if dd < *b {
                *b = dd;
            }
        });
        best[next] = 0.0;
    }

    let mut centroids = Vec::with_capacity(k * d);
    for &i in &chosen {
        centroids.extend_from_slice(rows.row(i));
    }
    centroids
}

struct State<'a> {
    rows: Rows<'a>,
    k: usize,
    centroids: Vec<f64>,
    assign: Vec<usize>,
    /// Upper bound on the distance to the assigned centroid.
    upper: Vec<f64>,
    /// Lower bound on the distance to every other centroid.
    lower: Vec<f64>,
    dist2: Vec<f64>,
}

impl State<'_> {
    fn centroid(&self, j: usize) -> &[f64] {
        let d = self.rows.dim;
        &self.centroids[j * d..(j + 1) * d]
    }

    fn assign_step(&mut self) {
        let rows = self.rows;
        let k = self.k;
        let d = rows.dim;
        let centroids = &self.centroids;
        self.assign
            .par_iter_mut()
            .zip(self.upper.par_iter_mut())
            .zip(self.lower.par_iter_mut())
            .enumerate()
            .for_each(|(i, ((a, u), l))| {
                let margin = 1e-12 * (1.0 + *l);
                if *u + margin < *l {
                    return;
                }
                let x = rows.row(i);
                if u.is_finite() {
                    *u = sq_dist(x, &centroids[*a * d..(*a + 1) * d]).sqrt();
                    if *u + margin < *l {
                        return;
                    }
                }
                let (mut b1, mut d1, mut d2) = (0usize, f64::INFINITY, f64::INFINITY);
                for j in 0..k {
                    let dd = sq_dist(x, &centroids[j * d..(j + 1) * d]);
                    if dd < d1 {
                        d2 = d1;
                        d1 = dd;
                        b1 = j;
                    } else if dd < d2 {
                        d2 = dd;
                    }
                }
                *a = b1;
                *u = d1.sqrt();
                *l = d2.sqrt();
            });
    }

    /// Recomputes exact squared distances to assigned centroids; returns inertia.
    fn measure(&mut self) -> f64 {
        let rows = self.rows;
        let d = rows.dim;
        let centroids = &self.centroids;
        let assign = &self.assign;
        self.dist2.par_iter_mut().enumerate().for_each(|(i, out)| {
            let a = assign[i];
            *out = sq_dist(rows.row(i), &centroids[a * d..(a + 1) * d]);
        });
        self.dist2.iter().sum()
    }

    /// Moves the point farthest from its centroid into each empty cluster.
    /// With `pin`, the empty cluster's centroid is set to that point.
    fn repair_empty(&mut self, pin: bool) {
        let mut sizes = vec![0usize; self.k];
        for &a in &self.assign {
            sizes[a] += 1;
        }
        let d = self.rows.dim;
        for j in 0..self.k {
            if sizes[j] > 0 {
                continue;
            }
            let mut pick: Option<usize> = None;
            for i in 0..self.assign.len() {
                if sizes[self.assign[i]] < 2 {
                    continue;
                }
                if pick.is_none_or(|p| self.dist2[i] > self.dist2[p]) {
                    pick = Some(i);
                }
            }
            let Some(p) = pick else { break };
            sizes[self.assign[p]] -= 1;
            sizes[j] = 1;
            self.assign[p] = j;
            self.dist2[p] = 0.0;
            // force a full recompute for the moved point next round
            self.upper[p] = f64::INFINITY;
            self.lower[p] = 0.0;
            if pin {
                let row = self.rows.row(p).to_vec();
                self.centroids[j * d..(j + 1) * d].copy_from_slice(&row);
            }
        }
    }

    /// Moves every centroid to its cluster mean; returns per-centroid shifts.
    fn update_centroids(&mut self) -> Vec<f64> {
        let d = self.rows.dim;
        let mut sums = vec![0.0; self.k * d];
        let mut counts = vec![0usize; self.k];
        for (i, &a) in self.assign.iter().enumerate() {
            counts[a] += 1;
            let s = &mut sums[a * d..(a + 1) * d];
            for (acc, v) in s.iter_mut().zip(self.rows.row(i)) {
                *acc += v;
            }
        }
        let mut shifts = vec![0.0; self.k];
        for j in 0..self.k {
            if counts[j] == 0 {
                continue;
            }
            let inv = 1.0 / counts[j] as f64;
            let new: Vec<f64> = sums[j * d..(j + 1) * d].iter().map(|s| s * inv).collect();
            shifts[j] = sq_dist(&new, self.centroid(j)).sqrt();
            self.centroids[j * d..(j + 1) * d].copy_from_slice(&new);
        }
        shifts
    }

    fn relax_bounds(&mut self, shifts: &[f64]) {
        let (mut m1, mut m1_idx, mut m2) = (0.0f64, usize::MAX, 0.0f64);
        for (j, &s) in shifts.iter().enumerate() {
            if s > m1 {
                m2 = m1;
                m1 = s;
                m1_idx = j;
            } else if s > m2 {
                m2 = s;
            }
        }
        for i in 0..self.assign.len() {
            let a = self.assign[i];
            self.upper[i] += shifts[a];
            let other = if a == m1_idx { m2 } else { m1 };
            self.lower[i] = (self.lower[i] - other).max(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_assign(rows: Rows<'_>, c: &Clustering) -> Vec<usize> {
        (0..rows.len())
            .map(|i| {
                let mut best = (0, f64::INFINITY);
                for j in 0..c.k {
                    let dd = sq_dist(rows.row(i), c.centroid(j));
                    if dd < best.1 {
                        best = (j, dd);
                    }
                }
                best.0
            })
            .collect()
    }

    fn blobs(seed: u64, n_per: usize, centers: &[[f64; 2]], spread: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for c in centers {
            for _ in 0..n_per {
                out.push(c[0] + rng.random_range(-spread..spread));
                out.push(c[1] + rng.random_range(-spread..spread));
            }
        }
        out
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let data: Vec<f64> = (0..12).map(|i| (i * i) as f64).collect();
        let rows = Rows::new(&data, 2).unwrap();
        let c = run_kmeans(rows, 6, 3, KMeansParams::default()).unwrap();
        assert_eq!(c.inertia, 0.0);
        let mut a = c.assignment.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn k_greater_than_n_rejected() {
        let data = vec![0.0; 4];
        let rows = Rows::new(&data, 2).unwrap();
        assert!(run_kmeans(rows, 3, 0, KMeansParams::default()).is_err());
        assert!(run_kmeans(rows, 0, 0, KMeansParams::default()).is_err());
    }

    #[test]
    fn same_seed_same_result() {
        let data = blobs(4, 50, &[[0.0, 0.0], [5.0, 5.0], [0.0, 9.0]], 1.5);
        let rows = Rows::new(&data, 2).unwrap();
        let a = run_kmeans(rows, 7, 11, KMeansParams::default()).unwrap();
        let b = run_kmeans(rows, 7, 11, KMeansParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn assignment_is_nearest_centroid_and_trace_monotone() {
        let data = blobs(
            8,
            80,
            &[[0.0, 0.0], [3.0, 1.0], [1.0, 4.0], [6.0, 6.0]],
            2.0,
        );
        let rows = Rows::new(&data, 2).unwrap();
        for seed in 0..5 {
            let c = run_kmeans(rows, 9, seed, KMeansParams::default()).unwrap();
            assert_eq!(c.assignment, brute_assign(rows, &c));
            for w in c.inertia_trace.windows(2) {
                assert!(
                    w[1] <= w[0] * (1.0 + 1e-12) + 1e-12,
                    "{:?}",
                    c.inertia_trace
                );
            }
            assert!(c.cluster_sizes().iter().all(|&s| s > 0));
        }
    }

    #[test]
    fn identical_points_fill_every_cluster() {
        let data = vec![1.0; 20];
        let rows = Rows::new(&data, 2).unwrap();
        let c = run_kmeans(rows, 4, 5, KMeansParams::default()).unwrap();
        assert!(c.cluster_sizes().iter().all(|&s| s > 0));
        assert_eq!(c.inertia, 0.0);
    }

    #[test]
    fn sq_dist_matches_naive() {
        let a: Vec<f64> = (0..19).map(|i| i as f64 * 0.3).collect();
        let b: Vec<f64> = (0..19).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        assert!((sq_dist(&a, &b) - naive).abs() < 1e-9);
    }
}
