use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Default reduced dimension.
pub const DEFAULT_PCA_DIM: usize = 768;

/// Fitted principal-component projection.
///
/// `components` holds one unit-length principal axis per row, sorted by
/// decreasing explained variance. Each row is sign-normalized so its
/// largest-magnitude entry is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    pub components: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
    /// Total variance of the input (trace of the covariance).
    pub total_variance: f64,
}

impl PcaProjection {
    pub fn output_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        if self.total_variance <= 0.0 {
            return vec![0.0; self.explained_variance.len()];
        }
        self.explained_variance
            .iter()
            .map(|v| v / self.total_variance)
            .collect()
    }

    /// Projects rows of `x` (n × d_in) to n × d_out.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::input(format!(
                "expected {} columns, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let centered = center(x, &self.mean);
        Ok(centered * self.components.transpose())
    }

    /// Maps projected rows back to centered input space.
    pub fn reconstruct_centered(&self, projected: &DMatrix<f64>) -> DMatrix<f64> {
        projected * &self.components
    }
}

fn center(x: &DMatrix<f64>, mean: &[f64]) -> DMatrix<f64> {
    let mut c = x.clone();
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    c
}

/// Fits PCA on the rows of `x` and returns the projection with the
/// projected data. The output dimension is `min(target_dim, n - 1, d_in)`.
pub fn fit_pca_project(
    x: &DMatrix<f64>,
    target_dim: usize,
) -> Result<(PcaProjection, DMatrix<f64>)> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::input(format!("PCA needs at least 2 rows, got {n}")));
    }
    if d == 0 || target_dim == 0 {
        return Err(Error::input(
            "PCA needs a positive input and target dimension",
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite value in PCA input"));
    }

    let mean: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let centered = center(x, &mean);
    let mut cov = centered.transpose() * &centered;
    cov /= (n - 1) as f64;
    // symmetrize against rounding so the eigen solver sees an exact symmetric matrix
    let cov = (&cov + cov.transpose()) * 0.5;
    let total_variance = cov.trace();

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    // stable sort: equal eigenvalues keep solver order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let d_out = target_dim.min(n - 1).min(d);
    let mut components = DMatrix::<f64>::zeros(d_out, d);
    let mut explained = Vec::with_capacity(d_out);
    for (row, &idx) in order.iter().take(d_out).enumerate() {
        let mut v: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        let norm = v.norm();
        if norm > 0.0 {
            v /= norm;
        }
        let pivot = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, x)| {
                if x.abs() > best.1.abs() {
                    (i, *x)
                } else {
                    best
                }
            })
            .1;
        if pivot < 0.0 {
            v.neg_mut();
        }
        components.set_row(row, &v.transpose());
        explained.push(eig.eigenvalues[idx].max(0.0));
    }

    let pca = PcaProjection {
        mean,
        components,
        explained_variance: explained,
        total_variance,
    };
    let projected = centered * pca.components.transpose();
    Ok((pca, projected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn line_data_is_rank_one() {
        let x = DMatrix::from_fn(20, 3, |i, j| (i as f64) * [1.0, -2.0, 0.5][j] + 3.0);
        let (pca, _) = fit_pca_project(&x, 768).unwrap();
        assert!(pca.explained_variance_ratio()[0] >= 0.9999);
    }

    #[test]
    fn output_dim_is_rank_bounded() {
        let (pca, proj) = fit_pca_project(&random_matrix(5, 10, 1), 768).unwrap();
        assert_eq!(pca.output_dim(), 4);
        assert_eq!(proj.shape(), (5, 4));
    }

    #[test]
    fn full_reconstruction_recovers_centered_data() {
        for seed in 0..10 {
            let x = random_matrix(50, 8, seed);
            let (pca, proj) = fit_pca_project(&x, 768).unwrap();
            assert_eq!(pca.output_dim(), 8);
            let back = pca.reconstruct_centered(&proj);
            let centered = center(&x, &pca.mean);
            let rms = ((back - centered).norm_squared() / (50.0 * 8.0)).sqrt();
            assert!(rms < 1e-6, "rms {rms}");
        }
    }

    #[test]
    fn components_orthonormal_and_sorted() {
        let (pca, _) = fit_pca_project(&random_matrix(40, 12, 9), 6).unwrap();
        let gram = &pca.components * pca.components.transpose();
        let err = (gram - DMatrix::<f64>::identity(6, 6)).abs().max();
        assert!(err < 1e-8, "gram error {err}");
        assert!(pca.explained_variance.windows(2).all(|w| w[0] >= w[1]));
        for row in pca.components.row_iter() {
            let pivot = row
                .iter()
                .fold(0.0f64, |b, x| if x.abs() > b.abs() { *x } else { b });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_pca_project(&random_matrix(1, 3, 0), 2).is_err());
        let mut x = random_matrix(4, 3, 0);
        x[(1, 1)] = f64::NAN;
        assert!(fit_pca_project(&x, 2).is_err());
    }
}
