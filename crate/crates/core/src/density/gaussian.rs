//! Closed-form Gaussian backend. Every operation is exact linear algebra on
//! the mean vector and covariance matrix.

use nalgebra::{DMatrix, DVector};

use super::{BlockStructure, ScaleMode};
use crate::error::{Error, Result};

/// Smallest admissible eigenvalue of a covariance matrix.
const SPD_TOL: f64 = 1e-10;

/// A joint Gaussian N(mean, cov) on (R^d)^n.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDensity {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    blocks: BlockStructure,
}

impl GaussianDensity {
    /// Validates symmetry and positive definiteness (smallest eigenvalue
    /// above `1e-10`). The covariance is symmetrized before storage.
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>, blocks: BlockStructure) -> Result<Self> {
        let total = blocks.total();
        if mean.len() != total || cov.nrows() != total || cov.ncols() != total {
            return Err(Error::InvalidInput(format!(
                "mean/covariance shape does not match n*d = {total}"
            )));
        }
        if mean.iter().any(|x| !x.is_finite()) || cov.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("gaussian parameters"));
        }
        let scale = cov.amax().max(1.0);
        for i in 0..total {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-8 * scale {
                    return Err(Error::SingularCovariance);
                }
            }
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        let eig = cov.clone().symmetric_eigenvalues();
        if eig.iter().any(|&l| l <= SPD_TOL) {
            return Err(Error::SingularCovariance);
        }
        Ok(GaussianDensity {
            mean: DVector::from_vec(mean),
            cov,
            blocks,
        })
    }

    /// Builds from a row-major nested covariance representation.
    pub fn from_rows(mean: Vec<f64>, cov_rows: &[Vec<f64>], blocks: BlockStructure) -> Result<Self> {
        let total = blocks.total();
        if cov_rows.len() != total || cov_rows.iter().any(|r| r.len() != total) {
            return Err(Error::InvalidInput(format!(
                "covariance must be a {total}x{total} matrix"
            )));
        }
        let flat: Vec<f64> = cov_rows.iter().flatten().copied().collect();
        GaussianDensity::new(mean, DMatrix::from_row_slice(total, total, &flat), blocks)
    }

    /// Standard normal N(0, I) with the given block structure.
    pub fn standard(blocks: BlockStructure) -> Self {
        let total = blocks.total();
        GaussianDensity {
            mean: DVector::zeros(total),
            cov: DMatrix::identity(total, total),
            blocks,
        }
    }

    /// Scalar N(mean, var) as a single one-dimensional block.
    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        let blocks = BlockStructure::new(1, 1)?;
        GaussianDensity::new(vec![mean], DMatrix::from_element(1, 1, var), blocks)
    }

    pub fn blocks(&self) -> BlockStructure {
        self.blocks
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Inverse covariance via Cholesky.
    pub fn precision(&self) -> DMatrix<f64> {
        self.cov
            .clone()
            .cholesky()
            .expect("covariance validated SPD at construction")
            .inverse()
    }

    /// log det of the covariance via Cholesky.
    pub fn log_det_cov(&self) -> f64 {
        let chol = self
            .cov
            .clone()
            .cholesky()
            .expect("covariance validated SPD at construction");
        2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>()
    }

    /// Differential entropy in nats: (nd/2) log(2 pi e) + log det(cov) / 2.
    pub fn entropy(&self) -> f64 {
        let m = self.blocks.total() as f64;
        0.5 * m * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()
            + 0.5 * self.log_det_cov()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let m = self.blocks.total() as f64;
        let dx = DVector::from_column_slice(x) - &self.mean;
        let p = self.precision();
        -0.5 * (m * (2.0 * std::f64::consts::PI).ln() + self.log_det_cov())
            - 0.5 * (&p * &dx).dot(&dx)
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.log_pdf(x).exp()
    }

    pub(crate) fn marginalize(&self, keep: &[usize]) -> Result<GaussianDensity> {
        let d = self.blocks.d();
        let coords: Vec<usize> = keep
            .iter()
            .flat_map(|&b| self.blocks.block_range(b))
            .collect();
        let mean: Vec<f64> = coords.iter().map(|&c| self.mean[c]).collect();
        let k = coords.len();
        let mut cov = DMatrix::zeros(k, k);
        for (a, &ca) in coords.iter().enumerate() {
            for (b, &cb) in coords.iter().enumerate() {
                cov[(a, b)] = self.cov[(ca, cb)];
            }
        }
        GaussianDensity::new(mean, cov, BlockStructure::new(keep.len(), d)?)
    }

    /// W = X_1 + ... + X_n is Gaussian with blockwise-summed mean and
    /// covariance Sum_{ij} Cov(X_i, X_j).
    pub(crate) fn sum_density(&self) -> Result<GaussianDensity> {
        let (n, d) = (self.blocks.n(), self.blocks.d());
        let mut mean = vec![0.0; d];
        let mut cov = DMatrix::zeros(d, d);
        for i in 0..n {
            for k in 0..d {
                mean[k] += self.mean[self.blocks.coord(i, k)];
            }
            for j in 0..n {
                for k in 0..d {
                    for l in 0..d {
                        cov[(k, l)] +=
                            self.cov[(self.blocks.coord(i, k), self.blocks.coord(j, l))];
                    }
                }
            }
        }
        GaussianDensity::new(mean, cov, BlockStructure::new(1, d)?)
    }

    pub(crate) fn scale_blocks(&self, lambda: &[f64], mode: ScaleMode) -> GaussianDensity {
        let total = self.blocks.total();
        let mut factors = vec![0.0; total];
        for i in 0..self.blocks.n() {
            let f = match mode {
                ScaleMode::Divide => 1.0 / lambda[i],
                ScaleMode::Multiply => lambda[i],
            };
            for k in 0..self.blocks.d() {
                factors[self.blocks.coord(i, k)] = f;
            }
        }
        let mean = DVector::from_iterator(
            total,
            self.mean.iter().zip(&factors).map(|(m, f)| m * f),
        );
        let mut cov = self.cov.clone();
        for i in 0..total {
            for j in 0..total {
                cov[(i, j)] *= factors[i] * factors[j];
            }
        }
        GaussianDensity {
            mean,
            cov,
            blocks: self.blocks,
        }
    }

    pub(crate) fn convolve_isotropic_gaussian(&self, s: f64) -> GaussianDensity {
        let total = self.blocks.total();
        GaussianDensity {
            mean: self.mean.clone(),
            cov: &self.cov + DMatrix::identity(total, total) * s,
            blocks: self.blocks,
        }
    }

    /// Law of e^{-t} X + sqrt(1 - e^{-2t}) Z with Z standard normal.
    pub(crate) fn ou_evolve(&self, t: f64) -> GaussianDensity {
        let total = self.blocks.total();
        let u = (-2.0 * t).exp();
        GaussianDensity {
            mean: &self.mean * (-t).exp(),
            cov: &self.cov * u + DMatrix::identity(total, total) * (1.0 - u),
            blocks: self.blocks,
        }
    }

    /// Largest absolute off-diagonal block entry; zero means the blocks are
    /// uncorrelated (hence independent, being jointly Gaussian).
    pub fn max_cross_block_cov(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.blocks.n() {
            for j in 0..self.blocks.n() {
                if i == j {
                    continue;
                }
                for k in 0..self.blocks.d() {
                    for l in 0..self.blocks.d() {
                        worst = worst.max(
                            self.cov[(self.blocks.coord(i, k), self.blocks.coord(j, l))].abs(),
                        );
                    }
                }
            }
        }
        worst
    }

    pub fn describe(&self) -> String {
        let rows: Vec<String> = (0..self.cov.nrows())
            .map(|i| {
                let row: Vec<String> =
                    (0..self.cov.ncols()).map(|j| format!("{:.6}", self.cov[(i, j)])).collect();
                format!("[{}]", row.join(","))
            })
            .collect();
        format!(
            "gaussian(n={},d={},cov=[{}])",
            self.blocks.n(),
            self.blocks.d(),
            rows.join(",")
        )
    }
}
