//! Block-structured joint densities on (R^d)^n with two interchangeable
//! backends: closed-form Gaussians and tensor-grid numerics.

mod gaussian;
mod grid;

pub mod catalog;

pub use gaussian::GaussianDensity;
pub use grid::{
    coverage_in_sigmas, gaussian_to_grid, GridAxis, GridDensity, MIN_COVERAGE_SIGMAS,
    WARN_COVERAGE_SIGMAS,
};

use crate::error::{Error, Result};

/// Practical cap on the total dimension of the grid backend; quadrature cost
/// is exponential in n*d.
pub const MAX_GRID_DIM: usize = 4;

/// Shape of a joint random vector: n blocks, each of dimension d.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct BlockStructure {
    n: usize,
    d: usize,
}

impl BlockStructure {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput(
                "block structure needs n >= 1 and d >= 1".into(),
            ));
        }
        Ok(BlockStructure { n, d })
    }

    /// Number of blocks.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension of each block.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Total ambient dimension n * d.
    pub fn total(&self) -> usize {
        self.n * self.d
    }

    /// Global coordinate index of coordinate k inside block i.
    pub fn coord(&self, block: usize, k: usize) -> usize {
        debug_assert!(block < self.n && k < self.d);
        block * self.d + k
    }

    /// The global coordinate range covered by one block.
    pub fn block_range(&self, block: usize) -> std::ops::Range<usize> {
        block * self.d..(block + 1) * self.d
    }
}

/// Normalized block weights: positive entries with unit sum of squares.
///
/// Unnormalized weight vectors (any real entries) are passed around as plain
/// slices; this type is reserved for the weights that enter the flow
/// remainders and the entropy power combinations.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Weights {
    lambda: Vec<f64>,
}

impl Weights {
    pub fn normalized(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::InvalidInput("weights must be nonempty".into()));
        }
        if lambda.iter().any(|&l| !(l > 0.0) || l > 1.0) {
            return Err(Error::InvalidInput(
                "normalized weights must lie in (0, 1]".into(),
            ));
        }
        let sq: f64 = lambda.iter().map(|l| l * l).sum();
        if (sq - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "weights must satisfy sum of squares = 1, got {sq}"
            )));
        }
        Ok(Weights { lambda })
    }

    /// Equal weights 1/sqrt(n) on n blocks.
    pub fn equal(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("weights must be nonempty".into()));
        }
        Weights::normalized(vec![1.0 / (n as f64).sqrt(); n])
    }

    /// Builds weights with lambda_i^2 proportional to the given positive
    /// shares (the shape used by the entropy power combinations).
    pub fn from_squared_shares(shares: &[f64]) -> Result<Self> {
        if shares.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput(
                "squared weight shares must be positive and finite".into(),
            ));
        }
        let total: f64 = shares.iter().sum();
        Weights::normalized(shares.iter().map(|s| (s / total).sqrt()).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.lambda
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.lambda.iter().sum()
    }
}

impl std::ops::Index<usize> for Weights {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.lambda[i]
    }
}

/// Direction of a blockwise rescale: `Divide` maps X_i to X_i / lambda_i,
/// `Multiply` maps X_i to lambda_i * X_i.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMode {
    Divide,
    Multiply,
}

/// A joint density, either closed-form Gaussian or tensor-grid numeric.
#[derive(Debug, Clone)]
pub enum Density {
    Gaussian(GaussianDensity),
    Grid(GridDensity),
}

impl Density {
    pub fn blocks(&self) -> BlockStructure {
        match self {
            Density::Gaussian(g) => g.blocks(),
            Density::Grid(g) => g.blocks(),
        }
    }

    pub fn is_grid(&self) -> bool {
        matches!(self, Density::Grid(_))
    }

    pub fn as_gaussian(&self) -> Option<&GaussianDensity> {
        match self {
            Density::Gaussian(g) => Some(g),
            _ => None,
        }
    }

    pub fn as_grid(&self) -> Option<&GridDensity> {
        match self {
            Density::Grid(g) => Some(g),
            _ => None,
        }
    }

    /// Restricts the joint density to the given blocks (ascending, deduped).
    pub fn marginalize(&self, keep: &[usize]) -> Result<Density> {
        let keep = check_keep(keep, self.blocks().n())?;
        match self {
            Density::Gaussian(g) => Ok(Density::Gaussian(g.marginalize(&keep)?)),
            Density::Grid(g) => Ok(Density::Grid(g.marginalize(&keep)?)),
        }
    }

    /// Density of the block sum W = X_1 + ... + X_n (a d-dimensional density).
    pub fn sum_density(&self) -> Result<Density> {
        match self {
            Density::Gaussian(g) => Ok(Density::Gaussian(g.sum_density()?)),
            Density::Grid(g) => Ok(Density::Grid(g.sum_density()?)),
        }
    }

    /// Rescales each block by its factor; `lambda` must be positive.
    pub fn scale_blocks(&self, lambda: &[f64], mode: ScaleMode) -> Result<Density> {
        if lambda.len() != self.blocks().n() {
            return Err(Error::InvalidInput(format!(
                "expected {} scale factors, got {}",
                self.blocks().n(),
                lambda.len()
            )));
        }
        if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::NonPositiveLambda);
        }
        match self {
            Density::Gaussian(g) => Ok(Density::Gaussian(g.scale_blocks(lambda, mode))),
            Density::Grid(g) => Ok(Density::Grid(g.scale_blocks(lambda, mode))),
        }
    }

    /// Convolves with the isotropic Gaussian of covariance s * Id.
    pub fn convolve_isotropic_gaussian(&self, s: f64) -> Result<Density> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::NonPositiveS);
        }
        match self {
            Density::Gaussian(g) => Ok(Density::Gaussian(g.convolve_isotropic_gaussian(s))),
            Density::Grid(g) => Ok(Density::Grid(g.convolve_isotropic_gaussian(s)?)),
        }
    }

    /// Short human-readable description used in report provenance.
    pub fn describe(&self) -> String {
        match self {
            Density::Gaussian(g) => g.describe(),
            Density::Grid(g) => g.describe(),
        }
    }
}

impl From<GaussianDensity> for Density {
    fn from(g: GaussianDensity) -> Self {
        Density::Gaussian(g)
    }
}

impl From<GridDensity> for Density {
    fn from(g: GridDensity) -> Self {
        Density::Grid(g)
    }
}

fn check_keep(keep: &[usize], n: usize) -> Result<Vec<usize>> {
    if keep.is_empty() {
        return Err(Error::EmptyKeep);
    }
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.last().copied().unwrap_or(0) >= n {
        return Err(Error::InvalidInput(format!(
            "block index out of range (n = {n})"
        )));
    }
    Ok(keep)
}
