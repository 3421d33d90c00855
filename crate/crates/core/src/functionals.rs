//! Information functionals over block densities: differential entropy,
//! entropy power, conditional and erasure entropy, blockwise score fields
//! and Fisher information matrices.
//!
//! All entropies are in nats. Grid quantities use trapezoid quadrature with
//! the backend's log-floor convention; score fields on grids are central
//! differences of log p, which are better conditioned than grad p / p where
//! p is small.

use nalgebra::{DMatrix, DVector};
use ndarray::{ArrayD, Dimension, IxDyn};

use crate::density::{BlockStructure, Density, GridAxis, GridDensity};
use crate::error::{Error, Result};
use crate::numeric::{multilinear, pairwise_sum};

/// How a Fisher matrix was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum FisherMethod {
    Analytic,
    Quadrature,
}

/// The Gram matrix of blockwise scores, I_ij = E <rho_i, rho_j>.
#[derive(Debug, Clone)]
pub struct FisherMatrix {
    entries: DMatrix<f64>,
    blocks: BlockStructure,
    method: FisherMethod,
}

impl FisherMatrix {
    fn new(entries: DMatrix<f64>, blocks: BlockStructure, method: FisherMethod) -> Result<Self> {
        let n = blocks.n();
        debug_assert_eq!(entries.nrows(), n);
        let scale = entries.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (entries[(i, j)] - entries[(j, i)]).abs() > 1e-8 * scale {
                    return Err(Error::InvalidInput(
                        "Fisher matrix failed its symmetry invariant".into(),
                    ));
                }
            }
        }
        let sym = (&entries + entries.transpose()) * 0.5;
        let min_eig = sym
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-8 * scale {
            return Err(Error::InvalidInput(format!(
                "Fisher matrix failed its PSD invariant (min eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(FisherMatrix {
            entries: sym,
            blocks,
            method,
        })
    }

    pub fn blocks(&self) -> BlockStructure {
        self.blocks
    }

    pub fn method(&self) -> FisherMethod {
        self.method
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// Largest off-diagonal entry (signed), useful for sign conditions.
    pub fn max_offdiag(&self) -> f64 {
        let n = self.blocks.n();
        let mut worst = f64::NEG_INFINITY;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    worst = worst.max(self.entries[(i, j)]);
                }
            }
        }
        if n == 1 {
            0.0
        } else {
            worst
        }
    }

    /// Quadratic form lambda^T I lambda.
    pub fn quadratic_form(&self, lambda: &[f64]) -> f64 {
        let l = DVector::from_column_slice(lambda);
        (&self.entries * &l).dot(&l)
    }

    /// Inverse, refusing matrices with condition number above 1e12.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        let eig = self.entries.clone().symmetric_eigenvalues();
        let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) || max / min > 1e12 {
            return Err(Error::SingularFisherMatrix);
        }
        self.entries
            .clone()
            .try_inverse()
            .ok_or(Error::SingularFisherMatrix)
    }
}

/// Differential entropy h(X) in nats.
pub fn entropy(p: &Density) -> Result<f64> {
    match p {
        Density::Gaussian(g) => Ok(g.entropy()),
        Density::Grid(g) => {
            let floor = g.floor();
            let h = -g.integrate(|_, _, v| if v > floor { v * v.ln() } else { 0.0 });
            if !h.is_finite() {
                return Err(Error::NonFinite("entropy quadrature"));
            }
            Ok(h)
        }
    }
}

/// Entropy power exp(2 h(X) / m) where m is the total dimension of the
/// density. Meant for marginals and sums; for a d-dimensional density this
/// is the usual N(X) = e^{2h/d}.
pub fn entropy_power(p: &Density) -> Result<f64> {
    let m = p.blocks().total() as f64;
    Ok((2.0 * entropy(p)? / m).exp())
}

/// Conditional entropy h(X_i | X_j, j != i) = h(X) - h(X_j, j != i).
pub fn conditional_entropy(p: &Density, target: usize) -> Result<f64> {
    let n = p.blocks().n();
    if n < 2 {
        return Err(Error::InvalidInput(
            "conditional entropy needs at least two blocks".into(),
        ));
    }
    if target >= n {
        return Err(Error::InvalidInput(format!(
            "block index {target} out of range (n = {n})"
        )));
    }
    let rest: Vec<usize> = (0..n).filter(|&j| j != target).collect();
    Ok(entropy(p)? - entropy(&p.marginalize(&rest)?)?)
}

/// Erasure entropy: the sum over blocks of h(X_i | X_j, j != i).
pub fn erasure_entropy(p: &Density) -> Result<f64> {
    let n = p.blocks().n();
    let mut total = 0.0;
    for i in 0..n {
        total += conditional_entropy(p, i)?;
    }
    Ok(total)
}

/// The score field rho(x) = -grad log p(x), organized into blocks.
#[derive(Debug, Clone)]
pub struct ScoreField {
    blocks: BlockStructure,
    backend: ScoreBackend,
}

#[derive(Debug, Clone)]
enum ScoreBackend {
    Gaussian {
        precision: DMatrix<f64>,
        mean: DVector<f64>,
    },
    Grid {
        lo: Vec<f64>,
        step: Vec<f64>,
        shape: Vec<usize>,
        components: Vec<ArrayD<f64>>,
    },
}

impl ScoreField {
    pub fn blocks(&self) -> BlockStructure {
        self.blocks
    }

    /// Evaluates the full score vector at a point.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match &self.backend {
            ScoreBackend::Gaussian { precision, mean } => {
                let dx = DVector::from_column_slice(x) - mean;
                (precision * dx).iter().cloned().collect()
            }
            ScoreBackend::Grid {
                lo,
                step,
                shape,
                components,
            } => components
                .iter()
                .map(|c| multilinear(lo, step, shape, &|idx| c[IxDyn(idx)], x))
                .collect(),
        }
    }

    /// Score components at a grid node (grid backend only).
    fn at_node(&self, idx: &[usize], out: &mut [f64]) {
        match &self.backend {
            ScoreBackend::Grid { components, .. } => {
                for (c, comp) in components.iter().enumerate() {
                    out[c] = comp[IxDyn(idx)];
                }
            }
            ScoreBackend::Gaussian { .. } => unreachable!("node access is grid-only"),
        }
    }
}

/// Builds the score field of a density.
pub fn score(p: &Density) -> Result<ScoreField> {
    match p {
        Density::Gaussian(g) => Ok(ScoreField {
            blocks: g.blocks(),
            backend: ScoreBackend::Gaussian {
                precision: g.precision(),
                mean: g.mean().clone(),
            },
        }),
        Density::Grid(g) => {
            let comps = log_gradient_components(g);
            Ok(ScoreField {
                blocks: g.blocks(),
                backend: ScoreBackend::Grid {
                    lo: g.axes().iter().map(GridAxis::lo).collect(),
                    step: g.axes().iter().map(GridAxis::step).collect(),
                    shape: g.axes().iter().map(GridAxis::len).collect(),
                    components: comps,
                },
            })
        }
    }
}

/// Central differences of -log max(p, floor) along each coordinate, with
/// second-order one-sided stencils at the boundary.
fn log_gradient_components(g: &GridDensity) -> Vec<ArrayD<f64>> {
    let floor = g.floor();
    let logp = g.values().mapv(|v| v.max(floor).ln());
    let dim = g.axes().len();
    let mut comps = Vec::with_capacity(dim);
    for c in 0..dim {
        let h = g.axes()[c].step();
        let m = g.axes()[c].len();
        let mut out = ArrayD::<f64>::zeros(logp.raw_dim());
        for (mut o, l) in out
            .lanes_mut(ndarray::Axis(c))
            .into_iter()
            .zip(logp.lanes(ndarray::Axis(c)))
        {
            o[0] = -(-3.0 * l[0] + 4.0 * l[1] - l[2]) / (2.0 * h);
            for i in 1..m - 1 {
                o[i] = -(l[i + 1] - l[i - 1]) / (2.0 * h);
            }
            o[m - 1] = -(3.0 * l[m - 1] - 4.0 * l[m - 2] + l[m - 3]) / (2.0 * h);
        }
        comps.push(out);
    }
    comps
}

/// Fisher information matrix I_ij = E <rho_i, rho_j>.
///
/// Gaussian backend: the blockwise trace of the precision matrix. Grid
/// backend: trapezoid quadrature of p <rho_i, rho_j> with points below the
/// log floor excluded.
pub fn fisher_matrix(p: &Density) -> Result<FisherMatrix> {
    match p {
        Density::Gaussian(g) => {
            let blocks = g.blocks();
            let (n, d) = (blocks.n(), blocks.d());
            let prec = g.precision();
            let mut entries = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for k in 0..d {
                        acc += prec[(blocks.coord(i, k), blocks.coord(j, k))];
                    }
                    entries[(i, j)] = acc;
                }
            }
            FisherMatrix::new(entries, blocks, FisherMethod::Analytic)
        }
        Density::Grid(g) => {
            let blocks = g.blocks();
            let (n, d) = (blocks.n(), blocks.d());
            let comps = log_gradient_components(g);
            let floor = g.floor();
            let npoints = g.values().len();
            let mut terms: Vec<Vec<f64>> = vec![Vec::with_capacity(npoints); n * (n + 1) / 2];
            let weights = g.axis_weights();
            for (idx, &v) in g.values().indexed_iter() {
                let idx = idx.slice();
                if v < floor {
                    continue;
                }
                let mut w = v;
                for (k, wk) in weights.iter().enumerate() {
                    w *= wk[idx[k]];
                }
                let mut t = 0;
                for i in 0..n {
                    for j in i..n {
                        let mut dot = 0.0;
                        for k in 0..d {
                            dot += comps[blocks.coord(i, k)][IxDyn(idx)]
                                * comps[blocks.coord(j, k)][IxDyn(idx)];
                        }
                        terms[t].push(w * dot);
                        t += 1;
                    }
                }
            }
            let mut entries = DMatrix::zeros(n, n);
            let mut t = 0;
            for i in 0..n {
                for j in i..n {
                    let v = pairwise_sum(&terms[t]);
                    entries[(i, j)] = v;
                    entries[(j, i)] = v;
                    t += 1;
                }
            }
            FisherMatrix::new(entries, blocks, FisherMethod::Quadrature)
        }
    }
}

/// Total Fisher information I(X) = int |grad p|^2 / p.
pub fn fisher_scalar(p: &Density) -> Result<f64> {
    match p {
        Density::Gaussian(g) => Ok(g.precision().trace()),
        Density::Grid(g) => {
            let comps = log_gradient_components(g);
            let floor = g.floor();
            Ok(g.integrate(|idx, _, v| {
                if v < floor {
                    return 0.0;
                }
                let mut sq = 0.0;
                for comp in &comps {
                    let s = comp[IxDyn(idx)];
                    sq += s * s;
                }
                v * sq
            }))
        }
    }
}

/// Fisher information J of the block sum W = X_1 + ... + X_n.
pub fn fisher_of_sum(p: &Density) -> Result<f64> {
    fisher_scalar(&p.sum_density()?)
}

/// Result of projecting the weighted sum score onto the sum variable.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ProjectionResidual {
    /// E || (sum lambda_i) rho_W(W) - sum lambda_i rho_i(X) ||^2 >= 0.
    pub residual: f64,
    /// max_j | E <rho_W(W), rho_j(X)> - J |, which vanishes in exact
    /// arithmetic by the conditioning identity rho_W(w) = E(rho_i | W = w).
    pub cross_term_gap: f64,
}

/// Quadrature check of the score projection identity behind the weighted
/// Fisher information inequality.
pub fn score_projection_residual(p: &Density, lambda: &[f64]) -> Result<ProjectionResidual> {
    let blocks = p.blocks();
    let n = blocks.n();
    if lambda.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} weights, got {}",
            lambda.len()
        )));
    }
    let lam_sum: f64 = lambda.iter().sum();
    match p {
        Density::Gaussian(_) => {
            // The conditioning identity is exact for Gaussians, so the
            // expansion collapses to lambda^T I lambda - (sum lambda)^2 J.
            let i = fisher_matrix(p)?;
            let j = fisher_of_sum(p)?;
            Ok(ProjectionResidual {
                residual: i.quadratic_form(lambda) - lam_sum * lam_sum * j,
                cross_term_gap: 0.0,
            })
        }
        Density::Grid(g) => {
            let d = blocks.d();
            let wsum = p.sum_density()?;
            let j = fisher_scalar(&wsum)?;
            let wsum_score = score(&wsum)?;
            let joint_score = score(p)?;
            let floor = g.floor();
            let weights = g.axis_weights();
            let npoints = g.values().len();
            let mut resid_terms = Vec::with_capacity(npoints);
            let mut cross_terms: Vec<Vec<f64>> = vec![Vec::with_capacity(npoints); n];
            let mut rho = vec![0.0; blocks.total()];
            let mut wpt = vec![0.0; d];
            let mut x = vec![0.0; blocks.total()];
            for (idx, &v) in g.values().indexed_iter() {
                let idx = idx.slice();
                if v < floor {
                    continue;
                }
                let mut w = v;
                for (k, wk) in weights.iter().enumerate() {
                    x[k] = g.axes()[k].value(idx[k]);
                    w *= wk[idx[k]];
                }
                joint_score.at_node(idx, &mut rho);
                for k in 0..d {
                    wpt[k] = (0..n).map(|i| x[blocks.coord(i, k)]).sum();
                }
                let rho_w = wsum_score.eval(&wpt);
                let mut sq = 0.0;
                for k in 0..d {
                    let mut sum_rho = 0.0;
                    for i in 0..n {
                        sum_rho += lambda[i] * rho[blocks.coord(i, k)];
                    }
                    let diff = lam_sum * rho_w[k] - sum_rho;
                    sq += diff * diff;
                }
                resid_terms.push(w * sq);
                for i in 0..n {
                    let mut dot = 0.0;
                    for k in 0..d {
                        dot += rho_w[k] * rho[blocks.coord(i, k)];
                    }
                    cross_terms[i].push(w * dot);
                }
            }
            let residual = pairwise_sum(&resid_terms);
            let cross_term_gap = cross_terms
                .iter()
                .map(|t| (pairwise_sum(t) - j).abs())
                .fold(0.0, f64::max);
            Ok(ProjectionResidual {
                residual,
                cross_term_gap,
            })
        }
    }
}
