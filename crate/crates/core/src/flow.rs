//! Ornstein-Uhlenbeck flow: evolution toward the standard Gaussian, the
//! entropy/Fisher flow identity, and the time integrals that quantify how
//! far a dependent vector is from satisfying the clean entropy power
//! inequalities.
//!
//! Time integrals over (0, infinity) are computed under the substitution
//! u = e^{-2s}, truncated at t_max, with Gauss-Legendre nodes in u. The
//! integrands of interest decay like e^{-2s} for the catalog densities, so
//! the discarded tail is bounded by a constant estimated from the last
//! nodes.

use nalgebra::DMatrix;
use ndarray::{ArrayD, IxDyn};

use crate::density::{BlockStructure, Density, GaussianDensity, GridDensity, ScaleMode, Weights};
use crate::error::{Error, Result};
use crate::functionals::{entropy, fisher_matrix, fisher_scalar, FisherMatrix};
use crate::numeric::{pairwise_sum, GaussLegendre};

/// Parameters of the truncated flow integral.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FlowParams {
    /// Truncation time of the flow integrals.
    pub t_max: f64,
    /// Number of Gauss-Legendre nodes in the substituted variable.
    pub nodes: usize,
    /// Start offset for densities that are not smooth at s = 0.
    pub s0: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            t_max: 8.0,
            nodes: 64,
            s0: 1e-3,
        }
    }
}

/// Law of e^{-t} X + sqrt(1 - e^{-2t}) Z with Z standard normal.
///
/// Gaussian backend: exact mean/covariance update. Grid backend: exact
/// blockwise rescale by e^{-t} followed by isotropic Gaussian convolution
/// with variance 1 - e^{-2t}, resampled onto the original axis spacing so
/// the grid does not degenerate as t grows.
pub fn ou_evolve(p: &Density, t: f64) -> Result<Density> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::NegativeTime);
    }
    if t == 0.0 {
        return Ok(p.clone());
    }
    match p {
        Density::Gaussian(g) => Ok(Density::Gaussian(g.ou_evolve(t))),
        Density::Grid(g) => {
            let steps: Vec<f64> = g.axes().iter().map(|a| a.step()).collect();
            let n = g.blocks().n();
            let scaled = g.scale_blocks(&vec![(-t).exp(); n], ScaleMode::Multiply);
            let s = 1.0 - (-2.0 * t).exp();
            if s <= 0.0 {
                return Ok(Density::Grid(scaled));
            }
            Ok(Density::Grid(scaled.convolve_resampled(s, &steps)?))
        }
    }
}

/// Residual of the entropy derivative identity along the flow:
/// | [h(Y(t+dt)) - h(Y(t-dt))] / (2 dt) - (I(Y(t)) - m) | with m = n d.
pub fn debruijn_check(p: &Density, t: f64, dt: f64) -> Result<f64> {
    if !(t > dt && dt > 0.0) {
        return Err(Error::InvalidInput(
            "debruijn check requires t > dt > 0".into(),
        ));
    }
    let m = p.blocks().total() as f64;
    let h_plus = entropy(&ou_evolve(p, t + dt)?)?;
    let h_minus = entropy(&ou_evolve(p, t - dt)?)?;
    let derivative = (h_plus - h_minus) / (2.0 * dt);
    let i_t = fisher_scalar(&ou_evolve(p, t)?)?;
    Ok((derivative - (i_t - m)).abs())
}

/// Fisher quantities of the flowed joint density at one time node.
#[derive(Debug, Clone)]
pub struct FlowNode {
    /// Flow time s.
    pub s: f64,
    /// Quadrature weight in s-space (substitution Jacobian included).
    pub weight: f64,
    /// Fisher matrix of the flowed joint.
    pub joint: FisherMatrix,
    /// Fisher matrix of the flowed independent copy (product of the initial
    /// marginals), diagonal up to quadrature noise.
    pub independent: FisherMatrix,
    /// Fisher information of each flowed marginal block.
    pub marginal: Vec<f64>,
    /// Fisher information of each complement (all blocks but i), per i.
    pub complement: Vec<f64>,
}

/// Fisher quantities sampled along the flow at quadrature nodes, plus a
/// half-resolution rule for error estimation.
#[derive(Debug, Clone)]
pub struct FlowTrace {
    nodes: Vec<FlowNode>,
    coarse: Vec<FlowNode>,
    t_max: f64,
    s_start: f64,
    blocks: BlockStructure,
    rescale: Option<Vec<f64>>,
}

/// Truncated time integral with explicit quadrature and tail error bounds.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct RemainderEstimate {
    pub value: f64,
    pub quadrature_error: f64,
    pub tail_bound: f64,
    pub t_max: f64,
}

impl RemainderEstimate {
    /// Total error budget attached to the value.
    pub fn budget(&self) -> f64 {
        self.quadrature_error + self.tail_bound
    }
}

/// Product of the marginals of a density (the independent copy).
pub fn independent_product(p: &Density) -> Result<Density> {
    let blocks = p.blocks();
    let n = blocks.n();
    if n == 1 {
        return Ok(p.clone());
    }
    match p {
        Density::Gaussian(g) => {
            let total = blocks.total();
            let mut cov = DMatrix::zeros(total, total);
            for i in 0..n {
                for a in blocks.block_range(i) {
                    for b in blocks.block_range(i) {
                        cov[(a, b)] = g.cov()[(a, b)];
                    }
                }
            }
            Ok(Density::Gaussian(GaussianDensity::new(
                g.mean().iter().cloned().collect(),
                cov,
                blocks,
            )?))
        }
        Density::Grid(g) => {
            let marginals: Vec<GridDensity> = (0..n)
                .map(|i| {
                    p.marginalize(&[i]).map(|m| match m {
                        Density::Grid(gm) => gm,
                        Density::Gaussian(_) => unreachable!("grid marginals stay grids"),
                    })
                })
                .collect::<Result<_>>()?;
            let axes: Vec<_> = marginals.iter().flat_map(|m| m.axes().to_vec()).collect();
            let shape: Vec<usize> = axes.iter().map(|a| a.len()).collect();
            let d = blocks.d();
            let mut values = ArrayD::<f64>::zeros(IxDyn(&shape));
            let mut sub = vec![0usize; d];
            for (idx, v) in values.indexed_iter_mut() {
                let mut prod = 1.0;
                for (i, m) in marginals.iter().enumerate() {
                    for k in 0..d {
                        sub[k] = idx[i * d + k];
                    }
                    prod *= m.values()[IxDyn(&sub)];
                }
                *v = prod;
            }
            let smooth = g.smooth();
            let out = GridDensity::new(axes, values, blocks)?.with_smooth(smooth);
            Ok(Density::Grid(out.normalize()?))
        }
    }
}

fn eval_flow_node(joint0: &Density, indep0: &Density, s: f64, weight: f64) -> Result<FlowNode> {
    let blocks = joint0.blocks();
    let n = blocks.n();
    let joint_s = ou_evolve(joint0, s)?;
    let indep_s = ou_evolve(indep0, s)?;
    let joint = fisher_matrix(&joint_s)?;
    let independent = fisher_matrix(&indep_s)?;
    let mut marginal = Vec::with_capacity(n);
    let mut complement = Vec::with_capacity(n);
    for i in 0..n {
        marginal.push(fisher_scalar(&joint_s.marginalize(&[i])?)?);
        if n >= 2 {
            let rest: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            complement.push(fisher_scalar(&joint_s.marginalize(&rest)?)?);
        } else {
            complement.push(0.0);
        }
    }
    Ok(FlowNode {
        s,
        weight,
        joint,
        independent,
        marginal,
        complement,
    })
}

/// Samples the Fisher quantities of the flow at Gauss-Legendre nodes in
/// u = e^{-2s} over [e^{-2 t_max}, e^{-2 s_start}].
///
/// `rescaled_with` records the block weights the caller divided out of the
/// density before tracing (X_i / lambda_i); the remainder integrals insist
/// on it so the theorem-weight bookkeeping cannot silently go wrong. Grid
/// densities that are not smooth at s = 0 start at `params.s0`; the offset
/// is recorded and folded into the quadrature error of the remainders.
pub fn flow_trace(
    p: &Density,
    params: &FlowParams,
    rescaled_with: Option<&Weights>,
) -> Result<FlowTrace> {
    if !(params.t_max > 0.0) || params.nodes < 4 {
        return Err(Error::InvalidInput(
            "flow trace needs t_max > 0 and at least 4 nodes".into(),
        ));
    }
    let s_start = match p {
        Density::Grid(g) if !g.smooth() => params.s0,
        _ => 0.0,
    };
    if s_start >= params.t_max {
        return Err(Error::InvalidInput(
            "flow start offset exceeds the truncation time".into(),
        ));
    }
    let indep0 = independent_product(p)?;
    let u_lo = (-2.0 * params.t_max).exp();
    let u_hi = (-2.0 * s_start).exp();
    let build = |rule: &GaussLegendre| -> Result<Vec<FlowNode>> {
        let mut nodes = Vec::with_capacity(rule.len());
        for (u, w_u) in rule.mapped(u_lo, u_hi) {
            let s = -0.5 * u.ln();
            let weight = w_u / (2.0 * u);
            nodes.push(eval_flow_node(p, &indep0, s, weight)?);
        }
        nodes.sort_by(|a, b| a.s.partial_cmp(&b.s).unwrap());
        Ok(nodes)
    };
    let fine = build(&GaussLegendre::new(params.nodes))?;
    let coarse = build(&GaussLegendre::new((params.nodes / 2).max(2)))?;
    Ok(FlowTrace {
        nodes: fine,
        coarse,
        t_max: params.t_max,
        s_start,
        blocks: p.blocks(),
        rescale: rescaled_with.map(|w| w.as_slice().to_vec()),
    })
}

impl FlowTrace {
    pub fn nodes(&self) -> &[FlowNode] {
        &self.nodes
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Start offset actually used (positive for non-smooth grid densities).
    pub fn s_start(&self) -> f64 {
        self.s_start
    }

    pub fn blocks(&self) -> BlockStructure {
        self.blocks
    }

    /// Largest off-diagonal joint Fisher entry over all nodes.
    pub fn max_offdiagonal(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.joint.max_offdiag())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn integrate<F: Fn(&FlowNode) -> f64>(nodes: &[FlowNode], f: &F) -> f64 {
        let terms: Vec<f64> = nodes.iter().map(|n| n.weight * f(n)).collect();
        pairwise_sum(&terms)
    }

    /// Integrand of the linearized remainder: lambda^T (I(s) - Itilde(s)) lambda.
    pub fn r_integrand(node: &FlowNode, lambda: &[f64]) -> f64 {
        node.joint.quadratic_form(lambda) - node.independent.quadratic_form(lambda)
    }

    /// Integrand of the entropy power remainder:
    /// lambda^T (I(s) - diag I(Y_i(s))) lambda.
    pub fn r_power_integrand(node: &FlowNode, lambda: &[f64]) -> f64 {
        let mut diag = 0.0;
        for (i, &l) in lambda.iter().enumerate() {
            diag += l * l * node.marginal[i];
        }
        node.joint.quadratic_form(lambda) - diag
    }

    /// Integrand of the conditional remainder:
    /// sum_ij lambda_i lambda_j I_ij - sum_i I_ii + sum_i lambda_i^2 I(Y_j, j != i).
    pub fn s_integrand(node: &FlowNode, lambda: &[f64]) -> f64 {
        let quad = node.joint.quadratic_form(lambda);
        let trace = node.joint.trace();
        let comp: f64 = lambda
            .iter()
            .zip(&node.complement)
            .map(|(&l, &c)| l * l * c)
            .sum();
        quad - trace + comp
    }

    /// Truncated integral of lambda^T (I(s) - Itilde(s)) lambda over the
    /// trace window (the linearized remainder without prefactor).
    pub fn r_t(&self, lambda: &[f64]) -> f64 {
        Self::integrate(&self.nodes, &|n| Self::r_integrand(n, lambda))
    }

    /// Truncated integral of the conditional integrand over the window.
    pub fn s_t(&self, lambda: &[f64]) -> f64 {
        Self::integrate(&self.nodes, &|n| Self::s_integrand(n, lambda))
    }

    /// [`r_t`](Self::r_t) together with a quadrature error estimate from the
    /// half-resolution rule and the start offset.
    pub fn r_t_with_error(&self, lambda: &[f64]) -> (f64, f64) {
        let f = |n: &FlowNode| Self::r_integrand(n, lambda);
        let fine = Self::integrate(&self.nodes, &f);
        let coarse = Self::integrate(&self.coarse, &f);
        let first = f(&self.nodes[0]).abs();
        (fine, (fine - coarse).abs() + self.s_start * first)
    }

    /// [`s_t`](Self::s_t) together with a quadrature error estimate.
    pub fn s_t_with_error(&self, lambda: &[f64]) -> (f64, f64) {
        let f = |n: &FlowNode| Self::s_integrand(n, lambda);
        let fine = Self::integrate(&self.nodes, &f);
        let coarse = Self::integrate(&self.coarse, &f);
        let first = f(&self.nodes[0]).abs();
        (fine, (fine - coarse).abs() + self.s_start * first)
    }

    fn check_rescale(&self, lambda: &Weights) -> Result<()> {
        match &self.rescale {
            Some(r)
                if r.len() == lambda.len()
                    && r.iter()
                        .zip(lambda.as_slice())
                        .all(|(a, b)| (a - b).abs() <= 1e-12) =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidInput(
                "remainder integrals need a trace computed on the density rescaled by these weights"
                    .into(),
            )),
        }
    }

    fn remainder<F: Fn(&FlowNode, &[f64]) -> f64>(
        &self,
        lambda: &Weights,
        integrand: F,
    ) -> Result<RemainderEstimate> {
        self.check_rescale(lambda)?;
        let d = self.blocks.d() as f64;
        let lam = lambda.as_slice();
        let phi = |n: &FlowNode| (2.0 / d) * integrand(n, lam);
        let first = phi(&self.nodes[0]).abs();
        let last = phi(self.nodes.last().unwrap()).abs();
        if last > first && last > 1e-12 {
            return Err(Error::TailNotDecaying { first, last });
        }
        let value = Self::integrate(&self.nodes, &phi);
        let coarse = Self::integrate(&self.coarse, &phi);
        // Tail constant assuming e^{-2s} decay, from the last two nodes,
        // with 50% headroom since the constant is sampled at interior nodes.
        let k = self.nodes.len();
        let c = self.nodes[k.saturating_sub(2)..]
            .iter()
            .map(|n| phi(n).abs() * (2.0 * n.s).exp())
            .fold(0.0f64, f64::max);
        let tail_bound = 0.75 * c * (-2.0 * self.t_max).exp();
        let quadrature_error =
            ((value - coarse).abs() + self.s_start * first).max(1e-14 * (1.0 + value.abs()));
        Ok(RemainderEstimate {
            value,
            quadrature_error,
            tail_bound,
            t_max: self.t_max,
        })
    }
}

/// Entropy power remainder: (2/d) lambda^T (int_0^T [I(s) - diag I(Y_i(s))] ds) lambda.
///
/// The trace must have been computed on the density rescaled blockwise by
/// the same weights.
pub fn remainder_r(trace: &FlowTrace, lambda: &Weights) -> Result<RemainderEstimate> {
    trace.remainder(lambda, FlowTrace::r_power_integrand)
}

/// Conditional entropy power remainder: (2/d) int_0^T S_s ds with the
/// complement Fisher terms.
pub fn remainder_s(trace: &FlowTrace, lambda: &Weights) -> Result<RemainderEstimate> {
    trace.remainder(lambda, FlowTrace::s_integrand)
}
