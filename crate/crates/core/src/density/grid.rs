//! Tensor-grid backend: densities sampled on uniform axes with trapezoid
//! quadrature. Capped at total dimension 4; see `MAX_GRID_DIM`.

use ndarray::{ArrayD, Axis, Dimension, IxDyn};
use statrs::function::erf::erf;

use super::{BlockStructure, GaussianDensity, ScaleMode, MAX_GRID_DIM};
use crate::error::{Error, Result};
use crate::numeric::{multilinear, pairwise_sum};

/// Values below this threshold are treated as exact zeros inside logarithms;
/// x log x -> 0 as x -> 0 so they contribute nothing to entropy integrands.
pub const DEFAULT_LOG_FLOOR: f64 = 1e-300;

/// Minimum Gaussian coverage (in standard deviations per coordinate) for a
/// faithful discretization; below this `gaussian_to_grid` refuses.
pub const MIN_COVERAGE_SIGMAS: f64 = 6.0;

/// Coverage below which the discretization succeeds but deserves a warning.
pub const WARN_COVERAGE_SIGMAS: f64 = 8.0;

/// One uniform grid axis with m nodes from lo to hi inclusive.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GridAxis {
    lo: f64,
    hi: f64,
    m: usize,
}

impl GridAxis {
    pub fn new(lo: f64, hi: f64, m: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput(format!(
                "axis bounds must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        if m < 8 {
            return Err(Error::InvalidInput(format!(
                "axis needs at least 8 points, got {m}"
            )));
        }
        Ok(GridAxis { lo, hi, m })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.m - 1) as f64
    }

    pub fn value(&self, i: usize) -> f64 {
        self.lo + self.step() * i as f64
    }

    /// Trapezoid quadrature weights: h at interior nodes, h/2 at the ends.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.step();
        let mut w = vec![h; self.m];
        w[0] = 0.5 * h;
        w[self.m - 1] = 0.5 * h;
        w
    }

    fn scaled(&self, f: f64) -> GridAxis {
        GridAxis {
            lo: self.lo * f,
            hi: self.hi * f,
            m: self.m,
        }
    }
}

/// A nonnegative density sampled on a tensor grid.
#[derive(Debug, Clone)]
pub struct GridDensity {
    axes: Vec<GridAxis>,
    values: ArrayD<f64>,
    blocks: BlockStructure,
    floor: f64,
    smooth: bool,
}

impl GridDensity {
    /// Wraps raw samples. Values must be finite and nonnegative; call
    /// [`normalize`](Self::normalize) to obtain a probability density.
    pub fn new(axes: Vec<GridAxis>, values: ArrayD<f64>, blocks: BlockStructure) -> Result<Self> {
        if blocks.total() > MAX_GRID_DIM {
            return Err(Error::Unsupported(format!(
                "grid backend is capped at total dimension {MAX_GRID_DIM}, got {}",
                blocks.total()
            )));
        }
        if axes.len() != blocks.total() {
            return Err(Error::InvalidInput(format!(
                "expected {} axes, got {}",
                blocks.total(),
                axes.len()
            )));
        }
        if values.ndim() != axes.len()
            || values.shape().iter().zip(&axes).any(|(&s, a)| s != a.len())
        {
            return Err(Error::InvalidInput(
                "value tensor shape does not match the axes".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid values"));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput("grid values must be nonnegative".into()));
        }
        Ok(GridDensity {
            axes,
            values,
            blocks,
            floor: DEFAULT_LOG_FLOOR,
            smooth: true,
        })
    }

    /// Samples a function on the tensor grid and normalizes.
    pub fn from_fn<F>(axes: Vec<GridAxis>, blocks: BlockStructure, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let shape: Vec<usize> = axes.iter().map(|a| a.len()).collect();
        let mut values = ArrayD::zeros(IxDyn(&shape));
        let mut x = vec![0.0; axes.len()];
        for (idx, v) in values.indexed_iter_mut() {
            for (k, a) in axes.iter().enumerate() {
                x[k] = a.value(idx[k]);
            }
            *v = f(&x);
        }
        GridDensity::new(axes, values, blocks)?.normalize()
    }

    pub fn blocks(&self) -> BlockStructure {
        self.blocks
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> GridAxis {
        self.axes[k]
    }

    pub fn values(&self) -> &ArrayD<f64> {
        &self.values
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// False for densities that are not twice differentiable (e.g. uniform on
    /// a box); consumers that need smoothness start the flow at a small s0.
    pub fn smooth(&self) -> bool {
        self.smooth
    }

    pub fn with_smooth(mut self, smooth: bool) -> Self {
        self.smooth = smooth;
        self
    }

    pub fn describe(&self) -> String {
        let axes: Vec<String> = self
            .axes
            .iter()
            .map(|a| format!("[{:.3},{:.3}]x{}", a.lo, a.hi, a.m))
            .collect();
        format!(
            "grid(n={},d={},axes={})",
            self.blocks.n(),
            self.blocks.d(),
            axes.join(",")
        )
    }

    /// Per-axis trapezoid weights.
    pub fn axis_weights(&self) -> Vec<Vec<f64>> {
        self.axes.iter().map(|a| a.trapezoid_weights()).collect()
    }

    /// Trapezoid integral of the raw samples.
    pub fn integral(&self) -> f64 {
        let w = self.axis_weights();
        let mut terms = Vec::with_capacity(self.values.len());
        for (idx, &v) in self.values.indexed_iter() {
            let mut wp = v;
            for (k, wk) in w.iter().enumerate() {
                wp *= wk[idx[k]];
            }
            terms.push(wp);
        }
        pairwise_sum(&terms)
    }

    /// Trapezoid integral of f(index, point, value) over the grid.
    pub fn integrate<F>(&self, mut f: F) -> f64
    where
        F: FnMut(&[usize], &[f64], f64) -> f64,
    {
        let w = self.axis_weights();
        let mut terms = Vec::with_capacity(self.values.len());
        let mut x = vec![0.0; self.axes.len()];
        for (idx, &v) in self.values.indexed_iter() {
            let idx = idx.slice();
            let mut wp = 1.0;
            for (k, a) in self.axes.iter().enumerate() {
                x[k] = a.value(idx[k]);
                wp *= w[k][idx[k]];
            }
            terms.push(wp * f(idx, &x, v));
        }
        pairwise_sum(&terms)
    }

    /// Rescales the samples to unit mass.
    pub fn normalize(&self) -> Result<GridDensity> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid values"));
        }
        let max = self.values.iter().cloned().fold(0.0f64, f64::max);
        if max == 0.0 {
            return Err(Error::AllZero);
        }
        let total = self.integral();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::AllZero);
        }
        let mut out = self.clone();
        out.values.mapv_inplace(|v| v / total);
        Ok(out)
    }

    /// Multilinear interpolation of the samples; zero outside the domain.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        let lo: Vec<f64> = self.axes.iter().map(|a| a.lo).collect();
        let step: Vec<f64> = self.axes.iter().map(|a| a.step()).collect();
        let shape: Vec<usize> = self.axes.iter().map(|a| a.len()).collect();
        let vals = &self.values;
        multilinear(&lo, &step, &shape, &|idx| vals[IxDyn(idx)], x)
    }

    pub(crate) fn marginalize(&self, keep: &[usize]) -> Result<GridDensity> {
        let d = self.blocks.d();
        let keep_coords: Vec<usize> = keep.iter().flat_map(|&b| self.blocks.block_range(b)).collect();
        let dropped: Vec<usize> = (0..self.blocks.total())
            .filter(|c| !keep_coords.contains(c))
            .collect();
        let mut arr = self.values.clone();
        for &ax in dropped.iter().rev() {
            let w = self.axes[ax].trapezoid_weights();
            arr = weighted_axis_sum(&arr, ax, &w);
        }
        let axes: Vec<GridAxis> = keep_coords.iter().map(|&c| self.axes[c]).collect();
        let mut out = GridDensity::new(axes, arr, BlockStructure::new(keep.len(), d)?)?;
        out.smooth = self.smooth;
        out.normalize()
    }

    /// Pushforward under (x_1, ..., x_n) -> x_1 + ... + x_n, computed by
    /// integrating over the leading blocks and linearly interpolating the
    /// trailing block on the fiber.
    pub(crate) fn sum_density(&self) -> Result<GridDensity> {
        let (n, d) = (self.blocks.n(), self.blocks.d());
        if n == 1 {
            return Ok(self.clone());
        }
        // Output grid covers the Minkowski sum of the block domains.
        let mut out_axes = Vec::with_capacity(d);
        for k in 0..d {
            let lo: f64 = (0..n).map(|i| self.axes[self.blocks.coord(i, k)].lo).sum();
            let hi: f64 = (0..n).map(|i| self.axes[self.blocks.coord(i, k)].hi).sum();
            let h: f64 = (0..n)
                .map(|i| self.axes[self.blocks.coord(i, k)].step())
                .fold(f64::INFINITY, f64::min);
            let m = (((hi - lo) / h).round() as usize + 1).clamp(8, 2049);
            out_axes.push(GridAxis::new(lo, hi, m)?);
        }
        let out_shape: Vec<usize> = out_axes.iter().map(|a| a.len()).collect();
        let mut out = ArrayD::<f64>::zeros(IxDyn(&out_shape));

        // The trailing block occupies the last d (contiguous, fastest-varying)
        // axes, so a fixed combination of leading indices is a flat slice.
        let free_coords: Vec<usize> = (0..(n - 1) * d).collect();
        let free_shape: Vec<usize> = free_coords.iter().map(|&c| self.axes[c].len()).collect();
        let free_weights: Vec<Vec<f64>> = free_coords
            .iter()
            .map(|&c| self.axes[c].trapezoid_weights())
            .collect();
        let last_axes: Vec<GridAxis> = (0..d).map(|k| self.axes[(n - 1) * d + k]).collect();
        let last_lo: Vec<f64> = last_axes.iter().map(|a| a.lo).collect();
        let last_step: Vec<f64> = last_axes.iter().map(|a| a.step()).collect();
        let last_shape: Vec<usize> = last_axes.iter().map(|a| a.len()).collect();
        let last_len: usize = last_shape.iter().product();

        let flat = self
            .values
            .as_slice()
            .expect("grid tensors are stored in standard layout");
        let mut target = vec![0.0; d];
        for (combo, offset) in iter_multi(&free_shape) {
            let mut w_free = 1.0;
            for (k, wk) in free_weights.iter().enumerate() {
                w_free *= wk[combo[k]];
            }
            // Sum of the leading blocks, per coordinate.
            let mut lead = vec![0.0; d];
            for i in 0..n - 1 {
                for k in 0..d {
                    lead[k] += self.axes[self.blocks.coord(i, k)].value(combo[i * d + k]);
                }
            }
            let slice = &flat[offset * last_len..(offset + 1) * last_len];
            for (w_idx, _) in iter_multi(&out_shape) {
                for k in 0..d {
                    target[k] = out_axes[k].value(w_idx[k]) - lead[k];
                }
                let p = multilinear(&last_lo, &last_step, &last_shape, &|ix| {
                    let mut o = 0usize;
                    for (k, &i) in ix.iter().enumerate() {
                        o = o * last_shape[k] + i;
                    }
                    slice[o]
                }, &target);
                if p != 0.0 {
                    out[IxDyn(&w_idx)] += w_free * p;
                }
            }
        }
        let mut out = GridDensity::new(out_axes, out, BlockStructure::new(1, d)?)?;
        out.smooth = self.smooth;
        out.normalize()
    }

    pub(crate) fn scale_blocks(&self, lambda: &[f64], mode: ScaleMode) -> GridDensity {
        let (n, d) = (self.blocks.n(), self.blocks.d());
        let mut axes = self.axes.clone();
        let mut jac = 1.0;
        for i in 0..n {
            let f = match mode {
                ScaleMode::Divide => 1.0 / lambda[i],
                ScaleMode::Multiply => lambda[i],
            };
            jac *= f.powi(d as i32);
            for k in 0..d {
                let c = self.blocks.coord(i, k);
                axes[c] = self.axes[c].scaled(f);
            }
        }
        let mut values = self.values.clone();
        values.mapv_inplace(|v| v / jac);
        GridDensity {
            axes,
            values,
            blocks: self.blocks,
            floor: self.floor,
            smooth: self.smooth,
        }
    }

    pub(crate) fn convolve_isotropic_gaussian(&self, s: f64) -> Result<GridDensity> {
        let steps: Vec<f64> = self.axes.iter().map(|a| a.step()).collect();
        self.convolve_resampled(s, &steps)
    }

    /// Separable convolution with the isotropic Gaussian of variance s,
    /// resampled onto fresh axes with the requested output spacings.
    ///
    /// Each 1-d pass uses bin-integrated kernel weights (differences of the
    /// Gaussian CDF over input bins), which keeps the discrete mass exact and
    /// degenerates gracefully to nearest-bin resampling when sqrt(s) falls
    /// below the grid spacing. The bin averaging adds h^2/12 of variance per
    /// axis, which is compensated by shrinking the kernel variance.
    pub(crate) fn convolve_resampled(&self, s: f64, out_steps: &[f64]) -> Result<GridDensity> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::NonPositiveS);
        }
        let mut values = self.values.clone();
        let mut axes = self.axes.clone();
        for k in 0..axes.len() {
            let (axis, vals) = convolve_axis(&axes[k], &values, k, s, out_steps[k]);
            axes[k] = axis;
            values = vals;
        }
        let mut out = GridDensity::new(axes, values, self.blocks)?;
        out.floor = self.floor;
        out.smooth = true;
        out.normalize()
    }
}

/// Gaussian mass of the interval [a, b] for standard deviation sigma.
fn gaussian_bin_mass(a: f64, b: f64, sigma: f64) -> f64 {
    let inv = 1.0 / (sigma * std::f64::consts::SQRT_2);
    0.5 * (erf(b * inv) - erf(a * inv))
}

fn convolve_axis(
    axis: &GridAxis,
    values: &ArrayD<f64>,
    k: usize,
    s: f64,
    out_step: f64,
) -> (GridAxis, ArrayD<f64>) {
    let h_in = axis.step();
    let same_step = (out_step - h_in).abs() < 1e-12 * h_in;
    if same_step && s.sqrt() * 24.0 < h_in {
        // Smoothing far below grid resolution: identity.
        return (*axis, values.clone());
    }
    // Compensate the h^2/12 variance added by bin averaging.
    let s_kernel = (s - h_in * h_in / 12.0).max(s * 0.01);
    let sigma = s_kernel.sqrt();
    let reach = 6.0 * s.sqrt() + h_in;
    let pad = ((6.0 * s.sqrt()) / out_step).ceil().max(1.0) * out_step;
    let lo_out = axis.lo - pad;
    let m_out = (((axis.hi + pad - lo_out) / out_step).round() as usize + 1).max(8);
    let hi_out = lo_out + out_step * (m_out - 1) as f64;
    let out_axis = GridAxis {
        lo: lo_out,
        hi: hi_out,
        m: m_out,
    };

    // Band kernel: for each output node, the input bins within reach.
    let m_in = axis.len();
    let mut band: Vec<(usize, Vec<f64>)> = Vec::with_capacity(m_out);
    for j in 0..m_out {
        let y = out_axis.value(j);
        let i_lo = (((y - reach - axis.lo) / h_in).floor().max(0.0)) as usize;
        let i_hi = ((((y + reach - axis.lo) / h_in).ceil()) as usize).min(m_in - 1);
        if i_lo > i_hi {
            band.push((0, Vec::new()));
            continue;
        }
        let w: Vec<f64> = (i_lo..=i_hi)
            .map(|i| {
                let x = axis.value(i);
                gaussian_bin_mass(y - x - 0.5 * h_in, y - x + 0.5 * h_in, sigma)
            })
            .collect();
        band.push((i_lo, w));
    }

    let mut out_shape: Vec<usize> = values.shape().to_vec();
    out_shape[k] = m_out;
    let mut out = ArrayD::<f64>::zeros(IxDyn(&out_shape));
    for (mut out_lane, in_lane) in out
        .lanes_mut(Axis(k))
        .into_iter()
        .zip(values.lanes(Axis(k)))
    {
        for (j, (i_lo, w)) in band.iter().enumerate() {
            let mut acc = 0.0;
            for (off, &wi) in w.iter().enumerate() {
                acc += wi * in_lane[i_lo + off];
            }
            out_lane[j] = acc;
        }
    }
    (out_axis, out)
}

/// Sums an array along one axis with the given weights.
fn weighted_axis_sum(arr: &ArrayD<f64>, ax: usize, w: &[f64]) -> ArrayD<f64> {
    let mut shape: Vec<usize> = arr.shape().to_vec();
    shape.remove(ax);
    let mut acc = ArrayD::<f64>::zeros(IxDyn(&shape));
    for (j, sub) in arr.axis_iter(Axis(ax)).enumerate() {
        let wj = w[j];
        acc.zip_mut_with(&sub, |a, &b| *a += wj * b);
    }
    acc
}

/// Row-major iteration over a multi-index shape, yielding the index vector
/// and its flat offset.
fn iter_multi(shape: &[usize]) -> impl Iterator<Item = (Vec<usize>, usize)> + '_ {
    let total: usize = shape.iter().product();
    let mut idx = vec![0usize; shape.len()];
    (0..total).map(move |flat| {
        let out = (idx.clone(), flat);
        for k in (0..shape.len()).rev() {
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
        out
    })
}

/// Discretizes a Gaussian onto the given axes (one per coordinate).
///
/// Fails with `DomainTooSmall` when any coordinate covers fewer than
/// [`MIN_COVERAGE_SIGMAS`] standard deviations around the mean; coverage in
/// the 6-8 sigma band succeeds but is worth a warning (see
/// [`coverage_in_sigmas`]).
pub fn gaussian_to_grid(g: &GaussianDensity, axes: &[GridAxis]) -> Result<GridDensity> {
    let coverage = coverage_in_sigmas(g, axes)?;
    if coverage < MIN_COVERAGE_SIGMAS {
        return Err(Error::DomainTooSmall {
            coverage,
            required: MIN_COVERAGE_SIGMAS,
        });
    }
    let total = g.blocks().total();
    let precision = g.precision();
    let mean = g.mean().clone();
    let shape: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    let mut values = ArrayD::zeros(IxDyn(&shape));
    let mut dx = vec![0.0; total];
    for (idx, v) in values.indexed_iter_mut() {
        for k in 0..total {
            dx[k] = axes[k].value(idx[k]) - mean[k];
        }
        let mut quad = 0.0;
        for a in 0..total {
            for b in 0..total {
                quad += dx[a] * precision[(a, b)] * dx[b];
            }
        }
        *v = (-0.5 * quad).exp();
    }
    GridDensity::new(axes.to_vec(), values, g.blocks())?.normalize()
}

/// Minimum one-sided coverage of the axes around the Gaussian mean, in units
/// of the per-coordinate standard deviation.
pub fn coverage_in_sigmas(g: &GaussianDensity, axes: &[GridAxis]) -> Result<f64> {
    let total = g.blocks().total();
    if axes.len() != total {
        return Err(Error::InvalidInput(format!(
            "expected {total} axes, got {}",
            axes.len()
        )));
    }
    let mut coverage = f64::INFINITY;
    for k in 0..total {
        let sigma = g.cov()[(k, k)].sqrt();
        let left = (g.mean()[k] - axes[k].lo) / sigma;
        let right = (axes[k].hi - g.mean()[k]) / sigma;
        coverage = coverage.min(left.min(right));
    }
    Ok(coverage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::Density;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn axis(lo: f64, hi: f64, m: usize) -> GridAxis {
        GridAxis::new(lo, hi, m).unwrap()
    }

    fn b(n: usize, d: usize) -> BlockStructure {
        BlockStructure::new(n, d).unwrap()
    }

    fn bivariate(r: f64) -> GaussianDensity {
        GaussianDensity::new(
            vec![0.0, 0.0],
            DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0]),
            b(2, 1),
        )
        .unwrap()
    }

    #[test]
    fn erf_reference_value() {
        assert_abs_diff_eq!(erf(1.0), 0.842_700_792_949_714_9, epsilon = 1e-11);
    }

    #[test]
    fn normalize_uniform_constant() {
        let ax = axis(0.0, 1.0, 9);
        let values = ArrayD::from_elem(IxDyn(&[9]), 2.0);
        let g = GridDensity::new(vec![ax], values, b(1, 1)).unwrap();
        let n = g.normalize().unwrap();
        for &v in n.values().iter() {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(n.integral(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn normalize_matches_standard_normal() {
        let ax = axis(-8.0, 8.0, 257);
        let g = GridDensity::from_fn(vec![ax], b(1, 1), |x| (-0.5 * x[0] * x[0]).exp()).unwrap();
        let z = (2.0 * std::f64::consts::PI).sqrt();
        for (idx, &v) in g.values().indexed_iter() {
            let x = ax.value(idx[0]);
            assert_abs_diff_eq!(v, (-0.5 * x * x).exp() / z, epsilon = 1e-6);
        }
    }

    #[test]
    fn normalize_rejects_zero_and_nan() {
        let ax = axis(0.0, 1.0, 9);
        let zeros = ArrayD::from_elem(IxDyn(&[9]), 0.0);
        let g = GridDensity::new(vec![ax], zeros, b(1, 1)).unwrap();
        assert_eq!(g.normalize().unwrap_err(), Error::AllZero);
        let mut vals = ArrayD::from_elem(IxDyn(&[9]), 1.0);
        vals[IxDyn(&[3])] = f64::NAN;
        assert!(GridDensity::new(vec![ax], vals, b(1, 1)).is_err());
    }

    #[test]
    fn gaussian_to_grid_marginals_factorize_when_independent() {
        let g = bivariate(0.0);
        let axes = vec![axis(-8.0, 8.0, 65); 2];
        let grid = gaussian_to_grid(&g, &axes).unwrap();
        let m0 = grid.marginalize(&[0]).unwrap();
        let m1 = grid.marginalize(&[1]).unwrap();
        for (idx, &v) in grid.values().indexed_iter() {
            let prod = m0.values()[IxDyn(&[idx[0]])] * m1.values()[IxDyn(&[idx[1]])];
            assert_abs_diff_eq!(v, prod, epsilon = 1e-10);
        }
    }

    #[test]
    fn gaussian_to_grid_rejects_narrow_domain() {
        let g = bivariate(0.9);
        let axes = vec![axis(-4.0, 4.0, 65); 2];
        match gaussian_to_grid(&g, &axes) {
            Err(Error::DomainTooSmall { coverage, .. }) => {
                assert_abs_diff_eq!(coverage, 4.0, epsilon = 1e-12)
            }
            other => panic!("expected DomainTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn grid_marginal_matches_closed_form() {
        let g = bivariate(0.5);
        let axes = vec![axis(-8.0, 8.0, 129); 2];
        let grid = gaussian_to_grid(&g, &axes).unwrap();
        let m = grid.marginalize(&[1]).unwrap();
        let z = (2.0 * std::f64::consts::PI).sqrt();
        for (idx, &v) in m.values().indexed_iter() {
            let x = axes[1].value(idx[0]);
            assert_abs_diff_eq!(v, (-0.5 * x * x).exp() / z, epsilon = 1e-6);
        }
    }

    #[test]
    fn empty_keep_is_rejected() {
        let g = bivariate(0.0);
        let axes = vec![axis(-8.0, 8.0, 33); 2];
        let grid = Density::Grid(gaussian_to_grid(&g, &axes).unwrap());
        assert_eq!(grid.marginalize(&[]).unwrap_err(), Error::EmptyKeep);
    }

    #[test]
    fn scale_round_trip_restores_grid() {
        let g = bivariate(0.3);
        let axes = vec![axis(-8.0, 8.0, 33); 2];
        let grid = gaussian_to_grid(&g, &axes).unwrap();
        let lam = [0.7, 1.3];
        let fwd = grid.scale_blocks(&lam, ScaleMode::Divide);
        let back = fwd.scale_blocks(&lam, ScaleMode::Multiply);
        for k in 0..2 {
            assert_abs_diff_eq!(back.axis(k).lo(), grid.axis(k).lo(), epsilon = 1e-10);
            assert_abs_diff_eq!(back.axis(k).hi(), grid.axis(k).hi(), epsilon = 1e-10);
        }
        for (a, b) in back.values().iter().zip(grid.values().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn identity_scaling_is_identity() {
        let g = bivariate(0.5);
        let axes = vec![axis(-8.0, 8.0, 33); 2];
        let grid = gaussian_to_grid(&g, &axes).unwrap();
        let s = grid.scale_blocks(&[1.0, 1.0], ScaleMode::Divide);
        for (a, b) in s.values().iter().zip(grid.values().iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn sum_density_of_correlated_gaussian() {
        // X + Y for r = 0.5 has variance 3; compare against the closed form
        // density pointwise and through its entropy.
        let g = bivariate(0.5);
        let axes = vec![axis(-8.0, 8.0, 129); 2];
        let grid = gaussian_to_grid(&g, &axes).unwrap();
        let w = grid.sum_density().unwrap();
        let var: f64 = 3.0;
        let z = (2.0 * std::f64::consts::PI * var).sqrt();
        for (idx, &v) in w.values().indexed_iter() {
            let x = w.axis(0).value(idx[0]);
            if x.abs() < 6.0 {
                assert_abs_diff_eq!(v, (-0.5 * x * x / var).exp() / z, epsilon = 2e-4);
            }
        }
        let h = -w.integrate(|_, _, v| if v > w.floor() { v * v.ln() } else { 0.0 });
        let exact = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * var).ln();
        assert_abs_diff_eq!(h, exact, epsilon = 2e-3);
    }

    #[test]
    fn grid_convolution_matches_gaussian_oracle() {
        let g = GaussianDensity::scalar(0.0, 1.0).unwrap();
        let grid = gaussian_to_grid(&g, &[axis(-8.0, 8.0, 257)]).unwrap();
        let c = grid.convolve_isotropic_gaussian(1.0).unwrap();
        let var: f64 = 2.0;
        let z = (2.0 * std::f64::consts::PI * var).sqrt();
        for (idx, &v) in c.values().indexed_iter() {
            let x = c.axis(0).value(idx[0]);
            if x.abs() < 7.0 {
                assert_abs_diff_eq!(v, (-0.5 * x * x / var).exp() / z, epsilon = 5e-5);
            }
        }
        let h = -c.integrate(|_, _, v| if v > c.floor() { v * v.ln() } else { 0.0 });
        let exact = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * var).ln();
        assert_abs_diff_eq!(h, exact, epsilon = 2e-3);
    }

    #[test]
    fn convolution_rejects_nonpositive_s() {
        let g = GaussianDensity::scalar(0.0, 1.0).unwrap();
        let grid = Density::Grid(gaussian_to_grid(&g, &[axis(-8.0, 8.0, 65)]).unwrap());
        assert_eq!(
            grid.convolve_isotropic_gaussian(0.0).unwrap_err(),
            Error::NonPositiveS
        );
    }

    #[test]
    fn iter_multi_is_row_major() {
        let seen: Vec<(Vec<usize>, usize)> = iter_multi(&[2, 3]).collect();
        assert_eq!(seen[0], (vec![0, 0], 0));
        assert_eq!(seen[1], (vec![0, 1], 1));
        assert_eq!(seen[3], (vec![1, 0], 3));
        assert_eq!(seen.len(), 6);
    }
}
