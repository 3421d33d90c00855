//! Small numerical kernels shared by the density backends: pairwise
//! summation, Gauss-Legendre rules and multilinear interpolation.

/// Sums a slice in a fixed pairwise (tree) order.
///
/// The reduction order is independent of chunking or thread count, so every
/// quadrature result built on top of it is bit-stable.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// A Gauss-Legendre quadrature rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the n-point rule by Newton iteration on the Legendre
    /// recurrence. Nodes are returned in ascending order.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for k in 0..n {
            // Tricomi initial guess, then Newton.
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (nf + 0.5)).cos();
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                let step = p / d;
                x -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            // Derivative at the converged node.
            let (_, dp) = legendre_with_derivative(n, x);
            nodes[n - 1 - k] = x;
            weights[n - 1 - k] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node/weight pairs mapped onto the interval [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| (mid + half * x, half * w))
            .collect()
    }

    /// Integrates f over [a, b].
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let terms: Vec<f64> = self.mapped(a, b).into_iter().map(|(x, w)| w * f(x)).collect();
        pairwise_sum(&terms)
    }
}

/// Evaluates (P_n(x), P_n'(x)) via the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Multilinear interpolation on a uniform tensor grid.
///
/// `lo[k]`, `step[k]` and `shape[k]` describe axis k; `values` is the
/// row-major flattened tensor. Points outside the grid evaluate to 0.
pub fn multilinear(
    lo: &[f64],
    step: &[f64],
    shape: &[usize],
    values: &dyn Fn(&[usize]) -> f64,
    x: &[f64],
) -> f64 {
    let dim = lo.len();
    debug_assert_eq!(x.len(), dim);
    let mut base = vec![0usize; dim];
    let mut frac = vec![0.0; dim];
    for k in 0..dim {
        let t = (x[k] - lo[k]) / step[k];
        if t < 0.0 || t > (shape[k] - 1) as f64 {
            return 0.0;
        }
        let i = (t.floor() as usize).min(shape[k] - 2);
        base[k] = i;
        frac[k] = t - i as f64;
    }
    let mut acc = 0.0;
    let corners = 1usize << dim;
    let mut idx = vec![0usize; dim];
    for c in 0..corners {
        let mut w = 1.0;
        for k in 0..dim {
            if (c >> k) & 1 == 1 {
                idx[k] = base[k] + 1;
                w *= frac[k];
            } else {
                idx[k] = base[k];
                w *= 1.0 - frac[k];
            }
        }
        if w != 0.0 {
            acc += w * values(&idx);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pairwise_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert_abs_diff_eq!(pairwise_sum(&xs), naive, epsilon = 1e-9);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(8);
        // Degree up to 2n-1 = 15 is exact.
        for k in 0..=15u32 {
            let exact = (1.0 - (-1.0f64).powi(k as i32 + 1)) / (k as f64 + 1.0);
            let got = rule.integrate(-1.0, 1.0, |x| x.powi(k as i32));
            assert_abs_diff_eq!(got, exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn gauss_legendre_nodes_ascend() {
        let rule = GaussLegendre::new(64);
        for w in rule.nodes.windows(2) {
            assert!(w[0] < w[1]);
        }
        let total: f64 = rule.weights.iter().sum();
        assert_abs_diff_eq!(total, 2.0, epsilon = 1e-13);
    }

    #[test]
    fn gauss_legendre_exponential_decay() {
        // \int_0^8 e^{-2s} ds = (1 - e^{-16}) / 2
        let rule = GaussLegendre::new(32);
        let got = rule.integrate(0.0, 8.0, |s| (-2.0 * s).exp());
        assert_abs_diff_eq!(got, 0.5 * (1.0 - (-16.0f64).exp()), epsilon = 1e-12);
    }

    #[test]
    fn multilinear_reproduces_linear_functions() {
        let lo = [0.0, 0.0];
        let step = [0.5, 0.25];
        let shape = [5, 9];
        let f = |i: &[usize]| 2.0 * (i[0] as f64 * 0.5) - 3.0 * (i[1] as f64 * 0.25) + 1.0;
        let got = multilinear(&lo, &step, &shape, &f, &[0.73, 1.11]);
        assert_abs_diff_eq!(got, 2.0 * 0.73 - 3.0 * 1.11 + 1.0, epsilon = 1e-12);
        // Outside the domain the interpolant is 0.
        assert_eq!(multilinear(&lo, &step, &shape, &f, &[-0.1, 1.0]), 0.0);
    }
}
