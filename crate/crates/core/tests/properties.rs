//! Property tests for the structural invariants of the density backends and
//! the flow remainders.

use epilab_core::density::catalog::{exchangeable_gaussian, independent_gaussian};
use epilab_core::density::{
    gaussian_to_grid, BlockStructure, Density, GaussianDensity, GridAxis, GridDensity, ScaleMode,
};
use epilab_core::functionals::{entropy, fisher_matrix, fisher_of_sum};
use epilab_core::harness::{verify_conditional_epi, verify_dependent_epi, HarnessConfig};
use epilab_core::numeric::pairwise_sum;

use nalgebra::{DMatrix, DVector};
use ndarray::IxDyn;
use proptest::prelude::*;

fn axis(lo: f64, hi: f64, m: usize) -> GridAxis {
    GridAxis::new(lo, hi, m).unwrap()
}

fn spd_from_seed(n: usize, entries: &[f64]) -> GaussianDensity {
    let b = DMatrix::from_fn(n, n, |i, j| entries[i * n + j]);
    let cov = &b * b.transpose() + DMatrix::identity(n, n) * 0.4;
    GaussianDensity::new(vec![0.0; n], cov, BlockStructure::new(n, 1).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // Marginalizing the discretized Gaussian agrees pointwise with
    // discretizing the marginal Gaussian.
    #[test]
    fn marginalization_commutes_with_discretization(r in -0.85f64..0.85) {
        let g = exchangeable_gaussian(2, r).unwrap();
        let grid = Density::Grid(gaussian_to_grid(&g, &[axis(-8.0, 8.0, 65); 2]).unwrap());
        let via_grid = grid.marginalize(&[0]).unwrap();
        let exact = Density::Gaussian(g).marginalize(&[0]).unwrap();
        let direct = gaussian_to_grid(exact.as_gaussian().unwrap(), &[axis(-8.0, 8.0, 65)]).unwrap();
        let mut worst: f64 = 0.0;
        for (a, b) in via_grid
            .as_grid()
            .unwrap()
            .values()
            .iter()
            .zip(direct.values().iter())
        {
            worst = worst.max((a - b).abs());
        }
        prop_assert!(worst < 1e-5, "sup norm gap {}", worst);
    }

    #[test]
    fn grid_scale_round_trip(l0 in 0.4f64..2.5, l1 in 0.4f64..2.5) {
        let g = exchangeable_gaussian(2, 0.4).unwrap();
        let grid = Density::Grid(gaussian_to_grid(&g, &[axis(-8.0, 8.0, 33); 2]).unwrap());
        let back = grid
            .scale_blocks(&[l0, l1], ScaleMode::Divide).unwrap()
            .scale_blocks(&[l0, l1], ScaleMode::Multiply).unwrap();
        let (back, grid) = (back.as_grid().unwrap(), grid.as_grid().unwrap());
        for (a, b) in back.values().iter().zip(grid.values().iter()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        for k in 0..2 {
            prop_assert!((back.axis(k).lo() - grid.axis(k).lo()).abs() < 1e-10);
            prop_assert!((back.axis(k).hi() - grid.axis(k).hi()).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Fisher matrices are symmetric PSD Gram matrices, and the weighted
    // quadratic form dominates (sum lambda)^2 J for every real weight.
    #[test]
    fn fisher_matrix_gram_structure(
        entries in prop::array::uniform9(-1.0f64..1.0),
        l0 in -2.0f64..2.0,
        l1 in -2.0f64..2.0,
        l2 in -2.0f64..2.0,
    ) {
        let p = Density::Gaussian(spd_from_seed(3, &entries));
        let i = fisher_matrix(&p).unwrap();
        let m = i.matrix();
        for a in 0..3 {
            for b in 0..3 {
                prop_assert!((m[(a, b)] - m[(b, a)]).abs() < 1e-10);
            }
        }
        let min_eig = m
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        prop_assert!(min_eig > -1e-8);

        let lam = [l0, l1, l2];
        let j = fisher_of_sum(&p).unwrap();
        let sum: f64 = lam.iter().sum();
        prop_assert!(i.quadratic_form(&lam) - sum * sum * j >= -1e-9);
    }

    // Blockwise rescale shifts entropy by the exact logarithmic amount.
    #[test]
    fn entropy_scaling_shift(
        entries in prop::array::uniform4(-1.0f64..1.0),
        l0 in 0.3f64..3.0,
        l1 in 0.3f64..3.0,
    ) {
        let p = Density::Gaussian(spd_from_seed(2, &entries));
        let scaled = p.scale_blocks(&[l0, l1], ScaleMode::Divide).unwrap();
        let expect = entropy(&p).unwrap() - (l0.ln() + l1.ln());
        prop_assert!((entropy(&scaled).unwrap() - expect).abs() < 1e-9);
    }

    // Flow semigroup property on the closed-form backend.
    #[test]
    fn ou_semigroup_analytic(
        entries in prop::array::uniform4(-1.0f64..1.0),
        s in 0.01f64..2.0,
        t in 0.01f64..2.0,
    ) {
        let p = Density::Gaussian(spd_from_seed(2, &entries));
        let one = epilab_core::flow::ou_evolve(
            &epilab_core::flow::ou_evolve(&p, s).unwrap(),
            t,
        )
        .unwrap();
        let two = epilab_core::flow::ou_evolve(&p, s + t).unwrap();
        let (a, b) = (one.as_gaussian().unwrap(), two.as_gaussian().unwrap());
        prop_assert!((a.cov() - b.cov()).amax() < 1e-8);
    }

    // For d = 1 Gaussians the optimized Fisher bound is an identity:
    // 1/J = <1, I^{-1} 1>.
    #[test]
    fn gaussian_stam_identity(entries in prop::array::uniform9(-1.0f64..1.0)) {
        let p = Density::Gaussian(spd_from_seed(3, &entries));
        let i = fisher_matrix(&p).unwrap();
        let inv = i.inverse().unwrap();
        let ones = DVector::from_element(3, 1.0);
        let rhs = (&inv * &ones).dot(&ones);
        let j = fisher_of_sum(&p).unwrap();
        prop_assert!((1.0 / j - rhs).abs() < 1e-8 * (1.0 / j).abs().max(1.0));
    }
}

/// Swaps the two blocks of a bivariate density.
fn swap_blocks(p: &Density) -> Density {
    match p {
        Density::Gaussian(g) => {
            let perm = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
            let cov = &perm * g.cov() * perm.transpose();
            let mean = vec![g.mean()[1], g.mean()[0]];
            Density::Gaussian(GaussianDensity::new(mean, cov, g.blocks()).unwrap())
        }
        Density::Grid(g) => {
            let values = g
                .values()
                .clone()
                .permuted_axes(IxDyn(&[1, 0]))
                .as_standard_layout()
                .to_owned();
            let smooth = g.smooth();
            Density::Grid(
                GridDensity::new(vec![g.axis(1), g.axis(0)], values, g.blocks())
                    .unwrap()
                    .with_smooth(smooth),
            )
        }
    }
}

// The remainder-corrected margins are invariant under relabeling the blocks.
#[test]
fn remainders_invariant_under_block_relabeling() {
    let cfg = HarnessConfig::default();
    let p = Density::Gaussian(independent_gaussian(&[1.0, 4.0]).unwrap());
    let q = swap_blocks(&p);
    let rp = verify_dependent_epi(&p, &cfg).unwrap();
    let rq = verify_dependent_epi(&q, &cfg).unwrap();
    assert!((rp.margin - rq.margin).abs() < 1e-6);

    let g = exchangeable_gaussian(2, 0.5).unwrap();
    let grid = Density::Grid(gaussian_to_grid(&g, &[axis(-8.0, 8.0, 65); 2]).unwrap());
    let grid_swapped = swap_blocks(&grid);
    let mut cfg = HarnessConfig::default();
    cfg.flow.nodes = 16;
    let rp = verify_conditional_epi(&grid, &cfg).unwrap();
    let rq = verify_conditional_epi(&grid_swapped, &cfg).unwrap();
    assert!((rp[0].margin - rq[0].margin).abs() < 1e-6);
    assert!((rp[1].margin - rq[1].margin).abs() < 1e-6);
}

// Summing independent blocks agrees with discretely convolving the
// marginals (an independent oracle for the fiber integration).
#[test]
fn sum_density_matches_marginal_convolution() {
    let g = independent_gaussian(&[1.0, 2.0]).unwrap();
    let grid = gaussian_to_grid(&g, &[axis(-9.0, 9.0, 129); 2]).unwrap();
    let p = Density::Grid(grid);
    let computed = p.sum_density().unwrap();
    let h_computed = entropy(&computed).unwrap();

    // Oracle: 1-d trapezoid convolution of the two marginals on the
    // Minkowski-sum grid.
    let m0 = p.marginalize(&[0]).unwrap();
    let m1 = p.marginalize(&[1]).unwrap();
    let (m0, m1) = (m0.as_grid().unwrap(), m1.as_grid().unwrap());
    let ax = m0.axis(0);
    let h = ax.step();
    let m = ax.len();
    let out_m = 2 * (m - 1) + 1;
    let out_lo = 2.0 * ax.lo();
    let mut conv = vec![0.0; out_m];
    let w0 = ax.trapezoid_weights();
    for j in 0..out_m {
        let wj = out_lo + h * j as f64;
        let mut terms = Vec::new();
        for i in 0..m {
            let x = ax.value(i);
            let other = wj - x;
            let t = (other - ax.lo()) / h;
            if t < -1e-9 || t > (m - 1) as f64 + 1e-9 {
                continue;
            }
            let k = (t.round() as usize).min(m - 1);
            terms.push(w0[i] * m0.values()[IxDyn(&[i])] * m1.values()[IxDyn(&[k])]);
        }
        conv[j] = pairwise_sum(&terms);
    }
    let mass: f64 = {
        let mut w = vec![h; out_m];
        w[0] = h / 2.0;
        w[out_m - 1] = h / 2.0;
        conv.iter().zip(&w).map(|(c, w)| c * w).sum()
    };
    let h_oracle: f64 = {
        let mut w = vec![h; out_m];
        w[0] = h / 2.0;
        w[out_m - 1] = h / 2.0;
        -conv
            .iter()
            .zip(&w)
            .map(|(c, wt)| {
                let v = c / mass;
                if v > 1e-300 {
                    wt * v * v.ln()
                } else {
                    0.0
                }
            })
            .sum::<f64>()
    };
    assert!(
        (h_computed - h_oracle).abs() < 2e-3,
        "entropy gap {} (computed {h_computed}, oracle {h_oracle})",
        (h_computed - h_oracle).abs()
    );
    // Closed form: sum of independent N(0,1) and N(0,2) is N(0,3).
    let exact = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * 3.0).ln();
    assert!((h_computed - exact).abs() < 2e-3);
}
