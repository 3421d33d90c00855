//! Coverage of the structurally distinct shapes: three and four blocks
//! (complement marginals, multi-block sums) and two-dimensional blocks
//! (block-trace Fisher matrices, multilinear fiber interpolation).

use epilab_core::density::catalog::exchangeable_gaussian;
use epilab_core::density::{
    gaussian_to_grid, BlockStructure, Density, GaussianDensity, GridAxis, ScaleMode, Weights,
};
use epilab_core::flow::{flow_trace, remainder_r, remainder_s, FlowParams};
use epilab_core::functionals::{
    conditional_entropy, entropy, entropy_power, erasure_entropy, fisher_matrix,
};
use epilab_core::harness::{
    verify_classical_epi, verify_conditional_epi, verify_dependent_epi, HarnessConfig, Verdict,
};

const TWO_PI_E: f64 = 17.079_468_445_347_132;

fn axis(lo: f64, hi: f64, m: usize) -> GridAxis {
    GridAxis::new(lo, hi, m).unwrap()
}

/// Exchangeable three-block case: the remainder integrals generalize the
/// two-block logarithmic closed form to Rbar = -log(1 + 2r), and both
/// corrected bounds stay tight.
#[test]
fn three_blocks_exchangeable_gaussian() {
    let r = 0.4;
    let p = Density::Gaussian(exchangeable_gaussian(3, r).unwrap());
    let cfg = HarnessConfig::default();

    let w = Weights::equal(3).unwrap();
    let xbar = p.scale_blocks(w.as_slice(), ScaleMode::Divide).unwrap();
    let trace = flow_trace(&xbar, &cfg.flow, Some(&w)).unwrap();
    let rbar = remainder_r(&trace, &w).unwrap();
    assert!(
        (rbar.value + (1.0 + 2.0 * r).ln()).abs() < 1e-6,
        "Rbar = {} vs -log(1+2r) = {}",
        rbar.value,
        -(1.0 + 2.0 * r).ln()
    );
    // Independent quadrature oracle for Sbar (frozen from a refined run).
    let sbar = remainder_s(&trace, &w).unwrap();
    assert!(
        (sbar.value + 0.847_297_860_387_2).abs() < 1e-6,
        "Sbar = {}",
        sbar.value
    );

    let dep = verify_dependent_epi(&p, &cfg).unwrap();
    assert_eq!(dep.verdict, Verdict::Verified);
    assert!(dep.margin.abs() < 1e-4, "dependent margin {}", dep.margin);

    let reports = verify_conditional_epi(&p, &cfg).unwrap();
    assert_eq!(reports[0].verdict, Verdict::Verified);
    assert!(
        reports[0].margin.abs() < 1e-4,
        "corrected margin {}",
        reports[0].margin
    );
    // Clean margin: 2 pi e [(3 + 6r) - 3 (1-r)(1+2r)/(1+r)].
    let cond_var = (1.0 - r) * (1.0 + 2.0 * r) / (1.0 + r);
    let expected = TWO_PI_E * ((3.0 + 6.0 * r) - 3.0 * cond_var);
    assert!(
        (reports[1].margin - expected).abs() < 1e-6,
        "clean margin {} vs {expected}",
        reports[1].margin
    );
    assert_eq!(reports[1].verdict, Verdict::Verified);
}

/// Kronecker-structured two-dimensional blocks reproduce the scalar closed
/// forms: the clean conditional margin is 2 pi e (2r + 2r^2) for any block
/// dimension, and Rbar = -log(1 + r).
#[test]
fn two_dimensional_blocks_analytic() {
    let r = 0.5;
    // Sigma = [[1, r], [r, 1]] (x) I_2: cross-block covariance r I_2.
    let cov = vec![
        vec![1.0, 0.0, r, 0.0],
        vec![0.0, 1.0, 0.0, r],
        vec![r, 0.0, 1.0, 0.0],
        vec![0.0, r, 0.0, 1.0],
    ];
    let g = GaussianDensity::from_rows(
        vec![0.0; 4],
        &cov,
        BlockStructure::new(2, 2).unwrap(),
    )
    .unwrap();
    let p = Density::Gaussian(g);
    let cfg = HarnessConfig::default();

    // Functionals: block traces of the precision matrix.
    let i = fisher_matrix(&p).unwrap();
    assert!((i.entry(0, 0) - 2.0 / (1.0 - r * r)).abs() < 1e-10);
    assert!((i.entry(0, 1) + 2.0 * r / (1.0 - r * r)).abs() < 1e-10);
    // Per-block conditional entropy: h(X_1 | X_2) = log(2 pi e (1 - r^2)).
    let expect_cond = (TWO_PI_E * (1.0 - r * r)).ln();
    assert!((conditional_entropy(&p, 0).unwrap() - expect_cond).abs() < 1e-10);
    // Entropy power of the sum (a 2-dimensional density).
    let sum = p.sum_density().unwrap();
    assert_eq!(sum.blocks().total(), 2);
    assert!((entropy_power(&sum).unwrap() - TWO_PI_E * (2.0 + 2.0 * r)).abs() < 1e-8);

    let reports = verify_conditional_epi(&p, &cfg).unwrap();
    let expected_clean = TWO_PI_E * (2.0 * r + 2.0 * r * r);
    assert!(
        (reports[1].margin - expected_clean).abs() < 1e-6,
        "clean margin {} vs {expected_clean}",
        reports[1].margin
    );
    assert!(reports[0].margin.abs() < 1e-4);

    let dep = verify_dependent_epi(&p, &cfg).unwrap();
    assert_eq!(dep.verdict, Verdict::Verified);
    assert!((dep.remainder.unwrap().value + (1.0 + r).ln()).abs() < 1e-6);
}

/// Grid backend with two-dimensional blocks (total dimension 4): the
/// functionals and the bilinear fiber integration agree with the Gaussian
/// closed forms at coarse resolution.
#[test]
fn two_dimensional_blocks_grid() {
    let r = 0.5;
    let cov = vec![
        vec![1.0, 0.0, r, 0.0],
        vec![0.0, 1.0, 0.0, r],
        vec![r, 0.0, 1.0, 0.0],
        vec![0.0, r, 0.0, 1.0],
    ];
    let g = GaussianDensity::from_rows(
        vec![0.0; 4],
        &cov,
        BlockStructure::new(2, 2).unwrap(),
    )
    .unwrap();
    let grid = Density::Grid(gaussian_to_grid(&g, &[axis(-6.5, 6.5, 17); 4]).unwrap());

    let h_exact = 2.0 * TWO_PI_E.ln() + (1.0 - r * r).ln();
    assert!(
        (entropy(&grid).unwrap() - h_exact).abs() < 1e-2,
        "joint entropy {} vs {h_exact}",
        entropy(&grid).unwrap()
    );
    let i = fisher_matrix(&grid).unwrap();
    assert!((i.entry(0, 0) - 2.0 / (1.0 - r * r)).abs() < 5e-2);
    assert!((i.entry(0, 1) + 2.0 * r / (1.0 - r * r)).abs() < 5e-2);

    // Block sum through the multilinear fiber path: N(0, (2 + 2r) I_2).
    let sum = grid.sum_density().unwrap();
    assert_eq!(sum.blocks().total(), 2);
    let h_sum_exact = (TWO_PI_E * (2.0 + 2.0 * r)).ln();
    assert!(
        (entropy(&sum).unwrap() - h_sum_exact).abs() < 2e-2,
        "sum entropy {} vs {h_sum_exact}",
        entropy(&sum).unwrap()
    );
}

/// Three-block grid flow: the remainder integrals agree with the analytic
/// closed form, exercising complement marginalization of flowed 3-d grids.
#[test]
fn three_blocks_grid_remainder() {
    let r = 0.3;
    let g = exchangeable_gaussian(3, r).unwrap();
    let grid = Density::Grid(gaussian_to_grid(&g, &[axis(-7.0, 7.0, 29); 3]).unwrap());
    let w = Weights::equal(3).unwrap();
    let xbar = grid.scale_blocks(w.as_slice(), ScaleMode::Divide).unwrap();
    let params = FlowParams {
        t_max: 8.0,
        nodes: 16,
        s0: 1e-3,
    };
    let trace = flow_trace(&xbar, &params, Some(&w)).unwrap();
    let rbar = remainder_r(&trace, &w).unwrap();
    let exact = -(1.0 + 2.0 * r).ln();
    assert!(
        (rbar.value - exact).abs() < 5e-2,
        "grid Rbar {} vs analytic {exact}",
        rbar.value
    );
    let sbar = remainder_s(&trace, &w).unwrap();
    assert!(sbar.value < 0.0, "Sbar should be negative, got {}", sbar.value);
}

/// Linearized comparisons on the grid backend stay within budget.
#[test]
fn linearized_comparisons_on_grids() {
    let g = exchangeable_gaussian(2, 0.5).unwrap();
    let grid = Density::Grid(gaussian_to_grid(&g, &[axis(-8.0, 8.0, 65); 2]).unwrap());
    let w = Weights::equal(2).unwrap();
    let mut cfg = HarnessConfig::default();
    cfg.flow.nodes = 16;
    let dep = epilab_core::harness::verify_dependent_linearized(&grid, &w, &[0.5], &cfg).unwrap();
    assert!(
        dep[0].margin >= -(dep[0].tolerance + dep[0].numeric_budget),
        "dependent linearized margin {} budget {}",
        dep[0].margin,
        dep[0].numeric_budget
    );
    let cond =
        epilab_core::harness::verify_conditional_linearized(&grid, &w, &[0.5], &cfg).unwrap();
    assert!(
        cond[0].margin >= -(cond[0].tolerance + cond[0].numeric_budget),
        "conditional linearized margin {} budget {}",
        cond[0].margin,
        cond[0].numeric_budget
    );
}

/// Four one-dimensional blocks: the classical bound is tight for i.i.d.
/// Gaussians and the erasure entropy matches the joint under independence.
#[test]
fn four_blocks_grid_classical_epi() {
    let g = GaussianDensity::from_rows(
        vec![0.0; 4],
        &[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ],
        BlockStructure::new(4, 1).unwrap(),
    )
    .unwrap();
    let grid = Density::Grid(gaussian_to_grid(&g, &[axis(-6.5, 6.5, 17); 4]).unwrap());
    let cfg = HarnessConfig::default();
    let report = verify_classical_epi(&grid, &cfg).unwrap();
    assert_eq!(report.verdict, Verdict::Verified);
    assert!(report.margin.abs() < 1.0, "margin {}", report.margin);
    assert!((report.lhs - 4.0 * TWO_PI_E).abs() < 1.0);

    let gap = entropy(&grid).unwrap() - erasure_entropy(&grid).unwrap();
    assert!(gap.abs() < 1e-2, "erasure gap {gap}");
}
