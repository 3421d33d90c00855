//! Built-in density catalog shared by the test suites and the batch runner.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::{gaussian_to_grid, BlockStructure, GaussianDensity, GridAxis, GridDensity};
use crate::error::{Error, Result};

/// Exchangeable Gaussian on n one-dimensional blocks: unit variances and
/// common correlation r (requires r in (-1/(n-1), 1)).
pub fn exchangeable_gaussian(n: usize, r: f64) -> Result<GaussianDensity> {
    let blocks = BlockStructure::new(n, 1)?;
    let mut cov = DMatrix::from_element(n, n, r);
    for i in 0..n {
        cov[(i, i)] = 1.0;
    }
    GaussianDensity::new(vec![0.0; n], cov, blocks)
}

/// Independent Gaussian blocks with the given variances (d = 1 per block).
pub fn independent_gaussian(variances: &[f64]) -> Result<GaussianDensity> {
    let n = variances.len();
    let blocks = BlockStructure::new(n, 1)?;
    let mut cov = DMatrix::zeros(n, n);
    for (i, &v) in variances.iter().enumerate() {
        cov[(i, i)] = v;
    }
    GaussianDensity::new(vec![0.0; n], cov, blocks)
}

/// Grid discretization of the exchangeable bivariate Gaussian.
pub fn correlated_gaussian_grid(r: f64, axis: GridAxis) -> Result<GridDensity> {
    let g = exchangeable_gaussian(2, r)?;
    gaussian_to_grid(&g, &[axis, axis])
}

/// Coupled quartic density proportional to exp(-x^4 - y^4 + c x y).
///
/// For c >= 0 the mixed partial of the log density is the constant c, so the
/// density is log-supermodular.
pub fn quartic_coupling(c: f64, axis: GridAxis) -> Result<GridDensity> {
    if !c.is_finite() || c.abs() >= 2.0 {
        // Beyond |c| = 2 the coupling overwhelms the quartic confinement.
        return Err(Error::InvalidInput(format!(
            "quartic coupling must satisfy |c| < 2, got {c}"
        )));
    }
    GridDensity::from_fn(vec![axis, axis], BlockStructure::new(2, 1)?, |x| {
        (-x[0].powi(4) - x[1].powi(4) + c * x[0] * x[1]).exp()
    })
}

/// Uniform density on the box [-half, half]^2 (two one-dimensional blocks).
/// Not smooth; flow consumers start at a positive s0.
pub fn uniform_box(half: f64, axis: GridAxis) -> Result<GridDensity> {
    if !(half > 0.0) || half >= axis.hi() || -half <= axis.lo() {
        return Err(Error::InvalidInput(
            "uniform box must fit strictly inside the axis".into(),
        ));
    }
    // Sample the jump at half height so the trapezoid mass of the box is
    // exact when the box edges fall on grid nodes.
    let eps = axis.step() * 1e-9;
    let coord = move |x: f64| -> f64 {
        if (x.abs() - half).abs() < eps {
            0.5
        } else if x.abs() < half {
            1.0
        } else {
            0.0
        }
    };
    let g = GridDensity::from_fn(vec![axis, axis], BlockStructure::new(2, 1)?, |x| {
        coord(x[0]) * coord(x[1])
    })?;
    Ok(g.with_smooth(false))
}

/// Product of two independent grid Gaussians with the given variances.
pub fn gaussian_product_grid(v1: f64, v2: f64, axis: GridAxis) -> Result<GridDensity> {
    let g = GaussianDensity::new(
        vec![0.0, 0.0],
        DMatrix::from_row_slice(2, 2, &[v1, 0.0, 0.0, v2]),
        BlockStructure::new(2, 1)?,
    )?;
    gaussian_to_grid(&g, &[axis, axis])
}

/// One entry of the named grid-density catalog.
pub struct CatalogEntry {
    pub id: &'static str,
    pub description: &'static str,
    pub params: &'static [(&'static str, f64)],
}

/// Catalog of named grid densities accepted in experiment configs.
pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        id: "correlated_gaussian",
        description: "exchangeable bivariate Gaussian with correlation r",
        params: &[("r", 0.5)],
    },
    CatalogEntry {
        id: "quartic_coupling",
        description: "density proportional to exp(-x^4 - y^4 + c x y)",
        params: &[("c", 0.5)],
    },
    CatalogEntry {
        id: "uniform_box",
        description: "uniform density on the box [-half, half]^2",
        params: &[("half", 1.0)],
    },
    CatalogEntry {
        id: "gaussian_product",
        description: "independent Gaussian blocks with variances v1, v2",
        params: &[("v1", 1.0), ("v2", 1.0)],
    },
];

/// Builds a catalog density by id; unspecified parameters use the defaults
/// listed in [`CATALOG`].
pub fn build(id: &str, params: &BTreeMap<String, f64>, axis: GridAxis) -> Result<GridDensity> {
    let entry = CATALOG
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| Error::InvalidInput(format!("unknown catalog density '{id}'")))?;
    for key in params.keys() {
        if !entry.params.iter().any(|(name, _)| name == key) {
            return Err(Error::InvalidInput(format!(
                "catalog density '{id}' does not take a parameter '{key}'"
            )));
        }
    }
    let get = |name: &str| -> f64 {
        params.get(name).copied().unwrap_or_else(|| {
            entry
                .params
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, v)| *v)
                .unwrap()
        })
    };
    match id {
        "correlated_gaussian" => correlated_gaussian_grid(get("r"), axis),
        "quartic_coupling" => quartic_coupling(get("c"), axis),
        "uniform_box" => uniform_box(get("half"), axis),
        "gaussian_product" => gaussian_product_grid(get("v1"), get("v2"), axis),
        _ => unreachable!("catalog ids are matched above"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exchangeable_requires_valid_correlation() {
        assert!(exchangeable_gaussian(2, 0.5).is_ok());
        assert!(exchangeable_gaussian(2, 1.0).is_err());
        assert!(exchangeable_gaussian(3, -0.6).is_err());
    }

    #[test]
    fn quartic_is_normalized() {
        let axis = GridAxis::new(-3.5, 3.5, 65).unwrap();
        let q = quartic_coupling(0.5, axis).unwrap();
        assert!((q.integral() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn uniform_box_is_flagged_nonsmooth() {
        let axis = GridAxis::new(-1.5, 1.5, 61).unwrap();
        let u = uniform_box(1.0, axis).unwrap();
        assert!(!u.smooth());
        assert!((u.integral() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn catalog_build_rejects_unknown() {
        let axis = GridAxis::new(-3.0, 3.0, 33).unwrap();
        assert!(build("no_such_density", &BTreeMap::new(), axis).is_err());
        let mut bad = BTreeMap::new();
        bad.insert("zeta".to_string(), 1.0);
        assert!(build("quartic_coupling", &bad, axis).is_err());
    }
}
