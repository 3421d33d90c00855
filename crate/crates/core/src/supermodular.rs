//! Log-supermodularity (MTP2) certification by three routes: the lattice
//! definition u(x)u(y) <= u(x^y)u(x v y) sampled on grid point pairs, the
//! mixed-partials criterion on log u, and the exact inverse-covariance sign
//! test for Gaussians. Also tests stability under isotropic Gaussian
//! convolution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::density::{Density, GaussianDensity, GridDensity};
use crate::error::{Error, Result};

/// Points with density below this fraction of the maximum are outside the
/// "core" where log p is numerically meaningful.
const CORE_FRACTION: f64 = 1e-8;

/// Certification method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum LsmMethod {
    Lattice,
    MixedPartials,
    GaussianInverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum LsmVerdict {
    Holds,
    Fails,
    Inconclusive,
}

/// Where the worst margin was found.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum LsmWitness {
    /// A pair of points violating (or nearly violating) the lattice
    /// inequality.
    PointPair { x: Vec<f64>, y: Vec<f64> },
    /// A coordinate pair and the location of the worst mixed partial.
    CoordinatePair { a: usize, b: usize, at: Vec<f64> },
}

/// Outcome of one certification run. `worst_violation` is the minimum margin
/// found; verdicts are always reported together with that margin.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LsmReport {
    pub method: LsmMethod,
    pub verdict: LsmVerdict,
    pub worst_violation: f64,
    pub witness: Option<LsmWitness>,
    /// Number of pairs (lattice) or stencil evaluations (mixed partials).
    pub checked: usize,
    pub tol: f64,
}

impl LsmReport {
    fn conclude(
        method: LsmMethod,
        worst: f64,
        witness: Option<LsmWitness>,
        checked: usize,
        tol: f64,
    ) -> LsmReport {
        let verdict = if checked == 0 {
            LsmVerdict::Inconclusive
        } else if worst >= -tol {
            LsmVerdict::Holds
        } else {
            LsmVerdict::Fails
        };
        let witness = match verdict {
            LsmVerdict::Fails => {
                debug_assert!(witness.is_some());
                witness
            }
            _ => witness,
        };
        LsmReport {
            method,
            verdict,
            worst_violation: worst,
            witness,
            checked,
            tol,
        }
    }

    pub fn holds(&self) -> bool {
        self.verdict == LsmVerdict::Holds
    }
}

/// Certification parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LsmParams {
    /// Sampled point pairs for the lattice check (exhaustive below
    /// [`EXHAUSTIVE_POINT_CAP`] grid points).
    pub pairs: usize,
    pub seed: u64,
    pub tol: f64,
    /// Convolution variances probed by the stability check.
    pub s_values: Vec<f64>,
}

impl Default for LsmParams {
    fn default() -> Self {
        LsmParams {
            pairs: 100_000,
            seed: 7,
            tol: 1e-6,
            s_values: vec![0.1, 0.5, 1.0],
        }
    }
}

/// Grids with at most this many points get the exhaustive all-pairs lattice
/// check (about 8M unordered pairs); larger grids are sampled.
pub const EXHAUSTIVE_POINT_CAP: usize = 4096;

/// Lattice-definition check on grid point pairs: the margin of a pair is
/// log u(x^y) + log u(x v y) - log u(x) - log u(y), which is nonnegative for
/// log-supermodular u. Pairs touching values below the floor are skipped;
/// if every pair is skipped the verdict is inconclusive.
pub fn lattice_check(g: &GridDensity, params: &LsmParams) -> LsmReport {
    let shape: Vec<usize> = g.axes().iter().map(|a| a.len()).collect();
    let total: usize = shape.iter().product();
    let floor = g.floor();
    let flat = g
        .values()
        .as_slice()
        .expect("grid tensors are stored in standard layout");

    let mut worst = f64::INFINITY;
    let mut witness = None;
    let mut checked = 0usize;
    let dim = shape.len();
    let mut ia = vec![0usize; dim];
    let mut ib = vec![0usize; dim];
    let mut lo = vec![0usize; dim];
    let mut hi = vec![0usize; dim];

    let mut eval_pair = |a: usize, b: usize| {
        decode(a, &shape, &mut ia);
        decode(b, &shape, &mut ib);
        for k in 0..dim {
            lo[k] = ia[k].min(ib[k]);
            hi[k] = ia[k].max(ib[k]);
        }
        let (pa, pb) = (flat[a], flat[b]);
        let pm = flat[encode(&lo, &shape)];
        let pj = flat[encode(&hi, &shape)];
        if pa < floor || pb < floor || pm < floor || pj < floor {
            return;
        }
        checked += 1;
        let margin = pm.ln() + pj.ln() - pa.ln() - pb.ln();
        if margin < worst {
            worst = margin;
            witness = Some((ia.clone(), ib.clone()));
        }
    };

    if total <= EXHAUSTIVE_POINT_CAP {
        for a in 0..total {
            for b in a + 1..total {
                eval_pair(a, b);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for _ in 0..params.pairs {
            let a = rng.gen_range(0..total);
            let b = rng.gen_range(0..total);
            if a != b {
                eval_pair(a, b);
            }
        }
    }

    let witness = witness.map(|(ia, ib)| LsmWitness::PointPair {
        x: point_of(g, &ia),
        y: point_of(g, &ib),
    });
    let worst = if checked == 0 { f64::NAN } else { worst };
    LsmReport::conclude(LsmMethod::Lattice, worst, witness, checked, params.tol)
}

/// Mixed-partials criterion: log u is supermodular iff all mixed second
/// partials over distinct coordinate pairs are nonnegative. Finite
/// differences are evaluated on the core region where the density exceeds
/// `1e-8 * max p`; a core covering less than a quarter of the grid is
/// refused.
pub fn mixed_partials_check(g: &GridDensity, tol: f64) -> Result<LsmReport> {
    let shape: Vec<usize> = g.axes().iter().map(|a| a.len()).collect();
    let dim = shape.len();
    let max = g.values().iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Err(Error::AllZero);
    }
    let threshold = CORE_FRACTION * max;

    // Axis-aligned bounding box of {p >= threshold}.
    let mut core_lo = vec![usize::MAX; dim];
    let mut core_hi = vec![0usize; dim];
    for (idx, &v) in g.values().indexed_iter() {
        if v >= threshold {
            for k in 0..dim {
                core_lo[k] = core_lo[k].min(idx[k]);
                core_hi[k] = core_hi[k].max(idx[k]);
            }
        }
    }
    if core_lo.iter().any(|&l| l == usize::MAX) {
        return Err(Error::AllZero);
    }
    let core_points: usize = core_lo
        .iter()
        .zip(&core_hi)
        .map(|(&l, &h)| h - l + 1)
        .product();
    let total: usize = shape.iter().product();
    let fraction = core_points as f64 / total as f64;
    if fraction < 0.25 {
        return Err(Error::CoreTooSmall { fraction });
    }

    let floor = g.floor();
    let logp = g.values().mapv(|v| v.max(floor).ln());
    let flat_log = logp.as_slice().expect("standard layout");
    let flat_p = g.values().as_slice().expect("standard layout");
    let strides: Vec<usize> = row_major_strides(&shape);

    let mut worst = f64::INFINITY;
    let mut witness = None;
    let mut checked = 0usize;
    let mut idx = core_lo.clone();
    'outer: loop {
        let base = encode(&idx, &shape);
        for a in 0..dim {
            if idx[a] <= core_lo[a] || idx[a] >= core_hi[a] {
                continue;
            }
            for b in a + 1..dim {
                if idx[b] <= core_lo[b] || idx[b] >= core_hi[b] {
                    continue;
                }
                let (sa, sb) = (strides[a], strides[b]);
                let pp = base + sa + sb;
                let pm = base + sa - sb;
                let mp = base - sa + sb;
                let mm = base - sa - sb;
                if flat_p[pp] < threshold
                    || flat_p[pm] < threshold
                    || flat_p[mp] < threshold
                    || flat_p[mm] < threshold
                {
                    continue;
                }
                checked += 1;
                let h = 4.0 * g.axes()[a].step() * g.axes()[b].step();
                let mixed = (flat_log[pp] - flat_log[pm] - flat_log[mp] + flat_log[mm]) / h;
                if mixed < worst {
                    worst = mixed;
                    witness = Some(LsmWitness::CoordinatePair {
                        a,
                        b,
                        at: point_of(g, &idx),
                    });
                }
            }
        }
        // Advance the multi-index inside the core box.
        for k in (0..dim).rev() {
            idx[k] += 1;
            if idx[k] <= core_hi[k] {
                continue 'outer;
            }
            idx[k] = core_lo[k];
        }
        break;
    }
    let worst = if checked == 0 { f64::NAN } else { worst };
    Ok(LsmReport::conclude(
        LsmMethod::MixedPartials,
        worst,
        witness,
        checked,
        tol,
    ))
}

/// Tolerance of the exact Gaussian criterion.
pub const GAUSSIAN_LSM_TOL: f64 = 1e-10;

/// A Gaussian is log-supermodular iff all off-diagonal entries of the
/// inverse covariance are nonpositive.
pub fn gaussian_lsm_check(g: &GaussianDensity) -> Result<LsmReport> {
    let total = g.blocks().total();
    let prec = g.precision();
    if total == 1 {
        // Every density on the real line is trivially log-supermodular.
        return Ok(LsmReport::conclude(
            LsmMethod::GaussianInverse,
            0.0,
            None,
            1,
            GAUSSIAN_LSM_TOL,
        ));
    }
    let mut worst = f64::INFINITY;
    let mut witness = None;
    let mut checked = 0usize;
    for a in 0..total {
        for b in a + 1..total {
            checked += 1;
            let margin = -prec[(a, b)];
            if margin < worst {
                worst = margin;
                witness = Some(LsmWitness::CoordinatePair {
                    a,
                    b,
                    at: g.mean().iter().cloned().collect(),
                });
            }
        }
    }
    Ok(LsmReport::conclude(
        LsmMethod::GaussianInverse,
        worst,
        witness,
        checked,
        GAUSSIAN_LSM_TOL,
    ))
}

/// Backend-appropriate certificate: the exact inverse-covariance test for
/// Gaussians, the mixed-partials sweep for grids.
pub fn lsm_certificate(p: &Density, params: &LsmParams) -> Result<LsmReport> {
    match p {
        Density::Gaussian(g) => gaussian_lsm_check(g),
        Density::Grid(g) => mixed_partials_check(g, params.tol),
    }
}

/// One probe of the convolution-stability check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ClassCReport {
    /// Convolution variance (0 for the base density).
    pub s: f64,
    pub report: LsmReport,
}

/// Tests membership in the class of log-supermodular densities that stay
/// log-supermodular under isotropic Gaussian convolution: certifies the
/// density itself, then p * g_s for each requested variance. If the base
/// certificate fails, only that report is returned.
pub fn class_c_check(p: &Density, params: &LsmParams) -> Result<Vec<ClassCReport>> {
    let base = lsm_certificate(p, params)?;
    let mut out = vec![ClassCReport {
        s: 0.0,
        report: base,
    }];
    if !out[0].report.holds() {
        return Ok(out);
    }
    for &s in &params.s_values {
        let convolved = p.convolve_isotropic_gaussian(s)?;
        let report = lsm_certificate(&convolved, params)?;
        out.push(ClassCReport { s, report });
    }
    Ok(out)
}

fn decode(flat: usize, shape: &[usize], out: &mut [usize]) {
    let mut rem = flat;
    for k in (0..shape.len()).rev() {
        out[k] = rem % shape[k];
        rem /= shape[k];
    }
}

fn encode(idx: &[usize], shape: &[usize]) -> usize {
    let mut flat = 0usize;
    for (k, &i) in idx.iter().enumerate() {
        flat = flat * shape[k] + i;
    }
    flat
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    strides
}

fn point_of(g: &GridDensity, idx: &[usize]) -> Vec<f64> {
    idx.iter()
        .enumerate()
        .map(|(k, &i)| g.axes()[k].value(i))
        .collect()
}
