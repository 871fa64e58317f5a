//! Third-derivative nondegeneracy checker and degeneracy dimension.
//!
//! For a sample point `x`, let `V_{μ,x}` be the span of eigenvectors of
//! `H_x` with `|ν| ≤ μ`. The condition asks, for each `μ ≤ M` and unit
//! `v ∈ V_{μ,x}`, for a unit `w ∈ V_{Rμ,x}` with
//! `(v·∇)²(w·∇)Φ(y) ≥ K'` for every `y` in the domain.
//!
//! With `g_y(v) = T_y(v, v, ·)` the inner problem
//! `max_{|w| ≤ 1, w ∈ W} min_y ⟨g_y(v), w⟩` equals the distance from the
//! origin to the convex hull of the projections `P_W g_y(v)` whenever that
//! distance is positive. The hull's minimum-norm point is found by
//! Frank–Wolfe iteration and its direction is the reported witness `w`;
//! the reported value is the minimum actually attained by that `w`, so it
//! is always a certified lower bound of the inner maximum. For cubic
//! phases `g_y` does not depend on `y` and the value is exact.
//!
//! The outer quantifier over `v` is sampled, so the margin is an upper
//! estimate of the true infimum: the checker finds witnesses and
//! counterexamples, it does not prove the condition.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{bound_k, Domain, PolynomialPhase, SymTensor3};
use crate::spectral::SpectralDecomposition;

/// Values this close to zero (relative to `max(K, 1)`) are reported as 0.
pub const ZERO_SNAP: f64 = 1e-9;

/// Unit directions sampled in a 2-dimensional `V`.
pub const DIRECTIONS_PER_PLANE: usize = 64;

/// Orthonormal basis (columns) of `V_{μ,x}`; whole eigen-clusters are
/// included when their `|value| ≤ μ` up to the cluster tolerance.
pub fn v_space_of(dec: &SpectralDecomposition, mu: f64) -> DMatrix<f64> {
    let n = dec.dimension();
    let slack = dec.cluster_tol();
    let cols: Vec<usize> = dec
        .clusters()
        .iter()
        .filter(|c| c.value.abs() <= mu + slack)
        .flat_map(|c| c.start..c.start + c.len)
        .collect();
    DMatrix::from_fn(n, cols.len(), |r, c| dec.eigenvectors()[(r, cols[c])])
}

pub fn v_space(phase: &PolynomialPhase, x: &[f64], mu: f64) -> Result<DMatrix<f64>> {
    if !(mu >= 0.0) {
        return Err(Error::InvalidParameter(format!("μ must be nonnegative (got {mu})")));
    }
    Ok(v_space_of(&SpectralDecomposition::new(&phase.hessian(x)?)?, mu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NondegenOptions {
    pub m: f64,
    pub r: f64,
    /// Lattice points per axis for `x` (odd counts include the center).
    pub points_per_axis: usize,
    /// Lattice points per axis for `y`; ignored for cubic phases.
    pub y_points_per_axis: usize,
    pub seed: u64,
}

impl NondegenOptions {
    pub fn new(m: f64, r: f64) -> Self {
        Self {
            m,
            r,
            points_per_axis: 5,
            y_points_per_axis: 5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub mu: f64,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegenReport {
    pub m: f64,
    pub r: f64,
    /// Smallest attained value over all sampled `(x, μ, v)`.
    pub k_prime_margin: f64,
    pub holds: bool,
    pub k_inf: usize,
    /// Worst witness per sampled `x`, sorted by value.
    pub witnesses: Vec<Witness>,
    pub x_samples: usize,
    pub y_samples: usize,
    pub v_samples: usize,
    pub sampling: String,
    pub k_bound: f64,
}

/// Unit directions in a `p`-dimensional space, up to sign: one for `p = 1`,
/// 64 equally spaced half-circle angles for `p = 2`, and for `p ≥ 3` the
/// axes, the pairwise diagonals and `64 · 4^{p−2}` seeded Gaussian
/// directions.
pub fn sphere_directions(p: usize, seed: u64) -> Vec<Vec<f64>> {
    match p {
        0 => Vec::new(),
        1 => vec![vec![1.0]],
        2 => (0..DIRECTIONS_PER_PLANE)
            .map(|i| {
                let a = std::f64::consts::PI * i as f64 / DIRECTIONS_PER_PLANE as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut out = Vec::new();
            for i in 0..p {
                let mut e = vec![0.0; p];
                e[i] = 1.0;
                out.push(e);
                for j in (i + 1)..p {
                    for sign in [1.0, -1.0] {
                        let mut d = vec![0.0; p];
                        d[i] = std::f64::consts::FRAC_1_SQRT_2;
                        d[j] = sign * std::f64::consts::FRAC_1_SQRT_2;
                        out.push(d);
                    }
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let count = DIRECTIONS_PER_PLANE * 4usize.pow((p - 2).min(4) as u32);
            while out.len() < count {
                let g: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    out.push(g.iter().map(|a| a / norm).collect());
                }
            }
            out
        }
    }
}

/// Minimum-norm point of the convex hull of `points` (Frank–Wolfe with
/// exact line search).
fn min_norm_hull_point(points: &[DVector<f64>]) -> DVector<f64> {
    let mut best = points
        .iter()
        .min_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
        .expect("nonempty")
        .clone();
    if points.len() == 1 {
        return best;
    }
    for _ in 0..2000 {
        let (s, _) = points
            .iter()
            .map(|p| (p, p.dot(&best)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty");
        let d = s - &best;
        let dd = d.norm_squared();
        let gap = -best.dot(&d);
        if dd == 0.0 || gap <= 1e-15 * best.norm_squared().max(1e-300) {
            break;
        }
        let t = (gap / dd).clamp(0.0, 1.0);
        best += d * t;
    }
    best
}

/// Best `w` in the column span of `basis` against the vectors `gs`, and
/// the attained `min_y ⟨g_y, w⟩`.
fn best_w(basis: &DMatrix<f64>, gs: &[DVector<f64>]) -> (DVector<f64>, f64) {
    let coords: Vec<DVector<f64>> = gs.iter().map(|g| basis.tr_mul(g)).collect();
    let u = min_norm_hull_point(&coords);
    let norm = u.norm();
    let w_coords = if norm > 0.0 {
        u / norm
    } else {
        let mut e = DVector::zeros(basis.ncols());
        e[0] = 1.0;
        e
    };
    let value = coords.iter().map(|c| c.dot(&w_coords)).fold(f64::INFINITY, f64::min);
    (basis * w_coords, value)
}

fn thresholds(dec: &SpectralDecomposition, m: f64, r: f64) -> Vec<f64> {
    let mut mus: Vec<f64> = dec
        .clusters()
        .iter()
        .map(|c| c.value.abs())
        .filter(|&a| a <= m)
        .collect();
    mus.push(m / r);
    mus.push(m);
    mus.sort_by(f64::total_cmp);
    mus.dedup();
    mus
}

pub fn check_condition(phase: &PolynomialPhase, domain: &Domain, opts: &NondegenOptions) -> Result<NondegenReport> {
    if !(opts.m > 0.0 && opts.m.is_finite()) {
        return Err(Error::InvalidParameter(format!("M must be positive (got {})", opts.m)));
    }
    if !(opts.r >= 1.0 && opts.r.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "R must be at least 1 (got {})",
            opts.r
        )));
    }
    if opts.points_per_axis == 0 || opts.y_points_per_axis == 0 {
        return Err(Error::InvalidParameter(
            "lattice needs at least one point per axis".into(),
        ));
    }
    let n = phase.dimension();
    if domain.dimension() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: domain.dimension(),
        });
    }
    let k_bound = bound_k(phase, domain)?;
    let snap = ZERO_SNAP * k_bound.max(1.0);
    let xs = domain.lattice(opts.points_per_axis);
    let ys = if phase.degree() <= 3 {
        vec![domain.center()]
    } else {
        domain.lattice(opts.y_points_per_axis)
    };
    let tensors: Vec<SymTensor3> = ys.iter().map(|y| phase.third_tensor(y)).collect::<Result<_>>()?;

    struct PointOutcome {
        witness: Option<Witness>,
        v_samples: usize,
        dim_m: usize,
    }
    let outcomes: Vec<PointOutcome> = xs
        .par_iter()
        .map(|x| -> Result<PointOutcome> {
            let dec = SpectralDecomposition::new(&phase.hessian(x)?)?;
            let mut worst: Option<Witness> = None;
            let mut v_samples = 0;
            for mu in thresholds(&dec, opts.m, opts.r) {
                let v_basis = v_space_of(&dec, mu);
                if v_basis.ncols() == 0 {
                    continue;
                }
                let w_basis = v_space_of(&dec, opts.r * mu);
                for dir in sphere_directions(v_basis.ncols(), opts.seed) {
                    v_samples += 1;
                    let v = &v_basis * DVector::from_column_slice(&dir);
                    let gs: Vec<DVector<f64>> = tensors
                        .iter()
                        .map(|t| DVector::from_vec(t.contract(v.as_slice(), v.as_slice())))
                        .collect();
                    let (w, mut value) = if w_basis.ncols() == 0 {
                        (DVector::zeros(n), f64::NEG_INFINITY)
                    } else {
                        best_w(&w_basis, &gs)
                    };
                    if value.abs() <= snap {
                        value = 0.0;
                    }
                    if worst.as_ref().is_none_or(|w0| value < w0.value) {
                        worst = Some(Witness {
                            x: x.clone(),
                            mu,
                            v: v.iter().cloned().collect(),
                            w: w.iter().cloned().collect(),
                            value,
                        });
                    }
                }
            }
            Ok(PointOutcome {
                witness: worst,
                v_samples,
                dim_m: v_space_of(&dec, opts.m).ncols(),
            })
        })
        .collect::<Result<_>>()?;

    let mut witnesses: Vec<Witness> = Vec::new();
    let mut v_samples = 0;
    let mut k_inf = n;
    for o in outcomes {
        v_samples += o.v_samples;
        k_inf = k_inf.min(o.dim_m);
        witnesses.extend(o.witness);
    }
    witnesses.sort_by(|a, b| a.value.total_cmp(&b.value));
    let margin = witnesses.first().map(|w| w.value).unwrap_or(f64::INFINITY);
    Ok(NondegenReport {
        m: opts.m,
        r: opts.r,
        k_prime_margin: margin,
        holds: margin > 0.0,
        k_inf,
        witnesses,
        x_samples: xs.len(),
        y_samples: ys.len(),
        v_samples,
        sampling: format!(
            "x: {}^{} lattice; y: {} points (single point when the third tensor is constant); \
             v: 1 direction in a line, {} half-circle directions in a plane, axes + diagonals + \
             seeded Gaussian directions (64·4^(p−2), capped at p = 6) for p ≥ 3",
            opts.points_per_axis,
            n,
            ys.len(),
            DIRECTIONS_PER_PLANE
        ),
        k_bound,
    })
}

/// Minimum over the lattice of `support` of `dim V_{M,x}`.
pub fn infimum_k(phase: &PolynomialPhase, support: &Domain, m: f64, points_per_axis: usize) -> Result<usize> {
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!("M must be positive (got {m})")));
    }
    let mut best = phase.dimension();
    for x in support.lattice(points_per_axis.max(1)) {
        best = best.min(v_space(phase, &x, m)?.ncols());
    }
    Ok(best)
}
