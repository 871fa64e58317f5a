//! Statistical check of the Hessian rank of generic homogeneous cubics.
//!
//! A cubic is drawn with i.i.d. standard normal coefficients over the
//! monomial basis; its Hessian is linear in `x`, so the rank on the unit
//! sphere determines the rank everywhere off the origin. The scan reports
//! the smallest rank seen against `⌊n − √(2n)⌋`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{PolynomialPhase, SymTensor3};

/// Default relative singular-value threshold.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Sampling can corroborate but not certify an open dense set.
pub const RANK_SCAN_LIMITATION: &str = "sampled evidence only: a finite Gaussian ensemble and \
finitely many sphere points cannot certify that the rank bound holds on an open dense set of cubics";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Homogeneous cubic in `n` variables with standard normal coefficients on
/// the monomials `x_i x_j x_k`, `i ≤ j ≤ k`, drawn in lexicographic order.
pub fn sample_cubic(n: usize, seed: u64) -> PolynomialPhase {
    assert!(n >= 1, "cubic dimension must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::with_capacity(n * (n + 1) * (n + 2) / 6);
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                let mut e = vec![0u32; n];
                e[i] += 1;
                e[j] += 1;
                e[k] += 1;
                terms.push((e, rng.sample::<f64, _>(StandardNormal)));
            }
        }
    }
    PolynomialPhase::new(n, terms).expect("cubic terms are valid")
}

/// `⌊n − √(2n)⌋`, clamped at zero.
pub fn rank_bound(n: usize) -> usize {
    let v = n as f64 - (2.0 * n as f64).sqrt();
    v.floor().max(0.0) as usize
}

/// Number of singular values above `tol` times the largest one.
pub fn matrix_rank(h: &DMatrix<f64>, tol: f64) -> usize {
    let eig = SymmetricEigen::new(h.clone());
    let sv: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}

/// Rank of the Hessian of `phase` at the unit vector `x`.
pub fn hessian_rank_at(phase: &PolynomialPhase, x: &[f64], tol: f64) -> Result<usize> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidParameter(format!("rank tolerance {tol} outside (0, 1)")));
    }
    Ok(matrix_rank(&phase.hessian(x)?, tol))
}

/// `H_{ij} = Σ_k T_{ijk} x_k`, the Hessian of a cubic from its tensor.
fn hessian_from_tensor(t: &SymTensor3, x: &[f64]) -> DMatrix<f64> {
    let n = t.dimension();
    DMatrix::from_fn(n, n, |i, j| (0..n).map(|k| t.get(i, j, k) * x[k]).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankScanOptions {
    pub n: usize,
    pub cubics: usize,
    /// Random sphere points per cubic; `2n` axis points are added.
    pub points: usize,
    pub tol: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankFailure {
    pub cubic_seed: u64,
    pub point: Vec<f64>,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TolSensitivePoint {
    pub cubic_seed: u64,
    pub point: Vec<f64>,
    pub rank: usize,
    pub rank_at_half_tol: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub limitation: String,
    pub n: usize,
    pub ensemble_size: usize,
    pub points_per_cubic: usize,
    pub tol: f64,
    pub bound: usize,
    pub min_rank: usize,
    /// `histogram[r]` counts sampled points of rank `r`.
    pub histogram: Vec<usize>,
    pub failures: Vec<RankFailure>,
    pub tol_sensitive: Vec<TolSensitivePoint>,
}

impl RankReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Seed of the `index`-th ensemble member.
pub fn member_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64))
}

/// Unit-sphere sample: `points` normalized Gaussians followed by `±e_i`.
pub fn sphere_points(n: usize, points: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed.wrapping_add(1)));
    let mut out = Vec::with_capacity(points + 2 * n);
    while out.len() < points {
        let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 {
            out.push(v.iter().map(|a| a / norm).collect());
        }
    }
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = sign;
            out.push(e);
        }
    }
    out
}

struct MemberResult {
    ranks: Vec<usize>,
    failures: Vec<RankFailure>,
    tol_sensitive: Vec<TolSensitivePoint>,
}

pub fn rank_scan(opts: &RankScanOptions) -> Result<RankReport> {
    if opts.n == 0 || opts.cubics == 0 || opts.points == 0 {
        return Err(Error::InvalidParameter("rank scan needs n, cubics, points >= 1".into()));
    }
    if !(opts.tol > 0.0 && opts.tol < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rank tolerance {} outside (0, 1)",
            opts.tol
        )));
    }
    let n = opts.n;
    let bound = rank_bound(n);
    let origin = vec![0.0; n];
    let members: Vec<MemberResult> = (0..opts.cubics)
        .into_par_iter()
        .map(|i| {
            let cubic_seed = member_seed(opts.seed, i);
            let p = sample_cubic(n, cubic_seed);
            let t = p.third_tensor(&origin).expect("dimension matches");
            let mut res = MemberResult {
                ranks: Vec::new(),
                failures: Vec::new(),
                tol_sensitive: Vec::new(),
            };
            for x in sphere_points(n, opts.points, cubic_seed) {
                let h = hessian_from_tensor(&t, &x);
                let rank = matrix_rank(&h, opts.tol);
                let half = matrix_rank(&h, 0.5 * opts.tol);
                if half != rank {
                    res.tol_sensitive.push(TolSensitivePoint {
                        cubic_seed,
                        point: x.clone(),
                        rank,
                        rank_at_half_tol: half,
                    });
                }
                if rank < bound {
                    res.failures.push(RankFailure {
                        cubic_seed,
                        point: x,
                        rank,
                    });
                }
                res.ranks.push(rank);
            }
            res
        })
        .collect();
    let mut histogram = vec![0usize; n + 1];
    let mut failures = Vec::new();
    let mut tol_sensitive = Vec::new();
    for m in members {
        for r in m.ranks {
            histogram[r] += 1;
        }
        failures.extend(m.failures);
        tol_sensitive.extend(m.tol_sensitive);
    }
    let min_rank = histogram.iter().position(|&c| c > 0).unwrap_or(0);
    Ok(RankReport {
        limitation: RANK_SCAN_LIMITATION.to_string(),
        n,
        ensemble_size: opts.cubics,
        points_per_cubic: opts.points + 2 * n,
        tol: opts.tol,
        bound,
        min_rank,
        histogram,
        failures,
        tol_sensitive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::catalog;

    #[test]
    fn rank_bound_values() {
        assert_eq!(rank_bound(18), 12);
        assert_eq!(rank_bound(2), 0);
        assert_eq!(rank_bound(1), 0);
        assert_eq!(rank_bound(10), 5);
        assert_eq!(rank_bound(8), 4);
        assert_eq!(rank_bound(6), 2);
        assert_eq!(rank_bound(14), 8);
    }

    #[test]
    fn sample_is_deterministic_and_homogeneous() {
        let a = sample_cubic(4, 17);
        assert_eq!(a, sample_cubic(4, 17));
        assert_ne!(a, sample_cubic(4, 18));
        assert_eq!(a.terms().len(), 20);
        assert!(a.terms().iter().all(|(e, _)| e.iter().sum::<u32>() == 3));
        let x = [0.3, -0.2, 0.9, 0.1];
        let t = 1.7;
        let tx: Vec<f64> = x.iter().map(|v| v * t).collect();
        let lhs = a.eval(&tx).unwrap();
        let rhs = t.powi(3) * a.eval(&x).unwrap();
        assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn rank_examples() {
        let p = PolynomialPhase::new(3, [(vec![3, 0, 0], 1.0)]).unwrap();
        assert_eq!(hessian_rank_at(&p, &[1.0, 0.0, 0.0], 1e-8).unwrap(), 1);
        let s = crate::phase::cubic_sum_phase(5, 5).unwrap();
        let u = vec![1.0 / 5f64.sqrt(); 5];
        assert_eq!(hessian_rank_at(&s, &u, 1e-8).unwrap(), 5);
        let m = catalog("monkey-saddle").unwrap();
        for k in 0..36 {
            let a = k as f64 * std::f64::consts::PI / 18.0;
            assert_eq!(hessian_rank_at(&m, &[a.cos(), a.sin()], 1e-8).unwrap(), 2);
        }
        assert_eq!(hessian_rank_at(&p, &[0.0, 1.0, 0.0], 1e-8).unwrap(), 0);
        assert!(hessian_rank_at(&p, &[1.0, 0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn tensor_hessian_matches_phase_hessian() {
        let p = sample_cubic(5, 3);
        let t = p.third_tensor(&[0.0; 5]).unwrap();
        let x = [0.1, -0.4, 0.3, 0.7, -0.2];
        let diff = (hessian_from_tensor(&t, &x) - p.hessian(&x).unwrap()).abs().max();
        assert!(diff < 1e-12);
    }

    #[test]
    fn sphere_points_are_unit_and_include_axes() {
        let pts = sphere_points(3, 10, 5);
        assert_eq!(pts.len(), 16);
        for p in &pts {
            let norm: f64 = p.iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        assert_eq!(pts[10], vec![1.0, 0.0, 0.0]);
        assert_eq!(pts[11], vec![-1.0, 0.0, 0.0]);
    }

    #[test]
    fn small_scan_reports_consistently() {
        let r = rank_scan(&RankScanOptions {
            n: 6,
            cubics: 4,
            points: 20,
            tol: 1e-8,
            seed: 9,
        })
        .unwrap();
        assert_eq!(r.histogram.iter().sum::<usize>(), 4 * 32);
        assert_eq!(r.passed(), r.min_rank >= r.bound);
        assert!(r.min_rank <= 6);
    }
}
