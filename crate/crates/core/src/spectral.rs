//! Hessian spectral geometry: eigen-cluster projections, the nonisotropic
//! norms `N_x[v,r]` and `N*_x[v,r]`, their seminorms, balls, local ranks,
//! spectral gaps and the dyadic gap scan.
//!
//! Everything is derived from the eigendecomposition of `H_x`. With
//! `E_c` the projection onto eigen-cluster `c` (value `μ_c`) and
//! `b_c(r) = (|μ_c| r)^{1/2} + (K r²)^{1/3}`:
//!
//! ```text
//! N_x[v,r]  = r⁻¹ (Σ_c |E_c v|² b_c(r)²)^{1/2}
//! N*_x[v,r] =     (Σ_c |E_c v|² / b_c(r)²)^{1/2}
//! ```
//!
//! `K` is floored at [`K_MIN`] so that sub-cubic phases keep finite norms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{halton_point, unit_ball_volume};
use crate::phase::{bound_k, Domain, PolynomialPhase};

/// Floor applied to `K` in every geometric formula.
pub const K_MIN: f64 = 1e-8;

/// Maximum bisection steps in the seminorm root search.
pub const SEMINORM_MAX_STEPS: usize = 200;

/// Target `|N − 1|` at the seminorm root.
pub const SEMINORM_TOL: f64 = 1e-10;

/// Default number of quasi-uniform samples for [`Geometry::rank_s`].
pub const DEFAULT_RANK_SAMPLES: usize = 256;

/// Default number of dyadic scales in [`Geometry::gap_scan`]; the smallest
/// scale is `2^{-40} r`.
pub const DEFAULT_GAP_SCAN_DEPTH: usize = 40;

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite (got {v})"
        )))
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// `(|μ| r)^{1/2} + (K r²)^{1/3}`.
#[inline]
pub fn bracket(mu: f64, k: f64, r: f64) -> f64 {
    (mu.abs() * r).sqrt() + (k * r * r).cbrt()
}

/// A group of numerically equal eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Mean of the member eigenvalues.
    pub value: f64,
    /// First member index into the sorted eigenvalue list.
    pub start: usize,
    pub len: usize,
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted
/// decreasingly and grouped into clusters of consecutive values closer than
/// `cluster_tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    clusters: Vec<Cluster>,
    cluster_tol: f64,
}

impl SpectralDecomposition {
    /// Decomposition with the default tolerance `1e-8 (1 + ‖H‖)`.
    pub fn new(h: &DMatrix<f64>) -> Result<Self> {
        let tol = 1e-8 * (1.0 + h.norm());
        Self::with_tolerance(h, tol)
    }

    pub fn with_tolerance(h: &DMatrix<f64>, cluster_tol: f64) -> Result<Self> {
        check_len(h.nrows(), h.ncols())?;
        if h.nrows() == 0 {
            return Err(Error::InvalidParameter("empty matrix".into()));
        }
        if !(cluster_tol >= 0.0) {
            return Err(Error::InvalidParameter("cluster tolerance must be nonnegative".into()));
        }
        let sym = (h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let n = h.nrows();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        let mut clusters: Vec<Cluster> = Vec::new();
        for (i, &mu) in eigenvalues.iter().enumerate() {
            match clusters.last_mut() {
                Some(c) if eigenvalues[i - 1] - mu <= cluster_tol => c.len += 1,
                _ => clusters.push(Cluster {
                    value: mu,
                    start: i,
                    len: 1,
                }),
            }
        }
        for c in &mut clusters {
            c.value = eigenvalues[c.start..c.start + c.len].iter().sum::<f64>() / c.len as f64;
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
            clusters,
            cluster_tol,
        })
    }

    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors as columns, in eigenvalue order.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster_tol(&self) -> f64 {
        self.cluster_tol
    }

    /// Orthonormal basis (columns) of a cluster's eigenspace.
    pub fn cluster_basis(&self, cluster: usize) -> DMatrix<f64> {
        let c = self.clusters[cluster];
        self.eigenvectors.columns(c.start, c.len).into_owned()
    }

    /// Index of the cluster whose value is within `cluster_tol` of `mu`.
    pub fn find_cluster(&self, mu: f64) -> Option<usize> {
        let slack = self.cluster_tol.max(1e-12 * (1.0 + mu.abs()));
        self.clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| (c.value - mu).abs() <= slack)
            .min_by(|a, b| (a.1.value - mu).abs().total_cmp(&(b.1.value - mu).abs()))
            .map(|(i, _)| i)
    }

    /// `|E_c v|²` for every cluster.
    pub fn cluster_weights(&self, v: &[f64]) -> Vec<f64> {
        let coeffs = self.eigenvectors.tr_mul(&DVector::from_column_slice(v));
        self.clusters
            .iter()
            .map(|c| (c.start..c.start + c.len).map(|i| coeffs[i] * coeffs[i]).sum())
            .collect()
    }

    /// `Σ μ_i v_i v_iᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        &self.eigenvectors * d * self.eigenvectors.transpose()
    }

    /// `N_x[v,r]` with boundedness constant `k`.
    pub fn norm_n(&self, k: f64, v: &[f64], r: f64) -> Result<f64> {
        check_len(self.dimension(), v.len())?;
        check_positive("r", r)?;
        Ok(self.norm_n_weights(&self.cluster_weights(v), k, r))
    }

    /// `N*_x[v,r]` with boundedness constant `k`.
    pub fn norm_nstar(&self, k: f64, v: &[f64], r: f64) -> Result<f64> {
        check_len(self.dimension(), v.len())?;
        check_positive("r", r)?;
        Ok(self.norm_nstar_weights(&self.cluster_weights(v), k, r))
    }

    fn norm_n_weights(&self, weights: &[f64], k: f64, r: f64) -> f64 {
        let s: f64 = self
            .clusters
            .iter()
            .zip(weights)
            .map(|(c, w)| w * bracket(c.value, k, r).powi(2))
            .sum();
        s.sqrt() / r
    }

    fn norm_nstar_weights(&self, weights: &[f64], k: f64, r: f64) -> f64 {
        let s: f64 = self
            .clusters
            .iter()
            .zip(weights)
            .map(|(c, w)| w / bracket(c.value, k, r).powi(2))
            .sum();
        s.sqrt()
    }

    /// The seminorm `N_x[v] = inf{r : N_x[v,r] < 1}`.
    pub fn seminorm_n(&self, k: f64, v: &[f64]) -> Result<f64> {
        check_len(self.dimension(), v.len())?;
        let w = self.cluster_weights(v);
        solve_unit_level(|r| self.norm_n_weights(&w, k, r), &w)
    }

    /// The dual seminorm `N*_x[v] = inf{r : N*_x[v,r] < 1}`.
    pub fn seminorm_nstar(&self, k: f64, v: &[f64]) -> Result<f64> {
        check_len(self.dimension(), v.len())?;
        let w = self.cluster_weights(v);
        solve_unit_level(|r| self.norm_nstar_weights(&w, k, r), &w)
    }

    /// `w = Σ_c b_c(r)² E_c v`, which attains `|v·w| = r N[v,r] N*[w,r]`.
    pub fn dual_extremal(&self, k: f64, v: &[f64], r: f64) -> Result<DVector<f64>> {
        check_len(self.dimension(), v.len())?;
        check_positive("r", r)?;
        let coeffs = self.eigenvectors.tr_mul(&DVector::from_column_slice(v));
        let mut scaled = coeffs.clone();
        for c in &self.clusters {
            let b2 = bracket(c.value, k, r).powi(2);
            for i in c.start..c.start + c.len {
                scaled[i] *= b2;
            }
        }
        Ok(&self.eigenvectors * scaled)
    }

    /// Number of eigenvalues with `|μ| > s (K² r)^{1/3}`.
    pub fn loc_rank(&self, k: f64, r: f64, s: f64) -> usize {
        let threshold = s * (k * k * r).cbrt();
        self.eigenvalues.iter().filter(|mu| mu.abs() > threshold).count()
    }
}

/// Root of a continuous strictly decreasing `f` with `f(r) = 1`, found by
/// bisection on `log r`. The zero vector has seminorm 0.
fn solve_unit_level(f: impl Fn(f64) -> f64, weights: &[f64]) -> Result<f64> {
    if weights.iter().all(|&w| w == 0.0) {
        return Ok(0.0);
    }
    let mut lo = 1e-16f64;
    let mut hi = 1e16f64;
    let mut expansions = 0;
    while f(lo) < 1.0 {
        lo *= 1e-8;
        expansions += 1;
        if expansions > 30 || lo == 0.0 {
            return Err(Error::NoConvergence { steps: 0 });
        }
    }
    while f(hi) > 1.0 {
        hi *= 1e8;
        expansions += 1;
        if expansions > 30 || !hi.is_finite() {
            return Err(Error::NoConvergence { steps: 0 });
        }
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for step in 1..=SEMINORM_MAX_STEPS {
        let m = 0.5 * (a + b);
        let r = m.exp();
        let v = f(r);
        if (v - 1.0).abs() <= SEMINORM_TOL {
            return Ok(r);
        }
        if v > 1.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a <= f64::EPSILON * m.abs().max(1.0) {
            let r = (0.5 * (a + b)).exp();
            if (f(r) - 1.0).abs() <= SEMINORM_TOL {
                return Ok(r);
            }
            return Err(Error::NoConvergence { steps: step });
        }
    }
    Err(Error::NoConvergence {
        steps: SEMINORM_MAX_STEPS,
    })
}

/// Nonisotropic ball `B(y,r) = {x : N_y[x−y, r] < 1}`, an ellipsoid with
/// semi-axis `ρ_j = r / b_j(r)` along eigenvector `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub scale: f64,
    pub k: f64,
    /// `(unit eigendirection, semi-axis length)` pairs.
    pub semi_axes: Vec<(Vec<f64>, f64)>,
}

impl Ball {
    pub fn from_decomposition(dec: &SpectralDecomposition, center: &[f64], r: f64, k: f64) -> Result<Self> {
        check_len(dec.dimension(), center.len())?;
        check_positive("r", r)?;
        let semi_axes = (0..dec.dimension())
            .map(|j| {
                let dir = dec.eigenvectors.column(j).iter().cloned().collect();
                (dir, r / bracket(dec.eigenvalues[j], k, r))
            })
            .collect();
        Ok(Self {
            center: center.to_vec(),
            scale: r,
            k,
            semi_axes,
        })
    }

    pub fn dimension(&self) -> usize {
        self.center.len()
    }

    pub fn semi_axis_lengths(&self) -> Vec<f64> {
        self.semi_axes.iter().map(|(_, l)| *l).collect()
    }

    /// `ω_n Π ρ_j`.
    pub fn volume(&self) -> f64 {
        unit_ball_volume(self.dimension()) * self.semi_axes.iter().map(|(_, l)| l).product::<f64>()
    }

    /// `Σ_j ((v_j·(x−y)) / ρ_j)²`; the point is inside iff this is below 1.
    pub fn gauge(&self, x: &[f64]) -> f64 {
        self.semi_axes
            .iter()
            .map(|(dir, l)| {
                let proj: f64 = dir
                    .iter()
                    .zip(x.iter().zip(&self.center))
                    .map(|(d, (a, c))| d * (a - c))
                    .sum();
                (proj / l).powi(2)
            })
            .sum()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dimension() && self.gauge(x) < 1.0
    }

    /// Radius of the Euclidean ball guaranteed to contain this ball.
    pub fn euclidean_radius_bound(&self) -> f64 {
        self.k.powf(-1.0 / 3.0) * self.scale.cbrt()
    }

    /// Map from the unit ball: `y + Σ_j u_j ρ_j v_j`.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        let mut x = self.center.clone();
        for ((dir, l), &uj) in self.semi_axes.iter().zip(u) {
            for (xi, d) in x.iter_mut().zip(dir) {
                *xi += uj * l * d;
            }
        }
        x
    }

    /// `count` quasi-uniform points: the center, then Halton points of the
    /// unit ball (rejection from the cube) for `n ≤ 8`, seeded random
    /// points otherwise.
    pub fn sample_points(&self, count: usize) -> Vec<Vec<f64>> {
        let n = self.dimension();
        let mut out = Vec::with_capacity(count);
        if count == 0 {
            return out;
        }
        out.push(self.center.clone());
        if n <= 8 {
            let mut index = 1u64;
            while out.len() < count {
                let u: Vec<f64> = halton_point(index, n).iter().map(|h| 2.0 * h - 1.0).collect();
                index += 1;
                if u.iter().map(|a| a * a).sum::<f64>() < 1.0 {
                    out.push(self.from_unit(&u));
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x62616c6c);
            while out.len() < count {
                out.push(self.from_unit(&random_in_unit_ball(n, &mut rng)));
            }
        }
        out
    }
}

/// Uniform point of the open unit ball.
pub fn random_in_unit_ball<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let radius = rng.random::<f64>().powf(1.0 / n as f64) * (1.0 - 1e-12);
        return g.iter().map(|a| a / norm * radius).collect();
    }
}

/// Ranks and gap flag at one dyadic scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub j: usize,
    pub radius: f64,
    pub rank_a: usize,
    pub rank_b: usize,
    pub gap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapScanReport {
    pub center: Vec<f64>,
    pub scale: f64,
    pub a: f64,
    pub b: f64,
    pub scales: Vec<ScaleEntry>,
    pub exceptional_scales: Vec<usize>,
}

/// One `(cluster at x, cluster at y)` pair of a spectrum perturbation check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPair {
    pub mu_x: f64,
    pub mu_y: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of a gap-persistence check over sampled `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapPersistence {
    pub base_rank: usize,
    pub min_rank: usize,
    pub samples: usize,
    pub violations: usize,
}

impl GapPersistence {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// A phase together with its (floored) boundedness constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    phase: PolynomialPhase,
    k_raw: f64,
    k: f64,
}

impl Geometry {
    /// Geometry with a given `K` (floored at [`K_MIN`]).
    pub fn new(phase: PolynomialPhase, k: f64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::InvalidParameter(format!("K must be nonnegative (got {k})")));
        }
        Ok(Self {
            phase,
            k_raw: k,
            k: k.max(K_MIN),
        })
    }

    /// Geometry with `K` estimated over `domain`.
    pub fn from_domain(phase: PolynomialPhase, domain: &Domain) -> Result<Self> {
        let k = bound_k(&phase, domain)?;
        Self::new(phase, k)
    }

    pub fn phase(&self) -> &PolynomialPhase {
        &self.phase
    }

    /// The constant used in the formulas (`max(K, K_MIN)`).
    pub fn k(&self) -> f64 {
        self.k
    }

    /// The constant before flooring; zero flags a sub-cubic phase.
    pub fn k_raw(&self) -> f64 {
        self.k_raw
    }

    pub fn dimension(&self) -> usize {
        self.phase.dimension()
    }

    pub fn decompose(&self, x: &[f64]) -> Result<SpectralDecomposition> {
        SpectralDecomposition::new(&self.phase.hessian(x)?)
    }

    pub fn norm_n(&self, x: &[f64], v: &[f64], r: f64) -> Result<f64> {
        self.decompose(x)?.norm_n(self.k, v, r)
    }

    pub fn norm_nstar(&self, x: &[f64], v: &[f64], r: f64) -> Result<f64> {
        self.decompose(x)?.norm_nstar(self.k, v, r)
    }

    pub fn seminorm_n(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        self.decompose(x)?.seminorm_n(self.k, v)
    }

    pub fn seminorm_nstar(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        self.decompose(x)?.seminorm_nstar(self.k, v)
    }

    /// `d(x,y) = N_x[x−y]`; not symmetric in general.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_len(x.len(), y.len())?;
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        self.seminorm_n(x, &diff)
    }

    pub fn ball(&self, y: &[f64], r: f64) -> Result<Ball> {
        Ball::from_decomposition(&self.decompose(y)?, y, r, self.k)
    }

    pub fn dual_extremal(&self, x: &[f64], v: &[f64], r: f64) -> Result<DVector<f64>> {
        self.decompose(x)?.dual_extremal(self.k, v, r)
    }

    pub fn loc_rank(&self, x: &[f64], r: f64, s: f64) -> Result<usize> {
        check_positive("r", r)?;
        check_positive("s", s)?;
        Ok(self.decompose(x)?.loc_rank(self.k, r, s))
    }

    /// Sampled minimum of the local rank over the ball; the true infimum can
    /// be smaller than this value when the sample misses the minimizer.
    pub fn rank_s(&self, ball: &Ball, s: f64, samples: usize) -> Result<usize> {
        check_positive("s", s)?;
        let mut best = self.dimension();
        for x in ball.sample_points(samples.max(1)) {
            best = best.min(self.loc_rank(&x, ball.scale, s)?);
        }
        Ok(best)
    }

    /// Whether `B(x,r)` has a local spectral gap on `(a, b]`.
    pub fn has_gap(&self, x: &[f64], r: f64, a: f64, b: f64) -> Result<bool> {
        check_gap_band(a, b)?;
        check_positive("r", r)?;
        let dec = self.decompose(x)?;
        Ok(dec.loc_rank(self.k, r, a) == dec.loc_rank(self.k, r, b))
    }

    /// Local gap test at the scales `2^{-j} r`, `j = 0..=depth`.
    pub fn gap_scan_with_depth(&self, z: &[f64], r: f64, a: f64, b: f64, depth: usize) -> Result<GapScanReport> {
        check_gap_band(a, b)?;
        check_positive("r", r)?;
        let dec = self.decompose(z)?;
        let scales: Vec<ScaleEntry> = (0..=depth)
            .map(|j| {
                let radius = r * 0.5f64.powi(j as i32);
                let rank_a = dec.loc_rank(self.k, radius, a);
                let rank_b = dec.loc_rank(self.k, radius, b);
                ScaleEntry {
                    j,
                    radius,
                    rank_a,
                    rank_b,
                    gap: rank_a == rank_b,
                }
            })
            .collect();
        let exceptional_scales = scales.iter().filter(|e| !e.gap).map(|e| e.j).collect();
        Ok(GapScanReport {
            center: z.to_vec(),
            scale: r,
            a,
            b,
            scales,
            exceptional_scales,
        })
    }

    pub fn gap_scan(&self, z: &[f64], r: f64, a: f64, b: f64) -> Result<GapScanReport> {
        self.gap_scan_with_depth(z, r, a, b, DEFAULT_GAP_SCAN_DEPTH)
    }

    /// `(‖E^{μ₁}_x E^{μ₂}_y‖, (min|μ| + K|x−y|) / max|μ|)` for the clusters
    /// nearest `mu1` at `x` and `mu2` at `y`.
    pub fn spectrum_perturbation_check(&self, x: &[f64], y: &[f64], mu1: f64, mu2: f64) -> Result<(f64, f64)> {
        let dx = self.decompose(x)?;
        let dy = self.decompose(y)?;
        let cx = dx
            .find_cluster(mu1)
            .ok_or_else(|| Error::InvalidParameter(format!("{mu1} is not an eigenvalue at x")))?;
        let cy = dy
            .find_cluster(mu2)
            .ok_or_else(|| Error::InvalidParameter(format!("{mu2} is not an eigenvalue at y")))?;
        if cx_value(&dx, cx) == cx_value(&dy, cy) {
            return Err(Error::InvalidParameter("cluster values coincide".into()));
        }
        Ok(self.perturbation_pair(&dx, cx, &dy, cy, x, y))
    }

    /// Every cluster pair with distinct values.
    pub fn spectrum_perturbation_pairs(&self, x: &[f64], y: &[f64]) -> Result<Vec<PerturbationPair>> {
        let dx = self.decompose(x)?;
        let dy = self.decompose(y)?;
        let mut out = Vec::new();
        for cx in 0..dx.clusters.len() {
            for cy in 0..dy.clusters.len() {
                if cx_value(&dx, cx) == cx_value(&dy, cy) {
                    continue;
                }
                let (lhs, rhs) = self.perturbation_pair(&dx, cx, &dy, cy, x, y);
                out.push(PerturbationPair {
                    mu_x: cx_value(&dx, cx),
                    mu_y: cx_value(&dy, cy),
                    lhs,
                    rhs,
                });
            }
        }
        Ok(out)
    }

    fn perturbation_pair(
        &self,
        dx: &SpectralDecomposition,
        cx: usize,
        dy: &SpectralDecomposition,
        cy: usize,
        x: &[f64],
        y: &[f64],
    ) -> (f64, f64) {
        let vx = dx.cluster_basis(cx);
        let vy = dy.cluster_basis(cy);
        let product = vx.tr_mul(&vy);
        let lhs = product.singular_values().iter().cloned().fold(0.0, f64::max);
        let (m1, m2) = (cx_value(dx, cx).abs(), cx_value(dy, cy).abs());
        let dist = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let rhs = (m1.min(m2) + self.k * dist) / m1.max(m2);
        (lhs, rhs)
    }

    /// Samples `y ∈ B(x, δr)` and checks
    /// `loc_rank(y, (1 − s⁻¹δ^{1/3})³ r, s) ≥ loc_rank(x, r, s)`.
    pub fn gap_persistence_check(
        &self,
        x: &[f64],
        r: f64,
        s: f64,
        delta: f64,
        samples: usize,
        seed: u64,
    ) -> Result<GapPersistence> {
        check_positive("r", r)?;
        check_positive("s", s)?;
        if !(delta > 0.0 && delta < s.powi(3)) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0, s³) (got {delta})"
            )));
        }
        let base_rank = self.loc_rank(x, r, s)?;
        let shrunk = (1.0 - delta.cbrt() / s).powi(3) * r;
        let ball = self.ball(x, delta * r)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut min_rank = self.dimension();
        let mut violations = 0;
        for _ in 0..samples {
            let y = ball.from_unit(&random_in_unit_ball(self.dimension(), &mut rng));
            let rank = self.loc_rank(&y, shrunk, s)?;
            min_rank = min_rank.min(rank);
            if rank < base_rank {
                violations += 1;
            }
        }
        Ok(GapPersistence {
            base_rank,
            min_rank,
            samples,
            violations,
        })
    }
}

fn cx_value(d: &SpectralDecomposition, c: usize) -> f64 {
    d.clusters[c].value
}

fn check_gap_band(a: f64, b: f64) -> Result<()> {
    check_positive("a", a)?;
    if a < b && b.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "gap band needs 0 < a < b (got {a}, {b})"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::catalog;
    use approx::assert_relative_eq;

    fn zero_hessian(n: usize) -> SpectralDecomposition {
        SpectralDecomposition::new(&DMatrix::zeros(n, n)).unwrap()
    }

    #[test]
    fn decomposition_sorted_and_reconstructs() {
        let h = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, -1.0]);
        let d = SpectralDecomposition::new(&h).unwrap();
        assert_relative_eq!(d.eigenvalues()[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(d.eigenvalues()[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(d.eigenvalues()[2], -1.0, epsilon = 1e-12);
        assert!((d.reconstruct() - &h).abs().max() < 1e-12);
        let v = d.eigenvectors();
        assert!((v.transpose() * v - DMatrix::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn equal_eigenvalues_form_one_cluster() {
        let d = SpectralDecomposition::new(&(DMatrix::identity(4, 4) * 2.0)).unwrap();
        assert_eq!(d.clusters().len(), 1);
        assert_eq!(d.clusters()[0].len, 4);
    }

    #[test]
    fn zero_hessian_norms() {
        let d = zero_hessian(2);
        assert_relative_eq!(d.norm_n(1.0, &[1.0, 0.0], 1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(d.norm_nstar(1.0, &[0.0, 1.0], 1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(d.norm_n(1.0, &[1.0, 0.0], 0.0).is_err());
        assert!(d.norm_n(1.0, &[1.0], 1.0).is_err());
    }

    #[test]
    fn mixed_phase_norm_value() {
        let g = Geometry::new(catalog("mixed2d").unwrap(), 6.0).unwrap();
        let n = g.norm_n(&[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap();
        assert_relative_eq!(n, 2f64.sqrt() + 6f64.cbrt(), epsilon = 1e-12);
    }

    #[test]
    fn zero_hessian_seminorm_is_k_v_cubed() {
        let d = zero_hessian(3);
        let v = [0.3, -0.4, 1.2];
        let len: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        for k in [1e-3, 1.0, 6.0] {
            let r = d.seminorm_n(k, &v).unwrap();
            assert_relative_eq!(r, k * len.powi(3), max_relative = 1e-9);
        }
        assert_eq!(d.seminorm_n(1.0, &[0.0; 3]).unwrap(), 0.0);
        assert_eq!(d.seminorm_nstar(1.0, &[0.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn seminorm_root_is_accurate() {
        let h = DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, -0.2]);
        let d = SpectralDecomposition::new(&h).unwrap();
        let v = [0.7, 0.1];
        let r = d.seminorm_n(2.0, &v).unwrap();
        assert!((d.norm_n(2.0, &v, r).unwrap() - 1.0).abs() <= SEMINORM_TOL);
        let r = d.seminorm_nstar(2.0, &v).unwrap();
        assert!((d.norm_nstar(2.0, &v, r).unwrap() - 1.0).abs() <= SEMINORM_TOL);
    }

    #[test]
    fn distance_examples() {
        let g = Geometry::new(catalog("cubic1d").unwrap(), 6.0).unwrap();
        assert_eq!(g.distance(&[0.3], &[0.3]).unwrap(), 0.0);
        assert_relative_eq!(g.distance(&[0.0], &[0.5]).unwrap(), 0.75, max_relative = 1e-9);
    }

    #[test]
    fn ball_examples() {
        let d = zero_hessian(2);
        let b = Ball::from_decomposition(&d, &[0.0, 0.0], 1.0, 1.0).unwrap();
        assert_eq!(b.semi_axis_lengths(), vec![1.0, 1.0]);
        assert_relative_eq!(b.volume(), std::f64::consts::PI, epsilon = 1e-15);
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let d = SpectralDecomposition::new(&h).unwrap();
        let b = Ball::from_decomposition(&d, &[0.0, 0.0], 1.0, 1.0).unwrap();
        assert_eq!(b.semi_axis_lengths(), vec![0.5, 1.0]);
        assert_relative_eq!(b.volume(), std::f64::consts::PI / 2.0, epsilon = 1e-15);
        assert!(b.contains(&[0.49, 0.0]));
        assert!(!b.contains(&[0.51, 0.0]));
        assert!(b.contains(&[0.0, 0.99]));
    }

    #[test]
    fn ball_membership_matches_norm() {
        let g = Geometry::new(catalog("monkey-saddle").unwrap(), 6.0).unwrap();
        let y = [0.2, -0.1];
        let b = g.ball(&y, 0.05).unwrap();
        for p in b.sample_points(50).into_iter().skip(1) {
            let diff: Vec<f64> = p.iter().zip(&y).map(|(a, c)| a - c).collect();
            assert!(g.norm_n(&y, &diff, 0.05).unwrap() < 1.0);
        }
    }

    #[test]
    fn dual_extremal_on_eigenvector() {
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let d = SpectralDecomposition::new(&h).unwrap();
        let w = d.dual_extremal(1.0, &[1.0, 0.0], 0.5).unwrap();
        let b2 = bracket(4.0, 1.0, 0.5).powi(2);
        assert_relative_eq!(w[0], b2, max_relative = 1e-14);
        assert!(w[1].abs() < 1e-14);
    }

    #[test]
    fn loc_rank_examples() {
        let sq = Geometry::new(catalog("sum-squares-n3").unwrap(), 0.0).unwrap();
        assert_eq!(sq.loc_rank(&[0.1, 0.2, 0.3], 1e-3, 1.0).unwrap(), 3);
        let c = Geometry::new(catalog("cubic1d").unwrap(), 6.0).unwrap();
        assert_eq!(c.loc_rank(&[0.0], 0.3, 0.5).unwrap(), 0);
        let m = Geometry::new(catalog("mixed2d").unwrap(), 6.0).unwrap();
        assert_eq!(m.loc_rank(&[0.5, 0.0], 1e-3, 1.0).unwrap(), 2);
        let ball = m.ball(&[0.5, 0.0], 1e-3).unwrap();
        assert!(m.rank_s(&ball, 1.0, 64).unwrap() <= 2);
    }

    #[test]
    fn gap_examples() {
        let c = Geometry::new(catalog("cubic1d").unwrap(), 6.0).unwrap();
        let rep = c.gap_scan(&[0.0], 1.0, 1.0, 2.0).unwrap();
        assert!(rep.exceptional_scales.is_empty());
        assert_eq!(rep.scales.len(), 41);
        assert!(c.has_gap(&[0.0], 1.0, 1.0, 2.0).unwrap());
        assert!(c.has_gap(&[0.0], 1.0, 2.0, 1.0).is_err());
        let sq = Geometry::new(catalog("sum-squares-n2").unwrap(), 0.0).unwrap();
        assert!(sq.has_gap(&[0.0, 0.0], 1.0, 1.0, 2.0).unwrap());
    }

    #[test]
    fn gap_scan_exceptional_count() {
        // The threshold (K²r_j)^{1/3} shrinks by 2^{-1/3} per scale, so each
        // eigenvalue sits in the band (a t_j, b t_j] for at most
        // ⌈3 log₂(b/a)⌉ = 3 scales.
        let domain = crate::phase::Domain::cube(2, 1.0).unwrap();
        let mut most = 0;
        for seed in 0..20 {
            let g = Geometry::from_domain(catalog(&format!("random-cubic-n2-s{seed}")).unwrap(), &domain).unwrap();
            let z = [0.3 - 0.03 * seed as f64, 0.1 + 0.02 * seed as f64];
            let rep = g.gap_scan(&z, 1.0, 1.0, 2.0).unwrap();
            let distinct = g
                .decompose(&z)
                .unwrap()
                .clusters()
                .iter()
                .filter(|c| c.value != 0.0)
                .count();
            assert!(rep.exceptional_scales.len() <= 3 * distinct, "{rep:?}");
            for s in &rep.scales {
                assert_eq!(s.gap, !rep.exceptional_scales.contains(&s.j));
            }
            most = most.max(rep.exceptional_scales.len());
        }
        // Three scales per eigenvalue are attained, so 2n is not a bound.
        assert_eq!(most, 6);
    }

    #[test]
    fn perturbation_examples() {
        let g = Geometry::new(catalog("mixed2d").unwrap(), 6.0).unwrap();
        let x = [0.5, 0.0];
        let (lhs, rhs) = g.spectrum_perturbation_check(&x, &x, 3.0, 2.0).unwrap();
        assert!(lhs < 1e-14);
        assert!(rhs > 0.0);
        let sq = Geometry::new(catalog("sum-squares-n3").unwrap(), 0.0).unwrap();
        assert!(sq.spectrum_perturbation_pairs(&[0.0; 3], &[0.1; 3]).unwrap().is_empty());
    }

    #[test]
    fn persistence_trivial_cases() {
        let sq = Geometry::new(catalog("sum-squares-n2").unwrap(), 0.0).unwrap();
        let p = sq.gap_persistence_check(&[0.0, 0.0], 0.1, 1.0, 0.5, 50, 1).unwrap();
        assert!(p.holds());
        assert_eq!(p.base_rank, 2);
        let c = Geometry::new(catalog("cubic1d").unwrap(), 6.0).unwrap();
        assert!(c.gap_persistence_check(&[0.0], 1e-3, 1.0, 0.5, 50, 1).unwrap().holds());
        assert!(c.gap_persistence_check(&[0.0], 1e-3, 1.0, 2.0, 50, 1).is_err());
    }
}
