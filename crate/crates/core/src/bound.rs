//! The sublevel right-hand side
//! `∫_Ω dy / (1 + (λ r(y))^N) + |Ω| / (λ R_max)^N`, the partition of unity
//! built from the balls `B(y, r(y))`, and the dyadic volume sums.
//!
//! Amplitude norms are replaced by 1, so every quantity here is the bound
//! up to a constant factor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{plateau_bump, unit_ball_volume};
use crate::phase::Domain;
use crate::quadrature::{fit_power_law, ExponentFit};
use crate::spectral::Geometry;

/// Largest relative change tolerated when the sample grid is refined.
pub const GRID_REFINEMENT_TOL: f64 = 0.1;

fn check_r_max(r_max: f64) -> Result<()> {
    if r_max > 0.0 && r_max.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("R_max must be positive (got {r_max})")))
    }
}

/// `r(y) = min(N*_y[∇Φ(y)], R_max)`; zero exactly at critical points.
pub fn r_of(geom: &Geometry, y: &[f64], r_max: f64) -> Result<f64> {
    r_of_with_offset(geom, y, r_max, &vec![0.0; y.len()])
}

/// `r(y)` for the phase `Φ + ξ·x`.
pub fn r_of_with_offset(geom: &Geometry, y: &[f64], r_max: f64, xi: &[f64]) -> Result<f64> {
    check_r_max(r_max)?;
    if xi.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: xi.len(),
        });
    }
    let mut g = geom.phase().gradient(y)?;
    for (gi, x) in g.iter_mut().zip(xi) {
        *gi += x;
    }
    Ok(geom.seminorm_nstar(y, g.as_slice())?.min(r_max))
}

/// `r(y)` sampled at the cell centers of a uniform grid over `Ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundProfile {
    pub domain: Domain,
    pub points_per_axis: usize,
    pub r_max: f64,
    pub n_exponent: u32,
    pub cell_volume: f64,
    /// `r(y)` at every sample with `r > 0`.
    pub r_values: Vec<f64>,
    /// Samples with `r(y) = 0` (critical points), left out of the integral.
    pub excluded: usize,
}

impl BoundProfile {
    pub fn new(geom: &Geometry, domain: &Domain, points_per_axis: usize, r_max: f64, n_exponent: u32) -> Result<Self> {
        Self::with_offset(
            geom,
            domain,
            points_per_axis,
            r_max,
            n_exponent,
            &vec![0.0; domain.dimension()],
        )
    }

    /// Profile of the phase `Φ + ξ·x`.
    pub fn with_offset(
        geom: &Geometry,
        domain: &Domain,
        points_per_axis: usize,
        r_max: f64,
        n_exponent: u32,
        xi: &[f64],
    ) -> Result<Self> {
        check_r_max(r_max)?;
        if n_exponent == 0 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        if points_per_axis == 0 {
            return Err(Error::InvalidParameter("points_per_axis must be positive".into()));
        }
        if domain.dimension() != geom.dimension() {
            return Err(Error::DimensionMismatch {
                expected: geom.dimension(),
                got: domain.dimension(),
            });
        }
        let samples = domain.cell_centers(points_per_axis);
        let all: Vec<f64> = samples
            .par_iter()
            .map(|y| r_of_with_offset(geom, y, r_max, xi))
            .collect::<Result<_>>()?;
        let r_values: Vec<f64> = all.iter().copied().filter(|&r| r > 0.0).collect();
        Ok(Self {
            domain: domain.clone(),
            points_per_axis,
            r_max,
            n_exponent,
            cell_volume: domain.volume() / samples.len() as f64,
            excluded: all.len() - r_values.len(),
            r_values,
        })
    }

    /// `∫_Ω (1 + (λ r(y))^N)^{-1} dy` by the midpoint rule.
    pub fn bound_integral(&self, lambda: f64) -> f64 {
        let l = lambda.abs();
        let n = self.n_exponent as i32;
        self.r_values
            .iter()
            .map(|&r| 1.0 / (1.0 + (l * r).powi(n)))
            .sum::<f64>()
            * self.cell_volume
    }

    /// `|Ω| / (λ R_max)^N` for `λ > 0`, zero at `λ = 0`.
    pub fn tail(&self, lambda: f64) -> f64 {
        let l = lambda.abs();
        if l == 0.0 {
            0.0
        } else {
            self.domain.volume() / (l * self.r_max).powi(self.n_exponent as i32)
        }
    }

    pub fn rhs(&self, lambda: f64) -> f64 {
        self.bound_integral(lambda) + self.tail(lambda)
    }
}

/// The right-hand side over a λ grid, checked against a grid with twice
/// the points per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SublevelRhs {
    pub lambdas: Vec<f64>,
    /// Values on the refined grid.
    pub values: Vec<f64>,
    pub coarse_values: Vec<f64>,
    pub max_relative_change: f64,
    pub excluded_samples: usize,
}

/// Evaluates the right-hand side on a `points_per_axis` grid and on the
/// grid with doubled resolution; fails with [`Error::GridTooCoarse`] when
/// they differ by more than [`GRID_REFINEMENT_TOL`] at some `λ`.
pub fn sublevel_rhs(
    geom: &Geometry,
    domain: &Domain,
    lambdas: &[f64],
    n_exponent: u32,
    points_per_axis: usize,
    r_max: f64,
) -> Result<SublevelRhs> {
    let coarse = BoundProfile::new(geom, domain, points_per_axis, r_max, n_exponent)?;
    let fine = BoundProfile::new(geom, domain, 2 * points_per_axis, r_max, n_exponent)?;
    let coarse_values: Vec<f64> = lambdas.iter().map(|&l| coarse.rhs(l)).collect();
    let values: Vec<f64> = lambdas.iter().map(|&l| fine.rhs(l)).collect();
    let max_relative_change = values
        .iter()
        .zip(&coarse_values)
        .map(|(f, c)| (f - c).abs() / f.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    if max_relative_change > GRID_REFINEMENT_TOL {
        return Err(Error::GridTooCoarse {
            relative_change: max_relative_change,
        });
    }
    Ok(SublevelRhs {
        lambdas: lambdas.to_vec(),
        values,
        coarse_values,
        max_relative_change,
        excluded_samples: fine.excluded,
    })
}

/// `η_y(x) = |B(y, r(y))|^{-1} φ(N_y[x − y, r(y)])` with `φ` the plateau
/// bump; zero when `r(y) = 0`.
pub fn partition_weight(geom: &Geometry, y: &[f64], x: &[f64], r_max: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: x.len(),
        });
    }
    let r = r_of(geom, y, r_max)?;
    if r == 0.0 {
        return Ok(0.0);
    }
    let dec = geom.decompose(y)?;
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let t = dec.norm_n(geom.k(), &diff, r)?;
    if t >= 1.0 {
        return Ok(0.0);
    }
    let ball = crate::spectral::Ball::from_decomposition(&dec, y, r, geom.k())?;
    Ok(plateau_bump(t) / ball.volume())
}

/// `Ψ(x) = ∫_Ω η_y(x) dy` by the midpoint rule on `points_per_axis`
/// cells per axis.
pub fn partition_sum(geom: &Geometry, x: &[f64], domain: &Domain, points_per_axis: usize, r_max: f64) -> Result<f64> {
    if points_per_axis == 0 {
        return Err(Error::InvalidParameter("points_per_axis must be positive".into()));
    }
    let samples = domain.cell_centers(points_per_axis);
    let cell = domain.volume() / samples.len() as f64;
    let total: f64 = samples
        .par_iter()
        .map(|y| partition_weight(geom, y, x, r_max))
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();
    Ok(total * cell)
}

/// `(n − k)/2 + k/3`.
pub fn critical_exponent(n: usize, k: usize) -> f64 {
    (n - k.min(n)) as f64 / 2.0 + k.min(n) as f64 / 3.0
}

/// Smallest integer `N` used by the dominance check:
/// `⌈(n − k)/2 + k/3⌉ + 1`.
pub fn dominance_exponent(n: usize, k: usize) -> u32 {
    critical_exponent(n, k).ceil() as u32 + 1
}

/// A truncated dyadic volume sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicSum {
    pub value: f64,
    /// Number of dyadic scales per center.
    pub terms: usize,
    /// `(n − k)/2 + k/3`.
    pub critical: f64,
    /// The same sum with every ball replaced by the ellipsoid with `n − k`
    /// semi-axes `(ρ/M)^{1/2}` and `k` semi-axes `(ρ/K)^{1/3}`; an upper
    /// bound whenever the Hessians at the centers have `n − k`
    /// eigenvalues of size at least `M`.
    pub model_bound: f64,
}

/// `Σ_i Σ_{j=0}^{J} 2^{-Nj} |B(z_i, 2^j/λ)|` with `J` the last scale with
/// `2^J/λ ≤ R_max`.
pub fn dyadic_volume_sum(
    geom: &Geometry,
    centers: &[Vec<f64>],
    lambda: f64,
    n_exponent: f64,
    k: usize,
    m: f64,
    r_max: f64,
) -> Result<DyadicSum> {
    check_r_max(r_max)?;
    let n = geom.dimension();
    if k > n {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds n = {n}")));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!("M must be positive (got {m})")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("λ must be positive (got {lambda})")));
    }
    let critical = critical_exponent(n, k);
    if !(n_exponent > critical) {
        return Err(Error::Divergent { n_exponent, critical });
    }
    let terms = ((lambda * r_max).log2().floor().max(0.0)) as usize + 1;
    let kk = geom.k();
    let omega = unit_ball_volume(n);
    let mut value = 0.0;
    let mut model_bound = 0.0;
    for z in centers {
        let dec = geom.decompose(z)?;
        for j in 0..terms {
            let rho = 2f64.powi(j as i32) / lambda;
            let weight = 2f64.powf(-n_exponent * j as f64);
            let ball = crate::spectral::Ball::from_decomposition(&dec, z, rho, kk)?;
            value += weight * ball.volume();
            model_bound += weight * omega * (rho / m).powf((n - k) as f64 / 2.0) * (rho / kk).powf(k as f64 / 3.0);
        }
    }
    Ok(DyadicSum {
        value,
        terms,
        critical,
        model_bound,
    })
}

/// Log-log slope of the dyadic sum over a λ grid (every point used).
pub fn dyadic_slope(
    geom: &Geometry,
    centers: &[Vec<f64>],
    lambdas: &[f64],
    n_exponent: f64,
    k: usize,
    m: f64,
    r_max: f64,
) -> Result<ExponentFit> {
    let values: Vec<f64> = lambdas
        .iter()
        .map(|&l| dyadic_volume_sum(geom, centers, l, n_exponent, k, m, r_max).map(|s| s.value))
        .collect::<Result<_>>()?;
    fit_power_law(lambdas, &values, Some((0, lambdas.len())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::geometric_grid;
    use crate::phase::{catalog, PolynomialPhase};

    fn quad(n: usize) -> Geometry {
        let terms = (0..n).map(|i| {
            let mut e = vec![0; n];
            e[i] = 2;
            (e, 1.0)
        });
        Geometry::new(PolynomialPhase::new(n, terms).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn r_vanishes_at_critical_points_and_clamps() {
        let g = Geometry::new(catalog("cubic1d").unwrap(), 6.0).unwrap();
        assert_eq!(r_of(&g, &[0.0], 1.0).unwrap(), 0.0);
        assert_eq!(r_of(&g, &[0.5], 1e-6).unwrap(), 1e-6);
    }

    #[test]
    fn r_for_squares_solves_the_scalar_equation() {
        // Φ = |x|²: H = 2I, so N*[2y] = ρ with 2|y| = (2ρ)^{1/2} + (K_MIN ρ²)^{1/3}.
        let g = quad(2);
        let y = [0.3, -0.4];
        let target = 2.0 * 0.5;
        let f = |rho: f64| (2.0 * rho).sqrt() + (g.k() * rho * rho).cbrt() - target;
        let (mut a, mut b) = (1e-6, 10.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m) > 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        let r = r_of(&g, &y, 100.0).unwrap();
        assert!((r - a).abs() <= 1e-8 * a);
    }

    #[test]
    fn zero_frequency_gives_the_volume() {
        let g = quad(2);
        let d = Domain::cube(2, 0.5).unwrap();
        let p = BoundProfile::new(&g, &d, 10, 1.0, 2).unwrap();
        assert_eq!(p.excluded, 0);
        assert!((p.rhs(0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rhs_is_nonincreasing() {
        let g = Geometry::new(catalog("cubic1d").unwrap(), 6.0).unwrap();
        let d = Domain::cube(1, 0.5).unwrap();
        let p = BoundProfile::new(&g, &d, 400, 1.0, 2).unwrap();
        let mut prev = f64::INFINITY;
        for l in geometric_grid(1.0, 1e6, 30).unwrap() {
            let v = p.rhs(l);
            assert!(v <= prev);
            assert!(p.rhs(2.0 * l) <= v);
            prev = v;
        }
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let g = quad(1);
        let d = Domain::cube(1, 0.5).unwrap();
        assert!(matches!(
            sublevel_rhs(&g, &d, &[1e6], 2, 3, 1.0),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn partition_weight_peak_and_support() {
        let g = quad(2);
        let y = [0.3, 0.1];
        let r = r_of(&g, &y, 1.0).unwrap();
        let ball = g.ball(&y, r).unwrap();
        let w = partition_weight(&g, &y, &y, 1.0).unwrap();
        assert!((w - 1.0 / ball.volume()).abs() <= 1e-12 * w);
        let far = [y[0] + 2.0 * ball.euclidean_radius_bound() + 1.0, y[1]];
        assert_eq!(partition_weight(&g, &y, &far, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn partition_sum_is_bounded_above_and_below() {
        let g = quad(2);
        let d = Domain::cube(2, 1.0).unwrap();
        let xs = [[0.1, 0.0], [0.2, 0.2], [-0.3, 0.1], [0.0, -0.4], [0.25, -0.15]];
        let vals: Vec<f64> = xs.iter().map(|x| partition_sum(&g, x, &d, 200, 1.0).unwrap()).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(0.0, f64::max);
        assert!(lo > 0.0 && hi / lo <= 50.0, "{vals:?}");
        assert_eq!(partition_sum(&g, &[5.0, 5.0], &d, 50, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn dyadic_sum_matches_closed_form_series() {
        // Nondegenerate: every semi-axis is ρ / ((2ρ)^{1/2} + (K ρ²)^{1/3}).
        let g = quad(3);
        let (lambda, n_exp, r_max) = (1e5, 2.0, 1.0);
        let s = dyadic_volume_sum(&g, &[vec![0.0; 3]], lambda, n_exp, 0, 2.0, r_max).unwrap();
        let omega = 4.0 / 3.0 * std::f64::consts::PI;
        let mut expected = 0.0;
        let mut j = 0;
        while 2f64.powi(j) / lambda <= r_max {
            let rho = 2f64.powi(j) / lambda;
            let axis = rho / ((2.0 * rho).sqrt() + (g.k() * rho * rho).cbrt());
            expected += 2f64.powi(-2 * j) * omega * axis.powi(3);
            j += 1;
        }
        assert_eq!(s.terms, j as usize);
        assert!((s.value - expected).abs() <= 1e-10 * expected);
        assert!(s.value <= s.model_bound);
    }

    #[test]
    fn dyadic_sum_rejects_small_n() {
        let g = quad(2);
        assert!(matches!(
            dyadic_volume_sum(&g, &[vec![0.0; 2]], 10.0, 1.0, 0, 2.0, 1.0),
            Err(Error::Divergent { .. })
        ));
    }

    #[test]
    fn zero_hessian_slope_is_exact() {
        let g = Geometry::from_domain(
            crate::phase::cubic_sum_phase(2, 2).unwrap(),
            &Domain::cube(2, 0.5).unwrap(),
        )
        .unwrap();
        let lambdas = geometric_grid(1e4, 1e8, 9).unwrap();
        let fit = dyadic_slope(&g, &[vec![0.0; 2]], &lambdas, 2.0, 2, 1.0, 1.0).unwrap();
        // Truncation at R_max adds a relative error of order (λR_max)^{-(N-2/3)}.
        assert!((fit.slope + 2.0 / 3.0).abs() < 1e-6, "{fit:?}");
    }
}
