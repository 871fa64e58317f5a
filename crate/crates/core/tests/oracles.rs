//! Library results against independent computations.

use num_complex::Complex64;
use osclab_core::bound::{dyadic_slope, sublevel_rhs, BoundProfile};
use osclab_core::cubic::hessian_rank_at;
use osclab_core::numerics::geometric_grid;
use osclab_core::phase::{bound_k, catalog, Amplitude, AmplitudeKind, Domain};
use osclab_core::quadrature::{
    fit_exponent, integrate_nd, integrate_radial_reduced, sweep, Integrator, QuadratureOptions, XiGrid,
};
use osclab_core::spectral::Geometry;

fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

#[test]
fn monkey_saddle_against_riemann_sum() {
    let (lambda, xi, rho) = (100.0, [0.1, -0.05], 0.3);
    let p = catalog("monkey-saddle").unwrap();
    let a = Amplitude::bump(vec![0.0, 0.0], rho).unwrap();
    let q = integrate_nd(&p, &a, lambda, &xi, &QuadratureOptions::default()).unwrap();
    let m = 2000;
    let h = 2.0 * rho / m as f64;
    let mut sum = Complex64::new(0.0, 0.0);
    for i in 0..m {
        let x = -rho + (i as f64 + 0.5) * h;
        let bx = bump(x / rho);
        for j in 0..m {
            let y = -rho + (j as f64 + 0.5) * h;
            let phase = x * x * x - 3.0 * x * y * y + xi[0] * x + xi[1] * y;
            sum += Complex64::cis(lambda * phase) * (bx * bump(y / rho));
        }
    }
    sum *= h * h;
    assert!((q.value - sum).norm() <= 1e-6 * sum.norm(), "{} vs {}", q.value, sum);
}

#[test]
fn radial_reduction_against_four_dimensional_sum() {
    let (lambda, eps, rho) = (4.0, 0.1, 0.45);
    let q = integrate_radial_reduced(eps, lambda, rho, &QuadratureOptions::default()).unwrap();
    let m = 48;
    let h = 2.0 * rho / m as f64;
    let c: Vec<f64> = (0..m).map(|i| -rho + (i as f64 + 0.5) * h).collect();
    let mut sum = Complex64::new(0.0, 0.0);
    for &x1 in &c {
        for &x2 in &c {
            for &x3 in &c {
                for &x4 in &c {
                    let s2 = x2 * x2 + x3 * x3 + x4 * x4;
                    let b = bump((x1 * x1 + s2).sqrt() / rho);
                    if b > 0.0 {
                        let phase = -x1 * x1 * x1 + x1 * s2 - eps * x1;
                        sum += Complex64::cis(lambda * phase) * b;
                    }
                }
            }
        }
    }
    sum *= h.powi(4);
    assert!((q.value - sum).norm() <= 1e-6 * sum.norm(), "{} vs {}", q.value, sum);
}

/// `r(y)` for `Φ = x³` from `(6|y| r)^{1/2} + (K r²)^{1/3} = 3y²`.
fn cubic_r(y: f64, k: f64, r_max: f64) -> f64 {
    let target = 3.0 * y * y;
    if target == 0.0 {
        return 0.0;
    }
    let f = |r: f64| (6.0 * y.abs() * r).sqrt() + (k * r * r).cbrt() - target;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    while f(b) < 0.0 {
        b *= 2.0;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m) > 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    (0.5 * (a + b)).min(r_max)
}

#[test]
fn cubic_sublevel_profile_against_scalar_solve() {
    let domain = Domain::cube(1, 0.5).unwrap();
    let phase = catalog("cubic1d").unwrap();
    let k = bound_k(&phase, &domain).unwrap();
    assert!((k - 6.0).abs() < 1e-12);
    let g = Geometry::new(phase, k).unwrap();
    let (ppa, r_max) = (1000, 1.0);
    let profile = BoundProfile::new(&g, &domain, ppa, r_max, 2).unwrap();
    for lambda in [1e2, 1e4, 1e6] {
        let h = 1.0 / ppa as f64;
        let oracle: f64 = (0..ppa)
            .map(|i| {
                let r = cubic_r(-0.5 + (i as f64 + 0.5) * h, k, r_max);
                1.0 / (1.0 + (lambda * r).powi(2))
            })
            .sum::<f64>()
            * h
            + 1.0 / (lambda * r_max).powi(2);
        assert!((profile.rhs(lambda) - oracle).abs() <= 1e-8 * oracle);
    }
    let lambdas = geometric_grid(1e3, 1e6, 13).unwrap();
    let rhs = sublevel_rhs(&g, &domain, &lambdas, 2, 2000, r_max).unwrap();
    let logs: Vec<f64> = rhs.values.iter().map(|v| v.ln()).collect();
    let slope = (logs[12] - logs[0]) / (lambdas[12].ln() - lambdas[0].ln());
    assert!(slope <= -1.0 / 3.0 + 0.05, "{slope}");
}

#[test]
fn quadratic_decay_exponent_at_xi_zero() {
    let p = catalog("quadratic1d").unwrap();
    let a = Amplitude::bump(vec![0.0], 0.5).unwrap();
    let lambdas = geometric_grid(1e3, 1e5, 12).unwrap();
    let s = sweep(
        &Integrator::Direct { phase: p, amplitude: a },
        &lambdas,
        &XiGrid::zero(1),
        &QuadratureOptions::default(),
    )
    .unwrap();
    let fit = fit_exponent(&s, None).unwrap();
    assert!((fit.slope + 0.5).abs() <= 0.03, "{fit:?}");
    // Stationary phase: |I| → ψ(0) (π/λ)^{1/2}.
    let last = *s.sup_over_xi.last().unwrap();
    let asymptote = (std::f64::consts::PI / lambdas[11]).sqrt();
    assert!((last / asymptote - 1.0).abs() < 1e-3);
}

#[test]
fn mixed_decay_exponent_factored() {
    let p = catalog("mixed2d").unwrap();
    let a = Amplitude::bump(vec![0.0, 0.0], 0.5).unwrap();
    let lambdas = geometric_grid(1e3, 1e5, 12).unwrap();
    let s = sweep(
        &Integrator::auto(&p, &a),
        &lambdas,
        &XiGrid::zero(2),
        &QuadratureOptions::default(),
    )
    .unwrap();
    let fit = fit_exponent(&s, None).unwrap();
    assert!((fit.slope + 5.0 / 6.0).abs() <= 0.05, "{fit:?}");
}

#[test]
fn cubic_one_dimensional_asymptote() {
    // ∫ e^{iλx³} dx = 2 Γ(4/3) cos(π/6) λ^{-1/3} for the leading term.
    let p = catalog("cubic1d").unwrap();
    let a = Amplitude::new(AmplitudeKind::SmoothBump, vec![0.0], vec![0.5]).unwrap();
    let lambda = 1e6;
    let q = osclab_core::quadrature::integrate_1d(&p, &a, lambda, 0.0, &QuadratureOptions::default()).unwrap();
    let gamma_4_3 = 0.892_979_511_569_249_2;
    let expected = 2.0 * gamma_4_3 * (std::f64::consts::PI / 6.0).cos() * lambda.powf(-1.0 / 3.0);
    assert!((q.value.re / expected - 1.0).abs() < 1e-2, "{} vs {expected}", q.value);
}

#[test]
fn monkey_saddle_rank_from_determinant() {
    // det H = −36(x² + y²), so the rank is 2 at every unit point.
    let p = catalog("monkey-saddle").unwrap();
    for i in 0..64 {
        let t = i as f64 * std::f64::consts::TAU / 64.0;
        let x = [t.cos(), t.sin()];
        let det = p.hessian(&x).unwrap().determinant();
        assert!((det + 36.0).abs() < 1e-9);
        assert_eq!(hessian_rank_at(&p, &x, 1e-8).unwrap(), 2);
    }
}

#[test]
fn mixed_dyadic_slope() {
    let domain = Domain::cube(2, 0.5).unwrap();
    let g = Geometry::from_domain(catalog("mixed2d").unwrap(), &domain).unwrap();
    let lambdas = geometric_grid(1e12, 1e16, 9).unwrap();
    let fit = dyadic_slope(&g, &[vec![0.0, 0.0]], &lambdas, 2.0, 1, 2.0, 1.0).unwrap();
    assert!((fit.slope + 5.0 / 6.0).abs() <= 0.01, "{fit:?}");
}

#[test]
fn k_bound_dominates_sphere_samples() {
    for seed in 0..5 {
        let p = osclab_core::cubic::sample_cubic(3, seed);
        let domain = Domain::cube(3, 1.0).unwrap();
        let k = bound_k(&p, &domain).unwrap();
        let t = p.third_tensor(&[0.0; 3]).unwrap();
        let mut best = 0.0f64;
        for i in 0..200 {
            for j in 0..100 {
                let th = std::f64::consts::PI * (i as f64 + 0.5) / 200.0;
                let ph = std::f64::consts::TAU * j as f64 / 100.0;
                let w = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
                best = best.max(t.apply(&w, &w, &w).abs());
            }
        }
        assert!(k >= best - 1e-9 && k <= best * 1.01, "{k} vs {best}");
    }
}
