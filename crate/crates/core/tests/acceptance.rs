//! Acceptance suite. Every test prints one `[PASS]` or `[FAIL]` line to
//! stdout (bypassing the test harness capture) and then asserts it.

use std::io::Write;
use std::time::{Duration, Instant};

use osclab_core::bound::{critical_exponent, dominance_exponent, dyadic_slope, sublevel_rhs};
use osclab_core::cubic::{rank_scan, RankScanOptions};
use osclab_core::nondegen::{check_condition, NondegenOptions};
use osclab_core::numerics::geometric_grid;
use osclab_core::phase::{catalog, cubic_sum_phase, Amplitude, Domain, PolynomialPhase};
use osclab_core::properties::{doubling_random_hessians, gap_persistence_trials, run_suite, SuiteOptions};
use osclab_core::quadrature::{
    fit_exponent, sweep, DecaySweep, Integrator, QuadratureOptions, XiGrid, RADIAL_BUMP_RADIUS,
};
use osclab_core::spectral::Geometry;

fn report(id: u32, title: &str, pass: bool, elapsed: Duration, limit: Duration, detail: &str) {
    let in_time = elapsed <= limit;
    let ok = pass && in_time;
    let line = format!(
        "[{}] acceptance {id:02} {title}: {detail}; {:.1}s (limit {}s)\n",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "{line}");
    assert!(in_time, "{line}");
}

fn mins(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn one_d_sweep(name: &str) -> (DecaySweep, f64) {
    let p = catalog(name).unwrap();
    let a = Amplitude::bump(vec![0.0], 0.5).unwrap();
    let s = sweep(
        &Integrator::Direct { phase: p, amplitude: a },
        &geometric_grid(1e3, 1e6, 25).unwrap(),
        &XiGrid::cube(1, 0.3, 13),
        &QuadratureOptions::default(),
    )
    .unwrap();
    let slope = fit_exponent(&s, None).unwrap().slope;
    (s, slope)
}

#[test]
fn a01_quadratic_baseline() {
    let t = Instant::now();
    let (s, slope) = one_d_sweep("quadratic1d");
    let pass = (slope + 0.5).abs() <= 0.03 && s.flagged.is_empty();
    let detail = format!(
        "slope {slope:.4} (target -0.5000 +/- 0.03), {} nodes, {} unvalidated cells",
        s.nodes,
        s.flagged.len()
    );
    report(1, "x^2 exponent", pass, t.elapsed(), secs(30), &detail);
}

#[test]
fn a02_cubic_degenerate() {
    let t = Instant::now();
    let (s, slope) = one_d_sweep("cubic1d");
    let pass = (slope + 1.0 / 3.0).abs() <= 0.03 && s.flagged.is_empty();
    let detail = format!(
        "slope {slope:.4} (target -0.3333 +/- 0.03), {} nodes, {} unvalidated cells",
        s.nodes,
        s.flagged.len()
    );
    report(2, "x^3 exponent", pass, t.elapsed(), secs(60), &detail);
}

#[test]
fn a03_mixed_factored() {
    let t = Instant::now();
    let p = catalog("mixed2d").unwrap();
    let a = Amplitude::bump(vec![0.0, 0.0], 0.5).unwrap();
    let integrator = Integrator::auto(&p, &a);
    assert!(matches!(integrator, Integrator::Factored { .. }));
    let s = sweep(
        &integrator,
        &geometric_grid(1e3, 1e6, 25).unwrap(),
        &XiGrid::cube(2, 0.3, 13),
        &QuadratureOptions::default(),
    )
    .unwrap();
    let slope = fit_exponent(&s, None).unwrap().slope;
    let pass = (slope + 5.0 / 6.0).abs() <= 0.05 && s.flagged.is_empty();
    let detail = format!(
        "slope {slope:.4} (target -0.8333 +/- 0.05), {} nodes, {} unvalidated cells",
        s.nodes,
        s.flagged.len()
    );
    report(
        3,
        "x1^3 + x2^2 exponent (factored)",
        pass,
        t.elapsed(),
        mins(2),
        &detail,
    );
}

#[test]
fn a04_monkey_saddle() {
    let t = Instant::now();
    let p = catalog("monkey-saddle").unwrap();
    let a = Amplitude::bump(vec![0.0, 0.0], 0.3).unwrap();
    let s = sweep(
        &Integrator::Direct { phase: p, amplitude: a },
        &geometric_grid(1e2, 5e3, 12).unwrap(),
        &XiGrid::cube(2, 0.2, 5),
        &QuadratureOptions::default(),
    )
    .unwrap();
    let slope = fit_exponent(&s, None).unwrap().slope;
    let pass = (slope + 2.0 / 3.0).abs() <= 0.07 && s.flagged.is_empty();
    let detail = format!(
        "slope {slope:.4} (target -0.6667 +/- 0.07), {} nodes, {} unvalidated cells",
        s.nodes,
        s.flagged.len()
    );
    report(
        4,
        "x^3 - 3xy^2 exponent (direct 2D)",
        pass,
        t.elapsed(),
        mins(10),
        &detail,
    );
}

#[test]
fn a05_non_semicontinuity() {
    let t = Instant::now();
    let lambdas = geometric_grid(1e2, 1e4, 11).unwrap();
    let integrator = Integrator::RadialReduced {
        radius: RADIAL_BUMP_RADIUS,
    };
    let o = QuadratureOptions::default();
    let at_zero = sweep(&integrator, &lambdas, &XiGrid { axes: vec![vec![0.0]] }, &o).unwrap();
    let at_eps = sweep(&integrator, &lambdas, &XiGrid { axes: vec![vec![0.1]] }, &o).unwrap();
    let s0 = fit_exponent(&at_zero, None).unwrap().slope;
    let s1 = fit_exponent(&at_eps, None).unwrap().slope;
    let pass = s0 <= -1.23 && (s1 + 1.0).abs() <= 0.07 && at_zero.flagged.is_empty() && at_eps.flagged.is_empty();
    let detail = format!("slope at xi=0 {s0:.4} (need <= -1.23), at eps=0.1 {s1:.4} (target -1 +/- 0.07)");
    report(5, "counterexample decay jump", pass, t.elapsed(), mins(10), &detail);
}

#[test]
fn a06_geometry_properties() {
    let t = Instant::now();
    let domain = Domain::cube(3, 1.0).unwrap();
    let geom = Geometry::from_domain(catalog("random-cubic-n3").unwrap(), &domain).unwrap();
    let rows = run_suite(
        &geom,
        &domain,
        &SuiteOptions {
            trials: 10_000,
            ..SuiteOptions::default()
        },
    )
    .unwrap();
    let mut out = std::io::stdout().lock();
    for row in &rows {
        writeln!(
            out,
            "    {:<28} trials {:>6} violations {:>6} worst slack {:.3e}",
            row.property, row.trials, row.violations, row.worst_slack
        )
        .unwrap();
    }
    drop(out);
    let failing: Vec<&str> = rows
        .iter()
        .filter(|r| r.violations > 0)
        .map(|r| r.property.as_str())
        .collect();
    let detail = if failing.is_empty() {
        "zero violations in every row".to_string()
    } else {
        format!("violations in {}", failing.join(", "))
    };
    report(
        6,
        "geometry property suite",
        failing.is_empty(),
        t.elapsed(),
        mins(2),
        &detail,
    );
}

#[test]
fn a07_doubling() {
    let t = Instant::now();
    let mut violations = 0;
    let mut trials = 0;
    for n in 2..=6 {
        let r = doubling_random_hessians(n, 1000, 100 + n as u64).unwrap();
        violations += r.violations;
        trials += r.trials;
    }
    let detail = format!("{violations} violations in {trials} trials over n = 2..6");
    report(7, "doubling", violations == 0, t.elapsed(), secs(10), &detail);
}

#[test]
fn a08_gap_persistence() {
    let t = Instant::now();
    let domain = Domain::cube(3, 1.0).unwrap();
    let mut violations = 0;
    let mut trials = 0;
    for seed in 0..10 {
        let geom = Geometry::from_domain(catalog(&format!("random-cubic-n3-s{seed}")).unwrap(), &domain).unwrap();
        let r = gap_persistence_trials(&geom, &domain, 100, 64, 1000 + seed).unwrap();
        violations += r.violations;
        trials += r.trials;
    }
    let detail = format!("{violations} violations in {trials} trials over 10 random cubics");
    report(8, "gap persistence", violations == 0, t.elapsed(), mins(1), &detail);
}

#[test]
fn a09_generic_rank() {
    let t = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [6, 10, 14, 18] {
        let r = rank_scan(&RankScanOptions {
            n,
            cubics: 50,
            points: 200,
            tol: 1e-8,
            seed: n as u64,
        })
        .unwrap();
        pass &= r.failures.is_empty() && r.min_rank >= r.bound;
        parts.push(format!(
            "n={n} min {} bound {} failures {} tol-sensitive {}",
            r.min_rank,
            r.bound,
            r.failures.len(),
            r.tol_sensitive.len()
        ));
    }
    report(9, "generic cubic rank", pass, t.elapsed(), mins(2), &parts.join("; "));
}

#[test]
fn a10_bound_dominance() {
    let t = Instant::now();
    // (phase, bump radius, n, k, grid points per axis, λ range)
    let cases: [(&str, f64, usize, usize, usize, f64, f64); 4] = [
        ("quadratic1d", 0.5, 1, 0, 4000, 1e2, 1e4),
        ("cubic1d", 0.5, 1, 1, 4000, 1e2, 1e4),
        ("mixed2d", 0.5, 2, 1, 300, 1e2, 1e3),
        ("monkey-saddle", 0.3, 2, 2, 300, 1e2, 1e3),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, rho, n, k, ppa, lo, hi) in cases {
        let phase = catalog(name).unwrap();
        let amp = Amplitude::bump(vec![0.0; n], rho).unwrap();
        let omega = amp.support();
        let geom = Geometry::from_domain(phase.clone(), &omega).unwrap();
        let big_n = dominance_exponent(n, k);
        // 8 geometric steps span [lo, hi]; 4 more reach 4·hi.
        let step = (hi / lo).powf(1.0 / 8.0);
        let lambdas: Vec<f64> = (0..=12).map(|i| lo * step.powi(i)).collect();
        let rhs = sublevel_rhs(&geom, &omega, &lambdas, big_n, ppa, 1.0).unwrap();
        let s = sweep(
            &Integrator::auto(&phase, &amp),
            &lambdas,
            &XiGrid::cube(n, if n == 1 { 0.3 } else { 0.2 }, if n == 1 { 13 } else { 5 }),
            &QuadratureOptions::default(),
        )
        .unwrap();
        let ratios: Vec<f64> = s
            .cells
            .iter()
            .zip(&rhs.values)
            .map(|(row, r)| row.iter().map(|c| c.abs).fold(0.0, f64::max) / r)
            .collect();
        let base = ratios[..9].iter().cloned().fold(0.0, f64::max);
        let extended = ratios.iter().cloned().fold(0.0, f64::max);
        let change = (extended - base).abs() / base;
        pass &= base.is_finite() && extended.is_finite() && change < 0.2;
        parts.push(format!(
            "{name} N={big_n} C={base:.3} C(4x)={extended:.3} change {:.1}%",
            100.0 * change
        ));
    }
    report(10, "bound dominance", pass, t.elapsed(), mins(10), &parts.join("; "));
}

#[test]
fn a11_nondegeneracy() {
    let t = Instant::now();
    let opts = NondegenOptions::new(1.0, 1.0);
    let margin = |p: PolynomialPhase, half: f64| {
        let d = Domain::cube(p.dimension(), half).unwrap();
        check_condition(&p, &d, &opts).unwrap().k_prime_margin
    };
    let m_mixed2 = margin(cubic_sum_phase(1, 2).unwrap(), 0.05);
    let m_mixed3 = margin(cubic_sum_phase(1, 3).unwrap(), 0.05);
    let m_saddle = margin(catalog("monkey-saddle").unwrap(), 0.1);
    let m_counter = margin(catalog("counterexample4d").unwrap(), 0.1);
    // Two cubic directions: the margin is 6/√2, listed for reference.
    let m_two = margin(cubic_sum_phase(2, 3).unwrap(), 0.05);
    let pass = m_mixed2 >= 5.5 && m_mixed3 >= 5.5 && m_saddle >= 5.5 && m_counter <= 0.0;
    let detail = format!(
        "x1^3+x2^2 {m_mixed2:.4}, x1^3+x2^2+x3^2 {m_mixed3:.4}, x^3-3xy^2 {m_saddle:.4} (need >= 5.5); \
         counterexample {m_counter:.4} (need <= 0); x1^3+x2^3+x3^2 {m_two:.4} (reported)"
    );
    report(11, "nondegeneracy margins", pass, t.elapsed(), mins(1), &detail);
}

#[test]
fn a12_dyadic_sum() {
    let t = Instant::now();
    let lambdas = geometric_grid(1e12, 1e16, 9).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, k) in [(2usize, 1usize), (3, 3), (4, 1)] {
        // Σ_{i<k} x_i³ + (M/2) Σ_{i≥k} x_i² with M = 1.
        let terms = (0..n).map(|i| {
            let mut e = vec![0; n];
            if i < k {
                e[i] = 3;
                (e, 1.0)
            } else {
                e[i] = 2;
                (e, 0.5)
            }
        });
        let phase = PolynomialPhase::new(n, terms).unwrap();
        let geom = Geometry::from_domain(phase, &Domain::cube(n, 0.5).unwrap()).unwrap();
        let big_n = dominance_exponent(n, k) as f64;
        let fit = dyadic_slope(&geom, &[vec![0.0; n]], &lambdas, big_n, k, 1.0, 1.0).unwrap();
        let target = -critical_exponent(n, k);
        pass &= (fit.slope - target).abs() <= 0.02;
        parts.push(format!("(n,k)=({n},{k}) slope {:.4} target {target:.4}", fit.slope));
    }
    report(12, "dyadic volume sum", pass, t.elapsed(), secs(10), &parts.join("; "));
}
