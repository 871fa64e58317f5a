//! Oscillatory integrals `I(λ, ξ) = ∫ e^{iλ(Φ(x) + ξ·x)} ψ(x) dx` and
//! decay-exponent fits.
//!
//! The rule is composite Gauss–Legendre with a fixed number of nodes per
//! panel. Along each axis a panel is at most `1/min_panels` of the line
//! (to resolve the amplitude) and at most `c / (|λ| B)` wide, where `B` is a
//! rigorous bound of `|∂Φ + ξ|` on the panel from a Taylor expansion at the
//! panel center, so each panel carries at most `c` radians of phase. In
//! several dimensions the rule is iterated: inner panels are rebuilt for
//! every outer node from the restricted polynomial. A batch of `ξ` values
//! shares one panel layout adapted to the extreme `ξ` on every axis.
//!
//! Accuracy is checked by halving every panel: a result is accepted when
//! the halved rule moves it by less than `rel_tol` relative, or by less than
//! an absolute floor of `ABS_FLOOR × Σ|weights × ψ|` that accounts for
//! cancellation down to rounding level. Cells that still fail after
//! `max_refinements` halvings are returned with `validated = false`.

use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{fit_line, gauss_legendre, LineFit};
use crate::phase::{cartesian, Amplitude, AmplitudeKind, Domain, PolynomialPhase, UnivariatePolynomial};

/// Absolute accuracy floor relative to the absolute mass of the rule.
pub const ABS_FLOOR: f64 = 1e-13;

/// Quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureOptions {
    /// Gauss–Legendre nodes per panel.
    pub order: usize,
    /// Largest phase change `c` (radians) allowed across one panel.
    pub phase_per_panel: f64,
    /// Panels per line at `λ = 0`.
    pub min_panels: usize,
    pub rel_tol: f64,
    pub max_refinements: usize,
    /// Total nodes allowed per sweep, refinements included.
    pub node_budget: u64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            order: 20,
            phase_per_panel: 6.0 * std::f64::consts::PI,
            min_panels: 16,
            rel_tol: 1e-8,
            max_refinements: 3,
            node_budget: 100_000_000,
        }
    }
}

impl QuadratureOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.order < 2 || self.order > 200 {
            return bad("quadrature order must lie in [2, 200]");
        }
        if !(self.phase_per_panel > 0.0 && self.phase_per_panel.is_finite()) {
            return bad("phase_per_panel must be positive");
        }
        if self.min_panels == 0 {
            return bad("min_panels must be positive");
        }
        if !(self.rel_tol > 0.0) {
            return bad("rel_tol must be positive");
        }
        if self.node_budget == 0 {
            return bad("node_budget must be positive");
        }
        Ok(())
    }
}

/// Shared node counter enforcing the budget.
#[derive(Debug)]
pub struct Budget {
    used: AtomicU64,
    limit: u64,
}

impl Budget {
    pub fn new(limit: u64) -> Self {
        Self {
            used: AtomicU64::new(0),
            limit,
        }
    }

    pub fn charge(&self, nodes: u64) -> Result<()> {
        let used = self.used.fetch_add(nodes, Ordering::Relaxed) + nodes;
        if used > self.limit {
            Err(Error::BudgetExceeded {
                used,
                budget: self.limit,
            })
        } else {
            Ok(())
        }
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::Relaxed)
    }
}

/// A quadrature result with its refinement check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadValue {
    pub value: Complex64,
    /// `|I_fine − I_coarse|` of the last halving.
    pub error_estimate: f64,
    pub validated: bool,
}

/// Integration weight over a region given line by line.
pub trait Weight: Sync {
    fn dimension(&self) -> usize;
    /// Interval of coordinate `prefix.len()` once the leading coordinates
    /// are fixed; `None` when the line misses the support.
    fn range(&self, prefix: &[f64]) -> Option<(f64, f64)>;
    fn value(&self, x: &[f64]) -> f64;
    fn bounding_box(&self) -> Domain;
}

impl Weight for Amplitude {
    fn dimension(&self) -> usize {
        Amplitude::dimension(self)
    }

    fn range(&self, prefix: &[f64]) -> Option<(f64, f64)> {
        let i = prefix.len();
        Some((self.center[i] - self.radius[i], self.center[i] + self.radius[i]))
    }

    fn value(&self, x: &[f64]) -> f64 {
        (0..x.len()).map(|i| self.axis_factor(i, x[i])).product()
    }

    fn bounding_box(&self) -> Domain {
        self.support()
    }
}

/// Weight `4π r² b(√(x₁² + r²)/ρ)` on the half-disc `r ≥ 0` of radius `ρ`,
/// with `b` the smooth bump profile: the image of the radial bump
/// `b(|x|/ρ)` on `R⁴` under `(x₁, x') ↦ (x₁, |x'|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialWeight {
    pub radius: f64,
}

impl Weight for RadialWeight {
    fn dimension(&self) -> usize {
        2
    }

    fn range(&self, prefix: &[f64]) -> Option<(f64, f64)> {
        match prefix {
            [] => Some((-self.radius, self.radius)),
            [x1] => {
                let h2 = self.radius * self.radius - x1 * x1;
                (h2 > 0.0).then(|| (0.0, h2.sqrt()))
            }
            _ => None,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (x1, r) = (x[0], x[1]);
        let t = (x1 * x1 + r * r).sqrt() / self.radius;
        4.0 * std::f64::consts::PI * r * r * AmplitudeKind::SmoothBump.profile(t)
    }

    fn bounding_box(&self) -> Domain {
        Domain {
            lo: vec![-self.radius, 0.0],
            hi: vec![self.radius, self.radius],
        }
    }
}

struct Engine<'a, W: Weight + ?Sized> {
    weight: &'a W,
    lambda: f64,
    xi: &'a [Vec<f64>],
    xi_ext: Vec<(f64, f64)>,
    nodes: &'a [f64],
    weights: &'a [f64],
    opts: &'a QuadratureOptions,
    subdivisions: usize,
    box_center: Vec<f64>,
    box_half: Vec<f64>,
    budget: &'a Budget,
}

impl<W: Weight + ?Sized> Engine<'_, W> {
    fn panels(&self, a: f64, b: f64, mut bound: impl FnMut(f64, f64) -> f64) -> Vec<(f64, f64)> {
        let base = (b - a) / self.opts.min_panels as f64;
        let lam = self.lambda.abs();
        let c = self.opts.phase_per_panel;
        let s = self.subdivisions;
        let mut out = Vec::new();
        let mut x = a;
        while x < b {
            let mut h = base.min(b - x);
            if lam > 0.0 {
                let bd = bound(x, x + h);
                if lam * bd * h > c {
                    h = c / (lam * bd);
                }
            }
            let mut end = x + h;
            if b - end <= 1e-12 * (b - a) {
                end = b;
            }
            for i in 0..s {
                let lo = x + (end - x) * i as f64 / s as f64;
                let hi = if i + 1 == s {
                    end
                } else {
                    x + (end - x) * (i + 1) as f64 / s as f64
                };
                out.push((lo, hi));
            }
            x = end;
        }
        out
    }

    fn xi_bound(&self, axis: usize, c0: f64) -> f64 {
        let (lo, hi) = self.xi_ext[axis];
        (c0 + lo).abs().max((c0 + hi).abs())
    }

    /// Integral over the remaining axes of the phase restricted to `prefix`;
    /// returns per-ξ values (row-major over the remaining ξ lists) and the
    /// absolute mass of the rule.
    fn level(&self, phase: &PolynomialPhase, prefix: &mut Vec<f64>) -> Result<(Vec<Complex64>, f64)> {
        let axis = prefix.len();
        let n = self.weight.dimension();
        let out_len: usize = self.xi[axis..].iter().map(|l| l.len()).product();
        let mut out = vec![Complex64::new(0.0, 0.0); out_len];
        let mut mass = 0.0;
        let Some((a, b)) = self.weight.range(prefix) else {
            return Ok((out, 0.0));
        };
        if !(b > a) {
            return Ok((out, 0.0));
        }
        if axis + 1 == n {
            let q = phase.to_univariate()?;
            let dq = q.derivative();
            let panels = self.panels(a, b, |lo, hi| {
                let t = dq.taylor_at(0.5 * (lo + hi));
                let h = 0.5 * (hi - lo);
                let rest = t.iter().skip(1).rev().fold(0.0, |acc, c| acc * h + c.abs()) * h;
                self.xi_bound(axis, t[0]) + rest
            });
            let xis = &self.xi[axis];
            let mut point = prefix.clone();
            point.push(0.0);
            for &(lo, hi) in &panels {
                let m = 0.5 * (lo + hi);
                let h = 0.5 * (hi - lo);
                for (t, w) in self.nodes.iter().zip(self.weights) {
                    let y = m + h * t;
                    point[axis] = y;
                    let amp = self.weight.value(&point);
                    if amp == 0.0 {
                        continue;
                    }
                    let ww = w * h * amp;
                    mass += ww.abs();
                    let base = Complex64::cis(self.lambda * q.eval(y)) * ww;
                    for (j, &xi) in xis.iter().enumerate() {
                        out[j] += if xi == 0.0 {
                            base
                        } else {
                            base * Complex64::cis(self.lambda * xi * y)
                        };
                    }
                }
            }
            self.budget.charge((panels.len() * self.nodes.len()) as u64)?;
        } else {
            let dphi = phase.derivative(0);
            let mut center: Vec<f64> = self.box_center[axis..].to_vec();
            let mut half: Vec<f64> = self.box_half[axis..].to_vec();
            let panels = self.panels(a, b, |lo, hi| {
                center[0] = 0.5 * (lo + hi);
                half[0] = 0.5 * (hi - lo);
                let (c0, rest) = dphi.box_bound_parts(&center, &half).expect("dimensions agree");
                self.xi_bound(axis, c0) + rest
            });
            let inner_len = out_len / self.xi[axis].len();
            for &(lo, hi) in &panels {
                let m = 0.5 * (lo + hi);
                let h = 0.5 * (hi - lo);
                for (t, w) in self.nodes.iter().zip(self.weights) {
                    let x = m + h * t;
                    let inner_phase = phase.fix_leading(x)?;
                    prefix.push(x);
                    let (inner, inner_mass) = self.level(&inner_phase, prefix)?;
                    prefix.pop();
                    let ww = w * h;
                    mass += ww.abs() * inner_mass;
                    for (ai, &xi) in self.xi[axis].iter().enumerate() {
                        let f = Complex64::cis(self.lambda * xi * x) * ww;
                        let dst = &mut out[ai * inner_len..(ai + 1) * inner_len];
                        for (d, v) in dst.iter_mut().zip(&inner) {
                            *d += f * v;
                        }
                    }
                }
            }
        }
        Ok((out, mass))
    }
}

/// Integrates `e^{iλ(Φ + ξ·x)} w(x)` for every `ξ` of the product grid
/// `xi_axes[0] × xi_axes[1] × …` (row-major), halving panels until every
/// cell passes the accuracy test or `max_refinements` is reached.
pub fn integrate_batch<W: Weight + ?Sized>(
    phase: &PolynomialPhase,
    weight: &W,
    lambda: f64,
    xi_axes: &[Vec<f64>],
    opts: &QuadratureOptions,
    budget: &Budget,
) -> Result<Vec<QuadValue>> {
    opts.validate()?;
    let n = weight.dimension();
    if phase.dimension() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: phase.dimension(),
        });
    }
    if xi_axes.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: xi_axes.len(),
        });
    }
    if xi_axes.iter().any(|l| l.is_empty()) {
        return Err(Error::InvalidParameter("every ξ axis needs at least one value".into()));
    }
    if !lambda.is_finite() || xi_axes.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("λ and ξ must be finite".into()));
    }
    let (nodes, weights) = gauss_legendre(opts.order);
    let bbox = weight.bounding_box();
    let xi_ext = xi_axes
        .iter()
        .map(|l| {
            let lo = l.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
        .collect();
    let mut engine = Engine {
        weight,
        lambda,
        xi: xi_axes,
        xi_ext,
        nodes: &nodes,
        weights: &weights,
        opts,
        subdivisions: 1,
        box_center: bbox.center(),
        box_half: bbox.half_widths(),
        budget,
    };
    let run = |e: &Engine<W>| e.level(phase, &mut Vec::with_capacity(n));
    let (mut coarse, _) = run(&engine)?;
    let mut level = 0;
    loop {
        level += 1;
        engine.subdivisions = 1 << level;
        let (fine, mass) = run(&engine)?;
        let floor = ABS_FLOOR * mass;
        let checks: Vec<(f64, bool)> = coarse
            .iter()
            .zip(&fine)
            .map(|(c, f)| {
                let err = (f - c).norm();
                (err, err <= (opts.rel_tol * f.norm()).max(floor))
            })
            .collect();
        let all_ok = checks.iter().all(|(_, ok)| *ok);
        if all_ok || level > opts.max_refinements {
            return Ok(fine
                .into_iter()
                .zip(checks)
                .map(|(value, (error_estimate, validated))| QuadValue {
                    value,
                    error_estimate,
                    validated,
                })
                .collect());
        }
        coarse = fine;
    }
}

fn check_amplitude(phase_dim: usize, amplitude: &Amplitude) -> Result<()> {
    amplitude.validate()?;
    if amplitude.dimension() != phase_dim {
        return Err(Error::DimensionMismatch {
            expected: phase_dim,
            got: amplitude.dimension(),
        });
    }
    Ok(())
}

/// `I(λ, ξ)` for a one-dimensional phase.
pub fn integrate_1d(
    phase: &PolynomialPhase,
    amplitude: &Amplitude,
    lambda: f64,
    xi: f64,
    opts: &QuadratureOptions,
) -> Result<QuadValue> {
    if phase.dimension() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: phase.dimension(),
        });
    }
    check_amplitude(1, amplitude)?;
    let budget = Budget::new(opts.node_budget);
    Ok(integrate_batch(phase, amplitude, lambda, &[vec![xi]], opts, &budget)?[0])
}

/// `I(λ, ξ)` by the iterated tensor rule, `n ≤ 3`.
pub fn integrate_nd(
    phase: &PolynomialPhase,
    amplitude: &Amplitude,
    lambda: f64,
    xi: &[f64],
    opts: &QuadratureOptions,
) -> Result<QuadValue> {
    let n = phase.dimension();
    if n > 3 {
        return Err(Error::Unsupported(format!(
            "direct quadrature is limited to n <= 3 (got {n}); use the factored or radial paths"
        )));
    }
    check_amplitude(n, amplitude)?;
    if xi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: xi.len(),
        });
    }
    let axes: Vec<Vec<f64>> = xi.iter().map(|&v| vec![v]).collect();
    let budget = Budget::new(opts.node_budget);
    Ok(integrate_batch(phase, amplitude, lambda, &axes, opts, &budget)?[0])
}

/// Product of one-dimensional integrals for a separable phase and
/// amplitude.
pub fn integrate_factored(
    phases: &[UnivariatePolynomial],
    amplitudes: &[Amplitude],
    lambda: f64,
    xi: &[f64],
    opts: &QuadratureOptions,
) -> Result<QuadValue> {
    if phases.len() != amplitudes.len() || phases.len() != xi.len() {
        return Err(Error::DimensionMismatch {
            expected: phases.len(),
            got: amplitudes.len().min(xi.len()),
        });
    }
    let mut value = Complex64::new(1.0, 0.0);
    let mut rel_err = 0.0;
    let mut validated = true;
    for ((p, a), &x) in phases.iter().zip(amplitudes).zip(xi) {
        let q = integrate_1d(&p.to_phase(), a, lambda, x, opts)?;
        value *= q.value;
        rel_err += q.error_estimate / q.value.norm().max(f64::MIN_POSITIVE);
        validated &= q.validated;
    }
    Ok(QuadValue {
        value,
        error_estimate: rel_err * value.norm(),
        validated,
    })
}

/// Default radius of the radial bump in the reduced counterexample.
pub const RADIAL_BUMP_RADIUS: f64 = 0.45;

/// The reduced phase `−ε x₁ − x₁³ + x₁ r²` on the `(x₁, r)` half-plane.
pub fn radial_reduced_phase(epsilon: f64) -> PolynomialPhase {
    PolynomialPhase::new(2, [(vec![3, 0], -1.0), (vec![1, 2], 1.0), (vec![1, 0], -epsilon)])
        .expect("valid reduced phase")
}

/// The counterexample integral with a radial bump of radius `radius`,
/// reduced to the weighted planar integral in `(x₁, r = |x'|)`.
pub fn integrate_radial_reduced(epsilon: f64, lambda: f64, radius: f64, opts: &QuadratureOptions) -> Result<QuadValue> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter("radial bump radius must be positive".into()));
    }
    let budget = Budget::new(opts.node_budget);
    let w = RadialWeight { radius };
    Ok(integrate_batch(
        &radial_reduced_phase(epsilon),
        &w,
        lambda,
        &[vec![0.0], vec![0.0]],
        opts,
        &budget,
    )?[0])
}

/// Which integrator a sweep uses.
#[derive(Debug, Clone, PartialEq)]
pub enum Integrator {
    /// Iterated tensor rule (`integrate_1d` when `n = 1`).
    Direct {
        phase: PolynomialPhase,
        amplitude: Amplitude,
    },
    /// Product of one-dimensional integrals.
    Factored {
        phases: Vec<UnivariatePolynomial>,
        amplitudes: Vec<Amplitude>,
    },
    /// Counterexample reduced to the plane; the single ξ axis lists `ε`.
    RadialReduced { radius: f64 },
}

impl Integrator {
    /// Factored when the phase has no mixed terms and `n ≥ 2`, direct
    /// otherwise.
    pub fn auto(phase: &PolynomialPhase, amplitude: &Amplitude) -> Self {
        match phase.separate() {
            Some(parts) if phase.dimension() >= 2 => Integrator::Factored {
                phases: parts,
                amplitudes: (0..phase.dimension()).map(|i| amplitude.axis(i)).collect(),
            },
            _ => Integrator::Direct {
                phase: phase.clone(),
                amplitude: amplitude.clone(),
            },
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Integrator::Direct { phase, .. } => phase.dimension(),
            Integrator::Factored { phases, .. } => phases.len(),
            Integrator::RadialReduced { .. } => 1,
        }
    }
}

/// Product grid of `ξ` offsets, one value list per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiGrid {
    pub axes: Vec<Vec<f64>>,
}

impl XiGrid {
    /// `points` equally spaced values on `[-half, half]` per axis.
    pub fn cube(n: usize, half: f64, points: usize) -> Self {
        Self {
            axes: vec![crate::numerics::linear_grid(-half, half, points); n],
        }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            axes: vec![vec![0.0]; n],
        }
    }

    /// All cells in row-major order.
    pub fn cells(&self) -> Vec<Vec<f64>> {
        cartesian(&self.axes)
    }
}

/// One `(λ, ξ)` result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub re: f64,
    pub im: f64,
    pub abs: f64,
    pub error_estimate: f64,
    pub validated: bool,
}

impl From<QuadValue> for Cell {
    fn from(q: QuadValue) -> Self {
        Self {
            re: q.value.re,
            im: q.value.im,
            abs: q.value.norm(),
            error_estimate: q.error_estimate,
            validated: q.validated,
        }
    }
}

/// Least-squares decay exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// Half-open index range `[start, end)` of the λ grid.
    pub window: (usize, usize),
}

/// `|I(λ, ξ)|` over a `(λ, ξ)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySweep {
    pub lambda_grid: Vec<f64>,
    pub xi_grid: Vec<Vec<f64>>,
    /// `cells[i][j]` is the value at `lambda_grid[i]`, `xi_grid[j]`.
    pub cells: Vec<Vec<Cell>>,
    pub sup_over_xi: Vec<f64>,
    pub nodes: u64,
    /// `(λ index, ξ index)` of cells that failed the accuracy test.
    pub flagged: Vec<(usize, usize)>,
}

impl DecaySweep {
    pub fn abs_values(&self) -> Vec<Vec<f64>> {
        self.cells
            .iter()
            .map(|row| row.iter().map(|c| c.abs).collect())
            .collect()
    }
}

/// Evaluates the integrator on every `(λ, ξ)` cell.
pub fn sweep(integrator: &Integrator, lambdas: &[f64], xi: &XiGrid, opts: &QuadratureOptions) -> Result<DecaySweep> {
    opts.validate()?;
    if lambdas.is_empty() {
        return Err(Error::InvalidParameter("empty λ grid".into()));
    }
    if lambdas.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::InvalidParameter("λ grid must be strictly increasing".into()));
    }
    if xi.axes.len() != integrator.dimension() {
        return Err(Error::DimensionMismatch {
            expected: integrator.dimension(),
            got: xi.axes.len(),
        });
    }
    let budget = Budget::new(opts.node_budget);
    let cells_xi = xi.cells();
    let rows: Vec<Vec<QuadValue>> = match integrator {
        Integrator::Direct { phase, amplitude } => {
            check_amplitude(phase.dimension(), amplitude)?;
            let n = phase.dimension();
            if n > 3 {
                return Err(Error::Unsupported(format!(
                    "direct quadrature is limited to n <= 3 (got {n})"
                )));
            }
            lambdas
                .par_iter()
                .map(|&l| integrate_batch(phase, amplitude, l, &xi.axes, opts, &budget))
                .collect::<Result<_>>()?
        }
        Integrator::Factored { phases, amplitudes } => {
            if phases.len() != amplitudes.len() {
                return Err(Error::DimensionMismatch {
                    expected: phases.len(),
                    got: amplitudes.len(),
                });
            }
            let one_d: Vec<PolynomialPhase> = phases.iter().map(|p| p.to_phase()).collect();
            lambdas
                .par_iter()
                .map(|&l| -> Result<Vec<QuadValue>> {
                    let per_axis: Vec<Vec<QuadValue>> = (0..phases.len())
                        .map(|a| integrate_batch(&one_d[a], &amplitudes[a], l, &[xi.axes[a].clone()], opts, &budget))
                        .collect::<Result<_>>()?;
                    Ok(combine_factors(&per_axis))
                })
                .collect::<Result<_>>()?
        }
        Integrator::RadialReduced { radius } => {
            let w = RadialWeight { radius: *radius };
            let jobs: Vec<(usize, usize)> = (0..lambdas.len())
                .flat_map(|i| (0..cells_xi.len()).map(move |j| (i, j)))
                .collect();
            let flat: Vec<QuadValue> = jobs
                .par_iter()
                .map(|&(i, j)| {
                    let phase = radial_reduced_phase(cells_xi[j][0]);
                    integrate_batch(&phase, &w, lambdas[i], &[vec![0.0], vec![0.0]], opts, &budget).map(|v| v[0])
                })
                .collect::<Result<_>>()?;
            flat.chunks(cells_xi.len()).map(|c| c.to_vec()).collect()
        }
    };
    let mut flagged = Vec::new();
    let cells: Vec<Vec<Cell>> = rows
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            row.into_iter()
                .enumerate()
                .map(|(j, q)| {
                    if !q.validated {
                        flagged.push((i, j));
                    }
                    Cell::from(q)
                })
                .collect()
        })
        .collect();
    let sup_over_xi = cells
        .iter()
        .map(|row: &Vec<Cell>| row.iter().map(|c| c.abs).fold(0.0, f64::max))
        .collect();
    Ok(DecaySweep {
        lambda_grid: lambdas.to_vec(),
        xi_grid: cells_xi,
        cells,
        sup_over_xi,
        nodes: budget.used(),
        flagged,
    })
}

/// Row-major products of per-axis factor lists.
fn combine_factors(per_axis: &[Vec<QuadValue>]) -> Vec<QuadValue> {
    let mut out = vec![QuadValue {
        value: Complex64::new(1.0, 0.0),
        error_estimate: 0.0,
        validated: true,
    }];
    for axis in per_axis {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for acc in &out {
            for f in axis {
                let value = acc.value * f.value;
                let rel = acc.error_estimate / acc.value.norm().max(f64::MIN_POSITIVE)
                    + f.error_estimate / f.value.norm().max(f64::MIN_POSITIVE);
                next.push(QuadValue {
                    value,
                    error_estimate: rel * value.norm(),
                    validated: acc.validated && f.validated,
                });
            }
        }
        out = next;
    }
    out
}

/// Default fit window: the upper half of the grid.
pub fn default_window(points: usize) -> (usize, usize) {
    (points / 2, points)
}

/// Least-squares slope of `log sup_ξ |I|` against `log λ` over the window
/// (default: upper half).
pub fn fit_exponent(sweep: &DecaySweep, window: Option<(usize, usize)>) -> Result<ExponentFit> {
    fit_power_law(&sweep.lambda_grid, &sweep.sup_over_xi, window)
}

/// Least-squares slope of `log y` against `log x` over an index window.
pub fn fit_power_law(x: &[f64], y: &[f64], window: Option<(usize, usize)>) -> Result<ExponentFit> {
    let (start, end) = window.unwrap_or_else(|| default_window(x.len()));
    if end > x.len() || end > y.len() || start >= end {
        return Err(Error::DegenerateFit(format!(
            "window [{start}, {end}) outside the grid"
        )));
    }
    if end - start < 6 {
        return Err(Error::DegenerateFit(format!(
            "window has {} points, need at least 6",
            end - start
        )));
    }
    if y[start..end].iter().any(|v| !(*v > 0.0)) || x[start..end].iter().any(|v| !(*v > 0.0)) {
        return Err(Error::DegenerateFit("non-positive values in the window".into()));
    }
    let lx: Vec<f64> = x[start..end].iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y[start..end].iter().map(|v| v.ln()).collect();
    let LineFit {
        slope,
        intercept,
        slope_stderr,
    } = fit_line(&lx, &ly)?;
    Ok(ExponentFit {
        slope,
        stderr: slope_stderr,
        intercept,
        window: (start, end),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::geometric_grid;
    use crate::phase::catalog;

    fn opts() -> QuadratureOptions {
        QuadratureOptions::default()
    }

    /// Reference by the composite trapezoid rule, which converges
    /// spectrally for integrands vanishing to all orders at the ends.
    fn trapezoid_1d(f: impl Fn(f64) -> Complex64, a: f64, b: f64, n: usize) -> Complex64 {
        let h = (b - a) / n as f64;
        (1..n).map(|i| f(a + h * i as f64)).sum::<Complex64>() * h
    }

    #[test]
    fn zero_frequency_gives_mass() {
        let p = catalog("cubic1d").unwrap();
        let a = Amplitude::bump(vec![0.1], 0.5).unwrap();
        let q = integrate_1d(&p, &a, 0.0, 0.0, &opts()).unwrap();
        let reference = trapezoid_1d(|x| Complex64::new(a.eval(&[x]).unwrap(), 0.0), -0.4, 0.6, 4000);
        assert!((q.value - reference).norm() < 1e-12);
        assert!(q.value.im.abs() < 1e-15);
        assert!(q.validated);
    }

    #[test]
    fn matches_trapezoid_reference_at_moderate_lambda() {
        let p = catalog("cubic1d").unwrap();
        let a = Amplitude::bump(vec![0.0], 0.5).unwrap();
        let (lambda, xi) = (300.0, -0.2);
        let q = integrate_1d(&p, &a, lambda, xi, &opts()).unwrap();
        let f = |x: f64| Complex64::cis(lambda * (x * x * x + xi * x)) * a.eval(&[x]).unwrap();
        let reference = trapezoid_1d(f, -0.5, 0.5, 20000);
        assert!((q.value - reference).norm() / reference.norm() < 1e-9);
    }

    #[test]
    fn conjugation_symmetry() {
        let p = catalog("quadratic1d").unwrap();
        let a = Amplitude::bump(vec![0.0], 0.5).unwrap();
        let plus = integrate_1d(&p, &a, 2.5e4, 0.1, &opts()).unwrap().value;
        let minus = integrate_1d(&p, &a, -2.5e4, 0.1, &opts()).unwrap().value;
        assert!((plus - minus.conj()).norm() <= 1e-10 * plus.norm());
    }

    #[test]
    fn nd_rejects_four_dimensions() {
        let p = catalog("counterexample4d").unwrap();
        let a = Amplitude::bump(vec![0.0; 4], 0.3).unwrap();
        assert!(matches!(
            integrate_nd(&p, &a, 1.0, &[0.0; 4], &opts()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn budget_is_enforced() {
        let p = catalog("cubic1d").unwrap();
        let a = Amplitude::bump(vec![0.0], 0.5).unwrap();
        let tight = QuadratureOptions {
            node_budget: 1000,
            ..opts()
        };
        assert!(matches!(
            integrate_1d(&p, &a, 1e6, 0.0, &tight),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn radial_mass_matches_shell_integral() {
        // ∫_{R⁴} b(|x|/ρ) dx = 2π² ∫_0^ρ b(s/ρ) s³ ds.
        let rho = RADIAL_BUMP_RADIUS;
        let q = integrate_radial_reduced(0.0, 0.0, rho, &opts()).unwrap();
        let shell = trapezoid_1d(
            |s| Complex64::new(AmplitudeKind::SmoothBump.profile(s / rho) * s.powi(3), 0.0),
            0.0,
            rho,
            20000,
        );
        let reference = 2.0 * std::f64::consts::PI.powi(2) * shell.re;
        assert!((q.value.re - reference).abs() / reference < 1e-10);
    }

    #[test]
    fn fit_of_exact_power_law() {
        let l = geometric_grid(10.0, 1e4, 12).unwrap();
        let y: Vec<f64> = l.iter().map(|v| 3.0 * v.powf(-0.7)).collect();
        let f = fit_power_law(&l, &y, None).unwrap();
        assert!((f.slope + 0.7).abs() < 1e-12);
        assert_eq!(f.window, (6, 12));
        assert!(fit_power_law(&l, &y, Some((0, 5))).is_err());
    }

    #[test]
    fn auto_integrator_choice() {
        let a = Amplitude::bump(vec![0.0, 0.0], 0.5).unwrap();
        assert!(matches!(
            Integrator::auto(&catalog("mixed2d").unwrap(), &a),
            Integrator::Factored { .. }
        ));
        assert!(matches!(
            Integrator::auto(&catalog("monkey-saddle").unwrap(), &a),
            Integrator::Direct { .. }
        ));
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let p = catalog("cubic1d").unwrap();
        let a = Amplitude::bump(vec![0.0], 0.5).unwrap();
        let i = Integrator::Direct { phase: p, amplitude: a };
        assert!(sweep(&i, &[2.0, 1.0], &XiGrid::zero(1), &opts()).is_err());
        assert!(sweep(&i, &[1.0, 2.0], &XiGrid::zero(2), &opts()).is_err());
    }
}
