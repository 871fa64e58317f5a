//! Polynomial phase functions, amplitudes and integration domains.
//!
//! Phases are stored as sparse coefficient maps over multi-indices kept in
//! lexicographic order, so every sum over terms runs in a fixed order and
//! results are bit-reproducible. Derivatives of every order are computed
//! from the coefficient map, never by finite differences.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Degree capacity of a phase unless a larger one is requested.
pub const DEFAULT_MAX_DEGREE: u32 = 4;

/// Exact multivariate polynomial `Σ c_α x^α`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialPhase {
    n: usize,
    max_degree: u32,
    terms: Vec<(Vec<u32>, f64)>,
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// `e! / (e - k)!` as a float.
fn falling_factorial(e: u32, k: u32) -> f64 {
    ((e - k + 1)..=e).fold(1.0, |acc, v| acc * v as f64)
}

fn binomial(n: u32, k: u32) -> f64 {
    falling_factorial(n, k) / falling_factorial(k, k)
}

impl PolynomialPhase {
    /// Phase with the default degree capacity.
    pub fn new(n: usize, terms: impl IntoIterator<Item = (Vec<u32>, f64)>) -> Result<Self> {
        Self::with_max_degree(n, DEFAULT_MAX_DEGREE, terms)
    }

    /// Phase whose multi-indices may reach total degree `max_degree`.
    /// Repeated multi-indices are summed and zero coefficients dropped.
    pub fn with_max_degree(
        n: usize,
        max_degree: u32,
        terms: impl IntoIterator<Item = (Vec<u32>, f64)>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("phase dimension must be positive".into()));
        }
        let mut map: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (exps, coeff) in terms {
            check_dim(n, exps.len())?;
            let degree: u32 = exps.iter().sum();
            if degree > max_degree {
                return Err(Error::InvalidParameter(format!(
                    "term {exps:?} has degree {degree} above capacity {max_degree}"
                )));
            }
            if !coeff.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "coefficient of {exps:?} is not finite"
                )));
            }
            *map.entry(exps).or_insert(0.0) += coeff;
        }
        Ok(Self::from_map(n, max_degree, map))
    }

    fn from_map(n: usize, max_degree: u32, map: BTreeMap<Vec<u32>, f64>) -> Self {
        let terms = map.into_iter().filter(|(_, c)| *c != 0.0).collect();
        Self { n, max_degree, terms }
    }

    /// The zero polynomial in `n` variables.
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            max_degree: DEFAULT_MAX_DEGREE,
            terms: Vec::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    /// Total degree of the highest nonzero term (0 for the zero polynomial).
    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(e, _)| e.iter().sum::<u32>()).max().unwrap_or(0)
    }

    /// Terms in lexicographic multi-index order.
    pub fn terms(&self) -> &[(Vec<u32>, f64)] {
        &self.terms
    }

    /// Coefficient of a multi-index (zero when absent).
    pub fn coefficient(&self, exps: &[u32]) -> f64 {
        self.terms
            .binary_search_by(|(e, _)| e.as_slice().cmp(exps))
            .map(|i| self.terms[i].1)
            .unwrap_or(0.0)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.n, x.len())?;
        Ok(self.eval_unchecked(x))
    }

    /// Evaluation without the length check; `x` must have length `n`.
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product::<f64>())
            .sum()
    }

    /// Mixed partial `∂^α Φ(x)`.
    pub fn partial(&self, alpha: &[u32], x: &[f64]) -> Result<f64> {
        check_dim(self.n, alpha.len())?;
        check_dim(self.n, x.len())?;
        Ok(self.partial_unchecked(alpha, x))
    }

    fn partial_unchecked(&self, alpha: &[u32], x: &[f64]) -> f64 {
        let mut sum = 0.0;
        'terms: for (e, c) in &self.terms {
            let mut v = *c;
            for i in 0..self.n {
                if e[i] < alpha[i] {
                    continue 'terms;
                }
                v *= falling_factorial(e[i], alpha[i]) * x[i].powi((e[i] - alpha[i]) as i32);
            }
            sum += v;
        }
        sum
    }

    pub fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dim(self.n, x.len())?;
        let mut alpha = vec![0u32; self.n];
        Ok(DVector::from_fn(self.n, |i, _| {
            alpha[i] = 1;
            let v = self.partial_unchecked(&alpha, x);
            alpha[i] = 0;
            v
        }))
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.n, x.len())?;
        let n = self.n;
        let mut h = DMatrix::zeros(n, n);
        let mut alpha = vec![0u32; n];
        for i in 0..n {
            for j in i..n {
                alpha[i] += 1;
                alpha[j] += 1;
                let v = self.partial_unchecked(&alpha, x);
                alpha[i] -= 1;
                alpha[j] -= 1;
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Ok(h)
    }

    pub fn third_tensor(&self, x: &[f64]) -> Result<SymTensor3> {
        check_dim(self.n, x.len())?;
        let n = self.n;
        let mut t = SymTensor3::zeros(n);
        let mut alpha = vec![0u32; n];
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    alpha[i] += 1;
                    alpha[j] += 1;
                    alpha[k] += 1;
                    let v = self.partial_unchecked(&alpha, x);
                    alpha[i] -= 1;
                    alpha[j] -= 1;
                    alpha[k] -= 1;
                    t.set_symmetric(i, j, k, v);
                }
            }
        }
        Ok(t)
    }

    /// The polynomial `∂Φ/∂x_axis`.
    pub fn derivative(&self, axis: usize) -> Self {
        assert!(axis < self.n, "axis out of range");
        let mut map = BTreeMap::new();
        for (e, c) in &self.terms {
            if e[axis] == 0 {
                continue;
            }
            let mut d = e.clone();
            d[axis] -= 1;
            *map.entry(d).or_insert(0.0) += c * e[axis] as f64;
        }
        Self::from_map(self.n, self.max_degree, map)
    }

    /// The polynomial `t ↦ Φ(center + t)`.
    pub fn shifted(&self, center: &[f64]) -> Result<Self> {
        check_dim(self.n, center.len())?;
        let mut map: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (e, c) in &self.terms {
            // Expand Π_i (c_i + t_i)^{e_i} axis by axis.
            let mut partial: Vec<(Vec<u32>, f64)> = vec![(vec![0; self.n], *c)];
            for i in 0..self.n {
                if e[i] == 0 {
                    continue;
                }
                let mut next = Vec::with_capacity(partial.len() * (e[i] as usize + 1));
                for (idx, coeff) in &partial {
                    for k in 0..=e[i] {
                        let factor = binomial(e[i], k) * center[i].powi((e[i] - k) as i32);
                        if factor == 0.0 {
                            continue;
                        }
                        let mut m = idx.clone();
                        m[i] = k;
                        next.push((m, coeff * factor));
                    }
                }
                partial = next;
            }
            for (m, v) in partial {
                *map.entry(m).or_insert(0.0) += v;
            }
        }
        Ok(Self::from_map(self.n, self.max_degree, map))
    }

    /// Upper bound of `|Φ|` on the box `center ± half_widths`, from the
    /// Taylor coefficients at the center.
    pub fn abs_bound_on_box(&self, center: &[f64], half_widths: &[f64]) -> Result<f64> {
        let (c0, rest) = self.box_bound_parts(center, half_widths)?;
        Ok(c0.abs() + rest)
    }

    /// `(Φ(center), Σ_{α≠0} |c_α| h^α)` for the Taylor expansion at the
    /// center, so `|Φ + c|` on the box is at most `|Φ(center) + c| + rest`.
    pub fn box_bound_parts(&self, center: &[f64], half_widths: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.n, half_widths.len())?;
        let shifted = self.shifted(center)?;
        let mut c0 = 0.0;
        let mut rest = 0.0;
        for (e, c) in &shifted.terms {
            if e.iter().all(|&k| k == 0) {
                c0 += c;
            } else {
                rest += c.abs()
                    * e.iter()
                        .zip(half_widths)
                        .map(|(&k, &h)| h.abs().powi(k as i32))
                        .product::<f64>();
            }
        }
        Ok((c0, rest))
    }

    /// Substitute `x_0 = value`, giving a polynomial in the remaining
    /// `n - 1` variables.
    pub fn fix_leading(&self, value: f64) -> Result<Self> {
        if self.n < 2 {
            return Err(Error::InvalidParameter("cannot fix the only variable".into()));
        }
        let mut map = BTreeMap::new();
        for (e, c) in &self.terms {
            let v = c * value.powi(e[0] as i32);
            if v != 0.0 {
                *map.entry(e[1..].to_vec()).or_insert(0.0) += v;
            }
        }
        Ok(Self::from_map(self.n - 1, self.max_degree, map))
    }

    /// The same polynomial viewed as a univariate one (`n` must be 1).
    pub fn to_univariate(&self) -> Result<UnivariatePolynomial> {
        check_dim(1, self.n)?;
        let deg = self.degree() as usize;
        let mut coeffs = vec![0.0; deg + 1];
        for (e, c) in &self.terms {
            coeffs[e[0] as usize] += c;
        }
        Ok(UnivariatePolynomial::new(coeffs))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.n, other.n)?;
        let mut map: BTreeMap<Vec<u32>, f64> = self.terms.iter().cloned().collect();
        for (e, c) in &other.terms {
            *map.entry(e.clone()).or_insert(0.0) += c;
        }
        Ok(Self::from_map(self.n, self.max_degree.max(other.max_degree), map))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let map = self.terms.iter().map(|(e, c)| (e.clone(), c * factor)).collect();
        Self::from_map(self.n, self.max_degree, map)
    }

    /// `Φ(x) + ξ·x`.
    pub fn with_linear_term(&self, xi: &[f64]) -> Result<Self> {
        check_dim(self.n, xi.len())?;
        let linear = Self::from_map(
            self.n,
            self.max_degree,
            xi.iter()
                .enumerate()
                .map(|(i, &v)| {
                    let mut e = vec![0; self.n];
                    e[i] = 1;
                    (e, v)
                })
                .collect(),
        );
        self.add(&linear)
    }

    /// `Φ(x) + c`.
    pub fn with_constant(&self, c: f64) -> Self {
        let constant = Self::from_map(self.n, self.max_degree, [(vec![0; self.n], c)].into());
        self.add(&constant).expect("same dimension")
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        check_dim(self.n, other.n)?;
        let mut map: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                let e: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                *map.entry(e).or_insert(0.0) += ca * cb;
            }
        }
        let cap = self
            .max_degree
            .max(other.max_degree)
            .max(self.degree() + other.degree());
        Ok(Self::from_map(self.n, cap, map))
    }

    /// The polynomial `y ↦ Φ(A y)` for an `n × m` matrix `A`.
    pub fn compose_linear(&self, a: &DMatrix<f64>) -> Result<Self> {
        check_dim(self.n, a.nrows())?;
        let m = a.ncols();
        if m == 0 {
            return Err(Error::InvalidParameter("linear map has no columns".into()));
        }
        let linear: Vec<Self> = (0..self.n)
            .map(|i| {
                let map = (0..m)
                    .map(|j| {
                        let mut e = vec![0; m];
                        e[j] = 1;
                        (e, a[(i, j)])
                    })
                    .collect();
                Self::from_map(m, self.max_degree, map)
            })
            .collect();
        let mut out = Self {
            n: m,
            max_degree: self.max_degree,
            terms: Vec::new(),
        };
        for (e, c) in &self.terms {
            let mut term = Self::from_map(m, self.max_degree, [(vec![0; m], *c)].into());
            for (i, &k) in e.iter().enumerate() {
                for _ in 0..k {
                    term = term.mul(&linear[i])?;
                }
            }
            out = out.add(&term)?;
        }
        out.max_degree = self.max_degree;
        Ok(out)
    }

    /// Splits a phase with no mixed monomials into per-axis univariate
    /// phases (any constant goes to the first axis). `None` if some term
    /// couples two variables.
    pub fn separate(&self) -> Option<Vec<UnivariatePolynomial>> {
        let deg = self.degree() as usize;
        let mut coeffs = vec![vec![0.0; deg + 1]; self.n];
        for (e, c) in &self.terms {
            let nonzero: Vec<usize> = (0..self.n).filter(|&i| e[i] > 0).collect();
            match nonzero.as_slice() {
                [] => coeffs[0][0] += c,
                [i] => coeffs[*i][e[*i] as usize] += c,
                _ => return None,
            }
        }
        Some(coeffs.into_iter().map(UnivariatePolynomial::new).collect())
    }

    /// Serializable description of this phase.
    pub fn to_spec(&self, name: &str) -> PhaseSpec {
        PhaseSpec {
            name: name.to_string(),
            n: self.n,
            terms: self.terms.clone(),
            max_degree: (self.max_degree != DEFAULT_MAX_DEGREE).then_some(self.max_degree),
        }
    }
}

/// Dense univariate polynomial `Σ c_k t^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariatePolynomial {
    coeffs: Vec<f64>,
}

impl UnivariatePolynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Self::new(vec![0.0]);
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * k as f64)
                .collect(),
        )
    }

    /// Coefficients of `t ↦ p(center + t)` by repeated synthetic division.
    pub fn taylor_at(&self, center: f64) -> Vec<f64> {
        let mut c = self.coeffs.clone();
        let d = c.len();
        for k in 0..d {
            for j in (k..d - 1).rev() {
                c[j] += center * c[j + 1];
            }
        }
        c
    }

    /// Upper bound of `|p|` on `[a, b]`.
    pub fn abs_bound(&self, a: f64, b: f64) -> f64 {
        let m = 0.5 * (a + b);
        let h = 0.5 * (b - a).abs();
        self.taylor_at(m).iter().rev().fold(0.0, |acc, c| acc * h + c.abs())
    }

    /// Embed as a one-variable [`PolynomialPhase`].
    pub fn to_phase(&self) -> PolynomialPhase {
        let cap = DEFAULT_MAX_DEGREE.max(self.coeffs.len() as u32 - 1);
        PolynomialPhase::with_max_degree(
            1,
            cap,
            self.coeffs.iter().enumerate().map(|(k, &c)| (vec![k as u32], c)),
        )
        .expect("valid univariate terms")
    }
}

/// Fully symmetric 3-tensor with dense storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor3 {
    n: usize,
    data: Vec<f64>,
}

impl SymTensor3 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    fn set_symmetric(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let n = self.n;
        for (a, b, c) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
            self.data[(a * n + b) * n + c] = v;
        }
    }

    /// `T(w1, w2, w3)`.
    pub fn apply(&self, w1: &[f64], w2: &[f64], w3: &[f64]) -> f64 {
        let n = self.n;
        let mut sum = 0.0;
        for (i, a) in w1.iter().enumerate().take(n) {
            for (j, b) in w2.iter().enumerate().take(n) {
                let base = (i * n + j) * n;
                let inner: f64 = (0..n).map(|k| self.data[base + k] * w3[k]).sum();
                sum += a * b * inner;
            }
        }
        sum
    }

    /// The vector `T(·, v, w)`.
    pub fn contract(&self, v: &[f64], w: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for (j, vj) in v.iter().enumerate().take(n) {
                    let base = (i * n + j) * n;
                    let inner: f64 = (0..n).map(|k| self.data[base + k] * w[k]).sum();
                    s += vj * inner;
                }
                s
            })
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Estimate of `max_{|w|=1} |T(w,w,w)|`, which equals the trilinear
    /// operator norm for symmetric tensors. Shifted symmetric higher-order
    /// power iteration from the coordinate axes plus `restarts` random
    /// starts; the result is a lower bound of the true maximum.
    pub fn spectral_norm_estimate(&self, restarts: usize, rng: &mut ChaCha8Rng) -> f64 {
        let n = self.n;
        let fro = self.frobenius_norm();
        if fro == 0.0 {
            return 0.0;
        }
        let alpha = 2.0 * fro;
        let mut starts: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect();
        for _ in 0..restarts {
            starts.push((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        }
        let mut best = 0.0f64;
        for mut w in starts {
            if !normalize(&mut w) {
                continue;
            }
            let mut f = self.apply(&w, &w, &w);
            if f < 0.0 {
                w.iter_mut().for_each(|v| *v = -*v);
                f = -f;
            }
            for _ in 0..5000 {
                let g = self.contract(&w, &w);
                let mut next: Vec<f64> = g.iter().zip(&w).map(|(a, b)| a + alpha * b).collect();
                if !normalize(&mut next) {
                    break;
                }
                let f_next = self.apply(&next, &next, &next);
                w = next;
                let done = (f_next - f).abs() <= 1e-15 * fro;
                f = f_next;
                if done {
                    break;
                }
            }
            best = best.max(f.abs());
        }
        best
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Settings for [`bound_k_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KBoundOptions {
    pub restarts: usize,
    /// Grid points per axis for phases of degree above three; `None`
    /// picks about 4096 points in total.
    pub points_per_axis: Option<usize>,
    pub seed: u64,
}

impl Default for KBoundOptions {
    fn default() -> Self {
        Self {
            restarts: 32,
            points_per_axis: None,
            seed: 0x6b_5f62_6f75_6e64,
        }
    }
}

/// Upper estimate of `K = sup_{x ∈ domain, |w_i| = 1} |T_x(w1, w2, w3)|`.
pub fn bound_k(phase: &PolynomialPhase, domain: &Domain) -> Result<f64> {
    bound_k_with(phase, domain, &KBoundOptions::default())
}

/// [`bound_k`] with explicit settings.
///
/// Cubic phases have a constant third tensor, so one evaluation is exact up
/// to the power iteration. For higher degree the tensor norm is estimated
/// at cell centers of a grid and a Lipschitz slack
/// `cell radius × sup‖D⁴Φ‖_F` is added, so the value bounds every point of
/// the domain provided the per-point estimates are sharp.
pub fn bound_k_with(phase: &PolynomialPhase, domain: &Domain, opts: &KBoundOptions) -> Result<f64> {
    let n = phase.dimension();
    check_dim(n, domain.dimension())?;
    let degree = phase.degree();
    if degree <= 2 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    if degree == 3 {
        let t = phase.third_tensor(&domain.center())?;
        return Ok(t.spectral_norm_estimate(opts.restarts, &mut rng));
    }
    let ppa = opts
        .points_per_axis
        .unwrap_or_else(|| ((4096f64).powf(1.0 / n as f64).floor() as usize).clamp(2, 64));
    let centers = domain.cell_centers(ppa);
    let mut best = 0.0f64;
    for c in &centers {
        let t = phase.third_tensor(c)?;
        best = best.max(t.spectral_norm_estimate(opts.restarts, &mut rng));
    }
    let cell_radius = domain
        .half_widths()
        .iter()
        .map(|h| (h / ppa as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(best + cell_radius * fourth_derivative_frobenius_bound(phase, domain)?)
}

fn fourth_derivative_frobenius_bound(phase: &PolynomialPhase, domain: &Domain) -> Result<f64> {
    let n = phase.dimension();
    let center = domain.center();
    let half = domain.half_widths();
    let mut sum_sq = 0.0;
    for idx in 0..n.pow(4) {
        let mut alpha = vec![0u32; n];
        let mut r = idx;
        for _ in 0..4 {
            alpha[r % n] += 1;
            r /= n;
        }
        let mut p = phase.clone();
        for (axis, &k) in alpha.iter().enumerate() {
            for _ in 0..k {
                p = p.derivative(axis);
            }
        }
        let b = p.abs_bound_on_box(&center, &half)?;
        sum_sq += b * b;
    }
    Ok(sum_sq.sqrt())
}

/// Amplitude profile family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeKind {
    /// `exp(1 - 1/(1 - t²))` on `|t| < 1`, normalized to one at the center.
    SmoothBump,
    /// `cos²(πt/2)` on `|t| < 1`.
    CosineWindow,
}

impl AmplitudeKind {
    pub fn profile(self, t: f64) -> f64 {
        if t.abs() >= 1.0 {
            return 0.0;
        }
        match self {
            AmplitudeKind::SmoothBump => (1.0 - 1.0 / (1.0 - t * t)).exp(),
            AmplitudeKind::CosineWindow => (0.5 * std::f64::consts::PI * t).cos().powi(2),
        }
    }
}

/// Separable amplitude `ψ(x) = Π_i profile((x_i - c_i)/ρ_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Amplitude {
    pub kind: AmplitudeKind,
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
}

impl Amplitude {
    pub fn new(kind: AmplitudeKind, center: Vec<f64>, radius: Vec<f64>) -> Result<Self> {
        let amp = Self { kind, center, radius };
        amp.validate()?;
        Ok(amp)
    }

    /// Smooth bump of equal radius on every axis.
    pub fn bump(center: Vec<f64>, radius: f64) -> Result<Self> {
        let n = center.len();
        Self::new(AmplitudeKind::SmoothBump, center, vec![radius; n])
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.center.len(), self.radius.len())?;
        if self.center.is_empty() {
            return Err(Error::InvalidParameter("amplitude dimension must be positive".into()));
        }
        if self.radius.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidParameter("amplitude radii must be positive".into()));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("amplitude center must be finite".into()));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.center.len()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dimension(), x.len())?;
        Ok((0..x.len()).map(|i| self.axis_factor(i, x[i])).product())
    }

    /// The one-dimensional factor of axis `axis` at coordinate `t`.
    pub fn axis_factor(&self, axis: usize, t: f64) -> f64 {
        self.kind.profile((t - self.center[axis]) / self.radius[axis])
    }

    /// The one-dimensional amplitude of a single axis.
    pub fn axis(&self, axis: usize) -> Self {
        Self {
            kind: self.kind,
            center: vec![self.center[axis]],
            radius: vec![self.radius[axis]],
        }
    }

    /// Closed support box.
    pub fn support(&self) -> Domain {
        Domain {
            lo: self.center.iter().zip(&self.radius).map(|(c, r)| c - r).collect(),
            hi: self.center.iter().zip(&self.radius).map(|(c, r)| c + r).collect(),
        }
    }
}

/// Axis-aligned box `Π [lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if lo.is_empty() {
            return Err(Error::InvalidParameter("domain dimension must be positive".into()));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite())
        {
            return Err(Error::InvalidParameter("domain needs lo < hi on every axis".into()));
        }
        Ok(Self { lo, hi })
    }

    /// The cube `[-half, half]^n`.
    pub fn cube(n: usize, half: f64) -> Result<Self> {
        Self::new(vec![-half; n], vec![half; n])
    }

    pub fn dimension(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (b - a)).collect()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dimension()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| a <= v && v <= b)
    }

    /// Whether the amplitude support sits inside with a positive margin.
    pub fn contains_support(&self, amplitude: &Amplitude) -> bool {
        let s = amplitude.support();
        s.dimension() == self.dimension() && (0..self.dimension()).all(|i| self.lo[i] < s.lo[i] && s.hi[i] < self.hi[i])
    }

    /// Centers of the `ppa^n` congruent cells, in row-major order.
    pub fn cell_centers(&self, ppa: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dimension())
            .map(|i| {
                let h = (self.hi[i] - self.lo[i]) / ppa as f64;
                (0..ppa).map(|k| self.lo[i] + (k as f64 + 0.5) * h).collect()
            })
            .collect();
        cartesian(&axes)
    }

    /// Grid of `ppa^n` points including the box corners, row-major.
    pub fn lattice(&self, ppa: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dimension())
            .map(|i| crate::numerics::linear_grid(self.lo[i], self.hi[i], ppa))
            .collect();
        cartesian(&axes)
    }

    /// Uniformly distributed point.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| rng.random_range(*a..*b))
            .collect()
    }
}

/// Row-major Cartesian product of coordinate lists.
pub fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// JSON description of a phase: `{"name", "n", "terms": [[[exps], coeff], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub name: String,
    pub n: usize,
    pub terms: Vec<(Vec<u32>, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_degree: Option<u32>,
}

impl PhaseSpec {
    pub fn build(&self) -> Result<PolynomialPhase> {
        PolynomialPhase::with_max_degree(
            self.n,
            self.max_degree.unwrap_or(DEFAULT_MAX_DEGREE),
            self.terms.iter().cloned(),
        )
    }
}

fn unit(n: usize, i: usize, k: u32) -> Vec<u32> {
    let mut e = vec![0; n];
    e[i] = k;
    e
}

/// `Σ_{i<k} x_i³ + Σ_{i≥k} x_i²` in `n` variables.
pub fn cubic_sum_phase(k: usize, n: usize) -> Result<PolynomialPhase> {
    if k > n {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds n = {n}")));
    }
    PolynomialPhase::new(n, (0..n).map(|i| (unit(n, i, if i < k { 3 } else { 2 }), 1.0)))
}

/// Named phases: `quadratic1d`, `cubic1d`, `mixed2d` (x₁³+x₂²),
/// `monkey-saddle` (x³−3xy²), `counterexample4d` (−x₁³+x₁(x₂²+x₃²+x₄²)),
/// `cubic-sum-k{k}-n{n}`, `sum-squares-n{n}` and `random-cubic-n{n}`
/// (optionally `-s{seed}`).
pub fn catalog(name: &str) -> Result<PolynomialPhase> {
    let unknown = || Error::UnknownPhase(name.to_string());
    match name {
        "quadratic1d" => return PolynomialPhase::new(1, [(vec![2], 1.0)]),
        "cubic1d" => return PolynomialPhase::new(1, [(vec![3], 1.0)]),
        "mixed2d" => return cubic_sum_phase(1, 2),
        "monkey-saddle" => return PolynomialPhase::new(2, [(vec![3, 0], 1.0), (vec![1, 2], -3.0)]),
        "counterexample4d" => {
            return PolynomialPhase::new(
                4,
                [
                    (vec![3, 0, 0, 0], -1.0),
                    (vec![1, 2, 0, 0], 1.0),
                    (vec![1, 0, 2, 0], 1.0),
                    (vec![1, 0, 0, 2], 1.0),
                ],
            )
        }
        _ => {}
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| unknown());
    if let Some(rest) = name.strip_prefix("cubic-sum-k") {
        let (k, n) = rest.split_once("-n").ok_or_else(unknown)?;
        return cubic_sum_phase(parse(k)?, parse(n)?);
    }
    if let Some(n) = name.strip_prefix("sum-squares-n") {
        return cubic_sum_phase(0, parse(n)?);
    }
    if let Some(rest) = name.strip_prefix("random-cubic-n") {
        let (n, seed) = match rest.split_once("-s") {
            Some((n, s)) => (parse(n)?, s.parse::<u64>().map_err(|_| unknown())?),
            None => (parse(rest)?, 0),
        };
        if n == 0 {
            return Err(unknown());
        }
        return Ok(crate::cubic::sample_cubic(n, seed));
    }
    Err(unknown())
}

/// The fixed (non-parametric) catalog names.
pub const CATALOG_NAMES: [&str; 5] = ["quadratic1d", "cubic1d", "mixed2d", "monkey-saddle", "counterexample4d"];
