//! Randomized trial suite for the inequalities of the ball geometry.
//!
//! Each property is checked on independent random draws of point, vectors,
//! scale and dilation factor. A trial violates an inequality `lhs ≤ rhs`
//! when `lhs > rhs (1 + REL_SLACK)`; the reported slack of a trial is
//! `(rhs − lhs) / |rhs|`, so negative values are violations.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::phase::Domain;
use crate::spectral::{random_in_unit_ball, Ball, Geometry, SpectralDecomposition};

/// Relative slack allowed in every inequality.
pub const REL_SLACK: f64 = 1e-9;

/// Whether a property row counts toward pass/fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Asserted,
    /// Evaluated and reported, known not to hold as literally stated.
    Reported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    pub trials: usize,
    pub violations: usize,
    pub worst_slack: f64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl PropertyReport {
    fn new(property: &str) -> Self {
        Self {
            property: property.to_string(),
            trials: 0,
            violations: 0,
            worst_slack: f64::INFINITY,
            status: Status::Asserted,
            note: None,
        }
    }

    fn reported(mut self, note: &str) -> Self {
        self.status = Status::Reported;
        self.note = Some(note.to_string());
        self
    }

    /// Record `lhs ≤ rhs`.
    fn check_le(&mut self, lhs: f64, rhs: f64) {
        self.trials += 1;
        let slack = if rhs != 0.0 {
            (rhs - lhs) / rhs.abs()
        } else {
            -lhs.signum()
        };
        self.worst_slack = self.worst_slack.min(slack);
        if lhs > rhs * (1.0 + REL_SLACK) + f64::MIN_POSITIVE {
            self.violations += 1;
        }
    }

    /// Record `a = b`; the slack is minus the relative error.
    fn check_eq(&mut self, a: f64, b: f64) {
        self.trials += 1;
        let err = (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        self.worst_slack = self.worst_slack.min(-err);
        if err > REL_SLACK {
            self.violations += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Settings for [`run_suite`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteOptions {
    pub trials: usize,
    pub seed: u64,
    /// `log10` range of the scale `r`.
    pub log_r_range: (f64, f64),
    /// Largest Euclidean `|x − y|` in spectrum perturbation trials.
    pub perturbation_radius: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 1,
            log_r_range: (-6.0, 2.0),
            perturbation_radius: 0.1,
        }
    }
}

fn gaussian_vector<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let scale = 10f64.powf(rng.random_range(-3.0..1.0));
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn log_uniform<R: Rng>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    10f64.powf(rng.random_range(lo..hi))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs every property on `trials` random draws inside `domain`.
pub fn run_suite(geom: &Geometry, domain: &Domain, opts: &SuiteOptions) -> Result<Vec<PropertyReport>> {
    let n = geom.dimension();
    let k = geom.k();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (lr0, lr1) = opts.log_r_range;

    let mut mono_n = PropertyReport::new("monotonicity-N");
    let mut mono_ns = PropertyReport::new("monotonicity-Nstar");
    let mut sc_n_lo = PropertyReport::new("scaling-N-lower");
    let mut sc_n_hi = PropertyReport::new("scaling-N-upper");
    let mut sc_ns_lo = PropertyReport::new("scaling-Nstar-lower");
    let mut sc_ns_hi = PropertyReport::new("scaling-Nstar-upper-literal").reported(
        "N*(θr) ≤ θ^{-1/2} N*(r) fails for every v ≠ 0 when K > 0 and θ < 1, because the \
         (Kr²)^{1/3} part of the bracket shrinks like θ^{2/3}; see scaling-Nstar-upper",
    );
    let mut sc_ns_hi_fix = PropertyReport::new("scaling-Nstar-upper");
    let mut tri_n = PropertyReport::new("triangle-N");
    let mut tri_ns = PropertyReport::new("triangle-Nstar");
    let mut cs = PropertyReport::new("duality-vw");
    let mut cs2 = PropertyReport::new("duality-vHw");
    let mut extremal = PropertyReport::new("dual-extremal-equality");
    let mut euclid = PropertyReport::new("euclidean-containment");
    let mut nesting = PropertyReport::new("ball-nesting");
    let mut doubling = PropertyReport::new("doubling");
    let mut pert = PropertyReport::new("spectrum-perturbation");

    for _ in 0..opts.trials {
        let x = domain.sample(&mut rng);
        let dec = geom.decompose(&x)?;
        let v = gaussian_vector(n, &mut rng);
        let w = gaussian_vector(n, &mut rng);
        let r = log_uniform(lr0, lr1, &mut rng);
        let theta = log_uniform(-6.0, 0.0, &mut rng);
        let r2 = r * log_uniform(0.0, 3.0, &mut rng);

        let nv = dec.norm_n(k, &v, r)?;
        let nsv = dec.norm_nstar(k, &v, r)?;
        mono_n.check_le(dec.norm_n(k, &v, r2)?, nv);
        mono_ns.check_le(dec.norm_nstar(k, &v, r2)?, nsv);

        let nv_t = dec.norm_n(k, &v, theta * r)?;
        let nsv_t = dec.norm_nstar(k, &v, theta * r)?;
        sc_n_lo.check_le(theta.powf(-1.0 / 3.0) * nv, nv_t);
        sc_n_hi.check_le(nv_t, theta.powf(-0.5) * nv);
        sc_ns_lo.check_le(theta.powf(-1.0 / 3.0) * nsv, nsv_t);
        sc_ns_hi.check_le(nsv_t, theta.powf(-0.5) * nsv);
        sc_ns_hi_fix.check_le(nsv_t, theta.powf(-2.0 / 3.0) * nsv);

        let vw: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
        let (sv, sw, svw) = (dec.seminorm_n(k, &v)?, dec.seminorm_n(k, &w)?, dec.seminorm_n(k, &vw)?);
        tri_n.check_le(svw.cbrt(), sv.cbrt() + sw.cbrt());
        let (sv, sw, svw) = (
            dec.seminorm_nstar(k, &v)?,
            dec.seminorm_nstar(k, &w)?,
            dec.seminorm_nstar(k, &vw)?,
        );
        tri_ns.check_le(svw.sqrt(), sv.sqrt() + sw.sqrt());

        let nw = dec.norm_n(k, &w, r)?;
        let nsw = dec.norm_nstar(k, &w, r)?;
        cs.check_le(dot(&v, &w).abs(), r * nv * nsw);
        let h = geom.phase().hessian(&x)?;
        let hw = &h * nalgebra::DVector::from_column_slice(&w);
        cs2.check_le(dot(&v, hw.as_slice()).abs(), r * nv * nw);

        let ext = dec.dual_extremal(k, &v, r)?;
        extremal.check_eq(
            dot(&v, ext.as_slice()).abs(),
            r * nv * dec.norm_nstar(k, ext.as_slice(), r)?,
        );

        let ball = Ball::from_decomposition(&dec, &x, r, k)?;
        let p = ball.from_unit(&random_in_unit_ball(n, &mut rng));
        let dist = p.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let bound = ball.euclidean_radius_bound();
        euclid.check_le(dist, bound);
        for l in ball.semi_axis_lengths() {
            euclid.check_le(l, bound);
        }
        let diff: Vec<f64> = p.iter().zip(&x).map(|(a, b)| a - b).collect();
        nesting.check_le(dec.norm_n(k, &diff, r2)?, 1.0);

        let half = Ball::from_decomposition(&dec, &x, 0.5 * r, k)?;
        doubling.check_le(ball.volume(), 2f64.powf(n as f64 / 2.0) * half.volume());

        let step = random_in_unit_ball(n, &mut rng);
        let y: Vec<f64> = x
            .iter()
            .zip(&step)
            .map(|(a, s)| a + opts.perturbation_radius * s)
            .collect();
        for pair in geom.spectrum_perturbation_pairs(&x, &y)? {
            pert.check_le(pair.lhs, pair.rhs);
        }
    }
    Ok(vec![
        mono_n,
        mono_ns,
        sc_n_lo,
        sc_n_hi,
        sc_ns_lo,
        sc_ns_hi,
        sc_ns_hi_fix,
        tri_n,
        tri_ns,
        cs,
        cs2,
        extremal,
        euclid,
        nesting,
        doubling,
        pert,
    ])
}

/// Doubling `|B(x,r)| ≤ 2^{n/2} |B(x,r/2)|` for random symmetric Hessians
/// with random `K` and `r` spread over many orders of magnitude.
pub fn doubling_random_hessians(n: usize, trials: usize, seed: u64) -> Result<PropertyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropertyReport::new(&format!("doubling-n{n}"));
    let center = vec![0.0; n];
    for _ in 0..trials {
        let scale = log_uniform(-3.0, 3.0, &mut rng);
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let h = (&a + a.transpose()) * (0.5 * scale);
        let dec = SpectralDecomposition::new(&h)?;
        let k = log_uniform(-3.0, 3.0, &mut rng);
        let r = log_uniform(-6.0, 3.0, &mut rng);
        let big = Ball::from_decomposition(&dec, &center, r, k)?;
        let small = Ball::from_decomposition(&dec, &center, 0.5 * r, k)?;
        report.check_le(big.volume(), 2f64.powf(n as f64 / 2.0) * small.volume());
    }
    Ok(report)
}

/// Gap persistence on random `(x, r, s, δ)` draws, `samples` points `y`
/// per draw.
pub fn gap_persistence_trials(
    geom: &Geometry,
    domain: &Domain,
    trials: usize,
    samples: usize,
    seed: u64,
) -> Result<PropertyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropertyReport::new("gap-persistence");
    let mut worst = f64::INFINITY;
    for t in 0..trials {
        let x = domain.sample(&mut rng);
        let r = log_uniform(-6.0, 0.0, &mut rng);
        let s: f64 = rng.random_range(0.25..4.0);
        let delta = s.powi(3) * log_uniform(-6.0, -0.05, &mut rng);
        let out = geom.gap_persistence_check(&x, r, s, delta, samples, seed ^ (t as u64 + 1))?;
        report.trials += 1;
        if !out.holds() {
            report.violations += 1;
        }
        worst = worst.min(out.min_rank as f64 - out.base_rank as f64);
    }
    report.worst_slack = worst;
    report.note = Some(format!(
        "rank_s is the minimum over {samples} sampled ball points and can exceed the true infimum"
    ));
    Ok(report)
}
