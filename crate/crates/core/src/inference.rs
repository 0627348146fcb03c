//! Likelihood inference for the truncated bivariate normal: full and
//! restricted maximum likelihood, the likelihood-ratio test of
//! independence, canonical statistics, and Fisher information.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{build_model, GeneratorSpec, TruncatedEllipticalModel};
use crate::mvnprob::rect_prob;
use crate::rng::CounterRng;
use crate::sampling::sample_truncated;
use crate::simplex::{nelder_mead, SimplexResult};
use crate::special::{norm_sf, LN_SQRT_2PI};

pub use crate::special::chi2_1_sf;

/// Parameter vector of the bivariate truncated normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariateTheta {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
}

impl BivariateTheta {
    pub fn new(mu1: f64, mu2: f64, sigma1: f64, sigma2: f64, rho: f64) -> Result<Self> {
        if !(sigma1 > 0.0 && sigma1.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sigma1",
                value: sigma1,
                reason: "must be positive",
            });
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sigma2",
                value: sigma2,
                reason: "must be positive",
            });
        }
        if !(rho.is_finite() && rho.abs() < 1.0) {
            return Err(Error::InvalidParameter {
                name: "rho",
                value: rho,
                reason: "need |rho| < 1",
            });
        }
        if !mu1.is_finite() || !mu2.is_finite() {
            return Err(Error::InvalidParameter {
                name: "mu",
                value: f64::NAN,
                reason: "means must be finite",
            });
        }
        Ok(BivariateTheta { mu1, mu2, sigma1, sigma2, rho })
    }

    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        let cov = self.rho * self.sigma1 * self.sigma2;
        DMatrix::from_row_slice(
            2,
            2,
            &[self.sigma1 * self.sigma1, cov, cov, self.sigma2 * self.sigma2],
        )
    }

    pub fn to_model(&self, c: [f64; 2]) -> Result<TruncatedEllipticalModel> {
        build_model(
            DVector::from_vec(vec![self.mu1, self.mu2]),
            self.sigma_matrix(),
            DVector::from_vec(vec![c[0], c[1]]),
            GeneratorSpec::normal(),
        )
    }
}

/// Outcome of a maximum-likelihood fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub theta_hat: BivariateTheta,
    pub loglik: f64,
    pub converged: bool,
    pub n_iterations: usize,
    pub restricted: bool,
    pub std_errors: Option<[f64; 5]>,
}

impl FitReport {
    /// Fill `std_errors` from the inverse Fisher information at the
    /// fitted point, scaled to the sample size.
    pub fn compute_std_errors(&mut self, c: [f64; 2], n: usize, n_mc: usize, seed: u64) -> Result<()> {
        let info = fisher_information(&self.theta_hat, c, n_mc, seed)?;
        let scaled = info * (n as f64);
        let inv = scaled.try_inverse().ok_or(Error::IntegrationFailure {
            what: "Fisher information is numerically singular".to_string(),
        })?;
        let mut se = [0.0f64; 5];
        for i in 0..5 {
            se[i] = inv[(i, i)].max(0.0).sqrt();
        }
        self.std_errors = Some(se);
        Ok(())
    }
}

/// Canonical coordinates of one observation.
#[derive(Debug, Clone, Copy)]
pub struct CanonicalPair {
    pub v: [f64; 5],
    pub t: [f64; 5],
}

impl CanonicalPair {
    pub fn new(w: [f64; 2], theta: &BivariateTheta) -> Self {
        CanonicalPair { v: canonical_stats(w), t: canonical_params(theta) }
    }
}

/// Natural sufficient statistic (w1, -w1^2, w2, -w2^2, w1 w2).
pub fn canonical_stats(w: [f64; 2]) -> [f64; 5] {
    let (w1, w2) = (w[0], w[1]);
    [w1, -w1 * w1, w2, -w2 * w2, w1 * w2]
}

/// Canonical parameter vector
/// (1/s1^2, 1/s2^2, 2(m1/s1^2 - r m2/(s1 s2)), 2(m2/s2^2 - r m1/(s1 s2)), 2 r/(s1 s2)).
pub fn canonical_params(theta: &BivariateTheta) -> [f64; 5] {
    let (m1, m2, s1, s2, r) = (theta.mu1, theta.mu2, theta.sigma1, theta.sigma2, theta.rho);
    [
        1.0 / (s1 * s1),
        1.0 / (s2 * s2),
        2.0 * (m1 / (s1 * s1) - r * m2 / (s1 * s2)),
        2.0 * (m2 / (s2 * s2) - r * m1 / (s1 * s2)),
        2.0 * r / (s1 * s2),
    ]
}

/// Analytic Jacobian of [`canonical_params`] with respect to
/// (mu1, mu2, sigma1, sigma2, rho); row i is dT_i/dtheta.
pub fn canonical_param_jacobian(theta: &BivariateTheta) -> DMatrix<f64> {
    let (m1, m2, s1, s2, r) = (theta.mu1, theta.mu2, theta.sigma1, theta.sigma2, theta.rho);
    let mut j = DMatrix::zeros(5, 5);
    // T1 = s1^{-2}
    j[(0, 2)] = -2.0 / (s1 * s1 * s1);
    // T2 = s2^{-2}
    j[(1, 3)] = -2.0 / (s2 * s2 * s2);
    // T3 = 2 m1/s1^2 - 2 r m2/(s1 s2)
    j[(2, 0)] = 2.0 / (s1 * s1);
    j[(2, 1)] = -2.0 * r / (s1 * s2);
    j[(2, 2)] = -4.0 * m1 / (s1 * s1 * s1) + 2.0 * r * m2 / (s1 * s1 * s2);
    j[(2, 3)] = 2.0 * r * m2 / (s1 * s2 * s2);
    j[(2, 4)] = -2.0 * m2 / (s1 * s2);
    // T4 = 2 m2/s2^2 - 2 r m1/(s1 s2)
    j[(3, 0)] = -2.0 * r / (s1 * s2);
    j[(3, 1)] = 2.0 / (s2 * s2);
    j[(3, 2)] = 2.0 * r * m1 / (s1 * s1 * s2);
    j[(3, 3)] = -4.0 * m2 / (s2 * s2 * s2) + 2.0 * r * m1 / (s1 * s2 * s2);
    j[(3, 4)] = -2.0 * m1 / (s1 * s2);
    // T5 = 2 r / (s1 s2)
    j[(4, 2)] = -2.0 * r / (s1 * s1 * s2);
    j[(4, 3)] = -2.0 * r / (s1 * s2 * s2);
    j[(4, 4)] = 2.0 / (s1 * s2);
    j
}

/// Exponential-family coefficients paired componentwise with the
/// sufficient statistic V = (w1, -w1^2, w2, -w2^2, w1 w2): the log density
/// is eta . V plus terms free of w. These differ from the displayed
/// canonical parameter vector by the 1/(2(1 - rho^2)) factor and an
/// ordering permutation; the pairing is what the information matrix needs.
#[cfg_attr(not(test), allow(dead_code))]
fn natural_params(theta: &BivariateTheta) -> [f64; 5] {
    let (m1, m2, s1, s2, r) = (theta.mu1, theta.mu2, theta.sigma1, theta.sigma2, theta.rho);
    let u = 1.0 / (1.0 - r * r);
    let a1 = m1 / (s1 * s1) - r * m2 / (s1 * s2);
    let a2 = m2 / (s2 * s2) - r * m1 / (s1 * s2);
    [u * a1, u / (2.0 * s1 * s1), u * a2, u / (2.0 * s2 * s2), u * r / (s1 * s2)]
}

fn natural_param_jacobian(theta: &BivariateTheta) -> DMatrix<f64> {
    let (m1, m2, s1, s2, r) = (theta.mu1, theta.mu2, theta.sigma1, theta.sigma2, theta.rho);
    let u = 1.0 / (1.0 - r * r);
    let du = 2.0 * r * u * u;
    let a1 = m1 / (s1 * s1) - r * m2 / (s1 * s2);
    let a2 = m2 / (s2 * s2) - r * m1 / (s1 * s2);
    let mut j = DMatrix::zeros(5, 5);
    // eta1 = u a1
    j[(0, 0)] = u / (s1 * s1);
    j[(0, 1)] = -u * r / (s1 * s2);
    j[(0, 2)] = u * (-2.0 * m1 / (s1 * s1 * s1) + r * m2 / (s1 * s1 * s2));
    j[(0, 3)] = u * r * m2 / (s1 * s2 * s2);
    j[(0, 4)] = du * a1 - u * m2 / (s1 * s2);
    // eta2 = u / (2 s1^2)
    j[(1, 2)] = -u / (s1 * s1 * s1);
    j[(1, 4)] = r * u * u / (s1 * s1);
    // eta3 = u a2
    j[(2, 0)] = -u * r / (s1 * s2);
    j[(2, 1)] = u / (s2 * s2);
    j[(2, 2)] = u * r * m1 / (s1 * s1 * s2);
    j[(2, 3)] = u * (-2.0 * m2 / (s2 * s2 * s2) + r * m1 / (s1 * s2 * s2));
    j[(2, 4)] = du * a2 - u * m1 / (s1 * s2);
    // eta4 = u / (2 s2^2)
    j[(3, 3)] = -u / (s2 * s2 * s2);
    j[(3, 4)] = r * u * u / (s2 * s2);
    // eta5 = u r / (s1 s2)
    j[(4, 2)] = -u * r / (s1 * s1 * s2);
    j[(4, 3)] = -u * r / (s1 * s2 * s2);
    j[(4, 4)] = (u + 2.0 * r * r * u * u) / (s1 * s2);
    j
}

// ---------------------------------------------------------------------------
// Log-likelihood
// ---------------------------------------------------------------------------

struct DataStats {
    n: f64,
    m1: f64,
    m2: f64,
    // centered second-moment sums
    s11: f64,
    s22: f64,
    s12: f64,
}

impl DataStats {
    fn new(data: &[[f64; 2]]) -> Self {
        let n = data.len() as f64;
        let m1 = data.iter().map(|r| r[0]).sum::<f64>() / n;
        let m2 = data.iter().map(|r| r[1]).sum::<f64>() / n;
        let (mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0);
        for r in data {
            let d1 = r[0] - m1;
            let d2 = r[1] - m2;
            s11 += d1 * d1;
            s22 += d2 * d2;
            s12 += d1 * d2;
        }
        DataStats { n, m1, m2, s11, s22, s12 }
    }
}

fn check_support(data: &[[f64; 2]], c: [f64; 2]) -> Result<()> {
    for (i, row) in data.iter().enumerate() {
        if !(row[0].is_finite() && row[1].is_finite()) || row[0] < c[0] || row[1] < c[1] {
            return Err(Error::DataOutOfSupport { row: i });
        }
    }
    Ok(())
}

/// Total log-likelihood of the truncated bivariate normal, as the sum of
/// per-row log densities.
pub fn log_likelihood(theta: &BivariateTheta, data: &[[f64; 2]], c: [f64; 2]) -> Result<f64> {
    check_support(data, c)?;
    let model = theta.to_model(c)?;
    let mut total = 0.0;
    for row in data {
        total += crate::density::log_pdf(&model, &DVector::from_vec(vec![row[0], row[1]]))?;
    }
    Ok(total)
}

/// Closed-form evaluation through the sufficient statistics; used inside
/// the optimizer loops and identical to [`log_likelihood`] up to rounding.
fn log_likelihood_fast(theta: &BivariateTheta, stats: &DataStats, c: [f64; 2]) -> Result<f64> {
    let (s1, s2, r) = (theta.sigma1, theta.sigma2, theta.rho);
    let mu = DVector::from_vec(vec![theta.mu1, theta.mu2]);
    let sigma = theta.sigma_matrix();
    let lower = DVector::from_vec(vec![c[0], c[1]]);
    let rect = rect_prob(&mu, &sigma, &lower)?;
    if !(rect.value > 0.0) {
        return Err(Error::IntegrationFailure {
            what: "truncation region carries no probability mass".to_string(),
        });
    }
    let omr2 = 1.0 - r * r;
    let t11 = stats.s11 + stats.n * (stats.m1 - theta.mu1).powi(2);
    let t22 = stats.s22 + stats.n * (stats.m2 - theta.mu2).powi(2);
    let t12 = stats.s12 + stats.n * (stats.m1 - theta.mu1) * (stats.m2 - theta.mu2);
    let quad_sum =
        (t11 / (s1 * s1) - 2.0 * r * t12 / (s1 * s2) + t22 / (s2 * s2)) / omr2;
    Ok(stats.n
        * (-2.0 * LN_SQRT_2PI - s1.ln() - s2.ln() - 0.5 * omr2.ln() - rect.value.ln())
        - 0.5 * quad_sum)
}

// ---------------------------------------------------------------------------
// Maximum likelihood
// ---------------------------------------------------------------------------

const SIMPLEX_TOL: f64 = 1e-8;
const JITTER_SEED: u64 = 0x5EED_F175;

fn objective_full(stats: &DataStats, c: [f64; 2], x: &[f64]) -> f64 {
    let theta = BivariateTheta {
        mu1: x[0],
        mu2: x[1],
        sigma1: x[2].exp(),
        sigma2: x[3].exp(),
        rho: x[4].tanh(),
    };
    if !theta.sigma1.is_finite()
        || !theta.sigma2.is_finite()
        || theta.sigma1 <= 0.0
        || theta.sigma2 <= 0.0
        || theta.rho.abs() >= 1.0
    {
        return 1e300;
    }
    match log_likelihood_fast(&theta, stats, c) {
        Ok(ll) if ll.is_finite() => -ll,
        _ => 1e300,
    }
}

/// Restricted (rho = 0) likelihood factorizes, so each margin fits a
/// univariate truncated normal.
fn univariate_objective(n: f64, mean: f64, ss: f64, c: f64, x: &[f64]) -> f64 {
    let mu = x[0];
    let sigma = x[1].exp();
    if !sigma.is_finite() || sigma <= 0.0 {
        return 1e300;
    }
    let z_mass = if c == f64::NEG_INFINITY { 1.0 } else { norm_sf((c - mu) / sigma) };
    if !(z_mass > 0.0) {
        return 1e300;
    }
    let t = ss + n * (mean - mu) * (mean - mu);
    let ll = n * (-LN_SQRT_2PI - sigma.ln() - z_mass.ln()) - 0.5 * t / (sigma * sigma);
    if ll.is_finite() {
        -ll
    } else {
        1e300
    }
}

struct StartResult {
    x: Vec<f64>,
    f: f64,
    evals: usize,
    converged: bool,
}

/// One multi-start minimization: coarse run then a polish run with a
/// small fresh simplex at the coarse optimum.
fn run_starts<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    scale: &[f64],
    max_evals: usize,
) -> StartResult {
    let coarse: SimplexResult = nelder_mead(|x| f(x), x0, scale, SIMPLEX_TOL, max_evals);
    let polish_scale: Vec<f64> = scale.iter().map(|s| s * 1e-3).collect();
    let polish = nelder_mead(|x| f(x), &coarse.x, &polish_scale, SIMPLEX_TOL, max_evals);
    StartResult {
        x: polish.x,
        f: polish.f,
        evals: coarse.n_evals + polish.n_evals,
        converged: polish.converged,
    }
}

fn fit_univariate(xs: &[f64], c: f64) -> StartResult {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    let sd = (ss / n).sqrt().max(1e-6);
    let x0 = vec![mean, sd.ln()];
    let scale = vec![0.3 * sd, 0.2];
    let mut rng = CounterRng::substream(JITTER_SEED, 101);
    let mut best: Option<StartResult> = None;
    let mut total_evals = 0usize;
    for start in 0..5 {
        let mut xs0 = x0.clone();
        if start > 0 {
            xs0[0] += 0.5 * sd * rng.normal();
            xs0[1] += 0.3 * rng.normal();
        }
        let r = run_starts(|x| univariate_objective(n, mean, ss, c, x), &xs0, &scale, 4000);
        total_evals += r.evals;
        let better = match &best {
            None => true,
            Some(b) => (r.converged, -r.f) > (b.converged, -b.f),
        };
        if better {
            best = Some(r);
        }
    }
    let mut best = best.expect("at least one start ran");
    best.evals = total_evals;
    best
}

/// Maximum-likelihood fit of the truncated bivariate normal.
///
/// Optimizes in the unconstrained coordinates (mu1, mu2, log sigma1,
/// log sigma2, atanh rho) with five starts: a moment-based start plus
/// four jittered copies, each polished with a second simplex pass.
/// `restricted` fixes rho = 0, which factorizes the likelihood into two
/// univariate truncated-normal fits.
pub fn fit_mle(data: &[[f64; 2]], c: [f64; 2], restricted: bool) -> Result<FitReport> {
    if data.len() < 10 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: data.len() as f64,
            reason: "need at least 10 rows",
        });
    }
    check_support(data, c)?;

    if restricted {
        let col1: Vec<f64> = data.iter().map(|r| r[0]).collect();
        let col2: Vec<f64> = data.iter().map(|r| r[1]).collect();
        let f1 = fit_univariate(&col1, c[0]);
        let f2 = fit_univariate(&col2, c[1]);
        let theta_hat = BivariateTheta::new(f1.x[0], f2.x[0], f1.x[1].exp(), f2.x[1].exp(), 0.0)?;
        return Ok(FitReport {
            theta_hat,
            loglik: -(f1.f + f2.f),
            converged: f1.converged && f2.converged,
            n_iterations: f1.evals + f2.evals,
            restricted: true,
            std_errors: None,
        });
    }

    let stats = DataStats::new(data);
    let sd1 = (stats.s11 / stats.n).sqrt().max(1e-6);
    let sd2 = (stats.s22 / stats.n).sqrt().max(1e-6);
    let corr = (stats.s12 / (stats.s11 * stats.s22).sqrt()).clamp(-0.85, 0.85);
    let x0 = vec![stats.m1, stats.m2, sd1.ln(), sd2.ln(), corr.atanh()];
    let scale = vec![0.3 * sd1, 0.3 * sd2, 0.2, 0.2, 0.2];

    let mut rng = CounterRng::substream(JITTER_SEED, 202);
    let mut best: Option<StartResult> = None;
    let mut total_evals = 0usize;
    for start in 0..5 {
        let mut xs0 = x0.clone();
        if start > 0 {
            xs0[0] += 0.5 * sd1 * rng.normal();
            xs0[1] += 0.5 * sd2 * rng.normal();
            xs0[2] += 0.3 * rng.normal();
            xs0[3] += 0.3 * rng.normal();
            xs0[4] += 0.4 * rng.normal();
        }
        let r = run_starts(|x| objective_full(&stats, c, x), &xs0, &scale, 6000);
        total_evals += r.evals;
        let better = match &best {
            None => true,
            Some(b) => (r.converged, -r.f) > (b.converged, -b.f),
        };
        if better {
            best = Some(r);
        }
    }
    let best = best.expect("at least one start ran");
    let theta_hat = BivariateTheta::new(
        best.x[0],
        best.x[1],
        best.x[2].exp(),
        best.x[3].exp(),
        best.x[4].tanh(),
    )?;
    Ok(FitReport {
        theta_hat,
        loglik: -best.f,
        converged: best.converged,
        n_iterations: total_evals,
        restricted: false,
        std_errors: None,
    })
}

/// Likelihood-ratio test of independence.
#[derive(Debug, Clone)]
pub struct LrtResult {
    pub statistic: f64,
    pub p_value: f64,
    pub fit_full: FitReport,
    pub fit_null: FitReport,
}

/// Non-convergence failure carrying whatever fits completed.
#[derive(Debug, Clone)]
pub enum LrtError {
    NonConvergence { fit_full: Box<FitReport>, fit_null: Box<FitReport> },
    Other(Error),
}

impl From<Error> for LrtError {
    fn from(e: Error) -> Self {
        LrtError::Other(e)
    }
}

/// Test H0: rho = 0 against H1: rho != 0 by -2 log Lambda, referred to
/// the chi-square distribution with one degree of freedom.
pub fn lrt_independence(
    data: &[[f64; 2]],
    c: [f64; 2],
) -> std::result::Result<LrtResult, LrtError> {
    let fit_full = fit_mle(data, c, false)?;
    let fit_null = fit_mle(data, c, true)?;
    if !fit_full.converged || !fit_null.converged {
        return Err(LrtError::NonConvergence {
            fit_full: Box::new(fit_full),
            fit_null: Box::new(fit_null),
        });
    }
    let statistic = (2.0 * (fit_full.loglik - fit_null.loglik)).max(0.0);
    let p_value = chi2_1_sf(statistic)?;
    Ok(LrtResult { statistic, p_value, fit_full, fit_null })
}

/// Monte Carlo Fisher information: the covariance of the sufficient
/// statistic under theta, sandwiched between the analytic Jacobians of
/// the natural parameters.
pub fn fisher_information(
    theta: &BivariateTheta,
    c: [f64; 2],
    n_mc: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if n_mc < 10_000 {
        return Err(Error::InvalidParameter {
            name: "n_mc",
            value: n_mc as f64,
            reason: "need at least 10^4 Monte Carlo draws",
        });
    }
    let model = theta.to_model(c)?;
    let batch = sample_truncated(&model, n_mc, seed, n_mc.saturating_mul(1000))?;
    let pts = &batch.points;
    let n = pts.nrows();
    let mut mean = [0.0f64; 5];
    let mut vs: Vec<[f64; 5]> = Vec::with_capacity(n);
    for i in 0..n {
        let v = canonical_stats([pts[(i, 0)], pts[(i, 1)]]);
        for k in 0..5 {
            mean[k] += v[k];
        }
        vs.push(v);
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = DMatrix::zeros(5, 5);
    for v in &vs {
        for a in 0..5 {
            for b in 0..5 {
                cov[(a, b)] += (v[a] - mean[a]) * (v[b] - mean[b]);
            }
        }
    }
    cov /= n as f64;
    let j = natural_param_jacobian(theta);
    let info = j.transpose() * cov * j;
    Ok((&info + info.transpose()) * 0.5)
}
