//! Multivariate normal rectangle probabilities P(X >= lower) and
//! normalizing constants for truncated models.
//!
//! Dimensions 2 and 3 run the separation-of-variables reformulation with
//! adaptive quadrature; higher dimensions switch to a randomized
//! quasi-Monte Carlo rule over the same integrand.

use std::cell::Cell;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::TruncatedEllipticalModel;
use crate::quad;
use crate::rng::CounterRng;
use crate::special::{norm_cdf, norm_quantile, LN_SQRT_2PI};

/// How a rectangle probability was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RectMethod {
    ClosedForm1d,
    Quadrature2d3d,
    Qmc,
}

/// A rectangle probability with its error estimate.
#[derive(Debug, Clone, Copy)]
pub struct RectProbResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub method: RectMethod,
    pub n_evaluations: usize,
    /// False when the target accuracy was not certified within the budget;
    /// the value is still the best available estimate.
    pub converged: bool,
}

const QMC_TARGET: f64 = 1e-6;
const QUAD_TARGET: f64 = 1e-10;

/// P(X >= lower) for X ~ N(mean, sigma). Entries of `lower` may be -inf.
///
/// The QMC path (p >= 4) randomizes deterministically from an instance
/// hash, so repeated calls agree bit for bit.
pub fn rect_prob(mean: &DVector<f64>, sigma: &DMatrix<f64>, lower: &DVector<f64>) -> Result<RectProbResult> {
    rect_prob_seeded(mean, sigma, lower, 0)
}

/// Same as [`rect_prob`] with an explicit seed folded into the QMC
/// randomization.
pub fn rect_prob_seeded(
    mean: &DVector<f64>,
    sigma: &DMatrix<f64>,
    lower: &DVector<f64>,
    seed: u64,
) -> Result<RectProbResult> {
    let p = mean.len();
    if sigma.nrows() != p || sigma.ncols() != p {
        return Err(Error::DimensionMismatch { expected: p, found: sigma.nrows(), what: "sigma" });
    }
    if lower.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: lower.len(), what: "lower" });
    }
    if p == 0 || p > 20 {
        return Err(Error::InvalidParameter {
            name: "p",
            value: p as f64,
            reason: "rectangle probabilities support 1 <= p <= 20",
        });
    }

    // upper limits of the centered mirrored problem: P(Y <= b), Y ~ N(0, sigma)
    let mut b = DVector::zeros(p);
    for i in 0..p {
        let sd = sigma[(i, i)].sqrt();
        let li = if lower[i] == f64::NEG_INFINITY { mean[i] - 40.0 * sd } else { lower[i] };
        b[i] = mean[i] - li;
    }

    if p == 1 {
        let sd = sigma[(0, 0)].sqrt();
        if !(sd > 0.0) {
            return Err(Error::NotPositiveDefinite { eigenvalue: sigma[(0, 0)] });
        }
        return Ok(RectProbResult {
            value: norm_cdf(b[0] / sd),
            abs_error_estimate: 1e-15,
            method: RectMethod::ClosedForm1d,
            n_evaluations: 1,
            converged: true,
        });
    }

    // order the tightest standardized bounds first
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| {
        let si = b[i] / sigma[(i, i)].sqrt();
        let sj = b[j] / sigma[(j, j)].sqrt();
        si.total_cmp(&sj)
    });
    let b_ord = DVector::from_iterator(p, order.iter().map(|&i| b[i]));
    let sigma_ord = DMatrix::from_fn(p, p, |r, c| sigma[(order[r], order[c])]);
    let chol = Cholesky::new(sigma_ord.clone()).ok_or_else(|| Error::NotPositiveDefinite {
        eigenvalue: sigma_ord
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min),
    })?;
    let l = chol.l();

    if p <= 3 {
        Ok(genz_quadrature(&b_ord, &l))
    } else {
        Ok(genz_qmc(&b_ord, &l, mix_seed(seed, instance_hash(mean, sigma, lower))))
    }
}

fn instance_hash(mean: &DVector<f64>, sigma: &DMatrix<f64>, lower: &DVector<f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |x: f64| {
        h ^= x.to_bits();
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    };
    mean.iter().for_each(|&x| eat(x));
    sigma.iter().for_each(|&x| eat(x));
    lower.iter().for_each(|&x| eat(x));
    h
}

fn mix_seed(seed: u64, hash: u64) -> u64 {
    seed ^ hash.rotate_left(17)
}

/// Genz integrand over the unit cube of dimension p-1.
fn genz_factor(u: &[f64], b: &DVector<f64>, l: &DMatrix<f64>) -> f64 {
    let p = b.len();
    let mut y = [0.0f64; 32];
    let e0 = norm_cdf(b[0] / l[(0, 0)]);
    let mut w = e0;
    let mut e_prev = e0;
    for i in 1..p {
        y[i - 1] = norm_quantile((u[i - 1] * e_prev).clamp(0.0, 1.0));
        let mut dot = 0.0;
        for j in 0..i {
            dot += l[(i, j)] * y[j];
        }
        let e = norm_cdf((b[i] - dot) / l[(i, i)]);
        w *= e;
        e_prev = e;
    }
    w
}

fn genz_quadrature(b: &DVector<f64>, l: &DMatrix<f64>) -> RectProbResult {
    let p = b.len();
    let evals = Cell::new(0usize);
    if p == 2 {
        let e0 = norm_cdf(b[0] / l[(0, 0)]);
        let f = |u: f64| {
            evals.set(evals.get() + 1);
            let y0 = norm_quantile((u * e0).clamp(0.0, 1.0));
            norm_cdf((b[1] - l[(1, 0)] * y0) / l[(1, 1)])
        };
        let r = quad::integrate(&f, 0.0, 1.0, QUAD_TARGET, 0.0);
        return RectProbResult {
            value: (e0 * r.value).clamp(0.0, 1.0),
            abs_error_estimate: e0 * r.abs_error + 1e-15,
            method: RectMethod::Quadrature2d3d,
            n_evaluations: evals.get(),
            converged: r.converged,
        };
    }
    // p == 3: nested adaptive quadrature on the two inner coordinates
    let e0 = norm_cdf(b[0] / l[(0, 0)]);
    let inner_tol = QUAD_TARGET * 0.05;
    let inner_failed = Cell::new(false);
    let f_outer = |u0: f64| {
        let y0 = norm_quantile((u0 * e0).clamp(0.0, 1.0));
        let e1 = norm_cdf((b[1] - l[(1, 0)] * y0) / l[(1, 1)]);
        if e1 <= 0.0 {
            return 0.0;
        }
        let f_inner = |u1: f64| {
            evals.set(evals.get() + 1);
            let y1 = norm_quantile((u1 * e1).clamp(0.0, 1.0));
            norm_cdf((b[2] - l[(2, 0)] * y0 - l[(2, 1)] * y1) / l[(2, 2)])
        };
        let r = quad::integrate(&f_inner, 0.0, 1.0, inner_tol, 0.0);
        if !r.converged {
            inner_failed.set(true);
        }
        e1 * r.value
    };
    let r = quad::integrate(&f_outer, 0.0, 1.0, QUAD_TARGET * 0.5, 0.0);
    RectProbResult {
        value: (e0 * r.value).clamp(0.0, 1.0),
        abs_error_estimate: e0 * (r.abs_error + inner_tol) + 1e-15,
        method: RectMethod::Quadrature2d3d,
        n_evaluations: evals.get(),
        converged: r.converged && !inner_failed.get(),
    }
}

// square roots of the first 19 primes, the Richtmyer generators
const RICHTMYER_PRIMES: [u64; 19] =
    [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67];

fn genz_qmc(b: &DVector<f64>, l: &DMatrix<f64>, seed: u64) -> RectProbResult {
    let p = b.len();
    let dim = p - 1;
    debug_assert!(dim <= RICHTMYER_PRIMES.len());
    let q: Vec<f64> = RICHTMYER_PRIMES[..dim].iter().map(|&pr| (pr as f64).sqrt().fract()).collect();
    const N_REPLICATES: usize = 12;
    let mut n_per = 1usize << 10;
    let mut n_evaluations = 0usize;
    let mut u = vec![0.0f64; dim];
    loop {
        let mut means = [0.0f64; N_REPLICATES];
        for (r, mean_r) in means.iter_mut().enumerate() {
            let mut rng = CounterRng::substream(seed, r as u64);
            let shift: Vec<f64> = (0..dim).map(|_| rng.uniform()).collect();
            let mut acc = 0.0;
            for k in 0..n_per {
                for j in 0..dim {
                    u[j] = ((k + 1) as f64 * q[j] + shift[j]).fract();
                }
                acc += genz_factor(&u, b, l);
            }
            *mean_r = acc / n_per as f64;
        }
        n_evaluations += N_REPLICATES * n_per;
        let value = means.iter().sum::<f64>() / N_REPLICATES as f64;
        let var = means.iter().map(|m| (m - value) * (m - value)).sum::<f64>()
            / (N_REPLICATES as f64 - 1.0);
        let err = 3.0 * (var / N_REPLICATES as f64).sqrt();
        if err <= QMC_TARGET {
            return RectProbResult {
                value: value.clamp(0.0, 1.0),
                abs_error_estimate: err,
                method: RectMethod::Qmc,
                n_evaluations,
                converged: true,
            };
        }
        if n_evaluations >= (1 << 23) {
            return RectProbResult {
                value: value.clamp(0.0, 1.0),
                abs_error_estimate: err,
                method: RectMethod::Qmc,
                n_evaluations,
                converged: false,
            };
        }
        n_per *= 2;
    }
}

/// log of the normalizing constant C of a truncated model.
///
/// C^{-1} = integral of g(Q(w)) over {w >= c}. For the normal generator
/// this reduces to the rectangle probability; other generators integrate
/// the box directly (quadrature for p <= 2, QMC above).
///
/// The value is computed once per model and cached.
pub fn norm_const(model: &TruncatedEllipticalModel) -> Result<f64> {
    model
        .log_norm_const
        .get_or_init(|| compute_log_norm_const(model))
        .clone()
}

fn compute_log_norm_const(model: &TruncatedEllipticalModel) -> Result<f64> {
    let p = model.p();
    if model.generator().is_normal() {
        let rect = rect_prob(model.mu(), model.sigma(), model.c())?;
        if !(rect.value > 0.0) {
            return Err(Error::IntegrationFailure {
                what: "truncation region carries no probability mass".to_string(),
            });
        }
        return Ok(-(p as f64 * LN_SQRT_2PI + 0.5 * model.log_det_sigma() + rect.value.ln()));
    }

    let integral = match p {
        1 => elliptical_box_integral_1d(model)?,
        2 => elliptical_box_integral_2d(model)?,
        _ => elliptical_box_integral_qmc(model)?,
    };
    if !integral.is_finite() || integral <= 0.0 {
        return Err(Error::IntegrationFailure {
            what: format!("generator integral over the truncation box is {integral}"),
        });
    }
    Ok(-integral.ln())
}

/// Integrate f over [lower, inf); a -inf bound splits at `center`.
fn line_integral<F: Fn(f64) -> f64>(
    f: &F,
    lower: f64,
    center: f64,
    scale: f64,
    abs_tol: f64,
) -> quad::QuadResult {
    if lower == f64::NEG_INFINITY {
        let right = quad::integrate_semi_infinite(f, center, scale, abs_tol * 0.5, 1e-10);
        let flip = |s: f64| f(center - s);
        let left = quad::integrate_semi_infinite(&flip, 0.0, scale, abs_tol * 0.5, 1e-10);
        quad::QuadResult {
            value: right.value + left.value,
            abs_error: right.abs_error + left.abs_error,
            n_evals: right.n_evals + left.n_evals,
            converged: right.converged && left.converged,
        }
    } else {
        quad::integrate_semi_infinite(f, lower, scale, abs_tol, 1e-10)
    }
}

fn elliptical_box_integral_1d(model: &TruncatedEllipticalModel) -> Result<f64> {
    let mu = model.mu()[0];
    let sd = model.sigma()[(0, 0)].sqrt();
    let gen = model.generator();
    let f = |w: f64| {
        let z = (w - mu) / sd;
        gen.log_g(z * z).exp()
    };
    let peak = f(model.c()[0].max(mu)) * sd;
    let r = line_integral(&f, model.c()[0], mu, sd, (1e-12 * peak).max(1e-300));
    if !r.converged {
        return Err(Error::IntegrationFailure {
            what: "1-d generator integral did not converge".to_string(),
        });
    }
    Ok(r.value)
}

fn elliptical_box_integral_2d(model: &TruncatedEllipticalModel) -> Result<f64> {
    let gen = model.generator();
    let mu = model.mu();
    let c = model.c();
    let sds = model.sds();
    let chol = model.cholesky();
    let quad_form = |w1: f64, w2: f64| {
        let d = DVector::from_vec(vec![w1 - mu[0], w2 - mu[1]]);
        let z = chol.solve(&d);
        d.dot(&z)
    };
    // rough magnitude of the integrand for absolute cutoffs
    let w10 = c[0].max(mu[0]);
    let w20 = c[1].max(mu[1]);
    let peak = gen.log_g(quad_form(w10, w20)).exp().max(1e-300);
    let inner_tol = 1e-12 * peak * sds[1];
    let outer_tol = 1e-11 * peak * sds[0] * sds[1];

    let f_outer = |w1: f64| {
        let f_inner = |w2: f64| gen.log_g(quad_form(w1, w2)).exp();
        line_integral(&f_inner, c[1], mu[1], sds[1], inner_tol).value
    };
    let r = line_integral(&f_outer, c[0], mu[0], sds[0], outer_tol);
    if !r.converged {
        return Err(Error::IntegrationFailure {
            what: "2-d generator integral did not converge".to_string(),
        });
    }
    Ok(r.value)
}

fn elliptical_box_integral_qmc(model: &TruncatedEllipticalModel) -> Result<f64> {
    let p = model.p();
    if p > RICHTMYER_PRIMES.len() {
        return Err(Error::InvalidParameter {
            name: "p",
            value: p as f64,
            reason: "elliptical normalizing constants support p <= 19",
        });
    }
    let gen = model.generator();
    let mu = model.mu();
    let c = model.c();
    let sds = model.sds();
    let chol = model.cholesky();
    let q: Vec<f64> = RICHTMYER_PRIMES[..p].iter().map(|&pr| (pr as f64).sqrt().fract()).collect();
    let seed = mix_seed(0, instance_hash(mu, model.sigma(), c));

    // map the cube to the box with per-axis rational stretches
    let integrand = |u: &[f64]| -> f64 {
        let mut w = DVector::zeros(p);
        let mut jac = 1.0;
        for i in 0..p {
            let t = u[i].min(1.0 - 1e-16);
            let denom = 1.0 - t;
            let start = if c[i] == f64::NEG_INFINITY { mu[i] - 40.0 * sds[i] } else { c[i] };
            w[i] = start + sds[i] * t / denom;
            jac *= sds[i] / (denom * denom);
        }
        let d = &w - mu;
        let z = chol.solve(&d);
        let lg = gen.log_g(d.dot(&z));
        if lg == f64::NEG_INFINITY {
            0.0
        } else {
            lg.exp() * jac
        }
    };

    const N_REPLICATES: usize = 12;
    let mut n_per = 1usize << 12;
    let mut total_evals = 0usize;
    let mut u = vec![0.0f64; p];
    loop {
        let mut means = [0.0f64; N_REPLICATES];
        for (r, mean_r) in means.iter_mut().enumerate() {
            let mut rng = CounterRng::substream(seed, r as u64);
            let shift: Vec<f64> = (0..p).map(|_| rng.uniform()).collect();
            let mut acc = 0.0;
            for k in 0..n_per {
                for j in 0..p {
                    u[j] = ((k + 1) as f64 * q[j] + shift[j]).fract();
                }
                acc += integrand(&u);
            }
            *mean_r = acc / n_per as f64;
        }
        total_evals += N_REPLICATES * n_per;
        let value = means.iter().sum::<f64>() / N_REPLICATES as f64;
        let var = means.iter().map(|m| (m - value) * (m - value)).sum::<f64>()
            / (N_REPLICATES as f64 - 1.0);
        let err = 3.0 * (var / N_REPLICATES as f64).sqrt();
        if err <= 1e-6 * value.abs().max(1e-30) {
            return Ok(value);
        }
        if total_evals >= (1 << 24) {
            return Err(Error::IntegrationFailure {
                what: format!(
                    "QMC generator integral did not converge: value {value}, error {err}"
                ),
            });
        }
        n_per *= 2;
    }
}
