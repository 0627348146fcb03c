//! Density evaluation for truncated models: quadratic forms, the block
//! decomposition, joint/marginal/conditional densities.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{PartitionSpec, TruncatedEllipticalModel};
use crate::mvnprob::{norm_const, rect_prob};
use crate::special::LN_SQRT_2PI;

/// The two-block split of the Mahalanobis quadratic form.
#[derive(Debug, Clone)]
pub struct QuadDecomposition {
    pub q_full: f64,
    /// (w1 - mu1)' sigma11^{-1} (w1 - mu1)
    pub q1: f64,
    /// Schur-complement term in the shifted w2 coordinates
    pub q2: f64,
    /// mu2 + sigma21 sigma11^{-1} (w1 - mu1)
    pub cond_mean_shift: DVector<f64>,
}

/// Mahalanobis quadratic form (w - mu)' sigma^{-1} (w - mu), computed
/// through the model's cached Cholesky factor.
pub fn quad_form(model: &TruncatedEllipticalModel, w: &DVector<f64>) -> Result<f64> {
    if w.len() != model.p() {
        return Err(Error::DimensionMismatch { expected: model.p(), found: w.len(), what: "w" });
    }
    let d = w - model.mu();
    let solved = model.cholesky().solve(&d);
    Ok(d.dot(&solved).max(0.0))
}

/// Split the quadratic form along a partition.
pub fn decompose_quad(
    model: &TruncatedEllipticalModel,
    part: &PartitionSpec,
    w1: &DVector<f64>,
    w2: &DVector<f64>,
) -> Result<QuadDecomposition> {
    if w1.len() != part.p1() {
        return Err(Error::DimensionMismatch { expected: part.p1(), found: w1.len(), what: "w1" });
    }
    if w2.len() != part.p2() {
        return Err(Error::DimensionMismatch { expected: part.p2(), found: w2.len(), what: "w2" });
    }
    let (p1, p2) = (part.p1(), part.p2());
    let mu1 = model.mu().rows(0, p1).into_owned();
    let mu2 = model.mu().rows(p1, p2).into_owned();
    let d1 = w1 - &mu1;
    let s1 = part.solve11(&d1);
    let q1 = d1.dot(&s1).max(0.0);
    let cond_mean_shift = &mu2 + part.sigma21() * &s1;
    let d2 = w2 - &cond_mean_shift;
    let s2 = part.solve_schur(&d2);
    let q2 = d2.dot(&s2).max(0.0);

    let mut w = DVector::zeros(model.p());
    w.rows_mut(0, p1).copy_from(w1);
    w.rows_mut(p1, p2).copy_from(w2);
    let q_full = quad_form(model, &w)?;
    Ok(QuadDecomposition { q_full, q1, q2, cond_mean_shift })
}

/// Log density of the truncated model at `w`; -inf outside the support.
///
/// log C + log g(Q(w)), with the normalizing constant computed lazily and
/// cached on the model.
pub fn log_pdf(model: &TruncatedEllipticalModel, w: &DVector<f64>) -> Result<f64> {
    if w.len() != model.p() {
        return Err(Error::DimensionMismatch { expected: model.p(), found: w.len(), what: "w" });
    }
    if !model.in_support(w) {
        return Ok(f64::NEG_INFINITY);
    }
    let log_c = norm_const(model)?;
    let q = quad_form(model, w)?;
    Ok(log_c + model.generator().log_g(q))
}

/// Density of the truncated model at `w`.
pub fn pdf(model: &TruncatedEllipticalModel, w: &DVector<f64>) -> Result<f64> {
    Ok(log_pdf(model, w)?.exp())
}

/// Marginal density of the first block W1 (normal generator only).
///
/// C (2 pi)^{p2/2} det(sigma22.1)^{1/2} exp(-q1/2) times the rectangle
/// probability of the shifted conditional law over {w2 >= c2}.
pub fn marginal_pdf_w1(
    model: &TruncatedEllipticalModel,
    part: &PartitionSpec,
    w1: &DVector<f64>,
) -> Result<f64> {
    if !model.generator().is_normal() {
        return Err(Error::UnsupportedGenerator { op: "marginal_pdf_w1" });
    }
    if w1.len() != part.p1() {
        return Err(Error::DimensionMismatch { expected: part.p1(), found: w1.len(), what: "w1" });
    }
    let (p1, p2) = (part.p1(), part.p2());
    let c1 = model.c().rows(0, p1);
    if w1.iter().zip(c1.iter()).any(|(w, c)| w < c) {
        return Ok(0.0);
    }
    let mu1 = model.mu().rows(0, p1).into_owned();
    let d1 = w1 - &mu1;
    let s1 = part.solve11(&d1);
    let q1 = d1.dot(&s1).max(0.0);
    let shift = model.mu().rows(p1, p2).into_owned() + part.sigma21() * &s1;
    let c2 = model.c().rows(p1, p2).into_owned();
    let rect = rect_prob(&shift, part.schur(), &c2)?;
    if rect.value <= 0.0 {
        return Ok(0.0);
    }
    let log_c = norm_const(model)?;
    let ln = log_c + p2 as f64 * LN_SQRT_2PI + 0.5 * part.log_det_schur() - 0.5 * q1
        + rect.value.ln();
    Ok(ln.exp())
}

/// Conditional density of W2 given W1 = w1 (normal generator only).
///
/// Evaluated in the explicit Gaussian-ratio form, in which the joint
/// normalizing constant cancels.
pub fn conditional_pdf_w2_given_w1(
    model: &TruncatedEllipticalModel,
    part: &PartitionSpec,
    w1: &DVector<f64>,
    w2: &DVector<f64>,
) -> Result<f64> {
    if !model.generator().is_normal() {
        return Err(Error::UnsupportedGenerator { op: "conditional_pdf_w2_given_w1" });
    }
    let (p1, p2) = (part.p1(), part.p2());
    let c2 = model.c().rows(p1, p2).into_owned();
    if w2.iter().zip(c2.iter()).any(|(w, c)| w < c) {
        return Ok(0.0);
    }
    let dec = decompose_quad(model, part, w1, w2)?;
    let rect = rect_prob(&dec.cond_mean_shift, part.schur(), &c2)?;
    if rect.value <= 0.0 {
        return Ok(0.0);
    }
    let ln = -(p2 as f64) * LN_SQRT_2PI - 0.5 * part.log_det_schur() - 0.5 * dec.q2
        - rect.value.ln();
    Ok(ln.exp())
}
