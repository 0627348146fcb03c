//! Polar-coordinate machinery for truncated-at-the-mean bivariate
//! elliptical laws: the angle psi*, the conditional-expectation functions
//! h1/h2/h3, radial moments of the generating variable, the resulting
//! covariance of the truncated pair, and the zero-correlation construction.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::error::{Error, Result};
use crate::model::{GeneratorKind, GeneratorSpec};
use crate::quad;
use crate::special::ln_gamma;

/// Moments of the generating radial variable R.
#[derive(Debug, Clone, Copy)]
pub struct RadialMoments {
    pub e_r: f64,
    pub e_r2: f64,
    /// E[R^2] / (E R)^2, at least 1 by Cauchy-Schwarz.
    pub ratio_b: f64,
}

/// Solution of the zero-correlation equation at a given rho.
#[derive(Debug, Clone, Copy)]
pub struct ZeroCorrSolution {
    /// Moment ratio E[R^2]/(E R)^2 that makes the truncated pair uncorrelated.
    pub b_required: f64,
    /// Gamma shape 1/(b-1) realizing that ratio, when b > 1.
    pub gamma_shape: Option<f64>,
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.is_finite() && rho.abs() < 1.0) {
        return Err(Error::InvalidParameter {
            name: "rho",
            value: rho,
            reason: "need |rho| < 1",
        });
    }
    Ok(())
}

/// The boundary angle psi* = arctan(-rho / sqrt(1 - rho^2)).
pub fn psi_star(rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok((-rho / (1.0 - rho * rho).sqrt()).atan())
}

/// The conditional expectations over an angle uniform on (psi*, pi/2):
/// h1 = E[rho cos^2 Psi + sqrt(1-rho^2) sin Psi cos Psi],
/// h2 = E[cos Psi],
/// h3 = E[rho cos Psi + sqrt(1-rho^2) sin Psi],
/// from the exact antiderivatives.
pub fn h_functions(rho: f64) -> Result<(f64, f64, f64)> {
    let psi = psi_star(rho)?;
    let root = (1.0 - rho * rho).sqrt();
    let len = FRAC_PI_2 - psi;
    let (sin_psi, cos_psi) = psi.sin_cos();
    let sin_2psi = (2.0 * psi).sin();
    let cos_2psi = (2.0 * psi).cos();
    let h1 = (rho * (FRAC_PI_4 - 0.5 * psi - 0.25 * sin_2psi) + 0.25 * root * (1.0 + cos_2psi))
        / len;
    let h2 = (1.0 - sin_psi) / len;
    let h3 = (rho * (1.0 - sin_psi) + root * cos_psi) / len;
    Ok((h1, h2, h3))
}

/// First two moments of R for the planar radial density
/// f(r) proportional to r^{dim-1} g(r^2).
///
/// Everything in this module is bivariate, so `dim` defaults to 2 at the
/// call sites; analytic formulas cover the normal, Student-t, and
/// gamma-radial kinds, the rest integrate numerically.
pub fn radial_moments(gen: &GeneratorSpec, dim: usize) -> Result<RadialMoments> {
    if dim == 2 {
        match gen.kind() {
            GeneratorKind::Normal => {
                let e_r = FRAC_PI_2.sqrt();
                return Ok(RadialMoments { e_r, e_r2: 2.0, ratio_b: 4.0 / PI });
            }
            GeneratorKind::StudentT { dof } => {
                let tau = *dof;
                if tau <= 2.0 {
                    return Err(Error::MomentDoesNotExist {
                        what: format!("E[R^2] for Student-t needs dof > 2, got {tau}"),
                    });
                }
                // ln Gamma arithmetic keeps large dof stable
                let e_r = 0.25
                    * tau.powf(1.5)
                    * PI.sqrt()
                    * (ln_gamma(0.5 * (tau - 1.0)) - ln_gamma(0.5 * (tau + 2.0))).exp();
                let e_r2 =
                    0.5 * tau * tau * (ln_gamma(0.5 * (tau - 2.0)) - ln_gamma(0.5 * (tau + 2.0))).exp();
                let ratio_b = 4.0 / PI
                    * (ln_gamma(0.5 * tau) + ln_gamma(0.5 * (tau - 2.0))
                        - 2.0 * ln_gamma(0.5 * (tau - 1.0)))
                    .exp();
                return Ok(RadialMoments { e_r, e_r2, ratio_b });
            }
            GeneratorKind::GammaRadial { shape, scale } => {
                let e_r = shape * scale;
                let e_r2 = shape * (shape + 1.0) * scale * scale;
                return Ok(RadialMoments { e_r, e_r2, ratio_b: (shape + 1.0) / shape });
            }
            _ => {}
        }
    }
    numeric_radial_moments(gen, dim)
}

fn numeric_radial_moments(gen: &GeneratorSpec, dim: usize) -> Result<RadialMoments> {
    if dim == 0 {
        return Err(Error::InvalidParameter {
            name: "dim",
            value: 0.0,
            reason: "dimension must be positive",
        });
    }
    let density = |r: f64, k: i32| {
        let lg = gen.log_g(r * r);
        if lg == f64::NEG_INFINITY {
            0.0
        } else {
            r.powi(dim as i32 - 1 + k) * lg.exp()
        }
    };
    // tabulated generators carry their own compact support
    let moment: Box<dyn Fn(i32) -> quad::QuadResult> =
        if let GeneratorKind::Tabulated { grid } = gen.kind() {
            let r_lo = grid[0].0.sqrt();
            let r_hi = grid[grid.len() - 1].0.sqrt();
            Box::new(move |k: i32| {
                quad::integrate(&|r| density(r, k), r_lo, r_hi, 1e-15, 1e-12)
            })
        } else {
            // locate the decay range of g to scale the substitution
            let mut t_hi = 1.0f64;
            let peak = (0..64)
                .map(|i| gen.log_g(0.1 * i as f64))
                .fold(f64::NEG_INFINITY, f64::max);
            while gen.log_g(t_hi) > peak - 60.0 && t_hi < 1e12 {
                t_hi *= 2.0;
            }
            if t_hi >= 1e12 {
                return Err(Error::MomentDoesNotExist {
                    what: "generator does not decay over the probed range".to_string(),
                });
            }
            let scale = t_hi.sqrt();
            Box::new(move |k: i32| {
                quad::integrate_semi_infinite(&|r| density(r, k), 0.0, scale, 1e-13, 1e-11)
            })
        };
    let m0 = moment(0);
    let m1 = moment(1);
    let m2 = moment(2);
    if !(m0.converged && m1.converged && m2.converged) || m0.value <= 0.0 {
        return Err(Error::IntegrationFailure {
            what: "radial moment integrals did not converge".to_string(),
        });
    }
    let e_r = m1.value / m0.value;
    let e_r2 = m2.value / m0.value;
    Ok(RadialMoments { e_r, e_r2, ratio_b: e_r2 / (e_r * e_r) })
}

/// Covariance of (W1, W2) for the standardized bivariate elliptical law
/// truncated at its mean: E[R^2] h1(rho) - (E R)^2 h2(rho) h3(rho).
pub fn truncated_cov_at_mean(gen: &GeneratorSpec, rho: f64) -> Result<f64> {
    let (h1, h2, h3) = h_functions(rho)?;
    let m = radial_moments(gen, 2)?;
    Ok(m.e_r2 * h1 - m.e_r * m.e_r * h2 * h3)
}

/// Moment ratio that makes the truncated pair uncorrelated at this rho,
/// with the gamma shape parameter realizing it when feasible.
pub fn solve_zero_corr(rho: f64) -> Result<ZeroCorrSolution> {
    let (h1, h2, h3) = h_functions(rho)?;
    if h1.abs() < 1e-14 {
        return Err(Error::SingularConfiguration { rho });
    }
    let b_required = h2 * h3 / h1;
    let gamma_shape = if b_required > 1.0 { Some(1.0 / (b_required - 1.0)) } else { None };
    Ok(ZeroCorrSolution { b_required, gamma_shape })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    /// Quadrature oracle for the h functions straight from their defining
    /// conditional expectations over the angle.
    fn h_oracle(rho: f64) -> (f64, f64, f64) {
        let psi = psi_star(rho).unwrap();
        let root = (1.0 - rho * rho).sqrt();
        let len = FRAC_PI_2 - psi;
        let avg = |f: &dyn Fn(f64) -> f64| {
            quad::integrate(&|x| f(x), psi, FRAC_PI_2, 1e-14, 1e-14).value / len
        };
        let h1 = avg(&|x: f64| rho * x.cos() * x.cos() + root * x.sin() * x.cos());
        let h2 = avg(&|x: f64| x.cos());
        let h3 = avg(&|x: f64| rho * x.cos() + root * x.sin());
        (h1, h2, h3)
    }

    #[test]
    fn psi_star_values() {
        assert_eq!(psi_star(0.0).unwrap(), 0.0);
        assert!((psi_star(-INV_SQRT_2).unwrap() - FRAC_PI_4).abs() < 1e-12);
        assert!((psi_star(0.5).unwrap() - (-PI / 6.0)).abs() < 1e-15);
        assert!(psi_star(1.0).is_err());
        assert!(psi_star(-1.2).is_err());
    }

    #[test]
    fn h_values_at_zero() {
        let (h1, h2, h3) = h_functions(0.0).unwrap();
        assert!((h1 - 1.0 / PI).abs() < 1e-12);
        assert!((h2 - 2.0 / PI).abs() < 1e-12);
        assert!((h3 - 2.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn h_values_at_minus_inv_sqrt2() {
        let (h1, h2, h3) = h_functions(-INV_SQRT_2).unwrap();
        let expected_h1 = 2.0_f64.sqrt() * (4.0 - PI) / (4.0 * PI);
        let expected_h23 = 2.0 * (2.0 - 2.0_f64.sqrt()) / PI;
        assert!((h1 - expected_h1).abs() < 1e-12, "h1 {h1} vs {expected_h1}");
        assert!((h2 - expected_h23).abs() < 1e-12);
        assert!((h3 - expected_h23).abs() < 1e-12);
    }

    #[test]
    fn h_closed_forms_match_quadrature() {
        for i in 0..100 {
            let rho = -0.99 + 1.98 * (i as f64 + 0.5) / 100.0;
            let (h1, h2, h3) = h_functions(rho).unwrap();
            let (o1, o2, o3) = h_oracle(rho);
            assert!((h1 - o1).abs() < 1e-12, "rho {rho}: h1 {h1} vs {o1}");
            assert!((h2 - o2).abs() < 1e-12, "rho {rho}: h2 {h2} vs {o2}");
            assert!((h3 - o3).abs() < 1e-12, "rho {rho}: h3 {h3} vs {o3}");
        }
    }

    #[test]
    fn radial_moments_normal() {
        let m = radial_moments(&GeneratorSpec::normal(), 2).unwrap();
        assert!((m.ratio_b - 4.0 / PI).abs() < 1e-14);
        assert!((m.e_r - FRAC_PI_2.sqrt()).abs() < 1e-15);
        assert!((m.e_r2 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn radial_moments_student_t4() {
        let m = radial_moments(&GeneratorSpec::student_t(4.0).unwrap(), 2).unwrap();
        assert!((m.ratio_b - 16.0 / (PI * PI)).abs() < 1e-13, "ratio {}", m.ratio_b);
        assert!((m.e_r - FRAC_PI_2).abs() < 1e-13);
        assert!((m.e_r2 - 4.0).abs() < 1e-13);
    }

    #[test]
    fn radial_moments_gamma() {
        let m = radial_moments(&GeneratorSpec::gamma_radial(2.275, 1.0).unwrap(), 2).unwrap();
        assert!((m.ratio_b - 3.275 / 2.275).abs() < 1e-14);
        let m = radial_moments(&GeneratorSpec::gamma_radial(2.0, 3.0).unwrap(), 2).unwrap();
        assert!((m.e_r - 6.0).abs() < 1e-14);
        assert!((m.e_r2 - 54.0).abs() < 1e-12);
    }

    #[test]
    fn radial_moments_student_needs_dof() {
        let err = radial_moments(&GeneratorSpec::student_t(2.0).unwrap(), 2).unwrap_err();
        assert!(matches!(err, Error::MomentDoesNotExist { .. }));
    }

    #[test]
    fn numeric_moments_cross_check_analytic() {
        // kotz(1, 1, 1/2) has the same radial law as gamma_radial(2, 1)
        let numeric =
            numeric_radial_moments(&GeneratorSpec::kotz(1.0, 1.0, 0.5).unwrap(), 2).unwrap();
        assert!((numeric.e_r - 2.0).abs() < 1e-9, "e_r {}", numeric.e_r);
        assert!((numeric.e_r2 - 6.0).abs() < 1e-8, "e_r2 {}", numeric.e_r2);
        assert!((numeric.ratio_b - 1.5).abs() < 1e-9);

        // and the numeric path agrees with the analytic one for gamma_radial
        let numeric =
            numeric_radial_moments(&GeneratorSpec::gamma_radial(2.275, 1.0).unwrap(), 2).unwrap();
        assert!((numeric.ratio_b - 3.275 / 2.275).abs() < 1e-9);
    }

    #[test]
    fn tabulated_spike_concentrates_moments() {
        let r0 = 1.7f64;
        let t0 = r0 * r0;
        let gen = GeneratorSpec::tabulated(vec![
            (t0 * 0.999, 1.0),
            (t0, 1.0),
            (t0 * 1.001, 1.0),
        ])
        .unwrap();
        let m = numeric_radial_moments(&gen, 2).unwrap();
        assert!((m.e_r - r0).abs() < 1e-3, "e_r {}", m.e_r);
        assert!((m.ratio_b - 1.0).abs() < 1e-5);
    }

    #[test]
    fn student_cov_positive_at_zero_rho() {
        for &tau in &[2.5, 3.0, 4.0, 5.0, 10.0, 20.0, 100.0] {
            let cov =
                truncated_cov_at_mean(&GeneratorSpec::student_t(tau).unwrap(), 0.0).unwrap();
            assert!(cov > 0.0, "tau {tau}: cov {cov}");
        }
    }

    #[test]
    fn normal_cov_vanishes_at_zero_rho() {
        let cov = truncated_cov_at_mean(&GeneratorSpec::normal(), 0.0).unwrap();
        assert!(cov.abs() < 1e-12, "cov {cov}");
    }

    #[test]
    fn gamma_solution_kills_covariance() {
        let sol = solve_zero_corr(-INV_SQRT_2).unwrap();
        let shape = sol.gamma_shape.unwrap();
        let gen = GeneratorSpec::gamma_radial(shape, 1.0).unwrap();
        let cov = truncated_cov_at_mean(&gen, -INV_SQRT_2).unwrap();
        assert!(cov.abs() < 1e-12, "cov {cov}");
    }

    #[test]
    fn zero_corr_closed_form() {
        let sol = solve_zero_corr(-INV_SQRT_2).unwrap();
        let b_display = 16.0 * (3.0 * 2.0_f64.sqrt() - 4.0) / (PI * (4.0 - PI));
        assert!((sol.b_required - b_display).abs() < 1e-10, "b {}", sol.b_required);
        let shape = sol.gamma_shape.unwrap();
        assert!((shape - 1.0 / (b_display - 1.0)).abs() < 1e-10);
        assert!((shape - 2.2748).abs() < 1e-3, "shape {shape}");

        let sol0 = solve_zero_corr(0.0).unwrap();
        assert!((sol0.b_required - 4.0 / PI).abs() < 1e-14);
    }

    #[test]
    fn student_ratio_decreases_to_normal_limit() {
        let mut prev = f64::INFINITY;
        for &tau in &[2.5, 3.0, 4.0, 6.0, 10.0, 20.0, 50.0, 100.0, 1000.0] {
            let m = radial_moments(&GeneratorSpec::student_t(tau).unwrap(), 2).unwrap();
            assert!(m.ratio_b > 4.0 / PI, "tau {tau}: ratio {}", m.ratio_b);
            assert!(m.ratio_b < prev, "tau {tau}: ratio {} after {prev}", m.ratio_b);
            prev = m.ratio_b;
        }
    }

    #[test]
    fn ratio_b_respects_cauchy_schwarz() {
        let mut rng = CounterRng::new(6);
        for _ in 0..20 {
            let shape = rng.uniform_range(0.3, 8.0);
            let m = radial_moments(&GeneratorSpec::gamma_radial(shape, 1.0).unwrap(), 2).unwrap();
            assert!(m.ratio_b >= 1.0);
        }
    }
}
