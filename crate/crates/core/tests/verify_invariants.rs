//! Harness-level invariants: power grows with dependence strength, and
//! the zero-correlation construction is dependent despite being
//! uncorrelated.

use nalgebra::{DMatrix, DVector};

use trunc_ellipse_core::model::GeneratorSpec;
use trunc_ellipse_core::polar::solve_zero_corr;
use trunc_ellipse_core::verify::{
    sampled_covariance, verify_corollary1, verify_theorem1, Decision,
};

#[test]
fn rejection_rate_monotone_in_rho() {
    let n = 300;
    let replicates = 200;
    let mut prev = -1.0f64;
    for (i, rho) in [0.0, 0.2, 0.5, 0.8].into_iter().enumerate() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let report = verify_theorem1(
            &sigma,
            &DVector::zeros(2),
            &DVector::zeros(2),
            1,
            n,
            replicates,
            0.05,
            60_000 + i as u64,
        )
        .unwrap();
        assert!(
            report.replicate_rejection_rate >= prev,
            "rho {rho}: rate {} dropped below {prev}",
            report.replicate_rejection_rate
        );
        prev = report.replicate_rejection_rate;
    }
    assert!(prev > 0.95, "rate at rho = 0.8 is only {prev}");
}

#[test]
fn student_t_dependence_at_scale() {
    // rho = 0 but the shared radial variable couples the coordinates
    let gen = GeneratorSpec::student_t(4.0).unwrap();
    let n = 100_000;
    let (cov, se) = sampled_covariance(&gen, 0.0, n, 5).unwrap();
    assert!(cov > 4.0 * se, "covariance {cov} not above 4 x {se}");
    let report = verify_corollary1(&gen, 0.0, &DVector::zeros(2), n, 5).unwrap();
    assert_eq!(report.decision, Decision::Reject, "p {}", report.p_value);
    assert!(report.p_value < 0.01, "p {}", report.p_value);
}

#[test]
fn zero_correlation_construction_is_still_dependent() {
    let rho = -std::f64::consts::FRAC_1_SQRT_2;
    let shape = solve_zero_corr(rho).unwrap().gamma_shape.unwrap();
    let gen = GeneratorSpec::gamma_radial(shape, 1.0).unwrap();
    let n = 100_000;
    let (cov, se) = sampled_covariance(&gen, rho, n, 9).unwrap();
    assert!(cov.abs() < 4.0 * se, "covariance {cov} outside 4 x {se} of zero");
    let report = verify_corollary1(&gen, rho, &DVector::zeros(2), n, 9).unwrap();
    assert!(report.p_value < 0.01, "distance correlation p {}", report.p_value);
    assert!(!report.hypotheses_met, "gamma radial generators sit outside R3");
}
