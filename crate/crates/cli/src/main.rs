//! Command-line front end: density evaluation, sampling, fitting, the
//! independence test, the polar constants, rectangle probabilities, the
//! verification harness, and the generator regularity checker.
//!
//! Machine-readable JSON goes to stdout, diagnostics to stderr. Exit
//! codes: 0 success, 2 domain errors or non-convergence, 64 usage.

mod data;
mod jsonfmt;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use trunc_ellipse_core::density;
use trunc_ellipse_core::inference::{self, LrtError};
use trunc_ellipse_core::model::{
    check_generator_regularity, GeneratorSpec, TruncatedEllipticalModel,
};
use trunc_ellipse_core::mvnprob::{rect_prob_seeded, RectMethod};
use trunc_ellipse_core::polar;
use trunc_ellipse_core::sampling::{sample_truncated, SampleMethod};
use trunc_ellipse_core::verify;
use trunc_ellipse_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "trunc-ellipse",
    version,
    about = "Truncated multivariate normal and elliptical distributions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the truncated density at a point
    Pdf {
        /// Model JSON file
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated coordinates of the evaluation point
        #[arg(long, allow_hyphen_values = true)]
        w: String,
    },
    /// Draw from a truncated model and write a headerless CSV
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Output CSV path (one row per draw, no header)
        #[arg(long)]
        out: PathBuf,
        /// Rejection proposal budget (0 means automatic)
        #[arg(long, default_value_t = 0)]
        max_tries: usize,
    },
    /// Maximum-likelihood fit of the truncated bivariate normal
    Fit {
        /// CSV file with header w1,w2
        #[arg(long)]
        data: PathBuf,
        /// Lower cutoff for w1 (-inf for untruncated)
        #[arg(long, allow_hyphen_values = true)]
        c1: f64,
        /// Lower cutoff for w2
        #[arg(long, allow_hyphen_values = true)]
        c2: f64,
        /// Fix rho = 0
        #[arg(long)]
        restricted: bool,
    },
    /// Likelihood-ratio test of independence (H0: rho = 0)
    Lrt {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        c1: f64,
        #[arg(long, allow_hyphen_values = true)]
        c2: f64,
    },
    /// Polar constants of the truncated-at-mean bivariate law
    Polar {
        #[arg(long, allow_hyphen_values = true)]
        rho: f64,
        /// normal | student_t:DOF | gamma:SHAPE[:SCALE] | kotz:N:BETA:S
        #[arg(long)]
        generator: String,
    },
    /// Moment ratio and gamma shape solving the zero-correlation equation
    ZeroCorr {
        #[arg(long, allow_hyphen_values = true)]
        rho: f64,
    },
    /// Multivariate normal rectangle probability P(X >= lower)
    Rectprob {
        /// Comma-separated mean vector
        #[arg(long, allow_hyphen_values = true)]
        mean: String,
        /// Covariance rows, semicolon-separated: "1,0.5;0.5,1"
        #[arg(long, allow_hyphen_values = true)]
        cov: String,
        /// Comma-separated lower bounds; -inf allowed
        #[arg(long, allow_hyphen_values = true)]
        lower: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a verification scenario from a JSON file
    Verify {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Check the generator regularity conditions
    Regularity {
        #[arg(long)]
        generator: String,
        #[arg(long, default_value_t = 100.0)]
        grid_max: f64,
        #[arg(long, default_value_t = 400)]
        n_grid: usize,
    },
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(dispatch(&args));
}

/// Route an argv to its subcommand; returns the process exit code.
fn dispatch(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            eprintln!("{e}");
            return 64;
        }
    };
    match run(cli.command) {
        Ok((value, code)) => {
            println!("{}", jsonfmt::to_string_17(&value));
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn run(cmd: Command) -> Result<(Value, i32)> {
    match cmd {
        Command::Pdf { model, w } => {
            let model = load_model(&model)?;
            let w = parse_vector(&w, false)?;
            let lp = density::log_pdf(&model, &DVector::from_vec(w))?;
            let value = json!({
                "log_pdf": if lp.is_finite() { Value::from(lp) } else { Value::Null },
                "pdf": lp.exp(),
            });
            Ok((value, 0))
        }
        Command::Sample { model, n, seed, out, max_tries } => {
            let model = load_model(&model)?;
            let budget = if max_tries == 0 { n.saturating_mul(100_000) } else { max_tries };
            let batch = sample_truncated(&model, n, seed, budget)?;
            let mut text = String::new();
            for i in 0..batch.points.nrows() {
                let row: Vec<String> = (0..batch.points.ncols())
                    .map(|j| format!("{}", batch.points[(i, j)]))
                    .collect();
                text.push_str(&row.join(","));
                text.push('\n');
            }
            std::fs::write(&out, text).map_err(|e| Error::Parse {
                line: 0,
                message: format!("{}: {e}", out.display()),
            })?;
            let value = json!({
                "n": batch.points.nrows(),
                "p": batch.points.ncols(),
                "seed": seed,
                "method": match batch.method {
                    SampleMethod::Rejection => "rejection",
                    SampleMethod::Gibbs => "gibbs",
                },
                "acceptance_rate": batch.acceptance_rate,
                "out": out.display().to_string(),
            });
            Ok((value, 0))
        }
        Command::Fit { data, c1, c2, restricted } => {
            let ds = data::load_csv(&data)?;
            eprintln!("loaded {} rows from {}", ds.n, ds.source_path);
            let report = inference::fit_mle(&ds.rows, [c1, c2], restricted)?;
            let code = if report.converged { 0 } else { 2 };
            Ok((fit_to_json(&report, None, None), code))
        }
        Command::Lrt { data, c1, c2 } => {
            let ds = data::load_csv(&data)?;
            eprintln!("loaded {} rows from {}", ds.n, ds.source_path);
            let res = inference::lrt_independence(&ds.rows, [c1, c2]).map_err(|e| match e {
                LrtError::NonConvergence { fit_full, .. } => {
                    Error::NonConvergence { best_loglik: fit_full.loglik }
                }
                LrtError::Other(err) => err,
            })?;
            let total_iters = res.fit_full.n_iterations + res.fit_null.n_iterations;
            let mut value = fit_to_json(&res.fit_full, Some(res.statistic), Some(res.p_value));
            value["n_iterations"] = json!(total_iters);
            value["converged"] = json!(res.fit_full.converged && res.fit_null.converged);
            Ok((value, 0))
        }
        Command::Polar { rho, generator } => {
            let gen = parse_generator(&generator)?;
            let psi = polar::psi_star(rho)?;
            let (h1, h2, h3) = polar::h_functions(rho)?;
            let moments = polar::radial_moments(&gen, 2)?;
            let cov = polar::truncated_cov_at_mean(&gen, rho)?;
            let value = json!({
                "psi_star": psi,
                "h1": h1,
                "h2": h2,
                "h3": h3,
                "b": moments.ratio_b,
                "cov": cov,
            });
            Ok((value, 0))
        }
        Command::ZeroCorr { rho } => {
            let sol = polar::solve_zero_corr(rho)?;
            let value = json!({
                "b_required": sol.b_required,
                "gamma_shape": sol.gamma_shape.map(Value::from).unwrap_or(Value::Null),
            });
            Ok((value, 0))
        }
        Command::Rectprob { mean, cov, lower, seed } => {
            let mean = parse_vector(&mean, false)?;
            let lower = parse_vector(&lower, true)?;
            let sigma = parse_matrix(&cov)?;
            let res = rect_prob_seeded(
                &DVector::from_vec(mean),
                &sigma,
                &DVector::from_vec(lower),
                seed,
            )?;
            let value = json!({
                "value": res.value,
                "abs_error_estimate": res.abs_error_estimate,
                "method": match res.method {
                    RectMethod::ClosedForm1d => "closed_form_1d",
                    RectMethod::Quadrature2d3d => "quadrature_2d_3d",
                    RectMethod::Qmc => "qmc",
                },
                "n_evaluations": res.n_evaluations,
                "converged": res.converged,
            });
            Ok((value, 0))
        }
        Command::Verify { scenario, seed } => {
            let report = run_scenario(&scenario, seed)?;
            let value = serde_json::to_value(&report).expect("report serializes");
            Ok((value, 0))
        }
        Command::Regularity { generator, grid_max, n_grid } => {
            let gen = parse_generator(&generator)?;
            let report = check_generator_regularity(&gen, grid_max, n_grid)?;
            let value = serde_json::to_value(report).expect("report serializes");
            Ok((value, 0))
        }
    }
}

fn fit_to_json(
    report: &inference::FitReport,
    statistic: Option<f64>,
    p_value: Option<f64>,
) -> Value {
    let mut value = json!({
        "theta_hat": {
            "mu1": report.theta_hat.mu1,
            "mu2": report.theta_hat.mu2,
            "sigma1": report.theta_hat.sigma1,
            "sigma2": report.theta_hat.sigma2,
            "rho": report.theta_hat.rho,
        },
        "loglik": report.loglik,
        "converged": report.converged,
        "n_iterations": report.n_iterations,
        "restricted": report.restricted,
    });
    if let Some(s) = statistic {
        value["statistic"] = json!(s);
    }
    if let Some(p) = p_value {
        value["p_value"] = json!(p);
    }
    value
}

fn load_model(path: &PathBuf) -> Result<TruncatedEllipticalModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    TruncatedEllipticalModel::from_json(&text)
}

/// Parse "a,b,c"; `allow_neg_inf` admits the string -inf per entry.
fn parse_vector(text: &str, allow_neg_inf: bool) -> Result<Vec<f64>> {
    text.split(',')
        .map(|part| {
            let part = part.trim();
            if part == "-inf" {
                if allow_neg_inf {
                    return Ok(f64::NEG_INFINITY);
                }
                return Err(Error::Parse {
                    line: 0,
                    message: "-inf is not allowed here".to_string(),
                });
            }
            let v: f64 = part.parse().map_err(|_| Error::Parse {
                line: 0,
                message: format!("cannot parse {part:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("non-finite value {part:?}"),
                });
            }
            Ok(v)
        })
        .collect()
}

/// Parse "1,0.5;0.5,1" into a square matrix.
fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|row| parse_vector(row, false))
        .collect::<Result<_>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Parse {
            line: 0,
            message: "covariance matrix must be square".to_string(),
        });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Parse a generator spec string.
fn parse_generator(text: &str) -> Result<GeneratorSpec> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| -> Result<f64> {
        s.parse().map_err(|_| Error::Parse {
            line: 0,
            message: format!("cannot parse {s:?} as a number"),
        })
    };
    match parts.as_slice() {
        ["normal"] => Ok(GeneratorSpec::normal()),
        ["student_t", dof] | ["t", dof] => GeneratorSpec::student_t(num(dof)?),
        ["gamma", shape] | ["gamma_radial", shape] => GeneratorSpec::gamma_radial(num(shape)?, 1.0),
        ["gamma", shape, scale] | ["gamma_radial", shape, scale] => {
            GeneratorSpec::gamma_radial(num(shape)?, num(scale)?)
        }
        ["kotz", n, beta, s] => GeneratorSpec::kotz(num(n)?, num(beta)?, num(s)?),
        _ => Err(Error::Parse {
            line: 0,
            message: format!(
                "unrecognized generator {text:?}; expected normal, student_t:DOF, \
                 gamma:SHAPE[:SCALE], or kotz:N:BETA:S"
            ),
        }),
    }
}

// ---------------------------------------------------------------------------
// Verification scenario files
// ---------------------------------------------------------------------------

#[derive(serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ScenarioDoc {
    Theorem1 {
        sigma: Vec<Vec<f64>>,
        mu: Vec<f64>,
        c: Vec<Value>,
        p1: usize,
        n: usize,
        replicates: usize,
        alpha: f64,
    },
    Corollary1 {
        generator: GeneratorSpec,
        rho: f64,
        c: Vec<Value>,
        n: usize,
    },
}

fn parse_bound(v: &Value) -> Result<f64> {
    match v {
        Value::Number(x) => x.as_f64().ok_or(Error::Parse {
            line: 0,
            message: "bound out of range".to_string(),
        }),
        Value::String(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
        other => Err(Error::Parse {
            line: 0,
            message: format!("bound entries must be numbers or \"-inf\", found {other}"),
        }),
    }
}

fn run_scenario(path: &PathBuf, seed: u64) -> Result<verify::VerificationReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    let doc: ScenarioDoc = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    match doc {
        ScenarioDoc::Theorem1 { sigma, mu, c, p1, n, replicates, alpha } => {
            let p = mu.len();
            if sigma.len() != p || sigma.iter().any(|r| r.len() != p) || c.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: sigma.len(),
                    what: "scenario",
                });
            }
            let sigma = DMatrix::from_fn(p, p, |i, j| sigma[i][j]);
            let c = c.iter().map(parse_bound).collect::<Result<Vec<f64>>>()?;
            verify::verify_theorem1(
                &sigma,
                &DVector::from_vec(mu),
                &DVector::from_vec(c),
                p1,
                n,
                replicates,
                alpha,
                seed,
            )
        }
        ScenarioDoc::Corollary1 { generator, rho, c, n } => {
            let c = c.iter().map(parse_bound).collect::<Result<Vec<f64>>>()?;
            verify::verify_corollary1(&generator, rho, &DVector::from_vec(c), n, seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_parsing() {
        assert_eq!(parse_vector("1,2.5", false).unwrap(), vec![1.0, 2.5]);
        assert_eq!(parse_vector("0,-inf", true).unwrap(), vec![0.0, f64::NEG_INFINITY]);
        assert!(parse_vector("0,-inf", false).is_err());
        assert!(parse_vector("abc", false).is_err());
    }

    #[test]
    fn matrix_parsing() {
        let m = parse_matrix("1,0.5;0.5,1").unwrap();
        assert_eq!(m[(0, 1)], 0.5);
        assert!(parse_matrix("1,2;3").is_err());
    }

    #[test]
    fn generator_parsing() {
        assert!(parse_generator("normal").is_ok());
        assert!(parse_generator("student_t:4").is_ok());
        assert!(parse_generator("gamma:2.275").is_ok());
        assert!(parse_generator("kotz:1:1:0.5").is_ok());
        assert!(parse_generator("cauchy").is_err());
    }
}
