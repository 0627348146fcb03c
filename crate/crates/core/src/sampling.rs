//! Samplers: the stochastic representation for elliptical laws, rejection
//! truncation with a Gibbs fallback, and the Gibbs sampler itself.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{GeneratorKind, GeneratorSpec, TruncatedEllipticalModel};
use crate::mvnprob::rect_prob;
use crate::quad;
use crate::rng::CounterRng;

/// How a truncated batch was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMethod {
    Rejection,
    Gibbs,
}

/// A batch of draws from a truncated model; every row is >= c.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    /// n x p matrix, one draw per row.
    pub points: DMatrix<f64>,
    /// Accepted fraction on the rejection path, 1 for Gibbs.
    pub acceptance_rate: f64,
    pub seed: u64,
    pub method: SampleMethod,
}

/// Rejection budget exhausted; carries the rows that were drawn.
#[derive(Debug, Clone)]
pub struct PartialBatch {
    pub drawn: SampleBatch,
    pub requested: usize,
}

const CHUNK: usize = 8192;
const GIBBS_SWITCH_ACCEPTANCE: f64 = 1e-3;
const RADIAL_KNOTS: usize = 4096;

/// Monotone cubic interpolant (Fritsch-Carlson), used to invert the
/// tabulated radial CDF without overshoot.
struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ms: Vec<f64>,
}

impl MonotoneCubic {
    fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let n = xs.len();
        assert!(n >= 2);
        let mut d = vec![0.0f64; n - 1];
        for i in 0..n - 1 {
            d[i] = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
        }
        let mut ms = vec![0.0f64; n];
        ms[0] = d[0];
        ms[n - 1] = d[n - 2];
        for i in 1..n - 1 {
            ms[i] = if d[i - 1] * d[i] <= 0.0 { 0.0 } else { 0.5 * (d[i - 1] + d[i]) };
        }
        for i in 0..n - 1 {
            if d[i] == 0.0 {
                ms[i] = 0.0;
                ms[i + 1] = 0.0;
                continue;
            }
            let a = ms[i] / d[i];
            let b = ms[i + 1] / d[i];
            let s = a * a + b * b;
            if s > 9.0 {
                let t = 3.0 / s.sqrt();
                ms[i] = t * a * d[i];
                ms[i + 1] = t * b * d[i];
            }
        }
        MonotoneCubic { xs, ys, ms }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&v| v <= x) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.ms[i] + h01 * self.ys[i + 1] + h11 * h * self.ms[i + 1]
    }
}

/// Inverse-CDF table for the planar radial density f(r) ~ r g(r^2).
struct RadialTable {
    inverse: MonotoneCubic,
}

impl RadialTable {
    fn build(gen: &GeneratorSpec) -> Result<Self> {
        let density = |r: f64| {
            let lg = gen.log_g(r * r);
            if lg == f64::NEG_INFINITY {
                0.0
            } else {
                r * lg.exp()
            }
        };

        // support of the radial density
        let (r_lo, r_hi) = if let GeneratorKind::Tabulated { grid } = gen.kind() {
            (grid[0].0.sqrt(), grid[grid.len() - 1].0.sqrt())
        } else {
            let mut r = 1.0f64;
            let mut total = quad::integrate(&density, 0.0, r, 1e-300, 1e-10).value;
            let mut doublings = 0;
            loop {
                let ext = quad::integrate(&density, r, 2.0 * r, 1e-300, 1e-10).value;
                if total > 0.0 && ext <= 1e-12 * (total + ext) {
                    break;
                }
                total += ext;
                r *= 2.0;
                doublings += 1;
                if doublings > 60 {
                    return Err(Error::IntegrationFailure {
                        what: "radial CDF tabulation failed to reach 1 - 1e-12 of the mass"
                            .to_string(),
                    });
                }
            }
            (0.0, 2.0 * r)
        };

        // log-spaced knots with the cumulative mass at each
        let start = if r_lo > 0.0 { r_lo } else { r_hi * 1e-9 };
        let ratio = (r_hi / start).ln();
        let mut rs = Vec::with_capacity(RADIAL_KNOTS + 1);
        rs.push(0.0f64.max(r_lo));
        for k in 0..RADIAL_KNOTS {
            rs.push(start * (ratio * (k + 1) as f64 / RADIAL_KNOTS as f64).exp());
        }
        let mut cdf = Vec::with_capacity(rs.len());
        cdf.push(0.0);
        let mut acc = 0.0;
        for w in rs.windows(2) {
            let (v, _) = quad::panel(&density, w[0], w[1]);
            acc += v.max(0.0);
            cdf.push(acc);
        }
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(Error::IntegrationFailure {
                what: "radial density integrates to zero or overflows".to_string(),
            });
        }
        // normalize and strip flat spots so the inverse is well defined
        let mut xs = Vec::with_capacity(cdf.len());
        let mut ys = Vec::with_capacity(cdf.len());
        let mut last = -1.0f64;
        for (u, r) in cdf.iter().map(|c| c / acc).zip(rs.iter()) {
            if u > last {
                xs.push(u);
                ys.push(*r);
                last = u;
            }
        }
        if xs.len() < 2 {
            return Err(Error::IntegrationFailure {
                what: "radial CDF is degenerate".to_string(),
            });
        }
        Ok(RadialTable { inverse: MonotoneCubic::new(xs, ys) })
    }

    fn sample(&self, rng: &mut CounterRng) -> f64 {
        self.inverse.eval(rng.uniform())
    }
}

enum RadialSampler {
    Normal,
    StudentT { dof: f64 },
    Gamma { shape: f64, scale: f64 },
    Table(RadialTable),
}

impl RadialSampler {
    fn for_generator(gen: &GeneratorSpec) -> Result<Self> {
        Ok(match gen.kind() {
            GeneratorKind::Normal => RadialSampler::Normal,
            GeneratorKind::StudentT { dof } => RadialSampler::StudentT { dof: *dof },
            GeneratorKind::GammaRadial { shape, scale } => {
                RadialSampler::Gamma { shape: *shape, scale: *scale }
            }
            GeneratorKind::Kotz { .. } | GeneratorKind::Tabulated { .. } => {
                RadialSampler::Table(RadialTable::build(gen)?)
            }
        })
    }
}

struct EllipticalSampler {
    mu: DVector<f64>,
    chol_l: DMatrix<f64>,
    radial: RadialSampler,
    p: usize,
}

impl EllipticalSampler {
    fn new(gen: &GeneratorSpec, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<Self> {
        let p = mu.len();
        if !gen.is_normal() && p != 2 {
            return Err(Error::InvalidParameter {
                name: "p",
                value: p as f64,
                reason: "non-normal generators sample the bivariate representation only",
            });
        }
        let chol = nalgebra::Cholesky::new(sigma.clone()).ok_or_else(|| {
            Error::NotPositiveDefinite {
                eigenvalue: sigma
                    .clone()
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min),
            }
        })?;
        Ok(EllipticalSampler { mu: mu.clone(), chol_l: chol.l(), radial: RadialSampler::for_generator(gen)?, p })
    }

    fn draw_into(&self, rng: &mut CounterRng, out: &mut [f64]) {
        match &self.radial {
            RadialSampler::Normal => {
                // mu + L z is the representation with R^2 ~ chi-square(p)
                let z = DVector::from_fn(self.p, |_, _| rng.normal());
                let x = &self.mu + &self.chol_l * z;
                out.copy_from_slice(x.as_slice());
            }
            RadialSampler::StudentT { dof } => {
                // scale mixture: z sqrt(dof / V), V ~ chi-square(dof)
                let v = rng.chi_square(*dof);
                let f = (dof / v).sqrt();
                let z = DVector::from_fn(self.p, |_, _| rng.normal() * f);
                let x = &self.mu + &self.chol_l * z;
                out.copy_from_slice(x.as_slice());
            }
            RadialSampler::Gamma { shape, scale } => {
                let r = rng.gamma(*shape, *scale);
                let (u1, u2) = rng.unit_circle();
                let u = DVector::from_vec(vec![r * u1, r * u2]);
                let x = &self.mu + &self.chol_l * u;
                out.copy_from_slice(x.as_slice());
            }
            RadialSampler::Table(table) => {
                let r = table.sample(rng);
                let (u1, u2) = rng.unit_circle();
                let u = DVector::from_vec(vec![r * u1, r * u2]);
                let x = &self.mu + &self.chol_l * u;
                out.copy_from_slice(x.as_slice());
            }
        }
    }
}

/// Draws from the untruncated elliptical law R L U + mu.
///
/// The normal kind accepts any dimension; other generators use the planar
/// representation, so p must be 2.
pub fn sample_untruncated_elliptical(
    gen: &GeneratorSpec,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    n: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let sampler = EllipticalSampler::new(gen, mu, sigma)?;
    let p = sampler.p;
    let n_chunks = n.div_ceil(CHUNK);
    let rows: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let quota = CHUNK.min(n - chunk * CHUNK);
            let mut rng = CounterRng::substream(seed, chunk as u64);
            let mut flat = vec![0.0f64; quota * p];
            for row in flat.chunks_mut(p) {
                sampler.draw_into(&mut rng, row);
            }
            flat
        })
        .collect();
    let mut points = DMatrix::zeros(n, p);
    let mut r = 0usize;
    for flat in rows {
        for row in flat.chunks(p) {
            for (j, v) in row.iter().enumerate() {
                points[(r, j)] = *v;
            }
            r += 1;
        }
    }
    Ok(points)
}

/// Failure modes of truncated sampling; the budget case keeps the rows
/// that were drawn.
#[derive(Debug)]
pub enum SampleFailure {
    Partial(PartialBatch),
    Fatal(Error),
}

/// Rejection sampling of the truncated law, keeping partial results on
/// budget exhaustion.
///
/// Normal models with an estimated acceptance probability below 1e-3
/// switch to the Gibbs sampler automatically.
pub fn try_sample_truncated(
    model: &TruncatedEllipticalModel,
    n: usize,
    seed: u64,
    max_tries: usize,
) -> std::result::Result<SampleBatch, SampleFailure> {
    sample_truncated_inner(model, n, seed, max_tries)
}

/// Rejection sampling of the truncated law.
pub fn sample_truncated(
    model: &TruncatedEllipticalModel,
    n: usize,
    seed: u64,
    max_tries: usize,
) -> Result<SampleBatch> {
    match sample_truncated_inner(model, n, seed, max_tries) {
        Ok(batch) => Ok(batch),
        Err(SampleFailure::Partial(p)) => Err(Error::SamplingBudgetExhausted {
            requested: p.requested,
            drawn: p.drawn.points.nrows(),
        }),
        Err(SampleFailure::Fatal(e)) => Err(e),
    }
}

fn sample_truncated_inner(
    model: &TruncatedEllipticalModel,
    n: usize,
    seed: u64,
    max_tries: usize,
) -> std::result::Result<SampleBatch, SampleFailure> {
    let p = model.p();
    if model.generator().is_normal() {
        let rect = rect_prob(model.mu(), model.sigma(), model.c()).map_err(SampleFailure::Fatal)?;
        if rect.value < GIBBS_SWITCH_ACCEPTANCE {
            return gibbs_truncated_normal(model, n, 1000, 5, seed).map_err(SampleFailure::Fatal);
        }
    }
    let sampler = EllipticalSampler::new(model.generator(), model.mu(), model.sigma())
        .map_err(SampleFailure::Fatal)?;
    let c = model.c();
    let n_chunks = n.div_ceil(CHUNK);
    let results: Vec<(Vec<f64>, usize)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let quota = CHUNK.min(n - chunk * CHUNK);
            let budget = ((max_tries as u128 * quota as u128 / n.max(1) as u128) as usize).max(quota);
            let mut rng = CounterRng::substream(seed, chunk as u64);
            let mut flat = Vec::with_capacity(quota * p);
            let mut row = vec![0.0f64; p];
            let mut tries = 0usize;
            let mut accepted = 0usize;
            while accepted < quota && tries < budget {
                sampler.draw_into(&mut rng, &mut row);
                tries += 1;
                if row.iter().zip(c.iter()).all(|(x, ci)| x >= ci) {
                    flat.extend_from_slice(&row);
                    accepted += 1;
                }
            }
            (flat, tries)
        })
        .collect();

    let total_tries: usize = results.iter().map(|(_, t)| t).sum();
    let total_accepted: usize = results.iter().map(|(f, _)| f.len() / p).sum();
    let mut points = DMatrix::zeros(total_accepted, p);
    let mut r = 0usize;
    for (flat, _) in &results {
        for row in flat.chunks(p) {
            for (j, v) in row.iter().enumerate() {
                points[(r, j)] = *v;
            }
            r += 1;
        }
    }
    let acceptance_rate = total_accepted as f64 / total_tries.max(1) as f64;
    let batch = SampleBatch { points, acceptance_rate, seed, method: SampleMethod::Rejection };
    if total_accepted < n {
        return Err(SampleFailure::Partial(PartialBatch { drawn: batch, requested: n }));
    }
    Ok(batch)
}

/// Coordinate-wise Gibbs sampler for truncated normal models.
///
/// The full conditionals come from the quadratic-form decomposition:
/// w_i | w_{-i} is a univariate normal with precision sigma^{-1}_{ii},
/// truncated to [c_i, inf). Deterministic given the seed.
pub fn gibbs_truncated_normal(
    model: &TruncatedEllipticalModel,
    n: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if !model.generator().is_normal() {
        return Err(Error::UnsupportedGenerator { op: "gibbs_truncated_normal" });
    }
    let thin = thin.max(1);
    let p = model.p();
    let precision = model.cholesky().inverse();
    let mu = model.mu();
    let c = model.c();
    let mut rng = CounterRng::substream(seed, u64::MAX);
    let mut x = DVector::from_fn(p, |i, _| if c[i].is_finite() { mu[i].max(c[i]) } else { mu[i] });
    let mut points = DMatrix::zeros(n, p);
    let sds: Vec<f64> = (0..p).map(|i| (1.0 / precision[(i, i)]).sqrt()).collect();

    let sweep = |x: &mut DVector<f64>, rng: &mut CounterRng| {
        for i in 0..p {
            let mut dot = 0.0;
            for j in 0..p {
                if j != i {
                    dot += precision[(i, j)] * (x[j] - mu[j]);
                }
            }
            let m = mu[i] - dot / precision[(i, i)];
            let alpha = if c[i] == f64::NEG_INFINITY { f64::NEG_INFINITY } else { (c[i] - m) / sds[i] };
            x[i] = m + sds[i] * rng.truncated_std_normal(alpha);
        }
    };

    for _ in 0..burn_in {
        sweep(&mut x, &mut rng);
    }
    for k in 0..n {
        for _ in 0..thin {
            sweep(&mut x, &mut rng);
        }
        for j in 0..p {
            points[(k, j)] = x[j];
        }
    }
    Ok(SampleBatch { points, acceptance_rate: 1.0, seed, method: SampleMethod::Gibbs })
}
