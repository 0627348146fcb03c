//! Domain types: truncated elliptical models, density generators, and
//! block partitions, plus the generator regularity checker.

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Density generator families.
///
/// Every generator is kept unnormalized; densities always divide by the
/// computed normalizing constant, so only the shape of `g` matters here.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorKind {
    /// g(t) = exp(-t/2)
    Normal,
    /// g(t) = (1 + t/dof)^{-(dof+2)/2}, the bivariate Student-t generator
    StudentT { dof: f64 },
    /// g(t) = t^{n-1} exp(-beta t^s)
    Kotz { n: f64, beta: f64, s: f64 },
    /// Generator whose radial variable R (in the plane) is Gamma(shape, scale):
    /// g(t) = t^{(shape-2)/2} exp(-sqrt(t)/scale)
    GammaRadial { shape: f64, scale: f64 },
    /// Piecewise log-linear interpolation of sampled (t, g(t)) pairs
    Tabulated { grid: Vec<(f64, f64)> },
}

/// A validated generator with `log g` and `(log g)'` evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    kind: GeneratorKind,
    // ln g at the tabulated knots, parallel to the grid
    tab_log: Vec<f64>,
}

impl GeneratorSpec {
    pub fn normal() -> Self {
        GeneratorSpec { kind: GeneratorKind::Normal, tab_log: Vec::new() }
    }

    pub fn student_t(dof: f64) -> Result<Self> {
        if !(dof > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dof",
                value: dof,
                reason: "degrees of freedom must be positive",
            });
        }
        Ok(GeneratorSpec { kind: GeneratorKind::StudentT { dof }, tab_log: Vec::new() })
    }

    pub fn kotz(n: f64, beta: f64, s: f64) -> Result<Self> {
        if !n.is_finite() {
            return Err(Error::InvalidParameter { name: "n", value: n, reason: "must be finite" });
        }
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter {
                name: "beta",
                value: beta,
                reason: "must be positive",
            });
        }
        if !(s > 0.0) {
            return Err(Error::InvalidParameter { name: "s", value: s, reason: "must be positive" });
        }
        Ok(GeneratorSpec { kind: GeneratorKind::Kotz { n, beta, s }, tab_log: Vec::new() })
    }

    pub fn gamma_radial(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0) {
            return Err(Error::InvalidParameter {
                name: "shape",
                value: shape,
                reason: "must be positive",
            });
        }
        if !(scale > 0.0) {
            return Err(Error::InvalidParameter {
                name: "scale",
                value: scale,
                reason: "must be positive",
            });
        }
        Ok(GeneratorSpec { kind: GeneratorKind::GammaRadial { shape, scale }, tab_log: Vec::new() })
    }

    /// Tabulated generator. The t grid must be strictly increasing with
    /// positive g values (condition R1 on the tabulated domain).
    pub fn tabulated(grid: Vec<(f64, f64)>) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::InvalidParameter {
                name: "grid",
                value: grid.len() as f64,
                reason: "need at least two knots",
            });
        }
        for w in grid.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::NonMonotoneGrid);
            }
        }
        if grid.iter().any(|&(t, g)| !(t >= 0.0) || !(g > 0.0) || !g.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "grid",
                value: f64::NAN,
                reason: "knots need t >= 0 and finite g > 0",
            });
        }
        let tab_log = grid.iter().map(|&(_, g)| g.ln()).collect();
        Ok(GeneratorSpec { kind: GeneratorKind::Tabulated { grid }, tab_log })
    }

    pub fn kind(&self) -> &GeneratorKind {
        &self.kind
    }

    pub fn is_normal(&self) -> bool {
        matches!(self.kind, GeneratorKind::Normal)
    }

    /// ln g(t) for t >= 0; -inf where g vanishes (outside a tabulated grid).
    pub fn log_g(&self, t: f64) -> f64 {
        match &self.kind {
            GeneratorKind::Normal => -0.5 * t,
            GeneratorKind::StudentT { dof } => -0.5 * (dof + 2.0) * (t / dof).ln_1p(),
            GeneratorKind::Kotz { n, beta, s } => {
                if t == 0.0 {
                    if *n > 1.0 {
                        return f64::NEG_INFINITY;
                    }
                    if *n < 1.0 {
                        return f64::INFINITY;
                    }
                    return 0.0;
                }
                (n - 1.0) * t.ln() - beta * t.powf(*s)
            }
            GeneratorKind::GammaRadial { shape, scale } => {
                if t == 0.0 {
                    if *shape > 2.0 {
                        return f64::NEG_INFINITY;
                    }
                    if *shape < 2.0 {
                        return f64::INFINITY;
                    }
                    return 0.0;
                }
                0.5 * (shape - 2.0) * t.ln() - t.sqrt() / scale
            }
            GeneratorKind::Tabulated { grid } => {
                let first = grid[0].0;
                let last = grid[grid.len() - 1].0;
                if t < first || t > last {
                    return f64::NEG_INFINITY;
                }
                let idx = grid.partition_point(|&(tk, _)| tk <= t).min(grid.len() - 1);
                let i = idx.saturating_sub(1).min(grid.len() - 2);
                let (t0, _) = grid[i];
                let (t1, _) = grid[i + 1];
                let w = (t - t0) / (t1 - t0);
                self.tab_log[i] * (1.0 - w) + self.tab_log[i + 1] * w
            }
        }
    }

    /// d/dt ln g(t) for t > 0.
    pub fn dlog_g(&self, t: f64) -> f64 {
        match &self.kind {
            GeneratorKind::Normal => -0.5,
            GeneratorKind::StudentT { dof } => -0.5 * (dof + 2.0) / (dof + t),
            GeneratorKind::Kotz { n, beta, s } => (n - 1.0) / t - beta * s * t.powf(s - 1.0),
            GeneratorKind::GammaRadial { shape, scale } => {
                0.5 * (shape - 2.0) / t - 0.5 / (scale * t.sqrt())
            }
            GeneratorKind::Tabulated { grid } => {
                let first = grid[0].0;
                let last = grid[grid.len() - 1].0;
                if t < first || t > last {
                    return 0.0;
                }
                let idx = grid.partition_point(|&(tk, _)| tk <= t).min(grid.len() - 1);
                let i = idx.saturating_sub(1).min(grid.len() - 2);
                let (t0, _) = grid[i];
                let (t1, _) = grid[i + 1];
                (self.tab_log[i + 1] - self.tab_log[i]) / (t1 - t0)
            }
        }
    }
}

/// A truncated elliptical model: location `mu`, scale matrix `sigma`
/// (symmetric positive definite), truncation point `c` (entries may be
/// -inf for untruncated coordinates), and a density generator.
///
/// Immutable after construction; the Cholesky factor of `sigma` and the
/// normalizing constant are cached on the instance.
#[derive(Debug, Clone)]
pub struct TruncatedEllipticalModel {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    c: DVector<f64>,
    generator: GeneratorSpec,
    chol: Cholesky<f64, Dyn>,
    log_det_sigma: f64,
    pub(crate) log_norm_const: OnceLock<Result<f64>>,
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Build and validate a truncated elliptical model.
///
/// `sigma` must be symmetric within 1e-12 relative tolerance; it is
/// symmetrized as (S + S')/2 before the positive-definiteness check.
pub fn build_model(
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    c: DVector<f64>,
    generator: GeneratorSpec,
) -> Result<TruncatedEllipticalModel> {
    let p = mu.len();
    if sigma.nrows() != p || sigma.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: sigma.nrows().max(sigma.ncols()),
            what: "sigma",
        });
    }
    if c.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: c.len(), what: "c" });
    }
    if mu.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "mu",
            value: f64::NAN,
            reason: "entries must be finite",
        });
    }
    if c.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::InvalidParameter {
            name: "c",
            value: f64::NAN,
            reason: "entries must be finite or -inf",
        });
    }
    if sigma.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            value: f64::NAN,
            reason: "entries must be finite",
        });
    }
    let scale = sigma.iter().fold(0.0_f64, |m, &x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let mut max_asym = 0.0_f64;
    for i in 0..p {
        for j in (i + 1)..p {
            max_asym = max_asym.max((sigma[(i, j)] - sigma[(j, i)]).abs());
        }
    }
    if max_asym > 1e-12 * scale {
        return Err(Error::NotSymmetric { max_asymmetry: max_asym });
    }
    let sym = (&sigma + sigma.transpose()) * 0.5;
    let lambda_min = min_eigenvalue(&sym);
    if !(lambda_min > 0.0) {
        return Err(Error::NotPositiveDefinite { eigenvalue: lambda_min });
    }
    let chol = Cholesky::new(sym.clone())
        .ok_or(Error::NotPositiveDefinite { eigenvalue: lambda_min })?;
    let log_det_sigma = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(TruncatedEllipticalModel {
        mu,
        sigma: sym,
        c,
        generator,
        chol,
        log_det_sigma,
        log_norm_const: OnceLock::new(),
    })
}

impl TruncatedEllipticalModel {
    pub fn p(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn generator(&self) -> &GeneratorSpec {
        &self.generator
    }

    pub fn log_det_sigma(&self) -> f64 {
        self.log_det_sigma
    }

    pub(crate) fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// Lower Cholesky factor of sigma.
    pub fn chol_lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// True when `w >= c` componentwise.
    pub fn in_support(&self, w: &DVector<f64>) -> bool {
        w.len() == self.p() && w.iter().zip(self.c.iter()).all(|(wi, ci)| wi >= ci)
    }

    /// Marginal standard deviations sqrt(diag sigma).
    pub fn sds(&self) -> DVector<f64> {
        DVector::from_iterator(self.p(), self.sigma.diagonal().iter().map(|v| v.sqrt()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        doc.into_model()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelDoc::from_model(self)).expect("model serializes")
    }
}

/// Block partition of a model's scale matrix with the Schur complement
/// sigma22.1 = sigma22 - sigma21 sigma11^{-1} sigma12.
#[derive(Debug, Clone)]
pub struct PartitionSpec {
    p1: usize,
    p2: usize,
    sigma11: DMatrix<f64>,
    sigma12: DMatrix<f64>,
    sigma21: DMatrix<f64>,
    sigma22: DMatrix<f64>,
    schur: DMatrix<f64>,
    chol11: Cholesky<f64, Dyn>,
    chol_schur: Cholesky<f64, Dyn>,
}

/// Partition a model's scale matrix after the first `p1` coordinates.
///
/// The Schur complement is computed through a solve against sigma11's
/// Cholesky factor rather than an explicit inverse.
pub fn partition(model: &TruncatedEllipticalModel, p1: usize) -> Result<PartitionSpec> {
    let p = model.p();
    if p1 == 0 || p1 >= p {
        return Err(Error::InvalidParameter {
            name: "p1",
            value: p1 as f64,
            reason: "need 1 <= p1 < p",
        });
    }
    let p2 = p - p1;
    let sigma = model.sigma();
    let sigma11 = sigma.view((0, 0), (p1, p1)).into_owned();
    let sigma12 = sigma.view((0, p1), (p1, p2)).into_owned();
    let sigma21 = sigma.view((p1, 0), (p2, p1)).into_owned();
    let sigma22 = sigma.view((p1, p1), (p2, p2)).into_owned();
    let chol11 = Cholesky::new(sigma11.clone())
        .ok_or_else(|| Error::NotPositiveDefinite { eigenvalue: min_eigenvalue(&sigma11) })?;
    let schur = &sigma22 - &sigma21 * chol11.solve(&sigma12);
    let schur = (&schur + schur.transpose()) * 0.5;
    let chol_schur = Cholesky::new(schur.clone())
        .ok_or_else(|| Error::NotPositiveDefinite { eigenvalue: min_eigenvalue(&schur) })?;
    Ok(PartitionSpec { p1, p2, sigma11, sigma12, sigma21, sigma22, schur, chol11, chol_schur })
}

impl PartitionSpec {
    pub fn p1(&self) -> usize {
        self.p1
    }
    pub fn p2(&self) -> usize {
        self.p2
    }
    pub fn sigma11(&self) -> &DMatrix<f64> {
        &self.sigma11
    }
    pub fn sigma12(&self) -> &DMatrix<f64> {
        &self.sigma12
    }
    pub fn sigma21(&self) -> &DMatrix<f64> {
        &self.sigma21
    }
    pub fn sigma22(&self) -> &DMatrix<f64> {
        &self.sigma22
    }
    /// The Schur complement sigma22.1.
    pub fn schur(&self) -> &DMatrix<f64> {
        &self.schur
    }

    pub(crate) fn solve11(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol11.solve(rhs)
    }

    pub(crate) fn solve_schur(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol_schur.solve(rhs)
    }

    pub(crate) fn log_det_schur(&self) -> f64 {
        2.0 * self.chol_schur.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Verdict of the tail-behaviour classification (condition R3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum R3Class {
    TendsToZero,
    Diverges,
    Neither,
    Inconclusive,
}

/// Outcome of the generator regularity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub r1: bool,
    pub r2: bool,
    pub r3: R3Class,
}

/// Grid-based check of the generator regularity conditions.
///
/// * r1: g positive on the grid and (log g)' finite without jumps, a proxy
///   for continuous differentiability.
/// * r2: at least 99% of grid points have |(log g)'| > 1e-12. Since g > 0,
///   g' and (log g)' vanish together, and the ratio makes the threshold
///   invariant to the arbitrary normalization of g. This is the density
///   proxy for supp(g') being dense.
/// * r3: classify t * (log g)'(t^2) on a geometric grid from t = 1 to 1e4.
///   With v the median of the last values and `slope` the least-squares
///   slope of ln|v| against ln t on the upper half of the grid:
///   v < 1e-6 or slope < -0.5 means tends_to_zero; v > 1e6 or slope > 0.5
///   means diverges; |slope| <= 0.1 with v in between means neither;
///   anything else is inconclusive.
pub fn check_generator_regularity(
    gen: &GeneratorSpec,
    grid_max: f64,
    n_grid: usize,
) -> Result<RegularityReport> {
    if !(grid_max > 0.0) {
        return Err(Error::InvalidParameter {
            name: "grid_max",
            value: grid_max,
            reason: "must be positive",
        });
    }
    if n_grid < 100 {
        return Err(Error::InvalidParameter {
            name: "n_grid",
            value: n_grid as f64,
            reason: "need at least 100 grid points",
        });
    }

    // R1: positivity of g plus a no-jump check on (log g)'.
    let mut r1 = true;
    let mut prev_d: Option<f64> = None;
    for i in 0..n_grid {
        let t = grid_max * (i as f64 + 0.5) / n_grid as f64;
        let lg = gen.log_g(t);
        let d = gen.dlog_g(t);
        if !lg.is_finite() || !d.is_finite() {
            r1 = false;
            break;
        }
        if let Some(pd) = prev_d {
            let denom = pd.abs().max(d.abs()).max(1e-8);
            if (d - pd).abs() / denom > 0.5 {
                r1 = false;
                break;
            }
        }
        prev_d = Some(d);
    }

    // R2: fraction of the grid where the log-derivative is materially nonzero.
    let mut active = 0usize;
    for i in 0..n_grid {
        let t = grid_max * (i as f64 + 0.5) / n_grid as f64;
        let d = gen.dlog_g(t);
        if d.is_finite() && d.abs() > 1e-12 {
            active += 1;
        }
    }
    let r2 = (active as f64 / n_grid as f64) > 0.99;

    // R3 trend classification on t in [1, 1e4].
    let m = 61usize;
    let mut ln_t = Vec::with_capacity(m);
    let mut ln_v = Vec::with_capacity(m);
    let mut tail_vals = Vec::new();
    for i in 0..m {
        let t = 10f64.powf(4.0 * i as f64 / (m - 1) as f64);
        let v = (t * gen.dlog_g(t * t)).abs();
        if v.is_finite() && v > 0.0 {
            ln_t.push(t.ln());
            ln_v.push(v.ln());
        }
        if i >= m - 5 {
            tail_vals.push(v);
        }
    }
    if ln_t.len() < m / 2 {
        // derivative vanishes or misbehaves over most of the grid
        let all_tiny = tail_vals.iter().all(|v| *v < 1e-6);
        let r3 = if all_tiny { R3Class::TendsToZero } else { R3Class::Inconclusive };
        return Ok(RegularityReport { r1, r2, r3 });
    }
    let half = ln_t.len() / 2;
    let xs = &ln_t[half..];
    let ys = &ln_v[half..];
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let mut tail_sorted = tail_vals.clone();
    tail_sorted.sort_by(f64::total_cmp);
    let v_end = tail_sorted[tail_sorted.len() / 2];

    let r3 = if v_end < 1e-6 || slope < -0.5 {
        R3Class::TendsToZero
    } else if v_end > 1e6 || slope > 0.5 {
        R3Class::Diverges
    } else if slope.abs() <= 0.1 {
        R3Class::Neither
    } else {
        R3Class::Inconclusive
    };
    Ok(RegularityReport { r1, r2, r3 })
}

// ---------------------------------------------------------------------------
// JSON document types
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BoundEntry {
    Num(f64),
    Tag(String),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
enum GeneratorDoc {
    Normal,
    StudentT { dof: f64 },
    Kotz { n: f64, beta: f64, s: f64 },
    GammaRadial { shape: f64, scale: f64 },
    Tabulated { grid: Vec<(f64, f64)> },
}

impl GeneratorDoc {
    fn from_spec(spec: &GeneratorSpec) -> Self {
        match spec.kind() {
            GeneratorKind::Normal => GeneratorDoc::Normal,
            GeneratorKind::StudentT { dof } => GeneratorDoc::StudentT { dof: *dof },
            GeneratorKind::Kotz { n, beta, s } => GeneratorDoc::Kotz { n: *n, beta: *beta, s: *s },
            GeneratorKind::GammaRadial { shape, scale } => {
                GeneratorDoc::GammaRadial { shape: *shape, scale: *scale }
            }
            GeneratorKind::Tabulated { grid } => GeneratorDoc::Tabulated { grid: grid.clone() },
        }
    }

    fn into_spec(self) -> Result<GeneratorSpec> {
        match self {
            GeneratorDoc::Normal => Ok(GeneratorSpec::normal()),
            GeneratorDoc::StudentT { dof } => GeneratorSpec::student_t(dof),
            GeneratorDoc::Kotz { n, beta, s } => GeneratorSpec::kotz(n, beta, s),
            GeneratorDoc::GammaRadial { shape, scale } => GeneratorSpec::gamma_radial(shape, scale),
            GeneratorDoc::Tabulated { grid } => GeneratorSpec::tabulated(grid),
        }
    }
}

impl Serialize for GeneratorSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        GeneratorDoc::from_spec(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GeneratorSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = GeneratorDoc::deserialize(deserializer)?;
        doc.into_spec().map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    c: Vec<BoundEntry>,
    generator: GeneratorDoc,
}

impl ModelDoc {
    fn from_model(model: &TruncatedEllipticalModel) -> Self {
        let p = model.p();
        let sigma = (0..p)
            .map(|i| (0..p).map(|j| model.sigma()[(i, j)]).collect())
            .collect();
        let c = model
            .c()
            .iter()
            .map(|&ci| {
                if ci == f64::NEG_INFINITY {
                    BoundEntry::Tag("-inf".to_string())
                } else {
                    BoundEntry::Num(ci)
                }
            })
            .collect();
        ModelDoc {
            mu: model.mu().iter().copied().collect(),
            sigma,
            c,
            generator: GeneratorDoc::from_spec(model.generator()),
        }
    }

    fn into_model(self) -> Result<TruncatedEllipticalModel> {
        let p = self.mu.len();
        let mut sigma = DMatrix::zeros(self.sigma.len(), p.max(1));
        if self.sigma.len() != p || self.sigma.iter().any(|row| row.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: self.sigma.len(),
                what: "sigma",
            });
        }
        for (i, row) in self.sigma.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                sigma[(i, j)] = *v;
            }
        }
        let mut c = DVector::zeros(self.c.len());
        for (i, entry) in self.c.iter().enumerate() {
            c[i] = match entry {
                BoundEntry::Num(v) => *v,
                BoundEntry::Tag(s) if s == "-inf" => f64::NEG_INFINITY,
                BoundEntry::Tag(s) => {
                    return Err(Error::Parse {
                        line: 0,
                        message: format!("unrecognized bound entry {s:?}; expected a number or \"-inf\""),
                    })
                }
            };
        }
        let generator = self.generator.into_spec()?;
        build_model(DVector::from_vec(self.mu), sigma, c, generator)
    }
}
