//! Small statistical helpers shared by the samplers, the verification
//! harness, and the test suites.

use crate::special::kolmogorov_sf;

/// One-sample Kolmogorov-Smirnov statistic against a reference CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Asymptotic one-sample KS p-value.
pub fn ks_p_value(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let d = ks_statistic(sample, cdf);
    kolmogorov_p(sample.len(), d)
}

/// Asymptotic p-value for a KS distance at sample size n.
pub fn kolmogorov_p(n: usize, d: f64) -> f64 {
    kolmogorov_sf((n as f64).sqrt() * d)
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d = 0.0f64;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Mean of a slice.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample covariance of two columns together with the standard error of
/// that covariance estimate (moment-based, so valid without normality).
pub fn covariance_with_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let mut s = 0.0;
    for i in 0..x.len() {
        s += (x[i] - mx) * (y[i] - my);
    }
    let cov = s / n;
    let mut q = 0.0;
    for i in 0..x.len() {
        let prod = (x[i] - mx) * (y[i] - my) - cov;
        q += prod * prod;
    }
    let se = (q / n).sqrt() / n.sqrt();
    (cov, se)
}

/// Lag-1 autocorrelation of a series.
pub fn lag1_autocorr(xs: &[f64]) -> f64 {
    let n = xs.len();
    let m = mean(xs);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let d = xs[i] - m;
        den += d * d;
        if i + 1 < n {
            num += d * (xs[i + 1] - m);
        }
    }
    num / den
}
