//! Counter-based pseudorandom generator and the scalar samplers built on it.
//!
//! The generator hashes a (key, counter) pair through the SplitMix64 output
//! function, so any number of statistically independent streams can be
//! derived from one seed and a stream index. Chunked parallel sampling
//! stays reproducible because stream assignment does not depend on thread
//! scheduling.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splittable counter-based RNG.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
    cached_normal: Option<f64>,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { key: mix64(seed ^ GOLDEN), counter: 0, cached_normal: None }
    }

    /// Derive an independent stream from the same seed.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let key = mix64(mix64(seed ^ GOLDEN).wrapping_add(stream.wrapping_mul(GOLDEN)));
        CounterRng { key, counter: 0, cached_normal: None }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let out = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter = self.counter.wrapping_add(1);
        out
    }

    /// Uniform draw in [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform draw in (0, 1], safe as a log argument.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// A uniformly random permutation index array (Fisher-Yates).
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            idx.swap(i, j);
        }
        idx
    }

    /// Standard normal draw (Marsaglia polar method, pairs cached).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let m = (-2.0 * s.ln() / s).sqrt();
                self.cached_normal = Some(v * m);
                return u * m;
            }
        }
    }

    /// Standard exponential draw.
    #[inline]
    pub fn exponential(&mut self) -> f64 {
        -self.uniform_open().ln()
    }

    /// Gamma(shape, scale) draw via Marsaglia-Tsang, with the boost for
    /// shape < 1.
    pub fn gamma(&mut self, shape: f64, scale: f64) -> f64 {
        assert!(shape > 0.0 && scale > 0.0, "gamma parameters must be positive");
        if shape < 1.0 {
            let boost = self.uniform_open().powf(1.0 / shape);
            return self.gamma(shape + 1.0, scale) * boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v3 = v * v * v;
            let u = self.uniform_open();
            if u < 1.0 - 0.0331 * x.powi(4) || u.ln() < 0.5 * x * x + d * (1.0 - v3 + v3.ln()) {
                return d * v3 * scale;
            }
        }
    }

    /// Chi-square draw with `dof` degrees of freedom.
    #[inline]
    pub fn chi_square(&mut self, dof: f64) -> f64 {
        self.gamma(0.5 * dof, 2.0)
    }

    /// Standard normal conditioned on Z >= a.
    ///
    /// Plain rejection against the normal for a <= 0.45; Robert's shifted
    /// exponential proposal in the tail.
    pub fn truncated_std_normal(&mut self, a: f64) -> f64 {
        if a == f64::NEG_INFINITY {
            return self.normal();
        }
        if a <= 0.45 {
            loop {
                let z = self.normal();
                if z >= a {
                    return z;
                }
            }
        } else {
            let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
            loop {
                let x = a + self.exponential() / lambda;
                let diff = x - lambda;
                if self.uniform() <= (-0.5 * diff * diff).exp() {
                    return x;
                }
            }
        }
    }

    /// Point uniform on the unit circle.
    pub fn unit_circle(&mut self) -> (f64, f64) {
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let inv = 1.0 / s.sqrt();
                return (u * inv, v * inv);
            }
        }
    }
}
