//! Derivative-free Nelder-Mead minimizer used by the likelihood fits.

pub(crate) struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub n_evals: usize,
    pub converged: bool,
}

/// Minimize `f` from `x0` with per-coordinate initial steps `scale`.
///
/// Converges when every vertex lies within `tol_diam` (infinity norm) of
/// the best vertex. Standard reflection/expansion/contraction/shrink
/// coefficients (1, 2, 1/2, 1/2).
pub(crate) fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    scale: &[f64],
    tol_diam: f64,
    max_evals: usize,
) -> SimplexResult {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            1e300
        } else {
            v
        }
    };

    let mut verts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    verts.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += scale[i];
        verts.push(v);
    }
    let mut fs: Vec<f64> = verts.iter().map(|v| eval(v, &mut evals)).collect();

    loop {
        // order best..worst
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]));
        let best = idx[0];
        let worst = idx[n];
        let second_worst = idx[n - 1];

        let diam = verts
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&verts[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max)
            })
            .fold(0.0f64, f64::max);
        if diam < tol_diam {
            return SimplexResult { x: verts[best].clone(), f: fs[best], n_evals: evals, converged: true };
        }
        if evals >= max_evals {
            return SimplexResult { x: verts[best].clone(), f: fs[best], n_evals: evals, converged: false };
        }

        // centroid of all but the worst
        let mut centroid = vec![0.0f64; n];
        for (k, v) in verts.iter().enumerate() {
            if k != worst {
                for i in 0..n {
                    centroid[i] += v[i];
                }
            }
        }
        for c in centroid.iter_mut() {
            *c /= n as f64;
        }

        let reflect: Vec<f64> =
            (0..n).map(|i| centroid[i] + (centroid[i] - verts[worst][i])).collect();
        let f_reflect = eval(&reflect, &mut evals);

        if f_reflect < fs[best] {
            let expand: Vec<f64> =
                (0..n).map(|i| centroid[i] + 2.0 * (centroid[i] - verts[worst][i])).collect();
            let f_expand = eval(&expand, &mut evals);
            if f_expand < f_reflect {
                verts[worst] = expand;
                fs[worst] = f_expand;
            } else {
                verts[worst] = reflect;
                fs[worst] = f_reflect;
            }
        } else if f_reflect < fs[second_worst] {
            verts[worst] = reflect;
            fs[worst] = f_reflect;
        } else {
            let contract_point: Vec<f64> = if f_reflect < fs[worst] {
                (0..n).map(|i| centroid[i] + 0.5 * (reflect[i] - centroid[i])).collect()
            } else {
                (0..n).map(|i| centroid[i] + 0.5 * (verts[worst][i] - centroid[i])).collect()
            };
            let f_contract = eval(&contract_point, &mut evals);
            if f_contract < fs[worst].min(f_reflect) {
                verts[worst] = contract_point;
                fs[worst] = f_contract;
            } else {
                // shrink toward the best vertex
                for k in 0..=n {
                    if k != best {
                        for i in 0..n {
                            verts[k][i] = verts[best][i] + 0.5 * (verts[k][i] - verts[best][i]);
                        }
                        fs[k] = eval(&verts[k].clone(), &mut evals);
                    }
                }
            }
        }
    }
}
