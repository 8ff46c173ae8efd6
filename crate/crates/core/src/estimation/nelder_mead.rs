//! Nelder-Mead simplex minimizer with dimension-adaptive coefficients.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop once the best value improves by less than this over a full cycle
    /// of `n + 1` iterations...
    pub ftol: f64,
    /// ...and the simplex values span less than this.
    pub spread_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            ftol: 1e-8,
            spread_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with an initial simplex of per-coordinate offsets
/// `steps`. Non-finite objective values are treated as `+inf`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], steps: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(steps.len(), n, "one step per coordinate");
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    if n == 0 {
        let v = eval(x0, &mut evals);
        return NelderMeadResult {
            x: vec![],
            f: v,
            evals,
            iterations: 0,
            converged: true,
        };
    }

    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let mut iterations = 0usize;
    let mut cycle_best = f64::INFINITY;
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];

    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if iterations.is_multiple_of(n + 1) {
            let spread = values[n] - values[0];
            if iterations > 0 && cycle_best - values[0] < opts.ftol && spread < opts.spread_tol {
                converged = true;
                break;
            }
            cycle_best = values[0];
        }
        if evals >= opts.max_evals {
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / nf;
            }
        }
        let worst = &simplex[n];
        let along = |t: f64, out: &mut Vec<f64>| {
            for i in 0..n {
                out[i] = centroid[i] + t * (worst[i] - centroid[i]);
            }
        };

        along(-alpha, &mut trial);
        let fr = eval(&trial, &mut evals);
        if fr < values[0] {
            along(-alpha * beta, &mut trial2);
            let fe = eval(&trial2, &mut evals);
            if fe < fr {
                simplex[n].copy_from_slice(&trial2);
                values[n] = fe;
            } else {
                simplex[n].copy_from_slice(&trial);
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n].copy_from_slice(&trial);
            values[n] = fr;
            continue;
        }
        // Outside or inside contraction.
        let (t, bound) = if fr < values[n] {
            (-alpha * gamma, fr)
        } else {
            (gamma, values[n])
        };
        along(t, &mut trial2);
        let fc = eval(&trial2, &mut evals);
        if fc <= bound {
            simplex[n].copy_from_slice(&trial2);
            values[n] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        let best = simplex[0].clone();
        for k in 1..=n {
            for i in 0..n {
                simplex[k][i] = best[i] + delta * (simplex[k][i] - best[i]);
            }
            values[k] = eval(&simplex[k], &mut evals);
        }
    }

    let ibest = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    NelderMeadResult {
        x: simplex[ibest].clone(),
        f: values[ibest],
        evals,
        iterations,
        converged,
    }
}
