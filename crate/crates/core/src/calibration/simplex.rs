//! Nelder–Mead downhill simplex for small unconstrained problems.
//!
//! Non-finite objective values are treated as +∞, so infeasible points are
//! simply never accepted into the simplex.

#[derive(Debug, Clone, Copy)]
pub(crate) struct SimplexOptions {
    pub max_evaluations: usize,
    /// Stop when `f_worst − f_best ≤ f_tol·|f_best| + f_abs`.
    pub f_tol: f64,
    pub f_abs: f64,
    /// ... and the simplex diameter (∞-norm) is below `x_tol`.
    pub x_tol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Minimize `f` from `x0` with an axis-aligned initial simplex of sizes `steps`.
pub(crate) fn minimize<F>(f: F, x0: &[f64], steps: &[f64], opts: &SimplexOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(steps.len(), n);
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        sanitize(f(x))
    };

    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for (i, &h) in steps.iter().enumerate() {
        let mut p = x0.to_vec();
        p[i] += h;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p)).collect();
    let mut converged = false;

    let mut order: Vec<usize> = (0..=n).collect();
    while evals.get() < opts.max_evaluations {
        // Stable sort keeps the result deterministic when values tie.
        order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
        let (best, worst, second) = (order[0], order[n], order[n - 1]);

        let spread = vals[worst] - vals[best];
        let diameter = pts
            .iter()
            .flat_map(|p| p.iter().zip(&pts[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if vals[best].is_finite()
            && spread <= opts.f_tol * vals[best].abs() + opts.f_abs
            && diameter <= opts.x_tol
        {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for &k in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&pts[k]) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[worst])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(REFLECT);
        let fr = eval(&xr);
        if fr < vals[best] {
            let xe = along(EXPAND);
            let fe = eval(&xe);
            if fe < fr {
                pts[worst] = xe;
                vals[worst] = fe;
            } else {
                pts[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if fr < vals[second] {
            pts[worst] = xr;
            vals[worst] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[worst] {
            let xc = along(REFLECT * CONTRACT);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-CONTRACT);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < vals[worst].min(fr) {
            pts[worst] = xc;
            vals[worst] = fc;
            continue;
        }
        let anchor = pts[best].clone();
        for &k in &order[1..] {
            for (p, a) in pts[k].iter_mut().zip(&anchor) {
                *p = a + SHRINK * (*p - a);
            }
            vals[k] = eval(&pts[k]);
        }
    }

    let best = (0..=n)
        .min_by(|&i, &j| vals[i].total_cmp(&vals[j]))
        .unwrap_or(0);
    Minimum {
        x: pts[best].clone(),
        value: vals[best],
        converged,
    }
}
