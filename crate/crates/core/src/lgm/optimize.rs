//! Derivative-free maximization in a box and finite-difference curvature.

use crate::error::{Error, Result};

/// Nelder-Mead controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub initial_step: f64,
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// ... and the simplex fits in a cube of this side.
    pub x_tol: f64,
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { initial_step: 0.5, max_evals: 4000, f_tol: 1e-7, x_tol: 1e-4, restarts: 1 }
    }
}

/// Result of a maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

fn clamp_into(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(lo, hi);
    }
}

/// Maximizes `f` over the box `[lower, upper]` with Nelder-Mead, projecting
/// trial points onto the box. Failed evaluations count as `-inf`.
pub fn nelder_mead_max<F>(f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: NelderMeadOptions) -> Result<Maximum>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let d = x0.len();
    if lower.len() != d || upper.len() != d {
        return Err(Error::Dimension("box and start differ in dimension".into()));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::Argument("empty box".into()));
    }
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| -> f64 {
        evals.set(evals.get() + 1);
        match f(x) {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    };
    let mut start = x0.to_vec();
    clamp_into(&mut start, lower, upper);
    if d == 0 {
        let v = eval(&start);
        if !v.is_finite() {
            return Err(Error::Optimization("objective fails at the only point".into()));
        }
        return Ok(Maximum { x: start, value: -v, evaluations: 1 });
    }

    let mut best = (start.clone(), eval(&start));
    for _round in 0..=opts.restarts {
        // initial simplex around the current best
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![best.clone()];
        for k in 0..d {
            let mut x = best.0.clone();
            let step = opts.initial_step;
            x[k] = if x[k] + step <= upper[k] { x[k] + step } else { x[k] - step };
            clamp_into(&mut x, lower, upper);
            let v = eval(&x);
            simplex.push((x, v));
        }
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread = simplex[d].1 - simplex[0].1;
            let size = (0..d)
                .map(|k| {
                    let (lo, hi) = simplex.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0[k]), hi.max(p.0[k])));
                    hi - lo
                })
                .fold(0.0, f64::max);
            if (spread.is_finite() && spread < opts.f_tol && size < opts.x_tol) || size < 1e-12 || evals.get() >= opts.max_evals {
                break;
            }
            let centroid: Vec<f64> = (0..d).map(|k| simplex[..d].iter().map(|p| p.0[k]).sum::<f64>() / d as f64).collect();
            let toward = |t: f64| -> Vec<f64> {
                let mut x: Vec<f64> = centroid.iter().zip(&simplex[d].0).map(|(c, w)| c + t * (w - c)).collect();
                clamp_into(&mut x, lower, upper);
                x
            };
            let xr = toward(-1.0);
            let fr = eval(&xr);
            if fr < simplex[0].1 {
                let xe = toward(-2.0);
                let fe = eval(&xe);
                simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[d - 1].1 {
                simplex[d] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[d].1 {
                    let xc = toward(-0.5);
                    let fc = eval(&xc);
                    (xc, fc)
                } else {
                    let xc = toward(0.5);
                    let fc = eval(&xc);
                    (xc, fc)
                };
                if fc < simplex[d].1.min(fr) {
                    simplex[d] = (xc, fc);
                } else {
                    let b = simplex[0].0.clone();
                    for p in simplex.iter_mut().skip(1) {
                        let x: Vec<f64> = b.iter().zip(&p.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                        let v = eval(&x);
                        *p = (x, v);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 <= best.1 {
            best = simplex[0].clone();
        }
        if evals.get() >= opts.max_evals {
            break;
        }
    }
    if !best.1.is_finite() {
        return Err(Error::Optimization("objective could not be evaluated anywhere in the search".into()));
    }
    Ok(Maximum { x: best.0, value: -best.1, evaluations: evals.get() })
}

/// Central-difference Hessian of `f` at `x` with step `h`; `f0 = f(x)`.
pub fn fd_hessian<F>(f: F, x: &[f64], f0: f64, h: f64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let d = x.len();
    let mut hess = vec![vec![0.0; d]; d];
    let at = |shifts: &[(usize, f64)]| -> Result<f64> {
        let mut p = x.to_vec();
        for &(k, s) in shifts {
            p[k] += s;
        }
        f(&p)
    };
    for i in 0..d {
        let fp = at(&[(i, h)])?;
        let fm = at(&[(i, -h)])?;
        hess[i][i] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, h), (j, h)])? - at(&[(i, h), (j, -h)])? - at(&[(i, -h), (j, h)])? + at(&[(i, -h), (j, -h)])?) / (4.0 * h * h);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    Ok(hess)
}
