//! Conditional posterior of the latent field at fixed hyperparameters:
//! exact conjugate update for the Gaussian family, Newton mode plus Laplace
//! approximation in general.

use std::f64::consts::PI;

use crate::cholesky::CholeskyFactor;
use crate::error::{Error, Result};

use super::model::{Family, LatentModel};

/// Newton iteration controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub gradient_tol: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { max_iter: 50, gradient_tol: 1e-8, max_halvings: 30 }
    }
}

/// Gaussian approximation of `x | θ, y` at the mode.
#[derive(Debug, Clone)]
pub struct Conditional {
    pub theta: Vec<f64>,
    /// Posterior mode (the mean for the Gaussian family).
    pub mode: Vec<f64>,
    /// Factor of the curvature `Q(θ) + Aᵀ W A` at the mode.
    pub factor: CholeskyFactor<f64>,
    /// `log π(y | θ)` (exact for Gaussian, Laplace otherwise).
    pub log_likelihood: f64,
    /// `log π(θ) + log π(y | θ)`: unnormalized log posterior of `θ`.
    pub log_posterior: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// `xᵀ Q x` for upper-triangle values on the model's joint pattern.
fn joint_quad_form(model: &LatentModel, values: &[f64], x: &[f64]) -> f64 {
    let up = model.joint().pattern.upper();
    let mut acc = 0.0;
    for j in 0..up.ncols() {
        for p in up.col_ptr()[j]..up.col_ptr()[j + 1] {
            let i = up.row_idx()[p];
            let v = values[p] * x[i] * x[j];
            acc += if i == j { v } else { 2.0 * v };
        }
    }
    acc
}

fn joint_mul_vec(model: &LatentModel, values: &[f64], x: &[f64]) -> Vec<f64> {
    let up = model.joint().pattern.upper();
    let mut out = vec![0.0; x.len()];
    for j in 0..up.ncols() {
        for p in up.col_ptr()[j]..up.col_ptr()[j + 1] {
            let i = up.row_idx()[p];
            out[i] += values[p] * x[j];
            if i != j {
                out[j] += values[p] * x[i];
            }
        }
    }
    out
}

/// Exact posterior of `x | θ, y` for the Gaussian family: precision
/// `Q + AᵀA/σ²`, mean from the normal equations, exact marginal likelihood.
pub fn gaussian_conditional(model: &LatentModel, theta: &[f64], y: &[f64]) -> Result<Conditional> {
    if model.family() != Family::Gaussian {
        return Err(Error::Argument("gaussian_conditional requires the gaussian family".into()));
    }
    model.check_theta(theta)?;
    model.check_y(y)?;
    let sigma2 = model.sigma2(theta);
    let joint = model.joint();
    let (qvals, log_det_q) = model.prior_on_joint(theta)?;
    let values: Vec<f64> = qvals.iter().zip(&joint.gram).map(|(q, g)| q + g / sigma2).collect();
    let factor = joint.symbolic.factorize(&values).map_err(|e| e.with_theta(theta))?;

    let resid0: Vec<f64> = y.iter().zip(model.offset()).map(|(y, o)| (y - o) / sigma2).collect();
    let b = model.design().tr_mul_vec(&resid0);
    let mean = factor.solve(&b);

    let fitted = model.linear_predictor(&mean);
    let rss: f64 = y.iter().zip(&fitted).map(|(y, f)| (y - f) * (y - f)).sum();
    let n = y.len() as f64;
    let log_likelihood = -0.5 * n * (2.0 * PI * sigma2).ln() + 0.5 * log_det_q - 0.5 * factor.log_det()
        - 0.5 * (rss / sigma2 + joint_quad_form(model, &qvals, &mean));
    let log_posterior = model.hyper().log_prior(theta) + log_likelihood;
    Ok(Conditional { theta: theta.to_vec(), mode: mean, factor, log_likelihood, log_posterior, iterations: 1, gradient_norm: 0.0 })
}

/// Newton mode of `log π(y | x) − ½ xᵀQx` from `x = 0`.
pub fn newton_mode(model: &LatentModel, theta: &[f64], y: &[f64]) -> Result<Conditional> {
    newton_mode_from(model, theta, y, None, NewtonOptions::default())
}

/// Newton mode with step halving from an optional starting point; the
/// returned factor is the curvature at the mode.
pub fn newton_mode_from(model: &LatentModel, theta: &[f64], y: &[f64], init: Option<&[f64]>, opts: NewtonOptions) -> Result<Conditional> {
    model.check_theta(theta)?;
    model.check_y(y)?;
    let n = model.n_latent();
    let family = model.family();
    let sigma2 = model.sigma2(theta);
    let joint = model.joint();
    let (qvals, log_det_q) = model.prior_on_joint(theta)?;
    let mut x = match init {
        Some(v) if v.len() == n => v.to_vec(),
        Some(v) => return Err(Error::Dimension(format!("initial point of length {} for {n} latents", v.len()))),
        None => vec![0.0; n],
    };
    let objective = |x: &[f64], eta: &[f64]| -> f64 {
        let ll: f64 = y.iter().zip(eta).map(|(&yi, &e)| family.log_lik(yi, e, sigma2)).sum();
        ll - 0.5 * joint_quad_form(model, &qvals, x)
    };

    let mut eta = model.linear_predictor(&x);
    let mut f = objective(&x, &eta);
    for iter in 0..=opts.max_iter {
        let (score, weight): (Vec<f64>, Vec<f64>) = y.iter().zip(&eta).map(|(&yi, &e)| family.score_weight(yi, e, sigma2)).unzip();
        let qx = joint_mul_vec(model, &qvals, &x);
        let grad: Vec<f64> = model.design().tr_mul_vec(&score).iter().zip(&qx).map(|(a, b)| a - b).collect();
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();

        let mut values = qvals.clone();
        match family {
            Family::Gaussian => values.iter_mut().zip(&joint.gram).for_each(|(v, g)| *v += g / sigma2),
            Family::Bernoulli => {
                for &(k, p, c) in &joint.gram_terms {
                    values[p as usize] += weight[k as usize] * c;
                }
            }
        }
        let factor = joint.symbolic.factorize(&values).map_err(|e| e.with_theta(theta))?;

        let step = factor.solve(&grad);
        // predicted ascent below the objective's rounding level
        let decrement: f64 = grad.iter().zip(&step).map(|(g, d)| g * d).sum();
        if gnorm < opts.gradient_tol || decrement <= 1e-13 * (1.0 + f.abs()) {
            let log_likelihood = f + 0.5 * log_det_q - 0.5 * factor.log_det();
            let log_posterior = model.hyper().log_prior(theta) + log_likelihood;
            return Ok(Conditional { theta: theta.to_vec(), mode: x, factor, log_likelihood, log_posterior, iterations: iter, gradient_norm: gnorm });
        }
        if iter == opts.max_iter {
            return Err(Error::Convergence { iterations: iter, gradient_norm: gnorm });
        }

        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + s * d).collect();
            let trial_eta = model.linear_predictor(&trial);
            let ft = objective(&trial, &trial_eta);
            if ft >= f {
                x = trial;
                eta = trial_eta;
                f = ft;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            // no ascent possible at working precision: x is the mode
            if gnorm < opts.gradient_tol.max(1e-6) {
                let log_likelihood = f + 0.5 * log_det_q - 0.5 * factor.log_det();
                let log_posterior = model.hyper().log_prior(theta) + log_likelihood;
                return Ok(Conditional { theta: theta.to_vec(), mode: x, factor, log_likelihood, log_posterior, iterations: iter, gradient_norm: gnorm });
            }
            return Err(Error::Convergence { iterations: iter, gradient_norm: gnorm });
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Exact conditional for the Gaussian family, Newton/Laplace otherwise.
pub fn conditional(model: &LatentModel, theta: &[f64], y: &[f64], warm: Option<&[f64]>) -> Result<Conditional> {
    match model.family() {
        Family::Gaussian => gaussian_conditional(model, theta, y),
        Family::Bernoulli => newton_mode_from(model, theta, y, warm, NewtonOptions::default()),
    }
}

/// `log π̃(θ | y)` up to an additive constant.
pub fn laplace_log_marginal(model: &LatentModel, theta: &[f64], y: &[f64]) -> Result<f64> {
    Ok(conditional(model, theta, y, None)?.log_posterior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lgm::model::Component;
    use crate::sparse::CscMatrix;

    fn scalar_model(family: Family, prior_precision: f64, n_obs: usize) -> LatentModel {
        let t: Vec<_> = (0..n_obs).map(|k| (k, 0, 1.0)).collect();
        LatentModel::new(
            family,
            vec![("x".into(), Component::Fixed { size: 1, prior_precision })],
            CscMatrix::from_triplets(n_obs, 1, &t).unwrap(),
            vec![0.0; n_obs],
        )
        .unwrap()
    }

    #[test]
    fn scalar_conjugate_update() {
        let m = scalar_model(Family::Gaussian, 1.0, 1);
        let c = gaussian_conditional(&m, &[0.0], &[2.0]).unwrap();
        assert!((c.mode[0] - 1.0).abs() < 1e-14);
        let var = c.factor.selected_inverse().diagonal()[0];
        assert!((var - 0.5).abs() < 1e-14);
        // y ~ N(0, 2)
        let exact = -0.5 * (2.0 * PI * 2.0).ln() - 4.0 / 4.0;
        assert!((c.log_likelihood - exact).abs() < 1e-12);
    }

    #[test]
    fn zero_data_zero_mean() {
        let m = scalar_model(Family::Gaussian, 1.0, 5);
        let c = gaussian_conditional(&m, &[0.3], &[0.0; 5]).unwrap();
        assert_eq!(c.mode, vec![0.0]);
    }

    #[test]
    fn newton_on_gaussian_equals_conjugate() {
        let m = scalar_model(Family::Gaussian, 0.5, 4);
        let y = [0.3, -1.2, 2.2, 0.9];
        let a = gaussian_conditional(&m, &[-0.4], &y).unwrap();
        let b = newton_mode(&m, &[-0.4], &y).unwrap();
        assert!((a.mode[0] - b.mode[0]).abs() < 1e-12);
        assert!((a.log_likelihood - b.log_likelihood).abs() < 1e-10);
    }

    #[test]
    fn strong_prior_shrinks_bernoulli_mode() {
        let m = scalar_model(Family::Bernoulli, 100.0, 10);
        let c = newton_mode(&m, &[], &[1.0; 10]).unwrap();
        assert!(c.mode[0] > 0.0 && c.mode[0] < 0.05);
        assert!(c.gradient_norm < 1e-8);
    }

    #[test]
    fn symmetric_bernoulli_data_mode_zero() {
        let m = scalar_model(Family::Bernoulli, 0.01, 6);
        let c = newton_mode(&m, &[], &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(c.mode[0].abs() < 1e-10);
    }

    #[test]
    fn flat_prior_logistic_matches_golden_section() {
        let m = scalar_model(Family::Bernoulli, 0.01, 1);
        let c = newton_mode(&m, &[], &[1.0]).unwrap();
        let f = |x: f64| -crate::lgm::model::softplus(-x) - 0.005 * x * x;
        let (mut a, mut b) = (-10.0f64, 20.0f64);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let (c1, c2) = (b - g * (b - a), a + g * (b - a));
            if f(c1) > f(c2) {
                b = c2;
            } else {
                a = c1;
            }
        }
        assert!(c.mode[0] > 0.0);
        assert!((c.mode[0] - 0.5 * (a + b)).abs() < 1e-6);
    }

    #[test]
    fn convergence_error_reports_gradient() {
        let m = scalar_model(Family::Bernoulli, 0.01, 1);
        let opts = NewtonOptions { max_iter: 1, ..Default::default() };
        match newton_mode_from(&m, &[], &[1.0], None, opts) {
            Err(Error::Convergence { iterations, gradient_norm }) => {
                assert_eq!(iterations, 1);
                assert!(gradient_norm > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
