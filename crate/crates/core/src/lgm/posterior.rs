//! Latent marginals as mixtures over the hyperparameter grid, linear
//! combinations, credible intervals and posterior sampling.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

use super::grid::HyperGrid;
use super::laplace::{conditional, Conditional};
use super::model::LatentModel;

/// Default credible level.
pub const LEVEL: f64 = 0.95;

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Quantile of `Σ w_k N(m_k, s_k²)` by bisection on the distribution
/// function.
pub fn mixture_quantile(weights: &[f64], means: &[f64], sds: &[f64], p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile level must be in (0, 1)");
    let cdf = |x: f64| -> f64 {
        weights
            .iter()
            .zip(means.iter().zip(sds))
            .map(|(w, (m, s))| if *s > 0.0 { w * normal_cdf((x - m) / s) } else if x >= *m { *w } else { 0.0 })
            .sum()
    };
    let mut lo = means.iter().zip(sds).map(|(m, s)| m - 12.0 * s).fold(f64::INFINITY, f64::min);
    let mut hi = means.iter().zip(sds).map(|(m, s)| m + 12.0 * s).fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Mixture mean, sd and equal-tailed interval per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalSummary {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
}

impl MarginalSummary {
    /// Mixes per-grid-point Gaussian marginals.
    pub fn from_mixture(weights: &[f64], means: &[Vec<f64>], vars: &[Vec<f64>], level: f64) -> Self {
        let n = means.first().map_or(0, Vec::len);
        let alpha = 0.5 * (1.0 - level);
        let mut out = Self { mean: vec![0.0; n], sd: vec![0.0; n], lower: vec![0.0; n], upper: vec![0.0; n], level };
        let mut m_i = vec![0.0; means.len()];
        let mut s_i = vec![0.0; means.len()];
        for i in 0..n {
            let mut mean = 0.0;
            let mut second = 0.0;
            for k in 0..means.len() {
                m_i[k] = means[k][i];
                s_i[k] = vars[k][i].max(0.0).sqrt();
                mean += weights[k] * m_i[k];
                second += weights[k] * (vars[k][i] + m_i[k] * m_i[k]);
            }
            out.mean[i] = mean;
            out.sd[i] = (second - mean * mean).max(0.0).sqrt();
            if means.len() == 1 {
                let z = statrs_normal_quantile(1.0 - alpha);
                out.lower[i] = mean - z * s_i[0];
                out.upper[i] = mean + z * s_i[0];
            } else {
                out.lower[i] = mixture_quantile(weights, &m_i, &s_i, alpha);
                out.upper[i] = mixture_quantile(weights, &m_i, &s_i, 1.0 - alpha);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Whether the interval of coordinate `i` contains `v`.
    pub fn covers(&self, i: usize, v: f64) -> bool {
        self.lower[i] <= v && v <= self.upper[i]
    }

    /// CSV with columns `id,mean,sd,lower,upper`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["id", "mean", "sd", "lower", "upper"])?;
        for i in 0..self.len() {
            wr.write_record([i.to_string(), self.mean[i].to_string(), self.sd[i].to_string(), self.lower[i].to_string(), self.upper[i].to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn statrs_normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

/// Sparse linear combination `Σ c_i x_i` of latent coordinates.
pub type LinearCombination = Vec<(usize, f64)>;

/// Mixture posterior of the latent vector (and optional linear
/// combinations) over a hyperparameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPosterior {
    pub weights: Vec<f64>,
    pub conditional_means: Vec<Vec<f64>>,
    pub conditional_vars: Vec<Vec<f64>>,
    pub log_likelihoods: Vec<f64>,
    pub latent: MarginalSummary,
    pub combinations: Option<MarginalSummary>,
}

/// Mean and variance of `aᵀx` under a conditional: covariance entries
/// from the selected inverse when they lie on its pattern, else a solve.
fn combination_moments(c: &Conditional, sel: &crate::cholesky::SelectedInverse<f64>, a: &LinearCombination) -> (f64, f64) {
    let mean = a.iter().map(|&(i, v)| v * c.mode[i]).sum();
    let mut var = 0.0;
    for (p, &(i, vi)) in a.iter().enumerate() {
        for &(j, vj) in &a[p..] {
            match sel.get(i, j) {
                Some(s) => var += if i == j { vi * vj * s } else { 2.0 * vi * vj * s },
                None => {
                    let mut b = vec![0.0; c.mode.len()];
                    for &(k, v) in a {
                        b[k] += v;
                    }
                    return (mean, c.factor.inverse_quad_form(&b));
                }
            }
        }
    }
    (mean, var)
}

/// Mixture marginals of every latent coordinate.
pub fn latent_marginals(model: &LatentModel, y: &[f64], grid: &HyperGrid) -> Result<LatentPosterior> {
    latent_marginals_with(model, y, grid, &[], LEVEL)
}

/// Mixture marginals of the latent coordinates and of linear combinations
/// (combinations must not repeat an index).
pub fn latent_marginals_with(model: &LatentModel, y: &[f64], grid: &HyperGrid, combos: &[LinearCombination], level: f64) -> Result<LatentPosterior> {
    if grid.is_empty() {
        return Err(Error::Argument("hyperparameter grid is empty".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Argument(format!("credible level {level} outside (0, 1)")));
    }
    let n = model.n_latent();
    if let Some(bad) = combos.iter().flatten().find(|(i, _)| *i >= n) {
        return Err(Error::Dimension(format!("combination index {} for {n} latents", bad.0)));
    }
    let weights = grid.weights();
    let mut means = Vec::with_capacity(grid.len());
    let mut vars = Vec::with_capacity(grid.len());
    let mut comb_means = Vec::new();
    let mut comb_vars = Vec::new();
    let mut lls = Vec::with_capacity(grid.len());
    let mut warm: Option<Vec<f64>> = None;
    for theta in &grid.points {
        let c = conditional(model, theta, y, warm.as_deref())?;
        let sel = c.factor.selected_inverse();
        if !combos.is_empty() {
            let (m, v): (Vec<f64>, Vec<f64>) = combos.iter().map(|a| combination_moments(&c, &sel, a)).unzip();
            comb_means.push(m);
            comb_vars.push(v);
        }
        vars.push(sel.diagonal());
        lls.push(c.log_likelihood);
        warm = Some(c.mode.clone());
        means.push(c.mode);
    }
    let latent = MarginalSummary::from_mixture(&weights, &means, &vars, level);
    let combinations = (!combos.is_empty()).then(|| MarginalSummary::from_mixture(&weights, &comb_means, &comb_vars, level));
    Ok(LatentPosterior { weights, conditional_means: means, conditional_vars: vars, log_likelihoods: lls, latent, combinations })
}

/// Draws `x` from the mixture posterior: a grid point by weight, then the
/// conditional Gaussian through the factor, `x = m + Pᵀ L⁻ᵀ z`.
pub fn sample_latent(model: &LatentModel, y: &[f64], grid: &HyperGrid, n_draws: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n_draws == 0 {
        return Err(Error::Argument("n_draws must be at least 1".into()));
    }
    if grid.is_empty() {
        return Err(Error::Argument("hyperparameter grid is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picker = WeightedIndex::new(grid.weights()).map_err(|e| Error::Argument(format!("grid weights: {e}")))?;
    let picks: Vec<usize> = (0..n_draws).map(|_| picker.sample(&mut rng)).collect();
    let mut conds: Vec<Option<Conditional>> = vec![None; grid.len()];
    let mut draws = Vec::with_capacity(n_draws);
    for &k in &picks {
        if conds[k].is_none() {
            conds[k] = Some(conditional(model, &grid.points[k], y, None)?);
        }
        let c = conds[k].as_ref().expect("just computed");
        let z: Vec<f64> = (0..model.n_latent()).map(|_| rng.sample(StandardNormal)).collect();
        let e = c.factor.solve_lt(&z);
        draws.push(c.mode.iter().zip(&e).map(|(m, e)| m + e).collect());
    }
    Ok(draws)
}
