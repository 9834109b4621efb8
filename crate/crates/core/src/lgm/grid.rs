//! Hyperparameter posterior: mode search, curvature-standardized design
//! points and normalized integration weights.

use std::cell::{Cell, RefCell};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::laplace::conditional;
use super::model::LatentModel;
use super::optimize::{fd_hessian, nelder_mead_max, NelderMeadOptions};

/// Grid construction controls (standardized units are posterior sd's).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Points per dimension (odd).
    pub points_per_dim: usize,
    pub step: f64,
    /// Points more than this below the mode in log density are dropped.
    pub prune: f64,
    /// Above this many free hyperparameters the tensor grid is replaced by
    /// the center plus points along each principal axis.
    pub max_tensor_dims: usize,
    /// Upper bound on the standard deviation used along a direction.
    pub max_sd: f64,
    /// Finite-difference step for the curvature at the mode.
    pub fd_step: f64,
    pub search: NelderMeadOptions,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points_per_dim: 5,
            step: 0.75,
            prune: 10.0,
            max_tensor_dims: 3,
            max_sd: 1.0,
            fd_step: 0.02,
            search: NelderMeadOptions::default(),
        }
    }
}

/// Design points in hyperparameter space with normalized weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub names: Vec<String>,
    /// Full hyperparameter vectors (pinned coordinates included).
    pub points: Vec<Vec<f64>>,
    /// Unnormalized `log π̃(θ_k | y)`.
    pub log_posterior: Vec<f64>,
    /// `log w_k`, with `Σ exp(log w_k) = 1`.
    pub log_weights: Vec<f64>,
    /// Mode of the hyperparameter posterior (full vector).
    pub mode: Vec<f64>,
    pub evaluations: usize,
}

impl HyperGrid {
    /// Builds a grid from points and unnormalized log densities (equal
    /// cell volumes), pruning and normalizing.
    pub fn from_log_density(names: Vec<String>, points: Vec<Vec<f64>>, log_posterior: Vec<f64>, prune: f64) -> Result<Self> {
        if points.is_empty() || points.len() != log_posterior.len() {
            return Err(Error::Argument("grid needs matching, nonempty points and densities".into()));
        }
        let top = log_posterior.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::Optimization("no grid point has a finite density".into()));
        }
        let mode = points[log_posterior.iter().position(|&v| v == top).expect("max exists")].clone();
        let keep: Vec<usize> = (0..points.len()).filter(|&k| log_posterior[k].is_finite() && log_posterior[k] >= top - prune).collect();
        let points: Vec<Vec<f64>> = keep.iter().map(|&k| points[k].clone()).collect();
        let log_posterior: Vec<f64> = keep.iter().map(|&k| log_posterior[k]).collect();
        let lse = top + log_posterior.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
        let log_weights = log_posterior.iter().map(|v| v - lse).collect();
        Ok(Self { names, points, log_posterior, log_weights, mode, evaluations: 0 })
    }

    /// Single point with weight one.
    pub fn single(names: Vec<String>, theta: Vec<f64>) -> Self {
        Self { names, points: vec![theta.clone()], log_posterior: vec![0.0], log_weights: vec![0.0], mode: theta, evaluations: 0 }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|v| v.exp()).collect()
    }

    /// Posterior mean and sd of each hyperparameter under the grid weights.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let w = self.weights();
        let d = self.names.len();
        let mean: Vec<f64> = (0..d).map(|k| self.points.iter().zip(&w).map(|(p, w)| w * p[k]).sum()).collect();
        let sd = (0..d)
            .map(|k| self.points.iter().zip(&w).map(|(p, w)| w * (p[k] - mean[k]).powi(2)).sum::<f64>().max(0.0).sqrt())
            .collect();
        (mean, sd)
    }
}

/// Standardized design offsets `z` for `d` free dimensions.
fn design(d: usize, spec: &GridSpec) -> Vec<Vec<f64>> {
    let half = (spec.points_per_dim.max(1) - 1) / 2;
    let levels: Vec<f64> = (-(half as isize)..=half as isize).map(|k| k as f64 * spec.step).collect();
    if d == 0 {
        return vec![vec![]];
    }
    if d <= spec.max_tensor_dims {
        let mut out = vec![vec![]];
        for _ in 0..d {
            out = out.into_iter().flat_map(|p: Vec<f64>| levels.iter().map(move |&l| [p.clone(), vec![l]].concat())).collect();
        }
        out
    } else {
        let mut out = vec![vec![0.0; d]];
        for k in 0..d {
            for &l in levels.iter().filter(|&&l| l != 0.0) {
                let mut z = vec![0.0; d];
                z[k] = l;
                out.push(z);
            }
        }
        out
    }
}

/// Explores a generic log density over a box: mode by Nelder-Mead,
/// curvature by finite differences, standardized grid, pruning.
pub fn explore_objective<F>(f: F, names: Vec<String>, init: &[f64], lower: &[f64], upper: &[f64], spec: &GridSpec) -> Result<HyperGrid>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let d = init.len();
    let max = nelder_mead_max(&f, init, lower, upper, spec.search)?;
    let evaluations = Cell::new(max.evaluations);
    let call = |x: &[f64]| {
        evaluations.set(evaluations.get() + 1);
        f(x)
    };

    // principal directions of the negative Hessian, flat ones capped
    let (dirs, sds) = if d == 0 {
        (DMatrix::zeros(0, 0), vec![])
    } else {
        match fd_hessian(call, &max.x, max.value, spec.fd_step) {
            Ok(h) => {
                let neg = DMatrix::from_fn(d, d, |i, j| -h[i][j]);
                let eig = SymmetricEigen::new(neg);
                let sds = eig.eigenvalues.iter().map(|&l| if l > 1.0 / (spec.max_sd * spec.max_sd) { 1.0 / l.sqrt() } else { spec.max_sd }).collect();
                (eig.eigenvectors, sds)
            }
            Err(_) => (DMatrix::identity(d, d), vec![spec.max_sd; d]),
        }
    };

    let mut points = Vec::new();
    let mut dens = Vec::new();
    for z in design(d, spec) {
        let mut theta = max.x.clone();
        for (k, &zk) in z.iter().enumerate() {
            for i in 0..d {
                theta[i] += dirs[(i, k)] * sds[k] * zk;
            }
        }
        let is_center = z.iter().all(|&v| v == 0.0);
        let inside = theta.iter().zip(lower.iter().zip(upper)).all(|(t, (lo, hi))| t >= lo && t <= hi);
        if !is_center && !inside {
            continue;
        }
        let v = if is_center { max.value } else { call(&theta).unwrap_or(f64::NEG_INFINITY) };
        points.push(theta);
        dens.push(v);
    }
    let mut grid = HyperGrid::from_log_density(names, points, dens, spec.prune)?;
    grid.mode = max.x;
    grid.evaluations = evaluations.get();
    Ok(grid)
}

/// Hyperparameter grid for a latent model, starting the search at `init`
/// (the model's default start when `None`).
pub fn explore_hypergrid(model: &LatentModel, y: &[f64], init: Option<&[f64]>, spec: &GridSpec) -> Result<HyperGrid> {
    model.check_y(y)?;
    let hyper = model.hyper();
    let free = hyper.free();
    let start_full = init.map(<[f64]>::to_vec).unwrap_or_else(|| hyper.init.clone());
    model.check_theta(&start_full)?;
    let pick = |v: &[f64]| free.iter().map(|&k| v[k]).collect::<Vec<f64>>();
    let warm: RefCell<Option<Vec<f64>>> = RefCell::new(None);
    let objective = |z: &[f64]| -> Result<f64> {
        let theta = hyper.expand(z);
        let w = warm.borrow().clone();
        let c = conditional(model, &theta, y, w.as_deref())?;
        *warm.borrow_mut() = Some(c.mode);
        Ok(c.log_posterior)
    };
    let names: Vec<String> = free.iter().map(|&k| hyper.names[k].clone()).collect();
    let g = explore_objective(objective, names, &pick(&start_full), &pick(&hyper.lower), &pick(&hyper.upper), spec)?;
    Ok(HyperGrid {
        names: hyper.names.clone(),
        points: g.points.iter().map(|p| hyper.expand(p)).collect(),
        log_posterior: g.log_posterior,
        log_weights: g.log_weights,
        mode: hyper.expand(&g.mode),
        evaluations: g.evaluations,
    })
}
