//! One-factor simulation study on a regular grid: shapes, data generation,
//! the IND / STAT / NSTAT model variants and the evaluation metrics.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lgm::{
    explore_hypergrid, latent_marginals_with, logistic, Component, Family, GridSpec, HyperGrid, LatentModel, LinearCombination,
    MarginalSummary, LEVEL,
};
use crate::mesh::{Mesh, Projector};
use crate::sparse::CscMatrix;
use crate::spde::{BasisOrder, BasisSet, SpdeOperator};

/// Region `D` in which the level effect is nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Square,
    Zigzag,
    Bar,
    U,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [ShapeKind::Square, ShapeKind::Zigzag, ShapeKind::Bar, ShapeKind::U];
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShapeKind::Square => "square",
            ShapeKind::Zigzag => "zigzag",
            ShapeKind::Bar => "bar",
            ShapeKind::U => "u",
        })
    }
}

impl FromStr for ShapeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "square" => Ok(ShapeKind::Square),
            "zigzag" => Ok(ShapeKind::Zigzag),
            "bar" => Ok(ShapeKind::Bar),
            "u" => Ok(ShapeKind::U),
            other => Err(Error::Argument(format!("unknown shape '{other}'"))),
        }
    }
}

/// Boolean mask over an `nx × ny` grid, index `j·nx + i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub nx: usize,
    pub ny: usize,
    pub mask: Vec<bool>,
}

impl ShapeSpec {
    pub fn inside(&self, i: usize, j: usize) -> bool {
        self.mask[j * self.nx + i]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Deterministic shape constructions, all centered on the grid:
/// square = 5×5 block; bar = full-width band 3 rows tall; zigzag = band 3
/// rows tall following a triangle wave of amplitude 2 and period 8; U =
/// strokes of thickness 3 in a 9-wide, 7-tall box (thickness 2 in a 6 × 5
/// box on grids narrower than 11).
pub fn make_shape(kind: ShapeKind, nx: usize, ny: usize) -> Result<ShapeSpec> {
    if nx < 7 || ny < 7 {
        return Err(Error::Argument(format!("shapes need a grid of at least 7×7, got {nx}×{ny}")));
    }
    let (cx, cy) = ((nx - 1) / 2, (ny - 1) / 2);
    let mut mask = vec![false; nx * ny];
    let mut set = |i: usize, j: usize| mask[j * nx + i] = true;
    match kind {
        ShapeKind::Square => {
            for j in cy - 2..=cy + 2 {
                for i in cx - 2..=cx + 2 {
                    set(i, j);
                }
            }
        }
        ShapeKind::Bar => {
            for j in cy - 1..=cy + 1 {
                for i in 0..nx {
                    set(i, j);
                }
            }
        }
        ShapeKind::Zigzag => {
            for i in 0..nx {
                let phase = (i + 2) % 8;
                let z = 2 - (phase as isize - 4).abs();
                let c = cy as isize + z;
                for j in c - 1..=c + 1 {
                    set(i, j as usize);
                }
            }
        }
        ShapeKind::U => {
            let t: usize = if nx >= 11 && ny >= 9 { 3 } else { 2 };
            let (w, h) = (3 * t, 2 * t + 1);
            let x0 = (cx + 1).saturating_sub(w.div_ceil(2)).min(nx - w);
            let y0 = (cy + 1).saturating_sub(h.div_ceil(2)).min(ny - h);
            for j in y0..y0 + h {
                for i in x0..x0 + w {
                    let arm = i < x0 + t || i >= x0 + w - t;
                    let base = j < y0 + t;
                    if arm || base {
                        set(i, j);
                    }
                }
            }
        }
    }
    let spec = ShapeSpec { kind, nx, ny, mask };
    let c = spec.count();
    if c == 0 || c == nx * ny {
        return Err(Error::Argument("shape mask must have inside and outside cells".into()));
    }
    Ok(spec)
}

/// Simulation settings for one `(β0, β1)` combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub nx: usize,
    pub ny: usize,
    pub beta0: f64,
    pub beta1: f64,
    pub sigma: f64,
    pub family: Family,
    pub n_sim: usize,
    pub seed: u64,
    /// Mesh extension beyond the observation grid.
    pub extension_layers: usize,
}

impl SimConfig {
    pub fn gaussian(beta1: f64, n_sim: usize, seed: u64) -> Self {
        Self { nx: 15, ny: 15, beta0: 0.0, beta1, sigma: 1.0, family: Family::Gaussian, n_sim, seed, extension_layers: 2 }
    }

    pub fn bernoulli(beta0: f64, beta1: f64, n_sim: usize, seed: u64) -> Self {
        Self { nx: 15, ny: 15, beta0, beta1, sigma: 0.1, family: Family::Bernoulli, n_sim, seed, extension_layers: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) && !(self.sigma == 0.0 && self.family == Family::Gaussian) {
            return Err(Error::Argument(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.n_sim == 0 {
            return Err(Error::Argument("n_sim must be at least 1".into()));
        }
        if !self.beta0.is_finite() || !self.beta1.is_finite() {
            return Err(Error::Argument("effects must be finite".into()));
        }
        Ok(())
    }

    fn n_loc(&self) -> usize {
        self.nx * self.ny
    }
}

/// Observations of the 2-level, 2-replicate design. Index of
/// `(level i, replicate j, location n)` is `(2i + j)·N + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    /// True link-scale mean `μ_i(s_n)` at index `i·N + n`.
    pub truth: Vec<f64>,
    pub n_loc: usize,
}

pub const LEVELS: usize = 2;
pub const REPLICATES: usize = 2;

/// Draws one dataset: `g(μ) = β0 + i β1 1{s ∈ D} + ε`, `ε ~ N(0, σ²)`.
pub fn simulate_dataset(config: &SimConfig, shape: &ShapeSpec, seed: u64) -> Result<Dataset> {
    config.validate()?;
    if shape.nx != config.nx || shape.ny != config.ny {
        return Err(Error::Dimension("shape grid differs from the configured grid".into()));
    }
    let n = config.n_loc();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, config.sigma).map_err(|e| Error::Argument(e.to_string()))?;
    let mut truth = vec![0.0; LEVELS * n];
    let mut y = vec![0.0; LEVELS * REPLICATES * n];
    for i in 0..LEVELS {
        for loc in 0..n {
            truth[i * n + loc] = config.beta0 + if i == 1 && shape.mask[loc] { config.beta1 } else { 0.0 };
        }
        for j in 0..REPLICATES {
            for loc in 0..n {
                let eta = truth[i * n + loc] + noise.sample(&mut rng);
                y[(2 * i + j) * n + loc] = match config.family {
                    Family::Gaussian => eta,
                    Family::Bernoulli => {
                        let p = logistic(eta);
                        if Bernoulli::new(p).map_err(|e| Error::Argument(e.to_string()))?.sample(&mut rng) { 1.0 } else { 0.0 }
                    }
                };
            }
        }
    }
    Ok(Dataset { y, truth, n_loc: n })
}

/// Model variant for the level effect `β1(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Variant {
    /// Independent per-location effects with vague priors.
    Ind,
    /// Stationary SPDE field.
    Stat,
    /// Nonstationary SPDE field.
    Nstat,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Ind, Variant::Stat, Variant::Nstat];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Ind => "IND",
            Variant::Stat => "STAT",
            Variant::Nstat => "NSTAT",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "IND" => Ok(Variant::Ind),
            "STAT" => Ok(Variant::Stat),
            "NSTAT" => Ok(Variant::Nstat),
            other => Err(Error::Argument(format!("unknown variant '{other}'"))),
        }
    }
}

/// Mesh, projector and operator shared by every fit on one grid.
#[derive(Debug, Clone)]
pub struct StudyContext {
    pub nx: usize,
    pub ny: usize,
    pub mesh: Mesh<f64>,
    pub projector: Projector<f64>,
    pub operator: Arc<SpdeOperator<f64>>,
    pub basis: Arc<BasisSet<f64>>,
    pub grid_spec: GridSpec,
}

impl StudyContext {
    /// Unit-spaced grid mesh with `extension_layers` extra rings; the
    /// observation points are the interior grid vertices.
    pub fn new(nx: usize, ny: usize, extension_layers: usize, basis: BasisOrder) -> Result<Self> {
        let mesh = Mesh::grid(nx, ny, 1.0, extension_layers)?;
        let points: Vec<[f64; 2]> = (0..ny).flat_map(|j| (0..nx).map(move |i| [i as f64, j as f64])).collect();
        let projector = mesh.projector(&points)?;
        let operator = Arc::new(SpdeOperator::from_mesh(&mesh)?);
        let basis = Arc::new(BasisSet::of_order(&mesh, basis, 0.0));
        Ok(Self { nx, ny, mesh, projector, operator, basis, grid_spec: GridSpec::default() })
    }

    pub fn n_loc(&self) -> usize {
        self.nx * self.ny
    }
}

/// Posterior summaries of one fit: `β1(s_n)` and `μ_i(s_n)` (index
/// `i·N + n`), plus the hyperparameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantFit {
    pub variant: Variant,
    pub beta1: MarginalSummary,
    pub mu: MarginalSummary,
    pub grid: HyperGrid,
}

/// Builds the latent model of a variant and the linear combinations for
/// `β1(s_n)` and `μ_i(s_n)`.
pub fn variant_model(ctx: &StudyContext, variant: Variant, family: Family) -> Result<(LatentModel, Vec<LinearCombination>)> {
    let n = ctx.n_loc();
    let n_obs = LEVELS * REPLICATES * n;
    let mut t = Vec::new();
    let mut combos: Vec<LinearCombination> = Vec::with_capacity(3 * n);
    let components = match variant {
        Variant::Ind => {
            // latent: β0(s) then β1(s)
            for i in 0..LEVELS {
                for j in 0..REPLICATES {
                    for loc in 0..n {
                        let row = (2 * i + j) * n + loc;
                        t.push((row, loc, 1.0));
                        if i == 1 {
                            t.push((row, n + loc, 1.0));
                        }
                    }
                }
            }
            combos.extend((0..n).map(|loc| vec![(n + loc, 1.0)]));
            combos.extend((0..n).map(|loc| vec![(loc, 1.0)]));
            combos.extend((0..n).map(|loc| vec![(loc, 1.0), (n + loc, 1.0)]));
            vec![("beta0".to_string(), Component::fixed(n)), ("beta1".to_string(), Component::fixed(n))]
        }
        Variant::Stat | Variant::Nstat => {
            // latent: β0 then the β1 field on the mesh
            for i in 0..LEVELS {
                for j in 0..REPLICATES {
                    for loc in 0..n {
                        let row = (2 * i + j) * n + loc;
                        t.push((row, 0, 1.0));
                        if i == 1 {
                            t.extend(ctx.projector.row(loc).iter().map(|&(v, w)| (row, 1 + v, w)));
                        }
                    }
                }
            }
            let field = |loc: usize| ctx.projector.row(loc).iter().map(|&(v, w)| (1 + v, w)).collect::<Vec<_>>();
            combos.extend((0..n).map(field));
            combos.extend((0..n).map(|_| vec![(0, 1.0)]));
            combos.extend((0..n).map(|loc| [vec![(0, 1.0)], field(loc)].concat()));
            let comp = if variant == Variant::Stat {
                Component::stationary(Arc::clone(&ctx.operator))
            } else {
                Component::nonstationary(Arc::clone(&ctx.operator), Arc::clone(&ctx.basis))?
            };
            vec![("beta0".to_string(), Component::fixed(1)), ("beta1".to_string(), comp)]
        }
    };
    let n_latent = components.iter().map(|c| c.1.size()).sum();
    let design = CscMatrix::from_triplets(n_obs, n_latent, &t)?;
    let model = LatentModel::new(family, components, design, vec![0.0; n_obs])?;
    Ok((model, combos))
}

/// Fits a variant; `init` optionally overrides the hyperparameter start.
pub fn fit_variant(ctx: &StudyContext, data: &Dataset, variant: Variant, family: Family, init: Option<&[f64]>) -> Result<VariantFit> {
    let (model, combos) = variant_model(ctx, variant, family)?;
    if data.y.len() != model.n_obs() {
        return Err(Error::Dimension(format!("{} observations for a design of {}", data.y.len(), model.n_obs())));
    }
    let grid = explore_hypergrid(&model, &data.y, init, &ctx.grid_spec)?;
    let post = latent_marginals_with(&model, &data.y, &grid, &combos, LEVEL)?;
    let all = post.combinations.expect("combinations requested");
    let n = ctx.n_loc();
    let slice = |r: std::ops::Range<usize>| MarginalSummary {
        mean: all.mean[r.clone()].to_vec(),
        sd: all.sd[r.clone()].to_vec(),
        lower: all.lower[r.clone()].to_vec(),
        upper: all.upper[r].to_vec(),
        level: all.level,
    };
    Ok(VariantFit { variant, beta1: slice(0..n), mu: slice(n..3 * n), grid })
}

/// Starting point for NSTAT from a STAT fit: same tau and kappa, flat
/// basis coefficients.
pub fn nstat_init_from_stat(ctx: &StudyContext, stat: &VariantFit, family: Family) -> Vec<f64> {
    let p = ctx.basis.p();
    let m = &stat.grid.mode;
    let mut init = vec![m[0], m[1]];
    init.extend(std::iter::repeat_n(0.0, 2 * p));
    if family == Family::Gaussian {
        init.push(m[2]);
    }
    init
}

/// Per-location share of intervals containing zero.
pub fn ci_zero_map(fits: &[&MarginalSummary]) -> Result<Vec<f64>> {
    let first = fits.first().ok_or_else(|| Error::Argument("no fits".into()))?;
    let n = first.len();
    if fits.iter().any(|f| f.len() != n) {
        return Err(Error::Dimension("fits differ in length".into()));
    }
    Ok((0..n).map(|i| fits.iter().filter(|f| f.covers(i, 0.0)).count() as f64 / fits.len() as f64).collect())
}

/// Share of intervals (over locations and fits) containing the truth.
pub fn coverage_true(fits: &[&MarginalSummary], truth: &[f64]) -> Result<f64> {
    if fits.is_empty() {
        return Err(Error::Argument("no fits".into()));
    }
    let mut hit = 0usize;
    for f in fits {
        if f.len() != truth.len() {
            return Err(Error::Dimension("truth and fit lengths differ".into()));
        }
        hit += (0..truth.len()).filter(|&i| f.covers(i, truth[i])).count();
    }
    Ok(hit as f64 / (fits.len() * truth.len()) as f64)
}

/// Area under the ROC curve by the rank statistic, ties averaged.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension("scores and labels differ in length".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Argument("AUC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < idx.len() {
        let mut e = k;
        while e + 1 < idx.len() && scores[idx[e + 1]] == scores[idx[k]] {
            e += 1;
        }
        let avg = (k + e) as f64 / 2.0 + 1.0;
        rank_sum += idx[k..=e].iter().filter(|&&i| labels[i]).count() as f64 * avg;
        k = e + 1;
    }
    Ok((rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos * neg) as f64)
}

/// Area under the ROC curve by trapezoidal integration over thresholds.
pub fn roc_auc_trapezoid(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 || scores.len() != labels.len() {
        return Err(Error::Argument("AUC needs both classes and matching lengths".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp, mut area) = (0.0, 0.0, 0.0);
    let mut k = 0;
    while k < idx.len() {
        let (tp0, fp0) = (tp, fp);
        let s = scores[idx[k]];
        while k < idx.len() && scores[idx[k]] == s {
            if labels[idx[k]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            k += 1;
        }
        area += (fp - fp0) / neg * (tp + tp0) / (2.0 * pos);
    }
    Ok(area)
}

/// Evidence score for a nonzero effect: `|mean| / sd`.
pub fn evidence_scores(beta1: &MarginalSummary) -> Vec<f64> {
    beta1.mean.iter().zip(&beta1.sd).map(|(m, s)| if *s > 0.0 { m.abs() / s } else { f64::INFINITY }).collect()
}

/// Discretized gradient `D_n`: mean difference to the 4, 3 or 2 grid
/// neighbors of each location.
pub fn gradient_map(field: &[f64], nx: usize, ny: usize) -> Result<Vec<f64>> {
    if field.len() != nx * ny || nx < 2 || ny < 2 {
        return Err(Error::Dimension(format!("field of length {} on a {nx}×{ny} grid", field.len())));
    }
    let mut d = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let c = field[j * nx + i];
            let mut acc = 0.0;
            let mut k = 0;
            let mut add = |v: f64| {
                acc += c - v;
                k += 1;
            };
            if i > 0 {
                add(field[j * nx + i - 1]);
            }
            if i + 1 < nx {
                add(field[j * nx + i + 1]);
            }
            if j > 0 {
                add(field[(j - 1) * nx + i]);
            }
            if j + 1 < ny {
                add(field[(j + 1) * nx + i]);
            }
            d[j * nx + i] = acc / k as f64;
        }
    }
    Ok(d)
}

/// Median and interquartile range (linear-interpolated quantiles).
pub fn median_iqr(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    (q(0.5), q(0.75) - q(0.25))
}

/// Per-variant outcome of a study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub variant: Variant,
    pub ci_zero: Vec<f64>,
    /// Gaussian family: interval coverage of the true `μ`.
    pub coverage: Option<f64>,
    /// Bernoulli family: AUC averaged over replications.
    pub auc: Option<f64>,
    pub mean_abs_gradient: Vec<f64>,
    pub gradient_median: f64,
    pub gradient_iqr: f64,
    /// Mean squared error of the posterior mean of `β1`.
    pub mse: f64,
    pub completed: usize,
    pub failures: Vec<String>,
}

/// Seed of replication `r` derived from the master seed.
pub fn replicate_seed(master: u64, r: u64) -> u64 {
    // splitmix64 of the counter offset by the master seed
    let mut z = master.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(r + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

type Replicate = (Vec<std::result::Result<VariantFit, String>>, Vec<f64>);

fn replicate(config: &SimConfig, shape: &ShapeSpec, variants: &[Variant], ctx: &StudyContext, r: usize) -> Result<Replicate> {
    let data = simulate_dataset(config, shape, replicate_seed(config.seed, r as u64))?;
    let mut stat_fit: Option<VariantFit> = None;
    let mut fits = Vec::with_capacity(variants.len());
    for &variant in variants {
        let init = match (variant, &stat_fit) {
            (Variant::Nstat, Some(s)) => Some(nstat_init_from_stat(ctx, s, config.family)),
            _ => None,
        };
        let fit = fit_variant(ctx, &data, variant, config.family, init.as_deref()).map_err(|e| format!("replication {r}: {e}"));
        if let (Variant::Stat, Ok(f)) = (variant, &fit) {
            stat_fit = Some(f.clone());
        }
        fits.push(fit);
    }
    Ok((fits, data.truth))
}

/// Runs `simulate → fit → metrics` over `n_sim` replications; failed fits
/// are recorded and skipped.
pub fn run_study(config: &SimConfig, shape: &ShapeSpec, variants: &[Variant], ctx: &StudyContext) -> Result<Vec<StudyResult>> {
    run_study_threads(config, shape, variants, ctx, 1)
}

/// [`run_study`] with replications spread over `threads` workers. Results
/// do not depend on the worker count.
pub fn run_study_threads(config: &SimConfig, shape: &ShapeSpec, variants: &[Variant], ctx: &StudyContext, threads: usize) -> Result<Vec<StudyResult>> {
    config.validate()?;
    if ctx.nx != config.nx || ctx.ny != config.ny {
        return Err(Error::Dimension("study context grid differs from the configuration".into()));
    }
    if variants.is_empty() {
        return Err(Error::Argument("no variants requested".into()));
    }
    let n = config.n_loc();
    let truth_beta1: Vec<f64> = shape.mask.iter().map(|&m| if m { config.beta1 } else { 0.0 }).collect();
    let threads = threads.clamp(1, config.n_sim);
    let reps: Vec<Replicate> = if threads == 1 {
        (0..config.n_sim).map(|r| replicate(config, shape, variants, ctx, r)).collect::<Result<_>>()?
    } else {
        let mut slots: Vec<Option<Result<Replicate>>> = (0..config.n_sim).map(|_| None).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|w| {
                    scope.spawn(move || {
                        (w..config.n_sim).step_by(threads).map(|r| (r, replicate(config, shape, variants, ctx, r))).collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (r, rep) in h.join().expect("study worker panicked") {
                    slots[r] = Some(rep);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every replication ran")).collect::<Result<_>>()?
    };
    let mut fits: Vec<Vec<VariantFit>> = vec![Vec::new(); variants.len()];
    let mut failures: Vec<Vec<String>> = vec![Vec::new(); variants.len()];
    let mut truths = Vec::with_capacity(reps.len());
    for (rep_fits, truth) in reps {
        for (v, fit) in rep_fits.into_iter().enumerate() {
            match fit {
                Ok(f) => fits[v].push(f),
                Err(e) => failures[v].push(e),
            }
        }
        truths.push(truth);
    }
    let mut out = Vec::new();
    for (v, &variant) in variants.iter().enumerate() {
        let f = &fits[v];
        if f.is_empty() {
            return Err(Error::Optimization(format!("every {variant} fit failed: {}", failures[v].join("; "))));
        }
        let betas: Vec<&MarginalSummary> = f.iter().map(|f| &f.beta1).collect();
        let ci_zero = ci_zero_map(&betas)?;
        let coverage = match config.family {
            Family::Gaussian => {
                let mus: Vec<&MarginalSummary> = f.iter().map(|f| &f.mu).collect();
                Some(coverage_true(&mus, &truths[0])?)
            }
            Family::Bernoulli => None,
        };
        let auc = match config.family {
            Family::Bernoulli => {
                let aucs: Vec<f64> = f.iter().map(|f| roc_auc(&evidence_scores(&f.beta1), &shape.mask)).collect::<Result<_>>()?;
                Some(aucs.iter().sum::<f64>() / aucs.len() as f64)
            }
            Family::Gaussian => None,
        };
        let mut mean_abs = vec![0.0; n];
        let mut mse = 0.0;
        for fit in f {
            let d = gradient_map(&fit.beta1.mean, config.nx, config.ny)?;
            mean_abs.iter_mut().zip(&d).for_each(|(m, d)| *m += d.abs() / f.len() as f64);
            mse += fit.beta1.mean.iter().zip(&truth_beta1).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (n * f.len()) as f64;
        }
        let (gradient_median, gradient_iqr) = median_iqr(&mean_abs);
        out.push(StudyResult {
            variant,
            ci_zero,
            coverage,
            auc,
            mean_abs_gradient: mean_abs,
            gradient_median,
            gradient_iqr,
            mse,
            completed: f.len(),
            failures: failures[v].clone(),
        });
    }
    Ok(out)
}

/// Writes `ci_zero.csv`, `gradient.csv` (per location) and `summary.csv`.
pub fn write_study_csv(dir: &Path, shape: &ShapeSpec, results: &[StudyResult]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let per_location = |name: &str, pick: &dyn Fn(&StudyResult) -> &Vec<f64>| -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(name))?;
        let mut header = vec!["location".to_string(), "x".into(), "y".into(), "inside".into()];
        header.extend(results.iter().map(|r| r.variant.to_string()));
        w.write_record(&header)?;
        for loc in 0..shape.mask.len() {
            let mut rec = vec![loc.to_string(), (loc % shape.nx).to_string(), (loc / shape.nx).to_string(), (shape.mask[loc] as u8).to_string()];
            rec.extend(results.iter().map(|r| pick(r)[loc].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    };
    per_location("ci_zero.csv", &|r| &r.ci_zero)?;
    per_location("gradient.csv", &|r| &r.mean_abs_gradient)?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(["variant", "coverage", "auc", "gradient_median", "gradient_iqr", "mse", "completed", "failures"])?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in results {
        w.write_record([
            r.variant.to_string(),
            opt(r.coverage),
            opt(r.auc),
            r.gradient_median.to_string(),
            r.gradient_iqr.to_string(),
            r.mse.to_string(),
            r.completed.to_string(),
            r.failures.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-replication failure log (one line each).
pub fn write_failures<W: Write>(mut w: W, results: &[StudyResult]) -> Result<()> {
    for r in results {
        for f in &r.failures {
            writeln!(w, "{}: {f}", r.variant)?;
        }
    }
    Ok(())
}

/// Draws one uniform in `[0, 1)` from a seed; used for reproducibility checks.
pub fn seeded_uniform(seed: u64) -> f64 {
    ChaCha8Rng::seed_from_u64(seed).random()
}
