//! Two-factor functional ANOVA over a 2×2 ensemble: per-location harmonic
//! time fits, then a latent Gaussian model with two spatial fields.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lgm::{explore_hypergrid, latent_marginals, logistic, Component, Family, GridSpec, HyperGrid, LatentModel, MarginalSummary};
use crate::mesh::{Mesh, Projector};
use crate::sparse::CscMatrix;
use crate::spde::{BasisOrder, BasisSet, SpdeOperator};

/// Prior variance of regression coefficients in the time fits.
pub const COEF_PRIOR_VARIANCE: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub altitude: f64,
}

/// One ensemble member: PBL level `pbl` (0 = MYJ, 1 = ACM2) and resolution
/// level `res` (0 = 9 km, 1 = 6 km) on its native grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRun {
    pub pbl: u8,
    pub res: u8,
    pub locations: Vec<Location>,
    pub times: Vec<f64>,
    /// `values[location][time]`.
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct LongRow {
    location_id: String,
    x: f64,
    y: f64,
    altitude: f64,
    t: f64,
    value: f64,
}

impl EnsembleRun {
    pub fn new(pbl: u8, res: u8, locations: Vec<Location>, times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if pbl > 1 || res > 1 {
            return Err(Error::Design(format!("level codes must be 0 or 1, got ({pbl}, {res})")));
        }
        if locations.is_empty() || times.is_empty() {
            return Err(Error::InsufficientData("run has no locations or no time points".into()));
        }
        if values.len() != locations.len() || values.iter().any(|v| v.len() != times.len()) {
            return Err(Error::Dimension("values must be locations × times".into()));
        }
        Ok(Self { pbl, res, locations, times, values })
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.locations.iter().map(|l| [l.x, l.y]).collect()
    }

    pub fn altitude(&self) -> Vec<f64> {
        self.locations.iter().map(|l| l.altitude).collect()
    }

    /// Reads the long format `location_id,x,y,altitude,t,value`.
    pub fn read_csv(path: &Path, pbl: u8, res: u8) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut locations = Vec::new();
        let mut obs: Vec<Vec<(f64, f64)>> = Vec::new();
        for row in rdr.deserialize() {
            let r: LongRow = row?;
            let k = *index.entry(r.location_id.clone()).or_insert_with(|| {
                locations.push(Location { id: r.location_id.clone(), x: r.x, y: r.y, altitude: r.altitude });
                obs.push(Vec::new());
                locations.len() - 1
            });
            obs[k].push((r.t, r.value));
        }
        let mut times: Option<Vec<f64>> = None;
        let mut values = Vec::with_capacity(obs.len());
        for (k, mut o) in obs.into_iter().enumerate() {
            o.sort_by(|a, b| a.0.total_cmp(&b.0));
            let t: Vec<f64> = o.iter().map(|p| p.0).collect();
            match &times {
                None => times = Some(t),
                Some(t0) if *t0 != t => {
                    return Err(Error::Dimension(format!("location '{}' has a different set of time points", locations[k].id)));
                }
                _ => {}
            }
            values.push(o.into_iter().map(|p| p.1).collect());
        }
        Self::new(pbl, res, locations, times.unwrap_or_default(), values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["location_id", "x", "y", "altitude", "t", "value"])?;
        for (loc, vals) in self.locations.iter().zip(&self.values) {
            for (t, v) in self.times.iter().zip(vals) {
                w.write_record([loc.id.clone(), loc.x.to_string(), loc.y.to_string(), loc.altitude.to_string(), t.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Same grid and times with new values.
    pub fn with_values(&self, values: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(self.pbl, self.res, self.locations.clone(), self.times.clone(), values)
    }
}

/// Entry of a run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub pbl_level: u8,
    pub res_level: u8,
    pub file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub runs: Vec<RunEntry>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Loads every run; relative file paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<Vec<EnsembleRun>> {
        let runs = self
            .runs
            .iter()
            .map(|e| {
                let p = if e.file.is_absolute() { e.file.clone() } else { base.join(&e.file) };
                EnsembleRun::read_csv(&p, e.pbl_level, e.res_level)
            })
            .collect::<Result<Vec<_>>>()?;
        check_design(&runs)?;
        Ok(runs)
    }

    /// Writes each run as `run_<pbl>_<res>.csv` in `dir` plus `manifest.json`.
    pub fn write_runs(dir: &Path, runs: &[EnsembleRun]) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::new();
        for r in runs {
            let file = PathBuf::from(format!("run_{}_{}.csv", r.pbl, r.res));
            r.write_csv(&dir.join(&file))?;
            entries.push(RunEntry { pbl_level: r.pbl, res_level: r.res, file });
        }
        let path = dir.join("manifest.json");
        RunManifest { runs: entries }.write(&path)?;
        Ok(path)
    }
}

/// Checks for exactly one run per cell of the 2×2 design and a shared time
/// length.
pub fn check_design(runs: &[EnsembleRun]) -> Result<()> {
    let mut seen = [[0usize; 2]; 2];
    for r in runs {
        if r.pbl > 1 || r.res > 1 {
            return Err(Error::Design(format!("invalid levels ({}, {})", r.pbl, r.res)));
        }
        seen[r.pbl as usize][r.res as usize] += 1;
    }
    for (i, row) in seen.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c != 1 {
                return Err(Error::Design(format!("design cell (pbl={i}, res={j}) has {c} runs, expected 1")));
            }
        }
    }
    let n = runs[0].n_times();
    if runs.iter().any(|r| r.n_times() != n) {
        return Err(Error::Design("runs differ in time length".into()));
    }
    Ok(())
}

/// Harmonic regressors `sin(2πkt/δ)` for `k = 1..K`, then the cosines.
pub fn harmonic_regressors(t: f64, k: usize, delta: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(2 * k);
    x.extend((1..=k).map(|h| (2.0 * PI * h as f64 * t / delta).sin()));
    x.extend((1..=k).map(|h| (2.0 * PI * h as f64 * t / delta).cos()));
    x
}

/// Posterior means (and sd's) of the harmonic coefficients per location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicFit {
    pub k: usize,
    pub delta: f64,
    pub family: Family,
    /// `[ζ_1..ζ_K, ζ'_1..ζ'_K]` per location.
    pub coefficients: Vec<Vec<f64>>,
    pub sd: Vec<Vec<f64>>,
    /// Locations whose fit was degenerate; their coefficients are zero.
    pub flagged: Vec<bool>,
}

impl HarmonicFit {
    /// Zero time effect for `n` locations.
    pub fn zero(n: usize, k: usize, delta: f64, family: Family) -> Self {
        Self { k, delta, family, coefficients: vec![vec![0.0; 2 * k]; n], sd: vec![vec![0.0; 2 * k]; n], flagged: vec![false; n] }
    }

    pub fn n_locations(&self) -> usize {
        self.coefficients.len()
    }

    /// Time effect `f(t)` at location `loc`.
    pub fn eval(&self, loc: usize, t: f64) -> f64 {
        harmonic_regressors(t, self.k, self.delta).iter().zip(&self.coefficients[loc]).map(|(a, b)| a * b).sum()
    }
}

/// Fits each series on an intercept plus the `2K` harmonics with vague
/// Gaussian priors; the intercept is a nuisance term and is not returned.
pub fn fit_temporal(series: &[Vec<f64>], times: &[f64], k: usize, delta: f64, family: Family) -> Result<HarmonicFit> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Argument(format!("period must be positive, got {delta}")));
    }
    if times.len() < 2 * k + 1 {
        return Err(Error::InsufficientData(format!("{} time points cannot support {k} harmonics", times.len())));
    }
    if series.iter().any(|s| s.len() != times.len()) {
        return Err(Error::Dimension("series length differs from the time axis".into()));
    }
    let p = 2 * k + 1;
    let x = DMatrix::from_fn(times.len(), p, |r, c| if c == 0 { 1.0 } else { harmonic_regressors(times[r], k, delta)[c - 1] });
    let xtx = x.transpose() * &x;
    let mut fit = HarmonicFit::zero(series.len(), k, delta, family);
    for (loc, s) in series.iter().enumerate() {
        let y = DVector::from_column_slice(s);
        let res = match family {
            Family::Gaussian => gaussian_regression(&x, &xtx, &y),
            Family::Bernoulli => {
                if s.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::Argument(format!("location {loc}: bernoulli series must be 0/1")));
                }
                if s.iter().all(|&v| v == s[0]) { None } else { logistic_regression(&x, &y) }
            }
        };
        match res {
            Some((mean, sd)) => {
                fit.coefficients[loc] = mean[1..].to_vec();
                fit.sd[loc] = sd[1..].to_vec();
            }
            None => fit.flagged[loc] = true,
        }
    }
    Ok(fit)
}

/// Conjugate fit with the residual variance plugged in.
fn gaussian_regression(x: &DMatrix<f64>, xtx: &DMatrix<f64>, y: &DVector<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
    let (n, p) = x.shape();
    let xty = x.transpose() * y;
    let jitter = 1e-12 * (xtx.trace() / p as f64).max(1.0);
    let ols = (xtx + DMatrix::identity(p, p) * jitter).cholesky()?.solve(&xty);
    let rss = (y - x * &ols).norm_squared();
    let sigma2 = if n > p { rss / (n - p) as f64 } else { 0.0 };
    let chol = (xtx + DMatrix::identity(p, p) * (sigma2 / COEF_PRIOR_VARIANCE + jitter)).cholesky()?;
    let mean = chol.solve(&xty);
    let inv = chol.inverse();
    let sd = (0..p).map(|c| (sigma2 * inv[(c, c)]).max(0.0).sqrt()).collect();
    Some((mean.as_slice().to_vec(), sd))
}

/// Posterior mode and Laplace sd's of a logistic regression.
fn logistic_regression(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
    let p = x.ncols();
    let prec = 1.0 / COEF_PRIOR_VARIANCE;
    let objective = |b: &DVector<f64>| -> f64 {
        let eta = x * b;
        eta.iter().zip(y.iter()).map(|(&e, &v)| v * e - crate::lgm::softplus(e)).sum::<f64>() - 0.5 * prec * b.norm_squared()
    };
    let mut b = DVector::zeros(p);
    let mut f = objective(&b);
    for _ in 0..100 {
        let eta = x * &b;
        let mu = eta.map(logistic);
        let w = eta.map(|e| logistic(e) * (1.0 - logistic(e)));
        let grad = x.transpose() * (y - &mu) - &b * prec;
        let mut h = DMatrix::identity(p, p) * prec;
        for r in 0..x.nrows() {
            let row = x.row(r);
            h += row.transpose() * row * w[r];
        }
        let step = h.clone().cholesky()?.solve(&grad);
        let mut t = 1.0;
        loop {
            let cand = &b + &step * t;
            let fc = objective(&cand);
            if fc >= f - 1e-12 * f.abs().max(1.0) {
                b = cand;
                f = fc;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                return None;
            }
        }
        if grad.norm() < 1e-9 {
            let inv = h.cholesky()?.inverse();
            let sd = (0..p).map(|c| inv[(c, c)].sqrt()).collect();
            return Some((b.as_slice().to_vec(), sd));
        }
    }
    None
}

/// Run values after step 1: detrended responses (gaussian) or raw 0/1
/// responses with the time effect as a link-scale offset (bernoulli).
#[derive(Debug, Clone, PartialEq)]
pub struct DetrendedRun {
    pub pbl: u8,
    pub res: u8,
    pub family: Family,
    pub locations: Vec<Location>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub offset: Vec<Vec<f64>>,
}

impl DetrendedRun {
    /// Adds the time effect back onto gaussian responses.
    pub fn restore(&self, fit: &HarmonicFit) -> Vec<Vec<f64>> {
        match self.family {
            Family::Gaussian => self
                .values
                .iter()
                .enumerate()
                .map(|(loc, v)| v.iter().zip(&self.times).map(|(y, &t)| y + fit.eval(loc, t)).collect())
                .collect(),
            Family::Bernoulli => self.values.clone(),
        }
    }
}

/// Removes (gaussian) or offsets (bernoulli) the fitted time effect;
/// `fits[r]` belongs to `runs[r]`.
pub fn detrend(runs: &[EnsembleRun], fits: &[HarmonicFit]) -> Result<Vec<DetrendedRun>> {
    if runs.len() != fits.len() {
        return Err(Error::Dimension(format!("{} runs but {} harmonic fits", runs.len(), fits.len())));
    }
    runs.iter()
        .zip(fits)
        .map(|(run, fit)| {
            if fit.n_locations() != run.n_locations() {
                return Err(Error::Dimension(format!(
                    "harmonic fit has {} locations, run ({}, {}) has {}",
                    fit.n_locations(),
                    run.pbl,
                    run.res,
                    run.n_locations()
                )));
            }
            let trend: Vec<Vec<f64>> = (0..run.n_locations()).map(|loc| run.times.iter().map(|&t| fit.eval(loc, t)).collect()).collect();
            let (values, offset) = match fit.family {
                Family::Gaussian => {
                    let v = run.values.iter().zip(&trend).map(|(v, f)| v.iter().zip(f).map(|(a, b)| a - b).collect()).collect();
                    (v, vec![vec![0.0; run.n_times()]; run.n_locations()])
                }
                Family::Bernoulli => (run.values.clone(), trend),
            };
            Ok(DetrendedRun {
                pbl: run.pbl,
                res: run.res,
                family: fit.family,
                locations: run.locations.clone(),
                times: run.times.clone(),
                values,
                offset,
            })
        })
        .collect()
}

/// Prior for one latent field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "basis")]
pub enum FieldSpec {
    Stationary,
    Nonstationary(BasisOrder),
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Nonstationary(BasisOrder::Linear)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialOptions {
    pub family: Family,
    pub pbl: FieldSpec,
    pub res: FieldSpec,
    /// Use every `thin`-th month.
    pub thin: usize,
    pub grid: GridSpec,
}

impl SpatialOptions {
    pub fn new(family: Family) -> Self {
        Self { family, pbl: FieldSpec::default(), res: FieldSpec::default(), thin: 1, grid: GridSpec::default() }
    }
}

/// Layout of one run inside the stacked observation model.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLayout {
    pub pbl: u8,
    pub res: u8,
    pub points: Vec<[f64; 2]>,
    pub projector: Projector<f64>,
    pub altitude: Vec<f64>,
    /// Months used (after thinning).
    pub times: Vec<f64>,
    /// First observation row of the run.
    pub first_row: usize,
}

/// Latent order: intercept, altitude coefficient, PBL field, RES field.
pub const FIXED_NAMES: [&str; 2] = ["intercept", "beta_alt"];

#[derive(Debug, Clone)]
pub struct SpatialFit {
    pub family: Family,
    pub grid: HyperGrid,
    pub fixed: MarginalSummary,
    pub pbl: MarginalSummary,
    pub res: MarginalSummary,
    /// Posterior mean of the full latent vector.
    pub latent_mean: Vec<f64>,
    pub model: LatentModel,
    pub y: Vec<f64>,
    pub layouts: Vec<RunLayout>,
    pub mesh: Mesh<f64>,
}

impl SpatialFit {
    pub fn n_vertices(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn layout(&self, pbl: u8, res: u8) -> Result<&RunLayout> {
        self.layouts
            .iter()
            .find(|l| l.pbl == pbl && l.res == res)
            .ok_or_else(|| Error::Argument(format!("unknown level codes ({pbl}, {res})")))
    }

    /// Posterior-mean link-scale effect `intercept + β_ALT·A + i·β_PBL + j·β_RES`
    /// at arbitrary points.
    pub fn spatial_mean(&self, pbl: u8, res: u8, projector: &Projector<f64>, altitude: &[f64]) -> Result<Vec<f64>> {
        effect_from_latent(&self.latent_mean, self.n_vertices(), pbl, res, projector, altitude)
    }
}

/// Link-scale spatial effect at projected points for a latent vector laid
/// out as `[intercept, β_ALT, PBL field, RES field]`.
pub fn effect_from_latent(x: &[f64], nv: usize, pbl: u8, res: u8, projector: &Projector<f64>, altitude: &[f64]) -> Result<Vec<f64>> {
    if pbl > 1 || res > 1 {
        return Err(Error::Argument(format!("unknown level codes ({pbl}, {res})")));
    }
    if altitude.len() != projector.n_obs() || x.len() != 2 + 2 * nv {
        return Err(Error::Dimension("altitude, projector and latent sizes disagree".into()));
    }
    Ok((0..projector.n_obs())
        .map(|k| {
            let row = projector.row(k);
            let field = |off: usize| row.iter().map(|&(v, w)| w * x[off + v]).sum::<f64>();
            x[0] + x[1] * altitude[k] + pbl as f64 * field(2) + res as f64 * field(2 + nv)
        })
        .collect())
}

fn field_component(mesh: &Mesh<f64>, op: &Arc<SpdeOperator<f64>>, spec: FieldSpec) -> Result<Component> {
    match spec {
        FieldSpec::Stationary => Ok(Component::stationary(Arc::clone(op))),
        FieldSpec::Nonstationary(order) => Component::nonstationary(Arc::clone(op), Arc::new(BasisSet::of_order(mesh, order, 0.0))),
    }
}

/// Builds the stacked model over runs and months without fitting it.
pub fn spatial_model(runs: &[DetrendedRun], mesh: &Mesh<f64>, opts: &SpatialOptions) -> Result<(LatentModel, Vec<f64>, Vec<RunLayout>)> {
    let mut seen = [[0usize; 2]; 2];
    for r in runs {
        if r.pbl > 1 || r.res > 1 {
            return Err(Error::Design(format!("invalid levels ({}, {})", r.pbl, r.res)));
        }
        seen[r.pbl as usize][r.res as usize] += 1;
        if r.family != opts.family {
            return Err(Error::Argument("detrended runs were prepared for a different family".into()));
        }
    }
    if seen.iter().flatten().any(|&c| c != 1) {
        return Err(Error::Design(format!("the 2×2 design needs one run per cell, got counts {seen:?}")));
    }
    if opts.thin == 0 {
        return Err(Error::Argument("thinning stride must be at least 1".into()));
    }
    let op = Arc::new(SpdeOperator::from_mesh(mesh)?);
    let nv = mesh.n_vertices();
    let components = vec![
        ("fixed".to_string(), Component::fixed(2)),
        ("pbl".to_string(), field_component(mesh, &op, opts.pbl)?),
        ("res".to_string(), field_component(mesh, &op, opts.res)?),
    ];
    let mut t = Vec::new();
    let (mut y, mut offset) = (Vec::new(), Vec::new());
    let mut layouts = Vec::new();
    for run in runs {
        let points: Vec<[f64; 2]> = run.locations.iter().map(|l| [l.x, l.y]).collect();
        let projector = mesh.projector(&points)?;
        let altitude: Vec<f64> = run.locations.iter().map(|l| l.altitude).collect();
        let months: Vec<usize> = (0..run.times.len()).step_by(opts.thin).collect();
        let first_row = y.len();
        for &m in &months {
            for loc in 0..run.locations.len() {
                let row = y.len();
                t.push((row, 0, 1.0));
                t.push((row, 1, altitude[loc]));
                if run.pbl == 1 {
                    t.extend(projector.row(loc).iter().map(|&(v, w)| (row, 2 + v, w)));
                }
                if run.res == 1 {
                    t.extend(projector.row(loc).iter().map(|&(v, w)| (row, 2 + nv + v, w)));
                }
                y.push(run.values[loc][m]);
                offset.push(run.offset[loc][m]);
            }
        }
        layouts.push(RunLayout { pbl: run.pbl, res: run.res, points, projector, altitude, times: months.iter().map(|&m| run.times[m]).collect(), first_row });
    }
    let design = CscMatrix::from_triplets(y.len(), 2 + 2 * nv, &t)?;
    let model = LatentModel::new(opts.family, components, design, offset)?;
    Ok((model, y, layouts))
}

/// Step 2: latent Gaussian fit of intercept, altitude, and the PBL and RES
/// fields on `mesh`.
pub fn fit_spatial(runs: &[DetrendedRun], mesh: &Mesh<f64>, opts: &SpatialOptions) -> Result<SpatialFit> {
    let (model, y, layouts) = spatial_model(runs, mesh, opts)?;
    let grid = explore_hypergrid(&model, &y, None, &opts.grid)?;
    let post = latent_marginals(&model, &y, &grid)?;
    let nv = mesh.n_vertices();
    let pick = |r: std::ops::Range<usize>| MarginalSummary {
        mean: post.latent.mean[r.clone()].to_vec(),
        sd: post.latent.sd[r.clone()].to_vec(),
        lower: post.latent.lower[r.clone()].to_vec(),
        upper: post.latent.upper[r].to_vec(),
        level: post.latent.level,
    };
    Ok(SpatialFit {
        family: opts.family,
        fixed: pick(0..2),
        pbl: pick(2..2 + nv),
        res: pick(2 + nv..2 + 2 * nv),
        latent_mean: post.latent.mean.clone(),
        grid,
        model,
        y,
        layouts,
        mesh: mesh.clone(),
    })
}

/// Per-vertex share of posterior variance attributable to the PBL field.
pub fn variance_share(fit: &SpatialFit) -> Vec<f64> {
    fit.pbl.sd.iter().zip(&fit.res.sd).map(|(p, r)| (p * p) / (p * p + r * r)).collect()
}

/// Harmonic plus spatial fits of the whole pipeline.
#[derive(Debug, Clone)]
pub struct FanovaFit {
    /// Harmonic fits in the order of the input runs.
    pub harmonics: Vec<HarmonicFit>,
    pub levels: Vec<(u8, u8)>,
    pub spatial: SpatialFit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanovaOptions {
    pub k: usize,
    pub delta: f64,
    pub spatial: SpatialOptions,
}

impl FanovaOptions {
    pub fn new(family: Family) -> Self {
        Self { k: 3, delta: 12.0, spatial: SpatialOptions::new(family) }
    }
}

/// Runs both steps on a 2×2 ensemble.
pub fn fit_fanova(runs: &[EnsembleRun], mesh: &Mesh<f64>, opts: &FanovaOptions) -> Result<FanovaFit> {
    check_design(runs)?;
    let harmonics =
        runs.iter().map(|r| fit_temporal(&r.values, &r.times, opts.k, opts.delta, opts.spatial.family)).collect::<Result<Vec<_>>>()?;
    let detrended = detrend(runs, &harmonics)?;
    let spatial = fit_spatial(&detrended, mesh, &opts.spatial)?;
    Ok(FanovaFit { harmonics, levels: runs.iter().map(|r| (r.pbl, r.res)).collect(), spatial })
}

impl FanovaFit {
    pub fn harmonic(&self, pbl: u8, res: u8) -> Result<&HarmonicFit> {
        self.levels
            .iter()
            .position(|&l| l == (pbl, res))
            .map(|k| &self.harmonics[k])
            .ok_or_else(|| Error::Argument(format!("unknown level codes ({pbl}, {res})")))
    }

    /// Link-scale mean `μ_ij(t)` at the native locations of run `(i, j)`;
    /// `inverse_link` maps through the logistic for bernoulli fits.
    pub fn predict_mean(&self, pbl: u8, res: u8, t: f64, inverse_link: bool) -> Result<Vec<f64>> {
        let layout = self.spatial.layout(pbl, res)?;
        let harmonic = self.harmonic(pbl, res)?;
        let spatial = self.spatial.spatial_mean(pbl, res, &layout.projector, &layout.altitude)?;
        Ok(spatial
            .iter()
            .enumerate()
            .map(|(loc, s)| {
                let eta = s + harmonic.eval(loc, t);
                if inverse_link && self.spatial.family == Family::Bernoulli { logistic(eta) } else { eta }
            })
            .collect())
    }
}

/// Truth and layout of a synthetic 2×2 ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEnsemble {
    pub nx: usize,
    pub ny: usize,
    pub months: usize,
    pub family: Family,
    pub intercept: f64,
    pub beta_alt: f64,
    pub sigma: f64,
    /// Amplitude of the single annual harmonic.
    pub seasonal: f64,
    /// Offset of the fine-resolution grid relative to the coarse one.
    pub fine_shift: f64,
}

impl SyntheticEnsemble {
    pub fn gaussian(nx: usize, ny: usize, months: usize) -> Self {
        Self { nx, ny, months, family: Family::Gaussian, intercept: 5.0, beta_alt: 0.5, sigma: 0.3, seasonal: 1.0, fine_shift: 0.5 }
    }

    /// Smooth altitude surface.
    pub fn altitude(&self, x: f64, y: f64) -> f64 {
        1.0 + 0.5 * (x / 4.0).sin() * (y / 5.0).cos()
    }

    pub fn pbl_truth(&self, x: f64, y: f64) -> f64 {
        let (w, h) = ((self.nx - 1) as f64, (self.ny - 1) as f64);
        0.8 + 0.4 * (PI * x / w).sin() * (PI * y / h).sin()
    }

    pub fn res_truth(&self, x: f64, _y: f64) -> f64 {
        let w = (self.nx - 1) as f64;
        0.3 * (PI * x / w).cos()
    }

    fn grid_locations(&self, res: u8) -> Vec<Location> {
        let shift = if res == 1 { self.fine_shift } else { 0.0 };
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (x, y) = (i as f64 + shift, j as f64 + shift);
                out.push(Location { id: format!("r{res}_{i}_{j}"), x, y, altitude: self.altitude(x, y) });
            }
        }
        out
    }

    /// Mesh covering both grids on unit spacing.
    pub fn mesh(&self) -> Result<Mesh<f64>> {
        Mesh::grid(self.nx, self.ny, 1.0, 2)
    }

    /// Draws the four runs; months are `1..=months`.
    pub fn simulate(&self, seed: u64) -> Result<Vec<EnsembleRun>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.sigma).map_err(|e| Error::Argument(e.to_string()))?;
        let times: Vec<f64> = (1..=self.months).map(|t| t as f64).collect();
        let mut runs = Vec::with_capacity(4);
        for pbl in 0..2u8 {
            for res in 0..2u8 {
                let locations = self.grid_locations(res);
                let mut values = Vec::with_capacity(locations.len());
                for loc in &locations {
                    let base = self.intercept
                        + self.beta_alt * loc.altitude
                        + pbl as f64 * self.pbl_truth(loc.x, loc.y)
                        + res as f64 * self.res_truth(loc.x, loc.y);
                    let phase = 0.1 * loc.x;
                    let mut series = Vec::with_capacity(times.len());
                    for &t in &times {
                        let eta = base + self.seasonal * (2.0 * PI * t / 12.0 + phase).sin();
                        series.push(match self.family {
                            Family::Gaussian => eta + noise.sample(&mut rng),
                            Family::Bernoulli => {
                                let p = logistic(eta);
                                if Bernoulli::new(p).map_err(|e| Error::Argument(e.to_string()))?.sample(&mut rng) { 1.0 } else { 0.0 }
                            }
                        });
                    }
                    values.push(series);
                }
                runs.push(EnsembleRun::new(pbl, res, locations, times.clone(), values)?);
            }
        }
        Ok(runs)
    }
}
