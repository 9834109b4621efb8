//! Subcommand implementations.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use fanova_core::fanova::{fit_fanova, variance_share, EnsembleRun, FanovaFit, FanovaOptions, FieldSpec, RunManifest, FIXED_NAMES};
use fanova_core::lgm::{Family, MarginalSummary};
use fanova_core::simstudy::{make_shape, run_study_threads, write_failures, write_study_csv, ShapeKind, SimConfig, StudyContext, Variant};
use fanova_core::spde::BasisOrder;
use fanova_core::wind::{
    estimate_shear, estimate_shear_per_time, exceedance_series, extrapolate, farm_energy, nearest, power_output, FarmSpec, PowerCurve,
    ShearFit, VerticalProfile,
};
use fanova_core::{Error, Mesh, Result};

use crate::config::resolve;
use crate::{manifest, output_dir};

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(Error::Argument(format!("{what} is required")));
    }
    if !path.exists() {
        return Err(Error::Argument(format!("{what} '{}' does not exist", path.display())));
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

// ---------------------------------------------------------------- mesh

#[derive(Debug, Args, Serialize)]
pub struct MeshArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    spacing: Option<f64>,
    /// Extension layers around the observation grid.
    #[arg(long)]
    ext: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub ext: usize,
    pub out: PathBuf,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { nx: 15, ny: 15, spacing: 1.0, ext: 2, out: PathBuf::from("mesh") }
    }
}

pub fn mesh(args: MeshArgs) -> Result<()> {
    let cfg: MeshConfig = resolve(args.config.as_deref(), &args)?;
    let mesh = Mesh::grid(cfg.nx, cfg.ny, cfg.spacing, cfg.ext)?;
    let out = output_dir(&cfg.out);
    mesh.write_csv(&out)?;
    let notes = vec![
        format!("vertices: {}", mesh.n_vertices()),
        format!("triangles: {}", mesh.n_triangles()),
        format!("observation-grid vertices: {}", cfg.nx * cfg.ny),
    ];
    let inputs: Vec<PathBuf> = args.config.into_iter().collect();
    manifest::write(&out, "mesh", 1, &cfg, vec![], notes, &inputs)?;
    Ok(())
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Stationary,
    #[default]
    Nonstationary,
}

fn field_spec(kind: FieldKind, basis: BasisOrder) -> FieldSpec {
    match kind {
        FieldKind::Stationary => FieldSpec::Stationary,
        FieldKind::Nonstationary => FieldSpec::Nonstationary(basis),
    }
}

/// Model options shared by `fit` and `wind`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub k: usize,
    pub delta: f64,
    pub thin: usize,
    pub pbl_field: FieldKind,
    pub res_field: FieldKind,
    pub basis: BasisOrder,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { k: 3, delta: 12.0, thin: 1, pbl_field: FieldKind::Nonstationary, res_field: FieldKind::Nonstationary, basis: BasisOrder::Linear }
    }
}

impl ModelConfig {
    fn options(&self, family: Family) -> FanovaOptions {
        let mut o = FanovaOptions::new(family);
        o.k = self.k;
        o.delta = self.delta;
        o.spatial.thin = self.thin;
        o.spatial.pbl = field_spec(self.pbl_field, self.basis);
        o.spatial.res = field_spec(self.res_field, self.basis);
        o
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Run manifest (JSON list of pbl_level, res_level, file).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory with vertices.csv and triangles.csv.
    #[arg(long)]
    mesh_dir: Option<PathBuf>,
    /// gaussian or bernoulli.
    #[arg(long)]
    family: Option<String>,
    /// Number of harmonics.
    #[arg(long)]
    k: Option<usize>,
    /// Harmonic period in time units.
    #[arg(long)]
    delta: Option<f64>,
    /// Keep every n-th month in the spatial step.
    #[arg(long)]
    thin: Option<usize>,
    /// stationary or nonstationary.
    #[arg(long)]
    pbl_field: Option<String>,
    #[arg(long)]
    res_field: Option<String>,
    /// linear or quadratic basis for nonstationary fields.
    #[arg(long)]
    basis: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub manifest: PathBuf,
    pub mesh_dir: PathBuf,
    pub family: Family,
    pub k: usize,
    pub delta: f64,
    pub thin: usize,
    pub pbl_field: FieldKind,
    pub res_field: FieldKind,
    pub basis: BasisOrder,
    pub out: PathBuf,
}

impl Default for FitConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            manifest: PathBuf::new(),
            mesh_dir: PathBuf::new(),
            family: Family::Gaussian,
            k: m.k,
            delta: m.delta,
            thin: m.thin,
            pbl_field: m.pbl_field,
            res_field: m.res_field,
            basis: m.basis,
            out: PathBuf::from("fit"),
        }
    }
}

impl FitConfig {
    fn model(&self) -> ModelConfig {
        ModelConfig { k: self.k, delta: self.delta, thin: self.thin, pbl_field: self.pbl_field, res_field: self.res_field, basis: self.basis }
    }
}

/// Loads a run manifest; returns the runs and every file read.
fn load_runs(path: &Path) -> Result<(Vec<EnsembleRun>, Vec<PathBuf>)> {
    require_file(path, "run manifest")?;
    let m = RunManifest::read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut files = vec![path.to_path_buf()];
    for e in &m.runs {
        let p = if e.file.is_absolute() { e.file.clone() } else { base.join(&e.file) };
        require_file(&p, "run file")?;
        files.push(p);
    }
    Ok((m.load(base)?, files))
}

fn load_mesh(dir: &Path) -> Result<(Mesh, Vec<PathBuf>)> {
    require_file(dir, "mesh directory")?;
    let files = vec![dir.join("vertices.csv"), dir.join("triangles.csv")];
    for f in &files {
        require_file(f, "mesh file")?;
    }
    Ok((Mesh::read_csv(dir)?, files))
}

fn write_vertex_summary(path: &Path, mesh: &Mesh, s: &MarginalSummary) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["vertex", "x", "y", "mean", "sd", "lower", "upper"])?;
    for (v, p) in mesh.vertices().iter().enumerate() {
        w.write_record([
            v.to_string(),
            p[0].to_string(),
            p[1].to_string(),
            s.mean[v].to_string(),
            s.sd[v].to_string(),
            s.lower[v].to_string(),
            s.upper[v].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct HyperSummary<'a> {
    family: Family,
    names: &'a [String],
    mode: &'a [f64],
    posterior_mean: Vec<f64>,
    posterior_sd: Vec<f64>,
    points: &'a [Vec<f64>],
    log_weights: &'a [f64],
    evaluations: usize,
}

/// Writes every artifact of a FANOVA fit into `out`.
fn write_fit(out: &Path, fit: &FanovaFit, runs: &[EnsembleRun]) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let sp = &fit.spatial;
    let mut w = csv_writer(&out.join("harmonics.csv"))?;
    let k = fit.harmonics.first().map_or(0, |h| h.k);
    let mut header = vec!["pbl".to_string(), "res".into(), "location_id".into(), "flagged".into()];
    header.extend((1..=k).map(|h| format!("zeta_{h}")));
    header.extend((1..=k).map(|h| format!("zeta_prime_{h}")));
    w.write_record(&header)?;
    for (h, run) in fit.harmonics.iter().zip(runs) {
        for (loc, l) in run.locations.iter().enumerate() {
            let mut rec = vec![run.pbl.to_string(), run.res.to_string(), l.id.clone(), u8::from(h.flagged[loc]).to_string()];
            rec.extend(h.coefficients[loc].iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;

    write_vertex_summary(&out.join("beta_pbl.csv"), &sp.mesh, &sp.pbl)?;
    write_vertex_summary(&out.join("beta_res.csv"), &sp.mesh, &sp.res)?;
    let mut w = csv_writer(&out.join("variance_share.csv"))?;
    w.write_record(["vertex", "x", "y", "share"])?;
    for (v, (p, s)) in sp.mesh.vertices().iter().zip(variance_share(sp)).enumerate() {
        w.write_record([v.to_string(), p[0].to_string(), p[1].to_string(), s.to_string()])?;
    }
    w.flush()?;
    let mut w = csv_writer(&out.join("fixed_effects.csv"))?;
    w.write_record(["name", "mean", "sd", "lower", "upper"])?;
    for (i, name) in FIXED_NAMES.iter().enumerate() {
        let f = &sp.fixed;
        w.write_record([name.to_string(), f.mean[i].to_string(), f.sd[i].to_string(), f.lower[i].to_string(), f.upper[i].to_string()])?;
    }
    w.flush()?;
    let (mean, sd) = sp.grid.moments();
    let hyper = HyperSummary {
        family: sp.family,
        names: &sp.grid.names,
        mode: &sp.grid.mode,
        posterior_mean: mean,
        posterior_sd: sd,
        points: &sp.grid.points,
        log_weights: &sp.grid.log_weights,
        evaluations: sp.grid.evaluations,
    };
    std::fs::write(out.join("hyper.json"), serde_json::to_string_pretty(&hyper)?)?;
    Ok(())
}

pub fn fit(args: FitArgs, threads: usize) -> Result<()> {
    let cfg: FitConfig = resolve(args.config.as_deref(), &args)?;
    let (runs, mut inputs) = load_runs(&cfg.manifest)?;
    let (mesh, mesh_files) = load_mesh(&cfg.mesh_dir)?;
    inputs.extend(mesh_files);
    inputs.extend(args.config.iter().cloned());
    let fit = fit_fanova(&runs, &mesh, &cfg.model().options(cfg.family))?;
    let out = output_dir(&cfg.out);
    write_fit(&out, &fit, &runs)?;
    let notes = vec![format!("hyperparameter grid points: {}", fit.spatial.grid.len())];
    manifest::write(&out, "fit", threads, &cfg, vec![], notes, &inputs)?;
    Ok(())
}

// ---------------------------------------------------------------- simstudy

#[derive(Debug, Args, Serialize)]
pub struct SimstudyArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Comma-separated shapes: square, zigzag, bar, u.
    #[arg(long = "shape", value_delimiter = ',')]
    shapes: Option<Vec<String>>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta0: Option<f64>,
    /// Comma-separated level effects.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta1: Option<Vec<f64>>,
    /// Link-scale noise sd (family default when absent).
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    n_sim: Option<usize>,
    /// Comma-separated variants: IND, STAT, NSTAT.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    ext: Option<usize>,
    #[arg(long)]
    basis: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimstudyConfig {
    pub shapes: Vec<ShapeKind>,
    pub family: Family,
    pub beta0: f64,
    pub beta1: Vec<f64>,
    pub sigma: Option<f64>,
    pub n_sim: usize,
    pub variants: Vec<Variant>,
    pub seed: u64,
    pub nx: usize,
    pub ny: usize,
    pub ext: usize,
    pub basis: BasisOrder,
    pub out: PathBuf,
}

impl Default for SimstudyConfig {
    fn default() -> Self {
        Self {
            shapes: vec![ShapeKind::Square],
            family: Family::Gaussian,
            beta0: 0.0,
            beta1: vec![2.0],
            sigma: None,
            n_sim: 100,
            variants: Variant::ALL.to_vec(),
            seed: 1,
            nx: 15,
            ny: 15,
            ext: 2,
            basis: BasisOrder::Linear,
            out: PathBuf::from("simstudy"),
        }
    }
}

pub fn simstudy(args: SimstudyArgs, threads: usize) -> Result<()> {
    let mut cfg: SimstudyConfig = resolve(args.config.as_deref(), &args)?;
    if cfg.shapes.is_empty() || cfg.beta1.is_empty() || cfg.variants.is_empty() {
        return Err(Error::Argument("shapes, beta1 and variants must be nonempty".into()));
    }
    let sigma = cfg.sigma.unwrap_or(match cfg.family {
        Family::Gaussian => 1.0,
        Family::Bernoulli => 0.1,
    });
    cfg.sigma = Some(sigma);
    let out = output_dir(&cfg.out);
    std::fs::create_dir_all(&out)?;
    let ctx = StudyContext::new(cfg.nx, cfg.ny, cfg.ext, cfg.basis)?;
    let mut sweep = csv_writer(&out.join("sweep.csv"))?;
    sweep.write_record([
        "shape",
        "family",
        "beta0",
        "beta1",
        "variant",
        "coverage",
        "auc",
        "gradient_median",
        "gradient_iqr",
        "mse",
        "completed",
        "failures",
    ])?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for &kind in &cfg.shapes {
        let shape = make_shape(kind, cfg.nx, cfg.ny)?;
        for &beta1 in &cfg.beta1 {
            let sim = SimConfig {
                nx: cfg.nx,
                ny: cfg.ny,
                beta0: cfg.beta0,
                beta1,
                sigma,
                family: cfg.family,
                n_sim: cfg.n_sim,
                seed: cfg.seed,
                extension_layers: cfg.ext,
            };
            let results = run_study_threads(&sim, &shape, &cfg.variants, &ctx, threads)?;
            let dir = out.join(format!("{kind}_b0_{}_b1_{beta1}", cfg.beta0));
            write_study_csv(&dir, &shape, &results)?;
            write_failures(std::fs::File::create(dir.join("failures.log"))?, &results)?;
            for r in &results {
                sweep.write_record([
                    kind.to_string(),
                    format!("{:?}", cfg.family).to_lowercase(),
                    cfg.beta0.to_string(),
                    beta1.to_string(),
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
        }
    }
    sweep.flush()?;
    drop(sweep);
    let notes = vec!["shape geometries other than the centered square are constructions of this tool".to_string()];
    let inputs: Vec<PathBuf> = args.config.into_iter().collect();
    manifest::write(&out, "simstudy", threads, &cfg, vec![cfg.seed], notes, &inputs)?;
    Ok(())
}

// ---------------------------------------------------------------- wind

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ordering {
    #[default]
    ExtrapolateThenFit,
    FitThenExtrapolate,
}

#[derive(Debug, Args, Serialize)]
pub struct WindArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Run manifest of surface wind speeds at the reference height.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Vertical profiles CSV: location_id,x,y,height,t,speed.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Constant shear coefficient used instead of profiles.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Estimate shear per month instead of from time-averaged profiles.
    #[arg(long)]
    per_month: Option<bool>,
    #[arg(long)]
    h_ref: Option<f64>,
    #[arg(long)]
    hub_height: Option<f64>,
    /// Power curve CSVs; the file stem names the turbine model.
    #[arg(long = "curve")]
    curves: Option<Vec<PathBuf>>,
    /// Turbine model for the power and exceedance series.
    #[arg(long)]
    turbine_model: Option<String>,
    /// extrapolate-then-fit or fit-then-extrapolate.
    #[arg(long)]
    order: Option<String>,
    /// Farm CSV: location_id,x,y,turbine_model,count.
    #[arg(long)]
    farms: Option<PathBuf>,
    #[arg(long)]
    mesh_dir: Option<PathBuf>,
    #[arg(long)]
    n_draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    basis: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindConfig {
    pub manifest: PathBuf,
    pub profiles: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub per_month: bool,
    pub h_ref: f64,
    pub hub_height: f64,
    pub curves: Vec<PathBuf>,
    pub turbine_model: Option<String>,
    pub order: Ordering,
    pub farms: Option<PathBuf>,
    pub mesh_dir: Option<PathBuf>,
    pub n_draws: usize,
    pub seed: u64,
    pub k: usize,
    pub delta: f64,
    pub thin: usize,
    pub basis: BasisOrder,
    pub out: PathBuf,
}

impl Default for WindConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            manifest: PathBuf::new(),
            profiles: None,
            alpha: None,
            per_month: false,
            h_ref: 10.0,
            hub_height: 80.0,
            curves: vec![],
            turbine_model: None,
            order: Ordering::ExtrapolateThenFit,
            farms: None,
            mesh_dir: None,
            n_draws: 500,
            seed: 1,
            k: m.k,
            delta: m.delta,
            thin: m.thin,
            basis: m.basis,
            out: PathBuf::from("wind"),
        }
    }
}

#[derive(Debug, Deserialize)]
struct ProfileRow {
    location_id: String,
    x: f64,
    y: f64,
    height: f64,
    t: f64,
    speed: f64,
}

/// Profiles per location: id, coordinates, time points and the profile.
type ProfileSet = Vec<(String, [f64; 2], Vec<f64>, VerticalProfile)>;

/// Speeds keyed by height bits, then time bits.
type SpeedTable = BTreeMap<u64, BTreeMap<u64, f64>>;

fn read_profiles(path: &Path, h_ref: f64) -> Result<ProfileSet> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut by_loc: BTreeMap<String, ([f64; 2], SpeedTable)> = BTreeMap::new();
    let mut order = Vec::new();
    for row in rdr.deserialize() {
        let r: ProfileRow = row?;
        let entry = by_loc.entry(r.location_id.clone()).or_insert_with(|| {
            order.push(r.location_id.clone());
            ([r.x, r.y], BTreeMap::new())
        });
        // f64 keys ordered through their bit patterns (all nonnegative)
        entry.1.entry(r.height.to_bits()).or_default().insert(r.t.to_bits(), r.speed);
    }
    order
        .into_iter()
        .map(|id| {
            let (xy, levels) = by_loc.remove(&id).expect("recorded location");
            let heights: Vec<f64> = levels.keys().map(|&h| f64::from_bits(h)).collect();
            let times: Vec<f64> = levels.values().next().map(|m| m.keys().map(|&t| f64::from_bits(t)).collect()).unwrap_or_default();
            let speeds: Vec<Vec<f64>> = levels.values().map(|m| m.values().copied().collect()).collect();
            let profile = VerticalProfile::new(h_ref, heights, speeds).map_err(|e| Error::Argument(format!("profile of location '{id}': {e}")))?;
            Ok((id, xy, times, profile))
        })
        .collect()
}

/// Shear per profile location; one entry per month when `per_month`.
struct ShearMap {
    points: Vec<[f64; 2]>,
    ids: Vec<String>,
    times: Vec<Vec<f64>>,
    fits: Vec<Vec<ShearFit>>,
}

impl ShearMap {
    fn alpha_at(&self, p: &[f64; 2], t: f64) -> Result<f64> {
        let k = nearest(&self.points, p);
        if self.fits[k].len() == 1 {
            return Ok(self.fits[k][0].alpha);
        }
        let m = self.times[k]
            .iter()
            .position(|&s| s == t)
            .ok_or_else(|| Error::Dimension(format!("no shear estimate at location '{}' for t = {t}", self.ids[k])))?;
        Ok(self.fits[k][m].alpha)
    }

    fn mean_alpha_at(&self, p: &[f64; 2]) -> f64 {
        let f = &self.fits[nearest(&self.points, p)];
        f.iter().map(|s| s.alpha).sum::<f64>() / f.len() as f64
    }
}

fn load_curves(paths: &[PathBuf]) -> Result<HashMap<String, PowerCurve>> {
    let mut out = HashMap::new();
    for p in paths {
        require_file(p, "power curve")?;
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.insert(name, PowerCurve::read_csv(p)?);
    }
    Ok(out)
}

pub fn wind(args: WindArgs, threads: usize) -> Result<()> {
    let cfg: WindConfig = resolve(args.config.as_deref(), &args)?;
    let (runs, mut inputs) = load_runs(&cfg.manifest)?;
    inputs.extend(args.config.iter().cloned());
    if !(cfg.h_ref > 0.0 && cfg.hub_height > 0.0) {
        return Err(Error::Argument("heights must be positive".into()));
    }
    if cfg.curves.is_empty() {
        return Err(Error::Argument("at least one power curve is required".into()));
    }
    let curves = load_curves(&cfg.curves)?;
    inputs.extend(cfg.curves.iter().cloned());
    let model_name = match &cfg.turbine_model {
        Some(m) => m.clone(),
        None => cfg.curves[0].file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    let curve = curves.get(&model_name).ok_or_else(|| Error::Argument(format!("unknown turbine model '{model_name}'")))?;

    let shear = match (&cfg.profiles, cfg.alpha) {
        (Some(p), None) => {
            require_file(p, "profiles")?;
            inputs.push(p.clone());
            let profiles = read_profiles(p, cfg.h_ref)?;
            let mut m = ShearMap { points: vec![], ids: vec![], times: vec![], fits: vec![] };
            for (id, xy, times, profile) in profiles {
                let fits = if cfg.per_month { estimate_shear_per_time(&profile)? } else { vec![estimate_shear(&profile)?] };
                m.points.push(xy);
                m.ids.push(id);
                m.times.push(times);
                m.fits.push(fits);
            }
            m
        }
        (None, Some(a)) => ShearMap {
            points: vec![[0.0, 0.0]],
            ids: vec!["constant".into()],
            times: vec![vec![]],
            fits: vec![vec![ShearFit { alpha: a, sd: 0.0, r2: 1.0, intercept: 0.0, dropped: 0 }]],
        },
        _ => return Err(Error::Argument("give exactly one of profiles or alpha".into())),
    };

    let out = output_dir(&cfg.out);
    std::fs::create_dir_all(&out)?;
    let mut w = csv_writer(&out.join("shear_map.csv"))?;
    w.write_record(["location_id", "x", "y", "t", "alpha", "sd", "r2", "dropped"])?;
    for k in 0..shear.points.len() {
        for (m, f) in shear.fits[k].iter().enumerate() {
            let t = if shear.fits[k].len() == 1 { String::new() } else { shear.times[k][m].to_string() };
            w.write_record([
                shear.ids[k].clone(),
                shear.points[k][0].to_string(),
                shear.points[k][1].to_string(),
                t,
                f.alpha.to_string(),
                f.sd.to_string(),
                f.r2.to_string(),
                f.dropped.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let (mut hub, mut power, mut exceed) = (Vec::new(), Vec::new(), Vec::new());
    for run in &runs {
        let mut hv = Vec::with_capacity(run.n_locations());
        for (loc, series) in run.locations.iter().zip(&run.values) {
            let p = [loc.x, loc.y];
            let v = series
                .iter()
                .zip(&run.times)
                .map(|(&w, &t)| Ok(extrapolate(w.max(0.0), cfg.h_ref, cfg.hub_height, shear.alpha_at(&p, t)?)))
                .collect::<Result<Vec<f64>>>()?;
            hv.push(v);
        }
        let pv: Vec<Vec<f64>> = hv.iter().map(|s| s.iter().map(|&w| power_output(curve, w)).collect()).collect();
        let ev: Vec<Vec<f64>> = pv.iter().map(|s| exceedance_series(s, curve)).collect();
        hub.push(run.with_values(hv)?);
        power.push(run.with_values(pv)?);
        exceed.push(run.with_values(ev)?);
    }
    RunManifest::write_runs(&out.join("hub"), &hub)?;
    RunManifest::write_runs(&out.join("power"), &power)?;
    RunManifest::write_runs(&out.join("exceedance"), &exceed)?;

    let mut seeds = vec![];
    if cfg.order == Ordering::FitThenExtrapolate {
        let farms_path = cfg.farms.as_ref().ok_or_else(|| Error::Argument("fit-then-extrapolate needs a farm CSV".into()))?;
        let mesh_dir = cfg.mesh_dir.as_ref().ok_or_else(|| Error::Argument("fit-then-extrapolate needs a mesh directory".into()))?;
        require_file(farms_path, "farm CSV")?;
        let (mesh, mesh_files) = load_mesh(mesh_dir)?;
        inputs.push(farms_path.clone());
        inputs.extend(mesh_files);
        let farms = FarmSpec::new(FarmSpec::read_farms(farms_path)?, curves.clone(), cfg.hub_height, cfg.h_ref)?;
        let model = ModelConfig { k: cfg.k, delta: cfg.delta, thin: cfg.thin, basis: cfg.basis, ..ModelConfig::default() };
        let fit = fit_fanova(&runs, &mesh, &model.options(Family::Gaussian))?;
        write_fit(&out.join("surface_fit"), &fit, &runs)?;
        let alphas: Vec<f64> = farms.farms.iter().map(|f| shear.mean_alpha_at(&[f.x, f.y])).collect();
        let dists = farm_energy(&fit, &farms, &alphas, cfg.n_draws, cfg.seed)?;
        seeds.push(cfg.seed);
        let mut w = csv_writer(&out.join("farm_power.csv"))?;
        w.write_record(["pbl", "res", "mean", "sd", "q025", "q500", "q975"])?;
        for d in &dists {
            w.write_record([
                d.pbl.to_string(),
                d.res.to_string(),
                d.mean.to_string(),
                d.sd.to_string(),
                d.q025.to_string(),
                d.q500.to_string(),
                d.q975.to_string(),
            ])?;
        }
        w.flush()?;
        let mut w = csv_writer(&out.join("farm_draws.csv"))?;
        w.write_record(["pbl", "res", "draw", "power"])?;
        for d in &dists {
            for (k, v) in d.draws.iter().enumerate() {
                w.write_record([d.pbl.to_string(), d.res.to_string(), k.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
    }
    let notes = vec![format!("turbine model for power and exceedance series: {model_name}")];
    manifest::write(&out, "wind", threads, &cfg, seeds, notes, &inputs)?;
    Ok(())
}

// ---------------------------------------------------------------- report

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Directory searched recursively for result tables.
    #[arg(long)]
    dir: Option<PathBuf>,
    /// Output CSV (default: <dir>/report.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub dir: PathBuf,
    pub out: Option<PathBuf>,
}

/// Tables collated by `report`.
const REPORT_TABLES: [&str; 5] = ["summary.csv", "sweep.csv", "fixed_effects.csv", "farm_power.csv", "shear_map.csv"];

fn collect_tables(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_tables(&p, out)?;
        } else if p.file_name().and_then(|n| n.to_str()).is_some_and(|n| REPORT_TABLES.contains(&n)) {
            out.push(p);
        }
    }
    Ok(())
}

pub fn report(args: ReportArgs) -> Result<()> {
    let cfg: ReportConfig = resolve(args.config.as_deref(), &args)?;
    require_file(&cfg.dir, "report directory")?;
    let mut tables = Vec::new();
    collect_tables(&cfg.dir, &mut tables)?;
    if tables.is_empty() {
        return Err(Error::InsufficientData(format!("no result tables under '{}'", cfg.dir.display())));
    }
    let target = cfg.out.clone().unwrap_or_else(|| cfg.dir.join("report.csv"));
    let mut w = csv_writer(&target)?;
    w.write_record(["source", "row", "column", "value"])?;
    let mut rows = 0usize;
    for t in &tables {
        let mut rdr = csv::Reader::from_path(t)?;
        let header = rdr.headers()?.clone();
        let source = t.strip_prefix(&cfg.dir).unwrap_or(t).to_string_lossy().replace('\\', "/");
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (col, val) in header.iter().zip(rec.iter()) {
                w.write_record([source.as_str(), &r.to_string(), col, val])?;
            }
            rows += 1;
        }
        println!("{source}: {} columns", header.len());
    }
    w.flush()?;
    println!("{} tables, {rows} rows -> {}", tables.len(), target.display());
    Ok(())
}
