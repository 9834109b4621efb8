//! Vertical wind extrapolation with the power law, turbine power curves and
//! farm-level energy from posterior draws.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fanova::{effect_from_latent, FanovaFit};
use crate::lgm::{sample_latent, Family};

/// Speeds at several heights above ground.
#[derive(Debug, Clone, PartialEq)]
pub struct VerticalProfile {
    pub h_ref: f64,
    pub heights: Vec<f64>,
    /// `speeds[level][time]`.
    pub speeds: Vec<Vec<f64>>,
}

impl VerticalProfile {
    pub fn new(h_ref: f64, heights: Vec<f64>, speeds: Vec<Vec<f64>>) -> Result<Self> {
        if !(h_ref > 0.0) {
            return Err(Error::Argument("reference height must be positive".into()));
        }
        if heights.windows(2).any(|w| !(w[0] < w[1])) || heights.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::Argument("heights must be positive and strictly increasing".into()));
        }
        if speeds.len() != heights.len() {
            return Err(Error::Dimension(format!("{} heights but {} speed rows", heights.len(), speeds.len())));
        }
        let n = speeds.first().map_or(0, Vec::len);
        if n == 0 || speeds.iter().any(|s| s.len() != n) {
            return Err(Error::Dimension("every level needs the same nonempty time series".into()));
        }
        if speeds.iter().flatten().any(|&w| !(w >= 0.0)) {
            return Err(Error::Argument("speeds must be nonnegative".into()));
        }
        Ok(Self { h_ref, heights, speeds })
    }

    pub fn n_times(&self) -> usize {
        self.speeds[0].len()
    }

    /// Time-averaged speed per level.
    pub fn mean_speeds(&self) -> Vec<f64> {
        self.speeds.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShearFit {
    pub alpha: f64,
    pub sd: f64,
    pub r2: f64,
    /// Log speed at the reference height.
    pub intercept: f64,
    /// Levels dropped for zero speed.
    pub dropped: usize,
}

/// Least squares of `ln W(h)` on `ln(h / h_r)`.
pub fn fit_log_regression(h_ref: f64, heights: &[f64], speeds: &[f64]) -> Result<ShearFit> {
    let pts: Vec<(f64, f64)> = heights.iter().zip(speeds).filter(|(_, &w)| w > 0.0).map(|(&h, &w)| ((h / h_ref).ln(), w.ln())).collect();
    let dropped = heights.len() - pts.len();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!("{} usable levels, need at least 3", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let alpha = sxy / sxx;
    let intercept = my - alpha * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - alpha * p.0).powi(2)).sum();
    let r2 = if syy > 0.0 { (1.0 - rss / syy).clamp(0.0, 1.0) } else { 1.0 };
    let sd = (rss / (n - 2.0) / sxx).sqrt();
    Ok(ShearFit { alpha, sd, r2, intercept, dropped })
}

/// Shear coefficient from the time-averaged profile.
pub fn estimate_shear(profile: &VerticalProfile) -> Result<ShearFit> {
    fit_log_regression(profile.h_ref, &profile.heights, &profile.mean_speeds())
}

/// One shear fit per time step.
pub fn estimate_shear_per_time(profile: &VerticalProfile) -> Result<Vec<ShearFit>> {
    (0..profile.n_times())
        .map(|t| {
            let w: Vec<f64> = profile.speeds.iter().map(|s| s[t]).collect();
            fit_log_regression(profile.h_ref, &profile.heights, &w)
        })
        .collect()
}

/// Power-law extrapolation `w (h_k / h_r)^α`.
pub fn extrapolate(w_ref: f64, h_ref: f64, h_k: f64, alpha: f64) -> f64 {
    w_ref * (h_k / h_ref).powf(alpha)
}

/// Extrapolation with multiplicative log-normal noise `exp(N(0, sd²))`.
pub fn extrapolate_noisy<R: Rng + ?Sized>(w_ref: f64, h_ref: f64, h_k: f64, alpha: f64, noise_sd: f64, rng: &mut R) -> Result<f64> {
    let n = Normal::new(0.0, noise_sd).map_err(|e| Error::Argument(e.to_string()))?;
    Ok(extrapolate(w_ref, h_ref, h_k, alpha) * n.sample(rng).exp())
}

/// Turbine power curve; the knot table runs from cut-in to rated speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub cut_in: f64,
    pub rated: f64,
    pub cut_off: f64,
    pub knots: Vec<(f64, f64)>,
}

impl PowerCurve {
    pub fn new(cut_in: f64, rated: f64, cut_off: f64, knots: Vec<(f64, f64)>) -> Result<Self> {
        if !(0.0 < cut_in && cut_in < rated && rated <= cut_off) {
            return Err(Error::Argument(format!("need 0 < cut-in < rated <= cut-off, got {cut_in}, {rated}, {cut_off}")));
        }
        if knots.len() < 2 || knots[0].0 != cut_in || knots[knots.len() - 1].0 != rated {
            return Err(Error::Argument("knot table must start at cut-in and end at rated speed".into()));
        }
        if knots.windows(2).any(|w| !(w[0].0 < w[1].0) || w[1].1 < w[0].1) || knots[0].1 < 0.0 {
            return Err(Error::Argument("knot speeds must increase and power must be nonnegative and nondecreasing".into()));
        }
        Ok(Self { cut_in, rated, cut_off, knots })
    }

    pub fn rated_power(&self) -> f64 {
        self.knots[self.knots.len() - 1].1
    }

    /// Reads a curve CSV: a `# cut_in=..,rated=..,cut_off=..` line followed
    /// by `speed,power` rows.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let header = text
            .lines()
            .find(|l| l.trim_start().starts_with('#'))
            .ok_or_else(|| Error::Parse(format!("{}: missing '# cut_in=..' header line", path.display())))?;
        let mut params = HashMap::new();
        for kv in header.trim_start().trim_start_matches('#').split(',') {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("bad header entry '{kv}'")))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("bad number in '{kv}'")))?;
            params.insert(k.trim().to_string(), v);
        }
        let get = |k: &str| params.get(k).copied().ok_or_else(|| Error::Parse(format!("header lacks '{k}'")));
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let mut knots = Vec::new();
        for rec in rdr.deserialize() {
            let (s, p): (f64, f64) = rec?;
            knots.push((s, p));
        }
        Self::new(get("cut_in")?, get("rated")?, get("cut_off")?, knots)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = format!("# cut_in={},rated={},cut_off={}\nspeed,power\n", self.cut_in, self.rated, self.cut_off);
        for (s, p) in &self.knots {
            out.push_str(&format!("{s},{p}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Generic 2 MW class example curve (not a specific turbine model).
    pub fn example() -> Self {
        let knots = vec![
            (3.0, 0.0),
            (4.0, 66.0),
            (5.0, 154.0),
            (6.0, 282.0),
            (7.0, 460.0),
            (8.0, 696.0),
            (9.0, 996.0),
            (10.0, 1341.0),
            (11.0, 1661.0),
            (12.0, 1866.0),
            (13.0, 2000.0),
        ];
        Self::new(3.0, 13.0, 25.0, knots).expect("valid example curve")
    }
}

/// Power in kW: zero below cut-in, linear on the knot table, rated power
/// from rated speed on (also past cut-off).
pub fn power_output(curve: &PowerCurve, wind: f64) -> f64 {
    if !(wind >= curve.cut_in) {
        return 0.0;
    }
    if wind >= curve.rated {
        return curve.rated_power();
    }
    let k = curve.knots.partition_point(|&(s, _)| s <= wind);
    let (s0, p0) = curve.knots[k - 1];
    let (s1, p1) = curve.knots[k];
    p0 + (wind - s0) / (s1 - s0) * (p1 - p0)
}

/// `1` where power strictly exceeds half the rated power.
pub fn exceedance_series(power: &[f64], curve: &PowerCurve) -> Vec<f64> {
    let threshold = 0.5 * curve.rated_power();
    power.iter().map(|&p| if p > threshold { 1.0 } else { 0.0 }).collect()
}

/// Turbines per square cell: `floor(side / (7 D))²`.
pub fn turbines_per_cell(cell_side: f64, rotor_diameter: f64) -> Result<u32> {
    if !(cell_side > 0.0 && rotor_diameter > 0.0) {
        return Err(Error::Argument("cell side and rotor diameter must be positive".into()));
    }
    let per_side = (cell_side / (7.0 * rotor_diameter)).floor() as u32;
    if per_side == 0 {
        return Err(Error::Argument(format!("a {cell_side} m cell cannot host a turbine of diameter {rotor_diameter} m")));
    }
    Ok(per_side * per_side)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Farm {
    pub location_id: String,
    pub x: f64,
    pub y: f64,
    pub turbine_model: String,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarmSpec {
    pub farms: Vec<Farm>,
    pub curves: HashMap<String, PowerCurve>,
    pub hub_height: f64,
    pub h_ref: f64,
}

impl FarmSpec {
    pub fn new(farms: Vec<Farm>, curves: HashMap<String, PowerCurve>, hub_height: f64, h_ref: f64) -> Result<Self> {
        if farms.is_empty() {
            return Err(Error::Argument("farm spec has no farms".into()));
        }
        for f in &farms {
            if f.count == 0 {
                return Err(Error::Argument(format!("farm '{}' has no turbines", f.location_id)));
            }
            if !curves.contains_key(&f.turbine_model) {
                return Err(Error::Argument(format!("farm '{}' uses unknown turbine model '{}'", f.location_id, f.turbine_model)));
            }
        }
        if !(hub_height > 0.0 && h_ref > 0.0) {
            return Err(Error::Argument("heights must be positive".into()));
        }
        Ok(Self { farms, curves, hub_height, h_ref })
    }

    /// Reads `location_id,x,y,turbine_model,count`.
    pub fn read_farms(path: &Path) -> Result<Vec<Farm>> {
        let mut rdr = csv::Reader::from_path(path)?;
        rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
    }

    pub fn write_farms(farms: &[Farm], path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for f in farms {
            w.serialize(f)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Same farms with every turbine count multiplied by `factor`.
    pub fn scaled(&self, factor: u32) -> Self {
        let farms = self.farms.iter().map(|f| Farm { count: f.count * factor, ..f.clone() }).collect();
        Self { farms, ..self.clone() }
    }
}

/// Summary of a distribution of farm power (kW).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerDistribution {
    pub pbl: u8,
    pub res: u8,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
    pub draws: Vec<f64>,
}

fn summarize(pbl: u8, res: u8, draws: Vec<f64>) -> PowerDistribution {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let sd = if draws.len() > 1 { (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    let mut s = draws.clone();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (s.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        s[lo] + (h - lo as f64) * (s[hi] - s[lo])
    };
    PowerDistribution { pbl, res, mean, sd, q025: q(0.025), q500: q(0.5), q975: q(0.975), draws }
}

/// Posterior distribution of total farm power for each ensemble cell.
/// Each draw samples the latent effects, forms monthly surface wind at the
/// farms (time effect from the nearest native location), extrapolates to hub
/// height with the farm's shear coefficient and sums turbine output; the
/// draw's value is the mean over months of the total power.
pub fn farm_energy(fit: &FanovaFit, farms: &FarmSpec, shear: &[f64], n_draws: usize, seed: u64) -> Result<Vec<PowerDistribution>> {
    if fit.spatial.family != Family::Gaussian {
        return Err(Error::Argument("farm energy needs a gaussian wind-speed fit".into()));
    }
    if shear.len() != farms.farms.len() {
        return Err(Error::Dimension(format!("{} shear coefficients for {} farms", shear.len(), farms.farms.len())));
    }
    if n_draws == 0 {
        return Err(Error::Argument("n_draws must be at least 1".into()));
    }
    let sp = &fit.spatial;
    let nv = sp.n_vertices();
    let points: Vec<[f64; 2]> = farms.farms.iter().map(|f| [f.x, f.y]).collect();
    let projector = sp.mesh.projector(&points)?;
    let draws = sample_latent(&sp.model, &sp.y, &sp.grid, n_draws, seed)?;
    let mut out = Vec::with_capacity(fit.levels.len());
    for (harmonic, &(pbl, res)) in fit.harmonics.iter().zip(&fit.levels) {
        let layout = sp.layout(pbl, res)?;
        let native: Vec<usize> = points.iter().map(|p| nearest(&layout.points, p)).collect();
        let altitude: Vec<f64> = native.iter().map(|&k| layout.altitude[k]).collect();
        let mut totals = Vec::with_capacity(n_draws);
        for x in &draws {
            let base = effect_from_latent(x, nv, pbl, res, &projector, &altitude)?;
            let mut total = 0.0;
            for (f, farm) in farms.farms.iter().enumerate() {
                let curve = &farms.curves[&farm.turbine_model];
                for &t in &layout.times {
                    let surface = (base[f] + harmonic.eval(native[f], t)).max(0.0);
                    let hub = extrapolate(surface, farms.h_ref, farms.hub_height, shear[f]);
                    total += power_output(curve, hub) * farm.count as f64;
                }
            }
            totals.push(total / layout.times.len() as f64);
        }
        out.push(summarize(pbl, res, totals));
    }
    Ok(out)
}

/// Index of the point nearest to `p`.
pub fn nearest(points: &[[f64; 2]], p: &[f64; 2]) -> usize {
    let d2 = |a: &[f64; 2]| (a[0] - p[0]).powi(2) + (a[1] - p[1]).powi(2);
    (0..points.len()).min_by(|&a, &b| d2(&points[a]).total_cmp(&d2(&points[b]))).expect("nonempty point set")
}
