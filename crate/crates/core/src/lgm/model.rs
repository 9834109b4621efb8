//! Latent Gaussian model description: latent components with their prior
//! precisions, the observation design, the likelihood family and the
//! hyperparameter space.

use std::sync::Arc;

use crate::cholesky::SymbolicCholesky;
use crate::error::{Error, Result};
use crate::sparse::{CscMatrix, SparseSymmetric};
use crate::spde::{BasisSet, SpdeOperator};

/// Prior variance of every hyperparameter and fixed effect unless overridden.
pub const VAGUE_VARIANCE: f64 = 1000.0;

/// Observation likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Identity link with noise variance `exp(log_sigma2)` as the last
    /// hyperparameter.
    Gaussian,
    /// Logit link, `y ∈ {0, 1}`.
    Bernoulli,
}

impl Family {
    /// Log-likelihood of one observation given its linear predictor.
    pub fn log_lik(self, y: f64, eta: f64, sigma2: f64) -> f64 {
        match self {
            Family::Gaussian => {
                let r = y - eta;
                -0.5 * ((2.0 * std::f64::consts::PI * sigma2).ln() + r * r / sigma2)
            }
            Family::Bernoulli => y * eta - softplus(eta),
        }
    }

    /// First derivative and negative second derivative in `eta`.
    pub fn score_weight(self, y: f64, eta: f64, sigma2: f64) -> (f64, f64) {
        match self {
            Family::Gaussian => ((y - eta) / sigma2, 1.0 / sigma2),
            Family::Bernoulli => {
                let p = logistic(eta);
                (y - p, p * (1.0 - p))
            }
        }
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One block of the latent vector and its prior.
#[derive(Debug, Clone)]
pub enum Component {
    /// Fixed effects with a known Gaussian prior precision.
    Fixed { size: usize, prior_precision: f64 },
    /// Exchangeable effects; hyperparameter: log precision.
    Iid { size: usize },
    /// Stationary SPDE field; hyperparameters: log tau, log kappa.
    Stationary { op: Arc<SpdeOperator<f64>>, log_kappa_bounds: (f64, f64) },
    /// Nonstationary SPDE field; hyperparameters: log tau0, log kappa0, then
    /// `p` coefficients for log tau and `p` for log kappa.
    Nonstationary { op: Arc<SpdeOperator<f64>>, basis: Arc<BasisSet<f64>>, log_kappa_bounds: (f64, f64) },
}

/// Admissible range of `log kappa` for a mesh: practical range between
/// half the typical edge length and twice the domain diameter.
pub fn default_log_kappa_bounds(op: &SpdeOperator<f64>) -> (f64, f64) {
    let area: f64 = op.mass().iter().sum();
    let n = op.dim() as f64;
    let h = (area / n).sqrt();
    let diameter = area.sqrt();
    let s8 = 8f64.sqrt();
    ((s8 / (2.0 * diameter)).ln(), (s8 / (0.5 * h)).ln())
}

impl Component {
    pub fn fixed(size: usize) -> Self {
        Component::Fixed { size, prior_precision: 1.0 / VAGUE_VARIANCE }
    }

    pub fn stationary(op: Arc<SpdeOperator<f64>>) -> Self {
        let log_kappa_bounds = default_log_kappa_bounds(&op);
        Component::Stationary { op, log_kappa_bounds }
    }

    pub fn nonstationary(op: Arc<SpdeOperator<f64>>, basis: Arc<BasisSet<f64>>) -> Result<Self> {
        if basis.n_vertices() != op.dim() {
            return Err(Error::Dimension(format!("basis over {} vertices, mesh has {}", basis.n_vertices(), op.dim())));
        }
        let log_kappa_bounds = default_log_kappa_bounds(&op);
        Ok(Component::Nonstationary { op, basis, log_kappa_bounds })
    }

    pub fn size(&self) -> usize {
        match self {
            Component::Fixed { size, .. } | Component::Iid { size } => *size,
            Component::Stationary { op, .. } | Component::Nonstationary { op, .. } => op.dim(),
        }
    }

    pub fn n_hyper(&self) -> usize {
        match self {
            Component::Fixed { .. } => 0,
            Component::Iid { .. } => 1,
            Component::Stationary { .. } => 2,
            Component::Nonstationary { basis, .. } => 2 + 2 * basis.p(),
        }
    }

    fn hyper_names(&self, label: &str) -> Vec<String> {
        match self {
            Component::Fixed { .. } => vec![],
            Component::Iid { .. } => vec![format!("{label}.log_prec")],
            Component::Stationary { .. } => vec![format!("{label}.log_tau"), format!("{label}.log_kappa")],
            Component::Nonstationary { basis, .. } => {
                let mut v = vec![format!("{label}.log_tau0"), format!("{label}.log_kappa0")];
                v.extend((1..=basis.p()).map(|k| format!("{label}.theta_tau{k}")));
                v.extend((1..=basis.p()).map(|k| format!("{label}.theta_kappa{k}")));
                v
            }
        }
    }

    /// Starting point and box for the hyperparameters: a field with unit
    /// marginal variance and range a third of the domain diameter.
    fn hyper_defaults(&self) -> Vec<(f64, f64, f64)> {
        let spde_start = |op: &SpdeOperator<f64>, (lo, hi): (f64, f64)| {
            let area: f64 = op.mass().iter().sum();
            let kappa = 8f64.sqrt() / (area.sqrt() / 3.0);
            let log_kappa = kappa.ln().clamp(lo, hi);
            // variance 1 / (4 pi kappa^2 tau^2) = 1
            let log_tau = -0.5 * (4.0 * std::f64::consts::PI).ln() - log_kappa;
            [(log_tau, log_tau - 12.0, log_tau + 12.0), (log_kappa, lo, hi)]
        };
        match self {
            Component::Fixed { .. } => vec![],
            Component::Iid { .. } => vec![(0.0, -12.0, 15.0)],
            Component::Stationary { op, log_kappa_bounds } => spde_start(op, *log_kappa_bounds).to_vec(),
            Component::Nonstationary { op, basis, log_kappa_bounds } => {
                let mut v = spde_start(op, *log_kappa_bounds).to_vec();
                v.extend(std::iter::repeat_n((0.0, -4.0, 4.0), 2 * basis.p()));
                v
            }
        }
    }

    /// Local upper-triangle pattern of the prior precision.
    fn pattern(&self) -> Vec<(usize, usize)> {
        match self {
            Component::Fixed { size, .. } | Component::Iid { size } => (0..*size).map(|i| (i, i)).collect(),
            Component::Stationary { op, .. } | Component::Nonstationary { op, .. } => {
                op.pattern().triplets().map(|(i, j, _)| (i, j)).collect()
            }
        }
    }

    /// Prior precision values on [`Component::pattern`].
    fn values(&self, theta: &[f64]) -> Result<Vec<f64>> {
        match self {
            Component::Fixed { size, prior_precision } => Ok(vec![*prior_precision; *size]),
            Component::Iid { size } => Ok(vec![theta[0].exp(); *size]),
            Component::Stationary { op, .. } => op.stationary_values(theta[0].exp(), theta[1].exp()),
            Component::Nonstationary { op, basis, .. } => {
                let p = basis.p();
                let (tau, kappa) = nonstationary_fields(basis, theta[0], theta[1], &theta[2..2 + p], &theta[2 + p..])?;
                op.nonstationary_values(&tau, &kappa)
            }
        }
    }
}

/// `tau(s) = exp(log_tau0 + b0(s) + Σ b_k(s) θτ_k)` and likewise for kappa.
pub fn nonstationary_fields(
    basis: &BasisSet<f64>,
    log_tau0: f64,
    log_kappa0: f64,
    theta_tau: &[f64],
    theta_kappa: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let lt = basis.log_field(theta_tau)?;
    let lk = basis.log_field(theta_kappa)?;
    Ok((lt.iter().map(|v| (v + log_tau0).exp()).collect(), lk.iter().map(|v| (v + log_kappa0).exp()).collect()))
}

/// Names, starting values, box and Gaussian prior of the hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperSpec {
    pub names: Vec<String>,
    pub init: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub prior_mean: Vec<f64>,
    pub prior_var: Vec<f64>,
    /// Coordinates held fixed at the given value.
    pub pinned: Vec<Option<f64>>,
}

impl HyperSpec {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Indices of the coordinates that are explored.
    pub fn free(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.pinned[k].is_none()).collect()
    }

    /// Full vector from the free coordinates.
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        let mut it = free.iter();
        (0..self.len()).map(|k| self.pinned[k].unwrap_or_else(|| *it.next().expect("free coordinate count"))).collect()
    }

    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(self.prior_mean.iter().zip(&self.prior_var))
            .enumerate()
            .filter(|(k, _)| self.pinned[*k].is_none())
            .map(|(_, (&t, (&m, &v)))| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (t - m) * (t - m) / v))
            .sum()
    }
}

/// Precomputed structure of `Q(θ) + Aᵀ W A` shared by every evaluation.
#[derive(Debug)]
pub(crate) struct JointStructure {
    pub pattern: SparseSymmetric<f64>,
    pub symbolic: Arc<SymbolicCholesky>,
    /// per component: local pattern index -> joint value index
    pub component_maps: Vec<Vec<usize>>,
    /// per component: symbolic factorization of its own prior precision
    pub component_symbolic: Vec<Option<(SparseSymmetric<f64>, Arc<SymbolicCholesky>)>>,
    /// `AᵀA` on the joint pattern
    pub gram: Vec<f64>,
    /// `(observation, joint index, a_i a_j)` for `Aᵀ diag(w) A`
    pub gram_terms: Vec<(u32, u32, f64)>,
}

/// A latent Gaussian model `y | x ~ family(offset + A x)`, `x | θ ~ N(0, Q(θ)⁻¹)`.
#[derive(Debug, Clone)]
pub struct LatentModel {
    family: Family,
    components: Vec<Component>,
    labels: Vec<String>,
    starts: Vec<usize>,
    hyper_starts: Vec<usize>,
    n_latent: usize,
    design: CscMatrix<f64>,
    offset: Vec<f64>,
    hyper: HyperSpec,
    joint: Arc<JointStructure>,
}

impl LatentModel {
    /// `components` are `(label, component)` pairs stacked in order; the
    /// design has one column per latent coordinate.
    pub fn new(family: Family, components: Vec<(String, Component)>, design: CscMatrix<f64>, offset: Vec<f64>) -> Result<Self> {
        let (labels, components): (Vec<String>, Vec<Component>) = components.into_iter().unzip();
        if components.is_empty() {
            return Err(Error::Argument("model needs at least one latent component".into()));
        }
        let mut starts = Vec::with_capacity(components.len());
        let mut hyper_starts = Vec::with_capacity(components.len());
        let (mut n_latent, mut n_hyper) = (0, 0);
        for c in &components {
            starts.push(n_latent);
            hyper_starts.push(n_hyper);
            n_latent += c.size();
            n_hyper += c.n_hyper();
        }
        if design.ncols() != n_latent {
            return Err(Error::Dimension(format!("design has {} columns, latent vector has {n_latent}", design.ncols())));
        }
        if offset.len() != design.nrows() {
            return Err(Error::Dimension(format!("{} offsets for {} observations", offset.len(), design.nrows())));
        }
        if let Some(bad) = components.iter().find_map(|c| match c {
            Component::Fixed { prior_precision, .. } if !(*prior_precision > 0.0) => Some(*prior_precision),
            _ => None,
        }) {
            return Err(Error::Argument(format!("fixed-effect prior precision {bad} must be positive")));
        }

        let mut names = Vec::new();
        let mut defaults = Vec::new();
        for (label, c) in labels.iter().zip(&components) {
            names.extend(c.hyper_names(label));
            defaults.extend(c.hyper_defaults());
        }
        if family == Family::Gaussian {
            names.push("noise.log_sigma2".into());
            defaults.push((0.0, -15.0, 10.0));
        }
        let h = names.len();
        let hyper = HyperSpec {
            names,
            init: defaults.iter().map(|d| d.0).collect(),
            lower: defaults.iter().map(|d| d.1).collect(),
            upper: defaults.iter().map(|d| d.2).collect(),
            prior_mean: vec![0.0; h],
            prior_var: vec![VAGUE_VARIANCE; h],
            pinned: vec![None; h],
        };
        let joint = Arc::new(build_joint(&components, &starts, n_latent, &design, family)?);
        Ok(Self { family, components, labels, starts, hyper_starts, n_latent, design, offset, hyper, joint })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n_latent(&self) -> usize {
        self.n_latent
    }

    pub fn n_obs(&self) -> usize {
        self.design.nrows()
    }

    pub fn design(&self) -> &CscMatrix<f64> {
        &self.design
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn hyper(&self) -> &HyperSpec {
        &self.hyper
    }

    pub fn hyper_mut(&mut self) -> &mut HyperSpec {
        &mut self.hyper
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Latent index range of the component with this label.
    pub fn component_range(&self, label: &str) -> Option<std::ops::Range<usize>> {
        let k = self.labels.iter().position(|l| l == label)?;
        Some(self.starts[k]..self.starts[k] + self.components[k].size())
    }

    /// Hyperparameter index range of the component with this label.
    pub fn hyper_range(&self, label: &str) -> Option<std::ops::Range<usize>> {
        let k = self.labels.iter().position(|l| l == label)?;
        Some(self.hyper_starts[k]..self.hyper_starts[k] + self.components[k].n_hyper())
    }

    /// Pins a hyperparameter by name.
    pub fn pin(&mut self, name: &str, value: f64) -> Result<()> {
        let k = self.hyper.names.iter().position(|n| n == name).ok_or_else(|| Error::Argument(format!("unknown hyperparameter {name}")))?;
        self.hyper.pinned[k] = Some(value);
        Ok(())
    }

    /// Noise variance for the Gaussian family (1 otherwise).
    pub fn sigma2(&self, theta: &[f64]) -> f64 {
        match self.family {
            Family::Gaussian => theta[theta.len() - 1].exp(),
            Family::Bernoulli => 1.0,
        }
    }

    pub(crate) fn joint(&self) -> &JointStructure {
        &self.joint
    }

    pub(crate) fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.hyper.len() {
            return Err(Error::Dimension(format!("{} hyperparameters given, model has {}", theta.len(), self.hyper.len())));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Argument(format!("non-finite hyperparameters {theta:?}")));
        }
        Ok(())
    }

    pub(crate) fn check_y(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n_obs() {
            return Err(Error::Dimension(format!("{} responses for {} observations", y.len(), self.n_obs())));
        }
        match self.family {
            Family::Gaussian if y.iter().any(|v| !v.is_finite()) => Err(Error::Argument("responses must be finite".into())),
            Family::Bernoulli if y.iter().any(|&v| v != 0.0 && v != 1.0) => Err(Error::Argument("Bernoulli responses must be 0 or 1".into())),
            _ => Ok(()),
        }
    }

    /// Prior precision values scattered onto the joint pattern, and
    /// `log |Q(θ)|`.
    pub(crate) fn prior_on_joint(&self, theta: &[f64]) -> Result<(Vec<f64>, f64)> {
        let joint = &self.joint;
        let mut values = vec![0.0; joint.pattern.nnz()];
        let mut log_det = 0.0;
        for (k, c) in self.components.iter().enumerate() {
            let h = self.hyper_starts[k];
            let local = c.values(&theta[h..h + c.n_hyper()]).map_err(|e| e.with_theta(theta))?;
            for (&dst, &v) in joint.component_maps[k].iter().zip(&local) {
                values[dst] += v;
            }
            log_det += match &joint.component_symbolic[k] {
                None => local.iter().map(|v| v.ln()).sum::<f64>(),
                Some((_, sym)) => sym.factorize(&local).map_err(|e| e.with_theta(theta))?.log_det(),
            };
        }
        Ok((values, log_det))
    }

    /// Prior precision `Q(θ)` of the whole latent vector.
    pub fn prior_precision(&self, theta: &[f64]) -> Result<SparseSymmetric<f64>> {
        self.check_theta(theta)?;
        let (values, _) = self.prior_on_joint(theta)?;
        let t: Vec<_> = self.joint.pattern.triplets().zip(&values).map(|((i, j, _), &v)| (i, j, v)).collect();
        SparseSymmetric::from_triplets(self.n_latent, &t)
    }

    /// Linear predictor `offset + A x`.
    pub fn linear_predictor(&self, x: &[f64]) -> Vec<f64> {
        let mut eta = self.design.mul_vec(x);
        eta.iter_mut().zip(&self.offset).for_each(|(e, o)| *e += o);
        eta
    }
}

fn build_joint(components: &[Component], starts: &[usize], n: usize, design: &CscMatrix<f64>, family: Family) -> Result<JointStructure> {
    let gram_full = design.transpose().matmul(design)?;
    let mut triplets: Vec<(usize, usize, f64)> = gram_full.triplets().filter(|t| t.0 <= t.1).map(|(i, j, _)| (i, j, 1.0)).collect();
    let locals: Vec<Vec<(usize, usize)>> = components.iter().map(Component::pattern).collect();
    for (c, local) in locals.iter().enumerate() {
        triplets.extend(local.iter().map(|&(i, j)| (starts[c] + i, starts[c] + j, 1.0)));
    }
    let pattern = SparseSymmetric::from_triplets(n, &triplets)?;
    let index = |i: usize, j: usize| -> usize {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        let up = pattern.upper();
        let range = up.col_ptr()[c]..up.col_ptr()[c + 1];
        range.start + up.row_idx()[range].binary_search(&r).expect("entry in joint pattern")
    };
    let component_maps = locals
        .iter()
        .enumerate()
        .map(|(c, local)| local.iter().map(|&(i, j)| index(starts[c] + i, starts[c] + j)).collect())
        .collect();
    let component_symbolic = components
        .iter()
        .map(|c| match c {
            Component::Stationary { op, .. } | Component::Nonstationary { op, .. } => {
                let p = op.pattern().clone();
                SymbolicCholesky::analyze_rcm(&p).map(|s| Some((p, Arc::new(s))))
            }
            _ => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut gram = vec![0.0; pattern.nnz()];
    for (i, j, v) in gram_full.triplets().filter(|t| t.0 <= t.1) {
        gram[index(i, j)] += v;
    }
    let mut gram_terms = Vec::new();
    if family == Family::Bernoulli {
        let at = design.transpose();
        for k in 0..design.nrows() {
            let row: Vec<(usize, f64)> = at.column(k).collect();
            for (a, &(i, vi)) in row.iter().enumerate() {
                for &(j, vj) in &row[a..] {
                    gram_terms.push((k as u32, index(i, j) as u32, vi * vj));
                }
            }
        }
    }
    let symbolic = Arc::new(SymbolicCholesky::analyze_rcm(&pattern)?);
    Ok(JointStructure { pattern, symbolic, component_maps, component_symbolic, gram, gram_terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    fn small_model(family: Family) -> LatentModel {
        let mesh = Mesh::<f64>::grid(4, 4, 1.0, 0).unwrap();
        let op = Arc::new(SpdeOperator::from_mesh(&mesh).unwrap());
        let n = op.dim();
        let mut t = Vec::new();
        for k in 0..n {
            t.push((k, 0, 1.0));
            t.push((k, 1 + k, 1.0));
        }
        let a = CscMatrix::from_triplets(n, n + 1, &t).unwrap();
        LatentModel::new(
            family,
            vec![("b0".into(), Component::fixed(1)), ("field".into(), Component::stationary(op))],
            a,
            vec![0.0; n],
        )
        .unwrap()
    }

    #[test]
    fn layout_and_names() {
        let m = small_model(Family::Gaussian);
        assert_eq!(m.n_latent(), 17);
        assert_eq!(m.component_range("field"), Some(1..17));
        assert_eq!(m.hyper().names, vec!["field.log_tau", "field.log_kappa", "noise.log_sigma2"]);
        let b = small_model(Family::Bernoulli);
        assert_eq!(b.hyper().len(), 2);
    }

    #[test]
    fn prior_precision_is_block_diagonal() {
        let m = small_model(Family::Gaussian);
        let theta = m.hyper().init.clone();
        let q = m.prior_precision(&theta).unwrap();
        assert!((q.get(0, 0) - 1e-3).abs() < 1e-15);
        assert!((1..17).all(|j| q.get(0, j) == 0.0));
        let Component::Stationary { op, .. } = &m.components()[1] else { panic!() };
        let qs = op.stationary(theta[0].exp(), theta[1].exp()).unwrap();
        for (i, j, v) in qs.triplets() {
            assert!((q.get(i + 1, j + 1) - v).abs() < 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn prior_log_det_matches_factorization() {
        let m = small_model(Family::Gaussian);
        let theta = vec![0.3, -0.2, 0.0];
        let (_, ld) = m.prior_on_joint(&theta).unwrap();
        let q = m.prior_precision(&theta).unwrap();
        let direct = crate::cholesky::CholeskyFactor::new(&q).unwrap().log_det();
        assert!((ld - direct).abs() < 1e-9);
    }

    #[test]
    fn pinning_and_expansion() {
        let mut m = small_model(Family::Gaussian);
        m.pin("field.log_kappa", 0.5).unwrap();
        assert_eq!(m.hyper().free(), vec![0, 2]);
        assert_eq!(m.hyper().expand(&[1.0, 2.0]), vec![1.0, 0.5, 2.0]);
        assert!(m.pin("nope", 0.0).is_err());
    }

    #[test]
    fn softplus_and_logistic_are_stable() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert_eq!(logistic(-1000.0), 0.0);
        assert!((logistic(0.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn bad_inputs_rejected() {
        let m = small_model(Family::Bernoulli);
        assert!(m.check_y(&[0.5; 16]).is_err());
        assert!(m.check_y(&[1.0; 3]).is_err());
        assert!(m.check_theta(&[0.0]).is_err());
    }
}
