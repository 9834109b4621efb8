//! Matérn covariances and GMRF precision matrices from the finite-element
//! discretization of `(kappa^2 - Laplacian)(tau x) = W` with smoothness 1.

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::scalar::Real;
use crate::sparse::SparseSymmetric;

/// Smoothness used by every precision assembly in this crate.
pub const NU: f64 = 1.0;

/// Modified Bessel function of the second kind, `K_nu(x)` for `x > 0`,
/// from `K_nu(x) = ∫_0^∞ exp(-x cosh t) cosh(nu t) dt` by the trapezoid
/// rule (exponentially convergent for this integrand).
pub fn bessel_k<T: Real>(nu: T, x: T) -> T {
    assert!(x > T::zero(), "bessel_k requires x > 0");
    let (nu, x) = (nu.abs().to_f64_lossy(), x.to_f64_lossy());
    // integrand below exp(-745) underflows past this point
    let t_max = (745.0 / x).max(1.0 + 1e-12).acosh() + 1.0;
    let h = (t_max / 4000.0).min(0.02);
    let steps = (t_max / h).ceil() as usize;
    let f = |t: f64| (-x * t.cosh()).exp() * (nu * t).cosh();
    let mut acc = 0.5 * f(0.0);
    for k in 1..=steps {
        acc += f(k as f64 * h);
    }
    T::lit(acc * h)
}

/// Matérn correlation `2^{1-nu}/Gamma(nu) (kappa d)^nu K_nu(kappa d)`.
pub fn matern_correlation<T: Real>(distance: T, kappa: T, nu: T) -> T {
    if distance <= T::zero() {
        return T::one();
    }
    let z = kappa * distance;
    let nuf = nu.to_f64_lossy();
    let norm = (1.0 - nuf).exp2() / statrs::function::gamma::gamma(nuf);
    T::lit(norm) * z.powf(nu) * bessel_k(nu, z)
}

/// Matérn covariance `(1/(tau 2^{nu-1} Gamma(nu))) (kappa d)^nu K_nu(kappa d)`,
/// equal to `1/tau` at distance zero.
pub fn matern_cov<T: Real>(distance: T, tau: T, kappa: T, nu: T) -> T {
    assert!(tau > T::zero() && kappa > T::zero() && nu > T::zero(), "matern_cov parameters must be positive");
    matern_correlation(distance, kappa, nu) / tau
}

/// Distance at which the `nu`-Matérn correlation is roughly 0.1.
pub fn practical_range<T: Real>(kappa: T, nu: T) -> T {
    (T::lit(8.0) * nu).sqrt() / kappa
}

/// Stationary hyperparameters on the log scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryParams<T> {
    pub log_tau: T,
    pub log_kappa: T,
}

impl<T: Real> StationaryParams<T> {
    pub fn tau(&self) -> T {
        self.log_tau.exp()
    }

    pub fn kappa(&self) -> T {
        self.log_kappa.exp()
    }
}

/// Polynomial order of the coordinate basis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisOrder {
    #[default]
    Linear,
    Quadratic,
}

/// Offset row plus `p` basis functions evaluated at the mesh vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet<T> {
    values: Vec<Vec<T>>,
}

impl<T: Real> BasisSet<T> {
    /// Rows: offset first, then basis functions; all of equal length.
    pub fn new(values: Vec<Vec<T>>) -> Result<Self> {
        let Some(first) = values.first() else {
            return Err(Error::Argument("basis needs at least the offset row".into()));
        };
        let n = first.len();
        if values.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("basis rows differ in length".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Argument("basis values must be finite".into()));
        }
        if first.iter().any(|&v| v != first[0]) {
            return Err(Error::Argument("offset row must be constant".into()));
        }
        Ok(Self { values })
    }

    /// Constant offset only (`p = 0`).
    pub fn constant(n: usize, offset: T) -> Self {
        Self { values: vec![vec![offset; n]] }
    }

    /// Offset plus the two coordinates, centered and scaled to `[-1, 1]`
    /// over the mesh bounding box.
    pub fn linear(mesh: &Mesh<T>, offset: T) -> Self {
        let (u, v) = scaled_coordinates(mesh);
        Self { values: vec![vec![offset; u.len()], u, v] }
    }

    /// Offset plus `x, y, x², xy, y²` on scaled coordinates (`p = 5`).
    pub fn quadratic(mesh: &Mesh<T>, offset: T) -> Self {
        let (u, v) = scaled_coordinates(mesh);
        let uu = u.iter().map(|&a| a * a).collect();
        let uv = u.iter().zip(&v).map(|(&a, &b)| a * b).collect();
        let vv = v.iter().map(|&b| b * b).collect();
        Self { values: vec![vec![offset; u.len()], u, v, uu, uv, vv] }
    }

    pub fn of_order(mesh: &Mesh<T>, order: BasisOrder, offset: T) -> Self {
        match order {
            BasisOrder::Linear => Self::linear(mesh, offset),
            BasisOrder::Quadratic => Self::quadratic(mesh, offset),
        }
    }

    /// Number of basis functions excluding the offset.
    pub fn p(&self) -> usize {
        self.values.len() - 1
    }

    pub fn n_vertices(&self) -> usize {
        self.values[0].len()
    }

    pub fn row(&self, k: usize) -> &[T] {
        &self.values[k]
    }

    /// `b_0(s) + Σ_k b_k(s) theta_k` at every vertex.
    pub fn log_field(&self, theta: &[T]) -> Result<Vec<T>> {
        if theta.len() != self.p() {
            return Err(Error::Dimension(format!("{} coefficients for {} basis functions", theta.len(), self.p())));
        }
        let mut out = self.values[0].clone();
        for (row, &th) in self.values[1..].iter().zip(theta) {
            for (o, &b) in out.iter_mut().zip(row) {
                *o += b * th;
            }
        }
        Ok(out)
    }
}

fn scaled_coordinates<T: Real>(mesh: &Mesh<T>) -> (Vec<T>, Vec<T>) {
    let (lo, hi) = mesh.bounding_box();
    let two = T::lit(2.0);
    let scale = |k: usize, x: T| {
        let w = hi[k] - lo[k];
        if w > T::zero() {
            two * (x - lo[k]) / w - T::one()
        } else {
            T::zero()
        }
    };
    mesh.vertices().iter().map(|v| (scale(0, v[0]), scale(1, v[1]))).unzip()
}

/// Basis coefficients for the log precision and log inverse range.
#[derive(Debug, Clone, PartialEq)]
pub struct NonstatParams<T> {
    pub theta_tau: Vec<T>,
    pub theta_kappa: Vec<T>,
}

/// Evaluates `tau(s)` and `kappa(s)` at the vertices for a shared basis.
pub fn eval_log_fields<T: Real>(basis: &BasisSet<T>, params: &NonstatParams<T>) -> Result<(Vec<T>, Vec<T>)> {
    let lt = basis.log_field(&params.theta_tau)?;
    let lk = basis.log_field(&params.theta_kappa)?;
    Ok((lt.into_iter().map(T::exp).collect(), lk.into_iter().map(T::exp).collect()))
}

fn check_mass<T: Real>(c: &[T]) -> Result<()> {
    if let Some(i) = c.iter().position(|&v| !(v > T::zero())) {
        return Err(Error::Assembly(format!("mass matrix entry {i} is not positive")));
    }
    Ok(())
}

/// `G C^{-1} G` for diagonal `C`.
pub fn gcg<T: Real>(c: &[T], g: &SparseSymmetric<T>) -> Result<SparseSymmetric<T>> {
    check_mass(c)?;
    let full = g.to_full();
    let inv: Vec<T> = c.iter().map(|&v| T::one() / v).collect();
    let scaled = full.scale_diag(&inv, &vec![T::one(); c.len()]);
    SparseSymmetric::from_full(&full.matmul(&scaled)?)
}

/// `Q = tau² (kappa⁴ C + 2 kappa² G + G C⁻¹ G)`, built with sparse products.
pub fn assemble_q_stationary<T: Real>(c: &[T], g: &SparseSymmetric<T>, tau: T, kappa: T) -> Result<SparseSymmetric<T>> {
    if c.len() != g.dim() {
        return Err(Error::Dimension("mass and stiffness sizes differ".into()));
    }
    if !(tau > T::zero() && kappa > T::zero()) {
        return Err(Error::Argument("tau and kappa must be positive".into()));
    }
    let k2 = kappa * kappa;
    let cm = SparseSymmetric::from_diagonal(&c.iter().map(|&v| v * k2 * k2).collect::<Vec<_>>());
    let q = cm.linear_combination(T::one(), g, T::lit(2.0) * k2)?.add(&gcg(c, g)?)?;
    Ok(q.scale(tau * tau))
}

/// `Q = T (K² C K² + K² G + G K² + G C⁻¹ G) T` with `T = diag(tau)`,
/// `K = diag(kappa)`.
pub fn assemble_q_nonstationary<T: Real>(
    c: &[T],
    g: &SparseSymmetric<T>,
    tau_field: &[T],
    kappa_field: &[T],
) -> Result<SparseSymmetric<T>> {
    let n = c.len();
    if g.dim() != n || tau_field.len() != n || kappa_field.len() != n {
        return Err(Error::Dimension("field lengths must match the mesh".into()));
    }
    check_fields(tau_field, kappa_field)?;
    let k2: Vec<T> = kappa_field.iter().map(|&k| k * k).collect();
    let cm = SparseSymmetric::from_diagonal(&c.iter().zip(&k2).map(|(&ci, &k)| ci * k * k).collect::<Vec<_>>());
    let gf = g.to_full();
    let ones = vec![T::one(); n];
    let k2g = gf.scale_diag(&k2, &ones);
    let gk2 = gf.scale_diag(&ones, &k2);
    let middle = SparseSymmetric::from_full(&k2g.linear_combination(T::one(), &gk2, T::one())?)?;
    let inner = cm.add(&middle)?.add(&gcg(c, g)?)?;
    Ok(inner.congruence_diag(tau_field))
}

fn check_fields<T: Real>(tau: &[T], kappa: &[T]) -> Result<()> {
    if let Some(i) = tau.iter().position(|&v| !(v > T::zero()) || !v.is_finite()) {
        return Err(Error::Assembly(format!("tau field is not positive at vertex {i}")));
    }
    if let Some(i) = kappa.iter().position(|&v| !(v > T::zero()) || !v.is_finite()) {
        return Err(Error::Assembly(format!("kappa field is not positive at vertex {i}")));
    }
    Ok(())
}

/// Finite-element operator with the `theta`-independent pieces cached on a
/// common sparsity pattern, so precisions are assembled in `O(nnz)`.
#[derive(Debug, Clone)]
pub struct SpdeOperator<T> {
    mass: Vec<T>,
    pattern: SparseSymmetric<T>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    g_values: Vec<T>,
    gcg_values: Vec<T>,
}

impl<T: Real> SpdeOperator<T> {
    pub fn from_mesh(mesh: &Mesh<T>) -> Result<Self> {
        let c = mesh.mass_diagonal()?;
        let g = mesh.assemble_stiffness()?;
        Self::new(c, &g)
    }

    pub fn new(mass: Vec<T>, g: &SparseSymmetric<T>) -> Result<Self> {
        check_mass(&mass)?;
        if mass.len() != g.dim() {
            return Err(Error::Dimension("mass and stiffness sizes differ".into()));
        }
        let n = mass.len();
        let gcg = gcg(&mass, g)?;
        // union pattern: diagonal, G and G C^-1 G
        let mut t: Vec<(usize, usize, T)> = (0..n).map(|i| (i, i, T::one())).collect();
        t.extend(g.triplets().map(|(i, j, _)| (i, j, T::one())));
        t.extend(gcg.triplets().map(|(i, j, _)| (i, j, T::one())));
        let pattern = SparseSymmetric::from_triplets(n, &t)?;
        let (rows, cols): (Vec<usize>, Vec<usize>) = pattern.triplets().map(|(i, j, _)| (i, j)).unzip();
        let g_values = rows.iter().zip(&cols).map(|(&i, &j)| g.get(i, j)).collect();
        let gcg_values = rows.iter().zip(&cols).map(|(&i, &j)| gcg.get(i, j)).collect();
        Ok(Self { mass, pattern, rows, cols, g_values, gcg_values })
    }

    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[T] {
        &self.mass
    }

    /// Structural pattern shared by every precision from this operator.
    pub fn pattern(&self) -> &SparseSymmetric<T> {
        &self.pattern
    }

    pub fn stationary(&self, tau: T, kappa: T) -> Result<SparseSymmetric<T>> {
        self.pattern.with_values(self.stationary_values(tau, kappa)?)
    }

    pub fn nonstationary(&self, tau_field: &[T], kappa_field: &[T]) -> Result<SparseSymmetric<T>> {
        self.pattern.with_values(self.nonstationary_values(tau_field, kappa_field)?)
    }

    /// Stationary precision values laid out on [`SpdeOperator::pattern`].
    pub fn stationary_values(&self, tau: T, kappa: T) -> Result<Vec<T>> {
        if !(tau > T::zero() && kappa > T::zero()) || !tau.is_finite() || !kappa.is_finite() {
            return Err(Error::Assembly(format!("tau = {tau}, kappa = {kappa} must be positive and finite")));
        }
        let (t2, k2) = (tau * tau, kappa * kappa);
        let two = T::lit(2.0);
        let values: Vec<T> = (0..self.rows.len())
            .map(|p| {
                let (i, j) = (self.rows[p], self.cols[p]);
                let mut v = two * k2 * self.g_values[p] + self.gcg_values[p];
                if i == j {
                    v += k2 * k2 * self.mass[i];
                }
                t2 * v
            })
            .collect();
        Ok(values)
    }

    /// Nonstationary precision values laid out on [`SpdeOperator::pattern`].
    pub fn nonstationary_values(&self, tau_field: &[T], kappa_field: &[T]) -> Result<Vec<T>> {
        if tau_field.len() != self.dim() || kappa_field.len() != self.dim() {
            return Err(Error::Dimension("field lengths must match the mesh".into()));
        }
        check_fields(tau_field, kappa_field)?;
        let values: Vec<T> = (0..self.rows.len())
            .map(|p| {
                let (i, j) = (self.rows[p], self.cols[p]);
                let (ki, kj) = (kappa_field[i] * kappa_field[i], kappa_field[j] * kappa_field[j]);
                let mut v = (ki + kj) * self.g_values[p] + self.gcg_values[p];
                if i == j {
                    v += ki * ki * self.mass[i];
                }
                tau_field[i] * v * tau_field[j]
            })
            .collect();
        Ok(values)
    }
}

/// `(kappa² C + G) C⁻¹ (kappa² C + G)` through explicit dense algebra; used
/// as an independent check of the expanded formula.
pub fn dense_stationary_product<T: Real>(c: &[T], g: &SparseSymmetric<T>, tau: T, kappa: T) -> Vec<Vec<T>> {
    let n = c.len();
    let gd = g.to_dense();
    let k2 = kappa * kappa;
    let kmat: Vec<Vec<T>> = (0..n)
        .map(|i| (0..n).map(|j| gd[i][j] + if i == j { k2 * c[i] } else { T::zero() }).collect())
        .collect();
    let mut out = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for k in 0..n {
            if kmat[i][k] == T::zero() {
                continue;
            }
            let a = kmat[i][k] / c[k];
            for j in 0..n {
                out[i][j] += a * kmat[k][j];
            }
        }
    }
    let t2 = tau * tau;
    out.iter_mut().flatten().for_each(|v| *v *= t2);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: &SparseSymmetric<f64>, b: &[Vec<f64>]) -> f64 {
        let ad = a.to_dense();
        let scale = b.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut e = 0.0f64;
        for i in 0..b.len() {
            for j in 0..b.len() {
                e = e.max((ad[i][j] - b[i][j]).abs());
            }
        }
        e / scale
    }

    #[test]
    fn bessel_reference_values() {
        // tabulated values of K_nu
        assert!((bessel_k(0.0f64, 1.0) - 0.421_024_438_240_708_3).abs() < 1e-13);
        assert!((bessel_k(1.0f64, 1.0) - 0.601_907_230_197_234_6).abs() < 1e-13);
        assert!((bessel_k(1.0f64, 2.0) - 0.139_865_881_816_522_4).abs() < 1e-13);
    }

    #[test]
    fn bessel_half_order_closed_form() {
        for x in [0.05, 0.3, 1.0, 4.0, 20.0] {
            let exact = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp();
            assert!((bessel_k(0.5, x) - exact).abs() < 1e-12 * exact.max(1e-300), "x = {x}");
        }
    }

    #[test]
    fn matern_at_zero_is_inverse_tau() {
        for tau in [0.5f64, 1.0, 7.0] {
            assert!((matern_cov(0.0, tau, 2.0, 1.0) - 1.0 / tau).abs() < 1e-15);
            // and the limit from the right
            assert!((matern_cov(1e-9, tau, 2.0, 1.0) - 1.0 / tau).abs() < 1e-6);
        }
    }

    #[test]
    fn matern_half_is_exponential() {
        assert!((matern_cov(1.0, 1.0, 1.0, 0.5) - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn practical_range_correlation_near_tenth() {
        for kappa in [0.3, 1.0, 5.0] {
            let r = matern_correlation(practical_range(kappa, 1.0), kappa, 1.0);
            assert!((0.09..=0.14).contains(&r), "{r}");
        }
    }

    #[test]
    fn log_fields_constant_and_linear() {
        let mesh = Mesh::<f64>::grid(3, 3, 1.0, 0).unwrap();
        let b0 = BasisSet::constant(9, 0.3);
        let (t, k) = eval_log_fields(&b0, &NonstatParams { theta_tau: vec![], theta_kappa: vec![] }).unwrap();
        assert!(t.iter().chain(&k).all(|&v| (v - 0.3f64.exp()).abs() < 1e-15));

        let b = BasisSet::linear(&mesh, 0.0);
        let (t, k) = eval_log_fields(&b, &NonstatParams { theta_tau: vec![0.0, 0.0], theta_kappa: vec![0.0, 0.0] }).unwrap();
        assert!(t.iter().chain(&k).all(|&v| v == 1.0));

        let (t, _) = eval_log_fields(&b, &NonstatParams { theta_tau: vec![1.0, -1.0], theta_kappa: vec![0.0, 0.0] }).unwrap();
        for (v, &tv) in mesh.vertices().iter().zip(&t) {
            // pointwise oracle: x, y scaled from [0, 2] onto [-1, 1]
            let (u, w) = (v[0] - 1.0, v[1] - 1.0);
            assert!((tv - (u - w).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn log_fields_dimension_mismatch() {
        let b = BasisSet::<f64>::constant(4, 0.0);
        assert!(eval_log_fields(&b, &NonstatParams { theta_tau: vec![1.0], theta_kappa: vec![] }).is_err());
        assert!(BasisSet::new(vec![vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn stationary_matches_dense_product() {
        for (mesh, tau, kappa) in [
            (Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], vec![true; 3]).unwrap(), 1.0, 1.0),
            (Mesh::grid(5, 4, 0.8, 1).unwrap(), 2.5, 0.7),
            (Mesh::grid(6, 6, 1.0, 0).unwrap(), 0.3, 3.0),
        ] {
            let c = mesh.mass_diagonal().unwrap();
            let g = mesh.assemble_stiffness().unwrap();
            let oracle = dense_stationary_product(&c, &g, tau, kappa);
            let q = assemble_q_stationary(&c, &g, tau, kappa).unwrap();
            assert!(rel_err(&q, &oracle) < 1e-12);
            let op = SpdeOperator::new(c.clone(), &g).unwrap();
            assert!(rel_err(&op.stationary(tau, kappa).unwrap(), &oracle) < 1e-12);
        }
    }

    #[test]
    fn large_kappa_is_mass_dominated() {
        let mesh = Mesh::<f64>::grid(5, 5, 1.0, 0).unwrap();
        let op = SpdeOperator::from_mesh(&mesh).unwrap();
        let ratio = |kappa: f64| {
            let q = op.stationary(1.0, kappa).unwrap();
            let d = q.diagonal();
            q.triplets().filter(|t| t.0 != t.1).map(|(i, j, v)| v.abs() / (d[i] * d[j]).sqrt()).fold(0.0, f64::max)
        };
        assert!(ratio(10.0) < 0.05);
        assert!(ratio(100.0) < ratio(10.0));
    }

    #[test]
    fn nonstationary_constant_fields_reduce_to_stationary() {
        let mesh = Mesh::<f64>::grid(6, 5, 0.9, 2).unwrap();
        let c = mesh.mass_diagonal().unwrap();
        let g = mesh.assemble_stiffness().unwrap();
        let n = c.len();
        let (tau, kappa) = (1.7, 0.45);
        let qs = assemble_q_stationary(&c, &g, tau, kappa).unwrap();
        let qn = assemble_q_nonstationary(&c, &g, &vec![tau; n], &vec![kappa; n]).unwrap();
        let scale = qs.triplets().map(|t| t.2.abs()).fold(0.0, f64::max);
        for (i, j, v) in qs.triplets() {
            assert!((qn.get(i, j) - v).abs() <= 1e-12 * scale);
        }
        assert_eq!(qs.nnz(), qn.nnz());
    }

    #[test]
    fn nonstationary_symmetric_positive_definite() {
        let mesh = Mesh::<f64>::grid(5, 5, 1.0, 0).unwrap();
        let op = SpdeOperator::from_mesh(&mesh).unwrap();
        let tau: Vec<f64> = mesh.vertices().iter().map(|v| (0.3 * v[0] - 0.1 * v[1]).exp()).collect();
        let kappa: Vec<f64> = mesh.vertices().iter().map(|v| (0.2 * v[1] - 0.5).exp()).collect();
        let q = op.nonstationary(&tau, &kappa).unwrap();
        let d = q.to_dense();
        let m = nalgebra::DMatrix::from_fn(d.len(), d.len(), |i, j| d[i][j]);
        assert_eq!(m, m.transpose());
        let eig = m.symmetric_eigenvalues();
        assert!(eig.min() > 0.0);
    }

    #[test]
    fn nonpositive_inputs_rejected() {
        let mesh = Mesh::<f64>::grid(3, 3, 1.0, 0).unwrap();
        let c = mesh.mass_diagonal().unwrap();
        let g = mesh.assemble_stiffness().unwrap();
        let mut bad_c = c.clone();
        bad_c[4] = 0.0;
        assert!(matches!(assemble_q_stationary(&bad_c, &g, 1.0, 1.0), Err(Error::Assembly(_))));
        let mut tau = vec![1.0; 9];
        tau[2] = -1.0;
        assert!(matches!(assemble_q_nonstationary(&c, &g, &tau, &[1.0; 9]), Err(Error::Assembly(_))));
    }

    #[test]
    fn tau_scaling_is_quadratic() {
        let mesh = Mesh::<f64>::grid(4, 4, 1.0, 1).unwrap();
        let op = SpdeOperator::from_mesh(&mesh).unwrap();
        let q1 = op.stationary(1.0, 0.8).unwrap();
        let q3 = op.stationary(3.0, 0.8).unwrap();
        for ((_, _, a), (_, _, b)) in q1.triplets().zip(q3.triplets()) {
            assert!((9.0 * a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn pattern_within_two_hop_plus_diagonal() {
        let mesh = Mesh::<f64>::grid(5, 4, 1.0, 0).unwrap();
        let c = mesh.mass_diagonal().unwrap();
        let g = mesh.assemble_stiffness().unwrap();
        let two_hop = gcg(&c, &g).unwrap();
        let q = assemble_q_stationary(&c, &g, 1.0, 1.3).unwrap();
        for (i, j, _) in q.triplets() {
            assert!(i == j || two_hop.get(i, j) != 0.0, "({i},{j})");
        }
    }
}
