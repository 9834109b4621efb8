use approx::assert_relative_eq;
use fanova_core::spde::{matern_correlation, BasisOrder, BasisSet};
use fanova_core::{CholeskyFactor, Mesh, SpdeOperator};

#[test]
fn grid_mesh_csv_round_trip() {
    let mesh = Mesh::grid(6, 5, 0.5, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    mesh.write_csv(dir.path()).unwrap();
    let back = Mesh::read_csv(dir.path()).unwrap();
    assert_eq!(back.vertices(), mesh.vertices());
    assert_eq!(back.triangles(), mesh.triangles());
}

#[test]
fn grid_mesh_area_and_mass() {
    let mesh = Mesh::grid(8, 6, 2.0, 1).unwrap();
    // (8 + 2 - 1) x (6 + 2 - 1) cells of side 2
    assert_relative_eq!(mesh.total_area(), 9.0 * 7.0 * 4.0, max_relative = 1e-14);
    let mass: f64 = mesh.mass_diagonal().unwrap().iter().sum();
    assert_relative_eq!(mass, mesh.total_area(), max_relative = 1e-14);
}

#[test]
fn stiffness_annihilates_constants() {
    let mesh = Mesh::grid(5, 7, 1.0, 2).unwrap().refine();
    let g = mesh.assemble_stiffness().unwrap();
    let r = g.mul_vec(&vec![1.0; mesh.n_vertices()]);
    assert!(r.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn projector_reproduces_linear_functions() {
    let mesh = Mesh::grid(6, 6, 1.0, 2).unwrap();
    let points = [[0.3, 0.7], [4.25, 1.5], [2.0, 2.0], [-1.5, 5.9]];
    let a = mesh.projector(&points).unwrap();
    let f: Vec<f64> = mesh.vertices().iter().map(|p| 2.0 * p[0] - 3.0 * p[1] + 1.0).collect();
    for (p, v) in points.iter().zip(a.apply(&f)) {
        assert_relative_eq!(v, 2.0 * p[0] - 3.0 * p[1] + 1.0, epsilon = 1e-12);
    }
}

#[test]
fn point_outside_mesh_is_rejected() {
    let mesh = Mesh::grid(4, 4, 1.0, 1).unwrap();
    assert!(mesh.projector(&[[10.0, 0.0]]).is_err());
}

#[test]
fn f32_mesh_matches_f64() {
    let m64 = Mesh::grid(5, 5, 1.0, 1).unwrap();
    let m32 = fanova_core::MeshF32::grid(5, 5, 1.0f32, 1).unwrap();
    let c64 = m64.mass_diagonal().unwrap();
    let c32 = m32.mass_diagonal().unwrap();
    for (a, b) in c64.iter().zip(&c32) {
        assert!((a - *b as f64).abs() < 1e-6);
    }
}

#[test]
fn interior_correlation_follows_matern() {
    let mesh = Mesh::grid(40, 40, 1.0, 4).unwrap();
    let op = SpdeOperator::from_mesh(&mesh).unwrap();
    let kappa = 0.4;
    let f = CholeskyFactor::new(&op.stationary(1.0, kappa).unwrap()).unwrap();
    let idx = |x: f64, y: f64| mesh.vertices().iter().position(|p| p[0] == x && p[1] == y).unwrap();
    let c = idx(20.0, 20.0);
    let mut e = vec![0.0; mesh.n_vertices()];
    e[c] = 1.0;
    let col = f.solve(&e);
    for lag in [2.0, 4.0, 7.0] {
        let o = idx(20.0 + lag, 20.0);
        let mut e = vec![0.0; mesh.n_vertices()];
        e[o] = 1.0;
        let r = col[o] / (col[c] * f.solve(&e)[o]).sqrt();
        assert!((r - matern_correlation(lag, kappa, 1.0)).abs() < 0.06, "lag {lag}: {r}");
    }
}

#[test]
fn basis_orders() {
    let mesh = Mesh::grid(4, 4, 1.0, 1).unwrap();
    assert_eq!(BasisSet::of_order(&mesh, BasisOrder::Linear, 0.0).p(), 2);
    assert_eq!(BasisSet::of_order(&mesh, BasisOrder::Quadratic, 0.0).p(), 5);
}
