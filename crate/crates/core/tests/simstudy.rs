use fanova_core::lgm::Family;
use fanova_core::simstudy::{
    fit_variant, gradient_map, make_shape, median_iqr, replicate_seed, roc_auc, roc_auc_trapezoid, run_study, simulate_dataset, write_study_csv,
    ShapeKind, SimConfig, StudyContext, Variant,
};
use fanova_core::spde::BasisOrder;

#[test]
fn shapes_on_the_default_grid() {
    let counts: Vec<usize> = ShapeKind::ALL.iter().map(|&k| make_shape(k, 15, 15).unwrap().count()).collect();
    assert_eq!(counts[0], 25);
    assert_eq!(counts[2], 45);
    assert!(counts.iter().all(|&c| c > 0 && c < 225));
    assert!(make_shape(ShapeKind::U, 5, 5).is_err());
}

#[test]
fn shape_names_round_trip() {
    for k in ShapeKind::ALL {
        assert_eq!(k.to_string().parse::<ShapeKind>().unwrap(), k);
    }
}

#[test]
fn auc_estimators_agree() {
    let scores = [0.1, 0.4, 0.35, 0.8, 0.8, 0.2, 0.9];
    let labels = [false, true, false, true, false, false, true];
    let a = roc_auc(&scores, &labels).unwrap();
    let b = roc_auc_trapezoid(&scores, &labels).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn gradient_of_a_plane_is_zero_in_the_interior() {
    let (nx, ny) = (6, 5);
    let f: Vec<f64> = (0..nx * ny).map(|k| (k % nx) as f64 + 2.0 * (k / nx) as f64).collect();
    let d = gradient_map(&f, nx, ny).unwrap();
    assert_eq!(d[2 * nx + 2], 0.0);
    assert_eq!(median_iqr(&[3.0, 1.0, 2.0]).0, 2.0);
}

#[test]
fn replicate_seeds_differ() {
    let s: std::collections::HashSet<u64> = (0..1000).map(|r| replicate_seed(42, r)).collect();
    assert_eq!(s.len(), 1000);
}

#[test]
fn independent_fit_tracks_level_difference() {
    let shape = make_shape(ShapeKind::Square, 8, 8).unwrap();
    let mut config = SimConfig::gaussian(2.0, 1, 5);
    config.nx = 8;
    config.ny = 8;
    config.sigma = 0.2;
    let data = simulate_dataset(&config, &shape, 11).unwrap();
    let ctx = StudyContext::new(8, 8, 2, BasisOrder::Linear).unwrap();
    let fit = fit_variant(&ctx, &data, Variant::Ind, Family::Gaussian, None).unwrap();
    let n = data.n_loc;
    for l in 0..n {
        let level = |i: usize| (data.y[(2 * i) * n + l] + data.y[(2 * i + 1) * n + l]) / 2.0;
        assert!((fit.beta1.mean[l] - (level(1) - level(0))).abs() < 1e-2, "location {l}");
    }
}

#[test]
fn small_study_writes_tables() {
    let shape = make_shape(ShapeKind::Bar, 8, 8).unwrap();
    let mut config = SimConfig::gaussian(2.0, 2, 3);
    config.nx = 8;
    config.ny = 8;
    let ctx = StudyContext::new(8, 8, 2, BasisOrder::Linear).unwrap();
    let results = run_study(&config, &shape, &[Variant::Ind, Variant::Stat], &ctx).unwrap();
    assert_eq!(results.len(), 2);
    assert!(results.iter().all(|r| r.completed == 2 && r.coverage.is_some()));
    let dir = tempfile::tempdir().unwrap();
    write_study_csv(dir.path(), &shape, &results).unwrap();
    for f in ["ci_zero.csv", "gradient.csv", "summary.csv"] {
        assert!(dir.path().join(f).is_file());
    }
}
