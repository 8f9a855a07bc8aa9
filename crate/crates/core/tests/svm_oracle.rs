mod common;

use fect_core::numkit::{Matrix, SeededRng};
use fect_core::svm::{kkt_violation, train_binary_svm, train_multiclass, SvmParams};

fn small_instance(rng: &mut SeededRng) -> (Vec<Vec<f64>>, Vec<f64>) {
    loop {
        let n = 3 + rng.below(4);
        let d = 1 + rng.below(2);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.uniform_range(-2.0, 2.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| if rng.bernoulli(0.5) { 1.0 } else { -1.0 }).collect();
        if y.contains(&1.0) && y.contains(&-1.0) {
            return (x, y);
        }
    }
}

#[test]
fn dual_objective_matches_active_set_enumeration() {
    let mut rng = SeededRng::new(51);
    let params = SvmParams { c: 1.0, tol: 1e-6, max_iter: 100_000 };
    for case in 0..30 {
        let (x, y) = small_instance(&mut rng);
        let model = train_binary_svm(&Matrix::from_rows(&x).unwrap(), &y, &params).unwrap();
        let smo = common::dual_objective(&x, &y, &model.lambdas);
        let oracle = common::active_set_dual(&x, &y, params.c);
        let rel = (smo - oracle).abs() / oracle.abs().max(1e-12);
        assert!(rel < 1e-2, "case {case}: smo {smo} oracle {oracle}");
        assert!((smo - model.dual_objective()).abs() < 1e-9);
    }
}

fn blobs(rng: &mut SeededRng, n: usize, sep: f64) -> (Matrix, Vec<f64>) {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        rows.push(vec![s * sep + 0.5 * rng.gaussian(), s * sep + 0.5 * rng.gaussian()]);
        y.push(s);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

#[test]
fn separable_blob_suite_converges_with_certificate() {
    let mut rng = SeededRng::new(52);
    for _ in 0..10 {
        let (x, y) = blobs(&mut rng, 40, 3.0);
        let model = train_binary_svm(&x, &y, &SvmParams::default()).unwrap();
        assert!(model.meta.converged);
        assert!(kkt_violation(&model, &x, &y).unwrap() < 1e-3);
        for i in 0..x.rows() {
            assert_eq!(model.predict(x.row(i)).unwrap(), y[i]);
        }
        let primal = model.primal_objective(&x, &y).unwrap();
        let dual = model.dual_objective();
        assert!((primal - dual) / primal.abs().max(1.0) < 1e-2, "{primal} {dual}");
    }
}

#[test]
fn duplicating_points_keeps_the_decision_function() {
    let mut rng = SeededRng::new(53);
    let (x, y) = blobs(&mut rng, 20, 2.0);
    let params = SvmParams { c: 10.0, tol: 1e-8, max_iter: 100_000 };
    let a = train_binary_svm(&x, &y, &params).unwrap();
    let mut rows: Vec<Vec<f64>> = (0..x.rows()).map(|r| x.row(r).to_vec()).collect();
    rows.extend(rows.clone());
    let yy: Vec<f64> = y.iter().chain(&y).cloned().collect();
    let b = train_binary_svm(&Matrix::from_rows(&rows).unwrap(), &yy, &params).unwrap();
    for (wa, wb) in a.w.iter().zip(&b.w) {
        assert!((wa - wb).abs() < 1e-6, "{wa} {wb}");
    }
    assert!((a.b - b.b).abs() < 1e-6);
}

#[test]
fn three_gaussian_blobs_are_fit_exactly() {
    let mut rng = SeededRng::new(54);
    let centers = [(0.0, 5.0), (5.0, -3.0), (-5.0, -3.0)];
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (label, c) in centers.iter().enumerate() {
        for _ in 0..20 {
            rows.push(vec![c.0 + rng.gaussian(), c.1 + rng.gaussian()]);
            y.push(label);
        }
    }
    let x = Matrix::from_rows(&rows).unwrap();
    let ens = train_multiclass(&x, &y, &SvmParams::default()).unwrap();
    assert_eq!(ens.pairs.len(), 3);
    assert_eq!(ens.predict_labels(&x).unwrap(), y);
}
