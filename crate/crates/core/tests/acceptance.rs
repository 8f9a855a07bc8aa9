//! Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use fect_core::aggregator::{
    grad_check, AggregatorDims, AggregatorModel, Bag, ExactKernel, InitScheme, NystromKernel,
};
use fect_core::descriptors::Modality;
use fect_core::eval::ABLATION_SUBSETS;
use fect_core::fusion::GridSpec;
use fect_core::imaging::{connected_components, trace_contour, Connectivity, ContourSampler};
use fect_core::graph::build_knn_graph;
use fect_core::numkit::{penrose_residuals, pinv_iterative, Matrix, SeededRng};
use fect_core::pipeline::{Pipeline, PipelineConfig, SplitName, WeightSource};
use fect_core::svm::{kkt_violation, train_binary_svm, train_multiclass, SvmParams};
use fect_core::eval::{compute_metrics, ConfusionMatrix};

const IN_SITU: usize = 2;
const INVASIVE: usize = 3;

struct Check {
    pass: bool,
    detail: String,
}

impl Check {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| scale * rng.gaussian()).collect()).unwrap()
}

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let dims = AggregatorDims { input_dim: 6, pooled_dim: 8, heads: 2, classes: 3 };
    let nystrom = NystromKernel { landmarks: 2, pinv_iters: 6, seed: 11 };
    let (mut worst_exact, mut worst_nys) = (0.0f64, 0.0f64);
    for seed in 0..5u64 {
        let model = AggregatorModel::init(dims, InitScheme::FanIn, seed).unwrap();
        let mut rng = SeededRng::new(1000 + seed);
        let batch: Vec<Bag> = (0..4)
            .map(|i| Bag { tokens: random_matrix(&mut rng, 3 + i, 6, 1.0), label: i % 3 })
            .collect();
        worst_exact = worst_exact.max(grad_check(&model, &batch, 1e-5, &ExactKernel, seed).unwrap().max_relative_error);
        worst_nys = worst_nys.max(grad_check(&model, &batch, 1e-5, &nystrom, seed).unwrap().max_relative_error);
    }
    let secs = start.elapsed().as_secs_f64();
    Check::new(
        worst_exact < 1e-4 && worst_nys < 1e-3 && secs < 30.0,
        format!("max rel err exact {worst_exact:.2e} (< 1e-4), nystrom {worst_nys:.2e} (< 1e-3), {secs:.1}s (< 30s)"),
    )
}

/// Mean Frobenius error of Nyström vs exact attention outputs over 20 seeds.
fn nystrom_error(init: InitScheme, n: usize, m: usize, iters: usize) -> f64 {
    let dims = AggregatorDims { input_dim: 16, pooled_dim: 64, heads: 4, classes: 2 };
    let mut total = 0.0;
    for seed in 0..20u64 {
        let model = AggregatorModel::init(dims, init, seed).unwrap();
        let tokens = random_matrix(&mut SeededRng::new(500 + seed), n, 16, 1.0);
        let exact = model.attention_outputs(&tokens, &ExactKernel).unwrap();
        let kernel = NystromKernel { landmarks: m, pinv_iters: iters, seed: 7 + seed };
        let approx = model.attention_outputs(&tokens, &kernel).unwrap();
        total += approx.sub(&exact).unwrap().frobenius_norm();
    }
    total / 20.0
}

fn nystrom_fidelity() -> Check {
    let init = InitScheme::Gaussian { std: 0.02 };
    let ms = [1, 2, 4, 8, 16, 32];
    let errors: Vec<f64> = ms.iter().map(|&m| nystrom_error(init, 32, m, 6)).collect();
    let at_n_small: Vec<f64> = [8, 16].iter().map(|&n| nystrom_error(init, n, n, 6)).collect();
    let monotone = errors.windows(2).all(|w| w[1] <= w[0]);
    let at_n = errors[errors.len() - 1];
    let fan_in = nystrom_error(InitScheme::FanIn, 32, 32, 6);
    let curve = ms.iter().zip(&errors).map(|(m, e)| format!("m={m}:{e:.4e}")).collect::<Vec<_>>().join(" ");
    Check::new(
        at_n < 1e-3 && at_n_small.iter().all(|e| *e < 1e-3) && monotone,
        format!(
            "N(0,0.02) model, n=32: {curve}; m=n at n=8,16: {:.2e}, {:.2e}; non-increasing: {monotone} \
             [diagnostic, fan-in weights at m=n=32: {fan_in:.3e}]",
            at_n_small[0], at_n_small[1]
        ),
    )
}

fn pseudoinverse() -> Check {
    let mut rng = SeededRng::new(3);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let g = random_matrix(&mut rng, 8, 8, 0.15 / 8f64.sqrt());
        let a = Matrix::identity(8).add(&g).unwrap();
        let z = pinv_iterative(&a, 6).unwrap();
        let (r1, r2) = penrose_residuals(&a, &z).unwrap();
        worst = worst.max(r1).max(r2);
    }
    Check::new(worst < 1e-4, format!("worst Penrose residual over 50 matrices {worst:.2e} (< 1e-4)"))
}

fn svm_optimality() -> Check {
    let mut rng = SeededRng::new(4);
    let mut worst_kkt = 0.0f64;
    let mut all_fit = true;
    for _ in 0..10 {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            rows.push(vec![3.0 * s + 0.5 * rng.gaussian(), 3.0 * s + 0.5 * rng.gaussian()]);
            y.push(s);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let model = train_binary_svm(&x, &y, &SvmParams::default()).unwrap();
        worst_kkt = worst_kkt.max(kkt_violation(&model, &x, &y).unwrap());
        all_fit &= (0..40).all(|i| model.predict(x.row(i)).unwrap() == y[i]);
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (label, c) in [(0.0, 5.0), (5.0, -3.0), (-5.0, -3.0)].iter().enumerate() {
        for _ in 0..20 {
            rows.push(vec![c.0 + rng.gaussian(), c.1 + rng.gaussian()]);
            labels.push(label);
        }
    }
    let x3 = Matrix::from_rows(&rows).unwrap();
    let ens = train_multiclass(&x3, &labels, &SvmParams::default()).unwrap();
    all_fit &= ens.predict_labels(&x3).unwrap() == labels;

    let mut worst_rel = 0.0f64;
    let params = SvmParams { c: 1.0, tol: 1e-6, max_iter: 100_000 };
    for _ in 0..30 {
        let n = 3 + rng.below(4);
        let d = 1 + rng.below(2);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.uniform_range(-2.0, 2.0)).collect()).collect();
        let mut y: Vec<f64> = (0..n).map(|_| if rng.bernoulli(0.5) { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[n - 1] = -1.0;
        let model = train_binary_svm(&Matrix::from_rows(&x).unwrap(), &y, &params).unwrap();
        let smo = common::dual_objective(&x, &y, &model.lambdas);
        let oracle = common::active_set_dual(&x, &y, 1.0);
        worst_rel = worst_rel.max((smo - oracle).abs() / oracle.abs().max(1e-12));
    }
    Check::new(
        worst_kkt < 1e-3 && worst_rel < 1e-2 && all_fit,
        format!(
            "max KKT violation {worst_kkt:.2e} (< 1e-3); dual vs active-set enumeration rel diff {worst_rel:.2e} (< 1e-2); \
             separable blob suites fit 100%: {all_fit}"
        ),
    )
}

fn geometry_oracles() -> Check {
    let mut rng = SeededRng::new(5);
    let mut cc_ok = 0;
    let cc_cases = 120;
    for _ in 0..cc_cases {
        let rows = 5 + rng.below(40);
        let cols = 5 + rng.below(40);
        let mask = common::random_mask(&mut rng, rows, cols);
        let agree = [Connectivity::Four, Connectivity::Eight].iter().all(|&conn| {
            let got = connected_components(&mask, conn);
            let (labels, count) = common::union_find_labels(&mask, conn);
            got.count == count && got.labels.as_slice() == labels.as_slice()
        });
        cc_ok += usize::from(agree);
    }
    let mut knn_ok = 0;
    let knn_cases = 120;
    for _ in 0..knn_cases {
        let n = 1 + rng.below(40);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.below(8) as f64, rng.below(8) as f64)).collect();
        let k = 1 + rng.below(7);
        let g = build_knn_graph(&pts, &vec![vec![0.0]; n], k).unwrap();
        knn_ok += usize::from(g.edges == common::knn_by_selection(&pts, k));
    }
    let sampler = ContourSampler::default();
    let mut worst_spread = 0.0f64;
    for _ in 0..100 {
        let contour = trace_contour(&common::random_blob(&mut rng, 160)).unwrap();
        let gaps = common::arc_gaps(&contour, &sampler.sample_indices(&contour));
        let hi = gaps.iter().cloned().fold(f64::MIN, f64::max);
        let lo = gaps.iter().cloned().fold(f64::MAX, f64::min);
        worst_spread = worst_spread.max(hi - lo);
    }
    Check::new(
        cc_ok == cc_cases && knn_ok == knn_cases && worst_spread <= 2.0,
        format!(
            "components {cc_ok}/{cc_cases} exact, knn {knn_ok}/{knn_cases} exact, \
             worst arc-gap spread {worst_spread:.3} px (<= 2)"
        ),
    )
}

fn metrics_oracle() -> Check {
    let mut rng = SeededRng::new(6);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let cm = common::random_confusion(&mut rng);
        let (t, p) = common::labels_from_counts(&cm);
        let got = compute_metrics(&cm).unwrap();
        let want = common::metrics_from_labels(&t, &p, cm.classes());
        for (a, b) in [
            (got.weighted_f1, want.weighted_f1),
            (got.macro_f1, want.macro_f1),
            (got.accuracy, want.accuracy),
            (got.balanced_accuracy, want.balanced_accuracy),
        ] {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in got.f1.iter().zip(&want.f1) {
            worst = worst.max((a - b).abs());
        }
    }
    let hand = compute_metrics(&ConfusionMatrix::from_counts(vec![vec![1, 1], vec![0, 2]]).unwrap())
        .unwrap()
        .weighted_f1;
    let hand_err = (hand - 11.0 / 15.0).abs();
    Check::new(
        worst <= 1e-12 && hand_err <= 1e-12,
        format!("max deviation over 500 matrices {worst:.1e} (<= 1e-12); [[1,1],[0,2]] weighted F1 {hand:.12} vs 11/15"),
    )
}

/// Everything the end-to-end criteria need from one full pipeline run.
struct RunResult {
    secs: f64,
    split_sizes: (usize, usize, usize),
    ablation: fect_core::eval::AblationTable,
    grid_test_f1: f64,
    heatmap: String,
    loss_csvs: Vec<String>,
    lr0: f64,
    decay_every: usize,
}

fn full_run(root: &Path) -> fect_core::Result<RunResult> {
    let start = Instant::now();
    let mut cfg = PipelineConfig::default();
    cfg.data_dir = root.join("data");
    cfg.cache_dir = root.join("cache");
    cfg.model_dir = root.join("models");
    cfg.report_dir = root.join("reports");
    let p = Pipeline::new(cfg.clone())?;
    p.generate(None)?;
    for m in [Modality::Cell, Modality::Edge] {
        p.train_aggregator(m)?;
    }
    for m in Modality::ALL {
        p.extract(m)?;
    }
    let (_, ablation) = p.ablate()?;
    p.gridsearch(&GridSpec::default())?;
    let grid_cfg = PipelineConfig { weight_source: WeightSource::Grid, ..cfg.clone() };
    let grid_pipeline = Pipeline::new(grid_cfg)?;
    grid_pipeline.train_svm()?;
    let eval = grid_pipeline.evaluate(SplitName::Test)?;
    let secs = start.elapsed().as_secs_f64();

    let manifest = p.load_manifest()?;
    let splits = p.load_splits(&manifest)?;
    let read = |name: &str| fs::read_to_string(p.report_path(name)).unwrap_or_default();
    Ok(RunResult {
        secs,
        split_sizes: (splits.train.len(), splits.val.len(), splits.test.len()),
        ablation,
        grid_test_f1: eval.metrics.weighted_f1,
        heatmap: read("heatmap.csv"),
        loss_csvs: vec![read("cell_loss.csv"), read("edge_loss.csv")],
        lr0: cfg.lr0,
        decay_every: cfg.decay_every,
    })
}

fn end_to_end(r: &RunResult) -> Check {
    let row = |s: &str| r.ablation.row(s).expect("ablation row");
    let fused = row("fusion").metrics.weighted_f1;
    let singles: Vec<(String, f64)> = ["cell", "tissue", "edge"]
        .iter()
        .map(|s| (s.to_string(), row(s).metrics.weighted_f1))
        .collect();
    let ct_pair = row("cell+tissue").confusion.pair_accuracy(IN_SITU, INVASIVE);
    let all_pair = row("fusion").confusion.pair_accuracy(IN_SITU, INVASIVE);
    let pass = fused >= 0.90
        && r.grid_test_f1 >= 0.90
        && singles.iter().all(|(_, f)| fused >= *f)
        && all_pair > ct_pair
        && r.secs < 300.0;
    let singles_txt = singles.iter().map(|(s, f)| format!("{s} {f:.4}")).collect::<Vec<_>>().join(", ");
    Check::new(
        pass,
        format!(
            "split {}/{}/{}; test weighted F1: fusion {fused:.4} (>= 0.90), grid-selected weights {:.4}; \
             singles {singles_txt}; in-situ vs invasive pair accuracy cell+tissue {ct_pair:.4} -> +edge {all_pair:.4}; \
             run {:.0}s (< 300s)",
            r.split_sizes.0, r.split_sizes.1, r.split_sizes.2, r.grid_test_f1, r.secs
        ),
    )
}

fn structure(r: &RunResult) -> Check {
    let names: Vec<&str> = r.ablation.rows.iter().map(|row| row.subset.as_str()).collect();
    let want: Vec<String> = ABLATION_SUBSETS.iter().map(|s| fect_core::eval::subset_name(s)).collect();
    let rows_ok = names.len() == 7 && names == want.iter().map(String::as_str).collect::<Vec<_>>();

    let mut per_gamma: std::collections::BTreeMap<String, BTreeSet<(String, String)>> = Default::default();
    let mut heat_rows = 0;
    for line in r.heatmap.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        per_gamma.entry(f[2].to_string()).or_default().insert((f[0].to_string(), f[1].to_string()));
        heat_rows += 1;
    }
    let tenths: BTreeSet<String> = (0..=10).map(|i| (f64::from(i) / 10.0).to_string()).collect();
    let full_grid: BTreeSet<(String, String)> =
        tenths.iter().flat_map(|a| tenths.iter().map(move |b| (a.clone(), b.clone()))).collect();
    let grid_ok = r.heatmap.starts_with("alpha,beta,gamma,acc,weighted_f1\n")
        && heat_rows == 605
        && per_gamma.len() == 5
        && per_gamma.values().all(|s| *s == full_grid);

    let mut lr_rows = 0;
    let lr_ok = r.loss_csvs.iter().all(|csv| {
        csv.lines().skip(2).all(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let e: usize = f[0].parse().unwrap();
            let lr: f64 = f[1].parse().unwrap();
            lr_rows += 1;
            lr == r.lr0 * 0.5f64.powi((e / r.decay_every) as i32)
        }) && csv.lines().count() == 32
    });
    Check::new(
        rows_ok && grid_ok && lr_ok,
        format!(
            "ablation rows [{}]; heatmap {heat_rows} rows, {} gamma values x 11x11 alpha/beta: {grid_ok}; \
             lr trace exact on {lr_rows} epochs: {lr_ok}",
            names.join(", "),
            per_gamma.len()
        ),
    )
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism(a: &Path, b: &Path) -> Check {
    let (ta, tb) = (tree(a), tree(b));
    let mismatched: Vec<&str> = ta
        .iter()
        .zip(&tb)
        .filter(|((na, ba), (nb, bb))| na != nb || ba != bb)
        .map(|((na, _), _)| na.as_str())
        .collect();
    let count = |dir: &str| ta.iter().filter(|(n, _)| n.starts_with(dir)).count();
    Check::new(
        ta.len() == tb.len() && mismatched.is_empty(),
        format!(
            "{} files compared ({} caches, {} models, {} reports), {} differ{}",
            ta.len(),
            count("cache"),
            count("models"),
            count("reports"),
            mismatched.len(),
            mismatched.first().map(|n| format!(", first: {n}")).unwrap_or_default()
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Check)> = Vec::new();
    results.push((1, "gradient correctness", gradient_correctness()));
    results.push((2, "nystrom fidelity", nystrom_fidelity()));
    results.push((3, "pseudoinverse", pseudoinverse()));
    results.push((4, "svm optimality", svm_optimality()));
    results.push((5, "geometry oracles", geometry_oracles()));
    results.push((6, "metrics oracle", metrics_oracle()));

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    match (full_run(dir_a.path()), full_run(dir_b.path())) {
        (Ok(a), Ok(_)) => {
            results.push((7, "end-to-end synthetic task", end_to_end(&a)));
            results.push((8, "structural reproduction", structure(&a)));
            results.push((9, "determinism", determinism(dir_a.path(), dir_b.path())));
        }
        (Err(e), _) | (_, Err(e)) => {
            for (id, name) in [(7, "end-to-end synthetic task"), (8, "structural reproduction"), (9, "determinism")] {
                results.push((id, name, Check::new(false, format!("pipeline failed: {e}"))));
            }
        }
    }

    let mut failed = 0;
    for (id, name, check) in &results {
        let tag = if check.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {id} ({name}): {}", check.detail);
        failed += usize::from(!check.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
