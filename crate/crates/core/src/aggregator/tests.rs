use super::*;
use crate::numkit::SeededRng;
use proptest::prelude::*;

fn random_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.gaussian()).collect()).unwrap()
}

fn small_model(seed: u64) -> AggregatorModel {
    let dims = AggregatorDims {
        input_dim: 6,
        pooled_dim: 8,
        heads: 2,
        classes: 3,
    };
    AggregatorModel::init(dims, InitScheme::FanIn, seed).unwrap()
}

fn random_batch(seed: u64, d: usize, classes: usize) -> Vec<Bag> {
    let mut rng = SeededRng::new(seed);
    (0..4)
        .map(|i| Bag {
            tokens: random_matrix(3 + i, d, &mut rng),
            label: i % classes,
        })
        .collect()
}

#[test]
fn single_token_bag_is_finite_and_deterministic() {
    let m = small_model(1);
    let t = random_matrix(1, 6, &mut SeededRng::new(2));
    let a = m.forward(&t, &ExactKernel).unwrap();
    assert!(a.pooled.iter().chain(&a.logits).all(|v| v.is_finite()));
    assert_eq!(a, m.forward(&t, &ExactKernel).unwrap());
    assert_eq!(a.pooled.len(), 8);
    assert_eq!(a.logits.len(), 3);
}

#[test]
fn empty_bag_is_rejected() {
    let m = small_model(1);
    let e = m.forward(&Matrix::zeros(0, 6), &ExactKernel).unwrap_err();
    assert!(e.to_string().contains("empty bag"));
    assert!(m.forward(&Matrix::zeros(0, 6), &NystromKernel::default()).is_err());
}

#[test]
fn scripted_three_token_forward() {
    let dims = AggregatorDims {
        input_dim: 2,
        pooled_dim: 4,
        heads: 1,
        classes: 2,
    };
    let mut m = AggregatorModel::init(dims, InitScheme::Gaussian { std: 0.0 }, 0).unwrap();
    for t in m.params.tensors_mut() {
        t.as_mut_slice().fill(1.0);
    }
    let x = [[0.1, 0.0], [0.0, -0.05], [0.02, 0.03]];
    let tokens = Matrix::from_rows(&x).unwrap();
    let out = m.forward(&tokens, &ExactKernel).unwrap();

    // h_i = (x_i0 + x_i1)·1₄ ; q0 = 4·1₄ ; k_i = v_i = 4·s_i·1₄ ; score_i = q0·k_i / √4
    let s: Vec<f64> = x.iter().map(|r| r[0] + r[1]).collect();
    let scores: Vec<f64> = s.iter().map(|si| 4.0 * 4.0 * (4.0 * si) / 2.0).collect();
    let z: f64 = scores.iter().map(|v| v.exp()).sum();
    let attn: f64 = scores.iter().zip(&s).map(|(sc, si)| sc.exp() / z * 4.0 * si).sum();
    // concat = attn·1₄ ; pooled = 1 + 4·attn per coordinate ; logits = 4·pooled + 1
    let pooled = 1.0 + 4.0 * attn;
    for p in &out.pooled {
        assert!((p - pooled).abs() < 1e-9);
    }
    for l in &out.logits {
        assert!((l - (4.0 * pooled + 1.0)).abs() < 1e-9);
    }
}

#[test]
fn duplicated_bag_pools_identically() {
    let m = small_model(4);
    let t = random_matrix(1, 6, &mut SeededRng::new(5));
    let tt = Matrix::from_rows(&[t.row(0), t.row(0)]).unwrap();
    let a = aggregate(&t, &m, &ExactKernel, Modality::Cell).unwrap();
    let b = aggregate(&tt, &m, &ExactKernel, Modality::Cell).unwrap();
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn aggregate_is_the_pooled_output() {
    let m = small_model(6);
    let t = random_matrix(5, 6, &mut SeededRng::new(7));
    let f = aggregate(&t, &m, &ExactKernel, Modality::Edge).unwrap();
    assert_eq!(f.dim(), 8);
    assert_eq!(f.modality, Modality::Edge);
    assert_eq!(f.values, m.forward(&t, &ExactKernel).unwrap().pooled);
}

#[test]
fn nystrom_single_token_single_landmark_matches_exact() {
    let m = small_model(8);
    let t = random_matrix(1, 6, &mut SeededRng::new(9));
    let k = NystromKernel {
        landmarks: 1,
        ..Default::default()
    };
    let a = m.forward(&t, &ExactKernel).unwrap();
    let b = m.forward(&t, &k).unwrap();
    for (x, y) in a.pooled.iter().zip(&b.pooled) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn epochs_zero_returns_initialization() {
    let bags = random_batch(1, 6, 3);
    let cfg = TrainConfig {
        epochs: 0,
        ..Default::default()
    };
    let (model, trace) = train_aggregator(&bags, 8, 2, &cfg, &ExactKernel).unwrap();
    let init = AggregatorModel::init(model.dims, cfg.init, cfg.seed).unwrap();
    assert_eq!(model, init);
    assert!(trace.epochs.is_empty());
}

#[test]
fn single_class_training_is_rejected() {
    let mut bags = random_batch(1, 6, 3);
    for b in &mut bags {
        b.label = 0;
    }
    assert!(train_aggregator(&bags, 8, 2, &TrainConfig::default(), &ExactKernel).is_err());
}

#[test]
fn learning_rate_schedule_halves_every_seven_epochs() {
    let cfg = TrainConfig::default();
    for e in 0..40 {
        assert_eq!(cfg.lr_at(e), 0.001 * 0.5f64.powi((e / 7) as i32));
    }
    assert_eq!(cfg.lr_at(6), 0.001);
    assert_eq!(cfg.lr_at(7), 0.0005);
}

#[test]
fn exact_gradients_match_finite_differences() {
    for seed in 0..3 {
        let m = small_model(seed);
        let batch = random_batch(seed + 100, 6, 3);
        let r = grad_check(&m, &batch, 1e-5, &ExactKernel, seed).unwrap();
        assert!(r.coordinates >= 200);
        assert!(r.max_relative_error < 1e-4, "seed {seed}: {r:?}");
    }
}

#[test]
fn nystrom_gradients_match_finite_differences() {
    let k = NystromKernel {
        landmarks: 2,
        pinv_iters: 6,
        seed: 11,
    };
    for seed in 0..3 {
        let m = small_model(seed);
        let batch = random_batch(seed + 200, 6, 3);
        let r = grad_check(&m, &batch, 1e-5, &k, seed).unwrap();
        assert!(r.max_relative_error < 1e-3, "seed {seed}: {r:?}");
    }
}

#[test]
fn grad_check_rejects_bad_eps() {
    let m = small_model(0);
    let batch = random_batch(0, 6, 3);
    assert!(grad_check(&m, &batch, 0.0, &ExactKernel, 0).is_err());
    assert!(grad_check(&m, &batch, -1e-3, &ExactKernel, 0).is_err());
}

#[test]
fn head_bias_gradient_is_softmax_minus_onehot() {
    let m = small_model(12);
    let t = random_matrix(4, 6, &mut SeededRng::new(13));
    // the same bag twice with one label: the bias gradient is the mean residual
    let bags = [Bag { tokens: t.clone(), label: 1 }, Bag { tokens: t.clone(), label: 1 }];
    let refs: Vec<&Bag> = bags.iter().collect();
    let (_, g) = batch_loss_and_grad(&m, &refs, &ExactKernel).unwrap();
    let mut p = m.forward(&t, &ExactKernel).unwrap().logits;
    crate::numkit::softmax_in_place(&mut p);
    p[1] -= 1.0;
    for (a, b) in g.head_b.as_slice().iter().zip(&p) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn model_file_round_trip() {
    let m = small_model(3);
    let bytes = m.to_bytes();
    assert_eq!(&bytes[..8], b"FECTAGG1");
    assert_eq!(&bytes[8..12], &6u32.to_le_bytes());
    assert_eq!(AggregatorModel::from_bytes(&bytes).unwrap(), m);
    assert!(AggregatorModel::from_bytes(&bytes[..bytes.len() - 8]).is_err());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("agg.bin");
    m.save(&path).unwrap();
    assert_eq!(AggregatorModel::load(&path).unwrap(), m);
}

#[test]
fn loss_trace_csv_layout() {
    let trace = TrainTrace {
        initial_loss: 1.5,
        epochs: vec![EpochRecord { epoch: 0, lr: 0.001, loss: 1.25 }],
    };
    assert_eq!(trace.to_csv(), "epoch,lr,loss\ninit,,1.5\n0,0.001,1.25\n");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn pooled_output_is_permutation_invariant(seed in 0u64..10_000, n in 1usize..12) {
        let m = small_model(seed % 7);
        let mut rng = SeededRng::new(seed);
        let t = random_matrix(n, 6, &mut rng);
        let perm = rng.permutation(n);
        let rows: Vec<&[f64]> = perm.iter().map(|&i| t.row(i)).collect();
        let shuffled = Matrix::from_rows(&rows).unwrap();
        let a = m.forward(&t, &ExactKernel).unwrap();
        let b = m.forward(&shuffled, &ExactKernel).unwrap();
        for (x, y) in a.pooled.iter().zip(&b.pooled) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
