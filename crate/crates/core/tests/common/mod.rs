//! Independent reference implementations shared by the integration tests
//! and the acceptance harness.
#![allow(dead_code)]

use fect_core::eval::ConfusionMatrix;
use fect_core::imaging::{Connectivity, Contour, Grid, Mask};
use fect_core::numkit::SeededRng;

/// Random mask: scattered rectangles and single pixels at the given density.
pub fn random_mask(rng: &mut SeededRng, rows: usize, cols: usize) -> Mask {
    let mut m = Grid::filled(rows, cols, false);
    let p = rng.uniform_range(0.15, 0.55);
    for r in 0..rows {
        for c in 0..cols {
            if rng.bernoulli(p) {
                m.set(r, c, true);
            }
        }
    }
    m
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Union-find labeling with labels assigned in raster order of first pixel.
pub fn union_find_labels(mask: &Mask, conn: Connectivity) -> (Vec<u32>, usize) {
    let (rows, cols) = mask.dims();
    let mut parent: Vec<usize> = (0..rows * cols).collect();
    let neighbors: &[(i64, i64)] = match conn {
        Connectivity::Four => &[(0, 1), (1, 0)],
        Connectivity::Eight => &[(0, 1), (1, -1), (1, 0), (1, 1)],
    };
    for r in 0..rows {
        for c in 0..cols {
            if !*mask.get(r, c) {
                continue;
            }
            for &(dr, dc) in neighbors {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if mask.get_signed(nr, nc) == Some(&true) {
                    let a = find(&mut parent, r * cols + c);
                    let b = find(&mut parent, nr as usize * cols + nc as usize);
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut labels = vec![0u32; rows * cols];
    let mut root_label = std::collections::HashMap::new();
    for i in 0..rows * cols {
        if mask.as_slice()[i] {
            let root = find(&mut parent, i);
            let next = root_label.len() as u32 + 1;
            labels[i] = *root_label.entry(root).or_insert(next);
        }
    }
    (labels, root_label.len())
}

/// KNN edges by repeated arg-min selection; ties go to the lower index.
pub fn knn_by_selection(points: &[(f64, f64)], k: usize) -> Vec<(usize, usize)> {
    let n = points.len();
    let mut edges = Vec::new();
    for i in 0..n {
        let mut taken = vec![false; n];
        taken[i] = true;
        for _ in 0..k.min(n.saturating_sub(1)) {
            let mut best: Option<(f64, usize)> = None;
            for j in 0..n {
                if taken[j] {
                    continue;
                }
                let d = (points[i].0 - points[j].0).hypot(points[i].1 - points[j].1);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
            let (_, j) = best.unwrap();
            taken[j] = true;
            edges.push((i, j));
        }
    }
    edges
}

/// Star-shaped blob mask with a smooth random radius.
pub fn random_blob(rng: &mut SeededRng, size: usize) -> Mask {
    let s = size as f64;
    let base = rng.uniform_range(0.15, 0.3) * s;
    let harmonics: Vec<(f64, f64, f64)> = (2..6)
        .map(|h| (h as f64, rng.uniform_range(0.0, 0.12) * base, rng.uniform_range(0.0, 6.283)))
        .collect();
    let center = (s / 2.0 + rng.uniform_range(-5.0, 5.0), s / 2.0 + rng.uniform_range(-5.0, 5.0));
    let mut m = Grid::filled(size, size, false);
    for r in 0..size {
        for c in 0..size {
            let (dr, dc) = (r as f64 - center.0, c as f64 - center.1);
            let theta = dr.atan2(dc);
            let radius = base + harmonics.iter().map(|(h, a, p)| a * (h * theta + p).cos()).sum::<f64>();
            if dr.hypot(dc) <= radius {
                m.set(r, c, true);
            }
        }
    }
    m
}

/// Arc gaps between consecutive sampled indices, walking the closed contour.
pub fn arc_gaps(contour: &Contour, picks: &[usize]) -> Vec<f64> {
    let pts = &contour.points;
    let n = pts.len();
    let step = |a: usize| {
        let (p, q) = (pts[a], pts[(a + 1) % n]);
        let (dr, dc) = (p.0.abs_diff(q.0), p.1.abs_diff(q.1));
        if dr + dc == 2 { std::f64::consts::SQRT_2 } else { (dr + dc) as f64 }
    };
    let mut gaps = Vec::with_capacity(picks.len());
    for w in 0..picks.len() {
        let (from, to) = (picks[w], picks[(w + 1) % picks.len()]);
        let mut len = 0.0;
        if picks.len() == 1 {
            len = (0..n).map(step).sum();
        } else {
            let mut i = from;
            while i != to {
                len += step(i);
                i = (i + 1) % n;
            }
        }
        gaps.push(len);
    }
    gaps
}

/// Dual objective `Σλ − ½ Σᵢⱼ λᵢλⱼ yᵢyⱼ xᵢ·xⱼ`.
pub fn dual_objective(x: &[Vec<f64>], y: &[f64], lambda: &[f64]) -> f64 {
    let n = x.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum();
            quad += lambda[i] * lambda[j] * y[i] * y[j] * dot;
        }
    }
    lambda.iter().sum::<f64>() - 0.5 * quad
}

/// Exact dual optimum by enumerating every assignment of each λᵢ to
/// {0, C, free}. Free coordinates solve the stationarity system
/// `Q_FF λ_F + b·y_F = 1 − Q_FB λ_B`, `y_F·λ_F = −y_B·λ_B` by least squares;
/// consistent, box-feasible solutions are scored and the best is returned.
pub fn active_set_dual(x: &[Vec<f64>], y: &[f64], c: f64) -> f64 {
    use nalgebra::{DMatrix, DVector};
    let n = x.len();
    let q = |i: usize, j: usize| -> f64 { y[i] * y[j] * x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum::<f64>() };
    let mut best = f64::NEG_INFINITY;
    for code in 0..3usize.pow(n as u32) {
        let mut state = Vec::with_capacity(n);
        let mut k = code;
        for _ in 0..n {
            state.push(k % 3);
            k /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut lambda: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        if !free.is_empty() {
            let f = free.len();
            let mut a = DMatrix::zeros(f + 1, f + 1);
            let mut rhs = DVector::zeros(f + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[(r, s)] = q(i, j);
                }
                a[(r, f)] = y[i];
                a[(f, r)] = y[i];
                rhs[r] = 1.0 - (0..n).filter(|j| state[*j] == 1).map(|j| q(i, j) * c).sum::<f64>();
            }
            rhs[f] = -(0..n).filter(|j| state[*j] == 1).map(|j| y[j] * c).sum::<f64>();
            let svd = a.clone().svd(true, true);
            let Ok(sol) = svd.solve(&rhs, 1e-10) else { continue };
            if (&a * &sol - &rhs).norm() > 1e-8 {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                lambda[i] = sol[r];
            }
        }
        let balance: f64 = lambda.iter().zip(y).map(|(l, yi)| l * yi).sum();
        if balance.abs() > 1e-9 || lambda.iter().any(|l| *l < -1e-9 || *l > c + 1e-9) {
            continue;
        }
        best = best.max(dual_objective(x, y, &lambda));
    }
    best
}

/// Metrics from label lists, written straight from the definitions.
pub struct OracleMetrics {
    pub weighted_f1: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub f1: Vec<f64>,
}

pub fn metrics_from_labels(y_true: &[usize], y_pred: &[usize], k: usize) -> OracleMetrics {
    let n = y_true.len() as f64;
    let mut f1 = Vec::new();
    let mut recalls = Vec::new();
    let mut weighted = 0.0;
    for class in 0..k {
        let tp = y_true.iter().zip(y_pred).filter(|(t, p)| **t == class && **p == class).count() as f64;
        let actual = y_true.iter().filter(|t| **t == class).count() as f64;
        let predicted = y_pred.iter().filter(|p| **p == class).count() as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if actual > 0.0 { tp / actual } else { 0.0 };
        let f = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        f1.push(f);
        recalls.push(recall);
        weighted += actual / n * f;
    }
    let correct = y_true.iter().zip(y_pred).filter(|(t, p)| t == p).count() as f64;
    OracleMetrics {
        weighted_f1: weighted,
        macro_f1: f1.iter().sum::<f64>() / k as f64,
        accuracy: correct / n,
        balanced_accuracy: recalls.iter().sum::<f64>() / k as f64,
        f1,
    }
}

/// Expands a confusion matrix back into label lists.
pub fn labels_from_counts(cm: &ConfusionMatrix) -> (Vec<usize>, Vec<usize>) {
    let mut t = Vec::new();
    let mut p = Vec::new();
    for (i, row) in cm.counts.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            for _ in 0..count {
                t.push(i);
                p.push(j);
            }
        }
    }
    (t, p)
}

pub fn random_confusion(rng: &mut SeededRng) -> ConfusionMatrix {
    let k = 2 + rng.below(6);
    loop {
        let counts: Vec<Vec<u64>> = (0..k)
            .map(|_| (0..k).map(|_| if rng.bernoulli(0.3) { 0 } else { rng.below(20) as u64 }).collect())
            .collect();
        if counts.iter().flatten().any(|c| *c > 0) {
            return ConfusionMatrix::from_counts(counts).unwrap();
        }
    }
}
