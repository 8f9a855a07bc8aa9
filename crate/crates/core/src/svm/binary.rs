use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{dot, Matrix};

/// Curvature floor for pair updates along a flat direction.
const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Box constraint `C` of the soft-margin problem.
    pub c: f64,
    /// Stopping threshold on the maximal violating pair gap.
    pub tol: f64,
    /// Limit in sweeps; one sweep is `n` pair updates.
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_iter: 10_000,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Invalid(format!("C must be > 0, got {}", self.c)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Invalid(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Invalid("max_iter must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainMeta {
    /// Pair updates performed.
    pub updates: usize,
    pub converged: bool,
    /// Final maximal violating pair gap.
    pub gap: f64,
    pub kkt_violation: f64,
    /// Dual objective after every sweep, then at exit.
    pub dual_trace: Vec<f64>,
}

/// Linear soft-margin SVM, decision `w·x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarySvm {
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
    /// Dual coefficients λ, one per training sample; empty for loaded models.
    pub lambdas: Vec<f64>,
    pub meta: TrainMeta,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.w.len() {
            return Err(Error::shape(format!(
                "sample has dim {}, model expects {}",
                x.len(),
                self.w.len()
            )));
        }
        Ok(dot(&self.w, x) + self.b)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(if self.decision(x)? > 0.0 { 1.0 } else { -1.0 })
    }

    /// `Σ λ_i − ½ ‖Σ λ_i y_i x_i‖²`.
    pub fn dual_objective(&self) -> f64 {
        self.lambdas.iter().sum::<f64>() - 0.5 * dot(&self.w, &self.w)
    }

    /// `½‖w‖² + C Σ max(0, 1 − y_i(w·x_i + b))`.
    pub fn primal_objective(&self, x: &Matrix, y: &[f64]) -> Result<f64> {
        let mut hinge = 0.0;
        for (i, yi) in y.iter().enumerate() {
            hinge += (1.0 - yi * self.decision(x.row(i))?).max(0.0);
        }
        Ok(0.5 * dot(&self.w, &self.w) + self.c * hinge)
    }
}

pub(crate) fn check_binary_labels(y: &[f64]) -> Result<()> {
    if let Some(v) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
        return Err(Error::Invalid(format!("binary labels must be ±1, found {v}")));
    }
    let pos = y.iter().filter(|v| **v > 0.0).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::Invalid("degenerate labels: both classes are required".into()));
    }
    Ok(())
}

fn in_up(y: f64, l: f64, c: f64) -> bool {
    (y > 0.0 && l < c) || (y < 0.0 && l > 0.0)
}

fn in_low(y: f64, l: f64, c: f64) -> bool {
    (y > 0.0 && l > 0.0) || (y < 0.0 && l < c)
}

/// Maximal violating pair `(i, j, gap)` over the gradient `G = Qλ − 1`.
fn select_pair(y: &[f64], lambdas: &[f64], grad: &[f64], c: f64) -> Option<(usize, usize, f64)> {
    let mut up = (usize::MAX, f64::NEG_INFINITY);
    let mut low = (usize::MAX, f64::INFINITY);
    for t in 0..y.len() {
        let v = -y[t] * grad[t];
        if in_up(y[t], lambdas[t], c) && v > up.1 {
            up = (t, v);
        }
        if in_low(y[t], lambdas[t], c) && v < low.1 {
            low = (t, v);
        }
    }
    (up.0 != usize::MAX && low.0 != usize::MAX).then(|| (up.0, low.0, up.1 - low.1))
}

/// Sequential minimal optimization on the linear-kernel dual with
/// maximal-violating-pair selection. Stops once the pair gap drops below
/// `tol` or after `max_iter · n` updates.
pub fn train_binary_svm(x: &Matrix, y: &[f64], params: &SvmParams) -> Result<BinarySvm> {
    params.validate()?;
    let n = x.rows();
    if y.len() != n {
        return Err(Error::shape(format!("{n} samples but {} labels", y.len())));
    }
    check_binary_labels(y)?;
    if !x.all_finite() {
        return Err(Error::Numerical("training data contains non-finite values".into()));
    }
    let c = params.c;
    let gram = x.matmul_t(x)?;
    let q = |i: usize, j: usize| y[i] * y[j] * gram[(i, j)];

    let mut lambdas = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut meta = TrainMeta::default();
    let dual = |lambdas: &[f64], grad: &[f64]| {
        0.5 * lambdas.iter().sum::<f64>() - 0.5 * dot(lambdas, grad)
    };
    let max_updates = params.max_iter.saturating_mul(n);

    loop {
        let Some((i, j, gap)) = select_pair(y, &lambdas, &grad, c) else {
            meta.gap = 0.0;
            meta.converged = true;
            break;
        };
        meta.gap = gap;
        if gap < params.tol {
            meta.converged = true;
            break;
        }
        if meta.updates >= max_updates {
            log::warn!("SMO stopped after {} updates with gap {gap:.3e}", meta.updates);
            break;
        }
        let (old_i, old_j) = (lambdas[i], lambdas[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        let (new_i, new_j) = (ai.clamp(0.0, c), aj.clamp(0.0, c));
        lambdas[i] = new_i;
        lambdas[j] = new_j;
        let (di, dj) = (new_i - old_i, new_j - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
        meta.updates += 1;
        if meta.updates % n == 0 {
            meta.dual_trace.push(dual(&lambdas, &grad));
        }
    }
    meta.dual_trace.push(dual(&lambdas, &grad));

    let mut w = vec![0.0; x.cols()];
    for (i, l) in lambdas.iter().enumerate() {
        if *l != 0.0 {
            for (wk, xk) in w.iter_mut().zip(x.row(i)) {
                *wk += l * y[i] * xk;
            }
        }
    }
    let b = bias(y, &lambdas, &grad, c);
    let mut model = BinarySvm {
        w,
        b,
        c,
        lambdas,
        meta,
    };
    model.meta.kkt_violation = kkt_violation(&model, x, y)?;
    Ok(model)
}

/// Mean of `−y_t G_t` over free coefficients, else the midpoint of the
/// feasible interval.
fn bias(y: &[f64], lambdas: &[f64], grad: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if lambdas[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lambdas[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let r = if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    };
    -r
}

/// Largest dual KKT residual on margins `m_i = y_i(w·x_i + b)`:
/// `max(0, 1 − m)` at λ = 0, `|m − 1|` for free λ, `max(0, m − 1)` at λ = C.
pub fn kkt_violation(model: &BinarySvm, x: &Matrix, y: &[f64]) -> Result<f64> {
    if x.rows() != y.len() || model.lambdas.len() != y.len() {
        return Err(Error::shape(format!(
            "model has {} coefficients, data has {} rows and {} labels",
            model.lambdas.len(),
            x.rows(),
            y.len()
        )));
    }
    let mut worst: f64 = 0.0;
    for (i, (&l, &yi)) in model.lambdas.iter().zip(y).enumerate() {
        let m = yi * model.decision(x.row(i))?;
        let r = if l <= 0.0 {
            (1.0 - m).max(0.0)
        } else if l >= model.c {
            (m - 1.0).max(0.0)
        } else {
            (m - 1.0).abs()
        };
        worst = worst.max(r);
    }
    Ok(worst)
}
