use crate::error::{Error, Result};
use crate::numkit::Matrix;

pub const DEFAULT_PINV_ITERS: usize = 6;

/// Intermediate values of one pseudoinverse run, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct PinvTrace {
    /// `Z_0, Z_1, …, Z_iters`.
    pub iterates: Vec<Matrix>,
    /// Scale `‖A‖₁·‖A‖∞` of the initial iterate, zero for the all-zero input.
    pub init_scale: f64,
}

impl PinvTrace {
    pub fn result(&self) -> &Matrix {
        self.iterates.last().expect("trace holds at least Z_0")
    }
}

/// Iterative Moore–Penrose pseudoinverse of a square matrix.
///
/// Runs `Z ← ¼·Z·(13I − AZ·(15I − AZ·(7I − AZ)))` starting from
/// `Z₀ = Aᵀ / (‖A‖₁·‖A‖∞)`. The all-zero matrix maps to the zero matrix.
pub fn pinv_iterative(a: &Matrix, iters: usize) -> Result<Matrix> {
    Ok(pinv_iterative_trace(a, iters)?.iterates.pop().expect("non-empty"))
}

pub fn pinv_iterative_trace(a: &Matrix, iters: usize) -> Result<PinvTrace> {
    if a.rows() != a.cols() {
        return Err(Error::shape(format!(
            "pseudoinverse needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if iters == 0 {
        return Err(Error::Invalid("pseudoinverse needs at least one iteration".into()));
    }
    let n = a.rows();
    let init_scale = a.norm_1() * a.norm_inf();
    if init_scale == 0.0 {
        return Ok(PinvTrace {
            iterates: vec![Matrix::zeros(n, n); iters + 1],
            init_scale,
        });
    }
    let mut z = a.transpose().scale(1.0 / init_scale);
    let mut iterates = Vec::with_capacity(iters + 1);
    iterates.push(z.clone());
    for _ in 0..iters {
        z = newton_step(a, &z)?;
        iterates.push(z.clone());
    }
    Ok(PinvTrace {
        iterates,
        init_scale,
    })
}

fn newton_step(a: &Matrix, z: &Matrix) -> Result<Matrix> {
    let az = a.matmul(z)?;
    let t1 = az.shifted_negation(7.0);
    let t2 = az.matmul(&t1)?.shifted_negation(15.0);
    let t3 = az.matmul(&t2)?.shifted_negation(13.0);
    Ok(z.matmul(&t3)?.scale(0.25))
}

/// Propagates `dL/dZ_final` back through every stored iterate to `dL/dA`.
pub fn pinv_backward(a: &Matrix, trace: &PinvTrace, d_result: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let mut d_a = Matrix::zeros(n, n);
    if trace.init_scale == 0.0 {
        return Ok(d_a);
    }
    let mut d_z = d_result.clone();
    for step in (1..trace.iterates.len()).rev() {
        let z = &trace.iterates[step - 1];
        let p = a.matmul(z)?;
        let t1 = p.shifted_negation(7.0);
        let t2 = p.matmul(&t1)?.shifted_negation(15.0);
        let t3 = p.matmul(&t2)?.shifted_negation(13.0);

        // Z' = ¼ Z T3
        let mut d_prev = d_z.matmul_t(&t3)?.scale(0.25);
        let d_t3 = z.t_matmul(&d_z)?.scale(0.25);
        // T3 = 13I − P T2
        let mut d_p = d_t3.matmul_t(&t2)?.scale(-1.0);
        let d_t2 = p.t_matmul(&d_t3)?.scale(-1.0);
        // T2 = 15I − P T1
        d_p.add_assign(&d_t2.matmul_t(&t1)?.scale(-1.0))?;
        let d_t1 = p.t_matmul(&d_t2)?.scale(-1.0);
        // T1 = 7I − P
        d_p.add_assign(&d_t1.scale(-1.0))?;
        // P = A Z
        d_a.add_assign(&d_p.matmul_t(z)?)?;
        d_prev.add_assign(&a.t_matmul(&d_p)?)?;
        d_z = d_prev;
    }

    // Z₀ = Aᵀ / s, s = ‖A‖₁·‖A‖∞ (subgradient through the maximizing column and row)
    let s = trace.init_scale;
    let z0 = &trace.iterates[0];
    d_a.add_assign(&d_z.transpose().scale(1.0 / s))?;
    let d_s = -crate::numkit::dot(d_z.as_slice(), z0.as_slice()) / s;
    let (col, col_sum) = argmax_abs_col(a);
    let (row, row_sum) = argmax_abs_row(a);
    for i in 0..n {
        d_a[(i, col)] += d_s * row_sum * sign(a[(i, col)]);
        d_a[(row, i)] += d_s * col_sum * sign(a[(row, i)]);
    }
    Ok(d_a)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn argmax_abs_col(a: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for j in 0..a.cols() {
        let s: f64 = (0..a.rows()).map(|i| a[(i, j)].abs()).sum();
        if s > best.1 {
            best = (j, s);
        }
    }
    best
}

fn argmax_abs_row(a: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..a.rows() {
        let s: f64 = a.row(i).iter().map(|v| v.abs()).sum();
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

/// Relative Penrose residuals `(‖AZA − A‖/‖A‖, ‖ZAZ − Z‖/‖Z‖)`.
pub fn penrose_residuals(a: &Matrix, z: &Matrix) -> Result<(f64, f64)> {
    let aza = a.matmul(z)?.matmul(a)?;
    let zaz = z.matmul(a)?.matmul(z)?;
    let r1 = aza.sub(a)?.frobenius_norm() / a.frobenius_norm().max(f64::MIN_POSITIVE);
    let r2 = zaz.sub(z)?.frobenius_norm() / z.frobenius_norm().max(f64::MIN_POSITIVE);
    Ok((r1, r2))
}
