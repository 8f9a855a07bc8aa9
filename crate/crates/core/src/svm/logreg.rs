use crate::error::{Error, Result};
use crate::numkit::{softmax_in_place, Matrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRegParams {
    pub lr: f64,
    pub iterations: usize,
    pub l2: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            lr: 0.5,
            iterations: 500,
            l2: 1e-4,
        }
    }
}

/// Multinomial logistic regression, `softmax(x·W + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticRegression {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LogisticRegression {
    /// Full-batch gradient descent from zero on mean cross-entropy plus
    /// `l2/2 · ‖W‖²`.
    pub fn fit(x: &Matrix, y: &[usize], classes: usize, params: &LogRegParams) -> Result<Self> {
        if x.rows() != y.len() || x.rows() == 0 {
            return Err(Error::shape(format!("{} samples but {} labels", x.rows(), y.len())));
        }
        if classes < 2 || y.iter().any(|l| *l >= classes) {
            return Err(Error::Invalid(format!("labels must lie in 0..{classes} with {classes} ≥ 2")));
        }
        let (n, d) = (x.rows(), x.cols());
        let mut model = Self {
            weights: Matrix::zeros(d, classes),
            bias: vec![0.0; classes],
        };
        for _ in 0..params.iterations {
            let mut gw = model.weights.scale(params.l2);
            let mut gb = vec![0.0; classes];
            for (r, &label) in y.iter().enumerate() {
                let mut p = model.probabilities(x.row(r))?;
                p[label] -= 1.0;
                for (k, pk) in p.iter().enumerate() {
                    gb[k] += pk / n as f64;
                    for (f, xf) in x.row(r).iter().enumerate() {
                        gw[(f, k)] += pk * xf / n as f64;
                    }
                }
            }
            model.weights = model.weights.sub(&gw.scale(params.lr))?;
            for (b, g) in model.bias.iter_mut().zip(&gb) {
                *b -= params.lr * g;
            }
        }
        if !model.weights.all_finite() {
            return Err(Error::Numerical("logistic regression diverged".into()));
        }
        Ok(model)
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.weights.vec_mul(x)?;
        for (zk, bk) in z.iter_mut().zip(&self.bias) {
            *zk += bk;
        }
        softmax_in_place(&mut z);
        Ok(z)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let p = self.probabilities(x)?;
        Ok(p
            .iter()
            .enumerate()
            .fold(0, |best, (k, v)| if *v > p[best] { k } else { best }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_clusters() {
        let x = Matrix::from_rows(&[[-2.0, 0.0], [-1.5, 0.3], [2.0, 0.1], [1.7, -0.2]]).unwrap();
        let y = [0, 0, 1, 1];
        let m = LogisticRegression::fit(&x, &y, 2, &LogRegParams::default()).unwrap();
        for r in 0..4 {
            assert_eq!(m.predict(x.row(r)).unwrap(), y[r]);
        }
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(LogisticRegression::fit(&x, &[0, 2], 2, &LogRegParams::default()).is_err());
    }
}
