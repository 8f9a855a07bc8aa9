use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregator::kernel::{AttentionKernel, AttentionTape, HeadInput};
use crate::error::{Error, Result};
use crate::numkit::{softmax_in_place, Matrix, SeededRng};

pub const MODEL_MAGIC: &[u8; 8] = b"FECTAGG1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatorDims {
    /// Token dimension `d`.
    pub input_dim: usize,
    /// Pooled dimension `D`.
    pub pooled_dim: usize,
    pub heads: usize,
    pub classes: usize,
}

impl AggregatorDims {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.pooled_dim == 0 || self.heads == 0 {
            return Err(Error::Invalid("aggregator dims must be positive".into()));
        }
        if self.pooled_dim % self.heads != 0 {
            return Err(Error::Invalid(format!(
                "pooled dim {} is not divisible by {} heads",
                self.pooled_dim, self.heads
            )));
        }
        if self.classes < 2 {
            return Err(Error::Invalid(format!("need at least 2 classes, got {}", self.classes)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.pooled_dim / self.heads
    }
}

/// Weight initialization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitScheme {
    /// Every weight drawn from N(0, std²).
    Gaussian { std: f64 },
    /// N(0, 1/fan_in) per weight matrix; the pool token uses N(0, 1/D).
    FanIn,
}

/// Parameter tensors, also used to hold gradients and momentum buffers.
///
/// Tokens are rows: `H = X·w_in`, `Q = H·w_q`, logits `= pooled·head_w + head_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub w_in: Matrix,
    pub pool_token: Matrix,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub head_w: Matrix,
    pub head_b: Matrix,
}

pub const TENSOR_NAMES: [&str; 8] = [
    "w_in", "pool_token", "w_q", "w_k", "w_v", "w_o", "head_w", "head_b",
];

impl Params {
    pub fn zeros(dims: &AggregatorDims) -> Self {
        let (d, dd, k) = (dims.input_dim, dims.pooled_dim, dims.classes);
        Self {
            w_in: Matrix::zeros(d, dd),
            pool_token: Matrix::zeros(1, dd),
            w_q: Matrix::zeros(dd, dd),
            w_k: Matrix::zeros(dd, dd),
            w_v: Matrix::zeros(dd, dd),
            w_o: Matrix::zeros(dd, dd),
            head_w: Matrix::zeros(dd, k),
            head_b: Matrix::zeros(1, k),
        }
    }

    pub fn tensors(&self) -> [&Matrix; 8] {
        [
            &self.w_in,
            &self.pool_token,
            &self.w_q,
            &self.w_k,
            &self.w_v,
            &self.w_o,
            &self.head_w,
            &self.head_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 8] {
        [
            &mut self.w_in,
            &mut self.pool_token,
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.w_o,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.as_slice().len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: f64, other: &Params) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (a, b) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
                *a += s * b;
            }
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for t in self.tensors_mut() {
            for v in t.as_mut_slice() {
                *v *= s;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregatorModel {
    pub dims: AggregatorDims,
    pub params: Params,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub pooled: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Intermediate values of one forward pass.
pub struct ForwardCache {
    x: Matrix,
    h: Matrix,
    token_q: Option<Matrix>,
    concat: Matrix,
    tapes: Vec<Box<dyn AttentionTape>>,
    pub output: ForwardOutput,
}

impl AggregatorModel {
    pub fn init(dims: AggregatorDims, scheme: InitScheme, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = SeededRng::new(seed);
        let mut params = Params::zeros(&dims);
        let dd = dims.pooled_dim as f64;
        let stds = match scheme {
            InitScheme::Gaussian { std } => {
                if !(std >= 0.0 && std.is_finite()) {
                    return Err(Error::Invalid(format!("init std {std} must be ≥ 0")));
                }
                [std; 7]
            }
            InitScheme::FanIn => {
                let fan = 1.0 / dd.sqrt();
                [1.0 / (dims.input_dim as f64).sqrt(), fan, fan, fan, fan, fan, fan]
            }
        };
        // head_b stays zero
        for (t, std) in params.tensors_mut().into_iter().zip(stds) {
            for v in t.as_mut_slice() {
                *v = rng.gaussian() * std;
            }
        }
        Ok(Self { dims, params })
    }

    fn check_tokens(&self, tokens: &Matrix) -> Result<()> {
        if tokens.rows() == 0 {
            return Err(Error::Invalid("empty bag".into()));
        }
        if tokens.cols() != self.dims.input_dim {
            return Err(Error::shape(format!(
                "tokens have dim {}, model expects {}",
                tokens.cols(),
                self.dims.input_dim
            )));
        }
        if !tokens.all_finite() {
            return Err(Error::Numerical("bag contains non-finite tokens".into()));
        }
        Ok(())
    }

    pub fn forward(&self, tokens: &Matrix, kernel: &dyn AttentionKernel) -> Result<ForwardOutput> {
        Ok(self.forward_cached(tokens, kernel)?.output)
    }

    /// Pooled output only.
    pub fn pool(&self, tokens: &Matrix, kernel: &dyn AttentionKernel) -> Result<Vec<f64>> {
        Ok(self.forward(tokens, kernel)?.pooled)
    }

    pub fn forward_cached(&self, tokens: &Matrix, kernel: &dyn AttentionKernel) -> Result<ForwardCache> {
        self.check_tokens(tokens)?;
        let p = &self.params;
        let dh = self.dims.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let h = tokens.matmul(&p.w_in)?;
        let q0 = p.pool_token.matmul(&p.w_q)?;
        let k = h.matmul(&p.w_k)?;
        let v = h.matmul(&p.w_v)?;
        let token_q = if kernel.uses_token_queries() {
            Some(h.matmul(&p.w_q)?)
        } else {
            None
        };

        let mut concat = Matrix::zeros(1, self.dims.pooled_dim);
        let mut tapes = Vec::with_capacity(self.dims.heads);
        let zero_tq = Matrix::zeros(h.rows(), dh);
        for head in 0..self.dims.heads {
            let start = head * dh;
            let tq = match &token_q {
                Some(m) => m.column_block(start, dh),
                None => zero_tq.clone(),
            };
            let input = HeadInput {
                queries: &q0.column_block(start, dh),
                token_queries: &tq,
                keys: &k.column_block(start, dh),
                values: &v.column_block(start, dh),
                scale,
            };
            let (out, tape) = kernel.forward(&input)?;
            concat.add_column_block(start, &out);
            tapes.push(tape);
        }

        let mut pooled = concat.matmul(&p.w_o)?;
        pooled.add_assign(&p.pool_token)?;
        let mut logits = pooled.matmul(&p.head_w)?;
        logits.add_assign(&p.head_b)?;
        if !logits.all_finite() {
            return Err(Error::Numerical("aggregator produced non-finite logits".into()));
        }
        Ok(ForwardCache {
            x: tokens.clone(),
            h,
            token_q,
            concat,
            tapes,
            output: ForwardOutput {
                pooled: pooled.into_vec(),
                logits: logits.into_vec(),
            },
        })
    }

    /// Concatenated head outputs with the pool token and every token as
    /// queries, an `(n + 1) × D` matrix. Only the first row feeds the model.
    pub fn attention_outputs(&self, tokens: &Matrix, kernel: &dyn AttentionKernel) -> Result<Matrix> {
        self.check_tokens(tokens)?;
        let p = &self.params;
        let dh = self.dims.head_dim();
        let h = tokens.matmul(&p.w_in)?;
        let token_q = h.matmul(&p.w_q)?;
        let mut rows: Vec<&[f64]> = vec![p.pool_token.as_slice()];
        rows.extend((0..h.rows()).map(|r| h.row(r)));
        let queries = Matrix::from_rows(&rows)?.matmul(&p.w_q)?;
        let k = h.matmul(&p.w_k)?;
        let v = h.matmul(&p.w_v)?;
        let mut out = Matrix::zeros(queries.rows(), self.dims.pooled_dim);
        for head in 0..self.dims.heads {
            let start = head * dh;
            let input = HeadInput {
                queries: &queries.column_block(start, dh),
                token_queries: &token_q.column_block(start, dh),
                keys: &k.column_block(start, dh),
                values: &v.column_block(start, dh),
                scale: 1.0 / (dh as f64).sqrt(),
            };
            out.add_column_block(start, &kernel.forward_only(&input)?);
        }
        Ok(out)
    }

    /// Cross-entropy of one bag and its gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        tokens: &Matrix,
        label: usize,
        kernel: &dyn AttentionKernel,
    ) -> Result<(f64, Params)> {
        let cache = self.forward_cached(tokens, kernel)?;
        let (loss, d_logits) = cross_entropy(&cache.output.logits, label)?;
        Ok((loss, self.backward(&cache, &d_logits)?))
    }

    pub fn loss(&self, tokens: &Matrix, label: usize, kernel: &dyn AttentionKernel) -> Result<f64> {
        Ok(cross_entropy(&self.forward(tokens, kernel)?.logits, label)?.0)
    }

    pub fn backward(&self, cache: &ForwardCache, d_logits: &[f64]) -> Result<Params> {
        let p = &self.params;
        let dh = self.dims.head_dim();
        let mut g = Params::zeros(&self.dims);

        let d_logits = Matrix::row_vector(d_logits);
        let pooled = Matrix::row_vector(&cache.output.pooled);
        g.head_w = pooled.t_matmul(&d_logits)?;
        g.head_b = d_logits.clone();
        let d_pooled = d_logits.matmul_t(&p.head_w)?;

        // pooled = pool_token + concat·w_o
        g.pool_token = d_pooled.clone();
        g.w_o = cache.concat.t_matmul(&d_pooled)?;
        let d_concat = d_pooled.matmul_t(&p.w_o)?;

        let n = cache.h.rows();
        let dd = self.dims.pooled_dim;
        let mut d_q0 = Matrix::zeros(1, dd);
        let mut d_tq = Matrix::zeros(n, dd);
        let mut d_k = Matrix::zeros(n, dd);
        let mut d_v = Matrix::zeros(n, dd);
        for (head, tape) in cache.tapes.iter().enumerate() {
            let start = head * dh;
            let hg = tape.backward(&d_concat.column_block(start, dh))?;
            d_q0.add_column_block(start, &hg.queries);
            d_tq.add_column_block(start, &hg.token_queries);
            d_k.add_column_block(start, &hg.keys);
            d_v.add_column_block(start, &hg.values);
        }

        g.pool_token.add_assign(&d_q0.matmul_t(&p.w_q)?)?;
        g.w_q = p.pool_token.t_matmul(&d_q0)?;
        g.w_k = cache.h.t_matmul(&d_k)?;
        g.w_v = cache.h.t_matmul(&d_v)?;
        let mut d_h = d_k.matmul_t(&p.w_k)?;
        d_h.add_assign(&d_v.matmul_t(&p.w_v)?)?;
        if cache.token_q.is_some() {
            g.w_q.add_assign(&cache.h.t_matmul(&d_tq)?)?;
            d_h.add_assign(&d_tq.matmul_t(&p.w_q)?)?;
        }
        g.w_in = cache.x.t_matmul(&d_h)?;
        Ok(g)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * self.params.len());
        out.extend_from_slice(MODEL_MAGIC);
        for v in [self.dims.input_dim, self.dims.pooled_dim, self.dims.heads, self.dims.classes] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for t in self.params.tensors() {
            for v in t.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let parse = |offset, message: &str| Error::Parse {
            offset,
            message: message.to_string(),
        };
        if bytes.len() < 24 {
            return Err(parse(bytes.len(), "truncated aggregator header"));
        }
        if &bytes[..8] != MODEL_MAGIC {
            return Err(parse(0, "not an aggregator model (bad magic)"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().expect("4 bytes")) as usize;
        let dims = AggregatorDims {
            input_dim: word(0),
            pooled_dim: word(1),
            heads: word(2),
            classes: word(3),
        };
        dims.validate().map_err(|e| parse(8, &e.to_string()))?;
        let mut params = Params::zeros(&dims);
        if bytes.len() != 24 + 8 * params.len() {
            return Err(parse(bytes.len(), "aggregator tensor payload has the wrong length"));
        }
        let mut values = bytes[24..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        for t in params.tensors_mut() {
            for v in t.as_mut_slice() {
                *v = values.next().expect("length checked");
            }
        }
        Ok(Self { dims, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// `(−log softmax(logits)[label], softmax(logits) − onehot(label))`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Invalid(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let mut probs = logits.to_vec();
    softmax_in_place(&mut probs);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let loss = lse - logits[label];
    probs[label] -= 1.0;
    Ok((loss, probs))
}
