//! Single-head attention kernels behind a common interface.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numkit::{
    pinv_backward, pinv_iterative_trace, softmax_rows, softmax_rows_backward, Matrix, PinvTrace,
    SeededRng, DEFAULT_PINV_ITERS,
};

/// One head's inputs. `queries` are the rows being pooled; `token_queries`,
/// `keys` and `values` all have one row per token.
pub struct HeadInput<'a> {
    pub queries: &'a Matrix,
    pub token_queries: &'a Matrix,
    pub keys: &'a Matrix,
    pub values: &'a Matrix,
    /// Multiplier applied to every dot product, `1/√d_head`.
    pub scale: f64,
}

#[derive(Clone, Debug)]
pub struct HeadGrads {
    pub queries: Matrix,
    pub token_queries: Matrix,
    pub keys: Matrix,
    pub values: Matrix,
}

/// Saved forward state of one head.
pub trait AttentionTape: Send {
    fn backward(&self, d_out: &Matrix) -> Result<HeadGrads>;
}

pub trait AttentionKernel: Send + Sync {
    fn name(&self) -> &str;

    /// Whether `token_queries` influence the output.
    fn uses_token_queries(&self) -> bool {
        false
    }

    fn forward(&self, input: &HeadInput<'_>) -> Result<(Matrix, Box<dyn AttentionTape>)>;

    fn forward_only(&self, input: &HeadInput<'_>) -> Result<Matrix> {
        Ok(self.forward(input)?.0)
    }
}

fn check_input(input: &HeadInput<'_>) -> Result<()> {
    let n = input.keys.rows();
    if n == 0 {
        return Err(Error::Invalid("empty bag".into()));
    }
    let dh = input.keys.cols();
    let ok = input.values.rows() == n
        && input.token_queries.rows() == n
        && input.queries.cols() == dh
        && input.token_queries.cols() == dh;
    if !ok {
        return Err(Error::shape("attention head inputs disagree in shape"));
    }
    Ok(())
}

/// `softmax(Q Kᵀ · scale) V`.
#[derive(Clone, Debug, Default)]
pub struct ExactKernel;

struct ExactTape {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    probs: Matrix,
    scale: f64,
    n: usize,
}

impl AttentionKernel for ExactKernel {
    fn name(&self) -> &str {
        "exact"
    }

    fn forward(&self, input: &HeadInput<'_>) -> Result<(Matrix, Box<dyn AttentionTape>)> {
        check_input(input)?;
        let probs = softmax_rows(&input.queries.matmul_t(input.keys)?.scale(input.scale))?;
        let out = probs.matmul(input.values)?;
        let tape = ExactTape {
            q: input.queries.clone(),
            k: input.keys.clone(),
            v: input.values.clone(),
            probs,
            scale: input.scale,
            n: input.keys.rows(),
        };
        Ok((out, Box::new(tape)))
    }
}

impl AttentionTape for ExactTape {
    fn backward(&self, d_out: &Matrix) -> Result<HeadGrads> {
        let d_probs = d_out.matmul_t(&self.v)?;
        let values = self.probs.t_matmul(d_out)?;
        let d_scores = softmax_rows_backward(&self.probs, &d_probs).scale(self.scale);
        Ok(HeadGrads {
            queries: d_scores.matmul(&self.k)?,
            token_queries: Matrix::zeros(self.n, self.k.cols()),
            keys: d_scores.t_matmul(&self.q)?,
            values,
        })
    }
}

/// Nyström approximation with `m` landmarks:
/// `softmax(Q K̃ᵀ·s) · pinv(softmax(Q̃ K̃ᵀ·s)) · softmax(Q̃ Kᵀ·s) · V`.
///
/// Landmarks are means of contiguous, near-equal segments of the tokens after
/// a shuffle seeded by `seed` and the bag size. With a single token the
/// approximation is exact.
#[derive(Clone, Debug)]
pub struct NystromKernel {
    pub landmarks: usize,
    pub pinv_iters: usize,
    pub seed: u64,
}

impl Default for NystromKernel {
    fn default() -> Self {
        Self {
            landmarks: 32,
            pinv_iters: DEFAULT_PINV_ITERS,
            seed: 0x4e59_5354,
        }
    }
}

impl NystromKernel {
    /// `m × n` averaging matrix mapping tokens to landmark means.
    pub fn segment_matrix(&self, n: usize) -> Matrix {
        let m = self.landmarks.min(n).max(1);
        let perm = SeededRng::derived(self.seed, n as u64).permutation(n);
        let mut s = Matrix::zeros(m, n);
        for i in 0..m {
            let (lo, hi) = (i * n / m, (i + 1) * n / m);
            let w = 1.0 / (hi - lo) as f64;
            for &t in &perm[lo..hi] {
                s[(i, t)] = w;
            }
        }
        s
    }
}

struct NystromTape {
    seg: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    q_land: Matrix,
    k_land: Matrix,
    f: Matrix,
    a: Matrix,
    b: Matrix,
    pinv: PinvTrace,
    bv: Matrix,
    y: Matrix,
    scale: f64,
}

impl AttentionKernel for NystromKernel {
    fn name(&self) -> &str {
        "nystrom"
    }

    fn uses_token_queries(&self) -> bool {
        true
    }

    fn forward(&self, input: &HeadInput<'_>) -> Result<(Matrix, Box<dyn AttentionTape>)> {
        check_input(input)?;
        if self.landmarks == 0 {
            return Err(Error::Invalid("landmark count must be ≥ 1".into()));
        }
        let s = input.scale;
        let seg = self.segment_matrix(input.keys.rows());
        let q_land = seg.matmul(input.token_queries)?;
        let k_land = seg.matmul(input.keys)?;
        let f = softmax_rows(&input.queries.matmul_t(&k_land)?.scale(s))?;
        let a = softmax_rows(&q_land.matmul_t(&k_land)?.scale(s))?;
        let b = softmax_rows(&q_land.matmul_t(input.keys)?.scale(s))?;
        let pinv = pinv_iterative_trace(&a, self.pinv_iters)?;
        let bv = b.matmul(input.values)?;
        let y = pinv.result().matmul(&bv)?;
        let out = f.matmul(&y)?;
        let tape = NystromTape {
            seg,
            q: input.queries.clone(),
            k: input.keys.clone(),
            v: input.values.clone(),
            q_land,
            k_land,
            f,
            a,
            b,
            pinv,
            bv,
            y,
            scale: s,
        };
        Ok((out, Box::new(tape)))
    }
}

impl AttentionTape for NystromTape {
    fn backward(&self, d_out: &Matrix) -> Result<HeadGrads> {
        let s = self.scale;
        let z = self.pinv.result();
        // out = F Y, Y = Z (B V)
        let d_f = d_out.matmul_t(&self.y)?;
        let d_y = self.f.t_matmul(d_out)?;
        let d_z = d_y.matmul_t(&self.bv)?;
        let d_bv = z.t_matmul(&d_y)?;
        let d_b = d_bv.matmul_t(&self.v)?;
        let d_v = self.b.t_matmul(&d_bv)?;
        let d_a = pinv_backward(&self.a, &self.pinv, &d_z)?;

        let g_f = softmax_rows_backward(&self.f, &d_f).scale(s);
        let g_a = softmax_rows_backward(&self.a, &d_a).scale(s);
        let g_b = softmax_rows_backward(&self.b, &d_b).scale(s);

        let d_q = g_f.matmul(&self.k_land)?;
        let mut d_k_land = g_f.t_matmul(&self.q)?;
        d_k_land.add_assign(&g_a.t_matmul(&self.q_land)?)?;
        let mut d_q_land = g_a.matmul(&self.k_land)?;
        d_q_land.add_assign(&g_b.matmul(&self.k)?)?;
        let mut d_k = g_b.t_matmul(&self.q_land)?;
        d_k.add_assign(&self.seg.t_matmul(&d_k_land)?)?;

        Ok(HeadGrads {
            queries: d_q,
            token_queries: self.seg.t_matmul(&d_q_land)?,
            keys: d_k,
            values: d_v,
        })
    }
}

/// Options consumed by kernel constructors; each kernel reads what it needs.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelOptions {
    pub landmarks: usize,
    pub pinv_iters: usize,
    pub seed: u64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        let n = NystromKernel::default();
        Self {
            landmarks: n.landmarks,
            pinv_iters: n.pinv_iters,
            seed: n.seed,
        }
    }
}

type KernelFactory = Box<dyn Fn(&KernelOptions) -> Box<dyn AttentionKernel> + Send + Sync>;

/// Attention kernels by name.
pub struct KernelRegistry {
    factories: BTreeMap<String, KernelFactory>,
}

impl Default for KernelRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("exact", |_| Box::new(ExactKernel));
        r.register("nystrom", |o| {
            Box::new(NystromKernel {
                landmarks: o.landmarks,
                pinv_iters: o.pinv_iters,
                seed: o.seed,
            })
        });
        r
    }
}

impl KernelRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&KernelOptions) -> Box<dyn AttentionKernel> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, name: &str, options: &KernelOptions) -> Result<Box<dyn AttentionKernel>> {
        let factory = self.factories.get(name).ok_or_else(|| Error::UnknownName {
            kind: "attention kernel",
            name: name.to_string(),
            available: self.names().join(", "),
        })?;
        Ok(factory(options))
    }
}
