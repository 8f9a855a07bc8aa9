use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numkit::Matrix;
use crate::svm::binary::{train_binary_svm, BinarySvm, SvmParams, TrainMeta};

pub const SVM_MAGIC: &[u8; 8] = b"FECTSVM1";

/// Binary model for classes `(i, j)`, `i < j`; class `i` is the positive side.
#[derive(Clone, Debug, PartialEq)]
pub struct PairModel {
    pub i: usize,
    pub j: usize,
    pub svm: BinarySvm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmEnsemble {
    pub classes: usize,
    pub dim: usize,
    /// Pairs in `(0,1), (0,2), …, (K−2,K−1)` order.
    pub pairs: Vec<PairModel>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub votes: Vec<usize>,
    /// Per-class sum of signed decision values (`+f` for `i`, `−f` for `j`).
    pub scores: Vec<f64>,
}

pub fn class_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect()
}

/// One-vs-one: one binary SVM per class pair, each on its two classes only.
pub fn train_multiclass(x: &Matrix, y: &[usize], params: &SvmParams) -> Result<SvmEnsemble> {
    if x.rows() != y.len() {
        return Err(Error::shape(format!("{} samples but {} labels", x.rows(), y.len())));
    }
    let k = y.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::Invalid(format!("need at least 2 classes, got {k}")));
    }
    let mut counts = vec![0usize; k];
    for &l in y {
        counts[l] += 1;
    }
    if let Some(empty) = counts.iter().position(|c| *c == 0) {
        return Err(Error::Invalid(format!("class {empty} has no training samples")));
    }
    let pairs = class_pairs(k)
        .into_par_iter()
        .map(|(i, j)| {
            let idx: Vec<usize> = (0..y.len()).filter(|&t| y[t] == i || y[t] == j).collect();
            let rows: Vec<&[f64]> = idx.iter().map(|&t| x.row(t)).collect();
            let labels: Vec<f64> = idx.iter().map(|&t| if y[t] == i { 1.0 } else { -1.0 }).collect();
            let svm = train_binary_svm(&Matrix::from_rows(&rows)?, &labels, params)?;
            Ok(PairModel { i, j, svm })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SvmEnsemble {
        classes: k,
        dim: x.cols(),
        pairs,
    })
}

impl SvmEnsemble {
    /// Majority vote; ties go to the largest summed decision value, then to
    /// the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.dim {
            return Err(Error::shape(format!("sample has dim {}, ensemble expects {}", x.len(), self.dim)));
        }
        let mut votes = vec![0usize; self.classes];
        let mut scores = vec![0.0; self.classes];
        for p in &self.pairs {
            let f = p.svm.decision(x)?;
            if f > 0.0 {
                votes[p.i] += 1;
            } else {
                votes[p.j] += 1;
            }
            scores[p.i] += f;
            scores[p.j] -= f;
        }
        let mut label = 0;
        for c in 1..self.classes {
            let better = votes[c] > votes[label] || (votes[c] == votes[label] && scores[c] > scores[label]);
            if better {
                label = c;
            }
        }
        Ok(Prediction { label, votes, scores })
    }

    pub fn predict_labels(&self, x: &Matrix) -> Result<Vec<usize>> {
        (0..x.rows()).map(|r| Ok(self.predict(x.row(r))?.label)).collect()
    }

    /// `FECTSVM1`, `K: u32`, then per pair `i, j, dim: u32`, `w: f64 × dim`,
    /// `b: f64`, `C: f64`, little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SVM_MAGIC);
        out.extend_from_slice(&(self.classes as u32).to_le_bytes());
        for p in &self.pairs {
            for v in [p.i, p.j, p.svm.w.len()] {
                out.extend_from_slice(&(v as u32).to_le_bytes());
            }
            for v in p.svm.w.iter().chain([&p.svm.b, &p.svm.c]) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != SVM_MAGIC {
            return Err(Error::Parse {
                offset: 0,
                message: "not an SVM model (bad magic)".into(),
            });
        }
        let classes = r.u32()? as usize;
        if classes < 2 {
            return Err(r.error(format!("class count {classes} < 2")));
        }
        let mut pairs = Vec::new();
        let mut dim = None;
        for (ei, ej) in class_pairs(classes) {
            let (i, j, d) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
            if (i, j) != (ei, ej) {
                return Err(r.error(format!("expected pair ({ei}, {ej}), found ({i}, {j})")));
            }
            if *dim.get_or_insert(d) != d {
                return Err(r.error("pair models disagree in dimension".into()));
            }
            let w = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let b = r.f64()?;
            let c = r.f64()?;
            pairs.push(PairModel {
                i,
                j,
                svm: BinarySvm {
                    w,
                    b,
                    c,
                    lambdas: Vec::new(),
                    meta: TrainMeta::default(),
                },
            });
        }
        if r.pos != bytes.len() {
            return Err(r.error("trailing bytes after the last pair".into()));
        }
        Ok(Self {
            classes,
            dim: dim.unwrap_or(0),
            pairs,
        })
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

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn error(&self, message: String) -> Error {
        Error::Parse {
            offset: self.pos,
            message,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(self.error("unexpected end of SVM model".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
