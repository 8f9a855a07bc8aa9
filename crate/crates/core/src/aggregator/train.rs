use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregator::kernel::AttentionKernel;
use crate::aggregator::model::{AggregatorDims, AggregatorModel, InitScheme, Params};
use crate::error::{Error, Result};
use crate::numkit::{Matrix, SeededRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    /// The learning rate halves every `decay_every` epochs.
    pub decay_every: usize,
    pub seed: u64,
    pub init: InitScheme,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            lr0: 0.001,
            momentum: 0.9,
            decay_every: 7,
            seed: 17,
            init: InitScheme::FanIn,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Invalid(format!("lr0 must be > 0, got {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Invalid(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 || self.decay_every == 0 {
            return Err(Error::Invalid("batch_size and decay_every must be ≥ 1".into()));
        }
        Ok(())
    }

    /// `lr0 · 0.5^⌊epoch / decay_every⌋`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let halvings = (epoch / self.decay_every).min(i32::MAX as usize) as i32;
        self.lr0 * 0.5f64.powi(halvings)
    }
}

/// One labeled bag of tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    pub tokens: Matrix,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-bag loss over the epoch's forward passes.
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainTrace {
    /// Mean loss of the initialized model over all bags.
    pub initial_loss: f64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainTrace {
    /// CSV with header `epoch,lr,loss`; the first row is the initial loss.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,loss\n");
        let _ = writeln!(out, "init,,{}", self.initial_loss);
        for r in &self.epochs {
            let _ = writeln!(out, "{},{},{}", r.epoch, r.lr, r.loss);
        }
        out
    }
}

/// Mean loss and gradient over a batch; per-bag terms run in parallel and
/// are summed in index order.
pub fn batch_loss_and_grad(
    model: &AggregatorModel,
    bags: &[&Bag],
    kernel: &dyn AttentionKernel,
) -> Result<(f64, Params)> {
    if bags.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    let parts: Vec<(f64, Params)> = bags
        .par_iter()
        .map(|b| model.loss_and_grad(&b.tokens, b.label, kernel))
        .collect::<Result<_>>()?;
    let inv = 1.0 / bags.len() as f64;
    let mut grad = Params::zeros(&model.dims);
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        grad.axpy(inv, g);
    }
    Ok((loss * inv, grad))
}

pub fn mean_loss(model: &AggregatorModel, bags: &[Bag], kernel: &dyn AttentionKernel) -> Result<f64> {
    let losses: Vec<f64> = bags
        .par_iter()
        .map(|b| model.loss(&b.tokens, b.label, kernel))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

fn infer_dims(bags: &[Bag], pooled_dim: usize, heads: usize) -> Result<AggregatorDims> {
    let first = bags.first().ok_or_else(|| Error::Invalid("no training bags".into()))?;
    let input_dim = first.tokens.cols();
    for (i, b) in bags.iter().enumerate() {
        if b.tokens.rows() == 0 {
            return Err(Error::Invalid(format!("bag {i} is empty")));
        }
        if b.tokens.cols() != input_dim {
            return Err(Error::shape(format!("bag {i} has token dim {}", b.tokens.cols())));
        }
    }
    let classes = bags.iter().map(|b| b.label).max().unwrap_or(0) + 1;
    let dims = AggregatorDims {
        input_dim,
        pooled_dim,
        heads,
        classes,
    };
    dims.validate()?;
    Ok(dims)
}

/// Mini-batch SGD with momentum (`v ← μv + g; θ ← θ − lr·v`) on mean
/// cross-entropy. Bags are reshuffled every epoch from the config seed.
pub fn train_aggregator(
    bags: &[Bag],
    pooled_dim: usize,
    heads: usize,
    config: &TrainConfig,
    kernel: &dyn AttentionKernel,
) -> Result<(AggregatorModel, TrainTrace)> {
    config.validate()?;
    let dims = infer_dims(bags, pooled_dim, heads)?;
    let mut model = AggregatorModel::init(dims, config.init, config.seed)?;
    let initial_loss = mean_loss(&model, bags, kernel)?;
    let mut velocity = Params::zeros(&dims);
    let mut records = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        let order = SeededRng::derived(config.seed, epoch as u64 + 1).permutation(bags.len());
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Bag> = chunk.iter().map(|&i| &bags[i]).collect();
            let (loss, grad) = batch_loss_and_grad(&model, &batch, kernel)?;
            epoch_loss += loss * batch.len() as f64;
            velocity.scale_in_place(config.momentum);
            velocity.axpy(1.0, &grad);
            model.params.axpy(-lr, &velocity);
            if !model.params.all_finite() {
                return Err(Error::Numerical(format!("parameters diverged in epoch {epoch}")));
            }
        }
        let loss = epoch_loss / bags.len() as f64;
        log::debug!("aggregator epoch {epoch}: lr {lr:.6} loss {loss:.6}");
        records.push(EpochRecord { epoch, lr, loss });
    }
    Ok((
        model,
        TrainTrace {
            initial_loss,
            epochs: records,
        },
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates: usize,
    /// Worst coordinate as `(tensor index, flat index)`.
    pub worst: (usize, usize),
}

/// Compares the analytic batch gradient with central differences on a
/// seeded sample of at least 200 coordinates (all of them for smaller
/// models), drawn from every tensor. Relative error is
/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(
    model: &AggregatorModel,
    batch: &[Bag],
    eps: f64,
    kernel: &dyn AttentionKernel,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Invalid(format!("eps must be > 0, got {eps}")));
    }
    if batch.is_empty() {
        return Err(Error::Invalid("grad_check needs a nonempty batch".into()));
    }
    let refs: Vec<&Bag> = batch.iter().collect();
    let (_, analytic) = batch_loss_and_grad(model, &refs, kernel)?;
    let coords = sample_coordinates(&model.params, 200, seed);

    let batch_loss = |m: &AggregatorModel| -> Result<f64> {
        let mut total = 0.0;
        for b in batch {
            total += m.loss(&b.tokens, b.label, kernel)?;
        }
        Ok(total / batch.len() as f64)
    };

    let results: Vec<(f64, (usize, usize))> = coords
        .par_iter()
        .map(|&(t, i)| -> Result<(f64, (usize, usize))> {
            let mut probe = model.clone();
            let base = probe.params.tensors()[t].as_slice()[i];
            probe.params.tensors_mut()[t].as_mut_slice()[i] = base + eps;
            let up = batch_loss(&probe)?;
            probe.params.tensors_mut()[t].as_mut_slice()[i] = base - eps;
            let down = batch_loss(&probe)?;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.tensors()[t].as_slice()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            Ok((rel, (t, i)))
        })
        .collect::<Result<_>>()?;
    let (max_relative_error, worst) = results
        .iter()
        .copied()
        .fold((0.0, (0, 0)), |best, r| if r.0 > best.0 { r } else { best });
    Ok(GradCheckReport {
        max_relative_error,
        coordinates: coords.len(),
        worst,
    })
}

/// Coordinates `(tensor, index)`: an equal quota from each tensor, topped up
/// uniformly from the rest until `target` is reached.
fn sample_coordinates(params: &Params, target: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = SeededRng::new(seed);
    let tensors = params.tensors();
    let quota = target.div_ceil(tensors.len());
    let mut chosen = Vec::new();
    let mut rest = Vec::new();
    for (t, m) in tensors.iter().enumerate() {
        let mut idx = rng.permutation(m.as_slice().len());
        let take = quota.min(idx.len());
        rest.extend(idx.split_off(take).into_iter().map(|i| (t, i)));
        chosen.extend(idx.into_iter().map(|i| (t, i)));
    }
    if chosen.len() < target {
        rng.shuffle(&mut rest);
        let missing = (target - chosen.len()).min(rest.len());
        chosen.extend_from_slice(&rest[..missing]);
    }
    chosen.sort_unstable();
    chosen
}
