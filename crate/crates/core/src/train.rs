//! Masked SGD with momentum and argmax evaluation.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{batches, BatchPlan, Dataset};
use crate::error::{Error, Result};
use crate::nn::{forward, Network};
use crate::pruning::{apply_mask, Mask};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub data_seed: u64,
    /// Log the running loss every this many steps (0 disables).
    pub report_every: usize,
    /// Abort once a batch loss exceeds this multiple of the first batch loss.
    pub divergence_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            momentum: 0.9,
            batch_size: 128,
            epochs: 5,
            data_seed: 0,
            report_every: 0,
            divergence_factor: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean batch loss over the epoch.
    pub train_loss: f64,
    pub test_acc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunCurve {
    pub epochs: Vec<EpochStats>,
}

impl RunCurve {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.test_acc)
    }
}

/// Trains `net` under `mask` in single precision. Pruned positions get a zero
/// gradient before each update and a zero weight after it, so they (and
/// their momentum) stay exactly zero. Test accuracy is recorded per epoch
/// when `test` is given.
pub fn train_masked(
    net: &Network,
    mask: &Mask,
    train: &Dataset,
    test: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<(Network, RunCurve)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut net = apply_mask(net, mask)?;
    let layer_mask: Vec<Option<&[u8]>> = (0..net.params.len())
        .map(|i| mask.layers.iter().find(|m| m.layer == i).map(|m| m.bits.as_slice()))
        .collect();
    let mut velocity: Vec<(Tensor<f32>, Option<Tensor<f32>>)> = net
        .params
        .iter()
        .map(|p| (Tensor::zeros(p.weight.shape()), p.bias.as_ref().map(|b| Tensor::zeros(b.shape()))))
        .collect();
    let (lr, mu) = (config.lr as f32, config.momentum as f32);
    let mut initial_loss: Option<f64> = None;
    let mut curve = RunCurve::default();

    for epoch in 0..config.epochs {
        let plan = BatchPlan {
            batch_size: config.batch_size,
            seed: config.data_seed,
            epoch: epoch as u64,
        };
        let (mut loss_sum, mut steps) = (0.0f64, 0usize);
        for (x, labels) in batches::<f32>(train, plan) {
            let mut tape = Tape::<f32>::new();
            let vars = net.leaves(&mut tape);
            let input = tape.constant(x);
            let logits = forward(&net.arch, &mut tape, &vars, input, true)?;
            let loss_var = tape.softmax_cross_entropy(logits, &labels)?;
            let loss = f64::from(tape.value(loss_var).item());
            let initial = *initial_loss.get_or_insert(loss);
            if !loss.is_finite() || loss > config.divergence_factor * initial {
                return Err(Error::Diverged { epoch, step: steps, loss, initial });
            }
            loss_sum += loss;
            steps += 1;
            if config.report_every > 0 && steps % config.report_every == 0 {
                log::info!("epoch {epoch} step {steps}: loss {:.4}", loss_sum / steps as f64);
            }

            let wrt: Vec<_> = vars.iter().flat_map(|p| std::iter::once(p.weight).chain(p.bias)).collect();
            let mut grads = tape.gradient(loss_var, &wrt)?.into_iter();
            for (li, (param, vel)) in net.params.iter_mut().zip(&mut velocity).enumerate() {
                let mut gw = grads.next().expect("weight gradient");
                if let Some(bits) = layer_mask[li] {
                    mask_in_place(gw.data_mut(), bits);
                }
                sgd_step(param.weight.data_mut(), vel.0.data_mut(), gw.data(), lr, mu);
                if let Some(bits) = layer_mask[li] {
                    mask_in_place(param.weight.data_mut(), bits);
                }
                if let (Some(b), Some(vb)) = (param.bias.as_mut(), vel.1.as_mut()) {
                    let gb = grads.next().expect("bias gradient");
                    sgd_step(b.data_mut(), vb.data_mut(), gb.data(), lr, mu);
                }
            }
        }
        let test_acc = test.map(|t| evaluate(&net, t)).transpose()?;
        let train_loss = loss_sum / steps.max(1) as f64;
        log::info!("epoch {epoch}: train loss {train_loss:.4}, test acc {test_acc:?}");
        curve.epochs.push(EpochStats { epoch, train_loss, test_acc });
    }
    Ok((net, curve))
}

fn mask_in_place(values: &mut [f32], bits: &[u8]) {
    for (v, &b) in values.iter_mut().zip(bits) {
        if b == 0 {
            *v = 0.0;
        }
    }
}

/// `v ← μv + g; w ← w − lr·v`.
fn sgd_step(w: &mut [f32], v: &mut [f32], g: &[f32], lr: f32, mu: f32) {
    for ((w, v), &g) in w.iter_mut().zip(v.iter_mut()).zip(g) {
        *v = mu * *v + g;
        *w -= lr * *v;
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of examples whose argmax logit (double precision) is the label.
pub fn evaluate(net: &Network, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    const CHUNK: usize = 1000;
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(CHUNK) {
        let (x, labels) = dataset.gather::<f64>(chunk);
        let logits = net.logits(&x)?;
        let classes = logits.shape()[1];
        correct += logits
            .data()
            .chunks(classes)
            .zip(&labels)
            .filter(|(row, &y)| argmax(row) == y)
            .count();
    }
    Ok(correct as f64 / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0; 10]), 0);
        assert_eq!(argmax(&[-1.0, -2.0]), 0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
    }
}
