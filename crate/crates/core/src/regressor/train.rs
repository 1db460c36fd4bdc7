use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ModelError, RegressorModel};
use crate::autodiff::{Graph, Optimizer, OptimizerKind, Tensor};
use crate::rng;
use crate::synth::render_edit;
use crate::world::{DatasetManifest, SampleRecord, Split};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Cosine-anneal the step size to `final_lr_fraction` of its initial value.
    pub final_lr_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            optimizer: OptimizerKind::adam(3e-3),
            final_lr_fraction: 0.05,
            seed: 1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.optimizer.lr() > 0.0) {
            return Err(ModelError::Config("epochs, batch size and step size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(ModelError::Config("final_lr_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub train_rmse: f64,
    pub val_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotError {
    pub lot_id: String,
    /// Mean of `prediction - label` over the lot's samples in the split.
    pub mean_error: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub per_lot: Vec<LotError>,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RegressorModel,
    pub history: Vec<EpochMetrics>,
}

/// Renders each sample once at `resolution`. Rendering is independent per
/// sample and collected in manifest order.
pub fn render_samples(samples: &[&SampleRecord], resolution: usize) -> Result<Vec<Tensor>, ModelError> {
    samples
        .par_iter()
        .map(|s| Ok(render_edit(s.seed, &s.attrs, resolution)?.to_tensor()))
        .collect()
}

fn predict_tensor(model: &RegressorModel, image: &Tensor) -> Result<f64, ModelError> {
    let mut g = Graph::new();
    let p = model.bind(&mut g, false);
    let x = g.constant(image.clone());
    let y = model.forward(&mut g, x, &p)?;
    Ok(model.denormalize(g.value(y).item()))
}

fn rmse_on(model: &RegressorModel, images: &[Tensor], labels: &[f64]) -> Result<f64, ModelError> {
    let preds: Vec<f64> = images
        .par_iter()
        .map(|img| predict_tensor(model, img))
        .collect::<Result<_, _>>()?;
    let sq: f64 = preds.iter().zip(labels).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok((sq / labels.len() as f64).sqrt())
}

/// Loss and parameter gradients for one sample.
fn sample_gradient(model: &RegressorModel, image: &Tensor, target: f64) -> Result<(f64, Vec<Tensor>), ModelError> {
    let mut g = Graph::new();
    let params = model.bind(&mut g, true);
    let x = g.constant(image.clone());
    let y = model.forward(&mut g, x, &params)?;
    let loss = g.mse(y, Tensor::scalar(target))?;
    let mut grads = g.backward(loss)?;
    let grads = params
        .0
        .iter()
        .map(|&id| grads.take(id).expect("trainable leaf"))
        .collect();
    Ok((g.value(loss).item(), grads))
}

/// Minimizes the MSE of normalized labels over the training split.
///
/// Labels are normalized over the full manifest's label range. Batches follow
/// a seeded permutation per epoch; per-sample gradients may be computed in
/// parallel but are summed in batch order, so results do not depend on the
/// thread count. If a batch loss turns non-finite, training stops with
/// [`ModelError::Diverged`] carrying the model from the last completed epoch.
pub fn train(model: &RegressorModel, manifest: &DatasetManifest, cfg: &TrainConfig) -> Result<TrainOutcome, ModelError> {
    cfg.validate()?;
    let train_set: Vec<&SampleRecord> = manifest.split(Split::Train).collect();
    let val_set: Vec<&SampleRecord> = manifest.split(Split::Val).collect();
    if train_set.is_empty() {
        return Err(ModelError::EmptySplit(Split::Train));
    }
    let mut model = model.clone();
    model.set_label_range(manifest.label_range().expect("non-empty"))?;

    let res = model.resolution();
    let train_images = render_samples(&train_set, res)?;
    let val_images = render_samples(&val_set, res)?;
    let train_labels: Vec<f64> = train_set.iter().map(|s| s.label).collect();
    let val_labels: Vec<f64> = val_set.iter().map(|s| s.label).collect();
    let train_targets: Vec<f64> = train_labels.iter().map(|&y| model.normalize(y)).collect();

    let metrics = |m: &RegressorModel, epoch: usize| -> Result<EpochMetrics, ModelError> {
        Ok(EpochMetrics {
            epoch,
            train_rmse: rmse_on(m, &train_images, &train_labels)?,
            val_rmse: if val_images.is_empty() {
                f64::NAN
            } else {
                rmse_on(m, &val_images, &val_labels)?
            },
        })
    };

    let mut history = vec![metrics(&model, 0)?];
    let mut optimizer = Optimizer::new(cfg.optimizer)?;
    let base_lr = cfg.optimizer.lr();
    let names_owned = model.param_names();
    let names: Vec<&str> = names_owned.iter().map(String::as_str).collect();
    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total_steps = (cfg.epochs * steps_per_epoch) as f64;
    let mut last_good = model.clone();

    for epoch in 1..=cfg.epochs {
        let order = rng::permutation(rng::derive_key(cfg.seed, &[epoch as u64]), train_set.len());
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            let step = ((epoch - 1) * steps_per_epoch + bi) as f64;
            let cosine = 0.5 * (1.0 + (std::f64::consts::PI * step / total_steps).cos());
            optimizer.set_lr(base_lr * (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * cosine));

            let per_sample: Vec<(f64, Vec<Tensor>)> = batch
                .par_iter()
                .map(|&i| sample_gradient(&model, &train_images[i], train_targets[i]))
                .collect::<Result<_, _>>()?;
            let mut loss = 0.0;
            let mut grads: Vec<Tensor> = model.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
            for (l, g) in &per_sample {
                loss += l;
                for (acc, gi) in grads.iter_mut().zip(g) {
                    for (a, v) in acc.data_mut().iter_mut().zip(gi.data()) {
                        *a += v;
                    }
                }
            }
            let inv = 1.0 / batch.len() as f64;
            if !(loss * inv).is_finite() {
                return Err(ModelError::Diverged {
                    epoch,
                    last_good: Box::new(last_good),
                });
            }
            for g in &mut grads {
                for v in g.data_mut() {
                    *v *= inv;
                }
            }
            if let Err(e) = optimizer.step(model.params_mut(), &grads, &names) {
                return Err(ModelError::DivergedWith {
                    epoch,
                    source: e,
                    last_good: Box::new(last_good),
                });
            }
        }
        let m = metrics(&model, epoch)?;
        if !m.train_rmse.is_finite() {
            return Err(ModelError::Diverged {
                epoch,
                last_good: Box::new(last_good),
            });
        }
        history.push(m);
        last_good = model.clone();
    }
    Ok(TrainOutcome { model, history })
}

/// Metrics of arbitrary per-sample predictions over a split.
pub fn evaluate_with<F>(manifest: &DatasetManifest, split: Split, predict: F) -> Result<EvalMetrics, ModelError>
where
    F: Fn(&SampleRecord) -> Result<f64, ModelError> + Sync,
{
    let samples: Vec<&SampleRecord> = manifest.split(split).collect();
    if samples.is_empty() {
        return Err(ModelError::EmptySplit(split));
    }
    let preds: Vec<f64> = samples.par_iter().map(|s| predict(s)).collect::<Result<_, _>>()?;
    let n = samples.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut per_lot: std::collections::BTreeMap<&str, (f64, usize)> = Default::default();
    for (s, p) in samples.iter().zip(&preds) {
        let e = p - s.label;
        sq += e * e;
        abs += e.abs();
        let entry = per_lot.entry(s.lot_id.as_str()).or_default();
        entry.0 += e;
        entry.1 += 1;
    }
    Ok(EvalMetrics {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        per_lot: per_lot
            .into_iter()
            .map(|(id, (sum, count))| LotError {
                lot_id: id.to_string(),
                mean_error: sum / count as f64,
                samples: count,
            })
            .collect(),
    })
}

/// Metrics of `model` over a split, in stress units.
pub fn evaluate(model: &RegressorModel, manifest: &DatasetManifest, split: Split) -> Result<EvalMetrics, ModelError> {
    evaluate_with(manifest, split, |s| {
        model.predict(&render_edit(s.seed, &s.attrs, model.resolution())?)
    })
}
