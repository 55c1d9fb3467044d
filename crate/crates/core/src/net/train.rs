use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::boxes::{assign_positive, Prediction};
use super::config::TrainConfig;
use super::model::Network;
use crate::error::{Error, Result};
use crate::synthground::{hflip_augment, GroundingSample, Vocab, IMAGE_SIZE};
use crate::tensor::{cosine_lr, Adam, AdamConfig, Graph, ParamSet, Scalar, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    pub pr50: f64,
    pub pr75: f64,
    pub pr50_critical: f64,
    pub samples: usize,
    pub critical_samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochReport {
    /// One-based.
    pub epoch: usize,
    /// Mean training loss over the epoch.
    pub loss: f64,
    pub metrics: Option<Metrics>,
}

/// Scalar training loss of one sample.
pub fn sample_loss<T: Scalar>(
    net: &Network,
    g: &mut Graph<T>,
    p: &crate::tensor::Bound,
    sample: &GroundingSample,
    beta: f64,
) -> Result<Var> {
    let ids = Vocab::default().encode_ids(&sample.expression)?;
    let positive = assign_positive(&net.config.anchors, &net.config.scales, IMAGE_SIZE, &sample.target)?;
    let target = net.regression_target(&sample.target, positive);
    let image = g.constant(sample.image.cast::<T>());
    let fwd = net.forward(g, p, image, &ids, false)?;
    net.loss(g, &fwd.outputs, positive, target, beta)
}

pub fn predict_sample<T: Scalar>(net: &Network, params: &ParamSet<T>, sample: &GroundingSample) -> Result<Prediction> {
    let ids = Vocab::default().encode_ids(&sample.expression)?;
    let mut g = Graph::new();
    let p = params.bind_frozen(&mut g);
    let image = g.constant(sample.image.cast::<T>());
    let fwd = net.forward(&mut g, &p, image, &ids, false)?;
    let outs: Vec<_> = fwd.outputs.iter().map(|&o| g.value(o)).collect();
    net.predict(&outs)
}

/// Precision at IoU thresholds 0.5 and 0.75, plus 0.5 on the relation-critical subset.
pub fn score_predictions(preds: &[Prediction], data: &[GroundingSample]) -> Metrics {
    let mut m = Metrics { samples: data.len(), ..Metrics::default() };
    let (mut hit50, mut hit75, mut hit_crit) = (0usize, 0usize, 0usize);
    for (p, s) in preds.iter().zip(data) {
        let iou = p.bbox.iou(&s.target);
        hit50 += usize::from(iou > 0.5);
        hit75 += usize::from(iou > 0.75);
        if s.relation_critical {
            m.critical_samples += 1;
            hit_crit += usize::from(iou > 0.5);
        }
    }
    let frac = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    m.pr50 = frac(hit50, m.samples);
    m.pr75 = frac(hit75, m.samples);
    m.pr50_critical = frac(hit_crit, m.critical_samples);
    m
}

/// Sharded across threads; parameters are read-only.
pub fn evaluate<T: Scalar>(net: &Network, params: &ParamSet<T>, data: &[GroundingSample]) -> Result<Metrics> {
    let preds = data
        .par_iter()
        .map(|s| predict_sample(net, params, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(score_predictions(&preds, data))
}

/// Adam with cosine-annealed learning rate over `cfg.epochs`; one sample per
/// graph, gradients averaged over each mini-batch. `report` sees every epoch.
pub fn train(
    net: &Network,
    params: &mut ParamSet<f32>,
    train_set: &[GroundingSample],
    test_set: &[GroundingSample],
    cfg: &TrainConfig,
    seed: u64,
    mut report: impl FnMut(&EpochReport),
) -> Result<Vec<EpochReport>> {
    if train_set.is_empty() || cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Contract("training needs samples, epochs and a positive batch size".into()));
    }
    let mut adam = Adam::new(
        params,
        AdamConfig {
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut reports = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc: Vec<Vec<f32>> = params.iter().map(|(_, _, t)| vec![0.0; t.numel()]).collect();
            for &i in batch {
                let flipped;
                let sample = if rng.random_bool(cfg.flip_prob) {
                    flipped = hflip_augment(&train_set[i]);
                    &flipped
                } else {
                    &train_set[i]
                };
                let mut g = Graph::new();
                let p = params.bind(&mut g);
                let loss = sample_loss(net, &mut g, &p, sample, cfg.beta)?;
                loss_sum += f64::from(g.data(loss)[0]);
                g.backward(loss)?;
                for (a, gr) in acc.iter_mut().zip(params.grads(&g, &p)) {
                    for (x, y) in a.iter_mut().zip(gr) {
                        *x += y;
                    }
                }
            }
            let inv = 1.0 / batch.len() as f32;
            for a in &mut acc {
                a.iter_mut().for_each(|x| *x *= inv);
            }
            let lr = cosine_lr(cfg.lr, epoch * steps_per_epoch + b, total_steps);
            adam.step(params, &acc, lr);
        }
        let last = epoch + 1 == cfg.epochs;
        let metrics = if !test_set.is_empty() && (last || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0)) {
            Some(evaluate(net, params, test_set)?)
        } else {
            None
        };
        let r = EpochReport {
            epoch: epoch + 1,
            loss: loss_sum / train_set.len() as f64,
            metrics,
        };
        report(&r);
        reports.push(r);
    }
    Ok(reports)
}
