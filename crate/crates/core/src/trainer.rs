//! The adaptation loop: pseudo-labels once per epoch; per batch two
//! augmented views, momentum bank update, threshold division, centroid
//! refresh, total loss, and an SGD step on the extractor only.

use rand::seq::SliceRandom;

use crate::augment::{strong_aug, weak_aug, AugmentPolicy};
use crate::bank::{init_bank, BankConfig, MemoryBank, Split};
use crate::data::Dataset;
use crate::error::{DacError, Result};
use crate::linalg::argmax;
use crate::losses::{backward_views, forward_views, total_loss, BatchInput, LossConfig, LossReport, MmdKind, Scheme};
use crate::model::{predict_all, ModelParams};
use crate::optim::Sgd;
use crate::pseudo::{update_pseudo_labels, PseudoLabelState};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    pub tau_c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub bank_momentum: f64,
    pub tau: f64,
    pub omega: f64,
    /// Fraction of all iterations over which `omega` ramps up linearly from 0.
    pub omega_ramp: f64,
    pub lr0: f64,
    pub momentum_sgd: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub mmd_kind: MmdKind,
    pub lr_factor: f64,
    pub lr_exponent: f64,
    /// Epoch (0-based) from which the learning rate is divided by 10.
    pub lr_drop_epoch: Option<usize>,
    pub init_fraction: f64,
    pub renormalize_bank: bool,
    pub renormalize_centroids: bool,
    pub policy: AugmentPolicy,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            tau_c: 0.95,
            alpha: 0.5,
            beta: 0.5,
            k: 5,
            bank_momentum: 0.2,
            tau: 0.05,
            omega: 1.0,
            omega_ramp: 0.1,
            lr0: 0.01,
            momentum_sgd: 0.9,
            weight_decay: 5e-4,
            batch_size: 64,
            epochs: 30,
            seed: 0,
            scheme: Scheme::Dac,
            mmd_kind: MmdKind::Emmd,
            lr_factor: 15.0,
            lr_exponent: -0.75,
            lr_drop_epoch: None,
            init_fraction: 0.05,
            renormalize_bank: true,
            renormalize_centroids: true,
            policy: AugmentPolicy::default(),
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.tau_c > 0.0 && self.tau_c < 1.0) {
            return Err(DacError::invalid("tau_c must lie in (0, 1)"));
        }
        if self.k == 0 || self.k > n {
            return Err(DacError::invalid(format!("K = {} outside 1..={}", self.k, n)));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return Err(DacError::invalid(format!(
                "batch_size = {} outside 1..={}",
                self.batch_size, n
            )));
        }
        if !(0.0..=1.0).contains(&self.bank_momentum) {
            return Err(DacError::invalid("bank momentum must lie in [0, 1]"));
        }
        if !(self.tau > 0.0) {
            return Err(DacError::invalid("temperature must be > 0"));
        }
        self.policy.validate()
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            alpha: self.alpha,
            beta: self.beta,
            omega: self.omega,
            tau: self.tau,
            k: self.k,
            mmd_kind: self.mmd_kind,
            scheme: self.scheme,
        }
    }

    pub fn bank_config(&self) -> BankConfig {
        BankConfig {
            momentum: self.bank_momentum,
            init_fraction: self.init_fraction,
            renormalize_rows: self.renormalize_bank,
            renormalize_centroids: self.renormalize_centroids,
        }
    }
}

/// `lr0 * (1 + factor * p)^exponent`.
pub fn lr_schedule(lr0: f64, progress: f64, lr_factor: f64, lr_exponent: f64) -> f64 {
    lr0 * (1.0 + lr_factor * progress.clamp(0.0, 1.0)).powf(lr_exponent)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `None` for a class with no samples.
    pub per_class: Vec<Option<f64>>,
    pub source_like_accuracy: Option<f64>,
    pub target_specific_accuracy: Option<f64>,
}

/// Accuracy of `argmax` predictions against ground truth, overall, per
/// class, and restricted to each side of the bank's division when given.
pub fn evaluate(params: &ModelParams, dataset: &Dataset, bank: Option<&MemoryBank>) -> Result<Evaluation> {
    let labels = dataset
        .labels()
        .ok_or_else(|| DacError::invalid("evaluation needs a labeled dataset"))?;
    let (probs, _) = predict_all(params, dataset)?;
    let preds: Vec<usize> = probs.iter_rows().map(argmax).collect();
    let classes = params.dims().classes;
    let mut hit = vec![0usize; classes];
    let mut count = vec![0usize; classes];
    for (&p, &y) in preds.iter().zip(labels) {
        if y < classes {
            count[y] += 1;
            hit[y] += (p == y) as usize;
        }
    }
    let correct: usize = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    let rate = |which: Split, bank: &MemoryBank| {
        let idx: Vec<usize> = (0..preds.len()).filter(|&i| bank.split()[i] == which).collect();
        if idx.is_empty() {
            None
        } else {
            Some(idx.iter().filter(|&&i| preds[i] == labels[i]).count() as f64 / idx.len() as f64)
        }
    };
    Ok(Evaluation {
        accuracy: correct as f64 / preds.len() as f64,
        per_class: hit
            .iter()
            .zip(&count)
            .map(|(&h, &c)| if c == 0 { None } else { Some(h as f64 / c as f64) })
            .collect(),
        source_like_accuracy: bank.and_then(|b| rate(Split::SourceLike, b)),
        target_specific_accuracy: bank.and_then(|b| rate(Split::TargetSpecific, b)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub evaluation: Option<Evaluation>,
    /// Sample-weighted means of the per-batch losses.
    pub loss: LossReport,
    pub n_source_like: usize,
    pub reseeded: bool,
}

#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub bank: MemoryBank,
    pub pseudo: PseudoLabelState,
}

/// State handed to an observer at the end of every epoch.
pub struct EpochSnapshot<'a> {
    pub record: &'a EpochRecord,
    pub params: &'a ModelParams,
    pub bank: &'a MemoryBank,
    pub pseudo: &'a PseudoLabelState,
}

pub fn adapt(config: &AdaptConfig, source: &ModelParams, target: &Dataset) -> Result<AdaptOutcome> {
    adapt_observed(config, source, target, |_| {})
}

pub fn adapt_observed<F>(
    config: &AdaptConfig,
    source: &ModelParams,
    target: &Dataset,
    mut observe: F,
) -> Result<AdaptOutcome>
where
    F: FnMut(&EpochSnapshot<'_>),
{
    let n = target.len();
    config.validate(n)?;
    let dims = source.dims();
    if target.dim() != dims.input {
        return Err(DacError::invalid(format!(
            "target dimension {} does not match model input {}",
            target.dim(),
            dims.input
        )));
    }
    let labels_known = target.labels().is_some();
    let mut params = source.clone();
    let mut bank = init_bank(source, target, config.bank_config())?;
    let mut pseudo = update_pseudo_labels(source, target, None)?;
    let mut sgd = Sgd::new(dims.extractor_len(), config.momentum_sgd, config.weight_decay);
    let mut shuffle = stream(config.seed, Stream::Shuffle);
    let mut aug_rng = stream(config.seed, Stream::Augment);
    let iters_per_epoch = n.div_ceil(config.batch_size);
    let total_iters = (iters_per_epoch * config.epochs).max(1) as f64;
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    let mut global_iter = 0usize;

    for epoch in 0..config.epochs {
        if epoch > 0 {
            pseudo = update_pseudo_labels(&params, target, Some(&pseudo))?;
        }
        bank.refresh_target_specific_classes(&pseudo.labels);
        order.shuffle(&mut shuffle);
        let mut sums = LossReport::default();
        let mut flags: Vec<String> = Vec::new();

        for (iteration, chunk) in order.chunks(config.batch_size).enumerate() {
            let inputs: Vec<BatchInput> = chunk
                .iter()
                .map(|&i| {
                    let x = target.sample(i);
                    let weak = weak_aug(x, &config.policy, &mut aug_rng);
                    let strong = strong_aug(x, &config.policy, &mut aug_rng);
                    BatchInput {
                        index: i,
                        weak,
                        strong,
                        pseudo_label: pseudo.labels[i],
                    }
                })
                .collect();
            let (views, caches) = forward_views(&params, &inputs)?;
            for v in &views {
                bank.momentum_update(v.index, &v.feat_w)?;
                bank.assign_by_threshold(v.index, &v.probs_w, config.tau_c, v.pseudo_label);
            }
            bank.class_centroids();

            let progress = global_iter as f64 / total_iters;
            let mut loss_cfg = config.loss_config();
            if config.omega_ramp > 0.0 {
                loss_cfg.omega *= (progress / config.omega_ramp).min(1.0);
            }
            let (report, grad) = total_loss(&views, &bank, &loss_cfg)?;
            let mut theta_grad = vec![0.0; dims.extractor_len()];
            backward_views(&params, &inputs, &views, &caches, &grad, &mut theta_grad);
            if !report.total.is_finite() || theta_grad.iter().any(|g| !g.is_finite()) {
                return Err(DacError::Divergence {
                    epoch,
                    iteration,
                    detail: format!(
                        "total={} con={} self={} mmd={}",
                        report.total, report.con, report.self_training, report.mmd
                    ),
                });
            }
            let w = chunk.len() as f64 / n as f64;
            sums.total += w * report.total;
            sums.con += w * report.con;
            sums.self_training += w * report.self_training;
            sums.mmd += w * report.mmd;
            for f in report.degenerate_flags {
                if !flags.contains(&f) {
                    flags.push(f);
                }
            }

            let mut lr = lr_schedule(config.lr0, progress, config.lr_factor, config.lr_exponent);
            if config.lr_drop_epoch.is_some_and(|e| epoch >= e) {
                lr *= 0.1;
            }
            sgd.step(params.extractor.theta_mut(), &theta_grad, lr);
            global_iter += 1;
        }

        let mut reseeded = false;
        if bank.n_source_like() == 0 {
            let (probs, _) = predict_all(&params, target)?;
            bank.init_division_top_percent(&probs, &pseudo.labels)?;
            bank.class_centroids();
            reseeded = true;
            flags.push("division_reseeded".into());
        }
        sums.n_source_like = bank.n_source_like();
        sums.n_target_specific = bank.n_target_specific();
        sums.degenerate_flags = flags;
        let evaluation = if labels_known {
            Some(evaluate(&params, target, Some(&bank))?)
        } else {
            None
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            evaluation,
            n_source_like: sums.n_source_like,
            loss: sums,
            reseeded,
        };
        observe(&EpochSnapshot {
            record: &record,
            params: &params,
            bank: &bank,
            pseudo: &pseudo,
        });
        history.push(record);
    }
    Ok(AdaptOutcome {
        params,
        history,
        bank,
        pseudo,
    })
}
