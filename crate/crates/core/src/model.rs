//! Feature extractor (two-layer MLP with a linear bottleneck) and the frozen
//! linear classifier, with hand-written backpropagation.
//!
//! The classifier reads the raw bottleneck; the memory bank and the
//! contrastive and MMD losses read its L2-normalized copy.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{format_f64, Dataset};
use crate::error::{DacError, Result};
use crate::linalg::{argmax, dot, softmax, Matrix};
use crate::optim::Sgd;
use crate::rng::{stream, DacRng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub input: usize,
    pub hidden: usize,
    pub bottleneck: usize,
    pub classes: usize,
}

impl ModelDims {
    pub fn new(input: usize, hidden: usize, bottleneck: usize, classes: usize) -> Result<Self> {
        if input == 0 || hidden == 0 || bottleneck == 0 || classes < 2 {
            return Err(DacError::invalid(format!(
                "bad model dims ({}, {}, {}, {})",
                input, hidden, bottleneck, classes
            )));
        }
        Ok(ModelDims {
            input,
            hidden,
            bottleneck,
            classes,
        })
    }

    pub fn extractor_len(&self) -> usize {
        self.hidden * self.input + self.hidden + self.bottleneck * self.hidden + self.bottleneck
    }
}

/// Extractor parameters stored flat: `W1 (h x d)`, `b1 (h)`, `W2 (b x h)`,
/// `b2 (b)`, each row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Extractor {
    dims: ModelDims,
    theta: Vec<f64>,
}

impl Extractor {
    pub fn zeros(dims: ModelDims) -> Self {
        Extractor {
            dims,
            theta: vec![0.0; dims.extractor_len()],
        }
    }

    pub fn from_theta(dims: ModelDims, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != dims.extractor_len() {
            return Err(DacError::invalid("extractor parameter count mismatch"));
        }
        Ok(Extractor { dims, theta })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let d = self.dims;
        let b1 = d.hidden * d.input;
        let w2 = b1 + d.hidden;
        let b2 = w2 + d.bottleneck * d.hidden;
        (b1, w2, b2)
    }

    fn w1(&self) -> &[f64] {
        &self.theta[..self.offsets().0]
    }
    fn b1(&self) -> &[f64] {
        let (b1, w2, _) = self.offsets();
        &self.theta[b1..w2]
    }
    fn w2(&self) -> &[f64] {
        let (_, w2, b2) = self.offsets();
        &self.theta[w2..b2]
    }
    fn b2(&self) -> &[f64] {
        &self.theta[self.offsets().2..]
    }
}

/// `weight` is `b x C` row-major; `logits = weight^T * bottleneck`, no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    bottleneck: usize,
    classes: usize,
    weight: Vec<f64>,
}

impl Classifier {
    pub fn from_weight(bottleneck: usize, classes: usize, weight: Vec<f64>) -> Result<Self> {
        if weight.len() != bottleneck * classes {
            return Err(DacError::invalid("classifier parameter count mismatch"));
        }
        Ok(Classifier {
            bottleneck,
            classes,
            weight,
        })
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    fn logits(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.classes];
        for (k, zk) in z.iter().enumerate() {
            let row = &self.weight[k * self.classes..(k + 1) * self.classes];
            for (o, w) in out.iter_mut().zip(row) {
                *o += zk * w;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub extractor: Extractor,
    pub classifier: Classifier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult {
    pub bottleneck: Vec<f64>,
    /// Unit-norm copy of `bottleneck`. A zero bottleneck maps to the
    /// normalized all-ones direction.
    pub feat: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardResult {
    pub fn prediction(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    bottleneck_norm: f64,
}

/// Upstream gradient for one sample.
#[derive(Debug, Clone, Default)]
pub struct OutputGrad {
    pub feat: Option<Vec<f64>>,
    pub logits: Option<Vec<f64>>,
}

impl ModelParams {
    /// PyTorch-style uniform fan-in initialization from the `Init` stream.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let mut rng = stream(seed, Stream::Init);
        let uniform = |fan_in: usize, count: usize, rng: &mut DacRng| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..count).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let mut theta = Vec::with_capacity(dims.extractor_len());
        theta.extend(uniform(dims.input, dims.hidden * dims.input, &mut rng));
        theta.extend(uniform(dims.input, dims.hidden, &mut rng));
        theta.extend(uniform(dims.hidden, dims.bottleneck * dims.hidden, &mut rng));
        theta.extend(uniform(dims.hidden, dims.bottleneck, &mut rng));
        let weight = uniform(dims.bottleneck, dims.bottleneck * dims.classes, &mut rng);
        ModelParams {
            extractor: Extractor { dims, theta },
            classifier: Classifier {
                bottleneck: dims.bottleneck,
                classes: dims.classes,
                weight,
            },
        }
    }

    pub fn zeros(dims: ModelDims) -> Self {
        ModelParams {
            extractor: Extractor::zeros(dims),
            classifier: Classifier {
                bottleneck: dims.bottleneck,
                classes: dims.classes,
                weight: vec![0.0; dims.bottleneck * dims.classes],
            },
        }
    }

    pub fn dims(&self) -> ModelDims {
        self.extractor.dims
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims().input {
            return Err(DacError::invalid(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.dims().input
            )));
        }
        Ok(())
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<ForwardResult> {
        self.check_input(x)?;
        Ok(self.forward_cached(x).0)
    }

    pub fn forward(&self, batch: &[&[f64]]) -> Result<Vec<ForwardResult>> {
        if batch.is_empty() {
            return Err(DacError::invalid("empty batch"));
        }
        batch.iter().map(|x| self.forward_one(x)).collect()
    }

    /// Forward pass without the dimension check; callers validate once.
    pub fn forward_cached(&self, x: &[f64]) -> (ForwardResult, ForwardCache) {
        let d = self.dims();
        let ex = &self.extractor;
        let (w1, b1, w2, b2) = (ex.w1(), ex.b1(), ex.w2(), ex.b2());
        let mut hidden_pre = b1.to_vec();
        for (j, h) in hidden_pre.iter_mut().enumerate() {
            *h += dot(&w1[j * d.input..(j + 1) * d.input], x);
        }
        let hidden: Vec<f64> = hidden_pre.iter().map(|&v| v.max(0.0)).collect();
        let mut bottleneck = b2.to_vec();
        for (k, z) in bottleneck.iter_mut().enumerate() {
            *z += dot(&w2[k * d.hidden..(k + 1) * d.hidden], &hidden);
        }
        let norm = dot(&bottleneck, &bottleneck).sqrt();
        let feat = if norm > 0.0 {
            bottleneck.iter().map(|z| z / norm).collect()
        } else {
            vec![1.0 / (d.bottleneck as f64).sqrt(); d.bottleneck]
        };
        let logits = self.classifier.logits(&bottleneck);
        let probs = softmax(&logits);
        (
            ForwardResult {
                bottleneck,
                feat,
                logits,
                probs,
            },
            ForwardCache {
                hidden_pre,
                hidden,
                bottleneck_norm: norm,
            },
        )
    }

    /// Accumulates the gradient of one sample into `grad_extractor` (and into
    /// `grad_classifier` when given). `out` is the forward result for `x`.
    pub fn backward(
        &self,
        x: &[f64],
        out: &ForwardResult,
        cache: &ForwardCache,
        upstream: &OutputGrad,
        grad_extractor: &mut [f64],
        grad_classifier: Option<&mut [f64]>,
    ) {
        let d = self.dims();
        let mut g_bottleneck = vec![0.0; d.bottleneck];
        if let Some(gl) = &upstream.logits {
            let w = &self.classifier.weight;
            for (k, g) in g_bottleneck.iter_mut().enumerate() {
                *g += dot(&w[k * d.classes..(k + 1) * d.classes], gl);
            }
            if let Some(gc) = grad_classifier {
                for (k, z) in out.bottleneck.iter().enumerate() {
                    for (c, g) in gl.iter().enumerate() {
                        gc[k * d.classes + c] += z * g;
                    }
                }
            }
        }
        if let Some(gf) = &upstream.feat {
            if cache.bottleneck_norm > 0.0 {
                let proj = dot(&out.feat, gf);
                for ((g, f), u) in g_bottleneck.iter_mut().zip(&out.feat).zip(gf) {
                    *g += (u - f * proj) / cache.bottleneck_norm;
                }
            }
        }

        let (o_b1, o_w2, o_b2) = self.extractor.offsets();
        let w2 = self.extractor.w2();
        let mut g_hidden = vec![0.0; d.hidden];
        for (k, &gb) in g_bottleneck.iter().enumerate() {
            if gb == 0.0 {
                continue;
            }
            let row = &w2[k * d.hidden..(k + 1) * d.hidden];
            let grow = &mut grad_extractor[o_w2 + k * d.hidden..o_w2 + (k + 1) * d.hidden];
            for j in 0..d.hidden {
                grow[j] += gb * cache.hidden[j];
                g_hidden[j] += row[j] * gb;
            }
            grad_extractor[o_b2 + k] += gb;
        }
        for j in 0..d.hidden {
            if cache.hidden_pre[j] <= 0.0 {
                continue;
            }
            let gh = g_hidden[j];
            for (i, xi) in x.iter().enumerate() {
                grad_extractor[j * d.input + i] += gh * xi;
            }
            grad_extractor[o_b1 + j] += gh;
        }
    }
}

/// Batched forward over a whole dataset: row `i` of each output is the
/// forward result for sample `i`.
pub fn predict_all(params: &ModelParams, dataset: &Dataset) -> Result<(Matrix, Matrix)> {
    let dims = params.dims();
    if dataset.dim() != dims.input {
        return Err(DacError::invalid(format!(
            "dataset dimension {} does not match model input {}",
            dataset.dim(),
            dims.input
        )));
    }
    let n = dataset.len();
    let mut probs = Matrix::zeros(n, dims.classes);
    let mut feats = Matrix::zeros(n, dims.bottleneck);
    for i in 0..n {
        let (out, _) = params.forward_cached(dataset.sample(i));
        probs.row_mut(i).copy_from_slice(&out.probs);
        feats.row_mut(i).copy_from_slice(&out.feat);
    }
    Ok((probs, feats))
}

pub fn predict_labels(params: &ModelParams, dataset: &Dataset) -> Result<Vec<usize>> {
    let (probs, _) = predict_all(params, dataset)?;
    Ok(probs.iter_rows().map(argmax).collect())
}

/// Label-smoothed one-hot target: `1 - eps + eps/C` on the true class and
/// `eps/C` elsewhere.
pub fn smoothed_target(label: usize, classes: usize, eps: f64) -> Vec<f64> {
    let off = eps / classes as f64;
    let mut t = vec![off; classes];
    t[label] = 1.0 - eps + off;
    t
}

/// Mean label-smoothed cross-entropy and its gradient w.r.t. the logits.
pub fn smoothed_cross_entropy(logits: &[Vec<f64>], labels: &[usize], eps: f64) -> (f64, Vec<Vec<f64>>) {
    let b = logits.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (l, &y) in logits.iter().zip(labels) {
        let lse = crate::linalg::log_sum_exp(l);
        let t = smoothed_target(y, l.len(), eps);
        let p = softmax(l);
        loss -= t.iter().zip(l).map(|(ti, li)| ti * (li - lse)).sum::<f64>();
        grads.push(p.iter().zip(&t).map(|(pi, ti)| (pi - ti) / b).collect());
    }
    (loss / b, grads)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceTrainConfig {
    pub hidden: usize,
    pub bottleneck: usize,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub label_smoothing: f64,
    pub holdout_fraction: f64,
    pub accuracy_floor: f64,
}

impl Default for SourceTrainConfig {
    fn default() -> Self {
        SourceTrainConfig {
            hidden: 64,
            bottleneck: 32,
            epochs: 50,
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 64,
            label_smoothing: 0.1,
            holdout_fraction: 0.2,
            accuracy_floor: 0.9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedSource {
    pub params: ModelParams,
    pub holdout_accuracy: f64,
    pub epoch_losses: Vec<f64>,
}

/// Supervised source training with label smoothing and momentum SGD.
/// Fails if the held-out source accuracy ends below `accuracy_floor`.
pub fn train_source(config: &SourceTrainConfig, source: &Dataset, seed: u64) -> Result<TrainedSource> {
    let labels = source
        .labels()
        .ok_or_else(|| DacError::invalid("source dataset must be labeled"))?;
    let classes = source.num_classes().unwrap_or(2);
    let dims = ModelDims::new(source.dim(), config.hidden, config.bottleneck, classes)?;
    if config.batch_size == 0 {
        return Err(DacError::invalid("batch_size must be >= 1"));
    }
    let mut params = ModelParams::init(dims, seed);

    let mut order: Vec<usize> = (0..source.len()).collect();
    let mut shuffle = stream(seed, Stream::Shuffle);
    order.shuffle(&mut shuffle);
    let n_hold = ((source.len() as f64) * config.holdout_fraction).floor() as usize;
    let n_hold = n_hold.min(source.len().saturating_sub(1));
    let (holdout, train) = order.split_at(n_hold);
    let mut train = train.to_vec();

    let n_theta = dims.extractor_len();
    let n_cls = dims.bottleneck * dims.classes;
    let mut sgd_ex = Sgd::new(n_theta, config.momentum, config.weight_decay);
    let mut sgd_cls = Sgd::new(n_cls, config.momentum, config.weight_decay);
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        train.shuffle(&mut shuffle);
        let mut total = 0.0;
        for (it, chunk) in train.chunks(config.batch_size).enumerate() {
            let mut outs = Vec::with_capacity(chunk.len());
            for &i in chunk {
                outs.push(params.forward_cached(source.sample(i)));
            }
            let logits: Vec<Vec<f64>> = outs.iter().map(|(o, _)| o.logits.clone()).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, glogits) = smoothed_cross_entropy(&logits, &ys, config.label_smoothing);
            if !loss.is_finite() {
                return Err(DacError::Divergence {
                    epoch,
                    iteration: it,
                    detail: "source cross-entropy".into(),
                });
            }
            total += loss * chunk.len() as f64;
            let mut g_ex = vec![0.0; n_theta];
            let mut g_cls = vec![0.0; n_cls];
            for ((&i, (out, cache)), gl) in chunk.iter().zip(&outs).zip(glogits) {
                let up = OutputGrad {
                    feat: None,
                    logits: Some(gl),
                };
                params.backward(source.sample(i), out, cache, &up, &mut g_ex, Some(&mut g_cls));
            }
            sgd_ex.step(params.extractor.theta_mut(), &g_ex, config.lr);
            sgd_cls.step(params.classifier.weight_mut(), &g_cls, config.lr);
        }
        epoch_losses.push(total / train.len() as f64);
    }

    let eval_idx: &[usize] = if holdout.is_empty() { &train } else { holdout };
    let correct = eval_idx
        .iter()
        .filter(|&&i| params.forward_cached(source.sample(i)).0.prediction() == labels[i])
        .count();
    let holdout_accuracy = correct as f64 / eval_idx.len() as f64;
    if holdout_accuracy < config.accuracy_floor {
        return Err(DacError::TrainingFailure(format!(
            "held-out source accuracy {:.4} below floor {:.4} after {} epochs",
            holdout_accuracy, config.accuracy_floor, config.epochs
        )));
    }
    Ok(TrainedSource {
        params,
        holdout_accuracy,
        epoch_losses,
    })
}

/// Text model format: a header line `d h b C`, then the extractor blocks
/// (`W1`, `b1`, `W2`, `b2`) and the classifier weight, row-major, one value
/// per line with 17 significant digits.
pub fn model_to_text(params: &ModelParams) -> String {
    let d = params.dims();
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {} {}", d.input, d.hidden, d.bottleneck, d.classes);
    for v in params.extractor.theta().iter().chain(params.classifier.weight()) {
        out.push_str(&format_f64(*v));
        out.push('\n');
    }
    out
}

pub fn model_from_text(text: &str) -> Result<ModelParams> {
    let mut tokens = text.split_whitespace();
    let mut header = [0usize; 4];
    for (k, h) in header.iter_mut().enumerate() {
        let tok = tokens
            .next()
            .ok_or_else(|| DacError::parse(0, "truncated model header"))?;
        *h = tok
            .parse()
            .map_err(|_| DacError::parse(0, format!("header field {} is not an integer: '{}'", k, tok)))?;
    }
    let dims = ModelDims::new(header[0], header[1], header[2], header[3])?;
    let expected = dims.extractor_len() + dims.bottleneck * dims.classes;
    let mut values = Vec::with_capacity(expected);
    for (k, tok) in tokens.enumerate() {
        let v: f64 = tok
            .parse()
            .map_err(|_| DacError::parse(k + 1, format!("non-numeric parameter '{}'", tok)))?;
        if !v.is_finite() {
            return Err(DacError::parse(k + 1, "non-finite parameter"));
        }
        values.push(v);
    }
    if values.len() != expected {
        return Err(DacError::parse(
            values.len(),
            format!("{} parameters, header implies {}", values.len(), expected),
        ));
    }
    let weight = values.split_off(dims.extractor_len());
    Ok(ModelParams {
        extractor: Extractor::from_theta(dims, values)?,
        classifier: Classifier::from_weight(dims.bottleneck, dims.classes, weight)?,
    })
}

pub fn save_model(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_text(params)).map_err(|e| DacError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DacError::io(path, e))?;
    model_from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_gauss_blobs;

    fn dims() -> ModelDims {
        ModelDims::new(3, 5, 4, 3).unwrap()
    }

    #[test]
    fn zero_model_is_uniform() {
        let p = ModelParams::zeros(dims());
        let out = p.forward(&[&[1.0, -2.0, 0.5], &[0.0, 0.0, 0.0]]).unwrap();
        for o in out {
            for pr in &o.probs {
                assert!((pr - 1.0 / 3.0).abs() < 1e-15);
            }
            assert!((crate::linalg::norm2(&o.feat) - 1.0).abs() < 1e-12);
            assert_eq!(o.prediction(), 0);
        }
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let p = ModelParams::init(dims(), 0);
        assert!(p.forward(&[&[1.0, 2.0]]).is_err());
        assert!(p.forward(&[]).is_err());
    }

    #[test]
    fn outputs_satisfy_invariants() {
        let p = ModelParams::init(dims(), 4);
        let o = p.forward_one(&[0.3, 0.1, -0.9]).unwrap();
        assert!((crate::linalg::norm2(&o.feat) - 1.0).abs() < 1e-9);
        assert!((o.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let expect_logits = p.classifier.logits(&o.bottleneck);
        assert_eq!(o.logits, expect_logits);
    }

    #[test]
    fn hand_built_linear_model_matches_sign() {
        // d=1, hidden=2 computing relu(x) and relu(-x), bottleneck = (relu(x) - relu(-x), 1) = (x, 1)
        let dims = ModelDims::new(1, 2, 2, 2).unwrap();
        let theta = vec![1.0, -1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, 1.0];
        let ex = Extractor::from_theta(dims, theta).unwrap();
        // score_1 - score_0 = 2x - 0.5 (classifier columns (0, x-part) -> rows k)
        let cls = Classifier::from_weight(2, 2, vec![-1.0, 1.0, 0.25, -0.25]).unwrap();
        let p = ModelParams {
            extractor: ex,
            classifier: cls,
        };
        for &x in &[-3.0, -0.1, 0.2, 0.26, 0.24, 1.0, 5.0] {
            let linear = 2.0 * x - 0.5;
            let expected = if linear > 0.0 { 1 } else { 0 };
            assert_eq!(p.forward_one(&[x]).unwrap().prediction(), expected, "x = {}", x);
        }
    }

    #[test]
    fn smoothed_target_values() {
        let t = smoothed_target(1, 3, 0.1);
        assert!((t[0] - 0.1 / 3.0).abs() < 1e-15);
        assert!((t[1] - (0.9 + 0.1 / 3.0)).abs() < 1e-15);
        assert!((t[2] - 0.1 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_smoothing_is_plain_cross_entropy() {
        let logits = vec![vec![0.2, -1.0, 2.0], vec![1.0, 1.0, 0.0]];
        let labels = [2, 0];
        let (loss, _) = smoothed_cross_entropy(&logits, &labels, 0.0);
        let direct: f64 = logits
            .iter()
            .zip(&labels)
            .map(|(l, &y)| -softmax(l)[y].ln())
            .sum::<f64>()
            / 2.0;
        assert!((loss - direct).abs() < 1e-14);
    }

    #[test]
    fn backward_matches_finite_differences_for_classifier_path() {
        let p = ModelParams::init(dims(), 9);
        let x = [0.4, -0.7, 1.1];
        let target = [0usize];
        let loss_of = |p: &ModelParams| {
            let o = p.forward_one(&x).unwrap();
            smoothed_cross_entropy(&[o.logits], &target, 0.1).0
        };
        let (out, cache) = p.forward_cached(&x);
        let (_, gl) = smoothed_cross_entropy(std::slice::from_ref(&out.logits), &target, 0.1);
        let mut g_ex = vec![0.0; p.dims().extractor_len()];
        let mut g_cls = vec![0.0; p.classifier.weight().len()];
        let up = OutputGrad {
            feat: None,
            logits: Some(gl[0].clone()),
        };
        p.backward(&x, &out, &cache, &up, &mut g_ex, Some(&mut g_cls));
        let h = 1e-6;
        for k in 0..g_ex.len() {
            let mut q = p.clone();
            q.extractor.theta_mut()[k] += h;
            let up = loss_of(&q);
            q.extractor.theta_mut()[k] -= 2.0 * h;
            let fd = (up - loss_of(&q)) / (2.0 * h);
            assert!((fd - g_ex[k]).abs() < 1e-7, "theta[{}]: {} vs {}", k, fd, g_ex[k]);
        }
        for k in 0..g_cls.len() {
            let mut q = p.clone();
            q.classifier.weight_mut()[k] += h;
            let up = loss_of(&q);
            q.classifier.weight_mut()[k] -= 2.0 * h;
            let fd = (up - loss_of(&q)) / (2.0 * h);
            assert!((fd - g_cls[k]).abs() < 1e-7);
        }
    }

    #[test]
    fn predict_all_matches_per_sample_loop() {
        let ds = gen_gauss_blobs(17, 3, 3, &[0.0; 3], 1.0, 2).unwrap();
        let p = ModelParams::init(dims(), 1);
        let (probs, feats) = predict_all(&p, &ds).unwrap();
        for i in 0..ds.len() {
            let o = p.forward_one(ds.sample(i)).unwrap();
            assert_eq!(probs.row(i), o.probs.as_slice());
            assert_eq!(feats.row(i), o.feat.as_slice());
        }
        let perm: Vec<usize> = (0..ds.len()).rev().collect();
        let (pp, _) = predict_all(&p, &ds.subset(&perm)).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(pp.row(k), probs.row(i));
        }
    }

    #[test]
    fn separable_blobs_train_to_high_accuracy() {
        let ds = gen_gauss_blobs(400, 2, 2, &[0.0, 0.0], 0.5, 5).unwrap();
        let cfg = SourceTrainConfig {
            accuracy_floor: 0.99,
            ..SourceTrainConfig::default()
        };
        let trained = train_source(&cfg, &ds, 3).unwrap();
        assert!(trained.holdout_accuracy >= 0.99);
        let again = train_source(&cfg, &ds, 3).unwrap();
        assert_eq!(trained.params, again.params);
    }

    #[test]
    fn accuracy_floor_is_enforced() {
        let ds = gen_gauss_blobs(40, 2, 2, &[0.0, 0.0], 0.5, 5).unwrap();
        let cfg = SourceTrainConfig {
            epochs: 0,
            accuracy_floor: 1.01,
            ..SourceTrainConfig::default()
        };
        assert!(matches!(train_source(&cfg, &ds, 0), Err(DacError::TrainingFailure(_))));
    }

    #[test]
    fn model_text_round_trip() {
        let p = ModelParams::init(dims(), 12);
        let text = model_to_text(&p);
        let back = model_from_text(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(model_to_text(&back), text);
        assert!(model_from_text("3 5 4 3\n1.0\n").is_err());
    }
}
