//! Training losses with analytic gradients.
//!
//! Each loss returns its value together with the gradient w.r.t. the live
//! batch quantities (weak/strong features and probabilities). Bank rows,
//! centroids and MMD prototypes are constants under differentiation.
//! [`batch_objective`] chains those gradients through the model to the
//! extractor parameters.

use crate::bank::{MemoryBank, Split};
use crate::error::{DacError, Result};
use crate::linalg::{axpy, dot, log_sum_exp, sigmoid, softmax, softplus};
use crate::model::{ModelParams, OutputGrad};

pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MmdKind {
    Emmd,
    Lmmd,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Split-aware prototypes: class centroid for source-like anchors, local
    /// structure for target-specific ones.
    Dac,
    /// Every anchor contrasts its pseudo-label centroid against the other centroids.
    SchemeS,
    /// Instance discrimination: each anchor's own bank row against all other rows.
    SchemeT,
    /// Self-training only.
    SelfOnly,
}

impl MmdKind {
    pub const ALL: [MmdKind; 3] = [MmdKind::Emmd, MmdKind::Lmmd, MmdKind::None];

    pub fn as_str(self) -> &'static str {
        match self {
            MmdKind::Emmd => "emmd",
            MmdKind::Lmmd => "lmmd",
            MmdKind::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Dac, Scheme::SchemeS, Scheme::SchemeT, Scheme::SelfOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Dac => "dac",
            Scheme::SchemeS => "scheme_s",
            Scheme::SchemeT => "scheme_t",
            Scheme::SelfOnly => "self_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// One anchor of a batch: its bank row and both augmented views.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorView {
    pub index: usize,
    pub feat_w: Vec<f64>,
    pub feat_s: Vec<f64>,
    pub probs_w: Vec<f64>,
    pub probs_s: Vec<f64>,
    pub pseudo_label: usize,
}

/// Gradients w.r.t. the per-sample batch quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGrad {
    pub feat_w: Vec<Vec<f64>>,
    pub feat_s: Vec<Vec<f64>>,
    pub probs_w: Vec<Vec<f64>>,
    pub probs_s: Vec<Vec<f64>>,
}

impl BatchGrad {
    pub fn zeros(batch: &[AnchorView]) -> Self {
        let f = |v: &dyn Fn(&AnchorView) -> usize| batch.iter().map(|a| vec![0.0; v(a)]).collect::<Vec<_>>();
        BatchGrad {
            feat_w: f(&|a| a.feat_w.len()),
            feat_s: f(&|a| a.feat_s.len()),
            probs_w: f(&|a| a.probs_w.len()),
            probs_s: f(&|a| a.probs_s.len()),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &BatchGrad) {
        let pairs = [
            (&mut self.feat_w, &other.feat_w),
            (&mut self.feat_s, &other.feat_s),
            (&mut self.probs_w, &other.probs_w),
            (&mut self.probs_s, &other.probs_s),
        ];
        for (dst, src) in pairs {
            for (d, s) in dst.iter_mut().zip(src) {
                axpy(scale, s, d);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: BatchGrad,
}

fn clamped_ln(p: f64) -> (f64, f64) {
    // value and d/dp of ln(max(p, clamp))
    if p > LOG_CLAMP {
        (p.ln(), 1.0 / p)
    } else {
        (LOG_CLAMP.ln(), 0.0)
    }
}

/// Pseudo-label cross-entropy on both views, KL of the batch-mean weak
/// prediction to uniform, and `omega` times the mean weak-view entropy.
pub fn self_training_loss(batch: &[AnchorView], omega: f64) -> Result<LossValue> {
    if batch.is_empty() {
        return Err(DacError::invalid("empty batch"));
    }
    let b = batch.len() as f64;
    let c = batch[0].probs_w.len();
    let mut grad = BatchGrad::zeros(batch);
    let mut ce = 0.0;
    let mut entropy = 0.0;
    let mut mean_p = vec![0.0; c];
    for (a, anchor) in batch.iter().enumerate() {
        let y = anchor.pseudo_label;
        let (lw, dw) = clamped_ln(anchor.probs_w[y]);
        let (ls, ds) = clamped_ln(anchor.probs_s[y]);
        ce -= lw + ls;
        grad.probs_w[a][y] -= dw / b;
        grad.probs_s[a][y] -= ds / b;
        for (k, &p) in anchor.probs_w.iter().enumerate() {
            mean_p[k] += p / b;
            let (lp, _) = clamped_ln(p);
            entropy -= p * lp / b;
            let dh = -(lp + if p > LOG_CLAMP { 1.0 } else { 0.0 }) / b;
            grad.probs_w[a][k] += omega * dh;
        }
    }
    ce /= b;
    let mut kl = 0.0;
    for (k, &pk) in mean_p.iter().enumerate() {
        let (lp, _) = clamped_ln(pk);
        let log_term = (c as f64).ln() + lp;
        kl += pk * log_term;
        let dk = log_term + if pk > LOG_CLAMP { 1.0 } else { 0.0 };
        for g in grad.probs_w.iter_mut() {
            g[k] += dk / b;
        }
    }
    Ok(LossValue {
        value: ce + kl + omega * entropy,
        grad,
    })
}

/// Reference to a negative key without copying it out of the bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Key {
    Centroid(usize),
    Row(usize),
}

impl Key {
    pub fn resolve<'a>(&self, bank: &'a MemoryBank) -> &'a [f64] {
        match *self {
            Key::Centroid(c) => bank.centroids().row(c),
            Key::Row(j) => bank.row(j),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    pub positive: Vec<f64>,
    pub negatives: Vec<Key>,
    /// Coefficient of the strong-view feature inside `positive`, so the
    /// contrastive gradient can flow into it.
    pub strong_weight: f64,
    /// Bank rows averaged into `positive` (target-specific anchors only).
    pub neighbors: Vec<usize>,
}

impl Prototypes {
    pub fn negative_vectors(&self, bank: &MemoryBank) -> Vec<Vec<f64>> {
        self.negatives.iter().map(|k| k.resolve(bank).to_vec()).collect()
    }
}

fn centroid_negatives(bank: &MemoryBank, except: Option<usize>) -> impl Iterator<Item = Key> + '_ {
    (0..bank.classes())
        .filter(move |&c| Some(c) != except)
        .map(Key::Centroid)
}

fn target_specific_negatives(bank: &MemoryBank, except: usize) -> impl Iterator<Item = Key> + '_ {
    (0..bank.len())
        .filter(move |&j| j != except && bank.split()[j] == Split::TargetSpecific)
        .map(Key::Row)
}

/// Positive prototype and negative keys for one anchor under `scheme`.
///
/// With [`Scheme::Dac`] a source-like anchor of class `k` uses `w_k` against
/// the other `C - 1` centroids and all target-specific rows; a
/// target-specific anchor uses the mean of its strong feature and its `K`
/// nearest bank rows against the other target-specific rows and all `C`
/// centroids. Both give `C + n_o - 1` negatives.
pub fn build_prototypes(anchor: &AnchorView, bank: &MemoryBank, k: usize, scheme: Scheme) -> Result<Prototypes> {
    let i = anchor.index;
    if i >= bank.len() {
        return Err(DacError::invalid("anchor index outside bank"));
    }
    match scheme {
        Scheme::Dac => match bank.split()[i] {
            Split::SourceLike => {
                let class = bank.split_class()[i];
                Ok(Prototypes {
                    positive: bank.centroids().row(class).to_vec(),
                    negatives: centroid_negatives(bank, Some(class))
                        .chain(target_specific_negatives(bank, usize::MAX))
                        .collect(),
                    strong_weight: 0.0,
                    neighbors: Vec::new(),
                })
            }
            Split::TargetSpecific => {
                let neighbors = bank.knn(&anchor.feat_w, k)?;
                let w = 1.0 / (k as f64 + 1.0);
                let mut positive: Vec<f64> = anchor.feat_s.iter().map(|v| v * w).collect();
                for &j in &neighbors {
                    axpy(w, bank.row(j), &mut positive);
                }
                Ok(Prototypes {
                    positive,
                    negatives: target_specific_negatives(bank, i)
                        .chain(centroid_negatives(bank, None))
                        .collect(),
                    strong_weight: w,
                    neighbors,
                })
            }
        },
        Scheme::SchemeS => {
            let class = anchor.pseudo_label;
            Ok(Prototypes {
                positive: bank.centroids().row(class).to_vec(),
                negatives: centroid_negatives(bank, Some(class)).collect(),
                strong_weight: 0.0,
                neighbors: Vec::new(),
            })
        }
        Scheme::SchemeT => Ok(Prototypes {
            positive: bank.row(i).to_vec(),
            negatives: (0..bank.len()).filter(|&j| j != i).map(Key::Row).collect(),
            strong_weight: 0.0,
            neighbors: Vec::new(),
        }),
        Scheme::SelfOnly => Err(DacError::invalid("self-only scheme has no prototypes")),
    }
}

/// Per-anchor InfoNCE term `-log softmax(logits)[0]` where `logits[0]` is
/// the positive, plus its gradient w.r.t. the logits.
pub fn info_nce(logits: &[f64]) -> (f64, Vec<f64>) {
    let lse = log_sum_exp(logits);
    let mut g = softmax(logits);
    g[0] -= 1.0;
    (lse - logits[0], g)
}

/// Batch mean of the prototype contrastive loss at temperature `tau`.
pub fn contrastive_loss(
    batch: &[AnchorView],
    bank: &MemoryBank,
    tau: f64,
    k: usize,
    scheme: Scheme,
) -> Result<LossValue> {
    if batch.is_empty() {
        return Err(DacError::invalid("empty batch"));
    }
    if !(tau > 0.0) {
        return Err(DacError::invalid("temperature must be > 0"));
    }
    let mut grad = BatchGrad::zeros(batch);
    if scheme == Scheme::SelfOnly {
        return Ok(LossValue { value: 0.0, grad });
    }
    let b = batch.len() as f64;
    let mut total = 0.0;
    for (a, anchor) in batch.iter().enumerate() {
        let protos = build_prototypes(anchor, bank, k, scheme)?;
        let f = &anchor.feat_w;
        let mut logits = Vec::with_capacity(protos.negatives.len() + 1);
        logits.push(dot(f, &protos.positive) / tau);
        for key in &protos.negatives {
            logits.push(dot(f, key.resolve(bank)) / tau);
        }
        let (loss, g) = info_nce(&logits);
        total += loss;
        let gf = &mut grad.feat_w[a];
        axpy(g[0] / (tau * b), &protos.positive, gf);
        for (key, gj) in protos.negatives.iter().zip(&g[1..]) {
            axpy(gj / (tau * b), key.resolve(bank), gf);
        }
        if protos.strong_weight != 0.0 {
            axpy(g[0] * protos.strong_weight / (tau * b), f, &mut grad.feat_s[a]);
        }
    }
    Ok(LossValue { value: total / b, grad })
}

/// Memory-bank class statistics used by the MMD terms, computed once per batch.
#[derive(Debug, Clone)]
pub struct MmdContext {
    pub target_specific_means: Vec<Option<Vec<f64>>>,
    pub source_like_present: Vec<bool>,
}

impl MmdContext {
    pub fn from_bank(bank: &MemoryBank) -> Self {
        let mut present = vec![false; bank.classes()];
        for (s, &c) in bank.split().iter().zip(bank.split_class()) {
            if *s == Split::SourceLike {
                present[c] = true;
            }
        }
        MmdContext {
            target_specific_means: bank.class_means(Split::TargetSpecific),
            source_like_present: present,
        }
    }
}

/// `(q_plus, q_minus)` for one anchor, or `None` when the opposite split has
/// no samples of the anchor's class.
pub fn mmd_prototypes(anchor: &AnchorView, bank: &MemoryBank, ctx: &MmdContext) -> Option<(Vec<f64>, Vec<f64>)> {
    let i = anchor.index;
    let c = bank.split_class()[i];
    let w = bank.centroids().row(c).to_vec();
    match bank.split()[i] {
        Split::SourceLike => ctx.target_specific_means[c].clone().map(|t| (t, w)),
        Split::TargetSpecific => {
            if ctx.source_like_present[c] {
                ctx.target_specific_means[c].clone().map(|t| (w, t))
            } else {
                None
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmdValue {
    pub loss: LossValue,
    pub skipped: usize,
}

fn mmd_loss(batch: &[AnchorView], bank: &MemoryBank, per_sample: impl Fn(f64) -> (f64, f64)) -> Result<MmdValue> {
    if batch.is_empty() {
        return Err(DacError::invalid("empty batch"));
    }
    let ctx = MmdContext::from_bank(bank);
    let mut grad = BatchGrad::zeros(batch);
    let protos: Vec<_> = batch.iter().map(|a| mmd_prototypes(a, bank, &ctx)).collect();
    let used = protos.iter().filter(|p| p.is_some()).count();
    let skipped = batch.len() - used;
    if used == 0 {
        return Ok(MmdValue {
            loss: LossValue { value: 0.0, grad },
            skipped,
        });
    }
    let mut total = 0.0;
    for (a, (anchor, proto)) in batch.iter().zip(&protos).enumerate() {
        let Some((q_plus, q_minus)) = proto else { continue };
        let diff: Vec<f64> = q_minus.iter().zip(q_plus).map(|(m, p)| m - p).collect();
        let (v, dv) = per_sample(dot(&anchor.feat_w, &diff));
        total += v;
        axpy(dv / used as f64, &diff, &mut grad.feat_w[a]);
    }
    Ok(MmdValue {
        loss: LossValue {
            value: total / used as f64,
            grad,
        },
        skipped,
    })
}

/// Per-anchor linear term `f . (q_minus - q_plus)`.
pub fn lmmd_sample(f: &[f64], q_plus: &[f64], q_minus: &[f64]) -> f64 {
    dot(f, q_minus) - dot(f, q_plus)
}

/// Per-anchor exponential term `softplus((f.q_minus - f.q_plus) / tau)`.
pub fn emmd_sample(f: &[f64], q_plus: &[f64], q_minus: &[f64], tau: f64) -> f64 {
    softplus(lmmd_sample(f, q_plus, q_minus) / tau)
}

/// Linear memory-bank MMD: mean of `f . (q_minus - q_plus)` over anchors
/// that have prototypes. Can be negative.
pub fn lmmd_loss(batch: &[AnchorView], bank: &MemoryBank) -> Result<MmdValue> {
    mmd_loss(batch, bank, |s| (s, 1.0))
}

/// Exponential memory-bank MMD: mean of `softplus((f.q_minus - f.q_plus) / tau)`.
pub fn emmd_loss(batch: &[AnchorView], bank: &MemoryBank, tau: f64) -> Result<MmdValue> {
    if !(tau > 0.0) {
        return Err(DacError::invalid("temperature must be > 0"));
    }
    mmd_loss(batch, bank, |s| (softplus(s / tau), sigmoid(s / tau) / tau))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
    pub tau: f64,
    pub k: usize,
    pub mmd_kind: MmdKind,
    pub scheme: Scheme,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.5,
            beta: 0.5,
            omega: 1.0,
            tau: 0.05,
            k: 5,
            mmd_kind: MmdKind::Emmd,
            scheme: Scheme::Dac,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossReport {
    pub total: f64,
    pub con: f64,
    pub self_training: f64,
    pub mmd: f64,
    pub n_source_like: usize,
    pub n_target_specific: usize,
    pub degenerate_flags: Vec<String>,
}

/// `L = L_con + alpha L_self + beta L_mmd`. Under the self-only scheme only
/// `alpha L_self` remains; the S/T schemes contrast without the division and
/// therefore drop the split-based MMD term.
pub fn total_loss(batch: &[AnchorView], bank: &MemoryBank, cfg: &LossConfig) -> Result<(LossReport, BatchGrad)> {
    let self_t = self_training_loss(batch, cfg.omega)?;
    let con = contrastive_loss(batch, bank, cfg.tau, cfg.k, cfg.scheme)?;
    let mut flags: Vec<String> = bank
        .carried_classes()
        .iter()
        .map(|c| format!("centroid_carried:{}", c))
        .collect();
    let mmd_active = cfg.scheme == Scheme::Dac && cfg.mmd_kind != MmdKind::None;
    let mmd = if mmd_active {
        let v = match cfg.mmd_kind {
            MmdKind::Emmd => emmd_loss(batch, bank, cfg.tau)?,
            _ => lmmd_loss(batch, bank)?,
        };
        if v.skipped > 0 {
            flags.push(format!("mmd_skipped:{}", v.skipped));
        }
        Some(v.loss)
    } else {
        None
    };

    let mut grad = con.grad.clone();
    grad.add_scaled(cfg.alpha, &self_t.grad);
    let mmd_value = mmd.as_ref().map_or(0.0, |m| m.value);
    if let Some(m) = &mmd {
        grad.add_scaled(cfg.beta, &m.grad);
    }
    let report = LossReport {
        total: con.value + cfg.alpha * self_t.value + cfg.beta * mmd_value,
        con: con.value,
        self_training: self_t.value,
        mmd: mmd_value,
        n_source_like: bank.n_source_like(),
        n_target_specific: bank.n_target_specific(),
        degenerate_flags: flags,
    };
    Ok((report, grad))
}

/// Converts a gradient w.r.t. softmax outputs into one w.r.t. the logits.
pub fn softmax_backward(probs: &[f64], grad_probs: &[f64]) -> Vec<f64> {
    let inner = dot(probs, grad_probs);
    probs.iter().zip(grad_probs).map(|(p, g)| p * (g - inner)).collect()
}

/// One batch element before the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchInput {
    pub index: usize,
    pub weak: Vec<f64>,
    pub strong: Vec<f64>,
    pub pseudo_label: usize,
}

/// Runs both views through the model, evaluates [`total_loss`] against the
/// given bank snapshot, and backpropagates to the extractor parameters. The
/// classifier receives no gradient.
pub fn batch_objective(
    params: &ModelParams,
    inputs: &[BatchInput],
    bank: &MemoryBank,
    cfg: &LossConfig,
) -> Result<(LossReport, Vec<f64>)> {
    let (views, caches) = forward_views(params, inputs)?;
    let (report, grad) = total_loss(&views, bank, cfg)?;
    let mut theta_grad = vec![0.0; params.dims().extractor_len()];
    backward_views(params, inputs, &views, &caches, &grad, &mut theta_grad);
    Ok((report, theta_grad))
}

/// A single term of the objective, for isolating gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Total,
    SelfTraining,
    Contrastive,
    Lmmd,
    Emmd,
}

/// Value and extractor gradient of one unweighted term (or the weighted
/// total) for a batch against a fixed bank.
pub fn term_objective(
    params: &ModelParams,
    inputs: &[BatchInput],
    bank: &MemoryBank,
    cfg: &LossConfig,
    term: Term,
) -> Result<(f64, Vec<f64>)> {
    let (views, caches) = forward_views(params, inputs)?;
    let (value, grad) = match term {
        Term::Total => {
            let (r, g) = total_loss(&views, bank, cfg)?;
            (r.total, g)
        }
        Term::SelfTraining => {
            let v = self_training_loss(&views, cfg.omega)?;
            (v.value, v.grad)
        }
        Term::Contrastive => {
            let v = contrastive_loss(&views, bank, cfg.tau, cfg.k, cfg.scheme)?;
            (v.value, v.grad)
        }
        Term::Lmmd => {
            let v = lmmd_loss(&views, bank)?.loss;
            (v.value, v.grad)
        }
        Term::Emmd => {
            let v = emmd_loss(&views, bank, cfg.tau)?.loss;
            (v.value, v.grad)
        }
    };
    let mut theta_grad = vec![0.0; params.dims().extractor_len()];
    backward_views(params, inputs, &views, &caches, &grad, &mut theta_grad);
    Ok((value, theta_grad))
}

type ViewCaches = Vec<(
    crate::model::ForwardResult,
    crate::model::ForwardCache,
    crate::model::ForwardResult,
    crate::model::ForwardCache,
)>;

pub(crate) fn forward_views(params: &ModelParams, inputs: &[BatchInput]) -> Result<(Vec<AnchorView>, ViewCaches)> {
    let dim = params.dims().input;
    let mut views = Vec::with_capacity(inputs.len());
    let mut caches = Vec::with_capacity(inputs.len());
    for inp in inputs {
        if inp.weak.len() != dim || inp.strong.len() != dim {
            return Err(DacError::invalid("batch input dimension mismatch"));
        }
        let (ow, cw) = params.forward_cached(&inp.weak);
        let (os, cs) = params.forward_cached(&inp.strong);
        views.push(AnchorView {
            index: inp.index,
            feat_w: ow.feat.clone(),
            feat_s: os.feat.clone(),
            probs_w: ow.probs.clone(),
            probs_s: os.probs.clone(),
            pseudo_label: inp.pseudo_label,
        });
        caches.push((ow, cw, os, cs));
    }
    Ok((views, caches))
}

pub(crate) fn backward_views(
    params: &ModelParams,
    inputs: &[BatchInput],
    views: &[AnchorView],
    caches: &ViewCaches,
    grad: &BatchGrad,
    theta_grad: &mut [f64],
) {
    for (a, ((inp, view), (ow, cw, os, cs))) in inputs.iter().zip(views).zip(caches).enumerate() {
        let weak = OutputGrad {
            feat: Some(grad.feat_w[a].clone()),
            logits: Some(softmax_backward(&view.probs_w, &grad.probs_w[a])),
        };
        params.backward(&inp.weak, ow, cw, &weak, theta_grad, None);
        let strong = OutputGrad {
            feat: Some(grad.feat_s[a].clone()),
            logits: Some(softmax_backward(&view.probs_s, &grad.probs_s[a])),
        };
        params.backward(&inp.strong, os, cs, &strong, theta_grad, None);
    }
}
