//! Measurable ingredients of the target-error bound: consistency error under
//! the transformation ball, pseudo-labeler disagreement, split error rates,
//! a proxy divergence between the two splits of each class, and the
//! confidence threshold implied by an estimated Lipschitz constant.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::augment::{sample_ball, AugmentPolicy};
use crate::bank::{MemoryBank, Split};
use crate::data::{format_f64, Dataset};
use crate::error::{DacError, Result};
use crate::linalg::{argmax, dot, l1_distance, sigmoid, Matrix};
use crate::model::{predict_all, ModelParams};
use crate::pseudo::PseudoLabelState;
use crate::rng::{stream, substream, Stream};

/// Probe budget for [`proxy_divergence`].
pub const PROBE_EPOCHS: usize = 200;
pub const PROBE_LR: f64 = 0.1;
/// Minimum members of each split for a class to get a proxy divergence.
pub const PROBE_MIN_PER_SPLIT: usize = 4;

/// Fraction of the listed samples whose prediction flips for at least one
/// of `n_aug` points drawn from the ball around them. Each sample draws from
/// its own sub-stream, so restricting to a subset sees the same draws as the
/// full estimate.
pub fn consistency_error_subset(
    params: &ModelParams,
    dataset: &Dataset,
    indices: &[usize],
    policy: &AugmentPolicy,
    n_aug: usize,
    seed: u64,
) -> Result<Option<f64>> {
    if n_aug == 0 {
        return Err(DacError::invalid("n_aug must be >= 1"));
    }
    if !(policy.radius_r >= 0.0) {
        return Err(DacError::invalid("radius_r must be >= 0"));
    }
    if indices.is_empty() {
        return Ok(None);
    }
    let mut flips = 0usize;
    for &i in indices {
        if i >= dataset.len() {
            return Err(DacError::invalid(format!("sample index {} out of range", i)));
        }
        let x = dataset.sample(i);
        let base = params.forward_one(x)?.prediction();
        let mut rng = substream(seed, Stream::Analysis, i as u64);
        for p in sample_ball(x, policy, &mut rng, n_aug) {
            if params.forward_one(&p)?.prediction() != base {
                flips += 1;
                break;
            }
        }
    }
    Ok(Some(flips as f64 / indices.len() as f64))
}

pub fn consistency_error(
    params: &ModelParams,
    dataset: &Dataset,
    policy: &AugmentPolicy,
    n_aug: usize,
    seed: u64,
) -> Result<f64> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    Ok(consistency_error_subset(params, dataset, &all, policy, n_aug, seed)?.unwrap_or(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitErrors {
    /// `P[h(x) != h_pl(x)]` over the whole dataset.
    pub disagreement: f64,
    /// Pseudo-label error on the source-like split.
    pub eps_ds_pl: Option<f64>,
    /// Model error on the source-like split.
    pub eps_ds: Option<f64>,
    /// Model error on the target-specific split.
    pub eps_do: Option<f64>,
    /// Model error on the whole target set.
    pub eps_dt: f64,
}

fn rate(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Error rates against ground truth given hard predictions, pseudo-labels
/// and a division.
pub fn split_errors(preds: &[usize], pseudo: &[usize], labels: &[usize], split: &[Split]) -> Result<SplitErrors> {
    let n = preds.len();
    if n == 0 || pseudo.len() != n || labels.len() != n || split.len() != n {
        return Err(DacError::invalid(
            "predictions, pseudo-labels, labels and split must share a non-zero length",
        ));
    }
    let mut disagree = 0;
    let mut wrong = 0;
    let (mut s_n, mut s_pl_wrong, mut s_wrong, mut o_n, mut o_wrong) = (0, 0, 0, 0, 0);
    for i in 0..n {
        disagree += (preds[i] != pseudo[i]) as usize;
        let miss = (preds[i] != labels[i]) as usize;
        wrong += miss;
        match split[i] {
            Split::SourceLike => {
                s_n += 1;
                s_wrong += miss;
                s_pl_wrong += (pseudo[i] != labels[i]) as usize;
            }
            Split::TargetSpecific => {
                o_n += 1;
                o_wrong += miss;
            }
        }
    }
    Ok(SplitErrors {
        disagreement: disagree as f64 / n as f64,
        eps_ds_pl: rate(s_pl_wrong, s_n),
        eps_ds: rate(s_wrong, s_n),
        eps_do: rate(o_wrong, o_n),
        eps_dt: wrong as f64 / n as f64,
    })
}

pub fn disagreement_and_split_errors(
    params: &ModelParams,
    pseudo: &PseudoLabelState,
    dataset: &Dataset,
    bank: &MemoryBank,
) -> Result<SplitErrors> {
    let labels = dataset
        .labels()
        .ok_or_else(|| DacError::invalid("split errors need a labeled dataset"))?;
    if bank.len() != dataset.len() {
        return Err(DacError::invalid("bank size differs from dataset size"));
    }
    let (probs, _) = predict_all(params, dataset)?;
    let preds: Vec<usize> = probs.iter_rows().map(argmax).collect();
    split_errors(&preds, &pseudo.labels, labels, bank.split())
}

/// Logistic probe separating group `a` (label 0) from group `b` (label 1),
/// trained by full-batch gradient descent on a class-balanced loss, scored
/// by balanced held-out error. Each group is halved with the same seeded
/// permutation stream; returns `2 (1 - 2 err)` clipped to `[0, 2]`.
pub fn probe_divergence(a: &[&[f64]], b: &[&[f64]], seed: u64) -> Result<Option<f64>> {
    if a.len() < PROBE_MIN_PER_SPLIT || b.len() < PROBE_MIN_PER_SPLIT {
        return Ok(None);
    }
    let dim = a[0].len();
    if a.iter().chain(b).any(|r| r.len() != dim) {
        return Err(DacError::invalid("probe rows differ in width"));
    }
    let halve = |group: &[&[f64]]| {
        let mut order: Vec<usize> = (0..group.len()).collect();
        order.shuffle(&mut stream(seed, Stream::Analysis));
        let cut = group.len() / 2;
        (order[..cut].to_vec(), order[cut..].to_vec())
    };
    let (a_train, a_test) = halve(a);
    let (b_train, b_test) = halve(b);
    let mut w = vec![0.0; dim];
    let mut bias = 0.0;
    for _ in 0..PROBE_EPOCHS {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (rows, idx, y) in [(a, &a_train, 0.0), (b, &b_train, 1.0)] {
            let scale = 0.5 / idx.len() as f64;
            for &i in idx.iter() {
                let r = (sigmoid(dot(&w, rows[i]) + bias) - y) * scale;
                crate::linalg::axpy(r, rows[i], &mut gw);
                gb += r;
            }
        }
        crate::linalg::axpy(-PROBE_LR, &gw, &mut w);
        bias -= PROBE_LR * gb;
    }
    let wrong = |rows: &[&[f64]], idx: &[usize], positive: bool| {
        idx.iter()
            .filter(|&&i| (dot(&w, rows[i]) + bias > 0.0) != positive)
            .count() as f64
            / idx.len() as f64
    };
    let err = 0.5 * (wrong(a, &a_test, false) + wrong(b, &b_test, true));
    Ok(Some((2.0 * (1.0 - 2.0 * err)).clamp(0.0, 2.0)))
}

/// Proxy divergence between the source-like and target-specific bank rows
/// of class `class`; `None` when either side has fewer than
/// [`PROBE_MIN_PER_SPLIT`] members.
pub fn proxy_divergence(bank: &MemoryBank, class: usize, seed: u64) -> Result<Option<f64>> {
    if class >= bank.classes() {
        return Err(DacError::invalid(format!("class {} out of range", class)));
    }
    let mut sl = Vec::new();
    let mut ts = Vec::new();
    for i in 0..bank.len() {
        if bank.split_class()[i] == class {
            match bank.split()[i] {
                Split::SourceLike => sl.push(bank.row(i)),
                Split::TargetSpecific => ts.push(bank.row(i)),
            }
        }
    }
    probe_divergence(&sl, &ts, seed ^ class as u64)
}

/// `max ||g(x) - g(x')||_1 / ||x - x'||_1` over `n_pairs` random pairs of
/// rows, skipping pairs closer than `1e-9` in L1. Errors when every pair is
/// degenerate.
pub fn lipschitz_of<G>(points: &Matrix, map: G, n_pairs: usize, seed: u64) -> Result<f64>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if n_pairs == 0 {
        return Err(DacError::invalid("n_pairs must be >= 1"));
    }
    if points.rows() < 2 {
        return Err(DacError::invalid("need at least two points"));
    }
    let mut rng = stream(seed, Stream::Analysis);
    let mut best: Option<f64> = None;
    for _ in 0..n_pairs {
        let i = rng.random_range(0..points.rows());
        let j = rng.random_range(0..points.rows());
        let dx = l1_distance(points.row(i), points.row(j));
        if dx < 1e-9 {
            continue;
        }
        let ratio = l1_distance(&map(points.row(i))?, &map(points.row(j))?) / dx;
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best.ok_or_else(|| DacError::invalid("every sampled pair was degenerate"))
}

pub fn tau_claim(lipschitz_hat: f64, radius_r: f64) -> f64 {
    (lipschitz_hat * radius_r / 4.0 + 0.5).min(1.0 - 1e-6)
}

/// Lipschitz estimate of the softmax output map and the implied threshold
/// `min(1 - 1e-6, L r / 4 + 1/2)`.
pub fn lipschitz_and_threshold(
    params: &ModelParams,
    dataset: &Dataset,
    radius_r: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let l = lipschitz_of(dataset.features(), |x| Ok(params.forward_one(x)?.probs), n_pairs, seed)?;
    Ok((l, tau_claim(l, radius_r)))
}

/// Samples whose top predicted probability reaches `tau_c`.
pub fn confident_indices(probs: &Matrix, tau_c: f64) -> Vec<usize> {
    (0..probs.rows())
        .filter(|&i| probs.get(i, argmax(probs.row(i))) >= tau_c)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    pub n_aug: usize,
    pub n_pairs: usize,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            n_aug: 50,
            n_pairs: 5000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub consistency_error: f64,
    /// Over the source-like split of the bank; `None` when it is empty.
    pub consistency_error_source_like: Option<f64>,
    pub disagreement: f64,
    pub eps_ds_pl: Option<f64>,
    pub eps_ds: Option<f64>,
    pub eps_do: Option<f64>,
    pub eps_dt: f64,
    /// One entry per class, `None` where the probe was skipped.
    pub proxy_div: Vec<Option<f64>>,
    pub lipschitz_hat: f64,
    pub tau_claim: f64,
}

pub fn bound_report(
    params: &ModelParams,
    pseudo: &PseudoLabelState,
    dataset: &Dataset,
    bank: &MemoryBank,
    policy: &AugmentPolicy,
    config: &AnalysisConfig,
) -> Result<BoundReport> {
    let errors = disagreement_and_split_errors(params, pseudo, dataset, bank)?;
    let consistency = consistency_error(params, dataset, policy, config.n_aug, config.seed)?;
    let sl: Vec<usize> = (0..bank.len())
        .filter(|&i| bank.split()[i] == Split::SourceLike)
        .collect();
    let consistency_sl = consistency_error_subset(params, dataset, &sl, policy, config.n_aug, config.seed)?;
    let proxy_div = (0..bank.classes())
        .map(|c| proxy_divergence(bank, c, config.seed))
        .collect::<Result<Vec<_>>>()?;
    let (lipschitz_hat, tau) = lipschitz_and_threshold(params, dataset, policy.radius_r, config.n_pairs, config.seed)?;
    Ok(BoundReport {
        consistency_error: consistency,
        consistency_error_source_like: consistency_sl,
        disagreement: errors.disagreement,
        eps_ds_pl: errors.eps_ds_pl,
        eps_ds: errors.eps_ds,
        eps_do: errors.eps_do,
        eps_dt: errors.eps_dt,
        proxy_div,
        lipschitz_hat,
        tau_claim: tau,
    })
}

impl BoundReport {
    /// `(key, value)` pairs in output order; undefined values are `None`.
    pub fn entries(&self) -> Vec<(String, Option<f64>)> {
        let mut out = vec![
            ("consistency_error".to_string(), Some(self.consistency_error)),
            (
                "consistency_error_source_like".to_string(),
                self.consistency_error_source_like,
            ),
            ("disagreement".to_string(), Some(self.disagreement)),
            ("eps_ds_pl".to_string(), self.eps_ds_pl),
            ("eps_ds".to_string(), self.eps_ds),
            ("eps_do".to_string(), self.eps_do),
            ("eps_dt".to_string(), Some(self.eps_dt)),
        ];
        for (c, v) in self.proxy_div.iter().enumerate() {
            out.push((format!("proxy_div_{}", c), *v));
        }
        out.push(("lipschitz_hat".to_string(), Some(self.lipschitz_hat)));
        out.push(("tau_claim".to_string(), Some(self.tau_claim)));
        out
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("key,value\n");
        for (k, v) in self.entries() {
            s.push_str(&k);
            s.push(',');
            if let Some(v) = v {
                s.push_str(&format_f64(v));
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_gauss_blobs;
    use crate::model::ModelDims;

    fn blobs() -> Dataset {
        gen_gauss_blobs(60, 3, 2, &[0.0, 0.0], 0.3, 1).unwrap()
    }

    #[test]
    fn zero_radius_identity_policy_is_consistent() {
        let ds = blobs();
        let p = ModelParams::init(ModelDims::new(2, 8, 4, 3).unwrap(), 0);
        let e = consistency_error(&p, &ds, &AugmentPolicy::identity(0.0), 5, 0).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn zero_model_never_flips() {
        let ds = blobs();
        let p = ModelParams::zeros(ModelDims::new(2, 8, 4, 3).unwrap());
        let e = consistency_error(&p, &ds, &AugmentPolicy::default(), 20, 0).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn zero_model_threshold_is_half() {
        let ds = blobs();
        let p = ModelParams::zeros(ModelDims::new(2, 8, 4, 3).unwrap());
        let (l, t) = lipschitz_and_threshold(&p, &ds, 0.5, 100, 0).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(t, 0.5);
    }

    #[test]
    fn degenerate_pairs_error() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(lipschitz_of(&m, |x| Ok(x.to_vec()), 50, 0).is_err());
    }

    #[test]
    fn six_sample_split_errors() {
        let preds = [0, 1, 1, 0, 2, 2];
        let pseudo = [0, 1, 0, 0, 1, 2];
        let labels = [0, 1, 1, 1, 2, 0];
        use Split::*;
        let split = [
            SourceLike,
            SourceLike,
            TargetSpecific,
            SourceLike,
            TargetSpecific,
            TargetSpecific,
        ];
        let e = split_errors(&preds, &pseudo, &labels, &split).unwrap();
        assert_eq!(e.disagreement, 2.0 / 6.0);
        assert_eq!(e.eps_ds_pl, Some(1.0 / 3.0));
        assert_eq!(e.eps_ds, Some(1.0 / 3.0));
        assert_eq!(e.eps_do, Some(1.0 / 3.0));
        assert_eq!(e.eps_dt, 2.0 / 6.0);
    }

    #[test]
    fn identical_groups_have_zero_proxy() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64).sin(), (i as f64).cos()]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        assert_eq!(probe_divergence(&refs, &refs, 3).unwrap(), Some(0.0));
    }

    #[test]
    fn separated_groups_have_full_proxy() {
        let a: Vec<Vec<f64>> = (0..20).map(|i| vec![-1.0 - 0.01 * i as f64, 0.3]).collect();
        let b: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0 + 0.01 * i as f64, 0.3]).collect();
        let ra: Vec<&[f64]> = a.iter().map(|r| r.as_slice()).collect();
        let rb: Vec<&[f64]> = b.iter().map(|r| r.as_slice()).collect();
        assert_eq!(probe_divergence(&ra, &rb, 3).unwrap(), Some(2.0));
    }

    #[test]
    fn small_groups_are_skipped() {
        let a = vec![vec![0.0]; 3];
        let b = vec![vec![1.0]; 10];
        let ra: Vec<&[f64]> = a.iter().map(|r| r.as_slice()).collect();
        let rb: Vec<&[f64]> = b.iter().map(|r| r.as_slice()).collect();
        assert_eq!(probe_divergence(&ra, &rb, 0).unwrap(), None);
    }
}
