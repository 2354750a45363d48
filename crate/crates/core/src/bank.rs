//! Momentum memory bank over all target samples, the source-like /
//! target-specific division, source-like class centroids and cosine
//! neighbor retrieval.

use std::cmp::Ordering;

use crate::data::Dataset;
use crate::error::{DacError, Result};
use crate::linalg::{argmax, dot, mean_of, norm2, normalized, Matrix};
use crate::model::{predict_all, ModelParams};
use crate::pseudo::pseudo_labels_from_outputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    SourceLike,
    TargetSpecific,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::SourceLike => "source_like",
            Split::TargetSpecific => "target_specific",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankConfig {
    /// Weight kept on the stored feature in the momentum update.
    pub momentum: f64,
    /// Fraction of `n` initially marked source-like, spread evenly over classes.
    pub init_fraction: f64,
    pub renormalize_rows: bool,
    pub renormalize_centroids: bool,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            momentum: 0.2,
            init_fraction: 0.05,
            renormalize_rows: true,
            renormalize_centroids: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    config: BankConfig,
    z: Matrix,
    split: Vec<Split>,
    split_class: Vec<usize>,
    centroids: Matrix,
    /// Classes whose centroid was carried over at the last refresh.
    carried: Vec<usize>,
}

impl MemoryBank {
    /// A bank over explicit rows with everything target-specific. Rows are
    /// normalized when `renormalize_rows` is set. `classes` fixes the
    /// centroid count.
    pub fn from_features(features: Matrix, classes: usize, config: BankConfig) -> Result<Self> {
        if features.rows() == 0 || classes == 0 {
            return Err(DacError::invalid("bank needs at least one row and one class"));
        }
        let mut z = features;
        if config.renormalize_rows {
            for i in 0..z.rows() {
                if let Some(u) = normalized(z.row(i)) {
                    z.row_mut(i).copy_from_slice(&u);
                }
            }
        }
        let n = z.rows();
        let b = z.cols();
        Ok(MemoryBank {
            config,
            z,
            split: vec![Split::TargetSpecific; n],
            split_class: vec![0; n],
            centroids: Matrix::zeros(classes, b),
            carried: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.z.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn classes(&self) -> usize {
        self.centroids.rows()
    }

    pub fn config(&self) -> &BankConfig {
        &self.config
    }

    pub fn features(&self) -> &Matrix {
        &self.z
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.z.row(i)
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn split_class(&self) -> &[usize] {
        &self.split_class
    }

    pub fn centroids(&self) -> &Matrix {
        &self.centroids
    }

    pub fn carried_classes(&self) -> &[usize] {
        &self.carried
    }

    pub fn n_source_like(&self) -> usize {
        self.split.iter().filter(|&&s| s == Split::SourceLike).count()
    }

    pub fn n_target_specific(&self) -> usize {
        self.len() - self.n_source_like()
    }

    pub fn target_specific_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.split[i] == Split::TargetSpecific)
            .collect()
    }

    /// Overrides the division directly.
    pub fn set_division(&mut self, split: Vec<Split>, split_class: Vec<usize>) -> Result<()> {
        if split.len() != self.len() || split_class.len() != self.len() {
            return Err(DacError::invalid("division length differs from bank size"));
        }
        if split_class.iter().any(|&c| c >= self.classes()) {
            return Err(DacError::invalid("division class out of range"));
        }
        self.split = split;
        self.split_class = split_class;
        Ok(())
    }

    /// `z_i <- m z_i + (1 - m) f`, renormalized when configured.
    pub fn momentum_update(&mut self, index: usize, f: &[f64]) -> Result<()> {
        if index >= self.len() {
            return Err(DacError::invalid(format!(
                "bank index {} out of range 0..{}",
                index,
                self.len()
            )));
        }
        if f.len() != self.z.cols() {
            return Err(DacError::invalid("feature width differs from bank width"));
        }
        let m = self.config.momentum;
        let row = self.z.row_mut(index);
        for (zi, fi) in row.iter_mut().zip(f) {
            *zi = m * *zi + (1.0 - m) * fi;
        }
        if self.config.renormalize_rows {
            match normalized(row) {
                Some(u) => row.copy_from_slice(&u),
                None => row.copy_from_slice(f),
            }
        }
        Ok(())
    }

    /// Marks the `N = max(1, floor(init_fraction * n / C))` most confident
    /// samples of every class as source-like. A sample chosen by several
    /// classes goes to the one where its probability is higher (ties to the
    /// lower class). Everything else becomes target-specific with its
    /// pseudo-label as class.
    pub fn init_division_top_percent(&mut self, probs: &Matrix, pseudo_labels: &[usize]) -> Result<()> {
        self.check_division_inputs(probs, pseudo_labels)?;
        let n = self.len();
        let c = self.classes();
        let per_class = ((self.config.init_fraction * n as f64 / c as f64).floor() as usize)
            .max(1)
            .min(n);
        let mut claim: Vec<Option<usize>> = vec![None; n];
        for k in 0..c {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                probs
                    .get(b, k)
                    .partial_cmp(&probs.get(a, k))
                    .unwrap_or(Ordering::Equal)
                    .then(a.cmp(&b))
            });
            for &i in &order[..per_class] {
                claim[i] = match claim[i] {
                    Some(prev) if probs.get(i, prev) >= probs.get(i, k) => Some(prev),
                    _ => Some(k),
                };
            }
        }
        for i in 0..n {
            match claim[i] {
                Some(k) => {
                    self.split[i] = Split::SourceLike;
                    self.split_class[i] = k;
                }
                None => {
                    self.split[i] = Split::TargetSpecific;
                    self.split_class[i] = pseudo_labels[i];
                }
            }
        }
        Ok(())
    }

    /// Threshold division over every sample.
    pub fn update_division(&mut self, probs: &Matrix, tau_c: f64, pseudo_labels: &[usize]) -> Result<()> {
        self.check_division_inputs(probs, pseudo_labels)?;
        for i in 0..self.len() {
            self.assign_by_threshold(i, probs.row(i), tau_c, pseudo_labels[i]);
        }
        Ok(())
    }

    /// Threshold division for a single sample: source-like with its
    /// predicted class iff `max_c p[c] >= tau_c`.
    pub fn assign_by_threshold(&mut self, index: usize, probs: &[f64], tau_c: f64, pseudo_label: usize) {
        let k = argmax(probs);
        if probs[k] >= tau_c {
            self.split[index] = Split::SourceLike;
            self.split_class[index] = k;
        } else {
            self.split[index] = Split::TargetSpecific;
            self.split_class[index] = pseudo_label;
        }
    }

    /// Re-labels target-specific samples with fresh pseudo-labels.
    pub fn refresh_target_specific_classes(&mut self, pseudo_labels: &[usize]) {
        for i in 0..self.len() {
            if self.split[i] == Split::TargetSpecific {
                self.split_class[i] = pseudo_labels[i];
            }
        }
    }

    fn check_division_inputs(&self, probs: &Matrix, pseudo_labels: &[usize]) -> Result<()> {
        if probs.rows() != self.len() || probs.cols() != self.classes() {
            return Err(DacError::invalid("probability matrix shape differs from bank"));
        }
        if pseudo_labels.len() != self.len() {
            return Err(DacError::invalid("pseudo-label count differs from bank"));
        }
        Ok(())
    }

    /// Recomputes `w_c` as the mean of source-like rows of class `c`
    /// (renormalized when configured). Classes with no members, or whose
    /// mean vanishes, keep their previous row; they are returned and
    /// remembered in [`carried_classes`](Self::carried_classes).
    pub fn class_centroids(&mut self) -> &[usize] {
        let b = self.z.cols();
        self.carried.clear();
        for k in 0..self.classes() {
            let members = (0..self.len())
                .filter(|&i| self.split[i] == Split::SourceLike && self.split_class[i] == k)
                .map(|i| self.z.row(i));
            let mean = mean_of(members, b);
            let next = match mean {
                Some(m) if self.config.renormalize_centroids => normalized(&m),
                Some(m) if norm2(&m) > 0.0 => Some(m),
                _ => None,
            };
            match next {
                Some(w) => self.centroids.row_mut(k).copy_from_slice(&w),
                None => self.carried.push(k),
            }
        }
        &self.carried
    }

    /// Mean of stored rows for each class within one split; `None` for a
    /// class with no members.
    pub fn class_means(&self, which: Split) -> Vec<Option<Vec<f64>>> {
        let b = self.z.cols();
        let mut sums = vec![vec![0.0; b]; self.classes()];
        let mut counts = vec![0usize; self.classes()];
        for i in 0..self.len() {
            if self.split[i] == which {
                let k = self.split_class[i];
                crate::linalg::axpy(1.0, self.z.row(i), &mut sums[k]);
                counts[k] += 1;
            }
        }
        sums.into_iter()
            .zip(counts)
            .map(|(mut s, c)| {
                if c == 0 {
                    None
                } else {
                    s.iter_mut().for_each(|v| *v /= c as f64);
                    Some(s)
                }
            })
            .collect()
    }

    /// Indices of the `k` rows with the largest cosine to `f`, searched over
    /// every row, in decreasing similarity with ties to the lower index.
    pub fn knn(&self, f: &[f64], k: usize) -> Result<Vec<usize>> {
        if k == 0 || k > self.len() {
            return Err(DacError::invalid(format!("K = {} outside 1..={}", k, self.len())));
        }
        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .map(|i| {
                let z = self.z.row(i);
                let nz = norm2(z);
                let s = if nz > 0.0 { dot(f, z) / nz } else { f64::NEG_INFINITY };
                (s, i)
            })
            .collect();
        let cmp =
            |a: &(f64, usize), b: &(f64, usize)| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1));
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        Ok(scored.into_iter().map(|(_, i)| i).collect())
    }
}

/// Builds the bank from the source model: stored features are the source
/// features of every target sample, the division is the top-fraction
/// initialization, and centroids are computed from it.
pub fn init_bank(source: &ModelParams, dataset: &Dataset, config: BankConfig) -> Result<MemoryBank> {
    let (probs, feats) = predict_all(source, dataset)?;
    let pseudo = pseudo_labels_from_outputs(&probs, &feats, 0)?;
    let mut bank = MemoryBank::from_features(feats, source.dims().classes, config)?;
    bank.init_division_top_percent(&probs, &pseudo.labels)?;
    bank.class_centroids();
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use rand::Rng;

    fn unit_rows(n: usize, b: usize, seed: u64) -> Matrix {
        let mut rng = stream(seed, Stream::Analysis);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..b).map(|_| rng.random_range(-1.0..1.0)).collect();
                normalized(&v).unwrap()
            })
            .collect();
        Matrix::from_rows(&rows).unwrap()
    }

    fn random_probs(n: usize, c: usize, seed: u64) -> Matrix {
        let mut rng = stream(seed, Stream::Analysis);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let l: Vec<f64> = (0..c).map(|_| rng.random_range(-4.0..4.0)).collect();
                crate::linalg::softmax(&l)
            })
            .collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn momentum_update_arithmetic() {
        let z = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let mut bank = MemoryBank::from_features(z, 2, BankConfig::default()).unwrap();
        bank.momentum_update(0, &[0.0, 1.0]).unwrap();
        let s = 0.68f64.sqrt();
        assert!((bank.row(0)[0] - 0.2 / s).abs() < 1e-15);
        assert!((bank.row(0)[1] - 0.8 / s).abs() < 1e-15);

        let z = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let mut keep = MemoryBank::from_features(
            z.clone(),
            2,
            BankConfig {
                momentum: 1.0,
                ..BankConfig::default()
            },
        )
        .unwrap();
        keep.momentum_update(0, &[0.0, 1.0]).unwrap();
        assert_eq!(keep.row(0), &[1.0, 0.0]);
        let mut replace = MemoryBank::from_features(
            z,
            2,
            BankConfig {
                momentum: 0.0,
                ..BankConfig::default()
            },
        )
        .unwrap();
        replace.momentum_update(0, &[0.6, 0.8]).unwrap();
        assert_eq!(replace.row(0), &[0.6, 0.8]);
        assert_eq!(replace.row(1), &[0.0, 1.0]);
        assert!(replace.momentum_update(2, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn top_percent_with_n40_c2_selects_one_per_class() {
        let probs = random_probs(40, 2, 1);
        let mut bank = MemoryBank::from_features(unit_rows(40, 3, 2), 2, BankConfig::default()).unwrap();
        bank.init_division_top_percent(&probs, &vec![1; 40]).unwrap();
        // sort oracle: the argmax of each class column
        let best0 = (0..40)
            .max_by(|&a, &b| probs.get(a, 0).partial_cmp(&probs.get(b, 0)).unwrap().then(b.cmp(&a)))
            .unwrap();
        let best1 = (0..40)
            .max_by(|&a, &b| probs.get(a, 1).partial_cmp(&probs.get(b, 1)).unwrap().then(b.cmp(&a)))
            .unwrap();
        let chosen: Vec<usize> = (0..40).filter(|&i| bank.split()[i] == Split::SourceLike).collect();
        let mut expect = vec![best0, best1];
        expect.sort();
        assert_eq!(chosen, expect);
        assert_eq!(bank.split_class()[best0], 0);
        assert_eq!(bank.split_class()[best1], 1);
        for i in 0..40 {
            if !expect.contains(&i) {
                assert_eq!(bank.split_class()[i], 1);
            }
        }
    }

    #[test]
    fn top_percent_uniform_probs_uses_index_order() {
        let n = 200;
        let probs = Matrix::from_vec(n, 4, vec![0.25; n * 4]).unwrap();
        let mut bank = MemoryBank::from_features(unit_rows(n, 3, 3), 4, BankConfig::default()).unwrap();
        bank.init_division_top_percent(&probs, &vec![0; n]).unwrap();
        // N = floor(0.05 * 200 / 4) = 2; every class claims indices 0 and 1,
        // and the ties keep class 0.
        let chosen: Vec<usize> = (0..n).filter(|&i| bank.split()[i] == Split::SourceLike).collect();
        assert_eq!(chosen, vec![0, 1]);
        assert_eq!(&bank.split_class()[..2], &[0, 0]);
    }

    #[test]
    fn top_percent_grows_with_n() {
        for &(n, expect) in &[(40usize, 2usize), (400, 20), (1000, 50)] {
            let mut probs = Matrix::zeros(n, 2);
            for i in 0..n {
                let p = if i % 2 == 0 { 0.9 } else { 0.1 };
                probs.row_mut(i).copy_from_slice(&[p, 1.0 - p]);
            }
            let mut bank = MemoryBank::from_features(unit_rows(n, 2, 4), 2, BankConfig::default()).unwrap();
            bank.init_division_top_percent(&probs, &vec![0; n]).unwrap();
            assert_eq!(bank.n_source_like(), expect);
        }
    }

    #[test]
    fn threshold_examples() {
        let mut bank = MemoryBank::from_features(unit_rows(2, 2, 5), 2, BankConfig::default()).unwrap();
        let probs = Matrix::from_rows(&[[0.96, 0.04], [0.94, 0.06]]).unwrap();
        bank.update_division(&probs, 0.95, &[1, 1]).unwrap();
        assert_eq!(bank.split(), &[Split::SourceLike, Split::TargetSpecific]);
        assert_eq!(bank.split_class(), &[0, 1]);
        assert_eq!(bank.n_source_like() + bank.n_target_specific(), 2);
    }

    #[test]
    fn centroids_singletons_and_antipodal_carry_over() {
        let z = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]).unwrap();
        let mut bank = MemoryBank::from_features(z, 2, BankConfig::default()).unwrap();
        bank.set_division(
            vec![Split::SourceLike; 2]
                .into_iter()
                .chain([Split::TargetSpecific])
                .collect(),
            vec![0, 1, 0],
        )
        .unwrap();
        assert!(bank.class_centroids().is_empty());
        assert_eq!(bank.centroids().row(0), &[1.0, 0.0]);
        assert_eq!(bank.centroids().row(1), &[0.0, 1.0]);

        bank.set_division(
            vec![Split::SourceLike, Split::TargetSpecific, Split::SourceLike],
            vec![0, 1, 0],
        )
        .unwrap();
        let carried = bank.class_centroids().to_vec();
        assert_eq!(carried, vec![0, 1]);
        assert_eq!(bank.centroids().row(0), &[1.0, 0.0]);
    }

    #[test]
    fn centroids_match_loop_oracle() {
        let z = unit_rows(80, 4, 6);
        let mut bank = MemoryBank::from_features(z.clone(), 3, BankConfig::default()).unwrap();
        let split: Vec<Split> = (0..80)
            .map(|i| {
                if i % 3 == 0 {
                    Split::TargetSpecific
                } else {
                    Split::SourceLike
                }
            })
            .collect();
        let class: Vec<usize> = (0..80).map(|i| (i / 3) % 3).collect();
        bank.set_division(split.clone(), class.clone()).unwrap();
        bank.class_centroids();
        for k in 0..3 {
            let mut s = [0.0; 4];
            let mut cnt = 0.0;
            for i in 0..80 {
                if split[i] == Split::SourceLike && class[i] == k {
                    for j in 0..4 {
                        s[j] += z.get(i, j);
                    }
                    cnt += 1.0;
                }
            }
            let m: Vec<f64> = s.iter().map(|v| v / cnt).collect();
            let u = normalized(&m).unwrap();
            for j in 0..4 {
                assert!((bank.centroids().get(k, j) - u[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn knn_examples() {
        let z = unit_rows(30, 3, 7);
        let bank = MemoryBank::from_features(z.clone(), 2, BankConfig::default()).unwrap();
        assert_eq!(bank.knn(z.row(11), 1).unwrap(), vec![11]);
        let all = bank.knn(z.row(0), 30).unwrap();
        assert_eq!(all.len(), 30);
        for w in all.windows(2) {
            assert!(dot(z.row(0), z.row(w[0])) >= dot(z.row(0), z.row(w[1])));
        }
        assert!(bank.knn(z.row(0), 31).is_err());
    }

    #[test]
    fn knn_matches_full_sort_and_ignores_query_scale() {
        let z = unit_rows(200, 5, 8);
        let bank = MemoryBank::from_features(z.clone(), 2, BankConfig::default()).unwrap();
        let q = unit_rows(10, 5, 9);
        for r in 0..10 {
            let f = q.row(r);
            let mut oracle: Vec<usize> = (0..200).collect();
            oracle.sort_by(|&a, &b| dot(f, z.row(b)).partial_cmp(&dot(f, z.row(a))).unwrap().then(a.cmp(&b)));
            assert_eq!(bank.knn(f, 7).unwrap(), oracle[..7].to_vec());
            let scaled: Vec<f64> = f.iter().map(|v| v * 3.5).collect();
            assert_eq!(bank.knn(&scaled, 7).unwrap(), oracle[..7].to_vec());
        }
    }
}
