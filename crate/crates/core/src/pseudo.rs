//! Nearest-centroid pseudo-labels, refreshed once per epoch: probability
//! weighted centroids, cosine assignment, one hard-label refinement, and a
//! second assignment.

use crate::data::Dataset;
use crate::error::{DacError, Result};
use crate::linalg::{axpy, cosine, dot, norm2, Matrix};
use crate::model::{predict_all, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelState {
    pub centroids: Matrix,
    pub labels: Vec<usize>,
    pub epoch: usize,
}

/// `c_k = sum_i p_i[k] f_i / sum_i p_i[k]`. A class with zero total weight
/// gets the global feature mean.
pub fn init_centroids(probs: &Matrix, feats: &Matrix) -> Result<Matrix> {
    if probs.rows() != feats.rows() || probs.rows() == 0 {
        return Err(DacError::invalid(format!(
            "probs has {} rows, feats has {}",
            probs.rows(),
            feats.rows()
        )));
    }
    let (n, c, b) = (probs.rows(), probs.cols(), feats.cols());
    let mut centroids = Matrix::zeros(c, b);
    let mut weight = vec![0.0; c];
    for i in 0..n {
        let f = feats.row(i);
        for k in 0..c {
            let p = probs.get(i, k);
            weight[k] += p;
            axpy(p, f, centroids.row_mut(k));
        }
    }
    let global = crate::linalg::mean_of(feats.iter_rows(), b).expect("non-empty");
    for k in 0..c {
        if weight[k] > 0.0 {
            centroids.row_mut(k).iter_mut().for_each(|v| *v /= weight[k]);
        } else {
            centroids.row_mut(k).copy_from_slice(&global);
        }
    }
    Ok(centroids)
}

/// `argmax_k cos(f_i, c_k)` with ties to the lowest index. Zero centroid rows
/// are never chosen.
pub fn assign_labels(feats: &Matrix, centroids: &Matrix) -> Result<Vec<usize>> {
    if feats.cols() != centroids.cols() {
        return Err(DacError::invalid("feature and centroid widths differ"));
    }
    let norms: Vec<f64> = centroids.iter_rows().map(norm2).collect();
    if norms.iter().all(|&n| n == 0.0) {
        return Err(DacError::invalid("all centroids are zero"));
    }
    Ok(feats
        .iter_rows()
        .map(|f| {
            let nf = norm2(f);
            let mut best = usize::MAX;
            let mut best_sim = f64::NEG_INFINITY;
            for (k, c) in centroids.iter_rows().enumerate() {
                if norms[k] == 0.0 {
                    continue;
                }
                let sim = if nf == 0.0 { 0.0 } else { dot(f, c) / (nf * norms[k]) };
                if best == usize::MAX || sim > best_sim {
                    best = k;
                    best_sim = sim;
                }
            }
            best
        })
        .collect())
}

/// Class-conditional means under hard labels; a class with no members keeps
/// its row from `previous`.
pub fn refine_centroids(feats: &Matrix, labels: &[usize], previous: &Matrix) -> Result<Matrix> {
    if labels.len() != feats.rows() {
        return Err(DacError::invalid("label count differs from feature rows"));
    }
    let c = previous.rows();
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(DacError::invalid(format!("label {} outside 0..{}", bad, c)));
    }
    let mut out = previous.clone();
    for k in 0..c {
        let members = labels
            .iter()
            .zip(feats.iter_rows())
            .filter(|(&l, _)| l == k)
            .map(|(_, f)| f);
        if let Some(mean) = crate::linalg::mean_of(members, feats.cols()) {
            out.row_mut(k).copy_from_slice(&mean);
        }
    }
    Ok(out)
}

/// Full refresh from precomputed model outputs.
pub fn pseudo_labels_from_outputs(probs: &Matrix, feats: &Matrix, epoch: usize) -> Result<PseudoLabelState> {
    let initial = init_centroids(probs, feats)?;
    let first = assign_labels(feats, &initial)?;
    let centroids = refine_centroids(feats, &first, &initial)?;
    let labels = assign_labels(feats, &centroids)?;
    Ok(PseudoLabelState {
        centroids,
        labels,
        epoch,
    })
}

pub fn update_pseudo_labels(
    params: &ModelParams,
    dataset: &Dataset,
    previous: Option<&PseudoLabelState>,
) -> Result<PseudoLabelState> {
    let (probs, feats) = predict_all(params, dataset)?;
    let epoch = previous.map_or(0, |p| p.epoch + 1);
    pseudo_labels_from_outputs(&probs, &feats, epoch)
}

/// Cosine of a sample to every centroid; zero rows give `-inf`.
pub fn cosine_table(f: &[f64], centroids: &Matrix) -> Vec<f64> {
    centroids
        .iter_rows()
        .map(|c| cosine(f, c).unwrap_or(f64::NEG_INFINITY))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = stream(seed, Stream::Analysis);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn random_probs(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut m = random_matrix(rows, cols, seed);
        for i in 0..rows {
            let p = crate::linalg::softmax(&m.row(i).iter().map(|v| 3.0 * v).collect::<Vec<_>>());
            m.row_mut(i).copy_from_slice(&p);
        }
        m
    }

    #[test]
    fn one_hot_weights_pick_samples() {
        let feats = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let probs = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let c = init_centroids(&probs, &feats).unwrap();
        assert_eq!(c, feats);
    }

    #[test]
    fn uniform_weights_give_mean() {
        let feats = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let probs = Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap();
        let c = init_centroids(&probs, &feats).unwrap();
        assert_eq!(c.row(0), &[0.5, 0.5]);
        assert_eq!(c.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn zero_weight_class_falls_back_to_global_mean() {
        let feats = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let probs = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]]).unwrap();
        let c = init_centroids(&probs, &feats).unwrap();
        assert_eq!(c.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn init_centroids_shape_mismatch() {
        assert!(init_centroids(&Matrix::zeros(3, 2), &Matrix::zeros(4, 2)).is_err());
    }

    #[test]
    fn init_centroids_match_double_loop() {
        let feats = random_matrix(50, 3, 1);
        let probs = random_probs(50, 3, 2);
        let c = init_centroids(&probs, &feats).unwrap();
        for k in 0..3 {
            for j in 0..3 {
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..50 {
                    num += probs.get(i, k) * feats.get(i, j);
                    den += probs.get(i, k);
                }
                assert!((c.get(k, j) - num / den).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn assign_basic_and_scale_invariant() {
        let feats = Matrix::from_rows(&[[1.0, 0.0], [0.2, 0.9], [-1.0, 0.1]]).unwrap();
        let cent = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let l = assign_labels(&feats, &cent).unwrap();
        assert_eq!(l[0], 0);
        let scaled = Matrix::from_rows(&[[7.0, 0.0], [0.0, 0.01]]).unwrap();
        assert_eq!(assign_labels(&feats, &scaled).unwrap(), l);
    }

    #[test]
    fn assign_matches_brute_force_cosine_table() {
        let feats = random_matrix(200, 4, 3);
        let cent = random_matrix(5, 4, 4);
        let labels = assign_labels(&feats, &cent).unwrap();
        for i in 0..200 {
            let table = cosine_table(feats.row(i), &cent);
            let mut best = 0;
            for k in 1..5 {
                if table[k] > table[best] {
                    best = k;
                }
            }
            assert_eq!(labels[i], best);
        }
    }

    #[test]
    fn zero_centroid_is_never_chosen() {
        let feats = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        let cent = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(assign_labels(&feats, &cent).unwrap(), vec![1, 1]);
        assert!(assign_labels(&feats, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn refine_singletons_and_duplicates() {
        let feats = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let prev = Matrix::zeros(3, 2);
        assert_eq!(refine_centroids(&feats, &[0, 1, 2], &prev).unwrap(), feats);
        let dup = Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap();
        let prev = Matrix::from_rows(&[[9.0, 9.0], [8.0, 8.0]]).unwrap();
        let out = refine_centroids(&dup, &[1, 1], &prev).unwrap();
        assert_eq!(out.row(1), &[0.5, 0.5]);
        assert_eq!(out.row(0), &[9.0, 9.0]);
    }

    #[test]
    fn refine_matches_loop_oracle() {
        let feats = random_matrix(60, 3, 5);
        let labels: Vec<usize> = (0..60).map(|i| (i * 7 + 3) % 4).collect();
        let out = refine_centroids(&feats, &labels, &Matrix::zeros(4, 3)).unwrap();
        for k in 0..4 {
            let mut sum = [0.0; 3];
            let mut count = 0.0;
            for i in 0..60 {
                if labels[i] == k {
                    for j in 0..3 {
                        sum[j] += feats.get(i, j);
                    }
                    count += 1.0;
                }
            }
            for j in 0..3 {
                assert!((out.get(k, j) - sum[j] / count).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn orthonormal_identity_case() {
        let feats = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let probs = feats.clone();
        let st = pseudo_labels_from_outputs(&probs, &feats, 0).unwrap();
        assert_eq!(st.labels, vec![0, 1, 2]);
    }
}
