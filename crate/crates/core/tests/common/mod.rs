#![allow(dead_code)]

use dac_core::bank::{BankConfig, MemoryBank, Split};
use dac_core::linalg::Matrix;
use dac_core::losses::{term_objective, BatchInput, LossConfig, Term};
use dac_core::model::{ModelDims, ModelParams};
use dac_core::rng::{substream, Stream};
use rand::Rng;

/// Random model, bank and batch for gradient checks. The bank rows come from
/// the model itself so similarities are in a realistic range; every class
/// has both source-like and target-specific members.
pub struct GradFixture {
    pub params: ModelParams,
    pub bank: MemoryBank,
    pub inputs: Vec<BatchInput>,
}

pub fn grad_fixture(seed: u64, batch: usize) -> GradFixture {
    let dims = ModelDims::new(3, 24, 12, 3).unwrap();
    let params = ModelParams::init(dims, seed);
    let mut rng = substream(seed, Stream::Analysis, 77);
    let n = 40;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        rows.push(params.forward_one(&x).unwrap().feat);
    }
    let mut bank = MemoryBank::from_features(Matrix::from_rows(&rows).unwrap(), 3, BankConfig::default()).unwrap();
    let split: Vec<Split> = (0..n)
        .map(|i| {
            if i < 6 || rng.random::<f64>() < 0.5 {
                if i % 2 == 0 {
                    Split::SourceLike
                } else {
                    Split::TargetSpecific
                }
            } else if rng.random::<bool>() {
                Split::SourceLike
            } else {
                Split::TargetSpecific
            }
        })
        .collect();
    let class: Vec<usize> = (0..n)
        .map(|i| if i < 6 { (i / 2) % 3 } else { rng.random_range(0..3) })
        .collect();
    bank.set_division(split, class).unwrap();
    bank.class_centroids();
    let mut idx: Vec<usize> = (0..n).collect();
    for k in 0..batch {
        let j = rng.random_range(k..n);
        idx.swap(k, j);
    }
    let inputs = idx[..batch]
        .iter()
        .map(|&index| {
            let weak: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let strong: Vec<f64> = weak.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
            BatchInput {
                index,
                weak,
                strong,
                pseudo_label: rng.random_range(0..3),
            }
        })
        .collect();
    GradFixture { params, bank, inputs }
}

pub struct GradCheck {
    pub relative_error: f64,
    pub grad_norm: f64,
}

/// Central finite differences over every extractor parameter versus the
/// analytic gradient; relative error is `||a - n|| / max(||a||, ||n||)`.
pub fn check_term(fx: &GradFixture, cfg: &LossConfig, term: Term, eps: f64) -> GradCheck {
    let (_, analytic) = term_objective(&fx.params, &fx.inputs, &fx.bank, cfg, term).unwrap();
    let mut numeric = vec![0.0; analytic.len()];
    let mut p = fx.params.clone();
    for k in 0..analytic.len() {
        let orig = p.extractor.theta()[k];
        p.extractor.theta_mut()[k] = orig + eps;
        let (up, _) = term_objective(&p, &fx.inputs, &fx.bank, cfg, term).unwrap();
        p.extractor.theta_mut()[k] = orig - eps;
        let (down, _) = term_objective(&p, &fx.inputs, &fx.bank, cfg, term).unwrap();
        p.extractor.theta_mut()[k] = orig;
        numeric[k] = (up - down) / (2.0 * eps);
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    let scale = norm(&analytic).max(norm(&numeric));
    GradCheck {
        relative_error: if scale == 0.0 { 0.0 } else { norm(&diff) / scale },
        grad_norm: scale,
    }
}

/// Flat pass/fail line printed by the acceptance suite.
pub fn report(id: &str, pass: bool, detail: impl std::fmt::Display) {
    println!("[{}] {} :: {}", if pass { "PASS" } else { "FAIL" }, id, detail);
}
