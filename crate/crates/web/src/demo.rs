//! Pure demo logic, independent of the JS bindings so it can be tested
//! natively.

use dac_core::bank::{init_bank, Split};
use dac_core::data::Dataset;
use dac_core::desk::{adapt_config, rotated_moons, source_config};
use dac_core::linalg::argmax;
use dac_core::losses::{emmd_sample, lmmd_sample};
use dac_core::model::{predict_all, train_source, ModelParams};
use dac_core::trainer::{adapt_observed, evaluate};
use dac_core::Result;

/// State after one adaptation epoch (frame 0 is the source model).
#[derive(Debug, Clone)]
pub struct Frame {
    pub epoch: usize,
    pub accuracy: f64,
    pub n_source_like: usize,
    pub params: ModelParams,
    pub source_like: Vec<bool>,
    pub predictions: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MoonsDemo {
    pub source: Dataset,
    pub target: Dataset,
    pub source_params: ModelParams,
    pub source_holdout_accuracy: f64,
    pub frames: Vec<Frame>,
    seed: u64,
}

fn frame(epoch: usize, params: &ModelParams, target: &Dataset, split: &[Split]) -> Result<Frame> {
    let (probs, _) = predict_all(params, target)?;
    let predictions: Vec<usize> = probs.iter_rows().map(argmax).collect();
    let source_like: Vec<bool> = split.iter().map(|s| *s == Split::SourceLike).collect();
    Ok(Frame {
        epoch,
        accuracy: evaluate(params, target, None)?.accuracy,
        n_source_like: source_like.iter().filter(|&&b| b).count(),
        params: params.clone(),
        source_like,
        predictions,
    })
}

impl MoonsDemo {
    /// Generates the task and trains the source model; frame 0 shows the
    /// source model with the initial division.
    pub fn new(n: usize, rotation_deg: f64, seed: u64) -> Result<Self> {
        let task = rotated_moons(n, 0.1, rotation_deg, seed)?;
        let trained = train_source(&source_config(), &task.source, seed)?;
        let bank = init_bank(&trained.params, &task.target, adapt_config(seed).bank_config())?;
        let first = frame(0, &trained.params, &task.target, bank.split())?;
        Ok(MoonsDemo {
            source: task.source,
            target: task.target,
            source_params: trained.params,
            source_holdout_accuracy: trained.holdout_accuracy,
            frames: vec![first],
            seed,
        })
    }

    pub fn source_only_accuracy(&self) -> f64 {
        self.frames[0].accuracy
    }

    /// Runs `epochs` epochs from the source model, replacing earlier frames.
    pub fn run(&mut self, epochs: usize, tau_c: f64) -> Result<usize> {
        let mut cfg = adapt_config(self.seed);
        cfg.epochs = epochs;
        cfg.tau_c = tau_c;
        cfg.batch_size = cfg.batch_size.min(self.target.len());
        self.frames.truncate(1);
        let target = &self.target;
        let mut frames = Vec::new();
        let mut failure = None;
        adapt_observed(&cfg, &self.source_params, target, |snap| {
            if failure.is_none() {
                match frame(snap.record.epoch, snap.params, target, snap.bank.split()) {
                    Ok(f) => frames.push(f),
                    Err(e) => failure = Some(e),
                }
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        self.frames.extend(frames);
        Ok(self.frames.len())
    }

    /// `[xmin, xmax, ymin, ymax]` covering both domains with a margin.
    pub fn bounds(&self) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for ds in [&self.source, &self.target] {
            for r in ds.features().iter_rows() {
                b[0] = b[0].min(r[0]);
                b[1] = b[1].max(r[0]);
                b[2] = b[2].min(r[1]);
                b[3] = b[3].max(r[1]);
            }
        }
        let (mx, my) = (0.1 * (b[1] - b[0]), 0.1 * (b[3] - b[2]));
        [b[0] - mx, b[1] + mx, b[2] - my, b[3] + my]
    }

    /// Class-1 probability on a `res x res` grid over [`bounds`](Self::bounds),
    /// row-major from the bottom-left corner.
    pub fn boundary(&self, frame: usize, res: usize) -> Result<Vec<f64>> {
        let params = &self
            .frames
            .get(frame)
            .ok_or_else(|| dac_core::DacError::InvalidArgument(format!("no frame {}", frame)))?
            .params;
        grid_probabilities(params, self.bounds(), res)
    }
}

pub fn grid_probabilities(params: &ModelParams, bounds: [f64; 4], res: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(res * res);
    let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * (i as f64 + 0.5) / res as f64;
    for j in 0..res {
        for i in 0..res {
            let x = [step(bounds[0], bounds[1], i), step(bounds[2], bounds[3], j)];
            out.push(params.forward_one(&x)?.probs[1]);
        }
    }
    Ok(out)
}

/// Unit vectors in the plane: `f` on the x axis, `q+` at angle `theta_plus`,
/// and `q-` swept from 0 to pi. Returns `(gap, clipped linear MMD,
/// tau * EMMD)` per step, where `gap = f.q- - f.q+`.
pub fn mmd_curves(tau: f64, theta_plus: f64, steps: usize) -> Vec<(f64, f64, f64)> {
    let f = [1.0, 0.0];
    let qp = [theta_plus.cos(), theta_plus.sin()];
    (0..steps)
        .map(|i| {
            let t = std::f64::consts::PI * i as f64 / (steps.max(2) - 1) as f64;
            let qm = [t.cos(), t.sin()];
            let gap = lmmd_sample(&f, &qp, &qm);
            (gap, gap.max(0.0), tau * emmd_sample(&f, &qp, &qm, tau))
        })
        .collect()
}
