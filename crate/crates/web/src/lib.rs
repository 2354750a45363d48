//! wasm-bindgen surface of the demo. Arrays cross the boundary flat:
//! points as `x0, y0, x1, y1, ...`, grids row-major.

pub mod demo;

use wasm_bindgen::prelude::*;

use demo::MoonsDemo;

fn js(e: dac_core::DacError) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    inner: MoonsDemo,
}

#[wasm_bindgen]
impl Demo {
    /// Generates source and rotated target moons and trains the source model.
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, rotation_deg: f64, seed: u32) -> Result<Demo, JsError> {
        Ok(Demo {
            inner: MoonsDemo::new(n, rotation_deg, seed as u64).map_err(js)?,
        })
    }

    pub fn source_points(&self) -> Vec<f64> {
        self.inner.source.features().as_slice().to_vec()
    }

    pub fn target_points(&self) -> Vec<f64> {
        self.inner.target.features().as_slice().to_vec()
    }

    pub fn target_labels(&self) -> Vec<u32> {
        self.inner
            .target
            .labels()
            .unwrap_or(&[])
            .iter()
            .map(|&l| l as u32)
            .collect()
    }

    pub fn source_only_accuracy(&self) -> f64 {
        self.inner.source_only_accuracy()
    }

    pub fn source_holdout_accuracy(&self) -> f64 {
        self.inner.source_holdout_accuracy
    }

    /// Adapts for `epochs` epochs and returns the number of frames.
    pub fn run(&mut self, epochs: usize, tau_c: f64) -> Result<usize, JsError> {
        self.inner.run(epochs, tau_c).map_err(js)
    }

    pub fn frame_count(&self) -> usize {
        self.inner.frames.len()
    }

    pub fn frame_accuracy(&self, frame: usize) -> f64 {
        self.inner.frames.get(frame).map_or(f64::NAN, |f| f.accuracy)
    }

    pub fn frame_source_like(&self, frame: usize) -> Vec<u8> {
        self.inner
            .frames
            .get(frame)
            .map_or(Vec::new(), |f| f.source_like.iter().map(|&b| b as u8).collect())
    }

    pub fn frame_predictions(&self, frame: usize) -> Vec<u32> {
        self.inner
            .frames
            .get(frame)
            .map_or(Vec::new(), |f| f.predictions.iter().map(|&p| p as u32).collect())
    }

    pub fn frame_boundary(&self, frame: usize, res: usize) -> Result<Vec<f64>, JsError> {
        self.inner.boundary(frame, res).map_err(js)
    }

    pub fn bounds(&self) -> Vec<f64> {
        self.inner.bounds().to_vec()
    }
}

/// Flattened `(gap, clipped LMMD, tau * EMMD)` triples.
#[wasm_bindgen]
pub fn mmd_curves(tau: f64, theta_plus: f64, steps: usize) -> Vec<f64> {
    demo::mmd_curves(tau, theta_plus, steps)
        .into_iter()
        .flat_map(|(a, b, c)| [a, b, c])
        .collect()
}
