//! WebAssembly bindings for the demo page in `www/`.
//!
//! Each exported operation has a plain Rust counterpart so it can be tested
//! natively.

use alternator::data::{generate_noisy_sine, metrics, NoisySinePreset, SequenceBatch};
use alternator::generation::decode;
use alternator::model::{adaptive_alpha, AlternatorParams, ModelConfig};
use alternator::ndmath::Matrix;
use alternator::training::{train, TrainConfig};
use alternator::vendi::{diversity_profile, median_bandwidth, VendiConfig};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// A noisy-sine realization and its diversity profile.
#[wasm_bindgen]
pub struct Profile {
    signal: Vec<f64>,
    vs: Vec<f64>,
    burst: Vec<u8>,
    bandwidth: f64,
}

#[wasm_bindgen]
impl Profile {
    /// Mean over the observed channels, one value per step.
    #[wasm_bindgen(getter)]
    pub fn signal(&self) -> Vec<f64> {
        self.signal.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn vs(&self) -> Vec<f64> {
        self.vs.clone()
    }

    /// 1 for steps inside a burst window.
    #[wasm_bindgen(getter)]
    pub fn burst(&self) -> Vec<u8> {
        self.burst.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }
}

pub fn noisy_sine_profile_native(seed: u64, window: usize, q: f64) -> alternator::Result<Profile> {
    let preset = NoisySinePreset::default();
    let data = generate_noisy_sine(&preset, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let cfg = VendiConfig { window, q, ..VendiConfig::default() };
    let h = median_bandwidth(&data.x, window)?;
    let x = &data.x[0];
    let vs = diversity_profile(x, &cfg.with_bandwidth(h))?;
    let signal = (0..x.rows())
        .map(|t| x.row(t).iter().sum::<f64>() / x.cols() as f64)
        .collect();
    let burst = (0..x.rows()).map(|t| u8::from(preset.in_burst(t))).collect();
    Ok(Profile { signal, vs, burst, bandwidth: h })
}

#[wasm_bindgen]
pub fn noisy_sine_profile(seed: u64, window: usize, q: f64) -> Result<Profile, JsError> {
    noisy_sine_profile_native(seed, window, q).map_err(js_err)
}

/// Gate value at each score in `vs` for slope `w` and offset `b`.
pub fn gate_curve_native(w: f64, b: f64, sigma_z2: f64, vs: &[f64]) -> alternator::Result<Vec<f64>> {
    let cfg = ModelConfig { sigma_z2, ..ModelConfig::default() };
    let mut params = AlternatorParams::init(&cfg, 1, 1, &mut ChaCha8Rng::seed_from_u64(0))?;
    params.w = w;
    params.b = b;
    Ok(vs.iter().map(|&v| adaptive_alpha(v, &params)).collect())
}

#[wasm_bindgen]
pub fn gate_curve(w: f64, b: f64, sigma_z2: f64, vs: Vec<f64>) -> Result<Vec<f64>, JsError> {
    gate_curve_native(w, b, sigma_z2, &vs).map_err(js_err)
}

/// Result of fitting a small supervised model.
#[wasm_bindgen]
pub struct Fit {
    truth: Vec<f64>,
    decoded: Vec<f64>,
    losses: Vec<f64>,
    cc: f64,
}

#[wasm_bindgen]
impl Fit {
    /// Latent of the first sequence.
    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Vec<f64> {
        self.truth.clone()
    }

    /// Decoded latent of the first sequence.
    #[wasm_bindgen(getter)]
    pub fn decoded(&self) -> Vec<f64> {
        self.decoded.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn losses(&self) -> Vec<f64> {
        self.losses.clone()
    }

    /// Correlation between decoded and true latents over all sequences.
    #[wasm_bindgen(getter)]
    pub fn cc(&self) -> f64 {
        self.cc
    }
}

/// Six sequences of a slow sine latent seen through three noisy channels.
fn toy_data(seed: u64) -> alternator::Result<SequenceBatch> {
    use rand_chacha::rand_core::RngCore;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = move || rng.next_u64() as f64 / u64::MAX as f64 - 0.5;
    let steps = 80;
    let (mut xs, mut zs) = (Vec::new(), Vec::new());
    for i in 0..6 {
        let phase = i as f64;
        let z: Vec<f64> = (0..steps).map(|t| (0.12 * t as f64 + phase).sin()).collect();
        let mut x = Matrix::zeros(steps, 3);
        for (t, &v) in z.iter().enumerate() {
            for (k, gain) in [1.0, -0.8, 0.5].into_iter().enumerate() {
                x.set(t, k, gain * v + 0.2 * unit());
            }
        }
        xs.push(x);
        zs.push(Matrix::from_vec(steps, 1, z)?);
    }
    SequenceBatch::new(xs, Some(zs), 1.0)
}

pub fn train_toy_native(seed: u64, epochs: usize) -> alternator::Result<Fit> {
    let data = toy_data(seed)?;
    let cfg = TrainConfig {
        epochs,
        warmup_epochs: 1.min(epochs.saturating_sub(1)),
        batch_size: 6,
        seed,
        ..TrainConfig::default()
    };
    let out = train(&data, &cfg, &ModelConfig::default())?;
    let z_hat = decode(&out.params, &data.x)?;
    let truth = data.z.as_ref().expect("toy data has features");
    Ok(Fit {
        truth: truth[0].column(0),
        decoded: z_hat[0].column(0),
        losses: out.losses(),
        cc: metrics(&z_hat, truth)?.cc,
    })
}

#[wasm_bindgen]
pub fn train_toy(seed: u64, epochs: usize) -> Result<Fit, JsError> {
    train_toy_native(seed, epochs).map_err(js_err)
}
