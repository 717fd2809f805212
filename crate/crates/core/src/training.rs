//! The training loop: per-epoch masking, diversity profiles, rollouts,
//! backpropagation, gradient clipping and Adam under a warmup + cosine
//! learning-rate schedule.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SequenceBatch;
use crate::error::{dim_err, input_err, Error, Result};
use crate::model::{
    adaptive_loss, fixed_alpha_loss, mask_batch, training_rollout, AlternatorParams, Cell,
    Gating, MaskedBatch, Mode, ModelConfig,
};
use crate::ndmath::{Matrix, Tape};
use crate::vendi::{median_bandwidth, DiversityProfile, Kernel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// Latent targets are the feature sequences of the data.
    Supervised,
    Unsupervised,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_init: f64,
    pub lr_min: f64,
    pub warmup_epochs: usize,
    /// Probability of keeping an observation when masking.
    pub p_mask: f64,
    pub seed: u64,
    pub mode: TrainMode,
    pub adaptive_alpha: bool,
    pub masking: bool,
    /// Global gradient-norm limit; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Gate value of the non-adaptive model; `None` means `0.5 (1 - sz2)`.
    pub alpha_const: Option<f64>,
    /// Replace the RBF bandwidth by the median window distance of the
    /// training data.
    pub median_bandwidth: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 32,
            lr_init: 0.01,
            lr_min: 1e-3,
            warmup_epochs: 5,
            p_mask: 0.9,
            seed: 0,
            mode: TrainMode::Supervised,
            adaptive_alpha: true,
            masking: true,
            grad_clip: Some(5.0),
            alpha_const: None,
            median_bandwidth: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be >= 1".into());
        }
        if !(0.0 <= self.lr_min && self.lr_min <= self.lr_init && self.lr_init.is_finite()) {
            return bad(format!(
                "need 0 <= lr_min <= lr_init, got {} and {}",
                self.lr_min, self.lr_init
            ));
        }
        if self.warmup_epochs >= self.epochs {
            return bad(format!(
                "warmup_epochs ({}) must be below epochs ({})",
                self.warmup_epochs, self.epochs
            ));
        }
        if !(0.0..=1.0).contains(&self.p_mask) {
            return bad(format!("p_mask must lie in [0, 1], got {}", self.p_mask));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad(format!("grad_clip must be > 0, got {c}"));
            }
        }
        Ok(())
    }

    /// Keep-probability actually used; masking off keeps everything.
    pub fn effective_p_mask(&self) -> f64 {
        if self.masking {
            self.p_mask
        } else {
            1.0
        }
    }

    pub fn resolved_alpha_const(&self, sigma_z2: f64) -> f64 {
        self.alpha_const.unwrap_or(0.5 * (1.0 - sigma_z2))
    }
}

/// Learning rate of epoch `epoch` (0-based): a linear ramp up to `lr_init`
/// over the warmup epochs, then cosine annealing down towards `lr_min`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let w = cfg.warmup_epochs;
    if epoch < w {
        return cfg.lr_init * (epoch + 1) as f64 / w as f64;
    }
    let span = (cfg.epochs - w) as f64;
    let phase = std::f64::consts::PI * (epoch - w) as f64 / span;
    // written as a decrease from lr_init so the first cosine epoch is exact
    cfg.lr_init - 0.5 * (cfg.lr_init - cfg.lr_min) * (1.0 - phase.cos())
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &[Matrix]) -> Self {
        let zeros: Vec<Matrix> = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient is
/// not finite.
pub fn adam_step(
    params: &mut [Matrix],
    grads: &[Matrix],
    names: &[String],
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return dim_err("parameter, gradient and state counts differ");
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return dim_err(format!("shape mismatch for parameter {}", name_of(names, i)));
        }
        if !g.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite gradient for parameter {}",
                name_of(names, i)
            )));
        }
    }
    state.step += 1;
    let bc1 = 1.0 - ADAM_BETA1.powf(state.step as f64);
    let bc2 = 1.0 - ADAM_BETA2.powf(state.step as f64);
    for (i, p) in params.iter_mut().enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (k, (x, g)) in p.data_mut().iter_mut().zip(grads[i].data()).enumerate() {
            m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g;
            v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            *x -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

fn name_of(names: &[String], i: usize) -> String {
    names.get(i).cloned().unwrap_or_else(|| format!("#{i}"))
}

/// Rescales `grads` so their joint Frobenius norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Matrix], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Matrix::frobenius_norm_sq).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale_in_place(k));
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sequence loss over the epoch.
    pub loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: AlternatorParams,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn losses(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.loss).collect()
    }
}

/// Independent random streams derived from the run seed.
pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_MASK: u64 = 2;
const STREAM_LATENT: u64 = 3;

/// Fresh parameters for `data`, with the gate bandwidth resolved.
pub fn init_params(
    data: &SequenceBatch,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<AlternatorParams> {
    cfg.validate()?;
    model_cfg.validate()?;
    if data.n() == 0 || data.steps() < 2 {
        return input_err("training needs at least one sequence of two or more steps");
    }
    let latent_dim = match cfg.mode {
        TrainMode::Supervised => data.feature_dim().ok_or_else(|| {
            Error::Input("supervised training needs feature sequences".into())
        })?,
        TrainMode::Unsupervised => model_cfg.latent_dim,
    };
    let mut rng = stream(cfg.seed, STREAM_INIT);
    let mut params = AlternatorParams::init(model_cfg, data.obs_dim(), latent_dim, &mut rng)?;
    let stat = median_bandwidth(&data.x, model_cfg.vendi.window)?;
    params.bandwidth_statistic = Some(stat);
    if cfg.median_bandwidth && matches!(model_cfg.vendi.kernel, Kernel::Rbf { .. }) {
        params.vendi = params.vendi.with_bandwidth(stat);
    }
    if !cfg.adaptive_alpha {
        let alpha = cfg.resolved_alpha_const(params.sigma_z2);
        if !(0.0..1.0 - params.sigma_z2).contains(&alpha) {
            return Err(Error::Config(format!(
                "alpha_const must lie in [0, 1 - sigma_z2), got {alpha}"
            )));
        }
        params.fixed_alpha = Some(alpha);
    }
    Ok(params)
}

/// Loss and gradients of one masked batch, gradients in
/// [`AlternatorParams::flat_tensors`] order.
pub fn batch_gradients(
    params: &AlternatorParams,
    batch: &MaskedBatch,
    features: Option<&[Matrix]>,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let mut cell = Cell::new(params, &mut tape, true);
    let mode = match (cfg.mode, features) {
        (TrainMode::Supervised, Some(z)) => Mode::Supervised(z),
        (TrainMode::Supervised, None) => {
            return input_err("supervised training needs feature sequences")
        }
        (TrainMode::Unsupervised, _) => Mode::Unsupervised,
    };
    let loss = if let Some(alpha) = params.fixed_alpha {
        let rollout =
            training_rollout(&mut tape, &mut cell, batch, Gating::Fixed(alpha), mode, rng)?;
        fixed_alpha_loss(&mut tape, batch, &rollout, params, alpha)?
    } else {
        let profile = DiversityProfile::compute(&batch.x_tilde, &params.vendi)?;
        let rollout =
            training_rollout(&mut tape, &mut cell, batch, Gating::Adaptive(&profile), mode, rng)?;
        adaptive_loss(&mut tape, batch, &rollout, params)?
    };
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    let grads = tape.backward(loss)?;
    Ok((value, cell.bound.gradients(&grads)))
}

/// Trains fresh parameters on `data`.
pub fn train(data: &SequenceBatch, cfg: &TrainConfig, model_cfg: &ModelConfig) -> Result<TrainOutcome> {
    let params = init_params(data, cfg, model_cfg)?;
    train_from(params, data, cfg)
}

/// Continues training from `params`. The returned history has one record
/// per epoch. A non-finite epoch loss stops training with
/// [`Error::NonFiniteLoss`] carrying the parameters of the last good epoch.
pub fn train_from(
    mut params: AlternatorParams,
    data: &SequenceBatch,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    params.validate()?;
    if cfg.adaptive_alpha != params.fixed_alpha.is_none() {
        return Err(Error::Config(
            "adaptive_alpha disagrees with the gate kind of the parameters".into(),
        ));
    }
    if data.obs_dim() != params.obs_dim {
        return dim_err(format!(
            "data has {} observation columns, model expects {}",
            data.obs_dim(),
            params.obs_dim
        ));
    }
    let features = match cfg.mode {
        TrainMode::Supervised => {
            let z = data.z.as_deref().ok_or_else(|| {
                Error::Input("supervised training needs feature sequences".into())
            })?;
            if data.feature_dim() != Some(params.latent_dim) {
                return dim_err("feature width does not match the latent width");
            }
            Some(z)
        }
        TrainMode::Unsupervised => None,
    };
    let names = params.tensor_names();
    let mut tensors = params.flat_tensors();
    let mut state = OptimizerState::new(&tensors);
    let mut shuffle_rng = stream(cfg.seed, STREAM_SHUFFLE);
    let mut mask_rng = stream(cfg.seed, STREAM_MASK);
    let mut latent_rng = stream(cfg.seed, STREAM_LATENT);
    let p_keep = cfg.effective_p_mask();

    let mut order: Vec<usize> = (0..data.n()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        order.shuffle(&mut shuffle_rng);
        let last_good = params.clone();
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let x: Vec<Matrix> = idx.iter().map(|&i| data.x[i].clone()).collect();
            let z: Option<Vec<Matrix>> =
                features.map(|z| idx.iter().map(|&i| z[i].clone()).collect());
            let batch = mask_batch(&x, p_keep, &mut mask_rng)?;
            let (loss, mut grads) =
                batch_gradients(&params, &batch, z.as_deref(), cfg, &mut latent_rng)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    last_good: Box::new(last_good),
                });
            }
            total += loss * idx.len() as f64;
            if let Some(c) = cfg.grad_clip {
                let norm = clip_global_norm(&mut grads, c);
                debug!("epoch {epoch}: gradient norm {norm:.4}");
            }
            adam_step(&mut tensors, &grads, &names, &mut state, lr)?;
            params.set_flat_tensors(&tensors)?;
        }
        let loss = total / data.n() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                last_good: Box::new(last_good),
            });
        }
        if epoch % 50 == 0 || epoch + 1 == cfg.epochs {
            info!("epoch {epoch}: loss {loss:.6} lr {lr:.6} w {:.4} b {:.4}", params.w, params.b);
        }
        history.push(EpochRecord { epoch, loss, lr });
    }
    Ok(TrainOutcome { params, history })
}

/// Loss history as CSV `epoch,loss,lr`.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,loss,lr\n");
    for r in history {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.loss, r.lr));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(5, &cfg), 0.01);
        assert!((lr_at(0, &cfg) - 0.002).abs() < 1e-18);
        let last = lr_at(499, &cfg);
        let step = (0.01 - 1e-3) * (1.0 - (std::f64::consts::PI * 494.0 / 495.0).cos()) / 2.0;
        assert!((last - 1e-3).abs() <= step);
        assert!((lr_at(4, &cfg) - lr_at(5, &cfg)).abs() < 1e-12);
    }

    #[test]
    fn first_adam_step() {
        let mut p = vec![Matrix::scalar(1.0)];
        let mut st = OptimizerState::new(&p);
        adam_step(&mut p, &[Matrix::scalar(1.0)], &["a".into()], &mut st, 0.01).unwrap();
        let expected = 1.0 - 0.01 / (1.0 + 1e-8);
        assert!((p[0].data()[0] - expected).abs() < 1e-15);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = vec![Matrix::filled(2, 2, 0.3)];
        let mut st = OptimizerState::new(&p);
        st.m[0] = Matrix::filled(2, 2, 1.0);
        adam_step(&mut p, &[Matrix::zeros(2, 2)], &["a".into()], &mut st, 0.1).unwrap();
        assert!(st.m[0].data().iter().all(|&v| (v - 0.9).abs() < 1e-15));
        // the decayed first moment still moves the parameter
        assert!(p[0].data()[0] < 0.3);

        let mut q = vec![Matrix::filled(2, 2, 0.3)];
        let mut fresh = OptimizerState::new(&q);
        adam_step(&mut q, &[Matrix::zeros(2, 2)], &["a".into()], &mut fresh, 0.1).unwrap();
        assert_eq!(q[0], Matrix::filled(2, 2, 0.3));
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut p = vec![Matrix::scalar(0.0), Matrix::scalar(0.0)];
        let mut st = OptimizerState::new(&p);
        let err = adam_step(
            &mut p,
            &[Matrix::scalar(0.0), Matrix::from_raw(1, 1, vec![f64::NAN])],
            &["phi.0.weight".into(), "w".into()],
            &mut st,
            0.01,
        )
        .unwrap_err();
        assert!(err.to_string().contains("w"));
        assert_eq!(st.step, 0);
    }

    #[test]
    fn clip_rescales() {
        let mut g = vec![Matrix::scalar(3.0), Matrix::scalar(4.0)];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn config_checks() {
        let mut cfg = TrainConfig::default();
        cfg.warmup_epochs = 500;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.lr_min = 0.1;
        assert!(cfg.validate().is_err());
    }
}
