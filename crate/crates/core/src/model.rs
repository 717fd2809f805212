//! The gated latent-variable sequence model.
//!
//! Observations are generated from the previous latent,
//! `mu_x = sqrt(1 - sx2) * f(z[t-1])`, and the latent is updated by a gate
//! that mixes the current (masked) observation with the latent history,
//! `mu_z = sqrt(a) * g(x~[t]) + sqrt(1 - a - sz2) * z[t-1]`. The gate weight
//! `a = sigmoid(w * VS[t] + b) * (1 - sz2 - eps0)` is driven by the temporal
//! Vendi Score of the masked sequence.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, input_err, Error, Result};
use crate::ndmath::{sigmoid, Gradients, Matrix, Tape, Var};
use crate::network::{AttentionMemory, BoundNetwork, Network, NetworkSpec};
use crate::vendi::{DiversityProfile, VendiConfig};

/// Hyperparameters that fix the model's shape and noise levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Ignored in supervised training, where the feature width decides.
    pub latent_dim: usize,
    pub sigma_x2: f64,
    pub sigma_z2: f64,
    pub eps0: f64,
    pub network: NetworkSpec,
    pub vendi: VendiConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            sigma_x2: 0.04,
            sigma_z2: 0.01,
            eps0: 1e-3,
            network: NetworkSpec::default(),
            vendi: VendiConfig::default(),
        }
    }
}

fn check_variances(sigma_x2: f64, sigma_z2: f64, eps0: f64) -> Result<()> {
    if !(sigma_x2 > 0.0 && sigma_x2 < 1.0) {
        return Err(Error::Config(format!("sigma_x2 must lie in (0, 1), got {sigma_x2}")));
    }
    if !(sigma_z2 > 0.0 && sigma_z2 < 1.0) {
        return Err(Error::Config(format!("sigma_z2 must lie in (0, 1), got {sigma_z2}")));
    }
    if !(eps0 > 0.0 && sigma_z2 + eps0 < 1.0) {
        return Err(Error::Config(format!(
            "eps0 must be > 0 with sigma_z2 + eps0 < 1, got {eps0}"
        )));
    }
    Ok(())
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        check_variances(self.sigma_x2, self.sigma_z2, self.eps0)?;
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be >= 1".into()));
        }
        self.network.validate()?;
        self.vendi.validate()
    }
}

/// All learnable weights plus the fixed variances and gate settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlternatorParams {
    pub obs_dim: usize,
    pub latent_dim: usize,
    /// `f`: latent -> observation.
    pub theta: Network,
    /// `g`: observation -> latent.
    pub phi: Network,
    pub w: f64,
    pub b: f64,
    pub sigma_x2: f64,
    pub sigma_z2: f64,
    pub eps0: f64,
    /// Kernel settings for the gate, bandwidth already resolved.
    pub vendi: VendiConfig,
    /// Median window distance measured on the training set, when available.
    pub bandwidth_statistic: Option<f64>,
    /// Constant gate of a model trained without the adaptive gate.
    #[serde(default)]
    pub fixed_alpha: Option<f64>,
}

impl AlternatorParams {
    pub fn init(
        cfg: &ModelConfig,
        obs_dim: usize,
        latent_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        if obs_dim == 0 || latent_dim == 0 {
            return input_err("observation and latent dimensions must be >= 1");
        }
        Ok(Self {
            obs_dim,
            latent_dim,
            theta: Network::init(cfg.network, latent_dim, obs_dim, rng)?,
            phi: Network::init(cfg.network, obs_dim, latent_dim, rng)?,
            w: 0.0,
            b: 0.0,
            sigma_x2: cfg.sigma_x2,
            sigma_z2: cfg.sigma_z2,
            eps0: cfg.eps0,
            vendi: cfg.vendi,
            bandwidth_statistic: None,
            fixed_alpha: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_variances(self.sigma_x2, self.sigma_z2, self.eps0)?;
        if self.theta.input_dim != self.latent_dim
            || self.theta.output_dim != self.obs_dim
            || self.phi.input_dim != self.obs_dim
            || self.phi.output_dim != self.latent_dim
        {
            return dim_err("network shapes disagree with obs_dim / latent_dim");
        }
        if !(self.w.is_finite() && self.b.is_finite()) {
            return Err(Error::Numerical("gate parameters are not finite".into()));
        }
        if self.flat_tensors().iter().any(|m| !m.is_finite()) {
            return Err(Error::Numerical("network weights are not finite".into()));
        }
        if let Some(a) = self.fixed_alpha {
            check_alpha(a, self)?;
        }
        self.vendi.validate()
    }

    /// Largest gate value, `1 - sz2 - eps0`.
    pub fn gate_bound(&self) -> f64 {
        1.0 - self.sigma_z2 - self.eps0
    }

    /// Coefficient on the `x` residual in the loss, `Dz sz2 / (Dx sx2)`.
    pub fn obs_weight(&self) -> f64 {
        (self.latent_dim as f64 * self.sigma_z2) / (self.obs_dim as f64 * self.sigma_x2)
    }

    /// Every learnable tensor in a fixed order: `theta`, `phi`, `w`, `b`.
    pub fn flat_tensors(&self) -> Vec<Matrix> {
        let mut out: Vec<Matrix> = self.theta.tensors().into_iter().cloned().collect();
        out.extend(self.phi.tensors().into_iter().cloned());
        out.push(Matrix::scalar(self.w));
        out.push(Matrix::scalar(self.b));
        out
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = self.theta.tensor_names("theta");
        out.extend(self.phi.tensor_names("phi"));
        out.push("w".into());
        out.push("b".into());
        out
    }

    pub fn set_flat_tensors(&mut self, tensors: &[Matrix]) -> Result<()> {
        let expected = self.flat_tensors();
        if tensors.len() != expected.len()
            || tensors.iter().zip(&expected).any(|(a, b)| a.shape() != b.shape())
        {
            return dim_err("tensor list does not match the parameter layout");
        }
        let mut it = tensors.iter();
        for m in self.theta.tensors_mut().into_iter().chain(self.phi.tensors_mut()) {
            *m = it.next().expect("length checked").clone();
        }
        self.w = it.next().expect("length checked").data()[0];
        self.b = it.next().expect("length checked").data()[0];
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape, learnable: bool) -> BoundParams {
        let theta = self.theta.bind(tape, learnable);
        let phi = self.phi.bind(tape, learnable);
        let mut leaf = |v: f64| {
            if learnable {
                tape.param(Matrix::scalar(v))
            } else {
                tape.constant(Matrix::scalar(v))
            }
        };
        let w = leaf(self.w);
        let b = leaf(self.b);
        BoundParams { theta, phi, w, b }
    }
}

/// Tape handles for every learnable tensor of [`AlternatorParams`].
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub theta: BoundNetwork,
    pub phi: BoundNetwork,
    pub w: Var,
    pub b: Var,
}

impl BoundParams {
    pub fn vars(&self) -> Vec<Var> {
        let mut out = self.theta.vars.clone();
        out.extend(&self.phi.vars);
        out.push(self.w);
        out.push(self.b);
        out
    }

    /// Gradients in [`AlternatorParams::flat_tensors`] order.
    pub fn gradients(&self, grads: &Gradients) -> Vec<Matrix> {
        self.vars()
            .into_iter()
            .map(|v| grads.wrt(v).expect("bound params are learnable"))
            .collect()
    }
}

/// Gate value for one temporal score.
pub fn adaptive_alpha(vs_t: f64, params: &AlternatorParams) -> f64 {
    sigmoid(params.w * vs_t + params.b) * params.gate_bound()
}

fn check_alpha(alpha: f64, params: &AlternatorParams) -> Result<()> {
    if !(0.0..1.0 - params.sigma_z2).contains(&alpha) {
        return Err(Error::Contract(format!(
            "gate value {alpha} outside [0, {})",
            1.0 - params.sigma_z2
        )));
    }
    Ok(())
}

/// One-step evaluation of the model's transition and emission on a tape.
/// Holds the attention memories of both networks between steps.
pub struct Cell<'p> {
    pub params: &'p AlternatorParams,
    pub bound: BoundParams,
    f_memory: AttentionMemory,
    g_memory: AttentionMemory,
}

impl<'p> Cell<'p> {
    pub fn new(params: &'p AlternatorParams, tape: &mut Tape, learnable: bool) -> Self {
        Self {
            params,
            bound: params.bind(tape, learnable),
            f_memory: AttentionMemory::default(),
            g_memory: AttentionMemory::default(),
        }
    }

    /// `sqrt(1 - sx2) * f(z_prev)`
    pub fn observation_mean(&mut self, tape: &mut Tape, z_prev: Var) -> Result<Var> {
        let f = self.bound.theta.forward(tape, z_prev, &mut self.f_memory)?;
        tape.scale(f, (1.0 - self.params.sigma_x2).sqrt())
    }

    /// Gate values (`n x 1`) for the temporal scores of `n` sequences.
    pub fn adaptive_alpha(&mut self, tape: &mut Tape, vs: &[f64]) -> Result<Var> {
        let vs = tape.constant(Matrix::column_vector(vs)?);
        let wv = tape.mul(vs, self.bound.w)?;
        let logits = tape.add(wv, self.bound.b)?;
        let s = tape.sigmoid(logits)?;
        tape.scale(s, self.params.gate_bound())
    }

    /// Gate values of the model's own kind: constant if it was trained with
    /// a fixed gate, otherwise from the scores `vs`.
    pub fn gate(&mut self, tape: &mut Tape, vs: &[f64]) -> Result<Var> {
        match self.params.fixed_alpha {
            Some(a) => self.fixed_alpha(tape, vs.len(), a),
            None => self.adaptive_alpha(tape, vs),
        }
    }

    pub fn fixed_alpha(&self, tape: &mut Tape, n: usize, alpha: f64) -> Result<Var> {
        check_alpha(alpha, self.params)?;
        Ok(tape.constant(Matrix::filled(n, 1, alpha)))
    }

    /// `sqrt(a) * g(x~) + sqrt(1 - a - sz2) * z_prev`
    pub fn latent_mean(
        &mut self,
        tape: &mut Tape,
        x_tilde: Var,
        z_prev: Var,
        alpha: Var,
    ) -> Result<Var> {
        let g = self.bound.phi.forward(tape, x_tilde, &mut self.g_memory)?;
        let sa = tape.sqrt(alpha)?;
        let neg = tape.scale(alpha, -1.0)?;
        let rest = tape.add_const(neg, 1.0 - self.params.sigma_z2)?;
        let sr = tape.sqrt(rest)?;
        let a = tape.mul(sa, g)?;
        let b = tape.mul(sr, z_prev)?;
        tape.add(a, b)
    }
}

/// Latent mean for a single sequence element, outside any training graph.
pub fn latent_mean(
    x_tilde_t: &[f64],
    z_prev: &[f64],
    alpha_t: f64,
    params: &AlternatorParams,
) -> Result<Vec<f64>> {
    check_alpha(alpha_t, params)?;
    if x_tilde_t.len() != params.obs_dim || z_prev.len() != params.latent_dim {
        return dim_err("latent_mean input widths do not match the model");
    }
    let mut tape = Tape::new();
    let mut cell = Cell::new(params, &mut tape, false);
    let x = tape.constant(Matrix::row_vector(x_tilde_t)?);
    let z = tape.constant(Matrix::row_vector(z_prev)?);
    let a = tape.constant(Matrix::scalar(alpha_t));
    let mu = cell.latent_mean(&mut tape, x, z, a)?;
    Ok(tape.value(mu).data().to_vec())
}

/// Observation mean for a single latent, outside any training graph.
pub fn observation_mean(z_prev: &[f64], params: &AlternatorParams) -> Result<Vec<f64>> {
    if z_prev.len() != params.latent_dim {
        return dim_err("observation_mean input width does not match the model");
    }
    let mut tape = Tape::new();
    let mut cell = Cell::new(params, &mut tape, false);
    let z = tape.constant(Matrix::row_vector(z_prev)?);
    let mu = cell.observation_mean(&mut tape, z)?;
    Ok(tape.value(mu).data().to_vec())
}

/// Observations with a Bernoulli keep-mask applied.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedBatch {
    /// Unmasked observations, one `T x Dx` matrix per sequence.
    pub x: Vec<Matrix>,
    /// Observations with dropped steps replaced by the null vector.
    pub x_tilde: Vec<Matrix>,
    /// `true` keeps the observation.
    pub mask: Vec<Vec<bool>>,
}

impl MaskedBatch {
    /// Batch with every observation kept.
    pub fn unmasked(x: Vec<Matrix>) -> Self {
        let mask = x.iter().map(|s| vec![true; s.rows()]).collect();
        Self {
            x_tilde: x.clone(),
            x,
            mask,
        }
    }

    /// Batch with an explicit keep-mask.
    pub fn with_mask(x: Vec<Matrix>, mask: Vec<Vec<bool>>) -> Result<Self> {
        if mask.len() != x.len() || mask.iter().zip(&x).any(|(m, s)| m.len() != s.rows()) {
            return dim_err("mask shape does not match the observations");
        }
        let x_tilde = x
            .iter()
            .zip(&mask)
            .map(|(s, m)| {
                let mut out = s.clone();
                for (t, &keep) in m.iter().enumerate() {
                    if !keep {
                        out.row_mut(t).iter_mut().for_each(|v| *v = 0.0);
                    }
                }
                out
            })
            .collect();
        Ok(Self { x, x_tilde, mask })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn steps(&self) -> usize {
        self.x.first().map_or(0, Matrix::rows)
    }

    pub fn keep_fraction(&self) -> f64 {
        let total: usize = self.mask.iter().map(Vec::len).sum();
        let kept: usize = self.mask.iter().flatten().filter(|&&k| k).count();
        kept as f64 / total.max(1) as f64
    }
}

/// Draws an independent `Bernoulli(p_keep)` keep-mask per sequence step.
pub fn mask_batch(x: &[Matrix], p_keep: f64, rng: &mut impl Rng) -> Result<MaskedBatch> {
    if !(0.0..=1.0).contains(&p_keep) {
        return input_err(format!("keep probability {p_keep} outside [0, 1]"));
    }
    let mask = x
        .iter()
        .map(|s| (0..s.rows()).map(|_| rng.random_bool(p_keep)).collect())
        .collect();
    MaskedBatch::with_mask(x.to_vec(), mask)
}

/// Row `t` of every sequence stacked into an `n x d` matrix.
pub fn step_rows(seqs: &[Matrix], t: usize) -> Matrix {
    let d = seqs.first().map_or(0, Matrix::cols);
    let mut data = Vec::with_capacity(seqs.len() * d);
    for s in seqs {
        data.extend_from_slice(s.row(t));
    }
    Matrix::from_raw(seqs.len(), d, data)
}

#[derive(Clone, Copy, Debug)]
pub enum Gating<'a> {
    /// Gate from the temporal scores of the masked sequences.
    Adaptive(&'a DiversityProfile),
    /// Constant gate, the baseline model.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug)]
pub enum Mode<'a> {
    /// Latents are the given features (`T x Dz` per sequence), used both as
    /// loss targets and as the history of the next step.
    Supervised(&'a [Matrix]),
    /// Latent targets are reparameterized draws around the detached mean.
    Unsupervised,
}

/// Tape handles for one training pass. Every entry is `n x _`, one row per
/// sequence.
#[derive(Clone, Debug)]
pub struct Rollout {
    /// `T + 1` entries; index 0 is the prior draw, then the loss targets.
    pub z: Vec<Var>,
    /// `T + 1` entries; the latent carried into the next step.
    pub state: Vec<Var>,
    pub mu_z: Vec<Var>,
    pub mu_x: Vec<Var>,
    /// `n x 1` gate values per step.
    pub alpha: Vec<Var>,
}

/// Plain values of a [`Rollout`].
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutValues {
    pub z: Vec<Matrix>,
    pub state: Vec<Matrix>,
    pub mu_z: Vec<Matrix>,
    pub mu_x: Vec<Matrix>,
    pub alpha: Vec<Matrix>,
}

impl Rollout {
    pub fn values(&self, tape: &Tape) -> RolloutValues {
        let grab = |vs: &[Var]| vs.iter().map(|&v| tape.value(v).clone()).collect();
        RolloutValues {
            z: grab(&self.z),
            state: grab(&self.state),
            mu_z: grab(&self.mu_z),
            mu_x: grab(&self.mu_x),
            alpha: grab(&self.alpha),
        }
    }

    pub fn steps(&self) -> usize {
        self.mu_z.len()
    }
}

fn standard_normal(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_raw(rows, cols, data)
}

/// Runs the model over a masked batch, recording everything needed for the
/// loss on `tape`.
pub fn training_rollout(
    tape: &mut Tape,
    cell: &mut Cell<'_>,
    batch: &MaskedBatch,
    gating: Gating<'_>,
    mode: Mode<'_>,
    rng: &mut impl Rng,
) -> Result<Rollout> {
    let params = cell.params;
    let n = batch.n();
    let steps = batch.steps();
    if n == 0 {
        return input_err("empty batch");
    }
    if batch.x.iter().any(|s| s.rows() != steps || s.cols() != params.obs_dim) {
        return dim_err("batch sequences must be T x obs_dim with a common T");
    }
    if let Gating::Adaptive(p) = gating {
        if p.n() != n || p.steps() != steps {
            return dim_err("diversity profile does not match the batch");
        }
    }
    if let Mode::Supervised(z) = mode {
        if z.len() != n
            || z.iter().any(|s| s.rows() != steps || s.cols() != params.latent_dim)
        {
            return dim_err("features must be T x latent_dim per sequence");
        }
    }

    let z0 = tape.constant(standard_normal(n, params.latent_dim, rng));
    let mut out = Rollout {
        z: vec![z0],
        state: vec![z0],
        mu_z: Vec::with_capacity(steps),
        mu_x: Vec::with_capacity(steps),
        alpha: Vec::with_capacity(steps),
    };
    let sigma_z = params.sigma_z2.sqrt();
    let mut state = z0;
    for t in 0..steps {
        let mu_x = cell.observation_mean(tape, state)?;
        let alpha = match gating {
            Gating::Adaptive(p) => cell.adaptive_alpha(tape, &p.at(t))?,
            Gating::Fixed(a) => cell.fixed_alpha(tape, n, a)?,
        };
        let x_tilde = tape.constant(step_rows(&batch.x_tilde, t));
        let mu_z = cell.latent_mean(tape, x_tilde, state, alpha)?;
        let (target, next) = match mode {
            Mode::Supervised(z) => {
                let given = tape.constant(step_rows(z, t));
                (given, given)
            }
            Mode::Unsupervised => {
                // same draw twice: a detached copy as the loss target and a
                // differentiable copy carried into the next step
                let noise = tape.constant(standard_normal(n, params.latent_dim, rng));
                let scaled = tape.scale(noise, sigma_z)?;
                let detached = tape.stop_gradient(mu_z)?;
                let target = tape.add(detached, scaled)?;
                let carried = tape.add(mu_z, scaled)?;
                (target, carried)
            }
        };
        state = next;
        out.z.push(target);
        out.state.push(state);
        out.mu_z.push(mu_z);
        out.mu_x.push(mu_x);
        out.alpha.push(alpha);
    }
    Ok(out)
}

fn loss_impl(
    tape: &mut Tape,
    batch: &MaskedBatch,
    rollout: &Rollout,
    params: &AlternatorParams,
    weight_by_alpha: bool,
) -> Result<Var> {
    if rollout.steps() != batch.steps() {
        return dim_err("rollout length does not match the batch");
    }
    let c = params.obs_weight();
    let mut total: Option<Var> = None;
    for t in 0..rollout.steps() {
        let dz = tape.sub(rollout.z[t + 1], rollout.mu_z[t])?;
        let dz2 = tape.square(dz)?;
        let z_term = tape.sum(dz2)?;

        let x = tape.constant(step_rows(&batch.x, t));
        let dx = tape.sub(x, rollout.mu_x[t])?;
        let dx2 = tape.square(dx)?;
        let per_row = tape.row_sum(dx2)?;
        let weighted = if weight_by_alpha {
            tape.mul(rollout.alpha[t], per_row)?
        } else {
            per_row
        };
        let x_sum = tape.sum(weighted)?;
        let x_term = tape.scale(x_sum, c)?;

        let step = tape.add(z_term, x_term)?;
        total = Some(match total {
            None => step,
            Some(acc) => tape.add(acc, step)?,
        });
    }
    let total = match total {
        Some(v) => v,
        None => tape.constant(Matrix::scalar(0.0)),
    };
    tape.scale(total, 1.0 / batch.n() as f64)
}

/// Gate-weighted loss: per sequence, `sum_t |z - mu_z|^2 + a_t c |x - mu_x|^2`
/// with `x` unmasked, averaged over sequences.
pub fn adaptive_loss(
    tape: &mut Tape,
    batch: &MaskedBatch,
    rollout: &Rollout,
    params: &AlternatorParams,
) -> Result<Var> {
    loss_impl(tape, batch, rollout, params, true)
}

/// Baseline loss for a rollout built with [`Gating::Fixed`]: the observation
/// residual is not weighted by the gate.
pub fn fixed_alpha_loss(
    tape: &mut Tape,
    batch: &MaskedBatch,
    rollout: &Rollout,
    params: &AlternatorParams,
    alpha_const: f64,
) -> Result<Var> {
    check_alpha(alpha_const, params)?;
    loss_impl(tape, batch, rollout, params, false)
}
