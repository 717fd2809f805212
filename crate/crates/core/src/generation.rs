//! Inference: ancestral sampling, decoding of latent trajectories,
//! imputation of missing observations and forecasting.
//!
//! Decoding, imputation and forecasting run the recursion on means only, so
//! they are deterministic functions of the parameters and the input.

use log::warn;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, input_err, Result};
use crate::model::{step_rows, AlternatorParams, Cell};
use crate::ndmath::{Matrix, Tape};
use crate::vendi::{prefix_vs, DiversityProfile};

fn normal_row(d: usize, scale: f64, rng: &mut impl Rng) -> Matrix {
    let data = (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_raw(1, d, data)
}

/// Per-sequence matrices from per-step `n x d` matrices.
fn unstack(steps: &[Matrix], n: usize, d: usize) -> Vec<Matrix> {
    (0..n)
        .map(|i| {
            let mut data = Vec::with_capacity(steps.len() * d);
            for m in steps {
                data.extend_from_slice(m.row(i));
            }
            Matrix::from_raw(steps.len(), d, data)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `T x Dx`
    pub x: Matrix,
    /// `T x Dz`
    pub z: Matrix,
    /// Gate value used at each step.
    pub alpha: Vec<f64>,
}

/// Draws one sequence of `steps` steps: `x[t]` from the previous latent,
/// then the gate from the score of the generated prefix, then `z[t]`.
pub fn sample(params: &AlternatorParams, steps: usize, rng: &mut impl Rng) -> Result<Sample> {
    sample_with_noise(params, steps, true, rng)
}

/// As [`sample`]; with `noise` off every draw is replaced by its mean and
/// only the initial latent is random.
pub fn sample_with_noise(
    params: &AlternatorParams,
    steps: usize,
    noise: bool,
    rng: &mut impl Rng,
) -> Result<Sample> {
    params.validate()?;
    let (dx, dz) = (params.obs_dim, params.latent_dim);
    let (sx, sz) = if noise {
        (params.sigma_x2.sqrt(), params.sigma_z2.sqrt())
    } else {
        (0.0, 0.0)
    };
    let mut tape = Tape::new();
    let mut cell = Cell::new(params, &mut tape, false);
    let mut x = Matrix::zeros(steps, dx);
    let mut z = Matrix::zeros(steps, dz);
    let mut alpha = Vec::with_capacity(steps);
    let mut state = tape.constant(normal_row(dz, 1.0, rng));
    for t in 0..steps {
        let mu_x = cell.observation_mean(&mut tape, state)?;
        let eps_x = normal_row(dx, sx, rng);
        let x_t = tape.value(mu_x).zip_map(&eps_x, |m, e| m + e)?;
        x.row_mut(t).copy_from_slice(x_t.data());

        let vs = if params.fixed_alpha.is_some() {
            1.0
        } else {
            prefix_vs(&x, t + 1, &params.vendi)?
        };
        let a = cell.gate(&mut tape, &[vs])?;
        alpha.push(tape.scalar(a));
        let x_var = tape.constant(x_t);
        let mu_z = cell.latent_mean(&mut tape, x_var, state, a)?;
        let eps_z = normal_row(dz, sz, rng);
        let z_t = tape.value(mu_z).zip_map(&eps_z, |m, e| m + e)?;
        z.row_mut(t).copy_from_slice(z_t.data());
        state = tape.constant(z_t);
    }
    Ok(Sample { x, z, alpha })
}

/// Mean rollout outputs, one matrix per sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanPath {
    /// `T x Dx` observation means, `mu_x[t]` predicted from `z[t-1]`.
    pub mu_x: Vec<Matrix>,
    /// `T x Dz` latent means.
    pub mu_z: Vec<Matrix>,
    /// `T` gate values per sequence.
    pub alpha: Vec<Vec<f64>>,
}

fn check_inputs(params: &AlternatorParams, x: &[Matrix]) -> Result<usize> {
    params.validate()?;
    let steps = x.first().map_or(0, Matrix::rows);
    if x.iter().any(|s| s.cols() != params.obs_dim) {
        return input_err(format!(
            "observations have {} columns, model expects {}",
            x.first().map_or(0, Matrix::cols),
            params.obs_dim
        ));
    }
    if x.iter().any(|s| s.rows() != steps) {
        return dim_err("sequences must share one length");
    }
    Ok(steps)
}

fn gate_profile(params: &AlternatorParams, x: &[Matrix]) -> Result<DiversityProfile> {
    let steps = x.first().map_or(0, Matrix::rows);
    if params.fixed_alpha.is_some() || steps < 2 {
        return Ok(DiversityProfile::from_rows(vec![vec![1.0; steps]; x.len()]));
    }
    DiversityProfile::compute(x, &params.vendi)
}

/// Runs the recursion on `x` (already masked where needed) from `z0 = 0`,
/// keeping means only. The gate follows the score profile of `x`.
pub fn mean_path(params: &AlternatorParams, x: &[Matrix]) -> Result<MeanPath> {
    let steps = check_inputs(params, x)?;
    let n = x.len();
    let profile = gate_profile(params, x)?;
    let mut tape = Tape::new();
    let mut cell = Cell::new(params, &mut tape, false);
    let mut state = tape.constant(Matrix::zeros(n, params.latent_dim));
    let mut mu_x = Vec::with_capacity(steps);
    let mut mu_z = Vec::with_capacity(steps);
    let mut alpha = vec![Vec::with_capacity(steps); n];
    for t in 0..steps {
        let mx = cell.observation_mean(&mut tape, state)?;
        let a = cell.gate(&mut tape, &profile.at(t))?;
        let xt = tape.constant(step_rows(x, t));
        let mz = cell.latent_mean(&mut tape, xt, state, a)?;
        mu_x.push(tape.value(mx).clone());
        mu_z.push(tape.value(mz).clone());
        for (i, v) in tape.value(a).data().iter().enumerate() {
            alpha[i].push(*v);
        }
        state = mz;
    }
    Ok(MeanPath {
        mu_x: unstack(&mu_x, n, params.obs_dim),
        mu_z: unstack(&mu_z, n, params.latent_dim),
        alpha,
    })
}

/// Predicted latent trajectories (`T x Dz` per sequence) for observations
/// `x`.
pub fn decode(params: &AlternatorParams, x: &[Matrix]) -> Result<Vec<Matrix>> {
    Ok(mean_path(params, x)?.mu_z)
}

/// Observations with some steps missing.
#[derive(Clone, Debug, PartialEq)]
pub struct ImputationTask {
    /// Values at missing steps are ignored.
    pub x_obs: Vec<Matrix>,
    /// `true` marks an observed step.
    pub observed: Vec<Vec<bool>>,
    pub missing_rate: f64,
}

impl ImputationTask {
    /// Hides exactly `round(rate * n * T)` steps, chosen uniformly.
    pub fn random(x: &[Matrix], missing_rate: f64, rng: &mut impl Rng) -> Result<Self> {
        if !(0.0..=1.0).contains(&missing_rate) {
            return input_err(format!("missing rate {missing_rate} outside [0, 1]"));
        }
        let steps = x.first().map_or(0, Matrix::rows);
        if x.iter().any(|s| s.rows() != steps) {
            return dim_err("sequences must share one length");
        }
        let total = x.len() * steps;
        let missing = (missing_rate * total as f64).round() as usize;
        let mut observed = vec![vec![true; steps]; x.len()];
        for k in sample_indices(rng, total, missing) {
            observed[k / steps][k % steps] = false;
        }
        Ok(Self {
            x_obs: x.to_vec(),
            observed,
            missing_rate,
        })
    }

    pub fn missing_count(&self) -> usize {
        self.observed.iter().flatten().filter(|&&o| !o).count()
    }

    /// Observations with missing steps replaced by the null vector.
    pub fn masked(&self) -> Result<Vec<Matrix>> {
        if self.observed.len() != self.x_obs.len()
            || self.observed.iter().zip(&self.x_obs).any(|(m, s)| m.len() != s.rows())
        {
            return dim_err("observation mask does not match the data");
        }
        Ok(self
            .x_obs
            .iter()
            .zip(&self.observed)
            .map(|(s, m)| {
                let mut out = s.clone();
                for (t, &seen) in m.iter().enumerate() {
                    if !seen {
                        out.row_mut(t).fill(0.0);
                    }
                }
                out
            })
            .collect())
    }
}

/// Fills the missing steps with the model's observation means from a mean
/// rollout over the masked data. Observed steps are copied unchanged.
pub fn impute(params: &AlternatorParams, task: &ImputationTask) -> Result<Vec<Matrix>> {
    let masked = task.masked()?;
    for (i, m) in task.observed.iter().enumerate() {
        if !m.is_empty() && m.iter().all(|&o| !o) {
            warn!("sequence {i} has no observed steps; filling from the generative path alone");
        }
    }
    let path = mean_path(params, &masked)?;
    let mut out = task.x_obs.clone();
    for (i, seq) in out.iter_mut().enumerate() {
        for (t, &seen) in task.observed[i].iter().enumerate() {
            if !seen {
                seq.row_mut(t).copy_from_slice(path.mu_x[i].row(t));
            }
        }
    }
    Ok(out)
}

pub const FORECAST_HORIZONS: [usize; 4] = [96, 192, 336, 720];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastTask {
    /// Number of trailing context steps used.
    pub context: usize,
    pub horizon: usize,
}

impl Default for ForecastTask {
    fn default() -> Self {
        Self {
            context: 96,
            horizon: 96,
        }
    }
}

/// Continues `x_context` by `task.horizon` steps: a mean rollout over the
/// last `task.context` context steps, then the sampling recursion with every
/// draw replaced by its mean.
pub fn forecast(params: &AlternatorParams, task: &ForecastTask, x_context: &Matrix) -> Result<Matrix> {
    if task.horizon == 0 {
        return input_err("forecast horizon must be >= 1");
    }
    if task.context == 0 || x_context.rows() == 0 {
        return input_err("forecast needs at least one context step");
    }
    let len = task.context.min(x_context.rows());
    let ctx = x_context.slice_rows(x_context.rows() - len, x_context.rows());
    check_inputs(params, std::slice::from_ref(&ctx))?;
    let profile = gate_profile(params, std::slice::from_ref(&ctx))?;

    let mut tape = Tape::new();
    let mut cell = Cell::new(params, &mut tape, false);
    let mut state = tape.constant(Matrix::zeros(1, params.latent_dim));
    for t in 0..len {
        cell.observation_mean(&mut tape, state)?;
        let a = cell.gate(&mut tape, &[profile.row(0)[t]])?;
        let xt = tape.constant(Matrix::row_vector(ctx.row(t))?);
        state = cell.latent_mean(&mut tape, xt, state, a)?;
    }

    let mut seq = Matrix::vstack(&[&ctx, &Matrix::zeros(task.horizon, params.obs_dim)])?;
    for h in 0..task.horizon {
        let mx = cell.observation_mean(&mut tape, state)?;
        let row = len + h;
        seq.row_mut(row).copy_from_slice(tape.value(mx).data());
        let vs = if params.fixed_alpha.is_some() {
            1.0
        } else {
            prefix_vs(&seq, row + 1, &params.vendi)?
        };
        let a = cell.gate(&mut tape, &[vs])?;
        state = cell.latent_mean(&mut tape, mx, state, a)?;
    }
    Ok(seq.slice_rows(len, len + task.horizon))
}
