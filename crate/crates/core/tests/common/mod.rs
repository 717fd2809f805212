#![allow(dead_code)]

use alternator::model::{
    adaptive_loss, training_rollout, AlternatorParams, Cell, Gating, MaskedBatch, Mode, ModelConfig,
};
use alternator::ndmath::{Matrix, Tape};
use alternator::vendi::DiversityProfile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn params(dx: usize, dz: usize, seed: u64) -> AlternatorParams {
    AlternatorParams::init(&ModelConfig::default(), dx, dz, &mut rng(seed)).unwrap()
}

pub fn random_seqs(n: usize, steps: usize, dim: usize, rng: &mut impl Rng) -> Vec<Matrix> {
    (0..n)
        .map(|_| {
            let data = (0..steps * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            Matrix::from_vec(steps, dim, data).unwrap()
        })
        .collect()
}

/// Supervised adaptive loss and its gradients in `flat_tensors` order.
pub fn supervised_loss(
    params: &AlternatorParams,
    batch: &MaskedBatch,
    profile: &DiversityProfile,
    z: &[Matrix],
) -> (f64, Vec<Matrix>) {
    let mut tape = Tape::new();
    let mut cell = Cell::new(params, &mut tape, true);
    let roll = training_rollout(
        &mut tape,
        &mut cell,
        batch,
        Gating::Adaptive(profile),
        Mode::Supervised(z),
        &mut rng(99),
    )
    .unwrap();
    let loss = adaptive_loss(&mut tape, batch, &roll, params).unwrap();
    let grads = tape.backward(loss).unwrap();
    (tape.scalar(loss), cell.bound.gradients(&grads))
}

/// Largest relative error between autodiff gradients and central
/// differences of `loss` over every parameter entry.
pub fn max_gradient_error(
    params: &AlternatorParams,
    grads: &[Matrix],
    loss: impl Fn(&AlternatorParams) -> f64,
    h: f64,
) -> (f64, String) {
    let base = params.flat_tensors();
    let names = params.tensor_names();
    let mut worst = (0.0, String::new());
    for (ti, tensor) in base.iter().enumerate() {
        for idx in 0..tensor.len() {
            let eval = |delta: f64| {
                let mut tensors = base.clone();
                tensors[ti].data_mut()[idx] += delta;
                let mut p = params.clone();
                p.set_flat_tensors(&tensors).unwrap();
                loss(&p)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let ad = grads[ti].data()[idx];
            let err = (fd - ad).abs() / fd.abs().max(ad.abs()).max(1e-6);
            if err > worst.0 {
                worst = (err, format!("{}[{idx}]: ad {ad:e} fd {fd:e}", names[ti]));
            }
        }
    }
    worst
}
