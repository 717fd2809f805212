use alternator::ndmath::{symmetric_eigenvalues, Matrix, Primitive, Tape, DEFAULT_TOL};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Number of eigenvalues of symmetric `k` below `lambda`, from the signs of
/// the pivots of an unpivoted LDL^T factorization of `k - lambda I`.
fn count_below(k: &Matrix, lambda: f64) -> usize {
    let n = k.rows();
    let mut a: Vec<f64> = k.data().to_vec();
    for i in 0..n {
        a[i * n + i] -= lambda;
    }
    let mut negatives = 0;
    for p in 0..n {
        let mut pivot = a[p * n + p];
        if pivot == 0.0 {
            pivot = -1e-300;
        }
        if pivot < 0.0 {
            negatives += 1;
        }
        for r in (p + 1)..n {
            let f = a[r * n + p] / pivot;
            for c in (p + 1)..n {
                a[r * n + c] -= f * a[p * n + c];
            }
        }
    }
    negatives
}

/// Eigenvalues in descending order by bisection on the counting function.
fn bisection_eigenvalues(k: &Matrix) -> Vec<f64> {
    let n = k.rows();
    let radius = (0..n)
        .map(|i| (0..n).map(|j| k.get(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max)
        + 1.0;
    (0..n)
        .map(|idx| {
            // idx-th largest = (n - idx)-th smallest
            let target = n - idx;
            let (mut lo, mut hi) = (-radius, radius);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if count_below(k, mid) >= target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

fn random_symmetric(n: usize, rng: &mut impl Rng) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.random_range(-2.0..2.0);
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

#[test]
fn jacobi_matches_bisection_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=7 {
        for _ in 0..10 {
            let k = random_symmetric(n, &mut rng);
            let got = symmetric_eigenvalues(&k, DEFAULT_TOL).unwrap();
            let want = bisection_eigenvalues(&k);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-9, "n={n}: {got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn jacobi_handles_repeated_eigenvalues() {
    // rank-one update of the identity: eigenvalues 1 + |v|^2 and 1 (x3)
    let v = [1.0, 2.0, -1.0, 0.5];
    let mut k = Matrix::identity(4);
    for i in 0..4 {
        for j in 0..4 {
            k.set(i, j, k.get(i, j) + v[i] * v[j]);
        }
    }
    let e = symmetric_eigenvalues(&k, DEFAULT_TOL).unwrap();
    assert!((e[0] - 7.25).abs() < 1e-12);
    for x in &e[1..] {
        assert!((x - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn eigenvalues_preserve_trace_and_frobenius(seed in 0u64..10_000, n in 1usize..9) {
        let k = random_symmetric(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let e = symmetric_eigenvalues(&k, DEFAULT_TOL).unwrap();
        let sum: f64 = e.iter().sum();
        let sq: f64 = e.iter().map(|x| x * x).sum();
        prop_assert!((sum - k.trace()).abs() < 1e-10);
        prop_assert!((sq - k.frobenius_norm_sq()).abs() < 1e-9);
        prop_assert!(e.windows(2).all(|w| w[0] >= w[1]));
    }
}

/// A composite scalar function exercising most primitives, with its input
/// supplied as two learnable matrices.
fn composite(tape: &mut Tape, a: &Matrix, b: &Matrix) -> (f64, Vec<Matrix>) {
    let va = tape.param(a.clone());
    let vb = tape.param(b.clone());
    let prod = tape.matmul(va, vb).unwrap(); // 3x2
    let s = tape.sigmoid(prod).unwrap();
    let t = tape.tanh(va).unwrap(); // 3x4
    let rs = tape.row_sum(t).unwrap(); // 3x1
    let mixed = tape.mul(s, rs).unwrap(); // broadcast 3x2 * 3x1
    let bias = tape.apply(Primitive::Column(1), &[vb]).unwrap(); // 4x1
    let bsum = tape.sum(bias).unwrap(); // 1x1
    let shifted = tape.add(mixed, bsum).unwrap();
    let sq = tape.square(shifted).unwrap();
    let pos = tape.add_const(sq, 1.0).unwrap();
    let root = tape.sqrt(pos).unwrap();
    let cat = tape.apply(Primitive::ConcatCols, &[root, rs]).unwrap();
    let sm = tape.apply(Primitive::SoftmaxRows, &[cat]).unwrap();
    let e = tape.apply(Primitive::Exp, &[sm]).unwrap();
    let r = tape.relu(prod).unwrap();
    let rm = tape.mean(r).unwrap();
    let total = tape.sum(e).unwrap();
    let scaled = tape.scale(total, 0.7).unwrap();
    let diff = tape.sub(scaled, rm).unwrap();
    let grads = tape.backward(diff).unwrap();
    (
        tape.scalar(diff),
        vec![grads.wrt(va).unwrap(), grads.wrt(vb).unwrap()],
    )
}

#[test]
fn tape_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let a = Matrix::from_vec(3, 4, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let b = Matrix::from_vec(4, 2, (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let (_, grads) = composite(&mut Tape::new(), &a, &b);
        let h = 1e-6;
        for (which, g) in grads.iter().enumerate() {
            for idx in 0..g.len() {
                let eval = |delta: f64| {
                    let (mut a2, mut b2) = (a.clone(), b.clone());
                    let target = if which == 0 { &mut a2 } else { &mut b2 };
                    target.data_mut()[idx] += delta;
                    composite(&mut Tape::new(), &a2, &b2).0
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let ad = g.data()[idx];
                let err = (fd - ad).abs() / fd.abs().max(ad.abs()).max(1e-6);
                // relu kinks are avoided with probability one
                assert!(err < 1e-5, "input {which}[{idx}]: ad {ad} fd {fd}");
            }
        }
    }
}

#[test]
fn gradients_accumulate_over_reuse() {
    // f(x) = x * x + x, used twice in the graph
    let mut tape = Tape::new();
    let x = tape.param(Matrix::scalar(3.0));
    let xx = tape.mul(x, x).unwrap();
    let f = tape.add(xx, x).unwrap();
    let g = tape.backward(f).unwrap();
    assert_eq!(g.wrt(x).unwrap().data()[0], 7.0);
}
