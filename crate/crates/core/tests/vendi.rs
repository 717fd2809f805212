mod common;

use alternator::ndmath::Matrix;
use alternator::vendi::{
    diversity_profile, kernel_similarity, median_bandwidth, prefix_vs, score_of_similarity,
    similarity_matrix, temporal_vs, two_point_score, vendi_score, Kernel, VendiConfig,
};
use common::{random_seqs, rng};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn cfg(q: f64, h: f64) -> VendiConfig {
    VendiConfig {
        kernel: Kernel::Rbf { bandwidth: h },
        q,
        window: 3,
    }
}

fn points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect()
}

proptest! {
    #[test]
    fn score_lies_between_one_and_n(seed in 0u64..10_000, n in 1usize..12, q in 0.0f64..5.0, h in 0.1f64..3.0) {
        let vs = vendi_score(&points(n, 3, seed), &cfg(q, h)).unwrap();
        prop_assert!(vs >= 1.0 - 1e-9 && vs <= n as f64 + 1e-9, "vs {}", vs);
    }

    #[test]
    fn score_is_permutation_invariant(seed in 0u64..10_000, n in 2usize..10) {
        let c = cfg(0.5, 0.8);
        let mut pts = points(n, 2, seed);
        let before = vendi_score(&pts, &c).unwrap();
        pts.shuffle(&mut rng(seed + 1));
        let after = vendi_score(&pts, &c).unwrap();
        prop_assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn score_non_increasing_in_order(seed in 0u64..10_000, n in 2usize..10) {
        let pts = points(n, 2, seed);
        let qs = [0.0, 0.1, 0.2, 0.5, 1.0, 1.5, 2.0, 4.0, 10.0];
        let scores: Vec<f64> = qs.iter().map(|&q| vendi_score(&pts, &cfg(q, 0.7)).unwrap()).collect();
        for w in scores.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "{:?}", scores);
        }
    }

    #[test]
    fn two_point_closed_form_matches_eigen_path(s in -1.0f64..1.0, q in 0.0f64..6.0) {
        let k = Matrix::from_rows(&[vec![1.0, s], vec![s, 1.0]]).unwrap();
        let general = score_of_similarity(&k, q).unwrap();
        let closed = two_point_score(s, q).unwrap();
        prop_assert!((general - closed).abs() < 1e-10);
    }
}

#[test]
fn two_point_shannon_oracle() {
    // eigenvalues of [[1, s], [s, 1]] / 2 are (1 +- s) / 2
    for s in [0.0, 0.1, 0.5, 0.9, 0.999] {
        let (p1, p2) = ((1.0 + s) / 2.0, (1.0 - s) / 2.0);
        let h: f64 = -(p1 * f64::ln(p1) + p2 * f64::ln(p2));
        let want = h.exp();
        assert!((two_point_score(s, 1.0).unwrap() - want).abs() < 1e-12);
        // order 2: 1 / sum p^2
        let want2 = 1.0 / (p1 * p1 + p2 * p2);
        assert!((two_point_score(s, 2.0).unwrap() - want2).abs() < 1e-12);
    }
    assert!((two_point_score(1.0, 0.2).unwrap() - 1.0).abs() < 1e-12);
    assert!((two_point_score(0.0, 0.2).unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn similarity_matrix_is_symmetric_unit_diagonal() {
    let pts = points(6, 4, 3);
    let k = similarity_matrix(&pts, &cfg(1.0, 0.9)).unwrap();
    for i in 0..6 {
        assert_eq!(k.get(i, i), 1.0);
        for j in 0..6 {
            assert_eq!(k.get(i, j), k.get(j, i));
        }
    }
}

#[test]
fn rbf_kernel_oracle() {
    let u = [1.0, 2.0, -1.0];
    let v = [0.5, 2.5, 0.0];
    let d2: f64 = 0.25 + 0.25 + 1.0;
    let want = (-d2 / (2.0 * 0.7 * 0.7)).exp();
    assert!((kernel_similarity(&u, &v, &cfg(1.0, 0.7)).unwrap() - want).abs() < 1e-15);
}

#[test]
fn cosine_kernel_handles_null_vectors() {
    let c = VendiConfig {
        kernel: Kernel::LinearCosine,
        ..VendiConfig::default()
    };
    assert_eq!(kernel_similarity(&[0.0, 0.0], &[0.0, 0.0], &c).unwrap(), 1.0);
    assert_eq!(kernel_similarity(&[0.0, 0.0], &[1.0, 0.0], &c).unwrap(), 0.0);
    let s = kernel_similarity(&[1.0, 1.0], &[2.0, 0.0], &c).unwrap();
    assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
}

#[test]
fn constant_sequence_profile_is_all_ones() {
    let seq = Matrix::filled(40, 2, 0.3);
    let prof = diversity_profile(&seq, &cfg(0.2, 1.0)).unwrap();
    assert_eq!(prof.len(), 40);
    assert!(prof.iter().all(|&v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn temporal_score_reads_only_its_windows() {
    let c = cfg(0.2, 1.0);
    let seq = random_seqs(1, 30, 2, &mut rng(4)).remove(0);
    let t = 12;
    let base = temporal_vs(&seq, t, &c).unwrap();
    for row in (0..t - c.window).chain(t + 2..30) {
        let mut s = seq.clone();
        s.row_mut(row).fill(9.0);
        assert_eq!(temporal_vs(&s, t, &c).unwrap(), base, "row {row}");
    }
    let mut s = seq.clone();
    s.row_mut(t + 1).fill(9.0);
    assert_ne!(temporal_vs(&s, t, &c).unwrap(), base);
}

#[test]
fn prefix_score_uses_the_newest_complete_pair() {
    let c = cfg(0.2, 1.0);
    let seq = random_seqs(1, 20, 1, &mut rng(5)).remove(0);
    assert_eq!(prefix_vs(&seq, 1, &c).unwrap(), 1.0);
    for len in 2..=20 {
        let prefix = seq.slice_rows(0, len);
        let want = temporal_vs(&prefix, len - 2, &c).unwrap();
        assert_eq!(prefix_vs(&seq, len, &c).unwrap(), want);
    }
    assert!(prefix_vs(&seq, 21, &c).is_err());
}

#[test]
fn median_bandwidth_matches_brute_force() {
    let window = 3;
    let seqs = random_seqs(2, 15, 2, &mut rng(6));
    let mut d = Vec::new();
    for s in &seqs {
        for t in 0..14usize {
            let at = |i: isize| s.row(i.max(0) as usize).to_vec();
            let mut sq = 0.0;
            for j in 0..=window as isize {
                let a = at(t as isize - window as isize + j);
                let b = at(t as isize - window as isize + 1 + j);
                sq += a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            }
            d.push(f64::sqrt(sq));
        }
    }
    d.sort_by(f64::total_cmp);
    let want = 0.5 * (d[13] + d[14]);
    assert!((median_bandwidth(&seqs, window).unwrap() - want).abs() < 1e-12);
}

#[test]
fn profile_peaks_inside_a_high_variance_burst() {
    let mut r = rng(7);
    let mut seq = Matrix::zeros(300, 2);
    for t in 0..300 {
        let scale = if (140..170).contains(&t) { 1.0 } else { 0.05 };
        for k in 0..2 {
            seq.set(t, k, (0.05 * t as f64).sin() + scale * r.random_range(-1.0..1.0));
        }
    }
    let c = VendiConfig::default();
    let h = median_bandwidth(std::slice::from_ref(&seq), c.window).unwrap();
    let prof = diversity_profile(&seq, &c.with_bandwidth(h)).unwrap();
    let argmax = (0..300).max_by(|&a, &b| prof[a].total_cmp(&prof[b])).unwrap();
    // windows reach up to L steps behind and one step ahead of the burst
    assert!((139..180).contains(&argmax), "argmax {argmax}");
}
