mod common;

use alternator::data::{
    generate_noisy_sine, metrics, normalize, preset_by_name, read_csv, split_train_test,
    write_csv, NoisySinePreset, SequenceBatch,
};
use alternator::ndmath::Matrix;
use alternator::vendi::{diversity_profile, median_bandwidth, VendiConfig};
use alternator::Error;
use common::{random_seqs, rng};
use proptest::prelude::*;
use rand::Rng;

fn batch_from_seed(seed: u64, n: usize, steps: usize, dx: usize, dz: usize) -> SequenceBatch {
    let mut r = rng(seed);
    let scale = 10f64.powi(r.random_range(-6..6));
    let mut x = random_seqs(n, steps, dx, &mut r);
    for s in &mut x {
        s.scale_in_place(scale);
    }
    let z = (dz > 0).then(|| random_seqs(n, steps, dz, &mut r));
    SequenceBatch::new(x, z, 0.01).unwrap()
}

fn round_trip(batch: &SequenceBatch) -> SequenceBatch {
    let mut buf = Vec::new();
    write_csv(batch, &mut buf).unwrap();
    read_csv(&buf[..], batch.dt).unwrap()
}

proptest! {
    #[test]
    fn csv_round_trip(seed in 0u64..10_000, n in 1usize..4, steps in 1usize..20, dx in 1usize..4, dz in 0usize..3) {
        let batch = batch_from_seed(seed, n, steps, dx, dz);
        let back = round_trip(&batch);
        prop_assert_eq!(back.n(), n);
        let pairs = batch.x.iter().zip(&back.x).chain(
            batch.z.iter().flatten().zip(back.z.iter().flatten()));
        for (a, b) in pairs {
            prop_assert_eq!(a.shape(), b.shape());
            for (u, v) in a.data().iter().zip(b.data()) {
                prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }
        prop_assert_eq!(back.z.is_some(), dz > 0);
    }

    #[test]
    fn metrics_symmetric_and_cc_affine_invariant(seed in 0u64..10_000, a in 0.1f64..10.0, c in -5.0f64..5.0) {
        let mut r = rng(seed);
        let p = random_seqs(2, 30, 2, &mut r);
        let t = random_seqs(2, 30, 2, &mut r);
        let m1 = metrics(&p, &t).unwrap();
        let m2 = metrics(&t, &p).unwrap();
        prop_assert!((m1.mae - m2.mae).abs() < 1e-12);
        prop_assert!((m1.mse - m2.mse).abs() < 1e-12);
        prop_assert!((m1.cc - m2.cc).abs() < 1e-12);
        let shifted: Vec<Matrix> = p.iter().map(|s| s.map(|v| a * v + c)).collect();
        let m3 = metrics(&shifted, &t).unwrap();
        prop_assert!((m1.cc - m3.cc).abs() < 1e-10);
    }
}

#[test]
fn csv_rows_in_any_order() {
    let text = "seq,t,x0,z0\n1,1,4,40\n0,1,2,20\n1,0,3,30\n0,0,1,10\n";
    let b = read_csv(text.as_bytes(), 1.0).unwrap();
    assert_eq!(b.x[0].data(), &[1.0, 2.0]);
    assert_eq!(b.x[1].data(), &[3.0, 4.0]);
    assert_eq!(b.z.unwrap()[1].data(), &[30.0, 40.0]);
}

#[test]
fn csv_errors_name_the_row() {
    let cases = [
        ("seq,t,x0\n0,0,1\n0,1,NaN\n", 3),
        ("seq,t,x0,x1\n0,0,1,2\n0,1,3\n", 3),
        ("seq,t,x0\n0,0,1\n0,2,2\n", 3),
        ("seq,t,x0\n0,0,1\n0,0,2\n", 3),
        ("seq,t,y0\n0,0,1\n", 1),
        ("seq,t,x0\n0,0,abc\n", 2),
    ];
    for (text, want_row) in cases {
        match read_csv(text.as_bytes(), 1.0) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, want_row, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
}

#[test]
fn normalize_standardizes_and_reuses_stats() {
    let batch = batch_from_seed(3, 3, 40, 2, 1);
    let (norm, stats) = normalize(&batch, None).unwrap();
    for k in 0..2 {
        let col: Vec<f64> = norm.x.iter().flat_map(|s| s.column(k)).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }
    let back = stats.x.invert(&norm.x);
    for (a, b) in back.iter().zip(&batch.x) {
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }
    let (again, _) = normalize(&batch, Some(&stats)).unwrap();
    assert_eq!(again, norm);
}

#[test]
fn constant_columns_pass_through() {
    let x = vec![Matrix::from_rows(&[vec![2.0, 1.0], vec![2.0, 3.0]]).unwrap()];
    let (norm, stats) = normalize(&SequenceBatch::new(x, None, 1.0).unwrap(), None).unwrap();
    assert_eq!(stats.x.std[0], 0.0);
    assert_eq!(norm.x[0].column(0), vec![2.0, 2.0]);
    assert_eq!(norm.x[0].column(1), vec![-1.0, 1.0]);
}

#[test]
fn split_reassembles_the_sequences() {
    let batch = batch_from_seed(4, 2, 25, 1, 1);
    let (train, test) = split_train_test(&batch, 0.7).unwrap();
    assert_eq!(train.steps(), 17);
    assert_eq!(test.steps(), 8);
    for i in 0..2 {
        let joined = Matrix::vstack(&[&train.x[i], &test.x[i]]).unwrap();
        assert_eq!(joined, batch.x[i]);
    }
    assert!(split_train_test(&batch, 1.0).is_err());
    assert!(split_train_test(&batch, 0.01).is_err());
}

#[test]
fn metrics_known_values() {
    let p = vec![Matrix::column_vector(&[1.0, 2.0, 3.0]).unwrap()];
    let t = vec![Matrix::column_vector(&[2.0, 4.0, 6.0]).unwrap()];
    let m = metrics(&p, &t).unwrap();
    assert!((m.mae - 2.0).abs() < 1e-15);
    assert!((m.mse - 14.0 / 3.0).abs() < 1e-12);
    assert!((m.cc - 1.0).abs() < 1e-12);
    let flat = vec![Matrix::column_vector(&[1.0, 1.0, 1.0]).unwrap()];
    assert_eq!(metrics(&flat, &t).unwrap().cc, 0.0);
}

#[test]
fn noisy_sine_is_deterministic_per_seed() {
    let p = NoisySinePreset::default();
    let a = generate_noisy_sine(&p, &mut rng(1)).unwrap();
    let b = generate_noisy_sine(&p, &mut rng(1)).unwrap();
    let c = generate_noisy_sine(&p, &mut rng(2)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.x[0].shape(), (2500, 10));
    assert_eq!(a.z.as_ref().unwrap()[0].shape(), (2500, 1));
    assert_eq!(preset_by_name("noisy-sine").unwrap(), p);
    assert!(preset_by_name("square").unwrap_err().to_string().contains("noisy-sine"));
}

#[test]
fn noisy_sine_profile_peaks_inside_a_burst() {
    let p = NoisySinePreset::default();
    for seed in 0..5 {
        let data = generate_noisy_sine(&p, &mut rng(seed)).unwrap();
        let cfg = VendiConfig::default();
        let h = median_bandwidth(&data.x, cfg.window).unwrap();
        let prof = diversity_profile(&data.x[0], &cfg.with_bandwidth(h)).unwrap();
        let argmax = (0..prof.len())
            .max_by(|&a, &b| prof[a].total_cmp(&prof[b]))
            .unwrap();
        assert!(p.in_burst(argmax), "seed {seed}: argmax at {argmax}");
    }
}

#[test]
fn noisy_sine_profile_is_higher_inside_bursts_on_average() {
    let p = NoisySinePreset::default();
    for seed in 0..5 {
        let data = generate_noisy_sine(&p, &mut rng(seed)).unwrap();
        let cfg = VendiConfig::default();
        let h = median_bandwidth(&data.x, cfg.window).unwrap();
        let prof = diversity_profile(&data.x[0], &cfg.with_bandwidth(h)).unwrap();
        let mean = |inside: bool| {
            let v: Vec<f64> = (0..prof.len()).filter(|&t| p.in_burst(t) == inside).map(|t| prof[t]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(true) > mean(false), "seed {seed}");
    }
}

#[test]
fn noisy_sine_latent_tracks_the_clean_signal() {
    let p = NoisySinePreset {
        signal_noise: 0.0,
        ..NoisySinePreset::default()
    };
    let data = generate_noisy_sine(&p, &mut rng(0)).unwrap();
    let z = &data.z.unwrap()[0];
    for t in 0..p.steps {
        assert_eq!(z.get(t, 0), p.clean_signal(t));
    }
    // 1.0 s lies at step 500, the start of the first burst
    assert!(!p.in_burst(499) && p.in_burst(500) && !p.in_burst(800));
}
