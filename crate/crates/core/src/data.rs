//! Sequence containers, the noisy-sine benchmark generator, CSV I/O,
//! normalization and evaluation metrics.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, input_err, Error, Result};
use crate::ndmath::Matrix;

/// `n` sequences of `T` steps, with optional aligned feature sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBatch {
    /// One `T x Dx` matrix per sequence.
    pub x: Vec<Matrix>,
    /// One `T x Dz` matrix per sequence.
    pub z: Option<Vec<Matrix>>,
    /// Sampling interval in seconds.
    pub dt: f64,
}

fn check_uniform(seqs: &[Matrix], what: &str) -> Result<()> {
    if let Some(first) = seqs.first() {
        if seqs.iter().any(|s| s.shape() != first.shape()) {
            return dim_err(format!("{what} sequences differ in shape"));
        }
    }
    if seqs.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical(format!("{what} contains non-finite values")));
    }
    Ok(())
}

impl SequenceBatch {
    pub fn new(x: Vec<Matrix>, z: Option<Vec<Matrix>>, dt: f64) -> Result<Self> {
        check_uniform(&x, "observation")?;
        if let Some(z) = &z {
            check_uniform(z, "feature")?;
            if z.len() != x.len() || z.iter().zip(&x).any(|(a, b)| a.rows() != b.rows()) {
                return dim_err("features must align with observations");
            }
        }
        Ok(Self { x, z, dt })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn steps(&self) -> usize {
        self.x.first().map_or(0, Matrix::rows)
    }

    pub fn obs_dim(&self) -> usize {
        self.x.first().map_or(0, Matrix::cols)
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.z.as_ref().and_then(|z| z.first().map(Matrix::cols))
    }

    /// Cuts every sequence into consecutive pieces of `len` steps. A shorter
    /// tail is dropped.
    pub fn chunk(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.steps() {
            return input_err(format!("chunk length {len} for T = {}", self.steps()));
        }
        let cut = |seqs: &[Matrix]| -> Vec<Matrix> {
            seqs.iter()
                .flat_map(|s| {
                    (0..s.rows() / len).map(move |k| s.slice_rows(k * len, (k + 1) * len))
                })
                .collect()
        };
        Ok(Self {
            x: cut(&self.x),
            z: self.z.as_deref().map(cut),
            dt: self.dt,
        })
    }

    /// The sequences with the given indices, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let pick = |seqs: &[Matrix]| idx.iter().map(|&i| seqs[i].clone()).collect();
        Self {
            x: pick(&self.x),
            z: self.z.as_deref().map(pick),
            dt: self.dt,
        }
    }
}

/// Settings of the noisy-sine benchmark: a slow sine with two bursts of a
/// fast oscillation, observed through several noisy, rescaled copies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisySinePreset {
    pub base_freq: f64,
    pub burst_freq: f64,
    pub burst_amp: f64,
    /// `[start, end)` in seconds.
    pub burst_windows: Vec<(f64, f64)>,
    /// Number of observed copies, the observation width.
    pub n_draws: usize,
    /// Std of the Gaussian noise added to the latent signal.
    pub signal_noise: f64,
    /// Std of the Gaussian noise added to each observed copy.
    pub obs_noise: f64,
    /// Range of the per-copy random scale.
    pub scale_jitter: (f64, f64),
    pub steps: usize,
    pub sample_rate: f64,
}

impl Default for NoisySinePreset {
    fn default() -> Self {
        Self {
            base_freq: 2.0,
            burst_freq: 60.0,
            burst_amp: 0.5,
            burst_windows: vec![(1.0, 1.6), (3.0, 3.6)],
            n_draws: 10,
            signal_noise: 0.3,
            obs_noise: 0.2,
            scale_jitter: (0.8, 1.2),
            steps: 2500,
            sample_rate: 500.0,
        }
    }
}

/// Preset names accepted by [`preset_by_name`].
pub const PRESETS: &[&str] = &["noisy-sine"];

pub fn preset_by_name(name: &str) -> Result<NoisySinePreset> {
    match name {
        "noisy-sine" => Ok(NoisySinePreset::default()),
        other => Err(Error::Config(format!(
            "unknown preset `{other}`; available: {}",
            PRESETS.join(", ")
        ))),
    }
}

impl NoisySinePreset {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) || self.steps == 0 || self.n_draws == 0 {
            return Err(Error::Config(
                "sample_rate, steps and n_draws must be positive".into(),
            ));
        }
        if !(self.burst_freq < self.sample_rate / 2.0) {
            return Err(Error::Config(format!(
                "burst_freq {} Hz is not below the Nyquist rate {} Hz",
                self.burst_freq,
                self.sample_rate / 2.0
            )));
        }
        let duration = self.steps as f64 / self.sample_rate;
        for &(a, b) in &self.burst_windows {
            if !(0.0 <= a && a < b && b <= duration) {
                return Err(Error::Config(format!(
                    "burst window [{a}, {b}) outside [0, {duration})"
                )));
            }
        }
        let mut sorted = self.burst_windows.clone();
        sorted.sort_by(|p, q| p.0.total_cmp(&q.0));
        if sorted.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(Error::Config("burst windows overlap".into()));
        }
        let (lo, hi) = self.scale_jitter;
        if !(lo <= hi) || self.signal_noise < 0.0 || self.obs_noise < 0.0 {
            return Err(Error::Config("invalid noise or scale settings".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Whether step `t` lies inside a burst window.
    pub fn in_burst(&self, t: usize) -> bool {
        let time = t as f64 * self.dt();
        self.burst_windows.iter().any(|&(a, b)| time >= a && time < b)
    }

    /// Noise-free latent value at step `t`.
    pub fn clean_signal(&self, t: usize) -> f64 {
        let time = t as f64 * self.dt();
        let mut v = (2.0 * PI * self.base_freq * time).sin();
        if self.in_burst(t) {
            v += self.burst_amp * (2.0 * PI * self.burst_freq * time).sin();
        }
        v
    }
}

/// One realization of the benchmark: a single sequence whose features are
/// the latent signal (`T x 1`) and whose observations are `n_draws` noisy
/// copies (`T x n_draws`).
pub fn generate_noisy_sine(preset: &NoisySinePreset, rng: &mut impl Rng) -> Result<SequenceBatch> {
    preset.validate()?;
    let t_len = preset.steps;
    let signal_noise = Normal::new(0.0, preset.signal_noise)
        .map_err(|e| Error::Config(e.to_string()))?;
    let obs_noise =
        Normal::new(0.0, preset.obs_noise).map_err(|e| Error::Config(e.to_string()))?;
    let latent: Vec<f64> = (0..t_len)
        .map(|t| preset.clean_signal(t) + signal_noise.sample(rng))
        .collect();
    let (lo, hi) = preset.scale_jitter;
    let scales: Vec<f64> = (0..preset.n_draws)
        .map(|_| if lo == hi { lo } else { rng.random_range(lo..hi) })
        .collect();
    let mut x = Matrix::zeros(t_len, preset.n_draws);
    for t in 0..t_len {
        for (k, s) in scales.iter().enumerate() {
            x.set(t, k, s * latent[t] + obs_noise.sample(rng));
        }
    }
    let z = Matrix::from_vec(t_len, 1, latent)?;
    SequenceBatch::new(vec![x], Some(vec![z]), preset.dt())
}

fn header_dims(header: &csv::StringRecord) -> Result<(usize, usize)> {
    let bad = |message: String| Error::Parse { row: 1, message };
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "seq" || cols[1] != "t" {
        return Err(bad("header must start with `seq,t,x0`".into()));
    }
    let mut dx = 0;
    let mut dz = 0;
    for name in &cols[2..] {
        if *name == format!("x{dx}") && dz == 0 {
            dx += 1;
        } else if *name == format!("z{dz}") {
            dz += 1;
        } else {
            return Err(bad(format!("unexpected column `{name}`")));
        }
    }
    if dx == 0 {
        return Err(bad("no observation columns".into()));
    }
    Ok((dx, dz))
}

/// Reads the long CSV layout `seq,t,x0..,z0..`. Rows may come in any order;
/// every sequence must hold steps `0..T` exactly once with a shared `T`.
/// Row numbers in errors count the header as row 1.
pub fn read_csv(reader: impl Read, dt: f64) -> Result<SequenceBatch> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 1, message: e.to_string() })?
        .clone();
    let (dx, dz) = header_dims(&header)?;
    let width = 2 + dx + dz;

    let mut seqs: BTreeMap<i64, BTreeMap<usize, (usize, Vec<f64>)>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        if rec.len() != width {
            return Err(Error::Parse {
                row,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let field = |k: usize| rec.get(k).unwrap_or("").trim();
        let seq: i64 = field(0).parse().map_err(|_| Error::Parse {
            row,
            message: format!("sequence id `{}` is not an integer", field(0)),
        })?;
        let t: usize = field(1).parse().map_err(|_| Error::Parse {
            row,
            message: format!("step `{}` is not a non-negative integer", field(1)),
        })?;
        let mut values = Vec::with_capacity(dx + dz);
        for k in 2..width {
            let v: f64 = field(k).parse().map_err(|_| Error::Parse {
                row,
                message: format!("column `{}` holds `{}`", &header[k], field(k)),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    message: format!("column `{}` is not finite", &header[k]),
                });
            }
            values.push(v);
        }
        if seqs.entry(seq).or_default().insert(t, (row, values)).is_some() {
            return Err(Error::Parse {
                row,
                message: format!("duplicate step {t} in sequence {seq}"),
            });
        }
    }

    let mut steps = None;
    let mut xs = Vec::with_capacity(seqs.len());
    let mut zs = Vec::with_capacity(seqs.len());
    for (id, rows) in seqs {
        let last_row = rows.values().map(|(r, _)| *r).max().unwrap_or(1);
        let len = rows.len();
        if rows.keys().next_back() != Some(&(len - 1)) {
            return Err(Error::Parse {
                row: last_row,
                message: format!("sequence {id} has gaps in its steps"),
            });
        }
        match steps {
            None => steps = Some(len),
            Some(t) if t != len => {
                return Err(Error::Parse {
                    row: last_row,
                    message: format!("sequence {id} has {len} steps, expected {t}"),
                })
            }
            _ => {}
        }
        let mut x = Vec::with_capacity(len * dx);
        let mut z = Vec::with_capacity(len * dz);
        for (_, values) in rows.values() {
            x.extend_from_slice(&values[..dx]);
            z.extend_from_slice(&values[dx..]);
        }
        xs.push(Matrix::from_vec(len, dx, x)?);
        zs.push(Matrix::from_vec(len, dz, z)?);
    }
    SequenceBatch::new(xs, (dz > 0).then_some(zs), dt)
}

pub fn load_csv(path: impl AsRef<Path>, dt: f64) -> Result<SequenceBatch> {
    read_csv(std::fs::File::open(path)?, dt)
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Writes the long CSV layout. Values use the shortest representation that
/// reads back to the same `f64`.
pub fn write_csv(batch: &SequenceBatch, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let dx = batch.obs_dim();
    let dz = batch.feature_dim().unwrap_or(0);
    let mut header = vec!["seq".to_string(), "t".to_string()];
    header.extend((0..dx).map(|k| format!("x{k}")));
    header.extend((0..dz).map(|k| format!("z{k}")));
    w.write_record(&header).map_err(csv_io)?;
    for (i, x) in batch.x.iter().enumerate() {
        for t in 0..x.rows() {
            let mut rec = vec![i.to_string(), t.to_string()];
            rec.extend(x.row(t).iter().map(f64::to_string));
            if let Some(z) = &batch.z {
                rec.extend(z[i].row(t).iter().map(f64::to_string));
            }
            w.write_record(&rec).map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(batch: &SequenceBatch, path: impl AsRef<Path>) -> Result<()> {
    write_csv(batch, std::fs::File::create(path)?)
}

/// Per-column mean and standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ColumnStats {
    pub fn measure(seqs: &[Matrix]) -> Self {
        let d = seqs.first().map_or(0, Matrix::cols);
        let count: usize = seqs.iter().map(Matrix::rows).sum();
        let mut mean = vec![0.0; d];
        for s in seqs {
            for t in 0..s.rows() {
                for (m, v) in mean.iter_mut().zip(s.row(t)) {
                    *m += v;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= count.max(1) as f64);
        let mut var = vec![0.0; d];
        for s in seqs {
            for t in 0..s.rows() {
                for ((acc, v), m) in var.iter_mut().zip(s.row(t)).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        let std = var.iter().map(|v| (v / count.max(1) as f64).sqrt()).collect();
        Self { mean, std }
    }

    fn apply(&self, seqs: &[Matrix]) -> Vec<Matrix> {
        seqs.iter()
            .map(|s| {
                let mut out = s.clone();
                for t in 0..out.rows() {
                    for (k, v) in out.row_mut(t).iter_mut().enumerate() {
                        if self.std[k] > 0.0 {
                            *v = (*v - self.mean[k]) / self.std[k];
                        }
                    }
                }
                out
            })
            .collect()
    }

    /// Maps standardized values back to the original scale.
    pub fn invert(&self, seqs: &[Matrix]) -> Vec<Matrix> {
        seqs.iter()
            .map(|s| {
                let mut out = s.clone();
                for t in 0..out.rows() {
                    for (k, v) in out.row_mut(t).iter_mut().enumerate() {
                        if self.std[k] > 0.0 {
                            *v = *v * self.std[k] + self.mean[k];
                        }
                    }
                }
                out
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub x: ColumnStats,
    pub z: Option<ColumnStats>,
}

/// Per-column z-scoring of observations and features. Pass the stats of a
/// training split to reuse them on its test split. Constant columns are
/// left untouched.
pub fn normalize(batch: &SequenceBatch, stats: Option<&NormStats>) -> Result<(SequenceBatch, NormStats)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => NormStats {
            x: ColumnStats::measure(&batch.x),
            z: batch.z.as_deref().map(ColumnStats::measure),
        },
    };
    if stats.x.mean.len() != batch.obs_dim() {
        return dim_err("normalization stats do not match the observation width");
    }
    for (k, s) in stats.x.std.iter().enumerate() {
        if *s == 0.0 {
            warn!("observation column x{k} is constant; left unnormalized");
        }
    }
    let z = match (&batch.z, &stats.z) {
        (Some(z), Some(zs)) => {
            if zs.mean.len() != batch.feature_dim().unwrap_or(0) {
                return dim_err("normalization stats do not match the feature width");
            }
            Some(zs.apply(z))
        }
        (z, _) => z.clone(),
    };
    let out = SequenceBatch::new(stats.x.apply(&batch.x), z, batch.dt)?;
    Ok((out, stats))
}

/// Temporal split: the first `floor(frac * T)` steps of every sequence train,
/// the rest test.
pub fn split_train_test(batch: &SequenceBatch, train_frac: f64) -> Result<(SequenceBatch, SequenceBatch)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return input_err(format!("train fraction {train_frac} outside (0, 1)"));
    }
    let t_len = batch.steps();
    let cut = (train_frac * t_len as f64).floor() as usize;
    if cut == 0 || cut == t_len {
        return input_err(format!("split of T = {t_len} at {train_frac} leaves an empty side"));
    }
    let part = |lo: usize, hi: usize| SequenceBatch {
        x: batch.x.iter().map(|s| s.slice_rows(lo, hi)).collect(),
        z: batch
            .z
            .as_ref()
            .map(|z| z.iter().map(|s| s.slice_rows(lo, hi)).collect()),
        dt: batch.dt,
    };
    Ok((part(0, cut), part(cut, t_len)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub mse: f64,
    pub cc: f64,
}

/// MAE, MSE and Pearson correlation. The correlation is taken per column
/// over all (sequence, step) pairs and averaged over columns; a column with
/// zero variance on either side counts as 0.
pub fn metrics(pred: &[Matrix], truth: &[Matrix]) -> Result<Metrics> {
    if pred.len() != truth.len() || pred.iter().zip(truth).any(|(a, b)| a.shape() != b.shape()) {
        return input_err("prediction and truth shapes differ");
    }
    let d = truth.first().map_or(0, Matrix::cols);
    let count: usize = truth.iter().map(Matrix::len).sum();
    if count == 0 {
        return input_err("metrics of an empty set");
    }
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        for (a, b) in p.data().iter().zip(t.data()) {
            abs += (a - b).abs();
            sq += (a - b) * (a - b);
        }
    }
    let mut cc = 0.0;
    for k in 0..d {
        let a: Vec<f64> = pred.iter().flat_map(|p| p.column(k)).collect();
        let b: Vec<f64> = truth.iter().flat_map(|t| t.column(k)).collect();
        match pearson(&a, &b) {
            Some(r) => cc += r,
            None => warn!("column {k} has zero variance; its correlation counts as 0"),
        }
    }
    Ok(Metrics {
        mae: abs / count as f64,
        mse: sq / count as f64,
        cc: cc / d.max(1) as f64,
    })
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[f64]) -> Matrix {
        Matrix::column_vector(v).unwrap()
    }

    #[test]
    fn metrics_hand_example() {
        let m = metrics(&[col(&[1.0, 2.0, 3.0])], &[col(&[2.0, 4.0, 6.0])]).unwrap();
        assert!((m.mae - 2.0).abs() < 1e-15);
        assert!((m.mse - 14.0 / 3.0).abs() < 1e-15);
        assert!((m.cc - 1.0).abs() < 1e-15);
        let anti = metrics(&[col(&[-1.0, -2.0, 0.5])], &[col(&[1.0, 2.0, -0.5])]).unwrap();
        assert!((anti.cc + 1.0).abs() < 1e-15);
        let flat = metrics(&[col(&[1.0, 1.0])], &[col(&[0.0, 2.0])]).unwrap();
        assert_eq!(flat.cc, 0.0);
        assert!(metrics(&[col(&[1.0])], &[col(&[1.0, 2.0])]).is_err());
    }

    #[test]
    fn noiseless_preset_is_the_clean_signal() {
        let preset = NoisySinePreset {
            signal_noise: 0.0,
            obs_noise: 0.0,
            scale_jitter: (1.0, 1.0),
            ..NoisySinePreset::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = generate_noisy_sine(&preset, &mut rng).unwrap();
        let x = &b.x[0];
        let z = &b.z.as_ref().unwrap()[0];
        for t in 0..preset.steps {
            assert!(x.row(t).iter().all(|&v| v == z.get(t, 0)));
            if !preset.in_burst(t) {
                let time = t as f64 / 500.0;
                assert!((z.get(t, 0) - (4.0 * PI * time).sin()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nyquist_guard() {
        let preset = NoisySinePreset {
            burst_freq: 250.0,
            ..NoisySinePreset::default()
        };
        assert!(preset.validate().is_err());
        assert!(preset_by_name("square").unwrap_err().to_string().contains("noisy-sine"));
    }

    #[test]
    fn split_examples() {
        let b = SequenceBatch::new(vec![col(&[0., 1., 2., 3., 4., 5., 6., 7., 8., 9.])], None, 1.0)
            .unwrap();
        let (tr, te) = split_train_test(&b, 0.7).unwrap();
        assert_eq!((tr.steps(), te.steps()), (7, 3));
        let small = SequenceBatch::new(vec![col(&[0., 1.])], None, 1.0).unwrap();
        let (tr, te) = split_train_test(&small, 0.5).unwrap();
        assert_eq!((tr.steps(), te.steps()), (1, 1));
        assert!(split_train_test(&small, 0.2).is_err());
    }

    #[test]
    fn csv_shape_and_nan_row() {
        let text = "seq,t,x0\n0,0,1\n0,1,2\n0,2,3\n1,0,4\n1,1,5\n1,2,6\n";
        let b = read_csv(text.as_bytes(), 1.0).unwrap();
        assert_eq!((b.n(), b.steps(), b.obs_dim()), (2, 3, 1));
        let bad = "seq,t,x0\n0,0,1\n0,1,NaN\n";
        match read_csv(bad.as_bytes(), 1.0) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let ragged = "seq,t,x0\n0,0,1\n0,1,2\n1,0,3\n";
        assert!(matches!(read_csv(ragged.as_bytes(), 1.0), Err(Error::Parse { .. })));
        let missing = "seq,x0\n0,1\n";
        assert!(matches!(read_csv(missing.as_bytes(), 1.0), Err(Error::Parse { row: 1, .. })));
    }

    #[test]
    fn csv_rows_may_be_unsorted() {
        let text = "seq,t,x0,z0\n5,1,2,20\n5,0,1,10\n";
        let b = read_csv(text.as_bytes(), 1.0).unwrap();
        assert_eq!(b.x[0].data(), &[1.0, 2.0]);
        assert_eq!(b.z.unwrap()[0].data(), &[10.0, 20.0]);
    }

    #[test]
    fn constant_column_left_alone() {
        let x = Matrix::from_vec(3, 2, vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0]).unwrap();
        let b = SequenceBatch::new(vec![x], None, 1.0).unwrap();
        let (n, stats) = normalize(&b, None).unwrap();
        assert_eq!(n.x[0].column(1), vec![5.0; 3]);
        assert_eq!(stats.x.std[1], 0.0);
        let again = ColumnStats::measure(&n.x);
        assert!(again.mean[0].abs() < 1e-12 && (again.std[0] - 1.0).abs() < 1e-12);
    }
}
