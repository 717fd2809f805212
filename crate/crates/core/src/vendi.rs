//! Vendi Score: the exponential of the (Shannon or Rényi) entropy of the
//! normalized eigenvalues of a kernel similarity matrix.
//!
//! The temporal score compares two adjacent windows of a sequence,
//! `x[t-L..=t]` and `x[t-L+1..=t+1]`, each flattened to one vector. Indices
//! before the start of the sequence repeat the first step. With only two
//! elements the similarity matrix is `[[1, s], [s, 1]]`, whose normalized
//! eigenvalues are `(1 ± s) / 2`, so no eigensolver is needed on that path.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, input_err, Error, Result};
use crate::ndmath::{symmetric_eigenvalues, Matrix, DEFAULT_TOL};

/// Normalized eigenvalues at or below this are treated as exactly zero.
const ZERO_EIGEN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Kernel {
    /// `exp(-|u - v|^2 / (2 h^2))`
    Rbf { bandwidth: f64 },
    /// Cosine similarity; the null vector is similar only to itself.
    LinearCosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VendiConfig {
    pub kernel: Kernel,
    /// Rényi order; 1 selects the Shannon form.
    pub q: f64,
    /// Window length `L`; windows hold `L + 1` steps.
    pub window: usize,
}

impl Default for VendiConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Rbf { bandwidth: 1.0 },
            q: 0.2,
            window: 10,
        }
    }
}

impl VendiConfig {
    pub fn validate(&self) -> Result<()> {
        if let Kernel::Rbf { bandwidth } = self.kernel {
            if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                return Err(Error::Config(format!("bandwidth must be > 0, got {bandwidth}")));
            }
        }
        if self.window < 1 {
            return Err(Error::Config("window length must be >= 1".into()));
        }
        if !(self.q >= 0.0 && self.q.is_finite()) {
            return Err(Error::Config(format!("q must be >= 0, got {}", self.q)));
        }
        Ok(())
    }

    pub fn with_bandwidth(mut self, bandwidth: f64) -> Self {
        if let Kernel::Rbf { .. } = self.kernel {
            self.kernel = Kernel::Rbf { bandwidth };
        }
        self
    }
}

pub fn kernel_similarity(u: &[f64], v: &[f64], cfg: &VendiConfig) -> Result<f64> {
    if u.len() != v.len() {
        return dim_err(format!("kernel on vectors of length {} and {}", u.len(), v.len()));
    }
    Ok(match cfg.kernel {
        Kernel::Rbf { bandwidth } => {
            let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            (-d2 / (2.0 * bandwidth * bandwidth)).exp()
        }
        Kernel::LinearCosine => {
            let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            match (nu == 0.0, nv == 0.0) {
                (true, true) => 1.0,
                (true, false) | (false, true) => 0.0,
                _ => {
                    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                    (dot / (nu * nv)).clamp(-1.0, 1.0)
                }
            }
        }
    })
}

pub fn similarity_matrix<P: AsRef<[f64]>>(points: &[P], cfg: &VendiConfig) -> Result<Matrix> {
    let n = points.len();
    let mut k = Matrix::identity(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = kernel_similarity(points[i].as_ref(), points[j].as_ref(), cfg)?;
            k.set(i, j, s);
            k.set(j, i, s);
        }
    }
    Ok(k)
}

/// Vendi Score of a point set under `cfg.kernel` at order `cfg.q`.
pub fn vendi_score<P: AsRef<[f64]>>(points: &[P], cfg: &VendiConfig) -> Result<f64> {
    if points.is_empty() {
        return input_err("vendi score of an empty set");
    }
    let k = similarity_matrix(points, cfg)?;
    score_of_similarity(&k, cfg.q)
}

pub fn score_of_similarity(k: &Matrix, q: f64) -> Result<f64> {
    let eig = symmetric_eigenvalues(k, DEFAULT_TOL)?;
    score_from_eigenvalues(&eig, q)
}

/// Order-`q` diversity of a spectrum. Eigenvalues are clipped at zero and
/// normalized by their sum.
pub fn score_from_eigenvalues(eigenvalues: &[f64], q: f64) -> Result<f64> {
    if !(q >= 0.0) {
        return input_err(format!("q must be >= 0, got {q}"));
    }
    let total: f64 = eigenvalues.iter().map(|&l| l.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::Numerical(format!("eigenvalue sum {total} is not positive")));
    }
    let probs = eigenvalues
        .iter()
        .map(|&l| l.max(0.0) / total)
        .filter(|&p| p > ZERO_EIGEN);

    if (q - 1.0).abs() < 1e-9 {
        let entropy: f64 = probs.map(|p| -p * p.ln()).sum();
        Ok(entropy.exp())
    } else {
        let power_sum: f64 = probs.map(|p| p.powf(q)).sum();
        Ok((power_sum.ln() / (1.0 - q)).exp())
    }
}

/// The two shifted, flattened windows compared at step `t` (0-based).
/// Reads rows `t - L ..= t + 1` only.
pub fn shifted_windows(seq: &Matrix, t: usize, window: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if seq.rows() < 2 || t + 1 >= seq.rows() {
        return input_err(format!(
            "temporal score at t = {t} needs t + 1 < T = {}",
            seq.rows()
        ));
    }
    let d = seq.cols();
    let mut a = Vec::with_capacity((window + 1) * d);
    let mut b = Vec::with_capacity((window + 1) * d);
    let fill = |out: &mut Vec<f64>, idx: isize| {
        out.extend_from_slice(seq.row(idx.max(0) as usize));
    };
    for j in 0..=window as isize {
        fill(&mut a, t as isize - window as isize + j);
        fill(&mut b, t as isize - window as isize + 1 + j);
    }
    Ok((a, b))
}

/// Vendi Score of the two-element set of adjacent windows at step `t`
/// (0-based, `t + 1 < T`).
pub fn temporal_vs(seq: &Matrix, t: usize, cfg: &VendiConfig) -> Result<f64> {
    let (a, b) = shifted_windows(seq, t, cfg.window)?;
    let s = kernel_similarity(&a, &b, cfg)?;
    two_point_score(s, cfg.q)
}

/// Closed form for a 2x2 similarity matrix with off-diagonal `s`.
pub fn two_point_score(s: f64, q: f64) -> Result<f64> {
    let s = s.clamp(-1.0, 1.0);
    score_from_eigenvalues(&[1.0 + s, 1.0 - s], q)
}

/// Temporal scores for one sequence, one entry per step. The last step has no
/// successor and reuses the score of the step before it.
pub fn diversity_profile(seq: &Matrix, cfg: &VendiConfig) -> Result<Vec<f64>> {
    let t_len = seq.rows();
    if t_len < 2 {
        return input_err(format!("diversity profile needs T >= 2, got {t_len}"));
    }
    let mut out = Vec::with_capacity(t_len);
    for t in 0..t_len - 1 {
        out.push(temporal_vs(seq, t, cfg)?);
    }
    out.push(out[t_len - 2]);
    Ok(out)
}

/// Score for the newest step of a sequence that is still being generated:
/// the last entry of the prefix's profile, or 1 for a single-step prefix.
pub fn prefix_vs(seq: &Matrix, len: usize, cfg: &VendiConfig) -> Result<f64> {
    if len > seq.rows() {
        return input_err(format!("prefix of {len} rows from {}", seq.rows()));
    }
    if len < 2 {
        return Ok(1.0);
    }
    temporal_vs(seq, len - 2, cfg)
}

/// Per-step temporal scores for a set of sequences, one row per sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct DiversityProfile {
    rows: Vec<Vec<f64>>,
}

impl DiversityProfile {
    pub fn compute(seqs: &[Matrix], cfg: &VendiConfig) -> Result<Self> {
        let rows = seqs
            .iter()
            .map(|s| diversity_profile(s, cfg))
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        Self { rows }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn steps(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Scores of every sequence at step `t`.
    pub fn at(&self, t: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[t]).collect()
    }
}

/// Median distance between the window pairs the temporal score compares,
/// over all steps of all sequences. Falls back to 1 when the median is 0.
pub fn median_bandwidth(seqs: &[Matrix], window: usize) -> Result<f64> {
    let mut dists = Vec::new();
    for seq in seqs {
        for t in 0..seq.rows().saturating_sub(1) {
            let (a, b) = shifted_windows(seq, t, window)?;
            let d2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return Ok(1.0);
    }
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 0 {
        0.5 * (dists[mid - 1] + dists[mid])
    } else {
        dists[mid]
    };
    Ok(if median > 0.0 { median } else { 1.0 })
}
