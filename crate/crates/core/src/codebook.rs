//! Beamforming codebooks for finite-rate feedback.
//!
//! The receiver feeds back the index of the codeword x maximizing |s†x|²; the
//! retained alignment ε = |ŝ†s|² is the quantization loss.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{inner, norm_sqr, random_unit_vector};
use crate::error::{Error, Result};

/// Lloyd stops once the mean alignment improves by less than this.
const LLOYD_MIN_IMPROVEMENT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub vectors: Vec<Vec<Complex64>>,
    pub method: String,
    pub seed: Option<u64>,
}

impl Codebook {
    pub fn new(vectors: Vec<Vec<Complex64>>, method: impl Into<String>) -> Result<Self> {
        let first =
            vectors.first().ok_or_else(|| Error::InvalidDimension("codebook needs at least one vector".into()))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidDimension("codewords need at least one antenna".into()));
        }
        for v in &vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
            }
            let n = norm_sqr(v);
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!("codeword is not unit norm (|x|^2 = {n})")));
            }
        }
        Ok(Self { vectors, method: method.into(), seed: None })
    }

    pub fn antennas(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn size(&self) -> usize {
        self.vectors.len()
    }

    /// Index of the best codeword for shape `s` and the alignment it keeps.
    /// Ties go to the lowest index.
    #[inline]
    pub fn nearest(&self, s: &[Complex64]) -> (usize, f64) {
        let mut best = (0, -1.0);
        for (i, x) in self.vectors.iter().enumerate() {
            let e = inner(s, x).norm_sqr();
            if e > best.1 {
                best = (i, e);
            }
        }
        (best.0, best.1.min(1.0))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CodebookDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CodebookDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// On-disk form: each codeword as interleaved (re, im) pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodebookDocument {
    #[serde(rename = "L")]
    pub antennas: usize,
    pub size: usize,
    pub method: String,
    pub seed: Option<u64>,
    pub vectors: Vec<Vec<f64>>,
}

impl From<&Codebook> for CodebookDocument {
    fn from(cb: &Codebook) -> Self {
        Self {
            antennas: cb.antennas(),
            size: cb.size(),
            method: cb.method.clone(),
            seed: cb.seed,
            vectors: cb.vectors.iter().map(|v| v.iter().flat_map(|c| [c.re, c.im]).collect()).collect(),
        }
    }
}

impl TryFrom<CodebookDocument> for Codebook {
    type Error = Error;

    fn try_from(doc: CodebookDocument) -> Result<Self> {
        if doc.vectors.len() != doc.size {
            return Err(Error::DimensionMismatch { expected: doc.size, found: doc.vectors.len() });
        }
        let mut vectors = Vec::with_capacity(doc.size);
        for raw in &doc.vectors {
            if raw.len() != 2 * doc.antennas {
                return Err(Error::DimensionMismatch { expected: 2 * doc.antennas, found: raw.len() });
            }
            vectors.push(raw.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect());
        }
        let mut cb = Codebook::new(vectors, doc.method)?;
        cb.seed = doc.seed;
        Ok(cb)
    }
}

/// Moments of the quantization loss ε under isotropic shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsStats {
    pub mean_eps: f64,
    pub mean_log2_eps: f64,
    /// E_ε[log₂(1 + P·ḡ_m·ε)] for each grid point.
    pub per_g_rate: Vec<f64>,
    /// Grid points the rates were computed at.
    pub g_points: Vec<f64>,
    pub snr: f64,
    pub sample_count: usize,
    /// Draws with ε = 0, left out of the log moment.
    pub zero_eps_count: usize,
    pub stderr_eps: f64,
    pub stderr_log2_eps: f64,
    pub stderr_per_g_rate: Vec<f64>,
}

impl EpsStats {
    /// Statistics of an ideal quantizer (ε ≡ 1).
    pub fn perfect(snr: f64, g_points: &[f64]) -> Self {
        Self {
            mean_eps: 1.0,
            mean_log2_eps: 0.0,
            per_g_rate: g_points.iter().map(|g| (1.0 + snr * g).log2()).collect(),
            g_points: g_points.to_vec(),
            snr,
            sample_count: 0,
            zero_eps_count: 0,
            stderr_eps: 0.0,
            stderr_log2_eps: 0.0,
            stderr_per_g_rate: vec![0.0; g_points.len()],
        }
    }

    /// Rate after feedback at grid point `gbar`, if it was tabulated.
    pub fn rate_at(&self, gbar: f64) -> Option<f64> {
        self.g_points.iter().position(|&g| (g - gbar).abs() <= 1e-12 * g.abs().max(1.0)).map(|i| self.per_g_rate[i])
    }
}

pub fn random_codebook<R: Rng + ?Sized>(antennas: usize, size: usize, rng: &mut R) -> Result<Codebook> {
    if size == 0 {
        return Err(Error::InvalidDimension("codebook size must be at least 1".into()));
    }
    if antennas == 0 {
        return Err(Error::InvalidDimension("antenna count must be at least 1".into()));
    }
    let vectors = (0..size).map(|_| random_unit_vector(antennas, rng)).collect();
    Codebook::new(vectors, "random")
}

#[derive(Debug, Clone)]
pub struct LloydRun {
    pub codebook: Codebook,
    /// Mean training alignment after each partition step.
    pub objective: Vec<f64>,
}

/// Lloyd's algorithm on `training_count` isotropic training shapes.
pub fn lloyd_codebook<R: Rng + ?Sized>(
    antennas: usize,
    size: usize,
    training_count: usize,
    iterations: usize,
    rng: &mut R,
) -> Result<Codebook> {
    if size == 0 || antennas == 0 {
        return Err(Error::InvalidDimension("codebook size and antenna count must be positive".into()));
    }
    if training_count < 100 * size {
        return Err(Error::InvalidParameter(format!(
            "Lloyd training needs at least {} shapes for {size} codewords, got {training_count}",
            100 * size
        )));
    }
    let training: Vec<Vec<Complex64>> = (0..training_count).map(|_| random_unit_vector(antennas, rng)).collect();
    Ok(lloyd_from_training(&training, size, iterations, rng)?.codebook)
}

/// Lloyd iterations on a given training set: nearest-codeword partition, then
/// each codeword replaced by the principal eigenvector of its cluster's
/// correlation matrix Σ s s†. Codewords start at distinct training shapes.
pub fn lloyd_from_training<R: Rng + ?Sized>(
    training: &[Vec<Complex64>],
    size: usize,
    iterations: usize,
    rng: &mut R,
) -> Result<LloydRun> {
    let first = training.first().ok_or_else(|| Error::InvalidParameter("empty training set".into()))?;
    let dim = first.len();
    if size == 0 {
        return Err(Error::InvalidDimension("codebook size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..training.len()).collect();
    order.shuffle(rng);
    let mut vectors: Vec<Vec<Complex64>> = order.iter().take(size).map(|&i| training[i].clone()).collect();
    while vectors.len() < size {
        vectors.push(random_unit_vector(dim, rng));
    }
    let mut codebook = Codebook::new(vectors, "lloyd")?;

    let mut objective = Vec::new();
    let mut assignment = vec![0usize; training.len()];
    for _ in 0..iterations.max(1) {
        let mut total = 0.0;
        for (slot, s) in assignment.iter_mut().zip(training) {
            let (idx, eps) = codebook.nearest(s);
            *slot = idx;
            total += eps;
        }
        let mean = total / training.len() as f64;
        let improved = objective.last().map_or(f64::INFINITY, |&prev| mean - prev);
        objective.push(mean);
        if improved < LLOYD_MIN_IMPROVEMENT {
            break;
        }

        let mut correlation = vec![vec![Complex64::new(0.0, 0.0); dim * dim]; size];
        let mut members = vec![0usize; size];
        for (&idx, s) in assignment.iter().zip(training) {
            members[idx] += 1;
            let r = &mut correlation[idx];
            for i in 0..dim {
                for j in 0..dim {
                    r[i * dim + j] += s[i] * s[j].conj();
                }
            }
        }
        for k in 0..size {
            codebook.vectors[k] = if members[k] == 0 {
                training[rng.random_range(0..training.len())].clone()
            } else {
                principal_direction(&correlation[k], dim, &codebook.vectors[k])
            };
        }
    }
    Ok(LloydRun { codebook, objective })
}

/// Dominant eigenvector of a Hermitian PSD matrix by power iteration started
/// at `start`. The Rayleigh quotient never decreases along the iteration.
fn principal_direction(r: &[Complex64], dim: usize, start: &[Complex64]) -> Vec<Complex64> {
    let mut x = start.to_vec();
    let mut last = f64::NEG_INFINITY;
    for _ in 0..500 {
        let y: Vec<Complex64> = (0..dim).map(|i| (0..dim).map(|j| r[i * dim + j] * x[j]).sum()).collect();
        let n = norm_sqr(&y).sqrt();
        if n == 0.0 {
            return x;
        }
        x = y.into_iter().map(|v| v / n).collect();
        if (n - last).abs() <= 1e-13 * n {
            break;
        }
        last = n;
    }
    x
}

/// Best codeword for `s` and ε = |ŝ†s|².
pub fn quantize_shape(s: &[Complex64], codebook: &Codebook) -> Result<(Vec<Complex64>, f64)> {
    if s.len() != codebook.antennas() {
        return Err(Error::DimensionMismatch { expected: codebook.antennas(), found: s.len() });
    }
    let (idx, eps) = codebook.nearest(s);
    Ok((codebook.vectors[idx].clone(), eps))
}

/// Monte Carlo moments of ε over isotropic shapes.
pub fn epsilon_statistics<R: Rng + ?Sized>(
    codebook: &Codebook,
    snr: f64,
    g_points: &[f64],
    sample_count: usize,
    rng: &mut R,
) -> Result<EpsStats> {
    if sample_count < 2 {
        return Err(Error::InvalidParameter("epsilon statistics need at least two samples".into()));
    }
    let dim = codebook.antennas();
    let mg = g_points.len();
    let mut sum_eps = 0.0;
    let mut sq_eps = 0.0;
    let mut sum_log = 0.0;
    let mut sq_log = 0.0;
    let mut zeros = 0usize;
    let mut sum_rate = vec![0.0; mg];
    let mut sq_rate = vec![0.0; mg];
    for _ in 0..sample_count {
        let s = random_unit_vector(dim, rng);
        let (_, eps) = codebook.nearest(&s);
        sum_eps += eps;
        sq_eps += eps * eps;
        if eps > 0.0 {
            let l = eps.log2();
            sum_log += l;
            sq_log += l * l;
        } else {
            zeros += 1;
        }
        for (k, &g) in g_points.iter().enumerate() {
            let r = (1.0 + snr * g * eps).log2();
            sum_rate[k] += r;
            sq_rate[k] += r * r;
        }
    }
    let n = sample_count as f64;
    let nl = (sample_count - zeros).max(1) as f64;
    let se = |sum: f64, sq: f64, count: f64| {
        let mean = sum / count;
        ((sq / count - mean * mean).max(0.0) / count).sqrt()
    };
    Ok(EpsStats {
        mean_eps: sum_eps / n,
        mean_log2_eps: (sum_log / nl).min(0.0),
        per_g_rate: sum_rate.iter().map(|s| s / n).collect(),
        g_points: g_points.to_vec(),
        snr,
        sample_count,
        zero_eps_count: zeros,
        stderr_eps: se(sum_eps, sq_eps, n),
        stderr_log2_eps: se(sum_log, sq_log, nl),
        stderr_per_g_rate: sum_rate.iter().zip(&sq_rate).map(|(&s, &q)| se(s, q, n)).collect(),
    })
}

/// log₂e · |F|^(−1/(L−1)), the large-codebook bound on −E[log₂ε] for random
/// codebooks.
pub fn price_increment_bound(antennas: usize, size: usize) -> f64 {
    if antennas <= 1 || size == 0 {
        return 0.0;
    }
    std::f64::consts::LOG2_E * (size as f64).powf(-1.0 / (antennas as f64 - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn basis(dim: usize, k: usize) -> Vec<Complex64> {
        (0..dim).map(|i| Complex64::new(if i == k { 1.0 } else { 0.0 }, 0.0)).collect()
    }

    #[test]
    fn single_antenna_codebook_is_lossless() {
        let mut rng = seeded(1);
        let cb = random_codebook(1, 1, &mut rng).unwrap();
        for _ in 0..100 {
            let s = random_unit_vector(1, &mut rng);
            assert!((quantize_shape(&s, &cb).unwrap().1 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_codewords_are_unit_and_follow_beta_law() {
        let mut rng = seeded(2);
        let cb = random_codebook(3, 64, &mut rng).unwrap();
        for v in &cb.vectors {
            assert!((norm_sqr(v) - 1.0).abs() < 1e-12);
        }
        let single = random_codebook(3, 1, &mut rng).unwrap();
        let n = 100_000;
        let eps: Vec<f64> =
            (0..n).map(|_| quantize_shape(&random_unit_vector(3, &mut rng), &single).unwrap().1).collect();
        for d in [0.1, 0.5, 0.9] {
            let emp = eps.iter().filter(|&&e| e >= d).count() as f64 / n as f64;
            assert!((emp - (1.0f64 - d).powi(2)).abs() < 0.01);
        }
    }

    #[test]
    fn basis_codebook_quantization() {
        let cb = Codebook::new((0..3).map(|k| basis(3, k)).collect(), "basis").unwrap();
        for k in 0..3 {
            let (x, eps) = quantize_shape(&basis(3, k), &cb).unwrap();
            assert_eq!(x, basis(3, k));
            assert!((eps - 1.0).abs() < 1e-15);
        }
        // Equal alignment with codewords 0 and 1: lowest index wins.
        let s: Vec<Complex64> =
            vec![Complex64::new(0.5f64.sqrt(), 0.0), Complex64::new(0.5f64.sqrt(), 0.0), Complex64::new(0.0, 0.0)];
        assert_eq!(cb.nearest(&s).0, 0);
        assert!(quantize_shape(&s[..2], &cb).is_err());
    }

    #[test]
    fn global_phase_and_superset_invariants() {
        let mut rng = seeded(3);
        let big = random_codebook(3, 32, &mut rng).unwrap();
        let small = Codebook::new(big.vectors[..8].to_vec(), "random").unwrap();
        let phase = Complex64::from_polar(1.0, 1.234);
        for _ in 0..1000 {
            let s = random_unit_vector(3, &mut rng);
            let rotated: Vec<Complex64> = s.iter().map(|x| x * phase).collect();
            let e = big.nearest(&s).1;
            assert!((e - big.nearest(&rotated).1).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&e));
            assert!(e >= small.nearest(&s).1);
        }
    }

    #[test]
    fn random_codebook_mean_eps_range() {
        let mut rng = seeded(4);
        let cb = random_codebook(3, 16, &mut rng).unwrap();
        let stats = epsilon_statistics(&cb, 100.0, &[1.0], 100_000, &mut rng).unwrap();
        assert!(stats.mean_eps < 1.0 && stats.mean_eps >= 1.0 - 2.0 / 4.0, "{}", stats.mean_eps);
    }

    #[test]
    fn lloyd_memorizes_small_training_sets() {
        let mut rng = seeded(5);
        let training: Vec<_> = (0..10).map(|_| random_unit_vector(3, &mut rng)).collect();
        let run = lloyd_from_training(&training, 12, 20, &mut rng).unwrap();
        for s in &training {
            assert!((run.codebook.nearest(s).1 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lloyd_objective_is_nondecreasing() {
        let mut rng = seeded(6);
        let training: Vec<_> = (0..20_000).map(|_| random_unit_vector(3, &mut rng)).collect();
        let run = lloyd_from_training(&training, 16, 60, &mut rng).unwrap();
        assert!(run.objective.len() > 2);
        for w in run.objective.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{:?}", run.objective);
        }
        for v in &run.codebook.vectors {
            assert!((norm_sqr(v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lloyd_beats_random_on_held_out_shapes() {
        let mut rng = seeded(7);
        let lloyd = lloyd_codebook(3, 16, 100_000, 50, &mut rng).unwrap();
        let random = random_codebook(3, 16, &mut rng).unwrap();
        let n = 100_000;
        let diffs: Vec<f64> = (0..n)
            .map(|_| {
                let s = random_unit_vector(3, &mut rng);
                lloyd.nearest(&s).1 - random.nearest(&s).1
            })
            .collect();
        let mean = diffs.iter().sum::<f64>() / n as f64;
        let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(mean > 3.0 * sd / (n as f64).sqrt(), "paired mean {mean}");
        assert!(lloyd_codebook(3, 16, 1000, 5, &mut rng).is_err());
    }

    #[test]
    fn perfect_statistics() {
        let mut rng = seeded(8);
        let cb = random_codebook(1, 1, &mut rng).unwrap();
        let g = [0.5, 2.0, 7.0];
        let stats = epsilon_statistics(&cb, 100.0, &g, 10_000, &mut rng).unwrap();
        assert!(stats.mean_log2_eps.abs() < 1e-12);
        for (r, gp) in stats.per_g_rate.iter().zip(&g) {
            assert!((r - (1.0 + 100.0 * gp).log2()).abs() < 1e-10);
        }
    }

    #[test]
    fn log_moment_approximation_and_bound() {
        let mut rng = seeded(9);
        let cb = random_codebook(3, 16, &mut rng).unwrap();
        let g = [0.5, 3.0, 8.0];
        let stats = epsilon_statistics(&cb, 100.0, &g, 200_000, &mut rng).unwrap();
        assert!(stats.mean_log2_eps <= 0.0);
        let approx = std::f64::consts::LOG2_E * (1.0 - stats.mean_eps);
        let rel = (-stats.mean_log2_eps - approx).abs() / approx;
        assert!(rel < 0.2, "relative gap {rel}");
        for (r, gp) in stats.per_g_rate.iter().zip(&g) {
            assert!(*r <= (1.0 + 100.0 * gp).log2());
            assert!(*r >= (1.0 + 100.0 * gp).log2() + stats.mean_log2_eps - 1e-12);
        }
        let bound = price_increment_bound(3, 16);
        assert!((bound - std::f64::consts::LOG2_E / 4.0).abs() < 1e-15);
    }

    // Over the random-codebook ensemble, 1 − ε is the minimum of |F| iid
    // Beta(L−1, 1) draws, so −E[ln ε] = ∫₀¹ (1+x)^16 (1−x)^15 dx for L = 3,
    // |F| = 16 (quadrature: 0.254544138742). The large-codebook figure
    // log₂e/4 sits about 2% below it.
    #[test]
    fn ensemble_log_moment() {
        const EXACT: f64 = 0.254_544_138_742_406_8 * std::f64::consts::LOG2_E;
        let mut rng = seeded(19);
        let books = 4000;
        let per_book = 50;
        let means: Vec<f64> = (0..books)
            .map(|_| {
                let cb = random_codebook(3, 16, &mut rng).unwrap();
                (0..per_book).map(|_| -cb.nearest(&random_unit_vector(3, &mut rng)).1.log2()).sum::<f64>()
                    / per_book as f64
            })
            .collect();
        let mean = means.iter().sum::<f64>() / books as f64;
        let sd = (means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (books - 1) as f64).sqrt();
        assert!((mean - EXACT).abs() < 4.0 * sd / (books as f64).sqrt(), "{mean} vs {EXACT}");
        let bound = price_increment_bound(3, 16);
        assert!(bound < EXACT && EXACT < 1.02 * bound);
    }

    #[test]
    fn price_bound_edge_cases() {
        assert_eq!(price_increment_bound(1, 16), 0.0);
        assert!(price_increment_bound(3, 1 << 40) < 1e-5);
    }

    #[test]
    fn json_layout() {
        let mut rng = seeded(10);
        let mut cb = random_codebook(2, 3, &mut rng).unwrap();
        cb.seed = Some(10);
        let text = cb.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["L"], 2);
        assert_eq!(v["size"], 3);
        assert_eq!(v["vectors"][0].as_array().unwrap().len(), 4);
        assert_eq!(Codebook::from_json(&text).unwrap(), cb);
    }
}
