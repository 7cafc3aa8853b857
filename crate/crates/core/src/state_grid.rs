//! Discretized controller state (ĝ, ẑ) and its Markov transition model.
//!
//! The power axis is cut into M bins of equal probability under the Gamma(L, 1)
//! law of g; the alignment axis [0, 1] into N bins of equal width. Transition
//! matrices are stored `[source][destination]`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    alignment_unchecked, sample_isotropic_channel, unit_vector_with_alignment, ChannelState, FadingParams,
};
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::rng::{chunk_sizes, stream, CHUNKS};

/// Tolerance on row sums of stochastic matrices.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Rejection draws allowed per g-bin that received no samples.
const RETRY_BUDGET: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub m: usize,
    pub n: usize,
    /// M+1 edges, `g_edges[0] = 0`, `g_edges[M] = +∞`.
    pub g_edges: Vec<f64>,
    pub g_points: Vec<f64>,
    /// N+1 edges, `z_edges[n] = n/N`.
    pub z_edges: Vec<f64>,
    pub z_points: Vec<f64>,
}

impl GridSpec {
    /// Equiprobable g-bins with conditional-mean grid points, uniform z-bins
    /// with midpoints.
    pub fn new(antennas: usize, m: usize, n: usize) -> Result<Self> {
        let (g_edges, g_points) = build_g_grid(antennas, m)?;
        let (z_edges, z_points) = build_z_grid(n)?;
        Ok(Self { m, n, g_edges, g_points, z_edges, z_points })
    }

    pub fn from_parts(g_edges: Vec<f64>, g_points: Vec<f64>, z_edges: Vec<f64>, z_points: Vec<f64>) -> Result<Self> {
        let m = g_points.len();
        let n = z_points.len();
        if m == 0 || n == 0 {
            return Err(Error::InvalidDimension("grid needs at least one bin per axis".into()));
        }
        if g_edges.len() != m + 1 {
            return Err(Error::DimensionMismatch { expected: m + 1, found: g_edges.len() });
        }
        if z_edges.len() != n + 1 {
            return Err(Error::DimensionMismatch { expected: n + 1, found: z_edges.len() });
        }
        if g_edges[0] != 0.0 || g_edges[m] != f64::INFINITY {
            return Err(Error::InvalidParameter("g edges must run from 0 to +inf".into()));
        }
        if z_edges[0] != 0.0 || z_edges[n] != 1.0 {
            return Err(Error::InvalidParameter("z edges must run from 0 to 1".into()));
        }
        let increasing = |e: &[f64]| e.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&g_edges) || !increasing(&z_edges) {
            return Err(Error::InvalidParameter("bin edges must be strictly increasing".into()));
        }
        for (i, &p) in g_points.iter().enumerate() {
            if !(p >= g_edges[i] && p <= g_edges[i + 1] && p.is_finite()) {
                return Err(Error::InvalidParameter(format!("g point {i} = {p} outside its bin")));
            }
        }
        for (i, &p) in z_points.iter().enumerate() {
            if !(p >= z_edges[i] && p <= z_edges[i + 1]) {
                return Err(Error::InvalidParameter(format!("z point {i} = {p} outside its bin")));
            }
        }
        Ok(Self { m, n, g_edges, g_points, z_edges, z_points })
    }

    pub fn states(&self) -> usize {
        self.m * self.n
    }

    #[inline]
    pub(crate) fn g_bin(&self, g: f64) -> usize {
        // First edge strictly above g, minus one.
        let idx = self.g_edges[1..self.m].partition_point(|&e| e <= g);
        idx.min(self.m - 1)
    }

    #[inline]
    pub(crate) fn z_bin(&self, z: f64) -> usize {
        let n = self.n;
        let mut k = ((z * n as f64).floor().max(0.0) as usize).min(n - 1);
        while k > 0 && z < self.z_edges[k] {
            k -= 1;
        }
        while k + 1 < n && z >= self.z_edges[k + 1] {
            k += 1;
        }
        k
    }
}

/// Upper regularized incomplete gamma Q(k, x) = Pr(Gamma(k, 1) > x) for integer k.
pub(crate) fn erlang_tail(k: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..k {
        term *= x / j as f64;
        sum += term;
    }
    ((-x).exp() * sum).min(1.0)
}

/// Quantile of Gamma(k, 1) at upper-tail probability `tail`.
fn erlang_tail_quantile(k: usize, tail: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = k as f64 + 10.0;
    while erlang_tail(k, hi) > tail {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if erlang_tail(k, mid) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Equiprobable bins for g ~ Gamma(L, 1) with the conditional bin means as
/// grid points. Both are exact: E[g; a ≤ g < b] = L·(Q(L+1, a) − Q(L+1, b)).
pub fn build_g_grid(antennas: usize, m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if m == 0 {
        return Err(Error::InvalidDimension("g-bin count must be at least 1".into()));
    }
    if antennas == 0 {
        return Err(Error::InvalidDimension("antenna count must be at least 1".into()));
    }
    let mut edges = Vec::with_capacity(m + 1);
    edges.push(0.0);
    for i in 1..m {
        edges.push(erlang_tail_quantile(antennas, (m - i) as f64 / m as f64));
    }
    edges.push(f64::INFINITY);
    let l = antennas as f64;
    let points = edges
        .windows(2)
        .map(|w| {
            let mean = l * m as f64 * (erlang_tail(antennas + 1, w[0]) - erlang_tail(antennas + 1, w[1]));
            mean.clamp(w[0], w[1])
        })
        .collect();
    Ok((edges, points))
}

/// Uniform z-bins with midpoints.
pub fn build_z_grid(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidDimension("z-bin count must be at least 1".into()));
    }
    let nf = n as f64;
    let edges = (0..=n).map(|i| i as f64 / nf).collect();
    let points = (0..n).map(|i| (i as f64 + 0.5) / nf).collect();
    Ok((edges, points))
}

/// Bin indices (m, n) of a continuous state. z = 1 falls in the last bin.
pub fn quantize_state(g: f64, z: f64, spec: &GridSpec) -> Result<(usize, usize)> {
    if !(g >= 0.0) || !g.is_finite() {
        return Err(Error::InvalidParameter(format!("channel power must be finite and nonnegative, got {g}")));
    }
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::InvalidParameter(format!("alignment must lie in [0, 1], got {z}")));
    }
    Ok((spec.g_bin(g), spec.z_bin(z)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    /// M×M g-transitions.
    pub ptilde: Vec<Vec<f64>>,
    /// N×N z-transitions without feedback.
    pub p0: Vec<Vec<f64>>,
    /// z-law one slot after perfect feedback, shared by every source state.
    pub p1_row: Vec<f64>,
    /// z-law one slot after codebook-quantized feedback.
    pub peps1_row: Option<Vec<f64>>,
    pub sample_count: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl TransitionModel {
    pub fn validate(&self, spec: &GridSpec) -> Result<()> {
        check_square_stochastic(&self.ptilde, spec.m)?;
        check_square_stochastic(&self.p0, spec.n)?;
        check_row(&self.p1_row, spec.n, 0)?;
        if let Some(row) = &self.peps1_row {
            check_row(row, spec.n, 0)?;
        }
        Ok(())
    }
}

fn check_square_stochastic(a: &[Vec<f64>], dim: usize) -> Result<()> {
    if a.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: a.len() });
    }
    for (i, row) in a.iter().enumerate() {
        check_row(row, dim, i)?;
    }
    Ok(())
}

fn check_row(row: &[f64], dim: usize, index: usize) -> Result<()> {
    if row.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
    }
    let sum: f64 = row.iter().sum();
    let min = row.iter().copied().fold(f64::INFINITY, f64::min);
    if (sum - 1.0).abs() > STOCHASTIC_TOL || min < 0.0 || !sum.is_finite() {
        return Err(Error::NotStochastic { row: index, sum, min });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    /// Joint probabilities π[m][n].
    pub pi: Vec<Vec<f64>>,
}

impl StationaryDistribution {
    pub fn g_marginal(&self) -> Vec<f64> {
        self.pi.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn z_marginal(&self) -> Vec<f64> {
        let n = self.pi.first().map_or(0, Vec::len);
        (0..n).map(|j| self.pi.iter().map(|row| row[j]).sum()).collect()
    }
}

fn normalize_counts(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    let t = total as f64;
    counts.iter().map(|&c| c as f64 / t).collect()
}

fn add_into(acc: &mut [u64], part: &[u64]) {
    for (a, p) in acc.iter_mut().zip(part) {
        *a += p;
    }
}

/// Monte Carlo estimate of the transition model.
///
/// * `ptilde`: stationary channels are evolved one slot and the source and
///   destination power bins counted.
/// * `p0`: for source bin r the beamformer is built with alignment exactly
///   `z_points[r]` to an isotropic stationary channel, the channel evolved
///   with the beamformer held fixed, and the new alignment binned.
/// * `p1_row`: as above with f = s.
/// * `peps1_row`: as above with f the codeword nearest to s.
///
/// `sample_count` draws are spent on each of `ptilde`, `p0` (split evenly over
/// its rows), `p1_row` and `peps1_row`. Work is split over fixed seeded
/// streams and merged in stream order, so the result depends only on `seed`.
pub fn estimate_transition_model(
    params: &FadingParams,
    spec: &GridSpec,
    sample_count: usize,
    seed: u64,
    codebook: Option<&Codebook>,
) -> Result<TransitionModel> {
    if sample_count == 0 {
        return Err(Error::InvalidParameter("sample_count must be positive".into()));
    }
    if let Some(cb) = codebook {
        if cb.antennas() != params.antennas {
            return Err(Error::DimensionMismatch { expected: params.antennas, found: cb.antennas() });
        }
    }
    let (m, n) = (spec.m, spec.n);
    let l = params.antennas;
    let sizes = chunk_sizes(sample_count);
    let per_row = (sample_count / n).max(1);
    let row_sizes = chunk_sizes(per_row);

    // Stream layout: [0, CHUNKS) ptilde, then p0, p1, peps1, retries.
    let stream_base = |block: u64| block * CHUNKS as u64;

    let g_counts = sizes
        .par_iter()
        .enumerate()
        .map(|(c, &count)| -> Result<Vec<u64>> {
            let mut rng = stream(seed, stream_base(0) + c as u64);
            let mut counts = vec![0u64; m * m];
            for _ in 0..count {
                let mut st = sample_isotropic_channel(l, &mut rng)?;
                let from = spec.g_bin(st.g);
                st.evolve_in_place(params, &mut rng);
                counts[from * m + spec.g_bin(st.g)] += 1;
            }
            Ok(counts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut g_total = vec![0u64; m * m];
    for part in &g_counts {
        add_into(&mut g_total, part);
    }

    let mut warnings = Vec::new();
    for from in 0..m {
        let row = &mut g_total[from * m..(from + 1) * m];
        if row.iter().sum::<u64>() == 0 {
            retry_g_row(params, spec, from, seed, row)?;
            warnings.push(format!("g-bin {from} was filled by rejection sampling"));
        }
    }
    let ptilde: Vec<Vec<f64>> = g_total.chunks(m).map(normalize_counts).collect();

    let z_counts = row_sizes
        .par_iter()
        .enumerate()
        .map(|(c, &count)| -> Result<Vec<u64>> {
            let mut rng = stream(seed, stream_base(1) + c as u64);
            let mut counts = vec![0u64; n * n];
            for (from, &z0) in spec.z_points.iter().enumerate() {
                for _ in 0..count {
                    let mut st = sample_isotropic_channel(l, &mut rng)?;
                    let f = unit_vector_with_alignment(&st.s, z0, &mut rng);
                    st.evolve_in_place(params, &mut rng);
                    counts[from * n + spec.z_bin(alignment_unchecked(&st.s, &f))] += 1;
                }
            }
            Ok(counts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut z_total = vec![0u64; n * n];
    for part in &z_counts {
        add_into(&mut z_total, part);
    }
    let p0: Vec<Vec<f64>> = z_total.chunks(n).map(normalize_counts).collect();

    let reset_row =
        |block: u64, pick: &(dyn Fn(&ChannelState) -> Vec<num_complex::Complex64> + Sync)| -> Result<Vec<f64>> {
            let parts = sizes
                .par_iter()
                .enumerate()
                .map(|(c, &count)| -> Result<Vec<u64>> {
                    let mut rng = stream(seed, stream_base(block) + c as u64);
                    let mut counts = vec![0u64; n];
                    for _ in 0..count {
                        let mut st = sample_isotropic_channel(l, &mut rng)?;
                        let f = pick(&st);
                        st.evolve_in_place(params, &mut rng);
                        counts[spec.z_bin(alignment_unchecked(&st.s, &f))] += 1;
                    }
                    Ok(counts)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut total = vec![0u64; n];
            for part in &parts {
                add_into(&mut total, part);
            }
            Ok(normalize_counts(&total))
        };

    let p1_row = reset_row(2, &|st: &ChannelState| st.s.clone())?;
    let peps1_row = match codebook {
        Some(cb) => Some(reset_row(3, &|st: &ChannelState| cb.vectors[cb.nearest(&st.s).0].clone())?),
        None => None,
    };

    Ok(TransitionModel { ptilde, p0, p1_row, peps1_row, sample_count, seed, warnings })
}

fn retry_g_row(params: &FadingParams, spec: &GridSpec, from: usize, seed: u64, row: &mut [u64]) -> Result<()> {
    let mut rng = stream(seed, 4 * CHUNKS as u64 + from as u64);
    for _ in 0..RETRY_BUDGET {
        let mut st = sample_isotropic_channel(params.antennas, &mut rng)?;
        if spec.g_bin(st.g) == from {
            st.evolve_in_place(params, &mut rng);
            row[spec.g_bin(st.g)] += 1;
            return Ok(());
        }
    }
    Err(Error::EstimationFailure { axis: "g", bin: from })
}

/// True iff the tail sums Σ_{j ≥ j0} A[i][j] are nondecreasing in the source
/// index i for every j0, up to `tol`.
pub fn is_monotone_stochastic_tol(a: &[Vec<f64>], tol: f64) -> Result<bool> {
    let dim = a.len();
    check_square_stochastic(a, dim)?;
    let tails: Vec<Vec<f64>> = a
        .iter()
        .map(|row| {
            let mut t = vec![0.0; dim + 1];
            for j in (0..dim).rev() {
                t[j] = t[j + 1] + row[j];
            }
            t
        })
        .collect();
    for j0 in 1..dim {
        let mut running_max = f64::NEG_INFINITY;
        for t in &tails {
            if t[j0] < running_max - tol {
                return Ok(false);
            }
            running_max = running_max.max(t[j0]);
        }
    }
    Ok(true)
}

pub fn is_monotone_stochastic(a: &[Vec<f64>]) -> Result<bool> {
    is_monotone_stochastic_tol(a, STOCHASTIC_TOL)
}

/// Largest distance from any state in a bin to that bin's grid point, with the
/// unbounded last g-bin truncated at `g_cap`.
pub fn max_quantization_error(spec: &GridSpec, g_cap: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (mi, &gp) in spec.g_points.iter().enumerate() {
        let lo = spec.g_edges[mi];
        let hi = spec.g_edges[mi + 1].min(g_cap).max(lo);
        let dg = (gp - lo).abs().max((hi - gp).abs());
        for (ni, &zp) in spec.z_points.iter().enumerate() {
            let dz = (zp - spec.z_edges[ni]).abs().max((spec.z_edges[ni + 1] - zp).abs());
            worst = worst.max(dg.hypot(dz));
        }
    }
    worst
}

/// Serialized form of a grid together with its transition model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(with = "edges_with_inf")]
    pub g_edges: Vec<f64>,
    pub g_points: Vec<f64>,
    pub z_edges: Vec<f64>,
    pub z_points: Vec<f64>,
    #[serde(rename = "Ptilde")]
    pub ptilde: Vec<Vec<f64>>,
    #[serde(rename = "P0")]
    pub p0: Vec<Vec<f64>>,
    #[serde(rename = "P1_row")]
    pub p1_row: Vec<f64>,
    #[serde(rename = "Peps1_row", default, skip_serializing_if = "Option::is_none")]
    pub peps1_row: Option<Vec<f64>>,
    pub seed: u64,
    pub sample_count: usize,
}

impl ModelDocument {
    pub fn new(spec: &GridSpec, model: &TransitionModel) -> Self {
        Self {
            m: spec.m,
            n: spec.n,
            g_edges: spec.g_edges.clone(),
            g_points: spec.g_points.clone(),
            z_edges: spec.z_edges.clone(),
            z_points: spec.z_points.clone(),
            ptilde: model.ptilde.clone(),
            p0: model.p0.clone(),
            p1_row: model.p1_row.clone(),
            peps1_row: model.peps1_row.clone(),
            seed: model.seed,
            sample_count: model.sample_count,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<(GridSpec, TransitionModel)> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        doc.into_parts()
    }

    pub fn into_parts(self) -> Result<(GridSpec, TransitionModel)> {
        let spec = GridSpec::from_parts(self.g_edges, self.g_points, self.z_edges, self.z_points)?;
        if spec.m != self.m || spec.n != self.n {
            return Err(Error::InvalidParameter("M/N disagree with the grid arrays".into()));
        }
        let model = TransitionModel {
            ptilde: self.ptilde,
            p0: self.p0,
            p1_row: self.p1_row,
            peps1_row: self.peps1_row,
            sample_count: self.sample_count,
            seed: self.seed,
            warnings: Vec::new(),
        };
        model.validate(&spec)?;
        Ok((spec, model))
    }
}

mod edges_with_inf {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Edge {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(edges: &[f64], s: S) -> Result<S::Ok, S::Error> {
        edges
            .iter()
            .map(|&e| if e.is_infinite() { Edge::Text("inf".into()) } else { Edge::Num(e) })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Edge>::deserialize(d)?
            .into_iter()
            .map(|e| match e {
                Edge::Num(x) => Ok(x),
                Edge::Text(t) if t == "inf" => Ok(f64::INFINITY),
                Edge::Text(t) => Err(D::Error::custom(format!("unexpected edge value {t:?}"))),
            })
            .collect()
    }
}

/// Empirical bin occupancy of fresh stationary power draws (diagnostic).
pub fn g_bin_occupancy<R: Rng + ?Sized>(
    spec: &GridSpec,
    antennas: usize,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut counts = vec![0u64; spec.m];
    for _ in 0..draws {
        counts[spec.g_bin(sample_isotropic_channel(antennas, rng)?.g)] += 1;
    }
    Ok(normalize_counts(&counts))
}
