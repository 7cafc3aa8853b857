//! Average-reward feedback control on the discretized state (ĝ, ẑ).
//!
//! A state is a pair of bin indices (m, n). Under decision μ the next state is
//! drawn from `ptilde[m][·] × Pz(μ)[n][·]`, where `Pz(0) = p0` and every row of
//! `Pz(1)` is the shared reset row (perfect or quantized feedback). The stage
//! reward is
//!
//!   G(ḡ, z̄, 1) = R₁(ḡ) − α,      G(ḡ, z̄, 0) = log₂(1 + P·ḡ·z̄),
//!
//! with R₁(ḡ) = log₂(1 + P·ḡ) for perfect feedback and E_ε[log₂(1 + P·ḡ·ε)]
//! for codebook feedback.
//!
//! Decisions at exact ties go to μ = 0.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::codebook::EpsStats;
use crate::error::{Error, Result};
use crate::state_grid::{GridSpec, StationaryDistribution, TransitionModel};

/// Q-value margin μ = 1 must clear to be preferred over μ = 0.
pub const TIE_TOL: f64 = 1e-10;
/// Largest allowed Bellman / balance residual after a linear solve.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Enumeration limit for [`exhaustive_threshold_search`].
pub const SEARCH_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceParts {
    /// Data-bit equivalent cost of one feedback, B.
    pub feedback_bits: f64,
    pub symbol_time: f64,
    pub slot_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    /// Linear transmit SNR P.
    pub snr: f64,
    /// Feedback price α in bit/s/Hz.
    pub alpha: f64,
    pub parts: Option<PriceParts>,
}

impl RewardSpec {
    pub fn new(snr: f64, alpha: f64) -> Result<Self> {
        if !(snr > 0.0) || !snr.is_finite() {
            return Err(Error::InvalidParameter(format!("SNR must be positive, got {snr}")));
        }
        if !(alpha >= 0.0) || alpha.is_nan() {
            return Err(Error::InvalidParameter(format!("feedback price must be nonnegative, got {alpha}")));
        }
        Ok(Self { snr, alpha, parts: None })
    }

    /// α = B·T_s/T_c.
    pub fn from_parts(snr: f64, parts: PriceParts) -> Result<Self> {
        let PriceParts { feedback_bits, symbol_time, slot_time } = parts;
        if !(feedback_bits > 0.0 && symbol_time > 0.0 && slot_time > 0.0) {
            return Err(Error::InvalidParameter("B, T_s and T_c must be positive".into()));
        }
        let mut spec = Self::new(snr, feedback_bits * symbol_time / slot_time)?;
        spec.parts = Some(parts);
        Ok(spec)
    }

    pub fn from_snr_db(snr_db: f64, alpha: f64) -> Result<Self> {
        Self::new(10f64.powf(snr_db / 10.0), alpha)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.snr, alpha)
    }
}

/// Stage reward with perfect feedback.
pub fn reward_per_stage(gbar: f64, zbar: f64, feedback: bool, spec: &RewardSpec) -> f64 {
    if feedback {
        (1.0 + spec.snr * gbar).log2() - spec.alpha
    } else {
        (1.0 + spec.snr * gbar * zbar).log2()
    }
}

/// Stage reward with codebook feedback; `eps` must tabulate `gbar`.
pub fn reward_per_stage_quantized(
    gbar: f64,
    zbar: f64,
    feedback: bool,
    spec: &RewardSpec,
    eps: &EpsStats,
) -> Result<f64> {
    if feedback {
        let rate = eps.rate_at(gbar).ok_or(Error::MissingEpsilon { gbar })?;
        Ok(rate - spec.alpha)
    } else {
        Ok(reward_per_stage(gbar, zbar, false, spec))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    /// `decide[m][n]` is true when feedback is sent in state (m, n).
    pub decide: Vec<Vec<bool>>,
}

impl Policy {
    pub fn constant(m: usize, n: usize, feedback: bool) -> Self {
        Self { decide: vec![vec![feedback; n]; m] }
    }

    /// Feedback iff z̄_n < y[m].
    pub fn from_thresholds(spec: &GridSpec, y: &[f64]) -> Result<Self> {
        if y.len() != spec.m {
            return Err(Error::DimensionMismatch { expected: spec.m, found: y.len() });
        }
        Ok(Self { decide: y.iter().map(|&t| spec.z_points.iter().map(|&z| z < t).collect()).collect() })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.decide.len(), self.decide.first().map_or(0, Vec::len))
    }

    /// Fraction of states with feedback (unweighted).
    pub fn feedback_states(&self) -> usize {
        self.decide.iter().flatten().filter(|&&d| d).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdProfile {
    /// Per-ĝ threshold on ẑ; feedback iff ẑ < y[m].
    pub y: Vec<f64>,
    pub is_threshold: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub policy: Policy,
    /// Average reward (net throughput) in bit/s/Hz.
    pub j: f64,
    /// Differential rewards with `a[M−1][N−1] = 0`.
    pub a: Vec<Vec<f64>>,
    pub iterations: usize,
    pub pi: StationaryDistribution,
    pub threshold: ThresholdProfile,
}

/// JSON layout of a solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveDocument {
    pub policy: Vec<Vec<u8>>,
    pub threshold: Vec<f64>,
    pub is_threshold: bool,
    #[serde(rename = "J")]
    pub j: f64,
    pub iterations: usize,
    pub pi: Vec<Vec<f64>>,
}

impl SolveResult {
    pub fn to_document(&self) -> SolveDocument {
        SolveDocument {
            policy: self.policy.decide.iter().map(|r| r.iter().map(|&d| u8::from(d)).collect()).collect(),
            threshold: self.threshold.y.clone(),
            is_threshold: self.threshold.is_threshold,
            j: self.j,
            iterations: self.iterations,
            pi: self.pi.pi.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }
}

impl SolveDocument {
    pub fn policy(&self) -> Policy {
        Policy { decide: self.policy.iter().map(|r| r.iter().map(|&d| d != 0).collect()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub v: Vec<Vec<f64>>,
    pub beta: f64,
}

impl ValueTable {
    pub fn zeros(m: usize, n: usize, beta: f64) -> Self {
        Self { v: vec![vec![0.0; n]; m], beta }
    }
}

/// Which reward is earned in a feedback slot.
#[derive(Debug, Clone, Copy)]
pub enum FeedbackReward<'a> {
    Perfect,
    Quantized(&'a EpsStats),
}

/// Which z-law follows a feedback slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackDynamics {
    Perfect,
    Quantized,
}

/// A fully specified finite MDP: grid, transitions and stage rewards.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub spec: GridSpec,
    pub ptilde: Vec<Vec<f64>>,
    pub p0: Vec<Vec<f64>>,
    /// z-law after a feedback slot.
    pub reset_row: Vec<f64>,
    /// Rate earned in a feedback slot before the price, per g-bin.
    pub feedback_rate: Vec<f64>,
    pub rewards: RewardSpec,
}

impl ControlProblem {
    pub fn new(
        spec: &GridSpec,
        model: &TransitionModel,
        rewards: &RewardSpec,
        reward: FeedbackReward<'_>,
        dynamics: FeedbackDynamics,
    ) -> Result<Self> {
        model.validate(spec)?;
        let reset_row = match dynamics {
            FeedbackDynamics::Perfect => model.p1_row.clone(),
            FeedbackDynamics::Quantized => model
                .peps1_row
                .clone()
                .ok_or_else(|| Error::InvalidParameter("model has no quantized-feedback row".into()))?,
        };
        let feedback_rate = match reward {
            FeedbackReward::Perfect => spec.g_points.iter().map(|g| (1.0 + rewards.snr * g).log2()).collect(),
            FeedbackReward::Quantized(eps) => spec
                .g_points
                .iter()
                .map(|&g| eps.rate_at(g).ok_or(Error::MissingEpsilon { gbar: g }))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(Self {
            spec: spec.clone(),
            ptilde: model.ptilde.clone(),
            p0: model.p0.clone(),
            reset_row,
            feedback_rate,
            rewards: *rewards,
        })
    }

    /// Perfect feedback channel: (G, P).
    pub fn perfect(spec: &GridSpec, model: &TransitionModel, rewards: &RewardSpec) -> Result<Self> {
        Self::new(spec, model, rewards, FeedbackReward::Perfect, FeedbackDynamics::Perfect)
    }

    /// Codebook feedback channel: (G_ε, P_ε).
    pub fn quantized(spec: &GridSpec, model: &TransitionModel, rewards: &RewardSpec, eps: &EpsStats) -> Result<Self> {
        Self::new(spec, model, rewards, FeedbackReward::Quantized(eps), FeedbackDynamics::Quantized)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut p = self.clone();
        p.rewards = self.rewards.with_alpha(alpha)?;
        Ok(p)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.spec.m, self.spec.n)
    }

    #[inline]
    pub fn reward(&self, m: usize, n: usize, feedback: bool) -> f64 {
        if feedback {
            self.feedback_rate[m] - self.rewards.alpha
        } else {
            (1.0 + self.rewards.snr * self.spec.g_points[m] * self.spec.z_points[n]).log2()
        }
    }

    #[inline]
    fn z_row(&self, n: usize, feedback: bool) -> &[f64] {
        if feedback {
            &self.reset_row
        } else {
            &self.p0[n]
        }
    }

    /// Expected next-slot values for both decisions: `(cont0[m][n], cont1[m])`.
    fn continuations(&self, v: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let (m, n) = self.dims();
        // w[i][l] = Σ_k ptilde[i][k] v[k][l]
        let w: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let mut row = vec![0.0; n];
                for (k, &p) in self.ptilde[i].iter().enumerate() {
                    if p != 0.0 {
                        for (r, x) in row.iter_mut().zip(&v[k]) {
                            *r += p * x;
                        }
                    }
                }
                row
            })
            .collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let cont0 = w.iter().map(|wr| self.p0.iter().map(|pr| dot(pr, wr)).collect()).collect();
        let cont1 = w.iter().map(|wr| dot(&self.reset_row, wr)).collect();
        (cont0, cont1)
    }

    /// Dense S×S transition matrix of a policy, S = M·N, state index m·N + n.
    pub fn transition_matrix(&self, policy: &Policy) -> DMatrix<f64> {
        let (m, n) = self.dims();
        let s = m * n;
        let mut p = DMatrix::zeros(s, s);
        for i in 0..m {
            for j in 0..n {
                let zrow = self.z_row(j, policy.decide[i][j]);
                let from = i * n + j;
                for (k, &pg) in self.ptilde[i].iter().enumerate() {
                    if pg == 0.0 {
                        continue;
                    }
                    for (l, &pz) in zrow.iter().enumerate() {
                        p[(from, k * n + l)] = pg * pz;
                    }
                }
            }
        }
        p
    }

    fn check_policy(&self, policy: &Policy) -> Result<()> {
        let (m, n) = self.dims();
        let (pm, pn) = policy.dims();
        if pm != m {
            return Err(Error::DimensionMismatch { expected: m, found: pm });
        }
        if pn != n || policy.decide.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: pn });
        }
        Ok(())
    }

    fn greedy(&self, v: &[Vec<f64>], discount: f64) -> (Vec<Vec<f64>>, Policy) {
        let (m, n) = self.dims();
        let (cont0, cont1) = self.continuations(v);
        let mut out = vec![vec![0.0; n]; m];
        let mut policy = Policy::constant(m, n, false);
        for i in 0..m {
            let q1 = self.reward(i, 0, true) + discount * cont1[i];
            for j in 0..n {
                let q0 = self.reward(i, j, false) + discount * cont0[i][j];
                let fb = q1 > q0 + TIE_TOL;
                policy.decide[i][j] = fb;
                out[i][j] = if fb { q1 } else { q0 };
            }
        }
        (out, policy)
    }
}

/// One application of the discounted DP operator.
pub fn dp_operator(value: &ValueTable, problem: &ControlProblem) -> ValueTable {
    ValueTable { v: problem.greedy(&value.v, value.beta).0, beta: value.beta }
}

/// Greedy policy with respect to a discounted value table.
pub fn greedy_policy(value: &ValueTable, problem: &ControlProblem) -> Policy {
    problem.greedy(&value.v, value.beta).1
}

fn sup_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Value iteration from V ≡ 0 until successive iterates differ by at most
/// `tol` in sup norm.
pub fn value_iteration_discounted(
    problem: &ControlProblem,
    beta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ValueTable> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!("discount factor must lie in (0, 1), got {beta}")));
    }
    let (m, n) = problem.dims();
    let mut value = ValueTable::zeros(m, n, beta);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = dp_operator(&value, problem);
        residual = sup_diff(&next.v, &value.v);
        value = next;
        if residual <= tol {
            return Ok(value);
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, residual })
}

/// Σ_{k,ℓ} V(k, ℓ)·P̃[m][k]·Pz(μ)[n][ℓ].
pub fn expected_continuation(v: &[Vec<f64>], problem: &ControlProblem, m: usize, n: usize, feedback: bool) -> f64 {
    let zrow = problem.z_row(n, feedback);
    problem.ptilde[m]
        .iter()
        .zip(v)
        .map(|(&pg, vrow)| pg * zrow.iter().zip(vrow).map(|(pz, x)| pz * x).sum::<f64>())
        .sum()
}

/// Gain J and differential rewards A (anchored at the last state) of a policy.
pub fn evaluate_policy(problem: &ControlProblem, policy: &Policy) -> Result<(f64, Vec<Vec<f64>>)> {
    problem.check_policy(policy)?;
    let (m, n) = problem.dims();
    let s = m * n;
    let anchor = s - 1;
    let p = problem.transition_matrix(policy);
    // J + A_i − Σ_j P_ij A_j = G_i with A_anchor = 0: the anchor's column
    // carries J instead.
    let mut k = -&p;
    for i in 0..s {
        k[(i, i)] += 1.0;
    }
    for i in 0..s {
        k[(i, anchor)] = 1.0;
    }
    let g = DVector::from_iterator(s, (0..s).map(|i| problem.reward(i / n, i % n, policy.decide[i / n][i % n])));
    let x = solve(k, &g, "policy evaluation")?;
    let j = x[anchor];
    let mut a = vec![vec![0.0; n]; m];
    for i in 0..s {
        if i != anchor {
            a[i / n][i % n] = x[i];
        }
    }
    let residual = (0..s)
        .map(|i| {
            let pa: f64 = (0..s).map(|c| p[(i, c)] * a[c / n][c % n]).sum();
            (j + a[i / n][i % n] - g[i] - pa).abs()
        })
        .fold(0.0, f64::max);
    if !(residual <= RESIDUAL_TOL) {
        return Err(Error::SingularSystem(format!("policy evaluation residual {residual:e}")));
    }
    Ok((j, a))
}

fn solve(k: DMatrix<f64>, rhs: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let lu = k.lu();
    let x = lu.solve(rhs).ok_or_else(|| Error::SingularSystem(format!("{what}: matrix is singular")))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem(format!("{what}: non-finite solution")));
    }
    Ok(x)
}

/// Policy iteration for the average-reward problem, started from the myopic
/// policy (feedback iff it pays within the current slot).
pub fn policy_iteration_average(problem: &ControlProblem, max_iter: usize) -> Result<SolveResult> {
    let (m, n) = problem.dims();
    let mut policy = Policy {
        decide: (0..m)
            .map(|i| (0..n).map(|j| problem.reward(i, j, true) > problem.reward(i, j, false) + TIE_TOL).collect())
            .collect(),
    };
    for iteration in 1..=max_iter {
        let (j, a) = evaluate_policy(problem, &policy)?;
        let next = problem.greedy(&a, 1.0).1;
        if next == policy {
            let pi = stationary_distribution(&policy, problem)?;
            let threshold = extract_threshold(&policy, &problem.spec);
            return Ok(SolveResult { policy, j, a, iterations: iteration, pi, threshold });
        }
        policy = next;
    }
    Err(Error::NonConvergence { iterations: max_iter, residual: f64::NAN })
}

/// Relative value iteration on the aperiodic transform P' = ½(I + P); a
/// cross-check for policy iteration. Returns the gain and the greedy policy.
pub fn relative_value_iteration(problem: &ControlProblem, tol: f64, max_iter: usize) -> Result<(f64, Policy)> {
    let (m, n) = problem.dims();
    let mut h = vec![vec![0.0; n]; m];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let (t, _) = problem.greedy(&h, 1.0);
        // T'h = ½h + ½Th has gain J/2.
        let next: Vec<Vec<f64>> =
            h.iter().zip(&t).map(|(hr, tr)| hr.iter().zip(tr).map(|(a, b)| 0.5 * a + 0.5 * b).collect()).collect();
        let diffs: Vec<f64> = next.iter().flatten().zip(h.iter().flatten()).map(|(a, b)| a - b).collect();
        let hi = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = diffs.iter().copied().fold(f64::INFINITY, f64::min);
        residual = hi - lo;
        let anchor = next[m - 1][n - 1];
        h = next.into_iter().map(|r| r.into_iter().map(|x| x - anchor).collect()).collect();
        if residual <= tol {
            // Gain of the transform is J/2.
            let gain = hi + lo;
            let policy = problem.greedy(&h, 1.0).1;
            return Ok((gain, policy));
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, residual })
}

/// Stationary law of the chain induced by `policy`.
pub fn stationary_distribution(policy: &Policy, problem: &ControlProblem) -> Result<StationaryDistribution> {
    problem.check_policy(policy)?;
    let (m, n) = problem.dims();
    let s = m * n;
    let p = problem.transition_matrix(policy);
    // (I − P)ᵀ π = 0 with the last balance equation replaced by Σπ = 1.
    let mut k = -p.transpose();
    for i in 0..s {
        k[(i, i)] += 1.0;
    }
    for c in 0..s {
        k[(s - 1, c)] = 1.0;
    }
    let mut rhs = DVector::zeros(s);
    rhs[s - 1] = 1.0;
    let x = solve(k, &rhs, "stationary distribution")?;
    if x.iter().any(|&v| v < -RESIDUAL_TOL) {
        return Err(Error::SingularSystem("stationary solve produced negative mass; chain is reducible".into()));
    }
    let x = x.map(|v| v.max(0.0));
    let x = &x / x.sum();
    // One power-iteration step must leave π in place.
    let step = p.transpose() * &x;
    let balance = (&step - &x).amax();
    if !(balance <= RESIDUAL_TOL) {
        return Err(Error::SingularSystem(format!("balance residual {balance:e}")));
    }
    Ok(StationaryDistribution { pi: (0..m).map(|i| (0..n).map(|j| x[i * n + j]).collect()).collect() })
}

/// J = Σ G(ḡ_m, z̄_n, μ_mn)·π_mn.
pub fn average_reward(policy: &Policy, problem: &ControlProblem) -> Result<f64> {
    let pi = stationary_distribution(policy, problem)?;
    Ok(weighted_reward(policy, problem, &pi))
}

fn weighted_reward(policy: &Policy, problem: &ControlProblem, pi: &StationaryDistribution) -> f64 {
    pi.pi
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &p)| (i, j, p)))
        .map(|(i, j, p)| p * problem.reward(i, j, policy.decide[i][j]))
        .sum()
}

/// Read off the per-ĝ threshold when every row reads "feedback iff n < n*".
pub fn extract_threshold(policy: &Policy, spec: &GridSpec) -> ThresholdProfile {
    let mut is_threshold = true;
    let y = policy
        .decide
        .iter()
        .map(|row| {
            let lead = row.iter().take_while(|&&d| d).count();
            if row[lead..].iter().any(|&d| d) {
                is_threshold = false;
            }
            spec.z_edges[lead]
        })
        .collect();
    ThresholdProfile { y, is_threshold }
}

/// ((2^(−α)(1 + Pḡ) − 1)/(Pḡ))⁺: below this alignment feedback already pays
/// within the slot.
pub fn threshold_lower_bound(gbar: f64, snr: f64, alpha: f64) -> f64 {
    let pg = snr * gbar;
    if !(pg > 0.0) {
        return 0.0;
    }
    ((2f64.powf(-alpha) * (1.0 + pg) - 1.0) / pg).clamp(0.0, 1.0)
}

/// Brute-force optimum over threshold policies.
///
/// Row m ranges over thresholds `z_edges[k]`, k = k_min(m)..=N, where k_min(m)
/// counts the grid points below [`threshold_lower_bound`]: the optimal policy
/// sends feedback wherever it pays within the slot. Each candidate is scored by
/// its stationary average reward.
pub fn exhaustive_threshold_search(problem: &ControlProblem) -> Result<SolveResult> {
    let (m, n) = problem.dims();
    let spec = &problem.spec;
    let k_min: Vec<usize> = (0..m)
        .map(|i| {
            let lb = threshold_lower_bound(spec.g_points[i], problem.rewards.snr, problem.rewards.alpha);
            // Feedback pays in-slot exactly where G(·,·,1) > G(·,·,0).
            let myopic = (0..n).take_while(|&j| problem.reward(i, j, true) > problem.reward(i, j, false)).count();
            let by_bound = spec.z_points.iter().filter(|&&z| z < lb).count();
            myopic.min(by_bound)
        })
        .collect();
    let candidates: u128 = k_min.iter().map(|&k| (n + 1 - k) as u128).product();
    if candidates > SEARCH_LIMIT {
        return Err(Error::SearchTooLarge { candidates, limit: SEARCH_LIMIT });
    }
    let mut digits = k_min.clone();
    let mut best: Option<(f64, Policy, StationaryDistribution)> = None;
    let mut evaluated = 0usize;
    loop {
        let y: Vec<f64> = digits.iter().map(|&k| spec.z_edges[k]).collect();
        let policy = Policy::from_thresholds(spec, &y)?;
        let pi = stationary_distribution(&policy, problem)?;
        let j = weighted_reward(&policy, problem, &pi);
        evaluated += 1;
        if best.as_ref().is_none_or(|(bj, _, _)| j > *bj) {
            best = Some((j, policy, pi));
        }
        // Mixed-radix increment.
        let mut pos = 0;
        loop {
            if pos == m {
                let (j, policy, pi) = best.expect("at least one candidate");
                let (_, a) = evaluate_policy(problem, &policy)?;
                let threshold = extract_threshold(&policy, spec);
                return Ok(SolveResult { policy, j, a, iterations: evaluated, pi, threshold });
            }
            if digits[pos] < n {
                digits[pos] += 1;
                break;
            }
            digits[pos] = k_min[pos];
            pos += 1;
        }
    }
}
