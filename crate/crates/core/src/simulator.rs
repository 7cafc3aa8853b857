//! Monte Carlo evaluation of feedback policies on simulated fading trajectories.
//!
//! The controller sees the quantized state (ĝ, ẑ); throughput accrues with the
//! true (g, z). Feedback takes effect in the slot that triggers it. The channel
//! trajectory depends only on the seed, so runs that share a seed share their
//! fading realization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{alignment_unchecked, sample_isotropic_channel, FadingParams};
use crate::codebook::{Codebook, EpsStats};
use crate::error::{Error, Result};
use crate::mdp::{policy_iteration_average, ControlProblem, Policy, RewardSpec, ThresholdProfile};
use crate::rng::seeded;
use crate::state_grid::{estimate_transition_model, GridSpec, StationaryDistribution, TransitionModel};

pub const BATCHES: usize = 100;
pub const DEFAULT_WARMUP: usize = 1000;
/// Policy-iteration cap used by the sweeps.
pub const MAX_POLICY_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub slots: usize,
    /// Leading slots excluded from the averages.
    pub warmup: usize,
    pub seed: u64,
}

impl TrajectoryConfig {
    pub fn new(slots: usize, warmup: usize, seed: u64) -> Result<Self> {
        if slots <= warmup {
            return Err(Error::InvalidParameter(format!("slots ({slots}) must exceed warmup ({warmup})")));
        }
        if slots - warmup < BATCHES {
            return Err(Error::InvalidParameter(format!("need at least {BATCHES} measured slots")));
        }
        Ok(Self { slots, warmup, seed })
    }

    pub fn measured(&self) -> usize {
        self.slots - self.warmup
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Mean log₂(1 + P·g·z).
    pub throughput: f64,
    /// Fraction of slots with feedback.
    pub feedback_rate: f64,
    /// throughput − α·feedback_rate.
    pub net: f64,
    /// Batch-means standard error of `net`.
    pub stderr: f64,
}

/// Per-slot feedback rule of a simulated controller.
pub trait FeedbackRule {
    fn decide(&mut self, slot: usize, m: usize, n: usize) -> bool;
}

struct FromPolicy<'a>(&'a Policy);

impl FeedbackRule for FromPolicy<'_> {
    fn decide(&mut self, _slot: usize, m: usize, n: usize) -> bool {
        self.0.decide[m][n]
    }
}

/// Feedback in every k-th slot.
pub struct Periodic(pub usize);

impl FeedbackRule for Periodic {
    fn decide(&mut self, slot: usize, _m: usize, _n: usize) -> bool {
        slot.is_multiple_of(self.0)
    }
}

fn check_codebook(params: &FadingParams, codebook: Option<&Codebook>) -> Result<()> {
    match codebook {
        Some(cb) if cb.antennas() != params.antennas => {
            Err(Error::DimensionMismatch { expected: params.antennas, found: cb.antennas() })
        }
        _ => Ok(()),
    }
}

/// Per-batch sums of one trajectory; the price enters only at summary time.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTotals {
    pub rate: Vec<f64>,
    pub feedback: Vec<usize>,
    pub slots: Vec<usize>,
}

impl BatchTotals {
    pub fn summarize(&self, alpha: f64) -> EvalResult {
        let measured: usize = self.slots.iter().sum();
        let total_rate: f64 = self.rate.iter().sum();
        let total_fb: usize = self.feedback.iter().sum();
        let throughput = total_rate / measured as f64;
        let feedback_rate = total_fb as f64 / measured as f64;
        let net = throughput - alpha * feedback_rate;
        let b = self.rate.len();
        let nets: Vec<f64> =
            (0..b).map(|k| (self.rate[k] - alpha * self.feedback[k] as f64) / self.slots[k] as f64).collect();
        let mean = nets.iter().sum::<f64>() / b as f64;
        let var = nets.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
        EvalResult { throughput, feedback_rate, net, stderr: (var / b as f64).sqrt() }
    }
}

/// Run one trajectory under an arbitrary rule and keep the batch sums.
pub fn simulate_batches<F: FeedbackRule>(
    rule: &mut F,
    spec: &GridSpec,
    params: &FadingParams,
    snr: f64,
    config: &TrajectoryConfig,
    codebook: Option<&Codebook>,
) -> Result<BatchTotals> {
    check_codebook(params, codebook)?;
    let mut rng = seeded(config.seed);
    let mut state = sample_isotropic_channel(params.antennas, &mut rng)?;
    let mut f = state.s.clone();
    let measured = config.measured();
    let mut totals = BatchTotals { rate: vec![0.0; BATCHES], feedback: vec![0; BATCHES], slots: vec![0; BATCHES] };
    for slot in 0..config.slots {
        if slot > 0 {
            state.evolve_in_place(params, &mut rng);
        }
        let mut z = alignment_unchecked(&state.s, &f).min(1.0);
        let (m, n) = (spec.g_bin(state.g), spec.z_bin(z));
        let feedback = rule.decide(slot, m, n);
        if feedback {
            match codebook {
                Some(cb) => {
                    let (idx, eps) = cb.nearest(&state.s);
                    f.clone_from(&cb.vectors[idx]);
                    z = eps;
                }
                None => {
                    f.clone_from(&state.s);
                    z = 1.0;
                }
            }
        }
        if slot >= config.warmup {
            let k = (slot - config.warmup) * BATCHES / measured;
            totals.rate[k] += (1.0 + snr * state.g * z).log2();
            totals.feedback[k] += usize::from(feedback);
            totals.slots[k] += 1;
        }
    }
    Ok(totals)
}

/// Run one trajectory under an arbitrary rule.
pub fn simulate_rule<F: FeedbackRule>(
    rule: &mut F,
    spec: &GridSpec,
    params: &FadingParams,
    rewards: &RewardSpec,
    config: &TrajectoryConfig,
    codebook: Option<&Codebook>,
) -> Result<EvalResult> {
    Ok(simulate_batches(rule, spec, params, rewards.snr, config, codebook)?.summarize(rewards.alpha))
}

/// Evaluate a state-feedback policy; `codebook` switches to quantized feedback.
pub fn simulate_policy(
    policy: &Policy,
    spec: &GridSpec,
    params: &FadingParams,
    rewards: &RewardSpec,
    config: &TrajectoryConfig,
    codebook: Option<&Codebook>,
) -> Result<EvalResult> {
    let (m, n) = policy.dims();
    if m != spec.m {
        return Err(Error::DimensionMismatch { expected: spec.m, found: m });
    }
    if n != spec.n || policy.decide.iter().any(|r| r.len() != spec.n) {
        return Err(Error::DimensionMismatch { expected: spec.n, found: n });
    }
    simulate_rule(&mut FromPolicy(policy), spec, params, rewards, config, codebook)
}

/// Batch sums for feedback every k slots, k = 1..=max_period, on one seed.
pub fn periodic_runs(
    params: &FadingParams,
    snr: f64,
    max_period: usize,
    config: &TrajectoryConfig,
    codebook: Option<&Codebook>,
) -> Result<Vec<BatchTotals>> {
    if max_period == 0 {
        return Err(Error::InvalidParameter("max_period must be at least 1".into()));
    }
    // The grid only feeds the ignored state lookup.
    let spec = GridSpec::from_parts(vec![0.0, f64::INFINITY], vec![1.0], vec![0.0, 1.0], vec![0.5])?;
    (1..=max_period)
        .into_par_iter()
        .map(|k| simulate_batches(&mut Periodic(k), &spec, params, snr, config, codebook))
        .collect()
}

fn best_period(runs: &[BatchTotals], alpha: f64) -> (usize, EvalResult) {
    runs.iter()
        .enumerate()
        .map(|(i, r)| (i + 1, r.summarize(alpha)))
        .fold(None, |best: Option<(usize, EvalResult)>, (k, r)| match best {
            Some((_, b)) if b.net >= r.net => best,
            _ => Some((k, r)),
        })
        .expect("at least one period")
}

/// Best fixed feedback interval k ∈ 1..=max_period, all on one trajectory.
pub fn periodic_baseline(
    params: &FadingParams,
    rewards: &RewardSpec,
    max_period: usize,
    config: &TrajectoryConfig,
    codebook: Option<&Codebook>,
) -> Result<(usize, EvalResult)> {
    let runs = periodic_runs(params, rewards.snr, max_period, config, codebook)?;
    Ok(best_period(&runs, rewards.alpha))
}

/// Σ_m y[m]·π_g[m].
pub fn average_threshold(profile: &ThresholdProfile, pi: &StationaryDistribution) -> Result<f64> {
    if !profile.is_threshold {
        return Err(Error::NotThreshold);
    }
    let gm = pi.g_marginal();
    if gm.len() != profile.y.len() {
        return Err(Error::DimensionMismatch { expected: profile.y.len(), found: gm.len() });
    }
    Ok(profile.y.iter().zip(&gm).map(|(y, p)| y * p).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub net: f64,
    pub throughput: f64,
    pub feedback_rate: f64,
    /// NaN for schemes without a threshold.
    pub avg_threshold: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
}

pub const CSV_HEADER: &str = "alpha,net,throughput,feedback_rate,avg_threshold,stderr";

impl Curve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.alpha, p.net, p.throughput, p.feedback_rate, p.avg_threshold, p.stderr
            ));
        }
        out
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.alpha).collect()
    }
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::InvalidParameter("empty price list".into()));
    }
    if alphas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("prices must be strictly increasing".into()));
    }
    Ok(())
}

/// Quantized-feedback inputs for a sweep.
#[derive(Debug, Clone, Copy)]
pub struct QuantizedFeedback<'a> {
    pub codebook: &'a Codebook,
    pub eps: &'a EpsStats,
}

/// Solve and simulate the optimal policy at every price on one shared model
/// and one shared trajectory seed.
#[allow(clippy::too_many_arguments)]
pub fn sweep_alpha(
    alphas: &[f64],
    spec: &GridSpec,
    model: &TransitionModel,
    params: &FadingParams,
    template: &RewardSpec,
    config: &TrajectoryConfig,
    quantized: Option<QuantizedFeedback<'_>>,
) -> Result<Curve> {
    check_alphas(alphas)?;
    let base = match quantized {
        Some(q) => ControlProblem::quantized(spec, model, template, q.eps)?,
        None => ControlProblem::perfect(spec, model, template)?,
    };
    let points = alphas
        .par_iter()
        .map(|&alpha| {
            let problem = base.with_alpha(alpha)?;
            let solved = policy_iteration_average(&problem, MAX_POLICY_ITERATIONS)?;
            let rewards = problem.rewards;
            let eval = simulate_policy(&solved.policy, spec, params, &rewards, config, quantized.map(|q| q.codebook))?;
            let avg = average_threshold(&solved.threshold, &solved.pi).unwrap_or(f64::NAN);
            Ok(CurvePoint {
                alpha,
                net: eval.net,
                throughput: eval.throughput,
                feedback_rate: eval.feedback_rate,
                avg_threshold: avg,
                stderr: eval.stderr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Curve { points })
}

/// Periodic-feedback curve: the best interval at each price.
pub fn periodic_curve(
    alphas: &[f64],
    params: &FadingParams,
    template: &RewardSpec,
    max_period: usize,
    config: &TrajectoryConfig,
    codebook: Option<&Codebook>,
) -> Result<Curve> {
    check_alphas(alphas)?;
    let runs = periodic_runs(params, template.snr, max_period, config, codebook)?;
    let points = alphas
        .iter()
        .map(|&alpha| {
            template.with_alpha(alpha)?;
            let (_, eval) = best_period(&runs, alpha);
            Ok(CurvePoint {
                alpha,
                net: eval.net,
                throughput: eval.throughput,
                feedback_rate: eval.feedback_rate,
                avg_threshold: f64::NAN,
                stderr: eval.stderr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Curve { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    pub m: usize,
    pub n: usize,
    pub j: f64,
    pub iterations: usize,
}

/// Optimal average reward of the discretized problem at several grid sizes.
/// Each model uses `samples_per_state · M · N` draws.
pub fn refinement_study(
    sizes: &[(usize, usize)],
    params: &FadingParams,
    rewards: &RewardSpec,
    samples_per_state: usize,
    seed: u64,
) -> Result<Vec<RefinementRow>> {
    if sizes.windows(2).any(|w| w[1].0 < w[0].0 || w[1].1 < w[0].1) {
        return Err(Error::InvalidParameter("grid sizes must be nondecreasing".into()));
    }
    sizes
        .iter()
        .map(|&(m, n)| {
            let spec = GridSpec::new(params.antennas, m, n)?;
            let model = estimate_transition_model(params, &spec, samples_per_state * m * n, seed, None)?;
            let solved =
                policy_iteration_average(&ControlProblem::perfect(&spec, &model, rewards)?, MAX_POLICY_ITERATIONS)?;
            Ok(RefinementRow { m, n, j: solved.j, iterations: solved.iterations })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::random_codebook;
    use crate::mdp::{average_reward, Policy};

    // ∫∫ log₂(1 + 100·g·z) dΓ(3,1)(g) dBeta(1,2)(z), adaptive quadrature.
    const NO_FEEDBACK: f64 = 5.884_048_233_683_472;
    // ∫ log₂(1 + 100·g) dΓ(3,1)(g).
    const FULL_FEEDBACK: f64 = 7.982_331_039_887_322;

    fn setup(doppler: f64) -> (GridSpec, FadingParams, RewardSpec) {
        (GridSpec::new(3, 4, 4).unwrap(), FadingParams::new(3, doppler).unwrap(), RewardSpec::new(100.0, 0.0).unwrap())
    }

    #[test]
    fn trajectory_config_validation() {
        assert!(TrajectoryConfig::new(100, 100, 0).is_err());
        assert!(TrajectoryConfig::new(150, 100, 0).is_err());
        assert_eq!(TrajectoryConfig::new(1100, 1000, 0).unwrap().measured(), 100);
    }

    #[test]
    fn never_feedback_matches_quadrature() {
        let (spec, params, rewards) = setup(0.1);
        let cfg = TrajectoryConfig::new(1_000_000, DEFAULT_WARMUP, 1).unwrap();
        let r = simulate_policy(&Policy::constant(4, 4, false), &spec, &params, &rewards, &cfg, None).unwrap();
        assert_eq!(r.feedback_rate, 0.0);
        assert!((r.throughput - NO_FEEDBACK).abs() < 3.0 * r.stderr, "{} ± {}", r.throughput, r.stderr);
    }

    #[test]
    fn always_feedback_matches_quadrature() {
        let (spec, params, rewards) = setup(0.1);
        let cfg = TrajectoryConfig::new(400_000, DEFAULT_WARMUP, 2).unwrap();
        let r = simulate_policy(&Policy::constant(4, 4, true), &spec, &params, &rewards, &cfg, None).unwrap();
        assert_eq!(r.feedback_rate, 1.0);
        assert!((r.throughput - FULL_FEEDBACK).abs() < 3.0 * r.stderr);
    }

    #[test]
    fn net_identity_and_determinism() {
        let (spec, params, _) = setup(0.05);
        let rewards = RewardSpec::new(100.0, 0.7).unwrap();
        let mut policy = Policy::constant(4, 4, false);
        policy.decide[2][0] = true;
        policy.decide[3][0] = true;
        policy.decide[3][1] = true;
        let cfg = TrajectoryConfig::new(50_000, 100, 3).unwrap();
        let a = simulate_policy(&policy, &spec, &params, &rewards, &cfg, None).unwrap();
        let b = simulate_policy(&policy, &spec, &params, &rewards, &cfg, None).unwrap();
        assert_eq!(a, b);
        assert!((a.net - (a.throughput - 0.7 * a.feedback_rate)).abs() < 1e-12);
        assert!(a.feedback_rate > 0.0 && a.feedback_rate < 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        let (spec, params, rewards) = setup(0.1);
        let cfg = TrajectoryConfig::new(2000, 100, 0).unwrap();
        assert!(simulate_policy(&Policy::constant(3, 4, false), &spec, &params, &rewards, &cfg, None).is_err());
        let cb = random_codebook(2, 4, &mut seeded(0)).unwrap();
        assert!(simulate_policy(&Policy::constant(4, 4, true), &spec, &params, &rewards, &cfg, Some(&cb)).is_err());
    }

    #[test]
    fn periodic_examples() {
        let params = FadingParams::new(3, 0.1).unwrap();
        let cfg = TrajectoryConfig::new(200_000, DEFAULT_WARMUP, 4).unwrap();
        let (k, r) = periodic_baseline(&params, &RewardSpec::new(100.0, 0.0).unwrap(), 6, &cfg, None).unwrap();
        assert_eq!(k, 1);
        assert_eq!(r.feedback_rate, 1.0);
        let alpha = 0.4;
        let (_, one) = periodic_baseline(&params, &RewardSpec::new(100.0, alpha).unwrap(), 1, &cfg, None).unwrap();
        assert!((one.net - (FULL_FEEDBACK - alpha)).abs() < 3.0 * one.stderr);
        let pricey = RewardSpec::new(100.0, 50.0).unwrap();
        let (k, r) = periodic_baseline(&params, &pricey, 40, &cfg, None).unwrap();
        assert_eq!(k, 40);
        assert!(r.net > NO_FEEDBACK - 1.5 && r.net < NO_FEEDBACK + 0.2, "{}", r.net);
        assert!(periodic_baseline(&params, &pricey, 0, &cfg, None).is_err());
    }

    #[test]
    fn average_threshold_examples() {
        let pi = StationaryDistribution { pi: vec![vec![0.1, 0.2], vec![0.3, 0.4]] };
        let ones = ThresholdProfile { y: vec![1.0, 1.0], is_threshold: true };
        let zeros = ThresholdProfile { y: vec![0.0, 0.0], is_threshold: true };
        assert!((average_threshold(&ones, &pi).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(average_threshold(&zeros, &pi).unwrap(), 0.0);
        let mixed = ThresholdProfile { y: vec![0.5, 0.25], is_threshold: true };
        assert!((average_threshold(&mixed, &pi).unwrap() - (0.5 * 0.3 + 0.25 * 0.7)).abs() < 1e-12);
        let bad = ThresholdProfile { is_threshold: false, ..ones };
        assert!(matches!(average_threshold(&bad, &pi), Err(Error::NotThreshold)));
    }

    #[test]
    fn sweep_endpoints() {
        let params = FadingParams::new(3, 0.1).unwrap();
        let spec = GridSpec::new(3, 8, 8).unwrap();
        let model = estimate_transition_model(&params, &spec, 200_000, 5, None).unwrap();
        let template = RewardSpec::new(100.0, 0.0).unwrap();
        let cfg = TrajectoryConfig::new(100_000, DEFAULT_WARMUP, 6).unwrap();
        let curve = sweep_alpha(&[0.0, 30.0], &spec, &model, &params, &template, &cfg, None).unwrap();
        let first = curve.points[0];
        assert_eq!(first.feedback_rate, 1.0);
        assert!((first.avg_threshold - 1.0).abs() < 1e-12);
        let last = curve.points[1];
        assert_eq!(last.feedback_rate, 0.0);
        assert_eq!(last.avg_threshold, 0.0);
        assert!(curve.to_csv().starts_with(CSV_HEADER));
        assert_eq!(curve.to_csv().lines().count(), 3);
        assert!(sweep_alpha(&[1.0, 1.0], &spec, &model, &params, &template, &cfg, None).is_err());
    }

    #[test]
    fn optimal_policy_beats_random_thresholds() {
        let params = FadingParams::new(3, 0.1).unwrap();
        let spec = GridSpec::new(3, 6, 6).unwrap();
        let model = estimate_transition_model(&params, &spec, 100_000, 7, None).unwrap();
        let problem = ControlProblem::perfect(&spec, &model, &RewardSpec::new(100.0, 1.0).unwrap()).unwrap();
        let best = policy_iteration_average(&problem, 50).unwrap();
        let mut rng = seeded(8);
        for _ in 0..10 {
            let y: Vec<f64> = (0..6).map(|_| rand::Rng::random_range(&mut rng, 0.0..1.0)).collect();
            let policy = Policy::from_thresholds(&spec, &y).unwrap();
            assert!(average_reward(&policy, &problem).unwrap() <= best.j + 1e-9);
        }
    }

    #[test]
    fn quantized_feedback_reduces_alignment() {
        let (spec, params, rewards) = setup(0.1);
        let cb = random_codebook(3, 8, &mut seeded(9)).unwrap();
        let cfg = TrajectoryConfig::new(100_000, DEFAULT_WARMUP, 10).unwrap();
        let all = Policy::constant(4, 4, true);
        let q = simulate_policy(&all, &spec, &params, &rewards, &cfg, Some(&cb)).unwrap();
        let p = simulate_policy(&all, &spec, &params, &rewards, &cfg, None).unwrap();
        assert!(q.throughput < p.throughput);
    }

    #[test]
    fn refinement_single_state() {
        let params = FadingParams::new(3, 0.1).unwrap();
        let rewards = RewardSpec::new(100.0, 1.0).unwrap();
        let rows = refinement_study(&[(1, 1)], &params, &rewards, 1000, 11).unwrap();
        let spec = GridSpec::new(3, 1, 1).unwrap();
        let g0 = (1.0 + 100.0 * spec.g_points[0] * 0.5f64).log2();
        let g1 = (1.0 + 100.0 * spec.g_points[0]).log2() - 1.0;
        assert!((rows[0].j - g0.max(g1)).abs() < 1e-12);
    }
}
