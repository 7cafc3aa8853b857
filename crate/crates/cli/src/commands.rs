use std::path::PathBuf;

use serde::Serialize;

use evfb_core::codebook::{epsilon_statistics, lloyd_codebook, random_codebook, Codebook, EpsStats};
use evfb_core::mdp::{policy_iteration_average, ControlProblem, SolveResult};
use evfb_core::rng::stream;
use evfb_core::simulator::{
    periodic_curve, simulate_policy, sweep_alpha, Curve, EvalResult, QuantizedFeedback, MAX_POLICY_ITERATIONS,
};
use evfb_core::state_grid::{estimate_transition_model, GridSpec, ModelDocument, TransitionModel};

use crate::config::{CodebookSection, ConfigError, ExperimentConfig};

const CODEBOOK_STREAM: u64 = 1 << 40;
const EPS_STREAM: u64 = (1 << 40) + 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Numerical(#[from] evfb_core::Error),
    #[error("cannot read {path}: {source}")]
    Input { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input { .. } | CliError::Output { .. } => 2,
            CliError::Numerical(evfb_core::Error::Json(_)) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

/// Files produced by a command, written only once everything succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, String)>,
}

impl Outputs {
    pub fn add(&mut self, path: PathBuf, content: String) {
        self.files.push((path, content));
    }

    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
        let cleanup = |staged: &[(PathBuf, PathBuf)]| {
            for (tmp, _) in staged {
                let _ = std::fs::remove_file(tmp);
            }
        };
        for (path, content) in &self.files {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                if let Err(source) = std::fs::create_dir_all(dir) {
                    cleanup(&staged);
                    return Err(CliError::Output { path: path.clone(), source });
                }
            }
            let mut tmp = path.clone().into_os_string();
            tmp.push(".partial");
            let tmp = PathBuf::from(tmp);
            if let Err(source) = std::fs::write(&tmp, content) {
                cleanup(&staged);
                return Err(CliError::Output { path: path.clone(), source });
            }
            staged.push((tmp, path.clone()));
        }
        for (tmp, path) in &staged {
            std::fs::rename(tmp, path).map_err(|source| CliError::Output { path: path.clone(), source })?;
        }
        Ok(staged.into_iter().map(|(_, p)| p).collect())
    }
}

pub struct Context {
    pub config: ExperimentConfig,
    pub quiet: bool,
}

impl Context {
    pub fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("evfb: {}", msg.as_ref());
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        PathBuf::from(format!("{}{name}", self.config.output))
    }

    fn echo_config(&self, outputs: &mut Outputs, command: &str) {
        outputs.add(self.path(&format!("{command}.config.toml")), self.config.to_toml());
    }
}

fn read(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Input { path: path.clone(), source })
}

pub fn codebook_for(ctx: &Context, section: &CodebookSection, antennas: usize) -> Result<Codebook, CliError> {
    if let Some(path) = &section.path {
        let cb = Codebook::from_json(&read(path)?)?;
        if cb.antennas() != antennas {
            return Err(ConfigError::Invalid(format!(
                "codebook {} has {} antennas, channel has {antennas}",
                path.display(),
                cb.antennas()
            ))
            .into());
        }
        return Ok(cb);
    }
    let mut rng = stream(ctx.config.seed, CODEBOOK_STREAM);
    ctx.log(format!("training {} codebook, size {}", section.method, section.size));
    let mut cb = match section.method.as_str() {
        "random" => random_codebook(antennas, section.size, &mut rng)?,
        _ => lloyd_codebook(antennas, section.size, section.training, section.iterations, &mut rng)?,
    };
    cb.seed = Some(ctx.config.seed);
    Ok(cb)
}

pub fn eps_for(ctx: &Context, cb: &Codebook, section: &CodebookSection, spec: &GridSpec) -> Result<EpsStats, CliError> {
    let mut rng = stream(ctx.config.seed, EPS_STREAM);
    Ok(epsilon_statistics(cb, ctx.config.snr(), &spec.g_points, section.eps_samples, &mut rng)?)
}

pub fn model_for(ctx: &Context, codebook: Option<&Codebook>) -> Result<(GridSpec, TransitionModel), CliError> {
    let cfg = &ctx.config;
    if let Some(path) = &cfg.grid.model {
        ctx.log(format!("loading model {}", path.display()));
        return Ok(ModelDocument::from_json(&read(path)?)?);
    }
    let spec = GridSpec::new(cfg.channel.antennas, cfg.grid.m, cfg.grid.n)?;
    ctx.log(format!("estimating {}x{} model from {} draws", cfg.grid.m, cfg.grid.n, cfg.grid.samples));
    let model = estimate_transition_model(&cfg.fading()?, &spec, cfg.grid.samples, cfg.model_seed(), codebook)?;
    for w in &model.warnings {
        ctx.log(format!("warning: {w}"));
    }
    Ok((spec, model))
}

struct Setup {
    spec: GridSpec,
    model: TransitionModel,
    quantized: Option<(Codebook, EpsStats)>,
}

fn setup(ctx: &Context) -> Result<Setup, CliError> {
    let antennas = ctx.config.channel.antennas;
    let codebook = match &ctx.config.codebook {
        Some(section) => Some((codebook_for(ctx, section, antennas)?, section)),
        None => None,
    };
    let (spec, model) = model_for(ctx, codebook.as_ref().map(|(cb, _)| cb))?;
    let quantized = match codebook {
        Some((cb, section)) => {
            let eps = eps_for(ctx, &cb, section, &spec)?;
            Some((cb, eps))
        }
        None => None,
    };
    Ok(Setup { spec, model, quantized })
}

fn solve_at(setup: &Setup, ctx: &Context, alpha: f64) -> Result<SolveResult, CliError> {
    let rewards = ctx.config.reward_spec(alpha)?;
    let problem = match &setup.quantized {
        Some((_, eps)) => ControlProblem::quantized(&setup.spec, &setup.model, &rewards, eps)?,
        None => ControlProblem::perfect(&setup.spec, &setup.model, &rewards)?,
    };
    Ok(policy_iteration_average(&problem, MAX_POLICY_ITERATIONS)?)
}

pub fn model(ctx: &Context) -> Result<Outputs, CliError> {
    let antennas = ctx.config.channel.antennas;
    let codebook = match &ctx.config.codebook {
        Some(section) => Some(codebook_for(ctx, section, antennas)?),
        None => None,
    };
    let (spec, model) = model_for(ctx, codebook.as_ref())?;
    let mut out = Outputs::default();
    out.add(ctx.path("model.json"), ModelDocument::new(&spec, &model).to_json()?);
    ctx.echo_config(&mut out, "model");
    Ok(out)
}

pub fn solve(ctx: &Context) -> Result<Outputs, CliError> {
    let setup = setup(ctx)?;
    let solved = solve_at(&setup, ctx, ctx.config.rewards.alpha)?;
    ctx.log(format!("J = {:.6} after {} iterations", solved.j, solved.iterations));
    let mut out = Outputs::default();
    out.add(ctx.path("solve.json"), solved.to_json()?);
    ctx.echo_config(&mut out, "solve");
    Ok(out)
}

#[derive(Serialize)]
struct EvaluateDocument {
    alpha: f64,
    #[serde(flatten)]
    result: EvalResult,
    model_j: f64,
    iterations: usize,
}

pub fn evaluate(ctx: &Context) -> Result<Outputs, CliError> {
    let setup = setup(ctx)?;
    let alpha = ctx.config.rewards.alpha;
    let solved = solve_at(&setup, ctx, alpha)?;
    let traj = ctx.config.trajectory()?;
    ctx.log(format!("simulating {} slots", traj.slots));
    let result = simulate_policy(
        &solved.policy,
        &setup.spec,
        &ctx.config.fading()?,
        &ctx.config.reward_spec(alpha)?,
        &traj,
        setup.quantized.as_ref().map(|(cb, _)| cb),
    )?;
    let doc = EvaluateDocument { alpha, result, model_j: solved.j, iterations: solved.iterations };
    let mut out = Outputs::default();
    out.add(ctx.path("eval.json"), serde_json::to_string_pretty(&doc).map_err(evfb_core::Error::from)?);
    ctx.echo_config(&mut out, "evaluate");
    Ok(out)
}

#[derive(Serialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub model_seed: u64,
    pub trajectory_seed: u64,
    pub antennas: usize,
    pub doppler: f64,
    pub snr: f64,
    pub m: usize,
    pub n: usize,
    pub model_samples: usize,
    pub slots: usize,
    pub warmup: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub codebook: Option<CodebookSummary>,
}

#[derive(Serialize)]
pub struct CodebookSummary {
    pub method: String,
    pub size: usize,
    pub mean_eps: f64,
    pub mean_log2_eps: f64,
}

impl RunMetadata {
    pub fn new(cfg: &ExperimentConfig, spec: &GridSpec, quantized: Option<(&Codebook, &EpsStats)>) -> Self {
        Self {
            seed: cfg.seed,
            model_seed: cfg.model_seed(),
            trajectory_seed: cfg.trajectory_seed(),
            antennas: cfg.channel.antennas,
            doppler: cfg.channel.doppler,
            snr: cfg.snr(),
            m: spec.m,
            n: spec.n,
            model_samples: cfg.grid.samples,
            slots: cfg.trajectory.slots,
            warmup: cfg.trajectory.warmup,
            codebook: quantized.map(|(cb, eps)| CodebookSummary {
                method: cb.method.clone(),
                size: cb.size(),
                mean_eps: eps.mean_eps,
                mean_log2_eps: eps.mean_log2_eps,
            }),
        }
    }
}

/// Controlled curve and, when asked for, the periodic baseline on the same seed.
pub fn curves(ctx: &Context) -> Result<(Curve, Option<Curve>, RunMetadata), CliError> {
    let setup = setup(ctx)?;
    let cfg = &ctx.config;
    let params = cfg.fading()?;
    let template = cfg.reward_spec(0.0)?;
    let traj = cfg.trajectory()?;
    let quantized = setup.quantized.as_ref().map(|(cb, eps)| QuantizedFeedback { codebook: cb, eps });
    ctx.log(format!("sweeping {} prices", cfg.rewards.alphas.len()));
    let controlled = sweep_alpha(&cfg.rewards.alphas, &setup.spec, &setup.model, &params, &template, &traj, quantized)?;
    let periodic = if cfg.sweep.periodic {
        ctx.log(format!("periodic baseline up to period {}", cfg.sweep.max_period));
        Some(periodic_curve(
            &cfg.rewards.alphas,
            &params,
            &template,
            cfg.sweep.max_period,
            &traj,
            setup.quantized.as_ref().map(|(cb, _)| cb),
        )?)
    } else {
        None
    };
    let meta = RunMetadata::new(cfg, &setup.spec, setup.quantized.as_ref().map(|(cb, eps)| (cb, eps)));
    Ok((controlled, periodic, meta))
}

pub fn sweep(ctx: &Context) -> Result<Outputs, CliError> {
    let (controlled, periodic, meta) = curves(ctx)?;
    let mut out = Outputs::default();
    out.add(ctx.path("sweep.csv"), controlled.to_csv());
    if let Some(p) = periodic {
        out.add(ctx.path("sweep_periodic.csv"), p.to_csv());
    }
    out.add(ctx.path("sweep.json"), serde_json::to_string_pretty(&meta).map_err(evfb_core::Error::from)?);
    ctx.echo_config(&mut out, "sweep");
    Ok(out)
}

pub fn codebook(ctx: &Context) -> Result<Outputs, CliError> {
    let section = ctx.config.codebook.clone().unwrap_or_default();
    let cb = codebook_for(ctx, &section, ctx.config.channel.antennas)?;
    let mut out = Outputs::default();
    out.add(ctx.path("codebook.json"), cb.to_json()?);
    ctx.echo_config(&mut out, "codebook");
    Ok(out)
}
