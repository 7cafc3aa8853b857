use serde::Serialize;

use evfb_core::simulator::{Curve, CSV_HEADER};

use crate::commands::{curves, CliError, Context, Outputs, RunMetadata};
use crate::config::{CodebookSection, ExperimentConfig};

/// Prices shared by every figure, reaching far enough that feedback stops.
pub const FIGURE_ALPHAS: [f64; 18] =
    [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 3.0, 4.0, 6.0, 10.0, 20.0, 50.0, 100.0];

struct Series {
    name: String,
    config: ExperimentConfig,
    periodic: bool,
}

#[derive(Serialize)]
struct SeriesMetadata {
    name: String,
    #[serde(flatten)]
    run: RunMetadata,
}

#[derive(Serialize)]
struct FigureMetadata {
    figure: u8,
    x_column: &'static str,
    y_column: &'static str,
    max_period: usize,
    series: Vec<SeriesMetadata>,
}

fn variant(
    base: &ExperimentConfig,
    antennas: usize,
    doppler: f64,
    codebook: Option<CodebookSection>,
) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.channel.antennas = antennas;
    cfg.channel.doppler = doppler;
    cfg.codebook = codebook;
    cfg.grid.model = None;
    cfg.rewards.alphas = FIGURE_ALPHAS.to_vec();
    cfg
}

fn series_for(figure: u8, base: &ExperimentConfig) -> Vec<Series> {
    let lloyd =
        CodebookSection { method: "lloyd".into(), size: 16, path: None, ..base.codebook.clone().unwrap_or_default() };
    match figure {
        3 | 5 => [0.1, 0.01]
            .iter()
            .map(|&fd| Series { name: format!("fd{fd}"), config: variant(base, 3, fd, None), periodic: true })
            .collect(),
        4 => [3, 4]
            .iter()
            .map(|&l| Series { name: format!("L{l}"), config: variant(base, l, 0.1, None), periodic: true })
            .collect(),
        _ => vec![
            Series { name: "perfect".into(), config: variant(base, 3, 0.1, None), periodic: false },
            Series { name: "quantized16".into(), config: variant(base, 3, 0.1, Some(lloyd)), periodic: false },
        ],
    }
}

fn axes(figure: u8) -> (&'static str, &'static str) {
    match figure {
        5 => ("feedback_rate", "throughput"),
        7 => ("alpha", "avg_threshold"),
        _ => ("alpha", "net"),
    }
}

fn push_rows(csv: &mut String, label: &str, curve: &Curve) {
    for line in curve.to_csv().lines().skip(1) {
        csv.push_str(label);
        csv.push(',');
        csv.push_str(line);
        csv.push('\n');
    }
}

pub fn reproduce(ctx: &Context, figure: u8) -> Result<Outputs, CliError> {
    let mut csv = format!("series,{CSV_HEADER}\n");
    let mut series_meta = Vec::new();
    for series in series_for(figure, &ctx.config) {
        ctx.log(format!("figure {figure}: series {}", series.name));
        let mut config = series.config;
        config.sweep.periodic = series.periodic;
        let sub = Context { config, quiet: ctx.quiet };
        let (controlled, periodic, run) = curves(&sub)?;
        let label = if series.periodic { format!("controlled_{}", series.name) } else { series.name.clone() };
        push_rows(&mut csv, &label, &controlled);
        if let Some(p) = periodic {
            push_rows(&mut csv, &format!("periodic_{}", series.name), &p);
        }
        series_meta.push(SeriesMetadata { name: series.name, run });
    }
    let (x_column, y_column) = axes(figure);
    let meta =
        FigureMetadata { figure, x_column, y_column, max_period: ctx.config.sweep.max_period, series: series_meta };
    let mut out = Outputs::default();
    out.add(ctx.path(&format!("fig{figure}.csv")), csv);
    out.add(
        ctx.path(&format!("fig{figure}.json")),
        serde_json::to_string_pretty(&meta).map_err(evfb_core::Error::from)?,
    );
    out.add(ctx.path(&format!("fig{figure}.config.toml")), ctx.config.to_toml());
    Ok(out)
}
