//! Command line front end: JSON run configs in, JSON reports or CSV tables
//! out, with an optional SVG heatmap for the parameter sweep.
//!
//! Exit codes: 0 success, 2 configuration or validation error, 3 numeric or
//! runtime failure. Every seeded stage is bit-reproducible; `--seed`
//! overrides the seeds in the config file.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::gfunction::{g_analytic, g_monte_carlo, Mode};
use crate::moran_sim::{
    emit_intervals, estimate_dimension, generate, Regime, SimError,
};
use crate::param_space::{Atom, Bounds, ParamDistribution, Variant};
use crate::solver::{
    find_crossing, similarity_dimension, small_phi_dims, uniformp_closed_form, CrossingKind,
    CrossingResult, Side, DEFAULT_THETA_CAP, DEFAULT_TOL,
};

/// Λ constraint from the sweep's parameter plane: `1/50 <= min(a, b)` and
/// `a + b <= 49/50`. Grid sums get a small slack so edge nodes built from
/// repeated decimal steps are not dropped to round-off.
pub const LAMBDA_MIN: f64 = 1.0 / 50.0;
pub const LAMBDA_SUM_MAX: f64 = 49.0 / 50.0;
const LAMBDA_SLACK: f64 = 1e-9;

#[derive(Parser)]
#[command(
    name = "moran-dim",
    version,
    about = "Almost-sure dimensions of random one-variable Moran measures"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Analytic dimensions: diagonal crossings and essential-bound values.
    Solve(CommonArgs),
    /// Table of G and G' over a theta grid.
    Gcurve(CommonArgs),
    /// Upper dimension over the (a, b) plane, optionally as an SVG heatmap.
    Sweep(CommonArgs),
    /// Empirical window estimates against the analytic values.
    Simulate(CommonArgs),
    /// Explicit interval coordinates of a sampled two-child construction.
    Geometry(CommonArgs),
}

#[derive(Args)]
pub struct CommonArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides every seeded stage of the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the primary output here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<crate::param_space::ConstraintViolation> for CliError {
    fn from(err: crate::param_space::ConstraintViolation) -> Self {
        CliError::Config(err.to_string())
    }
}

impl From<crate::solver::SolverError> for CliError {
    fn from(err: crate::solver::SolverError) -> Self {
        CliError::Numeric(err.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(err: SimError) -> Self {
        CliError::Numeric(err.to_string())
    }
}

impl From<crate::gfunction::GError> for CliError {
    fn from(err: crate::gfunction::GError) -> Self {
        CliError::Numeric(err.to_string())
    }
}

/// Full run configuration. Unknown keys are rejected at every level so a
/// typo fails loudly instead of silently using a default.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub distribution: Option<DistSpec>,
    pub bounds: Option<BoundsSpec>,
    pub solve: Option<SolveSpec>,
    pub gcurve: Option<GcurveSpec>,
    pub sweep: Option<SweepSpec>,
    pub simulate: Option<SimulateSpec>,
    pub geometry: Option<GeometrySpec>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistSpec {
    PointMass { ratios: Vec<f64>, probs: Vec<f64> },
    FiniteMixture { weights: Vec<f64>, atoms: Vec<AtomSpec> },
    UniformP { a: f64, b: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub ratios: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Explicit scale bounds; when absent the tightest bounds consistent with
/// the declared support are derived.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    /// Separation constant; defaults to `1 - B` (the interval model's gap).
    pub tau: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSpec {
    pub tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcurveSpec {
    pub theta_min: f64,
    pub theta_max: f64,
    pub step: f64,
    /// When set, adds Monte Carlo columns for the upper G.
    pub mc_samples: Option<u64>,
    pub mc_seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub grid: GridSpec,
    /// Also write a heatmap next to `--out` (same stem, .svg).
    #[serde(default)]
    pub svg: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub depth: usize,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "N_min")]
    pub n_min: usize,
    #[serde(rename = "N_max")]
    pub n_max: usize,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub depth_cap: usize,
    pub seed: u64,
}

/// Entry point behind `main`. Clap handles usage errors itself (exit 2).
pub fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let (args, output) = match &cli.command {
        Command::Solve(args) => (args, cmd_solve(&load_config(args)?)?),
        Command::Gcurve(args) => (args, cmd_gcurve(&load_config(args)?, args.seed)?),
        Command::Sweep(args) => {
            let config = load_config(args)?;
            let (csv, svg) = cmd_sweep(&config)?;
            if let Some(svg) = svg {
                let out = args.out.as_ref().ok_or_else(|| {
                    CliError::Config("sweep.svg requires --out to name the heatmap file".into())
                })?;
                let path = out.with_extension("svg");
                std::fs::write(&path, svg).map_err(|e| {
                    CliError::Numeric(format!("cannot write {}: {e}", path.display()))
                })?;
            }
            (args, csv)
        }
        Command::Simulate(args) => (args, cmd_simulate(&load_config(args)?, args.seed)?),
        Command::Geometry(args) => (args, cmd_geometry(&load_config(args)?, args.seed)?),
    };
    match &args.out {
        Some(path) => std::fs::write(path, output)
            .map_err(|e| CliError::Numeric(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{output}");
            Ok(())
        }
    }
}

fn load_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))
}

/// Builds the distribution from the config, with explicit bounds when given.
pub fn build_distribution(config: &RunConfig) -> Result<ParamDistribution, CliError> {
    let spec = config
        .distribution
        .as_ref()
        .ok_or_else(|| CliError::Config("config needs a \"distribution\" block".into()))?;
    let variant = match spec {
        DistSpec::PointMass { ratios, probs } => Variant::PointMass {
            atom: Atom::new(ratios.clone(), probs.clone()),
        },
        DistSpec::FiniteMixture { weights, atoms } => Variant::FiniteMixture {
            weights: weights.clone(),
            atoms: atoms
                .iter()
                .map(|a| Atom::new(a.ratios.clone(), a.probs.clone()))
                .collect(),
        },
        DistSpec::UniformP { a, b } => Variant::UniformP { a: *a, b: *b },
    };
    match &config.bounds {
        Some(spec) => {
            let bounds = Bounds::new(spec.a, spec.b, spec.tau.unwrap_or(1.0 - spec.b))?;
            Ok(ParamDistribution::with_bounds(variant, bounds)?)
        }
        None => {
            // Rebuild through the tightest-bounds constructors.
            Ok(match variant {
                Variant::PointMass { atom } => ParamDistribution::point_mass(atom)?,
                Variant::FiniteMixture { weights, atoms } => {
                    ParamDistribution::finite_mixture(weights, atoms)?
                }
                Variant::UniformP { a, b } => ParamDistribution::uniform_p(a, b)?,
            })
        }
    }
}

/// JSON value for a possibly infinite quantity; JSON has no infinity
/// literal, so infinities become the strings "inf" / "-inf".
fn json_num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn crossing_json(res: &CrossingResult) -> Value {
    json!({
        "alpha": json_num(res.alpha),
        "kind": match res.kind {
            CrossingKind::FixedPoint => "fixed_point",
            CrossingKind::JumpCrossing => "jump_crossing",
        },
        "residual": json_num(res.residual),
        "bracket": [json_num(res.bracket.0), json_num(res.bracket.1)],
        "iterations": res.iterations,
    })
}

fn render(report: Map<String, Value>) -> String {
    let mut text = serde_json::to_string_pretty(&Value::Object(report))
        .expect("report serialization cannot fail");
    text.push('\n');
    text
}

fn cmd_solve(config: &RunConfig) -> Result<String, CliError> {
    let dist = build_distribution(config)?;
    let tol = config.solve.as_ref().and_then(|s| s.tol).unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(CliError::Config(format!("solve.tol must lie in (0, 1), got {tol}")));
    }
    let upper = find_crossing(&dist, Side::Upper, tol, DEFAULT_THETA_CAP)?;
    let lower = find_crossing(&dist, Side::Lower, tol, DEFAULT_THETA_CAP)?;
    let small = small_phi_dims(&dist);
    let mut report = Map::new();
    report.insert("dist".into(), json!(dist.to_string()));
    report.insert("tol".into(), json_num(tol));
    report.insert("upper_large".into(), crossing_json(&upper));
    report.insert("lower_large".into(), crossing_json(&lower));
    report.insert("upper_small".into(), json_num(small.alpha_small));
    report.insert("lower_small".into(), json_num(small.beta_small));
    if let Variant::PointMass { atom } = &dist.variant {
        if let Ok(d) = similarity_dimension(&atom.ratios) {
            report.insert("similarity_dimension".into(), json_num(d));
        }
    }
    Ok(render(report))
}

/// Grid values `min + i * step` up to `max`, with relative slack on the
/// endpoint so repeated decimal steps keep their last node.
fn grid_nodes(min: f64, max: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0 && min <= max) {
        return Err(CliError::Config(format!(
            "grid needs step > 0 and min <= max, got min={min}, max={max}, step={step}"
        )));
    }
    let mut nodes = Vec::new();
    for i in 0.. {
        let x = min + i as f64 * step;
        if x > max + step * 1e-9 {
            break;
        }
        nodes.push(x);
    }
    Ok(nodes)
}

fn push_num(line: &mut String, x: f64) {
    // 17 significant digits: round-trips f64 exactly, locale independent.
    write!(line, ",{x:.16e}").expect("string write cannot fail");
}

fn cmd_gcurve(config: &RunConfig, seed_override: Option<u64>) -> Result<String, CliError> {
    let dist = build_distribution(config)?;
    let spec = config
        .gcurve
        .as_ref()
        .ok_or_else(|| CliError::Config("gcurve needs a \"gcurve\" block".into()))?;
    if spec.theta_min < 0.0 {
        return Err(CliError::Config(format!(
            "gcurve.theta_min must be nonnegative, got {}",
            spec.theta_min
        )));
    }
    if let Some(n) = spec.mc_samples {
        if n < 100 {
            return Err(CliError::Config(format!(
                "gcurve.mc_samples must be at least 100, got {n}"
            )));
        }
    }
    let thetas = grid_nodes(spec.theta_min, spec.theta_max, spec.step)?;
    let mc_seed = seed_override.or(spec.mc_seed).unwrap_or(0);
    let mut csv = String::from("theta,g_upper,g_lower");
    if spec.mc_samples.is_some() {
        csv.push_str(",g_mc_upper,mc_stderr");
    }
    csv.push('\n');
    for theta in thetas {
        let upper = g_analytic(&dist, theta, Mode::Max)?;
        let lower = g_analytic(&dist, theta, Mode::Min)?;
        let mut line = format!("{theta:.16e}");
        push_num(&mut line, upper.value);
        push_num(&mut line, lower.value);
        if let Some(n) = spec.mc_samples {
            let mc = g_monte_carlo(&dist, theta, Mode::Max, n, mc_seed);
            push_num(&mut line, mc.value);
            push_num(&mut line, mc.stderr.unwrap_or(0.0));
        }
        line.push('\n');
        csv.push_str(&line);
    }
    Ok(csv)
}

fn inside_lambda(a: f64, b: f64) -> bool {
    a.min(b) >= LAMBDA_MIN - LAMBDA_SLACK && a + b <= LAMBDA_SUM_MAX + LAMBDA_SLACK
}

fn cmd_sweep(config: &RunConfig) -> Result<(String, Option<String>), CliError> {
    let spec = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep needs a \"sweep\" block".into()))?;
    let g = &spec.grid;
    if !(g.min > 0.0 && g.max < 1.0) {
        return Err(CliError::Config(format!(
            "sweep grid must stay inside (0, 1), got [{}, {}]",
            g.min, g.max
        )));
    }
    let nodes = grid_nodes(g.min, g.max, g.step)?;
    // Grid cells are independent; the row split keeps output order stable.
    let rows: Vec<(f64, f64, f64)> = nodes
        .par_iter()
        .map(|&a| {
            nodes
                .iter()
                .filter(|&&b| inside_lambda(a, b))
                .map(|&b| (a, b, uniformp_closed_form(a, b)))
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();
    let mut csv = String::from("a,b,alpha\n");
    for &(a, b, alpha) in &rows {
        let mut line = format!("{a:.16e}");
        push_num(&mut line, b);
        push_num(&mut line, alpha);
        line.push('\n');
        csv.push_str(&line);
    }
    let svg = spec.svg.then(|| sweep_svg(&rows, &nodes));
    Ok((csv, svg))
}

/// Fixed 8-stop viridis-like ramp, linearly interpolated in RGB.
const RAMP: [(u8, u8, u8); 8] = [
    (0x44, 0x01, 0x54),
    (0x46, 0x32, 0x7e),
    (0x36, 0x5c, 0x8d),
    (0x27, 0x7f, 0x8e),
    (0x1f, 0xa1, 0x87),
    (0x4a, 0xc1, 0x6d),
    (0xa0, 0xda, 0x39),
    (0xfd, 0xe7, 0x25),
];

fn ramp_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let i = (t.floor() as usize).min(RAMP.len() - 2);
    let f = t - i as f64;
    let lerp = |lo: u8, hi: u8| (lo as f64 + f * (hi as f64 - lo as f64)).round() as u8;
    let (r, g, b) = (
        lerp(RAMP[i].0, RAMP[i + 1].0),
        lerp(RAMP[i].1, RAMP[i + 1].1),
        lerp(RAMP[i].2, RAMP[i + 1].2),
    );
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heatmap of the sweep: one cell per Λ grid node, `a` rightward, `b`
/// upward, color by normalized alpha.
fn sweep_svg(rows: &[(f64, f64, f64)], nodes: &[f64]) -> String {
    const CELL: usize = 12;
    const MARGIN: usize = 20;
    let span = nodes.len() * CELL + 2 * MARGIN;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(_, _, alpha) in rows {
        lo = lo.min(alpha);
        hi = hi.max(alpha);
    }
    let scale = if hi > lo { hi - lo } else { 1.0 };
    let index = |x: f64| {
        nodes
            .iter()
            .position(|&n| (n - x).abs() < 1e-12)
            .expect("sweep rows come from the node list")
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{span}\" height=\"{span}\" \
         viewBox=\"0 0 {span} {span}\">\n<title>alpha over (a, b); range [{lo:.6}, {hi:.6}]</title>\n"
    );
    for &(a, b, alpha) in rows {
        let x = MARGIN + index(a) * CELL;
        let y = MARGIN + (nodes.len() - 1 - index(b)) * CELL;
        let _ = writeln!(
            svg,
            "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{}\"/>",
            ramp_color((alpha - lo) / scale)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn cmd_simulate(config: &RunConfig, seed_override: Option<u64>) -> Result<String, CliError> {
    let dist = build_distribution(config)?;
    let spec = config
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Config("simulate needs a \"simulate\" block".into()))?;
    if spec.depth < 1 {
        return Err(CliError::Config("simulate.depth must be at least 1".into()));
    }
    if !(spec.h > 0.0) {
        return Err(CliError::Config(format!("simulate.H must be positive, got {}", spec.h)));
    }
    if !(2 <= spec.n_min && spec.n_min <= spec.n_max) {
        return Err(CliError::Config(format!(
            "simulate needs 2 <= N_min <= N_max, got N_min={}, N_max={}",
            spec.n_min, spec.n_max
        )));
    }
    let seed = seed_override.unwrap_or(spec.seed);
    let real = generate(&dist, spec.depth, seed);
    let upper = find_crossing(&dist, Side::Upper, DEFAULT_TOL, DEFAULT_THETA_CAP)?;
    let lower = find_crossing(&dist, Side::Lower, DEFAULT_TOL, DEFAULT_THETA_CAP)?;
    let small = small_phi_dims(&dist);
    let theory = [
        (Regime::LargePhiUpper, upper.alpha),
        (Regime::LargePhiLower, lower.alpha),
        (Regime::SmallPhiUpper, small.alpha_small),
        (Regime::SmallPhiLower, small.beta_small),
    ];
    let mut estimates = Map::new();
    let mut theory_map = Map::new();
    let mut gaps = Map::new();
    for (regime, exact) in theory {
        let est = estimate_dimension(&real, regime, spec.h, spec.n_min, spec.n_max)?;
        estimates.insert(regime.key().into(), json_num(est.value));
        theory_map.insert(regime.key().into(), json_num(exact));
        gaps.insert(regime.key().into(), json_num(est.value - exact));
    }
    let mut report = Map::new();
    report.insert("dist".into(), json!(real.dist_id));
    report.insert("depth".into(), json!(spec.depth));
    report.insert("seed".into(), json!(seed));
    report.insert("H".into(), json_num(spec.h));
    report.insert("N_min".into(), json!(spec.n_min));
    report.insert("N_max".into(), json!(spec.n_max));
    report.insert("estimates".into(), Value::Object(estimates));
    report.insert("theory".into(), Value::Object(theory_map));
    report.insert("gaps".into(), Value::Object(gaps));
    Ok(render(report))
}

fn cmd_geometry(config: &RunConfig, seed_override: Option<u64>) -> Result<String, CliError> {
    let dist = build_distribution(config)?;
    let spec = config
        .geometry
        .as_ref()
        .ok_or_else(|| CliError::Config("geometry needs a \"geometry\" block".into()))?;
    if spec.depth_cap > 20 {
        return Err(CliError::Config(format!(
            "geometry.depth_cap is capped at 20, got {}",
            spec.depth_cap
        )));
    }
    if dist.max_children() != 2 {
        return Err(CliError::Config(format!(
            "interval geometry needs a two-child distribution, this one has {} children",
            dist.max_children()
        )));
    }
    let seed = seed_override.unwrap_or(spec.seed);
    let real = generate(&dist, spec.depth_cap.max(1), seed);
    let depths = emit_intervals(&real, spec.depth_cap)?;
    let mut csv = String::from("depth,left,right,mass\n");
    for (d, row) in depths.iter().enumerate() {
        for &(left, right, mass) in row {
            let mut line = format!("{d}");
            push_num(&mut line, left);
            push_num(&mut line, right);
            push_num(&mut line, mass);
            line.push('\n');
            csv.push_str(&line);
        }
    }
    Ok(csv)
}
