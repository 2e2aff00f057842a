//! `wvn`: band structure, resonance points, spectral densities and the model system from the command line.

mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use wvn_core::floquet::{band_edges, bloch_data, BandStructure};
use wvn_core::linalg::{Vec2, C64};
use wvn_core::model_system::{
    horizon_for, interchange_check, limit_estimate, reduce_to_model, run_recursion, InterchangeOptions,
    InterchangeReport, ModelParams, ModelRun, Remainder, StepSource,
};
use wvn_core::potentials::ProblemConfig;
use wvn_core::resonance::{all_resonance_points, critical_alpha, resonance_points, solve_quasimomentum, ResonancePoint, Sign};
use wvn_core::spectral::{exponent_fit, spectral_density, Side, SpectralOptions};
use wvn_core::verify;

use output::{config_hash, num, Emitter};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] wvn_core::Error),
    #[error("usage: {0}")]
    Usage(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("plot: {0}")]
    Plot(String),
    #[error("{0} acceptance criteria failed")]
    Verify(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "wvn", version, about = "Spectral density near Wigner-von Neumann resonance points")]
struct Cli {
    /// Directory for output files and `manifest.json`; without it the primary output goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Omit wall-clock data from the manifest and SVG files.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Problem configuration (`[periodic]`, `[wvn]`, `[q1]`, `[boundary]`).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Band edges up to `--lambda-max` as CSV `j,edge_low,edge_high`.
    Bands {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 50.0)]
        lambda_max: f64,
    },
    /// Bloch data at one energy as JSON.
    Bloch {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long, default_value_t = 16)]
        l_max: usize,
    },
    /// Resonance points with their exponent coefficients, CSV `j,sign,nu,beta,alpha_cr`.
    Resonances {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 50.0)]
        lambda_max: f64,
        /// Skip the critical boundary angle.
        #[arg(long)]
        no_alpha_cr: bool,
    },
    /// Spectral density on a uniform grid, CSV `lambda,rho_prime,abs_A,est_error,converged`.
    Density {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, allow_hyphen_values = true)]
        lambda_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        lambda_max: f64,
        #[arg(long, default_value_t = 50)]
        points: usize,
        /// Boundary angle, overriding the config.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Fit `ρ' ∝ |λ − ν|^p` on one side of a resonance point; JSON report and SVG plot.
    Exponent {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        band: usize,
        #[arg(long, value_parser = parse_sign)]
        sign: Sign,
        #[arg(long, value_parser = parse_side)]
        side: Side,
        #[arg(long, default_value_t = 2.0)]
        decades: f64,
        #[arg(long, default_value_t = 9)]
        points: usize,
        /// Largest `|λ − ν|` as a fraction of the band width.
        #[arg(long, default_value_t = 0.1)]
        span: f64,
    },
    /// Run the discrete model system over an ε grid; JSON runs and CSV trajectory `y,h1_re,h1_im,h2_re,h2_im`.
    Model {
        /// Required unless `--remainder operator`, which takes β from the config.
        #[arg(long, allow_hyphen_values = true)]
        beta: Option<f64>,
        /// Comma-separated ε values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        epsilon_grid: Vec<f64>,
        #[arg(long, value_enum, default_value_t = RemainderKind::Zero)]
        remainder: RemainderKind,
        /// Initial vector `re,im,re,im`.
        #[arg(long, value_parser = parse_vec2, allow_hyphen_values = true, default_value = "1,0,0,0")]
        f: Vec2Arg,
        /// Slow horizon `N|ε|` of the runs and of the Volterra solve.
        #[arg(long, default_value_t = 400.0)]
        ymax: f64,
        /// Synthetic remainder `amplitude·n^{−decay}·cos(εn)·[[0,1],[1,0]]`.
        #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
        amplitude: f64,
        #[arg(long, default_value_t = 2.0)]
        decay: f64,
        /// Config and resonance point for `--remainder operator`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        band: usize,
        #[arg(long, value_parser = parse_sign, default_value = "minus")]
        sign: Sign,
    },
    /// Run the acceptance suite (all criteria, or those given with `--criterion`).
    Verify {
        #[arg(long)]
        criterion: Vec<u8>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum RemainderKind {
    Zero,
    Synthetic,
    Operator,
}

#[derive(Debug, Clone, Copy)]
struct Vec2Arg(Vec2);

fn parse_sign(s: &str) -> Result<Sign, String> {
    s.parse().map_err(|e: wvn_core::Error| e.to_string())
}

fn parse_side(s: &str) -> Result<Side, String> {
    s.parse().map_err(|e: wvn_core::Error| e.to_string())
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"))).collect()
}

fn parse_vec2(s: &str) -> Result<Vec2Arg, String> {
    match parse_list(s)?.as_slice() {
        [a, b, c, d] => Ok(Vec2Arg([C64::new(*a, *b), C64::new(*c, *d)])),
        _ => Err("expected four numbers re,im,re,im".into()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("WVN_THREADS") else { return Ok(()) };
    let n: usize = v.parse().ok().filter(|n| *n > 0).ok_or_else(|| CliError::Usage(format!("WVN_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Usage(e.to_string()))
}

fn load(path: &PathBuf) -> Result<ProblemConfig, CliError> {
    Ok(ProblemConfig::load(path)?)
}

/// Band edges far enough up to contain band `j`.
fn bands_through(cfg: &ProblemConfig, j: usize) -> Result<BandStructure, CliError> {
    let a = cfg.period();
    let mut lambda_max = cfg.periodic.lower_bound().abs() + ((j as f64 + 2.0) * std::f64::consts::PI / a).powi(2) + 1.0;
    for _ in 0..12 {
        let bands = band_edges(&cfg.periodic, lambda_max)?;
        if bands.bands.len() > j {
            return Ok(bands);
        }
        lambda_max *= 2.0;
    }
    Err(CliError::Core(wvn_core::Error::Domain(format!("band {j} not found below λ = {lambda_max}"))))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let name = match &cli.command {
        Command::Bands { .. } => "bands",
        Command::Bloch { .. } => "bloch",
        Command::Resonances { .. } => "resonances",
        Command::Density { .. } => "density",
        Command::Exponent { .. } => "exponent",
        Command::Model { .. } => "model",
        Command::Verify { .. } => "verify",
    };
    let config_path = match &cli.command {
        Command::Bands { config, .. }
        | Command::Bloch { config, .. }
        | Command::Resonances { config, .. }
        | Command::Density { config, .. }
        | Command::Exponent { config, .. } => Some(config.config.clone()),
        Command::Model { config, .. } => config.clone(),
        Command::Verify { .. } => None,
    };
    let cfg = config_path.as_ref().map(load).transpose()?;
    let hash = config_hash(name, &format!("{:?}", cli.command), cfg.as_ref().map(|c| c.to_toml()).as_deref());
    let mut out = Emitter::new(name, hash, cli.out.clone(), !cli.no_timestamp)?;
    let result = dispatch(cli.command, cfg, &mut out);
    out.finish()?;
    result
}

fn dispatch(cmd: Command, cfg: Option<ProblemConfig>, out: &mut Emitter) -> Result<(), CliError> {
    let need = |c: Option<ProblemConfig>| c.ok_or_else(|| CliError::Usage("--config is required".into()));
    match cmd {
        Command::Bands { lambda_max, .. } => bands(&need(cfg)?, lambda_max, out),
        Command::Bloch { lambda, l_max, .. } => bloch(&need(cfg)?, lambda, l_max, out),
        Command::Resonances { lambda_max, no_alpha_cr, .. } => resonances(&need(cfg)?, lambda_max, !no_alpha_cr, out),
        Command::Density { lambda_min, lambda_max, points, alpha, .. } => {
            let mut c = need(cfg)?;
            if let Some(a) = alpha {
                c = c.with_alpha(a)?;
            }
            density(&c, lambda_min, lambda_max, points, out)
        }
        Command::Exponent { band, sign, side, decades, points, span, .. } => {
            exponent(&need(cfg)?, band, sign, side, decades, points, span, out)
        }
        Command::Model { beta, epsilon_grid, remainder, f, ymax, amplitude, decay, band, sign, .. } => {
            let args = ModelArgs { beta, grid: epsilon_grid, remainder, f: f.0, ymax, amplitude, decay, band, sign };
            model(args, cfg, out)
        }
        Command::Verify { criterion } => run_verify(&criterion, out),
    }
}

fn bands(cfg: &ProblemConfig, lambda_max: f64, out: &mut Emitter) -> Result<(), CliError> {
    let b = band_edges(&cfg.periodic, lambda_max)?;
    let rows: Vec<Vec<String>> =
        b.bands.iter().enumerate().map(|(j, band)| vec![j.to_string(), num(band.low), num(band.high)]).collect();
    out.csv("bands.csv", &["j", "edge_low", "edge_high"], &rows, true)
}

#[derive(Serialize)]
struct BlochReport {
    lambda: f64,
    band: usize,
    k: f64,
    multiplier: C64,
    wronskian: C64,
    psi_plus_init: [C64; 2],
    /// `(l, b_l)` and `(l, b⁺_l)` for `l = −l_max..=l_max`.
    b: Vec<(i64, C64)>,
    b_plus: Vec<(i64, C64)>,
}

fn bloch(cfg: &ProblemConfig, lambda: f64, l_max: usize, out: &mut Emitter) -> Result<(), CliError> {
    let bands = band_edges(&cfg.periodic, lambda.abs() * 2.0 + 10.0)?;
    let j = bands
        .band_of(lambda)
        .ok_or_else(|| CliError::Core(wvn_core::Error::Domain(format!("λ = {lambda} is not inside a band"))))?;
    let d = bloch_data(&cfg.periodic, &bands, lambda, j, l_max)?;
    let ls = -(l_max as i64)..=l_max as i64;
    let report = BlochReport {
        lambda,
        band: j,
        k: d.k,
        multiplier: d.multiplier(),
        wronskian: d.wronskian,
        psi_plus_init: d.psi_plus_init,
        b: ls.clone().map(|l| (l, d.b(l))).collect(),
        b_plus: ls.map(|l| (l, d.b_plus(l))).collect(),
    };
    out.json("bloch.json", &report, true)
}

fn resonances(cfg: &ProblemConfig, lambda_max: f64, with_alpha: bool, out: &mut Emitter) -> Result<(), CliError> {
    let bands = band_edges(&cfg.periodic, lambda_max)?;
    let mut pts = all_resonance_points(&cfg.periodic, &bands, &cfg.wvn)?;
    let alphas: Vec<Option<f64>> = pts
        .par_iter()
        .map(|p| {
            if p.beta <= BETA_ZERO {
                return None;
            }
            with_alpha.then(|| critical_alpha(cfg, &bands, p)).and_then(|r| match r {
                Ok(a) => Some(a),
                Err(e) => {
                    eprintln!("warning: α_cr at ν = {}: {e}", p.nu);
                    None
                }
            })
        })
        .collect();
    for (p, a) in pts.iter_mut().zip(alphas) {
        p.alpha_cr = a;
        if p.beta <= BETA_ZERO {
            eprintln!("note: band {} sign {}: β = 0, no pseudogap predicted", p.band_index, p.sign);
        }
    }
    let rows: Vec<Vec<String>> = pts
        .iter()
        .map(|p| {
            let sign = if p.sign.is_plus() { "plus" } else { "minus" };
            vec![p.band_index.to_string(), sign.into(), num(p.nu), num(p.beta), p.alpha_cr.map(num).unwrap_or_default()]
        })
        .collect();
    out.csv("resonances.csv", &["j", "sign", "nu", "beta", "alpha_cr"], &rows, true)
}

/// Below this `β` is treated as zero.
const BETA_ZERO: f64 = 1e-10;

fn density(cfg: &ProblemConfig, lo: f64, hi: f64, points: usize, out: &mut Emitter) -> Result<(), CliError> {
    if points < 1 || !(hi >= lo) {
        return Err(CliError::Usage("need --points ≥ 1 and --lambda-max ≥ --lambda-min".into()));
    }
    let bands = band_edges(&cfg.periodic, hi.abs() * 2.0 + 10.0)?;
    let grid: Vec<f64> = (0..points)
        .map(|i| if points == 1 { lo } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 })
        .collect();
    let opts = SpectralOptions::default();
    let rows: Vec<Vec<String>> = grid
        .par_iter()
        .map(|&l| match spectral_density(cfg, &bands, l, &opts) {
            Ok(s) => vec![num(l), num(s.rho_prime), num(s.a_coef.norm()), num(s.est_error), s.converged.to_string()],
            Err(e) => {
                eprintln!("warning: λ = {l}: {e}");
                vec![num(l), num(f64::NAN), num(f64::NAN), num(f64::NAN), "false".into()]
            }
        })
        .collect();
    out.csv("density.csv", &["lambda", "rho_prime", "abs_A", "est_error", "converged"], &rows, true)
}

fn pick_point(cfg: &ProblemConfig, bands: &BandStructure, band: usize, sign: Sign) -> Result<ResonancePoint, CliError> {
    let (p, m) = resonance_points(&cfg.periodic, bands, &cfg.wvn, band)?;
    Ok(if sign.is_plus() { p } else { m })
}

#[allow(clippy::too_many_arguments)]
fn exponent(
    cfg: &ProblemConfig,
    band: usize,
    sign: Sign,
    side: Side,
    decades: f64,
    points: usize,
    span: f64,
    out: &mut Emitter,
) -> Result<(), CliError> {
    let bands = bands_through(cfg, band)?;
    let mut rp = pick_point(cfg, &bands, band, sign)?;
    if rp.beta <= BETA_ZERO {
        eprintln!("note: β = 0 at ν = {}, no pseudogap predicted", rp.nu);
    } else {
        rp.alpha_cr = Some(critical_alpha(cfg, &bands, &rp)?);
    }
    let d_max = span * bands.band(band)?.width();
    let fit = exponent_fit(cfg, &bands, &rp, side, points, d_max, decades, &SpectralOptions::default())?;
    out.json("exponent.json", &fit, true)?;
    let stamp = out.timestamp_comment();
    let plot = svg::exponent_svg(&fit, stamp.as_deref())?;
    out.raw("exponent.svg", &plot)
}

struct ModelArgs {
    beta: Option<f64>,
    grid: Vec<f64>,
    remainder: RemainderKind,
    f: Vec2,
    ymax: f64,
    amplitude: f64,
    decay: f64,
    band: usize,
    sign: Sign,
}

#[derive(Serialize)]
struct RunSummary {
    epsilon: f64,
    n_start: u64,
    n_end: u64,
    limit: Vec2,
    limit_err: f64,
    converged: bool,
    /// Empirical `max_n ‖u_n‖/‖f‖`.
    c3: f64,
}

impl From<&ModelRun> for RunSummary {
    fn from(r: &ModelRun) -> Self {
        let (limit, limit_err) = limit_estimate(r);
        RunSummary {
            epsilon: r.epsilon,
            n_start: r.n_start,
            n_end: r.n_end,
            limit,
            limit_err,
            converged: r.limit_u.is_some(),
            c3: r.c3,
        }
    }
}

#[derive(Serialize)]
struct InterchangeSummary {
    side: &'static str,
    extrapolated: Vec2,
    extrapolation_err: f64,
    h0: Vec2,
    volterra_limit: Vec2,
    deviation: f64,
    cauchy: Vec<f64>,
}

#[derive(Serialize)]
struct ModelReport {
    beta: f64,
    remainder: &'static str,
    f: Vec2,
    runs: Vec<RunSummary>,
    interchange: Vec<InterchangeSummary>,
}

fn model(args: ModelArgs, cfg: Option<ProblemConfig>, out: &mut Emitter) -> Result<(), CliError> {
    if args.grid.is_empty() {
        return Err(CliError::Usage("--epsilon-grid needs at least one value".into()));
    }
    let mut trajectories: Vec<(&'static str, Vec<(f64, Vec2)>)> = Vec::new();
    let (beta, kind, runs, interchange) = match args.remainder {
        RemainderKind::Operator => {
            let cfg = cfg.ok_or_else(|| CliError::Usage("--remainder operator needs --config".into()))?;
            let bands = bands_through(&cfg, args.band)?;
            let rp = pick_point(&cfg, &bands, args.band, args.sign)?;
            let runs: Vec<Result<ModelRun, CliError>> = args
                .grid
                .par_iter()
                .map(|&eps| {
                    let lambda = if eps == 0.0 {
                        rp.nu
                    } else {
                        solve_quasimomentum(&cfg.periodic, &bands, args.band, rp.k_target + eps / 2.0)?
                    };
                    let red = reduce_to_model(&cfg, &bands, &rp, lambda)?;
                    let mut src = red.source();
                    Ok(run_recursion(&mut src, args.f, horizon_for(red.epsilon, args.ymax, 1))?)
                })
                .collect();
            let runs: Vec<ModelRun> = runs.into_iter().collect::<Result<_, _>>()?;
            for side in ["plus", "minus"] {
                let s = if side == "plus" { 1.0 } else { -1.0 };
                let smallest = runs
                    .iter()
                    .filter(|r| r.epsilon * s > 0.0)
                    .min_by(|a, b| a.epsilon.abs().total_cmp(&b.epsilon.abs()));
                if let Some(r) = smallest {
                    trajectories.push((side, r.slow_samples.clone()));
                }
            }
            (rp.beta, "operator", runs, Vec::new())
        }
        kind => {
            let beta = args.beta.ok_or_else(|| CliError::Usage("--beta is required".into()))?;
            let rem = match kind {
                RemainderKind::Zero => Remainder::Zero,
                _ => Remainder::synthetic(args.amplitude, args.decay, [[0.0, 1.0], [1.0, 0.0]])?,
            };
            let base = ModelParams::new(beta, 0.0, rem, wvn_core::model_system::default_n_start(beta))?;
            let runs: Vec<Result<ModelRun, CliError>> = args
                .grid
                .par_iter()
                .map(|&eps| {
                    let mut p = base.with_epsilon(eps)?;
                    let n = horizon_for(eps, args.ymax, p.n_start);
                    Ok(run_recursion(&mut p, args.f, n)?)
                })
                .collect();
            let runs: Vec<ModelRun> = runs.into_iter().collect::<Result<_, _>>()?;
            let mut inter = Vec::new();
            for side in ["plus", "minus"] {
                let s = if side == "plus" { 1.0 } else { -1.0 };
                let one_side: Vec<f64> = args.grid.iter().copied().filter(|e| e * s > 0.0).collect();
                if one_side.len() < 2 {
                    continue;
                }
                let make = {
                    let base = base.clone();
                    move |eps: f64| Ok(Box::new(base.with_epsilon(eps)?) as Box<dyn StepSource + Send>)
                };
                let opts = InterchangeOptions { y_run: args.ymax, y_volterra: args.ymax, ..Default::default() };
                let rep: InterchangeReport = interchange_check(make, args.f, &one_side, &opts)?;
                trajectories.push((side, rep.slow.samples.clone()));
                inter.push(InterchangeSummary {
                    side,
                    extrapolated: rep.extrapolated,
                    extrapolation_err: rep.extrapolation_err,
                    h0: rep.h0,
                    volterra_limit: rep.slow.limit,
                    deviation: rep.deviation,
                    cauchy: rep.cauchy,
                });
            }
            (beta, if kind == RemainderKind::Zero { "zero" } else { "synthetic" }, runs, inter)
        }
    };
    let report = ModelReport { beta, remainder: kind, f: args.f, runs: runs.iter().map(RunSummary::from).collect(), interchange };
    out.json("model.json", &report, true)?;
    let stamp = out.timestamp_comment();
    for (side, samples) in trajectories {
        if samples.is_empty() {
            continue;
        }
        let rows: Vec<Vec<String>> = samples
            .iter()
            .map(|(y, h)| vec![num(*y), num(h[0].re), num(h[0].im), num(h[1].re), num(h[1].im)])
            .collect();
        out.csv(&format!("trajectory_{side}.csv"), &["y", "h1_re", "h1_im", "h2_re", "h2_im"], &rows, false)?;
        if out.has_dir() {
            out.raw(&format!("trajectory_{side}.svg"), &svg::trajectory_svg(&samples, stamp.as_deref())?)?;
        }
    }
    Ok(())
}

fn run_verify(ids: &[u8], out: &mut Emitter) -> Result<(), CliError> {
    let ids: Vec<u8> = if ids.is_empty() { verify::CRITERIA.to_vec() } else { ids.to_vec() };
    if let Some(bad) = ids.iter().find(|i| !verify::CRITERIA.contains(i)) {
        return Err(CliError::Usage(format!("no criterion {bad}; expected 1..=9")));
    }
    let mut reports = Vec::new();
    for id in ids {
        let r = verify::run_criterion(id);
        println!("{}", r.line());
        reports.push(r);
    }
    if out.has_dir() {
        out.json("verify.json", &reports, false)?;
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        Err(CliError::Verify(failed))
    } else {
        Ok(())
    }
}
