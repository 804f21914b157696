//! Command-line front end. Every command validates its flags, computes, and
//! writes a single artifact (file via atomic rename, or stdout).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::design::{
    bachoc_design, random_design, regular_cluster_design, regular_design, rescale, DesignKind, Region,
    SamplingDesign,
};
use crate::error::{Error, Result};
use crate::fisher::{fisher_matrix, grid_product, info_surface, local_influence, FisherInfo, InfluenceResult, InfoVector};
use crate::io::{cell, csv_with_comments, design_csv, read_dataset_csv, read_design_csv, read_matrix4, write_atomic, Transform};
use crate::likelihood::{mle_fit, observed_info_fd, profile_loglik, FitOptions, FixedMask, GeoDataset};
use crate::matern::{CovarianceParams, Param};
use crate::optim::SimplexOptions;
use crate::par;
use crate::specialfun::QuadratureSpec;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "matern-info", version, about = "Fisher information and likelihood tools for Matérn random fields")]
pub struct Cli {
    /// Worker threads; 0 uses all available cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a sampling design (CSV plus JSON metadata).
    Design(DesignCmd),
    /// Information vector over a (vartheta, nu) grid.
    InfoSurface(SurfaceCmd),
    /// Information vector as a function of sample size.
    InfoVsN(VsNCmd),
    /// Maximum likelihood fit of a dataset.
    Fit(FitCmd),
    /// One- or two-parameter profile log-likelihood.
    Profile(ProfileCmd),
    /// Leading eigenpair of an information matrix.
    Influence(InfluenceCmd),
}

#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    /// regular, random, bachoc or regular+cluster.
    #[arg(long = "type")]
    pub kind: Option<DesignKind>,
    /// Read locations from a CSV with columns x,y instead of generating them.
    #[arg(long, conflicts_with = "kind")]
    pub design_file: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n1: Option<usize>,
    #[arg(long)]
    pub n2: Option<usize>,
    /// Number of cluster centers.
    #[arg(long)]
    pub nc: Option<usize>,
    /// Satellites per cluster center.
    #[arg(long)]
    pub ppc: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// x_min,x_max,y_min,y_max
    #[arg(long, default_value = "0,1,0,1")]
    pub region: String,
}

#[derive(Debug, Clone, Args)]
pub struct DesignCmd {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Output CSV; metadata goes to the same path with a .json extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SurfaceCmd {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0.2)]
    pub tau2: f64,
    /// Range grid as `min:max:step` or a comma list.
    #[arg(long)]
    pub vartheta: String,
    /// Smoothness grid as `min:max:step` or a comma list.
    #[arg(long)]
    pub nu: String,
    /// Skip dividing coordinates by the region diameter.
    #[arg(long)]
    pub no_rescale: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VsNCmd {
    /// regular, random, bachoc or regular+cluster.
    #[arg(long = "type")]
    pub kind: DesignKind,
    /// Sample sizes, comma separated.
    #[arg(long)]
    pub n_list: String,
    #[arg(long)]
    pub nc: Option<usize>,
    #[arg(long)]
    pub ppc: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "0,1,0,1")]
    pub region: String,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0.2)]
    pub tau2: f64,
    #[arg(long, default_value_t = 0.2)]
    pub vartheta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub nu: f64,
    #[arg(long)]
    pub no_rescale: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset CSV with columns x,y,z and optional covariates.
    #[arg(long)]
    pub data: PathBuf,
    /// none, sqrt or log, applied to z at load.
    #[arg(long, default_value = "none")]
    pub transform: Transform,
}

#[derive(Debug, Clone, Args)]
pub struct StartArgs {
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub tau2: Option<f64>,
    #[arg(long)]
    pub vartheta: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    /// Hold a parameter fixed, e.g. `--fix nu=0.5` (repeatable).
    #[arg(long)]
    pub fix: Vec<String>,
    /// Number of optimizer starts (1 to 3).
    #[arg(long, default_value_t = 3)]
    pub starts: usize,
    #[arg(long, default_value_t = 5000)]
    pub max_evals: usize,
}

#[derive(Debug, Clone, Args)]
pub struct FitCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub start: StartArgs,
    /// Skip the Fisher information block of the report.
    #[arg(long)]
    pub no_info: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ProfileCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub start: StartArgs,
    /// Profiled parameter grid, e.g. `--grid nu=0.5:1.5:0.1`; give once or twice.
    #[arg(long, required = true)]
    pub grid: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct InfluenceCmd {
    /// 4×4 information matrix (JSON rows or headerless CSV); no fitting.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub tau2: Option<f64>,
    #[arg(long)]
    pub vartheta: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub no_rescale: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            e.print()?;
            return Ok(());
        }
        Err(e) => return Err(Error::config("arguments", e.to_string())),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let invocation = invocation_string(&args);
    execute(cli, &invocation)
}

pub fn execute(cli: Cli, invocation: &str) -> Result<()> {
    par::with_threads(cli.threads, || match &cli.command {
        Command::Design(c) => cmd_design(c, invocation),
        Command::InfoSurface(c) => cmd_info_surface(c, invocation),
        Command::InfoVsN(c) => cmd_info_vs_n(c, invocation),
        Command::Fit(c) => cmd_fit(c, invocation),
        Command::Profile(c) => cmd_profile(c, invocation),
        Command::Influence(c) => cmd_influence(c, invocation),
    })
}

pub fn invocation_string(args: &[OsString]) -> String {
    args.iter()
        .map(|a| {
            let s = a.to_string_lossy();
            if s.is_empty() || s.contains(char::is_whitespace) {
                format!("'{s}'")
            } else {
                s.into_owned()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, bytes),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn provenance(invocation: &str, r_max: Option<f64>) -> String {
    match r_max {
        Some(r) => format!("matern-info {VERSION}; r_max={r}; {invocation}"),
        None => format!("matern-info {VERSION}; {invocation}"),
    }
}

fn parse_region(s: &str) -> Result<Region> {
    let v = parse_list("region", s)?;
    if v.len() != 4 {
        return Err(Error::config("region", format!("expected x_min,x_max,y_min,y_max, got `{s}`")));
    }
    Region::new(v[0], v[1], v[2], v[3]).map_err(|e| Error::config("region", e.to_string()))
}

fn parse_list(field: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::config(field, format!("`{t}` is not a finite number")))
        })
        .collect()
}

/// `min:max:step` (inclusive of `max` up to rounding) or a comma list.
pub fn parse_grid(field: &str, s: &str) -> Result<Vec<f64>> {
    let values = if s.contains(':') {
        let parts = s.split(':').map(str::trim).collect::<Vec<_>>();
        if parts.len() != 3 {
            return Err(Error::config(field, format!("expected min:max:step, got `{s}`")));
        }
        let v = parse_list(field, &parts.join(","))?;
        let (lo, hi, step) = (v[0], v[1], v[2]);
        if !(step > 0.0) {
            return Err(Error::config(field, "grid step must be positive"));
        }
        if hi < lo {
            Vec::new()
        } else {
            let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            (0..count)
                .map(|k| {
                    let v = lo + k as f64 * step;
                    (v * 1e12).round() / 1e12
                })
                .collect()
        }
    } else {
        parse_list(field, s)?
    };
    if values.is_empty() {
        return Err(Error::config(field, "grid is empty"));
    }
    Ok(values)
}

fn require<T>(value: Option<T>, field: &str, why: &str) -> Result<T> {
    value.ok_or_else(|| Error::config(field, format!("required {why}")))
}

fn perfect_square_side(field: &str, n: usize) -> Result<usize> {
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n {
        return Err(Error::config(field, format!("{n} is not a perfect square")));
    }
    Ok(side)
}

/// Builds the design described by the flags, or reads it from `--design-file`.
pub fn build_design(args: &DesignArgs) -> Result<SamplingDesign> {
    if let Some(path) = &args.design_file {
        return read_design_csv(path);
    }
    let kind = require(args.kind, "type", "unless --design-file is given")?;
    let region = parse_region(&args.region)?;
    let design = match kind {
        DesignKind::Regular => {
            let n1 = match (args.n1, args.n) {
                (Some(n1), _) => n1,
                (None, Some(n)) => perfect_square_side("n", n)?,
                _ => return Err(Error::config("n1", "required for --type regular")),
            };
            regular_design(n1, region)
        }
        DesignKind::Random => random_design(require(args.n, "n", "for --type random")?, region, args.seed),
        DesignKind::Bachoc => {
            let n1 = require(args.n1, "n1", "for --type bachoc")?;
            bachoc_design(n1, args.n2.unwrap_or(n1), args.eps.unwrap_or(0.0), region, args.seed)
        }
        DesignKind::RegularCluster => regular_cluster_design(
            require(args.n1, "n1", "for --type regular+cluster")?,
            require(args.nc, "nc", "for --type regular+cluster")?,
            require(args.ppc, "ppc", "for --type regular+cluster")?,
            require(args.eps, "eps", "for --type regular+cluster")?,
            region,
            args.seed,
        ),
        DesignKind::Custom => return Err(Error::config("type", "custom designs are read with --design-file")),
    };
    design.map_err(|e| Error::config("type", e.to_string()))
}

fn computation_design(design: &SamplingDesign, no_rescale: bool) -> Result<(SamplingDesign, Option<f64>)> {
    if no_rescale {
        Ok((design.clone(), None))
    } else {
        let r = rescale(design)?;
        Ok((r.design, Some(r.r_max)))
    }
}

#[derive(Debug, Serialize)]
struct DesignMeta<'a> {
    version: &'a str,
    invocation: &'a str,
    kind: DesignKind,
    n: usize,
    seed: Option<u64>,
    region: Option<Region>,
    r_max: f64,
    fingerprint: String,
}

pub fn cmd_design(cmd: &DesignCmd, invocation: &str) -> Result<()> {
    let design = build_design(&cmd.design)?;
    let csv = design_csv(&design)?;
    if let Some(out) = &cmd.out {
        let meta = DesignMeta {
            version: VERSION,
            invocation,
            kind: design.label,
            n: design.len(),
            seed: design.seed,
            region: design.region,
            r_max: design.r_max(),
            fingerprint: design.fingerprint().hash,
        };
        let json = serde_json::to_vec_pretty(&meta)?;
        write_atomic(out, &csv)?;
        write_atomic(&out.with_extension("json"), &json)?;
        Ok(())
    } else {
        emit(None, &csv)
    }
}

const INFO_COLUMNS: [&str; 5] = ["info_sigma2", "info_tau2", "info_vartheta", "info_nu", "info_zeta"];

fn info_cells(info: Option<&InfoVector>, zeta: Option<f64>) -> Vec<String> {
    let mut cells: Vec<String> = match info {
        Some(i) => i.as_array().iter().map(|&v| cell(v)).collect(),
        None => vec![String::new(); 4],
    };
    cells.push(zeta.map(cell).unwrap_or_default());
    cells
}

pub fn cmd_info_surface(cmd: &SurfaceCmd, invocation: &str) -> Result<()> {
    let varthetas = parse_grid("vartheta", &cmd.vartheta)?;
    let nus = parse_grid("nu", &cmd.nu)?;
    let base = CovarianceParams::new(cmd.sigma2, cmd.tau2, varthetas[0], nus[0])
        .map_err(|e| Error::config("sigma2/tau2", e.to_string()))?;
    let design = build_design(&cmd.design)?;
    let (design, r_max) = computation_design(&design, cmd.no_rescale)?;
    let grid = grid_product(&varthetas, &nus);
    let rows = info_surface(&base, &design, &grid, &QuadratureSpec::default());
    let mut header = vec!["vartheta", "nu"];
    header.extend(INFO_COLUMNS);
    header.push("status");
    let body = csv_with_comments(
        &[provenance(invocation, r_max)],
        &header,
        rows.iter().map(|r| {
            let mut cells = vec![cell(r.vartheta), cell(r.nu)];
            cells.extend(info_cells(r.info.as_ref(), r.info_zeta));
            cells.push(r.status.clone());
            cells
        }),
    )?;
    emit(cmd.out.as_deref(), &body)
}

pub fn cmd_info_vs_n(cmd: &VsNCmd, invocation: &str) -> Result<()> {
    let ns: Vec<usize> = cmd
        .n_list
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::config("n-list", format!("`{t}` is not a sample size")))
        })
        .collect::<Result<_>>()?;
    if ns.is_empty() {
        return Err(Error::config("n-list", "no sample sizes given"));
    }
    let params = CovarianceParams::new(cmd.sigma2, cmd.tau2, cmd.vartheta, cmd.nu)
        .map_err(|e| Error::config("sigma2/tau2/vartheta/nu", e.to_string()))?;
    let mut designs = Vec::with_capacity(ns.len());
    for &n in &ns {
        let mut args = DesignArgs {
            kind: Some(cmd.kind),
            design_file: None,
            n: Some(n),
            n1: None,
            n2: None,
            nc: cmd.nc,
            ppc: cmd.ppc,
            eps: cmd.eps,
            seed: cmd.seed,
            region: cmd.region.clone(),
        };
        match cmd.kind {
            DesignKind::Bachoc => args.n1 = Some(perfect_square_side("n-list", n)?),
            DesignKind::RegularCluster => {
                let extra = require(cmd.nc, "nc", "for --type regular+cluster")?
                    * require(cmd.ppc, "ppc", "for --type regular+cluster")?;
                let lattice = n
                    .checked_sub(extra)
                    .ok_or_else(|| Error::config("n-list", format!("{n} is smaller than nc*ppc")))?;
                args.n1 = Some(perfect_square_side("n-list", lattice)?);
            }
            _ => {}
        }
        designs.push(build_design(&args)?);
    }
    let spec = QuadratureSpec::default();
    let mut rows = Vec::with_capacity(designs.len());
    for design in &designs {
        let (d, r_max) = computation_design(design, cmd.no_rescale)?;
        let result = fisher_matrix(&params, &d, &spec).and_then(|f| Ok((f.info_vector()?, f.microergodic_info()?)));
        log::info!("n = {} done", design.len());
        rows.push((design.len(), r_max, result));
    }
    let mut header = vec!["n", "r_max"];
    header.extend(INFO_COLUMNS);
    header.push("status");
    let body = csv_with_comments(
        &[provenance(invocation, None)],
        &header,
        rows.iter().map(|(n, r_max, result)| {
            let mut cells = vec![n.to_string(), r_max.map(cell).unwrap_or_default()];
            match result {
                Ok((info, zeta)) => {
                    cells.extend(info_cells(Some(info), Some(*zeta)));
                    cells.push("ok".into());
                }
                Err(e) => {
                    cells.extend(info_cells(None, None));
                    cells.push(e.to_string());
                }
            }
            cells
        }),
    )?;
    emit(cmd.out.as_deref(), &body)
}

fn sample_variance(z: &[f64]) -> f64 {
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    if var > 0.0 {
        var
    } else {
        1.0
    }
}

/// Starting values (data-driven defaults for any flag not given) and the fixed mask.
fn start_values(data: &GeoDataset, start: &StartArgs) -> Result<(CovarianceParams, FixedMask)> {
    let var = sample_variance(data.z.as_slice());
    let mut v = [
        start.sigma2.unwrap_or(0.8 * var),
        start.tau2.unwrap_or(0.2 * var),
        start.vartheta.unwrap_or(0.1 * data.design.point_diameter().max(f64::MIN_POSITIVE)),
        start.nu.unwrap_or(0.5),
    ];
    let mut mask = FixedMask::none();
    for spec in &start.fix {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::config("fix", format!("expected name=value, got `{spec}`")))?;
        let p: Param = name.parse().map_err(|_| Error::config("fix", format!("unknown parameter `{name}`")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::config("fix", format!("`{value}` is not a number")))?;
        v[p.index()] = value;
        mask = mask.with(p);
    }
    let params = CovarianceParams::from_array(v).map_err(|e| Error::config("sigma2/tau2/vartheta/nu/fix", e.to_string()))?;
    Ok((params, mask))
}

fn fit_options(start: &StartArgs) -> Result<FitOptions> {
    if !(1..=3).contains(&start.starts) {
        return Err(Error::config("starts", "must be 1, 2 or 3"));
    }
    Ok(FitOptions {
        simplex: SimplexOptions {
            max_evaluations: start.max_evals,
            ..Default::default()
        },
        starts: start.starts,
    })
}

#[derive(Debug, Serialize)]
struct DataSummary {
    path: String,
    n: usize,
    covariates: usize,
    transform: Transform,
}

#[derive(Debug, Serialize)]
struct InformationBlock {
    /// Coordinates divided by this before computing information.
    r_max: f64,
    params_rescaled: CovarianceParams,
    info_vector: InfoVector,
    info_zeta: f64,
    influence: InfluenceResult,
    fisher_matrix: [[f64; 4]; 4],
}

#[derive(Debug, Serialize)]
struct ObservedBlock {
    params: Vec<Param>,
    matrix: Vec<Vec<f64>>,
    inverse: Option<Vec<Vec<f64>>>,
    positive_definite: bool,
}

#[derive(Debug, Serialize)]
struct FitReport {
    version: &'static str,
    invocation: String,
    data: DataSummary,
    params_hat: CovarianceParams,
    beta_hat: Vec<f64>,
    loglik: f64,
    fixed: Vec<Param>,
    converged: bool,
    iterations: usize,
    nugget_to_sill: f64,
    vartheta_rescaled: f64,
    r_max: f64,
    information: Option<InformationBlock>,
    information_error: Option<String>,
    observed_information: Option<ObservedBlock>,
    observed_information_error: Option<String>,
}

fn rows_of(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn information_block(params: &CovarianceParams, design: &SamplingDesign) -> Result<InformationBlock> {
    let r = rescale(design)?;
    let scaled = params.with(Param::Vartheta, params.vartheta / r.r_max);
    let fisher = fisher_matrix(&scaled, &r.design, &QuadratureSpec::default())?;
    let m = fisher.matrix;
    Ok(InformationBlock {
        r_max: r.r_max,
        params_rescaled: scaled,
        info_vector: fisher.info_vector()?,
        info_zeta: fisher.microergodic_info()?,
        influence: fisher.local_influence()?,
        fisher_matrix: [0, 1, 2, 3].map(|i| [0, 1, 2, 3].map(|j| m[(i, j)])),
    })
}

pub fn cmd_fit(cmd: &FitCmd, invocation: &str) -> Result<()> {
    let data = read_dataset_csv(&cmd.data.data, cmd.data.transform)?;
    let (init, mask) = start_values(&data, &cmd.start)?;
    let options = fit_options(&cmd.start)?;
    let fit = mle_fit(&data, &init, mask, &options)?;
    let r_max = data.design.r_max();

    let (information, information_error) = if cmd.no_info {
        (None, None)
    } else {
        match information_block(&fit.params_hat, &data.design) {
            Ok(b) => (Some(b), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let (observed_information, observed_information_error) = match observed_info_fd(&data, &fit.params_hat, mask, None) {
        Ok(o) => (
            Some(ObservedBlock {
                params: o.params.clone(),
                matrix: rows_of(&o.matrix),
                inverse: o.inverse().ok().map(|m| rows_of(&m)),
                positive_definite: o.positive_definite,
            }),
            None,
        ),
        Err(e) => (None, Some(e.to_string())),
    };
    let report = FitReport {
        version: VERSION,
        invocation: invocation.to_string(),
        data: DataSummary {
            path: cmd.data.data.display().to_string(),
            n: data.len(),
            covariates: data.n_covariates(),
            transform: cmd.data.transform,
        },
        params_hat: fit.params_hat,
        beta_hat: fit.beta_hat.clone(),
        loglik: fit.loglik,
        fixed: mask.fixed(),
        converged: fit.converged,
        iterations: fit.iterations,
        nugget_to_sill: fit.params_hat.nugget_to_sill(),
        vartheta_rescaled: fit.params_hat.vartheta / r_max,
        r_max,
        information,
        information_error,
        observed_information,
        observed_information_error,
    };
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    emit(cmd.out.as_deref(), &json)
}

fn parse_profile_grids(specs: &[String]) -> Result<(Vec<Param>, Vec<Vec<f64>>)> {
    if specs.is_empty() || specs.len() > 2 {
        return Err(Error::config("grid", "give one or two --grid name=values flags"));
    }
    let mut which = Vec::new();
    let mut axes = Vec::new();
    for spec in specs {
        let (name, values) = spec
            .split_once('=')
            .ok_or_else(|| Error::config("grid", format!("expected name=min:max:step, got `{spec}`")))?;
        let p: Param = name.parse().map_err(|_| Error::config("grid", format!("unknown parameter `{name}`")))?;
        if which.contains(&p) {
            return Err(Error::config("grid", format!("{p} given twice")));
        }
        which.push(p);
        axes.push(parse_grid("grid", values)?);
    }
    let grid = if axes.len() == 1 {
        axes[0].iter().map(|&v| vec![v]).collect()
    } else {
        grid_product(&axes[0], &axes[1]).into_iter().map(|(a, b)| vec![a, b]).collect()
    };
    Ok((which, grid))
}

pub fn cmd_profile(cmd: &ProfileCmd, invocation: &str) -> Result<()> {
    let (which, grid) = parse_profile_grids(&cmd.grid)?;
    let data = read_dataset_csv(&cmd.data.data, cmd.data.transform)?;
    let (init, mask) = start_values(&data, &cmd.start)?;
    if which.iter().any(|p| mask.is_fixed(*p)) {
        return Err(Error::config("grid", "a profiled parameter cannot also be fixed"));
    }
    let options = fit_options(&cmd.start)?;
    let mle = mle_fit(&data, &init, mask, &options)?;
    let mut table = profile_loglik(&data, &which, &grid, &mle.params_hat, mask, &options)?;
    table.mark_mle(&mle.params_hat);

    let mut header: Vec<&str> = which.iter().map(|p| p.name()).collect();
    header.extend([
        "loglik",
        "sigma2_hat",
        "tau2_hat",
        "vartheta_hat",
        "nu_hat",
        "converged",
        "status",
    ]);
    let comments = vec![
        provenance(invocation, None),
        format!(
            "contains_mle={}; mle_loglik={}; mle={:?}",
            table.contains_mle.unwrap_or(false),
            mle.loglik,
            mle.params_hat.as_array()
        ),
    ];
    let body = csv_with_comments(
        &comments,
        &header,
        table.rows.iter().map(|r| {
            let mut cells: Vec<String> = r.values.iter().map(|&v| cell(v)).collect();
            cells.push(cell(r.loglik));
            match &r.params_hat {
                Some(p) => cells.extend(p.as_array().iter().map(|&v| cell(v))),
                None => cells.extend(vec![String::new(); 4]),
            }
            cells.push(r.converged.to_string());
            cells.push(r.status.clone());
            cells
        }),
    )?;
    emit(cmd.out.as_deref(), &body)
}

#[derive(Debug, Serialize)]
struct InfluenceReport {
    version: &'static str,
    invocation: String,
    source: String,
    r_max: Option<f64>,
    params: Option<CovarianceParams>,
    lambda_star: f64,
    delta_star: [f64; 4],
    degenerate: bool,
}

pub fn cmd_influence(cmd: &InfluenceCmd, invocation: &str) -> Result<()> {
    let (fisher, source, r_max) = if let Some(path) = &cmd.matrix {
        let m = read_matrix4(path)?;
        let placeholder = CovarianceParams::new(1.0, 0.0, 1.0, 1.0)?;
        (FisherInfo::from_matrix(m, placeholder), format!("matrix {}", path.display()), None)
    } else {
        let params = CovarianceParams::new(
            require(cmd.sigma2, "sigma2", "without --matrix")?,
            require(cmd.tau2, "tau2", "without --matrix")?,
            require(cmd.vartheta, "vartheta", "without --matrix")?,
            require(cmd.nu, "nu", "without --matrix")?,
        )
        .map_err(|e| Error::config("sigma2/tau2/vartheta/nu", e.to_string()))?;
        let design = build_design(&cmd.design)?;
        let (d, r_max) = computation_design(&design, cmd.no_rescale)?;
        (fisher_matrix(&params, &d, &QuadratureSpec::default())?, "design".to_string(), r_max)
    };
    let infl = local_influence(&fisher)?;
    let report = InfluenceReport {
        version: VERSION,
        invocation: invocation.to_string(),
        source,
        r_max,
        params: cmd.matrix.is_none().then_some(fisher.params),
        lambda_star: infl.lambda_star,
        delta_star: infl.delta_star,
        degenerate: infl.degenerate,
    };
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    emit(cmd.out.as_deref(), &json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("nu", "0.1:0.5:0.1").unwrap(), vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(parse_grid("nu", "1, 2").unwrap(), vec![1.0, 2.0]);
        assert_eq!(parse_grid("nu", "0.3:0.3:0.1").unwrap(), vec![0.3]);
        let err = parse_grid("nu", "0.5:0.1:0.1").unwrap_err();
        assert!(err.to_string().contains("`nu`"));
        assert!(parse_grid("nu", "0.1:0.5:0").is_err());
        assert!(parse_grid("nu", "a,b").is_err());
    }

    #[test]
    fn fix_flags() {
        let d = SamplingDesign::from_points(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], None).unwrap();
        let data = GeoDataset::intercept_only(d, nalgebra::DVector::from_vec(vec![1.0, 2.0, 4.0])).unwrap();
        let start = StartArgs {
            sigma2: None,
            tau2: None,
            vartheta: None,
            nu: None,
            fix: vec!["nu=1.5".into()],
            starts: 3,
            max_evals: 10,
        };
        let (p, mask) = start_values(&data, &start).unwrap();
        assert_eq!(p.nu, 1.5);
        assert!(mask.is_fixed(Param::Nu));
        let bad = StartArgs {
            fix: vec!["kappa=1".into()],
            ..start
        };
        assert!(start_values(&data, &bad).is_err());
    }

    #[test]
    fn invocation_quotes_whitespace() {
        let args: Vec<OsString> = vec!["matern-info".into(), "a b".into()];
        assert_eq!(invocation_string(&args), "matern-info 'a b'");
    }
}
