//! Batch front-end: config parsing, run orchestration and artifacts.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use wied_core::diagnostics::{
    check_derivative_law, check_energy_bounds, nondegeneracy, oracle_floor, sweep_entry, ConvergenceReport,
};
use wied_core::io::{read_field, write_field};
use wied_core::reference::bump_bank;
use wied_core::{double_inequality_check, energy_trace, minimize, solve_parabolic, strong_residual, Error};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Sweep with at least one failed entry; artifacts are still written.
    #[error("{0} of the sweep entries did not converge")]
    PartialSweep(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::NonConvergence { .. }) | CliError::PartialSweep(_) => 2,
            CliError::Core(Error::Step { source, .. }) if matches!(**source, Error::NonConvergence { .. }) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Where artifacts go and how chatty to be.
pub struct Context {
    pub out: PathBuf,
    pub quiet: bool,
}

impl Context {
    pub fn new(config: &RunConfig, out: Option<PathBuf>, quiet: bool) -> CliResult<Self> {
        let out = out
            .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&out).map_err(|source| CliError::Io {
            path: out.clone(),
            source,
        })?;
        Ok(Self { out, quiet })
    }

    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io { path, source })
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        self.write(name, serde_json::to_string_pretty(value).map_err(Error::from)?)
    }
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::parse(&text)
}

pub fn run_solve(cfg: &RunConfig, ctx: &Context) -> CliResult<()> {
    let eps = cfg.epsilon()?;
    let spec = cfg.spec(eps)?;
    let grid = cfg.grid()?;
    let (u, report) = minimize(&spec, &grid, &cfg.solver)?;
    ctx.log(format!(
        "solve: {} newton iterations, residual {:.3e}, energy {:.6e}, {:.2} s",
        report.iterations, report.residual, report.energy.total, report.wall_time
    ));
    write_field(&ctx.out, "u", &u, spec.gamma, eps)?;
    ctx.write_json("solve_report.json", &report)?;
    ctx.write("trace.csv", energy_trace(&u, &spec)?.to_csv())?;
    Ok(())
}

pub fn run_reference(cfg: &RunConfig, ctx: &Context, reaction: bool) -> CliResult<()> {
    let eps = cfg.eps_list()[0];
    let spec = cfg.spec(eps)?;
    let (r, log) = solve_parabolic(&spec, &cfg.grid()?, &cfg.solver, reaction)?;
    ctx.log(format!("reference: {} steps, {:.2} s", log.steps.len(), log.wall_time));
    write_field(&ctx.out, "reference", &r, spec.gamma, eps)?;
    ctx.write("reference_log.csv", log.to_csv())?;
    Ok(())
}

pub fn run_sweep(cfg: &RunConfig, ctx: &Context) -> CliResult<ConvergenceReport> {
    let list = cfg.eps_list();
    let grid = cfg.grid()?;
    let base = cfg.spec(list[0])?;
    let theta = cfg.theta(&base)?;
    let qr = cfg.diagnostics.qr_radius;
    let (reference, _) = solve_parabolic(&base, &grid, &cfg.solver, true)?;
    write_field(&ctx.out, "reference", &reference, base.gamma, list[0])?;
    let floor = oracle_floor(&base, &grid, &cfg.solver, qr)?;
    ctx.log(format!("sweep: reference done, oracle floor {floor:.3e}"));

    let results: Vec<_> = list
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| -> CliResult<_> {
            let (entry, field) = sweep_entry(&base, eps, &grid, &cfg.solver, &reference, qr, theta)?;
            if let Some(u) = field {
                write_field(&ctx.out, &format!("u_e{i}"), &u, base.gamma, eps)?;
            }
            Ok(entry)
        })
        .collect();
    let entries = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    for e in &entries {
        match &e.error {
            None => ctx.log(format!("  eps {}: l2 {:.3e}, chi {:.4}", e.epsilon, e.l2_error, e.chi_mismatch)),
            Some(msg) => ctx.log(format!("  eps {}: FAILED: {msg}", e.epsilon)),
        }
    }
    let report = ConvergenceReport::from_entries(entries, qr, theta, floor);
    ctx.write_json("convergence.json", &report)?;
    ctx.write("convergence.csv", report.to_csv())?;
    let failed = report.entries.iter().filter(|e| !e.converged).count();
    if failed > 0 {
        return Err(CliError::PartialSweep(failed));
    }
    Ok(report)
}

pub fn run_diagnose(cfg: &RunConfig, ctx: &Context, field_path: &Path) -> CliResult<()> {
    let (u, meta) = read_field(field_path)?;
    let grid = cfg.grid()?;
    if !u.grid().same_nodes(&grid) {
        return Err(Error::Format(format!("{}: grid does not match the config", field_path.display())).into());
    }
    if meta.gamma != cfg.problem.gamma {
        return Err(Error::Format(format!(
            "{}: gamma {} does not match problem.gamma {}",
            field_path.display(),
            meta.gamma,
            cfg.problem.gamma
        ))
        .into());
    }
    let spec = cfg.spec(meta.epsilon)?;
    let theta = cfg.theta(&spec)?;

    let energy = check_energy_bounds(&u, &spec, &cfg.slab_radii(spec.epsilon), cfg.diagnostics.margin)?;
    ctx.write_json("energy_estimates.json", &energy)?;
    ctx.write("slabs.csv", energy.slab_csv())?;

    let trace = energy_trace(&u, &spec)?;
    let law = check_derivative_law(&trace);
    ctx.write("trace.csv", trace.to_csv())?;
    ctx.write_json("derivative_law.json", &law)?;

    let nd = nondegeneracy(&u, &spec, &cfg.diagnostics.radii, theta)?;
    ctx.write_json("nondegeneracy.json", &nd)?;
    let bank = bump_bank(&grid, cfg.diagnostics.bank_size);
    let weak = strong_residual(&u, &spec, &bank)?;
    ctx.write_json(
        "strong_residual.json",
        &serde_json::json!({ "bank_size": bank.len(), "residual": weak }),
    )?;
    if spec.gamma == 1.0 {
        ctx.write_json("double_inequality.json", &double_inequality_check(&u, &spec, theta)?)?;
    }
    ctx.log(format!(
        "diagnose: kinetic {:.4e} (c_est {:.4e}), E monotone {}, {} free-boundary points, min ratio {:?}",
        energy.kinetic_total,
        energy.c_est,
        law.monotone,
        nd.fb_points.len(),
        nd.min_ratio
    ));
    Ok(())
}
