//! Command-line entry point.
//!
//! Exit codes: 0 success or all checks passed, 1 a bound check failed,
//! 2 invalid input or configuration, 3 numerical non-convergence.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{ConfigMap, KernelBackend, RunConfig};
use crate::error::{Error, Result};
use crate::fit::log_space;
use crate::heat::{
    oracle_diagonal, AngularOptions, KernelMetadata, KernelModel, TimestepOptions, KERNEL_CSV_HEADER, MIN_EXPANSION_T,
};
use crate::spectral::{
    build_grid, compute_spectrum_extrapolated, ground_state, verify_radial_ground, LadderLevel, LadderOptions,
    RadialGroundReport,
};
use crate::verify::{run_suite, SuiteReport, Verdict};
use crate::wkb::{default_order, f_eval, residual_decay_report, residual_g, wkb_coefficients, SlopeReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// File holding the resolved `key=value` configuration in every output directory.
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.txt";

#[derive(Debug, Parser)]
#[command(name = "kernel-bounds", version, about = "Spectra, heat kernels and bound checks for (1+|x|^a)Δ - |x|^b")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file of key=value lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for randomized checks (overrides verify.seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Admit parameters outside alpha >= 2, beta > alpha - 2.
    #[arg(long, global = true)]
    pub sanity: bool,
    /// Override any configuration key.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues per sector, eigenfunctions and the ground-state ladder.
    Spectrum,
    /// Correction coefficients, residual samples and the decay fit.
    Wkb {
        #[arg(long, allow_negative_numbers = true)]
        lambda: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Heat-kernel slices on a radial × radial × cosine lattice.
    Kernel {
        /// Comma-separated times (overrides kernel.t).
        #[arg(long, value_delimiter = ',')]
        t: Vec<f64>,
    },
    /// Run the bound checkers.
    Verify {
        /// Negative control: inflate the envelope's exponential rate.
        #[arg(long)]
        debug_corrupt_exponent: bool,
    },
    /// Spectrum, expansion and checks into one directory with a summary.
    Report {
        /// Negative control: inflate the envelope's exponential rate.
        #[arg(long)]
        debug_corrupt_exponent: bool,
    },
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_INPUT
            }
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut map = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config '{}': {e}", path.display())))?;
            ConfigMap::parse(&text)?
        }
        None => ConfigMap::default(),
    };
    for pair in &cli.set {
        map.set_pair(pair)?;
    }
    if let Some(out) = &cli.out {
        map.set("output.dir", &out.to_string_lossy())?;
    }
    if let Some(seed) = cli.seed {
        map.set("verify.seed", &seed.to_string())?;
    }
    if cli.sanity {
        map.set("params.sanity_mode", "true")?;
    }
    match &cli.command {
        Command::Wkb { lambda, k } => {
            if let Some(l) = lambda {
                map.set("wkb.lambda", &l.to_string())?;
            }
            if let Some(k) = k {
                map.set("wkb.k", &k.to_string())?;
            }
        }
        Command::Kernel { t } if !t.is_empty() => {
            let joined: Vec<String> = t.iter().map(|v| v.to_string()).collect();
            map.set("kernel.t", &joined.join(","))?;
        }
        Command::Verify { debug_corrupt_exponent: true } | Command::Report { debug_corrupt_exponent: true } => {
            map.set("debug.corrupt_exponent", "true")?;
        }
        _ => {}
    }
    RunConfig::from_map(&map)
}

fn execute(cli: &Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = resolve(cli)?;
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir)
        .map_err(|e| Error::Config(format!("output directory '{}' is not writable: {e}", dir.display())))?;
    fs::write(dir.join(RESOLVED_CONFIG_FILE), &cfg.resolved)?;
    if cfg.params.sanity_mode() {
        println!("note: sanity mode (parameters may lie outside alpha >= 2, beta > alpha - 2)");
    }
    match &cli.command {
        Command::Spectrum => cmd_spectrum(&cfg, &dir).map(|_| EXIT_OK),
        Command::Wkb { .. } => cmd_wkb(&cfg, &dir).map(|_| EXIT_OK),
        Command::Kernel { .. } => cmd_kernel(&cfg, &dir).map(|_| EXIT_OK),
        Command::Verify { .. } => cmd_verify(&cfg, &dir).map(|s| verify_exit(&s)),
        Command::Report { .. } => cmd_report(&cfg, &dir),
    }
}

fn write_json<T: Serialize>(cfg: &RunConfig, path: &Path, value: &T) -> Result<()> {
    #[derive(Serialize)]
    struct WithConfig<'a, T: Serialize> {
        resolved_config: Vec<&'a str>,
        #[serde(flatten)]
        body: &'a T,
    }
    let doc = WithConfig {
        resolved_config: cfg.resolved.lines().collect(),
        body: value,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct LadderDocument {
    pub lambda0: f64,
    pub lambdas: Vec<f64>,
    pub monotone: bool,
    pub ladder: Vec<LadderLevel>,
    pub radial_ground: RadialGroundReport,
    pub spectrum_extrapolated: bool,
}

pub fn cmd_spectrum(cfg: &RunConfig, dir: &Path) -> Result<LadderDocument> {
    let params = &cfg.params;
    let grid = build_grid(params, cfg.grid.r_max, cfg.grid.n, cfg.grid.grading)?;
    let spectrum = compute_spectrum_extrapolated(params, &grid, cfg.spectral.ell_max, cfg.spectral.modes)?;
    let gs = ground_state(
        params,
        &LadderOptions {
            tol: cfg.spectral.tol,
            r_max: cfg.grid.r_max,
            ..LadderOptions::default()
        },
    )?;
    let radial = verify_radial_ground(params, &grid)?;
    if cfg.output.csv {
        spectrum.write_csv(dir)?;
    }
    let doc = LadderDocument {
        lambda0: gs.lambda0,
        lambdas: gs.lambdas.clone(),
        monotone: gs.monotone,
        ladder: gs.ladder.clone(),
        radial_ground: radial,
        spectrum_extrapolated: spectrum.extrapolated,
    };
    if cfg.output.json {
        write_json(cfg, &dir.join("ladder.json"), &doc)?;
    }
    println!("lambda0 = {:.12} (ladder of {} levels)", doc.lambda0, doc.ladder.len());
    for p in spectrum.sectors.iter().flatten().filter(|p| p.j == 0) {
        println!("ell = {}: top eigenvalue {:.10}", p.ell, p.lambda);
    }
    Ok(doc)
}

#[derive(Debug, Serialize)]
pub struct WkbDocument {
    pub lambda: f64,
    pub order: usize,
    pub coefficients: Vec<f64>,
    pub recurrence_residuals: Vec<f64>,
    pub order_condition_met: bool,
    pub slope: SlopeReport,
}

pub fn cmd_wkb(cfg: &RunConfig, dir: &Path) -> Result<WkbDocument> {
    let params = &cfg.params;
    let w = &cfg.wkb;
    let k = w.k.unwrap_or_else(|| default_order(params));
    let exp = wkb_coefficients(params, w.lambda, k)?.with_base_radius(w.base_radius)?;
    if !exp.order_condition_met() && !w.allow_low_order {
        println!(
            "warning: order k={k} violates k*xi + 2 - alpha > 0 (xi = {}); proceeding",
            params.derived().xi
        );
    }
    let slope = residual_decay_report(params, &exp, w.r_lo, w.r_hi, w.samples)?;
    if cfg.output.csv {
        let mut coeffs = String::from("i,c_i\n");
        for (i, c) in exp.coeffs().iter().enumerate() {
            let _ = writeln!(coeffs, "{},{}", i + 1, c + 0.0);
        }
        fs::write(dir.join("wkb_coefficients.csv"), coeffs)?;
        let mut res = String::from("r,f,g,r2g_minus_lambda\n");
        for r in log_space(w.r_lo, w.r_hi, w.samples) {
            let g = residual_g(params, &exp, r)?;
            let _ = writeln!(res, "{},{},{},{}", r, f_eval(params, &exp, r)?, g, r * r * g - w.lambda);
        }
        fs::write(dir.join("wkb_residual.csv"), res)?;
    }
    let doc = WkbDocument {
        lambda: w.lambda,
        order: k,
        coefficients: exp.coeffs().iter().map(|c| c + 0.0).collect(),
        recurrence_residuals: exp.recurrence_residuals(),
        order_condition_met: exp.order_condition_met(),
        slope,
    };
    if cfg.output.json {
        write_json(cfg, &dir.join("wkb_slope.json"), &doc)?;
    }
    println!("coefficients: {:?}", doc.coefficients);
    match doc.slope.measured_slope {
        Some(s) => println!("slope of log|r^2 g - lambda|: {s:.4} (expected {:.4})", doc.slope.expected_slope),
        None => println!("slope: vacuously passed (residual below rounding noise)"),
    }
    for note in &doc.slope.notes {
        println!("note: {note}");
    }
    Ok(doc)
}

#[derive(Debug, Serialize)]
pub struct KernelTimeMetadata {
    pub t: f64,
    pub symmetry_residual: Option<f64>,
    pub mass: Option<f64>,
    pub metadata: Option<KernelMetadata>,
    pub timestep_sectors: Option<Vec<usize>>,
}

#[derive(Debug, Serialize)]
pub struct KernelDocument {
    pub backend: KernelBackend,
    pub slices: Vec<KernelTimeMetadata>,
}

pub fn cmd_kernel(cfg: &RunConfig, dir: &Path) -> Result<KernelDocument> {
    let params = &cfg.params;
    let k = &cfg.kernel;
    let grid = build_grid(params, cfg.grid.r_max, cfg.grid.n, cfg.grid.grading)?;
    let mut times = k.times.clone();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut csv = format!("{KERNEL_CSV_HEADER}\n");
    let mut slices = Vec::new();
    match k.backend {
        KernelBackend::Eigenexpansion => {
            if times[0] < MIN_EXPANSION_T {
                return Err(Error::InsufficientResolution {
                    t: times[0],
                    smallest_usable_t: MIN_EXPANSION_T,
                });
            }
            let model = KernelModel::new(params, &grid, k.ell_max, times[0], k.max_modes)?;
            for &t in &times {
                let slice = model.slice(t, &k.radii, &k.cosines, k.angular_tol)?;
                slice.to_csv_rows(&mut csv);
                slices.push(KernelTimeMetadata {
                    t,
                    symmetry_residual: Some(slice.symmetry_residual()),
                    mass: Some(model.mass(t)?),
                    metadata: Some(slice.metadata.clone()),
                    timestep_sectors: None,
                });
            }
        }
        KernelBackend::Timestep => {
            let mut sectors = Vec::new();
            let mut rows: Vec<(f64, f64, f64)> = Vec::new();
            for &r in &k.radii {
                let node = grid.nearest_node(r);
                let rn = grid.nodes()[node];
                let series = oracle_diagonal(
                    params,
                    &grid,
                    node,
                    &times,
                    &TimestepOptions::default(),
                    &AngularOptions::default(),
                )?;
                sectors.push(series.sectors_used);
                for (t, v) in times.iter().zip(&series.values) {
                    rows.push((*t, rn, *v));
                }
            }
            rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            for (t, r, v) in rows {
                let _ = writeln!(csv, "{t},{r},{r},1,{v},{}", v / params.diffusion(r));
            }
            for &t in &times {
                slices.push(KernelTimeMetadata {
                    t,
                    symmetry_residual: None,
                    mass: None,
                    metadata: None,
                    timestep_sectors: Some(sectors.clone()),
                });
            }
        }
    }
    if cfg.output.csv {
        fs::write(dir.join("kernel.csv"), csv)?;
    }
    let doc = KernelDocument {
        backend: k.backend,
        slices,
    };
    if cfg.output.json {
        write_json(cfg, &dir.join("kernel_metadata.json"), &doc)?;
    }
    println!("kernel slices written for t = {times:?}");
    Ok(doc)
}

pub fn cmd_verify(cfg: &RunConfig, dir: &Path) -> Result<SuiteReport> {
    let suite = run_suite(&cfg.params, &cfg.verify.checkers, &cfg.verify.options)?;
    if cfg.output.json {
        write_json(cfg, &dir.join("verify_report.json"), &suite)?;
    }
    for r in &suite.reports {
        println!("{:<22} {}", r.id.name(), verdict_label(r.verdict));
    }
    if suite.inconclusive > 0 {
        println!("warnings: {} inconclusive-with-drift", suite.inconclusive);
    }
    Ok(suite)
}

pub fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::InconclusiveWithDrift => "inconclusive-with-drift",
        Verdict::Skipped => "skipped",
    }
}

/// 1 when any verdict is a failure, else 0.
pub fn verify_exit(suite: &SuiteReport) -> i32 {
    if suite.failed > 0 {
        EXIT_VIOLATION
    } else {
        EXIT_OK
    }
}

fn cmd_report(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    let ladder = cmd_spectrum(cfg, dir)?;
    let wkb_cfg = RunConfig {
        wkb: crate::config::WkbConfig {
            lambda: ladder.lambda0,
            ..cfg.wkb.clone()
        },
        ..cfg.clone()
    };
    let wkb = cmd_wkb(&wkb_cfg, dir)?;
    let suite = cmd_verify(cfg, dir)?;
    let mut s = String::new();
    let _ = writeln!(s, "# Run summary\n");
    let p = &cfg.params;
    let _ = writeln!(
        s,
        "N = {}, alpha = {}, beta = {}, sanity mode = {}\n",
        p.dim(),
        p.alpha(),
        p.beta(),
        p.sanity_mode()
    );
    let _ = writeln!(s, "lambda0 = {:.12}\n", ladder.lambda0);
    let _ = writeln!(s, "WKB order {} at lambda0: coefficients {:?}\n", wkb.order, wkb.coefficients);
    let _ = writeln!(s, "| checker | verdict |\n|---|---|");
    for r in &suite.reports {
        let _ = writeln!(s, "| {} | {} |", r.id.name(), verdict_label(r.verdict));
    }
    fs::write(dir.join("summary.md"), s)?;
    Ok(verify_exit(&suite))
}
