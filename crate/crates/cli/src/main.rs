use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use skf_core::config::{load_config, ExperimentConfig};
use skf_core::experiment::{
    exponent_study_config, measurement_seed, read_csv, run_sweep, summarize, write_csv, write_sweep,
    Cell, ResultRecord, SeriesRow,
};
use skf_core::pipeline::Scenario;
use skf_core::plot::{emit_plots, exponent_panel_svg};
use skf_core::{export, oracle};

/// Standardized Kalman filter experiments on a spherical EEG head model.
#[derive(Parser)]
#[command(name = "skf", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true, env = "SKF_JOBS", default_value_t = 0)]
    jobs: usize,
    /// Base seed, overriding `sweep.base_seed`.
    #[arg(long, global = true, env = "SKF_SEED")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write waveforms and clean/noisy measurements for one noise level.
    Simulate {
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, default_value_t = 0)]
        rep: usize,
        /// Also write the lead field (electrodes × source components).
        #[arg(long)]
        leadfield: bool,
    },
    /// Reconstruct a single cell and write its amplitude map and diagnostics.
    Filter(CellArgs),
    /// Run the full sweep and write its CSV tables and plots.
    Sweep {
        #[arg(long)]
        no_plots: bool,
    },
    /// Re-render plots from an existing `results.csv` and `series.csv`.
    Plot {
        /// Directory holding the CSV files; defaults to the output directory.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Run the small-instance oracle suites.
    Oracle,
    /// Smoothed reconstructions at 30 dB for exponents 1, 1.25 and 1.5.
    ExponentStudy,
}

#[derive(Args)]
struct CellArgs {
    #[arg(long)]
    ep: Option<f64>,
    #[arg(long)]
    pm: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    smooth: bool,
    #[arg(long, default_value_t = 0)]
    rep: usize,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.sweep.base_seed = seed;
    }
    Ok(cfg)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn simulate(cfg: &ExperimentConfig, noise: Option<f64>, rep: usize, leadfield: bool) -> Result<()> {
    let scn = Scenario::build(cfg)?;
    let dir = &cfg.output_dir;
    let noise_db = noise.unwrap_or(cfg.sweep.noise_db[0]);
    let seed = measurement_seed(cfg.sweep.base_seed, noise_db, rep);
    let meas = scn.measure(noise_db, seed)?;
    export::write_waveforms(&dir.join("waveforms.csv"), &scn.waves)?;
    export::write_measurements(&dir.join("measurements.csv"), &meas.clean, &meas.noisy)?;
    if leadfield {
        export::write_lead_field(&dir.join("leadfield.csv"), &scn.lead)?;
    }
    println!(
        "{} nodes, {} electrodes, lead field rank {}, {} steps",
        scn.space.len(),
        scn.electrodes.len(),
        scn.basis.rank(),
        scn.n_steps()
    );
    println!(
        "deep node {} at {:.1} mm from centre, superficial node {} at {:.1} mm",
        scn.placement.deep_node,
        scn.deep_position().norm() * 1e3,
        scn.placement.superficial_node,
        scn.superficial_position().norm() * 1e3
    );
    println!("noise {noise_db} dB: sigma = {:.4e} V (seed {seed})", meas.noise_std);
    println!("wrote {}", dir.display());
    Ok(())
}

fn filter(cfg: &ExperimentConfig, a: &CellArgs) -> Result<()> {
    let s = &cfg.sweep;
    let cell = Cell {
        ep_snr_db: a.ep.unwrap_or(s.ep_snr_db[0]),
        pm_snr_db: a.pm.unwrap_or(s.pm_snr_db[0]),
        noise_db: a.noise.unwrap_or(s.noise_db[0]),
        alpha: a.alpha.unwrap_or(s.alpha[0]),
        smoothing: a.smooth,
    };
    let scn = Scenario::build(cfg)?;
    let seed = measurement_seed(s.base_seed, cell.noise_db, a.rep);
    let run = scn.reconstruct(cell.ep_snr_db, cell.pm_snr_db, cell.noise_db, seed, cell.smoothing)?;
    let scored = run.score(cell.alpha, cell.smoothing, s.smoothed_weighting)?;
    let dir = &cfg.output_dir;
    export::write_amplitudes(&dir.join("amplitudes.csv"), &scored.standardized, cell.smoothing)?;
    export::write_diagnostics(
        &dir.join("diagnostics.csv"),
        &run.filtered.diagnostics(&scn.basis, cell.alpha)?,
    )?;
    let m = scored.report;
    println!("cell {} rep {} (seed {seed})", cell.slug(), a.rep);
    println!("theta0 = {:.4e}, tau^2 = {:.4e}", run.prior.theta0, run.prior.tau_i_sq);
    println!(
        "loc err deep {:.1} mm (unstandardized {:.1} mm), superficial {:.1} mm (unstandardized {:.1} mm)",
        m.loc_err_deep_mm, m.loc_err_deep_unstd_mm, m.loc_err_sup_mm, m.loc_err_sup_unstd_mm
    );
    println!(
        "echo ratio {}, corr deep {}, corr superficial {}",
        opt(m.echo_ratio),
        opt(m.corr_deep),
        opt(m.corr_sup)
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, jobs: usize, plots: bool) -> Result<bool> {
    let out = run_sweep(cfg, jobs)?;
    write_sweep(&cfg.output_dir, &out)?;
    if plots {
        emit_plots(&out.records, &out.series, &cfg.output_dir)?;
    }
    let failed = out.n_failed();
    println!("{} runs, {failed} failed; wrote {}", out.records.len(), cfg.output_dir.display());
    for r in out.records.iter().filter(|r| r.failed()) {
        eprintln!("failed: {} rep {}: {}", r.cell().slug(), r.rep, r.error);
    }
    Ok(failed == 0)
}

fn plot(dir: &Path, out_dir: &Path) -> Result<()> {
    let records: Vec<ResultRecord> = read_csv(&dir.join("results.csv"))?;
    let series: Vec<SeriesRow> = read_csv(&dir.join("series.csv"))?;
    if records.is_empty() {
        bail!("{} holds no results", dir.display());
    }
    let written = emit_plots(&records, &series, out_dir)?;
    println!("wrote {} plots to {}", written.len(), out_dir.join("plots").display());
    Ok(())
}

fn run_oracles(seed: u64) -> bool {
    let reports = oracle::run_all(seed);
    println!("{:<40} {:>9} {:>12} {:>10} {:>8}", "suite", "instances", "max error", "tolerance", "seconds");
    for r in &reports {
        println!(
            "{:<40} {:>9} {:>12.3e} {:>10.0e} {:>8.3} {}",
            r.name,
            r.instances,
            r.max_error,
            r.tolerance,
            r.seconds,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
    reports.iter().all(|r| r.passed())
}

fn exponent_study(base: &ExperimentConfig, jobs: usize) -> Result<bool> {
    let cfg = exponent_study_config(base);
    let out = run_sweep(&cfg, jobs)?;
    let dir = &cfg.output_dir;
    write_sweep(dir, &out)?;
    let first = out.records.first().context("empty exponent study")?.cell();
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots)?;
    let path = plots.join("exponent_study.svg");
    std::fs::write(&path, exponent_panel_svg(&out.series, &first, &cfg.sweep.alpha))?;
    write_csv(&dir.join("exponent_study.csv"), &summarize(&out.records))?;
    println!("{:>6} {:>14} {:>14} {:>12}", "alpha", "deep err (mm)", "sup err (mm)", "echo ratio");
    for row in summarize(&out.records) {
        println!(
            "{:>6} {:>14} {:>14} {:>12}",
            row.alpha,
            opt(row.loc_err_deep_mm_mean),
            opt(row.loc_err_sup_mm_mean),
            opt(row.echo_ratio_mean)
        );
    }
    println!("wrote {}", path.display());
    Ok(out.n_failed() == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| -> Result<bool> {
        let cfg = load(&cli.common)?;
        match &cli.command {
            Command::Simulate { noise, rep, leadfield } => simulate(&cfg, *noise, *rep, *leadfield).map(|_| true),
            Command::Filter(args) => filter(&cfg, args).map(|_| true),
            Command::Sweep { no_plots } => sweep(&cfg, cli.common.jobs, !no_plots),
            Command::Plot { from } => {
                plot(from.as_deref().unwrap_or(&cfg.output_dir), &cfg.output_dir).map(|_| true)
            }
            Command::Oracle => Ok(run_oracles(cfg.sweep.base_seed)),
            Command::ExponentStudy => exponent_study(&cfg, cli.common.jobs),
        }
    })();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
