//! `spmr`: estimate, solve and backtest sparse mean-reverting portfolios.

mod artifacts;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use spmr_core::backtest::{evaluate, BacktestReport};
use spmr_core::estimation::{build_instance, load_prices, PriceMatrix};
use spmr_core::selfcheck::{run_all, SelfcheckOptions};
use spmr_core::solver::solve;
use spmr_core::synthetic::planted_prices;
use spmr_core::Error;

use artifacts::{read_json, write_json, write_spread_csv, InstanceFile, ReportFile, SolutionFile};
use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "spmr",
    version,
    about = "Sparse, volatile, mean-reverting portfolio selection"
)]
struct Cli {
    /// TOML configuration file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the problem matrices from a price CSV; writes instance.json.
    Estimate { prices: PathBuf },
    /// Solve an instance; writes solution.json.
    Solve { instance: PathBuf },
    /// Trade a solution's spread on a price CSV; writes report.json and spread.csv.
    Backtest { prices: PathBuf, solution: PathBuf },
    /// Estimate on the training window, solve, and backtest on the rest.
    Pipeline { prices: PathBuf },
    /// Run the randomized oracle suites.
    Selfcheck {
        /// Make every check fail, to verify the harness reports failures.
        #[arg(long, hide = true)]
        inject_failure: bool,
    },
    /// Write synthetic prices with a planted mean-reverting triple; writes prices.csv.
    Generate,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return 1;
    };
    match e {
        Error::Infeasible(_) => 2,
        Error::Ingest { .. }
        | Error::InvalidPrice { .. }
        | Error::InsufficientData { .. }
        | Error::Io(_) => 3,
        Error::Estimation(_) => 4,
        Error::ConvergenceFailure { .. }
        | Error::DualUnbounded { .. }
        | Error::DegenerateFace { .. }
        | Error::NotPositiveDefinite { .. } => 5,
        Error::NoVolatility => 6,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Estimate { prices } => {
            let p = load_prices(&prices)?;
            estimate(&p, &cfg, out)?;
        }
        Command::Solve { instance } => {
            let file: InstanceFile = read_json(&instance)?;
            solve_instance(
                &file,
                cli.overrides.k.or(cli.config.as_ref().map(|_| cfg.k)),
                &cfg,
                out,
            )?;
        }
        Command::Backtest { prices, solution } => {
            let p = load_prices(&prices)?;
            let sol: SolutionFile = read_json(&solution)?;
            backtest(&p, &sol, &cfg, out)?;
        }
        Command::Pipeline { prices } => {
            let p = load_prices(&prices)?;
            let (train, test) = split(&p, cfg.train_fraction)?;
            let file = estimate(&train, &cfg, out)?;
            let sol = solve_instance(&file, None, &cfg, out)?;
            backtest(&test, &sol, &cfg, out)?;
        }
        Command::Selfcheck { inject_failure } => {
            let opts = SelfcheckOptions {
                seed: cli
                    .overrides
                    .seed
                    .unwrap_or(SelfcheckOptions::default().seed),
                tolerance_scale: if inject_failure { -1.0 } else { 1.0 },
            };
            return Ok(selfcheck(&opts));
        }
        Command::Generate => {
            let (p, planted) = planted_prices(cfg.seed, &cfg.synthetic);
            let path = out.join("prices.csv");
            let file = std::fs::File::create(&path)
                .with_context(|| format!("writing {}", path.display()))?;
            p.write_csv(file)?;
            let names: Vec<&str> = planted
                .indices()
                .iter()
                .map(|&i| p.tickers()[i].as_str())
                .collect();
            println!(
                "wrote {} ({} rows, planted {})",
                path.display(),
                p.t(),
                names.join(",")
            );
        }
    }
    Ok(0)
}

/// Training rows and backtest rows. A fraction of 1 backtests in-sample.
fn split(p: &PriceMatrix, fraction: f64) -> anyhow::Result<(PriceMatrix, PriceMatrix)> {
    if fraction >= 1.0 {
        return Ok((p.clone(), p.clone()));
    }
    let rows = (p.t() as f64 * fraction).floor() as usize;
    let (train, test) = p.split_at(rows);
    if test.t() < 2 {
        return Err(Error::InsufficientData {
            rows: test.t(),
            required: 2,
        })
        .context("backtest window after the training split is too short");
    }
    Ok((train, test))
}

fn estimate(p: &PriceMatrix, cfg: &RunConfig, out: &Path) -> anyhow::Result<InstanceFile> {
    let inst = build_instance(p, cfg.k, &cfg.estimation())?;
    let file = InstanceFile::new(&inst, p, cfg.phi_multiplier);
    let path = out.join("instance.json");
    write_json(&path, &file)?;
    println!(
        "wrote {} (N = {}, T = {}, φ = {:.6e})",
        path.display(),
        inst.n(),
        p.t(),
        inst.phi()
    );
    Ok(file)
}

fn solve_instance(
    file: &InstanceFile,
    k: Option<usize>,
    cfg: &RunConfig,
    out: &Path,
) -> anyhow::Result<SolutionFile> {
    let inst = file.instance(k)?;
    let outcome = solve(&inst, &cfg.solver(), None)?;
    let sol = SolutionFile::new(&file.tickers, &inst, &outcome);
    let path = out.join("solution.json");
    write_json(&path, &sol)?;
    println!(
        "wrote {} (support {}, objective {:.6e}, stage one {:.6e})",
        path.display(),
        sol.support_tickers.join(","),
        sol.objective,
        sol.stage_one.objective
    );
    Ok(sol)
}

fn backtest(
    p: &PriceMatrix,
    sol: &SolutionFile,
    cfg: &RunConfig,
    out: &Path,
) -> anyhow::Result<BacktestReport> {
    let y = sol.weights_for(p)?;
    if p.t() < 2 {
        bail!("backtest needs at least two price rows");
    }
    let report = evaluate(p, &y, cfg.backtest.band_d)?;
    let dates = p.dates();
    let file = ReportFile {
        tickers: p.tickers().to_vec(),
        weights: y,
        band_d: cfg.backtest.band_d,
        first_date: dates.first().cloned().unwrap_or_default(),
        last_date: dates.last().cloned().unwrap_or_default(),
        report,
    };
    let path = out.join("report.json");
    write_json(&path, &file)?;
    write_spread_csv(&out.join("spread.csv"), dates, &file.report)?;
    println!(
        "wrote {} ({} round trips, cum P&L {:.6e}, Sharpe {:.4})",
        path.display(),
        file.report.trades.round_trips(),
        file.report.cum_pnl,
        file.report.sharpe
    );
    Ok(file.report)
}

fn selfcheck(opts: &SelfcheckOptions) -> u8 {
    let reports = run_all(opts);
    let mut failed = 0;
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status}  {:<44} cases {:>4}  failures {:>4}  {:>7.2}s",
            r.name, r.cases, r.failures, r.seconds
        );
        if let (false, Some(msg)) = (r.passed(), &r.first_failure) {
            println!("      first failure: {msg}");
        }
        failed += usize::from(!r.passed());
    }
    let total_failures: usize = reports.iter().map(|r| r.failures).sum();
    println!(
        "{} of {} suites passed; {total_failures} failing cases",
        reports.len() - failed,
        reports.len()
    );
    u8::from(failed > 0)
}
