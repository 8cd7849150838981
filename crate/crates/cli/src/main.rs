use clap::{Parser, Subcommand};
use fwl::{format_scenarios, run_with_threads, CliError, ExperimentConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fwl", version, about = "Weighted Fock-space and Bergman-disk experiment runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario from a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (default: `output` from the config, else `out/<scenario>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Override the quadrature grid radius.
        #[arg(long = "grid-R")]
        grid_r: Option<f64>,
        /// Override the quadrature grid spacing.
        #[arg(long = "grid-h")]
        grid_h: Option<f64>,
    },
    /// List scenarios with their required keys.
    List,
}

fn run(
    config: PathBuf,
    out: Option<PathBuf>,
    threads: Option<usize>,
    grid_r: Option<f64>,
    grid_h: Option<f64>,
) -> Result<i32, CliError> {
    let mut cfg = ExperimentConfig::from_path(&config)?;
    if grid_r.is_some() || grid_h.is_some() {
        let mut g = cfg.grid.unwrap_or(fwl_core::numerics::GridSpec::new(cfg.params.n, 8.0, 0.05));
        if let Some(r) = grid_r {
            g.radius = r;
        }
        if let Some(h) = grid_h {
            g.spacing = h;
        }
        cfg.grid = Some(g);
    }
    let threads = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let dir = out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.scenario.name()));
    let result = run_with_threads(&cfg, threads)?;
    for path in result.write(&dir)? {
        log::info!("wrote {}", path.display());
    }
    for c in &result.report.checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!(
        "{} {} in {:.2}s -> {}",
        cfg.scenario.name(),
        if result.report.pass { "passed" } else { "failed" },
        result.report.wall_clock_seconds,
        dir.display()
    );
    Ok(result.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::List => {
            print!("{}", format_scenarios());
            0
        }
        Cmd::Run {
            config,
            out,
            threads,
            grid_r,
            grid_h,
        } => match run(config, out, threads, grid_r, grid_h) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    };
    ExitCode::from(code as u8)
}
