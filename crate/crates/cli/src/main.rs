use clap::Parser;
use spinnet::sweep::{locate_critical_point, run_sweep, EngineChoice, RunOptions, SweepConfig};
use std::path::PathBuf;
use std::process::ExitCode;

/// Ground states and entanglement measures of spin-1/2 lattices over a
/// parameter grid.
#[derive(Parser, Debug)]
#[command(name = "sweep", version, after_help = "Checkpoints go to $SPINNET_CACHE_DIR when set, otherwise to <out>/cache.")]
struct Args {
    /// TOML file describing model, grid, solver and environment.
    config: PathBuf,
    /// Output directory (overrides [output].dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Environment contraction for 2D runs.
    #[arg(long, value_parser = parse_engine)]
    engine: Option<EngineChoice>,
    /// Worker threads; each works through one warm-start chain at a time.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Skip points finished by an earlier run of the same configuration.
    #[arg(long)]
    resume: bool,
}

fn parse_engine(s: &str) -> Result<EngineChoice, String> {
    s.parse().map_err(|e: spinnet::Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();

    let cfg = match SweepConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("sweep: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let out = args.out.or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    let opts = RunOptions { out_dir: Some(out.clone()), engine: args.engine, jobs: args.jobs, resume: args.resume, cache_dir: None };
    let res = match run_sweep(&cfg, &opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("sweep: {e}");
            return ExitCode::FAILURE;
        }
    };

    let failed = res.rows.iter().filter(|r| r.status.starts_with("failed")).count();
    println!("{} rows written to {}", res.rows.len(), out.join(format!("{}.csv", cfg.name)).display());
    if failed > 0 {
        println!("{failed} rows failed; see the status column");
    }
    let mut engines: Vec<&str> = res.rows.iter().map(|r| r.engine.as_str()).collect();
    engines.dedup();
    for e in engines {
        if let Some((x, y)) = res.column(e, "energy") {
            match locate_critical_point(&x, &y) {
                Ok(c) if c.interior => println!("{e}: energy curvature peaks at {:.4} ± {:.4}", c.estimate, c.uncertainty),
                Ok(_) => println!("{e}: no interior singularity in the energy"),
                Err(_) => {}
            }
        }
    }
    ExitCode::SUCCESS
}
