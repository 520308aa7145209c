use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use cascade_core::commands::{
    cmd_periodic, cmd_relax_scan, cmd_simulate, cmd_steady, CommandError,
};
use cascade_core::config::{RawConfig, RunConfig};

const THREADS_VAR: &str = "CASCADE_THREADS";

#[derive(Parser)]
#[command(
    version,
    about = "Two-reactor CSTR cascade with flow reversal and relaxation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Steady-state diagram of constant-flow operation.
    Steady(Overrides),
    /// Diagram of symmetric reverse-flow regimes (beg, end, av).
    Periodic(Overrides),
    /// Time series of one operating mode.
    Simulate(Overrides),
    /// Scan of the relaxation time with a gain report.
    RelaxScan(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// Configuration file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Reaction order.
    #[arg(long)]
    order: Option<f64>,
    /// constant, reverse or relaxation.
    #[arg(long)]
    mode: Option<String>,
    /// Feed direction for constant flow (0 or 1).
    #[arg(long)]
    io: Option<u8>,
    #[arg(long)]
    da: Option<f64>,
    #[arg(long)]
    da_min: Option<f64>,
    #[arg(long)]
    da_max: Option<f64>,
    /// Continuation increment in Da.
    #[arg(long)]
    dp: Option<f64>,
    #[arg(long)]
    tau_rf: Option<f64>,
    /// Relaxation time, or `scan`.
    #[arg(long)]
    tau_rel: Option<String>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long)]
    seed_alpha1: Option<f64>,
    #[arg(long)]
    seed_alpha2: Option<f64>,
    /// Grid step of the relaxation-time scan.
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long)]
    steps_per_period: Option<usize>,
    #[arg(long)]
    record_every: Option<usize>,
    #[arg(long)]
    max_cycles: Option<usize>,
    #[arg(long)]
    settle_tol: Option<f64>,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn raw(&self) -> anyhow::Result<RawConfig> {
        let mut raw = RawConfig::new();
        let mut set = |key: &str, value: Option<String>| -> anyhow::Result<()> {
            if let Some(v) = value {
                raw.set(key, &v)?;
            }
            Ok(())
        };
        let s = |v: Option<f64>| v.map(|x| x.to_string());
        let u = |v: Option<usize>| v.map(|x| x.to_string());
        set("gamma", s(self.gamma))?;
        set("beta", s(self.beta))?;
        set("order", s(self.order))?;
        set("mode", self.mode.clone())?;
        set("io", self.io.map(|x| x.to_string()))?;
        set("da", s(self.da))?;
        set("da_min", s(self.da_min))?;
        set("da_max", s(self.da_max))?;
        set("dp", s(self.dp))?;
        set("tau_rf", s(self.tau_rf))?;
        set("tau_rel", self.tau_rel.clone())?;
        set("cycles", u(self.cycles))?;
        set("seed_alpha1", s(self.seed_alpha1))?;
        set("seed_alpha2", s(self.seed_alpha2))?;
        set("grid_step", s(self.grid_step))?;
        set("steps_per_period", u(self.steps_per_period))?;
        set("record_every", u(self.record_every))?;
        set("max_cycles", u(self.max_cycles))?;
        set("settle_tol", s(self.settle_tol))?;
        set("svg", self.svg.then(|| "true".to_string()))?;
        set("out", self.out.as_ref().map(|p| p.display().to_string()))?;
        Ok(raw)
    }

    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let file = match &self.config {
            Some(path) => {
                let text =
                    RawConfig::read(path).with_context(|| format!("reading {}", path.display()))?;
                RawConfig::parse(&text, &path.display().to_string())?
            }
            None => RawConfig::new(),
        };
        Ok(RunConfig::resolve(&file.merged(self.raw()?))?)
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("ignoring {THREADS_VAR}: {e}");
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    let cli = Cli::parse();
    let (overrides, run): (&Overrides, fn(&RunConfig) -> Result<_, CommandError>) =
        match &cli.command {
            Command::Steady(o) => (o, cmd_steady),
            Command::Periodic(o) => (o, cmd_periodic),
            Command::Simulate(o) => (o, cmd_simulate),
            Command::RelaxScan(o) => (o, cmd_relax_scan),
        };
    let config = match overrides.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match run(&config) {
        Ok(out) => {
            for line in &out.summary {
                println!("{line}");
            }
            for file in &out.files {
                println!("wrote {}", file.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
