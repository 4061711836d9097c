use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use cdma_lsa_cli::{output, run, Command, Failure, RunConfig};
use clap::{Args, Parser, Subcommand};

/// Energy-efficient power control experiments for multipath CDMA uplinks.
#[derive(Debug, Parser)]
#[command(name = "cdma-lsa", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Large-system power and utility profiles across users.
    Predict,
    /// Seeded finite-system trials of the power-control game.
    Simulate,
    /// Large-system sweep of the three receivers over a grid of user counts.
    CompareReceivers {
        /// Also simulate every grid point.
        #[arg(long)]
        overlay: bool,
    },
    /// Average utility versus training length.
    TrainingSweep,
    /// Power-capped profile: prediction against simulation.
    Constrained,
}

#[derive(Debug, Args)]
struct Common {
    /// `key = value` config file, or a previous run's manifest.json.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory (otherwise $CDMA_LSA_OUT_DIR, then ./out).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Number of users K
    #[arg(long, short = 'K', global = true)]
    users: Option<usize>,
    /// Monte-Carlo trials
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// mmse, mf or dec
    #[arg(long, global = true)]
    receiver: Option<String>,
    /// game or lsa
    #[arg(long, global = true)]
    power_rule: Option<String>,
    /// Base RNG seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Transmit power cap (`inf` for none)
    #[arg(long, global = true)]
    p_max: Option<String>,
    /// User counts for grid commands, e.g. `8,16,24` or `4..=64:4`.
    #[arg(long, global = true)]
    k_grid: Option<String>,
    /// Average received power for the training sweep.
    #[arg(long, global = true)]
    power: Option<f64>,
    /// Worker threads for trials (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

fn resolve(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text)
            .with_context(|| format!("in {}", path.display()))?;
    }
    for o in &common.overrides {
        cfg.set_assignment(o)?;
    }
    let flags = [
        ("K", common.users.map(|v| v.to_string())),
        ("trials", common.trials.map(|v| v.to_string())),
        ("receiver", common.receiver.clone()),
        ("power_rule", common.power_rule.clone()),
        ("seed", common.seed.map(|v| v.to_string())),
        ("P_max", common.p_max.clone()),
        ("k_grid", common.k_grid.clone()),
        ("training_power", common.power.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    Ok(cfg)
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
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let command = match cli.command {
        Cmd::Predict => Command::Predict,
        Cmd::Simulate => Command::Simulate,
        Cmd::CompareReceivers { overlay } => Command::CompareReceivers { overlay },
        Cmd::TrainingSweep => Command::TrainingSweep,
        Cmd::Constrained => Command::Constrained,
    };
    let result = resolve(&cli.common)
        .map_err(Failure::Usage)
        .and_then(|cfg| run(command, &cfg, &output::resolve_out_dir(cli.common.out.as_deref())));
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}
