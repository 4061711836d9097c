//! The five experiments. Each builds all of its artifacts in memory before
//! anything is written, so a failing run leaves no partial files.

use std::path::{Path, PathBuf};

use anyhow::anyhow;
use cdma_lsa::game::{solve_target_sinr, EquilibriumOptions};
use cdma_lsa::lsa;
use cdma_lsa::model::SystemConfig;
use cdma_lsa::montecarlo::{self, ProfileMode, SampleStats};
use cdma_lsa::receivers::ReceiverKind;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{fmt_f64, to_json_bytes, write_all, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Predict,
    Simulate,
    CompareReceivers { overlay: bool },
    TrainingSweep,
    Constrained,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Predict => "predict",
            Self::Simulate => "simulate",
            Self::CompareReceivers { .. } => "compare-receivers",
            Self::TrainingSweep => "training-sweep",
            Self::Constrained => "constrained",
        }
    }
}

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Infeasible(anyhow::Error),
    Convergence(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Infeasible(_) => 2,
            Self::Convergence(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(e) => write!(f, "error: {e:#}"),
            Self::Infeasible(e) => write!(f, "infeasible: {e:#}"),
            Self::Convergence(msg) => write!(f, "convergence failure: {msg}"),
        }
    }
}

impl From<cdma_lsa::Error> for Failure {
    fn from(e: cdma_lsa::Error) -> Self {
        use cdma_lsa::Error as E;
        match e {
            E::Infeasible { .. } | E::ZeroForcingInfeasible { .. } => Self::Infeasible(e.into()),
            E::NotConverged { .. } => Self::Convergence(e.to_string()),
            other => Self::Usage(other.into()),
        }
    }
}

/// Artifacts of one command, not yet written.
#[derive(Debug, Clone)]
pub struct Report {
    pub files: Vec<(String, Vec<u8>)>,
    /// Command-specific scalars recorded in the manifest.
    pub results: Value,
    /// Set when too many trials failed to converge; artifacts are still
    /// written.
    pub convergence_failure: Option<String>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    timestamp: String,
    config: std::collections::BTreeMap<String, String>,
    outputs: Vec<String>,
    results: &'a Value,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Fraction of non-converged trials above which a run fails with exit 3.
pub const MAX_NONCONVERGED_FRACTION: f64 = 0.1;

/// Execute `command` and write its artifacts plus `manifest.json` to `out`.
pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, Failure> {
    cfg.validate().map_err(Failure::Usage)?;
    let report = execute(command, cfg)?;
    let timestamp = time::OffsetDateTime::now_utc()
        .format(&time::format_description::well_known::Rfc3339)
        .map_err(|e| Failure::Usage(e.into()))?;
    let manifest = Manifest {
        command: command.name(),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.system.seed,
        timestamp,
        config: cfg.resolved(),
        outputs: report.files.iter().map(|(n, _)| n.clone()).collect(),
        results: &report.results,
    };
    let mut files = report.files.clone();
    files.push((
        MANIFEST_FILE.to_string(),
        to_json_bytes(&manifest).map_err(Failure::Usage)?,
    ));
    let paths = write_all(out, &files).map_err(Failure::Usage)?;
    match report.convergence_failure {
        Some(msg) => Err(Failure::Convergence(msg)),
        None => Ok(paths),
    }
}

/// Build a command's artifacts without touching the filesystem.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Report, Failure> {
    cfg.validate().map_err(Failure::Usage)?;
    match command {
        Command::Predict => predict(cfg),
        Command::Simulate => simulate(cfg),
        Command::CompareReceivers { overlay } => compare_receivers(cfg, overlay),
        Command::TrainingSweep => training_sweep(cfg),
        Command::Constrained => constrained(cfg),
    }
}

fn csv(table: &Table) -> Result<Vec<u8>, Failure> {
    table.to_bytes().map_err(Failure::Usage)
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>, Failure> {
    to_json_bytes(v).map_err(Failure::Usage)
}

fn convergence_check(trials: usize, converged: usize) -> Option<String> {
    let failed = trials - converged;
    (failed as f64 > MAX_NONCONVERGED_FRACTION * trials as f64)
        .then(|| format!("{failed} of {trials} trials did not converge"))
}

fn predict(cfg: &RunConfig) -> Result<Report, Failure> {
    let sys = &cfg.system;
    let target = solve_target_sinr(sys.packet_len)?;
    let pred = lsa::predict_profiles(sys, target, cfg.receiver, cfg.quantile_mode)?;
    let mut t = Table::new(&["k", "quantile_gain", "power", "utility", "receiver", "feasible"]);
    for (i, ((g, p), u)) in pred.gains.iter().zip(&pred.powers).zip(&pred.utilities).enumerate() {
        t.push(vec![
            (i + 1).to_string(),
            fmt_f64(*g),
            fmt_f64(*p),
            fmt_f64(*u),
            cfg.receiver.to_string(),
            pred.feasible.to_string(),
        ]);
    }
    Ok(Report {
        files: vec![("profiles.csv".into(), csv(&t)?)],
        results: json!({
            "target_sinr": target,
            "beta_d": pred.beta_d,
            "received_power": pred.received_power,
            "mean_power": pred.mean_power(),
            "mean_utility": pred.mean_utility(),
        }),
        convergence_failure: None,
    })
}

fn check_load(sys: &SystemConfig, kind: ReceiverKind, target: f64) -> Result<(), Failure> {
    let bound = lsa::feasibility_bound(kind, target, sys.paths);
    let load = sys.load();
    if load >= bound {
        return Err(cdma_lsa::Error::Infeasible {
            receiver: kind,
            load,
            bound,
        }
        .into());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    users: usize,
    trials: usize,
    converged_trials: usize,
    convergence_rate: f64,
    receiver: String,
    power_rule: String,
    target_sinr: f64,
    mean_power: f64,
    mean_power_std_error: f64,
    mean_utility: f64,
    mean_utility_std_error: f64,
    mean_sinr: f64,
    capped_fraction: f64,
    mean_iterations: f64,
}

fn simulate(cfg: &RunConfig) -> Result<Report, Failure> {
    let sys = &cfg.system;
    let target = solve_target_sinr(sys.packet_len)?;
    check_load(sys, cfg.receiver, target)?;
    let outcomes = montecarlo::run_trials(
        sys,
        cfg.trials,
        cfg.receiver,
        cfg.power_rule,
        &EquilibriumOptions::default(),
    )?;
    let mut t = Table::new(&["trial", "k", "gain", "power", "sinr", "utility", "capped"]);
    for o in &outcomes {
        for k in 0..o.gains.len() {
            t.push(vec![
                o.trial_index.to_string(),
                (k + 1).to_string(),
                fmt_f64(o.gains[k]),
                fmt_f64(o.powers[k]),
                fmt_f64(o.sinrs[k]),
                fmt_f64(o.utilities[k]),
                o.capped[k].to_string(),
            ]);
        }
    }
    let ok: Vec<_> = outcomes.iter().filter(|o| o.converged).collect();
    let per_trial = |f: &dyn Fn(&montecarlo::TrialOutcome) -> f64| {
        SampleStats::from_slice(&ok.iter().map(|o| f(o)).collect::<Vec<_>>())
    };
    let power = per_trial(&|o| o.mean_power());
    let utility = per_trial(&|o| o.mean_utility());
    let sinr = per_trial(&|o| o.sinrs.iter().sum::<f64>() / o.sinrs.len() as f64);
    let capped = per_trial(&|o| o.capped_count() as f64 / o.capped.len() as f64);
    let iters = per_trial(&|o| o.iterations as f64);
    let summary = SimulationSummary {
        users: sys.users,
        trials: cfg.trials,
        converged_trials: ok.len(),
        convergence_rate: ok.len() as f64 / cfg.trials as f64,
        receiver: cfg.receiver.to_string(),
        power_rule: cfg.power_rule.to_string(),
        target_sinr: target,
        mean_power: power.mean,
        mean_power_std_error: power.std_error,
        mean_utility: utility.mean,
        mean_utility_std_error: utility.std_error,
        mean_sinr: sinr.mean,
        capped_fraction: capped.mean,
        mean_iterations: iters.mean,
    };
    Ok(Report {
        files: vec![
            ("equilibrium.csv".into(), csv(&t)?),
            ("summary.json".into(), json_bytes(&summary)?),
        ],
        results: serde_json::to_value(&summary).map_err(|e| Failure::Usage(e.into()))?,
        convergence_failure: convergence_check(cfg.trials, ok.len()),
    })
}

/// Default user grid: every K up to one past the MMSE feasibility limit.
fn default_receiver_grid(sys: &SystemConfig, target: f64) -> Vec<usize> {
    let bound = lsa::feasibility_bound(ReceiverKind::Mmse, target, sys.paths);
    let top = (bound * sys.processing_gain as f64).floor() as usize + 1;
    (1..=top).collect()
}

fn compare_receivers(cfg: &RunConfig, overlay: bool) -> Result<Report, Failure> {
    let sys = &cfg.system;
    let target = solve_target_sinr(sys.packet_len)?;
    let grid = cfg
        .k_grid
        .clone()
        .unwrap_or_else(|| default_receiver_grid(sys, target));
    let mut t = Table::new(&["K", "receiver", "mean_power", "mean_utility", "feasible"]);
    let mut thresholds = serde_json::Map::new();
    for kind in ReceiverKind::ALL {
        let mut last_feasible = None;
        for &k in &grid {
            let c = SystemConfig { users: k, ..sys.clone() };
            let (p, u, ok) = match lsa::predict_profiles(&c, target, kind, cfg.quantile_mode) {
                Ok(pred) => (pred.mean_power(), pred.mean_utility(), true),
                Err(cdma_lsa::Error::Infeasible { .. }) => (f64::NAN, f64::NAN, false),
                Err(e) => return Err(e.into()),
            };
            if ok {
                last_feasible = Some(k);
            }
            t.push(vec![k.to_string(), kind.to_string(), fmt_f64(p), fmt_f64(u), ok.to_string()]);
        }
        let bound = lsa::feasibility_bound(kind, target, sys.paths);
        thresholds.insert(
            kind.to_string(),
            json!({
                "load_bound": bound,
                "floor_n_bound": (sys.processing_gain as f64 * bound).floor(),
                "max_feasible_k": last_feasible,
            }),
        );
    }
    let mut files = vec![("receivers.csv".into(), csv(&t)?)];
    let mut convergence_failure = None;
    if overlay {
        let mut s = Table::new(&[
            "K",
            "receiver",
            "power_rule",
            "feasible",
            "sim_mean_power",
            "sim_mean_utility",
            "utility_std_error",
            "confidence_halfwidth",
            "relative_gap",
            "converged_trials",
            "trials",
        ]);
        let (mut total, mut converged) = (0, 0);
        for kind in ReceiverKind::ALL {
            let points =
                montecarlo::run_comparison_sweep(sys, &grid, kind, cfg.trials, cfg.power_rule)?;
            for p in points {
                if p.feasible {
                    total += p.trials;
                    converged += p.converged_trials;
                }
                s.push(vec![
                    p.users.to_string(),
                    kind.to_string(),
                    p.power_rule.to_string(),
                    p.feasible.to_string(),
                    fmt_f64(p.sim_mean_power),
                    fmt_f64(p.sim_mean_utility),
                    fmt_f64(p.utility_std_error),
                    fmt_f64(p.confidence_halfwidth),
                    fmt_f64(p.relative_gap),
                    p.converged_trials.to_string(),
                    p.trials.to_string(),
                ]);
            }
        }
        files.push(("receivers_sim.csv".into(), csv(&s)?));
        convergence_failure = convergence_check(total, converged);
    }
    Ok(Report {
        files,
        results: json!({ "target_sinr": target, "thresholds": thresholds }),
        convergence_failure,
    })
}

pub const DEFAULT_TRAINING_GRID: [usize; 3] = [16, 32, 64];

fn training_sweep(cfg: &RunConfig) -> Result<Report, Failure> {
    let sys = &cfg.system;
    let target = solve_target_sinr(sys.packet_len)?;
    let grid = cfg
        .k_grid
        .clone()
        .unwrap_or_else(|| DEFAULT_TRAINING_GRID.to_vec());
    let mut t = Table::new(&["K", "N_T", "xi_sq", "beta_d_star", "mean_utility", "is_argmax"]);
    let mut per_k = Vec::new();
    for &k in &grid {
        let c = SystemConfig { users: k, ..sys.clone() };
        let power = match cfg.training_power {
            Some(p) => p,
            None => lsa::equal_received_power(
                c.load(),
                target,
                c.noise_psd_half,
                ReceiverKind::Mmse,
                c.paths,
            )?,
        };
        let sweep = lsa::training_sweep(&c, target, power, cfg.quantile_mode)?;
        for (i, p) in sweep.points.iter().enumerate() {
            t.push(vec![
                k.to_string(),
                p.training_len.to_string(),
                fmt_f64(p.xi_sq),
                fmt_f64(p.beta_d_star),
                fmt_f64(p.mean_utility),
                (sweep.argmax == Some(i)).to_string(),
            ]);
        }
        per_k.push(json!({
            "K": k,
            "power": power,
            "best_training_len": sweep.best_training_len(),
            "best_mean_utility": sweep.argmax.map(|i| sweep.points[i].mean_utility),
        }));
    }
    Ok(Report {
        files: vec![("training.csv".into(), csv(&t)?)],
        results: json!({ "target_sinr": target, "sweeps": per_k }),
        convergence_failure: None,
    })
}

fn constrained(cfg: &RunConfig) -> Result<Report, Failure> {
    let sys = &cfg.system;
    let target = solve_target_sinr(sys.packet_len)?;
    check_load(sys, ReceiverKind::Mmse, target)?;
    let mode = if sys.p_max.is_finite() {
        ProfileMode::Constrained {
            recount: cfg.recount,
        }
    } else {
        ProfileMode::Unconstrained
    };
    let pc = montecarlo::profile_comparison(sys, cfg.trials, mode, cfg.quantile_mode)?;
    let pred = &pc.predicted;
    let mut t = Table::new(&[
        "k",
        "quantile_gain",
        "lsa_power",
        "lsa_sinr",
        "lsa_utility",
        "sim_gain",
        "sim_power",
        "sim_sinr",
        "sim_utility",
        "sim_capped_fraction",
    ]);
    for i in 0..sys.users {
        t.push(vec![
            (i + 1).to_string(),
            fmt_f64(pred.gains[i]),
            fmt_f64(pred.powers[i]),
            fmt_f64(pred.sinrs[i]),
            fmt_f64(pred.utilities[i]),
            fmt_f64(pc.sim_gains[i]),
            fmt_f64(pc.sim_powers[i]),
            fmt_f64(pc.sim_sinrs[i]),
            fmt_f64(pc.sim_utilities[i]),
            fmt_f64(pc.sim_capped_fraction[i]),
        ]);
    }
    if !pc.relative_gap.is_finite() {
        return Err(Failure::Usage(anyhow!("relative gap is not finite")));
    }
    Ok(Report {
        files: vec![("constrained.csv".into(), csv(&t)?)],
        results: json!({
            "target_sinr": target,
            "p_max": sys.p_max,
            "u1": pc.u1,
            "u2": pc.u2,
            "predicted_capped": pc.predicted_capped,
            "sim_mean_capped": pc.mean_capped(),
            "relative_gap": pc.relative_gap,
            "power_rank_correlation": pc.power_rank_correlation,
            "utility_rank_correlation": pc.utility_rank_correlation,
            "trials": pc.trials,
            "converged_trials": pc.converged_trials,
        }),
        convergence_failure: convergence_check(pc.trials, pc.converged_trials),
    })
}
