//! Seeded scenario generation, parallel trials of the finite-system game,
//! and comparison of the simulated statistics with the large-system
//! predictions.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{run_equilibrium_with, solve_target_sinr, EquilibriumOptions, UtilityModel};
use crate::lsa::{self, ConstrainedPrediction, LsaPrediction, QuantileMode};
use crate::model::{generate_code, MultipathChannel, Scenario, SystemConfig};
use crate::receivers::{LinkEvaluator, ReceiverKind};

/// Per-trial seed derived from the base seed (splitmix64 finalizer).
pub fn trial_seed(seed: u64, trial_index: u64) -> u64 {
    let mut z = seed ^ trial_index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic random scenario keyed on `(config.seed, trial_index)`.
///
/// Path delays after the first are distinct, drawn uniformly from
/// `1..=max_delay` and sorted; each user's first-path offset is uniform over
/// `0..=max_offset`.
pub fn generate_scenario(config: &SystemConfig, trial_index: u64) -> Result<Scenario> {
    config.validate()?;
    let seed = trial_seed(config.seed, trial_index);
    let n = config.processing_gain;
    let cap = config.delay_cap();
    let offset_cap = config.offset_cap();
    let codes = (0..config.users as u64)
        .map(|h| generate_code(seed, h, n))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let mut channels = Vec::with_capacity(config.users);
    let mut offsets = Vec::with_capacity(config.users);
    for _ in 0..config.users {
        let gains = config.fading.sample_gains(&mut rng, config.paths);
        let mut delays: Vec<usize> = std::iter::once(0)
            .chain(sample(&mut rng, cap, config.paths - 1).into_iter().map(|d| d + 1))
            .collect();
        delays.sort_unstable();
        channels.push(MultipathChannel::new(gains, delays, n)?);
        offsets.push(rng.random_range(0..=offset_cap));
    }
    Scenario::new(config.clone(), channels, codes, offsets, trial_index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerRule {
    /// Best-response iteration of the finite-system game.
    GameIteration,
    /// Decentralized large-system power from each user's own composite gain,
    /// evaluated with the finite-system receiver.
    LsaClosedForm,
}

impl std::str::FromStr for PowerRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "game" | "gameiteration" | "game_iteration" => Ok(Self::GameIteration),
            "lsa" | "lsaclosedform" | "lsa_closed_form" => Ok(Self::LsaClosedForm),
            other => Err(Error::InvalidConfig(format!("unknown power rule `{other}`"))),
        }
    }
}

impl std::fmt::Display for PowerRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::GameIteration => "game",
            Self::LsaClosedForm => "lsa",
        })
    }
}

/// Per-user outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial_index: u64,
    pub gains: Vec<f64>,
    pub powers: Vec<f64>,
    pub sinrs: Vec<f64>,
    pub utilities: Vec<f64>,
    pub capped: Vec<bool>,
    pub converged: bool,
    pub iterations: usize,
}

impl TrialOutcome {
    pub fn mean_power(&self) -> f64 {
        mean(&self.powers)
    }

    pub fn mean_utility(&self) -> f64 {
        mean(&self.utilities)
    }

    pub fn capped_count(&self) -> usize {
        self.capped.iter().filter(|&&c| c).count()
    }

    /// Per-user values reordered by decreasing composite gain.
    pub fn sorted_by_gain(&self) -> TrialOutcome {
        let mut idx: Vec<usize> = (0..self.gains.len()).collect();
        idx.sort_by(|&a, &b| self.gains[b].total_cmp(&self.gains[a]).then(a.cmp(&b)));
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        TrialOutcome {
            trial_index: self.trial_index,
            gains: pick(&self.gains),
            powers: pick(&self.powers),
            sinrs: pick(&self.sinrs),
            utilities: pick(&self.utilities),
            capped: idx.iter().map(|&i| self.capped[i]).collect(),
            converged: self.converged,
            iterations: self.iterations,
        }
    }
}

/// Run one seeded trial under `rule`.
pub fn run_trial(
    config: &SystemConfig,
    trial_index: u64,
    receiver: ReceiverKind,
    rule: PowerRule,
    options: &EquilibriumOptions,
) -> Result<TrialOutcome> {
    let scenario = generate_scenario(config, trial_index)?;
    let evaluator = LinkEvaluator::new(&scenario);
    let gains = scenario.composite_gains();
    match rule {
        PowerRule::GameIteration => {
            let eq = run_equilibrium_with(&scenario, &evaluator, receiver, options)?;
            let mut capped = vec![false; gains.len()];
            for &i in &eq.capped_users {
                capped[i] = true;
            }
            Ok(TrialOutcome {
                trial_index,
                gains,
                powers: eq.powers,
                sinrs: eq.sinrs,
                utilities: eq.utilities,
                capped,
                converged: eq.converged,
                iterations: eq.iterations,
            })
        }
        PowerRule::LsaClosedForm => {
            let target = solve_target_sinr(config.packet_len)?;
            let util = UtilityModel::from_config(config)?;
            let powers = gains
                .iter()
                .map(|&g| {
                    lsa::decentralized_power(
                        g,
                        config.load(),
                        target,
                        config.noise_psd_half,
                        receiver,
                        config.paths,
                    )
                    .map(|p| p.min(config.p_max))
                })
                .collect::<Result<Vec<_>>>()?;
            let sinrs = evaluator.sinrs(receiver, &powers)?;
            let utilities = powers
                .iter()
                .zip(&sinrs)
                .map(|(&p, &s)| util.eval(p, s))
                .collect::<Result<Vec<_>>>()?;
            let capped = powers.iter().map(|&p| p >= config.p_max).collect();
            Ok(TrialOutcome {
                trial_index,
                gains,
                powers,
                sinrs,
                utilities,
                capped,
                converged: true,
                iterations: 0,
            })
        }
    }
}

/// Run `trials` trials concurrently; results come back in trial order.
pub fn run_trials(
    config: &SystemConfig,
    trials: usize,
    receiver: ReceiverKind,
    rule: PowerRule,
    options: &EquilibriumOptions,
) -> Result<Vec<TrialOutcome>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|t| run_trial(config, t, receiver, rule, options))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Mean and standard error of a sample, reduced in slice order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

impl SampleStats {
    pub fn from_slice(xs: &[f64]) -> Self {
        let count = xs.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
                count,
            };
        }
        let m = mean(xs);
        let std_error = if count > 1 {
            let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean: m,
            std_error,
            count,
        }
    }

    /// 95% normal-approximation half-width.
    pub fn halfwidth(&self) -> f64 {
        1.96 * self.std_error
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn rank_correlation(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = 0.5 * (i + j) as f64 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, mb) = (mean(&ra), mean(&rb));
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPoint {
    pub users: usize,
    pub load: f64,
    pub receiver: ReceiverKind,
    pub power_rule: PowerRule,
    pub feasible: bool,
    pub lsa_mean_utility: f64,
    pub sim_mean_utility: f64,
    pub lsa_mean_power: f64,
    pub sim_mean_power: f64,
    /// `|lsa - sim| / sim` on mean utility.
    pub relative_gap: f64,
    pub trials: usize,
    pub converged_trials: usize,
    pub utility_std_error: f64,
    pub power_std_error: f64,
    /// 95% half-width of the simulated mean utility.
    pub confidence_halfwidth: f64,
}

impl ComparisonPoint {
    fn infeasible(users: usize, load: f64, receiver: ReceiverKind, rule: PowerRule, trials: usize) -> Self {
        Self {
            users,
            load,
            receiver,
            power_rule: rule,
            feasible: false,
            lsa_mean_utility: f64::NAN,
            sim_mean_utility: f64::NAN,
            lsa_mean_power: f64::NAN,
            sim_mean_power: f64::NAN,
            relative_gap: f64::NAN,
            trials,
            converged_trials: 0,
            utility_std_error: f64::NAN,
            power_std_error: f64::NAN,
            confidence_halfwidth: f64::NAN,
        }
    }
}

/// Compare simulated and predicted averages over a grid of user counts.
///
/// Loads beyond the receiver's large-system feasibility bound, and loads at
/// which the finite-system zero-forcer runs out of dimensions, are reported
/// as infeasible points.
pub fn run_comparison_sweep(
    template: &SystemConfig,
    users: &[usize],
    receiver: ReceiverKind,
    trials: usize,
    rule: PowerRule,
) -> Result<Vec<ComparisonPoint>> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let target = solve_target_sinr(template.packet_len)?;
    let options = EquilibriumOptions::default();
    let mut out = Vec::with_capacity(users.len());
    for &k in users {
        let config = SystemConfig {
            users: k,
            ..template.clone()
        };
        config.validate()?;
        let load = config.load();
        let prediction = match lsa::predict_profiles(&config, target, receiver, QuantileMode::Midpoint) {
            Ok(p) => p,
            Err(Error::Infeasible { .. }) => {
                out.push(ComparisonPoint::infeasible(k, load, receiver, rule, trials));
                continue;
            }
            Err(e) => return Err(e),
        };
        let outcomes = match run_trials(&config, trials, receiver, rule, &options) {
            Ok(o) => o,
            Err(Error::ZeroForcingInfeasible { .. }) => {
                out.push(ComparisonPoint::infeasible(k, load, receiver, rule, trials));
                continue;
            }
            Err(e) => return Err(e),
        };
        let ok: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.converged).collect();
        if ok.is_empty() {
            out.push(ComparisonPoint::infeasible(k, load, receiver, rule, trials));
            continue;
        }
        let u = SampleStats::from_slice(&ok.iter().map(|o| o.mean_utility()).collect::<Vec<_>>());
        let p = SampleStats::from_slice(&ok.iter().map(|o| o.mean_power()).collect::<Vec<_>>());
        let lsa_u = prediction.mean_utility();
        out.push(ComparisonPoint {
            users: k,
            load,
            receiver,
            power_rule: rule,
            feasible: true,
            lsa_mean_utility: lsa_u,
            sim_mean_utility: u.mean,
            lsa_mean_power: prediction.mean_power(),
            sim_mean_power: p.mean,
            relative_gap: (lsa_u - u.mean).abs() / u.mean,
            trials,
            converged_trials: ok.len(),
            utility_std_error: u.std_error,
            power_std_error: p.std_error,
            confidence_halfwidth: u.halfwidth(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileMode {
    /// Ignore `P_max`: unconstrained game vs the unconstrained prediction.
    Unconstrained,
    /// Cap powers at the config's `P_max` in both simulation and prediction.
    Constrained { recount: bool },
}

/// Predicted profiles paired with gain-sorted, index-averaged simulated ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileComparison {
    pub predicted: LsaPrediction,
    pub u1: usize,
    pub u2: usize,
    /// Predicted users at `P_max` after the min rule.
    pub predicted_capped: usize,
    pub sim_gains: Vec<f64>,
    pub sim_powers: Vec<f64>,
    pub sim_sinrs: Vec<f64>,
    pub sim_utilities: Vec<f64>,
    /// Fraction of trials in which the user at each sorted position capped.
    pub sim_capped_fraction: Vec<f64>,
    pub capped_per_trial: Vec<usize>,
    pub trials: usize,
    pub converged_trials: usize,
    pub power_rank_correlation: f64,
    pub utility_rank_correlation: f64,
    /// `|lsa - sim| / sim` on the mean utility across users.
    pub relative_gap: f64,
}

impl ProfileComparison {
    pub fn mean_capped(&self) -> f64 {
        mean(&self.capped_per_trial.iter().map(|&c| c as f64).collect::<Vec<_>>())
    }
}

pub fn profile_comparison(
    config: &SystemConfig,
    trials: usize,
    mode: ProfileMode,
    quantiles: QuantileMode,
) -> Result<ProfileComparison> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let target = solve_target_sinr(config.packet_len)?;
    let (sim_config, constrained): (SystemConfig, ConstrainedPrediction) = match mode {
        ProfileMode::Unconstrained => {
            let cfg = SystemConfig {
                p_max: f64::INFINITY,
                ..config.clone()
            };
            let c = lsa::constrained_profile(&cfg, target, f64::INFINITY, quantiles, false)?;
            (cfg, c)
        }
        ProfileMode::Constrained { recount } => {
            let c = lsa::constrained_profile(config, target, config.p_max, quantiles, recount)?;
            (config.clone(), c)
        }
    };
    let outcomes = run_trials(
        &sim_config,
        trials,
        ReceiverKind::Mmse,
        PowerRule::GameIteration,
        &EquilibriumOptions::default(),
    )?;
    let sorted: Vec<TrialOutcome> = outcomes
        .iter()
        .filter(|o| o.converged)
        .map(|o| o.sorted_by_gain())
        .collect();
    let converged_trials = sorted.len();
    if converged_trials == 0 {
        return Err(Error::NotConverged { trials });
    }
    let k = config.users;
    let column = |f: &dyn Fn(&TrialOutcome, usize) -> f64| -> Vec<f64> {
        (0..k)
            .map(|i| sorted.iter().map(|o| f(o, i)).sum::<f64>() / converged_trials as f64)
            .collect()
    };
    let sim_gains = column(&|o, i| o.gains[i]);
    let sim_powers = column(&|o, i| o.powers[i]);
    let sim_sinrs = column(&|o, i| o.sinrs[i]);
    let sim_utilities = column(&|o, i| o.utilities[i]);
    let sim_capped_fraction = column(&|o, i| if o.capped[i] { 1.0 } else { 0.0 });
    let capped_per_trial = sorted.iter().map(|o| o.capped_count()).collect();

    let predicted = constrained.prediction.clone();
    let predicted_capped = constrained.capped_count(sim_config.p_max);
    let power_rank_correlation = rank_correlation(&predicted.powers, &sim_powers);
    let utility_rank_correlation = rank_correlation(&predicted.utilities, &sim_utilities);
    let sim_u = mean(&sim_utilities);
    Ok(ProfileComparison {
        relative_gap: (predicted.mean_utility() - sim_u).abs() / sim_u,
        predicted,
        u1: constrained.u1,
        u2: constrained.u2,
        predicted_capped,
        sim_gains,
        sim_powers,
        sim_sinrs,
        sim_utilities,
        sim_capped_fraction,
        capped_per_trial,
        trials,
        converged_trials,
        power_rank_correlation,
        utility_rank_correlation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_is_reproducible() {
        let cfg = SystemConfig::default();
        let a = generate_scenario(&cfg, 3).unwrap();
        let b = generate_scenario(&cfg, 3).unwrap();
        assert_eq!(a.channels, b.channels);
        assert_eq!(a.codes, b.codes);
        assert_eq!(a.offsets, b.offsets);
        let c = generate_scenario(&cfg, 4).unwrap();
        assert_ne!(a.composite_gains(), c.composite_gains());
    }

    #[test]
    fn scenario_delays_are_valid() {
        let cfg = SystemConfig::default();
        for t in 0..20 {
            let sc = generate_scenario(&cfg, t).unwrap();
            for ch in &sc.channels {
                assert_eq!(ch.delays()[0], 0);
                assert!(ch.delays().windows(2).all(|w| w[0] < w[1]));
                assert!(ch.delays().iter().all(|&d| d < cfg.processing_gain));
            }
        }
    }

    #[test]
    fn rank_correlation_basics() {
        assert!((rank_correlation(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-15);
        assert!((rank_correlation(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        let r = rank_correlation(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]);
        assert!(r > 0.9 && r < 1.0);
    }

    #[test]
    fn sample_stats() {
        let s = SampleStats::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sort_by_gain_keeps_rows_together() {
        let o = TrialOutcome {
            trial_index: 0,
            gains: vec![0.5, 2.0, 1.0],
            powers: vec![5.0, 20.0, 10.0],
            sinrs: vec![1.0, 2.0, 3.0],
            utilities: vec![0.1, 0.2, 0.3],
            capped: vec![true, false, false],
            converged: true,
            iterations: 1,
        };
        let s = o.sorted_by_gain();
        assert_eq!(s.gains, vec![2.0, 1.0, 0.5]);
        assert_eq!(s.powers, vec![20.0, 10.0, 5.0]);
        assert_eq!(s.capped, vec![false, false, true]);
    }
}
