//! Large-system formulas: the `beta` fixed points, decentralized power rules
//! for each receiver, order-statistics profile prediction, training-length
//! optimization and the power-capped profile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::UtilityModel;
use crate::model::{FadingModel, SystemConfig};
use crate::receivers::ReceiverKind;
use crate::roots;

/// Effective interference `I(a, b) = a / (1 + a b)`.
pub fn effective_interference(a: f64, b: f64) -> f64 {
    a / (1.0 + a * b)
}

/// One interfering user as seen by the large-system MMSE receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfererLoad {
    /// Received power `p_h sum_l |a_{h,l}|^2`.
    pub received_power: f64,
    /// Channel estimation error variance.
    pub xi_sq: f64,
}

fn mmse_denominator(noise: f64, n: usize, interferers: &[InterfererLoad], paths: usize, beta: f64) -> f64 {
    let l1 = paths.saturating_sub(1) as f64;
    let sum: f64 = interferers
        .iter()
        .map(|h| {
            l1 * effective_interference(h.xi_sq, beta)
                + effective_interference(h.received_power + h.xi_sq, beta)
        })
        .sum();
    noise + sum / n as f64
}

/// Right-hand side of the MMSE `beta_d` fixed point, general per-user form.
pub fn beta_d_mmse_rhs(
    noise: f64,
    n: usize,
    interferers: &[InterfererLoad],
    paths: usize,
    beta: f64,
) -> f64 {
    1.0 / mmse_denominator(noise, n, interferers, paths, beta)
}

/// Solve `beta = [N0/2 + (1/N) sum_h ((L-1) I(xi_h^2, beta) + I(P_h + xi_h^2, beta))]^{-1}`.
///
/// The right-hand side increases in `beta`, but `beta * (N0/2 + ...)` is
/// strictly increasing from 0, so the root is unique and lies in
/// `[RHS(0), 2/N0]`.
pub fn solve_beta_d_mmse(
    noise: f64,
    n: usize,
    interferers: &[InterfererLoad],
    paths: usize,
) -> Result<f64> {
    if !(noise > 0.0) || n == 0 {
        return Err(Error::InvalidConfig("noise must be positive and N >= 1".into()));
    }
    let hi = 1.0 / noise;
    if interferers.is_empty() {
        return Ok(hi);
    }
    let lo = beta_d_mmse_rhs(noise, n, interferers, paths, 0.0);
    roots::bisect(
        |b| b * mmse_denominator(noise, n, interferers, paths, b) - 1.0,
        lo,
        hi,
        roots::REL_TOL,
    )
}

/// Equal-received-power form: every interferer at `received_power` with
/// error `xi_sq`, the `(1/N) sum_h` replaced by `load`.
pub fn beta_d_equal_power_rhs(
    load: f64,
    noise: f64,
    received_power: f64,
    xi_sq: f64,
    paths: usize,
    beta: f64,
) -> f64 {
    let l1 = paths.saturating_sub(1) as f64;
    1.0 / (noise
        + load
            * (l1 * effective_interference(xi_sq, beta)
                + effective_interference(received_power + xi_sq, beta)))
}

pub fn solve_beta_d_equal_power(
    load: f64,
    noise: f64,
    received_power: f64,
    xi_sq: f64,
    paths: usize,
) -> Result<f64> {
    let rhs = |b: f64| beta_d_equal_power_rhs(load, noise, received_power, xi_sq, paths, b);
    let hi = 1.0 / noise;
    let lo = rhs(0.0);
    if lo >= hi {
        return Ok(hi);
    }
    roots::bisect(|b| b / rhs(b) - 1.0, lo, hi, roots::REL_TOL)
}

/// Asymptotic SINR `p sum_l |a_l|^2 beta / (1 + xi^2 beta)` for the given
/// (estimated) path gains.
pub fn asymptotic_sinr(power: f64, gains_estimate: &[f64], xi_sq: f64, beta_d: f64) -> f64 {
    let g: f64 = gains_estimate.iter().map(|a| a * a).sum();
    power * g * beta_d / (1.0 + xi_sq * beta_d)
}

/// Upper bound on the load below which `kind` reaches the target with finite
/// power.
pub fn feasibility_bound(kind: ReceiverKind, target: f64, paths: usize) -> f64 {
    match kind {
        ReceiverKind::Mmse => (1.0 + target) / target,
        ReceiverKind::MatchedFilter => 1.0 / target,
        ReceiverKind::Decorrelator => 1.0 / paths as f64,
    }
}

/// Power-reduction factor of `kind` at `load`: `1 - load*target/(1+target)`,
/// `1 - load*target` or `1 - load*L`.
pub fn load_factor(kind: ReceiverKind, load: f64, target: f64, paths: usize) -> f64 {
    match kind {
        ReceiverKind::Mmse => 1.0 - load * target / (1.0 + target),
        ReceiverKind::MatchedFilter => 1.0 - load * target,
        ReceiverKind::Decorrelator => 1.0 - load * paths as f64,
    }
}

fn check_feasible(kind: ReceiverKind, load: f64, target: f64, paths: usize) -> Result<()> {
    let bound = feasibility_bound(kind, target, paths);
    if load < bound {
        Ok(())
    } else {
        Err(Error::Infeasible {
            receiver: kind,
            load,
            bound,
        })
    }
}

/// Common received power `P_R` every user needs under `kind`.
pub fn equal_received_power(
    load: f64,
    target: f64,
    noise: f64,
    kind: ReceiverKind,
    paths: usize,
) -> Result<f64> {
    check_feasible(kind, load, target, paths)?;
    Ok(target * noise / load_factor(kind, load, target, paths))
}

/// Closed-form `beta_d` at the equal-power operating point of `kind`.
pub fn beta_d_closed_form(
    load: f64,
    target: f64,
    noise: f64,
    kind: ReceiverKind,
    paths: usize,
) -> Result<f64> {
    check_feasible(kind, load, target, paths)?;
    Ok(load_factor(kind, load, target, paths) / noise)
}

/// Decentralized transmit power from the user's own composite gain only.
pub fn decentralized_power(
    composite_gain: f64,
    load: f64,
    target: f64,
    noise: f64,
    kind: ReceiverKind,
    paths: usize,
) -> Result<f64> {
    if !(composite_gain > 0.0) {
        return Err(Error::ZeroSignature);
    }
    Ok(equal_received_power(load, target, noise, kind, paths)? / composite_gain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum QuantileMode {
    /// `F^{-1}((K-k)/K)`; the weakest user maps to `F^{-1}(0) = 0`.
    PaperExact,
    /// `F^{-1}((K-k+1/2)/K)`.
    #[default]
    Midpoint,
}

impl std::str::FromStr for QuantileMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paperexact" | "paper_exact" | "exact" => Ok(Self::PaperExact),
            "midpoint" | "mid" => Ok(Self::Midpoint),
            other => Err(Error::InvalidConfig(format!("unknown quantile mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for QuantileMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::PaperExact => "PaperExact",
            Self::Midpoint => "Midpoint",
        })
    }
}

/// Predicted sorted composite gains, non-increasing in `k = 1..K`.
pub fn quantile_gains(fading: &FadingModel, paths: usize, users: usize, mode: QuantileMode) -> Vec<f64> {
    let kk = users as f64;
    (1..=users)
        .map(|k| {
            let q = match mode {
                QuantileMode::PaperExact => (kk - k as f64) / kk,
                QuantileMode::Midpoint => (kk - k as f64 + 0.5) / kk,
            };
            fading.inverse_cdf(paths, q)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsaPrediction {
    pub receiver: ReceiverKind,
    pub beta_d: f64,
    /// Received power of the users that reach the target.
    pub received_power: f64,
    pub gains: Vec<f64>,
    /// Transmit powers; a zero quantile gain (PaperExact, last user) maps to
    /// infinite power and zero utility.
    pub powers: Vec<f64>,
    pub sinrs: Vec<f64>,
    pub utilities: Vec<f64>,
    pub feasible: bool,
}

impl LsaPrediction {
    pub fn infeasible(receiver: ReceiverKind) -> Self {
        Self {
            receiver,
            beta_d: f64::NAN,
            received_power: f64::NAN,
            gains: Vec::new(),
            powers: Vec::new(),
            sinrs: Vec::new(),
            utilities: Vec::new(),
            feasible: false,
        }
    }

    pub fn mean_power(&self) -> f64 {
        mean(&self.powers)
    }

    pub fn mean_utility(&self) -> f64 {
        mean(&self.utilities)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn utility_or_zero(util: &UtilityModel, power: f64, gamma: f64) -> Result<f64> {
    if power.is_infinite() {
        Ok(0.0)
    } else {
        util.eval(power, gamma)
    }
}

/// Power and utility profiles across users predicted from the fading law.
pub fn predict_profiles(
    config: &SystemConfig,
    target: f64,
    kind: ReceiverKind,
    mode: QuantileMode,
) -> Result<LsaPrediction> {
    config.validate()?;
    let load = config.load();
    let noise = config.noise_psd_half;
    let beta_d = beta_d_closed_form(load, target, noise, kind, config.paths)?;
    let received_power = equal_received_power(load, target, noise, kind, config.paths)?;
    let util = UtilityModel::from_config(config)?;
    let gains = quantile_gains(&config.fading, config.paths, config.users, mode);
    let powers: Vec<f64> = gains.iter().map(|&g| received_power / g).collect();
    let utilities = powers
        .iter()
        .map(|&p| utility_or_zero(&util, p, target))
        .collect::<Result<Vec<_>>>()?;
    Ok(LsaPrediction {
        receiver: kind,
        beta_d,
        received_power,
        sinrs: vec![target; gains.len()],
        gains,
        powers,
        utilities,
        feasible: true,
    })
}

/// Right-hand side of the training `beta_c` fixed point.
pub fn beta_c_rhs(power: f64, training_len: usize, load: f64, paths: usize, noise: f64, beta: f64) -> f64 {
    let nt = training_len as f64;
    1.0 / (noise / nt + load * paths as f64 / nt * power / (1.0 + power * beta))
}

/// MMSE channel-estimation error `(xi^2, beta_c)` after `training_len`
/// training symbols at average received power `power`.
///
/// `beta_c` is the positive root of
/// `s P b^2 + (s + a L P - N_T P) b - N_T = 0` with `s = N0/2`, `a` the load.
pub fn training_error_variance(
    power: f64,
    training_len: usize,
    load: f64,
    paths: usize,
    noise: f64,
) -> Result<(f64, f64)> {
    if training_len == 0 {
        return Err(Error::NoTraining);
    }
    if !(power > 0.0) {
        return Err(Error::NonPositivePower(power));
    }
    let nt = training_len as f64;
    let a = noise * power;
    let b = noise + load * paths as f64 * power - nt * power;
    let c = -nt;
    let disc = (b * b - 4.0 * a * c).sqrt();
    let beta_c = if b > 0.0 {
        2.0 * nt / (b + disc)
    } else {
        (disc - b) / (2.0 * a)
    };
    let xi_sq = power / (1.0 + power * beta_c);
    Ok((xi_sq, beta_c))
}

/// `beta_d*` of the equal-power MMSE system when every user's channel
/// estimate has error `xi_sq` and `P_R = target (1 + xi^2 beta) / beta`.
pub fn beta_d_with_estimation_error(
    load: f64,
    noise: f64,
    target: f64,
    xi_sq: f64,
    paths: usize,
) -> Result<f64> {
    check_feasible(ReceiverKind::Mmse, load, target, paths)?;
    let phi = |b: f64| {
        let pr = target * (1.0 + xi_sq * b) / b;
        b / beta_d_equal_power_rhs(load, noise, pr, xi_sq, paths, b) - 1.0
    };
    roots::positive_root(phi, 1.0 / noise, roots::REL_TOL)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSweepPoint {
    pub training_len: usize,
    pub xi_sq: f64,
    pub beta_c: f64,
    pub beta_d_star: f64,
    pub mean_utility: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSweep {
    pub points: Vec<TrainingSweepPoint>,
    /// Index into `points` of the utility-maximizing training length (first
    /// maximum); `None` when no point is feasible.
    pub argmax: Option<usize>,
}

impl TrainingSweep {
    pub fn best_training_len(&self) -> Option<usize> {
        self.argmax.map(|i| self.points[i].training_len)
    }
}

/// Power profile for the given estimation error; with `xi_sq = 0` it
/// reduces to the perfect-CSI profile.
pub fn powers_with_estimation_error(
    config: &SystemConfig,
    target: f64,
    xi_sq: f64,
    mode: QuantileMode,
) -> Result<(f64, Vec<f64>)> {
    let beta = beta_d_with_estimation_error(
        config.load(),
        config.noise_psd_half,
        target,
        xi_sq,
        config.paths,
    )?;
    let gains = quantile_gains(&config.fading, config.paths, config.users, mode);
    let pr = target * (1.0 + xi_sq * beta) / beta;
    Ok((beta, gains.iter().map(|g| pr / g).collect()))
}

/// Average predicted utility for every `N_T` in `1..B`, with channel
/// estimation error at average received power `power`.
pub fn training_sweep(
    config: &SystemConfig,
    target: f64,
    power: f64,
    mode: QuantileMode,
) -> Result<TrainingSweep> {
    config.validate()?;
    let load = config.load();
    let mut points = Vec::with_capacity(config.packet_len - 1);
    for nt in 1..config.packet_len {
        let (xi_sq, beta_c) = training_error_variance(power, nt, load, config.paths, config.noise_psd_half)?;
        let util = UtilityModel::new(config.rate, config.packet_len, nt)?;
        let point = match powers_with_estimation_error(config, target, xi_sq, mode) {
            Ok((beta_d_star, powers)) => {
                let us = powers
                    .iter()
                    .map(|&p| utility_or_zero(&util, p, target))
                    .collect::<Result<Vec<_>>>()?;
                TrainingSweepPoint {
                    training_len: nt,
                    xi_sq,
                    beta_c,
                    beta_d_star,
                    mean_utility: mean(&us),
                    feasible: true,
                }
            }
            Err(Error::Infeasible { .. }) => TrainingSweepPoint {
                training_len: nt,
                xi_sq,
                beta_c,
                beta_d_star: f64::NAN,
                mean_utility: 0.0,
                feasible: false,
            },
            Err(e) => return Err(e),
        };
        points.push(point);
    }
    let mut argmax: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        if p.feasible && argmax.is_none_or(|j| p.mean_utility > points[j].mean_utility) {
            argmax = Some(i);
        }
    }
    Ok(TrainingSweep { points, argmax })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedPrediction {
    pub prediction: LsaPrediction,
    /// Users assumed to reach the target.
    pub u1: usize,
    /// Users assumed to transmit at `P_max`.
    pub u2: usize,
    /// Relative residual of the received-power equation at the returned root.
    pub residual: f64,
}

impl ConstrainedPrediction {
    /// Users whose transmit power equals the cap after the min rule.
    pub fn capped_count(&self, p_max: f64) -> usize {
        self.prediction.powers.iter().filter(|&&p| p >= p_max).count()
    }
}

/// Interference seen at received power `p` from the capped users, whose
/// received powers are `capped`, at SINR `gamma`.
fn capped_interference(p: f64, capped: &[f64], gamma: f64, n: f64) -> f64 {
    capped.iter().map(|&c| p * c / (p + c * gamma)).sum::<f64>() / n
}

/// SINR of the uncapped users at common received power `p` with the
/// approximated uncapped-interference term.
pub fn uncapped_sinr_at(
    p: f64,
    u1: usize,
    capped: &[f64],
    target: f64,
    noise: f64,
    n: usize,
) -> f64 {
    let nf = n as f64;
    p / (noise + u1 as f64 / nf * p / (1.0 + target) + capped_interference(p, capped, target, nf))
}

/// Solve for the received power `P` of the uncapped users so that
/// `uncapped_sinr_at(P) = target`.
pub fn solve_uncapped_received_power(
    u1: usize,
    capped: &[f64],
    target: f64,
    noise: f64,
    n: usize,
) -> Result<f64> {
    let nf = n as f64;
    if u1 as f64 / nf >= (1.0 + target) / target {
        return Err(Error::Infeasible {
            receiver: ReceiverKind::Mmse,
            load: u1 as f64 / nf,
            bound: (1.0 + target) / target,
        });
    }
    // p - target * denominator(p) is convex with a single positive root.
    let f = |p: f64| {
        p - target
            * (noise + u1 as f64 / nf * p / (1.0 + target) + capped_interference(p, capped, target, nf))
    };
    roots::positive_root(f, target * noise, roots::REL_TOL)
}

/// SINR of a capped user received at `own` when the uncapped users sit at
/// `uncapped_power` and the capped ones at `capped`.
pub fn capped_sinr(
    own: f64,
    u1: usize,
    uncapped_power: f64,
    capped: &[f64],
    noise: f64,
    n: usize,
) -> Result<f64> {
    let nf = n as f64;
    let denom = |g: f64| {
        noise
            + u1 as f64 / nf * own * uncapped_power / (own + uncapped_power * g)
            + capped.iter().map(|&c| own * c / (own + c * g)).sum::<f64>() / nf
    };
    // gamma * denom(gamma) increases in gamma
    roots::positive_root(|g| g * denom(g) - own, own / noise, roots::REL_TOL)
}

/// Power-capped MMSE profile from the single-pass procedure: count the users
/// whose unconstrained power exceeds `p_max`, solve for the common received
/// power of the rest, then apply `min{P / g_k, P_max}`. With `recount`, the
/// capped set is re-derived from the solved power until it stops changing.
pub fn constrained_profile(
    config: &SystemConfig,
    target: f64,
    p_max: f64,
    mode: QuantileMode,
    recount: bool,
) -> Result<ConstrainedPrediction> {
    if !(p_max > 0.0) {
        return Err(Error::NonPositivePower(p_max));
    }
    let unconstrained = predict_profiles(config, target, ReceiverKind::Mmse, mode)?;
    let k = config.users;
    let n = config.processing_gain;
    let noise = config.noise_psd_half;
    let gains = unconstrained.gains.clone();

    let count_capped = |pr: f64| gains.iter().filter(|&&g| pr / g > p_max).count();
    let mut u2 = count_capped(unconstrained.received_power);
    if u2 == 0 {
        return Ok(ConstrainedPrediction {
            prediction: unconstrained,
            u1: k,
            u2: 0,
            residual: 0.0,
        });
    }

    let util = UtilityModel::from_config(config)?;
    let mut pr;
    let mut rounds = 0;
    loop {
        let u1 = k - u2;
        let capped: Vec<f64> = gains[u1..].iter().map(|&g| p_max * g).collect();
        pr = solve_uncapped_received_power(u1, &capped, target, noise, n)?;
        rounds += 1;
        if !recount || rounds >= roots::MAX_ITER {
            break;
        }
        let next = count_capped(pr).max(1);
        if next == u2 {
            break;
        }
        u2 = next;
    }
    let u1 = k - u2;
    let capped: Vec<f64> = gains[u1..].iter().map(|&g| p_max * g).collect();
    let residual = (uncapped_sinr_at(pr, u1, &capped, target, noise, n) - target).abs() / target;

    let powers: Vec<f64> = gains.iter().map(|&g| (pr / g).min(p_max)).collect();
    let sinrs = gains
        .iter()
        .zip(&powers)
        .map(|(&g, &p)| {
            if p >= p_max {
                capped_sinr(p_max * g, u1, pr, &capped, noise, n)
            } else {
                Ok(target)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let utilities = powers
        .iter()
        .zip(&sinrs)
        .map(|(&p, &s)| util.eval(p, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConstrainedPrediction {
        prediction: LsaPrediction {
            receiver: ReceiverKind::Mmse,
            beta_d: target / pr,
            received_power: pr,
            gains,
            powers,
            sinrs,
            utilities,
            feasible: true,
        },
        u1,
        u2,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::solve_target_sinr;
    use crate::model::FadingKind;
    use proptest::prelude::*;

    const NOISE: f64 = 1e-3;

    fn target() -> f64 {
        solve_target_sinr(120).unwrap()
    }

    #[test]
    fn beta_d_without_interferers() {
        let b = solve_beta_d_mmse(NOISE, 64, &[], 3).unwrap();
        assert_eq!(b, 1.0 / NOISE);
        let b = solve_beta_d_equal_power(0.0, NOISE, 1.0, 0.0, 3).unwrap();
        assert_eq!(b, 1.0 / NOISE);
    }

    #[test]
    fn beta_d_equal_power_consistency() {
        let t = target();
        for load in [0.1, 0.5, 0.9, 1.05] {
            let pr = equal_received_power(load, t, NOISE, ReceiverKind::Mmse, 3).unwrap();
            let b = solve_beta_d_equal_power(load, NOISE, pr, 0.0, 3).unwrap();
            assert!((pr * b / t - 1.0).abs() < 1e-8, "load {load}");
            let closed = beta_d_closed_form(load, t, NOISE, ReceiverKind::Mmse, 3).unwrap();
            assert!((b / closed - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn general_form_matches_equal_power_form() {
        let n = 50;
        let pr = 0.02;
        let hs = vec![InterfererLoad { received_power: pr, xi_sq: 1e-3 }; 25];
        let general = solve_beta_d_mmse(NOISE, n, &hs, 3).unwrap();
        let equal = solve_beta_d_equal_power(0.5, NOISE, pr, 1e-3, 3).unwrap();
        assert!((general / equal - 1.0).abs() < 1e-12);
    }

    #[test]
    fn asymptotic_sinr_limits() {
        assert_eq!(asymptotic_sinr(2.0, &[0.5, 0.5], 0.0, 10.0), 10.0);
        assert!(asymptotic_sinr(2.0, &[1.0], 1e12, 10.0) < 1e-10);
    }

    #[test]
    fn decentralized_power_examples() {
        let t = target();
        for kind in ReceiverKind::ALL {
            let p = decentralized_power(1.0, 0.0, t, NOISE, kind, 3).unwrap();
            assert!((p - t * NOISE).abs() < 1e-15);
        }
        let p = decentralized_power(1.0, 0.5, 13.38, NOISE, ReceiverKind::Mmse, 3).unwrap();
        assert!((p - 0.02502).abs() < 1e-5, "{p}");
        let err = decentralized_power(1.0, 0.1, 13.38, NOISE, ReceiverKind::MatchedFilter, 3);
        match err {
            Err(Error::Infeasible { bound, .. }) => assert!((bound - 1.0 / 13.38).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn quantiles_exponential_closed_form() {
        let f = FadingModel::new(FadingKind::ExponentialPathPower, 1.0);
        let q = quantile_gains(&f, 1, 4, QuantileMode::PaperExact);
        let expect = [4f64.ln(), 2f64.ln(), (4.0f64 / 3.0).ln(), 0.0];
        for (a, b) in q.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let med = quantile_gains(&f, 1, 1, QuantileMode::Midpoint);
        assert!((med[0] - 2f64.ln()).abs() < 1e-12);
        let g = quantile_gains(&FadingModel::default(), 3, 50, QuantileMode::Midpoint);
        assert!(g.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn profiles_are_monotone_and_ordered() {
        let t = target();
        let cfg = SystemConfig {
            users: 3,
            processing_gain: 64,
            ..SystemConfig::default()
        };
        let preds: Vec<LsaPrediction> = ReceiverKind::ALL
            .iter()
            .map(|&k| predict_profiles(&cfg, t, k, QuantileMode::Midpoint).unwrap())
            .collect();
        for p in &preds {
            assert!(p.powers.windows(2).all(|w| w[0] <= w[1]));
            assert!(p.utilities.windows(2).all(|w| w[0] >= w[1]));
        }
        for k in 0..3 {
            assert!(preds[0].utilities[k] >= preds[1].utilities[k]);
            assert!(preds[0].utilities[k] >= preds[2].utilities[k]);
        }
    }

    #[test]
    fn single_user_profile() {
        let t = target();
        let cfg = SystemConfig {
            users: 1,
            ..SystemConfig::default()
        };
        let p = predict_profiles(&cfg, t, ReceiverKind::Mmse, QuantileMode::Midpoint).unwrap();
        let g = cfg.fading.inverse_cdf(3, 0.5);
        let expect = t * NOISE / (g * (1.0 - t / (64.0 * (1.0 + t))));
        assert!((p.powers[0] / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn feasibility_ordering() {
        let t = target();
        let mf = feasibility_bound(ReceiverKind::MatchedFilter, t, 3);
        let dec = feasibility_bound(ReceiverKind::Decorrelator, t, 3);
        let mmse = feasibility_bound(ReceiverKind::Mmse, t, 3);
        assert!(mf < dec && dec < mmse);
    }

    #[test]
    fn training_closed_form_without_interference() {
        let (xi, bc) = training_error_variance(0.02, 10, 0.0, 3, NOISE).unwrap();
        assert!((bc - 2.0 * 10.0 / (2.0 * NOISE)).abs() < 1e-9 * bc);
        assert!((xi - 0.02 / (1.0 + 0.02 * 10.0 / NOISE)).abs() < 1e-15);
        assert!(training_error_variance(0.02, 0, 0.5, 3, NOISE).is_err());
    }

    #[test]
    fn training_error_decreases() {
        let mut prev = f64::INFINITY;
        for nt in [1, 2, 4, 8, 16, 32, 64] {
            let (xi, bc) = training_error_variance(0.03, nt, 0.5, 3, NOISE).unwrap();
            assert!(xi < prev);
            prev = xi;
            let r = beta_c_rhs(0.03, nt, 0.5, 3, NOISE, bc);
            assert!((bc - r).abs() <= 1e-10 * bc);
        }
    }

    #[test]
    fn perfect_csi_reduces_to_unconstrained_profile() {
        let t = target();
        let cfg = SystemConfig::default();
        let (_, powers) = powers_with_estimation_error(&cfg, t, 0.0, QuantileMode::Midpoint).unwrap();
        let base = predict_profiles(&cfg, t, ReceiverKind::Mmse, QuantileMode::Midpoint).unwrap();
        for (a, b) in powers.iter().zip(&base.powers) {
            assert!((a / b - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn training_sweep_has_interior_optimum() {
        let t = target();
        let cfg = SystemConfig {
            users: 32,
            ..SystemConfig::default()
        };
        let pr = equal_received_power(cfg.load(), t, NOISE, ReceiverKind::Mmse, 3).unwrap();
        let sweep = training_sweep(&cfg, t, pr, QuantileMode::Midpoint).unwrap();
        let best = sweep.best_training_len().unwrap();
        assert!(best > 1 && best < 119);
        let last = sweep.points.last().unwrap();
        assert!(last.mean_utility < sweep.points[sweep.argmax.unwrap()].mean_utility);
    }

    #[test]
    fn constrained_reduces_without_cap() {
        let t = target();
        let cfg = SystemConfig {
            users: 40,
            ..SystemConfig::default()
        };
        let c = constrained_profile(&cfg, t, f64::INFINITY, QuantileMode::Midpoint, false).unwrap();
        let u = predict_profiles(&cfg, t, ReceiverKind::Mmse, QuantileMode::Midpoint).unwrap();
        assert_eq!(c.u2, 0);
        assert_eq!(c.prediction, u);
    }

    #[test]
    fn constrained_all_capped() {
        let t = target();
        let cfg = SystemConfig {
            users: 20,
            ..SystemConfig::default()
        };
        let c = constrained_profile(&cfg, t, 1e-6, QuantileMode::Midpoint, false).unwrap();
        assert_eq!(c.u2, 20);
        assert!(c.prediction.powers.iter().all(|&p| p == 1e-6));
    }

    #[test]
    fn constrained_binding_cap() {
        let t = target();
        let cfg = SystemConfig {
            users: 60,
            ..SystemConfig::default()
        };
        let u = predict_profiles(&cfg, t, ReceiverKind::Mmse, QuantileMode::Midpoint).unwrap();
        let p_max = u.powers[47];
        let c = constrained_profile(&cfg, t, p_max, QuantileMode::Midpoint, false).unwrap();
        assert_eq!(c.u2, 12);
        assert!(c.residual <= 1e-10);
        // capped users see the weaker interference and fall short of the target
        let pr = c.prediction.received_power;
        assert!(pr <= u.received_power);
        for (i, (&p, &s)) in c.prediction.powers.iter().zip(&c.prediction.sinrs).enumerate() {
            if p == p_max {
                assert!(s <= t * (1.0 + 1e-12));
                let closed = p_max * c.prediction.gains[i] * t / pr;
                assert!((s / closed - 1.0).abs() < 1e-9);
            } else {
                assert_eq!(s, t);
                assert!(p <= u.powers[i] * (1.0 + 1e-12));
            }
        }
        let re = constrained_profile(&cfg, t, p_max, QuantileMode::Midpoint, true).unwrap();
        assert!(re.u2 <= c.u2);
    }

    proptest! {
        #[test]
        fn beta_d_residual(load in 0.0f64..2.0, pr in 1e-4f64..1.0, xi in 0.0f64..0.1, l in 1usize..5) {
            let b = solve_beta_d_equal_power(load, NOISE, pr, xi, l).unwrap();
            let r = beta_d_equal_power_rhs(load, NOISE, pr, xi, l, b);
            prop_assert!((b - r).abs() <= 1e-10 * b);
        }

        #[test]
        fn noise_scaling(c in 0.1f64..10.0, users in 1usize..60) {
            let t = target();
            let cfg = SystemConfig { users, ..SystemConfig::default() };
            let scaled = SystemConfig { noise_psd_half: NOISE * c, ..cfg.clone() };
            let a = predict_profiles(&cfg, t, ReceiverKind::Mmse, QuantileMode::Midpoint).unwrap();
            let b = predict_profiles(&scaled, t, ReceiverKind::Mmse, QuantileMode::Midpoint).unwrap();
            for k in 0..users {
                prop_assert!((b.powers[k] / (c * a.powers[k]) - 1.0).abs() < 1e-12);
                prop_assert!((b.utilities[k] * c / a.utilities[k] - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn closed_loop(load in 0.0f64..1.07, g in 0.01f64..5.0) {
            let t = target();
            prop_assume!(load < feasibility_bound(ReceiverKind::Mmse, t, 3));
            let p = decentralized_power(g, load, t, NOISE, ReceiverKind::Mmse, 3).unwrap();
            let b = solve_beta_d_equal_power(load, NOISE, p * g, 0.0, 3).unwrap();
            let gamma = asymptotic_sinr(p, &[g.sqrt()], 0.0, b);
            prop_assert!((gamma / t - 1.0).abs() < 1e-8);
        }
    }
}
