//! Non-cooperative energy-efficiency game: target SINR, utility, and the
//! best-response iteration over receive filters and transmit powers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Scenario, SystemConfig};
use crate::receivers::{LinkEvaluator, ReceiverKind};
use crate::roots;

/// Packet success proxy `f(gamma) = (1 - exp(-gamma/2))^B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EfficiencyFunction {
    packet_len: usize,
}

impl EfficiencyFunction {
    pub fn new(packet_len: usize) -> Result<Self> {
        if packet_len < 2 {
            return Err(Error::PacketTooShort(packet_len));
        }
        Ok(Self { packet_len })
    }

    pub fn packet_len(&self) -> usize {
        self.packet_len
    }

    pub fn eval(&self, gamma: f64) -> f64 {
        if gamma <= 0.0 {
            return 0.0;
        }
        let base = -(-0.5 * gamma).exp_m1();
        base.powi(self.packet_len as i32)
    }

    pub fn derivative(&self, gamma: f64) -> f64 {
        if gamma < 0.0 {
            return 0.0;
        }
        let b = self.packet_len as f64;
        let e = (-0.5 * gamma).exp();
        let base = -(-0.5 * gamma).exp_m1();
        0.5 * b * e * base.powi(self.packet_len as i32 - 1)
    }
}

/// Unique positive root of `f(gamma) = gamma f'(gamma)`.
///
/// With `x = gamma / 2` the condition is `e^x = 1 + B x`, whose positive root
/// lies above `ln B`, where `e^x - 1 - Bx` attains its minimum.
pub fn solve_target_sinr(packet_len: usize) -> Result<f64> {
    if packet_len < 2 {
        return Err(Error::PacketTooShort(packet_len));
    }
    let b = packet_len as f64;
    let g = |x: f64| x.exp_m1() - b * x;
    let lo = b.ln();
    let mut hi = 2.0 * lo.max(1.0);
    while g(hi) <= 0.0 {
        hi *= 2.0;
    }
    let x = roots::bisect(g, lo, hi, roots::REL_TOL)?;
    Ok(2.0 * x)
}

/// Utility parameters: `u = R (B - N_T)/B f(gamma) / p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityModel {
    pub rate: f64,
    pub efficiency: EfficiencyFunction,
    pub training_len: usize,
}

impl UtilityModel {
    pub fn new(rate: f64, packet_len: usize, training_len: usize) -> Result<Self> {
        let efficiency = EfficiencyFunction::new(packet_len)?;
        if training_len > packet_len {
            return Err(Error::InvalidConfig(format!(
                "N_T = {training_len} exceeds B = {packet_len}"
            )));
        }
        Ok(Self {
            rate,
            efficiency,
            training_len,
        })
    }

    pub fn from_config(config: &SystemConfig) -> Result<Self> {
        Self::new(config.rate, config.packet_len, config.training_len)
    }

    /// `R (B - N_T) / B`.
    pub fn throughput_factor(&self) -> f64 {
        let b = self.efficiency.packet_len() as f64;
        self.rate * (b - self.training_len as f64) / b
    }

    pub fn eval(&self, power: f64, gamma: f64) -> Result<f64> {
        if !(power > 0.0) {
            return Err(Error::NonPositivePower(power));
        }
        Ok(self.throughput_factor() * self.efficiency.eval(gamma) / power)
    }
}

/// Utility of one user under `config`.
pub fn utility(power: f64, gamma: f64, config: &SystemConfig) -> Result<f64> {
    UtilityModel::from_config(config)?.eval(power, gamma)
}

/// Multiplicative SINR-target update `min{p * target / gamma, P_max}`.
pub fn best_response_power(power: f64, gamma: f64, target: f64, p_max: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Unservable);
    }
    Ok((power * target / gamma).min(p_max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumOptions {
    /// Uniform starting power; `None` means `N0/2`.
    pub initial_power: Option<f64>,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Keep every iterate's power vector.
    pub record_trace: bool,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            initial_power: None,
            max_iterations: 500,
            tolerance: 1e-6,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub powers: Vec<f64>,
    pub sinrs: Vec<f64>,
    pub utilities: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Indices of users transmitting at `P_max`.
    pub capped_users: Vec<usize>,
    pub target_sinr: f64,
    #[serde(skip)]
    pub trace: Vec<Vec<f64>>,
}

/// Best-response dynamics: filters from the current powers, then every user
/// simultaneously moves its power toward the target SINR.
pub fn run_equilibrium(
    scenario: &Scenario,
    receiver: ReceiverKind,
    options: &EquilibriumOptions,
) -> Result<EquilibriumResult> {
    let evaluator = LinkEvaluator::new(scenario);
    run_equilibrium_with(scenario, &evaluator, receiver, options)
}

pub fn run_equilibrium_with(
    scenario: &Scenario,
    evaluator: &LinkEvaluator,
    receiver: ReceiverKind,
    options: &EquilibriumOptions,
) -> Result<EquilibriumResult> {
    let config = &scenario.config;
    let target = solve_target_sinr(config.packet_len)?;
    let util = UtilityModel::from_config(config)?;
    let p_max = config.p_max;
    let k = scenario.users();
    let p0 = options
        .initial_power
        .unwrap_or(config.noise_psd_half)
        .min(p_max);
    let mut powers = vec![p0; k];
    let mut previous = powers.clone();
    let mut trace = Vec::new();
    let mut sinrs = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        if options.record_trace {
            trace.push(powers.clone());
        }
        let current = match evaluator.sinrs(receiver, &powers) {
            Ok(g) => g,
            Err(Error::SingularCovariance | Error::ZeroDenominator) if !sinrs.is_empty() => {
                powers = previous;
                break;
            }
            Err(e) => return Err(e),
        };
        sinrs = current;
        iterations += 1;
        let done = powers.iter().zip(&sinrs).all(|(&p, &g)| {
            if p >= p_max {
                g <= target * (1.0 + options.tolerance)
            } else {
                ((g - target) / target).abs() <= options.tolerance
            }
        });
        if done {
            converged = true;
            break;
        }
        let next: Result<Vec<f64>> = powers
            .iter()
            .zip(&sinrs)
            .map(|(&p, &g)| best_response_power(p, g, target, p_max))
            .collect();
        match next {
            Ok(next) if next.iter().all(|p| p.is_finite()) => {
                previous = std::mem::replace(&mut powers, next);
            }
            _ => break,
        }
    }

    let capped_users = powers
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= p_max)
        .map(|(i, _)| i)
        .collect();
    let utilities = powers
        .iter()
        .zip(&sinrs)
        .map(|(&p, &g)| util.eval(p, g))
        .collect::<Result<Vec<_>>>()?;
    Ok(EquilibriumResult {
        powers,
        sinrs,
        utilities,
        iterations,
        converged,
        capped_users,
        target_sinr: target,
        trace,
    })
}
