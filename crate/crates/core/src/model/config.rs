use serde::{Deserialize, Serialize};

use super::fading::FadingModel;
use crate::error::{Error, Result};

/// Scenario scalars shared by the finite-system game and the large-system
/// formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of users `K`.
    pub users: usize,
    /// Processing gain `N` (chips per symbol).
    pub processing_gain: usize,
    /// Multipath replicas per user `L`.
    pub paths: usize,
    /// Packet length `B` in symbols.
    pub packet_len: usize,
    /// Overhead (training) symbols `N_T`.
    pub training_len: usize,
    /// Common data rate in bits/s.
    pub rate: f64,
    /// Per-sample noise variance.
    pub noise_psd_half: f64,
    /// Per-user maximum transmit power; `f64::INFINITY` when unbounded.
    #[serde(with = "crate::model::config::extended_float")]
    pub p_max: f64,
    pub fading: FadingModel,
    /// Largest path delay in chips drawn by the scenario generator; `None`
    /// spreads delays over the whole symbol (`N - 1`).
    #[serde(default)]
    pub max_delay: Option<usize>,
    /// Largest first-path chip offset drawn by the scenario generator; `None`
    /// spreads offsets over the whole symbol (`N - 1`).
    #[serde(default)]
    pub max_offset: Option<usize>,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            users: 16,
            processing_gain: 64,
            paths: 3,
            packet_len: 120,
            training_len: 0,
            rate: 1.0e5,
            noise_psd_half: 1.0e-3,
            p_max: f64::INFINITY,
            fading: FadingModel::default(),
            max_delay: None,
            max_offset: None,
            seed: 1,
        }
    }
}

impl SystemConfig {
    /// System load `K / N`.
    pub fn load(&self) -> f64 {
        self.users as f64 / self.processing_gain as f64
    }

    /// Effective delay cap used by the scenario generator.
    pub fn delay_cap(&self) -> usize {
        self.max_delay
            .unwrap_or(self.processing_gain.saturating_sub(1))
    }

    /// Effective offset cap used by the scenario generator.
    pub fn offset_cap(&self) -> usize {
        self.max_offset
            .unwrap_or(self.processing_gain.saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.users == 0 {
            return bad("K must be at least 1".into());
        }
        if self.processing_gain == 0 {
            return bad("N must be at least 1".into());
        }
        if self.paths == 0 || self.paths >= self.processing_gain {
            return bad(format!(
                "L must satisfy 1 <= L < N, got L = {} with N = {}",
                self.paths, self.processing_gain
            ));
        }
        if self.packet_len < 2 {
            return bad(format!("B must be at least 2, got {}", self.packet_len));
        }
        if self.training_len >= self.packet_len {
            return bad(format!(
                "N_T must be below B, got N_T = {} with B = {}",
                self.training_len, self.packet_len
            ));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return bad(format!("R must be positive, got {}", self.rate));
        }
        if !(self.noise_psd_half > 0.0 && self.noise_psd_half.is_finite()) {
            return bad(format!(
                "noise_psd_half must be positive, got {}",
                self.noise_psd_half
            ));
        }
        if !(self.p_max > 0.0) {
            return bad(format!("P_max must be positive, got {}", self.p_max));
        }
        for d in [self.max_delay, self.max_offset].into_iter().flatten() {
            if d >= self.processing_gain {
                return Err(Error::DelayOutOfRange {
                    delay: d,
                    n: self.processing_gain,
                });
            }
        }
        if self.delay_cap() + 1 < self.paths {
            return bad(format!(
                "max_delay = {} leaves no room for {} distinct path delays",
                self.delay_cap(),
                self.paths
            ));
        }
        self.fading.validate()
    }
}

/// Serializes non-finite floats as the strings `"inf"`, `"-inf"` and `"nan"`
/// so that JSON manifests can carry an unbounded power cap.
pub mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            s.serialize_f64(*value)
        } else if value.is_nan() {
            s.serialize_str("nan")
        } else if *value > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse::<f64>().map_err(serde::de::Error::custom),
        }
    }
}
