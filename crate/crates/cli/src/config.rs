//! Run configuration: a plain `key = value` file, `--set` overrides and typed
//! flags, applied in that order.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use cdma_lsa::lsa::QuantileMode;
use cdma_lsa::model::{FadingKind, SystemConfig};
use cdma_lsa::montecarlo::PowerRule;
use cdma_lsa::receivers::ReceiverKind;

/// Every key accepted in a config file or by `--set`.
pub const KEYS: &[&str] = &[
    "K",
    "N",
    "L",
    "B",
    "N_T",
    "R",
    "noise_psd_half",
    "P_max",
    "fading.kind",
    "fading.scale",
    "seed",
    "trials",
    "receiver",
    "power_rule",
    "quantile_mode",
    "max_delay",
    "max_offset",
    "k_grid",
    "training_power",
    "recount",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub trials: usize,
    pub receiver: ReceiverKind,
    pub power_rule: PowerRule,
    pub quantile_mode: QuantileMode,
    /// User counts swept by the grid commands.
    pub k_grid: Option<Vec<usize>>,
    /// Average received power used for channel estimation.
    pub training_power: Option<f64>,
    /// Re-derive the capped set in the constrained profile.
    pub recount: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            trials: 50,
            receiver: ReceiverKind::Mmse,
            power_rule: PowerRule::GameIteration,
            quantile_mode: QuantileMode::Midpoint,
            k_grid: None,
            training_power: None,
            recount: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("bad value `{value}` for {key}: {e}"))
}

fn parse_optional_usize(key: &str, value: &str) -> Result<Option<usize>> {
    match value {
        "" | "none" | "auto" => Ok(None),
        v => parse_num(key, v).map(Some),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => bail!("bad value `{value}` for {key}: expected true or false"),
    }
}

/// Comma- or range-separated list of user counts: `8,16,24` or `4..=64:4`.
pub fn parse_grid(value: &str) -> Result<Vec<usize>> {
    if let Some((range, step)) = value.split_once(':').or(Some((value, "1"))) {
        if let Some((lo, hi)) = range.split_once("..=") {
            let lo: usize = parse_num("k_grid", lo.trim())?;
            let hi: usize = parse_num("k_grid", hi.trim())?;
            let step: usize = parse_num("k_grid", step.trim())?;
            if step == 0 || lo > hi {
                bail!("bad k_grid range `{value}`");
            }
            return Ok((lo..=hi).step_by(step).collect());
        }
    }
    let grid = value
        .split(',')
        .map(|s| parse_num::<usize>("k_grid", s.trim()))
        .collect::<Result<Vec<_>>>()?;
    if grid.is_empty() {
        bail!("k_grid is empty");
    }
    Ok(grid)
}

fn fmt_float(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x}")
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let s = &mut self.system;
        match key.trim() {
            "K" => s.users = parse_num(key, value)?,
            "N" => s.processing_gain = parse_num(key, value)?,
            "L" => s.paths = parse_num(key, value)?,
            "B" => s.packet_len = parse_num(key, value)?,
            "N_T" => s.training_len = parse_num(key, value)?,
            "R" => s.rate = parse_num(key, value)?,
            "noise_psd_half" => s.noise_psd_half = parse_num(key, value)?,
            "P_max" => s.p_max = parse_num(key, value)?,
            "fading.kind" => {
                s.fading.kind = value
                    .parse::<FadingKind>()
                    .map_err(|e| anyhow!("{e}"))?
            }
            "fading.scale" => s.fading.scale = parse_num(key, value)?,
            "seed" => s.seed = parse_num(key, value)?,
            "max_delay" => s.max_delay = parse_optional_usize(key, value)?,
            "max_offset" => s.max_offset = parse_optional_usize(key, value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "receiver" => self.receiver = value.parse().map_err(|e| anyhow!("{e}"))?,
            "power_rule" => self.power_rule = value.parse().map_err(|e| anyhow!("{e}"))?,
            "quantile_mode" => self.quantile_mode = value.parse().map_err(|e| anyhow!("{e}"))?,
            "k_grid" => {
                self.k_grid = match value {
                    "" | "none" | "auto" => None,
                    v => Some(parse_grid(v)?),
                }
            }
            "training_power" => {
                self.training_power = match value {
                    "" | "none" | "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "recount" => self.recount = parse_bool(key, value)?,
            other => bail!("unknown config key `{other}`; known keys: {}", KEYS.join(", ")),
        }
        Ok(())
    }

    /// Apply a `KEY=VALUE` assignment.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| anyhow!("expected KEY=VALUE, got `{assignment}`"))?;
        self.set(k, v)
    }

    /// Apply a config file: `key = value` lines, `#` comments. A JSON run
    /// manifest is also accepted, in which case its `config` object is used.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        if text.trim_start().starts_with('{') {
            let manifest: serde_json::Value =
                serde_json::from_str(text).context("parsing manifest JSON")?;
            let config = manifest
                .get("config")
                .and_then(|c| c.as_object())
                .ok_or_else(|| anyhow!("manifest has no `config` object"))?;
            for (k, v) in config {
                let v = v
                    .as_str()
                    .ok_or_else(|| anyhow!("manifest value for {k} is not a string"))?;
                self.set(k, v)?;
            }
            return Ok(());
        }
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set_assignment(line)
                .with_context(|| format!("config line {}", no + 1))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if let Some(grid) = &self.k_grid {
            if grid.contains(&0) {
                bail!("k_grid entries must be at least 1");
            }
        }
        if let Some(p) = self.training_power {
            if !(p > 0.0 && p.is_finite()) {
                bail!("training_power must be positive and finite, got {p}");
            }
        }
        Ok(())
    }

    /// Canonical string form of every key, sufficient to rebuild this config.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let s = &self.system;
        let opt = |v: Option<usize>| v.map_or_else(|| "auto".to_string(), |d| d.to_string());
        let pairs = [
            ("K", s.users.to_string()),
            ("N", s.processing_gain.to_string()),
            ("L", s.paths.to_string()),
            ("B", s.packet_len.to_string()),
            ("N_T", s.training_len.to_string()),
            ("R", fmt_float(s.rate)),
            ("noise_psd_half", fmt_float(s.noise_psd_half)),
            ("P_max", fmt_float(s.p_max)),
            ("fading.kind", s.fading.kind.to_string()),
            ("fading.scale", fmt_float(s.fading.scale)),
            ("seed", s.seed.to_string()),
            ("trials", self.trials.to_string()),
            ("receiver", self.receiver.to_string()),
            ("power_rule", self.power_rule.to_string()),
            ("quantile_mode", self.quantile_mode.to_string()),
            ("max_delay", opt(s.max_delay)),
            ("max_offset", opt(s.max_offset)),
            (
                "k_grid",
                self.k_grid.as_ref().map_or_else(
                    || "auto".to_string(),
                    |g| g.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","),
                ),
            ),
            (
                "training_power",
                self.training_power.map_or_else(|| "auto".to_string(), fmt_float),
            ),
            ("recount", self.recount.to_string()),
        ];
        pairs
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }
}
