use nalgebra::DVector;

use super::config::SystemConfig;
use super::signals::MultipathChannel;
use crate::error::{Error, Result};

/// One realization of the finite system: codes, channels and per-user chip
/// offsets of the first-arriving path.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: SystemConfig,
    pub channels: Vec<MultipathChannel>,
    pub codes: Vec<DVector<f64>>,
    /// Chip offset `tau_k` in `0..N` of each user's first path.
    pub offsets: Vec<usize>,
    pub trial_index: u64,
}

impl Scenario {
    pub fn new(
        config: SystemConfig,
        channels: Vec<MultipathChannel>,
        codes: Vec<DVector<f64>>,
        offsets: Vec<usize>,
        trial_index: u64,
    ) -> Result<Self> {
        config.validate()?;
        let k = config.users;
        let n = config.processing_gain;
        for len in [channels.len(), codes.len(), offsets.len()] {
            if len != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: len,
                });
            }
        }
        if let Some(c) = codes.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: c.len(),
            });
        }
        if let Some(&t) = offsets.iter().find(|&&t| t >= n) {
            return Err(Error::DelayOutOfRange { delay: t, n });
        }
        if let Some(ch) = channels
            .iter()
            .find(|ch| ch.delays().iter().any(|&d| d >= n))
        {
            return Err(Error::DelayOutOfRange {
                delay: *ch.delays().last().unwrap(),
                n,
            });
        }
        Ok(Self {
            config,
            channels,
            codes,
            offsets,
            trial_index,
        })
    }

    pub fn users(&self) -> usize {
        self.config.users
    }

    pub fn composite_gains(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.composite_gain()).collect()
    }

    /// Offset of user `h`'s first path inside user `k`'s observation window.
    pub fn relative_shift(&self, h: usize, k: usize) -> usize {
        let n = self.config.processing_gain as isize;
        (self.offsets[h] as isize - self.offsets[k] as isize).rem_euclid(n) as usize
    }
}
