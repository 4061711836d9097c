use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::error::{Error, Result};
use crate::roots;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FadingKind {
    /// Path powers `|a_l|^2` i.i.d. exponential with mean `scale`; gains carry
    /// a random sign.
    ExponentialPathPower,
    /// Path gains i.i.d. zero-mean Gaussian with variance `scale / L`.
    RealGaussianPaths,
}

impl std::str::FromStr for FadingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exponentialpathpower" | "exponential" => Ok(Self::ExponentialPathPower),
            "realgaussianpaths" | "gaussian" => Ok(Self::RealGaussianPaths),
            other => Err(Error::InvalidConfig(format!("unknown fading kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for FadingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ExponentialPathPower => "ExponentialPathPower",
            Self::RealGaussianPaths => "RealGaussianPaths",
        })
    }
}

/// Fading law of the per-path gains, together with the distribution of the
/// composite gain `sum_l a_l^2`.
///
/// Both supported laws give a gamma-distributed composite gain, so the
/// sampler, CDF and quantile function stay consistent with each other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingModel {
    pub kind: FadingKind,
    pub scale: f64,
}

impl Default for FadingModel {
    fn default() -> Self {
        Self {
            kind: FadingKind::RealGaussianPaths,
            scale: 1.0,
        }
    }
}

impl FadingModel {
    pub fn new(kind: FadingKind, scale: f64) -> Self {
        Self { kind, scale }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale > 0.0 && self.scale.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "fading scale must be positive, got {}",
                self.scale
            )))
        }
    }

    /// (shape, scale) of the gamma law of the composite gain over `paths` paths.
    fn gamma_params(&self, paths: usize) -> (f64, f64) {
        let l = paths as f64;
        match self.kind {
            FadingKind::ExponentialPathPower => (l, self.scale),
            FadingKind::RealGaussianPaths => (0.5 * l, 2.0 * self.scale / l),
        }
    }

    fn composite_law(&self, paths: usize) -> Gamma {
        let (shape, scale) = self.gamma_params(paths);
        Gamma::new(shape, 1.0 / scale).expect("validated gamma parameters")
    }

    /// Mean of the composite gain.
    pub fn mean(&self, paths: usize) -> f64 {
        let (shape, scale) = self.gamma_params(paths);
        shape * scale
    }

    /// Variance of the composite gain.
    pub fn variance(&self, paths: usize) -> f64 {
        let (shape, scale) = self.gamma_params(paths);
        shape * scale * scale
    }

    /// Draw `paths` real path gains.
    pub fn sample_gains<R: Rng + ?Sized>(&self, rng: &mut R, paths: usize) -> Vec<f64> {
        match self.kind {
            FadingKind::ExponentialPathPower => (0..paths)
                .map(|_| {
                    let e: f64 = Exp1.sample(rng);
                    let power = self.scale * e;
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    sign * power.sqrt()
                })
                .collect(),
            FadingKind::RealGaussianPaths => {
                let sd = (self.scale / paths as f64).sqrt();
                (0..paths)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        sd * z
                    })
                    .collect()
            }
        }
    }

    /// CDF of the composite gain.
    pub fn cdf(&self, paths: usize, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if self.kind == FadingKind::ExponentialPathPower && paths == 1 {
            return -(-x / self.scale).exp_m1();
        }
        self.composite_law(paths).cdf(x)
    }

    /// Quantile function of the composite gain. `q = 0` gives 0 and `q = 1`
    /// gives infinity.
    pub fn inverse_cdf(&self, paths: usize, q: f64) -> f64 {
        if q <= 0.0 {
            return 0.0;
        }
        if q >= 1.0 {
            return f64::INFINITY;
        }
        if self.kind == FadingKind::ExponentialPathPower && paths == 1 {
            return -self.scale * (-q).ln_1p();
        }
        let law = self.composite_law(paths);
        let guess = self.mean(paths);
        roots::positive_root(|x| law.cdf(x) - q, guess, 1e-15)
            .expect("gamma CDF is continuous and increasing")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exponential_single_path_closed_form() {
        let f = FadingModel::new(FadingKind::ExponentialPathPower, 1.0);
        assert!((f.inverse_cdf(1, 0.75) - 4f64.ln()).abs() < 1e-14);
        assert!((f.inverse_cdf(1, 0.5) - 2f64.ln()).abs() < 1e-14);
        assert_eq!(f.inverse_cdf(1, 0.0), 0.0);
    }

    #[test]
    fn cdf_inverts_quantile() {
        for kind in [FadingKind::ExponentialPathPower, FadingKind::RealGaussianPaths] {
            for paths in [1, 2, 3, 5] {
                let f = FadingModel::new(kind, 1.7);
                for i in 1..200 {
                    let q = i as f64 / 200.0;
                    let x = f.inverse_cdf(paths, q);
                    assert!((f.cdf(paths, x) - q).abs() < 1e-9, "{kind} L={paths} q={q}");
                }
            }
        }
    }

    #[test]
    fn sampler_matches_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for kind in [FadingKind::ExponentialPathPower, FadingKind::RealGaussianPaths] {
            let f = FadingModel::new(kind, 1.0);
            let n = 20_000;
            let samples: Vec<f64> = (0..n)
                .map(|_| f.sample_gains(&mut rng, 3).iter().map(|a| a * a).sum())
                .collect();
            let mean = samples.iter().sum::<f64>() / n as f64;
            let se = (f.variance(3) / n as f64).sqrt();
            assert!((mean - f.mean(3)).abs() < 4.0 * se, "{kind}: {mean}");
        }
    }
}
