use nalgebra::{DMatrix, DVector};

use super::scenario::Scenario;
use super::signals::windowed_composites;
use crate::error::{Error, Result};

/// Covariance of user `k`'s observation vector under i.i.d. equiprobable
/// antipodal symbols, built user by user in `k`'s window.
///
/// Includes the desired user's own current and previous symbol terms.
pub fn assemble_covariance(scenario: &Scenario, powers: &[f64], k: usize) -> Result<DMatrix<f64>> {
    let n = scenario.config.processing_gain;
    if powers.len() != scenario.users() {
        return Err(Error::DimensionMismatch {
            expected: scenario.users(),
            got: powers.len(),
        });
    }
    let mut m = DMatrix::identity(n, n) * scenario.config.noise_psd_half;
    for h in 0..scenario.users() {
        let vs = windowed_composites(
            &scenario.codes[h],
            &scenario.channels[h],
            scenario.relative_shift(h, k),
        )?;
        for v in &vs {
            m.ger(powers[h], v, v, 1.0);
        }
    }
    Ok(m)
}

const SYMBOLS_PER_USER: usize = 4;

/// Every user's per-symbol composite vectors laid out on a common `2N`-chip
/// frame that contains all observation windows.
///
/// User `k`'s window is rows `tau_k .. tau_k + N`, so one `2N x 2N` product
/// per power vector yields all `K` window covariances as sub-blocks.
#[derive(Debug, Clone)]
pub struct SignalBank {
    n: usize,
    noise: f64,
    offsets: Vec<usize>,
    /// Column `4h + (m + 2)` holds user `h`'s symbol `m` in `-2..=1`.
    frame: DMatrix<f64>,
}

impl SignalBank {
    pub fn new(scenario: &Scenario) -> Self {
        let n = scenario.config.processing_gain;
        let k = scenario.users();
        let mut frame = DMatrix::zeros(2 * n, SYMBOLS_PER_USER * k);
        for h in 0..k {
            let code = &scenario.codes[h];
            let ch = &scenario.channels[h];
            for (&alpha, &d) in ch.gains().iter().zip(ch.delays()) {
                for m in -2isize..=1 {
                    let col = SYMBOLS_PER_USER * h + (m + 2) as usize;
                    let start = (scenario.offsets[h] + d) as isize + m * n as isize;
                    for c in 0..n {
                        let pos = start + c as isize;
                        if (0..2 * n as isize).contains(&pos) {
                            frame[(pos as usize, col)] += alpha * code[c];
                        }
                    }
                }
            }
        }
        Self {
            n,
            noise: scenario.config.noise_psd_half,
            offsets: scenario.offsets.clone(),
            frame,
        }
    }

    pub fn users(&self) -> usize {
        self.offsets.len()
    }

    pub fn processing_gain(&self) -> usize {
        self.n
    }

    /// Covariance of the whole `2N`-chip frame.
    pub fn frame_covariance(&self, powers: &[f64]) -> Result<DMatrix<f64>> {
        if powers.len() != self.users() {
            return Err(Error::DimensionMismatch {
                expected: self.users(),
                got: powers.len(),
            });
        }
        let mut scaled = self.frame.clone();
        for (h, &p) in powers.iter().enumerate() {
            let s = p.max(0.0).sqrt();
            for j in 0..SYMBOLS_PER_USER {
                scaled.column_mut(SYMBOLS_PER_USER * h + j).scale_mut(s);
            }
        }
        let mut g = &scaled * scaled.transpose();
        for i in 0..2 * self.n {
            g[(i, i)] += self.noise;
        }
        Ok(g)
    }

    /// User `k`'s window covariance cut out of a frame covariance.
    pub fn window_covariance(&self, frame_cov: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
        let t = self.offsets[k];
        frame_cov.view((t, t), (self.n, self.n)).into_owned()
    }

    /// User `h`'s symbol `m` (in `-2..=1`) composite vector seen in user
    /// `k`'s window.
    pub fn window_vector(&self, h: usize, m: isize, k: usize) -> DVector<f64> {
        let col = SYMBOLS_PER_USER * h + (m + 2) as usize;
        self.frame
            .view((self.offsets[k], col), (self.n, 1))
            .column(0)
            .into_owned()
    }

    /// `h_{k,0}`: desired user's current-symbol composite vector.
    pub fn desired(&self, k: usize) -> DVector<f64> {
        self.window_vector(k, 0, k)
    }

    /// Desired user's own previous-symbol (ISI) vector.
    pub fn isi(&self, k: usize) -> DVector<f64> {
        self.window_vector(k, -1, k)
    }

    /// Nonzero windowed vectors of every user other than `k`.
    pub fn interferers(&self, k: usize) -> Vec<DVector<f64>> {
        (0..self.users())
            .filter(|&h| h != k)
            .flat_map(|h| (-2isize..=1).map(move |m| (h, m)))
            .map(|(h, m)| self.window_vector(h, m, k))
            .filter(|v| v.amax() > 0.0)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_code, MultipathChannel, SystemConfig};
    use nalgebra::SymmetricEigen;

    fn config(k: usize, n: usize, l: usize) -> SystemConfig {
        SystemConfig {
            users: k,
            processing_gain: n,
            paths: l,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn single_user_rank_one() {
        let n = 8;
        let a = generate_code(1, 0, n);
        let cfg = config(1, n, 1);
        let noise = cfg.noise_psd_half;
        let sc = Scenario::new(cfg, vec![MultipathChannel::flat(1.0)], vec![a.clone()], vec![0], 0)
            .unwrap();
        let m = assemble_covariance(&sc, &[0.7], 0).unwrap();
        let expect = &a * a.transpose() * 0.7 + DMatrix::identity(n, n) * noise;
        assert!((&m - expect).amax() < 1e-15);
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[n - 1] - (0.7 + noise)).abs() < 1e-12);
        assert!(ev[..n - 1].iter().all(|e| (e - noise).abs() < 1e-12));
    }

    #[test]
    fn orthogonal_synchronous_users() {
        let n = 4;
        let h = 0.5;
        let a = DVector::from_vec(vec![h, h, h, h]);
        let b = DVector::from_vec(vec![h, -h, h, -h]);
        let cfg = config(2, n, 1);
        let noise = cfg.noise_psd_half;
        let sc = Scenario::new(
            cfg,
            vec![MultipathChannel::flat(1.0); 2],
            vec![a, b],
            vec![0, 0],
            0,
        )
        .unwrap();
        let m = assemble_covariance(&sc, &[2.0, 3.0], 0).unwrap();
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[3] - (3.0 + noise)).abs() < 1e-12);
        assert!((ev[2] - (2.0 + noise)).abs() < 1e-12);
        assert!((ev[1] - noise).abs() < 1e-12 && (ev[0] - noise).abs() < 1e-12);
    }

    fn random_scenario(seed: u64, k: usize, n: usize, l: usize) -> Scenario {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cfg = config(k, n, l);
        let channels = (0..k)
            .map(|_| {
                let mut d: Vec<usize> = (0..l).map(|_| rng.random_range(0..n)).collect();
                d[0] = 0;
                d.sort();
                let g = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
                MultipathChannel::new(g, d, n).unwrap()
            })
            .collect();
        let codes = (0..k as u64).map(|h| generate_code(seed, h, n)).collect();
        let offsets = (0..k).map(|_| rng.random_range(0..n)).collect();
        Scenario::new(cfg, channels, codes, offsets, 0).unwrap()
    }

    #[test]
    fn signal_bank_windows_match_direct_assembly() {
        for seed in 0..20 {
            let sc = random_scenario(seed, 5, 12, 3);
            let powers: Vec<f64> = (0..5).map(|h| 0.1 + h as f64 * 0.3).collect();
            let bank = SignalBank::new(&sc);
            let frame = bank.frame_covariance(&powers).unwrap();
            for k in 0..5 {
                let direct = assemble_covariance(&sc, &powers, k).unwrap();
                let fast = bank.window_covariance(&frame, k);
                assert!((direct - fast).amax() < 1e-13, "seed {seed} user {k}");
                let us = crate::model::UserSignals::new(&sc.codes[k], &sc.channels[k]).unwrap();
                assert!((bank.desired(k) - &us.composite_current).amax() < 1e-15);
                assert!((bank.isi(k) - &us.isi_vector).amax() < 1e-15);
            }
        }
    }

    #[test]
    fn covariance_is_positive_definite() {
        for seed in 0..10 {
            let sc = random_scenario(100 + seed, 6, 10, 2);
            let m = assemble_covariance(&sc, &[1.0, 0.5, 2.0, 0.1, 0.0, 3.0], 2).unwrap();
            assert!((&m - m.transpose()).amax() <= 1e-15 * m.amax());
            let min = SymmetricEigen::new(m).eigenvalues.min();
            assert!(min >= sc.config.noise_psd_half - 1e-12);
        }
    }

    #[test]
    fn power_length_mismatch() {
        let sc = random_scenario(1, 3, 8, 1);
        assert!(assemble_covariance(&sc, &[1.0], 0).is_err());
    }
}
