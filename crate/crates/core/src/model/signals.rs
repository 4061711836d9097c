use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm below which an ISI vector is treated as absent.
pub const ISI_TOL: f64 = 1e-12;

/// Random binary signature `±1/sqrt(N)`, keyed on `(seed, user_index)`.
pub fn generate_code(seed: u64, user_index: u64, n: usize) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user_index);
    let amp = 1.0 / (n as f64).sqrt();
    DVector::from_fn(n, |_, _| if rng.random::<bool>() { amp } else { -amp })
}

/// Per-user multipath channel at chip resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipathChannel {
    gains: Vec<f64>,
    delays: Vec<usize>,
    composite_gain: f64,
}

impl MultipathChannel {
    /// Delays must be non-decreasing, start at 0 and stay below `n`.
    pub fn new(gains: Vec<f64>, delays: Vec<usize>, n: usize) -> Result<Self> {
        if gains.is_empty() || gains.len() != delays.len() {
            return Err(Error::DimensionMismatch {
                expected: gains.len(),
                got: delays.len(),
            });
        }
        if delays[0] != 0 || delays.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig(
                "path delays must start at 0 and be non-decreasing".into(),
            ));
        }
        if let Some(&d) = delays.iter().find(|&&d| d >= n) {
            return Err(Error::DelayOutOfRange { delay: d, n });
        }
        let composite_gain = gains.iter().map(|a| a * a).sum();
        Ok(Self {
            gains,
            delays,
            composite_gain,
        })
    }

    /// Single path with zero delay.
    pub fn flat(gain: f64) -> Self {
        Self {
            gains: vec![gain],
            delays: vec![0],
            composite_gain: gain * gain,
        }
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn paths(&self) -> usize {
        self.gains.len()
    }

    /// `sum_l a_l^2`.
    pub fn composite_gain(&self) -> f64 {
        self.composite_gain
    }
}

/// Split a code delayed by `delay` chips over the observation window: the
/// returned `(current, previous)` pair holds the current symbol's leading part
/// and the previous symbol's tail.
pub fn build_windowed_replicas(
    code: &DVector<f64>,
    delay: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = code.len();
    if delay >= n {
        return Err(Error::DelayOutOfRange { delay, n });
    }
    let mut current = DVector::zeros(n);
    let mut previous = DVector::zeros(n);
    for i in delay..n {
        current[i] = code[i - delay];
    }
    for i in 0..delay {
        previous[i] = code[n - delay + i];
    }
    Ok((current, previous))
}

/// Composite vectors of a user whose first path arrives `shift` chips into
/// the observation window. Entry `j` multiplies the symbol `j` intervals
/// before the current one; an interferer whose late paths spill past the end
/// of the window therefore touches three symbols.
pub fn windowed_composites(
    code: &DVector<f64>,
    channel: &MultipathChannel,
    shift: usize,
) -> Result<[DVector<f64>; 3]> {
    let n = code.len();
    if shift >= n {
        return Err(Error::DelayOutOfRange { delay: shift, n });
    }
    let mut out = [DVector::zeros(n), DVector::zeros(n), DVector::zeros(n)];
    for (&alpha, &d) in channel.gains().iter().zip(channel.delays()) {
        let total = shift + d;
        let lag = total / n;
        let (cur, prev) = build_windowed_replicas(code, total % n)?;
        out[lag].axpy(alpha, &cur, 1.0);
        out[lag + 1].axpy(alpha, &prev, 1.0);
    }
    Ok(out)
}

/// Projection onto the orthogonal complement of a user's ISI vector,
/// represented by a Householder reflector `H` with `H v = ±|v| e_0`; the
/// basis `O` is `H` without its first column.
#[derive(Debug, Clone, PartialEq)]
pub enum NullProjector {
    Identity { n: usize },
    Reflector { u: DVector<f64>, beta: f64 },
}

impl NullProjector {
    pub fn new(isi_vector: &DVector<f64>, tol: f64) -> Self {
        let n = isi_vector.len();
        let norm = isi_vector.norm();
        if norm <= tol {
            return Self::Identity { n };
        }
        let mut u = isi_vector.clone();
        let sign = if u[0] >= 0.0 { 1.0 } else { -1.0 };
        u[0] += sign * norm;
        let beta = 2.0 / u.norm_squared();
        Self::Reflector { u, beta }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            Self::Identity { n } => *n,
            Self::Reflector { u, .. } => u.len(),
        }
    }

    /// Dimension of the projected observation space.
    pub fn dim(&self) -> usize {
        match self {
            Self::Identity { n } => *n,
            Self::Reflector { u, .. } => u.len() - 1,
        }
    }

    /// `O^T v`.
    pub fn project_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Identity { .. } => v.clone(),
            Self::Reflector { u, beta } => {
                let hv = v - u * (beta * u.dot(v));
                hv.rows(1, hv.len() - 1).into_owned()
            }
        }
    }

    /// `O^T M O` for symmetric `M`, in `O(N^2)`.
    pub fn project_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Self::Identity { .. } => m.clone(),
            Self::Reflector { u, beta } => {
                let n = u.len();
                let mu = m * u;
                let umu = u.dot(&mu);
                // H M H = M - b u (Mu)^T - b (Mu) u^T + b^2 (u^T M u) u u^T
                let w = &mu * *beta - u * (0.5 * beta * beta * umu);
                let mut out = DMatrix::zeros(n - 1, n - 1);
                for j in 1..n {
                    for i in 1..n {
                        out[(i - 1, j - 1)] = m[(i, j)] - u[i] * w[j] - w[i] * u[j];
                    }
                }
                out
            }
        }
    }

    /// Explicit orthonormal basis `O`.
    pub fn basis(&self) -> DMatrix<f64> {
        match self {
            Self::Identity { n } => DMatrix::identity(*n, *n),
            Self::Reflector { u, beta } => {
                let n = u.len();
                let h = DMatrix::identity(n, n) - u * u.transpose() * *beta;
                h.columns(1, n - 1).into_owned()
            }
        }
    }
}

/// Orthonormal basis of the complement of `isi_vector`; the `N x N` identity
/// when the vector's norm does not exceed `tol`.
pub fn isi_null_basis(isi_vector: &DVector<f64>, tol: f64) -> DMatrix<f64> {
    NullProjector::new(isi_vector, tol).basis()
}

/// The desired user's signal objects in its own observation window.
#[derive(Debug, Clone)]
pub struct UserSignals {
    pub code: DVector<f64>,
    pub replicas_current: Vec<DVector<f64>>,
    pub replicas_previous: Vec<DVector<f64>>,
    pub composite_current: DVector<f64>,
    pub isi_vector: DVector<f64>,
    pub isi_null_basis: DMatrix<f64>,
}

impl UserSignals {
    pub fn new(code: &DVector<f64>, channel: &MultipathChannel) -> Result<Self> {
        let n = code.len();
        let mut replicas_current = Vec::with_capacity(channel.paths());
        let mut replicas_previous = Vec::with_capacity(channel.paths());
        let mut composite_current = DVector::zeros(n);
        let mut isi_vector = DVector::zeros(n);
        for (&alpha, &d) in channel.gains().iter().zip(channel.delays()) {
            let (cur, prev) = build_windowed_replicas(code, d)?;
            composite_current.axpy(alpha, &cur, 1.0);
            isi_vector.axpy(alpha, &prev, 1.0);
            replicas_current.push(cur);
            replicas_previous.push(prev);
        }
        let isi_null_basis = isi_null_basis(&isi_vector, ISI_TOL);
        Ok(Self {
            code: code.clone(),
            replicas_current,
            replicas_previous,
            composite_current,
            isi_vector,
            isi_null_basis,
        })
    }
}
