//! Linear detectors on the ISI-nulled observation space and their exact
//! output SINR.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NullProjector, Scenario, SignalBank, ISI_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReceiverKind {
    Mmse,
    MatchedFilter,
    Decorrelator,
}

impl ReceiverKind {
    pub const ALL: [ReceiverKind; 3] = [Self::Mmse, Self::MatchedFilter, Self::Decorrelator];
}

impl std::fmt::Display for ReceiverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mmse => "mmse",
            Self::MatchedFilter => "mf",
            Self::Decorrelator => "dec",
        })
    }
}

impl std::str::FromStr for ReceiverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mmse" => Ok(Self::Mmse),
            "mf" | "matched" | "matchedfilter" | "matched_filter" => Ok(Self::MatchedFilter),
            "dec" | "decorrelator" | "zf" => Ok(Self::Decorrelator),
            other => Err(Error::InvalidConfig(format!("unknown receiver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub filter: DVector<f64>,
    pub sinr: f64,
}

/// One user's detection problem after ISI nulling: `cov = O^T M O`,
/// `desired = O^T h_{k,0}` and the user's transmit power.
#[derive(Debug, Clone)]
pub struct ProjectedProblem {
    pub cov: DMatrix<f64>,
    pub desired: DVector<f64>,
    pub power: f64,
}

impl ProjectedProblem {
    /// Project with an explicit orthonormal basis `O`.
    pub fn from_basis(
        m: &DMatrix<f64>,
        basis: &DMatrix<f64>,
        h_k0: &DVector<f64>,
        power: f64,
    ) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n || basis.nrows() != n || h_k0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: basis.nrows().min(h_k0.len()),
            });
        }
        Ok(Self {
            cov: basis.transpose() * m * basis,
            desired: basis.transpose() * h_k0,
            power,
        })
    }

    pub fn from_projector(
        m: &DMatrix<f64>,
        proj: &NullProjector,
        h_k0: &DVector<f64>,
        power: f64,
    ) -> Result<Self> {
        let n = proj.ambient_dim();
        if m.nrows() != n || h_k0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m.nrows(),
            });
        }
        Ok(Self {
            cov: proj.project_matrix(m),
            desired: proj.project_vector(h_k0),
            power,
        })
    }

    pub fn dim(&self) -> usize {
        self.desired.len()
    }

    /// Interference-plus-noise matrix: `cov - p * desired * desired^T`.
    pub fn interference_cov(&self) -> DMatrix<f64> {
        let mut r = self.cov.clone();
        r.ger(-self.power, &self.desired, &self.desired, 1.0);
        r
    }
}

/// `gamma = p (x^T h)^2 / (x^T [O^T M O - p h h^T] x)` with `h` the projected
/// desired vector.
pub fn output_sinr(x: &DVector<f64>, problem: &ProjectedProblem) -> Result<f64> {
    if x.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: x.len(),
        });
    }
    let xh = x.dot(&problem.desired);
    let signal = problem.power * xh * xh;
    let denom = x.dot(&(problem.interference_cov() * x));
    if !(denom > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    Ok(signal / denom)
}

/// SINR-maximizing filter, parallel to `sqrt(p) (O^T M O)^{-1} O^T h_{k,0}`.
/// Built from the interference-plus-noise matrix `R`, giving `gamma = p h^T R^{-1} h`.
pub fn mmse_filter(problem: &ProjectedProblem) -> Result<FilterResult> {
    if !(problem.power > 0.0) {
        return Err(Error::NonPositivePower(problem.power));
    }
    let chol = problem
        .interference_cov()
        .cholesky()
        .ok_or(Error::SingularCovariance)?;
    let filter = chol.solve(&problem.desired) * problem.power.sqrt();
    let sinr = problem.power.sqrt() * filter.dot(&problem.desired);
    if !(sinr > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    Ok(FilterResult { filter, sinr })
}

/// `x = O^T h_{k,0}`.
pub fn matched_filter(problem: &ProjectedProblem) -> Result<FilterResult> {
    if problem.desired.norm() <= ISI_TOL {
        return Err(Error::ZeroSignature);
    }
    let filter = problem.desired.clone();
    let sinr = output_sinr(&filter, problem)?;
    Ok(FilterResult { filter, sinr })
}

/// Zero-forcing filter: the projected desired vector with every projected
/// nuisance direction removed.
pub fn decorrelating_filter(
    problem: &ProjectedProblem,
    nuisance: &[DVector<f64>],
) -> Result<FilterResult> {
    let dim = problem.dim();
    let cols: Vec<DVector<f64>> = nuisance
        .iter()
        .filter(|v| v.amax() > ISI_TOL)
        .cloned()
        .collect();
    if cols.len() >= dim {
        return Err(Error::ZeroForcingInfeasible {
            nuisance: cols.len(),
            dim,
        });
    }
    let filter = if cols.is_empty() {
        problem.desired.clone()
    } else {
        if let Some(v) = cols.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        let z = DMatrix::from_columns(&cols);
        let svd = z.svd(true, false);
        let u = svd.u.as_ref().expect("left singular vectors requested");
        let smax = svd.singular_values.max();
        let tol = smax * 1e-10 * dim as f64;
        let mut x = problem.desired.clone();
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s > tol {
                let ui = u.column(i);
                let c = ui.dot(&x);
                x.axpy(-c, &ui, 1.0);
            }
        }
        x
    };
    if filter.norm() <= 1e-10 * problem.desired.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::ZeroSignature);
    }
    let sinr = output_sinr(&filter, problem)?;
    Ok(FilterResult { filter, sinr })
}

pub fn apply_receiver(
    kind: ReceiverKind,
    problem: &ProjectedProblem,
    nuisance: &[DVector<f64>],
) -> Result<FilterResult> {
    match kind {
        ReceiverKind::Mmse => mmse_filter(problem),
        ReceiverKind::MatchedFilter => matched_filter(problem),
        ReceiverKind::Decorrelator => decorrelating_filter(problem, nuisance),
    }
}

/// Per-user detection state that does not depend on the power vector.
#[derive(Debug, Clone)]
struct UserView {
    proj: NullProjector,
    desired: DVector<f64>,
    nuisance: Vec<DVector<f64>>,
}

/// Evaluates every user's exact output SINR in a scenario for a given power
/// vector.
#[derive(Debug, Clone)]
pub struct LinkEvaluator {
    bank: SignalBank,
    users: Vec<UserView>,
}

impl LinkEvaluator {
    pub fn new(scenario: &Scenario) -> Self {
        let bank = SignalBank::new(scenario);
        let users = (0..scenario.users())
            .map(|k| {
                let proj = NullProjector::new(&bank.isi(k), ISI_TOL);
                let nuisance = bank
                    .interferers(k)
                    .iter()
                    .map(|v| proj.project_vector(v))
                    .collect();
                UserView {
                    desired: bank.desired(k),
                    proj,
                    nuisance,
                }
            })
            .collect();
        Self { bank, users }
    }

    pub fn users(&self) -> usize {
        self.users.len()
    }

    pub fn bank(&self) -> &SignalBank {
        &self.bank
    }

    /// Projected problem of user `k` from a precomputed frame covariance.
    pub fn problem(&self, frame_cov: &DMatrix<f64>, powers: &[f64], k: usize) -> Result<ProjectedProblem> {
        let m = self.bank.window_covariance(frame_cov, k);
        ProjectedProblem::from_projector(&m, &self.users[k].proj, &self.users[k].desired, powers[k])
    }

    pub fn nuisance(&self, k: usize) -> &[DVector<f64>] {
        &self.users[k].nuisance
    }

    /// SINR of every user under `kind`.
    pub fn sinrs(&self, kind: ReceiverKind, powers: &[f64]) -> Result<Vec<f64>> {
        let frame = self.bank.frame_covariance(powers)?;
        (0..self.users())
            .map(|k| {
                let prob = self.problem(&frame, powers, k)?;
                apply_receiver(kind, &prob, self.nuisance(k)).map(|r| r.sinr)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_code, isi_null_basis, MultipathChannel, SystemConfig};

    const NOISE: f64 = 1e-3;

    fn single_user_problem(p: f64, n: usize) -> ProjectedProblem {
        let a = generate_code(5, 0, n);
        let m = &a * a.transpose() * p + DMatrix::identity(n, n) * NOISE;
        let o = isi_null_basis(&DVector::zeros(n), ISI_TOL);
        ProjectedProblem::from_basis(&m, &o, &a, p).unwrap()
    }

    #[test]
    fn single_user_closed_form() {
        let prob = single_user_problem(1.0, 8);
        let mmse = mmse_filter(&prob).unwrap();
        // 2p / N0 with N0 / 2 = 1e-3
        assert!((mmse.sinr - 1000.0).abs() < 1e-8);
        let mf = matched_filter(&prob).unwrap();
        assert!((mf.sinr - mmse.sinr).abs() < 1e-8);
        assert!((output_sinr(&prob.desired, &prob).unwrap() - 1000.0).abs() < 1e-8);
    }

    #[test]
    fn sinr_is_scale_invariant() {
        let prob = single_user_problem(0.3, 6);
        let r = mmse_filter(&prob).unwrap();
        let scaled = output_sinr(&(&r.filter * 3.0), &prob).unwrap();
        assert!((scaled - r.sinr).abs() <= 1e-12 * r.sinr);
    }

    fn two_user_sync(a: DVector<f64>, b: DVector<f64>, p: [f64; 2]) -> ProjectedProblem {
        let n = a.len();
        let m = &a * a.transpose() * p[0] + &b * b.transpose() * p[1]
            + DMatrix::identity(n, n) * NOISE;
        ProjectedProblem::from_basis(&m, &DMatrix::identity(n, n), &a, p[0]).unwrap()
    }

    #[test]
    fn matched_filter_orthogonal_users() {
        let h = 0.5;
        let a = DVector::from_vec(vec![h, h, h, h]);
        let b = DVector::from_vec(vec![h, -h, h, -h]);
        let prob = two_user_sync(a, b, [0.2, 5.0]);
        let mf = matched_filter(&prob).unwrap();
        assert!((mf.sinr - 2.0 * 0.2 / (2.0 * NOISE)).abs() < 1e-9);
    }

    #[test]
    fn matched_filter_identical_codes() {
        // Both users on one code: the matched filter sees p / (p + N0/2).
        let a = generate_code(8, 0, 4);
        let p = 0.4;
        let prob = two_user_sync(a.clone(), a, [p, p]);
        let mf = matched_filter(&prob).unwrap();
        assert!((mf.sinr - p / (p + NOISE)).abs() < 1e-12);
        // MMSE cannot separate identical signatures either.
        let mmse = mmse_filter(&prob).unwrap();
        assert!((mmse.sinr - mf.sinr).abs() < 1e-9);
    }

    #[test]
    fn mmse_matches_quadratic_form() {
        let n = 8;
        let a = generate_code(1, 0, n);
        let b = generate_code(1, 1, n);
        let c = generate_code(1, 2, n);
        let m = &a * a.transpose() * 0.5
            + &b * b.transpose() * 0.9
            + &c * c.transpose() * 0.2
            + DMatrix::identity(n, n) * NOISE;
        let isi = DVector::from_fn(n, |i, _| if i < 2 { c[i] } else { 0.0 });
        let o = isi_null_basis(&isi, ISI_TOL);
        let prob = ProjectedProblem::from_basis(&m, &o, &a, 0.5).unwrap();
        let r = mmse_filter(&prob).unwrap();
        let rt = prob.interference_cov();
        let quad = 0.5 * prob.desired.dot(&rt.cholesky().unwrap().solve(&prob.desired));
        assert!((quad - r.sinr).abs() <= 1e-9 * quad);
    }

    #[test]
    fn decorrelator_nulls_interferer() {
        let n = 8;
        let a = generate_code(2, 0, n);
        let b = generate_code(2, 1, n);
        let prob = two_user_sync(a, b.clone(), [1.0, 1.0]);
        let dec = decorrelating_filter(&prob, std::slice::from_ref(&b)).unwrap();
        assert!(dec.filter.dot(&b).abs() <= 1e-10);
        let none = decorrelating_filter(&prob, &[]).unwrap();
        assert_eq!(none.filter, matched_filter(&prob).unwrap().filter);
    }

    #[test]
    fn decorrelator_infeasible_when_space_full() {
        let n = 4;
        let prob = single_user_problem(1.0, n);
        let nuisance: Vec<DVector<f64>> = (0..4).map(|h| generate_code(3, h, n)).collect();
        assert!(matches!(
            decorrelating_filter(&prob, &nuisance),
            Err(Error::ZeroForcingInfeasible { nuisance: 4, dim: 4 })
        ));
    }

    #[test]
    fn receiver_kind_parses() {
        assert_eq!("MMSE".parse::<ReceiverKind>().unwrap(), ReceiverKind::Mmse);
        assert_eq!("mf".parse::<ReceiverKind>().unwrap(), ReceiverKind::MatchedFilter);
        assert_eq!("dec".parse::<ReceiverKind>().unwrap(), ReceiverKind::Decorrelator);
        assert!("ml".parse::<ReceiverKind>().is_err());
    }

    #[test]
    fn evaluator_matches_dense_route() {
        let n = 8;
        let cfg = SystemConfig {
            users: 3,
            processing_gain: n,
            paths: 2,
            ..SystemConfig::default()
        };
        let channels = vec![
            MultipathChannel::new(vec![0.9, 0.4], vec![0, 3], n).unwrap(),
            MultipathChannel::new(vec![-0.6, 0.7], vec![0, 6], n).unwrap(),
            MultipathChannel::new(vec![1.1, -0.2], vec![0, 1], n).unwrap(),
        ];
        let codes = (0..3).map(|h| generate_code(4, h, n)).collect();
        let sc = Scenario::new(cfg, channels, codes, vec![0, 5, 2], 0).unwrap();
        let powers = [0.01, 0.02, 0.005];
        let eval = LinkEvaluator::new(&sc);
        let fast = eval.sinrs(ReceiverKind::Mmse, &powers).unwrap();
        for k in 0..3 {
            let m = crate::model::assemble_covariance(&sc, &powers, k).unwrap();
            let us = crate::model::UserSignals::new(&sc.codes[k], &sc.channels[k]).unwrap();
            let prob =
                ProjectedProblem::from_basis(&m, &us.isi_null_basis, &us.composite_current, powers[k])
                    .unwrap();
            let dense = mmse_filter(&prob).unwrap().sinr;
            assert!((dense - fast[k]).abs() <= 1e-10 * dense);
        }
    }
}
