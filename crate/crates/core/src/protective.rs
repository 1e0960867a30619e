//! Protective measurement: a weak coupling repeated on one system, with the
//! state protected by a projective measurement onto it after every step.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    eigendecompose, expectation, HermitianOperator, StateVector, C64,
};
use crate::measurement::{
    make_pointer, pointer_position_mean, JointSystemPointerState, PointerCoupling, PointerGrid,
};
use crate::seeding;

pub const DEFAULT_STEPS: usize = 400;
pub const DEFAULT_COUPLING: f64 = 5e-3;
pub const DEFAULT_WIDTH: f64 = 1.0;
/// Reconstructions whose largest density-matrix eigenvalue falls below
/// `1 − PURITY_TOL` are rejected as not pure.
pub const PURITY_TOL: f64 = 1e-3;
/// Relative singular-value cutoff for the informational-completeness rank.
const RANK_TOL: f64 = 1e-9;

/// Step count, coupling strength and pointer for one protective run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub steps: usize,
    pub coupling: f64,
    pub grid: PointerGrid,
    pub width: f64,
}

impl ProtocolParams {
    /// Uses the default grid for `width`.
    pub fn new(steps: usize, coupling: f64, width: f64) -> Result<Self> {
        Ok(Self {
            steps,
            coupling,
            grid: PointerGrid::for_width(width)?,
            width,
        })
    }
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self::new(DEFAULT_STEPS, DEFAULT_COUPLING, DEFAULT_WIDTH)
            .expect("default pointer grid is valid")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Mode {
    /// Keep the success branch, renormalized; survival is the product of
    /// branch weights.
    Deterministic,
    /// Sample each protection outcome; a failure ends the run.
    Sampled { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum RunOutcome {
    Completed,
    /// The protection measurement failed at `step` (sampled mode).
    Aborted { step: usize },
    /// The prepared state has no component along the protected state.
    Annihilated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub survival: f64,
    pub pointer_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtectiveRunResult {
    pub steps: usize,
    pub coupling: f64,
    pub pointer_mean_shift: f64,
    pub survival_probability: f64,
    /// `pointer_mean_shift / (steps·coupling)`; absent when that product is 0
    /// or the run did not complete.
    pub inferred_expectation: Option<f64>,
    pub per_step_log: Vec<StepRecord>,
    pub outcome: RunOutcome,
}

pub const STEP_LOG_CSV_HEADER: [&str; 3] = ["step", "survival", "pointer_mean"];

impl ProtectiveRunResult {
    pub fn write_log_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(STEP_LOG_CSV_HEADER)?;
        for rec in &self.per_step_log {
            w.serialize(rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct RunState {
    result: ProtectiveRunResult,
    joint: Option<JointSystemPointerState>,
}

/// Couples `op` at strength `g`, then measures `{P, 1−P}` with
/// `P = |protected⟩⟨protected|`, `steps` times, starting from `prepared ⊗ χ₀`.
fn run_protocol(
    prepared: &StateVector,
    protected: &StateVector,
    op: &HermitianOperator,
    params: &ProtocolParams,
    mode: Mode,
) -> Result<RunState> {
    if prepared.dim() != protected.dim() {
        return Err(Error::DimensionMismatch {
            left: prepared.dim(),
            right: protected.dim(),
        });
    }
    if op.dim() != prepared.dim() {
        return Err(Error::DimensionMismatch {
            left: op.dim(),
            right: prepared.dim(),
        });
    }
    let g = params.coupling;
    if !g.is_finite() {
        return Err(Error::InvalidParameter(format!("coupling must be finite, got {g}")));
    }
    let coupling = PointerCoupling::new(op, g, params.grid)?;
    params
        .grid
        .check_shift(params.steps as f64 * g * coupling.eigen().max_abs_eigenvalue())?;
    let chi = make_pointer(params.grid, params.width)?;
    let baseline = chi.mean();
    let mut joint = JointSystemPointerState::product(prepared, &chi)?;
    let mut rng = match mode {
        Mode::Sampled { seed } => Some(seeding::substream(seed, 0)),
        Mode::Deterministic => None,
    };

    let mut survival = 1.0f64;
    let mut log = Vec::with_capacity(params.steps + 1);
    log.push(StepRecord {
        step: 0,
        survival,
        pointer_mean: pointer_position_mean(&joint),
    });
    let mut outcome = RunOutcome::Completed;
    let mut survived = true;
    for step in 1..=params.steps {
        let coupled = coupling.apply(&joint)?;
        let (projected, weight) = coupled.project_and_renormalize(protected)?;
        let weight = weight.min(1.0);
        survival *= weight;
        let draw = rng.as_mut().map(|r| r.random::<f64>());
        let failed = match (&projected, draw) {
            (None, _) => {
                outcome = RunOutcome::Annihilated;
                true
            }
            (Some(_), Some(u)) if u >= weight => {
                outcome = RunOutcome::Aborted { step };
                true
            }
            _ => false,
        };
        if failed {
            // The pointer keeps the reading it had before the failed step.
            survived = false;
            log.push(StepRecord {
                step,
                survival,
                pointer_mean: pointer_position_mean(&joint),
            });
            break;
        }
        joint = projected.expect("success branch exists");
        log.push(StepRecord {
            step,
            survival,
            pointer_mean: pointer_position_mean(&joint),
        });
    }

    let completed = outcome == RunOutcome::Completed;
    let shift = if params.steps == 0 {
        0.0
    } else {
        pointer_position_mean(&joint) - baseline
    };
    let total = params.steps as f64 * g;
    let inferred_expectation = (completed && total != 0.0).then(|| shift / total);
    Ok(RunState {
        result: ProtectiveRunResult {
            steps: params.steps,
            coupling: g,
            pointer_mean_shift: shift,
            survival_probability: survival,
            inferred_expectation,
            per_step_log: log,
            outcome,
        },
        joint: survived.then_some(joint),
    })
}

/// Protective measurement of `op` on a single system prepared and protected
/// in `psi`.
pub fn protective_measure(
    psi: &StateVector,
    op: &HermitianOperator,
    params: &ProtocolParams,
    mode: Mode,
) -> Result<ProtectiveRunResult> {
    Ok(run_protocol(psi, psi, op, params, mode)?.result)
}

/// [`protective_measure`] together with the final system-pointer state
/// (`None` when the run failed).
pub fn protective_measure_with_state(
    psi: &StateVector,
    op: &HermitianOperator,
    params: &ProtocolParams,
    mode: Mode,
) -> Result<(ProtectiveRunResult, Option<JointSystemPointerState>)> {
    let state = run_protocol(psi, psi, op, params, mode)?;
    Ok((state.result, state.joint))
}

/// Dominant eigenvector of the system's reduced density matrix, with that
/// eigenvalue (1 for a product state).
pub fn reduced_system_state(joint: &JointSystemPointerState) -> Result<(StateVector, f64)> {
    let d = joint.system_dim();
    let dx = joint.grid().spacing();
    let rho = DMatrix::from_fn(d, d, |i, j| {
        joint
            .system_row(i)
            .iter()
            .zip(joint.system_row(j))
            .map(|(a, b)| a * b.conj())
            .sum::<C64>()
            * dx
    });
    let trace = rho.trace().re;
    let rho = HermitianOperator::new(rho.unscale(trace))?;
    let eig = eigendecompose(&rho)?;
    let top = d - 1;
    Ok((eig.eigenvectors()[top].clone(), eig.eigenvalues()[top]))
}

#[derive(Clone, Debug)]
pub struct LeakResult {
    pub survival: f64,
    /// `None` when nothing survives (orthogonal pair).
    pub surviving_state: Option<StateVector>,
    pub run: ProtectiveRunResult,
}

/// Protects `protected` on a system prepared in `prepared` while coupling
/// `op`; reports what fraction survives and the survivors' state.
pub fn protection_leak(
    prepared: &StateVector,
    protected: &StateVector,
    op: &HermitianOperator,
    params: &ProtocolParams,
) -> Result<LeakResult> {
    let state = run_protocol(prepared, protected, op, params, Mode::Deterministic)?;
    let surviving_state = match &state.joint {
        Some(joint) if state.result.survival_probability > 0.0 => {
            Some(reduced_system_state(joint)?.0)
        }
        _ => None,
    };
    let survival = if surviving_state.is_some() {
        state.result.survival_probability
    } else {
        0.0
    };
    Ok(LeakResult {
        survival,
        surviving_state,
        run: state.result,
    })
}

/// Operators with their measured expectation values. The identity with
/// expectation 1 is always implied, so `{σx, σy, σz}` is complete for a qubit.
#[derive(Clone, Debug)]
pub struct TomographySet {
    operators: Vec<HermitianOperator>,
    expectations: Vec<f64>,
}

impl TomographySet {
    pub fn new(operators: Vec<HermitianOperator>, expectations: Vec<f64>) -> Result<Self> {
        if operators.len() != expectations.len() {
            return Err(Error::DimensionMismatch {
                left: operators.len(),
                right: expectations.len(),
            });
        }
        let dim = operators.first().ok_or(Error::Empty)?.dim();
        for op in &operators {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: op.dim(),
                    right: dim,
                });
            }
        }
        let set = Self {
            operators,
            expectations,
        };
        let rank = set.rank();
        if rank < dim * dim {
            return Err(Error::NotInformationallyComplete {
                rank,
                required: dim * dim,
            });
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.operators[0].dim()
    }

    pub fn operators(&self) -> &[HermitianOperator] {
        &self.operators
    }

    pub fn expectations(&self) -> &[f64] {
        &self.expectations
    }

    /// Rows `tr(Aᵢ·Hₘ)` over an orthonormal Hermitian basis `Hₘ`, with the
    /// implied identity row last.
    fn design(&self) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.dim();
        let basis = hermitian_basis(d);
        let identity = HermitianOperator::identity(d).expect("dim already validated");
        let rows: Vec<&HermitianOperator> =
            self.operators.iter().chain(std::iter::once(&identity)).collect();
        let m = DMatrix::from_fn(rows.len(), basis.len(), |i, j| {
            (rows[i].matrix() * &basis[j]).trace().re
        });
        let mut b: Vec<f64> = self.expectations.clone();
        b.push(1.0);
        (m, DVector::from_vec(b))
    }

    fn rank(&self) -> usize {
        let (m, _) = self.design();
        let sv = m.singular_values();
        let top = sv.iter().fold(0.0f64, |a, &s| a.max(s));
        sv.iter().filter(|&&s| s > RANK_TOL * top).count()
    }
}

/// Hilbert–Schmidt orthonormal basis of `d×d` Hermitian matrices.
fn hermitian_basis(d: usize) -> Vec<DMatrix<C64>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(d * d);
    for k in 0..d {
        let mut m = DMatrix::zeros(d, d);
        m[(k, k)] = C64::new(1.0, 0.0);
        out.push(m);
    }
    for k in 0..d {
        for l in k + 1..d {
            let mut m = DMatrix::zeros(d, d);
            m[(k, l)] = C64::new(s, 0.0);
            m[(l, k)] = C64::new(s, 0.0);
            out.push(m);
            let mut m = DMatrix::zeros(d, d);
            m[(k, l)] = C64::new(0.0, -s);
            m[(l, k)] = C64::new(0.0, s);
            out.push(m);
        }
    }
    out
}

/// Generalized Gell-Mann matrices (`d² − 1` traceless generators). For
/// `d = 2` these are `σx, σy, σz`.
pub fn gell_mann(d: usize) -> Vec<HermitianOperator> {
    let mut out = Vec::with_capacity(d * d - 1);
    for k in 0..d {
        for l in k + 1..d {
            let mut m = DMatrix::zeros(d, d);
            m[(k, l)] = C64::new(1.0, 0.0);
            m[(l, k)] = C64::new(1.0, 0.0);
            out.push(m);
            let mut m = DMatrix::zeros(d, d);
            m[(k, l)] = C64::new(0.0, -1.0);
            m[(l, k)] = C64::new(0.0, 1.0);
            out.push(m);
        }
    }
    for k in 1..d {
        let norm = (2.0 / (k * (k + 1)) as f64).sqrt();
        let mut m = DMatrix::zeros(d, d);
        for j in 0..k {
            m[(j, j)] = C64::new(norm, 0.0);
        }
        m[(k, k)] = C64::new(-(k as f64) * norm, 0.0);
        out.push(m);
    }
    out.into_iter()
        .map(|m| HermitianOperator::new(m).expect("Gell-Mann matrices are Hermitian"))
        .collect()
}

/// Least-squares density matrix from the expectations, then its dominant
/// eigenvector.
pub fn reconstruct_state(set: &TomographySet) -> Result<StateVector> {
    let d = set.dim();
    let (m, b) = set.design();
    let theta = m
        .svd(true, true)
        .solve(&b, RANK_TOL)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let basis = hermitian_basis(d);
    let mut rho = DMatrix::<C64>::zeros(d, d);
    for (t, h) in theta.iter().zip(&basis) {
        rho += h.scale(*t);
    }
    let rho = HermitianOperator::new((&rho + rho.adjoint()).scale(0.5))?;
    let eig = eigendecompose(&rho)?;
    let largest = eig.eigenvalues()[d - 1];
    if !(largest >= 1.0 - PURITY_TOL) {
        return Err(Error::NotPure { largest });
    }
    Ok(eig.eigenvectors()[d - 1].clone())
}

#[derive(Clone, Debug)]
pub struct TomographyResult {
    pub reconstructed: StateVector,
    pub total_survival: f64,
    pub runs: Vec<ProtectiveRunResult>,
    pub set: TomographySet,
}

/// Protectively measures each operator in turn on the same system (fresh
/// pointer per operator) and reconstructs the state from the inferred
/// expectation values.
pub fn protective_tomography(
    psi: &StateVector,
    operators: &[HermitianOperator],
    params: &ProtocolParams,
) -> Result<TomographyResult> {
    let mut system = psi.clone();
    let mut total_survival = 1.0;
    let mut runs = Vec::with_capacity(operators.len());
    let mut inferred = Vec::with_capacity(operators.len());
    for op in operators {
        let state = run_protocol(&system, psi, op, params, Mode::Deterministic)?;
        total_survival *= state.result.survival_probability;
        let joint = state
            .joint
            .as_ref()
            .ok_or(Error::InvalidParameter("protected system did not survive".into()))?;
        system = reduced_system_state(joint)?.0;
        inferred.push(
            state
                .result
                .inferred_expectation
                .ok_or(Error::InvalidParameter("steps·coupling must be non-zero".into()))?,
        );
        runs.push(state.result);
    }
    let set = TomographySet::new(operators.to_vec(), inferred)?;
    Ok(TomographyResult {
        reconstructed: reconstruct_state(&set)?,
        total_survival,
        runs,
        set,
    })
}

/// Exact expectations of `operators` in `psi`, as a tomography set.
pub fn exact_tomography_set(
    psi: &StateVector,
    operators: &[HermitianOperator],
) -> Result<TomographySet> {
    let values = operators
        .iter()
        .map(|op| expectation(op, psi))
        .collect::<Result<Vec<_>>>()?;
    TomographySet::new(operators.to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::random;
    use crate::seeding::substream;

    fn pauli() -> Vec<HermitianOperator> {
        vec![
            HermitianOperator::pauli_x(),
            HermitianOperator::pauli_y(),
            HermitianOperator::pauli_z(),
        ]
    }

    #[test]
    fn eigenstate_shift_is_exact() {
        let params = ProtocolParams::default();
        let r = protective_measure(
            &StateVector::one(),
            &HermitianOperator::pauli_z(),
            &params,
            Mode::Deterministic,
        )
        .unwrap();
        assert!((r.pointer_mean_shift + 400.0 * 5e-3).abs() < 1e-9);
        assert!((r.survival_probability - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_steps() {
        let params = ProtocolParams::new(0, 5e-3, 1.0).unwrap();
        let r = protective_measure(
            &StateVector::plus(),
            &HermitianOperator::pauli_z(),
            &params,
            Mode::Deterministic,
        )
        .unwrap();
        assert_eq!(r.pointer_mean_shift, 0.0);
        assert_eq!(r.survival_probability, 1.0);
        assert_eq!(r.inferred_expectation, None);
    }

    #[test]
    fn thirty_degree_state() {
        let psi = StateVector::real_qubit(std::f64::consts::PI / 6.0);
        let params = ProtocolParams::default();
        let r = protective_measure(&psi, &HermitianOperator::pauli_z(), &params, Mode::Deterministic)
            .unwrap();
        let inferred = r.inferred_expectation.unwrap();
        assert!((inferred - 0.5).abs() < 2e-3, "inferred {inferred}");
        assert!(r.survival_probability >= 0.99);
        // Half the coupling at twice the steps lands at least as close.
        let half = ProtocolParams::new(800, 2.5e-3, 1.0).unwrap();
        let r2 = protective_measure(&psi, &HermitianOperator::pauli_z(), &half, Mode::Deterministic)
            .unwrap();
        assert!((r2.inferred_expectation.unwrap() - 0.5).abs() <= (inferred - 0.5).abs() + 1e-12);
        assert!(r2.survival_probability >= r.survival_probability);
    }

    #[test]
    fn survival_is_monotone() {
        let psi = StateVector::real_qubit(0.3);
        let params = ProtocolParams::new(100, 2e-2, 1.0).unwrap();
        let r = protective_measure(&psi, &HermitianOperator::pauli_x(), &params, Mode::Deterministic)
            .unwrap();
        for w in r.per_step_log.windows(2) {
            assert!(w[1].survival <= w[0].survival);
        }
    }

    #[test]
    fn wraparound_is_checked_for_total_shift() {
        let params = ProtocolParams::new(10_000, 5e-3, 1.0).unwrap();
        let r = protective_measure(
            &StateVector::zero(),
            &HermitianOperator::pauli_z(),
            &params,
            Mode::Deterministic,
        );
        assert!(matches!(r, Err(Error::Wraparound { .. })));
    }

    #[test]
    fn sampled_mode_reports_abort_without_error() {
        // Strong coupling makes protection failures likely.
        let params = ProtocolParams::new(40, 0.2, 1.0).unwrap();
        let psi = StateVector::plus();
        let mut aborted = 0;
        for seed in 0..20 {
            let r = protective_measure(&psi, &HermitianOperator::pauli_z(), &params, Mode::Sampled { seed })
                .unwrap();
            match r.outcome {
                RunOutcome::Aborted { step } => {
                    aborted += 1;
                    assert!((1..=40).contains(&step));
                    assert!(r.inferred_expectation.is_none());
                }
                RunOutcome::Completed => assert!(r.inferred_expectation.is_some()),
                RunOutcome::Annihilated => unreachable!(),
            }
        }
        assert!(aborted > 0);
        let a = protective_measure(&psi, &HermitianOperator::pauli_z(), &params, Mode::Sampled { seed: 3 })
            .unwrap();
        let b = protective_measure(&psi, &HermitianOperator::pauli_z(), &params, Mode::Sampled { seed: 3 })
            .unwrap();
        assert_eq!(a.outcome, b.outcome);
    }

    #[test]
    fn leak_examples() {
        let params = ProtocolParams::new(100, 1e-4, 1.0).unwrap();
        let x = HermitianOperator::pauli_x();
        let leak = protection_leak(&StateVector::plus(), &StateVector::zero(), &x, &params).unwrap();
        assert!((leak.survival - 0.5).abs() < 1e-6, "survival {}", leak.survival);
        let s = leak.surviving_state.unwrap();
        assert!((crate::hilbert::inner_product(&s, &StateVector::zero()).unwrap().norm() - 1.0).abs() < 1e-9);

        let same = protection_leak(&StateVector::zero(), &StateVector::zero(), &x, &params).unwrap();
        assert!((same.survival - 1.0).abs() < 1e-6);

        let none = protection_leak(&StateVector::one(), &StateVector::zero(), &HermitianOperator::pauli_z(), &params)
            .unwrap();
        assert_eq!(none.survival, 0.0);
        assert!(none.surviving_state.is_none());
    }

    #[test]
    fn reconstruct_bloch_poles() {
        let set = TomographySet::new(pauli(), vec![1.0, 0.0, 0.0]).unwrap();
        assert!(reconstruct_state(&set).unwrap().equal_up_to_phase(&StateVector::plus()));
        let set = TomographySet::new(pauli(), vec![0.0, 0.0, 1.0]).unwrap();
        assert!(reconstruct_state(&set).unwrap().equal_up_to_phase(&StateVector::zero()));
    }

    #[test]
    fn reconstruct_random_qutrit() {
        let mut rng = substream(21, 0);
        let psi = random::haar_state(3, &mut rng);
        let set = exact_tomography_set(&psi, &gell_mann(3)).unwrap();
        let out = reconstruct_state(&set).unwrap();
        assert!(out.fidelity(&psi).unwrap() >= 1.0 - 1e-9);
    }

    #[test]
    fn incomplete_and_mixed_inputs_rejected() {
        let r = TomographySet::new(vec![HermitianOperator::pauli_z()], vec![1.0]);
        assert!(matches!(
            r,
            Err(Error::NotInformationallyComplete { rank: 2, required: 4 })
        ));
        let set = TomographySet::new(pauli(), vec![0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(reconstruct_state(&set), Err(Error::NotPure { .. })));
    }

    #[test]
    fn gell_mann_qubit_is_pauli() {
        let gm = gell_mann(2);
        assert_eq!(gm[0], HermitianOperator::pauli_x());
        assert_eq!(gm[1], HermitianOperator::pauli_y());
        assert_eq!(gm[2], HermitianOperator::pauli_z());
        for d in 2..=4 {
            let gm = gell_mann(d);
            assert_eq!(gm.len(), d * d - 1);
            for g in &gm {
                assert!(g.trace().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tomography_of_basis_states() {
        let params = ProtocolParams::default();
        for psi in [StateVector::zero(), StateVector::plus()] {
            let t = protective_tomography(&psi, &pauli(), &params).unwrap();
            assert!(t.reconstructed.fidelity(&psi).unwrap() >= 1.0 - 1e-6);
            assert!(t.total_survival > 0.99);
        }
    }

    #[test]
    fn step_log_csv() {
        let params = ProtocolParams::new(5, 1e-2, 1.0).unwrap();
        let r = protective_measure(&StateVector::plus(), &HermitianOperator::pauli_z(), &params, Mode::Deterministic)
            .unwrap();
        let mut buf = Vec::new();
        r.write_log_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,survival,pointer_mean\n"));
        assert_eq!(text.lines().count(), 7);
    }
}
