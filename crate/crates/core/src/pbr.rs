//! Antidistinguishing measurement for `{|0⟩, |+⟩}` pairs, EPR steering on
//! the singlet, and the unitary overlap invariant.

use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    apply_matrix, dot, eigendecompose, inner_product, orthonormality_deviation, projector,
    tensor, EigenDecomposition, HermitianOperator, StateVector, C64,
};
use crate::measurement::{born_probabilities, eigenspace_probabilities, strong_measure};
use crate::seeding;

/// Orthonormality, completeness and forbidden-outcome tolerance.
pub const PBR_TOL: f64 = 1e-12;
/// Unitarity tolerance for [`overlap_preservation_check`].
pub const UNITARY_TOL: f64 = 1e-10;

const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// The four product preparations, in the order `00, 0+, +0, ++`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Preparation {
    #[serde(rename = "00")]
    ZeroZero,
    #[serde(rename = "0+")]
    ZeroPlus,
    #[serde(rename = "+0")]
    PlusZero,
    #[serde(rename = "++")]
    PlusPlus,
}

impl Preparation {
    pub const ALL: [Preparation; 4] = [
        Preparation::ZeroZero,
        Preparation::ZeroPlus,
        Preparation::PlusZero,
        Preparation::PlusPlus,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Preparation::ZeroZero => "00",
            Preparation::ZeroPlus => "0+",
            Preparation::PlusZero => "+0",
            Preparation::PlusPlus => "++",
        }
    }

    /// `(first is |+⟩, second is |+⟩)`
    pub fn factors(self) -> (bool, bool) {
        match self {
            Preparation::ZeroZero => (false, false),
            Preparation::ZeroPlus => (false, true),
            Preparation::PlusZero => (true, false),
            Preparation::PlusPlus => (true, true),
        }
    }

    pub fn state(self) -> StateVector {
        let pick = |plus| if plus { StateVector::plus() } else { StateVector::zero() };
        let (a, b) = self.factors();
        tensor(&pick(a), &pick(b)).expect("two qubits are within the cap")
    }
}

impl fmt::Display for Preparation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// The four-outcome entangled measurement; outcome `k` is `|ξ_{k+1}⟩`.
#[derive(Clone, Debug)]
pub struct PbrBasis {
    states: [StateVector; 4],
    forbidden_map: [usize; 4],
    measurement: EigenDecomposition,
}

impl PbrBasis {
    pub fn states(&self) -> &[StateVector; 4] {
        &self.states
    }

    /// Outcome index that preparation `p` can never produce.
    pub fn forbidden(&self, p: Preparation) -> usize {
        self.forbidden_map[p.index()]
    }

    pub fn forbidden_map(&self) -> [usize; 4] {
        self.forbidden_map
    }

    /// Measurement with eigenvalue `k+1` on `|ξ_{k+1}⟩`.
    pub fn measurement(&self) -> &EigenDecomposition {
        &self.measurement
    }

    /// Born distribution over `(ξ₁..ξ₄)` for a preparation.
    pub fn born(&self, p: Preparation) -> [f64; 4] {
        let probs = born_probabilities(&p.state(), &self.measurement)
            .expect("preparation and basis are both two-qubit");
        [probs[0], probs[1], probs[2], probs[3]]
    }

    /// Largest deviation of `Σ|ξᵢ⟩⟨ξᵢ|` from the identity.
    pub fn completeness_deviation(&self) -> f64 {
        let mut sum = DMatrix::<C64>::zeros(4, 4);
        for s in &self.states {
            sum += projector(s).matrix();
        }
        (sum - DMatrix::<C64>::identity(4, 4))
            .iter()
            .fold(0.0f64, |m, z| m.max(z.norm()))
    }

    pub fn orthonormality_deviation(&self) -> f64 {
        orthonormality_deviation(&self.states)
    }
}

fn pair(a: &StateVector, b: &StateVector, c: &StateVector, d: &StateVector) -> StateVector {
    let ab = tensor(a, b).expect("two qubits");
    let cd = tensor(c, d).expect("two qubits");
    let amps = ab
        .amplitudes()
        .iter()
        .zip(cd.amplitudes())
        .map(|(x, y)| (x + y) * S)
        .collect();
    StateVector::new(amps).expect("orthogonal product pair sums to a unit vector")
}

/// Builds the basis and derives which outcome each preparation forbids.
pub fn pbr_basis() -> Result<PbrBasis> {
    let (zero, one) = (StateVector::zero(), StateVector::one());
    let (plus, minus) = (StateVector::plus(), StateVector::minus());
    let states = [
        pair(&zero, &one, &one, &zero),
        pair(&zero, &minus, &one, &plus),
        pair(&plus, &one, &minus, &zero),
        pair(&plus, &minus, &minus, &plus),
    ];
    let deviation = orthonormality_deviation(&states);
    if deviation >= PBR_TOL {
        return Err(Error::NotOrthonormal { deviation });
    }

    let mut forbidden_map = [usize::MAX; 4];
    for p in Preparation::ALL {
        let prep = p.state();
        let zeros: Vec<usize> = states
            .iter()
            .enumerate()
            .filter(|(_, s)| dot(s.amplitudes(), prep.amplitudes()).norm() < PBR_TOL)
            .map(|(k, _)| k)
            .collect();
        if zeros.len() != 1 {
            return Err(Error::InvalidDistribution {
                context: format!("preparation {p}"),
                reason: format!("expected exactly one forbidden outcome, found {}", zeros.len()),
            });
        }
        forbidden_map[p.index()] = zeros[0];
    }
    let mut seen = [false; 4];
    for &k in &forbidden_map {
        seen[k] = true;
    }
    if !seen.iter().all(|&s| s) {
        return Err(Error::InvalidDistribution {
            context: "forbidden map".into(),
            reason: format!("{forbidden_map:?} is not a permutation"),
        });
    }

    let measurement =
        EigenDecomposition::from_basis(vec![1.0, 2.0, 3.0, 4.0], states.to_vec())?;
    let basis = PbrBasis {
        states,
        forbidden_map,
        measurement,
    };
    let completeness = basis.completeness_deviation();
    if completeness >= PBR_TOL {
        return Err(Error::NotOrthonormal {
            deviation: completeness,
        });
    }
    Ok(basis)
}

/// Outcome counts per preparation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PbrCounts {
    pub trials: u64,
    pub seed: u64,
    pub preparations: Vec<PreparationCounts>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparationCounts {
    pub preparation: Preparation,
    pub trials: u64,
    pub forbidden_outcome: usize,
    pub counts: [u64; 4],
}

pub const PBR_CSV_HEADER: [&str; 5] = ["preparation", "xi1", "xi2", "xi3", "xi4"];

impl PbrCounts {
    pub fn get(&self, p: Preparation) -> &PreparationCounts {
        &self.preparations[p.index()]
    }

    pub fn forbidden_total(&self) -> u64 {
        self.preparations
            .iter()
            .map(|c| c.counts[c.forbidden_outcome])
            .sum()
    }

    /// Checks the record's own invariants.
    pub fn validate(&self) -> Result<()> {
        let schema = |reason: String| Error::Schema {
            file: "pbr counts".into(),
            reason,
        };
        if self.preparations.len() != 4 {
            return Err(schema(format!("{} preparations", self.preparations.len())));
        }
        let mut total = 0;
        for (p, c) in Preparation::ALL.iter().zip(&self.preparations) {
            if c.preparation != *p {
                return Err(schema(format!("preparation order: {} at {}", c.preparation, p)));
            }
            if c.counts.iter().sum::<u64>() != c.trials {
                return Err(schema(format!("counts for {p} do not sum to its trials")));
            }
            if c.forbidden_outcome >= 4 || c.counts[c.forbidden_outcome] != 0 {
                return Err(schema(format!("forbidden outcome observed for {p}")));
            }
            total += c.trials;
        }
        if total != self.trials {
            return Err(schema("per-preparation trials do not sum to total".into()));
        }
        Ok(())
    }

    /// Contingency table: one row per preparation, one column per outcome.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(PBR_CSV_HEADER)?;
        for c in &self.preparations {
            let mut row = vec![c.preparation.label().to_string()];
            row.extend(c.counts.iter().map(|n| n.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn validate_weights(weights: &[f64]) -> Result<()> {
    let bad = |reason: String| Error::InvalidDistribution {
        context: "mixture weights".into(),
        reason,
    };
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(bad(format!("{weights:?} has negative or non-finite entries")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(bad(format!("weights sum to {sum}")));
    }
    Ok(())
}

/// Draws an index from `weights` using one uniform variate.
pub(crate) fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if *w > 0.0 && u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Samples a preparation from the mixture for every trial, then measures it
/// in the `ξ` basis. Trial `i` uses substream `i` of `seed`.
pub fn pbr_experiment(trials: u64, weights: [f64; 4], seed: u64) -> Result<PbrCounts> {
    validate_weights(&weights)?;
    let basis = pbr_basis()?;
    let states: Vec<StateVector> = Preparation::ALL.iter().map(|p| p.state()).collect();
    let table = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<[[u64; 4]; 4]> {
            use rand::Rng;
            let mut rng = seeding::substream(seed, trial);
            let p = sample_index(&weights, rng.random::<f64>());
            let outcome = strong_measure(&states[p], basis.measurement(), &mut rng)?;
            let mut t = [[0u64; 4]; 4];
            t[p][outcome.outcome_index] = 1;
            Ok(t)
        })
        .try_reduce(
            || [[0u64; 4]; 4],
            |mut a, b| {
                for (ra, rb) in a.iter_mut().zip(b) {
                    for (x, y) in ra.iter_mut().zip(rb) {
                        *x += y;
                    }
                }
                Ok(a)
            },
        )?;
    let preparations = Preparation::ALL
        .iter()
        .map(|&p| PreparationCounts {
            preparation: p,
            trials: table[p.index()].iter().sum(),
            forbidden_outcome: basis.forbidden(p),
            counts: table[p.index()],
        })
        .collect();
    Ok(PbrCounts {
        trials,
        seed,
        preparations,
    })
}

/// Alice's local observable on the shared singlet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AliceBasis {
    /// `|1⟩⟨1| − |0⟩⟨0|`
    Z,
    /// `|+⟩⟨+| − |−⟩⟨−|`
    X,
}

impl AliceBasis {
    pub fn observable(self) -> HermitianOperator {
        match self {
            AliceBasis::Z => HermitianOperator::pauli_z()
                .combine(-1.0, &HermitianOperator::pauli_z(), 0.0)
                .expect("same dimension"),
            AliceBasis::X => HermitianOperator::pauli_x(),
        }
    }
}

/// `(|0⟩_A|1⟩_B − |1⟩_A|0⟩_B)/√2`.
pub fn singlet() -> StateVector {
    StateVector::new(vec![
        C64::new(0.0, 0.0),
        C64::new(S, 0.0),
        C64::new(-S, 0.0),
        C64::new(0.0, 0.0),
    ])
    .expect("unit vector")
}

#[derive(Clone, Debug)]
pub struct SteeringOutcome {
    pub alice_outcome: f64,
    pub branch_probability: f64,
    pub bob_conditional: StateVector,
    /// Trace distance of Bob's outcome-averaged state from `1/2`.
    pub bob_marginal_check: f64,
}

#[derive(Clone, Debug)]
struct SteeringBranch {
    eigenvalue: f64,
    alice: StateVector,
    probability: f64,
    bob: StateVector,
}

/// All of Alice's outcome branches with exact probabilities and Bob's
/// conditional states.
fn steering_branches(basis: AliceBasis) -> Result<(EigenDecomposition, Vec<SteeringBranch>)> {
    let alice = eigendecompose(&basis.observable())?;
    let joint_op = basis.observable().kron(&HermitianOperator::identity(2)?)?;
    let joint = eigendecompose(&joint_op)?;
    let state = singlet();
    let mut branches = Vec::new();
    for (space, probability) in eigenspace_probabilities(&state, &joint)? {
        let k = alice
            .eigenvalues()
            .iter()
            .position(|a| (a - space.eigenvalue).abs() < 1e-10)
            .expect("joint eigenvalues come from Alice's observable");
        let collapsed = lueders(&state, &joint, &space.indices)?;
        let alice_state = alice.eigenvectors()[k].clone();
        branches.push(SteeringBranch {
            eigenvalue: space.eigenvalue,
            bob: bob_factor(&collapsed, &alice_state)?,
            alice: alice_state,
            probability,
        });
    }
    Ok((joint, branches))
}

fn lueders(state: &StateVector, basis: &EigenDecomposition, indices: &[usize]) -> Result<StateVector> {
    let mut out = vec![C64::new(0.0, 0.0); state.dim()];
    for &i in indices {
        let v = &basis.eigenvectors()[i];
        let c = dot(v.amplitudes(), state.amplitudes());
        for (o, vi) in out.iter_mut().zip(v.amplitudes()) {
            *o += vi * c;
        }
    }
    StateVector::normalized(out)
}

/// Bob's factor of `|a⟩⊗|b⟩`, obtained by contracting with `⟨a|`.
fn bob_factor(collapsed: &StateVector, alice: &StateVector) -> Result<StateVector> {
    let amps = collapsed.amplitudes();
    let bob = (0..2)
        .map(|j| {
            (0..2)
                .map(|i| alice.amplitudes()[i].conj() * amps[i * 2 + j])
                .sum()
        })
        .collect();
    StateVector::normalized(bob)
}

fn marginal_check(branches: &[SteeringBranch]) -> Result<f64> {
    let mut rho = DMatrix::<C64>::zeros(2, 2);
    for b in branches {
        rho += projector(&b.bob).matrix().scale(b.probability);
    }
    let diff = rho - DMatrix::<C64>::identity(2, 2).scale(0.5);
    let eig = eigendecompose(&HermitianOperator::new(diff)?)?;
    Ok(0.5 * eig.eigenvalues().iter().map(|e| e.abs()).sum::<f64>())
}

/// One run of Alice's measurement on the singlet.
pub fn epr_steering(basis: AliceBasis, seed: u64) -> Result<SteeringOutcome> {
    let (joint, branches) = steering_branches(basis)?;
    let mut rng = seeding::substream(seed, 0);
    let sample = strong_measure(&singlet(), &joint, &mut rng)?;
    let branch = &branches[sample.outcome_index];
    Ok(SteeringOutcome {
        alice_outcome: sample.eigenvalue,
        branch_probability: sample.probability,
        bob_conditional: bob_factor(&sample.collapsed, &branch.alice)?,
        bob_marginal_check: marginal_check(&branches)?,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SteeringBranchRecord {
    pub alice_outcome: f64,
    pub probability: f64,
    pub count: u64,
    pub bob_state: StateVector,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SteeringBatch {
    pub basis: AliceBasis,
    pub trials: u64,
    pub seed: u64,
    pub branches: Vec<SteeringBranchRecord>,
    pub bob_marginal_check: f64,
}

/// Repeats the steering measurement; trial `i` uses substream `i`.
pub fn steering_batch(basis: AliceBasis, trials: u64, seed: u64) -> Result<SteeringBatch> {
    let (joint, branches) = steering_branches(basis)?;
    let state = singlet();
    let counts = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<u64>> {
            let mut rng = seeding::substream(seed, trial);
            let s = strong_measure(&state, &joint, &mut rng)?;
            let mut c = vec![0u64; branches.len()];
            c[s.outcome_index] = 1;
            Ok(c)
        })
        .try_reduce(
            || vec![0u64; branches.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    Ok(SteeringBatch {
        basis,
        trials,
        seed,
        bob_marginal_check: marginal_check(&branches)?,
        branches: branches
            .into_iter()
            .zip(counts)
            .map(|(b, count)| SteeringBranchRecord {
                alice_outcome: b.eigenvalue,
                probability: b.probability,
                count,
                bob_state: b.bob,
            })
            .collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapCheck {
    pub before: f64,
    pub after: f64,
}

/// Largest entry of `U†U − 1`.
pub fn unitarity_deviation(u: &DMatrix<C64>) -> f64 {
    let n = u.nrows();
    (u.adjoint() * u - DMatrix::<C64>::identity(n, n))
        .iter()
        .fold(0.0f64, |m, z| m.max(z.norm()))
}

/// `|⟨ready⊗s1|ready⊗s2⟩|` before and after applying `u` (device ⊗ system)
/// to both branches.
pub fn overlap_preservation_check(
    u: &DMatrix<C64>,
    s1: &StateVector,
    s2: &StateVector,
    ready: &StateVector,
) -> Result<OverlapCheck> {
    if s1.dim() != s2.dim() {
        return Err(Error::DimensionMismatch {
            left: s1.dim(),
            right: s2.dim(),
        });
    }
    let dim = ready.dim() * s1.dim();
    if u.nrows() != dim || u.ncols() != dim {
        return Err(Error::DimensionMismatch {
            left: u.nrows(),
            right: dim,
        });
    }
    let deviation = unitarity_deviation(u);
    if !(deviation < UNITARY_TOL) {
        return Err(Error::NonUnitary { deviation });
    }
    let a = tensor(ready, s1)?;
    let b = tensor(ready, s2)?;
    let before = inner_product(&a, &b)?.norm();
    let ua = apply_matrix(u, a.amplitudes());
    let ub = apply_matrix(u, b.amplitudes());
    let after = dot(&ua, &ub).norm();
    Ok(OverlapCheck { before, after })
}
