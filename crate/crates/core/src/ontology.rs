//! Finite ontological models: hidden states `λ`, preparation distributions
//! over them, and response functions that depend on `λ` alone.

pub mod lp;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{eigendecompose, EigenDecomposition, HermitianOperator, StateVector};
use crate::measurement::eigenspace_probabilities;
use crate::pbr::{self, pbr_basis, sample_index, AliceBasis, Preparation};
use crate::seeding;
use lp::{LpOutcome, SimplexOptions, StandardForm};

/// Tolerance on the normalization of every probability vector.
pub const DIST_TOL: f64 = 1e-12;
/// Overlap below which two preparations count as ontically distinct.
pub const ONTIC_TOL: f64 = 1e-12;
/// Largest admissible duality gap for a certified bound.
pub const CERTIFY_TOL: f64 = 1e-6;
/// Feasibility slack allowed when certifying an LP solution.
pub const LP_FEASIBILITY_TOL: f64 = 1e-9;

/// Recorded in the assumptions of every pair model built here.
pub const PREPARATION_INDEPENDENCE: &str =
    "preparation independence: pair distributions are products of single-system distributions";

/// Measurement id of the four-outcome entangled measurement in pair models.
pub const PBR_MEASUREMENT: &str = "xi";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LambdaSpace {
    labels: Vec<String>,
}

impl LambdaSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty);
        }
        let unique: BTreeSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(Error::InvalidParameter("duplicate lambda labels".into()));
        }
        Ok(LambdaSpace { labels })
    }

    pub fn indexed(size: usize) -> Result<Self> {
        Self::new((0..size).map(|i| format!("l{i}")).collect())
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

impl TryFrom<Vec<String>> for LambdaSpace {
    type Error = Error;
    fn try_from(labels: Vec<String>) -> Result<Self> {
        Self::new(labels)
    }
}

impl From<LambdaSpace> for Vec<String> {
    fn from(l: LambdaSpace) -> Self {
        l.labels
    }
}

pub(crate) fn check_distribution(context: &str, p: &[f64], len: usize) -> Result<()> {
    let bad = |reason: String| Error::InvalidDistribution {
        context: context.to_string(),
        reason,
    };
    if p.len() != len {
        return Err(bad(format!("length {} but expected {len}", p.len())));
    }
    if let Some(v) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(bad(format!("entry {v} is negative or non-finite")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > DIST_TOL {
        return Err(bad(format!("sums to {sum}")));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelJson {
    lambda: LambdaSpace,
    preparations: BTreeMap<String, Vec<f64>>,
    responses: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    assumptions: Vec<String>,
}

/// `responses[m][λ]` is the outcome distribution of measurement `m` given `λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelJson", into = "ModelJson")]
pub struct OntologicalModel {
    lambda: LambdaSpace,
    preparations: BTreeMap<String, Vec<f64>>,
    responses: BTreeMap<String, Vec<Vec<f64>>>,
    assumptions: Vec<String>,
}

impl TryFrom<ModelJson> for OntologicalModel {
    type Error = Error;
    fn try_from(j: ModelJson) -> Result<Self> {
        let mut m = OntologicalModel::new(j.lambda, j.preparations, j.responses)?;
        m.assumptions = j.assumptions;
        Ok(m)
    }
}

impl From<OntologicalModel> for ModelJson {
    fn from(m: OntologicalModel) -> Self {
        ModelJson {
            lambda: m.lambda,
            preparations: m.preparations,
            responses: m.responses,
            assumptions: m.assumptions,
        }
    }
}

impl OntologicalModel {
    pub fn new(
        lambda: LambdaSpace,
        preparations: BTreeMap<String, Vec<f64>>,
        responses: BTreeMap<String, Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n = lambda.size();
        for (id, p) in &preparations {
            check_distribution(&format!("preparation {id:?}"), p, n)?;
        }
        for (id, rows) in &responses {
            if rows.len() != n {
                return Err(Error::InvalidDistribution {
                    context: format!("response {id:?}"),
                    reason: format!("{} rows for {n} lambda values", rows.len()),
                });
            }
            let outcomes = rows[0].len();
            if outcomes == 0 {
                return Err(Error::InvalidDistribution {
                    context: format!("response {id:?}"),
                    reason: "no outcomes".into(),
                });
            }
            for (l, row) in lambda.labels().iter().zip(rows) {
                check_distribution(&format!("response {id:?} at lambda {l:?}"), row, outcomes)?;
            }
        }
        Ok(OntologicalModel {
            lambda,
            preparations,
            responses,
            assumptions: Vec::new(),
        })
    }

    pub fn with_assumption(mut self, assumption: impl Into<String>) -> Self {
        let a = assumption.into();
        if !self.assumptions.contains(&a) {
            self.assumptions.push(a);
        }
        self
    }

    pub fn lambda(&self) -> &LambdaSpace {
        &self.lambda
    }

    pub fn preparations(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.preparations
    }

    pub fn responses(&self) -> &BTreeMap<String, Vec<Vec<f64>>> {
        &self.responses
    }

    pub fn assumptions(&self) -> &[String] {
        &self.assumptions
    }

    pub fn preparation(&self, id: &str) -> Result<&[f64]> {
        self.preparations
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn response(&self, id: &str) -> Result<&[Vec<f64>]> {
        self.responses
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn outcome_count(&self, meas: &str) -> Result<usize> {
        Ok(self.response(meas)?[0].len())
    }
}

/// `P(k) = Σ_λ p_prep(λ) · response(k | λ)`.
pub fn predict(model: &OntologicalModel, prep: &str, meas: &str) -> Result<Vec<f64>> {
    let p = model.preparation(prep)?;
    let rows = model.response(meas)?;
    let mut out = vec![0.0; rows[0].len()];
    for (w, row) in p.iter().zip(rows) {
        for (o, r) in out.iter_mut().zip(row) {
            *o += w * r;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub preparations: [String; 2],
    pub variational_overlap: f64,
    pub is_ontic_pair: bool,
}

/// `Σ_λ min(p₁(λ), p₂(λ))`.
pub fn overlap(model: &OntologicalModel, prep1: &str, prep2: &str) -> Result<OverlapReport> {
    let a = model.preparation(prep1)?;
    let b = model.preparation(prep2)?;
    let v: f64 = a.iter().zip(b).map(|(x, y)| x.min(*y)).sum();
    let v = v.clamp(0.0, 1.0);
    Ok(OverlapReport {
        preparations: [prep1.to_string(), prep2.to_string()],
        variational_overlap: v,
        is_ontic_pair: v < ONTIC_TOL,
    })
}

pub const LAMBDA_SHARED: &str = "lambda_bar";
pub const LAMBDA_ZERO: &str = "lambda_0";
pub const LAMBDA_PLUS: &str = "lambda_plus";

/// Qubit model in which `|0⟩` and `|+⟩` share the hidden state `λ̄` with
/// weight `q` and otherwise sit on private states.
pub fn build_shared_reality_model(q: f64) -> Result<OntologicalModel> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!("q = {q} is outside [0, 1]")));
    }
    let lambda = LambdaSpace::new(vec![
        LAMBDA_SHARED.into(),
        LAMBDA_ZERO.into(),
        LAMBDA_PLUS.into(),
    ])?;
    let preparations = BTreeMap::from([
        ("0".to_string(), vec![q, 1.0 - q, 0.0]),
        ("+".to_string(), vec![q, 0.0, 1.0 - q]),
    ]);
    OntologicalModel::new(lambda, preparations, BTreeMap::new())
}

/// Single-system preparation ids making up each pair preparation.
pub fn pair_factors(p: Preparation) -> (&'static str, &'static str) {
    let id = |plus| if plus { "+" } else { "0" };
    let (a, b) = p.factors();
    (id(a), id(b))
}

fn product(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

/// Two independent copies of `single`, with pair preparations `00, 0+, +0, ++`
/// and the four-outcome measurement given by `responses` (one row per pair λ).
pub fn pbr_pair_model(
    single: &OntologicalModel,
    responses: Option<Vec<Vec<f64>>>,
) -> Result<OntologicalModel> {
    let labels = single.lambda().labels();
    let lambda = LambdaSpace::new(
        labels
            .iter()
            .flat_map(|a| labels.iter().map(move |b| format!("{a}|{b}")))
            .collect(),
    )?;
    let mut preparations = BTreeMap::new();
    for p in Preparation::ALL {
        let (a, b) = pair_factors(p);
        preparations.insert(
            p.label().to_string(),
            product(single.preparation(a)?, single.preparation(b)?),
        );
    }
    let responses = match responses {
        Some(rows) => BTreeMap::from([(PBR_MEASUREMENT.to_string(), rows)]),
        None => BTreeMap::new(),
    };
    Ok(OntologicalModel::new(lambda, preparations, responses)?
        .with_assumption(PREPARATION_INDEPENDENCE))
}

/// Largest deviation of the pair distributions from products of `single`'s.
pub fn check_preparation_independence(
    pair: &OntologicalModel,
    single: &OntologicalModel,
) -> Result<f64> {
    if !pair.assumptions().iter().any(|a| a == PREPARATION_INDEPENDENCE) {
        return Err(Error::InvalidParameter(
            "pair model does not declare preparation independence".into(),
        ));
    }
    let n = single.lambda().size();
    if pair.lambda().size() != n * n {
        return Err(Error::DimensionMismatch {
            left: pair.lambda().size(),
            right: n * n,
        });
    }
    let mut worst = 0.0f64;
    for p in Preparation::ALL {
        let (a, b) = pair_factors(p);
        let expected = product(single.preparation(a)?, single.preparation(b)?);
        for (x, y) in pair.preparation(p.label())?.iter().zip(&expected) {
            worst = worst.max((x - y).abs());
        }
    }
    if worst > DIST_TOL {
        return Err(Error::InvalidDistribution {
            context: "pair preparations".into(),
            reason: format!("differ from product distributions by {worst:e}"),
        });
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseTable {
    pub lambda: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationBound {
    pub q: Option<f64>,
    pub resolution: u32,
    /// Dual objective of the certified LP, a lower bound on the optimum.
    pub violation_lower_bound: f64,
    /// Worst forbidden probability under `witnessing_responses`.
    pub violation_upper_bound: f64,
    pub duality_gap: f64,
    pub grid_upper_bound: f64,
    /// Forbidden-outcome probability of each preparation under the witness.
    pub forbidden_probabilities: [f64; 4],
    pub sum_forbidden: f64,
    pub mean_forbidden: f64,
    pub witnessing_responses: ResponseTable,
    pub lp_pivots: usize,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ViolationOptions {
    pub simplex: SimplexOptions,
}

struct PairProblem {
    weights: [Vec<f64>; 4],
    forbidden: [usize; 4],
    lambda: Vec<String>,
}

impl PairProblem {
    fn new(single: &OntologicalModel) -> Result<Self> {
        let pair = pbr_pair_model(single, None)?;
        check_preparation_independence(&pair, single)?;
        let basis = pbr_basis()?;
        let weights = Preparation::ALL.map(|p| pair.preparation(p.label()).map(<[f64]>::to_vec));
        let [a, b, c, d] = weights;
        Ok(PairProblem {
            weights: [a?, b?, c?, d?],
            forbidden: Preparation::ALL.map(|p| basis.forbidden(p)),
            lambda: pair.lambda().labels().to_vec(),
        })
    }

    fn size(&self) -> usize {
        self.lambda.len()
    }

    fn forbidden_probabilities(&self, rows: &[Vec<f64>]) -> [f64; 4] {
        std::array::from_fn(|p| {
            self.weights[p]
                .iter()
                .zip(rows)
                .map(|(w, r)| w * r[self.forbidden[p]])
                .sum()
        })
    }

    /// `(max, sum)` of the forbidden probabilities, compared lexicographically.
    fn score(&self, rows: &[Vec<f64>]) -> (f64, f64) {
        let f = self.forbidden_probabilities(rows);
        (f.iter().cloned().fold(0.0, f64::max), f.iter().sum())
    }

    fn grid_search(&self, resolution: u32) -> (f64, Vec<Vec<f64>>) {
        let candidates = simplex_grid(4, resolution);
        let mut rows = vec![candidates[0].clone(); self.size()];
        let mut best = self.score(&rows);
        for _ in 0..64 {
            let mut improved = false;
            for l in 0..self.size() {
                let (score, idx) = candidates
                    .par_iter()
                    .enumerate()
                    .map(|(i, cand)| {
                        let mut trial = rows.clone();
                        trial[l] = cand.clone();
                        (self.score(&trial), i)
                    })
                    .reduce(
                        || ((f64::INFINITY, f64::INFINITY), usize::MAX),
                        |a, b| if better(b, a) { b } else { a },
                    );
                if score.0 < best.0 - 1e-15 || (score.0 <= best.0 + 1e-15 && score.1 < best.1 - 1e-15) {
                    rows[l] = candidates[idx].clone();
                    best = score;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        (best.0, rows)
    }

    /// Variables: `r(λ,k)` at `4λ + k`, then `t`, then four slacks.
    fn linear_program(&self) -> StandardForm {
        let n_l = self.size();
        let t = 4 * n_l;
        let cols = t + 1 + 4;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for p in 0..4 {
            let mut row = vec![0.0; cols];
            for l in 0..n_l {
                row[4 * l + self.forbidden[p]] = self.weights[p][l];
            }
            row[t] = -1.0;
            row[t + 1 + p] = 1.0;
            a.push(row);
            b.push(0.0);
        }
        for l in 0..n_l {
            let mut row = vec![0.0; cols];
            row[4 * l..4 * l + 4].iter_mut().for_each(|v| *v = 1.0);
            a.push(row);
            b.push(1.0);
        }
        let mut c = vec![0.0; cols];
        c[t] = 1.0;
        StandardForm { a, b, c }
    }
}

fn better(a: ((f64, f64), usize), b: ((f64, f64), usize)) -> bool {
    let ((a0, a1), ai) = a;
    let ((b0, b1), bi) = b;
    a0 < b0 || (a0 == b0 && (a1 < b1 || (a1 == b1 && ai < bi)))
}

/// All probability vectors of length `k` whose entries are multiples of `1/resolution`.
pub fn simplex_grid(k: usize, resolution: u32) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for i in (0..=left).rev() {
            prefix.push(i);
            rec(k - 1, left - i, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, resolution, &mut Vec::new(), &mut out);
    out.into_iter()
        .map(|v| v.into_iter().map(|n| n as f64 / resolution as f64).collect())
        .collect()
}

/// Minimum over response tables of the worst forbidden-outcome probability
/// for pairs drawn independently from [`build_shared_reality_model`]`(q)`.
pub fn pbr_min_violation(q: f64, resolution: u32) -> Result<ViolationBound> {
    let single = build_shared_reality_model(q)?;
    let mut bound = min_violation_for(&single, resolution, &ViolationOptions::default())?;
    bound.q = Some(q);
    Ok(bound)
}

/// Same as [`pbr_min_violation`] for any single-system model with
/// preparations `"0"` and `"+"`.
pub fn min_violation_for(
    single: &OntologicalModel,
    resolution: u32,
    options: &ViolationOptions,
) -> Result<ViolationBound> {
    if resolution == 0 {
        return Err(Error::InvalidParameter("resolution must be at least 1".into()));
    }
    let problem = PairProblem::new(single)?;
    let (grid_upper_bound, grid_rows) = problem.grid_search(resolution);
    let lp = problem.linear_program();
    let solution = match lp::solve(&lp, &options.simplex)? {
        LpOutcome::Optimal(s) => s,
        LpOutcome::PivotLimit { .. } => {
            return Err(Error::Indeterminate {
                lower: 0.0,
                upper: grid_upper_bound,
                gap: grid_upper_bound,
            })
        }
    };

    let n_l = problem.size();
    let mut rows: Vec<Vec<f64>> = (0..n_l)
        .map(|l| {
            let r: Vec<f64> = solution.x[4 * l..4 * l + 4].iter().map(|v| v.max(0.0)).collect();
            let s: f64 = r.iter().sum();
            r.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let lower = solution.dual_objective.max(0.0);
    let mut upper = problem.score(&rows).0;
    if grid_upper_bound < upper {
        upper = grid_upper_bound;
        rows = grid_rows;
    }
    let certified = solution.primal_residual <= LP_FEASIBILITY_TOL
        && solution.dual_infeasibility <= LP_FEASIBILITY_TOL;
    let gap = upper - lower;
    if !certified || !(gap.abs() <= CERTIFY_TOL) {
        return Err(Error::Indeterminate { lower, upper, gap });
    }
    if grid_upper_bound < lower - CERTIFY_TOL {
        return Err(Error::Indeterminate {
            lower,
            upper: grid_upper_bound,
            gap: grid_upper_bound - lower,
        });
    }
    let forbidden = problem.forbidden_probabilities(&rows);
    let sum: f64 = forbidden.iter().sum();
    Ok(ViolationBound {
        q: None,
        resolution,
        violation_lower_bound: lower,
        violation_upper_bound: upper,
        duality_gap: gap,
        grid_upper_bound,
        forbidden_probabilities: forbidden,
        sum_forbidden: sum,
        mean_forbidden: sum / 4.0,
        witnessing_responses: ResponseTable {
            lambda: problem.lambda.clone(),
            rows,
        },
        lp_pivots: solution.pivots,
    })
}

/// A set of quantum preparations together with the measurements performed on them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Product pairs `00, 0+, +0, ++` measured in the `ξ` basis.
    Pbr,
    /// `|0⟩, |1⟩, |+⟩, |−⟩` measured in the Z and X bases.
    Qubit,
    /// The singlet with Alice measuring Z or X on her half.
    Steering,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Pbr, Scenario::Qubit, Scenario::Steering];

    pub fn preparations(self) -> Vec<(String, StateVector)> {
        match self {
            Scenario::Pbr => Preparation::ALL
                .iter()
                .map(|p| (p.label().to_string(), p.state()))
                .collect(),
            Scenario::Qubit => vec![
                ("0".into(), StateVector::zero()),
                ("1".into(), StateVector::one()),
                ("+".into(), StateVector::plus()),
                ("-".into(), StateVector::minus()),
            ],
            Scenario::Steering => vec![("singlet".into(), pbr::singlet())],
        }
    }

    pub fn measurements(self) -> Result<Vec<(String, EigenDecomposition)>> {
        Ok(match self {
            Scenario::Pbr => vec![(PBR_MEASUREMENT.into(), pbr_basis()?.measurement().clone())],
            Scenario::Qubit => vec![
                ("Z".into(), eigendecompose(&HermitianOperator::pauli_z())?),
                ("X".into(), eigendecompose(&HermitianOperator::pauli_x())?),
            ],
            Scenario::Steering => {
                let id = HermitianOperator::identity(2)?;
                vec![
                    (
                        "alice_Z".into(),
                        eigendecompose(&AliceBasis::Z.observable().kron(&id)?)?,
                    ),
                    (
                        "alice_X".into(),
                        eigendecompose(&AliceBasis::X.observable().kron(&id)?)?,
                    ),
                ]
            }
        })
    }

    /// Born distribution over eigenspaces, in ascending eigenvalue order.
    pub fn born(state: &StateVector, basis: &EigenDecomposition) -> Result<Vec<f64>> {
        Ok(eigenspace_probabilities(state, basis)?
            .into_iter()
            .map(|(_, p)| p)
            .collect())
    }

    /// Outcome that quantum mechanics forbids for `prep`, if any is designated.
    pub fn forbidden_outcome(self, prep: &str) -> Result<Option<usize>> {
        if self != Scenario::Pbr {
            return Ok(None);
        }
        let basis = pbr_basis()?;
        Ok(Preparation::ALL
            .iter()
            .find(|p| p.label() == prep)
            .map(|&p| basis.forbidden(p)))
    }
}

/// Model whose hidden state is the prepared quantum state and whose
/// responses are Born probabilities.
pub fn orthodox_model(scenario: Scenario) -> Result<OntologicalModel> {
    let preps = scenario.preparations();
    let lambda = LambdaSpace::new(preps.iter().map(|(id, _)| id.clone()).collect())?;
    let n = preps.len();
    let preparations = preps
        .iter()
        .enumerate()
        .map(|(i, (id, _))| {
            let mut p = vec![0.0; n];
            p[i] = 1.0;
            (id.clone(), p)
        })
        .collect();
    let mut responses = BTreeMap::new();
    for (id, basis) in scenario.measurements()? {
        let rows = preps
            .iter()
            .map(|(_, s)| Scenario::born(s, &basis))
            .collect::<Result<Vec<_>>>()?;
        responses.insert(id, rows);
    }
    OntologicalModel::new(lambda, preparations, responses)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloCell {
    pub preparation: String,
    pub measurement: String,
    pub counts: Vec<u64>,
    pub predicted: Vec<f64>,
    pub born: Vec<f64>,
    /// Largest `|f − P| / σ` over outcomes; exact rows that are missed
    /// report `f64::MAX`.
    pub max_standard_score: f64,
    pub forbidden_outcome: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub scenario: Scenario,
    pub trials: u64,
    pub seed: u64,
    pub cells: Vec<MonteCarloCell>,
    pub max_standard_score: f64,
    pub max_forbidden_frequency: Option<f64>,
}

pub(crate) fn standard_score(count: u64, trials: u64, p: f64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let n = trials as f64;
    let f = count as f64 / n;
    let se = (p * (1.0 - p) / n).max(0.0).sqrt();
    if se > 1e-15 {
        (f - p).abs() / se
    } else if (f - p).abs() < 1e-12 {
        0.0
    } else {
        f64::MAX
    }
}

/// Samples `λ` from each scenario preparation and an outcome from the
/// model's response row, `trials` times per (preparation, measurement) cell.
/// Cell `c`, trial `t` uses substream `c·trials + t`.
pub fn monte_carlo_onto(
    model: &OntologicalModel,
    scenario: Scenario,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloReport> {
    let preps = scenario.preparations();
    let measurements = scenario.measurements()?;
    let mut cells = Vec::new();
    let mut cell_index = 0u64;
    for (prep_id, state) in &preps {
        for (meas_id, basis) in &measurements {
            let born = Scenario::born(state, basis)?;
            let predicted = predict(model, prep_id, meas_id)?;
            if predicted.len() != born.len() {
                return Err(Error::DimensionMismatch {
                    left: predicted.len(),
                    right: born.len(),
                });
            }
            let p = model.preparation(prep_id)?;
            let rows = model.response(meas_id)?;
            let k = born.len();
            let base = cell_index * trials;
            let counts = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = seeding::substream(seed, base + t);
                    let l = sample_index(p, rng.random::<f64>());
                    let o = sample_index(&rows[l], rng.random::<f64>());
                    let mut c = vec![0u64; k];
                    c[o] = 1;
                    c
                })
                .reduce(
                    || vec![0u64; k],
                    |mut a, b| {
                        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                        a
                    },
                );
            let max_standard_score = counts
                .iter()
                .zip(&predicted)
                .map(|(&c, &p)| standard_score(c, trials, p))
                .fold(0.0, f64::max);
            cells.push(MonteCarloCell {
                preparation: prep_id.clone(),
                measurement: meas_id.clone(),
                counts,
                predicted,
                born,
                max_standard_score,
                forbidden_outcome: scenario.forbidden_outcome(prep_id)?,
            });
            cell_index += 1;
        }
    }
    let max_standard_score = cells.iter().map(|c| c.max_standard_score).fold(0.0, f64::max);
    let max_forbidden_frequency = if trials > 0 {
        cells
            .iter()
            .filter_map(|c| c.forbidden_outcome.map(|f| c.counts[f] as f64 / trials as f64))
            .reduce(f64::max)
    } else {
        None
    };
    Ok(MonteCarloReport {
        scenario,
        trials,
        seed,
        cells,
        max_standard_score,
        max_forbidden_frequency,
    })
}

/// Largest overlap between the hidden-state distributions of `|0⟩` and `|1⟩`
/// over all models with the given Z-measurement responses whose predictions
/// match Born's within `tolerance`. `None` when no such model exists.
pub fn max_orthogonal_overlap(responses: &[[f64; 2]], tolerance: f64) -> Result<Option<f64>> {
    if responses.is_empty() {
        return Err(Error::Empty);
    }
    for (i, r) in responses.iter().enumerate() {
        check_distribution(&format!("response row {i}"), r, 2)?;
    }
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tolerance}")));
    }
    let n = responses.len();
    // p: 0..n, q: n..2n, m: 2n..3n, u: 3n..4n, v: 4n..5n, slacks 5n, 5n+1
    let cols = 5 * n + 2;
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut row = vec![0.0; cols];
    for l in 0..n {
        row[l] = responses[l][1];
    }
    row[5 * n] = 1.0;
    a.push(row);
    b.push(tolerance);
    let mut row = vec![0.0; cols];
    for l in 0..n {
        row[n + l] = responses[l][0];
    }
    row[5 * n + 1] = 1.0;
    a.push(row);
    b.push(tolerance);
    for offset in [0, n] {
        let mut row = vec![0.0; cols];
        row[offset..offset + n].iter_mut().for_each(|v| *v = 1.0);
        a.push(row);
        b.push(1.0);
    }
    for l in 0..n {
        let mut row = vec![0.0; cols];
        row[2 * n + l] = 1.0;
        row[3 * n + l] = 1.0;
        row[l] = -1.0;
        a.push(row);
        b.push(0.0);
        let mut row = vec![0.0; cols];
        row[2 * n + l] = 1.0;
        row[4 * n + l] = 1.0;
        row[n + l] = -1.0;
        a.push(row);
        b.push(0.0);
    }
    let mut c = vec![0.0; cols];
    c[2 * n..3 * n].iter_mut().for_each(|v| *v = -1.0);
    let lp = StandardForm { a, b, c };
    match lp::solve(&lp, &SimplexOptions::default()) {
        Ok(LpOutcome::Optimal(s)) => Ok(Some((-s.primal_objective).max(0.0))),
        Ok(LpOutcome::PivotLimit { pivots }) => Err(Error::InvalidParameter(format!(
            "simplex stopped after {pivots} pivots"
        ))),
        Err(Error::Infeasible) => Ok(None),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_single_lambda() {
        let m = OntologicalModel::new(
            LambdaSpace::indexed(1).unwrap(),
            BTreeMap::from([("a".into(), vec![1.0])]),
            BTreeMap::from([("m".into(), vec![vec![0.0, 1.0, 0.0]])]),
        )
        .unwrap();
        assert_eq!(predict(&m, "a", "m").unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(matches!(predict(&m, "b", "m"), Err(Error::UnknownId(_))));
    }

    #[test]
    fn invalid_models_rejected() {
        let bad = OntologicalModel::new(
            LambdaSpace::indexed(2).unwrap(),
            BTreeMap::from([("a".into(), vec![0.6, 0.6])]),
            BTreeMap::new(),
        );
        assert!(bad.is_err());
        assert!(LambdaSpace::new(vec![]).is_err());
    }

    #[test]
    fn shared_reality_overlap() {
        for q in [0.0, 0.5, 1.0] {
            let m = build_shared_reality_model(q).unwrap();
            let r = overlap(&m, "0", "+").unwrap();
            assert!((r.variational_overlap - q).abs() < 1e-15);
            assert_eq!(r.is_ontic_pair, q == 0.0);
            assert_eq!(overlap(&m, "0", "0").unwrap().variational_overlap, 1.0);
        }
        assert!(build_shared_reality_model(1.5).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = pbr_pair_model(&build_shared_reality_model(0.3).unwrap(), None).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.starts_with("{\"lambda\":["));
        let back: OntologicalModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<OntologicalModel>(
            r#"{"lambda":["a"],"preparations":{"x":[0.5]},"responses":{}}"#
        )
        .is_err());
    }

    #[test]
    fn min_violation_values() {
        for (q, expected) in [(0.0, 0.0), (0.5, 1.0 / 16.0), (1.0, 0.25)] {
            let b = pbr_min_violation(q, 4).unwrap();
            assert!((b.violation_lower_bound - expected).abs() < 1e-9, "{q}: {b:?}");
            assert!(b.duality_gap.abs() < 1e-9);
        }
    }

    #[test]
    fn min_violation_pivot_limit_is_indeterminate() {
        let opts = ViolationOptions {
            simplex: SimplexOptions {
                max_pivots: 0,
                ..SimplexOptions::default()
            },
        };
        let single = build_shared_reality_model(1.0).unwrap();
        assert!(matches!(
            min_violation_for(&single, 2, &opts),
            Err(Error::Indeterminate { .. })
        ));
    }

    #[test]
    fn simplex_grid_size() {
        assert_eq!(simplex_grid(4, 4).len(), 35);
        assert!(simplex_grid(4, 3).iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn orthodox_matches_born() {
        for s in Scenario::ALL {
            let m = orthodox_model(s).unwrap();
            for (prep, state) in s.preparations() {
                for (meas, basis) in s.measurements().unwrap() {
                    let p = predict(&m, &prep, &meas).unwrap();
                    let b = Scenario::born(&state, &basis).unwrap();
                    for (x, y) in p.iter().zip(&b) {
                        assert!((x - y).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn orthogonal_overlap_is_zero() {
        let r = max_orthogonal_overlap(&[[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]], 0.0)
            .unwrap()
            .unwrap();
        assert!(r < 1e-12);
        assert_eq!(max_orthogonal_overlap(&[[0.5, 0.5]], 0.0).unwrap(), None);
        let r = max_orthogonal_overlap(&[[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]], 1e-3)
            .unwrap()
            .unwrap();
        assert!((r - 2e-3).abs() < 1e-12);
    }
}
