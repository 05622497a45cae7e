//! Discrete-time Markov measurement models: partial Kraus maps, outcome
//! sampling, the particle quantum filter recursion, reset maps and record
//! concatenation.
//!
//! Outcomes are 1-based labels `y in {1..=m}`, matching the record file
//! payloads. Hypothesis probabilities are carried in log space and
//! renormalized by max-subtraction at every step so that products over
//! arbitrarily long concatenated records cannot underflow.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::operator::{
    identity, max_abs, symmetrize, CMatrix, DensityOperator, SubnormalizedState,
};
use crate::{Error, Result};

/// Measurement outcome label, `1..=m`.
pub type Outcome = usize;

/// Per-entry tolerance on the completeness sum of a partial Kraus map.
pub const COMPLETENESS_TOL: f64 = 1e-9;

/// Likelihood assigned to an outcome that is numerically impossible under a
/// hypothesis; the hypothesis collapses instead of aborting the batch.
pub const LIKELIHOOD_FLOOR: f64 = 1e-300;

/// `ln(LIKELIHOOD_FLOOR)`.
pub fn ln_likelihood_floor() -> f64 {
    LIKELIHOOD_FLOOR.ln()
}

/// A parameter hypothesis label: a scalar value or an opaque tag.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Scalar(f64),
    Tag(String),
}

impl ParamValue {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            ParamValue::Scalar(v) => Some(*v),
            ParamValue::Tag(_) => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Scalar(v) => write!(f, "{v}"),
            ParamValue::Tag(s) => write!(f, "{s}"),
        }
    }
}

/// Per-outcome collections of Kraus operators `{M_mu^y}` with
/// `sum_{mu,y} (M_mu^y)^H M_mu^y = I`.
///
/// Each `K_y(rho) = sum_mu M_mu^y rho (M_mu^y)^H` is completely positive but
/// not trace preserving; `tr K_y(rho)` is the probability of outcome `y`.
#[derive(Debug, Clone)]
pub struct PartialKrausMap {
    dim: usize,
    outcomes: Vec<Vec<CMatrix>>,
}

impl PartialKrausMap {
    /// Validates squareness, a common dimension and completeness within
    /// [`COMPLETENESS_TOL`] per entry.
    pub fn new(outcomes: Vec<Vec<CMatrix>>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InvalidParameter(
                "a partial Kraus map needs at least one outcome".into(),
            ));
        }
        let dim = outcomes
            .iter()
            .flatten()
            .next()
            .map(|m| m.nrows())
            .ok_or_else(|| {
                Error::InvalidParameter("a partial Kraus map needs at least one operator".into())
            })?;
        let mut sum = CMatrix::zeros(dim, dim);
        for ops in &outcomes {
            for op in ops {
                if !op.is_square() || op.nrows() != dim {
                    return Err(Error::DimensionMismatch {
                        left: dim,
                        right: op.nrows(),
                    });
                }
                sum += op.adjoint() * op;
            }
        }
        let deviation = max_abs(&(&sum - identity(dim)));
        if deviation > COMPLETENESS_TOL {
            return Err(Error::InvalidParameter(format!(
                "Kraus completeness violated: max |sum M^H M - I| = {deviation:.3e}"
            )));
        }
        Ok(Self { dim, outcomes })
    }

    /// Trace-preserving identity channel with a single outcome.
    pub fn identity_map(dim: usize) -> Self {
        Self {
            dim,
            outcomes: vec![vec![identity(dim)]],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    /// Kraus operators for outcome `y` (1-based).
    pub fn operators(&self, y: Outcome) -> Result<&[CMatrix]> {
        if y == 0 || y > self.outcomes.len() {
            return Err(Error::OutcomeOutOfRange {
                outcome: y,
                num_outcomes: self.outcomes.len(),
            });
        }
        Ok(&self.outcomes[y - 1])
    }

    /// The composition `K_y o channel` for every outcome `y`, where
    /// `channel` is a single-outcome trace-preserving map applied first.
    pub fn compose_after(&self, channel: &PartialKrausMap) -> Result<Self> {
        if channel.num_outcomes() != 1 {
            return Err(Error::InvalidParameter(
                "composition expects a single-outcome channel".into(),
            ));
        }
        if channel.dim != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: channel.dim,
            });
        }
        let inner = &channel.outcomes[0];
        let outcomes = self
            .outcomes
            .iter()
            .map(|ops| {
                ops.iter()
                    .flat_map(|m| inner.iter().map(move |r| m * r))
                    .collect()
            })
            .collect();
        Ok(Self {
            dim: self.dim,
            outcomes,
        })
    }
}

/// A measurement model that may change with the step index, as happens when
/// reset channels are spliced in at record boundaries.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    maps: Vec<Arc<PartialKrausMap>>,
    default_map: usize,
    overrides: BTreeMap<usize, usize>,
}

impl DiscreteModel {
    /// The same map at every step.
    pub fn uniform(map: PartialKrausMap) -> Self {
        Self {
            maps: vec![Arc::new(map)],
            default_map: 0,
            overrides: BTreeMap::new(),
        }
    }

    /// A model whose step `k` uses `maps[overrides.get(k).unwrap_or(default)]`.
    pub fn with_schedule(
        maps: Vec<Arc<PartialKrausMap>>,
        default_map: usize,
        overrides: BTreeMap<usize, usize>,
    ) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InvalidParameter("empty map table".into()));
        }
        let dim = maps[0].dim();
        if maps.iter().any(|m| m.dim() != dim) {
            return Err(Error::InvalidParameter(
                "all scheduled maps must share one dimension".into(),
            ));
        }
        let out_of_range = overrides.values().chain([&default_map]).any(|&i| i >= maps.len());
        if out_of_range {
            return Err(Error::InvalidParameter(
                "schedule references a map index out of range".into(),
            ));
        }
        Ok(Self {
            maps,
            default_map,
            overrides,
        })
    }

    /// The map in effect at step `k` (0-based step index within a record).
    pub fn map_at(&self, k: usize) -> &PartialKrausMap {
        let idx = self.overrides.get(&k).copied().unwrap_or(self.default_map);
        &self.maps[idx]
    }

    pub fn dim(&self) -> usize {
        self.maps[0].dim()
    }
}

/// A recorded sequence of discrete outcomes with the id of the known initial
/// state the trajectory started from.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteRecord {
    pub initial_state_id: u32,
    /// 1-based outcome labels.
    pub outcomes: Vec<u16>,
}

impl DiscreteRecord {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn outcome(&self, k: usize) -> Outcome {
        self.outcomes[k] as Outcome
    }
}

/// `K_y(rho) = sum_mu M_mu^y rho (M_mu^y)^H` for the observed outcome `y`.
pub fn apply_partial(
    map: &PartialKrausMap,
    y: Outcome,
    rho: &DensityOperator,
) -> Result<SubnormalizedState> {
    let ops = map.operators(y)?;
    let mut acc = CMatrix::zeros(map.dim(), map.dim());
    for m in ops {
        acc += m * rho.matrix() * m.adjoint();
    }
    Ok(SubnormalizedState::new(acc))
}

/// `P(y) = tr K_y(rho)` for every outcome, tiny negatives clamped to zero.
pub fn outcome_probabilities(map: &PartialKrausMap, rho: &DensityOperator) -> Vec<f64> {
    (1..=map.num_outcomes())
        .map(|y| {
            let p = apply_partial(map, y, rho).expect("outcome in range").trace();
            if p < 0.0 {
                0.0
            } else {
                p
            }
        })
        .collect()
}

/// Draws an outcome by inverse CDF in outcome order `1..=m` and advances the
/// state to the corresponding normalized conditional state.
pub fn sample_outcome(
    map: &PartialKrausMap,
    rho: &DensityOperator,
    rng: &mut impl Rng,
) -> Result<(Outcome, DensityOperator)> {
    let probs = outcome_probabilities(map, rho);
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut chosen = None;
    for (idx, p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            chosen = Some(idx + 1);
            break;
        }
    }
    // Rounding can leave the total slightly below 1; fall back to the last
    // outcome that has any probability mass.
    let y = match chosen {
        Some(y) => y,
        None => {
            probs
                .iter()
                .rposition(|&p| p > 0.0)
                .ok_or(Error::VanishingTrace { trace: 0.0 })?
                + 1
        }
    };
    let (next, _) = apply_partial(map, y, rho)?.normalize()?;
    Ok((y, next))
}

/// One filter update for an observed outcome: the normalized conditional
/// state and the likelihood `tr K_y(rho)`.
pub fn filter_step(
    map: &PartialKrausMap,
    y: Outcome,
    rho: &DensityOperator,
) -> Result<(DensityOperator, f64)> {
    apply_partial(map, y, rho)?.normalize()
}

/// The joint state of a bank of hypothesis filters: one conditional state
/// and one probability weight per parameter value.
///
/// Weights are stored as normalized log-probabilities; `pi()` recovers the
/// simplex vector. States are immutable snapshots, cheap to hand to worker
/// threads.
#[derive(Debug, Clone)]
pub struct ParticleState {
    labels: Arc<[ParamValue]>,
    rhos: Vec<DensityOperator>,
    log_pi: Vec<f64>,
}

/// Renormalizes log weights by max-subtraction so `sum exp = 1`.
fn log_normalize(log_w: &mut [f64]) {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    debug_assert!(max.is_finite(), "all hypothesis weights collapsed");
    let lse = max + log_w.iter().map(|w| (w - max).exp()).sum::<f64>().ln();
    for w in log_w.iter_mut() {
        *w -= lse;
    }
}

impl ParticleState {
    /// Builds a particle state from hypothesis labels, per-hypothesis states
    /// and a prior on the simplex.
    pub fn new(
        labels: Vec<ParamValue>,
        rhos: Vec<DensityOperator>,
        prior: &[f64],
    ) -> Result<Self> {
        let r = labels.len();
        if r == 0 {
            return Err(Error::InvalidConfiguration(
                "at least one hypothesis required".into(),
            ));
        }
        if rhos.len() != r || prior.len() != r {
            return Err(Error::InvalidConfiguration(format!(
                "hypothesis count mismatch: {} labels, {} states, {} prior entries",
                r,
                rhos.len(),
                prior.len()
            )));
        }
        for i in 0..r {
            for j in (i + 1)..r {
                if labels[i] == labels[j] {
                    return Err(Error::InvalidConfiguration(format!(
                        "duplicate hypothesis label {}",
                        labels[i]
                    )));
                }
            }
        }
        let dim = rhos[0].dim();
        if rhos.iter().any(|rho| rho.dim() != dim) {
            return Err(Error::InvalidConfiguration(
                "hypothesis states must share one dimension".into(),
            ));
        }
        if prior.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidConfiguration(
                "prior entries must lie in [0, 1]".into(),
            ));
        }
        let total: f64 = prior.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidConfiguration(format!(
                "prior sums to {total}, expected 1"
            )));
        }
        let mut log_pi: Vec<f64> = prior.iter().map(|&p| p.ln()).collect();
        log_normalize(&mut log_pi);
        Ok(Self {
            labels: labels.into(),
            rhos,
            log_pi,
        })
    }

    /// All hypotheses start from the same state with a uniform prior.
    pub fn uniform(labels: Vec<ParamValue>, rho0: &DensityOperator) -> Result<Self> {
        let r = labels.len();
        let prior = vec![1.0 / r as f64; r];
        Self::new(labels, vec![rho0.clone(); r], &prior)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[ParamValue] {
        &self.labels
    }

    pub fn rho(&self, l: usize) -> &DensityOperator {
        &self.rhos[l]
    }

    pub fn log_pi(&self) -> &[f64] {
        &self.log_pi
    }

    /// Hypothesis probabilities on the simplex.
    pub fn pi(&self) -> Vec<f64> {
        self.log_pi.iter().map(|w| w.exp()).collect()
    }

    /// Index of the max-probability hypothesis; ties break to the lowest
    /// index for determinism.
    pub fn map_estimate(&self) -> usize {
        let mut best = 0;
        for (l, &w) in self.log_pi.iter().enumerate().skip(1) {
            if w > self.log_pi[best] {
                best = l;
            }
        }
        best
    }
}

/// Result of one particle-filter update.
#[derive(Debug, Clone)]
pub struct ParticleStep {
    pub state: ParticleState,
    /// Per-hypothesis `ln tr K_y(rho)`, floored for impossible outcomes.
    pub log_likelihoods: Vec<f64>,
    /// Hypotheses whose likelihood hit the floor at this step.
    pub floored: Vec<bool>,
}

/// Advances every hypothesis filter by the observed outcome and reweights
/// the hypothesis probabilities by their per-step likelihoods.
///
/// A hypothesis for which the outcome is numerically impossible keeps its
/// previous state and is charged [`LIKELIHOOD_FLOOR`].
pub fn particle_step(
    models: &[DiscreteModel],
    k: usize,
    y: Outcome,
    state: &ParticleState,
) -> Result<ParticleStep> {
    if models.len() != state.len() {
        return Err(Error::InvalidConfiguration(format!(
            "{} models for {} hypotheses",
            models.len(),
            state.len()
        )));
    }
    let r = state.len();
    let mut rhos = Vec::with_capacity(r);
    let mut log_likelihoods = Vec::with_capacity(r);
    let mut floored = vec![false; r];
    for l in 0..r {
        match filter_step(models[l].map_at(k), y, &state.rhos[l]) {
            Ok((rho, likelihood)) => {
                rhos.push(rho);
                log_likelihoods.push(likelihood.ln());
            }
            Err(Error::VanishingTrace { .. }) => {
                rhos.push(state.rhos[l].clone());
                log_likelihoods.push(ln_likelihood_floor());
                floored[l] = true;
            }
            Err(e) => return Err(e),
        }
    }
    let mut log_pi: Vec<f64> = state
        .log_pi
        .iter()
        .zip(&log_likelihoods)
        .map(|(w, ll)| w + ll)
        .collect();
    log_normalize(&mut log_pi);
    Ok(ParticleStep {
        state: ParticleState {
            labels: state.labels.clone(),
            rhos,
            log_pi,
        },
        log_likelihoods,
        floored,
    })
}

/// The single-outcome channel that sends every density operator to `sigma`,
/// built from the spectral decomposition `{sqrt(lambda_i) |v_i><e_j|}`.
pub fn reset_map(sigma: &DensityOperator) -> PartialKrausMap {
    let dim = sigma.dim();
    let eig = sigma.matrix().clone().symmetric_eigen();
    let mut ops = Vec::new();
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= 0.0 {
            continue;
        }
        let amp = lambda.sqrt();
        let v = eig.eigenvectors.column(i);
        for j in 0..dim {
            let mut op = CMatrix::zeros(dim, dim);
            for row in 0..dim {
                op[(row, j)] = v[row] * amp;
            }
            ops.push(op);
        }
    }
    PartialKrausMap {
        dim,
        outcomes: vec![ops],
    }
}

/// Stitches records into one logical record whose schedule resets the state
/// to each record's known initial state at the record boundary.
///
/// The returned model composes a reset channel before the first step of
/// every record after the first; within each record the base schedule is
/// applied relative to the record's own start. In a particle filter each
/// hypothesis state is reset this way while the hypothesis probabilities
/// carry across boundaries untouched.
pub fn concatenate_records(
    records: &[DiscreteRecord],
    base_model: &DiscreteModel,
    initial_states: &BTreeMap<u32, DensityOperator>,
) -> Result<(DiscreteRecord, DiscreteModel)> {
    if records.is_empty() {
        return Err(Error::InvalidConfiguration("no records to concatenate".into()));
    }
    for record in records {
        if !initial_states.contains_key(&record.initial_state_id) {
            return Err(Error::UnknownInitialState(record.initial_state_id));
        }
    }

    let mut outcomes = Vec::with_capacity(records.iter().map(DiscreteRecord::len).sum());
    let mut maps = base_model.maps.clone();
    let mut overrides = BTreeMap::new();
    // (base map index, initial state id) -> composed map index
    let mut composed: BTreeMap<(usize, u32), usize> = BTreeMap::new();

    let mut global = 0usize;
    for (n, record) in records.iter().enumerate() {
        for local in 0..record.len() {
            let base_idx = base_model
                .overrides
                .get(&local)
                .copied()
                .unwrap_or(base_model.default_map);
            if n > 0 && local == 0 {
                let key = (base_idx, record.initial_state_id);
                let idx = match composed.get(&key) {
                    Some(&idx) => idx,
                    None => {
                        let sigma = &initial_states[&record.initial_state_id];
                        let with_reset =
                            base_model.maps[base_idx].compose_after(&reset_map(sigma))?;
                        maps.push(Arc::new(with_reset));
                        let idx = maps.len() - 1;
                        composed.insert(key, idx);
                        idx
                    }
                };
                overrides.insert(global, idx);
            } else if base_idx != base_model.default_map {
                overrides.insert(global, base_idx);
            }
            global += 1;
        }
        outcomes.extend_from_slice(&record.outcomes);
    }

    let record = DiscreteRecord {
        initial_state_id: records[0].initial_state_id,
        outcomes,
    };
    let model = DiscreteModel::with_schedule(maps, base_model.default_map, overrides)?;
    Ok((record, model))
}

/// Samples a trajectory of `steps` outcomes under `model` starting from
/// `rho0`.
pub fn simulate_record(
    model: &DiscreteModel,
    rho0: &DensityOperator,
    steps: usize,
    initial_state_id: u32,
    rng: &mut impl Rng,
) -> Result<DiscreteRecord> {
    let mut rho = rho0.clone();
    let mut outcomes = Vec::with_capacity(steps);
    for k in 0..steps {
        let (y, next) = sample_outcome(model.map_at(k), &rho, rng)?;
        outcomes.push(y as u16);
        rho = next;
    }
    Ok(DiscreteRecord {
        initial_state_id,
        outcomes,
    })
}

/// Two-outcome qubit damping-style measurement map with jump probability
/// `gamma` from the excited level: `M_1 = diag(1, sqrt(1-gamma))`,
/// `M_2 = diag(0, sqrt(gamma))`.
pub fn damping_measurement_map(gamma: f64) -> Result<PartialKrausMap> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )));
    }
    let zero = Complex64::new(0.0, 0.0);
    let m1 = CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(1.0, 0.0),
            zero,
            zero,
            Complex64::new((1.0 - gamma).sqrt(), 0.0),
        ],
    );
    let m2 = CMatrix::from_row_slice(
        2,
        2,
        &[zero, zero, zero, Complex64::new(gamma.sqrt(), 0.0)],
    );
    PartialKrausMap::new(vec![vec![m1], vec![m2]])
}

/// Applies the trace-preserving sum `K(rho) = sum_y K_y(rho)`.
pub fn apply_total(map: &PartialKrausMap, rho: &DensityOperator) -> CMatrix {
    let mut acc = CMatrix::zeros(map.dim(), map.dim());
    for y in 1..=map.num_outcomes() {
        acc += apply_partial(map, y, rho).expect("outcome in range").matrix();
    }
    symmetrize(&acc)
}
