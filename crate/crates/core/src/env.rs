//! Finite-support linear MDPs.
//!
//! A [`LinearMDPSpec`] stores the known feature table `φ(s,a)`, one `d × S`
//! measure matrix per stage (row `i` is the measure `μ⁽ⁱ⁾_h`, so
//! `P_h(·|s,a) = φ(s,a)ᵀ M_h`), and one reward vector `θ_h` per stage.
//! Stages, states and actions are 0-based throughout the crate.
//!
//! Because the state space is finite the module can also compute exact
//! dynamic-programming values (`V*`, `Q*`, `V^π`), which the harness uses for
//! regret accounting. Learning code never enumerates states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{ensure_len, invalid, Error, Result};
use crate::linalg::{dot, min_norm_least_squares, norm2, Matrix};
use crate::scalar::Scalar;

pub const SPEC_SCHEMA_VERSION: u32 = 1;

/// Known feature table, one `d`-vector per `(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    n_states: usize,
    n_actions: usize,
    dim: usize,
    table: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    /// `rows[s * n_actions + a]` is `φ(s, a)`.
    pub fn new(n_states: usize, n_actions: usize, dim: usize, rows: &[Vec<T>]) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || dim == 0 {
            return Err(invalid("feature map needs S, A, d >= 1"));
        }
        ensure_len("feature table", rows.len(), n_states * n_actions)?;
        let mut table = Vec::with_capacity(rows.len() * dim);
        for (idx, row) in rows.iter().enumerate() {
            ensure_len(&format!("feature row {idx}"), row.len(), dim)?;
            let norm = norm2(row);
            if !(norm <= T::one() + T::lit(T::FEATURE_NORM_TOL)) {
                return Err(Error::InvalidFeature {
                    norm: norm.to_f64_lossy(),
                });
            }
            table.extend_from_slice(row);
        }
        Ok(Self {
            n_states,
            n_actions,
            dim,
            table,
        })
    }

    #[inline]
    pub fn phi(&self, s: usize, a: usize) -> &[T] {
        let start = (s * self.n_actions + a) * self.dim;
        &self.table[start..start + self.dim]
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.table.chunks(self.dim).map(<[T]>::to_vec).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState<T> {
    Fixed(usize),
    Distribution(Vec<T>),
}

impl<T> Default for InitialState<T> {
    fn default() -> Self {
        InitialState::Fixed(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearMDPSpec<T> {
    horizon: usize,
    features: FeatureMap<T>,
    measures: Vec<Matrix<T>>,
    rewards: Vec<Vec<T>>,
    initial: InitialState<T>,
    // Derived tables: P_h(s'|s,a) flattened as [h][s][a][s'], r_h(s,a) as [h][s][a].
    transitions: Vec<T>,
    reward_table: Vec<T>,
}

impl<T: Scalar> LinearMDPSpec<T> {
    /// Assembles and validates a spec. `measures[h]` is `d × S`.
    pub fn new(
        horizon: usize,
        features: FeatureMap<T>,
        measures: Vec<Matrix<T>>,
        rewards: Vec<Vec<T>>,
        initial: InitialState<T>,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(invalid("horizon must be at least 1"));
        }
        ensure_len("measures", measures.len(), horizon)?;
        ensure_len("reward vectors", rewards.len(), horizon)?;
        let (n_s, n_a, d) = (features.n_states, features.n_actions, features.dim);
        for (h, m) in measures.iter().enumerate() {
            if m.rows() != d || m.cols() != n_s {
                return Err(invalid(format!(
                    "measure {h}: expected {d}x{n_s}, got {}x{}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        for (h, theta) in rewards.iter().enumerate() {
            ensure_len(&format!("reward vector {h}"), theta.len(), d)?;
        }
        match &initial {
            InitialState::Fixed(s) if *s >= n_s => {
                return Err(invalid(format!("initial state {s} out of range")))
            }
            InitialState::Distribution(p) => {
                ensure_len("initial distribution", p.len(), n_s)?;
                check_distribution("initial distribution", p)?;
            }
            _ => {}
        }

        let mut transitions = Vec::with_capacity(horizon * n_s * n_a * n_s);
        let mut reward_table = Vec::with_capacity(horizon * n_s * n_a);
        for h in 0..horizon {
            for s in 0..n_s {
                for a in 0..n_a {
                    let phi = features.phi(s, a);
                    transitions.extend(measures[h].vecmat(phi));
                    reward_table.push(dot(phi, &rewards[h]));
                }
            }
        }

        let spec = Self {
            horizon,
            features,
            measures,
            rewards,
            initial,
            transitions,
            reward_table,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks every linear-MDP invariant by enumerating `(h, s, a)`:
    /// valid transition rows, rewards in `[0, 1]`, and `‖θ_h‖, ‖μ_h(S)‖ ≤ √d`.
    pub fn validate(&self) -> Result<()> {
        let tol = T::lit(T::PROBABILITY_TOL);
        let sqrt_d = T::from_usize_lossy(self.dim()).sqrt();
        for h in 0..self.horizon {
            for s in 0..self.n_states() {
                for a in 0..self.n_actions() {
                    check_distribution(&format!("transition (h={h}, s={s}, a={a})"), self.transition(h, s, a))?;
                    let r = self.reward(h, s, a);
                    if !(r >= -tol && r <= T::one() + tol) {
                        return Err(invalid(format!("reward (h={h}, s={s}, a={a}) = {r} outside [0,1]")));
                    }
                }
            }
            let theta_norm = norm2(&self.rewards[h]);
            if theta_norm > sqrt_d + tol {
                return Err(invalid(format!("stage {h}: ‖θ‖ = {theta_norm} exceeds √d")));
            }
            let row_sums: Vec<T> = (0..self.dim())
                .map(|i| self.measures[h].row(i).iter().copied().sum())
                .collect();
            let mu_norm = norm2(&row_sums);
            if mu_norm > sqrt_d + tol {
                return Err(invalid(format!("stage {h}: ‖μ(S)‖ = {mu_norm} exceeds √d")));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.features.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.features.n_actions
    }

    pub fn dim(&self) -> usize {
        self.features.dim
    }

    pub fn features(&self) -> &FeatureMap<T> {
        &self.features
    }

    pub fn measures(&self) -> &[Matrix<T>] {
        &self.measures
    }

    pub fn reward_vectors(&self) -> &[Vec<T>] {
        &self.rewards
    }

    pub fn initial_state(&self) -> &InitialState<T> {
        &self.initial
    }

    /// Returns a copy with a different initial-state rule.
    pub fn with_initial_state(&self, initial: InitialState<T>) -> Result<Self> {
        Self::new(
            self.horizon,
            self.features.clone(),
            self.measures.clone(),
            self.rewards.clone(),
            initial,
        )
    }

    /// `P_h(·|s,a)` as a length-`S` slice.
    #[inline]
    pub fn transition(&self, h: usize, s: usize, a: usize) -> &[T] {
        let n_s = self.n_states();
        let start = ((h * n_s + s) * self.n_actions() + a) * n_s;
        &self.transitions[start..start + n_s]
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize) -> T {
        self.reward_table[(h * self.n_states() + s) * self.n_actions() + a]
    }

    fn check_indices(&self, h: usize, s: usize, a: usize) -> Result<()> {
        if h >= self.horizon || s >= self.n_states() || a >= self.n_actions() {
            return Err(invalid(format!(
                "index out of range: (h={h}, s={s}, a={a}) for H={}, S={}, A={}",
                self.horizon,
                self.n_states(),
                self.n_actions()
            )));
        }
        Ok(())
    }

    /// One environment transition: deterministic reward `⟨φ(s,a), θ_h⟩` and a
    /// next state drawn by inverse CDF from a single uniform.
    pub fn step<R: Rng + ?Sized>(&self, h: usize, s: usize, a: usize, rng: &mut R) -> Result<(T, usize)> {
        self.check_indices(h, s, a)?;
        let u = T::lit(rng.random::<f64>());
        Ok((self.reward(h, s, a), sample_categorical(self.transition(h, s, a), u)))
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.initial {
            InitialState::Fixed(s) => *s,
            InitialState::Distribution(p) => sample_categorical(p, T::lit(rng.random::<f64>())),
        }
    }

    pub fn to_document(&self) -> SpecDocument<T> {
        SpecDocument {
            schema_version: SPEC_SCHEMA_VERSION,
            horizon: self.horizon,
            n_states: self.n_states(),
            n_actions: self.n_actions(),
            dim: self.dim(),
            features: self.features.rows(),
            measures: self.measures.iter().map(Matrix::to_rows).collect(),
            rewards: self.rewards.clone(),
            initial_state: self.initial.clone(),
        }
    }

    pub fn from_document(doc: SpecDocument<T>) -> Result<Self> {
        if doc.schema_version != SPEC_SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported spec schema_version {} (expected {SPEC_SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        let features = FeatureMap::new(doc.n_states, doc.n_actions, doc.dim, &doc.features)?;
        let measures = doc
            .measures
            .iter()
            .map(|m| Matrix::from_rows(m))
            .collect::<Result<Vec<_>>>()?;
        Self::new(doc.horizon, features, measures, doc.rewards, doc.initial_state)
    }
}

/// Versioned on-disk form of a spec. `features[s * n_actions + a] = φ(s,a)`,
/// `measures[h][i][s'] = μ⁽ⁱ⁾_h(s')`, `rewards[h] = θ_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecDocument<T> {
    pub schema_version: u32,
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub dim: usize,
    pub features: Vec<Vec<T>>,
    pub measures: Vec<Vec<Vec<T>>>,
    pub rewards: Vec<Vec<T>>,
    #[serde(default)]
    pub initial_state: InitialState<T>,
}

impl<T: Scalar> Serialize for LinearMDPSpec<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_document().serialize(serializer)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for LinearMDPSpec<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = SpecDocument::<T>::deserialize(deserializer)?;
        Self::from_document(doc).map_err(serde::de::Error::custom)
    }
}

fn check_distribution<T: Scalar>(what: &str, p: &[T]) -> Result<()> {
    let tol = T::lit(T::PROBABILITY_TOL);
    let mut total = T::zero();
    for &x in p {
        if !(x >= -tol && x <= T::one() + tol) {
            return Err(invalid(format!("{what}: entry {x} outside [0,1]")));
        }
        total += x;
    }
    if !((total - T::one()).abs() <= tol) {
        return Err(invalid(format!("{what}: sums to {total}, not 1")));
    }
    Ok(())
}

fn sample_categorical<T: Scalar>(p: &[T], u: T) -> usize {
    let mut cum = T::zero();
    let mut last_positive = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi > T::zero() {
            last_positive = i;
            cum += pi;
            if u < cum {
                return i;
            }
        }
    }
    last_positive
}

/// One episode as observed by the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace<T> {
    /// `s_1 … s_{H+1}`.
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<T>,
    /// Cached `φ(s_h, a_h)`.
    pub features: Vec<Vec<T>>,
}

impl<T: Scalar> EpisodeTrace<T> {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// Structural check against a horizon and feature dimension.
    pub fn check_shape(&self, horizon: usize, dim: usize) -> Result<()> {
        ensure_len("trace states", self.states.len(), horizon + 1)?;
        ensure_len("trace actions", self.actions.len(), horizon)?;
        ensure_len("trace rewards", self.rewards.len(), horizon)?;
        ensure_len("trace features", self.features.len(), horizon)?;
        for phi in &self.features {
            ensure_len("trace feature", phi.len(), dim)?;
        }
        Ok(())
    }
}

/// Deterministic Markov policy: `actions[h][s]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    actions: Vec<Vec<usize>>,
}

impl Policy {
    pub fn new(actions: Vec<Vec<usize>>) -> Self {
        Self { actions }
    }

    pub fn constant(horizon: usize, n_states: usize, action: usize) -> Self {
        Self::new(vec![vec![action; n_states]; horizon])
    }

    #[inline]
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h][s]
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.actions
    }
}

/// Exact optimal values: `v[h][s]` for `h ∈ 0..=H` (with `v[H] = 0`) and `q[h][s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalValues<T> {
    pub v: Vec<Vec<T>>,
    pub q: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> OptimalValues<T> {
    /// Greedy policy with respect to `Q*`, ties to the lowest action.
    pub fn greedy_policy(&self) -> Policy {
        Policy::new(
            self.q
                .iter()
                .map(|stage| stage.iter().map(|qs| argmax_lowest(qs)).collect())
                .collect(),
        )
    }
}

pub(crate) fn argmax_lowest<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn expectation<T: Scalar>(p: &[T], v: &[T]) -> T {
    dot(p, v)
}

/// Backward induction for `V*` and `Q*`.
pub fn optimal_values<T: Scalar>(spec: &LinearMDPSpec<T>) -> OptimalValues<T> {
    let (big_h, n_s, n_a) = (spec.horizon(), spec.n_states(), spec.n_actions());
    let mut v = vec![vec![T::zero(); n_s]; big_h + 1];
    let mut q = vec![vec![vec![T::zero(); n_a]; n_s]; big_h];
    for h in (0..big_h).rev() {
        for s in 0..n_s {
            for a in 0..n_a {
                q[h][s][a] = spec.reward(h, s, a) + expectation(spec.transition(h, s, a), &v[h + 1]);
            }
            v[h][s] = q[h][s].iter().copied().fold(T::neg_infinity(), T::max);
        }
    }
    OptimalValues { v, q }
}

fn check_policy<T: Scalar>(spec: &LinearMDPSpec<T>, policy: &Policy) -> Result<()> {
    ensure_len("policy stages", policy.horizon(), spec.horizon())?;
    for (h, row) in policy.table().iter().enumerate() {
        ensure_len(&format!("policy stage {h}"), row.len(), spec.n_states())?;
        if let Some(&a) = row.iter().find(|&&a| a >= spec.n_actions()) {
            return Err(invalid(format!("policy stage {h}: action {a} out of range")));
        }
    }
    Ok(())
}

/// Exact evaluation of a deterministic policy: `V^π[h][s]`, `h ∈ 0..=H`.
pub fn policy_values<T: Scalar>(spec: &LinearMDPSpec<T>, policy: &Policy) -> Result<Vec<Vec<T>>> {
    check_policy(spec, policy)?;
    let (big_h, n_s) = (spec.horizon(), spec.n_states());
    let mut v = vec![vec![T::zero(); n_s]; big_h + 1];
    for h in (0..big_h).rev() {
        for s in 0..n_s {
            let a = policy.action(h, s);
            v[h][s] = spec.reward(h, s, a) + expectation(spec.transition(h, s, a), &v[h + 1]);
        }
    }
    Ok(v)
}

/// `Q^π[h][s][a]` for a deterministic policy.
pub fn policy_q_values<T: Scalar>(spec: &LinearMDPSpec<T>, policy: &Policy) -> Result<Vec<Vec<Vec<T>>>> {
    let v = policy_values(spec, policy)?;
    Ok((0..spec.horizon())
        .map(|h| {
            (0..spec.n_states())
                .map(|s| {
                    (0..spec.n_actions())
                        .map(|a| spec.reward(h, s, a) + expectation(spec.transition(h, s, a), &v[h + 1]))
                        .collect()
                })
                .collect()
        })
        .collect())
}

/// Least-squares fit of one stage's action values against the features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit<T> {
    pub weights: Vec<T>,
    pub max_residual: T,
    pub weight_norm: T,
}

/// Fits `q[s][a] ≈ ⟨φ(s,a), w⟩` over all `(s, a)` (minimum-norm solution).
pub fn fit_linear_values<T: Scalar>(features: &FeatureMap<T>, q: &[Vec<T>]) -> Result<LinearFit<T>> {
    ensure_len("value table", q.len(), features.n_states())?;
    let mut rows = Vec::with_capacity(features.n_states() * features.n_actions());
    let mut targets = Vec::with_capacity(rows.capacity());
    for (s, qs) in q.iter().enumerate() {
        ensure_len("value row", qs.len(), features.n_actions())?;
        for (a, &value) in qs.iter().enumerate() {
            rows.push(features.phi(s, a));
            targets.push(value);
        }
    }
    let weights = min_norm_least_squares(&rows, &targets)?;
    let max_residual = rows
        .iter()
        .zip(&targets)
        .fold(T::zero(), |m, (row, &y)| m.max((dot(row, &weights) - y).abs()));
    let weight_norm = norm2(&weights);
    Ok(LinearFit {
        weights,
        max_residual,
        weight_norm,
    })
}

/// Per-stage linear fits of `Q^π`; on a linear MDP every residual is zero.
pub fn realizability_check<T: Scalar>(spec: &LinearMDPSpec<T>, policy: &Policy) -> Result<Vec<LinearFit<T>>> {
    policy_q_values(spec, policy)?
        .iter()
        .map(|q_h| fit_linear_values(spec.features(), q_h))
        .collect()
}

/// Embeds a tabular MDP: `d = S·A`, one-hot features, `M_h[(s,a)][s'] = P[h][s][a][s']`
/// and `θ_h[(s,a)] = r[h][s][a]`. Rows summing to one within `1e-9` are renormalized.
pub fn build_tabular_embedding<T: Scalar>(
    p: &[Vec<Vec<Vec<T>>>],
    r: &[Vec<Vec<T>>],
    horizon: usize,
) -> Result<LinearMDPSpec<T>> {
    if horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    ensure_len("transition stages", p.len(), horizon)?;
    ensure_len("reward stages", r.len(), horizon)?;
    let n_s = p[0].len();
    let n_a = p[0].first().map_or(0, Vec::len);
    if n_s == 0 || n_a == 0 {
        return Err(invalid("tabular MDP needs at least one state and action"));
    }
    let d = n_s * n_a;
    let mut measures = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    for h in 0..horizon {
        ensure_len(&format!("P[{h}]"), p[h].len(), n_s)?;
        ensure_len(&format!("r[{h}]"), r[h].len(), n_s)?;
        let mut m = Matrix::zeros(d, n_s);
        let mut theta = vec![T::zero(); d];
        for s in 0..n_s {
            ensure_len(&format!("P[{h}][{s}]"), p[h][s].len(), n_a)?;
            ensure_len(&format!("r[{h}][{s}]"), r[h][s].len(), n_a)?;
            for a in 0..n_a {
                let row = &p[h][s][a];
                ensure_len(&format!("P[{h}][{s}][{a}]"), row.len(), n_s)?;
                let total: T = row.iter().copied().sum();
                if row.iter().any(|&x| !(x >= T::zero())) || !((total - T::one()).abs() <= T::lit(1e-9)) {
                    return Err(invalid(format!("P[{h}][{s}][{a}] is not a probability vector (sum {total})")));
                }
                for (sp, &x) in row.iter().enumerate() {
                    m[(s * n_a + a, sp)] = x / total;
                }
                let reward = r[h][s][a];
                if !(reward >= T::zero() && reward <= T::one()) {
                    return Err(invalid(format!("r[{h}][{s}][{a}] = {reward} outside [0,1]")));
                }
                theta[s * n_a + a] = reward;
            }
        }
        measures.push(m);
        rewards.push(theta);
    }
    let rows: Vec<Vec<T>> = (0..d)
        .map(|i| {
            let mut e = vec![T::zero(); d];
            e[i] = T::one();
            e
        })
        .collect();
    let features = FeatureMap::new(n_s, n_a, d, &rows)?;
    LinearMDPSpec::new(horizon, features, measures, rewards, InitialState::Fixed(0))
}

/// Parameters of the random instance family.
///
/// Features are Dirichlet(`feature_concentration`) weights over `d` anchors,
/// so `‖φ‖₂ ≤ ‖φ‖₁ = 1`. Anchor `i` at stage `h` owns a Dirichlet
/// (`transition_concentration`) distribution over next states (row `i` of
/// `M_h`) and a reward `θ_h[i] ∈ [0, 1]`; every `φᵀM_h` is then a convex
/// mixture of distributions and every reward a convex mixture of `[0,1]` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSpecConfig {
    pub dim: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub seed: u64,
    #[serde(default = "default_feature_concentration")]
    pub feature_concentration: f64,
    #[serde(default = "default_transition_concentration")]
    pub transition_concentration: f64,
    /// Use one-hot features `φ(s,a) = e_{s·A+a}`; requires `d = S·A`.
    #[serde(default)]
    pub one_hot: bool,
}

fn default_feature_concentration() -> f64 {
    0.3
}

fn default_transition_concentration() -> f64 {
    0.5
}

impl RandomSpecConfig {
    pub fn new(dim: usize, n_states: usize, n_actions: usize, horizon: usize, seed: u64) -> Self {
        Self {
            dim,
            n_states,
            n_actions,
            horizon,
            seed,
            feature_concentration: default_feature_concentration(),
            transition_concentration: default_transition_concentration(),
            one_hot: false,
        }
    }
}

const MAX_GENERATION_ATTEMPTS: usize = 100;

pub fn build_random_spec<T: Scalar>(
    dim: usize,
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    seed: u64,
) -> Result<LinearMDPSpec<T>> {
    build_random_spec_with(&RandomSpecConfig::new(dim, n_states, n_actions, horizon, seed))
}

pub fn build_random_spec_with<T: Scalar>(cfg: &RandomSpecConfig) -> Result<LinearMDPSpec<T>> {
    if cfg.dim < 2 {
        return Err(invalid("random specs need d >= 2"));
    }
    if cfg.n_states == 0 || cfg.n_actions == 0 || cfg.horizon == 0 {
        return Err(invalid("random specs need S, A, H >= 1"));
    }
    if cfg.one_hot && cfg.dim != cfg.n_states * cfg.n_actions {
        return Err(invalid("one-hot features need d = S·A"));
    }
    let feature_gamma = Gamma::new(cfg.feature_concentration, 1.0)
        .map_err(|e| invalid(format!("feature_concentration: {e}")))?;
    let transition_gamma = Gamma::new(cfg.transition_concentration, 1.0)
        .map_err(|e| invalid(format!("transition_concentration: {e}")))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut last_err = None;
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let rows: Vec<Vec<T>> = (0..cfg.n_states * cfg.n_actions)
            .map(|idx| {
                if cfg.one_hot {
                    let mut e = vec![T::zero(); cfg.dim];
                    e[idx] = T::one();
                    e
                } else {
                    dirichlet(&feature_gamma, cfg.dim, &mut rng)
                }
            })
            .collect();
        let measures: Vec<Matrix<T>> = (0..cfg.horizon)
            .map(|_| {
                let rows: Vec<Vec<T>> = (0..cfg.dim)
                    .map(|_| dirichlet(&transition_gamma, cfg.n_states, &mut rng))
                    .collect();
                Matrix::from_rows(&rows).expect("rows share a length")
            })
            .collect();
        let rewards: Vec<Vec<T>> = (0..cfg.horizon)
            .map(|_| (0..cfg.dim).map(|_| T::lit(rng.random::<f64>())).collect())
            .collect();
        let attempt = FeatureMap::new(cfg.n_states, cfg.n_actions, cfg.dim, &rows)
            .and_then(|f| LinearMDPSpec::new(cfg.horizon, f, measures, rewards, InitialState::Fixed(0)));
        match attempt {
            Ok(spec) => return Ok(spec),
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::GenerationFailure(format!(
        "no valid instance after {MAX_GENERATION_ATTEMPTS} attempts: {}",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

fn dirichlet<T: Scalar, R: Rng>(gamma: &Gamma<f64>, n: usize, rng: &mut R) -> Vec<T> {
    loop {
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            let mut out: Vec<f64> = draws.iter().map(|x| x / total).collect();
            // Push the rounding residue into the largest entry so the row sums to 1.
            let residue = 1.0 - out.iter().sum::<f64>();
            let top = argmax_lowest(&out);
            out[top] += residue;
            return out.into_iter().map(T::lit).collect();
        }
    }
}
