//! Backward least-squares value iteration with UCB bonuses.
//!
//! A fit produces a [`QSnapshot`]: per-stage ridge weights `w_h` together with
//! frozen copies of `Λ_h⁻¹`. The snapshot evaluates
//! `Q_h(s,a) = clamp(φᵀw_h + β·√(φᵀΛ_h⁻¹φ), 0, H − h)` (0-based `h`) and
//! acts greedily with ties broken toward the lowest action index.

use serde::{Deserialize, Serialize};

use crate::env::{argmax_lowest, EpisodeTrace, FeatureMap, Policy};
use crate::error::{ensure_len, invalid, Result};
use crate::gram::{quad_form_with, GramState};
use crate::linalg::{dot, norm2, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageModel<T> {
    pub weights: Vec<T>,
    pub gram_inv: Matrix<T>,
    pub log_det: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSnapshot<T> {
    horizon: usize,
    beta: T,
    ridge: T,
    stages: Vec<StageModel<T>>,
    /// Episode (1-based) whose policy this snapshot defines; later episodes
    /// that reuse it report this as their `b_k`.
    fit_episode: usize,
}

impl<T: Scalar> QSnapshot<T> {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn ridge(&self) -> T {
        self.ridge
    }

    pub fn fit_episode(&self) -> usize {
        self.fit_episode
    }

    pub fn stages(&self) -> &[StageModel<T>] {
        &self.stages
    }

    pub fn dim(&self) -> usize {
        self.stages[0].weights.len()
    }

    fn check(&self, h: usize, phi: &[T]) -> Result<()> {
        if h >= self.horizon {
            return Err(invalid(format!("stage {h} out of range for horizon {}", self.horizon)));
        }
        ensure_len("feature", phi.len(), self.dim())
    }

    #[inline]
    fn bonus_unchecked(&self, h: usize, phi: &[T]) -> T {
        self.beta * quad_form_with(&self.stages[h].gram_inv, phi, self.ridge).sqrt()
    }

    #[inline]
    fn q_unchecked(&self, h: usize, phi: &[T]) -> T {
        let top = T::from_usize_lossy(self.horizon - h);
        let raw = dot(phi, &self.stages[h].weights) + self.bonus_unchecked(h, phi);
        raw.min(top).max(T::zero())
    }

    /// Clipped optimistic value `Q_h(φ) ∈ [0, H − h]`.
    pub fn q_value(&self, h: usize, phi: &[T]) -> Result<T> {
        self.check(h, phi)?;
        Ok(self.q_unchecked(h, phi))
    }

    /// `β·√(φᵀΛ_h⁻¹φ)` with the frozen inverse.
    pub fn bonus(&self, h: usize, phi: &[T]) -> Result<T> {
        self.check(h, phi)?;
        Ok(self.bonus_unchecked(h, phi))
    }

    pub fn greedy_action(&self, h: usize, s: usize, features: &FeatureMap<T>) -> Result<usize> {
        if h >= self.horizon || s >= features.n_states() {
            return Err(invalid(format!("greedy_action: (h={h}, s={s}) out of range")));
        }
        ensure_len("feature dimension", features.dim(), self.dim())?;
        Ok(self.greedy_unchecked(h, s, features))
    }

    fn greedy_unchecked(&self, h: usize, s: usize, features: &FeatureMap<T>) -> usize {
        let values: Vec<T> = (0..features.n_actions())
            .map(|a| self.q_unchecked(h, features.phi(s, a)))
            .collect();
        argmax_lowest(&values)
    }

    /// The greedy policy tabulated over every `(h, s)`.
    pub fn greedy_policy(&self, features: &FeatureMap<T>) -> Policy {
        Policy::new(
            (0..self.horizon)
                .map(|h| (0..features.n_states()).map(|s| self.greedy_unchecked(h, s, features)).collect())
                .collect(),
        )
    }

    pub fn weight_norms(&self) -> Vec<T> {
        self.stages.iter().map(|st| norm2(&st.weights)).collect()
    }
}

/// Fits a snapshot from scratch: accumulates each stage's Gram matrix from the
/// history, then runs the backward pass. `history` holds episodes `1..k−1`.
pub fn fit_q_snapshot<T: Scalar>(
    history: &[EpisodeTrace<T>],
    features: &FeatureMap<T>,
    horizon: usize,
    beta: T,
    ridge: T,
) -> Result<QSnapshot<T>> {
    let mut grams = (0..horizon)
        .map(|_| GramState::new(features.dim(), ridge))
        .collect::<Result<Vec<_>>>()?;
    for trace in history {
        trace.check_shape(horizon, features.dim())?;
        for (gram, phi) in grams.iter_mut().zip(&trace.features) {
            gram.update(phi)?;
        }
    }
    fit_with_grams(history, &grams, features, beta)
}

/// Backward pass given Gram states that already hold exactly the stage
/// features of `history` (the harness keeps them incrementally).
pub fn fit_with_grams<T: Scalar>(
    history: &[EpisodeTrace<T>],
    grams: &[GramState<T>],
    features: &FeatureMap<T>,
    beta: T,
) -> Result<QSnapshot<T>> {
    let horizon = grams.len();
    if horizon == 0 {
        return Err(invalid("need at least one stage"));
    }
    if !(beta >= T::zero()) || !beta.is_finite() {
        return Err(invalid(format!("beta must be finite and nonnegative, got {beta}")));
    }
    let dim = features.dim();
    let ridge = grams[0].ridge();
    for (h, g) in grams.iter().enumerate() {
        ensure_len(&format!("gram {h} dimension"), g.dim(), dim)?;
        ensure_len(&format!("gram {h} observation count"), g.n_updates(), history.len())?;
    }
    for trace in history {
        trace.check_shape(horizon, dim)?;
    }

    let mut snapshot = QSnapshot {
        horizon,
        beta,
        ridge,
        stages: grams
            .iter()
            .map(|g| StageModel {
                weights: vec![T::zero(); dim],
                gram_inv: g.inverse().clone(),
                log_det: g.log_det(),
            })
            .collect(),
        fit_episode: history.len() + 1,
    };

    for h in (0..horizon).rev() {
        // max_a Q_{h+1}(s', a), memoized per next state within this stage.
        let mut next_value: Vec<Option<T>> = vec![None; features.n_states()];
        let mut rhs = vec![T::zero(); dim];
        for trace in history {
            let continuation = if h + 1 == horizon {
                T::zero()
            } else {
                let s_next = trace.states[h + 1];
                if s_next >= features.n_states() {
                    return Err(invalid(format!("trace state {s_next} out of range")));
                }
                *next_value[s_next].get_or_insert_with(|| {
                    (0..features.n_actions())
                        .map(|a| snapshot.q_unchecked(h + 1, features.phi(s_next, a)))
                        .fold(T::neg_infinity(), T::max)
                })
            };
            let target = trace.rewards[h] + continuation;
            for (r, &p) in rhs.iter_mut().zip(&trace.features[h]) {
                *r += p * target;
            }
        }
        snapshot.stages[h].weights = grams[h].solve(&rhs)?;
    }
    Ok(snapshot)
}
