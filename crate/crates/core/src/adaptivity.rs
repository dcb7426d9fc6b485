//! When the agent is allowed to refit: every episode, on a uniform batch grid
//! fixed in advance, or when some stage's Gram determinant has grown by more
//! than a factor `η` since the last refit.
//!
//! Determinants are compared in log space. Episodes are 1-based here to match
//! the batch-grid convention `1 = t_1 < … < t_B < t_{B+1} = K + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, invalid, Result};
use crate::scalar::Scalar;

/// Batch start episodes plus the `K + 1` sentinel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchGrid {
    starts: Vec<usize>,
    sentinel: usize,
}

impl BatchGrid {
    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn sentinel(&self) -> usize {
        self.sentinel
    }

    /// Effective number of batches.
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Start episode of the batch containing `k`.
    pub fn batch_start(&self, k: usize) -> Option<usize> {
        if k == 0 || k >= self.sentinel {
            return None;
        }
        let idx = self.starts.partition_point(|&t| t <= k);
        Some(self.starts[idx - 1])
    }
}

/// Uniform grid `t_i = (i − 1)·max(1, ⌊K/B⌋) + 1`, dropping starts beyond `K`.
pub fn batch_grid(episodes: usize, budget: usize) -> Result<BatchGrid> {
    if episodes == 0 || budget == 0 {
        return Err(invalid("batch grid needs K >= 1 and B >= 1"));
    }
    let spacing = (episodes / budget).max(1);
    let mut starts: Vec<usize> = (0..budget)
        .map(|i| i * spacing + 1)
        .take_while(|&t| t <= episodes)
        .collect();
    starts.dedup();
    Ok(BatchGrid {
        starts,
        sentinel: episodes + 1,
    })
}

/// `log η` for `η = (1 + K/d)^{dH/B}`.
pub fn log_eta_from_budget<T: Scalar>(episodes: usize, dim: usize, horizon: usize, budget: usize) -> T {
    let k = T::from_usize_lossy(episodes);
    let d = T::from_usize_lossy(dim);
    let exponent = d * T::from_usize_lossy(horizon) / T::from_usize_lossy(budget);
    exponent * (k / d).ln_1p()
}

/// `η = (1 + K/d)^{dH/B}`, kept at least `1 + 1e-12`.
pub fn eta_from_budget<T: Scalar>(episodes: usize, dim: usize, horizon: usize, budget: usize) -> T {
    log_eta_from_budget::<T>(episodes, dim, horizon, budget)
        .exp()
        .max(T::one() + T::lit(1e-12))
}

/// True iff `log det Λ_h^k > log det Λ_h + log η` for some stage.
pub fn det_switch_decision<T: Scalar>(current: &[T], anchors: &[T], eta: T) -> Result<bool> {
    ensure_len("anchor log-determinants", anchors.len(), current.len())?;
    let log_eta = eta.ln();
    Ok(current.iter().zip(anchors).any(|(&c, &a)| c > a + log_eta))
}

/// Upper bound `dH·log(1 + K/(λd)) / log η` on the number of determinant-triggered switches.
pub fn switch_count_bound<T: Scalar>(dim: usize, horizon: usize, episodes: usize, ridge: T, eta: T) -> Result<T> {
    if !(eta > T::one()) {
        return Err(invalid(format!("eta must exceed 1, got {eta}")));
    }
    let d = T::from_usize_lossy(dim);
    let dh = d * T::from_usize_lossy(horizon);
    Ok(dh * (T::from_usize_lossy(episodes) / (ridge * d)).ln_1p() / eta.ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulerKind<T> {
    Full,
    UniformBatch { grid: BatchGrid },
    DetSwitch { eta: T },
}

/// Per-run scheduler state.
#[derive(Debug, Clone)]
pub struct Scheduler<T> {
    kind: SchedulerKind<T>,
    next_start: usize,
    anchors: Vec<T>,
    last_episode: usize,
}

impl<T: Scalar> Scheduler<T> {
    pub fn new(kind: SchedulerKind<T>) -> Result<Self> {
        if let SchedulerKind::DetSwitch { eta } = &kind {
            if !(*eta > T::one()) {
                return Err(invalid(format!("eta must exceed 1, got {eta}")));
            }
        }
        Ok(Self {
            kind,
            next_start: 0,
            anchors: Vec::new(),
            last_episode: 0,
        })
    }

    pub fn kind(&self) -> &SchedulerKind<T> {
        &self.kind
    }

    /// Log-determinants recorded at the most recent refit.
    pub fn anchors(&self) -> &[T] {
        &self.anchors
    }

    /// Decides whether episode `k` refits, given `log det Λ_h^k` for every
    /// stage. Must be called once per episode in order. The first episode
    /// always fits; on a refit the anchors move to `log_dets`.
    pub fn should_refit(&mut self, k: usize, log_dets: &[T]) -> Result<bool> {
        if k != self.last_episode + 1 {
            return Err(invalid(format!("scheduler expected episode {}, got {k}", self.last_episode + 1)));
        }
        self.last_episode = k;
        let refit = match &self.kind {
            SchedulerKind::Full => true,
            SchedulerKind::UniformBatch { grid } => {
                let hit = grid.starts.get(self.next_start) == Some(&k);
                if hit {
                    self.next_start += 1;
                }
                hit
            }
            SchedulerKind::DetSwitch { eta } => k == 1 || det_switch_decision(log_dets, &self.anchors, *eta)?,
        };
        if refit {
            self.anchors = log_dets.to_vec();
        }
        Ok(refit)
    }
}
