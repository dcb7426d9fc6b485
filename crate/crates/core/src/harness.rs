//! The online protocol: per episode, consult the scheduler, refit on all past
//! data when allowed, act greedily for `H` steps and score the acting policy
//! against the exact oracle.
//!
//! Randomness: every episode `k` draws from its own ChaCha8 stream
//! (`seed_from_u64(seed)` with stream id `k`), so two runs sharing a seed see
//! the same environment noise per episode regardless of the scheduler.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adaptivity::{batch_grid, eta_from_budget, Scheduler, SchedulerKind};
use crate::env::{optimal_values, policy_values, EpisodeTrace, LinearMDPSpec, OptimalValues, Policy};
use crate::error::{invalid, Error, Result};
use crate::gram::{GramState, DEFAULT_REFRESH_INTERVAL};
use crate::lsvi::{fit_with_grams, QSnapshot};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulerConfig<T> {
    Full,
    Batch {
        budget: usize,
    },
    /// Exactly one of `budget` (η calibrated from it) or `eta`.
    DetSwitch {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        budget: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<T>,
    },
}

impl<T: Scalar> SchedulerConfig<T> {
    pub fn resolve(&self, episodes: usize, dim: usize, horizon: usize) -> Result<SchedulerKind<T>> {
        match *self {
            SchedulerConfig::Full => Ok(SchedulerKind::Full),
            SchedulerConfig::Batch { budget } => Ok(SchedulerKind::UniformBatch {
                grid: batch_grid(episodes, budget)?,
            }),
            SchedulerConfig::DetSwitch { budget: Some(b), eta: None } => {
                if b == 0 {
                    return Err(invalid("scheduler.budget: must be at least 1"));
                }
                Ok(SchedulerKind::DetSwitch {
                    eta: eta_from_budget(episodes, dim, horizon, b),
                })
            }
            SchedulerConfig::DetSwitch { budget: None, eta: Some(eta) } => {
                if !(eta > T::one()) {
                    return Err(invalid(format!("scheduler.eta: must exceed 1, got {eta}")));
                }
                Ok(SchedulerKind::DetSwitch { eta })
            }
            SchedulerConfig::DetSwitch { .. } => {
                Err(invalid("scheduler: det_switch needs exactly one of budget or eta"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T> {
    pub spec: LinearMDPSpec<T>,
    pub episodes: usize,
    pub scheduler: SchedulerConfig<T>,
    pub lambda: T,
    pub delta: T,
    pub bonus_scale: T,
    pub seed: u64,
    pub refresh_interval: usize,
}

impl<T: Scalar> RunConfig<T> {
    /// Defaults: `λ = 1`, `δ = 0.01`, bonus scale 1, seed 0.
    pub fn new(spec: LinearMDPSpec<T>, episodes: usize, scheduler: SchedulerConfig<T>) -> Self {
        Self {
            spec,
            episodes,
            scheduler,
            lambda: T::one(),
            delta: T::lit(0.01),
            bonus_scale: T::one(),
            seed: 0,
            refresh_interval: DEFAULT_REFRESH_INTERVAL,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_bonus_scale(mut self, c: T) -> Self {
        self.bonus_scale = c;
        self
    }

    pub fn with_lambda(mut self, lambda: T) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_delta(mut self, delta: T) -> Self {
        self.delta = delta;
        self
    }

    /// Field-level validation; messages are prefixed with the field name.
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(invalid("episodes: must be at least 1"));
        }
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return Err(invalid(format!("delta: must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.lambda > T::zero()) || !self.lambda.is_finite() {
            return Err(invalid(format!("lambda: must be positive, got {}", self.lambda)));
        }
        if !(self.bonus_scale >= T::zero()) || !self.bonus_scale.is_finite() {
            return Err(invalid(format!("bonus_scale: must be nonnegative, got {}", self.bonus_scale)));
        }
        if self.refresh_interval == 0 {
            return Err(invalid("refresh_interval: must be at least 1"));
        }
        self.scheduler_kind().map(|_| ())
    }

    pub fn scheduler_kind(&self) -> Result<SchedulerKind<T>> {
        self.scheduler
            .resolve(self.episodes, self.spec.dim(), self.spec.horizon())
    }

    /// `β = c·d·H·√(log(2dT/δ))` with `T = K·H`.
    pub fn beta(&self) -> T {
        let d = T::from_usize_lossy(self.spec.dim());
        let h = T::from_usize_lossy(self.spec.horizon());
        let total_steps = T::from_usize_lossy(self.episodes) * h;
        let log_term = (T::lit(2.0) * d * total_steps / self.delta).ln();
        self.bonus_scale * d * h * log_term.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord<T> {
    pub episode: usize,
    /// Episode at which the acting snapshot was fitted (`b_k`).
    pub fit_episode: usize,
    pub initial_state: usize,
    pub inst_regret: T,
    pub cum_regret: T,
    pub switches_so_far: usize,
    pub realized_return: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    NumericalFailure { episode: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub fit_secs: f64,
    pub act_secs: f64,
    pub eval_secs: f64,
    pub total_secs: f64,
}

/// Everything a run produced. Equality ignores wall-clock timing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport<T> {
    pub dim: usize,
    pub horizon: usize,
    pub episodes: usize,
    pub lambda: T,
    pub beta: T,
    pub delta: T,
    pub status: RunStatus,
    pub per_episode: Vec<EpisodeRecord<T>>,
    /// Refit episodes, including the initial fit at episode 1.
    pub switch_episodes: Vec<usize>,
    /// Refits after the first one.
    pub n_switches: usize,
    /// Refits whose greedy policy differs from the previous one somewhere.
    pub n_policy_changes: usize,
    pub traces: Vec<EpisodeTrace<T>>,
    /// `gram_logdets[k − 1][h] = log det Λ_h^k` (Gram before episode `k`'s data).
    pub gram_logdets: Vec<Vec<T>>,
    #[serde(default)]
    pub timing: Timing,
}

impl<T: PartialEq> PartialEq for RunReport<T> {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.horizon == other.horizon
            && self.episodes == other.episodes
            && self.lambda == other.lambda
            && self.beta == other.beta
            && self.delta == other.delta
            && self.status == other.status
            && self.per_episode == other.per_episode
            && self.switch_episodes == other.switch_episodes
            && self.n_switches == other.n_switches
            && self.n_policy_changes == other.n_policy_changes
            && self.traces == other.traces
            && self.gram_logdets == other.gram_logdets
    }
}

impl<T: Scalar> RunReport<T> {
    pub fn is_valid(&self) -> bool {
        self.status == RunStatus::Completed
    }

    /// `Regret(T)`: the final cumulative regret.
    pub fn regret(&self) -> T {
        self.per_episode.last().map_or(T::zero(), |r| r.cum_regret)
    }

    pub fn n_refits(&self) -> usize {
        self.switch_episodes.len()
    }

    /// Structural consistency of a (possibly deserialized) report.
    pub fn check_consistency(&self) -> Result<()> {
        let k = self.per_episode.len();
        if self.traces.len() != k || self.gram_logdets.len() != k {
            return Err(invalid(format!(
                "report holds {k} episode records, {} traces and {} log-det rows",
                self.traces.len(),
                self.gram_logdets.len()
            )));
        }
        if self.is_valid() && k != self.episodes {
            return Err(invalid(format!("completed report has {k} of {} episodes", self.episodes)));
        }
        for (i, (rec, trace)) in self.per_episode.iter().zip(&self.traces).enumerate() {
            if rec.episode != i + 1 || rec.fit_episode == 0 || rec.fit_episode > rec.episode {
                return Err(invalid(format!("episode record {} is malformed", i + 1)));
            }
            trace.check_shape(self.horizon, self.dim)?;
            if self.gram_logdets[i].len() != self.horizon {
                return Err(invalid(format!("log-det row {} has wrong length", i + 1)));
            }
        }
        if self.n_switches + 1 != self.switch_episodes.len() && !self.switch_episodes.is_empty() {
            return Err(invalid("n_switches disagrees with switch_episodes"));
        }
        Ok(())
    }

    /// Writes `episode,b_k,inst_regret,cum_regret,n_switches_so_far`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "b_k", "inst_regret", "cum_regret", "n_switches_so_far"])?;
        for r in &self.per_episode {
            w.write_record([
                r.episode.to_string(),
                r.fit_episode.to_string(),
                r.inst_regret.to_string(),
                r.cum_regret.to_string(),
                r.switches_so_far.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The ChaCha8 stream used by episode `k`.
pub fn episode_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

/// Plays one episode greedily with respect to a snapshot.
pub fn run_episode<T: Scalar, R: Rng + ?Sized>(
    spec: &LinearMDPSpec<T>,
    snap: &QSnapshot<T>,
    s1: usize,
    rng: &mut R,
) -> Result<EpisodeTrace<T>> {
    if snap.horizon() != spec.horizon() {
        return Err(invalid("snapshot horizon does not match the spec"));
    }
    rollout(spec, s1, rng, |h, s| snap.greedy_action(h, s, spec.features()))
}

fn rollout<T: Scalar, R: Rng + ?Sized>(
    spec: &LinearMDPSpec<T>,
    s1: usize,
    rng: &mut R,
    mut act: impl FnMut(usize, usize) -> Result<usize>,
) -> Result<EpisodeTrace<T>> {
    if s1 >= spec.n_states() {
        return Err(invalid(format!("initial state {s1} out of range")));
    }
    let horizon = spec.horizon();
    let mut trace = EpisodeTrace {
        states: Vec::with_capacity(horizon + 1),
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        features: Vec::with_capacity(horizon),
    };
    let mut s = s1;
    trace.states.push(s);
    for h in 0..horizon {
        let a = act(h, s)?;
        let (r, next) = spec.step(h, s, a, rng)?;
        trace.actions.push(a);
        trace.rewards.push(r);
        trace.features.push(spec.features().phi(s, a).to_vec());
        trace.states.push(next);
        s = next;
    }
    Ok(trace)
}

/// Step-by-step driver for one run.
pub struct Runner<'a, T> {
    cfg: &'a RunConfig<T>,
    beta: T,
    scheduler: Scheduler<T>,
    grams: Vec<GramState<T>>,
    optimal: OptimalValues<T>,
    snapshot: Option<Arc<QSnapshot<T>>>,
    policy: Option<Policy>,
    policy_start_values: Vec<T>,
    report: RunReport<T>,
    started: Instant,
}

impl<'a, T: Scalar> Runner<'a, T> {
    pub fn new(cfg: &'a RunConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let spec = &cfg.spec;
        let grams = (0..spec.horizon())
            .map(|_| GramState::new(spec.dim(), cfg.lambda).map(|g| g.with_refresh_interval(cfg.refresh_interval)))
            .collect::<Result<Vec<_>>>()?;
        let beta = cfg.beta();
        let started = Instant::now();
        let optimal = optimal_values(spec);
        let mut timing = Timing::default();
        timing.eval_secs += started.elapsed().as_secs_f64();
        Ok(Self {
            cfg,
            beta,
            scheduler: Scheduler::new(cfg.scheduler_kind()?)?,
            grams,
            optimal,
            snapshot: None,
            policy: None,
            policy_start_values: Vec::new(),
            report: RunReport {
                dim: spec.dim(),
                horizon: spec.horizon(),
                episodes: cfg.episodes,
                lambda: cfg.lambda,
                beta,
                delta: cfg.delta,
                status: RunStatus::Completed,
                per_episode: Vec::with_capacity(cfg.episodes),
                switch_episodes: Vec::new(),
                n_switches: 0,
                n_policy_changes: 0,
                traces: Vec::with_capacity(cfg.episodes),
                gram_logdets: Vec::with_capacity(cfg.episodes),
                timing,
            },
            started,
        })
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// Episodes completed so far.
    pub fn episode(&self) -> usize {
        self.report.per_episode.len()
    }

    pub fn is_finished(&self) -> bool {
        self.episode() >= self.cfg.episodes || !self.report.is_valid()
    }

    pub fn acting_snapshot(&self) -> Option<&Arc<QSnapshot<T>>> {
        self.snapshot.as_ref()
    }

    pub fn acting_policy(&self) -> Option<&Policy> {
        self.policy.as_ref()
    }

    pub fn grams(&self) -> &[GramState<T>] {
        &self.grams
    }

    /// Plays the next episode. Returns `Ok(None)` once the run is over;
    /// a numerical failure ends the run and marks the report invalid.
    pub fn step(&mut self) -> Result<Option<&EpisodeRecord<T>>> {
        if self.is_finished() {
            return Ok(None);
        }
        let k = self.episode() + 1;
        match self.play(k) {
            Ok(()) => Ok(self.report.per_episode.last()),
            Err(Error::NumericalFailure(message)) => {
                self.report.status = RunStatus::NumericalFailure { episode: k, message };
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn play(&mut self, k: usize) -> Result<()> {
        let spec = &self.cfg.spec;
        let mut rng = episode_rng(self.cfg.seed, k);
        let s1 = spec.sample_initial(&mut rng);

        let log_dets: Vec<T> = self.grams.iter().map(GramState::log_det).collect();
        if self.scheduler.should_refit(k, &log_dets)? {
            let t0 = Instant::now();
            let snap = fit_with_grams(&self.report.traces, &self.grams, spec.features(), self.beta)?;
            let policy = snap.greedy_policy(spec.features());
            self.report.timing.fit_secs += t0.elapsed().as_secs_f64();

            let t1 = Instant::now();
            self.policy_start_values = policy_values(spec, &policy)?.swap_remove(0);
            self.report.timing.eval_secs += t1.elapsed().as_secs_f64();

            if self.policy.as_ref().is_some_and(|p| *p != policy) {
                self.report.n_policy_changes += 1;
            }
            if !self.report.switch_episodes.is_empty() {
                self.report.n_switches += 1;
            }
            self.report.switch_episodes.push(k);
            self.snapshot = Some(Arc::new(snap));
            self.policy = Some(policy);
        }
        let fit_episode = self.snapshot.as_ref().expect("first episode always fits").fit_episode();

        let t2 = Instant::now();
        let policy = self.policy.as_ref().expect("policy set with snapshot");
        let trace = rollout(spec, s1, &mut rng, |h, s| Ok(policy.action(h, s)))?;
        for (gram, phi) in self.grams.iter_mut().zip(&trace.features) {
            gram.update(phi)?;
        }
        self.report.timing.act_secs += t2.elapsed().as_secs_f64();

        let inst_regret = instantaneous_regret(self.optimal.v[0][s1], self.policy_start_values[s1]);
        let cum_regret = self.report.per_episode.last().map_or(T::zero(), |r| r.cum_regret) + inst_regret;
        self.report.per_episode.push(EpisodeRecord {
            episode: k,
            fit_episode,
            initial_state: s1,
            inst_regret,
            cum_regret,
            switches_so_far: self.report.n_switches,
            realized_return: trace.rewards.iter().copied().sum(),
        });
        self.report.gram_logdets.push(log_dets);
        self.report.traces.push(trace);
        Ok(())
    }

    pub fn finish(mut self) -> RunReport<T> {
        self.report.timing.total_secs = self.started.elapsed().as_secs_f64();
        self.report
    }
}

/// `V*₁(s₁) − V^π₁(s₁)`, with sub-ulp negatives from ties rounded up to 0.
pub fn instantaneous_regret<T: Scalar>(optimal: T, achieved: T) -> T {
    (optimal - achieved).max(T::zero())
}

/// Runs the whole protocol. Invalid configs are errors; a numerical failure
/// mid-run returns the partial report with a failure status.
pub fn run_experiment<T: Scalar>(cfg: &RunConfig<T>) -> Result<RunReport<T>> {
    let mut runner = Runner::new(cfg)?;
    while runner.step()?.is_some() {}
    Ok(runner.finish())
}
