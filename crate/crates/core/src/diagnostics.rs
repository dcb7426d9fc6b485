//! Replays a recorded run and checks the inequalities that the regret
//! analysis relies on: the Gram determinant bound, the elliptical potential
//! bound, the determinant norm-ratio bound, the count of large delayed/current
//! bonus ratios under batching, the `√η` bonus-ratio bound under determinant
//! switching, optimism of the fitted Q values, and the self-normalized value
//! deviation bound.
//!
//! Per-episode bonuses `Γ_h^k` are never computed during a run; they are
//! rebuilt here by feeding the stored traces through fresh Gram states.
//! Every check is a pure function of its inputs.

use serde::{Deserialize, Serialize};

use crate::adaptivity::SchedulerKind;
use crate::env::{optimal_values, policy_q_values, policy_values, realizability_check, LinearMDPSpec, Policy};
use crate::error::{invalid, Error, Result};
use crate::gram::GramState;
use crate::harness::{instantaneous_regret, RunReport};
use crate::linalg::{dot, symmetric_eigenvalues, Cholesky, Matrix};
use crate::lsvi::{fit_with_grams, QSnapshot};
use crate::scalar::Scalar;

pub const DET_BOUND_TOL: f64 = 1e-8;
pub const POTENTIAL_TOL: f64 = 1e-6;
/// Relative to `max(1, max|A|)`.
pub const EIGEN_TOL: f64 = 1e-10;
pub const NORM_RATIO_REL_TOL: f64 = 1e-10;
pub const BONUS_RATIO_REL_TOL: f64 = 1e-8;
pub const OPTIMISM_TOL: f64 = 1e-8;
pub const REPLAY_TOL: f64 = 1e-8;
const MAX_LISTED_VIOLATIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

/// A failing `(episode, stage)` location; episodes are 1-based, stages 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub episode: usize,
    pub stage: usize,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub pass: bool,
    /// Smallest slack seen; negative means violated.
    pub worst_margin: f64,
    pub n_violations: usize,
    pub n_checked: usize,
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckResult {
    pub fn not_applicable(name: &str, why: &str) -> Self {
        Self {
            name: name.to_string(),
            status: CheckStatus::NotApplicable,
            pass: true,
            worst_margin: f64::INFINITY,
            n_violations: 0,
            n_checked: 0,
            violations: Vec::new(),
            detail: Some(why.to_string()),
        }
    }

    fn with_detail(mut self, detail: String) -> Self {
        self.detail = Some(detail);
        self
    }
}

/// Accumulates margins; a location passes when its margin is `>= 0`.
#[derive(Debug)]
struct Tally {
    name: &'static str,
    worst: f64,
    n_checked: usize,
    n_violations: usize,
    violations: Vec<Violation>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            worst: f64::INFINITY,
            n_checked: 0,
            n_violations: 0,
            violations: Vec::new(),
        }
    }

    fn record(&mut self, episode: usize, stage: usize, margin: f64) {
        self.n_checked += 1;
        self.worst = self.worst.min(margin);
        if !(margin >= 0.0) {
            self.n_violations += 1;
            if self.violations.len() < MAX_LISTED_VIOLATIONS {
                self.violations.push(Violation { episode, stage, margin });
            }
        }
    }

    fn finish(self) -> CheckResult {
        let pass = self.n_violations == 0;
        CheckResult {
            name: self.name.to_string(),
            status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
            pass,
            worst_margin: self.worst,
            n_violations: self.n_violations,
            n_checked: self.n_checked,
            violations: self.violations,
            detail: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub checks: Vec<CheckResult>,
    pub n_pass: usize,
    pub n_fail: usize,
    pub n_not_applicable: usize,
}

impl DiagnosticsReport {
    pub fn new(checks: Vec<CheckResult>) -> Self {
        let count = |s| checks.iter().filter(|c| c.status == s).count();
        Self {
            n_pass: count(CheckStatus::Pass),
            n_fail: count(CheckStatus::Fail),
            n_not_applicable: count(CheckStatus::NotApplicable),
            checks,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.n_fail == 0
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Per-`(k, h)` quantities rebuilt from the stored traces.
#[derive(Debug, Clone)]
pub struct Replay<T> {
    /// `φᵀ(Λ_h^k)⁻¹φ` for the feature played at `(k, h)`, before its own update.
    pub current_quad: Vec<Vec<T>>,
    /// `φᵀ(Λ_h^{b_k})⁻¹φ` with the Gram frozen at the acting fit.
    pub delayed_quad: Vec<Vec<T>>,
    /// `log det Λ_h^k`.
    pub log_dets: Vec<Vec<T>>,
    /// `log det Λ_h^{b_k}`.
    pub fit_log_dets: Vec<Vec<T>>,
    /// `log det Λ_h^{K+1}`.
    pub final_log_dets: Vec<T>,
}

fn fresh_grams<T: Scalar>(report: &RunReport<T>) -> Result<Vec<GramState<T>>> {
    (0..report.horizon)
        .map(|_| GramState::new(report.dim, report.lambda))
        .collect()
}

/// Checks that every `b_k` is either `k` (a refit) or the previous `b_{k-1}`,
/// and that refits are exactly the recorded switch episodes.
fn check_fit_pattern<T: Scalar>(report: &RunReport<T>) -> Result<()> {
    report.check_consistency()?;
    let mut refits = Vec::new();
    let mut prev = 0;
    for rec in &report.per_episode {
        if rec.fit_episode == rec.episode {
            refits.push(rec.episode);
        } else if rec.fit_episode != prev {
            return Err(invalid(format!(
                "episode {} acts with fit {} but the previous fit was {prev}",
                rec.episode, rec.fit_episode
            )));
        }
        prev = rec.fit_episode;
    }
    if refits != report.switch_episodes {
        return Err(invalid("recorded switch episodes disagree with the b_k column"));
    }
    Ok(())
}

pub fn replay<T: Scalar>(report: &RunReport<T>) -> Result<Replay<T>> {
    check_fit_pattern(report)?;
    let mut grams = fresh_grams(report)?;
    let mut frozen: Vec<(Matrix<T>, T)> = grams.iter().map(|g| (g.inverse().clone(), g.log_det())).collect();
    let n = report.per_episode.len();
    let mut out = Replay {
        current_quad: Vec::with_capacity(n),
        delayed_quad: Vec::with_capacity(n),
        log_dets: Vec::with_capacity(n),
        fit_log_dets: Vec::with_capacity(n),
        final_log_dets: Vec::new(),
    };
    for (rec, trace) in report.per_episode.iter().zip(&report.traces) {
        if rec.fit_episode == rec.episode {
            frozen = grams.iter().map(|g| (g.inverse().clone(), g.log_det())).collect();
        }
        let mut cur = Vec::with_capacity(report.horizon);
        let mut del = Vec::with_capacity(report.horizon);
        for (h, phi) in trace.features.iter().enumerate() {
            cur.push(grams[h].quad_form(phi)?);
            del.push(frozen[h].0.quad_form(phi).max(T::zero()));
        }
        out.current_quad.push(cur);
        out.delayed_quad.push(del);
        out.log_dets.push(grams.iter().map(GramState::log_det).collect());
        out.fit_log_dets.push(frozen.iter().map(|f| f.1).collect());
        for (g, phi) in grams.iter_mut().zip(&trace.features) {
            g.update(phi)?;
        }
    }
    out.final_log_dets = grams.iter().map(GramState::log_det).collect();
    Ok(out)
}

/// Replayed log-determinants agree with the ones stored during the run.
pub fn check_replay_fidelity<T: Scalar>(report: &RunReport<T>, rep: &Replay<T>) -> CheckResult {
    let mut tally = Tally::new("replay_fidelity");
    for (k, (stored, replayed)) in report.gram_logdets.iter().zip(&rep.log_dets).enumerate() {
        for (h, (&a, &b)) in stored.iter().zip(replayed).enumerate() {
            let diff = (a - b).abs().to_f64_lossy();
            tally.record(k + 1, h, REPLAY_TOL * (1.0 + a.abs().to_f64_lossy()) - diff);
        }
    }
    tally.finish()
}

/// `log det Λ_h^k ≤ d·log(λ + (k−1)/d)` for every recorded `(k, h)`.
pub fn check_det_bound<T: Scalar>(report: &RunReport<T>, dim: usize, lambda: T) -> CheckResult {
    let mut tally = Tally::new("det_bound");
    let d = dim as f64;
    let lam = lambda.to_f64_lossy();
    for (i, row) in report.gram_logdets.iter().enumerate() {
        let bound = d * (lam + i as f64 / d).ln();
        for (h, &ld) in row.iter().enumerate() {
            tally.record(i + 1, h, bound + DET_BOUND_TOL - ld.to_f64_lossy());
        }
    }
    tally.finish()
}

/// For each stage and every prefix `t`:
/// `Σ min{1, φᵢᵀΛᵢ⁻¹φᵢ} ≤ 2·log(det Λ_{t+1}/det Λ_1)` and, when `λ ≥ 1`,
/// `log(det Λ_{t+1}/det Λ_1) ≤ Σ φᵢᵀΛᵢ⁻¹φᵢ ≤ 2·log(det Λ_{t+1}/det Λ_1)`.
pub fn check_elliptical_potential<T: Scalar>(report: &RunReport<T>) -> Result<CheckResult> {
    let rep = replay(report)?;
    Ok(elliptical_from_replay(report, &rep))
}

fn elliptical_from_replay<T: Scalar>(report: &RunReport<T>, rep: &Replay<T>) -> CheckResult {
    let mut tally = Tally::new("elliptical_potential");
    let strong = report.lambda >= T::one();
    let k_total = rep.current_quad.len();
    for h in 0..report.horizon {
        let base = rep.log_dets.first().map_or(T::zero(), |r| r[h]).to_f64_lossy();
        let (mut sum, mut sum_min) = (0.0f64, 0.0f64);
        for t in 0..k_total {
            let q = rep.current_quad[t][h].to_f64_lossy();
            sum += q;
            sum_min += q.min(1.0);
            let next = if t + 1 < k_total { rep.log_dets[t + 1][h] } else { rep.final_log_dets[h] };
            let ratio = next.to_f64_lossy() - base;
            let mut margin = 2.0 * ratio + POTENTIAL_TOL - sum_min;
            if strong {
                margin = margin
                    .min(2.0 * ratio + POTENTIAL_TOL - sum)
                    .min(sum + POTENTIAL_TOL - ratio);
            }
            tally.record(t + 1, h, margin);
        }
    }
    tally.finish()
}

/// `‖x‖_A ≤ ‖x‖_B·√(det A/det B)` for every `x`, given `A ⪰ B ≻ 0`.
pub fn check_norm_ratio<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, xs: &[Vec<T>]) -> Result<CheckResult> {
    if !a.is_square() || a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(invalid("norm ratio needs two square matrices of equal size"));
    }
    check_norm_ratio_with_gap(a, b, &a.sub(b), xs)
}

/// As [`check_norm_ratio`], with `A − B` supplied by the caller. Along a run
/// the gap is a sum of outer products; accumulating it directly avoids the
/// cancellation of subtracting two large Gram matrices.
pub fn check_norm_ratio_with_gap<T: Scalar>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    gap: &Matrix<T>,
    xs: &[Vec<T>],
) -> Result<CheckResult> {
    if !a.is_square() || a.rows() != b.rows() || a.cols() != b.cols() || gap.rows() != a.rows() || !gap.is_square() {
        return Err(invalid("norm ratio needs square matrices of equal size"));
    }
    // The inequality is invariant under joint scaling, so the tolerance scales with A.
    let tol = T::lit(EIGEN_TOL) * a.max_abs().max(T::one());
    let min_eig = symmetric_eigenvalues(gap)?.first().copied().unwrap_or(T::zero());
    if min_eig < -tol {
        return Err(Error::PreconditionViolated(format!(
            "A − B has eigenvalue {min_eig} below −{tol}"
        )));
    }
    let log_det = |m: &Matrix<T>| {
        Cholesky::new(m)
            .map(|c| c.log_det())
            .ok_or_else(|| Error::PreconditionViolated("matrix is not positive definite".into()))
    };
    let scale = ((log_det(a)? - log_det(b)?) * T::lit(0.5)).exp();
    let mut tally = Tally::new("norm_ratio");
    for (i, x) in xs.iter().enumerate() {
        if x.len() != a.rows() {
            return Err(invalid(format!("vector {i} has the wrong length")));
        }
        let lhs = a.quad_form(x).max(T::zero()).sqrt().to_f64_lossy();
        let rhs = (b.quad_form(x).max(T::zero()).sqrt() * scale).to_f64_lossy();
        tally.record(i + 1, 0, rhs * (1.0 + NORM_RATIO_REL_TOL) + 1e-300 - lhs);
    }
    Ok(tally.finish())
}

/// Applies the norm-ratio bound along a run: for each stage and each fit
/// interval `[b, b')`, `A = Λ_h^{b'}` (end of the interval), `B = Λ_h^{b}`, and
/// `xs` are the stage features played inside the interval.
pub fn check_norm_ratio_on_run<T: Scalar>(report: &RunReport<T>) -> Result<CheckResult> {
    check_fit_pattern(report)?;
    let mut grams = fresh_grams(report)?;
    let mut tally = Tally::new("norm_ratio");
    let mut starts = report.switch_episodes.clone();
    starts.push(report.per_episode.len() + 1);
    let dim = report.dim;
    for window in starts.windows(2) {
        let (b, next) = (window[0], window[1]);
        let before: Vec<Matrix<T>> = grams.iter().map(|g| g.matrix().clone()).collect();
        let mut gaps = vec![Matrix::zeros(dim, dim); report.horizon];
        for trace in &report.traces[b - 1..next - 1] {
            for ((g, gap), phi) in grams.iter_mut().zip(&mut gaps).zip(&trace.features) {
                g.update(phi)?;
                gap.add_outer(phi, phi, T::one());
            }
        }
        for h in 0..report.horizon {
            let xs: Vec<Vec<T>> = report.traces[b - 1..next - 1]
                .iter()
                .map(|t| t.features[h].clone())
                .collect();
            let res = check_norm_ratio_with_gap(grams[h].matrix(), &before[h], &gaps[h], &xs)?;
            tally.n_checked += res.n_checked;
            tally.worst = tally.worst.min(res.worst_margin);
            let unlisted = res.n_violations - res.violations.len();
            for v in res.violations {
                tally.record(b + v.episode - 1, h, v.margin);
                tally.n_checked -= 1;
            }
            tally.n_violations += unlisted;
        }
    }
    Ok(tally.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadIndexCount {
    pub count: usize,
    pub bound: f64,
    pub check: CheckResult,
}

/// `|C|` for `C = {(k,h): Γ_h^{b_k}/Γ_h^k > 2}` against
/// `dHK·log(K/d + 1)/(2B·log 2)`, with `B` the effective number of batches.
pub fn count_bad_indices<T: Scalar>(report: &RunReport<T>, scheduler: &SchedulerKind<T>) -> Result<BadIndexCount> {
    let SchedulerKind::UniformBatch { grid } = scheduler else {
        return Err(invalid("bad-index counting applies to uniform-batch runs only"));
    };
    if grid.starts() != report.switch_episodes.as_slice() {
        return Err(invalid("report refits do not follow the supplied batch grid"));
    }
    let rep = replay(report)?;
    let mut count = 0;
    let mut locations = Vec::new();
    for (k, (cur, del)) in rep.current_quad.iter().zip(&rep.delayed_quad).enumerate() {
        for h in 0..report.horizon {
            // Γ ratio > 2  ⇔  quad ratio > 4.
            if cur[h] > T::zero() && del[h] > T::lit(4.0) * cur[h] {
                count += 1;
                if locations.len() < MAX_LISTED_VIOLATIONS {
                    locations.push((k + 1, h));
                }
            }
        }
    }
    let (d, h, k) = (report.dim as f64, report.horizon as f64, report.episodes as f64);
    let b = grid.len() as f64;
    let bound = d * h * k * (k / d + 1.0).ln() / (2.0 * b * std::f64::consts::LN_2);
    let pass = count as f64 <= bound;
    let check = CheckResult {
        name: "bad_indices".to_string(),
        status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
        pass,
        worst_margin: bound - count as f64,
        n_violations: usize::from(!pass),
        n_checked: report.per_episode.len() * report.horizon,
        violations: Vec::new(),
        detail: None,
    }
    .with_detail(format!("|C| = {count}, bound = {bound:.4}, first members: {locations:?}"));
    Ok(BadIndexCount { count, bound, check })
}

/// `Γ_h^{b_k}/Γ_h^k ≤ √(det Λ_h^k / det Λ_h^{b_k}) ≤ √η` at every `(k, h)`.
pub fn check_bonus_ratio<T: Scalar>(report: &RunReport<T>, scheduler: &SchedulerKind<T>) -> Result<CheckResult> {
    let SchedulerKind::DetSwitch { eta } = scheduler else {
        return Err(invalid("bonus-ratio check applies to determinant-switch runs only"));
    };
    let rep = replay(report)?;
    let log_eta = eta.ln().to_f64_lossy();
    let sqrt_eta = (0.5 * log_eta).exp();
    let mut tally = Tally::new("bonus_ratio");
    for k in 0..rep.current_quad.len() {
        for h in 0..report.horizon {
            let log_gap = (rep.log_dets[k][h] - rep.fit_log_dets[k][h]).to_f64_lossy();
            let det_margin = log_eta + BONUS_RATIO_REL_TOL - log_gap;
            let (cur, del) = (rep.current_quad[k][h].to_f64_lossy(), rep.delayed_quad[k][h].to_f64_lossy());
            let margin = if cur > 0.0 {
                let ratio = (del / cur).sqrt();
                let via_det = (0.5 * log_gap).exp() * (1.0 + BONUS_RATIO_REL_TOL) - ratio;
                let via_eta = sqrt_eta * (1.0 + BONUS_RATIO_REL_TOL) - ratio;
                via_det.min(via_eta).min(det_margin)
            } else {
                det_margin
            };
            tally.record(k + 1, h, margin);
        }
    }
    Ok(tally.finish())
}

/// Rebuilds the snapshot used at every refit episode, in order.
pub fn replay_snapshots<T: Scalar>(
    report: &RunReport<T>,
    spec: &LinearMDPSpec<T>,
) -> Result<Vec<QSnapshot<T>>> {
    check_fit_pattern(report)?;
    if spec.dim() != report.dim || spec.horizon() != report.horizon {
        return Err(invalid("spec dimensions do not match the report"));
    }
    let mut grams = fresh_grams(report)?;
    let mut snaps = Vec::with_capacity(report.switch_episodes.len());
    let mut fed = 0;
    for &b in &report.switch_episodes {
        for trace in &report.traces[fed..b - 1] {
            for (g, phi) in grams.iter_mut().zip(&trace.features) {
                g.update(phi)?;
            }
        }
        fed = b - 1;
        snaps.push(fit_with_grams(&report.traces[..b - 1], &grams, spec.features(), report.beta)?);
    }
    Ok(snaps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionCheck {
    pub fraction: f64,
    pub n_pairs: usize,
    /// `fraction ≥ 1 − δ`.
    pub meets_confidence: bool,
    pub check: CheckResult,
}

fn fraction_check<T: Scalar>(report: &RunReport<T>, name: &'static str, tally: Tally) -> FractionCheck {
    let n_pairs = tally.n_checked;
    let fraction = if n_pairs == 0 {
        1.0
    } else {
        1.0 - tally.n_violations as f64 / n_pairs as f64
    };
    let meets = fraction >= 1.0 - report.delta.to_f64_lossy();
    let mut check = tally.finish();
    check.name = name.to_string();
    check.pass = meets;
    check.status = if meets { CheckStatus::Pass } else { CheckStatus::Fail };
    check.detail = Some(format!("fraction = {fraction:.6} over {n_pairs} pairs"));
    FractionCheck {
        fraction,
        n_pairs,
        meets_confidence: meets,
        check,
    }
}

/// Fraction of `(s, a, h, refit)` with `Q_h^k(s,a) ≥ Q*_h(s,a) − 1e-8`.
pub fn check_optimism<T: Scalar>(report: &RunReport<T>, spec: &LinearMDPSpec<T>) -> Result<FractionCheck> {
    let snaps = replay_snapshots(report, spec)?;
    let opt = optimal_values(spec);
    let mut tally = Tally::new("optimism");
    for snap in &snaps {
        for h in 0..spec.horizon() {
            for s in 0..spec.n_states() {
                for a in 0..spec.n_actions() {
                    let q = snap.q_value(h, spec.features().phi(s, a))?;
                    tally.record(snap.fit_episode(), h, (q - opt.q[h][s][a]).to_f64_lossy() + OPTIMISM_TOL);
                }
            }
        }
    }
    Ok(fraction_check(report, "optimism", tally))
}

/// Self-normalized deviation bound, checked for the executed policies and `π*`:
/// `|φᵀ(w_h^b − w_h^π) − [P_h(V_{h+1}^b − V_{h+1}^π)](s,a)| ≤ β·√(φᵀ(Λ_h^b)⁻¹φ)`.
/// The bound quantifies over every fixed policy; only these are covered.
pub fn check_value_deviation<T: Scalar>(report: &RunReport<T>, spec: &LinearMDPSpec<T>) -> Result<FractionCheck> {
    let snaps = replay_snapshots(report, spec)?;
    let star = optimal_values(spec).greedy_policy();
    let features = spec.features();
    let star_fits = realizability_check(spec, &star)?;
    let star_values = policy_values(spec, &star)?;
    let mut tally = Tally::new("value_deviation");
    for snap in &snaps {
        let own = snap.greedy_policy(features);
        let own_fits = realizability_check(spec, &own)?;
        let own_values = policy_values(spec, &own)?;
        // V^b_h(s) = max_a Q^b_h(s, a), with V^b_H = 0.
        let snap_values: Vec<Vec<T>> = (0..=spec.horizon())
            .map(|h| {
                (0..spec.n_states())
                    .map(|s| {
                        if h == spec.horizon() {
                            T::zero()
                        } else {
                            (0..spec.n_actions())
                                .map(|a| snap.q_value(h, features.phi(s, a)).unwrap_or(T::zero()))
                                .fold(T::neg_infinity(), T::max)
                        }
                    })
                    .collect()
            })
            .collect();
        for (fits, values) in [(&own_fits, &own_values), (&star_fits, &star_values)] {
            for h in 0..spec.horizon() {
                let w_snap = &snap.stages()[h].weights;
                let diff_next: Vec<T> = snap_values[h + 1]
                    .iter()
                    .zip(&values[h + 1])
                    .map(|(&a, &b)| a - b)
                    .collect();
                for s in 0..spec.n_states() {
                    for a in 0..spec.n_actions() {
                        let phi = features.phi(s, a);
                        let lhs = dot(phi, w_snap) - dot(phi, &fits[h].weights) - dot(spec.transition(h, s, a), &diff_next);
                        let width = snap.bonus(h, phi)?;
                        tally.record(snap.fit_episode(), h, (width - lhs.abs()).to_f64_lossy() + OPTIMISM_TOL);
                    }
                }
            }
        }
    }
    Ok(fraction_check(report, "value_deviation", tally))
}

/// Recomputes `Regret(T)` from the traces and the stored `b_k` column: refit
/// at every recorded switch, evaluate the greedy policy exactly, and sum.
pub fn replay_regret<T: Scalar>(report: &RunReport<T>, spec: &LinearMDPSpec<T>) -> Result<T> {
    let snaps = replay_snapshots(report, spec)?;
    let opt = optimal_values(spec);
    let mut start_values: Vec<T> = Vec::new();
    let mut next = 0;
    let mut total = T::zero();
    for rec in &report.per_episode {
        if rec.fit_episode == rec.episode {
            let policy: Policy = snaps[next].greedy_policy(spec.features());
            start_values = policy_values(spec, &policy)?.swap_remove(0);
            next += 1;
        }
        total += instantaneous_regret(opt.v[0][rec.initial_state], start_values[rec.initial_state]);
    }
    Ok(total)
}

/// Bitwise agreement between the stored and the replayed `Regret(T)`.
pub fn check_regret_replay<T: Scalar>(report: &RunReport<T>, spec: &LinearMDPSpec<T>) -> Result<CheckResult> {
    let replayed = replay_regret(report, spec)?;
    let mut tally = Tally::new("regret_replay");
    let same = replayed == report.regret();
    tally.record(report.per_episode.len(), 0, if same { 0.0 } else { -1.0 });
    Ok(tally
        .finish()
        .with_detail(format!("stored {}, replayed {replayed}", report.regret())))
}

/// Q-value tables of the greedy policy at each refit, for callers that want them.
pub fn refit_policy_q_values<T: Scalar>(
    report: &RunReport<T>,
    spec: &LinearMDPSpec<T>,
) -> Result<Vec<Vec<Vec<Vec<T>>>>> {
    replay_snapshots(report, spec)?
        .iter()
        .map(|snap| policy_q_values(spec, &snap.greedy_policy(spec.features())))
        .collect()
}

/// Runs every applicable check. Spec-dependent checks are skipped without a spec.
pub fn run_all<T: Scalar>(
    report: &RunReport<T>,
    scheduler: &SchedulerKind<T>,
    spec: Option<&LinearMDPSpec<T>>,
) -> Result<DiagnosticsReport> {
    let rep = replay(report)?;
    let mut checks = vec![
        check_replay_fidelity(report, &rep),
        check_det_bound(report, report.dim, report.lambda),
        elliptical_from_replay(report, &rep),
        check_norm_ratio_on_run(report)?,
    ];
    checks.push(match scheduler {
        SchedulerKind::UniformBatch { .. } => count_bad_indices(report, scheduler)?.check,
        _ => CheckResult::not_applicable("bad_indices", "uniform-batch runs only"),
    });
    checks.push(match scheduler {
        SchedulerKind::DetSwitch { .. } => check_bonus_ratio(report, scheduler)?,
        _ => CheckResult::not_applicable("bonus_ratio", "determinant-switch runs only"),
    });
    match spec {
        Some(spec) => {
            checks.push(check_optimism(report, spec)?.check);
            checks.push(check_value_deviation(report, spec)?.check);
            checks.push(check_regret_replay(report, spec)?);
        }
        None => {
            for name in ["optimism", "value_deviation", "regret_replay"] {
                checks.push(CheckResult::not_applicable(name, "needs the environment spec"));
            }
        }
    }
    Ok(DiagnosticsReport::new(checks))
}
