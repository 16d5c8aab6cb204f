//! Block coordinate descent over powers and schedules, the per-branch joint
//! algorithm and the three-branch process selection.

use std::time::Instant;

use ntn_convex::{solve_lp, solve_smooth, SolveOptions, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::greedy_schedule;
use crate::channel::{approx_rates, ThetaTensor};
use crate::error::{NtnError, Result};
use crate::latency::{efficiencies, stream_feasible, PowerMatrix, RouteMode, ScheduleTensor};
use crate::params::SystemParams;
use crate::sca::{
    build_power_subproblem, build_scheduling_subproblem, reduce_no_mec, satellite_only_solution, ExpansionPoint,
};
use crate::scenario::ScenarioInstance;

#[derive(Debug, Clone)]
pub struct OrchestratorOptions {
    pub solver: SolveOptions,
    /// Relative stop tolerance of the power and schedule loops.
    pub block_tol: f64,
    /// Relative stop tolerance of the joint loop.
    pub joint_tol: f64,
    pub max_block_iterations: usize,
    pub max_joint_iterations: usize,
    /// Worse-than-incumbent steps tolerated before a loop stops.
    pub max_stalls: usize,
    /// Initial powers are uniform on `[0, init_power]`.
    pub init_power: f64,
    /// Also run from uniform full power with the greedy schedule, power block
    /// first, and keep the better of the two runs.
    pub full_power_start: bool,
    pub seed: u64,
}

impl Default for OrchestratorOptions {
    fn default() -> Self {
        Self {
            solver: SolveOptions::default(),
            block_tol: 1e-2,
            joint_tol: 1e-3,
            max_block_iterations: 50,
            max_joint_iterations: 50,
            max_stalls: 3,
            init_power: 1e-3,
            full_power_start: true,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Power,
    Schedule,
    ClosedForm,
}

impl Block {
    pub fn label(self) -> &'static str {
        match self {
            Block::Power => "power",
            Block::Schedule => "schedule",
            Block::ClosedForm => "closed_form",
        }
    }
}

/// One subproblem solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iter: usize,
    /// Joint-loop round the step belongs to; 0 outside the joint loop.
    pub round: usize,
    pub block: Block,
    /// Incumbent `δ_T` after the step (unaligned).
    pub delta_t: f64,
    /// `δ_T` of the candidate the step produced.
    pub candidate: f64,
    pub status: String,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub steps: Vec<TraceStep>,
}

impl IterationTrace {
    fn push(&mut self, block: Block, delta_t: f64, candidate: f64, status: impl Into<String>, started: Instant) {
        self.steps.push(TraceStep {
            iter: self.steps.len() + 1,
            round: 0,
            block,
            delta_t,
            candidate,
            status: status.into(),
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    fn extend(&mut self, other: IterationTrace, round: usize) {
        for mut s in other.steps {
            s.iter = self.steps.len() + 1;
            s.round = round;
            self.steps.push(s);
        }
    }

    /// Incumbent values in order.
    pub fn deltas(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.delta_t).collect()
    }

    pub fn count(&self, block: Block) -> usize {
        self.steps.iter().filter(|s| s.block == block).count()
    }

    /// Iterations of `block` in each joint round, in round order.
    pub fn per_round(&self, block: Block) -> Vec<usize> {
        let rounds = self.steps.iter().map(|s| s.round).max().unwrap_or(0);
        (0..=rounds)
            .map(|r| self.steps.iter().filter(|s| s.round == r && s.block == block).count())
            .filter(|&n| n > 0)
            .collect()
    }

    /// CSV with columns `iter,block,delta_t,status[,wall_ms]`.
    pub fn to_csv(&self, with_wall_clock: bool) -> String {
        let mut out = String::from(if with_wall_clock {
            "iter,block,delta_t,status,wall_ms\n"
        } else {
            "iter,block,delta_t,status\n"
        });
        for s in &self.steps {
            out.push_str(&format!("{},{},{},{}", s.iter, s.block.label(), fmt_f64(s.delta_t), s.status));
            if with_wall_clock {
                out.push_str(&format!(",{:.3}", s.wall_ms));
            }
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip formatting; `inf` for infinity.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

/// Outcome of one branch at one segmentation count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchResult {
    pub branch: RouteMode,
    pub n_t: usize,
    /// Segment length rounded up to whole packet times.
    pub delta_t: f64,
    /// Segment length before rounding.
    pub delta_raw: f64,
    pub t_total: f64,
    pub power: PowerMatrix,
    pub eta: ScheduleTensor,
    pub trace: IterationTrace,
}

/// Winner of the three branches plus every branch that produced a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessResult {
    pub winner: BranchResult,
    pub branches: Vec<BranchResult>,
}

/// Rounds `δ` up to a whole number of packet times.
pub fn align_to_packets(delta: f64, eps0: f64) -> f64 {
    if !delta.is_finite() {
        return delta;
    }
    ((delta / eps0 - 1e-9).ceil()).max(1.0) * eps0
}

/// Smallest `δ_T` meeting every demand with the approximate rates, at least the
/// branch floor; infinite when a stream cap is violated or a device with data
/// has no throughput.
pub fn true_delta(
    power: &PowerMatrix,
    eta: &ScheduleTensor,
    theta: &ThetaTensor,
    sys: &SystemParams,
    instance: &ScenarioInstance,
    mode: RouteMode,
) -> f64 {
    let rates = approx_rates(power, theta, sys, instance);
    delta_from_rates(eta, &rates, sys, instance, mode)
}

/// [`true_delta`] for given uplink rates `[u][t]`.
pub fn delta_from_rates(
    eta: &ScheduleTensor,
    rates: &[Vec<f64>],
    sys: &SystemParams,
    instance: &ScenarioInstance,
    mode: RouteMode,
) -> f64 {
    if eta.mode() > mode {
        return f64::INFINITY;
    }
    if !stream_feasible(eta, rates, sys, instance).feasible {
        return f64::INFINITY;
    }
    let ra = efficiencies(eta, rates, sys, instance);
    let mut delta = mode.floor_multiple() * sys.eps0;
    for (d, row) in instance.data_bits.iter().zip(&ra) {
        if *d <= 0.0 {
            continue;
        }
        let supply: f64 = row.iter().sum();
        if supply <= 0.0 {
            return f64::INFINITY;
        }
        delta = delta.max(d / supply);
    }
    delta
}

fn relative_change(prev: f64, next: f64) -> f64 {
    if prev == next {
        0.0
    } else if !prev.is_finite() || !next.is_finite() {
        f64::INFINITY
    } else {
        (1.0 - prev / next).abs()
    }
}

fn status_label(s: Status) -> &'static str {
    match s {
        Status::Optimal => "optimal",
        Status::MaxIter => "max_iter",
        Status::Infeasible => "infeasible",
        Status::Unbounded => "unbounded",
    }
}

/// Result of one block loop.
#[derive(Debug, Clone)]
pub struct PowerOutcome {
    pub power: PowerMatrix,
    pub delta_t: f64,
    pub trace: IterationTrace,
}

#[derive(Debug, Clone)]
pub struct ScheduleOutcome {
    pub eta: ScheduleTensor,
    pub delta_t: f64,
    pub trace: IterationTrace,
}

/// Power allocation loop: successive surrogate solves for a fixed schedule.
#[allow(clippy::too_many_arguments)]
pub fn algorithm1_power(
    eta: &ScheduleTensor,
    p_prev: &PowerMatrix,
    theta: &ThetaTensor,
    sys: &SystemParams,
    instance: &ScenarioInstance,
    mode: RouteMode,
    opts: &OrchestratorOptions,
) -> Result<PowerOutcome> {
    let mut best = p_prev.clone();
    let mut best_delta = true_delta(&best, eta, theta, sys, instance, mode);
    let mut expand = best.clone();
    let mut last = best_delta;
    let mut stalls = 0;
    let mut trace = IterationTrace::default();
    for _ in 0..opts.max_block_iterations {
        let started = Instant::now();
        let point = ExpansionPoint {
            p0: expand.clone(),
            eta0: eta.clone(),
        };
        let sub = match build_power_subproblem(&point, eta, theta, sys, instance, mode) {
            Ok(s) => s,
            Err(NtnError::InfeasibleExpansionPoint) => {
                trace.push(Block::Power, best_delta, f64::INFINITY, "infeasible_start", started);
                break;
            }
            Err(e) => return Err(e),
        };
        let sol = solve_smooth(&sub.program, &sub.start, &opts.solver)?;
        let (cand, _) = sub.decode(&sol.x, sys.p_max);
        let delta = true_delta(&cand, eta, theta, sys, instance, mode);
        let improved = delta <= best_delta;
        if improved {
            best = cand.clone();
            best_delta = delta;
        } else {
            stalls += 1;
        }
        let label = format!("{}{}", status_label(sol.status), if improved { "" } else { "_stall" });
        trace.push(Block::Power, best_delta, delta, label, started);
        if !delta.is_finite() {
            break;
        }
        let converged = relative_change(last, delta) <= opts.block_tol;
        last = delta;
        expand = cand;
        if converged || stalls >= opts.max_stalls {
            break;
        }
    }
    Ok(PowerOutcome {
        power: best,
        delta_t: best_delta,
        trace,
    })
}

/// Scheduling loop: successive linearized LPs for fixed powers.
#[allow(clippy::too_many_arguments)]
pub fn algorithm2_schedule(
    eta_prev: &ScheduleTensor,
    power: &PowerMatrix,
    theta: &ThetaTensor,
    sys: &SystemParams,
    instance: &ScenarioInstance,
    mode: RouteMode,
    opts: &OrchestratorOptions,
) -> Result<ScheduleOutcome> {
    let mut best = eta_prev.clone();
    let mut best_delta = true_delta(power, &best, theta, sys, instance, mode);
    let mut expand = best.clone();
    let mut last = best_delta;
    let mut stalls = 0;
    let mut trace = IterationTrace::default();
    for _ in 0..opts.max_block_iterations {
        let started = Instant::now();
        let point = ExpansionPoint {
            p0: power.clone(),
            eta0: expand.clone(),
        };
        let sub = build_scheduling_subproblem(&point, power, theta, sys, instance, mode)?;
        let sol = solve_lp(&sub.program, &opts.solver)?;
        let (cand, _) = sub.decode(&sol.x);
        let delta = true_delta(power, &cand, theta, sys, instance, mode);
        let improved = delta <= best_delta;
        if improved {
            best = cand.clone();
            best_delta = delta;
        } else {
            stalls += 1;
        }
        let label = format!("{}{}", status_label(sol.status), if improved { "" } else { "_stall" });
        trace.push(Block::Schedule, best_delta, delta, label, started);
        let converged = relative_change(last, delta) <= opts.block_tol;
        last = delta;
        if delta.is_finite() {
            expand = cand;
        }
        if converged || stalls >= opts.max_stalls {
            break;
        }
    }
    Ok(ScheduleOutcome {
        eta: best,
        delta_t: best_delta,
        trace,
    })
}

fn branch_stream(mode: RouteMode) -> u64 {
    match mode {
        RouteMode::SatelliteOnly => 0,
        RouteMode::SatUavNoMec => 1,
        RouteMode::SatUavMec => 2,
    }
}

/// Random initial powers, uniform on `[0, init_power]`, seeded per
/// `(seed, n_t, branch)`.
pub fn initial_power(u: usize, n_t: usize, mode: RouteMode, opts: &OrchestratorOptions) -> PowerMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream((branch_stream(mode) << 32) | n_t as u64);
    PowerMatrix {
        p: (0..u)
            .map(|_| (0..n_t).map(|_| rng.random::<f64>() * opts.init_power).collect())
            .collect(),
    }
}

/// Starting schedule: everything through the UAV relay.
pub fn initial_schedule(u: usize, n_t: usize) -> ScheduleTensor {
    ScheduleTensor::all_relay(u, n_t)
}

/// Joint loop: schedule block, then power block, repeated until `δ_T`
/// settles.
#[derive(Debug, Clone)]
pub struct JointOutcome {
    pub power: PowerMatrix,
    pub eta: ScheduleTensor,
    pub delta_t: f64,
    pub trace: IterationTrace,
}

pub fn algorithm3_joint(
    theta: &ThetaTensor,
    sys: &SystemParams,
    instance: &ScenarioInstance,
    mode: RouteMode,
    n_t: usize,
    opts: &OrchestratorOptions,
) -> Result<JointOutcome> {
    if mode == RouteMode::SatelliteOnly {
        return Err(NtnError::param("mode", "the joint loop runs on the UAV branches"));
    }
    if n_t == 0 {
        return Err(NtnError::param("n_t", "at least one segment"));
    }
    let u = instance.num_devices();
    let mut eta0 = initial_schedule(u, n_t);
    if mode == RouteMode::SatUavNoMec {
        let p = PowerMatrix::uniform(u, n_t, 0.0);
        eta0 = reduce_no_mec(&ExpansionPoint { p0: p, eta0 }).0.eta0;
    }
    let first = joint_from(initial_power(u, n_t, mode, opts), eta0, false, theta, sys, instance, mode, opts)?;
    if !opts.full_power_start {
        return Ok(first);
    }
    let full = PowerMatrix::uniform(u, n_t, sys.p_max);
    let rates = approx_rates(&full, theta, sys, instance);
    let greedy = greedy_schedule(&rates, sys, instance, mode == RouteMode::SatUavMec);
    let second = joint_from(full, greedy, true, theta, sys, instance, mode, opts)?;
    Ok(if second.delta_t < first.delta_t { second } else { first })
}

/// Joint loop from `(p0, eta0)`. The schedule block runs first unless
/// `power_first` is set.
#[allow(clippy::too_many_arguments)]
pub fn joint_from(
    p0: PowerMatrix,
    eta0: ScheduleTensor,
    power_first: bool,
    theta: &ThetaTensor,
    sys: &SystemParams,
    instance: &ScenarioInstance,
    mode: RouteMode,
    opts: &OrchestratorOptions,
) -> Result<JointOutcome> {
    let mut power = p0;
    let mut eta = eta0;
    let mut trace = IterationTrace::default();
    let mut prev = f64::INFINITY;
    let mut delta = f64::INFINITY;
    for round in 0..opts.max_joint_iterations {
        if !(power_first && round == 0) {
            let sched = algorithm2_schedule(&eta, &power, theta, sys, instance, mode, opts)?;
            eta = sched.eta;
            trace.extend(sched.trace, round + 1);
        }
        let pw = algorithm1_power(&eta, &power, theta, sys, instance, mode, opts)?;
        power = pw.power;
        trace.extend(pw.trace, round + 1);
        delta = pw.delta_t;
        if relative_change(prev, delta) <= opts.joint_tol {
            break;
        }
        prev = delta;
    }
    Ok(JointOutcome {
        power,
        eta,
        delta_t: delta,
        trace,
    })
}

fn finish(
    branch: RouteMode,
    n_t: usize,
    delta_raw: f64,
    power: PowerMatrix,
    eta: ScheduleTensor,
    trace: IterationTrace,
    sys: &SystemParams,
) -> BranchResult {
    let delta_t = align_to_packets(delta_raw, sys.eps0);
    BranchResult {
        branch,
        n_t,
        delta_t,
        delta_raw,
        t_total: n_t as f64 * delta_t + sys.epsa,
        power,
        eta,
        trace,
    }
}

/// Runs one branch at one segmentation count.
pub fn run_branch(
    branch: RouteMode,
    n_t: usize,
    theta: &ThetaTensor,
    sys: &SystemParams,
    instance: &ScenarioInstance,
    opts: &OrchestratorOptions,
) -> Result<BranchResult> {
    match branch {
        RouteMode::SatelliteOnly => {
            let started = Instant::now();
            let s = satellite_only_solution(sys, &instance.data_bits, n_t)?;
            let mut trace = IterationTrace::default();
            trace.push(Block::ClosedForm, s.delta_t, s.delta_t, "optimal", started);
            Ok(finish(branch, n_t, s.delta_t, s.power, s.eta, trace, sys))
        }
        _ => {
            let out = algorithm3_joint(theta, sys, instance, branch, n_t, opts)?;
            if !out.delta_t.is_finite() {
                return Err(NtnError::AllBranchesFailed);
            }
            Ok(finish(branch, n_t, out.delta_t, out.power, out.eta, out.trace, sys))
        }
    }
}

/// Satellite-only latency for `n_t` segments, without building any matrices.
fn satellite_total(n_t: usize, sys: &SystemParams, data_bits: &[f64]) -> f64 {
    let need = data_bits.iter().fold(0.0f64, |m, &d| m.max(d / (n_t as f64 * sys.r_sat)));
    n_t as f64 * align_to_packets(sys.eps0.max(need), sys.eps0) + sys.epsa
}

/// Range of segment counts that covers the satellite-only optimum.
pub fn satellite_nt_range(sys: &SystemParams, data_bits: &[f64]) -> Vec<usize> {
    let d = data_bits.iter().fold(0.0f64, |m, &d| m.max(d));
    let top = (d / (sys.r_sat * sys.eps0)).ceil().max(1.0) as usize;
    (1..=top).collect()
}

/// Best segmentation count of a branch. Ties keep the larger `N_T`.
pub fn sweep_nt(
    branch: RouteMode,
    theta: &ThetaTensor,
    sys: &SystemParams,
    instance: &ScenarioInstance,
    n_t_range: &[usize],
    opts: &OrchestratorOptions,
) -> Result<BranchResult> {
    if n_t_range.is_empty() || n_t_range.contains(&0) {
        return Err(NtnError::param("n_t_range", "non-empty and every entry at least 1"));
    }
    if branch == RouteMode::SatelliteOnly {
        let mut best = n_t_range[0];
        let mut best_t = f64::INFINITY;
        for &n in n_t_range {
            let t = satellite_total(n, sys, &instance.data_bits);
            if t <= best_t {
                best = n;
                best_t = t;
            }
        }
        return run_branch(branch, best, theta, sys, instance, opts);
    }
    let results: Vec<Result<BranchResult>> = n_t_range
        .par_iter()
        .map(|&n| run_branch(branch, n, theta, sys, instance, opts))
        .collect();
    let mut best: Option<BranchResult> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.t_total <= b.t_total) {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or(NtnError::AllBranchesFailed))
}

/// Segmentation counts tried for each branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRanges {
    pub satellite: Vec<usize>,
    pub no_mec: Vec<usize>,
    pub with_mec: Vec<usize>,
}

impl BranchRanges {
    /// One fixed count per branch.
    pub fn fixed(sat: usize, no_mec: usize, with_mec: usize) -> Self {
        Self {
            satellite: vec![sat],
            no_mec: vec![no_mec],
            with_mec: vec![with_mec],
        }
    }

    fn get(&self, mode: RouteMode) -> &[usize] {
        match mode {
            RouteMode::SatelliteOnly => &self.satellite,
            RouteMode::SatUavNoMec => &self.no_mec,
            RouteMode::SatUavMec => &self.with_mec,
        }
    }
}

/// Solves all three branches and keeps the lowest total latency; ties go to
/// the branch with fewer stages.
pub fn algorithm4_process(
    theta: &ThetaTensor,
    sys: &SystemParams,
    instance: &ScenarioInstance,
    ranges: &BranchRanges,
    opts: &OrchestratorOptions,
) -> Result<ProcessResult> {
    let results: Vec<Result<BranchResult>> = RouteMode::ALL
        .par_iter()
        .map(|&m| sweep_nt(m, theta, sys, instance, ranges.get(m), opts))
        .collect();
    let branches: Vec<BranchResult> = results.into_iter().filter_map(|r| r.ok()).collect();
    let winner = branches
        .iter()
        .fold(None::<&BranchResult>, |best, r| match best {
            Some(b) if b.t_total <= r.t_total => Some(b),
            _ => Some(r),
        })
        .cloned()
        .ok_or(NtnError::AllBranchesFailed)?;
    Ok(ProcessResult { winner, branches })
}
