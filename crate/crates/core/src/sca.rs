//! Surrogate rate bounds, the `g` transform and the two convex subproblems:
//! power allocation (smooth, solved by the barrier method) and stream
//! scheduling (an LP).
//!
//! Both subproblems use the epigraph form `maximize s` with `s = 1/δ_T`.

use std::f64::consts::LN_2;
use std::sync::Arc;

use nalgebra::DMatrix;
use ntn_convex::{Constraint, ConvexProgram, LinearConstraint, SmoothConvex, SparseVec};

use crate::channel::ThetaTensor;
use crate::error::{NtnError, Result};
use crate::latency::{PowerMatrix, RouteMode, ScheduleTensor, Stages};
use crate::params::SystemParams;
use crate::scenario::ScenarioInstance;

/// Previous iterate around which the surrogates are built.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionPoint {
    pub p0: PowerMatrix,
    pub eta0: ScheduleTensor,
}

/// `I = Σ_{v≠u} p_{v,t} θ_{u,v,k}` (noise excluded).
pub fn interference(u: usize, k: usize, t: usize, p: &PowerMatrix, theta: &ThetaTensor) -> f64 {
    (0..p.num_devices())
        .filter(|&v| v != u)
        .map(|v| p.get(v, t) * theta.get(u, v, k))
        .sum()
}

fn own_signal(u: usize, k: usize, t: usize, p: &PowerMatrix, theta: &ThetaTensor) -> f64 {
    p.get(u, t) * theta.get(u, u, k)
}

/// Concave lower bound `R̄` of the approximate rate, tight at `p0`.
pub fn lower_bound_rate(
    u: usize,
    k: usize,
    t: usize,
    p: &PowerMatrix,
    p0: &PowerMatrix,
    theta: &ThetaTensor,
    sys: &SystemParams,
) -> f64 {
    let a = own_signal(u, k, t, p, theta) + interference(u, k, t, p, theta) + sys.sigma2;
    let j0 = interference(u, k, t, p0, theta) + sys.sigma2;
    let j = interference(u, k, t, p, theta) + sys.sigma2;
    sys.rate_scale() * (a.log2() - j0.log2() - (j - j0) / (LN_2 * j0))
}

/// Convex upper bound `R̃` of the approximate rate, tight at `p0`.
pub fn upper_bound_rate(
    u: usize,
    k: usize,
    t: usize,
    p: &PowerMatrix,
    p0: &PowerMatrix,
    theta: &ThetaTensor,
    sys: &SystemParams,
) -> f64 {
    let a = own_signal(u, k, t, p, theta) + interference(u, k, t, p, theta) + sys.sigma2;
    let a0 = own_signal(u, k, t, p0, theta) + interference(u, k, t, p0, theta) + sys.sigma2;
    let j = interference(u, k, t, p, theta) + sys.sigma2;
    sys.rate_scale() * (a0.log2() + (a - a0) / (LN_2 * a0) - j.log2())
}

/// `g(x) = x / (C x + 1 - η^L)`, the overall efficiency as a function of the
/// UL rate `x`, where `C` collects the time per bit of the other stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GTransform {
    pub c: f64,
    pub eta_l: f64,
}

impl GTransform {
    pub fn new(c: f64, eta_l: f64) -> Result<Self> {
        if !(c >= 0.0) || !(0.0..=1.0).contains(&eta_l) {
            return Err(NtnError::param("g_transform", "needs C >= 0 and 0 <= eta_L <= 1"));
        }
        if c == 0.0 && eta_l == 1.0 {
            return Err(NtnError::UndefinedTransform);
        }
        Ok(Self { c, eta_l })
    }

    fn relay(&self) -> f64 {
        1.0 - self.eta_l
    }

    /// True when `g` does not depend on the UL rate.
    pub fn is_constant(&self) -> bool {
        self.relay() <= 0.0
    }

    /// Value; for `x < 0` the tangent at zero keeps `g` concave and C¹.
    pub fn value(&self, x: f64) -> f64 {
        let q = self.relay();
        if q <= 0.0 {
            1.0 / self.c
        } else if x < 0.0 {
            x / q
        } else {
            x / (self.c * x + q)
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        let q = self.relay();
        if q <= 0.0 {
            0.0
        } else if x < 0.0 {
            1.0 / q
        } else {
            q / (self.c * x + q).powi(2)
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        let q = self.relay();
        if q <= 0.0 || x < 0.0 {
            0.0
        } else {
            -2.0 * self.c * q / (self.c * x + q).powi(3)
        }
    }
}

/// `g_u(x)` for one device and segment.
pub fn g_transform(x: f64, c: f64, eta_l: f64) -> Result<f64> {
    Ok(GTransform::new(c, eta_l)?.value(x))
}

/// `C = η^L/R^L + (η^S + ζ η^C)/R^S_k + η^C/R^C_k` for device `u` in segment `t`.
pub fn stage_constant(u: usize, t: usize, eta: &ScheduleTensor, sys: &SystemParams, instance: &ScenarioInstance) -> f64 {
    let k = instance.serving_uav(u);
    let (l, s, c) = (eta.eta_l[t], eta.eta_s[u][t], eta.eta_c[u][t]);
    l / sys.r_sat + (s + sys.zeta(u) * c) / sys.r_bh(k) + c / sys.r_mec(k)
}

/// Closed-form solution of the satellite-only branch.
#[derive(Debug, Clone, PartialEq)]
pub struct SatelliteOnly {
    pub power: PowerMatrix,
    pub eta: ScheduleTensor,
    pub delta_t: f64,
}

pub fn satellite_only_solution(sys: &SystemParams, data_bits: &[f64], n_t: usize) -> Result<SatelliteOnly> {
    if n_t == 0 {
        return Err(NtnError::param("n_t", "at least one segment"));
    }
    let need = data_bits.iter().fold(0.0f64, |m, &d| m.max(d / (n_t as f64 * sys.r_sat)));
    Ok(SatelliteOnly {
        power: PowerMatrix::uniform(data_bits.len(), n_t, sys.p_max),
        eta: ScheduleTensor::satellite_only(data_bits.len(), n_t),
        delta_t: sys.eps0.max(need),
    })
}

/// Removes the MEC path: `η^C` moves to `η^S`.
pub fn reduce_no_mec(point: &ExpansionPoint) -> (ExpansionPoint, RouteMode) {
    let mut eta = point.eta0.clone();
    for (rs, rc) in eta.eta_s.iter_mut().zip(eta.eta_c.iter_mut()) {
        for (s, c) in rs.iter_mut().zip(rc.iter_mut()) {
            *s += *c;
            *c = 0.0;
        }
    }
    (
        ExpansionPoint {
            p0: point.p0.clone(),
            eta0: eta,
        },
        RouteMode::SatUavNoMec,
    )
}

fn check_uav_mode(mode: RouteMode) -> Result<()> {
    if mode == RouteMode::SatelliteOnly {
        return Err(NtnError::param("mode", "subproblems exist only for the UAV branches"));
    }
    Ok(())
}

/// Largest `s` allowed by the floor `δ_T >= m ε_0`.
pub fn s_max(mode: RouteMode, sys: &SystemParams) -> f64 {
    1.0 / (mode.floor_multiple() * sys.eps0)
}

// ---------------------------------------------------------------- power

/// Rate data shared by all constraints of one power subproblem.
struct RateModel {
    n_t: usize,
    /// `θ_{u,·,k_u}` for each device at its serving UAV.
    rows: Vec<Vec<f64>>,
    sigma2: f64,
    /// `(1 - γ) B / ln 2`.
    c_ln: f64,
    /// `I + σ²` at the expansion point, `[u][t]`.
    j0: Vec<Vec<f64>>,
    /// `p θ_uu + I + σ²` at the expansion point, `[u][t]`.
    a0: Vec<Vec<f64>>,
}

impl RateModel {
    #[inline]
    fn idx(&self, u: usize, t: usize) -> usize {
        1 + u * self.n_t + t
    }

    fn total(&self, u: usize, t: usize, x: &[f64]) -> f64 {
        let row = &self.rows[u];
        self.sigma2 + (0..row.len()).map(|v| x[self.idx(v, t)] * row[v]).sum::<f64>()
    }

    fn lower(&self, u: usize, t: usize, x: &[f64]) -> f64 {
        let a = self.total(u, t, x);
        let j = a - x[self.idx(u, t)] * self.rows[u][u];
        let j0 = self.j0[u][t];
        self.c_ln * ((a / j0).ln() - (j - j0) / j0)
    }

    /// Adds `w ∇R̄` into `g`.
    fn lower_grad(&self, u: usize, t: usize, x: &[f64], w: f64, g: &mut SparseVec) {
        let a = self.total(u, t, x);
        let j0 = self.j0[u][t];
        for (v, &th) in self.rows[u].iter().enumerate() {
            let d = if v == u { th / a } else { th / a - th / j0 };
            g.push((self.idx(v, t), w * self.c_ln * d));
        }
    }

    fn lower_grad_dense(&self, u: usize, t: usize, x: &[f64]) -> Vec<f64> {
        let a = self.total(u, t, x);
        let j0 = self.j0[u][t];
        self.rows[u]
            .iter()
            .enumerate()
            .map(|(v, &th)| self.c_ln * if v == u { th / a } else { th / a - th / j0 })
            .collect()
    }

    fn upper(&self, u: usize, t: usize, x: &[f64]) -> f64 {
        let a = self.total(u, t, x);
        let j = a - x[self.idx(u, t)] * self.rows[u][u];
        let a0 = self.a0[u][t];
        self.c_ln * ((a0 / j).ln() + (a - a0) / a0)
    }

    fn upper_grad(&self, u: usize, t: usize, x: &[f64], w: f64, g: &mut SparseVec) {
        let a = self.total(u, t, x);
        let j = a - x[self.idx(u, t)] * self.rows[u][u];
        let a0 = self.a0[u][t];
        for (v, &th) in self.rows[u].iter().enumerate() {
            let d = if v == u { th / a0 } else { th / a0 - th / j };
            g.push((self.idx(v, t), w * self.c_ln * d));
        }
    }

    fn upper_hess(&self, u: usize, t: usize, x: &[f64], w: f64, h: &mut DMatrix<f64>) {
        let a = self.total(u, t, x);
        let j = a - x[self.idx(u, t)] * self.rows[u][u];
        let f = w * self.c_ln / (j * j);
        let row = &self.rows[u];
        for v1 in (0..row.len()).filter(|&v| v != u) {
            let i1 = self.idx(v1, t);
            for v2 in (0..row.len()).filter(|&v| v != u) {
                h[(i1, self.idx(v2, t))] += f * row[v1] * row[v2];
            }
        }
    }
}

/// `s - (1/D_u) Σ_t g_{u,t}(R̄_{u,t}(P)) <= 0`.
struct DemandConstraint {
    model: Arc<RateModel>,
    u: usize,
    inv_d: f64,
    g: Vec<GTransform>,
}

impl SmoothConvex for DemandConstraint {
    fn value(&self, x: &[f64]) -> f64 {
        let supply: f64 = self
            .g
            .iter()
            .enumerate()
            .map(|(t, g)| {
                if g.is_constant() {
                    g.value(0.0)
                } else {
                    g.value(self.model.lower(self.u, t, x))
                }
            })
            .sum();
        x[0] - self.inv_d * supply
    }

    fn gradient(&self, x: &[f64]) -> SparseVec {
        let mut out = vec![(0, 1.0)];
        for (t, g) in self.g.iter().enumerate() {
            if g.is_constant() {
                continue;
            }
            let r = self.model.lower(self.u, t, x);
            self.model.lower_grad(self.u, t, x, -self.inv_d * g.d1(r), &mut out);
        }
        out
    }

    fn add_hessian(&self, x: &[f64], scale: f64, h: &mut DMatrix<f64>) {
        let m = &self.model;
        let u = self.u;
        for (t, g) in self.g.iter().enumerate() {
            if g.is_constant() {
                continue;
            }
            let r = m.lower(u, t, x);
            let grad = m.lower_grad_dense(u, t, x);
            let a = m.total(u, t, x);
            let row = &m.rows[u];
            // -(1/D) [g'' ∇R̄∇R̄ᵀ + g' ∇²R̄] with ∇²R̄ = -c/ln2 · θθᵀ/A²
            let f_outer = -scale * self.inv_d * g.d2(r);
            let f_curv = scale * self.inv_d * g.d1(r) * m.c_ln / (a * a);
            for v1 in 0..row.len() {
                let i1 = m.idx(v1, t);
                for v2 in 0..row.len() {
                    h[(i1, m.idx(v2, t))] += f_outer * grad[v1] * grad[v2] + f_curv * row[v1] * row[v2];
                }
            }
        }
    }
}

/// `Σ_{u∈k} w_u R̃_{u,t}(P) / cap - 1 <= 0`.
struct CapConstraint {
    model: Arc<RateModel>,
    t: usize,
    /// `(u, w_u / cap)`.
    members: Vec<(usize, f64)>,
}

impl SmoothConvex for CapConstraint {
    fn value(&self, x: &[f64]) -> f64 {
        self.members
            .iter()
            .map(|&(u, w)| w * self.model.upper(u, self.t, x))
            .sum::<f64>()
            - 1.0
    }

    fn gradient(&self, x: &[f64]) -> SparseVec {
        let mut out = Vec::new();
        for &(u, w) in &self.members {
            self.model.upper_grad(u, self.t, x, w, &mut out);
        }
        out
    }

    fn add_hessian(&self, x: &[f64], scale: f64, h: &mut DMatrix<f64>) {
        for &(u, w) in &self.members {
            self.model.upper_hess(u, self.t, x, scale * w, h);
        }
    }
}

/// Power subproblem with its variable layout `x = [s, p_{0,0}, p_{0,1}, …]`.
#[derive(Debug)]
pub struct PowerSubproblem {
    pub program: ConvexProgram,
    /// Strictly feasible (up to the box) start built from the expansion point.
    pub start: Vec<f64>,
    pub mode: RouteMode,
    pub n_t: usize,
    pub num_devices: usize,
}

impl PowerSubproblem {
    pub fn decode(&self, x: &[f64], p_max: f64) -> (PowerMatrix, f64) {
        let p = (0..self.num_devices)
            .map(|u| {
                (0..self.n_t)
                    .map(|t| x[1 + u * self.n_t + t].clamp(0.0, p_max))
                    .collect()
            })
            .collect();
        (PowerMatrix { p }, x[0])
    }
}

/// Builds the convexified power allocation problem for a fixed schedule.
///
/// Demand rows use `g ∘ R̄` (concave), caps use `R̃` (convex). Caps are kept
/// for every UAV and segment, so there are `U + 2 K N_T` rows with MEC and
/// `U + K N_T` without, less one per device with no data.
pub fn build_power_subproblem(
    point: &ExpansionPoint,
    eta: &ScheduleTensor,
    theta: &ThetaTensor,
    sys: &SystemParams,
    instance: &ScenarioInstance,
    mode: RouteMode,
) -> Result<PowerSubproblem> {
    check_uav_mode(mode)?;
    let u_count = instance.num_devices();
    let n_t = eta.n_t();
    if point.p0.num_devices() != u_count || point.p0.n_t() != n_t {
        return Err(NtnError::Shape {
            what: "expansion power matrix",
            expected: u_count * n_t,
            found: point.p0.num_devices() * point.p0.n_t(),
        });
    }
    let rows: Vec<Vec<f64>> = (0..u_count)
        .map(|u| {
            let k = instance.serving_uav(u);
            (0..u_count).map(|v| theta.get(u, v, k)).collect()
        })
        .collect();
    let mut j0 = vec![vec![0.0; n_t]; u_count];
    let mut a0 = vec![vec![0.0; n_t]; u_count];
    for u in 0..u_count {
        let k = instance.serving_uav(u);
        for t in 0..n_t {
            j0[u][t] = interference(u, k, t, &point.p0, theta) + sys.sigma2;
            a0[u][t] = j0[u][t] + own_signal(u, k, t, &point.p0, theta);
        }
    }
    let model = Arc::new(RateModel {
        n_t,
        rows,
        sigma2: sys.sigma2,
        c_ln: sys.rate_scale() / LN_2,
        j0,
        a0,
    });

    let n = 1 + u_count * n_t;
    let mut program = ConvexProgram::new(n);
    program.objective[0] = -1.0;
    let s_hi = s_max(mode, sys);
    program.lower[0] = 0.0;
    program.upper[0] = s_hi;
    for i in 1..n {
        program.lower[i] = 0.0;
        program.upper[i] = sys.p_max;
    }

    let mut start = vec![0.0; n];
    for u in 0..u_count {
        for t in 0..n_t {
            start[model.idx(u, t)] = point.p0.get(u, t).clamp(0.0, sys.p_max);
        }
    }

    let mut s_start = s_hi;
    for u in 0..u_count {
        let d = instance.data_bits[u];
        if d <= 0.0 {
            continue;
        }
        let g = (0..n_t)
            .map(|t| GTransform::new(stage_constant(u, t, eta, sys, instance), eta.eta_l[t]))
            .collect::<Result<Vec<_>>>()?;
        let con = DemandConstraint {
            model: model.clone(),
            u,
            inv_d: 1.0 / d,
            g,
        };
        s_start = s_start.min(-con.value(&start));
        program.push(Constraint::smooth(format!("demand[{u}]"), con));
    }
    start[0] = 0.5 * s_start.max(0.0);

    for k in 0..instance.num_uavs() {
        let served = instance.served_by(k);
        for t in 0..n_t {
            if mode == RouteMode::SatUavMec {
                let members = served
                    .iter()
                    .map(|&u| (u, eta.eta_c[u][t] / sys.r_mec(k)))
                    .collect();
                let con = CapConstraint {
                    model: model.clone(),
                    t,
                    members,
                };
                if con.value(&start) > 1e-9 {
                    return Err(NtnError::InfeasibleExpansionPoint);
                }
                program.push(Constraint::smooth(format!("mec[{k},{t}]"), con));
            }
            let members = served
                .iter()
                .map(|&u| {
                    let c = if mode == RouteMode::SatUavMec { eta.eta_c[u][t] } else { 0.0 };
                    (u, (eta.eta_s[u][t] + sys.zeta(u) * c) / sys.r_bh(k))
                })
                .collect();
            let con = CapConstraint {
                model: model.clone(),
                t,
                members,
            };
            if con.value(&start) > 1e-9 {
                return Err(NtnError::InfeasibleExpansionPoint);
            }
            program.push(Constraint::smooth(format!("backhaul[{k},{t}]"), con));
        }
    }
    Ok(PowerSubproblem {
        program,
        start,
        mode,
        n_t,
        num_devices: u_count,
    })
}

// ---------------------------------------------------------------- schedule

/// Normalized margin kept below each cap so LP round-off cannot overshoot.
const CAP_MARGIN: f64 = 1e-7;

/// Scheduling LP with its variable map.
#[derive(Debug)]
pub struct SchedulingSubproblem {
    pub program: ConvexProgram,
    pub mode: RouteMode,
    /// Index of `η^L_t`, or `None` when a zero rate pins it to one.
    pub l_index: Vec<Option<usize>>,
    /// Index of `η^C_{u,t}` (MEC mode, free segments only).
    pub c_index: Vec<Vec<Option<usize>>>,
}

impl SchedulingSubproblem {
    pub fn decode(&self, x: &[f64]) -> (ScheduleTensor, f64) {
        let n_t = self.l_index.len();
        let u_count = self.c_index.len();
        let mut eta = ScheduleTensor::satellite_only(u_count, n_t);
        for t in 0..n_t {
            let Some(li) = self.l_index[t] else { continue };
            let l = x[li].clamp(0.0, 1.0);
            eta.eta_l[t] = l;
            for u in 0..u_count {
                let mut c = self.c_index[u][t].map_or(0.0, |ci| x[ci].clamp(0.0, 1.0 - l));
                let mut s = 1.0 - l - c;
                if c < 1e-10 {
                    c = 0.0;
                }
                if s < 1e-10 {
                    s = 0.0;
                }
                eta.eta_s[u][t] = s;
                eta.eta_c[u][t] = c;
            }
            // push any rounding remainder back into η^L so the sum stays one
            let worst = (0..u_count)
                .map(|u| eta.eta_s[u][t] + eta.eta_c[u][t])
                .fold(0.0f64, f64::max);
            eta.eta_l[t] = 1.0 - worst;
            for u in 0..u_count {
                let rem = 1.0 - eta.eta_l[t] - eta.eta_c[u][t];
                eta.eta_s[u][t] = rem.max(0.0);
            }
        }
        (eta, x[0])
    }
}

/// Time per bit `τ = τ_0 + η^L τ_L + η^C τ_C` with `η^S = 1 - η^L - η^C`
/// substituted out.
#[derive(Debug, Clone, Copy)]
struct AffineTime {
    base: f64,
    per_l: f64,
    per_c: f64,
}

impl AffineTime {
    fn new(rate: f64, zeta: f64, r_sat: f64, r_bh: f64, r_mec: f64) -> Self {
        Self {
            base: 1.0 / rate + 1.0 / r_bh,
            per_l: 1.0 / r_sat - 1.0 / rate - 1.0 / r_bh,
            per_c: 1.0 / r_mec - (1.0 - zeta) / r_bh,
        }
    }
}

/// Builds the scheduling LP for fixed powers, linearizing the demand around
/// `point.eta0`.
pub fn build_scheduling_subproblem(
    point: &ExpansionPoint,
    power: &PowerMatrix,
    theta: &ThetaTensor,
    sys: &SystemParams,
    instance: &ScenarioInstance,
    mode: RouteMode,
) -> Result<SchedulingSubproblem> {
    check_uav_mode(mode)?;
    let u_count = instance.num_devices();
    let n_t = power.n_t();
    let eta0 = &point.eta0;
    if eta0.n_t() != n_t || eta0.num_devices() != u_count {
        return Err(NtnError::Shape {
            what: "expansion schedule",
            expected: u_count * n_t,
            found: eta0.num_devices() * eta0.n_t(),
        });
    }
    let rates = crate::channel::approx_rates(power, theta, sys, instance);
    let with_mec = mode == RouteMode::SatUavMec;

    let mut next = 1;
    let mut l_index = vec![None; n_t];
    for (t, slot) in l_index.iter_mut().enumerate() {
        let blocked = (0..u_count).any(|u| instance.data_bits[u] > 0.0 && rates[u][t] <= 0.0);
        if !blocked {
            *slot = Some(next);
            next += 1;
        }
    }
    let mut c_index = vec![vec![None; n_t]; u_count];
    if with_mec {
        for row in c_index.iter_mut() {
            for (t, slot) in row.iter_mut().enumerate() {
                if l_index[t].is_some() {
                    *slot = Some(next);
                    next += 1;
                }
            }
        }
    }
    let n = next;
    let mut program = ConvexProgram::new(n);
    program.objective[0] = -1.0;
    for i in 1..n {
        program.lower[i] = 0.0;
        program.upper[i] = 1.0;
    }
    let s_hi = s_max(mode, sys);

    let push_row = |program: &mut ConvexProgram, label: String, coeffs: SparseVec, rhs: f64, margin: f64| {
        let scale = coeffs.iter().fold(1.0f64, |m, &(_, a)| m.max(a.abs()));
        let coeffs = coeffs.into_iter().map(|(i, a)| (i, a / scale)).collect();
        program.push(Constraint::linear(label, LinearConstraint::le(coeffs, rhs / scale - margin)));
    };

    let mut s_lo = 0.0f64;
    for u in 0..u_count {
        let d = instance.data_bits[u];
        if d <= 0.0 {
            continue;
        }
        let k = instance.serving_uav(u);
        let zeta = sys.zeta(u);
        let mut coeffs: SparseVec = vec![(0, 1.0)];
        let mut rhs = 0.0;
        // row value at the all-satellite point, to bound s from below
        let mut at_sat = 0.0;
        for t in 0..n_t {
            let Some(li) = l_index[t] else {
                rhs += sys.r_sat / d;
                continue;
            };
            let tau = AffineTime::new(rates[u][t], zeta, sys.r_sat, sys.r_bh(k), sys.r_mec(k));
            let stages = Stages {
                eta_l: eta0.eta_l[t],
                eta_s: eta0.eta_s[u][t],
                eta_c: if with_mec { eta0.eta_c[u][t] } else { 0.0 },
                zeta,
                r_sat: sys.r_sat,
                r_ul: rates[u][t],
                r_bh: sys.r_bh(k),
                r_mec: sys.r_mec(k),
            };
            let tau0 = if with_mec {
                stages.time_per_bit()
            } else {
                Stages {
                    eta_s: 1.0 - stages.eta_l,
                    ..stages
                }
                .time_per_bit()
            };
            let w = 1.0 / (d * tau0 * tau0);
            rhs += (2.0 / tau0 - tau.base / (tau0 * tau0)) / d;
            coeffs.push((li, w * tau.per_l));
            at_sat += w * tau.per_l;
            if let Some(ci) = c_index[u][t] {
                coeffs.push((ci, w * tau.per_c));
            }
        }
        s_lo = s_lo.min(rhs - at_sat);
        push_row(&mut program, format!("demand[{u}]"), coeffs, rhs, 0.0);
    }
    program.lower[0] = s_lo - s_hi;
    program.upper[0] = s_hi;

    for k in 0..instance.num_uavs() {
        let served = instance.served_by(k);
        for t in 0..n_t {
            let Some(li) = l_index[t] else { continue };
            let load: f64 = served.iter().map(|&u| rates[u][t]).sum::<f64>() / sys.r_bh(k);
            if load <= 0.0 {
                continue;
            }
            if with_mec {
                let coeffs: SparseVec = served
                    .iter()
                    .filter_map(|&u| c_index[u][t].map(|ci| (ci, rates[u][t] / sys.r_mec(k))))
                    .collect();
                push_row(&mut program, format!("mec[{k},{t}]"), coeffs, 1.0, CAP_MARGIN);
            }
            let mut coeffs: SparseVec = vec![(li, -load)];
            for &u in &served {
                if let Some(ci) = c_index[u][t] {
                    coeffs.push((ci, -(1.0 - sys.zeta(u)) * rates[u][t] / sys.r_bh(k)));
                }
            }
            push_row(&mut program, format!("backhaul[{k},{t}]"), coeffs, 1.0 - load, CAP_MARGIN);
        }
    }
    if with_mec {
        for u in 0..u_count {
            for t in 0..n_t {
                if let (Some(li), Some(ci)) = (l_index[t], c_index[u][t]) {
                    program.push(Constraint::linear(
                        format!("unit[{u},{t}]"),
                        LinearConstraint::le(vec![(li, 1.0), (ci, 1.0)], 1.0),
                    ));
                }
            }
        }
    }
    Ok(SchedulingSubproblem {
        program,
        mode,
        l_index,
        c_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latency::{efficiencies, stream_feasible};
    use crate::params::PerUnit;
    use ntn_convex::{solve_lp, solve_smooth, SolveOptions, Status};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_theta(rng: &mut ChaCha8Rng, u: usize, k: usize) -> ThetaTensor {
        ThetaTensor {
            theta: (0..k)
                .map(|_| {
                    (0..u)
                        .map(|_| (0..u).map(|_| rng.random_range(1e-16..1e-13)).collect())
                        .collect()
                })
                .collect(),
            seed: 0,
            n_samples: 1,
            nominal_power: 2.0,
        }
    }

    fn random_power(rng: &mut ChaCha8Rng, u: usize, n_t: usize, p_max: f64) -> PowerMatrix {
        PowerMatrix {
            p: (0..u)
                .map(|_| (0..n_t).map(|_| rng.random_range(0.0..p_max)).collect())
                .collect(),
        }
    }

    fn approx(u: usize, k: usize, t: usize, p: &PowerMatrix, th: &ThetaTensor, sys: &SystemParams) -> f64 {
        crate::channel::approx_rate(u, k, t, p, th, sys)
    }

    #[test]
    fn interference_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let th = random_theta(&mut rng, 5, 2);
        let p = random_power(&mut rng, 5, 3, 2.0);
        for u in 0..5 {
            let mut want = 0.0;
            for v in 0..5 {
                if v != u {
                    want += p.p[v][2] * th.theta[1][u][v];
                }
            }
            assert!((interference(u, 1, 2, &p, &th) - want).abs() <= 1e-12 * want);
        }
        let solo = random_theta(&mut rng, 1, 1);
        assert_eq!(interference(0, 0, 0, &PowerMatrix::uniform(1, 1, 1.0), &solo), 0.0);
    }

    #[test]
    fn bounds_sandwich_the_approximation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let sys = SystemParams {
                sigma2: rng.random_range(1e-16..1e-14),
                ..SystemParams::default()
            };
            let th = random_theta(&mut rng, 4, 1);
            let p = random_power(&mut rng, 4, 1, 2.0);
            let p0 = random_power(&mut rng, 4, 1, 2.0);
            for u in 0..4 {
                let r = approx(u, 0, 0, &p, &th, &sys);
                let lo = lower_bound_rate(u, 0, 0, &p, &p0, &th, &sys);
                let hi = upper_bound_rate(u, 0, 0, &p, &p0, &th, &sys);
                let slack = 1e-9 * r.abs().max(1.0);
                assert!(lo <= r + slack && r <= hi + slack, "{lo} {r} {hi}");
                let r0 = approx(u, 0, 0, &p0, &th, &sys);
                assert!((lower_bound_rate(u, 0, 0, &p0, &p0, &th, &sys) - r0).abs() <= 1e-9 * r0.max(1.0));
                assert!((upper_bound_rate(u, 0, 0, &p0, &p0, &th, &sys) - r0).abs() <= 1e-9 * r0.max(1.0));
            }
        }
    }

    #[test]
    fn single_device_bounds_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = SystemParams::default();
        let th = random_theta(&mut rng, 1, 1);
        let p = PowerMatrix::uniform(1, 1, 1.3);
        let p0 = PowerMatrix::uniform(1, 1, 0.2);
        let r = approx(0, 0, 0, &p, &th, &sys);
        assert!((lower_bound_rate(0, 0, 0, &p, &p0, &th, &sys) - r).abs() < 1e-9 * r);
    }

    #[test]
    fn g_transform_cases() {
        assert!((g_transform(123.0, 1.0 / 9600.0, 1.0).unwrap() - 9600.0).abs() < 1e-9);
        assert_eq!(g_transform(5e5, 0.0, 0.0).unwrap(), 5e5);
        assert!(matches!(g_transform(1.0, 0.0, 1.0), Err(NtnError::UndefinedTransform)));
        assert!(g_transform(1.0, -1.0, 0.5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn g_is_monotone_and_concave(x in 0.0f64..1e7, c in 1e-8f64..1e-4, l in 0.0f64..1.0) {
            let g = GTransform::new(c, l).unwrap();
            let h = 1e-3 * (1.0 + x);
            let (a, b, m) = (g.value(x - h), g.value(x + h), g.value(x));
            prop_assert!(b >= m && m >= a);
            let second = (a - 2.0 * m + b) / (h * h);
            prop_assert!(second <= 1e-9);
            let fd1 = (b - a) / (2.0 * h);
            prop_assert!((fd1 - g.d1(x)).abs() <= 1e-5 * g.d1(x).abs().max(1e-12) + 1e-12);
        }
    }

    #[test]
    fn satellite_only_examples() {
        let sys = SystemParams::default();
        let s = satellite_only_solution(&sys, &[1e4; 3], 3).unwrap();
        assert_eq!(s.delta_t, 0.5);
        assert!((crate::latency::total_latency(3, s.delta_t, &sys).unwrap() - 1.74).abs() < 1e-12);
        let s = satellite_only_solution(&sys, &[1e5], 21).unwrap();
        assert!((crate::latency::total_latency(21, s.delta_t, &sys).unwrap() - 10.74).abs() < 1e-12);
        assert_eq!(satellite_only_solution(&sys, &[0.0], 4).unwrap().delta_t, sys.eps0);
        assert!(s.eta.eta_l.iter().all(|&l| l == 1.0));
    }

    #[test]
    fn no_mec_reduction_moves_ratios() {
        let mut eta = ScheduleTensor::all_relay(2, 2);
        eta.eta_s[1][0] = 0.4;
        eta.eta_c[1][0] = 0.6;
        let point = ExpansionPoint {
            p0: PowerMatrix::uniform(2, 2, 1.0),
            eta0: eta,
        };
        let (red, mode) = reduce_no_mec(&point);
        assert_eq!(mode, RouteMode::SatUavNoMec);
        assert!(red.eta0.eta_c.iter().flatten().all(|&c| c == 0.0));
        assert_eq!(red.eta0.eta_s[1][0], 1.0);
    }

    fn small_instance(u: usize, k: usize, d: f64) -> ScenarioInstance {
        let uavs = (0..k).map(|i| [30000.0 * i as f64, 0.0, 3000.0]).collect();
        let devices: Vec<[f64; 2]> = (0..u).map(|i| [30000.0 * (i % k) as f64 + 100.0 * i as f64, 50.0]).collect();
        let z = (0..u)
            .map(|i| (0..k).map(|j| u8::from(j == i % k)).collect())
            .collect();
        ScenarioInstance {
            uavs,
            devices,
            z,
            data_bits: vec![d; u],
        }
    }

    struct Setup {
        inst: ScenarioInstance,
        sys: SystemParams,
        theta: ThetaTensor,
        point: ExpansionPoint,
        eta: ScheduleTensor,
    }

    fn setup(seed: u64, u: usize, k: usize, n_t: usize) -> Setup {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = small_instance(u, k, 2e6);
        let sys = SystemParams {
            n_t,
            ..SystemParams::default()
        };
        let theta = random_theta(&mut rng, u, k);
        let p0 = random_power(&mut rng, u, n_t, 0.01);
        let mut eta = ScheduleTensor::satellite_only(u, n_t);
        for t in 0..n_t {
            let l = rng.random_range(0.2..0.9);
            eta.eta_l[t] = l;
            for v in 0..u {
                let c = rng.random_range(0.0..1.0 - l);
                eta.eta_c[v][t] = c;
                eta.eta_s[v][t] = 1.0 - l - c;
            }
        }
        Setup {
            point: ExpansionPoint {
                p0,
                eta0: eta.clone(),
            },
            inst,
            sys,
            theta,
            eta,
        }
    }

    #[test]
    fn power_constraint_count() {
        let s = setup(4, 6, 2, 3);
        let mec = build_power_subproblem(&s.point, &s.eta, &s.theta, &s.sys, &s.inst, RouteMode::SatUavMec).unwrap();
        assert_eq!(mec.program.constraints.len(), 6 + 2 * 2 * 3);
        assert_eq!(mec.program.bound_count(), 2 * (1 + 6 * 3));
        let (red, mode) = reduce_no_mec(&s.point);
        let no = build_power_subproblem(&red, &red.eta0, &s.theta, &s.sys, &s.inst, mode).unwrap();
        assert_eq!(no.program.constraints.len(), 6 + 2 * 3);
        assert!((no.program.upper[0] - 1.0 / (2.0 * s.sys.eps0)).abs() < 1e-15);
        assert!(build_power_subproblem(&s.point, &s.eta, &s.theta, &s.sys, &s.inst, RouteMode::SatelliteOnly).is_err());
    }

    #[test]
    fn power_demand_is_tight_at_expansion_point() {
        let s = setup(5, 4, 2, 2);
        let sub = build_power_subproblem(&s.point, &s.eta, &s.theta, &s.sys, &s.inst, RouteMode::SatUavMec).unwrap();
        let rates = crate::channel::approx_rates(&s.point.p0, &s.theta, &s.sys, &s.inst);
        let ra = efficiencies(&s.eta, &rates, &s.sys, &s.inst);
        let mut x = sub.start.clone();
        x[0] = 0.0;
        for u in 0..4 {
            let want = -ra[u].iter().sum::<f64>() / s.inst.data_bits[u];
            let got = sub.program.constraints[u].value(&x);
            assert!((got - want).abs() <= 1e-9 * want.abs(), "{got} vs {want}");
        }
    }

    fn finite_difference_check(program: &ConvexProgram, x: &[f64]) {
        let n = x.len();
        for con in &program.constraints {
            let mut dense = vec![0.0; n];
            for (i, v) in con.gradient(x) {
                dense[i] += v;
            }
            for i in 0..n {
                let h = 1e-6 * x[i].abs().max(1e-4);
                let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
                xp[i] += h;
                xm[i] -= h;
                let fd = (con.value(&xp) - con.value(&xm)) / (2.0 * h);
                let scale = dense.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
                assert!(
                    (fd - dense[i]).abs() <= 1e-5 * scale,
                    "{}: d/dx{i} analytic {} fd {fd}",
                    con.label,
                    dense[i]
                );
            }
        }
    }

    #[test]
    fn power_gradients_match_finite_differences() {
        for seed in 0..10 {
            let s = setup(10 + seed, 4, 2, 2);
            let sub = build_power_subproblem(&s.point, &s.eta, &s.theta, &s.sys, &s.inst, RouteMode::SatUavMec).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..10 {
                let x: Vec<f64> = (0..sub.program.dim())
                    .map(|i| if i == 0 { rng.random_range(0.0..0.6) } else { rng.random_range(1e-3..2.0) })
                    .collect();
                finite_difference_check(&sub.program, &x);
            }
        }
    }

    #[test]
    fn power_hessians_are_psd_and_match_gradients() {
        let s = setup(30, 4, 2, 2);
        let sub = build_power_subproblem(&s.point, &s.eta, &s.theta, &s.sys, &s.inst, RouteMode::SatUavMec).unwrap();
        let n = sub.program.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x: Vec<f64> = (0..n).map(|i| if i == 0 { 0.1 } else { rng.random_range(0.01..2.0) }).collect();
        for con in &sub.program.constraints {
            let ntn_convex::ConstraintBody::SmoothConvex(f) = &con.body else { continue };
            let mut h = DMatrix::zeros(n, n);
            f.add_hessian(&x, 1.0, &mut h);
            let eig = h.clone().symmetric_eigen();
            let top = eig.eigenvalues.amax().max(1e-300);
            assert!(eig.eigenvalues.min() >= -1e-9 * top, "{}", con.label);
            for j in 0..n {
                let step = 1e-6 * x[j].abs().max(1e-4);
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[j] += step;
                xm[j] -= step;
                let mut gp = vec![0.0; n];
                let mut gm = vec![0.0; n];
                for (i, v) in f.gradient(&xp) {
                    gp[i] += v;
                }
                for (i, v) in f.gradient(&xm) {
                    gm[i] += v;
                }
                for i in 0..n {
                    let fd = (gp[i] - gm[i]) / (2.0 * step);
                    assert!((fd - h[(i, j)]).abs() <= 1e-4 * top, "{} H[{i},{j}]", con.label);
                }
            }
        }
    }

    #[test]
    fn power_solution_satisfies_original_constraints() {
        for seed in 0..5 {
            let s = setup(40 + seed, 4, 2, 2);
            let sub = build_power_subproblem(&s.point, &s.eta, &s.theta, &s.sys, &s.inst, RouteMode::SatUavMec).unwrap();
            let sol = solve_smooth(&sub.program, &sub.start, &SolveOptions::default()).unwrap();
            assert_eq!(sol.status, Status::Optimal);
            let (p, sv) = sub.decode(&sol.x, s.sys.p_max);
            let rates = crate::channel::approx_rates(&p, &s.theta, &s.sys, &s.inst);
            assert!(stream_feasible(&s.eta, &rates, &s.sys, &s.inst).feasible);
            let ra = efficiencies(&s.eta, &rates, &s.sys, &s.inst);
            for u in 0..4 {
                let supply: f64 = ra[u].iter().sum();
                assert!(supply >= sv * s.inst.data_bits[u] * (1.0 - 1e-6));
            }
        }
    }

    /// One device, one UAV, one segment, no interference: the surrogate is the
    /// true problem. The MEC cap limits the power below `P_max`.
    #[test]
    fn toy_power_problem_matches_grid() {
        let inst = small_instance(1, 1, 5e6);
        let th_val = 1e-14;
        let theta = ThetaTensor {
            theta: vec![vec![vec![th_val]]],
            seed: 0,
            n_samples: 1,
            nominal_power: 2.0,
        };
        let sys = SystemParams {
            n_t: 1,
            r_mec: PerUnit::All(1e6),
            r_bh: PerUnit::All(5e6),
            ..SystemParams::default()
        };
        let eta = ScheduleTensor {
            eta_l: vec![0.005],
            eta_s: vec![vec![0.195]],
            eta_c: vec![vec![0.8]],
        };
        let rate = |p: f64| sys.rate_scale() * (1.0 + p * th_val / sys.sigma2).log2();
        let g = GTransform::new(stage_constant(0, 0, &eta, &sys, &inst), 0.005).unwrap();
        let feasible_p = |p: f64| 0.8 * rate(p) <= 1e6 && (0.195 + 0.008) * rate(p) <= 5e6;
        assert!(!feasible_p(sys.p_max), "cap should bind inside the box");

        let floor = 3.0 * sys.eps0;
        // smallest grid δ meeting the demand, with the caps evaluated by `cap_rate`
        let grid = |cap_rate: &dyn Fn(f64) -> f64| {
            let mut best = f64::INFINITY;
            for i in 0..200 {
                let p = sys.p_max * i as f64 / 199.0;
                let rc = cap_rate(p);
                if 0.8 * rc > 1e6 || (0.195 + 0.008) * rc > 5e6 {
                    continue;
                }
                let need = 5e6 / g.value(rate(p));
                for j in 0..200 {
                    let d = floor + (20.0 - floor) * j as f64 / 199.0;
                    if d >= need {
                        best = best.min(d);
                        break;
                    }
                }
            }
            best
        };
        let solve_at = |p0: f64| {
            let point = ExpansionPoint {
                p0: PowerMatrix::uniform(1, 1, p0),
                eta0: eta.clone(),
            };
            let sub = build_power_subproblem(&point, &eta, &theta, &sys, &inst, RouteMode::SatUavMec).unwrap();
            let sol = solve_smooth(&sub.program, &sub.start, &SolveOptions::default()).unwrap();
            assert_eq!(sol.status, Status::Optimal);
            (sol.x[1], (1.0 / sol.x[0]).max(floor))
        };

        // one surrogate solve against a grid over the same surrogate
        let p0 = 1e-3;
        let a0 = p0 * th_val + sys.sigma2;
        let upper = |p: f64| {
            let a = p * th_val + sys.sigma2;
            sys.rate_scale() / LN_2 * ((a0 / sys.sigma2).ln() + (a - a0) / a0)
        };
        let (_, delta) = solve_at(p0);
        let best = grid(&upper);
        assert!((delta / best - 1.0).abs() <= 0.01, "{delta} vs {best}");

        // re-expanding at each solution converges to the true optimum
        let mut p = p0;
        let mut delta = f64::INFINITY;
        for _ in 0..30 {
            let (next, d) = solve_at(p);
            let done = (d / delta - 1.0).abs() < 1e-6;
            p = next;
            delta = d;
            if done {
                break;
            }
        }
        let best = grid(&rate);
        assert!((delta / best - 1.0).abs() <= 0.01, "{delta} vs {best}");
    }

    #[test]
    fn scheduling_lp_is_tight_and_finite() {
        let s = setup(50, 6, 2, 3);
        let p = random_power(&mut ChaCha8Rng::seed_from_u64(51), 6, 3, 2.0);
        let sub = build_scheduling_subproblem(&s.point, &p, &s.theta, &s.sys, &s.inst, RouteMode::SatUavMec).unwrap();
        assert!(sub.program.is_lp());
        for con in &sub.program.constraints {
            let ntn_convex::ConstraintBody::Linear(l) = &con.body else { unreachable!() };
            assert!(l.rhs.is_finite() && l.coeffs.iter().all(|(_, a)| a.is_finite()));
        }
        // at η0 the linearized demand equals the true one
        let rates = crate::channel::approx_rates(&p, &s.theta, &s.sys, &s.inst);
        let ra = efficiencies(&s.eta, &rates, &s.sys, &s.inst);
        let mut x = vec![0.0; sub.program.dim()];
        for t in 0..3 {
            x[sub.l_index[t].unwrap()] = s.eta.eta_l[t];
            for u in 0..6 {
                x[sub.c_index[u][t].unwrap()] = s.eta.eta_c[u][t];
            }
        }
        for u in 0..6 {
            let ntn_convex::ConstraintBody::Linear(l) = &sub.program.constraints[u].body else { unreachable!() };
            let scale = l.coeffs.iter().fold(1.0f64, |m, &(i, a)| if i == 0 { 1.0 / a } else { m });
            let bound = -l.residual(&x) * scale;
            let want = ra[u].iter().sum::<f64>() / s.inst.data_bits[u];
            assert!((bound - want).abs() <= 1e-9 * want, "{bound} vs {want}");
        }
    }

    #[test]
    fn scheduling_solution_is_feasible() {
        for seed in 0..5 {
            let s = setup(60 + seed, 6, 2, 3);
            let p = random_power(&mut ChaCha8Rng::seed_from_u64(seed), 6, 3, 2.0);
            for mode in [RouteMode::SatUavMec, RouteMode::SatUavNoMec] {
                let sub = build_scheduling_subproblem(&s.point, &p, &s.theta, &s.sys, &s.inst, mode).unwrap();
                let sol = solve_lp(&sub.program, &SolveOptions::default()).unwrap();
                assert_eq!(sol.status, Status::Optimal);
                let (eta, sv) = sub.decode(&sol.x);
                assert!(crate::latency::validate_schedule(&eta).unwrap().is_empty());
                if mode == RouteMode::SatUavNoMec {
                    assert!(eta.eta_c.iter().flatten().all(|&c| c == 0.0));
                }
                let rates = crate::channel::approx_rates(&p, &s.theta, &s.sys, &s.inst);
                assert!(stream_feasible(&eta, &rates, &s.sys, &s.inst).feasible);
                let ra = efficiencies(&eta, &rates, &s.sys, &s.inst);
                for u in 0..6 {
                    let supply: f64 = ra[u].iter().sum();
                    assert!(supply >= sv * s.inst.data_bits[u] * (1.0 - 1e-6));
                }
                assert!(sv <= s_max(mode, &s.sys) + 1e-9);
            }
        }
    }

    #[test]
    fn zero_rate_pins_satellite_route() {
        let s = setup(70, 4, 2, 2);
        let mut p = PowerMatrix::uniform(4, 2, 1.0);
        p.p[2][1] = 0.0;
        let sub = build_scheduling_subproblem(&s.point, &p, &s.theta, &s.sys, &s.inst, RouteMode::SatUavMec).unwrap();
        assert!(sub.l_index[1].is_none() && sub.l_index[0].is_some());
        let sol = solve_lp(&sub.program, &SolveOptions::default()).unwrap();
        let (eta, _) = sub.decode(&sol.x);
        assert_eq!(eta.eta_l[1], 1.0);
    }

    /// One device with a fast UL and a huge MEC: the single LP optimum must
    /// match a fine simplex grid.
    #[test]
    fn toy_scheduling_matches_simplex_grid() {
        let inst = small_instance(1, 1, 1e7);
        let sys = SystemParams {
            n_t: 1,
            r_mec: PerUnit::All(1e9),
            ..SystemParams::default()
        };
        let th_val = 1e-13;
        let theta = ThetaTensor {
            theta: vec![vec![vec![th_val]]],
            seed: 0,
            n_samples: 1,
            nominal_power: 2.0,
        };
        let p = PowerMatrix::uniform(1, 1, 2.0);
        let r = crate::channel::approx_rates(&p, &theta, &sys, &inst)[0][0];
        assert!(r > 100.0 * sys.r_sat);
        let point = ExpansionPoint {
            p0: p.clone(),
            eta0: ScheduleTensor::all_relay(1, 1),
        };
        let sub = build_scheduling_subproblem(&point, &p, &theta, &sys, &inst, RouteMode::SatUavMec).unwrap();
        let sol = solve_lp(&sub.program, &SolveOptions::default()).unwrap();
        let (eta, _) = sub.decode(&sol.x);
        assert!(eta.eta_s[0][0] + eta.eta_c[0][0] > 0.99);
        let ra = efficiencies(&eta, &[vec![r]], &sys, &inst)[0][0];
        let floor = 3.0 * sys.eps0;
        let delta = (1e7 / ra).max(floor);

        let mut best = f64::INFINITY;
        let n = 1000;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let (l, c) = (i as f64 / n as f64, j as f64 / n as f64);
                let st = Stages {
                    eta_l: l,
                    eta_s: (1.0 - l - c).max(0.0),
                    eta_c: c,
                    zeta: sys.zeta(0),
                    r_sat: sys.r_sat,
                    r_ul: r,
                    r_bh: sys.r_bh(0),
                    r_mec: sys.r_mec(0),
                };
                let caps_ok = c * r <= sys.r_mec(0) && (st.eta_s + sys.zeta(0) * c) * r <= sys.r_bh(0);
                if caps_ok {
                    best = best.min((1e7 / st.efficiency()).max(floor));
                }
            }
        }
        assert!((delta / best - 1.0).abs() <= 0.01, "{delta} vs {best}");
    }

    #[test]
    fn no_mec_lp_has_no_mec_rows() {
        let s = setup(80, 4, 2, 2);
        let p = PowerMatrix::uniform(4, 2, 1.0);
        let sub = build_scheduling_subproblem(&s.point, &p, &s.theta, &s.sys, &s.inst, RouteMode::SatUavNoMec).unwrap();
        assert!(sub.program.constraints.iter().all(|c| !c.label.starts_with("mec")));
        assert!(sub.c_index.iter().flatten().all(|c| c.is_none()));
        assert!((sub.program.upper[0] - 1.0 / (2.0 * s.sys.eps0)).abs() < 1e-15);
    }
}
