//! Schedule and power containers, stream caps, the overall efficiency `R^a`
//! and latency accounting.

use serde::{Deserialize, Serialize};

use crate::error::{NtnError, Result};
use crate::params::SystemParams;
use crate::scenario::ScenarioInstance;

const TOL: f64 = 1e-9;

/// Which paths a device's data may take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RouteMode {
    SatelliteOnly,
    SatUavNoMec,
    SatUavMec,
}

impl RouteMode {
    pub const ALL: [RouteMode; 3] = [RouteMode::SatelliteOnly, RouteMode::SatUavNoMec, RouteMode::SatUavMec];

    /// Minimum number of packet times per segment.
    pub fn floor_multiple(self) -> f64 {
        match self {
            RouteMode::SatelliteOnly => 1.0,
            RouteMode::SatUavNoMec => 2.0,
            RouteMode::SatUavMec => 3.0,
        }
    }

    /// Short name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            RouteMode::SatelliteOnly => "SatelliteOnly",
            RouteMode::SatUavNoMec => "NoMec",
            RouteMode::SatUavMec => "WithMec",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.label().eq_ignore_ascii_case(s))
    }

    /// Smallest mode whose support covers the given ratios.
    pub fn infer(eta_s: f64, eta_c: f64) -> Self {
        if eta_c > 0.0 {
            RouteMode::SatUavMec
        } else if eta_s > 0.0 {
            RouteMode::SatUavNoMec
        } else {
            RouteMode::SatelliteOnly
        }
    }
}

/// Transmit powers `p[u][t]` in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMatrix {
    pub p: Vec<Vec<f64>>,
}

impl PowerMatrix {
    pub fn uniform(u: usize, n_t: usize, value: f64) -> Self {
        Self {
            p: vec![vec![value; n_t]; u],
        }
    }

    pub fn num_devices(&self) -> usize {
        self.p.len()
    }

    pub fn n_t(&self) -> usize {
        self.p.first().map_or(0, |r| r.len())
    }

    #[inline]
    pub fn get(&self, u: usize, t: usize) -> f64 {
        self.p[u][t]
    }

    /// Powers of all devices in segment `t`.
    pub fn column(&self, t: usize) -> Vec<f64> {
        self.p.iter().map(|r| r[t]).collect()
    }

    pub fn violations(&self, p_max: f64) -> Vec<String> {
        let n_t = self.n_t();
        let mut errs = Vec::new();
        for (u, row) in self.p.iter().enumerate() {
            if row.len() != n_t {
                errs.push(format!("p[{u}]: expected {n_t} segments, found {}", row.len()));
            }
            for (t, &v) in row.iter().enumerate() {
                if !(v >= -TOL && v <= p_max * (1.0 + TOL)) {
                    errs.push(format!("p[{u}][{t}] = {v} outside [0, {p_max}]"));
                }
            }
        }
        errs
    }
}

/// Routing ratios: `eta_l[t]` shared by all devices, `eta_s[u][t]`, `eta_c[u][t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTensor {
    pub eta_l: Vec<f64>,
    pub eta_s: Vec<Vec<f64>>,
    pub eta_c: Vec<Vec<f64>>,
}

impl ScheduleTensor {
    /// Everything direct to the satellite.
    pub fn satellite_only(u: usize, n_t: usize) -> Self {
        Self {
            eta_l: vec![1.0; n_t],
            eta_s: vec![vec![0.0; n_t]; u],
            eta_c: vec![vec![0.0; n_t]; u],
        }
    }

    /// Everything relayed through the UAV backhaul.
    pub fn all_relay(u: usize, n_t: usize) -> Self {
        Self {
            eta_l: vec![0.0; n_t],
            eta_s: vec![vec![1.0; n_t]; u],
            eta_c: vec![vec![0.0; n_t]; u],
        }
    }

    pub fn n_t(&self) -> usize {
        self.eta_l.len()
    }

    pub fn num_devices(&self) -> usize {
        self.eta_s.len()
    }

    /// Most capable mode used anywhere in the schedule.
    pub fn mode(&self) -> RouteMode {
        let mut mode = RouteMode::SatelliteOnly;
        for (rs, rc) in self.eta_s.iter().zip(&self.eta_c) {
            for (&s, &c) in rs.iter().zip(rc) {
                mode = mode.max(RouteMode::infer(s, c));
            }
        }
        mode
    }
}

/// Unit-sum and box violations of `eta`; empty means valid.
pub fn validate_schedule(eta: &ScheduleTensor) -> Result<Vec<String>> {
    let n_t = eta.n_t();
    let u = eta.eta_s.len();
    if eta.eta_c.len() != u {
        return Err(NtnError::Shape {
            what: "eta_c rows",
            expected: u,
            found: eta.eta_c.len(),
        });
    }
    for rows in [&eta.eta_s, &eta.eta_c] {
        if let Some(r) = rows.iter().find(|r| r.len() != n_t) {
            return Err(NtnError::Shape {
                what: "schedule segments",
                expected: n_t,
                found: r.len(),
            });
        }
    }
    let in_box = |v: f64| (-TOL..=1.0 + TOL).contains(&v);
    let mut errs = Vec::new();
    for (t, &l) in eta.eta_l.iter().enumerate() {
        if !in_box(l) {
            errs.push(format!("eta_l[{t}] = {l} outside [0, 1]"));
        }
    }
    for u in 0..u {
        for t in 0..n_t {
            let (s, c) = (eta.eta_s[u][t], eta.eta_c[u][t]);
            if !in_box(s) {
                errs.push(format!("eta_s[{u}][{t}] = {s} outside [0, 1]"));
            }
            if !in_box(c) {
                errs.push(format!("eta_c[{u}][{t}] = {c} outside [0, 1]"));
            }
            let sum = eta.eta_l[t] + s + c;
            if (sum - 1.0).abs() > TOL {
                errs.push(format!("ratios of device {u} in segment {t} sum to {sum}"));
            }
        }
    }
    Ok(errs)
}

/// Slack of both stream caps for every UAV and segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamCheck {
    pub feasible: bool,
    /// `R^C_k - Σ_u η^C R^U`, indexed `[k][t]`.
    pub mec_slack: Vec<Vec<f64>>,
    /// `R^S_k - Σ_u (η^S + ζ η^C) R^U`, indexed `[k][t]`.
    pub backhaul_slack: Vec<Vec<f64>>,
}

/// Checks the MEC and backhaul caps. `rates[u][t]` is the UL rate of device
/// `u` at its serving UAV.
pub fn stream_feasible(
    eta: &ScheduleTensor,
    rates: &[Vec<f64>],
    sys: &SystemParams,
    instance: &ScenarioInstance,
) -> StreamCheck {
    let n_t = eta.n_t();
    let k_count = instance.num_uavs();
    let mut mec_slack: Vec<Vec<f64>> = (0..k_count).map(|k| vec![sys.r_mec(k); n_t]).collect();
    let mut backhaul_slack: Vec<Vec<f64>> = (0..k_count).map(|k| vec![sys.r_bh(k); n_t]).collect();
    for u in 0..instance.num_devices() {
        let k = instance.serving_uav(u);
        let zeta = sys.zeta(u);
        for t in 0..n_t {
            let r = rates[u][t];
            mec_slack[k][t] -= eta.eta_c[u][t] * r;
            backhaul_slack[k][t] -= (eta.eta_s[u][t] + zeta * eta.eta_c[u][t]) * r;
        }
    }
    let mut feasible = true;
    for k in 0..k_count {
        for t in 0..n_t {
            feasible &= mec_slack[k][t] >= -TOL * sys.r_mec(k);
            feasible &= backhaul_slack[k][t] >= -TOL * sys.r_bh(k);
        }
    }
    StreamCheck {
        feasible,
        mec_slack,
        backhaul_slack,
    }
}

/// Stage ratios and rates of one device in one segment.
#[derive(Debug, Clone, Copy)]
pub struct Stages {
    pub eta_l: f64,
    pub eta_s: f64,
    pub eta_c: f64,
    pub zeta: f64,
    pub r_sat: f64,
    pub r_ul: f64,
    pub r_bh: f64,
    pub r_mec: f64,
}

impl Stages {
    /// Time per bit of the composed pipeline; infinite if a path with a
    /// positive ratio has zero rate.
    pub fn time_per_bit(&self) -> f64 {
        let term = |ratio: f64, rate: f64| {
            if ratio <= 0.0 {
                0.0
            } else if rate <= 0.0 {
                f64::INFINITY
            } else {
                ratio / rate
            }
        };
        term(self.eta_l, self.r_sat)
            + term(self.eta_s + self.eta_c, self.r_ul)
            + term(self.eta_s + self.zeta * self.eta_c, self.r_bh)
            + term(self.eta_c, self.r_mec)
    }

    /// `R^a`; zero when some used path has zero rate.
    pub fn efficiency(&self) -> f64 {
        let tau = self.time_per_bit();
        if tau.is_finite() && tau > 0.0 {
            1.0 / tau
        } else {
            0.0
        }
    }
}

/// `R^a_{u,t}` of device `u` in segment `t` under `mode`.
pub fn overall_efficiency(
    u: usize,
    t: usize,
    mode: RouteMode,
    eta: &ScheduleTensor,
    ul_rate: f64,
    sys: &SystemParams,
    instance: &ScenarioInstance,
) -> Result<f64> {
    let (s, c) = (eta.eta_s[u][t], eta.eta_c[u][t]);
    if RouteMode::infer(s, c) > mode {
        return Err(NtnError::ModeMismatch { mode, u, t });
    }
    if mode == RouteMode::SatelliteOnly {
        return Ok(sys.r_sat);
    }
    let k = instance.serving_uav(u);
    Ok(Stages {
        eta_l: eta.eta_l[t],
        eta_s: s,
        eta_c: c,
        zeta: sys.zeta(u),
        r_sat: sys.r_sat,
        r_ul: ul_rate,
        r_bh: sys.r_bh(k),
        r_mec: sys.r_mec(k),
    }
    .efficiency())
}

/// `R^a[u][t]` with the mode of each entry inferred from its ratios.
pub fn efficiencies(
    eta: &ScheduleTensor,
    rates: &[Vec<f64>],
    sys: &SystemParams,
    instance: &ScenarioInstance,
) -> Vec<Vec<f64>> {
    (0..instance.num_devices())
        .map(|u| {
            (0..eta.n_t())
                .map(|t| {
                    let mode = RouteMode::infer(eta.eta_s[u][t], eta.eta_c[u][t]);
                    overall_efficiency(u, t, mode, eta, rates[u][t], sys, instance)
                        .expect("inferred mode always admits its ratios")
                })
                .collect()
        })
        .collect()
}

/// `N_T δ_T + ε_a`.
pub fn total_latency(n_t: usize, delta_t: f64, sys: &SystemParams) -> Result<f64> {
    if n_t == 0 {
        return Err(NtnError::param("n_t", "at least one segment"));
    }
    if !(delta_t > 0.0) {
        return Err(NtnError::param("delta_t", "must be positive"));
    }
    Ok(n_t as f64 * delta_t + sys.epsa)
}

/// Whether every device delivers its data within `N_T` segments of length `delta_t`.
pub fn demand_satisfied(
    eta: &ScheduleTensor,
    rates: &[Vec<f64>],
    delta_t: f64,
    sys: &SystemParams,
    instance: &ScenarioInstance,
) -> bool {
    let ra = efficiencies(eta, rates, sys, instance);
    instance.data_bits.iter().zip(&ra).all(|(&d, row)| {
        let supply: f64 = row.iter().sum::<f64>() * delta_t;
        d <= 0.0 || supply >= d * (1.0 - 1e-12)
    })
}
