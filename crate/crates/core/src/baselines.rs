//! Comparison schemes and the greedy stream scheduler they share.

use serde::{Deserialize, Serialize};

use crate::channel::{approx_rates, path_gain, ThetaTensor};
use crate::error::{NtnError, Result};
use crate::latency::{
    demand_satisfied, stream_feasible, validate_schedule, PowerMatrix, RouteMode, ScheduleTensor,
};
use crate::orchestrator::{
    algorithm4_process, align_to_packets, delta_from_rates, satellite_nt_range, sweep_nt, BranchRanges,
    OrchestratorOptions,
};
use crate::params::{ChannelParams, SystemParams};
use crate::scenario::ScenarioInstance;

/// Fraction of each cap the greedy scheduler is allowed to fill.
const GREEDY_FILL: f64 = 1.0 - 1e-7;

/// Tries to route `1 - eta_l` of every device through its UAV in segment `t`.
/// Returns the per-device `(eta_s, eta_c)` or `None` when the caps run out.
fn route_segment(
    eta_l: f64,
    t: usize,
    rates: &[Vec<f64>],
    sys: &SystemParams,
    instance: &ScenarioInstance,
    allow_mec: bool,
) -> Option<Vec<(f64, f64)>> {
    let mut out = vec![(0.0, 0.0); rates.len()];
    let share = 1.0 - eta_l;
    if share <= 0.0 {
        return Some(out);
    }
    for k in 0..instance.num_uavs() {
        let mut members = instance.served_by(k);
        members.sort_by(|&a, &b| rates[b][t].total_cmp(&rates[a][t]).then(a.cmp(&b)));
        let mut res_c = sys.r_mec(k) * GREEDY_FILL;
        let mut res_s = sys.r_bh(k) * GREEDY_FILL;
        for u in members {
            let r = rates[u][t];
            if r <= 0.0 {
                if instance.data_bits[u] > 0.0 {
                    return None;
                }
                out[u] = (share, 0.0);
                continue;
            }
            let zeta = sys.zeta(u);
            let mut c = 0.0;
            if allow_mec {
                c = share.min(res_c / r);
                if zeta > 0.0 {
                    c = c.min(res_s / (zeta * r));
                }
                c = c.max(0.0);
            }
            let s = (share - c).min(((res_s - zeta * c * r) / r).max(0.0));
            if c + s < share * (1.0 - 1e-12) {
                return None;
            }
            res_c -= c * r;
            res_s -= (s + zeta * c) * r;
            out[u] = (s, c);
        }
    }
    Some(out)
}

/// Greedy routing per segment: the shared direct-to-satellite ratio is the
/// smallest value for which every device, strongest first, fits its remainder
/// into the MEC path and then the relay path of its UAV.
pub fn greedy_schedule(
    rates: &[Vec<f64>],
    sys: &SystemParams,
    instance: &ScenarioInstance,
    allow_mec: bool,
) -> ScheduleTensor {
    let u = rates.len();
    let n_t = rates.first().map_or(0, |r| r.len());
    let mut eta = ScheduleTensor::satellite_only(u, n_t);
    for t in 0..n_t {
        let eta_l = if route_segment(0.0, t, rates, sys, instance, allow_mec).is_some() {
            0.0
        } else if route_segment(1.0 - 1e-9, t, rates, sys, instance, allow_mec).is_none() {
            1.0
        } else {
            let (mut lo, mut hi) = (0.0, 1.0 - 1e-9);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if route_segment(mid, t, rates, sys, instance, allow_mec).is_some() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        let routed = route_segment(eta_l, t, rates, sys, instance, allow_mec).unwrap_or_default();
        eta.eta_l[t] = eta_l;
        for (i, (s, c)) in routed.into_iter().enumerate() {
            eta.eta_c[i][t] = c;
            eta.eta_s[i][t] = 1.0 - eta_l - c;
            debug_assert!((eta.eta_s[i][t] - s).abs() < 1e-9);
        }
    }
    eta
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    SatelliteOnly,
    /// Equal bandwidth split, full power, greedy routing.
    Scheme1,
    /// Equal power with backoff, greedy routing.
    Scheme2,
    /// The three-branch process with one segment per branch.
    Scheme3,
    Proposed,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::SatelliteOnly,
        Scheme::Scheme1,
        Scheme::Scheme2,
        Scheme::Scheme3,
        Scheme::Proposed,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::SatelliteOnly => "satellite_only",
            Scheme::Scheme1 => "scheme1_equal_split",
            Scheme::Scheme2 => "scheme2",
            Scheme::Scheme3 => "scheme3",
            Scheme::Proposed => "proposed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub scheme: Scheme,
    pub mode: RouteMode,
    pub n_t: usize,
    pub delta_t: f64,
    pub t_total: f64,
    pub power: PowerMatrix,
    pub eta: ScheduleTensor,
    pub schedule_valid: bool,
    pub stream_feasible: bool,
    pub demand_met: bool,
}

impl BaselineResult {
    pub fn feasible(&self) -> bool {
        self.schedule_valid && self.stream_feasible && self.demand_met
    }

    pub const CSV_HEADER: &'static str = "scheme,D_bits,N_T,delta_t_s,T_total_s";

    /// One CSV row; `D_bits` is the largest device demand.
    pub fn csv_row(&self, instance: &ScenarioInstance) -> String {
        let d = instance.data_bits.iter().fold(0.0f64, |m, &v| m.max(v));
        format!(
            "{},{},{},{},{}",
            self.scheme.label(),
            d,
            self.n_t,
            crate::orchestrator::fmt_f64(self.delta_t),
            crate::orchestrator::fmt_f64(self.t_total)
        )
    }
}

fn assemble(
    scheme: Scheme,
    mode: RouteMode,
    power: PowerMatrix,
    eta: ScheduleTensor,
    rates: &[Vec<f64>],
    delta_raw: f64,
    sys: &SystemParams,
    instance: &ScenarioInstance,
) -> Result<BaselineResult> {
    let n_t = eta.n_t();
    let delta_t = align_to_packets(delta_raw, sys.eps0);
    Ok(BaselineResult {
        scheme,
        mode,
        n_t,
        delta_t,
        t_total: n_t as f64 * delta_t + sys.epsa,
        schedule_valid: validate_schedule(&eta)?.is_empty(),
        stream_feasible: stream_feasible(&eta, rates, sys, instance).feasible,
        demand_met: delta_t.is_finite() && demand_satisfied(&eta, rates, delta_t, sys, instance),
        power,
        eta,
    })
}

/// Direct-to-satellite transmission with the best segmentation count.
pub fn scheme_satellite_only(
    sys: &SystemParams,
    instance: &ScenarioInstance,
    n_t_range: Option<&[usize]>,
) -> Result<BaselineResult> {
    let range = match n_t_range {
        Some(r) => r.to_vec(),
        None => satellite_nt_range(sys, &instance.data_bits),
    };
    // theta is never read on this branch
    let theta = ThetaTensor {
        theta: Vec::new(),
        seed: 0,
        n_samples: 0,
        nominal_power: sys.p_max,
    };
    let r = sweep_nt(RouteMode::SatelliteOnly, &theta, sys, instance, &range, &OrchestratorOptions::default())?;
    let rates = vec![vec![0.0; r.n_t]; instance.num_devices()];
    let mut out = assemble(
        Scheme::SatelliteOnly,
        RouteMode::SatelliteOnly,
        r.power,
        r.eta,
        &rates,
        r.delta_raw,
        sys,
        instance,
    )?;
    out.delta_t = r.delta_t;
    out.t_total = r.t_total;
    Ok(out)
}

/// Interference-free uplink rates on an equal `B/U` sub-band at full power,
/// with the mean array gain `M Ω l²` of the serving UAV.
pub fn scheme1_rates(instance: &ScenarioInstance, channel: &ChannelParams, sys: &SystemParams) -> Result<Vec<f64>> {
    let u = instance.num_devices() as f64;
    let band = sys.bandwidth / u;
    let noise = sys.sigma2 / u;
    (0..instance.num_devices())
        .map(|i| {
            let k = instance.serving_uav(i);
            let l = path_gain(instance.devices[i], instance.uavs[k], &channel.path_loss)?;
            let gain = channel.array.m as f64 * channel.nakagami.omega * l * l;
            Ok((1.0 - sys.gamma_ul) * band * (1.0 + sys.p_max * gain / noise).log2())
        })
        .collect()
}

/// Scheme 1 on a single segment.
pub fn scheme1(instance: &ScenarioInstance, channel: &ChannelParams, sys: &SystemParams) -> Result<BaselineResult> {
    let rates: Vec<Vec<f64>> = scheme1_rates(instance, channel, sys)?.into_iter().map(|r| vec![r]).collect();
    let eta = greedy_schedule(&rates, sys, instance, true);
    let mode = eta.mode();
    let delta = delta_from_rates(&eta, &rates, sys, instance, mode);
    let power = PowerMatrix::uniform(instance.num_devices(), 1, sys.p_max);
    assemble(Scheme::Scheme1, mode, power, eta, &rates, delta, sys, instance)
}

/// Bisection steps for the common power level of Scheme 2.
pub const SCHEME2_BISECTIONS: usize = 30;

/// Scheme 2 on a single segment. The common power `p̄` is the largest level
/// at which greedy routing still keeps every device off the direct satellite
/// link; returns the result and `p̄`.
pub fn scheme2(theta: &ThetaTensor, sys: &SystemParams, instance: &ScenarioInstance) -> Result<(BaselineResult, f64)> {
    let u = instance.num_devices();
    let all_uav = |p: f64| {
        let power = PowerMatrix::uniform(u, 1, p);
        let rates = approx_rates(&power, theta, sys, instance);
        let eta = greedy_schedule(&rates, sys, instance, true);
        eta.eta_l.iter().all(|&l| l == 0.0)
    };
    let p_bar = if all_uav(sys.p_max) {
        sys.p_max
    } else {
        let (mut lo, mut hi) = (0.0, sys.p_max);
        for _ in 0..SCHEME2_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if all_uav(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let power = PowerMatrix::uniform(u, 1, p_bar);
    let rates = approx_rates(&power, theta, sys, instance);
    let eta = greedy_schedule(&rates, sys, instance, true);
    let mode = eta.mode();
    let delta = delta_from_rates(&eta, &rates, sys, instance, mode);
    Ok((assemble(Scheme::Scheme2, mode, power, eta, &rates, delta, sys, instance)?, p_bar))
}

fn from_process(
    scheme: Scheme,
    ranges: &BranchRanges,
    theta: &ThetaTensor,
    sys: &SystemParams,
    instance: &ScenarioInstance,
    opts: &OrchestratorOptions,
) -> Result<BaselineResult> {
    let res = algorithm4_process(theta, sys, instance, ranges, opts)?;
    let w = res.winner;
    let rates = approx_rates(&w.power, theta, sys, instance);
    let mut out = assemble(scheme, w.branch, w.power, w.eta, &rates, w.delta_raw, sys, instance)?;
    if w.branch == RouteMode::SatelliteOnly {
        // the direct link does not depend on the uplink rates
        out.stream_feasible = true;
        out.demand_met = true;
    }
    Ok(out)
}

/// Scheme 3: every branch with a single segment.
pub fn scheme3(
    theta: &ThetaTensor,
    sys: &SystemParams,
    instance: &ScenarioInstance,
    opts: &OrchestratorOptions,
) -> Result<BaselineResult> {
    from_process(Scheme::Scheme3, &BranchRanges::fixed(1, 1, 1), theta, sys, instance, opts)
}

/// Default segmentation counts tried on the UAV branches.
pub const DEFAULT_UAV_NT: [usize; 4] = [1, 2, 4, 8];

/// The proposed process: the satellite branch over its full range and the UAV
/// branches over `uav_n_t`, which must contain 1.
pub fn proposed(
    theta: &ThetaTensor,
    sys: &SystemParams,
    instance: &ScenarioInstance,
    uav_n_t: &[usize],
    opts: &OrchestratorOptions,
) -> Result<BaselineResult> {
    if !uav_n_t.contains(&1) {
        return Err(NtnError::InvalidConfig(vec!["uav_n_t: must contain 1".into()]));
    }
    let ranges = BranchRanges {
        satellite: satellite_nt_range(sys, &instance.data_bits),
        no_mec: uav_n_t.to_vec(),
        with_mec: uav_n_t.to_vec(),
    };
    from_process(Scheme::Proposed, &ranges, theta, sys, instance, opts)
}

/// All five schemes in [`Scheme::ALL`] order.
pub fn run_all(
    theta: &ThetaTensor,
    channel: &ChannelParams,
    sys: &SystemParams,
    instance: &ScenarioInstance,
    uav_n_t: &[usize],
    opts: &OrchestratorOptions,
) -> Result<Vec<BaselineResult>> {
    Ok(vec![
        scheme_satellite_only(sys, instance, None)?,
        scheme1(instance, channel, sys)?,
        scheme2(theta, sys, instance)?.0,
        scheme3(theta, sys, instance, opts)?,
        proposed(theta, sys, instance, uav_n_t, opts)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latency::{stream_feasible, validate_schedule};
    use crate::params::PerUnit;
    use crate::scenario::{generate, ScenarioConfig};
    use proptest::prelude::*;

    fn inst() -> ScenarioInstance {
        generate(&ScenarioConfig::desk()).unwrap()
    }

    fn rates(u: usize, n_t: usize, r: f64) -> Vec<Vec<f64>> {
        vec![vec![r; n_t]; u]
    }

    #[test]
    fn infinite_caps_route_everything_to_mec() {
        let inst = inst();
        let sys = SystemParams {
            r_bh: PerUnit::All(1e30),
            r_mec: PerUnit::All(1e30),
            ..SystemParams::default()
        };
        let eta = greedy_schedule(&rates(inst.num_devices(), 2, 1e6), &sys, &inst, true);
        assert!(eta.eta_l.iter().all(|&l| l == 0.0));
        assert!(eta.eta_c.iter().flatten().all(|&c| c == 1.0));
        let eta = greedy_schedule(&rates(inst.num_devices(), 2, 1e6), &sys, &inst, false);
        assert!(eta.eta_s.iter().flatten().all(|&s| s == 1.0));
    }

    #[test]
    fn zero_caps_stay_on_satellite() {
        let inst = inst();
        let sys = SystemParams {
            r_bh: PerUnit::All(0.0),
            r_mec: PerUnit::All(0.0),
            ..SystemParams::default()
        };
        let eta = greedy_schedule(&rates(inst.num_devices(), 3, 1e6), &sys, &inst, true);
        assert!(eta.eta_l.iter().all(|&l| l == 1.0));
    }

    #[test]
    fn zero_rate_device_with_data_forces_satellite() {
        let inst = inst();
        let sys = SystemParams::default();
        let mut r = rates(inst.num_devices(), 1, 1e4);
        r[0][0] = 0.0;
        let eta = greedy_schedule(&r, &sys, &inst, true);
        assert_eq!(eta.eta_l[0], 1.0);
    }

    #[test]
    fn binding_cap_gives_exact_share() {
        // one UAV, relay only: 4 devices at 1e6 with a 2e6 backhaul carry half each
        let mut inst = inst();
        inst.z = vec![vec![1, 0, 0]; 4];
        inst.devices.truncate(4);
        inst.data_bits = vec![1.0; 4];
        let sys = SystemParams::default();
        let eta = greedy_schedule(&rates(4, 1, 1e6), &sys, &inst, false);
        assert!((eta.eta_l[0] - 0.5).abs() < 1e-6, "{}", eta.eta_l[0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn greedy_output_is_always_feasible(
            bh in 0.0f64..5e6, mec in 0.0f64..1e7, zeta in 0.0f64..0.5,
            raw in proptest::collection::vec(0.0f64..3e6, 24), allow_mec: bool,
        ) {
            let inst = inst();
            let sys = SystemParams {
                r_bh: PerUnit::All(bh),
                r_mec: PerUnit::All(mec),
                zeta: PerUnit::All(zeta),
                ..SystemParams::default()
            };
            let r: Vec<Vec<f64>> = raw.chunks(2).map(|c| c.to_vec()).collect();
            let eta = greedy_schedule(&r, &sys, &inst, allow_mec);
            prop_assert!(validate_schedule(&eta).unwrap().is_empty());
            prop_assert!(stream_feasible(&eta, &r, &sys, &inst).feasible);
            if !allow_mec {
                prop_assert!(eta.eta_c.iter().flatten().all(|&c| c == 0.0));
            }
        }
    }
}
