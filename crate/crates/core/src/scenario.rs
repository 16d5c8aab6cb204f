//! Network geometry: UAV swarm layout, clustered device drops and
//! nearest-UAV association.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{NtnError, Result};
use crate::params::PerUnit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// UAV count.
    pub k: usize,
    /// Antennas per UAV.
    pub m: usize,
    /// Device count.
    pub u: usize,
    /// Minimum inter-UAV distance (m).
    pub d_uav: f64,
    /// UAV altitude (m).
    pub h_uav: f64,
    /// Aggregation degree in [0, 1].
    pub beta: f64,
    /// Deployment spread for `beta = 0` (m). Defaults to `d_uav / 4`.
    pub area_radius: Option<f64>,
    /// Data size per device (bits).
    pub data_bits: PerUnit,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ScenarioConfig {
    /// Reduced size used by the test suite and the default experiments.
    pub fn desk() -> Self {
        Self {
            k: 3,
            m: 4,
            u: 12,
            d_uav: 30_000.0,
            h_uav: 3_000.0,
            beta: 0.5,
            area_radius: None,
            data_bits: PerUnit::All(1e6),
            seed: 1,
        }
    }

    /// Full reference size: 7 UAVs with 8 antennas, 56 devices.
    pub fn full() -> Self {
        Self {
            k: 7,
            m: 8,
            u: 56,
            ..Self::desk()
        }
    }

    pub fn area_radius(&self) -> f64 {
        self.area_radius.unwrap_or(self.d_uav / 4.0)
    }

    /// Gaussian spread of a device around its hotspot.
    pub fn cluster_sigma(&self) -> f64 {
        (1.0 - self.beta) * self.area_radius() + self.beta * self.d_uav / 20.0
    }

    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.k == 0 {
            errs.push("scenario.k: at least one UAV".into());
        }
        if self.m == 0 {
            errs.push("scenario.m: at least one antenna".into());
        }
        if self.u == 0 {
            errs.push("scenario.u: at least one device".into());
        }
        if !(self.d_uav > 0.0) {
            errs.push("scenario.d_uav: must be positive".into());
        }
        if !(self.h_uav > 0.0) {
            errs.push("scenario.h_uav: must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.beta) {
            errs.push("scenario.beta: must lie in [0, 1]".into());
        }
        if !(self.area_radius() > 0.0) {
            errs.push("scenario.area_radius: must be positive".into());
        }
        match &self.data_bits {
            PerUnit::All(d) if !(*d >= 0.0) => {
                errs.push("scenario.data_bits: must be non-negative".into())
            }
            PerUnit::Each(v) if v.len() != self.u => errs.push(format!(
                "scenario.data_bits: expected {} entries, found {}",
                self.u,
                v.len()
            )),
            PerUnit::Each(v) if v.iter().any(|d| !(*d >= 0.0)) => {
                errs.push("scenario.data_bits: must be non-negative".into())
            }
            _ => {}
        }
        errs
    }
}

/// One network realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInstance {
    /// UAV positions `[x, y, z]` (m).
    pub uavs: Vec<[f64; 3]>,
    /// Device ground positions `[x, y]` (m).
    pub devices: Vec<[f64; 2]>,
    /// Association matrix, `U x K`, 0/1 entries with unit row sums.
    pub z: Vec<Vec<u8>>,
    /// Data size per device (bits).
    pub data_bits: Vec<f64>,
}

impl ScenarioInstance {
    pub fn num_uavs(&self) -> usize {
        self.uavs.len()
    }

    pub fn num_devices(&self) -> usize {
        self.devices.len()
    }

    /// The UAV serving device `u`.
    pub fn serving_uav(&self, u: usize) -> usize {
        self.z[u].iter().position(|&v| v == 1).unwrap_or(0)
    }

    /// Devices served by UAV `k`, in index order.
    pub fn served_by(&self, k: usize) -> Vec<usize> {
        (0..self.num_devices())
            .filter(|&u| self.z[u][k] == 1)
            .collect()
    }

    pub fn with_data_bits(&self, d: f64) -> Self {
        Self {
            data_bits: vec![d; self.num_devices()],
            ..self.clone()
        }
    }

    /// Every structural problem of the instance.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let (u, k) = (self.num_devices(), self.num_uavs());
        if k == 0 {
            errs.push("uavs: empty".into());
        }
        if u == 0 {
            errs.push("devices: empty".into());
        }
        if self.z.len() != u {
            errs.push(format!("z: expected {u} rows, found {}", self.z.len()));
        }
        for (i, row) in self.z.iter().enumerate() {
            if row.len() != k {
                errs.push(format!("z[{i}]: expected {k} columns, found {}", row.len()));
            }
            if row.iter().any(|&v| v > 1) || row.iter().map(|&v| v as u32).sum::<u32>() != 1 {
                errs.push(format!("z[{i}]: must be a 0/1 row with exactly one 1"));
            }
        }
        if self.data_bits.len() != u {
            errs.push(format!(
                "data_bits: expected {u} entries, found {}",
                self.data_bits.len()
            ));
        }
        if self.data_bits.iter().any(|d| !(*d >= 0.0)) {
            errs.push("data_bits: must be non-negative".into());
        }
        errs
    }
}

const HEX_DIRS: [(i64, i64); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];

/// Hexagonal ring layout: one UAV at the origin, the rest on concentric
/// rings of a triangular lattice with spacing `d_uav`.
pub fn place_uavs(config: &ScenarioConfig) -> Vec<[f64; 3]> {
    let mut axial: Vec<(i64, i64)> = vec![(0, 0)];
    let mut ring = 1i64;
    while axial.len() < config.k {
        for i in 0..6 {
            let (cq, cr) = HEX_DIRS[i];
            let (wq, wr) = HEX_DIRS[(i + 2) % 6];
            for j in 0..ring {
                axial.push((ring * cq + j * wq, ring * cr + j * wr));
            }
        }
        ring += 1;
    }
    axial.truncate(config.k);
    let d = config.d_uav;
    axial
        .into_iter()
        .map(|(q, r)| {
            let (q, r) = (q as f64, r as f64);
            [d * (q + r / 2.0), d * r * 3f64.sqrt() / 2.0, config.h_uav]
        })
        .collect()
}

/// Clustered device drop: each device picks a UAV ground projection
/// uniformly and lands at a Gaussian offset with per-axis standard deviation
/// [`ScenarioConfig::cluster_sigma`].
pub fn generate_devices(config: &ScenarioConfig, uavs: &[[f64; 3]]) -> Result<Vec<[f64; 2]>> {
    if !(0.0..=1.0).contains(&config.beta) {
        return Err(NtnError::param("beta", "must lie in [0, 1]"));
    }
    if uavs.is_empty() {
        return Err(NtnError::param("uavs", "no hotspot centers"));
    }
    let sigma = config.cluster_sigma();
    let normal = Normal::new(0.0, sigma).map_err(|e| NtnError::param("area_radius", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let devices = (0..config.u)
        .map(|_| {
            let c = uavs[rng.random_range(0..uavs.len())];
            let dx = normal.sample(&mut rng);
            let dy = normal.sample(&mut rng);
            [c[0] + dx, c[1] + dy]
        })
        .collect();
    Ok(devices)
}

/// Nearest-UAV association by 3D distance; ties go to the lowest index.
pub fn associate_nearest(devices: &[[f64; 2]], uavs: &[[f64; 3]]) -> Vec<Vec<u8>> {
    devices
        .iter()
        .map(|d| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, a) in uavs.iter().enumerate() {
                let dist = (d[0] - a[0]).powi(2) + (d[1] - a[1]).powi(2) + a[2].powi(2);
                if dist < best_d {
                    best_d = dist;
                    best = k;
                }
            }
            let mut row = vec![0u8; uavs.len()];
            row[best] = 1;
            row
        })
        .collect()
}

/// Builds a full instance from `config`.
pub fn generate(config: &ScenarioConfig) -> Result<ScenarioInstance> {
    let errs = config.violations();
    if !errs.is_empty() {
        return Err(NtnError::InvalidConfig(errs));
    }
    let uavs = place_uavs(config);
    let devices = generate_devices(config, &uavs)?;
    let z = associate_nearest(&devices, &uavs);
    let data_bits = (0..config.u).map(|u| config.data_bits.get(u)).collect();
    Ok(ScenarioInstance {
        uavs,
        devices,
        z,
        data_bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ground_dist(a: [f64; 3], b: [f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    #[test]
    fn single_uav_at_origin() {
        let cfg = ScenarioConfig {
            k: 1,
            ..ScenarioConfig::desk()
        };
        assert_eq!(place_uavs(&cfg), vec![[0.0, 0.0, 3000.0]]);
    }

    #[test]
    fn two_uavs_at_spacing() {
        let cfg = ScenarioConfig {
            k: 2,
            ..ScenarioConfig::desk()
        };
        let p = place_uavs(&cfg);
        assert!((ground_dist(p[0], p[1]) - 30_000.0).abs() < 1e-9);
    }

    #[test]
    fn seven_uavs_form_hexagon() {
        let cfg = ScenarioConfig::full();
        let p = place_uavs(&cfg);
        assert_eq!(p.len(), 7);
        for (i, q) in p.iter().enumerate().skip(1) {
            assert!((ground_dist(p[0], *q) - 30_000.0).abs() < 1e-6);
            let angle = q[1].atan2(q[0]).to_degrees().rem_euclid(360.0);
            assert!((angle - 60.0 * (i - 1) as f64).abs() < 1e-9, "{angle}");
        }
        for i in 0..7 {
            for j in i + 1..7 {
                assert!(ground_dist(p[i], p[j]) >= 30_000.0 - 1e-6);
            }
        }
    }

    #[test]
    fn larger_swarms_keep_min_distance() {
        let cfg = ScenarioConfig {
            k: 30,
            ..ScenarioConfig::desk()
        };
        let p = place_uavs(&cfg);
        assert_eq!(p.len(), 30);
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                assert!(ground_dist(p[i], p[j]) >= 30_000.0 - 1e-6);
            }
        }
    }

    #[test]
    fn same_seed_same_devices() {
        let cfg = ScenarioConfig::desk();
        let uavs = place_uavs(&cfg);
        assert_eq!(
            generate_devices(&cfg, &uavs).unwrap(),
            generate_devices(&cfg, &uavs).unwrap()
        );
    }

    #[test]
    fn rejects_bad_beta() {
        let cfg = ScenarioConfig {
            beta: 1.5,
            ..ScenarioConfig::desk()
        };
        assert!(generate_devices(&cfg, &place_uavs(&cfg)).is_err());
    }

    #[test]
    fn device_under_uav_zero_associates_there() {
        let cfg = ScenarioConfig::full();
        let uavs = place_uavs(&cfg);
        assert_eq!(associate_nearest(&[[0.0, 0.0]], &uavs)[0][0], 1);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let uavs = [[0.0, 0.0, 100.0], [-10.0, 0.0, 100.0], [10.0, 0.0, 100.0]];
        let z = associate_nearest(&[[0.0, 5.0], [0.0, 0.0]], &uavs);
        assert_eq!(z[0], vec![1, 0, 0]);
        let z = associate_nearest(&[[0.0, 0.0]], &uavs[1..]);
        assert_eq!(z[0], vec![1, 0]);
    }

    #[test]
    fn association_rows_sum_to_one() {
        let inst = generate(&ScenarioConfig::full()).unwrap();
        assert!(inst.violations().is_empty());
        for row in &inst.z {
            assert_eq!(row.iter().map(|&v| v as u32).sum::<u32>(), 1);
        }
    }

    #[test]
    fn json_keys() {
        let inst = generate(&ScenarioConfig::desk()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&inst).unwrap();
        for key in ["uavs", "devices", "z", "data_bits"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: ScenarioInstance = serde_json::from_value(v).unwrap();
        assert_eq!(back, inst);
    }
}
