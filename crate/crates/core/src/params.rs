//! Physical and system constants. Defaults are the reference simulation values.

use serde::{Deserialize, Serialize};

use crate::error::{NtnError, Result};

pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Air-to-ground path loss model constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossParams {
    /// Excess loss for line of sight (dB).
    pub eta_los: f64,
    /// Excess loss without line of sight (dB).
    pub eta_nlos: f64,
    pub a: f64,
    /// Sigmoid rate (1/degree).
    pub b: f64,
    /// Carrier frequency (Hz).
    pub f: f64,
    pub c: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            eta_los: 0.1,
            eta_nlos: 21.0,
            a: 5.0188,
            b: 0.3511,
            f: 5.8e9,
            c: SPEED_OF_LIGHT,
        }
    }
}

impl PathLossParams {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.f > 0.0) {
            errs.push("path_loss.f: carrier frequency must be positive".into());
        }
        if !(self.b > 0.0) {
            errs.push("path_loss.b: sigmoid rate must be positive".into());
        }
        if !(self.c > 0.0) {
            errs.push("path_loss.c: speed of light must be positive".into());
        }
        if !(self.eta_nlos >= self.eta_los) {
            errs.push("path_loss.eta_nlos: must be at least eta_los".into());
        }
        errs
    }
}

/// Nakagami-m small-scale fading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NakagamiParams {
    pub m: f64,
    pub omega: f64,
}

impl Default for NakagamiParams {
    fn default() -> Self {
        Self {
            m: 4.02,
            omega: 25e-3,
        }
    }
}

impl NakagamiParams {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.m >= 0.5) {
            errs.push("nakagami.m: shape must be at least 0.5".into());
        }
        if !(self.omega > 0.0) {
            errs.push("nakagami.omega: spread must be positive".into());
        }
        errs
    }
}

/// Uniform linear receive array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayParams {
    /// Antenna count.
    pub m: usize,
    /// Element spacing (m).
    pub d0: f64,
}

impl ArrayParams {
    /// Half-wavelength spacing at carrier `f`.
    pub fn half_wavelength(m: usize, f: f64) -> Self {
        Self {
            m,
            d0: SPEED_OF_LIGHT / f / 2.0,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.m == 0 {
            errs.push("array.m: at least one antenna".into());
        }
        if !(self.d0 > 0.0) {
            errs.push("array.d0: spacing must be positive".into());
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub path_loss: PathLossParams,
    pub nakagami: NakagamiParams,
    pub array: ArrayParams,
}

impl ChannelParams {
    pub fn with_antennas(m: usize) -> Self {
        let path_loss = PathLossParams::default();
        let array = ArrayParams::half_wavelength(m, path_loss.f);
        Self {
            path_loss,
            nakagami: NakagamiParams::default(),
            array,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = self.path_loss.validate();
        errs.extend(self.nakagami.validate());
        errs.extend(self.array.validate());
        errs
    }
}

/// A per-UAV or per-device quantity: one value for all, or one per index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerUnit {
    All(f64),
    Each(Vec<f64>),
}

impl PerUnit {
    pub fn get(&self, i: usize) -> f64 {
        match self {
            PerUnit::All(v) => *v,
            PerUnit::Each(v) => v[i],
        }
    }

    fn check(&self, name: &str, len: usize, errs: &mut Vec<String>, ok: impl Fn(f64) -> bool) {
        match self {
            PerUnit::All(v) => {
                if !ok(*v) {
                    errs.push(format!("{name}: value {v} out of range"));
                }
            }
            PerUnit::Each(v) => {
                if v.len() != len {
                    errs.push(format!("{name}: expected {len} entries, found {}", v.len()));
                }
                if let Some(bad) = v.iter().find(|x| !ok(**x)) {
                    errs.push(format!("{name}: value {bad} out of range"));
                }
            }
        }
    }
}

/// Scalar constants of the network and the process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    /// Bandwidth (Hz).
    pub bandwidth: f64,
    /// Pilot fraction.
    pub gamma_ul: f64,
    /// Noise power (W).
    pub sigma2: f64,
    /// Max device transmit power (W).
    pub p_max: f64,
    /// Device-satellite rate R^L (bit/s).
    pub r_sat: f64,
    /// UAV-satellite backhaul rate R^S_k (bit/s).
    pub r_bh: PerUnit,
    /// MEC throughput R^C_k (bit/s).
    pub r_mec: PerUnit,
    /// Output/input size ratio of MEC processing per device.
    pub zeta: PerUnit,
    /// Packet transmission time (s).
    pub eps0: f64,
    /// Total propagation time (s).
    pub epsa: f64,
    /// Segmentation count.
    pub n_t: usize,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            bandwidth: 1e6,
            gamma_ul: 0.1,
            sigma2: dbm_to_watts(-114.0),
            p_max: 2.0,
            r_sat: 9600.0,
            r_bh: PerUnit::All(2e6),
            r_mec: PerUnit::All(6e6),
            zeta: PerUnit::All(0.01),
            eps0: 0.5,
            epsa: 0.24,
            n_t: 8,
        }
    }
}

impl SystemParams {
    pub fn r_bh(&self, k: usize) -> f64 {
        self.r_bh.get(k)
    }

    pub fn r_mec(&self, k: usize) -> f64 {
        self.r_mec.get(k)
    }

    pub fn zeta(&self, u: usize) -> f64 {
        self.zeta.get(u)
    }

    /// `(1 - γ_UL) B`.
    pub fn rate_scale(&self) -> f64 {
        (1.0 - self.gamma_ul) * self.bandwidth
    }

    /// Every violated field, for `k` UAVs and `u` devices.
    pub fn violations(&self, k: usize, u: usize) -> Vec<String> {
        let mut errs = Vec::new();
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.bandwidth) {
            errs.push("system.bandwidth: must be positive".into());
        }
        if !(0.0..1.0).contains(&self.gamma_ul) {
            errs.push("system.gamma_ul: must lie in [0, 1)".into());
        }
        if !pos(self.sigma2) {
            errs.push("system.sigma2: must be positive".into());
        }
        if !pos(self.p_max) {
            errs.push("system.p_max: must be positive".into());
        }
        if !pos(self.r_sat) {
            errs.push("system.r_sat: must be positive".into());
        }
        self.r_bh.check("system.r_bh", k, &mut errs, pos);
        self.r_mec.check("system.r_mec", k, &mut errs, pos);
        self.zeta
            .check("system.zeta", u, &mut errs, |v| (0.0..=1.0).contains(&v));
        if !pos(self.eps0) {
            errs.push("system.eps0: must be positive".into());
        }
        if !(self.epsa >= 0.0) {
            errs.push("system.epsa: must be non-negative".into());
        }
        if self.n_t == 0 {
            errs.push("system.n_t: at least one segment".into());
        }
        errs
    }

    pub fn validate(&self, k: usize, u: usize) -> Result<()> {
        let errs = self.violations(k, u);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(NtnError::InvalidConfig(errs))
        }
    }
}
