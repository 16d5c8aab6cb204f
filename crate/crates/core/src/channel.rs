//! Air-to-ground channel model, Nakagami fading, MMSE detection and the
//! Monte-Carlo estimate of the effective gains `θ_{u,v,k}`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NtnError, Result};
use crate::latency::PowerMatrix;
use crate::params::{ArrayParams, ChannelParams, NakagamiParams, PathLossParams, SystemParams};
use crate::scenario::ScenarioInstance;

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

fn distance(device: [f64; 2], uav: [f64; 3]) -> f64 {
    ((device[0] - uav[0]).powi(2) + (device[1] - uav[1]).powi(2) + uav[2].powi(2)).sqrt()
}

/// Elevation of the device-UAV link in degrees.
pub fn elevation_deg(device: [f64; 2], uav: [f64; 3]) -> Result<f64> {
    let d = distance(device, uav);
    if !(d > 0.0) {
        return Err(NtnError::CoincidentPositions);
    }
    Ok((uav[2] / d).clamp(-1.0, 1.0).asin().to_degrees())
}

/// Path loss `L` in dB.
pub fn path_loss_db(device: [f64; 2], uav: [f64; 3], p: &PathLossParams) -> Result<f64> {
    let theta = elevation_deg(device, uav)?;
    let d = distance(device, uav);
    let a0 = p.eta_los - p.eta_nlos;
    let b0 = 20.0 * d.log10() + 20.0 * (4.0 * PI * p.f / p.c).log10() + p.eta_nlos;
    Ok(a0 / (1.0 + p.a * (-p.b * (theta - p.a)).exp()) + b0)
}

/// Linear amplitude gain `l = 10^{-L/20}`.
pub fn path_gain(device: [f64; 2], uav: [f64; 3], p: &PathLossParams) -> Result<f64> {
    Ok(10f64.powf(-path_loss_db(device, uav, p)? / 20.0))
}

/// ULA response at elevation `theta_deg`; entry `m` is `exp(j 2π f d0/c m cos θ)`.
pub fn array_manifold(theta_deg: f64, array: &ArrayParams, f: f64, c: f64) -> CVector {
    let phase = 2.0 * PI * f * array.d0 / c * theta_deg.to_radians().cos();
    CVector::from_iterator(
        array.m,
        (0..array.m).map(|m| Complex64::from_polar(1.0, phase * m as f64)),
    )
}

/// Gamma law of `|s|²`: shape `m`, scale `Ω/m`.
pub fn fading_power_law(p: &NakagamiParams) -> Gamma<f64> {
    Gamma::new(p.m, p.omega / p.m).expect("validated Nakagami parameters")
}

/// One Nakagami-m fading coefficient with uniform phase.
pub fn sample_small_scale<R: Rng + ?Sized>(p: &NakagamiParams, rng: &mut R) -> Complex64 {
    sample_with(&fading_power_law(p), rng)
}

fn sample_with<R: Rng + ?Sized>(law: &Gamma<f64>, rng: &mut R) -> Complex64 {
    let power = law.sample(rng);
    let phase = rng.random::<f64>() * 2.0 * PI;
    Complex64::from_polar(power.sqrt(), phase)
}

/// Large-scale response `l_{u,k} a_{u,k}` of device `u` at UAV `k`.
pub fn large_scale(u: usize, k: usize, instance: &ScenarioInstance, params: &ChannelParams) -> Result<CVector> {
    let (dev, uav) = (instance.devices[u], instance.uavs[k]);
    let l = path_gain(dev, uav, &params.path_loss)?;
    let theta = elevation_deg(dev, uav)?;
    let a = array_manifold(theta, &params.array, params.path_loss.f, params.path_loss.c);
    Ok(a * Complex64::new(l, 0.0))
}

/// `h = s l a`.
pub fn channel_vector(
    u: usize,
    k: usize,
    small_scale: Complex64,
    instance: &ScenarioInstance,
    params: &ChannelParams,
) -> Result<CVector> {
    Ok(large_scale(u, k, instance, params)? * small_scale)
}

/// Path gains `l_{u,k}`, indexed `[u][k]`.
pub fn path_gains(instance: &ScenarioInstance, pl: &PathLossParams) -> Result<Vec<Vec<f64>>> {
    instance
        .devices
        .iter()
        .map(|&d| instance.uavs.iter().map(|&a| path_gain(d, a, pl)).collect())
        .collect()
}

/// MMSE detectors `w_u = (Σ_v p_v h_v h_vᴴ + σ² I)^{-1} h_u` as the columns of
/// the returned matrix. `h` holds one device channel per column.
pub fn mmse_detector(h: &CMatrix, p: &[f64], sigma2: f64) -> Result<CMatrix> {
    if !(sigma2 > 0.0) {
        return Err(NtnError::SingularGram);
    }
    if p.len() != h.ncols() {
        return Err(NtnError::Shape {
            what: "detector powers",
            expected: h.ncols(),
            found: p.len(),
        });
    }
    // work with G / σ² so the Cholesky sees entries of order one
    let mut scaled = h.clone();
    for (mut col, &pv) in scaled.column_iter_mut().zip(p) {
        col *= Complex64::new((pv / sigma2).sqrt(), 0.0);
    }
    let mut gram = &scaled * scaled.adjoint();
    for i in 0..gram.nrows() {
        gram[(i, i)] += Complex64::new(1.0, 0.0);
    }
    let chol = gram.cholesky().ok_or(NtnError::SingularGram)?;
    Ok(chol.solve(h) / Complex64::new(sigma2, 0.0))
}

/// `θ_{u,v,k} = E{|w_uᴴ h_v|² / ‖w_u‖²}` stored as `theta[k][u][v]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaTensor {
    pub theta: Vec<Vec<Vec<f64>>>,
    pub seed: u64,
    pub n_samples: usize,
    /// Uniform device power used for the detectors during estimation (W).
    pub nominal_power: f64,
}

impl ThetaTensor {
    #[inline]
    pub fn get(&self, u: usize, v: usize, k: usize) -> f64 {
        self.theta[k][u][v]
    }

    pub fn num_uavs(&self) -> usize {
        self.theta.len()
    }

    pub fn num_devices(&self) -> usize {
        self.theta.first().map_or(0, |t| t.len())
    }

    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let u = self.num_devices();
        for (k, slab) in self.theta.iter().enumerate() {
            if slab.len() != u || slab.iter().any(|r| r.len() != u) {
                errs.push(format!("theta[{k}]: expected a {u}x{u} slab"));
            }
            if slab.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
                errs.push(format!("theta[{k}]: entries must be finite and non-negative"));
            }
        }
        errs
    }
}

/// RNG for UAV `k`: one independent ChaCha stream per UAV.
fn uav_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

fn responses(k: usize, instance: &ScenarioInstance, params: &ChannelParams) -> Result<Vec<CVector>> {
    (0..instance.num_devices())
        .map(|u| large_scale(u, k, instance, params))
        .collect()
}

/// Draws one fading realization of all device channels at one UAV.
fn draw_channels(base: &[CVector], law: &Gamma<f64>, rng: &mut ChaCha8Rng) -> CMatrix {
    let m = base[0].len();
    let mut h = CMatrix::zeros(m, base.len());
    for (u, g) in base.iter().enumerate() {
        let s = sample_with(law, rng);
        h.set_column(u, &(g * s));
    }
    h
}

/// Monte-Carlo estimate of θ with MMSE detectors at uniform power `P_max`.
///
/// UAV `k` draws from its own stream so the result does not depend on how
/// the work is split across threads.
pub fn estimate_theta(
    instance: &ScenarioInstance,
    params: &ChannelParams,
    sys: &SystemParams,
    n_samples: usize,
    seed: u64,
) -> Result<ThetaTensor> {
    if n_samples == 0 {
        return Err(NtnError::param("n_samples", "at least one sample"));
    }
    let u_count = instance.num_devices();
    let law = fading_power_law(&params.nakagami);
    let powers = vec![sys.p_max; u_count];
    let theta = (0..instance.num_uavs())
        .into_par_iter()
        .map(|k| -> Result<Vec<Vec<f64>>> {
            let base = responses(k, instance, params)?;
            let mut rng = uav_rng(seed, k);
            let mut acc = vec![vec![0.0; u_count]; u_count];
            for _ in 0..n_samples {
                let h = draw_channels(&base, &law, &mut rng);
                let w = mmse_detector(&h, &powers, sys.sigma2)?;
                let proj = w.adjoint() * &h;
                for u in 0..u_count {
                    let norm = w.column(u).norm_squared();
                    for v in 0..u_count {
                        acc[u][v] += proj[(u, v)].norm_sqr() / norm;
                    }
                }
            }
            for row in acc.iter_mut() {
                for x in row.iter_mut() {
                    *x /= n_samples as f64;
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ThetaTensor {
        theta,
        seed,
        n_samples,
        nominal_power: sys.p_max,
    })
}

/// Monte-Carlo ergodic rates of every device at UAV `k` for the powers `p`
/// (one per device), with the detector recomputed per realization.
pub fn ergodic_rates_mc(
    k: usize,
    p: &[f64],
    instance: &ScenarioInstance,
    params: &ChannelParams,
    sys: &SystemParams,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let u_count = instance.num_devices();
    if p.len() != u_count {
        return Err(NtnError::Shape {
            what: "powers",
            expected: u_count,
            found: p.len(),
        });
    }
    if n_samples == 0 {
        return Err(NtnError::param("n_samples", "at least one sample"));
    }
    let base = responses(k, instance, params)?;
    let law = fading_power_law(&params.nakagami);
    let mut rng = uav_rng(seed, k);
    let mut acc = vec![0.0; u_count];
    for _ in 0..n_samples {
        let h = draw_channels(&base, &law, &mut rng);
        let w = mmse_detector(&h, p, sys.sigma2)?;
        let proj = w.adjoint() * &h;
        for u in 0..u_count {
            if p[u] == 0.0 {
                continue;
            }
            let signal = p[u] * proj[(u, u)].norm_sqr();
            let mut denom = w.column(u).norm_squared() * sys.sigma2;
            for v in 0..u_count {
                if v != u {
                    denom += p[v] * proj[(u, v)].norm_sqr();
                }
            }
            acc[u] += (1.0 + signal / denom).log2();
        }
    }
    let scale = sys.rate_scale() / n_samples as f64;
    Ok(acc.into_iter().map(|a| a * scale).collect())
}

/// Monte-Carlo ergodic rate of device `u` at UAV `k` in segment `t`.
#[allow(clippy::too_many_arguments)]
pub fn ergodic_rate_mc(
    u: usize,
    k: usize,
    t: usize,
    power: &PowerMatrix,
    instance: &ScenarioInstance,
    params: &ChannelParams,
    sys: &SystemParams,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let p = power.column(t);
    Ok(ergodic_rates_mc(k, &p, instance, params, sys, n_samples, seed)?[u])
}

/// Deterministic rate approximation from θ for the powers `p` of one segment.
pub fn approx_rate_col(u: usize, k: usize, p: &[f64], theta: &ThetaTensor, sys: &SystemParams) -> f64 {
    if p[u] == 0.0 {
        return 0.0;
    }
    let interference: f64 = p
        .iter()
        .enumerate()
        .filter(|&(v, _)| v != u)
        .map(|(v, &pv)| pv * theta.get(u, v, k))
        .sum();
    sys.rate_scale() * (1.0 + p[u] * theta.get(u, u, k) / (interference + sys.sigma2)).log2()
}

/// `R̂_{u,k,t}(P)`.
pub fn approx_rate(
    u: usize,
    k: usize,
    t: usize,
    power: &PowerMatrix,
    theta: &ThetaTensor,
    sys: &SystemParams,
) -> f64 {
    approx_rate_col(u, k, &power.column(t), theta, sys)
}

/// Approximate rate of every device at its serving UAV, indexed `[u][t]`.
pub fn approx_rates(
    power: &PowerMatrix,
    theta: &ThetaTensor,
    sys: &SystemParams,
    instance: &ScenarioInstance,
) -> Vec<Vec<f64>> {
    let n_t = power.n_t();
    let cols: Vec<Vec<f64>> = (0..n_t).map(|t| power.column(t)).collect();
    (0..instance.num_devices())
        .map(|u| {
            let k = instance.serving_uav(u);
            cols.iter()
                .map(|c| approx_rate_col(u, k, c, theta, sys))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate, ScenarioConfig};

    fn pl() -> PathLossParams {
        PathLossParams::default()
    }

    #[test]
    fn free_space_constant() {
        let p = pl();
        let fs = 20.0 * (4.0 * PI * p.f / p.c).log10();
        assert!((fs - 47.71).abs() < 0.01, "{fs}");
    }

    #[test]
    fn path_loss_directly_below() {
        let l_db = path_loss_db([0.0, 0.0], [0.0, 0.0, 3000.0], &pl()).unwrap();
        // A0 / (1 + a e^{-b(90 - a)}) + B0 with A0 = -20.9, B0 = 20 log10(3000) + 47.71 + 21
        let b0 = 20.0 * 3000f64.log10() + 20.0 * (4.0 * PI * 5.8e9 / 3e8).log10() + 21.0;
        let want = -20.9 / (1.0 + 5.0188 * (-0.3511f64 * (90.0 - 5.0188)).exp()) + b0;
        assert!((l_db - want).abs() < 1e-9);
        assert!((l_db - 117.35).abs() < 0.01, "{l_db}");
        let l = path_gain([0.0, 0.0], [0.0, 0.0, 3000.0], &pl()).unwrap();
        assert!((l - 1.357e-6).abs() < 0.002e-6, "{l}");
    }

    #[test]
    fn path_loss_at_thirty_degrees() {
        let horiz = (6000f64.powi(2) - 3000f64.powi(2)).sqrt();
        let theta = elevation_deg([horiz, 0.0], [0.0, 0.0, 3000.0]).unwrap();
        assert!((theta - 30.0).abs() < 1e-9);
        let l_db = path_loss_db([horiz, 0.0], [0.0, 0.0, 3000.0], &pl()).unwrap();
        assert!((l_db - 123.4).abs() < 0.05, "{l_db}");
    }

    #[test]
    fn doubling_distance_adds_six_db() {
        let uav1 = [0.0, 0.0, 3000.0];
        let uav2 = [0.0, 0.0, 6000.0];
        let a = path_loss_db([4000.0, 0.0], uav1, &pl()).unwrap();
        let b = path_loss_db([8000.0, 0.0], uav2, &pl()).unwrap();
        assert!((b - a - 20.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn coincident_positions_rejected() {
        assert!(matches!(
            path_gain([1.0, 2.0], [1.0, 2.0, 0.0], &pl()),
            Err(NtnError::CoincidentPositions)
        ));
    }

    #[test]
    fn manifold_cases() {
        let arr = ArrayParams::half_wavelength(6, 5.8e9);
        let a = array_manifold(90.0, &arr, 5.8e9, 3e8);
        for z in a.iter() {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
        let a = array_manifold(0.0, &arr, 5.8e9, 3e8);
        for (m, z) in a.iter().enumerate() {
            let want = if m % 2 == 0 { 1.0 } else { -1.0 };
            assert!((z - Complex64::new(want, 0.0)).norm() < 1e-9);
        }
        let single = ArrayParams { m: 1, d0: 0.3 };
        assert_eq!(array_manifold(37.0, &single, 5.8e9, 3e8).len(), 1);
        let a = array_manifold(37.0, &arr, 5.8e9, 3e8);
        assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn fading_moments() {
        let p = NakagamiParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let (mut m2, mut m4) = (0.0, 0.0);
        let mut bins = [0usize; 20];
        for _ in 0..n {
            let s = sample_small_scale(&p, &mut rng);
            let pw = s.norm_sqr();
            m2 += pw;
            m4 += pw * pw;
            let ph = s.arg().rem_euclid(2.0 * PI);
            bins[((ph / (2.0 * PI) * 20.0) as usize).min(19)] += 1;
        }
        m2 /= n as f64;
        m4 /= n as f64;
        assert!((m2 / p.omega - 1.0).abs() < 0.005, "{m2}");
        let want4 = p.omega.powi(2) * (1.0 + 1.0 / p.m);
        assert!((m4 / want4 - 1.0).abs() < 0.01, "{m4} vs {want4}");
        let expected = n as f64 / 20.0;
        let chi2: f64 = bins.iter().map(|&b| (b as f64 - expected).powi(2) / expected).sum();
        // 1% critical value of chi-square with 19 degrees of freedom
        assert!(chi2 < 36.19, "{chi2}");
    }

    #[test]
    fn channel_norm_identity() {
        let inst = generate(&ScenarioConfig::desk()).unwrap();
        let params = ChannelParams::with_antennas(4);
        let zero = channel_vector(0, 0, Complex64::new(0.0, 0.0), &inst, &params).unwrap();
        assert_eq!(zero.norm(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for u in 0..inst.num_devices() {
            for k in 0..inst.num_uavs() {
                let s = sample_small_scale(&params.nakagami, &mut rng);
                let h = channel_vector(u, k, s, &inst, &params).unwrap();
                let l = path_gain(inst.devices[u], inst.uavs[k], &params.path_loss).unwrap();
                assert!((h.norm() / (s.norm() * l) - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_user_detector_is_matched_filter() {
        let h = CMatrix::from_column_slice(
            3,
            1,
            &[Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.1), Complex64::new(0.3, -0.7)],
        );
        let w = mmse_detector(&h, &[2.0], 0.5).unwrap();
        let ratio = w[(0, 0)] / h[(0, 0)];
        assert!(ratio.im.abs() < 1e-12 && ratio.re > 0.0);
        for i in 0..3 {
            assert!((w[(i, 0)] - h[(i, 0)] * ratio).norm() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_users_do_not_leak() {
        let mut h = CMatrix::zeros(4, 2);
        h[(0, 0)] = Complex64::new(1e-6, 0.0);
        h[(1, 1)] = Complex64::new(0.0, 2e-6);
        let w = mmse_detector(&h, &[1.0, 1.5], 4e-15).unwrap();
        let proj = w.adjoint() * &h;
        assert!(proj[(0, 1)].norm() / proj[(0, 0)].norm() < 1e-10);
    }

    #[test]
    fn detector_satisfies_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = CMatrix::from_fn(4, 3, |_, _| Complex64::new(rng.random(), rng.random()) * 1e-6);
        let p = [0.5, 1.0, 2.0];
        let s2 = 4e-15;
        let w = mmse_detector(&h, &p, s2).unwrap();
        let mut g = CMatrix::identity(4, 4) * Complex64::new(s2, 0.0);
        for v in 0..3 {
            g += h.column(v) * h.column(v).adjoint() * Complex64::new(p[v], 0.0);
        }
        let resid = (&g * &w - &h).norm() / h.norm();
        assert!(resid < 1e-9, "{resid}");
    }

    #[test]
    fn detector_rejects_zero_noise() {
        let h = CMatrix::zeros(2, 1);
        assert!(mmse_detector(&h, &[1.0], 0.0).is_err());
    }

    fn one_device() -> (ScenarioInstance, ChannelParams, SystemParams) {
        let inst = ScenarioInstance {
            uavs: vec![[0.0, 0.0, 3000.0]],
            devices: vec![[1200.0, -800.0]],
            z: vec![vec![1]],
            data_bits: vec![1e6],
        };
        (inst, ChannelParams::with_antennas(4), SystemParams::default())
    }

    #[test]
    fn single_user_theta_matches_mean_gain() {
        let (inst, params, sys) = one_device();
        let n = 20_000;
        let th = estimate_theta(&inst, &params, &sys, n, 4).unwrap();
        let l = path_gain(inst.devices[0], inst.uavs[0], &params.path_loss).unwrap();
        let mean = params.nakagami.omega * l * l * 4.0;
        let se = mean / (params.nakagami.m * n as f64).sqrt();
        assert!((th.get(0, 0, 0) - mean).abs() < 3.0 * se);
        assert_eq!(th.nominal_power, sys.p_max);
    }

    #[test]
    fn theta_is_deterministic_and_nonnegative() {
        let inst = generate(&ScenarioConfig::desk()).unwrap();
        let params = ChannelParams::with_antennas(4);
        let sys = SystemParams::default();
        let a = estimate_theta(&inst, &params, &sys, 50, 8).unwrap();
        let b = estimate_theta(&inst, &params, &sys, 50, 8).unwrap();
        assert_eq!(a, b);
        assert!(a.violations().is_empty());
    }

    #[test]
    fn theta_error_shrinks_with_samples() {
        let (inst, params, sys) = one_device();
        let spread = |n: usize| {
            let vals: Vec<f64> = (0..40)
                .map(|s| estimate_theta(&inst, &params, &sys, n, 100 + s).unwrap().get(0, 0, 0))
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
        };
        let ratio = spread(100) / spread(400);
        assert!((1.4..2.9).contains(&ratio), "{ratio}");
    }

    #[test]
    fn zero_power_zero_rate() {
        let inst = generate(&ScenarioConfig::desk()).unwrap();
        let params = ChannelParams::with_antennas(4);
        let sys = SystemParams::default();
        let mut p = vec![1.0; inst.num_devices()];
        p[2] = 0.0;
        let r = ergodic_rates_mc(0, &p, &inst, &params, &sys, 20, 1).unwrap();
        assert_eq!(r[2], 0.0);
        let silent = SystemParams {
            gamma_ul: 1.0 - 1e-300,
            ..sys.clone()
        };
        let r = ergodic_rates_mc(0, &p, &inst, &params, &silent, 20, 1).unwrap();
        assert!(r.iter().all(|&x| x < 1e-200));
    }

    #[test]
    fn single_user_rate_matches_brute_force() {
        let (inst, params, sys) = one_device();
        let p = 0.7;
        let mc = ergodic_rates_mc(0, &[p], &inst, &params, &sys, 20_000, 2).unwrap()[0];
        // independent oracle: w ∝ h gives SINR = p ‖h‖² / σ² = p |s|² l² M / σ²
        let l = path_gain(inst.devices[0], inst.uavs[0], &params.path_loss).unwrap();
        let law = Gamma::new(params.nakagami.m, params.nakagami.omega / params.nakagami.m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let g: f64 = law.sample(&mut rng);
            acc += (1.0 + p * g * l * l * 4.0 / sys.sigma2).log2();
        }
        let oracle = sys.rate_scale() * acc / n as f64;
        assert!((mc / oracle - 1.0).abs() < 0.01, "{mc} vs {oracle}");
    }

    #[test]
    fn approx_rate_reference_value() {
        let th = ThetaTensor {
            theta: vec![vec![vec![1e-14]]],
            seed: 0,
            n_samples: 1,
            nominal_power: 2.0,
        };
        let sys = SystemParams {
            sigma2: 3.98e-15,
            ..SystemParams::default()
        };
        let r = approx_rate_col(0, 0, &[2.0], &th, &sys);
        assert!((r - 0.9e6 * (1.0 + 2e-14 / 3.98e-15f64).log2()).abs() < 1e-6);
        assert!((r / 2.33e6 - 1.0).abs() < 0.002, "{r}");
        assert_eq!(approx_rate_col(0, 0, &[0.0], &th, &sys), 0.0);
    }
}
