//! Experiment configuration, drivers that regenerate the reference tables and
//! trend sweeps as CSV, and solution files.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{proposed, run_all, BaselineResult};
use crate::channel::{approx_rate_col, approx_rates, ergodic_rates_mc, estimate_theta, ThetaTensor};
use crate::error::{NtnError, Result};
use crate::latency::{demand_satisfied, stream_feasible, validate_schedule, RouteMode};
use crate::orchestrator::{
    algorithm3_joint, algorithm4_process, fmt_f64, run_branch, satellite_nt_range, BranchRanges, BranchResult,
    OrchestratorOptions, ProcessResult,
};
use crate::params::{ArrayParams, ChannelParams, NakagamiParams, PathLossParams, PerUnit, SystemParams};
use crate::scenario::{generate, ScenarioConfig, ScenarioInstance};

pub const SCHEMA_LINE: &str = "# schema=1";

/// Environment variable that overrides the master seed.
pub const SEED_ENV: &str = "NTN_SEED";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub path_loss: PathLossParams,
    pub nakagami: NakagamiParams,
    /// Element spacing (m); half a wavelength when absent.
    pub antenna_spacing: Option<f64>,
}

impl ChannelConfig {
    pub fn params(&self, m: usize) -> ChannelParams {
        let mut array = ArrayParams::half_wavelength(m, self.path_loss.f);
        if let Some(d0) = self.antenna_spacing {
            array.d0 = d0;
        }
        ChannelParams {
            path_loss: self.path_loss.clone(),
            nakagami: self.nakagami.clone(),
            array,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExperimentTag {
    #[serde(rename = "fig3")]
    Fig3,
    #[serde(rename = "fig4")]
    Fig4,
    #[serde(rename = "table2")]
    Table2,
    #[serde(rename = "fig5_6")]
    Fig5_6,
    #[serde(rename = "fig_nt")]
    FigNt,
    #[serde(rename = "fig_rcrs")]
    FigRcrs,
    #[serde(rename = "fig_beta")]
    FigBeta,
    #[serde(rename = "fig_users")]
    FigUsers,
    #[serde(rename = "fig_height")]
    FigHeight,
    #[serde(rename = "custom")]
    Custom,
}

impl ExperimentTag {
    pub const ALL: [ExperimentTag; 10] = [
        ExperimentTag::Fig3,
        ExperimentTag::Fig4,
        ExperimentTag::Table2,
        ExperimentTag::Fig5_6,
        ExperimentTag::FigNt,
        ExperimentTag::FigRcrs,
        ExperimentTag::FigBeta,
        ExperimentTag::FigUsers,
        ExperimentTag::FigHeight,
        ExperimentTag::Custom,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ExperimentTag::Fig3 => "fig3",
            ExperimentTag::Fig4 => "fig4",
            ExperimentTag::Table2 => "table2",
            ExperimentTag::Fig5_6 => "fig5_6",
            ExperimentTag::FigNt => "fig_nt",
            ExperimentTag::FigRcrs => "fig_rcrs",
            ExperimentTag::FigBeta => "fig_beta",
            ExperimentTag::FigUsers => "fig_users",
            ExperimentTag::FigHeight => "fig_height",
            ExperimentTag::Custom => "custom",
        }
    }
}

impl FromStr for ExperimentTag {
    type Err = NtnError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.label() == s)
            .ok_or_else(|| NtnError::InvalidConfig(vec![format!("experiment.tag: unknown tag `{s}`")]))
    }
}

/// Sweep grids and sampling sizes. Absent grids take per-tag defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub tag: ExperimentTag,
    pub seeds: Vec<u64>,
    pub data_bits: Option<Vec<f64>>,
    /// Segmentation counts tried on the UAV branches.
    pub n_t: Vec<usize>,
    pub r_mec: Option<Vec<f64>>,
    pub r_bh: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub users: Option<Vec<usize>>,
    pub heights: Option<Vec<f64>>,
    /// Monte-Carlo samples for θ.
    pub theta_samples: usize,
    /// Monte-Carlo samples for reference ergodic rates.
    pub rate_samples: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            tag: ExperimentTag::Custom,
            seeds: vec![1, 2, 3],
            data_bits: None,
            n_t: vec![1, 2, 4, 8],
            r_mec: None,
            r_bh: None,
            beta: None,
            users: None,
            heights: None,
            theta_samples: 2000,
            rate_samples: 500,
        }
    }
}

impl ExperimentSpec {
    pub fn data_bits(&self) -> Vec<f64> {
        self.data_bits.clone().unwrap_or_else(|| match self.tag {
            ExperimentTag::Table2 => vec![1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9],
            ExperimentTag::Fig5_6 | ExperimentTag::FigNt => vec![1e5, 1e6, 1e7],
            ExperimentTag::Fig4 => vec![1e9],
            _ => vec![1e7],
        })
    }

    pub fn r_mec(&self) -> Vec<f64> {
        self.r_mec.clone().unwrap_or_else(|| match self.tag {
            ExperimentTag::FigBeta => vec![2e6, 6e6, 1e7],
            _ => vec![1e6, 2e6, 4e6, 6e6, 8e6, 1e7],
        })
    }

    pub fn r_bh(&self) -> Vec<f64> {
        self.r_bh.clone().unwrap_or_else(|| vec![1e6, 2e6, 4e6])
    }

    pub fn beta(&self) -> Vec<f64> {
        self.beta.clone().unwrap_or_else(|| match self.tag {
            ExperimentTag::FigUsers => vec![0.2, 0.5, 0.8],
            _ => vec![0.0, 0.25, 0.5, 0.75, 1.0],
        })
    }

    pub fn users(&self) -> Vec<usize> {
        self.users.clone().unwrap_or_else(|| vec![6, 12, 18, 24])
    }

    pub fn heights(&self) -> Vec<f64> {
        self.heights.clone().unwrap_or_else(|| vec![1000.0, 2000.0, 3000.0, 4000.0, 5000.0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub system: SystemParams,
    pub channel: ChannelConfig,
    pub experiment: ExperimentSpec,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::desk(),
            system: SystemParams::default(),
            channel: ChannelConfig::default(),
            experiment: ExperimentSpec::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn check_grid<T: PartialOrd + Copy + std::fmt::Display>(
    name: &str,
    grid: &Option<Vec<T>>,
    ok: impl Fn(T) -> bool,
    errs: &mut Vec<String>,
) {
    if let Some(g) = grid {
        if g.is_empty() {
            errs.push(format!("experiment.{name}: sweep must not be empty"));
        }
        for &v in g {
            if !ok(v) {
                errs.push(format!("experiment.{name}: invalid value {v}"));
            }
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| NtnError::InvalidConfig(vec![format!("config: {e}")]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| NtnError::InvalidConfig(vec![format!("config {}: {e}", path.display())]))?;
        Self::from_json(&text)
    }

    /// Every violated field.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = self.scenario.violations();
        errs.extend(self.system.violations(self.scenario.k, self.scenario.u));
        errs.extend(self.channel.params(self.scenario.m).validate());
        let e = &self.experiment;
        if e.seeds.is_empty() {
            errs.push("experiment.seeds: at least one seed".into());
        }
        if e.seeds.iter().collect::<BTreeSet<_>>().len() != e.seeds.len() {
            errs.push("experiment.seeds: seeds must be distinct".into());
        }
        if e.n_t.is_empty() || e.n_t.contains(&0) {
            errs.push("experiment.n_t: non-empty, every entry at least 1".into());
        } else if !e.n_t.contains(&1) {
            errs.push("experiment.n_t: must contain 1".into());
        }
        if e.theta_samples == 0 {
            errs.push("experiment.theta_samples: at least one sample".into());
        }
        if e.rate_samples == 0 {
            errs.push("experiment.rate_samples: at least one sample".into());
        }
        let pos = |v: f64| v > 0.0 && v.is_finite();
        check_grid("data_bits", &e.data_bits, |v: f64| v >= 0.0 && v.is_finite(), &mut errs);
        check_grid("r_mec", &e.r_mec, pos, &mut errs);
        check_grid("r_bh", &e.r_bh, pos, &mut errs);
        check_grid("beta", &e.beta, |v: f64| (0.0..=1.0).contains(&v), &mut errs);
        check_grid("users", &e.users, |v: usize| v > 0, &mut errs);
        check_grid("heights", &e.heights, pos, &mut errs);
        let per_device = matches!(self.scenario.data_bits, PerUnit::Each(_));
        if per_device && e.tag == ExperimentTag::FigUsers {
            errs.push("scenario.data_bits: per-device sizes cannot be combined with a user sweep".into());
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(NtnError::InvalidConfig(errs))
        }
    }

    /// Shifts the seed list so it starts at `master`, keeping its length.
    pub fn override_seed(&mut self, master: u64) {
        let n = self.experiment.seeds.len().max(1) as u64;
        self.experiment.seeds = (0..n).map(|i| master.wrapping_add(i)).collect();
        self.scenario.seed = master;
    }

    /// Applies `NTN_SEED` when set.
    pub fn apply_env_seed(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed = v
                .trim()
                .parse()
                .map_err(|_| NtnError::InvalidConfig(vec![format!("{SEED_ENV}: `{v}` is not an unsigned integer")]))?;
            self.override_seed(seed);
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn sha256(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn channel_params(&self) -> ChannelParams {
        self.channel.params(self.scenario.m)
    }

    fn instance(&self, scenario: &ScenarioConfig, seed: u64) -> Result<ScenarioInstance> {
        generate(&ScenarioConfig {
            seed,
            ..scenario.clone()
        })
    }

    fn theta(&self, instance: &ScenarioInstance, sys: &SystemParams, m: usize, seed: u64) -> Result<ThetaTensor> {
        estimate_theta(instance, &self.channel.params(m), sys, self.experiment.theta_samples, seed)
    }

    pub fn options(&self, seed: u64) -> OrchestratorOptions {
        OrchestratorOptions {
            seed,
            ..OrchestratorOptions::default()
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// One output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    fn csv(name: &str, header: &str, rows: Vec<String>) -> Self {
        let mut contents = format!("{SCHEMA_LINE}\n{header}\n");
        for r in rows {
            contents.push_str(&r);
            contents.push('\n');
        }
        Self {
            name: name.to_string(),
            contents,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub tag: ExperimentTag,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub version: String,
    pub theta_samples: usize,
    pub rate_samples: usize,
    pub artifacts: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub manifest: Manifest,
}

impl RunOutput {
    /// Writes every artifact and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for a in &self.artifacts {
            let p = dir.join(&a.name);
            fs::write(&p, &a.contents)?;
            written.push(p);
        }
        let p = dir.join(format!("{}_manifest.json", self.manifest.tag.label()));
        fs::write(&p, serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        written.push(p);
        Ok(written)
    }
}

/// Runs the configured experiment.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let artifacts = match config.experiment.tag {
        ExperimentTag::Fig3 => vec![fig3(config)?],
        ExperimentTag::Fig4 => vec![fig4(config)?],
        ExperimentTag::Table2 => vec![table2(config)?],
        ExperimentTag::Fig5_6 => vec![baselines_csv(config, "fig5_6.csv", &config.experiment.data_bits())?],
        ExperimentTag::FigNt => vec![fig_nt(config)?],
        ExperimentTag::FigRcrs => vec![fig_rcrs(config)?],
        ExperimentTag::FigBeta => vec![fig_beta(config)?],
        ExperimentTag::FigUsers => vec![fig_users(config)?],
        ExperimentTag::FigHeight => vec![fig_height(config)?],
        ExperimentTag::Custom => vec![custom(config)?],
    };
    let manifest = Manifest {
        schema: 1,
        tag: config.experiment.tag,
        config_sha256: config.sha256(),
        seeds: config.experiment.seeds.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        theta_samples: config.experiment.theta_samples,
        rate_samples: config.experiment.rate_samples,
        artifacts: artifacts
            .iter()
            .map(|a| ManifestEntry {
                file: a.name.clone(),
                sha256: sha256_hex(a.contents.as_bytes()),
                rows: a.contents.lines().count().saturating_sub(2),
            })
            .collect(),
    };
    Ok(RunOutput { artifacts, manifest })
}

/// Evaluates `f` on every job in parallel and returns the results in job order.
fn par_rows<J: Sync, F>(jobs: &[J], f: F) -> Result<Vec<String>>
where
    F: Fn(&J) -> Result<Vec<String>> + Sync + Send,
{
    let out: Vec<Result<Vec<String>>> = jobs.par_iter().map(f).collect();
    let mut rows = Vec::new();
    for r in out {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Monte-Carlo and approximate rate of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSample {
    pub seed: u64,
    pub device: usize,
    pub uav: usize,
    pub mc_rate: f64,
    pub approx_rate: f64,
}

impl RateSample {
    pub fn rel_error(&self) -> f64 {
        (self.approx_rate - self.mc_rate).abs() / self.mc_rate
    }
}

/// Rates of every device at full power on the scenario of `seed`.
pub fn rate_samples(config: &ExperimentConfig, seed: u64) -> Result<Vec<RateSample>> {
    let sys = &config.system;
    let inst = config.instance(&config.scenario, seed)?;
    let theta = config.theta(&inst, sys, config.scenario.m, seed)?;
    let params = config.channel_params();
    let p = vec![sys.p_max; inst.num_devices()];
    let mut out = Vec::new();
    for k in 0..inst.num_uavs() {
        let served = inst.served_by(k);
        if served.is_empty() {
            continue;
        }
        // separate stream from the θ estimate
        let mc = ergodic_rates_mc(k, &p, &inst, &params, sys, config.experiment.rate_samples, seed ^ 0x5eed_f3a7)?;
        for u in served {
            out.push(RateSample {
                seed,
                device: u,
                uav: k,
                mc_rate: mc[u],
                approx_rate: approx_rate_col(u, k, &p, &theta, sys),
            });
        }
    }
    Ok(out)
}

fn fig3(config: &ExperimentConfig) -> Result<Artifact> {
    let rows = par_rows(&config.experiment.seeds, |&seed| {
        Ok(rate_samples(config, seed)?
            .into_iter()
            .map(|s| {
                format!(
                    "{},{},{},{},{},{}",
                    s.seed,
                    s.device,
                    s.uav,
                    s.mc_rate,
                    s.approx_rate,
                    s.rel_error()
                )
            })
            .collect())
    })?;
    Ok(Artifact::csv(
        "fig3.csv",
        "scenario_id,device,uav,mc_rate_bps,approx_rate_bps,rel_error",
        rows,
    ))
}

/// System parameters for the convergence and altitude runs: MEC rate from the
/// first `r_mec` grid entry when one is given, 10 Mbit/s otherwise.
fn fast_mec(config: &ExperimentConfig) -> SystemParams {
    let c = config.experiment.r_mec.as_ref().and_then(|g| g.first().copied()).unwrap_or(1e7);
    SystemParams {
        r_mec: PerUnit::All(c),
        ..config.system.clone()
    }
}

fn fig4(config: &ExperimentConfig) -> Result<Artifact> {
    let d = config.experiment.data_bits()[0];
    let n_t = *config.experiment.n_t.iter().max().unwrap_or(&1);
    let sys = fast_mec(config);
    let rows = par_rows(&config.experiment.seeds, |&seed| {
        let inst = config.instance(&config.scenario, seed)?.with_data_bits(d);
        let theta = config.theta(&inst, &sys, config.scenario.m, seed)?;
        let out = algorithm3_joint(&theta, &sys, &inst, RouteMode::SatUavMec, n_t, &config.options(seed))?;
        Ok(out
            .trace
            .steps
            .iter()
            .map(|s| {
                format!(
                    "{seed},{d},{n_t},{},{},{},{},{},{}",
                    s.iter,
                    s.round,
                    s.block.label(),
                    fmt_f64(s.delta_t),
                    fmt_f64(s.candidate),
                    s.status
                )
            })
            .collect())
    })?;
    Ok(Artifact::csv(
        "fig4.csv",
        "seed,D_bits,N_T,iter,round,block,delta_t,candidate,status",
        rows,
    ))
}

fn branch_ranges(config: &ExperimentConfig, instance: &ScenarioInstance, sys: &SystemParams) -> BranchRanges {
    BranchRanges {
        satellite: satellite_nt_range(sys, &instance.data_bits),
        no_mec: config.experiment.n_t.clone(),
        with_mec: config.experiment.n_t.clone(),
    }
}

fn table2(config: &ExperimentConfig) -> Result<Artifact> {
    let jobs: Vec<(u64, f64)> = config
        .experiment
        .seeds
        .iter()
        .flat_map(|&s| config.experiment.data_bits().into_iter().map(move |d| (s, d)))
        .collect();
    let sys = &config.system;
    let rows = par_rows(&jobs, |&(seed, d)| {
        let inst = config.instance(&config.scenario, seed)?.with_data_bits(d);
        let theta = config.theta(&inst, sys, config.scenario.m, seed)?;
        let res = algorithm4_process(&theta, sys, &inst, &branch_ranges(config, &inst, sys), &config.options(seed))?;
        let col = |m: RouteMode| -> (String, String) {
            match res.branches.iter().find(|b| b.branch == m) {
                Some(b) => (fmt_f64(b.t_total), b.n_t.to_string()),
                None => ("inf".into(), String::new()),
            }
        };
        let (s, sn) = col(RouteMode::SatelliteOnly);
        let (n, nn) = col(RouteMode::SatUavNoMec);
        let (w, wn) = col(RouteMode::SatUavMec);
        Ok(vec![format!(
            "{seed},{d},{s},{n},{w},{},{sn},{nn},{wn}",
            res.winner.branch.label()
        )])
    })?;
    Ok(Artifact::csv(
        "table2.csv",
        "seed,D_bits,satellite_only_s,no_mec_s,with_mec_s,winner,N_T_satellite,N_T_no_mec,N_T_with_mec",
        rows,
    ))
}

fn baseline_rows(results: &[BaselineResult], seed: u64, instance: &ScenarioInstance) -> Vec<String> {
    results
        .iter()
        .map(|r| format!("{seed},{},{}", r.csv_row(instance), r.mode.label()))
        .collect()
}

fn baselines_csv(config: &ExperimentConfig, name: &str, data_bits: &[f64]) -> Result<Artifact> {
    let jobs: Vec<(u64, f64)> = config
        .experiment
        .seeds
        .iter()
        .flat_map(|&s| data_bits.iter().map(move |&d| (s, d)))
        .collect();
    let sys = &config.system;
    let params = config.channel_params();
    let rows = par_rows(&jobs, |&(seed, d)| {
        let inst = config.instance(&config.scenario, seed)?.with_data_bits(d);
        let theta = config.theta(&inst, sys, config.scenario.m, seed)?;
        let res = run_all(&theta, &params, sys, &inst, &config.experiment.n_t, &config.options(seed))?;
        Ok(baseline_rows(&res, seed, &inst))
    })?;
    Ok(Artifact::csv(
        name,
        &format!("seed,{},mode", BaselineResult::CSV_HEADER),
        rows,
    ))
}

fn custom(config: &ExperimentConfig) -> Result<Artifact> {
    let sys = &config.system;
    let params = config.channel_params();
    let rows = par_rows(&config.experiment.seeds, |&seed| {
        let inst = config.instance(&config.scenario, seed)?;
        let theta = config.theta(&inst, sys, config.scenario.m, seed)?;
        let res = run_all(&theta, &params, sys, &inst, &config.experiment.n_t, &config.options(seed))?;
        Ok(baseline_rows(&res, seed, &inst))
    })?;
    Ok(Artifact::csv(
        "custom.csv",
        &format!("seed,{},mode", BaselineResult::CSV_HEADER),
        rows,
    ))
}

fn fig_nt(config: &ExperimentConfig) -> Result<Artifact> {
    let e = &config.experiment;
    let jobs: Vec<(u64, f64, usize)> = e
        .seeds
        .iter()
        .flat_map(|&s| {
            e.data_bits()
                .into_iter()
                .flat_map(move |d| e.n_t.iter().map(move |&n| (s, d, n)))
        })
        .collect();
    let sys = &config.system;
    let rows = par_rows(&jobs, |&(seed, d, n_t)| {
        let inst = config.instance(&config.scenario, seed)?.with_data_bits(d);
        let theta = config.theta(&inst, sys, config.scenario.m, seed)?;
        let mut rows = Vec::new();
        for m in RouteMode::ALL {
            let cell = match run_branch(m, n_t, &theta, sys, &inst, &config.options(seed)) {
                Ok(b) => format!("{},{}", fmt_f64(b.delta_t), fmt_f64(b.t_total)),
                Err(_) => "inf,inf".into(),
            };
            rows.push(format!("{seed},{d},{n_t},{},{cell}", m.label()));
        }
        Ok(rows)
    })?;
    Ok(Artifact::csv(
        "fig_nt.csv",
        "seed,D_bits,N_T,branch,delta_t_s,T_total_s",
        rows,
    ))
}

fn grid2<A: Copy, B: Copy>(a: &[A], b: &[B]) -> Vec<(A, B)> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).collect()
}

/// Proposed process on one scenario; returns `T_total`, winning branch and `N_T`.
fn proposed_point(
    config: &ExperimentConfig,
    scenario: &ScenarioConfig,
    sys: &SystemParams,
    seed: u64,
) -> Result<String> {
    let d = config.experiment.data_bits()[0];
    let inst = config.instance(scenario, seed)?.with_data_bits(d);
    let theta = config.theta(&inst, sys, scenario.m, seed)?;
    let r = proposed(&theta, sys, &inst, &config.experiment.n_t, &config.options(seed))?;
    Ok(format!("{d},{},{},{}", fmt_f64(r.t_total), r.mode.label(), r.n_t))
}

fn fig_rcrs(config: &ExperimentConfig) -> Result<Artifact> {
    let e = &config.experiment;
    let (r_mec, r_bh) = (e.r_mec(), e.r_bh());
    let jobs: Vec<(u64, f64, f64)> = e
        .seeds
        .iter()
        .flat_map(|&s| grid2(&r_mec, &r_bh).into_iter().map(move |(c, b)| (s, c, b)))
        .collect();
    let rows = par_rows(&jobs, |&(seed, c, b)| {
        let sys = SystemParams {
            r_mec: PerUnit::All(c),
            r_bh: PerUnit::All(b),
            ..config.system.clone()
        };
        Ok(vec![format!("{seed},{c},{b},{}", proposed_point(config, &config.scenario, &sys, seed)?)])
    })?;
    Ok(Artifact::csv(
        "fig_rcrs.csv",
        "seed,r_mec_bps,r_bh_bps,D_bits,T_total_s,winner,N_T",
        rows,
    ))
}

fn fig_beta(config: &ExperimentConfig) -> Result<Artifact> {
    let e = &config.experiment;
    let (beta, r_mec) = (e.beta(), e.r_mec());
    let jobs: Vec<(u64, f64, f64)> = e
        .seeds
        .iter()
        .flat_map(|&s| grid2(&beta, &r_mec).into_iter().map(move |(b, c)| (s, b, c)))
        .collect();
    let rows = par_rows(&jobs, |&(seed, b, c)| {
        let sys = SystemParams {
            r_mec: PerUnit::All(c),
            ..config.system.clone()
        };
        let scen = ScenarioConfig {
            beta: b,
            ..config.scenario.clone()
        };
        Ok(vec![format!("{seed},{b},{c},{}", proposed_point(config, &scen, &sys, seed)?)])
    })?;
    Ok(Artifact::csv(
        "fig_beta.csv",
        "seed,beta,r_mec_bps,D_bits,T_total_s,winner,N_T",
        rows,
    ))
}

fn fig_users(config: &ExperimentConfig) -> Result<Artifact> {
    let e = &config.experiment;
    let (users, beta) = (e.users(), e.beta());
    let jobs: Vec<(u64, usize, f64)> = e
        .seeds
        .iter()
        .flat_map(|&s| grid2(&users, &beta).into_iter().map(move |(u, b)| (s, u, b)))
        .collect();
    let rows = par_rows(&jobs, |&(seed, u, b)| {
        let scen = ScenarioConfig {
            u,
            beta: b,
            ..config.scenario.clone()
        };
        Ok(vec![format!("{seed},{u},{b},{}", proposed_point(config, &scen, &config.system, seed)?)])
    })?;
    Ok(Artifact::csv(
        "fig_users.csv",
        "seed,users,beta,D_bits,T_total_s,winner,N_T",
        rows,
    ))
}

fn fig_height(config: &ExperimentConfig) -> Result<Artifact> {
    let e = &config.experiment;
    let heights = e.heights();
    let sys = fast_mec(config);
    let jobs: Vec<(u64, f64)> = e
        .seeds
        .iter()
        .flat_map(|&s| heights.iter().map(move |&h| (s, h)))
        .collect();
    let rows = par_rows(&jobs, |&(seed, h)| {
        let scen = ScenarioConfig {
            h_uav: h,
            ..config.scenario.clone()
        };
        Ok(vec![format!("{seed},{h},{}", proposed_point(config, &scen, &sys, seed)?)])
    })?;
    Ok(Artifact::csv(
        "fig_height.csv",
        "seed,h_uav_m,D_bits,T_total_s,winner,N_T",
        rows,
    ))
}

/// A solved scenario with everything needed to re-check it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub instance: ScenarioInstance,
    pub system: SystemParams,
    pub theta: ThetaTensor,
    pub result: BranchResult,
}

/// Solves the configured scenario for `seed` with the proposed process.
pub fn solve(config: &ExperimentConfig, seed: u64) -> Result<(ProcessResult, SolutionFile)> {
    config.validate()?;
    let sys = &config.system;
    let inst = config.instance(&config.scenario, seed)?;
    let theta = config.theta(&inst, sys, config.scenario.m, seed)?;
    let res = algorithm4_process(&theta, sys, &inst, &branch_ranges(config, &inst, sys), &config.options(seed))?;
    let file = SolutionFile {
        instance: inst,
        system: sys.clone(),
        theta,
        result: res.winner.clone(),
    };
    Ok((res, file))
}

/// Every problem with a solution file; empty means valid.
pub fn validate_solution(sol: &SolutionFile) -> Result<Vec<String>> {
    let r = &sol.result;
    let sys = &sol.system;
    let inst = &sol.instance;
    let mut errs = inst.violations();
    errs.extend(sys.violations(inst.num_uavs(), inst.num_devices()));
    if !errs.is_empty() {
        return Ok(errs);
    }
    let u = inst.num_devices();
    if r.eta.n_t() != r.n_t || r.power.n_t() != r.n_t || r.eta.num_devices() != u || r.power.num_devices() != u {
        errs.push(format!(
            "shape: expected {u} devices and {} segments in the power matrix and schedule",
            r.n_t
        ));
        return Ok(errs);
    }
    errs.extend(validate_schedule(&r.eta)?);
    errs.extend(r.power.violations(sys.p_max));
    if r.eta.mode() > r.branch {
        errs.push(format!("schedule uses {} paths on the {} branch", r.eta.mode().label(), r.branch.label()));
    }
    let floor = r.branch.floor_multiple() * sys.eps0;
    if r.delta_t < floor * (1.0 - 1e-12) {
        errs.push(format!("delta_t = {} below the branch floor {floor}", r.delta_t));
    }
    let expect = r.n_t as f64 * r.delta_t + sys.epsa;
    if (r.t_total - expect).abs() > 1e-9 * expect.max(1.0) {
        errs.push(format!("T_total = {} but N_T delta_t + eps_a = {expect}", r.t_total));
    }
    if !errs.is_empty() {
        return Ok(errs);
    }
    let rates = approx_rates(&r.power, &sol.theta, sys, inst);
    if r.branch != RouteMode::SatelliteOnly {
        let chk = stream_feasible(&r.eta, &rates, sys, inst);
        if !chk.feasible {
            errs.push("stream caps violated".into());
        }
    }
    if !demand_satisfied(&r.eta, &rates, r.delta_t, sys, inst) {
        errs.push("demand not met within delta_t".into());
    }
    Ok(errs)
}
