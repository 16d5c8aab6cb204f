use std::fs;

use ntn_core::experiments::{self, sha256_hex, ExperimentConfig, ExperimentTag, Manifest, SCHEMA_LINE};
use ntn_core::latency::RouteMode;
use ntn_core::params::PerUnit;

fn quick(tag: ExperimentTag) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.experiment.tag = tag;
    c.experiment.seeds = vec![3];
    c.experiment.n_t = vec![1, 2];
    c.experiment.theta_samples = 200;
    c.experiment.rate_samples = 100;
    c
}

#[test]
fn solved_scenarios_validate() {
    for d in [1e3, 1e5, 1e6] {
        let mut c = quick(ExperimentTag::Custom);
        c.scenario.data_bits = PerUnit::All(d);
        let (res, sol) = experiments::solve(&c, 3).unwrap();
        assert!(experiments::validate_solution(&sol).unwrap().is_empty(), "D = {d}");
        let best = res.branches.iter().map(|b| b.t_total).fold(f64::INFINITY, f64::min);
        assert_eq!(res.winner.t_total, best);
        assert_eq!(res.branches.len(), 3);
        for b in &res.branches {
            assert!(b.delta_t >= b.branch.floor_multiple() * c.system.eps0);
            if b.branch == RouteMode::SatelliteOnly {
                assert!(b.eta.eta_l.iter().all(|&l| l == 1.0));
            }
        }
    }
}

#[test]
fn artifacts_and_manifest_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quick(ExperimentTag::Fig3);
    c.experiment.seeds = vec![1, 2];
    let out = experiments::run(&c).unwrap();
    let written = out.write(dir.path()).unwrap();
    assert_eq!(written.len(), 2);
    let csv = fs::read_to_string(dir.path().join("fig3.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(SCHEMA_LINE));
    assert_eq!(
        lines.next(),
        Some("scenario_id,device,uav,mc_rate_bps,approx_rate_bps,rel_error")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 24);
    assert!(rows[..12].iter().all(|r| r.starts_with("1,")));
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fig3_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.config_sha256, c.sha256());
    assert_eq!(manifest.artifacts[0].sha256, sha256_hex(csv.as_bytes()));
    assert_eq!(manifest.seeds, vec![1, 2]);
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    let c = quick(ExperimentTag::FigRcrs);
    fs::write(&path, serde_json::to_string_pretty(&c).unwrap()).unwrap();
    let back = ExperimentConfig::load(&path).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.sha256(), c.sha256());
}

#[test]
fn sweep_drivers_emit_every_grid_point() {
    let mut c = quick(ExperimentTag::FigHeight);
    c.experiment.heights = Some(vec![2000.0, 4000.0]);
    c.experiment.data_bits = Some(vec![1e5]);
    let out = experiments::run(&c).unwrap();
    let csv = &out.artifacts[0].contents;
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().nth(1).unwrap().starts_with("seed,h_uav_m"));

    let mut c = quick(ExperimentTag::FigNt);
    c.experiment.data_bits = Some(vec![1e4]);
    let out = experiments::run(&c).unwrap();
    // one row per branch per N_T
    assert_eq!(out.artifacts[0].contents.lines().count(), 2 + 2 * 3);
}
