use std::collections::BTreeSet;

use cellflow_core::data::{align, AlignedDataset};
use cellflow_core::eval::{run_experiment, spatial_split, temporal_split, EvalReport, ExperimentConfig, ExperimentKind};
use cellflow_core::features::TaBinEdges;
use cellflow_core::regress::ModelKind;
use cellflow_core::synth::{generate, ScenarioConfig};
use proptest::prelude::*;

fn scenario(cfg: &ScenarioConfig) -> (AlignedDataset, TaBinEdges) {
    let sc = generate(cfg).unwrap();
    let ds = align(&sc.counters, &sc.sensors, &sc.roads, &cfg.schema).unwrap().dataset;
    (ds, cfg.edges().unwrap())
}

fn one_week() -> (AlignedDataset, TaBinEdges) {
    let mut cfg = ScenarioConfig::domain_shift();
    cfg.weeks = 1;
    scenario(&cfg)
}

fn ids(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn temporal_tree_runs_end_to_end() {
    let (ds, edges) = one_week();
    let cfg = ExperimentConfig {
        model: ModelKind::Dt,
        ..ExperimentConfig::default()
    };
    let out = run_experiment(&ds, &edges, &cfg).unwrap();
    assert_eq!(out.report.scores.per_road.len(), 6);
    assert!(out.report.scores.mean_r2 > 0.5);
    let (_, test) = temporal_split(&ds, 0.8).unwrap();
    assert_eq!(out.predictions.len(), test.len());
    let back = EvalReport::from_json(&out.report.to_json().unwrap()).unwrap();
    assert_eq!(back, out.report);
}

#[test]
fn grid_selection_is_recorded() {
    let (ds, edges) = one_week();
    let cfg = ExperimentConfig::from_toml(
        r#"
        model = "dt"
        [grid]
        max_depth = [2, 8]
        min_leaf = [1.0, 5.0]
        "#,
    )
    .unwrap();
    let out = run_experiment(&ds, &edges, &cfg).unwrap();
    let grid = out.report.grid.unwrap();
    assert_eq!(grid.cells.len(), 4);
    for (k, v) in &grid.best {
        assert_eq!(out.report.hyperparameters[k], *v);
    }
}

#[test]
fn instance_weighting_reports_a_baseline() {
    let (ds, edges) = one_week();
    let cfg = ExperimentConfig {
        kind: ExperimentKind::SpatialKmm,
        model: ModelKind::Dt,
        source: ids(&["r1", "r2", "r3", "r4"]),
        target: ids(&["r5", "r6"]),
        kmm_max_rows: 300,
        ..ExperimentConfig::default()
    };
    let out = run_experiment(&ds, &edges, &cfg).unwrap();
    assert!(out.report.baseline.is_some());
    let w = out.weights.unwrap();
    assert!(w.iter().all(|r| r.weight >= 0.0) && w.iter().map(|r| r.weight).sum::<f64>() > 0.0);
    assert!(w.iter().all(|r| !["r5", "r6"].contains(&r.road_id.as_str())));
    assert!(out.report.to_text().contains("no TL"));
}

#[test]
fn domain_adaptation_runs_on_a_tiny_network() {
    let (ds, edges) = one_week();
    let mut cfg = ExperimentConfig {
        kind: ExperimentKind::SpatialDa,
        model: ModelKind::Lstm,
        source: ids(&["r1", "r2"]),
        target: ids(&["r5"]),
        lstm_stride: 8,
        ..ExperimentConfig::default()
    };
    cfg.lstm.hidden_size = 4;
    cfg.lstm.epochs = 2;
    cfg.da.epochs = 2;
    let out = run_experiment(&ds, &edges, &cfg).unwrap();
    assert_eq!(out.report.scores.per_road.len(), 1);
    assert!(out.report.baseline.unwrap().mean_r2.is_finite());
}

#[test]
fn mismatched_transfer_models_are_rejected() {
    let (ds, edges) = one_week();
    let kmm_lstm = ExperimentConfig {
        kind: ExperimentKind::SpatialKmm,
        model: ModelKind::Lstm,
        source: ids(&["r1"]),
        target: ids(&["r5"]),
        ..ExperimentConfig::default()
    };
    assert!(run_experiment(&ds, &edges, &kmm_lstm).unwrap_err().is_config());
    let overlap = ExperimentConfig {
        kind: ExperimentKind::Spatial,
        source: ids(&["r1"]),
        target: ids(&["r1"]),
        ..ExperimentConfig::default()
    };
    assert!(run_experiment(&ds, &edges, &overlap).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn temporal_split_is_a_time_ordered_partition(frac in 0.05f64..0.95, weeks in 1u32..3) {
        let mut cfg = ScenarioConfig::default();
        cfg.weeks = weeks;
        cfg.roads.truncate(2);
        let (ds, _) = scenario(&cfg);
        let (a, b) = temporal_split(&ds, frac).unwrap();
        prop_assert_eq!(a.len() + b.len(), ds.rows.len());
        let last_train = a.iter().map(|&i| ds.rows[i].timestamp).max().unwrap();
        let first_test = b.iter().map(|&i| ds.rows[i].timestamp).min().unwrap();
        prop_assert!(last_train < first_test);
        let distinct: BTreeSet<_> = ds.rows.iter().map(|r| r.timestamp).collect();
        let train_times: BTreeSet<_> = a.iter().map(|&i| ds.rows[i].timestamp).collect();
        prop_assert_eq!(train_times.len(), (distinct.len() as f64 * frac).floor() as usize);
    }

    #[test]
    fn spatial_split_follows_road_membership(mask in 1u8..63) {
        let (ds, _) = one_week();
        let all = ["r1", "r2", "r3", "r4", "r5", "r6"];
        let src: Vec<String> = (0..6).filter(|k| mask & (1 << k) != 0).map(|k| all[k].to_string()).collect();
        let tgt: Vec<String> = (0..6).filter(|k| mask & (1 << k) == 0).map(|k| all[k].to_string()).collect();
        let (a, b) = spatial_split(&ds, &src, &tgt).unwrap();
        prop_assert_eq!(a.len() + b.len(), ds.rows.len());
        for &i in &a {
            prop_assert!(src.contains(&ds.roads[ds.rows[i].road].road_id));
        }
    }
}
