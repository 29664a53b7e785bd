//! End-to-end experiments: temporal generalization, spatial generalization, and
//! spatial generalization with instance weighting or domain adaptation.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{spatial_split, split_times, temporal_split, EvalReport, Prediction, Scores};
use crate::data::{format_timestamp, AlignedDataset, Timestamp};
use crate::error::{Error, Result};
use crate::features::{build_features, FeatureMatrix, FeatureSpec, Scaler, TaBinEdges};
use crate::metrics::Metric;
use crate::neural::{fit_lstm, window_ends, LstmArtifact, LstmNetConfig, SeqData};
use crate::regress::grid::{grid_search, CellScore, GridResult, GridSpec};
use crate::regress::{
    fit_model, resolve_hyperparams, Hyperparams, Model, ModelKind, RegressorArtifact, ARTIFACT_VERSION,
};
use crate::transfer::{da_finetune, fit_weighted, kmm_weights, DaConfig, KmmConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "temporal")]
    Temporal,
    #[serde(rename = "spatial")]
    Spatial,
    #[serde(rename = "spatial+kmm")]
    SpatialKmm,
    #[serde(rename = "spatial+da")]
    SpatialDa,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Temporal => "temporal",
            ExperimentKind::Spatial => "spatial",
            ExperimentKind::SpatialKmm => "spatial+kmm",
            ExperimentKind::SpatialDa => "spatial+da",
        })
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temporal" => Ok(ExperimentKind::Temporal),
            "spatial" => Ok(ExperimentKind::Spatial),
            "spatial+kmm" | "kmm" => Ok(ExperimentKind::SpatialKmm),
            "spatial+da" | "da" => Ok(ExperimentKind::SpatialDa),
            other => Err(Error::Config(format!("unknown experiment kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    Ta,
    Pl,
    Both,
}

impl FeatureSet {
    pub fn spec(self, use_time: bool, use_road: bool, standardize: bool) -> FeatureSpec {
        FeatureSpec {
            use_pl: matches!(self, FeatureSet::Pl | FeatureSet::Both),
            use_ta: matches!(self, FeatureSet::Ta | FeatureSet::Both),
            use_time,
            use_road,
            standardize,
            bands: Vec::new(),
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSet::Ta => "TA",
            FeatureSet::Pl => "PL",
            FeatureSet::Both => "TA+PL",
        })
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ta" => Ok(FeatureSet::Ta),
            "pl" => Ok(FeatureSet::Pl),
            "both" | "ta+pl" => Ok(FeatureSet::Both),
            other => Err(Error::Config(format!("unknown feature set {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    pub features: FeatureSet,
    pub use_time: bool,
    pub use_road: bool,
    pub model: ModelKind,
    /// Overrides of the model defaults (classical models only).
    pub hyperparameters: Hyperparams,
    pub grid: Option<GridSpec>,
    pub metric: Metric,
    pub train_frac: f64,
    /// Tail of the training period held out for model selection.
    pub validation_frac: f64,
    /// Select hyperparameters on the test rows instead of the validation slice.
    pub paper_protocol: bool,
    pub source: Vec<String>,
    pub target: Vec<String>,
    /// Kernel models train on at most this many evenly strided rows.
    pub max_kernel_rows: usize,
    /// Instance weighting uses at most this many evenly strided source and target rows.
    pub kmm_max_rows: usize,
    /// Keep every n-th training window for the LSTM.
    pub lstm_stride: usize,
    pub lstm: LstmNetConfig,
    pub kmm: KmmConfig,
    pub da: DaConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            kind: ExperimentKind::Temporal,
            features: FeatureSet::Ta,
            use_time: false,
            use_road: false,
            model: ModelKind::Rf,
            hyperparameters: Hyperparams::new(),
            grid: None,
            metric: Metric::R2,
            train_frac: 0.8,
            validation_frac: 0.125,
            paper_protocol: false,
            source: Vec::new(),
            target: Vec::new(),
            max_kernel_rows: 3000,
            kmm_max_rows: 4000,
            lstm_stride: 1,
            lstm: LstmNetConfig::default(),
            kmm: KmmConfig::default(),
            da: DaConfig::default(),
            seed: 42,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Kernel and neural models see standardized features, and so does instance
    /// weighting. Trees see raw counts.
    pub fn standardized(&self) -> bool {
        self.model.is_kernel() || self.model == ModelKind::Lstm || self.kind == ExperimentKind::SpatialKmm
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.validation_frac > 0.0 && self.validation_frac < 1.0) {
            return Err(Error::Config("validation fraction must lie in (0, 1)".into()));
        }
        if self.lstm_stride == 0 || self.max_kernel_rows == 0 || self.kmm_max_rows == 0 {
            return Err(Error::Config("strides and row caps must be positive".into()));
        }
        match self.kind {
            ExperimentKind::SpatialKmm if self.model == ModelKind::Lstm => Err(Error::Config(
                "instance weighting applies to the classical models".into(),
            )),
            ExperimentKind::SpatialDa if self.model != ModelKind::Lstm => {
                Err(Error::Config("domain adaptation applies to the lstm model".into()))
            }
            _ => Ok(()),
        }
    }
}

/// The final fitted model of an experiment.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    Regressor(RegressorArtifact),
    Lstm(LstmArtifact),
}

impl TrainedModel {
    pub fn to_json(&self) -> Result<String> {
        match self {
            TrainedModel::Regressor(a) => a.to_json(),
            TrainedModel::Lstm(a) => a.to_json(),
        }
    }

    pub fn from_json(kind: ModelKind, s: &str) -> Result<Self> {
        if kind == ModelKind::Lstm {
            Ok(TrainedModel::Lstm(LstmArtifact::from_json(s)?))
        } else {
            let a = RegressorArtifact::from_json(s)?;
            if a.kind != kind {
                return Err(Error::Config(format!("artifact holds a {} model, expected {kind}", a.kind)));
            }
            Ok(TrainedModel::Regressor(a))
        }
    }

    pub fn hash(&self) -> String {
        match self {
            TrainedModel::Regressor(a) => a.hash(),
            TrainedModel::Lstm(a) => a.hash(),
        }
    }

    pub fn columns(&self) -> &[String] {
        match self {
            TrainedModel::Regressor(a) => &a.columns,
            TrainedModel::Lstm(a) => &a.columns,
        }
    }

    pub fn scaler(&self) -> Option<&Scaler> {
        match self {
            TrainedModel::Regressor(a) => a.scaler.as_ref(),
            TrainedModel::Lstm(a) => a.scaler.as_ref(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub report: EvalReport,
    pub predictions: Vec<Prediction>,
    /// Instance weights of the strided source rows (instance weighting only).
    pub weights: Option<Vec<RowWeight>>,
    pub model: TrainedModel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowWeight {
    pub road_id: String,
    pub timestamp: Timestamp,
    pub weight: f64,
}

/// Evenly strided subset of at most `cap` entries.
pub fn stride_subset(rows: &[usize], cap: usize) -> Vec<usize> {
    let step = rows.len().div_ceil(cap.max(1)).max(1);
    rows.iter().copied().step_by(step).collect()
}

struct Plan {
    fit: Vec<usize>,
    eval: Vec<usize>,
    split: String,
}

fn plan(ds: &AlignedDataset, cfg: &ExperimentConfig) -> Result<Plan> {
    match cfg.kind {
        ExperimentKind::Temporal => {
            let (fit, eval) = temporal_split(ds, cfg.train_frac)?;
            let first = ds.rows[eval[0]].timestamp;
            Ok(Plan {
                split: format!(
                    "temporal {:.0}/{:.0}, test from {}",
                    cfg.train_frac * 100.0,
                    (1.0 - cfg.train_frac) * 100.0,
                    format_timestamp(&first)
                ),
                fit,
                eval,
            })
        }
        _ => {
            let (fit, eval) = spatial_split(ds, &cfg.source, &cfg.target)?;
            Ok(Plan {
                split: format!("source [{}] -> target [{}]", cfg.source.join(", "), cfg.target.join(", ")),
                fit,
                eval,
            })
        }
    }
}

/// Model-selection rows: (train, validation) within `fit`, or (fit, eval) when
/// `paper_protocol` selects on the test rows.
fn selection_rows(fm: &FeatureMatrix, p: &Plan, cfg: &ExperimentConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    if cfg.paper_protocol {
        return Ok((p.fit.clone(), p.eval.clone()));
    }
    let times: Vec<Timestamp> = p.fit.iter().map(|&i| fm.timestamps[i]).collect();
    let (a, b) = split_times(&times, 1.0 - cfg.validation_frac)?;
    Ok((a.iter().map(|&k| p.fit[k]).collect(), b.iter().map(|&k| p.fit[k]).collect()))
}

fn pick(rows: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| rows[i].clone()).collect()
}

fn pick_y(y: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| y[i]).collect()
}

fn predictions(fm: &FeatureMatrix, rows: &[usize], y: &[f64], pred: &[f64]) -> Vec<Prediction> {
    rows.iter()
        .zip(pred)
        .map(|(&i, &p)| Prediction {
            timestamp: fm.timestamps[i],
            road_id: fm.road_ids[i].clone(),
            actual: y[i],
            predicted: p,
        })
        .collect()
}

fn score(preds: &[Prediction]) -> Result<Scores> {
    let roads: Vec<String> = preds.iter().map(|p| p.road_id.clone()).collect();
    let a: Vec<f64> = preds.iter().map(|p| p.actual).collect();
    let b: Vec<f64> = preds.iter().map(|p| p.predicted).collect();
    Scores::compute(&roads, &a, &b)
}

fn prepare(ds: &AlignedDataset, edges: &TaBinEdges, cfg: &ExperimentConfig) -> Result<(Plan, FeatureMatrix)> {
    cfg.validate()?;
    let p = plan(ds, cfg).map_err(|e| e.at("split"))?;
    let spec = cfg.features.spec(cfg.use_time, cfg.use_road, cfg.standardized());
    let fm = build_features(ds, &spec, edges, &p.fit).map_err(|e| e.at("features"))?;
    Ok((p, fm))
}

/// Scores a previously trained model on the evaluation rows of `cfg`.
pub fn evaluate(
    ds: &AlignedDataset,
    edges: &TaBinEdges,
    cfg: &ExperimentConfig,
    model: &TrainedModel,
) -> Result<ExperimentOutput> {
    let (p, fm) = prepare(ds, edges, cfg)?;
    if fm.columns != model.columns() || fm.scaler.as_ref() != model.scaler() {
        return Err(Error::Config(
            "the model was trained on different features than this configuration builds".into(),
        )
        .at("features"));
    }
    let y = ds.targets();
    let (preds, hyperparameters) = match model {
        TrainedModel::Regressor(a) => {
            let pred = a.predict(&pick(&fm.rows, &p.eval)).map_err(|e| e.at("predict"))?;
            (predictions(&fm, &p.eval, &y, &pred), a.hyperparameters.clone())
        }
        TrainedModel::Lstm(a) => {
            let ends = window_ends(&fm.road_ids, &fm.timestamps, a.config.window)?;
            let all = SeqData::new(&fm.rows, a.config.window, ends);
            let (eval, _) = window_subset(&all, &p.eval, 1, &y);
            let pred = a.predict(&eval).map_err(|e| e.at("predict"))?;
            (predictions(&fm, &eval.ends, &y, &pred), lstm_hyper(&a.config))
        }
    };
    let scores = score(&preds).map_err(|e| e.at("scoring"))?;
    Ok(ExperimentOutput {
        report: EvalReport {
            name: cfg.name.clone(),
            kind: cfg.kind,
            features: cfg.features,
            model: cfg.model.to_string(),
            hyperparameters,
            seed: cfg.seed,
            split: p.split.clone(),
            scores,
            baseline: None,
            grid: None,
            notes: vec![format!("model {}", model.hash())],
        },
        predictions: preds,
        weights: None,
        model: model.clone(),
    })
}

pub fn run_experiment(ds: &AlignedDataset, edges: &TaBinEdges, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (p, fm) = prepare(ds, edges, cfg)?;
    let y = ds.targets();
    let (sel_train, sel_val) = selection_rows(&fm, &p, cfg).map_err(|e| e.at("validation split"))?;
    if cfg.model == ModelKind::Lstm {
        run_lstm(&fm, &y, &p, &sel_train, &sel_val, cfg)
    } else {
        run_classical(&fm, &y, &p, &sel_train, &sel_val, cfg)
    }
}

fn run_classical(
    fm: &FeatureMatrix,
    y: &[f64],
    p: &Plan,
    sel_train: &[usize],
    sel_val: &[usize],
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutput> {
    let kind = cfg.model;
    let cap = |rows: &[usize]| {
        if kind.is_kernel() {
            stride_subset(rows, cfg.max_kernel_rows)
        } else {
            rows.to_vec()
        }
    };
    let grid = cfg.grid.clone().unwrap_or_else(|| GridSpec::single(&cfg.hyperparameters));
    let overrides_only = cfg.grid.is_none();
    let grid_result = if overrides_only {
        None
    } else {
        let tr = cap(sel_train);
        let va = cap(sel_val);
        let mut with_base = grid.clone();
        // Fixed overrides apply to every cell unless the grid varies them.
        for (k, v) in &cfg.hyperparameters {
            if !with_base.params.iter().any(|(g, _)| g == k) {
                with_base.params.push((k.clone(), vec![*v]));
            }
        }
        Some(
            grid_search(
                kind,
                &with_base,
                &pick(&fm.rows, &tr),
                &pick_y(y, &tr),
                None,
                &pick(&fm.rows, &va),
                &pick_y(y, &va),
                cfg.metric,
                cfg.seed,
            )
            .map_err(|e| e.at("grid search"))?,
        )
    };
    let chosen = match &grid_result {
        Some(g) => g.best.clone(),
        None => cfg.hyperparameters.clone(),
    };
    let hyper = resolve_hyperparams(kind, &chosen)?;

    let fit_rows = cap(&p.fit);
    let eval_x = pick(&fm.rows, &p.eval);
    let plain = fit_model(kind, &hyper, &pick(&fm.rows, &fit_rows), &pick_y(y, &fit_rows), None, cfg.seed)
        .map_err(|e| e.at("fit"))?;
    let plain_pred: Vec<f64> = eval_x.iter().map(|r| plain.predict(r)).collect();
    let plain_preds = predictions(fm, &p.eval, y, &plain_pred);

    let (model_preds, baseline, weights, notes, final_model): (
        Vec<Prediction>,
        Option<Scores>,
        Option<Vec<RowWeight>>,
        Vec<String>,
        Model,
    ) =
        if cfg.kind == ExperimentKind::SpatialKmm {
            let src = stride_subset(&p.fit, cfg.kmm_max_rows.min(if kind.is_kernel() { cfg.max_kernel_rows } else { usize::MAX }));
            let tgt = stride_subset(&p.eval, cfg.kmm_max_rows);
            let xs = pick(&fm.rows, &src);
            let kmm = kmm_weights(&xs, &pick(&fm.rows, &tgt), &cfg.kmm).map_err(|e| e.at("kmm"))?;
            let weighted: Model = fit_weighted(kind, &xs, &pick_y(y, &src), &kmm.alpha, &hyper, cfg.seed)
                .map_err(|e| e.at("weighted fit"))?;
            let pred: Vec<f64> = eval_x.iter().map(|r| weighted.predict(r)).collect();
            let mut notes = vec![format!(
                "kmm: {} source rows, {} target rows, gamma {:.4}, objective {:.4} (uniform {:.4}), {} iterations{}",
                src.len(),
                tgt.len(),
                kmm.gamma,
                kmm.objective,
                kmm.uniform_objective,
                kmm.iterations,
                if kmm.converged { "" } else { ", not converged" }
            )];
            notes.push("baseline: same hyperparameters, unweighted, all source rows".into());
            let weights = src
                .iter()
                .zip(&kmm.alpha)
                .map(|(&i, &w)| RowWeight {
                    road_id: fm.road_ids[i].clone(),
                    timestamp: fm.timestamps[i],
                    weight: w,
                })
                .collect();
            (predictions(fm, &p.eval, y, &pred), Some(score(&plain_preds)?), Some(weights), notes, weighted)
        } else {
            (plain_preds, None, None, Vec::new(), plain)
        };

    let scores = score(&model_preds).map_err(|e| e.at("scoring"))?;
    let mut notes = notes;
    if kind.is_kernel() && fit_rows.len() < p.fit.len() {
        notes.push(format!("kernel model trained on {} of {} rows", fit_rows.len(), p.fit.len()));
    }
    if cfg.paper_protocol {
        notes.push("hyperparameters selected on the test rows".into());
    }
    let artifact = RegressorArtifact {
        format_version: ARTIFACT_VERSION,
        kind,
        hyperparameters: hyper.clone(),
        seed: cfg.seed,
        columns: fm.columns.clone(),
        scaler: fm.scaler.clone(),
        model: final_model,
    };
    Ok(ExperimentOutput {
        model: TrainedModel::Regressor(artifact),
        report: EvalReport {
            name: cfg.name.clone(),
            kind: cfg.kind,
            features: cfg.features,
            model: kind.to_string(),
            hyperparameters: hyper,
            seed: cfg.seed,
            split: p.split.clone(),
            scores,
            baseline,
            grid: grid_result,
            notes,
        },
        predictions: model_preds,
        weights,
    })
}

fn window_subset<'a>(all: &SeqData<'a>, rows: &[usize], stride: usize, y: &[f64]) -> (SeqData<'a>, Vec<f64>) {
    let set: BTreeSet<usize> = rows.iter().copied().collect();
    let mut d = all.filter(|e| set.contains(&e));
    if stride > 1 {
        d.ends = d.ends.iter().copied().step_by(stride).collect();
    }
    let ys = d.ends.iter().map(|&e| y[e]).collect();
    (d, ys)
}

fn lstm_hyper(c: &LstmNetConfig) -> Hyperparams {
    let mut h = Hyperparams::new();
    h.insert("hidden".into(), c.hidden_size as f64);
    h.insert("dense".into(), c.dense_size.unwrap_or(c.hidden_size) as f64);
    h.insert("window".into(), c.window as f64);
    h.insert("dropout".into(), c.dropout_rate);
    h.insert("learning_rate".into(), c.learning_rate);
    h.insert("epochs".into(), c.epochs as f64);
    h.insert("batch_size".into(), c.batch_size as f64);
    h
}

fn run_lstm<'a>(
    fm: &'a FeatureMatrix,
    y: &[f64],
    p: &Plan,
    sel_train: &[usize],
    sel_val: &[usize],
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutput> {
    let windows_for = |c: &LstmNetConfig| -> Result<SeqData> {
        let ends = window_ends(&fm.road_ids, &fm.timestamps, c.window)?;
        Ok(SeqData::new(&fm.rows, c.window, ends))
    };
    let subset = |all: &SeqData<'a>, rows: &[usize], stride: usize| window_subset(all, rows, stride, y);
    let fit = |c: &LstmNetConfig, rows: &[usize]| -> Result<(LstmArtifact, SeqData)> {
        let all = windows_for(c)?;
        let (d, ys) = subset(&all, rows, cfg.lstm_stride);
        let a = fit_lstm(&d, &ys, c, cfg.seed, None)?;
        Ok((a, all))
    };

    let mut grid_result = None;
    let mut chosen = cfg.lstm.clone();
    if let Some(grid) = &cfg.grid {
        let mut cells = Vec::new();
        let mut best: Option<(usize, f64)> = None;
        for h in grid.cells() {
            let scored = cfg.lstm.with_overrides(&h).and_then(|c| {
                let (a, all) = fit(&c, sel_train)?;
                let (v, vy) = subset(&all, sel_val, 1);
                let pred = a.predict(&v)?;
                cfg.metric.score(&vy, &pred)
            });
            let (score, error) = match scored {
                Ok(s) if s.is_finite() => (Some(s), None),
                Ok(s) => (None, Some(format!("non-finite score {s}"))),
                Err(e) => (None, Some(e.to_string())),
            };
            if let Some(s) = score {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((cells.len(), s));
                }
            }
            cells.push(CellScore {
                hyperparameters: h,
                score,
                error,
            });
        }
        let (i, best_score) = best.ok_or_else(|| Error::Data("every grid cell failed".into()).at("grid search"))?;
        chosen = cfg.lstm.with_overrides(&cells[i].hyperparameters)?;
        grid_result = Some(GridResult {
            best: cells[i].hyperparameters.clone(),
            best_score,
            cells,
        });
    }

    let (pre, all) = fit(&chosen, &p.fit).map_err(|e| e.at("lstm fit"))?;
    let pre = pre.with_columns(fm.columns.clone(), fm.scaler.clone());
    let (eval, _) = subset(&all, &p.eval, 1);
    let base_pred = pre.predict(&eval).map_err(|e| e.at("predict"))?;
    let base_preds = predictions(fm, &eval.ends, y, &base_pred);
    let mut notes = Vec::new();
    if cfg.lstm_stride > 1 {
        notes.push(format!("lstm trained on every {}th window", cfg.lstm_stride));
    }
    let (model_preds, baseline, final_model) = if cfg.kind == ExperimentKind::SpatialDa {
        let (src, src_y) = subset(&all, &p.fit, cfg.lstm_stride);
        let da: &DaConfig = &cfg.da;
        let adapted = da_finetune(&pre, &src, &src_y, &eval, da, cfg.seed).map_err(|e| e.at("domain adaptation"))?;
        let pred = adapted.artifact.predict(&eval)?;
        let last = adapted.artifact.log.last();
        notes.push(format!(
            "da: lambda {}, layers {}..{}, gammas {:?}, final source loss {:.4}, mmd {:.4}",
            da.lambda,
            adapted.layers.0,
            adapted.layers.1,
            adapted.gammas,
            last.map_or(f64::NAN, |r| r.loss),
            last.map_or(f64::NAN, |r| r.mmd)
        ));
        (predictions(fm, &eval.ends, y, &pred), Some(score(&base_preds)?), adapted.artifact)
    } else {
        (base_preds, None, pre)
    };
    let scores = score(&model_preds).map_err(|e| e.at("scoring"))?;
    Ok(ExperimentOutput {
        report: EvalReport {
            name: cfg.name.clone(),
            kind: cfg.kind,
            features: cfg.features,
            model: ModelKind::Lstm.to_string(),
            hyperparameters: lstm_hyper(&chosen),
            seed: cfg.seed,
            split: p.split.clone(),
            scores,
            baseline,
            grid: grid_result,
            notes,
        },
        predictions: model_preds,
        weights: None,
        model: TrainedModel::Lstm(final_model),
    })
}
