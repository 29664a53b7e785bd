//! Splits, scores and reports.

pub mod experiment;
pub mod plot;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{format_timestamp, AlignedDataset, Timestamp};
use crate::error::{Error, Result};
pub use crate::metrics::r2_score;
use crate::regress::grid::GridResult;
use crate::regress::Hyperparams;
pub use experiment::{
    evaluate, run_experiment, ExperimentConfig, ExperimentKind, ExperimentOutput, FeatureSet, RowWeight,
    TrainedModel,
};

/// Row indices (into `ds.rows`) of the first `⌊n·train_frac⌋` distinct timestamps and
/// of the rest.
pub fn temporal_split(ds: &AlignedDataset, train_frac: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    let times: Vec<Timestamp> = ds.rows.iter().map(|r| r.timestamp).collect();
    let (train, test) = split_times(&times, train_frac)?;
    Ok((train, test))
}

/// Splits positions of `times` by distinct timestamp.
pub fn split_times(times: &[Timestamp], train_frac: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config(format!("train fraction {train_frac} outside (0, 1)")));
    }
    let distinct: Vec<Timestamp> = times.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let k = (distinct.len() as f64 * train_frac).floor() as usize;
    if k == 0 || k == distinct.len() {
        return Err(Error::Data(format!(
            "a {train_frac} split of {} timestamps leaves one side empty",
            distinct.len()
        )));
    }
    let cut = distinct[k];
    let (train, test): (Vec<usize>, Vec<usize>) = (0..times.len()).partition(|&i| times[i] < cut);
    Ok((train, test))
}

/// Row indices of source roads and of target roads.
pub fn spatial_split(ds: &AlignedDataset, source: &[String], target: &[String]) -> Result<(Vec<usize>, Vec<usize>)> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::Config("spatial split needs source and target roads".into()));
    }
    let s: BTreeSet<&String> = source.iter().collect();
    let t: BTreeSet<&String> = target.iter().collect();
    if let Some(both) = s.intersection(&t).next() {
        return Err(Error::Config(format!("road {both} is in both source and target")));
    }
    let index = |ids: &BTreeSet<&String>| -> Result<BTreeSet<usize>> {
        ids.iter()
            .map(|id| {
                ds.road_index(id)
                    .ok_or_else(|| Error::Config(format!("unknown road {id}")))
            })
            .collect()
    };
    let (si, ti) = (index(&s)?, index(&t)?);
    let src: Vec<usize> = (0..ds.rows.len()).filter(|&i| si.contains(&ds.rows[i].road)).collect();
    let tgt: Vec<usize> = (0..ds.rows.len()).filter(|&i| ti.contains(&ds.rows[i].road)).collect();
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::Data("a spatial split side has no aligned rows".into()));
    }
    Ok((src, tgt))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadScore {
    pub road_id: String,
    pub r2: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub per_road: Vec<RoadScore>,
    /// Unweighted mean of the per-road scores.
    pub mean_r2: f64,
}

impl Scores {
    /// Scores predictions grouped by road, roads in first-seen order.
    pub fn compute(roads: &[String], actual: &[f64], predicted: &[f64]) -> Result<Self> {
        let mut order: Vec<&String> = Vec::new();
        for r in roads {
            if !order.contains(&r) {
                order.push(r);
            }
        }
        let per_road = order
            .iter()
            .map(|road| {
                let idx: Vec<usize> = (0..roads.len()).filter(|&i| &roads[i] == *road).collect();
                let a: Vec<f64> = idx.iter().map(|&i| actual[i]).collect();
                let p: Vec<f64> = idx.iter().map(|&i| predicted[i]).collect();
                Ok(RoadScore {
                    road_id: (*road).clone(),
                    r2: r2_score(&a, &p)?,
                    samples: idx.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if per_road.is_empty() {
            return Err(Error::Data("nothing to score".into()));
        }
        let mean_r2 = per_road.iter().map(|s| s.r2).sum::<f64>() / per_road.len() as f64;
        Ok(Scores { per_road, mean_r2 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub kind: ExperimentKind,
    pub features: FeatureSet,
    pub model: String,
    pub hyperparameters: Hyperparams,
    pub seed: u64,
    pub split: String,
    pub scores: Scores,
    /// The same model without transfer, on the same split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Scores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Aligned text table: one row per road plus the mean.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} ({}, {} features, {})", self.name, self.kind, self.features, self.model);
        let _ = writeln!(out, "split: {}", self.split);
        let with_base = self.baseline.is_some();
        let width = self
            .scores
            .per_road
            .iter()
            .map(|s| s.road_id.len())
            .chain([4])
            .max()
            .unwrap_or(4);
        if with_base {
            let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}  {:>7}", "road", "no TL", "TL", "n");
        } else {
            let _ = writeln!(out, "{:<width$}  {:>8}  {:>7}", "road", "R2", "n");
        }
        for (k, s) in self.scores.per_road.iter().enumerate() {
            match &self.baseline {
                Some(b) => {
                    let _ = writeln!(
                        out,
                        "{:<width$}  {:>8.3}  {:>8.3}  {:>7}",
                        s.road_id, b.per_road[k].r2, s.r2, s.samples
                    );
                }
                None => {
                    let _ = writeln!(out, "{:<width$}  {:>8.3}  {:>7}", s.road_id, s.r2, s.samples);
                }
            }
        }
        match &self.baseline {
            Some(b) => {
                let _ = writeln!(out, "{:<width$}  {:>8.3}  {:>8.3}", "mean", b.mean_r2, self.scores.mean_r2);
            }
            None => {
                let _ = writeln!(out, "{:<width$}  {:>8.3}", "mean", self.scores.mean_r2);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub timestamp: Timestamp,
    pub road_id: String,
    pub actual: f64,
    pub predicted: f64,
}

pub fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut out = String::from("timestamp,road_id,actual,predicted\n");
    for p in preds {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            format_timestamp(&p.timestamp),
            p.road_id,
            p.actual,
            p.predicted
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_timestamp;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_r2() {
        assert!((r2_score(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn split_by_distinct_timestamps() {
        let t0 = parse_timestamp("2024-01-01T00:00:00Z").unwrap();
        let times: Vec<Timestamp> = (0..4).map(|i| t0 + crate::data::interval() * i).collect();
        let (a, b) = split_times(&times, 0.75).unwrap();
        assert_eq!((a.len(), b.len()), (3, 1));
        let many: Vec<Timestamp> = (0..5376).map(|i| t0 + crate::data::interval() * i).collect();
        let (a, b) = split_times(&many, 0.8).unwrap();
        assert_eq!((a.len(), b.len()), (4300, 1076));
        assert!(split_times(&times, 0.1).is_err());
    }

    #[test]
    fn mean_matches_per_road() {
        let roads: Vec<String> = ["a", "a", "a", "b", "b"].iter().map(|s| s.to_string()).collect();
        let s = Scores::compute(&roads, &[1.0, 2.0, 3.0, 1.0, 3.0], &[1.0, 2.0, 2.0, 1.0, 3.0]).unwrap();
        assert_eq!(s.per_road.len(), 2);
        assert!((s.mean_r2 - 0.75).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn constant_offset_closed_form(
            y in proptest::collection::vec(-50.0f64..50.0, 3..40),
            c in 0.1f64..5.0,
        ) {
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
            prop_assume!(ss_tot > 1e-6);
            let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
            let r = r2_score(&y, &shifted).unwrap();
            let expected = 1.0 - y.len() as f64 * c * c / ss_tot;
            prop_assert!((r - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
        }

        #[test]
        fn permutation_invariant(
            pairs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..30),
            rot in 0usize..30,
        ) {
            let (a, p): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let k = rot % a.len();
            let mut a2 = a.clone();
            let mut p2 = p.clone();
            a2.rotate_left(k);
            p2.rotate_left(k);
            if let (Ok(x), Ok(y)) = (r2_score(&a, &p), r2_score(&a2, &p2)) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }
}
