//! Exhaustive hyperparameter search.

use serde::{Deserialize, Serialize};

use super::{fit_model, Hyperparams, ModelKind};
use crate::error::{Error, Result};
use crate::metrics::Metric;

/// Ordered hyperparameter value lists. Cells enumerate the cartesian product with the
/// first parameter varying slowest.
///
/// Serializes as a map `name = [values]` in declaration order; a scalar value stands
/// for a one-element list.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GridSpec {
    pub params: Vec<(String, Vec<f64>)>,
}

impl Serialize for GridSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(self.params.len()))?;
        for (k, v) in &self.params {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl<'de> Deserialize<'de> for GridSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct Visit;
        impl<'de> serde::de::Visitor<'de> for Visit {
            type Value = GridSpec;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a map of hyperparameter names to values")
            }

            fn visit_map<A: serde::de::MapAccess<'de>>(self, mut a: A) -> std::result::Result<GridSpec, A::Error> {
                let mut params = Vec::new();
                while let Some((k, v)) = a.next_entry::<String, OneOrMany>()? {
                    let values = match v {
                        OneOrMany::One(x) => vec![x],
                        OneOrMany::Many(xs) => xs,
                    };
                    params.push((k, values));
                }
                GridSpec::new(params).map_err(serde::de::Error::custom)
            }
        }
        d.deserialize_map(Visit)
    }
}

impl GridSpec {
    pub fn new(params: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let g = GridSpec { params };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((k, _)) = self.params.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::Config(format!("grid parameter {k} has no values")));
        }
        Ok(())
    }

    /// A grid with exactly one cell holding these values.
    pub fn single(h: &Hyperparams) -> Self {
        GridSpec {
            params: h.iter().map(|(k, v)| (k.clone(), vec![*v])).collect(),
        }
    }

    /// Parses `key = [v, ...]` or `key = v` lines in declaration order. Tables are
    /// ignored so a grid file may carry other sections.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse()?;
        let mut params = Vec::new();
        for (k, v) in table {
            let values = match v {
                toml::Value::Array(a) => a
                    .iter()
                    .map(|x| number(&k, x))
                    .collect::<Result<Vec<f64>>>()?,
                toml::Value::Table(_) => continue,
                other => vec![number(&k, &other)?],
            };
            params.push((k, values));
        }
        Self::new(params)
    }

    pub fn len(&self) -> usize {
        self.params.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cells(&self) -> Vec<Hyperparams> {
        let mut out = vec![Hyperparams::new()];
        for (k, values) in &self.params {
            out = out
                .into_iter()
                .flat_map(|h| {
                    values.iter().map(move |v| {
                        let mut h = h.clone();
                        h.insert(k.clone(), *v);
                        h
                    })
                })
                .collect();
        }
        out
    }
}

fn number(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        toml::Value::Boolean(b) => Ok(if *b { 1.0 } else { 0.0 }),
        _ => Err(Error::Config(format!("grid parameter {key} must be numeric"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub hyperparameters: Hyperparams,
    /// `None` when fitting or scoring failed.
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: Hyperparams,
    pub best_score: f64,
    pub cells: Vec<CellScore>,
}

/// Fits every cell on the training rows and scores it on the validation rows.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    kind: ModelKind,
    grid: &GridSpec,
    train_x: &[Vec<f64>],
    train_y: &[f64],
    weights: Option<&[f64]>,
    val_x: &[Vec<f64>],
    val_y: &[f64],
    metric: Metric,
    seed: u64,
) -> Result<GridResult> {
    grid.validate()?;
    if train_x.is_empty() || val_x.is_empty() {
        return Err(Error::Data("grid search needs non-empty training and validation rows".into()));
    }
    let mut cells = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for h in grid.cells() {
        let scored = fit_model(kind, &h, train_x, train_y, weights, seed).and_then(|m| {
            let pred: Vec<f64> = val_x.iter().map(|r| m.predict(r)).collect();
            metric.score(val_y, &pred)
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
    let (i, best_score) = best.ok_or_else(|| {
        let why = cells.iter().find_map(|c| c.error.clone()).unwrap_or_default();
        Error::Data(format!("every grid cell failed ({why})"))
    })?;
    Ok(GridResult {
        best: cells[i].hyperparameters.clone(),
        best_score,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 8.0]).collect();
        let y = x.iter().map(|r| r[0].sin()).collect();
        (x, y)
    }

    #[test]
    fn cells_follow_declared_order() {
        let g = GridSpec::from_toml("gamma = [1, 2]\nalpha = [0.1, 0.2, 0.3]\n").unwrap();
        let cells = g.cells();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0]["gamma"], 1.0);
        assert_eq!(cells[1]["alpha"], 0.2);
        assert_eq!(cells[3]["gamma"], 2.0);
        assert!(GridSpec::from_toml("alpha = []").is_err());
        assert!(GridSpec::from_toml("alpha = [\"x\"]").is_err());
    }

    #[test]
    fn single_cell_and_duplicates() {
        let (x, y) = data();
        let g = GridSpec::new(vec![("max_depth".into(), vec![3.0])]).unwrap();
        let r = grid_search(ModelKind::Dt, &g, &x, &y, None, &x, &y, Metric::R2, 0).unwrap();
        assert_eq!(r.best["max_depth"], 3.0);
        let g = GridSpec::new(vec![("max_depth".into(), vec![4.0, 4.0])]).unwrap();
        let r = grid_search(ModelKind::Dt, &g, &x, &y, None, &x, &y, Metric::R2, 0).unwrap();
        assert_eq!(r.cells.len(), 2);
        assert_eq!(r.cells[0].score, r.cells[1].score);
        assert!(std::ptr::eq(&r.cells[0], r.cells.iter().find(|c| c.score == Some(r.best_score)).unwrap()));
    }

    #[test]
    fn failing_cells_are_recorded_and_skipped() {
        let (x, y) = data();
        let g = GridSpec::new(vec![("gamma".into(), vec![-1.0, 1.0])]).unwrap();
        let r = grid_search(ModelKind::Kr, &g, &x, &y, None, &x, &y, Metric::R2, 0).unwrap();
        assert!(r.cells[0].error.is_some());
        assert_eq!(r.best["gamma"], 1.0);
    }
}
