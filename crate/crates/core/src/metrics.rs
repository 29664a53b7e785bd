//! Regression scores.

use crate::error::{Error, Result};

fn check(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            got: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::Data("cannot score an empty prediction set".into()));
    }
    Ok(())
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2_score(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::DegenerateTarget);
    }
    let ss_res: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted)?;
    Ok(actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum::<f64>() / actual.len() as f64)
}

pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted)?;
    Ok(actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum::<f64>() / actual.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    R2,
    /// Negated so that larger is better.
    NegMse,
    NegMae,
}

impl Metric {
    pub fn score(self, actual: &[f64], predicted: &[f64]) -> Result<f64> {
        match self {
            Metric::R2 => r2_score(actual, predicted),
            Metric::NegMse => mse(actual, predicted).map(|v| -v),
            Metric::NegMae => mae(actual, predicted).map(|v| -v),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r2" => Ok(Metric::R2),
            "negmse" | "mse" => Ok(Metric::NegMse),
            "negmae" | "mae" => Ok(Metric::NegMae),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mean_prediction_scores_zero() {
        let y = [1.0, 2.0, 3.0, 6.0];
        assert_eq!(r2_score(&y, &[3.0; 4]).unwrap(), 0.0);
        assert_eq!(r2_score(&y, &y).unwrap(), 1.0);
        assert!(matches!(r2_score(&[2.0, 2.0], &[1.0, 2.0]), Err(Error::DegenerateTarget)));
    }

    proptest! {
        #[test]
        fn r2_is_at_most_one(
            pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..50),
        ) {
            let (a, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Ok(r) = r2_score(&a, &p) {
                prop_assert!(r <= 1.0 + 1e-12);
            }
        }
    }
}
