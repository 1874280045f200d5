use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Pearson r, or `None` when either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    /// Row-major, symmetric, unit diagonal.
    pub values: Vec<Vec<f64>>,
    /// Labels whose series was constant; their off-diagonal entries are 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constant: Vec<String>,
}

impl CorrelationMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.values[self.index(a)?][self.index(b)?])
    }
}

/// Pairwise Pearson coefficients between labelled series of equal length.
pub fn pearson_matrix<I, S>(series: I) -> Result<CorrelationMatrix>
where
    I: IntoIterator<Item = (S, Vec<f64>)>,
    S: Into<String>,
{
    let (labels, data): (Vec<String>, Vec<Vec<f64>>) = series.into_iter().map(|(l, v)| (l.into(), v)).unzip();
    let Some(expected) = data.first().map(Vec::len) else {
        return Err(Error::Invalid("correlation needs at least one series".into()));
    };
    for (label, v) in labels.iter().zip(&data) {
        if v.len() != expected {
            return Err(Error::LengthMismatch {
                label: label.clone(),
                len: v.len(),
                expected,
            });
        }
        if let Some(x) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::Invalid(format!("series {label:?} contains {x}")));
        }
    }
    if expected < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            got: expected,
        });
    }
    let n = labels.len();
    let mut values = vec![vec![0.0; n]; n];
    let mut constant = Vec::new();
    for i in 0..n {
        values[i][i] = 1.0;
        if pearson(&data[i], &data[i]).is_none() {
            log::warn!("series {:?} is constant; its correlations are reported as 0", labels[i]);
            constant.push(labels[i].clone());
        }
        for j in 0..i {
            let r = pearson(&data[i], &data[j]).unwrap_or(0.0);
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        labels,
        values,
        constant,
    })
}

/// Correlations between per-sample statistics.
pub fn stat_correlations(dataset: &Dataset, stats: &[String]) -> Result<CorrelationMatrix> {
    let mut series = Vec::with_capacity(stats.len());
    for stat in stats {
        let v = dataset.iter().map(|s| s.stat(stat)).collect::<Result<Vec<_>>>()?;
        series.push((stat.clone(), v));
    }
    pearson_matrix(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_examples() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-12);
        let r = pearson(&x, &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - (27.0f64 / 28.0).sqrt()).abs() < 1e-12);
        assert!((r - 0.98198).abs() < 1e-5);
    }

    #[test]
    fn constant_series_is_flagged() {
        let m = pearson_matrix([("a", vec![1.0, 2.0, 3.0]), ("c", vec![5.0, 5.0, 5.0])]).unwrap();
        assert_eq!(m.constant, ["c"]);
        assert_eq!(m.get("a", "c"), Some(0.0));
        assert_eq!(m.get("c", "c"), Some(1.0));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            pearson_matrix([("a", vec![1.0, 2.0]), ("b", vec![1.0])]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            pearson_matrix([("a", vec![1.0])]),
            Err(Error::TooFewObservations { needed: 2, got: 1 })
        ));
    }

    proptest! {
        #[test]
        fn matrix_properties(
            cols in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 12), 1..6),
            slope in 0.01f64..100.0,
            shift in -1e3f64..1e3,
        ) {
            let m = pearson_matrix(cols.iter().enumerate().map(|(i, c)| (format!("s{i}"), c.clone()))).unwrap();
            for i in 0..m.len() {
                prop_assert_eq!(m.values[i][i], 1.0);
                for j in 0..m.len() {
                    prop_assert_eq!(m.values[i][j], m.values[j][i]);
                    prop_assert!((-1.0..=1.0).contains(&m.values[i][j]));
                }
            }
            let mut moved = cols.clone();
            for x in moved[0].iter_mut() {
                *x = *x * slope + shift;
            }
            let m2 = pearson_matrix(moved.iter().enumerate().map(|(i, c)| (format!("s{i}"), c.clone()))).unwrap();
            for j in 0..m.len() {
                prop_assert!((m.values[0][j] - m2.values[0][j]).abs() < 1e-9);
            }
        }
    }
}
