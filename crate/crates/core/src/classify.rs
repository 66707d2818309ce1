//! Histogram metrics, nearest-neighbour classification and leave-one-out
//! cross-validation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Guard added to each χ² denominator so empty bins contribute zero.
pub const CHI2_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L2,
    Chi2,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            Metric::L2 => l2_distance(a, b),
            Metric::Chi2 => chi2_distance(a, b),
        }
    }

    /// Human-readable formula, echoed into reports.
    pub fn convention(self) -> &'static str {
        match self {
            Metric::L2 => "sqrt(sum (a_i - b_i)^2)",
            Metric::Chi2 => "0.5 * sum (a_i - b_i)^2 / (a_i + b_i + 1e-12)",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "euclidean" => Ok(Metric::L2),
            "chi2" | "chi-squared" | "x2" => Ok(Metric::Chi2),
            other => Err(Error::InvalidParameter(format!("unknown metric {other:?}"))),
        }
    }
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// `½ Σ (aᵢ−bᵢ)² / (aᵢ+bᵢ+ε)` over non-negative entries.
pub fn chi2_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    if let Some((index, &value)) = a.iter().chain(b).enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeEntry {
            index: index % a.len().max(1),
            value,
        });
    }
    Ok(0.5
        * a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y) / (x + y + CHI2_EPSILON))
            .sum::<f64>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeature {
    pub vector: Vec<f64>,
    pub label: String,
    pub id: String,
}

impl LabeledFeature {
    pub fn new(vector: Vec<f64>, label: impl Into<String>, id: impl Into<String>) -> Result<Self> {
        if vector.is_empty() {
            return Err(Error::InvalidParameter("feature vector is empty".into()));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("feature vector has non-finite entries".into()));
        }
        Ok(Self {
            vector,
            label: label.into(),
            id: id.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub label: String,
    pub id: String,
    pub distance: f64,
}

/// Label of the nearest training item; equal distances go to the smaller id.
pub fn nn_classify(train: &[LabeledFeature], query: &[f64], metric: Metric) -> Result<Neighbor> {
    nearest(train.iter(), query, metric)?
        .ok_or_else(|| Error::DegenerateDataset("empty training set".into()))
}

fn nearest<'a>(
    train: impl Iterator<Item = &'a LabeledFeature>,
    query: &[f64],
    metric: Metric,
) -> Result<Option<Neighbor>> {
    let mut best: Option<(&LabeledFeature, f64)> = None;
    for item in train {
        let d = metric.distance(&item.vector, query)?;
        let better = match best {
            None => true,
            Some((b, bd)) => d < bd || (d == bd && item.id < b.id),
        };
        if better {
            best = Some((item, d));
        }
    }
    Ok(best.map(|(item, distance)| Neighbor {
        label: item.label.clone(),
        id: item.id.clone(),
        distance,
    }))
}

/// Rows are true labels, columns predicted labels, both in sorted order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
    pub accuracy: f64,
}

impl ConfusionMatrix {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let pairs: Vec<(&str, &str)> = pairs.into_iter().collect();
        let mut labels: Vec<String> = pairs
            .iter()
            .flat_map(|(t, p)| [t.to_string(), p.to_string()])
            .collect();
        labels.sort();
        labels.dedup();
        let idx = |l: &str| labels.binary_search_by(|x| x.as_str().cmp(l)).unwrap();
        let mut counts = vec![vec![0; labels.len()]; labels.len()];
        for (t, p) in &pairs {
            counts[idx(t)][idx(p)] += 1;
        }
        let correct: usize = (0..labels.len()).map(|i| counts[i][i]).sum();
        let accuracy = if pairs.is_empty() {
            0.0
        } else {
            correct as f64 / pairs.len() as f64
        };
        Self {
            labels,
            counts,
            accuracy,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Aligned text table with an accuracy footer.
    pub fn to_table(&self) -> String {
        let width = self
            .labels
            .iter()
            .map(String::len)
            .chain(self.counts.iter().flatten().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(1)
            .max(9);
        let mut out = String::new();
        let _ = write!(out, "{:>width$}", "true\\pred");
        for l in &self.labels {
            let _ = write!(out, " {l:>width$}");
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            let _ = write!(out, "{l:>width$}");
            for c in row {
                let _ = write!(out, " {c:>width$}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "accuracy: {:.4}", self.accuracy);
        out
    }
}

/// Predictions of a leave-one-out run, in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvPrediction {
    pub id: String,
    pub truth: String,
    pub predicted: Neighbor,
}

/// Classifies every item against all the others.
pub fn loocv(data: &[LabeledFeature], metric: Metric) -> Result<ConfusionMatrix> {
    let preds = loocv_predictions(data, metric)?;
    Ok(ConfusionMatrix::from_pairs(
        preds.iter().map(|p| (p.truth.as_str(), p.predicted.label.as_str())),
    ))
}

pub fn loocv_predictions(data: &[LabeledFeature], metric: Metric) -> Result<Vec<LoocvPrediction>> {
    if data.len() < 2 {
        return Err(Error::DegenerateDataset(format!(
            "leave-one-out needs at least 2 items, got {}",
            data.len()
        )));
    }
    let first = &data[0].label;
    if data.iter().all(|d| &d.label == first) {
        return Err(Error::DegenerateDataset(format!("only one class present ({first})")));
    }
    let dim = data[0].vector.len();
    if let Some(bad) = data.iter().find(|d| d.vector.len() != dim) {
        return Err(Error::LengthMismatch {
            left: dim,
            right: bad.vector.len(),
        });
    }
    par::map_range(data.len(), |i| {
        let others = data.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, d)| d);
        let predicted = nearest(others, &data[i].vector, metric)?.expect("at least one other item");
        Ok(LoocvPrediction {
            id: data[i].id.clone(),
            truth: data[i].label.clone(),
            predicted,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(v: &[f64], label: &str, id: &str) -> LabeledFeature {
        LabeledFeature::new(v.to_vec(), label, id).unwrap()
    }

    #[test]
    fn l2_basics() {
        assert_eq!(l2_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(l2_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!(matches!(l2_distance(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn chi2_basics() {
        assert_eq!(chi2_distance(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        let d = chi2_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((d - 1.0).abs() < 1e-11);
        assert!(matches!(chi2_distance(&[1.0, -0.1], &[0.5, 0.5]), Err(Error::NegativeEntry { .. })));
        assert!(chi2_distance(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn single_training_item_wins() {
        let train = [item(&[0.0, 0.0], "a", "x")];
        let n = nn_classify(&train, &[100.0, -3.0], Metric::L2).unwrap();
        assert_eq!(n.label, "a");
        assert!(nn_classify(&[], &[1.0], Metric::L2).is_err());
    }

    #[test]
    fn exact_match_has_zero_distance() {
        let train = [item(&[0.5, 0.5], "a", "1"), item(&[0.1, 0.9], "b", "2")];
        let n = nn_classify(&train, &[0.1, 0.9], Metric::Chi2).unwrap();
        assert_eq!((n.label.as_str(), n.distance), ("b", 0.0));
    }

    #[test]
    fn ties_go_to_smaller_id() {
        let train = [item(&[1.0], "late", "b"), item(&[-1.0], "early", "a")];
        let n = nn_classify(&train, &[0.0], Metric::L2).unwrap();
        assert_eq!(n.id, "a");
        assert_eq!(n.label, "early");
    }

    #[test]
    fn separated_clusters_are_perfect() {
        let mut data = Vec::new();
        for i in 0..5 {
            data.push(item(&[i as f64 * 0.01, 0.0], "a", &format!("a{i}")));
            data.push(item(&[10.0 + i as f64 * 0.01, 0.0], "b", &format!("b{i}")));
        }
        let cm = loocv(&data, Metric::L2).unwrap();
        assert_eq!(cm.accuracy, 1.0);
        assert_eq!(cm.counts, vec![vec![5, 0], vec![0, 5]]);
        assert!(cm.to_table().contains("accuracy: 1.0000"));
    }

    #[test]
    fn duplicated_vectors_cannot_be_separated() {
        let data: Vec<_> = (0..8)
            .map(|i| item(&[1.0, 2.0], if i % 2 == 0 { "a" } else { "b" }, &format!("{i:02}")))
            .collect();
        assert!(loocv(&data, Metric::L2).unwrap().accuracy <= 0.5);
    }

    #[test]
    fn degenerate_datasets() {
        assert!(loocv(&[item(&[1.0], "a", "1")], Metric::L2).is_err());
        let one_class = [item(&[1.0], "a", "1"), item(&[2.0], "a", "2")];
        assert!(matches!(loocv(&one_class, Metric::L2), Err(Error::DegenerateDataset(_))));
        let ragged = [item(&[1.0], "a", "1"), item(&[2.0, 1.0], "b", "2")];
        assert!(loocv(&ragged, Metric::L2).is_err());
    }

    #[test]
    fn confusion_rows_sum_to_class_counts() {
        let cm = ConfusionMatrix::from_pairs([("a", "a"), ("a", "b"), ("b", "b"), ("c", "a")]);
        assert_eq!(cm.labels, vec!["a", "b", "c"]);
        assert_eq!(cm.counts[0].iter().sum::<usize>(), 2);
        assert_eq!(cm.total(), 4);
        assert_eq!(cm.accuracy, 0.5);
    }
}
