//! Consensus metrics, backdoor evaluation and per-run summaries.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::data::TriggeredExample;
use crate::error::{Error, Result};
use crate::models::{self, ModelSpec};
use crate::params::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MetricName {
    Accuracy,
    Loss,
    MacroF1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Maximize => a > b,
            Direction::Minimize => a < b,
        }
    }
}

/// The consensus metric. Its direction follows from the name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct MetricSpec {
    pub name: MetricName,
}

impl MetricSpec {
    pub const ACCURACY: Self = Self {
        name: MetricName::Accuracy,
    };
    pub const LOSS: Self = Self {
        name: MetricName::Loss,
    };
    pub const MACRO_F1: Self = Self {
        name: MetricName::MacroF1,
    };

    pub fn direction(&self) -> Direction {
        match self.name {
            MetricName::Accuracy | MetricName::MacroF1 => Direction::Maximize,
            MetricName::Loss => Direction::Minimize,
        }
    }

    pub fn label(&self) -> &'static str {
        match self.name {
            MetricName::Accuracy => "accuracy",
            MetricName::Loss => "loss",
            MetricName::MacroF1 => "macro_f1",
        }
    }

    /// Scores `params` on `data`.
    pub fn score(
        &self,
        spec: &ModelSpec,
        params: &ParamVector,
        data: &[crate::data::Example],
    ) -> Result<f64> {
        match self.name {
            MetricName::Accuracy => Ok(models::evaluate(spec, params, data)?.accuracy),
            MetricName::Loss => Ok(models::evaluate(spec, params, data)?.loss),
            MetricName::MacroF1 => {
                if data.is_empty() {
                    return Err(Error::Empty("evaluation data"));
                }
                let preds = models::predictions(spec, params, data);
                let labels: Vec<usize> = data.iter().map(|e| e.label).collect();
                macro_f1(&preds, &labels, spec.num_classes)
            }
        }
    }
}

impl Default for MetricSpec {
    fn default() -> Self {
        Self::ACCURACY
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Unweighted mean of per-class F1; a class whose precision or recall has a
/// zero denominator contributes 0.
pub fn macro_f1(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("macro_f1 inputs"));
    }
    let mut tp = vec![0usize; num_classes];
    let mut predicted = vec![0usize; num_classes];
    let mut actual = vec![0usize; num_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= num_classes || y >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: p.max(y),
                num_classes,
            });
        }
        predicted[p] += 1;
        actual[y] += 1;
        if p == y {
            tp[y] += 1;
        }
    }
    let mut total = 0.0;
    for c in 0..num_classes {
        if predicted[c] == 0 || actual[c] == 0 || tp[c] == 0 {
            continue;
        }
        let precision = tp[c] as f64 / predicted[c] as f64;
        let recall = tp[c] as f64 / actual[c] as f64;
        total += 2.0 * precision * recall / (precision + recall);
    }
    Ok(total / num_classes as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub final_value: f64,
    pub best: f64,
    pub avg_last_10: f64,
    /// Non-finite entries skipped inside the averaging window.
    pub non_finite_in_window: usize,
}

pub const SUMMARY_WINDOW: usize = 10;

/// Final value, best value under `direction`, and mean of the last ten
/// rounds. Non-finite entries are ignored by `best` and the average.
pub fn summarize(series: &[f64], direction: Direction) -> Result<Summary> {
    let final_value = *series.last().ok_or(Error::Empty("metric series"))?;
    let best = series
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NAN, |acc, v| {
            if acc.is_nan() || direction.better(v, acc) {
                v
            } else {
                acc
            }
        });
    let window = &series[series.len().saturating_sub(SUMMARY_WINDOW)..];
    let (sum, count) = window
        .iter()
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    Ok(Summary {
        final_value,
        best,
        avg_last_10: if count == 0 {
            f64::NAN
        } else {
            sum / count as f64
        },
        non_finite_in_window: window.len() - count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackdoorEval {
    /// Fraction of triggered inputs classified as the target label.
    pub accuracy_target: f64,
    /// Fraction of triggered inputs still classified as their clean label.
    pub accuracy_clean: f64,
    /// Mean cross-entropy toward the target label.
    pub loss: f64,
}

pub fn evaluate_backdoor(
    spec: &ModelSpec,
    params: &ParamVector,
    backdoor_test: &[TriggeredExample],
    target_label: usize,
) -> Result<BackdoorEval> {
    if backdoor_test.is_empty() {
        return Err(Error::Empty("backdoor test set"));
    }
    let (mut hit, mut clean, mut loss) = (0usize, 0usize, 0.0);
    for t in backdoor_test {
        let probs = models::predict_proba(spec, params, &t.example.features);
        let pred = models::predict(spec, params, &t.example.features);
        if pred == target_label {
            hit += 1;
        }
        if pred == t.clean_label {
            clean += 1;
        }
        loss -= libm::log(probs[target_label]);
    }
    let n = backdoor_test.len() as f64;
    Ok(BackdoorEval {
        accuracy_target: hit as f64 / n,
        accuracy_clean: clean as f64 / n,
        loss: loss / n,
    })
}
