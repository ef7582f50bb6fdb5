//! Aggregation rules applied by each pool miner.
//!
//! * FedAvg: arithmetic mean.
//! * Krum: the update whose summed squared distance to its `n - f - 2`
//!   nearest peers is smallest.
//! * Bulyan: mean of the `m` updates with the lowest Krum scores.
//! * GeoMed: the input minimising the summed squared distance to all inputs.
//!
//! Every selection breaks ties by lowest input index.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::params::{self, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Rule {
    Fedavg,
    Krum,
    Bulyan,
    Geomed,
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::Fedavg => "fedavg",
            Rule::Krum => "krum",
            Rule::Bulyan => "bulyan",
            Rule::Geomed => "geomed",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AggregatorConfig {
    pub rule: Rule,
    pub krum_f: usize,
    pub bulyan_m: usize,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        Self {
            rule: Rule::Fedavg,
            krum_f: 1,
            bulyan_m: 5,
        }
    }
}

impl AggregatorConfig {
    /// Smallest number of updates the rule accepts.
    pub fn min_updates(&self) -> usize {
        match self.rule {
            Rule::Fedavg | Rule::Geomed => 1,
            Rule::Krum => self.krum_f + 3,
            Rule::Bulyan => (self.krum_f + 3).max(self.bulyan_m),
        }
    }

    pub fn aggregate(&self, updates: &[ParamVector]) -> Result<ParamVector> {
        match self.rule {
            Rule::Fedavg => fedavg(updates),
            Rule::Krum => krum(updates, self.krum_f),
            Rule::Bulyan => bulyan(updates, self.krum_f, self.bulyan_m),
            Rule::Geomed => geomed(updates),
        }
    }
}

pub fn fedavg(updates: &[ParamVector]) -> Result<ParamVector> {
    params::mean(updates)
}

fn check_same_dim(updates: &[ParamVector]) -> Result<()> {
    if let Some(first) = updates.first() {
        for u in updates {
            if u.dim() != first.dim() {
                return Err(Error::DimensionMismatch {
                    left: first.dim(),
                    right: u.dim(),
                });
            }
        }
    }
    Ok(())
}

/// Symmetric matrix of squared distances.
fn pairwise(updates: &[ParamVector]) -> Result<Vec<Vec<f64>>> {
    check_same_dim(updates)?;
    let n = updates.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = updates[i].l2_dist_sq(&updates[j])?;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

/// Index of the smallest value; ties go to the lowest index.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

pub fn krum_scores(updates: &[ParamVector], f: usize) -> Result<Vec<f64>> {
    let n = updates.len();
    if n < f + 3 {
        return Err(Error::TooFewUpdates {
            got: n,
            needed: f + 3,
        });
    }
    let neighbors = n - f - 2;
    let d = pairwise(updates)?;
    Ok((0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[i][j]).collect();
            row.sort_by(f64::total_cmp);
            row[..neighbors].iter().fold(0.0, |acc, v| acc + v)
        })
        .collect())
}

pub fn krum(updates: &[ParamVector], f: usize) -> Result<ParamVector> {
    let scores = krum_scores(updates, f)?;
    Ok(updates[argmin(&scores)].clone())
}

/// Indices of the `m` lowest scores, ties by index, in score order.
pub fn lowest_scores(scores: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

pub fn bulyan(updates: &[ParamVector], f: usize, m: usize) -> Result<ParamVector> {
    if m == 0 {
        return Err(Error::InvalidConfig("bulyan m must be >= 1".into()));
    }
    if m > updates.len() {
        return Err(Error::SelectionTooLarge {
            m,
            n: updates.len(),
        });
    }
    let scores = krum_scores(updates, f)?;
    let mut chosen = lowest_scores(&scores, m);
    // Sum in input order so the m = n case matches fedavg bit for bit.
    chosen.sort_unstable();
    let selected: Vec<ParamVector> = chosen.into_iter().map(|i| updates[i].clone()).collect();
    params::mean(&selected)
}

/// Summed squared distance from each candidate to every input.
pub fn geomed_objective(updates: &[ParamVector]) -> Result<Vec<f64>> {
    let d = pairwise(updates)?;
    Ok(d.iter()
        .map(|row| row.iter().fold(0.0, |acc, v| acc + v))
        .collect())
}

pub fn geomed(updates: &[ParamVector]) -> Result<ParamVector> {
    if updates.is_empty() {
        return Err(Error::Empty("geomed of no updates"));
    }
    let obj = geomed_objective(updates)?;
    Ok(updates[argmin(&obj)].clone())
}
