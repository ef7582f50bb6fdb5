//! Flat parameter vectors.
//!
//! Every model, client update and aggregate is a [`ParamVector`]. Reductions
//! are left folds in input order, so results do not depend on scheduling.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Index;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn scale(&self, k: f64) -> Self {
        Self(self.0.iter().map(|a| a * k).collect())
    }

    /// `self + k * other`, used for the server update and boosted transmissions.
    pub fn add_scaled(&self, other: &Self, k: f64) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + k * b)
                .collect(),
        ))
    }

    /// Squared Euclidean distance.
    pub fn l2_dist_sq(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .fold(0.0, |acc, (a, b)| acc + (a - b) * (a - b)))
    }

    /// Canonical serialization: `u64` little-endian length followed by each
    /// entry as little-endian IEEE-754 bits.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.dim());
        out.extend_from_slice(&(self.dim() as u64).to_le_bytes());
        for v in &self.0 {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Decode(
                "parameter vector shorter than its length prefix",
            ));
        }
        let (head, body) = bytes.split_at(8);
        let len = u64::from_le_bytes(head.try_into().expect("8 bytes")) as usize;
        if body.len() != len.checked_mul(8).ok_or(Error::Decode("length overflow"))? {
            return Err(Error::Decode(
                "parameter vector length prefix disagrees with payload",
            ));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        Ok(Self(values))
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Elementwise mean, summed left to right in input order.
pub fn mean(vs: &[ParamVector]) -> Result<ParamVector> {
    let first = vs.first().ok_or(Error::Empty("mean of no vectors"))?;
    let mut acc = vec![0.0; first.dim()];
    for v in vs {
        first.check_dim(v)?;
        for (a, x) in acc.iter_mut().zip(&v.0) {
            *a += x;
        }
    }
    let n = vs.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    Ok(ParamVector(acc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec())
    }

    #[test]
    fn add_examples() {
        assert_eq!(
            pv(&[1.0, 2.0]).add(&pv(&[3.0, 4.0])).unwrap(),
            pv(&[4.0, 6.0])
        );
        let v = pv(&[0.25, -7.0, 3.5]);
        assert_eq!(v.add(&ParamVector::zeros(3)).unwrap(), v);
        assert_eq!(pv(&[0.5]).add(&pv(&[-0.5])).unwrap(), pv(&[0.0]));
    }

    #[test]
    fn add_dimension_mismatch_names_both() {
        let err = pv(&[1.0]).add(&pv(&[1.0, 2.0])).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { left: 1, right: 2 });
    }

    #[test]
    fn scale_examples() {
        assert_eq!(pv(&[1.0, -2.0]).scale(2.0), pv(&[2.0, -4.0]));
        let v = pv(&[0.1, 0.2]);
        assert_eq!(v.scale(1.0), v);
        assert_eq!(v.scale(0.0), ParamVector::zeros(2));
    }

    #[test]
    fn l2_examples() {
        assert_eq!(pv(&[0.0, 0.0]).l2_dist_sq(&pv(&[3.0, 4.0])).unwrap(), 25.0);
        let v = pv(&[1.5, -2.5]);
        assert_eq!(v.l2_dist_sq(&v).unwrap(), 0.0);
        assert_eq!(pv(&[1.0]).l2_dist_sq(&pv(&[-1.0])).unwrap(), 4.0);
        assert!(pv(&[1.0]).l2_dist_sq(&pv(&[])).is_err());
    }

    #[test]
    fn mean_examples() {
        assert_eq!(
            mean(&[pv(&[1.0, 3.0]), pv(&[3.0, 5.0])]).unwrap(),
            pv(&[2.0, 4.0])
        );
        let v = pv(&[0.3, -1.25]);
        assert_eq!(mean(core::slice::from_ref(&v)).unwrap(), v);
        assert_eq!(
            mean(&[v.clone(), v.scale(-1.0)]).unwrap(),
            ParamVector::zeros(2)
        );
        assert_eq!(mean(&[]).unwrap_err(), Error::Empty("mean of no vectors"));
        assert!(mean(&[pv(&[1.0]), pv(&[1.0, 2.0])]).is_err());
    }

    #[test]
    fn serialization_layout() {
        let bytes = pv(&[1.0, -0.5]).to_le_bytes();
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[..8], &2u64.to_le_bytes());
        assert_eq!(&bytes[8..16], &1.0f64.to_bits().to_le_bytes());
        assert_eq!(
            ParamVector::from_le_bytes(&bytes).unwrap(),
            pv(&[1.0, -0.5])
        );
        assert!(ParamVector::from_le_bytes(&bytes[..20]).is_err());
    }

    #[test]
    fn non_finite_detected() {
        assert!(pv(&[1.0, 2.0]).is_finite());
        assert!(!pv(&[1.0, f64::NAN]).is_finite());
        assert!(!pv(&[f64::INFINITY]).is_finite());
    }
}
