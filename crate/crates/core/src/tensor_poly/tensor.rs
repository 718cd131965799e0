use serde::{Deserialize, Serialize};

use crate::error::{contract, LabError, Result};

/// Largest dense tensor the lab will allocate.
pub const DEFAULT_TENSOR_CAP: u128 = 10_000_000;

/// Dense order-`arity` tensor with `side^arity` entries; the first index is most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivTensor {
    arity: usize,
    side: usize,
    entries: Vec<f64>,
}

pub fn checked_size(side: usize, arity: usize, cap: u128) -> Result<usize> {
    let mut required: u128 = 1;
    for _ in 0..arity {
        required = required.saturating_mul(side as u128);
    }
    if required > cap {
        return Err(LabError::Resource { required, cap });
    }
    Ok(required as usize)
}

impl DerivTensor {
    pub fn new(arity: usize, side: usize, entries: Vec<f64>) -> Result<Self> {
        if side == 0 {
            return Err(contract("tensor side must be positive"));
        }
        let len = checked_size(side, arity, u128::MAX)?;
        if entries.len() != len {
            return Err(contract(format!("entries length {} != side^arity = {len}", entries.len())));
        }
        Ok(DerivTensor { arity, side, entries })
    }

    pub fn zeros(arity: usize, side: usize, cap: u128) -> Result<Self> {
        let len = checked_size(side, arity, cap)?;
        Ok(DerivTensor { arity, side, entries: vec![0.0; len] })
    }

    pub fn scalar(value: f64) -> Self {
        DerivTensor { arity: 0, side: 1, entries: vec![value] }
    }

    /// The basis tensor e(i) of order 1.
    pub fn basis(side: usize, i: usize) -> Self {
        let mut entries = vec![0.0; side];
        entries[i] = 1.0;
        DerivTensor { arity: 1, side, entries }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.arity);
        idx.iter().fold(0, |acc, &i| acc * self.side + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.arity];
        for slot in idx.iter_mut().rev() {
            *slot = flat % self.side;
            flat /= self.side;
        }
        idx
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.entries[self.flat_index(idx)]
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// True when every entry equals the entry at its sorted index (exact comparison).
    pub fn is_symmetric(&self) -> bool {
        (0..self.entries.len()).all(|f| {
            let mut idx = self.multi_index(f);
            idx.sort_unstable();
            self.entries[f] == self.entries[self.flat_index(&idx)]
        })
    }

    /// `(AB)_{rest} = sum over the first arity(B) indices of A * B`.
    pub fn contract(&self, b: &DerivTensor) -> Result<DerivTensor> {
        if b.arity > self.arity {
            return Err(contract(format!("cannot contract order {} into order {}", b.arity, self.arity)));
        }
        if b.side != self.side && b.arity > 0 {
            return Err(contract(format!("side mismatch {} vs {}", self.side, b.side)));
        }
        let rest_arity = self.arity - b.arity;
        let rest_len = checked_size(self.side, rest_arity, u128::MAX)?;
        let mut out = vec![0.0; rest_len];
        for (lead, &w) in b.entries.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let row = &self.entries[lead * rest_len..(lead + 1) * rest_len];
            for (o, a) in out.iter_mut().zip(row) {
                *o += w * a;
            }
        }
        Ok(DerivTensor { arity: rest_arity, side: self.side, entries: out })
    }

    /// Scalar value of an order-0 tensor.
    pub fn value(&self) -> f64 {
        self.entries[0]
    }
}

pub fn tensor_frobenius(t: &DerivTensor) -> f64 {
    t.frobenius()
}

pub fn tensor_contract(a: &DerivTensor, b: &DerivTensor) -> Result<DerivTensor> {
    a.contract(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frobenius_examples() {
        assert_eq!(DerivTensor::zeros(3, 4, DEFAULT_TENSOR_CAP).unwrap().frobenius(), 0.0);
        assert_eq!(DerivTensor::scalar(3.0).frobenius(), 3.0);
        let s = 5;
        let mut id = DerivTensor::zeros(2, s, DEFAULT_TENSOR_CAP).unwrap();
        for i in 0..s {
            let f = id.flat_index(&[i, i]);
            id.entries_mut()[f] = 1.0;
        }
        assert!((id.frobenius() - (s as f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn contract_with_basis_selects_subtensor() {
        let a = DerivTensor::new(2, 3, (0..9).map(|x| x as f64).collect()).unwrap();
        let sub = a.contract(&DerivTensor::basis(3, 1)).unwrap();
        assert_eq!(sub.entries(), &[3.0, 4.0, 5.0]);
        let full = a.contract(&a).unwrap();
        assert_eq!(full.arity(), 0);
        assert_eq!(full.value(), a.frobenius().powi(2).round());
    }

    #[test]
    fn cap_and_side_errors() {
        assert!(matches!(DerivTensor::zeros(3, 1000, DEFAULT_TENSOR_CAP), Err(LabError::Resource { .. })));
        let a = DerivTensor::zeros(2, 3, DEFAULT_TENSOR_CAP).unwrap();
        let b = DerivTensor::zeros(1, 4, DEFAULT_TENSOR_CAP).unwrap();
        assert!(a.contract(&b).is_err());
    }
}
