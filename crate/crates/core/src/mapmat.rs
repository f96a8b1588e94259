//! Kernel-to-partition assignment matrices.
//!
//! `A` is the one-hot kernel/partition matrix. For every tensor the derived
//! rows are: `B` (both endpoints in the same partition), `D` (the endpoint
//! partitions of a crossing tensor), `L` (every partition a crossing tensor
//! stays alive through, endpoints included) and `H` (the producer partition).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Tensor;

pub type BoolMatrix = Vec<Vec<bool>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentMatrices {
    pub p_max: usize,
    pub a: BoolMatrix,
    pub b: BoolMatrix,
    pub d: BoolMatrix,
    pub l: BoolMatrix,
    pub h: BoolMatrix,
}

/// One-hot matrix from a partition index per kernel.
pub fn one_hot(parts: &[usize], p_max: usize) -> Result<BoolMatrix> {
    parts
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            if p >= p_max {
                return Err(Error::Validation(format!("kernel {k} assigned to partition {p} of {p_max}")));
            }
            Ok((0..p_max).map(|i| i == p).collect())
        })
        .collect()
}

/// Partition index of a one-hot row.
pub fn partition_of(row: &[bool]) -> Result<usize> {
    let mut ones = row.iter().enumerate().filter(|(_, &x)| x).map(|(i, _)| i);
    match (ones.next(), ones.next()) {
        (Some(i), None) => Ok(i),
        _ => Err(Error::Validation("assignment row is not one-hot".into())),
    }
}

fn check_rows(a: &BoolMatrix) -> Result<()> {
    a.iter().map(|r| partition_of(r).map(|_| ())).collect()
}

pub fn derive_b(a: &BoolMatrix, tensors: &[Tensor]) -> BoolMatrix {
    tensors.iter().map(|t| a[t.src].iter().zip(&a[t.dst]).map(|(&x, &y)| x && y).collect()).collect()
}

pub fn derive_d(a: &BoolMatrix, tensors: &[Tensor]) -> BoolMatrix {
    tensors.iter().map(|t| a[t.src].iter().zip(&a[t.dst]).map(|(&x, &y)| x ^ y).collect()).collect()
}

/// Row vector times the upper-triangular all-ones matrix, `strict` excluding
/// the diagonal: entry k is the OR of `row[i]` over i <= k (i < k).
fn prefix(row: &[bool], strict: bool) -> Vec<bool> {
    let mut seen = false;
    row.iter()
        .map(|&x| {
            if strict {
                let before = seen;
                seen |= x;
                before
            } else {
                seen |= x;
                seen
            }
        })
        .collect()
}

pub fn derive_l(a: &BoolMatrix, tensors: &[Tensor]) -> Result<BoolMatrix> {
    tensors
        .iter()
        .map(|t| {
            let (ps, pd) = (partition_of(&a[t.src])?, partition_of(&a[t.dst])?);
            if pd < ps {
                return Err(Error::Precedence { tensor: t.id, src: ps, dst: pd });
            }
            let us = prefix(&a[t.src], false);
            let ut = prefix(&a[t.dst], true);
            Ok((0..a[t.src].len()).map(|k| (us[k] ^ ut[k]) ^ (a[t.src][k] && a[t.dst][k])).collect())
        })
        .collect()
}

pub fn derive_h(a: &BoolMatrix, tensors: &[Tensor]) -> BoolMatrix {
    tensors.iter().map(|t| a[t.src].clone()).collect()
}

impl AssignmentMatrices {
    pub fn from_a(a: BoolMatrix, tensors: &[Tensor]) -> Result<Self> {
        check_rows(&a)?;
        let p_max = a.first().map_or(0, Vec::len);
        if a.iter().any(|r| r.len() != p_max) {
            return Err(Error::Validation("ragged assignment matrix".into()));
        }
        for t in tensors {
            if t.src >= a.len() || t.dst >= a.len() {
                return Err(Error::Validation(format!("tensor {} references a kernel outside A", t.id)));
            }
        }
        let l = derive_l(&a, tensors)?;
        Ok(AssignmentMatrices { p_max, b: derive_b(&a, tensors), d: derive_d(&a, tensors), l, h: derive_h(&a, tensors), a })
    }

    pub fn from_partitions(parts: &[usize], p_max: usize, tensors: &[Tensor]) -> Result<Self> {
        Self::from_a(one_hot(parts, p_max)?, tensors)
    }

    pub fn partitions(&self) -> Vec<usize> {
        self.a.iter().map(|r| partition_of(r).expect("validated one-hot")).collect()
    }

    /// `Mᵀ v` for one of the tensor matrices: per-partition sum of `v`.
    pub fn aggregate(m: &BoolMatrix, v: &[f64], p_max: usize) -> Vec<f64> {
        let mut out = vec![0.0; p_max];
        for (row, &x) in m.iter().zip(v) {
            for (o, &bit) in out.iter_mut().zip(row) {
                if bit {
                    *o += x;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(src: usize, dst: usize) -> Vec<Tensor> {
        vec![Tensor { id: 0, src, dst, bytes: 1.0 }]
    }

    fn mats(parts: &[usize], p: usize, ts: &[Tensor]) -> AssignmentMatrices {
        AssignmentMatrices::from_partitions(parts, p, ts).unwrap()
    }

    #[test]
    fn b_rows() {
        assert_eq!(mats(&[1, 1], 4, &t(0, 1)).b[0], [false, true, false, false]);
        assert_eq!(mats(&[0, 2], 4, &t(0, 1)).b[0], [false; 4]);
    }

    #[test]
    fn d_rows() {
        assert_eq!(mats(&[0, 2], 4, &t(0, 1)).d[0], [true, false, true, false]);
        assert_eq!(mats(&[3, 3], 4, &t(0, 1)).d[0], [false; 4]);
    }

    #[test]
    fn l_rows() {
        assert_eq!(mats(&[0, 2], 4, &t(0, 1)).l[0], [true, true, true, false]);
        assert_eq!(mats(&[1, 1], 4, &t(0, 1)).l[0], [false; 4]);
        assert_eq!(mats(&[0, 1], 4, &t(0, 1)).l[0], [true, true, false, false]);
    }

    #[test]
    fn backward_tensor_rejected() {
        let err = AssignmentMatrices::from_partitions(&[2, 0], 3, &t(0, 1)).unwrap_err();
        assert!(matches!(err, Error::Precedence { tensor: 0, src: 2, dst: 0 }));
    }

    #[test]
    fn h_rows() {
        assert_eq!(mats(&[3, 3], 4, &t(0, 1)).h[0], [false, false, false, true]);
        let m = mats(&[0, 0, 0], 2, &[Tensor { id: 0, src: 0, dst: 1, bytes: 1.0 }, Tensor { id: 1, src: 1, dst: 2, bytes: 1.0 }]);
        assert!(m.h.iter().all(|r| r == &[true, false]));
    }

    #[test]
    fn not_one_hot() {
        assert!(AssignmentMatrices::from_a(vec![vec![true, true]], &[]).is_err());
        assert!(AssignmentMatrices::from_a(vec![vec![false, false]], &[]).is_err());
    }

    #[test]
    fn aggregate_sums_per_partition() {
        let m = mats(&[0, 1, 1], 2, &[Tensor { id: 0, src: 0, dst: 1, bytes: 1.0 }, Tensor { id: 1, src: 1, dst: 2, bytes: 1.0 }]);
        assert_eq!(AssignmentMatrices::aggregate(&m.d, &[5.0, 7.0], 2), vec![5.0, 5.0]);
        assert_eq!(AssignmentMatrices::aggregate(&m.b, &[5.0, 7.0], 2), vec![0.0, 7.0]);
    }
}
