//! Ultrametric distance matrices with per-leaf marks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// True iff `m` satisfies the strong triangle inequality
/// `d(i,j) <= max(d(i,l), d(l,j)) + tol` for every triple.
pub fn is_ultrametric(m: &[Vec<f64>], tol: f64) -> Result<bool> {
    let k = m.len();
    for (row, r) in m.iter().enumerate() {
        if r.len() != k {
            return Err(Error::NotSquare { row, len: r.len(), expected: k });
        }
    }
    Ok(first_violation(k, |i, j| m[i][j], tol).is_none())
}

fn first_violation(
    k: usize,
    d: impl Fn(usize, usize) -> f64,
    tol: f64,
) -> Option<(usize, usize, usize)> {
    for i in 0..k {
        for j in 0..k {
            let dij = d(i, j);
            for l in 0..k {
                if dij > d(i, l).max(d(l, j)) + tol {
                    return Some((i, j, l));
                }
            }
        }
    }
    None
}

/// A `k×k` genealogical distance matrix, an optional chromosomic distance
/// matrix, and one real mark per leaf (an interval length).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UltrametricMatrix {
    k: usize,
    dist: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    chrom: Option<Vec<f64>>,
    marks: Vec<f64>,
}

impl UltrametricMatrix {
    /// Validates symmetry, zero diagonal and ultrametricity at `tol`.
    pub fn new(k: usize, dist: Vec<f64>, marks: Vec<f64>, tol: f64) -> Result<Self> {
        if dist.len() != k * k {
            return Err(Error::NotSquare { row: 0, len: dist.len(), expected: k * k });
        }
        if marks.len() != k {
            return Err(Error::InvalidParameter(format!(
                "expected {k} marks, got {}",
                marks.len()
            )));
        }
        for i in 0..k {
            if dist[i * k + i].abs() > tol {
                return Err(Error::InvalidParameter(format!("non-zero diagonal at {i}")));
            }
            for j in 0..i {
                if (dist[i * k + j] - dist[j * k + i]).abs() > tol {
                    return Err(Error::InvalidParameter(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        if let Some((i, j, l)) = first_violation(k, |i, j| dist[i * k + j], tol) {
            return Err(Error::NotUltrametric { i, j, l, dij: dist[i * k + j] });
        }
        Ok(Self { k, dist, chrom: None, marks })
    }

    pub fn zeros(k: usize) -> Self {
        Self { k, dist: vec![0.0; k * k], chrom: None, marks: vec![0.0; k] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.k + j]
    }

    pub fn distances(&self) -> &[f64] {
        &self.dist
    }

    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    pub fn chromosomic(&self) -> Option<&[f64]> {
        self.chrom.as_deref()
    }

    pub fn set_chromosomic(&mut self, chrom: Vec<f64>) -> Result<()> {
        if chrom.len() != self.k * self.k {
            return Err(Error::NotSquare { row: 0, len: chrom.len(), expected: self.k * self.k });
        }
        self.chrom = Some(chrom);
        Ok(())
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.dist.chunks(self.k.max(1)).take(self.k).map(|r| r.to_vec()).collect()
    }

    pub fn is_ultrametric(&self, tol: f64) -> bool {
        first_violation(self.k, |i, j| self.get(i, j), tol).is_none()
    }

    /// Relabels leaves: entry `(i, j)` of the result is `(σ_i, σ_j)` of self.
    pub fn permuted(&self, sigma: &[usize]) -> Self {
        let k = self.k;
        assert_eq!(sigma.len(), k);
        let perm = |m: &[f64]| {
            let mut out = vec![0.0; k * k];
            for i in 0..k {
                for j in 0..k {
                    out[i * k + j] = m[sigma[i] * k + sigma[j]];
                }
            }
            out
        };
        Self {
            k,
            dist: perm(&self.dist),
            chrom: self.chrom.as_deref().map(perm),
            marks: sigma.iter().map(|&s| self.marks[s]).collect(),
        }
    }

    pub(crate) fn from_parts_unchecked(k: usize, dist: Vec<f64>, marks: Vec<f64>) -> Self {
        debug_assert_eq!(dist.len(), k * k);
        Self { k, dist, chrom: None, marks }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_is_ultrametric() {
        assert!(is_ultrametric(&[vec![0.0, 1.0], vec![1.0, 0.0]], 0.0).unwrap());
    }

    #[test]
    fn three_point_examples() {
        let good = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 2.0], vec![2.0, 2.0, 0.0]];
        assert!(is_ultrametric(&good, 0.0).unwrap());
        let bad = vec![vec![0.0, 1.0, 3.0], vec![1.0, 0.0, 1.0], vec![3.0, 1.0, 0.0]];
        assert!(!is_ultrametric(&bad, 0.0).unwrap());
        assert!(UltrametricMatrix::new(3, bad.concat(), vec![0.0; 3], 0.0).is_err());
    }

    #[test]
    fn non_square_is_an_error() {
        let m = vec![vec![0.0, 1.0], vec![1.0]];
        assert!(matches!(is_ultrametric(&m, 0.0), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn permutation_relabels() {
        let m = UltrametricMatrix::new(
            3,
            vec![0.0, 1.0, 2.0, 1.0, 0.0, 2.0, 2.0, 2.0, 0.0],
            vec![10.0, 11.0, 12.0],
            0.0,
        )
        .unwrap();
        let p = m.permuted(&[2, 0, 1]);
        assert_eq!(p.get(0, 1), 2.0);
        assert_eq!(p.get(1, 2), 1.0);
        assert_eq!(p.marks(), &[12.0, 10.0, 11.0]);
        assert!(p.is_ultrametric(0.0));
    }
}
