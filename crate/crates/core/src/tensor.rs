//! Sums of Kronecker products acting on lattice vectors.
//!
//! Lattice vectors store direction 0 fastest. A term `A_0 ⊗ ... ⊗ A_{d-1}` is
//! applied by successive mode products, one direction at a time, so the
//! operator is never formed explicitly.

use faer::Mat;

use crate::error::{Error, Result};

/// `sum_t (A_{t,0} ⊗ ... ⊗ A_{t,d-1})` mapping lattices of shape `input`
/// to lattices of shape `output`.
#[derive(Clone, Debug)]
pub struct KronSum {
    input: Vec<usize>,
    output: Vec<usize>,
    terms: Vec<Vec<Mat<f64>>>,
}

/// Multiplies `x` (shape `shape`) by `a` along direction `k`.
fn mode_product(x: &[f64], shape: &[usize], k: usize, a: &Mat<f64>, transpose: bool) -> (Vec<f64>, Vec<usize>) {
    let (m, n) = if transpose { (a.ncols(), a.nrows()) } else { (a.nrows(), a.ncols()) };
    debug_assert_eq!(shape[k], n);
    let left: usize = shape[..k].iter().product();
    let right: usize = shape[k + 1..].iter().product();
    let mut y = vec![0.0; left * m * right];
    for r in 0..right {
        for b in 0..n {
            let xoff = left * (b + n * r);
            for i in 0..m {
                let c = if transpose { a[(b, i)] } else { a[(i, b)] };
                if c == 0.0 {
                    continue;
                }
                let yoff = left * (i + m * r);
                for l in 0..left {
                    y[yoff + l] += c * x[xoff + l];
                }
            }
        }
    }
    let mut out = shape.to_vec();
    out[k] = m;
    (y, out)
}

impl KronSum {
    pub fn new(input: Vec<usize>, output: Vec<usize>) -> Self {
        Self { input, output, terms: Vec::new() }
    }

    /// Adds one Kronecker term; `factors[k]` maps direction `k`.
    pub fn push(&mut self, factors: Vec<Mat<f64>>) -> Result<()> {
        if factors.len() != self.input.len() {
            return Err(Error::DimensionMismatch { expected: self.input.len(), got: factors.len() });
        }
        for (k, a) in factors.iter().enumerate() {
            if a.ncols() != self.input[k] {
                return Err(Error::DimensionMismatch { expected: self.input[k], got: a.ncols() });
            }
            if a.nrows() != self.output[k] {
                return Err(Error::DimensionMismatch { expected: self.output[k], got: a.nrows() });
            }
        }
        self.terms.push(factors);
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output.iter().product()
    }

    pub fn terms(&self) -> &[Vec<Mat<f64>>] {
        &self.terms
    }

    /// `y += K x`.
    pub fn apply_add(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.input_len());
        assert_eq!(y.len(), self.output_len());
        for t in &self.terms {
            let mut cur = x.to_vec();
            let mut shape = self.input.clone();
            for (k, a) in t.iter().enumerate() {
                (cur, shape) = mode_product(&cur, &shape, k, a, false);
            }
            y.iter_mut().zip(&cur).for_each(|(a, b)| *a += b);
        }
    }

    /// `x += K^T y`.
    pub fn apply_transpose_add(&self, y: &[f64], x: &mut [f64]) {
        assert_eq!(y.len(), self.output_len());
        assert_eq!(x.len(), self.input_len());
        for t in &self.terms {
            let mut cur = y.to_vec();
            let mut shape = self.output.clone();
            for (k, a) in t.iter().enumerate() {
                (cur, shape) = mode_product(&cur, &shape, k, a, true);
            }
            x.iter_mut().zip(&cur).for_each(|(a, b)| *a += b);
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.output_len()];
        self.apply_add(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.output_len(), self.input_len());
        for t in &self.terms {
            let k = kron_all(t);
            m += &k;
        }
        m
    }
}

/// `A_{d-1} ⊗ ... ⊗ A_0` in the usual row-major sense, which is the matrix
/// of `A_0 ⊗ ... ⊗ A_{d-1}` on lattices with direction 0 fastest.
pub fn kron_all(factors: &[Mat<f64>]) -> Mat<f64> {
    let mut acc = Mat::from_fn(1, 1, |_, _| 1.0);
    for a in factors {
        let mut next = Mat::zeros(a.nrows() * acc.nrows(), a.ncols() * acc.ncols());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                for r in 0..acc.nrows() {
                    for c in 0..acc.ncols() {
                        next[(r + acc.nrows() * i, c + acc.ncols() * j)] = a[(i, j)] * acc[(r, c)];
                    }
                }
            }
        }
        acc = next;
    }
    acc
}

/// Linear index of a multi-index, direction 0 fastest.
pub fn linear_index(counts: &[usize], multi: &[usize]) -> usize {
    multi.iter().zip(counts).rev().fold(0, |acc, (&i, &n)| acc * n + i)
}

pub fn multi_index(counts: &[usize], mut idx: usize) -> Vec<usize> {
    counts
        .iter()
        .map(|&n| {
            let i = idx % n;
            idx /= n;
            i
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_explicit_kronecker() {
        let a = Mat::from_fn(2, 3, |i, j| (1 + i + 2 * j) as f64);
        let b = Mat::from_fn(4, 2, |i, j| (i as f64) - (j as f64) * 0.5);
        let mut k = KronSum::new(vec![3, 2], vec![2, 4]);
        k.push(vec![a.clone(), b.clone()]).unwrap();
        let dense = k.to_dense();
        let x: Vec<f64> = (0..6).map(|i| (i as f64).sin()).collect();
        let y = k.apply(&x);
        for (r, &yr) in y.iter().enumerate() {
            let want: f64 = (0..6).map(|c| dense[(r, c)] * x[c]).sum();
            assert!((yr - want).abs() < 1e-13);
        }
        let mut xt = vec![0.0; 6];
        k.apply_transpose_add(&y, &mut xt);
        for c in 0..6 {
            let want: f64 = (0..8).map(|r| dense[(r, c)] * y[r]).sum();
            assert!((xt[c] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_factor_shapes() {
        let mut k = KronSum::new(vec![2, 2], vec![2, 2]);
        assert!(k.push(vec![Mat::zeros(2, 3), Mat::zeros(2, 2)]).is_err());
    }

    #[test]
    fn index_round_trip() {
        let counts = [3, 4, 2];
        for i in 0..24 {
            assert_eq!(linear_index(&counts, &multi_index(&counts, i)), i);
        }
    }
}
