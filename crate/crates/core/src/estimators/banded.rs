//! Banded Gaussian elimination with partial pivoting for the boundary-value solver.

use crate::{Error, Result};

/// Square banded matrix with `lower` sub-diagonals and `upper` super-diagonals,
/// stored row-wise with `lower` extra columns of room for pivoting fill-in.
#[derive(Debug, Clone)]
pub(crate) struct BandedMatrix {
    size: usize,
    lower: usize,
    upper: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(size: usize, lower: usize, upper: usize) -> Self {
        let width = 2 * lower + upper + 1;
        Self { size, lower, upper, width, data: vec![0.0; size * width] }
    }

    #[inline]
    fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(col + self.lower >= row && col <= row + self.lower + self.upper);
        row * self.width + (col + self.lower - row)
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(
            col + self.lower >= row && col <= row + self.upper,
            "entry ({row}, {col}) outside the band"
        );
        let i = self.index(row, col);
        self.data[i] = value;
    }

    /// Factorizes in place and solves `A x = rhs`, overwriting `rhs` with `x`.
    pub fn solve_in_place(mut self, rhs: &mut [f64]) -> Result<()> {
        let n = self.size;
        assert_eq!(rhs.len(), n);
        let reach = self.lower + self.upper;
        for k in 0..n {
            let last_row = (k + self.lower).min(n - 1);
            let last_col = (k + reach).min(n - 1);
            let mut pivot = k;
            let mut best = self.data[self.index(k, k)].abs();
            for r in k + 1..=last_row {
                let v = self.data[self.index(r, k)].abs();
                if v > best {
                    best = v;
                    pivot = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SingularSystem { row: k });
            }
            if pivot != k {
                for c in k..=last_col {
                    let (a, b) = (self.index(k, c), self.index(pivot, c));
                    self.data.swap(a, b);
                }
                rhs.swap(k, pivot);
            }
            let diag = self.data[self.index(k, k)];
            for r in k + 1..=last_row {
                let ir = self.index(r, k);
                let factor = self.data[ir] / diag;
                if factor == 0.0 {
                    continue;
                }
                self.data[ir] = 0.0;
                for c in k + 1..=last_col {
                    let src = self.data[self.index(k, c)];
                    let dst = self.index(r, c);
                    self.data[dst] -= factor * src;
                }
                rhs[r] -= factor * rhs[k];
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let mut acc = rhs[k];
            for c in k + 1..=last_col {
                acc -= self.data[self.index(k, c)] * rhs[c];
            }
            rhs[k] = acc / self.data[self.index(k, k)];
        }
        Ok(())
    }
}
