//! Exact Gaussian elimination for small dense systems.

use crate::model::Rational;
use num_traits::Zero;

/// Solves `A X = B` for square nonsingular `A` (rows of `a`), with the
/// columns of `B` given as `rhs[j]`. Returns `None` if `A` is singular.
pub(crate) fn solve(mut a: Vec<Vec<Rational>>, mut rhs: Vec<Vec<Rational>>) -> Option<Vec<Vec<Rational>>> {
    let n = a.len();
    // Work row-wise on the right-hand sides as well.
    let m = rhs.len();
    let mut b: Vec<Vec<Rational>> = (0..n)
        .map(|i| (0..m).map(|j| std::mem::take(&mut rhs[j][i])).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = a[col][col].recip();
        for x in a[col].iter_mut().skip(col) {
            if !x.is_zero() {
                *x *= &inv;
            }
        }
        for x in b[col].iter_mut() {
            if !x.is_zero() {
                *x *= &inv;
            }
        }
        let support: Vec<usize> = (col..n).filter(|&j| !a[col][j].is_zero()).collect();
        let pivot_row = std::mem::take(&mut a[col]);
        let pivot_b = std::mem::take(&mut b[col]);
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let factor = a[r][col].clone();
            for &j in &support {
                a[r][j] -= &factor * &pivot_row[j];
            }
            for (x, p) in b[r].iter_mut().zip(&pivot_b) {
                if !p.is_zero() {
                    *x -= &factor * p;
                }
            }
        }
        a[col] = pivot_row;
        b[col] = pivot_b;
    }
    Some(
        (0..m)
            .map(|j| (0..n).map(|i| std::mem::take(&mut b[i][j])).collect())
            .collect(),
    )
}
