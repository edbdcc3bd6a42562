//! Small dense exact-arithmetic linear algebra: Gaussian elimination for
//! square solves, general solves with free variables, and rank.

use super::rational::Rational;

/// Solves `M x = rhs` by Gaussian elimination with exact pivoting.
/// Free variables (if the system is underdetermined) are set to zero.
/// Returns `None` when the system is inconsistent.
pub fn solve(matrix: &[Vec<Rational>], rhs: &[Rational]) -> Option<Vec<Rational>> {
    let rows = matrix.len();
    assert_eq!(rows, rhs.len(), "rhs length mismatch");
    let cols = matrix.first().map_or(0, Vec::len);
    let mut a: Vec<Vec<Rational>> = matrix
        .iter()
        .zip(rhs)
        .map(|(row, b)| {
            assert_eq!(row.len(), cols, "ragged matrix");
            let mut r = row.clone();
            r.push(b.clone());
            r
        })
        .collect();

    let mut pivot_cols = Vec::new();
    let mut pivot_row = 0;
    for col in 0..cols {
        let Some(src) = (pivot_row..rows).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(pivot_row, src);
        let inv = a[pivot_row][col].recip();
        for entry in a[pivot_row].iter_mut() {
            *entry = &*entry * &inv;
        }
        for r in 0..rows {
            if r != pivot_row && !a[r][col].is_zero() {
                let factor = a[r][col].clone();
                for c in col..=cols {
                    let delta = &factor * &a[pivot_row][c];
                    a[r][c] -= delta;
                }
            }
        }
        pivot_cols.push((pivot_row, col));
        pivot_row += 1;
        if pivot_row == rows {
            break;
        }
    }

    // Inconsistent when a zero row has nonzero rhs.
    for r in pivot_row..rows {
        if !a[r][cols].is_zero() {
            return None;
        }
    }

    let mut x = vec![Rational::zero(); cols];
    for (r, c) in pivot_cols {
        x[c] = a[r][cols].clone();
    }
    Some(x)
}

/// Rank of a dense rational matrix.
pub fn rank(matrix: &[Vec<Rational>]) -> usize {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    let mut a: Vec<Vec<Rational>> = matrix.to_vec();
    let mut rank = 0;
    for col in 0..cols {
        let Some(src) = (rank..rows).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(rank, src);
        let inv = a[rank][col].recip();
        for entry in a[rank].iter_mut() {
            *entry = &*entry * &inv;
        }
        for r in 0..rows {
            if r != rank && !a[r][col].is_zero() {
                let factor = a[r][col].clone();
                for c in col..cols {
                    let delta = &factor * &a[rank][c];
                    a[r][c] -= delta;
                }
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

pub fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    assert_eq!(a.len(), b.len(), "dot length mismatch");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
