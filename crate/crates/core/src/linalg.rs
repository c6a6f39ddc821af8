//! Small dense linear algebra helpers: induced sup norm, rank and kernel by
//! row reduction.

use nalgebra::{DMatrix, DVector};

/// Relative pivot tolerance used for rank decisions.
pub const PIVOT_TOL: f64 = 1e-10;

/// Induced sup norm: largest absolute row sum.
pub fn norm_inf(w: &DMatrix<f64>) -> f64 {
    w.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Reduced row echelon form with partial pivoting. Returns the reduced matrix
/// and the pivot columns.
fn rref(w: &DMatrix<f64>) -> (DMatrix<f64>, Vec<usize>) {
    let mut a = w.clone();
    let tol = PIVOT_TOL * norm_inf(w);
    let (rows, cols) = a.shape();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (p, best) = (r..rows)
            .map(|i| (i, a[(i, c)].abs()))
            .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= tol || best == 0.0 {
            for i in r..rows {
                a[(i, c)] = 0.0;
            }
            continue;
        }
        a.swap_rows(r, p);
        let piv = a[(r, c)];
        for k in c..cols {
            a[(r, k)] /= piv;
        }
        for i in 0..rows {
            if i != r {
                let f = a[(i, c)];
                if f != 0.0 {
                    for k in c..cols {
                        let v = a[(r, k)];
                        a[(i, k)] -= f * v;
                    }
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    (a, pivots)
}

pub fn rank(w: &DMatrix<f64>) -> usize {
    if w.is_empty() {
        return 0;
    }
    rref(w).1.len()
}

/// A nonzero vector `x` with `W x = 0` (up to the pivot tolerance), if the
/// columns of `W` are dependent.
pub fn kernel_vector(w: &DMatrix<f64>) -> Option<DVector<f64>> {
    let (a, pivots) = rref(w);
    let cols = w.ncols();
    let free = (0..cols).find(|c| !pivots.contains(c))?;
    let mut x = DVector::zeros(cols);
    x[free] = 1.0;
    for (r, &pc) in pivots.iter().enumerate() {
        x[pc] = -a[(r, free)];
    }
    Some(x)
}

/// `Id_{rows, cols}`: ones on the leading diagonal, zeros elsewhere.
pub fn padded_identity(rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| if i == j { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_is_max_row_sum() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 0.5]);
        assert_eq!(norm_inf(&w), 3.0);
    }

    #[test]
    fn rank_uses_relative_pivot_tolerance() {
        assert_eq!(rank(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-15])), 1);
        assert_eq!(rank(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-8])), 2);
        assert_eq!(rank(&DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0])), 1);
        assert_eq!(rank(&DMatrix::<f64>::zeros(3, 3)), 0);
    }

    #[test]
    fn kernel_vector_is_annihilated() {
        let w = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let x = kernel_vector(&w).unwrap();
        assert!((&w * &x).amax() < 1e-12);
        assert!(x.amax() > 0.5);
        assert!(kernel_vector(&DMatrix::<f64>::identity(3, 3)).is_none());
    }

    #[test]
    fn padded_identity_shapes() {
        let i = padded_identity(3, 2);
        assert_eq!(i.shape(), (3, 2));
        assert_eq!(i[(1, 1)], 1.0);
        assert_eq!(i[(2, 1)], 0.0);
    }
}
