//! Internal dense kernels: matrix exponential and a pivoted linear solve.

use ndarray::s;

use crate::error::{Error, Result};
use crate::{scalar, Matrix, Scalar};

/// Padé(13) numerator coefficients for the matrix exponential
/// (Higham 2005, scaling-and-squaring revisited).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// 1-norm threshold below which the (13,13) approximant is full precision.
const THETA13: f64 = 5.371920351148152;

/// Maximum column sum of absolute values.
pub fn one_norm<T: Scalar>(a: &Matrix<T>) -> T {
    let mut best = T::zero();
    for col in a.columns() {
        let s = col.iter().fold(T::zero(), |acc, v| acc + v.abs());
        if s > best {
            best = s;
        }
    }
    best
}

/// Matrix exponential `exp(a)` by Padé(13) with scaling and squaring.
pub fn expm<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if n == 0 {
        return Ok(Matrix::zeros((0, 0)));
    }
    if n == 1 {
        return Ok(Matrix::from_elem((1, 1), a[[0, 0]].exp()));
    }

    let norm = one_norm(a).to_f64().unwrap_or(f64::INFINITY);
    if !norm.is_finite() {
        return Err(Error::Numerical("matrix norm is not finite".into()));
    }
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };

    let scale: T = scalar(0.5f64.powi(squarings as i32));
    let a_s = a * scale;

    let eye = Matrix::eye(n);
    let a2 = a_s.dot(&a_s);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);

    let c = |i: usize| -> T { scalar(PADE13[i]) };

    let w1 = &a6 * c(13) + &a4 * c(11) + &a2 * c(9);
    let w = w1.dot(&a6) + &a6 * c(7) + &a4 * c(5) + &a2 * c(3) + &eye * c(1);
    let u = a_s.dot(&w);

    let v1 = &a6 * c(12) + &a4 * c(10) + &a2 * c(8);
    let v = v1.dot(&a6) + &a6 * c(6) + &a4 * c(4) + &a2 * c(2) + &eye * c(0);

    let mut r = solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    Ok(r)
}

/// Solve `A X = B` by Gaussian elimination with partial pivoting.
pub fn solve<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "solve requires a square coefficient matrix");
    assert_eq!(n, b.nrows(), "dimension mismatch between A and B");
    let m = b.ncols();

    let mut aug = Matrix::zeros((n, n + m));
    aug.slice_mut(s![.., ..n]).assign(a);
    aug.slice_mut(s![.., n..]).assign(b);

    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_mag = aug[[col, col]].abs();
        for row in (col + 1)..n {
            let mag = aug[[row, col]].abs();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = row;
            }
        }
        if pivot_mag == T::zero() {
            return Err(Error::SingularMatrix);
        }
        if pivot_row != col {
            for j in 0..(n + m) {
                let tmp = aug[[col, j]];
                aug[[col, j]] = aug[[pivot_row, j]];
                aug[[pivot_row, j]] = tmp;
            }
        }
        let pivot = aug[[col, col]];
        for row in (col + 1)..n {
            let factor = aug[[row, col]] / pivot;
            if factor == T::zero() {
                continue;
            }
            for j in col..(n + m) {
                let v = aug[[col, j]];
                aug[[row, j]] -= factor * v;
            }
        }
    }

    let mut x = Matrix::<T>::zeros((n, m));
    for col in (0..n).rev() {
        let pivot = aug[[col, col]];
        for j in 0..m {
            let mut acc = aug[[col, n + j]];
            for k in (col + 1)..n {
                acc -= aug[[col, k]] * x[[k, j]];
            }
            x[[col, j]] = acc / pivot;
        }
    }
    Ok(x)
}
