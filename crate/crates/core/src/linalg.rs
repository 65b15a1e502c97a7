//! Small dense helpers shared by the solver modules.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use ndarray_linalg::SVD;
use num_complex::Complex64;

use crate::error::Result;

pub type C64 = Complex64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn to_complex(m: &Array2<f64>) -> Array2<C64> {
    m.mapv(|v| C64::new(v, 0.0))
}

/// Real matrix times complex vector.
pub fn real_dot(m: &Array2<f64>, v: ArrayView1<C64>) -> Array1<C64> {
    let (rows, cols) = m.dim();
    assert_eq!(cols, v.len());
    Array1::from_shape_fn(rows, |r| {
        let row = m.row(r);
        let mut acc = C64::new(0.0, 0.0);
        for c in 0..cols {
            acc += v[c] * row[c];
        }
        acc
    })
}

pub fn eye(n: usize) -> Array2<C64> {
    Array2::from_diag_elem(n, C64::new(1.0, 0.0))
}

/// Submatrix with the given row and column index lists.
pub fn select(m: &Array2<C64>, rows: &[usize], cols: &[usize]) -> Array2<C64> {
    Array2::from_shape_fn((rows.len(), cols.len()), |(r, c)| m[[rows[r], cols[c]]])
}

/// Singular values, descending.
pub fn singular_values(m: ArrayView2<C64>) -> Result<Vec<f64>> {
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let (_, s, _) = m.to_owned().svd(false, false)?;
    Ok(s.to_vec())
}

pub fn max_abs(m: &Array2<C64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn vec_norm(v: ArrayView1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
