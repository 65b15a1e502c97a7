//! Discrete boundary norms and extremal gains between them.
//!
//! A norm is a Hermitian positive-definite Gram matrix `G` with
//! `‖h‖² = hᴴ G h`. Gains of an operator `T` from `(X, G_s)` to `(Y, G_t)`
//! are the singular values of `L_tᴴ T L_s⁻ᴴ` where `G = L Lᴴ`.
//!
//! The frequency-weighted norm uses the quadratic form
//! `‖kh‖² + ‖∂_τ h‖²`, within a factor `√2` of the sum of the two norms.

use ndarray::{Array1, Array2, ArrayView2};
use ndarray_linalg::{Cholesky, Inverse, SVD, UPLO};

use crate::domain::{BoundaryLayout, Panel};
use crate::error::{Error, Result};
use crate::linalg::{singular_values, C64};
use crate::spectral::{diff_matrix, quad_weights};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    L2,
    /// `‖kh‖² + ‖∂_τ h‖²` for the given `k`.
    H1k(f64),
}

#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub matrix: Array2<C64>,
    pub kind: NormKind,
    /// Lower Cholesky factor.
    factor: Array2<C64>,
}

fn panel_gram(panel: &Panel, kind: NormKind) -> Array2<f64> {
    let w = quad_weights(&panel.grid) * (panel.length() / 2.0);
    let mass = Array2::from_diag(&w);
    match kind {
        NormKind::L2 => mass,
        NormKind::H1k(k) => {
            let d = diff_matrix(&panel.grid).physical(0.0, panel.length());
            &mass * (k * k) + d.t().dot(&mass).dot(&d)
        }
    }
}

impl GramMatrix {
    pub fn from_matrix(matrix: Array2<C64>, kind: NormKind) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::LayoutMismatch(format!("Gram matrix {:?}", matrix.dim())));
        }
        let scale = matrix.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        for i in 0..n {
            for j in 0..n {
                if (matrix[[i, j]] - matrix[[j, i]].conj()).norm() > 1e-14 * scale {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        let factor = matrix
            .cholesky(UPLO::Lower)
            .map_err(|_| Error::NotPositiveDefinite)?;
        if factor.diag().iter().any(|d| !(d.re > 0.0) || !d.re.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self {
            matrix,
            kind,
            factor,
        })
    }

    /// Block-diagonal Gram over all panels of `layout`. Derivatives are taken
    /// panel by panel.
    pub fn for_layout(layout: &BoundaryLayout, kind: NormKind) -> Result<Self> {
        if let NormKind::H1k(k) = kind {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "H1k norm needs k > 0, got {k}"
                )));
            }
        }
        let n = layout.len();
        let mut m = Array2::<C64>::zeros((n, n));
        for (p, panel) in layout.panels().iter().enumerate() {
            let r = layout.panel_range(p);
            let g = panel_gram(panel, kind);
            m.slice_mut(ndarray::s![r.clone(), r])
                .assign(&g.mapv(|v| C64::new(v, 0.0)));
        }
        Self::from_matrix(m, kind)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `c² G`, the norm of `c h`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {c}")));
        }
        Ok(Self {
            matrix: &self.matrix * C64::new(c * c, 0.0),
            kind: self.kind,
            factor: &self.factor * C64::new(c, 0.0),
        })
    }

    pub fn norm(&self, h: &Array1<C64>) -> f64 {
        let gh = self.matrix.dot(h);
        h.iter()
            .zip(gh.iter())
            .map(|(a, b)| (a.conj() * b).re)
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }

    pub fn factor(&self) -> &Array2<C64> {
        &self.factor
    }
}

/// `L_tᴴ T L_s⁻ᴴ`, whose singular values are the gains of `T`.
pub fn weighted(t: ArrayView2<C64>, src: &GramMatrix, tgt: &GramMatrix) -> Result<Array2<C64>> {
    if t.ncols() != src.dim() || t.nrows() != tgt.dim() {
        return Err(Error::LayoutMismatch(format!(
            "operator {:?} vs Grams {} -> {}",
            t.dim(),
            src.dim(),
            tgt.dim()
        )));
    }
    let ls_inv_h = src.factor.inv()?.t().mapv(|v| v.conj());
    let lt_h = tgt.factor.t().mapv(|v| v.conj());
    Ok(lt_h.dot(&t).dot(&ls_inv_h))
}

/// `sup ‖Tf‖_tgt / ‖f‖_src`.
pub fn op_norm(t: ArrayView2<C64>, src: &GramMatrix, tgt: &GramMatrix) -> Result<f64> {
    let s = singular_values(weighted(t, src, tgt)?.view())?;
    Ok(s.first().copied().unwrap_or(0.0))
}

/// `inf ‖Tf‖_tgt / ‖f‖_src`; zero when `T` has fewer rows than columns.
pub fn min_gain(t: ArrayView2<C64>, src: &GramMatrix, tgt: &GramMatrix) -> Result<f64> {
    let wt = weighted(t, src, tgt)?;
    if wt.nrows() < wt.ncols() {
        return Ok(0.0);
    }
    let s = singular_values(wt.view())?;
    Ok(s.last().copied().unwrap_or(0.0))
}

/// Largest gain of `T` over the span of the columns of `span`.
///
/// The span is orthonormalized in the source norm; directions whose source
/// norm falls below `rel_tol` times the largest are dropped.
pub fn op_norm_on_span(
    t: ArrayView2<C64>,
    span: ArrayView2<C64>,
    src: &GramMatrix,
    tgt: &GramMatrix,
    rel_tol: f64,
) -> Result<f64> {
    if span.nrows() != src.dim() || t.ncols() != src.dim() || t.nrows() != tgt.dim() {
        return Err(Error::LayoutMismatch(format!(
            "operator {:?}, span {:?}, Grams {} -> {}",
            t.dim(),
            span.dim(),
            src.dim(),
            tgt.dim()
        )));
    }
    let coords = src.factor.t().mapv(|v| v.conj()).dot(&span);
    let (_, s, vt) = coords.svd(false, true)?;
    let vt = vt.ok_or_else(|| Error::Eigen("SVD returned no right vectors".into()))?;
    let top = s.first().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] > rel_tol * top).collect();
    if keep.is_empty() {
        return Ok(0.0);
    }
    // span V_r Σ_r⁻¹ has orthonormal source coordinates
    let basis = Array2::from_shape_fn((span.ncols(), keep.len()), |(r, c)| {
        vt[[keep[c], r]].conj() / s[keep[c]]
    });
    let vecs = span.dot(&basis);
    let m = tgt.factor.t().mapv(|v| v.conj()).dot(&t.dot(&vecs));
    Ok(singular_values(m.view())?.first().copied().unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Rect, Side};
    use crate::linalg::{eye, I};

    fn side_layout(n_b: usize) -> BoundaryLayout {
        let rect = Rect::unit_square();
        let full = BoundaryLayout::per_side(&rect, n_b).unwrap();
        full.subset(&full.panels_on(Side::East))
    }

    #[test]
    fn constant_norms() {
        let lay = side_layout(10);
        let h = Array1::from_elem(lay.len(), C64::new(1.0, 0.0));
        let l2 = GramMatrix::for_layout(&lay, NormKind::L2).unwrap();
        let h1 = GramMatrix::for_layout(&lay, NormKind::H1k(3.0)).unwrap();
        assert!((l2.norm(&h) - 1.0).abs() < 1e-13);
        assert!((h1.norm(&h) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn oscillatory_h1k_norm() {
        let lay = side_layout(16);
        let k = 2.5;
        let ys: Vec<f64> = lay.points().iter().map(|p| p.1).collect();
        let h = Array1::from_iter(ys.iter().map(|&y| (I * std::f64::consts::PI * y).exp()));
        let g = GramMatrix::for_layout(&lay, NormKind::H1k(k)).unwrap();
        let exact = k * k + std::f64::consts::PI.powi(2);
        assert!((g.norm(&h).powi(2) - exact).abs() < 1e-8);
    }

    #[test]
    fn zero_k_rejected() {
        assert!(GramMatrix::for_layout(&side_layout(4), NormKind::H1k(0.0)).is_err());
    }

    #[test]
    fn identity_and_scaling_gains() {
        let lay = side_layout(8);
        let g = GramMatrix::for_layout(&lay, NormKind::H1k(1.5)).unwrap();
        let id = eye(lay.len());
        assert!((op_norm(id.view(), &g, &g).unwrap() - 1.0).abs() < 1e-12);
        assert!((min_gain(id.view(), &g, &g).unwrap() - 1.0).abs() < 1e-12);
        let two = &id * C64::new(2.0, 0.0);
        let l2 = GramMatrix::for_layout(&lay, NormKind::L2).unwrap();
        assert!((op_norm(two.view(), &l2, &l2).unwrap() - 2.0).abs() < 1e-12);
        let z = Array2::<C64>::zeros((lay.len(), lay.len()));
        assert!(min_gain(z.view(), &l2, &l2).unwrap() < 1e-300);
    }

    #[test]
    fn span_restricted_gain() {
        let lay = side_layout(6);
        let n = lay.len();
        let g = GramMatrix::for_layout(&lay, NormKind::L2).unwrap();
        let mut t = eye(n);
        t[[n - 1, n - 1]] = C64::new(5.0, 0.0);
        // span avoids the last node; the gain stays 1
        let span = Array2::from_shape_fn((n, 2), |(r, c)| {
            C64::new(if r == c { 1.0 } else { 0.0 }, 0.0)
        });
        assert!((op_norm_on_span(t.view(), span.view(), &g, &g, 1e-12).unwrap() - 1.0).abs() < 1e-12);
        assert!((op_norm(t.view(), &g, &g).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut m = eye(3);
        m[[0, 1]] = C64::new(0.5, 0.0);
        assert!(GramMatrix::from_matrix(m, NormKind::L2).is_err());
    }
}
