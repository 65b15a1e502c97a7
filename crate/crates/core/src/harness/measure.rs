//! Measurements shared by the experiments and the test suites.

use ndarray::{s, Array1};
use rand::Rng;

use crate::domain::{
    check_nontrapping, reflect_potential, Potential, Rect, Side, DEFAULT_NONTRAPPING_SAMPLES,
};
use crate::error::{Error, Result};
use crate::leaf::{BoundaryTrace, LeafBox, Resolution};
use crate::linalg::{eye, C64};
use crate::merge::{merge_boxes, BoxOperator, MergePair, MergeResult};
use crate::norms::{min_gain, op_norm, GramMatrix, NormKind};
use crate::probes::{mode_combination, smoothed_gaussian};
use crate::spectral::quad_weights;

/// Gains of the interface operators at one `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    /// `inf ‖(I - R₁)f‖_{H¹_k} / ‖kf‖`.
    pub c_minus: f64,
    /// `inf ‖(I + R₁)f‖ / ‖f‖` in L².
    pub c_plus: f64,
    /// `‖W‖` from `H¹_k(A)` to `L²(A)`.
    pub wnorm: f64,
    /// `‖WQ₁‖` from `L²` of the exterior of box 1 to `L²(A)`.
    pub wq_norm: f64,
    /// `inf ‖(I - R₁R₂)f‖_{H¹_k} / ‖f‖`.
    pub sigma_min: f64,
    /// Smallest singular value of the matrix `I - R₁R₂`.
    pub sigma_min_l2: f64,
}

impl Gains {
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.c_minus,
            self.c_plus,
            self.wnorm,
            self.wq_norm,
            self.sigma_min,
            self.sigma_min_l2,
        ]
    }
}

/// Box `[0,1]²` and its East neighbour `[1,2]×[0,1]` sharing the potential
/// `V`, merged across `A = {x = 1}`.
pub struct TwoBox {
    pub left: LeafBox,
    pub right: LeafBox,
    pub merged: MergeResult,
}

pub fn left_rect() -> Rect {
    Rect::unit_square()
}

pub fn right_rect() -> Rect {
    Rect {
        x0: 1.0,
        x1: 2.0,
        y0: 0.0,
        y1: 1.0,
    }
}

pub fn pair_rect() -> Rect {
    Rect {
        x0: 0.0,
        x1: 2.0,
        y0: 0.0,
        y1: 1.0,
    }
}

/// Non-negativity on `[0,2]×[0,1]` and the non-trapping condition at the
/// vertex `(1, 0)` for `V` and for `V(2 - x, y)` on the unit square.
pub fn check_pair_potential(v: &Potential) -> Result<()> {
    v.check_nonnegative(&pair_rect(), DEFAULT_NONTRAPPING_SAMPLES)?;
    check_nontrapping_at(v, &left_rect(), (1.0, 0.0))?;
    check_nontrapping_at(&reflect_potential(v), &left_rect(), (1.0, 0.0))?;
    Ok(())
}

/// Fails with [`Error::Trapping`] unless the sampled constant is positive.
pub fn check_nontrapping_at(v: &Potential, rect: &Rect, vertex: (f64, f64)) -> Result<f64> {
    let c = check_nontrapping(v, rect, vertex, DEFAULT_NONTRAPPING_SAMPLES)?;
    if c > 0.0 {
        Ok(c)
    } else {
        Err(Error::Trapping {
            vertex_x: vertex.0,
            vertex_y: vertex.1,
            constant: c,
        })
    }
}

impl TwoBox {
    pub fn new(v: &Potential, k: f64, res: Resolution) -> Result<Self> {
        let left = LeafBox::new(left_rect(), v.clone(), k, res)?;
        let right = LeafBox::new(right_rect(), v.clone(), k, res)?;
        let pair = MergePair::new(BoxOperator::from_leaf(&left)?, BoxOperator::from_leaf(&right)?)?;
        let merged = merge_boxes(&pair)?;
        Ok(Self { left, right, merged })
    }

    pub fn k(&self) -> f64 {
        self.left.k()
    }

    pub fn gains(&self) -> Result<Gains> {
        let k = self.k();
        let m = &self.merged;
        let a = &m.r1.source;
        let l2 = GramMatrix::for_layout(a, NormKind::L2)?;
        let h1 = GramMatrix::for_layout(a, NormKind::H1k(k))?;
        let kl2 = l2.scaled(k)?;
        let id = eye(a.len());
        let r1 = &m.r1.matrix;
        let ext = GramMatrix::for_layout(&m.q1.source, NormKind::L2)?;
        Ok(Gains {
            c_minus: min_gain((&id - r1).view(), &kl2, &h1)?,
            c_plus: min_gain((&id + r1).view(), &l2, &l2)?,
            wnorm: op_norm(m.w.w.view(), &h1, &l2)?,
            wq_norm: op_norm(m.w.w.dot(&m.q1.matrix).view(), &ext, &l2)?,
            sigma_min: min_gain((&id - &r1.dot(&m.r2.matrix)).view(), &l2, &h1)?,
            sigma_min_l2: m.w.sigma_min,
        })
    }
}

/// `∫ a b̄` over the panels of `layout` on `side` (or off it when `on` is
/// false).
pub fn side_inner(
    layout: &crate::domain::BoundaryLayout,
    a: &Array1<C64>,
    b: &Array1<C64>,
    side: Side,
    on: bool,
) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (p, panel) in layout.panels().iter().enumerate() {
        if (panel.side == side) != on {
            continue;
        }
        let w = quad_weights(&panel.grid) * (panel.length() / 2.0);
        let r = layout.panel_range(p);
        for ((wi, x), y) in w.iter().zip(a.slice(s![r.clone()])).zip(b.slice(s![r])) {
            acc += *wi * x * y.conj();
        }
    }
    acc
}

/// `|‖ku‖²_{∂Ω\A} - k Im ∫_A ∂_ν u ū| / ‖f‖²_{L²(A)}` for incoming data `f`
/// supported on side `a`.
pub fn flux_defect(leaf: &LeafBox, a: Side, f: &Array1<C64>) -> Result<f64> {
    let layout = leaf.layout();
    let sol = leaf.solve_impedance(&BoundaryTrace::new(layout.clone(), f.clone())?, None)?;
    let k = leaf.k();
    let u = &sol.trace.values;
    let off = side_inner(layout, u, u, a, false).re;
    let flux = side_inner(layout, &sol.normal_derivative.values, u, a, true).im;
    let ff = side_inner(layout, f, f, a, true).re;
    if !(ff > 0.0) {
        return Err(Error::InvalidParameter("probe has no mass on the side".into()));
    }
    Ok((k * k * off - k * flux).abs() / ff)
}

/// Largest flux defect over `count` mode combinations on the East side.
pub fn max_flux_defect(leaf: &LeafBox, count: usize, rng: &mut impl Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let f = mode_combination(leaf.layout(), Side::East, leaf.k(), 6, rng)?;
        worst = worst.max(flux_defect(leaf, Side::East, &f)?);
    }
    Ok(worst)
}

/// Largest observed `‖∂_ν u‖_{L²(A)} / ‖u‖^{1/4}_{H¹_k(A)}` and
/// `‖ku‖_{L²(A)} / ((1+k)^{3(1+δ)/2} ‖∂_ν u‖^{1/2}_{L²(A)})` over smoothed
/// random data with `‖f‖_{L²(A)} = 1`. These bound the best constants from
/// below only.
pub fn trace_ratios(leaf: &LeafBox, delta: f64, count: usize, rng: &mut impl Rng) -> Result<(f64, f64)> {
    let layout = leaf.layout();
    let k = leaf.k();
    let a_panels = layout.panels_on(Side::East);
    let a_layout = layout.subset(&a_panels);
    let a_idx = layout.indices_of(&a_panels);
    let l2 = GramMatrix::for_layout(&a_layout, NormKind::L2)?;
    let h1 = GramMatrix::for_layout(&a_layout, NormKind::H1k(k))?;
    let (mut dn_max, mut tr_max): (f64, f64) = (0.0, 0.0);
    for _ in 0..count {
        let fa = smoothed_gaussian(&a_layout, rng)?;
        let scale = l2.norm(&fa);
        let mut f = Array1::<C64>::zeros(layout.len());
        for (j, &i) in a_idx.iter().enumerate() {
            f[i] = fa[j] / scale;
        }
        let sol = leaf.solve_impedance(&BoundaryTrace::new(layout.clone(), f)?, None)?;
        let ua = Array1::from_iter(a_idx.iter().map(|&i| sol.trace.values[i]));
        let dna = Array1::from_iter(a_idx.iter().map(|&i| sol.normal_derivative.values[i]));
        let dn = l2.norm(&dna);
        let uh = h1.norm(&ua);
        if uh > 0.0 {
            dn_max = dn_max.max(dn / uh.powf(0.25));
        }
        if dn > 0.0 {
            tr_max = tr_max.max(k * l2.norm(&ua) / ((1.0 + k).powf(1.5 * (1.0 + delta)) * dn.sqrt()));
        }
    }
    Ok((dn_max, tr_max))
}

/// Least-squares slope and intercept of `ln y` against `ln x`.
pub fn fit_exponent(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "fit needs at least two matched points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidParameter("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("fit abscissae coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Relative difference `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.7)).collect();
        let (p, c) = fit_exponent(&xs, &ys).unwrap();
        assert!((p + 0.7).abs() < 1e-12);
        assert!((c - 3f64.ln()).abs() < 1e-12);
        assert!(fit_exponent(&[1.0], &[1.0]).is_err());
        assert!(fit_exponent(&[1.0, 2.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn rel_diff_cases() {
        assert_eq!(rel_diff(0.0, 0.0), 0.0);
        assert!((rel_diff(1.0, 1.01) - 0.01 / 1.01).abs() < 1e-15);
    }

    #[test]
    fn vanishing_potential_is_rejected() {
        assert!(check_pair_potential(&Potential::Constant(0.0)).is_err());
        check_pair_potential(&Potential::Affine { a: 0.05, b: 0.0, c: 1.0 }).unwrap();
    }
}
