//! Gluing two boxes along a shared side.
//!
//! The first box of a pair sees the interface `A` as its East (or North)
//! side, the second as its West (or South) side. Both index `A` by the
//! increasing coordinate. With `f_j` incoming and `g_j = R_j f_j + Q_j h_j`
//! outgoing on `A`, opposite normals give `f₁ = -g₂` and `f₂ = -g₁`, so
//!
//! ```text
//! (I - R₁R₂) f₂ = -Q₁h₁ + R₁Q₂h₂,    f₁ = -Q₂h₂ - R₂f₂.
//! ```

use ndarray::{concatenate, s, Array1, Array2, Axis};
use ndarray_linalg::{FactorizeInto, Solve};
use rayon::join;

use crate::domain::{BoundaryLayout, Rect, Side};
use crate::error::{Error, Result};
use crate::leaf::{partial_blocks, ItIOperator, LeafBox};
use crate::linalg::{eye, select, singular_values, C64, I};

/// Relative singularity tolerance for `I - R₁R₂` and `I - R`.
pub const DEFAULT_REL_TOL: f64 = 1e-12;

/// `W = (I - R₁R₂)⁻¹` with conditioning of `I - R₁R₂`.
#[derive(Debug, Clone)]
pub struct MergeOperator {
    pub w: Array2<C64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl MergeOperator {
    pub fn condition(&self) -> f64 {
        self.sigma_max / self.sigma_min
    }
}

fn solve_columns(
    lu: &ndarray_linalg::LUFactorized<ndarray::OwnedRepr<C64>>,
    b: &Array2<C64>,
) -> Result<Array2<C64>> {
    let mut x = Array2::<C64>::zeros(b.dim());
    for (c, col) in b.columns().into_iter().enumerate() {
        x.column_mut(c).assign(&lu.solve(&col.to_owned())?);
    }
    Ok(x)
}

fn factor_i_minus(
    m: &Array2<C64>,
    tol: Option<f64>,
) -> Result<(Option<ndarray_linalg::LUFactorized<ndarray::OwnedRepr<C64>>>, f64, f64, f64)> {
    let a = eye(m.nrows()) - m;
    let s = singular_values(a.view())?;
    let sigma_max = s.first().copied().unwrap_or(0.0);
    let sigma_min = s.last().copied().unwrap_or(0.0);
    let tol = tol.unwrap_or(DEFAULT_REL_TOL * sigma_max.max(1.0));
    // an exactly singular matrix would fail inside the LU
    let lu = if sigma_min > tol {
        Some(a.factorize_into()?)
    } else {
        None
    };
    Ok((lu, sigma_min, sigma_max, tol))
}

/// Factors `I - R₁R₂` and forms `W`. Fails if `σ_min ≤ tol`; the default
/// tolerance is `1e-12 max(‖I - R₁R₂‖₂, 1)`.
pub fn build_w(r1: &Array2<C64>, r2: &Array2<C64>, tol: Option<f64>) -> Result<MergeOperator> {
    if r1.nrows() != r1.ncols() || r1.dim() != r2.dim() {
        return Err(Error::LayoutMismatch(format!(
            "R1 {:?} and R2 {:?} must be square of equal size",
            r1.dim(),
            r2.dim()
        )));
    }
    let (lu, sigma_min, sigma_max, tol) = factor_i_minus(&r1.dot(r2), tol)?;
    let Some(lu) = lu else {
        return Err(Error::MergeSingular { sigma_min, tol });
    };
    let w = solve_columns(&lu, &eye(r1.nrows()))?;
    Ok(MergeOperator {
        w,
        sigma_min,
        sigma_max,
    })
}

/// [`build_w`] on operators, checking that both act on the same interface.
pub fn build_w_op(r1: &ItIOperator, r2: &ItIOperator, tol: Option<f64>) -> Result<MergeOperator> {
    check_interface(&r1.source, &r2.source)?;
    if r1.k != r2.k {
        return Err(Error::LayoutMismatch(format!(
            "wavenumbers differ: {} vs {}",
            r1.k, r2.k
        )));
    }
    build_w(&r1.matrix, &r2.matrix, tol)
}

fn check_interface(a: &BoundaryLayout, b: &BoundaryLayout) -> Result<()> {
    let ok = a.panels().len() == b.panels().len()
        && a
            .panels()
            .iter()
            .zip(b.panels())
            .all(|(p, q)| p.same_segment(q));
    if ok {
        Ok(())
    } else {
        Err(Error::LayoutMismatch(
            "interface panels of the two boxes do not coincide".into(),
        ))
    }
}

/// A rectangle with its full boundary ItI operator.
#[derive(Debug, Clone)]
pub struct BoxOperator {
    pub rect: Rect,
    pub op: ItIOperator,
}

impl BoxOperator {
    pub fn from_leaf(leaf: &LeafBox) -> Result<Self> {
        Ok(Self {
            rect: *leaf.rect(),
            op: leaf.iti_full()?,
        })
    }

    pub fn k(&self) -> f64 {
        self.op.k
    }
}

/// Two boxes sharing a full side, ordered so that `first` lies West or South
/// of `second`.
#[derive(Debug, Clone)]
pub struct MergePair {
    pub first: BoxOperator,
    pub second: BoxOperator,
    /// Side of `first` that is the interface.
    pub side: Side,
}

fn near(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + scale)
}

impl MergePair {
    /// Orders the boxes and detects the shared side.
    pub fn new(a: BoxOperator, b: BoxOperator) -> Result<Self> {
        if a.k() != b.k() {
            return Err(Error::LayoutMismatch(format!(
                "wavenumbers differ: {} vs {}",
                a.k(),
                b.k()
            )));
        }
        let (ra, rb) = (a.rect, b.rect);
        let scale = ra.width().max(ra.height()).max(rb.width()).max(rb.height());
        let same_y = near(ra.y0, rb.y0, scale) && near(ra.y1, rb.y1, scale);
        let same_x = near(ra.x0, rb.x0, scale) && near(ra.x1, rb.x1, scale);
        let pair = if same_y && near(ra.x1, rb.x0, scale) {
            Self { first: a, second: b, side: Side::East }
        } else if same_y && near(rb.x1, ra.x0, scale) {
            Self { first: b, second: a, side: Side::East }
        } else if same_x && near(ra.y1, rb.y0, scale) {
            Self { first: a, second: b, side: Side::North }
        } else if same_x && near(rb.y1, ra.y0, scale) {
            Self { first: b, second: a, side: Side::North }
        } else {
            return Err(Error::LayoutMismatch(format!(
                "boxes {ra:?} and {rb:?} do not share a full side"
            )));
        };
        Ok(pair)
    }

    pub fn parent_rect(&self) -> Rect {
        let (a, b) = (self.first.rect, self.second.rect);
        Rect {
            x0: a.x0.min(b.x0),
            x1: a.x1.max(b.x1),
            y0: a.y0.min(b.y0),
            y1: a.y1.max(b.y1),
        }
    }
}

/// Interface and parent data produced by one merge.
#[derive(Debug, Clone)]
pub struct MergeResult {
    pub w: MergeOperator,
    pub parent: BoxOperator,
    /// `f₁ = F₁ h` with `h = (h₁, h₂)` the parent incoming data.
    pub f1_map: Array2<C64>,
    /// `f₂ = F₂ h`.
    pub f2_map: Array2<C64>,
    pub r1: ItIOperator,
    pub r2: ItIOperator,
    pub q1: ItIOperator,
    pub q2: ItIOperator,
}

impl MergeResult {
    pub fn sigma_min(&self) -> f64 {
        self.w.sigma_min
    }
}

struct Split {
    a: Vec<usize>,
    ext: Vec<usize>,
    ext_panels: Vec<usize>,
}

fn split(layout: &BoundaryLayout, side: Side) -> Split {
    let a_panels = layout.panels_on(side);
    let ext_panels: Vec<usize> = (0..layout.panels().len())
        .filter(|p| !a_panels.contains(p))
        .collect();
    Split {
        a: layout.indices_of(&a_panels),
        ext: layout.indices_of(&ext_panels),
        ext_panels,
    }
}

/// Merges two boxes into the ItI operator of their union.
///
/// The parent layout lists the exterior panels of `first`, then those of
/// `second`, each in the order of the child layout.
pub fn merge_boxes(pair: &MergePair) -> Result<MergeResult> {
    merge_boxes_with_tol(pair, None)
}

pub fn merge_boxes_with_tol(pair: &MergePair, tol: Option<f64>) -> Result<MergeResult> {
    let k = pair.first.k();
    let (m1, m2) = (&pair.first.op, &pair.second.op);
    let (r1, q1) = partial_blocks(m1, pair.side)?;
    let (r2, q2) = partial_blocks(m2, pair.side.opposite())?;
    let w = build_w_op(&r1, &r2, tol)?;

    let s1 = split(&m1.source, pair.side);
    let s2 = split(&m2.source, pair.side.opposite());
    let (n1, n2) = (s1.ext.len(), s2.ext.len());

    // F₂ = W [-Q₁ | R₁Q₂],  F₁ = [-R₂F₂ restricted] - [0 | Q₂]
    let rhs = concatenate(
        Axis(1),
        &[(-&q1.matrix).view(), r1.matrix.dot(&q2.matrix).view()],
    )
    .expect("block widths");
    let f2 = w.w.dot(&rhs);
    let mut f1 = -r2.matrix.dot(&f2);
    f1.slice_mut(s![.., n1..]).zip_mut_with(&q2.matrix, |a, b| *a -= *b);

    let e1e1 = select(&m1.matrix, &s1.ext, &s1.ext);
    let e1a1 = select(&m1.matrix, &s1.ext, &s1.a);
    let e2e2 = select(&m2.matrix, &s2.ext, &s2.ext);
    let e2a2 = select(&m2.matrix, &s2.ext, &s2.a);

    let mut parent = Array2::<C64>::zeros((n1 + n2, n1 + n2));
    parent.slice_mut(s![..n1, ..]).assign(&e1a1.dot(&f1));
    parent.slice_mut(s![..n1, ..n1]).zip_mut_with(&e1e1, |a, b| *a += *b);
    parent.slice_mut(s![n1.., ..]).assign(&e2a2.dot(&f2));
    parent.slice_mut(s![n1.., n1..]).zip_mut_with(&e2e2, |a, b| *a += *b);

    let mut panels: Vec<_> = s1
        .ext_panels
        .iter()
        .map(|&p| m1.source.panels()[p].clone())
        .collect();
    panels.extend(s2.ext_panels.iter().map(|&p| m2.source.panels()[p].clone()));
    let layout = BoundaryLayout::new(panels);
    let op = ItIOperator::new(parent, k, layout.clone(), layout)?;
    Ok(MergeResult {
        w,
        parent: BoxOperator {
            rect: pair.parent_rect(),
            op,
        },
        f1_map: f1,
        f2_map: f2,
        r1,
        r2,
        q1,
        q2,
    })
}

/// Binary merge schedule over a list of boxes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MergePlan {
    Leaf(usize),
    Merge(Box<MergePlan>, Box<MergePlan>),
}

impl MergePlan {
    pub fn merge(a: MergePlan, b: MergePlan) -> Self {
        MergePlan::Merge(Box::new(a), Box::new(b))
    }

    /// Balanced schedule for an `nx × ny` tiling whose boxes are indexed
    /// `i * ny + j` (`i` along x). Splits the longer tile count first, x on
    /// ties, so consecutive levels alternate between vertical and horizontal
    /// interfaces on square tilings.
    pub fn balanced(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidParameter("empty tiling".into()));
        }
        fn build(i0: usize, i1: usize, j0: usize, j1: usize, ny: usize) -> MergePlan {
            let (ni, nj) = (i1 - i0, j1 - j0);
            if ni == 1 && nj == 1 {
                return MergePlan::Leaf(i0 * ny + j0);
            }
            if ni >= nj {
                let im = i0 + ni / 2;
                MergePlan::merge(build(i0, im, j0, j1, ny), build(im, i1, j0, j1, ny))
            } else {
                let jm = j0 + nj / 2;
                MergePlan::merge(build(i0, i1, j0, jm, ny), build(i0, i1, jm, j1, ny))
            }
        }
        Ok(build(0, nx, 0, ny, ny))
    }

    pub fn leaves(&self) -> Vec<usize> {
        match self {
            MergePlan::Leaf(i) => vec![*i],
            MergePlan::Merge(a, b) => {
                let mut v = a.leaves();
                v.extend(b.leaves());
                v
            }
        }
    }
}

/// Diagnostics of one merge inside a tree. `position` is the path from the
/// root, `L`/`R` per level, empty at the root.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeRecord {
    pub position: String,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

#[derive(Debug, Clone)]
pub struct TreeResult {
    pub root: BoxOperator,
    pub records: Vec<MergeRecord>,
}

/// Rectangles of an `nx × ny` tiling of `rect`, indexed `i * ny + j`.
pub fn tile(rect: &Rect, nx: usize, ny: usize) -> Result<Vec<Rect>> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidParameter("empty tiling".into()));
    }
    let mut out = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let xa = rect.x0 + rect.width() * i as f64 / nx as f64;
            let xb = rect.x0 + rect.width() * (i + 1) as f64 / nx as f64;
            let ya = rect.y0 + rect.height() * j as f64 / ny as f64;
            let yb = rect.y0 + rect.height() * (j + 1) as f64 / ny as f64;
            out.push(Rect::new(xa, xb, ya, yb)?);
        }
    }
    Ok(out)
}

/// Executes `plan` bottom-up; sibling subtrees run in parallel.
pub fn merge_tree(boxes: &[BoxOperator], plan: &MergePlan) -> Result<TreeResult> {
    let mut seen = plan.leaves();
    seen.sort_unstable();
    if seen.iter().any(|&i| i >= boxes.len()) || seen.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter(
            "merge plan must use each box at most once".into(),
        ));
    }
    run_tree(boxes, plan, String::new())
}

fn run_tree(boxes: &[BoxOperator], plan: &MergePlan, path: String) -> Result<TreeResult> {
    match plan {
        MergePlan::Leaf(i) => Ok(TreeResult {
            root: boxes[*i].clone(),
            records: Vec::new(),
        }),
        MergePlan::Merge(a, b) => {
            let (ra, rb) = join(
                || run_tree(boxes, a, format!("{path}L")),
                || run_tree(boxes, b, format!("{path}R")),
            );
            let (ra, rb) = (ra?, rb?);
            let wrap = |e: Error| Error::TreeMerge {
                position: if path.is_empty() { "root".into() } else { path.clone() },
                source: Box::new(e),
            };
            let pair = MergePair::new(ra.root, rb.root).map_err(wrap)?;
            let m = merge_boxes(&pair).map_err(wrap)?;
            let mut records = ra.records;
            records.extend(rb.records);
            records.push(MergeRecord {
                position: path,
                sigma_min: m.w.sigma_min,
                sigma_max: m.w.sigma_max,
            });
            Ok(TreeResult {
                root: m.parent,
                records,
            })
        }
    }
}

/// Dirichlet-to-Neumann map `Λ = ik (I - R)⁻¹ (I + R)` of a full-boundary
/// ItI operator. Fails when `σ_min(I - R) ≤ tol` (default
/// `1e-12 max(‖I - R‖₂, 1)`).
pub fn iti_to_dtn(r: &ItIOperator, tol: Option<f64>) -> Result<Array2<C64>> {
    if !r.is_square() {
        return Err(Error::LayoutMismatch(
            "DtN needs a full-boundary operator".into(),
        ));
    }
    let (lu, sigma_min, _, tol) = factor_i_minus(&r.matrix, tol)?;
    let Some(lu) = lu else {
        return Err(Error::DtnNearResonant { sigma_min, tol });
    };
    let rhs = eye(r.matrix.nrows()) + &r.matrix;
    Ok(solve_columns(&lu, &rhs)? * (I * r.k))
}

/// `‖W (I - R₁R₂) g - g‖ / ‖g‖` for one vector.
pub fn w_residual(w: &MergeOperator, r1: &Array2<C64>, r2: &Array2<C64>, g: &Array1<C64>) -> f64 {
    let a = g - &r1.dot(&r2.dot(g));
    let back = w.w.dot(&a);
    let num = (&back - g).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let den = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Array2<C64> {
        Array2::from_elem((1, 1), C64::new(v, 0.0))
    }

    #[test]
    fn zero_operators_give_identity() {
        let z = Array2::<C64>::zeros((4, 4));
        let w = build_w(&z, &z, None).unwrap();
        assert_eq!(w.w, eye(4));
    }

    #[test]
    fn scalar_half() {
        let w = build_w(&scalar(0.5), &scalar(0.5), None).unwrap();
        assert!((w.w[[0, 0]] - C64::new(4.0 / 3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn exact_inverse_pair_is_singular() {
        let a = Array2::from_shape_fn((3, 3), |(i, j)| {
            C64::new(if i == j { 2.0 } else { 0.0 }, (i + 2 * j) as f64 * 0.1)
        });
        let r2 = ndarray_linalg::Inverse::inv(&*a).unwrap();
        // R₁R₂ = I up to round-off
        assert!(matches!(build_w(&a, &r2, None), Err(Error::MergeSingular { .. })));
    }

    #[test]
    fn zero_iti_gives_ik_dtn() {
        let rect = Rect::unit_square();
        let lay = BoundaryLayout::per_side(&rect, 3).unwrap();
        let n = lay.len();
        let r = ItIOperator::new(Array2::zeros((n, n)), 2.0, lay.clone(), lay).unwrap();
        let d = iti_to_dtn(&r, None).unwrap();
        assert!((&d - &(eye(n) * C64::new(0.0, 2.0))).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn balanced_plans() {
        assert_eq!(MergePlan::balanced(1, 1).unwrap(), MergePlan::Leaf(0));
        let p = MergePlan::balanced(2, 2).unwrap();
        assert_eq!(
            p,
            MergePlan::merge(
                MergePlan::merge(MergePlan::Leaf(0), MergePlan::Leaf(1)),
                MergePlan::merge(MergePlan::Leaf(2), MergePlan::Leaf(3)),
            )
        );
        assert_eq!(MergePlan::balanced(4, 1).unwrap().leaves(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn non_adjacent_boxes_rejected() {
        let lay = |r: &Rect| BoundaryLayout::per_side(r, 2).unwrap();
        let mk = |r: Rect| {
            let l = lay(&r);
            let n = l.len();
            BoxOperator {
                rect: r,
                op: ItIOperator::new(Array2::zeros((n, n)), 1.0, l.clone(), l).unwrap(),
            }
        };
        let a = mk(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap());
        let b = mk(Rect::new(2.0, 3.0, 0.0, 1.0).unwrap());
        assert!(MergePair::new(a, b).is_err());
    }
}
