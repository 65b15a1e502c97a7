//! Chebyshev collocation solve of the impedance problem on one rectangle
//!
//! ```text
//!   (Δ + k² V) u = G     in the box
//!   ∂_ν u + i k u = g    on the boundary
//! ```
//!
//! The unknowns are the values of `u` on a Lobatto tensor grid. Interior
//! nodes carry the PDE; every boundary node carries one impedance row, with
//! the four corners owned by the South and North sides. Impedance data lives
//! on corner-free Gauss panels and is interpolated to the Lobatto boundary
//! nodes; outgoing data is formed from spectral derivatives of the interior
//! solution and interpolated back.

use ndarray::{s, Array1, Array2, ArrayView1, OwnedRepr};
use ndarray_linalg::{FactorizeInto, LUFactorized, ReciprocalConditionNum, Solve};
use rayon::prelude::*;

use crate::domain::{BoundaryLayout, Potential, Rect, Side};
use crate::error::{Error, Result};
use crate::linalg::{real_dot, select, C64, I};
use crate::spectral::{diff_matrix, interp_matrix, interp_to_points, quad_weights, ChebGrid};

/// Polynomial degrees of a leaf discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    /// Interior degree along x.
    pub n_x: usize,
    /// Interior degree along y.
    pub n_y: usize,
    /// Gauss degree of each boundary panel.
    pub n_b: usize,
}

impl Resolution {
    pub fn square(n_int: usize, n_b: usize) -> Self {
        Self {
            n_x: n_int,
            n_y: n_int,
            n_b,
        }
    }
}

/// Values sampled on the nodes of a boundary layout.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub layout: BoundaryLayout,
    pub values: Array1<C64>,
}

impl BoundaryTrace {
    pub fn new(layout: BoundaryLayout, values: Array1<C64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::LayoutMismatch(format!(
                "trace has {} values, layout has {} nodes",
                values.len(),
                layout.len()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn zeros(layout: &BoundaryLayout) -> Self {
        Self {
            layout: layout.clone(),
            values: Array1::zeros(layout.len()),
        }
    }

    /// Samples `f(side, x, y)` on every node.
    pub fn from_fn(layout: &BoundaryLayout, f: impl Fn(Side, f64, f64) -> C64) -> Self {
        let values = layout
            .panels()
            .iter()
            .flat_map(|p| p.points().into_iter().map(move |pt| (p.side, pt)))
            .map(|(side, (x, y))| f(side, x, y))
            .collect();
        Self {
            layout: layout.clone(),
            values,
        }
    }

    /// Values on panel `p`.
    pub fn panel(&self, p: usize) -> ArrayView1<'_, C64> {
        self.values.slice(s![self.layout.panel_range(p)])
    }

    /// Values on the (single) panel of `side`.
    pub fn side(&self, side: Side) -> Array1<C64> {
        let idx = self.layout.indices_of(&self.layout.panels_on(side));
        Array1::from_iter(idx.into_iter().map(|i| self.values[i]))
    }
}

/// Dense operator between boundary layouts.
#[derive(Debug, Clone, PartialEq)]
pub struct ItIOperator {
    pub matrix: Array2<C64>,
    pub k: f64,
    pub source: BoundaryLayout,
    pub target: BoundaryLayout,
}

impl ItIOperator {
    pub fn new(
        matrix: Array2<C64>,
        k: f64,
        source: BoundaryLayout,
        target: BoundaryLayout,
    ) -> Result<Self> {
        if matrix.dim() != (target.len(), source.len()) {
            return Err(Error::LayoutMismatch(format!(
                "matrix {:?} does not match layouts {} -> {}",
                matrix.dim(),
                source.len(),
                target.len()
            )));
        }
        if matrix.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParameter("operator has non-finite entries".into()));
        }
        Ok(Self {
            matrix,
            k,
            source,
            target,
        })
    }

    pub fn apply(&self, f: ArrayView1<C64>) -> Array1<C64> {
        self.matrix.dot(&f)
    }

    pub fn is_square(&self) -> bool {
        self.source == self.target
    }
}

/// Interior field with its boundary traces on the Gauss layout.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values[[i, j]] = u(xs[i], ys[j])`.
    pub values: Array2<C64>,
    pub trace: BoundaryTrace,
    pub normal_derivative: BoundaryTrace,
    pub tangential_derivative: BoundaryTrace,
}

impl FieldSolution {
    /// Incoming impedance data `∂_ν u + i k u` reconstructed from the traces.
    pub fn incoming(&self, k: f64) -> Array1<C64> {
        &self.normal_derivative.values + &(self.trace.values.mapv(|u| u * I * k))
    }

    /// Outgoing impedance data `∂_ν u - i k u`.
    pub fn outgoing(&self, k: f64) -> Array1<C64> {
        &self.normal_derivative.values - &(self.trace.values.mapv(|u| u * I * k))
    }
}

/// Collocation model of one rectangle with a cached LU factorization.
pub struct LeafBox {
    rect: Rect,
    potential: Potential,
    k: f64,
    res: Resolution,
    layout: BoundaryLayout,
    xs: Vec<f64>,
    ys: Vec<f64>,
    dx: Array2<f64>,
    dy: Array2<f64>,
    lu: LUFactorized<OwnedRepr<C64>>,
    rcond: f64,
    /// Gauss panel -> Lobatto side nodes, per side in `Side::ALL` order.
    to_lobatto: [Array2<f64>; 4],
    /// Lobatto side nodes -> Gauss panel.
    to_gauss: [Array2<f64>; 4],
}

/// Reciprocal condition number below which the collocation system is
/// treated as singular.
pub const RCOND_FLOOR: f64 = 1e-14;

fn side_slot(side: Side) -> usize {
    match side {
        Side::South => 0,
        Side::East => 1,
        Side::North => 2,
        Side::West => 3,
    }
}

impl LeafBox {
    /// Assembles and factors the collocation system.
    pub fn new(rect: Rect, potential: Potential, k: f64, res: Resolution) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidParameter(format!("wavenumber must be positive, got {k}")));
        }
        if res.n_b > res.n_x.min(res.n_y) {
            return Err(Error::InvalidParameter(format!(
                "boundary degree {} exceeds interior degree {}",
                res.n_b,
                res.n_x.min(res.n_y)
            )));
        }
        potential.check_nonnegative(&rect, 41)?;
        let gx = ChebGrid::lobatto(res.n_x)?;
        let gy = ChebGrid::lobatto(res.n_y)?;
        let gb = ChebGrid::gauss(res.n_b)?;
        let xs = gx.mapped_nodes(rect.x0, rect.x1);
        let ys = gy.mapped_nodes(rect.y0, rect.y1);
        let dx = diff_matrix(&gx).physical(rect.x0, rect.x1);
        let dy = diff_matrix(&gy).physical(rect.y0, rect.y1);
        let layout = BoundaryLayout::per_side(&rect, res.n_b)?;

        let lob = |s: Side| if s.is_horizontal() { &gx } else { &gy };
        let to_lobatto = Side::ALL.map(|s| interp_matrix(&gb, lob(s)));
        let to_gauss = Side::ALL.map(|s| interp_matrix(lob(s), &gb));

        let system = assemble(&xs, &ys, &dx, &dy, &potential, k);
        let lu = system.factorize_into()?;
        let rcond = lu.rcond()?;
        if !(rcond > RCOND_FLOOR) {
            return Err(Error::SingularSystem { rcond });
        }
        log::debug!(
            "leaf {:?} k={} n=({}, {}) rcond={:e}",
            rect,
            k,
            res.n_x,
            res.n_y,
            rcond
        );
        Ok(Self {
            rect,
            potential,
            k,
            res,
            layout,
            xs,
            ys,
            dx,
            dy,
            lu,
            rcond,
            to_lobatto,
            to_gauss,
        })
    }

    pub fn rect(&self) -> &Rect {
        &self.rect
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn resolution(&self) -> Resolution {
        self.res
    }

    pub fn layout(&self) -> &BoundaryLayout {
        &self.layout
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    pub fn grid(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    fn index(&self, i: usize, j: usize) -> usize {
        i * (self.res.n_y + 1) + j
    }

    /// Samples an interior source on the Lobatto tensor grid.
    pub fn sample_grid(&self, f: impl Fn(f64, f64) -> C64) -> Array2<C64> {
        Array2::from_shape_fn((self.xs.len(), self.ys.len()), |(i, j)| f(self.xs[i], self.ys[j]))
    }

    fn rhs(&self, g: ArrayView1<C64>, source: Option<&Array2<C64>>) -> Array1<C64> {
        let (nx, ny) = (self.res.n_x, self.res.n_y);
        let mut rhs = Array1::<C64>::zeros((nx + 1) * (ny + 1));
        if let Some(src) = source {
            for i in 1..nx {
                for j in 1..ny {
                    rhs[self.index(i, j)] = src[[i, j]];
                }
            }
        }
        for (p, panel) in self.layout.panels().iter().enumerate() {
            let data = g.slice(s![self.layout.panel_range(p)]);
            let line = real_dot(&self.to_lobatto[side_slot(panel.side)], data);
            self.scatter_boundary(panel.side, &line, &mut rhs);
        }
        rhs
    }

    fn scatter_boundary(&self, side: Side, line: &Array1<C64>, rhs: &mut Array1<C64>) {
        let (nx, ny) = (self.res.n_x, self.res.n_y);
        match side {
            Side::South => (0..=nx).for_each(|i| rhs[self.index(i, 0)] = line[i]),
            Side::North => (0..=nx).for_each(|i| rhs[self.index(i, ny)] = line[i]),
            Side::East => (1..ny).for_each(|j| rhs[self.index(nx, j)] = line[j]),
            Side::West => (1..ny).for_each(|j| rhs[self.index(0, j)] = line[j]),
        }
    }

    /// `(u, ∂_ν u, ∂_τ u)` on the Lobatto nodes of one side.
    fn side_traces(&self, u: &Array2<C64>, side: Side) -> [Array1<C64>; 3] {
        let (nx, ny) = (self.res.n_x, self.res.n_y);
        let cplx = |m: ArrayView1<f64>| m.mapv(|v| C64::new(v, 0.0));
        match side {
            Side::South | Side::North => {
                let (j, sign) = if side == Side::South { (0, -1.0) } else { (ny, 1.0) };
                let line = u.column(j).to_owned();
                let dn = u.dot(&cplx(self.dy.row(j))) * sign;
                let dt = real_dot(&self.dx, line.view());
                [line, dn, dt]
            }
            Side::East | Side::West => {
                let (i, sign) = if side == Side::East { (nx, 1.0) } else { (0, -1.0) };
                let line = u.row(i).to_owned();
                let dn = cplx(self.dx.row(i)).dot(u) * sign;
                let dt = real_dot(&self.dy, line.view());
                [line, dn, dt]
            }
        }
    }

    fn solve_grid(&self, g: ArrayView1<C64>, source: Option<&Array2<C64>>) -> Result<Array2<C64>> {
        let rhs = self.rhs(g, source);
        let sol = self.lu.solve_into(rhs)?;
        Ok(sol
            .into_shape_with_order((self.res.n_x + 1, self.res.n_y + 1))
            .expect("grid shape"))
    }

    /// Solves with impedance data `g` on the Gauss layout and an optional
    /// interior source sampled on the Lobatto grid.
    pub fn solve_impedance(
        &self,
        g: &BoundaryTrace,
        source: Option<&Array2<C64>>,
    ) -> Result<FieldSolution> {
        if g.layout != self.layout {
            return Err(Error::LayoutMismatch(
                "impedance data is not on the leaf layout".into(),
            ));
        }
        let u = self.solve_grid(g.values.view(), source)?;
        let n = self.layout.len();
        let mut tr = Array1::zeros(n);
        let mut dn = Array1::zeros(n);
        let mut dt = Array1::zeros(n);
        for (p, panel) in self.layout.panels().iter().enumerate() {
            let [a, b, c] = self.side_traces(&u, panel.side);
            let m = &self.to_gauss[side_slot(panel.side)];
            let r = self.layout.panel_range(p);
            tr.slice_mut(s![r.clone()]).assign(&real_dot(m, a.view()));
            dn.slice_mut(s![r.clone()]).assign(&real_dot(m, b.view()));
            dt.slice_mut(s![r]).assign(&real_dot(m, c.view()));
        }
        let sol = FieldSolution {
            xs: self.xs.clone(),
            ys: self.ys.clone(),
            values: u,
            trace: BoundaryTrace::new(self.layout.clone(), tr)?,
            normal_derivative: BoundaryTrace::new(self.layout.clone(), dn)?,
            tangential_derivative: BoundaryTrace::new(self.layout.clone(), dt)?,
        };
        if log::log_enabled!(log::Level::Debug) {
            log::debug!(
                "elliptic ratio {:.6e}",
                self.elliptic_ratio(&sol, g, source)
            );
        }
        Ok(sol)
    }

    /// Outgoing data `∂_ν u - i k u` on the Gauss layout for incoming `g`.
    fn outgoing(&self, g: ArrayView1<C64>) -> Result<Array1<C64>> {
        let u = self.solve_grid(g, None)?;
        let mut out = Array1::zeros(self.layout.len());
        for (p, panel) in self.layout.panels().iter().enumerate() {
            let [line, dn, _] = self.side_traces(&u, panel.side);
            let o = &dn - &line.mapv(|v| v * I * self.k);
            let r = self.layout.panel_range(p);
            out.slice_mut(s![r])
                .assign(&real_dot(&self.to_gauss[side_slot(panel.side)], o.view()));
        }
        Ok(out)
    }

    /// Full boundary-to-boundary impedance map, one column per Gauss node.
    pub fn iti_full(&self) -> Result<ItIOperator> {
        let n = self.layout.len();
        let cols: Vec<Array1<C64>> = (0..n)
            .into_par_iter()
            .map(|m| {
                let mut e = Array1::<C64>::zeros(n);
                e[m] = C64::new(1.0, 0.0);
                self.outgoing(e.view())
            })
            .collect::<Result<_>>()?;
        let mut mat = Array2::<C64>::zeros((n, n));
        for (m, c) in cols.into_iter().enumerate() {
            mat.column_mut(m).assign(&c);
        }
        ItIOperator::new(mat, self.k, self.layout.clone(), self.layout.clone())
    }

    /// `(R, Q)` for side `a`: `R` maps data on `a` to outgoing data on `a`,
    /// `Q` maps data on the remaining sides to outgoing data on `a`.
    pub fn iti_partial(&self, a: Side) -> Result<(ItIOperator, ItIOperator)> {
        partial_blocks(&self.iti_full()?, a)
    }

    /// Left side of the discrete elliptic estimate divided by its right side:
    /// `(‖u‖_{H¹_k(S)} + ‖ku‖ + ‖∂_ν u‖ + ‖∂_τ u‖ on ∂S) / (‖G‖ + ‖g‖)`.
    pub fn elliptic_ratio(
        &self,
        sol: &FieldSolution,
        g: &BoundaryTrace,
        source: Option<&Array2<C64>>,
    ) -> f64 {
        let wx = quad_weights(&ChebGrid::lobatto(self.res.n_x).expect("grid"))
            * (self.rect.width() / 2.0);
        let wy = quad_weights(&ChebGrid::lobatto(self.res.n_y).expect("grid"))
            * (self.rect.height() / 2.0);
        let u = &sol.values;
        let ux = crate::linalg::to_complex(&self.dx).dot(u);
        let uy = u.dot(&crate::linalg::to_complex(&self.dy).t());
        let integrate = |f: &dyn Fn(usize, usize) -> f64| -> f64 {
            let mut acc = 0.0;
            for i in 0..wx.len() {
                for j in 0..wy.len() {
                    acc += wx[i] * wy[j] * f(i, j);
                }
            }
            acc
        };
        let ku = self.k * integrate(&|i, j| u[[i, j]].norm_sqr()).sqrt();
        let grad = integrate(&|i, j| ux[[i, j]].norm_sqr() + uy[[i, j]].norm_sqr()).sqrt();
        let bnorm = |t: &Array1<C64>| boundary_l2(&self.layout, t.view());
        let lhs = ku
            + grad
            + self.k * bnorm(&sol.trace.values)
            + bnorm(&sol.normal_derivative.values)
            + bnorm(&sol.tangential_derivative.values);
        let gnorm = bnorm(&g.values);
        let src = source
            .map(|s| {
                let mut acc = 0.0;
                for i in 1..self.res.n_x {
                    for j in 1..self.res.n_y {
                        acc += wx[i] * wy[j] * s[[i, j]].norm_sqr();
                    }
                }
                acc.sqrt()
            })
            .unwrap_or(0.0);
        if gnorm + src == 0.0 {
            0.0
        } else {
            lhs / (gnorm + src)
        }
    }

    /// Evaluates the interpolant of a grid field at `(x, y)`.
    pub fn eval(&self, values: &Array2<C64>, x: f64, y: f64) -> C64 {
        let gx = ChebGrid::lobatto(self.res.n_x).expect("grid");
        let gy = ChebGrid::lobatto(self.res.n_y).expect("grid");
        let lx = interp_to_points(&gx, &[ChebGrid::to_reference(self.rect.x0, self.rect.x1, x)]);
        let ly = interp_to_points(&gy, &[ChebGrid::to_reference(self.rect.y0, self.rect.y1, y)]);
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..values.nrows() {
            for j in 0..values.ncols() {
                acc += values[[i, j]] * (lx[[0, i]] * ly[[0, j]]);
            }
        }
        acc
    }
}

/// L² norm over a layout with Fejér weights on each panel.
pub fn boundary_l2(layout: &BoundaryLayout, v: ArrayView1<C64>) -> f64 {
    let mut acc = 0.0;
    for (p, panel) in layout.panels().iter().enumerate() {
        let w = quad_weights(&panel.grid) * (panel.length() / 2.0);
        for (wi, z) in w.iter().zip(v.slice(s![layout.panel_range(p)]).iter()) {
            acc += wi * z.norm_sqr();
        }
    }
    acc.sqrt()
}

/// Splits a full operator into the `(A, A)` and `(A, rest)` blocks for the
/// panels on side `a`.
pub fn partial_blocks(full: &ItIOperator, a: Side) -> Result<(ItIOperator, ItIOperator)> {
    let layout = &full.source;
    let a_panels = layout.panels_on(a);
    if a_panels.is_empty() {
        return Err(Error::LayoutMismatch(format!("no panels on side {a}")));
    }
    let rest: Vec<usize> = (0..layout.panels().len())
        .filter(|p| !a_panels.contains(p))
        .collect();
    let ai = layout.indices_of(&a_panels);
    let ei = layout.indices_of(&rest);
    let a_layout = layout.subset(&a_panels);
    let e_layout = layout.subset(&rest);
    let r = ItIOperator::new(
        select(&full.matrix, &ai, &ai),
        full.k,
        a_layout.clone(),
        a_layout.clone(),
    )?;
    let q = ItIOperator::new(select(&full.matrix, &ai, &ei), full.k, e_layout, a_layout)?;
    Ok((r, q))
}

/// Dense collocation matrix; row/column index `i (n_y + 1) + j`.
fn assemble(
    xs: &[f64],
    ys: &[f64],
    dx: &Array2<f64>,
    dy: &Array2<f64>,
    potential: &Potential,
    k: f64,
) -> Array2<C64> {
    let (nx, ny) = (xs.len() - 1, ys.len() - 1);
    let idx = |i: usize, j: usize| i * (ny + 1) + j;
    let n = (nx + 1) * (ny + 1);
    let dxx = dx.dot(dx);
    let dyy = dy.dot(dy);
    let ik = I * k;
    let mut a = Array2::<C64>::zeros((n, n));
    for i in 0..=nx {
        for j in 0..=ny {
            let p = idx(i, j);
            let mut row = a.row_mut(p);
            if j == 0 || j == ny {
                // South/North own the corners
                let sign = if j == 0 { -1.0 } else { 1.0 };
                for q in 0..=ny {
                    row[idx(i, q)] += C64::new(sign * dy[[j, q]], 0.0);
                }
                row[p] += ik;
            } else if i == 0 || i == nx {
                let sign = if i == 0 { -1.0 } else { 1.0 };
                for q in 0..=nx {
                    row[idx(q, j)] += C64::new(sign * dx[[i, q]], 0.0);
                }
                row[p] += ik;
            } else {
                for q in 0..=nx {
                    row[idx(q, j)] += C64::new(dxx[[i, q]], 0.0);
                }
                for q in 0..=ny {
                    row[idx(i, q)] += C64::new(dyy[[j, q]], 0.0);
                }
                row[p] += C64::new(k * k * potential.value(xs[i], ys[j]), 0.0);
            }
        }
    }
    a
}
