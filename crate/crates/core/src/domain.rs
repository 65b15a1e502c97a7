//! Rectangle geometry, boundary layouts and potentials.

use std::fmt;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::spectral::{interp_to_points, ChebGrid};

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x0 < x1 && y0 < y1) || ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidRect { x0, x1, y0, y1 });
        }
        Ok(Self { x0, x1, y0, y1 })
    }

    pub fn unit_square() -> Self {
        Self {
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.x0, self.y0),
            (self.x1, self.y0),
            (self.x1, self.y1),
            (self.x0, self.y1),
        ]
    }

    pub fn is_corner(&self, p: (f64, f64)) -> bool {
        let tol = 1e-12 * (1.0 + self.width().max(self.height()));
        self.corners()
            .iter()
            .any(|c| (c.0 - p.0).abs() <= tol && (c.1 - p.1).abs() <= tol)
    }

    /// `(line, start, end)` of a side: the fixed coordinate and the
    /// parameter range along its orientation.
    pub fn side_segment(&self, side: Side) -> (f64, f64, f64) {
        match side {
            Side::South => (self.y0, self.x0, self.x1),
            Side::North => (self.y1, self.x0, self.x1),
            Side::East => (self.x1, self.y0, self.y1),
            Side::West => (self.x0, self.y0, self.y1),
        }
    }

    pub fn side_length(&self, side: Side) -> f64 {
        let (_, a, b) = self.side_segment(side);
        b - a
    }
}

/// Sides of a rectangle in global ordering. The side parameter increases
/// with `x` on South/North and with `y` on East/West.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    South,
    East,
    North,
    West,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::South, Side::East, Side::North, Side::West];

    pub fn normal(self) -> (f64, f64) {
        match self {
            Side::South => (0.0, -1.0),
            Side::East => (1.0, 0.0),
            Side::North => (0.0, 1.0),
            Side::West => (-1.0, 0.0),
        }
    }

    pub fn tangent(self) -> (f64, f64) {
        if self.is_horizontal() {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        }
    }

    /// South and North run along `x`.
    pub fn is_horizontal(self) -> bool {
        matches!(self, Side::South | Side::North)
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::South => Side::North,
            Side::North => Side::South,
            Side::East => Side::West,
            Side::West => Side::East,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Side::South => "south",
            Side::East => "east",
            Side::North => "north",
            Side::West => "west",
        };
        f.write_str(s)
    }
}

/// A segment of one side carrying a Gauss grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub side: Side,
    /// Fixed coordinate of the side (`y` for South/North, `x` for East/West).
    pub line: f64,
    pub start: f64,
    pub end: f64,
    pub grid: ChebGrid,
}

impl Panel {
    pub fn new(side: Side, line: f64, start: f64, end: f64, n_b: usize) -> Result<Self> {
        if !(start < end) {
            return Err(Error::InvalidParameter(format!(
                "panel range [{start}, {end}] is empty"
            )));
        }
        Ok(Self {
            side,
            line,
            start,
            end,
            grid: ChebGrid::gauss(n_b)?,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// Node parameters, ascending.
    pub fn params(&self) -> Vec<f64> {
        self.grid.mapped_nodes(self.start, self.end)
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.params()
            .into_iter()
            .map(|s| {
                if self.side.is_horizontal() {
                    (s, self.line)
                } else {
                    (self.line, s)
                }
            })
            .collect()
    }

    /// Same side, same segment and same grid, to round-off.
    pub fn coincides(&self, other: &Panel) -> bool {
        let tol = 1e-12 * (1.0 + self.length());
        self.grid == other.grid
            && (self.line - other.line).abs() <= tol
            && (self.start - other.start).abs() <= tol
            && (self.end - other.end).abs() <= tol
    }

    /// Same geometric segment regardless of which side label it carries.
    pub fn same_segment(&self, other: &Panel) -> bool {
        self.side.is_horizontal() == other.side.is_horizontal() && self.coincides(other)
    }
}

/// Ordered list of panels; global indices run panel by panel.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLayout {
    panels: Vec<Panel>,
    offsets: Vec<usize>,
}

impl BoundaryLayout {
    pub fn new(panels: Vec<Panel>) -> Self {
        let mut offsets = Vec::with_capacity(panels.len() + 1);
        let mut acc = 0;
        for p in &panels {
            offsets.push(acc);
            acc += p.len();
        }
        offsets.push(acc);
        Self { panels, offsets }
    }

    /// One Gauss panel of degree `n_b` per side, in South/East/North/West order.
    pub fn per_side(rect: &Rect, n_b: usize) -> Result<Self> {
        let panels = Side::ALL
            .iter()
            .map(|&s| {
                let (line, a, b) = rect.side_segment(s);
                Panel::new(s, line, a, b, n_b)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(panels))
    }

    pub fn panels(&self) -> &[Panel] {
        &self.panels
    }

    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn panel_range(&self, p: usize) -> std::ops::Range<usize> {
        self.offsets[p]..self.offsets[p + 1]
    }

    pub fn global_index(&self, panel: usize, local: usize) -> usize {
        debug_assert!(local < self.panels[panel].len());
        self.offsets[panel] + local
    }

    /// Panel indices on `side`, sorted by increasing parameter.
    pub fn panels_on(&self, side: Side) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.panels.len())
            .filter(|&p| self.panels[p].side == side)
            .collect();
        idx.sort_by(|&a, &b| self.panels[a].start.total_cmp(&self.panels[b].start));
        idx
    }

    /// Global indices for a list of panels, concatenated in the given order.
    pub fn indices_of(&self, panels: &[usize]) -> Vec<usize> {
        panels.iter().flat_map(|&p| self.panel_range(p)).collect()
    }

    /// Sub-layout consisting of the listed panels.
    pub fn subset(&self, panels: &[usize]) -> BoundaryLayout {
        BoundaryLayout::new(panels.iter().map(|&p| self.panels[p].clone()).collect())
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.panels.iter().flat_map(|p| p.points()).collect()
    }

    /// Permutation listing global indices in canonical order: sides
    /// South/East/North/West, panels by increasing parameter within a side.
    pub fn canonical_order(&self) -> Vec<usize> {
        let panels: Vec<usize> = Side::ALL
            .iter()
            .flat_map(|&s| self.panels_on(s))
            .collect();
        self.indices_of(&panels)
    }
}

/// Interpolation from one layout to another covering the same sides.
///
/// Each target panel must lie inside a single source panel on the same side;
/// values are the polynomial interpolant of that source panel. Exact when the
/// data on every source panel is a polynomial of its degree.
pub fn layout_transfer(from: &BoundaryLayout, to: &BoundaryLayout) -> Result<Array2<f64>> {
    let mut m = Array2::<f64>::zeros((to.len(), from.len()));
    for (tp, target) in to.panels().iter().enumerate() {
        let tol = 1e-12 * (1.0 + target.length());
        let src = from
            .panels()
            .iter()
            .position(|s| {
                s.side == target.side
                    && (s.line - target.line).abs() <= tol
                    && s.start <= target.start + tol
                    && target.end <= s.end + tol
            })
            .ok_or_else(|| {
                Error::LayoutMismatch(format!(
                    "no source panel covers {} [{}, {}]",
                    target.side, target.start, target.end
                ))
            })?;
        let source = &from.panels()[src];
        let refs: Vec<f64> = target
            .params()
            .iter()
            .map(|&s| ChebGrid::to_reference(source.start, source.end, s))
            .collect();
        let block = interp_to_points(&source.grid, &refs);
        let rows = to.panel_range(tp);
        let cols = from.panel_range(src);
        m.slice_mut(ndarray::s![rows, cols]).assign(&block);
    }
    Ok(m)
}

/// Smooth real potential with analytic gradient.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Constant(f64),
    /// `a x + b y + c`.
    Affine { a: f64, b: f64, c: f64 },
    /// `base + amplitude * exp(-((x - x0)^2 + (y - y0)^2) / (2 width^2))`.
    GaussianBump {
        base: f64,
        amplitude: f64,
        x0: f64,
        y0: f64,
        width: f64,
    },
    /// Bicubic interpolant of tabulated values.
    Table(BicubicTable),
    /// `V(2 axis - x, y)`.
    Reflected { inner: Box<Potential>, axis: f64 },
}

impl Potential {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        match self {
            Potential::Constant(c) => *c,
            Potential::Affine { a, b, c } => a * x + b * y + c,
            Potential::GaussianBump {
                base,
                amplitude,
                x0,
                y0,
                width,
            } => {
                let r2 = (x - x0).powi(2) + (y - y0).powi(2);
                base + amplitude * (-r2 / (2.0 * width * width)).exp()
            }
            Potential::Table(t) => t.eval(x, y).0,
            Potential::Reflected { inner, axis } => inner.value(2.0 * axis - x, y),
        }
    }

    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        match self {
            Potential::Constant(_) => (0.0, 0.0),
            Potential::Affine { a, b, .. } => (*a, *b),
            Potential::GaussianBump {
                amplitude,
                x0,
                y0,
                width,
                ..
            } => {
                let s2 = width * width;
                let r2 = (x - x0).powi(2) + (y - y0).powi(2);
                let e = amplitude * (-r2 / (2.0 * s2)).exp();
                (-e * (x - x0) / s2, -e * (y - y0) / s2)
            }
            Potential::Table(t) => {
                let (_, gx, gy) = t.eval(x, y);
                (gx, gy)
            }
            Potential::Reflected { inner, axis } => {
                let (gx, gy) = inner.gradient(2.0 * axis - x, y);
                (-gx, gy)
            }
        }
    }

    /// Sup-norm distance to another potential sampled on `rect`.
    pub fn sup_distance(&self, other: &Potential, rect: &Rect, samples: usize) -> f64 {
        sample_grid(rect, samples)
            .map(|(x, y)| (self.value(x, y) - other.value(x, y)).abs())
            .fold(0.0, f64::max)
    }

    /// Rejects negative values on a sampled grid over `rect`.
    pub fn check_nonnegative(&self, rect: &Rect, samples: usize) -> Result<()> {
        for (x, y) in sample_grid(rect, samples) {
            let v = self.value(x, y);
            if v < 0.0 || !v.is_finite() {
                return Err(Error::NegativePotential { x, y, value: v });
            }
        }
        Ok(())
    }

    /// True when the descriptor guarantees no dependence on `y`.
    pub fn is_x_only(&self) -> bool {
        match self {
            Potential::Constant(_) => true,
            Potential::Affine { b, .. } => *b == 0.0,
            Potential::Reflected { inner, .. } => inner.is_x_only(),
            _ => false,
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Potential::Constant(_) => true,
            Potential::Reflected { inner, .. } => inner.is_constant(),
            _ => false,
        }
    }
}

/// `V2(x, y) = V(2 - x, y)`.
pub fn reflect_potential(v: &Potential) -> Potential {
    reflect_about(v, 1.0)
}

pub fn reflect_about(v: &Potential, axis: f64) -> Potential {
    Potential::Reflected {
        inner: Box::new(v.clone()),
        axis,
    }
}

fn sample_grid(rect: &Rect, samples: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
    let m = samples.max(2);
    (0..m).flat_map(move |i| {
        (0..m).map(move |j| {
            let x = rect.x0 + rect.width() * i as f64 / (m - 1) as f64;
            let y = rect.y0 + rect.height() * j as f64 / (m - 1) as f64;
            (x, y)
        })
    })
}

pub const DEFAULT_NONTRAPPING_SAMPLES: usize = 201;

/// Minimum of `2V + (x - a0, y - b0) . grad V` over an equispaced
/// `samples x samples` grid. Callers treat a result `<= 0` as failure.
pub fn check_nontrapping(
    v: &Potential,
    rect: &Rect,
    vertex: (f64, f64),
    samples: usize,
) -> Result<f64> {
    if !rect.is_corner(vertex) {
        return Err(Error::NotACorner(vertex.0, vertex.1));
    }
    if samples < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 samples per axis, got {samples}"
        )));
    }
    let (a0, b0) = vertex;
    Ok(sample_grid(rect, samples)
        .map(|(x, y)| {
            let (gx, gy) = v.gradient(x, y);
            2.0 * v.value(x, y) + (x - a0) * gx + (y - b0) * gy
        })
        .fold(f64::INFINITY, f64::min))
}

/// Bicubic Hermite interpolant on a uniform grid over a rectangle.
///
/// Nodal derivatives come from central differences (one-sided at the edges).
#[derive(Debug, Clone, PartialEq)]
pub struct BicubicTable {
    rect: Rect,
    /// values[[i, j]] at x_i, y_j.
    values: Array2<f64>,
    fx: Array2<f64>,
    fy: Array2<f64>,
    fxy: Array2<f64>,
}

impl BicubicTable {
    pub fn new(rect: Rect, values: Array2<f64>) -> Result<Self> {
        let (nx, ny) = values.dim();
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidParameter(
                "potential table needs at least 2x2 samples".into(),
            ));
        }
        let hx = rect.width() / (nx - 1) as f64;
        let hy = rect.height() / (ny - 1) as f64;
        let dx = |f: &Array2<f64>| {
            Array2::from_shape_fn((nx, ny), |(i, j)| {
                let (l, r) = (i.saturating_sub(1), (i + 1).min(nx - 1));
                (f[[r, j]] - f[[l, j]]) / ((r - l) as f64 * hx)
            })
        };
        let dy = |f: &Array2<f64>| {
            Array2::from_shape_fn((nx, ny), |(i, j)| {
                let (l, r) = (j.saturating_sub(1), (j + 1).min(ny - 1));
                (f[[i, r]] - f[[i, l]]) / ((r - l) as f64 * hy)
            })
        };
        let fx = dx(&values);
        let fy = dy(&values);
        let fxy = dy(&fx);
        Ok(Self {
            rect,
            values,
            fx,
            fy,
            fxy,
        })
    }

    pub fn rect(&self) -> &Rect {
        &self.rect
    }

    /// Value and gradient at `(x, y)`; points outside are clamped to the table.
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (nx, ny) = self.values.dim();
        let hx = self.rect.width() / (nx - 1) as f64;
        let hy = self.rect.height() / (ny - 1) as f64;
        let cx = ((x - self.rect.x0) / hx).clamp(0.0, (nx - 1) as f64);
        let cy = ((y - self.rect.y0) / hy).clamp(0.0, (ny - 1) as f64);
        let i = (cx.floor() as usize).min(nx - 2);
        let j = (cy.floor() as usize).min(ny - 2);
        let s = cx - i as f64;
        let t = cy - j as f64;

        // Hermite basis and derivatives: [h00, h10, h01, h11]
        let basis = |u: f64| {
            [
                2.0 * u.powi(3) - 3.0 * u * u + 1.0,
                u.powi(3) - 2.0 * u * u + u,
                -2.0 * u.powi(3) + 3.0 * u * u,
                u.powi(3) - u * u,
            ]
        };
        let dbasis = |u: f64| {
            [
                6.0 * u * u - 6.0 * u,
                3.0 * u * u - 4.0 * u + 1.0,
                -6.0 * u * u + 6.0 * u,
                3.0 * u * u - 2.0 * u,
            ]
        };
        let (bs, dbs, bt, dbt) = (basis(s), dbasis(s), basis(t), dbasis(t));

        let mut val = 0.0;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let (ii, jj) = (i + a, j + b);
                let f = self.values[[ii, jj]];
                let fx = self.fx[[ii, jj]] * hx;
                let fy = self.fy[[ii, jj]] * hy;
                let fxy = self.fxy[[ii, jj]] * hx * hy;
                // value basis index 0/2, slope basis index 1/3
                let (pv, ps) = (2 * a, 2 * a + 1);
                let (qv, qs) = (2 * b, 2 * b + 1);
                val += f * bs[pv] * bt[qv] + fx * bs[ps] * bt[qv] + fy * bs[pv] * bt[qs]
                    + fxy * bs[ps] * bt[qs];
                gx += f * dbs[pv] * bt[qv] + fx * dbs[ps] * bt[qv] + fy * dbs[pv] * bt[qs]
                    + fxy * dbs[ps] * bt[qs];
                gy += f * bs[pv] * dbt[qv] + fx * bs[ps] * dbt[qv] + fy * bs[pv] * dbt[qs]
                    + fxy * bs[ps] * dbt[qs];
            }
        }
        (val, gx / hx, gy / hy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect2() -> Rect {
        Rect::new(0.0, 2.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn rect_validation() {
        assert!(Rect::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(Rect::new(0.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn constant_potential_gives_two() {
        let v = Potential::Constant(1.0);
        for vertex in rect2().corners() {
            let c = check_nontrapping(&v, &rect2(), vertex, 11).unwrap();
            assert_eq!(c, 2.0);
        }
    }

    #[test]
    fn affine_potential_minimum() {
        let v = Potential::Affine {
            a: 0.1,
            b: 0.0,
            c: 1.0,
        };
        // V1 lives on the left unit square, where (1, 0) is a corner.
        let c = check_nontrapping(&v, &Rect::unit_square(), (1.0, 0.0), 201).unwrap();
        assert!((c - 1.9).abs() < 1e-12);
        assert!(check_nontrapping(&v, &rect2(), (1.0, 0.0), 201).is_err());
    }

    #[test]
    fn zero_potential_fails() {
        let c = check_nontrapping(&Potential::Constant(0.0), &rect2(), (2.0, 0.0), 5).unwrap();
        assert!(c <= 0.0);
    }

    #[test]
    fn non_corner_vertex_rejected() {
        let r = Rect::unit_square();
        assert!(matches!(
            check_nontrapping(&Potential::Constant(1.0), &r, (0.5, 0.0), 5),
            Err(Error::NotACorner(..))
        ));
    }

    #[test]
    fn reflection_of_affine() {
        let v = Potential::Affine {
            a: 0.1,
            b: 0.0,
            c: 1.0,
        };
        let v2 = reflect_potential(&v);
        for &(x, y) in &[(0.0, 0.0), (0.3, 0.7), (1.0, 0.5), (2.0, 1.0)] {
            assert!((v2.value(x, y) - (1.2 - x / 10.0)).abs() < 1e-14);
        }
        assert_eq!(reflect_potential(&Potential::Constant(1.0)).value(0.4, 0.2), 1.0);
    }

    #[test]
    fn per_side_layout_indices() {
        let l = BoundaryLayout::per_side(&Rect::unit_square(), 5).unwrap();
        assert_eq!(l.len(), 24);
        assert_eq!(l.panel_range(2), 12..18);
        assert_eq!(l.panels_on(Side::East), vec![1]);
        // no node at a corner
        for (x, y) in l.points() {
            assert!(!Rect::unit_square().is_corner((x, y)));
        }
    }

    #[test]
    fn transfer_splits_a_side() {
        let big = BoundaryLayout::per_side(&rect2(), 6).unwrap();
        let halves = BoundaryLayout::new(vec![
            Panel::new(Side::South, 0.0, 0.0, 1.0, 6).unwrap(),
            Panel::new(Side::South, 0.0, 1.0, 2.0, 6).unwrap(),
        ]);
        let t = layout_transfer(&big, &halves).unwrap();
        // x^3 on the south panel
        let data: Vec<f64> = big.points().iter().map(|p| p.0.powi(3)).collect();
        let out = t.dot(&ndarray::Array1::from(data));
        for (v, p) in out.iter().zip(halves.points()) {
            assert!((v - p.0.powi(3)).abs() < 1e-12);
        }
    }

    #[test]
    fn table_reproduces_bilinear_data() {
        let r = Rect::unit_square();
        let vals = Array2::from_shape_fn((6, 5), |(i, j)| {
            1.0 + 0.5 * i as f64 / 5.0 + 0.25 * j as f64 / 4.0
        });
        let t = BicubicTable::new(r, vals).unwrap();
        let (v, gx, gy) = t.eval(0.37, 0.81);
        assert!((v - (1.0 + 0.5 * 0.37 + 0.25 * 0.81)).abs() < 1e-12);
        assert!((gx - 0.5).abs() < 1e-12 && (gy - 0.25).abs() < 1e-12);
    }
}
