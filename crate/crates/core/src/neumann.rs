//! Neumann eigenfunctions `Δw + λVw = 0`, `∂_ν w = 0` on a rectangle, and
//! their boundary mass away from one side.
//!
//! Collocation on a Lobatto tensor grid; the Neumann rows (corners owned by
//! South and North) are eliminated, leaving the standard eigenproblem
//! `-V⁻¹ L_red w = λ w` on interior nodes. Each mode is checked on a grid of
//! twice the degree and discarded if the PDE or boundary residual exceeds the
//! tolerance. Modes are normalized by `∫ V |w|² = 1`.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Cholesky, Eig, Eigh, Inverse, UPLO};

use crate::domain::{Potential, Rect, Side};
use crate::error::{Error, Result};
use crate::linalg::{to_complex, C64};
use crate::spectral::{diff_matrix, interp_matrix, quad_weights, ChebGrid};

pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-6;

/// One converged mode.
#[derive(Debug, Clone, PartialEq)]
pub struct NeumannMode {
    pub lambda: f64,
    /// Boundary mass `‖w‖²` on the sides other than the excluded one. For a
    /// cluster of (numerically) equal eigenvalues these are the eigenvalues
    /// of the boundary-mass form restricted to the eigenspace.
    pub trace_sq: f64,
    pub cluster: usize,
    pub pde_residual: f64,
    pub bc_residual: f64,
}

#[derive(Debug, Clone)]
pub struct NeumannSpectrum {
    pub modes: Vec<NeumannMode>,
    /// Candidates discarded by the residual filter or for a complex eigenvalue.
    pub rejected: usize,
}

struct Discretization {
    nx: usize,
    ny: usize,
    dx: Array2<f64>,
    dy: Array2<f64>,
    v: Array1<f64>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    /// Boundary values from interior values.
    extend: Array2<f64>,
}

fn idx(i: usize, j: usize, ny: usize) -> usize {
    i * (ny + 1) + j
}

fn discretize(rect: &Rect, potential: &Potential, n: usize) -> Result<(Discretization, Array2<f64>)> {
    let (nx, ny) = (n, n);
    let gx = ChebGrid::lobatto(nx)?;
    let gy = ChebGrid::lobatto(ny)?;
    let xs = gx.mapped_nodes(rect.x0, rect.x1);
    let ys = gy.mapped_nodes(rect.y0, rect.y1);
    let dx = diff_matrix(&gx).physical(rect.x0, rect.x1);
    let dy = diff_matrix(&gy).physical(rect.y0, rect.y1);
    let total = (nx + 1) * (ny + 1);
    let mut v = Array1::<f64>::zeros(total);
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    for i in 0..=nx {
        for j in 0..=ny {
            let p = idx(i, j, ny);
            v[p] = potential.value(xs[i], ys[j]);
            if i == 0 || i == nx || j == 0 || j == ny {
                boundary.push(p);
            } else {
                interior.push(p);
            }
        }
    }
    if let Some(p) = (0..total).find(|&p| !(v[p] > 0.0)) {
        return Err(Error::NegativePotential {
            x: xs[p / (ny + 1)],
            y: ys[p % (ny + 1)],
            value: v[p],
        });
    }
    // Neumann rows, one per boundary node
    let mut b = Array2::<f64>::zeros((boundary.len(), total));
    for (r, &p) in boundary.iter().enumerate() {
        let (i, j) = (p / (ny + 1), p % (ny + 1));
        if j == 0 || j == ny {
            for q in 0..=ny {
                b[[r, idx(i, q, ny)]] = dy[[j, q]];
            }
        } else {
            for q in 0..=nx {
                b[[r, idx(q, j, ny)]] = dx[[i, q]];
            }
        }
    }
    let bb = Array2::from_shape_fn((boundary.len(), boundary.len()), |(r, c)| b[[r, boundary[c]]]);
    let bi = Array2::from_shape_fn((boundary.len(), interior.len()), |(r, c)| b[[r, interior[c]]]);
    let extend = -bb.inv()?.dot(&bi);
    // Laplacian rows at interior nodes
    let dxx = dx.dot(&dx);
    let dyy = dy.dot(&dy);
    let mut lap = Array2::<f64>::zeros((interior.len(), total));
    for (r, &p) in interior.iter().enumerate() {
        let (i, j) = (p / (ny + 1), p % (ny + 1));
        for q in 0..=nx {
            lap[[r, idx(q, j, ny)]] += dxx[[i, q]];
        }
        for q in 0..=ny {
            lap[[r, idx(i, q, ny)]] += dyy[[j, q]];
        }
    }
    Ok((
        Discretization {
            nx,
            ny,
            dx,
            dy,
            v,
            interior,
            boundary,
            extend,
        },
        lap,
    ))
}

struct Refined {
    ix: Array2<C64>,
    iy: Array2<C64>,
    dx: Array2<C64>,
    dy: Array2<C64>,
    wx: Array1<f64>,
    wy: Array1<f64>,
    v: Array2<f64>,
}

impl Refined {
    fn new(rect: &Rect, potential: &Potential, d: &Discretization) -> Result<Self> {
        let gx = ChebGrid::lobatto(d.nx)?;
        let gy = ChebGrid::lobatto(d.ny)?;
        let fx = ChebGrid::lobatto(2 * d.nx)?;
        let fy = ChebGrid::lobatto(2 * d.ny)?;
        let xs = fx.mapped_nodes(rect.x0, rect.x1);
        let ys = fy.mapped_nodes(rect.y0, rect.y1);
        Ok(Self {
            ix: to_complex(&interp_matrix(&gx, &fx)),
            iy: to_complex(&interp_matrix(&gy, &fy)),
            dx: to_complex(&d.dx),
            dy: to_complex(&d.dy),
            wx: quad_weights(&fx) * (rect.width() / 2.0),
            wy: quad_weights(&fy) * (rect.height() / 2.0),
            v: Array2::from_shape_fn((xs.len(), ys.len()), |(i, j)| potential.value(xs[i], ys[j])),
        })
    }

    fn fine(&self, w: &Array2<C64>) -> Array2<C64> {
        self.ix.dot(w).dot(&self.iy.t())
    }

    fn mass(&self, a: &Array2<C64>, b: &Array2<C64>) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for ((i, j), va) in a.indexed_iter() {
            acc += self.wx[i] * self.wy[j] * self.v[[i, j]] * va * b[[i, j]].conj();
        }
        acc
    }

    fn trace(&self, a: &Array2<C64>, b: &Array2<C64>, excluded: Side) -> C64 {
        let (mx, my) = a.dim();
        let mut acc = C64::new(0.0, 0.0);
        for side in Side::ALL {
            if side == excluded {
                continue;
            }
            match side {
                Side::South | Side::North => {
                    let j = if side == Side::South { 0 } else { my - 1 };
                    for i in 0..mx {
                        acc += self.wx[i] * a[[i, j]] * b[[i, j]].conj();
                    }
                }
                Side::West | Side::East => {
                    let i = if side == Side::West { 0 } else { mx - 1 };
                    for j in 0..my {
                        acc += self.wy[j] * a[[i, j]] * b[[i, j]].conj();
                    }
                }
            }
        }
        acc
    }

    /// Relative PDE and Neumann residuals of the interpolant.
    fn residuals(&self, w: &Array2<C64>, lambda: f64) -> (f64, f64) {
        let f = self.fine(w);
        let wx = self.fine(&self.dx.dot(w));
        let wy = self.fine(&w.dot(&self.dy.t()));
        let lap = self.fine(&self.dx.dot(&self.dx).dot(w)) + self.fine(&w.dot(&self.dy.dot(&self.dy).t()));
        let scale = f.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
        let vmax = self.v.iter().cloned().fold(0.0, f64::max);
        let mut pde: f64 = 0.0;
        for ((i, j), l) in lap.indexed_iter() {
            pde = pde.max((l + f[[i, j]] * (lambda * self.v[[i, j]])).norm());
        }
        pde /= lambda.abs().max(1.0) * vmax * scale;
        let (mx, my) = f.dim();
        let mut bc: f64 = 0.0;
        for i in 0..mx {
            bc = bc.max(wy[[i, 0]].norm()).max(wy[[i, my - 1]].norm());
        }
        for j in 0..my {
            bc = bc.max(wx[[0, j]].norm()).max(wx[[mx - 1, j]].norm());
        }
        bc /= lambda.abs().sqrt().max(1.0) * scale;
        (pde, bc)
    }
}

/// First `count` converged Neumann modes of `rect` at degree `n`, with
/// boundary mass measured on all sides except `excluded`.
pub fn neumann_modes(
    rect: &Rect,
    potential: &Potential,
    n: usize,
    count: usize,
    excluded: Side,
    residual_tol: f64,
) -> Result<NeumannSpectrum> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("degree {n} too small")));
    }
    let (d, lap) = discretize(rect, potential, n)?;
    let li = Array2::from_shape_fn((d.interior.len(), d.interior.len()), |(r, c)| lap[[r, d.interior[c]]]);
    let lb = Array2::from_shape_fn((d.interior.len(), d.boundary.len()), |(r, c)| lap[[r, d.boundary[c]]]);
    let mut a = li + lb.dot(&d.extend);
    for (r, &p) in d.interior.iter().enumerate() {
        let s = -1.0 / d.v[p];
        a.row_mut(r).mapv_inplace(|x| x * s);
    }
    let (vals, vecs) = a.eig().map_err(|e| Error::Eigen(e.to_string()))?;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| vals[i].re.total_cmp(&vals[j].re));

    let refined = Refined::new(rect, potential, &d)?;
    let extend = to_complex(&d.extend);
    let mut rejected = 0;
    let mut accepted: Vec<(f64, Array2<C64>, f64, f64)> = Vec::new();
    let mut pos = 0;
    while pos < order.len() {
        let i = order[pos];
        pos += 1;
        let lam = vals[i];
        if lam.im.abs() > 1e-8 * (1.0 + lam.norm()) {
            rejected += 1;
            continue;
        }
        let wi = vecs.column(i).to_owned();
        let wb = extend.dot(&wi);
        let mut grid = Array2::<C64>::zeros((d.nx + 1, d.ny + 1));
        for (r, &p) in d.interior.iter().enumerate() {
            grid[[p / (d.ny + 1), p % (d.ny + 1)]] = wi[r];
        }
        for (r, &p) in d.boundary.iter().enumerate() {
            grid[[p / (d.ny + 1), p % (d.ny + 1)]] = wb[r];
        }
        let (pde, bc) = refined.residuals(&grid, lam.re);
        if pde > residual_tol || bc > residual_tol {
            rejected += 1;
            continue;
        }
        let fine = refined.fine(&grid);
        let norm = refined.mass(&fine, &fine).re.sqrt();
        accepted.push((lam.re, fine.mapv(|z| z / norm), pde, bc));
        if accepted.len() >= count {
            // finish the current cluster
            let last = lam.re;
            let more = order[pos..]
                .iter()
                .take_while(|&&j| (vals[j].re - last).abs() <= cluster_tol(last))
                .count();
            if more == 0 {
                break;
            }
        }
    }

    let mut modes = Vec::with_capacity(accepted.len());
    let mut start = 0;
    let mut cluster = 0;
    while start < accepted.len() {
        let mut end = start + 1;
        while end < accepted.len() && (accepted[end].0 - accepted[start].0).abs() <= cluster_tol(accepted[start].0) {
            end += 1;
        }
        let group = &accepted[start..end];
        let m = Array2::from_shape_fn((group.len(), group.len()), |(a, b)| refined.mass(&group[a].1, &group[b].1));
        let t = Array2::from_shape_fn((group.len(), group.len()), |(a, b)| refined.trace(&group[a].1, &group[b].1, excluded));
        let l = m.cholesky(UPLO::Lower).map_err(|_| Error::NotPositiveDefinite)?;
        let linv = l.inv()?;
        let c = linv.dot(&t).dot(&linv.t().mapv(|z| z.conj()));
        let c = (&c + &c.t().mapv(|z| z.conj())).mapv(|z| z * 0.5);
        let (mu, _) = c.eigh(UPLO::Lower).map_err(|e| Error::Eigen(e.to_string()))?;
        for (g, &m) in group.iter().zip(mu.iter()) {
            modes.push(NeumannMode {
                lambda: g.0,
                trace_sq: m,
                cluster,
                pde_residual: g.2,
                bc_residual: g.3,
            });
        }
        cluster += 1;
        start = end;
    }
    Ok(NeumannSpectrum { modes, rejected })
}

fn cluster_tol(lambda: f64) -> f64 {
    1e-6 * (1.0 + lambda.abs())
}

/// Boundary mass of `cos(mπx) cos(nπy)`, normalized on the unit square, on
/// the South, North and West sides.
pub fn unit_square_trace(m: usize, n: usize) -> f64 {
    let a = |j: usize| if j == 0 { 1.0 } else { 0.5 };
    2.0 / a(n) + 1.0 / a(m)
}
