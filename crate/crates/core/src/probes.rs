//! Probe data for inequality and identity checks.
//!
//! Generic smooth data on adjacent sides do not satisfy the corner
//! compatibility conditions of the impedance problem, so the solutions they
//! produce carry weak corner singularities and converge only algebraically.
//! Identity checks therefore use traces of exact smooth solutions:
//! separable solutions `X(x) e^{iηy}` for potentials that depend on `x`
//! only, or combinations of the impedance modes `w_n` for data supported on
//! one side. Smoothed Gaussian vectors cover the remaining spot checks.

use ndarray::{s, Array1, Array2};
use ndarray_linalg::Solve;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::domain::{BoundaryLayout, Potential, Rect, Side};
use crate::error::{Error, Result};
use crate::linalg::{real_dot, C64, I};
use crate::oracle::ImpedanceMode;
use crate::spectral::{diff_matrix, interp_matrix, interp_to_points, ChebGrid};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn complex_normal(rng: &mut impl Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Complex Gaussian vector on `layout`, smoothed panel by panel through a
/// Gauss grid of half the degree and back.
pub fn smoothed_gaussian(layout: &BoundaryLayout, rng: &mut impl Rng) -> Result<Array1<C64>> {
    let mut out = Array1::<C64>::zeros(layout.len());
    for (p, panel) in layout.panels().iter().enumerate() {
        let n = panel.grid.degree();
        let coarse = ChebGrid::gauss((n / 2).max(1))?;
        let round = interp_matrix(&coarse, &panel.grid).dot(&interp_matrix(&panel.grid, &coarse));
        let raw = Array1::from_shape_fn(panel.len(), |_| complex_normal(rng));
        out.slice_mut(s![layout.panel_range(p)])
            .assign(&real_dot(&round, raw.view()));
    }
    Ok(out)
}

/// Exact solution `u = X(x) e^{iηy}` of `Δu + k²V(x)u = 0`.
///
/// `X` solves `X'' + (k²V - η²)X = 0` with `X(x0) = a`, `X'(x0) = b` on a
/// Chebyshev grid fine enough to reach round-off.
#[derive(Debug, Clone)]
pub struct SeparableSolution {
    pub eta: f64,
    x0: f64,
    x1: f64,
    grid: ChebGrid,
    x_vals: Array1<C64>,
    dx_vals: Array1<C64>,
}

impl SeparableSolution {
    pub fn new(
        potential: &Potential,
        k: f64,
        x0: f64,
        x1: f64,
        eta: f64,
        a: C64,
        b: C64,
    ) -> Result<Self> {
        if !potential.is_x_only() {
            return Err(Error::InvalidParameter(
                "separable solutions need a potential independent of y".into(),
            ));
        }
        let len = x1 - x0;
        let vmax = [x0, x1]
            .iter()
            .map(|&x| potential.value(x, 0.0).abs())
            .fold(0.0, f64::max);
        let scale = k * vmax.sqrt() + eta.abs();
        let m = 32 + (2.0 * len * scale).ceil() as usize;
        let grid = ChebGrid::lobatto(m)?;
        let xs = grid.mapped_nodes(x0, x1);
        let d = diff_matrix(&grid).physical(x0, x1);
        let d2 = d.dot(&d);
        let mut sys = Array2::<C64>::zeros((m + 1, m + 1));
        let mut rhs = Array1::<C64>::zeros(m + 1);
        for i in 1..m {
            for j in 0..=m {
                sys[[i, j]] = C64::new(d2[[i, j]], 0.0);
            }
            sys[[i, i]] += k * k * potential.value(xs[i], 0.0) - eta * eta;
        }
        sys[[0, 0]] = C64::new(1.0, 0.0);
        rhs[0] = a;
        for j in 0..=m {
            sys[[m, j]] = C64::new(d[[0, j]], 0.0);
        }
        rhs[m] = b;
        let x_vals = sys.solve_into(rhs)?;
        let dx_vals = real_dot(&d, x_vals.view());
        Ok(Self {
            eta,
            x0,
            x1,
            grid,
            x_vals,
            dx_vals,
        })
    }

    /// `(u, ∂_x u, ∂_y u)` at `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> (C64, C64, C64) {
        let t = ChebGrid::to_reference(self.x0, self.x1, x);
        let row = interp_to_points(&self.grid, &[t]);
        let xv = real_dot(&row, self.x_vals.view())[0];
        let dxv = real_dot(&row, self.dx_vals.view())[0];
        let e = (I * self.eta * y).exp();
        (xv * e, dxv * e, I * self.eta * xv * e)
    }

    fn impedance(&self, layout: &BoundaryLayout, k: f64, sign: f64) -> Array1<C64> {
        let mut out = Array1::<C64>::zeros(layout.len());
        let mut idx = 0;
        for panel in layout.panels() {
            let (nx, ny) = panel.side.normal();
            for (x, y) in panel.points() {
                let (u, ux, uy) = self.eval(x, y);
                out[idx] = ux * nx + uy * ny + sign * I * k * u;
                idx += 1;
            }
        }
        out
    }

    /// `∂_ν u + iku` on the layout.
    pub fn incoming(&self, layout: &BoundaryLayout, k: f64) -> Array1<C64> {
        self.impedance(layout, k, 1.0)
    }

    /// `∂_ν u - iku` on the layout.
    pub fn outgoing(&self, layout: &BoundaryLayout, k: f64) -> Array1<C64> {
        self.impedance(layout, k, -1.0)
    }
}

/// Random separable solutions over `rect`: `η` uniform in
/// `[-(k√V + 3), k√V + 3]` and complex Gaussian initial data.
pub fn random_separable(
    rect: &Rect,
    potential: &Potential,
    k: f64,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<SeparableSolution>> {
    let vmax = potential
        .value(rect.x0, rect.y0)
        .abs()
        .max(potential.value(rect.x1, rect.y0).abs());
    let band = k * vmax.sqrt() + 3.0;
    let dist = Uniform::new(-band, band).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    (0..count)
        .map(|_| {
            let eta = dist.sample(rng);
            let a = complex_normal(rng);
            let b = complex_normal(rng) * (k + eta.abs() + 1.0);
            SeparableSolution::new(potential, k, rect.x0, rect.x1, eta, a, b)
        })
        .collect()
}

/// Separable solutions on a deterministic `η` grid, two per `η`
/// (`X(x0) = 1, X'(x0) = 0` and `X(x0) = 0, X'(x0) = 1`).
pub fn separable_family(
    rect: &Rect,
    potential: &Potential,
    k: f64,
    etas: usize,
) -> Result<Vec<SeparableSolution>> {
    let vmax = potential
        .value(rect.x0, rect.y0)
        .abs()
        .max(potential.value(rect.x1, rect.y0).abs());
    let band = k * vmax.sqrt() + 3.0;
    let mut out = Vec::with_capacity(2 * etas);
    for j in 0..etas {
        let eta = if etas == 1 {
            0.0
        } else {
            -band + 2.0 * band * j as f64 / (etas - 1) as f64
        };
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        out.push(SeparableSolution::new(potential, k, rect.x0, rect.x1, eta, one, zero)?);
        out.push(SeparableSolution::new(potential, k, rect.x0, rect.x1, eta, zero, one)?);
    }
    Ok(out)
}

/// `Σ c_n w_n` with complex Gaussian `c_n`, `n = 1..=n_max`, on the panels
/// of `side` and zero elsewhere. The side must have unit length.
pub fn mode_combination(
    layout: &BoundaryLayout,
    side: Side,
    k: f64,
    n_max: usize,
    rng: &mut impl Rng,
) -> Result<Array1<C64>> {
    let modes = (1..=n_max)
        .map(|n| ImpedanceMode::new(k, n))
        .collect::<Result<Vec<_>>>()?;
    let coeffs: Vec<C64> = modes.iter().map(|_| complex_normal(rng)).collect();
    let panels = layout.panels_on(side);
    if panels.is_empty() {
        return Err(Error::LayoutMismatch(format!("no panels on side {side}")));
    }
    let start = layout.panels()[panels[0]].start;
    let end = layout.panels()[*panels.last().expect("non-empty")].end;
    if ((end - start) - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "impedance modes need a unit-length side, got {}",
            end - start
        )));
    }
    let mut out = Array1::<C64>::zeros(layout.len());
    for &p in &panels {
        let range = layout.panel_range(p);
        for (local, s) in layout.panels()[p].params().into_iter().enumerate() {
            let t = s - start;
            out[range.start + local] = modes
                .iter()
                .zip(&coeffs)
                .map(|(m, c)| c * m.w(t))
                .sum();
        }
    }
    Ok(out)
}
