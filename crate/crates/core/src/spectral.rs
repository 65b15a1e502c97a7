//! Chebyshev spectral primitives on the reference interval [-1, 1].
//!
//! Two node families are provided. Lobatto (second-kind extrema) grids include
//! the endpoints and carry the interior collocation solve; Gauss (first-kind
//! roots) grids avoid the endpoints and carry boundary impedance data. Nodes
//! are stored in descending order everywhere, so differentiation,
//! interpolation and quadrature compose without permutations.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    /// `cos(j pi / n)`, endpoints included.
    Lobatto,
    /// `cos((2j + 1) pi / (2n + 2))`, endpoints excluded.
    Gauss,
}

/// Chebyshev grid of polynomial degree `n` (so `n + 1` nodes).
#[derive(Debug, Clone, PartialEq)]
pub struct ChebGrid {
    n: usize,
    kind: NodeKind,
    nodes: Vec<f64>,
}

impl ChebGrid {
    pub fn new(n: usize, kind: NodeKind) -> Result<Self> {
        if n == 0 {
            return Err(Error::DegenerateGrid(n));
        }
        // The sine forms are exactly antisymmetric about the midpoint.
        let nodes = match kind {
            NodeKind::Lobatto => (0..=n)
                .map(|j| (PI * (n as f64 - 2.0 * j as f64) / (2.0 * n as f64)).sin())
                .collect(),
            NodeKind::Gauss => (0..=n)
                .map(|j| (PI * (n as f64 - 2.0 * j as f64) / (2.0 * (n as f64 + 1.0))).sin())
                .collect(),
        };
        Ok(Self { n, kind, nodes })
    }

    pub fn lobatto(n: usize) -> Result<Self> {
        Self::new(n, NodeKind::Lobatto)
    }

    pub fn gauss(n: usize) -> Result<Self> {
        Self::new(n, NodeKind::Gauss)
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Barycentric weights, in closed form for both families.
    pub fn barycentric_weights(&self) -> Vec<f64> {
        let n = self.n;
        (0..=n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                match self.kind {
                    NodeKind::Lobatto => {
                        if j == 0 || j == n {
                            0.5 * sign
                        } else {
                            sign
                        }
                    }
                    NodeKind::Gauss => {
                        sign * ((2 * j + 1) as f64 * PI / (2.0 * (n as f64 + 1.0))).sin()
                    }
                }
            })
            .collect()
    }

    /// Nodes mapped to `[a, b]` in ascending order: `x = a + (b - a)(1 - t)/2`.
    ///
    /// Because the reference nodes descend, physical nodes ascend with the
    /// same index. Derivatives pick up the factor `-2 / (b - a)`.
    pub fn mapped_nodes(&self, a: f64, b: f64) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|&t| a + (b - a) * (1.0 - t) / 2.0)
            .collect()
    }

    /// Maps a physical coordinate in `[a, b]` back to the reference interval.
    pub fn to_reference(a: f64, b: f64, x: f64) -> f64 {
        1.0 - 2.0 * (x - a) / (b - a)
    }
}

/// Builds the grid of the given family. Rejects `n = 0`.
pub fn cheb_nodes(n: usize, kind: NodeKind) -> Result<ChebGrid> {
    ChebGrid::new(n, kind)
}

/// Collocation differentiation matrix on a Chebyshev grid.
#[derive(Debug, Clone)]
pub struct DiffMatrix {
    pub matrix: Array2<f64>,
    pub grid: ChebGrid,
}

impl DiffMatrix {
    /// Differentiation with respect to the physical coordinate of `[a, b]`
    /// under the ascending map of [`ChebGrid::mapped_nodes`].
    pub fn physical(&self, a: f64, b: f64) -> Array2<f64> {
        &self.matrix * (-2.0 / (b - a))
    }
}

pub fn diff_matrix(grid: &ChebGrid) -> DiffMatrix {
    let x = grid.nodes();
    let w = grid.barycentric_weights();
    let m = x.len();
    let mut d = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        let mut diag = 0.0;
        for j in 0..m {
            if i != j {
                let v = (w[j] / w[i]) / (x[i] - x[j]);
                d[[i, j]] = v;
                diag -= v;
            }
        }
        // negative-sum trick keeps row sums at zero
        d[[i, i]] = diag;
    }
    DiffMatrix {
        matrix: d,
        grid: grid.clone(),
    }
}

/// Interpolatory quadrature weights on [-1, 1].
///
/// Clenshaw-Curtis on Lobatto grids, Fejer's first rule on Gauss grids.
/// Both are exact for polynomials of degree at most `n` and positive.
pub fn quad_weights(grid: &ChebGrid) -> Array1<f64> {
    let n = grid.degree();
    match grid.kind() {
        NodeKind::Lobatto => {
            let nf = n as f64;
            Array1::from_iter((0..=n).map(|j| {
                let theta = j as f64 * PI / nf;
                let mut s = 1.0;
                for m in 1..=n / 2 {
                    let b = if 2 * m == n { 1.0 } else { 2.0 };
                    s -= b * (2.0 * m as f64 * theta).cos() / (4.0 * (m * m) as f64 - 1.0);
                }
                let c = if j == 0 || j == n { 1.0 } else { 2.0 };
                c * s / nf
            }))
        }
        NodeKind::Gauss => {
            let count = n + 1;
            let nf = count as f64;
            Array1::from_iter((0..count).map(|j| {
                let theta = (2 * j + 1) as f64 * PI / (2.0 * nf);
                let mut s = 1.0;
                for m in 1..=count / 2 {
                    s -= 2.0 * (2.0 * m as f64 * theta).cos() / (4.0 * (m * m) as f64 - 1.0);
                }
                2.0 * s / nf
            }))
        }
    }
}

/// Barycentric interpolation from `from` to arbitrary reference points.
pub fn interp_to_points(from: &ChebGrid, points: &[f64]) -> Array2<f64> {
    let x = from.nodes();
    let w = from.barycentric_weights();
    let mut out = Array2::<f64>::zeros((points.len(), x.len()));
    for (r, &t) in points.iter().enumerate() {
        if let Some(j) = x.iter().position(|&xj| (t - xj).abs() < 1e-15) {
            out[[r, j]] = 1.0;
            continue;
        }
        let mut denom = 0.0;
        for j in 0..x.len() {
            let c = w[j] / (t - x[j]);
            out[[r, j]] = c;
            denom += c;
        }
        out.row_mut(r).mapv_inplace(|v| v / denom);
    }
    out
}

/// Interpolation matrix between two grids; exact for degree <= `from.degree()`.
pub fn interp_matrix(from: &ChebGrid, to: &ChebGrid) -> Array2<f64> {
    interp_to_points(from, to.nodes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn lobatto_and_gauss_small_grids() {
        let g = cheb_nodes(2, NodeKind::Lobatto).unwrap();
        assert_eq!(g.nodes(), &[1.0, 0.0, -1.0]);
        let g = cheb_nodes(1, NodeKind::Lobatto).unwrap();
        assert_eq!(g.nodes(), &[1.0, -1.0]);
        let g = cheb_nodes(1, NodeKind::Gauss).unwrap();
        let h = 2f64.sqrt() / 2.0;
        assert!(close(g.nodes()[0], h, 1e-15));
        assert!(close(g.nodes()[1], -h, 1e-15));
    }

    #[test]
    fn zero_degree_is_rejected() {
        assert!(matches!(
            cheb_nodes(0, NodeKind::Gauss),
            Err(Error::DegenerateGrid(0))
        ));
    }

    #[test]
    fn nodes_strictly_descending() {
        for kind in [NodeKind::Lobatto, NodeKind::Gauss] {
            for n in 1..30 {
                let g = cheb_nodes(n, kind).unwrap();
                assert!(g.nodes().windows(2).all(|w| w[0] > w[1]));
                assert!(g.nodes().iter().all(|x| x.abs() <= 1.0));
            }
        }
    }

    #[test]
    fn derivative_of_constants_and_identity() {
        for kind in [NodeKind::Lobatto, NodeKind::Gauss] {
            let g = cheb_nodes(9, kind).unwrap();
            let d = diff_matrix(&g).matrix;
            let x = Array1::from(g.nodes().to_vec());
            let ones = Array1::<f64>::ones(g.len());
            assert!(d.dot(&ones).iter().all(|v| v.abs() < 1e-12));
            assert!(d.dot(&x).iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn lobatto_three_point_weights() {
        let w = quad_weights(&cheb_nodes(2, NodeKind::Lobatto).unwrap());
        assert!(close(w[0], 1.0 / 3.0, 1e-15));
        assert!(close(w[1], 4.0 / 3.0, 1e-15));
        assert!(close(w[2], 1.0 / 3.0, 1e-15));
    }

    #[test]
    fn interpolation_to_same_grid_is_identity() {
        let g = cheb_nodes(7, NodeKind::Gauss).unwrap();
        let m = interp_matrix(&g, &g);
        assert_eq!(m, Array2::<f64>::eye(8));
    }

    #[test]
    fn physical_map_ascends() {
        let g = cheb_nodes(4, NodeKind::Lobatto).unwrap();
        let x = g.mapped_nodes(0.0, 2.0);
        assert!(close(x[0], 0.0, 1e-15) && close(x[4], 2.0, 1e-15));
        assert!(x.windows(2).all(|w| w[0] < w[1]));
    }
}
