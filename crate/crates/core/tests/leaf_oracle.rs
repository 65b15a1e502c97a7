use std::f64::consts::PI;

use iti_core::domain::{BoundaryLayout, Potential, Rect, Side};
use iti_core::harness::checks::oracle_rows;
use iti_core::leaf::{boundary_l2, BoundaryTrace, ItIOperator, LeafBox, Resolution};
use iti_core::linalg::{eye, C64, I};
use iti_core::merge::iti_to_dtn;
use iti_core::oracle::{find_lambda, ImpedanceMode};
use iti_core::probes::{random_separable, rng, SeparableSolution};
use iti_core::spectral::quad_weights;
use iti_core::Error;
use ndarray::Array1;

/// `(λ+k)² e^{iλ} - (λ-k)² e^{-iλ}` and its derivative. Zeros away from
/// the origin are the impedance eigenvalues.
fn dispersion(k: f64, z: C64) -> (C64, C64) {
    let (p, m) = ((I * z).exp(), (-I * z).exp());
    let (a, b) = (z + k, z - k);
    let g = a * a * p - b * b * m;
    let dg = 2.0 * a * p + I * a * a * p - 2.0 * b * m + I * b * b * m;
    (g, dg)
}

/// Zero count and first moment of the zeros inside a circle, by the
/// trapezoidal rule on `∮ z^j G'/G dz / 2πi`.
fn contour_moments(k: f64, center: C64, radius: f64, points: usize) -> (C64, C64) {
    let mut m0 = C64::new(0.0, 0.0);
    let mut m1 = C64::new(0.0, 0.0);
    for j in 0..points {
        let t = 2.0 * PI * j as f64 / points as f64;
        let e = (I * t).exp();
        let z = center + radius * e;
        let dz = I * radius * e;
        let (g, dg) = dispersion(k, z);
        let f = dg / g * dz;
        m0 += f;
        m1 += z * f;
    }
    let scale = 1.0 / (I * points as f64);
    (m0 * scale, m1 * scale)
}

#[test]
fn impedance_eigenvalues_agree_with_contour_integrals() {
    for &k in &[0.5, 5.0, 20.0] {
        for n in 1..=6 {
            let lambda = find_lambda(k, n).unwrap();
            let (count, first) = contour_moments(k, lambda, 0.5, 2000);
            assert!((count - 1.0).norm() < 1e-9, "k = {k}, n = {n}: count {count}");
            assert!((first - lambda).norm() < 1e-10 * lambda.norm(), "k = {k}, n = {n}");
            assert!(lambda.im > 0.0);
            assert!((lambda.re - n as f64 * PI).abs() <= PI);
        }
    }
}

#[test]
fn third_eigenvalue_at_k5_is_isolated() {
    let k = 5.0;
    let lambda = find_lambda(k, 3).unwrap();
    // the disc avoids the trivial root at the origin and the neighbours
    let (count, first) = contour_moments(k, C64::new(3.0 * PI, lambda.im), 1.2, 2000);
    assert!((count - 1.0).norm() < 1e-9, "count {count}");
    assert!((first - lambda).norm() < 1e-10);
    assert!(dispersion(k, C64::new(0.0, 0.0)).0.norm() < 1e-14);
}

#[test]
fn leaf_reproduces_modes_at_fine_resolution() {
    let rows = oracle_rows(5.0, 8, Resolution { n_x: 40, n_y: 40, n_b: 32 }).unwrap();
    for r in &rows {
        assert!(r.field_error < 1e-10, "n = {}: field {:e}", r.n, r.field_error);
        assert!(r.r_error < 1e-10, "n = {}: r {:e}", r.n, r.r_error);
        assert!(r.flux_defect < 1e-8, "n = {}: flux {:e}", r.n, r.flux_defect);
        assert!(r.isometry_defect < 1e-7, "n = {}: isometry {:e}", r.n, r.isometry_defect);
    }
}

#[test]
fn low_modes_are_exact_at_moderate_resolution() {
    let rows = oracle_rows(5.0, 4, Resolution::square(24, 24)).unwrap();
    for r in &rows {
        assert!(r.field_error < 1e-12, "n = {}: {:e}", r.n, r.field_error);
    }
}

#[test]
fn field_evaluates_between_nodes() {
    let k = 3.0;
    let leaf = LeafBox::new(Rect::unit_square(), Potential::Constant(1.0), k, Resolution::square(32, 28)).unwrap();
    let mode = ImpedanceMode::new(k, 2).unwrap();
    let g = BoundaryTrace::from_fn(leaf.layout(), |side, _, y| {
        if side == Side::East {
            mode.w(y)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let sol = leaf.solve_impedance(&g, None).unwrap();
    for &(x, y) in &[(0.37, 0.61), (0.9, 0.05), (0.02, 0.98)] {
        let err = (leaf.eval(&sol.values, x, y) - mode.u(x, y).unwrap()).norm();
        assert!(err < 1e-10, "({x}, {y}): {err:e}");
    }
}

fn trace(sol: &SeparableSolution, layout: &BoundaryLayout) -> (Array1<C64>, Array1<C64>) {
    let mut u = Array1::zeros(layout.len());
    let mut dn = Array1::zeros(layout.len());
    let mut i = 0;
    for panel in layout.panels() {
        let (nx, ny) = panel.side.normal();
        for (x, y) in panel.points() {
            let (v, vx, vy) = sol.eval(x, y);
            u[i] = v;
            dn[i] = vx * nx + vy * ny;
            i += 1;
        }
    }
    (u, dn)
}

fn bilinear(layout: &BoundaryLayout, a: &Array1<C64>, b: &Array1<C64>) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (p, panel) in layout.panels().iter().enumerate() {
        let w = quad_weights(&panel.grid) * (panel.length() / 2.0);
        for (wi, idx) in w.iter().zip(layout.panel_range(p)) {
            acc += *wi * a[idx] * b[idx];
        }
    }
    acc
}

#[test]
fn full_iti_maps_exact_incoming_to_exact_outgoing() {
    let v = Potential::Affine { a: 0.1, b: 0.0, c: 1.0 };
    let rect = Rect::unit_square();
    for &k in &[1.0, 5.0, 10.0] {
        let leaf = LeafBox::new(rect, v.clone(), k, Resolution::square(32, 24)).unwrap();
        let r = leaf.iti_full().unwrap();
        let mut g = rng(11);
        for sol in random_separable(&rect, &v, k, 20, &mut g).unwrap() {
            let f = sol.incoming(leaf.layout(), k);
            let out = r.apply(f.view());
            let exact = sol.outgoing(leaf.layout(), k);
            let nf = boundary_l2(leaf.layout(), f.view());
            let err = boundary_l2(leaf.layout(), (&out - &exact).view());
            assert!(err < 1e-8 * nf, "k = {k}, eta = {}: {err:e}", sol.eta);
            let gain = boundary_l2(leaf.layout(), out.view()) / nf;
            assert!((gain - 1.0).abs() < 1e-6, "k = {k}: gain {gain}");
        }
    }
}

#[test]
fn dtn_maps_dirichlet_to_neumann_traces() {
    let v = Potential::Affine { a: -0.2, b: 0.0, c: 1.0 };
    let rect = Rect::new(0.0, 1.0, 0.0, 1.0).unwrap();
    let k = 4.0;
    let leaf = LeafBox::new(rect, v.clone(), k, Resolution::square(32, 28)).unwrap();
    let dtn = iti_to_dtn(&leaf.iti_full().unwrap(), None).unwrap();
    let layout = leaf.layout();
    let mut g = rng(3);
    let sols = random_separable(&rect, &v, k, 8, &mut g).unwrap();
    for s in &sols {
        let (u, dn) = trace(s, layout);
        let err = boundary_l2(layout, (&dtn.dot(&u) - &dn).view());
        let scale = boundary_l2(layout, dn.view()) + k * boundary_l2(layout, u.view());
        assert!(err < 1e-7 * scale, "eta = {}: {err:e}", s.eta);
    }
    // Green's identity: the DtN form is symmetric on traces of solutions
    for a in &sols {
        for b in &sols {
            let (ua, _) = trace(a, layout);
            let (ub, _) = trace(b, layout);
            let ab = bilinear(layout, &dtn.dot(&ua), &ub);
            let ba = bilinear(layout, &dtn.dot(&ub), &ua);
            let scale = boundary_l2(layout, dtn.dot(&ua).view()) * boundary_l2(layout, ub.view());
            assert!((ab - ba).norm() < 1e-7 * scale);
        }
    }
}

#[test]
fn dtn_of_a_mode_is_its_eigenvalue_on_the_east_side() {
    let k = 5.0;
    let leaf = LeafBox::new(Rect::unit_square(), Potential::Constant(1.0), k, Resolution::square(40, 32)).unwrap();
    let dtn = iti_to_dtn(&leaf.iti_full().unwrap(), None).unwrap();
    let layout = leaf.layout();
    for n in 1..=4 {
        let mode = ImpedanceMode::new(k, n).unwrap();
        let u = BoundaryTrace::from_fn(layout, |_, x, y| mode.u(x, y).unwrap());
        let out = dtn.dot(&u.values);
        let east = layout.indices_of(&layout.panels_on(Side::East));
        let lam = mode.dtn().unwrap();
        for &i in &east {
            assert!((out[i] - lam * u.values[i]).norm() < 1e-8 * (1.0 + lam.norm()), "n = {n}");
        }
    }
}

#[test]
fn dtn_refuses_resonant_operators() {
    let layout = BoundaryLayout::per_side(&Rect::unit_square(), 4).unwrap();
    let n = layout.len();
    let r = ItIOperator::new(eye(n), 1.0, layout.clone(), layout).unwrap();
    assert!(matches!(iti_to_dtn(&r, None), Err(Error::DtnNearResonant { .. })));
}

#[test]
fn elliptic_ratio_is_grid_stable() {
    let v = Potential::Constant(1.0);
    let rect = Rect::unit_square();
    for &k in &[2.0, 8.0] {
        let mut ratios = Vec::new();
        for n in [28, 36] {
            let leaf = LeafBox::new(rect, v.clone(), k, Resolution::square(n, 24)).unwrap();
            let s = SeparableSolution::new(&v, k, 0.0, 1.0, 1.5, C64::new(1.0, 0.0), C64::new(0.0, k)).unwrap();
            let g = BoundaryTrace::new(leaf.layout().clone(), s.incoming(leaf.layout(), k)).unwrap();
            let sol = leaf.solve_impedance(&g, None).unwrap();
            ratios.push(leaf.elliptic_ratio(&sol, &g, None));
        }
        assert!(ratios.iter().all(|r| r.is_finite() && *r > 0.0));
        assert!((ratios[0] - ratios[1]).abs() < 1e-3 * ratios[1], "k = {k}: {ratios:?}");
    }
}
