//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use iti_core::domain::{Potential, Rect};
use iti_core::harness::checks::{merge_row, neumann_check, oracle_rows, ORACLE_FIELD_TOL, ORACLE_R_TOL};
use iti_core::harness::measure::{max_flux_defect, rel_diff, TwoBox};
use iti_core::harness::sweep::{
    sharpness_rows, small_k_rows, theorem_rows, C_MINUS_BAND, FIXED_K_TOL, SHARPNESS_EXPONENT,
    SMALL_K_RATIO, TWIN_TOL, W_FIT_TOL,
};
use iti_core::harness::{run_theorem_sweep, SweepConfig};
use iti_core::leaf::{boundary_l2, LeafBox, Resolution};
use iti_core::merge::w_residual;
use iti_core::probes::{complex_normal, random_separable, rng};
use iti_core::spectral::{diff_matrix, interp_matrix, quad_weights, ChebGrid, NodeKind};
use ndarray::Array1;

mod common;
use common::{cheb_integral, cheb_series, scale};

type Verdict = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_oracle() -> Verdict {
    let t = Instant::now();
    let rows = oracle_rows(5.0, 8, Resolution::square(24, 24)).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let field = rows.iter().map(|r| r.field_error).fold(0.0, f64::max);
    let r_err = rows.iter().map(|r| r.r_error).fold(0.0, f64::max);
    let per_n: Vec<String> = rows.iter().map(|r| format!("{:.1e}", r.field_error)).collect();
    let fine = oracle_rows(5.0, 8, Resolution::square(40, 32)).map_err(|e| e.to_string())?;
    let fine_field = fine.iter().map(|r| r.field_error).fold(0.0, f64::max);
    verdict(
        field < ORACLE_FIELD_TOL && r_err < ORACLE_R_TOL && secs < 10.0,
        format!(
            "n_int = 24: max field error {field:.2e} (per n: {}), max r_n error {r_err:.2e}, {secs:.1} s; \
             at (40, 32) field error {fine_field:.2e}",
            per_n.join(" ")
        ),
    )
}

fn c2_merge() -> Verdict {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_full: f64 = 0.0;
    for v in [Potential::Constant(1.0), Potential::Affine { a: 0.05, b: 0.0, c: 1.0 }] {
        for k in [1.0, 5.0, 10.0] {
            let row = merge_row(&v, k, Resolution::square(24, 24), 24, 0.1, 1.0).map_err(|e| e.to_string())?;
            worst = worst.max(row.rel_error);
            worst_full = worst_full.max(row.full_error);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-6 && secs < 60.0,
        format!(
            "max relative L2 gap on exact traces {worst:.2e}, {secs:.1} s \
             (unrestricted discrete norm {worst_full:.2e})"
        ),
    )
}

struct Sweep {
    cfg: SweepConfig,
    secs: f64,
    rows: Vec<iti_core::harness::sweep::SweepRow>,
    fits: iti_core::harness::sweep::SweepFits,
}

fn c3_bijectivity(s: &Sweep) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in &s.rows {
        let drift = rel_diff(r.gains.sigma_min, r.twin.sigma_min);
        ok &= r.gains.sigma_min > 0.0 && r.gains.sigma_min_l2 > 0.0 && drift <= TWIN_TOL;
        parts.push(format!("k={}: {:.3e} ({:.1e})", r.k, r.gains.sigma_min, drift));
    }
    verdict(ok, format!("sigma_min (twin drift) {}; sweep {:.1} s", parts.join(", "), s.secs))
}

fn c4_gains(s: &Sweep) -> Verdict {
    let f = &s.fits;
    let env = 3.0 * (1.0 + s.cfg.delta);
    verdict(
        f.c_minus_exponent.abs() <= C_MINUS_BAND
            && f.c_minus_floor > 0.0
            && f.c_plus_exponent >= -env
            && f.c_plus_scaled_floor > 0.0,
        format!(
            "c_minus exponent {:.4}, floor {:.3}; c_plus exponent {:.4} (>= -{env:.1}), scaled floor {:.3}",
            f.c_minus_exponent, f.c_minus_floor, f.c_plus_exponent, f.c_plus_scaled_floor
        ),
    )
}

fn c5_wnorm(s: &Sweep) -> Verdict {
    let f = &s.fits;
    let limit = 3.0 * (1.0 + s.cfg.delta) - 1.0;
    verdict(
        f.w_exponent <= limit + W_FIT_TOL,
        format!(
            "wnorm exponent {:.4} (<= {limit:.1} + {W_FIT_TOL}), max scaled {:.3}",
            f.w_exponent, f.w_scaled_max
        ),
    )
}

fn c6_sharpness() -> Verdict {
    let (rows, exponent) = sharpness_rows(&SweepConfig::default()).map_err(|e| e.to_string())?;
    let dev = rows
        .iter()
        .map(|r| (r.fixed_gain - r.fixed_reference).abs() / r.fixed_reference)
        .fold(0.0, f64::max);
    verdict(
        exponent <= SHARPNESS_EXPONENT && dev <= FIXED_K_TOL,
        format!(
            "|1 + r_n| exponent {exponent:.4} (<= {SHARPNESS_EXPONENT}) over n = 20..200; \
             fixed k = 2 max deviation from 2k/(n pi) {dev:.2e}"
        ),
    )
}

fn c7_small_k() -> Verdict {
    let rows = small_k_rows(&SweepConfig::default()).map_err(|e| e.to_string())?;
    let max = rows.iter().map(|r| r.wq_norm).fold(0.0, f64::max);
    let min = rows.iter().map(|r| r.wq_norm).fold(f64::INFINITY, f64::min);
    let vals: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.wq_norm)).collect();
    verdict(
        min > 0.0 && max / min < SMALL_K_RATIO,
        format!("wq_norm {} ratio {:.3}", vals.join(" "), max / min),
    )
}

fn c8_flux() -> Verdict {
    let mut worst: f64 = 0.0;
    for v in [Potential::Constant(1.0), Potential::Affine { a: 0.05, b: 0.0, c: 1.0 }] {
        let leaf = LeafBox::new(Rect::unit_square(), v, 5.0, Resolution::square(32, 24)).map_err(|e| e.to_string())?;
        worst = worst.max(max_flux_defect(&leaf, 20, &mut rng(8)).map_err(|e| e.to_string())?);
    }
    verdict(worst <= 1e-6, format!("max defect / |f|^2 over 20 probes {worst:.2e}"))
}

fn c9_neumann() -> Verdict {
    let out = neumann_check(&SweepConfig::default()).map_err(|e| e.to_string())?;
    verdict(
        out.report.passed(),
        format!(
            "{} modes, min boundary mass {:.4} (twin {:.4}), closed-form mismatch {:.2e}, {} rejected{}",
            out.rows.len(),
            out.min_trace,
            out.twin_min_trace,
            out.analytic_mismatch.unwrap_or(f64::NAN),
            out.rejected,
            if out.report.passed() { String::new() } else { format!(": {}", out.report.failures.join("; ")) }
        ),
    )
}

fn spectral_exactness() -> f64 {
    let mut g = rng(10);
    let mut worst: f64 = 0.0;
    for kind in [NodeKind::Lobatto, NodeKind::Gauss] {
        for n in 1..=32 {
            let grid = ChebGrid::new(n, kind).unwrap();
            let to = ChebGrid::new(n + 3, NodeKind::Gauss).unwrap();
            let c: Vec<f64> = (0..=n).map(|_| complex_normal(&mut g).re).collect();
            let sc = scale(&c);
            let p = Array1::from_iter(grid.nodes().iter().map(|&x| cheb_series(&c, x).0));
            let dp = diff_matrix(&grid).matrix.dot(&p);
            let ip = interp_matrix(&grid, &to).dot(&p);
            for (i, &x) in grid.nodes().iter().enumerate() {
                worst = worst.max((dp[i] - cheb_series(&c, x).1).abs() / sc);
            }
            for (i, &x) in to.nodes().iter().enumerate() {
                worst = worst.max((ip[i] - cheb_series(&c, x).0).abs() / sc);
            }
            let q = quad_weights(&grid).dot(&p);
            worst = worst.max((q - cheb_integral(&c)).abs() / sc);
        }
    }
    worst
}

fn isometry() -> Result<f64, String> {
    let v = Potential::Affine { a: 0.05, b: 0.0, c: 1.0 };
    let rect = Rect::unit_square();
    let mut worst: f64 = 0.0;
    for k in [1.0, 5.0, 10.0] {
        let leaf = LeafBox::new(rect, v.clone(), k, Resolution::square(32, 24)).map_err(|e| e.to_string())?;
        let r = leaf.iti_full().map_err(|e| e.to_string())?;
        for s in random_separable(&rect, &v, k, 20, &mut rng(12)).map_err(|e| e.to_string())? {
            let f = s.incoming(leaf.layout(), k);
            let a = boundary_l2(leaf.layout(), f.view());
            let b = boundary_l2(leaf.layout(), r.apply(f.view()).view());
            worst = worst.max((b - a).abs() / a);
        }
    }
    Ok(worst)
}

fn w_solve() -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    let mut g = rng(13);
    for k in [1.0, 5.0, 10.0] {
        let two = TwoBox::new(&Potential::Constant(1.0), k, Resolution::square(32, 24)).map_err(|e| e.to_string())?;
        let m = &two.merged;
        for _ in 0..20 {
            let x = Array1::from_shape_simple_fn(m.w.w.nrows(), || complex_normal(&mut g));
            worst = worst.max(w_residual(&m.w, &m.r1.matrix, &m.r2.matrix, &x));
        }
    }
    Ok(worst)
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism() -> Result<bool, String> {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut snaps = Vec::new();
    for d in &dirs {
        let cfg = SweepConfig::parse(&format!(
            "k_grid = 0.5, 2, 8\nn_int = 16\nn_b = 12\ntwin_n_int = 20\nsharpness_n = 20, 40\nout_dir = {}\n",
            d.path().display()
        ))
        .map_err(|e| e.to_string())?;
        run_theorem_sweep(&cfg).map_err(|e| e.to_string())?;
        snaps.push(snapshot(d.path()));
    }
    Ok(!snaps[0].is_empty() && snaps[0] == snaps[1])
}

fn c10_properties(started: Instant) -> Verdict {
    let spec = spectral_exactness();
    let iso = isometry()?;
    let wres = w_solve()?;
    let same = determinism()?;
    let secs = started.elapsed().as_secs_f64();
    verdict(
        spec <= 1e-12 && iso <= 1e-6 && wres <= 1e-10 && same && secs < 300.0,
        format!(
            "polynomial exactness {spec:.1e}, isometry {iso:.1e}, W residual {wres:.1e}, \
             bit-identical reruns {same}, suite time {secs:.0} s"
        ),
    )
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Verdict) -> bool {
    let t = Instant::now();
    let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let secs = t.elapsed().as_secs_f64();
    match &v {
        Ok(d) => println!("PASS criterion {id} ({name}): {d} [{secs:.1} s]"),
        Err(d) => println!("FAIL criterion {id} ({name}): {d} [{secs:.1} s]"),
    }
    v.is_ok()
}

fn main() {
    let started = Instant::now();
    let mut results = Vec::new();
    results.push(run(1, "oracle exactness", c1_oracle));
    results.push(run(2, "merge equivalence", c2_merge));

    let cfg = SweepConfig::default();
    let t = Instant::now();
    let sweep = theorem_rows(&cfg).map(|(rows, fits)| Sweep {
        cfg,
        secs: t.elapsed().as_secs_f64(),
        rows,
        fits,
    });
    let with_sweep = |f: fn(&Sweep) -> Verdict| -> Verdict {
        match &sweep {
            Ok(s) => f(s),
            Err(e) => Err(format!("sweep failed: {e}")),
        }
    };
    results.push(run(3, "interface bijectivity", || with_sweep(c3_bijectivity)));
    results.push(run(4, "interface gain envelopes", || with_sweep(c4_gains)));
    results.push(run(5, "merge operator envelope", || with_sweep(c5_wnorm)));
    results.push(run(6, "sharpness sequence", c6_sharpness));
    results.push(run(7, "small-k composition", c7_small_k));
    results.push(run(8, "flux identity", c8_flux));
    results.push(run(9, "Neumann boundary mass", c9_neumann));
    results.push(run(10, "property suites", || c10_properties(started)));

    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
