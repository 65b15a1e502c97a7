//! Neumann trace check, oracle validation, merge equivalence and operator
//! export.

use std::f64::consts::PI;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use ndarray::Array2;
use rayon::prelude::*;

use super::config::SweepConfig;
use super::measure::{
    check_nontrapping_at, check_pair_potential, flux_defect, left_rect, pair_rect, side_inner, TwoBox,
};
use super::{write_lines, Report, Table};
use crate::domain::{layout_transfer, reflect_potential, Potential, Rect, Side, DEFAULT_NONTRAPPING_SAMPLES};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_operator};
use crate::leaf::{BoundaryTrace, LeafBox, Resolution};
use crate::linalg::{to_complex, C64};
use crate::merge::iti_to_dtn;
use crate::neumann::{neumann_modes, unit_square_trace, NeumannMode, DEFAULT_RESIDUAL_TOL};
use crate::norms::{op_norm, op_norm_on_span, GramMatrix, NormKind};
use crate::oracle::{write_mode_table, ImpedanceMode};
use crate::probes::separable_family;

pub const ORACLE_FIELD_TOL: f64 = 1e-8;
pub const ORACLE_R_TOL: f64 = 1e-7;
pub const ORACLE_FLUX_TOL: f64 = 1e-7;
/// Source directions kept when restricting to the span of exact traces.
pub const SPAN_REL_TOL: f64 = 1e-8;
/// Largest `λπ⁻²` for which the analytic boundary masses are compared.
pub const ANALYTIC_LEVEL: usize = 32;
pub const ANALYTIC_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct NeumannRow {
    pub mode: NeumannMode,
    pub twin: Option<NeumannMode>,
}

#[derive(Debug, Clone, Default)]
pub struct NeumannOutcome {
    pub rows: Vec<NeumannRow>,
    pub min_trace: f64,
    pub twin_min_trace: f64,
    /// Largest deviation from the closed-form masses, for constant `V`.
    pub analytic_mismatch: Option<f64>,
    pub rejected: usize,
    pub report: Report,
}

/// Pairs `(m, n)` with `m² + n² = level`.
fn lattice_pairs(level: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut m = 0;
    while m * m <= level {
        let rest = level - m * m;
        let n = (rest as f64).sqrt().round() as usize;
        if n * n == rest {
            out.push((m, n));
        }
        m += 1;
    }
    out
}

/// Largest deviation of each cluster's boundary masses from the values for
/// `V ≡ c` on the unit square, over clusters with `λc/π² <= ANALYTIC_LEVEL`.
pub fn analytic_mismatch(modes: &[NeumannMode], c: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < modes.len() {
        let cl = modes[i].cluster;
        let group: Vec<&NeumannMode> = modes[i..].iter().take_while(|m| m.cluster == cl).collect();
        i += group.len();
        let level = group[0].lambda * c / (PI * PI);
        let s = level.round();
        if s > ANALYTIC_LEVEL as f64 + 0.5 {
            continue;
        }
        if (level - s).abs() > 1e-6 * (1.0 + s) {
            return f64::INFINITY;
        }
        let mut want: Vec<f64> = lattice_pairs(s as usize)
            .into_iter()
            .map(|(m, n)| unit_square_trace(m, n) / c)
            .collect();
        want.sort_by(f64::total_cmp);
        if want.len() != group.len() {
            // a truncated final cluster is skipped
            if i >= modes.len() {
                continue;
            }
            return f64::INFINITY;
        }
        let mut got: Vec<f64> = group.iter().map(|m| m.trace_sq).collect();
        got.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

pub fn neumann_check(cfg: &SweepConfig) -> Result<NeumannOutcome> {
    let rect = Rect::unit_square();
    cfg.potential.check_nonnegative(&rect, DEFAULT_NONTRAPPING_SAMPLES)?;
    check_nontrapping_at(&cfg.potential, &rect, (1.0, 0.0))?;
    let m = cfg.neumann_modes;
    let (base, twin) = rayon::join(
        || neumann_modes(&rect, &cfg.potential, cfg.neumann_degree, m, Side::East, DEFAULT_RESIDUAL_TOL),
        || neumann_modes(&rect, &cfg.potential, cfg.neumann_twin_degree, m, Side::East, DEFAULT_RESIDUAL_TOL),
    );
    let (base, twin) = (base?, twin?);
    let mut out = NeumannOutcome {
        rejected: base.rejected,
        ..Default::default()
    };
    let first = |modes: &[NeumannMode]| {
        modes
            .iter()
            .take(m)
            .map(|x| x.trace_sq)
            .fold(f64::INFINITY, f64::min)
    };
    out.min_trace = first(&base.modes);
    out.twin_min_trace = first(&twin.modes);
    out.rows = base
        .modes
        .iter()
        .take(m)
        .enumerate()
        .map(|(i, md)| NeumannRow {
            mode: md.clone(),
            twin: twin.modes.get(i).cloned(),
        })
        .collect();
    if base.modes.len() < m {
        out.report
            .failures
            .push(format!("only {} of {m} modes converged", base.modes.len()));
    }
    if !(out.min_trace >= cfg.neumann_threshold) {
        out.report.failures.push(format!(
            "min boundary mass {:.6} below {}",
            out.min_trace, cfg.neumann_threshold
        ));
    }
    if let Potential::Constant(c) = cfg.potential {
        let mm = analytic_mismatch(&base.modes, c);
        if !(mm <= ANALYTIC_TOL) {
            out.report
                .failures
                .push(format!("closed-form boundary masses missed by {mm:.3e}"));
        }
        out.analytic_mismatch = Some(mm);
    }
    out.report.name = "neumann".into();
    Ok(out)
}

/// Writes `neumann.csv` and `neumann_summary.txt`.
pub fn run_neumann_trace_check(cfg: &SweepConfig) -> Result<NeumannOutcome> {
    cfg.validate()?;
    let out = neumann_check(cfg)?;
    let mut t = Table::new(&[
        "index",
        "lambda",
        "trace_sq",
        "cluster",
        "pde_residual",
        "bc_residual",
        "twin_lambda",
        "twin_trace_sq",
    ]);
    for (i, r) in out.rows.iter().enumerate() {
        let (tl, tt) = r
            .twin
            .as_ref()
            .map(|t| (fmt_f64(t.lambda), fmt_f64(t.trace_sq)))
            .unwrap_or_default();
        t.push(vec![
            i.to_string(),
            fmt_f64(r.mode.lambda),
            fmt_f64(r.mode.trace_sq),
            r.mode.cluster.to_string(),
            fmt_f64(r.mode.pde_residual),
            fmt_f64(r.mode.bc_residual),
            tl,
            tt,
        ]);
    }
    t.write(&cfg.out_dir.join("neumann.csv"))?;
    let mut lines = vec![
        format!("min_trace = {}", fmt_f64(out.min_trace)),
        format!("twin_min_trace = {}", fmt_f64(out.twin_min_trace)),
        format!("rejected = {}", out.rejected),
    ];
    if let Some(mm) = out.analytic_mismatch {
        lines.push(format!("analytic_mismatch = {}", fmt_f64(mm)));
    }
    write_lines(&cfg.out_dir.join("neumann_summary.txt"), &lines)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub k: f64,
    pub n: usize,
    pub lambda: C64,
    pub r: C64,
    /// Max nodal error of the leaf field over max `|u|`.
    pub field_error: f64,
    /// `‖Rw - r w‖ / ‖w‖` on the East side.
    pub r_error: f64,
    pub flux_defect: f64,
    /// `|‖Rf‖² - ‖f‖²| / ‖f‖²` over the full boundary.
    pub isometry_defect: f64,
}

/// Leaf solutions on the unit square with `V ≡ 1` against the separated
/// modes `n = 1..=n_max`.
pub fn oracle_rows(k: f64, n_max: usize, res: Resolution) -> Result<Vec<OracleRow>> {
    let leaf = LeafBox::new(Rect::unit_square(), Potential::Constant(1.0), k, res)?;
    let layout = leaf.layout().clone();
    (1..=n_max)
        .into_par_iter()
        .map(|n| {
            let mode = ImpedanceMode::new(k, n)?;
            let g = BoundaryTrace::from_fn(&layout, |side, _, y| {
                if side == Side::East {
                    mode.w(y)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            let sol = leaf.solve_impedance(&g, None)?;
            let (xs, ys) = leaf.grid();
            let mut err: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                for (j, &y) in ys.iter().enumerate() {
                    let exact = mode.u(x, y)?;
                    err = err.max((sol.values[[i, j]] - exact).norm());
                    scale = scale.max(exact.norm());
                }
            }
            let r = mode.r()?;
            let out = sol.outgoing(k);
            let diff = &out - &g.values.mapv(|w| w * r);
            let r_error = side_inner(&layout, &diff, &diff, Side::East, true).re.sqrt()
                / side_inner(&layout, &g.values, &g.values, Side::East, true).re.sqrt();
            let gin: f64 = crate::leaf::boundary_l2(&layout, g.values.view()).powi(2);
            let gout: f64 = crate::leaf::boundary_l2(&layout, out.view()).powi(2);
            Ok(OracleRow {
                k,
                n,
                lambda: mode.lambda,
                r,
                field_error: err / scale,
                r_error,
                flux_defect: flux_defect(&leaf, Side::East, &g.values)?,
                isometry_defect: (gout - gin).abs() / gin,
            })
        })
        .collect()
}

pub fn oracle_failures(rows: &[OracleRow]) -> Vec<String> {
    let mut out = Vec::new();
    let checks: [(&str, f64, fn(&OracleRow) -> f64); 3] = [
        ("field error", ORACLE_FIELD_TOL, |r| r.field_error),
        ("r_n error", ORACLE_R_TOL, |r| r.r_error),
        ("flux defect", ORACLE_FLUX_TOL, |r| r.flux_defect),
    ];
    for (name, tol, get) in checks {
        let worst = rows.iter().max_by(|a, b| get(a).total_cmp(&get(b)));
        if let Some(w) = worst {
            if !(get(w) < tol) {
                out.push(format!(
                    "{name} {:.3e} >= {tol:e}, worst at k = {}, n = {}",
                    get(w),
                    w.k,
                    w.n
                ));
            }
        }
    }
    out
}

/// Writes `oracle.csv` and `modes.csv`.
pub fn run_oracle_validation(cfg: &SweepConfig) -> Result<(Vec<OracleRow>, Report)> {
    cfg.validate()?;
    let res = Resolution::square(cfg.n_int, cfg.n_b);
    let mut rows = Vec::new();
    for &k in &cfg.oracle_k_grid {
        rows.extend(oracle_rows(k, cfg.oracle_n_max, res).map_err(|e| Error::AtWavenumber {
            k,
            source: Box::new(e),
        })?);
    }
    let mut t = Table::new(&[
        "k",
        "n",
        "lambda_re",
        "lambda_im",
        "r_re",
        "r_im",
        "field_error",
        "r_error",
        "flux_defect",
        "isometry_defect",
    ]);
    for r in &rows {
        t.push(vec![
            fmt_f64(r.k),
            r.n.to_string(),
            fmt_f64(r.lambda.re),
            fmt_f64(r.lambda.im),
            fmt_f64(r.r.re),
            fmt_f64(r.r.im),
            fmt_f64(r.field_error),
            fmt_f64(r.r_error),
            fmt_f64(r.flux_defect),
            fmt_f64(r.isometry_defect),
        ]);
    }
    t.write(&cfg.out_dir.join("oracle.csv"))?;
    let mut w = BufWriter::new(File::create(cfg.out_dir.join("modes.csv"))?);
    write_mode_table(&mut w, &cfg.oracle_k_grid, cfg.oracle_n_max)?;
    let report = Report {
        name: "oracle".into(),
        failures: oracle_failures(&rows),
    };
    Ok((rows, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeRow {
    pub k: f64,
    /// Relative L² gap between merged and direct operators on the span of
    /// exact separable traces.
    pub rel_error: f64,
    /// The same gap over all discrete data.
    pub full_error: f64,
    pub sigma_min: f64,
    pub sigma_min_l2: f64,
    /// `sup |V₂ - V₁|` on the unit square.
    pub v_diff: f64,
    /// `ε (1+k)^{-3(1+δ)}`.
    pub envelope: f64,
    pub difference_ok: bool,
}

/// Merged `[0,1]²` and `[1,2]×[0,1]` against one collocation solve on
/// `[0,2]×[0,1]` with twice the x degree.
pub fn merge_row(v: &Potential, k: f64, res: Resolution, etas: usize, delta: f64, epsilon: f64) -> Result<MergeRow> {
    let two = TwoBox::new(v, k, res)?;
    let gains = two.gains()?;
    let big = pair_rect();
    let direct = LeafBox::new(
        big,
        v.clone(),
        k,
        Resolution {
            n_x: 2 * res.n_x,
            n_y: res.n_y,
            n_b: res.n_b,
        },
    )?
    .iti_full()?;
    let merged = &two.merged.parent.op;
    let p = to_complex(&layout_transfer(&direct.source, &merged.source)?);
    let e: Array2<C64> = merged.matrix.dot(&p) - p.dot(&direct.matrix);
    let gd = GramMatrix::for_layout(&direct.source, NormKind::L2)?;
    let gm = GramMatrix::for_layout(&merged.source, NormKind::L2)?;
    let fam = separable_family(&big, v, k, etas)?;
    let mut span = Array2::<C64>::zeros((direct.source.len(), fam.len()));
    for (j, s) in fam.iter().enumerate() {
        span.column_mut(j).assign(&s.incoming(&direct.source, k));
    }
    let en = op_norm_on_span(e.view(), span.view(), &gd, &gm, SPAN_REL_TOL)?;
    let rn = op_norm_on_span(direct.matrix.view(), span.view(), &gd, &gd, SPAN_REL_TOL)?;
    let full = op_norm(e.view(), &gd, &gm)? / op_norm(direct.matrix.view(), &gd, &gd)?;
    let v_diff = v.sup_distance(&reflect_potential(v), &left_rect(), DEFAULT_NONTRAPPING_SAMPLES);
    let envelope = epsilon * (1.0 + k).powf(-3.0 * (1.0 + delta));
    Ok(MergeRow {
        k,
        rel_error: en / rn,
        full_error: full,
        sigma_min: gains.sigma_min,
        sigma_min_l2: gains.sigma_min_l2,
        v_diff,
        envelope,
        difference_ok: v_diff <= envelope,
    })
}

pub fn merge_failures(rows: &[MergeRow], tol: f64) -> Vec<String> {
    let mut out = Vec::new();
    for r in rows {
        if !(r.rel_error <= tol) {
            out.push(format!("k = {}: merged vs direct {:.3e} > {tol:e}", r.k, r.rel_error));
        }
        if !(r.sigma_min > 0.0 && r.sigma_min_l2 > 0.0) {
            out.push(format!("k = {}: interface system singular", r.k));
        }
    }
    out
}

/// Writes `merge_check.csv`.
pub fn run_merge_equivalence(cfg: &SweepConfig) -> Result<(Vec<MergeRow>, Report)> {
    cfg.validate()?;
    check_pair_potential(&cfg.potential)?;
    let res = Resolution::square(cfg.n_int, cfg.n_b);
    let rows = cfg
        .merge_k_grid
        .par_iter()
        .map(|&k| {
            merge_row(&cfg.potential, k, res, cfg.merge_etas, cfg.delta, cfg.epsilon).map_err(|e| {
                Error::AtWavenumber {
                    k,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(&[
        "k",
        "rel_error",
        "full_error",
        "sigma_min",
        "sigma_min_l2",
        "v_diff",
        "envelope",
        "difference_ok",
    ]);
    for r in &rows {
        t.push(vec![
            fmt_f64(r.k),
            fmt_f64(r.rel_error),
            fmt_f64(r.full_error),
            fmt_f64(r.sigma_min),
            fmt_f64(r.sigma_min_l2),
            fmt_f64(r.v_diff),
            fmt_f64(r.envelope),
            r.difference_ok.to_string(),
        ]);
    }
    t.write(&cfg.out_dir.join("merge_check.csv"))?;
    let report = Report {
        name: "merge-check".into(),
        failures: merge_failures(&rows, cfg.merge_tol),
    };
    Ok((rows, report))
}

/// Writes the full-boundary ItI and DtN operators of the unit square for
/// every `k` in the grid, plus `dtn_index.csv`.
pub fn export_dtn(cfg: &SweepConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let res = Resolution::square(cfg.n_int, cfg.n_b);
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut files = Vec::new();
    let mut t = Table::new(&["k", "iti_file", "dtn_file", "dim"]);
    for &k in &cfg.k_grid {
        let leaf = LeafBox::new(Rect::unit_square(), cfg.potential.clone(), k, res)?;
        let r = leaf.iti_full()?;
        let dtn = iti_to_dtn(&r, None).map_err(|e| Error::AtWavenumber {
            k,
            source: Box::new(e),
        })?;
        let names = [format!("iti_k{k}.iti"), format!("dtn_k{k}.iti")];
        for (name, m) in names.iter().zip([&r.matrix, &dtn]) {
            let path = cfg.out_dir.join(name);
            let mut w = BufWriter::new(File::create(&path)?);
            write_operator(&mut w, m)?;
            files.push(path);
        }
        t.push(vec![fmt_f64(k), names[0].clone(), names[1].clone(), r.matrix.nrows().to_string()]);
    }
    t.write(&cfg.out_dir.join("dtn_index.csv"))?;
    Ok(files)
}
