//! Per-k sweeps over the two-box configuration, the high-frequency mode
//! sequence and the small-k composition check.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::config::{Experiment, SweepConfig};
use super::measure::{check_pair_potential, fit_exponent, max_flux_defect, rel_diff, trace_ratios, Gains, TwoBox};
use super::{Report, Table};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::leaf::Resolution;
use crate::linalg::C64;
use crate::oracle::{sharpness_sequence, ImpedanceMode};
use crate::probes::rng;

/// Largest relative drift between the two resolutions for `converged`.
pub const TWIN_TOL: f64 = 0.01;
/// Required decay exponent of `|1 + r_n|` along the mode sequence.
pub const SHARPNESS_EXPONENT: f64 = -0.45;
/// Allowed relative deviation of `|1 - r_n|` from `2k/(nπ)`.
pub const FIXED_K_TOL: f64 = 0.05;
/// Allowed slack on the fitted growth exponent of `‖W‖`.
pub const W_FIT_TOL: f64 = 0.1;
/// Band for the fitted exponent of `c_minus`.
pub const C_MINUS_BAND: f64 = 0.05;
/// Largest allowed max/min ratio of `‖WQ₁‖` over the small-k grid.
pub const SMALL_K_RATIO: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: f64,
    pub gains: Gains,
    pub twin: Gains,
    pub flux_defect: f64,
    pub dn_ratio: f64,
    pub trace_ratio: f64,
    /// `c_plus (1+k)^{3(1+δ)}`.
    pub c_plus_scaled: f64,
    /// `‖W‖ k (1+k)^{-3(1+δ)}`.
    pub w_scaled: f64,
    pub drift: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFits {
    pub c_minus_exponent: f64,
    pub c_minus_floor: f64,
    pub c_plus_exponent: f64,
    pub c_plus_scaled_floor: f64,
    pub w_exponent: f64,
    pub w_scaled_max: f64,
    pub wq_exponent: f64,
    pub sigma_exponent: f64,
    pub dn_ratio_max: f64,
    pub trace_ratio_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallKRow {
    pub k: f64,
    pub wq_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpnessRow {
    pub n: usize,
    pub k: f64,
    /// `|1 + r_n|` at `k_n`.
    pub ratio: f64,
    /// `|1 - r_n|` at the fixed `k`.
    pub fixed_gain: f64,
    /// `2k/(nπ)` at the fixed `k`.
    pub fixed_reference: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub fits: Option<SweepFits>,
    pub small_k: Vec<SmallKRow>,
    pub sharpness: Vec<SharpnessRow>,
    pub sharpness_exponent: Option<f64>,
    pub report: Report,
}

/// Gains at one `k` with its refinement twin and probe ratios.
pub fn sweep_row(cfg: &SweepConfig, k: f64, seed: u64) -> Result<SweepRow> {
    let base = TwoBox::new(&cfg.potential, k, Resolution::square(cfg.n_int, cfg.n_b))?;
    let gains = base.gains()?;
    let twin = TwoBox::new(&cfg.potential, k, Resolution::square(cfg.twin_n_int, cfg.n_b))?.gains()?;
    let mut r = rng(seed);
    let flux_defect = max_flux_defect(&base.left, cfg.probes, &mut r)?;
    let (dn_ratio, trace_ratio) = trace_ratios(&base.left, cfg.delta, cfg.probes, &mut r)?;
    let env = (1.0 + k).powf(3.0 * (1.0 + cfg.delta));
    let drift = gains.as_array()[..5]
        .iter()
        .zip(&twin.as_array()[..5])
        .map(|(a, b)| rel_diff(*a, *b))
        .fold(0.0, f64::max);
    Ok(SweepRow {
        k,
        gains,
        twin,
        flux_defect,
        dn_ratio,
        trace_ratio,
        c_plus_scaled: gains.c_plus * env,
        w_scaled: gains.wnorm * k / env,
        drift,
        converged: drift <= TWIN_TOL,
    })
}

fn fits(cfg: &SweepConfig, rows: &[SweepRow]) -> Result<SweepFits> {
    let start = cfg.window_start(rows.len());
    let win = &rows[start..];
    let ks: Vec<f64> = win.iter().map(|r| r.k).collect();
    let fit = |f: &dyn Fn(&SweepRow) -> f64| -> Result<f64> {
        Ok(fit_exponent(&ks, &win.iter().map(f).collect::<Vec<_>>())?.0)
    };
    let min = |f: &dyn Fn(&SweepRow) -> f64| rows.iter().map(f).fold(f64::INFINITY, f64::min);
    let max = |f: &dyn Fn(&SweepRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    Ok(SweepFits {
        c_minus_exponent: fit(&|r| r.gains.c_minus)?,
        c_minus_floor: min(&|r| r.gains.c_minus),
        c_plus_exponent: fit(&|r| r.gains.c_plus)?,
        c_plus_scaled_floor: min(&|r| r.c_plus_scaled),
        w_exponent: fit(&|r| r.gains.wnorm)?,
        w_scaled_max: max(&|r| r.w_scaled),
        wq_exponent: fit(&|r| r.gains.wq_norm)?,
        sigma_exponent: fit(&|r| r.gains.sigma_min)?,
        dn_ratio_max: max(&|r| r.dn_ratio),
        trace_ratio_max: max(&|r| r.trace_ratio),
    })
}

/// Theorem rows plus fits, without writing files.
pub fn theorem_rows(cfg: &SweepConfig) -> Result<(Vec<SweepRow>, SweepFits)> {
    check_pair_potential(&cfg.potential)?;
    let rows = cfg
        .k_grid
        .par_iter()
        .enumerate()
        .map(|(i, &k)| {
            sweep_row(cfg, k, cfg.seed.wrapping_add(i as u64)).map_err(|e| Error::AtWavenumber {
                k,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let f = fits(cfg, &rows)?;
    Ok((rows, f))
}

/// `‖WQ₁‖` on the small-k grid at the base resolution.
pub fn small_k_rows(cfg: &SweepConfig) -> Result<Vec<SmallKRow>> {
    check_pair_potential(&cfg.potential)?;
    cfg.small_k_grid
        .par_iter()
        .map(|&k| {
            let g = TwoBox::new(&cfg.potential, k, Resolution::square(cfg.n_int, cfg.n_b))?.gains()?;
            Ok(SmallKRow { k, wq_norm: g.wq_norm })
        })
        .collect()
}

/// `|1 + r_n|` along `k + k^α = nπ` and `|1 - r_n|` at the fixed `k`.
pub fn sharpness_rows(cfg: &SweepConfig) -> Result<(Vec<SharpnessRow>, f64)> {
    let (lo, hi) = cfg.sharpness_n;
    let rows = (lo..=hi)
        .into_par_iter()
        .map(|n| {
            let p = sharpness_sequence(cfg.sharpness_alpha, n)?;
            let fixed = ImpedanceMode::new(cfg.sharpness_fixed_k, n)?;
            let r = fixed.r()?;
            Ok(SharpnessRow {
                n,
                k: p.k,
                ratio: p.ratio,
                fixed_gain: (C64::new(1.0, 0.0) - r).norm(),
                fixed_reference: 2.0 * cfg.sharpness_fixed_k / (n as f64 * PI),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ks: Vec<f64> = rows.iter().map(|r| r.k).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let (exp, _) = fit_exponent(&ks, &ys)?;
    Ok((rows, exp))
}

fn gains_cells(g: &Gains) -> Vec<String> {
    g.as_array().iter().map(|&v| fmt_f64(v)).collect()
}

fn theorem_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(&[
        "k",
        "c_minus",
        "c_plus",
        "wnorm",
        "wq_norm",
        "sigma_min",
        "sigma_min_l2",
        "twin_c_minus",
        "twin_c_plus",
        "twin_wnorm",
        "twin_wq_norm",
        "twin_sigma_min",
        "twin_sigma_min_l2",
        "flux_defect",
        "dn_ratio",
        "trace_ratio",
        "c_plus_scaled",
        "w_scaled",
        "drift",
        "converged",
    ]);
    for r in rows {
        let mut cells = vec![fmt_f64(r.k)];
        cells.extend(gains_cells(&r.gains));
        cells.extend(gains_cells(&r.twin));
        for v in [r.flux_defect, r.dn_ratio, r.trace_ratio, r.c_plus_scaled, r.w_scaled, r.drift] {
            cells.push(fmt_f64(v));
        }
        cells.push(r.converged.to_string());
        t.push(cells);
    }
    t
}

/// Checks on the theorem rows; returns failure messages.
pub fn theorem_failures(cfg: &SweepConfig, rows: &[SweepRow], f: &SweepFits) -> Vec<String> {
    let mut out = Vec::new();
    for r in rows {
        let all = r.gains.as_array().into_iter().chain(r.twin.as_array());
        if all.chain([r.flux_defect, r.dn_ratio, r.trace_ratio]).any(|v| !(v.is_finite() && v >= 0.0)) {
            out.push(format!("k = {}: non-finite or negative entry", r.k));
        }
        if !(r.gains.sigma_min > 0.0) {
            out.push(format!("k = {}: sigma_min = {}", r.k, r.gains.sigma_min));
        }
        let sd = rel_diff(r.gains.sigma_min, r.twin.sigma_min);
        if sd > TWIN_TOL {
            out.push(format!("k = {}: sigma_min drifts by {sd:.3e} under refinement", r.k));
        }
    }
    if f.c_minus_exponent.abs() > C_MINUS_BAND {
        out.push(format!("c_minus exponent {:.4} outside ±{C_MINUS_BAND}", f.c_minus_exponent));
    }
    let env = 3.0 * (1.0 + cfg.delta);
    if f.c_plus_exponent < -env {
        out.push(format!("c_plus exponent {:.4} below -{env}", f.c_plus_exponent));
    }
    if f.w_exponent > env - 1.0 + W_FIT_TOL {
        out.push(format!("wnorm exponent {:.4} above {}", f.w_exponent, env - 1.0));
    }
    out
}

pub fn small_k_failures(rows: &[SmallKRow]) -> Vec<String> {
    let max = rows.iter().map(|r| r.wq_norm).fold(0.0, f64::max);
    let min = rows.iter().map(|r| r.wq_norm).fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || max / min >= SMALL_K_RATIO {
        vec![format!("small-k wq_norm ratio {:.4}", max / min)]
    } else {
        Vec::new()
    }
}

pub fn sharpness_failures(rows: &[SharpnessRow], exponent: f64) -> Vec<String> {
    let mut out = Vec::new();
    if exponent > SHARPNESS_EXPONENT {
        out.push(format!("sharpness exponent {exponent:.4} above {SHARPNESS_EXPONENT}"));
    }
    for r in rows {
        let dev = (r.fixed_gain - r.fixed_reference).abs() / r.fixed_reference;
        if dev > FIXED_K_TOL {
            out.push(format!("n = {}: |1 - r_n| deviates from 2k/(nπ) by {dev:.3e}", r.n));
        }
    }
    out
}

/// Runs the selected experiments and writes `sweep.csv`, `sweep_summary.txt`,
/// `small_k.csv` and `sharpness.csv` to the output directory.
pub fn run_theorem_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    check_pair_potential(&cfg.potential)?;
    let mut outcome = SweepOutcome::default();
    let mut summary = Vec::new();
    if cfg.experiments.contains(&Experiment::Theorem) {
        let (rows, f) = theorem_rows(cfg)?;
        theorem_table(&rows).write(&cfg.out_dir.join("sweep.csv"))?;
        outcome.report.failures.extend(theorem_failures(cfg, &rows, &f));
        for (key, v) in [
            ("c_minus_exponent", f.c_minus_exponent),
            ("c_minus_floor", f.c_minus_floor),
            ("c_plus_exponent", f.c_plus_exponent),
            ("c_plus_scaled_floor", f.c_plus_scaled_floor),
            ("w_exponent", f.w_exponent),
            ("w_scaled_max", f.w_scaled_max),
            ("wq_exponent", f.wq_exponent),
            ("sigma_exponent", f.sigma_exponent),
            ("dn_ratio_max", f.dn_ratio_max),
            ("trace_ratio_max", f.trace_ratio_max),
        ] {
            summary.push(format!("{key} = {}", fmt_f64(v)));
        }
        summary.push(format!(
            "rows_converged = {}/{}",
            rows.iter().filter(|r| r.converged).count(),
            rows.len()
        ));
        outcome.rows = rows;
        outcome.fits = Some(f);
    }
    if cfg.experiments.contains(&Experiment::SmallK) {
        let rows = small_k_rows(cfg)?;
        let mut t = Table::new(&["k", "wq_norm"]);
        for r in &rows {
            t.push(vec![fmt_f64(r.k), fmt_f64(r.wq_norm)]);
        }
        t.write(&cfg.out_dir.join("small_k.csv"))?;
        outcome.report.failures.extend(small_k_failures(&rows));
        outcome.small_k = rows;
    }
    if cfg.experiments.contains(&Experiment::Sharpness) {
        let (rows, exp) = sharpness_rows(cfg)?;
        let mut t = Table::new(&["n", "k", "ratio_plus", "fixed_gain_minus", "fixed_reference"]);
        for r in &rows {
            t.push(vec![
                r.n.to_string(),
                fmt_f64(r.k),
                fmt_f64(r.ratio),
                fmt_f64(r.fixed_gain),
                fmt_f64(r.fixed_reference),
            ]);
        }
        t.write(&cfg.out_dir.join("sharpness.csv"))?;
        summary.push(format!("sharpness_exponent = {}", fmt_f64(exp)));
        outcome.report.failures.extend(sharpness_failures(&rows, exp));
        outcome.sharpness = rows;
        outcome.sharpness_exponent = Some(exp);
    }
    super::write_lines(&cfg.out_dir.join("sweep_summary.txt"), &summary)?;
    outcome.report.name = "sweep".into();
    Ok(outcome)
}
