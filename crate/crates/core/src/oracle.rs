//! Separated-variable solutions of the impedance problem on the unit square
//! with `V ≡ 1`.
//!
//! The tangential factor solves `w'' = -λ² w` on `[0, 1]` with
//! `w'(1) + ikw(1) = -w'(0) + ikw(0) = 0`; eigenvalues satisfy
//! `e^{2iλ} = ((λ - k)/(λ + k))²`. The normal factor `v` solves
//! `v'' = μ² v`, `μ² = λ² - k²`, with `-v'(0) + ikv(0) = 0` and
//! `v'(1) + ikv(1) = 1`, so `u = v(x) w(y)` has incoming data `w` on the
//! East side and zero elsewhere.
//!
//! Mode `n` is the root of `λ = nπ - i Log((λ - k)/(λ + k))` with the
//! principal logarithm. At `k = 0` this is `nπ`, and the label is stable
//! along any path in `k` that keeps `Im λ > 0`.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::{C64, I};

const MAX_NEWTON: usize = 100;
const ROOT_TOL: f64 = 1e-12;

/// One separated impedance mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpedanceMode {
    pub n: usize,
    pub k: f64,
    pub lambda: C64,
    pub mu: C64,
    /// Normalization of `w`; `‖w‖_{L²(0,1)} = 1` and `w(0) > 0`.
    pub amplitude: C64,
}

/// `|e^{2iλ} - (1 - k/λ)²/(1 + k/λ)²|`.
pub fn dispersion_residual(k: f64, lambda: C64) -> f64 {
    let q = (C64::new(1.0, 0.0) - k / lambda) / (C64::new(1.0, 0.0) + k / lambda);
    ((2.0 * I * lambda).exp() - q * q).norm()
}

fn branch_residual(k: f64, n: usize, lambda: C64) -> (C64, C64) {
    let rho = (lambda - k) / (lambda + k);
    let f = lambda - n as f64 * PI + I * rho.ln();
    let df = C64::new(1.0, 0.0) + I * (2.0 * k) / (lambda * lambda - k * k);
    (f, df)
}

fn newton(k: f64, n: usize, seed: C64) -> Option<C64> {
    let mut z = seed;
    let mut fz = branch_residual(k, n, z).0;
    for _ in 0..MAX_NEWTON {
        let (f, df) = branch_residual(k, n, z);
        if !df.norm().is_finite() || df.norm() == 0.0 {
            return None;
        }
        let mut step = f / df;
        // damped: halve until the residual decreases and we stay above the real axis
        let mut accepted = false;
        for _ in 0..30 {
            let cand = z - step;
            let fc = branch_residual(k, n, cand).0;
            if cand.im > -1e-14 && fc.norm().is_finite() && fc.norm() < fz.norm().max(1e-300) * (1.0 - 1e-4) + 1e-15 {
                z = cand;
                fz = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        if fz.norm() < 1e-15 * (1.0 + z.norm()) || step.norm() < 1e-15 * z.norm() {
            break;
        }
    }
    if dispersion_residual(k, z) <= ROOT_TOL && branch_residual(k, n, z).0.norm() < 1e-10 {
        Some(z)
    } else {
        None
    }
}

/// Root `λ_n(k)` of the dispersion relation on branch `n`.
///
/// Complex Newton seeded at `nπ + 0.5i`; if that stalls, continuation in `k`
/// from `k = 0` where `λ_n = nπ`.
pub fn find_lambda(k: f64, n: usize) -> Result<C64> {
    if !(k > 0.0 && k.is_finite()) || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "find_lambda needs k > 0 and n >= 1 (k = {k}, n = {n})"
        )));
    }
    let npi = n as f64 * PI;
    if let Some(z) = newton(k, n, C64::new(npi, 0.5)) {
        return Ok(z);
    }
    // homotopy in k
    let steps = 64 + (4.0 * k).ceil() as usize;
    let mut z = C64::new(npi, 0.0);
    let mut last = z;
    for s in 1..=steps {
        let ks = k * s as f64 / steps as f64;
        let seed = if z.im <= 0.0 { C64::new(z.re, 1e-3) } else { z };
        match newton(ks, n, seed) {
            Some(next) => {
                last = z;
                z = next;
            }
            None => {
                return Err(Error::NonConvergence {
                    iterations: s,
                    last: format!("{last}"),
                    residual: dispersion_residual(ks, z),
                })
            }
        }
    }
    Ok(z)
}

/// `μ = sqrt(λ² - k²)` with `Re μ ≥ 0` and `Im μ ≥ 0` when `Re μ = 0`.
pub fn mu_branch(lambda: C64, k: f64) -> C64 {
    let m = (lambda * lambda - k * k).sqrt();
    if m.re < 0.0 || (m.re == 0.0 && m.im < 0.0) {
        -m
    } else {
        m
    }
}

/// `∫₀¹ e^{c y} dy`.
fn exp_integral(c: C64) -> C64 {
    if c.norm() < 1e-3 {
        let mut term = C64::new(1.0, 0.0);
        let mut acc = C64::new(0.0, 0.0);
        for j in 1..8 {
            acc += term;
            term *= c / (j as f64 + 1.0);
        }
        acc
    } else {
        (c.exp() - 1.0) / c
    }
}

impl ImpedanceMode {
    pub fn new(k: f64, n: usize) -> Result<Self> {
        let lambda = find_lambda(k, n)?;
        Ok(Self::from_lambda(k, n, lambda))
    }

    pub fn from_lambda(k: f64, n: usize, lambda: C64) -> Self {
        let mu = mu_branch(lambda, k);
        let a = lambda + k;
        let b = lambda - k;
        // ‖a e^{iλy} + b e^{-iλy}‖² in closed form
        let norm2 = a.norm_sqr() * exp_integral(C64::new(-2.0 * lambda.im, 0.0)).re
            + b.norm_sqr() * exp_integral(C64::new(2.0 * lambda.im, 0.0)).re
            + 2.0 * (a * b.conj() * exp_integral(C64::new(0.0, 2.0 * lambda.re))).re;
        let w0 = a + b;
        let phase = if w0.norm() > 0.0 { w0.conj() / w0.norm() } else { C64::new(1.0, 0.0) };
        let amplitude = phase / norm2.sqrt();
        Self {
            n,
            k,
            lambda,
            mu,
            amplitude,
        }
    }

    pub fn w(&self, y: f64) -> C64 {
        let e = (I * self.lambda * y).exp();
        self.amplitude * ((self.lambda + self.k) * e + (self.lambda - self.k) / e)
    }

    pub fn w_prime(&self, y: f64) -> C64 {
        let e = (I * self.lambda * y).exp();
        self.amplitude * I * self.lambda * ((self.lambda + self.k) * e - (self.lambda - self.k) / e)
    }

    pub fn w_second(&self, y: f64) -> C64 {
        -self.lambda * self.lambda * self.w(y)
    }

    /// Denominator of `v` scaled by `e^{-μ}`.
    fn v_denominator(&self) -> Result<C64> {
        let (mu, ik) = (self.mu, I * self.k);
        let d = (mu + ik) * (mu + ik) - (mu - ik) * (mu - ik) * (-2.0 * mu).exp();
        if d.norm() < 1e-300 || !d.norm().is_finite() {
            return Err(Error::DenominatorUnderflow(format!("{mu}")));
        }
        Ok(d)
    }

    fn v_parts(&self, x: f64) -> Result<(C64, C64)> {
        let (mu, ik) = (self.mu, I * self.k);
        let d = self.v_denominator()?;
        let p = (mu + ik) * (mu * (x - 1.0)).exp();
        let m = (mu - ik) * (-mu * (x + 1.0)).exp();
        Ok((p / d, m / d))
    }

    pub fn v(&self, x: f64) -> Result<C64> {
        let (p, m) = self.v_parts(x)?;
        Ok(p + m)
    }

    pub fn v_prime(&self, x: f64) -> Result<C64> {
        let (p, m) = self.v_parts(x)?;
        Ok(self.mu * (p - m))
    }

    pub fn v_second(&self, x: f64) -> Result<C64> {
        Ok(self.mu * self.mu * self.v(x)?)
    }

    /// Exact solution `u(x, y) = v(x) w(y)`.
    pub fn u(&self, x: f64, y: f64) -> Result<C64> {
        Ok(self.v(x)? * self.w(y))
    }

    /// Eigenvalue of the East-side impedance map on `w`: `v'(1) - ik v(1)`.
    pub fn r(&self) -> Result<C64> {
        Ok(self.v_prime(1.0)? - I * self.k * self.v(1.0)?)
    }

    /// Dirichlet-to-Neumann eigenvalue on `w`: `v'(1)/v(1)`.
    pub fn dtn(&self) -> Result<C64> {
        Ok(self.v_prime(1.0)? / self.v(1.0)?)
    }
}

/// Convenience wrapper: `r_n` for a mode.
pub fn r_n(mode: &ImpedanceMode) -> Result<C64> {
    mode.r()
}

/// One point of the high-frequency sequence `k + k^α = nπ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpnessPoint {
    pub n: usize,
    pub k: f64,
    /// `‖(I + R) w_n‖ / ‖w_n‖ = |1 + r_n|`.
    pub ratio: f64,
    /// `Im λ_n`.
    pub delta: f64,
}

/// Solves `k + k^α = nπ` for `k` by Newton on the monotone left side.
pub fn solve_sharpness_k(alpha: f64, n: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1/2), got {alpha}")));
    }
    let target = n as f64 * PI;
    let mut k = target;
    for it in 0..100 {
        let f = k + k.powf(alpha) - target;
        let df = 1.0 + alpha * k.powf(alpha - 1.0);
        let next = (k - f / df).max(1e-12);
        if (next - k).abs() <= 1e-15 * k {
            k = next;
            let res = (k + k.powf(alpha) - target).abs();
            return if res <= 1e-12 * target.max(1.0) {
                Ok(k)
            } else {
                Err(Error::NonConvergence {
                    iterations: it,
                    last: format!("{k}"),
                    residual: res,
                })
            };
        }
        k = next;
    }
    Err(Error::NonConvergence {
        iterations: 100,
        last: format!("{k}"),
        residual: (k + k.powf(alpha) - target).abs(),
    })
}

/// Mode `n` at the wavenumber `k_n` with `k_n + k_n^α = nπ`, and its
/// `(I + R)` gain.
pub fn sharpness_sequence(alpha: f64, n: usize) -> Result<SharpnessPoint> {
    let k = solve_sharpness_k(alpha, n)?;
    if k <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "n = {n} too small: k_n = {k} <= 1"
        )));
    }
    let mode = ImpedanceMode::new(k, n)?;
    let r = mode.r()?;
    Ok(SharpnessPoint {
        n,
        k,
        ratio: (C64::new(1.0, 0.0) + r).norm(),
        delta: mode.lambda.im,
    })
}

/// Writes `(k, n, λ, μ, r, |1-r|, |1+r|)` rows as CSV.
pub fn write_mode_table(out: &mut impl Write, ks: &[f64], n_max: usize) -> Result<()> {
    writeln!(
        out,
        "k,n,lambda_re,lambda_im,mu_re,mu_im,r_re,r_im,gain_minus,gain_plus"
    )?;
    for &k in ks {
        for n in 1..=n_max {
            let m = ImpedanceMode::new(k, n)?;
            let r = m.r()?;
            writeln!(
                out,
                "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                k,
                n,
                m.lambda.re,
                m.lambda.im,
                m.mu.re,
                m.mu.im,
                r.re,
                r.im,
                (C64::new(1.0, 0.0) - r).norm(),
                (C64::new(1.0, 0.0) + r).norm()
            )?;
        }
    }
    Ok(())
}
