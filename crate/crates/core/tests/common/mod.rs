//! Chebyshev series helpers shared by the test targets.

#![allow(dead_code)]

/// `(p(x), p'(x))` for `p = Σ c_j T_j`.
pub fn cheb_series(c: &[f64], x: f64) -> (f64, f64) {
    let (mut t0, mut t1) = (1.0, x);
    let (mut d0, mut d1) = (0.0, 1.0);
    let mut p = c[0];
    let mut dp = 0.0;
    for &cj in c.iter().skip(1) {
        p += cj * t1;
        dp += cj * d1;
        let t2 = 2.0 * x * t1 - t0;
        let d2 = 2.0 * t1 + 2.0 * x * d1 - d0;
        (t0, t1, d0, d1) = (t1, t2, d1, d2);
    }
    (p, dp)
}

pub fn cheb_integral(c: &[f64]) -> f64 {
    c.iter()
        .enumerate()
        .filter(|(j, _)| j % 2 == 0)
        .map(|(j, &cj)| 2.0 * cj / (1.0 - (j * j) as f64))
        .sum()
}

pub fn scale(c: &[f64]) -> f64 {
    c.iter()
        .enumerate()
        .map(|(j, v)| v.abs() * (1 + j * j) as f64)
        .sum()
}
