//! Flat `key = value` configuration.
//!
//! Blank lines and lines starting with `#` are skipped. Lists are
//! comma-separated. Potentials are written `constant(c)`, `affine(a,b,c)`
//! for `ax + by + c`, or `bump(base,amplitude,x0,y0,width)`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::domain::Potential;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    /// Per-k gains on the two-box configuration.
    Theorem,
    /// `|1 + r_n|` along the high-frequency sequence.
    Sharpness,
    /// `‖WQ₁‖` at small k.
    SmallK,
}

impl Experiment {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "theorem" => Ok(Self::Theorem),
            "sharpness" => Ok(Self::Sharpness),
            "small_k" => Ok(Self::SmallK),
            _ => Err(Error::Config(format!("unknown experiment '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub k_grid: Vec<f64>,
    pub potential: Potential,
    pub n_int: usize,
    pub n_b: usize,
    /// Interior degree of the refinement twin.
    pub twin_n_int: usize,
    pub delta: f64,
    pub out_dir: PathBuf,
    pub experiments: BTreeSet<Experiment>,
    pub seed: u64,
    pub probes: usize,
    /// Fraction of the k grid, from the top, used in fits.
    pub fit_window: f64,
    pub small_k_grid: Vec<f64>,
    pub sharpness_alpha: f64,
    pub sharpness_n: (usize, usize),
    pub sharpness_fixed_k: f64,
    pub neumann_degree: usize,
    pub neumann_twin_degree: usize,
    pub neumann_modes: usize,
    pub neumann_threshold: f64,
    pub oracle_k_grid: Vec<f64>,
    pub oracle_n_max: usize,
    pub merge_k_grid: Vec<f64>,
    pub merge_etas: usize,
    pub merge_tol: f64,
    /// Candidate `ε_δ` for the potential-difference report.
    pub epsilon: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k_grid: vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            potential: Potential::Constant(1.0),
            n_int: 32,
            n_b: 24,
            twin_n_int: 40,
            delta: 0.1,
            out_dir: PathBuf::from("out"),
            experiments: [Experiment::Theorem, Experiment::Sharpness, Experiment::SmallK]
                .into_iter()
                .collect(),
            seed: 7,
            probes: 8,
            fit_window: 0.5,
            small_k_grid: vec![0.01, 0.1, 0.5, 1.0],
            sharpness_alpha: 0.1,
            sharpness_n: (20, 200),
            sharpness_fixed_k: 2.0,
            neumann_degree: 32,
            neumann_twin_degree: 36,
            neumann_modes: 50,
            neumann_threshold: 1.0,
            oracle_k_grid: vec![5.0],
            oracle_n_max: 8,
            merge_k_grid: vec![1.0, 5.0, 10.0],
            merge_etas: 24,
            merge_tol: 1e-6,
            epsilon: 1.0,
        }
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: '{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Config(format!("{key}: '{s}' is not finite")));
    }
    Ok(v)
}

fn parse_usize(key: &str, s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: '{s}' is not a non-negative integer")))
}

fn parse_list(key: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|p| parse_f64(key, p)).collect()
}

/// Parses a potential descriptor.
pub fn parse_potential(s: &str) -> Result<Potential> {
    let s = s.trim();
    let open = s
        .find('(')
        .ok_or_else(|| Error::Config(format!("potential '{s}': expected name(args)")))?;
    if !s.ends_with(')') {
        return Err(Error::Config(format!("potential '{s}': missing ')'")));
    }
    let name = s[..open].trim();
    let args = parse_list("potential", &s[open + 1..s.len() - 1])?;
    let want = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "potential {name} takes {n} arguments, got {}",
                args.len()
            )))
        }
    };
    match name {
        "constant" => {
            want(1)?;
            Ok(Potential::Constant(args[0]))
        }
        "affine" => {
            want(3)?;
            Ok(Potential::Affine {
                a: args[0],
                b: args[1],
                c: args[2],
            })
        }
        "bump" => {
            want(5)?;
            if !(args[4] > 0.0) {
                return Err(Error::Config("bump width must be positive".into()));
            }
            Ok(Potential::GaussianBump {
                base: args[0],
                amplitude: args[1],
                x0: args[2],
                y0: args[3],
                width: args[4],
            })
        }
        _ => Err(Error::Config(format!("unknown potential '{name}'"))),
    }
}

/// Descriptor text for the potentials `parse_potential` accepts.
pub fn describe_potential(v: &Potential) -> String {
    match v {
        Potential::Constant(c) => format!("constant({c})"),
        Potential::Affine { a, b, c } => format!("affine({a},{b},{c})"),
        Potential::GaussianBump {
            base,
            amplitude,
            x0,
            y0,
            width,
        } => format!("bump({base},{amplitude},{x0},{y0},{width})"),
        Potential::Table(_) => "table".into(),
        Potential::Reflected { inner, axis } => format!("reflect({},{axis})", describe_potential(inner)),
    }
}

fn check_grid(key: &str, ks: &[f64]) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::Config(format!("{key} is empty")));
    }
    if ks.iter().any(|&k| !(k > 0.0)) {
        return Err(Error::Config(format!("{key} entries must be positive")));
    }
    if ks.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config(format!("{key} must be strictly ascending")));
    }
    Ok(())
}

impl SweepConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("duplicate key '{key}'")));
            }
            match key {
                "k_grid" => cfg.k_grid = parse_list(key, value)?,
                "potential" => cfg.potential = parse_potential(value)?,
                "n_int" => cfg.n_int = parse_usize(key, value)?,
                "n_b" => cfg.n_b = parse_usize(key, value)?,
                "twin_n_int" => cfg.twin_n_int = parse_usize(key, value)?,
                "delta" => cfg.delta = parse_f64(key, value)?,
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "experiments" => {
                    cfg.experiments = value
                        .split(',')
                        .map(|s| Experiment::parse(s.trim()))
                        .collect::<Result<_>>()?
                }
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| Error::Config(format!("seed: '{value}'")))?
                }
                "probes" => cfg.probes = parse_usize(key, value)?,
                "fit_window" => cfg.fit_window = parse_f64(key, value)?,
                "small_k_grid" => cfg.small_k_grid = parse_list(key, value)?,
                "sharpness_alpha" => cfg.sharpness_alpha = parse_f64(key, value)?,
                "sharpness_n" => {
                    let parts: Vec<usize> = value
                        .split(',')
                        .map(|p| parse_usize(key, p))
                        .collect::<Result<_>>()?;
                    if parts.len() != 2 {
                        return Err(Error::Config("sharpness_n takes min,max".into()));
                    }
                    cfg.sharpness_n = (parts[0], parts[1]);
                }
                "sharpness_fixed_k" => cfg.sharpness_fixed_k = parse_f64(key, value)?,
                "neumann_degree" => cfg.neumann_degree = parse_usize(key, value)?,
                "neumann_twin_degree" => cfg.neumann_twin_degree = parse_usize(key, value)?,
                "neumann_modes" => cfg.neumann_modes = parse_usize(key, value)?,
                "neumann_threshold" => cfg.neumann_threshold = parse_f64(key, value)?,
                "oracle_k_grid" => cfg.oracle_k_grid = parse_list(key, value)?,
                "oracle_n_max" => cfg.oracle_n_max = parse_usize(key, value)?,
                "merge_k_grid" => cfg.merge_k_grid = parse_list(key, value)?,
                "merge_etas" => cfg.merge_etas = parse_usize(key, value)?,
                "merge_tol" => cfg.merge_tol = parse_f64(key, value)?,
                "epsilon" => cfg.epsilon = parse_f64(key, value)?,
                _ => return Err(Error::Config(format!("unknown key '{key}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        check_grid("k_grid", &self.k_grid)?;
        check_grid("small_k_grid", &self.small_k_grid)?;
        check_grid("oracle_k_grid", &self.oracle_k_grid)?;
        check_grid("merge_k_grid", &self.merge_k_grid)?;
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if self.n_int < 2 || self.n_b < 1 {
            return Err(Error::Config("n_int must be at least 2 and n_b at least 1".into()));
        }
        if self.n_b > self.n_int || self.n_b > self.twin_n_int {
            return Err(Error::Config(format!(
                "n_b = {} exceeds the interior degree",
                self.n_b
            )));
        }
        if !(self.fit_window > 0.0 && self.fit_window <= 1.0) {
            return Err(Error::Config("fit_window must lie in (0, 1]".into()));
        }
        if self.sharpness_n.0 < 1 || self.sharpness_n.0 >= self.sharpness_n.1 {
            return Err(Error::Config("sharpness_n needs 1 <= min < max".into()));
        }
        if !(self.sharpness_alpha > 0.0 && self.sharpness_alpha < 0.5) {
            return Err(Error::Config("sharpness_alpha must lie in (0, 1/2)".into()));
        }
        if !(self.sharpness_fixed_k > 0.0) {
            return Err(Error::Config("sharpness_fixed_k must be positive".into()));
        }
        if self.neumann_degree < 4 || self.neumann_twin_degree < 4 || self.neumann_modes == 0 {
            return Err(Error::Config("Neumann degrees must be >= 4 and neumann_modes >= 1".into()));
        }
        if self.oracle_n_max == 0 || self.merge_etas == 0 {
            return Err(Error::Config("oracle_n_max and merge_etas must be positive".into()));
        }
        if !(self.merge_tol > 0.0 && self.epsilon > 0.0) {
            return Err(Error::Config("merge_tol and epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Fitting window: the top `ceil(fit_window * len)` points.
    pub fn window_start(&self, len: usize) -> usize {
        let keep = ((self.fit_window * len as f64).ceil() as usize).clamp(1, len);
        len - keep
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SweepConfig::default().validate().unwrap();
        assert_eq!(SweepConfig::parse("").unwrap(), SweepConfig::default());
    }

    #[test]
    fn parses_keys() {
        let cfg = SweepConfig::parse(
            "# sweep\nk_grid = 1, 2,4\npotential = affine(0.05, 0, 1)\nn_int=20\nn_b = 12\nexperiments = theorem\nsharpness_n = 5,9\n",
        )
        .unwrap();
        assert_eq!(cfg.k_grid, vec![1.0, 2.0, 4.0]);
        assert_eq!(cfg.potential, Potential::Affine { a: 0.05, b: 0.0, c: 1.0 });
        assert_eq!((cfg.n_int, cfg.n_b), (20, 12));
        assert_eq!(cfg.experiments.len(), 1);
        assert_eq!(cfg.sharpness_n, (5, 9));
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "unknown = 1",
            "k_grid = 2, 1",
            "k_grid = 0, 1",
            "delta = 0",
            "n_int = 8\nn_b = 12",
            "potential = square(1)",
            "potential = affine(1,2)",
            "n_int = 3\nn_int = 4",
            "k_grid",
            "experiments = theorem, plots",
        ] {
            assert!(matches!(SweepConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn descriptor_roundtrip() {
        for v in [
            Potential::Constant(1.5),
            Potential::Affine { a: 0.1, b: -0.2, c: 1.0 },
            Potential::GaussianBump { base: 1.0, amplitude: 0.3, x0: 0.5, y0: 0.25, width: 0.1 },
        ] {
            assert_eq!(parse_potential(&describe_potential(&v)).unwrap(), v);
        }
    }

    #[test]
    fn window_takes_upper_half() {
        let cfg = SweepConfig::default();
        assert_eq!(cfg.window_start(7), 3);
        assert_eq!(cfg.window_start(4), 2);
        assert_eq!(cfg.window_start(1), 0);
    }
}
