//! Experiment drivers: configuration, sweeps, checks and CSV output.
//!
//! Each `run_*` entry point validates the configuration, computes its rows
//! (in parallel over `k` where independent), writes its files from the
//! calling thread, and returns the rows with a [`Report`] listing failed
//! assertions.

pub mod checks;
pub mod config;
pub mod measure;
pub mod sweep;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::Result;

pub use checks::{export_dtn, run_merge_equivalence, run_neumann_trace_check, run_oracle_validation};
pub use config::{Experiment, SweepConfig};
pub use sweep::run_theorem_sweep;

/// Failed assertions of one experiment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub name: String,
    pub failures: Vec<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// CSV table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

pub(crate) fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    for l in lines {
        writeln!(f, "{l}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_csv() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "x".into()]);
        assert_eq!(t.to_csv(), "a,b\n1,x\n");
    }
}
