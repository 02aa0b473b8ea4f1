pub mod audit;
pub mod flow;
pub mod inequalities;
pub mod run;
pub mod scan;

use std::path::{Path, PathBuf};

pub use audit::{AuditReport, AuditRow};
pub use flow::FlowReport;
pub use inequalities::InequalityReport;
pub use run::RunReport;
pub use scan::{ScanPoint, ScanReport};

use crate::output::{chart_from_file, fmt, output_paths, Chart, Table};
use crate::LabError;

/// A named pass/fail comparison written as a `#check` footer row.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance rule, e.g. `>= 0.5`.
    pub rule: String,
    pub passed: bool,
}

impl Check {
    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, rule: format!(">= {bound}"), passed: value >= bound }
    }

    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, rule: format!("<= {bound}"), passed: value <= bound }
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), value, rule: format!("in [{lo}, {hi}]"), passed: (lo..=hi).contains(&value) }
    }

    pub fn flag(name: &str, passed: bool) -> Self {
        Self { name: name.into(), value: f64::from(u8::from(passed)), rule: "== 1".into(), passed }
    }

    fn footer(&self, table: &mut Table) {
        table.footer(
            "check",
            &[self.name.clone(), fmt(self.value), self.rule.clone(), if self.passed { "pass" } else { "fail" }.into()],
        );
    }
}

pub(crate) fn add_checks(table: &mut Table, checks: &[Check]) {
    for c in checks {
        c.footer(table);
    }
}

pub(crate) fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

pub(crate) fn check_summary(checks: &[Check]) -> String {
    checks
        .iter()
        .map(|c| format!("  {} {} = {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.rule))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Paths of one command's output pair.
pub(crate) struct Outputs {
    pub csv: PathBuf,
    pub svg: PathBuf,
}

impl Outputs {
    pub fn new(out: &Path, command: &str) -> Result<Self, LabError> {
        let (csv, svg) = output_paths(out, command)?;
        Ok(Self { csv, svg })
    }

    /// Writes the table, then renders the chart from the file just written.
    pub fn finish(&self, table: &Table, chart: &Chart) -> Result<(), LabError> {
        table.write(&self.csv)?;
        chart_from_file(&self.csv, &self.svg, chart)
    }
}

pub(crate) fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ")
}
