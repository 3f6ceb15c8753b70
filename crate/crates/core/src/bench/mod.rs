//! Scenario library, metrics, suite runner, trace persistence and reports.

mod metrics;
mod report;
mod trace;

pub use metrics::{compute_metrics, run_suite, run_suite_runs, summarize, MeanRow, MetricsReport, RunMetrics, SuiteRun};
pub use report::{parse_report_csv, render_report, render_report_named, render_trace_svg, ReportFormat, NA};
pub use trace::{BandSnapshot, HumanSample, Outcome, ServiceUse, Trace, TraceFooter, TraceHeader, TraceRecord, TraceStep};

use std::path::Path;

use crate::error::{Error, Result};
use crate::world::{load_scenario_file, ScenarioSpec};

/// The five scenarios with quantitative comparisons.
pub const QUANTITATIVE_SUITE: [&str; 5] = [
    "bed_approach",
    "narrow_corridor_stop",
    "wide_corridor_free",
    "free_space_crowd",
    "emergency",
];

/// Loads every `*.json` scenario in `dir`, sorted by file name.
pub fn load_suite(dir: &Path) -> Result<Vec<ScenarioSpec>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Validation(format!("no scenario files in {}", dir.display())));
    }
    files.iter().map(|p| load_scenario_file(p)).collect()
}

/// Directory of the scenario files shipped with the crate.
pub fn bundled_scenarios_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_suite_loads_sorted() {
        let suite = load_suite(&bundled_scenarios_dir()).unwrap();
        assert_eq!(suite.len(), 10);
        let names: Vec<&str> = suite.iter().map(|s| s.name.as_str()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        for q in QUANTITATIVE_SUITE {
            assert!(names.contains(&q), "{q}");
        }
    }

    #[test]
    fn empty_directory_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_suite(dir.path()).is_err());
    }
}
