//! Machine-readable run reports.
//!
//! A report lists every match with its label, the aggregated solver outcome,
//! one entry per cluster, an echo of the configuration and, when ground truth
//! is known, the evaluation. Timings are left out unless asked for so that two
//! runs with the same inputs produce byte-identical JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::consensus::{Label, Registration};
use crate::error::Result;
use crate::eval::EvalReport;
use crate::io::write_text;
use crate::solver::format::trace_csv;
use crate::solver::SolverResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub index: usize,
    pub label: Label,
    /// The match took part in no evaluated edge.
    pub unconstrained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub objective: usize,
    pub lower_bound: f64,
    pub optimal: bool,
    pub violated_constraints: usize,
    pub nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

impl SolverSummary {
    fn from_result(r: &SolverResult, timings: bool) -> Self {
        SolverSummary {
            objective: r.objective,
            lower_bound: r.lower_bound,
            optimal: r.optimal,
            violated_constraints: r.violated_constraints,
            nodes: r.nodes,
            wall_time: timings.then_some(r.wall_time),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub size: usize,
    pub skipped: bool,
    pub edges: usize,
    pub constraints: usize,
    /// Absent for skipped clusters and for local filtering.
    pub solver: Option<SolverSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub config: serde_json::Value,
    /// Sums over clusters; `optimal` holds when every solved cluster is
    /// certified. Absent when no program was solved (local filtering).
    pub solver: Option<SolverSummary>,
    pub clusters: Vec<ClusterSummary>,
    pub matches: Vec<MatchRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvalReport>,
}

impl Report {
    /// `wall_time` is the end-to-end time; pass `None` for reproducible output.
    pub fn new<C: Serialize>(
        command: &str,
        config: &C,
        registration: &Registration,
        evaluation: Option<EvalReport>,
        wall_time: Option<f64>,
    ) -> Result<Self> {
        let timings = wall_time.is_some();
        let solved = registration.clusters.iter().filter_map(|c| c.result.as_ref());
        let solver = registration.solved().then(|| SolverSummary {
            objective: registration.objective(),
            lower_bound: registration.lower_bound(),
            optimal: registration.certified(),
            violated_constraints: solved.clone().map(|r| r.violated_constraints).sum(),
            nodes: solved.map(|r| r.nodes).sum(),
            wall_time,
        });
        let clusters = registration
            .clusters
            .iter()
            .map(|c| ClusterSummary {
                size: c.members.len(),
                skipped: c.skipped,
                edges: c.num_edges,
                constraints: c.num_constraints,
                solver: c.result.as_ref().map(|r| SolverSummary::from_result(r, timings)),
            })
            .collect();
        let matches = registration
            .labels
            .iter()
            .zip(&registration.unconstrained)
            .enumerate()
            .map(|(index, (&label, &unconstrained))| MatchRecord {
                index,
                label,
                unconstrained,
            })
            .collect();
        let evaluation = evaluation.map(|mut e| {
            e.wall_time = wall_time;
            e
        });
        Ok(Report {
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            solver,
            clusters,
            matches,
            evaluation,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn emit_report(report: &Report, path: &Path) -> Result<()> {
    write_text(path, &report.to_json()?)
}

/// Trace files for the solved clusters. A single cluster writes `path`
/// itself; several clusters write `<stem>.<k>.<ext>` next to it, `k` being
/// the cluster index. Returns the written paths.
pub fn write_traces(registration: &Registration, path: &Path) -> Result<Vec<PathBuf>> {
    let solved: Vec<(usize, &SolverResult)> = registration
        .clusters
        .iter()
        .enumerate()
        .filter_map(|(k, c)| c.result.as_ref().map(|r| (k, r)))
        .collect();
    let mut written = Vec::new();
    for &(k, r) in &solved {
        let target = if registration.clusters.len() == 1 {
            path.to_path_buf()
        } else {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
            let name = match path.extension().and_then(|e| e.to_str()) {
                Some(ext) => format!("{stem}.{k}.{ext}"),
                None => format!("{stem}.{k}"),
            };
            path.with_file_name(name)
        };
        write_text(&target, &trace_csv(&r.trace))?;
        written.push(target);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::{ClusterOutcome, LabelVector};

    fn registration() -> Registration {
        let labels = LabelVector::from_outliers(3, [2]);
        Registration {
            labels: labels.clone(),
            unconstrained: vec![false, true, false],
            clusters: vec![ClusterOutcome {
                members: vec![0, 1, 2],
                skipped: false,
                num_edges: 3,
                num_constraints: 1,
                result: Some(SolverResult {
                    labels,
                    objective: 1,
                    lower_bound: 1.0,
                    optimal: true,
                    violated_constraints: 0,
                    nodes: 1,
                    trace: Vec::new(),
                    wall_time: 0.25,
                }),
            }],
        }
    }

    #[test]
    fn report_without_timings_has_no_wall_time() {
        let r = Report::new("match-shapes", &serde_json::json!({"eps_rel": 0.2}), &registration(), None, None).unwrap();
        let json = r.to_json().unwrap();
        assert!(!json.contains("wall_time"));
        assert!(json.contains("\"label\": \"outlier\""));
        assert_eq!(r.matches[1], MatchRecord { index: 1, label: Label::Inlier, unconstrained: true });
        assert_eq!(Report::from_json(&json).unwrap(), r);
    }

    #[test]
    fn timings_are_opt_in() {
        let r = Report::new("x", &(), &registration(), None, Some(1.5)).unwrap();
        assert_eq!(r.solver.as_ref().unwrap().wall_time, Some(1.5));
        assert_eq!(r.clusters[0].solver.as_ref().unwrap().wall_time, Some(0.25));
    }

    #[test]
    fn traces_are_split_per_cluster() {
        let dir = tempfile::tempdir().unwrap();
        let mut reg = registration();
        let one = write_traces(&reg, &dir.path().join("t.csv")).unwrap();
        assert_eq!(one, vec![dir.path().join("t.csv")]);
        reg.clusters.push(reg.clusters[0].clone());
        let two = write_traces(&reg, &dir.path().join("t.csv")).unwrap();
        assert_eq!(two, vec![dir.path().join("t.0.csv"), dir.path().join("t.1.csv")]);
        assert!(std::fs::read_to_string(&two[1]).unwrap().starts_with("iteration,upper,lower,open_nodes"));
    }
}
