//! JSON run report.

use serde::Serialize;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// One named comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl Check {
    /// `|value - expected| <= tolerance`.
    pub fn within(name: impl Into<String>, value: f64, expected: f64, tolerance: f64) -> Self {
        let ok = (value - expected).abs() <= tolerance;
        Self { name: name.into(), value, expected, tolerance, verdict: Verdict::from_bool(ok) }
    }

    /// `value <= bound`; `expected` is reported as 0.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, expected: 0.0, tolerance: bound, verdict: Verdict::from_bool(value <= bound) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverRecord {
    pub cells: usize,
    #[serde(rename = "iters")]
    pub iterations: usize,
    pub residual: f64,
    pub boundary_amplitude: f64,
    pub q_orthogonality_defect: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRecord {
    /// `w1`, `w2`, ... or `vtilde1`.
    pub field: String,
    /// Mode index; `None` for `vtilde1`.
    pub k: Option<usize>,
    pub fitted: Option<f64>,
    pub predicted: f64,
    /// Relative tolerance on the rate.
    pub tolerance: f64,
    pub r_squared: Option<f64>,
    pub window: Option<(f64, f64)>,
    pub samples: usize,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportRecord {
    /// `solved` or `exact-leading`.
    pub source: String,
    pub tau: f64,
    pub mu: Vec<f64>,
    pub diag_logs: Vec<f64>,
    pub offdiag_norm: f64,
    pub wkb: f64,
    pub wkb_predicted: f64,
    pub wkb_converged: bool,
    pub det_drift: f64,
    pub pairing_defect: Option<f64>,
    pub vector_distance: Option<Vec<f64>>,
    pub vector_expected: Vec<f64>,
    pub steps: usize,
    pub interpolated_samples: usize,
    #[serde(rename = "verdicts")]
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub t: f64,
    pub theta: Option<f64>,
    #[serde(rename = "L")]
    pub length: Option<f64>,
    pub solver: Option<SolverRecord>,
    pub decay: Vec<DecayRecord>,
    pub transport: Option<TransportRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Summary {
    pub pass: usize,
    pub fail: usize,
    pub inconclusive: usize,
    /// Names of the failed verdicts.
    pub failing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    /// Comparisons across runs (rate ratios, trends).
    pub checks: Vec<Check>,
    pub summary: Summary,
}

impl RunReport {
    pub fn new(command: &str, config: ExperimentConfig, runs: Vec<RunRecord>, checks: Vec<Check>) -> Self {
        let mut report = Self { command: command.to_string(), config, runs, checks, summary: Summary::default() };
        report.summary = report.summarize();
        report
    }

    fn summarize(&self) -> Summary {
        let mut s = Summary::default();
        let mut tally = |name: String, v: Verdict| match v {
            Verdict::Pass => s.pass += 1,
            Verdict::Fail => {
                s.fail += 1;
                s.failing.push(name);
            }
            Verdict::Inconclusive => s.inconclusive += 1,
        };
        for run in &self.runs {
            let mut tag = format!("t={}", run.t);
            if let (Some(th), Some(l)) = (run.theta, run.length) {
                tag.push_str(&format!(" theta={th} L={l}"));
            }
            for d in &run.decay {
                tally(format!("{tag}: decay {}", d.field), d.verdict);
            }
            if let Some(tr) = &run.transport {
                for c in &tr.checks {
                    tally(format!("{tag}: {}", c.name), c.verdict);
                }
            }
        }
        for c in &self.checks {
            tally(c.name.clone(), c.verdict);
        }
        s
    }

    /// No failed verdicts; inconclusive ones do not count against a run.
    pub fn all_passed(&self) -> bool {
        self.summary.fail == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_counts_every_verdict() {
        let tr = TransportRecord {
            source: "solved".into(),
            tau: 1.0,
            mu: vec![],
            diag_logs: vec![],
            offdiag_norm: 0.0,
            wkb: 0.0,
            wkb_predicted: 0.0,
            wkb_converged: true,
            det_drift: 0.0,
            pairing_defect: None,
            vector_distance: None,
            vector_expected: vec![],
            steps: 1,
            interpolated_samples: 0,
            checks: vec![Check::within("wkb", 1.0, 1.01, 0.05), Check::at_most("det_drift", 1.0, 1e-8)],
        };
        let run = RunRecord {
            t: 10.0,
            theta: Some(0.0),
            length: Some(0.3),
            solver: None,
            decay: vec![DecayRecord {
                field: "w1".into(),
                k: Some(1),
                fitted: None,
                predicted: 1.0,
                tolerance: 0.1,
                r_squared: None,
                window: None,
                samples: 0,
                verdict: Verdict::Inconclusive,
            }],
            transport: Some(tr),
        };
        let report = RunReport::new("report", ExperimentConfig::default(), vec![run], vec![]);
        assert_eq!((report.summary.pass, report.summary.fail, report.summary.inconclusive), (1, 1, 1));
        assert!(!report.all_passed());
        assert_eq!(report.summary.failing, vec!["t=10 theta=0 L=0.3: det_drift".to_string()]);
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(json["runs"][0]["L"], 0.3);
        assert_eq!(json["config"]["kind"], "n-cyclic");
        assert_eq!(json["runs"][0]["decay"][0]["verdict"], "inconclusive");
        assert_eq!(json["runs"][0]["transport"]["verdicts"][1]["verdict"], "fail");
    }
}
