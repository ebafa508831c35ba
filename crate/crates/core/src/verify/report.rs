use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Pass,
    Fail,
    /// The test ran against an approximate reference and cannot decide.
    #[serde(rename = "inconclusive-by-design")]
    Inconclusive,
}

/// Outcome of one statistical test. Serialized with stable key names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub test_name: String,
    /// The property under test, in words.
    pub paper_anchor: String,
    pub decision_rule: String,
    /// One label per entry of `estimates`.
    pub labels: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub decision: Decision,
    pub n_samples: usize,
    pub seed: u64,
    pub runtime_ms: u64,
    pub fault_injected: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.decision == Decision::Pass
    }

    pub fn failed(&self) -> bool {
        self.decision == Decision::Fail
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// One-line human summary.
    pub fn summary_line(&self) -> String {
        let tag = match self.decision {
            Decision::Pass => "PASS",
            Decision::Fail => "FAIL",
            Decision::Inconclusive => "INCONCLUSIVE",
        };
        let shown: Vec<String> = self
            .labels
            .iter()
            .zip(&self.estimates)
            .take(4)
            .map(|(l, e)| format!("{l}={e:.6}"))
            .collect();
        format!("[{tag}] {} (n={}, seed={}) {}", self.test_name, self.n_samples, self.seed, shown.join(" "))
    }
}

/// Aggregate over a suite run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub seed: u64,
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub inconclusive: usize,
    pub overall: Decision,
    pub tests: Vec<SuiteEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub test_name: String,
    pub decision: Decision,
}

impl SuiteSummary {
    pub fn from_reports(seed: u64, reports: &[VerificationReport]) -> Self {
        let count = |d: Decision| reports.iter().filter(|r| r.decision == d).count();
        let failed = count(Decision::Fail);
        Self {
            seed,
            total: reports.len(),
            passed: count(Decision::Pass),
            failed,
            inconclusive: count(Decision::Inconclusive),
            overall: if failed == 0 { Decision::Pass } else { Decision::Fail },
            tests: reports
                .iter()
                .map(|r| SuiteEntry {
                    test_name: r.test_name.clone(),
                    decision: r.decision,
                })
                .collect(),
        }
    }
}
