//! Results and oracle documents (JSON).

use std::fs;
use std::path::Path;

use attverify_core::{
    AttentionVerdict, ClassVerdict, Dist, Filter, GridOracleResult, HPolytope, RowLabel, TraversalMode,
    TraversalResult, ValueRange,
};
use serde::{Deserialize, Serialize};

use crate::config::code;
use crate::error::{CliError, Result};

pub const RESULTS_VERSION: &str = "attverify-results/1";
pub const ORACLE_VERSION: &str = "attverify-oracle/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    BudgetExhausted,
}

impl RunStatus {
    /// Process exit status: 0 complete, 2 budget exhausted.
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Complete => 0,
            RunStatus::BudgetExhausted => 2,
        }
    }
}

/// The problem as it was run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemEcho {
    pub model: String,
    pub image: String,
    pub perturbation: String,
    /// One name per parameter axis.
    pub parameters: Vec<String>,
    pub theta_lo: Vec<f64>,
    pub theta_hi: Vec<f64>,
    #[serde(with = "code")]
    pub mode: TraversalMode,
    #[serde(with = "code")]
    pub filter: Filter,
    #[serde(with = "code")]
    pub dist: Dist,
    pub delta: f64,
    pub w_delta: f64,
    pub ray: Option<Vec<f64>>,
    pub original_label: usize,
}

/// `a · θ <= b`, one row per entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Halfspaces {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub labels: Vec<String>,
}

impl Halfspaces {
    pub fn from_polytope(p: &HPolytope<f64>) -> Self {
        Halfspaces {
            a: (0..p.rows()).map(|i| p.row(i).to_vec()).collect(),
            b: (0..p.rows()).map(|i| p.rhs(i)).collect(),
            labels: p.labels().iter().map(ToString::to_string).collect(),
        }
    }

    pub fn to_polytope(&self, dim: usize) -> Result<HPolytope<f64>> {
        let labels = self
            .labels
            .iter()
            .map(|l| l.parse::<RowLabel>())
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(HPolytope::new(dim, self.a.clone(), self.b.clone(), labels)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionRecord {
    /// Activation pattern of the composite network, layers separated by `|`.
    pub pattern: String,
    pub halfspaces: Halfspaces,
    #[serde(with = "code")]
    pub cls_verdict: ClassVerdict,
    #[serde(with = "code")]
    pub attn_verdict: AttentionVerdict,
    pub ai_range: [f64; 2],
    pub margin_range: [f64; 2],
    pub witness: Vec<f64>,
    pub following: bool,
    pub line_distance: f64,
}

impl RegionRecord {
    pub fn ai(&self) -> ValueRange<f64> {
        ValueRange::new(self.ai_range[0], self.ai_range[1])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsRecord {
    pub regions_verified: usize,
    pub faces_checked: usize,
    pub stable_skipped: usize,
    pub lp_calls: u64,
    pub elapsed_secs: f64,
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsDocument {
    pub version: String,
    pub status: RunStatus,
    pub problem: ProblemEcho,
    pub regions: Vec<RegionRecord>,
    pub stats: StatsRecord,
}

impl ResultsDocument {
    pub fn from_traversal(problem: ProblemEcho, res: &TraversalResult<f64>) -> Self {
        let regions = res
            .regions
            .iter()
            .map(|r| {
                let v = &r.verdict;
                RegionRecord {
                    pattern: v.pattern.to_string(),
                    halfspaces: Halfspaces::from_polytope(&v.region),
                    cls_verdict: v.cls_verdict,
                    attn_verdict: v.attn_verdict,
                    ai_range: [v.ai_range.lo, v.ai_range.up],
                    margin_range: [v.margin_range.lo, v.margin_range.up],
                    witness: v.witness.clone(),
                    following: r.following,
                    line_distance: r.line_distance,
                }
            })
            .collect();
        let s = &res.stats;
        ResultsDocument {
            version: RESULTS_VERSION.to_string(),
            status: if s.budget_exhausted {
                RunStatus::BudgetExhausted
            } else {
                RunStatus::Complete
            },
            problem,
            regions,
            stats: StatsRecord {
                regions_verified: s.regions_verified,
                faces_checked: s.faces_checked,
                stable_skipped: s.stable_skipped,
                lp_calls: s.lp_calls,
                elapsed_secs: s.elapsed.as_secs_f64(),
                budget_exhausted: s.budget_exhausted,
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.problem.theta_lo.len()
    }

    pub fn polytopes(&self) -> Result<Vec<HPolytope<f64>>> {
        self.regions.iter().map(|r| r.halfspaces.to_polytope(self.dim())).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text).map_err(|source| CliError::Json { what: "results", source })?;
        if doc.version != RESULTS_VERSION {
            return Err(CliError::Results(format!(
                "unsupported version `{}` (expected {RESULTS_VERSION})",
                doc.version
            )));
        }
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleDocument {
    pub version: String,
    pub resolution: usize,
    pub original_label: usize,
    pub thetas: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub ai_values: Vec<f64>,
}

impl OracleDocument {
    pub fn from_result(r: &GridOracleResult<f64>) -> Self {
        OracleDocument {
            version: ORACLE_VERSION.to_string(),
            resolution: r.resolution,
            original_label: r.original_label,
            thetas: r.thetas.clone(),
            labels: r.labels.clone(),
            ai_values: r.ai_values.clone(),
        }
    }

    pub fn to_result(&self) -> Result<GridOracleResult<f64>> {
        let n = self.thetas.len();
        if self.labels.len() != n || self.ai_values.len() != n {
            return Err(CliError::Results("oracle columns differ in length".into()));
        }
        Ok(GridOracleResult {
            resolution: self.resolution,
            thetas: self.thetas.clone(),
            labels: self.labels.clone(),
            ai_values: self.ai_values.clone(),
            original_label: self.original_label,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("oracle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text).map_err(|source| CliError::Json { what: "oracle", source })?;
        if doc.version != ORACLE_VERSION {
            return Err(CliError::Results(format!(
                "unsupported oracle version `{}` (expected {ORACLE_VERSION})",
                doc.version
            )));
        }
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)
    }
}
