//! Forward and backward chaining with explanation traces.

mod backward;
mod forward;
mod relevance;

use std::cmp::Reverse;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::DocId;
use crate::rules::RuleId;

pub use backward::{backward_chain, Proof, ProofFailure};
pub use forward::{forward_chain, Firing, FiringInput, ForwardOutcome, MemoryEntry, WorkingMemory};
pub use relevance::{relevance_filter, SemanticArea};

pub const DEFAULT_MAX_DEPTH: usize = 8;
pub const DEFAULT_TAU: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Found in corpus documents.
    Retrieved { doc_ids: Vec<DocId> },
    /// Supplied directly by the caller.
    Asserted,
    /// Produced by the firing with this index in the run's firing log.
    Derived { firing: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub statement: String,
    pub confidence: f64,
    pub provenance: Provenance,
}

impl Fact {
    pub fn retrieved(statement: impl Into<String>, doc_ids: Vec<DocId>) -> Self {
        Fact {
            statement: statement.into(),
            confidence: 1.0,
            provenance: Provenance::Retrieved { doc_ids },
        }
    }

    pub fn asserted(statement: impl Into<String>, confidence: f64) -> Self {
        Fact {
            statement: statement.into(),
            confidence,
            provenance: Provenance::Asserted,
        }
    }

    pub fn is_derived(&self) -> bool {
        matches!(self.provenance, Provenance::Derived { .. })
    }
}

/// Conflict resolution strategy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Lowest `order_index` first.
    #[default]
    RuleOrder,
    /// Most conditions first, then lowest `order_index`.
    Specificity,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::RuleOrder => "rule_order",
            Strategy::Specificity => "specificity",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rule_order" => Ok(Strategy::RuleOrder),
            "specificity" => Ok(Strategy::Specificity),
            other => Err(format!(
                "unknown strategy `{other}` (expected rule_order or specificity)"
            )),
        }
    }
}

/// A rule whose conditions are all satisfied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activation {
    pub rule_id: RuleId,
    pub order_index: usize,
    pub condition_count: usize,
    /// Position in the rule list; final tiebreak.
    pub position: usize,
    pub depth: usize,
}

pub fn rank_activations(mut activations: Vec<Activation>, strategy: Strategy) -> Vec<Activation> {
    match strategy {
        Strategy::RuleOrder => activations.sort_by_key(|a| (a.order_index, a.position)),
        Strategy::Specificity => activations.sort_by_key(|a| (Reverse(a.condition_count), a.order_index, a.position)),
    }
    activations
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceInput {
    pub statement: String,
    pub confidence: f64,
    /// Index of the step that produced this input; `None` for initial facts.
    pub step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub rule_id: RuleId,
    pub rule_text: String,
    pub inputs: Vec<TraceInput>,
    pub output: String,
    pub confidence: f64,
}

/// The ordered rule firings justifying one statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub trace_id: String,
    pub statement: String,
    pub confidence: f64,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub(crate) fn new(statement: String, confidence: f64, steps: Vec<TraceStep>) -> Self {
        #[derive(Serialize)]
        struct Content<'a> {
            statement: &'a str,
            confidence: f64,
            steps: &'a [TraceStep],
        }
        let content = serde_json::to_vec(&Content {
            statement: &statement,
            confidence,
            steps: &steps,
        })
        .expect("trace serializes");
        let digest = Sha256::digest(&content);
        Trace {
            trace_id: format!("t{}", &hex::encode(digest)[..16]),
            statement,
            confidence,
            steps,
        }
    }

    /// Statements consumed from outside the trace.
    pub fn leaves(&self) -> impl Iterator<Item = &str> {
        self.steps
            .iter()
            .flat_map(|s| s.inputs.iter())
            .filter(|i| i.step.is_none())
            .map(|i| i.statement.as_str())
    }
}
