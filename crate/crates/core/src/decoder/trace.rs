//! Per-step beam records, one JSON object per line.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Free,
    Constrained,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneReason {
    /// Allowed, but fell outside the beam.
    Score,
    /// Preferred by the model, but masked by the corpus constraint.
    ConstraintBlocked,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHypothesis {
    pub surface: String,
    pub score: f64,
    pub mode: Mode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePruned {
    pub surface: String,
    pub score: f64,
    pub reason: PruneReason,
}

/// How many successors one parent contributed to the candidate pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceExpansion {
    pub parent: usize,
    pub mode: Mode,
    pub successors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub hypotheses: Vec<TraceHypothesis>,
    pub pruned: Vec<TracePruned>,
    pub expansions: Vec<TraceExpansion>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BeamTrace {
    pub steps: Vec<TraceStep>,
}

impl BeamTrace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).expect("trace serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(content: &str) -> Result<Self, serde_json::Error> {
        let steps = content
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { steps })
    }
}
