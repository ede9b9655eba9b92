//! JSON description of an SCM.
//!
//! ```json
//! {
//!   "nodes": [
//!     {"name": "X1", "terms": [], "noise": {"dist": "normal", "mean": 0.0, "std": 1.0}},
//!     {"name": "X2", "terms": [{"type": "linear", "weights": {"X1": 0.5}}],
//!      "noise": {"dist": "normal", "mean": 0.0, "std": 1.0}}
//!   ],
//!   "edges": [["X1", "X2"]],
//!   "label": {"terms": [{"type": "linear", "weights": {"X2": 1.0}}],
//!             "normal": {"op": "lt", "value": 1.0}, "anomaly": {"op": "gt", "value": 2.0}}
//! }
//! ```
//!
//! Built-in mechanisms are referenced by name (`{"name": "G", "builtin": "loan.G"}`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::mechanism::{Builtin, Mechanism, MechanismKind, NoiseSpec, Term};
use super::{CausalGraph, Scm, ScmError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<Term<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompareOp {
    Gt,
    Ge,
    Lt,
    Le,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub op: CompareOp,
    pub value: f64,
}

impl Predicate {
    pub fn holds(&self, v: f64) -> bool {
        match self.op {
            CompareOp::Gt => v > self.value,
            CompareOp::Ge => v >= self.value,
            CompareOp::Lt => v < self.value,
            CompareOp::Le => v <= self.value,
        }
    }
}

/// Label quantity (a sum of catalog terms) with normal and anomaly predicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<Term<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<Predicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anomaly: Option<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmDoc {
    pub nodes: Vec<NodeDoc>,
    pub edges: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<LabelDoc>,
}

impl ScmDoc {
    pub fn from_json(text: &str) -> Result<Self, ScmError> {
        serde_json::from_str(text).map_err(|e| ScmError::Invalid(format!("SCM document: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn names(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.name.clone()).collect()
    }

    /// Validates the document and builds the model (rejects cycles, unknown
    /// names and mechanism/edge disagreement).
    pub fn build(&self) -> Result<Scm, ScmError> {
        let names = self.names();
        let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let lookup = |n: &String| index.get(n.as_str()).copied().ok_or_else(|| ScmError::UnknownNode(n.clone()));
        let edges = self
            .edges
            .iter()
            .map(|(p, c)| Ok((lookup(p)?, lookup(c)?)))
            .collect::<Result<Vec<_>, ScmError>>()?;
        let graph = CausalGraph::new(names.clone(), &edges)?;
        let mut mechanisms = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let m = match &node.builtin {
                Some(b) => {
                    let b = Builtin::from_name(b).ok_or_else(|| ScmError::Invalid(format!("unknown builtin {b}")))?;
                    if b.node() != i {
                        return Err(ScmError::Invalid(format!("builtin {} must be node {}", b.name(), b.node())));
                    }
                    let mut m = Mechanism::builtin(b);
                    if let Some(noise) = &node.noise {
                        m.noise = noise.clone();
                    }
                    m
                }
                None => {
                    let terms = node.terms.iter().map(|t| t.map_keys(&lookup)).collect::<Result<Vec<_>, _>>()?;
                    let noise = node.noise.clone().unwrap_or(NoiseSpec::Constant { value: 0.0 });
                    Mechanism::catalog(i, terms, noise)
                }
            };
            mechanisms.push(m);
        }
        Scm::new(graph, mechanisms)
    }

    /// Document for a model built from built-in mechanisms.
    pub fn describe(scm: &Scm, label: Option<LabelDoc>) -> Result<Self, ScmError> {
        let names = scm.graph().names().to_vec();
        let nodes = scm
            .mechanisms()
            .iter()
            .map(|m| {
                let name = names[m.node].clone();
                match &m.kind {
                    MechanismKind::Builtin(b) => Ok(NodeDoc { name, builtin: Some(b.name().into()), terms: vec![], noise: None }),
                    MechanismKind::Catalog(terms) => {
                        let terms = terms
                            .iter()
                            .map(|t| t.map_keys(&|k: &usize| Ok::<_, ScmError>(names[*k].clone())))
                            .collect::<Result<Vec<_>, _>>()?;
                        Ok(NodeDoc { name, builtin: None, terms, noise: Some(m.noise.clone()) })
                    }
                }
            })
            .collect::<Result<Vec<_>, ScmError>>()?;
        let edges = scm.graph().edges().into_iter().map(|(p, c)| (names[p].clone(), names[c].clone())).collect();
        Ok(Self { nodes, edges, label })
    }
}
