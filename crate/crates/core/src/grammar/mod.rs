//! Declarative view specs: parsing, schema checks, compilation to plans and
//! interactivity injection.

mod compile;
mod inject;
mod parse;
mod spec;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use compile::{compile, validate_against_schema, AggregateExpr, Lineage, Plan, PlanColumn, Predicate, Step};
pub use inject::inject_interactivity;
pub use parse::{parse_spec, parse_spec_value};
pub use spec::*;

/// Formal JSON Schema for view spec documents, used as the structured-output
/// contract for the visualization agent.
pub const VIEW_SPEC_SCHEMA: &str = include_str!("../../../../schemas/view_spec.schema.json");

/// A parse or semantic problem located by a JSON pointer into the document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarError {
    pub path: String,
    pub message: String,
}

impl GrammarError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        GrammarError {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for GrammarError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "/: {}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for GrammarError {}
