//! Shared diagnostic vocabulary.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

/// Returns true when any item reports [`Severity::Error`].
pub fn has_errors<'a, I, T>(items: I, severity: impl Fn(&T) -> Severity) -> bool
where
    I: IntoIterator<Item = &'a T>,
    T: 'a,
{
    items.into_iter().any(|d| severity(d) == Severity::Error)
}
