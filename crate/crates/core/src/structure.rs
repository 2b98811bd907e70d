//! GA-level structure: the ordered list of modules, each a start symbol with
//! bounds on how many layers it may hold.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructureError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("structure has no entries")]
    Empty,
    #[error("unknown non-terminal <{0}>")]
    UnknownNonTerminal(String),
    #[error("module {0} must allow at least one layer")]
    ZeroMinimum(String),
    #[error("module {name}: min {min} exceeds max {max}")]
    MinExceedsMax { name: String, min: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureEntry {
    pub nonterminal: String,
    pub min_layers: usize,
    pub max_layers: usize,
}

/// Bounds are not checked on construction; see `Grammar::validate_structure`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GaStructure {
    pub entries: Vec<StructureEntry>,
}

impl GaStructure {
    pub fn new(entries: Vec<StructureEntry>) -> Self {
        GaStructure { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of per-module minima: the fewest layers any individual can have.
    pub fn min_total_layers(&self) -> usize {
        self.entries.iter().map(|e| e.min_layers).sum()
    }
}

impl fmt::Display for GaStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{} {} {}", e.nonterminal, e.min_layers, e.max_layers)?;
        }
        Ok(())
    }
}

/// Parses a structure file: one `name min max` entry per line, in module
/// order. The name may be written bare or as `<name>`.
pub fn parse_structure(text: &str) -> Result<GaStructure, StructureError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let [name, min, max] = fields[..] else {
            return Err(StructureError::Malformed {
                line,
                reason: format!("expected `name min max`, found `{content}`"),
            });
        };
        let name = name
            .strip_prefix('<')
            .and_then(|n| n.strip_suffix('>'))
            .unwrap_or(name);
        let bound = |s: &str| {
            s.parse::<usize>().map_err(|_| StructureError::Malformed {
                line,
                reason: format!("`{s}` is not a non-negative integer"),
            })
        };
        entries.push(StructureEntry {
            nonterminal: name.to_string(),
            min_layers: bound(min)?,
            max_layers: bound(max)?,
        });
    }
    Ok(GaStructure { entries })
}
