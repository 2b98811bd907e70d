//! Context-free layer grammars.
//!
//! A grammar file is a list of rules of the form
//!
//! ```text
//! <pooling> ::= <pool-type> [kernel-size,int,1,1,5]
//!               [stride,int,1,1,3] <padding>
//! <padding> ::= padding:same | padding:valid
//! ```
//!
//! `<name>` is a non-terminal, `key:value` a fixed attribute, and
//! `[name,kind,count,min,max]` a block of `count` numeric values drawn from
//! `[min, max]`. Alternatives are separated by `|` and a rule may continue on
//! following lines that start with `|` or with indentation. `#` starts a
//! comment.
//!
//! Alternative order is significant: the index of an alternative is the value
//! stored in a genotype's expansion choices.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

use crate::structure::{GaStructure, StructureError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrammarError {
    #[error("line {line}: malformed rule: {reason}")]
    MalformedRule { line: usize, reason: String },
    #[error("unknown non-terminal <{0}>")]
    UnknownNonTerminal(String),
    #[error("line {line}: malformed parameter block `{block}`: {reason}")]
    MalformedParamBlock {
        line: usize,
        block: String,
        reason: String,
    },
    #[error("line {line}: <{name}> is defined more than once")]
    DuplicateLhs { line: usize, name: String },
    #[error("line {line}: empty alternative in the rule for <{name}>")]
    EmptyAlternative { line: usize, name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Int,
    Float,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::Int => "int",
            ParamKind::Float => "float",
        }
    }
}

/// A `[name,kind,count,min,max]` terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub kind: ParamKind,
    pub count: usize,
    pub min: f64,
    pub max: f64,
}

impl ParamBlock {
    pub fn contains(&self, value: f64) -> bool {
        value >= self.min
            && value <= self.max
            && (self.kind == ParamKind::Float || value.fract() == 0.0)
    }

    /// Formats one value the way it appears in a decoded layer.
    pub fn format_value(&self, value: f64) -> String {
        match self.kind {
            ParamKind::Int => format!("{}", value as i64),
            ParamKind::Float => format!("{value}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Symbol {
    NonTerminal(String),
    TerminalAttr { key: String, value: String },
    Param(ParamBlock),
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::NonTerminal(name) => write!(f, "<{name}>"),
            Symbol::TerminalAttr { key, value } => write!(f, "{key}:{value}"),
            Symbol::Param(p) => write!(
                f,
                "[{},{},{},{},{}]",
                p.name,
                p.kind.as_str(),
                p.count,
                p.min,
                p.max
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Production {
    pub lhs: String,
    pub alternatives: Vec<Vec<Symbol>>,
}

/// A parsed grammar. Immutable once built; productions keep their source
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    productions: IndexMap<String, Production>,
}

impl Grammar {
    /// Builds a grammar from productions, checking every invariant the parser
    /// checks.
    pub fn from_productions(productions: Vec<Production>) -> Result<Self, GrammarError> {
        let mut map = IndexMap::new();
        for (i, p) in productions.into_iter().enumerate() {
            if p.alternatives.is_empty() || p.alternatives.iter().any(Vec::is_empty) {
                return Err(GrammarError::EmptyAlternative {
                    line: i + 1,
                    name: p.lhs,
                });
            }
            if map.contains_key(&p.lhs) {
                return Err(GrammarError::DuplicateLhs {
                    line: i + 1,
                    name: p.lhs,
                });
            }
            map.insert(p.lhs.clone(), p);
        }
        let grammar = Grammar { productions: map };
        grammar.check_references()?;
        Ok(grammar)
    }

    fn check_references(&self) -> Result<(), GrammarError> {
        for p in self.productions.values() {
            for sym in p.alternatives.iter().flatten() {
                if let Symbol::NonTerminal(name) = sym {
                    if !self.productions.contains_key(name) {
                        return Err(GrammarError::UnknownNonTerminal(name.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn production(&self, nt: &str) -> Option<&Production> {
        self.productions.get(nt)
    }

    pub fn productions(&self) -> impl Iterator<Item = &Production> {
        self.productions.values()
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = &str> {
        self.productions.keys().map(String::as_str)
    }

    pub fn contains(&self, nt: &str) -> bool {
        self.productions.contains_key(nt)
    }

    pub fn len(&self) -> usize {
        self.productions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.productions.is_empty()
    }

    /// Number of alternatives of `nt`; bounds the expansion choices stored
    /// for it.
    pub fn alternatives_count(&self, nt: &str) -> Result<usize, GrammarError> {
        self.productions
            .get(nt)
            .map(|p| p.alternatives.len())
            .ok_or_else(|| GrammarError::UnknownNonTerminal(nt.to_string()))
    }

    /// The terminal set: every attribute token `key:value` and every
    /// parameter block, rendered as written.
    pub fn terminals(&self) -> BTreeSet<String> {
        self.productions
            .values()
            .flat_map(|p| p.alternatives.iter().flatten())
            .filter(|s| !matches!(s, Symbol::NonTerminal(_)))
            .map(|s| s.to_string())
            .collect()
    }

    /// Checks a GA structure against this grammar, collecting every
    /// violation.
    pub fn validate_structure(&self, structure: &GaStructure) -> Result<(), Vec<StructureError>> {
        let mut errors = Vec::new();
        if structure.entries.is_empty() {
            errors.push(StructureError::Empty);
        }
        for entry in &structure.entries {
            if !self.contains(&entry.nonterminal) {
                errors.push(StructureError::UnknownNonTerminal(entry.nonterminal.clone()));
            }
            if entry.min_layers == 0 {
                errors.push(StructureError::ZeroMinimum(entry.nonterminal.clone()));
            }
            if entry.min_layers > entry.max_layers {
                errors.push(StructureError::MinExceedsMax {
                    name: entry.nonterminal.clone(),
                    min: entry.min_layers,
                    max: entry.max_layers,
                });
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// Minimum derivation depth of each non-terminal, `None` when it can
    /// never derive an all-terminal sequence. A rule with only terminals has
    /// depth 1.
    pub fn min_derivation_depths(&self) -> BTreeMap<String, Option<usize>> {
        let mut depth: BTreeMap<&str, usize> = BTreeMap::new();
        loop {
            let mut changed = false;
            for p in self.productions.values() {
                let best = p
                    .alternatives
                    .iter()
                    .filter_map(|alt| {
                        alt.iter().try_fold(1usize, |acc, s| match s {
                            Symbol::NonTerminal(n) => depth.get(n.as_str()).map(|d| acc.max(d + 1)),
                            _ => Some(acc),
                        })
                    })
                    .min();
                if let Some(best) = best {
                    let slot = depth.entry(p.lhs.as_str()).or_insert(usize::MAX);
                    if best < *slot {
                        *slot = best;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        self.productions
            .keys()
            .map(|k| (k.clone(), depth.get(k.as_str()).copied()))
            .collect()
    }

    /// Non-terminals reachable from `start`, including itself.
    pub fn reachable_from(&self, start: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![start.to_string()];
        while let Some(nt) = stack.pop() {
            if !seen.insert(nt.clone()) {
                continue;
            }
            if let Some(p) = self.productions.get(&nt) {
                for sym in p.alternatives.iter().flatten() {
                    if let Symbol::NonTerminal(n) = sym {
                        stack.push(n.clone());
                    }
                }
            }
        }
        seen
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.productions.values() {
            write!(f, "<{}> ::=", p.lhs)?;
            for (i, alt) in p.alternatives.iter().enumerate() {
                if i > 0 {
                    write!(f, " |")?;
                }
                for sym in alt {
                    write!(f, " {sym}")?;
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Bar,
    Sym(Symbol),
}

struct RawRule {
    line: usize,
    lhs: String,
    tokens: Vec<(usize, Token)>,
}

pub fn parse_grammar(text: &str) -> Result<Grammar, GrammarError> {
    let mut rules: Vec<RawRule> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        if content.trim().is_empty() {
            continue;
        }
        if let Some(pos) = content.find("::=") {
            let lhs = parse_lhs(content[..pos].trim(), line)?;
            let tokens = tokenize(&content[pos + 3..], line)?;
            rules.push(RawRule { line, lhs, tokens });
        } else if content.starts_with(char::is_whitespace) || content.starts_with('|') {
            let rule = rules.last_mut().ok_or_else(|| GrammarError::MalformedRule {
                line,
                reason: "continuation line before any rule".into(),
            })?;
            rule.tokens.extend(tokenize(content, line)?);
        } else {
            return Err(GrammarError::MalformedRule {
                line,
                reason: "missing `::=`".into(),
            });
        }
    }

    let mut productions: IndexMap<String, Production> = IndexMap::new();
    for rule in rules {
        if productions.contains_key(&rule.lhs) {
            return Err(GrammarError::DuplicateLhs {
                line: rule.line,
                name: rule.lhs,
            });
        }
        let mut alternatives = vec![Vec::new()];
        let mut last_line = rule.line;
        for (line, tok) in rule.tokens {
            last_line = line;
            match tok {
                Token::Bar => {
                    if alternatives.last().is_some_and(Vec::is_empty) {
                        return Err(GrammarError::EmptyAlternative {
                            line,
                            name: rule.lhs,
                        });
                    }
                    alternatives.push(Vec::new());
                }
                Token::Sym(sym) => alternatives.last_mut().expect("non-empty").push(sym),
            }
        }
        if alternatives.last().is_some_and(Vec::is_empty) {
            return Err(GrammarError::EmptyAlternative {
                line: last_line,
                name: rule.lhs,
            });
        }
        productions.insert(
            rule.lhs.clone(),
            Production {
                lhs: rule.lhs,
                alternatives,
            },
        );
    }

    let grammar = Grammar { productions };
    grammar.check_references()?;
    Ok(grammar)
}

fn parse_lhs(text: &str, line: usize) -> Result<String, GrammarError> {
    let name = text
        .strip_prefix('<')
        .and_then(|t| t.strip_suffix('>'))
        .ok_or_else(|| GrammarError::MalformedRule {
            line,
            reason: format!("left-hand side `{text}` is not a <non-terminal>"),
        })?;
    check_identifier(name, line)?;
    Ok(name.to_string())
}

fn check_identifier(name: &str, line: usize) -> Result<(), GrammarError> {
    if name.is_empty() || name.contains(|c: char| c.is_whitespace() || "<>[]|:".contains(c)) {
        return Err(GrammarError::MalformedRule {
            line,
            reason: format!("invalid non-terminal name `{name}`"),
        });
    }
    Ok(())
}

fn tokenize(text: &str, line: usize) -> Result<Vec<(usize, Token)>, GrammarError> {
    let mut tokens = Vec::new();
    let mut rest = text;
    loop {
        rest = rest.trim_start();
        let Some(first) = rest.chars().next() else {
            break;
        };
        match first {
            '|' => {
                tokens.push((line, Token::Bar));
                rest = &rest[1..];
            }
            '<' => {
                let end = rest.find('>').ok_or_else(|| GrammarError::MalformedRule {
                    line,
                    reason: format!("unterminated non-terminal `{}`", rest.trim_end()),
                })?;
                let name = &rest[1..end];
                check_identifier(name, line)?;
                tokens.push((line, Token::Sym(Symbol::NonTerminal(name.to_string()))));
                rest = &rest[end + 1..];
            }
            '[' => {
                let end = rest
                    .find(']')
                    .ok_or_else(|| GrammarError::MalformedParamBlock {
                        line,
                        block: rest.trim_end().to_string(),
                        reason: "missing `]`".into(),
                    })?;
                let block = parse_param_block(&rest[1..end], line)?;
                tokens.push((line, Token::Sym(Symbol::Param(block))));
                rest = &rest[end + 1..];
            }
            _ => {
                let end = rest
                    .find(|c: char| c.is_whitespace() || c == '|')
                    .unwrap_or(rest.len());
                let word = &rest[..end];
                let (key, value) = word
                    .split_once(':')
                    .filter(|(k, v)| !k.is_empty() && !v.is_empty())
                    .ok_or_else(|| GrammarError::MalformedRule {
                        line,
                        reason: format!("expected `key:value`, found `{word}`"),
                    })?;
                tokens.push((
                    line,
                    Token::Sym(Symbol::TerminalAttr {
                        key: key.to_string(),
                        value: value.to_string(),
                    }),
                ));
                rest = &rest[end..];
            }
        }
    }
    Ok(tokens)
}

fn parse_param_block(inner: &str, line: usize) -> Result<ParamBlock, GrammarError> {
    let fail = |reason: String| GrammarError::MalformedParamBlock {
        line,
        block: format!("[{inner}]"),
        reason,
    };
    let fields: Vec<&str> = inner.split(',').map(str::trim).collect();
    if fields.len() != 5 {
        return Err(fail(format!("expected 5 fields, found {}", fields.len())));
    }
    let name = fields[0];
    if name.is_empty() || name.contains(char::is_whitespace) {
        return Err(fail(format!("invalid name `{name}`")));
    }
    let kind = match fields[1] {
        "int" => ParamKind::Int,
        "float" => ParamKind::Float,
        other => return Err(fail(format!("unknown kind `{other}`"))),
    };
    let count: usize = fields[2]
        .parse()
        .ok()
        .filter(|&c| c >= 1)
        .ok_or_else(|| fail(format!("count `{}` is not a positive integer", fields[2])))?;
    let bound = |s: &str| -> Result<f64, GrammarError> {
        let v: f64 = s
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| fail(format!("bound `{s}` is not a number")))?;
        if kind == ParamKind::Int && v.fract() != 0.0 {
            return Err(fail(format!("int bound `{s}` is not an integer")));
        }
        Ok(v)
    };
    let min = bound(fields[3])?;
    let max = bound(fields[4])?;
    if min > max {
        return Err(fail(format!("min {min} exceeds max {max}")));
    }
    Ok(ParamBlock {
        name: name.to_string(),
        kind,
        count,
        min,
        max,
    })
}
