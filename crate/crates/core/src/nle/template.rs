//! Template decision trees.
//!
//! ```text
//! tree feedback
//!   when intention = discourage
//!     when period = ongoing
//!       leaf "{TENSE} you {VERB:*:past} too much {ENTITY}"
//!     otherwise
//!       leaf "you {VERB} too much {ENTITY} {TENSE}"
//!   otherwise
//!     leaf nopunct "{ENTITY} is fine"
//! ```
//!
//! Children are tried in order; the first `leaf`, true `when` or
//! `otherwise` is taken. Nesting is by indentation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Op {
    fn symbol(self) -> &'static str {
        match self {
            Op::Eq => "=",
            Op::Ne => "!=",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub field: String,
    pub op: Op,
    pub value: String,
    pub line: usize,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} (line {})", self.field, self.op.symbol(), self.value, self.line)
    }
}

impl Condition {
    /// Numeric comparison when both sides parse as numbers, string
    /// comparison otherwise. A field missing from `facts` is an error.
    pub fn holds(&self, facts: &Facts) -> Result<bool> {
        let actual = facts
            .get(&self.field)
            .ok_or_else(|| Error::Config(format!("condition {self} uses unknown field '{}'", self.field)))?;
        let ord = match (actual.parse::<f64>(), self.value.parse::<f64>()) {
            (Ok(a), Ok(b)) => a.partial_cmp(&b),
            _ => Some(actual.as_str().cmp(self.value.as_str())),
        };
        let Some(ord) = ord else { return Ok(false) };
        Ok(match self.op {
            Op::Eq => ord.is_eq(),
            Op::Ne => !ord.is_eq(),
            Op::Lt => ord.is_lt(),
            Op::Le => ord.is_le(),
            Op::Gt => ord.is_gt(),
            Op::Ge => ord.is_ge(),
        })
    }
}

/// Field values conditions are evaluated against.
pub type Facts = BTreeMap<String, String>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub text: String,
    /// Skip the terminal period.
    pub nopunct: bool,
    pub line: usize,
}

impl Leaf {
    pub fn new(text: &str) -> Self {
        Self {
            text: text.into(),
            nopunct: false,
            line: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(Leaf),
    When { condition: Condition, children: Vec<Node> },
    Otherwise { line: usize, children: Vec<Node> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateTree {
    pub name: String,
    pub children: Vec<Node>,
}

impl TemplateTree {
    /// A tree holding one leaf.
    pub fn single(name: &str, leaf: Leaf) -> Self {
        Self {
            name: name.into(),
            children: vec![Node::Leaf(leaf)],
        }
    }
}

/// Named trees, typically `feedback`, `argument` and `suggestion`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub trees: BTreeMap<String, TemplateTree>,
}

struct Line<'a> {
    number: usize,
    indent: usize,
    text: &'a str,
}

fn parse_leaf(l: &Line<'_>) -> Result<Leaf> {
    let mut rest = l.text["leaf".len()..].trim_start();
    let mut nopunct = false;
    if let Some(r) = rest.strip_prefix("nopunct") {
        nopunct = true;
        rest = r.trim_start();
    }
    let col = l.indent + l.text.len() - rest.len() + 1;
    let inner = rest
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .ok_or_else(|| Error::parse(l.number, col, "leaf text must be double-quoted"))?;
    Ok(Leaf {
        text: inner.to_string(),
        nopunct,
        line: l.number,
    })
}

fn parse_condition(l: &Line<'_>) -> Result<Condition> {
    let rest = l.text["when".len()..].trim();
    let col = l.indent + "when".len() + 2;
    let parts: Vec<&str> = rest.splitn(3, char::is_whitespace).collect();
    if parts.len() != 3 {
        return Err(Error::parse(l.number, col, "expected 'when <field> <op> <value>'"));
    }
    let op = match parts[1] {
        "=" | "==" => Op::Eq,
        "!=" => Op::Ne,
        "<" => Op::Lt,
        "<=" => Op::Le,
        ">" => Op::Gt,
        ">=" => Op::Ge,
        other => return Err(Error::parse(l.number, col + parts[0].len() + 1, format!("unknown operator '{other}'"))),
    };
    Ok(Condition {
        field: parts[0].into(),
        op,
        value: parts[2].trim().trim_matches('"').into(),
        line: l.number,
    })
}

fn parse_block(lines: &[Line<'_>], pos: &mut usize, indent: usize) -> Result<Vec<Node>> {
    let mut out = Vec::new();
    while *pos < lines.len() {
        let l = &lines[*pos];
        if l.indent < indent || l.text.starts_with("tree ") || l.text == "tree" {
            break;
        }
        if l.indent > indent {
            return Err(Error::parse(l.number, l.indent + 1, "unexpected indentation"));
        }
        *pos += 1;
        let word = l.text.split_whitespace().next().unwrap_or("");
        let child_indent = lines.get(*pos).map(|n| n.indent).filter(|&i| i > indent);
        let children = |pos: &mut usize| -> Result<Vec<Node>> {
            match child_indent {
                Some(ci) => parse_block(lines, pos, ci),
                None => Err(Error::parse(l.number, l.indent + 1, format!("'{word}' has no children"))),
            }
        };
        match word {
            "leaf" => {
                if child_indent.is_some() {
                    return Err(Error::parse(lines[*pos].number, lines[*pos].indent + 1, "a leaf cannot have children"));
                }
                out.push(Node::Leaf(parse_leaf(l)?));
            }
            "when" => {
                let condition = parse_condition(l)?;
                out.push(Node::When {
                    condition,
                    children: children(pos)?,
                });
            }
            "otherwise" => out.push(Node::Otherwise {
                line: l.number,
                children: children(pos)?,
            }),
            _ => {
                return Err(Error::parse(
                    l.number,
                    l.indent + 1,
                    format!("expected leaf, when or otherwise, found '{word}'"),
                ))
            }
        }
    }
    Ok(out)
}

impl TemplateSet {
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<Line<'_>> = text
            .lines()
            .enumerate()
            .filter_map(|(i, raw)| {
                let t = raw.trim();
                if t.is_empty() || t.starts_with('#') {
                    return None;
                }
                Some(Line {
                    number: i + 1,
                    indent: raw.len() - raw.trim_start().len(),
                    text: t,
                })
            })
            .collect();
        let mut set = TemplateSet::default();
        let mut pos = 0;
        while pos < lines.len() {
            let l = &lines[pos];
            let name = l
                .text
                .strip_prefix("tree ")
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| Error::parse(l.number, l.indent + 1, "expected 'tree <name>'"))?;
            pos += 1;
            let children = match lines.get(pos) {
                Some(n) if n.indent > l.indent => parse_block(&lines, &mut pos, n.indent)?,
                _ => return Err(Error::parse(l.number, l.indent + 1, format!("tree '{name}' is empty"))),
            };
            if set.trees.contains_key(name) {
                return Err(Error::parse(l.number, l.indent + 1, format!("duplicate tree '{name}'")));
            }
            set.trees.insert(
                name.to_string(),
                TemplateTree {
                    name: name.to_string(),
                    children,
                },
            );
        }
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn tree(&self, name: &str) -> Result<&TemplateTree> {
        self.trees
            .get(name)
            .ok_or_else(|| Error::Config(format!("no template tree named '{name}'")))
    }
}

fn descend<'t>(nodes: &'t [Node], facts: &Facts, failed: &mut Vec<String>) -> Result<Option<&'t Leaf>> {
    for n in nodes {
        match n {
            Node::Leaf(l) => return Ok(Some(l)),
            Node::When { condition, children } => {
                if condition.holds(facts)? {
                    return match descend(children, facts, failed)? {
                        Some(l) => Ok(Some(l)),
                        None => {
                            failed.push(format!("under {condition}"));
                            Ok(None)
                        }
                    };
                }
                failed.push(condition.to_string());
            }
            Node::Otherwise { children, .. } => return descend(children, facts, failed),
        }
    }
    Ok(None)
}

/// First leaf reached by ordered descent.
pub fn select_template<'t>(tree: &'t TemplateTree, facts: &Facts) -> Result<&'t Leaf> {
    let mut failed = Vec::new();
    descend(&tree.children, facts, &mut failed)?.ok_or_else(|| {
        Error::Config(format!(
            "template tree '{}' reaches no leaf; failing conditions: {}",
            tree.name,
            failed.join("; ")
        ))
    })
}
