//! Flat domain table: foods, nutrients, consequences and risk groups.
//!
//! One record per line, fields separated by `|`, lists by `,`:
//!
//! ```text
//! entity <id> | <label> | beverage|solid | <tags> | <nutrients> | <alternative ids>
//! nutrient <name> | <harms> | <benefits>
//! risk <id> | <label> | age>=<years> | <consequences>
//! ```
//!
//! `#` starts a comment line.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Beverage,
    Solid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub label: String,
    pub kind: EntityKind,
    pub tags: Vec<String>,
    pub nutrients: Vec<String>,
    pub alternatives: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nutrient {
    pub name: String,
    pub harms: Vec<String>,
    pub benefits: Vec<String>,
}

/// A user group at particular risk of some consequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Risk {
    pub id: String,
    pub label: String,
    pub min_age: u32,
    pub consequences: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeTable {
    pub entities: Vec<Entity>,
    pub nutrients: BTreeMap<String, Nutrient>,
    pub risks: Vec<Risk>,
}

fn list(field: &str) -> Vec<String> {
    field
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl KnowledgeTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut t = KnowledgeTable::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let indent = raw.len() - raw.trim_start().len();
            let (kw, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
            let fields: Vec<&str> = rest.split('|').map(str::trim).collect();
            let want = match kw {
                "entity" => 6,
                "nutrient" => 3,
                "risk" => 4,
                _ => return Err(Error::parse(line, indent + 1, format!("unknown record '{kw}'"))),
            };
            if fields.len() != want {
                return Err(Error::parse(
                    line,
                    indent + 1,
                    format!("'{kw}' needs {want} fields, found {}", fields.len()),
                ));
            }
            if fields[0].is_empty() {
                return Err(Error::parse(line, indent + kw.len() + 2, "empty identifier"));
            }
            // column of field k, for messages
            let col = |k: usize| -> usize {
                let mut c = indent + kw.len() + 2;
                for f in rest.split('|').take(k) {
                    c += f.chars().count() + 1;
                }
                c
            };
            match kw {
                "entity" => {
                    let kind = match fields[2] {
                        "beverage" => EntityKind::Beverage,
                        "solid" => EntityKind::Solid,
                        other => {
                            return Err(Error::parse(line, col(2), format!("kind must be beverage or solid, got '{other}'")))
                        }
                    };
                    if t.entity(fields[0]).is_some() {
                        return Err(Error::parse(line, col(0), format!("duplicate entity '{}'", fields[0])));
                    }
                    t.entities.push(Entity {
                        id: fields[0].into(),
                        label: fields[1].into(),
                        kind,
                        tags: list(fields[3]),
                        nutrients: list(fields[4]),
                        alternatives: list(fields[5]),
                    });
                }
                "nutrient" => {
                    t.nutrients.insert(
                        fields[0].into(),
                        Nutrient {
                            name: fields[0].into(),
                            harms: list(fields[1]),
                            benefits: list(fields[2]),
                        },
                    );
                }
                _ => {
                    let min_age = fields[2]
                        .strip_prefix("age>=")
                        .and_then(|v| v.trim().parse().ok())
                        .ok_or_else(|| Error::parse(line, col(2), format!("expected age>=<years>, got '{}'", fields[2])))?;
                    t.risks.push(Risk {
                        id: fields[0].into(),
                        label: fields[1].into(),
                        min_age,
                        consequences: list(fields[3]),
                    });
                }
            }
        }
        t.check()?;
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Every referenced nutrient and alternative must exist.
    pub fn check(&self) -> Result<()> {
        for e in &self.entities {
            if let Some(n) = e.nutrients.iter().find(|n| !self.nutrients.contains_key(*n)) {
                return Err(Error::Config(format!("entity '{}' lists unknown nutrient '{n}'", e.id)));
            }
            if let Some(a) = e.alternatives.iter().find(|a| self.entity(a).is_none()) {
                return Err(Error::Config(format!("entity '{}' lists unknown alternative '{a}'", e.id)));
            }
        }
        Ok(())
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }

    /// Looks an entity up by id or label.
    pub fn resolve(&self, name: &str) -> Option<&Entity> {
        self.entity(name).or_else(|| self.entities.iter().find(|e| e.label == name))
    }

    /// Consequences reachable from `entity` through its nutrients, in
    /// table order: harms when `harmful`, benefits otherwise.
    pub fn consequences(&self, entity: &Entity, harmful: bool) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for n in &entity.nutrients {
            let nut = &self.nutrients[n];
            for c in if harmful { &nut.harms } else { &nut.benefits } {
                if !out.contains(c) {
                    out.push(c.clone());
                }
            }
        }
        out
    }

    /// Nutrients of `entity` linked to `consequence`.
    pub fn nutrients_for(&self, entity: &Entity, consequence: &str, harmful: bool) -> Vec<String> {
        entity
            .nutrients
            .iter()
            .filter(|n| {
                let nut = &self.nutrients[*n];
                let list = if harmful { &nut.harms } else { &nut.benefits };
                list.iter().any(|c| c == consequence)
            })
            .cloned()
            .collect()
    }
}
