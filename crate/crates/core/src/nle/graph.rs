use serde::{Deserialize, Serialize};

use super::knowledge::KnowledgeTable;
use super::{Intention, UserModel};
use crate::error::{Error, Result};
use crate::shapley::Attribution;

/// Features kept when building a graph.
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Entity,
    Food,
    Nutrient,
    Consequence,
    UserAttribute,
    Class,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub label: String,
    /// What put the node into the graph.
    pub provenance: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub source: String,
    pub target: String,
    pub relation: String,
}

/// A food flagged by the attribution, with the direction to push it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flagged {
    pub entity: String,
    pub phi: f64,
    pub intention: Intention,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplanationGraph {
    pub nodes: Vec<Node>,
    pub arcs: Vec<Arc>,
    pub flagged: Vec<Flagged>,
    /// Attribution features that matched nothing in the table.
    pub warnings: Vec<String>,
}

impl ExplanationGraph {
    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.label.as_str()).collect()
    }

    pub fn add_node(&mut self, id: &str, kind: NodeKind, label: &str, provenance: &str) {
        if self.node(id).is_none() {
            self.nodes.push(Node {
                id: id.into(),
                kind,
                label: label.into(),
                provenance: provenance.into(),
            });
        }
    }

    pub fn add_arc(&mut self, source: &str, target: &str, relation: &str) -> Result<()> {
        for end in [source, target] {
            if self.node(end).is_none() {
                return Err(Error::invalid(format!("arc references missing node '{end}'")));
            }
        }
        let arc = Arc {
            source: source.into(),
            target: target.into(),
            relation: relation.into(),
        };
        if !self.arcs.contains(&arc) {
            self.arcs.push(arc);
        }
        Ok(())
    }
}

fn nid(kind: &str, name: &str) -> String {
    format!("{kind}:{name}")
}

/// Builds the graph for the `top_k` features with the largest `|phi|`
/// (ties by feature index). A positive `phi` pushes toward the explained
/// outcome (the violation), so its food is to be discouraged.
pub fn graph_from_attribution(
    attr: &Attribution,
    table: &KnowledgeTable,
    user: &UserModel,
    top_k: usize,
) -> ExplanationGraph {
    let mut g = ExplanationGraph::default();
    let class = nid("class", &attr.output.to_string());
    g.add_node(&class, NodeKind::Class, &format!("output {}", attr.output), "explained output");
    let mut order: Vec<usize> = (0..attr.phi.len()).collect();
    order.sort_by(|&a, &b| attr.phi[b].abs().total_cmp(&attr.phi[a].abs()).then(a.cmp(&b)));
    for &i in order.iter().take(top_k) {
        let name = attr
            .feature_names
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("feature {i}"));
        let Some(entity) = table.resolve(&name) else {
            g.warnings.push(format!("feature '{name}' has no entry in the knowledge table"));
            continue;
        };
        let phi = attr.phi[i];
        let intention = if phi > 0.0 {
            Intention::Discourage
        } else {
            Intention::Encourage
        };
        let harmful = intention == Intention::Discourage;
        let food = nid("food", &entity.id);
        g.add_node(&food, NodeKind::Food, &entity.label, &format!("shapley: {name} phi={phi:e}"));
        g.add_arc(&food, &class, if harmful { "raises" } else { "lowers" }).unwrap();
        g.flagged.push(Flagged {
            entity: entity.id.clone(),
            phi,
            intention,
        });
        for n in &entity.nutrients {
            let nut = &table.nutrients[n];
            let list = if harmful { &nut.harms } else { &nut.benefits };
            if list.is_empty() {
                continue;
            }
            let nn = nid("nutrient", n);
            g.add_node(&nn, NodeKind::Nutrient, n, "knowledge table");
            g.add_arc(&food, &nn, "contains").unwrap();
            for c in list {
                let cn = nid("consequence", c);
                g.add_node(&cn, NodeKind::Consequence, c, "knowledge table");
                g.add_arc(&nn, &cn, if harmful { "can cause" } else { "supports" }).unwrap();
            }
        }
    }
    for risk in &table.risks {
        if user.age < risk.min_age {
            continue;
        }
        let hits: Vec<&String> = risk
            .consequences
            .iter()
            .filter(|c| g.node(&nid("consequence", c)).is_some())
            .collect();
        if hits.is_empty() {
            continue;
        }
        let rn = nid("user", &risk.id);
        g.add_node(&rn, NodeKind::UserAttribute, &risk.label, "user model");
        for c in hits {
            g.add_arc(&rn, &nid("consequence", c), "at risk of").unwrap();
        }
    }
    g
}
