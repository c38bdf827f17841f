use serde::{Deserialize, Serialize};

use super::graph::{ExplanationGraph, NodeKind};
use super::knowledge::{Entity, KnowledgeTable};
use super::realize::{join_and, quantity, realize, Slots, VERB_POOL};
use super::template::{select_template, Facts, TemplateSet};
use super::{Goal, Intention, MessageHistory, Period, UserModel, Violation};
use crate::error::{Error, Result};

/// Alternatives suggested in this many recent messages about the same
/// entity are not suggested again.
pub const HISTORY_HORIZON: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub feedback: String,
    pub argument: String,
    pub suggestion: Option<String>,
    /// No admissible alternative existed, so the suggestion was left out.
    pub suggestion_omitted: bool,
    pub alternative: Option<String>,
    pub consequence: Option<String>,
    /// Lemma used for `{VERB:*}` slots.
    pub verb: String,
}

impl Message {
    pub fn text(&self) -> String {
        let mut parts = vec![self.feedback.as_str(), self.argument.as_str()];
        if let Some(s) = &self.suggestion {
            parts.push(s);
        }
        parts.retain(|p| !p.is_empty());
        parts.join(" ")
    }
}

/// Alternatives to `entity` in table order that fit the diet, are not
/// themselves targeted for reduction, and were not suggested in the last
/// [`HISTORY_HORIZON`] messages about `entity`.
pub fn admissible_alternatives(
    entity: &Entity,
    user: &UserModel,
    history: &MessageHistory,
    table: &KnowledgeTable,
) -> Vec<String> {
    let recent: Vec<&str> = history
        .recent(&entity.id, HISTORY_HORIZON)
        .filter_map(|e| e.alternative.as_deref())
        .collect();
    entity
        .alternatives
        .iter()
        .filter(|a| *a != &entity.id)
        .filter(|a| table.entity(a).is_some_and(|e| user.allows(e)))
        .filter(|a| user.goals.get(*a) != Some(&Goal::Reduce))
        .filter(|a| !recent.contains(&a.as_str()))
        .cloned()
        .collect()
}

/// Renders feedback, argument and suggestion for `violation`. The trees
/// `feedback`, `argument` and `suggestion` are looked up in `templates`.
pub fn compose_explanation(
    graph: &ExplanationGraph,
    violation: &Violation,
    user: &UserModel,
    history: &MessageHistory,
    table: &KnowledgeTable,
    templates: &TemplateSet,
) -> Result<Message> {
    violation.check()?;
    let entity = table
        .entity(&violation.entity)
        .ok_or_else(|| Error::invalid(format!("entity '{}' is not in the knowledge table", violation.entity)))?;
    let food = format!("food:{}", entity.id);
    if graph.node(&food).is_none() {
        return Err(Error::invalid(format!("explanation graph has no node for '{}'", entity.id)));
    }
    let harmful = violation.intention == Intention::Discourage;
    let last = history.recent(&entity.id, 1).next();

    // argument facet: avoid repeating the previous consequence
    let candidates = table.consequences(entity, harmful);
    let consequence = candidates
        .iter()
        .find(|c| last.and_then(|e| e.consequence.as_ref()) != Some(*c))
        .or(candidates.first())
        .cloned();
    let risk = consequence.as_ref().is_some_and(|c| {
        let target = format!("consequence:{c}");
        graph.arcs.iter().any(|a| {
            a.target == target && graph.node(&a.source).is_some_and(|n| n.kind == NodeKind::UserAttribute)
        })
    });
    let verb = match last {
        Some(e) => {
            let i = VERB_POOL.iter().position(|v| *v == e.verb).map_or(0, |i| i + 1);
            VERB_POOL[i % VERB_POOL.len()]
        }
        None => VERB_POOL[0],
    };
    let alternatives = admissible_alternatives(entity, user, history, table);
    let alternative = alternatives.first().cloned();

    let mut facts = Facts::new();
    let mut fact = |k: &str, v: String| {
        facts.insert(k.to_string(), v);
    };
    fact("intention", violation.intention.name().into());
    fact("period", violation.period.name().into());
    fact("meal", violation.meal.clone().unwrap_or_default());
    fact(
        "kind",
        match entity.kind {
            super::EntityKind::Beverage => "beverage".into(),
            super::EntityKind::Solid => "solid".into(),
        },
    );
    fact("entity", entity.id.clone());
    fact("plural", entity.tags.iter().any(|t| t == "plural").to_string());
    fact("age", user.age.to_string());
    fact("vegetarian", user.vegetarian.to_string());
    fact("risk", risk.to_string());
    fact(
        "goal",
        match user.goals.get(&entity.id) {
            Some(Goal::Reduce) => "reduce".into(),
            Some(Goal::Increase) => "increase".into(),
            None => "none".into(),
        },
    );
    fact("alternative", alternative.is_some().to_string());

    let mut slots = Slots::new(violation.period);
    slots.kind = Some(entity.kind);
    slots.pool_lemma = verb.into();
    slots
        .set("ENTITY", entity.label.clone())
        .set("QTY", quantity(violation.observed))
        .set("MAX", quantity(violation.allowed));
    slots.set(
        "TENSE",
        match violation.period {
            Period::Ongoing => "this week".to_string(),
            Period::Moment => format!("for {}", violation.meal.as_deref().unwrap_or("your last meal")),
        },
    );
    if let Some(c) = &consequence {
        slots.set("CONSEQUENCE", c.clone());
        slots.set("NUTRIENT", join_and(&table.nutrients_for(entity, c, harmful)));
    }
    if let Some(a) = &alternative {
        slots.set("ALTERNATIVE", table.entity(a).map_or(a.clone(), |e| e.label.clone()));
    }

    let part = |tree: &str| -> Result<String> { realize(select_template(templates.tree(tree)?, &facts)?, &slots) };
    let feedback = part("feedback")?;
    let argument = part("argument")?;
    let suggestion = match alternative {
        Some(_) => Some(part("suggestion")?),
        None => None,
    };
    let message = Message {
        feedback,
        argument,
        suggestion_omitted: suggestion.is_none(),
        suggestion,
        alternative,
        consequence,
        verb: verb.into(),
    };
    if !message.text().contains(&entity.label) {
        return Err(Error::Config(format!(
            "templates dropped the entity label '{}' from the message",
            entity.label
        )));
    }
    Ok(message)
}
