//! Natural-language explanations of dietary violations.
//!
//! An attribution becomes an explanation graph (foods, nutrients,
//! consequences, user risk groups); template decision trees pick a leaf per
//! message part given the violation and user model; leaves are realized
//! into English with slot filling, verb choice and tense.

mod compose;
mod graph;
mod knowledge;
mod realize;
mod template;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub use compose::{admissible_alternatives, compose_explanation, Message, HISTORY_HORIZON};
pub use graph::{graph_from_attribution, Arc, ExplanationGraph, Flagged, Node, NodeKind, DEFAULT_TOP_K};
pub use knowledge::{Entity, EntityKind, KnowledgeTable, Nutrient, Risk};
pub use realize::{join_and, quantity, realize, Slots, VerbForm, SLOTS, VERB_POOL};
pub use template::{select_template, Condition, Facts, Leaf, Node as TemplateNode, Op, TemplateSet, TemplateTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intention {
    Encourage,
    Discourage,
}

impl Intention {
    pub fn name(self) -> &'static str {
        match self {
            Intention::Encourage => "encourage",
            Intention::Discourage => "discourage",
        }
    }
}

/// When the behaviour happened: a single meal or the running week.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Moment,
    Ongoing,
}

impl Period {
    pub fn name(self) -> &'static str {
        match self {
            Period::Moment => "moment",
            Period::Ongoing => "ongoing",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub entity: String,
    pub observed: f64,
    pub allowed: f64,
    pub intention: Intention,
    /// Meal name for momentary violations, e.g. `lunch`.
    pub meal: Option<String>,
    pub period: Period,
}

impl Violation {
    pub fn new(entity: &str, observed: f64, allowed: f64, intention: Intention, period: Period) -> Result<Self> {
        let v = Self {
            entity: entity.into(),
            observed,
            allowed,
            intention,
            meal: None,
            period,
        };
        v.check()?;
        Ok(v)
    }

    pub fn with_meal(mut self, meal: &str) -> Self {
        self.meal = Some(meal.into());
        self
    }

    pub fn check(&self) -> Result<()> {
        let ok = match self.intention {
            Intention::Discourage => self.observed > self.allowed,
            Intention::Encourage => self.observed < self.allowed,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{} intention with observed {} and allowed {}",
                self.intention.name(),
                self.observed,
                self.allowed
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Goal {
    Reduce,
    Increase,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserModel {
    pub age: u32,
    pub vegetarian: bool,
    /// Persuasion goals by entity id.
    #[serde(default)]
    pub goals: BTreeMap<String, Goal>,
    #[serde(default)]
    pub barriers: Vec<String>,
}

/// Tags a vegetarian diet rules out.
pub const NON_VEGETARIAN_TAGS: [&str; 2] = ["meat", "fish"];

impl UserModel {
    pub fn allows(&self, entity: &Entity) -> bool {
        !(self.vegetarian && entity.tags.iter().any(|t| NON_VEGETARIAN_TAGS.contains(&t.as_str())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// Position in the history, starting at 0.
    pub step: u64,
    pub entity: String,
    pub alternative: Option<String>,
    pub consequence: Option<String>,
    pub verb: String,
    pub text: String,
}

/// Messages already delivered to one user, oldest first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MessageHistory {
    entries: Vec<HistoryEntry>,
}

impl MessageHistory {
    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn record(&mut self, violation: &Violation, message: &Message) {
        self.entries.push(HistoryEntry {
            step: self.entries.len() as u64,
            entity: violation.entity.clone(),
            alternative: message.alternative.clone(),
            consequence: message.consequence.clone(),
            verb: message.verb.clone(),
            text: message.text(),
        });
    }

    /// Most recent entries about `entity`, newest first.
    pub fn recent<'a>(&'a self, entity: &'a str, n: usize) -> impl Iterator<Item = &'a HistoryEntry> + 'a {
        self.entries.iter().rev().filter(move |e| e.entity == entity).take(n)
    }
}

/// A small food table covering the examples in the documentation.
pub const EXAMPLE_KNOWLEDGE: &str = "\
# entity id | label | kind | tags | nutrients | alternatives
entity cold_cuts | cold cuts | solid | meat, plural | animal fats, salt | fresh_fish, legumes, cheese
entity red_meat | red meat | solid | meat | animal fats, iron | fresh_fish, legumes, cheese
entity fresh_fish | fresh fish | solid | fish | omega-3 fats |
entity legumes | legumes | solid | plural | fibre, plant proteins |
entity cheese | cheese | solid | dairy | animal fats, salt, calcium |
entity fruit_juice | fruit juice | beverage | | sugars | water, fresh_fruit
entity water | water | beverage | | |
entity fresh_fruit | fresh fruit | solid | | fibre, vitamins |
entity vegetables | vegetables | solid | plural | fibre, vitamins | legumes, fresh_fruit
# nutrient name | harms | benefits
nutrient animal fats | cardiovascular diseases |
nutrient salt | cardiovascular diseases, hypertension |
nutrient iron | | oxygen transport
nutrient sugars | diabetes, tooth decay |
nutrient omega-3 fats | | heart health
nutrient fibre | | digestion
nutrient vitamins | | immune defence
nutrient plant proteins | | muscle maintenance
nutrient calcium | | bone health
# risk id | label | age>=years | consequences
risk over60 | People over 60 years old | age>=60 | cardiovascular diseases
";

/// Feedback, argument and suggestion trees matching [`EXAMPLE_KNOWLEDGE`].
pub const EXAMPLE_TEMPLATES: &str = r#"
tree feedback
  when intention = discourage
    when period = ongoing
      leaf "{TENSE} you {VERB:*:past} too much ({QTY} portions of a maximum {MAX}) {ENTITY}"
    otherwise
      leaf "you {VERB} a lot of {ENTITY} {TENSE}"
  otherwise
    leaf "{TENSE} you had only {QTY} portions of {ENTITY} out of the suggested {MAX}"
tree argument
  when intention = discourage
    when plural = true
      when risk = true
        leaf "{ENTITY} contain {NUTRIENT} that can cause {CONSEQUENCE}. People over 60 years old are particularly at risk"
      otherwise
        leaf "{ENTITY} contain {NUTRIENT} that can cause {CONSEQUENCE}"
    when risk = true
      leaf "{ENTITY} contains {NUTRIENT} that can cause {CONSEQUENCE}. People over 60 years old are particularly at risk"
    otherwise
      leaf "{ENTITY} contains {NUTRIENT} that can cause {CONSEQUENCE}"
  otherwise
    when plural = true
      leaf "{ENTITY} provide {NUTRIENT}, good for {CONSEQUENCE}"
    otherwise
      leaf "{ENTITY} provides {NUTRIENT}, good for {CONSEQUENCE}"
tree suggestion
  when intention = discourage
    leaf nopunct "Next time try with some {ALTERNATIVE}"
  otherwise
    leaf "Try adding some {ALTERNATIVE} as well"
"#;
