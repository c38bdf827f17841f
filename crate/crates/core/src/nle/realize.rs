//! Slot filling and surface realization.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::knowledge::EntityKind;
use super::template::Leaf;
use super::Period;
use crate::error::{Error, Result};

pub const SLOTS: [&str; 8] = ["ENTITY", "QTY", "MAX", "NUTRIENT", "CONSEQUENCE", "ALTERNATIVE", "VERB", "TENSE"];

/// Lemmas rotated for variety when a leaf asks for `{VERB:*}`.
pub const VERB_POOL: [&str; 2] = ["consume", "intake"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerbForm {
    Base,
    /// Past simple.
    Past,
    /// Present continuous with a second-person subject.
    Continuous,
}

/// Values for one realization. `VERB` is derived from `kind`, `period`
/// and `pool_lemma` rather than stored in `values`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slots {
    pub values: BTreeMap<String, String>,
    pub kind: Option<EntityKind>,
    pub period: Period,
    pub pool_lemma: String,
}

impl Slots {
    pub fn new(period: Period) -> Self {
        Self {
            values: BTreeMap::new(),
            kind: None,
            period,
            pool_lemma: VERB_POOL[0].into(),
        }
    }

    pub fn set(&mut self, slot: &str, value: impl Into<String>) -> &mut Self {
        self.values.insert(slot.into(), value.into());
        self
    }
}

fn inflect(lemma: &str, form: VerbForm) -> Result<String> {
    let (base, past, ing) = match lemma {
        "drink" => ("drink", "drank", "drinking"),
        "eat" => ("eat", "ate", "eating"),
        "consume" => ("consume", "consumed", "consuming"),
        // the noun "intake" is realized through the phrasal verb
        "intake" => ("take in", "took in", "taking in"),
        "have" => ("have", "had", "having"),
        other => return Err(Error::Config(format!("no inflection known for verb '{other}'"))),
    };
    Ok(match form {
        VerbForm::Base => base.into(),
        VerbForm::Past => past.into(),
        VerbForm::Continuous => format!("are {ing}"),
    })
}

fn verb(spec: &str, slots: &Slots) -> Result<String> {
    let mut parts = spec.splitn(2, ':');
    let lemma = parts.next().unwrap_or("");
    let form = parts.next();
    let lemma = match lemma {
        "" => match slots.kind {
            Some(EntityKind::Beverage) => "drink",
            Some(EntityKind::Solid) => "eat",
            None => return Err(Error::Config("slot VERB needs an entity kind".into())),
        },
        "*" => slots.pool_lemma.as_str(),
        l => l,
    };
    let form = match form {
        None | Some("") => match slots.period {
            Period::Moment => VerbForm::Past,
            Period::Ongoing => VerbForm::Continuous,
        },
        Some("past") => VerbForm::Past,
        Some("cont") => VerbForm::Continuous,
        Some("base") => VerbForm::Base,
        Some(other) => return Err(Error::Config(format!("unknown verb form '{other}'"))),
    };
    inflect(lemma, form)
}

/// Fills `{SLOT}` and `{VERB[:lemma[:form]]}` markers, capitalizes the
/// first letter and adds a period unless the leaf is `nopunct` or already
/// ends in sentence punctuation. `lemma` may be empty (by entity kind) or
/// `*` (variety pool); `form` is `past`, `cont` or `base` and defaults by
/// period.
pub fn realize(leaf: &Leaf, slots: &Slots) -> Result<String> {
    let mut out = String::new();
    let mut rest = leaf.text.as_str();
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let end = rest[start..]
            .find('}')
            .ok_or_else(|| Error::Config(format!("unclosed slot in template line {}", leaf.line)))?
            + start;
        let marker = &rest[start + 1..end];
        let (name, spec) = marker.split_once(':').unwrap_or((marker, ""));
        if name == "VERB" {
            out.push_str(&verb(spec, slots)?);
        } else if SLOTS.contains(&name) {
            let v = slots
                .values
                .get(name)
                .ok_or_else(|| Error::Config(format!("missing value for slot {name}")))?;
            out.push_str(v);
        } else {
            return Err(Error::Config(format!("unknown slot {{{marker}}}")));
        }
        rest = &rest[end + 1..];
    }
    out.push_str(rest);
    let mut s = out.split_whitespace().collect::<Vec<_>>().join(" ");
    if let Some(first) = s.chars().next() {
        let upper: String = first.to_uppercase().collect();
        s.replace_range(..first.len_utf8(), &upper);
    }
    if !leaf.nopunct && !s.ends_with(['.', '!', '?']) {
        s.push('.');
    }
    Ok(s)
}

/// `a`, `a and b`, `a, b and c`.
pub fn join_and(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Integers without a fraction, other values as given by `{}`.
pub fn quantity(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
