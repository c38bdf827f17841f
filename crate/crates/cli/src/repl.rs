//! Line-oriented session over one model and dataset: query, add
//! constraints, retrain, query again.

use std::io::BufRead;

use serde::Serialize;
use xattr::fuzzy::{eval_formula, parse_formula, query_groups, train_constrained, Grounding, KnowledgeBase, TrainConfig};
use xattr::models::io::model_to_string;
use xattr::models::TabularDataset;
use xattr::shapley::{exact_shapley, group_parity, BackgroundSet};
use xattr::{Error, Network};

use crate::args::{Command, ReplArgs};
use crate::commands::{dataset, model, weighted};
use crate::{Failure, Outcome, Output};

const HELP: &str = "commands: query <formula>, groups <feature> <bins>, assert <formula> @w, retrain <epochs>, \
                    parity <feature>, save <path>, quit";

/// Rows explained by `parity`.
const PARITY_ROWS: usize = 100;
const PARITY_BACKGROUND: usize = 32;

pub struct Session<'a> {
    net: Network,
    data: TabularDataset,
    grounding: Grounding,
    kb: KnowledgeBase,
    lr: f64,
    seed: u64,
    out: &'a Output,
}

#[derive(Serialize)]
struct Summary {
    commands: usize,
    errors: usize,
    knowledge_base: String,
    transcript: Vec<String>,
}

/// Points at `column` (1-based) under an echo of the offending text.
fn caret(text: &str, column: usize) -> String {
    format!("  {text}\n  {}^", " ".repeat(column.saturating_sub(1)))
}

fn formula_error(text: &str, e: Error) -> String {
    match e {
        Error::Parse { column, message, .. } => {
            format!("parse error at column {column}: {message}\n{}", caret(text, column))
        }
        other => format!("error: {other}"),
    }
}

impl<'a> Session<'a> {
    pub fn new(net: Network, data: TabularDataset, kb: KnowledgeBase, lr: f64, seed: u64, out: &'a Output) -> Self {
        let grounding = Grounding::standard(&data);
        Self {
            net,
            data,
            grounding,
            kb,
            lr,
            seed,
            out,
        }
    }

    /// Output of one command line, or `None` on `quit`. Errors are reported
    /// as text; the session goes on.
    pub fn execute(&mut self, line: &str) -> Option<Result<String, String>> {
        let (word, rest) = match line.split_once(char::is_whitespace) {
            Some((w, r)) => (w, r.trim()),
            None => (line, ""),
        };
        Some(match word {
            "quit" | "exit" => return None,
            "query" => self.query(rest),
            "groups" => self.groups(rest),
            "assert" => self.assert(rest),
            "retrain" => self.retrain(rest),
            "parity" => self.parity(rest),
            "save" => self.save(rest),
            "help" => Ok(HELP.to_string()),
            other => Err(format!("unknown command '{other}'; {HELP}")),
        })
    }

    fn query(&self, text: &str) -> Result<String, String> {
        let f = parse_formula(text).map_err(|e| formula_error(text, e))?;
        let d = eval_formula(&self.net, &self.grounding, &self.data, &f, &self.kb.aggregation)
            .map_err(|e| format!("error: {e}"))?;
        Ok(format!("degree {d:.6}"))
    }

    fn groups(&self, rest: &str) -> Result<String, String> {
        let parts: Vec<&str> = rest.split_whitespace().collect();
        let [feature, bins] = parts[..] else {
            return Err("usage: groups <feature> <bins>".into());
        };
        let bins: usize = bins.parse().map_err(|_| format!("bins '{bins}' is not a whole number"))?;
        let q = query_groups(&self.net, &self.data, feature, bins).map_err(|e| format!("error: {e}"))?;
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut lines: Vec<String> = q.warnings.iter().map(|w| format!("warning: {w}")).collect();
        for b in &q.bins {
            lines.push(format!(
                "bin {} [{:.4}, {:.4}] protected {} rate {} unprotected {} rate {} degree {}{}",
                b.index,
                b.score_low,
                b.score_high,
                b.n_protected,
                fmt(b.rate_protected),
                b.n_unprotected,
                fmt(b.rate_unprotected),
                fmt(b.degree),
                if b.flagged { " (flagged)" } else { "" }
            ));
        }
        Ok(lines.join("\n"))
    }

    fn assert(&mut self, text: &str) -> Result<String, String> {
        let wf = weighted(text).map_err(|f| match text.rsplit_once('@') {
            // re-parse to point at the column inside the formula
            Some((body, _)) => match parse_formula(body.trim_end()) {
                Err(e) => formula_error(body.trim_end(), e),
                Ok(_) => f.message,
            },
            None => f.message,
        })?;
        let line = format!("added {} @{} ({} formulas)", wf.formula, wf.weight, self.kb.len() + 1);
        self.kb.formulas.push(wf);
        Ok(line)
    }

    fn retrain(&mut self, rest: &str) -> Result<String, String> {
        let epochs: usize = rest.parse().map_err(|_| "usage: retrain <epochs>".to_string())?;
        let cfg = TrainConfig {
            epochs,
            lr: self.lr,
            seed: self.seed,
        };
        match train_constrained(&mut self.net, &self.kb, &self.grounding, &self.data, &cfg) {
            Ok(o) => {
                let first = o.trajectory.first().copied().unwrap_or(o.report.sat);
                Ok(format!("sat {first:.6} -> {:.6} after {epochs} epochs", o.report.sat))
            }
            Err(Error::Diverged { epoch, snapshot }) => {
                self.net = *snapshot;
                Err(format!("training diverged at epoch {epoch}; kept the last finite parameters"))
            }
            Err(e) => Err(format!("error: {e}")),
        }
    }

    fn parity(&self, feature: &str) -> Result<String, String> {
        let column = self.data.feature_index(feature).map_err(|e| format!("error: {e}"))?;
        let n = PARITY_ROWS.min(self.data.n_rows());
        let bg = BackgroundSet::sample(&self.data, PARITY_BACKGROUND, self.seed).map_err(|e| format!("error: {e}"))?;
        let attrs = self.data.rows[..n]
            .iter()
            .map(|r| exact_shapley(&self.net, r, &bg, 0))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("error: {e}"))?;
        let flags: Vec<bool> = self.data.rows[..n].iter().map(|r| r[column] >= 0.5).collect();
        let p = group_parity(&attrs, &flags, column).map_err(|e| format!("error: {e}"))?;
        Ok(format!("parity {p:.6} over {n} rows"))
    }

    fn save(&self, name: &str) -> Result<String, String> {
        let path = self.out.path(name).map_err(|f| f.message)?;
        let text = model_to_string(&self.net).map_err(|e| format!("error: {e}"))?;
        std::fs::write(&path, text).map_err(|e| format!("error: {e}"))?;
        Ok(format!("saved {name}"))
    }
}

pub fn session(cmd: &Command, a: &ReplArgs, seed: u64, out: &Output) -> Outcome {
    let net = model(&a.model)?;
    let data = dataset(&a.data)?;
    let kb = match &a.kb {
        Some(p) => KnowledgeBase::load(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?,
        None => KnowledgeBase::default(),
    };
    let input: Box<dyn BufRead> = match &a.script {
        Some(p) => Box::new(std::io::BufReader::new(
            std::fs::File::open(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdin().lock()),
    };
    let mut s = Session::new(net, data, kb, a.lr, seed, out);
    let mut log = String::new();
    let mut transcript = Vec::new();
    let (mut commands, mut errors) = (0, 0);
    for line in input.lines() {
        let line = line.map_err(|e| Failure::data(format!("reading commands: {e}")))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        log.push_str(&format!("> {line}\n"));
        commands += 1;
        let Some(result) = s.execute(line) else {
            log.push_str("bye\n");
            println!("bye");
            break;
        };
        let text = result.unwrap_or_else(|e| {
            errors += 1;
            e
        });
        println!("{text}");
        log.push_str(&text);
        log.push('\n');
        transcript.push(text);
    }
    out.write("session.log", &log)?;
    let summary = Summary {
        commands,
        errors,
        knowledge_base: s.kb.to_text(),
        transcript,
    };
    out.report(cmd, summary)
}
