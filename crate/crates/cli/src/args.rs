use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "xattr", version, about = "Explainability methods for small neural networks")]
pub struct Cli {
    /// Directory that receives every file a run writes.
    #[arg(long, global = true, default_value = "xattr-out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Invocation,
}

#[derive(Debug, Subcommand)]
pub enum Invocation {
    #[command(flatten)]
    Run(Command),
    /// Repeat a run from the config.json it wrote.
    Rerun {
        #[arg(long)]
        config: PathBuf,
    },
}

/// One run. Serialized as the resolved config of the run.
#[derive(Clone, Debug, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Shapley attribution of one dataset row.
    Shap(ShapArgs),
    /// Diverse counterfactuals for one dataset row.
    Cf(CfArgs),
    /// Class activation heatmap of a PGM/PPM image.
    Gradcam(GradcamArgs),
    /// Integrated Gradients for a dataset row or an image.
    Ig(IgArgs),
    /// Layer-wise relevance propagation.
    Lrp(LrpArgs),
    /// Walk relevance of a graph classifier.
    Gnnlrp(GnnLrpArgs),
    /// Perturbation curves: relevance order against random orders.
    Perturb(PerturbArgs),
    /// Train a model to satisfy a knowledge base.
    LtnTrain(LtnTrainArgs),
    /// Truth degree of a formula, or group equivalence per score bin.
    LtnQuery(LtnQueryArgs),
    /// Add constraints to a knowledge base and retrain.
    LtnRevise(LtnReviseArgs),
    /// Natural-language feedback for a flagged behavior.
    Nle(NleArgs),
    /// Write a synthetic dataset and a model trained on it.
    GenData(GenDataArgs),
    /// Line-oriented session for querying and revising a model.
    Repl(ReplArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Shap(_) => "shap",
            Command::Cf(_) => "cf",
            Command::Gradcam(_) => "gradcam",
            Command::Ig(_) => "ig",
            Command::Lrp(_) => "lrp",
            Command::Gnnlrp(_) => "gnnlrp",
            Command::Perturb(_) => "perturb",
            Command::LtnTrain(_) => "ltn-train",
            Command::LtnQuery(_) => "ltn-query",
            Command::LtnRevise(_) => "ltn-revise",
            Command::Nle(_) => "nle",
            Command::GenData(_) => "gen-data",
            Command::Repl(_) => "repl",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        self.clone().seed_mut().and_then(|s| *s)
    }

    /// The seed slot of stochastic subcommands.
    pub fn seed_mut(&mut self) -> Option<&mut Option<u64>> {
        match self {
            Command::Shap(a) => Some(&mut a.seed),
            Command::Cf(a) => Some(&mut a.seed),
            Command::Perturb(a) => Some(&mut a.seed),
            Command::LtnTrain(a) => Some(&mut a.seed),
            Command::LtnRevise(a) => Some(&mut a.seed),
            Command::GenData(a) => Some(&mut a.seed),
            Command::Repl(a) => Some(&mut a.seed),
            _ => None,
        }
    }

    pub fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        let mut v: Vec<&mut PathBuf> = Vec::new();
        match self {
            Command::Shap(a) => v.extend([&mut a.model, &mut a.data]),
            Command::Cf(a) => v.extend([&mut a.model, &mut a.data]),
            Command::Gradcam(a) => v.extend([&mut a.model, &mut a.image]),
            Command::Ig(a) => {
                v.push(&mut a.model);
                v.extend(a.input.paths_mut());
            }
            Command::Lrp(a) => {
                v.push(&mut a.model);
                v.extend(a.input.paths_mut());
            }
            Command::Gnnlrp(a) => v.extend([&mut a.model, &mut a.graph]),
            Command::Perturb(a) => {
                v.push(&mut a.model);
                v.extend(a.input.paths_mut());
            }
            Command::LtnTrain(a) => v.extend([&mut a.model, &mut a.data, &mut a.kb]),
            Command::LtnQuery(a) => v.extend([&mut a.model, &mut a.data]),
            Command::LtnRevise(a) => {
                v.extend([&mut a.model, &mut a.data]);
                v.extend(a.kb.as_mut());
            }
            Command::Nle(a) => {
                v.extend(a.knowledge.as_mut());
                v.extend(a.templates.as_mut());
                v.extend(a.attribution.as_mut());
                v.extend(a.history.as_mut());
            }
            Command::GenData(_) => {}
            Command::Repl(a) => {
                v.extend([&mut a.model, &mut a.data]);
                v.extend(a.kb.as_mut());
                v.extend(a.script.as_mut());
            }
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ShapArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV dataset; the background set is sampled from it.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub row: usize,
    #[arg(long, default_value_t = 100)]
    pub background: usize,
    /// Enumerate every coalition instead of sampling permutations.
    #[arg(long)]
    pub exact: bool,
    #[arg(long, default_value_t = 200)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0)]
    pub output: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct CfArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub row: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Feature names held fixed, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub immutable: Vec<String>,
    /// Target class; defaults to the class the model does not predict.
    #[arg(long)]
    pub desired: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda2: f64,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct GradcamArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Explained class; defaults to the predicted one.
    #[arg(long)]
    pub class: Option<usize>,
}

/// Where the explained input comes from.
#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct InputArgs {
    /// CSV dataset holding the explained row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub row: Option<usize>,
    /// PGM/PPM image.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Graph file (for graph-convolution models).
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Space-separated token ids (for embedding models).
    #[arg(long)]
    pub tokens: Option<String>,
}

impl InputArgs {
    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        self.data.iter_mut().chain(self.image.iter_mut()).chain(self.graph.iter_mut()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Zero,
    /// Column means of the dataset.
    Mean,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct IgArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = BaselineKind::Zero)]
    pub baseline: BaselineKind,
    #[arg(long, default_value_t = 64)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub output: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    Epsilon,
    Gamma,
    Wsquare,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct RuleArgs {
    #[arg(long, value_enum, default_value_t = RuleKind::Epsilon)]
    pub rule: RuleKind,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.25)]
    pub gamma: f64,
    /// Rule of the first layer, if different.
    #[arg(long, value_enum)]
    pub input_rule: Option<RuleKind>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct LrpArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub rule: RuleArgs,
    #[arg(long, default_value_t = 0)]
    pub output: usize,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct GnnLrpArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub output: usize,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    /// Walks listed in the report (all of them go to walks.csv).
    #[arg(long, default_value_t = 20)]
    pub top: usize,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct PerturbArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub rule: RuleArgs,
    #[arg(long, default_value_t = 0)]
    pub output: usize,
    /// Elements removed; defaults to all of them.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub random_orders: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct LtnTrainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct LtnQueryArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Closed formula, e.g. `forall x: implies(P(x), label(x))`.
    #[arg(long)]
    pub formula: Option<String>,
    /// Binary feature whose groups are compared per score bin.
    #[arg(long)]
    pub groups: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub bins: usize,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 6.0)]
    pub p_exists: f64,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct LtnReviseArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Knowledge base the constraints are added to; empty if omitted.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// `formula @weight`, repeatable.
    #[arg(long = "constraint", required = true)]
    pub constraints: Vec<String>,
    #[arg(long)]
    pub protected: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub bins: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.005)]
    pub lr: f64,
    /// Rows explained for the attribution-parity measurement (0 skips it).
    #[arg(long, default_value_t = 0)]
    pub parity_rows: usize,
    #[arg(long, default_value_t = 32)]
    pub background: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntentionArg {
    Discourage,
    Encourage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeriodArg {
    Moment,
    Ongoing,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct NleArgs {
    /// Knowledge table; the built-in food table if omitted.
    #[arg(long)]
    pub knowledge: Option<PathBuf>,
    /// Template trees; the built-in set if omitted.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// A report.json written by `shap`.
    #[arg(long)]
    pub attribution: Option<PathBuf>,
    /// `feature=value` attributions, comma separated (instead of --attribution).
    #[arg(long, value_delimiter = ',')]
    pub phi: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub top_k: usize,
    #[arg(long)]
    pub entity: String,
    #[arg(long)]
    pub observed: f64,
    #[arg(long)]
    pub allowed: f64,
    #[arg(long, value_enum, default_value_t = IntentionArg::Discourage)]
    pub intention: IntentionArg,
    #[arg(long, value_enum, default_value_t = PeriodArg::Ongoing)]
    pub period: PeriodArg,
    #[arg(long)]
    pub meal: Option<String>,
    #[arg(long, default_value_t = 40)]
    pub age: u32,
    #[arg(long)]
    pub vegetarian: bool,
    /// `entity=reduce|increase`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub goal: Vec<String>,
    /// A history.json written by an earlier `nle` run.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    Credit,
    Recidivism,
    Images,
    Sentiment,
    Graphs,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub kind: DataKind,
    /// Rows, images, sentences or graphs; a per-kind default if omitted.
    #[arg(long)]
    pub rows: Option<usize>,
    /// Strength of the group effect in recidivism data.
    #[arg(long, default_value_t = 1.0)]
    pub bias: f64,
    /// Training epochs; a per-kind default if omitted.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// Commands read from this file instead of standard input.
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long)]
    pub seed: Option<u64>,
}
