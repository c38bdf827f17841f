use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use xattr::counterfactual::{generate_cfs, CfQuery};
use xattr::fuzzy::{
    eval_formula, parse_formula, query_groups, revise, train_constrained, Aggregation, CycleConfig, Grounding,
    KnowledgeBase, TrainConfig, WeightedFormula,
};
use xattr::gradcam::{gradcam, upsample_bilinear};
use xattr::integrated_gradients::integrated_gradients;
use xattr::lrp::{
    check_conservation, gnn_lrp, lrp_propagate, lrp_propagate_graph, lstm_lrp, node_relevance, perturbation_curve,
    perturbation_curve_ordered, relevance_order, walks_to_csv, ConservationReport, LrpConfig, Removal, Rule,
};
use xattr::models::image::{encode_pgm, encode_ppm, overlay, read_pnm};
use xattr::models::io::model_to_string;
use xattr::models::{load_model, zoo, GraphInstance, TabularDataset};
use xattr::nle::{
    compose_explanation, graph_from_attribution, Goal, Intention, KnowledgeTable, MessageHistory, Period,
    TemplateSet, UserModel, Violation, EXAMPLE_KNOWLEDGE, EXAMPLE_TEMPLATES,
};
use xattr::report::Report;
use xattr::shapley::{exact_shapley, sampled_shapley, Attribution, BackgroundSet};
use xattr::train::{accuracy, FitConfig};
use xattr::{Error, Layer, Network, Tensor};

use crate::args::*;
use crate::{repl, Failure, Outcome, Output};

pub fn dispatch(cmd: &Command, out: &Output) -> Outcome {
    let seed = cmd.seed().unwrap_or(0);
    match cmd {
        Command::Shap(a) => shap(cmd, a, seed, out),
        Command::Cf(a) => cf(cmd, a, seed, out),
        Command::Gradcam(a) => grad_cam(cmd, a, out),
        Command::Ig(a) => ig(cmd, a, out),
        Command::Lrp(a) => lrp(cmd, a, out),
        Command::Gnnlrp(a) => gnnlrp(cmd, a, out),
        Command::Perturb(a) => perturb(cmd, a, seed, out),
        Command::LtnTrain(a) => ltn_train(cmd, a, seed, out),
        Command::LtnQuery(a) => ltn_query(cmd, a, out),
        Command::LtnRevise(a) => ltn_revise(cmd, a, seed, out),
        Command::Nle(a) => nle(cmd, a, out),
        Command::GenData(a) => gen_data(cmd, a, seed, out),
        Command::Repl(a) => repl::session(cmd, a, seed, out),
    }
}

pub(crate) fn model(path: &Path) -> Outcome<Network> {
    load_model(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

pub(crate) fn dataset(path: &Path) -> Outcome<TabularDataset> {
    TabularDataset::read_csv(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn row(data: &TabularDataset, i: usize) -> Outcome<Vec<f64>> {
    data.rows
        .get(i)
        .cloned()
        .ok_or_else(|| Failure::data(format!("row {i} out of range ({} rows)", data.n_rows())))
}

fn save_model(out: &Output, name: &str, net: &Network) -> Outcome {
    out.write(name, model_to_string(net)?)?;
    Ok(())
}

fn shap(cmd: &Command, a: &ShapArgs, seed: u64, out: &Output) -> Outcome {
    let net = model(&a.model)?;
    let data = dataset(&a.data)?;
    let x = row(&data, a.row)?;
    let bg = BackgroundSet::sample(&data, a.background, seed)?;
    let mut attr = if a.exact {
        exact_shapley(&net, &x, &bg, a.output)?
    } else {
        sampled_shapley(&net, &x, &bg, a.output, a.permutations, seed)?
    };
    if attr.feature_names.is_empty() {
        attr.feature_names = data.feature_names.clone();
    }
    out.report(cmd, attr)
}

fn predicted_class(net: &Network, x: &[f64]) -> Outcome<usize> {
    let p = net.predict(x)?;
    Ok(if p.len() == 1 {
        (p[0] >= 0.5) as usize
    } else {
        Tensor::vector(p).argmax()
    })
}

fn cf(cmd: &Command, a: &CfArgs, seed: u64, out: &Output) -> Outcome {
    let net = model(&a.model)?;
    let data = dataset(&a.data)?;
    let x = row(&data, a.row)?;
    let desired = match a.desired {
        Some(c) => c,
        None if net.output_len() == Some(1) => 1 - predicted_class(&net, &x)?,
        None => return Err(Failure::usage("--desired is required for multi-class models")),
    };
    let mut q = CfQuery::new(x, desired, data.ranges());
    q.k = a.k;
    q.lambda1 = a.lambda1;
    q.lambda2 = a.lambda2;
    q.lr = a.lr;
    q.max_iters = a.max_iters;
    q.seed = seed;
    q.immutable = a
        .immutable
        .iter()
        .map(|n| data.feature_index(n))
        .collect::<Result<_, Error>>()?;
    q.discrete = (0..data.n_features()).filter(|&f| data.kinds[f].is_discrete()).collect();
    let set = generate_cfs(&net, &q)?;
    out.report(cmd, &set)?;
    if set.valid_count() == 0 {
        return Err(Failure::method("no candidate reached the desired class"));
    }
    Ok(())
}

fn grad_cam(cmd: &Command, a: &GradcamArgs, out: &Output) -> Outcome {
    let net = model(&a.model)?;
    let image = read_pnm(&a.image)?;
    let class = match a.class {
        Some(c) => c,
        None => net.forward(&image)?.output().argmax(),
    };
    let heat = gradcam(&net, &image, class)?;
    let (h, w) = (image.dims()[1], image.dims()[2]);
    let up = upsample_bilinear(&heat.grid, h, w)?;
    out.write("heatmap.pgm", encode_pgm(&heat.grid)?)?;
    out.write("overlay.ppm", encode_ppm(&overlay(&image, &up)?)?)?;
    out.report(cmd, heat)
}

/// The explained input of `ig`, `lrp` and `perturb`.
enum Explained {
    Row { x: Vec<f64>, data: TabularDataset },
    Image(Tensor),
    Graph(GraphInstance),
    Tokens(Tensor),
}

impl Explained {
    fn from_args(a: &InputArgs) -> Outcome<Self> {
        let given = [a.data.is_some(), a.image.is_some(), a.graph.is_some(), a.tokens.is_some()];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err(Failure::usage("give exactly one of --data (with --row), --image, --graph or --tokens"));
        }
        if a.row.is_some() && a.data.is_none() {
            return Err(Failure::usage("--row needs --data"));
        }
        if let Some(p) = &a.data {
            let data = dataset(p)?;
            let x = row(&data, a.row.unwrap_or(0))?;
            return Ok(Explained::Row { x, data });
        }
        if let Some(p) = &a.image {
            return Ok(Explained::Image(read_pnm(p)?));
        }
        if let Some(p) = &a.graph {
            return Ok(Explained::Graph(
                GraphInstance::load(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?,
            ));
        }
        let text = a.tokens.as_deref().unwrap_or_default();
        let ids = text
            .split_whitespace()
            .map(|t| t.parse::<usize>().map(|v| v as f64))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| Failure::usage(format!("--tokens {text:?} must be space-separated token ids")))?;
        if ids.is_empty() {
            return Err(Failure::usage("--tokens is empty"));
        }
        Ok(Explained::Tokens(Tensor::vector(ids)))
    }

    fn tensor(&self) -> Tensor {
        match self {
            Explained::Row { x, .. } => Tensor::vector(x.clone()),
            Explained::Image(t) | Explained::Tokens(t) => t.clone(),
            Explained::Graph(g) => g.features.clone(),
        }
    }

    fn output_value(&self, net: &Network, out: usize) -> Outcome<f64> {
        let trace = match self {
            Explained::Graph(g) => net.forward_graph(&g.features, &g.laplacian)?,
            _ => net.forward(&self.tensor())?,
        };
        trace
            .output()
            .data()
            .get(out)
            .copied()
            .ok_or_else(|| Failure::data(format!("output {out} out of range")))
    }
}

fn ig(cmd: &Command, a: &IgArgs, out: &Output) -> Outcome {
    let net = model(&a.model)?;
    let input = Explained::from_args(&a.input)?;
    let x = match &input {
        Explained::Row { .. } | Explained::Image(_) => input.tensor(),
        _ => return Err(Failure::usage("ig explains a dataset row or an image")),
    };
    let baseline = match (a.baseline, &input) {
        (BaselineKind::Zero, _) => Tensor::zeros(x.dims()),
        (BaselineKind::Mean, Explained::Row { data, .. }) => Tensor::vector(data.mean()),
        (BaselineKind::Mean, _) => return Err(Failure::usage("--baseline mean needs --data")),
    };
    let result = integrated_gradients(&net, &x, &baseline, a.output, a.steps)?;
    out.report(cmd, result)
}

fn rule(kind: RuleKind, r: &RuleArgs) -> Rule {
    match kind {
        RuleKind::Epsilon => Rule::Epsilon { eps: r.eps },
        RuleKind::Gamma => Rule::Gamma { gamma: r.gamma },
        RuleKind::Wsquare => Rule::WSquare,
    }
}

fn lrp_config(r: &RuleArgs) -> LrpConfig {
    let mut cfg = LrpConfig::uniform(rule(r.rule, r));
    cfg.input_rule = r.input_rule.map(|k| rule(k, r));
    cfg
}

#[derive(Serialize)]
struct LrpBody {
    dims: Vec<usize>,
    input_relevance: Vec<f64>,
    relevance_sum: f64,
    output_value: f64,
    conservation: Option<ConservationReport>,
}

/// Input relevance of any supported input, with the full map when one is
/// produced.
fn input_relevance(net: &Network, input: &Explained, out: usize, cfg: &LrpConfig) -> Outcome<(Vec<f64>, Option<xattr::lrp::RelevanceMap>)> {
    Ok(match input {
        Explained::Tokens(t) => (lstm_lrp(net, t, out, cfg)?, None),
        Explained::Graph(g) => {
            let map = lrp_propagate_graph(net, &g.features, &g.laplacian, out, cfg)?;
            (map.input().data().to_vec(), Some(map))
        }
        _ => {
            let map = lrp_propagate(net, &input.tensor(), out, cfg)?;
            (map.input().data().to_vec(), Some(map))
        }
    })
}

fn lrp(cmd: &Command, a: &LrpArgs, out: &Output) -> Outcome {
    let net = model(&a.model)?;
    let input = Explained::from_args(&a.input)?;
    let cfg = lrp_config(&a.rule);
    let (relevance, map) = input_relevance(&net, &input, a.output, &cfg)?;
    if let Some(m) = &map {
        out.write("relevance.csv", m.to_csv())?;
    }
    let dims = match (&input, &map) {
        (_, Some(m)) => m.input().dims().to_vec(),
        _ => vec![relevance.len()],
    };
    let body = LrpBody {
        dims,
        relevance_sum: relevance.iter().sum(),
        input_relevance: relevance,
        output_value: input.output_value(&net, a.output)?,
        conservation: map.as_ref().map(check_conservation),
    };
    out.report(cmd, body)
}

#[derive(Serialize)]
struct GnnBody {
    nodes: usize,
    walks: usize,
    walk_relevance_sum: f64,
    output_value: f64,
    node_relevance: Vec<f64>,
    top_walks: Vec<xattr::lrp::WalkRelevance>,
}

fn gnnlrp(cmd: &Command, a: &GnnLrpArgs, out: &Output) -> Outcome {
    let full = model(&a.model)?;
    let net = if matches!(full.layers().last(), Some(Layer::SumPool)) {
        full
    } else {
        zoo::readout(&full)?
    };
    let g = GraphInstance::load(&a.graph).map_err(|e| Failure::data(format!("{}: {e}", a.graph.display())))?;
    let walks = gnn_lrp(&net, &g, a.output, a.gamma)?;
    out.write("walks.csv", walks_to_csv(&walks))?;
    let mut top = walks.clone();
    top.sort_by(|x, y| y.relevance.abs().total_cmp(&x.relevance.abs()).then(x.walk.cmp(&y.walk)));
    top.truncate(a.top);
    let body = GnnBody {
        nodes: g.n,
        walks: walks.len(),
        walk_relevance_sum: walks.iter().map(|w| w.relevance).sum(),
        output_value: Explained::Graph(g.clone()).output_value(&net, a.output)?,
        node_relevance: node_relevance(&walks, g.n),
        top_walks: top,
    };
    out.report(cmd, body)
}

#[derive(Serialize)]
struct PerturbBody {
    relevance: Vec<f64>,
    order: Vec<usize>,
    relevance_curve: Vec<f64>,
    random_curve: Vec<f64>,
    /// Mean of each curve; lower means faster degradation.
    relevance_area: f64,
    random_area: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn perturb(cmd: &Command, a: &PerturbArgs, seed: u64, out: &Output) -> Outcome {
    let net = model(&a.model)?;
    let input = Explained::from_args(&a.input)?;
    let (x, removal) = match &input {
        Explained::Tokens(t) => (t.clone(), Removal::ZeroRow),
        Explained::Row { x, data } => (Tensor::vector(x.clone()), Removal::Feature { neutral: data.mean() }),
        _ => return Err(Failure::usage("perturb works on --tokens or a dataset row")),
    };
    if a.random_orders == 0 {
        return Err(Failure::usage("--random-orders must be at least 1"));
    }
    let cfg = lrp_config(&a.rule);
    let (relevance, _) = input_relevance(&net, &input, a.output, &cfg)?;
    let n = a.steps.unwrap_or(relevance.len()).min(relevance.len());
    let curve = perturbation_curve(&net, &x, &relevance, &removal, a.output, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = vec![0.0; curve.len()];
    for _ in 0..a.random_orders {
        let mut order: Vec<usize> = (0..relevance.len()).collect();
        order.shuffle(&mut rng);
        let c = perturbation_curve_ordered(&net, &x, &order, &removal, a.output, n)?;
        for (r, v) in random.iter_mut().zip(c) {
            *r += v / a.random_orders as f64;
        }
    }
    let mut csv = String::from("removed,relevance_order,random_order\n");
    for (k, (r, q)) in curve.iter().zip(&random).enumerate() {
        writeln!(csv, "{k},{r:e},{q:e}").unwrap();
    }
    out.write("curve.csv", csv)?;
    let body = PerturbBody {
        order: relevance_order(&relevance),
        relevance_area: mean(&curve),
        random_area: mean(&random),
        relevance,
        relevance_curve: curve,
        random_curve: random,
    };
    out.report(cmd, body)
}

/// Saves the last finite parameters of a diverged run before failing.
fn diverged(out: &Output, e: Error) -> Failure {
    if let Error::Diverged { snapshot, .. } = &e {
        if let Err(f) = save_model(out, "model.txt", snapshot) {
            return f;
        }
    }
    e.into()
}

fn ltn_train(cmd: &Command, a: &LtnTrainArgs, seed: u64, out: &Output) -> Outcome {
    let mut net = model(&a.model)?;
    let data = dataset(&a.data)?;
    let kb = KnowledgeBase::load(&a.kb).map_err(|e| Failure::data(format!("{}: {e}", a.kb.display())))?;
    let grounding = Grounding::standard(&data);
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        seed,
    };
    let outcome = train_constrained(&mut net, &kb, &grounding, &data, &cfg).map_err(|e| diverged(out, e))?;
    save_model(out, "model.txt", &net)?;
    out.report(cmd, outcome)
}

fn ltn_query(cmd: &Command, a: &LtnQueryArgs, out: &Output) -> Outcome {
    let net = model(&a.model)?;
    let data = dataset(&a.data)?;
    match (&a.formula, &a.groups) {
        (Some(text), None) => {
            let formula = parse_formula(text)?;
            let agg = Aggregation {
                p: a.p,
                p_exists: a.p_exists,
            };
            let degree = eval_formula(&net, &Grounding::standard(&data), &data, &formula, &agg)?;
            out.report(cmd, json!({ "formula": formula.to_string(), "degree": degree }))
        }
        (None, Some(feature)) => out.report(cmd, query_groups(&net, &data, feature, a.bins)?),
        _ => Err(Failure::usage("give exactly one of --formula and --groups")),
    }
}

/// One `formula @weight` line.
pub(crate) fn weighted(text: &str) -> Outcome<WeightedFormula> {
    let mut kb = KnowledgeBase::parse(text)?;
    if kb.formulas.len() != 1 {
        return Err(Failure::usage(format!("expected one formula, got {:?}", text)));
    }
    Ok(kb.formulas.remove(0))
}

fn ltn_revise(cmd: &Command, a: &LtnReviseArgs, seed: u64, out: &Output) -> Outcome {
    let mut net = model(&a.model)?;
    let data = dataset(&a.data)?;
    let kb = match &a.kb {
        Some(p) => KnowledgeBase::load(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?,
        None => KnowledgeBase::default(),
    };
    let constraints = a.constraints.iter().map(|c| weighted(c)).collect::<Outcome<Vec<_>>>()?;
    let cfg = CycleConfig {
        train: TrainConfig {
            epochs: a.epochs,
            lr: a.lr,
            seed,
        },
        protected: a.protected.clone(),
        bins: a.bins,
        parity_rows: a.parity_rows,
        background: a.background,
    };
    let mut revision = revise(&mut net, &kb, &constraints, &Grounding::standard(&data), &data, &cfg)
        .map_err(|e| diverged(out, e))?;
    save_model(out, "model.txt", &net)?;
    // the revised parameters are in model.txt
    revision.snapshots.clear();
    out.report(cmd, revision)
}

fn parse_pair<'a>(flag: &str, text: &'a str) -> Outcome<(&'a str, &'a str)> {
    text.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| Failure::usage(format!("--{flag} {text:?} must look like name=value")))
}

fn nle(cmd: &Command, a: &NleArgs, out: &Output) -> Outcome {
    let table = match &a.knowledge {
        Some(p) => KnowledgeTable::load(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?,
        None => KnowledgeTable::parse(EXAMPLE_KNOWLEDGE)?,
    };
    let templates = match &a.templates {
        Some(p) => TemplateSet::load(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?,
        None => TemplateSet::parse(EXAMPLE_TEMPLATES)?,
    };
    let attr = match (&a.attribution, a.phi.is_empty()) {
        (Some(p), true) => Report::<Attribution>::load(p)
            .map_err(|e| Failure::data(format!("{}: {e}", p.display())))?
            .body,
        (None, false) => {
            let mut names = Vec::new();
            let mut phi = Vec::new();
            for pair in &a.phi {
                let (k, v) = parse_pair("phi", pair)?;
                names.push(k.to_string());
                phi.push(v.parse().map_err(|_| Failure::usage(format!("--phi value {v:?} is not a number")))?);
            }
            Attribution {
                phi0: 0.0,
                phi,
                stderr: None,
                feature_names: names,
                output: 0,
            }
        }
        _ => return Err(Failure::usage("give exactly one of --attribution and --phi")),
    };
    let mut user = UserModel {
        age: a.age,
        vegetarian: a.vegetarian,
        ..Default::default()
    };
    for g in &a.goal {
        let (k, v) = parse_pair("goal", g)?;
        let goal = match v {
            "reduce" => Goal::Reduce,
            "increase" => Goal::Increase,
            _ => return Err(Failure::usage(format!("goal {v:?} must be reduce or increase"))),
        };
        user.goals.insert(k.to_string(), goal);
    }
    let mut history = match &a.history {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?
        }
        None => MessageHistory::default(),
    };
    let intention = match a.intention {
        IntentionArg::Discourage => Intention::Discourage,
        IntentionArg::Encourage => Intention::Encourage,
    };
    let period = match a.period {
        PeriodArg::Moment => Period::Moment,
        PeriodArg::Ongoing => Period::Ongoing,
    };
    let mut violation = Violation::new(&a.entity, a.observed, a.allowed, intention, period)?;
    if let Some(m) = &a.meal {
        violation = violation.with_meal(m);
    }
    let graph = graph_from_attribution(&attr, &table, &user, a.top_k);
    let message = compose_explanation(&graph, &violation, &user, &history, &table, &templates)?;
    history.record(&violation, &message);
    let text = message.text();
    out.write("message.txt", format!("{text}\n"))?;
    out.write(
        "history.json",
        serde_json::to_string_pretty(&history).map_err(Error::from)? + "\n",
    )?;
    out.report(cmd, json!({ "graph": graph, "message": message, "text": text }))
}

fn gen_data(cmd: &Command, a: &GenDataArgs, seed: u64, out: &Output) -> Outcome {
    let body = match a.kind {
        DataKind::Credit | DataKind::Recidivism => {
            let n = a.rows.unwrap_or(2000);
            let data = if a.kind == DataKind::Credit {
                xattr::models::synth_credit(n, seed)?
            } else {
                xattr::models::synth_recidivism(n, a.bias, seed)?
            };
            let cfg = zoo::TabularTraining {
                epochs: a.epochs.unwrap_or(60),
                seed,
                ..Default::default()
            };
            let net = zoo::train_tabular(&data, &cfg)?;
            data.write_csv(out.path("data.csv")?)?;
            save_model(out, "model.txt", &net)?;
            json!({
                "rows": n,
                "features": data.feature_names,
                "accuracy": accuracy(&net, &data.rows, &data.labels)?,
            })
        }
        DataKind::Images => {
            let n = a.rows.unwrap_or(40);
            let size = 8;
            let (images, labels) = zoo::synth_images(n, size, seed)?;
            let mut net = zoo::image_cnn(size, seed)?;
            let fit = FitConfig {
                epochs: a.epochs.unwrap_or(15),
                lr: 0.01,
                batch_size: 8,
                seed,
            };
            zoo::train_classifier(&mut net, &images, &labels, &fit)?;
            let mut csv = String::from("file,label\n");
            for (i, (img, l)) in images.iter().zip(&labels).enumerate() {
                let name = format!("image_{i:03}.pgm");
                out.write(&name, encode_pgm(&img.reshape(&[size, size])?)?)?;
                writeln!(csv, "{name},{l}").unwrap();
            }
            out.write("labels.csv", csv)?;
            save_model(out, "model.txt", &net)?;
            json!({ "images": n, "size": size, "accuracy": class_accuracy(&net, &images, &labels, None)? })
        }
        DataKind::Sentiment => {
            let n = a.rows.unwrap_or(400);
            let task = zoo::synth_sentiment(n, 6, seed)?;
            let mut net = zoo::sentiment_lstm(task.vocab.len(), 6, 8, seed)?;
            let fit = FitConfig {
                epochs: a.epochs.unwrap_or(30),
                lr: 0.02,
                batch_size: 16,
                seed,
            };
            zoo::train_classifier(&mut net, &task.sentences, &task.labels, &fit)?;
            let mut csv = String::from("tokens,label\n");
            for (s, l) in task.sentences.iter().zip(&task.labels) {
                let ids: Vec<String> = s.data().iter().map(|v| (*v as usize).to_string()).collect();
                writeln!(csv, "{},{l}", ids.join(" ")).unwrap();
            }
            out.write("sentences.csv", csv)?;
            out.write("vocab.txt", task.vocab.join("\n") + "\n")?;
            save_model(out, "model.txt", &net)?;
            json!({
                "sentences": n,
                "vocab": task.vocab,
                "accuracy": class_accuracy(&net, &task.sentences, &task.labels, None)?,
            })
        }
        DataKind::Graphs => {
            let n = a.rows.unwrap_or(80);
            let graphs = zoo::synth_graphs(n, 10, seed)?;
            let mut net = zoo::graph_classifier(2, 8, 2, seed)?;
            let fit = FitConfig {
                epochs: a.epochs.unwrap_or(300),
                lr: 0.01,
                batch_size: 8,
                seed,
            };
            zoo::train_graph_classifier(&mut net, &graphs, &fit)?;
            for (i, g) in graphs.iter().enumerate() {
                out.write(&format!("graph_{i:03}.txt"), g.to_text())?;
            }
            save_model(out, "model.txt", &net)?;
            let inputs: Vec<Tensor> = graphs.iter().map(|g| g.features.clone()).collect();
            let labels: Vec<usize> = graphs.iter().map(|g| g.label).collect();
            let laps: Vec<&Tensor> = graphs.iter().map(|g| &g.laplacian).collect();
            json!({ "graphs": n, "accuracy": class_accuracy(&net, &inputs, &labels, Some(&laps))? })
        }
    };
    out.report(cmd, body)
}

fn class_accuracy(net: &Network, inputs: &[Tensor], labels: &[usize], laplacians: Option<&[&Tensor]>) -> Outcome<f64> {
    let mut hits = 0;
    for (i, (x, &l)) in inputs.iter().zip(labels).enumerate() {
        let trace = match laplacians {
            Some(laps) => net.forward_graph(x, laps[i])?,
            None => net.forward(x)?,
        };
        hits += (trace.output().argmax() == l) as usize;
    }
    Ok(hits as f64 / inputs.len().max(1) as f64)
}
