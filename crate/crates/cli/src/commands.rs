use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;
use serde_json::{json, Value};
use supblock::eval::{self, BenchmarkConfig};
use supblock::generator::{self, PlantedSpec};
use supblock::graph::{self, LabelParseError, Split};
use supblock::model::{self, ClassParameters};
use supblock::summary;
use supblock::{DirectedGraph, FitConfig, FittedModel, LabelTable, ModelRegistry, SuffStats};

use crate::args::{
    BenchmarkArgs, DataArgs, EvaluateArgs, ExportArgs, FitArgs, GenerateArgs, PredictArgs,
};
use crate::artifacts::{
    self, matrix_body, read_json, read_matrix, series_body, write_csv, write_json, write_text,
};
use crate::CliError;

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} not found: {}",
            path.display()
        )))
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn load_data(data: &DataArgs) -> Result<(DirectedGraph, LabelTable), CliError> {
    require_file(&data.edges, "edge list")?;
    require_file(&data.labels, "label file")?;
    let graph = graph::load_edge_list(&data.edges, data.format.into())?;
    let text = fs::read_to_string(&data.labels).map_err(|e| CliError::io(&data.labels, e))?;
    let labels = graph::parse_labels(&text, &graph, data.format.into()).map_err(|e| match e {
        LabelParseError::Line(line, msg) => {
            CliError::Runtime(format!("{}:{line}: {msg}", data.labels.display()))
        }
        LabelParseError::Other(e) => e.into(),
    })?;
    Ok((graph, labels))
}

/// Apply the split file, draw a stratified split, or keep every labelled node
/// as TRAIN. Returns the table and a one-line description of the policy.
fn resolve_split(
    graph: &DirectedGraph,
    labels: LabelTable,
    split: Option<&PathBuf>,
    fraction: Option<f64>,
    seed: u64,
) -> Result<(LabelTable, String), CliError> {
    if let Some(path) = split {
        require_file(path, "split file")?;
        let table = graph::load_split(path, graph, labels)?;
        return Ok((table, format!("from file {}", path.display())));
    }
    if let Some(f) = fraction {
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::Usage(format!(
                "--train-fraction must lie in (0, 1), got {f}"
            )));
        }
        let table = graph::split_train_test(&labels, f, seed)?;
        return Ok((
            table,
            format!("stratified, train fraction {f}, seed {seed}"),
        ));
    }
    Ok((labels, "every labelled node is TRAIN".into()))
}

fn run_config<T: Serialize>(subcommand: &str, args: &T, fit: Option<&FitConfig>) -> Value {
    json!({ "subcommand": subcommand, "args": args, "fit": fit })
}

fn role_names(k: usize) -> Vec<String> {
    (0..k).map(|a| format!("role_{a}")).collect()
}

fn node_names(graph: &DirectedGraph) -> Vec<String> {
    (0..graph.num_nodes()).map(|v| graph.node_name(v)).collect()
}

fn split_text(graph: &DirectedGraph, split: &LabelTable) -> String {
    let mut out = String::new();
    for v in 0..graph.num_nodes() {
        let tag = match split.split(v) {
            Split::Train => "TRAIN",
            Split::Test => "TEST",
        };
        writeln!(out, "{}\t{tag}", graph.node_name(v)).unwrap();
    }
    out
}

fn prediction_rule(model: &str) -> &'static str {
    match model {
        "sbm" => "argmax over roles of lambda_v (roles are classes)",
        "ssmb" => "argmax over classes of mu_hat_c . lambda_v",
        _ => "argmax over classes of eta_c . lambda_bar_v",
    }
}

fn write_fit(
    dir: &Path,
    config: &Value,
    graph: &DirectedGraph,
    split: &LabelTable,
    policy: &str,
    fitted: &dyn FittedModel,
) -> Result<(), CliError> {
    let k = fitted.num_roles();
    let roles = role_names(k);
    let classes = split.class_names().to_vec();
    let mut files = vec!["posterior.csv", "trace.csv", "split.txt"];

    write_csv(
        dir,
        "posterior.csv",
        config,
        &matrix_body("node", &node_names(graph), &roles, &fitted.node_roles()),
    )?;
    match fitted.class_parameters() {
        ClassParameters::None => {}
        ClassParameters::Mu(mu) => {
            write_csv(
                dir,
                "mu.csv",
                config,
                &matrix_body("class", &classes, &roles, &mu),
            )?;
            files.push("mu.csv");
        }
        ClassParameters::Eta(eta) => {
            write_csv(
                dir,
                "eta.csv",
                config,
                &matrix_body("class", &classes, &roles, &eta),
            )?;
            files.push("eta.csv");
        }
    }
    if let Some(pairs) = fitted.pair_posterior() {
        let rows: Vec<String> = (0..graph.num_edges()).map(|i| i.to_string()).collect();
        let cols: Vec<String> = (0..k * k)
            .map(|ab| format!("pair_{}_{}", ab / k, ab % k))
            .collect();
        let m = Array2::from_shape_vec((graph.num_edges(), k * k), pairs.to_vec())
            .expect("pair posterior shape");
        write_csv(
            dir,
            "pairs.csv",
            config,
            &matrix_body("interaction", &rows, &cols, &m),
        )?;
        files.push("pairs.csv");
    }
    write_csv(
        dir,
        "trace.csv",
        config,
        &series_body("objective", &fitted.trace()),
    )?;
    write_text(dir, "split.txt", "#", config, &split_text(graph, split))?;
    files.push("meta.json");
    write_json(
        dir,
        "meta.json",
        config,
        json!({
            "model": fitted.model_name(),
            "num_roles": k,
            "num_nodes": graph.num_nodes(),
            "num_edges": graph.num_edges(),
            "class_names": classes,
            "split_policy": policy,
            "prediction": prediction_rule(fitted.model_name()),
            "diagnostics": fitted.diagnostics(),
            "files": files,
        }),
    )
}

pub fn fit(a: &FitArgs) -> Result<(), CliError> {
    let (graph, labels) = load_data(&a.data)?;
    let (split, policy) = resolve_split(
        &graph,
        labels,
        a.split.as_ref(),
        a.train_fraction,
        a.hyper.seed,
    )?;
    let registry = ModelRegistry::with_builtins();
    let strategy = registry.get(&a.model)?;
    let mut cfg = a.hyper.fit_config();
    cfg.k = Some(strategy.resolve_k(&cfg, split.num_classes())?);
    let config = run_config("fit", a, Some(&cfg));
    let fitted = strategy.fit(&graph, &split, &cfg)?;
    create_dir(&a.out_dir)?;
    write_fit(
        &a.out_dir,
        &config,
        &graph,
        &split,
        &policy,
        fitted.as_ref(),
    )?;
    log::info!("{} fit written to {}", strategy.name(), a.out_dir.display());
    Ok(())
}

struct FitDir {
    meta: Value,
    model: String,
    class_names: Vec<String>,
    fit: FitConfig,
    posterior: artifacts::NamedMatrix,
}

fn open_fit_dir(dir: &Path) -> Result<FitDir, CliError> {
    require_file(&dir.join("meta.json"), "fit metadata")?;
    let meta = read_json(&dir.join("meta.json"))?;
    let bad = |what: &str| {
        CliError::Runtime(format!(
            "{}: missing or invalid `{what}`",
            dir.join("meta.json").display()
        ))
    };
    let model = meta["model"]
        .as_str()
        .ok_or_else(|| bad("model"))?
        .to_string();
    let class_names: Vec<String> =
        serde_json::from_value(meta["class_names"].clone()).map_err(|_| bad("class_names"))?;
    let fit: FitConfig =
        serde_json::from_value(meta["config"]["fit"].clone()).map_err(|_| bad("config.fit"))?;
    let posterior = read_matrix(&dir.join("posterior.csv"))?;
    Ok(FitDir {
        meta,
        model,
        class_names,
        fit,
        posterior,
    })
}

fn class_parameters(dir: &Path, fd: &FitDir) -> Result<ClassParameters, CliError> {
    let file = match fd.model.as_str() {
        "sbm" => return Ok(ClassParameters::None),
        "ssmb" => "mu.csv",
        "smmb" => "eta.csv",
        other => {
            return Err(CliError::Runtime(format!(
                "unknown model `{other}` in fit metadata"
            )))
        }
    };
    let m = read_matrix(&dir.join(file))?;
    if m.values.dim() != (fd.class_names.len(), fd.posterior.columns.len()) {
        return Err(CliError::Runtime(format!(
            "{file}: shape does not match the posterior"
        )));
    }
    Ok(match fd.model.as_str() {
        "ssmb" => ClassParameters::Mu(m.values),
        _ => ClassParameters::Eta(m.values),
    })
}

fn read_split_tags(path: &Path) -> Result<HashMap<String, String>, CliError> {
    if !path.is_file() {
        return Ok(HashMap::new());
    }
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| {
            let mut t = l.split_whitespace();
            Some((t.next()?.to_string(), t.next()?.to_string()))
        })
        .collect())
}

pub fn predict(a: &PredictArgs) -> Result<(), CliError> {
    let fd = open_fit_dir(&a.fit_dir)?;
    let params = class_parameters(&a.fit_dir, &fd)?;
    if matches!(params, ClassParameters::None) && fd.posterior.columns.len() != fd.class_names.len()
    {
        return Err(CliError::Runtime(
            "SBM posterior must have one role per class".into(),
        ));
    }
    let tags = read_split_tags(&a.fit_dir.join("split.txt"))?;
    let config = json!({ "subcommand": "predict", "args": a, "fit": fd.meta["config"]["fit"] });
    let mut body = String::from("node,predicted,split\n");
    for (v, name) in fd.posterior.rows.iter().enumerate() {
        let c = model::predict_from_parameters(&fd.posterior.values, &params, v);
        let tag = tags.get(name).map(String::as_str).unwrap_or("");
        writeln!(body, "{name},{},{tag}", fd.class_names[c]).unwrap();
    }
    let out = a.out_dir.clone().unwrap_or_else(|| a.fit_dir.clone());
    create_dir(&out)?;
    write_csv(&out, "predictions.csv", &config, &body)
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let (graph, labels) = load_data(&a.data)?;
    let fraction = if a.split.is_none() {
        Some(a.train_fraction.unwrap_or(0.5))
    } else {
        None
    };
    let (split, policy) = resolve_split(&graph, labels, a.split.as_ref(), fraction, a.hyper.seed)?;
    let registry = ModelRegistry::with_builtins();
    let strategy = registry.get(&a.model)?;
    let mut cfg = a.hyper.fit_config();
    cfg.k = Some(strategy.resolve_k(&cfg, split.num_classes())?);
    if split.scored_test_nodes().is_empty() {
        return Err(CliError::Usage("no labelled TEST nodes to score".into()));
    }
    let config = run_config("evaluate", a, Some(&cfg));
    let record = eval::evaluate_run(&registry, &graph, &split, strategy.name(), &cfg, 0);
    create_dir(&a.out_dir)?;
    let records = std::slice::from_ref(&record);
    write_csv(
        &a.out_dir,
        "records.csv",
        &config,
        &eval::records_csv(records)?,
    )?;
    write_json(
        &a.out_dir,
        "report.json",
        &config,
        json!({
            "class_names": split.class_names(),
            "split_policy": policy,
            "record": record,
        }),
    )?;
    write_json(
        &a.out_dir,
        "meta.json",
        &config,
        json!({ "model": strategy.name(), "num_roles": cfg.k, "files": ["records.csv", "report.json", "meta.json"] }),
    )?;
    match (&record.error, record.macro_f1) {
        (Some(e), _) => Err(CliError::Runtime(e.clone())),
        (None, Some(f1)) => {
            println!("{} K={} macro-F1 {f1:.4}", strategy.name(), record.k);
            Ok(())
        }
        (None, None) => Err(CliError::Runtime("no score produced".into())),
    }
}

pub fn benchmark(a: &BenchmarkArgs) -> Result<(), CliError> {
    if !(a.train_fraction > 0.0 && a.train_fraction < 1.0) {
        return Err(CliError::Usage(format!(
            "--train-fraction must lie in (0, 1), got {}",
            a.train_fraction
        )));
    }
    if a.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let (graph, labels) = load_data(&a.data)?;
    let mut fit = a.hyper.fit_config();
    let mut k_values = a.k_values.clone();
    if let Some(k) = fit.k.take() {
        if k_values.is_empty() {
            k_values.push(k);
        }
    }
    let bc = BenchmarkConfig {
        models: a.models.clone(),
        k_values,
        repeats: a.repeats,
        train_fraction: a.train_fraction,
        seed0: a.hyper.seed,
        jobs: a.jobs,
        fit,
    };
    let registry = ModelRegistry::with_builtins();
    let plan = eval::benchmark_plan(&registry, &bc, labels.num_classes())?;
    let config = json!({ "subcommand": "benchmark", "args": a, "benchmark": bc });
    create_dir(&a.out_dir)?;
    let files: &[&str] = if a.dry_run {
        &["meta.json"]
    } else {
        &["report.json", "records.csv", "plot.csv", "meta.json"]
    };
    write_json(
        &a.out_dir,
        "meta.json",
        &config,
        json!({
            "dry_run": a.dry_run,
            "num_nodes": graph.num_nodes(),
            "num_edges": graph.num_edges(),
            "num_classes": labels.num_classes(),
            "class_names": labels.class_names(),
            "plan": plan,
            "total_runs": plan.len() * a.repeats,
            "files": files,
        }),
    )?;
    if a.dry_run {
        return Ok(());
    }
    let report = eval::run_benchmark(&registry, &graph, &labels, &bc)?;
    write_csv(
        &a.out_dir,
        "records.csv",
        &config,
        &eval::records_csv(&report.records)?,
    )?;
    write_csv(
        &a.out_dir,
        "plot.csv",
        &config,
        &eval::plot_csv(&report.aggregates)?,
    )?;
    let mut fields = serde_json::to_value(&report).expect("report serialises");
    fields.as_object_mut().unwrap().remove("config");
    fields["class_names"] = json!(labels.class_names());
    write_json(&a.out_dir, "report.json", &config, fields)?;
    for agg in &report.aggregates {
        println!(
            "{:<5} K={:<3} macro-F1 {:.4} ± {:.4} ({} runs, {} failed)",
            agg.model, agg.k, agg.mean_f1, agg.std_f1, agg.runs, agg.failed
        );
    }
    Ok(())
}

pub fn generate(a: &GenerateArgs) -> Result<(), CliError> {
    let spec: PlantedSpec = match (&a.preset, &a.spec) {
        (Some(name), _) => generator::preset(name, a.nodes)?,
        (None, Some(path)) => {
            require_file(path, "generator spec")?;
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        (None, None) => return Err(CliError::Usage("give --preset or --spec".into())),
    };
    let planted = generator::sample(&spec, a.seed)?;
    let config = json!({ "subcommand": "generate", "args": a, "spec": spec });
    generator::write_planted(&planted, &a.out_dir, Some(&artifacts::provenance(&config)))?;
    let kept = (0..planted.graph.num_nodes())
        .filter(|&v| planted.graph.degree(v) > 0)
        .count();
    write_json(
        &a.out_dir,
        "meta.json",
        &config,
        json!({
            "num_nodes": kept,
            "isolated_nodes_dropped": planted.graph.num_nodes() - kept,
            "num_edges": planted.graph.num_edges(),
            "num_classes": planted.labels.num_classes(),
            "files": ["edges.txt", "labels.txt", "truth.txt", "meta.json"],
        }),
    )
}

pub fn export(a: &ExportArgs) -> Result<(), CliError> {
    let fd = open_fit_dir(&a.fit_dir)?;
    let (graph, labels) = load_data(&a.data)?;
    if fd.posterior.rows != node_names(&graph) {
        return Err(CliError::Runtime(
            "posterior nodes do not match the edge list; export needs the data the fit was run on"
                .into(),
        ));
    }
    let split_path = a.fit_dir.join("split.txt");
    let split = if split_path.is_file() {
        graph::load_split(&split_path, &graph, labels)?
    } else {
        labels
    };
    let k = fd.posterior.columns.len();
    let lambda = fd.posterior.values.as_standard_layout().to_owned();
    let stats = if fd.model == "smmb" {
        let pairs = read_matrix(&a.fit_dir.join("pairs.csv"))?;
        if pairs.values.dim() != (graph.num_edges(), k * k) {
            return Err(CliError::Runtime(
                "pairs.csv: shape does not match the edge list".into(),
            ));
        }
        let flat: Vec<f64> = pairs.values.iter().copied().collect();
        SuffStats::recount_interactions(&graph, k, &flat, &vec![true; graph.num_edges()])
    } else {
        let links = graph.binary_links(fd.fit.diagonal().self_pairs());
        let flat: Vec<f64> = lambda.iter().copied().collect();
        SuffStats::recount_nodes(
            k,
            split.num_classes(),
            &links,
            &flat,
            &vec![true; graph.num_nodes()],
            |v| split.train_label(v),
        )
    };
    let prior = model::summary_prior_for(&fd.model, &fd.fit, k);
    let net = summary::build_summary(&stats, &prior);
    let threshold = a
        .threshold
        .unwrap_or_else(|| summary::default_threshold(&prior));
    let role_class = match class_parameters(&a.fit_dir, &fd)? {
        ClassParameters::Mu(mu) => summary::role_class_from_mu(&mu),
        _ => summary::role_class_empirical(&lambda, &split),
    };

    let config = json!({ "subcommand": "export", "args": a, "fit": fd.meta["config"]["fit"] });
    let out = a.out_dir.clone().unwrap_or_else(|| a.fit_dir.clone());
    create_dir(&out)?;
    write_text(
        &out,
        "summary.dot",
        "//",
        &config,
        &summary::export_dot(&net, threshold),
    )?;
    write_csv(
        &out,
        "node_role.csv",
        &config,
        &summary::export_node_role_matrix(&lambda, &split, &graph),
    )?;
    write_csv(
        &out,
        "role_class.csv",
        &config,
        &summary::export_role_class_dists(&role_class, split.class_names()),
    )?;
    write_json(
        &out,
        "summary.json",
        &config,
        json!({
            "model": fd.model,
            "threshold": threshold,
            "weight_kind": net.kind,
            "weights": net.weights.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
            "sizes": net.sizes,
            "role_class": role_class.dist.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
            "zero_support_roles": role_class.zero_support,
            "class_names": split.class_names(),
        }),
    )
}
