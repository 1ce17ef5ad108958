use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use serde_json::Value;

use crate::{verdict, Outcome};

fn supblock(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_supblock"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`supblock {}` exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if v["format_version"] != 1 || !v["config"].is_object() {
        return Err(format!(
            "{}: missing format_version or config",
            path.display()
        ));
    }
    Ok(v)
}

fn tmp() -> Result<tempfile::TempDir, String> {
    tempfile::tempdir().map_err(|e| e.to_string())
}

pub fn protocol() -> Outcome {
    let dir = tmp()?;
    let data = dir.path().join("data");
    let d = data.to_str().unwrap();
    supblock(&[
        "generate",
        "--preset",
        "assortative",
        "--nodes",
        "60",
        "--seed",
        "1",
        "--out-dir",
        d,
    ])?;
    let edges = data.join("edges.txt");
    let labels = data.join("labels.txt");
    let (e, l) = (edges.to_str().unwrap(), labels.to_str().unwrap());

    let defaults = dir.path().join("defaults");
    supblock(&[
        "benchmark",
        "--edges",
        e,
        "--labels",
        l,
        "--dry-run",
        "--out-dir",
        defaults.to_str().unwrap(),
    ])?;
    let meta = read_json(&defaults.join("meta.json"))?;
    let bench = &meta["config"]["benchmark"];
    if bench["repeats"] != 100 || bench["train_fraction"] != 0.5 {
        return Err(format!(
            "defaults are repeats {} and train fraction {}",
            bench["repeats"], bench["train_fraction"]
        ));
    }
    if meta["total_runs"].as_u64() != Some(100 * meta["plan"].as_array().map_or(0, Vec::len) as u64)
    {
        return Err(format!(
            "plan does not run every entry 100 times: {}",
            meta["total_runs"]
        ));
    }

    let pinned = dir.path().join("pinned");
    supblock(&[
        "benchmark",
        "--edges",
        e,
        "--labels",
        l,
        "--dry-run",
        "--repeats",
        "2",
        "--k-values",
        "5",
        "--out-dir",
        pinned.to_str().unwrap(),
    ])?;
    let meta = read_json(&pinned.join("meta.json"))?;
    let plan = meta["plan"].as_array().cloned().unwrap_or_default();
    let sbm_k: Vec<&Value> = plan
        .iter()
        .filter(|p| p["model"] == "sbm")
        .map(|p| &p["k"])
        .collect();
    let others_at_5 = plan
        .iter()
        .filter(|p| p["model"] != "sbm")
        .all(|p| p["k"] == 5);
    verdict(
        sbm_k == [&Value::from(2)] && others_at_5 && meta["total_runs"] == 2 * plan.len(),
        format!(
            "default 100 repeats at 50% TRAIN; with --k-values 5 the SBM runs once at K = {}, {} runs in total",
            sbm_k.first().map_or("?".into(), |k| k.to_string()),
            meta["total_runs"]
        ),
    )
}

/// Checks a provenance line, a header and numeric rows; returns the rows.
fn read_table(path: &Path, header_prefix: &str) -> Result<Vec<Vec<String>>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let first = lines.next().unwrap_or_default();
    let config = first
        .strip_prefix("# format_version=1 config=")
        .ok_or_else(|| format!("{}: no provenance line", path.display()))?;
    serde_json::from_str::<Value>(config)
        .map_err(|e| format!("{}: config: {e}", path.display()))?;
    let header = lines.next().unwrap_or_default();
    if !header.starts_with(header_prefix) {
        return Err(format!("{}: header `{header}`", path.display()));
    }
    let width = header.split(',').count();
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    if let Some(bad) = rows.iter().find(|r| r.len() != width) {
        return Err(format!(
            "{}: row {bad:?} has the wrong width",
            path.display()
        ));
    }
    Ok(rows)
}

fn numbers(row: &[String]) -> Result<Vec<f64>, String> {
    row.iter()
        .map(|x| x.parse::<f64>().map_err(|_| format!("not a number: {x}")))
        .collect()
}

/// Every row past its first `skip` columns is a distribution.
fn check_rows_sum_to_one(path: &Path, header: &str, skip: usize) -> Result<(), String> {
    for row in read_table(path, header)? {
        // a role no node supports has no class distribution
        if header.contains("zero_support") && row[1] == "true" {
            continue;
        }
        let xs = numbers(&row[skip..])?;
        let s: f64 = xs.iter().sum();
        if (s - 1.0).abs() > 1e-6 || xs.iter().any(|x| *x < 0.0) {
            return Err(format!("{}: row {} sums to {s}", path.display(), row[0]));
        }
    }
    Ok(())
}

fn check_tab_file(path: &Path) -> Result<(), String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let config = lines
        .next()
        .and_then(|l| l.strip_prefix("# format_version=1 config="))
        .ok_or_else(|| format!("{}: no provenance line", path.display()))?;
    serde_json::from_str::<Value>(config)
        .map_err(|e| format!("{}: config: {e}", path.display()))?;
    if lines
        .filter(|l| !l.is_empty())
        .any(|l| l.split_whitespace().count() < 2)
    {
        return Err(format!("{}: short line", path.display()));
    }
    Ok(())
}

fn check_fit(dir: &Path, model: &str) -> Result<(), String> {
    let meta = read_json(&dir.join("meta.json"))?;
    for f in meta["files"]
        .as_array()
        .ok_or("fit meta.json lists no files")?
    {
        let f = f.as_str().unwrap_or_default();
        if !dir.join(f).is_file() {
            return Err(format!("{model}: declared file {f} is missing"));
        }
    }
    check_rows_sum_to_one(&dir.join("posterior.csv"), "node,role_0", 1)?;
    match model {
        "ssmb" => {
            let rows = read_table(&dir.join("mu.csv"), "class,role_0")?;
            let cols = rows.first().map_or(0, |r| r.len() - 1);
            for a in 0..cols {
                let s: f64 = rows
                    .iter()
                    .map(|r| r[a + 1].parse::<f64>().unwrap_or(f64::NAN))
                    .sum();
                if (s - 1.0).abs() > 1e-6 {
                    return Err(format!("mu.csv column {a} sums to {s}"));
                }
            }
        }
        "smmb" => {
            read_table(&dir.join("eta.csv"), "class,role_0")?
                .iter()
                .try_for_each(|r| numbers(&r[1..]).map(drop))?;
            check_rows_sum_to_one(&dir.join("pairs.csv"), "interaction,pair_0_0", 1)?;
        }
        _ => {}
    }
    read_table(&dir.join("trace.csv"), "step,objective")?;
    check_tab_file(&dir.join("split.txt"))
}

fn check_export(dir: &Path) -> Result<(), String> {
    let summary = read_json(&dir.join("summary.json"))?;
    let k = summary["sizes"].as_array().map_or(0, Vec::len);
    let dot = fs::read_to_string(dir.join("summary.dot")).map_err(|e| e.to_string())?;
    let config = dot
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("// format_version=1 config="))
        .ok_or("summary.dot: no provenance line")?;
    serde_json::from_str::<Value>(config).map_err(|e| format!("summary.dot: {e}"))?;
    if !dot.contains("digraph")
        || !dot.trim_end().ends_with('}')
        || (0..k).any(|a| !dot.contains(&format!("r{a}")))
    {
        return Err("summary.dot is not a digraph over every role".into());
    }
    check_rows_sum_to_one(&dir.join("node_role.csv"), "node,class,role_0", 2)?;
    check_rows_sum_to_one(&dir.join("role_class.csv"), "role,zero_support", 2)
}

pub fn smoke() -> Outcome {
    let start = Instant::now();
    let dir = tmp()?;
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    supblock(&[
        "generate",
        "--preset",
        "heterogeneous",
        "--nodes",
        "200",
        "--seed",
        "3",
        "--out-dir",
        &p("data"),
    ])?;
    let data = dir.path().join("data");
    read_json(&data.join("meta.json"))?;
    for f in ["edges.txt", "labels.txt", "truth.txt"] {
        check_tab_file(&data.join(f))?;
    }
    let (edges, labels) = (p("data/edges.txt"), p("data/labels.txt"));
    for model in ["sbm", "ssmb", "smmb"] {
        let fit = p(&format!("fit_{model}"));
        supblock(&[
            "fit",
            "--model",
            model,
            "--edges",
            &edges,
            "--labels",
            &labels,
            "--train-fraction",
            "0.5",
            "--seed",
            "3",
            "--out-dir",
            &fit,
        ])?;
        check_fit(Path::new(&fit), model)?;
        let pred = p(&format!("pred_{model}"));
        supblock(&["predict", "--fit-dir", &fit, "--out-dir", &pred])?;
        read_table(
            &Path::new(&pred).join("predictions.csv"),
            "node,predicted,split",
        )?;
        let export = p(&format!("export_{model}"));
        supblock(&[
            "export",
            "--fit-dir",
            &fit,
            "--edges",
            &edges,
            "--labels",
            &labels,
            "--out-dir",
            &export,
        ])?;
        check_export(Path::new(&export))?;
    }
    let eval = p("eval");
    supblock(&[
        "evaluate",
        "--model",
        "ssmb",
        "--edges",
        &edges,
        "--labels",
        &labels,
        "--seed",
        "3",
        "--out-dir",
        &eval,
    ])?;
    let report = read_json(&Path::new(&eval).join("report.json"))?;
    read_json(&Path::new(&eval).join("meta.json"))?;
    read_table(&Path::new(&eval).join("records.csv"), "model,")?;
    let f1 = report["record"]["macro_f1"]
        .as_f64()
        .ok_or("report.json has no macro-F1")?;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        secs < 120.0,
        format!("generate, fit/predict/export for 3 models and evaluate (macro-F1 {f1:.3}) in {secs:.1}s (limit 120s)"),
    )
}
