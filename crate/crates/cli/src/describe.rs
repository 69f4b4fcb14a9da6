use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};

struct Agg {
    cells: usize,
    skipped: usize,
    errored: usize,
    allocated: Vec<f64>,
    weight: Vec<f64>,
    delay: Vec<f64>,
}

fn mean(v: &[f64]) -> String {
    if v.is_empty() {
        "-".into()
    } else {
        format!("{:.3}", v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Per-scheduler digest of a run directory's `results.csv` and `summary.json`.
pub fn describe_result(dir: &Path) -> Result<String> {
    let summary: serde_json::Value = serde_json::from_slice(
        &std::fs::read(dir.join("summary.json")).with_context(|| format!("no summary.json in {}", dir.display()))?,
    )?;
    let mut reader = csv::Reader::from_path(dir.join("results.csv"))
        .with_context(|| format!("no results.csv in {}", dir.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("results.csv lacks {name}"))
    };
    let (sched, status, alloc, weight, delay) = (
        col("scheduler")?,
        col("status")?,
        col("allocated")?,
        col("allocated_weight")?,
        col("mean_delay")?,
    );

    let mut order = Vec::new();
    let mut by: BTreeMap<String, Agg> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let name = rec[sched].to_string();
        let a = by.entry(name.clone()).or_insert_with(|| {
            order.push(name.clone());
            Agg {
                cells: 0,
                skipped: 0,
                errored: 0,
                allocated: Vec::new(),
                weight: Vec::new(),
                delay: Vec::new(),
            }
        });
        a.cells += 1;
        match &rec[status] {
            "ok" => {
                a.allocated.push(rec[alloc].parse()?);
                a.weight.push(rec[weight].parse()?);
                if let Ok(d) = rec[delay].parse() {
                    a.delay.push(d);
                }
            }
            "skipped" => a.skipped += 1,
            "error" => a.errored += 1,
            other => bail!("unknown status {other:?}"),
        }
    }

    let mut out = String::new();
    writeln!(
        out,
        "{} (workload {}, version {}, config {})",
        summary["name"].as_str().unwrap_or("?"),
        summary["workload"].as_str().unwrap_or("?"),
        summary["version"].as_str().unwrap_or("?"),
        &summary["config_sha256"].as_str().unwrap_or("?")
            [..12.min(summary["config_sha256"].as_str().unwrap_or("?").len())],
    )?;
    writeln!(
        out,
        "{:<10} {:>6} {:>8} {:>7} {:>14} {:>14} {:>11}",
        "scheduler", "cells", "skipped", "errors", "allocated", "weight", "mean_delay"
    )?;
    for name in &order {
        let a = &by[name];
        writeln!(
            out,
            "{:<10} {:>6} {:>8} {:>7} {:>14} {:>14} {:>11}",
            name,
            a.cells,
            a.skipped,
            a.errored,
            mean(&a.allocated),
            mean(&a.weight),
            mean(&a.delay)
        )?;
    }
    if let Some(cells) = summary["cells"].as_array() {
        for c in cells.iter().filter(|c| c["message"].is_string()) {
            writeln!(
                out,
                "  {} seed {}: {} ({})",
                c["scheduler"].as_str().unwrap_or("?"),
                c["seed"],
                c["status"].as_str().unwrap_or("?"),
                c["message"].as_str().unwrap_or("")
            )?;
        }
    }
    Ok(out)
}
