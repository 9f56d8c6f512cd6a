use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use nslice::contribution::{contribution, ContributionMap};
use nslice::data::{split_tasks, Dataset};
use nslice::experiment::{dominance, original_point, sweep_parallel, write_sweep_csv, ExperimentConfig, Splits};
use nslice::maintenance::{
    incremental_develop, magnitude_prune, pilot_masking_eval, readapt, restructure, retrain_baseline,
    write_reports_csv, IncrementalConfig, MaintenanceReport, PilotTable,
};
use nslice::net::{evaluate, load_checkpoint, save_checkpoint, train, Network};
use nslice::slicing::{slice, SliceMask};
use nslice::Error;

use crate::output::{read_json, Run};
use crate::say;
use crate::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    if let Command::Report { inputs } = &cli.command {
        return report(inputs, cli.out.as_deref());
    }
    let run = open_run(cli)?;
    match &cli.command {
        Command::Train { task_a } => cmd_train(&run, *task_a),
        Command::Slice { model, task_a } => cmd_slice(&run, model, *task_a),
        Command::Pilot { model, map } => cmd_pilot(&run, model, map.as_deref()),
        Command::Restructure { model, mask, prune } => cmd_restructure(&run, model, mask, *prune),
        Command::Readapt { model, mask } => cmd_readapt(&run, model, mask),
        Command::Incdev { model, mask } => cmd_incdev(&run, model, mask),
        Command::Sweep { model, thetas, kfracs } => {
            cmd_sweep(&run, model, thetas.as_deref(), kfracs.as_deref(), cli.threads)
        }
        Command::Report { .. } => unreachable!(),
    }
}

/// 2 for config and argument errors, 3 for data and file errors, 4 for
/// numeric divergence.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(mut e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return 3;
    };
    while let Error::Slice { source, .. } = e {
        e = source;
    }
    match e {
        Error::Divergence { .. } => 4,
        Error::Config(_) | Error::Argument(_) | Error::UnknownMetric(_) | Error::DegenerateLayer { .. } => 2,
        _ => 3,
    }
}

fn open_run(cli: &Cli) -> Result<Run> {
    let Some(path) = &cli.config else {
        return Err(Error::Config("--config is required".into()).into());
    };
    let mut cfg = ExperimentConfig::from_file(path).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("{}: {io}", path.display())),
        other => other,
    })?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let cfg = cfg.resolve()?;
    let dir = match (&cli.out, &cfg.out) {
        (Some(d), _) | (None, Some(d)) => d.clone(),
        (None, None) => PathBuf::from("runs").join(&cfg.hash()[..12]),
    };
    Run::new(dir, cfg)
}

fn load_model(path: &Path) -> Result<Network> {
    load_checkpoint(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_mask(path: &Path, net: &Network) -> Result<SliceMask> {
    let mask = SliceMask::from_json(&read_json(path)?).with_context(|| format!("parsing {}", path.display()))?;
    mask.validate(net)?;
    Ok(mask)
}

/// Task-A training and test sets, relabeled to local ids.
fn task_a_data(run: &Run, splits: &Splits) -> Result<(Dataset, Dataset)> {
    let ids = &run.config.incdev.task_a;
    Ok((split_tasks(&splits.train, ids)?.a, split_tasks(&splits.test, ids)?.a))
}

#[derive(Serialize)]
struct TrainSummary {
    layers: Vec<usize>,
    params: usize,
    task_a: bool,
    test_accuracy: f64,
    per_category: Vec<Option<f64>>,
}

fn cmd_train(run: &Run, task_a: bool) -> Result<()> {
    let cfg = &run.config;
    let splits = cfg.load_data()?;
    let mut layers = cfg.network.layers.clone();
    let (train_set, test_set) = if task_a {
        *layers.last_mut().expect("validated") = cfg.incdev.task_a.len();
        task_a_data(run, &splits)?
    } else {
        (splits.train, splits.test)
    };
    let init = Network::new(&layers, cfg.seed)?;
    let net = train(&init, &train_set, &cfg.train, None)?;
    let acc = evaluate(&net, &test_set)?;
    save_checkpoint(&net, run.path("model.nsl"))?;
    run.write_json(
        "train.json",
        &TrainSummary {
            layers,
            params: net.param_count(),
            task_a,
            test_accuracy: acc.accuracy,
            per_category: acc.per_category,
        },
    )?;
    say!("test accuracy {:.4}; model written to {}", acc.accuracy, run.path("model.nsl").display());
    Ok(())
}

fn cmd_slice(run: &Run, model: &Path, task_a: bool) -> Result<()> {
    let cfg = &run.config;
    let net = load_model(model)?;
    let splits = cfg.load_data()?;
    let data = if task_a {
        let (train_a, test_a) = task_a_data(run, &splits)?;
        match cfg.score_split {
            nslice::experiment::Split::Train => train_a,
            nslice::experiment::Split::Test => test_a,
        }
    } else {
        cfg.score_data(&splits).clone()
    };
    let mask = slice(&net, &data, &cfg.slice)?;
    run.write_json("slice.json", &mask)?;
    say!(
        "retained {} neurons; compression rate {:.4}",
        mask.num_retained(),
        mask.compression_rate(&net)
    );
    Ok(())
}

fn cmd_pilot(run: &Run, model: &Path, map: Option<&Path>) -> Result<()> {
    let cfg = &run.config;
    let net = load_model(model)?;
    let splits = cfg.load_data()?;
    let maps = match map {
        Some(p) => vec![ContributionMap::from_json(&read_json(p)?)?],
        None => {
            let mut maps = Vec::new();
            for &metric in &cfg.pilot.metrics {
                for &scope in &cfg.pilot.scopes {
                    maps.push(contribution(&net, cfg.score_data(&splits), metric, scope)?);
                }
            }
            maps
        }
    };
    let mut tables: Vec<PilotTable> = Vec::new();
    for m in &maps {
        let t = pilot_masking_eval(&net, &splits.test, m, &cfg.pilot.bands)?;
        log::info!("pilot {} {}: inversion {}", t.metric, t.scope, t.has_inversion());
        tables.push(t);
    }
    if map.is_none() {
        for m in &maps {
            run.write_json(&format!("map-{}-{}.json", m.metric, m.scope), m)?;
        }
    }

    let meta = run.meta();
    let mut w = csv::Writer::from_path(run.path("pilot.csv"))?;
    w.write_record(["metric", "scope", "lo", "hi", "accuracy", "baseline", "config_hash", "tool_version"])?;
    for t in &tables {
        for r in &t.rows {
            w.write_record([
                t.metric.to_string(),
                t.scope.to_string(),
                r.lo.to_string(),
                r.hi.to_string(),
                r.accuracy.to_string(),
                t.baseline.to_string(),
                meta[0].1.clone(),
                meta[1].1.clone(),
            ])?;
        }
    }
    w.flush()?;
    let inversions: Vec<Value> = tables
        .iter()
        .map(|t| json!({"metric": t.metric, "scope": t.scope, "inversion": t.has_inversion()}))
        .collect();
    run.write_json("pilot.json", &json!({"tables": tables, "inversions": inversions}))?;
    for t in &tables {
        say!("{} {}: inversion {}", t.metric, t.scope, t.has_inversion());
    }
    Ok(())
}

fn cmd_restructure(run: &Run, model: &Path, mask: &Path, prune: bool) -> Result<()> {
    let cfg = &run.config;
    let net = load_model(model)?;
    let mask = load_mask(mask, &net)?;
    let (small, mut report) = restructure(&net, &mask)?;
    let splits = cfg.load_data()?;
    report.accuracy = Some(evaluate(&small, &splits.test)?.accuracy);
    report.seed = cfg.seed;
    report.strategy = Some(mask.strategy.as_str().to_string());
    report.metric = Some(mask.metric);
    report.theta = mask.theta;
    save_checkpoint(&small, run.path("restructured.nsl"))?;
    let report = run.stamp(report)?;
    run.write_json("restructure.json", &report)?;
    say!(
        "compression rate {:.4}; accuracy {:.4}",
        report.compression_rate.unwrap_or(0.0),
        report.accuracy.unwrap_or(0.0)
    );
    if !prune {
        return Ok(());
    }

    let original = evaluate(&net, &splits.test)?.accuracy;
    let floor = original - cfg.prune.accuracy_drop;
    let reference = net.param_count();
    let mut reports = Vec::new();
    for (strategy, start) in [("prune-only", &net), ("restructure-prune", &small)] {
        let out = magnitude_prune(
            start,
            reference,
            cfg.prune.target_sparsity,
            floor,
            &splits.train,
            &splits.test,
            &cfg.prune.config,
        )?;
        let mut r = MaintenanceReport::new("prune", cfg.seed);
        r.strategy = Some(strategy.into());
        r.accuracy = Some(out.accuracy);
        r.iterations = Some(out.iterations);
        r.params_before = Some(reference);
        r.params_after = Some(out.state.live_params());
        r.compression_rate = Some(out.sparsity);
        r.extra.insert("reached_target".into(), f64::from(u8::from(out.reached_target)));
        r.extra.insert("accuracy_floor".into(), floor);
        say!("{strategy}: {} rounds, sparsity {:.4}, accuracy {:.4}", out.iterations, out.sparsity, out.accuracy);
        reports.push(run.stamp(r)?);
    }
    run.write_json("prune.json", &json!({ "reports": reports }))?;
    Ok(())
}

fn cmd_readapt(run: &Run, model: &Path, mask: &Path) -> Result<()> {
    let cfg = &run.config;
    let net = load_model(model)?;
    let mask = load_mask(mask, &net)?;
    let splits = cfg.load_data()?;
    let (repaired, mut report) = readapt(&net, &mask, &splits.train, &splits.test, &cfg.readapt)?;
    report.strategy = Some(mask.strategy.as_str().to_string());
    report.metric = Some(mask.metric);
    report.theta = mask.theta;
    save_checkpoint(&repaired, run.path("readapt.nsl"))?;
    let report = run.stamp(report)?;
    run.write_json("readapt.json", &report)?;
    say!(
        "trained ratio {:.4}; retrained accuracy {:.4}; re-attack accuracy {:.4}",
        report.trained_param_ratio.unwrap_or(0.0),
        report.retrained_accuracy.unwrap_or(0.0),
        report.reattack_accuracy.unwrap_or(0.0)
    );
    Ok(())
}

fn cmd_incdev(run: &Run, model: &Path, mask: &Path) -> Result<()> {
    let cfg = &run.config;
    let net_a = load_model(model)?;
    let mask = load_mask(mask, &net_a)?;
    let splits = cfg.load_data()?;
    let split_train = split_tasks(&splits.train, &cfg.incdev.task_a)?;
    let split_test = split_tasks(&splits.test, &cfg.incdev.task_a)?;
    let inc = IncrementalConfig {
        train: cfg.incdev.train.clone(),
        replay_fraction: cfg.incdev.replay_fraction,
        seed: cfg.seed,
    };
    let (net, mut report) = incremental_develop(&net_a, &mask, &split_train, &split_test, &inc)?;
    report.metric = Some(mask.metric);
    report.theta = mask.theta;
    save_checkpoint(&net, run.path("incdev.nsl"))?;
    let mut reports = vec![run.stamp(report)?];
    if cfg.incdev.baseline {
        let (_, baseline) = retrain_baseline(&net_a, &split_train, &split_test, &inc)?;
        reports.push(run.stamp(baseline)?);
    }
    for r in &reports {
        say!(
            "{}: task A {:.4}, task B {:.4}, average {:.4}",
            r.strategy.as_deref().unwrap_or(""),
            r.task_a.unwrap_or(0.0),
            r.task_b.unwrap_or(0.0),
            r.task_avg.unwrap_or(0.0)
        );
    }
    run.write_json("incdev.json", &json!({ "reports": reports }))?;
    Ok(())
}

fn cmd_sweep(
    run: &Run,
    model: &Path,
    thetas: Option<&[f64]>,
    kfracs: Option<&[f64]>,
    threads: usize,
) -> Result<()> {
    let mut cfg = run.config.clone();
    if let Some(t) = thetas {
        cfg.sweep.thetas = t.to_vec();
    }
    if let Some(k) = kfracs {
        cfg.sweep.fractions = k.to_vec();
    }
    cfg.validate()?;
    let net = load_model(model)?;
    let splits = cfg.load_data()?;
    let points = sweep_parallel(&net, cfg.score_data(&splits), &splits.test, &cfg.sweep, &cfg.slice, threads)?;
    let original = original_point(&net, &splits.test)?;
    let dom = dominance(&points, 0.02);

    let meta = run.meta();
    let meta: Vec<(&str, &str)> = meta.iter().map(|(k, v)| (*k, v.as_str())).collect();
    let file = File::create(run.path("sweep.csv"))?;
    write_sweep_csv(&points, &meta, file)?;
    run.write_json(
        "sweep.json",
        &json!({
            "thetas": cfg.sweep.thetas,
            "fractions": cfg.sweep.fractions,
            "original_accuracy": original,
            "points": points,
            "dominance": dom,
            "dominance_ratio": dom.ratio(),
        }),
    )?;
    say!(
        "{} points; original accuracy {:.4}; semantic wins {}/{} matched points",
        points.len(),
        original,
        dom.wins,
        dom.matched
    );
    Ok(())
}

fn collect_reports(v: Value, out: &mut Vec<MaintenanceReport>) -> Result<()> {
    match v {
        Value::Array(items) => {
            for item in items {
                collect_reports(item, out)?;
            }
        }
        Value::Object(mut obj) if obj.contains_key("reports") => {
            collect_reports(obj.remove("reports").unwrap_or(Value::Null), out)?;
        }
        other => out.push(serde_json::from_value(other).map_err(|e| Error::Data(format!("not a report: {e}")))?),
    }
    Ok(())
}

fn report(inputs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut reports = Vec::new();
    for path in inputs {
        let v: Value = serde_json::from_str(&read_json(path)?)
            .map_err(Error::from)
            .with_context(|| format!("parsing {}", path.display()))?;
        let before = reports.len();
        if let Err(e) = collect_reports(v, &mut reports) {
            reports.truncate(before);
            log::warn!("skipping {}: {e}", path.display());
        }
    }
    if reports.is_empty() {
        bail!(Error::Data("no reports found in the inputs".into()));
    }
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join("reports.csv");
            write_reports_csv(&reports, File::create(&path)?)?;
            say!("{} reports written to {}", reports.len(), path.display());
        }
        None => write_reports_csv(&reports, std::io::stdout().lock())?,
    }
    Ok(())
}
