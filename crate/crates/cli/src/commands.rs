use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hsfusion_core::autodiff::GradCheckOptions;
use hsfusion_core::data::{compute_metrics, default_palette, write_classification_map};
use hsfusion_core::gradsuite::gradcheck_suite;
use hsfusion_core::network::{train, Checkpoint, HistoryRow, TrainEvent};
use hsfusion_core::{MetricsReport, Network, PatchSet, Route, Toggles};
use serde_json::json;

use crate::args::{Common, EvalArgs, Format, GradcheckArgs, Split};
use crate::config::{parse_toggle_settings, RunConfig};
use crate::dataset::Dataset;

/// A check ran and failed; maps to exit code 1.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    fs::write(cfg.out.join("config.toml"), cfg.to_toml()).context("writing config echo")
}

fn metrics_text(report: &MetricsReport, format: Format, labels: &[usize]) -> String {
    match format {
        Format::Text => report.to_string(),
        Format::JsonLines => {
            let mut out = String::new();
            for (i, acc) in report.per_class.iter().enumerate() {
                let support = labels.iter().filter(|&&l| l == i + 1).count();
                let line = json!({"class": i + 1, "accuracy": acc, "support": support});
                writeln!(out, "{line}").unwrap();
            }
            let summary = json!({
                "summary": true,
                "oa": report.oa,
                "aa": report.aa,
                "kappa": report.kappa,
                "samples": labels.len(),
                "confusion": report.confusion,
            });
            writeln!(out, "{summary}").unwrap();
            out
        }
    }
}

fn write_map(net: &Network, data: &Dataset, route: Route, path: &Path) -> Result<()> {
    let mut grid = vec![0; data.rows * data.cols];
    for set in [&data.train, &data.test] {
        if set.is_empty() {
            continue;
        }
        for (s, p) in set.samples.iter().zip(net.predict(set, route)?) {
            grid[s.coord.0 * data.cols + s.coord.1] = p;
        }
    }
    write_classification_map(&grid, data.rows, data.cols, &default_palette(data.classes), path)?;
    Ok(())
}

fn score(net: &Network, set: &PatchSet, route: Route, classes: usize) -> Result<MetricsReport> {
    Ok(compute_metrics(&net.predict(set, route)?, &set.labels(), classes)?)
}

fn route_of_phase(phase: u8) -> Route {
    match phase {
        1 => Route::Lidar,
        2 => Route::Hsi,
        _ => Route::Fused,
    }
}

pub fn cmd_train(common: &Common) -> Result<()> {
    let cfg = RunConfig::resolve("train", common)?;
    prepare_out(&cfg)?;
    let data = Dataset::load(&cfg)?;
    let mut net = Network::new(cfg.network.clone())?;
    log::info!(
        "{} training and {} test samples, {} parameters",
        data.train.len(),
        data.test.len(),
        net.num_parameters()
    );
    let mut csv = format!("{}\n", HistoryRow::CSV_HEADER);
    let report = train(&mut net, &data.train, |event| {
        match event {
            TrainEvent::Epoch(row) => {
                log::info!("{}", row.csv());
                writeln!(csv, "{}", row.csv()).unwrap();
            }
            TrainEvent::PhaseEnd {
                phase, net, train_oa, ..
            } => {
                let path = cfg.out.join(format!("phase{phase}.ckpt"));
                Checkpoint::of(net, phase, train_oa).save(&path)?;
                log::info!("phase {phase} done, train OA {train_oa:.3}, saved {}", path.display());
            }
        }
        Ok(())
    })?;
    fs::write(cfg.out.join("history.csv"), &csv).context("writing history")?;
    let test = if data.test.is_empty() { &data.train } else { &data.test };
    let metrics = score(&net, test, Route::Fused, data.classes)?;
    let text = metrics_text(&metrics, cfg.format, &test.labels());
    let ext = if cfg.format == Format::Text { "txt" } else { "jsonl" };
    fs::write(cfg.out.join(format!("metrics.{ext}")), &text).context("writing metrics")?;
    write_map(&net, &data, Route::Fused, &cfg.out.join("map.ppm"))?;
    if cfg.format == Format::Text {
        let final_oa = report
            .final_train_oa()
            .map_or("n/a".to_string(), |oa| format!("{oa:.3}"));
        println!("train OA {final_oa}");
    }
    print!("{text}");
    if !report.audit.holds(1e-9) {
        return Err(CheckFailed(format!(
            "attention weights left the simplex: min {}, max sum error {}",
            report.audit.min_weight, report.audit.max_sum_error
        ))
        .into());
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let mut cfg = RunConfig::resolve("eval", &args.common)?;
    let net = if args.common.config.is_some() {
        let mut net = Network::new(cfg.network.clone())?;
        ck.restore_into(&mut net)?;
        net
    } else {
        if args.common.seed.is_none() {
            cfg.synth.seed = ck.config.seed;
        }
        cfg.network = ck.config.clone();
        cfg.synth.classes = cfg.network.classes;
        cfg.synth.window = cfg.network.window;
        cfg.synth.bands = cfg.network.bands;
        cfg.synth.lidar_channels = cfg.network.lidar_channels;
        ck.to_network()?
    };
    prepare_out(&cfg)?;
    let data = Dataset::load(&cfg)?;
    let route = route_of_phase(ck.phase);
    let set = match args.split {
        Split::Train => data.train.clone(),
        Split::Test => data.test.clone(),
        Split::All => PatchSet {
            samples: data.train.samples.iter().chain(&data.test.samples).cloned().collect(),
            ..data.train.clone()
        },
    };
    if set.is_empty() {
        bail!("the {:?} split is empty", args.split);
    }
    let metrics = score(&net, &set, route, data.classes)?;
    write_map(&net, &data, route, &cfg.out.join("map.ppm"))?;
    if cfg.format == Format::Text {
        println!(
            "checkpoint phase {} ({:?} head), logged train OA {:.6}",
            ck.phase, route, ck.train_oa
        );
    }
    print!("{}", metrics_text(&metrics, cfg.format, &set.labels()));
    Ok(())
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    let opts = GradCheckOptions {
        corrupt: args.corrupt_gradient,
        ..GradCheckOptions::default()
    };
    let filter = (!args.component.is_empty()).then_some(args.component.as_slice());
    let checks = gradcheck_suite(filter, &opts)?;
    let format = args.format.unwrap_or_default();
    let mut failures = Vec::new();
    for c in &checks {
        let worst = c.report.worst();
        let param = worst.map_or("-", |p| p.name.as_str());
        let err = c.report.max_rel_error();
        match format {
            Format::Text => println!(
                "{:<12} {:>3} params  worst {:.3e} ({param})  {}",
                c.component,
                c.report.params.len(),
                err,
                if c.passed() { "ok" } else { "FAIL" }
            ),
            Format::JsonLines => println!(
                "{}",
                json!({"component": c.component, "params": c.report.params.len(),
                       "max_rel_error": err, "worst_param": param, "passed": c.passed()})
            ),
        }
        if !c.passed() {
            failures.push(format!("{}: {param} relative error {err:.3e}", c.component));
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CheckFailed(format!("gradient check failed: {}", failures.join("; "))).into())
    }
}

/// Every on/off assignment of `names`, starting from all on.
pub fn toggle_matrix(base: Toggles, names: &[&str]) -> Result<Vec<Toggles>> {
    (0..1usize << names.len())
        .map(|mask| {
            let mut t = base;
            for (i, name) in names.iter().enumerate() {
                t.set(name, mask >> i & 1 == 0)?;
            }
            Ok(t)
        })
        .collect()
}

pub fn cmd_ablate(common: &Common) -> Result<()> {
    let cfg = RunConfig::resolve("ablate", common)?;
    let names: Vec<&str> =
        match &common.toggles {
            None => Toggles::ABLATABLE.to_vec(),
            Some(list) => parse_toggle_settings(list)?
                .iter()
                .map(|(n, _)| {
                    Toggles::ABLATABLE.iter().copied().find(|a| a == n).with_context(|| {
                        format!("{n:?} is not ablatable; choose from {}", Toggles::ABLATABLE.join(", "))
                    })
                })
                .collect::<Result<_>>()?,
        };
    prepare_out(&cfg)?;
    let data = Dataset::load(&cfg)?;
    let test = if data.test.is_empty() { &data.train } else { &data.test };
    let mut csv = format!("{},params,train_OA,OA,AA,kappa\n", names.join(","));
    if cfg.format == Format::Text {
        let head: String = names.iter().map(|n| format!("{n:>10}")).collect();
        println!(
            "{head}  {:>8} {:>8} {:>8} {:>8} {:>8}",
            "params", "trainOA", "OA", "AA", "kappa"
        );
    }
    for toggles in toggle_matrix(cfg.network.toggles, &names)? {
        let mut net_cfg = cfg.network.clone();
        net_cfg.toggles = toggles;
        let mut net = Network::new(net_cfg)?;
        let report = train(&mut net, &data.train, |_| Ok(()))?;
        let m = score(&net, test, Route::Fused, data.classes)?;
        let train_oa = report.final_train_oa().unwrap_or(f64::NAN);
        let states: Vec<bool> = names.iter().map(|n| toggles.get(n)).collect::<Result<_, _>>()?;
        let mark = |on: bool| if on { "on" } else { "off" };
        writeln!(
            csv,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            states.iter().map(|&s| mark(s)).collect::<Vec<_>>().join(","),
            net.num_parameters(),
            train_oa,
            m.oa,
            m.aa,
            m.kappa
        )
        .unwrap();
        match cfg.format {
            Format::Text => {
                let cells: String = states.iter().map(|&s| format!("{:>10}", mark(s))).collect();
                println!(
                    "{cells}  {:>8} {:>8.2} {:>8.2} {:>8.2} {:>8.4}",
                    net.num_parameters(),
                    train_oa,
                    m.oa,
                    m.aa,
                    m.kappa
                );
            }
            Format::JsonLines => {
                let mut row = serde_json::Map::new();
                for (n, s) in names.iter().zip(&states) {
                    row.insert(n.to_string(), json!(s));
                }
                row.insert("params".into(), json!(net.num_parameters()));
                row.insert("train_oa".into(), json!(train_oa));
                row.insert("oa".into(), json!(m.oa));
                row.insert("aa".into(), json!(m.aa));
                row.insert("kappa".into(), json!(m.kappa));
                println!("{}", serde_json::Value::Object(row));
            }
        }
    }
    fs::write(cfg.out.join("ablation.csv"), csv).context("writing ablation table")?;
    Ok(())
}
