//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use esc_core::harness::config::ModelEntry;
use esc_core::harness::io::{
    read_forecasts_path, read_truth_path, run_from_forecasts, truth_for_panel, write_forecasts_path,
    write_truth_path, ForecastSeries,
};
use esc_core::harness::report::murphy_file_name;
use esc_core::harness::{assemble_report, rolling_run, simulate as simulate_panel, write_report, RunConfig, SynthTruth};
use esc_core::murphy::{murphy_curve_esc, murphy_curve_tuple, murphy_curve_var, write_curves_csv};
use esc_core::scoring::Target;
use esc_core::{ForecastRecord, LossPanel};

use crate::{MurphyArgs, Overrides, ReportArgs, RunArgs};

const DEFAULT_ALPHA: f64 = 0.975;

pub enum Outcome {
    Clean,
    StepFailures(usize),
}

fn apply_overrides(cfg: &mut RunConfig, o: &Overrides) {
    if let Some(a) = o.alpha {
        cfg.alpha = a;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(l) = o.level {
        cfg.level = l;
    }
    if let Some(b) = o.benchmark {
        cfg.benchmark = Some(b);
    }
    if let Some(ids) = &o.models {
        // keep per-model settings of the file for models that stay listed
        let entries = ids
            .iter()
            .map(|id| {
                cfg.models
                    .iter()
                    .find(|e| e.id() == *id)
                    .cloned()
                    .unwrap_or(ModelEntry::Id(*id))
            })
            .collect();
        cfg.models = entries;
    }
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_path(path)?;
    apply_overrides(&mut cfg, overrides);
    cfg.validate()
        .with_context(|| format!("after applying command-line overrides to {}", path.display()))?;
    Ok(cfg)
}

fn read_panel(path: &Path) -> Result<LossPanel> {
    LossPanel::read_csv_path(path).with_context(|| format!("reading panel {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

pub fn simulate(config: &Path, out: &Path, overrides: &Overrides) -> Result<Outcome> {
    let cfg = load_config(config, overrides)?;
    if cfg.simulation.is_none() {
        bail!("{}: key `simulation` is required by `simulate`", config.display());
    }
    let truth = simulate_panel(&cfg)?;
    create_dir(out)?;
    truth.panel.write_csv_path(out.join("panel.csv"))?;
    write_truth_path(&truth, out.join("truth.csv"))?;
    Ok(Outcome::Clean)
}

/// `forecast` and `backtest`.
pub fn run(args: &RunArgs, with_report: bool) -> Result<Outcome> {
    let cfg = load_config(&args.config, &args.overrides)?;
    let (panel, truth): (LossPanel, Option<SynthTruth>) = match &args.panel {
        Some(path) => {
            let panel = read_panel(path)?;
            let truth = match &args.truth {
                Some(t) => {
                    let rows = read_truth_path(t).with_context(|| format!("reading truth {}", t.display()))?;
                    Some(truth_for_panel(&panel, rows, cfg.alpha)?)
                }
                None => None,
            };
            (panel, truth)
        }
        None => {
            if args.truth.is_some() {
                bail!("--truth needs --panel");
            }
            if cfg.simulation.is_none() {
                bail!("either --panel or the config key `simulation` is required");
            }
            let truth = simulate_panel(&cfg)?;
            (truth.panel.clone(), Some(truth))
        }
    };
    let output = rolling_run(&cfg, &panel, truth.as_ref())?;
    create_dir(&args.out)?;
    write_forecasts_path(&output, panel.dim(), args.out.join("forecasts.csv"))?;
    if with_report {
        let report = assemble_report(&output, &panel, &cfg)?;
        write_report(&report, &args.out)?;
    }
    for f in &output.failures {
        log::warn!("{} failed at time {}: {}", f.model, f.time, f.message);
    }
    Ok(match output.failures.len() {
        0 => Outcome::Clean,
        n => Outcome::StepFailures(n),
    })
}

fn alpha_from(flag: Option<f64>, config: Option<&Path>) -> Result<f64> {
    match (flag, config) {
        (Some(a), _) => Ok(a),
        (None, Some(path)) => Ok(RunConfig::from_path(path)?.alpha),
        (None, None) => Ok(DEFAULT_ALPHA),
    }
}

pub fn murphy(args: &MurphyArgs) -> Result<Outcome> {
    let alpha = alpha_from(args.alpha, args.config.as_deref())?;
    let panel = read_panel(&args.panel)?;
    if let Some(labels) = &args.labels {
        if labels.len() != args.forecasts.len() {
            bail!(
                "--labels has {} entries for {} forecast files",
                labels.len(),
                args.forecasts.len()
            );
        }
    }
    let mut series: Vec<(String, ForecastSeries)> = Vec::new();
    for (i, path) in args.forecasts.iter().enumerate() {
        let read = read_forecasts_path(path, alpha).with_context(|| format!("reading forecasts {}", path.display()))?;
        match &args.labels {
            Some(labels) => {
                if read.len() != 1 {
                    bail!("{} holds {} models; --labels needs one model per file", path.display(), read.len());
                }
                let s = read.into_iter().next().expect("one model").1;
                series.push((labels[i].clone(), s));
            }
            None => series.extend(read),
        }
    }
    for (i, (label, _)) in series.iter().enumerate() {
        if series[..i].iter().any(|(l, _)| l == label) {
            bail!("curve label `{label}` appears twice; use --labels");
        }
    }
    let times: Vec<i64> = series[0].1.keys().copied().collect();
    for (label, s) in &series {
        if !s.keys().copied().eq(times.iter().copied()) {
            bail!("forecasts of `{label}` cover different times than those of `{}`", series[0].0);
        }
        if let Some(rec) = s.values().find(|r| r.dim() != panel.dim()) {
            bail!("forecasts of `{label}` have {} ESC columns, the panel has {}", rec.dim(), panel.dim());
        }
    }
    let rows = times
        .iter()
        .map(|&t| panel.index_of(t).with_context(|| format!("forecast time {t} is not in the panel")))
        .collect::<Result<Vec<usize>>>()?;
    let oos = panel.select(&rows)?;
    let names = oos.names().to_vec();
    let targets: Vec<Target> = match &args.target {
        Some(t) => {
            let all = Target::all(oos.dim());
            let found = all.iter().find(|x| x.label(&names) == *t).copied();
            match found {
                Some(x) => vec![x],
                None => {
                    let known: Vec<String> = all.iter().map(|x| x.label(&names)).collect();
                    bail!("unknown target `{t}`; known targets: {}", known.join(", "));
                }
            }
        }
        None => Target::all(oos.dim()),
    };
    create_dir(&args.out)?;
    for target in targets {
        let mut curves = Vec::with_capacity(series.len());
        for (label, s) in &series {
            let f: Vec<ForecastRecord> = s.values().cloned().collect();
            let curve = match target {
                Target::Var => murphy_curve_var(&f, &oos, label),
                Target::EscTuple => murphy_curve_tuple(&f, &oos, label),
                Target::EscComponent(j) => murphy_curve_esc(&f, &oos, j, label),
            };
            curves.push(curve.with_context(|| format!("Murphy curve of `{label}`"))?);
        }
        let path = args.out.join(murphy_file_name(&target.label(&names)));
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_curves_csv(&curves, std::io::BufWriter::new(file))?;
    }
    Ok(Outcome::Clean)
}

pub fn report(args: &ReportArgs) -> Result<Outcome> {
    let panel = read_panel(&args.panel)?;
    let mut cfg = match &args.config {
        Some(path) => load_config(path, &args.overrides)?,
        None => {
            let mut cfg = RunConfig::new(0, 0);
            apply_overrides(&mut cfg, &args.overrides);
            cfg
        }
    };
    let series = read_forecasts_path(&args.forecasts, cfg.alpha)
        .with_context(|| format!("reading forecasts {}", args.forecasts.display()))?;
    let series: Vec<(String, ForecastSeries)> = match &args.overrides.models {
        Some(ids) => {
            let kept: BTreeMap<String, ForecastSeries> = series
                .into_iter()
                .filter(|(label, _)| ids.iter().any(|id| id.as_str().eq_ignore_ascii_case(label)))
                .collect();
            ids.iter()
                .map(|id| {
                    kept.iter()
                        .find(|(l, _)| id.as_str().eq_ignore_ascii_case(l))
                        .map(|(l, s)| (l.clone(), s.clone()))
                        .with_context(|| format!("model {id} is not in {}", args.forecasts.display()))
                })
                .collect::<Result<_>>()?
        }
        None => series,
    };
    let output = run_from_forecasts(&panel, &series)?;
    if args.config.is_none() {
        cfg.window = output.first_row;
    }
    cfg.horizon = output.times.len();
    cfg.models = output.models.iter().map(|m| ModelEntry::Id(*m)).collect();
    if let Some(b) = cfg.benchmark {
        if !output.models.contains(&b) {
            bail!("benchmark model `{b}` is missing from the forecasts");
        }
    }
    let report = assemble_report(&output, &panel, &cfg)?;
    write_report(&report, &args.out)?;
    Ok(Outcome::Clean)
}
