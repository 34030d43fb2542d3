//! Backtest report: average scores and ranks, Diebold–Mariano tests against a
//! benchmark, calibration tests, joint Wald tests and Murphy curves.
//!
//! Tests and averages use the steps where every model produced a forecast,
//! so all models are compared on the same observations.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{EscError, Result};
use crate::harness::config::{ModelId, RunConfig};
use crate::harness::rolling::{RunOutput, StepFailure};
use crate::identification::{ident_series, IdentKind};
use crate::murphy::{murphy_curve_esc, murphy_curve_tuple, murphy_curve_var, write_curves_csv, MurphyCurve};
use crate::panel::{fmt_f64, ForecastRecord, LossPanel, ScorePair};
use crate::scoring::{mean_pair, score_series, ScoringRule, Target};
use crate::stattests::{calibration_test, dm_test, wald_joint, TestResult, WaldMode, Zone};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AvgScoreRow {
    pub model: ModelId,
    pub target: String,
    pub var_score: f64,
    pub esc_score: f64,
    /// Lexicographic rank among the models, 1 = best; ties share a rank.
    pub rank: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DmRow {
    pub model: ModelId,
    pub benchmark: ModelId,
    pub target: String,
    /// `var` or `esc`: which coordinate of the score pair is compared.
    pub component: String,
    pub result: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub model: ModelId,
    /// `VaR`, `ES` or `ESC_<name>`.
    pub function: String,
    pub mean: f64,
    pub result: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaldRow {
    pub model: ModelId,
    /// `VaR,ES` or `VaR,ESC`.
    pub functions: String,
    pub result: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub alpha: f64,
    pub level: f64,
    pub window: usize,
    pub horizon: usize,
    pub seed: u64,
    pub models: Vec<ModelId>,
    pub benchmark: Option<ModelId>,
    pub panel_fingerprint: String,
    /// Steps where every model with at least one forecast has one.
    pub common_steps: usize,
    pub missing: BTreeMap<ModelId, usize>,
    pub failures: Vec<StepFailure>,
    pub clamp_events: BTreeMap<ModelId, usize>,
    pub unconverged_fits: BTreeMap<ModelId, usize>,
    pub avg_scores: Vec<AvgScoreRow>,
    pub dm_tests: Vec<DmRow>,
    pub calibration: Vec<CalibrationRow>,
    pub wald: Vec<WaldRow>,
    /// Tests that could not be computed, with the reason.
    pub skipped: Vec<String>,
    #[serde(skip)]
    pub murphy: Vec<(String, Vec<MurphyCurve>)>,
}

/// Rows of `panel` at `rows`, with their time labels.
fn ranks(pairs: &[ScorePair]) -> Vec<usize> {
    pairs
        .iter()
        .map(|p| 1 + pairs.iter().filter(|q| q.lex_cmp(p).is_lt()).count())
        .collect()
}

/// Out-of-sample rows and forecasts of `models` at the steps `steps`.
fn gather(
    run: &RunOutput,
    panel: &LossPanel,
    models: &[ModelId],
    steps: &[usize],
) -> Result<(LossPanel, BTreeMap<ModelId, Vec<ForecastRecord>>)> {
    let rows: Vec<usize> = steps.iter().map(|i| run.first_row + i).collect();
    let oos = panel.select(&rows)?;
    let forecasts = models
        .iter()
        .map(|m| {
            let v = steps
                .iter()
                .map(|&i| run.forecasts[m][i].clone().expect("step selected as available"))
                .collect();
            (*m, v)
        })
        .collect();
    Ok((oos, forecasts))
}

/// Steps where every model in `models` has a forecast.
fn complete_steps(run: &RunOutput, models: &[ModelId]) -> Vec<usize> {
    (0..run.times.len())
        .filter(|&i| models.iter().all(|m| run.forecasts[m][i].is_some()))
        .collect()
}

/// Builds the report of a run over `panel` (the full panel the run used).
///
/// Average scores, ranks and Murphy curves use the steps where every model
/// with at least one forecast has one. Each DM test uses the steps where
/// both the model and the benchmark have forecasts, and the calibration and
/// Wald tests of a model use all of its own forecasts.
pub fn assemble_report(run: &RunOutput, panel: &LossPanel, config: &RunConfig) -> Result<BacktestReport> {
    let models = run.models.clone();
    if models.is_empty() || run.times.is_empty() {
        return Err(EscError::Empty("forecasts".into()));
    }
    let benchmark = config.benchmark_id();
    if let Some(b) = benchmark {
        if !models.contains(&b) {
            return Err(EscError::MissingBenchmark(b.to_string()));
        }
    }
    let missing: BTreeMap<ModelId, usize> = models
        .iter()
        .map(|m| (*m, run.forecasts[m].iter().filter(|r| r.is_none()).count()))
        .collect();
    let active: Vec<ModelId> = models
        .iter()
        .copied()
        .filter(|m| missing[m] < run.times.len())
        .collect();
    let common = complete_steps(run, &active);
    let mut report = BacktestReport {
        alpha: config.alpha,
        level: config.level,
        window: config.window,
        horizon: config.horizon,
        seed: config.seed,
        models: models.clone(),
        benchmark,
        panel_fingerprint: format!("{:016x}", panel.fingerprint()),
        common_steps: common.len(),
        missing,
        failures: run.failures.clone(),
        clamp_events: run.clamp_events.clone(),
        unconverged_fits: run.unconverged_fits.clone(),
        avg_scores: Vec::new(),
        dm_tests: Vec::new(),
        calibration: Vec::new(),
        wald: Vec::new(),
        skipped: Vec::new(),
        murphy: Vec::new(),
    };
    for m in models.iter().filter(|m| !active.contains(m)) {
        report.skipped.push(format!("{m} produced no forecast"));
    }
    let rule = ScoringRule::default();
    let names = panel.names().to_vec();
    let d = panel.dim();

    if common.is_empty() {
        report.skipped.push("no step has forecasts from every model".into());
    } else {
        let (oos, forecasts) = gather(run, panel, &active, &common)?;
        for target in Target::all(d) {
            let label = target.label(&names);
            let means = active
                .iter()
                .map(|m| Ok(mean_pair(&score_series(&forecasts[m], &oos, target, &rule)?)))
                .collect::<Result<Vec<ScorePair>>>()?;
            for ((m, p), rank) in active.iter().zip(&means).zip(ranks(&means)) {
                report.avg_scores.push(AvgScoreRow {
                    model: *m,
                    target: label.clone(),
                    var_score: p.var_score,
                    esc_score: p.esc_score,
                    rank,
                    n: oos.len(),
                });
            }
        }
    }

    if let Some(b) = benchmark {
        for m in models.iter().filter(|&&m| m != b) {
            let steps = complete_steps(run, &[*m, b]);
            if steps.is_empty() {
                report.skipped.push(format!("DM {m} vs {b}: no step has both forecasts"));
                continue;
            }
            let (oos, forecasts) = gather(run, panel, &[*m, b], &steps)?;
            for target in Target::all(d) {
                let label = target.label(&names);
                let ours = score_series(&forecasts[m], &oos, target, &rule)?;
                let theirs = score_series(&forecasts[&b], &oos, target, &rule)?;
                let component = if target == Target::Var { "var" } else { "esc" };
                let diff: Vec<f64> = ours
                    .iter()
                    .zip(&theirs)
                    .map(|(a, c)| {
                        if target == Target::Var {
                            a.var_score - c.var_score
                        } else {
                            a.esc_score - c.esc_score
                        }
                    })
                    .collect();
                match dm_test(&diff, config.level) {
                    Ok(result) => report.dm_tests.push(DmRow {
                        model: *m,
                        benchmark: b,
                        target: label.clone(),
                        component: component.into(),
                        result,
                    }),
                    Err(e) => report.skipped.push(format!("DM {m} vs {b} on {label}: {e}")),
                }
            }
        }
    }

    for m in &active {
        let steps = complete_steps(run, &[*m]);
        let (oos, forecasts) = gather(run, panel, &[*m], &steps)?;
        let f = &forecasts[m];
        let mut kinds = vec![(IdentKind::Var, "VaR".to_string()), (IdentKind::Es, "ES".to_string())];
        kinds.extend((0..d).map(|j| (IdentKind::Esc(j), Target::EscComponent(j).label(&names))));
        for (kind, function) in kinds {
            let s = ident_series(f, &oos, kind)?;
            let values = s.column(0);
            match calibration_test(&values, config.level) {
                Ok(result) => report.calibration.push(CalibrationRow {
                    model: *m,
                    function,
                    mean: s.mean()[0],
                    result,
                }),
                Err(e) => report.skipped.push(format!("calibration {m} {function}: {e}")),
            }
        }
        for (kind, functions) in [(IdentKind::VarEs, "VaR,ES"), (IdentKind::Tuple, "VaR,ESC")] {
            let s = ident_series(f, &oos, kind)?;
            let matrix: Vec<Vec<f64>> = s.rows().map(<[f64]>::to_vec).collect();
            for mode in [WaldMode::TwoSided, WaldMode::LeqLex, WaldMode::GeqLex] {
                match wald_joint(&matrix, config.level, mode) {
                    Ok(result) => report.wald.push(WaldRow {
                        model: *m,
                        functions: functions.into(),
                        result,
                    }),
                    Err(e) => {
                        report.skipped.push(format!("Wald {m} {functions} {}: {e}", mode.as_str()));
                        break;
                    }
                }
            }
        }
    }

    if !common.is_empty() {
        let (oos, forecasts) = gather(run, panel, &active, &common)?;
        for target in Target::all(d) {
            let label = target.label(&names);
            let mut curves = Vec::with_capacity(active.len());
            for m in &active {
                let f = &forecasts[m];
                let name = m.as_str();
                let curve = match target {
                    Target::Var => murphy_curve_var(f, &oos, name),
                    Target::EscTuple => murphy_curve_tuple(f, &oos, name),
                    Target::EscComponent(j) => murphy_curve_esc(f, &oos, j, name),
                };
                match curve {
                    Ok(c) => curves.push(c),
                    Err(e) => report.skipped.push(format!("Murphy curve {m} {label}: {e}")),
                }
            }
            report.murphy.push((label, curves));
        }
    }
    Ok(report)
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| EscError::io(path, e))
}

fn test_fields(r: &TestResult) -> Vec<String> {
    vec![
        fmt_f64(r.statistic),
        fmt_f64(r.p_equal),
        fmt_f64(r.p_leq),
        fmt_f64(r.p_geq),
        r.zone.as_str().to_string(),
        r.n.to_string(),
        fmt_f64(r.bandwidth),
        r.degenerate.to_string(),
    ]
}

const TEST_HEADER: [&str; 8] = [
    "statistic",
    "p_equal",
    "p_leq",
    "p_geq",
    "zone",
    "n",
    "bandwidth",
    "degenerate",
];

fn flush<W: Write>(wtr: csv::Writer<W>, path: &Path) -> Result<()> {
    let mut inner = wtr.into_inner().map_err(|e| EscError::io(path, e.into_error()))?;
    inner.flush().map_err(|e| EscError::io(path, e))
}

/// File name of the Murphy curves of a target label.
pub fn murphy_file_name(label: &str) -> String {
    let safe: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    format!("murphy_{safe}.csv")
}

/// Writes `summary.json`, `avg_scores.csv`, `dm_tests.csv`,
/// `calibration.csv`, `wald.csv` and one `murphy_<target>.csv` per target
/// into `dir`. Returns the written paths.
pub fn write_report(report: &BacktestReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| EscError::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join("summary.json");
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| EscError::io(&path, e))?;
    written.push(path);

    let path = dir.join("avg_scores.csv");
    let mut wtr = csv::Writer::from_writer(std::io::BufWriter::new(create(&path)?));
    wtr.write_record(["model", "target", "var_score", "esc_score", "rank", "n"])?;
    for r in &report.avg_scores {
        wtr.write_record([
            r.model.as_str().to_string(),
            r.target.clone(),
            fmt_f64(r.var_score),
            fmt_f64(r.esc_score),
            r.rank.to_string(),
            r.n.to_string(),
        ])?;
    }
    flush(wtr, &path)?;
    written.push(path);

    let path = dir.join("dm_tests.csv");
    let mut wtr = csv::Writer::from_writer(std::io::BufWriter::new(create(&path)?));
    let mut header = vec!["model", "benchmark", "target", "component"];
    header.extend(TEST_HEADER);
    wtr.write_record(&header)?;
    for r in &report.dm_tests {
        let mut rec = vec![
            r.model.as_str().to_string(),
            r.benchmark.as_str().to_string(),
            r.target.clone(),
            r.component.clone(),
        ];
        rec.extend(test_fields(&r.result));
        wtr.write_record(&rec)?;
    }
    flush(wtr, &path)?;
    written.push(path);

    let path = dir.join("calibration.csv");
    let mut wtr = csv::Writer::from_writer(std::io::BufWriter::new(create(&path)?));
    let mut header = vec!["model", "function", "mean"];
    header.extend(TEST_HEADER);
    wtr.write_record(&header)?;
    for r in &report.calibration {
        let mut rec = vec![r.model.as_str().to_string(), r.function.clone(), fmt_f64(r.mean)];
        rec.extend(test_fields(&r.result));
        wtr.write_record(&rec)?;
    }
    flush(wtr, &path)?;
    written.push(path);

    let path = dir.join("wald.csv");
    let mut wtr = csv::Writer::from_writer(std::io::BufWriter::new(create(&path)?));
    let mut header = vec!["model", "functions", "mode", "p_value"];
    header.extend(TEST_HEADER);
    header.push("regularized");
    wtr.write_record(&header)?;
    for r in &report.wald {
        let mode = r.result.mode.map_or("", |m| m.as_str());
        let mut rec = vec![
            r.model.as_str().to_string(),
            r.functions.clone(),
            mode.to_string(),
            fmt_f64(r.result.p_value()),
        ];
        rec.extend(test_fields(&r.result));
        rec.push(r.result.regularized.to_string());
        wtr.write_record(&rec)?;
    }
    flush(wtr, &path)?;
    written.push(path);

    for (label, curves) in &report.murphy {
        if curves.is_empty() {
            continue;
        }
        let path = dir.join(murphy_file_name(label));
        write_curves_csv(curves, std::io::BufWriter::new(create(&path)?))?;
        written.push(path);
    }
    Ok(written)
}

impl BacktestReport {
    /// Calibration zone of `model` for `function`, if tested.
    pub fn calibration_zone(&self, model: ModelId, function: &str) -> Option<Zone> {
        self.calibration
            .iter()
            .find(|r| r.model == model && r.function == function)
            .map(|r| r.result.zone)
    }

    /// Average score pair of `model` on `target`.
    pub fn average(&self, model: ModelId, target: &str) -> Option<ScorePair> {
        self.avg_scores
            .iter()
            .find(|r| r.model == model && r.target == target)
            .map(|r| ScorePair::new(r.var_score, r.esc_score))
    }
}
