//! CSV exchange of forecast series and simulated truth.
//!
//! Forecast files have the header `time,model,var,es,esc_1,…,esc_d`, truth
//! files `time,true_var,true_es,true_esc_1,…,true_esc_d`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{EscError, Result};
use crate::harness::config::ModelId;
use crate::harness::rolling::RunOutput;
use crate::harness::synth::{GeneratorParams, SynthTruth};
use crate::panel::{fmt_f64, ForecastRecord, LossPanel};

/// Forecasts of one model keyed by time label.
pub type ForecastSeries = BTreeMap<i64, ForecastRecord>;

/// Writes every non-missing forecast of `run`, model by model in
/// configuration order.
pub fn write_forecasts_csv<W: Write>(run: &RunOutput, dim: usize, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string(), "model".into(), "var".into(), "es".into()];
    header.extend((1..=dim).map(|j| format!("esc_{j}")));
    wtr.write_record(&header)?;
    for m in &run.models {
        for (t, rec) in run.times.iter().zip(&run.forecasts[m]) {
            let Some(r) = rec else { continue };
            let mut row = vec![t.to_string(), m.as_str().to_string(), fmt_f64(r.var), fmt_f64(r.es)];
            row.extend(r.esc.iter().map(|x| fmt_f64(*x)));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush().map_err(|e| EscError::io("<forecast csv>", e))?;
    Ok(())
}

pub fn write_forecasts_path(run: &RunOutput, dim: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| EscError::io(path, e))?;
    write_forecasts_csv(run, dim, std::io::BufWriter::new(file))
}

fn parse_f64(field: &str, row: usize, col: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| EscError::Parse(format!("row {row}, column `{col}`: `{field}` is not a number")))
}

fn parse_time(field: &str, row: usize) -> Result<i64> {
    field
        .trim()
        .parse()
        .map_err(|_| EscError::Parse(format!("row {row}: time `{field}` is not an integer")))
}

/// Reads a forecast file; `alpha` is attached to every record. Returns the
/// series per model label in order of first appearance.
pub fn read_forecasts_csv<R: Read>(reader: R, alpha: f64) -> Result<Vec<(String, ForecastSeries)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expect = ["time", "model", "var", "es"];
    if headers.len() < 6 || headers.iter().take(4).map(str::trim).ne(expect) {
        return Err(EscError::Parse(
            "forecast header must be `time,model,var,es,esc_1,...,esc_d` with d >= 2".into(),
        ));
    }
    let d = headers.len() - 4;
    let mut out: Vec<(String, ForecastSeries)> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 4 {
            return Err(EscError::Parse(format!("row {r} has {} fields, expected {}", rec.len(), d + 4)));
        }
        let time = parse_time(&rec[0], r)?;
        let model = rec[1].trim().to_string();
        let var = parse_f64(&rec[2], r, "var")?;
        let es = parse_f64(&rec[3], r, "es")?;
        let esc = (0..d)
            .map(|j| parse_f64(&rec[4 + j], r, &headers[4 + j]))
            .collect::<Result<Vec<_>>>()?;
        let record = ForecastRecord::new(esc, var, es, alpha)?;
        let idx = match out.iter().position(|(m, _)| *m == model) {
            Some(i) => i,
            None => {
                out.push((model.clone(), BTreeMap::new()));
                out.len() - 1
            }
        };
        if out[idx].1.insert(time, record).is_some() {
            return Err(EscError::Parse(format!("duplicate forecast for model `{model}` at time {time}")));
        }
    }
    Ok(out)
}

pub fn read_forecasts_path(path: impl AsRef<Path>, alpha: f64) -> Result<Vec<(String, ForecastSeries)>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| EscError::io(path, e))?;
    read_forecasts_csv(std::io::BufReader::new(file), alpha)
}

/// Rebuilds a run from forecast series read back from CSV. The forecast
/// times must form a contiguous block of `panel` rows; a time present for
/// some models but not others counts as a missing forecast.
pub fn run_from_forecasts(panel: &LossPanel, series: &[(String, ForecastSeries)]) -> Result<RunOutput> {
    if series.is_empty() {
        return Err(EscError::Empty("forecast file has no rows".into()));
    }
    let mut models = Vec::with_capacity(series.len());
    for (label, s) in series {
        let id: ModelId = label.parse()?;
        if models.contains(&id) {
            return Err(EscError::Parse(format!("model `{label}` appears twice")));
        }
        if let Some((_, rec)) = s.iter().find(|(_, r)| r.dim() != panel.dim()) {
            return Err(EscError::Dimension(format!(
                "model `{label}` has {} ESC columns, panel has {}",
                rec.dim(),
                panel.dim()
            )));
        }
        models.push(id);
    }
    let first = series.iter().filter_map(|(_, s)| s.keys().next()).min().copied();
    let last = series.iter().filter_map(|(_, s)| s.keys().next_back()).max().copied();
    let (Some(first), Some(last)) = (first, last) else {
        return Err(EscError::Empty("forecast file has no rows".into()));
    };
    let lookup = |t: i64| {
        panel
            .index_of(t)
            .ok_or_else(|| EscError::Parse(format!("forecast time {t} is not in the panel")))
    };
    let (lo, hi) = (lookup(first)?, lookup(last)?);
    if hi < lo {
        return Err(EscError::Parse("panel times are not increasing".into()));
    }
    let times: Vec<i64> = panel.times()[lo..=hi].to_vec();
    for (label, s) in series {
        if let Some(t) = s.keys().find(|t| times.binary_search(t).is_err()) {
            return Err(EscError::Parse(format!(
                "forecast time {t} of model `{label}` is outside the panel rows {first}..={last}"
            )));
        }
    }
    let forecasts = models
        .iter()
        .zip(series)
        .map(|(m, (_, s))| (*m, times.iter().map(|t| s.get(t).cloned()).collect()))
        .collect();
    Ok(RunOutput {
        models: models.clone(),
        first_row: lo,
        times,
        forecasts,
        failures: Vec::new(),
        clamp_events: models.iter().map(|m| (*m, 0)).collect(),
        unconverged_fits: models.iter().map(|m| (*m, 0)).collect(),
    })
}

pub fn write_truth_csv<W: Write>(truth: &SynthTruth, writer: W) -> Result<()> {
    let d = truth.panel.dim();
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string(), "true_var".into(), "true_es".into()];
    header.extend((1..=d).map(|j| format!("true_esc_{j}")));
    wtr.write_record(&header)?;
    for t in 0..truth.panel.len() {
        let mut row = vec![
            truth.panel.times()[t].to_string(),
            fmt_f64(truth.true_var[t]),
            fmt_f64(truth.true_es[t]),
        ];
        row.extend(truth.true_esc[t].iter().map(|x| fmt_f64(*x)));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| EscError::io("<truth csv>", e))?;
    Ok(())
}

pub fn write_truth_path(truth: &SynthTruth, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| EscError::io(path, e))?;
    write_truth_csv(truth, std::io::BufWriter::new(file))
}

/// Truth rows `(time, VaR, ES, ESC)`.
pub type TruthRows = Vec<(i64, f64, f64, Vec<f64>)>;

pub fn read_truth_csv<R: Read>(reader: R) -> Result<TruthRows> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expect = ["time", "true_var", "true_es"];
    if headers.len() < 5 || headers.iter().take(3).map(str::trim).ne(expect) {
        return Err(EscError::Parse(
            "truth header must be `time,true_var,true_es,true_esc_1,...`".into(),
        ));
    }
    let d = headers.len() - 3;
    let mut out = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 3 {
            return Err(EscError::Parse(format!("row {r} has {} fields, expected {}", rec.len(), d + 3)));
        }
        let esc = (0..d)
            .map(|j| parse_f64(&rec[3 + j], r, &headers[3 + j]))
            .collect::<Result<Vec<_>>>()?;
        out.push((
            parse_time(&rec[0], r)?,
            parse_f64(&rec[1], r, "true_var")?,
            parse_f64(&rec[2], r, "true_es")?,
            esc,
        ));
    }
    Ok(out)
}

/// Attaches truth rows read from a file to `panel`; the time labels must
/// match row by row.
pub fn truth_for_panel(panel: &LossPanel, rows: TruthRows, alpha: f64) -> Result<SynthTruth> {
    if rows.len() != panel.len() {
        return Err(EscError::LengthMismatch {
            expected: panel.len(),
            got: rows.len(),
        });
    }
    let mut truth = SynthTruth {
        panel: panel.clone(),
        true_var: Vec::with_capacity(rows.len()),
        true_es: Vec::with_capacity(rows.len()),
        true_esc: Vec::with_capacity(rows.len()),
        alpha,
        generator: GeneratorParams::Loaded,
    };
    for (r, (time, var, es, esc)) in rows.into_iter().enumerate() {
        if time != panel.times()[r] {
            return Err(EscError::Parse(format!(
                "truth row {r} has time {time}, panel has {}",
                panel.times()[r]
            )));
        }
        if esc.len() != panel.dim() {
            return Err(EscError::Dimension(format!(
                "truth has {} ESC columns, panel has {}",
                esc.len(),
                panel.dim()
            )));
        }
        truth.true_var.push(var);
        truth.true_es.push(es);
        truth.true_esc.push(esc);
    }
    Ok(truth)
}

pub fn read_truth_path(path: impl AsRef<Path>) -> Result<TruthRows> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| EscError::io(path, e))?;
    read_truth_csv(std::io::BufReader::new(file))
}
