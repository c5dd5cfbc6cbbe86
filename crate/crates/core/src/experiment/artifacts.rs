//! Files read and written by the command line tool.
//!
//! | file                  | format                                           |
//! |-----------------------|--------------------------------------------------|
//! | score table           | flat TOML, `label = score` (integers 1..=100)    |
//! | manifest              | CSV `id,y,f,x0,...,x{d-1}`                       |
//! | external weights      | CSV `id,weight` (strictly positive)              |
//! | plan                  | CSV `epoch,position,sample_id`                   |
//! | probabilities         | CSV `epoch,sample_id,probability` (raw, unnormalised) |
//! | train log             | JSON lines, one object per epoch                 |
//! | predictions           | CSV `id,label,score`                             |
//! | metrics report        | `key = value` lines                              |
//! | ROC points            | CSV `fpr,tpr`                                    |
//! | aggregate / comparison| pretty JSON plus a plain-text table              |
//!
//! All text is UTF-8 with LF line endings.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{self, EvalReport};
use crate::sampler::EpochPlan;
use crate::schedule::{ScheduleState, ScoreTable};
use crate::synth::{self, Dataset};
use crate::trainer::TrainLog;

use super::{AggregateReport, Comparison, ExternalWeights};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let mut w = create(path)?;
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_scores(path: &Path) -> Result<ScoreTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.parse().map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn save_scores(path: &Path, scores: &ScoreTable) -> Result<()> {
    write_file(path, |w| w.write_all(scores.to_toml_string().as_bytes()))
}

pub fn load_manifest(path: &Path, scores: &ScoreTable) -> Result<Dataset> {
    synth::read_manifest(open(path)?, &path.display().to_string(), scores)
}

pub fn save_manifest(path: &Path, dataset: &Dataset) -> Result<()> {
    let w = create(path)?;
    synth::write_manifest(dataset, w).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn load_external_weights(path: &Path) -> Result<ExternalWeights> {
    let source = path.display().to_string();
    let err = |line: u64, message: String| Error::ManifestParseError {
        path: source.clone(),
        line,
        message,
    };
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let header = rdr.headers().map_err(|e| err(1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != ["id", "weight"] {
        return Err(err(1, "header must be `id,weight`".into()));
    }
    let mut weights = ExternalWeights::new();
    for row in rdr.records() {
        let row = row.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let weight = match row[1].parse::<f64>() {
            Ok(w) if w.is_finite() && w > 0.0 => w,
            _ => return Err(err(line, format!("invalid weight `{}`", &row[1]))),
        };
        if weights.insert(row[0].to_string(), weight).is_some() {
            return Err(err(line, format!("duplicate id `{}`", &row[0])));
        }
    }
    Ok(weights)
}

pub fn write_plan(mut w: impl Write, plans: &[EpochPlan], ids: &[String]) -> std::io::Result<()> {
    writeln!(w, "epoch,position,sample_id")?;
    for plan in plans {
        for (position, &i) in plan.order.iter().enumerate() {
            writeln!(w, "{},{},{}", plan.epoch, position, ids[i])?;
        }
    }
    Ok(())
}

/// Raw per-epoch probabilities from epoch 1 to the final epoch.
pub fn write_probabilities(
    mut w: impl Write,
    schedule: &ScheduleState,
    ids: &[String],
) -> std::io::Result<()> {
    writeln!(w, "epoch,sample_id,probability")?;
    let mut state = schedule.clone();
    loop {
        for (id, p) in ids.iter().zip(state.current_probs()) {
            writeln!(w, "{},{},{}", state.current_epoch(), id, p)?;
        }
        if state.is_final_epoch() {
            return Ok(());
        }
        state
            .advance()
            .map_err(|e| std::io::Error::other(e.to_string()))?;
    }
}

pub fn write_train_log(mut w: impl Write, log: &TrainLog) -> std::io::Result<()> {
    for entry in &log.epochs {
        serde_json::to_writer(&mut w, entry)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_eval(dir: &Path, stem: &str, report: &EvalReport) -> Result<()> {
    write_file(&dir.join(format!("{stem}.txt")), |w| {
        w.write_all(metrics::report_text(report).as_bytes())
    })?;
    write_file(&dir.join(format!("{stem}_roc.csv")), |w| {
        metrics::export_roc(report, w)
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

/// `report.json`, `table.txt` and `roc/run{r}.csv` (whole test set) under `dir`.
pub fn write_aggregate(dir: &Path, report: &AggregateReport) -> Result<()> {
    write_json(&dir.join("report.json"), report)?;
    let table = Comparison {
        rows: vec![report.clone()],
    }
    .table();
    write_file(&dir.join("table.txt"), |w| w.write_all(table.as_bytes()))?;
    for run in &report.runs {
        write_file(&dir.join("roc").join(format!("run{}.csv", run.run)), |w| {
            metrics::export_roc(&run.full_test, w)
        })?;
    }
    Ok(())
}

/// `comparison.txt`, `comparison.json`, and one [`write_aggregate`] directory
/// per strategy (suffixed `-2`, `-3`, ... when a strategy repeats).
pub fn write_comparison(dir: &Path, comparison: &Comparison) -> Result<()> {
    write_file(&dir.join("comparison.txt"), |w| {
        w.write_all(comparison.table().as_bytes())
    })?;
    write_json(&dir.join("comparison.json"), comparison)?;
    let mut used = HashSet::new();
    for row in &comparison.rows {
        let mut name = row.strategy.clone();
        let mut n = 1;
        while !used.insert(name.clone()) {
            n += 1;
            name = format!("{}-{n}", row.strategy);
        }
        write_aggregate(&dir.join(name), row)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ScheduleParams;

    #[test]
    fn external_weights_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        fs::write(&path, "id,weight\ns1,2.5\ns2,1\n").unwrap();
        let w = load_external_weights(&path).unwrap();
        assert_eq!(w["s1"], 2.5);
        assert_eq!(w.len(), 2);
        fs::write(&path, "id,weight\ns1,0\n").unwrap();
        assert!(matches!(
            load_external_weights(&path),
            Err(Error::ManifestParseError { line: 2, .. })
        ));
        fs::write(&path, "id,weight\ns1,1\ns1,2\n").unwrap();
        assert!(load_external_weights(&path).is_err());
    }

    #[test]
    fn probabilities_cover_every_epoch() {
        let params = ScheduleParams::new(3, 2).unwrap();
        let state = ScheduleState::new(vec![0.75, 0.25], params).unwrap();
        let mut buf = Vec::new();
        write_probabilities(&mut buf, &state, &["p".into(), "q".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert_eq!(lines[1], "1,p,0.75");
        assert_eq!(lines[5], "3,p,0.5");
    }

    #[test]
    fn plan_rows() {
        let plans = vec![EpochPlan { epoch: 1, order: vec![1, 0] }];
        let mut buf = Vec::new();
        write_plan(&mut buf, &plans, &["a".into(), "b".into()]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,position,sample_id\n1,0,b\n1,1,a\n"
        );
    }

    #[test]
    fn score_file_errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.toml");
        fs::write(&path, "a = \"x\"\n").unwrap();
        match load_scores(&path) {
            Err(Error::Parse { path: p, .. }) => assert_eq!(p, path),
            other => panic!("unexpected {other:?}"),
        }
        save_scores(&path, &ScoreTable::elbow_default()).unwrap();
        assert_eq!(load_scores(&path).unwrap(), ScoreTable::elbow_default());
    }
}
