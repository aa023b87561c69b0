//! On-disk formats: DOTA label directories, detection files, noise records,
//! and the CSV/text outputs of each command.

use std::fs;
use std::path::{Path, PathBuf};

use dld_core::annotations::{parse_dota, write_dota, AnnotationError, ImageAnnotations, NoiseChange, NoiseRecord};
use dld_core::dynamics::{ElReport, EpochSeries};
use dld_core::geometry::QuadCorners;
use dld_core::metrics::{Detection, EvalReport, ImageDetections, SubsetMap};
use dld_core::trainer::{CellMode, SweepTable, TrainLog};

use crate::error::CliError;

pub const NOISE_RECORD_FILE: &str = "noise_record.txt";

/// `*.txt` files of a directory sorted by name, excluding the noise record.
pub fn list_txt(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("not a directory: {}", dir.display())));
    }
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(CliError::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .filter(|p| p.file_name().is_some_and(|n| n != NOISE_RECORD_FILE))
        .collect();
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

pub fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(CliError::io(path))
}

fn annotation_error(path: &Path, e: AnnotationError) -> CliError {
    match e {
        AnnotationError::MalformedLine { line, reason } => CliError::parse(path, line, reason),
        AnnotationError::EmptyCategory { line } => CliError::parse(path, line, "empty category"),
        other => CliError::Failed(format!("{}: {other}", path.display())),
    }
}

/// One image per label file; the image id is the file stem.
pub fn read_label_dir(dir: &Path) -> Result<Vec<ImageAnnotations>, CliError> {
    list_txt(dir)?
        .iter()
        .map(|p| parse_dota(&read(p)?, &stem(p)).map_err(|e| annotation_error(p, e)))
        .collect()
}

pub fn write_label_dir(dir: &Path, dataset: &[ImageAnnotations]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    for ann in dataset {
        write(&dir.join(format!("{}.txt", ann.image_id)), &write_dota(ann))?;
    }
    Ok(())
}

pub fn format_noise_record(record: &NoiseRecord) -> String {
    let mut out = format!("ratio={} seed={}\n", record.ratio, record.seed);
    for c in &record.changes {
        out.push_str(&format!("{} {} {} {}\n", c.image_id, c.instance_index, c.original, c.corrupted));
    }
    out
}

pub fn parse_noise_record(text: &str, path: &Path) -> Result<NoiseRecord, CliError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| CliError::parse(path, 1, "missing header"))?;
    let (mut ratio, mut seed) = (None, None);
    for tok in header.split_whitespace() {
        match tok.split_once('=') {
            Some(("ratio", v)) => ratio = v.parse::<f64>().ok(),
            Some(("seed", v)) => seed = v.parse::<u64>().ok(),
            _ => return Err(CliError::parse(path, 1, format!("unexpected header token {tok:?}"))),
        }
    }
    let (Some(ratio), Some(seed)) = (ratio, seed) else {
        return Err(CliError::parse(path, 1, "header must be \"ratio=<r> seed=<s>\""));
    };
    let mut changes = Vec::new();
    for (i, line) in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        let [image_id, index, original, corrupted] = t[..] else {
            return Err(CliError::parse(path, i + 1, format!("expected 4 fields, found {}", t.len())));
        };
        let instance_index = index.parse().map_err(|_| CliError::parse(path, i + 1, format!("bad index {index:?}")))?;
        changes.push(NoiseChange {
            image_id: image_id.into(),
            instance_index,
            original: original.into(),
            corrupted: corrupted.into(),
        });
    }
    Ok(NoiseRecord { ratio, seed, vocabulary: Vec::new(), changes })
}

pub fn read_noise_record(path: &Path) -> Result<NoiseRecord, CliError> {
    parse_noise_record(&read(path)?, path)
}

/// Lines `x1 y1 x2 y2 x3 y3 x4 y4 category score`.
pub fn parse_detections(text: &str, path: &Path, image_id: &str) -> Result<ImageDetections, CliError> {
    let mut detections = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.is_empty() {
            continue;
        }
        if t.len() != 10 {
            return Err(CliError::parse(path, i + 1, format!("expected 10 fields, found {}", t.len())));
        }
        let mut c = [0.0; 8];
        for (k, v) in c.iter_mut().enumerate() {
            *v = t[k].parse().map_err(|_| CliError::parse(path, i + 1, format!("bad coordinate {:?}", t[k])))?;
        }
        let score: f64 = t[9].parse().map_err(|_| CliError::parse(path, i + 1, format!("bad score {:?}", t[9])))?;
        let det = Detection::new(QuadCorners::from_flat(c), t[8], score).map_err(|e| CliError::parse(path, i + 1, e.to_string()))?;
        detections.push(det);
    }
    Ok(ImageDetections { image_id: image_id.into(), detections })
}

pub fn read_detection_dir(dir: &Path) -> Result<Vec<ImageDetections>, CliError> {
    list_txt(dir)?.iter().map(|p| parse_detections(&read(p)?, p, &stem(p))).collect()
}

/// Reads `epoch` and the named column from a CSV with a header row.
pub fn read_series(path: &Path, metric: &str) -> Result<EpochSeries, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let epoch_col = col("epoch").ok_or_else(|| CliError::parse(path, 1, "no \"epoch\" column"))?;
    let metric_col = col(metric).ok_or_else(|| CliError::parse(path, 1, format!("no {metric:?} column")))?;
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let epoch: u32 = rec
            .get(epoch_col)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::parse(path, line, "bad epoch"))?;
        let value: f64 = rec
            .get(metric_col)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::parse(path, line, format!("bad {metric} value")))?;
        points.push((epoch, value));
    }
    EpochSeries::new(metric, points).map_err(|e| CliError::parse(path, 0, e.to_string()))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        kind => CliError::parse(path, line, format!("{kind:?}")),
    }
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn trace_csv(report: &ElReport) -> String {
    csv_string(
        &["epoch", "fitted_value", "first_deriv", "second_deriv", "triggered"],
        report.trace.iter().map(|r| {
            vec![
                r.epoch.to_string(),
                r.fitted.to_string(),
                r.first_deriv.to_string(),
                r.second_deriv.to_string(),
                u8::from(r.triggered).to_string(),
            ]
        }),
    )
}

pub fn el_report_text(report: &ElReport) -> String {
    let coeffs: Vec<String> = report.fit.coefficients().iter().map(f64::to_string).collect();
    format!(
        "el={}\neta={}\ndegree={}\nmin_epochs={}\nimmediate_trigger={}\nresidual_rms={}\ncoefficients={}\n",
        report.el.map_or("none".into(), |e| e.to_string()),
        report.eta,
        report.degree,
        report.min_epochs,
        report.immediate_trigger,
        report.fit.residual_rms(),
        coeffs.join(","),
    )
}

pub fn train_log_csv(log: &TrainLog) -> String {
    csv_string(
        &["epoch", "acc", "clean_acc", "correct_subset_acc", "corrupted_fit", "loss", "alpha", "topk_size"],
        log.rows.iter().map(|r| {
            vec![
                r.epoch.to_string(),
                r.acc.to_string(),
                r.clean_acc.to_string(),
                r.correct_subset_acc.to_string(),
                r.corrupted_fit.to_string(),
                r.loss.to_string(),
                r.alpha.to_string(),
                r.topk_size.to_string(),
            ]
        }),
    )
}

pub const SWEEP_HEADER: [&str; 14] = [
    "cell",
    "noise_ratio",
    "mode",
    "k_fraction",
    "el_offset",
    "seed",
    "el",
    "final_clean_acc",
    "best_clean_acc",
    "best_epoch",
    "final_acc",
    "final_corrupted_fit",
    "runs",
    "error",
];

pub fn sweep_csv(table: &SweepTable) -> String {
    csv_string(
        &SWEEP_HEADER,
        table.rows.iter().map(|row| {
            let (mode, k, off) = match row.cell.mode {
                CellMode::Baseline => ("baseline".to_string(), String::new(), String::new()),
                CellMode::LabelSmoothing { epsilon } => (format!("ls:{epsilon}"), String::new(), String::new()),
                CellMode::Dld { k_fraction, el_offset } => ("dld".to_string(), k_fraction.to_string(), el_offset.to_string()),
            };
            let mut r = vec![
                row.cell.index.to_string(),
                row.cell.noise_ratio.to_string(),
                mode,
                k,
                off,
                row.seed.map_or("mean".into(), |s| s.to_string()),
            ];
            match &row.result {
                Ok(c) => r.extend([
                    c.el.map_or(String::new(), |e| e.to_string()),
                    c.final_clean_acc.to_string(),
                    c.best_clean_acc.to_string(),
                    c.best_epoch.to_string(),
                    c.final_acc.to_string(),
                    c.final_corrupted_fit.to_string(),
                    row.runs.to_string(),
                    String::new(),
                ]),
                Err(e) => {
                    r.extend(std::iter::repeat_n(String::new(), 6));
                    r.extend([row.runs.to_string(), e.clone()]);
                }
            }
            r
        }),
    )
}

pub fn report_csv(report: &EvalReport) -> String {
    csv_string(
        &["class", "ap", "tp", "fp", "gt"],
        report
            .summary
            .classes
            .iter()
            .map(|(c, s)| vec![c.clone(), s.ap.to_string(), s.tp.to_string(), s.fp.to_string(), s.num_gt.to_string()]),
    )
}

fn subset_lines(out: &mut String, key: &str, s: &Option<SubsetMap>) {
    if let Some(s) = s {
        out.push_str(&format!("{key}={}\n{key}_empty={}\n", s.value, s.empty));
    }
}

pub fn report_text(report: &EvalReport, settings: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in settings {
        out.push_str(&format!("{k}={v}\n"));
    }
    out.push_str(&format!("map={}\nacc={}\n", report.summary.map, report.acc));
    subset_lines(&mut out, "map_correct", &report.map_correct);
    subset_lines(&mut out, "map_incorrect", &report.map_incorrect);
    for (c, s) in &report.summary.classes {
        out.push_str(&format!("ap.{c}={}\n", s.ap));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_record_round_trip() {
        let rec = NoiseRecord {
            ratio: 0.3,
            seed: 42,
            vocabulary: vec![],
            changes: vec![NoiseChange { image_id: "P0001".into(), instance_index: 2, original: "plane".into(), corrupted: "ship".into() }],
        };
        let text = format_noise_record(&rec);
        assert_eq!(text, "ratio=0.3 seed=42\nP0001 2 plane ship\n");
        assert_eq!(parse_noise_record(&text, Path::new("r")).unwrap(), rec);
    }

    #[test]
    fn noise_record_errors_name_the_line() {
        let err = parse_noise_record("ratio=0.1 seed=1\na 1 b\n", Path::new("r.txt")).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 2, .. }));
        assert!(parse_noise_record("seed=1\n", Path::new("r.txt")).is_err());
    }

    #[test]
    fn detection_lines() {
        let d = parse_detections("0 0 1 0 1 1 0 1 car 0.5\n\n", Path::new("x"), "img").unwrap();
        assert_eq!(d.detections.len(), 1);
        assert_eq!(d.detections[0].category, "car");
        let bad = parse_detections("0 0 1 0 1 1 0 1 car 1.5\n", Path::new("x"), "img").unwrap_err();
        assert_eq!(bad.exit_code(), 2);
        assert!(parse_detections("0 0 1 0 1 1 0 car 0.5\n", Path::new("x"), "img").is_err());
    }
}
