use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{acc_at_iou, acc_cp, rouge_l, size_bins, token_f1, unparseable_count, PredRecord, IOU_THRESHOLDS};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    /// Upper edge of the cumulative bin, percent of the screen.
    pub max_ratio: f64,
    pub count: usize,
    /// Accuracy in percent; `None` for an empty bin.
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: usize,
    pub grounding_records: usize,
    pub unparseable: usize,
    /// Metric name to value, e.g. `acc@iou=0.5` or `token_f1/bbox2text`.
    pub metrics: BTreeMap<String, f64>,
    pub bins: Vec<BinRow>,
    pub bin_threshold: f64,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// Below these, results are flagged as indistinguishable from an untrained model.
const NEAR_RANDOM_ACC: f64 = 5.0;
const NEAR_RANDOM_F1: f64 = 0.05;

/// All metrics over a prediction set.
pub fn evaluate(records: &[PredRecord], bins: &[f64], bin_threshold: f64) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::Contract("empty prediction set".into()));
    }
    let mut rep = EvalReport {
        records: records.len(),
        bin_threshold,
        ..Default::default()
    };
    rep.grounding_records = records.iter().filter(|r| r.is_grounding()).count();
    if rep.grounding_records > 0 {
        for t in IOU_THRESHOLDS {
            rep.metrics.insert(format!("acc@iou={}", t), acc_at_iou(records, t)?);
        }
        rep.metrics.insert("acc@cp".into(), acc_cp(records)?);
        rep.unparseable = unparseable_count(records);
        rep.bins = size_bins(records, bins, bin_threshold)?;
    }
    let mut by_task: BTreeMap<&str, Vec<&PredRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.is_grounding()) {
        by_task.entry(&r.task).or_default().push(r);
    }
    for (task, rs) in by_task {
        let n = rs.len() as f64;
        let f1 = rs.iter().map(|r| token_f1(&r.prediction, &r.gold)).sum::<f64>() / n;
        let rl = rs.iter().map(|r| rouge_l(&r.prediction, &r.gold)).sum::<f64>() / n;
        let em = rs.iter().filter(|r| r.prediction.trim() == r.gold.trim()).count() as f64 / n * 100.0;
        rep.metrics.insert(format!("token_f1/{}", task), f1);
        rep.metrics.insert(format!("rouge_l/{}", task), rl);
        rep.metrics.insert(format!("exact/{}", task), em);
        if f1 < NEAR_RANDOM_F1 {
            rep.notes.push(format!("{}: token F1 {:.4} is near random", task, f1));
        }
    }
    if let Some(acc) = rep.metrics.get("acc@iou=0.5") {
        if *acc < NEAR_RANDOM_ACC {
            rep.notes.push(format!("grounding: acc@iou=0.5 of {:.2}% is near random", acc));
        }
    }
    Ok(rep)
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "records: {}", self.records);
        let _ = writeln!(s, "grounding records: {}", self.grounding_records);
        let _ = writeln!(s, "unparseable boxes: {}", self.unparseable);
        for n in &self.notes {
            let _ = writeln!(s, "note: {}", n);
        }
        for (k, v) in &self.metrics {
            let _ = writeln!(s, "{:<28} {:>10.4}", k, v);
        }
        if !self.bins.is_empty() {
            let _ = writeln!(s, "size bins (acc@iou={}):", self.bin_threshold);
            for b in &self.bins {
                let acc = b.accuracy.map_or("n/a".to_string(), |a| format!("{:.4}", a));
                let _ = writeln!(s, "  ratio <= {}%: n={} acc={}", b.max_ratio, b.count, acc);
            }
        }
        s
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in &self.metrics {
            let _ = writeln!(s, "{},{}", k, v);
        }
        s
    }

    pub fn bins_csv(&self) -> String {
        let mut s = String::from("max_ratio,count,accuracy\n");
        for b in &self.bins {
            let acc = b.accuracy.map_or("n/a".to_string(), |a| a.to_string());
            let _ = writeln!(s, "{},{},{}", b.max_ratio, b.count, acc);
        }
        s
    }
}

pub fn predictions_jsonl(records: &[PredRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    s
}

/// Write `report.txt`, `metrics.csv`, `size_bins.csv` and `predictions.jsonl`; returns written paths.
pub fn write_report(report: &EvalReport, records: &[PredRecord], dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let files = [
        ("report.txt", report.to_text()),
        ("metrics.csv", report.metrics_csv()),
        ("size_bins.csv", report.bins_csv()),
        ("predictions.jsonl", predictions_jsonl(records)),
    ];
    let mut out = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        out.push(p);
    }
    Ok(out)
}
