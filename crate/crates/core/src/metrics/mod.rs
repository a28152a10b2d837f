//! Grounding and text metrics, size-binned analysis and report emission.

pub mod audit;
pub mod report;
pub mod text;

use serde::{Deserialize, Serialize};

use crate::data::bbox::{parse_box, BBox};
use crate::error::{Error, Result};

pub use audit::{audit_srp, SrpAudit};
pub use report::{evaluate, write_report, BinRow, EvalReport};
pub use text::{lcs_len, rouge_l, token_f1};

/// Default cumulative size-bin edges, in percent of the screen.
pub const DEFAULT_BINS: [f64; 4] = [0.3, 1.0, 5.0, 100.0];
pub const IOU_THRESHOLDS: [f64; 4] = [0.1, 0.3, 0.5, 0.7];

/// Intersection over union in floating point. Zero-area boxes contribute no overlap.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b) as f64;
    let union = a.area() as f64 + b.area() as f64 - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// One model prediction paired with its gold answer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredRecord {
    pub id: usize,
    pub task: String,
    pub prediction: String,
    pub gold: String,
    /// Parsed from `prediction` for grounding tasks; `None` when unparseable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_box: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_box: Option<BBox>,
    pub width: u32,
    pub height: u32,
    /// Gold box screen proportion in percent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

impl PredRecord {
    /// Grounding record with boxes parsed from the texts (same 0..1000 scale).
    pub fn grounding(id: usize, prediction: &str, gold: &str, width: u32, height: u32, ratio: Option<f64>) -> Self {
        PredRecord {
            id,
            task: "text2bbox".into(),
            prediction: prediction.into(),
            gold: gold.into(),
            pred_box: parse_box(prediction).filter(BBox::is_valid),
            gold_box: parse_box(gold),
            width,
            height,
            ratio,
        }
    }

    pub fn is_grounding(&self) -> bool {
        self.gold_box.is_some()
    }
}

fn grounding_records(records: &[PredRecord]) -> Result<Vec<&PredRecord>> {
    let g: Vec<&PredRecord> = records.iter().filter(|r| r.is_grounding()).collect();
    if g.is_empty() {
        return Err(Error::Contract("no grounding records".into()));
    }
    Ok(g)
}

fn hit_iou(r: &PredRecord, threshold: f64) -> bool {
    match (&r.pred_box, &r.gold_box) {
        (Some(p), Some(g)) => iou(p, g) >= threshold,
        _ => false,
    }
}

/// Percentage of grounding records with IoU at or above `threshold`.
pub fn acc_at_iou(records: &[PredRecord], threshold: f64) -> Result<f64> {
    let g = grounding_records(records)?;
    let hits = g.iter().filter(|r| hit_iou(r, threshold)).count();
    Ok(hits as f64 / g.len() as f64 * 100.0)
}

/// Centre of `pred` inside the closed box `gold`, tested exactly on doubled coordinates.
pub fn centre_inside(pred: &BBox, gold: &BBox) -> bool {
    let cx2 = pred.x_left + pred.x_right;
    let cy2 = pred.y_top + pred.y_bottom;
    2 * gold.x_left <= cx2 && cx2 <= 2 * gold.x_right && 2 * gold.y_top <= cy2 && cy2 <= 2 * gold.y_bottom
}

/// Percentage of grounding records whose predicted centre falls in the gold box.
pub fn acc_cp(records: &[PredRecord]) -> Result<f64> {
    let g = grounding_records(records)?;
    let hits = g
        .iter()
        .filter(|r| matches!((&r.pred_box, &r.gold_box), (Some(p), Some(gb)) if centre_inside(p, gb)))
        .count();
    Ok(hits as f64 / g.len() as f64 * 100.0)
}

pub fn unparseable_count(records: &[PredRecord]) -> usize {
    records.iter().filter(|r| r.is_grounding() && r.pred_box.is_none()).count()
}

fn record_ratio(r: &PredRecord) -> f64 {
    r.ratio.unwrap_or_else(|| {
        let g = r.gold_box.expect("grounding record");
        g.area() as f64 / 1e6 * 100.0
    })
}

/// Cumulative bins: bin `k` holds records with ratio `<= k%`. Empty bins report `None`.
pub fn size_bins(records: &[PredRecord], bins: &[f64], threshold: f64) -> Result<Vec<BinRow>> {
    if bins.windows(2).any(|w| w[0] >= w[1]) || bins.is_empty() {
        return Err(Error::Config("size bins must be non-empty and strictly ascending".into()));
    }
    let g = grounding_records(records)?;
    Ok(bins
        .iter()
        .map(|&k| {
            let inside: Vec<&&PredRecord> = g.iter().filter(|r| record_ratio(r) <= k).collect();
            let hits = inside.iter().filter(|r| hit_iou(r, threshold)).count();
            BinRow {
                max_ratio: k,
                count: inside.len(),
                accuracy: if inside.is_empty() {
                    None
                } else {
                    Some(hits as f64 / inside.len() as f64 * 100.0)
                },
            }
        })
        .collect())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Centroid silhouette: mean of `(nearest other centroid - own centroid) / max` over points.
pub fn separation_score(embeddings: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if embeddings.len() != labels.len() {
        return Err(Error::Contract("one label per embedding required".into()));
    }
    let dim = embeddings.first().map(Vec::len).unwrap_or(0);
    if embeddings.iter().any(|e| e.len() != dim) {
        return Err(Error::shape("separation_score", "embeddings differ in width"));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Contract("separation needs at least two labels".into()));
    }
    let mut centroids = Vec::new();
    for &c in &classes {
        let members: Vec<&Vec<f64>> = embeddings.iter().zip(labels).filter(|(_, l)| **l == c).map(|(e, _)| e).collect();
        if members.len() < 2 {
            return Err(Error::Contract(format!("label {} has fewer than two points", c)));
        }
        let mut mean = vec![0.0; dim];
        for m in &members {
            for (acc, v) in mean.iter_mut().zip(m.iter()) {
                *acc += v;
            }
        }
        for v in mean.iter_mut() {
            *v /= members.len() as f64;
        }
        centroids.push(mean);
    }
    let mut total = 0.0;
    for (e, l) in embeddings.iter().zip(labels) {
        let own_i = classes.binary_search(l).expect("label present");
        let own = dist(e, &centroids[own_i]);
        let other = centroids
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != own_i)
            .map(|(_, c)| dist(e, c))
            .fold(f64::INFINITY, f64::min);
        let denom = own.max(other);
        if denom > 0.0 {
            total += (other - own) / denom;
        }
    }
    Ok(total / embeddings.len() as f64)
}
