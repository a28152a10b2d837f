use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bbox::BBox;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "text2bbox")]
    Text2BBox,
    #[serde(rename = "bbox2text")]
    BBox2Text,
    #[serde(rename = "SRP")]
    Srp,
    #[serde(rename = "SPE-QA")]
    SpeQa,
    #[serde(rename = "MPE-QA")]
    MpeQa,
    #[serde(rename = "local-desc")]
    LocalDesc,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Text2BBox,
        Task::BBox2Text,
        Task::Srp,
        Task::SpeQa,
        Task::MpeQa,
        Task::LocalDesc,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Text2BBox => "text2bbox",
            Task::BBox2Text => "bbox2text",
            Task::Srp => "SRP",
            Task::SpeQa => "SPE-QA",
            Task::MpeQa => "MPE-QA",
            Task::LocalDesc => "local-desc",
        }
    }

    pub fn parse(s: &str) -> Result<Task> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown task {:?}", s)))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    /// TAD, GAD, SAD or SynD.
    pub dataset: String,
    pub template: String,
    pub scene_seed: u64,
    pub width: u32,
    pub height: u32,
    pub node_ids: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub srp_type: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    /// `general` or `small-object` for graphics samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<bool>,
    /// Pixel boxes in prompt order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boxes_px: Vec<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_box_px: Option<BBox>,
    /// Box drawn onto the image for marked samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mark_px: Option<BBox>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub task: Task,
    pub image: String,
    pub prompt: String,
    pub target: String,
    pub meta: SampleMeta,
}

impl Sample {
    fn sort_key(&self) -> (u64, Task, &[u32], &str, &str) {
        (
            self.meta.scene_seed,
            self.task,
            &self.meta.node_ids,
            &self.prompt,
            &self.target,
        )
    }
}

pub fn scene_image_name(seed: u64) -> String {
    format!("images/scene_{}.pgm", seed)
}

pub fn marked_image_name(seed: u64, node: u32) -> String {
    format!("images/scene_{}_mark_{}.pgm", seed, node)
}

/// Canonical record order: scene seed, task, node ids.
pub fn sort_samples(samples: &mut [Sample]) {
    samples.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

pub fn to_jsonl(samples: &[Sample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s).expect("sample serializes"));
        out.push('\n');
    }
    out
}

/// Write samples in canonical order, one JSON record per line.
pub fn serialize_jsonl(samples: &[Sample], path: &Path) -> Result<()> {
    let mut sorted = samples.to_vec();
    sort_samples(&mut sorted);
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(to_jsonl(&sorted).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn parse_jsonl(text: &str, origin: &str) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s: Sample = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: origin.into(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(s);
    }
    Ok(out)
}

pub fn load_jsonl(path: &Path) -> Result<Vec<Sample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&text, &path.display().to_string())
}
