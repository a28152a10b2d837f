//! Synthetic GUI scenes and the datasets built from them.

pub mod bbox;
pub mod datasets;
pub mod forge;
pub mod image;
pub mod sample;
pub mod scene;
pub mod templates;

pub use bbox::{is_small_object, parse_box, parse_boxes, scale_box, small_object_ratio, unscale_box, BBox};
pub use datasets::{
    build_gad, build_srp, build_synth_qa, build_tad, render_marks, QaKind, SrpConfig, SrpStats, SRP_LABELS,
};
pub use forge::{forge, Corpus, ForgeConfig, Forged, DATASET_FILES};
pub use image::GrayImage;
pub use sample::{load_jsonl, serialize_jsonl, Sample, SampleMeta, Task};
pub use scene::{gen_screen, GenConfig, NodeKind, Scene, VHNode};

use crate::error::Result;
use crate::rng::derive_seed;

/// Seed of the `i`-th scene under a master seed.
pub fn scene_seed(master: u64, i: usize) -> u64 {
    derive_seed(master, &format!("scene/{}", i))
}

pub fn gen_scenes(master: u64, count: usize, cfg: &GenConfig) -> Result<Vec<Scene>> {
    (0..count).map(|i| gen_screen(scene_seed(master, i), cfg)).collect()
}
