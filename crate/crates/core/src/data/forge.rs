//! Whole-corpus generation: scenes, the five dataset files and image side-files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::datasets::{build_gad, build_srp, build_synth_qa, build_tad, render_marks, QaKind, SrpConfig, SrpStats};
use super::image::GrayImage;
use super::sample::{load_jsonl, scene_image_name, serialize_jsonl, sort_samples, Sample};
use super::scene::{GenConfig, Scene};
use super::gen_scenes;
use crate::error::{Error, Result};

/// Dataset files in emission order.
pub const DATASET_FILES: [&str; 5] = ["tad.jsonl", "gad.jsonl", "srp.jsonl", "spe.jsonl", "mpe.jsonl"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForgeConfig {
    pub screens: usize,
    #[serde(default)]
    pub gen: GenConfig,
    #[serde(default)]
    pub srp: SrpConfig,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self {
            screens: 50,
            gen: GenConfig::default(),
            srp: SrpConfig::default(),
        }
    }
}

/// Samples plus every raster they reference, keyed by relative image path.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub samples: Vec<Sample>,
    pub images: BTreeMap<String, GrayImage>,
}

impl Corpus {
    pub fn image(&self, name: &str) -> Result<&GrayImage> {
        self.images
            .get(name)
            .ok_or_else(|| Error::Data(format!("missing image {}", name)))
    }

    pub fn extend(&mut self, other: Corpus) {
        self.samples.extend(other.samples);
        self.images.extend(other.images);
    }

    /// Read dataset files present in `dir` and the images they reference.
    pub fn load_dir(dir: &Path, files: &[&str]) -> Result<Corpus> {
        if !dir.is_dir() {
            return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "no such data directory")));
        }
        let mut c = Corpus::default();
        for f in files {
            let p = dir.join(f);
            if !p.exists() {
                continue;
            }
            c.samples.extend(load_jsonl(&p)?);
        }
        for s in &c.samples {
            if !c.images.contains_key(&s.image) {
                let img = GrayImage::load_pgm(&dir.join(&s.image))?;
                c.images.insert(s.image.clone(), img);
            }
        }
        Ok(c)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Forged {
    pub scenes: Vec<Scene>,
    /// One sample list per entry of [`DATASET_FILES`].
    pub sets: [Vec<Sample>; 5],
    pub images: BTreeMap<String, GrayImage>,
    pub srp_stats: SrpStats,
}

impl Forged {
    pub fn corpus(&self) -> Corpus {
        Corpus {
            samples: self.sets.iter().flatten().cloned().collect(),
            images: self.images.clone(),
        }
    }

    /// Write the dataset files and image side-files; returns paths relative to `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        let img_dir = dir.join("images");
        fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
        let mut written = Vec::new();
        for (name, set) in DATASET_FILES.iter().zip(&self.sets) {
            serialize_jsonl(set, &dir.join(name))?;
            written.push(name.to_string());
        }
        for (name, img) in &self.images {
            img.save_pgm(&dir.join(name))?;
            written.push(name.clone());
        }
        Ok(written)
    }
}

/// Generate `cfg.screens` scenes from `seed` and build every dataset over them.
pub fn forge(seed: u64, cfg: &ForgeConfig) -> Result<Forged> {
    if cfg.screens == 0 {
        return Err(Error::Config("screens must be >= 1".into()));
    }
    let scenes = gen_scenes(seed, cfg.screens, &cfg.gen)?;
    let mut out = Forged::default();
    for s in &scenes {
        out.images.insert(scene_image_name(s.seed), s.raster.clone());
        out.sets[0].extend(build_tad(s));
        out.sets[1].extend(build_gad(s));
        let (srp, stats) = build_srp(s, &cfg.srp, seed);
        out.sets[2].extend(srp);
        out.srp_stats.add(&stats);
        out.sets[3].extend(build_synth_qa(s, QaKind::Spe));
        let mpe = build_synth_qa(s, QaKind::Mpe);
        for m in &mpe {
            if let Some(b) = m.meta.mark_px {
                out.images.insert(m.image.clone(), render_marks(&s.raster, &b)?);
            }
        }
        out.sets[4].extend(mpe);
    }
    for set in out.sets.iter_mut() {
        sort_samples(set);
    }
    out.scenes = scenes;
    Ok(out)
}
