//! Dataset constructions over generated scenes.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bbox::{is_small_object, scale_box, small_object_ratio, BBox};
use super::image::GrayImage;
use super::sample::{marked_image_name, scene_image_name, Sample, SampleMeta, Task};
use super::scene::{NodeKind, Scene, TreeIndex, VHNode, MARK_INK};
use super::templates::{self, Template};
use crate::error::{Error, Result};
use crate::rng;

pub const SRP_LABELS: [&str; 4] = [
    "parent and child",
    "siblings",
    "containment without association",
    "no relation",
];

pub fn srp_label(kind: u8) -> &'static str {
    SRP_LABELS[(kind - 1) as usize]
}

fn scaled(scene: &Scene, b: &BBox) -> BBox {
    scale_box(b, scene.width, scene.height).expect("scene boxes lie on screen")
}

fn meta(scene: &Scene, dataset: &str, t: &Template, ids: Vec<u32>) -> SampleMeta {
    SampleMeta {
        dataset: dataset.to_string(),
        template: t.id.to_string(),
        scene_seed: scene.seed,
        width: scene.width,
        height: scene.height,
        node_ids: ids,
        ..Default::default()
    }
}

fn sample(task: Task, scene: &Scene, prompt: String, target: String, meta: SampleMeta) -> Sample {
    Sample {
        task,
        image: scene_image_name(scene.seed),
        prompt,
        target,
        meta,
    }
}

fn grounding_pair(scene: &Scene, dataset: &str, n: &VHNode) -> [Sample; 2] {
    let sb = scaled(scene, &n.bbox).to_string();
    let mut m1 = meta(scene, dataset, &templates::GROUNDING, vec![n.id]);
    m1.boxes_px = vec![n.bbox];
    let mut m2 = meta(scene, dataset, &templates::WIDGET_CAPTION, vec![n.id]);
    m2.boxes_px = vec![n.bbox];
    [
        sample(
            Task::Text2BBox,
            scene,
            templates::GROUNDING.fill(&[("ref", &n.content)]).unwrap(),
            sb.clone(),
            m1,
        ),
        sample(
            Task::BBox2Text,
            scene,
            templates::WIDGET_CAPTION.fill(&[("bbox", &sb)]).unwrap(),
            n.content.clone(),
            m2,
        ),
    ]
}

/// Text grounding pairs: one text2bbox and one bbox2text per text leaf.
pub fn build_tad(scene: &Scene) -> Vec<Sample> {
    scene
        .root
        .walk()
        .into_iter()
        .filter(|n| n.kind == NodeKind::Text)
        .flat_map(|n| grounding_pair(scene, "TAD", n))
        .collect()
}

/// Graphics grounding pairs over icon leaves, tagged `small-object` when `r <= 0.3%`.
pub fn build_gad(scene: &Scene) -> Vec<Sample> {
    let mut out = Vec::new();
    for n in scene.root.walk().into_iter().filter(|n| n.kind == NodeKind::Icon) {
        let small = is_small_object(&n.bbox, scene.width, scene.height);
        let ratio = small_object_ratio(&n.bbox, scene.width, scene.height);
        for mut s in grounding_pair(scene, "GAD", n) {
            s.meta.ratio = Some(ratio);
            s.meta.subset = Some(if small { "small-object" } else { "general" }.to_string());
            out.push(s);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrpConfig {
    /// Per-type cap on emitted pairs per scene.
    pub max_per_type: usize,
    /// Expansion attempts per node for containment negatives.
    pub max_retries: u32,
}

impl Default for SrpConfig {
    fn default() -> Self {
        Self {
            max_per_type: 4,
            max_retries: 64,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrpStats {
    /// Candidate pairs per type before balancing.
    pub available: [usize; 4],
    pub emitted: [usize; 4],
    /// Nodes for which no valid expansion was found.
    pub expansion_skipped: usize,
}

impl SrpStats {
    pub fn add(&mut self, other: &SrpStats) {
        for i in 0..4 {
            self.available[i] += other.available[i];
            self.emitted[i] += other.emitted[i];
        }
        self.expansion_skipped += other.expansion_skipped;
    }
}

/// Both IoU bounds for a containment negative, on pixel and scaled boxes.
fn expansion_ok(scene: &Scene, exp: &BBox, orig: &BBox, parent: &BBox) -> bool {
    let pixel = exp.iou_at_most(orig, 1, 10) && exp.iou_at_most(parent, 3, 10);
    let (se, so, sp) = (scaled(scene, exp), scaled(scene, orig), scaled(scene, parent));
    pixel && se.is_valid() && se.iou_at_most(&so, 1, 10) && se.iou_at_most(&sp, 3, 10)
}

fn expand<R: Rng>(r: &mut R, scene: &Scene, orig: &BBox, parent: &BBox, retries: u32) -> Option<BBox> {
    let (w, h) = (scene.width as i64, scene.height as i64);
    for _ in 0..retries {
        let exp = BBox::raw(
            r.gen_range(0..=orig.x_left),
            r.gen_range(0..=orig.y_top),
            r.gen_range(orig.x_right..=w),
            r.gen_range(orig.y_bottom..=h),
        );
        if expansion_ok(scene, &exp, orig, parent) {
            return Some(exp);
        }
    }
    None
}

/// Four-way spatial relationship pairs, balanced per scene.
pub fn build_srp(scene: &Scene, cfg: &SrpConfig, seed: u64) -> (Vec<Sample>, SrpStats) {
    let idx: TreeIndex = scene.index();
    let mut r = rng::stream(seed, &format!("srp/{}", scene.seed));
    let nodes: Vec<&VHNode> = idx.nodes.iter().copied().filter(|n| n.id != scene.root.id).collect();

    // (first, second, pixel boxes, parent box)
    type Pair = (Vec<u32>, BBox, BBox, Option<BBox>);
    let mut cands: [Vec<Pair>; 4] = Default::default();
    for n in &nodes {
        for c in &n.children {
            cands[0].push((vec![n.id, c.id], n.bbox, c.bbox, None));
        }
        for (i, a) in n.children.iter().enumerate() {
            for b in &n.children[i + 1..] {
                cands[1].push((vec![a.id, b.id], a.bbox, b.bbox, None));
            }
        }
    }
    for c in &scene.root.children {
        for d in &scene.root.children {
            if c.id < d.id {
                cands[1].push((vec![c.id, d.id], c.bbox, d.bbox, None));
            }
        }
    }
    let mut stats = SrpStats::default();
    for n in &nodes {
        let parent = idx.parent_of(n.id).expect("non-root has a parent");
        match expand(&mut r, scene, &n.bbox, &parent.bbox, cfg.max_retries) {
            Some(exp) => cands[2].push((vec![n.id], exp, n.bbox, Some(parent.bbox))),
            None => stats.expansion_skipped += 1,
        }
    }
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i + 1..] {
            let related = idx.parent.get(&b.id) == Some(&a.id)
                || idx.parent.get(&a.id) == Some(&b.id)
                || idx.parent.get(&a.id) == idx.parent.get(&b.id);
            if related || a.bbox.contains(&b.bbox) || b.bbox.contains(&a.bbox) {
                continue;
            }
            cands[3].push((vec![a.id, b.id], a.bbox, b.bbox, None));
        }
    }
    for (k, c) in cands.iter().enumerate() {
        stats.available[k] = c.len();
    }
    let take = cands.iter().map(Vec::len).min().unwrap_or(0).min(cfg.max_per_type);
    let mut out = Vec::new();
    for (k, c) in cands.iter_mut().enumerate() {
        c.shuffle(&mut r);
        for (ids, a, b, parent) in c.iter().take(take) {
            let kind = k as u8 + 1;
            let (sa, sb) = (scaled(scene, a).to_string(), scaled(scene, b).to_string());
            let mut m = meta(scene, "SAD", &templates::SRP, ids.clone());
            m.srp_type = Some(kind);
            m.boxes_px = vec![*a, *b];
            m.parent_box_px = *parent;
            if kind == 4 {
                m.overlap = Some(a.overlaps(b));
            }
            out.push(sample(
                Task::Srp,
                scene,
                templates::SRP.fill(&[("a", &sa), ("b", &sb)]).unwrap(),
                srp_label(kind).to_string(),
                m,
            ));
        }
        stats.emitted[k] = take;
    }
    (out, stats)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QaKind {
    Spe,
    Mpe,
}

/// Coarse position of a box centre in screen thirds, e.g. `top left`.
pub fn location_phrase(b: &BBox, width: u32, height: u32) -> String {
    let third = |lo: i64, hi: i64, span: i64, names: [&'static str; 3]| {
        // centre (lo+hi)/2 compared against span/3 and 2*span/3, exactly
        let c3 = 3 * (lo + hi);
        if c3 < 2 * span {
            names[0]
        } else if c3 < 4 * span {
            names[1]
        } else {
            names[2]
        }
    };
    let row = third(b.y_top, b.y_bottom, height as i64, ["top", "middle", "bottom"]);
    let col = third(b.x_left, b.x_right, width as i64, ["left", "center", "right"]);
    format!("{} {}", row, col)
}

fn centre_dist2(a: &BBox, b: &BBox) -> i64 {
    let dx = (a.x_left + a.x_right) - (b.x_left + b.x_right);
    let dy = (a.y_top + a.y_bottom) - (b.y_top + b.y_bottom);
    dx * dx + dy * dy
}

fn nearest<'a>(of: &VHNode, among: impl Iterator<Item = &'a VHNode>) -> Option<&'a VHNode> {
    among.min_by_key(|n| (centre_dist2(&of.bbox, &n.bbox), n.id))
}

fn describe(n: &VHNode) -> String {
    match n.kind {
        NodeKind::Text => format!("the text {}", n.content),
        NodeKind::Icon => format!("the {} icon", n.content),
        NodeKind::Container => "a container".to_string(),
    }
}

/// Description of an icon and its closest structurally linked neighbour.
pub fn local_description(idx: &TreeIndex, n: &VHNode) -> String {
    let sibs = idx.siblings_of(n.id);
    let linked = nearest(n, sibs.iter().copied().filter(|s| s.kind == NodeKind::Text))
        .or_else(|| nearest(n, sibs.iter().copied()));
    match linked {
        Some(s) => format!("this is a {} icon, in a component with {}.", n.content, describe(s)),
        None => format!("this is a standalone {} icon, with no related components nearby.", n.content),
    }
}

/// Leaves in scan order as one sentence.
pub fn global_description(scene: &Scene) -> String {
    let parts: Vec<String> = scene
        .leaves_in_scan_order()
        .into_iter()
        .map(|n| format!("{} {}", n.kind.as_str(), n.content))
        .collect();
    format!("{}.", parts.join(", "))
}

/// Rule-based single- or multi-perceiver QA.
pub fn build_synth_qa(scene: &Scene, kind: QaKind) -> Vec<Sample> {
    let idx = scene.index();
    let mut out = Vec::new();
    let leaves: Vec<&VHNode> = idx.leaves().collect();
    match kind {
        QaKind::Spe => {
            for n in &leaves {
                let sb = scaled(scene, &n.bbox).to_string();
                let t = if n.kind == NodeKind::Text {
                    templates::SPE_TEXT
                } else {
                    templates::SPE_ICON
                };
                let mut m = meta(scene, "SynD", &t, vec![n.id]);
                m.boxes_px = vec![n.bbox];
                out.push(sample(
                    Task::SpeQa,
                    scene,
                    t.fill(&[("bbox", &sb)]).unwrap(),
                    n.content.clone(),
                    m,
                ));

                let t = templates::SPE_LOCATION;
                let mut m = meta(scene, "SynD", &t, vec![n.id]);
                m.boxes_px = vec![n.bbox];
                out.push(sample(
                    Task::SpeQa,
                    scene,
                    t.fill(&[("kind", n.kind.as_str()), ("ref", &n.content)]).unwrap(),
                    location_phrase(&n.bbox, scene.width, scene.height),
                    m,
                ));

                let sibs = idx.siblings_of(n.id);
                if let Some(s) = nearest(n, sibs.into_iter().filter(|s| s.is_leaf())) {
                    let t = templates::SPE_RELATION;
                    let m = meta(scene, "SynD", &t, vec![n.id, s.id]);
                    out.push(sample(
                        Task::SpeQa,
                        scene,
                        t.fill(&[("ref", &n.content)]).unwrap(),
                        s.content.clone(),
                        m,
                    ));
                }
            }
        }
        QaKind::Mpe => {
            let t = templates::GLOBAL_DESC;
            let ids = scene.leaves_in_scan_order().iter().map(|n| n.id).collect();
            out.push(sample(
                Task::MpeQa,
                scene,
                t.fill(&[]).unwrap(),
                global_description(scene),
                meta(scene, "SynD", &t, ids),
            ));
            for n in leaves.iter().filter(|n| n.kind == NodeKind::Icon) {
                let t = templates::LOCAL_DESC;
                let mut m = meta(scene, "SynD", &t, vec![n.id]);
                m.mark_px = Some(n.bbox);
                m.boxes_px = vec![n.bbox];
                let sb = scaled(scene, &n.bbox).to_string();
                out.push(Sample {
                    task: Task::LocalDesc,
                    image: marked_image_name(scene.seed, n.id),
                    prompt: t.fill(&[("bbox", &sb)]).unwrap(),
                    target: local_description(&idx, n),
                    meta: m,
                });
            }
        }
    }
    out
}

/// Copy of `raster` with a 1-pixel outline of `b` at the reserved mark intensity.
pub fn render_marks(raster: &GrayImage, b: &BBox) -> Result<GrayImage> {
    if !b.within_screen(raster.width, raster.height) {
        return Err(Error::Input(format!(
            "mark {} outside {}x{} image",
            b, raster.width, raster.height
        )));
    }
    let mut out = raster.clone();
    let (x1, y1, x2, y2) = (b.x_left as u32, b.y_top as u32, b.x_right as u32 - 1, b.y_bottom as u32 - 1);
    for x in x1..=x2 {
        out.put(x, y1, MARK_INK);
        out.put(x, y2, MARK_INK);
    }
    for y in y1..=y2 {
        out.put(x1, y, MARK_INK);
        out.put(x2, y, MARK_INK);
    }
    Ok(out)
}
