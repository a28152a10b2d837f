//! Re-checks emitted SRP pairs against the scene trees with the float IoU.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::iou;
use crate::data::{parse_boxes, scale_box, Sample, Scene, Task};
use crate::error::{Error, Result};

/// Containment negatives: IoU with the original element and with its parent stay at or below these.
pub const TYPE3_MAX_IOU_ORIGINAL: f64 = 0.1;
pub const TYPE3_MAX_IOU_PARENT: f64 = 0.3;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SrpAudit {
    pub pairs: usize,
    pub per_type: [usize; 4],
    /// Type 3 pairs breaking either IoU bound, in pixels or in prompt coordinates.
    pub type3_violations: Vec<String>,
    /// Type 1 pairs that are not a direct parent/child edge.
    pub type1_violations: Vec<String>,
    /// Type 2 pairs that do not share a parent.
    pub type2_violations: Vec<String>,
    /// Type 4 pairs that are related or nested.
    pub type4_violations: Vec<String>,
}

impl SrpAudit {
    pub fn violations(&self) -> usize {
        self.type1_violations.len() + self.type2_violations.len() + self.type3_violations.len() + self.type4_violations.len()
    }
}

fn contains(a: &crate::data::BBox, b: &crate::data::BBox) -> bool {
    a.x_left <= b.x_left && a.y_top <= b.y_top && a.x_right >= b.x_right && a.y_bottom >= b.y_bottom
}

/// Audit SRP samples; `scenes` maps scene seeds to their trees.
pub fn audit_srp(samples: &[Sample], scenes: &BTreeMap<u64, Scene>) -> Result<SrpAudit> {
    let mut a = SrpAudit::default();
    for (i, s) in samples.iter().enumerate().filter(|(_, s)| s.task == Task::Srp) {
        let m = &s.meta;
        let tag = format!("sample {} (scene {}, nodes {:?})", i, m.scene_seed, m.node_ids);
        let kind = m.srp_type.ok_or_else(|| Error::Data(format!("{}: no SRP type", tag)))?;
        let ids = if kind == 3 { 1 } else { 2 };
        if !(1..=4).contains(&kind) || m.node_ids.len() != ids || m.boxes_px.len() != 2 {
            return Err(Error::Data(format!("{}: malformed SRP record", tag)));
        }
        a.pairs += 1;
        a.per_type[kind as usize - 1] += 1;
        let scene = scenes
            .get(&m.scene_seed)
            .ok_or_else(|| Error::Data(format!("{}: scene not available", tag)))?;
        let idx = scene.index();
        let (x, y) = (m.node_ids[0], *m.node_ids.last().expect("checked length"));
        match kind {
            1 => {
                if idx.parent.get(&y) != Some(&x) || x == scene.root.id {
                    a.type1_violations.push(tag);
                }
            }
            2 => {
                if x == y || idx.parent.get(&x).is_none() || idx.parent.get(&x) != idx.parent.get(&y) {
                    a.type2_violations.push(tag);
                }
            }
            3 => {
                let [e, o] = [m.boxes_px[0], m.boxes_px[1]];
                let parent = m
                    .parent_box_px
                    .ok_or_else(|| Error::Data(format!("{}: containment pair without parent box", tag)))?;
                // the original must be the named node and the parent box its parent's
                let node_ok = idx.by_id.get(&x).map(|n| n.bbox) == Some(o)
                    && idx.parent_of(x).map(|p| p.bbox) == Some(parent);
                let mut ok = node_ok
                    && iou(&e, &o) <= TYPE3_MAX_IOU_ORIGINAL && iou(&e, &parent) <= TYPE3_MAX_IOU_PARENT;
                let shown = parse_boxes(&s.prompt);
                if shown.len() == 2 {
                    let ps = scale_box(&parent, m.width, m.height)?;
                    ok &= iou(&shown[0], &shown[1]) <= TYPE3_MAX_IOU_ORIGINAL;
                    ok &= iou(&shown[0], &ps) <= TYPE3_MAX_IOU_PARENT;
                } else {
                    ok = false;
                }
                if !ok {
                    a.type3_violations.push(tag);
                }
            }
            _ => {
                let (bx, by) = (m.boxes_px[0], m.boxes_px[1]);
                let related = idx.parent.get(&y) == Some(&x)
                    || idx.parent.get(&x) == Some(&y)
                    || (idx.parent.get(&x).is_some() && idx.parent.get(&x) == idx.parent.get(&y));
                if related || contains(&bx, &by) || contains(&by, &bx) {
                    a.type4_violations.push(tag);
                }
            }
        }
    }
    Ok(a)
}
