//! Synthetic GUI screens: a view-hierarchy tree of boxed elements plus its raster.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bbox::{is_small_object, BBox};
use super::image::GrayImage;
use crate::error::{Error, Result};
use crate::rng;

pub const CONTAINER_INK: u8 = 60;
pub const TEXT_BORDER_INK: u8 = 90;
pub const ICON_BORDER_INK: u8 = 120;
pub const ICON_INK: u8 = 170;
pub const GLYPH_INK: u8 = 200;
/// Reserved for drawn marks; never used by the renderer.
pub const MARK_INK: u8 = 255;

const PAD: i64 = 2;
const GAP: i64 = 2;
const MIN_SLOT: i64 = 10;
const MIN_ICON: i64 = 4;
const MAX_ICON: i64 = 36;
const GLYPH_W: i64 = 3;
const GLYPH_H: i64 = 5;
const TEXT_H: i64 = GLYPH_H + 4;
const MAX_ATTEMPTS: u32 = 16;

/// Closed vocabulary of icon codes, each with a 5x5 pattern.
pub const ICON_CODES: [(&str, [&str; 5]); 12] = [
    ("home", ["..#..", ".###.", "#####", ".#.#.", ".###."]),
    ("back", ["..#..", ".#...", "#####", ".#...", "..#.."]),
    ("search", [".##..", "#..#.", "#..#.", ".##..", "...##"]),
    ("menu", ["#####", ".....", "#####", ".....", "#####"]),
    ("close", ["#...#", ".#.#.", "..#..", ".#.#.", "#...#"]),
    ("star", ["..#..", "#####", ".###.", ".#.#.", "#...#"]),
    ("heart", [".#.#.", "#####", "#####", ".###.", "..#.."]),
    ("gear", ["#.#.#", ".###.", "##.##", ".###.", "#.#.#"]),
    ("plus", ["..#..", "..#..", "#####", "..#..", "..#.."]),
    ("play", ["#....", "###..", "#####", "###..", "#...."]),
    ("share", ["...##", "..#..", "##...", "..#..", "...##"]),
    ("bell", ["..#..", ".###.", ".###.", "#####", "..#.."]),
];

pub fn icon_codes() -> impl Iterator<Item = &'static str> {
    ICON_CODES.iter().map(|(c, _)| *c)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// Inclusive screen width range in pixels.
    pub width: (u32, u32),
    pub height: (u32, u32),
    pub max_depth: u32,
    pub max_children: u32,
    /// Guarantee at least one icon at or below 0.3% of the screen.
    pub small_icons: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            width: (144, 216),
            height: (256, 384),
            max_depth: 3,
            max_children: 4,
            small_icons: true,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width.0 > self.width.1 || self.height.0 > self.height.1 {
            return Err(Error::Config("empty screen size range".into()));
        }
        if self.width.0 < 64 || self.height.0 < 64 {
            return Err(Error::Config("screens must be at least 64x64 pixels".into()));
        }
        if self.max_depth < 1 || self.max_children < 1 {
            return Err(Error::Config("max_depth and max_children must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Container,
    Text,
    Icon,
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::Container => "container",
            NodeKind::Text => "text",
            NodeKind::Icon => "icon",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VHNode {
    pub id: u32,
    pub bbox: BBox,
    pub kind: NodeKind,
    /// Glyph string for text, icon code for icons, empty for containers.
    pub content: String,
    pub depth: u32,
    pub children: Vec<VHNode>,
}

impl VHNode {
    pub fn is_leaf(&self) -> bool {
        self.kind != NodeKind::Container
    }

    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&VHNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            for c in n.children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub root: VHNode,
    #[serde(skip)]
    pub raster: GrayImage,
}

/// Parent/sibling lookups over a scene tree.
pub struct TreeIndex<'a> {
    pub nodes: Vec<&'a VHNode>,
    pub by_id: BTreeMap<u32, &'a VHNode>,
    pub parent: BTreeMap<u32, u32>,
}

impl<'a> TreeIndex<'a> {
    pub fn new(root: &'a VHNode) -> Self {
        let nodes = root.walk();
        let mut by_id = BTreeMap::new();
        let mut parent = BTreeMap::new();
        for n in &nodes {
            by_id.insert(n.id, *n);
            for c in &n.children {
                parent.insert(c.id, n.id);
            }
        }
        Self {
            nodes,
            by_id,
            parent,
        }
    }

    pub fn parent_of(&self, id: u32) -> Option<&'a VHNode> {
        self.parent.get(&id).map(|p| self.by_id[p])
    }

    pub fn siblings_of(&self, id: u32) -> Vec<&'a VHNode> {
        match self.parent_of(id) {
            Some(p) => p.children.iter().filter(|c| c.id != id).collect(),
            None => Vec::new(),
        }
    }

    pub fn is_ancestor(&self, ancestor: u32, mut node: u32) -> bool {
        while let Some(&p) = self.parent.get(&node) {
            if p == ancestor {
                return true;
            }
            node = p;
        }
        false
    }

    pub fn leaves(&self) -> impl Iterator<Item = &'a VHNode> + '_ {
        self.nodes.iter().copied().filter(|n| n.is_leaf())
    }
}

impl Scene {
    pub fn index(&self) -> TreeIndex<'_> {
        TreeIndex::new(&self.root)
    }

    /// Leaves sorted top-to-bottom, then left-to-right.
    pub fn leaves_in_scan_order(&self) -> Vec<&VHNode> {
        let mut leaves: Vec<&VHNode> = self.root.walk().into_iter().filter(|n| n.is_leaf()).collect();
        leaves.sort_by_key(|n| (n.bbox.y_top, n.bbox.x_left, n.id));
        leaves
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Scene> {
        let mut scene: Scene = serde_json::from_str(text)
            .map_err(|e| Error::Input(format!("invalid scene json: {}", e)))?;
        scene.raster = render(&scene.root, scene.width, scene.height);
        Ok(scene)
    }
}

fn glyph_bits(c: char) -> u16 {
    // 15-bit 3x5 pattern from a fixed mix of the code point; middle pixel always lit.
    let mut x = (c as u32).wrapping_mul(0x9E37_79B1) ^ 0x5bd1_e995;
    x ^= x >> 15;
    x = x.wrapping_mul(0x2c1b_3c6d);
    x ^= x >> 12;
    ((x & 0x7fff) as u16) | (1 << 7)
}

fn icon_pattern(code: &str) -> &'static [&'static str; 5] {
    &ICON_CODES
        .iter()
        .find(|(c, _)| *c == code)
        .expect("known icon code")
        .1
}

fn draw_outline(img: &mut GrayImage, b: &BBox, ink: u8) {
    let (x1, y1, x2, y2) = (b.x_left as u32, b.y_top as u32, b.x_right as u32, b.y_bottom as u32);
    for x in x1..x2 {
        img.put(x, y1, ink);
        img.put(x, y2 - 1, ink);
    }
    for y in y1..y2 {
        img.put(x1, y, ink);
        img.put(x2 - 1, y, ink);
    }
}

fn draw_node(img: &mut GrayImage, n: &VHNode) {
    match n.kind {
        NodeKind::Container => draw_outline(img, &n.bbox, CONTAINER_INK),
        NodeKind::Text => {
            draw_outline(img, &n.bbox, TEXT_BORDER_INK);
            let x0 = n.bbox.x_left + 2;
            let y0 = n.bbox.y_top + 2;
            for (i, c) in n.content.chars().enumerate() {
                let bits = glyph_bits(c);
                let cx = x0 + i as i64 * (GLYPH_W + 1);
                for gy in 0..GLYPH_H {
                    for gx in 0..GLYPH_W {
                        if bits >> (gy * GLYPH_W + gx) & 1 == 1 {
                            let (x, y) = (cx + gx, y0 + gy);
                            if x < n.bbox.x_right - 1 && y < n.bbox.y_bottom - 1 {
                                img.put(x as u32, y as u32, GLYPH_INK);
                            }
                        }
                    }
                }
            }
        }
        NodeKind::Icon => {
            draw_outline(img, &n.bbox, ICON_BORDER_INK);
            let pat = icon_pattern(&n.content);
            let iw = n.bbox.width() - 2;
            let ih = n.bbox.height() - 2;
            for y in 0..ih {
                for x in 0..iw {
                    let py = (y * 5 / ih) as usize;
                    let px = (x * 5 / iw) as usize;
                    if pat[py].as_bytes()[px] == b'#' {
                        img.put((n.bbox.x_left + 1 + x) as u32, (n.bbox.y_top + 1 + y) as u32, ICON_INK);
                    }
                }
            }
        }
    }
    for c in &n.children {
        draw_node(img, c);
    }
}

/// Deterministic rendering of a tree onto a black screen.
pub fn render(root: &VHNode, width: u32, height: u32) -> GrayImage {
    let mut img = GrayImage::new(width, height);
    draw_node(&mut img, root);
    img
}

struct Builder<'c, R: Rng> {
    rng: R,
    cfg: &'c GenConfig,
    used_text: BTreeSet<String>,
    used_icons: BTreeSet<&'static str>,
}

impl<R: Rng> Builder<'_, R> {
    fn container(&mut self, bbox: BBox, depth: u32) -> VHNode {
        let inner = BBox::raw(bbox.x_left + PAD, bbox.y_top + PAD, bbox.x_right - PAD, bbox.y_bottom - PAD);
        let vertical = if inner.height() >= inner.width() {
            self.rng.gen_bool(0.8)
        } else {
            self.rng.gen_bool(0.2)
        };
        let along = if vertical { inner.height() } else { inner.width() };
        let max_fit = ((along + GAP) / (MIN_SLOT + GAP)).max(1);
        let k = (self.rng.gen_range(1..=self.cfg.max_children) as i64).min(max_fit);
        let slot_len = (along - GAP * (k - 1)) / k;
        let mut children = Vec::new();
        for i in 0..k {
            let start = i * (slot_len + GAP);
            let slot = if vertical {
                BBox::raw(inner.x_left, inner.y_top + start, inner.x_right, inner.y_top + start + slot_len)
            } else {
                BBox::raw(inner.x_left + start, inner.y_top, inner.x_left + start + slot_len, inner.y_bottom)
            };
            if !slot.is_valid() {
                continue;
            }
            let child_depth = depth + 1;
            let nest = child_depth < self.cfg.max_depth
                && slot.width() >= 24
                && slot.height() >= 24
                && self.rng.gen_bool(0.45);
            if nest {
                children.push(self.container(slot, child_depth));
            } else if let Some(leaf) = self.leaf(slot, child_depth) {
                children.push(leaf);
            }
        }
        VHNode {
            id: 0,
            bbox,
            kind: NodeKind::Container,
            content: String::new(),
            depth,
            children,
        }
    }

    fn leaf(&mut self, slot: BBox, depth: u32) -> Option<VHNode> {
        let text_fits = slot.width() >= 3 * (GLYPH_W + 1) + 3 && slot.height() >= TEXT_H;
        let icon_fits = slot.width() >= MIN_ICON && slot.height() >= MIN_ICON;
        let prefer_text = self.rng.gen_bool(0.55);
        if text_fits && (prefer_text || self.used_icons.len() == ICON_CODES.len()) {
            return self.text_leaf(slot, depth);
        }
        if icon_fits && self.used_icons.len() < ICON_CODES.len() {
            return Some(self.icon_leaf(slot, depth));
        }
        if text_fits {
            return self.text_leaf(slot, depth);
        }
        None
    }

    fn place(&mut self, slot: &BBox, w: i64, h: i64) -> BBox {
        let x = slot.x_left + self.rng.gen_range(0..=slot.width() - w);
        let y = slot.y_top + self.rng.gen_range(0..=slot.height() - h);
        BBox::raw(x, y, x + w, y + h)
    }

    fn text_leaf(&mut self, slot: BBox, depth: u32) -> Option<VHNode> {
        let max_len = ((slot.width() - 3) / (GLYPH_W + 1)).min(10);
        for _ in 0..16 {
            let len = self.rng.gen_range(3..=max_len);
            let content: String = (0..len)
                .map(|_| (b'a' + self.rng.gen_range(0..26u8)) as char)
                .collect();
            if self.used_text.contains(&content) || icon_codes().any(|c| c == content) {
                continue;
            }
            self.used_text.insert(content.clone());
            let bbox = self.place(&slot, len * (GLYPH_W + 1) + 3, TEXT_H);
            return Some(VHNode {
                id: 0,
                bbox,
                kind: NodeKind::Text,
                content,
                depth,
                children: Vec::new(),
            });
        }
        None
    }

    fn icon_leaf(&mut self, slot: BBox, depth: u32) -> VHNode {
        let free: Vec<&'static str> = icon_codes().filter(|c| !self.used_icons.contains(c)).collect();
        let code = free[self.rng.gen_range(0..free.len())];
        self.used_icons.insert(code);
        let max_side = slot.width().min(slot.height()).min(MAX_ICON);
        let side = if max_side <= MIN_ICON {
            max_side
        } else {
            let u: f64 = self.rng.gen_range((MIN_ICON as f64).ln()..=(max_side as f64).ln());
            (u.exp().round() as i64).clamp(MIN_ICON, max_side)
        };
        let bbox = self.place(&slot, side, side);
        VHNode {
            id: 0,
            bbox,
            kind: NodeKind::Icon,
            content: code.to_string(),
            depth,
            children: Vec::new(),
        }
    }
}

fn assign_ids(node: &mut VHNode, next: &mut u32) {
    node.id = *next;
    *next += 1;
    for c in node.children.iter_mut() {
        assign_ids(c, next);
    }
}

fn collect_icons_mut<'a>(node: &'a mut VHNode, out: &mut Vec<&'a mut VHNode>) {
    if node.kind == NodeKind::Icon {
        out.push(node);
        return;
    }
    for c in node.children.iter_mut() {
        collect_icons_mut(c, out);
    }
}

/// Shrink the smallest icon in place until it is a small object; false if there is no icon.
fn ensure_small_icon(root: &mut VHNode, width: u32, height: u32) -> bool {
    let mut icons = Vec::new();
    collect_icons_mut(root, &mut icons);
    if icons.iter().any(|n| is_small_object(&n.bbox, width, height)) {
        return true;
    }
    let Some(smallest) = icons.into_iter().min_by_key(|n| (n.bbox.area(), n.id)) else {
        return false;
    };
    let mut side = smallest.bbox.width().min(smallest.bbox.height());
    while side > MIN_ICON && 1000 * side * side > 3 * width as i64 * height as i64 {
        side -= 1;
    }
    smallest.bbox = BBox::raw(
        smallest.bbox.x_left,
        smallest.bbox.y_top,
        smallest.bbox.x_left + side,
        smallest.bbox.y_top + side,
    );
    is_small_object(&smallest.bbox, width, height)
}

/// Generate one screen. A pure function of `(seed, cfg)`.
pub fn gen_screen(seed: u64, cfg: &GenConfig) -> Result<Scene> {
    cfg.validate()?;
    for attempt in 0..MAX_ATTEMPTS {
        let mut r = rng::stream(seed, &format!("scene/{}", attempt));
        let width = r.gen_range(cfg.width.0..=cfg.width.1);
        let height = r.gen_range(cfg.height.0..=cfg.height.1);
        let mut b = Builder {
            rng: r,
            cfg,
            used_text: BTreeSet::new(),
            used_icons: BTreeSet::new(),
        };
        let mut root = b.container(BBox::raw(0, 0, width as i64, height as i64), 0);
        let mut next = 0;
        assign_ids(&mut root, &mut next);
        if root.children.is_empty() || root.walk().iter().all(|n| !n.is_leaf()) {
            continue;
        }
        if cfg.small_icons && !ensure_small_icon(&mut root, width, height) {
            continue;
        }
        let raster = render(&root, width, height);
        return Ok(Scene {
            seed,
            width,
            height,
            root,
            raster,
        });
    }
    Err(Error::Generation {
        seed,
        reason: format!("no feasible layout after {} attempts", MAX_ATTEMPTS),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_tree(n: &VHNode) {
        for c in &n.children {
            assert!(n.bbox.contains(&c.bbox), "child {:?} escapes parent {:?}", c.bbox, n.bbox);
            assert_ne!(n.bbox, c.bbox);
            assert_eq!(c.depth, n.depth + 1);
            check_tree(c);
        }
        for (i, a) in n.children.iter().enumerate() {
            for b in &n.children[i + 1..] {
                assert!(!a.bbox.overlaps(&b.bbox), "siblings overlap");
            }
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = GenConfig::default();
        let a = gen_screen(42, &cfg).unwrap();
        let b = gen_screen(42, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.raster.pixels, b.raster.pixels);
        assert_ne!(a, gen_screen(43, &cfg).unwrap());
    }

    #[test]
    fn tree_invariants_hold() {
        let cfg = GenConfig::default();
        for seed in 0..200 {
            let s = gen_screen(seed, &cfg).unwrap();
            assert_eq!(s.root.bbox, BBox::raw(0, 0, s.width as i64, s.height as i64));
            check_tree(&s.root);
            let idx = s.index();
            let ids: Vec<u32> = idx.nodes.iter().map(|n| n.id).collect();
            assert_eq!(ids, (0..ids.len() as u32).collect::<Vec<_>>());
            assert!(idx.nodes.iter().all(|n| n.depth <= cfg.max_depth));
            for leaf in idx.leaves() {
                let b = leaf.bbox;
                let mut lit = false;
                for y in b.y_top..b.y_bottom {
                    for x in b.x_left..b.x_right {
                        lit |= s.raster.get(x as u32, y as u32) != 0;
                    }
                }
                assert!(lit, "leaf {} invisible", leaf.id);
                assert!(!s.raster.pixels.contains(&MARK_INK));
            }
        }
    }

    #[test]
    fn depth_cap_is_respected() {
        for depth in 1..=3 {
            let cfg = GenConfig {
                max_depth: depth,
                ..GenConfig::default()
            };
            for seed in 0..50 {
                let s = gen_screen(seed, &cfg).unwrap();
                assert!(s.root.walk().iter().all(|n| n.depth <= depth));
            }
        }
    }

    #[test]
    fn small_icon_present_when_requested() {
        let cfg = GenConfig::default();
        for seed in 0..200 {
            let s = gen_screen(seed, &cfg).unwrap();
            let small = s
                .root
                .walk()
                .into_iter()
                .filter(|n| n.kind == NodeKind::Icon)
                .any(|n| is_small_object(&n.bbox, s.width, s.height));
            assert!(small, "seed {} lacks a small icon", seed);
        }
    }

    #[test]
    fn contents_unique_and_disjoint_from_icon_codes() {
        let s = gen_screen(9, &GenConfig::default()).unwrap();
        let mut seen = BTreeSet::new();
        for n in s.root.walk().into_iter().filter(|n| n.is_leaf()) {
            assert!(seen.insert(n.content.clone()));
            if n.kind == NodeKind::Text {
                assert!(icon_codes().all(|c| c != n.content));
                assert!(n.content.chars().all(|c| c.is_ascii_lowercase()));
                assert!((3..=10).contains(&n.content.len()));
            }
        }
    }

    #[test]
    fn json_round_trip_re_renders() {
        let s = gen_screen(5, &GenConfig::default()).unwrap();
        let back = Scene::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.raster, s.raster);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = GenConfig {
            width: (300, 200),
            ..GenConfig::default()
        };
        assert!(matches!(gen_screen(1, &cfg), Err(Error::Config(_))));
    }
}
