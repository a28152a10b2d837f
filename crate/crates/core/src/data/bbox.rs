use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound of the normalized coordinate range.
pub const SCALE: i64 = 1000;

/// Axis-aligned box `[x_left, y_top, x_right, y_bottom]`.
///
/// In pixel space the box covers the half-open span `[x_left, x_right) x [y_top, y_bottom)`,
/// so width is `x_right - x_left`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i64; 4]", into = "[i64; 4]")]
pub struct BBox {
    pub x_left: i64,
    pub y_top: i64,
    pub x_right: i64,
    pub y_bottom: i64,
}

impl From<[i64; 4]> for BBox {
    fn from(v: [i64; 4]) -> Self {
        BBox::raw(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [i64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_left, b.y_top, b.x_right, b.y_bottom]
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{},{},{},{}]",
            self.x_left, self.y_top, self.x_right, self.y_bottom
        )
    }
}

impl BBox {
    /// Construct without validation.
    pub const fn raw(x_left: i64, y_top: i64, x_right: i64, y_bottom: i64) -> Self {
        BBox {
            x_left,
            y_top,
            x_right,
            y_bottom,
        }
    }

    pub fn new(x_left: i64, y_top: i64, x_right: i64, y_bottom: i64) -> Result<Self> {
        let b = BBox::raw(x_left, y_top, x_right, y_bottom);
        if !b.is_valid() {
            return Err(Error::Input(format!("degenerate box {}", b)));
        }
        Ok(b)
    }

    pub fn is_valid(&self) -> bool {
        self.x_left < self.x_right && self.y_top < self.y_bottom
    }

    pub fn width(&self) -> i64 {
        self.x_right - self.x_left
    }

    pub fn height(&self) -> i64 {
        self.y_bottom - self.y_top
    }

    pub fn area(&self) -> i64 {
        if self.is_valid() {
            self.width() * self.height()
        } else {
            0
        }
    }

    /// `self` covers `other` (non-strict).
    pub fn contains(&self, other: &BBox) -> bool {
        self.x_left <= other.x_left
            && self.y_top <= other.y_top
            && self.x_right >= other.x_right
            && self.y_bottom >= other.y_bottom
    }

    pub fn intersection_area(&self, other: &BBox) -> i64 {
        let w = self.x_right.min(other.x_right) - self.x_left.max(other.x_left);
        let h = self.y_bottom.min(other.y_bottom) - self.y_top.max(other.y_top);
        if w > 0 && h > 0 {
            w * h
        } else {
            0
        }
    }

    pub fn overlaps(&self, other: &BBox) -> bool {
        self.intersection_area(other) > 0
    }

    /// Exact test of `IoU(self, other) <= num/den` in integer arithmetic.
    pub fn iou_at_most(&self, other: &BBox, num: i64, den: i64) -> bool {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0 {
            return true;
        }
        inter * den <= num * union
    }

    pub fn within_screen(&self, width: u32, height: u32) -> bool {
        self.is_valid()
            && self.x_left >= 0
            && self.y_top >= 0
            && self.x_right <= width as i64
            && self.y_bottom <= height as i64
    }
}

fn round_div_half_up(num: i64, den: i64) -> i64 {
    // num >= 0, den > 0
    (2 * num + den).div_euclid(2 * den)
}

/// Map pixel coordinates to the `[0, 1000]` range, rounding half up.
pub fn scale_box(b: &BBox, width: u32, height: u32) -> Result<BBox> {
    if width == 0 || height == 0 {
        return Err(Error::Input("screen dimensions must be positive".into()));
    }
    if !b.within_screen(width, height) {
        return Err(Error::Input(format!(
            "box {} outside {}x{} screen",
            b, width, height
        )));
    }
    let (w, h) = (width as i64, height as i64);
    let sx = |x: i64| round_div_half_up(x * SCALE, w).clamp(0, SCALE);
    let sy = |y: i64| round_div_half_up(y * SCALE, h).clamp(0, SCALE);
    Ok(BBox::raw(sx(b.x_left), sy(b.y_top), sx(b.x_right), sy(b.y_bottom)))
}

/// Inverse of [`scale_box`] up to rounding.
pub fn unscale_box(b: &BBox, width: u32, height: u32) -> Result<BBox> {
    if width == 0 || height == 0 {
        return Err(Error::Input("screen dimensions must be positive".into()));
    }
    let (w, h) = (width as i64, height as i64);
    let ux = |x: i64| round_div_half_up(x.clamp(0, SCALE) * w, SCALE);
    let uy = |y: i64| round_div_half_up(y.clamp(0, SCALE) * h, SCALE);
    Ok(BBox::raw(ux(b.x_left), uy(b.y_top), ux(b.x_right), uy(b.y_bottom)))
}

/// Screen proportion of a box in percent: `w*h / (W*H) * 100`.
pub fn small_object_ratio(b: &BBox, width: u32, height: u32) -> f64 {
    (b.width() * b.height()) as f64 / (width as f64 * height as f64) * 100.0
}

/// Exact `ratio <= 0.3%` test, `1000*w*h <= 3*W*H`.
pub fn is_small_object(b: &BBox, width: u32, height: u32) -> bool {
    1000 * b.width() * b.height() <= 3 * width as i64 * height as i64
}

/// Every `[a,b,c,d]` integer quadruple in `text`, in order of appearance.
pub fn parse_boxes(text: &str) -> Vec<BBox> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('[') {
        let after = &rest[start + 1..];
        let Some(end) = after.find(']') else { break };
        let inner = &after[..end];
        let nums: Vec<Option<i64>> = inner.split(',').map(|s| s.trim().parse().ok()).collect();
        if nums.len() == 4 && nums.iter().all(Option::is_some) {
            let v: Vec<i64> = nums.into_iter().flatten().collect();
            out.push(BBox::raw(v[0], v[1], v[2], v[3]));
            rest = &after[end + 1..];
        } else {
            rest = after;
        }
    }
    out
}

pub fn parse_box(text: &str) -> Option<BBox> {
    parse_boxes(text).into_iter().next()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scale_examples() {
        let b = BBox::new(100, 200, 300, 400).unwrap();
        assert_eq!(scale_box(&b, 1000, 2000).unwrap(), BBox::raw(100, 100, 300, 200));
        let full = BBox::new(0, 0, 173, 311).unwrap();
        assert_eq!(scale_box(&full, 173, 311).unwrap(), BBox::raw(0, 0, 1000, 1000));
        assert!(matches!(scale_box(&b, 0, 10), Err(Error::Input(_))));
        assert!(scale_box(&BBox::raw(0, 0, 20, 20), 10, 10).is_err());
    }

    #[test]
    fn rounding_is_half_up() {
        // 1 * 1000 / 8 = 125 exact; 1 * 1000 / 3 = 333.33 -> 333; 1 * 1000 / 16 = 62.5 -> 63
        let b = BBox::new(1, 1, 2, 2).unwrap();
        assert_eq!(scale_box(&b, 8, 3).unwrap(), BBox::raw(125, 333, 250, 667));
        assert_eq!(scale_box(&b, 16, 16).unwrap().x_left, 63);
    }

    #[test]
    fn ratio_examples() {
        let b = BBox::new(0, 0, 30, 20).unwrap();
        assert!((small_object_ratio(&b, 1000, 2000) - 0.03).abs() < 1e-12);
        assert!(is_small_object(&b, 1000, 2000));
        let full = BBox::new(0, 0, 50, 70).unwrap();
        assert_eq!(small_object_ratio(&full, 50, 70), 100.0);
        // boundary: exactly 0.3%
        let edge = BBox::new(0, 0, 60, 100).unwrap();
        assert!(is_small_object(&edge, 1000, 2000));
        let over = BBox::new(0, 0, 61, 100).unwrap();
        assert!(!is_small_object(&over, 1000, 2000));
    }

    #[test]
    fn box_text_round_trip() {
        let b = BBox::raw(12, 0, 999, 1000);
        assert_eq!(b.to_string(), "[12,0,999,1000]");
        assert_eq!(parse_box(&format!("it is {} ok", b)), Some(b));
        assert_eq!(
            parse_boxes("<box>[1,2,3,4]</box> and <box>[5,6,7,8]</box>"),
            vec![BBox::raw(1, 2, 3, 4), BBox::raw(5, 6, 7, 8)]
        );
        assert_eq!(parse_box("[1,2,3]"), None);
        assert_eq!(parse_box("[[1,2,3,4]]"), Some(BBox::raw(1, 2, 3, 4)));
        assert_eq!(parse_box("no box"), None);
    }

    #[test]
    fn exact_iou_bound() {
        let a = BBox::raw(0, 0, 10, 10);
        let b = BBox::raw(0, 0, 100, 10);
        assert!(a.iou_at_most(&b, 1, 10));
        assert!(!a.iou_at_most(&b, 99, 1000));
    }

    proptest! {
        #[test]
        fn scale_round_trip_within_one_pixel(
            w in 1u32..3000, h in 1u32..3000,
            fx in 0.0f64..1.0, fy in 0.0f64..1.0, fw in 0.0f64..1.0, fh in 0.0f64..1.0,
        ) {
            let x1 = ((w - 1) as f64 * fx) as i64;
            let y1 = ((h - 1) as f64 * fy) as i64;
            let x2 = x1 + 1 + ((w as i64 - x1 - 1) as f64 * fw) as i64;
            let y2 = y1 + 1 + ((h as i64 - y1 - 1) as f64 * fh) as i64;
            let b = BBox::new(x1, y1, x2, y2).unwrap();
            let s = scale_box(&b, w, h).unwrap();
            for v in [s.x_left, s.y_top, s.x_right, s.y_bottom] {
                prop_assert!((0..=1000).contains(&v));
            }
            let back = unscale_box(&s, w, h).unwrap();
            let tol_x = (w as i64 + 999) / 1000;
            let tol_y = (h as i64 + 999) / 1000;
            prop_assert!((back.x_left - b.x_left).abs() <= tol_x);
            prop_assert!((back.x_right - b.x_right).abs() <= tol_x);
            prop_assert!((back.y_top - b.y_top).abs() <= tol_y);
            prop_assert!((back.y_bottom - b.y_bottom).abs() <= tol_y);
            prop_assert_eq!(parse_box(&s.to_string()), Some(s));
        }
    }
}
