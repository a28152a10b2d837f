use crate::data::image::GrayImage;
use crate::error::{Error, Result};

/// Grid `(gx, gy)` whose aspect ratio best matches a `width x height` image.
///
/// Distance is `|ln((gx/gy)/(W/H))|`, compared exactly on integers. Ties go to
/// fewer tiles, then to the larger `gx`.
pub fn choose_grid(width: u32, height: u32, max_tiles: u32) -> Result<(u32, u32)> {
    if width == 0 || height == 0 {
        return Err(Error::Input("cannot tile an empty image".into()));
    }
    if max_tiles == 0 {
        return Err(Error::Config("max_tiles must be >= 1".into()));
    }
    // ratio (gx*H)/(gy*W) folded to >= 1 as the fraction hi/lo
    let dist = |gx: u32, gy: u32| {
        let a = gx as u128 * height as u128;
        let b = gy as u128 * width as u128;
        (a.max(b), a.min(b))
    };
    let mut best: Option<(u32, u32)> = None;
    for gy in 1..=max_tiles {
        for gx in 1..=max_tiles / gy {
            let better = match best {
                None => true,
                Some((bx, by)) => {
                    let (h1, l1) = dist(gx, gy);
                    let (h2, l2) = dist(bx, by);
                    let (lhs, rhs) = (h1 * l2, h2 * l1);
                    lhs < rhs || (lhs == rhs && (gx * gy < bx * by || (gx * gy == bx * by && gx > bx)))
                }
            };
            if better {
                best = Some((gx, gy));
            }
        }
    }
    Ok(best.expect("at least the 1x1 grid"))
}

/// Resize to the chosen grid and cut row-major into `tile_side` squares.
pub fn tile_image(img: &GrayImage, tile_side: u32, max_tiles: u32) -> Result<(Vec<GrayImage>, (u32, u32))> {
    if img.is_empty() {
        return Err(Error::Input("cannot tile an empty image".into()));
    }
    let (gx, gy) = choose_grid(img.width, img.height, max_tiles)?;
    let big = img.resize_nearest(gx * tile_side, gy * tile_side);
    let mut tiles = Vec::with_capacity((gx * gy) as usize);
    for ty in 0..gy {
        for tx in 0..gx {
            let mut t = GrayImage::new(tile_side, tile_side);
            for y in 0..tile_side {
                for x in 0..tile_side {
                    t.put(x, y, big.get(tx * tile_side + x, ty * tile_side + y));
                }
            }
            tiles.push(t);
        }
    }
    Ok((tiles, (gx, gy)))
}
