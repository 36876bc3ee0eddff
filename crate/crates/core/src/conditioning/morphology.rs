//! Outdoor mask and blockage-edge extraction on binary grids.

use crate::tensor::Grid;

/// Default outdoor threshold on the 0–255 scale; buildings sit at the floor.
pub const DEFAULT_TAU_B: f32 = 8.0;

/// 3×3 dilation; out-of-grid pixels count as 0.
fn dilate(b: &[bool], h: usize, w: usize) -> Vec<bool> {
    let mut out = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = (r.saturating_sub(1)..(r + 2).min(h))
                .any(|rr| (c.saturating_sub(1)..(c + 2).min(w)).any(|cc| b[rr * w + cc]));
        }
    }
    out
}

/// 3×3 erosion; out-of-grid pixels count as 1.
fn erode(b: &[bool], h: usize, w: usize) -> Vec<bool> {
    let mut out = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = (r.saturating_sub(1)..(r + 2).min(h))
                .all(|rr| (c.saturating_sub(1)..(c + 2).min(w)).all(|cc| b[rr * w + cc]));
        }
    }
    out
}

/// Threshold the upsampled observation, then close the blockage set
/// (dilate, erode) so isolated bright noise pixels inside buildings are
/// reassigned to the building.
pub fn extract_mask(y_up: &Grid, tau_b: f32) -> Grid {
    let (h, w) = (y_up.height, y_up.width);
    let blocked: Vec<bool> = y_up.data.iter().map(|&v| v <= tau_b).collect();
    let closed = erode(&dilate(&blocked, h, w), h, w);
    Grid {
        height: h,
        width: w,
        data: closed.iter().map(|&b| if b { 0.0 } else { 1.0 }).collect(),
    }
}

/// Outdoor pixels with at least one in-grid 4-neighbor inside a building.
pub fn extract_edges(m: &Grid) -> Grid {
    let (h, w) = (m.height, m.width);
    let mut e = Grid::filled(h, w, 0.0);
    for r in 0..h {
        for c in 0..w {
            if m.get(r, c) == 0.0 {
                continue;
            }
            let blocked = |rr: usize, cc: usize| m.get(rr, cc) == 0.0;
            let touches = (r > 0 && blocked(r - 1, c))
                || (r + 1 < h && blocked(r + 1, c))
                || (c > 0 && blocked(r, c - 1))
                || (c + 1 < w && blocked(r, c + 1));
            if touches {
                e.set(r, c, 1.0);
            }
        }
    }
    e
}
