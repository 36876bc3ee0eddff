//! Separable align-corners resampling with edge clamping.

use crate::tensor::Grid;

/// Catmull-Rom member of the Keys cubic family.
pub const CATMULL_ROM_A: f64 = -0.5;

fn cubic_weight(x: f64) -> f64 {
    let a = CATMULL_ROM_A;
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// Source coordinate for output index `dst` under align-corners mapping.
fn source_coord(dst: usize, src_len: usize, dst_len: usize) -> f64 {
    if dst_len <= 1 || src_len <= 1 {
        0.0
    } else {
        dst as f64 * (src_len - 1) as f64 / (dst_len - 1) as f64
    }
}

/// Precomputed taps for one axis: `(first index, weights)` per output index.
fn axis_taps(src_len: usize, dst_len: usize, cubic: bool) -> Vec<Vec<(usize, f64)>> {
    let clamp = |i: isize| i.clamp(0, src_len as isize - 1) as usize;
    (0..dst_len)
        .map(|d| {
            let s = source_coord(d, src_len, dst_len);
            let i0 = s.floor();
            let f = s - i0;
            let i0 = i0 as isize;
            if cubic {
                vec![
                    (clamp(i0 - 1), cubic_weight(f + 1.0)),
                    (clamp(i0), cubic_weight(f)),
                    (clamp(i0 + 1), cubic_weight(1.0 - f)),
                    (clamp(i0 + 2), cubic_weight(2.0 - f)),
                ]
            } else {
                vec![(clamp(i0), 1.0 - f), (clamp(i0 + 1), f)]
            }
        })
        .collect()
}

fn resample(y: &Grid, out_h: usize, out_w: usize, cubic: bool) -> Grid {
    let col_taps = axis_taps(y.width, out_w, cubic);
    let row_taps = axis_taps(y.height, out_h, cubic);
    // horizontal pass
    let mut tmp = vec![0.0f64; y.height * out_w];
    for r in 0..y.height {
        for (c, taps) in col_taps.iter().enumerate() {
            tmp[r * out_w + c] = taps.iter().map(|&(i, wt)| wt * y.get(r, i) as f64).sum();
        }
    }
    // vertical pass
    let mut out = Grid::filled(out_h, out_w, 0.0);
    for (r, taps) in row_taps.iter().enumerate() {
        for c in 0..out_w {
            let v: f64 = taps.iter().map(|&(i, wt)| wt * tmp[i * out_w + c]).sum();
            out.set(r, c, v as f32);
        }
    }
    out
}

/// Catmull-Rom bicubic upsampling, align-corners, edge-clamped. A
/// single-pixel axis degenerates to constant fill along that axis.
pub fn upsample_bicubic(y: &Grid, out_h: usize, out_w: usize) -> Grid {
    resample(y, out_h, out_w, true)
}

/// Bilinear counterpart of [`upsample_bicubic`].
pub fn upsample_bilinear(y: &Grid, out_h: usize, out_w: usize) -> Grid {
    resample(y, out_h, out_w, false)
}
