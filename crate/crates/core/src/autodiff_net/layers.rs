//! Layer primitives with explicit reverse-mode rules. Activations are flat
//! channel-first slices (`channels × height × width`).

use super::real::{gemm, Real};
use crate::error::{Error, Result};

/// Geometry of a square-kernel 2-D convolution with `k / 2` zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn pad(&self) -> usize {
        self.k / 2
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        let p = self.pad();
        (
            (h + 2 * p - self.k) / self.stride + 1,
            (w + 2 * p - self.k) / self.stride + 1,
        )
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.k * self.k
    }

    fn patch_len(&self) -> usize {
        self.cin * self.k * self.k
    }
}

/// Unfold input patches into a `(cin·k·k) × (ho·wo)` matrix.
pub fn im2col<T: Real>(x: &[T], h: usize, w: usize, g: &ConvGeom) -> Vec<T> {
    let (ho, wo) = g.out_dims(h, w);
    if g.k == 1 && g.stride == 1 {
        return x.to_vec();
    }
    let pad = g.pad() as isize;
    let mut cols = vec![T::zero(); g.patch_len() * ho * wo];
    for ci in 0..g.cin {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let dst_row = &mut dst[oy * wo..(oy + 1) * wo];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - pad;
                        if ix >= 0 && ix < w as isize {
                            *d = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
pub fn col2im<T: Real>(cols: &[T], h: usize, w: usize, g: &ConvGeom) -> Vec<T> {
    if g.k == 1 && g.stride == 1 {
        return cols.to_vec();
    }
    let (ho, wo) = g.out_dims(h, w);
    let pad = g.pad() as isize;
    let mut x = vec![T::zero(); g.cin * h * w];
    for ci in 0..g.cin {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = iy as usize * w;
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kx) as isize - pad;
                        if ix >= 0 && ix < w as isize {
                            plane[base + ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Convolution forward. Returns the output and the unfolded input, which
/// the backward pass needs.
pub fn conv_forward<T: Real>(
    weight: &[T],
    bias: &[T],
    x: &[T],
    h: usize,
    w: usize,
    g: &ConvGeom,
) -> (Vec<T>, Vec<T>) {
    debug_assert_eq!(x.len(), g.cin * h * w);
    let (ho, wo) = g.out_dims(h, w);
    let cols = im2col(x, h, w, g);
    let n = ho * wo;
    let mut out = vec![T::zero(); g.cout * n];
    for (co, plane) in out.chunks_exact_mut(n).enumerate() {
        plane.fill(bias[co]);
    }
    gemm(g.cout, g.patch_len(), n, weight, false, &cols, false, &mut out, true);
    (out, cols)
}

/// Convolution backward: accumulates into `dweight`/`dbias` and returns the
/// input gradient.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Real>(
    weight: &[T],
    cols: &[T],
    dout: &[T],
    h: usize,
    w: usize,
    g: &ConvGeom,
    dweight: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let (ho, wo) = g.out_dims(h, w);
    let n = ho * wo;
    gemm(g.cout, n, g.patch_len(), dout, false, cols, true, dweight, true);
    for (co, plane) in dout.chunks_exact(n).enumerate() {
        dbias[co] += plane.iter().copied().sum::<T>();
    }
    let mut dcols = vec![T::zero(); g.patch_len() * n];
    gemm(g.patch_len(), g.cout, n, weight, true, dout, false, &mut dcols, false);
    col2im(&dcols, h, w, g)
}

/// `y = W x + b` with `W` stored `out × in`.
pub fn linear_forward<T: Real>(weight: &[T], bias: &[T], x: &[T]) -> Vec<T> {
    let mut y = bias.to_vec();
    gemm(bias.len(), x.len(), 1, weight, false, x, false, &mut y, true);
    y
}

pub fn linear_backward<T: Real>(
    weight: &[T],
    x: &[T],
    dy: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    gemm(dy.len(), 1, x.len(), dy, false, x, false, dweight, true);
    for (db, &d) in dbias.iter_mut().zip(dy) {
        *db += d;
    }
    let mut dx = vec![T::zero(); x.len()];
    gemm(x.len(), dy.len(), 1, weight, true, dy, false, &mut dx, false);
    dx
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub fn silu<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| v * sigmoid(v)).collect()
}

/// Gradient of SiLU given the pre-activation.
pub fn silu_backward<T: Real>(pre: &[T], dy: &[T]) -> Vec<T> {
    pre.iter()
        .zip(dy)
        .map(|(&x, &d)| {
            let s = sigmoid(x);
            d * s * (T::one() + x * (T::one() - s))
        })
        .collect()
}

/// Nearest-neighbor ×2 upsampling.
pub fn upsample2x<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); c * h2 * w2];
    for ch in 0..c {
        for y in 0..h2 {
            let src = &x[(ch * h + y / 2) * w..(ch * h + y / 2 + 1) * w];
            let dst = &mut out[(ch * h2 + y) * w2..(ch * h2 + y + 1) * w2];
            for (xx, d) in dst.iter_mut().enumerate() {
                *d = src[xx / 2];
            }
        }
    }
    out
}

pub fn upsample2x_backward<T: Real>(dy: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut dx = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for y in 0..h2 {
            for xx in 0..w2 {
                dx[(ch * h + y / 2) * w + xx / 2] += dy[(ch * h2 + y) * w2 + xx];
            }
        }
    }
    dx
}

/// Add `bias[c]` to every pixel of channel `c`.
pub fn add_channel_bias<T: Real>(x: &mut [T], bias: &[T]) {
    let n = x.len() / bias.len();
    for (plane, &b) in x.chunks_exact_mut(n).zip(bias) {
        plane.iter_mut().for_each(|v| *v += b);
    }
}

/// Per-channel sums, the adjoint of [`add_channel_bias`].
pub fn channel_sums<T: Real>(x: &[T], channels: usize) -> Vec<T> {
    let n = x.len() / channels;
    x.chunks_exact(n).map(|p| p.iter().copied().sum()).collect()
}

/// Sinusoidal embedding of `1000·t`: `emb[2i] = sin(1000·t·ω_i)`,
/// `emb[2i+1] = cos(1000·t·ω_i)`, `ω_i = 10000^(−2i/dim)`.
pub fn time_embedding<T: Real>(t: f64, dim: usize) -> Result<Vec<T>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::config(format!("time embedding dim {dim} must be even and positive")));
    }
    let ts = 1000.0 * t;
    let mut emb = Vec::with_capacity(dim);
    for i in 0..dim / 2 {
        let omega = 10000f64.powf(-2.0 * i as f64 / dim as f64);
        emb.push(T::lit((ts * omega).sin()));
        emb.push(T::lit((ts * omega).cos()));
    }
    Ok(emb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_at_zero() {
        let e: Vec<f64> = time_embedding(0.0, 16).unwrap();
        for i in 0..8 {
            assert_eq!(e[2 * i], 0.0);
            assert_eq!(e[2 * i + 1], 1.0);
        }
    }

    #[test]
    fn embedding_norm_is_half_dim() {
        for t in [0.0, 0.013, 0.5, 0.77, 1.0] {
            let e: Vec<f64> = time_embedding(t, 32).unwrap();
            let n2: f64 = e.iter().map(|v| v * v).sum();
            assert!((n2 - 16.0).abs() < 1e-9);
        }
    }

    #[test]
    fn embedding_separates_times() {
        let a: Vec<f64> = time_embedding(0.1, 32).unwrap();
        let b: Vec<f64> = time_embedding(0.9, 32).unwrap();
        let d = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d > 0.1);
    }

    #[test]
    fn odd_embedding_dim_rejected() {
        assert!(time_embedding::<f32>(0.3, 7).is_err());
    }

    #[test]
    fn linear_sum_loss_gradient_is_outer_product() {
        // y = W x, loss = Σ y  ⇒  ∂loss/∂W = 1 xᵀ
        let x = [0.5, -2.0, 3.0];
        let wt = [0.1; 6];
        let mut dw = [0.0; 6];
        let mut db = [0.0; 2];
        linear_backward(&wt, &x, &[1.0, 1.0], &mut dw, &mut db);
        assert_eq!(dw, [0.5, -2.0, 3.0, 0.5, -2.0, 3.0]);
        assert_eq!(db, [1.0, 1.0]);
    }

    #[test]
    fn im2col_col2im_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let g = ConvGeom {
            cin: 2,
            cout: 1,
            k: 3,
            stride: 2,
        };
        let (h, w) = (5, 6);
        let x: Vec<f64> = (0..2 * h * w).map(|i| (i as f64 * 0.3).sin()).collect();
        let cols = im2col(&x, h, w, &g);
        let y: Vec<f64> = (0..cols.len()).map(|i| (i as f64 * 0.7).cos()).collect();
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let back = col2im(&y, h, w, &g);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn stride_two_output_dims() {
        let g = ConvGeom {
            cin: 1,
            cout: 1,
            k: 3,
            stride: 2,
        };
        assert_eq!(g.out_dims(32, 32), (16, 16));
        assert_eq!(g.out_dims(8, 8), (4, 4));
    }
}
