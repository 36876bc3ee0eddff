//! Small conditional encoder-decoder velocity network.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::layers::{
    add_channel_bias, channel_sums, conv_backward, conv_forward, linear_backward, linear_forward,
    silu, silu_backward, time_embedding, upsample2x, upsample2x_backward, ConvGeom,
};
use super::params::{LayoutBuilder, ParamSlice, ParamStore};
use super::real::Real;
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityNetConfig {
    /// Target channels plus condition channels.
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_width: usize,
    pub depth: usize,
    pub time_embed_dim: usize,
}

impl Default for VelocityNetConfig {
    fn default() -> Self {
        Self {
            in_channels: 4,
            out_channels: 1,
            base_width: 16,
            depth: 2,
            time_embed_dim: 64,
        }
    }
}

impl VelocityNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::config("depth must be at least 1"));
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.base_width == 0 {
            return Err(Error::config("channel counts must be positive"));
        }
        if self.time_embed_dim == 0 || self.time_embed_dim % 2 != 0 {
            return Err(Error::config("time_embed_dim must be even and positive"));
        }
        Ok(())
    }

    pub fn width(&self, stage: usize) -> usize {
        self.base_width << stage
    }

    /// Spatial dims must survive `depth` halvings.
    pub fn check_dims(&self, h: usize, w: usize) -> Result<()> {
        let m = 1usize << self.depth;
        if h == 0 || w == 0 || h % m != 0 || w % m != 0 {
            return Err(Error::shape(format!(
                "spatial size {h}×{w} not divisible by 2^{}",
                self.depth
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvP {
    w: usize,
    b: usize,
    g: ConvGeom,
}

#[derive(Debug, Clone, Copy)]
struct LinP {
    w: usize,
    b: usize,
    nin: usize,
    nout: usize,
}

/// A conv whose output receives a time-dependent per-channel bias.
#[derive(Debug, Clone, Copy)]
struct TimedConv {
    conv: ConvP,
    proj: LinP,
}

#[derive(Debug, Clone, Copy)]
struct EncStage {
    conv: TimedConv,
    down: ConvP,
}

#[derive(Debug, Clone, Copy)]
struct DecStage {
    conv1: TimedConv,
    conv2: ConvP,
}

/// Network topology resolved to offsets into a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct VelocityNet {
    config: VelocityNetConfig,
    layout: Vec<ParamSlice>,
    t1: LinP,
    t2: LinP,
    stem: ConvP,
    enc: Vec<EncStage>,
    mid1: TimedConv,
    mid2: ConvP,
    dec: Vec<DecStage>,
    head: ConvP,
}

fn add_conv(b: &mut LayoutBuilder, name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> ConvP {
    let g = ConvGeom { cin, cout, k, stride };
    let w = b.push(format!("{name}.w"), &[cout, cin, k, k]);
    let bo = b.push(format!("{name}.b"), &[cout]);
    ConvP { w, b: bo, g }
}

fn add_linear(b: &mut LayoutBuilder, name: &str, nin: usize, nout: usize) -> LinP {
    let w = b.push(format!("{name}.w"), &[nout, nin]);
    let bo = b.push(format!("{name}.b"), &[nout]);
    LinP { w, b: bo, nin, nout }
}

impl ConvP {
    fn weight<'a, T>(&self, p: &'a [T]) -> &'a [T] {
        &p[self.w..self.w + self.g.weight_len()]
    }
    fn bias<'a, T>(&self, p: &'a [T]) -> &'a [T] {
        &p[self.b..self.b + self.g.cout]
    }
}

impl LinP {
    fn weight<'a, T>(&self, p: &'a [T]) -> &'a [T] {
        &p[self.w..self.w + self.nin * self.nout]
    }
    fn bias<'a, T>(&self, p: &'a [T]) -> &'a [T] {
        &p[self.b..self.b + self.nout]
    }
}

/// Intermediate state of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T = f32> {
    generation: u64,
    n_params: usize,
    x_channels: usize,
    height: usize,
    width: usize,
    t1_pre: Vec<T>,
    t2_pre: Vec<T>,
    temb: Vec<T>,
    emb: Vec<T>,
    stem_cols: Vec<T>,
    enc: Vec<EncCache<T>>,
    mid1: TimedCache<T>,
    mid2_cols: Vec<T>,
    mid2_pre: Vec<T>,
    dec: Vec<DecCache<T>>,
    head_cols: Vec<T>,
}

#[derive(Debug, Clone)]
struct TimedCache<T> {
    cols: Vec<T>,
    pre: Vec<T>,
}

#[derive(Debug, Clone)]
struct EncCache<T> {
    conv: TimedCache<T>,
    down_cols: Vec<T>,
}

#[derive(Debug, Clone)]
struct DecCache<T> {
    conv1: TimedCache<T>,
    conv2_cols: Vec<T>,
    conv2_pre: Vec<T>,
}

/// Gradients returned by [`VelocityNet::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T = f32> {
    pub params: Vec<T>,
    /// Gradient with respect to the target-shaped input `x_t`.
    pub x: Tensor<T>,
    /// Gradient with respect to the condition tensor.
    pub c: Tensor<T>,
}

impl VelocityNet {
    pub fn new(config: VelocityNetConfig) -> Result<Self> {
        config.validate()?;
        let mut b = LayoutBuilder::default();
        let td = config.time_embed_dim;
        let t1 = add_linear(&mut b, "time.l1", td, td);
        let t2 = add_linear(&mut b, "time.l2", td, td);
        let stem = add_conv(&mut b, "stem", config.in_channels, config.width(0), 3, 1);
        let mut enc = Vec::with_capacity(config.depth);
        for i in 0..config.depth {
            let c = config.width(i);
            enc.push(EncStage {
                conv: TimedConv {
                    conv: add_conv(&mut b, &format!("enc{i}.conv"), c, c, 3, 1),
                    proj: add_linear(&mut b, &format!("enc{i}.temb"), td, c),
                },
                down: add_conv(&mut b, &format!("enc{i}.down"), c, 2 * c, 3, 2),
            });
        }
        let cm = config.width(config.depth);
        let mid1 = TimedConv {
            conv: add_conv(&mut b, "mid.conv1", cm, cm, 3, 1),
            proj: add_linear(&mut b, "mid.temb", td, cm),
        };
        let mid2 = add_conv(&mut b, "mid.conv2", cm, cm, 3, 1);
        let mut dec = Vec::with_capacity(config.depth);
        for i in (0..config.depth).rev() {
            let c = config.width(i);
            dec.push(DecStage {
                conv1: TimedConv {
                    conv: add_conv(&mut b, &format!("dec{i}.conv1"), 2 * c, c, 3, 1),
                    proj: add_linear(&mut b, &format!("dec{i}.temb"), td, c),
                },
                conv2: add_conv(&mut b, &format!("dec{i}.conv2"), 2 * c, c, 3, 1),
            });
        }
        let head = add_conv(&mut b, "head", config.width(0), config.out_channels, 1, 1);
        Ok(Self {
            config,
            layout: b.finish(),
            t1,
            t2,
            stem,
            enc,
            mid1,
            mid2,
            dec,
            head,
        })
    }

    pub fn config(&self) -> &VelocityNetConfig {
        &self.config
    }

    pub fn layout(&self) -> &[ParamSlice] {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.iter().map(|s| s.len()).sum()
    }

    /// Kaiming-uniform fan-in weights, zero biases, zero output head.
    pub fn init_params(&self, seed: u64) -> ParamStore<f32> {
        let mut store = ParamStore::zeros(self.layout.clone());
        let values = store.values_mut();
        for (i, s) in self.layout.iter().enumerate() {
            if s.shape.len() < 2 || s.name.starts_with("head.") {
                continue;
            }
            let fan_in: usize = s.shape[1..].iter().product();
            let bound = (6.0 / fan_in as f64).sqrt() as f32;
            let mut rng = rng_for(seed, &[i as u64]);
            for v in &mut values[s.range()] {
                *v = rng.random_range(-bound..=bound);
            }
        }
        store
    }

    /// Check that a store was built for this topology.
    pub fn check_store<T: Real>(&self, params: &ParamStore<T>) -> Result<()> {
        if params.layout() != self.layout.as_slice() {
            return Err(Error::shape("parameter layout does not match network config"));
        }
        Ok(())
    }

    fn check_inputs<T: Real>(&self, x_t: &Tensor<T>, c: &Tensor<T>, t: f64) -> Result<()> {
        if x_t.channels + c.channels != self.config.in_channels {
            return Err(Error::shape(format!(
                "input channels {} + {} != {}",
                x_t.channels, c.channels, self.config.in_channels
            )));
        }
        if x_t.channels != 0 && (x_t.height != c.height || x_t.width != c.width) {
            return Err(Error::shape("x_t and condition differ in spatial size"));
        }
        self.config.check_dims(c.height, c.width)?;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::config(format!("time {t} outside [0, 1]")));
        }
        if x_t.data.iter().chain(&c.data).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    /// Output only, discarding the cache.
    pub fn predict<T: Real>(
        &self,
        params: &ParamStore<T>,
        x_t: &Tensor<T>,
        t: f64,
        c: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        Ok(self.forward(params, x_t, t, c)?.0)
    }

    pub fn forward<T: Real>(
        &self,
        params: &ParamStore<T>,
        x_t: &Tensor<T>,
        t: f64,
        c: &Tensor<T>,
    ) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_store(params)?;
        self.check_inputs(x_t, c, t)?;
        let p = params.values();
        let (h, w) = (c.height, c.width);

        let emb = time_embedding::<T>(t, self.config.time_embed_dim)?;
        let t1_pre = linear_forward(self.t1.weight(p), self.t1.bias(p), &emb);
        let t2_pre = linear_forward(self.t2.weight(p), self.t2.bias(p), &silu(&t1_pre));
        let temb = silu(&t2_pre);

        let timed = |tc: &TimedConv, x: &[T], h: usize, w: usize| -> TimedCache<T> {
            let (mut pre, cols) = conv_forward(tc.conv.weight(p), tc.conv.bias(p), x, h, w, &tc.conv.g);
            let tb = linear_forward(tc.proj.weight(p), tc.proj.bias(p), &temb);
            add_channel_bias(&mut pre, &tb);
            TimedCache { cols, pre }
        };

        let mut input = Vec::with_capacity(self.config.in_channels * h * w);
        input.extend_from_slice(&x_t.data);
        input.extend_from_slice(&c.data);
        let (mut x, stem_cols) = conv_forward(self.stem.weight(p), self.stem.bias(p), &input, h, w, &self.stem.g);

        let (mut ch, mut cw) = (h, w);
        let mut enc = Vec::with_capacity(self.config.depth);
        let mut skips = Vec::with_capacity(self.config.depth);
        for st in &self.enc {
            let tc = timed(&st.conv, &x, ch, cw);
            let skip = silu(&tc.pre);
            let (down, down_cols) = conv_forward(st.down.weight(p), st.down.bias(p), &skip, ch, cw, &st.down.g);
            enc.push(EncCache { conv: tc, down_cols });
            skips.push(skip);
            x = down;
            ch /= 2;
            cw /= 2;
        }

        let mid1 = timed(&self.mid1, &x, ch, cw);
        let (mid2_pre, mid2_cols) =
            conv_forward(self.mid2.weight(p), self.mid2.bias(p), &silu(&mid1.pre), ch, cw, &self.mid2.g);
        x = silu(&mid2_pre);

        let mut dec = Vec::with_capacity(self.config.depth);
        for st in &self.dec {
            let cin = st.conv1.conv.g.cin;
            let up = upsample2x(&x, cin, ch, cw);
            ch *= 2;
            cw *= 2;
            let tc = timed(&st.conv1, &up, ch, cw);
            let mut cat = silu(&tc.pre);
            cat.extend_from_slice(&skips.pop().expect("one skip per stage"));
            let (conv2_pre, conv2_cols) = conv_forward(st.conv2.weight(p), st.conv2.bias(p), &cat, ch, cw, &st.conv2.g);
            x = silu(&conv2_pre);
            dec.push(DecCache {
                conv1: tc,
                conv2_cols,
                conv2_pre,
            });
        }

        let (out, head_cols) = conv_forward(self.head.weight(p), self.head.bias(p), &x, h, w, &self.head.g);
        let out = Tensor::from_vec(self.config.out_channels, h, w, out)?;
        let cache = ForwardCache {
            generation: params.generation(),
            n_params: p.len(),
            x_channels: x_t.channels,
            height: h,
            width: w,
            t1_pre,
            t2_pre,
            temb,
            emb,
            stem_cols,
            enc,
            mid1,
            mid2_cols,
            mid2_pre,
            dec,
            head_cols,
        };
        Ok((out, cache))
    }

    /// Reverse-mode gradients of `Σ grad_v ⊙ forward(...)`.
    pub fn backward<T: Real>(
        &self,
        params: &ParamStore<T>,
        cache: &ForwardCache<T>,
        grad_v: &Tensor<T>,
    ) -> Result<Gradients<T>> {
        self.check_store(params)?;
        if cache.generation != params.generation() || cache.n_params != params.len() {
            return Err(Error::StaleCache);
        }
        let (h, w) = (cache.height, cache.width);
        if grad_v.shape() != (self.config.out_channels, h, w) {
            return Err(Error::shape("grad_v does not match the output shape"));
        }
        let p = params.values();
        let mut g = vec![T::zero(); p.len()];
        let mut dtemb = vec![T::zero(); cache.temb.len()];

        fn split<T>(g: &mut [T], a: usize, alen: usize, b: usize, blen: usize) -> (&mut [T], &mut [T]) {
            debug_assert!(a + alen <= b);
            let (lo, hi) = g.split_at_mut(b);
            (&mut lo[a..a + alen], &mut hi[..blen])
        }
        fn conv_back<T: Real>(cp: &ConvP, p: &[T], g: &mut [T], cols: &[T], dout: &[T], h: usize, w: usize) -> Vec<T> {
            let (dw, db) = split(g, cp.w, cp.g.weight_len(), cp.b, cp.g.cout);
            conv_backward(cp.weight(p), cols, dout, h, w, &cp.g, dw, db)
        }
        fn lin_back<T: Real>(lp: &LinP, p: &[T], g: &mut [T], x: &[T], dy: &[T]) -> Vec<T> {
            let (dw, db) = split(g, lp.w, lp.nin * lp.nout, lp.b, lp.nout);
            linear_backward(lp.weight(p), x, dy, dw, db)
        }
        let timed_back = |tc: &TimedConv,
                          tcache: &TimedCache<T>,
                          dpre: &[T],
                          g: &mut [T],
                          dtemb: &mut [T],
                          h: usize,
                          w: usize|
         -> Vec<T> {
            let dtb = channel_sums(dpre, tc.conv.g.cout);
            let dt = lin_back(&tc.proj, p, g, &cache.temb, &dtb);
            for (a, b) in dtemb.iter_mut().zip(dt) {
                *a += b;
            }
            conv_back(&tc.conv, p, g, &tcache.cols, dpre, h, w)
        };

        let mut d = conv_back(&self.head, p, &mut g, &cache.head_cols, &grad_v.data, h, w);

        let depth = self.config.depth;
        let mut dskips: Vec<Vec<T>> = vec![Vec::new(); depth];
        let (mut ch, mut cw) = (h, w);
        for (j, (st, dc)) in self.dec.iter().zip(&cache.dec).enumerate().rev() {
            let stage = depth - 1 - j;
            let dpre2 = silu_backward(&dc.conv2_pre, &d);
            let dcat = conv_back(&st.conv2, p, &mut g, &dc.conv2_cols, &dpre2, ch, cw);
            let c = st.conv2.g.cout;
            let n = ch * cw;
            let (da, dskip) = dcat.split_at(c * n);
            dskips[stage] = dskip.to_vec();
            let dpre1 = silu_backward(&dc.conv1.pre, da);
            let dup = timed_back(&st.conv1, &dc.conv1, &dpre1, &mut g, &mut dtemb, ch, cw);
            ch /= 2;
            cw /= 2;
            d = upsample2x_backward(&dup, st.conv1.conv.g.cin, ch, cw);
        }

        let dpre = silu_backward(&cache.mid2_pre, &d);
        let da = conv_back(&self.mid2, p, &mut g, &cache.mid2_cols, &dpre, ch, cw);
        let dpre = silu_backward(&cache.mid1.pre, &da);
        d = timed_back(&self.mid1, &cache.mid1, &dpre, &mut g, &mut dtemb, ch, cw);

        for (i, (st, ec)) in self.enc.iter().zip(&cache.enc).enumerate().rev() {
            ch *= 2;
            cw *= 2;
            let mut dskip = conv_back(&st.down, p, &mut g, &ec.down_cols, &d, ch, cw);
            for (a, b) in dskip.iter_mut().zip(&dskips[i]) {
                *a += *b;
            }
            let dpre = silu_backward(&ec.conv.pre, &dskip);
            d = timed_back(&st.conv, &ec.conv, &dpre, &mut g, &mut dtemb, ch, cw);
        }

        let dinput = conv_back(&self.stem, p, &mut g, &cache.stem_cols, &d, h, w);

        let dt2 = silu_backward(&cache.t2_pre, &dtemb);
        let da1 = lin_back(&self.t2, p, &mut g, &silu(&cache.t1_pre), &dt2);
        let dt1 = silu_backward(&cache.t1_pre, &da1);
        lin_back(&self.t1, p, &mut g, &cache.emb, &dt1);

        let xc = cache.x_channels;
        let n = xc * h * w;
        Ok(Gradients {
            params: g,
            x: Tensor::from_vec(xc, h, w, dinput[..n].to_vec())?,
            c: Tensor::from_vec(self.config.in_channels - xc, h, w, dinput[n..].to_vec())?,
        })
    }
}
