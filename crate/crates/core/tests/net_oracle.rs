//! The velocity network checked against a direct, loop-by-loop evaluation
//! of the same layer stack written without im2col, gemm or caching.

use ckmflow::autodiff_net::gradcheck::random_params;
use ckmflow::autodiff_net::{ParamStore, VelocityNet, VelocityNetConfig};
use ckmflow::rng::rng_for;
use ckmflow::Tensor;
use rand::Rng;

struct Oracle<'a> {
    p: &'a ParamStore<f64>,
}

fn silu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x / (1.0 + (-x).exp())).collect()
}

impl Oracle<'_> {
    fn get(&self, name: &str) -> &[f64] {
        self.p.slice(name).unwrap_or_else(|| panic!("missing {name}"))
    }

    fn linear(&self, name: &str, x: &[f64]) -> Vec<f64> {
        let w = self.get(&format!("{name}.w"));
        let b = self.get(&format!("{name}.b"));
        let nin = x.len();
        (0..b.len())
            .map(|o| b[o] + (0..nin).map(|i| w[o * nin + i] * x[i]).sum::<f64>())
            .collect()
    }

    /// Zero-padded square convolution; returns (output, out_h, out_w).
    fn conv(&self, name: &str, x: &[f64], cin: usize, h: usize, w: usize, stride: usize) -> (Vec<f64>, usize, usize) {
        let slice = self.p.find(&format!("{name}.w")).unwrap();
        let (cout, wcin, k) = (slice.shape[0], slice.shape[1], slice.shape[2]);
        assert_eq!(wcin, cin, "{name}");
        let wt = self.get(&format!("{name}.w"));
        let b = self.get(&format!("{name}.b"));
        let pad = k / 2;
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (w + 2 * pad - k) / stride + 1;
        let mut out = vec![0.0; cout * oh * ow];
        for co in 0..cout {
            for r in 0..oh {
                for c in 0..ow {
                    let mut acc = b[co];
                    for ci in 0..cin {
                        for kr in 0..k {
                            for kc in 0..k {
                                let ir = (r * stride + kr) as isize - pad as isize;
                                let ic = (c * stride + kc) as isize - pad as isize;
                                if ir < 0 || ic < 0 || ir >= h as isize || ic >= w as isize {
                                    continue;
                                }
                                let xv = x[ci * h * w + ir as usize * w + ic as usize];
                                acc += wt[((co * cin + ci) * k + kr) * k + kc] * xv;
                            }
                        }
                    }
                    out[co * oh * ow + r * ow + c] = acc;
                }
            }
        }
        (out, oh, ow)
    }

    fn add_bias(x: &mut [f64], bias: &[f64], plane: usize) {
        for (c, b) in bias.iter().enumerate() {
            for v in &mut x[c * plane..(c + 1) * plane] {
                *v += b;
            }
        }
    }

    fn upsample(x: &[f64], ch: usize, h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![0.0; ch * 4 * h * w];
        for c in 0..ch {
            for r in 0..2 * h {
                for q in 0..2 * w {
                    out[c * 4 * h * w + r * 2 * w + q] = x[c * h * w + (r / 2) * w + q / 2];
                }
            }
        }
        out
    }

    fn run(&self, cfg: &VelocityNetConfig, x_t: &[f64], t: f64, cond: &[f64], h: usize, w: usize) -> Vec<f64> {
        let td = cfg.time_embed_dim;
        let ts = 1000.0 * t;
        let mut emb = Vec::new();
        for i in 0..td / 2 {
            let omega = 10000f64.powf(-2.0 * i as f64 / td as f64);
            emb.push((ts * omega).sin());
            emb.push((ts * omega).cos());
        }
        let temb = silu(&self.linear("time.l2", &silu(&self.linear("time.l1", &emb))));

        let mut input = x_t.to_vec();
        input.extend_from_slice(cond);
        let (mut x, _, _) = self.conv("stem", &input, cfg.in_channels, h, w, 1);
        let (mut ch, mut cw) = (h, w);
        let mut c = cfg.base_width;
        let mut skips = Vec::new();
        for i in 0..cfg.depth {
            let (mut pre, _, _) = self.conv(&format!("enc{i}.conv"), &x, c, ch, cw, 1);
            Self::add_bias(&mut pre, &self.linear(&format!("enc{i}.temb"), &temb), ch * cw);
            let skip = silu(&pre);
            let (down, nh, nw) = self.conv(&format!("enc{i}.down"), &skip, c, ch, cw, 2);
            skips.push(skip);
            x = down;
            ch = nh;
            cw = nw;
            c *= 2;
        }
        let (mut m1, _, _) = self.conv("mid.conv1", &x, c, ch, cw, 1);
        Self::add_bias(&mut m1, &self.linear("mid.temb", &temb), ch * cw);
        let (m2, _, _) = self.conv("mid.conv2", &silu(&m1), c, ch, cw, 1);
        x = silu(&m2);
        for i in (0..cfg.depth).rev() {
            let up = Self::upsample(&x, c, ch, cw);
            ch *= 2;
            cw *= 2;
            c /= 2;
            let (mut pre, _, _) = self.conv(&format!("dec{i}.conv1"), &up, 2 * c, ch, cw, 1);
            Self::add_bias(&mut pre, &self.linear(&format!("dec{i}.temb"), &temb), ch * cw);
            let mut cat = silu(&pre);
            cat.extend_from_slice(&skips.pop().unwrap());
            let (o, _, _) = self.conv(&format!("dec{i}.conv2"), &cat, 2 * c, ch, cw, 1);
            x = silu(&o);
        }
        self.conv("head", &x, c, h, w, 1).0
    }
}

fn random_tensor(seed: u64, ch: usize, h: usize, w: usize) -> Tensor {
    let mut rng = rng_for(seed, &[7]);
    let data = (0..ch * h * w).map(|_| rng.random_range(-1.5f32..1.5)).collect();
    Tensor::from_vec(ch, h, w, data).unwrap()
}

fn check(cfg: VelocityNetConfig, h: usize, w: usize, seed: u64) {
    let net = VelocityNet::new(cfg.clone()).unwrap();
    let params = random_params(&net, seed);
    let p64: ParamStore<f64> = params.cast();
    let oracle = Oracle { p: &p64 };
    let x_ch = cfg.out_channels;
    let x_t = random_tensor(seed ^ 1, x_ch, h, w);
    let c = random_tensor(seed ^ 2, cfg.in_channels - x_ch, h, w);
    for t in [0.0, 0.37, 1.0] {
        let x64: Vec<f64> = x_t.data.iter().map(|&v| v as f64).collect();
        let c64: Vec<f64> = c.data.iter().map(|&v| v as f64).collect();
        let want = oracle.run(&cfg, &x64, t, &c64, h, w);

        let got32 = net.predict(&params, &x_t, t, &c).unwrap();
        assert_eq!(got32.shape(), (cfg.out_channels, h, w));
        let worst32 = got32
            .data
            .iter()
            .zip(&want)
            .map(|(&g, &e)| (g as f64 - e).abs())
            .fold(0.0, f64::max);
        assert!(worst32 < 1e-5, "t={t}: f32 net differs by {worst32}");

        let got64 = net.predict(&p64, &x_t.map(|v| v as f64), t, &c.map(|v| v as f64)).unwrap();
        let worst64 = got64.data.iter().zip(&want).map(|(g, e)| (g - e).abs()).fold(0.0, f64::max);
        assert!(worst64 < 1e-10, "t={t}: f64 net differs by {worst64}");
    }
}

#[test]
fn small_net_matches_direct_evaluation() {
    let cfg = VelocityNetConfig {
        in_channels: 4,
        out_channels: 1,
        base_width: 8,
        depth: 1,
        time_embed_dim: 16,
    };
    for seed in [1, 2, 3] {
        check(cfg.clone(), 8, 8, seed);
    }
}

#[test]
fn deeper_multichannel_net_matches_direct_evaluation() {
    let cfg = VelocityNetConfig {
        in_channels: 4,
        out_channels: 2,
        base_width: 4,
        depth: 2,
        time_embed_dim: 8,
    };
    check(cfg, 8, 12, 11);
}

#[test]
fn output_depends_on_time() {
    let cfg = VelocityNetConfig {
        in_channels: 4,
        out_channels: 1,
        base_width: 8,
        depth: 1,
        time_embed_dim: 16,
    };
    let net = VelocityNet::new(cfg).unwrap();
    let params = random_params(&net, 5);
    let x = random_tensor(1, 1, 8, 8);
    let c = random_tensor(2, 3, 8, 8);
    let a = net.predict(&params, &x, 0.1, &c).unwrap();
    let b = net.predict(&params, &x, 0.9, &c).unwrap();
    assert_ne!(a.data, b.data);
}

#[test]
fn parameter_count_grows_quadratically_with_width() {
    let count = |base_width| {
        VelocityNet::new(VelocityNetConfig {
            in_channels: 4,
            out_channels: 1,
            base_width,
            depth: 2,
            time_embed_dim: 16,
        })
        .unwrap()
        .param_count()
    };
    let ratio = count(16) as f64 / count(8) as f64;
    assert!((3.5..=4.1).contains(&ratio), "ratio {ratio}");
}
