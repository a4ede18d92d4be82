//! Desk-scale segmentation networks.
//!
//! * `Unet`: encoder/decoder whose stages are residual units
//!   (conv3-relu-conv3 plus a 1x1 projection shortcut), max-pool down,
//!   nearest-neighbour up, skip concatenation.
//! * `Fcn`: VGG-like stack of paired 3x3 convolutions per scale; every
//!   scale is projected to `base_channels`, upsampled to full resolution,
//!   concatenated and fused.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::autograd::{Graph, ParamId, ParamSet, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegArch {
    Unet,
    Fcn,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegArchConfig {
    pub arch: SegArch,
    pub depth: usize,
    pub base_channels: usize,
    pub n_classes: usize,
    #[serde(default = "one")]
    pub input_channels: usize,
}

fn one() -> usize {
    1
}

impl SegArchConfig {
    pub fn unet(n_classes: usize) -> Self {
        Self { arch: SegArch::Unet, depth: 3, base_channels: 8, n_classes, input_channels: 1 }
    }

    pub fn fcn(n_classes: usize) -> Self {
        Self { arch: SegArch::Fcn, depth: 3, base_channels: 8, n_classes, input_channels: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::invalid("depth", "must be at least 2"));
        }
        if self.base_channels < 4 {
            return Err(Error::invalid("base_channels", "must be at least 4"));
        }
        if !matches!(self.n_classes, 2 | 4) {
            return Err(Error::invalid("n_classes", "must be 2 or 4"));
        }
        if self.input_channels != 1 {
            return Err(Error::invalid("input_channels", "only single-channel input is supported"));
        }
        Ok(())
    }

    /// Spatial dims must survive `depth - 1` halvings.
    pub fn check_input(&self, height: usize, width: usize) -> Result<()> {
        let m = 1 << (self.depth - 1);
        if height % m != 0 || width % m != 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!("{height}x{width} is not divisible by {m}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Conv {
    w: ParamId,
    b: ParamId,
}

impl Conv {
    fn apply(&self, g: &mut Graph, x: Var) -> Var {
        let (w, b) = (g.param(self.w), g.param(self.b));
        g.conv2d(x, w, b)
    }
}

#[derive(Clone, Debug)]
struct ResUnit {
    c1: Conv,
    c2: Conv,
    skip: Option<Conv>,
}

impl ResUnit {
    fn apply(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.c1.apply(g, x);
        let h = g.relu(h);
        let h = self.c2.apply(g, h);
        let s = match &self.skip {
            Some(c) => c.apply(g, x),
            None => x,
        };
        let y = g.add(h, s);
        g.relu(y)
    }
}

#[derive(Clone, Debug)]
enum Body {
    Unet { enc: Vec<ResUnit>, dec: Vec<ResUnit>, head: Conv },
    Fcn { stages: Vec<[Conv; 2]>, side: Vec<Conv>, fuse: Conv, head: Conv },
}

/// Parameter layout of a segmentation network.
#[derive(Clone, Debug)]
pub struct SegNet {
    pub config: SegArchConfig,
    body: Body,
}

struct Builder<'a> {
    params: ParamSet,
    init: Box<dyn FnMut(&[usize], usize) -> Tensor + 'a>,
}

impl Builder<'_> {
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Conv {
        let shape = [cout, cin, k, k];
        let w = (self.init)(&shape, cin * k * k);
        let w = self.params.push(format!("{name}.w"), w);
        let b = self.params.push(format!("{name}.b"), Tensor::zeros(&[cout]));
        Conv { w, b }
    }

    fn res_unit(&mut self, name: &str, cin: usize, cout: usize) -> ResUnit {
        ResUnit {
            c1: self.conv(&format!("{name}.conv1"), cin, cout, 3),
            c2: self.conv(&format!("{name}.conv2"), cout, cout, 3),
            skip: (cin != cout).then(|| self.conv(&format!("{name}.skip"), cin, cout, 1)),
        }
    }
}

impl SegNet {
    /// Build the layout with He-normal weights drawn from `rng`.
    pub fn init(config: &SegArchConfig, rng: &mut Rng) -> Result<(Self, ParamSet)> {
        let init = move |shape: &[usize], fan_in: usize| {
            let n: usize = shape.iter().product();
            let d = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
            Tensor::new(shape.to_vec(), (0..n).map(|_| d.sample(rng)).collect())
        };
        Self::build(config, Box::new(init))
    }

    /// Layout with zero weights, used when loading checkpoints.
    pub fn layout(config: &SegArchConfig) -> Result<(Self, ParamSet)> {
        Self::build(config, Box::new(|shape: &[usize], _| Tensor::zeros(shape)))
    }

    fn build<'a>(config: &SegArchConfig, init: Box<dyn FnMut(&[usize], usize) -> Tensor + 'a>) -> Result<(Self, ParamSet)> {
        config.validate()?;
        let mut b = Builder { params: ParamSet::new(), init };
        let c = config.base_channels;
        let d = config.depth;
        let body = match config.arch {
            SegArch::Unet => {
                let mut enc = Vec::new();
                for l in 0..d {
                    let cin = if l == 0 { config.input_channels } else { c << (l - 1) };
                    enc.push(b.res_unit(&format!("enc{l}"), cin, c << l));
                }
                let mut dec = Vec::new();
                for l in (0..d - 1).rev() {
                    dec.push(b.res_unit(&format!("dec{l}"), (c << (l + 1)) + (c << l), c << l));
                }
                let head = b.conv("head", c, config.n_classes, 1);
                Body::Unet { enc, dec, head }
            }
            SegArch::Fcn => {
                let mut stages = Vec::new();
                let mut side = Vec::new();
                for l in 0..d {
                    let cin = if l == 0 { config.input_channels } else { c << (l - 1) };
                    let a = b.conv(&format!("stage{l}.conv1"), cin, c << l, 3);
                    let bb = b.conv(&format!("stage{l}.conv2"), c << l, c << l, 3);
                    stages.push([a, bb]);
                    side.push(b.conv(&format!("side{l}"), c << l, c, 1));
                }
                let fuse = b.conv("fuse", c * d, c, 3);
                let head = b.conv("head", c, config.n_classes, 1);
                Body::Fcn { stages, side, fuse, head }
            }
        };
        Ok((Self { config: config.clone(), body }, b.params))
    }

    /// Logits `[n_classes, H, W]` for an input `[1, H, W]`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        match &self.body {
            Body::Unet { enc, dec, head } => {
                let mut skips = Vec::with_capacity(enc.len());
                let mut h = x;
                for (l, unit) in enc.iter().enumerate() {
                    if l > 0 {
                        h = g.max_pool2(h);
                    }
                    h = unit.apply(g, h);
                    skips.push(h);
                }
                skips.pop();
                for unit in dec {
                    let up = g.upsample2(h);
                    let skip = skips.pop().expect("one skip per decoder stage");
                    let cat = g.concat(up, skip);
                    h = unit.apply(g, cat);
                }
                head.apply(g, h)
            }
            Body::Fcn { stages, side, fuse, head } => {
                let mut h = x;
                let mut fused: Option<Var> = None;
                for (l, (pair, proj)) in stages.iter().zip(side).enumerate() {
                    if l > 0 {
                        h = g.max_pool2(h);
                    }
                    h = pair[0].apply(g, h);
                    h = g.relu(h);
                    h = pair[1].apply(g, h);
                    h = g.relu(h);
                    let mut s = proj.apply(g, h);
                    s = g.relu(s);
                    for _ in 0..l {
                        s = g.upsample2(s);
                    }
                    fused = Some(match fused {
                        None => s,
                        Some(f) => g.concat(f, s),
                    });
                }
                let f = fuse.apply(g, fused.expect("depth >= 2"));
                let f = g.relu(f);
                head.apply(g, f)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn shapes_and_layout() {
        for cfg in [SegArchConfig::unet(4), SegArchConfig::fcn(2)] {
            let (net, params) = SegNet::init(&cfg, &mut rng::rng(1, 0)).unwrap();
            let (_, layout) = SegNet::layout(&cfg).unwrap();
            let names: Vec<_> = params.iter().map(|(n, _)| n.to_owned()).collect();
            let lnames: Vec<_> = layout.iter().map(|(n, _)| n.to_owned()).collect();
            assert_eq!(names, lnames);
            let mut g = Graph::new(&params);
            let x = g.input(Tensor::zeros(&[1, 16, 16]));
            let y = net.forward(&mut g, x);
            assert_eq!(g.value(y).shape, vec![cfg.n_classes, 16, 16]);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = SegArchConfig::unet(4);
        c.depth = 1;
        assert!(c.validate().is_err());
        let mut c = SegArchConfig::unet(3);
        assert!(c.validate().is_err());
        c.n_classes = 4;
        c.base_channels = 2;
        assert!(c.validate().is_err());
        assert!(SegArchConfig::unet(4).check_input(30, 32).is_err());
    }
}
