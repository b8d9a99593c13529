//! Dual-head 2D encoder-decoder over 5-channel range images.
//!
//! Three conv stages (5 -> 16 -> 32 -> 64, each conv + instance norm + leaky
//! ReLU + 2x2 max pool) mirrored by nearest-upsample + conv stages back to a
//! 16-channel feature map at full resolution, topped by two parameter-disjoint
//! 1x1 heads: the main segmentation logits and the mimicry logits that learn
//! to imitate the 3D stream.

use super::{seeded_rng, Binder, Init, ParamId, ParamSet, FEATURE_DIM, LEAKY_SLOPE};
use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};

pub const IN_CHANNELS: usize = 5;
const ENC_CHANNELS: [usize; 4] = [IN_CHANNELS, 16, 32, 64];
/// Encoder downsamples by 2 three times.
pub const SPATIAL_DIVISOR: usize = 8;

struct ConvStage {
    w: ParamId,
    gamma: ParamId,
    beta: ParamId,
}

struct Head {
    w: ParamId,
    b: ParamId,
}

pub struct Seg2dNet {
    pub params: ParamSet,
    enc: [ConvStage; 3],
    dec: [ConvStage; 3],
    main: Head,
    mimicry: Head,
    pub num_classes: usize,
}

pub struct Seg2dOut {
    /// `[FEATURE_DIM, H, W]` feature map (input of the feature discriminator).
    pub features: Tensor,
    /// `[H*W, C]` main segmentation logits, pixels as rows.
    pub main_rows: Tensor,
    /// `[H*W, C]` mimicry logits.
    pub mimicry_rows: Tensor,
}

impl Seg2dNet {
    pub fn new(num_classes: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let mut params = ParamSet::new();
        let mut conv = |params: &mut ParamSet, name: &str, cin: usize, cout: usize, k: usize, rng: &mut _| ConvStage {
            w: params.add(&format!("{name}.w"), &[cout, cin, k, k], Init::FanIn(cin * k * k), rng),
            gamma: params.add(&format!("{name}.gamma"), &[cout], Init::Constant(1.0), rng),
            beta: params.add(&format!("{name}.beta"), &[cout], Init::Constant(0.0), rng),
        };
        let enc = [
            conv(&mut params, "enc1", ENC_CHANNELS[0], ENC_CHANNELS[1], 3, &mut rng),
            conv(&mut params, "enc2", ENC_CHANNELS[1], ENC_CHANNELS[2], 3, &mut rng),
            conv(&mut params, "enc3", ENC_CHANNELS[2], ENC_CHANNELS[3], 3, &mut rng),
        ];
        let dec = [
            conv(&mut params, "dec1", ENC_CHANNELS[3], ENC_CHANNELS[2], 3, &mut rng),
            conv(&mut params, "dec2", ENC_CHANNELS[2], ENC_CHANNELS[1], 3, &mut rng),
            conv(&mut params, "dec3", ENC_CHANNELS[1], FEATURE_DIM, 3, &mut rng),
        ];
        let mut head = |params: &mut ParamSet, name: &str, rng: &mut _| Head {
            w: params.add(&format!("{name}.w"), &[num_classes, FEATURE_DIM, 1, 1], Init::FanIn(FEATURE_DIM), rng),
            b: params.add(&format!("{name}.b"), &[num_classes], Init::Constant(0.0), rng),
        };
        let main = head(&mut params, "main", &mut rng);
        let mimicry = head(&mut params, "mimicry", &mut rng);
        Self { params, enc, dec, main, mimicry, num_classes }
    }

    /// Fixed parameter count for a class count (regression guard).
    pub fn expected_param_scalars(num_classes: usize) -> usize {
        49_456 + 34 * num_classes
    }

    fn stage(
        &self,
        g: &mut Graph,
        binder: &mut Binder,
        stage: &ConvStage,
        x: Tensor,
    ) -> Result<Tensor> {
        let w = binder.get(g, &self.params, stage.w);
        let gamma = binder.get(g, &self.params, stage.gamma);
        let beta = binder.get(g, &self.params, stage.beta);
        let c = g.conv2d(x, w)?;
        let n = g.instance_norm2d(c, gamma, beta)?;
        Ok(g.leaky_relu(n, LEAKY_SLOPE))
    }

    /// `img` is `[5, H, W]` with `H` and `W` divisible by 8.
    pub fn forward(&self, g: &mut Graph, binder: &mut Binder, img: Tensor) -> Result<Seg2dOut> {
        let shape = g.shape(img).to_vec();
        if shape.len() != 3 || shape[0] != IN_CHANNELS {
            return Err(Error::ShapeError(format!("seg2d expects [5,H,W] input, got {shape:?}")));
        }
        if shape[1] % SPATIAL_DIVISOR != 0 || shape[2] % SPATIAL_DIVISOR != 0 {
            return Err(Error::ShapeError(format!(
                "seg2d input dims {shape:?} must be divisible by {SPATIAL_DIVISOR}"
            )));
        }
        let mut x = img;
        for stage in &self.enc {
            let a = self.stage(g, binder, stage, x)?;
            x = g.max_pool2x2(a)?;
        }
        for stage in &self.dec {
            let up = g.upsample_nearest2(x)?;
            x = self.stage(g, binder, stage, up)?;
        }
        let features = x;
        let main_rows = self.head_rows(g, binder, &self.main, features)?;
        let mimicry_rows = self.head_rows(g, binder, &self.mimicry, features)?;
        Ok(Seg2dOut { features, main_rows, mimicry_rows })
    }

    fn head_rows(&self, g: &mut Graph, binder: &mut Binder, head: &Head, features: Tensor) -> Result<Tensor> {
        let w = binder.get(g, &self.params, head.w);
        let b = binder.get(g, &self.params, head.b);
        let logits = g.conv2d(features, w)?;
        let logits = g.bias_channels(logits, b)?;
        g.chw_to_rows(logits)
    }
}
