//! The three domain discriminators.
//!
//! `feat` consumes 2D feature maps; the two prediction discriminators consume
//! per-point softmax rows from mixed modalities (source-2D vs target-3D, and
//! source-3D vs target-2D). Every output passes a final sigmoid, so it is the
//! probability that the input came from the target domain, strictly inside
//! (0, 1). All three share one [`ParamSet`] so a single optimizer steps them.

use super::{seeded_rng, Binder, Init, ParamId, ParamSet, FEATURE_DIM, LEAKY_SLOPE};
use crate::autodiff::{Graph, Tensor};
use crate::error::Result;

const FEAT_MID: usize = 8;
const PRED_H1: usize = 32;
const PRED_H2: usize = 16;

/// Which prediction discriminator to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredDisc {
    /// Distinguishes source-2D from target-3D predictions.
    Source2dTarget3d,
    /// Distinguishes source-3D from target-2D predictions.
    Source3dTarget2d,
}

struct FeatDisc {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    w3: ParamId,
    b3: ParamId,
}

struct PredMlp {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    w3: ParamId,
    b3: ParamId,
}

pub struct Discriminators {
    pub params: ParamSet,
    feat: FeatDisc,
    pred_a: PredMlp,
    pred_b: PredMlp,
    pub num_classes: usize,
}

impl Discriminators {
    pub fn new(num_classes: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let mut params = ParamSet::new();
        let feat = FeatDisc {
            w1: params.add("feat.w1", &[FEATURE_DIM, FEATURE_DIM, 3, 3], Init::FanIn(FEATURE_DIM * 9), &mut rng),
            b1: params.add("feat.b1", &[FEATURE_DIM], Init::Constant(0.0), &mut rng),
            w2: params.add("feat.w2", &[FEAT_MID, FEATURE_DIM, 3, 3], Init::FanIn(FEATURE_DIM * 9), &mut rng),
            b2: params.add("feat.b2", &[FEAT_MID], Init::Constant(0.0), &mut rng),
            w3: params.add("feat.w3", &[1, FEAT_MID, 1, 1], Init::FanIn(FEAT_MID), &mut rng),
            b3: params.add("feat.b3", &[1], Init::Constant(0.0), &mut rng),
        };
        let mut pred = |params: &mut ParamSet, name: &str, rng: &mut _| PredMlp {
            w1: params.add(&format!("{name}.w1"), &[num_classes, PRED_H1], Init::FanIn(num_classes), rng),
            b1: params.add(&format!("{name}.b1"), &[PRED_H1], Init::Constant(0.0), rng),
            w2: params.add(&format!("{name}.w2"), &[PRED_H1, PRED_H2], Init::FanIn(PRED_H1), rng),
            b2: params.add(&format!("{name}.b2"), &[PRED_H2], Init::Constant(0.0), rng),
            w3: params.add(&format!("{name}.w3"), &[PRED_H2, 1], Init::FanIn(PRED_H2), rng),
            b3: params.add(&format!("{name}.b3"), &[1], Init::Constant(0.0), rng),
        };
        let pred_a = pred(&mut params, "pred_s2d_t3d", &mut rng);
        let pred_b = pred(&mut params, "pred_s3d_t2d", &mut rng);
        Self { params, feat, pred_a, pred_b, num_classes }
    }

    pub fn expected_param_scalars(num_classes: usize) -> usize {
        3_489 + 2 * (32 * num_classes + 577)
    }

    /// Feature discriminator over a `[FEATURE_DIM, H, W]` map -> scalar
    /// target-domain probability.
    pub fn forward_feat(&self, g: &mut Graph, binder: &mut Binder, fmap: Tensor) -> Result<Tensor> {
        let w1 = binder.get(g, &self.params, self.feat.w1);
        let b1 = binder.get(g, &self.params, self.feat.b1);
        let w2 = binder.get(g, &self.params, self.feat.w2);
        let b2 = binder.get(g, &self.params, self.feat.b2);
        let w3 = binder.get(g, &self.params, self.feat.w3);
        let b3 = binder.get(g, &self.params, self.feat.b3);
        let x = g.conv2d(fmap, w1)?;
        let x = g.bias_channels(x, b1)?;
        let x = g.leaky_relu(x, LEAKY_SLOPE);
        let x = g.conv2d(x, w2)?;
        let x = g.bias_channels(x, b2)?;
        let x = g.leaky_relu(x, LEAKY_SLOPE);
        let x = g.conv2d(x, w3)?;
        let x = g.bias_channels(x, b3)?;
        let pooled = g.mean(x);
        Ok(g.sigmoid(pooled))
    }

    /// Prediction discriminator over `[N, C]` softmax rows -> scalar
    /// target-domain probability. Mean pooling makes it invariant to point
    /// order.
    pub fn forward_pred(
        &self,
        g: &mut Graph,
        binder: &mut Binder,
        which: PredDisc,
        probs: Tensor,
    ) -> Result<Tensor> {
        let mlp = match which {
            PredDisc::Source2dTarget3d => &self.pred_a,
            PredDisc::Source3dTarget2d => &self.pred_b,
        };
        let w1 = binder.get(g, &self.params, mlp.w1);
        let b1 = binder.get(g, &self.params, mlp.b1);
        let w2 = binder.get(g, &self.params, mlp.w2);
        let b2 = binder.get(g, &self.params, mlp.b2);
        let w3 = binder.get(g, &self.params, mlp.w3);
        let b3 = binder.get(g, &self.params, mlp.b3);
        let x = g.matmul(probs, w1)?;
        let x = g.bias_rows(x, b1)?;
        let x = g.leaky_relu(x, LEAKY_SLOPE);
        let x = g.matmul(x, w2)?;
        let x = g.bias_rows(x, b2)?;
        let x = g.leaky_relu(x, LEAKY_SLOPE);
        let x = g.matmul(x, w3)?;
        let x = g.bias_rows(x, b3)?;
        let pooled = g.mean(x);
        Ok(g.sigmoid(pooled))
    }
}
