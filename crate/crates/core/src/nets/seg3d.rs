//! Dual-head per-point network over voxel representatives.
//!
//! A small MLP (xyz + remission -> 32 -> 64) followed by mean aggregation
//! over the six axis-adjacent occupied voxels; the neighborhood mean is
//! concatenated back onto each voxel's own features before the 16-channel
//! feature layer and the two heads.

use super::{seeded_rng, Binder, Init, ParamId, ParamSet, FEATURE_DIM, LEAKY_SLOPE};
use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};

pub const IN_DIM: usize = 4;
const HIDDEN1: usize = 32;
const HIDDEN2: usize = 64;

struct Linear {
    w: ParamId,
    b: ParamId,
}

pub struct Seg3dNet {
    pub params: ParamSet,
    l1: Linear,
    l2: Linear,
    feat: Linear,
    main: Linear,
    mimicry: Linear,
    pub num_classes: usize,
}

pub struct Seg3dOut {
    /// `[V, FEATURE_DIM]` per-voxel features.
    pub features: Tensor,
    /// `[V, C]` main logits.
    pub main_rows: Tensor,
    /// `[V, C]` mimicry logits.
    pub mimicry_rows: Tensor,
}

impl Seg3dNet {
    pub fn new(num_classes: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let mut params = ParamSet::new();
        let mut linear = |params: &mut ParamSet, name: &str, din: usize, dout: usize, rng: &mut _| Linear {
            w: params.add(&format!("{name}.w"), &[din, dout], Init::FanIn(din), rng),
            b: params.add(&format!("{name}.b"), &[dout], Init::Constant(0.0), rng),
        };
        let l1 = linear(&mut params, "l1", IN_DIM, HIDDEN1, &mut rng);
        let l2 = linear(&mut params, "l2", HIDDEN1, HIDDEN2, &mut rng);
        let feat = linear(&mut params, "feat", 2 * HIDDEN2, FEATURE_DIM, &mut rng);
        let main = linear(&mut params, "main", FEATURE_DIM, num_classes, &mut rng);
        let mimicry = linear(&mut params, "mimicry", FEATURE_DIM, num_classes, &mut rng);
        Self { params, l1, l2, feat, main, mimicry, num_classes }
    }

    pub fn expected_param_scalars(num_classes: usize) -> usize {
        4_336 + 34 * num_classes
    }

    fn linear(
        &self,
        g: &mut Graph,
        binder: &mut Binder,
        layer: &Linear,
        x: Tensor,
    ) -> Result<Tensor> {
        let w = binder.get(g, &self.params, layer.w);
        let b = binder.get(g, &self.params, layer.b);
        let y = g.matmul(x, w)?;
        g.bias_rows(y, b)
    }

    /// `inputs` is `[V, 4]` (one row per voxel representative);
    /// `neighbors[v]` lists the occupied 6-adjacent voxel rows of `v`.
    pub fn forward(
        &self,
        g: &mut Graph,
        binder: &mut Binder,
        inputs: Tensor,
        neighbors: &[Vec<usize>],
    ) -> Result<Seg3dOut> {
        let shape = g.shape(inputs).to_vec();
        if shape.len() != 2 || shape[1] != IN_DIM {
            return Err(Error::ShapeError(format!("seg3d expects [V,4] input, got {shape:?}")));
        }
        if shape[0] == 0 {
            return Err(Error::EmptyInput);
        }
        if neighbors.len() != shape[0] {
            return Err(Error::ShapeError(format!(
                "{} neighbor lists for {} voxels",
                neighbors.len(),
                shape[0]
            )));
        }
        let h1 = self.linear(g, binder, &self.l1, inputs)?;
        let h1 = g.leaky_relu(h1, LEAKY_SLOPE);
        let h2 = self.linear(g, binder, &self.l2, h1)?;
        let h2 = g.leaky_relu(h2, LEAKY_SLOPE);
        let nb = g.group_mean_rows(h2, neighbors)?;
        let cat = g.concat(&[h2, nb], 1)?;
        let f = self.linear(g, binder, &self.feat, cat)?;
        let features = g.leaky_relu(f, LEAKY_SLOPE);
        let main_rows = self.linear(g, binder, &self.main, features)?;
        let mimicry_rows = self.linear(g, binder, &self.mimicry, features)?;
        Ok(Seg3dOut { features, main_rows, mimicry_rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_voxel_yields_one_logit_row() {
        let net = Seg3dNet::new(5, 1);
        let mut g = Graph::new();
        let mut b = Binder::new(&net.params, false);
        let x = g.constant(vec![0.1, -0.2, 0.3, 0.5], &[1, 4]).unwrap();
        let out = net.forward(&mut g, &mut b, x, &[vec![]]).unwrap();
        assert_eq!(g.shape(out.main_rows), &[1, 5]);
        assert_eq!(g.shape(out.features), &[1, FEATURE_DIM]);
    }

    #[test]
    fn empty_input_is_rejected() {
        let net = Seg3dNet::new(5, 1);
        let mut g = Graph::new();
        let mut b = Binder::new(&net.params, false);
        let x = g.constant(vec![], &[0, 4]).unwrap();
        assert!(matches!(net.forward(&mut g, &mut b, x, &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn parameter_count_is_pinned() {
        for c in [3, 6, 12] {
            let net = Seg3dNet::new(c, 0);
            assert_eq!(net.params.scalar_count(), Seg3dNet::expected_param_scalars(c));
        }
    }

    #[test]
    fn isolated_voxel_aggregates_zeros() {
        // with no neighbors the concatenated half must be zero, so the output
        // equals the one computed with an explicitly zeroed neighbor mean
        let net = Seg3dNet::new(4, 2);
        let mut g = Graph::new();
        let mut b = Binder::new(&net.params, false);
        let x = g.constant(vec![0.4, 0.1, -0.7, 0.9], &[1, 4]).unwrap();
        let out = net.forward(&mut g, &mut b, x, &[vec![]]).unwrap();

        // reference: same forward where the neighbor mean group is the voxel
        // itself, then zeroed by slicing trickery is overkill; instead assert
        // the group-mean row is exactly zero through a probe graph
        let mut g2 = Graph::new();
        let probe = g2.constant(vec![1.0, 2.0], &[1, 2]).unwrap();
        let nb = g2.group_mean_rows(probe, &[vec![]]).unwrap();
        assert_eq!(g2.values(nb), &[0.0, 0.0]);

        assert_eq!(g.shape(out.main_rows), &[1, 4]);
    }

    #[test]
    fn dual_heads_are_parameter_disjoint() {
        let mut net = Seg3dNet::new(4, 3);
        let eval = |net: &Seg3dNet| {
            let mut g = Graph::new();
            let mut b = Binder::new(&net.params, false);
            let x = g.constant(vec![0.4, 0.1, -0.7, 0.9, 0.0, 0.3, 0.2, -0.1], &[2, 4]).unwrap();
            let out = net.forward(&mut g, &mut b, x, &[vec![1], vec![0]]).unwrap();
            (g.values(out.main_rows).to_vec(), g.values(out.mimicry_rows).to_vec())
        };
        let (main_before, _) = eval(&net);
        for p in net.params.iter_mut() {
            if p.name.starts_with("mimicry.") {
                p.value.fill(0.0);
            }
        }
        let (main_after, mim_after) = eval(&net);
        assert_eq!(main_before, main_after);
        assert!(mim_after.iter().all(|&v| v == 0.0));
    }
}
