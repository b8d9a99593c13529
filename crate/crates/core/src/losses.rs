//! The full objective stack: weighted segmentation cross-entropies, the
//! supervised composite, the cross-modal KL mimicry loss, the total
//! objective, and the adversarial discriminator/generator losses. All of them
//! build differentiable graph nodes.

use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::io::mapping::IGNORE;

/// Probabilities are clamped here before every logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Per-class loss weights; the ignore sentinel always weighs zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
}

impl ClassWeights {
    pub fn uniform(num_classes: usize) -> Self {
        Self { weights: vec![1.0; num_classes] }
    }

    pub fn weight_of(&self, label: u32) -> f64 {
        if label == IGNORE {
            0.0
        } else {
            self.weights[label as usize]
        }
    }
}

/// Log-smoothed inverse-frequency weights: `w_c = 1 / ln(1.02 + f_c)` with
/// `f_c` the relative frequency of class `c`.
pub fn class_weights(histogram: &[u64]) -> Result<ClassWeights> {
    let total: u64 = histogram.iter().sum();
    if total == 0 {
        return Err(Error::EmptyHistogram);
    }
    let weights = histogram
        .iter()
        .map(|&count| {
            let f = count as f64 / total as f64;
            1.0 / (1.02 + f).ln()
        })
        .collect();
    Ok(ClassWeights { weights })
}

/// All weighting hyperparameters of the objective.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    /// Pixel-wise supervision weight (kept below 1).
    pub lambda_p: f64,
    /// Cross-modal weights per dataset.
    pub lambda_s: f64,
    pub lambda_tl: f64,
    pub lambda_t: f64,
    /// Generator adversarial weights.
    pub lambda_g2d_tp: f64,
    pub lambda_g3d_tp: f64,
    pub lambda_g2d_tf: f64,
    /// Discriminator weights, target side.
    pub lambda_d2d_tp: f64,
    pub lambda_d3d_tp: f64,
    pub lambda_d2d_tf: f64,
    /// Discriminator weights, source side.
    pub lambda_d2d_sp: f64,
    pub lambda_d3d_sp: f64,
    pub lambda_d2d_sf: f64,
}

impl LossWeights {
    pub fn zeros() -> Self {
        Self {
            lambda_p: 0.0,
            lambda_s: 0.0,
            lambda_tl: 0.0,
            lambda_t: 0.0,
            lambda_g2d_tp: 0.0,
            lambda_g3d_tp: 0.0,
            lambda_g2d_tf: 0.0,
            lambda_d2d_tp: 0.0,
            lambda_d3d_tp: 0.0,
            lambda_d2d_tf: 0.0,
            lambda_d2d_sp: 0.0,
            lambda_d3d_sp: 0.0,
            lambda_d2d_sf: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda_p", self.lambda_p),
            ("lambda_s", self.lambda_s),
            ("lambda_tl", self.lambda_tl),
            ("lambda_t", self.lambda_t),
            ("lambda_g2d_tp", self.lambda_g2d_tp),
            ("lambda_g3d_tp", self.lambda_g3d_tp),
            ("lambda_g2d_tf", self.lambda_g2d_tf),
            ("lambda_d2d_tp", self.lambda_d2d_tp),
            ("lambda_d3d_tp", self.lambda_d3d_tp),
            ("lambda_d2d_tf", self.lambda_d2d_tf),
            ("lambda_d2d_sp", self.lambda_d2d_sp),
            ("lambda_d3d_sp", self.lambda_d3d_sp),
            ("lambda_d2d_sf", self.lambda_d2d_sf),
        ];
        for (name, v) in all {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::ConfigError(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.lambda_p >= 1.0 {
            return Err(Error::ConfigError(format!(
                "lambda_p must be < 1, got {}",
                self.lambda_p
            )));
        }
        Ok(())
    }

    /// True when any adversarial term is active.
    pub fn any_adversarial(&self) -> bool {
        [
            self.lambda_g2d_tp,
            self.lambda_g3d_tp,
            self.lambda_g2d_tf,
            self.lambda_d2d_tp,
            self.lambda_d3d_tp,
            self.lambda_d2d_tf,
            self.lambda_d2d_sp,
            self.lambda_d3d_sp,
            self.lambda_d2d_sf,
        ]
        .iter()
        .any(|&v| v > 0.0)
    }
}

/// Point-wise weighted cross-entropy over `[N, C]` logits; ignored points are
/// excluded from both the sum and the normalizer.
pub fn seg_loss_3d(
    g: &mut Graph,
    logits: Tensor,
    labels: &[u32],
    weights: &ClassWeights,
) -> Result<Tensor> {
    let shape = g.shape(logits).to_vec();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::ShapeError(format!(
            "seg_loss_3d: logits {shape:?} with {} labels",
            labels.len()
        )));
    }
    let (n, c) = (shape[0], shape[1]);
    let mut mask = vec![0.0; n * c];
    let mut scored = 0usize;
    for (i, &l) in labels.iter().enumerate() {
        if l == IGNORE {
            continue;
        }
        if l as usize >= c {
            return Err(Error::ShapeError(format!("label {l} out of range for {c} classes")));
        }
        mask[i * c + l as usize] = weights.weight_of(l);
        scored += 1;
    }
    if scored == 0 {
        return Err(Error::EmptyLoss);
    }
    let mask_t = g.constant(mask, &[n, c])?;
    let logp = g.log_softmax(logits)?;
    let weighted = g.mul(mask_t, logp)?;
    let total = g.sum(weighted);
    Ok(g.mul_scalar(total, -1.0 / scored as f64))
}

/// Pixel-wise weighted cross-entropy over `[H*W, C]` logit rows and a label
/// image (row-major, [`IGNORE`] on invalid pixels). Normalization runs over
/// valid, non-ignored pixels only.
pub fn seg_loss_2d(
    g: &mut Graph,
    logits_rows: Tensor,
    pixel_labels: &[u32],
    weights: &ClassWeights,
) -> Result<Tensor> {
    let shape = g.shape(logits_rows).to_vec();
    if shape.len() != 2 || shape[0] != pixel_labels.len() {
        return Err(Error::ShapeError(format!(
            "seg_loss_2d: logits {shape:?} with {} pixel labels",
            pixel_labels.len()
        )));
    }
    let (hw, c) = (shape[0], shape[1]);
    // accumulation path kept separate from seg_loss_3d so the two can
    // cross-check each other: per-pixel log-prob picked via gather
    let mut scored_px = Vec::new();
    let mut scored_w = Vec::new();
    for (px, &l) in pixel_labels.iter().enumerate() {
        if l == IGNORE {
            continue;
        }
        if l as usize >= c {
            return Err(Error::ShapeError(format!("pixel label {l} out of range for {c} classes")));
        }
        scored_px.push((px, l));
        scored_w.push(weights.weight_of(l));
    }
    if scored_px.is_empty() {
        return Err(Error::EmptyLoss);
    }
    let logp = g.log_softmax(logits_rows)?;
    let flat = g.reshape(logp, &[hw * c, 1])?;
    let picks: Vec<usize> = scored_px.iter().map(|&(px, l)| px * c + l as usize).collect();
    let picked = g.gather_rows(flat, &picks)?;
    let w_t = g.constant(scored_w, &[picks.len(), 1])?;
    let weighted = g.mul(w_t, picked)?;
    let total = g.sum(weighted);
    Ok(g.mul_scalar(total, -1.0 / picks.len() as f64))
}

/// Supervised composite: `L3d(S) + lambda_p L2d(S) [+ L3d(Tl) +
/// lambda_p L2d(Tl)]`; the target-like terms drop out when absent.
pub fn supervised_loss(
    g: &mut Graph,
    source_3d: Tensor,
    source_2d: Tensor,
    targetlike: Option<(Tensor, Tensor)>,
    lambda_p: f64,
) -> Result<Tensor> {
    let p2d = g.mul_scalar(source_2d, lambda_p);
    let mut total = g.add(source_3d, p2d)?;
    if let Some((tl_3d, tl_2d)) = targetlike {
        let tlp = g.mul_scalar(tl_2d, lambda_p);
        let tl = g.add(tl_3d, tlp)?;
        total = g.add(total, tl)?;
    }
    Ok(total)
}

/// `KL(P || Q) = (1/N) sum_n sum_c P log(P/Q)` over probability rows, with
/// both arguments clamped at [`PROB_FLOOR`] before the logarithms. `P` is
/// detached: only `Q` receives gradient.
pub fn kl_divergence_rows(g: &mut Graph, p: Tensor, q: Tensor) -> Result<Tensor> {
    let shape = g.shape(p).to_vec();
    if shape.len() != 2 || g.shape(q) != shape.as_slice() {
        return Err(Error::ShapeError(format!(
            "kl_divergence: {:?} vs {:?}",
            shape,
            g.shape(q)
        )));
    }
    let n = shape[0];
    let p = g.detach(p);
    let pc = g.clamp_min(p, PROB_FLOOR);
    let qc = g.clamp_min(q, PROB_FLOOR);
    let logp = g.log(pc);
    let logq = g.log(qc);
    let diff = g.sub(logp, logq)?;
    let contrib = g.mul(pc, diff)?;
    let total = g.sum(contrib);
    Ok(g.mul_scalar(total, 1.0 / n as f64))
}

/// Cross-modal mimicry objective over one point set:
/// `KL(main_3d || mimicry_2d->3d) + KL(main_2d || mimicry_3d->2d)`.
///
/// All four inputs are `[N, C]` probability rows over the same points; the
/// main predictions act as detached teachers, so gradient flows only into the
/// mimicry heads.
pub fn cross_modal_loss(
    g: &mut Graph,
    main_2d: Tensor,
    mimicry_2d_to_3d: Tensor,
    main_3d: Tensor,
    mimicry_3d_to_2d: Tensor,
) -> Result<Tensor> {
    let a = kl_divergence_rows(g, main_3d, mimicry_2d_to_3d)?;
    let b = kl_divergence_rows(g, main_2d, mimicry_3d_to_2d)?;
    g.add(a, b)
}

/// Weighted total objective:
/// `L_sup + lambda_s xm(S) + lambda_tl xm(Tl) + lambda_t xm(T)`.
pub fn total_loss(
    g: &mut Graph,
    l_sup: Tensor,
    xm_source: Option<Tensor>,
    xm_targetlike: Option<Tensor>,
    xm_target: Option<Tensor>,
    w: &LossWeights,
) -> Result<Tensor> {
    let mut total = l_sup;
    for (xm, lambda) in [
        (xm_source, w.lambda_s),
        (xm_targetlike, w.lambda_tl),
        (xm_target, w.lambda_t),
    ] {
        if let Some(xm) = xm {
            let term = g.mul_scalar(xm, lambda);
            total = g.add(total, term)?;
        }
    }
    Ok(total)
}

/// `BCE(p, y) = -[y ln p + (1-y) ln(1-p)]` on a scalar probability.
pub fn bce_scalar(g: &mut Graph, p: Tensor, label: f64) -> Result<Tensor> {
    debug_assert!(label == 0.0 || label == 1.0);
    let term = if label == 1.0 {
        let pc = g.clamp_min(p, PROB_FLOOR);
        g.log(pc)
    } else {
        let neg = g.mul_scalar(p, -1.0);
        let one_minus = g.add_scalar(neg, 1.0);
        let omc = g.clamp_min(one_minus, PROB_FLOOR);
        g.log(omc)
    };
    Ok(g.mul_scalar(term, -1.0))
}

fn bce_batch(g: &mut Graph, outs: &[Tensor], label: f64) -> Result<Tensor> {
    debug_assert!(!outs.is_empty());
    let mut acc: Option<Tensor> = None;
    for &p in outs {
        let term = bce_scalar(g, p, label)?;
        acc = Some(match acc {
            None => term,
            Some(a) => g.add(a, term)?,
        });
    }
    let sum = acc.expect("non-empty batch");
    Ok(g.mul_scalar(sum, 1.0 / outs.len() as f64))
}

/// Discriminator objective: source labelled 0, target labelled 1, each side
/// batch-averaged and weighted.
pub fn discriminator_loss(
    g: &mut Graph,
    d_out_source: &[Tensor],
    d_out_target: &[Tensor],
    lambda_source: f64,
    lambda_target: f64,
) -> Result<Tensor> {
    if d_out_source.is_empty() || d_out_target.is_empty() {
        return Err(Error::EmptyInput);
    }
    let src = bce_batch(g, d_out_source, 0.0)?;
    let tgt = bce_batch(g, d_out_target, 1.0)?;
    let src = g.mul_scalar(src, lambda_source);
    let tgt = g.mul_scalar(tgt, lambda_target);
    g.add(src, tgt)
}

/// Generator objective on target inputs: make the (frozen) discriminator
/// emit the source label, `lambda * mean BCE(d, 0)`.
pub fn generator_adv_loss(g: &mut Graph, d_out_target: &[Tensor], lambda: f64) -> Result<Tensor> {
    if d_out_target.is_empty() {
        return Err(Error::EmptyInput);
    }
    let b = bce_batch(g, d_out_target, 0.0)?;
    Ok(g.mul_scalar(b, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn class_weight_formula_pins_single_class_value() {
        let w = class_weights(&[10, 0, 0]).unwrap();
        // f = 1 for the observed class: w = 1 / ln(2.02)
        assert!((w.weights[0] - 1.0 / 2.02f64.ln()).abs() < 1e-12);
        assert!((w.weights[0] - 1.4223).abs() < 1e-3);
        // absent classes: f = 0 -> 1 / ln(1.02)
        assert!((w.weights[1] - 1.0 / 1.02f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn uniform_histogram_gives_equal_weights_and_rare_classes_weigh_more() {
        let w = class_weights(&[500, 500]).unwrap();
        assert_eq!(w.weights[0], w.weights[1]);
        let w = class_weights(&[900, 100]).unwrap();
        assert!(w.weights[1] > w.weights[0]);
    }

    #[test]
    fn empty_histogram_is_rejected() {
        assert!(matches!(class_weights(&[0, 0]), Err(Error::EmptyHistogram)));
    }

    #[test]
    fn uniform_prediction_ce_equals_ln_c() {
        for c in [2usize, 4, 7] {
            let mut g = Graph::new();
            let logits = g.constant(vec![0.42; 6 * c], &[6, c]).unwrap();
            let labels: Vec<u32> = (0..6).map(|i| (i % c) as u32).collect();
            let loss = seg_loss_3d(&mut g, logits, &labels, &ClassWeights::uniform(c)).unwrap();
            assert!((g.scalar_value(loss) - (c as f64).ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn confident_correct_prediction_drives_loss_to_zero() {
        let mut g = Graph::new();
        let mut logits = vec![0.0; 3 * 4];
        for i in 0..3 {
            logits[i * 4 + i] = 60.0; // huge margin on the true class
        }
        let t = g.constant(logits, &[3, 4]).unwrap();
        let loss = seg_loss_3d(&mut g, t, &[0, 1, 2], &ClassWeights::uniform(4)).unwrap();
        assert!(g.scalar_value(loss) < 1e-12);
    }

    #[test]
    fn all_ignored_labels_is_empty_loss() {
        let mut g = Graph::new();
        let t = g.constant(vec![0.0; 8], &[2, 4]).unwrap();
        assert!(matches!(
            seg_loss_3d(&mut g, t, &[IGNORE, IGNORE], &ClassWeights::uniform(4)),
            Err(Error::EmptyLoss)
        ));
        let t2 = g.constant(vec![0.0; 8], &[2, 4]).unwrap();
        assert!(matches!(
            seg_loss_2d(&mut g, t2, &[IGNORE, IGNORE], &ClassWeights::uniform(4)),
            Err(Error::EmptyLoss)
        ));
    }

    #[test]
    fn seg_losses_are_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits: Vec<f64> = (0..5 * 3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let labels = [0u32, 2, 1, IGNORE, 0];
        let w = class_weights(&[5, 3, 2]).unwrap();
        let eval = |shift: f64| {
            let mut g = Graph::new();
            let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
            let t = g.constant(shifted, &[5, 3]).unwrap();
            let loss = seg_loss_3d(&mut g, t, &labels, &w).unwrap();
            g.scalar_value(loss)
        };
        assert!((eval(0.0) - eval(17.5)).abs() < 1e-9);
    }

    #[test]
    fn seg_loss_2d_matches_seg_loss_3d_on_valid_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hw = 12;
        let c = 4;
        let logits: Vec<f64> = (0..hw * c).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let pixel_labels: Vec<u32> =
            (0..hw).map(|i| if i % 3 == 0 { IGNORE } else { (i % c) as u32 }).collect();
        let w = class_weights(&[7, 5, 3, 1]).unwrap();

        let mut g = Graph::new();
        let t = g.constant(logits.clone(), &[hw, c]).unwrap();
        let l2d = seg_loss_2d(&mut g, t, &pixel_labels, &w).unwrap();

        // oracle: strip ignored pixels and score with the point-wise loss
        let mut kept_logits = Vec::new();
        let mut kept_labels = Vec::new();
        for (i, &l) in pixel_labels.iter().enumerate() {
            if l != IGNORE {
                kept_logits.extend_from_slice(&logits[i * c..(i + 1) * c]);
                kept_labels.push(l);
            }
        }
        let t3 = g.constant(kept_logits, &[kept_labels.len(), c]).unwrap();
        let l3d = seg_loss_3d(&mut g, t3, &kept_labels, &w).unwrap();
        assert!((g.scalar_value(l2d) - g.scalar_value(l3d)).abs() < 1e-12);
    }

    #[test]
    fn supervised_loss_composes_the_four_terms() {
        let mut g = Graph::new();
        let s3 = g.scalar(1.0);
        let s2 = g.scalar(2.0);
        let t3 = g.scalar(4.0);
        let t2 = g.scalar(8.0);
        let lp = 0.5;
        let l = supervised_loss(&mut g, s3, s2, Some((t3, t2)), lp).unwrap();
        assert!((g.scalar_value(l) - (1.0 + 0.5 * 2.0 + 4.0 + 0.5 * 8.0)).abs() < 1e-12);
        let l_no_tl = supervised_loss(&mut g, s3, s2, None, 0.0).unwrap();
        assert!((g.scalar_value(l_no_tl) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_of_identical_distributions_is_zero_and_kl_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let c = rng.gen_range(2..6);
            let n = rng.gen_range(1..5);
            let mut random_rows = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                let mut out = Vec::with_capacity(n * c);
                for _ in 0..n {
                    let raw: Vec<f64> = (0..c).map(|_| rng.gen_range(0.01..1.0)).collect();
                    let z: f64 = raw.iter().sum();
                    out.extend(raw.into_iter().map(|v| v / z));
                }
                out
            };
            let pdata = random_rows(&mut rng);
            let qdata = random_rows(&mut rng);
            let mut g = Graph::new();
            let p = g.constant(pdata.clone(), &[n, c]).unwrap();
            let q = g.constant(qdata, &[n, c]).unwrap();
            let kl_pq = kl_divergence_rows(&mut g, p, q).unwrap();
            assert!(g.scalar_value(kl_pq) >= 0.0);
            let p2 = g.constant(pdata.clone(), &[n, c]).unwrap();
            let p3 = g.constant(pdata, &[n, c]).unwrap();
            let kl_pp = kl_divergence_rows(&mut g, p2, p3).unwrap();
            assert_eq!(g.scalar_value(kl_pp), 0.0);
        }
    }

    #[test]
    fn cross_modal_loss_matches_hand_computed_double_sum() {
        // 3 points, 4 classes
        let p2d = vec![0.4, 0.3, 0.2, 0.1, 0.25, 0.25, 0.25, 0.25, 0.7, 0.1, 0.1, 0.1];
        let m23 = vec![0.2, 0.2, 0.3, 0.3, 0.4, 0.3, 0.2, 0.1, 0.25, 0.25, 0.25, 0.25];
        let p3d = vec![0.1, 0.2, 0.3, 0.4, 0.3, 0.3, 0.2, 0.2, 0.5, 0.2, 0.2, 0.1];
        let m32 = vec![0.3, 0.3, 0.2, 0.2, 0.2, 0.3, 0.3, 0.2, 0.1, 0.4, 0.4, 0.1];
        let hand_kl = |p: &[f64], q: &[f64]| -> f64 {
            let mut total = 0.0;
            for i in 0..12 {
                total += p[i] * (p[i] / q[i]).ln();
            }
            total / 3.0
        };
        let expected = hand_kl(&p3d, &m23) + hand_kl(&p2d, &m32);
        let mut g = Graph::new();
        let tp2 = g.constant(p2d, &[3, 4]).unwrap();
        let tm23 = g.constant(m23, &[3, 4]).unwrap();
        let tp3 = g.constant(p3d, &[3, 4]).unwrap();
        let tm32 = g.constant(m32, &[3, 4]).unwrap();
        let loss = cross_modal_loss(&mut g, tp2, tm23, tp3, tm32).unwrap();
        assert!((g.scalar_value(loss) - expected).abs() < 1e-12);
    }

    #[test]
    fn cross_modal_gradient_flows_only_into_mimicry_inputs() {
        let mut g = Graph::new();
        let main2_logits = g.leaf(vec![0.5, -0.5, 0.1, 0.9], &[2, 2]).unwrap();
        let mim23_logits = g.leaf(vec![0.2, 0.3, -0.2, 0.6], &[2, 2]).unwrap();
        let main3_logits = g.leaf(vec![-0.1, 0.4, 0.8, -0.3], &[2, 2]).unwrap();
        let mim32_logits = g.leaf(vec![0.0, 0.0, 0.5, 0.5], &[2, 2]).unwrap();
        let p2 = g.softmax(main2_logits).unwrap();
        let m23 = g.softmax(mim23_logits).unwrap();
        let p3 = g.softmax(main3_logits).unwrap();
        let m32 = g.softmax(mim32_logits).unwrap();
        let loss = cross_modal_loss(&mut g, p2, m23, p3, m32).unwrap();
        g.backward(loss).unwrap();
        assert!(g.grad(main2_logits).iter().all(|&v| v == 0.0));
        assert!(g.grad(main3_logits).iter().all(|&v| v == 0.0));
        assert!(g.grad(mim23_logits).iter().any(|&v| v != 0.0));
        assert!(g.grad(mim32_logits).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn total_loss_weights_each_dataset_and_is_linear() {
        let mut w = LossWeights::zeros();
        w.lambda_s = 0.8;
        w.lambda_tl = 0.0;
        w.lambda_t = 0.1;
        let mut g = Graph::new();
        let sup = g.scalar(3.0);
        let xs = g.scalar(2.0);
        let xtl = g.scalar(100.0);
        let xt = g.scalar(5.0);
        let total = total_loss(&mut g, sup, Some(xs), Some(xtl), Some(xt), &w).unwrap();
        assert!((g.scalar_value(total) - (3.0 + 0.8 * 2.0 + 0.0 + 0.1 * 5.0)).abs() < 1e-12);

        // all weights zero -> L_total = L_sup
        let z = LossWeights::zeros();
        let total0 = total_loss(&mut g, sup, Some(xs), Some(xtl), Some(xt), &z).unwrap();
        assert_eq!(g.scalar_value(total0), 3.0);
    }

    #[test]
    fn discriminator_loss_at_half_is_two_ln_two() {
        let mut g = Graph::new();
        let s = g.scalar(0.5);
        let t = g.scalar(0.5);
        let loss = discriminator_loss(&mut g, &[s], &[t], 1.0, 1.0).unwrap();
        assert!((g.scalar_value(loss) - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_discriminator_loss_vanishes() {
        let mut g = Graph::new();
        let s = g.scalar(1e-9);
        let t = g.scalar(1.0 - 1e-9);
        let loss = discriminator_loss(&mut g, &[s], &[t], 1.0, 1.0).unwrap();
        assert!(g.scalar_value(loss) < 1e-8);
    }

    #[test]
    fn generator_loss_value_and_monotonicity() {
        let mut g = Graph::new();
        let half = g.scalar(0.5);
        let l = generator_adv_loss(&mut g, &[half], 0.7).unwrap();
        assert!((g.scalar_value(l) - 0.7 * 2f64.ln()).abs() < 1e-12);

        let lo = g.scalar(0.1);
        let hi = g.scalar(0.9);
        let l_lo = generator_adv_loss(&mut g, &[lo], 1.0).unwrap();
        let l_hi = generator_adv_loss(&mut g, &[hi], 1.0).unwrap();
        assert!(g.scalar_value(l_hi) > g.scalar_value(l_lo));
    }

    #[test]
    fn lambda_p_must_stay_below_one_and_negatives_are_rejected() {
        let mut w = LossWeights::zeros();
        w.lambda_p = 1.0;
        assert!(matches!(w.validate(), Err(Error::ConfigError(_))));
        w.lambda_p = 0.5;
        w.lambda_t = -0.1;
        assert!(matches!(w.validate(), Err(Error::ConfigError(_))));
        w.lambda_t = 0.1;
        w.validate().unwrap();
    }
}
