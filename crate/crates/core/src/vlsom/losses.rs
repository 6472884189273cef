//! Weighted loss terms with analytic gradients.
//!
//! Losses are normalized by the weight sum (not the voxel count) so values
//! stay comparable across weight settings; every reduction runs through
//! deterministic pairwise summation. Gradients are exact derivatives of the
//! implemented forms, including the probability clamping, so an external
//! trainer can consume them without autodiff.

use crate::error::{Error, Result};
use crate::numeric::{pairwise_sum, pairwise_sum_by};
use crate::volume::{ClassField, LabelVolume, ProbVolume, VesselClass};

use super::soft_skel;
use super::{GtSkeletons, LossValue, WeightConfig, WeightVolume};

/// Probabilities are clamped into [LOG_CLAMP_LO, 1] before the logarithm.
pub const LOG_CLAMP_LO: f64 = 1e-7;
/// Smoothing constant of the Dice and clDice ratios.
pub const SMOOTH_EPS: f64 = 1e-5;

fn check_geometry(pred: &ProbVolume, gt: &LabelVolume, w: &WeightVolume, what: &str) -> Result<()> {
    pred.geometry().ensure_same_grid(gt.geometry(), what)?;
    pred.geometry().ensure_same_grid(w.geometry(), what)
}

/// Weighted cross-entropy: sum_v w_v * (-log p_v[gt_v]) / sum_v w_v.
pub fn weighted_ce_loss(
    pred: &ProbVolume,
    gt: &LabelVolume,
    w: &WeightVolume,
) -> Result<LossValue> {
    check_geometry(pred, gt, w, "weighted_ce_loss")?;
    let n = gt.geometry().voxel_count();
    let weights = w.data();
    let labels = gt.data();

    let sum_w = pairwise_sum(weights);
    let value = pairwise_sum_by(n, |v| {
        let p = pred.prob(labels[v] as usize, v).clamp(LOG_CLAMP_LO, 1.0);
        weights[v] * -p.ln()
    }) / sum_w;

    let mut gradient = ClassField::zeros(gt.geometry().clone());
    for v in 0..n {
        let c = labels[v] as usize;
        let p = pred.prob(c, v);
        // The clamp zeroes the derivative outside (LOG_CLAMP_LO, 1).
        if p > LOG_CLAMP_LO && p < 1.0 {
            gradient.add(c, v, -weights[v] / (p * sum_w));
        }
    }
    Ok(LossValue { value, gradient })
}

/// Weighted soft Dice over the two vessel classes:
/// 1 - mean_c (2 sum w p_c g_c + eps) / (sum w p_c + sum w g_c + eps).
pub fn weighted_soft_dice_loss(
    pred: &ProbVolume,
    gt: &LabelVolume,
    w: &WeightVolume,
) -> Result<LossValue> {
    check_geometry(pred, gt, w, "weighted_soft_dice_loss")?;
    let n = gt.geometry().voxel_count();
    let weights = w.data();
    let labels = gt.data();

    let mut gradient = ClassField::zeros(gt.geometry().clone());
    let mut dice_sum = 0.0;
    for class in VesselClass::BOTH {
        let c = class.label() as usize;
        let plane = pred.class_plane(c);
        let num = 2.0
            * pairwise_sum_by(n, |v| {
                if labels[v] as usize == c {
                    weights[v] * plane[v]
                } else {
                    0.0
                }
            })
            + SMOOTH_EPS;
        let den = pairwise_sum_by(n, |v| weights[v] * plane[v])
            + pairwise_sum_by(n, |v| if labels[v] as usize == c { weights[v] } else { 0.0 })
            + SMOOTH_EPS;
        let dice = num / den;
        dice_sum += dice;
        for v in 0..n {
            let g = f64::from(labels[v] as usize == c);
            // d(num/den)/dp = w (2 g den - num) / den^2, halved for the
            // class mean and negated for the loss.
            gradient.add(c, v, -0.5 * weights[v] * (2.0 * g * den - num) / (den * den));
        }
    }
    Ok(LossValue {
        value: 1.0 - dice_sum / 2.0,
        gradient,
    })
}

/// Weighted clDice: per class, topology precision couples the soft skeleton
/// of the prediction to the GT mask and topology sensitivity couples the GT
/// skeleton to the prediction; the loss is one minus the mean harmonic
/// mean. Classes whose GT skeleton is empty are excluded; if every class is
/// excluded the loss is zero with zero gradient.
pub fn weighted_cldice_loss(
    pred: &ProbVolume,
    gt: &LabelVolume,
    gt_skeletons: &GtSkeletons,
    w: &WeightVolume,
    cfg: &WeightConfig,
) -> Result<LossValue> {
    cfg.validate()?;
    check_geometry(pred, gt, w, "weighted_cldice_loss")?;
    gt.geometry()
        .ensure_same_grid(gt_skeletons.artery.geometry(), "weighted_cldice_loss")?;
    gt.geometry()
        .ensure_same_grid(gt_skeletons.vein.geometry(), "weighted_cldice_loss")?;
    let geometry = gt.geometry().clone();
    let n = geometry.voxel_count();
    let weights = w.data();
    let labels = gt.data();

    struct ClassTerm {
        class_index: usize,
        tape: soft_skel::Tape,
        tprec: f64,
        tsens: f64,
        den_prec: f64,
        den_sens: f64,
    }

    let mut terms: Vec<ClassTerm> = Vec::new();
    for class in VesselClass::BOTH {
        let c = class.label() as usize;
        let skel = gt_skeletons.class(class);
        let den_sens = pairwise_sum_by(n, |v| if skel.is_set(v) { weights[v] } else { 0.0 });
        if den_sens == 0.0 {
            continue; // empty GT skeleton: class excluded from the mean
        }
        let plane = pred.class_plane(c);
        let tape = soft_skel::forward_with_tape(plane, &geometry, cfg.soft_skel_iters);
        let den_prec = pairwise_sum_by(n, |v| weights[v] * tape.skel[v]);
        let num_prec = pairwise_sum_by(n, |v| {
            if labels[v] as usize == c {
                weights[v] * tape.skel[v]
            } else {
                0.0
            }
        });
        let tprec = if den_prec > 0.0 { num_prec / den_prec } else { 0.0 };
        let tsens = pairwise_sum_by(n, |v| {
            if skel.is_set(v) {
                weights[v] * plane[v]
            } else {
                0.0
            }
        }) / den_sens;
        terms.push(ClassTerm {
            class_index: c,
            tape,
            tprec,
            tsens,
            den_prec,
            den_sens,
        });
    }

    if terms.is_empty() {
        return Ok(LossValue {
            value: 0.0,
            gradient: ClassField::zeros(geometry),
        });
    }

    let k = terms.len() as f64;
    let mut f_sum = 0.0;
    let mut gradient = ClassField::zeros(geometry);
    for term in &terms {
        let (a, b) = (term.tprec, term.tsens);
        let denom = a + b + SMOOTH_EPS;
        f_sum += 2.0 * a * b / denom;

        let df_da = 2.0 * b * (b + SMOOTH_EPS) / (denom * denom);
        let df_db = 2.0 * a * (a + SMOOTH_EPS) / (denom * denom);
        let dl_df = -1.0 / k;
        let c = term.class_index;
        let skel = gt_skeletons.class(VesselClass::from_label(c as u8)?);

        // Through the soft skeleton: dL/dS_v = dL/df df/da da/dS_v.
        if term.den_prec > 0.0 {
            let upstream: Vec<f64> = (0..n)
                .map(|v| {
                    let g = f64::from(labels[v] as usize == c);
                    dl_df * df_da * weights[v] * (g - term.tprec) / term.den_prec
                })
                .collect();
            let through_skel = soft_skel::backward(&term.tape, &upstream);
            for v in 0..n {
                gradient.add(c, v, through_skel[v]);
            }
        }
        // Direct sensitivity path: dL/dp_v = dL/df df/db w skel / den_sens.
        for v in 0..n {
            if skel.is_set(v) {
                gradient.add(c, v, dl_df * df_db * weights[v] / term.den_sens);
            }
        }
    }

    Ok(LossValue {
        value: 1.0 - f_sum / k,
        gradient,
    })
}

/// Validation helper shared by the loss entry points: probabilities must
/// live in [0,1] for the soft skeleton's domain.
pub(super) fn ensure_unit_interval(values: &[f64]) -> Result<()> {
    if let Some(pos) = values.iter().position(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Domain(format!(
            "value {} at entry {pos} outside [0, 1]",
            values[pos]
        )));
    }
    Ok(())
}
