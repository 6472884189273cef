//! Evaluation metrics on hard label volumes: Dice, Recall, centerline Dice
//! and centerline Recall, computed per vessel class.
//!
//! Undefined values (empty denominator sets) are reported explicitly as
//! `None`, never silently coerced to 0 or 1, so batch averages can exclude
//! them.

use crate::error::Result;
use crate::skeleton::{skeletonize, SkeletonVolume};
use crate::volume::{LabelVolume, VesselClass};

fn overlap_count(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b.iter()).filter(|(&x, &y)| x != 0 && y != 0).count()
}

fn count(mask: &[u8]) -> usize {
    mask.iter().filter(|&&v| v != 0).count()
}

/// 2|P∩G| / (|P|+|G|); `None` when both masks are empty.
pub fn dice(pred: &LabelVolume, gt: &LabelVolume) -> Result<Option<f64>> {
    pred.geometry().ensure_same_grid(gt.geometry(), "dice")?;
    pred.ensure_binary()?;
    gt.ensure_binary()?;
    let (p, g) = (count(pred.data()), count(gt.data()));
    if p + g == 0 {
        return Ok(None);
    }
    let inter = overlap_count(pred.data(), gt.data());
    Ok(Some(2.0 * inter as f64 / (p + g) as f64))
}

/// |P∩G| / |G|; `None` when the ground truth is empty.
pub fn recall(pred: &LabelVolume, gt: &LabelVolume) -> Result<Option<f64>> {
    pred.geometry().ensure_same_grid(gt.geometry(), "recall")?;
    pred.ensure_binary()?;
    gt.ensure_binary()?;
    let g = count(gt.data());
    if g == 0 {
        return Ok(None);
    }
    let inter = overlap_count(pred.data(), gt.data());
    Ok(Some(inter as f64 / g as f64))
}

fn skeleton_in_mask_fraction(skel: &SkeletonVolume, mask: &LabelVolume) -> Option<f64> {
    let total = skel.count();
    if total == 0 {
        return None;
    }
    let covered = skel
        .voxel_indices()
        .filter(|&idx| mask.data()[idx] != 0)
        .count();
    Some(covered as f64 / total as f64)
}

fn cl_dice_from_skeletons(
    skel_pred: &SkeletonVolume,
    skel_gt: &SkeletonVolume,
    pred: &LabelVolume,
    gt: &LabelVolume,
) -> Option<f64> {
    let tprec = skeleton_in_mask_fraction(skel_pred, gt)?;
    let tsens = skeleton_in_mask_fraction(skel_gt, pred)?;
    if tprec + tsens == 0.0 {
        return Some(0.0);
    }
    Some(2.0 * tprec * tsens / (tprec + tsens))
}

/// Centerline Dice: harmonic mean of topology precision (prediction
/// skeleton inside GT) and topology sensitivity (GT skeleton inside
/// prediction). `None` when either skeleton is empty.
pub fn cl_dice(pred: &LabelVolume, gt: &LabelVolume) -> Result<Option<f64>> {
    pred.geometry().ensure_same_grid(gt.geometry(), "cl_dice")?;
    let skel_pred = skeletonize(pred)?;
    let skel_gt = skeletonize(gt)?;
    Ok(cl_dice_from_skeletons(&skel_pred, &skel_gt, pred, gt))
}

/// Centerline Recall: fraction of GT skeleton voxels covered by the
/// predicted mask. `None` when the GT skeleton is empty.
pub fn cl_recall(pred: &LabelVolume, gt: &LabelVolume) -> Result<Option<f64>> {
    pred.geometry().ensure_same_grid(gt.geometry(), "cl_recall")?;
    pred.ensure_binary()?;
    let skel_gt = skeletonize(gt)?;
    Ok(skeleton_in_mask_fraction(&skel_gt, pred))
}

/// Metrics of one vessel class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub dice: Option<f64>,
    pub recall: Option<f64>,
    pub cl_dice: Option<f64>,
    pub cl_recall: Option<f64>,
    pub pred_voxels: usize,
    pub gt_voxels: usize,
    pub pred_skeleton_voxels: usize,
    pub gt_skeleton_voxels: usize,
}

/// Full evaluation of a prediction against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub artery: ClassMetrics,
    pub vein: ClassMetrics,
}

impl MetricReport {
    pub fn class(&self, class: VesselClass) -> &ClassMetrics {
        match class {
            VesselClass::Artery => &self.artery,
            VesselClass::Vein => &self.vein,
        }
    }

    /// Tab-separated records `case<TAB>class<TAB>metric<TAB>value`, one per
    /// metric and count, with `NA` for undefined metrics. This is the line
    /// format emitted by the CLI.
    pub fn tsv_records(&self, case_id: &str) -> Vec<String> {
        let mut out = Vec::with_capacity(16);
        for class in VesselClass::BOTH {
            let m = self.class(class);
            let fmt_opt = |v: Option<f64>| match v {
                Some(x) => format!("{x:.6}"),
                None => "NA".to_string(),
            };
            let push = |out: &mut Vec<String>, metric: &str, value: String| {
                out.push(format!("{case_id}\t{}\t{metric}\t{value}", class.name()));
            };
            push(&mut out, "dice", fmt_opt(m.dice));
            push(&mut out, "recall", fmt_opt(m.recall));
            push(&mut out, "cl_dice", fmt_opt(m.cl_dice));
            push(&mut out, "cl_recall", fmt_opt(m.cl_recall));
            push(&mut out, "pred_voxels", m.pred_voxels.to_string());
            push(&mut out, "gt_voxels", m.gt_voxels.to_string());
            push(&mut out, "pred_skeleton_voxels", m.pred_skeleton_voxels.to_string());
            push(&mut out, "gt_skeleton_voxels", m.gt_skeleton_voxels.to_string());
        }
        out
    }
}

fn evaluate_class(pred: &LabelVolume, gt: &LabelVolume, class: VesselClass) -> Result<ClassMetrics> {
    let p = pred.class_mask(class);
    let g = gt.class_mask(class);
    let skel_p = skeletonize(&p)?;
    let skel_g = skeletonize(&g)?;
    Ok(ClassMetrics {
        dice: dice(&p, &g)?,
        recall: recall(&p, &g)?,
        cl_dice: cl_dice_from_skeletons(&skel_p, &skel_g, &p, &g),
        cl_recall: skeleton_in_mask_fraction(&skel_g, &p),
        pred_voxels: count(p.data()),
        gt_voxels: count(g.data()),
        pred_skeleton_voxels: skel_p.count(),
        gt_skeleton_voxels: skel_g.count(),
    })
}

/// All four metrics for both vessel classes.
pub fn evaluate(pred: &LabelVolume, gt: &LabelVolume) -> Result<MetricReport> {
    pred.geometry().ensure_same_grid(gt.geometry(), "evaluate")?;
    Ok(MetricReport {
        artery: evaluate_class(pred, gt, VesselClass::Artery)?,
        vein: evaluate_class(pred, gt, VesselClass::Vein)?,
    })
}
