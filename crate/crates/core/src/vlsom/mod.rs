//! Vessel lumen structure optimization: centerline-derived weight maps and
//! the weighted composite loss (cross-entropy + Dice + 0.5 clDice).
//!
//! Vessel voxels get weight `w_class`, centerline voxels `w_cl`, everything
//! else 1. For the Dice and clDice terms the elevated weights apply only
//! inside the lung mask; cross-entropy elevates everywhere.

mod losses;
mod soft_skel;

pub use losses::{
    weighted_ce_loss, weighted_cldice_loss, weighted_soft_dice_loss, LOG_CLAMP_LO, SMOOTH_EPS,
};

use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;
use crate::skeleton::{skeleton_of_class, SkeletonVolume};
use crate::volume::{ClassField, LabelVolume, ProbVolume, ScalarVolume, VesselClass};

/// Weighting and composite-loss parameters. Defaults: w_class 3, w_cl 15,
/// clDice coefficient 0.5, 10 soft-skeleton rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightConfig {
    /// Weight of vessel voxels off the centerline.
    pub w_class: f64,
    /// Weight of centerline voxels.
    pub w_cl: f64,
    /// Coefficient of the clDice term in the composite loss.
    pub lambda_cldice: f64,
    /// Soft-skeletonization rounds used by the clDice term.
    pub soft_skel_iters: usize,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            w_class: 3.0,
            w_cl: 15.0,
            lambda_cldice: 0.5,
            soft_skel_iters: 10,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_class >= 1.0) || !(self.w_cl >= self.w_class) {
            return Err(Error::Config(format!(
                "weights must satisfy w_cl >= w_class >= 1, got w_class {} w_cl {}",
                self.w_class, self.w_cl
            )));
        }
        if !(self.lambda_cldice >= 0.0) {
            return Err(Error::Config(format!(
                "lambda_cldice must be >= 0, got {}",
                self.lambda_cldice
            )));
        }
        if self.soft_skel_iters == 0 {
            return Err(Error::Config("soft_skel_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Which loss term a weight map feeds; Dice and clDice apply elevated
/// weights only inside the lung.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Ce,
    Dice,
    ClDice,
}

impl LossKind {
    fn lung_restricted(self) -> bool {
        !matches!(self, LossKind::Ce)
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::Dice => "dice",
            LossKind::ClDice => "cldice",
        }
    }
}

/// Per-voxel positive loss weights; values are one of {1, w_class, w_cl}.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVolume {
    geometry: VolumeGeometry,
    data: Vec<f64>,
}

impl WeightVolume {
    /// All-ones weights (the unweighted special case).
    pub fn ones(geometry: VolumeGeometry) -> Self {
        let n = geometry.voxel_count();
        Self {
            geometry,
            data: vec![1.0; n],
        }
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_scalar_volume(&self) -> ScalarVolume {
        ScalarVolume::new(self.geometry.clone(), self.data.clone())
            .expect("weights are finite")
    }
}

/// Ground-truth centerlines per vessel class.
#[derive(Debug, Clone)]
pub struct GtSkeletons {
    pub artery: SkeletonVolume,
    pub vein: SkeletonVolume,
}

impl GtSkeletons {
    /// Extract both class centerlines from a label volume by thinning.
    pub fn from_labels(labels: &LabelVolume) -> Result<Self> {
        Ok(Self {
            artery: skeleton_of_class(labels, VesselClass::Artery)?,
            vein: skeleton_of_class(labels, VesselClass::Vein)?,
        })
    }

    pub fn from_parts(artery: SkeletonVolume, vein: SkeletonVolume) -> Self {
        Self { artery, vein }
    }

    pub fn class(&self, class: VesselClass) -> &SkeletonVolume {
        match class {
            VesselClass::Artery => &self.artery,
            VesselClass::Vein => &self.vein,
        }
    }
}

/// Build the per-voxel weight map for one loss kind.
pub fn build_weight_map(
    gt: &LabelVolume,
    skeletons: &GtSkeletons,
    lung_mask: &LabelVolume,
    cfg: &WeightConfig,
    kind: LossKind,
) -> Result<WeightVolume> {
    cfg.validate()?;
    let g = gt.geometry();
    g.ensure_same_grid(lung_mask.geometry(), "build_weight_map")?;
    g.ensure_same_grid(skeletons.artery.geometry(), "build_weight_map")?;
    g.ensure_same_grid(skeletons.vein.geometry(), "build_weight_map")?;

    for class in VesselClass::BOTH {
        let skel = skeletons.class(class);
        for idx in skel.voxel_indices() {
            if gt.data()[idx] != class.label() {
                return Err(Error::InconsistentSkeleton(format!(
                    "{} skeleton voxel {idx} lies on gt label {}",
                    class.name(),
                    gt.data()[idx]
                )));
            }
        }
    }

    let n = g.voxel_count();
    let restricted = kind.lung_restricted();
    let mut data = vec![1.0; n];
    for idx in 0..n {
        let label = gt.data()[idx];
        if label == 0 {
            continue;
        }
        if restricted && lung_mask.data()[idx] == 0 {
            continue;
        }
        let on_centerline = match label {
            1 => skeletons.artery.is_set(idx),
            _ => skeletons.vein.is_set(idx),
        };
        data[idx] = if on_centerline { cfg.w_cl } else { cfg.w_class };
    }
    Ok(WeightVolume {
        geometry: g.clone(),
        data,
    })
}

/// A loss value with its gradient in probability space.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub gradient: ClassField,
}

/// Iterative soft skeletonization of a single-class probability field.
/// Values must lie in [0, 1].
pub fn soft_skeleton(field: &ScalarVolume, iters: usize) -> Result<ScalarVolume> {
    if iters == 0 {
        return Err(Error::Config("soft skeleton needs iters >= 1".into()));
    }
    losses::ensure_unit_interval(field.data())?;
    let skel = soft_skel::forward(field.data(), field.geometry(), iters);
    ScalarVolume::new(field.geometry().clone(), skel)
}

/// Per-term values of the composite loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub ce: f64,
    pub dice: f64,
    pub cldice: f64,
    pub lambda_cldice: f64,
    pub total: f64,
}

impl std::fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "ce_loss = {:.9}", self.ce)?;
        writeln!(f, "dice_loss = {:.9}", self.dice)?;
        writeln!(f, "cldice_loss = {:.9}", self.cldice)?;
        writeln!(f, "lambda_cldice = {}", self.lambda_cldice)?;
        writeln!(f, "total_loss = {:.9}", self.total)
    }
}

/// The full composite loss: builds the three kind-specific weight maps,
/// evaluates the three terms and returns total = ce + dice +
/// lambda * cldice with the summed gradient.
pub fn composite_loss(
    pred: &ProbVolume,
    gt: &LabelVolume,
    gt_skeletons: &GtSkeletons,
    lung_mask: &LabelVolume,
    cfg: &WeightConfig,
) -> Result<(LossBreakdown, ClassField)> {
    let w_ce = build_weight_map(gt, gt_skeletons, lung_mask, cfg, LossKind::Ce)?;
    let w_dice = build_weight_map(gt, gt_skeletons, lung_mask, cfg, LossKind::Dice)?;
    let w_cldice = build_weight_map(gt, gt_skeletons, lung_mask, cfg, LossKind::ClDice)?;

    let ce = weighted_ce_loss(pred, gt, &w_ce)?;
    let dice = weighted_soft_dice_loss(pred, gt, &w_dice)?;
    let cldice = weighted_cldice_loss(pred, gt, gt_skeletons, &w_cldice, cfg)?;

    let breakdown = LossBreakdown {
        ce: ce.value,
        dice: dice.value,
        cldice: cldice.value,
        lambda_cldice: cfg.lambda_cldice,
        total: ce.value + dice.value + cfg.lambda_cldice * cldice.value,
    };
    let mut gradient = ce.gradient;
    gradient.axpy(1.0, &dice.gradient);
    gradient.axpy(cfg.lambda_cldice, &cldice.gradient);
    Ok((breakdown, gradient))
}
