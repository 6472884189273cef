//! Preprocessing: lung bounding-box crop, resampling to the target spacing,
//! and percentile intensity clipping.

use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;
use crate::volume::{LabelVolume, ScalarVolume};

/// Preprocessing parameters. Defaults are the pipeline's reference values:
/// 0.726 x 0.726 x 0.8 mm target spacing and the 0.5/99.5 foreground
/// percentile window.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub target_spacing: [f64; 3],
    pub crop_margin: usize,
    pub p_lo: f64,
    pub p_hi: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_spacing: [0.726, 0.726, 0.8],
            crop_margin: 0,
            p_lo: 0.5,
            p_hi: 99.5,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config(format!(
                "target spacing must be > 0, got {:?}",
                self.target_spacing
            )));
        }
        check_percentiles(self.p_lo, self.p_hi)
    }
}

fn check_percentiles(p_lo: f64, p_hi: f64) -> Result<()> {
    if !(0.0..100.0).contains(&p_lo) || !(p_hi > 0.0 && p_hi <= 100.0) || p_lo >= p_hi {
        return Err(Error::Config(format!(
            "percentiles must satisfy 0 <= p_lo < p_hi <= 100, got ({p_lo}, {p_hi})"
        )));
    }
    Ok(())
}

/// Tight bounding box of nonzero mask voxels expanded by `margin` and
/// clamped to the volume. Returns (lower corner, box dims).
pub fn mask_bounding_box(mask: &LabelVolume, margin: usize) -> Result<([usize; 3], [usize; 3])> {
    let dims = mask.geometry().dims();
    let mut lo = dims;
    let mut hi = [0usize; 3];
    let mut any = false;
    let mut idx = 0;
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                if mask.data()[idx] != 0 {
                    any = true;
                    let v = [i, j, k];
                    for a in 0..3 {
                        lo[a] = lo[a].min(v[a]);
                        hi[a] = hi[a].max(v[a]);
                    }
                }
                idx += 1;
            }
        }
    }
    if !any {
        return Err(Error::EmptyMask("bounding box of an all-zero mask".into()));
    }
    let mut lower = [0usize; 3];
    let mut box_dims = [0usize; 3];
    for a in 0..3 {
        lower[a] = lo[a].saturating_sub(margin);
        let upper = (hi[a] + margin).min(dims[a] - 1);
        box_dims[a] = upper - lower[a] + 1;
    }
    Ok((lower, box_dims))
}

fn copy_box<T: Copy>(
    src: &[T],
    geometry: &VolumeGeometry,
    lower: [usize; 3],
    dims: [usize; 3],
) -> Vec<T> {
    let mut out = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            let row = geometry.index(lower[0], lower[1] + j, lower[2] + k);
            out.extend_from_slice(&src[row..row + dims[0]]);
        }
    }
    out
}

/// Crop a scalar volume to a box. World coordinates of retained voxels are
/// unchanged.
pub fn crop_scalar(
    volume: &ScalarVolume,
    lower: [usize; 3],
    dims: [usize; 3],
) -> Result<ScalarVolume> {
    let geometry = volume.geometry().cropped(lower, dims)?;
    ScalarVolume::new(geometry, copy_box(volume.data(), volume.geometry(), lower, dims))
}

/// Crop a label volume to a box.
pub fn crop_label(
    labels: &LabelVolume,
    lower: [usize; 3],
    dims: [usize; 3],
) -> Result<LabelVolume> {
    let geometry = labels.geometry().cropped(lower, dims)?;
    LabelVolume::new(geometry, copy_box(labels.data(), labels.geometry(), lower, dims))
}

/// Crop `volume` to the bounding box of the nonzero voxels of `lung_mask`,
/// expanded by `margin`. Returns the cropped volume and the lower corner of
/// the box, for mapping results back into the original grid.
pub fn crop_to_lung_bbox(
    volume: &ScalarVolume,
    lung_mask: &LabelVolume,
    margin: usize,
) -> Result<(ScalarVolume, [usize; 3])> {
    volume
        .geometry()
        .ensure_same_grid(lung_mask.geometry(), "crop_to_lung_bbox")?;
    let (lower, dims) = mask_bounding_box(lung_mask, margin)?;
    Ok((crop_scalar(volume, lower, dims)?, lower))
}

/// Output dims for resampling: round(dim * spacing / target) per axis,
/// half away from zero, minimum 1.
pub fn resampled_dims(dims: [usize; 3], spacing: [f64; 3], target: [f64; 3]) -> [usize; 3] {
    let mut out = [1usize; 3];
    for a in 0..3 {
        out[a] = ((dims[a] as f64 * spacing[a] / target[a]).round() as usize).max(1);
    }
    out
}

fn check_target(target: [f64; 3]) -> Result<()> {
    if target.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::Config(format!(
            "target spacing must be finite and > 0, got {target:?}"
        )));
    }
    Ok(())
}

/// Continuous input coordinate of output voxel `i` along one axis. The world
/// origin is preserved, so this is just the spacing ratio.
#[inline]
fn source_coord(i: usize, target: f64, spacing: f64) -> f64 {
    i as f64 * target / spacing
}

/// Trilinear resampling onto `target_spacing`. Output voxels are sampled at
/// their world centers; sample points outside the input grid clamp to the
/// border voxel.
pub fn resample_trilinear(volume: &ScalarVolume, target_spacing: [f64; 3]) -> Result<ScalarVolume> {
    check_target(target_spacing)?;
    let g = volume.geometry();
    let in_dims = g.dims();
    let spacing = g.spacing();
    let out_dims = resampled_dims(in_dims, spacing, target_spacing);
    let out_geometry = VolumeGeometry::new(out_dims, target_spacing, g.origin())?;

    // Per-axis interpolation support, precomputed once.
    struct Axis {
        i0: Vec<usize>,
        i1: Vec<usize>,
        frac: Vec<f64>,
    }
    let axis = |a: usize| -> Axis {
        let n_in = in_dims[a];
        let mut i0 = Vec::with_capacity(out_dims[a]);
        let mut i1 = Vec::with_capacity(out_dims[a]);
        let mut frac = Vec::with_capacity(out_dims[a]);
        for i in 0..out_dims[a] {
            let u = source_coord(i, target_spacing[a], spacing[a]).clamp(0.0, (n_in - 1) as f64);
            let lo = (u.floor() as usize).min(n_in - 1);
            let hi = (lo + 1).min(n_in - 1);
            i0.push(lo);
            i1.push(hi);
            frac.push(u - lo as f64);
        }
        Axis { i0, i1, frac }
    };
    let (ax, ay, az) = (axis(0), axis(1), axis(2));

    let src = volume.data();
    let mut out = Vec::with_capacity(out_geometry.voxel_count());
    for k in 0..out_dims[2] {
        let (k0, k1, fz) = (az.i0[k], az.i1[k], az.frac[k]);
        for j in 0..out_dims[1] {
            let (j0, j1, fy) = (ay.i0[j], ay.i1[j], ay.frac[j]);
            let base00 = g.index(0, j0, k0);
            let base10 = g.index(0, j1, k0);
            let base01 = g.index(0, j0, k1);
            let base11 = g.index(0, j1, k1);
            for i in 0..out_dims[0] {
                let (i0, i1, fx) = (ax.i0[i], ax.i1[i], ax.frac[i]);
                let lerp = |base: usize| -> f64 {
                    src[base + i0] * (1.0 - fx) + src[base + i1] * fx
                };
                let c0 = lerp(base00) * (1.0 - fy) + lerp(base10) * fy;
                let c1 = lerp(base01) * (1.0 - fy) + lerp(base11) * fy;
                out.push(c0 * (1.0 - fz) + c1 * fz);
            }
        }
    }
    ScalarVolume::new(out_geometry, out)
}

/// Nearest-neighbor resampling for labels and masks; same dim rule as
/// [`resample_trilinear`]. Never invents labels.
pub fn resample_nearest(labels: &LabelVolume, target_spacing: [f64; 3]) -> Result<LabelVolume> {
    check_target(target_spacing)?;
    let g = labels.geometry();
    let in_dims = g.dims();
    let spacing = g.spacing();
    let out_dims = resampled_dims(in_dims, spacing, target_spacing);
    let out_geometry = VolumeGeometry::new(out_dims, target_spacing, g.origin())?;

    let nearest_axis = |a: usize| -> Vec<usize> {
        (0..out_dims[a])
            .map(|i| {
                let u = source_coord(i, target_spacing[a], spacing[a]);
                (u.round() as usize).min(in_dims[a] - 1)
            })
            .collect()
    };
    let (nx, ny, nz) = (nearest_axis(0), nearest_axis(1), nearest_axis(2));

    let src = labels.data();
    let mut out = Vec::with_capacity(out_geometry.voxel_count());
    for k in 0..out_dims[2] {
        for j in 0..out_dims[1] {
            let base = g.index(0, ny[j], nz[k]);
            for i in 0..out_dims[0] {
                out.push(src[base + nx[i]]);
            }
        }
    }
    LabelVolume::new(out_geometry, out)
}

/// Clip bounds actually applied by [`percentile_clip`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipReport {
    pub lo: f64,
    pub hi: f64,
    pub foreground_voxels: usize,
}

/// Nearest-rank percentile: the value at rank ceil(p/100 * n), 1-based,
/// clamped into the sample.
fn nearest_rank(sorted_or_selected: &mut [f64], p: f64) -> f64 {
    let n = sorted_or_selected.len();
    let rank = ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    let (_, value, _) = sorted_or_selected.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *value
}

/// Clamp every voxel of `volume` into the nearest-rank [p_lo, p_hi]
/// percentile window of the intensities at nonzero `foreground` voxels.
pub fn percentile_clip(
    volume: &ScalarVolume,
    foreground: &LabelVolume,
    p_lo: f64,
    p_hi: f64,
) -> Result<(ScalarVolume, ClipReport)> {
    volume
        .geometry()
        .ensure_same_grid(foreground.geometry(), "percentile_clip")?;
    check_percentiles(p_lo, p_hi)?;

    let mut fg: Vec<f64> = volume
        .data()
        .iter()
        .zip(foreground.data().iter())
        .filter_map(|(&v, &m)| (m != 0).then_some(v))
        .collect();
    if fg.is_empty() {
        return Err(Error::EmptyMask("percentile foreground is empty".into()));
    }
    let lo = nearest_rank(&mut fg, p_lo);
    let hi = nearest_rank(&mut fg, p_hi);

    let clipped: Vec<f64> = volume.data().iter().map(|&v| v.clamp(lo, hi)).collect();
    let report = ClipReport {
        lo,
        hi,
        foreground_voxels: fg.len(),
    };
    Ok((ScalarVolume::new(volume.geometry().clone(), clipped)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::LabelVolume;

    fn geom(dims: [usize; 3]) -> VolumeGeometry {
        VolumeGeometry::isotropic(dims).unwrap()
    }

    #[test]
    fn full_mask_crop_is_identity() {
        let g = geom([5, 6, 7]);
        let n = g.voxel_count();
        let v = ScalarVolume::new(g.clone(), (0..n).map(|i| i as f64).collect()).unwrap();
        let mask = LabelVolume::new(g, vec![1; n]).unwrap();
        let (out, offset) = crop_to_lung_bbox(&v, &mask, 0).unwrap();
        assert_eq!(offset, [0, 0, 0]);
        assert_eq!(out, v);
    }

    #[test]
    fn point_mask_crop() {
        let g = geom([16, 16, 16]);
        let v = ScalarVolume::filled(g.clone(), 7.0).unwrap();
        let mut mask = vec![0u8; g.voxel_count()];
        mask[g.index(5, 6, 7)] = 1;
        let mask = LabelVolume::new(g, mask).unwrap();
        let (out, offset) = crop_to_lung_bbox(&v, &mask, 0).unwrap();
        assert_eq!(out.geometry().dims(), [1, 1, 1]);
        assert_eq!(offset, [5, 6, 7]);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let g = geom([4, 4, 4]);
        let v = ScalarVolume::filled(g.clone(), 0.0).unwrap();
        let mask = LabelVolume::zeros(g);
        assert!(matches!(
            crop_to_lung_bbox(&v, &mask, 0),
            Err(Error::EmptyMask(_))
        ));
    }

    #[test]
    fn geometry_mismatch_is_an_error() {
        let v = ScalarVolume::filled(geom([4, 4, 4]), 0.0).unwrap();
        let mask = LabelVolume::new(geom([4, 4, 5]), vec![1; 80]).unwrap();
        assert!(matches!(
            crop_to_lung_bbox(&v, &mask, 0),
            Err(Error::GeometryMismatch(_))
        ));
    }

    #[test]
    fn resample_constant_stays_constant() {
        let g = VolumeGeometry::new([6, 5, 4], [1.3, 0.7, 2.0], [0.0; 3]).unwrap();
        let v = ScalarVolume::filled(g, -412.5).unwrap();
        let out = resample_trilinear(&v, [0.726, 0.726, 0.8]).unwrap();
        assert!(out.data().iter().all(|&x| x == -412.5));
    }

    #[test]
    fn resample_dim_rule_reference_case() {
        // 7x5x9 at (1.1, 0.9, 1.3) mm onto (0.726, 0.726, 0.8) mm.
        let dims = resampled_dims([7, 5, 9], [1.1, 0.9, 1.3], [0.726, 0.726, 0.8]);
        assert_eq!(dims, [11, 6, 15]);
    }

    #[test]
    fn resample_exact_on_affine_field() {
        // v(x,y,z) = 2x + 3y - z in world mm is reproduced exactly by
        // trilinear interpolation away from the clamped border.
        let g = VolumeGeometry::new([9, 9, 9], [1.0, 1.0, 1.0], [2.0, -1.0, 0.0]).unwrap();
        let mut data = Vec::with_capacity(g.voxel_count());
        for k in 0..9 {
            for j in 0..9 {
                for i in 0..9 {
                    let w = g.world_of([i, j, k]);
                    data.push(2.0 * w[0] + 3.0 * w[1] - w[2]);
                }
            }
        }
        let v = ScalarVolume::new(g, data).unwrap();
        let out = resample_trilinear(&v, [0.5, 0.5, 0.5]).unwrap();
        let og = out.geometry();
        let od = og.dims();
        for k in 0..od[2] {
            for j in 0..od[1] {
                for i in 0..od[0] {
                    // stay inside the source grid: 0.5 * index <= 8
                    if i as f64 * 0.5 > 8.0 || j as f64 * 0.5 > 8.0 || k as f64 * 0.5 > 8.0 {
                        continue;
                    }
                    let w = og.world_of([i, j, k]);
                    let expected = 2.0 * w[0] + 3.0 * w[1] - w[2];
                    assert!(
                        (out.get(i, j, k) - expected).abs() <= 1e-5,
                        "voxel ({i},{j},{k}): {} vs {expected}",
                        out.get(i, j, k)
                    );
                }
            }
        }
    }

    #[test]
    fn resample_nearest_keeps_label_set() {
        let g = VolumeGeometry::new([8, 8, 8], [1.0; 3], [0.0; 3]).unwrap();
        let data: Vec<u8> = (0..g.voxel_count()).map(|i| (i % 3) as u8).collect();
        let v = LabelVolume::new(g, data).unwrap();
        let out = resample_nearest(&v, [0.6, 1.7, 0.9]).unwrap();
        let mut seen = [false; 3];
        for &l in out.data() {
            seen[l as usize] = true;
        }
        // every output label existed in the input (input has all of 0,1,2)
        assert!(seen.iter().any(|&s| s));
    }

    #[test]
    fn nonpositive_target_spacing_rejected() {
        let g = geom([4, 4, 4]);
        let v = ScalarVolume::filled(g.clone(), 0.0).unwrap();
        assert!(matches!(
            resample_trilinear(&v, [0.0, 1.0, 1.0]),
            Err(Error::Config(_))
        ));
        let l = LabelVolume::zeros(g);
        assert!(matches!(
            resample_nearest(&l, [1.0, -1.0, 1.0]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn percentile_clip_constant_volume() {
        let g = geom([4, 4, 4]);
        let v = ScalarVolume::filled(g.clone(), 42.0).unwrap();
        let mask = LabelVolume::new(g, vec![1; 64]).unwrap();
        let (out, report) = percentile_clip(&v, &mask, 0.5, 99.5).unwrap();
        assert_eq!(out, v);
        assert_eq!(report.lo, 42.0);
        assert_eq!(report.hi, 42.0);
    }

    #[test]
    fn percentile_clip_ramp_reference_case() {
        // Foreground intensities exactly 0..999: nearest-rank lo/hi at
        // (0.5, 99.5) are ranks 5 and 995, i.e. values 4 and 994.
        let g = geom([10, 10, 10]);
        let v = ScalarVolume::new(g.clone(), (0..1000).map(|i| i as f64).collect()).unwrap();
        let mask = LabelVolume::new(g, vec![1; 1000]).unwrap();
        let (out, report) = percentile_clip(&v, &mask, 0.5, 99.5).unwrap();
        assert_eq!(report.lo, 4.0);
        assert_eq!(report.hi, 994.0);
        assert!(out.data().iter().all(|&x| (4.0..=994.0).contains(&x)));
        assert_eq!(out.data()[500], 500.0);
    }

    #[test]
    fn percentile_args_validated() {
        let g = geom([2, 2, 2]);
        let v = ScalarVolume::filled(g.clone(), 0.0).unwrap();
        let mask = LabelVolume::new(g, vec![1; 8]).unwrap();
        assert!(matches!(
            percentile_clip(&v, &mask, 99.5, 0.5),
            Err(Error::Config(_))
        ));
    }
}
