//! Shared test oracles. Everything here is deliberately naive and
//! independent of the implementation paths it checks: BFS instead of
//! union-find, full sorts instead of selection, brute-force scans instead
//! of incremental bookkeeping.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vesselseg_core::geometry::VolumeGeometry;
use vesselseg_core::volume::{LabelVolume, ProbVolume, ScalarVolume, NUM_CLASSES};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Flood-fill (BFS) connected-component labeling under 26-connectivity,
/// ids dense from 1 in first-encounter raster order.
pub fn bfs_components(data: &[u8], g: &VolumeGeometry, label: u8) -> Vec<u32> {
    let dims = g.dims();
    let mut field = vec![0u32; data.len()];
    let mut next = 0u32;
    let mut queue = Vec::new();
    for start in 0..data.len() {
        if data[start] != label || field[start] != 0 {
            continue;
        }
        next += 1;
        field[start] = next;
        queue.clear();
        queue.push(start);
        while let Some(idx) = queue.pop() {
            let [i, j, k] = g.coords(idx);
            for dz in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 && dz == 0 {
                            continue;
                        }
                        let (x, y, z) = (i as i64 + dx, j as i64 + dy, k as i64 + dz);
                        if x < 0
                            || y < 0
                            || z < 0
                            || x as usize >= dims[0]
                            || y as usize >= dims[1]
                            || z as usize >= dims[2]
                        {
                            continue;
                        }
                        let nidx = g.index(x as usize, y as usize, z as usize);
                        if data[nidx] == label && field[nidx] == 0 {
                            field[nidx] = next;
                            queue.push(nidx);
                        }
                    }
                }
            }
        }
    }
    field
}

/// Number of 26-connected components of the nonzero voxels.
pub fn component_count(mask: &LabelVolume) -> u32 {
    let binary: Vec<u8> = mask.data().iter().map(|&v| u8::from(v != 0)).collect();
    *bfs_components(&binary, mask.geometry(), 1)
        .iter()
        .max()
        .unwrap_or(&0)
}

/// Brute-force nearest-rank percentile clip: full sort, ceil-rank pick,
/// plain clamp.
pub fn percentile_clip_oracle(
    volume: &ScalarVolume,
    foreground: &LabelVolume,
    p_lo: f64,
    p_hi: f64,
) -> Vec<f64> {
    let mut fg: Vec<f64> = volume
        .data()
        .iter()
        .zip(foreground.data())
        .filter_map(|(&v, &m)| (m != 0).then_some(v))
        .collect();
    fg.sort_by(f64::total_cmp);
    let n = fg.len();
    let rank = |p: f64| -> usize { ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n) };
    let lo = fg[rank(p_lo) - 1];
    let hi = fg[rank(p_hi) - 1];
    volume.data().iter().map(|&v| v.clamp(lo, hi)).collect()
}

/// Brute-force bounding box of nonzero voxels: (lower, upper) inclusive.
pub fn bbox_oracle(mask: &LabelVolume) -> Option<([usize; 3], [usize; 3])> {
    let g = mask.geometry();
    let mut lo = g.dims();
    let mut hi = [0usize; 3];
    let mut any = false;
    for (idx, &v) in mask.data().iter().enumerate() {
        if v != 0 {
            any = true;
            let c = g.coords(idx);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
    }
    any.then_some((lo, hi))
}

/// Unweighted soft Dice loss of the reference formulation, coded directly.
pub fn unweighted_soft_dice_oracle(pred: &ProbVolume, gt: &LabelVolume, eps: f64) -> f64 {
    let n = gt.geometry().voxel_count();
    let mut dice_sum = 0.0;
    for c in 1..=2usize {
        let mut inter = 0.0;
        let mut psum = 0.0;
        let mut gsum = 0.0;
        for v in 0..n {
            let p = pred.prob(c, v);
            let g = f64::from(gt.data()[v] as usize == c);
            inter += p * g;
            psum += p;
            gsum += g;
        }
        dice_sum += (2.0 * inter + eps) / (psum + gsum + eps);
    }
    1.0 - dice_sum / 2.0
}

/// Weighted soft Dice evaluated by an independent direct pass.
pub fn weighted_soft_dice_oracle(
    pred: &ProbVolume,
    gt: &LabelVolume,
    w: &[f64],
    eps: f64,
) -> f64 {
    let n = gt.geometry().voxel_count();
    let mut dice_sum = 0.0;
    for c in 1..=2usize {
        let mut inter = 0.0;
        let mut psum = 0.0;
        let mut gsum = 0.0;
        for v in 0..n {
            let p = pred.prob(c, v);
            let g = f64::from(gt.data()[v] as usize == c);
            inter += w[v] * p * g;
            psum += w[v] * p;
            gsum += w[v] * g;
        }
        dice_sum += (2.0 * inter + eps) / (psum + gsum + eps);
    }
    1.0 - dice_sum / 2.0
}

/// Central finite difference of `f` in one probability entry, plus a kink
/// measure (the discrete second difference): large values flag ties and
/// relu corners where one-sided derivatives differ and the comparison is
/// meaningless.
pub fn finite_difference<F: Fn(&ProbVolume) -> f64>(
    f: &F,
    base: &ProbVolume,
    entry: usize,
    eps: f64,
) -> (f64, f64) {
    let mut plus = base.data().to_vec();
    plus[entry] += eps;
    let mut minus = base.data().to_vec();
    minus[entry] -= eps;
    let geometry = base.geometry().clone();
    let f_plus = f(&ProbVolume::new_raw(geometry.clone(), plus).unwrap());
    let f_minus = f(&ProbVolume::new_raw(geometry.clone(), minus).unwrap());
    let f_base = f(base);
    let fd = (f_plus - f_minus) / (2.0 * eps);
    let kink = (f_plus + f_minus - 2.0 * f_base).abs();
    (fd, kink)
}

/// 26-neighborhood dilation of a binary mask.
pub fn dilate26(mask: &LabelVolume) -> LabelVolume {
    let g = mask.geometry();
    let dims = g.dims();
    let mut out = mask.data().to_vec();
    for (idx, &v) in mask.data().iter().enumerate() {
        if v == 0 {
            continue;
        }
        let [i, j, k] = g.coords(idx);
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (x, y, z) = (i as i64 + dx, j as i64 + dy, k as i64 + dz);
                    if x >= 0
                        && y >= 0
                        && z >= 0
                        && (x as usize) < dims[0]
                        && (y as usize) < dims[1]
                        && (z as usize) < dims[2]
                    {
                        out[g.index(x as usize, y as usize, z as usize)] = 1;
                    }
                }
            }
        }
    }
    LabelVolume::new(g.clone(), out).unwrap()
}

/// Chebyshev distance from a voxel to the nearest voxel of a set.
pub fn chebyshev_to_set(g: &VolumeGeometry, idx: usize, set: &[usize]) -> usize {
    let c = g.coords(idx);
    set.iter()
        .map(|&s| {
            let sc = g.coords(s);
            (0..3)
                .map(|a| (c[a] as i64 - sc[a] as i64).unsigned_abs() as usize)
                .max()
                .unwrap()
        })
        .min()
        .expect("nonempty set")
}

/// Random 3-class label volume with roughly `fill` nonzero fraction.
pub fn random_labels(rng: &mut ChaCha8Rng, dims: [usize; 3], fill: f64) -> LabelVolume {
    let g = VolumeGeometry::isotropic(dims).unwrap();
    let data: Vec<u8> = (0..g.voxel_count())
        .map(|_| {
            if rng.gen_range(0.0..1.0) < fill {
                rng.gen_range(1..=2u8)
            } else {
                0
            }
        })
        .collect();
    LabelVolume::new(g, data).unwrap()
}

/// Random binary mask.
pub fn random_mask(rng: &mut ChaCha8Rng, dims: [usize; 3], fill: f64) -> LabelVolume {
    let g = VolumeGeometry::isotropic(dims).unwrap();
    let data: Vec<u8> = (0..g.voxel_count())
        .map(|_| u8::from(rng.gen_range(0.0..1.0) < fill))
        .collect();
    LabelVolume::new(g, data).unwrap()
}

/// Random probability volume on the simplex.
pub fn random_prob(rng: &mut ChaCha8Rng, g: &VolumeGeometry) -> ProbVolume {
    let n = g.voxel_count();
    let mut data = vec![0.0; NUM_CLASSES * n];
    for v in 0..n {
        let mut raw = [0.0f64; NUM_CLASSES];
        let mut sum = 0.0;
        for r in &mut raw {
            *r = rng.gen_range(0.05..1.0);
            sum += *r;
        }
        for c in 0..NUM_CLASSES {
            data[c * n + v] = raw[c] / sum;
        }
    }
    ProbVolume::new(g.clone(), data).unwrap()
}

/// Random scalar volume with values in [lo, hi).
pub fn random_scalar(
    rng: &mut ChaCha8Rng,
    dims: [usize; 3],
    lo: f64,
    hi: f64,
) -> ScalarVolume {
    let g = VolumeGeometry::isotropic(dims).unwrap();
    let data: Vec<f64> = (0..g.voxel_count()).map(|_| rng.gen_range(lo..hi)).collect();
    ScalarVolume::new(g, data).unwrap()
}

/// Relative error with an absolute floor for near-zero expectations.
pub fn rel_err(actual: f64, expected: f64) -> f64 {
    (actual - expected).abs() / expected.abs().max(1e-8)
}
