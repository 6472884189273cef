//! Differentiable soft skeletonization by iterated soft morphology.
//!
//! One round computes `eroded = min-filter(img)` over the face
//! cross (center + 6 face neighbors), `opened = max-filter(eroded)` over
//! the full 3x3x3 box, accumulates the residual
//! `skel += relu(img - opened) * (1 - skel)` and continues with the eroded
//! image. Thin structures die under erosion, so their residual is captured
//! in the round where they disappear; after enough rounds `skel`
//! concentrates on the medial line. min/max and relu are piecewise linear,
//! so gradients flow through the arg-min/arg-max element; ties resolve to
//! the first element in a fixed scan order (center first, then -x, +x, -y,
//! +y, -z, +z for the cross, raster order for the box).

use crate::geometry::VolumeGeometry;

/// Fixed scan order for the erosion cross: center, then the face
/// neighbors.
const CROSS: [(i64, i64, i64); 7] = [
    (0, 0, 0),
    (-1, 0, 0),
    (1, 0, 0),
    (0, -1, 0),
    (0, 1, 0),
    (0, 0, -1),
    (0, 0, 1),
];

#[inline]
fn for_each_cross_neighbor(
    g: &VolumeGeometry,
    i: usize,
    j: usize,
    k: usize,
    mut f: impl FnMut(usize),
) {
    for (dx, dy, dz) in CROSS {
        let (x, y, z) = (i as i64 + dx, j as i64 + dy, k as i64 + dz);
        if g.contains(x, y, z) {
            f(g.index(x as usize, y as usize, z as usize));
        }
    }
}

#[inline]
fn for_each_box_neighbor(
    g: &VolumeGeometry,
    i: usize,
    j: usize,
    k: usize,
    mut f: impl FnMut(usize),
) {
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (x, y, z) = (i as i64 + dx, j as i64 + dy, k as i64 + dz);
                if g.contains(x, y, z) {
                    f(g.index(x as usize, y as usize, z as usize));
                }
            }
        }
    }
}

fn min_filter(src: &[f64], g: &VolumeGeometry, out: &mut [f64], src_idx: Option<&mut Vec<u32>>) {
    let dims = g.dims();
    let mut record = src_idx;
    let mut idx = 0;
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let mut best = f64::INFINITY;
                let mut best_idx = idx;
                for_each_cross_neighbor(g, i, j, k, |nidx| {
                    if src[nidx] < best {
                        best = src[nidx];
                        best_idx = nidx;
                    }
                });
                out[idx] = best;
                if let Some(rec) = record.as_deref_mut() {
                    rec[idx] = best_idx as u32;
                }
                idx += 1;
            }
        }
    }
}

fn max_filter(src: &[f64], g: &VolumeGeometry, out: &mut [f64], src_idx: Option<&mut Vec<u32>>) {
    let dims = g.dims();
    let mut record = src_idx;
    let mut idx = 0;
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = idx;
                for_each_box_neighbor(g, i, j, k, |nidx| {
                    if src[nidx] > best {
                        best = src[nidx];
                        best_idx = nidx;
                    }
                });
                out[idx] = best;
                if let Some(rec) = record.as_deref_mut() {
                    rec[idx] = best_idx as u32;
                }
                idx += 1;
            }
        }
    }
}

/// Forward pass without bookkeeping, for evaluation-only callers.
pub(crate) fn forward(p: &[f64], g: &VolumeGeometry, iters: usize) -> Vec<f64> {
    let n = p.len();
    let mut img = p.to_vec();
    let mut eroded = vec![0.0; n];
    let mut opened = vec![0.0; n];
    let mut skel = vec![0.0; n];
    for _ in 0..iters {
        min_filter(&img, g, &mut eroded, None);
        max_filter(&eroded, g, &mut opened, None);
        for i in 0..n {
            let d = (img[i] - opened[i]).max(0.0);
            skel[i] += d * (1.0 - skel[i]);
        }
        std::mem::swap(&mut img, &mut eroded);
    }
    skel
}

/// Everything the backward pass needs, recorded per round.
pub(crate) struct Tape {
    iters: usize,
    erode_src: Vec<Vec<u32>>,
    dilate_src: Vec<Vec<u32>>,
    active: Vec<Vec<bool>>,
    delta: Vec<Vec<f64>>,
    skel_before: Vec<Vec<f64>>,
    pub skel: Vec<f64>,
}

/// Forward pass recording the argmin/argmax provenance of every filter
/// output plus the relu masks and accumulator states.
pub(crate) fn forward_with_tape(p: &[f64], g: &VolumeGeometry, iters: usize) -> Tape {
    let n = p.len();
    let mut img = p.to_vec();
    let mut skel = vec![0.0; n];
    let mut tape = Tape {
        iters,
        erode_src: Vec::with_capacity(iters),
        dilate_src: Vec::with_capacity(iters),
        active: Vec::with_capacity(iters),
        delta: Vec::with_capacity(iters),
        skel_before: Vec::with_capacity(iters),
        skel: Vec::new(),
    };
    for _ in 0..iters {
        let mut eroded = vec![0.0; n];
        let mut opened = vec![0.0; n];
        let mut erode_src = vec![0u32; n];
        let mut dilate_src = vec![0u32; n];
        min_filter(&img, g, &mut eroded, Some(&mut erode_src));
        max_filter(&eroded, g, &mut opened, Some(&mut dilate_src));
        let mut active = vec![false; n];
        let mut delta = vec![0.0; n];
        tape.skel_before.push(skel.clone());
        for i in 0..n {
            let raw = img[i] - opened[i];
            if raw > 0.0 {
                active[i] = true;
                delta[i] = raw;
                skel[i] += raw * (1.0 - skel[i]);
            }
        }
        tape.erode_src.push(erode_src);
        tape.dilate_src.push(dilate_src);
        tape.active.push(active);
        tape.delta.push(delta);
        img = eroded;
    }
    tape.skel = skel;
    tape
}

/// Reverse pass: gradient of `sum_i upstream[i] * skel[i]` with respect to
/// the input field.
pub(crate) fn backward(tape: &Tape, upstream: &[f64]) -> Vec<f64> {
    let n = upstream.len();
    let mut g_skel = upstream.to_vec();
    // dL/d img_{iters}: the final eroded image is not used downstream.
    let mut g_img = vec![0.0; n];
    for r in (0..tape.iters).rev() {
        let mut g_eroded = vec![0.0; n];
        let mut g_img_round = vec![0.0; n];
        let (active, delta, skel_before) = (&tape.active[r], &tape.delta[r], &tape.skel_before[r]);
        for i in 0..n {
            // skel' = skel + delta * (1 - skel)
            let g_delta = if active[i] {
                g_skel[i] * (1.0 - skel_before[i])
            } else {
                0.0
            };
            g_skel[i] *= 1.0 - delta[i];
            // delta = relu(img - opened)
            g_img_round[i] += g_delta;
            g_eroded[tape.dilate_src[r][i] as usize] -= g_delta;
        }
        // img_{r+1} = eroded_r
        for i in 0..n {
            g_eroded[i] += g_img[i];
        }
        for i in 0..n {
            g_img_round[tape.erode_src[r][i] as usize] += g_eroded[i];
        }
        g_img = g_img_round;
    }
    g_img
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(dims: [usize; 3]) -> VolumeGeometry {
        VolumeGeometry::isotropic(dims).unwrap()
    }

    #[test]
    fn zero_field_stays_zero() {
        let g = geom([6, 6, 6]);
        let skel = forward(&vec![0.0; 216], &g, 5);
        assert!(skel.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn thin_line_is_its_own_skeleton() {
        let g = geom([16, 5, 5]);
        let mut p = vec![0.0; g.voxel_count()];
        for i in 2..14 {
            p[g.index(i, 2, 2)] = 1.0;
        }
        let skel = forward(&p, &g, 4);
        assert_eq!(skel, p);
    }

    #[test]
    fn values_stay_in_unit_interval() {
        let g = geom([8, 8, 8]);
        let p: Vec<f64> = (0..g.voxel_count())
            .map(|i| ((i * 2654435761) % 1000) as f64 / 999.0)
            .collect();
        let skel = forward(&p, &g, 6);
        assert!(skel.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn tape_forward_matches_plain_forward() {
        let g = geom([7, 6, 5]);
        let p: Vec<f64> = (0..g.voxel_count())
            .map(|i| ((i * 40503) % 977) as f64 / 976.0)
            .collect();
        let tape = forward_with_tape(&p, &g, 4);
        assert_eq!(tape.skel, forward(&p, &g, 4));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let g = geom([5, 5, 5]);
        let n = g.voxel_count();
        let p: Vec<f64> = (0..n).map(|i| ((i * 7919) % 601) as f64 / 600.0).collect();
        // loss = sum of squared skel entries; upstream = 2 * skel
        let loss = |field: &[f64]| -> f64 {
            forward(field, &g, 3).iter().map(|s| s * s).sum::<f64>()
        };
        let tape = forward_with_tape(&p, &g, 3);
        let upstream: Vec<f64> = tape.skel.iter().map(|s| 2.0 * s).collect();
        let grad = backward(&tape, &upstream);
        let eps = 1e-6;
        for &probe in &[0usize, 17, 62, 88, 124] {
            let mut plus = p.clone();
            plus[probe] += eps;
            let mut minus = p.clone();
            minus[probe] -= eps;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            // skip voxels sitting on a min/max tie or relu kink
            let kink = (loss(&plus) + loss(&minus) - 2.0 * loss(&p)).abs();
            if kink > 10.0 * eps {
                continue;
            }
            assert!(
                (grad[probe] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                "voxel {probe}: analytic {} vs fd {fd}",
                grad[probe]
            );
        }
    }
}
