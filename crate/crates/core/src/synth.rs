//! Synthetic vascular phantoms: branching tube geometry with exact analytic
//! centerlines, rasterized to label volumes.
//!
//! Phantoms stand in for clinical volumes in every test: the analytic axis
//! of each tube is the ground truth that skeletons, weight maps and metrics
//! are checked against. Generation is a deterministic function of the seed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;
use crate::skeleton::SkeletonVolume;
use crate::volume::{LabelVolume, VesselClass};

/// Length multiplier applied to child branches at each generation.
const LENGTH_DECAY: f64 = 0.8;
/// Half-angle (degrees) of the cone child directions are drawn from.
const BRANCH_CONE_DEG: f64 = 40.0;
/// Required clearance between artery and vein masks, in voxels.
const CLASS_SEPARATION_VOXELS: f64 = 2.0;
/// Attempts to re-draw a colliding or out-of-bounds child direction.
const PLACEMENT_RETRIES: usize = 24;
/// Dilation of the tube bounding box that forms the synthetic lung mask.
const LUNG_MARGIN_VOXELS: usize = 3;

/// One straight tube segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    /// World-mm start point.
    pub start: [f64; 3],
    /// Direction; normalized internally.
    pub direction: [f64; 3],
    /// Length in mm.
    pub length: f64,
    /// Radius in mm.
    pub radius: f64,
    pub class: VesselClass,
}

/// Phantom description: explicit root branches plus optional random
/// binary branching grown from their tips.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub seed: u64,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub branches: Vec<Branch>,
    /// Depth of random binary branching below each root (0 = roots only).
    pub generations: u32,
    /// Radius multiplier per generation, in (0, 1].
    pub radius_decay: f64,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.branches.is_empty() {
            return Err(Error::Config("phantom needs at least one branch".into()));
        }
        if !(self.radius_decay > 0.0 && self.radius_decay <= 1.0) {
            return Err(Error::Config(format!(
                "radius_decay must be in (0, 1], got {}",
                self.radius_decay
            )));
        }
        for (i, b) in self.branches.iter().enumerate() {
            if b.radius < 0.0 || !b.radius.is_finite() {
                return Err(Error::Config(format!("branch {i}: radius must be >= 0")));
            }
            if !(b.length > 0.0) {
                return Err(Error::Config(format!("branch {i}: length must be > 0")));
            }
            if norm(b.direction) == 0.0 {
                return Err(Error::Config(format!("branch {i}: zero direction")));
            }
        }
        VolumeGeometry::new(self.dims, self.spacing, [0.0; 3]).map(|_| ())
    }

    pub fn geometry(&self) -> Result<VolumeGeometry> {
        VolumeGeometry::new(self.dims, self.spacing, [0.0; 3])
    }

    /// Serialize as the `PHANTOM 1` text document accepted by the CLI.
    pub fn to_text(&self) -> String {
        let mut out = String::from("PHANTOM 1\n");
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!(
            "dims = {} {} {}\n",
            self.dims[0], self.dims[1], self.dims[2]
        ));
        out.push_str(&format!(
            "spacing = {} {} {}\n",
            self.spacing[0], self.spacing[1], self.spacing[2]
        ));
        out.push_str(&format!("generations = {}\n", self.generations));
        out.push_str(&format!("radius_decay = {}\n", self.radius_decay));
        for b in &self.branches {
            out.push_str(&format!(
                "branch = {} {} {}  {} {} {}  {}  {}  {}\n",
                b.start[0],
                b.start[1],
                b.start[2],
                b.direction[0],
                b.direction[1],
                b.direction[2],
                b.length,
                b.radius,
                b.class.name()
            ));
        }
        out
    }

    /// Parse the `PHANTOM 1` text document.
    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::Config(format!("phantom spec: {reason}"));
        let mut lines = text.lines();
        match lines.next() {
            Some(first) if first.trim() == "PHANTOM 1" => {}
            other => return Err(bad(format!("first line is {other:?}, expected `PHANTOM 1`"))),
        }
        let mut spec = PhantomSpec {
            seed: 0,
            dims: [0; 3],
            spacing: [1.0; 3],
            branches: Vec::new(),
            generations: 0,
            radius_decay: 1.0,
        };
        for line in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed line `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let nums = || -> Result<Vec<f64>> {
                value
                    .split_whitespace()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| bad(format!("cannot parse `{t}` in `{key}`")))
                    })
                    .collect()
            };
            match key {
                "seed" => {
                    spec.seed = value
                        .parse()
                        .map_err(|_| bad(format!("cannot parse seed `{value}`")))?
                }
                "dims" => {
                    let v = nums()?;
                    if v.len() != 3 {
                        return Err(bad("dims needs 3 values".into()));
                    }
                    spec.dims = [v[0] as usize, v[1] as usize, v[2] as usize];
                }
                "spacing" => {
                    let v = nums()?;
                    if v.len() != 3 {
                        return Err(bad("spacing needs 3 values".into()));
                    }
                    spec.spacing = [v[0], v[1], v[2]];
                }
                "generations" => {
                    spec.generations = value
                        .parse()
                        .map_err(|_| bad(format!("cannot parse generations `{value}`")))?
                }
                "radius_decay" => {
                    spec.radius_decay = value
                        .parse()
                        .map_err(|_| bad(format!("cannot parse radius_decay `{value}`")))?
                }
                "branch" => {
                    let mut tokens: Vec<&str> = value.split_whitespace().collect();
                    if tokens.len() != 9 {
                        return Err(bad(format!(
                            "branch needs 9 fields (start xyz, direction xyz, length, radius, class), got {}",
                            tokens.len()
                        )));
                    }
                    let class = match tokens.pop().unwrap() {
                        "artery" | "1" => VesselClass::Artery,
                        "vein" | "2" => VesselClass::Vein,
                        other => return Err(bad(format!("unknown class `{other}`"))),
                    };
                    let vals: Result<Vec<f64>> = tokens
                        .iter()
                        .map(|t| {
                            t.parse::<f64>()
                                .map_err(|_| bad(format!("cannot parse `{t}` in branch")))
                        })
                        .collect();
                    let v = vals?;
                    spec.branches.push(Branch {
                        start: [v[0], v[1], v[2]],
                        direction: [v[3], v[4], v[5]],
                        length: v[6],
                        radius: v[7],
                        class,
                    });
                }
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Rasterization of one tube: the solid mask plus the analytic axis voxels.
#[derive(Debug, Clone)]
pub struct RasterizedTube {
    /// Flat indices of voxels whose world center is within `radius` of the
    /// segment.
    pub mask: Vec<usize>,
    /// Flat indices of voxels whose center is within half a voxel of the
    /// segment (distance measured in voxel units).
    pub axis: Vec<usize>,
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = norm(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Closest point on the segment `start + t*dir, t in [0, length]` to `p`.
fn closest_on_segment(p: [f64; 3], start: [f64; 3], dir: [f64; 3], length: f64) -> [f64; 3] {
    let d = [p[0] - start[0], p[1] - start[1], p[2] - start[2]];
    let t = (d[0] * dir[0] + d[1] * dir[1] + d[2] * dir[2]).clamp(0.0, length);
    [
        start[0] + t * dir[0],
        start[1] + t * dir[1],
        start[2] + t * dir[2],
    ]
}

/// Rasterize a finite tube into a voxel grid. A voxel belongs to the mask
/// iff the distance from its world center to the segment is <= radius.
/// Returns an empty mask (with a warning) for segments entirely outside the
/// volume.
pub fn rasterize_tube(
    start: [f64; 3],
    direction: [f64; 3],
    length: f64,
    radius: f64,
    geometry: &VolumeGeometry,
) -> Result<RasterizedTube> {
    if !(length > 0.0) || radius < 0.0 {
        return Err(Error::Config(format!(
            "tube needs length > 0 and radius >= 0, got {length}/{radius}"
        )));
    }
    if norm(direction) == 0.0 {
        return Err(Error::Config("tube direction must be nonzero".into()));
    }
    let dir = normalize(direction);
    let end = [
        start[0] + length * dir[0],
        start[1] + length * dir[1],
        start[2] + length * dir[2],
    ];

    let dims = geometry.dims();
    let spacing = geometry.spacing();
    let origin = geometry.origin();
    let min_spacing = spacing[0].min(spacing[1]).min(spacing[2]);
    // Scan window: tube bounding box padded by one voxel.
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let pad = radius + spacing[a];
        let w_lo = start[a].min(end[a]) - pad;
        let w_hi = start[a].max(end[a]) + pad;
        let v_lo = ((w_lo - origin[a]) / spacing[a]).floor().max(0.0) as usize;
        let v_hi = ((w_hi - origin[a]) / spacing[a]).ceil().min((dims[a] - 1) as f64);
        if v_hi < 0.0 || v_lo > dims[a] - 1 {
            log::warn!("tube at {start:?} lies outside the volume; empty rasterization");
            return Ok(RasterizedTube {
                mask: Vec::new(),
                axis: Vec::new(),
            });
        }
        lo[a] = v_lo.min(dims[a] - 1);
        hi[a] = v_hi as usize;
    }

    let mut mask = Vec::new();
    let mut axis = Vec::new();
    let axis_limit = 0.5 * min_spacing; // half a voxel, conservatively
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                let w = geometry.world_of([i, j, k]);
                let q = closest_on_segment(w, start, dir, length);
                let d = [w[0] - q[0], w[1] - q[1], w[2] - q[2]];
                let dist = norm(d);
                if dist <= radius {
                    mask.push(geometry.index(i, j, k));
                }
                // Axis membership in voxel units handles anisotropy.
                let dv = norm([d[0] / spacing[0], d[1] / spacing[1], d[2] / spacing[2]]);
                if dv * min_spacing <= axis_limit {
                    axis.push(geometry.index(i, j, k));
                }
            }
        }
    }
    if mask.is_empty() && axis.is_empty() {
        log::warn!("tube at {start:?} produced no voxels");
    }
    Ok(RasterizedTube { mask, axis })
}

/// Output of [`generate_tree`].
#[derive(Debug, Clone)]
pub struct GeneratedPhantom {
    pub labels: LabelVolume,
    /// Analytic centerlines per class: `[artery, vein]`.
    pub centerlines: [SkeletonVolume; 2],
    /// Synthetic lung mask: the dilated bounding box of all tubes.
    pub lung_mask: LabelVolume,
}

impl GeneratedPhantom {
    pub fn centerline(&self, class: VesselClass) -> &SkeletonVolume {
        match class {
            VesselClass::Artery => &self.centerlines[0],
            VesselClass::Vein => &self.centerlines[1],
        }
    }
}

/// Draw a unit vector uniformly from the spherical cap of half-angle
/// `BRANCH_CONE_DEG` around `parent`.
fn draw_cone_direction(rng: &mut ChaCha8Rng, parent: [f64; 3]) -> [f64; 3] {
    let cos_max = BRANCH_CONE_DEG.to_radians().cos();
    let cos_theta = cos_max + (1.0 - cos_max) * rng.gen_range(0.0..1.0);
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);

    // Orthonormal basis (u, v, parent).
    let pick = if parent[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let u = normalize([
        parent[1] * pick[2] - parent[2] * pick[1],
        parent[2] * pick[0] - parent[0] * pick[2],
        parent[0] * pick[1] - parent[1] * pick[0],
    ]);
    let v = [
        parent[1] * u[2] - parent[2] * u[1],
        parent[2] * u[0] - parent[0] * u[2],
        parent[0] * u[1] - parent[1] * u[0],
    ];
    normalize([
        sin_theta * (phi.cos() * u[0] + phi.sin() * v[0]) + cos_theta * parent[0],
        sin_theta * (phi.cos() * u[1] + phi.sin() * v[1]) + cos_theta * parent[1],
        sin_theta * (phi.cos() * u[2] + phi.sin() * v[2]) + cos_theta * parent[2],
    ])
}

fn world_bounds_ok(geometry: &VolumeGeometry, point: [f64; 3], clearance: f64) -> bool {
    let dims = geometry.dims();
    let spacing = geometry.spacing();
    let origin = geometry.origin();
    (0..3).all(|a| {
        let lo = origin[a] + clearance;
        let hi = origin[a] + (dims[a] - 1) as f64 * spacing[a] - clearance;
        point[a] >= lo && point[a] <= hi
    })
}

fn class_slot(class: VesselClass) -> usize {
    match class {
        VesselClass::Artery => 0,
        VesselClass::Vein => 1,
    }
}

/// Grow the phantom described by `spec`. Deterministic in the seed. Child
/// branches inherit 80% of the parent length and `radius_decay` of its
/// radius; cross-class tubes are kept at least two voxels apart, retrying
/// the direction draw a bounded number of times before failing.
pub fn generate_tree(spec: &PhantomSpec) -> Result<GeneratedPhantom> {
    spec.validate()?;
    let geometry = spec.geometry()?;
    let min_spacing = spec.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    let n = geometry.voxel_count();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut class_mask: [Vec<u8>; 2] = [vec![0u8; n], vec![0u8; n]];
    let mut class_axis: [Vec<u8>; 2] = [vec![0u8; n], vec![0u8; n]];

    struct Pending {
        start: [f64; 3],
        dir: [f64; 3],
        length: f64,
        radius: f64,
        class: VesselClass,
        generation: u32,
        name: String,
    }

    let mut queue: Vec<Pending> = spec
        .branches
        .iter()
        .enumerate()
        .map(|(i, b)| Pending {
            start: b.start,
            dir: normalize(b.direction),
            length: b.length,
            radius: b.radius,
            class: b.class,
            generation: 0,
            name: format!("root {i}"),
        })
        .collect();

    // Breadth-first placement keeps the rng draw order independent of
    // rasterization details.
    let mut head = 0;
    while head < queue.len() {
        let Pending {
            start,
            dir,
            length,
            radius,
            class,
            generation,
            name,
        } = {
            let p = &queue[head];
            Pending {
                start: p.start,
                dir: p.dir,
                length: p.length,
                radius: p.radius,
                class: p.class,
                generation: p.generation,
                name: p.name.clone(),
            }
        };
        head += 1;

        let slot = class_slot(class);
        let other = 1 - slot;
        let separation = radius + CLASS_SEPARATION_VOXELS * min_spacing;

        let mut placed_dir: Option<[f64; 3]> = None;
        let mut attempt_dir = dir;
        for attempt in 0..=PLACEMENT_RETRIES {
            let end = [
                start[0] + length * attempt_dir[0],
                start[1] + length * attempt_dir[1],
                start[2] + length * attempt_dir[2],
            ];
            let clearance = radius + min_spacing;
            let in_bounds =
                world_bounds_ok(&geometry, start, clearance) && world_bounds_ok(&geometry, end, clearance);
            let collision = if in_bounds {
                let guard = rasterize_tube(start, attempt_dir, length, separation, &geometry)?;
                guard.mask.iter().any(|&idx| class_mask[other][idx] != 0)
            } else {
                true
            };
            if !collision {
                placed_dir = Some(attempt_dir);
                break;
            }
            if generation == 0 {
                // Explicit roots are not re-drawn; a bad root is an error.
                break;
            }
            if attempt == PLACEMENT_RETRIES {
                break;
            }
            attempt_dir = draw_cone_direction(&mut rng, dir);
        }
        let final_dir = placed_dir.ok_or_else(|| {
            Error::Generation(format!(
                "could not place branch `{name}` (class {}) within bounds and clearance",
                class.name()
            ))
        })?;

        let tube = rasterize_tube(start, final_dir, length, radius, &geometry)?;
        for &idx in &tube.mask {
            class_mask[slot][idx] = 1;
        }
        for &idx in &tube.axis {
            class_axis[slot][idx] = 1;
        }

        if generation < spec.generations {
            let end = [
                start[0] + length * final_dir[0],
                start[1] + length * final_dir[1],
                start[2] + length * final_dir[2],
            ];
            for child in 0..2 {
                let child_dir = draw_cone_direction(&mut rng, final_dir);
                queue.push(Pending {
                    start: end,
                    dir: child_dir,
                    length: length * LENGTH_DECAY,
                    radius: radius * spec.radius_decay,
                    class,
                    generation: generation + 1,
                    name: format!("{name}.{child}"),
                });
            }
        }
    }

    // Merge classes; construction guarantees no cross-class overlap.
    let mut labels = vec![0u8; n];
    for idx in 0..n {
        if class_mask[0][idx] != 0 {
            labels[idx] = 1;
        } else if class_mask[1][idx] != 0 {
            labels[idx] = 2;
        }
    }
    let labels = LabelVolume::new(geometry.clone(), labels)?;

    let centerlines = [
        SkeletonVolume::from_binary(&LabelVolume::new(
            geometry.clone(),
            std::mem::take(&mut class_axis[0]),
        )?)?,
        SkeletonVolume::from_binary(&LabelVolume::new(
            geometry.clone(),
            std::mem::take(&mut class_axis[1]),
        )?)?,
    ];

    // Lung mask: bounding box of all tubes dilated by a margin.
    let (lower, box_dims) = crate::preprocess::mask_bounding_box(&labels, LUNG_MARGIN_VOXELS)
        .map_err(|_| Error::Generation("phantom rasterized to an empty volume".into()))?;
    let mut lung = vec![0u8; n];
    for k in lower[2]..lower[2] + box_dims[2] {
        for j in lower[1]..lower[1] + box_dims[1] {
            let row = geometry.index(lower[0], j, k);
            lung[row..row + box_dims[0]].fill(1);
        }
    }
    let lung_mask = LabelVolume::new(geometry, lung)?;

    Ok(GeneratedPhantom {
        labels,
        centerlines,
        lung_mask,
    })
}
