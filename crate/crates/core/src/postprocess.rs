//! Artery/vein repair: outlier removal and iterative reclassification of
//! small disconnected components.
//!
//! The repair pass (1) computes 26-connected components per vessel class,
//! (2) clears components that lie entirely outside the lung mask, (3) picks
//! the largest artery and vein components, then iterates: (4) small artery
//! components touching the largest vein component become vein, (5) small
//! vein components touching the largest artery component become artery,
//! (6) components and adjacency are recomputed and the loop repeats until a
//! pass changes nothing. Relabels are applied in ascending component id and
//! qualification is evaluated against the component structure at the start
//! of the iteration, so results are independent of traversal details.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::VolumeGeometry;
use crate::volume::{LabelVolume, VesselClass};

/// Repair parameters. The reference size threshold is 800 voxels;
/// connectivity is fixed at 26.
#[derive(Debug, Clone, PartialEq)]
pub struct RepairConfig {
    /// Components strictly smaller than this may be reclassified.
    pub size_threshold: usize,
    /// Safety cap on merge iterations.
    pub max_iterations: u32,
    /// Keep small components that never merge into either largest component
    /// (when false they are cleared to background after convergence).
    pub keep_unmerged_small: bool,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self {
            size_threshold: 800,
            max_iterations: 64,
            keep_unmerged_small: true,
        }
    }
}

impl RepairConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size_threshold < 1 {
            return Err(Error::Config("size_threshold must be >= 1".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// One connected component of a vessel class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentInfo {
    /// Dense id, starting at 1, in first-encounter raster order.
    pub id: u32,
    pub class: VesselClass,
    pub voxel_count: usize,
    /// Whether any voxel of the component lies inside the lung mask.
    /// `false` when the table was built without a lung mask.
    pub inside_lung_any: bool,
    /// Ids of components of the other class 26-adjacent to this one.
    /// Same-class components are never adjacent (they would be one
    /// component), and the set is empty for single-class tables.
    pub touches: BTreeSet<u32>,
}

/// Table of connected components plus the per-voxel component-id field
/// (0 = no component).
#[derive(Debug, Clone)]
pub struct ComponentTable {
    pub components: Vec<ComponentInfo>,
    pub id_field: Vec<u32>,
}

impl ComponentTable {
    pub fn component(&self, id: u32) -> &ComponentInfo {
        &self.components[(id - 1) as usize]
    }

    /// Largest component of a class; ties broken by smaller id.
    pub fn largest_of_class(&self, class: VesselClass) -> Option<&ComponentInfo> {
        self.components
            .iter()
            .filter(|c| c.class == class)
            .max_by(|a, b| a.voxel_count.cmp(&b.voxel_count).then(b.id.cmp(&a.id)))
    }
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new() -> Self {
        Self { parent: Vec::new() }
    }

    fn make_set(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins; keeps roots stable under permutations.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Raster-prior 26-neighborhood offsets: all of dz = -1, then dz = 0 with
/// dy = -1, then (-1, 0, 0).
const PRIOR_NEIGHBORS: [(i64, i64, i64); 13] = [
    (-1, -1, -1),
    (0, -1, -1),
    (1, -1, -1),
    (-1, 0, -1),
    (0, 0, -1),
    (1, 0, -1),
    (-1, 1, -1),
    (0, 1, -1),
    (1, 1, -1),
    (-1, -1, 0),
    (0, -1, 0),
    (1, -1, 0),
    (-1, 0, 0),
];

/// Two-pass union-find labeling of voxels equal to `label` under
/// 26-connectivity. Returns (per-voxel dense id field with 0 outside the
/// class, per-id voxel counts). Ids are dense from 1 in first-encounter
/// raster order.
fn label_components(data: &[u8], g: &VolumeGeometry, label: u8) -> (Vec<u32>, Vec<usize>) {
    let dims = g.dims();
    let mut provisional = vec![0u32; data.len()]; // 0 = none, else id+1
    let mut uf = UnionFind::new();

    let mut idx = 0;
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                if data[idx] == label {
                    let mut assigned: Option<u32> = None;
                    for (dx, dy, dz) in PRIOR_NEIGHBORS {
                        let (x, y, z) = (i as i64 + dx, j as i64 + dy, k as i64 + dz);
                        if g.contains(x, y, z) {
                            let p = provisional[g.index(x as usize, y as usize, z as usize)];
                            if p != 0 {
                                match assigned {
                                    None => assigned = Some(p - 1),
                                    Some(a) => uf.union(a, p - 1),
                                }
                            }
                        }
                    }
                    let set = assigned.unwrap_or_else(|| uf.make_set());
                    provisional[idx] = set + 1;
                }
                idx += 1;
            }
        }
    }

    // Second pass: roots -> dense ids in first-encounter raster order.
    let mut root_to_id = vec![0u32; uf.parent.len()];
    let mut counts: Vec<usize> = Vec::new();
    let mut field = vec![0u32; data.len()];
    for (idx, &p) in provisional.iter().enumerate() {
        if p != 0 {
            let root = uf.find(p - 1) as usize;
            if root_to_id[root] == 0 {
                counts.push(0);
                root_to_id[root] = counts.len() as u32;
            }
            let id = root_to_id[root];
            counts[(id - 1) as usize] += 1;
            field[idx] = id;
        }
    }
    (field, counts)
}

/// Connected components of one vessel class under 26-connectivity.
pub fn connected_components(labels: &LabelVolume, class: VesselClass) -> ComponentTable {
    let (id_field, counts) = label_components(labels.data(), labels.geometry(), class.label());
    let components = counts
        .into_iter()
        .enumerate()
        .map(|(i, voxel_count)| ComponentInfo {
            id: (i + 1) as u32,
            class,
            voxel_count,
            inside_lung_any: false,
            touches: BTreeSet::new(),
        })
        .collect();
    ComponentTable {
        components,
        id_field,
    }
}

/// Components of both classes in one table: artery ids first, then vein
/// ids, dense from 1. Fills lung flags and cross-class adjacency.
pub fn build_component_table(
    labels: &LabelVolume,
    lung_mask: &LabelVolume,
) -> Result<ComponentTable> {
    labels
        .geometry()
        .ensure_same_grid(lung_mask.geometry(), "component table")?;
    let g = labels.geometry();
    let data = labels.data();
    let (a_field, a_counts) = label_components(data, g, 1);
    let (v_field, v_counts) = label_components(data, g, 2);
    let offset = a_counts.len() as u32;

    let mut components: Vec<ComponentInfo> = Vec::with_capacity(a_counts.len() + v_counts.len());
    for (i, &voxel_count) in a_counts.iter().enumerate() {
        components.push(ComponentInfo {
            id: (i + 1) as u32,
            class: VesselClass::Artery,
            voxel_count,
            inside_lung_any: false,
            touches: BTreeSet::new(),
        });
    }
    for (i, &voxel_count) in v_counts.iter().enumerate() {
        components.push(ComponentInfo {
            id: offset + (i + 1) as u32,
            class: VesselClass::Vein,
            voxel_count,
            inside_lung_any: false,
            touches: BTreeSet::new(),
        });
    }

    let mut id_field = vec![0u32; data.len()];
    for idx in 0..data.len() {
        if a_field[idx] != 0 {
            id_field[idx] = a_field[idx];
        } else if v_field[idx] != 0 {
            id_field[idx] = offset + v_field[idx];
        }
    }

    // Lung flags and cross-class adjacency in one sweep.
    let dims = g.dims();
    let lung = lung_mask.data();
    let mut idx = 0;
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let id = id_field[idx];
                if id != 0 {
                    if lung[idx] != 0 {
                        components[(id - 1) as usize].inside_lung_any = true;
                    }
                    if a_field[idx] != 0 {
                        // Scan for vein neighbors from artery voxels only;
                        // adjacency is symmetric.
                        for dz in -1i64..=1 {
                            for dy in -1i64..=1 {
                                for dx in -1i64..=1 {
                                    let (x, y, z) =
                                        (i as i64 + dx, j as i64 + dy, k as i64 + dz);
                                    if g.contains(x, y, z) {
                                        let nidx = g.index(x as usize, y as usize, z as usize);
                                        let v = v_field[nidx];
                                        if v != 0 {
                                            let vid = offset + v;
                                            components[(id - 1) as usize].touches.insert(vid);
                                            components[(vid - 1) as usize].touches.insert(id);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                idx += 1;
            }
        }
    }

    Ok(ComponentTable {
        components,
        id_field,
    })
}

/// One entry of the repair log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RepairEvent {
    RemovedOutsideLung {
        class: VesselClass,
        id: u32,
        voxels: usize,
    },
    Reclassified {
        iteration: u32,
        from: VesselClass,
        to: VesselClass,
        id: u32,
        voxels: usize,
    },
    DroppedUnmerged {
        class: VesselClass,
        id: u32,
        voxels: usize,
    },
}

/// Record of everything a repair pass changed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RepairLog {
    pub events: Vec<RepairEvent>,
    pub iterations: u32,
    pub converged: bool,
}

impl RepairLog {
    pub fn is_noop(&self) -> bool {
        self.events.is_empty()
    }
}

impl fmt::Display for RepairLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for event in &self.events {
            match event {
                RepairEvent::RemovedOutsideLung { class, id, voxels } => writeln!(
                    f,
                    "removed_outside_lung class={} id={id} voxels={voxels}",
                    class.name()
                )?,
                RepairEvent::Reclassified {
                    iteration,
                    from,
                    to,
                    id,
                    voxels,
                } => writeln!(
                    f,
                    "reclassified iteration={iteration} from={} to={} id={id} voxels={voxels}",
                    from.name(),
                    to.name()
                )?,
                RepairEvent::DroppedUnmerged { class, id, voxels } => writeln!(
                    f,
                    "dropped_unmerged class={} id={id} voxels={voxels}",
                    class.name()
                )?,
            }
        }
        if self.converged {
            writeln!(f, "converged iterations={}", self.iterations)
        } else {
            writeln!(f, "non_converged iterations={}", self.iterations)
        }
    }
}

/// Run the full repair pass. Returns the repaired volume and the log;
/// hitting the iteration cap is reported in the log, not an error.
pub fn repair(
    labels: &LabelVolume,
    lung_mask: &LabelVolume,
    cfg: &RepairConfig,
) -> Result<(LabelVolume, RepairLog)> {
    cfg.validate()?;
    labels
        .geometry()
        .ensure_same_grid(lung_mask.geometry(), "repair")?;
    let g = labels.geometry().clone();
    let mut data = labels.data().to_vec();
    let mut log = RepairLog::default();

    // Steps 1-2: clear components with no voxel inside the lung.
    {
        let table = build_component_table(
            &LabelVolume::new(g.clone(), data.clone())?,
            lung_mask,
        )?;
        let doomed: Vec<&ComponentInfo> = table
            .components
            .iter()
            .filter(|c| !c.inside_lung_any)
            .collect();
        if !doomed.is_empty() {
            let doomed_ids: BTreeSet<u32> = doomed.iter().map(|c| c.id).collect();
            for (idx, &id) in table.id_field.iter().enumerate() {
                if id != 0 && doomed_ids.contains(&id) {
                    data[idx] = 0;
                }
            }
            for c in doomed {
                log.events.push(RepairEvent::RemovedOutsideLung {
                    class: c.class,
                    id: c.id,
                    voxels: c.voxel_count,
                });
            }
        }
    }

    // Steps 3-6: iterative reclassification toward the largest components.
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let table = build_component_table(
            &LabelVolume::new(g.clone(), data.clone())?,
            lung_mask,
        )?;
        let largest_artery = table.largest_of_class(VesselClass::Artery).map(|c| c.id);
        let largest_vein = table.largest_of_class(VesselClass::Vein).map(|c| c.id);

        // Qualification is against the iteration-start table; step 4 first,
        // then step 5, each in ascending component id.
        let mut relabel: Vec<(u32, VesselClass)> = Vec::new(); // (table id, new class)
        let mut taken: BTreeSet<u32> = BTreeSet::new();
        if let Some(lv) = largest_vein {
            for c in table
                .components
                .iter()
                .filter(|c| c.class == VesselClass::Artery)
            {
                if Some(c.id) != largest_artery
                    && c.voxel_count < cfg.size_threshold
                    && c.touches.contains(&lv)
                {
                    relabel.push((c.id, VesselClass::Vein));
                    taken.insert(c.id);
                }
            }
        }
        if let Some(la) = largest_artery {
            for c in table
                .components
                .iter()
                .filter(|c| c.class == VesselClass::Vein)
            {
                if Some(c.id) != largest_vein
                    && c.voxel_count < cfg.size_threshold
                    && c.touches.contains(&la)
                    && !taken.contains(&c.id)
                {
                    relabel.push((c.id, VesselClass::Artery));
                }
            }
        }

        if relabel.is_empty() {
            converged = true;
            break;
        }

        let mut new_label = vec![0u8; table.components.len() + 1];
        for &(id, to) in &relabel {
            new_label[id as usize] = to.label();
        }
        for (idx, &id) in table.id_field.iter().enumerate() {
            if id != 0 && new_label[id as usize] != 0 {
                data[idx] = new_label[id as usize];
            }
        }
        for (id, to) in relabel {
            let c = table.component(id);
            log.events.push(RepairEvent::Reclassified {
                iteration: iterations,
                from: c.class,
                to,
                id,
                voxels: c.voxel_count,
            });
        }
    }
    log.iterations = iterations;
    log.converged = converged;

    // Optional cleanup of small components that never merged.
    if !cfg.keep_unmerged_small {
        let table = build_component_table(
            &LabelVolume::new(g.clone(), data.clone())?,
            lung_mask,
        )?;
        let largest_artery = table.largest_of_class(VesselClass::Artery).map(|c| c.id);
        let largest_vein = table.largest_of_class(VesselClass::Vein).map(|c| c.id);
        let doomed: Vec<&ComponentInfo> = table
            .components
            .iter()
            .filter(|c| {
                c.voxel_count < cfg.size_threshold
                    && Some(c.id) != largest_artery
                    && Some(c.id) != largest_vein
            })
            .collect();
        if !doomed.is_empty() {
            let doomed_ids: BTreeSet<u32> = doomed.iter().map(|c| c.id).collect();
            for (idx, &id) in table.id_field.iter().enumerate() {
                if id != 0 && doomed_ids.contains(&id) {
                    data[idx] = 0;
                }
            }
            for c in doomed {
                log.events.push(RepairEvent::DroppedUnmerged {
                    class: c.class,
                    id: c.id,
                    voxels: c.voxel_count,
                });
            }
        }
    }

    Ok((LabelVolume::new(g, data)?, log))
}

/// Runs repair twice; true iff the second pass changes nothing.
pub fn repair_idempotence_check(
    labels: &LabelVolume,
    lung_mask: &LabelVolume,
    cfg: &RepairConfig,
) -> Result<bool> {
    let (first, _) = repair(labels, lung_mask, cfg)?;
    let (second, log) = repair(&first, lung_mask, cfg)?;
    Ok(second == first && log.is_noop())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(d: usize) -> VolumeGeometry {
        VolumeGeometry::isotropic([d, d, d]).unwrap()
    }

    fn volume_with(g: &VolumeGeometry, voxels: &[((usize, usize, usize), u8)]) -> LabelVolume {
        let mut data = vec![0u8; g.voxel_count()];
        for &((i, j, k), label) in voxels {
            data[g.index(i, j, k)] = label;
        }
        LabelVolume::new(g.clone(), data).unwrap()
    }

    fn full_lung(g: &VolumeGeometry) -> LabelVolume {
        LabelVolume::new(g.clone(), vec![1; g.voxel_count()]).unwrap()
    }

    #[test]
    fn empty_class_gives_empty_table() {
        let g = geom(4);
        let labels = LabelVolume::zeros(g);
        let table = connected_components(&labels, VesselClass::Artery);
        assert!(table.components.is_empty());
        assert!(table.id_field.iter().all(|&v| v == 0));
    }

    #[test]
    fn diagonal_voxels_are_one_component_under_26() {
        let g = geom(4);
        let labels = volume_with(&g, &[((0, 0, 0), 1), ((1, 1, 1), 1)]);
        let table = connected_components(&labels, VesselClass::Artery);
        assert_eq!(table.components.len(), 1);
        assert_eq!(table.components[0].voxel_count, 2);
    }

    #[test]
    fn ids_follow_raster_order() {
        let g = geom(8);
        // Three separated voxels; raster order is x fastest.
        let labels = volume_with(
            &g,
            &[((6, 0, 0), 1), ((0, 4, 0), 1), ((0, 0, 6), 1)],
        );
        let table = connected_components(&labels, VesselClass::Artery);
        assert_eq!(table.components.len(), 3);
        assert_eq!(table.id_field[g.index(6, 0, 0)], 1);
        assert_eq!(table.id_field[g.index(0, 4, 0)], 2);
        assert_eq!(table.id_field[g.index(0, 0, 6)], 3);
    }

    #[test]
    fn cross_class_touches_recorded() {
        let g = geom(6);
        let labels = volume_with(&g, &[((2, 2, 2), 1), ((3, 3, 3), 2), ((0, 0, 0), 2)]);
        let table = build_component_table(&labels, &full_lung(&g)).unwrap();
        // artery id 1; vein ids 2 (raster-first at origin) and 3.
        assert_eq!(table.components.len(), 3);
        let artery = &table.components[0];
        assert_eq!(artery.class, VesselClass::Artery);
        let touching: Vec<u32> = artery.touches.iter().copied().collect();
        assert_eq!(touching.len(), 1);
        let vid = touching[0];
        assert_eq!(table.component(vid).class, VesselClass::Vein);
        assert_eq!(
            table.id_field[g.index(3, 3, 3)],
            vid,
            "the touching vein is the diagonal one"
        );
    }

    #[test]
    fn untouched_volume_is_a_fixed_point() {
        let g = geom(16);
        let mut voxels = Vec::new();
        for i in 2..14 {
            voxels.push(((i, 4, 4), 1));
            voxels.push(((i, 10, 10), 2));
        }
        let labels = volume_with(&g, &voxels);
        let (out, log) = repair(&labels, &full_lung(&g), &RepairConfig::default()).unwrap();
        assert_eq!(out, labels);
        assert!(log.is_noop());
        assert!(log.converged);
    }

    #[test]
    fn outside_lung_component_removed_partial_overlap_kept() {
        let g = geom(16);
        let mut voxels = Vec::new();
        // main artery inside lung
        for i in 2..10 {
            voxels.push(((i, 8, 8), 1));
        }
        // blob fully outside lung
        for i in 2..6 {
            voxels.push(((i, 2, 2), 1));
        }
        // blob straddling the lung edge
        for i in 10..14 {
            voxels.push(((i, 14, 14), 2));
        }
        let labels = volume_with(&g, &voxels);
        // lung covers y,z >= 4 only
        let mut lung = vec![0u8; g.voxel_count()];
        for k in 4..16 {
            for j in 4..16 {
                for i in 0..16 {
                    lung[g.index(i, j, k)] = 1;
                }
            }
        }
        // carve the lung away from half of the straddling vein blob
        for i in 12..14 {
            lung[g.index(i, 14, 14)] = 0;
        }
        let lung = LabelVolume::new(g.clone(), lung).unwrap();

        let (out, log) = repair(&labels, &lung, &RepairConfig::default()).unwrap();
        assert_eq!(out.get(3, 2, 2), 0, "outside-lung blob cleared");
        assert_eq!(out.get(12, 14, 14), 2, "partial-overlap blob kept");
        assert!(log
            .events
            .iter()
            .any(|e| matches!(e, RepairEvent::RemovedOutsideLung { .. })));
    }

    #[test]
    fn threshold_boundary_is_strict() {
        // A component of exactly `threshold` voxels is NOT relabeled
        // (size < threshold), one of threshold-1 voxels is.
        let g = VolumeGeometry::isotropic([40, 12, 12]).unwrap();
        let lung = full_lung(&g);
        for (blob_len, expect_relabel) in [(9usize, true), (10usize, false)] {
            let mut voxels = Vec::new();
            // big vein tube: 30 voxels
            for i in 2..32 {
                voxels.push(((i, 4, 4), 2));
            }
            // big artery tube: 20 voxels, far from everything
            for i in 2..22 {
                voxels.push(((i, 9, 9), 1));
            }
            // small artery blob touching the vein tube
            for i in 2..2 + blob_len {
                voxels.push(((i, 5, 5), 1));
            }
            let labels = volume_with(&g, &voxels);
            let cfg = RepairConfig {
                size_threshold: 10,
                ..Default::default()
            };
            let (out, _) = repair(&labels, &lung, &cfg).unwrap();
            let relabeled = out.get(3, 5, 5) == 2;
            assert_eq!(relabeled, expect_relabel, "blob_len {blob_len}");
        }
    }

    #[test]
    fn chain_merges_across_iterations() {
        // Artery A touches the largest vein and merges in iteration 1. The
        // small vein bridge D was already adjacent to A, so the recompute
        // absorbs it into the largest vein, which qualifies artery E (which
        // touches only D) in iteration 2.
        let g = VolumeGeometry::isotropic([40, 12, 12]).unwrap();
        let lung = full_lung(&g);
        let mut voxels = Vec::new();
        for i in 2..32 {
            voxels.push(((i, 4, 4), 2)); // largest vein
        }
        for i in 2..22 {
            voxels.push(((i, 10, 10), 1)); // largest artery, disjoint
        }
        for i in 2..7 {
            voxels.push(((i, 5, 5), 1)); // A: touches the vein row at y=4
        }
        for i in 2..7 {
            voxels.push(((i, 6, 6), 2)); // D: vein bridge touching only A
        }
        for i in 2..7 {
            voxels.push(((i, 7, 7), 1)); // E: artery touching only D
        }
        let labels = volume_with(&g, &voxels);
        let cfg = RepairConfig {
            size_threshold: 10,
            ..Default::default()
        };
        let (out, log) = repair(&labels, &lung, &cfg).unwrap();
        assert_eq!(out.get(3, 5, 5), 2, "A became vein");
        assert_eq!(out.get(3, 6, 6), 2, "bridge D stays vein");
        assert_eq!(out.get(3, 7, 7), 2, "E became vein via the updated largest");
        assert_eq!(out.get(3, 10, 10), 1, "largest artery untouched");
        let reclass_iters: Vec<u32> = log
            .events
            .iter()
            .filter_map(|e| match e {
                RepairEvent::Reclassified { iteration, .. } => Some(*iteration),
                _ => None,
            })
            .collect();
        assert_eq!(reclass_iters, vec![1, 2]);
        assert!(
            repair_idempotence_check(&labels, &lung, &cfg).unwrap(),
            "repair output is a fixed point"
        );
    }

    #[test]
    fn drop_unmerged_flag() {
        let g = geom(16);
        let lung = full_lung(&g);
        let mut voxels = Vec::new();
        for i in 2..12 {
            voxels.push(((i, 4, 4), 1)); // largest artery
        }
        voxels.push(((14, 14, 14), 1)); // lonely small artery, touches nothing
        let labels = volume_with(&g, &voxels);
        let keep = RepairConfig {
            size_threshold: 4,
            ..Default::default()
        };
        let (kept, _) = repair(&labels, &lung, &keep).unwrap();
        assert_eq!(kept.get(14, 14, 14), 1);
        let drop = RepairConfig {
            size_threshold: 4,
            keep_unmerged_small: false,
            ..Default::default()
        };
        let (dropped, log) = repair(&labels, &lung, &drop).unwrap();
        assert_eq!(dropped.get(14, 14, 14), 0);
        assert!(log
            .events
            .iter()
            .any(|e| matches!(e, RepairEvent::DroppedUnmerged { .. })));
    }

    #[test]
    fn conservation_no_new_vessel_voxels() {
        let g = geom(12);
        let lung = full_lung(&g);
        let mut voxels = Vec::new();
        for i in 1..11 {
            voxels.push(((i, 3, 3), 2));
            voxels.push(((i, 8, 8), 1));
        }
        voxels.push(((5, 4, 4), 1));
        let labels = volume_with(&g, &voxels);
        let cfg = RepairConfig {
            size_threshold: 5,
            ..Default::default()
        };
        let (out, _) = repair(&labels, &lung, &cfg).unwrap();
        for idx in 0..g.voxel_count() {
            let (before, after) = (labels.data()[idx], out.data()[idx]);
            if before == 0 {
                assert_eq!(after, 0, "repair created a vessel voxel");
            }
        }
    }

    #[test]
    fn geometry_mismatch_rejected() {
        let a = LabelVolume::zeros(geom(4));
        let b = LabelVolume::new(geom(5), vec![1; 125]).unwrap();
        assert!(matches!(
            repair(&a, &b, &RepairConfig::default()),
            Err(Error::GeometryMismatch(_))
        ));
    }
}
