//! Shared fixtures for the pipeline benchmarks.

use vesselseg_core::synth::{generate_tree, Branch, GeneratedPhantom, PhantomSpec};
use vesselseg_core::volume::VesselClass;

/// A mid-size two-tree phantom used by every benchmark.
pub fn bench_phantom(dims: [usize; 3]) -> GeneratedPhantom {
    let spec = PhantomSpec {
        seed: 97,
        dims,
        spacing: [1.0; 3],
        branches: vec![
            Branch {
                start: [8.0, dims[1] as f64 * 0.3, dims[2] as f64 * 0.3],
                direction: [1.0, 0.2, 0.1],
                length: dims[0] as f64 * 0.4,
                radius: 3.0,
                class: VesselClass::Artery,
            },
            Branch {
                start: [8.0, dims[1] as f64 * 0.7, dims[2] as f64 * 0.7],
                direction: [1.0, -0.2, -0.1],
                length: dims[0] as f64 * 0.4,
                radius: 3.0,
                class: VesselClass::Vein,
            },
        ],
        generations: 2,
        radius_decay: 0.8,
    };
    generate_tree(&spec).expect("bench phantom generates")
}
