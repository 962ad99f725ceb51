//! Benchmark fixtures shared by the criterion targets.

use formation_core::controller::{ControlGains, DEFAULT_GAIN};
use formation_core::graph::octahedron_graph;
use formation_core::shape::{octahedron_spec, targets_from_spec};
use formation_core::sim::Formation;

/// The unit octahedron formation with default gains.
pub fn octahedron() -> Formation {
    Formation {
        graph: octahedron_graph(),
        targets: targets_from_spec(&octahedron_spec()).expect("octahedron targets"),
        gains: ControlGains::uniform(6, DEFAULT_GAIN),
    }
}
