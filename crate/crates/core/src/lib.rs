//! Leader-follower formation control in 3D over directed, triangulated
//! sensing graphs, where every follower below the first steers its own
//! bispherical coordinates relative to three neighbors.
//!
//! Module map:
//!
//! - [`graph`]: sensing graphs, their hierarchy rules and Henneberg growth.
//! - [`geometry`]: bearings, signed volumes, virtual frames, bispherical
//!   coordinates and their basis.
//! - [`shape`]: desired shapes as distances plus signed volumes, the derived
//!   setpoints and the shape-equivalence oracle.
//! - [`sensing`]: per-agent measurements in body frames.
//! - [`controller`]: formation errors and velocity laws from measurements.
//! - [`dynamics`]: closed-form error rates, checked numerically.
//! - [`sim`]: integration, scale events, logs and Monte Carlo runs.
//! - [`scenario`]: JSON scenario files.
//! - [`check`]: seeded property suites.

// `!(x > tol)` style guards are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod controller;
pub mod dynamics;
pub mod geometry;
pub mod graph;
pub mod scenario;
pub mod sensing;
pub mod shape;
pub mod sim;

pub use controller::{control, errors_of, AgentErrors, AgentGains, Command, ControlGains};
pub use geometry::{BisphericalBasis, BisphericalCoords, GeometryError, UnitVec3, Vec3, VirtualFrame};
pub use graph::{validate_graph, GraphError, SensingGraph, ValidationReport, Violation};
pub use scenario::{OutputFormat, Scenario, ScenarioError, ScenarioFile};
pub use sensing::{sense, AgentFrame, SensedView, WorldState};
pub use shape::{targets_from_spec, BisphericalTargets, ShapeError, ShapeSpec};
pub use sim::{monte_carlo, run, Formation, Integrator, SimConfig, SimError, TrajectoryLog};
