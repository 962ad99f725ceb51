//! Measurement model: what each agent may sense, in its own body frame.
//!
//! Agent 2 measures the relative position of agent 1. Every other follower
//! measures only unit bearings of its neighbors and ratios of neighbor
//! distances. Bearings are rotated into the agent's local frame; the ratios
//! are frame-invariant scalars.

use nalgebra::{Quaternion, Rotation3, Unit, UnitQuaternion};
use rand::Rng;

use crate::geometry::{bearing, pos, GeometryError, UnitVec3, Vec3};
use crate::graph::SensingGraph;

/// Orientation of an agent's body frame, local-to-world.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentFrame {
    rotation: Rotation3<f64>,
}

impl Default for AgentFrame {
    fn default() -> Self {
        Self::identity()
    }
}

impl AgentFrame {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
        }
    }

    pub fn from_rotation(rotation: Rotation3<f64>) -> Self {
        Self { rotation }
    }

    /// Uniformly distributed orientation (Shoemake's method).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let tau = std::f64::consts::TAU;
        let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
        let q = Quaternion::new(
            b * (tau * u3).cos(),
            a * (tau * u2).sin(),
            a * (tau * u2).cos(),
            b * (tau * u3).sin(),
        );
        Self {
            rotation: UnitQuaternion::from_quaternion(q).to_rotation_matrix(),
        }
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        self.rotation * local
    }

    pub fn to_local(&self, world: &Vec3) -> Vec3 {
        self.rotation.inverse_transform_vector(world)
    }

    fn unit_to_local(&self, world: &UnitVec3) -> UnitVec3 {
        Unit::new_unchecked(self.to_local(world))
    }
}

/// Snapshot of the whole formation in the world frame.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub t: f64,
    pub positions: Vec<Vec3>,
    pub frames: Vec<AgentFrame>,
}

impl WorldState {
    /// State at `t = 0` with identity body frames.
    pub fn new(positions: Vec<Vec3>) -> Self {
        let frames = vec![AgentFrame::identity(); positions.len()];
        Self {
            t: 0.0,
            positions,
            frames,
        }
    }

    pub fn with_frames(mut self, frames: Vec<AgentFrame>) -> Self {
        assert_eq!(frames.len(), self.positions.len());
        self.frames = frames;
        self
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn frame(&self, agent: usize) -> &AgentFrame {
        &self.frames[agent - 1]
    }
}

/// Everything one agent is permitted to know, in its local frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SensedView {
    Leader,
    /// Agent 2: relative position of agent 1.
    First {
        p21: Vec3,
    },
    /// Agent 3: bearings of agents 1 and 2, and `d31 / d32`.
    Second {
        v31: UnitVec3,
        v32: UnitVec3,
        r312: f64,
    },
    /// Agent `l >= 4` with neighbors `i < j < k`: bearings, `d_li / d_lj`
    /// and `d_li / d_lk`.
    Ordinary {
        v_li: UnitVec3,
        v_lj: UnitVec3,
        v_lk: UnitVec3,
        r_lij: f64,
        r_lik: f64,
    },
}

/// Measurements of `agent`, exact and synchronous.
pub fn sense(world: &WorldState, g: &SensingGraph, agent: usize) -> Result<SensedView, GeometryError> {
    let p = &world.positions;
    let frame = world.frame(agent);
    let me = pos(p, agent);
    let dist = |other: usize| -> Result<f64, GeometryError> {
        let d = (pos(p, other) - me).norm();
        if d <= crate::geometry::EPS_DIST {
            Err(GeometryError::Collocated(d))
        } else {
            Ok(d)
        }
    };
    let local_bearing =
        |other: usize| -> Result<UnitVec3, GeometryError> { Ok(frame.unit_to_local(&bearing(&me, &pos(p, other))?)) };
    match agent {
        1 => Ok(SensedView::Leader),
        2 => {
            dist(1)?;
            Ok(SensedView::First {
                p21: frame.to_local(&(pos(p, 1) - me)),
            })
        }
        3 => Ok(SensedView::Second {
            v31: local_bearing(1)?,
            v32: local_bearing(2)?,
            r312: dist(1)? / dist(2)?,
        }),
        l => {
            let [i, j, k] = g.neighbor_triple(l).expect("ordinary follower has a neighbor triple");
            let d_li = dist(i)?;
            Ok(SensedView::Ordinary {
                v_li: local_bearing(i)?,
                v_lj: local_bearing(j)?,
                v_lk: local_bearing(k)?,
                r_lij: d_li / dist(j)?,
                r_lik: d_li / dist(k)?,
            })
        }
    }
}

/// Additive bearing perturbation, uniform per component in
/// `[-amplitude, amplitude]`, renormalized. Ratios and agent 2's relative
/// position are left exact.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BearingNoise {
    pub amplitude: f64,
}

impl BearingNoise {
    pub fn is_off(&self) -> bool {
        self.amplitude == 0.0
    }

    pub fn apply<R: Rng + ?Sized>(&self, view: SensedView, rng: &mut R) -> SensedView {
        if self.is_off() {
            return view;
        }
        let mut jitter = |v: UnitVec3| -> UnitVec3 {
            let a = self.amplitude;
            let d = Vec3::new(
                rng.random_range(-a..=a),
                rng.random_range(-a..=a),
                rng.random_range(-a..=a),
            );
            Unit::try_new(v.into_inner() + d, 1e-12).unwrap_or(v)
        };
        match view {
            SensedView::Second { v31, v32, r312 } => SensedView::Second {
                v31: jitter(v31),
                v32: jitter(v32),
                r312,
            },
            SensedView::Ordinary {
                v_li,
                v_lj,
                v_lk,
                r_lij,
                r_lik,
            } => SensedView::Ordinary {
                v_li: jitter(v_li),
                v_lj: jitter(v_lj),
                v_lk: jitter(v_lk),
                r_lij,
                r_lik,
            },
            other => other,
        }
    }
}
