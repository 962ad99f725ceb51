//! Formation errors and the decentralized velocity laws.
//!
//! Every quantity here is computed from a [`SensedView`] alone. Followers
//! rebuild their virtual frame from measured bearings and distance ratios, at
//! unit scale (`d_li = 1`), since angles, `eta` and the unit basis are
//! scale-free.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    basis_at, from_cartesian, recover_bearing, wrap_angle, BisphericalBasis, BisphericalCoords, FrameAxes,
    GeometryError, Vec3, VirtualFrame,
};
use crate::sensing::SensedView;
use crate::shape::BisphericalTargets;

/// Below this `sin(xi)` the dihedral term is scaled down linearly.
pub const SIN_XI_GUARD: f64 = 1e-6;

/// Default gain of every control law.
pub const DEFAULT_GAIN: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentGains {
    pub kappa: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl AgentGains {
    pub fn uniform(k: f64) -> Self {
        Self {
            kappa: k,
            lambda: k,
            gamma: k,
        }
    }
}

impl Default for AgentGains {
    fn default() -> Self {
        Self::uniform(DEFAULT_GAIN)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("gains of agent {agent} must be strictly positive and finite: {gains:?}")]
pub struct GainError {
    pub agent: usize,
    pub gains: AgentGains,
}

/// Per-agent gains, indexed by agent. Agent 2 uses only `kappa`, agent 3
/// only `kappa` and `lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlGains {
    agents: Vec<AgentGains>,
}

impl ControlGains {
    pub fn uniform(n: usize, k: f64) -> Self {
        Self {
            agents: vec![AgentGains::uniform(k); n],
        }
    }

    /// `agents[m]` holds the gains of agent `m + 1`.
    pub fn new(agents: Vec<AgentGains>) -> Result<Self, GainError> {
        for (idx, g) in agents.iter().enumerate() {
            let ok = |x: f64| x > 0.0 && x.is_finite();
            let agent = idx + 1;
            let needed: &[f64] = match agent {
                1 => &[],
                2 => &[g.kappa],
                3 => &[g.kappa, g.lambda],
                _ => &[g.kappa, g.lambda, g.gamma],
            };
            if !needed.iter().all(|&x| ok(x)) {
                return Err(GainError { agent, gains: *g });
            }
        }
        Ok(Self { agents })
    }

    pub fn agent(&self, agent: usize) -> &AgentGains {
        &self.agents[agent - 1]
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }
}

/// One agent's slice of the formation errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum AgentErrors {
    Leader,
    /// Squared-distance error `|p21|^2 - d21*^2`.
    First {
        e_d: f64,
    },
    Second {
        e_xi: f64,
        e_eta: f64,
    },
    Ordinary {
        e_xi: f64,
        e_eta: f64,
        e_phi: f64,
    },
}

impl AgentErrors {
    /// Components in log-column order.
    pub fn components(&self) -> Vec<f64> {
        match *self {
            AgentErrors::Leader => vec![],
            AgentErrors::First { e_d } => vec![e_d],
            AgentErrors::Second { e_xi, e_eta } => vec![e_xi, e_eta],
            AgentErrors::Ordinary { e_xi, e_eta, e_phi } => vec![e_xi, e_eta, e_phi],
        }
    }

    /// `W = |e|^2 / 2`.
    pub fn lyapunov(&self) -> f64 {
        self.components().iter().map(|e| e * e).sum::<f64>() / 2.0
    }

    pub fn max_abs(&self) -> f64 {
        self.components().iter().fold(0.0, |m, e| m.max(e.abs()))
    }
}

/// Errors of agents `1..=n` (the leader entry is always [`AgentErrors::Leader`]).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FormationErrors {
    pub agents: Vec<AgentErrors>,
}

impl FormationErrors {
    pub fn flat(&self) -> Vec<f64> {
        self.agents.iter().flat_map(|e| e.components()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.agents.iter().fold(0.0, |m, e| m.max(e.max_abs()))
    }
}

/// `W_2, ..., W_n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovRecord {
    pub values: Vec<f64>,
}

impl LyapunovRecord {
    pub fn of(&self, agent: usize) -> f64 {
        self.values[agent - 2]
    }
}

pub fn lyapunov_of(errors: &FormationErrors) -> LyapunovRecord {
    LyapunovRecord {
        values: errors.agents.iter().skip(1).map(|e| e.lyapunov()).collect(),
    }
}

/// A follower's bispherical state rebuilt from its own measurements, in its
/// local frame.
#[derive(Clone, Copy, Debug)]
pub struct LocalGeometry {
    pub coords: BisphericalCoords,
    pub frame: VirtualFrame,
    pub basis: Result<BisphericalBasis, GeometryError>,
}

/// Rebuilds the virtual frame and coordinates of agent 3 or an ordinary
/// follower. `None` for agents 1 and 2.
pub fn local_geometry(view: &SensedView) -> Result<Option<LocalGeometry>, GeometryError> {
    let (q_i, q_j, axes, planar) = match *view {
        SensedView::Leader | SensedView::First { .. } => return Ok(None),
        SensedView::Second { v31, v32, r312 } => {
            let v21 = recover_bearing(&v31, &v32, r312)?;
            // agent 3 plays the role of k: its own half-plane is phi = 0
            let axes = FrameAxes::from_bearings(&v21, Some(&v31));
            (v31.into_inner(), v32.into_inner() / r312, axes, true)
        }
        SensedView::Ordinary {
            v_li,
            v_lj,
            v_lk,
            r_lij,
            r_lik,
        } => {
            let v_ji = recover_bearing(&v_li, &v_lj, r_lij)?;
            let v_ki = recover_bearing(&v_li, &v_lk, r_lik).ok();
            let axes = FrameAxes::from_bearings(&v_ji, v_ki.as_ref());
            (v_li.into_inner(), v_lj.into_inner() / r_lij, axes, false)
        }
    };
    let frame = VirtualFrame {
        origin: (q_i + q_j) / 2.0,
        axes,
        a: (q_i - q_j).norm() / 2.0,
    };
    let mut coords = from_cartesian(&Vec3::zeros(), &frame)?;
    if planar {
        coords.phi = 0.0;
    }
    let basis = basis_at(&coords, &frame);
    Ok(Some(LocalGeometry { coords, frame, basis }))
}

fn errors_from(
    view: &SensedView,
    geometry: Option<&LocalGeometry>,
    targets: &BisphericalTargets,
    agent: usize,
) -> AgentErrors {
    match (view, geometry) {
        (SensedView::First { p21 }, _) => AgentErrors::First {
            e_d: p21.norm_squared() - targets.d21_star.powi(2),
        },
        (SensedView::Second { .. }, Some(geo)) => AgentErrors::Second {
            e_xi: geo.coords.xi - targets.xi3_star,
            e_eta: geo.coords.eta - targets.eta3_star,
        },
        (SensedView::Ordinary { .. }, Some(geo)) => {
            let t = targets.follower(agent);
            AgentErrors::Ordinary {
                e_xi: geo.coords.xi - t.xi_star,
                e_eta: geo.coords.eta - t.eta_star,
                e_phi: wrap_angle(geo.coords.phi) - t.phi_star,
            }
        }
        _ => AgentErrors::Leader,
    }
}

/// Formation errors of one agent from its measurements.
pub fn errors_of(view: &SensedView, targets: &BisphericalTargets, agent: usize) -> Result<AgentErrors, GeometryError> {
    let geo = local_geometry(view)?;
    Ok(errors_from(view, geo.as_ref(), targets, agent))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlEvent {
    /// Geometry was degenerate; the agent holds position.
    Hold { reason: HoldReason },
    /// `sin(xi)` fell below the guard and the dihedral term was scaled.
    SinXiClamp { sin_xi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldReason {
    Collocated,
    Collinear,
    Denominator,
    AxisDegeneracy,
    NonPositiveDistance,
}

impl From<&GeometryError> for HoldReason {
    fn from(e: &GeometryError) -> Self {
        match e {
            GeometryError::Collocated(_) => HoldReason::Collocated,
            GeometryError::Collinear(_) => HoldReason::Collinear,
            GeometryError::Denominator(_) => HoldReason::Denominator,
            GeometryError::AxisDegeneracy(_) => HoldReason::AxisDegeneracy,
            GeometryError::NonPositiveDistance(_) => HoldReason::NonPositiveDistance,
        }
    }
}

/// Result of one agent's control evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Command {
    /// Velocity in the agent's local frame (m/s).
    pub velocity: Vec3,
    /// Errors, when the view was non-degenerate.
    pub errors: Option<AgentErrors>,
    pub event: Option<ControlEvent>,
}

impl Command {
    fn hold(reason: &GeometryError, errors: Option<AgentErrors>) -> Self {
        Self {
            velocity: Vec3::zeros(),
            errors,
            event: Some(ControlEvent::Hold { reason: reason.into() }),
        }
    }
}

/// Velocity command of `agent` from its own measurements.
pub fn control(view: &SensedView, targets: &BisphericalTargets, gains: &ControlGains, agent: usize) -> Command {
    let geo = match local_geometry(view) {
        Ok(geo) => geo,
        Err(e) => return Command::hold(&e, None),
    };
    let errors = errors_from(view, geo.as_ref(), targets, agent);
    let g = gains.agent(agent);
    let basis = |geo: &LocalGeometry| geo.basis;
    match (errors, geo.as_ref()) {
        (AgentErrors::Leader, _) => Command {
            velocity: Vec3::zeros(),
            errors: Some(errors),
            event: None,
        },
        (AgentErrors::First { e_d }, _) => {
            let SensedView::First { p21 } = view else {
                unreachable!("first-follower errors come from a first-follower view")
            };
            Command {
                velocity: g.kappa * e_d * p21,
                errors: Some(errors),
                event: None,
            }
        }
        (AgentErrors::Second { e_xi, e_eta }, Some(geo)) => match basis(geo) {
            Ok(b) => Command {
                velocity: -g.kappa * e_xi * b.xi_hat - g.lambda * e_eta * b.eta_hat,
                errors: Some(errors),
                event: None,
            },
            Err(e) => Command::hold(&e, Some(errors)),
        },
        (AgentErrors::Ordinary { e_xi, e_eta, e_phi }, Some(geo)) => match basis(geo) {
            Ok(b) => {
                let sin_xi = geo.coords.xi.sin();
                let (scale, event) = if sin_xi < SIN_XI_GUARD {
                    (sin_xi / SIN_XI_GUARD, Some(ControlEvent::SinXiClamp { sin_xi }))
                } else {
                    (1.0, None)
                };
                Command {
                    velocity: -g.kappa * e_xi * b.xi_hat
                        - g.lambda * e_eta * b.eta_hat
                        - scale * g.gamma * e_phi * b.phi_hat,
                    errors: Some(errors),
                    event,
                }
            }
            Err(e) => Command::hold(&e, Some(errors)),
        },
        _ => unreachable!("follower errors always carry local geometry"),
    }
}
