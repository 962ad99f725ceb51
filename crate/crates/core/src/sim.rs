//! Closed-loop integration, scale events, trajectory logs and Monte Carlo
//! batches.
//!
//! Each agent's command is computed from its own [`SensedView`] and rotated
//! from its body frame into the world before integration. RK4 re-senses at
//! every stage.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::controller::{control, errors_of, AgentErrors, ControlEvent, ControlGains, HoldReason};
use crate::geometry::Vec3;
use crate::graph::SensingGraph;
use crate::sensing::{sense, AgentFrame, BearingNoise, SensedView, WorldState};
use crate::shape::BisphericalTargets;

/// Random initial positions closer than this are redrawn.
pub const MIN_INIT_SEPARATION: f64 = 1e-3;
/// A Monte Carlo trial converges when every error is below this at `t_end`.
pub const CONVERGENCE_TOL: f64 = 1e-6;

// independent ChaCha8 streams carved out of one seed
const STREAM_INIT: u64 = 0;
const STREAM_FRAMES: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_TRIALS: u64 = 3;

/// ChaCha8 generator for one purpose of one seed.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

/// At time `t`, `d21*` becomes `d21_star`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleEvent {
    pub t: f64,
    pub d21_star: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// One `[x, y, z]` per agent.
    Explicit(Vec<[f64; 3]>),
    /// Leader at the origin, followers uniform in `[-h, h]^3`.
    RandomCube { half_width: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameSpec {
    #[default]
    Identity,
    /// Uniform random orientation per agent.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub integrator: Integrator,
    pub dt: f64,
    pub t_end: f64,
    pub events: Vec<ScaleEvent>,
    pub seed: u64,
    pub init: InitSpec,
    pub frames: FrameSpec,
    /// Bearing noise amplitude; zero disables it.
    pub noise: f64,
    /// Log every `log_every`-th step. Zero keeps only the first and last rows.
    pub log_every: usize,
    /// Agents held at their initial positions.
    pub pinned: Vec<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            integrator: Integrator::Rk4,
            dt: 0.005,
            t_end: 10.0,
            events: Vec::new(),
            seed: 0,
            init: InitSpec::RandomCube { half_width: 2.0 },
            frames: FrameSpec::Identity,
            noise: 0.0,
            log_every: 1,
            pinned: Vec::new(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("end time must be non-negative and finite, got {0}")]
    BadEnd(f64),
    #[error("scale events must be time-sorted with positive d21*")]
    BadEvents,
    #[error("initial state has {actual} agents, graph has {expected}")]
    AgentCount { expected: usize, actual: usize },
    #[error("half-width {0} must be positive")]
    BadHalfWidth(f64),
    #[error("pinned agent {0} does not exist")]
    BadPinned(usize),
    #[error("non-finite position of agent {agent} at t = {t}")]
    NonFinite { t: f64, agent: usize },
}

impl SimConfig {
    pub fn validate(&self, n: usize) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::BadStep(self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(SimError::BadEnd(self.t_end));
        }
        let sorted = self.events.windows(2).all(|w| w[0].t <= w[1].t);
        let positive = self
            .events
            .iter()
            .all(|e| e.d21_star > 0.0 && e.d21_star.is_finite() && e.t.is_finite());
        if !sorted || !positive {
            return Err(SimError::BadEvents);
        }
        match &self.init {
            InitSpec::Explicit(p) if p.len() != n => {
                return Err(SimError::AgentCount {
                    expected: n,
                    actual: p.len(),
                })
            }
            InitSpec::RandomCube { half_width } if !(*half_width > 0.0) => {
                return Err(SimError::BadHalfWidth(*half_width))
            }
            _ => {}
        }
        if let Some(&bad) = self.pinned.iter().find(|&&a| a == 0 || a > n) {
            return Err(SimError::BadPinned(bad));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Leader at the origin, followers uniform in the cube, redrawn while any
/// pair is closer than [`MIN_INIT_SEPARATION`].
pub fn random_cube<R: Rng + ?Sized>(n: usize, half_width: f64, rng: &mut R) -> Vec<Vec3> {
    loop {
        let mut p = vec![Vec3::zeros()];
        for _ in 1..n {
            p.push(Vec3::from_fn(|_, _| rng.random_range(-half_width..=half_width)));
        }
        let ok = (0..n).all(|a| (a + 1..n).all(|b| (p[a] - p[b]).norm() >= MIN_INIT_SEPARATION));
        if ok {
            return p;
        }
    }
}

/// Initial world state described by `cfg`.
pub fn initial_state(n: usize, cfg: &SimConfig) -> WorldState {
    let positions = match &cfg.init {
        InitSpec::Explicit(p) => p.iter().map(|c| Vec3::new(c[0], c[1], c[2])).collect(),
        InitSpec::RandomCube { half_width } => random_cube(n, *half_width, &mut rng_for(cfg.seed, STREAM_INIT)),
    };
    let frames = match cfg.frames {
        FrameSpec::Identity => vec![AgentFrame::identity(); n],
        FrameSpec::Random => {
            let mut rng = rng_for(cfg.seed, STREAM_FRAMES);
            (0..n).map(|_| AgentFrame::random(&mut rng)).collect()
        }
    };
    WorldState::new(positions).with_frames(frames)
}

/// Graph, setpoints and gains of a formation.
#[derive(Clone, Debug)]
pub struct Formation {
    pub graph: SensingGraph,
    pub targets: BisphericalTargets,
    pub gains: ControlGains,
}

impl Formation {
    pub fn n(&self) -> usize {
        self.graph.n()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// Agent stopped because its view was degenerate.
    Hold {
        reason: HoldReason,
    },
    SinXiClamp {
        sin_xi: f64,
    },
    /// `e_phi` jumped by more than `pi` between logged rows.
    PhiSeam {
        from: f64,
        to: f64,
    },
    Scale {
        d21_star: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimEvent {
    pub t: f64,
    /// Zero for formation-wide events.
    pub agent: usize,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// One logged sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub positions: Vec<Vec3>,
    /// `e_d, e_xi_3, e_eta_3, e_xi_4, e_eta_4, e_phi_4, ...`; NaN where the
    /// view was degenerate.
    pub errors: Vec<f64>,
    /// `W_2, ..., W_n`.
    pub lyapunov: Vec<f64>,
    pub min_dist: f64,
}

impl LogRow {
    pub fn max_abs_error(&self) -> f64 {
        self.errors
            .iter()
            .fold(0.0, |m: f64, e| if e.is_nan() { f64::INFINITY } else { m.max(e.abs()) })
    }

    pub fn position(&self, agent: usize) -> Vec3 {
        self.positions[agent - 1]
    }
}

/// Column names of the error block for `n` agents.
pub fn error_columns(n: usize) -> Vec<String> {
    let mut cols = vec!["e_d".to_string()];
    if n >= 3 {
        cols.push("e_xi_3".into());
        cols.push("e_eta_3".into());
    }
    for l in 4..=n {
        cols.extend([format!("e_xi_{l}"), format!("e_eta_{l}"), format!("e_phi_{l}")]);
    }
    cols
}

/// Full CSV header: `t, x1, y1, z1, ..., errors, W_2, ..., W_n, min_dist`.
pub fn csv_header(n: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for a in 1..=n {
        cols.extend([format!("x{a}"), format!("y{a}"), format!("z{a}")]);
    }
    cols.extend(error_columns(n));
    cols.extend((2..=n).map(|a| format!("W_{a}")));
    cols.push("min_dist".into());
    cols
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    pub n: usize,
    pub rows: Vec<LogRow>,
    pub events: Vec<SimEvent>,
    /// Smallest neighbor distance over every step, logged or not.
    pub min_neighbor_distance: f64,
    pub final_state: WorldState,
}

impl TrajectoryLog {
    pub fn last(&self) -> &LogRow {
        self.rows.last().expect("a log always has its initial row")
    }

    /// Last row with `t <= time`.
    pub fn at(&self, time: f64) -> &LogRow {
        let eps = 1e-9;
        self.rows
            .iter()
            .take_while(|r| r.t <= time + eps)
            .last()
            .unwrap_or(&self.rows[0])
    }

    fn row_values(&self, r: &LogRow) -> Vec<f64> {
        let mut v = vec![r.t];
        v.extend(r.positions.iter().flat_map(|p| [p.x, p.y, p.z]));
        v.extend(&r.errors);
        v.extend(&r.lyapunov);
        v.push(r.min_dist);
        v
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(csv_header(self.n))?;
        for r in &self.rows {
            out.write_record(self.row_values(r).iter().map(|x| format!("{x:e}")))?;
        }
        out.flush()?;
        Ok(())
    }

    /// One JSON object per row, keyed by the CSV header.
    pub fn write_json_lines<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = csv_header(self.n);
        for r in &self.rows {
            let obj: serde_json::Map<String, Value> = header
                .iter()
                .cloned()
                .zip(self.row_values(r).into_iter().map(json_number))
                .collect();
            serde_json::to_writer(&mut w, &obj)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn summary(&self, cfg: &SimConfig) -> Value {
        let last = self.last();
        let errors: serde_json::Map<String, Value> = error_columns(self.n)
            .into_iter()
            .zip(last.errors.iter().map(|&e| json_number(e)))
            .collect();
        json!({
            "n": self.n,
            "integrator": cfg.integrator,
            "dt": cfg.dt,
            "t_end": last.t,
            "seed": cfg.seed,
            "rows": self.rows.len(),
            "final_errors": errors,
            "max_abs_error": json_number(last.max_abs_error()),
            "converged": last.max_abs_error() < CONVERGENCE_TOL,
            "min_neighbor_distance": self.min_neighbor_distance,
            "events": self.events,
        })
    }
}

fn json_number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

/// Smallest distance across sensing edges.
pub fn min_neighbor_distance(positions: &[Vec3], g: &SensingGraph) -> f64 {
    g.edges()
        .iter()
        .map(|&(a, b)| (positions[a - 1] - positions[b - 1]).norm())
        .fold(f64::INFINITY, f64::min)
}

/// Closed-loop simulator state that persists across steps.
pub struct Simulator<'a> {
    formation: &'a Formation,
    cfg: &'a SimConfig,
    targets: BisphericalTargets,
    noise: BearingNoise,
    noise_rng: ChaCha8Rng,
    pinned: Vec<bool>,
    holding: Vec<bool>,
    clamped: Vec<bool>,
}

struct Evaluation {
    velocities: Vec<Vec3>,
    events: Vec<(usize, ControlEvent)>,
}

impl<'a> Simulator<'a> {
    pub fn new(formation: &'a Formation, cfg: &'a SimConfig) -> Result<Self, SimError> {
        let n = formation.n();
        cfg.validate(n)?;
        let mut pinned = vec![false; n];
        for &a in &cfg.pinned {
            pinned[a - 1] = true;
        }
        Ok(Self {
            formation,
            cfg,
            targets: formation.targets.clone(),
            noise: BearingNoise { amplitude: cfg.noise },
            noise_rng: rng_for(cfg.seed, STREAM_NOISE),
            pinned,
            holding: vec![false; n],
            clamped: vec![false; n],
        })
    }

    pub fn targets(&self) -> &BisphericalTargets {
        &self.targets
    }

    fn evaluate(&mut self, world: &WorldState) -> Evaluation {
        let n = world.n();
        let mut velocities = vec![Vec3::zeros(); n];
        let mut events = Vec::new();
        for agent in 2..=n {
            if self.pinned[agent - 1] {
                continue;
            }
            let cmd = match sense(world, &self.formation.graph, agent) {
                Ok(view) => {
                    let view = self.noise.apply(view, &mut self.noise_rng);
                    control(&view, &self.targets, &self.formation.gains, agent)
                }
                Err(e) => {
                    events.push((agent, ControlEvent::Hold { reason: (&e).into() }));
                    continue;
                }
            };
            if let Some(ev) = cmd.event {
                events.push((agent, ev));
            }
            velocities[agent - 1] = world.frame(agent).to_world(&cmd.velocity);
        }
        Evaluation { velocities, events }
    }

    fn shifted(world: &WorldState, k: &[Vec3], h: f64) -> WorldState {
        WorldState {
            t: world.t + h,
            positions: world.positions.iter().zip(k).map(|(p, v)| p + h * v).collect(),
            frames: world.frames.clone(),
        }
    }

    /// Advances `world` by one step of length `dt`. Returns the control
    /// events observed at the start of the step.
    pub fn step(&mut self, world: &WorldState, dt: f64) -> (WorldState, Vec<(usize, ControlEvent)>) {
        let e1 = self.evaluate(world);
        let next = match self.cfg.integrator {
            Integrator::Euler => Self::shifted(world, &e1.velocities, dt),
            Integrator::Rk4 => {
                let k1 = &e1.velocities;
                let k2 = self.evaluate(&Self::shifted(world, k1, dt / 2.0)).velocities;
                let k3 = self.evaluate(&Self::shifted(world, &k2, dt / 2.0)).velocities;
                let k4 = self.evaluate(&Self::shifted(world, &k3, dt)).velocities;
                let blend: Vec<Vec3> = (0..world.n())
                    .map(|m| (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m]) / 6.0)
                    .collect();
                Self::shifted(world, &blend, dt)
            }
        };
        (next, e1.events)
    }

    /// Exact (noise-free) errors of every agent.
    pub fn errors(&self, world: &WorldState) -> Vec<Option<AgentErrors>> {
        (1..=world.n())
            .map(|agent| {
                sense(world, &self.formation.graph, agent)
                    .and_then(|v: SensedView| errors_of(&v, &self.targets, agent))
                    .ok()
            })
            .collect()
    }

    fn row(&self, world: &WorldState) -> LogRow {
        let errs = self.errors(world);
        let mut errors = Vec::new();
        let mut lyapunov = Vec::new();
        for (idx, e) in errs.iter().enumerate().skip(1) {
            let width = match idx + 1 {
                2 => 1,
                3 => 2,
                _ => 3,
            };
            match e {
                Some(e) => {
                    errors.extend(e.components());
                    lyapunov.push(e.lyapunov());
                }
                None => {
                    errors.extend(std::iter::repeat(f64::NAN).take(width));
                    lyapunov.push(f64::NAN);
                }
            }
        }
        LogRow {
            t: world.t,
            positions: world.positions.clone(),
            errors,
            lyapunov,
            min_dist: min_neighbor_distance(&world.positions, &self.formation.graph),
        }
    }

    fn record_control_events(&mut self, t: f64, events: &[(usize, ControlEvent)], out: &mut Vec<SimEvent>) {
        let n = self.holding.len();
        let mut hold_now = vec![false; n];
        let mut clamp_now = vec![false; n];
        for &(agent, ev) in events {
            match ev {
                ControlEvent::Hold { reason } => {
                    hold_now[agent - 1] = true;
                    if !self.holding[agent - 1] {
                        out.push(SimEvent {
                            t,
                            agent,
                            kind: EventKind::Hold { reason },
                        });
                    }
                }
                ControlEvent::SinXiClamp { sin_xi } => {
                    clamp_now[agent - 1] = true;
                    if !self.clamped[agent - 1] {
                        out.push(SimEvent {
                            t,
                            agent,
                            kind: EventKind::SinXiClamp { sin_xi },
                        });
                    }
                }
            }
        }
        self.holding = hold_now;
        self.clamped = clamp_now;
    }

    fn record_seams(n: usize, prev: &LogRow, next: &LogRow, out: &mut Vec<SimEvent>) {
        for l in 4..=n {
            let c = 3 + 3 * (l - 4) + 2;
            let (from, to) = (prev.errors[c], next.errors[c]);
            if (to - from).abs() > std::f64::consts::PI {
                out.push(SimEvent {
                    t: next.t,
                    agent: l,
                    kind: EventKind::PhiSeam { from, to },
                });
            }
        }
    }

    /// Integrates from `world` to `t_end`, applying scale events.
    pub fn run(&mut self, mut world: WorldState) -> Result<TrajectoryLog, SimError> {
        let n = self.formation.n();
        if world.n() != n {
            return Err(SimError::AgentCount {
                expected: n,
                actual: world.n(),
            });
        }
        let (dt, steps, log_every) = (self.cfg.dt, self.cfg.steps(), self.cfg.log_every);
        let t0 = world.t;
        let mut events = Vec::new();
        let mut next_event = 0;
        let mut rows = vec![self.row(&world)];
        let mut prev_row = rows[0].clone();
        let mut min_dist = rows[0].min_dist;
        for step in 0..steps {
            while let Some(ev) = self.cfg.events.get(next_event) {
                if ev.t > world.t + 1e-9 * dt {
                    break;
                }
                self.targets.d21_star = ev.d21_star;
                events.push(SimEvent {
                    t: world.t,
                    agent: 0,
                    kind: EventKind::Scale { d21_star: ev.d21_star },
                });
                next_event += 1;
            }
            let (mut next, ctrl) = self.step(&world, dt);
            self.record_control_events(world.t, &ctrl, &mut events);
            next.t = t0 + (step + 1) as f64 * dt;
            if let Some(agent) = next.positions.iter().position(|p| !p.iter().all(|x| x.is_finite())) {
                return Err(SimError::NonFinite {
                    t: next.t,
                    agent: agent + 1,
                });
            }
            min_dist = min_dist.min(min_neighbor_distance(&next.positions, &self.formation.graph));
            world = next;
            let last = step + 1 == steps;
            if (log_every > 0 && (step + 1) % log_every == 0) || last {
                let row = self.row(&world);
                Self::record_seams(n, &prev_row, &row, &mut events);
                prev_row = row.clone();
                rows.push(row);
            }
        }
        Ok(TrajectoryLog {
            n,
            rows,
            events,
            min_neighbor_distance: min_dist,
            final_state: world,
        })
    }
}

/// Runs `cfg` from its own initial state.
pub fn run(formation: &Formation, cfg: &SimConfig) -> Result<TrajectoryLog, SimError> {
    let mut sim = Simulator::new(formation, cfg)?;
    sim.run(initial_state(formation.n(), cfg))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialResult {
    pub index: usize,
    pub seed: u64,
    pub converged: bool,
    pub final_max_error: f64,
    pub min_neighbor_distance: f64,
    /// Set when the run aborted.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub seed: u64,
    pub trials: Vec<TrialResult>,
    pub converged: usize,
    pub min_neighbor_distance: f64,
}

impl MonteCarloSummary {
    pub fn fraction(&self) -> f64 {
        self.converged as f64 / self.trials.len() as f64
    }
}

/// Per-trial seeds, drawn from a dedicated stream of `seed`.
pub fn trial_seeds(seed: u64, trials: usize) -> Vec<u64> {
    let mut rng = rng_for(seed, STREAM_TRIALS);
    (0..trials).map(|_| rng.random()).collect()
}

/// Independent runs of `template`, each with its own seed. Only the first and
/// last rows of each run are kept. The result does not depend on thread
/// scheduling.
pub fn monte_carlo(formation: &Formation, template: &SimConfig, trials: usize, seed: u64) -> MonteCarloSummary {
    assert!(trials >= 1, "at least one trial");
    let results: Vec<TrialResult> = trial_seeds(seed, trials)
        .into_par_iter()
        .enumerate()
        .map(|(index, trial_seed)| {
            let cfg = SimConfig {
                seed: trial_seed,
                log_every: 0,
                ..template.clone()
            };
            match run(formation, &cfg) {
                Ok(log) => {
                    let err = log.last().max_abs_error();
                    TrialResult {
                        index,
                        seed: trial_seed,
                        converged: err < CONVERGENCE_TOL,
                        final_max_error: err,
                        min_neighbor_distance: log.min_neighbor_distance,
                        failure: None,
                    }
                }
                Err(e) => TrialResult {
                    index,
                    seed: trial_seed,
                    converged: false,
                    final_max_error: f64::INFINITY,
                    min_neighbor_distance: f64::NAN,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    MonteCarloSummary {
        seed,
        converged: results.iter().filter(|r| r.converged).count(),
        min_neighbor_distance: results
            .iter()
            .map(|r| r.min_neighbor_distance)
            .fold(f64::INFINITY, f64::min),
        trials: results,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::DEFAULT_GAIN;
    use crate::graph::octahedron_graph;
    use crate::shape::{octahedron_embedding, octahedron_spec, targets_from_spec};

    fn octa() -> Formation {
        Formation {
            graph: octahedron_graph(),
            targets: targets_from_spec(&octahedron_spec()).unwrap(),
            gains: ControlGains::uniform(6, DEFAULT_GAIN),
        }
    }

    fn explicit(p: &[Vec3]) -> InitSpec {
        InitSpec::Explicit(p.iter().map(|v| [v.x, v.y, v.z]).collect())
    }

    #[test]
    fn desired_shape_is_stationary() {
        let f = octa();
        let p = octahedron_embedding();
        let cfg = SimConfig {
            init: explicit(&p),
            t_end: 1.0,
            ..Default::default()
        };
        let log = run(&f, &cfg).unwrap();
        for (a, b) in log.final_state.positions.iter().zip(&p) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(log.events.is_empty());
    }

    #[test]
    fn zero_duration_keeps_initial_row() {
        let cfg = SimConfig {
            t_end: 0.0,
            ..Default::default()
        };
        let log = run(&octa(), &cfg).unwrap();
        assert_eq!(log.rows.len(), 1);
        assert_eq!(log.rows[0].t, 0.0);
    }

    #[test]
    fn euler_step_is_explicit_update() {
        let f = octa();
        let cfg = SimConfig {
            integrator: Integrator::Euler,
            seed: 4,
            ..Default::default()
        };
        let mut sim = Simulator::new(&f, &cfg).unwrap();
        let w = initial_state(6, &cfg);
        let u = sim.evaluate(&w).velocities;
        let (next, _) = sim.step(&w, 0.01);
        for ((p1, p0), v) in next.positions.iter().zip(&w.positions).zip(&u) {
            assert_eq!(*p1, p0 + 0.01 * v);
        }
    }

    #[test]
    fn rk4_and_fine_euler_agree() {
        let f = octa();
        let base = SimConfig {
            seed: 8,
            t_end: 1.0,
            log_every: 0,
            ..Default::default()
        };
        let rk = run(&f, &base).unwrap();
        let eu = run(
            &f,
            &SimConfig {
                integrator: Integrator::Euler,
                dt: base.dt / 100.0,
                ..base.clone()
            },
        )
        .unwrap();
        for (a, b) in rk.final_state.positions.iter().zip(&eu.final_state.positions) {
            assert!((a - b).norm() < base.dt, "{a} vs {b}");
        }
    }

    #[test]
    fn leader_never_moves_and_runs_are_deterministic() {
        let f = octa();
        let cfg = SimConfig {
            seed: 12,
            t_end: 2.0,
            ..Default::default()
        };
        let a = run(&f, &cfg).unwrap();
        let b = run(&f, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.rows.iter().all(|r| r.positions[0] == Vec3::zeros()));
        assert!(a.rows.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn scale_event_retargets_first_follower() {
        let f = octa();
        let cfg = SimConfig {
            init: explicit(&octahedron_embedding()),
            t_end: 1.0,
            events: vec![ScaleEvent { t: 0.5, d21_star: 2.0 }],
            ..Default::default()
        };
        let log = run(&f, &cfg).unwrap();
        let ev = log
            .events
            .iter()
            .find(|e| matches!(e.kind, EventKind::Scale { .. }))
            .unwrap();
        assert!((ev.t - 0.5).abs() < 1e-12);
        // the row at the event time still shows the old setpoint
        assert!(log.at(0.5).errors[0].abs() < 1e-12);
        assert!(log.at(0.505).errors[0] < -1.0);
    }

    #[test]
    fn header_layout() {
        let h = csv_header(6);
        assert_eq!(&h[..4], &["t", "x1", "y1", "z1"]);
        let e = h.iter().position(|c| c == "e_d").unwrap();
        assert_eq!(e, 19);
        assert_eq!(
            &h[e..e + 6],
            &["e_d", "e_xi_3", "e_eta_3", "e_xi_4", "e_eta_4", "e_phi_4"]
        );
        assert_eq!(h.last().unwrap(), "min_dist");
        assert_eq!(h.len(), 1 + 18 + 12 + 5 + 1);
        let log = run(
            &octa(),
            &SimConfig {
                t_end: 0.01,
                ..Default::default()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x1,y1,z1,"));
        assert_eq!(text.lines().count(), 1 + log.rows.len());
    }

    #[test]
    fn bad_configs_are_rejected() {
        let f = octa();
        let bad_dt = SimConfig {
            dt: 0.0,
            ..Default::default()
        };
        assert_eq!(run(&f, &bad_dt).unwrap_err(), SimError::BadStep(0.0));
        let unsorted = SimConfig {
            events: vec![
                ScaleEvent { t: 2.0, d21_star: 1.0 },
                ScaleEvent { t: 1.0, d21_star: 1.0 },
            ],
            ..Default::default()
        };
        assert_eq!(run(&f, &unsorted).unwrap_err(), SimError::BadEvents);
        let short = SimConfig {
            init: InitSpec::Explicit(vec![[0.0; 3]; 2]),
            ..Default::default()
        };
        assert!(matches!(run(&f, &short), Err(SimError::AgentCount { .. })));
    }

    #[test]
    fn random_cube_respects_bounds() {
        let mut rng = rng_for(1, 0);
        for _ in 0..50 {
            let p = random_cube(6, 2.0, &mut rng);
            assert_eq!(p[0], Vec3::zeros());
            assert!(p.iter().all(|v| v.amax() <= 2.0));
        }
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let f = octa();
        let cfg = SimConfig {
            t_end: 1.0,
            ..Default::default()
        };
        let a = monte_carlo(&f, &cfg, 4, 99);
        let b = monte_carlo(&f, &cfg, 4, 99);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.trials.len(), 4);
    }
}
