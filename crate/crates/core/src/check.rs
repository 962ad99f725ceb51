//! Seeded property suites over the geometry, the error dynamics, the
//! shape-equivalence oracle and the closed loop.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::Rotation3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::controller::{control, AgentGains, ControlGains, DEFAULT_GAIN};
use crate::dynamics::{
    coordinate_rates, coordinate_rates_numeric, edot_distance, eta_rows_closed, eta_rows_vector, phi_rows,
    wdot_ordinary, xi_rows_closed, xi_rows_projection, TetraGeometry,
};
use crate::geometry::{
    bearing, dihedral_cos, dihedral_cos_from_face_angles, frame_of, from_cartesian, phi_at, recover_bearings,
    signed_volume, to_cartesian, wrap_angle, BisphericalBasis, BisphericalCoords, TetraBearings, Vec3, VirtualFrame,
};
use crate::graph::{henneberg_grow, octahedron_graph, SensingGraph};
use crate::sensing::{sense, WorldState};
use crate::shape::{
    lemma1_oracle, octahedron_spec, reflect_through_plane, signature_of, spec_from_embedding, targets_from_spec,
    MatchedTolerance, ShapeSpec,
};
use crate::sim::{monte_carlo, rng_for, Formation, MonteCarloSummary, SimConfig};

/// Basis constructor under test.
pub type BasisFn = fn(&BisphericalCoords, &VirtualFrame) -> crate::geometry::Result<BisphericalBasis>;

/// Outcome of one property over many samples.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub samples: usize,
    pub failures: usize,
    /// Largest residual seen.
    pub worst: f64,
    pub tolerance: f64,
}

impl PropertyOutcome {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            samples: 0,
            failures: 0,
            worst: 0.0,
            tolerance,
        }
    }

    fn record(&mut self, residual: f64) {
        self.samples += 1;
        // NaN counts as a failure
        if !(residual <= self.tolerance) {
            self.failures += 1;
        }
        if residual.is_nan() || residual > self.worst {
            self.worst = residual;
        }
    }

    fn record_bool(&mut self, ok: bool) {
        self.record(if ok { 0.0 } else { f64::INFINITY });
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.samples > 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub seed: u64,
    pub properties: Vec<PropertyOutcome>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyOutcome::passed)
    }

    pub fn property(&self, name: &str) -> Option<&PropertyOutcome> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn pass_count(&self) -> usize {
        self.properties.iter().filter(|p| p.passed()).count()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: {}/{} properties passed (seed {})",
            self.suite,
            self.pass_count(),
            self.properties.len(),
            self.seed
        )?;
        for p in &self.properties {
            writeln!(
                f,
                "  [{}] {:<32} {:>6} samples, {} failures, worst {:.3e} (tol {:.0e})",
                if p.passed() { "ok" } else { "FAIL" },
                p.name,
                p.samples,
                p.failures,
                p.worst,
                p.tolerance
            )?;
        }
        Ok(())
    }
}

fn cube(rng: &mut ChaCha8Rng, r: f64) -> Vec3 {
    Vec3::from_fn(|_, _| rng.random_range(-r..r))
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation3<f64> {
    *crate::sensing::AgentFrame::random(rng).rotation()
}

/// Random non-degenerate tetrahedron `ijkl`: pairwise distances above
/// `0.2` and both faces on `ij` away from collinear.
fn random_tetra(rng: &mut ChaCha8Rng) -> [Vec3; 4] {
    loop {
        let p = [0, 1, 2, 3].map(|_| cube(rng, 1.0));
        let far = (0..4).all(|a| (a + 1..4).all(|b| (p[a] - p[b]).norm() > 0.2));
        let e = p[1] - p[0];
        let wide = e.cross(&(p[2] - p[0])).norm() > 0.05 * e.norm() && e.cross(&(p[3] - p[0])).norm() > 0.05 * e.norm();
        if far && wide {
            return p;
        }
    }
}

/// Coordinates with `sin(xi)` and the transform denominator well away from
/// zero.
fn random_coords(rng: &mut ChaCha8Rng) -> BisphericalCoords {
    loop {
        let b = BisphericalCoords::new(
            rng.random_range(0.05..std::f64::consts::PI - 0.05),
            rng.random_range(-3.0..3.0),
            rng.random_range(0.0..std::f64::consts::TAU),
        );
        if b.denominator() > 1e-3 {
            return b;
        }
    }
}

fn random_frame(rng: &mut ChaCha8Rng) -> VirtualFrame {
    let p = random_tetra(rng);
    frame_of(&p[0], &p[1], &p[2]).expect("non-degenerate triple")
}

/// Basis, transform, identity and bearing-recovery properties.
pub fn geometry_suite(seed: u64, samples: usize, basis: BasisFn) -> SuiteReport {
    let mut rng = rng_for(seed, 10);
    let mut ortho = PropertyOutcome::new("basis orthonormality", 1e-9);
    let mut round_trip = PropertyOutcome::new("transform round trip", 1e-9);
    let mut sin_volume = PropertyOutcome::new("sin(phi)-volume identity", 1e-9);
    let mut dihedral = PropertyOutcome::new("dihedral dual form", 1e-9);
    let mut directional = PropertyOutcome::new("basis directional derivative", 1e-6);
    let mut antisym = PropertyOutcome::new("volume antisymmetry", 0.0);
    let mut recovery = PropertyOutcome::new("bearing recovery", 1e-12);

    for _ in 0..samples {
        let frame = random_frame(&mut rng);
        let c = random_coords(&mut rng);
        match basis(&c, &frame) {
            Ok(b) => {
                let (x, y, z) = (b.xi_hat, b.eta_hat, b.phi_hat);
                let residual = [
                    x.dot(&y).abs(),
                    x.dot(&z).abs(),
                    y.dot(&z).abs(),
                    (x.norm() - 1.0).abs(),
                    (y.norm() - 1.0).abs(),
                    (z.norm() - 1.0).abs(),
                ]
                .into_iter()
                .fold(0.0, f64::max);
                ortho.record(residual);

                // moving along each basis vector changes only its own coordinate
                let p = to_cartesian(&c, &frame).expect("denominator is bounded");
                let h = 1e-6;
                let mut worst: f64 = 0.0;
                let mut positive = true;
                for (axis, dir) in [x, y, z].into_iter().enumerate() {
                    let plus = from_cartesian(&(p + h * dir), &frame).unwrap();
                    let minus = from_cartesian(&(p - h * dir), &frame).unwrap();
                    let dphi = wrap_angle(plus.phi - minus.phi + PI) - PI;
                    let rates = [
                        (plus.xi - minus.xi) / (2.0 * h),
                        (plus.eta - minus.eta) / (2.0 * h),
                        dphi / (2.0 * h),
                    ];
                    positive &= rates[axis] > 0.0;
                    for (m, r) in rates.iter().enumerate() {
                        if m != axis {
                            worst = worst.max(r.abs());
                        }
                    }
                }
                directional.record(if positive { worst } else { f64::INFINITY });
            }
            Err(_) => {
                ortho.record(f64::INFINITY);
                directional.record(f64::INFINITY);
            }
        }

        // round trip of a point at least 1e-3 from both foci
        let p = loop {
            let p = frame.origin + cube(&mut rng, 3.0 * frame.a.max(0.5));
            if (p - frame.focus_i()).norm() >= 1e-3 && (p - frame.focus_j()).norm() >= 1e-3 {
                break p;
            }
        };
        let back = from_cartesian(&p, &frame).and_then(|c| to_cartesian(&c, &frame));
        round_trip.record(back.map_or(f64::INFINITY, |q| (q - p).norm() / p.norm().max(1.0)));

        let [pi, pj, pk, pl] = random_tetra(&mut rng);
        let volume = signed_volume(&pi, &pj, &pk, &pl);
        let (p_ji, p_ki) = (pi - pj, pi - pk);
        let (p_li, p_lj) = (pi - pl, pj - pl);
        let rhs = 6.0 * volume * p_ji.norm() / (p_ji.cross(&p_ki).norm() * p_li.cross(&p_lj).norm());
        let phi = phi_at(&pi, &pj, &pk, &pl).unwrap();
        sin_volume.record((phi.sin() - rhs).abs());

        let b = |p: &Vec3| bearing(&pi, p).unwrap();
        let cross_form = dihedral_cos(&b(&pj), &b(&pk), &b(&pl)).unwrap();
        let face = |u: &Vec3, w: &Vec3| b(u).dot(&b(w));
        let face_form = dihedral_cos_from_face_angles(face(&pk, &pl), face(&pj, &pk), face(&pj, &pl)).unwrap();
        dihedral.record((cross_form - face_form).abs());

        let flips = [
            signed_volume(&pj, &pi, &pk, &pl),
            signed_volume(&pk, &pj, &pi, &pl),
            signed_volume(&pi, &pk, &pj, &pl),
        ];
        antisym.record(flips.iter().map(|&f| (f + volume).abs()).fold(0.0, f64::max));

        let tb = TetraBearings::from_positions(&pi, &pj, &pk, &pl).unwrap();
        let r = |a: &Vec3, b: &Vec3| (a - pl).norm() / (b - pl).norm();
        match recover_bearings(&tb.v_li, &tb.v_lj, &tb.v_lk, r(&pi, &pj), r(&pi, &pk)) {
            Ok((v_ji, v_ki)) => recovery.record(
                (v_ji.into_inner() - tb.v_ji.into_inner())
                    .norm()
                    .max((v_ki.into_inner() - tb.v_ki.into_inner()).norm()),
            ),
            Err(_) => recovery.record(f64::INFINITY),
        }
    }

    SuiteReport {
        suite: "geometry",
        seed,
        properties: vec![ortho, round_trip, sin_volume, dihedral, directional, antisym, recovery],
    }
}

/// Closed-form rate rows against central differences and vector forms, and
/// the sign of the unforced Lyapunov derivative.
pub fn dynamics_suite(seed: u64, samples: usize) -> SuiteReport {
    let mut rng = rng_for(seed, 11);
    let h = 1e-6;
    let mut xi_fd = PropertyOutcome::new("xi rate vs central difference", 1e-6);
    let mut eta_fd = PropertyOutcome::new("eta rate vs central difference", 1e-6);
    let mut phi_fd = PropertyOutcome::new("phi rate vs central difference", 1e-6);
    let mut ed_fd = PropertyOutcome::new("e_d rate vs central difference", 1e-6);
    let mut identities = PropertyOutcome::new("row-basis identities", 1e-9);
    let mut forms = PropertyOutcome::new("closed vs vector rows", 1e-9);
    let mut decoupling = PropertyOutcome::new("dihedral term decoupling", 1e-12);
    let mut wdot = PropertyOutcome::new("unforced W derivative sign", 0.0);

    let targets = targets_from_spec(&octahedron_spec()).expect("octahedron targets");
    let gains = ControlGains::uniform(6, DEFAULT_GAIN);
    let g = octahedron_graph();

    let mut taken = 0;
    while taken < samples {
        let p = random_tetra(&mut rng);
        let Ok(geo) = TetraGeometry::new(&p[0], &p[1], &p[2], &p[3]) else {
            continue;
        };
        if geo.l.xi.sin() < 0.05 || geo.k.xi.sin() < 0.05 {
            continue;
        }
        taken += 1;
        let v = [0, 1, 2, 3].map(|_| cube(&mut rng, 1.0));
        match (coordinate_rates(&p, &v), coordinate_rates_numeric(&p, &v, h)) {
            (Ok(a), Ok(n)) => {
                xi_fd.record((a[0] - n[0]).abs());
                eta_fd.record((a[1] - n[1]).abs());
                phi_fd.record((a[2] - n[2]).abs());
            }
            _ => {
                xi_fd.record(f64::INFINITY);
                eta_fd.record(f64::INFINITY);
                phi_fd.record(f64::INFINITY);
            }
        }

        // agent 2 relative to a fixed leader, under its control law
        let p21 = p[0] - p[1];
        let d21_star: f64 = rng.random_range(0.5..2.0);
        let kappa: f64 = rng.random_range(0.5..3.0);
        let e_d = |q: &Vec3| q.norm_squared() - d21_star * d21_star;
        let u2 = kappa * e_d(&p21) * p21;
        let numeric = (e_d(&(p21 - h * u2)) - e_d(&(p21 + h * u2))) / (2.0 * h);
        ed_fd.record((edot_distance(e_d(&p21), d21_star, kappa) - numeric).abs());

        let m = geo.metric();
        let s = geo.l.xi.sin();
        let (xr, er, pr) = (xi_rows_closed(&geo), eta_rows_closed(&geo), phi_rows(&geo).unwrap());
        identities.record(
            [
                (xr.l - m * geo.basis.xi_hat).norm() / m,
                (er.l - m * geo.basis.eta_hat).norm() / m,
                (pr.l - m / s * geo.basis.phi_hat).norm() / (m / s),
            ]
            .into_iter()
            .fold(0.0, f64::max),
        );
        let xp = xi_rows_projection(&p[0], &p[1], &p[3]).unwrap();
        let ev = eta_rows_vector(&p[0], &p[1], &p[3]).unwrap();
        forms.record(
            [
                (xr.i - xp.i).norm() / xp.i.norm().max(1.0),
                (xr.j - xp.j).norm() / xp.j.norm().max(1.0),
                (er.i - ev.i).norm() / ev.i.norm().max(1.0),
                (er.j - ev.j).norm() / ev.j.norm().max(1.0),
            ]
            .into_iter()
            .fold(0.0, f64::max),
        );
        decoupling.record(
            xr.l.dot(&geo.basis.phi_hat)
                .abs()
                .max(er.l.dot(&geo.basis.phi_hat).abs())
                / m,
        );

        // unforced: put the follower's neighbors at the desired octahedron
        // and the follower anywhere, then compare signs of dW/dt
        let mut world = crate::shape::octahedron_embedding();
        let agent = rng.random_range(4..=6);
        world[agent - 1] = cube(&mut rng, 2.0);
        let w = WorldState::new(world.clone());
        let Ok(view) = sense(&w, &g, agent) else {
            wdot.record(f64::INFINITY);
            continue;
        };
        let cmd = control(&view, &targets, &gains, agent);
        match (cmd.errors, cmd.event) {
            (Some(crate::controller::AgentErrors::Ordinary { e_xi, e_eta, e_phi }), None) => {
                let [i, j, k] = g.neighbor_triple(agent).unwrap();
                let q = [world[i - 1], world[j - 1], world[k - 1], world[agent - 1]];
                let geo = TetraGeometry::new(&q[0], &q[1], &q[2], &q[3]).unwrap();
                let analytic = wdot_ordinary(&geo.l, geo.frame.a, [e_xi, e_eta, e_phi], gains.agent(agent));
                let z = Vec3::zeros();
                let rates = coordinate_rates(&q, &[z, z, z, cmd.velocity]).unwrap();
                let from_rows = e_xi * rates[0] + e_eta * rates[1] + e_phi * rates[2];
                let consistent = (analytic - from_rows).abs() <= 1e-9 * analytic.abs().max(1.0);
                wdot.record(if analytic <= 0.0 && consistent {
                    0.0
                } else {
                    f64::INFINITY
                });
            }
            _ => wdot.record_bool(true),
        }
    }

    SuiteReport {
        suite: "dynamics",
        seed,
        properties: vec![xi_fd, eta_fd, phi_fd, ed_fd, identities, forms, decoupling, wdot],
    }
}

/// Random valid spec: a Henneberg-grown graph on `n` agents with a random
/// well-conditioned embedding.
pub fn random_spec(rng: &mut ChaCha8Rng, n: usize) -> (ShapeSpec, Vec<Vec3>) {
    loop {
        let mut g = SensingGraph::seed();
        while g.n() < n {
            let m = g.n();
            let mut triples = Vec::new();
            for i in 1..=m {
                for j in i + 1..=m {
                    for k in j + 1..=m {
                        let adj = |a: usize, b: usize| g.has_edge(b, a);
                        if adj(i, j) && adj(i, k) && adj(j, k) {
                            triples.push((i, j, k));
                        }
                    }
                }
            }
            let t = triples[rng.random_range(0..triples.len())];
            g = henneberg_grow(&g, t).expect("mutually adjacent triple");
        }
        let p: Vec<Vec3> = (0..n).map(|_| cube(rng, 1.0)).collect();
        let far = (0..n).all(|a| (a + 1..n).all(|b| (p[a] - p[b]).norm() > 0.3));
        if !far {
            continue;
        }
        let Ok(spec) = spec_from_embedding(&p, &g) else {
            continue;
        };
        if spec.volumes().iter().any(|v| v.abs() < 1e-2) {
            continue;
        }
        if targets_from_spec(&spec).is_ok() {
            return (spec, p);
        }
    }
}

/// Candidate families for the equivalence oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Candidate {
    RigidMotion,
    TinyPerturbation,
    LargePerturbation,
    MirrorImage,
    ReflectedFollower,
}

const CANDIDATES: [Candidate; 5] = [
    Candidate::RigidMotion,
    Candidate::TinyPerturbation,
    Candidate::LargePerturbation,
    Candidate::MirrorImage,
    Candidate::ReflectedFollower,
];

/// Candidate configuration of family `kind` for the desired embedding `p`.
pub fn candidate(rng: &mut ChaCha8Rng, spec: &ShapeSpec, p: &[Vec3], kind: Candidate, tol: f64) -> Vec<Vec3> {
    let r = random_rotation(rng);
    let shift = cube(rng, 5.0);
    let moved: Vec<Vec3> = p.iter().map(|q| r * q + shift).collect();
    match kind {
        Candidate::RigidMotion => moved,
        Candidate::TinyPerturbation => moved.iter().map(|q| q + cube(rng, tol * 1e-3)).collect(),
        Candidate::LargePerturbation => {
            let mut out = moved;
            let agent = rng.random_range(1..out.len());
            let dir = cube(rng, 1.0).normalize();
            out[agent] += rng.random_range(0.05..0.5) * dir;
            out
        }
        Candidate::MirrorImage => moved.iter().map(|q| Vec3::new(-q.x, q.y, q.z)).collect(),
        Candidate::ReflectedFollower => {
            let mut out = moved;
            let l = rng.random_range(4..=out.len());
            let [i, j, k] = spec.graph().neighbor_triple(l).unwrap();
            out[l - 1] = reflect_through_plane(&out[l - 1], &out[i - 1], &out[j - 1], &out[k - 1]);
            out
        }
    }
}

/// Agreement between the signature comparison and the distance-and-volume
/// comparison over `pairs` spec and configuration pairs.
pub fn lemma1_suite(seed: u64, pairs: usize) -> SuiteReport {
    let mut rng = rng_for(seed, 12);
    let tol = 1e-6;
    let mut agreement = PropertyOutcome::new("signature vs distance+volume", 0.0);
    let mut accepted = PropertyOutcome::new("desired-shape families accepted", 0.0);
    let mut rejected = PropertyOutcome::new("wrong-shape families rejected", 0.0);
    for m in 0..pairs {
        let n = rng.random_range(4..=7);
        let (spec, p) = random_spec(&mut rng, n);
        let kind = CANDIDATES[m % CANDIDATES.len()];
        let q = candidate(&mut rng, &spec, &p, kind, tol);
        let targets = targets_from_spec(&spec).unwrap();
        let by_signature = signature_of(&q, spec.graph())
            .map(|s| s.matches(&targets, MatchedTolerance::for_spec(&spec, tol)))
            .unwrap_or(false);
        let by_distance = lemma1_oracle(&q, &spec, tol);
        agreement.record_bool(by_signature == by_distance);
        let expect = matches!(kind, Candidate::RigidMotion | Candidate::TinyPerturbation);
        if expect {
            accepted.record_bool(by_distance);
        } else {
            rejected.record_bool(!by_distance);
        }
    }
    SuiteReport {
        suite: "lemma1",
        seed,
        properties: vec![agreement, accepted, rejected],
    }
}

/// Minimum convergent fraction for the Monte Carlo suite.
pub const MONTE_CARLO_FRACTION: f64 = 0.99;
/// Simulated horizon of each Monte Carlo trial (s).
pub const MONTE_CARLO_T_END: f64 = 40.0;

/// The octahedron closed loop from random cube starts.
pub fn montecarlo_suite(seed: u64, trials: usize) -> (SuiteReport, MonteCarloSummary) {
    let formation = Formation {
        graph: octahedron_graph(),
        targets: targets_from_spec(&octahedron_spec()).expect("octahedron targets"),
        gains: ControlGains::new(vec![AgentGains::default(); 6]).expect("positive gains"),
    };
    let cfg = SimConfig {
        t_end: MONTE_CARLO_T_END,
        ..SimConfig::default()
    };
    let summary = monte_carlo(&formation, &cfg, trials, seed);
    let mut convergence = PropertyOutcome::new("trials converged below 1e-6", 0.0);
    let needed = (MONTE_CARLO_FRACTION * trials as f64).ceil() as usize;
    convergence.samples = trials;
    convergence.failures = if summary.converged >= needed {
        0
    } else {
        trials - summary.converged
    };
    convergence.worst = (trials - summary.converged) as f64;
    let mut separation = PropertyOutcome::new("neighbor separation above 1e-3", 0.0);
    for t in &summary.trials {
        separation.record_bool(t.min_neighbor_distance > 1e-3);
    }
    (
        SuiteReport {
            suite: "montecarlo",
            seed,
            properties: vec![convergence, separation],
        },
        summary,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::basis_at;

    /// `f2` with the wrong sign on its constant term.
    fn perturbed_basis(b: &BisphericalCoords, f: &VirtualFrame) -> crate::geometry::Result<BisphericalBasis> {
        let mut out = basis_at(b, f)?;
        let h = b.denominator();
        let f2 = (b.eta.cosh() * b.xi.cos() + 1.0) / h;
        let [f1, _, f3, f4] = out.f;
        let (x, y, z) = (f.axes.x.into_inner(), f.axes.y.into_inner(), f.axes.z.into_inner());
        out.xi_hat = f1 * x + f2 * f3 * y + f2 * f4 * z;
        out.eta_hat = -f2 * x + f1 * f3 * y + f1 * f4 * z;
        Ok(out)
    }

    #[test]
    fn geometry_suite_passes() {
        let r = geometry_suite(7, 500, basis_at);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn geometry_suite_catches_a_wrong_basis() {
        let r = geometry_suite(7, 200, perturbed_basis);
        assert!(!r.passed());
        assert!(!r.property("basis orthonormality").unwrap().passed());
        assert!(r.property("transform round trip").unwrap().passed());
    }

    #[test]
    fn dynamics_suite_passes() {
        let r = dynamics_suite(7, 500);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn lemma1_suite_passes() {
        let r = lemma1_suite(7, 100);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn report_lists_each_property() {
        let text = lemma1_suite(1, 10).to_string();
        assert!(text.starts_with("lemma1: 3/3"));
        assert_eq!(text.lines().count(), 4);
    }
}
