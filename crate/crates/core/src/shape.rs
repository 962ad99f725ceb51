//! Desired formations: distances plus signed volumes, their bispherical
//! targets, and the equivalence between the two descriptions.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::Matrix5;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::geometry::{
    bearing, dihedral_cos_from_face_angles, eta_of, phi_at, pos, signed_volume, stacked_volumes, xi_of, GeometryError,
    Vec3,
};
use crate::graph::{tetrahedra, validate_graph, SensingGraph, TetrahedronRef, ValidationReport};

/// Volumes below this magnitude count as planar.
pub const EPS_VOLUME: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("sensing graph is invalid: {0}")]
    InvalidGraph(ValidationReport),
    #[error("edge ({0}, {1}) has no desired distance")]
    MissingDistance(usize, usize),
    #[error("desired distance for ({0}, {1}) is not an edge of the graph")]
    UnknownEdge(usize, usize),
    #[error("desired distance {2} for edge ({0}, {1}) must be positive")]
    NonPositiveDistance(usize, usize, f64),
    #[error("face ({0}, {1}, {2}) violates the strict triangle inequality")]
    Triangle(usize, usize, usize),
    #[error("expected {expected} desired volumes, got {actual}")]
    VolumeCount { expected: usize, actual: usize },
    #[error("tetrahedron {vertices:?}: distances admit no tetrahedron")]
    NotRealizable { vertices: [usize; 4] },
    #[error("tetrahedron {vertices:?}: |V*| = {volume} exceeds {max} attainable from its distances")]
    VolumeBound {
        vertices: [usize; 4],
        volume: f64,
        max: f64,
    },
    #[error("tetrahedron {vertices:?} has zero desired volume; its dihedral target is undefined")]
    UnsupportedTarget { vertices: [usize; 4] },
    #[error("embedding has {actual} positions, graph has {expected} agents")]
    EmbeddingSize { expected: usize, actual: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Graph, desired edge lengths `d*_ji` and desired signed volumes `V*`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeSpec {
    graph: SensingGraph,
    distances: BTreeMap<(usize, usize), f64>,
    volumes: Vec<f64>,
}

impl ShapeSpec {
    /// `distances` is keyed by directed edge `(source, sink)`.
    pub fn new(
        graph: SensingGraph,
        distances: BTreeMap<(usize, usize), f64>,
        volumes: Vec<f64>,
    ) -> Result<Self, ShapeError> {
        let report = validate_graph(&graph);
        if !report.is_ok() {
            return Err(ShapeError::InvalidGraph(report));
        }
        for &(s, t) in distances.keys() {
            if !graph.has_edge(s, t) {
                return Err(ShapeError::UnknownEdge(s, t));
            }
        }
        for &(s, t) in graph.edges() {
            match distances.get(&(s, t)) {
                None => return Err(ShapeError::MissingDistance(s, t)),
                Some(&d) if !(d > 0.0 && d.is_finite()) => return Err(ShapeError::NonPositiveDistance(s, t, d)),
                _ => {}
            }
        }
        let tets = tetrahedra(&graph);
        if volumes.len() != tets.len() {
            return Err(ShapeError::VolumeCount {
                expected: tets.len(),
                actual: volumes.len(),
            });
        }
        let spec = Self {
            graph,
            distances,
            volumes,
        };
        spec.check_triangle(1, 2, 3)?;
        for t in &tets {
            let [i, j, k, l] = t.vertices;
            for (a, b, c) in [(i, j, k), (i, j, l), (i, k, l), (j, k, l)] {
                spec.check_triangle(a, b, c)?;
            }
            let max = spec.max_volume(t)?;
            let volume = spec.volumes[t.index];
            if volume.abs() > max * (1.0 + 1e-9) + EPS_VOLUME {
                return Err(ShapeError::VolumeBound {
                    vertices: t.vertices,
                    volume,
                    max,
                });
            }
        }
        Ok(spec)
    }

    pub fn graph(&self) -> &SensingGraph {
        &self.graph
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn distances(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.distances
    }

    /// Desired distance between two adjacent agents, in either order.
    pub fn distance(&self, a: usize, b: usize) -> Option<f64> {
        let key = if a > b { (a, b) } else { (b, a) };
        self.distances.get(&key).copied()
    }

    pub fn d21(&self) -> f64 {
        self.distances[&(2, 1)]
    }

    /// Shortest desired edge.
    pub fn min_distance(&self) -> f64 {
        self.distances.values().copied().fold(f64::INFINITY, f64::min)
    }

    /// Same shape resized by `sigma`.
    pub fn scaled(&self, sigma: f64) -> Self {
        Self {
            graph: self.graph.clone(),
            distances: self.distances.iter().map(|(&e, &d)| (e, d * sigma)).collect(),
            volumes: self.volumes.iter().map(|v| v * sigma.powi(3)).collect(),
        }
    }

    fn d(&self, a: usize, b: usize) -> f64 {
        self.distance(a, b).expect("validated spec has every triangulated edge")
    }

    fn check_triangle(&self, a: usize, b: usize, c: usize) -> Result<(), ShapeError> {
        let (x, y, z) = (self.d(a, b), self.d(b, c), self.d(a, c));
        if x + y > z && y + z > x && x + z > y {
            Ok(())
        } else {
            Err(ShapeError::Triangle(a, b, c))
        }
    }

    /// Volume magnitude implied by the six edge lengths (Cayley-Menger).
    fn max_volume(&self, t: &TetrahedronRef) -> Result<f64, ShapeError> {
        let v = t.vertices;
        let mut cm = Matrix5::<f64>::from_element(1.0);
        cm[(0, 0)] = 0.0;
        for a in 0..4 {
            cm[(a + 1, a + 1)] = 0.0;
            for b in 0..4 {
                if a != b {
                    cm[(a + 1, b + 1)] = self.d(v[a], v[b]).powi(2);
                }
            }
        }
        let v2 = cm.determinant() / 288.0;
        let scale = (0..4)
            .flat_map(|a| (0..4).map(move |b| (a, b)))
            .filter(|(a, b)| a < b)
            .map(|(a, b)| self.d(v[a], v[b]))
            .fold(0.0, f64::max)
            .powi(6);
        if v2 < -1e-12 * scale {
            return Err(ShapeError::NotRealizable { vertices: v });
        }
        Ok(v2.max(0.0).sqrt())
    }
}

/// Desired coordinates of one ordinary follower.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FollowerTarget {
    pub agent: usize,
    pub xi_star: f64,
    pub eta_star: f64,
    pub phi_star: f64,
}

/// Per-agent setpoints of the control laws.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BisphericalTargets {
    pub d21_star: f64,
    pub xi3_star: f64,
    pub eta3_star: f64,
    /// Agents `4..=n` in order.
    pub followers: Vec<FollowerTarget>,
}

impl BisphericalTargets {
    pub fn n(&self) -> usize {
        3 + self.followers.len()
    }

    pub fn follower(&self, agent: usize) -> &FollowerTarget {
        &self.followers[agent - 4]
    }

    /// Flat `{"d21_star", "xi3_star", "eta3_star", "xi4_star", ...}` object.
    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        map.insert("d21_star".into(), self.d21_star.into());
        map.insert("xi3_star".into(), self.xi3_star.into());
        map.insert("eta3_star".into(), self.eta3_star.into());
        for t in &self.followers {
            map.insert(format!("xi{}_star", t.agent), t.xi_star.into());
            map.insert(format!("eta{}_star", t.agent), t.eta_star.into());
            map.insert(format!("phi{}_star", t.agent), t.phi_star.into());
        }
        Value::Object(map)
    }
}

/// Law of cosines: angle opposite side `opposite`.
fn angle_from_sides(adj1: f64, adj2: f64, opposite: f64) -> f64 {
    ((adj1 * adj1 + adj2 * adj2 - opposite * opposite) / (2.0 * adj1 * adj2))
        .clamp(-1.0, 1.0)
        .acos()
}

fn cos_from_sides(adj1: f64, adj2: f64, opposite: f64) -> f64 {
    ((adj1 * adj1 + adj2 * adj2 - opposite * opposite) / (2.0 * adj1 * adj2)).clamp(-1.0, 1.0)
}

/// Desired bispherical coordinates from distances and volume signs.
pub fn targets_from_spec(s: &ShapeSpec) -> Result<BisphericalTargets, ShapeError> {
    let (d21, d31, d32) = (s.d(2, 1), s.d(3, 1), s.d(3, 2));
    let mut followers = Vec::new();
    for t in tetrahedra(s.graph()) {
        let [i, j, k, l] = t.vertices;
        let volume = s.volumes[t.index];
        if volume.abs() <= EPS_VOLUME {
            return Err(ShapeError::UnsupportedTarget { vertices: t.vertices });
        }
        let (d_li, d_lj, d_lk) = (s.d(l, i), s.d(l, j), s.d(l, k));
        let (d_ji, d_ki, d_kj) = (s.d(j, i), s.d(k, i), s.d(k, j));
        let beta = dihedral_cos_from_face_angles(
            cos_from_sides(d_ki, d_li, d_lk),
            cos_from_sides(d_ji, d_ki, d_kj),
            cos_from_sides(d_ji, d_li, d_lj),
        )?;
        let alpha = beta.acos();
        followers.push(FollowerTarget {
            agent: l,
            xi_star: angle_from_sides(d_li, d_lj, d_ji),
            eta_star: (d_li / d_lj).ln(),
            phi_star: if volume > 0.0 { alpha } else { TAU - alpha },
        });
    }
    Ok(BisphericalTargets {
        d21_star: d21,
        xi3_star: angle_from_sides(d31, d32, d21),
        eta3_star: (d31 / d32).ln(),
        followers,
    })
}

/// Reads distances and volumes off an example embedding.
pub fn spec_from_embedding(p_star: &[Vec3], g: &SensingGraph) -> Result<ShapeSpec, ShapeError> {
    if p_star.len() != g.n() {
        return Err(ShapeError::EmbeddingSize {
            expected: g.n(),
            actual: p_star.len(),
        });
    }
    let volumes = stacked_volumes(p_star, g);
    for (t, v) in tetrahedra(g).iter().zip(&volumes) {
        if v.abs() <= EPS_VOLUME {
            return Err(ShapeError::UnsupportedTarget { vertices: t.vertices });
        }
    }
    let distances = g
        .edges()
        .iter()
        .map(|&(s, t)| ((s, t), (pos(p_star, s) - pos(p_star, t)).norm()))
        .collect();
    ShapeSpec::new(g.clone(), distances, volumes)
}

/// Stacked formation variables `Gamma`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FormationSignature {
    pub d21: f64,
    pub xi3: f64,
    pub eta3: f64,
    /// `(xi, eta, phi)` of agents `4..=n`.
    pub followers: Vec<[f64; 3]>,
}

impl FormationSignature {
    pub fn len(&self) -> usize {
        3 + 3 * self.followers.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Componentwise comparison against targets, distance tolerance for
    /// `d21` and angle tolerance for everything else.
    pub fn matches(&self, t: &BisphericalTargets, tol: MatchedTolerance) -> bool {
        if (self.d21 - t.d21_star).abs() > tol.distance {
            return false;
        }
        if (self.xi3 - t.xi3_star).abs() > tol.angle || (self.eta3 - t.eta3_star).abs() > tol.angle {
            return false;
        }
        self.followers.iter().zip(&t.followers).all(|(&[xi, eta, phi], ft)| {
            (xi - ft.xi_star).abs() <= tol.angle
                && (eta - ft.eta_star).abs() <= tol.angle
                && (phi - ft.phi_star).abs() <= tol.angle
        })
    }
}

/// Distance/volume tolerance paired with the angle tolerance `tol / l_min`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedTolerance {
    pub distance: f64,
    pub angle: f64,
}

impl MatchedTolerance {
    pub fn for_spec(s: &ShapeSpec, tol: f64) -> Self {
        Self {
            distance: tol,
            angle: tol / s.min_distance(),
        }
    }
}

pub fn signature_of(p: &[Vec3], g: &SensingGraph) -> Result<FormationSignature, GeometryError> {
    let at = |a| pos(p, a);
    let (p1, p2, p3) = (at(1), at(2), at(3));
    let xi3 = xi_of(&bearing(&p3, &p1)?, &bearing(&p3, &p2)?);
    let eta3 = eta_of((p1 - p3).norm(), (p2 - p3).norm())?;
    let mut followers = Vec::with_capacity(g.n().saturating_sub(3));
    for t in tetrahedra(g) {
        let [i, j, k, l] = t.vertices;
        let (pi, pj, pk, pl) = (at(i), at(j), at(k), at(l));
        followers.push([
            xi_of(&bearing(&pl, &pi)?, &bearing(&pl, &pj)?),
            eta_of((pi - pl).norm(), (pj - pl).norm())?,
            phi_at(&pi, &pj, &pk, &pl)?,
        ]);
    }
    Ok(FormationSignature {
        d21: (p2 - p1).norm(),
        xi3,
        eta3,
        followers,
    })
}

/// Distance-and-volume acceptance test: every edge length within `tol` of
/// `d*` and every signed volume within `tol` of `V*`.
pub fn lemma1_oracle(p: &[Vec3], s: &ShapeSpec, tol: f64) -> bool {
    let distances_ok = s
        .distances
        .iter()
        .all(|(&(a, b), &d)| ((pos(p, a) - pos(p, b)).norm() - d).abs() <= tol);
    distances_ok
        && stacked_volumes(p, &s.graph)
            .iter()
            .zip(&s.volumes)
            .all(|(v, v_star)| (v - v_star).abs() <= tol)
}

/// Unit octahedron with agent 1 at the origin, labelled so that agents 2-3,
/// 4-6 and 1-5 are the opposite vertex pairs.
pub fn octahedron_embedding() -> Vec<Vec3> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let raw = [
        Vec3::new(0., 0., s),
        Vec3::new(s, 0., 0.),
        Vec3::new(-s, 0., 0.),
        Vec3::new(0., s, 0.),
        Vec3::new(0., 0., -s),
        Vec3::new(0., -s, 0.),
    ];
    raw.iter().map(|p| p - raw[0]).collect()
}

/// Unit octahedron target over [`crate::graph::octahedron_graph`]:
/// unit edges except `d*_32 = d*_64 = sqrt(2)`, volumes `(1, 1, -1) sqrt(2)/12`.
pub fn octahedron_spec() -> ShapeSpec {
    spec_from_embedding(&octahedron_embedding(), &crate::graph::octahedron_graph())
        .expect("octahedron embedding is non-degenerate")
}

/// Regular unit tetrahedron with positive volume.
pub fn regular_tetrahedron_embedding() -> Vec<Vec3> {
    vec![
        Vec3::new(0., 0., 0.),
        Vec3::new(1., 0., 0.),
        Vec3::new(0.5, 3f64.sqrt() / 2.0, 0.),
        Vec3::new(0.5, 3f64.sqrt() / 6.0, (2.0f64 / 3.0).sqrt()),
    ]
}

/// Reflection of `p` through the plane of `a`, `b`, `c`.
pub fn reflect_through_plane(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let n = (b - a).cross(&(c - a)).normalize();
    p - 2.0 * (p - a).dot(&n) * n
}

/// Signed volume of one tetrahedron reference.
pub fn volume_of(p: &[Vec3], t: &TetrahedronRef) -> f64 {
    let [i, j, k, l] = t.vertices;
    signed_volume(&pos(p, i), &pos(p, j), &pos(p, k), &pos(p, l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SensingGraph;
    use std::f64::consts::{FRAC_PI_3, SQRT_2};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn tetra_spec(volume_sign: f64) -> ShapeSpec {
        let g = SensingGraph::from_triples(&[(1, 2, 3)]).unwrap();
        let distances = g.edges().iter().map(|&e| (e, 1.0)).collect();
        let v = volume_sign * SQRT_2 / 12.0;
        ShapeSpec::new(g, distances, vec![v]).unwrap()
    }

    #[test]
    fn regular_tetrahedron_targets() {
        let t = targets_from_spec(&tetra_spec(1.0)).unwrap();
        let f = t.follower(4);
        assert!(close(f.xi_star, FRAC_PI_3, 1e-12));
        assert_eq!(f.eta_star, 0.0);
        assert!(close(f.phi_star, (1.0f64 / 3.0).acos(), 1e-12));

        let m = targets_from_spec(&tetra_spec(-1.0)).unwrap();
        let fm = m.follower(4);
        assert!(close(fm.phi_star, TAU - f.phi_star, 1e-12));
        assert_eq!((fm.xi_star, fm.eta_star), (f.xi_star, f.eta_star));
    }

    #[test]
    fn octahedron_values() {
        let s = octahedron_spec();
        assert!(close(s.distance(3, 2).unwrap(), SQRT_2, 1e-15));
        assert!(close(s.distance(6, 4).unwrap(), SQRT_2, 1e-15));
        for (&e, &d) in s.distances() {
            if e != (3, 2) && e != (6, 4) {
                assert!(close(d, 1.0, 1e-15), "{e:?}");
            }
        }
        let v = SQRT_2 / 12.0;
        let vols = s.volumes();
        assert!(close(vols[0], v, 1e-15) && close(vols[1], v, 1e-15) && close(vols[2], -v, 1e-15));

        let t = targets_from_spec(&s).unwrap();
        assert_eq!(t.d21_star, 1.0);
        assert!(close(t.eta3_star, -SQRT_2.ln(), 1e-12));
        // law of cosines on (1, sqrt2, 1)
        assert!(close(t.xi3_star, std::f64::consts::FRAC_PI_4, 1e-12));
        // agrees with the embedding itself
        let sig = signature_of(&octahedron_embedding(), s.graph()).unwrap();
        assert!(sig.matches(
            &t,
            MatchedTolerance {
                distance: 1e-12,
                angle: 1e-9
            }
        ));
    }

    #[test]
    fn inconsistent_volume_is_rejected() {
        // d*_32 = sqrt(2)/2 with V* = sqrt(2)/12 cannot be realized
        let g = SensingGraph::from_triples(&[(1, 2, 3)]).unwrap();
        let mut distances: BTreeMap<_, _> = g.edges().iter().map(|&e| (e, 1.0)).collect();
        distances.insert((3, 2), SQRT_2 / 2.0);
        let err = ShapeSpec::new(g, distances, vec![SQRT_2 / 12.0]).unwrap_err();
        assert!(matches!(err, ShapeError::VolumeBound { .. }), "{err}");
    }

    #[test]
    fn spec_validation_errors() {
        let g = SensingGraph::from_triples(&[(1, 2, 3)]).unwrap();
        let ones: BTreeMap<_, _> = g.edges().iter().map(|&e| (e, 1.0)).collect();

        let mut missing = ones.clone();
        missing.remove(&(4, 3));
        assert_eq!(
            ShapeSpec::new(g.clone(), missing, vec![0.1]).unwrap_err(),
            ShapeError::MissingDistance(4, 3)
        );

        let mut flat = ones.clone();
        flat.insert((3, 2), 2.0);
        assert!(matches!(
            ShapeSpec::new(g.clone(), flat, vec![0.1]).unwrap_err(),
            ShapeError::Triangle(..)
        ));

        assert_eq!(
            ShapeSpec::new(g.clone(), ones.clone(), vec![]).unwrap_err(),
            ShapeError::VolumeCount { expected: 1, actual: 0 }
        );

        let planar = ShapeSpec::new(g.clone(), ones.clone(), vec![0.0]).unwrap();
        assert!(matches!(
            targets_from_spec(&planar).unwrap_err(),
            ShapeError::UnsupportedTarget { .. }
        ));
    }

    #[test]
    fn embedding_scaling_and_reflection() {
        let g = crate::graph::octahedron_graph();
        let p = octahedron_embedding();
        let base = spec_from_embedding(&p, &g).unwrap();

        let sigma = 2.5;
        let scaled: Vec<_> = p.iter().map(|x| x * sigma).collect();
        let s2 = spec_from_embedding(&scaled, &g).unwrap();
        for (e, d) in s2.distances() {
            assert!(close(*d, base.distances()[e] * sigma, 1e-12));
        }
        for (v2, v) in s2.volumes().iter().zip(base.volumes()) {
            assert!(close(*v2, v * sigma.powi(3), 1e-12));
        }
        let t = targets_from_spec(&base).unwrap();
        let t2 = targets_from_spec(&s2).unwrap();
        assert!(close(t2.d21_star, sigma * t.d21_star, 1e-12));
        assert!(close(t2.xi3_star, t.xi3_star, 1e-12) && close(t2.eta3_star, t.eta3_star, 1e-12));

        let mirrored: Vec<_> = p.iter().map(|x| Vec3::new(x.x, x.y, -x.z)).collect();
        let sm = spec_from_embedding(&mirrored, &g).unwrap();
        for (e, d) in sm.distances() {
            assert!(close(*d, base.distances()[e], 1e-12));
        }
        for (vm, v) in sm.volumes().iter().zip(base.volumes()) {
            assert!(close(*vm, -v, 1e-15));
        }

        let flat: Vec<_> = p.iter().map(|x| Vec3::new(x.x, x.y, 0.0)).collect();
        assert!(spec_from_embedding(&flat, &g).is_err());
    }

    #[test]
    fn signature_reflection_and_oracle() {
        let spec = tetra_spec(1.0);
        let p = regular_tetrahedron_embedding();
        let targets = targets_from_spec(&spec).unwrap();
        let tol = MatchedTolerance::for_spec(&spec, 1e-9);
        assert!(lemma1_oracle(&p, &spec, 1e-9));
        assert!(signature_of(&p, spec.graph()).unwrap().matches(&targets, tol));

        let mut r = p.clone();
        r[3] = reflect_through_plane(&p[3], &p[0], &p[1], &p[2]);
        let sig = signature_of(&r, spec.graph()).unwrap();
        let orig = signature_of(&p, spec.graph()).unwrap();
        assert!(close(sig.followers[0][2], TAU - orig.followers[0][2], 1e-12));
        assert!(close(sig.followers[0][0], orig.followers[0][0], 1e-12));
        assert!(!lemma1_oracle(&r, &spec, 1e-9));
        assert!(!sig.matches(&targets, tol));

        // resized formation: d21 scales, the rest of Gamma is unchanged
        let big: Vec<_> = p.iter().map(|x| x * 2.0).collect();
        let sig = signature_of(&big, spec.graph()).unwrap();
        assert!(close(sig.d21, 2.0 * orig.d21, 1e-12));
        assert!(close(sig.followers[0][2], orig.followers[0][2], 1e-12));
        assert!(lemma1_oracle(&big, &spec.scaled(2.0), 1e-9));
    }

    #[test]
    fn targets_emit_flat_json() {
        let json = targets_from_spec(&octahedron_spec()).unwrap().to_json();
        let keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        assert_eq!(
            &keys[..6],
            &[
                "d21_star",
                "xi3_star",
                "eta3_star",
                "xi4_star",
                "eta4_star",
                "phi4_star"
            ]
        );
        assert_eq!(keys.len(), 12);
    }
}
