//! Bearings, signed volumes and bispherical coordinates.
//!
//! The bispherical system attached to follower `l` with neighbors `i < j < k`
//! lives in a virtual Cartesian frame whose origin is the midpoint of `i`-`j`.
//! Agent `i` sits at local `(-a, 0, 0)` and agent `j` at `(+a, 0, 0)`, so
//! `eta = ln(d_li / d_lj)` grows towards `j`. The half-plane through the axis
//! containing `k` is `phi = 0`; `phi` increases counterclockwise about `+X`.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Unit, Vector3};
use thiserror::Error;

use crate::graph::{tetrahedra, SensingGraph};

pub type Vec3 = Vector3<f64>;
pub type UnitVec3 = Unit<Vector3<f64>>;

/// Minimum separation for two points to count as distinct (meters).
pub const EPS_DIST: f64 = 1e-9;
/// Minimum cross-product norm before the bearings are treated as collinear.
pub const EPS_CROSS: f64 = 1e-9;
/// Minimum value of `cosh(eta) - cos(xi)`.
pub const EPS_DENOM: f64 = 1e-12;
/// `sin(xi)` below this value means the point is on the focal axis.
pub const EPS_AXIS: f64 = 1e-12;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum GeometryError {
    #[error("points are collocated (separation {0:e} m)")]
    Collocated(f64),
    #[error("distance {0} must be positive")]
    NonPositiveDistance(f64),
    #[error("bearings are collinear, cross-product norm {0:e}")]
    Collinear(f64),
    #[error("bispherical denominator cosh(eta) - cos(xi) = {0:e} is degenerate")]
    Denominator(f64),
    #[error("point lies on the focal axis, sin(xi) = {0:e}")]
    AxisDegeneracy(f64),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Agent position by 1-based index.
#[inline]
pub fn pos(positions: &[Vec3], agent: usize) -> Vec3 {
    positions[agent - 1]
}

/// Unit vector from `from` towards `to`.
pub fn bearing(from: &Vec3, to: &Vec3) -> Result<UnitVec3> {
    let d = to - from;
    let norm = d.norm();
    if norm <= EPS_DIST {
        return Err(GeometryError::Collocated(norm));
    }
    Ok(Unit::new_unchecked(d / norm))
}

/// Signed volume of tetrahedron `ijkl`, positive when `i, j, k` appear
/// counterclockwise seen from `l`.
///
/// The four points are put in a canonical order before the triple product and
/// the permutation parity applied afterwards, so swapping any two of them
/// flips the sign bit-exactly.
pub fn signed_volume(p_i: &Vec3, p_j: &Vec3, p_k: &Vec3, p_l: &Vec3) -> f64 {
    let mut p = [*p_i, *p_j, *p_k, *p_l];
    let mut parity = 1.0;
    let key = |v: &Vec3| [v.x, v.y, v.z];
    for (a, b) in [(0, 1), (2, 3), (0, 2), (1, 3), (1, 2)] {
        if key(&p[a]).partial_cmp(&key(&p[b])) == Some(std::cmp::Ordering::Greater) {
            p.swap(a, b);
            parity = -parity;
        }
    }
    let [a, b, c, d] = p;
    -parity * (a - d).dot(&(b - d).cross(&(c - d))) / 6.0
}

/// Signed volumes of every tetrahedral subgraph, in follower order.
pub fn stacked_volumes(positions: &[Vec3], g: &SensingGraph) -> Vec<f64> {
    tetrahedra(g)
        .iter()
        .map(|t| {
            let [i, j, k, l] = t.vertices;
            signed_volume(
                &pos(positions, i),
                &pos(positions, j),
                &pos(positions, k),
                &pos(positions, l),
            )
        })
        .collect()
}

/// First bispherical coordinate: the angle subtended at `l` by `i` and `j`.
pub fn xi_of(v_li: &UnitVec3, v_lj: &UnitVec3) -> f64 {
    v_li.dot(v_lj).clamp(-1.0, 1.0).acos()
}

/// Second bispherical coordinate: `ln(d_li / d_lj)`.
pub fn eta_of(d_li: f64, d_lj: f64) -> Result<f64> {
    for d in [d_li, d_lj] {
        if d <= EPS_DIST {
            return Err(GeometryError::NonPositiveDistance(d));
        }
    }
    Ok((d_li / d_lj).ln())
}

/// Cosine of the dihedral angle on edge `ij` between faces `ijk` and `ijl`,
/// from the bearings of `j`, `k`, `l` as seen by `i`.
pub fn dihedral_cos(v_ij: &UnitVec3, v_ik: &UnitVec3, v_il: &UnitVec3) -> Result<f64> {
    let n_k = v_ij.cross(v_ik);
    let n_l = v_ij.cross(v_il);
    let (nk, nl) = (n_k.norm(), n_l.norm());
    if nk < EPS_CROSS || nl < EPS_CROSS {
        return Err(GeometryError::Collinear(nk.min(nl)));
    }
    Ok((n_k.dot(&n_l) / (nk * nl)).clamp(-1.0, 1.0))
}

/// Same dihedral cosine from the three face angles at vertex `i`.
pub fn dihedral_cos_from_face_angles(cos_kil: f64, cos_jik: f64, cos_jil: f64) -> Result<f64> {
    let sin_jik = (1.0 - cos_jik * cos_jik).max(0.0).sqrt();
    let sin_jil = (1.0 - cos_jil * cos_jil).max(0.0).sqrt();
    let s = sin_jik * sin_jil;
    if s < EPS_CROSS {
        return Err(GeometryError::Collinear(s));
    }
    Ok(((cos_kil - cos_jik * cos_jil) / s).clamp(-1.0, 1.0))
}

/// The five bearings that determine `phi` for follower `l`.
#[derive(Clone, Copy, Debug)]
pub struct TetraBearings {
    pub v_li: UnitVec3,
    pub v_lj: UnitVec3,
    pub v_lk: UnitVec3,
    pub v_ji: UnitVec3,
    pub v_ki: UnitVec3,
}

impl TetraBearings {
    pub fn from_positions(p_i: &Vec3, p_j: &Vec3, p_k: &Vec3, p_l: &Vec3) -> Result<Self> {
        Ok(Self {
            v_li: bearing(p_l, p_i)?,
            v_lj: bearing(p_l, p_j)?,
            v_lk: bearing(p_l, p_k)?,
            v_ji: bearing(p_j, p_i)?,
            v_ki: bearing(p_k, p_i)?,
        })
    }
}

/// Third bispherical coordinate by the four-case rule on bearings, in `[0, 2pi)`.
///
/// `alpha` (the dihedral angle on `ij`) when the tetrahedron has positive
/// volume, `2pi - alpha` when negative. In the planar case it is `pi` if `l`
/// and `k` lie on opposite half-planes of the line `ij`, and `0` otherwise,
/// which also covers collinear triples.
pub fn phi_of(b: &TetraBearings) -> f64 {
    // v_li . (v_lj x v_lk) has the opposite sign of V_ijkl
    let triple = b.v_li.dot(&b.v_lj.cross(&b.v_lk));
    if triple != 0.0 {
        let v_ij = -b.v_ji;
        let v_ik = -b.v_ki;
        let v_il = -b.v_li;
        if let Ok(beta) = dihedral_cos(&v_ij, &v_ik, &v_il) {
            let alpha = beta.acos();
            let phi = if triple < 0.0 { alpha } else { TAU - alpha };
            return if phi >= TAU { 0.0 } else { phi };
        }
    }
    let c_l = b.v_ji.cross(&b.v_li);
    let c_k = b.v_ji.cross(&b.v_ki);
    if c_l.norm() > EPS_CROSS && c_k.norm() > EPS_CROSS && c_l.dot(&c_k) < 0.0 {
        PI
    } else {
        0.0
    }
}

/// [`phi_of`] evaluated from ground-truth positions.
pub fn phi_at(p_i: &Vec3, p_j: &Vec3, p_k: &Vec3, p_l: &Vec3) -> Result<f64> {
    Ok(phi_of(&TetraBearings::from_positions(p_i, p_j, p_k, p_l)?))
}

/// `(xi, eta, phi)`, ranges `[0, pi]`, finite, `[0, 2pi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BisphericalCoords {
    pub xi: f64,
    pub eta: f64,
    pub phi: f64,
}

impl BisphericalCoords {
    pub fn new(xi: f64, eta: f64, phi: f64) -> Self {
        Self { xi, eta, phi }
    }

    /// `cosh(eta) - cos(xi)`, the common scale of every metric quantity.
    pub fn denominator(&self) -> f64 {
        self.eta.cosh() - self.xi.cos()
    }
}

/// Orthonormal right-handed axes of a virtual frame.
#[derive(Clone, Copy, Debug)]
pub struct FrameAxes {
    pub x: UnitVec3,
    pub y: UnitVec3,
    pub z: UnitVec3,
    /// `z` came from [`fallback_perpendicular`] instead of the neighbor plane.
    pub fallback: bool,
}

impl FrameAxes {
    /// `X = -v_ji`, `Z` normal to the plane of `v_ji` and `v_ki`, `Y = Z x X`.
    /// Without a usable `v_ki` the normal is [`fallback_perpendicular`].
    pub fn from_bearings(v_ji: &UnitVec3, v_ki: Option<&UnitVec3>) -> Self {
        let normal = v_ki.map(|v_ki| v_ji.cross(v_ki)).filter(|n| n.norm() >= EPS_CROSS);
        let (z, fallback) = match normal {
            Some(n) => (Unit::new_normalize(n), false),
            None => (fallback_perpendicular(v_ji), true),
        };
        let x = Unit::new_unchecked(-v_ji.into_inner());
        let y = Unit::new_normalize(z.cross(&x));
        Self { x, y, z, fallback }
    }

    /// Columns `[X Y Z]`: local-to-world rotation.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[self.x.into_inner(), self.y.into_inner(), self.z.into_inner()])
    }
}

/// Unit vector perpendicular to `v`: `v` crossed with the standard axis along
/// which `v` has its smallest absolute component.
pub fn fallback_perpendicular(v: &UnitVec3) -> UnitVec3 {
    let abs = v.abs();
    let axis = if abs.x <= abs.y && abs.x <= abs.z {
        Vec3::x()
    } else if abs.y <= abs.z {
        Vec3::y()
    } else {
        Vec3::z()
    };
    Unit::new_normalize(v.cross(&axis))
}

/// Virtual Cartesian frame of a follower, anchored on neighbors `i` and `j`.
#[derive(Clone, Copy, Debug)]
pub struct VirtualFrame {
    pub origin: Vec3,
    pub axes: FrameAxes,
    /// Half the `i`-`j` distance.
    pub a: f64,
}

impl VirtualFrame {
    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        self.axes.matrix().transpose() * (p - self.origin)
    }

    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        self.origin + self.axes.matrix() * local
    }

    /// World position of focus `i`.
    pub fn focus_i(&self) -> Vec3 {
        self.origin - self.a * self.axes.x.into_inner()
    }

    /// World position of focus `j`.
    pub fn focus_j(&self) -> Vec3 {
        self.origin + self.a * self.axes.x.into_inner()
    }
}

/// Frame from the neighbor positions of a follower.
pub fn frame_of(p_i: &Vec3, p_j: &Vec3, p_k: &Vec3) -> Result<VirtualFrame> {
    let v_ji = bearing(p_j, p_i)?;
    let v_ki = bearing(p_k, p_i).ok();
    Ok(VirtualFrame {
        origin: (p_i + p_j) / 2.0,
        axes: FrameAxes::from_bearings(&v_ji, v_ki.as_ref()),
        a: (p_j - p_i).norm() / 2.0,
    })
}

/// Bispherical to frame-local Cartesian coordinates.
pub fn to_local_cartesian(b: &BisphericalCoords, a: f64) -> Result<Vec3> {
    let h = b.denominator();
    if !(h > EPS_DENOM) {
        return Err(GeometryError::Denominator(h));
    }
    let rho = a * b.xi.sin() / h;
    Ok(Vec3::new(a * b.eta.sinh() / h, rho * b.phi.cos(), rho * b.phi.sin()))
}

/// Bispherical coordinates to a world-frame position.
pub fn to_cartesian(b: &BisphericalCoords, f: &VirtualFrame) -> Result<Vec3> {
    Ok(f.to_world(&to_local_cartesian(b, f.a)?))
}

/// Wraps an angle into `[0, 2pi)`.
pub fn wrap_angle(phi: f64) -> f64 {
    let mut phi = phi.rem_euclid(TAU);
    if phi >= TAU {
        phi -= TAU;
    }
    phi
}

/// Coordinates of `p` in the bispherical system of `f`. Points on the focal
/// axis get `phi = 0`.
pub fn from_cartesian(p: &Vec3, f: &VirtualFrame) -> Result<BisphericalCoords> {
    let q = f.to_local(p);
    let to_i = Vec3::new(-f.a, 0.0, 0.0) - q;
    let to_j = Vec3::new(f.a, 0.0, 0.0) - q;
    let (d_i, d_j) = (to_i.norm(), to_j.norm());
    if d_i <= EPS_DIST || d_j <= EPS_DIST {
        return Err(GeometryError::Collocated(d_i.min(d_j)));
    }
    let xi = to_i.cross(&to_j).norm().atan2(to_i.dot(&to_j));
    let eta = (d_i / d_j).ln();
    let phi = wrap_angle(q.z.atan2(q.y));
    Ok(BisphericalCoords { xi, eta, phi })
}

/// Orthonormal bispherical basis at a point, in world coordinates, with its
/// scale factors `f1..f4`.
#[derive(Clone, Copy, Debug)]
pub struct BisphericalBasis {
    pub xi_hat: Vec3,
    pub eta_hat: Vec3,
    pub phi_hat: Vec3,
    pub f: [f64; 4],
}

pub fn basis_at(b: &BisphericalCoords, f: &VirtualFrame) -> Result<BisphericalBasis> {
    let h = b.denominator();
    if !(h > EPS_DENOM) {
        return Err(GeometryError::Denominator(h));
    }
    let (sin_xi, cos_xi) = b.xi.sin_cos();
    if sin_xi.abs() < EPS_AXIS {
        return Err(GeometryError::AxisDegeneracy(sin_xi));
    }
    let f1 = -b.eta.sinh() * sin_xi / h;
    let f2 = (b.eta.cosh() * cos_xi - 1.0) / h;
    let (f4, f3) = b.phi.sin_cos();
    let (x, y, z) = (f.axes.x.into_inner(), f.axes.y.into_inner(), f.axes.z.into_inner());
    Ok(BisphericalBasis {
        xi_hat: f1 * x + f2 * f3 * y + f2 * f4 * z,
        eta_hat: -f2 * x + f1 * f3 * y + f1 * f4 * z,
        phi_hat: -f4 * y + f3 * z,
        f: [f1, f2, f3, f4],
    })
}

/// Bearing of `i` seen from `j`, from what `l` measures: its bearings to `i`
/// and `j` and the ratio `r = d_li / d_lj`.
pub fn recover_bearing(v_li: &UnitVec3, v_lj: &UnitVec3, r_lij: f64) -> Result<UnitVec3> {
    let w = r_lij * v_li.into_inner() - v_lj.into_inner();
    let norm = w.norm();
    if norm <= EPS_DIST {
        return Err(GeometryError::Collocated(norm));
    }
    Ok(Unit::new_unchecked(w / norm))
}

/// `(v_ji, v_ki)` reconstructed by follower `l` without communication.
pub fn recover_bearings(
    v_li: &UnitVec3,
    v_lj: &UnitVec3,
    v_lk: &UnitVec3,
    r_lij: f64,
    r_lik: f64,
) -> Result<(UnitVec3, UnitVec3)> {
    Ok((recover_bearing(v_li, v_lj, r_lij)?, recover_bearing(v_li, v_lk, r_lik)?))
}
