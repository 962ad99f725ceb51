//! Closed-form error dynamics and their numerical cross-checks.
//!
//! Rows are covectors in world coordinates: a coordinate rate is the sum of
//! each row dotted with the velocity of the agent it belongs to. The simulator
//! never uses these; they exist to be compared against differentiated
//! geometry.

use crate::controller::AgentGains;
use crate::geometry::{
    basis_at, frame_of, from_cartesian, BisphericalBasis, BisphericalCoords, GeometryError, Result, Vec3, VirtualFrame,
    EPS_AXIS,
};

/// `de_d/dt` of agent 2 under its control law.
pub fn edot_distance(e_d: f64, d21_star: f64, kappa2: f64) -> f64 {
    -2.0 * kappa2 * e_d * (e_d + d21_star * d21_star)
}

/// Rows of one coordinate rate. `k` is zero for `xi` and `eta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateRows {
    pub i: Vec3,
    pub j: Vec3,
    pub k: Vec3,
    pub l: Vec3,
}

impl RateRows {
    /// Rate for the given velocities of `i, j, k, l`.
    pub fn rate(&self, v: &[Vec3; 4]) -> f64 {
        self.i.dot(&v[0]) + self.j.dot(&v[1]) + self.k.dot(&v[2]) + self.l.dot(&v[3])
    }

    pub fn sum(&self) -> Vec3 {
        self.i + self.j + self.k + self.l
    }
}

/// Everything the closed-form rows need about one tetrahedron `ijkl`.
#[derive(Clone, Copy, Debug)]
pub struct TetraGeometry {
    pub frame: VirtualFrame,
    pub l: BisphericalCoords,
    /// Coordinates of `k` in the same frame.
    pub k: BisphericalCoords,
    pub basis: BisphericalBasis,
    pub d_li: f64,
    pub d_lj: f64,
}

impl TetraGeometry {
    pub fn new(p_i: &Vec3, p_j: &Vec3, p_k: &Vec3, p_l: &Vec3) -> Result<Self> {
        let frame = frame_of(p_i, p_j, p_k)?;
        let l = from_cartesian(p_l, &frame)?;
        let k = from_cartesian(p_k, &frame)?;
        let basis = basis_at(&l, &frame)?;
        Ok(Self {
            frame,
            l,
            k,
            basis,
            d_li: (p_i - p_l).norm(),
            d_lj: (p_j - p_l).norm(),
        })
    }

    /// `(cosh eta - cos xi) / a` at `l`.
    pub fn metric(&self) -> f64 {
        self.l.denominator() / self.frame.a
    }

    fn world(&self, c: [f64; 3]) -> Vec3 {
        self.frame.axes.matrix() * Vec3::new(c[0], c[1], c[2])
    }
}

fn projector(v: &Vec3) -> nalgebra::Matrix3<f64> {
    nalgebra::Matrix3::identity() - v * v.transpose()
}

/// `xi` rows from projection matrices: `(N_jli, N_ilj, -(N_jli + N_ilj))`.
pub fn xi_rows_projection(p_i: &Vec3, p_j: &Vec3, p_l: &Vec3) -> Result<RateRows> {
    let (w_i, w_j) = (p_i - p_l, p_j - p_l);
    let (d_li, d_lj) = (w_i.norm(), w_j.norm());
    let (v_li, v_lj) = (w_i / d_li, w_j / d_lj);
    let sin_xi = v_li.cross(&v_lj).norm();
    if sin_xi < EPS_AXIS {
        return Err(GeometryError::AxisDegeneracy(sin_xi));
    }
    let n_jli = -(projector(&v_li) * v_lj) / (d_li * sin_xi);
    let n_ilj = -(projector(&v_lj) * v_li) / (d_lj * sin_xi);
    Ok(RateRows {
        i: n_jli,
        j: n_ilj,
        k: Vec3::zeros(),
        l: -(n_jli + n_ilj),
    })
}

/// `xi` rows written in the bispherical frame of `l`.
pub fn xi_rows_closed(g: &TetraGeometry) -> RateRows {
    let BisphericalCoords { xi, eta, phi } = g.l;
    let (s, c) = xi.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let two_a = 2.0 * g.frame.a;
    let (em, ep) = ((-eta).exp(), eta.exp());
    let n_jli = g.world([-em * s, cp * (1.0 - em * c), sp * (1.0 - em * c)]) / two_a;
    let n_ilj = g.world([ep * s, cp * (1.0 - ep * c), sp * (1.0 - ep * c)]) / two_a;
    RateRows {
        i: n_jli,
        j: n_ilj,
        k: Vec3::zeros(),
        l: -(n_jli + n_ilj),
    }
}

/// `eta` rows from bearings: `M_i = v_li / d_li`, `M_j = -v_lj / d_lj`.
pub fn eta_rows_vector(p_i: &Vec3, p_j: &Vec3, p_l: &Vec3) -> Result<RateRows> {
    let (w_i, w_j) = (p_i - p_l, p_j - p_l);
    let (d_li, d_lj) = (w_i.norm(), w_j.norm());
    if d_li <= crate::geometry::EPS_DIST || d_lj <= crate::geometry::EPS_DIST {
        return Err(GeometryError::Collocated(d_li.min(d_lj)));
    }
    let m_i = w_i / (d_li * d_li);
    let m_j = -w_j / (d_lj * d_lj);
    Ok(RateRows {
        i: m_i,
        j: m_j,
        k: Vec3::zeros(),
        l: -(m_i + m_j),
    })
}

/// `eta` rows written in the bispherical frame of `l`.
pub fn eta_rows_closed(g: &TetraGeometry) -> RateRows {
    let BisphericalCoords { xi, eta, phi } = g.l;
    let (s, c) = xi.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let two_a = 2.0 * g.frame.a;
    let (em, ep) = ((-eta).exp(), eta.exp());
    let m_i = -g.world([1.0 - em * c, em * s * cp, em * s * sp]) / two_a;
    let m_j = -g.world([1.0 - ep * c, -ep * s * cp, -ep * s * sp]) / two_a;
    RateRows {
        i: m_i,
        j: m_j,
        k: Vec3::zeros(),
        l: -(m_i + m_j),
    }
}

/// `phi` rows, including the coupling through the frame normal `Z`.
pub fn phi_rows(g: &TetraGeometry) -> Result<RateRows> {
    let a = g.frame.a;
    let (s, c) = g.l.xi.sin_cos();
    let (s_k, c_k) = g.k.xi.sin_cos();
    if s < EPS_AXIS {
        return Err(GeometryError::AxisDegeneracy(s));
    }
    if s_k < EPS_AXIS {
        return Err(GeometryError::AxisDegeneracy(s_k));
    }
    let phi_hat = g.basis.phi_hat;
    let z = g.frame.axes.z.into_inner();
    let (eta, eta_k) = (g.l.eta, g.k.eta);
    let l_i = -phi_hat * ((-eta).exp() - c) / (2.0 * a * s) + z * ((-eta_k).exp() - c_k) / (2.0 * a * s_k);
    let l_j = -phi_hat * (eta.exp() - c) / (2.0 * a * s) + z * (eta_k.exp() - c_k) / (2.0 * a * s_k);
    let l_k = -z * (eta_k.cosh() - c_k) / (a * s_k);
    let l_l = phi_hat * g.l.denominator() / (a * s);
    Ok(RateRows {
        i: l_i,
        j: l_j,
        k: l_k,
        l: l_l,
    })
}

/// `dphi/dp_l` as the gradient of `atan2(z, y)` in the frame.
pub fn phi_row_l_vector(g: &TetraGeometry, p_l: &Vec3) -> Vec3 {
    let q = g.frame.to_local(p_l);
    let rho2 = q.y * q.y + q.z * q.z;
    (-q.z * g.frame.axes.y.into_inner() + q.y * g.frame.axes.z.into_inner()) / rho2
}

/// Analytic `(xi, eta, phi)` rates of `l` from the closed-form rows.
pub fn coordinate_rates(p: &[Vec3; 4], v: &[Vec3; 4]) -> Result<[f64; 3]> {
    let g = TetraGeometry::new(&p[0], &p[1], &p[2], &p[3])?;
    Ok([
        xi_rows_closed(&g).rate(v),
        eta_rows_closed(&g).rate(v),
        phi_rows(&g)?.rate(v),
    ])
}

/// Central-difference `(xi, eta, phi)` rates of `l`, each point advanced by
/// `h * v`. `phi` differences are unwrapped across the seam.
pub fn coordinate_rates_numeric(p: &[Vec3; 4], v: &[Vec3; 4], h: f64) -> Result<[f64; 3]> {
    let coords = |sign: f64| -> Result<[f64; 3]> {
        let q: Vec<Vec3> = p.iter().zip(v).map(|(p, v)| p + sign * h * v).collect();
        let frame = frame_of(&q[0], &q[1], &q[2])?;
        let c = from_cartesian(&q[3], &frame)?;
        // atan2 in the frame; the acos form loses digits near 0 and pi
        Ok([c.xi, c.eta, c.phi])
    };
    let (plus, minus) = (coords(1.0)?, coords(-1.0)?);
    let mut dphi = plus[2] - minus[2];
    if dphi > std::f64::consts::PI {
        dphi -= std::f64::consts::TAU;
    } else if dphi < -std::f64::consts::PI {
        dphi += std::f64::consts::TAU;
    }
    Ok([
        (plus[0] - minus[0]) / (2.0 * h),
        (plus[1] - minus[1]) / (2.0 * h),
        dphi / (2.0 * h),
    ])
}

/// `dW/dt` of agent 3 with agents 1 and 2 fixed.
pub fn wdot_second(coords: &BisphericalCoords, a: f64, e_xi: f64, e_eta: f64, g: &AgentGains) -> f64 {
    -(coords.denominator() / a) * (g.kappa * e_xi * e_xi + g.lambda * e_eta * e_eta)
}

/// `dW/dt` of an ordinary follower with its neighbors fixed and no clamp.
pub fn wdot_ordinary(coords: &BisphericalCoords, a: f64, errors: [f64; 3], g: &AgentGains) -> f64 {
    let [e_xi, e_eta, e_phi] = errors;
    -(coords.denominator() / a)
        * (g.kappa * e_xi * e_xi + g.lambda * e_eta * e_eta + g.gamma * e_phi * e_phi / coords.xi.sin())
}

/// `max |analytic - numeric|` over a uniformly sampled `W(t)` series of an
/// unforced run. `analytic[m]` must belong to time `m * dt`. The numeric
/// derivative is central, so the first and last samples are skipped.
pub fn wdot_check(w: &[f64], analytic: &[f64], dt: f64) -> f64 {
    assert_eq!(w.len(), analytic.len());
    (1..w.len().saturating_sub(1))
        .map(|m| ((w[m + 1] - w[m - 1]) / (2.0 * dt) - analytic[m]).abs())
        .fold(0.0, f64::max)
}
