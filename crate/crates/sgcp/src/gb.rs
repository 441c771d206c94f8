//! Grain-boundary constitutive update.
//!
//! The boundary carries a surface Burgers tensor built from the slip jumps
//! of the two abutting grains,
//!
//! ```text
//!   G_s = sum_a [ gamma_B^a N_B^a - gamma_A^a N_A^a ],
//!   N_I^a = s_I^a (x) (m_I^a x n_s),
//! ```
//!
//! with the boundary normal n_s pointing from grain A into grain B. In the
//! plane, m x n_s is out-of-plane, so each dyad reduces to a scalar
//! c = m1 n2 - m2 n1 times the slip direction, and every tensor quantity
//! here is stored as a 2-vector (the (13, 23) column of the full tensor).
//! A slip system whose plane normal is parallel to n_s has c = 0 and
//! decouples from the boundary entirely.
//!
//! The boundary stress M evolves like the bulk microstress, hardening with
//! G_s through the modulus c_s and recovering at rate zeta_s |G_s_dot|:
//!
//! ```text
//!   M_dot = c_s G_s_dot - zeta_s |G_s_dot| M,
//! ```
//!
//! so |M| is bounded by max(|M_0|, c_s / zeta_s). Backward Euler again
//! gives a closed-form update. Microtractions conjugate to the slips are
//! Pi_I^a = M : N_I^a; micro-free and micro-hard responses are modes of the
//! mesh (no interface stiffness, respectively Dirichlet slips), not limits
//! of this update.

use nalgebra::{DMatrix, Vector2};

use crate::kinematics::SlipSystem;
use crate::{Error, Result};

/// Grain-boundary material constants.
#[derive(Debug, Clone)]
pub struct GbMaterialParams {
    /// Boundary hardening modulus c_s >= 0 (stress times length).
    pub c_s: f64,
    /// Boundary recovery coefficient zeta_s >= 0.
    pub zeta_s: f64,
}

impl GbMaterialParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_s >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "boundary modulus must be nonnegative, got {}",
                self.c_s
            )));
        }
        if !(self.zeta_s >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "boundary recovery must be nonnegative, got {}",
                self.zeta_s
            )));
        }
        if self.c_s == 0.0 && self.zeta_s > 0.0 {
            return Err(Error::InvalidParameter(
                "boundary recovery without a boundary modulus is ill-posed".into(),
            ));
        }
        Ok(())
    }
}

/// Reduced dyad of one slip system at the boundary: N = c (s (x) e3).
#[derive(Debug, Clone)]
pub struct GbSystemGeometry {
    /// Slip direction of the system.
    pub s: Vector2<f64>,
    /// Out-of-plane component of m x n_s.
    pub c: f64,
    /// Reduced dyad c s, the (13, 23) column of N.
    pub n: Vector2<f64>,
}

/// Orientation data of one boundary facet: normal plus the reduced dyads of
/// both abutting grains.
#[derive(Debug, Clone)]
pub struct GbOrientation {
    /// Unit normal pointing from grain A into grain B.
    pub normal: Vector2<f64>,
    pub side_a: Vec<GbSystemGeometry>,
    pub side_b: Vec<GbSystemGeometry>,
}

/// Builds the reduced boundary geometry for the systems of both grains.
pub fn build_gb_orientation(
    normal: Vector2<f64>,
    systems_a: &[SlipSystem],
    systems_b: &[SlipSystem],
) -> Result<GbOrientation> {
    let len = normal.norm();
    if !(len > 0.0) || !len.is_finite() {
        return Err(Error::InvalidParameter("boundary normal must be nonzero".into()));
    }
    if systems_a.len() != systems_b.len() {
        return Err(Error::InvalidParameter(
            "both grains must carry the same number of slip systems".into(),
        ));
    }
    let n = normal / len;
    let reduce = |sys: &SlipSystem| {
        let c = sys.m.x * n.y - sys.m.y * n.x;
        GbSystemGeometry {
            s: sys.s,
            c,
            n: sys.s * c,
        }
    };
    Ok(GbOrientation {
        normal: n,
        side_a: systems_a.iter().map(reduce).collect(),
        side_b: systems_b.iter().map(reduce).collect(),
    })
}

/// History at one boundary quadrature point.
#[derive(Debug, Clone)]
pub struct GbPointState {
    /// Boundary stress, reduced 2-vector.
    pub m: Vector2<f64>,
    /// Accumulated |G_s| increments.
    pub g_cum: f64,
    /// Accumulated dissipation per boundary area.
    pub d_acc: f64,
}

impl GbPointState {
    pub fn new() -> Self {
        Self {
            m: Vector2::zeros(),
            g_cum: 0.0,
            d_acc: 0.0,
        }
    }
}

impl Default for GbPointState {
    fn default() -> Self {
        Self::new()
    }
}

/// Increment of the surface Burgers tensor for slip increments on both
/// sides, reduced form.
pub fn gb_burgers_increment(
    orient: &GbOrientation,
    dgamma_a: &[f64],
    dgamma_b: &[f64],
) -> Vector2<f64> {
    let mut dg = Vector2::zeros();
    for (a, geom) in orient.side_a.iter().enumerate() {
        dg -= geom.n * dgamma_a[a];
    }
    for (b, geom) in orient.side_b.iter().enumerate() {
        dg += geom.n * dgamma_b[b];
    }
    dg
}

/// Backward-Euler update of the boundary stress,
/// M_new = (c_s dG + M_old) / (1 + zeta_s |dG|).
pub fn update_gb_stress(
    params: &GbMaterialParams,
    m_old: &Vector2<f64>,
    dg: &Vector2<f64>,
) -> Result<Vector2<f64>> {
    params.validate()?;
    if params.c_s == 0.0 {
        // micro-free: the boundary stores nothing and exerts no traction
        return Ok(Vector2::zeros());
    }
    Ok((params.c_s * dg + m_old) / (1.0 + params.zeta_s * dg.norm()))
}

/// Microtractions Pi^a = M : N^a for one side of the boundary.
pub fn gb_traction(side: &[GbSystemGeometry], m: &Vector2<f64>) -> Vec<f64> {
    side.iter().map(|g| m.dot(&g.n)).collect()
}

/// Sensitivities of the updated boundary stress with respect to the slip
/// increments of both sides.
#[derive(Debug, Clone)]
pub struct GbStressTangent {
    /// d M_new / d dgamma_A^b.
    pub d_m_d_ga: Vec<Vector2<f64>>,
    /// d M_new / d dgamma_B^b.
    pub d_m_d_gb: Vec<Vector2<f64>>,
}

/// Exact tangent of `update_gb_stress`. At |dG| = 0 the recovery direction
/// is undefined and its (bounded) contribution is dropped.
pub fn gb_stress_tangent(
    params: &GbMaterialParams,
    orient: &GbOrientation,
    m_new: &Vector2<f64>,
    dg: &Vector2<f64>,
) -> GbStressTangent {
    let k = orient.side_a.len();
    let norm = dg.norm();
    let denom = 1.0 + params.zeta_s * norm;
    let mut tangent = GbStressTangent {
        d_m_d_ga: Vec::with_capacity(k),
        d_m_d_gb: Vec::with_capacity(k),
    };
    if params.c_s == 0.0 {
        tangent.d_m_d_ga = vec![Vector2::zeros(); k];
        tangent.d_m_d_gb = vec![Vector2::zeros(); k];
        return tangent;
    }
    for side in [&orient.side_a, &orient.side_b] {
        let sign = if std::ptr::eq(side, &orient.side_a) { -1.0 } else { 1.0 };
        let dst = if sign < 0.0 {
            &mut tangent.d_m_d_ga
        } else {
            &mut tangent.d_m_d_gb
        };
        for geom in side.iter() {
            let ddg = geom.n * sign;
            let mut dm = params.c_s * ddg;
            if norm > 0.0 && params.zeta_s > 0.0 {
                let dnorm = dg.dot(&ddg) / norm;
                dm -= params.zeta_s * dnorm * m_new;
            }
            dst.push(dm / denom);
        }
    }
    tangent
}

/// Boundary defect energy per area, |M|^2 / (2 c_s); zero without a modulus.
pub fn gb_defect_energy(params: &GbMaterialParams, m: &Vector2<f64>) -> f64 {
    if params.c_s == 0.0 {
        0.0
    } else {
        m.norm_squared() / (2.0 * params.c_s)
    }
}

/// Boundary dissipation increment (zeta_s / c_s) |dG| |M_new|^2, checked
/// nonnegative.
pub fn gb_dissipation_increment(
    params: &GbMaterialParams,
    m_new: &Vector2<f64>,
    dg: &Vector2<f64>,
) -> Result<f64> {
    if params.c_s == 0.0 || params.zeta_s == 0.0 {
        return Ok(0.0);
    }
    let inc = params.zeta_s / params.c_s * dg.norm() * m_new.norm_squared();
    if inc < -1e-12 * (1.0 + inc.abs()) {
        return Err(Error::Nonphysical(format!(
            "negative boundary dissipation increment {inc:e}"
        )));
    }
    Ok(inc)
}

/// Response of the boundary update at one quadrature point: microtractions
/// on both sides, their slip-increment tangents, and the trial history.
#[derive(Debug, Clone)]
pub struct GbGpResponse {
    pub pi_a: Vec<f64>,
    pub pi_b: Vec<f64>,
    /// d Pi_A^a / d dgamma_A^b and so on, k x k each.
    pub d_pa_d_ga: DMatrix<f64>,
    pub d_pa_d_gb: DMatrix<f64>,
    pub d_pb_d_ga: DMatrix<f64>,
    pub d_pb_d_gb: DMatrix<f64>,
    pub state: GbPointState,
    pub diss_inc: f64,
}

/// Full boundary update for one quadrature point.
pub fn evaluate_gb(
    params: &GbMaterialParams,
    orient: &GbOrientation,
    state_old: &GbPointState,
    dgamma_a: &[f64],
    dgamma_b: &[f64],
) -> Result<GbGpResponse> {
    let k = orient.side_a.len();
    let dg = gb_burgers_increment(orient, dgamma_a, dgamma_b);
    let m_new = update_gb_stress(params, &state_old.m, &dg)?;
    let tangent = gb_stress_tangent(params, orient, &m_new, &dg);
    let diss = gb_dissipation_increment(params, &m_new, &dg)?;

    let mut resp = GbGpResponse {
        pi_a: gb_traction(&orient.side_a, &m_new),
        pi_b: gb_traction(&orient.side_b, &m_new),
        d_pa_d_ga: DMatrix::zeros(k, k),
        d_pa_d_gb: DMatrix::zeros(k, k),
        d_pb_d_ga: DMatrix::zeros(k, k),
        d_pb_d_gb: DMatrix::zeros(k, k),
        state: GbPointState {
            m: m_new,
            g_cum: state_old.g_cum + dg.norm(),
            d_acc: state_old.d_acc + diss,
        },
        diss_inc: diss,
    };
    for a in 0..k {
        let na = &orient.side_a[a].n;
        let nb = &orient.side_b[a].n;
        for b in 0..k {
            resp.d_pa_d_ga[(a, b)] = tangent.d_m_d_ga[b].dot(na);
            resp.d_pa_d_gb[(a, b)] = tangent.d_m_d_gb[b].dot(na);
            resp.d_pb_d_ga[(a, b)] = tangent.d_m_d_ga[b].dot(nb);
            resp.d_pb_d_gb[(a, b)] = tangent.d_m_d_gb[b].dot(nb);
        }
    }
    Ok(resp)
}
