//! Slip-system geometry and isotropic plane-strain elasticity.
//!
//! The model plane is spanned by x1 and x2. A slip system is described by
//! the angle theta between its slip direction and the x1 axis,
//!
//! ```text
//!   s = (cos theta, sin theta),    m = (-sin theta, cos theta),
//! ```
//!
//! so that (s, m, e3) is right-handed and the edge dislocation line runs
//! along -e3. For in-plane fields the screw component of the dislocation
//! density vanishes identically and is not represented; the edge density is
//! the only geometrically necessary content of a slip gradient.
//!
//! Voigt order is (11, 22, 12) with engineering shear on the strain side,
//! so a single vector form of the symmetrized Schmid dyad serves both as
//! the slip-to-plastic-strain map and as the stress-to-resolved-shear map.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::{Error, Result};

/// One slip system of a grain.
#[derive(Debug, Clone)]
pub struct SlipSystem {
    /// Angle between the slip direction and x1, radians.
    pub theta: f64,
    /// Slip direction (unit).
    pub s: Vector2<f64>,
    /// Slip-plane normal (unit).
    pub m: Vector2<f64>,
    /// Schmid dyad s (x) m.
    pub schmid: Matrix2<f64>,
    /// Symmetric part of the Schmid dyad.
    pub schmid_sym: Matrix2<f64>,
    /// Voigt form (T11, T22, 2 T12) of the symmetrized dyad.
    pub schmid_voigt: Vector3<f64>,
}

/// Builds the slip-system geometry for an angle in radians.
pub fn build_slip_system(theta: f64) -> SlipSystem {
    let (sin, cos) = theta.sin_cos();
    let s = Vector2::new(cos, sin);
    let m = Vector2::new(-sin, cos);
    let schmid = s * m.transpose();
    let schmid_sym = 0.5 * (schmid + schmid.transpose());
    let schmid_voigt = Vector3::new(
        schmid_sym[(0, 0)],
        schmid_sym[(1, 1)],
        2.0 * schmid_sym[(0, 1)],
    );
    SlipSystem {
        theta,
        s,
        m,
        schmid,
        schmid_sym,
        schmid_voigt,
    }
}

/// Projects a slip gradient onto the slip direction: (s . kappa) s.
///
/// Only this tangential part enters the defect energy; the normal part is
/// energetically inert in the planar setting.
pub fn tangential_slip_gradient(sys: &SlipSystem, kappa: &Vector2<f64>) -> Vector2<f64> {
    sys.s * sys.s.dot(kappa)
}

/// Edge component of the geometrically necessary dislocation density,
/// rho = -s . kappa, for a slip gradient kappa.
pub fn edge_gnd_density(sys: &SlipSystem, kappa: &Vector2<f64>) -> f64 {
    -sys.s.dot(kappa)
}

/// Isotropic plane-strain elasticity.
///
/// Out-of-plane stress sigma33 is a dependent (output-only) quantity; the
/// stiffness below acts on in-plane Voigt strain (e11, e22, 2 e12).
#[derive(Debug, Clone)]
pub struct ElasticLaw {
    pub youngs: f64,
    pub poisson: f64,
    pub lambda: f64,
    pub mu: f64,
    /// Plane-strain stiffness, (e11, e22, 2 e12) -> (s11, s22, s12).
    pub stiffness: Matrix3<f64>,
}

impl ElasticLaw {
    pub fn new(youngs: f64, poisson: f64) -> Result<Self> {
        if !(youngs > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Young's modulus must be positive, got {youngs}"
            )));
        }
        if !(-1.0 < poisson && poisson < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "Poisson ratio must lie in (-1, 0.5), got {poisson}"
            )));
        }
        let lambda = youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
        let mu = youngs / (2.0 * (1.0 + poisson));
        let stiffness = Matrix3::new(
            lambda + 2.0 * mu,
            lambda,
            0.0,
            lambda,
            lambda + 2.0 * mu,
            0.0,
            0.0,
            0.0,
            mu,
        );
        Ok(Self {
            youngs,
            poisson,
            lambda,
            mu,
            stiffness,
        })
    }

    /// In-plane stress (s11, s22, s12) for an elastic strain in Voigt form.
    pub fn stress(&self, strain_e: &Vector3<f64>) -> Vector3<f64> {
        self.stiffness * strain_e
    }

    /// Out-of-plane stress sigma33 = lambda (e11 + e22).
    pub fn stress_out_of_plane(&self, strain_e: &Vector3<f64>) -> f64 {
        self.lambda * (strain_e.x + strain_e.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_relative_eq, assert_ulps_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cardinal_system() {
        let sys = build_slip_system(0.0);
        assert_ulps_eq!(sys.s, Vector2::new(1.0, 0.0));
        assert_ulps_eq!(sys.m, Vector2::new(0.0, 1.0));
        assert_ulps_eq!(sys.schmid, Matrix2::new(0.0, 1.0, 0.0, 0.0));
        assert_ulps_eq!(sys.schmid_voigt, Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn sixty_degree_system() {
        let sys = build_slip_system(60f64.to_radians());
        let h = 3f64.sqrt() / 2.0;
        assert_relative_eq!(sys.s, Vector2::new(0.5, h), max_relative = 1e-15);
        assert_relative_eq!(sys.m, Vector2::new(-h, 0.5), max_relative = 1e-15);
        // sym(s (x) m) has equal and opposite diagonal entries here
        assert_relative_eq!(sys.schmid_sym[(0, 0)], -0.433_012_701_892_219_3, epsilon = 1e-15);
        assert_relative_eq!(sys.schmid_sym[(1, 1)], 0.433_012_701_892_219_3, epsilon = 1e-15);
        assert_relative_eq!(sys.schmid_sym[(0, 1)], -0.25, epsilon = 1e-15);
        assert_relative_eq!(sys.schmid_voigt.z, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn frames_are_orthonormal_and_right_handed() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..200 {
            let theta: f64 = rng.random_range(-7.0..7.0);
            let sys = build_slip_system(theta);
            assert_relative_eq!(sys.s.norm(), 1.0, epsilon = 1e-14);
            assert_relative_eq!(sys.m.norm(), 1.0, epsilon = 1e-14);
            assert_relative_eq!(sys.s.dot(&sys.m), 0.0, epsilon = 1e-14);
            // s x m = +e3
            let cross = sys.s.x * sys.m.y - sys.s.y * sys.m.x;
            assert_relative_eq!(cross, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn tangential_projection_matches_hand_value() {
        let sys = build_slip_system(60f64.to_radians());
        let kt = tangential_slip_gradient(&sys, &Vector2::new(1.0, 0.0));
        // (cos^2 60, cos 60 sin 60)
        assert_relative_eq!(kt.x, 0.25, epsilon = 1e-15);
        assert_relative_eq!(kt.y, 0.433_012_701_892_219_3, epsilon = 1e-15);
    }

    #[test]
    fn tangential_projection_is_idempotent_and_parallel_to_s() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let sys = build_slip_system(rng.random_range(-7.0..7.0));
            let kappa = Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let once = tangential_slip_gradient(&sys, &kappa);
            let twice = tangential_slip_gradient(&sys, &once);
            assert_relative_eq!(once, twice, epsilon = 1e-14);
            // no component orthogonal to s
            let normal_part = once.x * sys.m.x + once.y * sys.m.y;
            assert_relative_eq!(normal_part, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn edge_gnd_density_values_and_linearity() {
        let sys0 = build_slip_system(0.0);
        assert_ulps_eq!(edge_gnd_density(&sys0, &Vector2::new(0.3, -0.7)), -0.3);

        let sys = build_slip_system(60f64.to_radians());
        let rho = edge_gnd_density(&sys, &Vector2::new(0.002, -0.001));
        assert_relative_eq!(rho, -1.339_745_962_155_614e-4, epsilon = 1e-18);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let sys = build_slip_system(rng.random_range(-7.0..7.0));
            let k1 = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let k2 = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let lhs = edge_gnd_density(&sys, &(k1 + k2));
            let rhs = edge_gnd_density(&sys, &k1) + edge_gnd_density(&sys, &k2);
            assert_relative_eq!(lhs, rhs, epsilon = 1e-14);
        }
    }

    #[test]
    fn plane_strain_stiffness_values() {
        let law = ElasticLaw::new(260e3, 0.3).unwrap();
        assert_relative_eq!(law.lambda, 150e3, max_relative = 1e-14);
        assert_relative_eq!(law.mu, 100e3, max_relative = 1e-14);
        let sigma = law.stress(&Vector3::new(1e-3, 0.0, 0.0));
        assert_relative_eq!(sigma, Vector3::new(350.0, 150.0, 0.0), max_relative = 1e-14);
        assert_relative_eq!(
            law.stress_out_of_plane(&Vector3::new(1e-3, 0.0, 0.0)),
            150.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn out_of_plane_stress_is_poisson_locked() {
        let law = ElasticLaw::new(60.84e3, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let e = Vector3::new(
                rng.random_range(-1e-2..1e-2),
                rng.random_range(-1e-2..1e-2),
                rng.random_range(-1e-2..1e-2),
            );
            let s = law.stress(&e);
            let s33 = law.stress_out_of_plane(&e);
            assert_relative_eq!(s33, law.poisson * (s.x + s.y), max_relative = 1e-12);
        }
    }

    #[test]
    fn elastic_law_rejects_bad_parameters() {
        assert!(ElasticLaw::new(-1.0, 0.3).is_err());
        assert!(ElasticLaw::new(0.0, 0.3).is_err());
        assert!(ElasticLaw::new(200e3, 0.5).is_err());
        assert!(ElasticLaw::new(200e3, -1.0).is_err());
    }
}
