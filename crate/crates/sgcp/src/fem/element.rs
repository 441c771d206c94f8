//! Element-level residual and tangent evaluation.
//!
//! Displacements and slips are interpolated with the same Q8 shape
//! functions. Stresses are evaluated in total form: the elastic strain at
//! a Gauss point is the symmetric displacement gradient minus the plastic
//! strain rebuilt from the interpolated total slips, so the committed
//! state never stores stress. The constitutive update itself works on the
//! increments relative to the committed state.

use nalgebra::{DMatrix, DVector, Matrix3x2, Vector2};

use crate::bulk::{evaluate_bulk, BulkMaterialParams, BulkPointState};
use crate::fem::shape::{line3_shape, q8_jacobian, q8_shape, GAUSS_1D, GAUSS_2D};
use crate::gb::{evaluate_gb, GbMaterialParams, GbOrientation, GbPointState};
use crate::kinematics::SlipSystem;
use crate::Result;

pub struct BulkElementOut {
    pub f: DVector<f64>,
    pub k: DMatrix<f64>,
    pub states: Vec<BulkPointState>,
    /// Most negative per-point dissipation increment (for monitoring).
    pub diss_min: f64,
    /// Volume-integrated dissipation increment over the element.
    pub diss_int: f64,
}

/// Residual and consistent tangent of one bulk element.
///
/// `d_old` and `d_inc` are the element-local committed totals and current
/// increments, node-major with `2 + k` entries per node.
pub fn bulk_element(
    coords: &[Vector2<f64>; 8],
    systems: &[SlipSystem],
    hmat: &DMatrix<f64>,
    params: &BulkMaterialParams,
    committed: &[BulkPointState],
    d_old: &[f64],
    d_inc: &[f64],
    dt: f64,
) -> Result<BulkElementOut> {
    let k = systems.len();
    let nd = 2 + k;
    let ndof = 8 * nd;
    debug_assert_eq!(committed.len(), GAUSS_2D.len());
    debug_assert_eq!(d_old.len(), ndof);
    debug_assert_eq!(d_inc.len(), ndof);

    let mut f = DVector::zeros(ndof);
    let mut kmat = DMatrix::zeros(ndof, ndof);
    let mut states = Vec::with_capacity(GAUSS_2D.len());
    let mut diss_min = f64::INFINITY;
    let mut diss_int = 0.0;

    let cmat = &params.elastic.stiffness;
    // C T^alpha and T^alpha : C : T^beta are geometry-independent
    let ct: Vec<_> = systems.iter().map(|s| cmat * s.schmid_voigt).collect();
    let mut tct = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            tct[(a, b)] = systems[a].schmid_voigt.dot(&ct[b]);
        }
    }

    let mut dgam = vec![0.0; k];
    let mut gam_tot = vec![0.0; k];
    let mut dkap = vec![Vector2::zeros(); k];

    for (gp, &(xi, eta, wgt)) in GAUSS_2D.iter().enumerate() {
        let (n, dxi, deta) = q8_shape(xi, eta);
        let (jac, det) = q8_jacobian(coords, &dxi, &deta)?;
        let inv = jac.try_inverse().expect("positive determinant implies invertible");
        let mut dndx = [Vector2::zeros(); 8];
        for i in 0..8 {
            dndx[i] = Vector2::new(
                inv[(0, 0)] * dxi[i] + inv[(1, 0)] * deta[i],
                inv[(0, 1)] * dxi[i] + inv[(1, 1)] * deta[i],
            );
        }
        let wdet = wgt * det;

        // interpolate total strain, total slip, slip increments and
        // incremental slip gradients
        let mut eps = nalgebra::Vector3::zeros();
        dgam.fill(0.0);
        gam_tot.fill(0.0);
        dkap.fill(Vector2::zeros());
        for i in 0..8 {
            let u1 = d_old[i * nd] + d_inc[i * nd];
            let u2 = d_old[i * nd + 1] + d_inc[i * nd + 1];
            eps.x += dndx[i].x * u1;
            eps.y += dndx[i].y * u2;
            eps.z += dndx[i].y * u1 + dndx[i].x * u2;
            for a in 0..k {
                let gi = d_inc[i * nd + 2 + a];
                gam_tot[a] += n[i] * (d_old[i * nd + 2 + a] + gi);
                dgam[a] += n[i] * gi;
                dkap[a] += dndx[i] * gi;
            }
        }
        let mut eps_e = eps;
        for a in 0..k {
            eps_e -= systems[a].schmid_voigt * gam_tot[a];
        }
        let sigma = params.elastic.stress(&eps_e);

        let resp = evaluate_bulk(params, systems, hmat, &committed[gp], &dgam, &dkap, dt)?;
        diss_min = diss_min.min(resp.diss_inc);
        diss_int += wdet * resp.diss_inc;

        let tau: Vec<f64> = (0..k).map(|a| sigma.dot(&systems[a].schmid_voigt)).collect();

        // node-level B matrices and slip-direction gradients
        let mut bmat = [Matrix3x2::zeros(); 8];
        for i in 0..8 {
            bmat[i] = Matrix3x2::new(
                dndx[i].x, 0.0, //
                0.0, dndx[i].y, //
                dndx[i].y, dndx[i].x,
            );
        }
        let mut sn = vec![[0.0; 8]; k];
        for a in 0..k {
            for i in 0..8 {
                sn[a][i] = systems[a].s.dot(&dndx[i]);
            }
        }

        for i in 0..8 {
            let fu = bmat[i].transpose() * sigma;
            f[i * nd] += wdet * fu.x;
            f[i * nd + 1] += wdet * fu.y;
            for a in 0..k {
                f[i * nd + 2 + a] +=
                    wdet * (n[i] * (resp.pi[a] - tau[a]) + sn[a][i] * resp.xi_t[a]);
            }
        }

        for i in 0..8 {
            for j in 0..8 {
                let kuu = bmat[i].transpose() * cmat * bmat[j];
                for r in 0..2 {
                    for c in 0..2 {
                        kmat[(i * nd + r, j * nd + c)] += wdet * kuu[(r, c)];
                    }
                }
                for b in 0..k {
                    let kug = bmat[i].transpose() * ct[b] * (-n[j]);
                    kmat[(i * nd, j * nd + 2 + b)] += wdet * kug.x;
                    kmat[(i * nd + 1, j * nd + 2 + b)] += wdet * kug.y;
                }
                for a in 0..k {
                    let kgu = bmat[j].transpose() * ct[a] * (-n[i]);
                    kmat[(i * nd + 2 + a, j * nd)] += wdet * kgu.x;
                    kmat[(i * nd + 2 + a, j * nd + 1)] += wdet * kgu.y;
                    for b in 0..k {
                        let mut v = n[i] * (tct[(a, b)] + resp.dpi_dgamma[(a, b)]) * n[j];
                        if a == b {
                            v += n[i] * resp.dpi_dw[a] * sn[a][j]
                                + sn[a][i] * resp.dxit_dgamma[a] * n[j]
                                + sn[a][i] * resp.dxit_dw[a] * sn[a][j];
                        }
                        kmat[(i * nd + 2 + a, j * nd + 2 + b)] += wdet * v;
                    }
                }
            }
        }

        states.push(resp.state);
    }

    Ok(BulkElementOut { f, k: kmat, states, diss_min, diss_int })
}

pub struct InterfaceElementOut {
    pub f: DVector<f64>,
    pub k: DMatrix<f64>,
    pub states: Vec<GbPointState>,
    pub diss_min: f64,
    /// Line-integrated dissipation increment over the element.
    pub diss_int: f64,
}

/// Residual and tangent of one zero-thickness interface element.
///
/// Local dof order is the six nodes (side A end/mid/end then side B)
/// node-major with the same `2 + k` layout as the bulk; displacement rows
/// stay zero since the boundary acts on slips only.
pub fn interface_element(
    coords: &[Vector2<f64>; 3],
    orientation: &GbOrientation,
    params: &GbMaterialParams,
    committed: &[GbPointState],
    d_inc_a: &[f64],
    d_inc_b: &[f64],
) -> Result<InterfaceElementOut> {
    let k = orientation.side_a.len();
    let nd = 2 + k;
    let ndof = 6 * nd;
    debug_assert_eq!(committed.len(), GAUSS_1D.len());
    debug_assert_eq!(d_inc_a.len(), 3 * nd);
    debug_assert_eq!(d_inc_b.len(), 3 * nd);

    let mut f = DVector::zeros(ndof);
    let mut kmat = DMatrix::zeros(ndof, ndof);
    let mut states = Vec::with_capacity(GAUSS_1D.len());
    let mut diss_min = f64::INFINITY;
    let mut diss_int = 0.0;

    let mut dga = vec![0.0; k];
    let mut dgb = vec![0.0; k];

    for (gp, &(xi, wgt)) in GAUSS_1D.iter().enumerate() {
        let (n, dn) = line3_shape(xi);
        let mut tangent = Vector2::zeros();
        for i in 0..3 {
            tangent += coords[i] * dn[i];
        }
        let jac = tangent.norm();
        if !(jac > 0.0) {
            return Err(crate::Error::Mesh("degenerate interface element".into()));
        }
        let wj = wgt * jac;

        dga.fill(0.0);
        dgb.fill(0.0);
        for i in 0..3 {
            for a in 0..k {
                dga[a] += n[i] * d_inc_a[i * nd + 2 + a];
                dgb[a] += n[i] * d_inc_b[i * nd + 2 + a];
            }
        }

        let resp = evaluate_gb(params, orientation, &committed[gp], &dga, &dgb)?;
        diss_min = diss_min.min(resp.diss_inc);
        diss_int += wj * resp.diss_inc;

        for i in 0..3 {
            for a in 0..k {
                f[i * nd + 2 + a] -= wj * n[i] * resp.pi_a[a];
                f[(3 + i) * nd + 2 + a] += wj * n[i] * resp.pi_b[a];
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                for a in 0..k {
                    for b in 0..k {
                        let nn = wj * n[i] * n[j];
                        kmat[(i * nd + 2 + a, j * nd + 2 + b)] -=
                            nn * resp.d_pa_d_ga[(a, b)];
                        kmat[(i * nd + 2 + a, (3 + j) * nd + 2 + b)] -=
                            nn * resp.d_pa_d_gb[(a, b)];
                        kmat[((3 + i) * nd + 2 + a, j * nd + 2 + b)] +=
                            nn * resp.d_pb_d_ga[(a, b)];
                        kmat[((3 + i) * nd + 2 + a, (3 + j) * nd + 2 + b)] +=
                            nn * resp.d_pb_d_gb[(a, b)];
                    }
                }
            }
        }

        states.push(resp.state);
    }

    Ok(InterfaceElementOut { f, k: kmat, states, diss_min, diss_int })
}
