//! Global assembly of the monolithic slip-displacement system.
//!
//! Element evaluations run in parallel; the scatter into the global
//! residual and the triplet list is serial and follows element order, so
//! repeated assemblies of the same state produce bit-identical output
//! regardless of thread count.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::bulk::{hardening_matrix, BulkMaterialParams, BulkPointState};
use crate::fem::element::{bulk_element, interface_element, BulkElementOut, InterfaceElementOut};
use crate::fem::mesh::MixedMesh;
use crate::fem::shape::{GAUSS_1D, GAUSS_2D};
use crate::gb::{GbMaterialParams, GbPointState};
use crate::Result;

/// Committed (or trial) internal variables at every quadrature point.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub bulk: Vec<Vec<BulkPointState>>,
    pub gb: Vec<Vec<GbPointState>>,
}

impl FieldState {
    pub fn init(mesh: &MixedMesh, params: &BulkMaterialParams) -> Self {
        let k = mesh.slip_count();
        FieldState {
            bulk: mesh
                .bulk
                .iter()
                .map(|_| (0..GAUSS_2D.len()).map(|_| BulkPointState::new(params, k)).collect())
                .collect(),
            gb: mesh
                .interface
                .iter()
                .map(|_| (0..GAUSS_1D.len()).map(|_| GbPointState::new()).collect())
                .collect(),
        }
    }
}

pub struct AssembledSystem {
    /// Stiffness triplets over the full (unconstrained) dof set. The
    /// structural pattern is identical for every assembly of a mesh.
    pub triplets: Vec<(usize, usize, f64)>,
    /// Internal force; external work enters through prescribed dofs only,
    /// so this is also the out-of-balance residual.
    pub residual: Vec<f64>,
    pub trial: FieldState,
    /// Most negative per-point dissipation increment seen this assembly.
    pub diss_min: f64,
    /// Domain-integrated bulk dissipation increment.
    pub diss_bulk: f64,
    /// Boundary-integrated interface dissipation increment.
    pub diss_gb: f64,
}

pub fn assemble(
    mesh: &MixedMesh,
    bulk_params: &BulkMaterialParams,
    gb_params: &GbMaterialParams,
    committed: &FieldState,
    d_old: &[f64],
    d_inc: &[f64],
    dt: f64,
) -> Result<AssembledSystem> {
    let nd = mesh.dofs_per_node();
    let ndofs = mesh.n_dofs();
    debug_assert_eq!(d_old.len(), ndofs);
    debug_assert_eq!(d_inc.len(), ndofs);
    debug_assert_eq!(committed.bulk.len(), mesh.bulk.len());
    debug_assert_eq!(committed.gb.len(), mesh.interface.len());

    let hmats: Vec<DMatrix<f64>> =
        mesh.grains.iter().map(|g| hardening_matrix(bulk_params, g)).collect();

    let bulk_outs: Vec<BulkElementOut> = mesh
        .bulk
        .par_iter()
        .zip(committed.bulk.par_iter())
        .map(|(el, states)| {
            let coords = core::array::from_fn(|i| mesh.coords[el.nodes[i]]);
            let mut de_old = vec![0.0; 8 * nd];
            let mut de_inc = vec![0.0; 8 * nd];
            for (i, &n) in el.nodes.iter().enumerate() {
                for c in 0..nd {
                    de_old[i * nd + c] = d_old[n * nd + c];
                    de_inc[i * nd + c] = d_inc[n * nd + c];
                }
            }
            bulk_element(
                &coords,
                &mesh.grains[el.grain],
                &hmats[el.grain],
                bulk_params,
                states,
                &de_old,
                &de_inc,
                dt,
            )
        })
        .collect::<Result<_>>()?;

    let iface_outs: Vec<InterfaceElementOut> = mesh
        .interface
        .par_iter()
        .zip(committed.gb.par_iter())
        .map(|(el, states)| {
            let coords = core::array::from_fn(|i| mesh.coords[el.nodes_a[i]]);
            let mut da = vec![0.0; 3 * nd];
            let mut db = vec![0.0; 3 * nd];
            for i in 0..3 {
                for c in 0..nd {
                    da[i * nd + c] = d_inc[el.nodes_a[i] * nd + c];
                    db[i * nd + c] = d_inc[el.nodes_b[i] * nd + c];
                }
            }
            interface_element(&coords, &el.orientation, gb_params, states, &da, &db)
        })
        .collect::<Result<_>>()?;

    let mut residual = vec![0.0; ndofs];
    let bulk_nnz = mesh.bulk.len() * (8 * nd) * (8 * nd);
    let k = mesh.slip_count();
    let iface_nnz = mesh.interface.len() * (6 * k) * (6 * k);
    let mut triplets = Vec::with_capacity(bulk_nnz + iface_nnz);
    let mut diss_min = f64::INFINITY;
    let mut diss_bulk = 0.0;
    let mut diss_gb = 0.0;

    let mut trial = FieldState { bulk: Vec::with_capacity(mesh.bulk.len()), gb: Vec::new() };

    for (el, out) in mesh.bulk.iter().zip(bulk_outs) {
        let gdof: Vec<usize> = el
            .nodes
            .iter()
            .flat_map(|&n| (0..nd).map(move |c| n * nd + c))
            .collect();
        for (i, &gi) in gdof.iter().enumerate() {
            residual[gi] += out.f[i];
            for (j, &gj) in gdof.iter().enumerate() {
                triplets.push((gi, gj, out.k[(i, j)]));
            }
        }
        diss_min = diss_min.min(out.diss_min);
        diss_bulk += out.diss_int;
        trial.bulk.push(out.states);
    }

    trial.gb.reserve(mesh.interface.len());
    for (el, out) in mesh.interface.iter().zip(iface_outs) {
        // only slip dofs couple through the interface; keep the pattern
        // structural by scattering exactly those
        let node = |p: usize| if p < 3 { el.nodes_a[p] } else { el.nodes_b[p - 3] };
        for i in 0..6 {
            for a in 0..k {
                let gi = node(i) * nd + 2 + a;
                residual[gi] += out.f[i * nd + 2 + a];
                for j in 0..6 {
                    for b in 0..k {
                        let gj = node(j) * nd + 2 + b;
                        triplets.push((gi, gj, out.k[(i * nd + 2 + a, j * nd + 2 + b)]));
                    }
                }
            }
        }
        diss_min = diss_min.min(out.diss_min);
        diss_gb += out.diss_int;
        trial.gb.push(out.states);
    }

    Ok(AssembledSystem { triplets, residual, trial, diss_min, diss_bulk, diss_gb })
}
