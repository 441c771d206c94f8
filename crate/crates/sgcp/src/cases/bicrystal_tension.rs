//! Plane-strain tension of a bicrystal with an oblique boundary.
//!
//! The rectangular domain is cut by a 45 degree boundary running down-right
//! through its center. On a structured grid the cut becomes a staircase:
//! elements take the grain of their centroid side and interface elements
//! line the stepped path. The staircase is the documented approximation of
//! a boundary-conforming mesh; its interface elements all carry the true
//! oblique normal, so the constitutive coupling sees the intended boundary
//! geometry even though the integration path is slightly longer.
//!
//! Each grain has two slip systems and the second one is parallel to the
//! boundary in both grains, which decouples it from the interface response
//! and makes its continuity across the boundary a consistency check of the
//! whole reduction.

use std::collections::BTreeMap;

use nalgebra::Vector2;

use crate::bulk::BulkMaterialParams;
use crate::cases::post::{gb_jumps, gb_totals, volume_averages, GbNodeJump};
use crate::fem::mesh::{BulkElement, InterfaceElement};
use crate::fem::{ConstraintSet, MixedMesh, StructuredGrid};
use crate::gb::{build_gb_orientation, GbMaterialParams};
use crate::kinematics::build_slip_system;
use crate::solver::{march, Committed, LoadProgram, MarchStats, Model, Phase, SolverConfig};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct BicrystalTensionCase {
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    /// Slip plane angles of the left grain (radians).
    pub thetas_a: Vec<f64>,
    /// Slip plane angles of the right grain (radians).
    pub thetas_b: Vec<f64>,
    pub bulk: BulkMaterialParams,
    pub gb: GbMaterialParams,
    /// Nominal axial strain target and rate.
    pub strain_max: f64,
    pub rate: f64,
}

pub struct TensionSeriesRow {
    pub step: usize,
    pub t: f64,
    /// Applied nominal strain.
    pub strain: f64,
    pub sigma11: f64,
    pub psi_defect: f64,
    pub diss_bulk: f64,
    pub diss_gb: f64,
    pub energy_gb: f64,
    pub newton_iters: usize,
}

/// Centerline profile plus the boundary jumps at one sample instant.
pub struct TensionProfile {
    pub t: f64,
    pub strain: f64,
    /// Nodal slip per system along the centerline.
    pub slip: Vec<Vec<f64>>,
    /// Slip on both sides of every boundary node pair, ordered along the
    /// staircase.
    pub jumps: Vec<GbNodeJump>,
}

pub struct BicrystalTensionResults {
    /// x1 coordinates of the centerline profile nodes.
    pub x1: Vec<f64>,
    pub series: Vec<TensionSeriesRow>,
    pub profiles: Vec<TensionProfile>,
    pub final_d: Vec<f64>,
    pub stats: MarchStats,
}

pub(crate) struct Built {
    pub mesh: MixedMesh,
    pub profile_nodes: Vec<usize>,
    /// (original, duplicate) pairs along the staircase path.
    pub pairs: Vec<(usize, usize)>,
    pub grid: StructuredGrid,
}

impl BicrystalTensionCase {
    /// Builds just the mesh, mainly for inspection.
    pub fn mesh(&self) -> Result<MixedMesh> {
        Ok(self.build()?.mesh)
    }

    pub(crate) fn build(&self) -> Result<Built> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::Mesh("tension mesh needs at least 2x2 elements".into()));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::Mesh("domain dimensions must be positive".into()));
        }
        if self.thetas_a.len() != self.thetas_b.len() || self.thetas_a.is_empty() {
            return Err(Error::InvalidParameter(
                "both grains need the same nonzero number of slip systems".into(),
            ));
        }
        let grid = StructuredGrid::new(self.nx, self.ny, self.width, self.height)?;
        let sys_a: Vec<_> = self.thetas_a.iter().map(|&t| build_slip_system(t)).collect();
        let sys_b: Vec<_> = self.thetas_b.iter().map(|&t| build_slip_system(t)).collect();

        // the boundary line x + y = c0 runs through the domain center at
        // 45 degrees down-right; elements side with their centroid
        let c0 = (self.width + self.height) / 2.0;
        let hx = self.width / self.nx as f64;
        let hy = self.height / self.ny as f64;
        let in_a = |ex: usize, ey: usize| {
            (ex as f64 + 0.5) * hx + (ey as f64 + 0.5) * hy < c0
        };
        let grain_of = |e: usize| {
            let (ex, ey) = (e % self.nx, e / self.nx);
            usize::from(!in_a(ex, ey))
        };
        let mut bulk: Vec<BulkElement> = grid
            .elements
            .iter()
            .enumerate()
            .map(|(e, &nodes)| BulkElement { nodes, grain: grain_of(e) })
            .collect();
        if !bulk.iter().any(|e| e.grain == 0) || !bulk.iter().any(|e| e.grain == 1) {
            return Err(Error::Mesh("boundary does not cut the domain".into()));
        }

        // interface segments between elements of different grains
        struct Segment {
            nodes: [usize; 3],
        }
        let mut segments = Vec::new();
        for ey in 0..self.ny {
            for ex in 0..self.nx {
                if ex + 1 < self.nx && in_a(ex, ey) != in_a(ex + 1, ey) {
                    let ix = 2 * (ex + 1);
                    segments.push(Segment {
                        nodes: std::array::from_fn(|i| {
                            grid.node_at(ix, 2 * ey + i).expect("segment column")
                        }),
                    });
                }
                if ey + 1 < self.ny && in_a(ex, ey) != in_a(ex, ey + 1) {
                    let iy = 2 * (ey + 1);
                    segments.push(Segment {
                        nodes: std::array::from_fn(|i| {
                            grid.node_at(2 * ex + i, iy).expect("segment row")
                        }),
                    });
                }
            }
        }

        // duplicate every node on the path; grain A keeps the original
        let mut coords = grid.coords.clone();
        let mut dup: BTreeMap<usize, usize> = BTreeMap::new();
        for seg in &segments {
            for &n in &seg.nodes {
                dup.entry(n).or_insert_with(|| {
                    coords.push(coords[n]);
                    coords.len() - 1
                });
            }
        }
        for el in bulk.iter_mut().filter(|el| el.grain == 1) {
            for n in el.nodes.iter_mut() {
                if let Some(&d) = dup.get(n) {
                    *n = d;
                }
            }
        }

        let normal = Vector2::new(1.0, 1.0) / 2f64.sqrt();
        let orientation = build_gb_orientation(normal, &sys_a, &sys_b)?;
        let interface: Vec<InterfaceElement> = segments
            .iter()
            .map(|seg| InterfaceElement {
                nodes_a: seg.nodes,
                nodes_b: std::array::from_fn(|i| dup[&seg.nodes[i]]),
                orientation: orientation.clone(),
            })
            .collect();

        let mesh = MixedMesh { coords, grains: vec![sys_a, sys_b], bulk, interface };

        // centerline row; path nodes on it get their duplicate appended so
        // the profile shows both sides of the jump
        let mut profile_nodes = Vec::new();
        for ix in 0..=2 * self.nx {
            if let Some(n) = grid.node_at(ix, self.ny) {
                profile_nodes.push(n);
                if let Some(&d) = dup.get(&n) {
                    profile_nodes.push(d);
                }
            }
        }
        let pairs = dup.into_iter().collect();
        Ok(Built { mesh, profile_nodes, pairs, grid })
    }

    fn constraints(&self, built: &Built) -> ConstraintSet {
        let mesh = &built.mesh;
        let grid = &built.grid;
        let nd = mesh.dofs_per_node();
        let k = mesh.slip_count();
        let mut set = ConstraintSet::default();
        for &n in &grid.left_nodes() {
            set.fix(n * nd);
            set.fix(n * nd + 1);
            for a in 0..k {
                set.fix(n * nd + 2 + a);
            }
        }
        for &n in &grid.right_nodes() {
            set.drive(n * nd, self.width);
            set.fix(n * nd + 1);
            for a in 0..k {
                set.fix(n * nd + 2 + a);
            }
        }
        // displacement stays continuous across the boundary; only the
        // slips on the duplicated path nodes are independent
        for &(o, d) in &built.pairs {
            set.tie(d * nd, o * nd);
            set.tie(d * nd + 1, o * nd + 1);
        }
        set
    }

    pub fn run(&self, cfg: &SolverConfig, samples: &[f64]) -> Result<BicrystalTensionResults> {
        if !(self.strain_max > 0.0 && self.rate > 0.0) {
            return Err(Error::Config("loading needs a positive target and rate".into()));
        }
        let built = self.build()?;
        let t_end = self.strain_max / self.rate;
        let rate = self.rate;
        let mut program = LoadProgram {
            phases: vec![Phase::new(t_end, self.constraints(&built))],
            load: Box::new(move |t| rate * t),
            vertices: vec![],
        };
        for &s in samples {
            if s <= 0.0 || s > t_end + 1e-9 {
                return Err(Error::Config(format!("sample time {s} outside the program")));
            }
            program.vertices.push(s);
        }

        let model = Model { mesh: built.mesh, bulk: self.bulk.clone(), gb: self.gb.clone() };
        let x1: Vec<f64> =
            built.profile_nodes.iter().map(|&n| model.mesh.coords[n].x).collect();

        let mut series = Vec::new();
        let mut profiles = Vec::new();
        let mut final_d = Vec::new();
        let stats = {
            let mesh = &model.mesh;
            let bulk = &self.bulk;
            let gbp = &self.gb;
            let profile_nodes = &built.profile_nodes;
            let mut record = |c: &Committed| -> Result<()> {
                let avg = volume_averages(mesh, bulk, c.d, c.state)?;
                let gbt = gb_totals(mesh, gbp, c.state)?;
                series.push(TensionSeriesRow {
                    step: c.step,
                    t: c.t,
                    strain: c.load,
                    sigma11: avg.sigma.x,
                    psi_defect: avg.psi_defect,
                    diss_bulk: avg.dissipation,
                    diss_gb: gbt.dissipation,
                    energy_gb: gbt.energy,
                    newton_iters: c.newton_iters,
                });
                let sampled = samples.iter().any(|&s| (c.t - s).abs() <= 1e-9 * s.max(1.0))
                    || (c.t - t_end).abs() <= 1e-9 * t_end.max(1.0);
                if sampled && c.step > 0 {
                    let nd = mesh.dofs_per_node();
                    let k = mesh.slip_count();
                    let slip: Vec<Vec<f64>> = (0..k)
                        .map(|a| profile_nodes.iter().map(|&n| c.d[n * nd + 2 + a]).collect())
                        .collect();
                    profiles.push(TensionProfile {
                        t: c.t,
                        strain: c.load,
                        slip,
                        jumps: gb_jumps(mesh, c.d),
                    });
                }
                if (c.t - t_end).abs() <= 1e-9 * t_end.max(1.0) {
                    final_d = c.d.to_vec();
                }
                Ok(())
            };
            march(&model, &program, cfg, &mut record)?
        };
        Ok(BicrystalTensionResults { x1, series, profiles, final_d, stats })
    }
}
