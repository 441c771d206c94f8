//! Constrained simple shear of a single-crystal strip.
//!
//! The strip is one element wide with periodic side ties, so the response
//! only varies through the thickness. The top and bottom faces drive the
//! macroscopic shear; the micro boundary condition there is either hard
//! (zero slip), free (natural), or switches from free to held mid-run,
//! which is the passivation experiment that separates the model class from
//! purely dissipative gradient hardening.

use crate::bulk::BulkMaterialParams;
use crate::cases::post::{
    gnd_from_slip, higher_order_dissipation_avg, project_to_nodes, volume_averages,
};
use crate::fem::mesh::BulkElement;
use crate::fem::{ConstraintSet, FieldState, MixedMesh, StructuredGrid};
use crate::gb::GbMaterialParams;
use crate::kinematics::build_slip_system;
use crate::solver::{march, Committed, LoadProgram, MarchStats, Model, Phase, SolverConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MicroBc {
    /// Zero slip on the driven faces.
    Hard,
    /// Natural (traction-free) higher-order condition.
    Free,
}

#[derive(Debug, Clone, Copy)]
pub enum ShearLoading {
    Monotonic { gamma_max: f64, rate: f64 },
    /// Symmetric triangle wave of the given amplitude and period.
    Cyclic { amplitude: f64, period: f64, cycles: usize },
    /// Micro-free loading up to `gamma_switch`, then the face slips are
    /// held at their current values while the shear continues.
    Passivation { gamma_switch: f64, gamma_max: f64, rate: f64 },
}

#[derive(Debug, Clone)]
pub struct ShearLayerCase {
    pub height: f64,
    pub n_el: usize,
    /// Slip plane angles in radians.
    pub thetas: Vec<f64>,
    /// Boundary condition for monotonic and cyclic loading; the
    /// passivation program manages the faces itself.
    pub micro_bc: MicroBc,
    pub loading: ShearLoading,
    pub bulk: BulkMaterialParams,
    /// Step cap while the passivation switch is crossed.
    pub switch_dt: Option<f64>,
}

pub struct ShearSeriesRow {
    pub step: usize,
    pub t: f64,
    /// Applied shear Gamma.
    pub gamma: f64,
    /// Volume-averaged shear stress.
    pub sigma12: f64,
    /// Volume-averaged defect energy density.
    pub psi_defect: f64,
    /// Volume-averaged accumulated bulk dissipation.
    pub diss: f64,
    /// Accumulated volume-averaged higher-order dissipation.
    pub diss_ho: f64,
    pub newton_iters: usize,
}

/// Through-thickness profile captured at one sample instant.
pub struct ShearProfile {
    pub t: f64,
    pub gamma: f64,
    /// Nodal slip per system along the thickness line.
    pub slip: Vec<Vec<f64>>,
    /// Plastic shear strain component (tensorial 12).
    pub plastic12: Vec<f64>,
    /// Projected nodal GND density per system.
    pub gnd: Vec<Vec<f64>>,
}

pub struct ShearLayerResults {
    /// Thickness coordinates of the profile nodes.
    pub x2: Vec<f64>,
    pub series: Vec<ShearSeriesRow>,
    pub profiles: Vec<ShearProfile>,
    pub final_d: Vec<f64>,
    pub stats: MarchStats,
}

pub(crate) struct Built {
    pub(crate) mesh: MixedMesh,
    pub(crate) grid: StructuredGrid,
    pub(crate) profile_nodes: Vec<usize>,
}

impl ShearLayerCase {
    /// Builds just the mesh, mainly for inspection.
    pub fn mesh(&self) -> Result<MixedMesh> {
        Ok(self.build()?.mesh)
    }

    pub(crate) fn build(&self) -> Result<Built> {
        if self.n_el == 0 {
            return Err(Error::Mesh("layer needs at least one element".into()));
        }
        if self.thetas.is_empty() {
            return Err(Error::InvalidParameter("no slip systems given".into()));
        }
        if !(self.height > 0.0) {
            return Err(Error::Mesh("layer height must be positive".into()));
        }
        let grid = StructuredGrid::new(1, self.n_el, self.height / self.n_el as f64, self.height)?;
        let systems = self.thetas.iter().map(|&t| build_slip_system(t)).collect();
        let mesh = MixedMesh {
            coords: grid.coords.clone(),
            grains: vec![systems],
            bulk: grid.elements.iter().map(|&nodes| BulkElement { nodes, grain: 0 }).collect(),
            interface: vec![],
        };
        let profile_nodes =
            (0..=2 * self.n_el).map(|iy| grid.node_at(0, iy).expect("left column")).collect();
        Ok(Built { mesh, grid, profile_nodes })
    }

    /// Dirichlet and periodic constraints. `faces` selects what happens to
    /// the slip dofs on the driven faces.
    fn constraints(&self, mesh: &MixedMesh, grid: &StructuredGrid, faces: FaceSlips) -> ConstraintSet {
        let nd = mesh.dofs_per_node();
        let k = mesh.slip_count();
        let mut set = ConstraintSet::default();
        for &n in &grid.bottom_nodes() {
            set.fix(n * nd);
            set.fix(n * nd + 1);
        }
        for &n in &grid.top_nodes() {
            set.drive(n * nd, self.height);
            set.fix(n * nd + 1);
        }
        match faces {
            FaceSlips::Fixed => {
                for &n in grid.bottom_nodes().iter().chain(grid.top_nodes().iter()) {
                    for a in 0..k {
                        set.fix(n * nd + 2 + a);
                    }
                }
            }
            FaceSlips::Held => {
                for &n in grid.bottom_nodes().iter().chain(grid.top_nodes().iter()) {
                    for a in 0..k {
                        set.hold(n * nd + 2 + a);
                    }
                }
            }
            FaceSlips::Natural => {}
        }
        // periodic side ties; on the driven rows the displacements are
        // already prescribed and the slips belong to the face condition
        let top = 2 * self.n_el;
        for iy in 0..=top {
            let left = grid.node_at(0, iy).expect("left column");
            let right = grid.node_at(2, iy).expect("right column");
            let boundary = iy == 0 || iy == top;
            if !boundary {
                set.tie(right * nd, left * nd);
                set.tie(right * nd + 1, left * nd + 1);
            }
            if !boundary || faces == FaceSlips::Natural {
                for a in 0..k {
                    set.tie(right * nd + 2 + a, left * nd + 2 + a);
                }
            }
        }
        set
    }

    fn program(&self, mesh: &MixedMesh, grid: &StructuredGrid) -> Result<LoadProgram> {
        match self.loading {
            ShearLoading::Monotonic { gamma_max, rate } => {
                if !(gamma_max > 0.0 && rate > 0.0) {
                    return Err(Error::Config("monotonic loading needs positive target and rate".into()));
                }
                let faces = match self.micro_bc {
                    MicroBc::Hard => FaceSlips::Fixed,
                    MicroBc::Free => FaceSlips::Natural,
                };
                Ok(LoadProgram {
                    phases: vec![Phase::new(gamma_max / rate, self.constraints(mesh, grid, faces))],
                    load: Box::new(move |t| rate * t),
                    vertices: vec![],
                })
            }
            ShearLoading::Cyclic { amplitude, period, cycles } => {
                if !(amplitude > 0.0 && period > 0.0) || cycles == 0 {
                    return Err(Error::Config("cyclic loading needs positive amplitude, period and cycle count".into()));
                }
                let faces = match self.micro_bc {
                    MicroBc::Hard => FaceSlips::Fixed,
                    MicroBc::Free => FaceSlips::Natural,
                };
                let t_end = period * cycles as f64;
                let quarter = period / 4.0;
                let vertices: Vec<f64> =
                    (1..4 * cycles).map(|k| quarter * k as f64).collect();
                Ok(LoadProgram {
                    phases: vec![Phase::new(t_end, self.constraints(mesh, grid, faces))],
                    load: Box::new(move |t| triangle(t, amplitude, period)),
                    vertices,
                })
            }
            ShearLoading::Passivation { gamma_switch, gamma_max, rate } => {
                if !(gamma_switch > 0.0 && gamma_max > gamma_switch && rate > 0.0) {
                    return Err(Error::Config("passivation loading needs 0 < switch < target and a positive rate".into()));
                }
                let t_switch = gamma_switch / rate;
                let t_end = gamma_max / rate;
                let free = self.constraints(mesh, grid, FaceSlips::Natural);
                let held = self.constraints(mesh, grid, FaceSlips::Held);
                let phases = match self.switch_dt {
                    Some(dt_fine) => {
                        // resolve a band around the switch finely; the band is
                        // wide enough for the response to re-enter the plastic
                        // branch on the hard side
                        let band = (50.0 * dt_fine).min(0.45 * (t_end - t_switch).min(t_switch));
                        vec![
                            Phase::new(t_switch - band, free.clone()),
                            Phase::with_dt(t_switch, free, dt_fine),
                            Phase::with_dt(t_switch + band, held.clone(), dt_fine),
                            Phase::new(t_end, held),
                        ]
                    }
                    None => vec![Phase::new(t_switch, free), Phase::new(t_end, held)],
                };
                Ok(LoadProgram {
                    phases,
                    load: Box::new(move |t| rate * t),
                    vertices: vec![],
                })
            }
        }
    }

    /// Marches the case and records the series plus profiles at the sample
    /// times (the end is always sampled).
    pub fn run(&self, cfg: &SolverConfig, samples: &[f64]) -> Result<ShearLayerResults> {
        let built = self.build()?;
        let mut program = self.program(&built.mesh, &built.grid)?;
        let t_end = program.phases.last().expect("nonempty").t_end;
        for &s in samples {
            if s <= 0.0 || s > t_end + 1e-9 {
                return Err(Error::Config(format!("sample time {s} outside the program")));
            }
            program.vertices.push(s);
        }

        let model = Model {
            mesh: built.mesh,
            bulk: self.bulk.clone(),
            gb: GbMaterialParams { c_s: 0.0, zeta_s: 0.0 },
        };
        let x2: Vec<f64> =
            built.profile_nodes.iter().map(|&n| model.mesh.coords[n].y).collect();

        let mut series = Vec::new();
        let mut profiles = Vec::new();
        let mut final_d = Vec::new();
        let mut prev_state: Option<FieldState> = None;
        let mut diss_ho = 0.0;

        let stats = {
            let mesh = &model.mesh;
            let bulk = &self.bulk;
            let profile_nodes = &built.profile_nodes;
            let mut record = |c: &Committed| -> Result<()> {
                let avg = volume_averages(mesh, bulk, c.d, c.state)?;
                if let Some(prev) = &prev_state {
                    diss_ho += higher_order_dissipation_avg(mesh, bulk, prev, c.state)?;
                }
                prev_state = Some(c.state.clone());
                series.push(ShearSeriesRow {
                    step: c.step,
                    t: c.t,
                    gamma: c.load,
                    sigma12: avg.sigma.z,
                    psi_defect: avg.psi_defect,
                    diss: avg.dissipation,
                    diss_ho,
                    newton_iters: c.newton_iters,
                });
                let sampled = samples.iter().any(|&s| (c.t - s).abs() <= 1e-9 * s.max(1.0))
                    || (c.t - t_end).abs() <= 1e-9 * t_end.max(1.0);
                if sampled && c.step > 0 {
                    profiles.push(capture_profile(mesh, profile_nodes, c)?);
                }
                if (c.t - t_end).abs() <= 1e-9 * t_end.max(1.0) {
                    final_d = c.d.to_vec();
                }
                Ok(())
            };
            march(&model, &program, cfg, &mut record)?
        };
        Ok(ShearLayerResults { x2, series, profiles, final_d, stats })
    }
}

/// What the slip dofs on the driven faces do during a phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FaceSlips {
    Fixed,
    Held,
    Natural,
}

fn triangle(t: f64, amplitude: f64, period: f64) -> f64 {
    let tau = (t / period).rem_euclid(1.0);
    let v = if tau < 0.25 {
        4.0 * tau
    } else if tau < 0.75 {
        2.0 - 4.0 * tau
    } else {
        4.0 * tau - 4.0
    };
    amplitude * v
}

fn capture_profile(
    mesh: &MixedMesh,
    profile_nodes: &[usize],
    c: &Committed,
) -> Result<ShearProfile> {
    let nd = mesh.dofs_per_node();
    let k = mesh.slip_count();
    let systems = &mesh.grains[0];
    let slip: Vec<Vec<f64>> = (0..k)
        .map(|a| profile_nodes.iter().map(|&n| c.d[n * nd + 2 + a]).collect())
        .collect();
    let plastic12: Vec<f64> = (0..profile_nodes.len())
        .map(|i| (0..k).map(|a| slip[a][i] * systems[a].schmid_voigt.z / 2.0).sum())
        .collect();
    let gp_rho = gnd_from_slip(mesh, c.d)?;
    let mut gnd = Vec::with_capacity(k);
    for a in 0..k {
        let per_elem: Vec<Vec<f64>> =
            gp_rho.iter().map(|el| el.iter().map(|gp| gp[a]).collect()).collect();
        let nodal = project_to_nodes(mesh, &per_elem)?;
        gnd.push(profile_nodes.iter().map(|&n| nodal[n]).collect());
    }
    Ok(ShearProfile { t: c.t, gamma: c.load, slip, plastic12, gnd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bulk::BulkModel;
    use crate::kinematics::ElasticLaw;
    use approx::assert_relative_eq;

    fn table_bulk(model: BulkModel, l_star: f64, zeta: f64) -> BulkMaterialParams {
        BulkMaterialParams {
            elastic: ElasticLaw::new(260e3, 0.3).unwrap(),
            s0: 50.0,
            d0: 0.02,
            m: 0.05,
            omega: 0.01,
            l_star,
            zeta,
            h0: 0.0,
            q_latent: 1.0,
            model,
            l_en: 0.0,
            l_d: 0.0,
        }
    }

    fn quick_case(micro_bc: MicroBc, l_star: f64, zeta: f64) -> ShearLayerCase {
        ShearLayerCase {
            height: 1.0,
            n_el: 10,
            thetas: vec![60f64.to_radians(), -60f64.to_radians()],
            micro_bc,
            loading: ShearLoading::Monotonic { gamma_max: 0.02, rate: 0.01 },
            bulk: table_bulk(BulkModel::Proposed, l_star, zeta),
            switch_dt: None,
        }
    }

    #[test]
    fn micro_free_without_length_scale_is_homogeneous() {
        // no gradient energy and natural face conditions: the layer behaves
        // like a material point, slips uniform through the thickness
        let mut case = quick_case(MicroBc::Free, 0.0, 0.0);
        case.bulk.l_star = 0.0;
        let cfg = SolverConfig { dt: 0.05, ..Default::default() };
        let res = case.run(&cfg, &[]).unwrap();
        let prof = res.profiles.last().unwrap();
        for a in 0..2 {
            let first = prof.slip[a][0];
            for &v in &prof.slip[a] {
                assert!((v - first).abs() < 1e-8, "slip varies: {v} vs {first}");
            }
        }
        for row in &res.series {
            assert!(row.psi_defect == 0.0);
        }
        assert!(res.series.last().unwrap().diss > 0.0);
    }

    #[test]
    fn micro_hard_profile_is_symmetric_and_pinned() {
        let case = quick_case(MicroBc::Hard, 0.5, 0.0);
        let cfg = SolverConfig { dt: 0.05, ..Default::default() };
        let res = case.run(&cfg, &[]).unwrap();
        let prof = res.profiles.last().unwrap();
        let n = res.x2.len();
        assert_eq!(prof.plastic12[0], 0.0);
        assert_eq!(prof.plastic12[n - 1], 0.0);
        let mid = prof.plastic12[n / 2];
        assert!(mid > 1e-4, "midlayer should flow, got {mid}");
        for i in 0..n {
            let d = (prof.plastic12[i] - prof.plastic12[n - 1 - i]).abs();
            assert!(d < 1e-8, "profile asymmetry {d} at {i}");
        }
        // defect energy is stored once gradients develop
        assert!(res.series.last().unwrap().psi_defect > 0.0);
    }

    #[test]
    fn cyclic_program_retraces_load() {
        let case = ShearLayerCase {
            loading: ShearLoading::Cyclic { amplitude: 0.004, period: 4.0, cycles: 1 },
            ..quick_case(MicroBc::Hard, 0.5, 0.0)
        };
        let cfg = SolverConfig { dt: 0.05, ..Default::default() };
        let res = case.run(&cfg, &[]).unwrap();
        let gmax = res.series.iter().map(|r| r.gamma).fold(f64::MIN, f64::max);
        let gmin = res.series.iter().map(|r| r.gamma).fold(f64::MAX, f64::min);
        assert_relative_eq!(gmax, 0.004, max_relative = 1e-12);
        assert_relative_eq!(gmin, -0.004, max_relative = 1e-12);
        assert_relative_eq!(res.series.last().unwrap().gamma, 0.0, epsilon = 1e-15);
        // peaks are committed exactly because they are vertices
        assert!(res.series.iter().any(|r| (r.t - 1.0).abs() < 1e-12));
        assert!(res.series.iter().any(|r| (r.t - 3.0).abs() < 1e-12));
    }

    #[test]
    fn passivation_clamps_face_slip_growth() {
        let case = ShearLayerCase {
            loading: ShearLoading::Passivation { gamma_switch: 0.008, gamma_max: 0.016, rate: 0.01 },
            switch_dt: Some(0.01),
            ..quick_case(MicroBc::Free, 0.5, 0.0)
        };
        let cfg = SolverConfig { dt: 0.05, ..Default::default() };
        let res = case.run(&cfg, &[0.8]).unwrap();
        // two sampled profiles: at the switch and at the end
        assert_eq!(res.profiles.len(), 2);
        let at_switch = &res.profiles[0];
        let at_end = &res.profiles[1];
        let n = res.x2.len();
        for a in 0..2 {
            assert_relative_eq!(at_switch.slip[a][0], at_end.slip[a][0], epsilon = 1e-12);
            assert_relative_eq!(at_switch.slip[a][n - 1], at_end.slip[a][n - 1], epsilon = 1e-12);
        }
        // interior keeps flowing after passivation
        let mid = n / 2;
        assert!(at_end.slip[0][mid].abs() > at_switch.slip[0][mid].abs() + 1e-5);
    }

    #[test]
    fn invalid_cases_are_rejected() {
        let mut case = quick_case(MicroBc::Hard, 0.5, 0.0);
        case.n_el = 0;
        assert!(case.run(&SolverConfig::default(), &[]).is_err());
        let mut case = quick_case(MicroBc::Hard, 0.5, 0.0);
        case.loading = ShearLoading::Monotonic { gamma_max: -0.1, rate: 0.01 };
        assert!(case.run(&SolverConfig::default(), &[]).is_err());
        let case = quick_case(MicroBc::Hard, 0.5, 0.0);
        assert!(case.run(&SolverConfig::default(), &[99.0]).is_err());
    }
}
