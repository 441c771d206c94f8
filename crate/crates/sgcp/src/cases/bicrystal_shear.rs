//! Periodic bicrystal under simple shear.
//!
//! A thin strip of one full grain A flanked by two half grains B, periodic
//! in both directions, so the B halves form a single grain through the
//! side boundary. The response varies only along x1. Zero-thickness
//! interface elements sit at the two internal junctions; their node pairs
//! let the slip jump while the boundary stress develops according to the
//! interface model.

use nalgebra::Vector2;

use crate::bulk::BulkMaterialParams;
use crate::cases::post::{
    gb_jumps, gb_totals, gnd_from_slip, project_to_nodes, volume_averages, GbNodeJump,
};
use crate::fem::mesh::{BulkElement, InterfaceElement};
use crate::fem::{ConstraintSet, MixedMesh, StructuredGrid};
use crate::gb::{build_gb_orientation, GbMaterialParams};
use crate::kinematics::build_slip_system;
use crate::solver::{march, Committed, LoadProgram, MarchStats, Model, Phase, SolverConfig};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct BicrystalShearCase {
    /// Width W of one grain; the strip is 2W long.
    pub grain_width: f64,
    /// Elements per grain along x1 (even, so the half grains split cleanly).
    pub n_per_grain: usize,
    /// Slip plane angle of grain A (radians).
    pub theta_a: f64,
    /// Slip plane angle of grain B (radians).
    pub theta_b: f64,
    pub bulk: BulkMaterialParams,
    pub gb: GbMaterialParams,
    pub gamma_max: f64,
    pub rate: f64,
    /// Replace the interface response by explicit zero slip at the
    /// junction nodes: the classical micro-hard boundary.
    pub micro_hard_gb: bool,
}

pub struct BicrystalSeriesRow {
    pub step: usize,
    pub t: f64,
    pub gamma: f64,
    pub sigma12: f64,
    pub psi_defect: f64,
    /// Volume-averaged accumulated bulk dissipation.
    pub diss_bulk: f64,
    /// Interface dissipation integrated over both junctions.
    pub diss_gb: f64,
    /// Interface defect energy integrated over both junctions.
    pub energy_gb: f64,
    pub newton_iters: usize,
}

/// Profile along the strip captured at one sample instant. Junction
/// columns appear twice (both sides of the jump), ordered left to right.
pub struct BicrystalProfile {
    pub t: f64,
    pub gamma: f64,
    /// Nodal slip per system along the bottom row.
    pub slip: Vec<Vec<f64>>,
    /// Projected nodal GND density per system.
    pub gnd: Vec<Vec<f64>>,
    /// Slip on both sides of every junction node pair.
    pub jumps: Vec<GbNodeJump>,
}

pub struct BicrystalShearResults {
    /// x1 coordinates of the profile nodes.
    pub x1: Vec<f64>,
    pub series: Vec<BicrystalSeriesRow>,
    pub profiles: Vec<BicrystalProfile>,
    pub final_d: Vec<f64>,
    pub stats: MarchStats,
}

pub(crate) struct Built {
    pub(crate) mesh: MixedMesh,
    pub(crate) profile_nodes: Vec<usize>,
    /// (original, duplicate) node pairs per junction column, bottom to top.
    pub(crate) gb_pairs: Vec<[(usize, usize); 3]>,
    pub(crate) height: f64,
    pub(crate) grid: StructuredGrid,
}

impl BicrystalShearCase {
    /// Builds just the mesh, mainly for inspection.
    pub fn mesh(&self) -> Result<MixedMesh> {
        Ok(self.build()?.mesh)
    }

    pub(crate) fn build(&self) -> Result<Built> {
        if self.n_per_grain == 0 || self.n_per_grain % 2 != 0 {
            return Err(Error::Mesh("elements per grain must be even and positive".into()));
        }
        if !(self.grain_width > 0.0) {
            return Err(Error::Mesh("grain width must be positive".into()));
        }
        let nx = 2 * self.n_per_grain;
        let width = 2.0 * self.grain_width;
        let height = self.grain_width / self.n_per_grain as f64;
        let grid = StructuredGrid::new(nx, 1, width, height)?;
        let sys_a = vec![build_slip_system(self.theta_a)];
        let sys_b = vec![build_slip_system(self.theta_b)];

        let n_half = self.n_per_grain / 2;
        let in_a = |ex: usize| ex >= n_half && ex < n_half + self.n_per_grain;
        let mut coords = grid.coords.clone();
        let mut bulk: Vec<BulkElement> = grid
            .elements
            .iter()
            .enumerate()
            .map(|(ex, &nodes)| BulkElement { nodes, grain: if in_a(ex) { 0 } else { 1 } })
            .collect();

        // duplicate the junction columns; the original copy stays with the
        // elements on the left, the duplicate serves the right
        let mut interface = Vec::new();
        let mut gb_pairs = Vec::new();
        for (gb_idx, &ex_right) in [n_half, n_half + self.n_per_grain].iter().enumerate() {
            let ix = 2 * ex_right;
            let orig: [usize; 3] =
                std::array::from_fn(|iy| grid.node_at(ix, iy).expect("junction column"));
            let dup: [usize; 3] = std::array::from_fn(|i| {
                coords.push(coords[orig[i]]);
                coords.len() - 1
            });
            let el = &mut bulk[ex_right];
            // local left edge: corner 0, corner 3, midside 7
            el.nodes[0] = dup[0];
            el.nodes[3] = dup[2];
            el.nodes[7] = dup[1];
            // grain A is in the middle: at the first junction A is the
            // right (duplicate) side, at the second the left (original)
            let (nodes_a, nodes_b, normal) = if gb_idx == 0 {
                (dup, orig, Vector2::new(-1.0, 0.0))
            } else {
                (orig, dup, Vector2::new(1.0, 0.0))
            };
            interface.push(InterfaceElement {
                nodes_a,
                nodes_b,
                orientation: build_gb_orientation(normal, &sys_a, &sys_b)?,
            });
            gb_pairs.push(std::array::from_fn(|i| (orig[i], dup[i])));
        }

        let mesh =
            MixedMesh { coords, grains: vec![sys_a, sys_b], bulk, interface };

        let mut profile_nodes = Vec::new();
        for ix in 0..=2 * nx {
            let n = grid.node_at(ix, 0).expect("bottom row");
            profile_nodes.push(n);
            for (gb_idx, &ex_right) in [n_half, n_half + self.n_per_grain].iter().enumerate() {
                if ix == 2 * ex_right {
                    profile_nodes.push(gb_pairs[gb_idx][0].1);
                }
            }
        }
        Ok(Built { mesh, profile_nodes, gb_pairs, height, grid })
    }

    fn constraints(&self, built: &Built) -> ConstraintSet {
        let mesh = &built.mesh;
        let grid = &built.grid;
        let nd = mesh.dofs_per_node();
        let nx = 2 * self.n_per_grain;
        let h = built.height;
        let mut set = ConstraintSet::default();

        let bl = grid.node_at(0, 0).expect("corner");
        let br = grid.node_at(2 * nx, 0).expect("corner");
        let tl = grid.node_at(0, 2).expect("corner");
        let tr = grid.node_at(2 * nx, 2).expect("corner");
        let ml = grid.node_at(0, 1).expect("side");
        let mr = grid.node_at(2 * nx, 1).expect("side");

        // pin the rigid motion at the canonical corner
        set.fix(bl * nd);
        set.fix(bl * nd + 1);

        let is_gb_node = |n: usize| {
            built.gb_pairs.iter().any(|p| p.iter().any(|&(o, d)| o == n || d == n))
        };

        // all corners collapse onto the canonical one (offsets in u1 carry
        // the shear); the side midnodes pair up plainly
        let tie_all = |set: &mut ConstraintSet, f: usize, l: usize, shear: bool| {
            if shear {
                set.tie_offset(f * nd, l * nd, h);
            } else {
                set.tie(f * nd, l * nd);
            }
            set.tie(f * nd + 1, l * nd + 1);
            for a in 0..nd - 2 {
                set.tie(f * nd + 2 + a, l * nd + 2 + a);
            }
        };
        tie_all(&mut set, br, bl, false);
        tie_all(&mut set, tl, bl, true);
        tie_all(&mut set, tr, bl, true);
        tie_all(&mut set, mr, ml, false);

        // interior top-bottom ties, including both copies of the junction
        // columns so each grain stays periodic on its own side
        let tie_tb = |set: &mut ConstraintSet, top: usize, bottom: usize| {
            set.tie_offset(top * nd, bottom * nd, h);
            set.tie(top * nd + 1, bottom * nd + 1);
            if !(self.micro_hard_gb && is_gb_node(top)) {
                for a in 0..nd - 2 {
                    set.tie(top * nd + 2 + a, bottom * nd + 2 + a);
                }
            }
        };
        for ix in 1..2 * nx {
            let top = grid.node_at(ix, 2).expect("top row");
            let bottom = grid.node_at(ix, 0).expect("bottom row");
            tie_tb(&mut set, top, bottom);
        }
        // the duplicated columns carry independent slip but the same
        // displacement: only gamma may jump across the boundary. All their
        // u ties lead to the original bottom node in one hop (the original
        // top is itself a follower), and the slips stay periodic within
        // their own side.
        for pair in &built.gb_pairs {
            let (ob, db) = pair[0];
            let (om, dm) = pair[1];
            let (_, dt) = pair[2];
            set.tie(db * nd, ob * nd);
            set.tie(db * nd + 1, ob * nd + 1);
            set.tie(dm * nd, om * nd);
            set.tie(dm * nd + 1, om * nd + 1);
            set.tie_offset(dt * nd, ob * nd, h);
            set.tie(dt * nd + 1, ob * nd + 1);
            if !self.micro_hard_gb {
                for a in 0..nd - 2 {
                    set.tie(dt * nd + 2 + a, db * nd + 2 + a);
                }
            }
        }

        if self.micro_hard_gb {
            for pair in &built.gb_pairs {
                for &(o, d) in pair.iter() {
                    for a in 0..nd - 2 {
                        set.fix(o * nd + 2 + a);
                        set.fix(d * nd + 2 + a);
                    }
                }
            }
        }
        set
    }

    pub fn run(&self, cfg: &SolverConfig, samples: &[f64]) -> Result<BicrystalShearResults> {
        if !(self.gamma_max > 0.0 && self.rate > 0.0) {
            return Err(Error::Config("loading needs a positive target and rate".into()));
        }
        let built = self.build()?;
        let t_end = self.gamma_max / self.rate;
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

        let model =
            Model { mesh: built.mesh, bulk: self.bulk.clone(), gb: self.gb.clone() };
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
                series.push(BicrystalSeriesRow {
                    step: c.step,
                    t: c.t,
                    gamma: c.load,
                    sigma12: avg.sigma.z,
                    psi_defect: avg.psi_defect,
                    diss_bulk: avg.dissipation,
                    diss_gb: gbt.dissipation,
                    energy_gb: gbt.energy,
                    newton_iters: c.newton_iters,
                });
                let sampled = samples.iter().any(|&s| (c.t - s).abs() <= 1e-9 * s.max(1.0))
                    || (c.t - t_end).abs() <= 1e-9 * t_end.max(1.0);
                if sampled && c.step > 0 {
                    let k = mesh.slip_count();
                    let nd = mesh.dofs_per_node();
                    let slip: Vec<Vec<f64>> = (0..k)
                        .map(|a| profile_nodes.iter().map(|&n| c.d[n * nd + 2 + a]).collect())
                        .collect();
                    let gp_rho = gnd_from_slip(mesh, c.d)?;
                    let mut gnd = Vec::with_capacity(k);
                    for a in 0..k {
                        let per_elem: Vec<Vec<f64>> = gp_rho
                            .iter()
                            .map(|el| el.iter().map(|gp| gp[a]).collect())
                            .collect();
                        let nodal = project_to_nodes(mesh, &per_elem)?;
                        gnd.push(profile_nodes.iter().map(|&n| nodal[n]).collect());
                    }
                    profiles.push(BicrystalProfile {
                        t: c.t,
                        gamma: c.load,
                        slip,
                        gnd,
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
        Ok(BicrystalShearResults { x1, series, profiles, final_d, stats })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bulk::BulkModel;
    use crate::kinematics::ElasticLaw;

    fn table_bulk(l_star: f64) -> BulkMaterialParams {
        BulkMaterialParams {
            elastic: ElasticLaw::new(60.84e3, 0.3).unwrap(),
            s0: 60.84,
            d0: 0.001,
            m: 0.05,
            omega: 0.01,
            l_star,
            zeta: 0.0,
            h0: 0.0,
            q_latent: 1.0,
            model: BulkModel::Proposed,
            l_en: 0.0,
            l_d: 0.0,
        }
    }

    fn quick_case(c_s: f64, zeta_s: f64) -> BicrystalShearCase {
        BicrystalShearCase {
            grain_width: 1.0,
            n_per_grain: 10,
            theta_a: 10f64.to_radians(),
            theta_b: (-10f64).to_radians(),
            bulk: table_bulk(2.0),
            gb: GbMaterialParams { c_s, zeta_s },
            gamma_max: 0.01,
            rate: 0.001,
            micro_hard_gb: false,
        }
    }

    #[test]
    fn mesh_has_two_junction_columns() {
        let built = quick_case(0.0, 0.0).build().unwrap();
        assert_eq!(built.mesh.interface.len(), 2);
        assert_eq!(built.mesh.bulk.len(), 20);
        built.mesh.validate().unwrap();
        // grain pattern B B B B B A A ... A B B B B B
        let grains: Vec<usize> = built.mesh.bulk.iter().map(|e| e.grain).collect();
        assert_eq!(&grains[0..5], &[1; 5]);
        assert_eq!(&grains[5..15], &[0; 10]);
        assert_eq!(&grains[15..20], &[1; 5]);
        // profile visits both copies of both junctions
        assert_eq!(built.profile_nodes.len(), 2 * 20 + 1 + 2);
    }

    #[test]
    fn transparent_boundary_gives_uniform_slip_and_no_gnd() {
        let case = quick_case(0.0, 0.0);
        let cfg = SolverConfig { dt: 1.0, ..Default::default() };
        let res = case.run(&cfg, &[]).unwrap();
        let prof = res.profiles.last().unwrap();
        // no boundary resistance, same Schmid magnitude on both systems:
        // each grain deforms like a single crystal
        let vals = &prof.slip[0];
        assert!(vals[0].abs() > 1e-3, "no plastic flow, slip {}", vals[0]);
        let spread =
            vals.iter().fold(f64::MIN, |m, &v| m.max(v)) - vals.iter().fold(f64::MAX, |m, &v| m.min(v));
        assert!(spread < 1e-8, "slip spread {spread}");
        for row in &prof.gnd[0] {
            assert!(row.abs() < 1e-8, "gnd {row}");
        }
        assert_eq!(res.series.last().unwrap().diss_gb, 0.0);
        assert_eq!(res.series.last().unwrap().energy_gb, 0.0);
    }

    #[test]
    fn stiff_boundary_suppresses_junction_slip() {
        let free = quick_case(0.0, 0.0);
        let stiff = quick_case(1e9, 0.0);
        let cfg = SolverConfig { dt: 1.0, ..Default::default() };
        let rf = free.run(&cfg, &[]).unwrap();
        let rs = stiff.run(&cfg, &[]).unwrap();
        let gb_slip = |r: &BicrystalShearResults| {
            let p = r.profiles.last().unwrap();
            p.jumps.iter().map(|j| j.slip_a[0].abs() + j.slip_b[0].abs()).sum::<f64>()
        };
        let sf = gb_slip(&rf);
        let ss = gb_slip(&rs);
        assert!(sf > 1e-3, "free boundary slip {sf} suspiciously small");
        assert!(ss < 0.05 * sf, "stiff {ss} vs free {sf}");
        // a stiff boundary stores energy but without recovery dissipates
        // nothing
        let last = rs.series.last().unwrap();
        assert!(last.energy_gb > 0.0);
        assert_eq!(last.diss_gb, 0.0);
    }

    #[test]
    fn micro_hard_pins_junction_slip_exactly() {
        let mut case = quick_case(0.0, 0.0);
        case.micro_hard_gb = true;
        let cfg = SolverConfig { dt: 1.0, ..Default::default() };
        let res = case.run(&cfg, &[]).unwrap();
        let prof = res.profiles.last().unwrap();
        for j in &prof.jumps {
            assert_eq!(j.slip_a[0], 0.0);
            assert_eq!(j.slip_b[0], 0.0);
        }
        // interior still flows
        let mid = prof.slip[0][prof.slip[0].len() / 2];
        assert!(mid.abs() > 1e-4, "interior slip {mid}");
    }

    #[test]
    fn periodicity_holds_across_the_strip() {
        let case = quick_case(5e4, 0.0);
        let cfg = SolverConfig { dt: 1.0, ..Default::default() };
        let res = case.run(&cfg, &[]).unwrap();
        let prof = res.profiles.last().unwrap();
        let first = prof.slip[0][0];
        let last = *prof.slip[0].last().unwrap();
        assert!(first.abs() > 1e-4, "no plastic flow, slip {first}");
        assert!(
            (first - last).abs() <= 1e-12 * first.abs().max(1.0),
            "periodic mismatch {first} vs {last}"
        );
        // recovery off: boundary stress bounded by c_s |G|, dissipation zero
        assert_eq!(res.series.last().unwrap().diss_gb, 0.0);
        assert!(res.series.last().unwrap().energy_gb > 0.0);
    }

    #[test]
    fn recovery_dissipates_at_the_boundary() {
        let case = quick_case(5e4, 500.0);
        let cfg = SolverConfig { dt: 1.0, ..Default::default() };
        let res = case.run(&cfg, &[]).unwrap();
        let last = res.series.last().unwrap();
        assert!(last.diss_gb > 0.0, "gb dissipation {}", last.diss_gb);
        assert!(res.stats.diss_min >= -1e-12);
    }

    #[test]
    fn odd_grain_split_is_rejected() {
        let mut case = quick_case(0.0, 0.0);
        case.n_per_grain = 9;
        assert!(case.run(&SolverConfig::default(), &[]).is_err());
    }
}
