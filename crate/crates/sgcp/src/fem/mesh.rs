//! Mesh topology, degree-of-freedom layout and kinematic constraints.
//!
//! Degrees of freedom are node-major: node `n` owns `2 + k` consecutive
//! dofs `(u1, u2, gamma^1, .., gamma^k)` starting at `n * (2 + k)`, where
//! `k` is the number of slip systems per grain (equal for all grains).
//!
//! Grain boundaries are resolved by duplicated nodes: the two sides of an
//! interface element reference distinct node ids at the same coordinates,
//! so all fields may jump across the boundary unless a constraint or an
//! interface element couples them.

use nalgebra::Vector2;

use crate::gb::GbOrientation;
use crate::kinematics::SlipSystem;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct BulkElement {
    pub nodes: [usize; 8],
    pub grain: usize,
}

#[derive(Debug, Clone)]
pub struct InterfaceElement {
    /// Side A nodes in line order (end, mid, end).
    pub nodes_a: [usize; 3],
    /// Side B nodes, coincident with side A.
    pub nodes_b: [usize; 3],
    pub orientation: GbOrientation,
}

#[derive(Debug, Clone)]
pub struct MixedMesh {
    pub coords: Vec<Vector2<f64>>,
    /// Slip systems per grain; every grain must carry the same count.
    pub grains: Vec<Vec<SlipSystem>>,
    pub bulk: Vec<BulkElement>,
    pub interface: Vec<InterfaceElement>,
}

impl MixedMesh {
    pub fn slip_count(&self) -> usize {
        self.grains.first().map_or(0, |g| g.len())
    }

    pub fn dofs_per_node(&self) -> usize {
        2 + self.slip_count()
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_nodes() * self.dofs_per_node()
    }

    /// Global dof index; `comp` 0 and 1 are displacements, `2 + alpha`
    /// is slip system `alpha`.
    pub fn dof(&self, node: usize, comp: usize) -> usize {
        debug_assert!(comp < self.dofs_per_node());
        node * self.dofs_per_node() + comp
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.slip_count();
        if self.grains.is_empty() || k == 0 {
            return Err(Error::Mesh("mesh needs at least one grain with slip systems".into()));
        }
        if self.grains.iter().any(|g| g.len() != k) {
            return Err(Error::Mesh("all grains must have the same slip system count".into()));
        }
        let nn = self.n_nodes();
        for (e, el) in self.bulk.iter().enumerate() {
            if el.nodes.iter().any(|&n| n >= nn) {
                return Err(Error::Mesh(format!("bulk element {e} references a missing node")));
            }
            if el.grain >= self.grains.len() {
                return Err(Error::Mesh(format!("bulk element {e} references a missing grain")));
            }
        }
        for (e, el) in self.interface.iter().enumerate() {
            if el.nodes_a.iter().chain(el.nodes_b.iter()).any(|&n| n >= nn) {
                return Err(Error::Mesh(format!("interface element {e} references a missing node")));
            }
            for i in 0..3 {
                let d = self.coords[el.nodes_a[i]] - self.coords[el.nodes_b[i]];
                if d.norm() > 1e-12 {
                    return Err(Error::Mesh(format!(
                        "interface element {e} pairs non-coincident nodes (gap {:e})",
                        d.norm()
                    )));
                }
            }
            if el.orientation.side_a.len() != k || el.orientation.side_b.len() != k {
                return Err(Error::Mesh(format!("interface element {e} slip count mismatch")));
            }
        }
        Ok(())
    }
}

/// How a prescribed value evolves over a loading phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drive {
    /// Value follows `scale * load(t)`; increments are `scale * dload`.
    Load(f64),
    /// Value is frozen at whatever was last committed.
    Hold,
}

impl Drive {
    fn increment(self, dload: f64) -> f64 {
        match self {
            Drive::Load(scale) => scale * dload,
            Drive::Hold => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dirichlet {
    pub dof: usize,
    pub drive: Drive,
}

/// Linear two-dof constraint `d[follower] = d[leader] + drive`.
#[derive(Debug, Clone)]
pub struct Tie {
    pub follower: usize,
    pub leader: usize,
    pub drive: Drive,
}

#[derive(Debug, Clone, Default)]
pub struct ConstraintSet {
    pub dirichlet: Vec<Dirichlet>,
    pub ties: Vec<Tie>,
}

impl ConstraintSet {
    pub fn fix(&mut self, dof: usize) {
        self.dirichlet.push(Dirichlet { dof, drive: Drive::Load(0.0) });
    }

    pub fn drive(&mut self, dof: usize, scale: f64) {
        self.dirichlet.push(Dirichlet { dof, drive: Drive::Load(scale) });
    }

    pub fn hold(&mut self, dof: usize) {
        self.dirichlet.push(Dirichlet { dof, drive: Drive::Hold });
    }

    pub fn tie(&mut self, follower: usize, leader: usize) {
        self.ties.push(Tie { follower, leader, drive: Drive::Load(0.0) });
    }

    pub fn tie_offset(&mut self, follower: usize, leader: usize, scale: f64) {
        self.ties.push(Tie { follower, leader, drive: Drive::Load(scale) });
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DofClass {
    /// Retained in the reduced system, with its reduced index.
    Free(usize),
    Fixed,
    /// Eliminated in favour of the leader dof.
    Follower(usize),
}

/// Elimination map from full to reduced (free) dofs.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub class: Vec<DofClass>,
    pub n_free: usize,
}

impl DofMap {
    pub fn build(n_dofs: usize, set: &ConstraintSet) -> Result<Self> {
        let mut kind = vec![0u8; n_dofs]; // 0 free, 1 fixed, 2 follower
        let mut leader = vec![usize::MAX; n_dofs];
        for d in &set.dirichlet {
            if d.dof >= n_dofs {
                return Err(Error::Mesh(format!("Dirichlet dof {} out of range", d.dof)));
            }
            if kind[d.dof] == 2 {
                return Err(Error::Mesh(format!("dof {} is both fixed and tied", d.dof)));
            }
            kind[d.dof] = 1;
        }
        for t in &set.ties {
            if t.follower >= n_dofs || t.leader >= n_dofs {
                return Err(Error::Mesh("tie dof out of range".into()));
            }
            if t.follower == t.leader {
                return Err(Error::Mesh(format!("dof {} tied to itself", t.follower)));
            }
            if kind[t.follower] != 0 {
                return Err(Error::Mesh(format!(
                    "dof {} is a follower of more than one constraint",
                    t.follower
                )));
            }
            kind[t.follower] = 2;
            leader[t.follower] = t.leader;
        }
        // leaders must resolve in one hop; chains would make elimination
        // order-dependent so the case builders canonicalise them away
        for t in &set.ties {
            if kind[t.leader] == 2 {
                return Err(Error::Mesh(format!(
                    "tie leader {} is itself a follower; canonicalise the chain",
                    t.leader
                )));
            }
        }
        let mut class = vec![DofClass::Fixed; n_dofs];
        let mut n_free = 0;
        for i in 0..n_dofs {
            class[i] = match kind[i] {
                0 => {
                    let c = DofClass::Free(n_free);
                    n_free += 1;
                    c
                }
                1 => DofClass::Fixed,
                _ => DofClass::Follower(leader[i]),
            };
        }
        Ok(DofMap { class, n_free })
    }

    /// Initial increment vector for a step with load increment `dload`:
    /// prescribed dofs carry their driven increments, free dofs start at
    /// zero, followers mirror their leaders plus the tie offset.
    pub fn prescribed_increment(&self, set: &ConstraintSet, dload: f64) -> Vec<f64> {
        let mut d = vec![0.0; self.class.len()];
        for dir in &set.dirichlet {
            d[dir.dof] = dir.drive.increment(dload);
        }
        for t in &set.ties {
            d[t.follower] = d[t.leader] + t.drive.increment(dload);
        }
        d
    }

    /// Fold a full residual onto the free dofs (follower rows accumulate
    /// onto their leaders).
    pub fn reduce_residual(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free];
        for (i, &v) in r.iter().enumerate() {
            match self.class[i] {
                DofClass::Free(fi) => out[fi] += v,
                DofClass::Fixed => {}
                DofClass::Follower(l) => {
                    if let DofClass::Free(fl) = self.class[l] {
                        out[fl] += v;
                    }
                }
            }
        }
        out
    }

    /// Map stiffness triplets onto free indices, folding follower rows and
    /// columns onto their leaders and dropping fixed ones.
    pub fn reduce_triplets(&self, triplets: &[(usize, usize, f64)]) -> Vec<(usize, usize, f64)> {
        let resolve = |i: usize| -> Option<usize> {
            match self.class[i] {
                DofClass::Free(f) => Some(f),
                DofClass::Fixed => None,
                DofClass::Follower(l) => match self.class[l] {
                    DofClass::Free(f) => Some(f),
                    _ => None,
                },
            }
        };
        let mut out = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if let (Some(rf), Some(cf)) = (resolve(r), resolve(c)) {
                out.push((rf, cf, v));
            }
        }
        out
    }

    /// Scatter a free-dof correction back to the full vector; prescribed
    /// dofs receive no correction and followers copy their leaders.
    pub fn expand_correction(&self, delta: &[f64]) -> Vec<f64> {
        debug_assert_eq!(delta.len(), self.n_free);
        let mut out = vec![0.0; self.class.len()];
        for i in 0..self.class.len() {
            if let DofClass::Free(f) = self.class[i] {
                out[i] = delta[f];
            }
        }
        for i in 0..self.class.len() {
            if let DofClass::Follower(l) = self.class[i] {
                out[i] = out[l];
            }
        }
        out
    }
}

/// Structured grid of Q8 elements on `[0, width] x [0, height]`.
///
/// Geometric nodes live on a half-index grid `(ix, iy)` with
/// `ix in 0..=2*nx`, `iy in 0..=2*ny` and odd-odd pairs absent
/// (serendipity elements have no interior node).
pub struct StructuredGrid {
    pub coords: Vec<Vector2<f64>>,
    pub elements: Vec<[usize; 8]>,
    pub nx: usize,
    pub ny: usize,
    ids: Vec<Option<usize>>,
    width: f64,
    height: f64,
}

impl StructuredGrid {
    pub fn new(nx: usize, ny: usize, width: f64, height: f64) -> Result<Self> {
        if nx == 0 || ny == 0 || !(width > 0.0) || !(height > 0.0) {
            return Err(Error::Mesh("grid needs positive extent and element counts".into()));
        }
        let cols = 2 * nx + 1;
        let rows = 2 * ny + 1;
        let mut ids = vec![None; cols * rows];
        let mut coords = Vec::new();
        for iy in 0..rows {
            for ix in 0..cols {
                if ix % 2 == 1 && iy % 2 == 1 {
                    continue;
                }
                ids[iy * cols + ix] = Some(coords.len());
                coords.push(Vector2::new(
                    width * ix as f64 / (2 * nx) as f64,
                    height * iy as f64 / (2 * ny) as f64,
                ));
            }
        }
        let mut elements = Vec::with_capacity(nx * ny);
        for ey in 0..ny {
            for ex in 0..nx {
                let at = |dx: usize, dy: usize| ids[(2 * ey + dy) * cols + 2 * ex + dx].unwrap();
                elements.push([
                    at(0, 0),
                    at(2, 0),
                    at(2, 2),
                    at(0, 2),
                    at(1, 0),
                    at(2, 1),
                    at(1, 2),
                    at(0, 1),
                ]);
            }
        }
        Ok(StructuredGrid { coords, elements, nx, ny, ids, width, height })
    }

    /// Node id at half-grid position, if a node exists there.
    pub fn node_at(&self, ix: usize, iy: usize) -> Option<usize> {
        let cols = 2 * self.nx + 1;
        if ix >= cols || iy >= 2 * self.ny + 1 {
            return None;
        }
        self.ids[iy * cols + ix]
    }

    /// All node ids on the bottom (iy = 0) edge, left to right.
    pub fn bottom_nodes(&self) -> Vec<usize> {
        (0..=2 * self.nx).filter_map(|ix| self.node_at(ix, 0)).collect()
    }

    pub fn top_nodes(&self) -> Vec<usize> {
        (0..=2 * self.nx).filter_map(|ix| self.node_at(ix, 2 * self.ny)).collect()
    }

    pub fn left_nodes(&self) -> Vec<usize> {
        (0..=2 * self.ny).filter_map(|iy| self.node_at(0, iy)).collect()
    }

    pub fn right_nodes(&self) -> Vec<usize> {
        (0..=2 * self.ny).filter_map(|iy| self.node_at(2 * self.nx, iy)).collect()
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    /// Element index at grid position (ex, ey).
    pub fn element_index(&self, ex: usize, ey: usize) -> usize {
        debug_assert!(ex < self.nx && ey < self.ny);
        ey * self.nx + ex
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::build_slip_system;
    use approx::assert_relative_eq;

    fn two_grain_systems() -> Vec<Vec<SlipSystem>> {
        vec![vec![build_slip_system(0.5)], vec![build_slip_system(-0.5)]]
    }

    #[test]
    fn grid_counts_and_coordinates() {
        let g = StructuredGrid::new(3, 2, 3.0, 2.0).unwrap();
        // (2nx+1)(2ny+1) minus odd-odd interior points
        assert_eq!(g.coords.len(), 7 * 5 - 3 * 2);
        assert_eq!(g.elements.len(), 6);
        let n = g.node_at(2, 2).unwrap();
        assert_relative_eq!(g.coords[n].x, 1.0);
        assert_relative_eq!(g.coords[n].y, 1.0);
        assert!(g.node_at(1, 1).is_none());
        assert_eq!(g.bottom_nodes().len(), 7);
        assert_eq!(g.left_nodes().len(), 5);
    }

    #[test]
    fn element_connectivity_is_counterclockwise() {
        let g = StructuredGrid::new(2, 2, 2.0, 2.0).unwrap();
        for el in &g.elements {
            let c: Vec<_> = el[..4].iter().map(|&n| g.coords[n]).collect();
            let area = 0.5
                * ((c[1] - c[0]).perp(&(c[3] - c[0]))
                    + (c[3] - c[2]).perp(&(c[1] - c[2])));
            assert!(area > 0.0);
            // midside 4 sits between corners 0 and 1
            let m = g.coords[el[4]];
            assert_relative_eq!(m.x, 0.5 * (c[0].x + c[1].x), epsilon = 1e-14);
            assert_relative_eq!(m.y, 0.5 * (c[0].y + c[1].y), epsilon = 1e-14);
        }
    }

    #[test]
    fn dof_layout_is_node_major() {
        let g = StructuredGrid::new(1, 1, 1.0, 1.0).unwrap();
        let mesh = MixedMesh {
            coords: g.coords,
            grains: two_grain_systems(),
            bulk: vec![BulkElement { nodes: g.elements[0], grain: 0 }],
            interface: vec![],
        };
        assert_eq!(mesh.slip_count(), 1);
        assert_eq!(mesh.dofs_per_node(), 3);
        assert_eq!(mesh.dof(0, 2), 2);
        assert_eq!(mesh.dof(3, 1), 10);
        assert_eq!(mesh.n_dofs(), 24);
        mesh.validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_references() {
        let g = StructuredGrid::new(1, 1, 1.0, 1.0).unwrap();
        let mut mesh = MixedMesh {
            coords: g.coords,
            grains: two_grain_systems(),
            bulk: vec![BulkElement { nodes: g.elements[0], grain: 0 }],
            interface: vec![],
        };
        mesh.bulk[0].grain = 5;
        assert!(mesh.validate().is_err());
        mesh.bulk[0].grain = 0;
        mesh.bulk[0].nodes[3] = 999;
        assert!(mesh.validate().is_err());
    }

    #[test]
    fn dof_map_classifies_and_reduces() {
        let set = {
            let mut s = ConstraintSet::default();
            s.fix(0);
            s.drive(1, 2.0);
            s.tie(3, 2);
            s.tie_offset(5, 4, 1.0);
            s
        };
        let map = DofMap::build(6, &set).unwrap();
        assert_eq!(map.n_free, 2);
        assert_eq!(map.class[2], DofClass::Free(0));
        assert_eq!(map.class[3], DofClass::Follower(2));

        let inc = map.prescribed_increment(&set, 0.25);
        assert_relative_eq!(inc[1], 0.5);
        assert_relative_eq!(inc[3], 0.0);
        assert_relative_eq!(inc[5], 0.25);

        // follower row folds onto its leader
        let r = map.reduce_residual(&[10.0, 20.0, 1.0, 2.0, 4.0, 8.0]);
        assert_relative_eq!(r[0], 3.0);
        assert_relative_eq!(r[1], 12.0);

        let tr = map.reduce_triplets(&[(3, 3, 1.0), (2, 3, 1.0), (0, 2, 7.0), (4, 4, 2.0)]);
        // (3,3) -> (2,2) reduced (0,0); (2,3) -> (0,0); (0,2) dropped
        assert_eq!(tr.len(), 3);
        assert!(tr.iter().all(|&(r, c, _)| r < 2 && c < 2));

        let full = map.expand_correction(&[3.0, 5.0]);
        assert_relative_eq!(full[2], 3.0);
        assert_relative_eq!(full[3], 3.0);
        assert_relative_eq!(full[1], 0.0);
        assert_relative_eq!(full[5], 5.0);
    }

    #[test]
    fn dof_map_rejects_conflicts() {
        let mut s = ConstraintSet::default();
        s.fix(1);
        s.tie(1, 0);
        assert!(DofMap::build(3, &s).is_err());

        let mut s = ConstraintSet::default();
        s.tie(1, 0);
        s.tie(2, 1); // chain: leader 1 is itself a follower
        assert!(DofMap::build(3, &s).is_err());

        let mut s = ConstraintSet::default();
        s.tie(1, 1);
        assert!(DofMap::build(3, &s).is_err());
    }

    #[test]
    fn interface_nodes_must_coincide() {
        use crate::gb::build_gb_orientation;
        let g = StructuredGrid::new(1, 1, 1.0, 1.0).unwrap();
        let mut coords = g.coords.clone();
        let n = coords.len();
        // duplicate the right edge nodes
        let edge = [g.node_at(2, 0).unwrap(), g.node_at(2, 1).unwrap(), g.node_at(2, 2).unwrap()];
        for &e in &edge {
            coords.push(coords[e]);
        }
        let grains = two_grain_systems();
        let orientation =
            build_gb_orientation(Vector2::new(1.0, 0.0), &grains[0], &grains[1]).unwrap();
        let mut mesh = MixedMesh {
            coords,
            grains,
            bulk: vec![BulkElement { nodes: g.elements[0], grain: 0 }],
            interface: vec![InterfaceElement {
                nodes_a: edge,
                nodes_b: [n, n + 1, n + 2],
                orientation,
            }],
        };
        mesh.validate().unwrap();
        mesh.coords[n].x += 1e-6;
        assert!(mesh.validate().is_err());
    }
}
