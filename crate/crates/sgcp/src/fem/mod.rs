//! Finite element layer: shape functions, meshes with duplicated
//! grain-boundary nodes, element kernels and global assembly.

pub mod assemble;
pub mod element;
pub mod mesh;
pub mod shape;

pub use assemble::{assemble, AssembledSystem, FieldState};
pub use mesh::{
    BulkElement, ConstraintSet, Dirichlet, DofClass, DofMap, Drive, InterfaceElement, MixedMesh,
    StructuredGrid, Tie,
};
