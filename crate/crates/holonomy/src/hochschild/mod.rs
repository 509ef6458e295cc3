//! Exact-arithmetic Hochschild complexes for holonomy: the four chain-complex
//! flavors (single algebra over the circle, open-cover path segments, the
//! two-dimensional grid for torus maps, and simplicial surfaces), their
//! shuffle products and differentials, the canonical holonomy elements, the
//! allowable-matrix combinatorics of the grid expansion, and the quadrature
//! bridge from symbolic chains to the numeric iterated integral.
//!
//! All symbolic identities (D² = 0, Koszul signs, shuffle algebra) are
//! checked in exact Gaussian-rational arithmetic; floats only appear after
//! the iterated-integral evaluation.

pub mod alg;
pub mod chain;
pub mod elements;

pub use alg::{ExBasis, ExForm, PolyMat, Qc};
pub use chain::{shuffle, hochschild_differential, Flavor, HochschildChain, MonoSlot, Word};
pub use elements::{
    allowable_chain, allowable_count, build_h_element, enumerate_allowable_matrices,
    AllowableMatrix, HParams,
};
