//! Computational differential geometry for holonomy: parallel transport from
//! connection data, locally defined bundle holonomy and its even higher-degree
//! extensions on loop space, abelian gerbe 2-holonomy over tori and
//! triangulated surfaces, transgression to loop space, and exact-arithmetic
//! Hochschild/shuffle algebra — with every identity these constructions
//! satisfy wired up as a numerical or symbolic check.

pub mod error;
pub mod numerics;

pub mod geometry;
pub mod bundle;
pub mod gerbe;
pub mod mapping;
pub mod surface;
pub mod torus;
pub mod hochschild;

pub use error::{HolError, Result};
