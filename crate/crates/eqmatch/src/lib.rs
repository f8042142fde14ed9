//! Translation-equivariant perfect matchings of heads to tails on `Z^d`.
//!
//! The crate provides two matching rules over finite coin-flip configurations:
//! the one-dimensional Meshalkin bracket rule (lifted to `d` dimensions line
//! by line), and a staged rule that pairs sites within the successively
//! coarser clumps carved out by seed-induced cutters. A statistics harness
//! measures displacement tails, verifies exact mass-transport identities on
//! tori, and checks enclosure and cutter-hit frequencies against their
//! analytic bounds.

pub mod clumping;
pub mod error;
pub mod events;
pub mod io;
pub mod lattice;
pub mod matching;
pub mod meshalkin;
pub mod order;
pub mod pipeline;
pub mod sampler;
pub mod stats;

pub use error::{Error, Result};
pub use lattice::{BitField, BoxRegion, Configuration, Geometry, Site};
