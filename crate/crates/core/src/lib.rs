//! Loschmidt echo and dynamical phase transitions of the fully connected
//! transverse-field Ising model, from exact diagonalisation, classical and
//! complex-trajectory semiclassics, and a bipartite conditioned measurement,
//! together with the Airy/Pearcey and rainbow dark-band machinery they mirror.

pub mod bipartite;
pub mod catastrophe;
pub mod classical;
pub mod complexmech;
pub mod dicke;
pub mod error;
pub mod exec;
pub mod numerics;
pub mod scan;
pub mod wkb;

pub use error::{Error, Result};
pub use exec::Exec;
