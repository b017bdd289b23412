//! Icosahedrally invariant quadrature on the unit sphere.
//!
//! * [`harmonics`]: Legendre functions, spherical harmonics, [`Direction`].
//! * [`icosahedral`]: the 60-element rotation group and its orbits.
//! * [`rules`]: quadrature rules, product baselines, rule files.
//! * [`construct`]: moment-matching construction of invariant rules.
//! * [`bench`]: Henyey–Greenstein error sweeps and weight statistics.
//! * [`rte`]: a small discrete-ordinates transport solver.

pub mod bench;
pub mod construct;
pub mod error;
pub mod exec;
pub mod harmonics;
pub mod icosahedral;
pub mod rte;
pub mod rules;

pub use error::{DomainError, FormatError, RteError, SolveError};
pub use exec::Exec;
pub use harmonics::{Direction, HarmonicIndex};
pub use rules::QuadratureRule;
