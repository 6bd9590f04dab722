//! Exact-arithmetic engine for genus-one trace functions of vertex operator
//! algebras.
//!
//! The stack, bottom to top:
//!
//! * [`coeff`] — the coefficient field ℚ(λ), λ a formal symbol for 2πi.
//! * [`fps`] — multivariate Laurent/Puiseux series with per-variable
//!   truncation windows and fractional exponent offsets.
//! * [`elliptic`] — Eisenstein series, the twisted Weierstrass family, and
//!   reduction into the polynomial ring they generate.
//! * [`voa`] — concrete graded algebras (Heisenberg, lattice, Virasoro)
//!   with exact mode actions and intertwining operators.
//! * [`geomod`] — the change-of-coordinates operator between the sphere
//!   and cylinder pictures.
//! * [`zhu`] — the cylinder-picture associative quotient, its modules, and
//!   the induced maps on intertwiners.
//! * [`trace`] — graded traces of operator chains and the recursion
//!   identities they satisfy.
//! * [`modular`] — double-precision evaluation and modular-transformation
//!   checks.
//!
//! Truncation is tracked, never silent: every series knows the window in
//! which its coefficients are exact, and extracting outside that window is
//! an error rather than a zero.

pub mod coeff;
pub mod elliptic;
pub mod error;
pub mod fps;
pub mod geomod;
pub mod modular;
pub mod report;
pub mod trace;
pub mod voa;
pub mod zhu;

pub use coeff::ExactScalar;
pub use error::{Error, Result};
pub use fps::MultiSeries;
