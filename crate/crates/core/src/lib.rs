//! Numerical toolkit for nonuniform exponential dichotomies of nonautonomous
//! linear ODE systems on the half line.
//!
//! The crate computes evolution operators of `x' = A(t) x` on a time grid,
//! fits nonuniform bounded-growth and exponential-dichotomy certificates as
//! log-domain linear programs, computes the dichotomy spectrum by shifted-system
//! bisection, builds adapted (Lyapunov) norm families, assembles the
//! block-triangular composition objects (coupling blocks, linking operator,
//! composed projectors) with their predicted constants, and checks global
//! nonuniform asymptotic stability conditions on nonlinear vector fields.
//!
//! Everything operates at desk scale: small dimensions (n <= 6), moderate
//! horizons, dense linear algebra. Certificates are grid-relative; refinement
//! studies quantify the drift.

pub mod cli;
pub mod dichotomy;
pub mod envelope;
pub mod evolution;
pub mod myc;
pub mod normfam;
pub mod quad;
pub mod report;
pub mod spectrum;
pub mod sysdef;
pub mod triangular;

pub use dichotomy::{DichotomyCertificate, GrowthCertificate, ProjectorFamily};
pub use evolution::{EvolutionGrid, TimeGrid};
pub use spectrum::SpectrumResult;
pub use sysdef::{Expr, SystemDef};
