//! Completely positive contractive (c.p.c.) inductive systems of
//! finite-dimensional C*-algebras.
//!
//! The crate builds c.p.c. systems `A_0 -> A_1 -> A_2 -> ...` (most notably
//! the Følner-set approximations of reduced group C*-algebras of `Z^d` and of
//! finite groups) and evaluates, at finite stages, the inequalities that make
//! such a system encode a C*-algebra: the two product-stability conditions,
//! the C*-norm condition on matrix amplifications, asymptotic
//! multiplicativity, and the limit ("bullet") product.
//!
//! Module map:
//!
//! * [`groups`]: `Z^d` and finite groups, Følner sets, Følner defects and
//!   summable-subsequence extraction.
//! * [`fdcstar`]: direct sums of matrix algebras and their elements.
//! * [`cpmaps`]: linear maps between them with Choi-matrix verification.
//! * [`groupalg`]: the group algebra with convolution and a certified
//!   reduced-norm oracle.
//! * [`folner_system`]: the approximation maps `psi_n`, `phi_n` and the
//!   generic [`CpcSystem`] container.
//! * [`audit`]: defect evaluation, reports and the config-driven engine.
//! * [`presets`]: the shipped example systems and audit configurations.

pub mod audit;
pub mod cpmaps;
pub mod error;
pub mod fdcstar;
pub mod folner_system;
pub mod groupalg;
pub mod groups;
pub mod presets;

pub use cpmaps::{CpMap, CpReport, LinearAction};
pub use error::{Error, Result};
pub use fdcstar::{AlgElement, FiniteDimCstar};
pub use folner_system::{ApproximationSystem, CpcSystem};
pub use groupalg::{GroupAlgebraElement, NormEnclosure};
pub use groups::{FolnerSequence, FolnerSet, Group, GroupElement, SummabilityCertificate};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Default positivity / complete-positivity tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Default grid factor for the torus reduced-norm oracle.
pub const DEFAULT_GRID_FACTOR: u32 = 64;
