//! Finite-stage audits of the encoding conditions.
//!
//! [`defects`] holds the individual defect functionals, [`engine`] runs a
//! configured batch of them and produces [`DefectReport`]s.

pub mod config;
pub mod defects;
pub mod engine;
pub mod expr;
pub mod report;
pub mod schedule;

pub use config::{AuditConfig, ConditionKind, ConditionSpec, SystemSpec};
pub use defects::{
    bullet_product, defect_associativity, defect_cstar_identity, defect_multiplicative, defect_stinespring,
    norm_limit_check, product_vs_oracle, psi_mult_defect, stinespring_lemma_check, BulletProduct, DefectValue,
    StinespringCheck,
};
pub use engine::run_audit;
pub use expr::ElementContext;
pub use report::{DefectReport, Mode};
pub use schedule::StageSchedule;
