//! Shipped example systems and audit configurations.
//!
//! Systems:
//!
//! * `af-toy`: `C -> C⊕C -> M_2⊕C -> M_3 -> M_6 -> M_12` with unital
//!   block-diagonal *-homomorphisms, stages 0..=5.
//! * `z5-full`: `Z/5` with every Følner set equal to the whole group,
//!   stages 0..=5.
//! * `z-folner`: `Z` with the boxes `[-n, n]`, stage `n` for `n = 0..=128`.
//!
//! Audit configurations: `af-toy`, `z5-full`, `z-folner-encoding` (alias
//! `z-folner`) and `z-folner-nf-check`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::audit::AuditConfig;
use crate::cpmaps::CpMap;
use crate::error::{Error, Result};
use crate::fdcstar::{AlgElement, FiniteDimCstar};
use crate::folner_system::{ApproximationSystem, CpcSystem};
use crate::groups::{FolnerSequence, Group};
use crate::C64;

pub const SYSTEM_PRESETS: &[&str] = &["af-toy", "z5-full", "z-folner"];

pub const AUDIT_PRESETS: &[&str] = &["af-toy", "z5-full", "z-folner-encoding", "z-folner-nf-check"];

/// Highest stage of each system preset.
pub fn default_max_stage(name: &str) -> Option<usize> {
    match name {
        "af-toy" | "z5-full" => Some(5),
        "z-folner" => Some(128),
        _ => None,
    }
}

/// Builds a system preset, optionally keeping only stages `0..=max_stage`.
pub fn system(name: &str, max_stage: Option<usize>) -> Result<CpcSystem> {
    let top = default_max_stage(name).ok_or_else(|| {
        Error::Config(format!("unknown system preset '{name}' (known: {})", SYSTEM_PRESETS.join(", ")))
    })?;
    let top = max_stage.map_or(top, |m| m.min(top));
    match name {
        "af-toy" => af_toy(top),
        "z5-full" => {
            let seq = FolnerSequence::full(Group::cyclic(5)?, top + 1)?;
            Arc::new(ApproximationSystem::from_sequence(&seq)?).build_cpc()
        }
        _ => {
            let seq = FolnerSequence::boxes(1, top as u32)?;
            Arc::new(ApproximationSystem::from_sequence(&seq)?).build_cpc()
        }
    }
}

fn block_diag(parts: &[&DMatrix<C64>]) -> DMatrix<C64> {
    let n: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut at = 0;
    for p in parts {
        out.view_mut((at, at), (p.nrows(), p.nrows())).copy_from(*p);
        at += p.nrows();
    }
    out
}

fn af_toy(top: usize) -> Result<CpcSystem> {
    let dims: [&[usize]; 6] = [&[1], &[1, 1], &[2, 1], &[3], &[6], &[12]];
    let algebras = dims[..=top].iter().map(|d| FiniteDimCstar::new(d.to_vec())).collect::<Result<Vec<_>>>()?;
    let mut steps = Vec::new();
    for n in 0..top {
        let (a, b) = (&algebras[n], &algebras[n + 1]);
        let target = b.clone();
        let step = CpMap::from_fn(a, b, move |x| {
            let blocks = match n {
                // x ↦ (x, x)
                0 => vec![x.block(0).clone(), x.block(0).clone()],
                // (a, b) ↦ (diag(a, b), a)
                1 => vec![block_diag(&[x.block(0), x.block(1)]), x.block(0).clone()],
                // (X, c) ↦ diag(X, c)
                2 => vec![block_diag(&[x.block(0), x.block(1)])],
                // X ↦ diag(X, X)
                _ => vec![block_diag(&[x.block(0), x.block(0)])],
            };
            AlgElement::from_blocks(&target, blocks)
        })?;
        steps.push(step);
    }
    Ok(CpcSystem::from_maps(algebras, steps)?.with_name("af-toy: C -> C+C -> M2+C -> M3 -> M6 -> M12"))
}

/// Loads an audit preset.
pub fn audit_config(name: &str) -> Result<AuditConfig> {
    let text = match name {
        "af-toy" => include_str!("../presets/af-toy.json"),
        "z5-full" => include_str!("../presets/z5-full.json"),
        "z-folner" | "z-folner-encoding" => include_str!("../presets/z-folner-encoding.json"),
        "z-folner-nf-check" => include_str!("../presets/z-folner-nf-check.json"),
        other => {
            return Err(Error::Config(format!("unknown audit preset '{other}' (known: {})", AUDIT_PRESETS.join(", "))))
        }
    };
    AuditConfig::from_json_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn af_toy_is_unital_and_multiplicative() {
        let sys = system("af-toy", None).unwrap();
        assert_eq!(sys.num_stages(), 6);
        for n in 0..5 {
            let step = sys.step(n).unwrap();
            let one = AlgElement::unit(step.domain());
            assert_eq!(step.apply(&one).unwrap(), AlgElement::unit(step.codomain()));
        }
        let x = crate::audit::expr::random_element(sys.algebra(2).unwrap(), 1);
        let y = crate::audit::expr::random_element(sys.algebra(2).unwrap(), 2);
        let rho = sys.rho(5, 2).unwrap();
        let lhs = rho.apply(&x.checked_mul(&y).unwrap()).unwrap();
        let rhs = rho.apply(&x).unwrap().checked_mul(&rho.apply(&y).unwrap()).unwrap();
        assert!(lhs.checked_sub(&rhs).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn presets_load() {
        for name in AUDIT_PRESETS {
            audit_config(name).unwrap();
        }
        assert!(matches!(system("nope", None), Err(Error::Config(_))));
        assert_eq!(system("z-folner", Some(8)).unwrap().num_stages(), 9);
        assert_eq!(system("z5-full", None).unwrap().num_stages(), 6);
    }
}
