//! Runs the conditions of an [`AuditConfig`] and collects reports.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::config::{Amplification, AuditConfig, ConditionKind, ConditionSpec};
use super::defects::{self, DefectValue};
use super::expr::ElementContext;
use super::report::{judge, DefectReport};
use crate::error::{Error, Result};
use crate::fdcstar::AlgElement;
use crate::folner_system::CpcSystem;
use crate::C64;

/// Environment variable that sets the worker thread count.
pub const THREADS_ENV: &str = "CPCLIM_THREADS";

/// Builds the configured system and evaluates every condition.
///
/// Failing to build the system is an error; failures inside a condition are
/// recorded in that condition's verdict. Reports come back in config order.
pub fn run_audit(config: &AuditConfig) -> Result<Vec<DefectReport>> {
    if config.conditions.is_empty() {
        return Ok(Vec::new());
    }
    let system = config.system.build()?;
    Ok(run_conditions(&system, config))
}

/// Evaluates the conditions of `config` on an already built system.
pub fn run_conditions(system: &CpcSystem, config: &AuditConfig) -> Vec<DefectReport> {
    config.conditions.par_iter().map(|c| evaluate(system, c, config.seed, config.grid_factor)).collect()
}

fn pattern(kind: Amplification, r: usize) -> DMatrix<C64> {
    let one = C64::new(1.0, 0.0);
    match kind {
        Amplification::Diag => DMatrix::from_fn(r, r, |a, b| if a == b { one } else { C64::new(0.0, 0.0) }),
        Amplification::Swap => DMatrix::from_fn(r, r, |a, b| if a + b + 1 == r { one } else { C64::new(0.0, 0.0) }),
    }
}

/// Evaluates one condition into a report.
pub fn evaluate(system: &CpcSystem, cond: &ConditionSpec, seed: u64, grid_factor: u32) -> DefectReport {
    let start = Instant::now();
    let schedule: Vec<(usize, usize, usize)> = match &cond.schedule {
        super::config::ScheduleSpec::Doubling(js) => js.iter().map(|&j| (j, 2 * j, 4 * j)).collect(),
        super::config::ScheduleSpec::Explicit(t) => t.clone(),
    };
    let outcome = values(system, cond, seed, grid_factor);
    let (defects, verdict) = match outcome {
        Ok(defects) => {
            let vals: Vec<f64> = defects.iter().map(|d| d.value).collect();
            let v = judge(&vals, cond.tolerance, cond.mode, cond.condition == ConditionKind::Multiplicative);
            (defects, v)
        }
        Err(e) => (Vec::new(), format!("error: {e}")),
    };
    DefectReport {
        condition: cond.condition.name().to_string(),
        system: system.describe().to_string(),
        k: cond.k,
        r: cond.r,
        elements: cond.elements.clone(),
        schedule,
        defects,
        signed: cond.condition.signed(),
        tolerance: cond.tolerance,
        verdict,
        seed,
        wall_ms: start.elapsed().as_millis() as u64,
    }
}

fn values(system: &CpcSystem, cond: &ConditionSpec, seed: u64, grid_factor: u32) -> Result<Vec<DefectValue>> {
    let schedule = cond.schedule.build()?;
    schedule.validate(system.num_stages())?;
    let kind = cond.condition;
    if cond.r == 0 {
        return Err(Error::Parameter("amplification degree r must be at least 1".into()));
    }
    if cond.r > 1 && !matches!(kind, ConditionKind::CstarIdentity | ConditionKind::NormLimit) {
        return Err(Error::Parameter(format!("{} does not take an amplification degree", kind.name())));
    }
    let arity = kind.arity();
    let exprs: Vec<&String> = match cond.elements.len() {
        1 => vec![&cond.elements[0]; arity],
        n if n == arity => cond.elements.iter().collect(),
        n => return Err(Error::Parameter(format!("{} takes {arity} elements, got {n}", kind.name()))),
    };
    let ctx = ElementContext { system, k: cond.k, seed };
    let els: Vec<AlgElement> = exprs.iter().map(|e| ctx.eval_str(e)).collect::<Result<_>>()?;
    let amplified = if cond.r > 1 { Some(els[0].amplify_pattern(&pattern(cond.amplification, cond.r))?) } else { None };
    let k = cond.k;
    let approx = system.approximation();

    schedule
        .triples()
        .par_iter()
        .map(|&(j, n, m)| {
            let value = match kind {
                ConditionKind::Stinespring => defects::defect_stinespring(system, k, &els[0], &els[1], j, n, m)?,
                ConditionKind::Associativity => {
                    defects::defect_associativity(system, k, &els[0], &els[1], &els[2], j, n, m)?
                }
                ConditionKind::CstarIdentity => {
                    defects::defect_cstar_identity(system, k, amplified.as_ref().unwrap_or(&els[0]), cond.r, n, m)?
                }
                ConditionKind::NormLimit => {
                    defects::norm_limit_check(system, k, amplified.as_ref().unwrap_or(&els[0]), cond.r, n, m)?
                }
                ConditionKind::Multiplicative => defects::defect_multiplicative(system, k, &els[0], &els[1], n, m)?,
                ConditionKind::ProductOracle => {
                    let sys = approx.ok_or_else(|| Error::Parameter("product_oracle needs a Følner system".into()))?;
                    defects::product_vs_oracle(sys, k, &els[0], &els[1], n, m, grid_factor)?
                }
            };
            Ok(DefectValue { j, n, m, value })
        })
        .collect()
}

/// Installs a global thread pool sized by [`THREADS_ENV`], if set. Safe to
/// call more than once.
pub fn configure_threads_from_env() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::config::{PresetRef, ScheduleSpec, SystemSpec};
    use crate::audit::report::Mode;

    fn af_config(conditions: Vec<ConditionSpec>) -> AuditConfig {
        AuditConfig {
            system: SystemSpec::Preset(PresetRef { preset: "af-toy".into(), max_stage: None }),
            conditions,
            seed: 3,
            grid_factor: 64,
            output: None,
        }
    }

    fn cond(kind: ConditionKind, k: usize, elements: &[&str], triples: Vec<(usize, usize, usize)>) -> ConditionSpec {
        ConditionSpec {
            condition: kind,
            k,
            r: 1,
            elements: elements.iter().map(|s| s.to_string()).collect(),
            schedule: ScheduleSpec::Explicit(triples),
            tolerance: 1e-9,
            mode: Mode::Below,
            amplification: Amplification::Diag,
        }
    }

    #[test]
    fn empty_config_gives_empty_report() {
        assert!(run_audit(&af_config(vec![])).unwrap().is_empty());
    }

    #[test]
    fn errors_are_captured_per_entry() {
        let cfg = af_config(vec![
            cond(ConditionKind::Stinespring, 2, &["random(1)", "random(2)"], vec![(2, 3, 4)]),
            cond(ConditionKind::Stinespring, 2, &["nonsense("], vec![(2, 3, 4)]),
            cond(ConditionKind::Multiplicative, 2, &["unit"], vec![(2, 3, 99)]),
            cond(ConditionKind::ProductOracle, 2, &["unit"], vec![(2, 3, 4)]),
        ]);
        let reports = run_audit(&cfg).unwrap();
        assert_eq!(reports.len(), 4);
        assert!(reports[0].passed(), "{}", reports[0].verdict);
        for r in &reports[1..] {
            assert!(r.verdict.starts_with("error:"), "{}", r.verdict);
        }
    }

    #[test]
    fn deterministic_output() {
        let cfg = af_config(vec![
            cond(ConditionKind::Associativity, 2, &["random(1)", "random(2)", "random()"], vec![(2, 3, 4), (3, 4, 5)]),
            cond(ConditionKind::CstarIdentity, 2, &["random(5)"], vec![(2, 4, 5)]),
        ]);
        let strip = |mut v: Vec<DefectReport>| {
            for r in &mut v {
                r.wall_ms = 0;
            }
            serde_json::to_string(&v).unwrap()
        };
        assert_eq!(strip(run_audit(&cfg).unwrap()), strip(run_audit(&cfg).unwrap()));
    }

    #[test]
    fn amplification_patterns() {
        let p = pattern(Amplification::Swap, 2);
        assert_eq!(p[(0, 1)], C64::new(1.0, 0.0));
        assert_eq!(p[(0, 0)], C64::new(0.0, 0.0));
        let d = pattern(Amplification::Diag, 3);
        assert_eq!(d, DMatrix::identity(3, 3));
    }
}
