//! Audit configuration files.
//!
//! ```json
//! {
//!   "system": {"preset": "z-folner", "max_stage": 64},
//!   "conditions": [
//!     {"condition": "stinespring", "k": 1, "elements": ["psi(1, delta(1))"],
//!      "schedule": {"doubling": [2, 4, 8, 16]}, "tolerance": 0.5, "mode": "decay"}
//!   ],
//!   "seed": 0,
//!   "grid_factor": 64,
//!   "output": {"path": "report.json", "format": "json"}
//! }
//! ```
//!
//! A system is a preset reference, a Følner system
//! (`{"group": .., "folner": .., "subsequence": ..}`) or explicit action
//! matrices (`{"explicit": {"algebras": [[..]], "steps": [..]}}`). Unknown
//! keys are rejected everywhere.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::report::Mode;
use super::schedule::StageSchedule;
use crate::cpmaps::CpMap;
use crate::error::{Error, Result};
use crate::fdcstar::{FiniteDimCstar, MatrixJson};
use crate::folner_system::{ApproximationSystem, CpcSystem};
use crate::groups::{extract_summable, pow2_eps, FolnerSequence, FolnerSet, Group, DEFAULT_HORIZON};
use crate::{presets, DEFAULT_GRID_FACTOR};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub conditions: Vec<ConditionSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_grid_factor")]
    pub grid_factor: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

fn default_grid_factor() -> u32 {
    DEFAULT_GRID_FACTOR
}

fn one() -> usize {
    1
}

impl AuditConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        AuditConfig::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Preset(PresetRef),
    Folner(FolnerSystemSpec),
    Explicit(ExplicitSystemSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetRef {
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_stage: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FolnerSystemSpec {
    pub group: GroupSpec,
    pub folner: FolnerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsequence: Option<SubsequenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_stage: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupSpec {
    Lattice(usize),
    Cyclic(usize),
    Symmetric3,
    Finite { table: Vec<Vec<usize>> },
}

impl GroupSpec {
    pub fn build(&self) -> Result<Group> {
        match self {
            GroupSpec::Lattice(d) => Group::lattice(*d),
            GroupSpec::Cyclic(n) => Group::cyclic(*n),
            GroupSpec::Symmetric3 => Ok(Group::symmetric3()),
            GroupSpec::Finite { table } => Group::finite(table.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FolnerSpec {
    /// `[-n, n]^d` for `n = 0..=max_n`.
    Boxes { max_n: u32 },
    /// Explicit sets of group elements (integers, tuples or indices).
    Explicit(Vec<Vec<Value>>),
    /// The whole finite group, repeated.
    Full { copies: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SubsequenceSpec {
    Explicit {
        explicit: Vec<usize>,
    },
    Summable {
        eps: EpsSpec,
        #[serde(default = "default_horizon")]
        horizon: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        count: Option<usize>,
    },
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsSpec {
    Named(String),
    List(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitSystemSpec {
    pub explicit: ExplicitSystem,
}

/// Algebras as block-dimension lists and steps as action matrices in the
/// matrix-unit bases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitSystem {
    pub algebras: Vec<Vec<usize>>,
    pub steps: Vec<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl SystemSpec {
    /// Caps the number of stages at `max_stage + 1`.
    pub fn set_max_stage(&mut self, max_stage: usize) {
        match self {
            SystemSpec::Preset(p) => p.max_stage = Some(max_stage),
            SystemSpec::Folner(f) => f.max_stage = Some(max_stage),
            SystemSpec::Explicit(e) => {
                e.explicit.algebras.truncate(max_stage + 1);
                e.explicit.steps.truncate(max_stage);
            }
        }
    }

    /// Builds the system and verifies every step.
    pub fn build(&self) -> Result<CpcSystem> {
        match self {
            SystemSpec::Preset(p) => presets::system(&p.preset, p.max_stage),
            SystemSpec::Folner(f) => f.build(),
            SystemSpec::Explicit(e) => e.explicit.build(),
        }
    }
}

impl FolnerSystemSpec {
    pub fn approximation(&self) -> Result<ApproximationSystem> {
        let group = self.group.build()?;
        let cap = |len: usize| self.max_stage.map_or(len, |m| len.min(m + 1));
        let seq = match &self.folner {
            FolnerSpec::Boxes { max_n } => {
                let dim = match group {
                    Group::Lattice { dim } => dim,
                    Group::Finite(_) => return Err(Error::Config("box Følner sets need a lattice group".into())),
                };
                let top = match (&self.subsequence, self.max_stage) {
                    (None, Some(m)) => (*max_n).min(m as u32),
                    _ => *max_n,
                };
                FolnerSequence::boxes(dim, top)?
            }
            FolnerSpec::Explicit(sets) => {
                let sets = sets
                    .iter()
                    .map(|s| FolnerSet::new(s.iter().map(|v| group.parse_element(v)).collect::<Result<_>>()?))
                    .collect::<Result<Vec<_>>>()?;
                FolnerSequence::new(group, sets)?
            }
            FolnerSpec::Full { copies } => FolnerSequence::full(group, *copies)?,
        };
        match &self.subsequence {
            None => {
                let all: Vec<usize> = (0..cap(seq.len())).collect();
                ApproximationSystem::from_indices(&seq, &all)
            }
            Some(SubsequenceSpec::Explicit { explicit }) => {
                ApproximationSystem::from_indices(&seq, &explicit[..cap(explicit.len())])
            }
            Some(SubsequenceSpec::Summable { eps, horizon, count }) => {
                let eps = match eps {
                    EpsSpec::Named(name) if name == "pow2" => {
                        let count = count.ok_or_else(|| Error::Config("eps \"pow2\" needs a count".into()))?;
                        pow2_eps(count)
                    }
                    EpsSpec::Named(other) => return Err(Error::Config(format!("unknown eps rule '{other}'"))),
                    EpsSpec::List(v) => v.clone(),
                };
                let mut cert = extract_summable(&seq, &eps, *horizon)?;
                let keep = cap(cert.indices.len());
                cert.indices.truncate(keep);
                cert.eps.truncate(keep);
                cert.partial_sums.truncate(keep);
                ApproximationSystem::from_certificate(&seq, cert)
            }
        }
    }

    pub fn build(&self) -> Result<CpcSystem> {
        Arc::new(self.approximation()?).build_cpc()
    }
}

impl ExplicitSystem {
    pub fn build(&self) -> Result<CpcSystem> {
        let algebras =
            self.algebras.iter().map(|dims| FiniteDimCstar::new(dims.clone())).collect::<Result<Vec<_>>>()?;
        if self.steps.len() + 1 != algebras.len() {
            return Err(Error::Config(format!(
                "{} algebras need {} steps",
                algebras.len(),
                algebras.len().saturating_sub(1)
            )));
        }
        let steps = self
            .steps
            .iter()
            .enumerate()
            .map(|(n, m)| CpMap::from_action_matrix(&algebras[n], &algebras[n + 1], m.to_matrix()?))
            .collect::<Result<Vec<_>>>()?;
        let sys = CpcSystem::from_maps(algebras, steps)?;
        Ok(match &self.name {
            Some(name) => sys.with_name(name.clone()),
            None => sys,
        })
    }
}

/// The audited conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Stinespring,
    Associativity,
    CstarIdentity,
    NormLimit,
    Multiplicative,
    ProductOracle,
}

impl ConditionKind {
    pub fn name(self) -> &'static str {
        match self {
            ConditionKind::Stinespring => "stinespring",
            ConditionKind::Associativity => "associativity",
            ConditionKind::CstarIdentity => "cstar_identity",
            ConditionKind::NormLimit => "norm_limit",
            ConditionKind::Multiplicative => "multiplicative",
            ConditionKind::ProductOracle => "product_oracle",
        }
    }

    /// Number of elements the condition takes.
    pub fn arity(self) -> usize {
        match self {
            ConditionKind::Associativity => 3,
            ConditionKind::CstarIdentity | ConditionKind::NormLimit => 1,
            _ => 2,
        }
    }

    pub fn signed(self) -> bool {
        self == ConditionKind::CstarIdentity
    }
}

/// How an element of `A_k` is placed in `M_r(A_k)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Amplification {
    /// `diag(x, ..., x)`
    #[default]
    Diag,
    /// `x` on the anti-diagonal; for `r = 2` this is `x ⊗ e_12 + x ⊗ e_21`.
    Swap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSpec {
    pub condition: ConditionKind,
    pub k: usize,
    #[serde(default = "one")]
    pub r: usize,
    /// Element expressions; a single expression is reused for every slot.
    pub elements: Vec<String>,
    pub schedule: ScheduleSpec,
    pub tolerance: f64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub amplification: Amplification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleSpec {
    Doubling(Vec<usize>),
    Explicit(Vec<(usize, usize, usize)>),
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<StageSchedule> {
        match self {
            ScheduleSpec::Doubling(js) => StageSchedule::doubling(js),
            ScheduleSpec::Explicit(t) => StageSchedule::explicit(t.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "system": {"group": {"lattice": 1}, "folner": {"boxes": {"max_n": 20}},
                   "subsequence": {"eps": "pow2", "horizon": 64, "count": 3}},
        "conditions": [
            {"condition": "cstar_identity", "k": 0, "r": 2, "elements": ["psi(0, delta(1))"],
             "schedule": {"explicit": [[0, 1, 2]]}, "tolerance": 1e-3, "amplification": "swap"}
        ],
        "seed": 7,
        "output": {"format": "csv"}
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = AuditConfig::from_json_str(SAMPLE).unwrap();
        assert_eq!(cfg.grid_factor, DEFAULT_GRID_FACTOR);
        assert_eq!(cfg.conditions[0].mode, Mode::Below);
        let again = AuditConfig::from_json_str(&cfg.to_json_string()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.to_json_string(), again.to_json_string());
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = SAMPLE.replace("\"seed\": 7", "\"seed\": 7, \"colour\": 1");
        assert!(matches!(AuditConfig::from_json_str(&bad), Err(Error::Config(_))));
        let bad = SAMPLE.replace("\"r\": 2", "\"r\": 2, \"extra\": true");
        assert!(AuditConfig::from_json_str(&bad).is_err());
        let bad = r#"{"system": {"preset": "af-toy", "stages": 3}}"#;
        assert!(AuditConfig::from_json_str(bad).is_err());
        assert!(AuditConfig::from_json_str("{not json").is_err());
    }

    #[test]
    fn builds_summable_subsequence() {
        let cfg = AuditConfig::from_json_str(SAMPLE).unwrap();
        let SystemSpec::Folner(f) = &cfg.system else { panic!() };
        let approx = f.approximation().unwrap();
        assert_eq!(approx.source_indices(), &[0, 1, 12]);
        assert!(approx.certificate().is_some());
    }

    #[test]
    fn max_stage_caps_every_kind() {
        let mut spec = SystemSpec::Folner(FolnerSystemSpec {
            group: GroupSpec::Lattice(1),
            folner: FolnerSpec::Boxes { max_n: 50 },
            subsequence: None,
            max_stage: None,
        });
        spec.set_max_stage(4);
        assert_eq!(spec.build().unwrap().num_stages(), 5);
        let mut spec = SystemSpec::Preset(PresetRef { preset: "af-toy".into(), max_stage: None });
        spec.set_max_stage(2);
        assert_eq!(spec.build().unwrap().num_stages(), 3);
    }

    #[test]
    fn explicit_system_round_trip() {
        let json = r#"{"explicit": {"algebras": [[1], [1, 1]],
            "steps": [{"re": [[1.0], [1.0]], "im": [[0.0], [0.0]]}]}}"#;
        let spec: SystemSpec = serde_json::from_str(json).unwrap();
        let sys = spec.build().unwrap();
        assert_eq!(sys.num_stages(), 2);
        let tampered = json.replace("[[1.0], [1.0]]", "[[1.5], [1.0]]");
        let spec: SystemSpec = serde_json::from_str(&tampered).unwrap();
        assert!(matches!(spec.build(), Err(Error::RejectedStep { step: 0, .. })));
    }
}
