//! Defect reports, verdicts and their JSON / CSV forms.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::defects::DefectValue;
use crate::error::Result;

/// Per-step relative slack allowed by the decay mode.
pub const DECAY_SLACK: f64 = 0.05;

/// Absolute slack added to every decay comparison so exact zeros compare
/// equal.
pub const DECAY_FLOOR: f64 = 1e-12;

/// How a defect curve is judged against its tolerance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every value is below the tolerance.
    #[default]
    Below,
    /// Non-increasing up to [`DECAY_SLACK`] per step, and the last value is
    /// below the tolerance.
    Decay,
}

/// Result of one audit condition. Field order is part of the output format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub condition: String,
    pub system: String,
    pub k: usize,
    pub r: usize,
    pub elements: Vec<String>,
    pub schedule: Vec<(usize, usize, usize)>,
    pub defects: Vec<DefectValue>,
    /// True when the values are signed differences rather than norms.
    pub signed: bool,
    pub tolerance: f64,
    pub verdict: String,
    pub seed: u64,
    pub wall_ms: u64,
}

impl DefectReport {
    pub fn passed(&self) -> bool {
        self.verdict == "pass"
    }
}

/// Verdict string for a defect curve. `non_multiplicative` switches the
/// failure wording to the one used for the multiplicativity condition.
pub fn judge(values: &[f64], tolerance: f64, mode: Mode, non_multiplicative: bool) -> String {
    let fail = |detail: String| {
        if non_multiplicative {
            let floor = values.iter().copied().fold(f64::INFINITY, f64::min);
            format!("not asymptotically multiplicative at tested scales (floor {floor:.6e})")
        } else {
            format!("fail: {detail}")
        }
    };
    let Some(&last) = values.last() else {
        return "fail: no values".into();
    };
    match mode {
        Mode::Below => match values.iter().position(|v| v.partial_cmp(&tolerance) != Some(Ordering::Less)) {
            Some(i) => fail(format!("value {:.6e} at tuple {i} is not below {tolerance:e}", values[i])),
            None => "pass".into(),
        },
        Mode::Decay => {
            for (i, w) in values.windows(2).enumerate() {
                let bound = w[0] + DECAY_SLACK * w[0].abs() + DECAY_FLOOR;
                if !matches!(w[1].partial_cmp(&bound), Some(Ordering::Less | Ordering::Equal)) {
                    return fail(format!("value rises from {:.6e} to {:.6e} after tuple {i}", w[0], w[1]));
                }
            }
            if last < tolerance {
                "pass".into()
            } else {
                fail(format!("final value {last:.6e} is not below {tolerance:e}"))
            }
        }
    }
}

pub fn write_json<W: Write>(reports: &[DefectReport], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, reports)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct CsvRow<'a> {
    condition: &'a str,
    system: &'a str,
    k: usize,
    r: usize,
    elements: String,
    j: usize,
    n: usize,
    m: usize,
    value: f64,
    signed: bool,
    tolerance: f64,
    verdict: &'a str,
    seed: u64,
    wall_ms: u64,
}

/// One row per evaluated tuple. A report without values (an error) gets a
/// single row with zero stages and a NaN value so its verdict still shows.
pub fn write_csv<W: Write>(reports: &[DefectReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rep in reports {
        let elements = rep.elements.join("; ");
        let blank = [DefectValue { j: 0, n: 0, m: 0, value: f64::NAN }];
        let rows = if rep.defects.is_empty() { &blank[..] } else { &rep.defects[..] };
        for d in rows {
            w.serialize(CsvRow {
                condition: &rep.condition,
                system: &rep.system,
                k: rep.k,
                r: rep.r,
                elements: elements.clone(),
                j: d.j,
                n: d.n,
                m: d.m,
                value: d.value,
                signed: rep.signed,
                tolerance: rep.tolerance,
                verdict: &rep.verdict,
                seed: rep.seed,
                wall_ms: rep.wall_ms,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}
