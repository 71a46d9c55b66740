//! Stage schedules: which `(j, n, m)` tuples an audit evaluates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A list of stage triples `j < n < m`. Conditions that only need two stages
/// read `(n, m)` and ignore `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSchedule {
    triples: Vec<(usize, usize, usize)>,
}

impl StageSchedule {
    /// `(j, 2j, 4j)` for every listed `j`.
    pub fn doubling(js: &[usize]) -> Result<Self> {
        let triples = js
            .iter()
            .map(|&j| {
                let n = j.checked_mul(2).ok_or_else(|| Error::Parameter(format!("stage {j} too large")))?;
                let m = n.checked_mul(2).ok_or_else(|| Error::Parameter(format!("stage {j} too large")))?;
                Ok((j, n, m))
            })
            .collect::<Result<Vec<_>>>()?;
        StageSchedule::explicit(triples)
    }

    pub fn explicit(triples: Vec<(usize, usize, usize)>) -> Result<Self> {
        if triples.is_empty() {
            return Err(Error::Parameter("schedule is empty".into()));
        }
        for &(j, n, m) in &triples {
            if !(j < n && n < m) {
                return Err(Error::Parameter(format!("schedule tuple ({j}, {n}, {m}) is not strictly increasing")));
            }
        }
        Ok(StageSchedule { triples })
    }

    pub fn triples(&self) -> &[(usize, usize, usize)] {
        &self.triples
    }

    pub fn max_stage(&self) -> usize {
        self.triples.iter().map(|t| t.2).max().unwrap_or(0)
    }

    /// Fails if any stage is at or beyond `num_stages`.
    pub fn validate(&self, num_stages: usize) -> Result<()> {
        let top = self.max_stage();
        if top >= num_stages {
            return Err(Error::Parameter(format!(
                "schedule reaches stage {top} but the system has {num_stages} stages"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_rule() {
        let s = StageSchedule::doubling(&[2, 4, 8]).unwrap();
        assert_eq!(s.triples(), &[(2, 4, 8), (4, 8, 16), (8, 16, 32)]);
        assert_eq!(s.max_stage(), 32);
        assert!(s.validate(33).is_ok());
        assert!(s.validate(32).is_err());
    }

    #[test]
    fn rejects_bad_tuples() {
        assert!(StageSchedule::doubling(&[0]).is_err());
        assert!(StageSchedule::explicit(vec![(1, 1, 2)]).is_err());
        assert!(StageSchedule::explicit(vec![]).is_err());
    }
}
