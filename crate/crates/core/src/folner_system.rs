//! Følner approximation systems and generic c.p.c. systems.
//!
//! For a Følner set `F` the stage algebra is `M_F`, with matrix units indexed
//! by the elements of `F` in set order. The two approximation maps are
//!
//! * `psi_n : C[G] -> M_{F_n}`, `(psi_n(a))_{g,h} = a(g h^{-1})`, the
//!   compression of the left-regular representation to `ℓ²(F_n)`;
//! * `phi_n : M_{F_n} -> C[G]`, `phi_n(e_{g,h}) = (1/|F_n|) λ_{g h^{-1}}`.
//!
//! Both only depend on the "difference cells" `g h^{-1}` of a stage, so each
//! stage caches a [`DiffTable`] grouping matrix positions by difference. The
//! connecting maps `rho_{m,n} = psi_m ∘ (phi ∘ psi)_{m-1} ∘ ... ∘ phi_n`
//! collapse to one weight per difference because `phi_j(psi_j(λ_s))` is the
//! scalar `|F_j ∩ s F_j| / |F_j|` times `λ_s`.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::cpmaps::{CpMap, LinearAction, UnitEntry};
use crate::error::{Error, Result};
use crate::fdcstar::{AlgElement, FiniteDimCstar};
use crate::groupalg::GroupAlgebraElement;
use crate::groups::{summability_lhs, FolnerSequence, FolnerSet, Group, GroupElement, SummabilityCertificate};
use crate::C64;

/// Tolerance at which connecting maps must be completely positive and
/// contractive.
pub const STEP_TOL: f64 = 1e-9;

/// Matrix positions of a stage grouped by the difference `g_i g_j^{-1}`.
#[derive(Debug)]
pub struct DiffTable {
    shifts: Vec<GroupElement>,
    lookup: HashMap<GroupElement, u32>,
    /// shift id of position `i·N + j`
    cells: Vec<u32>,
    /// CSR offsets into `positions`, one range per shift
    offsets: Vec<u32>,
    positions: Vec<u32>,
}

impl DiffTable {
    fn new(group: &Group, set: &FolnerSet) -> Self {
        let els = set.elements();
        let n = els.len();
        let mut shifts = Vec::new();
        let mut lookup = HashMap::new();
        let mut cells = Vec::with_capacity(n * n);
        for g in els {
            for h in els {
                let s = group.quotient_unchecked(g, h);
                let id = *lookup.entry(s.clone()).or_insert_with(|| {
                    shifts.push(s);
                    (shifts.len() - 1) as u32
                });
                cells.push(id);
            }
        }
        let mut offsets = vec![0u32; shifts.len() + 1];
        for &c in &cells {
            offsets[c as usize + 1] += 1;
        }
        for k in 0..shifts.len() {
            offsets[k + 1] += offsets[k];
        }
        let mut fill = offsets.clone();
        let mut positions = vec![0u32; cells.len()];
        for (pos, &c) in cells.iter().enumerate() {
            positions[fill[c as usize] as usize] = pos as u32;
            fill[c as usize] += 1;
        }
        DiffTable { shifts, lookup, cells, offsets, positions }
    }

    pub fn shifts(&self) -> &[GroupElement] {
        &self.shifts
    }

    pub fn shift_id(&self, s: &GroupElement) -> Option<usize> {
        self.lookup.get(s).map(|&i| i as usize)
    }

    /// `|F ∩ sF|` for the shift with this id.
    pub fn count(&self, id: usize) -> usize {
        (self.offsets[id + 1] - self.offsets[id]) as usize
    }

    /// Flat positions `i·N + j` with difference `shifts[id]`.
    pub fn positions(&self, id: usize) -> &[u32] {
        &self.positions[self.offsets[id] as usize..self.offsets[id + 1] as usize]
    }

    pub fn cell(&self, flat: usize) -> usize {
        self.cells[flat] as usize
    }
}

#[derive(Debug)]
struct Stage {
    set: FolnerSet,
    algebra: FiniteDimCstar,
    table: OnceLock<DiffTable>,
}

/// The approximation system `(psi_n, phi_n)` attached to a Følner sequence.
///
/// Stages are labelled `0, 1, 2, ...` in the order they were selected from
/// the underlying sequence; [`ApproximationSystem::source_indices`] maps
/// them back.
#[derive(Debug)]
pub struct ApproximationSystem {
    group: Group,
    stages: Vec<Arc<Stage>>,
    source_indices: Vec<usize>,
    certificate: Option<SummabilityCertificate>,
    rho_memo: Vec<OnceLock<CpMap>>,
}

/// Per-pair result of [`ApproximationSystem::check_summable`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairCheck {
    pub n: usize,
    pub m: usize,
    /// `|F_n| · max_{g,h} (1 - |F_m ∩ gh^{-1}F_m| / |F_m|)`
    pub bound: f64,
    /// Optional basis-sweep bound from the reduced-norm oracle.
    pub direct: Option<f64>,
    pub eps: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummabilityReport {
    pub pairs: Vec<PairCheck>,
    pub pass: bool,
}

/// Result of [`ApproximationSystem::a_limit`].
#[derive(Clone, Debug, PartialEq)]
pub struct ALimit {
    pub value: GroupAlgebraElement,
    /// `upper(‖phi_{n+1} rho_{n+1,k} x - phi_n rho_{n,k} x‖)` for `k ≤ n < n_max`.
    pub increments: Vec<f64>,
}

impl ApproximationSystem {
    /// Uses every set of `seq` as a stage.
    pub fn from_sequence(seq: &FolnerSequence) -> Result<Self> {
        let all: Vec<usize> = (0..seq.len()).collect();
        ApproximationSystem::from_indices(seq, &all)
    }

    /// Uses the sets at `indices` (strictly increasing) as stages.
    pub fn from_indices(seq: &FolnerSequence, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Parameter("an approximation system needs at least one stage".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) || *indices.last().unwrap() >= seq.len() {
            return Err(Error::Parameter("stage indices must be increasing and within the sequence".into()));
        }
        let stages = indices
            .iter()
            .map(|&i| {
                let set = seq.sets()[i].clone();
                Ok(Arc::new(Stage { algebra: FiniteDimCstar::matrix(set.len())?, set, table: OnceLock::new() }))
            })
            .collect::<Result<Vec<_>>>()?;
        let s = stages.len();
        Ok(ApproximationSystem {
            group: seq.group().clone(),
            stages,
            source_indices: indices.to_vec(),
            certificate: None,
            rho_memo: (0..s * s).map(|_| OnceLock::new()).collect(),
        })
    }

    /// Uses the stages chosen by a summability certificate.
    pub fn from_certificate(seq: &FolnerSequence, cert: SummabilityCertificate) -> Result<Self> {
        let mut sys = ApproximationSystem::from_indices(seq, &cert.indices)?;
        sys.certificate = Some(cert);
        Ok(sys)
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn source_indices(&self) -> &[usize] {
        &self.source_indices
    }

    pub fn certificate(&self) -> Option<&SummabilityCertificate> {
        self.certificate.as_ref()
    }

    pub fn stage_set(&self, n: usize) -> Result<&FolnerSet> {
        Ok(&self.stage(n)?.set)
    }

    pub fn algebra(&self, n: usize) -> Result<&FiniteDimCstar> {
        Ok(&self.stage(n)?.algebra)
    }

    pub fn algebras(&self) -> Vec<FiniteDimCstar> {
        self.stages.iter().map(|s| s.algebra.clone()).collect()
    }

    fn stage(&self, n: usize) -> Result<&Arc<Stage>> {
        self.stages
            .get(n)
            .ok_or_else(|| Error::Parameter(format!("stage {n} out of range (system has {})", self.stages.len())))
    }

    pub fn diff_table(&self, n: usize) -> Result<&DiffTable> {
        let st = self.stage(n)?;
        Ok(st.table.get_or_init(|| DiffTable::new(&self.group, &st.set)))
    }

    fn check_group(&self, a: &GroupAlgebraElement) -> Result<()> {
        if a.group() != &self.group {
            return Err(Error::Shape(format!(
                "element of C[{}] passed to a system over {}",
                a.group().describe(),
                self.group.describe()
            )));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        let sizes: Vec<usize> = self.stages.iter().map(|s| s.set.len()).collect();
        let (first, last) = (sizes[0], *sizes.last().unwrap());
        format!("følner system over {} with {} stages (|F| from {first} to {last})", self.group.describe(), sizes.len())
    }

    /// `psi_n(a)`, entrywise `a(g h^{-1})`.
    pub fn psi(&self, n: usize, a: &GroupAlgebraElement) -> Result<AlgElement> {
        self.check_group(a)?;
        let table = self.diff_table(n)?;
        let alg = &self.stage(n)?.algebra;
        let size = self.stage(n)?.set.len();
        let mut m = DMatrix::<C64>::zeros(size, size);
        for (s, c) in a.terms() {
            if let Some(id) = table.shift_id(s) {
                for &pos in table.positions(id) {
                    let pos = pos as usize;
                    m[(pos / size, pos % size)] = *c;
                }
            }
        }
        AlgElement::from_blocks(alg, vec![m])
    }

    /// The stage-`n` representative of the embedding of `a`; same as
    /// [`psi`](Self::psi).
    pub fn psi_embedding(&self, a: &GroupAlgebraElement, n: usize) -> Result<AlgElement> {
        self.psi(n, a)
    }

    /// `phi_n(x)`.
    pub fn phi(&self, n: usize, x: &AlgElement) -> Result<GroupAlgebraElement> {
        let st = self.stage(n)?;
        if x.algebra() != &st.algebra {
            return Err(Error::Shape(format!("element of {} is not in stage {n}", x.algebra().describe())));
        }
        let table = self.diff_table(n)?;
        let size = st.set.len();
        let block = x.block(0);
        let mut coeffs = BTreeMap::new();
        for (id, s) in table.shifts().iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for &pos in table.positions(id) {
                let pos = pos as usize;
                acc += block[(pos / size, pos % size)];
            }
            coeffs.insert(s.clone(), acc / size as f64);
        }
        Ok(GroupAlgebraElement::pruned(self.group.clone(), coeffs))
    }

    /// `|F_m ∩ s F_m| / |F_m|`.
    pub fn phi_psi_scalar(&self, m: usize, s: &GroupElement) -> Result<f64> {
        self.group.check(s)?;
        let table = self.diff_table(m)?;
        let size = self.stage(m)?.set.len();
        Ok(table.shift_id(s).map_or(0.0, |id| table.count(id) as f64 / size as f64))
    }

    fn transition(&self, m: usize, n: usize) -> Result<FolnerTransition> {
        let from = self.diff_table(n)?;
        let to = self.diff_table(m)?;
        let intermediates: Vec<(&DiffTable, f64)> =
            (n + 1..m).map(|j| Ok((self.diff_table(j)?, self.stage(j)?.set.len() as f64))).collect::<Result<_>>()?;
        let targets = from
            .shifts()
            .iter()
            .map(|s| {
                let target = to.shift_id(s)?;
                let mut factor = 1.0;
                for (t, size) in &intermediates {
                    factor *= t.shift_id(s).map_or(0.0, |id| t.count(id) as f64 / size);
                }
                (factor != 0.0).then_some((target as u32, factor))
            })
            .collect();
        Ok(FolnerTransition { from: Arc::clone(self.stage(n)?), to: Arc::clone(self.stage(m)?), targets })
    }

    /// `rho_{n+1,n} = psi_{n+1} ∘ phi_n`.
    pub fn rho_step(&self, n: usize) -> Result<CpMap> {
        self.rho(n + 1, n)
    }

    /// `rho_{m,n}`; identity when `m = n`.
    pub fn rho(&self, m: usize, n: usize) -> Result<CpMap> {
        if n > m {
            return Err(Error::Parameter(format!("rho({m}, {n}) needs n ≤ m")));
        }
        self.stage(m)?;
        if m == n {
            return Ok(CpMap::identity(&self.stages[n].algebra));
        }
        let slot = &self.rho_memo[m * self.stages.len() + n];
        if let Some(map) = slot.get() {
            return Ok(map.clone());
        }
        let t = self.transition(m, n)?;
        let map = CpMap::from_action(&self.stages[n].algebra, &self.stages[m].algebra, Arc::new(t));
        Ok(slot.get_or_init(|| map).clone())
    }

    /// `rho_{n+1,n}` tabulated densely from the matrix-unit formula
    /// `ρ(e_{g,h}) = (1/|F_n|) Σ_{r ∈ F' ∩ gh^{-1}F'} e_{r, hg^{-1}r}`.
    /// Quadratic in both stage dimensions; meant for cross-checks.
    pub fn rho_step_formula(&self, n: usize) -> Result<CpMap> {
        let (src, dst) = (self.stage(n)?, self.stage(n + 1)?);
        let (fs, ft) = (src.set.elements(), dst.set.elements());
        let (a, b) = (fs.len(), ft.len());
        let mut action = DMatrix::<C64>::zeros(b * b, a * a);
        for (i, g) in fs.iter().enumerate() {
            for (j, h) in fs.iter().enumerate() {
                let hg = self.group.quotient_unchecked(h, g);
                for (p, r) in ft.iter().enumerate() {
                    let target = self.group.mul_unchecked(&hg, r);
                    if let Some(q) = dst.set.position(&target) {
                        action[(p * b + q, i * a + j)] += C64::new(1.0 / a as f64, 0.0);
                    }
                }
            }
        }
        CpMap::from_action_matrix(&src.algebra, &dst.algebra, action)
    }

    /// Checks the summability inequality for every pair `n < m` of the given
    /// stages, `eps[k]` applying when `m` is the `k`-th listed stage.
    /// With `direct_grid_factor`, also reports the basis-sweep bound
    /// `Σ_{g,h} ‖(phi_n - phi_m psi_m phi_n)(e_{g,h})‖`.
    pub fn check_summable(
        &self,
        indices: &[usize],
        eps: &[f64],
        direct_grid_factor: Option<u32>,
    ) -> Result<SummabilityReport> {
        if eps.len() < indices.len() {
            return Err(Error::Parameter(format!("{} eps values for {} stages", eps.len(), indices.len())));
        }
        for &i in indices {
            self.stage(i)?;
        }
        let mut pairs = Vec::new();
        for (pos_m, &m) in indices.iter().enumerate() {
            for &n in &indices[..pos_m] {
                let bound = summability_lhs(&self.group, &self.stages[n].set, &self.stages[m].set)?;
                let direct = match direct_grid_factor {
                    Some(gf) => Some(self.direct_summability_bound(n, m, gf)?),
                    None => None,
                };
                let eps_m = eps[pos_m];
                let best = direct.map_or(bound, |d| d.min(bound));
                pairs.push(PairCheck { n, m, bound, direct, eps: eps_m, pass: best < eps_m });
            }
        }
        let pass = pairs.iter().all(|p| p.pass);
        Ok(SummabilityReport { pairs, pass })
    }

    fn direct_summability_bound(&self, n: usize, m: usize, grid_factor: u32) -> Result<f64> {
        let table = self.diff_table(n)?;
        let st = self.stage(n)?;
        let size = st.set.len();
        let mut total = 0.0;
        for id in 0..table.shifts().len() {
            let pos = table.positions(id)[0] as usize;
            let e = AlgElement::matrix_unit(&st.algebra, 0, pos / size, pos % size)?;
            let p = self.phi(n, &e)?;
            let back = self.phi(m, &self.psi(m, &p)?)?;
            let d = GroupAlgebraElement::distance(&p, &back, grid_factor)?;
            total += table.count(id) as f64 * d.upper;
        }
        Ok(total)
    }

    /// `phi_{n_max}(rho_{n_max,k}(x))` and the Cauchy increments along the way.
    pub fn a_limit(&self, k: usize, x: &AlgElement, n_max: usize, grid_factor: u32) -> Result<ALimit> {
        if n_max < k {
            return Err(Error::Parameter(format!("a_limit needs k ≤ n_max, got {k} > {n_max}")));
        }
        let mut prev = self.phi(k, x)?;
        let mut increments = Vec::with_capacity(n_max - k);
        for n in k + 1..=n_max {
            let next = self.phi(n, &self.rho(n, k)?.apply(x)?)?;
            increments.push(GroupAlgebraElement::distance(&next, &prev, grid_factor)?.upper);
            prev = next;
        }
        Ok(ALimit { value: prev, increments })
    }

    /// The associated c.p.c. system, with every step verified.
    pub fn build_cpc(self: &Arc<Self>) -> Result<CpcSystem> {
        let steps = (0..self.stages.len().saturating_sub(1)).map(|n| self.rho_step(n)).collect::<Result<Vec<_>>>()?;
        let mut cpc = CpcSystem::from_maps(self.algebras(), steps)?;
        cpc.source = Some(Arc::clone(self));
        cpc.name = self.describe();
        Ok(cpc)
    }
}

/// `rho_{m,n}` of a Følner system, stored as one (target difference, weight)
/// pair per difference of the source stage.
#[derive(Debug)]
struct FolnerTransition {
    from: Arc<Stage>,
    to: Arc<Stage>,
    targets: Vec<Option<(u32, f64)>>,
}

impl FolnerTransition {
    fn tables(&self) -> (&DiffTable, &DiffTable) {
        (
            self.from.table.get().expect("initialized by transition"),
            self.to.table.get().expect("initialized by transition"),
        )
    }
}

impl LinearAction for FolnerTransition {
    fn apply(&self, x: &AlgElement) -> AlgElement {
        let (from, to) = self.tables();
        let (a, b) = (self.from.set.len(), self.to.set.len());
        let src = x.block(0);
        let mut out = DMatrix::<C64>::zeros(b, b);
        for (id, target) in self.targets.iter().enumerate() {
            let Some((tid, factor)) = target else { continue };
            let mut acc = C64::new(0.0, 0.0);
            for &pos in from.positions(id) {
                let pos = pos as usize;
                acc += src[(pos / a, pos % a)];
            }
            // divide first so that the identity difference of the unit maps to exactly 1
            let v = acc / a as f64 * *factor;
            for &pos in to.positions(*tid as usize) {
                let pos = pos as usize;
                out[(pos / b, pos % b)] = v;
            }
        }
        AlgElement::from_blocks(&self.to.algebra, vec![out]).expect("stage shape")
    }

    fn unit_image(&self, domain: &FiniteDimCstar, block: usize, i: usize, j: usize) -> Vec<UnitEntry> {
        let mut out = Vec::new();
        self.unit_image_into(domain, block, i, j, &mut out);
        out
    }

    fn unit_image_into(&self, _domain: &FiniteDimCstar, _block: usize, i: usize, j: usize, out: &mut Vec<UnitEntry>) {
        out.clear();
        let (from, to) = self.tables();
        let (a, b) = (self.from.set.len(), self.to.set.len());
        let Some((tid, factor)) = self.targets[from.cell(i * a + j)] else {
            return;
        };
        let value = C64::new(factor / a as f64, 0.0);
        for &pos in to.positions(tid as usize) {
            let pos = pos as usize;
            out.push(UnitEntry { block: 0, row: pos / b, col: pos % b, value });
        }
    }
}

/// A c.p.c. system `A_0 -> A_1 -> ...` with verified steps and memoized
/// compositions `rho_{m,n}`.
#[derive(Debug)]
pub struct CpcSystem {
    algebras: Vec<FiniteDimCstar>,
    steps: Vec<CpMap>,
    memo: Vec<OnceLock<CpMap>>,
    source: Option<Arc<ApproximationSystem>>,
    name: String,
}

impl CpcSystem {
    /// Builds a system from explicit steps, rejecting any step that is not
    /// completely positive and contractive at [`STEP_TOL`].
    pub fn from_maps(algebras: Vec<FiniteDimCstar>, steps: Vec<CpMap>) -> Result<Self> {
        if algebras.is_empty() {
            return Err(Error::Parameter("a c.p.c. system needs at least one algebra".into()));
        }
        if steps.len() + 1 != algebras.len() {
            return Err(Error::Shape(format!(
                "{} algebras need {} steps, got {}",
                algebras.len(),
                algebras.len() - 1,
                steps.len()
            )));
        }
        for (n, step) in steps.iter().enumerate() {
            if step.domain() != &algebras[n] || step.codomain() != &algebras[n + 1] {
                return Err(Error::Shape(format!("step {n} does not map algebra {n} to algebra {}", n + 1)));
            }
        }
        let reports: Vec<_> = steps.par_iter().map(|s| s.verify_cp(STEP_TOL)).collect();
        for (n, (step, report)) in steps.iter().zip(reports).enumerate() {
            if !report.is_cp {
                return Err(Error::RejectedStep {
                    step: n,
                    min_choi_eigenvalue: report.min_choi_eigenvalue,
                    reason: "not completely positive".into(),
                });
            }
            let unit_norm = step.unit_image_norm();
            if unit_norm > 1.0 + STEP_TOL {
                return Err(Error::RejectedStep {
                    step: n,
                    min_choi_eigenvalue: report.min_choi_eigenvalue,
                    reason: format!("not contractive (‖ρ(1)‖ = {unit_norm:.6})"),
                });
            }
        }
        let s = algebras.len();
        let name =
            format!("c.p.c. system with {s} stages ({} .. {})", algebras[0].describe(), algebras[s - 1].describe());
        Ok(CpcSystem { algebras, steps, memo: (0..s * s).map(|_| OnceLock::new()).collect(), source: None, name })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn describe(&self) -> &str {
        &self.name
    }

    pub fn num_stages(&self) -> usize {
        self.algebras.len()
    }

    pub fn algebras(&self) -> &[FiniteDimCstar] {
        &self.algebras
    }

    pub fn algebra(&self, n: usize) -> Result<&FiniteDimCstar> {
        self.algebras
            .get(n)
            .ok_or_else(|| Error::Parameter(format!("stage {n} out of range (system has {})", self.algebras.len())))
    }

    pub fn step(&self, n: usize) -> Result<&CpMap> {
        self.steps
            .get(n)
            .ok_or_else(|| Error::Parameter(format!("step {n} out of range (system has {})", self.steps.len())))
    }

    /// The Følner system this was built from, if any.
    pub fn approximation(&self) -> Option<&Arc<ApproximationSystem>> {
        self.source.as_ref()
    }

    /// `rho_{m,n} = rho_{m,m-1} ∘ ... ∘ rho_{n+1,n}`; identity when `m = n`.
    pub fn rho(&self, m: usize, n: usize) -> Result<CpMap> {
        if n > m {
            return Err(Error::Parameter(format!("rho({m}, {n}) needs n ≤ m")));
        }
        self.algebra(m)?;
        if let Some(src) = &self.source {
            return src.rho(m, n);
        }
        if m == n {
            return Ok(CpMap::identity(&self.algebras[n]));
        }
        if m == n + 1 {
            return Ok(self.steps[n].clone());
        }
        let slot = &self.memo[m * self.algebras.len() + n];
        if let Some(map) = slot.get() {
            return Ok(map.clone());
        }
        let inner = self.rho(m - 1, n)?;
        let map = CpMap::compose(&self.steps[m - 1], &inner)?;
        Ok(slot.get_or_init(|| map).clone())
    }

    /// `rho_{m,n}(x)`.
    pub fn push(&self, m: usize, n: usize, x: &AlgElement) -> Result<AlgElement> {
        self.rho(m, n)?.apply(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::box_folner;

    fn z(v: i64) -> GroupElement {
        GroupElement::int(v)
    }

    fn dz(v: i64) -> GroupAlgebraElement {
        GroupAlgebraElement::delta(&Group::lattice(1).unwrap(), &z(v)).unwrap()
    }

    fn boxes(max_n: u32) -> Arc<ApproximationSystem> {
        Arc::new(ApproximationSystem::from_sequence(&FolnerSequence::boxes(1, max_n).unwrap()).unwrap())
    }

    fn z5_full(count: usize) -> Arc<ApproximationSystem> {
        let seq = FolnerSequence::full(Group::cyclic(5).unwrap(), count).unwrap();
        Arc::new(ApproximationSystem::from_sequence(&seq).unwrap())
    }

    #[test]
    fn psi_examples() {
        let sys = boxes(3);
        let one = sys.psi(2, &dz(0)).unwrap();
        assert_eq!(one, AlgElement::unit(sys.algebra(2).unwrap()));
        // F_1 = {-1, 0, 1}: positions of -1, 0, 1 are 0, 1, 2
        let x = sys.psi(1, &dz(1)).unwrap();
        let alg = sys.algebra(1).unwrap();
        let expected = AlgElement::matrix_unit(alg, 0, 1, 0)
            .unwrap()
            .checked_add(&AlgElement::matrix_unit(alg, 0, 2, 1).unwrap())
            .unwrap();
        assert_eq!(x, expected);
        assert_eq!(sys.psi(1, &dz(5)).unwrap(), AlgElement::zero(alg));
        assert!(sys.psi(9, &dz(0)).is_err());
    }

    #[test]
    fn phi_examples() {
        let sys = boxes(3);
        for n in 0..4 {
            let alg = sys.algebra(n).unwrap();
            assert_eq!(sys.phi(n, &AlgElement::unit(alg)).unwrap(), dz(0));
        }
        let alg = sys.algebra(1).unwrap();
        let e10 = AlgElement::matrix_unit(alg, 0, 2, 1).unwrap();
        assert_eq!(sys.phi(1, &e10).unwrap(), dz(1).scale(C64::new(1.0 / 3.0, 0.0)));
        let e_gg = AlgElement::matrix_unit(alg, 0, 2, 2).unwrap();
        assert_eq!(sys.phi(1, &e_gg).unwrap(), dz(0).scale(C64::new(1.0 / 3.0, 0.0)));
    }

    #[test]
    fn phi_psi_scalar_examples() {
        let sys = boxes(10);
        assert_eq!(sys.phi_psi_scalar(4, &z(0)).unwrap(), 1.0);
        assert!((sys.phi_psi_scalar(1, &z(1)).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        for n in 1..=10usize {
            let expected = 2.0 * n as f64 / (2.0 * n as f64 + 1.0);
            assert!((sys.phi_psi_scalar(n, &z(1)).unwrap() - expected).abs() < 1e-15);
            let back = sys.phi(n, &sys.psi(n, &dz(1)).unwrap()).unwrap();
            assert_eq!(back, dz(1).scale(C64::new(sys.phi_psi_scalar(n, &z(1)).unwrap(), 0.0)));
        }
    }

    #[test]
    fn rho_step_example_matrix_units() {
        let sys = boxes(3);
        let rho = sys.rho_step(1).unwrap();
        // F_1 = {-1,0,1} -> F_2 = {-2..2}; e_{1,0} at (2,1)
        let e = AlgElement::matrix_unit(sys.algebra(1).unwrap(), 0, 2, 1).unwrap();
        let out = rho.apply(&e).unwrap();
        let alg2 = sys.algebra(2).unwrap();
        let pos = |g: i64| (g + 2) as usize;
        let mut expected = AlgElement::zero(alg2);
        for (r, c) in [(-1, -2), (0, -1), (1, 0), (2, 1)] {
            let u = AlgElement::matrix_unit(alg2, 0, pos(r), pos(c)).unwrap();
            expected = expected.checked_add(&u.scale(C64::new(1.0 / 3.0, 0.0))).unwrap();
        }
        assert!(out.checked_sub(&expected).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn rho_step_formula_agrees_with_fused_and_with_composition() {
        let sys = boxes(4);
        for n in 0..4 {
            let fused = sys.rho_step(n).unwrap().action_matrix();
            let formula = sys.rho_step_formula(n).unwrap().action_matrix();
            assert!((&fused - &formula).camax() < 1e-12);
            // numerically compose psi_{n+1} ∘ phi_n on matrix units
            let alg = sys.algebra(n).unwrap();
            let composed = CpMap::from_fn(alg, sys.algebra(n + 1).unwrap(), |x| sys.psi(n + 1, &sys.phi(n, x)?))
                .unwrap()
                .action_matrix();
            assert!((&fused - &composed).camax() < 1e-12);
        }
    }

    #[test]
    fn rho_is_unital_and_composes() {
        let sys = boxes(5);
        let cpc = sys.build_cpc().unwrap();
        for n in 0..6 {
            assert!(cpc.rho(n, n).unwrap().is_identity());
            for m in n..6 {
                let one = AlgElement::unit(cpc.algebra(n).unwrap());
                assert_eq!(cpc.push(m, n, &one).unwrap(), AlgElement::unit(cpc.algebra(m).unwrap()));
                for j in n..=m {
                    let lhs = cpc.rho(m, n).unwrap().action_matrix();
                    let rhs = CpMap::compose(&cpc.rho(m, j).unwrap(), &cpc.rho(j, n).unwrap()).unwrap().action_matrix();
                    assert!((lhs - rhs).camax() < 1e-10);
                }
            }
        }
        assert!(matches!(cpc.rho(1, 2), Err(Error::Parameter(_))));
    }

    #[test]
    fn steps_are_completely_positive() {
        let sys = boxes(6);
        for n in 0..6 {
            let r = sys.rho_step(n).unwrap().verify_cp(1e-10);
            assert!(r.is_cp, "{r:?}");
            // compare with the dense Choi spectrum
            let choi = sys.rho_step(n).unwrap().choi_matrix(0, 0);
            let min = choi.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
            assert!((min - r.min_choi_eigenvalue).abs() < 1e-10);
        }
    }

    #[test]
    fn z5_full_system_is_idempotent_with_rank_five() {
        let sys = z5_full(4);
        let step = sys.rho_step(1).unwrap().action_matrix();
        let sq = &step * &step;
        assert!((&sq - &step).camax() < 1e-12);
        let rank = step.clone().svd(false, false).singular_values.iter().filter(|s| **s > 1e-9).count();
        assert_eq!(rank, 5);
        let g = sys.group().clone();
        let x = sys.psi(0, &GroupAlgebraElement::delta(&g, &GroupElement::Finite(3)).unwrap()).unwrap();
        let lim = sys.a_limit(0, &x, 3, 64).unwrap();
        assert_eq!(lim.value, GroupAlgebraElement::delta(&g, &GroupElement::Finite(3)).unwrap());
        assert!(lim.increments.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn a_limit_of_unit_is_identity_delta() {
        let sys = boxes(6);
        let one = AlgElement::unit(sys.algebra(1).unwrap());
        let lim = sys.a_limit(1, &one, 6, 64).unwrap();
        assert_eq!(lim.value, dz(0));
        assert!(lim.increments.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn summability_checks() {
        let z5 = z5_full(4);
        let r = z5.check_summable(&[0, 1, 2, 3], &[1.0, 0.5, 0.25, 0.125], Some(64)).unwrap();
        assert!(r.pass && r.pairs.iter().all(|p| p.bound == 0.0 && p.direct == Some(0.0)));

        let seq = FolnerSequence::boxes(1, 20).unwrap();
        let cert = crate::groups::extract_summable(&seq, &crate::groups::pow2_eps(3), 64).unwrap();
        let sys = ApproximationSystem::from_certificate(&seq, cert.clone()).unwrap();
        let labels: Vec<usize> = (0..sys.num_stages()).collect();
        let r = sys.check_summable(&labels, &cert.eps, Some(64)).unwrap();
        assert!(r.pass);
        for p in &r.pairs {
            assert!(p.direct.unwrap() <= p.bound + 1e-12);
        }

        let sys = boxes(3);
        let r = sys.check_summable(&[1, 2], &[1.0, 1e-6], None).unwrap();
        assert!(!r.pass);
        let expected = summability_lhs(sys.group(), &box_folner(1, 1).unwrap(), &box_folner(1, 2).unwrap()).unwrap();
        assert_eq!(r.pairs[0].bound, expected);
    }

    #[test]
    fn psi_embedding_is_contractive() {
        use rand::{Rng, SeedableRng};
        let sys = boxes(6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let g = sys.group().clone();
        for _ in 0..30 {
            let a = GroupAlgebraElement::from_coeffs(
                &g,
                (-4..=4).map(|v| (z(v), C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))),
            )
            .unwrap();
            let bound = a.reduced_norm(64).unwrap().upper;
            for n in 0..7 {
                assert!(sys.psi_embedding(&a, n).unwrap().norm() <= bound + 1e-12);
            }
        }
    }

    fn af_small() -> (Vec<FiniteDimCstar>, Vec<CpMap>) {
        let c = FiniteDimCstar::matrix(1).unwrap();
        let m2 = FiniteDimCstar::matrix(2).unwrap();
        let m4 = FiniteDimCstar::matrix(4).unwrap();
        let diag = |from: &FiniteDimCstar, to: &FiniteDimCstar| {
            let to = to.clone();
            CpMap::from_fn(from, &to.clone(), move |x| {
                let b = x.block(0);
                let d = b.nrows();
                let mut m = DMatrix::zeros(2 * d, 2 * d);
                m.view_mut((0, 0), (d, d)).copy_from(b);
                m.view_mut((d, d), (d, d)).copy_from(b);
                AlgElement::from_blocks(&to, vec![m])
            })
            .unwrap()
        };
        let steps = vec![diag(&c, &m2), diag(&m2, &m4)];
        (vec![c, m2, m4], steps)
    }

    #[test]
    fn generic_system_accepts_homomorphisms() {
        let (algs, steps) = af_small();
        let cpc = CpcSystem::from_maps(algs, steps).unwrap();
        let one = AlgElement::unit(cpc.algebra(0).unwrap());
        assert_eq!(cpc.push(2, 0, &one).unwrap(), AlgElement::unit(cpc.algebra(2).unwrap()));
        let r20 = cpc.rho(2, 0).unwrap().action_matrix();
        let again = cpc.rho(2, 0).unwrap().action_matrix();
        assert_eq!(r20, again);
    }

    #[test]
    fn generic_system_rejects_bad_steps() {
        let (algs, mut steps) = af_small();
        steps[1] = steps[1].scaled(C64::new(1.5, 0.0));
        match CpcSystem::from_maps(algs.clone(), steps) {
            Err(Error::RejectedStep { step, reason, .. }) => {
                assert_eq!(step, 1);
                assert!(reason.contains("contractive"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let (_, mut steps) = af_small();
        steps[1] = CpMap::compose(&CpMap::transpose(&algs[2]).unwrap(), &steps[1]).unwrap();
        match CpcSystem::from_maps(algs, steps) {
            Err(Error::RejectedStep { step, min_choi_eigenvalue, .. }) => {
                assert_eq!(step, 1);
                assert!(min_choi_eigenvalue < -0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
