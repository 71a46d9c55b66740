//! Linear maps between finite-dimensional C*-algebras.
//!
//! A [`CpMap`] is either a dense action matrix in the matrix-unit bases or a
//! structured representation (identity, composition chain, amplification,
//! scalar multiple, or a user-supplied [`LinearAction`]). Structured forms
//! exist because the Følner stages reach `M_257`, where a dense action
//! matrix would have more than `4·10^9` entries.
//!
//! # Choi convention
//!
//! For a domain block `M_d` and a codomain block `M_e` the Choi matrix is the
//! unnormalized `C = Σ_{ij} E_{ij} ⊗ f(E_{ij})`, a `de × de` matrix with
//! `C[(i,p),(j,q)] = f(E_{ij})[p,q]` (row index `i·e + p`). A map is
//! completely positive iff every such block is positive semidefinite.
//!
//! The check works on the sparsity graph of `C`: after grouping indices into
//! connected components the matrix is block diagonal up to a permutation, so
//! each component is examined on its own.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::{Error, Result};
use crate::fdcstar::{AlgElement, FiniteDimCstar};
use crate::{C64, DEFAULT_TOL};

/// One nonzero entry of the image of a matrix unit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitEntry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: C64,
}

/// A linear map given procedurally.
pub trait LinearAction: Send + Sync + fmt::Debug {
    /// Applies the map. `x` is guaranteed to lie in the map's domain.
    fn apply(&self, x: &AlgElement) -> AlgElement;

    /// Sparse image of the matrix unit `e^{(block)}_{ij}` of `domain`.
    fn unit_image(&self, domain: &FiniteDimCstar, block: usize, i: usize, j: usize) -> Vec<UnitEntry> {
        let e = AlgElement::matrix_unit(domain, block, i, j).expect("matrix unit in range");
        nonzero_entries(&self.apply(&e))
    }

    /// Replaces the contents of `out` with [`LinearAction::unit_image`].
    fn unit_image_into(&self, domain: &FiniteDimCstar, block: usize, i: usize, j: usize, out: &mut Vec<UnitEntry>) {
        *out = self.unit_image(domain, block, i, j);
    }
}

fn nonzero_entries(x: &AlgElement) -> Vec<UnitEntry> {
    let mut out = Vec::new();
    for (b, m) in x.blocks().iter().enumerate() {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != C64::new(0.0, 0.0) {
                    out.push(UnitEntry { block: b, row: i, col: j, value: v });
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
enum Kind {
    Identity,
    Dense(DMatrix<C64>),
    /// Applied first to last.
    Chain(Vec<CpMap>),
    Amplified {
        base: CpMap,
        r: usize,
    },
    Scaled {
        base: CpMap,
        factor: C64,
    },
    Action(Arc<dyn LinearAction>),
}

struct Inner {
    domain: FiniteDimCstar,
    codomain: FiniteDimCstar,
    kind: Kind,
    choi: OnceLock<ChoiSummary>,
}

/// A linear map `domain -> codomain`. Cloning is cheap; clones share the
/// Choi memo.
#[derive(Clone)]
pub struct CpMap {
    inner: Arc<Inner>,
}

impl fmt::Debug for CpMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CpMap")
            .field("domain", &self.inner.domain.describe())
            .field("codomain", &self.inner.codomain.describe())
            .field("kind", &self.kind_name())
            .finish()
    }
}

/// Result of [`CpMap::verify_cp`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CpReport {
    pub min_choi_eigenvalue: f64,
    /// `max |C - C*|` over all Choi blocks; nonzero means the map is not
    /// Hermitian-preserving.
    pub hermiticity_defect: f64,
    pub is_cp: bool,
}

/// Spectral summary of all Choi blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiSummary {
    /// `(domain block, codomain block, min eigenvalue)` for every pair.
    pub blocks: Vec<(usize, usize, f64)>,
    pub min_eigenvalue: f64,
    pub hermiticity_defect: f64,
}

impl CpMap {
    fn new(domain: FiniteDimCstar, codomain: FiniteDimCstar, kind: Kind) -> Self {
        CpMap { inner: Arc::new(Inner { domain, codomain, kind, choi: OnceLock::new() }) }
    }

    pub fn identity(algebra: &FiniteDimCstar) -> Self {
        CpMap::new(algebra.clone(), algebra.clone(), Kind::Identity)
    }

    pub fn zero(domain: &FiniteDimCstar, codomain: &FiniteDimCstar) -> Self {
        CpMap::new(domain.clone(), codomain.clone(), Kind::Dense(DMatrix::zeros(codomain.dim(), domain.dim())))
    }

    /// Wraps an action matrix of shape `codomain.dim() × domain.dim()`.
    pub fn from_action_matrix(
        domain: &FiniteDimCstar,
        codomain: &FiniteDimCstar,
        action: DMatrix<C64>,
    ) -> Result<Self> {
        if action.nrows() != codomain.dim() || action.ncols() != domain.dim() {
            return Err(Error::Shape(format!(
                "action matrix is {}x{}, expected {}x{}",
                action.nrows(),
                action.ncols(),
                codomain.dim(),
                domain.dim()
            )));
        }
        Ok(CpMap::new(domain.clone(), codomain.clone(), Kind::Dense(action)))
    }

    /// Tabulates `f` on the matrix units of `domain` into a dense map.
    pub fn from_fn<F>(domain: &FiniteDimCstar, codomain: &FiniteDimCstar, f: F) -> Result<Self>
    where
        F: Fn(&AlgElement) -> Result<AlgElement>,
    {
        let mut action = DMatrix::zeros(codomain.dim(), domain.dim());
        for col in 0..domain.dim() {
            let (b, i, j) = domain.unit_coords(col);
            let image = f(&AlgElement::matrix_unit(domain, b, i, j)?)?;
            if image.algebra() != codomain {
                return Err(Error::Shape("function image lies outside the codomain".into()));
            }
            action.set_column(col, &DVector::from_vec(image.to_vec()));
        }
        CpMap::from_action_matrix(domain, codomain, action)
    }

    pub fn from_action(domain: &FiniteDimCstar, codomain: &FiniteDimCstar, action: Arc<dyn LinearAction>) -> Self {
        CpMap::new(domain.clone(), codomain.clone(), Kind::Action(action))
    }

    /// The corner compression `M_n -> M_k`, `x ↦ (x_{rows[a], rows[b]})_{a,b}`.
    pub fn compression(n: usize, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() || rows.iter().any(|&r| r >= n) {
            return Err(Error::Parameter("compression rows must be nonempty and in range".into()));
        }
        let domain = FiniteDimCstar::matrix(n)?;
        let codomain = FiniteDimCstar::matrix(rows.len())?;
        CpMap::from_fn(&domain, &codomain, |x| {
            let m = x.block(0);
            let k = rows.len();
            AlgElement::from_blocks(&codomain, vec![DMatrix::from_fn(k, k, |a, b| m[(rows[a], rows[b])])])
        })
    }

    /// Blockwise transpose on `algebra` (positive but not completely positive).
    pub fn transpose(algebra: &FiniteDimCstar) -> Result<Self> {
        CpMap::from_fn(algebra, algebra, |x| {
            AlgElement::from_blocks(algebra, x.blocks().iter().map(|m| m.transpose()).collect())
        })
    }

    /// `c · f`.
    pub fn scaled(&self, factor: C64) -> Self {
        match &self.inner.kind {
            Kind::Dense(m) => CpMap::new(self.domain().clone(), self.codomain().clone(), Kind::Dense(m * factor)),
            _ => {
                CpMap::new(self.domain().clone(), self.codomain().clone(), Kind::Scaled { base: self.clone(), factor })
            }
        }
    }

    pub fn domain(&self) -> &FiniteDimCstar {
        &self.inner.domain
    }

    pub fn codomain(&self) -> &FiniteDimCstar {
        &self.inner.codomain
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.inner.kind, Kind::Identity)
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.inner.kind, Kind::Dense(_))
    }

    fn kind_name(&self) -> &'static str {
        match self.inner.kind {
            Kind::Identity => "identity",
            Kind::Dense(_) => "dense",
            Kind::Chain(_) => "chain",
            Kind::Amplified { .. } => "amplified",
            Kind::Scaled { .. } => "scaled",
            Kind::Action(_) => "action",
        }
    }

    pub fn apply(&self, x: &AlgElement) -> Result<AlgElement> {
        if x.algebra() != self.domain() {
            return Err(Error::Shape(format!(
                "element of {} passed to a map on {}",
                x.algebra().describe(),
                self.domain().describe()
            )));
        }
        Ok(self.apply_unchecked(x))
    }

    fn apply_unchecked(&self, x: &AlgElement) -> AlgElement {
        match &self.inner.kind {
            Kind::Identity => x.clone(),
            Kind::Dense(m) => {
                let v = m * DVector::from_vec(x.to_vec());
                AlgElement::from_vec(self.codomain(), v.as_slice()).expect("shape checked at construction")
            }
            Kind::Chain(parts) => parts.iter().fold(x.clone(), |acc, p| p.apply_unchecked(&acc)),
            Kind::Amplified { base, r } => {
                let (r, dom, cod) = (*r, base.domain(), base.codomain());
                let mut out = AlgElement::zero(self.codomain());
                for a in 0..r {
                    for c in 0..r {
                        let entry = x.array_entry(dom, r, a, c).expect("amplified domain");
                        let image = base.apply_unchecked(&entry);
                        for (b, &d) in cod.block_dims().iter().enumerate() {
                            out.blocks_mut()[b].view_mut((a * d, c * d), (d, d)).copy_from(image.block(b));
                        }
                    }
                }
                out
            }
            Kind::Scaled { base, factor } => base.apply_unchecked(x).scale(*factor),
            Kind::Action(action) => action.apply(x),
        }
    }

    /// [`CpMap::unit_image`] written into a reusable buffer.
    pub fn unit_image_into(&self, block: usize, i: usize, j: usize, out: &mut Vec<UnitEntry>) {
        match &self.inner.kind {
            Kind::Action(action) => action.unit_image_into(self.domain(), block, i, j, out),
            _ => *out = self.unit_image(block, i, j),
        }
    }

    /// Sparse image of the domain matrix unit `e^{(block)}_{ij}`.
    pub fn unit_image(&self, block: usize, i: usize, j: usize) -> Vec<UnitEntry> {
        match &self.inner.kind {
            Kind::Identity => vec![UnitEntry { block, row: i, col: j, value: C64::new(1.0, 0.0) }],
            Kind::Dense(m) => {
                let d = self.domain().block_dims()[block];
                let col = self.domain().block_offset(block) + i * d + j;
                m.column(col)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != C64::new(0.0, 0.0))
                    .map(|(idx, v)| {
                        let (b, p, q) = self.codomain().unit_coords(idx);
                        UnitEntry { block: b, row: p, col: q, value: *v }
                    })
                    .collect()
            }
            Kind::Amplified { base, .. } => {
                let d = base.domain().block_dims()[block];
                let (a, p) = (i / d, i % d);
                let (c, q) = (j / d, j % d);
                base.unit_image(block, p, q)
                    .into_iter()
                    .map(|e| {
                        let e_dim = base.codomain().block_dims()[e.block];
                        UnitEntry { row: a * e_dim + e.row, col: c * e_dim + e.col, ..e }
                    })
                    .collect()
            }
            Kind::Scaled { base, factor } => {
                base.unit_image(block, i, j).into_iter().map(|e| UnitEntry { value: e.value * factor, ..e }).collect()
            }
            Kind::Action(action) => action.unit_image(self.domain(), block, i, j),
            Kind::Chain(_) => {
                let e = AlgElement::matrix_unit(self.domain(), block, i, j).expect("matrix unit in range");
                nonzero_entries(&self.apply_unchecked(&e))
            }
        }
    }

    /// Dense action matrix in the matrix-unit bases. Materializes structured
    /// maps, so only call this on small algebras.
    pub fn action_matrix(&self) -> DMatrix<C64> {
        if let Kind::Dense(m) = &self.inner.kind {
            return m.clone();
        }
        let (dom, cod) = (self.domain(), self.codomain());
        let mut m = DMatrix::zeros(cod.dim(), dom.dim());
        for col in 0..dom.dim() {
            let (b, i, j) = dom.unit_coords(col);
            for e in self.unit_image(b, i, j) {
                let d = cod.block_dims()[e.block];
                m[(cod.block_offset(e.block) + e.row * d + e.col, col)] += e.value;
            }
        }
        m
    }

    /// `g ∘ f` (apply `f`, then `g`).
    pub fn compose(g: &CpMap, f: &CpMap) -> Result<CpMap> {
        if f.codomain() != g.domain() {
            return Err(Error::Shape(format!(
                "cannot compose: {} does not match {}",
                f.codomain().describe(),
                g.domain().describe()
            )));
        }
        if f.is_identity() {
            return Ok(g.clone());
        }
        if g.is_identity() {
            return Ok(f.clone());
        }
        if let (Kind::Dense(a), Kind::Dense(b)) = (&g.inner.kind, &f.inner.kind) {
            return Ok(CpMap::new(f.domain().clone(), g.codomain().clone(), Kind::Dense(a * b)));
        }
        let mut parts = Vec::new();
        for m in [f, g] {
            match &m.inner.kind {
                Kind::Chain(inner) => parts.extend(inner.iter().cloned()),
                _ => parts.push(m.clone()),
            }
        }
        Ok(CpMap::new(f.domain().clone(), g.codomain().clone(), Kind::Chain(parts)))
    }

    /// The amplification `id_{M_r} ⊗ f : M_r(domain) -> M_r(codomain)`.
    pub fn amplify(&self, r: usize) -> Result<CpMap> {
        if r == 0 {
            return Err(Error::Parameter("amplification degree must be at least 1".into()));
        }
        if r == 1 {
            return Ok(self.clone());
        }
        let (dom, cod) = (self.domain().amplify(r)?, self.codomain().amplify(r)?);
        if self.is_identity() {
            return Ok(CpMap::identity(&dom));
        }
        Ok(CpMap::new(dom, cod, Kind::Amplified { base: self.clone(), r }))
    }

    /// Dense Choi block for `(domain block, codomain block)`; for tests and
    /// small maps.
    pub fn choi_matrix(&self, domain_block: usize, codomain_block: usize) -> DMatrix<C64> {
        let d = self.domain().block_dims()[domain_block];
        let e = self.codomain().block_dims()[codomain_block];
        let mut c = DMatrix::zeros(d * e, d * e);
        for i in 0..d {
            for j in 0..d {
                for entry in self.unit_image(domain_block, i, j) {
                    if entry.block == codomain_block {
                        c[(i * e + entry.row, j * e + entry.col)] += entry.value;
                    }
                }
            }
        }
        c
    }

    /// Spectral summary of every Choi block, computed once per map.
    pub fn choi_summary(&self) -> &ChoiSummary {
        self.inner.choi.get_or_init(|| choi::summarize(self))
    }

    pub fn verify_cp(&self, tol: f64) -> CpReport {
        let s = self.choi_summary();
        CpReport {
            min_choi_eigenvalue: s.min_eigenvalue,
            hermiticity_defect: s.hermiticity_defect,
            is_cp: s.min_eigenvalue >= -tol && s.hermiticity_defect <= tol,
        }
    }

    fn require_cp(&self, what: &str) -> Result<()> {
        let report = self.verify_cp(DEFAULT_TOL);
        if !report.is_cp {
            return Err(Error::Contract(format!(
                "{what} requires a completely positive map (min Choi eigenvalue {:.3e})",
                report.min_choi_eigenvalue
            )));
        }
        Ok(())
    }

    /// `‖f(1)‖ ≤ 1 + tol`; for completely positive maps this is the cb-norm.
    pub fn verify_contractive(&self, tol: f64) -> Result<bool> {
        self.require_cp("verify_contractive")?;
        Ok(self.unit_image_norm() <= 1.0 + tol)
    }

    /// `‖f(1)‖`.
    pub fn unit_image_norm(&self) -> f64 {
        self.apply_unchecked(&AlgElement::unit(self.domain())).norm()
    }

    /// `‖f(xy)‖² - ‖f(xx*)‖·‖f(y*y)‖`, nonpositive for completely positive
    /// maps up to rounding.
    pub fn cauchy_schwarz_defect(&self, x: &AlgElement, y: &AlgElement) -> Result<f64> {
        self.require_cp("cauchy_schwarz_defect")?;
        let fxy = self.apply(&x.checked_mul(y)?)?.norm();
        let fxx = self.apply(&x.checked_mul(&x.adjoint())?)?.norm();
        let fyy = self.apply(&y.adjoint().checked_mul(y)?)?.norm();
        Ok(fxy * fxy - fxx * fyy)
    }
}

mod choi {
    use super::*;

    /// Component matrices are assembled in batches of at most this many
    /// entries.
    const BATCH_ENTRIES: usize = 4 << 20;

    /// Relative Frobenius residual below which a component is treated as
    /// rank one.
    const RANK_ONE_RTOL: f64 = 1e-13;

    struct UnionFind {
        parent: Vec<u32>,
    }

    impl UnionFind {
        fn new(n: usize) -> Self {
            UnionFind { parent: (0..n as u32).collect() }
        }

        fn find(&mut self, mut x: u32) -> u32 {
            while self.parent[x as usize] != x {
                let p = self.parent[x as usize];
                self.parent[x as usize] = self.parent[p as usize];
                x = p;
            }
            x
        }

        fn union(&mut self, a: u32, b: u32) {
            let (ra, rb) = (self.find(a), self.find(b));
            if ra != rb {
                self.parent[ra.max(rb) as usize] = ra.min(rb);
            }
        }
    }

    struct Components {
        /// component id and local index, per Choi index
        slot: Vec<(u32, u32)>,
        sizes: Vec<usize>,
    }

    fn components(uf: &mut UnionFind) -> Components {
        let n = uf.parent.len();
        let mut id_of_root = vec![u32::MAX; n];
        let mut sizes: Vec<usize> = Vec::new();
        let mut slot = Vec::with_capacity(n);
        for x in 0..n as u32 {
            let r = uf.find(x) as usize;
            if id_of_root[r] == u32::MAX {
                id_of_root[r] = sizes.len() as u32;
                sizes.push(0);
            }
            let id = id_of_root[r];
            slot.push((id, sizes[id as usize] as u32));
            sizes[id as usize] += 1;
        }
        Components { slot, sizes }
    }

    const TILE: usize = 32;

    /// `max |C - C*|`, scanned in tiles.
    fn hermiticity_defect(c: DMatrixView<C64>) -> f64 {
        let s = c.nrows();
        let mut herm = 0.0f64;
        for tj in (0..s).step_by(TILE) {
            for ti in (0..=tj).step_by(TILE) {
                for j in tj..(tj + TILE).min(s) {
                    for i in ti..(ti + TILE).min(j + 1) {
                        herm = herm.max((c[(i, j)] - c[(j, i)].conj()).norm());
                    }
                }
            }
        }
        herm
    }

    /// `(min eigenvalue of the Hermitian part, max |C - C*|)`.
    pub(super) fn component_spectrum(c: DMatrixView<C64>) -> (f64, f64) {
        let herm = hermiticity_defect(c);
        if c.nrows() == 1 {
            return (c[(0, 0)].re, herm);
        }
        let owned;
        let h = if herm == 0.0 {
            c
        } else {
            owned = (c + c.adjoint()) * C64::new(0.5, 0.0);
            owned.as_view()
        };
        if let Some(min) = rank_one_min(h) {
            return (min, herm);
        }
        let min = h.into_owned().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        (min, herm)
    }

    /// If `h ≈ v v*`, a lower bound for its smallest eigenvalue via Weyl's
    /// inequality: `λ_min(h) ≥ λ_min(v v*) - ‖h - v v*‖_F = -‖h - v v*‖_F`.
    fn rank_one_min(h: DMatrixView<C64>) -> Option<f64> {
        let s = h.nrows();
        let (p, hpp) =
            (0..s).map(|i| (i, h[(i, i)].re)).fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        if hpp <= 0.0 {
            return None;
        }
        let scale = hpp.sqrt();
        let v: Vec<C64> = (0..s).map(|i| h[(i, p)] / scale).collect();
        let mut res2 = 0.0;
        let mut norm2 = 0.0;
        for j in 0..s {
            let vj = v[j].conj();
            for i in 0..s {
                let hij = h[(i, j)];
                res2 += (hij - v[i] * vj).norm_sqr();
                norm2 += hij.norm_sqr();
            }
        }
        let res = res2.sqrt();
        (res <= RANK_ONE_RTOL * norm2.sqrt()).then_some(-res)
    }

    pub(super) fn summarize(map: &CpMap) -> ChoiSummary {
        let dom = map.domain().block_dims().to_vec();
        let cod = map.codomain().block_dims().to_vec();
        let mut blocks = Vec::new();
        let mut global_min = f64::INFINITY;
        let mut global_herm = 0.0f64;

        for (b, &d) in dom.iter().enumerate() {
            let mut buf = Vec::new();
            let mut ufs: Vec<UnionFind> = cod.iter().map(|&e| UnionFind::new(d * e)).collect();
            for i in 0..d {
                for j in 0..d {
                    map.unit_image_into(b, i, j, &mut buf);
                    for en in &buf {
                        let e = cod[en.block];
                        ufs[en.block].union((i * e + en.row) as u32, (j * e + en.col) as u32);
                    }
                }
            }
            let comps: Vec<Components> = ufs.iter_mut().map(components).collect();

            // Batches of components per codomain block: (block, first id, last id).
            let mut batches = Vec::new();
            for (c, comp) in comps.iter().enumerate() {
                let mut start = 0;
                let mut acc = 0;
                for (id, &s) in comp.sizes.iter().enumerate() {
                    if acc > 0 && acc + s * s > BATCH_ENTRIES {
                        batches.push((c, start, id));
                        start = id;
                        acc = 0;
                    }
                    acc += s * s;
                }
                batches.push((c, start, comp.sizes.len()));
            }

            let mut block_min = vec![f64::INFINITY; cod.len()];
            let mut arena: Vec<C64> = Vec::new();
            for (c, lo, hi) in batches {
                let comp = &comps[c];
                let e = cod[c];
                let sizes = &comp.sizes[lo..hi];
                let offsets: Vec<usize> = sizes
                    .iter()
                    .scan(0, |acc, &s| {
                        let o = *acc;
                        *acc += s * s;
                        Some(o)
                    })
                    .collect();
                arena.clear();
                arena.resize(sizes.iter().map(|s| s * s).sum(), C64::new(0.0, 0.0));
                for i in 0..d {
                    for j in 0..d {
                        map.unit_image_into(b, i, j, &mut buf);
                        for en in &buf {
                            if en.block != c {
                                continue;
                            }
                            let (id, li) = comp.slot[i * e + en.row];
                            let (_, lj) = comp.slot[j * e + en.col];
                            let id = id as usize;
                            // column-major storage: filling the transpose keeps consecutive j adjacent,
                            // and the transpose has the same spectrum and hermiticity defect
                            if id >= lo && id < hi {
                                let s = sizes[id - lo];
                                arena[offsets[id - lo] + lj as usize + li as usize * s] += en.value;
                            }
                        }
                    }
                }
                for (&s, &o) in sizes.iter().zip(&offsets) {
                    let m = DMatrixView::from_slice(&arena[o..o + s * s], s, s);
                    let (min, herm) = component_spectrum(m);
                    block_min[c] = block_min[c].min(min);
                    global_herm = global_herm.max(herm);
                }
            }
            for (c, &m) in block_min.iter().enumerate() {
                global_min = global_min.min(m);
                blocks.push((b, c, m));
            }
        }
        ChoiSummary { blocks, min_eigenvalue: global_min, hermiticity_defect: global_herm }
    }
}
