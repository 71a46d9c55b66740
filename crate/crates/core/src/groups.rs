//! Group arithmetic for `Z^d` and explicit finite groups, Følner sets and
//! summable-subsequence extraction.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Default number of candidate indices examined by [`extract_summable`].
pub const DEFAULT_HORIZON: usize = 512;

/// An element of a supported group.
///
/// Lattice elements are integer tuples; finite-group elements are indices
/// into the multiplication table (index 0 is the identity).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupElement {
    Lattice(Vec<i64>),
    Finite(usize),
}

impl GroupElement {
    /// Shorthand for an element of `Z`.
    pub fn int(v: i64) -> Self {
        GroupElement::Lattice(vec![v])
    }

    pub fn to_json(&self) -> Value {
        match self {
            GroupElement::Lattice(c) => Value::from(c.clone()),
            GroupElement::Finite(i) => Value::from(*i),
        }
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupElement::Lattice(c) if c.len() == 1 => write!(f, "{}", c[0]),
            GroupElement::Lattice(c) => {
                write!(f, "(")?;
                for (i, v) in c.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ")")
            }
            GroupElement::Finite(i) => write!(f, "g{i}"),
        }
    }
}

/// A finite group given by its multiplication table.
#[derive(Debug, PartialEq, Eq)]
pub struct FiniteGroup {
    table: Vec<Vec<usize>>,
    inverse: Vec<usize>,
}

impl FiniteGroup {
    /// Validates the table exhaustively: closure, identity at index 0,
    /// associativity and existence of two-sided inverses.
    pub fn new(table: Vec<Vec<usize>>) -> Result<Self> {
        let n = table.len();
        if n == 0 {
            return Err(Error::Domain("empty multiplication table".into()));
        }
        for (i, row) in table.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Domain(format!("row {i} has length {} (expected {n})", row.len())));
            }
            if let Some(&bad) = row.iter().find(|&&v| v >= n) {
                return Err(Error::Domain(format!("entry {bad} in row {i} out of range")));
            }
        }
        for (g, row) in table.iter().enumerate() {
            if table[0][g] != g || row[0] != g {
                return Err(Error::Domain("index 0 is not a two-sided identity".into()));
            }
        }
        for a in 0..n {
            for b in 0..n {
                let ab = table[a][b];
                for c in 0..n {
                    if table[ab][c] != table[a][table[b][c]] {
                        return Err(Error::Domain(format!("not associative at ({a},{b},{c})")));
                    }
                }
            }
        }
        let mut inverse = Vec::with_capacity(n);
        for (g, row) in table.iter().enumerate() {
            match (0..n).find(|&h| row[h] == 0 && table[h][g] == 0) {
                Some(h) => inverse.push(h),
                None => return Err(Error::Domain(format!("element {g} has no inverse"))),
            }
        }
        Ok(FiniteGroup { table, inverse })
    }

    pub fn order(&self) -> usize {
        self.table.len()
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.table
    }

    pub fn inverse_table(&self) -> &[usize] {
        &self.inverse
    }
}

/// A supported discrete group.
#[derive(Clone, Debug)]
pub enum Group {
    Lattice { dim: usize },
    Finite(Arc<FiniteGroup>),
}

impl PartialEq for Group {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Group::Lattice { dim: a }, Group::Lattice { dim: b }) => a == b,
            (Group::Finite(a), Group::Finite(b)) => Arc::ptr_eq(a, b) || a == b,
            _ => false,
        }
    }
}

impl Group {
    pub fn lattice(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("lattice dimension must be positive".into()));
        }
        Ok(Group::Lattice { dim })
    }

    pub fn finite(table: Vec<Vec<usize>>) -> Result<Self> {
        Ok(Group::Finite(Arc::new(FiniteGroup::new(table)?)))
    }

    /// The cyclic group `Z/n` with `g_a * g_b = g_{(a+b) mod n}`.
    pub fn cyclic(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("cyclic group order must be positive".into()));
        }
        Group::finite((0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect())
    }

    /// The symmetric group on three letters, elements listed as permutations
    /// of `[0,1,2]` in lexicographic order (identity first).
    pub fn symmetric3() -> Self {
        let perms: Vec<[usize; 3]> = vec![[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let index = |p: [usize; 3]| perms.iter().position(|q| *q == p).unwrap();
        let table = perms.iter().map(|a| perms.iter().map(|b| index([a[b[0]], a[b[1]], a[b[2]]])).collect()).collect();
        Group::finite(table).expect("S3 table is valid")
    }

    pub fn describe(&self) -> String {
        match self {
            Group::Lattice { dim: 1 } => "Z".into(),
            Group::Lattice { dim } => format!("Z^{dim}"),
            Group::Finite(g) => format!("finite group of order {}", g.order()),
        }
    }

    pub fn identity(&self) -> GroupElement {
        match self {
            Group::Lattice { dim } => GroupElement::Lattice(vec![0; *dim]),
            Group::Finite(_) => GroupElement::Finite(0),
        }
    }

    /// Fails with a domain error if `g` does not belong to this group.
    pub fn check(&self, g: &GroupElement) -> Result<()> {
        match (self, g) {
            (Group::Lattice { dim }, GroupElement::Lattice(c)) if c.len() == *dim => Ok(()),
            (Group::Finite(t), GroupElement::Finite(i)) if *i < t.order() => Ok(()),
            _ => Err(Error::Domain(format!("{g} is not an element of {}", self.describe()))),
        }
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.mul_unchecked(a, b))
    }

    pub fn inv(&self, a: &GroupElement) -> Result<GroupElement> {
        self.check(a)?;
        Ok(self.inv_unchecked(a))
    }

    pub(crate) fn mul_unchecked(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        match (self, a, b) {
            (Group::Lattice { .. }, GroupElement::Lattice(x), GroupElement::Lattice(y)) => {
                GroupElement::Lattice(x.iter().zip(y).map(|(p, q)| p + q).collect())
            }
            (Group::Finite(t), GroupElement::Finite(x), GroupElement::Finite(y)) => {
                GroupElement::Finite(t.table[*x][*y])
            }
            _ => unreachable!("elements were checked against the group"),
        }
    }

    pub(crate) fn inv_unchecked(&self, a: &GroupElement) -> GroupElement {
        match (self, a) {
            (Group::Lattice { .. }, GroupElement::Lattice(x)) => GroupElement::Lattice(x.iter().map(|v| -v).collect()),
            (Group::Finite(t), GroupElement::Finite(x)) => GroupElement::Finite(t.inverse[*x]),
            _ => unreachable!("elements were checked against the group"),
        }
    }

    /// `g h^{-1}`.
    pub(crate) fn quotient_unchecked(&self, g: &GroupElement, h: &GroupElement) -> GroupElement {
        match (self, g, h) {
            (Group::Lattice { .. }, GroupElement::Lattice(x), GroupElement::Lattice(y)) => {
                GroupElement::Lattice(x.iter().zip(y).map(|(p, q)| p - q).collect())
            }
            _ => self.mul_unchecked(g, &self.inv_unchecked(h)),
        }
    }

    /// All elements of a finite group in table order.
    pub fn elements(&self) -> Option<Vec<GroupElement>> {
        match self {
            Group::Finite(t) => Some((0..t.order()).map(GroupElement::Finite).collect()),
            Group::Lattice { .. } => None,
        }
    }

    /// Parses an element from JSON: an integer (for `Z` or a finite group)
    /// or an integer array (for `Z^d`).
    pub fn parse_element(&self, v: &Value) -> Result<GroupElement> {
        let g = match (self, v) {
            (Group::Lattice { .. }, Value::Number(_)) => GroupElement::Lattice(vec![json_int(v)?]),
            (Group::Lattice { .. }, Value::Array(items)) => {
                GroupElement::Lattice(items.iter().map(json_int).collect::<Result<_>>()?)
            }
            (Group::Finite(_), Value::Number(_)) => {
                let i = json_int(v)?;
                if i < 0 {
                    return Err(Error::Domain(format!("negative finite-group index {i}")));
                }
                GroupElement::Finite(i as usize)
            }
            _ => return Err(Error::Config(format!("cannot parse group element from {v}"))),
        };
        self.check(&g)?;
        Ok(g)
    }
}

fn json_int(v: &Value) -> Result<i64> {
    v.as_i64().ok_or_else(|| Error::Config(format!("expected an integer, found {v}")))
}

/// An ordered finite subset of a group. The order fixes the matrix-unit
/// indexing of the stage algebra `M_F`.
#[derive(Clone, Debug)]
pub struct FolnerSet {
    elements: Vec<GroupElement>,
    index: HashMap<GroupElement, usize>,
}

impl PartialEq for FolnerSet {
    fn eq(&self, other: &Self) -> bool {
        self.elements == other.elements
    }
}

impl FolnerSet {
    pub fn new(elements: Vec<GroupElement>) -> Result<Self> {
        let mut index = HashMap::with_capacity(elements.len());
        for (i, g) in elements.iter().enumerate() {
            if index.insert(g.clone(), i).is_some() {
                return Err(Error::Domain(format!("duplicate element {g} in Følner set")));
            }
        }
        Ok(FolnerSet { elements, index })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn position(&self, g: &GroupElement) -> Option<usize> {
        self.index.get(g).copied()
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.index.contains_key(g)
    }

    /// `|F ∩ sF|`, counted as the number of `f ∈ F` with `s f ∈ F`.
    pub fn overlap(&self, group: &Group, s: &GroupElement) -> Result<usize> {
        group.check(s)?;
        Ok(self.elements.iter().filter(|f| self.contains(&group.mul_unchecked(s, f))).count())
    }
}

/// The box `[-n, n]^d` in lexicographic order (first coordinate slowest).
pub fn box_folner(d: usize, n: u32) -> Result<FolnerSet> {
    if d == 0 {
        return Err(Error::Parameter("box dimension must be positive".into()));
    }
    let n = n as i64;
    let side = (2 * n + 1) as usize;
    let total = side.checked_pow(d as u32).ok_or_else(|| Error::Parameter("box too large".into()))?;
    let mut elements = Vec::with_capacity(total);
    let mut coords = vec![-n; d];
    for _ in 0..total {
        elements.push(GroupElement::Lattice(coords.clone()));
        for axis in (0..d).rev() {
            if coords[axis] < n {
                coords[axis] += 1;
                break;
            }
            coords[axis] = -n;
        }
    }
    FolnerSet::new(elements)
}

/// `|F Δ sF| / |F|`, computed by explicit set enumeration.
pub fn folner_defect(group: &Group, f: &FolnerSet, s: &GroupElement) -> Result<f64> {
    if f.is_empty() {
        return Err(Error::Precondition("Følner set is empty".into()));
    }
    group.check(s)?;
    for g in f.elements() {
        group.check(g)?;
    }
    let translate: HashSet<GroupElement> = f.elements().iter().map(|g| group.mul_unchecked(s, g)).collect();
    let only_f = f.elements().iter().filter(|g| !translate.contains(*g)).count();
    let only_sf = translate.iter().filter(|g| !f.contains(g)).count();
    Ok((only_f + only_sf) as f64 / f.len() as f64)
}

/// `max_{g,h ∈ F_n} (1 - |F_m ∩ g h^{-1} F_m| / |F_m|) · |F_n|`.
pub fn summability_lhs(group: &Group, f_n: &FolnerSet, f_m: &FolnerSet) -> Result<f64> {
    if f_n.is_empty() || f_m.is_empty() {
        return Err(Error::Precondition("Følner sets must be nonempty".into()));
    }
    let mut shifts = BTreeSet::new();
    for g in f_n.elements() {
        for h in f_n.elements() {
            shifts.insert(group.quotient_unchecked(g, h));
        }
    }
    let mut worst_overlap = f_m.len();
    for s in &shifts {
        worst_overlap = worst_overlap.min(f_m.overlap(group, s)?);
    }
    Ok((1.0 - worst_overlap as f64 / f_m.len() as f64) * f_n.len() as f64)
}

/// A group together with an ordered list of finite sets.
#[derive(Clone, Debug)]
pub struct FolnerSequence {
    group: Group,
    sets: Vec<FolnerSet>,
}

impl FolnerSequence {
    pub fn new(group: Group, sets: Vec<FolnerSet>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::Parameter("Følner sequence needs at least one set".into()));
        }
        for set in &sets {
            if set.is_empty() {
                return Err(Error::Domain("empty Følner set".into()));
            }
            for g in set.elements() {
                group.check(g)?;
            }
        }
        Ok(FolnerSequence { group, sets })
    }

    /// Boxes `[-n, n]^d` for `n = 0..=max_n`.
    pub fn boxes(d: usize, max_n: u32) -> Result<Self> {
        let sets = (0..=max_n).map(|n| box_folner(d, n)).collect::<Result<_>>()?;
        FolnerSequence::new(Group::lattice(d)?, sets)
    }

    /// `count` copies of the whole finite group, in table order.
    pub fn full(group: Group, count: usize) -> Result<Self> {
        let all = group.elements().ok_or_else(|| Error::Parameter("full Følner sets need a finite group".into()))?;
        let set = FolnerSet::new(all)?;
        FolnerSequence::new(group, vec![set; count.max(1)])
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn sets(&self) -> &[FolnerSet] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// Indices of a subsequence together with the tolerances `eps_k` it meets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummabilityCertificate {
    pub indices: Vec<usize>,
    pub eps: Vec<f64>,
    pub partial_sums: Vec<f64>,
}

impl SummabilityCertificate {
    fn new(indices: Vec<usize>, eps: &[f64]) -> Self {
        let eps = eps[..indices.len().min(eps.len())].to_vec();
        let partial_sums = eps
            .iter()
            .scan(0.0, |acc, e| {
                *acc += e;
                Some(*acc)
            })
            .collect();
        SummabilityCertificate { indices, eps, partial_sums }
    }

    /// Re-evaluates the summability inequality for every chosen pair.
    pub fn verify(&self, seq: &FolnerSequence) -> Result<bool> {
        for (pos_m, &m) in self.indices.iter().enumerate() {
            for &n in &self.indices[..pos_m] {
                let lhs = summability_lhs(seq.group(), &seq.sets()[n], &seq.sets()[m])?;
                if lhs >= self.eps[pos_m] {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// `eps_k = 2^{-k}` for `k = 0..count`.
pub fn pow2_eps(count: usize) -> Vec<f64> {
    (0..count).map(|k| 0.5f64.powi(k as i32)).collect()
}

fn check_eps(eps: &[f64]) -> Result<()> {
    if eps.is_empty() {
        return Err(Error::Parameter("eps list is empty".into()));
    }
    if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::Parameter("eps must be positive and finite".into()));
    }
    if eps.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Parameter("eps must be non-increasing".into()));
    }
    Ok(())
}

/// Greedily picks `eps.len()` indices `i_0 < i_1 < ...` such that
/// `summability_lhs(F_{i_j}, F_{i_k}) < eps[k]` for all `j < k`.
///
/// Only indices below `min(horizon, seq.len())` are candidates.
pub fn extract_summable(seq: &FolnerSequence, eps: &[f64], horizon: usize) -> Result<SummabilityCertificate> {
    check_eps(eps)?;
    let limit = horizon.min(seq.len());
    let mut chosen: Vec<usize> = Vec::with_capacity(eps.len());
    for (k, &eps_k) in eps.iter().enumerate() {
        let start = chosen.last().map_or(0, |&i| i + 1);
        let mut found = None;
        for cand in start..limit {
            let mut ok = true;
            for &prev in &chosen {
                if summability_lhs(seq.group(), &seq.sets()[prev], &seq.sets()[cand])? >= eps_k {
                    ok = false;
                    break;
                }
            }
            if ok {
                found = Some(cand);
                break;
            }
        }
        match found {
            Some(i) => chosen.push(i),
            None => {
                return Err(Error::NotCertifiable {
                    horizon,
                    wanted: eps.len(),
                    partial: SummabilityCertificate::new(chosen, &eps[..k]),
                })
            }
        }
    }
    Ok(SummabilityCertificate::new(chosen, eps))
}
