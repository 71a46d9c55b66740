//! The group algebra `C[G]` and its reduced C*-norm.
//!
//! Elements are finitely supported coefficient maps `g ↦ c_g`, read as
//! `Σ c_g λ_g`. For `Z^d` the reduced norm is the sup norm of the symbol
//! `p(θ) = Σ c_g e^{i g·θ}` on the torus, which [`GroupAlgebraElement::reduced_norm`]
//! encloses from both sides with a grid maximum and a Bernstein bound. For
//! finite groups it is the operator norm of the left-regular matrix.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fdcstar::spectral_norm;
use crate::groups::{Group, GroupElement};
use crate::C64;

/// Coefficients below this modulus are dropped.
pub const PRUNE_TOL: f64 = 1e-15;

/// Largest torus grid (points) the lattice oracle will evaluate.
pub const MAX_GRID_POINTS: usize = 1 << 24;

/// A two-sided bound `lower ≤ ‖a‖ ≤ upper`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEnclosure {
    pub lower: f64,
    pub upper: f64,
}

impl NormEnclosure {
    pub fn exact(v: f64) -> Self {
        NormEnclosure { lower: v, upper: v }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    /// `lower - tol ≤ v ≤ upper + tol`.
    pub fn contains(&self, v: f64, tol: f64) -> bool {
        self.lower - tol <= v && v <= self.upper + tol
    }

    /// Whether the two intervals meet after widening each by `widen`.
    pub fn overlaps(&self, other: &NormEnclosure, widen: f64) -> bool {
        self.lower - widen <= other.upper + widen && other.lower - widen <= self.upper + widen
    }
}

/// A finitely supported element of `C[G]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupAlgebraElement {
    group: Group,
    coeffs: BTreeMap<GroupElement, C64>,
}

#[derive(Serialize, Deserialize)]
struct CoeffJson {
    element: Value,
    re: f64,
    im: f64,
}

impl GroupAlgebraElement {
    pub fn zero(group: &Group) -> Self {
        GroupAlgebraElement { group: group.clone(), coeffs: BTreeMap::new() }
    }

    /// `λ_s`.
    pub fn delta(group: &Group, s: &GroupElement) -> Result<Self> {
        group.check(s)?;
        let mut coeffs = BTreeMap::new();
        coeffs.insert(s.clone(), C64::new(1.0, 0.0));
        Ok(GroupAlgebraElement { group: group.clone(), coeffs })
    }

    /// Sums repeated elements and drops negligible coefficients.
    pub fn from_coeffs<I>(group: &Group, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (GroupElement, C64)>,
    {
        let mut coeffs: BTreeMap<GroupElement, C64> = BTreeMap::new();
        for (g, c) in pairs {
            group.check(&g)?;
            *coeffs.entry(g).or_default() += c;
        }
        Ok(GroupAlgebraElement::pruned(group.clone(), coeffs))
    }

    pub(crate) fn pruned(group: Group, mut coeffs: BTreeMap<GroupElement, C64>) -> Self {
        coeffs.retain(|_, c| c.norm() >= PRUNE_TOL);
        GroupAlgebraElement { group, coeffs }
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn coeff(&self, g: &GroupElement) -> C64 {
        self.coeffs.get(g).copied().unwrap_or_default()
    }

    /// Support in increasing element order, with coefficients.
    pub fn terms(&self) -> impl Iterator<Item = (&GroupElement, &C64)> {
        self.coeffs.iter()
    }

    pub fn support_len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    fn same_group(&self, other: &GroupAlgebraElement) -> Result<()> {
        if self.group != other.group {
            return Err(Error::Shape(format!(
                "group mismatch: {} vs {}",
                self.group.describe(),
                other.group.describe()
            )));
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &GroupAlgebraElement) -> Result<Self> {
        self.same_group(other)?;
        let mut coeffs = self.coeffs.clone();
        for (g, c) in &other.coeffs {
            *coeffs.entry(g.clone()).or_default() += c;
        }
        Ok(GroupAlgebraElement::pruned(self.group.clone(), coeffs))
    }

    pub fn checked_sub(&self, other: &GroupAlgebraElement) -> Result<Self> {
        self.checked_add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: C64) -> Self {
        let coeffs = self.coeffs.iter().map(|(g, v)| (g.clone(), v * c)).collect();
        GroupAlgebraElement::pruned(self.group.clone(), coeffs)
    }

    /// `(a·b)(g) = Σ_h a(h) b(h^{-1} g)`.
    pub fn convolve(&self, other: &GroupAlgebraElement) -> Result<Self> {
        self.same_group(other)?;
        let mut coeffs: BTreeMap<GroupElement, C64> = BTreeMap::new();
        for (h, a) in &self.coeffs {
            for (k, b) in &other.coeffs {
                *coeffs.entry(self.group.mul_unchecked(h, k)).or_default() += a * b;
            }
        }
        Ok(GroupAlgebraElement::pruned(self.group.clone(), coeffs))
    }

    /// `a*(g) = conj(a(g^{-1}))`.
    pub fn involute(&self) -> Self {
        let coeffs = self.coeffs.iter().map(|(g, c)| (self.group.inv_unchecked(g), c.conj())).collect();
        GroupAlgebraElement { group: self.group.clone(), coeffs }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `Σ |c_g|`, an upper bound for the reduced norm.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).sum()
    }

    /// Certified enclosure of the reduced C*-norm.
    pub fn reduced_norm(&self, grid_factor: u32) -> Result<NormEnclosure> {
        match &self.group {
            Group::Lattice { dim } => self.lattice_norm(*dim, grid_factor),
            Group::Finite(fg) => {
                let n = fg.order();
                let mut l = DMatrix::<C64>::zeros(n, n);
                for (g, c) in &self.coeffs {
                    let gi = match g {
                        GroupElement::Finite(i) => *i,
                        GroupElement::Lattice(_) => unreachable!("checked on insertion"),
                    };
                    for h in 0..n {
                        l[(fg.table()[gi][h], h)] += c;
                    }
                }
                Ok(NormEnclosure::exact(spectral_norm(&l)))
            }
        }
    }

    /// Enclosure of `‖a - b‖`.
    pub fn distance(a: &GroupAlgebraElement, b: &GroupAlgebraElement, grid_factor: u32) -> Result<NormEnclosure> {
        a.checked_sub(b)?.reduced_norm(grid_factor)
    }

    fn lattice_norm(&self, d: usize, grid_factor: u32) -> Result<NormEnclosure> {
        if self.coeffs.is_empty() {
            return Ok(NormEnclosure::exact(0.0));
        }
        if self.coeffs.len() == 1 {
            let c = self.coeffs.values().next().unwrap().norm();
            return Ok(NormEnclosure::exact(c));
        }
        let points: Vec<(Vec<i64>, C64)> = self
            .coeffs
            .iter()
            .map(|(g, c)| match g {
                GroupElement::Lattice(v) => (v.clone(), *c),
                GroupElement::Finite(_) => unreachable!("checked on insertion"),
            })
            .collect();

        // Recentre each axis; |p| is unchanged by a monomial factor.
        let mut centre = vec![0i64; d];
        let mut degree = 0i64;
        for (axis, c) in centre.iter_mut().enumerate() {
            let lo = points.iter().map(|(g, _)| g[axis]).min().unwrap();
            let hi = points.iter().map(|(g, _)| g[axis]).max().unwrap();
            *c = lo + (hi - lo) / 2;
            degree = degree.max((hi - lo + 1) / 2);
        }
        let n = degree as usize;
        let m = (16usize).max(grid_factor as usize * n).next_power_of_two();
        let slack = d as f64 * PI * n as f64 / m as f64;
        if slack >= 1.0 {
            return Err(Error::Parameter(format!(
                "grid factor {grid_factor} too small for degree {n} in dimension {d}"
            )));
        }
        let total = m
            .checked_pow(d as u32)
            .filter(|&t| t <= MAX_GRID_POINTS)
            .ok_or_else(|| Error::Parameter(format!("torus grid {m}^{d} exceeds {MAX_GRID_POINTS} points")))?;

        let mi = m as i64;
        let shifted: Vec<(Vec<i64>, C64)> = points
            .iter()
            .map(|(g, c)| (g.iter().zip(&centre).map(|(a, b)| (a - b).rem_euclid(mi)).collect(), *c))
            .collect();
        let table: Vec<(f64, f64)> = (0..m)
            .map(|j| {
                let t = TAU * j as f64 / m as f64;
                (t.cos(), t.sin())
            })
            .collect();
        let levels = m.trailing_zeros() as usize + 1;

        // level_max[j] = max |p| over points whose coordinates are all
        // divisible by exactly 2^j (capped at the coarsest level).
        let level_max = (0..total)
            .into_par_iter()
            .fold(
                || vec![0.0f64; levels],
                |mut acc, flat| {
                    let mut k = vec![0usize; d];
                    let mut rest = flat;
                    for slot in k.iter_mut().rev() {
                        *slot = rest % m;
                        rest /= m;
                    }
                    let mut s = C64::new(0.0, 0.0);
                    for (g, c) in &shifted {
                        let mut idx = 0usize;
                        for (ga, ka) in g.iter().zip(&k) {
                            idx = (idx + (*ga as usize) * ka) % m;
                        }
                        let (co, si) = table[idx];
                        s += c * C64::new(co, si);
                    }
                    let lvl = k
                        .iter()
                        .map(|&ka| if ka == 0 { levels - 1 } else { ka.trailing_zeros() as usize })
                        .min()
                        .unwrap()
                        .min(levels - 1);
                    acc[lvl] = acc[lvl].max(s.norm());
                    acc
                },
            )
            .reduce(
                || vec![0.0f64; levels],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x = x.max(y);
                    }
                    a
                },
            );

        // Suffix maxima give the grid maximum of each dyadic subgrid.
        let mut sub = level_max.clone();
        for j in (0..levels - 1).rev() {
            sub[j] = sub[j].max(sub[j + 1]);
        }
        let lower = sub[0];
        let mut upper = f64::INFINITY;
        for (j, &lo_j) in sub.iter().enumerate() {
            let slack_j = d as f64 * PI * n as f64 / (m >> j) as f64;
            if slack_j < 1.0 {
                upper = upper.min(lo_j / (1.0 - slack_j));
            }
        }
        Ok(NormEnclosure { lower, upper: upper.max(lower) })
    }

    /// `[{"element": .., "re": .., "im": ..}, ...]`.
    pub fn to_json(&self) -> Value {
        let list: Vec<CoeffJson> =
            self.coeffs.iter().map(|(g, c)| CoeffJson { element: g.to_json(), re: c.re, im: c.im }).collect();
        serde_json::to_value(list).expect("plain data serializes")
    }

    pub fn from_json(group: &Group, v: &Value) -> Result<Self> {
        let list: Vec<CoeffJson> = serde_json::from_value(v.clone())?;
        let pairs = list
            .into_iter()
            .map(|c| Ok((group.parse_element(&c.element)?, C64::new(c.re, c.im))))
            .collect::<Result<Vec<_>>>()?;
        GroupAlgebraElement::from_coeffs(group, pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn z() -> Group {
        Group::lattice(1).unwrap()
    }

    fn d(v: i64) -> GroupAlgebraElement {
        GroupAlgebraElement::delta(&z(), &GroupElement::int(v)).unwrap()
    }

    fn re(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn random_z(rng: &mut ChaCha8Rng, radius: i64) -> GroupAlgebraElement {
        let mut pairs = Vec::new();
        for g in -radius..=radius {
            if rng.gen_bool(0.6) {
                pairs.push((GroupElement::int(g), C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
            }
        }
        GroupAlgebraElement::from_coeffs(&z(), pairs).unwrap()
    }

    /// Brute-force supremum of |p| on a very fine grid, for oracle comparison.
    fn fine_sup(a: &GroupAlgebraElement, samples: usize) -> f64 {
        (0..samples)
            .map(|k| {
                let t = TAU * k as f64 / samples as f64;
                a.terms()
                    .map(|(g, c)| match g {
                        GroupElement::Lattice(v) => c * C64::from_polar(1.0, v[0] as f64 * t),
                        _ => unreachable!(),
                    })
                    .sum::<C64>()
                    .norm()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn delta_examples() {
        let g = z();
        let unit = GroupAlgebraElement::delta(&g, &g.identity()).unwrap();
        let a = d(1).checked_add(&d(-4).scale(re(2.0))).unwrap();
        assert_eq!(a.convolve(&unit).unwrap(), a);
        assert_eq!(d(1).convolve(&d(1)).unwrap(), d(2));
        assert_eq!(d(3).involute(), d(-3));
    }

    #[test]
    fn convolution_examples() {
        let a = d(1).checked_add(&d(-1)).unwrap();
        let sq = a.convolve(&a).unwrap();
        let expected = d(2).checked_add(&d(0).scale(re(2.0))).unwrap().checked_add(&d(-2)).unwrap();
        assert_eq!(sq, expected);

        let z5 = Group::cyclic(5).unwrap();
        let x = GroupAlgebraElement::delta(&z5, &GroupElement::Finite(3)).unwrap();
        let y = GroupAlgebraElement::delta(&z5, &GroupElement::Finite(4)).unwrap();
        assert_eq!(x.convolve(&y).unwrap(), GroupAlgebraElement::delta(&z5, &GroupElement::Finite(2)).unwrap());
        assert!(matches!(x.convolve(&d(1)), Err(Error::Shape(_))));
    }

    #[test]
    fn convolution_in_nonabelian_group_is_ordered() {
        let s3 = Group::symmetric3();
        let els = s3.elements().unwrap();
        let mut found = false;
        for a in &els {
            for b in &els {
                let x = GroupAlgebraElement::delta(&s3, a).unwrap();
                let y = GroupAlgebraElement::delta(&s3, b).unwrap();
                let xy = x.convolve(&y).unwrap();
                assert_eq!(xy, GroupAlgebraElement::delta(&s3, &s3.mul(a, b).unwrap()).unwrap());
                found |= xy != y.convolve(&x).unwrap();
            }
        }
        assert!(found);
    }

    #[test]
    fn involution_examples() {
        let i0 = d(0).scale(C64::new(0.0, 1.0));
        assert_eq!(i0.involute(), d(0).scale(C64::new(0.0, -1.0)));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let a = random_z(&mut rng, 6);
            assert_eq!(a.involute().involute(), a);
            let n = a.reduced_norm(64).unwrap();
            let m = a.involute().reduced_norm(64).unwrap();
            assert!(n.overlaps(&m, 1e-12));
        }
    }

    #[test]
    fn pruning() {
        let a = GroupAlgebraElement::from_coeffs(
            &z(),
            vec![(GroupElement::int(1), re(1e-17)), (GroupElement::int(2), re(1.0))],
        )
        .unwrap();
        assert_eq!(a.support_len(), 1);
        let b = d(1).checked_sub(&d(1)).unwrap();
        assert!(b.is_zero());
    }

    #[test]
    fn norm_examples() {
        for s in [-3, 0, 7] {
            let n = d(s).reduced_norm(64).unwrap();
            assert!((n.lower - 1.0).abs() < 1e-9 && (n.upper - 1.0).abs() < 1e-9);
        }
        let n = d(1).checked_add(&d(-1)).unwrap().reduced_norm(64).unwrap();
        assert!(n.contains(2.0, 1e-12));
        assert!((n.lower - 2.0).abs() < 1e-12, "grid hits θ = 0");

        let z5 = Group::cyclic(5).unwrap();
        let all = GroupAlgebraElement::from_coeffs(&z5, (0..5).map(|g| (GroupElement::Finite(g), re(1.0)))).unwrap();
        let n = all.reduced_norm(64).unwrap();
        assert!((n.lower - 5.0).abs() < 1e-9 && n.width() == 0.0);
    }

    #[test]
    fn distance_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_z(&mut rng, 4);
        let n = GroupAlgebraElement::distance(&a, &a, 64).unwrap();
        assert!(n.upper.abs() < 1e-12);
        let n = GroupAlgebraElement::distance(&d(1), &d(1).scale(re(2.0 / 3.0)), 64).unwrap();
        assert!(n.contains(1.0 / 3.0, 1e-12));
        let n = GroupAlgebraElement::distance(&d(1), &d(2), 64).unwrap();
        assert!(n.contains(2.0, 1e-12));
        // sup |e^{iθ} - e^{2iθ}| = 2, attained at θ = π, on the grid
        assert!((n.lower - 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_factor_too_small() {
        let a = d(0).checked_add(&d(40)).unwrap();
        assert!(matches!(a.reduced_norm(1), Err(Error::Parameter(_))));
        assert!(a.reduced_norm(4).is_ok());
    }

    #[test]
    fn enclosure_contains_fine_sup() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..40 {
            let a = random_z(&mut rng, 8);
            let n = a.reduced_norm(16).unwrap();
            let s = fine_sup(&a, 1 << 14);
            assert!(n.lower <= s + 1e-12 && s <= n.upper + 1e-12, "{n:?} vs {s}");
            assert!(n.upper / n.lower <= 1.0 / (1.0 - PI * 8.0 / 128.0) + 1e-12);
        }
    }

    #[test]
    fn c_star_identity_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let a = random_z(&mut rng, 5);
            if a.is_zero() {
                continue;
            }
            let n = a.reduced_norm(64).unwrap();
            let sq = NormEnclosure { lower: n.lower * n.lower, upper: n.upper * n.upper };
            let nn = a.involute().convolve(&a).unwrap().reduced_norm(64).unwrap();
            assert!(sq.overlaps(&nn, 1e-6), "{sq:?} {nn:?}");
        }
    }

    #[test]
    fn submultiplicativity_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let a = random_z(&mut rng, 5);
            let b = random_z(&mut rng, 5);
            let ab = a.convolve(&b).unwrap().reduced_norm(64).unwrap();
            let (na, nb) = (a.reduced_norm(64).unwrap(), b.reduced_norm(64).unwrap());
            assert!(ab.upper <= na.upper * nb.upper * (1.0 + 1e-9));
        }
    }

    #[test]
    fn finite_route_matches_roots_of_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for n in [2usize, 3, 5, 8] {
            let g = Group::cyclic(n).unwrap();
            for _ in 0..10 {
                let c: Vec<C64> =
                    (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
                let a = GroupAlgebraElement::from_coeffs(
                    &g,
                    c.iter().enumerate().map(|(i, v)| (GroupElement::Finite(i), *v)),
                )
                .unwrap();
                let oracle = (0..n)
                    .map(|k| {
                        c.iter()
                            .enumerate()
                            .map(|(j, v)| v * C64::from_polar(1.0, TAU * (j * k) as f64 / n as f64))
                            .sum::<C64>()
                            .norm()
                    })
                    .fold(0.0, f64::max);
                let e = a.reduced_norm(64).unwrap();
                assert!((e.lower - oracle).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn grid_refinement_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let a = random_z(&mut rng, 9);
            let mut prev = a.reduced_norm(4).unwrap();
            for gf in [8, 16, 32, 64, 128] {
                let next = a.reduced_norm(gf).unwrap();
                assert!(next.lower >= prev.lower, "{prev:?} -> {next:?}");
                assert!(next.upper <= prev.upper, "{prev:?} -> {next:?}");
                prev = next;
            }
        }
    }

    #[test]
    fn two_dimensional_norm() {
        let g = Group::lattice(2).unwrap();
        // λ_(1,0) + λ_(0,1): sup |e^{iθ1} + e^{iθ2}| = 2
        let a = GroupAlgebraElement::from_coeffs(
            &g,
            vec![(GroupElement::Lattice(vec![1, 0]), re(1.0)), (GroupElement::Lattice(vec![0, 1]), re(1.0))],
        )
        .unwrap();
        let n = a.reduced_norm(64).unwrap();
        assert!(n.contains(2.0, 1e-12));
    }

    #[test]
    fn json_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_z(&mut rng, 4);
        let back = GroupAlgebraElement::from_json(&z(), &a.to_json()).unwrap();
        assert_eq!(a, back);
    }
}
