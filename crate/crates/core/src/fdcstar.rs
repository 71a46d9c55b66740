//! Finite-dimensional C*-algebras `M_{d_1} ⊕ ... ⊕ M_{d_k}` and their
//! elements.
//!
//! Elements are stored densely, one complex matrix per block. The vectorized
//! form used by linear maps concatenates the blocks in order, each block in
//! row-major order, so the basis is the list of matrix units `e^{(b)}_{ij}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// A direct sum of full matrix algebras.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FiniteDimCstar {
    block_dims: Vec<usize>,
}

impl FiniteDimCstar {
    pub fn new(block_dims: Vec<usize>) -> Result<Self> {
        if block_dims.is_empty() || block_dims.contains(&0) {
            return Err(Error::Parameter(format!(
                "block dimensions must be a nonempty list of positive integers, got {block_dims:?}"
            )));
        }
        Ok(FiniteDimCstar { block_dims })
    }

    /// The full matrix algebra `M_d`.
    pub fn matrix(d: usize) -> Result<Self> {
        FiniteDimCstar::new(vec![d])
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    pub fn num_blocks(&self) -> usize {
        self.block_dims.len()
    }

    /// `Σ d_i²`, the vector-space dimension.
    pub fn dim(&self) -> usize {
        self.block_dims.iter().map(|d| d * d).sum()
    }

    /// Offset of block `b` in the vectorized basis.
    pub fn block_offset(&self, b: usize) -> usize {
        self.block_dims[..b].iter().map(|d| d * d).sum()
    }

    /// Splits a flat basis index into `(block, row, col)`.
    pub fn unit_coords(&self, mut idx: usize) -> (usize, usize, usize) {
        for (b, &d) in self.block_dims.iter().enumerate() {
            if idx < d * d {
                return (b, idx / d, idx % d);
            }
            idx -= d * d;
        }
        panic!("basis index out of range")
    }

    /// `M_r(A)`, realized as `⊕ M_{r d_i}`.
    pub fn amplify(&self, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::Parameter("amplification degree must be at least 1".into()));
        }
        FiniteDimCstar::new(self.block_dims.iter().map(|d| r * d).collect())
    }

    pub fn describe(&self) -> String {
        self.block_dims
            .iter()
            .map(|d| if *d == 1 { "C".to_string() } else { format!("M_{d}") })
            .collect::<Vec<_>>()
            .join(" ⊕ ")
    }
}

/// An element of a [`FiniteDimCstar`].
#[derive(Clone, Debug, PartialEq)]
pub struct AlgElement {
    algebra: FiniteDimCstar,
    blocks: Vec<DMatrix<C64>>,
}

impl AlgElement {
    pub fn zero(algebra: &FiniteDimCstar) -> Self {
        let blocks = algebra.block_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
        AlgElement { algebra: algebra.clone(), blocks }
    }

    pub fn unit(algebra: &FiniteDimCstar) -> Self {
        let blocks = algebra.block_dims.iter().map(|&d| DMatrix::identity(d, d)).collect();
        AlgElement { algebra: algebra.clone(), blocks }
    }

    /// The matrix unit `e_{ij}` of block `block`.
    pub fn matrix_unit(algebra: &FiniteDimCstar, block: usize, i: usize, j: usize) -> Result<Self> {
        let d = *algebra.block_dims.get(block).ok_or_else(|| Error::Shape(format!("block {block} out of range")))?;
        if i >= d || j >= d {
            return Err(Error::Shape(format!("matrix unit ({i},{j}) outside M_{d}")));
        }
        let mut x = AlgElement::zero(algebra);
        x.blocks[block][(i, j)] = C64::new(1.0, 0.0);
        Ok(x)
    }

    pub fn from_blocks(algebra: &FiniteDimCstar, blocks: Vec<DMatrix<C64>>) -> Result<Self> {
        if blocks.len() != algebra.num_blocks() {
            return Err(Error::Shape(format!("expected {} blocks, got {}", algebra.num_blocks(), blocks.len())));
        }
        for (b, (m, &d)) in blocks.iter().zip(&algebra.block_dims).enumerate() {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Shape(format!("block {b} is {}x{}, expected {d}x{d}", m.nrows(), m.ncols())));
            }
        }
        Ok(AlgElement { algebra: algebra.clone(), blocks })
    }

    /// Rebuilds an element from its coordinates in the matrix-unit basis.
    pub fn from_vec(algebra: &FiniteDimCstar, v: &[C64]) -> Result<Self> {
        if v.len() != algebra.dim() {
            return Err(Error::Shape(format!(
                "vector of length {} for algebra of dimension {}",
                v.len(),
                algebra.dim()
            )));
        }
        let mut offset = 0;
        let blocks = algebra
            .block_dims
            .iter()
            .map(|&d| {
                let m = DMatrix::from_row_slice(d, d, &v[offset..offset + d * d]);
                offset += d * d;
                m
            })
            .collect();
        Ok(AlgElement { algebra: algebra.clone(), blocks })
    }

    pub fn to_vec(&self) -> Vec<C64> {
        let mut v = Vec::with_capacity(self.algebra.dim());
        for m in &self.blocks {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    v.push(m[(i, j)]);
                }
            }
        }
        v
    }

    pub fn algebra(&self) -> &FiniteDimCstar {
        &self.algebra
    }

    pub fn blocks(&self) -> &[DMatrix<C64>] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &DMatrix<C64> {
        &self.blocks[b]
    }

    pub(crate) fn blocks_mut(&mut self) -> &mut [DMatrix<C64>] {
        &mut self.blocks
    }

    fn same_algebra(&self, other: &AlgElement) -> Result<()> {
        if self.algebra != other.algebra {
            return Err(Error::Shape(format!(
                "algebra mismatch: {} vs {}",
                self.algebra.describe(),
                other.algebra.describe()
            )));
        }
        Ok(())
    }

    fn zip_blocks(&self, other: &AlgElement, f: impl Fn(&DMatrix<C64>, &DMatrix<C64>) -> DMatrix<C64>) -> Result<Self> {
        self.same_algebra(other)?;
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| f(a, b)).collect();
        Ok(AlgElement { algebra: self.algebra.clone(), blocks })
    }

    pub fn checked_add(&self, other: &AlgElement) -> Result<Self> {
        self.zip_blocks(other, |a, b| a + b)
    }

    pub fn checked_sub(&self, other: &AlgElement) -> Result<Self> {
        self.zip_blocks(other, |a, b| a - b)
    }

    pub fn checked_mul(&self, other: &AlgElement) -> Result<Self> {
        self.zip_blocks(other, |a, b| a * b)
    }

    pub fn scale(&self, c: C64) -> Self {
        AlgElement { algebra: self.algebra.clone(), blocks: self.blocks.iter().map(|m| m * c).collect() }
    }

    pub fn adjoint(&self) -> Self {
        AlgElement { algebra: self.algebra.clone(), blocks: self.blocks.iter().map(|m| m.adjoint()).collect() }
    }

    /// The C*-norm: the largest singular value over all blocks.
    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(spectral_norm).fold(0.0, f64::max)
    }

    /// Largest entry modulus over all blocks.
    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().flat_map(|m| m.iter()).map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_self_adjoint(&self, tol: f64) -> bool {
        self.blocks.iter().all(|m| spectral_norm(&(m - m.adjoint())) <= tol)
    }

    /// `x ≥ 0` up to `tol`: `‖x - x*‖ ≤ tol` and every eigenvalue of the
    /// Hermitian part is at least `-tol`.
    pub fn is_positive(&self, tol: f64) -> bool {
        if !self.is_self_adjoint(tol) {
            return false;
        }
        self.min_eigenvalue() >= -tol
    }

    /// Smallest eigenvalue of the Hermitian part `(x + x*)/2` over all blocks.
    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|m| {
                let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
                h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// The element `pattern ⊗ x` of `M_r(A)`, where `pattern` is `r × r`.
    pub fn amplify_pattern(&self, pattern: &DMatrix<C64>) -> Result<Self> {
        let r = pattern.nrows();
        if r == 0 || pattern.ncols() != r {
            return Err(Error::Shape("amplification pattern must be a nonempty square matrix".into()));
        }
        let algebra = self.algebra.amplify(r)?;
        let blocks = self.blocks.iter().map(|m| pattern.kronecker(m)).collect();
        Ok(AlgElement { algebra, blocks })
    }

    /// `diag(x, ..., x)` in `M_r(A)`.
    pub fn diag_r(&self, r: usize) -> Result<Self> {
        self.amplify_pattern(&DMatrix::identity(r, r))
    }

    /// Assembles an element of `M_r(A)` from an `r × r` array of elements of `A`.
    pub fn from_array(algebra: &FiniteDimCstar, entries: &[Vec<AlgElement>]) -> Result<Self> {
        let r = entries.len();
        if r == 0 || entries.iter().any(|row| row.len() != r) {
            return Err(Error::Shape("entries must form a nonempty square array".into()));
        }
        let big = algebra.amplify(r)?;
        let mut out = AlgElement::zero(&big);
        for (a, row) in entries.iter().enumerate() {
            for (c, x) in row.iter().enumerate() {
                if x.algebra != *algebra {
                    return Err(Error::Shape(format!("entry ({a},{c}) lives in the wrong algebra")));
                }
                for (b, &d) in algebra.block_dims.iter().enumerate() {
                    out.blocks[b].view_mut((a * d, c * d), (d, d)).copy_from(&x.blocks[b]);
                }
            }
        }
        Ok(out)
    }

    /// The `(a, c)` entry of an element of `M_r(A)`, as an element of `A`.
    pub fn array_entry(&self, base: &FiniteDimCstar, r: usize, a: usize, c: usize) -> Result<AlgElement> {
        if self.algebra != base.amplify(r)? || a >= r || c >= r {
            return Err(Error::Shape("element is not in the requested amplification".into()));
        }
        let blocks = base
            .block_dims
            .iter()
            .enumerate()
            .map(|(b, &d)| self.blocks[b].view((a * d, c * d), (d, d)).into_owned())
            .collect();
        Ok(AlgElement { algebra: base.clone(), blocks })
    }

    pub fn to_json(&self) -> AlgElementJson {
        AlgElementJson {
            block_dims: self.algebra.block_dims.clone(),
            blocks: self.blocks.iter().map(MatrixJson::from_matrix).collect(),
        }
    }

    pub fn from_json(json: &AlgElementJson) -> Result<Self> {
        let algebra = FiniteDimCstar::new(json.block_dims.clone())?;
        let blocks = json.blocks.iter().map(MatrixJson::to_matrix).collect::<Result<_>>()?;
        AlgElement::from_blocks(&algebra, blocks)
    }
}

/// Largest singular value of a square matrix. Exactly Hermitian input takes
/// the eigenvalue path.
pub fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].norm();
    }
    if is_exactly_hermitian(m) {
        m.clone().symmetric_eigenvalues().iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
    } else {
        m.clone().singular_values().iter().copied().fold(0.0, f64::max)
    }
}

fn is_exactly_hermitian(m: &DMatrix<C64>) -> bool {
    let n = m.nrows();
    if n != m.ncols() {
        return false;
    }
    for i in 0..n {
        for j in i..n {
            if m[(i, j)] != m[(j, i)].conj() {
                return false;
            }
        }
    }
    true
}

/// Real/imaginary nested-array form of a complex matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &DMatrix<C64>) -> Self {
        let rows =
            |f: fn(&C64) -> f64| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect();
        MatrixJson { re: rows(|z| z.re), im: rows(|z| z.im) }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<C64>> {
        let nrows = self.re.len();
        let ncols = self.re.first().map_or(0, Vec::len);
        let rect = |a: &Vec<Vec<f64>>| a.len() == nrows && a.iter().all(|r| r.len() == ncols);
        if !rect(&self.re) || !rect(&self.im) {
            return Err(Error::Shape("re/im arrays must be rectangular and of equal shape".into()));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| C64::new(self.re[i][j], self.im[i][j])))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgElementJson {
    pub block_dims: Vec<usize>,
    pub blocks: Vec<MatrixJson>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_element(alg: &FiniteDimCstar, rng: &mut ChaCha8Rng) -> AlgElement {
        let v: Vec<C64> =
            (0..alg.dim()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        AlgElement::from_vec(alg, &v).unwrap()
    }

    #[test]
    fn matrix_unit_calculus() {
        let a = FiniteDimCstar::matrix(3).unwrap();
        let e01 = AlgElement::matrix_unit(&a, 0, 0, 1).unwrap();
        let e12 = AlgElement::matrix_unit(&a, 0, 1, 2).unwrap();
        let e02 = AlgElement::matrix_unit(&a, 0, 0, 2).unwrap();
        assert_eq!(e01.checked_mul(&e12).unwrap(), e02);
        assert_eq!(e01.adjoint(), AlgElement::matrix_unit(&a, 0, 1, 0).unwrap());
        let u = AlgElement::unit(&a);
        assert_eq!(u.checked_mul(&e12).unwrap(), e12);
    }

    #[test]
    fn algebra_mismatch_is_shape_error() {
        let a = AlgElement::unit(&FiniteDimCstar::matrix(2).unwrap());
        let b = AlgElement::unit(&FiniteDimCstar::matrix(3).unwrap());
        assert!(matches!(a.checked_add(&b), Err(Error::Shape(_))));
    }

    #[test]
    fn norm_examples() {
        let a = FiniteDimCstar::new(vec![3, 2]).unwrap();
        assert!((AlgElement::unit(&a).norm() - 1.0).abs() < 1e-12);
        // e_{0,-1} + e_{1,0} on F = {-1, 0, 1}: positions 1->0 and 2->1.
        let m = FiniteDimCstar::matrix(3).unwrap();
        let x = AlgElement::matrix_unit(&m, 0, 1, 0)
            .unwrap()
            .checked_add(&AlgElement::matrix_unit(&m, 0, 2, 1).unwrap())
            .unwrap();
        assert!((x.norm() - 1.0).abs() < 1e-12);
        let two = FiniteDimCstar::matrix(2).unwrap();
        let d = AlgElement::from_blocks(
            &two,
            vec![DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(2.0, 0.0), C64::new(-3.0, 0.0)]))],
        )
        .unwrap();
        assert!((d.norm() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn positivity_examples() {
        let a = FiniteDimCstar::new(vec![3, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_element(&a, &mut rng);
        assert!(x.adjoint().checked_mul(&x).unwrap().is_positive(1e-10));
        assert!(!AlgElement::unit(&a).scale(C64::new(-1.0, 0.0)).is_positive(1e-10));
        assert!(!AlgElement::matrix_unit(&a, 0, 0, 1).unwrap().is_positive(1e-10));
    }

    #[test]
    fn amplification_examples() {
        let m3 = FiniteDimCstar::matrix(3).unwrap();
        assert_eq!(m3.amplify(2).unwrap(), FiniteDimCstar::matrix(6).unwrap());
        assert!(m3.amplify(0).is_err());
        assert_eq!(AlgElement::unit(&m3).diag_r(2).unwrap(), AlgElement::unit(&m3.amplify(2).unwrap()));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = FiniteDimCstar::new(vec![2, 3]).unwrap();
        let x = random_element(&a, &mut rng);
        let d = x.diag_r(2).unwrap();
        assert!((d.norm() - x.norm()).abs() < 1e-12);
        let zero = AlgElement::zero(&a);
        let arr = AlgElement::from_array(&a, &[vec![x.clone(), zero.clone()], vec![zero, x.clone()]]).unwrap();
        assert_eq!(arr, d);
        assert_eq!(arr.array_entry(&a, 2, 1, 1).unwrap(), x);
    }

    #[test]
    fn vec_roundtrip_and_json() {
        let a = FiniteDimCstar::new(vec![1, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_element(&a, &mut rng);
        assert_eq!(AlgElement::from_vec(&a, &x.to_vec()).unwrap(), x);
        let json = serde_json::to_string(&x.to_json()).unwrap();
        let back: AlgElementJson = serde_json::from_str(&json).unwrap();
        assert_eq!(AlgElement::from_json(&back).unwrap(), x);
    }

    #[test]
    fn cstar_identity_and_submultiplicativity_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let algebras = [
            FiniteDimCstar::new(vec![1, 2]).unwrap(),
            FiniteDimCstar::new(vec![3]).unwrap(),
            FiniteDimCstar::new(vec![4, 1, 2]).unwrap(),
        ];
        for t in 0..500 {
            let a = &algebras[t % algebras.len()];
            let x = random_element(a, &mut rng);
            let y = random_element(a, &mut rng);
            let nx = x.norm();
            let xsx = x.adjoint().checked_mul(&x).unwrap().norm();
            assert!((xsx - nx * nx).abs() <= 1e-9 * (1.0 + nx * nx), "trial {t}");
            let xy = x.checked_mul(&y).unwrap().norm();
            assert!(xy <= nx * y.norm() + 1e-9, "trial {t}");
            assert!((x.adjoint().norm() - nx).abs() <= 1e-12 * (1.0 + nx));
        }
    }

    proptest! {
        #[test]
        fn adjoint_is_involutive(seed in any::<u64>()) {
            let a = FiniteDimCstar::new(vec![2, 3]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_element(&a, &mut rng);
            prop_assert_eq!(x.adjoint().adjoint(), x);
        }

        #[test]
        fn positivity_survives_amplification(seed in any::<u64>(), r in 1usize..4) {
            let a = FiniteDimCstar::new(vec![2, 1]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_element(&a, &mut rng);
            let p = x.adjoint().checked_mul(&x).unwrap();
            prop_assert!(p.is_positive(1e-10));
            prop_assert!(p.diag_r(r).unwrap().is_positive(1e-10));
        }
    }
}
