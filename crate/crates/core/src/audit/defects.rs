//! Finite-stage defect functionals.
//!
//! Every function evaluates one displayed inequality at one stage tuple and
//! returns the left-hand side (or, for the one-sided C*-norm condition, the
//! signed difference of both sides). Elements live in the stage-`k` algebra,
//! or in its `r`-fold amplification where an `r` is taken.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fdcstar::AlgElement;
use crate::folner_system::{ApproximationSystem, CpcSystem};
use crate::groupalg::GroupAlgebraElement;

fn ordered(sysc: &CpcSystem, stages: &[usize]) -> Result<()> {
    if stages.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Parameter(format!("stages {stages:?} are not ordered")));
    }
    sysc.algebra(*stages.last().unwrap())?;
    Ok(())
}

fn strictly(stages: &[usize]) -> Result<()> {
    if stages.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter(format!("stages {stages:?} are not strictly increasing")));
    }
    Ok(())
}

fn in_stage(sysc: &CpcSystem, k: usize, r: usize, x: &AlgElement) -> Result<()> {
    let expected = sysc.algebra(k)?.amplify(r)?;
    if x.algebra() != &expected {
        return Err(Error::Shape(format!(
            "element of {} is not in stage {k}{}",
            x.algebra().describe(),
            if r > 1 { format!(" amplified {r} times") } else { String::new() }
        )));
    }
    Ok(())
}

/// `rho_{n,k}(x) rho_{n,k}(y)` in stage `n`.
fn product_at(sysc: &CpcSystem, k: usize, n: usize, x: &AlgElement, y: &AlgElement) -> Result<AlgElement> {
    let rho = sysc.rho(n, k)?;
    rho.apply(x)?.checked_mul(&rho.apply(y)?)
}

/// `‖rho_{m,n}(rho_{n,k}(x) rho_{n,k}(y)) - rho_{m,j}(rho_{j,k}(x) rho_{j,k}(y))‖`
/// for `k ≤ j < n < m`.
pub fn defect_stinespring(
    sysc: &CpcSystem,
    k: usize,
    x: &AlgElement,
    y: &AlgElement,
    j: usize,
    n: usize,
    m: usize,
) -> Result<f64> {
    ordered(sysc, &[k, j])?;
    strictly(&[j, n, m])?;
    ordered(sysc, &[j, n, m])?;
    in_stage(sysc, k, 1, x)?;
    in_stage(sysc, k, 1, y)?;
    let a = sysc.rho(m, n)?.apply(&product_at(sysc, k, n, x, y)?)?;
    let b = sysc.rho(m, j)?.apply(&product_at(sysc, k, j, x, y)?)?;
    Ok(a.checked_sub(&b)?.norm())
}

/// `‖rho_{m,n}(rho_{n,j}(x_j y_j) z_n) - rho_{m,n}(x_n rho_{n,j}(y_j z_j))‖`
/// with `w_i = rho_{i,k}(w)`, for `k ≤ j < n < m`.
#[allow(clippy::too_many_arguments)]
pub fn defect_associativity(
    sysc: &CpcSystem,
    k: usize,
    x: &AlgElement,
    y: &AlgElement,
    z: &AlgElement,
    j: usize,
    n: usize,
    m: usize,
) -> Result<f64> {
    ordered(sysc, &[k, j])?;
    strictly(&[j, n, m])?;
    ordered(sysc, &[j, n, m])?;
    for w in [x, y, z] {
        in_stage(sysc, k, 1, w)?;
    }
    let (rho_nj, rho_nk, rho_mn) = (sysc.rho(n, j)?, sysc.rho(n, k)?, sysc.rho(m, n)?);
    let left = rho_nj.apply(&product_at(sysc, k, j, x, y)?)?.checked_mul(&rho_nk.apply(z)?)?;
    let right = rho_nk.apply(x)?.checked_mul(&rho_nj.apply(&product_at(sysc, k, j, y, z)?)?)?;
    Ok(rho_mn.apply(&left)?.checked_sub(&rho_mn.apply(&right)?)?.norm())
}

/// `(lhs, rhs) = (‖rho^{(r)}_{m,n}(x_n^* x_n)‖, ‖rho^{(r)}_{m,k}(x)‖²)` with
/// `x_n = rho^{(r)}_{n,k}(x)`.
fn cstar_terms(sysc: &CpcSystem, k: usize, x: &AlgElement, r: usize, n: usize, m: usize) -> Result<(f64, f64)> {
    if r == 0 {
        return Err(Error::Parameter("amplification degree r must be at least 1".into()));
    }
    ordered(sysc, &[k, n])?;
    strictly(&[n, m])?;
    ordered(sysc, &[n, m])?;
    in_stage(sysc, k, r, x)?;
    let xn = sysc.rho(n, k)?.amplify(r)?.apply(x)?;
    let lhs = sysc.rho(m, n)?.amplify(r)?.apply(&xn.adjoint().checked_mul(&xn)?)?.norm();
    let top = sysc.rho(m, k)?.amplify(r)?.apply(x)?.norm();
    Ok((lhs, top * top))
}

/// Signed `‖rho^{(r)}_{m,n}(x_n^* x_n)‖ - ‖rho^{(r)}_{m,k}(x)‖²`; the
/// one-sided condition holds at tolerance `ε` iff the value is below `ε`.
pub fn defect_cstar_identity(sysc: &CpcSystem, k: usize, x: &AlgElement, r: usize, n: usize, m: usize) -> Result<f64> {
    let (lhs, rhs) = cstar_terms(sysc, k, x, r, n, m)?;
    Ok(lhs - rhs)
}

/// Two-sided version: `|‖rho^{(r)}_{m,n}(x_n^* x_n)‖ - ‖rho^{(r)}_{m,k}(x)‖²|`.
pub fn norm_limit_check(sysc: &CpcSystem, k: usize, x: &AlgElement, r: usize, n: usize, m: usize) -> Result<f64> {
    let (lhs, rhs) = cstar_terms(sysc, k, x, r, n, m)?;
    Ok((lhs - rhs).abs())
}

/// `‖rho_{m,n}(rho_{n,k}(x) rho_{n,k}(y)) - rho_{m,k}(x) rho_{m,k}(y)‖` for
/// `k ≤ n < m`.
pub fn defect_multiplicative(
    sysc: &CpcSystem,
    k: usize,
    x: &AlgElement,
    y: &AlgElement,
    n: usize,
    m: usize,
) -> Result<f64> {
    ordered(sysc, &[k, n])?;
    strictly(&[n, m])?;
    ordered(sysc, &[n, m])?;
    in_stage(sysc, k, 1, x)?;
    in_stage(sysc, k, 1, y)?;
    let a = sysc.rho(m, n)?.apply(&product_at(sysc, k, n, x, y)?)?;
    let b = product_at(sysc, k, m, x, y)?;
    Ok(a.checked_sub(&b)?.norm())
}

/// `‖psi_n(a b) - psi_n(a) psi_n(b)‖`.
pub fn psi_mult_defect(
    sys: &ApproximationSystem,
    n: usize,
    a: &GroupAlgebraElement,
    b: &GroupAlgebraElement,
) -> Result<f64> {
    let ab = sys.psi(n, &a.convolve(b)?)?;
    let prod = sys.psi(n, a)?.checked_mul(&sys.psi(n, b)?)?;
    Ok(ab.checked_sub(&prod)?.norm())
}

/// One evaluated stage tuple.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct DefectValue {
    pub j: usize,
    pub n: usize,
    pub m: usize,
    pub value: f64,
}

/// Stage-`m` representative of the limit product together with the
/// convergence diagnostic along the schedule.
#[derive(Clone, Debug)]
pub struct BulletProduct {
    pub n: usize,
    pub m: usize,
    pub representative: AlgElement,
    pub diagnostics: Vec<DefectValue>,
}

/// `rho_{m,n}(rho_{n,k}(x) rho_{n,k}(y))` at the last schedule tuple, with
/// [`defect_stinespring`] evaluated at every tuple.
pub fn bullet_product(
    sysc: &CpcSystem,
    k: usize,
    x: &AlgElement,
    y: &AlgElement,
    schedule: &[(usize, usize, usize)],
) -> Result<BulletProduct> {
    let &(_, n, m) =
        schedule.last().ok_or_else(|| Error::Parameter("bullet product needs a nonempty schedule".into()))?;
    let representative = sysc.rho(m, n)?.apply(&product_at(sysc, k, n, x, y)?)?;
    let diagnostics = schedule
        .iter()
        .map(|&(j, n, m)| Ok(DefectValue { j, n, m, value: defect_stinespring(sysc, k, x, y, j, n, m)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(BulletProduct { n, m, representative, diagnostics })
}

/// `‖rho_{m,n}(rho_{n,k}(x) rho_{n,k}(y)) - psi_m(a_x a_y)‖` where `a_x`,
/// `a_y` are the stage-`n` approximations `phi_n(rho_{n,k}(·))` of the limit
/// elements.
#[allow(clippy::too_many_arguments)]
pub fn product_vs_oracle(
    sys: &ApproximationSystem,
    k: usize,
    x: &AlgElement,
    y: &AlgElement,
    n: usize,
    m: usize,
    grid_factor: u32,
) -> Result<f64> {
    if !(k <= n && n < m) {
        return Err(Error::Parameter(format!("product_vs_oracle needs k ≤ n < m, got ({k}, {n}, {m})")));
    }
    let ax = sys.a_limit(k, x, n, grid_factor)?.value;
    let ay = sys.a_limit(k, y, n, grid_factor)?.value;
    let oracle = sys.psi(m, &ax.convolve(&ay)?)?;
    let rho_nk = sys.rho(n, k)?;
    let prod = rho_nk.apply(x)?.checked_mul(&rho_nk.apply(y)?)?;
    let rep = sys.rho(m, n)?.apply(&prod)?;
    Ok(rep.checked_sub(&oracle)?.norm())
}

/// Outcome of [`stinespring_lemma_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StinespringCheck {
    pub eta: f64,
    pub lhs: f64,
    pub pass: bool,
}

/// Slack allowed when comparing `lhs` with `η‖b‖`, for the cases where both
/// vanish.
pub const STINESPRING_SLACK: f64 = 1e-12;

/// For self-adjoint `a`, takes `η = sqrt(3 max_i d_i)` with
/// `d_i = upper(‖phi_n psi_n(a^i) - a^i‖)`, `i ∈ {1, 2}`, and checks
/// `‖phi_n(psi_n(a) b) - phi_n(psi_n(a)) phi_n(b)‖ ≤ η ‖b‖`.
pub fn stinespring_lemma_check(
    sys: &ApproximationSystem,
    n: usize,
    a: &GroupAlgebraElement,
    b: &AlgElement,
    grid_factor: u32,
) -> Result<StinespringCheck> {
    let skew = GroupAlgebraElement::distance(a, &a.involute(), grid_factor)?.upper;
    if skew > 1e-12 {
        return Err(Error::Precondition(format!("a is not self-adjoint (‖a - a*‖ ≤ {skew:.3e})")));
    }
    let a2 = a.convolve(a)?;
    let mut d = 0.0f64;
    for p in [a, &a2] {
        let back = sys.phi(n, &sys.psi(n, p)?)?;
        d = d.max(GroupAlgebraElement::distance(&back, p, grid_factor)?.upper);
    }
    let eta = (3.0 * d).sqrt();
    let psi_a = sys.psi(n, a)?;
    let lhs_el = sys.phi(n, &psi_a.checked_mul(b)?)?;
    let rhs_el = sys.phi(n, &psi_a)?.convolve(&sys.phi(n, b)?)?;
    let lhs = GroupAlgebraElement::distance(&lhs_el, &rhs_el, grid_factor)?.upper;
    Ok(StinespringCheck { eta, lhs, pass: lhs <= eta * b.norm() + STINESPRING_SLACK })
}
