use nalgebra::{DMatrix, DVector};

use super::{guard, ChainState, EigenState, KnownPairs, RuleKind};
use crate::error::{Error, Result};

/// Principal-eigenpair rule:
///
/// ```text
/// ẇ = l⁻¹ (Cw - (wᵀCw) w) + ½ (wᵀw - 1) w
/// l̇ = wᵀCw - l wᵀw
/// ```
pub fn rhs_principal(c: &DMatrix<f64>, s: &EigenState) -> Result<EigenState> {
    let cw = c * &s.w;
    principal_from_cw(cw, s)
}

// Shared tail of every rule: takes the (possibly deflated) product `Cw`.
fn principal_from_cw(cw: DVector<f64>, s: &EigenState) -> Result<EigenState> {
    let l_inv = 1.0 / guard("l", s.l)?;
    let wcw = s.w.dot(&cw);
    let ww = s.w.dot(&s.w);
    let mut w_dot = (cw - &s.w * wcw) * l_inv;
    w_dot.axpy(0.5 * (ww - 1.0), &s.w, 1.0);
    Ok(EigenState::new(w_dot, wcw - s.l * ww))
}

/// Stage `p` of the deflation chain: the principal rule on
/// `C - Σ_{i<p} l_i w_i w_iᵀ`, expanded so the deflated matrix is never formed.
pub fn rhs_deflated(c: &DMatrix<f64>, chain: &ChainState, p: usize) -> Result<EigenState> {
    chain.check_stage(p)?;
    let s = chain.stage(p);
    let mut cw = c * &s.w;
    for i in 0..p - 1 {
        let wi = chain.w.column(i);
        cw.axpy(-chain.l[i] * wi.dot(&s.w), &wi, 1.0);
    }
    principal_from_cw(cw, &s)
}

/// All stages of the deflation chain at once, in matrix form:
///
/// ```text
/// Ẇ = (CW - W L sut(WᵀW) - W diag(WᵀCW) + W diag(WᵀW L sut(WᵀW))) L⁻¹ + ½ W diag(WᵀW - I)
/// L̇ = diag(WᵀCW) - diag(WᵀW L sut(WᵀW)) - diag(WᵀW L)
/// ```
pub fn rhs_deflated_matrix(c: &DMatrix<f64>, chain: &ChainState) -> Result<ChainState> {
    let m = chain.m();
    let w = &chain.w;
    let l_diag = DMatrix::from_diagonal(&DVector::from_row_slice(&chain.l));
    let mut l_inv = DMatrix::<f64>::zeros(m, m);
    for (k, &l) in chain.l.iter().enumerate() {
        l_inv[(k, k)] = 1.0 / guard("l", l)?;
    }
    let cw = c * w;
    let gram = w.transpose() * w;
    let upper = sut(&gram)?;
    let wcw = diag(&(w.transpose() * &cw));
    let cross = diag(&(&gram * &l_diag * &upper));
    let norm = diag(&(&gram - DMatrix::<f64>::identity(m, m)));

    let w_dot = (&cw - w * &l_diag * &upper - w * &wcw + w * &cross) * l_inv + w * norm * 0.5;
    let l_dot = &wcw - &cross - diag(&(&gram * &l_diag));
    Ok(ChainState {
        w: w_dot,
        l: l_dot.diagonal().iter().copied().collect(),
    })
}

fn diag(a: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&a.diagonal())
}

/// Arbitrary-eigenpair rule for stage `p`, with the preceding stages of the
/// chain standing in for the known eigenpairs:
///
/// ```text
/// ẇ_p = [principal ẇ] - (Σ_{i<p} ((l_i - l_p)⁻¹ + l_p⁻¹) w_i w_iᵀ) (C w_p - l_p w_p)
/// l̇_p = w_pᵀCw_p - l_p w_pᵀw_p
/// ```
pub fn rhs_arbitrary(c: &DMatrix<f64>, chain: &ChainState, p: usize) -> Result<EigenState> {
    chain.check_stage(p)?;
    let s = chain.stage(p);
    let preceding = (0..p - 1).map(|i| (chain.w.column(i).clone_owned(), chain.l[i]));
    arbitrary_with(c, &s, preceding)
}

/// Arbitrary-eigenpair rule with explicitly known preceding pairs (analysis mode).
pub fn rhs_arbitrary_known(c: &DMatrix<f64>, known: &KnownPairs, s: &EigenState) -> Result<EigenState> {
    arbitrary_with(c, s, known.iter().map(|(v, l)| (v.clone(), l)))
}

fn arbitrary_with(
    c: &DMatrix<f64>,
    s: &EigenState,
    preceding: impl Iterator<Item = (DVector<f64>, f64)>,
) -> Result<EigenState> {
    let cw = c * &s.w;
    let l_inv = 1.0 / guard("l", s.l)?;
    let residual = &cw - &s.w * s.l;
    let mut correction = DVector::zeros(s.n());
    for (wi, li) in preceding {
        let gap = guard("l_i - l_p", li - s.l)?;
        correction.axpy((1.0 / gap + l_inv) * wi.dot(&residual), &wi, 1.0);
    }
    let mut out = principal_from_cw(cw, s)?;
    out.w -= correction;
    Ok(out)
}

/// Dispatches to the rule of the given kind for stage `p` of a chain.
/// The principal rule ignores the preceding stages.
pub fn rhs_stage(kind: RuleKind, c: &DMatrix<f64>, chain: &ChainState, p: usize) -> Result<EigenState> {
    match kind {
        RuleKind::Principal => {
            chain.check_stage(p)?;
            rhs_principal(c, &chain.stage(p))
        }
        RuleKind::Deflation => rhs_deflated(c, chain, p),
        RuleKind::Arbitrary => rhs_arbitrary(c, chain, p),
    }
}

/// Online variant: the rule evaluated with `C` replaced by the outer product `x xᵀ`.
pub fn online_rhs(x: &DVector<f64>, kind: RuleKind, chain: &ChainState, p: usize) -> Result<EigenState> {
    let c = x * x.transpose();
    rhs_stage(kind, &c, chain, p)
}

/// Strictly upper triangular part of a square matrix.
pub fn sut(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(Error::Shape { rows, cols });
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| if j > i { a[(i, j)] } else { 0.0 }))
}
