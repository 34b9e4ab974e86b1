//! Lagrangian derivatives, approximated inverse Hessians and the learning-rule
//! right-hand sides.
//!
//! The criterion is `J = ½ wᵀCw - ½ l (wᵀw - 1)` over the extended vector
//! `(w, l)`. Each learning rule is a Newton flow `-H⁻¹ ∇J` with a Hessian
//! approximated around the desired fixed point; the flows are evaluated in
//! their expanded closed forms, never by forming `H⁻¹`.

mod hessian;
mod rhs;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmodel::{EigenPair, SpectralModel};

pub use hessian::{
    inv_hessian_arbitrary, inv_hessian_principal, lagrange_gradient, lagrange_hessian, lagrange_value,
    transformed_hessian,
};
pub use rhs::{
    online_rhs, rhs_arbitrary, rhs_arbitrary_known, rhs_deflated, rhs_deflated_matrix, rhs_principal, rhs_stage, sut,
};

/// Smallest magnitude accepted for any inverted scalar (`l`, `l_i - l_p`).
pub const SINGULARITY_GUARD: f64 = 1e-12;

pub(crate) fn guard(quantity: &'static str, value: f64) -> Result<f64> {
    if value.abs() < SINGULARITY_GUARD {
        Err(Error::Singularity { quantity, value })
    } else {
        Ok(value)
    }
}

/// Which learning rule drives a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    /// Principal-eigenpair rule applied to the undeflated covariance.
    Principal,
    /// Principal rule applied to the covariance deflated by the preceding estimates.
    Deflation,
    /// Arbitrary-eigenpair rule using the preceding estimates.
    Arbitrary,
}

/// Extended variable vector: an eigenvector estimate `w` and its eigenvalue
/// estimate / Lagrange multiplier `l`.
///
/// Rule right-hand sides are returned in the same shape, holding `(ẇ, l̇)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenState {
    pub w: DVector<f64>,
    pub l: f64,
}

impl EigenState {
    pub fn new(w: DVector<f64>, l: f64) -> Self {
        Self { w, l }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(DVector::zeros(n), 0.0)
    }

    pub fn from_pair(pair: &EigenPair) -> Self {
        Self::new(pair.vector().clone(), pair.value())
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    /// Stacks `(w, l)` into one vector of length `n + 1`.
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.n();
        DVector::from_fn(n + 1, |i, _| if i < n { self.w[i] } else { self.l })
    }

    pub fn from_vector(x: &DVector<f64>) -> Self {
        let n = x.len() - 1;
        Self::new(x.rows(0, n).clone_owned(), x[n])
    }

    pub fn max_abs(&self) -> f64 {
        self.w.amax().max(self.l.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.l.is_finite() && self.w.iter().all(|x| x.is_finite())
    }
}

/// Stacked estimates for `m` eigenpairs: `W` is `n × m`, `L` has length `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub w: DMatrix<f64>,
    pub l: Vec<f64>,
}

impl ChainState {
    pub fn new(w: DMatrix<f64>, l: Vec<f64>) -> Result<Self> {
        if w.ncols() != l.len() {
            return Err(Error::Dimension(format!(
                "W has {} columns but L has {} entries",
                w.ncols(),
                l.len()
            )));
        }
        if w.ncols() > w.nrows() || w.ncols() == 0 {
            return Err(Error::Dimension(format!("chain needs 1 <= m <= n, got m = {}, n = {}", w.ncols(), w.nrows())));
        }
        Ok(Self { w, l })
    }

    pub fn from_stages(stages: &[EigenState]) -> Result<Self> {
        let n = stages.first().map_or(0, EigenState::n);
        let w = DMatrix::from_fn(n, stages.len(), |i, j| stages[j].w[i]);
        Self::new(w, stages.iter().map(|s| s.l).collect())
    }

    /// Chain holding the first `m` true eigenpairs of a model.
    pub fn from_model(model: &SpectralModel, m: usize) -> Result<Self> {
        let stages: Vec<EigenState> = (1..=m).map(|q| EigenState::from_pair(&model.pair(q))).collect();
        Self::from_stages(&stages)
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn m(&self) -> usize {
        self.l.len()
    }

    /// State of stage `p` (1-based).
    pub fn stage(&self, p: usize) -> EigenState {
        EigenState::new(self.w.column(p - 1).clone_owned(), self.l[p - 1])
    }

    pub fn set_stage(&mut self, p: usize, state: &EigenState) {
        self.w.set_column(p - 1, &state.w);
        self.l[p - 1] = state.l;
    }

    pub(crate) fn check_stage(&self, p: usize) -> Result<()> {
        if p == 0 || p > self.m() {
            return Err(Error::Index(format!("stage p = {p} must lie in 1..={}", self.m())));
        }
        Ok(())
    }
}

/// The preceding `p - 1` eigenpairs assumed known by the arbitrary-eigenpair
/// rule, in descending order of value.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownPairs {
    pairs: Vec<(DVector<f64>, f64)>,
}

impl KnownPairs {
    pub fn new(pairs: Vec<(DVector<f64>, f64)>) -> Result<Self> {
        if let Some(i) = pairs.windows(2).position(|w| !(w[0].1 > w[1].1)) {
            return Err(Error::Spectrum(format!("known pair values must strictly descend at position {}", i + 1)));
        }
        Ok(Self { pairs })
    }

    pub fn empty() -> Self {
        Self { pairs: Vec::new() }
    }

    /// The true pairs of rank `1..p` of a model.
    pub fn preceding(model: &SpectralModel, p: usize) -> Self {
        Self {
            pairs: (1..p).map(|i| (model.eigenvector(i), model.eigenvalue(i))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DVector<f64>, f64)> {
        self.pairs.iter().map(|(v, l)| (v, *l))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_vector_layout() {
        let s = EigenState::new(DVector::from_vec(vec![1.0, 2.0]), 3.0);
        let x = s.to_vector();
        assert_eq!(x.as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(EigenState::from_vector(&x), s);
    }

    #[test]
    fn chain_shape_checks() {
        assert!(ChainState::new(DMatrix::zeros(3, 2), vec![1.0]).is_err());
        assert!(ChainState::new(DMatrix::zeros(2, 3), vec![1.0; 3]).is_err());
        let mut chain = ChainState::new(DMatrix::zeros(3, 2), vec![1.0, 2.0]).unwrap();
        let s = EigenState::new(DVector::from_vec(vec![1.0, 0.0, 0.0]), 5.0);
        chain.set_stage(2, &s);
        assert_eq!(chain.stage(2), s);
        assert!(chain.check_stage(3).is_err());
        assert!(chain.check_stage(0).is_err());
    }

    #[test]
    fn known_pairs_must_descend() {
        let e = DVector::from_vec(vec![1.0, 0.0]);
        assert!(KnownPairs::new(vec![(e.clone(), 1.0), (e.clone(), 2.0)]).is_err());
        assert_eq!(KnownPairs::new(vec![(e.clone(), 2.0), (e, 1.0)]).unwrap().len(), 2);
    }
}
