//! Ground-truth spectral models: construction, validation, deflation.
//!
//! A [`SpectralModel`] holds orthonormal eigenvectors `V`, strictly descending
//! positive eigenvalues `Λ` and the covariance `C = V Λ Vᵀ`. Every rule and
//! stability analysis in the crate operates on one of these.
//!
//! Derivations of the rules are usually stated for `n >= 4`; the final
//! formulas are well formed for `n >= 2`, which is what the constructors accept.

mod interchange;
mod jacobi;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub use interchange::{matrix_from_rows, matrix_to_rows, vector_to_vec, ModelDocument};
pub use jacobi::{max_asymmetry, symmetric_eigen_oracle, JACOBI_MAX_SWEEPS, JACOBI_THRESHOLD};

/// Relative gap below which two neighbouring eigenvalues count as equal.
pub const DISTINCTNESS_TOLERANCE: f64 = 1e-12;
/// Unit-norm tolerance for [`EigenPair`] vectors.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-10;
/// Largest Gram-matrix deviation accepted by [`deflate`].
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-6;
const MODEL_TOLERANCE: f64 = 1e-10;

/// An eigenvector together with its eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    vector: DVector<f64>,
    value: f64,
}

impl EigenPair {
    pub fn new(vector: DVector<f64>, value: f64) -> Result<Self> {
        let deviation = (vector.norm() - 1.0).abs();
        if !(deviation < UNIT_NORM_TOLERANCE) {
            return Err(Error::Degenerate("eigenpair vector must have unit length"));
        }
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Spectrum(format!("eigenpair value {value} must be positive")));
        }
        Ok(Self { vector, value })
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.vector
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    eigenvectors: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    covariance: DMatrix<f64>,
}

impl SpectralModel {
    /// Model with eigenvalues `exp(-i)`, `i = 1..=n`, and seeded random eigenvectors.
    pub fn loglinear(n: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Dimension(format!("n must be at least 2, got {n}")));
        }
        let values: Vec<f64> = (1..=n).map(|i| (-(i as f64)).exp()).collect();
        Self::from_spectrum(&values, seed)
    }

    /// Model with an explicit spectrum and seeded random eigenvectors.
    pub fn from_spectrum(eigenvalues: &[f64], seed: u64) -> Result<Self> {
        validate_spectrum(eigenvalues)?;
        let v = random_orthogonal(eigenvalues.len(), seed);
        let covariance = assemble_covariance(&v, eigenvalues);
        Ok(Self {
            eigenvectors: v,
            eigenvalues: eigenvalues.to_vec(),
            covariance,
        })
    }

    /// Builds a model from explicit parts and checks every model invariant.
    pub fn from_parts(eigenvectors: DMatrix<f64>, eigenvalues: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = eigenvalues.len();
        validate_spectrum(&eigenvalues)?;
        if eigenvectors.shape() != (n, n) || covariance.shape() != (n, n) {
            return Err(Error::Dimension(format!("expected {n}x{n} eigenvector and covariance matrices")));
        }
        let gram = eigenvectors.transpose() * &eigenvectors - DMatrix::<f64>::identity(n, n);
        let deviation = gram.amax();
        if !(deviation < MODEL_TOLERANCE) {
            return Err(Error::Orthonormality { deviation });
        }
        let residual = max_asymmetry(&covariance);
        if !(residual < 1e-12) {
            return Err(Error::Symmetry { residual });
        }
        let rebuilt = assemble_covariance(&eigenvectors, &eigenvalues);
        if !((rebuilt - &covariance).amax() < MODEL_TOLERANCE) {
            return Err(Error::Spectrum("covariance does not match V Λ Vᵀ".into()));
        }
        Ok(Self {
            eigenvectors,
            eigenvalues,
            covariance,
        })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// True eigenvalue of rank `q` (1-based).
    pub fn eigenvalue(&self, q: usize) -> f64 {
        self.eigenvalues[q - 1]
    }

    /// True eigenvector of rank `q` (1-based).
    pub fn eigenvector(&self, q: usize) -> DVector<f64> {
        self.eigenvectors.column(q - 1).clone_owned()
    }

    /// True eigenpair of rank `q` (1-based).
    pub fn pair(&self, q: usize) -> EigenPair {
        EigenPair {
            vector: self.eigenvector(q),
            value: self.eigenvalue(q),
        }
    }

    /// The first `count` true eigenpairs in descending order.
    pub fn leading_pairs(&self, count: usize) -> Vec<EigenPair> {
        (1..=count).map(|q| self.pair(q)).collect()
    }

    pub fn check_rank(&self, q: usize, name: &str) -> Result<()> {
        if q == 0 || q > self.n() {
            return Err(Error::Index(format!("{name} = {q} must lie in 1..={}", self.n())));
        }
        Ok(())
    }
}

/// Checks that a spectrum has at least two strictly descending, distinct, positive values.
pub fn validate_spectrum(values: &[f64]) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::Dimension(format!("spectrum needs at least 2 values, got {}", values.len())));
    }
    if let Some(bad) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Spectrum(format!("eigenvalue {} = {} is not positive", bad + 1, values[bad])));
    }
    for (i, pair) in values.windows(2).enumerate() {
        let (hi, lo) = (pair[0], pair[1]);
        if lo > hi {
            return Err(Error::Spectrum(format!("eigenvalues must descend: {hi} < {lo} at position {}", i + 1)));
        }
        let gap = (hi - lo) / hi;
        if gap < DISTINCTNESS_TOLERANCE {
            return Err(Error::Distinctness { index: i + 1, gap });
        }
    }
    Ok(())
}

/// Orthogonal factor of a seeded standard-Gaussian matrix, with each column
/// flipped so its largest-magnitude entry is positive.
pub fn random_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    let mut q = g.qr().q();
    for mut col in q.column_iter_mut() {
        let lead = col.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 {
            col.neg_mut();
        }
    }
    q
}

fn assemble_covariance(v: &DMatrix<f64>, values: &[f64]) -> DMatrix<f64> {
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * values[j]);
    let c = scaled * v.transpose();
    (&c + c.transpose()) * 0.5
}

/// Rayleigh quotient `½ wᵀCw / wᵀw`.
pub fn rayleigh_quotient(c: &DMatrix<f64>, w: &DVector<f64>) -> Result<f64> {
    let ww = w.dot(w);
    if ww == 0.0 {
        return Err(Error::Degenerate("Rayleigh quotient of the zero vector"));
    }
    Ok(0.5 * w.dot(&(c * w)) / ww)
}

/// Removes the given eigenpairs from `C`: `C - Σ λ_i v_i v_iᵀ`.
pub fn deflate(c: &DMatrix<f64>, pairs: &[EigenPair]) -> Result<DMatrix<f64>> {
    let mut deviation = 0.0f64;
    for (a, pa) in pairs.iter().enumerate() {
        for (b, pb) in pairs.iter().enumerate() {
            let target = if a == b { 1.0 } else { 0.0 };
            deviation = deviation.max((pa.vector.dot(&pb.vector) - target).abs());
        }
    }
    if deviation > ORTHONORMALITY_TOLERANCE {
        return Err(Error::Orthonormality { deviation });
    }
    let mut out = c.clone();
    for pair in pairs {
        out.ger(-pair.value, &pair.vector, &pair.vector, 1.0);
    }
    Ok(out)
}
