//! Fixed-point stability analysis.
//!
//! Analytic Jacobian and Hessian spectra for every rule and fixed-point case,
//! a central-difference Jacobian oracle, a general (non-symmetric) eigenvalue
//! backend, and the perturbation probe that replaces the Jacobian analysis
//! where the arbitrary rule is undefined at the fixed point.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmodel::{validate_spectrum, SpectralModel};
use crate::rules::{rhs_stage, ChainState, EigenState, RuleKind};

/// Real parts within this distance of zero count as neither positive nor negative.
pub const CLASSIFICATION_THRESHOLD: f64 = 1e-9;
/// Default tolerance for pairing analytic and numeric spectra.
pub const SPECTRUM_MATCH_TOLERANCE: f64 = 1e-5;
/// Default central-difference step.
pub const FD_STEP: f64 = 1e-6;

const MAX_RESAMPLES_PER_TRIAL: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Attractor,
    Saddle,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumSource {
    Analytic,
    Numeric,
}

/// Eigenvalues of a Jacobian or Hessian at a fixed point, with classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    #[serde(with = "complex_list")]
    pub eigenvalues: Vec<Complex64>,
    pub classification: Classification,
    pub source: SpectrumSource,
    /// Set when the Jacobian analysis is invalid at this fixed point and
    /// stability has to be decided by [`perturbation_probe`] instead.
    #[serde(default)]
    pub deferred_to_probe: bool,
    /// The withdrawn Jacobian list for the undefined case, kept for reference only.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "complex_list_opt")]
    pub flawed_analysis: Option<Vec<Complex64>>,
}

impl SpectrumReport {
    pub fn analytic(eigenvalues: Vec<Complex64>) -> Self {
        Self::classified(eigenvalues, SpectrumSource::Analytic)
    }

    pub fn numeric(eigenvalues: Vec<Complex64>) -> Self {
        Self::classified(eigenvalues, SpectrumSource::Numeric)
    }

    fn classified(eigenvalues: Vec<Complex64>, source: SpectrumSource) -> Self {
        Self {
            classification: classify(&eigenvalues),
            eigenvalues,
            source,
            deferred_to_probe: false,
            flawed_analysis: None,
        }
    }

    fn from_real(values: Vec<f64>) -> Self {
        Self::analytic(values.into_iter().map(|re| Complex64::new(re, 0.0)).collect())
    }
}

/// Outcome of the perturbation scalar-product experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub trials: usize,
    pub positive_count: usize,
    pub max_scalar_product: f64,
    pub min_scalar_product: f64,
    /// Perturbations redrawn because the rule's singularity guard rejected them.
    pub resamples: usize,
}

mod complex_list {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    pub(super) struct Parts {
        pub(super) re: f64,
        pub(super) im: f64,
    }

    pub fn serialize<S: Serializer>(values: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        values.iter().map(|z| Parts { re: z.re, im: z.im }).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let parts = Vec::<Parts>::deserialize(d)?;
        Ok(parts.into_iter().map(|p| Complex64::new(p.re, p.im)).collect())
    }
}

mod complex_list_opt {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serializer};

    use super::complex_list::Parts;

    pub fn serialize<S: Serializer>(values: &Option<Vec<Complex64>>, s: S) -> Result<S::Ok, S::Error> {
        match values {
            Some(v) => super::complex_list::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<Complex64>>, D::Error> {
        let parts = Option::<Vec<Parts>>::deserialize(d)?;
        Ok(parts.map(|v| v.into_iter().map(|p| Complex64::new(p.re, p.im)).collect()))
    }
}

/// Attractor if every real part is negative, saddle if both signs occur,
/// indeterminate otherwise (including real parts within the threshold of zero).
pub fn classify(eigenvalues: &[Complex64]) -> Classification {
    let positive = eigenvalues.iter().any(|z| z.re > CLASSIFICATION_THRESHOLD);
    let negative = eigenvalues.iter().any(|z| z.re < -CLASSIFICATION_THRESHOLD);
    let all_negative = eigenvalues.iter().all(|z| z.re < -CLASSIFICATION_THRESHOLD);
    if all_negative && !eigenvalues.is_empty() {
        Classification::Attractor
    } else if positive && negative {
        Classification::Saddle
    } else {
        Classification::Indeterminate
    }
}

/// Central-difference Jacobian of `f` at `x`.
pub fn numeric_jacobian<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let mut jac: Option<DMatrix<f64>> = None;
    for k in 0..n {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[k] += h;
        minus[k] -= h;
        let column = (f(&plus)? - f(&minus)?) / (2.0 * h);
        let jac = jac.get_or_insert_with(|| DMatrix::zeros(column.len(), n));
        jac.set_column(k, &column);
    }
    jac.ok_or_else(|| Error::Dimension("empty state".into()))
}

/// Central-difference Jacobian of a single-stage rule evaluator at `state`.
pub fn rule_jacobian<F>(rhs: F, state: &EigenState, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&EigenState) -> Result<EigenState>,
{
    numeric_jacobian(|x| rhs(&EigenState::from_vector(x)).map(|r| r.to_vector()), &state.to_vector(), h)
}

/// Closed-form Jacobian of the principal rule at an arbitrary state.
pub fn principal_jacobian(c: &DMatrix<f64>, s: &EigenState) -> Result<DMatrix<f64>> {
    let n = s.n();
    let l_inv = 1.0 / crate::rules::guard("l", s.l)?;
    let w = &s.w;
    let cw = c * w;
    let wcw = w.dot(&cw);
    let ww = w.dot(w);
    let wwt = w * w.transpose();
    let eye = DMatrix::<f64>::identity(n, n);

    let top_left = (c - &wwt * c * 2.0 - &eye * wcw) * l_inv + &wwt + eye * (0.5 * ww - 0.5);
    let top_right = (&cw - w * wcw) * (-l_inv * l_inv);
    let bottom_left = (&cw - w * s.l) * 2.0;

    let mut jac = DMatrix::zeros(n + 1, n + 1);
    jac.view_mut((0, 0), (n, n)).copy_from(&top_left);
    jac.view_mut((0, n), (n, 1)).copy_from(&top_right);
    jac.view_mut((n, 0), (1, n)).copy_from(&bottom_left.transpose());
    jac[(n, n)] = -ww;
    Ok(jac)
}

/// Complex eigenvalues of a general square matrix (Hessenberg QR via `faer`).
pub fn eigenvalues_general(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(Error::Shape { rows, cols });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Dimension("matrix has non-finite entries".into()));
    }
    let m = faer::Mat::<f64>::from_fn(rows, cols, |i, j| a[(i, j)]);
    let values = m.eigenvalues().map_err(|_| Error::Convergence {
        what: "general eigenvalue decomposition",
        iterations: 0,
    })?;
    Ok(values.into_iter().map(|z| Complex64::new(z.re, z.im)).collect())
}

/// Pairs two eigenvalue multisets greedily after sorting by (real, imag).
/// Returns the largest pairing distance, or `None` if some value has no
/// partner within `tol`.
pub fn spectra_match(a: &[Complex64], b: &[Complex64], tol: f64) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut a = a.to_vec();
    sort_complex(&mut a);
    let mut unused = b.to_vec();
    sort_complex(&mut unused);
    let mut worst: f64 = 0.0;
    for z in &a {
        let (index, dist) = unused
            .iter()
            .enumerate()
            .map(|(k, y)| (k, (z - y).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))?;
        if dist > tol {
            return None;
        }
        worst = worst.max(dist);
        unused.remove(index);
    }
    Some(worst)
}

pub fn sort_complex(values: &mut [Complex64]) {
    values.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
}

fn check_index(lambdas: &[f64], k: usize, name: &str) -> Result<()> {
    if k == 0 || k > lambdas.len() {
        return Err(Error::Index(format!("{name} = {k} outside 1..={}", lambdas.len())));
    }
    Ok(())
}

/// Jacobian spectrum of the principal rule at fixed point `q`:
/// `α_k = (λ_k - λ_q)/λ_q` for `k ≠ q`, `α_q = -1`, `α_{n+1} = -1`.
pub fn principal_spectrum(lambdas: &[f64], q: usize) -> Result<SpectrumReport> {
    validate_spectrum(lambdas)?;
    check_index(lambdas, q, "q")?;
    let lq = lambdas[q - 1];
    let mut values: Vec<f64> = (1..=lambdas.len())
        .map(|k| if k == q { -1.0 } else { (lambdas[k - 1] - lq) / lq })
        .collect();
    values.push(-1.0);
    Ok(SpectrumReport::from_real(values))
}

/// Jacobian spectrum of the arbitrary rule for stage `p` at fixed point `q`.
///
/// For `q < p` the fixed point does not exist for the Newton system, so the
/// report is indeterminate, deferred to the perturbation probe, and carries
/// the withdrawn list only in `flawed_analysis`.
pub fn arbitrary_spectrum(lambdas: &[f64], p: usize, q: usize) -> Result<SpectrumReport> {
    validate_spectrum(lambdas)?;
    check_index(lambdas, p, "p")?;
    check_index(lambdas, q, "q")?;
    let lq = lambdas[q - 1];
    let n = lambdas.len();
    // Diagonal of the transformed Jacobian before subtracting e_q e_qᵀ.
    let mut diag: Vec<f64> = (1..=n)
        .map(|k| if k < p { -1.0 } else { lambdas[k - 1] / lq - 1.0 })
        .collect();
    diag[q - 1] -= 1.0;
    diag.push(-1.0);
    if q >= p {
        return Ok(SpectrumReport::from_real(diag));
    }
    let flawed = diag.into_iter().map(|re| Complex64::new(re, 0.0)).collect();
    Ok(SpectrumReport {
        eigenvalues: Vec::new(),
        classification: Classification::Indeterminate,
        source: SpectrumSource::Analytic,
        deferred_to_probe: true,
        flawed_analysis: Some(flawed),
    })
}

/// Transformed bordered Hessian of the Lagrangian at fixed point `p`:
/// `[[Λ - λ_p I, -e_p], [-e_pᵀ, 0]]`.
pub fn bordered_hessian_matrix(lambdas: &[f64], p: usize) -> Result<DMatrix<f64>> {
    check_index(lambdas, p, "p")?;
    let n = lambdas.len();
    let lp = lambdas[p - 1];
    let mut h = DMatrix::zeros(n + 1, n + 1);
    for k in 0..n {
        h[(k, k)] = lambdas[k] - lp;
    }
    h[(p - 1, n)] = -1.0;
    h[(n, p - 1)] = -1.0;
    Ok(h)
}

/// Spectrum of the bordered Hessian: `λ_k - λ_p` for `k ≠ p`, `-1`, `+1`.
pub fn bordered_hessian_spectrum(lambdas: &[f64], p: usize) -> Result<SpectrumReport> {
    validate_spectrum(lambdas)?;
    check_index(lambdas, p, "p")?;
    let lp = lambdas[p - 1];
    let mut values: Vec<f64> = (1..=lambdas.len())
        .map(|k| if k == p { -1.0 } else { lambdas[k - 1] - lp })
        .collect();
    values.push(1.0);
    Ok(SpectrumReport::from_real(values))
}

/// Jacobian `-H̄ᵢ⁻¹ H̄ⱼ` of the exact-Hessian Newton flow designed for fixed
/// point `i`, evaluated at fixed point `j` (transformed coordinates).
pub fn exact_cross_matrix(lambdas: &[f64], i: usize, j: usize) -> Result<DMatrix<f64>> {
    let hi = bordered_hessian_matrix(lambdas, i)?;
    let hj = bordered_hessian_matrix(lambdas, j)?;
    let inv = hi.try_inverse().ok_or(Error::Singularity {
        quantity: "bordered hessian",
        value: 0.0,
    })?;
    Ok(-(inv * hj))
}

/// Analytic spectrum of [`exact_cross_matrix`]: the cube roots of unity plus
/// `α_k = -(λ_k - λ_j)/(λ_k - λ_i)` for `k ∉ {i, j}`; all `-1` when `i = j`.
pub fn exact_hessian_cross_spectrum(lambdas: &[f64], i: usize, j: usize) -> Result<SpectrumReport> {
    validate_spectrum(lambdas)?;
    check_index(lambdas, i, "i")?;
    check_index(lambdas, j, "j")?;
    let n = lambdas.len();
    if i == j {
        return Ok(SpectrumReport::from_real(vec![-1.0; n + 1]));
    }
    let half_root3 = 3f64.sqrt() / 2.0;
    let mut values = vec![
        Complex64::new(1.0, 0.0),
        Complex64::new(-0.5, half_root3),
        Complex64::new(-0.5, -half_root3),
    ];
    let (li, lj) = (lambdas[i - 1], lambdas[j - 1]);
    for k in (1..=n).filter(|&k| k != i && k != j) {
        let lk = lambdas[k - 1];
        values.push(Complex64::new(-(lk - lj) / (lk - li), 0.0));
    }
    Ok(SpectrumReport::analytic(values))
}

/// Evaluates `(μ, ν)ᵀ · rhs(v_q + μ, λ_q + ν)` for stage `p` of a chain whose
/// preceding stages sit on the true eigenpairs.
pub fn perturbation_product(
    model: &SpectralModel,
    kind: RuleKind,
    p: usize,
    q: usize,
    mu: &DVector<f64>,
    nu: f64,
) -> Result<f64> {
    let mut chain = ChainState::from_model(model, p)?;
    let state = EigenState::new(model.eigenvector(q) + mu, model.eigenvalue(q) + nu);
    chain.set_stage(p, &state);
    let r = rhs_stage(kind, model.covariance(), &chain, p)?;
    Ok(mu.dot(&r.w) + nu * r.l)
}

/// Scalar product along `μ = -ε v_q` with a fixed `ν`; positive (≈ ε - ν²)
/// at fixed points preceding `p` for the arbitrary rule.
pub fn directed_witness(model: &SpectralModel, kind: RuleKind, p: usize, q: usize, eps: f64, nu: f64) -> Result<f64> {
    perturbation_product(model, kind, p, q, &(model.eigenvector(q) * -eps), nu)
}

/// Samples `trials` perturbations `μ` uniform in the ball of radius
/// `eps_scale` and `ν` uniform in `[-eps_scale, eps_scale]` around fixed
/// point `q`, and records the sign of the scalar product with the flow.
/// Trial `t` draws from its own stream seeded with `seed + t`.
pub fn perturbation_probe(
    model: &SpectralModel,
    kind: RuleKind,
    p: usize,
    q: usize,
    trials: usize,
    eps_scale: f64,
    seed: u64,
) -> Result<PerturbationReport> {
    model.check_rank(p, "p")?;
    model.check_rank(q, "q")?;
    if trials == 0 {
        return Err(Error::Index("trials must be at least 1".into()));
    }
    if !(eps_scale > 0.0) {
        return Err(Error::Dimension(format!("eps_scale must be positive, got {eps_scale}")));
    }
    let n = model.n();
    let outcomes: Vec<(f64, usize)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let mut resamples = 0;
            loop {
                let (mu, nu) = sample_perturbation(&mut rng, n, eps_scale, q < p);
                match perturbation_product(model, kind, p, q, &mu, nu) {
                    Ok(product) => return Ok((product, resamples)),
                    Err(Error::Singularity { .. }) if resamples < MAX_RESAMPLES_PER_TRIAL => resamples += 1,
                    Err(e) => return Err(e),
                }
            }
        })
        .collect::<Result<_>>()?;
    Ok(PerturbationReport {
        trials,
        positive_count: outcomes.iter().filter(|(x, _)| *x > 0.0).count(),
        max_scalar_product: outcomes.iter().map(|(x, _)| *x).fold(f64::NEG_INFINITY, f64::max),
        min_scalar_product: outcomes.iter().map(|(x, _)| *x).fold(f64::INFINITY, f64::min),
        resamples: outcomes.iter().map(|(_, r)| r).sum(),
    })
}

fn sample_perturbation(rng: &mut ChaCha8Rng, n: usize, eps: f64, nonzero_nu: bool) -> (DVector<f64>, f64) {
    let direction = loop {
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 {
            break g / norm;
        }
    };
    let radius = eps * rng.random::<f64>().powf(1.0 / n as f64);
    let nu = loop {
        let nu = rng.random_range(-eps..=eps);
        if !(nonzero_nu && nu == 0.0) {
            break nu;
        }
    };
    (direction * radius, nu)
}
