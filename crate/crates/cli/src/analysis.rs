//! The `stability` and `perturb` subcommands.

use anyhow::Result;
use cpca::rules::{lagrange_hessian, rhs_arbitrary_known, rhs_principal};
use cpca::stability::{
    arbitrary_spectrum, bordered_hessian_spectrum, eigenvalues_general, exact_hessian_cross_spectrum,
    perturbation_probe, principal_spectrum, rule_jacobian, spectra_match, PerturbationReport, SpectrumReport,
    FD_STEP, SPECTRUM_MATCH_TOLERANCE,
};
use cpca::{EigenState, KnownPairs, SpectralModel};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{PerturbConfig, Selector, StabilityConfig};

#[derive(Debug, Clone, Serialize)]
pub struct StabilityOutput {
    pub selector: Selector,
    pub spectrum: Vec<f64>,
    pub analytic: SpectrumReport,
    /// Spectrum of the numerically assembled matrix at the same fixed point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub numeric: Option<SpectrumReport>,
    /// Largest pairing distance between analytic and numeric eigenvalues;
    /// absent if no numeric spectrum exists or the multisets do not pair.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairing_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn stability(config: &StabilityConfig) -> Result<StabilityOutput> {
    config.validate()?;
    let values = &config.spectrum;
    let model = SpectralModel::from_spectrum(values, config.seed)?;
    let c = model.covariance();
    let at = |q: usize| EigenState::from_pair(&model.pair(q));

    let (analytic, numeric_matrix, note) = match config.selector {
        Selector::Principal { q } => {
            let fd = rule_jacobian(|s| rhs_principal(c, s), &at(q), FD_STEP)?;
            (principal_spectrum(values, q)?, Some(fd), None)
        }
        Selector::Arbitrary { p, q } if q < p => (
            arbitrary_spectrum(values, p, q)?,
            None,
            Some(
                "fixed point precedes the stage: the Newton system is undefined there, \
                 stability is decided by the perturbation probe"
                    .to_string(),
            ),
        ),
        Selector::Arbitrary { p, q } => {
            let known = KnownPairs::preceding(&model, p);
            let fd = rule_jacobian(|s| rhs_arbitrary_known(c, &known, s), &at(q), FD_STEP)?;
            (arbitrary_spectrum(values, p, q)?, Some(fd), None)
        }
        Selector::ExactCross { i, j } => {
            let hi = lagrange_hessian(c, &at(i));
            let hj = lagrange_hessian(c, &at(j));
            let inv = hi
                .try_inverse()
                .ok_or_else(|| anyhow::anyhow!("exact Hessian at fixed point {i} is singular"))?;
            (exact_hessian_cross_spectrum(values, i, j)?, Some(-(inv * hj)), None)
        }
        Selector::Bordered { p } => (bordered_hessian_spectrum(values, p)?, Some(lagrange_hessian(c, &at(p))), None),
    };

    let numeric = numeric_matrix
        .as_ref()
        .map(|m: &DMatrix<f64>| eigenvalues_general(m).map(SpectrumReport::numeric))
        .transpose()?;
    let pairing_residual = numeric
        .as_ref()
        .and_then(|n| spectra_match(&analytic.eigenvalues, &n.eigenvalues, SPECTRUM_MATCH_TOLERANCE));
    Ok(StabilityOutput {
        selector: config.selector,
        spectrum: values.clone(),
        matched: numeric.as_ref().map(|_| pairing_residual.is_some()),
        analytic,
        numeric,
        pairing_residual,
        note,
    })
}

pub fn perturb(config: &PerturbConfig) -> Result<PerturbationReport> {
    let model = config.validate()?;
    Ok(perturbation_probe(
        &model,
        config.rule,
        config.p,
        config.q,
        config.trials,
        config.eps_scale,
        config.seed,
    )?)
}
