//! The `verify` subcommand: a fast, deterministic run of the library's
//! invariants with a machine-readable pass/fail list.

use cpca::linmodel::{deflate, rayleigh_quotient, symmetric_eigen_oracle};
use cpca::rules::{
    inv_hessian_principal, lagrange_gradient, lagrange_hessian, lagrange_value, rhs_arbitrary, rhs_arbitrary_known,
    rhs_deflated, rhs_deflated_matrix, rhs_principal, sut,
};
use cpca::stability::{
    arbitrary_spectrum, bordered_hessian_spectrum, eigenvalues_general, exact_hessian_cross_spectrum,
    numeric_jacobian, principal_jacobian, principal_spectrum, rule_jacobian, spectra_match, FD_STEP,
};
use cpca::{ChainState, EigenState, KnownPairs, SpectralModel};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const SEED: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub failures: Vec<&'static str>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Deliberate defects for testing the harness itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Replace the principal rule with a constant when differentiated.
    ConstantRhs,
}

fn result(name: &'static str, ok: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
        detail,
    }
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> EigenState {
    EigenState::new(DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)), rng.random_range(0.2..1.0))
}

fn reals(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

pub fn verify(fault: Option<Fault>) -> VerifyReport {
    let model = SpectralModel::loglinear(6, SEED).expect("valid model");
    let c = model.covariance();
    let n = model.n();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut checks = Vec::new();

    let (mut grad, mut hess): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let s = random_state(&mut rng, n);
        let x = s.to_vector();
        let fd_grad = numeric_jacobian(
            |y| Ok(DVector::from_element(1, lagrange_value(c, &EigenState::from_vector(y)))),
            &x,
            FD_STEP,
        )
        .expect("smooth");
        grad = grad.max((fd_grad.transpose() - lagrange_gradient(c, &s)).amax());
        let fd_hess = numeric_jacobian(|y| Ok(lagrange_gradient(c, &EigenState::from_vector(y))), &x, FD_STEP).expect("smooth");
        hess = hess.max((fd_hess - lagrange_hessian(c, &s)).amax());
    }
    checks.push(result("gradient_finite_differences", grad < 1e-6, format!("max deviation {grad:.3e}")));
    checks.push(result("hessian_finite_differences", hess < 1e-5, format!("max deviation {hess:.3e}")));

    let constant = DVector::from_element(n + 1, 0.25);
    let principal = |s: &EigenState| match fault {
        Some(Fault::ConstantRhs) => Ok(EigenState::from_vector(&constant)),
        None => rhs_principal(c, s),
    };
    let mut jac: f64 = 0.0;
    for _ in 0..20 {
        let s = random_state(&mut rng, n);
        let fd = rule_jacobian(principal, &s, FD_STEP).expect("guarded");
        jac = jac.max((fd - principal_jacobian(c, &s).expect("guarded")).amax());
    }
    checks.push(result("principal_jacobian_finite_differences", jac < 1e-5, format!("max deviation {jac:.3e}")));

    let mut factored: f64 = 0.0;
    for _ in 0..20 {
        let s = random_state(&mut rng, n);
        let step = -(inv_hessian_principal(&s).expect("guarded") * lagrange_gradient(c, &s));
        factored = factored.max((rhs_principal(c, &s).expect("guarded").to_vector() - step).amax());
    }
    checks.push(result("principal_rule_is_newton_step", factored < 1e-12, format!("max deviation {factored:.3e}")));

    let chain = ChainState::from_model(&model, n).expect("m = n");
    let mut fixed: f64 = 0.0;
    for p in 1..=n {
        fixed = fixed
            .max(rhs_principal(c, &EigenState::from_pair(&model.pair(p))).expect("guarded").max_abs())
            .max(rhs_deflated(c, &chain, p).expect("guarded").max_abs())
            .max(rhs_arbitrary(c, &chain, p).expect("guarded").max_abs());
    }
    checks.push(result("fixed_points", fixed < 1e-12, format!("max |rhs| {fixed:.3e}")));

    let mut matrix_form: f64 = 0.0;
    for m in 2..=n {
        let w = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let l = (0..m).map(|k| 1.0 / (k as f64 + 1.0)).collect();
        let chain = ChainState::new(w, l).expect("m <= n");
        let all = rhs_deflated_matrix(c, &chain).expect("guarded");
        for p in 1..=m {
            let stage = rhs_deflated(c, &chain, p).expect("guarded");
            matrix_form = matrix_form.max((all.w.column(p - 1) - &stage.w).amax()).max((all.l[p - 1] - stage.l).abs());
        }
    }
    checks.push(result("deflation_matrix_form", matrix_form < 1e-12, format!("max deviation {matrix_form:.3e}")));

    let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-2.0..2.0));
    let d = DMatrix::from_diagonal(&DVector::from_fn(5, |_, _| rng.random_range(-2.0..2.0)));
    let s = sut(&a).expect("square");
    let lemma = s.column(0).iter().all(|&x| x == 0.0) && sut(&(&a * &d)).expect("square") == &s * &d;
    checks.push(result("sut_lemmas", lemma, "column and diagonal identities".into()));

    let (values, _) = symmetric_eigen_oracle(c).expect("symmetric");
    let round_trip = values.iter().zip(model.eigenvalues()).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
    checks.push(result("eigen_oracle_round_trip", round_trip < 1e-10, format!("max relative deviation {round_trip:.3e}")));

    let deflated = deflate(c, &model.leading_pairs(2)).expect("orthonormal");
    let (rest, _) = symmetric_eigen_oracle(&deflated).expect("symmetric");
    let deflation_ok = (rest[0] - model.eigenvalue(3)).abs() < 1e-10;
    checks.push(result("deflation_spectrum", deflation_ok, format!("largest remaining eigenvalue {:.12e}", rest[0])));

    let rq = (1..=n)
        .map(|q| (rayleigh_quotient(c, &model.eigenvector(q)).expect("nonzero") - model.eigenvalue(q) / 2.0).abs())
        .fold(0.0, f64::max);
    checks.push(result("rayleigh_quotient", rq < 1e-12, format!("max deviation {rq:.3e}")));

    let lambdas = model.eigenvalues();
    let mut unmatched = Vec::new();
    for q in 1..=n {
        let fd = rule_jacobian(|s| rhs_principal(c, s), &EigenState::from_pair(&model.pair(q)), FD_STEP).expect("guarded");
        let analytic = principal_spectrum(lambdas, q).expect("valid");
        if spectra_match(&eigenvalues_general(&fd).expect("finite"), &analytic.eigenvalues, 1e-5).is_none() {
            unmatched.push(format!("principal q={q}"));
        }
    }
    for p in 2..=3 {
        let known = KnownPairs::preceding(&model, p);
        for q in p..=n {
            let at = EigenState::from_pair(&model.pair(q));
            let fd = rule_jacobian(|s| rhs_arbitrary_known(c, &known, s), &at, FD_STEP).expect("guarded");
            let analytic = arbitrary_spectrum(lambdas, p, q).expect("valid");
            if spectra_match(&eigenvalues_general(&fd).expect("finite"), &analytic.eigenvalues, 1e-5).is_none() {
                unmatched.push(format!("arbitrary p={p} q={q}"));
            }
        }
    }
    for (i, j) in [(1, 2), (3, 1), (2, 2)] {
        let hi = lagrange_hessian(c, &EigenState::from_pair(&model.pair(i)));
        let hj = lagrange_hessian(c, &EigenState::from_pair(&model.pair(j)));
        let jac = -(hi.try_inverse().expect("nonsingular") * hj);
        let analytic = exact_hessian_cross_spectrum(lambdas, i, j).expect("valid");
        if spectra_match(&eigenvalues_general(&jac).expect("finite"), &analytic.eigenvalues, 1e-8).is_none() {
            unmatched.push(format!("exact-cross i={i} j={j}"));
        }
    }
    for p in 1..=n {
        let (h, _) = symmetric_eigen_oracle(&lagrange_hessian(c, &EigenState::from_pair(&model.pair(p)))).expect("symmetric");
        let analytic = bordered_hessian_spectrum(lambdas, p).expect("valid");
        if spectra_match(&reals(&h), &analytic.eigenvalues, 1e-8).is_none() {
            unmatched.push(format!("bordered p={p}"));
        }
    }
    checks.push(result(
        "spectrum_oracles",
        unmatched.is_empty(),
        if unmatched.is_empty() { "all analytic spectra matched".into() } else { format!("unmatched: {}", unmatched.join(", ")) },
    ));

    let failures = checks.iter().filter(|c| c.status == CheckStatus::Fail).map(|c| c.name).collect();
    VerifyReport { checks, failures }
}
