use nalgebra::{DMatrix, DVector};

use super::{guard, EigenState, KnownPairs};
use crate::error::Result;
use crate::linmodel::SpectralModel;

/// `J = ½ wᵀCw - ½ l (wᵀw - 1)`.
pub fn lagrange_value(c: &DMatrix<f64>, s: &EigenState) -> f64 {
    0.5 * s.w.dot(&(c * &s.w)) - 0.5 * s.l * (s.w.dot(&s.w) - 1.0)
}

/// `(Cw - lw, -½(wᵀw - 1))`, length `n + 1`.
pub fn lagrange_gradient(c: &DMatrix<f64>, s: &EigenState) -> DVector<f64> {
    let eigen = c * &s.w - &s.w * s.l;
    let constraint = -0.5 * (s.w.dot(&s.w) - 1.0);
    EigenState::new(eigen, constraint).to_vector()
}

/// Bordered Hessian `[[C - lI, -w], [-wᵀ, 0]]`.
pub fn lagrange_hessian(c: &DMatrix<f64>, s: &EigenState) -> DMatrix<f64> {
    let n = s.n();
    let mut h = DMatrix::zeros(n + 1, n + 1);
    h.view_mut((0, 0), (n, n)).copy_from(c);
    for i in 0..n {
        h[(i, i)] -= s.l;
        h[(i, n)] = -s.w[i];
        h[(n, i)] = -s.w[i];
    }
    h
}

/// Hessian in the eigenbasis of the model: `[[Λ - lI, -Vᵀw], [-wᵀV, 0]]`.
pub fn transformed_hessian(model: &SpectralModel, s: &EigenState) -> DMatrix<f64> {
    let n = model.n();
    let border = model.eigenvectors().transpose() * &s.w;
    let mut h = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        h[(i, i)] = model.eigenvalues()[i] - s.l;
        h[(i, n)] = -border[i];
        h[(n, i)] = -border[i];
    }
    h
}

/// Approximated inverse Hessian near the principal fixed point:
/// `[[l⁻¹(wwᵀ - I), -w], [-wᵀ, 0]]`.
pub fn inv_hessian_principal(s: &EigenState) -> Result<DMatrix<f64>> {
    inv_hessian_arbitrary(s, &KnownPairs::empty())
}

/// Approximated inverse Hessian near fixed point `p` given the preceding pairs:
/// top-left `Σ_{i<p} ((λ_i - l)⁻¹ + l⁻¹) v_i v_iᵀ + l⁻¹ wwᵀ - l⁻¹ I`, border `-w`.
pub fn inv_hessian_arbitrary(s: &EigenState, known: &KnownPairs) -> Result<DMatrix<f64>> {
    let n = s.n();
    let l_inv = 1.0 / guard("l", s.l)?;
    let mut top = DMatrix::<f64>::identity(n, n) * -l_inv;
    top.ger(l_inv, &s.w, &s.w, 1.0);
    for (v, lambda) in known.iter() {
        let gap = guard("λ_i - l", lambda - s.l)?;
        top.ger(1.0 / gap + l_inv, v, v, 1.0);
    }
    let mut h = DMatrix::zeros(n + 1, n + 1);
    h.view_mut((0, 0), (n, n)).copy_from(&top);
    for i in 0..n {
        h[(i, n)] = -s.w[i];
        h[(n, i)] = -s.w[i];
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::stability::{eigenvalues_general, spectra_match};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(values))
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> EigenState {
        let w = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        EigenState::new(w, rng.random_range(0.05..1.0))
    }

    // Central differences over the stacked (w, l) vector; independent of any crate code path.
    fn fd_gradient(f: impl Fn(&EigenState) -> f64, s: &EigenState, h: f64) -> DVector<f64> {
        let x = s.to_vector();
        DVector::from_fn(x.len(), |k, _| {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[k] += h;
            dn[k] -= h;
            (f(&EigenState::from_vector(&up)) - f(&EigenState::from_vector(&dn))) / (2.0 * h)
        })
    }

    #[test]
    fn value_examples() {
        let model = SpectralModel::loglinear(5, 2).unwrap();
        for q in 1..=5 {
            let s = EigenState::new(model.eigenvector(q), 17.0);
            assert!((lagrange_value(model.covariance(), &s) - model.eigenvalue(q) / 2.0).abs() < 1e-14);
        }
        let s = EigenState::new(DVector::from_vec(vec![1.0, 0.0]), 3.0);
        assert_eq!(lagrange_value(&diag(&[2.0, 1.0]), &s), 1.0);
        let s = EigenState::new(DVector::zeros(2), 5.0);
        assert_eq!(lagrange_value(&diag(&[2.0, 1.0]), &s), 2.5);
    }

    #[test]
    fn gradient_examples() {
        let model = SpectralModel::loglinear(5, 2).unwrap();
        for q in 1..=5 {
            let s = EigenState::from_pair(&model.pair(q));
            assert!(lagrange_gradient(model.covariance(), &s).amax() < 1e-15);
        }
        let s = EigenState::new(DVector::from_vec(vec![1.0, 0.0]), 1.0);
        assert_eq!(lagrange_gradient(&diag(&[3.0, 1.0]), &s).as_slice(), &[2.0, 0.0, 0.0]);
    }

    #[test]
    fn hessian_example() {
        let s = EigenState::new(DVector::from_vec(vec![1.0, 0.0]), 1.0);
        let h = lagrange_hessian(&diag(&[3.0, 1.0]), &s);
        let want = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
        assert_eq!(h, want);
        assert_eq!(h.transpose(), h);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let model = SpectralModel::loglinear(6, 4).unwrap();
        let c = model.covariance();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let s = random_state(&mut rng, 6);
            let g = lagrange_gradient(c, &s);
            let fd = fd_gradient(|x| lagrange_value(c, x), &s, 1e-6);
            assert!((&g - fd).amax() < 1e-6);
            let h = lagrange_hessian(c, &s);
            for k in 0..7 {
                let fd_col = fd_gradient(|x| lagrange_gradient(c, x)[k], &s, 1e-6);
                assert!((h.row(k).transpose() - fd_col).amax() < 1e-5);
            }
        }
    }

    #[test]
    fn transformed_hessian_matches_similarity_transform() {
        let model = SpectralModel::loglinear(5, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_state(&mut rng, 5);
        let mut t = DMatrix::<f64>::zeros(6, 6);
        t.view_mut((0, 0), (5, 5)).copy_from(model.eigenvectors());
        t[(5, 5)] = 1.0;
        let explicit = t.transpose() * lagrange_hessian(model.covariance(), &s) * &t;
        let star = transformed_hessian(&model, &s);
        assert!((&explicit - &star).amax() < 1e-14);
        let a = eigenvalues_general(&star).unwrap();
        let b = eigenvalues_general(&lagrange_hessian(model.covariance(), &s)).unwrap();
        assert!(spectra_match(&a, &b, 1e-10).is_some());
    }

    #[test]
    fn transformed_hessian_at_principal_fixed_point() {
        let model = SpectralModel::loglinear(4, 8).unwrap();
        let h = transformed_hessian(&model, &EigenState::from_pair(&model.pair(1)));
        for i in 0..4 {
            let border = if i == 0 { -1.0 } else { 0.0 };
            assert!((h[(i, 4)] - border).abs() < 1e-14);
            assert!((h[(i, i)] - (model.eigenvalues()[i] - model.eigenvalue(1))).abs() < 1e-15);
        }
        let zero = transformed_hessian(&model, &EigenState::zeros(4));
        let mut want = DMatrix::zeros(5, 5);
        for i in 0..4 {
            want[(i, i)] = model.eigenvalues()[i];
        }
        assert_eq!(zero, want);
    }

    #[test]
    fn inverse_principal_examples() {
        let s = EigenState::new(DVector::from_vec(vec![1.0, 0.0]), 2.0);
        let h = inv_hessian_principal(&s).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, -1.0, 0.0, -0.5, 0.0, -1.0, 0.0, 0.0]);
        assert_eq!(h, want);

        let h = inv_hessian_principal(&EigenState::new(DVector::zeros(3), 1.0)).unwrap();
        let mut want = DMatrix::<f64>::identity(4, 4) * -1.0;
        want[(3, 3)] = 0.0;
        assert_eq!(h, want);

        assert!(matches!(
            inv_hessian_principal(&EigenState::new(DVector::zeros(3), 0.0)),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn inverse_principal_approximates_true_inverse_under_dominant_gap() {
        let model = SpectralModel::from_spectrum(&[1.0, 1e-6, 1e-7], 2).unwrap();
        let s = EigenState::from_pair(&model.pair(1));
        let prod = inv_hessian_principal(&s).unwrap() * lagrange_hessian(model.covariance(), &s);
        let residual = (prod - DMatrix::<f64>::identity(4, 4)).amax();
        assert!(residual <= 1.01e-6, "residual {residual}");
    }

    #[test]
    fn inverse_arbitrary_examples() {
        let s = EigenState::new(DVector::from_vec(vec![0.0, 1.0]), 1.0);
        let known = KnownPairs::new(vec![(DVector::from_vec(vec![1.0, 0.0]), 4.0)]).unwrap();
        let h = inv_hessian_arbitrary(&s, &known).unwrap();
        assert!((h[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(h[(1, 1)], 0.0);
        assert_eq!(h[(0, 1)], 0.0);
        assert_eq!(h[(1, 2)], -1.0);
        assert_eq!(h[(0, 2)], 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_state(&mut rng, 4);
        assert_eq!(inv_hessian_arbitrary(&s, &KnownPairs::empty()).unwrap(), inv_hessian_principal(&s).unwrap());

        let model = SpectralModel::loglinear(4, 1).unwrap();
        let known = KnownPairs::preceding(&model, 2);
        let near = EigenState::new(model.eigenvector(2), model.eigenvalue(1) - 1e-13);
        assert!(matches!(inv_hessian_arbitrary(&near, &known), Err(Error::Singularity { .. })));
    }

    #[test]
    fn inverse_arbitrary_is_exact_inverse_at_fixed_point_when_trailing_block_is_approximated() {
        // With λ_k = 0 for k > p the approximation λ_k - λ_p ≈ -λ_p is exact, so
        // H⁻¹ H = I at the fixed point.
        let v = crate::linmodel::random_orthogonal(4, 9);
        let values = [4.0, 2.0, 1.0, 0.0];
        let c = &v * DMatrix::from_diagonal(&DVector::from_row_slice(&values)) * v.transpose();
        let p = 3;
        let known = KnownPairs::new((1..p).map(|i| (v.column(i - 1).clone_owned(), values[i - 1])).collect()).unwrap();
        let s = EigenState::new(v.column(p - 1).clone_owned(), values[p - 1]);
        let prod = inv_hessian_arbitrary(&s, &known).unwrap() * lagrange_hessian(&c, &s);
        assert!((prod - DMatrix::<f64>::identity(5, 5)).amax() < 1e-12);
    }
}
