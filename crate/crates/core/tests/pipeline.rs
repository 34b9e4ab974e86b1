use cpca::dynamics::{initial_chain, run_chain, ChainScheme, InitConfig, IntegratorConfig, LInit, TerminationStatus, WInit};
use cpca::stability::{arbitrary_spectrum, perturbation_probe, Classification};
use cpca::{RuleKind, SpectralModel};

fn integrator(normalize: bool) -> IntegratorConfig {
    IntegratorConfig {
        gamma: 0.01,
        steps: 20_000,
        normalize_each_step: normalize,
        ..IntegratorConfig::default()
    }
}

#[test]
fn exported_model_drives_identical_runs() {
    let model = SpectralModel::loglinear(6, 9).unwrap();
    let imported = SpectralModel::from_json(&model.to_json()).unwrap();
    let init = InitConfig { w: WInit::RandomUnit, l: LInit::Uniform([0.025, 0.075]) };
    let run = |m: &SpectralModel| {
        let chain = initial_chain(m, 3, 0, &init, 4).unwrap();
        run_chain(m, RuleKind::Deflation, &chain, 0, ChainScheme::Sequential, &integrator(false)).unwrap()
    };
    let (a, b) = (run(&model), run(&imported));
    assert_eq!(a.final_state, b.final_state);
    assert!(a.records.iter().all(|r| r.status == TerminationStatus::Converged));
}

#[test]
fn sequential_and_parallel_schemes_recover_the_leading_pairs() {
    let model = SpectralModel::loglinear(5, 2).unwrap();
    let init = InitConfig { w: WInit::RandomUnit, l: LInit::Relative([0.5, 1.5]) };
    let chain = initial_chain(&model, 3, 0, &init, 8).unwrap();
    for (kind, scheme) in [(RuleKind::Arbitrary, ChainScheme::Sequential), (RuleKind::Deflation, ChainScheme::Parallel)] {
        let run = run_chain(&model, kind, &chain, 0, scheme, &integrator(true)).unwrap();
        for record in &run.records {
            assert!(record.reached(1e-6, 1e-6), "{scheme:?} stage {}: {:?}", record.stage, record.status);
        }
    }
}

#[test]
fn probe_settles_what_the_linear_analysis_cannot() {
    let model = SpectralModel::loglinear(6, 1).unwrap();
    let analytic = arbitrary_spectrum(model.eigenvalues(), 3, 1).unwrap();
    assert_eq!(analytic.classification, Classification::Indeterminate);
    let probe = perturbation_probe(&model, RuleKind::Arbitrary, 3, 1, 300, 1e-4, 0).unwrap();
    assert!(probe.positive_count > 0);
}
