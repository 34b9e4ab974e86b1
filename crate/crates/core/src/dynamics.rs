//! Euler integration of the learning rules.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmodel::{EigenPair, SpectralModel};
use crate::rules::{rhs_stage, ChainState, EigenState, RuleKind};

/// An estimate this close to the origin counts as the zero-vector fixed point.
pub const ZERO_VECTOR_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub gamma: f64,
    pub steps: usize,
    pub normalize_each_step: bool,
    #[serde(default = "defaults::convergence_tol")]
    pub convergence_tol: f64,
    #[serde(default = "defaults::divergence_cap")]
    pub divergence_cap: f64,
    #[serde(default = "defaults::sample_stride")]
    pub sample_stride: usize,
}

mod defaults {
    pub fn convergence_tol() -> f64 {
        1e-9
    }
    pub fn divergence_cap() -> f64 {
        1e6
    }
    pub fn sample_stride() -> usize {
        100
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-3,
            steps: 100_000,
            normalize_each_step: true,
            convergence_tol: defaults::convergence_tol(),
            divergence_cap: defaults::divergence_cap(),
            sample_stride: defaults::sample_stride(),
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Dimension(format!("{name} must be positive, got {x}")))
            }
        };
        positive("gamma", self.gamma)?;
        positive("convergence_tol", self.convergence_tol)?;
        positive("divergence_cap", self.divergence_cap)?;
        if self.steps == 0 {
            return Err(Error::Dimension("steps must be at least 1".into()));
        }
        if self.sample_stride == 0 {
            return Err(Error::Dimension("sample_stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationStatus {
    Converged,
    /// Converged to the spurious fixed point at `w = 0`.
    ZeroVector,
    StepCap,
    Diverged,
    Singular,
    Nan,
    /// Not integrated because an earlier stage of a sequential chain failed.
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainScheme {
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub step: usize,
    pub stage: usize,
    pub vec_err: f64,
    pub val_err: f64,
    pub w_norm: f64,
    pub l: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub stage: usize,
    pub status: TerminationStatus,
    /// Euler steps actually applied.
    pub steps: usize,
    pub samples: Vec<Sample>,
    pub final_state: EigenState,
}

impl TrajectoryRecord {
    /// The last recorded sample, which always describes the final state.
    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn reached(&self, vec_tol: f64, val_tol: f64) -> bool {
        self.last().is_some_and(|s| s.vec_err < vec_tol && s.val_err < val_tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    pub records: Vec<TrajectoryRecord>,
    pub final_state: ChainState,
}

/// Initial eigenvalue estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LInit {
    Fixed(f64),
    Uniform([f64; 2]),
    /// Uniform in `[lo·λ_p, hi·λ_p]` for stage `p`.
    Relative([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WInit {
    RandomUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub w: WInit,
    pub l: LInit,
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        match self.l {
            LInit::Fixed(x) if !x.is_finite() => Err(Error::Dimension("l.fixed must be finite".into())),
            LInit::Uniform([lo, hi]) | LInit::Relative([lo, hi]) if !(lo <= hi && lo.is_finite() && hi.is_finite()) => {
                Err(Error::Dimension(format!("l range [{lo}, {hi}] is empty or not finite")))
            }
            _ => Ok(()),
        }
    }
}

/// Returns `min_s ‖w - s·v‖` over `s ∈ {+1, -1}` and the minimizing sign.
pub fn align_sign(w: &DVector<f64>, v: &DVector<f64>) -> Result<(f64, f64)> {
    if v.norm() == 0.0 {
        return Err(Error::Degenerate("zero reference vector"));
    }
    let plus = (w - v).norm();
    let minus = (w + v).norm();
    Ok(if minus < plus { (minus, -1.0) } else { (plus, 1.0) })
}

/// Draws a direction uniformly from the unit sphere.
pub fn random_unit(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 {
            return g / norm;
        }
    }
}

/// Builds a seeded initial chain. Stages `1..=pinned` sit on the true
/// eigenpairs; the remaining stages draw `w` then `l` in stage order.
pub fn initial_chain(model: &SpectralModel, m: usize, pinned: usize, init: &InitConfig, seed: u64) -> Result<ChainState> {
    init.validate()?;
    if pinned >= m {
        return Err(Error::Index(format!("pinned = {pinned} leaves no stage to integrate out of m = {m}")));
    }
    let mut chain = ChainState::from_model(model, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in pinned + 1..=m {
        let WInit::RandomUnit = init.w;
        let w = random_unit(&mut rng, model.n());
        let l = match init.l {
            LInit::Fixed(x) => x,
            LInit::Uniform([lo, hi]) => sample_range(&mut rng, lo, hi),
            LInit::Relative([lo, hi]) => model.eigenvalue(p) * sample_range(&mut rng, lo, hi),
        };
        chain.set_stage(p, &EigenState::new(w, l));
    }
    Ok(chain)
}

fn sample_range(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn sample(step: usize, stage: usize, s: &EigenState, target: &EigenPair) -> Sample {
    let (vec_err, _) = align_sign(&s.w, target.vector()).expect("eigen pairs have unit vectors");
    Sample {
        step,
        stage,
        vec_err,
        val_err: (s.l - target.value()).abs(),
        w_norm: s.w.norm(),
        l: s.l,
    }
}

fn euler_update(s: &mut EigenState, r: &EigenState, config: &IntegratorConfig) {
    s.w.axpy(config.gamma, &r.w, 1.0);
    s.l += config.gamma * r.l;
    if config.normalize_each_step {
        let norm = s.w.norm();
        s.w /= norm;
    }
}

// Status for a state before the rhs is evaluated, if it is already terminal.
fn state_failure(max_abs: f64, finite: bool, config: &IntegratorConfig) -> Option<TerminationStatus> {
    if !finite {
        Some(TerminationStatus::Nan)
    } else if max_abs > config.divergence_cap {
        Some(TerminationStatus::Diverged)
    } else {
        None
    }
}

fn converged_status(w: &DVector<f64>) -> TerminationStatus {
    if w.norm() < ZERO_VECTOR_TOLERANCE {
        TerminationStatus::ZeroVector
    } else {
        TerminationStatus::Converged
    }
}

/// Integrates one stage with Euler steps `state ← state + γ·rhs(state)`.
///
/// Convergence is checked on the rhs before each step, so a run started at a
/// fixed point terminates at step 0. Samples are taken every
/// `sample_stride` steps and once more at termination.
pub fn euler_run<F>(rhs: F, initial: &EigenState, config: &IntegratorConfig, target: &EigenPair, stage: usize) -> TrajectoryRecord
where
    F: Fn(&EigenState) -> Result<EigenState>,
{
    let mut state = initial.clone();
    let mut samples = Vec::new();
    let mut step = 0;
    let status = loop {
        let sampled = step % config.sample_stride == 0;
        if sampled {
            samples.push(sample(step, stage, &state, target));
        }
        if let Some(status) = state_failure(state.max_abs(), state.is_finite(), config) {
            break status;
        }
        let r = match rhs(&state) {
            Ok(r) => r,
            Err(_) => break TerminationStatus::Singular,
        };
        if !r.is_finite() {
            break TerminationStatus::Nan;
        }
        if r.max_abs() < config.convergence_tol {
            break converged_status(&state.w);
        }
        if step == config.steps {
            break TerminationStatus::StepCap;
        }
        euler_update(&mut state, &r, config);
        step += 1;
    };
    if samples.last().map(|s| s.step) != Some(step) {
        samples.push(sample(step, stage, &state, target));
    }
    TrajectoryRecord {
        stage,
        status,
        steps: step,
        samples,
        final_state: state,
    }
}

/// Integrates stages `pinned+1..=m` of a chain toward the model's eigenpairs.
///
/// Sequential: each stage runs to termination with earlier stages frozen at
/// their final estimates; stages after a failed one are skipped.
/// Parallel: all free stages advance together from the same chain state.
pub fn run_chain(
    model: &SpectralModel,
    kind: RuleKind,
    initial: &ChainState,
    pinned: usize,
    scheme: ChainScheme,
    config: &IntegratorConfig,
) -> Result<ChainRun> {
    config.validate()?;
    let m = initial.m();
    if initial.n() != model.n() {
        return Err(Error::Dimension(format!("chain has n = {}, model n = {}", initial.n(), model.n())));
    }
    if pinned >= m {
        return Err(Error::Index(format!("pinned = {pinned} leaves no stage to integrate out of m = {m}")));
    }
    match scheme {
        ChainScheme::Sequential => Ok(run_sequential(model, kind, initial, pinned, config)),
        ChainScheme::Parallel => Ok(run_parallel(model, kind, initial, pinned, config)),
    }
}

fn run_sequential(model: &SpectralModel, kind: RuleKind, initial: &ChainState, pinned: usize, config: &IntegratorConfig) -> ChainRun {
    let c = model.covariance();
    let mut chain = initial.clone();
    let mut records = Vec::new();
    let mut failed = false;
    for p in pinned + 1..=chain.m() {
        let start = chain.stage(p);
        if failed {
            records.push(TrajectoryRecord {
                stage: p,
                status: TerminationStatus::Skipped,
                steps: 0,
                samples: Vec::new(),
                final_state: start,
            });
            continue;
        }
        let frozen = chain.clone();
        let record = euler_run(
            |s| {
                let mut trial = frozen.clone();
                trial.set_stage(p, s);
                rhs_stage(kind, c, &trial, p)
            },
            &start,
            config,
            &model.pair(p),
            p,
        );
        chain.set_stage(p, &record.final_state);
        failed = record.status != TerminationStatus::Converged;
        records.push(record);
    }
    ChainRun {
        records,
        final_state: chain,
    }
}

fn run_parallel(model: &SpectralModel, kind: RuleKind, initial: &ChainState, pinned: usize, config: &IntegratorConfig) -> ChainRun {
    let c = model.covariance();
    let stages: Vec<usize> = (pinned + 1..=initial.m()).collect();
    let targets: Vec<EigenPair> = stages.iter().map(|&p| model.pair(p)).collect();
    let mut chain = initial.clone();
    let mut samples: Vec<Vec<Sample>> = vec![Vec::new(); stages.len()];
    let record_all = |chain: &ChainState, step: usize, samples: &mut Vec<Vec<Sample>>| {
        for (k, &p) in stages.iter().enumerate() {
            samples[k].push(sample(step, p, &chain.stage(p), &targets[k]));
        }
    };
    let mut step = 0;
    let mut last_sampled = None;
    let status = 'outer: loop {
        if step % config.sample_stride == 0 {
            record_all(&chain, step, &mut samples);
            last_sampled = Some(step);
        }
        let finite = chain.w.iter().chain(chain.l.iter()).all(|x| x.is_finite());
        let max_abs = chain.w.amax().max(chain.l.iter().fold(0.0, |a, x| a.max(x.abs())));
        if let Some(status) = state_failure(max_abs, finite, config) {
            break status;
        }
        let mut rates = Vec::with_capacity(stages.len());
        let mut largest: f64 = 0.0;
        for &p in &stages {
            match rhs_stage(kind, c, &chain, p) {
                Ok(r) if r.is_finite() => {
                    largest = largest.max(r.max_abs());
                    rates.push(r);
                }
                Ok(_) => break 'outer TerminationStatus::Nan,
                Err(_) => break 'outer TerminationStatus::Singular,
            }
        }
        if largest < config.convergence_tol {
            let any_zero = stages.iter().any(|&p| chain.w.column(p - 1).norm() < ZERO_VECTOR_TOLERANCE);
            break if any_zero { TerminationStatus::ZeroVector } else { TerminationStatus::Converged };
        }
        if step == config.steps {
            break TerminationStatus::StepCap;
        }
        for (&p, r) in stages.iter().zip(&rates) {
            let mut s = chain.stage(p);
            euler_update(&mut s, r, config);
            chain.set_stage(p, &s);
        }
        step += 1;
    };
    if last_sampled != Some(step) {
        record_all(&chain, step, &mut samples);
    }
    let records = stages
        .iter()
        .zip(samples)
        .map(|(&p, samples)| TrajectoryRecord {
            stage: p,
            status,
            steps: step,
            samples,
            final_state: chain.stage(p),
        })
        .collect();
    ChainRun {
        records,
        final_state: chain,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::rhs_principal;

    fn model() -> SpectralModel {
        SpectralModel::loglinear(10, 42).unwrap()
    }

    #[test]
    fn align_sign_examples() {
        let v = DVector::from_row_slice(&[0.6, 0.8, 0.0]);
        assert_eq!(align_sign(&v, &v).unwrap(), (0.0, 1.0));
        assert_eq!(align_sign(&-&v, &v).unwrap(), (0.0, -1.0));
        let delta = DVector::from_row_slice(&[0.0, 0.0, 1e-3]);
        let (err, sign) = align_sign(&(&v + delta), &v).unwrap();
        assert!((err - 1e-3).abs() < 1e-15);
        assert_eq!(sign, 1.0);
        assert!(matches!(align_sign(&v, &DVector::zeros(3)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn start_at_fixed_point_converges_immediately() {
        let model = model();
        let start = EigenState::from_pair(&model.pair(1));
        let rec = euler_run(|s| rhs_principal(model.covariance(), s), &start, &IntegratorConfig::default(), &model.pair(1), 1);
        assert_eq!(rec.status, TerminationStatus::Converged);
        assert_eq!(rec.steps, 0);
        assert_eq!(rec.final_state, start);
        assert_eq!(rec.samples.len(), 1);
        assert!(rec.samples[0].vec_err < 1e-12);
    }

    #[test]
    fn principal_rule_converges_from_random_start() {
        let model = model();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let config = IntegratorConfig {
            normalize_each_step: false,
            ..Default::default()
        };
        let start = EigenState::new(random_unit(&mut rng, 10), 0.9 * model.eigenvalue(1));
        let rec = euler_run(|s| rhs_principal(model.covariance(), s), &start, &config, &model.pair(1), 1);
        assert_eq!(rec.status, TerminationStatus::Converged);
        assert!(rec.reached(1e-6, 1e-8));
    }

    #[test]
    fn normalization_keeps_unit_length() {
        let model = model();
        let chain = initial_chain(&model, 3, 2, &InitConfig { w: WInit::RandomUnit, l: LInit::Relative([0.5, 1.5]) }, 3).unwrap();
        let config = IntegratorConfig {
            steps: 2_000,
            sample_stride: 1,
            ..Default::default()
        };
        let run = run_chain(&model, RuleKind::Arbitrary, &chain, 2, ChainScheme::Sequential, &config).unwrap();
        for s in &run.records[0].samples {
            assert!((s.w_norm - 1.0).abs() <= 1e-15, "step {}: {}", s.step, s.w_norm);
        }
    }

    #[test]
    fn steps_are_monotone_and_strided() {
        let model = model();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let start = EigenState::new(random_unit(&mut rng, 10), 0.2);
        let config = IntegratorConfig {
            steps: 1_050,
            ..Default::default()
        };
        let rec = euler_run(|s| rhs_principal(model.covariance(), s), &start, &config, &model.pair(1), 1);
        assert_eq!(rec.status, TerminationStatus::StepCap);
        assert_eq!(rec.steps, 1_050);
        let steps: Vec<usize> = rec.samples.iter().map(|s| s.step).collect();
        assert_eq!(steps.len(), 12);
        assert_eq!(steps[10], 1_000);
        assert_eq!(*steps.last().unwrap(), 1_050);
        assert!(steps.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn singular_and_diverged_statuses() {
        let model = model();
        let start = EigenState::new(model.eigenvector(2), 0.0);
        let rec = euler_run(|s| rhs_principal(model.covariance(), s), &start, &IntegratorConfig::default(), &model.pair(1), 1);
        assert_eq!(rec.status, TerminationStatus::Singular);

        let blowup = |s: &EigenState| Ok(EigenState::new(s.w.clone() * 1e3, s.l));
        let config = IntegratorConfig {
            gamma: 1.0,
            normalize_each_step: false,
            ..Default::default()
        };
        let rec = euler_run(blowup, &EigenState::new(model.eigenvector(1), 1.0), &config, &model.pair(1), 1);
        assert_eq!(rec.status, TerminationStatus::Diverged);

        let nan = |s: &EigenState| Ok(EigenState::new(s.w.clone(), f64::NAN));
        let rec = euler_run(nan, &EigenState::new(model.eigenvector(1), 1.0), &config, &model.pair(1), 1);
        assert_eq!(rec.status, TerminationStatus::Nan);
    }

    #[test]
    fn single_stage_chain_matches_euler_run() {
        let model = model();
        let init = InitConfig { w: WInit::RandomUnit, l: LInit::Fixed(0.3) };
        let chain = initial_chain(&model, 1, 0, &init, 9).unwrap();
        let config = IntegratorConfig::default();
        for scheme in [ChainScheme::Sequential, ChainScheme::Parallel] {
            let run = run_chain(&model, RuleKind::Deflation, &chain, 0, scheme, &config).unwrap();
            let direct = euler_run(|s| rhs_principal(model.covariance(), s), &chain.stage(1), &config, &model.pair(1), 1);
            assert_eq!(run.records, vec![direct]);
        }
    }

    #[test]
    fn one_step_from_fixed_point_is_exact() {
        let model = model();
        let chain = ChainState::from_model(&model, 4).unwrap();
        let config = IntegratorConfig {
            convergence_tol: 1e-300,
            steps: 1,
            ..Default::default()
        };
        for kind in [RuleKind::Deflation, RuleKind::Arbitrary] {
            let run = run_chain(&model, kind, &chain, 0, ChainScheme::Parallel, &config).unwrap();
            assert!((&run.final_state.w - &chain.w).amax() < 1e-15);
        }
    }

    #[test]
    fn sequential_and_parallel_reach_same_fixed_points() {
        let model = model();
        let init = InitConfig { w: WInit::RandomUnit, l: LInit::Relative([0.8, 1.2]) };
        let chain = initial_chain(&model, 3, 0, &init, 17).unwrap();
        let config = IntegratorConfig::default();
        let seq = run_chain(&model, RuleKind::Deflation, &chain, 0, ChainScheme::Sequential, &config).unwrap();
        let par = run_chain(&model, RuleKind::Deflation, &chain, 0, ChainScheme::Parallel, &config).unwrap();
        for (a, b) in seq.records.iter().zip(&par.records) {
            assert_eq!(a.status, TerminationStatus::Converged);
            assert_eq!(b.status, TerminationStatus::Converged);
            assert!(a.reached(1e-6, 1e-8) && b.reached(1e-6, 1e-8));
        }
    }

    #[test]
    fn sequential_chain_skips_after_failure() {
        let model = model();
        let init = InitConfig { w: WInit::RandomUnit, l: LInit::Fixed(0.3) };
        let chain = initial_chain(&model, 3, 0, &init, 2).unwrap();
        let config = IntegratorConfig {
            steps: 10,
            ..Default::default()
        };
        let run = run_chain(&model, RuleKind::Deflation, &chain, 0, ChainScheme::Sequential, &config).unwrap();
        assert_eq!(run.records[0].status, TerminationStatus::StepCap);
        assert_eq!(run.records[1].status, TerminationStatus::Skipped);
        assert_eq!(run.records[2].status, TerminationStatus::Skipped);
        assert!(run.records[2].samples.is_empty());
    }

    #[test]
    fn runs_are_deterministic() {
        let model = model();
        let init = InitConfig { w: WInit::RandomUnit, l: LInit::Uniform([0.03, 0.07]) };
        let config = IntegratorConfig {
            steps: 5_000,
            ..Default::default()
        };
        let a = initial_chain(&model, 3, 2, &init, 11).unwrap();
        let b = initial_chain(&model, 3, 2, &init, 11).unwrap();
        assert_eq!(a, b);
        let ra = run_chain(&model, RuleKind::Arbitrary, &a, 2, ChainScheme::Sequential, &config).unwrap();
        let rb = run_chain(&model, RuleKind::Arbitrary, &b, 2, ChainScheme::Sequential, &config).unwrap();
        assert_eq!(ra, rb);
        assert_ne!(initial_chain(&model, 3, 2, &init, 12).unwrap(), a);
    }

    #[test]
    fn invalid_configuration_is_rejected() {
        let model = model();
        let chain = ChainState::from_model(&model, 2).unwrap();
        let bad = IntegratorConfig { gamma: 0.0, ..Default::default() };
        assert!(run_chain(&model, RuleKind::Arbitrary, &chain, 0, ChainScheme::Sequential, &bad).is_err());
        let good = IntegratorConfig::default();
        assert!(run_chain(&model, RuleKind::Arbitrary, &chain, 2, ChainScheme::Sequential, &good).is_err());
        let init = InitConfig { w: WInit::RandomUnit, l: LInit::Uniform([1.0, 0.5]) };
        assert!(initial_chain(&model, 2, 0, &init, 0).is_err());
    }

    #[test]
    fn config_serde_shape() {
        let init: InitConfig = serde_json::from_str(r#"{"w": "random_unit", "l": {"uniform": [0.1, 0.2]}}"#).unwrap();
        assert_eq!(init.l, LInit::Uniform([0.1, 0.2]));
        let init: InitConfig = serde_json::from_str(r#"{"w": "random_unit", "l": {"fixed": 0.5}}"#).unwrap();
        assert_eq!(init.l, LInit::Fixed(0.5));
        let cfg: IntegratorConfig = serde_json::from_str(r#"{"gamma": 0.001, "steps": 10, "normalize_each_step": true}"#).unwrap();
        assert_eq!(cfg.sample_stride, 100);
        assert!(serde_json::from_str::<IntegratorConfig>(r#"{"gamma": 0.001, "steps": 10, "normalize_each_step": true, "x": 1}"#).is_err());
        assert_eq!(serde_json::to_string(&TerminationStatus::StepCap).unwrap(), "\"step_cap\"");
    }
}
