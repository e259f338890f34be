//! Shared helpers for unit tests: a known homogeneous ZOIB data-generating
//! process and samples drawn from it.

use crate::model::{
    build_design, intercept_only_regression, predict_zoib_params, CoefficientSet, Dataset,
    ModelSpec, RegressionCoefficients,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The fixed "truth" used by self-consistency tests: a homogeneous model
/// with two covariates and moderate slopes in several components.
pub(crate) fn synthetic_truth() -> CoefficientSet {
    let spec = ModelSpec::default();
    let mut med: RegressionCoefficients =
        intercept_only_regression(&spec, 2, false, 0.15, 0.1, 0.55, 6.0);
    let mut out: RegressionCoefficients =
        intercept_only_regression(&spec, 2, true, 0.1, 0.12, 0.5, 5.0);
    // Design order: [intercept, x1, x2, a, (m)].
    med.alpha.banks[0][1] = 0.4;
    med.alpha.banks[0][3] = -0.5;
    med.mu.banks[0][1] = 0.5;
    med.mu.banks[0][2] = -0.3;
    med.mu.banks[0][3] = 0.6;
    med.phi.banks[0][2] = 0.2;
    out.alpha.banks[0][3] = -0.4;
    out.alpha.banks[0][4] = -0.8;
    out.mu.banks[0][1] = 0.3;
    out.mu.banks[0][3] = 0.4;
    out.mu.banks[0][4] = 1.1;
    out.gamma.banks[0][2] = 0.3;
    CoefficientSet { mediator: med, outcome: out }
}

/// A dataset of size `n` sampled from [`synthetic_truth`] with uniform
/// covariates on `[-1, 1]` and a fair treatment coin.
pub(crate) fn synthetic_dataset(seed: u64, n: usize) -> Dataset {
    let spec = ModelSpec::default();
    let truth = synthetic_truth();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut covs = Vec::with_capacity(n);
    let mut treat = Vec::with_capacity(n);
    let mut ms = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = vec![rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0];
        let a = u8::from(rng.random::<f64>() < 0.5);
        let mrow = build_design(&spec, &x, a, None);
        let mp = predict_zoib_params(&truth.mediator, &mrow, a).unwrap();
        let m = mp.sample(&mut rng);
        let yrow = build_design(&spec, &x, a, Some(m));
        let yp = predict_zoib_params(&truth.outcome, &yrow, a).unwrap();
        let y = yp.sample(&mut rng);
        covs.push(x);
        treat.push(a);
        ms.push(m);
        ys.push(y);
    }
    Dataset::new(covs, treat, ms, ys, vec!["x1".into(), "x2".into()], vec![]).unwrap()
}
