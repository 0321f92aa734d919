use qwgrowth::dynamics::simulate_pushblock_continuous;
use qwgrowth::fluctuations::{
    fluctuation_covariance, mc_fluctuation_covariance, scaled_fluctuations, standardized_third_absolute_moment,
    GAUSSIAN_THIRD_ABS,
};
use qwgrowth::moments::{lln_profile, LlnSpec};
use qwgrowth::{InterlacingArray, ModelParams, Specialization};
use rayon::prelude::*;

#[test]
fn scaled_push_block_fluctuations_match_covariance_formula() {
    let eps = 0.005;
    let tau = 1.0;
    let levels = 3;
    let p = ModelParams::new(eps, vec![1.0; levels], Specialization::Plancherel { gamma: tau / eps }).unwrap();
    let finals: Vec<InterlacingArray> = (0..10_000u64)
        .into_par_iter()
        .map(|seed| {
            simulate_pushblock_continuous(&InterlacingArray::packed(levels), &p, tau / eps, &[tau / eps], seed)
                .unwrap()
                .last()
                .clone()
        })
        .collect();
    let profile = lln_profile(levels, &LlnSpec::Plancherel { tau }, &[1.0; 3]).unwrap();
    let est = mc_fluctuation_covariance(&finals, &profile, eps).unwrap();
    let exact = fluctuation_covariance(levels, tau, &[1.0; 3]).unwrap();
    for i in 0..6 {
        for j in 0..=i {
            let z = (est.cov[i][j] - exact.matrix[i][j]) / est.se[i][j];
            assert!(z.abs() < 4.0, "({i},{j}): {} vs {} (z = {z:.2})", est.cov[i][j], exact.matrix[i][j]);
        }
    }
    let xi = scaled_fluctuations(&finals, &profile, eps);
    for i in 0..6 {
        let col: Vec<f64> = xi.iter().map(|r| r[i]).collect();
        let (m3, se) = standardized_third_absolute_moment(&col);
        assert!((m3 - GAUSSIAN_THIRD_ABS).abs() < 4.0 * se, "coordinate {i}: {m3} ± {se}");
    }
}
