use qwgrowth::dynamics::{
    simulate_alpha, simulate_pushblock_continuous, simulate_rightpush_continuous, simulate_rsk_continuous,
    AlphaDynamic, Trajectory,
};
use qwgrowth::moments::q_moment;
use qwgrowth::{InterlacingArray, ModelParams, Result, Specialization};
use rayon::prelude::*;

type Runner = fn(&InterlacingArray, &ModelParams, f64, &[f64], u64) -> Result<Trajectory>;

fn observable(s: &InterlacingArray, q: f64, n: usize, r: usize) -> f64 {
    let e: i64 = (n + 1 - r..=n).map(|k| s.get(n, k)).sum();
    q.powi(e as i32)
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn continuous_dynamics_match_contour_moments() {
    let q = 0.5;
    let p = ModelParams::from_q(q, vec![1.0, 0.8, 1.2], Specialization::Plancherel { gamma: 1.0 }).unwrap();
    let cases = [(1, 1), (2, 1), (2, 2), (3, 2)];
    let exact: Vec<f64> = cases.iter().map(|&(n, r)| q_moment(&[n], &[r], &p).unwrap()).collect();
    let runners: [(&str, Runner); 3] = [
        ("pushblock", simulate_pushblock_continuous),
        ("rsk", simulate_rsk_continuous),
        ("rightpush", simulate_rightpush_continuous),
    ];
    for (name, run) in runners {
        let finals: Vec<InterlacingArray> = (0..20000u64)
            .into_par_iter()
            .map(|seed| run(&InterlacingArray::packed(3), &p, 1.0, &[1.0], seed).unwrap().last().clone())
            .collect();
        for (&(n, r), &want) in cases.iter().zip(&exact) {
            let xs: Vec<f64> = finals.iter().map(|s| observable(s, q, n, r)).collect();
            let (m, se) = mean_se(&xs);
            assert!((m - want).abs() < 4.0 * se, "{name} (n={n}, r={r}): {m} ± {se} vs {want}");
        }
    }
}

#[test]
fn alpha_dynamics_match_contour_moments() {
    let q = 0.5;
    let alpha = vec![0.4, 0.3, 0.5];
    let p = ModelParams::from_q(q, vec![1.0, 0.8, 1.2], Specialization::Alpha { alpha }).unwrap();
    let cases = [(1, 1), (2, 1), (2, 2), (3, 2), (3, 3)];
    let exact: Vec<f64> = cases.iter().map(|&(n, r)| q_moment(&[n], &[r], &p).unwrap()).collect();
    for dynamic in [AlphaDynamic::PushBlock, AlphaDynamic::Rsk] {
        let finals: Vec<InterlacingArray> = (0..20000u64)
            .into_par_iter()
            .map(|seed| simulate_alpha(&InterlacingArray::packed(3), &p, dynamic, seed).unwrap().last().clone())
            .collect();
        for (&(n, r), &want) in cases.iter().zip(&exact) {
            let xs: Vec<f64> = finals.iter().map(|s| observable(s, q, n, r)).collect();
            let (m, se) = mean_se(&xs);
            assert!((m - want).abs() < 4.0 * se, "{dynamic:?} (n={n}, r={r}): {m} ± {se} vs {want}");
        }
    }
}

#[test]
fn two_group_moment_matches_simulation() {
    let q = 0.5;
    let p = ModelParams::from_q(q, vec![1.0; 3], Specialization::Plancherel { gamma: 1.0 }).unwrap();
    let want = q_moment(&[3, 2], &[1, 1], &p).unwrap();
    let xs: Vec<f64> = (0..20000u64)
        .into_par_iter()
        .map(|seed| {
            let s = simulate_pushblock_continuous(&InterlacingArray::packed(3), &p, 1.0, &[1.0], seed).unwrap();
            observable(s.last(), q, 3, 1) * observable(s.last(), q, 2, 1)
        })
        .collect();
    let (m, se) = mean_se(&xs);
    assert!((m - want).abs() < 4.0 * se, "{m} ± {se} vs {want}");
}
