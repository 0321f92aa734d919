//! The non-verify experiment kinds: simulate, lln, cov, sde, asympt.

use std::fs;
use std::path::Path;

use super::config::{DynamicName, ExperimentConfig, ExperimentKind, SdeSystem};
use super::ensemble::{ensemble_run, ensemble_run_with, Moments};
use super::report::{Cell, Report, Row, Table};
use super::split_seed;
use super::verify::LIMIT_GRID;
use crate::asymptotics::{
    finite_n_comparison, limit_covariance_bessel, limit_covariance_elliptic, limit_covariance_integral,
};
use crate::dynamics::{
    simulate_alpha, simulate_pushblock_continuous, simulate_rightpush_continuous, simulate_rsk_continuous,
    AlphaDynamic, Trajectory,
};
use crate::fluctuations::{fluctuation_covariance, scaled_fluctuations, simulate_xi_sde, SdeOptions};
use crate::largetime::{simulate_zeta_sde, zeta_covariance_matrix, ZetaMethod, ZetaSdeOptions};
use crate::moments::{lln_profile, LlnSpec};
use crate::qcore::flat_index;
use crate::{Error, InterlacingArray, ModelParams, Result, Specialization};

pub fn tolerance_defaults(kind: ExperimentKind) -> &'static [(&'static str, f64)] {
    match kind {
        ExperimentKind::Simulate => &[("factor", 5.0)],
        ExperimentKind::Cov | ExperimentKind::Sde => &[("z", 4.0)],
        ExperimentKind::Asympt => &[("elliptic", 1e-6)],
        ExperimentKind::Lln | ExperimentKind::Verify => &[],
    }
}

fn tol(cfg: &ExperimentConfig, key: &str) -> f64 {
    cfg.tolerance
        .get(key)
        .copied()
        .or_else(|| tolerance_defaults(cfg.kind).iter().find(|(k, _)| *k == key).map(|(_, v)| *v))
        .expect("declared tolerance key")
}

pub(crate) fn validate_tolerances(cfg: &ExperimentConfig) -> Result<()> {
    let keys = tolerance_defaults(cfg.kind);
    match cfg.tolerance.keys().find(|k| !keys.iter().any(|(d, _)| d == k)) {
        Some(k) => Err(Error::Config(format!("unknown tolerance '{k}' for {}", cfg.kind.name()))),
        None => Ok(()),
    }
}

fn speeds(cfg: &ExperimentConfig, levels: usize) -> Result<Vec<f64>> {
    match &cfg.model.a {
        Some(a) if a.len() < levels => Err(Error::Config(format!("need {levels} speeds, got {}", a.len()))),
        Some(a) => Ok(a[..levels].to_vec()),
        None => Ok(vec![1.0; levels]),
    }
}

fn eps_of(cfg: &ExperimentConfig, default: f64) -> f64 {
    match (cfg.model.eps, cfg.model.q) {
        (Some(e), _) => e,
        (None, Some(q)) => -q.ln(),
        _ => default,
    }
}

fn index_map(levels: usize) -> Vec<(usize, usize)> {
    (1..=levels).flat_map(|n| (1..=n).map(move |k| (n, k))).collect()
}

/// Defaults: N = 20, ε = 0.01, push-block, τ ∈ {1, 10}, heights compared with the
/// LLN profile at τ = 1 within factor·√ε, 2 replicas. Replica 0 is exported as
/// `trajectory.csv` and `trajectory.bin` (macroscopic times τ = εt).
pub(crate) fn simulate(cfg: &ExperimentConfig, rep: &mut Report, dir: Option<&Path>) -> Result<()> {
    let levels = cfg.model.levels.unwrap_or(20);
    let eps = eps_of(cfg, 0.01);
    let a = speeds(cfg, levels)?;
    let dynamic = cfg.model.dynamic.unwrap_or(DynamicName::Pushblock);
    let seed = cfg.seed.unwrap_or(0);
    let alpha_run = matches!(dynamic, DynamicName::AlphaPushblock | DynamicName::AlphaRsk);
    let (params, times) = if alpha_run {
        let alpha = cfg.model.alpha.clone().ok_or_else(|| Error::Config("alpha dynamics need model.alpha".into()))?;
        let steps = alpha.len();
        (
            ModelParams::new(eps, a.clone(), Specialization::Alpha { alpha })?,
            (0..=steps).map(|t| eps * t as f64).collect(),
        )
    } else {
        let times = cfg.grid.times.clone().unwrap_or_else(|| vec![1.0, 10.0]);
        if times.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config("sample times must be positive".into()));
        }
        let horizon = times.iter().copied().fold(0.0, f64::max) / eps;
        (ModelParams::new(eps, a.clone(), Specialization::Plancherel { gamma: horizon })?, times)
    };
    let run = |seed: u64| -> Result<Trajectory> {
        let init = InterlacingArray::packed(levels);
        let micro: Vec<f64> = times.iter().map(|t| t / eps).collect();
        let horizon = micro.iter().copied().fold(0.0, f64::max);
        match dynamic {
            DynamicName::Pushblock => simulate_pushblock_continuous(&init, &params, horizon, &micro, seed),
            DynamicName::Rsk => simulate_rsk_continuous(&init, &params, horizon, &micro, seed),
            DynamicName::Rightpush => simulate_rightpush_continuous(&init, &params, horizon, &micro, seed),
            DynamicName::AlphaPushblock => simulate_alpha(&init, &params, AlphaDynamic::PushBlock, seed),
            DynamicName::AlphaRsk => simulate_alpha(&init, &params, AlphaDynamic::Rsk, seed),
        }
    };
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        let mut t = run(split_seed(seed, 0))?;
        t.times.iter_mut().for_each(|x| *x *= eps);
        t.write_csv(fs::File::create(dir.join("trajectory.csv"))?)?;
        t.write_snapshot(fs::File::create(dir.join("trajectory.bin"))?)?;
    }
    let d = levels * (levels + 1) / 2;
    let task = |s| -> Result<Vec<f64>> {
        let t = run(s)?;
        Ok(t.states.iter().flat_map(|st| st.as_flat().iter().map(|&v| eps * v as f64)).collect())
    };
    let stats = ensemble_run(task, cfg.replicas.unwrap_or(2), 0, seed)?;
    let (mean, se) = (stats.mean(), stats.se_mean());
    let mut heights = Table::new("heights", &["time", "n", "k", "mean_scaled", "se"]);
    for (ti, &t) in times.iter().enumerate() {
        for (i, &(n, k)) in index_map(levels).iter().enumerate() {
            heights.push(vec![t.into(), n.into(), k.into(), mean[ti * d + i].into(), se[ti * d + i].into()]);
        }
    }
    rep.tables.push(heights);
    if alpha_run || a.iter().any(|&x| x != 1.0) {
        rep.notes.push("LLN comparison is only run for the Plancherel case with unit speeds".into());
        return Ok(());
    }
    let compare = cfg.grid.compare_times.clone().unwrap_or_else(|| vec![times[0]]);
    let mut cmp = Table::new("lln-comparison", &["time", "n", "k", "mean_scaled", "lln", "difference"]);
    for &t in &compare {
        let ti = times
            .iter()
            .position(|&s| (s - t).abs() < 1e-12)
            .ok_or_else(|| Error::Config(format!("compare time {t} is not a sample time")))?;
        let prof = lln_profile(levels, &LlnSpec::Plancherel { tau: t }, &a)?;
        let mut worst: f64 = 0.0;
        for (i, &(n, k)) in index_map(levels).iter().enumerate() {
            let m = mean[ti * d + i];
            let x = prof.x[flat_index(n, k)];
            worst = worst.max((m - x).abs());
            cmp.push(vec![t.into(), n.into(), k.into(), m.into(), x.into(), (m - x).into()]);
        }
        rep.rows.push(Row::at_most(
            format!("max |mean eps lambda - x| at tau={t}"),
            worst,
            tol(cfg, "factor") * eps.sqrt(),
        ));
    }
    rep.tables.push(cmp);
    Ok(())
}

/// Defaults: N = 6, τ ∈ {0.5, 1, 2}, unit speeds; alpha history from model.alpha
/// gives one profile per prefix length.
pub(crate) fn lln(cfg: &ExperimentConfig, rep: &mut Report) -> Result<()> {
    let levels = cfg.model.levels.unwrap_or(6);
    let a = speeds(cfg, levels)?;
    let mut table = Table::new("profile", &["tau", "n", "k", "x", "y"]);
    let specs: Vec<(f64, LlnSpec)> = match &cfg.model.alpha {
        Some(alpha) => (1..=alpha.len()).map(|t| (t as f64, LlnSpec::Alpha { alpha: alpha[..t].to_vec() })).collect(),
        None => cfg
            .grid
            .taus
            .clone()
            .unwrap_or_else(|| vec![0.5, 1.0, 2.0])
            .into_iter()
            .map(|tau| (tau, LlnSpec::Plancherel { tau }))
            .collect(),
    };
    for (tau, spec) in specs {
        let p = lln_profile(levels, &spec, &a)?;
        for (i, &(n, k)) in index_map(levels).iter().enumerate() {
            table.push(vec![tau.into(), n.into(), k.into(), p.x[i].into(), p.y[i].into()]);
        }
    }
    rep.tables.push(table);
    Ok(())
}

fn covariance_table(name: &str, mc: bool) -> Table {
    if mc {
        Table::new(name, &["time", "n1", "k1", "n2", "k2", "formula", "estimate", "se", "z"])
    } else {
        Table::new(name, &["time", "n1", "k1", "n2", "k2", "formula"])
    }
}

fn push_cov_rows(
    table: &mut Table,
    rep: &mut Report,
    t: f64,
    idx: &[(usize, usize)],
    exact: &[Vec<f64>],
    est: Option<(&[Vec<f64>], &[Vec<f64>])>,
    z: f64,
) {
    for i in 0..idx.len() {
        for j in 0..=i {
            let ((n1, k1), (n2, k2)) = (idx[i], idx[j]);
            let mut row: Vec<Cell> = vec![t.into(), n1.into(), k1.into(), n2.into(), k2.into(), exact[i][j].into()];
            if let Some((cov, se)) = est {
                let r = Row::z(format!("Cov ({n1},{k1}) ({n2},{k2}) at {t}"), exact[i][j], cov[i][j], se[i][j], z);
                row.extend([
                    Cell::Float(cov[i][j]),
                    Cell::Float(se[i][j]),
                    r.z.filter(|z| z.is_finite()).map_or(Cell::Empty, Cell::from),
                ]);
                rep.rows.push(r);
            }
            table.push(row);
        }
    }
}

/// Defaults: N = 3, τ = 1, unit speeds for the formula; with replicas > 0 a
/// push-block ensemble at ε = 0.005 (a ≡ 1) is compared entrywise.
pub(crate) fn cov(cfg: &ExperimentConfig, rep: &mut Report) -> Result<()> {
    let levels = cfg.model.levels.unwrap_or(3);
    let tau = cfg.model.tau.unwrap_or(1.0);
    let a = speeds(cfg, levels)?;
    let exact = fluctuation_covariance(levels, tau, &a)?;
    let replicas = cfg.replicas.unwrap_or(0);
    let idx = index_map(levels);
    let mut table = covariance_table("covariance", replicas > 0);
    if replicas == 0 {
        push_cov_rows(&mut table, rep, tau, &idx, &exact.matrix, None, 0.0);
    } else {
        let eps = eps_of(cfg, 0.005);
        let p = ModelParams::new(eps, a.clone(), Specialization::Plancherel { gamma: tau / eps })?;
        let profile = lln_profile(levels, &LlnSpec::Plancherel { tau }, &a)?;
        let task = |seed| -> Result<Vec<f64>> {
            let t =
                simulate_pushblock_continuous(&InterlacingArray::packed(levels), &p, tau / eps, &[tau / eps], seed)?;
            Ok(scaled_fluctuations(std::slice::from_ref(t.last()), &profile, eps).remove(0))
        };
        let s = ensemble_run_with(task, replicas, 0, cfg.seed.unwrap_or(0), Moments::Second)?;
        let est = s.covariance_with_se()?;
        push_cov_rows(&mut table, rep, tau, &idx, &exact.matrix, Some((&est.cov, &est.se)), tol(cfg, "z"));
    }
    rep.tables.push(table);
    Ok(())
}

/// Defaults: system xi, N = 3, τ0 = 0.05, τ1 = 1, dt = 1e-3, 10⁴ replicas, samples at τ1.
/// System zeta: N = 6, T0 = 1, T1 = 2.
pub(crate) fn sde(cfg: &ExperimentConfig, rep: &mut Report) -> Result<()> {
    let system = cfg.model.system.unwrap_or(SdeSystem::Xi);
    let seed = cfg.seed.unwrap_or(0);
    let replicas = cfg.replicas.unwrap_or(10_000);
    let z = tol(cfg, "z");
    let mut table = covariance_table("sde-covariance", true);
    match system {
        SdeSystem::Xi => {
            let levels = cfg.model.levels.unwrap_or(3);
            let tau1 = cfg.model.tau.unwrap_or(1.0);
            let opts = SdeOptions {
                tau0: cfg.model.t0.unwrap_or(0.05),
                tau1,
                dt: cfg.model.dt.unwrap_or(1e-3),
                replicas,
                sample_times: cfg.grid.times.clone().unwrap_or_else(|| vec![tau1]),
                ..Default::default()
            };
            let e = simulate_xi_sde(levels, &opts, seed)?;
            for (ti, &t) in e.times.iter().enumerate() {
                let est = e.covariance(ti)?;
                let exact = fluctuation_covariance(levels, t, &vec![1.0; levels])?;
                push_cov_rows(&mut table, rep, t, &index_map(levels), &exact.matrix, Some((&est.cov, &est.se)), z);
            }
        }
        SdeSystem::Zeta => {
            let levels = cfg.model.levels.unwrap_or(6);
            let t1 = cfg.model.tau.unwrap_or(2.0);
            let opts = ZetaSdeOptions {
                t0: cfg.model.t0.unwrap_or(1.0),
                t1,
                dt: cfg.model.dt.unwrap_or(1e-3),
                replicas,
                sample_times: cfg.grid.times.clone().unwrap_or_else(|| vec![t1]),
                ..Default::default()
            };
            let e = simulate_zeta_sde(levels, &opts, seed)?;
            for (ti, &t) in e.times.iter().enumerate() {
                let est = e.covariance(ti)?;
                let exact = zeta_covariance_matrix(levels, t, cfg.model.method.unwrap_or(ZetaMethod::Polynomial))?;
                push_cov_rows(&mut table, rep, t, &index_map(levels), &exact, Some((&est.cov, &est.se)), z);
            }
        }
    }
    rep.tables.push(table);
    Ok(())
}

/// Defaults: the ten-point (d, a, c, b) grid and N ∈ {50, 100, 200}.
pub(crate) fn asympt(cfg: &ExperimentConfig, rep: &mut Report) -> Result<()> {
    let points = cfg.grid.points.clone().unwrap_or_else(|| LIMIT_GRID.to_vec());
    let sizes = cfg.grid.sizes.clone().unwrap_or_else(|| vec![50, 100, 200]);
    let mut lim = Table::new("limit-covariance", &["d", "a", "c", "b", "integral", "elliptic", "bessel"]);
    let mut fin = Table::new("finite-n", &["d", "a", "c", "b", "N", "scaled", "limit", "error"]);
    for &[d, a, c, b] in &points {
        let i = limit_covariance_integral(d, a, c, b)?;
        let e = limit_covariance_elliptic(d, a, c, b)?;
        // the Bessel form only exists on one side of the real-part ordering
        let bes = limit_covariance_bessel(d, a, c, b).map_or(Cell::Empty, Cell::from);
        lim.push(vec![d.into(), a.into(), c.into(), b.into(), i.into(), e.into(), bes]);
        rep.rows.push(Row::abs(format!("integral vs elliptic ({d},{a},{c},{b})"), e, i, tol(cfg, "elliptic")));
        for p in finite_n_comparison(d, a, c, b, &sizes)? {
            fin.push(vec![
                d.into(),
                a.into(),
                c.into(),
                b.into(),
                p.n.into(),
                p.scaled.into(),
                p.limit.into(),
                p.error.into(),
            ]);
        }
    }
    rep.tables.push(lim);
    rep.tables.push(fin);
    Ok(())
}
