//! Markov dynamics preserving the q-Whittaker process: continuous push-block,
//! RSK and right-push clocks, and the discrete alpha push-block and RSK steps.

use crate::error::{Error, Result};
use crate::qcore::{
    sample_q_geometric, sample_q_hahn_inverse, validate_interlacing, InterlacingArray, ModelParams, QTable,
    Specialization, INF,
};
use crate::SimRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Residual-mass target for the truncated alpha support.
pub const ALPHA_TAIL_TOL: f64 = 1e-12;

#[inline]
fn one_minus_qpow(eps: f64, d: i64) -> f64 {
    if d >= INF / 2 {
        1.0
    } else {
        -(-eps * d as f64).exp_m1()
    }
}

/// Push-block rates, flat in the shared (n, k) order.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub levels: usize,
    pub rates: Vec<f64>,
}

impl RateTable {
    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.rates[crate::qcore::flat_index(n, k)]
    }
}

#[inline]
fn pushblock_rate(s: &InterlacingArray, eps: f64, a_n: f64, n: usize, k: usize) -> f64 {
    let k = k as isize;
    let lnk = s.lam(n, k);
    let num1 = one_minus_qpow(eps, s.lam(n - 1, k - 1) - lnk);
    if num1 == 0.0 {
        return 0.0;
    }
    let num2 = one_minus_qpow(eps, lnk - s.lam(n, k + 1) + 1);
    let den = one_minus_qpow(eps, lnk - s.lam(n - 1, k) + 1);
    a_n * num1 * num2 / den
}

#[inline]
fn rightpush_rate(s: &InterlacingArray, eps: f64, a_n: f64, n: usize, k: usize) -> f64 {
    if k == 1 {
        a_n * (-eps * (s.lam(n - 1, 1) - s.lam(n, 2)) as f64).exp()
    } else {
        pushblock_rate(s, eps, a_n, n, k)
    }
}

pub fn rates_pushblock(state: &InterlacingArray, params: &ModelParams) -> RateTable {
    let levels = state.levels();
    let mut rates = Vec::with_capacity(levels * (levels + 1) / 2);
    for n in 1..=levels {
        for k in 1..=n {
            rates.push(pushblock_rate(state, params.eps, params.a[n - 1], n, k));
        }
    }
    RateTable { levels, rates }
}

/// Binary-indexed sum tree over non-negative weights.
#[derive(Debug, Clone)]
struct SumTree {
    size: usize,
    tree: Vec<f64>,
}

impl SumTree {
    fn new(len: usize) -> Self {
        let size = len.next_power_of_two().max(1);
        SumTree { size, tree: vec![0.0; 2 * size] }
    }

    fn set(&mut self, i: usize, v: f64) {
        let mut p = i + self.size;
        self.tree[p] = v;
        while p > 1 {
            p /= 2;
            self.tree[p] = self.tree[2 * p] + self.tree[2 * p + 1];
        }
    }

    fn total(&self) -> f64 {
        self.tree[1]
    }

    /// Leaf with cumulative mass covering u in [0, total).
    fn find(&self, mut u: f64) -> usize {
        let mut p = 1;
        while p < self.size {
            let left = self.tree[2 * p];
            if u < left || self.tree[2 * p + 1] == 0.0 {
                p *= 2;
            } else {
                u -= left;
                p = 2 * p + 1;
            }
        }
        p - self.size
    }
}

/// Per-run diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub dynamic: String,
    pub events: u64,
    /// Largest relative tail mass dropped by the truncated alpha support.
    pub truncation_certificate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<InterlacingArray>,
    pub seed: u64,
    pub params: ModelParams,
    pub meta: TrajectoryMeta,
}

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"QWGTRAJ\0";
pub const SNAPSHOT_VERSION: u64 = 1;

impl Trajectory {
    pub fn levels(&self) -> usize {
        self.params.levels()
    }

    pub fn last(&self) -> &InterlacingArray {
        self.states.last().expect("trajectory has at least one sample")
    }

    /// Rows `time,n,k,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "n", "k", "value"])?;
        for (t, s) in self.times.iter().zip(&self.states) {
            for n in 1..=s.levels() {
                for k in 1..=n {
                    w.write_record([format!("{t:.16e}"), n.to_string(), k.to_string(), s.get(n, k).to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Little-endian snapshot: magic, version, N, sample count, seed, then per
    /// sample the time (f64) and the N(N+1)/2 entries (i64) in (n, k) order.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(SNAPSHOT_MAGIC)?;
        for v in [SNAPSHOT_VERSION, self.levels() as u64, self.times.len() as u64, self.seed] {
            out.write_all(&v.to_le_bytes())?;
        }
        for (t, s) in self.times.iter().zip(&self.states) {
            out.write_all(&t.to_le_bytes())?;
            for v in s.as_flat() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Decoded snapshot: (seed, times, states).
pub fn read_snapshot<R: Read>(mut input: R) -> Result<(u64, Vec<f64>, Vec<InterlacingArray>)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Format("not a trajectory snapshot".into()));
    }
    let mut word = [0u8; 8];
    let mut next = |input: &mut R| -> Result<[u8; 8]> {
        input.read_exact(&mut word)?;
        Ok(word)
    };
    let version = u64::from_le_bytes(next(&mut input)?);
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let levels = u64::from_le_bytes(next(&mut input)?) as usize;
    let count = u64::from_le_bytes(next(&mut input)?) as usize;
    let seed = u64::from_le_bytes(next(&mut input)?);
    let width = levels * (levels + 1) / 2;
    let mut times = Vec::with_capacity(count);
    let mut states = Vec::with_capacity(count);
    for _ in 0..count {
        times.push(f64::from_le_bytes(next(&mut input)?));
        let data = (0..width).map(|_| next(&mut input).map(i64::from_le_bytes)).collect::<Result<Vec<_>>>()?;
        states.push(InterlacingArray::from_flat(levels, data)?);
    }
    Ok((seed, times, states))
}

fn check_start(init: &InterlacingArray, params: &ModelParams) -> Result<()> {
    if init.levels() != params.levels() {
        return Err(Error::Params(format!(
            "initial state has {} levels, params have {}",
            init.levels(),
            params.levels()
        )));
    }
    if let Some((n, k)) = crate::qcore::first_violation(init) {
        return Err(Error::Interlacing { n, k });
    }
    if !validate_interlacing(init) {
        return Err(Error::Params("initial state has negative entries".into()));
    }
    Ok(())
}

fn check_times(horizon: f64, sample_times: &[f64]) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Params(format!("horizon must be positive, got {horizon}")));
    }
    let mut prev = 0.0;
    for &t in sample_times {
        if !(t >= prev && t <= horizon) {
            return Err(Error::Params(format!("sample times must be sorted in [0, horizon], got {t}")));
        }
        prev = t;
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Clock {
    PushBlock,
    RightPush,
    Rsk,
}

/// Raise (n, k) and the longest equal string above it.
fn push_string(s: &mut InterlacingArray, n: usize, k: usize, changed: &mut Vec<(usize, usize)>) {
    let v = s.get(n, k);
    let mut m = n;
    while m <= s.levels() && s.get(m, k) == v {
        s.set(m, k, v + 1);
        changed.push((m, k));
        m += 1;
    }
}

fn rsk_cascade<R: Rng + ?Sized>(
    s: &mut InterlacingArray,
    eps: f64,
    n: usize,
    changed: &mut Vec<(usize, usize)>,
    rng: &mut R,
) -> Result<()> {
    let mut old = s.get(n, 1);
    s.set(n, 1, old + 1);
    changed.push((n, 1));
    let mut k = 1usize;
    for m in n + 1..=s.levels() {
        let ki = k as isize;
        let below_prev = s.lam(m - 1, ki - 1);
        let here = s.get(m, k);
        let p = (-eps * (here - old) as f64).exp() * one_minus_qpow(eps, below_prev - here)
            / one_minus_qpow(eps, below_prev - old);
        let target = if rng.random::<f64>() < p { k } else { k + 1 };
        let cur = s.get(m, target);
        let upper = s.lam(m - 1, target as isize - 1);
        if target > m || cur + 1 > upper {
            return Err(Error::Simulation(format!("RSK transfer to inadmissible ({m},{target})")));
        }
        old = cur;
        s.set(m, target, cur + 1);
        changed.push((m, target));
        k = target;
    }
    Ok(())
}

fn simulate_clocks(
    clock: Clock,
    init: &InterlacingArray,
    params: &ModelParams,
    horizon: f64,
    sample_times: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    if !matches!(params.spec, Specialization::Plancherel { .. }) {
        return Err(Error::Params("continuous dynamics need the Plancherel specialization".into()));
    }
    check_start(init, params)?;
    check_times(horizon, sample_times)?;
    let mut rng = SimRng::seed_from_u64(seed);
    let eps = params.eps;
    let levels = params.levels();
    let mut s = init.clone();
    let rate = |s: &InterlacingArray, n: usize, k: usize| -> f64 {
        let a_n = params.a[n - 1];
        match clock {
            Clock::PushBlock => pushblock_rate(s, eps, a_n, n, k),
            Clock::RightPush => rightpush_rate(s, eps, a_n, n, k),
            Clock::Rsk => {
                if k == 1 {
                    a_n
                } else {
                    0.0
                }
            }
        }
    };
    let mut tree = SumTree::new(levels * (levels + 1) / 2);
    let mut coords = Vec::with_capacity(levels * (levels + 1) / 2);
    for n in 1..=levels {
        for k in 1..=n {
            tree.set(coords.len(), rate(&s, n, k));
            coords.push((n, k));
        }
    }
    let mut times = Vec::with_capacity(sample_times.len());
    let mut states = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0;
    let mut t = 0.0;
    let mut events = 0u64;
    let mut changed = Vec::new();
    loop {
        let total = tree.total();
        let dt: f64 = if total > 0.0 { Exp1.sample(&mut rng) } else { f64::INFINITY };
        if dt == 0.0 {
            return Err(Error::Simulation("zero waiting time: simultaneous clock events".into()));
        }
        let t_next = t + dt / total;
        while next_sample < sample_times.len() && sample_times[next_sample] < t_next {
            times.push(sample_times[next_sample]);
            states.push(s.clone());
            next_sample += 1;
        }
        if t_next > horizon {
            break;
        }
        if t_next == t {
            return Err(Error::Simulation("event time did not advance".into()));
        }
        t = t_next;
        let u = rng.random::<f64>() * total;
        let (n, k) = coords[tree.find(u)];
        changed.clear();
        match clock {
            Clock::PushBlock => push_string(&mut s, n, k, &mut changed),
            Clock::RightPush => {
                if k == 1 {
                    for m in n..=levels {
                        let v = s.get(m, 1);
                        s.set(m, 1, v + 1);
                        changed.push((m, 1));
                    }
                } else {
                    push_string(&mut s, n, k, &mut changed);
                }
            }
            Clock::Rsk => rsk_cascade(&mut s, eps, n, &mut changed, &mut rng)?,
        }
        events += 1;
        if clock != Clock::Rsk {
            for &(m, j) in changed.iter() {
                for (mm, jj) in [(m, j.wrapping_sub(1)), (m, j), (m + 1, j), (m + 1, j + 1)] {
                    if mm <= levels && jj >= 1 && jj <= mm {
                        tree.set(crate::qcore::flat_index(mm, jj), rate(&s, mm, jj));
                    }
                }
            }
        }
    }
    let dynamic = match clock {
        Clock::PushBlock => "pushblock",
        Clock::RightPush => "rightpush",
        Clock::Rsk => "rsk",
    };
    Ok(Trajectory {
        times,
        states,
        seed,
        params: params.clone(),
        meta: TrajectoryMeta { dynamic: dynamic.into(), events, truncation_certificate: 0.0 },
    })
}

/// Exact next-event simulation of the push-block dynamics.
pub fn simulate_pushblock_continuous(
    init: &InterlacingArray,
    params: &ModelParams,
    horizon: f64,
    sample_times: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    simulate_clocks(Clock::PushBlock, init, params, horizon, sample_times, seed)
}

/// RSK-type dynamics: clocks on λ^{(n)}_1 only, with one triggered jump per level above.
pub fn simulate_rsk_continuous(
    init: &InterlacingArray,
    params: &ModelParams,
    horizon: f64,
    sample_times: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    simulate_clocks(Clock::Rsk, init, params, horizon, sample_times, seed)
}

/// Right-pushing dynamics: push-block for k >= 2, pushing clocks on the first column.
pub fn simulate_rightpush_continuous(
    init: &InterlacingArray,
    params: &ModelParams,
    horizon: f64,
    sample_times: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    simulate_clocks(Clock::RightPush, init, params, horizon, sample_times, seed)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn sample_log_weights<R: Rng + ?Sized>(lw: &[f64], rng: &mut R) -> usize {
    let m = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = lw.iter().map(|&l| (l - m).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &l) in lw.iter().enumerate() {
        u -= (l - m).exp();
        if u < 0.0 {
            return i;
        }
    }
    lw.iter().rposition(|&l| l > f64::NEG_INFINITY).unwrap_or(0)
}

/// One level of the alpha push-block transition: sample ν (length n) given the
/// old same level `old` and the new lower level `lower` (length n-1). Returns ν and
/// the relative tail mass dropped from the ν_1 support.
fn sample_alpha_level<R: Rng + ?Sized>(
    old: &[i64],
    lower: &[i64],
    aalpha: f64,
    tab: &mut QTable,
    rng: &mut R,
) -> Result<(Vec<i64>, f64)> {
    let n = old.len();
    let low = |i: usize| if i < n - 1 { lower[i] } else { 0 };
    let lo: Vec<i64> = (0..n).map(|i| old[i].max(low(i))).collect();
    let eps = -tab.q().ln();
    let ln_aa = aalpha.ln();
    let mut hi: Vec<i64> = vec![0; n];
    for i in 1..n {
        hi[i] = old[i - 1].min(lower[i - 1]);
        if hi[i] < lo[i] {
            return Err(Error::Interlacing { n, k: i + 1 });
        }
    }
    let unary = |tab: &mut QTable, i: usize, v: i64| -> f64 {
        v as f64 * ln_aa - tab.ln_qq((v - old[i]) as u64) - tab.ln_qq((v - low(i)) as u64)
    };
    let pair = |tab: &mut QTable, i: usize, v: i64, w: i64| -> f64 {
        tab.ln_qq((v - w) as u64) - tab.ln_qq((old[i] - w) as u64) - tab.ln_qq((low(i) - w) as u64)
    };
    // backward messages for levels n-1..1 (0-based i >= 1), over [lo, hi]
    let mut msgs: Vec<Vec<f64>> = vec![Vec::new(); n];
    for i in (1..n).rev() {
        let mut m = Vec::with_capacity((hi[i] - lo[i] + 1) as usize);
        for v in lo[i]..=hi[i] {
            let mut l = unary(tab, i, v);
            if i == n - 1 {
                l += tab.ln_qq(v as u64);
            } else {
                let mut acc = f64::NEG_INFINITY;
                for (j, w) in (lo[i + 1]..=hi[i + 1].min(v)).enumerate() {
                    acc = log_add(acc, pair(tab, i, v, w) + msgs[i + 1][j]);
                }
                l += acc;
            }
            m.push(l);
        }
        msgs[i] = m;
    }
    let first = |tab: &mut QTable, v: i64| -> f64 {
        let mut l = unary(tab, 0, v);
        if n == 1 {
            l += tab.ln_qq(v as u64);
        } else {
            let mut acc = f64::NEG_INFINITY;
            for (j, w) in (lo[1]..=hi[1].min(v)).enumerate() {
                acc = log_add(acc, pair(tab, 0, v, w) + msgs[1][j]);
            }
            l += acc;
        }
        l
    };
    let mut w1 = Vec::new();
    let mut total = f64::NEG_INFINITY;
    let mut cert;
    let mut d = 0i64;
    loop {
        let l = first(tab, lo[0] + d);
        w1.push(l);
        total = log_add(total, l);
        let rho = aalpha / one_minus_qpow(eps, d + 1).powi(2);
        if rho < 1.0 {
            cert = (l + (rho / (1.0 - rho)).ln() - total).exp();
            if cert < ALPHA_TAIL_TOL {
                break;
            }
        }
        d += 1;
        if d > 1_000_000 {
            return Err(Error::Simulation("alpha support truncation did not converge".into()));
        }
    }
    if !cert.is_finite() {
        cert = 0.0;
    }
    let mut nu = vec![0i64; n];
    nu[0] = lo[0] + sample_log_weights(&w1, rng) as i64;
    for i in 1..n {
        let top = hi[i].min(nu[i - 1]);
        let lw: Vec<f64> =
            (lo[i]..=top).enumerate().map(|(j, w)| pair(tab, i - 1, nu[i - 1], w) + msgs[i][j]).collect();
        nu[i] = lo[i] + sample_log_weights(&lw, rng) as i64;
    }
    Ok((nu, cert))
}

fn check_alpha(params: &ModelParams, alpha_t: f64) -> Result<()> {
    let amax = params.a.iter().cloned().fold(0.0, f64::max);
    if !(alpha_t > 0.0 && amax * alpha_t < 1.0) {
        return Err(Error::Params(format!("alpha {alpha_t} inadmissible: need a_n alpha < 1")));
    }
    Ok(())
}

/// One alpha push-block step; returns the new state and its truncation certificate.
pub fn step_pushblock_alpha_certified<R: Rng + ?Sized>(
    state: &InterlacingArray,
    params: &ModelParams,
    alpha_t: f64,
    tab: &mut QTable,
    rng: &mut R,
) -> Result<(InterlacingArray, f64)> {
    check_alpha(params, alpha_t)?;
    let levels = state.levels();
    let mut out = InterlacingArray::packed(levels);
    let mut cert: f64 = 0.0;
    let mut lower: Vec<i64> = Vec::new();
    for n in 1..=levels {
        let (nu, c) = sample_alpha_level(state.level(n), &lower, params.a[n - 1] * alpha_t, tab, rng)?;
        cert = cert.max(c);
        for (k, &v) in nu.iter().enumerate() {
            out.set(n, k + 1, v);
        }
        lower = nu;
    }
    Ok((out, cert))
}

pub fn step_pushblock_alpha<R: Rng + ?Sized>(
    state: &InterlacingArray,
    params: &ModelParams,
    alpha_t: f64,
    rng: &mut R,
) -> Result<InterlacingArray> {
    let mut tab = QTable::new(params.q);
    step_pushblock_alpha_certified(state, params, alpha_t, &mut tab, rng).map(|r| r.0)
}

/// One discrete RSK step.
pub fn step_rsk_alpha_with<R: Rng + ?Sized>(
    state: &InterlacingArray,
    params: &ModelParams,
    alpha_t: f64,
    tab: &mut QTable,
    rng: &mut R,
) -> Result<InterlacingArray> {
    check_alpha(params, alpha_t)?;
    let levels = state.levels();
    let mut out = InterlacingArray::packed(levels);
    for n in 1..=levels {
        let v = sample_q_geometric(params.q, alpha_t * params.a[n - 1], rng) as i64;
        let mut w = vec![0i64; n];
        let mut c = vec![0i64; n];
        for k in 1..n {
            c[k - 1] = out.get(n - 1, k) - state.get(n - 1, k);
            let a = state.get(n, k) - state.get(n - 1, k);
            let b = if k == 1 { None } else { Some((state.get(n - 1, k - 1) - state.get(n - 1, k)) as u64) };
            w[k - 1] = sample_q_hahn_inverse(tab, a as u64, b, c[k - 1] as u64, rng)? as i64;
        }
        out.set(n, 1, state.get(n, 1) + w[0] + v);
        for k in 2..=n {
            out.set(n, k, state.get(n, k) + w[k - 1] + c[k - 2] - w[k - 2]);
        }
    }
    if let Some((n, k)) = crate::qcore::first_violation(&out) {
        return Err(Error::Interlacing { n, k });
    }
    Ok(out)
}

pub fn step_rsk_alpha<R: Rng + ?Sized>(
    state: &InterlacingArray,
    params: &ModelParams,
    alpha_t: f64,
    rng: &mut R,
) -> Result<InterlacingArray> {
    let mut tab = QTable::new(params.q);
    step_rsk_alpha_with(state, params, alpha_t, &mut tab, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaDynamic {
    PushBlock,
    Rsk,
}

/// Run the alpha history of `params.spec` from `init`, recording every integer time.
pub fn simulate_alpha(
    init: &InterlacingArray,
    params: &ModelParams,
    dynamic: AlphaDynamic,
    seed: u64,
) -> Result<Trajectory> {
    let Specialization::Alpha { alpha } = &params.spec else {
        return Err(Error::Params("alpha dynamics need the alpha specialization".into()));
    };
    check_start(init, params)?;
    let mut rng = SimRng::seed_from_u64(seed);
    let mut tab = QTable::new(params.q);
    let mut s = init.clone();
    let mut times = vec![0.0];
    let mut states = vec![s.clone()];
    let mut cert: f64 = 0.0;
    for (t, &al) in alpha.iter().enumerate() {
        s = match dynamic {
            AlphaDynamic::PushBlock => {
                let (next, c) = step_pushblock_alpha_certified(&s, params, al, &mut tab, &mut rng)?;
                cert = cert.max(c);
                next
            }
            AlphaDynamic::Rsk => step_rsk_alpha_with(&s, params, al, &mut tab, &mut rng)?,
        };
        times.push((t + 1) as f64);
        states.push(s.clone());
    }
    let dynamic = match dynamic {
        AlphaDynamic::PushBlock => "alpha-pushblock",
        AlphaDynamic::Rsk => "alpha-rsk",
    };
    Ok(Trajectory {
        times,
        states,
        seed,
        params: params.clone(),
        meta: TrajectoryMeta { dynamic: dynamic.into(), events: alpha.len() as u64, truncation_certificate: cert },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{q_geometric_pmf, Partition};
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};
    use rand_chacha::ChaCha8Rng;

    fn planch(q: f64, gamma: f64, a: Vec<f64>) -> ModelParams {
        ModelParams::from_q(q, a, Specialization::Plancherel { gamma }).unwrap()
    }

    fn random_state(levels: usize, rng: &mut ChaCha8Rng) -> InterlacingArray {
        let mut rows: Vec<Vec<i64>> = Vec::new();
        let mut prev: Vec<i64> = Vec::new();
        for n in 1..=levels {
            let mut row = vec![0i64; n];
            for k in 0..n {
                let upper =
                    if k == 0 { prev.first().copied().unwrap_or(0) + rng.random_range(0..4) } else { prev[k - 1] };
                let lower = if k < n - 1 { prev[k] } else { 0 };
                row[k] = rng.random_range(lower..=upper);
            }
            prev = row.clone();
            rows.push(row);
        }
        InterlacingArray::from_levels(&rows).unwrap()
    }

    #[test]
    fn packed_rates() {
        let p = planch(0.4, 1.0, vec![1.0, 2.0, 0.5]);
        let r = rates_pushblock(&InterlacingArray::packed(3), &p);
        for n in 1..=3 {
            assert!((r.get(n, 1) - p.a[n - 1]).abs() < 1e-15);
            for k in 2..=n {
                assert_eq!(r.get(n, k), 0.0);
            }
        }
    }

    #[test]
    fn blocked_rate_vanishes() {
        let s = InterlacingArray::from_levels(&[vec![2], vec![3, 2]]).unwrap();
        let p = planch(0.5, 1.0, vec![1.0, 1.0]);
        assert_eq!(rates_pushblock(&s, &p).get(2, 2), 0.0);
        assert!(rates_pushblock(&s, &p).get(2, 1) > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn rates_finite_nonnegative(seed in any::<u64>(), q in 0.05f64..0.95) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_state(5, &mut rng);
            let p = planch(q, 1.0, vec![1.0, 0.7, 1.3, 1.0, 2.0]);
            let r = rates_pushblock(&s, &p);
            for n in 1..=5 {
                for k in 1..=n {
                    let v = r.get(n, k);
                    prop_assert!(v.is_finite() && v >= 0.0);
                    if k >= 2 && s.get(n, k) == s.get(n - 1, k - 1) {
                        prop_assert_eq!(v, 0.0);
                    }
                }
            }
        }

        #[test]
        fn every_dynamic_interlaces(seed in any::<u64>()) {
            let p = planch(0.5, 3.0, vec![1.0, 1.5, 0.8, 1.0]);
            let times: Vec<f64> = (1..=30).map(|i| i as f64 * 0.1).collect();
            let start = InterlacingArray::packed(4);
            for run in [simulate_pushblock_continuous, simulate_rsk_continuous, simulate_rightpush_continuous] {
                let tr = run(&start, &p, 3.0, &times, seed).unwrap();
                prop_assert_eq!(tr.states.len(), times.len());
                for w in tr.states.windows(2) {
                    prop_assert!(validate_interlacing(&w[1]));
                    prop_assert!(w[0].as_flat().iter().zip(w[1].as_flat()).all(|(a, b)| a <= b));
                }
            }
            let pa = ModelParams::from_q(0.5, vec![1.0, 1.5, 0.8, 1.0], Specialization::Alpha { alpha: vec![0.4; 6] }).unwrap();
            for dynamic in [AlphaDynamic::PushBlock, AlphaDynamic::Rsk] {
                let tr = simulate_alpha(&start, &pa, dynamic, seed).unwrap();
                for w in tr.states.windows(2) {
                    prop_assert!(validate_interlacing(&w[1]));
                    if dynamic == AlphaDynamic::PushBlock {
                        for n in 1..=4 {
                            prop_assert!(w[1].level_partition(n).interlaces_over(&w[0].level_partition(n)));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn bit_reproducible() {
        let p = planch(0.5, 2.0, vec![1.0; 4]);
        let a = simulate_pushblock_continuous(&InterlacingArray::packed(4), &p, 2.0, &[1.0, 2.0], 7).unwrap();
        let b = simulate_pushblock_continuous(&InterlacingArray::packed(4), &p, 2.0, &[1.0, 2.0], 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn horizon_must_be_positive() {
        let p = planch(0.5, 1.0, vec![1.0]);
        assert!(simulate_pushblock_continuous(&InterlacingArray::packed(1), &p, 0.0, &[], 1).is_err());
        assert!(simulate_pushblock_continuous(&InterlacingArray::packed(1), &p, 1.0, &[2.0], 1).is_err());
    }

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn one_level_is_poisson_for_all_clocks() {
        let p = planch(0.5, 2.0, vec![1.5]);
        for run in [simulate_pushblock_continuous, simulate_rsk_continuous, simulate_rightpush_continuous] {
            let xs: Vec<f64> = (0..20000)
                .map(|i| run(&InterlacingArray::packed(1), &p, 2.0, &[2.0], i).unwrap().last().get(1, 1) as f64)
                .collect();
            let (m, se) = mean_se(&xs);
            assert!((m - 3.0).abs() < 4.0 * se, "{m} ± {se}");
        }
    }

    #[test]
    fn alpha_one_level_increment_is_q_geometric() {
        let p = ModelParams::from_q(0.6, vec![1.2], Specialization::Alpha { alpha: vec![0.5] }).unwrap();
        let mut tab = QTable::new(0.6);
        let start = InterlacingArray::from_levels(&[vec![3]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 8];
        let reps = 40000;
        for _ in 0..reps {
            let (s, cert) = step_pushblock_alpha_certified(&start, &p, 0.5, &mut tab, &mut rng).unwrap();
            assert!(cert < ALPHA_TAIL_TOL);
            let inc = (s.get(1, 1) - 3) as usize;
            if inc < 8 {
                counts[inc] += 1;
            }
        }
        for (s, &c) in counts.iter().enumerate() {
            let pmf = q_geometric_pmf(0.6, 0.6, s as u64);
            let se = (pmf * (1.0 - pmf) / reps as f64).sqrt();
            assert!((c as f64 / reps as f64 - pmf).abs() < 4.5 * se + 1e-4, "s={s}");
        }
    }

    #[test]
    fn alpha_level_matches_brute_force() {
        // exact conditional law of ν given O and L against direct enumeration
        let q = 0.5;
        let old = [4i64, 2, 1];
        let lower = [5i64, 2];
        let aa: f64 = 0.4;
        let mut weights = std::collections::BTreeMap::new();
        let mut total = 0.0;
        let mu = Partition::new(old.to_vec()).unwrap();
        let lam = Partition::new(lower.to_vec()).unwrap();
        for v1 in 5..60 {
            for v2 in 2..=4 {
                for v3 in 1..=2 {
                    let nu = Partition::new(vec![v1, v2, v3]).unwrap();
                    if !(nu.interlaces_over(&lam) && nu.interlaces_over(&mu)) {
                        continue;
                    }
                    let (phi, _) = crate::qcore::phi_psi_weights(&nu, &mu, q).unwrap();
                    let (_, psi) = crate::qcore::phi_psi_weights(&nu, &lam, q).unwrap();
                    let w = phi * psi * aa.powi((v1 + v2 + v3) as i32);
                    weights.insert((v1, v2, v3), w);
                    total += w;
                }
            }
        }
        let mut tab = QTable::new(q);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reps = 40000;
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..reps {
            let (nu, _) = sample_alpha_level(&old, &lower, aa, &mut tab, &mut rng).unwrap();
            *counts.entry((nu[0], nu[1], nu[2])).or_insert(0usize) += 1;
        }
        for (key, w) in weights.iter().take(12) {
            let p = w / total;
            let f = *counts.get(key).unwrap_or(&0) as f64 / reps as f64;
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((f - p).abs() < 4.5 * se + 1e-4, "{key:?}: {f} vs {p}");
        }
    }

    #[test]
    fn rsk_alpha_rules() {
        let p = ModelParams::from_q(0.5, vec![1.0], Specialization::Alpha { alpha: vec![0.5] }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reps = 40000;
        let xs: Vec<f64> = (0..reps)
            .map(|_| step_rsk_alpha(&InterlacingArray::packed(1), &p, 0.5, &mut rng).unwrap().get(1, 1) as f64)
            .collect();
        let mean: f64 = (0..200).map(|s| s as f64 * q_geometric_pmf(0.5, 0.5, s)).sum();
        let (m, se) = mean_se(&xs);
        assert!((m - mean).abs() < 4.0 * se);
    }

    #[test]
    fn snapshot_round_trip() {
        let p = planch(0.5, 1.0, vec![1.0; 3]);
        let tr = simulate_pushblock_continuous(&InterlacingArray::packed(3), &p, 2.0, &[0.5, 1.0, 2.0], 9).unwrap();
        let mut buf = Vec::new();
        tr.write_snapshot(&mut buf).unwrap();
        assert_eq!(&buf[..8], SNAPSHOT_MAGIC);
        assert_eq!(buf.len(), 8 + 32 + 3 * (8 + 6 * 8));
        let (seed, times, states) = read_snapshot(&buf[..]).unwrap();
        assert_eq!(seed, 9);
        assert_eq!(times, tr.times);
        assert_eq!(states, tr.states);
        let mut csv = Vec::new();
        tr.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 3 * 6);
    }

    #[test]
    fn sum_tree_selection() {
        let mut t = SumTree::new(5);
        for (i, w) in [1.0, 0.0, 2.0, 0.0, 3.0].iter().enumerate() {
            t.set(i, *w);
        }
        assert_eq!(t.total(), 6.0);
        assert_eq!(t.find(0.5), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(2.999), 2);
        assert_eq!(t.find(5.99), 4);
    }
}
