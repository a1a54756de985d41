//! Hitting- and return-time functionals of coupled chains: exact taboo sums,
//! Monte Carlo estimates and the coupling identity.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{CoupledKernel, FiniteKernel, Minorization, TriState, TrivariateLaw};
use crate::rates::{rate_sequence, Phi, RateSequence};

/// Sparse transition rows `(target index, mass)`.
pub type SparseRows = [Vec<(usize, f64)>];

const BLOCK: usize = 64;
const MAX_TABOO_STEPS: usize = 1 << 24;
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-11;
pub const DEFAULT_CAP_STEPS: usize = 1_000_000;

/// Source of the rate weights `r(k)`.
#[derive(Debug, Clone, PartialEq)]
pub enum RateSource {
    Constant(f64),
    Sequence(RateSequence),
    Phi(Phi),
}

impl RateSource {
    /// `r(0..=n)`.
    pub fn values(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            RateSource::Constant(c) => Ok(vec![*c; n + 1]),
            RateSource::Sequence(seq) => {
                seq.require(n)?;
                Ok(seq.values()[..=n].to_vec())
            }
            RateSource::Phi(phi) => Ok(rate_sequence(phi, n.max(1))?.values()[..=n].to_vec()),
        }
    }

    /// Single term `r(k)`.
    pub fn at(&self, k: usize) -> Result<f64> {
        match self {
            RateSource::Constant(c) => Ok(*c),
            RateSource::Sequence(seq) => {
                seq.require(k)?;
                Ok(seq.r(k))
            }
            RateSource::Phi(phi) => phi.rate(k as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TabooMode {
    /// `Σ_{k=0}^{σ}` with `σ = inf{n >= 0 : Z_n ∈ A}`.
    Hitting,
    /// `Σ_{k=1}^{τ}` with `τ = inf{n >= 1 : Z_n ∈ A}`.
    Return,
}

/// `E_z[Σ_k r(k) g(Z_k)]` up to the hitting or return time of `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabooFunctional {
    pub target: Vec<bool>,
    pub rate: RateSource,
    pub weight: Vec<f64>,
    pub mode: TabooMode,
    pub truncation_tol: f64,
}

impl TabooFunctional {
    pub fn new(target: Vec<bool>, rate: RateSource, weight: Vec<f64>, mode: TabooMode) -> Self {
        TabooFunctional {
            target,
            rate,
            weight,
            mode,
            truncation_tol: DEFAULT_TRUNCATION_TOL,
        }
    }

    /// `g ≡ 1`.
    pub fn unweighted(target: Vec<bool>, rate: RateSource, mode: TabooMode) -> Self {
        let n = target.len();
        Self::new(target, rate, vec![1.0; n], mode)
    }

    pub fn with_mode(&self, mode: TabooMode) -> Self {
        TabooFunctional {
            mode,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TabooValue {
    pub value: f64,
    /// Estimated remainder beyond the truncation horizon.
    pub tail_bound: f64,
    pub horizon: usize,
}

/// Exact taboo expectation from a point start.
pub fn taboo_expectation(rows: &SparseRows, spec: &TabooFunctional, start: usize) -> Result<TabooValue> {
    let n = rows.len();
    if start >= n || spec.target.len() != n || spec.weight.len() != n {
        return Err(Error::Domain("taboo functional does not match the chain size".into()));
    }
    match spec.mode {
        TabooMode::Hitting => {
            let mut init = vec![0.0; n];
            init[start] = 1.0;
            taboo_expectation_from_law(rows, spec, init, 0)
        }
        TabooMode::Return => {
            let mut init = vec![0.0; n];
            for &(w, p) in &rows[start] {
                init[w] += p;
            }
            taboo_expectation_from_law(rows, spec, init, 1)
        }
    }
}

/// `Σ_{k >= first} r(k) ⟨m_k, g⟩` where `m_first = initial` and
/// `m_{k+1} = (m_k restricted off the target) · P`.
pub fn taboo_expectation_from_law(
    rows: &SparseRows,
    spec: &TabooFunctional,
    initial: Vec<f64>,
    first: usize,
) -> Result<TabooValue> {
    let n = rows.len();
    check_reachability(rows, &spec.target, &initial)?;
    let g_max = spec.weight.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut rates = spec.rate.values(first + 2 * BLOCK)?;
    let r0 = spec.rate.at(0)?;
    let mut mass = initial;
    let mut value = 0.0;
    let mut alive_at_block_start = f64::NAN;
    let mut k = first;
    loop {
        if k >= rates.len() {
            rates = spec.rate.values(2 * rates.len())?;
        }
        let r = rates[k];
        value += r * mass.iter().zip(&spec.weight).map(|(m, g)| m * g).sum::<f64>();
        let mut next = vec![0.0; n];
        let mut alive = 0.0;
        for (z, &m) in mass.iter().enumerate() {
            if m == 0.0 || spec.target[z] {
                continue;
            }
            alive += m;
            for &(w, p) in &rows[z] {
                next[w] += m * p;
            }
        }
        if alive == 0.0 {
            return Ok(TabooValue {
                value,
                tail_bound: 0.0,
                horizon: k,
            });
        }
        if (k - first) % BLOCK == 0 {
            if alive_at_block_start.is_finite() {
                let decay = (alive / alive_at_block_start).powf(1.0 / BLOCK as f64);
                let growth = if k > 0 && r0 > 0.0 {
                    (r / r0).max(1.0).powf(1.0 / k as f64)
                } else {
                    1.0
                };
                if decay * growth < 1.0 {
                    let tail = g_max * r * alive * growth / (1.0 - decay * growth);
                    if tail <= spec.truncation_tol {
                        return Ok(TabooValue {
                            value,
                            tail_bound: tail,
                            horizon: k,
                        });
                    }
                }
            }
            alive_at_block_start = alive;
        }
        if k - first > MAX_TABOO_STEPS {
            return Err(Error::Divergence(format!(
                "taboo mass {alive:e} still alive after {MAX_TABOO_STEPS} steps"
            )));
        }
        mass = next;
        k += 1;
    }
}

/// Every state reachable from the support of `initial` while avoiding the
/// target must be able to reach the target.
fn check_reachability(rows: &SparseRows, target: &[bool], initial: &[f64]) -> Result<()> {
    let n = rows.len();
    let mut reachable = vec![false; n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (z, &m) in initial.iter().enumerate() {
        if m > 0.0 {
            reachable[z] = true;
            queue.push_back(z);
        }
    }
    while let Some(z) = queue.pop_front() {
        if target[z] {
            continue;
        }
        for &(w, p) in &rows[z] {
            if p > 0.0 && !reachable[w] {
                reachable[w] = true;
                queue.push_back(w);
            }
        }
    }
    let mut predecessors = vec![Vec::new(); n];
    for (z, row) in rows.iter().enumerate() {
        for &(w, p) in row {
            if p > 0.0 {
                predecessors[w].push(z);
            }
        }
    }
    let mut reaches = target.to_vec();
    let mut queue: VecDeque<usize> = (0..n).filter(|&z| target[z]).collect();
    while let Some(w) = queue.pop_front() {
        for &z in &predecessors[w] {
            if !reaches[z] {
                reaches[z] = true;
                queue.push_back(z);
            }
        }
    }
    match (0..n).find(|&z| reachable[z] && !reaches[z]) {
        Some(z) => Err(Error::Divergence(format!("state {z} is reachable but cannot reach the target set"))),
        None => Ok(()),
    }
}

/// Maximum over `starts` of the return-mode functional, with its argmax.
pub fn return_supremum(
    rows: &SparseRows,
    spec: &TabooFunctional,
    starts: &[usize],
) -> Result<(f64, usize)> {
    let spec = spec.with_mode(TabooMode::Return);
    let values = starts
        .par_iter()
        .map(|&z| taboo_expectation(rows, &spec, z).map(|v| (v.value, z)))
        .collect::<Result<Vec<_>>>()?;
    values
        .into_iter()
        .fold(None, |best: Option<(f64, usize)>, (v, z)| match best {
            Some((b, _)) if b >= v => best,
            _ => Some((v, z)),
        })
        .ok_or_else(|| Error::Domain("return supremum over an empty set".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub n_paths: usize,
    pub seed: u64,
    pub cap_steps: usize,
}

impl McOptions {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        McOptions {
            n_paths,
            seed,
            cap_steps: DEFAULT_CAP_STEPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub censored: usize,
}

/// Independent RNG stream for path `index` under master `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Cumulative tables for inverse-CDF sampling from sparse rows.
pub(crate) fn cumulative_rows(rows: &SparseRows) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|row| {
            let mut acc = 0.0;
            let mut c: Vec<f64> = row
                .iter()
                .map(|&(_, p)| {
                    acc += p;
                    acc
                })
                .collect();
            if let Some(last) = c.last_mut() {
                *last = last.max(1.0);
            }
            c
        })
        .collect()
}

pub(crate) fn sample_row<R: Rng + ?Sized>(rows: &SparseRows, cumulative: &[Vec<f64>], z: usize, rng: &mut R) -> usize {
    let u = 1.0 - rng.gen::<f64>();
    let c = &cumulative[z];
    rows[z][c.partition_point(|&v| v < u).min(c.len() - 1)].0
}

/// Monte Carlo estimate of the taboo functional from `start`, one seeded
/// stream per path, reduced in path order.
pub fn mc_hitting_estimate(
    rows: &SparseRows,
    spec: &TabooFunctional,
    start: usize,
    options: McOptions,
) -> Result<McEstimate> {
    if options.n_paths < 100 {
        return Err(Error::Domain(format!(
            "Monte Carlo needs at least 100 paths, got {}",
            options.n_paths
        )));
    }
    let cumulative = cumulative_rows(rows);
    let cached = spec.rate.values(4096.min(options.cap_steps))?;
    let rate = |k: usize| -> Result<f64> {
        match cached.get(k) {
            Some(&r) => Ok(r),
            None => spec.rate.at(k),
        }
    };
    let outcomes = (0..options.n_paths)
        .into_par_iter()
        .map(|i| -> Result<Option<f64>> {
            let mut rng = path_rng(options.seed, i as u64);
            let mut z = start;
            let mut k = 0;
            let mut sum = 0.0;
            if spec.mode == TabooMode::Hitting {
                sum += rate(0)? * spec.weight[z];
                if spec.target[z] {
                    return Ok(Some(sum));
                }
            }
            loop {
                if k >= options.cap_steps {
                    return Ok(None);
                }
                z = sample_row(rows, &cumulative, z, &mut rng);
                k += 1;
                sum += rate(k)? * spec.weight[z];
                if spec.target[z] {
                    return Ok(Some(sum));
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let censored = outcomes.iter().filter(|o| o.is_none()).count();
    if censored * 100 > options.n_paths {
        return Err(Error::Unreliable {
            censored,
            n_paths: options.n_paths,
        });
    }
    let values: Vec<f64> = outcomes.into_iter().flatten().collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(McEstimate {
        mean,
        std_error: (var / n).sqrt(),
        n_paths: options.n_paths,
        censored,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    /// `Ẽ_{x,x',0}[χ_n 1{T > n}]`.
    pub lhs: Vec<f64>,
    /// `Ě_{x,x'}[χ_n (1-ε)^{N_{n-1}}]`.
    pub rhs: Vec<f64>,
    pub max_discrepancy: f64,
    pub cap: usize,
}

/// Evaluates both sides of the coupling identity exactly for `n = 0..=horizon`:
/// the left side by evolving the trivariate law, the right side by evolving
/// the pair law jointly with the number of earlier visits to `C×C`.
///
/// With `cap = None` visit counts above an automatic cap (where
/// `(1-ε)^cap` is negligible) are merged; an explicit cap that overflows is
/// an error.
pub fn coupling_identity_check(
    kernel: &FiniteKernel,
    m: &Minorization,
    coupled: &CoupledKernel,
    chi: &[f64],
    start: (usize, usize),
    horizon: usize,
    cap: Option<usize>,
) -> Result<IdentityCheck> {
    let n_pairs = coupled.n_pairs();
    if chi.len() != n_pairs {
        return Err(Error::Domain("test function must be defined on pair states".into()));
    }
    let keep = 1.0 - m.epsilon;
    let auto_cap = if keep <= 0.0 {
        1
    } else {
        ((1e-16f64).ln() / keep.ln()).ceil().max(64.0) as usize
    };
    let cap = cap.unwrap_or(auto_cap.min(horizon + 1)).max(1);
    if n_pairs.saturating_mul(horizon + 1).saturating_mul(cap + 1) > 10_000_000 {
        return Err(Error::Domain("coupling identity check exceeds the enumeration budget".into()));
    }
    let strict_cap = cap < horizon && keep.powi(cap as i32) > 1e-13;

    let mut law = TrivariateLaw::point(kernel.size(), TriState::new(start.0, start.1, false));
    let mut counted = vec![vec![0.0; n_pairs]; cap + 1];
    counted[0][coupled.pair(start.0, start.1)] = 1.0;
    let discount: Vec<f64> = (0..=cap).map(|k| keep.powi(k as i32)).collect();

    let mut lhs = Vec::with_capacity(horizon + 1);
    let mut rhs = Vec::with_capacity(horizon + 1);
    for n in 0..=horizon {
        lhs.push(law.uncoupled_expectation(chi));
        rhs.push(
            counted
                .iter()
                .zip(&discount)
                .map(|(layer, d)| d * layer.iter().zip(chi).map(|(p, c)| p * c).sum::<f64>())
                .sum(),
        );
        if n == horizon {
            break;
        }
        law = law.step(kernel, m, coupled);
        let mut next = vec![vec![0.0; n_pairs]; cap + 1];
        for (k, layer) in counted.iter().enumerate() {
            for (z, &mass) in layer.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let visits = k + usize::from(coupled.target()[z]);
                if visits > cap && strict_cap {
                    return Err(Error::CapOverflow { cap });
                }
                let layer_next = &mut next[visits.min(cap)];
                for &(w, p) in coupled.row(z) {
                    layer_next[w] += mass * p;
                }
            }
        }
        counted = next;
    }
    let max_discrepancy = lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(IdentityCheck {
        lhs,
        rhs,
        max_discrepancy,
        cap,
    })
}
