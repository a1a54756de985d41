//! The trivariate coupling chain `(X, X', d)` with bell variable `d`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{cdf, CoupledKernel, FiniteKernel, Minorization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TriState {
    pub x: usize,
    pub x_prime: usize,
    pub bell: bool,
}

impl TriState {
    pub fn new(x: usize, x_prime: usize, bell: bool) -> Self {
        TriState { x, x_prime, bell }
    }
}

fn draw(cumulative: &[f64], u: f64) -> usize {
    cumulative.partition_point(|&c| c < u).min(cumulative.len() - 1)
}

fn uniform_open_closed<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.gen::<f64>()
}

/// One step of the trivariate chain without precomputed tables.
///
/// Bell set: common move by `P`. Bell unset on `C×C`: with probability `ε`
/// both coordinates jump to a common draw from `ν` and the bell is set,
/// otherwise the pair moves by `P̌`. Bell unset off `C×C`: move by `P̌`.
pub fn trivariate_step<R: Rng + ?Sized>(
    kernel: &FiniteKernel,
    m: &Minorization,
    coupled: &CoupledKernel,
    s: TriState,
    rng: &mut R,
) -> TriState {
    if s.bell {
        let y = draw(&kernel.cdf_row(s.x), uniform_open_closed(rng));
        return TriState::new(y, y, true);
    }
    let z = coupled.pair(s.x, s.x_prime);
    if coupled.target()[z] && rng.gen::<f64>() < m.epsilon {
        let y = draw(&cdf(&m.nu), uniform_open_closed(rng));
        return TriState::new(y, y, true);
    }
    let row = coupled.row(z);
    let mut acc = 0.0;
    let cumulative: Vec<f64> = row
        .iter()
        .map(|&(_, p)| {
            acc += p;
            acc
        })
        .collect();
    let idx = draw(&cumulative, uniform_open_closed(rng) * acc);
    let (a, b) = coupled.unpair(row[idx].0);
    TriState::new(a, b, false)
}

/// Trivariate sampler with cumulative tables built once.
#[derive(Debug, Clone)]
pub struct TrivariateChain<'a> {
    kernel: &'a FiniteKernel,
    m: &'a Minorization,
    coupled: &'a CoupledKernel,
    p_cdf: Vec<Vec<f64>>,
    nu_cdf: Vec<f64>,
    pair_cdf: Vec<Vec<f64>>,
}

impl<'a> TrivariateChain<'a> {
    pub fn new(kernel: &'a FiniteKernel, m: &'a Minorization, coupled: &'a CoupledKernel) -> Self {
        let p_cdf = (0..kernel.size()).map(|x| kernel.cdf_row(x)).collect();
        let pair_cdf = coupled
            .rows()
            .iter()
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
            .collect();
        TrivariateChain {
            kernel,
            m,
            coupled,
            p_cdf,
            nu_cdf: cdf(&m.nu),
            pair_cdf,
        }
    }

    pub fn kernel(&self) -> &FiniteKernel {
        self.kernel
    }

    pub fn coupled(&self) -> &CoupledKernel {
        self.coupled
    }

    pub fn minorization(&self) -> &Minorization {
        self.m
    }

    pub fn step<R: Rng + ?Sized>(&self, s: TriState, rng: &mut R) -> TriState {
        if s.bell {
            let y = draw(&self.p_cdf[s.x], uniform_open_closed(rng));
            return TriState::new(y, y, true);
        }
        let z = self.coupled.pair(s.x, s.x_prime);
        if self.coupled.target()[z] && rng.gen::<f64>() < self.m.epsilon {
            let y = draw(&self.nu_cdf, uniform_open_closed(rng));
            return TriState::new(y, y, true);
        }
        let (a, b) = self.step_pair(z, rng);
        TriState::new(a, b, false)
    }

    /// One move of the bivariate chain `P̌` from pair state `z`.
    pub fn step_pair<R: Rng + ?Sized>(&self, z: usize, rng: &mut R) -> (usize, usize) {
        let idx = draw(&self.pair_cdf[z], uniform_open_closed(rng));
        self.coupled.unpair(self.coupled.row(z)[idx].0)
    }

    /// Exact one-step transition law `P̃(s, ·)`.
    pub fn transition_row(&self, s: TriState) -> Vec<(TriState, f64)> {
        let mut out: BTreeMap<TriState, f64> = BTreeMap::new();
        if s.bell {
            for (y, &p) in self.kernel.row(s.x).iter().enumerate().filter(|(_, &p)| p > 0.0) {
                *out.entry(TriState::new(y, y, true)).or_default() += p;
            }
        } else {
            let z = self.coupled.pair(s.x, s.x_prime);
            let stay = if self.coupled.target()[z] {
                for (y, &n) in self.m.nu.iter().enumerate().filter(|(_, &n)| n > 0.0) {
                    *out.entry(TriState::new(y, y, true)).or_default() += self.m.epsilon * n;
                }
                1.0 - self.m.epsilon
            } else {
                1.0
            };
            if stay > 0.0 {
                for &(w, p) in self.coupled.row(z) {
                    let (a, b) = self.coupled.unpair(w);
                    *out.entry(TriState::new(a, b, false)).or_default() += stay * p;
                }
            }
        }
        out.into_iter().collect()
    }
}

/// Exact law of the trivariate chain: mass on unbelled pair states and on
/// belled (merged) states.
#[derive(Debug, Clone, PartialEq)]
pub struct TrivariateLaw {
    size: usize,
    pub unbelled: Vec<f64>,
    pub belled: Vec<f64>,
}

impl TrivariateLaw {
    pub fn point(size: usize, s: TriState) -> Self {
        let mut law = TrivariateLaw {
            size,
            unbelled: vec![0.0; size * size],
            belled: vec![0.0; size],
        };
        if s.bell {
            law.belled[s.x] = 1.0;
        } else {
            law.unbelled[s.x * size + s.x_prime] = 1.0;
        }
        law
    }

    pub fn step(&self, kernel: &FiniteKernel, m: &Minorization, coupled: &CoupledKernel) -> Self {
        let mut belled = kernel.push_forward(&self.belled);
        let mut unbelled = vec![0.0; self.unbelled.len()];
        for (z, &mass) in self.unbelled.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let stay = if coupled.target()[z] {
                for (b, &n) in belled.iter_mut().zip(&m.nu) {
                    *b += mass * m.epsilon * n;
                }
                mass * (1.0 - m.epsilon)
            } else {
                mass
            };
            if stay > 0.0 {
                for &(w, p) in coupled.row(z) {
                    unbelled[w] += stay * p;
                }
            }
        }
        TrivariateLaw {
            size: self.size,
            unbelled,
            belled,
        }
    }

    /// Law of `X_n`.
    pub fn first_marginal(&self) -> Vec<f64> {
        let mut out = self.belled.clone();
        for (z, &p) in self.unbelled.iter().enumerate() {
            out[z / self.size] += p;
        }
        out
    }

    /// Law of `X'_n`.
    pub fn second_marginal(&self) -> Vec<f64> {
        let mut out = self.belled.clone();
        for (z, &p) in self.unbelled.iter().enumerate() {
            out[z % self.size] += p;
        }
        out
    }

    /// `P̃(T > n)`.
    pub fn uncoupled_mass(&self) -> f64 {
        self.unbelled.iter().sum()
    }

    /// `Ẽ[χ(X_n, X'_n) 1{T > n}]` for `χ` over pair states.
    pub fn uncoupled_expectation(&self, chi: &[f64]) -> f64 {
        self.unbelled.iter().zip(chi).map(|(p, c)| p * c).sum()
    }
}
