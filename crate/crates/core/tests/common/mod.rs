#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subgeom::drift::{drift_weight, DriftCertificate};
use subgeom::kernels::{birth_death, extract_minorization, random_monotone, reflected_walk, FiniteKernel, Minorization};
use subgeom::numeric::least_squares;
use subgeom::rates::{Phi, PhiSpec};

/// A regression chain with its small set and a coupling weight `W`.
pub struct SuiteChain {
    pub name: &'static str,
    pub kernel: FiniteKernel,
    pub minorization: Minorization,
    pub v: Vec<f64>,
    /// Present when `D(φ, V, C)` holds for `φ(v) = √v`.
    pub certificate: Option<DriftCertificate>,
    pub weight: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
}

pub fn sqrt_phi() -> Phi {
    Phi::new(PhiSpec::Polynomial { c: 1.0, alpha: 0.5 }).unwrap()
}

pub fn geometric_v(size: usize, base: f64) -> Vec<f64> {
    (0..size).map(|x| base.powi(x as i32)).collect()
}

/// Ten distinct start pairs, always including `(0, S-1)`.
pub fn sample_pairs(size: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = vec![(0, size - 1)];
    while pairs.len() < 10 {
        let p = (rng.gen_range(0..size), rng.gen_range(0..size));
        if !pairs.contains(&p) {
            pairs.push(p);
        }
    }
    pairs
}

fn chain(name: &'static str, kernel: FiniteKernel, small_set: &[usize], base: f64, seed: u64) -> SuiteChain {
    let size = kernel.size();
    let minorization = extract_minorization(&kernel, small_set).unwrap();
    let v = geometric_v(size, base);
    let phi = sqrt_phi();
    let certificate = DriftCertificate::new(&kernel, &phi, &v, &minorization, None).ok();
    let weight = match &certificate {
        Some(c) => c.weight_on_pairs(),
        None => drift_weight(&phi, &v, 1.0).unwrap(),
    };
    SuiteChain {
        name,
        pairs: sample_pairs(size, seed),
        kernel,
        minorization,
        v,
        certificate,
        weight,
    }
}

/// Birth–death `S = 21, p = 0.3, q = 0.5`; reflected walk `S = 31, p = 0.35`;
/// random monotone `S = 10`.
pub fn regression_suite() -> Vec<SuiteChain> {
    vec![
        chain("birth_death_21", birth_death(21, 0.3, 0.5).unwrap(), &[0, 1], 1.5, 1),
        chain("reflected_walk_31", reflected_walk(31, 0.35).unwrap(), &[0, 1], 1.5, 2),
        chain("random_monotone_10", random_monotone(10, 0.5, 0).unwrap(), &[0, 1, 2, 3], 2.0, 3),
    ]
}

/// Birth–death `S = 21, p = 0.1, q = 0.8` with `V = 4^x`, which carries a
/// certificate on `C = {0, 1}`.
pub fn certified_birth_death() -> SuiteChain {
    chain("birth_death_21_strong", birth_death(21, 0.1, 0.8).unwrap(), &[0, 1], 4.0, 4)
}

/// `n` log-spaced integers in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp().round())
        .collect()
}

/// Slope of `y` against `x` by ordinary least squares.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let design: Vec<Vec<f64>> = x.iter().map(|&a| vec![1.0, a]).collect();
    least_squares(&design, y).0[1]
}

/// Exponent `γ` of `ln r(n) ≈ a + B n^γ + d ln n`, profiled over a grid.
pub fn profile_exponent(n: &[f64], ln_r: &[f64]) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    let mut gamma = 0.05;
    while gamma <= 0.95 + 1e-12 {
        let design: Vec<Vec<f64>> = n.iter().map(|&k| vec![1.0, k.powf(gamma), k.ln()]).collect();
        let (_, rss) = least_squares(&design, ln_r);
        if rss < best.0 {
            best = (rss, gamma);
        }
        gamma += 0.0005;
    }
    best.1
}

/// `α` of `ln r ≈ a + α ln(1 + ln(n r)) + b / (1 + ln(n r))²`.
pub fn log_family_exponent(n: &[f64], ln_r: &[f64]) -> f64 {
    let design: Vec<Vec<f64>> = n
        .iter()
        .zip(ln_r)
        .map(|(&k, &lr)| {
            let l = 1.0 + k.ln() + lr;
            vec![1.0, l.ln(), 1.0 / (l * l)]
        })
        .collect();
    least_squares(&design, ln_r).0[1]
}
