//! Finite-state Markov kernels, one-step minorization and stationary laws.

mod coupling;
mod trivariate;

pub use coupling::{
    check_monotone, independent_coupling, monotone_coupling, quantile, quantile_joint, CoupledKernel,
    CouplingStyle,
};
pub use trivariate::{trivariate_step, TriState, TrivariateChain, TrivariateLaw};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::solve_dense;

pub(crate) const ROW_SUM_TOL: f64 = 1e-12;

/// Row-stochastic matrix on states `0..S`, ordered by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct FiniteKernel {
    size: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for FiniteKernel {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        FiniteKernel::new(rows)
    }
}

impl From<FiniteKernel> for Vec<Vec<f64>> {
    fn from(k: FiniteKernel) -> Self {
        k.to_rows()
    }
}

impl FiniteKernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return Err(Error::InvalidKernel("kernel has no states".into()));
        }
        let mut data = Vec::with_capacity(size * size);
        for (x, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(Error::InvalidKernel(format!(
                    "row {x} has {} entries, expected {size}",
                    row.len()
                )));
            }
            if let Some(a) = row.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidKernel(format!(
                    "entry ({x}, {a}) = {} is not a nonnegative number",
                    row[a]
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidKernel(format!("row {x} sums to {sum}")));
            }
            data.extend_from_slice(row);
        }
        Ok(FiniteKernel { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.size..(x + 1) * self.size]
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.size + y]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.size).map(|x| self.row(x).to_vec()).collect()
    }

    /// Cumulative row `F_x(a) = P(x, [0, a])`, with the last entry pinned to 1.
    pub fn cdf_row(&self, x: usize) -> Vec<f64> {
        cdf(self.row(x))
    }

    /// `Pv`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.size)
            .map(|x| self.row(x).iter().zip(v).map(|(p, f)| p * f).sum())
            .collect()
    }

    /// `μP`.
    pub fn push_forward(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        for (x, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(x)) {
                *o += m * p;
            }
        }
        out
    }

    /// Nonzero entries of each row.
    pub fn sparse_rows(&self) -> Vec<Vec<(usize, f64)>> {
        (0..self.size)
            .map(|x| {
                self.row(x)
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(a, &p)| (a, p))
                    .collect()
            })
            .collect()
    }
}

pub(crate) fn cdf(row: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = row
        .iter()
        .map(|p| {
            acc += p;
            acc.min(1.0)
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

/// Birth–death chain on `0..size`: up with probability `p`, down with `q`,
/// hold otherwise; blocked moves at the ends hold.
pub fn birth_death(size: usize, p: f64, q: f64) -> Result<FiniteKernel> {
    if size < 2 || !(p >= 0.0 && q >= 0.0 && p + q <= 1.0) {
        return Err(Error::InvalidKernel(format!(
            "birth-death chain needs size >= 2, p, q >= 0 and p + q <= 1 (got size={size}, p={p}, q={q})"
        )));
    }
    let mut rows = vec![vec![0.0; size]; size];
    for (x, row) in rows.iter_mut().enumerate() {
        row[(x + 1).min(size - 1)] += p;
        row[x.saturating_sub(1)] += q;
        row[x] += 1.0 - p - q;
    }
    FiniteKernel::new(rows)
}

/// Reflected random walk on `0..size`: `x -> min(x+1, size-1)` with
/// probability `p`, `x -> max(x-1, 0)` otherwise.
pub fn reflected_walk(size: usize, p: f64) -> Result<FiniteKernel> {
    if size < 2 || !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidKernel(format!(
            "reflected walk needs size >= 2 and p in [0,1] (got size={size}, p={p})"
        )));
    }
    let mut rows = vec![vec![0.0; size]; size];
    for (x, row) in rows.iter_mut().enumerate() {
        row[(x + 1).min(size - 1)] += p;
        row[x.saturating_sub(1)] += 1.0 - p;
    }
    FiniteKernel::new(rows)
}

/// Random stochastically monotone kernel. Row weights are uniform draws
/// damped by `decay^a`; the resulting CDF columns are then sorted so that
/// `F_x(a)` is nonincreasing in `x`.
pub fn random_monotone(size: usize, decay: f64, seed: u64) -> Result<FiniteKernel> {
    if size < 2 || !(decay > 0.0 && decay.is_finite()) {
        return Err(Error::InvalidKernel(format!(
            "random monotone kernel needs size >= 2 and decay > 0 (got size={size}, decay={decay})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cdfs: Vec<Vec<f64>> = (0..size)
        .map(|_| {
            let w: Vec<f64> = (0..size)
                .map(|a| (1.0 - rng.gen::<f64>()) * decay.powi(a as i32))
                .collect();
            let total: f64 = w.iter().sum();
            cdf(&w.iter().map(|v| v / total).collect::<Vec<_>>())
        })
        .collect();
    for a in 0..size {
        let mut col: Vec<f64> = cdfs.iter().map(|r| r[a]).collect();
        col.sort_by(|u, v| v.total_cmp(u));
        for (row, v) in cdfs.iter_mut().zip(col) {
            row[a] = v;
        }
    }
    let rows = cdfs
        .iter()
        .map(|f| {
            let mut prev = 0.0;
            f.iter()
                .map(|&c| {
                    let p = (c - prev).max(0.0);
                    prev = c;
                    p
                })
                .collect()
        })
        .collect();
    FiniteKernel::new(rows)
}

/// One-step minorization `P(x, ·) >= ε ν(·)` for `x ∈ C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minorization {
    /// Sorted, deduplicated state indices.
    pub small_set: Vec<usize>,
    pub epsilon: f64,
    pub nu: Vec<f64>,
}

impl Minorization {
    /// Validates a user-supplied `(C, ε, ν)` against `kernel`.
    pub fn new(kernel: &FiniteKernel, small_set: &[usize], epsilon: f64, nu: Vec<f64>) -> Result<Self> {
        let small_set = normalize_set(kernel.size(), small_set)?;
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidMinorization(format!("epsilon = {epsilon} is not in (0,1]")));
        }
        if nu.len() != kernel.size() || nu.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidMinorization("nu must be a nonnegative vector over states".into()));
        }
        let total: f64 = nu.iter().sum();
        if (total - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidMinorization(format!("nu sums to {total}")));
        }
        for &x in &small_set {
            for (a, &n) in nu.iter().enumerate() {
                if kernel.get(x, a) < epsilon * n - ROW_SUM_TOL {
                    return Err(Error::InvalidMinorization(format!(
                        "P({x}, {a}) = {} < epsilon * nu({a}) = {}",
                        kernel.get(x, a),
                        epsilon * n
                    )));
                }
            }
        }
        Ok(Minorization {
            small_set,
            epsilon,
            nu,
        })
    }

    pub fn contains(&self, x: usize) -> bool {
        self.small_set.binary_search(&x).is_ok()
    }

    /// `ν(v)`.
    pub fn nu_expectation(&self, v: &[f64]) -> f64 {
        self.nu.iter().zip(v).map(|(n, f)| n * f).sum()
    }
}

pub(crate) fn normalize_set(size: usize, set: &[usize]) -> Result<Vec<usize>> {
    let mut s = set.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.is_empty() {
        return Err(Error::Domain("small set is empty".into()));
    }
    if let Some(&x) = s.iter().find(|&&x| x >= size) {
        return Err(Error::Domain(format!("state {x} is out of range 0..{size}")));
    }
    Ok(s)
}

/// Largest `ε` (and matching `ν`) for a fixed `C`, from columnwise minima.
pub fn extract_minorization(kernel: &FiniteKernel, small_set: &[usize]) -> Result<Minorization> {
    let small_set = normalize_set(kernel.size(), small_set)?;
    let minima: Vec<f64> = (0..kernel.size())
        .map(|a| {
            small_set
                .iter()
                .map(|&x| kernel.get(x, a))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let epsilon: f64 = minima.iter().sum();
    if epsilon <= 0.0 {
        return Err(Error::NotSmall);
    }
    let epsilon = epsilon.min(1.0);
    Ok(Minorization {
        small_set,
        nu: minima.iter().map(|m| m / epsilon).collect(),
        epsilon,
    })
}

/// Rows `Q(x, ·)` of the residual kernel for `x ∈ C`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualKernel {
    small_set: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl ResidualKernel {
    pub fn row(&self, x: usize) -> Option<&[f64]> {
        self.small_set
            .binary_search(&x)
            .ok()
            .map(|i| self.rows[i].as_slice())
    }

    pub fn small_set(&self) -> &[usize] {
        &self.small_set
    }

    /// `max_{x ∈ C} Qv(x)`.
    pub fn max_expectation(&self, v: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| r.iter().zip(v).map(|(q, f)| q * f).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `Q = (P - εν)/(1 - ε)` on `C`, and `Q = ν` when `ε = 1`.
pub fn residual_kernel(kernel: &FiniteKernel, m: &Minorization) -> Result<ResidualKernel> {
    let rows = m
        .small_set
        .iter()
        .map(|&x| {
            if m.epsilon >= 1.0 {
                return Ok(m.nu.clone());
            }
            kernel
                .row(x)
                .iter()
                .zip(&m.nu)
                .enumerate()
                .map(|(a, (&p, &n))| {
                    let q = (p - m.epsilon * n) / (1.0 - m.epsilon);
                    if q < -ROW_SUM_TOL {
                        Err(Error::InvalidMinorization(format!(
                            "residual kernel entry Q({x}, {a}) = {q} is negative"
                        )))
                    } else {
                        Ok(q.max(0.0))
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualKernel {
        small_set: m.small_set.clone(),
        rows,
    })
}

/// Unique `π` with `πP = π`, `Σπ = 1`.
pub fn stationary_distribution(kernel: &FiniteKernel) -> Result<Vec<f64>> {
    let n = kernel.size();
    // Equations Σ_x π(x)(P(x,y) - δ_xy) = 0 for y < n-1, plus normalization.
    let mut a = vec![vec![0.0; n]; n];
    for (y, eq) in a.iter_mut().enumerate().take(n - 1) {
        for (x, coef) in eq.iter_mut().enumerate() {
            *coef = kernel.get(x, y) - if x == y { 1.0 } else { 0.0 };
        }
    }
    a[n - 1] = vec![1.0; n];
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    let pi = solve_dense(a, b).ok_or(Error::NonUniqueStationary)?;
    let residual = kernel
        .push_forward(&pi)
        .iter()
        .zip(&pi)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max);
    if residual > 1e-10 || pi.iter().any(|&v| v < -1e-10) {
        return Err(Error::NonUniqueStationary);
    }
    Ok(pi.into_iter().map(|v| v.max(0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_rows() {
        assert!(FiniteKernel::new(vec![vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
        assert!(FiniteKernel::new(vec![vec![1.5, -0.5], vec![0.5, 0.5]]).is_err());
        assert!(FiniteKernel::new(vec![vec![1.0]]).is_ok());
    }

    #[test]
    fn minorization_examples() {
        let k = FiniteKernel::new(vec![
            vec![0.6, 0.4, 0.0],
            vec![0.3, 0.4, 0.3],
            vec![0.0, 0.5, 0.5],
        ])
        .unwrap();
        let m = extract_minorization(&k, &[0, 1]).unwrap();
        assert!((m.epsilon - 0.7).abs() < 1e-15);
        assert!((m.nu[0] - 3.0 / 7.0).abs() < 1e-15);
        assert!((m.nu[1] - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(m.nu[2], 0.0);

        let q = residual_kernel(&k, &m).unwrap();
        let row = q.row(0).unwrap();
        assert!((row[0] - 1.0).abs() < 1e-12 && row[1].abs() < 1e-12 && row[2] == 0.0);
        assert!(q.row(2).is_none());

        let single = extract_minorization(&k, &[2]).unwrap();
        assert_eq!(single.epsilon, 1.0);
        assert_eq!(single.nu, k.row(2).to_vec());
        let q = residual_kernel(&k, &single).unwrap();
        assert_eq!(q.row(2).unwrap(), k.row(2));

        let id = FiniteKernel::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(extract_minorization(&id, &[0, 1]), Err(Error::NotSmall));
    }

    #[test]
    fn residual_of_nu_row_is_nu() {
        let nu = vec![0.25, 0.25, 0.5];
        let k = FiniteKernel::new(vec![nu.clone(), vec![0.0, 0.5, 0.5], nu.clone()]).unwrap();
        let m = Minorization::new(&k, &[0], 0.5, nu.clone()).unwrap();
        let q = residual_kernel(&k, &m).unwrap();
        for (a, b) in q.row(0).unwrap().iter().zip(&nu) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(Minorization::new(&k, &[1], 0.5, nu).is_err());
    }

    #[test]
    fn regression_chain_minorization_constants() {
        let k = birth_death(21, 0.3, 0.5).unwrap();
        assert!((extract_minorization(&k, &[0, 1]).unwrap().epsilon - 0.7).abs() < 1e-12);
        assert!((extract_minorization(&k, &[0, 1, 2]).unwrap().epsilon - 0.2).abs() < 1e-12);
        let k = reflected_walk(31, 0.35).unwrap();
        let m = extract_minorization(&k, &[0, 1]).unwrap();
        assert!((m.epsilon - 0.65).abs() < 1e-12);
        assert!((m.nu[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_monotone_is_monotone_and_reproducible() {
        let a = random_monotone(10, 0.5, 3).unwrap();
        assert!(check_monotone(&a).is_ok());
        assert_eq!(a, random_monotone(10, 0.5, 3).unwrap());
        assert_ne!(a, random_monotone(10, 0.5, 4).unwrap());
    }

    #[test]
    fn stationary_examples() {
        let k = FiniteKernel::new(vec![
            vec![0.2, 0.3, 0.5],
            vec![0.5, 0.2, 0.3],
            vec![0.3, 0.5, 0.2],
        ])
        .unwrap();
        for v in stationary_distribution(&k).unwrap() {
            assert!((v - 1.0 / 3.0).abs() < 1e-14);
        }
        let (a, b) = (0.3, 0.1);
        let k = FiniteKernel::new(vec![vec![1.0 - a, a], vec![b, 1.0 - b]]).unwrap();
        let pi = stationary_distribution(&k).unwrap();
        assert!((pi[0] - b / (a + b)).abs() < 1e-14 && (pi[1] - a / (a + b)).abs() < 1e-14);

        // Detailed balance: π(x+1)/π(x) = p/q.
        let k = birth_death(11, 0.3, 0.5).unwrap();
        let pi = stationary_distribution(&k).unwrap();
        let weights: Vec<f64> = (0..11).map(|x| 0.6f64.powi(x)).collect();
        let total: f64 = weights.iter().sum();
        for (p, w) in pi.iter().zip(&weights) {
            assert!((p - w / total).abs() < 1e-13);
        }

        let id = FiniteKernel::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(stationary_distribution(&id), Err(Error::NonUniqueStationary));
    }

    #[test]
    fn serde_round_trip() {
        let k = birth_death(4, 0.2, 0.3).unwrap();
        let json = serde_json::to_string(&k).unwrap();
        let back: FiniteKernel = serde_json::from_str(&json).unwrap();
        assert_eq!(k, back);
        assert!(serde_json::from_str::<FiniteKernel>("[[0.5,0.6],[1,0]]").is_err());
    }
}
