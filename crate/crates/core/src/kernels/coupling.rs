//! Bivariate coupled kernels on pair states `x·S + x'`.

use serde::{Deserialize, Serialize};

use super::{cdf, residual_kernel, FiniteKernel, Minorization, ResidualKernel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CouplingStyle {
    #[default]
    Independent,
    Monotone,
}

/// Coupled kernel `P̌` whose marginals are `P` off `C×C` and `Q` on `C×C`.
/// Rows are stored as sorted `(pair index, mass)` lists without zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledKernel {
    size: usize,
    style: CouplingStyle,
    in_target: Vec<bool>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl CoupledKernel {
    /// Number of states `S` of each coordinate.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn n_pairs(&self) -> usize {
        self.size * self.size
    }

    pub fn pair(&self, x: usize, x_prime: usize) -> usize {
        x * self.size + x_prime
    }

    pub fn unpair(&self, z: usize) -> (usize, usize) {
        (z / self.size, z % self.size)
    }

    pub fn style(&self) -> CouplingStyle {
        self.style
    }

    pub fn row(&self, z: usize) -> &[(usize, f64)] {
        &self.rows[z]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    /// Membership of each pair state in `C×C`.
    pub fn target(&self) -> &[bool] {
        &self.in_target
    }

    pub fn target_pairs(&self) -> Vec<usize> {
        (0..self.n_pairs()).filter(|&z| self.in_target[z]).collect()
    }

    /// Dense `S² × S²` matrix.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; self.n_pairs()];
                for &(z, p) in row {
                    dense[z] = p;
                }
                dense
            })
            .collect()
    }

    /// First and second coordinate marginals of row `z`.
    pub fn marginals(&self, z: usize) -> (Vec<f64>, Vec<f64>) {
        let mut first = vec![0.0; self.size];
        let mut second = vec![0.0; self.size];
        for &(w, p) in &self.rows[z] {
            let (a, b) = self.unpair(w);
            first[a] += p;
            second[b] += p;
        }
        (first, second)
    }

    /// `Ph` for a function `h` over pair states.
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(w, p)| p * h[w]).sum())
            .collect()
    }
}

fn target_mask(size: usize, m: &Minorization) -> Vec<bool> {
    (0..size * size)
        .map(|z| m.contains(z / size) && m.contains(z % size))
        .collect()
}

fn marginal_rows<'a>(
    kernel: &'a FiniteKernel,
    residual: &'a ResidualKernel,
    x: usize,
    x_prime: usize,
    on_target: bool,
) -> (&'a [f64], &'a [f64]) {
    if on_target {
        (
            residual.row(x).expect("x in C"),
            residual.row(x_prime).expect("x' in C"),
        )
    } else {
        (kernel.row(x), kernel.row(x_prime))
    }
}

/// `P ⊗ P` off `C×C` and `Q ⊗ Q` on `C×C`.
pub fn independent_coupling(kernel: &FiniteKernel, m: &Minorization) -> Result<CoupledKernel> {
    let size = kernel.size();
    let residual = residual_kernel(kernel, m)?;
    let in_target = target_mask(size, m);
    let rows = (0..size * size)
        .map(|z| {
            let (x, xp) = (z / size, z % size);
            let (r1, r2) = marginal_rows(kernel, &residual, x, xp, in_target[z]);
            let mut row = Vec::new();
            for (a, &p) in r1.iter().enumerate().filter(|(_, &p)| p > 0.0) {
                for (b, &q) in r2.iter().enumerate().filter(|(_, &q)| q > 0.0) {
                    row.push((a * size + b, p * q));
                }
            }
            row
        })
        .collect();
    Ok(CoupledKernel {
        size,
        style: CouplingStyle::Independent,
        in_target,
        rows,
    })
}

/// Smallest state `a` with `F(a) >= u`, `u ∈ (0, 1]`.
pub fn quantile(row: &[f64], u: f64) -> Result<usize> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0,1], got {u}")));
    }
    let f = cdf(row);
    Ok(f.partition_point(|&c| c < u).min(row.len() - 1))
}

/// Joint law of `(F⁻(U), G⁻(U))` for a common uniform `U`, as exact overlap
/// lengths of the CDF intervals `(F(a-1), F(a)]` and `(G(b-1), G(b)]`.
pub fn quantile_joint(first: &[f64], second: &[f64]) -> Vec<((usize, usize), f64)> {
    let (f, g) = (cdf(first), cdf(second));
    let mut out = Vec::new();
    let (mut i, mut j, mut lo) = (0, 0, 0.0_f64);
    while i < f.len() && j < g.len() {
        let hi = f[i].min(g[j]);
        if hi > lo {
            out.push(((i, j), hi - lo));
            lo = hi;
        }
        if f[i] <= hi {
            i += 1;
        }
        if g[j] <= hi {
            j += 1;
        }
    }
    out
}

/// Common-uniform quantile coupling of the rows of `P` (off `C×C`) or `Q`
/// (on `C×C`). Requires `C` to be a lower set `{0, .., a₀}`.
pub fn monotone_coupling(kernel: &FiniteKernel, m: &Minorization) -> Result<CoupledKernel> {
    if m.small_set.iter().enumerate().any(|(i, &x)| i != x) {
        return Err(Error::NotLowerSet);
    }
    let size = kernel.size();
    let residual = residual_kernel(kernel, m)?;
    let in_target = target_mask(size, m);
    let rows = (0..size * size)
        .map(|z| {
            let (x, xp) = (z / size, z % size);
            let (r1, r2) = marginal_rows(kernel, &residual, x, xp, in_target[z]);
            let mut row: Vec<(usize, f64)> = quantile_joint(r1, r2)
                .into_iter()
                .map(|((a, b), p)| (a * size + b, p))
                .collect();
            row.sort_unstable_by_key(|e| e.0);
            row
        })
        .collect();
    Ok(CoupledKernel {
        size,
        style: CouplingStyle::Monotone,
        in_target,
        rows,
    })
}

/// CDF dominance `F_x(a) >= F_{x+1}(a)` for all adjacent rows.
pub fn check_monotone(kernel: &FiniteKernel) -> Result<()> {
    for x in 0..kernel.size().saturating_sub(1) {
        let (f, g) = (kernel.cdf_row(x), kernel.cdf_row(x + 1));
        if let Some(a) = (0..f.len()).find(|&a| f[a] < g[a] - 1e-12) {
            return Err(Error::NotMonotone { x, y: x + 1, a });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{birth_death, extract_minorization, random_monotone};

    fn assert_marginals(kernel: &FiniteKernel, m: &Minorization, coupled: &CoupledKernel) {
        let residual = residual_kernel(kernel, m).unwrap();
        for z in 0..coupled.n_pairs() {
            let (x, xp) = coupled.unpair(z);
            let (first, second) = coupled.marginals(z);
            let (r1, r2) = marginal_rows(kernel, &residual, x, xp, coupled.target()[z]);
            for a in 0..kernel.size() {
                assert!((first[a] - r1[a]).abs() < 1e-12, "pair {z} first coordinate at {a}");
                assert!((second[a] - r2[a]).abs() < 1e-12, "pair {z} second coordinate at {a}");
            }
        }
    }

    #[test]
    fn quantile_examples() {
        let row = [0.2, 0.3, 0.5];
        assert_eq!(quantile(&row, 0.25).unwrap(), 1);
        assert_eq!(quantile(&row, 0.2).unwrap(), 0);
        assert_eq!(quantile(&row, 1.0).unwrap(), 2);
        for u in [1e-9, 0.3, 0.99] {
            assert_eq!(quantile(&[0.0, 0.0, 1.0], u).unwrap(), 2);
        }
        assert!(quantile(&row, 0.0).is_err());
        assert!(quantile(&row, 1.1).is_err());
    }

    #[test]
    fn quantile_joint_example() {
        let joint = quantile_joint(&[0.5, 0.5, 0.0], &[0.2, 0.3, 0.5]);
        let expect = [((0, 0), 0.2), ((0, 1), 0.3), ((1, 2), 0.5)];
        assert_eq!(joint.len(), 3);
        for ((pa, ma), (pb, mb)) in joint.iter().zip(expect) {
            assert_eq!(*pa, pb);
            assert!((ma - mb).abs() < 1e-15);
        }
        let same = quantile_joint(&[0.1, 0.6, 0.3], &[0.1, 0.6, 0.3]);
        assert!(same.iter().all(|((a, b), _)| a == b));
    }

    #[test]
    fn independent_coupling_examples() {
        let k = FiniteKernel::new(vec![vec![1.0]]).unwrap();
        let m = extract_minorization(&k, &[0]).unwrap();
        assert_eq!(independent_coupling(&k, &m).unwrap().to_dense(), vec![vec![1.0]]);

        let k = FiniteKernel::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let m = extract_minorization(&k, &[0, 1]).unwrap();
        assert_eq!(m.epsilon, 1.0);
        let c = independent_coupling(&k, &m).unwrap();
        for row in c.to_dense() {
            assert_eq!(row, vec![0.25; 4]);
        }
    }

    #[test]
    fn couplings_have_the_right_marginals() {
        let k = random_monotone(4, 0.6, 11).unwrap();
        for set in [vec![0], vec![0, 1], vec![0, 1, 2]] {
            let m = match extract_minorization(&k, &set) {
                Ok(m) => m,
                Err(_) => continue,
            };
            assert_marginals(&k, &m, &independent_coupling(&k, &m).unwrap());
            assert_marginals(&k, &m, &monotone_coupling(&k, &m).unwrap());
        }
    }

    #[test]
    fn monotone_coupling_diagonal_and_lower_set() {
        let k = birth_death(6, 0.3, 0.5).unwrap();
        let m = extract_minorization(&k, &[0, 1]).unwrap();
        let c = monotone_coupling(&k, &m).unwrap();
        for x in 2..6 {
            let z = c.pair(x, x);
            for &(w, p) in c.row(z) {
                let (a, b) = c.unpair(w);
                assert_eq!(a, b);
                assert!((p - k.get(x, a)).abs() < 1e-15);
            }
        }
        let m = extract_minorization(&k, &[1, 2]).unwrap();
        assert_eq!(monotone_coupling(&k, &m), Err(Error::NotLowerSet));
    }

    #[test]
    fn monotone_check_examples() {
        let id = FiniteKernel::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(check_monotone(&id).is_ok());
        let k = birth_death(8, 0.3, 0.5).unwrap();
        assert!(check_monotone(&k).is_ok());
        let mut rows = k.to_rows();
        rows.swap(0, 1);
        let swapped = FiniteKernel::new(rows).unwrap();
        assert_eq!(check_monotone(&swapped), Err(Error::NotMonotone { x: 0, y: 1, a: 0 }));
    }
}
