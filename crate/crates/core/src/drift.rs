//! Drift condition `PV + φ∘V <= V + b 1_C` and the closed-form moment
//! bounds it implies for the coupled chain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{normalize_set, FiniteKernel, Minorization};
use crate::rates::{Phi, PhiSpec};

/// Slack allowed in the drift inequality.
pub const DRIFT_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftCheck {
    /// `max(0, max_{x∈C} d(x))`.
    pub b: f64,
    /// `d(x) = PV(x) + φ(V(x)) - V(x)` for every state.
    pub margins: Vec<f64>,
}

fn check_v(kernel: &FiniteKernel, v: &[f64]) -> Result<()> {
    if v.len() != kernel.size() {
        return Err(Error::Domain(format!(
            "V has {} entries for {} states",
            v.len(),
            kernel.size()
        )));
    }
    if let Some(x) = v.iter().position(|&f| !(f >= 1.0 && f.is_finite())) {
        return Err(Error::Domain(format!("V({x}) = {} must be finite and >= 1", v[x])));
    }
    Ok(())
}

/// Computes `b` for `D(φ, V, C)`, or the worst violating state off `C`.
pub fn verify_drift(kernel: &FiniteKernel, phi: &Phi, v: &[f64], small_set: &[usize]) -> Result<DriftCheck> {
    check_v(kernel, v)?;
    let small_set = normalize_set(kernel.size(), small_set)?;
    let pv = kernel.apply(v);
    let margins = pv
        .iter()
        .zip(v)
        .map(|(&p, &f)| Ok(p + phi.eval(f)? - f))
        .collect::<Result<Vec<f64>>>()?;
    let worst_off = (0..kernel.size())
        .filter(|x| small_set.binary_search(x).is_err())
        .map(|x| (x, margins[x]))
        .fold(None, |acc: Option<(usize, f64)>, e| match acc {
            Some(a) if a.1 >= e.1 => Some(a),
            _ => Some(e),
        });
    if let Some((state, margin)) = worst_off {
        if margin > DRIFT_SLACK {
            return Err(Error::DriftFails { state, margin });
        }
    }
    let b = small_set.iter().map(|&x| margins[x]).fold(0.0, f64::max);
    Ok(DriftCheck { b, margins })
}

/// `C ∪ {x : V(x) <= level}`.
pub fn level_set(v: &[f64], level: f64) -> Vec<usize> {
    (0..v.len()).filter(|&x| v[x] <= level).collect()
}

fn inf_phi_off(phi: &Phi, v: &[f64], in_set: impl Fn(usize) -> bool) -> f64 {
    (0..v.len())
        .filter(|&x| !in_set(x))
        .map(|x| phi.eval(v[x]).unwrap_or(f64::NAN))
        .fold(f64::INFINITY, f64::min)
}

/// `λ_max = 1 - b / inf_{x∉C} φ(V(x))`.
///
/// Fails with a suggested level `d` such that `C ∪ {V <= d}` satisfies
/// `inf φ∘V > b` when the current set does not.
pub fn lambda_interval(check: &DriftCheck, phi: &Phi, v: &[f64], small_set: &[usize]) -> Result<f64> {
    let contains = |x: usize| small_set.contains(&x);
    let inf = inf_phi_off(phi, v, contains);
    if inf > check.b {
        return Ok(if inf.is_infinite() { 1.0 } else { 1.0 - check.b / inf });
    }
    let mut levels: Vec<f64> = v.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let suggested_level = levels.into_iter().find(|&d| {
        let member = |x: usize| contains(x) || v[x] <= d;
        let b = (0..v.len())
            .filter(|&x| member(x))
            .map(|x| check.margins[x])
            .fold(0.0, f64::max);
        inf_phi_off(phi, v, member) > b
    });
    Err(Error::EnlargeSmallSet {
        b: check.b,
        inf_off_c: inf,
        suggested_level,
    })
}

/// `V* = (1-ε)⁻¹ max_{y∈C} (PV(y) - ε ν(V))`, or `ν(V)` when `ε = 1`.
pub fn v_star(kernel: &FiniteKernel, m: &Minorization, v: &[f64]) -> f64 {
    let nu_v = m.nu_expectation(v);
    if m.epsilon >= 1.0 {
        return nu_v;
    }
    let pv = kernel.apply(v);
    let sup = m
        .small_set
        .iter()
        .map(|&y| pv[y] - m.epsilon * nu_v)
        .fold(f64::NEG_INFINITY, f64::max);
    sup / (1.0 - m.epsilon)
}

/// `W(x, x') = λ φ(V(x) + V(x') - 1)` on all pair states `x·S + x'`.
pub fn drift_weight(phi: &Phi, v: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let s = v.len();
    (0..s * s)
        .map(|z| Ok(lambda * phi.eval(v[z / s] + v[z % s] - 1.0)?))
        .collect()
}

/// A verified drift certificate `D(φ, V, C)` with `inf_{x∉C} φ(V(x)) > b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftCertificate {
    pub phi: PhiSpec,
    pub v: Vec<f64>,
    pub small_set: Vec<usize>,
    pub b: f64,
    pub lambda: f64,
    pub lambda_max: f64,
    pub v_star: f64,
    pub inf_phi_v_off_c: f64,
    #[serde(skip)]
    phi_fn: Phi,
}

impl DriftCertificate {
    /// Verifies the drift condition on the small set of `m`. `lambda`
    /// defaults to `λ_max / 2`.
    pub fn new(kernel: &FiniteKernel, phi: &Phi, v: &[f64], m: &Minorization, lambda: Option<f64>) -> Result<Self> {
        let check = verify_drift(kernel, phi, v, &m.small_set)?;
        let lambda_max = lambda_interval(&check, phi, v, &m.small_set)?;
        let lambda = lambda.unwrap_or(lambda_max / 2.0);
        if !(lambda > 0.0 && lambda < lambda_max) {
            return Err(Error::Domain(format!(
                "lambda = {lambda} is outside (0, {lambda_max})"
            )));
        }
        Ok(DriftCertificate {
            phi: phi.spec().clone(),
            v: v.to_vec(),
            small_set: m.small_set.clone(),
            b: check.b,
            lambda,
            lambda_max,
            v_star: v_star(kernel, m, v),
            inf_phi_v_off_c: inf_phi_off(phi, v, |x| m.contains(x)),
            phi_fn: phi.clone(),
        })
    }

    pub fn phi(&self) -> &Phi {
        &self.phi_fn
    }

    /// `λ φ(V(x) + V(x') - 1)`.
    pub fn coupling_weight(&self, x: usize, x_prime: usize) -> f64 {
        self.lambda * self.phi_fn.eval(self.v[x] + self.v[x_prime] - 1.0).expect("V >= 1")
    }

    /// `W` on all pair states.
    pub fn weight_on_pairs(&self) -> Vec<f64> {
        drift_weight(&self.phi_fn, &self.v, self.lambda).expect("V >= 1")
    }

    /// `sup_{C×C} W`.
    pub fn sup_weight_on_target(&self) -> f64 {
        let c = &self.small_set;
        c.iter()
            .flat_map(|&y| c.iter().map(move |&yp| (y, yp)))
            .map(|(y, yp)| self.coupling_weight(y, yp))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropositionBounds {
    /// Bound on `Ě_{x,x'}[Σ_{k=0}^{σ} r_φ(k)]`.
    pub r_sigma: f64,
    /// Bound on `Ě_{x,x'}[Σ_{k=0}^{σ} W(X_k, X'_k)]`.
    pub w_sigma: f64,
    /// Bound on `R* = sup_{C×C} Ě[Σ_{k=1}^{τ} r_φ(k)]`.
    pub r_star: f64,
    /// Bound on `W* = sup_{C×C} Ě[Σ_{k=1}^{τ} W(X_k, X'_k)]`.
    pub w_star: f64,
}

/// The four closed-form moment bounds at the pair `(x, x')`.
pub fn proposition_bounds(cert: &DriftCertificate, x: usize, x_prime: usize) -> Result<PropositionBounds> {
    let phi = cert.phi();
    let ratio = phi.rate(1.0)? / phi.eval(1.0)?;
    let outside = !(cert.small_set.contains(&x) && cert.small_set.contains(&x_prime));
    let vv = if outside { cert.v[x] + cert.v[x_prime] } else { 0.0 };
    let sup_w = cert.sup_weight_on_target();
    Ok(PropositionBounds {
        r_sigma: 1.0 + ratio * vv,
        w_sigma: sup_w + vv,
        r_star: 1.0 + ratio * (2.0 * cert.v_star - 1.0),
        w_star: sup_w + 2.0 * cert.v_star - 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{birth_death, extract_minorization, residual_kernel};
    use crate::rates::PhiSpec;

    fn sqrt_phi(c: f64) -> Phi {
        Phi::new(PhiSpec::Polynomial { c, alpha: 0.5 }).unwrap()
    }

    #[test]
    fn identity_kernel_drift() {
        let k = FiniteKernel::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let phi = sqrt_phi(0.1);
        let v = vec![1.0, 1.0];
        assert!(matches!(verify_drift(&k, &phi, &v, &[0]), Err(Error::DriftFails { state: 1, .. })));
        let check = verify_drift(&k, &phi, &v, &[0, 1]).unwrap();
        assert!((check.b - 0.1).abs() < 1e-15);
        assert_eq!(lambda_interval(&check, &phi, &v, &[0, 1]).unwrap(), 1.0);
    }

    #[test]
    fn birth_death_linear_drift() {
        // PV - V = p - q = -0.2 in the interior, so φ(v) = c sqrt(v) with
        // c = 0.2/sqrt(51) satisfies the drift off {0}.
        let k = birth_death(51, 0.3, 0.5).unwrap();
        let v: Vec<f64> = (0..51).map(|x| x as f64 + 1.0).collect();
        let c = 0.2 / 51f64.sqrt();
        let phi = sqrt_phi(c);
        let check = verify_drift(&k, &phi, &v, &[0]).unwrap();
        // d(0) = p + φ(1).
        assert!((check.b - (0.3 + c)).abs() < 1e-14);
        let inf = (1..51).map(|x| c * (x as f64 + 1.0).sqrt()).fold(f64::INFINITY, f64::min);
        match lambda_interval(&check, &phi, &v, &[0]) {
            Ok(l) => assert!((l - (1.0 - check.b / inf)).abs() < 1e-14),
            Err(Error::EnlargeSmallSet { inf_off_c, .. }) => assert!((inf_off_c - inf).abs() < 1e-14),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn lambda_examples() {
        let phi = sqrt_phi(1.0);
        let v = vec![1.0, 4.0];
        let check = DriftCheck {
            b: 0.0,
            margins: vec![0.0, -1.0],
        };
        assert_eq!(lambda_interval(&check, &phi, &v, &[0]).unwrap(), 1.0);
        let check = DriftCheck {
            b: 1.0,
            margins: vec![1.0, -1.0],
        };
        assert!((lambda_interval(&check, &phi, &v, &[0]).unwrap() - 0.5).abs() < 1e-15);
        let check = DriftCheck {
            b: 3.0,
            margins: vec![3.0, -1.0],
        };
        match lambda_interval(&check, &phi, &v, &[0]) {
            Err(Error::EnlargeSmallSet { suggested_level, .. }) => assert_eq!(suggested_level, Some(4.0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn v_star_matches_residual_expectation() {
        let k = FiniteKernel::new(vec![
            vec![0.6, 0.4, 0.0],
            vec![0.3, 0.4, 0.3],
            vec![0.0, 0.5, 0.5],
        ])
        .unwrap();
        let m = extract_minorization(&k, &[0, 1]).unwrap();
        let v = vec![1.0, 2.0, 5.0];
        let q = residual_kernel(&k, &m).unwrap();
        assert!((v_star(&k, &m, &v) - q.max_expectation(&v)).abs() < 1e-12);
        assert!((v_star(&k, &m, &[1.0; 3]) - 1.0).abs() < 1e-12);
        let single = extract_minorization(&k, &[2]).unwrap();
        assert!((v_star(&k, &single, &v) - 3.5).abs() < 1e-15);
    }

    #[test]
    fn weights_and_bounds_structure() {
        let k = birth_death(21, 0.1, 0.8).unwrap();
        let m = extract_minorization(&k, &[0, 1]).unwrap();
        let v: Vec<f64> = (0..21).map(|x| 4f64.powi(x)).collect();
        let phi = sqrt_phi(1.0);
        let cert = DriftCertificate::new(&k, &phi, &v, &m, None).unwrap();
        assert!(cert.inf_phi_v_off_c > cert.b);
        let w37 = cert.coupling_weight(3, 7);
        assert!((w37 - cert.lambda * (v[3] + v[7] - 1.0).sqrt()).abs() < 1e-9 * w37);
        assert_eq!(cert.coupling_weight(3, 7), cert.coupling_weight(7, 3));
        let inside = proposition_bounds(&cert, 0, 1).unwrap();
        assert_eq!(inside.r_sigma, 1.0);
        assert_eq!(inside.w_sigma, cert.sup_weight_on_target());
        let outside = proposition_bounds(&cert, 0, 5).unwrap();
        assert!(outside.r_sigma > 1.0 && outside.w_sigma > inside.w_sigma);

        let flat = Minorization::new(&k, &[0, 1], 0.5, m.nu.clone()).unwrap();
        assert!((v_star(&k, &flat, &[1.0; 21]) - 1.0).abs() < 1e-12);
    }
}
