//! Assembly of explicit convergence bounds from hitting-time ingredients.
//!
//! Distances are in the `[0, 2]` total-variation scale `‖μ‖ = Σ|μ|`, so the
//! total-variation series bound carries a factor 2 over the bound on
//! `Σ r(n) P(T > n)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::drift::{proposition_bounds, DriftCertificate};
use crate::error::{Error, Result};
use crate::hitting::{
    mc_hitting_estimate, return_supremum, taboo_expectation, taboo_expectation_from_law, McOptions,
    RateSource, TabooFunctional, TabooMode,
};
use crate::kernels::{check_monotone, residual_kernel, CoupledKernel, FiniteKernel, Minorization};
use crate::rates::{m_constant, with_phi_sequence, MConstant, MConvention, RateSequence, YoungPair};

const WEIGHT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    TvSeries,
    FSeries,
    Interpolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    MonteCarlo,
    DriftProposition,
    /// Computed from other ingredients.
    Derived,
    /// A user-chosen constant such as `δ`.
    Parameter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ingredient {
    pub value: f64,
    pub source: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

impl Ingredient {
    pub fn new(value: f64, source: Provenance) -> Self {
        Ingredient {
            value,
            source,
            std_error: None,
        }
    }

    pub fn exact(value: f64) -> Self {
        Self::new(value, Provenance::Exact)
    }

    fn parameter(value: f64) -> Self {
        Self::new(value, Provenance::Parameter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StartSpec {
    Pair { x: usize, x_prime: usize },
    /// Integrated over `x' ~ π`.
    Stationary { x: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub start: StartSpec,
    pub formula: String,
    pub rate_label: String,
    pub ingredients: BTreeMap<String, Ingredient>,
    pub value: f64,
    pub infinite: bool,
    pub mixed_sources: bool,
    pub notes: Vec<String>,
}

/// Ingredients of the bounds at one start pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ingredients {
    pub epsilon: f64,
    /// `Ě_{x,x'}[Σ_{k=0}^{σ} r(k)]`.
    pub sigma_moment: Ingredient,
    /// `R* = sup_{C×C} Ě[Σ_{k=1}^{τ} r(k)]`, unnormalized.
    pub return_sup: Ingredient,
    /// `Ě_{x,x'}[Σ_{k=0}^{σ} W(X_k, X'_k)]`.
    pub w_sigma: Option<Ingredient>,
    /// `W* = sup_{C×C} Ě[Σ_{k=1}^{τ} W(X_k, X'_k)]`.
    pub w_star: Option<Ingredient>,
}

fn coefficient(epsilon: f64) -> f64 {
    (1.0 - epsilon) / epsilon
}

/// `a · b` with `0 · ∞ = 0`.
fn scaled(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * b
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("epsilon must lie in (0,1], got {epsilon}")))
    }
}

fn finish(
    kind: BoundKind,
    start: StartSpec,
    formula: &str,
    rate_label: &str,
    ingredients: BTreeMap<String, Ingredient>,
    mut notes: Vec<String>,
) -> Result<BoundReport> {
    let sources: Vec<Provenance> = ingredients
        .values()
        .map(|i| i.source)
        .filter(|s| !matches!(s, Provenance::Derived | Provenance::Parameter))
        .collect();
    let mixed_sources = sources.windows(2).any(|w| w[0] != w[1]);
    if sources.contains(&Provenance::MonteCarlo) {
        notes.push("Monte Carlo ingredients: dominance holds only statistically".into());
    }
    let mut report = BoundReport {
        kind,
        start,
        formula: formula.into(),
        rate_label: rate_label.into(),
        ingredients,
        value: f64::NAN,
        infinite: false,
        mixed_sources,
        notes,
    };
    report.value = report.recompute()?;
    report.infinite = report.value.is_infinite();
    Ok(report)
}

impl BoundReport {
    fn get(&self, name: &str) -> Result<f64> {
        self.ingredients
            .get(name)
            .map(|i| i.value)
            .ok_or_else(|| Error::Aggregation(format!("report lacks ingredient {name}")))
    }

    /// Re-evaluates the value from the stored ingredients.
    pub fn recompute(&self) -> Result<f64> {
        let g = |n: &str| self.get(n);
        Ok(match self.formula.as_str() {
            "tv_series.proof" => 2.0 * ((1.0 + g("delta")?) * g("sigma_moment")? + g("M")?),
            "tv_series.theorem" => {
                2.0 * ((1.0 + g("delta")?) * g("sigma_moment")? + scaled(coefficient(g("epsilon")?), g("M")?))
            }
            "f_series" => g("W_sigma_moment")? + scaled(coefficient(g("epsilon")?), g("W_star")?),
            "interpolated.proof" => {
                let rho = g("rho")?;
                scaled(rho, (1.0 + g("delta")?) * g("sigma_moment")? + g("M")?)
                    + scaled(
                        1.0 - rho,
                        g("W_sigma_moment")? + scaled(coefficient(g("epsilon")?), g("W_star")?),
                    )
            }
            "interpolated.theorem" => {
                let rho = g("rho")?;
                scaled(rho, (1.0 + g("delta")?) * g("sigma_moment")?)
                    + scaled(1.0 - rho, g("W_sigma_moment")?)
                    + scaled(
                        coefficient(g("epsilon")?),
                        scaled(rho, g("M")?) + scaled(1.0 - rho, g("W_star")?),
                    )
            }
            "stationary_integrated" => self
                .ingredients
                .iter()
                .filter(|(k, _)| k.starts_with("weighted["))
                .map(|(_, i)| i.value)
                .sum(),
            other => return Err(Error::Aggregation(format!("unknown formula {other}"))),
        })
    }
}

/// `M` for the given rate source, lengthening the sequence as needed.
pub fn m_for_rate(
    return_sup: f64,
    epsilon: f64,
    delta: f64,
    rate: &RateSource,
    convention: MConvention,
) -> Result<MConstant> {
    if !return_sup.is_finite() {
        return Ok(MConstant {
            value: f64::INFINITY,
            argmax: 0,
            decided_at: 0,
        });
    }
    match rate {
        RateSource::Sequence(seq) => m_constant(return_sup, epsilon, delta, seq, convention),
        RateSource::Phi(phi) => with_phi_sequence(phi, 256, |seq| {
            m_constant(return_sup, epsilon, delta, seq, convention)
        }),
        RateSource::Constant(c) => {
            let mut n = 256;
            loop {
                let seq = RateSequence::constant(*c, n)?;
                match m_constant(return_sup, epsilon, delta, &seq, convention) {
                    Err(Error::NeedsLongerSequence { needed }) if n < 1 << 24 => n = (2 * n).max(needed + 1),
                    other => return other,
                }
            }
        }
    }
}

fn formula_id(base: &str, convention: MConvention) -> String {
    match convention {
        MConvention::Proof => format!("{base}.proof"),
        MConvention::Theorem => format!("{base}.theorem"),
    }
}

/// `Σ_n r(n) ‖Pⁿ(x,·) - Pⁿ(x',·)‖_TV <= 2[(1+δ) σ_moment + M-term]`.
pub fn tv_series_bound(
    ing: &Ingredients,
    start: StartSpec,
    rate: &RateSource,
    rate_label: &str,
    delta: f64,
    convention: MConvention,
) -> Result<BoundReport> {
    check_epsilon(ing.epsilon)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    let m = m_for_rate(ing.return_sup.value, ing.epsilon, delta, rate, convention)?;
    let mut map = BTreeMap::new();
    map.insert("epsilon".into(), Ingredient::parameter(ing.epsilon));
    map.insert("delta".into(), Ingredient::parameter(delta));
    map.insert("sigma_moment".into(), ing.sigma_moment);
    map.insert("R_star".into(), ing.return_sup);
    map.insert("M".into(), Ingredient::new(m.value, Provenance::Derived));
    let notes = vec![format!("M supremum attained at n = {}", m.argmax)];
    finish(
        BoundKind::TvSeries,
        start,
        &formula_id("tv_series", convention),
        rate_label,
        map,
        notes,
    )
}

/// Checks `f(x) + f(x') <= W(x, x')` on every pair.
pub fn check_weight_domination(f: &[f64], w: &[f64]) -> Result<()> {
    let s = f.len();
    if w.len() != s * s {
        return Err(Error::Domain("W must be defined on all pair states".into()));
    }
    for x in 0..s {
        for xp in 0..s {
            let (lhs, rhs) = (f[x] + f[xp], w[x * s + xp]);
            if lhs > rhs + WEIGHT_SLACK * rhs.abs().max(1.0) {
                return Err(Error::InvalidWeight {
                    x,
                    x_prime: xp,
                    lhs,
                    rhs,
                });
            }
        }
    }
    Ok(())
}

/// Largest symmetric split of a pair weight: `f(x) = min_{x'} W(x, x') / 2`
/// satisfies `f(x) + f(x') <= W(x, x')` whenever `W` is symmetric.
pub fn dominated_split(w: &[f64], size: usize) -> Vec<f64> {
    (0..size)
        .map(|x| 0.5 * (0..size).map(|xp| w[x * size + xp]).fold(f64::INFINITY, f64::min))
        .collect()
}

/// `Σ_n ‖Pⁿ(x,·) - Pⁿ(x',·)‖_f <= W_σ + (1-ε)/ε · W*`.
pub fn f_series_bound(ing: &Ingredients, start: StartSpec, f: &[f64], w: &[f64]) -> Result<BoundReport> {
    check_epsilon(ing.epsilon)?;
    check_weight_domination(f, w)?;
    let (w_sigma, w_star) = match (ing.w_sigma, ing.w_star) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Domain("f-series bound needs W ingredients".into())),
    };
    let mut map = BTreeMap::new();
    map.insert("epsilon".into(), Ingredient::parameter(ing.epsilon));
    map.insert("W_sigma_moment".into(), w_sigma);
    map.insert("W_star".into(), w_star);
    finish(BoundKind::FSeries, start, "f_series", "unit", map, Vec::new())
}

/// `Σ_n α(r(n)) ‖Pⁿ(x,·) - Pⁿ(x',·)‖_f` bound for `f(x) + f(x') <= β(W(x,x'))`.
/// The three contributions are added.
#[allow(clippy::too_many_arguments)]
pub fn interpolated_bound(
    ing: &Ingredients,
    start: StartSpec,
    young: &YoungPair,
    f: &[f64],
    w: &[f64],
    rate: &RateSource,
    rate_label: &str,
    delta: f64,
    convention: MConvention,
) -> Result<BoundReport> {
    check_epsilon(ing.epsilon)?;
    let beta_w: Vec<f64> = w.iter().map(|&v| young.beta(v)).collect();
    check_weight_domination(f, &beta_w)?;
    let (w_sigma, w_star) = match (ing.w_sigma, ing.w_star) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Domain("interpolated bound needs W ingredients".into())),
    };
    let rho = young.rho();
    let m = if rho > 0.0 {
        m_for_rate(ing.return_sup.value, ing.epsilon, delta, rate, convention)?
    } else {
        MConstant {
            value: 0.0,
            argmax: 0,
            decided_at: 0,
        }
    };
    let mut map = BTreeMap::new();
    map.insert("epsilon".into(), Ingredient::parameter(ing.epsilon));
    map.insert("delta".into(), Ingredient::parameter(delta));
    map.insert("rho".into(), Ingredient::parameter(rho));
    map.insert("sigma_moment".into(), ing.sigma_moment);
    map.insert("R_star".into(), ing.return_sup);
    map.insert("M".into(), Ingredient::new(m.value, Provenance::Derived));
    map.insert("W_sigma_moment".into(), w_sigma);
    map.insert("W_star".into(), w_star);
    let notes = vec!["the (1-eps)/eps term is added to the two expectation terms".into()];
    finish(
        BoundKind::Interpolated,
        start,
        &formula_id("interpolated", convention),
        &format!("alpha({rate_label})"),
        map,
        notes,
    )
}

/// `Σ_{x'} π(x') value(x, x')` for per-`x'` reports sharing kind and rate.
pub fn stationary_integrated_bound(reports: &[BoundReport], pi: &[f64]) -> Result<BoundReport> {
    if reports.len() != pi.len() || reports.is_empty() {
        return Err(Error::Aggregation("need exactly one report per state".into()));
    }
    let first = &reports[0];
    let x = match first.start {
        StartSpec::Pair { x, .. } => x,
        StartSpec::Stationary { .. } => return Err(Error::Aggregation("reports must be per pair".into())),
    };
    let mut map = BTreeMap::new();
    for (xp, (report, &p)) in reports.iter().zip(pi).enumerate() {
        if report.kind != first.kind || report.formula != first.formula || report.rate_label != first.rate_label {
            return Err(Error::Aggregation(format!(
                "report for x' = {xp} differs in kind, formula or rate"
            )));
        }
        match report.start {
            StartSpec::Pair { x: rx, x_prime } if rx == x && x_prime == xp => {}
            _ => return Err(Error::Aggregation(format!("report {xp} has the wrong start pair"))),
        }
        if p > 0.0 {
            map.insert(
                format!("weighted[{xp:04}]"),
                Ingredient::new(p * report.value, Provenance::Derived),
            );
        }
    }
    let notes = vec![format!("integrated over x' from {} pair reports ({})", reports.len(), first.formula)];
    finish(
        first.kind,
        StartSpec::Stationary { x },
        "stationary_integrated",
        &first.rate_label,
        map,
        notes,
    )
}

/// Exact ingredients at `(x, x')` on a coupled kernel. `w` is an optional
/// pair weight for the f-norm ingredients.
pub fn exact_ingredients(
    coupled: &CoupledKernel,
    m: &Minorization,
    rate: &RateSource,
    w: Option<&[f64]>,
    start: (usize, usize),
) -> Result<Ingredients> {
    let z = coupled.pair(start.0, start.1);
    let targets = coupled.target_pairs();
    let spec = TabooFunctional::unweighted(coupled.target().to_vec(), rate.clone(), TabooMode::Hitting);
    let sigma = taboo_expectation(coupled.rows(), &spec, z)?.value;
    let (r_star, _) = return_supremum(coupled.rows(), &spec, &targets)?;
    let (w_sigma, w_star) = match w {
        Some(w) => {
            let spec = TabooFunctional::new(
                coupled.target().to_vec(),
                RateSource::Constant(1.0),
                w.to_vec(),
                TabooMode::Hitting,
            );
            let sigma_w = taboo_expectation(coupled.rows(), &spec, z)?.value;
            let (star, _) = return_supremum(coupled.rows(), &spec, &targets)?;
            (Some(Ingredient::exact(sigma_w)), Some(Ingredient::exact(star)))
        }
        None => (None, None),
    };
    Ok(Ingredients {
        epsilon: m.epsilon,
        sigma_moment: Ingredient::exact(sigma),
        return_sup: Ingredient::exact(r_star),
        w_sigma,
        w_star,
    })
}

/// Monte Carlo ingredients; the suprema are taken over per-pair estimates.
pub fn mc_ingredients(
    coupled: &CoupledKernel,
    m: &Minorization,
    rate: &RateSource,
    w: Option<&[f64]>,
    start: (usize, usize),
    options: McOptions,
) -> Result<Ingredients> {
    let z = coupled.pair(start.0, start.1);
    let targets = coupled.target_pairs();
    let estimate = |spec: &TabooFunctional, from: usize| -> Result<Ingredient> {
        let e = mc_hitting_estimate(coupled.rows(), spec, from, options)?;
        Ok(Ingredient {
            value: e.mean,
            source: Provenance::MonteCarlo,
            std_error: Some(e.std_error),
        })
    };
    let sup = |spec: &TabooFunctional| -> Result<Ingredient> {
        let spec = spec.with_mode(TabooMode::Return);
        let mut best: Option<Ingredient> = None;
        for &t in &targets {
            let e = estimate(&spec, t)?;
            if best.map_or(true, |b| e.value > b.value) {
                best = Some(e);
            }
        }
        best.ok_or_else(|| Error::Domain("empty small set".into()))
    };
    let spec = TabooFunctional::unweighted(coupled.target().to_vec(), rate.clone(), TabooMode::Hitting);
    let sigma_moment = estimate(&spec, z)?;
    let return_sup = sup(&spec)?;
    let (w_sigma, w_star) = match w {
        Some(w) => {
            let spec = TabooFunctional::new(
                coupled.target().to_vec(),
                RateSource::Constant(1.0),
                w.to_vec(),
                TabooMode::Hitting,
            );
            (Some(estimate(&spec, z)?), Some(sup(&spec)?))
        }
        None => (None, None),
    };
    Ok(Ingredients {
        epsilon: m.epsilon,
        sigma_moment,
        return_sup,
        w_sigma,
        w_star,
    })
}

/// Ingredients from the closed-form drift bounds, with rate `r_φ` and
/// weight `W = λ φ(V + V' - 1)`.
pub fn drift_ingredients(cert: &DriftCertificate, m: &Minorization, start: (usize, usize)) -> Result<Ingredients> {
    let b = proposition_bounds(cert, start.0, start.1)?;
    let ing = |v| Ingredient::new(v, Provenance::DriftProposition);
    Ok(Ingredients {
        epsilon: m.epsilon,
        sigma_moment: ing(b.r_sigma),
        return_sup: ing(b.r_star),
        w_sigma: Some(ing(b.w_sigma)),
        w_star: Some(ing(b.w_star)),
    })
}

/// Hitting and return moments of the upper coordinate alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedMoments {
    /// `E_{x'}[Σ_{k=0}^{σ_C} r(k) g(X'_k)]`.
    pub sigma_moment: f64,
    /// `sup_{y∈C} E[Σ_{k=1}^{τ_C} r(k) g(X_k)]` with the first move from `Q(y, ·)`.
    pub return_sup: f64,
}

/// Univariate upper bounds for the bivariate moments of the quantile
/// coupling of a stochastically monotone kernel with lower small set `C`.
/// `g` is a nondecreasing state weight; the bivariate counterpart weights a
/// pair by `g(max(x, x'))`.
pub fn monotone_reduced_moments(
    kernel: &FiniteKernel,
    m: &Minorization,
    rate: &RateSource,
    g: &[f64],
    start: (usize, usize),
) -> Result<ReducedMoments> {
    check_monotone(kernel)?;
    if m.small_set.iter().enumerate().any(|(i, &x)| i != x) {
        return Err(Error::NotLowerSet);
    }
    let size = kernel.size();
    let rows = kernel.sparse_rows();
    let target: Vec<bool> = (0..size).map(|x| m.contains(x)).collect();
    let spec = TabooFunctional::new(target, rate.clone(), g.to_vec(), TabooMode::Hitting);
    let upper = start.0.max(start.1);
    let sigma_moment = taboo_expectation(&rows, &spec, upper)?.value;
    let residual = residual_kernel(kernel, m)?;
    let mut return_sup = f64::NEG_INFINITY;
    for &y in &m.small_set {
        let initial = residual.row(y).expect("y in C").to_vec();
        let v = taboo_expectation_from_law(&rows, &spec, initial, 1)?.value;
        return_sup = return_sup.max(v);
    }
    Ok(ReducedMoments {
        sigma_moment,
        return_sup,
    })
}
