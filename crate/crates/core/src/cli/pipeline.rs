//! Experiment pipeline: kernel, small set, minorization, coupling, drift
//! certificate, ingredients, bounds and verification.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, IngredientSource, MinorizationConfig, SmallSetConfig};
use crate::bounds::{
    dominated_split, drift_ingredients, exact_ingredients, f_series_bound, interpolated_bound, mc_ingredients,
    stationary_integrated_bound, tv_series_bound, BoundKind, BoundReport, Ingredients, StartSpec,
};
use crate::drift::{drift_weight, level_set, DriftCertificate};
use crate::error::{Error, Result};
use crate::hitting::{coupling_identity_check, path_rng, McOptions, RateSource};
use crate::kernels::{
    check_monotone, extract_minorization, independent_coupling, monotone_coupling, stationary_distribution,
    CoupledKernel, CouplingStyle, FiniteKernel, Minorization, TriState, TrivariateChain,
};
use crate::rates::{rate_sequence, young_pair, Phi, YoungPair};
use crate::verify::{
    dominance_check, exact_distance_series, series_weights, write_series_csv, Comparison, DistanceSeries,
    DominanceVerdict,
};

/// Everything up to and including the drift certificate.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub kernel: FiniteKernel,
    pub phi: Phi,
    pub v: Option<Vec<f64>>,
    pub minorization: Minorization,
    pub coupled: CoupledKernel,
    pub certificate: Option<DriftCertificate>,
    /// `W` on pair states.
    pub weight: Vec<f64>,
    pub young: Option<YoungPair>,
}

pub fn prepare(config: ExperimentConfig, seed_override: Option<u64>) -> Result<Prepared> {
    let kernel = config.chain.build()?;
    let size = kernel.size();
    let config = config.resolve(seed_override, size)?;
    let phi = Phi::new(config.phi.clone())?;
    let v = match &config.v {
        Some(spec) => {
            let v = spec.evaluate(size);
            if let Some(x) = v.iter().position(|&a| !(a >= 1.0 && a.is_finite())) {
                return Err(Error::Config(format!("V({x}) = {} is not a finite value >= 1", v[x])));
            }
            Some(v)
        }
        None => None,
    };
    let small_set = match &config.small_set {
        SmallSetConfig::States(states) => states.clone(),
        SmallSetConfig::Level { level } => {
            let v = v
                .as_ref()
                .ok_or_else(|| Error::Config("a level-set small set needs V".into()))?;
            level_set(v, *level)
        }
    };
    if small_set.is_empty() {
        return Err(Error::Config("small set is empty".into()));
    }
    let minorization = match &config.minorization {
        MinorizationConfig::Auto => extract_minorization(&kernel, &small_set)?,
        MinorizationConfig::Explicit { epsilon, nu } => Minorization::new(&kernel, &small_set, *epsilon, nu.clone())?,
    };
    let coupled = match config.coupling {
        CouplingStyle::Independent => independent_coupling(&kernel, &minorization)?,
        CouplingStyle::Monotone => {
            check_monotone(&kernel)?;
            monotone_coupling(&kernel, &minorization)?
        }
    };
    let certificate = match (&v, config.verify_drift) {
        (Some(v), true) => Some(DriftCertificate::new(&kernel, &phi, v, &minorization, config.lambda)?),
        _ => None,
    };
    let weight = match (&certificate, &v) {
        (Some(cert), _) => cert.weight_on_pairs(),
        (None, Some(v)) => drift_weight(&phi, v, config.lambda.unwrap_or(1.0))?,
        (None, None) => vec![1.0; size * size],
    };
    let young = match &config.young {
        Some(y) => Some(young_pair(y.psi.clone(), y.rho)?),
        None => None,
    };
    Ok(Prepared {
        config,
        kernel,
        phi,
        v,
        minorization,
        coupled,
        certificate,
        weight,
        young,
    })
}

impl Prepared {
    pub fn rate(&self) -> RateSource {
        RateSource::Phi(self.phi.clone())
    }

    pub fn rate_label(&self) -> String {
        let spec = serde_json::to_string(self.phi.spec()).expect("phi spec serializes");
        format!("r_phi {spec}")
    }

    pub fn start_pairs(&self) -> Vec<(usize, usize)> {
        self.config
            .start_pairs
            .as_ref()
            .expect("resolved config")
            .iter()
            .map(|p| (p[0], p[1]))
            .collect()
    }

    pub fn ingredients(&self, start: (usize, usize)) -> Result<Ingredients> {
        let rate = self.rate();
        match self.config.ingredient_source {
            IngredientSource::Exact => exact_ingredients(&self.coupled, &self.minorization, &rate, Some(&self.weight), start),
            IngredientSource::Mc { n_paths } => mc_ingredients(
                &self.coupled,
                &self.minorization,
                &rate,
                Some(&self.weight),
                start,
                McOptions::new(n_paths, self.config.seed),
            ),
            IngredientSource::Drift => {
                let cert = self
                    .certificate
                    .as_ref()
                    .ok_or_else(|| Error::Config("drift ingredients need V with verify_drift on".into()))?;
                drift_ingredients(cert, &self.minorization, start)
            }
        }
    }

    /// Weight `f` matched to the bound kind, `None` for total variation.
    pub fn norm_weight(&self, kind: BoundKind) -> Option<Vec<f64>> {
        let size = self.kernel.size();
        match kind {
            BoundKind::TvSeries => None,
            BoundKind::FSeries => Some(dominated_split(&self.weight, size)),
            BoundKind::Interpolated => {
                let young = self.young.as_ref().expect("validated young section");
                let beta_w: Vec<f64> = self.weight.iter().map(|&w| young.beta(w)).collect();
                Some(dominated_split(&beta_w, size))
            }
        }
    }

    pub fn bound(&self, kind: BoundKind, ing: &Ingredients, start: (usize, usize)) -> Result<BoundReport> {
        let spec = StartSpec::Pair {
            x: start.0,
            x_prime: start.1,
        };
        let cfg = &self.config;
        let rate = self.rate();
        match kind {
            BoundKind::TvSeries => tv_series_bound(ing, spec, &rate, &self.rate_label(), cfg.delta, cfg.m_convention),
            BoundKind::FSeries => {
                let f = self.norm_weight(kind).expect("f weight");
                f_series_bound(ing, spec, &f, &self.weight)
            }
            BoundKind::Interpolated => {
                let f = self.norm_weight(kind).expect("f weight");
                interpolated_bound(
                    ing,
                    spec,
                    self.young.as_ref().expect("validated young section"),
                    &f,
                    &self.weight,
                    &rate,
                    &self.rate_label(),
                    cfg.delta,
                    cfg.m_convention,
                )
            }
        }
    }

    pub fn distance_series(&self, kind: BoundKind, start: &StartSpec, pi: Option<&[f64]>) -> Result<DistanceSeries> {
        let f = self.norm_weight(kind);
        let (x, other) = match *start {
            StartSpec::Pair { x, x_prime } => (x, Comparison::State(x_prime)),
            StartSpec::Stationary { x } => (x, Comparison::Stationary(pi.expect("stationary law").to_vec())),
        };
        exact_distance_series(&self.kernel, x, &other, f.as_deref(), self.config.rate_horizon)
    }

    pub fn weights(&self, kind: BoundKind) -> Result<Vec<f64>> {
        series_weights(kind, &self.rate(), self.young.as_ref(), self.config.rate_horizon)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundEntry {
    pub report: BoundReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<DominanceVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series_file: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairResult {
    pub x: usize,
    pub x_prime: usize,
    pub ingredients: Ingredients,
    pub bounds: Vec<BoundEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinorizationSummary {
    pub small_set: Vec<usize>,
    pub epsilon: f64,
    pub nu: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub state_count: usize,
    pub minorization: MinorizationSummary,
    pub coupling: CouplingStyle,
    pub rate_label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_certificate: Option<DriftCertificate>,
    pub pairs: Vec<PairResult>,
    pub stationary: Vec<BoundEntry>,
    /// `None` when verification is off.
    pub all_pass: Option<bool>,
}

impl RunReport {
    pub fn verdicts(&self) -> impl Iterator<Item = &DominanceVerdict> {
        self.pairs
            .iter()
            .flat_map(|p| p.bounds.iter())
            .chain(self.stationary.iter())
            .filter_map(|b| b.verdict.as_ref())
    }
}

fn kind_name(kind: BoundKind) -> &'static str {
    match kind {
        BoundKind::TvSeries => "tv_series",
        BoundKind::FSeries => "f_series",
        BoundKind::Interpolated => "interpolated",
    }
}

fn verify_entry(
    prep: &Prepared,
    report: BoundReport,
    pi: Option<&[f64]>,
    file_name: String,
    out: Option<&Path>,
) -> Result<BoundEntry> {
    let series = prep.distance_series(report.kind, &report.start, pi)?;
    let weights = prep.weights(report.kind)?;
    let verdict = dominance_check(&series, &weights, &report, prep.config.rate_horizon);
    let series_file = match out {
        Some(dir) => {
            let file = std::fs::File::create(dir.join(&file_name))?;
            write_series_csv(std::io::BufWriter::new(file), &series, &weights, report.value)?;
            Some(file_name)
        }
        None => None,
    };
    Ok(BoundEntry {
        report,
        verdict: Some(verdict),
        series_file,
    })
}

/// Runs ingredients and bounds, plus verification when `verify` is set.
/// Series files go to `out` when given.
pub fn execute(prep: &Prepared, verify: bool, out: Option<&Path>) -> Result<RunReport> {
    let kinds = prep.config.outputs.bounds.clone();
    let mut pairs = Vec::new();
    for start in prep.start_pairs() {
        let ingredients = prep.ingredients(start)?;
        let mut bounds = Vec::new();
        for &kind in &kinds {
            let report = prep.bound(kind, &ingredients, start)?;
            let entry = if verify {
                let name = format!("series_{}_{}_{}.csv", kind_name(kind), start.0, start.1);
                verify_entry(prep, report, None, name, out)?
            } else {
                BoundEntry {
                    report,
                    verdict: None,
                    series_file: None,
                }
            };
            bounds.push(entry);
        }
        pairs.push(PairResult {
            x: start.0,
            x_prime: start.1,
            ingredients,
            bounds,
        });
    }
    let mut stationary = Vec::new();
    if prep.config.outputs.stationary {
        let pi = stationary_distribution(&prep.kernel)?;
        let mut xs: Vec<usize> = prep.start_pairs().iter().map(|p| p.0).collect();
        xs.sort_unstable();
        xs.dedup();
        for x in xs {
            let per_state: Vec<Ingredients> = (0..prep.kernel.size())
                .map(|xp| prep.ingredients((x, xp)))
                .collect::<Result<_>>()?;
            for &kind in &kinds {
                let reports: Vec<BoundReport> = per_state
                    .iter()
                    .enumerate()
                    .map(|(xp, ing)| prep.bound(kind, ing, (x, xp)))
                    .collect::<Result<_>>()?;
                let report = stationary_integrated_bound(&reports, &pi)?;
                let entry = if verify {
                    let name = format!("series_{}_stationary_{x}.csv", kind_name(kind));
                    verify_entry(prep, report, Some(&pi), name, out)?
                } else {
                    BoundEntry {
                        report,
                        verdict: None,
                        series_file: None,
                    }
                };
                stationary.push(entry);
            }
        }
    }
    let mut report = RunReport {
        config: prep.config.clone(),
        state_count: prep.kernel.size(),
        minorization: MinorizationSummary {
            small_set: prep.minorization.small_set.clone(),
            epsilon: prep.minorization.epsilon,
            nu: prep.minorization.nu.clone(),
        },
        coupling: prep.coupled.style(),
        rate_label: prep.rate_label(),
        drift_certificate: prep.certificate.clone(),
        pairs,
        stationary,
        all_pass: None,
    };
    if verify {
        let pass = report.verdicts().all(|v| v.pass);
        report.all_pass = Some(pass);
    }
    Ok(report)
}

/// `(n, r(n), R(n))` for `n = 0..=N`.
pub fn rate_table(phi: &Phi, horizon: usize) -> Result<Vec<(usize, f64, f64)>> {
    let seq = rate_sequence(phi, horizon)?;
    Ok((0..=horizon).map(|n| (n, seq.r(n), seq.big_r(n))).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct CouplingSimulation {
    pub x: usize,
    pub x_prime: usize,
    pub n_paths: usize,
    pub horizon: usize,
    /// Coupling time `T` per path, `None` when `T > horizon`.
    #[serde(skip)]
    pub times: Vec<Option<usize>>,
    pub censored: usize,
    /// Empirical `P(T > n)` for `n = 0..=horizon`.
    pub empirical_tail: Vec<f64>,
    /// `P(T > n)` from the exact trivariate law.
    pub exact_lhs: Vec<f64>,
    /// `Ě[(1-ε)^{N_{n-1}}]` from the pair chain.
    pub exact_rhs: Vec<f64>,
    pub max_identity_discrepancy: f64,
}

/// Samples coupling times `T = inf{n >= 1 : d_n = 1}` from the trivariate
/// chain and compares the empirical tail with both sides of the identity.
pub fn simulate_coupling(prep: &Prepared, start: (usize, usize), n_paths: usize, horizon: usize) -> Result<CouplingSimulation> {
    let chain = TrivariateChain::new(&prep.kernel, &prep.minorization, &prep.coupled);
    let seed = prep.config.seed;
    let times: Vec<Option<usize>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = path_rng(seed, idx);
            let mut s = TriState::new(start.0, start.1, false);
            for n in 1..=horizon {
                s = chain.step(s, &mut rng);
                if s.bell {
                    return Some(n);
                }
            }
            None
        })
        .collect();
    let censored = times.iter().filter(|t| t.is_none()).count();
    let empirical_tail = (0..=horizon)
        .map(|n| times.iter().filter(|t| t.map_or(true, |t| t > n)).count() as f64 / n_paths as f64)
        .collect();
    let size = prep.kernel.size();
    let ones = vec![1.0; size * size];
    let identity = coupling_identity_check(&prep.kernel, &prep.minorization, &prep.coupled, &ones, start, horizon, None)?;
    Ok(CouplingSimulation {
        x: start.0,
        x_prime: start.1,
        n_paths,
        horizon,
        times,
        censored,
        empirical_tail,
        exact_lhs: identity.lhs,
        exact_rhs: identity.rhs,
        max_identity_discrepancy: identity.max_discrepancy,
    })
}
