//! Ground-truth distance series by iterated vector–matrix products, and
//! dominance checks of assembled bounds against them.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::{BoundKind, BoundReport, StartSpec};
use crate::error::{Error, Result};
use crate::hitting::RateSource;
use crate::kernels::FiniteKernel;
use crate::rates::YoungPair;

pub const DOMINANCE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Tv,
    F,
}

/// Second argument of the distance: another start state or a fixed law.
#[derive(Debug, Clone, PartialEq)]
pub enum Comparison {
    State(usize),
    Stationary(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSeries {
    pub norm: NormKind,
    pub f: Vec<f64>,
    pub start: StartSpec,
    /// `values[n - 1] = d(n)` for `n = 1..=N`.
    pub values: Vec<f64>,
}

impl DistanceSeries {
    pub fn d(&self, n: usize) -> f64 {
        self.values[n - 1]
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }
}

/// `‖μ‖_f = Σ_a f(a) |μ(a)|`.
pub fn f_norm(mu: &[f64], f: &[f64]) -> f64 {
    mu.iter().zip(f).map(|(m, w)| w * m.abs()).sum()
}

/// `d(n) = ‖δ_x Pⁿ - δ_{x'} Pⁿ‖_f` (or against a fixed law) for `n = 1..=N`.
pub fn exact_distance_series(
    kernel: &FiniteKernel,
    x: usize,
    other: &Comparison,
    f: Option<&[f64]>,
    horizon: usize,
) -> Result<DistanceSeries> {
    let s = kernel.size();
    if x >= s {
        return Err(Error::Domain(format!("start state {x} out of range")));
    }
    let (norm, f) = match f {
        None => (NormKind::Tv, vec![1.0; s]),
        Some(f) => {
            if f.len() != s || f.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::Domain("f must be a nonnegative finite vector over states".into()));
            }
            (NormKind::F, f.to_vec())
        }
    };
    let mut mu = vec![0.0; s];
    mu[x] = 1.0;
    let (mut nu, start) = match other {
        Comparison::State(xp) => {
            if *xp >= s {
                return Err(Error::Domain(format!("start state {xp} out of range")));
            }
            let mut v = vec![0.0; s];
            v[*xp] = 1.0;
            (Some(v), StartSpec::Pair { x, x_prime: *xp })
        }
        Comparison::Stationary(pi) => {
            if pi.len() != s {
                return Err(Error::Domain("stationary law has the wrong size".into()));
            }
            (None, StartSpec::Stationary { x })
        }
    };
    let mut values = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        mu = kernel.push_forward(&mu);
        let diff: Vec<f64> = match (&mut nu, other) {
            (Some(v), _) => {
                *v = kernel.push_forward(v);
                mu.iter().zip(v.iter()).map(|(a, b)| a - b).collect()
            }
            (None, Comparison::Stationary(pi)) => mu.iter().zip(pi).map(|(a, b)| a - b).collect(),
            (None, Comparison::State(_)) => unreachable!(),
        };
        let d = f_norm(&diff, &f);
        if norm == NormKind::Tv && d > 2.0 + 1e-12 {
            return Err(Error::Numeric {
                what: "total variation distance above 2".into(),
                lo: 0.0,
                hi: 2.0,
                estimate: d,
                error_estimate: 0.0,
            });
        }
        values.push(d);
    }
    Ok(DistanceSeries {
        norm,
        f,
        start,
        values,
    })
}

/// Series weights `w(0..=N)` matching a bound kind: `r(n)` for total
/// variation, `1` for the f-norm, `α(r(n))` for the interpolated bound.
pub fn series_weights(kind: BoundKind, rate: &RateSource, young: Option<&YoungPair>, horizon: usize) -> Result<Vec<f64>> {
    match kind {
        BoundKind::TvSeries => rate.values(horizon),
        BoundKind::FSeries => Ok(vec![1.0; horizon + 1]),
        BoundKind::Interpolated => {
            let young = young.ok_or_else(|| Error::Domain("interpolated weights need a Young pair".into()))?;
            Ok(rate.values(horizon)?.into_iter().map(|r| young.alpha(r)).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceVerdict {
    pub pass: bool,
    /// The bound is infinite.
    pub vacuous: bool,
    pub bound: f64,
    pub max_partial_sum: f64,
    /// `bound - max partial sum`.
    pub worst_margin: f64,
    /// `max partial sum / bound`.
    pub tightness: f64,
    pub horizon: usize,
}

/// Partial sums `S(N') = Σ_{n=1}^{N'} w(n) d(n)`.
pub fn partial_sums(series: &DistanceSeries, weights: &[f64], horizon: usize) -> Vec<f64> {
    let mut acc = 0.0;
    (1..=horizon.min(series.horizon()))
        .map(|n| {
            acc += weights[n] * series.d(n);
            acc
        })
        .collect()
}

/// Passes iff every partial sum up to `horizon` is at most the bound plus
/// `1e-9`.
pub fn dominance_check(series: &DistanceSeries, weights: &[f64], report: &BoundReport, horizon: usize) -> DominanceVerdict {
    let sums = partial_sums(series, weights, horizon);
    let max_partial_sum = sums.iter().copied().fold(0.0, f64::max);
    let bound = report.value;
    let vacuous = bound.is_infinite();
    DominanceVerdict {
        pass: vacuous || max_partial_sum <= bound + DOMINANCE_SLACK,
        vacuous,
        bound,
        max_partial_sum,
        worst_margin: bound - max_partial_sum,
        tightness: if vacuous { 0.0 } else { max_partial_sum / bound },
        horizon: sums.len(),
    }
}

/// CSV with columns `n,d_n,rate_n,partial_sum,bound`.
pub fn write_series_csv<W: Write>(mut out: W, series: &DistanceSeries, weights: &[f64], bound: f64) -> Result<()> {
    writeln!(out, "n,d_n,rate_n,partial_sum,bound")?;
    let sums = partial_sums(series, weights, series.horizon());
    for (i, s) in sums.iter().enumerate() {
        let n = i + 1;
        writeln!(out, "{n},{},{},{s},{bound}", series.d(n), weights[n])?;
    }
    Ok(())
}
