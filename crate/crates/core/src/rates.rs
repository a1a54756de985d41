//! Rate-function calculus for concave drift moduli.
//!
//! A drift modulus `φ` on `[1, ∞)` generates `H_φ(v) = ∫_1^v dx/φ(x)`, its
//! inverse, and the rate `r_φ = φ ∘ H_φ⁻¹`, which is also the derivative of
//! `H_φ⁻¹`. Polynomial, subexponential and tabulated moduli are handled in
//! closed form; the logarithmic family goes through adaptive quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{integrate, invert_increasing};

/// Relative tolerance of every quadrature in this module.
pub const QUAD_REL_TOL: f64 = 1e-10;
/// Relative tolerance of the monotone root finder.
pub const ROOT_REL_TOL: f64 = 1e-13;
const SUBGEOMETRIC_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PhiSpec {
    /// `φ(v) = c v^α`, `α ∈ [0, 1)`, `c ∈ (0, 1]`.
    Polynomial { c: f64, alpha: f64 },
    /// `φ(v) = c (1 + log v)^α`, `α ≥ 0`, `c ∈ (0, 1]`.
    Logarithmic { c: f64, alpha: f64 },
    /// `φ(v) = c v / log^α v` above the splice point, linear below it with
    /// value and slope matched at the splice.
    Subexponential {
        c: f64,
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        splice_point: Option<f64>,
    },
    /// Piecewise-linear modulus through `[v, φ(v)]` knots, first knot at `v = 1`,
    /// continued past the last knot with the last slope.
    Tabulated { knots: Vec<[f64; 2]> },
}

/// One linear piece `φ(v) = value + slope (v - start)` on `[start, ..)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    start: f64,
    value: f64,
    slope: f64,
    /// `H_φ(start)`.
    h_start: f64,
}

impl Piece {
    fn phi(&self, v: f64) -> f64 {
        self.value + self.slope * (v - self.start)
    }

    fn h(&self, v: f64) -> f64 {
        let dv = v - self.start;
        if self.slope == 0.0 {
            self.h_start + dv / self.value
        } else {
            self.h_start + (self.slope * dv / self.value).ln_1p() / self.slope
        }
    }

    fn h_inv(&self, z: f64) -> f64 {
        let dz = z - self.h_start;
        if self.slope == 0.0 {
            self.start + self.value * dz
        } else {
            self.start + self.value * (self.slope * dz).exp_m1() / self.slope
        }
    }
}

fn build_pieces(knots: &[(f64, f64)], tail_slope: f64) -> Vec<Piece> {
    let mut pieces: Vec<Piece> = Vec::with_capacity(knots.len());
    for (i, &(v, value)) in knots.iter().enumerate() {
        let slope = match knots.get(i + 1) {
            Some(&(v1, f1)) => (f1 - value) / (v1 - v),
            None => tail_slope,
        };
        let h_start = match pieces.last() {
            Some(prev) => prev.h(v),
            None => 0.0,
        };
        pieces.push(Piece {
            start: v,
            value,
            slope,
            h_start,
        });
    }
    pieces
}

fn piece_at_v(pieces: &[Piece], v: f64) -> &Piece {
    let idx = pieces.partition_point(|p| p.start <= v).saturating_sub(1);
    &pieces[idx]
}

fn piece_at_z(pieces: &[Piece], z: f64) -> &Piece {
    let idx = pieces.partition_point(|p| p.h_start <= z).saturating_sub(1);
    &pieces[idx]
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Polynomial {
        c: f64,
        alpha: f64,
    },
    Logarithmic {
        c: f64,
        alpha: f64,
    },
    Subexponential {
        c: f64,
        alpha: f64,
        splice: f64,
        ln_splice: f64,
        lower: Piece,
        h_splice: f64,
    },
    Tabulated(Vec<Piece>),
}

/// A validated concave drift modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct Phi {
    spec: PhiSpec,
    shape: Shape,
}

impl Phi {
    pub fn new(spec: PhiSpec) -> Result<Self> {
        let shape = match spec {
            PhiSpec::Polynomial { c, alpha } => {
                if !(0.0..1.0).contains(&alpha) || !(c > 0.0 && c <= 1.0) {
                    return Err(Error::Domain(format!(
                        "polynomial phi needs alpha in [0,1) and c in (0,1], got c={c}, alpha={alpha}"
                    )));
                }
                Shape::Polynomial { c, alpha }
            }
            PhiSpec::Logarithmic { c, alpha } => {
                if !(alpha >= 0.0 && alpha.is_finite()) || !(c > 0.0 && c <= 1.0) {
                    return Err(Error::Domain(format!(
                        "logarithmic phi needs alpha >= 0 and c in (0,1], got c={c}, alpha={alpha}"
                    )));
                }
                Shape::Logarithmic { c, alpha }
            }
            PhiSpec::Subexponential {
                c,
                alpha,
                splice_point,
            } => {
                if !(alpha > 0.0 && alpha.is_finite()) || !(c > 0.0 && c.is_finite()) {
                    return Err(Error::Domain(format!(
                        "subexponential phi needs alpha > 0 and c > 0, got c={c}, alpha={alpha}"
                    )));
                }
                // c v / log^α v is concave exactly for log v >= α + 1.
                let min_splice = (alpha + 1.0).exp();
                let splice = splice_point.unwrap_or(min_splice);
                if !(splice >= min_splice * (1.0 - 1e-12)) || !splice.is_finite() {
                    return Err(Error::Domain(format!(
                        "subexponential splice point {splice} is below the concavity threshold e^(alpha+1) = {min_splice}"
                    )));
                }
                let ln_s = splice.ln();
                let value_s = c * splice / ln_s.powf(alpha);
                let slope_s = c * ln_s.powf(-alpha - 1.0) * (ln_s - alpha);
                let value_1 = value_s - slope_s * (splice - 1.0);
                let lower = Piece {
                    start: 1.0,
                    value: value_1,
                    slope: slope_s,
                    h_start: 0.0,
                };
                Shape::Subexponential {
                    c,
                    alpha,
                    splice,
                    ln_splice: ln_s,
                    h_splice: lower.h(splice),
                    lower,
                }
            }
            PhiSpec::Tabulated { ref knots } => {
                if knots.is_empty() || knots[0][0] != 1.0 {
                    return Err(Error::Domain("tabulated phi needs a first knot at v = 1".into()));
                }
                if knots[0][1] <= 0.0 {
                    return Err(Error::Domain("tabulated phi needs phi(1) > 0".into()));
                }
                let pts: Vec<(f64, f64)> = knots.iter().map(|k| (k[0], k[1])).collect();
                if pts.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Err(Error::Domain("tabulated knots must be strictly increasing in v".into()));
                }
                let slopes: Vec<f64> = pts
                    .windows(2)
                    .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
                    .collect();
                if slopes.iter().any(|&s| s < 0.0) || slopes.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::Domain(
                        "tabulated phi must be nondecreasing and concave".into(),
                    ));
                }
                Shape::Tabulated(build_pieces(&pts, slopes.last().copied().unwrap_or(0.0)))
            }
        };
        let phi = Phi { spec, shape };
        phi.check_shape()?;
        Ok(phi)
    }

    pub fn spec(&self) -> &PhiSpec {
        &self.spec
    }

    /// Checks positivity, monotonicity and concavity on a geometric grid via
    /// secant slopes.
    pub fn check_shape(&self) -> Result<()> {
        let grid: Vec<f64> = (0..=160).map(|i| 10f64.powf(i as f64 * 0.05)).collect();
        let values: Vec<f64> = grid.iter().map(|&v| self.value(v)).collect();
        if values[0] <= 0.0 {
            return Err(Error::Domain("phi(1) must be positive".into()));
        }
        let mut prev_slope = f64::INFINITY;
        for i in 1..grid.len() {
            let slope = (values[i] - values[i - 1]) / (grid[i] - grid[i - 1]);
            if slope < -1e-12 * values[i].abs() {
                return Err(Error::Domain(format!("phi decreases near v = {}", grid[i])));
            }
            if slope > prev_slope * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::Domain(format!("phi is not concave near v = {}", grid[i])));
            }
            prev_slope = slope;
        }
        Ok(())
    }

    fn value(&self, v: f64) -> f64 {
        match &self.shape {
            Shape::Polynomial { c, alpha } => c * v.powf(*alpha),
            Shape::Logarithmic { c, alpha } => c * (1.0 + v.ln()).powf(*alpha),
            Shape::Subexponential {
                c,
                alpha,
                splice,
                lower,
                ..
            } => {
                if v < *splice {
                    lower.phi(v)
                } else {
                    c * v / v.ln().powf(*alpha)
                }
            }
            Shape::Tabulated(pieces) => piece_at_v(pieces, v).phi(v),
        }
    }

    /// `φ(v)`.
    pub fn eval(&self, v: f64) -> Result<f64> {
        check_v(v)?;
        Ok(self.value(v))
    }

    /// `H_φ(v) = ∫_1^v dx/φ(x)`.
    pub fn h(&self, v: f64) -> Result<f64> {
        check_v(v)?;
        if v == 1.0 {
            return Ok(0.0);
        }
        Ok(match &self.shape {
            Shape::Polynomial { c, alpha } => {
                if *alpha == 0.0 {
                    (v - 1.0) / c
                } else {
                    ((1.0 - alpha) * v.ln()).exp_m1() / (c * (1.0 - alpha))
                }
            }
            Shape::Logarithmic { .. } => h_phi_quadrature(self, v)?,
            Shape::Subexponential {
                c,
                alpha,
                splice,
                ln_splice,
                lower,
                h_splice,
            } => {
                if v <= *splice {
                    lower.h(v)
                } else {
                    let k = 1.0 + alpha;
                    h_splice + (v.ln().powf(k) - ln_splice.powf(k)) / (c * k)
                }
            }
            Shape::Tabulated(pieces) => piece_at_v(pieces, v).h(v),
        })
    }

    /// `H_φ⁻¹(z)`.
    pub fn h_inv(&self, z: f64) -> Result<f64> {
        Ok(self.ln_h_inv(z)?.exp())
    }

    /// `log H_φ⁻¹(z)`, finite even when `H_φ⁻¹(z)` overflows.
    pub fn ln_h_inv(&self, z: f64) -> Result<f64> {
        check_z(z)?;
        if z == 0.0 {
            return Ok(0.0);
        }
        Ok(match &self.shape {
            Shape::Polynomial { c, alpha } => (c * (1.0 - alpha) * z).ln_1p() / (1.0 - alpha),
            Shape::Logarithmic { c, alpha } => log_family_ln_inverse(*c, *alpha, 0.0, 0.0, z)?,
            Shape::Subexponential {
                c,
                alpha,
                ln_splice,
                lower,
                h_splice,
                ..
            } => {
                if z <= *h_splice {
                    lower.h_inv(z).ln()
                } else {
                    let k = 1.0 + alpha;
                    (c * k * (z - h_splice) + ln_splice.powf(k)).powf(1.0 / k)
                }
            }
            Shape::Tabulated(pieces) => piece_at_z(pieces, z).h_inv(z).ln(),
        })
    }

    /// `log r_φ(z) = log φ(H_φ⁻¹(z))`.
    pub fn ln_rate(&self, z: f64) -> Result<f64> {
        check_z(z)?;
        match &self.shape {
            Shape::Polynomial { c, alpha } => {
                Ok(c.ln() + alpha / (1.0 - alpha) * (c * (1.0 - alpha) * z).ln_1p())
            }
            _ => {
                let ln_v = self.ln_h_inv(z)?;
                Ok(self.ln_value_at_ln(ln_v))
            }
        }
    }

    fn ln_value_at_ln(&self, ln_v: f64) -> f64 {
        match &self.shape {
            Shape::Logarithmic { c, alpha } => c.ln() + alpha * ln_v.ln_1p(),
            Shape::Subexponential {
                c, alpha, ln_splice, ..
            } if ln_v >= *ln_splice => c.ln() + ln_v - alpha * ln_v.ln(),
            _ => self.value(ln_v.exp()).ln(),
        }
    }

    /// `r_φ(z) = φ(H_φ⁻¹(z))`, the derivative of `H_φ⁻¹`.
    pub fn rate(&self, z: f64) -> Result<f64> {
        Ok(self.ln_rate(z)?.exp())
    }
}

fn check_v(v: f64) -> Result<()> {
    if v >= 1.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("phi is defined on [1, inf), got v = {v}")))
    }
}

fn check_z(z: f64) -> Result<()> {
    if z >= 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("H_phi inverse is defined on [0, inf), got z = {z}")))
    }
}

fn log_integrand(c: f64, alpha: f64) -> impl Fn(f64) -> f64 {
    move |t: f64| (t - c.ln() - alpha * t.ln_1p()).exp()
}

/// Solves `∫_0^T e^t / (c (1+t)^α) dt = z` for `T = log v`, starting from a
/// known point `(t0, z0)` on the curve.
fn log_family_ln_inverse(c: f64, alpha: f64, t0: f64, z0: f64, z: f64) -> Result<f64> {
    let g = log_integrand(c, alpha);
    invert_increasing(
        |t| Ok(z0 + integrate(&g, t0, t, QUAD_REL_TOL * 1e-2)?),
        &g,
        z,
        t0,
        ROOT_REL_TOL,
    )
}

/// `H_φ(v)` by adaptive quadrature of `e^t / φ(e^t)` over `[0, log v]`,
/// regardless of whether a closed form exists.
pub fn h_phi_quadrature(phi: &Phi, v: f64) -> Result<f64> {
    check_v(v)?;
    integrate(|t| t.exp() / phi.value(t.exp()), 0.0, v.ln(), QUAD_REL_TOL)
}

/// `H_φ⁻¹(z)` by bracketing and monotone root finding on the quadrature path.
pub fn h_phi_inv_numeric(phi: &Phi, z: f64) -> Result<f64> {
    check_z(z)?;
    invert_increasing(
        |v| h_phi_quadrature(phi, v),
        |v| 1.0 / phi.value(v),
        z,
        1.0,
        ROOT_REL_TOL,
    )
}

/// `r_φ(z)` through the numeric inverse.
pub fn r_phi_numeric(phi: &Phi, z: f64) -> Result<f64> {
    phi.eval(h_phi_inv_numeric(phi, z)?)
}

/// A positive rate sequence `r(0..=N)` with its cumulative sums
/// `R(0) = 1`, `R(n) = Σ_{k<n} r(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSequence {
    ln_r: Vec<f64>,
    r: Vec<f64>,
    cumulative: Vec<f64>,
}

impl RateSequence {
    pub fn from_values(r: Vec<f64>) -> Result<Self> {
        let ln_r = r.iter().map(|v| v.ln()).collect();
        Self::from_parts(ln_r, r)
    }

    pub fn from_ln_values(ln_r: Vec<f64>) -> Result<Self> {
        let r = ln_r.iter().map(|v| v.exp()).collect();
        Self::from_parts(ln_r, r)
    }

    fn from_parts(ln_r: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        if r.len() < 2 {
            return Err(Error::Domain("a rate sequence needs at least two terms".into()));
        }
        if let Some(k) = ln_r.iter().position(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(Error::Domain(format!("rate term {k} is not positive")));
        }
        let mut cumulative = Vec::with_capacity(r.len() + 1);
        cumulative.push(1.0);
        let mut acc = 0.0;
        for &v in &r {
            acc += v;
            cumulative.push(acc);
        }
        Ok(RateSequence { ln_r, r, cumulative })
    }

    /// `r ≡ value` on `0..=n`.
    pub fn constant(value: f64, n: usize) -> Result<Self> {
        Self::from_values(vec![value; n + 1])
    }

    /// `r(k) = r_φ(k)` for `k = 0..=n`.
    pub fn from_phi(phi: &Phi, n: usize) -> Result<Self> {
        rate_sequence(phi, n)
    }

    pub fn r(&self, k: usize) -> f64 {
        self.r[k]
    }

    pub fn ln_r(&self, k: usize) -> f64 {
        self.ln_r[k]
    }

    /// `R(n)`, defined for `n <= horizon() + 1`.
    pub fn big_r(&self, n: usize) -> f64 {
        self.cumulative[n]
    }

    /// Largest stored index `N`.
    pub fn horizon(&self) -> usize {
        self.r.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.r
    }

    /// Returns `Err(NeedsLongerSequence)` unless `r(k)` is stored.
    pub fn require(&self, k: usize) -> Result<()> {
        if k <= self.horizon() {
            Ok(())
        } else {
            Err(Error::NeedsLongerSequence { needed: k })
        }
    }

    /// Pointwise transform, e.g. `α ∘ r` for interpolated bounds. Zero values
    /// are allowed here since the result only weights partial sums.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.r.iter().map(|&v| f(v)).collect()
    }
}

/// `r_φ(k)` for `k = 0..=n`.
pub fn rate_sequence(phi: &Phi, n: usize) -> Result<RateSequence> {
    if n < 1 {
        return Err(Error::Domain("rate sequence horizon must be at least 1".into()));
    }
    let ln_r = match phi.shape {
        Shape::Logarithmic { c, alpha } => {
            // Track T_k = log H⁻¹(k) incrementally so each step integrates
            // only over [T_{k-1}, T_k].
            let mut out = Vec::with_capacity(n + 1);
            let mut t = 0.0;
            out.push(phi.ln_value_at_ln(0.0));
            for k in 1..=n {
                t = log_family_ln_inverse(c, alpha, t, (k - 1) as f64, k as f64)?;
                out.push(phi.ln_value_at_ln(t));
            }
            out
        }
        _ => (0..=n)
            .map(|k| phi.ln_rate(k as f64))
            .collect::<Result<Vec<_>>>()?,
    };
    RateSequence::from_ln_values(ln_r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subgeometric {
    pub holds: bool,
    pub first_violation: Option<usize>,
}

/// Membership test for the subgeometric class on the stored horizon.
///
/// Requires `r` nondecreasing and `log(r(n)/r(0))/n` nonincreasing for
/// `n >= 1`, and strictly smaller at the horizon than at `n = 1` unless the
/// sequence is constant (which rejects geometric sequences).
pub fn is_subgeometric(seq: &RateSequence) -> Subgeometric {
    let n_max = seq.horizon();
    let fail = |k| Subgeometric {
        holds: false,
        first_violation: Some(k),
    };
    for k in 1..=n_max {
        if seq.ln_r(k) < seq.ln_r(k - 1) - SUBGEOMETRIC_SLACK {
            return fail(k);
        }
    }
    let base = seq.ln_r(0);
    let chord = |k: usize| (seq.ln_r(k) - base) / k as f64;
    for k in 2..=n_max {
        let prev = chord(k - 1);
        if chord(k) > prev + SUBGEOMETRIC_SLACK * prev.abs().max(1.0) {
            return fail(k);
        }
    }
    let constant = (0..=n_max).all(|k| (seq.ln_r(k) - base).abs() <= SUBGEOMETRIC_SLACK);
    if !constant && !(chord(n_max) < chord(1) - SUBGEOMETRIC_SLACK * chord(1).abs().max(1.0)) {
        return fail(n_max);
    }
    Subgeometric {
        holds: true,
        first_violation: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PsiSpec {
    /// `ψ(x) = x^{p-1}`, `p > 1`.
    Power { p: f64 },
    /// Piecewise-linear strictly increasing `ψ` through `[x, ψ(x)]` knots,
    /// implicitly starting at `(0, 0)` and continued with the last slope.
    Tabulated { knots: Vec<[f64; 2]> },
}

/// Increasing piecewise-linear function through the origin with closed-form
/// integral `∫_0^a`.
#[derive(Debug, Clone, PartialEq)]
struct IncreasingLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
    integrals: Vec<f64>,
    tail_slope: f64,
}

impl IncreasingLinear {
    fn new(points: &[(f64, f64)]) -> Result<Self> {
        let mut xs = vec![0.0];
        let mut ys = vec![0.0];
        for &(x, y) in points {
            if !(x > *xs.last().unwrap()) || !(y > *ys.last().unwrap()) {
                return Err(Error::Domain("psi knots must be strictly increasing in both coordinates".into()));
            }
            xs.push(x);
            ys.push(y);
        }
        if xs.len() < 2 {
            return Err(Error::Domain("tabulated psi needs at least one knot".into()));
        }
        let n = xs.len();
        let tail_slope = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
        let mut integrals = vec![0.0];
        for i in 1..n {
            let last = integrals[i - 1];
            integrals.push(last + 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]));
        }
        Ok(IncreasingLinear {
            xs,
            ys,
            integrals,
            tail_slope,
        })
    }

    fn swapped(&self) -> Self {
        let pts: Vec<(f64, f64)> = self.ys.iter().zip(&self.xs).skip(1).map(|(&y, &x)| (y, x)).collect();
        IncreasingLinear::new(&pts).expect("inverse of an increasing function is increasing")
    }

    fn segment(&self, x: f64) -> usize {
        self.xs.partition_point(|&k| k <= x).saturating_sub(1).min(self.xs.len() - 1)
    }

    fn slope(&self, i: usize) -> f64 {
        if i + 1 < self.xs.len() {
            (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i])
        } else {
            self.tail_slope
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        self.ys[i] + self.slope(i) * (x - self.xs[i])
    }

    fn integral(&self, a: f64) -> f64 {
        let i = self.segment(a);
        let d = a - self.xs[i];
        self.integrals[i] + self.ys[i] * d + 0.5 * self.slope(i) * d * d
    }

    /// Inverse of `a ↦ ∫_0^a`.
    fn integral_inv(&self, target: f64) -> f64 {
        if target <= 0.0 {
            return 0.0;
        }
        let i = self.integrals.partition_point(|&v| v <= target).saturating_sub(1);
        let rest = target - self.integrals[i];
        let (y, m) = (self.ys[i], self.slope(i));
        // Solve y d + m d²/2 = rest for d >= 0.
        let d = if m == 0.0 {
            rest / y
        } else {
            2.0 * rest / (y + (y * y + 2.0 * m * rest).sqrt())
        };
        self.xs[i] + d
    }
}

#[derive(Debug, Clone, PartialEq)]
enum YoungKind {
    Power { p: f64 },
    Tabulated {
        psi: IncreasingLinear,
        psi_inv: IncreasingLinear,
    },
}

/// Interpolation functions `α(u) = Ψ⁻¹(ρu)`, `β(v) = Φ⁻¹((1-ρ)v)` built from
/// Young's inequality `ab ≤ Ψ(a) + Φ(b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct YoungPair {
    psi: PsiSpec,
    rho: f64,
    kind: YoungKind,
}

pub fn young_pair(psi: PsiSpec, rho: f64) -> Result<YoungPair> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho must lie in [0,1], got {rho}")));
    }
    let kind = match &psi {
        PsiSpec::Power { p } => {
            if !(*p > 1.0 && p.is_finite()) {
                return Err(Error::Domain(format!("power psi needs p > 1, got {p}")));
            }
            YoungKind::Power { p: *p }
        }
        PsiSpec::Tabulated { knots } => {
            let pts: Vec<(f64, f64)> = knots.iter().map(|k| (k[0], k[1])).collect();
            let lin = IncreasingLinear::new(&pts)?;
            YoungKind::Tabulated {
                psi_inv: lin.swapped(),
                psi: lin,
            }
        }
    };
    Ok(YoungPair { psi, rho, kind })
}

impl YoungPair {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn psi_spec(&self) -> &PsiSpec {
        &self.psi
    }

    /// `α(u)`; identically zero when `ρ = 0`.
    pub fn alpha(&self, u: f64) -> f64 {
        if self.rho == 0.0 {
            return 0.0;
        }
        match &self.kind {
            YoungKind::Power { p } => (p * self.rho * u).powf(1.0 / p),
            YoungKind::Tabulated { psi, .. } => psi.integral_inv(self.rho * u),
        }
    }

    /// `β(v)`; identically zero when `ρ = 1`.
    pub fn beta(&self, v: f64) -> f64 {
        if self.rho == 1.0 {
            return 0.0;
        }
        match &self.kind {
            YoungKind::Power { p } => (p * (1.0 - self.rho) * v / (p - 1.0)).powf((p - 1.0) / p),
            YoungKind::Tabulated { psi_inv, .. } => psi_inv.integral_inv((1.0 - self.rho) * v),
        }
    }

    /// `ψ(x)` of the generating function.
    pub fn psi(&self, x: f64) -> f64 {
        match &self.kind {
            YoungKind::Power { p } => x.powf(p - 1.0),
            YoungKind::Tabulated { psi, .. } => psi.eval(x),
        }
    }

    /// `Ψ(a) = ∫_0^a ψ`.
    pub fn big_psi(&self, a: f64) -> f64 {
        match &self.kind {
            YoungKind::Power { p } => a.powf(*p) / p,
            YoungKind::Tabulated { psi, .. } => psi.integral(a),
        }
    }

    /// `Φ(b) = ∫_0^b ψ⁻¹`.
    pub fn big_phi(&self, b: f64) -> f64 {
        match &self.kind {
            YoungKind::Power { p } => {
                let q = p / (p - 1.0);
                b.powf(q) / q
            }
            YoungKind::Tabulated { psi_inv, .. } => psi_inv.integral(b),
        }
    }

    /// Largest value of `α(u)β(v) - (ρu + (1-ρ)v)` over the given pairs.
    pub fn additivity_excess(&self, pairs: impl IntoIterator<Item = (f64, f64)>) -> f64 {
        pairs
            .into_iter()
            .map(|(u, v)| self.alpha(u) * self.beta(v) - (self.rho * u + (1.0 - self.rho) * v))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MConvention {
    /// `M = (1+δ) sup_n {R* r(n-1) - ε(1-ε) δ R(n)/(1+δ)}₊`, later scaled by `(1-ε)/ε`.
    Theorem,
    /// `M_δ = (1+δ) sup_n {ε⁻¹(1-ε) W* r(n-1) - δ R(n)/(1+δ)}₊` with
    /// `W* = R*/r(0)`; enters the bound unscaled.
    #[default]
    Proof,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MConstant {
    pub value: f64,
    /// Index attaining the supremum.
    pub argmax: usize,
    /// Index from which every stored term is nonpositive and `r(n-1)/R(n)`
    /// is nonincreasing below the threshold.
    pub decided_at: usize,
}

/// Supremum constant of the total-variation bound.
///
/// `return_sup` is the unnormalized `R* = sup_{C×C} Ě[Σ_{k=1}^τ r(k)]`. The
/// index `n = 0` uses `r(-1) := r(0)`.
pub fn m_constant(
    return_sup: f64,
    epsilon: f64,
    delta: f64,
    seq: &RateSequence,
    convention: MConvention,
) -> Result<MConstant> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0,1], got {epsilon}")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    if !(return_sup >= 0.0) {
        return Err(Error::Domain(format!("R* must be nonnegative, got {return_sup}")));
    }
    let (a, b) = match convention {
        MConvention::Theorem => (return_sup, epsilon * (1.0 - epsilon) * delta / (1.0 + delta)),
        MConvention::Proof => (
            (1.0 - epsilon) / epsilon * return_sup / seq.r(0),
            delta / (1.0 + delta),
        ),
    };
    if a == 0.0 {
        return Ok(MConstant {
            value: 0.0,
            argmax: 0,
            decided_at: 0,
        });
    }
    if b == 0.0 || !a.is_finite() {
        return Ok(MConstant {
            value: f64::INFINITY,
            argmax: 0,
            decided_at: 0,
        });
    }
    let r_prev = |n: usize| seq.r(n.max(1) - 1);
    let ratio = |n: usize| r_prev(n) / seq.big_r(n);
    let threshold = b / a;
    // Past an overflow of R(n) the supremum is beyond f64 range.
    let n_max = match (0..=seq.horizon()).find(|&n| !seq.big_r(n).is_finite()) {
        Some(n) if ratio(n - 1) > threshold => {
            return Ok(MConstant {
                value: f64::INFINITY,
                argmax: n,
                decided_at: n,
            });
        }
        Some(n) => n - 1,
        None => seq.horizon(),
    };

    if ratio(n_max) > threshold {
        return Err(Error::NeedsLongerSequence { needed: 2 * n_max });
    }
    // Longest stored suffix on which the ratio is below threshold and nonincreasing.
    let mut start = n_max;
    while start > 0 && ratio(start - 1) <= threshold && ratio(start - 1) >= ratio(start) {
        start -= 1;
    }
    if n_max < 2 * start {
        return Err(Error::NeedsLongerSequence { needed: 2 * start });
    }
    let (argmax, best) = (0..=start)
        .map(|n| (n, a * r_prev(n) - b * seq.big_r(n)))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    Ok(MConstant {
        value: (1.0 + delta) * best.max(0.0),
        argmax,
        decided_at: start,
    })
}

/// Runs `f` on `r_φ` sequences of doubling length until it stops asking for
/// a longer sequence.
pub fn with_phi_sequence<T>(
    phi: &Phi,
    initial: usize,
    mut f: impl FnMut(&RateSequence) -> Result<T>,
) -> Result<T> {
    const CAP: usize = 1 << 22;
    let mut n = initial.max(8);
    loop {
        let seq = rate_sequence(phi, n)?;
        match f(&seq) {
            Err(Error::NeedsLongerSequence { needed }) if n < CAP => {
                n = (2 * n).max(needed + 1).min(CAP);
            }
            other => return other,
        }
    }
}
