//! Adaptive Gauss–Kronrod quadrature and monotone root finding.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// 7-point Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

pub const MAX_SUBDIVISIONS: usize = 10_000;

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Segment {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[lo, hi]` by globally adaptive bisection of the
/// segment with the largest Kronrod–Gauss discrepancy.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, rel_tol: f64) -> Result<f64> {
    if lo == hi {
        return Ok(0.0);
    }
    let mut segments = vec![gk15(&f, lo, hi)];
    let mut total: f64 = segments[0].value;
    let mut total_err: f64 = segments[0].error;
    let mut subdivisions = 0;
    while total_err > rel_tol * total.abs() && total_err > f64::MIN_POSITIVE {
        if subdivisions >= MAX_SUBDIVISIONS {
            return Err(Error::Numeric {
                what: "quadrature did not converge within the subdivision cap".into(),
                lo,
                hi,
                estimate: total,
                error_estimate: total_err,
            });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
            .expect("non-empty");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.lo + seg.hi);
        if mid <= seg.lo || mid >= seg.hi {
            // Interval can no longer be split in floating point.
            return Err(Error::Numeric {
                what: "quadrature interval collapsed".into(),
                lo: seg.lo,
                hi: seg.hi,
                estimate: total,
                error_estimate: total_err,
            });
        }
        let left = gk15(&f, seg.lo, mid);
        let right = gk15(&f, mid, seg.hi);
        segments.push(left);
        segments.push(right);
        subdivisions += 1;
        total = segments.iter().map(|s| s.value).sum();
        total_err = segments.iter().map(|s| s.error).sum();
    }
    if !total.is_finite() {
        return Err(Error::Numeric {
            what: "non-finite integrand".into(),
            lo,
            hi,
            estimate: total,
            error_estimate: total_err,
        });
    }
    Ok(total)
}

/// Solves `f(x) = target` for a continuous strictly increasing `f` on
/// `[lo, ∞)` with `f(lo) <= target`.
///
/// The bracket is grown geometrically from `lo`; inside it Newton steps
/// (using `df`) are taken when they stay in the bracket, bisection otherwise.
pub fn invert_increasing<F, D>(f: F, df: D, target: f64, lo: f64, rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
    D: Fn(f64) -> f64,
{
    let f_lo = f(lo)?;
    if f_lo >= target {
        return Ok(lo);
    }
    let mut a = lo;
    let mut width = lo.abs().max(1.0);
    let mut b = lo + width;
    let mut fb = f(b)?;
    while fb < target {
        a = b;
        width *= 2.0;
        b = lo + width;
        if !b.is_finite() {
            return Err(Error::Numeric {
                what: "could not bracket the inverse".into(),
                lo,
                hi: b,
                estimate: fb,
                error_estimate: f64::NAN,
            });
        }
        fb = f(b)?;
    }
    let mut x = 0.5 * (a + b);
    for _ in 0..400 {
        let fx = f(x)? - target;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        if b - a <= rel_tol * x.abs() {
            return Ok(0.5 * (a + b));
        }
        let slope = df(x);
        let newton = x - fx / slope;
        let next = if slope > 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - x).abs() <= rel_tol * x.abs() {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::Numeric {
        what: "root finding did not converge".into(),
        lo: a,
        hi: b,
        estimate: x,
        error_estimate: b - a,
    })
}

/// Bisection for an increasing function on a finite bracket.
pub fn bisect_increasing<F: Fn(f64) -> f64>(f: F, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Ordinary least squares with an intercept-free design matrix given as rows.
/// Returns the coefficient vector and the residual sum of squares.
pub fn least_squares(design: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let p = design[0].len();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (row, &yi) in design.iter().zip(y) {
        for i in 0..p {
            xty[i] += row[i] * yi;
            for j in 0..p {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    let beta = solve_dense(xtx, xty).unwrap_or_else(|| vec![f64::NAN; p]);
    let rss = design
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let fit: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (yi - fit).powi(2)
        })
        .sum();
    (beta, rss)
}

/// Gaussian elimination with partial pivoting. `None` if a pivot vanishes.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}
