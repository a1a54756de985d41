// Total-variation, f-norm and interpolated series bounds with exact
// ingredients, checked against exact distances from matrix powers.

use subgeom::bounds::{dominated_split, exact_ingredients, f_series_bound, interpolated_bound, tv_series_bound, StartSpec};
use subgeom::drift::drift_weight;
use subgeom::hitting::RateSource;
use subgeom::kernels::{birth_death, extract_minorization, independent_coupling};
use subgeom::rates::{young_pair, MConvention, Phi, PhiSpec, PsiSpec};
use subgeom::verify::{dominance_check, exact_distance_series, series_weights, Comparison};

fn main() -> Result<(), subgeom::Error> {
    let size = 21;
    let kernel = birth_death(size, 0.3, 0.5)?;
    let m = extract_minorization(&kernel, &[0])?;
    let coupled = independent_coupling(&kernel, &m)?;
    let phi = Phi::new(PhiSpec::Polynomial { c: 1.0, alpha: 0.5 })?;
    let rate = RateSource::Phi(phi.clone());
    let v: Vec<f64> = (0..size).map(|x| 1.5f64.powi(x as i32)).collect();
    let w = drift_weight(&phi, &v, 1.0)?;
    let young = young_pair(PsiSpec::Power { p: 2.0 }, 0.5)?;
    let (x, xp) = (0, 20);
    let start = StartSpec::Pair { x, x_prime: xp };
    let horizon = 500;

    let ing = exact_ingredients(&coupled, &m, &rate, Some(&w), (x, xp))?;

    let tv = tv_series_bound(&ing, start, &rate, "r_phi", 1.0, MConvention::Proof)?;
    let series = exact_distance_series(&kernel, x, &Comparison::State(xp), None, horizon)?;
    let weights = series_weights(tv.kind, &rate, None, horizon)?;
    let verdict = dominance_check(&series, &weights, &tv, horizon);
    println!("tv series:    sum {:.4e} <= {:.4e}  pass {}", verdict.max_partial_sum, tv.value, verdict.pass);

    let f = dominated_split(&w, size);
    let fs = f_series_bound(&ing, start, &f, &w)?;
    let series = exact_distance_series(&kernel, x, &Comparison::State(xp), Some(&f), horizon)?;
    let weights = series_weights(fs.kind, &rate, None, horizon)?;
    let verdict = dominance_check(&series, &weights, &fs, horizon);
    println!("f series:     sum {:.4e} <= {:.4e}  pass {}", verdict.max_partial_sum, fs.value, verdict.pass);

    let beta_w: Vec<f64> = w.iter().map(|&a| young.beta(a)).collect();
    let f = dominated_split(&beta_w, size);
    let ip = interpolated_bound(&ing, start, &young, &f, &w, &rate, "r_phi", 1.0, MConvention::Proof)?;
    let series = exact_distance_series(&kernel, x, &Comparison::State(xp), Some(&f), horizon)?;
    let weights = series_weights(ip.kind, &rate, Some(&young), horizon)?;
    let verdict = dominance_check(&series, &weights, &ip, horizon);
    println!("interpolated: sum {:.4e} <= {:.4e}  pass {}", verdict.max_partial_sum, ip.value, verdict.pass);

    println!("{}", serde_json::to_string_pretty(&tv).expect("report serializes"));
    Ok(())
}
