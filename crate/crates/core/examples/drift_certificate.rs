// A drift certificate D(φ, V, C) and its closed-form moment bounds, compared
// with the exact taboo expectations they bound.

use subgeom::bounds::exact_ingredients;
use subgeom::drift::{proposition_bounds, verify_drift, DriftCertificate};
use subgeom::hitting::RateSource;
use subgeom::kernels::{birth_death, extract_minorization, independent_coupling};
use subgeom::rates::{Phi, PhiSpec};

fn main() -> Result<(), subgeom::Error> {
    let kernel = birth_death(21, 0.1, 0.8)?;
    let phi = Phi::new(PhiSpec::Polynomial { c: 1.0, alpha: 0.5 })?;
    let v: Vec<f64> = (0..21).map(|x| 4f64.powi(x)).collect();
    let m = extract_minorization(&kernel, &[0, 1])?;

    let check = verify_drift(&kernel, &phi, &v, &m.small_set)?;
    println!("b = {:.4}, worst off-C margin = {:.4e}", check.b, {
        (2..21).map(|x| check.margins[x]).fold(f64::NEG_INFINITY, f64::max)
    });

    let cert = DriftCertificate::new(&kernel, &phi, &v, &m, None)?;
    println!("lambda = {:.4} in (0, {:.4}), V* = {:.4}", cert.lambda, cert.lambda_max, cert.v_star);

    let coupled = independent_coupling(&kernel, &m)?;
    let w = cert.weight_on_pairs();
    for (x, xp) in [(0, 20), (5, 9), (1, 0)] {
        let bound = proposition_bounds(&cert, x, xp)?;
        let exact = exact_ingredients(&coupled, &m, &RateSource::Phi(phi.clone()), Some(&w), (x, xp))?;
        println!("({x}, {xp})");
        println!("  r sigma: {:.4e} <= {:.4e}", exact.sigma_moment.value, bound.r_sigma);
        println!("  W sigma: {:.4e} <= {:.4e}", exact.w_sigma.unwrap().value, bound.w_sigma);
        println!("  R*:      {:.4e} <= {:.4e}", exact.return_sup.value, bound.r_star);
        println!("  W*:      {:.4e} <= {:.4e}", exact.w_star.unwrap().value, bound.w_star);
    }
    Ok(())
}
