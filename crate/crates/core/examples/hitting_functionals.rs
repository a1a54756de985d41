// Rate-weighted hitting functionals of the pair chain, exact and by seeded
// Monte Carlo.

use subgeom::hitting::{mc_hitting_estimate, return_supremum, taboo_expectation, McOptions, RateSource, TabooFunctional, TabooMode};
use subgeom::kernels::{extract_minorization, independent_coupling, reflected_walk};
use subgeom::rates::{Phi, PhiSpec};

fn main() -> Result<(), subgeom::Error> {
    let kernel = reflected_walk(31, 0.35)?;
    let m = extract_minorization(&kernel, &[0])?;
    let coupled = independent_coupling(&kernel, &m)?;
    let rate = RateSource::Phi(Phi::new(PhiSpec::Logarithmic { c: 1.0, alpha: 1.0 })?);
    let spec = TabooFunctional::unweighted(coupled.target().to_vec(), rate, TabooMode::Hitting);

    let z = coupled.pair(10, 25);
    let exact = taboo_expectation(coupled.rows(), &spec, z)?;
    let mc = mc_hitting_estimate(coupled.rows(), &spec, z, McOptions::new(10_000, 42))?;
    println!(
        "E[sum r(k), k <= sigma] from (10, 25): exact {:.6} (tail {:.1e}, {} steps), MC {:.6} +- {:.6}",
        exact.value, exact.tail_bound, exact.horizon, mc.mean, mc.std_error
    );

    let (sup, argmax) = return_supremum(coupled.rows(), &spec, &coupled.target_pairs())?;
    println!("R* = {sup:.6} attained at {:?}", coupled.unpair(argmax));
    Ok(())
}
