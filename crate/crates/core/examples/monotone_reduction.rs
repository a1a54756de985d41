// Stochastically monotone kernels: the quantile coupling keeps pairs
// ordered, and the univariate chain from the upper state bounds the
// bivariate moments.

use subgeom::bounds::{exact_ingredients, monotone_reduced_moments};
use subgeom::hitting::RateSource;
use subgeom::kernels::{check_monotone, extract_minorization, monotone_coupling, random_monotone};
use subgeom::rates::{Phi, PhiSpec};

fn main() -> Result<(), subgeom::Error> {
    let size = 10;
    let kernel = random_monotone(size, 0.5, 11)?;
    check_monotone(&kernel)?;
    let m = extract_minorization(&kernel, &[0, 1, 2])?;
    let coupled = monotone_coupling(&kernel, &m)?;

    let ordered = (0..size)
        .flat_map(|x| (x..size).map(move |xp| (x, xp)))
        .all(|(x, xp)| coupled.row(coupled.pair(x, xp)).iter().all(|&(w, _)| {
            let (a, b) = coupled.unpair(w);
            a <= b
        }));
    println!("pairs with x <= x' stay ordered: {ordered}");

    let rate = RateSource::Phi(Phi::new(PhiSpec::Polynomial { c: 1.0, alpha: 0.5 })?);
    for (x, xp) in [(0, 9), (3, 7), (5, 5)] {
        let reduced = monotone_reduced_moments(&kernel, &m, &rate, &vec![1.0; size], (x, xp))?;
        let exact = exact_ingredients(&coupled, &m, &rate, None, (x, xp))?;
        println!(
            "({x}, {xp}): sigma moment {:.6} <= {:.6}, R* {:.6} <= {:.6}",
            exact.sigma_moment.value, reduced.sigma_moment, exact.return_sup.value, reduced.return_sup
        );
    }
    Ok(())
}
