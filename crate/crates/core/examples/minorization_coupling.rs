// Minorization on a small set, the independent and monotone couplings and
// the trivariate chain that carries the coupling time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subgeom::kernels::{
    birth_death, extract_minorization, independent_coupling, monotone_coupling, residual_kernel, TriState,
    TrivariateChain,
};

fn main() -> Result<(), subgeom::Error> {
    let kernel = birth_death(8, 0.3, 0.5)?;
    let m = extract_minorization(&kernel, &[0, 1])?;
    println!("C = {:?}, epsilon = {:.4}, nu = {:?}", m.small_set, m.epsilon, m.nu);

    let q = residual_kernel(&kernel, &m)?;
    println!("Q(0, .) = {:?}", q.row(0).unwrap());

    let coupled = independent_coupling(&kernel, &m)?;
    let z = coupled.pair(3, 5);
    let (first, second) = coupled.marginals(z);
    println!("independent coupling from (3, 5): marginals {first:.3?} / {second:.3?}");

    let monotone = monotone_coupling(&kernel, &m)?;
    let support: Vec<(usize, usize)> = monotone.row(monotone.pair(2, 6)).iter().map(|&(w, _)| monotone.unpair(w)).collect();
    println!("monotone coupling from (2, 6) moves to {support:?}");

    let chain = TrivariateChain::new(&kernel, &m, &coupled);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut s = TriState::new(0, 7, false);
    let mut n = 0;
    while !s.bell {
        s = chain.step(s, &mut rng);
        n += 1;
    }
    println!("coupled at T = {n} in state {}", s.x);
    Ok(())
}
