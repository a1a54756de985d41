// Rate functions r_φ = φ∘H_φ⁻¹ for the built-in φ families, their
// sequences, the subgeometric check and a Young pair.

use subgeom::rates::{is_subgeometric, rate_sequence, young_pair, Phi, PhiSpec, PsiSpec};

fn main() -> Result<(), subgeom::Error> {
    let families = [
        PhiSpec::Polynomial { c: 1.0, alpha: 0.5 },
        PhiSpec::Logarithmic { c: 1.0, alpha: 1.0 },
        PhiSpec::Subexponential {
            c: 1.0,
            alpha: 1.0,
            splice_point: None,
        },
    ];
    for spec in families {
        let phi = Phi::new(spec.clone())?;
        println!("{spec:?}");
        for v in [1.0, 10.0, 100.0] {
            let z = phi.h(v)?;
            println!("  H({v}) = {z:.6}, H^-1(H({v})) = {:.6}", phi.h_inv(z)?);
        }
        let seq = rate_sequence(&phi, 1000)?;
        println!(
            "  r(10) = {:.4}, r(1000) = {:.4}, R(1000) = {:.4e}, subgeometric: {}",
            seq.r(10),
            seq.r(1000),
            seq.big_r(1000),
            is_subgeometric(&seq).holds
        );
    }

    let young = young_pair(PsiSpec::Power { p: 2.0 }, 0.5)?;
    let (u, v) = (3.0, 7.0);
    println!(
        "alpha({u}) beta({v}) = {:.4} <= rho u + (1 - rho) v = {:.4}",
        young.alpha(u) * young.beta(v),
        0.5 * u + 0.5 * v
    );
    Ok(())
}
