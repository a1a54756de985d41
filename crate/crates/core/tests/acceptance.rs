mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use subgeom::bounds::{
    dominated_split, exact_ingredients, f_series_bound, interpolated_bound, monotone_reduced_moments,
    tv_series_bound, BoundKind, StartSpec,
};
use subgeom::drift::{drift_weight, proposition_bounds};
use subgeom::hitting::{
    coupling_identity_check, mc_hitting_estimate, path_rng, taboo_expectation, McOptions, RateSource,
    TabooFunctional, TabooMode,
};
use subgeom::kernels::{
    birth_death, check_monotone, extract_minorization, independent_coupling, monotone_coupling, random_monotone,
    reflected_walk, FiniteKernel, Minorization, TrivariateChain,
};
use subgeom::rates::{h_phi_inv_numeric, h_phi_quadrature, r_phi_numeric, young_pair, MConvention, Phi, PhiSpec, PsiSpec};
use subgeom::verify::{dominance_check, exact_distance_series, series_weights, Comparison};

use common::{certified_birth_death, log_family_exponent, log_grid, profile_exponent, regression_suite, slope, sqrt_phi};

const HORIZON: usize = 500;

fn report(criterion: u32, pass: bool, detail: &str, elapsed: Duration, budget: Duration) {
    let status = if pass && elapsed <= budget { "PASS" } else { "FAIL" };
    println!(
        "criterion {criterion}: {status} {detail} [{:.2} s, budget {} s]",
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

#[test]
fn criterion_1_rate_closed_forms() {
    let start = Instant::now();
    let v_grid = log_grid(1.0, 1e6, 1000);
    let mut worst: f64 = 0.0;
    for c in [0.5, 1.0] {
        for alpha in [0.3, 0.5, 0.8] {
            let phi = Phi::new(PhiSpec::Polynomial { c, alpha }).unwrap();
            let k = c * (1.0 - alpha);
            for i in 0..1000 {
                // Continuous grids, not rounded.
                let v = (1e6f64.ln() * i as f64 / 999.0).exp();
                let z = (1e-3f64.ln() + (1e9f64).ln() * i as f64 / 999.0).exp();
                let h = (v.powf(1.0 - alpha) - 1.0) / k;
                let h_inv = (1.0 + k * z).powf(1.0 / (1.0 - alpha));
                let r = c * (1.0 + k * z).powf(alpha / (1.0 - alpha));
                let errs = [
                    rel_err(h_phi_quadrature(&phi, v).unwrap(), h),
                    rel_err(phi.h(v).unwrap(), h),
                    rel_err(h_phi_inv_numeric(&phi, z).unwrap(), h_inv),
                    rel_err(phi.h_inv(z).unwrap(), h_inv),
                    rel_err(r_phi_numeric(&phi, z).unwrap(), r),
                    rel_err(phi.rate(z).unwrap(), r),
                ];
                worst = errs.iter().copied().fold(worst, f64::max);
            }
        }
    }
    assert_eq!(v_grid.len(), 1000);
    let pass = worst <= 1e-8;
    report(
        1,
        pass,
        &format!("worst relative error {worst:.2e} over 6 settings x 1000 points"),
        start.elapsed(),
        Duration::from_secs(5),
    );
    assert!(pass);
}

#[test]
fn criterion_2_rate_asymptotics() {
    let start = Instant::now();
    let n = log_grid(1e3, 1e5, 40);
    let ln_n: Vec<f64> = n.iter().map(|k| k.ln()).collect();
    let mut lines = Vec::new();
    let mut pass = true;
    let mut check = |label: String, fitted: f64, target: f64| {
        let err = rel_err(fitted, target);
        pass &= err <= 0.02;
        lines.push(format!("{label}: fitted {fitted:.4} target {target:.4} ({:.2}%)", 100.0 * err));
    };
    for (c, alpha) in [(1.0, 0.3), (0.5, 0.5), (1.0, 0.7)] {
        let phi = Phi::new(PhiSpec::Polynomial { c, alpha }).unwrap();
        let ln_r: Vec<f64> = n.iter().map(|&k| phi.ln_rate(k).unwrap()).collect();
        check(format!("polynomial c={c} a={alpha}"), slope(&ln_n, &ln_r), alpha / (1.0 - alpha));
    }
    for (c, alpha) in [(1.0, 0.5), (1.0, 1.0), (0.5, 2.0)] {
        let phi = Phi::new(PhiSpec::Logarithmic { c, alpha }).unwrap();
        let ln_r: Vec<f64> = n.iter().map(|&k| phi.ln_rate(k).unwrap()).collect();
        check(format!("logarithmic c={c} a={alpha}"), log_family_exponent(&n, &ln_r), alpha);
    }
    for (c, alpha) in [(1.0, 0.5), (1.0, 1.0), (0.5, 2.0)] {
        let phi = Phi::new(PhiSpec::Subexponential {
            c,
            alpha,
            splice_point: None,
        })
        .unwrap();
        let ln_r: Vec<f64> = n.iter().map(|&k| phi.ln_rate(k).unwrap()).collect();
        check(format!("subexponential c={c} a={alpha}"), profile_exponent(&n, &ln_r), 1.0 / (1.0 + alpha));
    }
    for l in &lines {
        println!("  {l}");
    }
    report(2, pass, "9 exponent fits within 2%", start.elapsed(), Duration::from_secs(30));
    assert!(pass, "{lines:#?}");
}

/// Kernel on `S` states whose rows on `C = {0}` are `ε ν + (1-ε) Q`.
fn minorized_kernel(size: usize, epsilon: f64, seed: u64) -> (FiniteKernel, Minorization) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_row = |rng: &mut ChaCha8Rng| {
        let w: Vec<f64> = (0..size).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|a| a / s).collect::<Vec<f64>>()
    };
    let nu = random_row(&mut rng);
    let rows: Vec<Vec<f64>> = (0..size)
        .map(|x| {
            let q = random_row(&mut rng);
            if x == 0 {
                nu.iter().zip(&q).map(|(n, q)| epsilon * n + (1.0 - epsilon) * q).collect()
            } else {
                q
            }
        })
        .collect();
    let kernel = FiniteKernel::new(rows).unwrap();
    let m = Minorization::new(&kernel, &[0], epsilon, nu).unwrap();
    (kernel, m)
}

#[test]
fn criterion_3_coupling_identity() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for (i, size) in [2usize, 3, 4].into_iter().enumerate() {
        for (j, epsilon) in [0.3, 0.6, 1.0].into_iter().enumerate() {
            let (kernel, m) = minorized_kernel(size, epsilon, (10 * i + j) as u64);
            let coupled = independent_coupling(&kernel, &m).unwrap();
            let pairs = size * size;
            let v: Vec<f64> = (0..size).map(|x| 1.0 + x as f64).collect();
            let tests = [
                vec![1.0; pairs],
                (0..pairs).map(|z| f64::from(z / size == size - 1)).collect(),
                drift_weight(&sqrt_phi(), &v, 1.0).unwrap(),
            ];
            for chi in &tests {
                for x in 0..size {
                    for xp in 0..size {
                        let check = coupling_identity_check(&kernel, &m, &coupled, chi, (x, xp), 10, None).unwrap();
                        worst = worst.max(check.max_discrepancy);
                        cases += 1;
                    }
                }
            }
        }
    }
    let pass = worst <= 1e-12;
    report(
        3,
        pass,
        &format!("max discrepancy {worst:.2e} over {cases} (chain, chi, start) cases, n <= 10"),
        start.elapsed(),
        Duration::from_secs(10),
    );
    assert!(pass);
}

fn rate_families() -> Vec<(&'static str, Phi)> {
    vec![
        ("polynomial", Phi::new(PhiSpec::Polynomial { c: 1.0, alpha: 0.5 }).unwrap()),
        ("logarithmic", Phi::new(PhiSpec::Logarithmic { c: 1.0, alpha: 1.0 }).unwrap()),
    ]
}

#[test]
fn criterion_4_theorem_soundness() {
    let start = Instant::now();
    let suite = regression_suite();
    let mut checks = 0;
    let mut failures = Vec::new();
    let mut tightest: f64 = 0.0;
    for chain in &suite {
        let coupled = independent_coupling(&chain.kernel, &chain.minorization).unwrap();
        let size = chain.kernel.size();
        let f = dominated_split(&chain.weight, size);
        for (label, phi) in rate_families() {
            let rate = RateSource::Phi(phi);
            let tv_weights = series_weights(BoundKind::TvSeries, &rate, None, HORIZON).unwrap();
            let f_weights = series_weights(BoundKind::FSeries, &rate, None, HORIZON).unwrap();
            let results: Vec<_> = chain
                .pairs
                .par_iter()
                .map(|&(x, xp)| {
                    let ing = exact_ingredients(&coupled, &chain.minorization, &rate, Some(&chain.weight), (x, xp)).unwrap();
                    let spec = StartSpec::Pair { x, x_prime: xp };
                    let tv = exact_distance_series(&chain.kernel, x, &Comparison::State(xp), None, HORIZON).unwrap();
                    let fd = exact_distance_series(&chain.kernel, x, &Comparison::State(xp), Some(&f), HORIZON).unwrap();
                    let mut out = Vec::new();
                    for delta in [0.5, 1.0, 2.0] {
                        let b = tv_series_bound(&ing, spec, &rate, label, delta, MConvention::Proof).unwrap();
                        out.push((format!("tv delta={delta}"), dominance_check(&tv, &tv_weights, &b, HORIZON)));
                    }
                    let b = f_series_bound(&ing, spec, &f, &chain.weight).unwrap();
                    out.push(("f_series".to_string(), dominance_check(&fd, &f_weights, &b, HORIZON)));
                    (x, xp, out)
                })
                .collect();
            for (x, xp, out) in results {
                for (what, v) in out {
                    checks += 1;
                    tightest = tightest.max(v.tightness);
                    if !v.pass {
                        failures.push(format!("{} {label} ({x},{xp}) {what}: {} > {}", chain.name, v.max_partial_sum, v.bound));
                    }
                }
            }
        }
    }
    let pass = failures.is_empty();
    report(
        4,
        pass,
        &format!("{checks} dominance checks, {} failures, max tightness {tightest:.3}", failures.len()),
        start.elapsed(),
        Duration::from_secs(120),
    );
    assert!(pass, "{failures:#?}");
}

#[test]
fn criterion_5_proposition_dominance() {
    let start = Instant::now();
    let mut chains = regression_suite();
    chains.push(certified_birth_death());
    let phi = sqrt_phi();
    let rate = RateSource::Phi(phi.clone());
    let mut checks = 0;
    let mut certified = Vec::new();
    let mut uncertified = Vec::new();
    let mut min_margin = f64::INFINITY;
    for chain in &chains {
        let Some(cert) = &chain.certificate else {
            uncertified.push(chain.name);
            continue;
        };
        certified.push(chain.name);
        let coupled = independent_coupling(&chain.kernel, &chain.minorization).unwrap();
        let w = cert.weight_on_pairs();
        for &(x, xp) in &chain.pairs {
            let bound = proposition_bounds(cert, x, xp).unwrap();
            let exact = exact_ingredients(&coupled, &chain.minorization, &rate, Some(&w), (x, xp)).unwrap();
            let pairs = [
                (bound.r_sigma, exact.sigma_moment.value),
                (bound.w_sigma, exact.w_sigma.unwrap().value),
                (bound.r_star, exact.return_sup.value),
                (bound.w_star, exact.w_star.unwrap().value),
            ];
            for (b, e) in pairs {
                checks += 1;
                min_margin = min_margin.min(b - e);
            }
        }
    }
    // Both weak-drift suite chains must be the only ones left out.
    let scope_ok = uncertified == ["birth_death_21", "reflected_walk_31"] && certified.contains(&"random_monotone_10");
    let pass = min_margin >= 0.0 && scope_ok;
    report(
        5,
        pass,
        &format!(
            "{checks} bound checks on certified chains {certified:?}, min margin {min_margin:.3e}; no one-step certificate for {uncertified:?}"
        ),
        start.elapsed(),
        Duration::from_secs(60),
    );
    assert!(pass);
}

#[test]
fn criterion_6_corollary_soundness() {
    let start = Instant::now();
    let suite = regression_suite();
    let mut checks = 0;
    let mut failures = Vec::new();
    for chain in &suite {
        let coupled = independent_coupling(&chain.kernel, &chain.minorization).unwrap();
        let size = chain.kernel.size();
        for (label, phi) in rate_families() {
            let rate = RateSource::Phi(phi);
            let ingredients: Vec<_> = chain
                .pairs
                .par_iter()
                .map(|&p| exact_ingredients(&coupled, &chain.minorization, &rate, Some(&chain.weight), p).unwrap())
                .collect();
            for p in [1.5, 2.0] {
                for rho in [0.3, 0.5] {
                    let young = young_pair(PsiSpec::Power { p }, rho).unwrap();
                    let beta_w: Vec<f64> = chain.weight.iter().map(|&w| young.beta(w)).collect();
                    let f = dominated_split(&beta_w, size);
                    let weights = series_weights(BoundKind::Interpolated, &rate, Some(&young), HORIZON).unwrap();
                    for (&(x, xp), ing) in chain.pairs.iter().zip(&ingredients) {
                        let spec = StartSpec::Pair { x, x_prime: xp };
                        let b = interpolated_bound(ing, spec, &young, &f, &chain.weight, &rate, label, 1.0, MConvention::Proof)
                            .unwrap();
                        let d = exact_distance_series(&chain.kernel, x, &Comparison::State(xp), Some(&f), HORIZON).unwrap();
                        let v = dominance_check(&d, &weights, &b, HORIZON);
                        checks += 1;
                        if !v.pass {
                            failures.push(format!("{} {label} p={p} rho={rho} ({x},{xp})", chain.name));
                        }
                    }
                }
            }
        }
    }
    let pass = failures.is_empty();
    report(
        6,
        pass,
        &format!("{checks} interpolated dominance checks, {} failures", failures.len()),
        start.elapsed(),
        Duration::from_secs(60),
    );
    assert!(pass, "{failures:#?}");
}

#[test]
fn criterion_7_monotone_machinery() {
    let start = Instant::now();
    let size = 10;
    let kernel = random_monotone(size, 0.5, 0).unwrap();
    check_monotone(&kernel).unwrap();
    let m = extract_minorization(&kernel, &[0, 1, 2, 3]).unwrap();
    let coupled = monotone_coupling(&kernel, &m).unwrap();
    let chain = TrivariateChain::new(&kernel, &m, &coupled);

    let violations: usize = (0..10_000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(77, i);
            let a = rng.gen_range(0..size);
            let b = rng.gen_range(a..size);
            let mut z = coupled.pair(a, b);
            let mut bad = 0;
            for _ in 0..1000 {
                let (x, xp) = chain.step_pair(z, &mut rng);
                bad += usize::from(x > xp);
                z = coupled.pair(x, xp);
            }
            bad
        })
        .sum();

    let absorbing = (0..size).flat_map(|x| (x..size).map(move |xp| (x, xp))).all(|(x, xp)| {
        coupled.row(coupled.pair(x, xp)).iter().all(|&(w, p)| {
            let (a, b) = coupled.unpair(w);
            p == 0.0 || a <= b
        })
    });

    let rate = RateSource::Phi(sqrt_phi());
    let mut reduction_ok = true;
    let mut worst_gap = f64::INFINITY;
    for &(x, xp) in &common::sample_pairs(size, 5) {
        let reduced = monotone_reduced_moments(&kernel, &m, &rate, &vec![1.0; size], (x, xp)).unwrap();
        let exact = exact_ingredients(&coupled, &m, &rate, None, (x, xp)).unwrap();
        let tol = 1e-12 * reduced.sigma_moment.max(reduced.return_sup);
        reduction_ok &= exact.sigma_moment.value <= reduced.sigma_moment + tol;
        reduction_ok &= exact.return_sup.value <= reduced.return_sup + tol;
        worst_gap = worst_gap
            .min(reduced.sigma_moment - exact.sigma_moment.value)
            .min(reduced.return_sup - exact.return_sup.value);
    }
    let pass = violations == 0 && absorbing && reduction_ok;
    report(
        7,
        pass,
        &format!("{violations} order violations in 1e4 x 1e3 steps, absorbing {absorbing}, reduction min gap {worst_gap:.3e}"),
        start.elapsed(),
        Duration::from_secs(60),
    );
    assert!(pass);
}

#[test]
fn criterion_8_monte_carlo_consistency() {
    let start = Instant::now();
    let chains: Vec<(&str, FiniteKernel, Vec<usize>)> = vec![
        ("birth_death_21", birth_death(21, 0.3, 0.5).unwrap(), vec![0, 1]),
        ("reflected_walk_31", reflected_walk(31, 0.35).unwrap(), vec![0, 1]),
        ("random_monotone_10", random_monotone(10, 0.5, 0).unwrap(), vec![0, 1, 2, 3]),
        ("birth_death_6", birth_death(6, 0.4, 0.4).unwrap(), vec![0]),
    ];
    let mut worst_z: f64 = 0.0;
    let mut combos = 0;
    let mut identical = true;
    for (ci, (_, kernel, c)) in chains.iter().enumerate() {
        let size = kernel.size();
        let m = extract_minorization(kernel, c).unwrap();
        let coupled = independent_coupling(kernel, &m).unwrap();
        let target = coupled.target().to_vec();
        let v: Vec<f64> = (0..size).map(|x| 1.0 + x as f64).collect();
        let w = drift_weight(&sqrt_phi(), &v, 1.0).unwrap();
        let (poly, log) = (
            RateSource::Phi(rate_families()[0].1.clone()),
            RateSource::Phi(rate_families()[1].1.clone()),
        );
        let far = coupled.pair(0, size - 1);
        let mid = coupled.pair(size / 2, size - 1);
        let top = *c.last().unwrap();
        let back = coupled.pair(top, top);
        let functionals = [
            (TabooFunctional::unweighted(target.clone(), poly.clone(), TabooMode::Hitting), far),
            (TabooFunctional::unweighted(target.clone(), log.clone(), TabooMode::Hitting), mid),
            (TabooFunctional::unweighted(target.clone(), RateSource::Constant(1.0), TabooMode::Return), back),
            (TabooFunctional::unweighted(target.clone(), poly, TabooMode::Return), back),
            (
                TabooFunctional::new(target.clone(), RateSource::Constant(1.0), w, TabooMode::Hitting),
                far,
            ),
        ];
        for (fi, (spec, z)) in functionals.iter().enumerate() {
            let exact = taboo_expectation(coupled.rows(), spec, *z).unwrap().value;
            let options = McOptions::new(10_000, 1000 + (10 * ci + fi) as u64);
            let a = mc_hitting_estimate(coupled.rows(), spec, *z, options).unwrap();
            let b = mc_hitting_estimate(coupled.rows(), spec, *z, options).unwrap();
            identical &= a.mean.to_bits() == b.mean.to_bits() && a.std_error.to_bits() == b.std_error.to_bits();
            // A deterministic functional has zero standard error; compare it up to rounding.
            let excess = ((a.mean - exact).abs() - 1e-12 * exact.abs()).max(0.0);
            worst_z = worst_z.max(if excess == 0.0 { 0.0 } else { excess / a.std_error });
            combos += 1;
        }
    }
    let pass = combos == 20 && worst_z <= 4.0 && identical;
    report(
        8,
        pass,
        &format!("{combos} combinations, worst |z| = {worst_z:.2}, bit-identical reruns {identical}"),
        start.elapsed(),
        Duration::from_secs(60),
    );
    assert!(pass);
}

#[test]
fn criterion_9_young_property() {
    let start = Instant::now();
    let mut configs: Vec<(String, PsiSpec, f64)> = Vec::new();
    for p in [1.5, 2.0, 3.0] {
        for rho in [0.0, 0.3, 0.5, 0.8, 1.0] {
            configs.push((format!("power p={p} rho={rho}"), PsiSpec::Power { p }, rho));
        }
    }
    let tabulated = PsiSpec::Tabulated {
        knots: vec![[1.0, 0.5], [2.0, 2.0], [4.0, 3.0]],
    };
    for rho in [0.3, 0.5] {
        configs.push((format!("tabulated rho={rho}"), tabulated.clone(), rho));
    }
    let mut violations = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (_, psi, rho) in &configs {
        let young = young_pair(psi.clone(), *rho).unwrap();
        for _ in 0..10_000 {
            let u = 10f64.powf(rng.gen_range(-3.0..6.0));
            let v = 10f64.powf(rng.gen_range(-3.0..6.0));
            let rhs = rho * u + (1.0 - rho) * v;
            if young.alpha(u) * young.beta(v) > rhs + 1e-12 * rhs.max(1.0) {
                violations += 1;
            }
        }
    }
    let pass = violations == 0;
    report(
        9,
        pass,
        &format!("{violations} violations over {} configurations x 1e4 pairs", configs.len()),
        start.elapsed(),
        Duration::from_secs(60),
    );
    assert!(pass);
}
