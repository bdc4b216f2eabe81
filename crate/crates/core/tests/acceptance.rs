//! Desk-scale acceptance run: one line per criterion, non-zero exit on failure.

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bratteli_core::diagram::{BoundaryPolicy, Diagram, FinitePath, IncidenceMatrix, Successor, Window};
use bratteli_core::gen;
use bratteli_core::laplacian::{energy, harmonic_residual, hitting_estimate, solve_harmonic, Boundary, HarmonicOptions, WeightedNetwork};
use bratteli_core::markov::{check_dual_identities, check_operators, dual_kernels, kolmogorov_residual, markov_from_tail_invariant, MarkovSystem};
use bratteli_core::measurable::{dual_kernel, duality_defects, factorize, random_orthogonal, rkhs_gram, symmetric_measures, KernelChain};
use bratteli_core::measures::{ers_level_masses, hat_matrix, solve_tail_invariant, stationary_pf_measure, verify_tail_invariance};
use bratteli_core::perron::{pf_solve, pf_solve_matrix, symmetric_schedule, FnFamily, PfOptions};
use bratteli_core::substitution::{substitution_matrix, Substitution};
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok { Ok(()) } else { Err(msg.into()) }
}

fn fibonacci() -> IncidenceMatrix {
    IncidenceMatrix::from_dense(&[vec![1, 1], vec![1, 0]])
}

fn all_ones() -> IncidenceMatrix {
    IncidenceMatrix::from_dense(&[vec![1, 1], vec![1, 1]])
}

fn drunken(policy: BoundaryPolicy) -> IncidenceMatrix {
    substitution_matrix(&Substitution::drunken_man(), Some(Window::symmetric(20)), policy).expect("valid substitution")
}

fn random_systems(seed: u64, count: usize) -> Vec<MarkovSystem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let d = gen::random_diagram(&mut rng, 6, 2..=6, 2);
            gen::random_markov(&mut rng, d).expect("generated weights are valid")
        })
        .collect()
}

fn pf_closed_forms() -> Outcome {
    let opts = PfOptions::default();
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let fib = pf_solve_matrix(&fibonacci().transpose_f64(), Window::first(2), &opts).map_err(|e| e.to_string())?;
    ensure((fib.lambda - phi).abs() < 1e-9, format!("fibonacci λ = {}", fib.lambda))?;
    let ones = pf_solve_matrix(&all_ones().transpose_f64(), Window::first(2), &opts).map_err(|e| e.to_string())?;
    ensure((ones.lambda - 2.0).abs() < 1e-12, format!("all-ones λ = {}", ones.lambda))?;
    let fam = FnFamily(|w: Window| {
        substitution_matrix(&Substitution::drunken_man(), Some(w), BoundaryPolicy::Reflect)
            .expect("valid substitution")
            .transpose_f64()
    });
    let dm = pf_solve(&fam, &symmetric_schedule(&[10, 15, 20]), &opts).map_err(|e| e.to_string())?;
    let dev = dm.t.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
    ensure((dm.lambda - 4.0).abs() < 1e-6 && dev < 1e-6, format!("drunken man λ = {}, deviation {dev:e}", dm.lambda))?;
    let trunc = pf_solve_matrix(&drunken(BoundaryPolicy::Truncate).transpose_f64(), Window::symmetric(20), &opts)
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "φ err {:.1e}, all-ones err {:.1e}, drunken man λ = {:.12} (constancy {dev:.1e}); truncated window 41 gives {:.6}",
        (fib.lambda - phi).abs(),
        (ones.lambda - 2.0).abs(),
        dm.lambda,
        trunc.lambda
    ))
}

fn tail_invariance() -> Outcome {
    let mut worst: f64 = 0.0;
    for (name, f) in [("fibonacci", fibonacci()), ("all-ones", all_ones()), ("drunken man", drunken(BoundaryPolicy::Reflect))] {
        let d = Diagram::stationary(f, 10).map_err(|e| e.to_string())?;
        let m = stationary_pf_measure(&d, &PfOptions::default()).map_err(|e| e.to_string())?;
        let r = verify_tail_invariance(&d, &m.measure, 1e-12).map_err(|e| e.to_string())?;
        ensure(r.passed, format!("{name}: residual {:e}", r.max_residual))?;
        worst = worst.max(r.max_residual);
    }
    Ok(format!("max residual {worst:.2e} over 3 matrices, depth 10"))
}

fn kolmogorov() -> Outcome {
    let mut worst: f64 = 0.0;
    for sys in random_systems(101, 10) {
        worst = worst.max(kolmogorov_residual(&sys, 1_000_000).map_err(|e| e.to_string())?);
    }
    ensure(worst < 1e-13, format!("relative residual {worst:e}"))?;
    Ok(format!("max relative residual {worst:.2e} over 10 systems"))
}

fn dual_identities() -> Outcome {
    let (mut fwd, mut bwd, mut bal): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for sys in random_systems(202, 10) {
        let r = check_dual_identities(&dual_kernels(&sys).map_err(|e| e.to_string())?);
        fwd = fwd.max(r.forward_propagation);
        bwd = bwd.max(r.backward_propagation);
        bal = bal.max(r.detailed_balance);
    }
    ensure(fwd < 1e-12 && bwd < 1e-12 && bal < 1e-13, format!("forward {fwd:e}, backward {bwd:e}, balance {bal:e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(203);
    let mut hat: f64 = 0.0;
    let mut diagrams = vec![Diagram::stationary(fibonacci(), 8).expect("valid"), Diagram::stationary(all_ones(), 8).expect("valid")];
    diagrams.extend((0..5).map(|_| gen::random_diagram(&mut rng, 6, 2..=5, 2)));
    for d in &diagrams {
        let anchor = gen::random_probability(&mut rng, d.level_size(d.depth()));
        let nu = solve_tail_invariant(d, Some(anchor)).map_err(|e| e.to_string())?.normalized();
        let sys = markov_from_tail_invariant(d, &nu).map_err(|e| e.to_string())?;
        let hk = dual_kernels(&sys).map_err(|e| e.to_string())?;
        for n in 0..d.depth() {
            hat = hat.max(hk.q_hat[n].max_abs_diff(&hat_matrix(d, n).to_f64()));
        }
    }
    ensure(hat < 1e-12, format!("Q̂ vs F̂ {hat:e}"))?;
    Ok(format!("forward {fwd:.1e}, backward {bwd:.1e}, balance {bal:.1e}, Q̂−F̂ {hat:.1e} on {} tail-invariant systems", diagrams.len()))
}

fn finitely_supported(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(-2.0..2.0) }).collect();
    if v.iter().all(|x| *x == 0.0) {
        v[0] = 1.0;
    }
    v
}

fn operator_suite() -> Outcome {
    let systems = random_systems(303, 10);
    let hks: Vec<_> = systems.iter().map(dual_kernels).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(304);
    let (mut adj, mut slack, mut stat): (f64, f64, f64) = (0.0, f64::NEG_INFINITY, 0.0);
    for k in 0..100 {
        let hk = &hks[k % hks.len()];
        let n = rng.gen_range(0..hk.depth());
        let f = finitely_supported(&mut rng, hk.q[n + 1].len());
        let g = finitely_supported(&mut rng, hk.q[n].len());
        let r = check_operators(hk, n, &f, &g);
        adj = adj.max(r.adjointness);
        slack = slack.max(r.contractivity_slack);
        stat = stat.max(r.stationarity);
    }
    ensure(adj < 1e-10 && slack <= 1e-12 && stat < 1e-12, format!("adjointness {adj:e}, slack {slack:e}, stationarity {stat:e}"))?;
    Ok(format!("100 pairs: adjointness {adj:.1e}, max slack {slack:.1e}, stationarity {stat:.1e}"))
}

fn laplacian_suite() -> Outcome {
    let mut qm: f64 = 0.0;
    let mut rel: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let systems = random_systems(405, 10);
    for sys in &systems {
        let net = WeightedNetwork::new(dual_kernels(sys).map_err(|e| e.to_string())?, Boundary::Reflect).map_err(|e| e.to_string())?;
        let q = &net.kernels().q;
        for n in 1..net.top() {
            let (up, down) = net.row_action(n, &q[n]);
            for (a, b) in up.expect("interior").iter().zip(&q[n + 1]).chain(down.expect("interior").iter().zip(&q[n - 1])) {
                qm = qm.max((a - 0.5 * b).abs());
            }
        }
        for _ in 0..10 {
            let f: Vec<Vec<f64>> = net.level_sizes().iter().map(|&s| (0..s).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let e = energy(&net, &f).map_err(|e| e.to_string())?;
            rel = rel.max((e.direct - e.operator).abs() / e.direct.abs().max(f64::MIN_POSITIVE));
        }
    }
    let d = Diagram::stationary(all_ones(), 10).map_err(|e| e.to_string())?;
    let net = WeightedNetwork::new(
        dual_kernels(&MarkovSystem::uniform(d, vec![0.5, 0.5]).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?,
        Boundary::Reflect,
    )
    .map_err(|e| e.to_string())?;
    let constant = harmonic_residual(&net, &net.constant(1.0)).map_err(|e| e.to_string())?;
    let sol = solve_harmonic(&net, &[0.0, 0.0], &[1.0, 1.0], &HarmonicOptions { tol: 1e-8, ..Default::default() })
        .map_err(|e| e.to_string())?;
    ensure(qm < 1e-12, format!("qM identity {qm:e}"))?;
    ensure(constant == 0.0, format!("constant residual {constant:e}"))?;
    ensure(rel < 1e-10, format!("energy forms differ by {rel:e}"))?;
    ensure(sol.residual < 1e-8 && sol.iterations < 10_000, format!("harmonic solve residual {:e} after {}", sol.residual, sol.iterations))?;
    Ok(format!(
        "qM {qm:.1e}, constants {constant:e}, energy {rel:.1e} over 100 functions, harmonic residual {:.1e} in {} iterations",
        sol.residual, sol.iterations
    ))
}

fn monte_carlo() -> Outcome {
    let d = Diagram::stationary(IncidenceMatrix::from_dense(&[vec![2, 1], vec![1, 1]]), 6).map_err(|e| e.to_string())?;
    let sys = MarkovSystem::from_weights(d, vec![0.3, 0.7], |e| 1.0 + e.source as f64 + 2.0 * e.target as f64 + e.rank as f64)
        .map_err(|e| e.to_string())?;
    let net = WeightedNetwork::new(dual_kernels(&sys).map_err(|e| e.to_string())?, Boundary::Reflect).map_err(|e| e.to_string())?;
    let (bottom, top) = ([0.0, 1.0], [2.0, -1.0]);
    let sol = solve_harmonic(&net, &bottom, &top, &HarmonicOptions { tol: 1e-13, max_iter: 100_000, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for v in 0..2 {
        let est = hitting_estimate(&net, (3, v), &bottom, &top, 100_000, 7).map_err(|e| e.to_string())?;
        let z = (est.mean - sol.f[3][v]).abs() / est.standard_error;
        ensure(z <= 3.0, format!("vertex {v}: estimate {} vs {} ({z:.2} SE)", est.mean, sol.f[3][v]))?;
        worst = worst.max(z);
    }
    Ok(format!("10^5 walks from level 3, worst deviation {worst:.2} SE"))
}

fn measurable_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for _ in 0..10 {
        let (m1, m2) = (rng.gen_range(2..=8), rng.gen_range(2..=8));
        let nu1 = gen::random_rational_probability(&mut rng, m1);
        let p = gen::random_rational_stochastic(&mut rng, m1, m2);
        let pair = dual_kernel(&nu1, &p).map_err(|e| e.to_string())?;
        let (a, b) = duality_defects(&pair);
        ensure(a.iter().chain(&b).all(Zero::is_zero), "rational duality defect")?;
        ensure(pair.rho.row_sums() == pair.nu1 && pair.rho.col_sums() == pair.nu2, "rational marginals")?;
        let (l1, l2) = symmetric_measures(&pair);
        ensure(l1.is_symmetric() && l2.is_symmetric(), "λ₁ or λ₂ not symmetric")?;
    }
    let mut min_eig = f64::INFINITY;
    for _ in 0..20 {
        let (m1, m2) = (rng.gen_range(3..=8), rng.gen_range(2..=8));
        let nu1 = gen::random_probability(&mut rng, m1);
        let p = gen::random_stochastic(&mut rng, m1, m2, 0.3);
        let (l1, _) = symmetric_measures(&dual_kernel(&nu1, &p).map_err(|e| e.to_string())?);
        let sets: Vec<Vec<usize>> = (0..rng.gen_range(2..=6))
            .map(|_| (0..m1).filter(|_| rng.gen_bool(0.5)).collect())
            .collect();
        min_eig = min_eig.min(rkhs_gram(&l1, &sets).min_eigenvalue);
    }
    ensure(min_eig >= -1e-10, format!("Gram eigenvalue {min_eig:e}"))?;
    let mut fact: f64 = 0.0;
    for _ in 0..10 {
        let nu1 = gen::random_probability(&mut rng, 6);
        let r_hat = gen::random_factorizable(&mut rng, &nu1, 6);
        let base = factorize(&nu1, &r_hat, None, None, None).map_err(|e| e.to_string())?;
        let o1 = random_orthogonal(base.rank, &mut rng);
        let o2 = random_orthogonal(base.rank, &mut rng);
        let nu2 = gen::random_probability(&mut rng, base.rank);
        let rot = factorize(&nu1, &r_hat, Some(&nu2), Some(&o1), Some(&o2)).map_err(|e| e.to_string())?;
        fact = fact.max(base.residual).max(rot.residual);
    }
    ensure(fact < 1e-10, format!("factorization residual {fact:e}"))?;
    let kernels = (0..3).map(|_| gen::random_stochastic(&mut rng, 3, 3, 0.2)).collect();
    let chain = KernelChain::new(vec![1.0 / 3.0; 3], kernels).map_err(|e| e.to_string())?;
    let exact = chain.cylinder_probabilities(0, 3);
    let trials = 100_000;
    let emp = chain.sample_paths(0, 3, trials, 809);
    let mut worst: f64 = 0.0;
    for (path, p) in &exact {
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        let z = (emp.get(path).copied().unwrap_or(0.0) - p).abs() / sigma;
        ensure(z <= 3.0, format!("cylinder {path:?} off by {z:.2}σ"))?;
        worst = worst.max(z);
    }
    Ok(format!(
        "rational identities exact, Gram min eigenvalue {min_eig:.1e}, factorization {fact:.1e}, sampler worst {worst:.2}σ over {} cylinders",
        exact.len()
    ))
}

fn odometer() -> Outcome {
    let d = Diagram::stationary(IncidenceMatrix::from_dense(&[vec![2]]), 10).map_err(|e| e.to_string())?.with_natural_order();
    let mut seen: HashSet<FinitePath> = HashSet::new();
    let mut p = d.minimal_path_to(10, 0).map_err(|e| e.to_string())?;
    loop {
        ensure(seen.insert(p.clone()), "path visited twice")?;
        match d.vershik_successor(&p).map_err(|e| e.to_string())? {
            Successor::Next(q) => p = q,
            Successor::Maximal => break,
        }
    }
    ensure(seen.len() == 1024 && d.is_maximal(&p).map_err(|e| e.to_string())?, format!("visited {}", seen.len()))?;
    Ok("1024 distinct paths, ending at the maximal path".into())
}

fn ers_constraint() -> Outcome {
    let r = [2u64, 3, 2];
    let mats = vec![
        IncidenceMatrix::from_dense(&[vec![1, 1], vec![2, 0], vec![0, 2]]),
        IncidenceMatrix::from_dense(&[vec![1, 1, 1], vec![0, 2, 1]]),
        IncidenceMatrix::from_dense(&[vec![1, 1], vec![2, 0], vec![0, 2]]),
    ];
    for (f, &x) in mats.iter().zip(&r) {
        ensure(f.row_sums().iter().all(|&s| s == x), "constructed matrix is not ERS")?;
    }
    let d = Diagram::new(mats).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let anchor = gen::random_probability(&mut rng, d.level_size(3));
    let mu = solve_tail_invariant(&d, Some(anchor)).map_err(|e| e.to_string())?.normalized();
    let want = ers_level_masses(&r);
    let mut worst: f64 = 0.0;
    for (n, w) in want.iter().enumerate() {
        worst = worst.max((mu.levels[n + 1].iter().sum::<f64>() - w).abs());
    }
    ensure(worst < 1e-12, format!("level masses off by {worst:e}"))?;
    Ok(format!("level masses 1/2, 1/6, 1/12 within {worst:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 10] = [
        ("pf closed forms", pf_closed_forms, Some(Duration::from_secs(5))),
        ("tail invariance", tail_invariance, None),
        ("kolmogorov consistency", kolmogorov, None),
        ("dual kernel identities", dual_identities, None),
        ("operator suite", operator_suite, None),
        ("laplacian suite", laplacian_suite, None),
        ("monte carlo hitting", monte_carlo, Some(Duration::from_secs(30))),
        ("measurable discretization", measurable_suite, None),
        ("odometer", odometer, None),
        ("ers level masses", ers_constraint, None),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut out = run();
        let took = start.elapsed();
        if let (Ok(msg), Some(l)) = (&out, limit) {
            if took > *l {
                out = Err(format!("{msg}; took {took:.2?}, limit {l:?}"));
            }
        }
        match out {
            Ok(msg) => println!("[PASS] {:>2} {name} ({took:.2?}): {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("[FAIL] {:>2} {name} ({took:.2?}): {msg}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
