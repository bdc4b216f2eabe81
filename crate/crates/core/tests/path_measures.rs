use bratteli_core::diagram::{Diagram, FinitePath, IncidenceMatrix};
use bratteli_core::laplacian::{energy, exact_visit_rate, solve_harmonic, walk, Boundary, HarmonicOptions, WalkOptions, WeightedNetwork};
use bratteli_core::markov::{dual_kernels, markov_from_tail_invariant, stationary_markov, MarkovSystem};
use bratteli_core::measures::{hat_matrix, solve_tail_invariant, stationary_pf_measure, tower_masses};
use bratteli_core::perron::PfOptions;

fn ones(depth: usize) -> Diagram {
    Diagram::stationary(IncidenceMatrix::from_dense(&[vec![1, 1], vec![1, 1]]), depth).unwrap()
}

fn fibonacci(depth: usize) -> Diagram {
    Diagram::stationary(IncidenceMatrix::from_dense(&[vec![1, 1], vec![1, 0]]), depth).unwrap()
}

fn uniform_ones(depth: usize) -> MarkovSystem {
    MarkovSystem::uniform(ones(depth), vec![0.5, 0.5]).unwrap()
}

#[test]
fn uniform_cylinders() {
    let sys = uniform_ones(3);
    let paths = sys.diagram().enumerate_cylinders(2, 100).unwrap();
    assert_eq!(paths.len(), 8);
    assert!(paths.iter().all(|p| sys.cylinder_probability(p) == 0.125));
    assert_eq!(sys.cylinder_probability(&FinitePath::empty(1)), 0.5);
    for q in sys.propagate_q() {
        assert_eq!(q, vec![0.5, 0.5]);
    }
}

#[test]
fn odometer_cylinders_are_dyadic() {
    let d = Diagram::stationary(IncidenceMatrix::from_dense(&[vec![2]]), 6).unwrap();
    let sys = MarkovSystem::uniform(d, vec![1.0]).unwrap();
    for k in 0..=6 {
        for p in sys.diagram().enumerate_cylinders(k, 100).unwrap() {
            assert_eq!(sys.cylinder_probability(&p), 0.5f64.powi(k as i32));
        }
    }
}

#[test]
fn stationary_fibonacci_chain_matches_towers() {
    let d = fibonacci(6);
    let opts = PfOptions::default();
    let pm = stationary_pf_measure(&d, &opts).unwrap();
    let sys = stationary_markov(&d, &opts).unwrap();
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let t = &pm.spectral.t;
    for n in 0..6 {
        for w in 0..2 {
            for e in d.outgoing(n, w) {
                let want = t[e.target] / (phi * t[e.source]);
                assert!((sys.edge_probability(&e) - want).abs() < 1e-12);
            }
        }
    }
    let h = d.heights_f64();
    for (n, q) in sys.propagate_q().iter().enumerate() {
        for v in 0..2 {
            let want = h[n][v] * pm.measure.levels[n][v];
            assert!((q[v] - want).abs() < 1e-12 * want, "level {n}");
        }
    }
    let towers = tower_masses(&d, &pm.measure).unwrap();
    let sums: Vec<f64> = towers.s.iter().map(|l| l.iter().sum()).collect();
    assert!(sums.iter().all(|s| (s - sums[0]).abs() < 1e-12 * sums[0]));
}

#[test]
fn hat_kernels_of_tail_invariant_systems() {
    let d = fibonacci(5);
    let nu = solve_tail_invariant(&d, None).unwrap().normalized();
    let sys = markov_from_tail_invariant(&d, &nu).unwrap();
    let hk = dual_kernels(&sys).unwrap();
    for n in 0..5 {
        assert!(hk.q_hat[n].max_abs_diff(&hat_matrix(&d, n).to_f64()) < 1e-12);
    }
    let net = WeightedNetwork::new(hk, Boundary::Reflect).unwrap();
    let towers = tower_masses(&d, &nu).unwrap();
    for n in 1..5 {
        for v in 0..2 {
            assert!((net.vertex_mass()[n][v] - towers.s[n][v]).abs() < 1e-14);
        }
    }
}

#[test]
fn uniform_operators() {
    let hk = dual_kernels(&uniform_ones(3)).unwrap();
    for n in 0..3 {
        assert_eq!(hk.q_hat[n].to_dense(), vec![vec![0.5, 0.5]; 2]);
        assert_eq!(hk.compose_t(n).to_dense(), vec![vec![0.5, 0.5]; 2]);
        assert_eq!(hk.apply_tp(n, &[1.0, -1.0]), vec![0.0, 0.0]);
        assert_eq!(hk.apply_tp(n, &[1.0, 1.0]), vec![1.0, 1.0]);
    }
    let net = WeightedNetwork::new(hk, Boundary::Reflect).unwrap();
    for n in 0..3 {
        for v in 0..2 {
            for u in 0..2 {
                assert_eq!(net.conductance(n, v, u), 0.125);
            }
        }
    }
}

#[test]
fn deterministic_chain() {
    let swap = IncidenceMatrix::from_dense(&[vec![0, 1], vec![1, 0]]);
    let d = Diagram::stationary(swap, 3).unwrap();
    let sys = MarkovSystem::uniform(d, vec![0.25, 0.75]).unwrap();
    let hk = dual_kernels(&sys).unwrap();
    for n in 0..3 {
        assert_eq!(hk.q_hat[n].to_dense(), hk.p_hat[n].transpose().to_dense());
        assert_eq!(hk.compose_t(n).to_dense(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }
    let net = WeightedNetwork::new(hk, Boundary::Reflect).unwrap();
    assert_eq!(net.conductance(0, 0, 1), 0.5 * 0.25);
    assert_eq!(net.conductance(1, 0, 1), 0.5 * 0.75);
}

#[test]
fn harmonic_profile_is_linear() {
    let net = WeightedNetwork::new(dual_kernels(&uniform_ones(10)).unwrap(), Boundary::Reflect).unwrap();
    let sol = solve_harmonic(&net, &[0.0, 0.0], &[1.0, 1.0], &HarmonicOptions { tol: 1e-13, ..Default::default() }).unwrap();
    for (n, l) in sol.f.iter().enumerate() {
        assert!(l.iter().all(|x| (x - n as f64 / 10.0).abs() < 1e-11));
    }
    assert!(sol.max_principle_ok);
    let c = solve_harmonic(&net, &[1.0, 1.0], &[1.0, 1.0], &HarmonicOptions { tol: 1e-13, ..Default::default() }).unwrap();
    assert!(c.f.iter().flatten().all(|&x| (x - 1.0).abs() < 1e-10));
    let e = energy(&net, &net.constant(2.0)).unwrap();
    assert_eq!((e.direct, e.operator), (0.0, 0.0));
}

#[test]
fn return_frequency_matches_transfer_matrix() {
    let net = WeightedNetwork::new(dual_kernels(&uniform_ones(4)).unwrap(), Boundary::Reflect).unwrap();
    let opts = WalkOptions { steps: 1000, trials: 10_000, seed: 5 };
    let stats = walk(&net, (2, 0), &opts).unwrap();
    let exact = exact_visit_rate(&net, (2, 0), 1000).unwrap();
    assert!((stats.visit_rate - exact).abs() <= 3.0 * stats.visit_rate_se, "{} vs {exact}", stats.visit_rate);
    assert_eq!(walk(&net, (2, 0), &opts).unwrap().returns_per_trial, stats.returns_per_trial);
}
