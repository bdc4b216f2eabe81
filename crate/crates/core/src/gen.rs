//! Seeded random instances for tests, benches and the CLI.

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;

use crate::diagram::{Diagram, IncidenceMatrix};
use crate::markov::{MarkovError, MarkovSystem};
use crate::measurable::Kernel;

/// Dense `rows × cols` matrix with entries in `0..=max_mult`, patched so no
/// row or column vanishes.
pub fn random_incidence(rng: &mut impl Rng, rows: usize, cols: usize, max_mult: u64) -> IncidenceMatrix {
    let mut m: Vec<Vec<u64>> = (0..rows)
        .map(|_| (0..cols).map(|_| if rng.gen_bool(0.5) { rng.gen_range(1..=max_mult) } else { 0 }).collect())
        .collect();
    for r in m.iter_mut() {
        if r.iter().all(|&x| x == 0) {
            r[rng.gen_range(0..cols)] = 1;
        }
    }
    for c in 0..cols {
        if m.iter().all(|r| r[c] == 0) {
            m[rng.gen_range(0..rows)][c] = 1;
        }
    }
    IncidenceMatrix::from_dense(&m)
}

/// Diagram of the given depth with `|V_n|` drawn from `sizes`.
pub fn random_diagram(
    rng: &mut impl Rng,
    depth: usize,
    sizes: std::ops::RangeInclusive<usize>,
    max_mult: u64,
) -> Diagram {
    let dims: Vec<usize> = (0..=depth).map(|_| rng.gen_range(sizes.clone())).collect();
    let mats = (0..depth).map(|n| random_incidence(rng, dims[n + 1], dims[n], max_mult)).collect();
    Diagram::new(mats).expect("patched matrices are valid").with_natural_order()
}

/// Strictly positive probability vector.
pub fn random_probability(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Markov system with independent positive edge weights.
pub fn random_markov(rng: &mut impl Rng, d: Diagram) -> Result<MarkovSystem, MarkovError> {
    let q0 = random_probability(rng, d.level_size(0));
    MarkovSystem::from_weights(d, q0, |_| rng.gen_range(0.1..1.0))
}

/// Row-stochastic `rows × cols` kernel; roughly `zero_frac` of entries vanish.
pub fn random_stochastic(rng: &mut impl Rng, rows: usize, cols: usize, zero_frac: f64) -> Kernel<f64> {
    let data = (0..rows)
        .map(|_| {
            let mut r: Vec<f64> = (0..cols).map(|_| if rng.gen_bool(zero_frac) { 0.0 } else { rng.gen_range(0.05..1.0) }).collect();
            if r.iter().all(|&x| x == 0.0) {
                r[rng.gen_range(0..cols)] = 1.0;
            }
            let s: f64 = r.iter().sum();
            r.into_iter().map(|x| x / s).collect()
        })
        .collect();
    Kernel::from_rows(data).expect("rectangular")
}

/// Row-stochastic kernel with rational entries of small denominator.
pub fn random_rational_stochastic(rng: &mut impl Rng, rows: usize, cols: usize) -> Kernel<BigRational> {
    let data = (0..rows)
        .map(|_| {
            let w: Vec<i64> = (0..cols).map(|_| rng.gen_range(0..6)).collect();
            let mut w = w;
            if w.iter().all(|&x| x == 0) {
                w[rng.gen_range(0..cols)] = 1;
            }
            let s: i64 = w.iter().sum();
            w.into_iter().map(|x| BigRational::new(BigInt::from(x), BigInt::from(s))).collect()
        })
        .collect();
    Kernel::from_rows(data).expect("rectangular")
}

/// Positive rational probability vector.
pub fn random_rational_probability(rng: &mut impl Rng, n: usize) -> Vec<BigRational> {
    let w: Vec<i64> = (0..n).map(|_| rng.gen_range(1..10)).collect();
    let s: i64 = w.iter().sum();
    w.into_iter().map(|x| BigRational::new(BigInt::from(x), BigInt::from(s))).collect()
}

/// `B Bᵀ` for a Gaussian-like `n × rank` matrix `B`.
pub fn random_psd(rng: &mut impl Rng, n: usize, rank: usize) -> Vec<Vec<f64>> {
    let b: Vec<Vec<f64>> = (0..n).map(|_| (0..rank).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    (0..n).map(|i| (0..n).map(|j| (0..rank).map(|k| b[i][k] * b[j][k]).sum()).collect()).collect()
}

/// `D₁⁻¹ S` for random PSD `S`, so that `D₁ R̂` is PSD.
pub fn random_factorizable(rng: &mut impl Rng, nu1: &[f64], rank: usize) -> Kernel<f64> {
    let s = random_psd(rng, nu1.len(), rank);
    let rows = s.iter().zip(nu1).map(|(r, w)| r.iter().map(|x| x / w).collect()).collect();
    Kernel::from_rows(rows).expect("square")
}
