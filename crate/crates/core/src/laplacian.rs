//! Graph Laplacian of the level-graded network induced by a Markov measure.
//!
//! Vertices are all `(n, v)` with `v ∈ V_n`; an edge `v ~ u` between
//! consecutive levels carries conductance `½ q^(n)_v p̂_n(v,u)`. The random
//! walk `M` moves up with `½ P̂_n` and down with `½ Q̂_{n-1}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::CsrMatrix;
use crate::markov::{HatKernels, ZERO_MASS};

/// Largest relative asymmetry tolerated between the two conductance formulas.
pub const BALANCE_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LaplacianError {
    #[error("level {level}: conductance {v}-{u} differs by {diff:e} between directions")]
    BalanceViolation { level: usize, v: usize, u: usize, diff: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("network needs at least {need} levels of edges, has {have}")]
    TooShallow { need: usize, have: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Treatment of the first and last level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Level 0 moves up with `P̂_0`, level `N` moves down with `Q̂_{N-1}`.
    #[default]
    Reflect,
    /// Boundary vertices are absorbing.
    Absorb,
}

/// Functions on every level: `f[n][v]`.
pub type LevelFunction = Vec<Vec<f64>>;

#[derive(Debug, Clone)]
pub struct WeightedNetwork {
    hk: HatKernels,
    boundary: Boundary,
    /// `c_n(v)`: total conductance at each vertex.
    mass: LevelFunction,
}

impl WeightedNetwork {
    pub fn new(hk: HatKernels, boundary: Boundary) -> Result<Self, LaplacianError> {
        let depth = hk.depth();
        if depth == 0 {
            return Err(LaplacianError::TooShallow { need: 1, have: 0 });
        }
        let mut mass: LevelFunction = hk.q.iter().map(|l| vec![0.0; l.len()]).collect();
        for n in 0..depth {
            for (v, r) in hk.p_hat[n].rows().enumerate() {
                for &(u, p) in r {
                    let fwd = 0.5 * hk.q[n][v] * p;
                    let bwd = 0.5 * hk.q[n + 1][u] * hk.q_hat[n].get(u, v);
                    let diff = (fwd - bwd).abs() / fwd.abs().max(bwd.abs()).max(ZERO_MASS);
                    if diff > BALANCE_TOL {
                        return Err(LaplacianError::BalanceViolation { level: n, v, u, diff });
                    }
                    mass[n][v] += fwd;
                    mass[n + 1][u] += fwd;
                }
            }
        }
        Ok(Self { hk, boundary, mass })
    }

    pub fn kernels(&self) -> &HatKernels {
        &self.hk
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Index of the last level.
    pub fn top(&self) -> usize {
        self.hk.depth()
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.hk.q.iter().map(Vec::len).collect()
    }

    pub fn vertex_mass(&self) -> &LevelFunction {
        &self.mass
    }

    /// `c^(n)_{vu} = ½ q^(n)_v p̂_n(v, u)`.
    pub fn conductance(&self, n: usize, v: usize, u: usize) -> f64 {
        0.5 * self.hk.q[n][v] * self.hk.p_hat[n].get(v, u)
    }

    pub fn zeros(&self) -> LevelFunction {
        self.hk.q.iter().map(|l| vec![0.0; l.len()]).collect()
    }

    pub fn constant(&self, c: f64) -> LevelFunction {
        self.hk.q.iter().map(|l| vec![c; l.len()]).collect()
    }

    fn check(&self, f: &LevelFunction) -> Result<(), LaplacianError> {
        if f.len() != self.hk.q.len() || f.iter().zip(&self.hk.q).any(|(a, b)| a.len() != b.len()) {
            return Err(LaplacianError::Shape("function does not match the level sizes".into()));
        }
        Ok(())
    }

    /// `(Mf)` on level `n`.
    fn m_level(&self, f: &LevelFunction, n: usize) -> Vec<f64> {
        let top = self.top();
        let up = (n < top).then(|| self.hk.p_hat[n].mul_vec(&f[n + 1]));
        let down = (n > 0).then(|| self.hk.q_hat[n - 1].mul_vec(&f[n - 1]));
        match (up, down, self.boundary) {
            (Some(a), Some(b), _) => a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect(),
            (Some(a), None, Boundary::Reflect) | (None, Some(a), Boundary::Reflect) => a,
            (_, _, Boundary::Absorb) => f[n].clone(),
            (None, None, _) => unreachable!("network has at least one level of edges"),
        }
    }

    pub fn apply_m(&self, f: &LevelFunction) -> Result<LevelFunction, LaplacianError> {
        self.check(f)?;
        Ok((0..=self.top()).map(|n| self.m_level(f, n)).collect())
    }

    /// `(Δf)(v) = c(v) (f(v) − (Mf)(v))`.
    pub fn apply_delta(&self, f: &LevelFunction) -> Result<LevelFunction, LaplacianError> {
        let mf = self.apply_m(f)?;
        Ok(f.iter()
            .zip(&mf)
            .zip(&self.mass)
            .map(|((a, b), c)| a.iter().zip(b).zip(c).map(|((x, y), c)| c * (x - y)).collect())
            .collect())
    }

    /// Row vector `x` on level `n` pushed through `M`: `(x P̂_n / 2, x Q̂_{n-1} / 2)`
    /// on levels `n + 1` and `n − 1`.
    pub fn row_action(&self, n: usize, x: &[f64]) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
        let top = self.top();
        let interior = n > 0 && n < top;
        let w = if interior || self.boundary == Boundary::Reflect { if interior { 0.5 } else { 1.0 } } else { 0.0 };
        let up = (n < top).then(|| self.hk.p_hat[n].vec_mul(x).into_iter().map(|y| w * y).collect());
        let down = (n > 0).then(|| self.hk.q_hat[n - 1].vec_mul(x).into_iter().map(|y| w * y).collect());
        (up, down)
    }

    /// Transition matrix of `M` on the flattened vertex set.
    pub fn transition_matrix(&self) -> CsrMatrix {
        let offsets = self.offsets();
        let total = *offsets.last().expect("nonempty");
        let top = self.top();
        let mut rows = Vec::with_capacity(total);
        for n in 0..=top {
            let interior = n > 0 && n < top;
            let w = if interior { 0.5 } else { 1.0 };
            for v in 0..self.hk.q[n].len() {
                let mut r = Vec::new();
                if !interior && self.boundary == Boundary::Absorb {
                    r.push((offsets[n] + v, 1.0));
                } else {
                    if n < top {
                        r.extend(self.hk.p_hat[n].row(v).iter().map(|&(u, p)| (offsets[n + 1] + u, w * p)));
                    }
                    if n > 0 {
                        r.extend(self.hk.q_hat[n - 1].row(v).iter().map(|&(u, p)| (offsets[n - 1] + u, w * p)));
                    }
                }
                rows.push(r);
            }
        }
        CsrMatrix::from_rows(total, rows)
    }

    /// Start of each level in the flattened vertex order, plus the total.
    pub fn offsets(&self) -> Vec<usize> {
        let mut o = vec![0];
        for l in &self.hk.q {
            o.push(o.last().unwrap() + l.len());
        }
        o
    }

    pub fn flatten(&self, f: &LevelFunction) -> Vec<f64> {
        f.iter().flatten().copied().collect()
    }
}

/// `max |f − Mf|` over interior levels.
pub fn harmonic_residual(net: &WeightedNetwork, f: &LevelFunction) -> Result<f64, LaplacianError> {
    let mf = net.apply_m(f)?;
    Ok((1..net.top())
        .flat_map(|n| f[n].iter().zip(&mf[n]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoother {
    Jacobi { damping: f64 },
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicOptions {
    pub smoother: Smoother,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for HarmonicOptions {
    fn default() -> Self {
        Self { smoother: Smoother::Jacobi { damping: 0.9 }, tol: 1e-10, max_iter: 10_000 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HarmonicSolution {
    pub f: LevelFunction,
    pub iterations: usize,
    pub residual: f64,
    /// Interior values lie within the range of the boundary data.
    pub max_principle_ok: bool,
}

/// Harmonic extension of boundary data on levels `0` and `N` into the interior.
pub fn solve_harmonic(
    net: &WeightedNetwork,
    bottom: &[f64],
    top_values: &[f64],
    opts: &HarmonicOptions,
) -> Result<HarmonicSolution, LaplacianError> {
    let top = net.top();
    if top < 2 {
        return Err(LaplacianError::TooShallow { need: 2, have: top });
    }
    let sizes = net.level_sizes();
    if bottom.len() != sizes[0] || top_values.len() != sizes[top] {
        return Err(LaplacianError::Shape("boundary data does not match levels 0 and N".into()));
    }
    let mut f = net.zeros();
    f[0] = bottom.to_vec();
    f[top] = top_values.to_vec();
    let hk = net.kernels();
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        match opts.smoother {
            Smoother::Jacobi { damping } => {
                let next: Vec<Vec<f64>> = (1..top)
                    .map(|n| {
                        let up = hk.p_hat[n].mul_vec(&f[n + 1]);
                        let down = hk.q_hat[n - 1].mul_vec(&f[n - 1]);
                        f[n].iter()
                            .zip(up.iter().zip(&down))
                            .map(|(x, (a, b))| (1.0 - damping) * x + damping * 0.5 * (a + b))
                            .collect()
                    })
                    .collect();
                for (n, l) in next.into_iter().enumerate() {
                    f[n + 1] = l;
                }
            }
            Smoother::GaussSeidel => {
                for n in 1..top {
                    let up = hk.p_hat[n].mul_vec(&f[n + 1]);
                    let down = hk.q_hat[n - 1].mul_vec(&f[n - 1]);
                    f[n] = up.iter().zip(&down).map(|(a, b)| 0.5 * (a + b)).collect();
                }
            }
        }
        residual = harmonic_residual(net, &f)?;
        if residual < opts.tol {
            let lo = bottom.iter().chain(top_values).copied().fold(f64::INFINITY, f64::min);
            let hi = bottom.iter().chain(top_values).copied().fold(f64::NEG_INFINITY, f64::max);
            let slack = 1e-9 * (hi - lo).abs().max(1.0);
            let max_principle_ok = f[1..top].iter().flatten().all(|&x| x >= lo - slack && x <= hi + slack);
            return Ok(HarmonicSolution { f, iterations: it, residual, max_principle_ok });
        }
    }
    Err(LaplacianError::NoConvergence { iterations: opts.max_iter, residual })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyForms {
    /// `½ Σ_n Σ_{v,u} q^(n)_v p̂_n(v,u) (f_n(v) − f_{n+1}(u))²`.
    pub direct: f64,
    /// `½ Σ_n (‖f_n‖² − 2⟨f_n, P̂_n f_{n+1}⟩ + ‖f_{n+1}‖²)`.
    pub operator: f64,
    /// Per-level contributions to `direct`.
    pub per_level: Vec<f64>,
}

pub fn energy(net: &WeightedNetwork, f: &LevelFunction) -> Result<EnergyForms, LaplacianError> {
    net.check(f)?;
    let hk = net.kernels();
    let mut per_level = Vec::with_capacity(net.top());
    let mut operator = 0.0;
    for n in 0..net.top() {
        let mut e = 0.0;
        for (v, r) in hk.p_hat[n].rows().enumerate() {
            for &(u, p) in r {
                e += hk.q[n][v] * p * (f[n][v] - f[n + 1][u]).powi(2);
            }
        }
        per_level.push(0.5 * e);
        let pf = hk.apply_tp(n, &f[n + 1]);
        operator += 0.5 * (hk.norm_sq(n, &f[n]) - 2.0 * hk.inner(n, &f[n], &pf) + hk.norm_sq(n + 1, &f[n + 1]));
    }
    Ok(EnergyForms { direct: per_level.iter().sum(), operator, per_level })
}

/// Deterministic per-trial seed.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed ^ trial.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Cumulative transition tables for sampling.
struct Sampler {
    offsets: Vec<usize>,
    targets: Vec<Vec<usize>>,
    cumulative: Vec<Vec<f64>>,
}

impl Sampler {
    fn new(net: &WeightedNetwork) -> Self {
        let m = net.transition_matrix();
        let mut targets = Vec::with_capacity(m.nrows());
        let mut cumulative = Vec::with_capacity(m.nrows());
        for r in m.rows() {
            let mut acc = 0.0;
            targets.push(r.iter().map(|&(j, _)| j).collect());
            cumulative.push(r.iter().map(|&(_, p)| { acc += p; acc }).collect());
        }
        Self { offsets: net.offsets(), targets, cumulative }
    }

    fn step(&self, x: usize, rng: &mut ChaCha8Rng) -> usize {
        let c = &self.cumulative[x];
        let u: f64 = rng.gen::<f64>() * c.last().copied().unwrap_or(1.0);
        let k = c.partition_point(|&y| y <= u).min(c.len() - 1);
        self.targets[x][k]
    }

    fn level_of(&self, x: usize) -> usize {
        self.offsets.partition_point(|&o| o <= x) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkOptions {
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for WalkOptions {
    fn default() -> Self {
        Self { steps: 1000, trials: 10_000, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WalkStats {
    pub start: (usize, usize),
    /// Fraction of trials that came back to the start at least once.
    pub return_fraction: f64,
    /// Mean fraction of steps spent at the start.
    pub visit_rate: f64,
    /// Standard error of `visit_rate` across trials.
    pub visit_rate_se: f64,
    pub returns_per_trial: Vec<u32>,
}

/// Independent walks of `opts.steps` steps from `start = (level, vertex)`.
pub fn walk(net: &WeightedNetwork, start: (usize, usize), opts: &WalkOptions) -> Result<WalkStats, LaplacianError> {
    let sampler = Sampler::new(net);
    let x0 = flat_index(net, start)?;
    let returns_per_trial: Vec<u32> = (0..opts.trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(opts.seed, i));
            let mut x = x0;
            let mut hits = 0u32;
            for _ in 0..opts.steps {
                x = sampler.step(x, &mut rng);
                hits += u32::from(x == x0);
            }
            hits
        })
        .collect();
    let n = opts.trials.max(1) as f64;
    let rates: Vec<f64> = returns_per_trial.iter().map(|&h| h as f64 / opts.steps.max(1) as f64).collect();
    let visit_rate = rates.iter().sum::<f64>() / n;
    let var = rates.iter().map(|r| (r - visit_rate).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(WalkStats {
        start,
        return_fraction: returns_per_trial.iter().filter(|&&h| h > 0).count() as f64 / n,
        visit_rate,
        visit_rate_se: (var / n).sqrt(),
        returns_per_trial,
    })
}

fn flat_index(net: &WeightedNetwork, (n, v): (usize, usize)) -> Result<usize, LaplacianError> {
    let sizes = net.level_sizes();
    if n >= sizes.len() || v >= sizes[n] {
        return Err(LaplacianError::Shape(format!("no vertex ({n}, {v})")));
    }
    Ok(net.offsets()[n] + v)
}

/// `(1/steps) Σ_{t=1}^{steps} M^t(start, start)`.
pub fn exact_visit_rate(net: &WeightedNetwork, start: (usize, usize), steps: usize) -> Result<f64, LaplacianError> {
    let m = net.transition_matrix();
    let x0 = flat_index(net, start)?;
    let mut dist = vec![0.0; m.nrows()];
    dist[x0] = 1.0;
    let mut acc = 0.0;
    for _ in 0..steps {
        dist = m.vec_mul(&dist);
        acc += dist[x0];
    }
    Ok(acc / steps.max(1) as f64)
}

/// Probability of returning to `start` within `steps` steps.
pub fn exact_return_probability(net: &WeightedNetwork, start: (usize, usize), steps: usize) -> Result<f64, LaplacianError> {
    let m = net.transition_matrix();
    let x0 = flat_index(net, start)?;
    let mut dist = vec![0.0; m.nrows()];
    dist[x0] = 1.0;
    let mut returned = 0.0;
    for _ in 0..steps {
        dist = m.vec_mul(&dist);
        returned += dist[x0];
        dist[x0] = 0.0;
    }
    Ok(returned)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HittingEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub trials: usize,
}

/// Monte-Carlo estimate of `E[g(X_τ)]`, `τ` the first visit to level 0 or `N`,
/// with `g` given by the boundary data.
pub fn hitting_estimate(
    net: &WeightedNetwork,
    start: (usize, usize),
    bottom: &[f64],
    top_values: &[f64],
    trials: usize,
    seed: u64,
) -> Result<HittingEstimate, LaplacianError> {
    let sampler = Sampler::new(net);
    let x0 = flat_index(net, start)?;
    let top = net.top();
    let offsets = net.offsets();
    let values: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, i));
            let mut x = x0;
            loop {
                match sampler.level_of(x) {
                    0 => return bottom[x],
                    l if l == top => return top_values[x - offsets[top]],
                    _ => x = sampler.step(x, &mut rng),
                }
            }
        })
        .collect();
    let n = trials.max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(HittingEstimate { mean, standard_error: (var / n).sqrt(), trials })
}
