//! Markov measures on path space and their dual kernels.
//!
//! A [`MarkovSystem`] attaches an initial distribution `q0` on `V_0` and a
//! probability to every edge, stochastic over each `s⁻¹(v)`. Aggregating
//! over parallel edges gives the forward matrices `P̂_n`; Bayes reversal
//! against the level distributions `q^(n)` gives the backward `Q̂_n`.

use serde::Serialize;
use thiserror::Error;

use crate::diagram::{Diagram, DiagramError, Edge, FinitePath, DEFAULT_PATH_CAP};
use crate::linalg::{max_abs_diff, norm1, norm_inf, weighted_dot, CsrMatrix};
use crate::measures::{stationary_pf_measure, MeasureError, MeasureSequence};
use crate::perron::PfOptions;

/// Level masses below this are treated as zero.
pub const ZERO_MASS: f64 = 1e-300;

/// Tolerance on `Σ_{e ∈ s⁻¹(v)} p_e = 1`.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("level {level}, vertex {vertex}: outgoing probabilities sum to {sum}")]
    StochasticityViolation { level: usize, vertex: usize, sum: f64 },
    #[error("level {level}, vertex {vertex}: invalid probability {value}")]
    InvalidProbability { level: usize, vertex: usize, value: f64 },
    #[error("level {level}: vertex {vertex} has zero mass")]
    ZeroMass { level: usize, vertex: usize },
    #[error("level {level}: vertex {vertex} has zero measure")]
    ZeroMeasureVertex { level: usize, vertex: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Probabilities of the parallel edges `w → v`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EdgeWeights {
    /// Every one of `multiplicity` edges carries `p`.
    Shared { p: f64, multiplicity: u64 },
    PerRank(Vec<f64>),
}

impl EdgeWeights {
    pub fn total(&self) -> f64 {
        match self {
            Self::Shared { p, multiplicity } => p * *multiplicity as f64,
            Self::PerRank(v) => v.iter().sum(),
        }
    }

    pub fn get(&self, rank: u32) -> f64 {
        match self {
            Self::Shared { p, .. } => *p,
            Self::PerRank(v) => v[rank as usize],
        }
    }

    pub fn multiplicity(&self) -> u64 {
        match self {
            Self::Shared { multiplicity, .. } => *multiplicity,
            Self::PerRank(v) => v.len() as u64,
        }
    }

    fn values(&self) -> Vec<f64> {
        (0..self.multiplicity() as u32).map(|r| self.get(r)).collect()
    }
}

/// `out[v]` lists `(target, weights)` for each target of `v ∈ V_n`, sorted by target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionLevel {
    pub out: Vec<Vec<(usize, EdgeWeights)>>,
}

#[derive(Debug, Clone)]
pub struct MarkovSystem {
    diagram: Diagram,
    q0: Vec<f64>,
    levels: Vec<TransitionLevel>,
}

impl MarkovSystem {
    pub fn new(diagram: Diagram, q0: Vec<f64>, levels: Vec<TransitionLevel>) -> Result<Self, MarkovError> {
        let s = Self { diagram, q0, levels };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), MarkovError> {
        let d = &self.diagram;
        if self.q0.len() != d.level_size(0) {
            return Err(MarkovError::Shape(format!("q0 has {} entries, V_0 has {}", self.q0.len(), d.level_size(0))));
        }
        if let Some(v) = self.q0.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(MarkovError::ZeroMass { level: 0, vertex: v });
        }
        if self.levels.len() != d.depth() {
            return Err(MarkovError::Shape(format!("{} transition levels for depth {}", self.levels.len(), d.depth())));
        }
        for (n, lvl) in self.levels.iter().enumerate() {
            let f = d.matrix(n);
            if lvl.out.len() != f.ncols() {
                return Err(MarkovError::Shape(format!("level {n}: {} sources, expected {}", lvl.out.len(), f.ncols())));
            }
            for (v, outs) in lvl.out.iter().enumerate() {
                let mut sum = 0.0;
                for (u, w) in outs {
                    if *u >= f.nrows() || w.multiplicity() != f.get(*u, v) {
                        return Err(MarkovError::Shape(format!("level {n}: edge set {v} -> {u} does not match the diagram")));
                    }
                    for p in w.values() {
                        if !(p >= 0.0 && p.is_finite()) {
                            return Err(MarkovError::InvalidProbability { level: n, vertex: v, value: p });
                        }
                    }
                    sum += w.total();
                }
                let expected_targets = d.outgoing(n, v).len() as u64;
                let got: u64 = outs.iter().map(|(_, w)| w.multiplicity()).sum();
                if got != expected_targets {
                    return Err(MarkovError::Shape(format!("level {n}: vertex {v} misses outgoing edges")));
                }
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(MarkovError::StochasticityViolation { level: n, vertex: v, sum });
                }
            }
        }
        Ok(())
    }

    /// Edge weights from `weight(edge)`, normalized over each `s⁻¹(v)`.
    pub fn from_weights(diagram: Diagram, q0: Vec<f64>, mut weight: impl FnMut(&Edge) -> f64) -> Result<Self, MarkovError> {
        let mut levels = Vec::with_capacity(diagram.depth());
        for n in 0..diagram.depth() {
            let f = diagram.matrix(n);
            let cols = f.columns();
            let out = cols
                .iter()
                .enumerate()
                .map(|(v, targets)| {
                    let raw: Vec<(usize, Vec<f64>)> = targets
                        .iter()
                        .map(|&(u, m)| {
                            let ws = (0..m as u32)
                                .map(|rank| weight(&Edge { level: n, source: v, target: u, rank }))
                                .collect();
                            (u, ws)
                        })
                        .collect();
                    let total: f64 = raw.iter().flat_map(|(_, w)| w.iter()).sum();
                    raw.into_iter()
                        .map(|(u, w)| (u, EdgeWeights::PerRank(w.into_iter().map(|x| x / total).collect())))
                        .collect()
                })
                .collect();
            levels.push(TransitionLevel { out });
        }
        Self::new(diagram, q0, levels)
    }

    /// Equal probability on every outgoing edge.
    pub fn uniform(diagram: Diagram, q0: Vec<f64>) -> Result<Self, MarkovError> {
        Self::from_weights(diagram, q0, |_| 1.0)
    }

    pub fn diagram(&self) -> &Diagram {
        &self.diagram
    }

    pub fn q0(&self) -> &[f64] {
        &self.q0
    }

    pub fn levels(&self) -> &[TransitionLevel] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.diagram.depth()
    }

    pub fn weights(&self, n: usize, v: usize, u: usize) -> Option<&EdgeWeights> {
        let outs = &self.levels[n].out[v];
        outs.binary_search_by_key(&u, |(t, _)| *t).ok().map(|i| &outs[i].1)
    }

    pub fn edge_probability(&self, e: &Edge) -> f64 {
        self.weights(e.level, e.source, e.target).map_or(0.0, |w| w.get(e.rank))
    }

    /// `p̂_n(v, u) = Σ_{e ∈ E(v,u)} p_e`, shape `|V_n| × |V_{n+1}|`.
    pub fn p_hat(&self, n: usize) -> CsrMatrix {
        let rows = self.levels[n]
            .out
            .iter()
            .map(|outs| outs.iter().map(|(u, w)| (*u, w.total())).collect())
            .collect();
        CsrMatrix::from_rows(self.diagram.level_size(n + 1), rows)
    }

    /// `q0 · Π p_e` along the path.
    pub fn cylinder_probability(&self, p: &FinitePath) -> f64 {
        p.edges.iter().fold(self.q0[p.origin], |m, e| m * self.edge_probability(e))
    }

    /// `q^(0) = q0`, `q^(n+1) = q^(n) P̂_n`.
    pub fn propagate_q(&self) -> Vec<Vec<f64>> {
        let mut q = vec![self.q0.clone()];
        for n in 0..self.depth() {
            let next = self.p_hat(n).vec_mul(q.last().expect("nonempty"));
            q.push(next);
        }
        q
    }
}

/// Worst relative defect of `m([p]) = Σ_{e ∈ s⁻¹(end)} m([p e])` over cylinders
/// ending at levels `< depth`.
pub fn kolmogorov_residual(sys: &MarkovSystem, cap: usize) -> Result<f64, MarkovError> {
    let d = sys.diagram();
    let mut worst: f64 = 0.0;
    for level in 0..d.depth() {
        for p in d.enumerate_cylinders(level, cap)? {
            let (_, end) = p.end();
            let mass = sys.cylinder_probability(&p);
            let ext: f64 = d.outgoing(level, end).into_iter().map(|e| sys.cylinder_probability(&p.extended(e))).sum();
            worst = worst.max((ext - mass).abs() / mass.max(ZERO_MASS));
        }
    }
    Ok(worst)
}

/// Level distributions and the aggregated forward and backward kernels.
#[derive(Debug, Clone, Serialize)]
pub struct HatKernels {
    /// `q^(n)` for `n = 0..=N`.
    pub q: Vec<Vec<f64>>,
    /// `P̂_n`, shape `|V_n| × |V_{n+1}|`.
    pub p_hat: Vec<CsrMatrix>,
    /// `Q̂_n`, shape `|V_{n+1}| × |V_n|`.
    pub q_hat: Vec<CsrMatrix>,
}

impl HatKernels {
    /// Builds `Q̂_n(u, v) = q^(n)_v P̂_n(v, u) / q^(n+1)_u` from `q` and `P̂`.
    pub fn from_forward(q: Vec<Vec<f64>>, p_hat: Vec<CsrMatrix>) -> Result<Self, MarkovError> {
        if q.len() != p_hat.len() + 1 {
            return Err(MarkovError::Shape(format!("{} level distributions for {} kernels", q.len(), p_hat.len())));
        }
        let mut q_hat = Vec::with_capacity(p_hat.len());
        for (n, p) in p_hat.iter().enumerate() {
            if p.nrows() != q[n].len() || p.ncols() != q[n + 1].len() {
                return Err(MarkovError::Shape(format!("level {n}: kernel shape does not match masses")));
            }
            let mut rows = vec![Vec::new(); p.ncols()];
            for (v, r) in p.rows().enumerate() {
                for &(u, x) in r {
                    let qu = q[n + 1][u];
                    if qu < ZERO_MASS {
                        return Err(MarkovError::ZeroMass { level: n + 1, vertex: u });
                    }
                    rows[u].push((v, q[n][v] * x / qu));
                }
            }
            q_hat.push(CsrMatrix::from_rows(p.nrows(), rows));
        }
        Ok(Self { q, p_hat, q_hat })
    }

    pub fn depth(&self) -> usize {
        self.p_hat.len()
    }

    /// `(T_P f)(v) = Σ_u P̂_n(v,u) f(u)`, from `V_{n+1}` to `V_n`.
    pub fn apply_tp(&self, n: usize, f: &[f64]) -> Vec<f64> {
        self.p_hat[n].mul_vec(f)
    }

    /// `(T_Q g)(u) = Σ_v Q̂_n(u,v) g(v)`, from `V_n` to `V_{n+1}`.
    pub fn apply_tq(&self, n: usize, g: &[f64]) -> Vec<f64> {
        self.q_hat[n].mul_vec(g)
    }

    /// `T̂_n = P̂_n Q̂_n` on `V_n`.
    pub fn compose_t(&self, n: usize) -> CsrMatrix {
        self.p_hat[n].matmul(&self.q_hat[n])
    }

    /// `⟨f, g⟩` in `L²(q^(n))`.
    pub fn inner(&self, n: usize, f: &[f64], g: &[f64]) -> f64 {
        weighted_dot(&self.q[n], f, g)
    }

    pub fn norm_sq(&self, n: usize, f: &[f64]) -> f64 {
        self.inner(n, f, f)
    }
}

/// Dual kernels of a Markov system.
pub fn dual_kernels(sys: &MarkovSystem) -> Result<HatKernels, MarkovError> {
    let q = sys.propagate_q();
    let p_hat = (0..sys.depth()).map(|n| sys.p_hat(n)).collect();
    HatKernels::from_forward(q, p_hat)
}

/// How `q̂_n(u, v)` is shared among the parallel edges `E(v, u)`.
pub trait SplitPolicy {
    fn split(&self, sys: &MarkovSystem, n: usize, v: usize, u: usize, total: f64) -> Vec<f64>;
}

/// Equal shares.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformSplit;

impl SplitPolicy for UniformSplit {
    fn split(&self, sys: &MarkovSystem, n: usize, v: usize, u: usize, total: f64) -> Vec<f64> {
        let m = sys.diagram().matrix(n).get(u, v);
        vec![total / m as f64; m as usize]
    }
}

/// Shares proportional to the forward edge probabilities.
#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardProportionalSplit;

impl SplitPolicy for ForwardProportionalSplit {
    fn split(&self, sys: &MarkovSystem, n: usize, v: usize, u: usize, total: f64) -> Vec<f64> {
        let w = sys.weights(n, v, u).map(EdgeWeights::values).unwrap_or_default();
        let s: f64 = w.iter().sum();
        if s <= 0.0 {
            return UniformSplit.split(sys, n, v, u, total);
        }
        w.into_iter().map(|x| total * x / s).collect()
    }
}

/// Backward probability of a single edge.
pub fn edge_dual(sys: &MarkovSystem, hk: &HatKernels, e: &Edge, policy: &dyn SplitPolicy) -> f64 {
    let total = hk.q_hat[e.level].get(e.target, e.source);
    policy.split(sys, e.level, e.source, e.target, total)[e.rank as usize]
}

/// Residuals of the identities linking `q`, `P̂` and `Q̂`.
#[derive(Debug, Clone, Serialize)]
pub struct DualReport {
    /// `max_n ‖q^(n) P̂_n − q^(n+1)‖₁ / ‖q^(n+1)‖₁`.
    pub forward_propagation: f64,
    /// `max_n ‖q^(n+1) Q̂_n − q^(n)‖₁ / ‖q^(n)‖₁`.
    pub backward_propagation: f64,
    /// `max |q^(n)_v p̂(v,u) − q^(n+1)_u q̂(u,v)|` relative to the larger side.
    pub detailed_balance: f64,
    /// `max |Σ_v q̂(u,v) − 1|`.
    pub q_hat_stochastic: f64,
}

pub fn check_dual_identities(hk: &HatKernels) -> DualReport {
    let mut fwd: f64 = 0.0;
    let mut bwd: f64 = 0.0;
    let mut bal: f64 = 0.0;
    let mut stoch: f64 = 0.0;
    for n in 0..hk.depth() {
        let a = hk.p_hat[n].vec_mul(&hk.q[n]);
        fwd = fwd.max(rel_l1(&a, &hk.q[n + 1]));
        let b = hk.q_hat[n].vec_mul(&hk.q[n + 1]);
        bwd = bwd.max(rel_l1(&b, &hk.q[n]));
        for (v, r) in hk.p_hat[n].rows().enumerate() {
            for &(u, p) in r {
                let lhs = hk.q[n][v] * p;
                let rhs = hk.q[n + 1][u] * hk.q_hat[n].get(u, v);
                bal = bal.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(ZERO_MASS));
            }
        }
        for s in hk.q_hat[n].row_sums() {
            stoch = stoch.max((s - 1.0).abs());
        }
    }
    DualReport { forward_propagation: fwd, backward_propagation: bwd, detailed_balance: bal, q_hat_stochastic: stoch }
}

fn rel_l1(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm1(&diff) / norm1(b).max(ZERO_MASS)
}

/// Operator-level checks for one pair of test functions at level `n`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OperatorReport {
    /// `|⟨T_P f, g⟩_n − ⟨f, T_Q g⟩_{n+1}|` over `‖f‖ ‖g‖`.
    pub adjointness: f64,
    /// `(‖T_P f‖²_n − ‖f‖²_{n+1}) / ‖f‖²_{n+1}`; non-positive when contractive.
    pub contractivity_slack: f64,
    /// `‖q^(n) T̂_n − q^(n)‖∞ / ‖q^(n)‖∞`.
    pub stationarity: f64,
    /// `max_v |Σ_w T̂_n(v, w) − 1|`.
    pub t_hat_stochastic: f64,
}

pub fn check_operators(hk: &HatKernels, n: usize, f: &[f64], g: &[f64]) -> OperatorReport {
    let tpf = hk.apply_tp(n, f);
    let tqg = hk.apply_tq(n, g);
    let nf = hk.norm_sq(n + 1, f);
    let ng = hk.norm_sq(n, g);
    let adjointness = (hk.inner(n, &tpf, g) - hk.inner(n + 1, f, &tqg)).abs() / (nf * ng).sqrt().max(ZERO_MASS);
    let contractivity_slack = (hk.norm_sq(n, &tpf) - nf) / nf.max(ZERO_MASS);
    let t = hk.compose_t(n);
    let qt = t.vec_mul(&hk.q[n]);
    let stationarity = max_abs_diff(&qt, &hk.q[n]) / norm_inf(&hk.q[n]).max(ZERO_MASS);
    let t_hat_stochastic = t.row_sums().iter().fold(0.0_f64, |m, s| m.max((s - 1.0).abs()));
    OperatorReport { adjointness, contractivity_slack, stationarity, t_hat_stochastic }
}

/// `q0 = ν^(0)`, `p_e = ν^(n+1)_{r(e)} / ν^(n)_{s(e)}`.
pub fn markov_from_tail_invariant(d: &Diagram, nu: &MeasureSequence) -> Result<MarkovSystem, MarkovError> {
    if nu.levels.len() != d.depth() + 1 {
        return Err(MarkovError::Shape(format!("measure has {} levels, diagram {}", nu.levels.len(), d.depth() + 1)));
    }
    for (n, l) in nu.levels.iter().enumerate() {
        if l.len() != d.level_size(n) {
            return Err(MarkovError::Shape(format!("measure level {n} has {} entries", l.len())));
        }
        if let Some(v) = l.iter().position(|&x| x <= 0.0 || x.is_nan()) {
            return Err(MarkovError::ZeroMeasureVertex { level: n, vertex: v });
        }
    }
    let levels = (0..d.depth())
        .map(|n| {
            let out = d
                .matrix(n)
                .columns()
                .iter()
                .enumerate()
                .map(|(v, targets)| {
                    targets
                        .iter()
                        .map(|&(u, m)| (u, EdgeWeights::Shared { p: nu.levels[n + 1][u] / nu.levels[n][v], multiplicity: m }))
                        .collect()
                })
                .collect();
            TransitionLevel { out }
        })
        .collect();
    MarkovSystem::new(d.clone(), nu.levels[0].clone(), levels)
}

/// Stationary Markov measure `p_e = t_{r(e)} / (λ t_{s(e)})` from the Perron data.
pub fn stationary_markov(d: &Diagram, opts: &PfOptions) -> Result<MarkovSystem, MarkovError> {
    let pm = stationary_pf_measure(d, opts)?;
    markov_from_tail_invariant(d, &pm.measure)
}

/// Cylinder probabilities for every path ending at `level`.
pub fn cylinder_table(sys: &MarkovSystem, level: usize) -> Result<Vec<(FinitePath, f64)>, MarkovError> {
    Ok(sys
        .diagram()
        .enumerate_cylinders(level, DEFAULT_PATH_CAP)?
        .into_iter()
        .map(|p| {
            let m = sys.cylinder_probability(&p);
            (p, m)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::IncidenceMatrix;
    use crate::measures::{hat_matrix, solve_tail_invariant};

    fn ones(depth: usize) -> Diagram {
        Diagram::stationary(IncidenceMatrix::from_dense(&[vec![1, 1], vec![1, 1]]), depth).unwrap()
    }

    fn multi() -> Diagram {
        let f0 = IncidenceMatrix::from_dense(&[vec![2, 1], vec![1, 0], vec![0, 3]]);
        let f1 = IncidenceMatrix::from_dense(&[vec![1, 1, 1], vec![0, 2, 1]]);
        Diagram::new(vec![f0, f1]).unwrap()
    }

    #[test]
    fn uniform_dyadic() {
        let sys = MarkovSystem::uniform(ones(3), vec![0.5, 0.5]).unwrap();
        let q = sys.propagate_q();
        assert!(q.iter().all(|l| l == &vec![0.5, 0.5]));
        let hk = dual_kernels(&sys).unwrap();
        assert_eq!(hk.q_hat[0].to_dense(), vec![vec![0.5, 0.5]; 2]);
        for (p, m) in cylinder_table(&sys, 3).unwrap() {
            assert_eq!(m, 0.5f64.powi(4), "{p:?}");
        }
    }

    #[test]
    fn empty_path_mass() {
        let sys = MarkovSystem::uniform(ones(2), vec![0.25, 0.75]).unwrap();
        assert_eq!(sys.cylinder_probability(&FinitePath::empty(1)), 0.75);
    }

    #[test]
    fn stochasticity_checked() {
        let sys = MarkovSystem::uniform(ones(1), vec![0.5, 0.5]).unwrap();
        let mut levels = sys.levels().to_vec();
        levels[0].out[0][0].1 = EdgeWeights::PerRank(vec![0.4]);
        let err = MarkovSystem::new(ones(1), vec![0.5, 0.5], levels).unwrap_err();
        assert!(matches!(err, MarkovError::StochasticityViolation { level: 0, vertex: 0, .. }));
    }

    #[test]
    fn kolmogorov_and_duals_on_multi_edges() {
        let mut k = 0.0;
        let sys = MarkovSystem::from_weights(multi(), vec![0.3, 0.7], |_| {
            k += 1.0;
            k
        })
        .unwrap();
        assert!(kolmogorov_residual(&sys, 1000).unwrap() < 1e-14);
        let hk = dual_kernels(&sys).unwrap();
        let r = check_dual_identities(&hk);
        assert!(r.forward_propagation < 1e-14 && r.backward_propagation < 1e-14);
        assert!(r.detailed_balance < 1e-14 && r.q_hat_stochastic < 1e-14);
        let e = Edge { level: 0, source: 1, target: 2, rank: 1 };
        let uni = edge_dual(&sys, &hk, &e, &UniformSplit);
        assert!((uni * 3.0 - hk.q_hat[0].get(2, 1)).abs() < 1e-15);
        let shares: f64 = (0..3)
            .map(|rank| edge_dual(&sys, &hk, &Edge { rank, ..e }, &ForwardProportionalSplit))
            .sum();
        assert!((shares - hk.q_hat[0].get(2, 1)).abs() < 1e-15);
    }

    #[test]
    fn tail_invariant_gives_hat_matrices() {
        let d = multi();
        let nu = solve_tail_invariant(&d, None).unwrap();
        let sys = markov_from_tail_invariant(&d, &nu).unwrap();
        let hk = dual_kernels(&sys).unwrap();
        let h = d.heights_f64();
        for n in 0..d.depth() {
            assert!(hk.q_hat[n].max_abs_diff(&hat_matrix(&d, n).to_f64()) < 1e-14);
            for (v, x) in hk.q[n].iter().enumerate() {
                assert!((x - h[n][v] * nu.levels[n][v]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn operators_contract() {
        let sys = MarkovSystem::from_weights(multi(), vec![0.3, 0.7], |e| 1.0 + e.rank as f64 + e.target as f64).unwrap();
        let hk = dual_kernels(&sys).unwrap();
        let r = check_operators(&hk, 0, &[1.0, -2.0, 0.5], &[3.0, 1.0]);
        assert!(r.adjointness < 1e-14);
        assert!(r.contractivity_slack <= 1e-14);
        assert!(r.stationarity < 1e-14 && r.t_hat_stochastic < 1e-14);
    }

    #[test]
    fn zero_measure_vertex_rejected() {
        let d = ones(1);
        let nu = MeasureSequence::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]);
        assert!(matches!(markov_from_tail_invariant(&d, &nu), Err(MarkovError::ZeroMeasureVertex { level: 0, vertex: 1 })));
    }

    #[test]
    fn stationary_fibonacci_chain() {
        let d = Diagram::stationary(IncidenceMatrix::from_dense(&[vec![1, 1], vec![1, 0]]), 3).unwrap();
        let sys = stationary_markov(&d, &PfOptions::default()).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let e = Edge { level: 0, source: 0, target: 0, rank: 0 };
        assert!((sys.edge_probability(&e) - 1.0 / phi).abs() < 1e-12);
    }
}
