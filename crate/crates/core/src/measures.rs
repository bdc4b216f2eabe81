//! Tail-invariant measures, hat matrices and tower masses.
//!
//! A measure is stored by its cylinder values `μ^(n)_v` (the mass of any
//! cylinder ending at `v ∈ V_n`). Tail invariance is the backward recursion
//! `A_n μ^(n+1) = μ^(n)` with `A_n = F_nᵀ`.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::diagram::{Diagram, Window};
use crate::linalg::{norm1, CsrMatrix};
use crate::perron::{pf_solve, pf_solve_matrix, PerronError, PfOptions, SpectralData, WindowedMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("level {level} has {got} entries, expected {want}")]
    ShapeMismatch { level: usize, got: usize, want: usize },
    #[error("negative or non-finite cylinder value at level {level}, vertex {vertex}")]
    InvalidEntry { level: usize, vertex: usize },
    #[error("diagram is not stationary")]
    NotStationary,
    #[error(transparent)]
    Perron(#[from] PerronError),
}

/// Cylinder values `μ^(n)_v` for `n = 0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureSequence {
    pub levels: Vec<Vec<f64>>,
}

impl MeasureSequence {
    pub fn new(levels: Vec<Vec<f64>>) -> Self {
        Self { levels }
    }

    pub fn level(&self, n: usize) -> &[f64] {
        &self.levels[n]
    }

    /// `μ(X_B) = Σ_{v ∈ V_0} μ^(0)_v`.
    pub fn total_mass(&self) -> f64 {
        self.levels[0].iter().sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { levels: self.levels.iter().map(|l| l.iter().map(|x| x * c).collect()).collect() }
    }

    /// Divided by the total mass.
    pub fn normalized(&self) -> Self {
        self.scaled(1.0 / self.total_mass())
    }

    fn check_shape(&self, d: &Diagram) -> Result<(), MeasureError> {
        if self.levels.len() != d.depth() + 1 {
            return Err(MeasureError::ShapeMismatch { level: self.levels.len(), got: 0, want: d.depth() + 1 });
        }
        for (n, l) in self.levels.iter().enumerate() {
            if l.len() != d.level_size(n) {
                return Err(MeasureError::ShapeMismatch { level: n, got: l.len(), want: d.level_size(n) });
            }
            if let Some(v) = l.iter().position(|x| !x.is_finite() || *x < 0.0) {
                return Err(MeasureError::InvalidEntry { level: n, vertex: v });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TailInvarianceReport {
    /// Relative ℓ¹ residual of `A_n μ^(n+1) = μ^(n)` for each `n < N`.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub passed: bool,
    pub zero_measure: bool,
    /// Vertices excluded because the window cut some of their outgoing edges.
    pub masked: usize,
}

/// Relative residuals of the tail-invariance recursion, ignoring masked vertices.
pub fn verify_tail_invariance(d: &Diagram, m: &MeasureSequence, tol: f64) -> Result<TailInvarianceReport, MeasureError> {
    m.check_shape(d)?;
    let mut residuals = Vec::with_capacity(d.depth());
    let mut masked = 0;
    for n in 0..d.depth() {
        let f = d.matrix(n);
        let am = f.to_f64().vec_mul(&m.levels[n + 1]);
        let mask = f.truncated_cols();
        masked += mask.iter().filter(|&&b| b).count();
        let keep = |w: &usize| !mask[*w];
        let num: f64 = (0..am.len()).filter(keep).map(|w| (am[w] - m.levels[n][w]).abs()).sum();
        let den: f64 = (0..am.len()).filter(keep).map(|w| m.levels[n][w].abs()).sum();
        residuals.push(num / den.max(f64::MIN_POSITIVE));
    }
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    let zero_measure = m.levels.iter().all(|l| l.iter().all(|&x| x == 0.0));
    Ok(TailInvarianceReport { passed: !zero_measure && max_residual <= tol, residuals, max_residual, zero_measure, masked })
}

/// Backward propagation `μ^(n) = A_n μ^(n+1)` from `μ^(N) = anchor` (uniform `1/|V_N|` by default).
pub fn solve_tail_invariant(d: &Diagram, anchor: Option<Vec<f64>>) -> Result<MeasureSequence, MeasureError> {
    let depth = d.depth();
    let top = anchor.unwrap_or_else(|| vec![1.0 / d.level_size(depth) as f64; d.level_size(depth)]);
    if top.len() != d.level_size(depth) {
        return Err(MeasureError::ShapeMismatch { level: depth, got: top.len(), want: d.level_size(depth) });
    }
    let mut levels = vec![top];
    for n in (0..depth).rev() {
        let next = d.matrix(n).to_f64().vec_mul(levels.last().expect("nonempty"));
        levels.push(next);
    }
    levels.reverse();
    let m = MeasureSequence::new(levels);
    m.check_shape(d)?;
    Ok(m)
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryMeasure {
    /// `μ^(n)_v = t_v / λ^n`, so that `μ^(0) = t`.
    pub measure: MeasureSequence,
    pub spectral: SpectralData,
    pub total_mass: f64,
}

/// Perron measure of a stationary diagram with `A = Fᵀ`.
pub fn stationary_pf_measure(d: &Diagram, opts: &PfOptions) -> Result<StationaryMeasure, MeasureError> {
    if !d.is_stationary() {
        return Err(MeasureError::NotStationary);
    }
    let f = d.matrix(0);
    let spectral = pf_solve_matrix(&f.transpose_f64(), f.col_window(), opts)?;
    let levels = (0..=d.depth())
        .map(|n| {
            let scale = spectral.lambda.powi(-(n as i32));
            spectral.t.iter().map(|x| x * scale).collect()
        })
        .collect();
    let measure = MeasureSequence::new(levels);
    let total_mass = measure.total_mass();
    Ok(StationaryMeasure { measure, spectral, total_mass })
}

#[derive(Debug, Clone, Serialize)]
pub struct MassTrend {
    /// `Σ t_v` per window with `t` anchored at the center.
    pub masses: Vec<(Window, f64)>,
    pub spectral: SpectralData,
    /// Relative change of the mass over the last two windows is below `1e-6`.
    pub normalizable: bool,
}

/// Tracks the total Perron mass over growing windows of `A`.
pub fn pf_mass_trend(family: &dyn WindowedMatrix, schedule: &[Window], opts: &PfOptions) -> Result<MassTrend, MeasureError> {
    let mut masses = Vec::new();
    for (k, &w) in schedule.iter().enumerate() {
        let s = pf_solve(family, &schedule[k..=k], opts)?;
        masses.push((w, s.t.iter().sum::<f64>()));
    }
    let spectral = pf_solve(family, schedule, opts)?;
    let normalizable = match masses.as_slice() {
        [.., (_, a), (_, b)] => ((b - a) / b).abs() < 1e-6,
        _ => true,
    };
    Ok(MassTrend { masses, spectral, normalizable })
}

/// Equal-row-sum / equal-column-sum structure of every `F_n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErsEcsClass {
    /// `r_n` such that every unmasked row of `F_n` sums to `r_n`.
    pub ers: Option<Vec<u64>>,
    /// `c_n` such that every unmasked column of `F_n` sums to `c_n`.
    pub ecs: Option<Vec<u64>>,
}

impl ErsEcsClass {
    pub fn label(&self) -> &'static str {
        match (&self.ers, &self.ecs) {
            (Some(_), Some(_)) => "both",
            (Some(_), None) => "ERS",
            (None, Some(_)) => "ECS",
            (None, None) => "neither",
        }
    }
}

fn common_value(sums: Vec<u64>, mask: &[bool]) -> Option<u64> {
    let mut it = sums.into_iter().zip(mask).filter(|(_, &m)| !m).map(|(s, _)| s);
    let first = it.next()?;
    it.all(|s| s == first).then_some(first)
}

pub fn ers_ecs_classify(d: &Diagram) -> ErsEcsClass {
    let ers = d
        .matrices()
        .iter()
        .map(|f| common_value(f.row_sums(), f.truncated_rows()))
        .collect();
    let ecs = d
        .matrices()
        .iter()
        .map(|f| common_value(f.col_sums(), f.truncated_cols()))
        .collect();
    ErsEcsClass { ers, ecs }
}

/// For an ERS probability measure: `Σ_v μ^(n+1)_v = (r_0⋯r_n)^{-1}`.
pub fn ers_level_masses(r: &[u64]) -> Vec<f64> {
    let mut p = 1.0;
    r.iter()
        .map(|&x| {
            p /= x as f64;
            p
        })
        .collect()
}

/// For ECS diagrams: the tail-invariant measure `μ^(n)_v = (c_0⋯c_{n-1})^{-1}`.
pub fn ecs_measure(d: &Diagram, c: &[u64]) -> MeasureSequence {
    let mut p = 1.0;
    let mut levels = vec![vec![1.0; d.level_size(0)]];
    for (n, &x) in c.iter().enumerate() {
        p /= x as f64;
        levels.push(vec![p; d.level_size(n + 1)]);
    }
    MeasureSequence::new(levels)
}

/// `F̂_n` with entries `f_vw H^(n)_w / H^(n+1)_v` in exact rationals.
#[derive(Debug, Clone, PartialEq)]
pub struct HatMatrix {
    pub ncols: usize,
    pub rows: Vec<Vec<(usize, BigRational)>>,
}

impl HatMatrix {
    pub fn row_sums(&self) -> Vec<BigRational> {
        self.rows
            .iter()
            .map(|r| r.iter().fold(BigRational::zero(), |a, (_, x)| a + x))
            .collect()
    }

    pub fn to_f64(&self) -> CsrMatrix {
        let rows = self
            .rows
            .iter()
            .map(|r| r.iter().map(|(j, x)| (*j, x.to_f64().unwrap_or(f64::NAN))).collect())
            .collect();
        CsrMatrix::from_rows(self.ncols, rows)
    }
}

fn big(x: &BigUint) -> BigInt {
    BigInt::from(x.clone())
}

pub fn hat_matrix(d: &Diagram, n: usize) -> HatMatrix {
    hat_matrix_with(d, n, &d.heights())
}

pub fn hat_matrix_with(d: &Diagram, n: usize, h: &[Vec<BigUint>]) -> HatMatrix {
    let f = d.matrix(n);
    let rows = (0..f.nrows())
        .map(|v| {
            f.row(v)
                .iter()
                .map(|&(w, m)| {
                    let num = big(&h[n][w]) * BigInt::from(m);
                    (w, BigRational::new(num, big(&h[n + 1][v])))
                })
                .collect()
        })
        .collect();
    HatMatrix { ncols: f.ncols(), rows }
}

/// Every hat matrix of the diagram.
pub fn hat_matrices(d: &Diagram) -> Vec<HatMatrix> {
    let h = d.heights();
    (0..d.depth()).map(|n| hat_matrix_with(d, n, &h)).collect()
}

pub fn rows_sum_to_one(h: &HatMatrix) -> bool {
    h.row_sums().iter().all(|s| s.is_one())
}

#[derive(Debug, Clone, Serialize)]
pub struct TowerMasses {
    /// `s^(n)_v = μ^(n)_v H^(n)_v`.
    pub s: Vec<Vec<f64>>,
    /// `‖s^(n+1) F̂_n − s^(n)‖₁ / ‖s^(n)‖₁`.
    pub recursion_residuals: Vec<f64>,
    pub level_sums: Vec<f64>,
}

pub fn tower_masses(d: &Diagram, m: &MeasureSequence) -> Result<TowerMasses, MeasureError> {
    m.check_shape(d)?;
    let h = d.heights_f64();
    let s: Vec<Vec<f64>> = m.levels.iter().zip(&h).map(|(mu, hh)| mu.iter().zip(hh).map(|(a, b)| a * b).collect()).collect();
    let recursion_residuals = hat_matrices(d)
        .iter()
        .enumerate()
        .map(|(n, fh)| {
            let lhs = fh.to_f64().vec_mul(&s[n + 1]);
            let diff: Vec<f64> = lhs.iter().zip(&s[n]).map(|(a, b)| a - b).collect();
            norm1(&diff) / norm1(&s[n]).max(f64::MIN_POSITIVE)
        })
        .collect();
    let level_sums = s.iter().map(|l| l.iter().sum()).collect();
    Ok(TowerMasses { s, recursion_residuals, level_sums })
}
