//! Finite-cell discretization of measurable kernels and their duals.
//!
//! Measure spaces are replaced by finitely many cells with masses, and
//! kernels by non-negative matrices. Everything that is pure arithmetic is
//! generic over the scalar, so identities can be checked exactly with
//! [`BigRational`](num_rational::BigRational).

#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::fmt::Debug;

use nalgebra::{DMatrix, SymmetricEigen};
use num_traits::Num;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distributions::Distribution;
use serde::Serialize;
use thiserror::Error;

use crate::laplacian::{energy, Boundary, LaplacianError, LevelFunction, WeightedNetwork};
use crate::linalg::CsrMatrix;
use crate::markov::{HatKernels, MarkovError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("total mass of ρ is zero")]
    ZeroTotalMass,
    #[error("negative entry at ({0}, {1})")]
    Negative(usize, usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPSD(f64),
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    Laplacian(#[from] LaplacianError),
}

/// Scalars the exact routines run over (`f64`, `BigRational`, …).
pub trait Scalar: Num + Clone + PartialOrd + Debug {}
impl<T: Num + Clone + PartialOrd + Debug> Scalar for T {}

/// Dense row-major kernel between two cell spaces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Kernel<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Kernel<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self, KernelError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(KernelError::Shape("ragged kernel".into()));
        }
        let n = rows.len();
        Ok(Self { rows: n, cols, data: rows.into_iter().flatten().collect() })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, x: T) {
        self.data[i * self.cols + j] = x;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j).clone());
            }
        }
        t
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.rows).map(|i| sum(self.row(i).iter().cloned())).collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        (0..self.cols).map(|j| sum((0..self.rows).map(|i| self.get(i, j).clone()))).collect()
    }

    /// `x K`
    pub fn left_mul(&self, x: &[T]) -> Vec<T> {
        (0..self.cols)
            .map(|j| sum((0..self.rows).map(|i| x[i].clone() * self.get(i, j).clone())))
            .collect()
    }

    /// `K f`
    pub fn apply(&self, f: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|i| sum(self.row(i).iter().zip(f).map(|(a, b)| a.clone() * b.clone())))
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let v = sum((0..self.cols).map(|k| self.get(i, k).clone() * other.get(k, j).clone()));
                out.set(i, j, v);
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    fn check_nonnegative(&self) -> Result<(), KernelError> {
        for i in 0..self.rows {
            for j in 0..self.cols {
                if *self.get(i, j) < T::zero() {
                    return Err(KernelError::Negative(i, j));
                }
            }
        }
        Ok(())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Kernel<U> {
        Kernel { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }
}

impl Kernel<f64> {
    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_dense(&self.to_rows())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn sum<T: Scalar>(it: impl Iterator<Item = T>) -> T {
    it.fold(T::zero(), |a, b| a + b)
}

/// `(ν₁, P)` and its dual `(ν₂, Q)` sharing the joint measure `ρ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualPair<T> {
    /// `ρ(x, y) = ν₁(x) P(x, y)`.
    pub rho: Kernel<T>,
    /// `ν₁`, rescaled by the row sums of `P` when those are not all one.
    pub nu1: Vec<T>,
    /// `P` with rows normalized to probabilities where possible.
    pub p: Kernel<T>,
    /// `ν₂ = ν₁ P`.
    pub nu2: Vec<T>,
    /// `Q(y, x) = ρ(x, y) / ν₂(y)` on `ν₂`-positive cells, zero elsewhere.
    pub q: Kernel<T>,
}

/// Dual kernel of `(ν₁, P)`. Finite non-probability rows `c₁(x) = P(x, X₂)` are
/// absorbed into `ν₁` so that `ρ` is unchanged.
pub fn dual_kernel<T: Scalar>(nu1: &[T], p: &Kernel<T>) -> Result<DualPair<T>, KernelError> {
    let (m1, m2) = p.shape();
    if nu1.len() != m1 {
        return Err(KernelError::Shape(format!("ν₁ has {} cells, P has {m1} rows", nu1.len())));
    }
    p.check_nonnegative()?;
    if let Some(x) = nu1.iter().position(|v| *v < T::zero()) {
        return Err(KernelError::Negative(x, 0));
    }
    let mut rho = Kernel::zeros(m1, m2);
    for x in 0..m1 {
        for y in 0..m2 {
            rho.set(x, y, nu1[x].clone() * p.get(x, y).clone());
        }
    }
    let c1 = p.row_sums();
    let nu1n: Vec<T> = nu1.iter().zip(&c1).map(|(a, c)| a.clone() * c.clone()).collect();
    let mut pn = p.clone();
    for (x, c) in c1.iter().enumerate() {
        if !c.is_zero() && !c.is_one() {
            for y in 0..m2 {
                pn.set(x, y, p.get(x, y).clone() / c.clone());
            }
        }
    }
    let nu2 = rho.col_sums();
    if sum(nu2.iter().cloned()).is_zero() {
        return Err(KernelError::ZeroTotalMass);
    }
    let mut q = Kernel::zeros(m2, m1);
    for y in 0..m2 {
        if nu2[y] > T::zero() {
            for x in 0..m1 {
                q.set(y, x, rho.get(x, y).clone() / nu2[y].clone());
            }
        }
    }
    Ok(DualPair { rho, nu1: nu1n, p: pn, nu2, q })
}

/// `(ν₁P − ν₂, ν₂Q − ν₁)` entrywise.
pub fn duality_defects<T: Scalar>(pair: &DualPair<T>) -> (Vec<T>, Vec<T>) {
    let a = pair.p.left_mul(&pair.nu1).into_iter().zip(&pair.nu2).map(|(x, y)| x - y.clone()).collect();
    let b = pair.q.left_mul(&pair.nu2).into_iter().zip(&pair.nu1).map(|(x, y)| x - y.clone()).collect();
    (a, b)
}

/// Whether `(ν₁, ν₂)` belongs to `F(ρ)`, with the recovered kernels.
#[derive(Debug, Clone, Serialize)]
pub struct Membership<T> {
    pub in_family: bool,
    /// Cells where a marginal of `ρ` charges a `ν`-null cell.
    pub violations: Vec<String>,
    /// `P(x, y) = ρ(x, y) / ν₁(x)`.
    pub p: Kernel<T>,
    /// `Q(y, x) = ρ(x, y) / ν₂(y)`.
    pub q: Kernel<T>,
    /// `ν₁(x) P(x, y) − ν₂(y) Q(y, x)` vanishes on every cell.
    pub symmetric_joint: bool,
}

pub fn membership<T: Scalar>(rho: &Kernel<T>, nu1: &[T], nu2: &[T]) -> Result<Membership<T>, KernelError> {
    let (m1, m2) = rho.shape();
    if nu1.len() != m1 || nu2.len() != m2 {
        return Err(KernelError::Shape("marginal lengths do not match ρ".into()));
    }
    let r1 = rho.row_sums();
    let r2 = rho.col_sums();
    let mut violations = Vec::new();
    for x in 0..m1 {
        if r1[x] > T::zero() && nu1[x].is_zero() {
            violations.push(format!("π₁ρ charges ν₁-null cell {x}"));
        }
    }
    for y in 0..m2 {
        if r2[y] > T::zero() && nu2[y].is_zero() {
            violations.push(format!("π₂ρ charges ν₂-null cell {y}"));
        }
    }
    let mut p = Kernel::zeros(m1, m2);
    let mut q = Kernel::zeros(m2, m1);
    for x in 0..m1 {
        for y in 0..m2 {
            if !nu1[x].is_zero() {
                p.set(x, y, rho.get(x, y).clone() / nu1[x].clone());
            }
            if !nu2[y].is_zero() {
                q.set(y, x, rho.get(x, y).clone() / nu2[y].clone());
            }
        }
    }
    let symmetric_joint = (0..m1).all(|x| {
        (0..m2).all(|y| nu1[x].clone() * p.get(x, y).clone() == nu2[y].clone() * q.get(y, x).clone())
    });
    Ok(Membership { in_family: violations.is_empty(), violations, p, q, symmetric_joint })
}

/// `λ₁ = Qᵀ D₂ Q` on `X₁ × X₁` and `λ₂ = Pᵀ D₁ P` on `X₂ × X₂`.
pub fn symmetric_measures<T: Scalar>(pair: &DualPair<T>) -> (Kernel<T>, Kernel<T>) {
    let weighted = |k: &Kernel<T>, w: &[T]| {
        let mut out = k.clone();
        for i in 0..k.rows {
            for j in 0..k.cols {
                out.set(i, j, w[i].clone() * k.get(i, j).clone());
            }
        }
        out
    };
    let l1 = pair.q.transpose().matmul(&weighted(&pair.q, &pair.nu2));
    let l2 = pair.p.transpose().matmul(&weighted(&pair.p, &pair.nu1));
    (l1, l2)
}

#[derive(Debug, Clone, Serialize)]
pub struct GramReport {
    pub gram: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
}

/// `K(A_i, A_j) = λ₁(A_i × A_j)` for cell unions `A_i`.
pub fn rkhs_gram(lambda1: &Kernel<f64>, sets: &[Vec<usize>]) -> GramReport {
    let k = sets.len();
    let gram: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| sets[i].iter().flat_map(|&a| sets[j].iter().map(move |&b| (a, b))).map(|(a, b)| *lambda1.get(a, b)).sum())
                .collect()
        })
        .collect();
    let m = DMatrix::from_fn(k, k, |i, j| 0.5 * (gram[i][j] + gram[j][i]));
    let min_eigenvalue = if k == 0 { 0.0 } else { SymmetricEigen::new(m).eigenvalues.min() };
    GramReport { gram, min_eigenvalue }
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorizationReport {
    /// `P` on `X₁ × X₂` (signed in general).
    pub p: Kernel<f64>,
    /// `Q` on `X₂ × X₁`.
    pub q: Kernel<f64>,
    pub nu2: Vec<f64>,
    /// Eigenvalues of `D₁ R̂`, ascending.
    pub spectrum: Vec<f64>,
    pub rank: usize,
    /// `max |(T_P T_Q − R̂)(x, x')|`.
    pub residual: f64,
}

/// Factors `R̂` with `D₁ R̂` symmetric PSD as `T_P T_Q` through a cell space of
/// `rank` cells. `o1` and `o2` are optional `rank × rank` orthogonal matrices.
pub fn factorize(
    nu1: &[f64],
    r_hat: &Kernel<f64>,
    nu2: Option<&[f64]>,
    o1: Option<&DMatrix<f64>>,
    o2: Option<&DMatrix<f64>>,
) -> Result<FactorizationReport, KernelError> {
    let m1 = nu1.len();
    if r_hat.shape() != (m1, m1) {
        return Err(KernelError::Shape("R̂ must be square over X₁".into()));
    }
    let s = DMatrix::from_fn(m1, m1, |i, j| nu1[i] * r_hat.get(i, j));
    let scale = s.amax().max(f64::MIN_POSITIVE);
    let asym = (&s - s.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(KernelError::NotSymmetric(asym));
    }
    let eig = SymmetricEigen::new(0.5 * (&s + s.transpose()));
    let mut spectrum: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    spectrum.sort_by(f64::total_cmp);
    if spectrum.first().is_some_and(|&l| l < -1e-10 * scale) {
        return Err(KernelError::NotPSD(spectrum[0]));
    }
    let keep: Vec<usize> = (0..m1).filter(|&i| eig.eigenvalues[i] > 1e-12 * scale).collect();
    let r = keep.len();
    let mut k_hat = DMatrix::from_fn(m1, r, |x, n| eig.eigenvectors[(x, keep[n])] * eig.eigenvalues[keep[n]].sqrt());
    if let Some(o) = o1 {
        if o.shape() != (r, r) {
            return Err(KernelError::Shape(format!("O₁ must be {r} × {r}")));
        }
        k_hat *= o;
    }
    let nu2: Vec<f64> = match nu2 {
        Some(v) if v.len() == r => v.to_vec(),
        Some(v) => return Err(KernelError::Shape(format!("ν₂ has {} cells, rank is {r}", v.len()))),
        None => vec![1.0 / r.max(1) as f64; r],
    };
    if nu2.iter().any(|&x| x <= 0.0) {
        return Err(KernelError::Shape("ν₂ must be positive".into()));
    }
    let ident = DMatrix::identity(r, r);
    let o2 = o2.unwrap_or(&ident);
    if o2.shape() != (r, r) {
        return Err(KernelError::Shape(format!("O₂ must be {r} × {r}")));
    }
    let phi = DMatrix::from_fn(r, r, |y, n| o2[(y, n)] / nu2[y].sqrt());
    let qm = &phi * k_hat.transpose();
    let q = Kernel { rows: r, cols: m1, data: (0..r).flat_map(|y| (0..m1).map(move |x| (y, x))).map(|(y, x)| qm[(y, x)]).collect() };
    let mut p = Kernel::zeros(m1, r);
    for x in 0..m1 {
        for y in 0..r {
            p.set(x, y, nu2[y] * qm[(y, x)] / nu1[x]);
        }
    }
    let residual = p.matmul(&q).max_abs_diff(r_hat);
    Ok(FactorizationReport { p, q, nu2, spectrum, rank: r, residual })
}

/// Random `n × n` orthogonal matrix (QR of a Gaussian matrix).
pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let normal = rand::distributions::Uniform::new(-1.0, 1.0);
    let g = DMatrix::from_fn(n, n, |_, _| normal.sample(rng));
    g.qr().q()
}

/// Cell maps from a refinement back to the coarse partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Refinement {
    /// Coarse cell of each fine `X₁` cell.
    pub map1: Vec<usize>,
    /// Coarse cell of each fine `X₂` cell.
    pub map2: Vec<usize>,
}

/// Splits every cell: `x` into pieces with `ν₁`-fractions `split1[x]`, and `y`
/// into pieces receiving fractions `split2[y]` of each `P(x, y)`.
pub fn refine<T: Scalar>(
    nu1: &[T],
    p: &Kernel<T>,
    split1: &[Vec<T>],
    split2: &[Vec<T>],
) -> Result<(Vec<T>, Kernel<T>, Refinement), KernelError> {
    let (m1, m2) = p.shape();
    if split1.len() != m1 || split2.len() != m2 {
        return Err(KernelError::Shape("one split per cell required".into()));
    }
    let map1: Vec<usize> = split1.iter().enumerate().flat_map(|(x, s)| std::iter::repeat_n(x, s.len())).collect();
    let map2: Vec<usize> = split2.iter().enumerate().flat_map(|(y, s)| std::iter::repeat_n(y, s.len())).collect();
    let nu1f: Vec<T> = split1.iter().enumerate().flat_map(|(x, s)| s.iter().map(move |a| nu1[x].clone() * a.clone())).collect();
    let frac2: Vec<T> = split2.iter().flatten().cloned().collect();
    let mut pf = Kernel::zeros(map1.len(), map2.len());
    for (i, &x) in map1.iter().enumerate() {
        for (j, &y) in map2.iter().enumerate() {
            pf.set(i, j, p.get(x, y).clone() * frac2[j].clone());
        }
    }
    Ok((nu1f, pf, Refinement { map1, map2 }))
}

/// Pushes a refined dual pair down to the coarse cells: `ρ` and `ν₂` by summing,
/// `Q` as the `ν₂`-weighted average.
pub fn aggregate<T: Scalar>(fine: &DualPair<T>, r: &Refinement, m1: usize, m2: usize) -> (Kernel<T>, Vec<T>, Kernel<T>) {
    let mut rho = Kernel::<T>::zeros(m1, m2);
    let mut nu2 = vec![T::zero(); m2];
    for (i, &x) in r.map1.iter().enumerate() {
        for (j, &y) in r.map2.iter().enumerate() {
            let v = rho.get(x, y).clone() + fine.rho.get(i, j).clone();
            rho.set(x, y, v);
        }
    }
    for (j, &y) in r.map2.iter().enumerate() {
        nu2[y] = nu2[y].clone() + fine.nu2[j].clone();
    }
    let mut q = Kernel::<T>::zeros(m2, m1);
    for (j, &y) in r.map2.iter().enumerate() {
        for (i, &x) in r.map1.iter().enumerate() {
            let v = q.get(y, x).clone() + fine.nu2[j].clone() * fine.q.get(j, i).clone();
            q.set(y, x, v);
        }
    }
    for y in 0..m2 {
        if !nu2[y].is_zero() {
            for x in 0..m1 {
                let v = q.get(y, x).clone() / nu2[y].clone();
                q.set(y, x, v);
            }
        }
    }
    (rho, nu2, q)
}

/// Chain `X_0 → X_1 → ⋯` of probability kernels with an initial measure.
#[derive(Debug, Clone, Serialize)]
pub struct KernelChain {
    pub nu0: Vec<f64>,
    pub kernels: Vec<Kernel<f64>>,
}

impl KernelChain {
    pub fn new(nu0: Vec<f64>, kernels: Vec<Kernel<f64>>) -> Result<Self, KernelError> {
        let mut m = nu0.len();
        for (n, k) in kernels.iter().enumerate() {
            if k.shape().0 != m {
                return Err(KernelError::Shape(format!("kernel {n} has {} rows, expected {m}", k.shape().0)));
            }
            k.check_nonnegative()?;
            m = k.shape().1;
        }
        Ok(Self { nu0, kernels })
    }

    pub fn depth(&self) -> usize {
        self.kernels.len()
    }

    /// `ν_{n+1} = ν_n P_n`.
    pub fn masses(&self) -> Vec<Vec<f64>> {
        let mut out = vec![self.nu0.clone()];
        for k in &self.kernels {
            let next = k.left_mul(out.last().expect("nonempty"));
            out.push(next);
        }
        out
    }

    pub fn duals(&self) -> Result<Vec<DualPair<f64>>, KernelError> {
        let nus = self.masses();
        self.kernels.iter().zip(&nus).map(|(k, nu)| dual_kernel(nu, k)).collect()
    }

    /// The chain as level distributions and forward kernels.
    pub fn hat_kernels(&self) -> Result<HatKernels, KernelError> {
        let p_hat = self.kernels.iter().map(Kernel::to_csr).collect();
        Ok(HatKernels::from_forward(self.masses(), p_hat)?)
    }

    /// Exact probability of every cylinder `(x_0, …, x_depth)` from `x0`.
    pub fn cylinder_probabilities(&self, x0: usize, depth: usize) -> BTreeMap<Vec<usize>, f64> {
        let mut acc = BTreeMap::from([(vec![x0], 1.0)]);
        for k in &self.kernels[..depth] {
            let mut next = BTreeMap::new();
            for (path, p) in acc {
                let x = *path.last().expect("nonempty");
                for (y, w) in k.row(x).iter().enumerate() {
                    if *w > 0.0 {
                        let mut q = path.clone();
                        q.push(y);
                        next.insert(q, p * w);
                    }
                }
            }
            acc = next;
        }
        acc
    }

    /// Empirical cylinder frequencies from `trials` seeded paths.
    pub fn sample_paths(&self, x0: usize, depth: usize, trials: usize, seed: u64) -> BTreeMap<Vec<usize>, f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
        for _ in 0..trials {
            let mut path = vec![x0];
            for k in &self.kernels[..depth] {
                let row = k.row(*path.last().expect("nonempty"));
                let total: f64 = row.iter().sum();
                let mut u = rng.gen::<f64>() * total;
                let mut pick = row.len() - 1;
                for (y, w) in row.iter().enumerate() {
                    if u < *w {
                        pick = y;
                        break;
                    }
                    u -= w;
                }
                path.push(pick);
            }
            *counts.entry(path).or_insert(0) += 1;
        }
        counts.into_iter().map(|(k, c)| (k, c as f64 / trials as f64)).collect()
    }

    /// `max_A (max_x − min_x) P_0⋯P_{n-1}(x, A)` per level: zero iff the law of
    /// `ξ_n` does not depend on the start cell.
    pub fn tail_variation(&self) -> Vec<f64> {
        let m0 = self.nu0.len();
        let mut prod: Vec<Vec<f64>> = (0..m0).map(|i| (0..m0).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let mut out = Vec::with_capacity(self.depth());
        for k in &self.kernels {
            prod = prod.iter().map(|r| k.left_mul(r)).collect();
            let cols = prod[0].len();
            let spread = (0..cols)
                .map(|a| {
                    let col = prod.iter().map(|r| r[a]);
                    col.clone().fold(f64::NEG_INFINITY, f64::max) - col.fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max);
            out.push(spread);
        }
        out
    }

    /// `(ΔF)_n = (c_n + d_n) F_n − P_n F_{n+1} − Q_{n-1} F_{n-1}`, with the missing
    /// neighbour dropped on the end levels.
    pub fn laplacian(&self, f: &LevelFunction) -> Result<LevelFunction, KernelError> {
        let duals = self.duals()?;
        let top = self.depth();
        if f.len() != top + 1 {
            return Err(KernelError::Shape("one function per level required".into()));
        }
        Ok((0..=top)
            .map(|n| {
                let mut out = vec![0.0; f[n].len()];
                if n < top {
                    let k = &self.kernels[n];
                    let c = k.row_sums();
                    let pf = k.apply(&f[n + 1]);
                    for x in 0..out.len() {
                        out[x] += c[x] * f[n][x] - pf[x];
                    }
                }
                if n > 0 {
                    let q = &duals[n - 1].q;
                    let d = q.row_sums();
                    let qf = q.apply(&f[n - 1]);
                    for x in 0..out.len() {
                        out[x] += d[x] * f[n][x] - qf[x];
                    }
                }
                out
            })
            .collect())
    }

    /// `Σ_n ∬ (F_n(x) − F_{n+1}(y))² dρ_n(x, y)`.
    pub fn energy(&self, f: &LevelFunction) -> Result<f64, KernelError> {
        let net = WeightedNetwork::new(self.hat_kernels()?, Boundary::Reflect)?;
        Ok(2.0 * energy(&net, f)?.direct)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn sample_pair() -> (Vec<f64>, Kernel<f64>) {
        let p = Kernel::from_rows(vec![vec![0.5, 0.5, 0.0], vec![0.1, 0.2, 0.7]]).unwrap();
        (vec![0.4, 0.6], p)
    }

    #[test]
    fn dual_identities_f64() {
        let (nu1, p) = sample_pair();
        let pair = dual_kernel(&nu1, &p).unwrap();
        let (a, b) = duality_defects(&pair);
        assert!(a.iter().chain(&b).all(|x| x.abs() < 1e-15));
        assert!(pair.q.row_sums().iter().all(|s| (s - 1.0).abs() < 1e-15));
    }

    #[test]
    fn dual_identities_exact() {
        let nu1 = vec![rat(1, 3), rat(2, 3)];
        let p = Kernel::from_rows(vec![vec![rat(1, 2), rat(1, 2)], vec![rat(1, 5), rat(4, 5)]]).unwrap();
        let pair = dual_kernel(&nu1, &p).unwrap();
        let (a, b) = duality_defects(&pair);
        assert!(a.iter().chain(&b).all(num_traits::Zero::is_zero));
        assert_eq!(pair.nu2, vec![rat(3, 10), rat(7, 10)]);
        let (l1, l2) = symmetric_measures(&pair);
        assert!(l1.is_symmetric() && l2.is_symmetric());
    }

    #[test]
    fn constant_kernel_gives_product() {
        let nu1 = vec![0.2_f64, 0.8];
        let p = Kernel::from_rows(vec![vec![0.25, 0.75]; 2]).unwrap();
        let pair = dual_kernel(&nu1, &p).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert!((pair.rho.get(x, y) - nu1[x] * p.get(0, y)).abs() < 1e-16);
            }
        }
        assert!((0..2).all(|y| (0..2).all(|x| (pair.q.get(y, x) - nu1[x]).abs() < 1e-15)));
    }

    #[test]
    fn point_mass_gives_delta() {
        let nu1 = vec![0.0, 1.0, 0.0];
        let p = Kernel::from_rows(vec![vec![0.5, 0.5], vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        let pair = dual_kernel(&nu1, &p).unwrap();
        for y in 0..2 {
            assert_eq!(pair.q.row(y), &[0.0, 1.0, 0.0]);
        }
    }

    #[test]
    fn zero_mass_rejected() {
        let p = Kernel::from_rows(vec![vec![1.0]]).unwrap();
        assert_eq!(dual_kernel(&[0.0], &p).unwrap_err(), KernelError::ZeroTotalMass);
        let bad = Kernel::from_rows(vec![vec![-1.0]]).unwrap();
        assert_eq!(dual_kernel(&[1.0], &bad).unwrap_err(), KernelError::Negative(0, 0));
    }

    #[test]
    fn finite_rows_are_normalized() {
        let nu1 = vec![rat(1, 2), rat(1, 2)];
        let p = Kernel::from_rows(vec![vec![rat(1, 1), rat(1, 1)], vec![rat(0, 1), rat(3, 1)]]).unwrap();
        let pair = dual_kernel(&nu1, &p).unwrap();
        assert_eq!(pair.nu1, vec![rat(1, 1), rat(3, 2)]);
        assert_eq!(pair.p.row_sums(), vec![rat(1, 1), rat(1, 1)]);
        let (a, b) = duality_defects(&pair);
        assert!(a.iter().chain(&b).all(num_traits::Zero::is_zero));
    }

    #[test]
    fn membership_and_scaling() {
        let nu1 = vec![rat(1, 4), rat(3, 4)];
        let p = Kernel::from_rows(vec![vec![rat(1, 3), rat(2, 3)], vec![rat(1, 2), rat(1, 2)]]).unwrap();
        let pair = dual_kernel(&nu1, &p).unwrap();
        let m = membership(&pair.rho, &pair.nu1, &pair.nu2).unwrap();
        assert!(m.in_family && m.symmetric_joint);
        assert_eq!(m.p, pair.p);
        let f1 = [rat(2, 1), rat(1, 3)];
        let scaled: Vec<BigRational> = nu1.iter().zip(&f1).map(|(a, b)| a * b).collect();
        let ms = membership(&pair.rho, &scaled, &pair.nu2).unwrap();
        assert!(ms.in_family && ms.symmetric_joint);
        for x in 0..2 {
            let c = ms.p.row_sums()[x].clone();
            assert_eq!(f1[x].clone(), BigRational::from_integer(1.into()) / c);
        }
        let bad = membership(&pair.rho, &[rat(0, 1), rat(1, 1)], &pair.nu2).unwrap();
        assert!(!bad.in_family);
    }

    #[test]
    fn gram_is_psd() {
        let (nu1, p) = sample_pair();
        let (l1, _) = symmetric_measures(&dual_kernel(&nu1, &p).unwrap());
        let g = rkhs_gram(&l1, &[vec![0], vec![1], vec![0, 1]]);
        assert!(g.min_eigenvalue >= -1e-12);
        assert!((g.gram[2][2] - l1.row_sums().iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn factorization_reproduces_target() {
        let nu1 = vec![0.2, 0.3, 0.5];
        let b = [[1.0, 0.2, 0.0], [0.5, 1.0, 0.3], [0.1, 0.4, 2.0]];
        let mut s = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] = (0..3).map(|k| b[i][k] * b[j][k]).sum();
            }
        }
        let r_hat = Kernel::from_rows((0..3).map(|i| (0..3).map(|j| s[i][j] / nu1[i]).collect()).collect()).unwrap();
        let base = factorize(&nu1, &r_hat, None, None, None).unwrap();
        assert!(base.residual < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let o1 = random_orthogonal(base.rank, &mut rng);
        let o2 = random_orthogonal(base.rank, &mut rng);
        let rot = factorize(&nu1, &r_hat, Some(&[0.1, 0.2, 0.7]), Some(&o1), Some(&o2)).unwrap();
        assert!(rot.residual < 1e-12);
        let neg = Kernel::from_rows(vec![vec![-1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(factorize(&[1.0, 1.0], &neg, None, None, None), Err(KernelError::NotPSD(_))));
    }

    #[test]
    fn refinement_commutes_with_duals() {
        let nu1 = vec![rat(1, 3), rat(2, 3)];
        let p = Kernel::from_rows(vec![vec![rat(1, 2), rat(1, 2)], vec![rat(1, 5), rat(4, 5)]]).unwrap();
        let split1 = vec![vec![rat(1, 4), rat(3, 4)], vec![rat(1, 1)]];
        let split2 = vec![vec![rat(1, 2), rat(1, 3), rat(1, 6)], vec![rat(2, 5), rat(3, 5)]];
        let (nf, pf, r) = refine(&nu1, &p, &split1, &split2).unwrap();
        let fine = dual_kernel(&nf, &pf).unwrap();
        let coarse = dual_kernel(&nu1, &p).unwrap();
        let (rho, nu2, q) = aggregate(&fine, &r, 2, 2);
        assert_eq!(rho, coarse.rho);
        assert_eq!(nu2, coarse.nu2);
        assert_eq!(q, coarse.q);
    }

    #[test]
    fn chain_sampler_and_laplacian() {
        let k0 = Kernel::from_rows(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let chain = KernelChain::new(vec![0.5, 0.5], vec![k0.clone(), k0.clone(), k0]).unwrap();
        let exact = chain.cylinder_probabilities(0, 3);
        assert!((exact.values().sum::<f64>() - 1.0).abs() < 1e-15);
        let n = 100_000;
        let emp = chain.sample_paths(0, 3, n, 11);
        for (path, p) in &exact {
            let e = emp.get(path).copied().unwrap_or(0.0);
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((e - p).abs() <= 3.0 * sigma, "{path:?}: {e} vs {p}");
        }
        let f: LevelFunction = vec![vec![1.0, 0.0], vec![0.5, 2.0], vec![0.0, 1.0], vec![3.0, 1.0]];
        let lap = chain.laplacian(&f).unwrap();
        let net = WeightedNetwork::new(chain.hat_kernels().unwrap(), Boundary::Reflect).unwrap();
        let mf = net.apply_m(&f).unwrap();
        for n in 1..3 {
            for x in 0..2 {
                assert!((lap[n][x] - 2.0 * (f[n][x] - mf[n][x])).abs() < 1e-14);
            }
        }
        let direct: f64 = (0..3)
            .map(|k| {
                let pair = &chain.duals().unwrap()[k];
                (0..2).flat_map(|x| (0..2).map(move |y| (x, y))).map(|(x, y)| pair.rho.get(x, y) * (f[k][x] - f[k + 1][y]).powi(2)).sum::<f64>()
            })
            .sum();
        assert!((chain.energy(&f).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn constant_kernels_are_start_independent() {
        let k = Kernel::from_rows(vec![vec![0.2, 0.8]; 2]).unwrap();
        let chain = KernelChain::new(vec![0.5, 0.5], vec![k.clone(), k]).unwrap();
        assert!(chain.tail_variation().iter().all(|&v| v == 0.0));
        let k2 = Kernel::from_rows(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let chain = KernelChain::new(vec![0.5, 0.5], vec![k2]).unwrap();
        assert!((chain.tail_variation()[0] - 0.3).abs() < 1e-15);
    }
}
