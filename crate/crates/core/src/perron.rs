//! Perron–Frobenius data for non-negative matrices on growing windows.
//!
//! Infinite matrices are handled through a [`WindowedMatrix`] family that
//! materializes a finite square block for any [`Window`]. The eigenvalue is
//! computed by power iteration per window and accepted once successive
//! windows agree. Recurrence type is reported as a trend read off partial
//! sums of the return series `a^(n)_ii λ^{-n}`.

use num_bigint::BigUint;
use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

use crate::diagram::{IncidenceMatrix, Window};
use crate::linalg::{dot, norm_inf, CsrMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerronError {
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("eigenvalue unstable across windows: {detail}")]
    WindowUnstable { delta: f64, detail: String },
    #[error("matrix is not irreducible within horizon {horizon}")]
    NotIrreducible { horizon: usize },
    #[error("empty window schedule")]
    EmptySchedule,
    #[error("window [{lo}, {hi}] is not available from this matrix")]
    WindowOutOfRange { lo: i64, hi: i64 },
}

/// A family of finite square blocks of a (possibly infinite) matrix.
pub trait WindowedMatrix {
    fn on_window(&self, window: Window) -> Result<CsrMatrix, PerronError>;
}

/// Finite square matrix over a window; sub-windows are principal blocks.
#[derive(Debug, Clone)]
pub struct IndexedMatrix {
    pub window: Window,
    pub matrix: CsrMatrix,
}

impl IndexedMatrix {
    pub fn new(window: Window, matrix: CsrMatrix) -> Self {
        assert_eq!(matrix.nrows(), window.len());
        assert_eq!(matrix.ncols(), window.len());
        Self { window, matrix }
    }

    /// `F_nᵀ` from a square incidence matrix.
    pub fn transpose_of(f: &IncidenceMatrix) -> Self {
        assert_eq!(f.row_window(), f.col_window(), "square incidence matrix required");
        Self::new(f.col_window(), f.transpose_f64())
    }
}

impl WindowedMatrix for IndexedMatrix {
    fn on_window(&self, window: Window) -> Result<CsrMatrix, PerronError> {
        let off = self
            .window
            .offset_of(&window)
            .ok_or(PerronError::WindowOutOfRange { lo: window.lo, hi: window.hi })?;
        Ok(self.matrix.submatrix(off..off + window.len(), off..off + window.len()))
    }
}

/// Adapter turning a closure into a [`WindowedMatrix`].
pub struct FnFamily<F>(pub F);

impl<F: Fn(Window) -> CsrMatrix> WindowedMatrix for FnFamily<F> {
    fn on_window(&self, window: Window) -> Result<CsrMatrix, PerronError> {
        Ok((self.0)(window))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfOptions {
    /// Relative eigen-residual at which power iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Agreement required between the last two windows.
    pub window_tol: f64,
    /// Allowed decrease of λ between nested windows.
    pub monotone_slack: f64,
}

impl Default for PfOptions {
    fn default() -> Self {
        Self { tol: 1e-13, max_iter: 2_000_000, window_tol: 1e-10, monotone_slack: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Irreducibility {
    Irreducible { period: usize },
    NotIrreducibleWithin { horizon: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralData {
    pub lambda: f64,
    /// Right eigenvector, `t[anchor] = 1`.
    pub t: Vec<f64>,
    /// Left eigenvector, scaled so that `s · t = 1`.
    pub s: Vec<f64>,
    pub window: Window,
    pub anchor: usize,
    pub period: usize,
    pub residual: f64,
    pub iterations: usize,
    pub window_lambdas: Vec<(Window, f64)>,
    /// Aitken extrapolation over the last three windows, when available.
    pub extrapolated_lambda: Option<f64>,
}

/// Strong connectivity (bounded BFS from the center) and period.
pub fn check_irreducible_aperiodic(m: &CsrMatrix, horizon: usize) -> Irreducibility {
    let n = m.nrows();
    if n == 0 {
        return Irreducibility::NotIrreducibleWithin { horizon };
    }
    let root = (n - 1) / 2;
    let fwd = bfs_levels(m, root, horizon);
    let bwd = bfs_levels(&m.transpose(), root, horizon);
    if fwd.iter().chain(&bwd).any(Option::is_none) {
        return Irreducibility::NotIrreducibleWithin { horizon };
    }
    let mut g = 0usize;
    for (i, r) in m.rows().enumerate() {
        for &(j, _) in r {
            let (li, lj) = (fwd[i].unwrap() as i64, fwd[j].unwrap() as i64);
            g = num_integer::gcd(g, (li + 1 - lj).unsigned_abs() as usize);
        }
    }
    Irreducibility::Irreducible { period: g.max(1) }
}

fn bfs_levels(m: &CsrMatrix, root: usize, horizon: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; m.nrows()];
    level[root] = Some(0);
    let mut frontier = vec![root];
    let mut d = 0;
    while !frontier.is_empty() && d < horizon {
        d += 1;
        let mut next = Vec::new();
        for i in frontier {
            for &(j, _) in m.row(i) {
                if level[j].is_none() {
                    level[j] = Some(d);
                    next.push(j);
                }
            }
        }
        frontier = next;
    }
    level
}

/// Power iteration for the right Perron vector of `m + shift·I`.
fn power_iterate(m: &CsrMatrix, shift: f64, opts: &PfOptions) -> Result<(f64, Vec<f64>, usize, f64), PerronError> {
    let n = m.nrows();
    let mut t = vec![1.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let at = m.mul_vec(&t);
        let lambda = norm_inf(&at);
        residual = at.iter().zip(&t).map(|(a, x)| (a - lambda * x).abs()).fold(0.0, f64::max) / lambda.max(f64::MIN_POSITIVE);
        if residual <= opts.tol {
            return Ok(polish(m, shift, (lambda, t, it, residual)));
        }
        t = power_step(&at, &t, lambda, shift);
    }
    Err(PerronError::NoConvergence { iterations: opts.max_iter, residual })
}

fn power_step(at: &[f64], t: &[f64], lambda: f64, shift: f64) -> Vec<f64> {
    let mut next: Vec<f64> = at.iter().zip(t).map(|(a, x)| (a + shift * x) / (lambda + shift)).collect();
    let norm = norm_inf(&next);
    next.iter_mut().for_each(|x| *x /= norm);
    next
}

/// Extra iterations while the residual still drops, bounded by the count already spent.
fn polish(m: &CsrMatrix, shift: f64, best: (f64, Vec<f64>, usize, f64)) -> (f64, Vec<f64>, usize, f64) {
    let (mut lambda, mut t, it, mut residual) = best;
    let mut iterations = it;
    while residual > 0.0 && iterations < 2 * it + 64 {
        let next = power_step(&m.mul_vec(&t), &t, lambda, shift);
        let at = m.mul_vec(&next);
        let l = norm_inf(&at);
        let r = at.iter().zip(&next).map(|(a, x)| (a - l * x).abs()).fold(0.0, f64::max) / l.max(f64::MIN_POSITIVE);
        iterations += 1;
        if r >= residual {
            break;
        }
        (lambda, t, residual) = (l, next, r);
    }
    (lambda, t, iterations, residual)
}

/// Perron data of a single finite irreducible matrix.
pub fn pf_solve_matrix(m: &CsrMatrix, window: Window, opts: &PfOptions) -> Result<SpectralData, PerronError> {
    let period = match check_irreducible_aperiodic(m, m.nrows().max(1)) {
        Irreducibility::Irreducible { period } => period,
        Irreducibility::NotIrreducibleWithin { horizon } => return Err(PerronError::NotIrreducible { horizon }),
    };
    let shift = if period > 1 { 1.0 } else { 0.0 };
    let (lambda, mut t, it_r, res_r) = power_iterate(m, shift, opts)?;
    let (lambda_l, mut s, it_l, res_l) = power_iterate(&m.transpose(), shift, opts)?;
    let anchor = window.center();
    let ta = t[anchor];
    t.iter_mut().for_each(|x| *x /= ta);
    let st = dot(&s, &t);
    s.iter_mut().for_each(|x| *x /= st);
    let residual = eigen_residual(m, lambda, &t, &s).max(res_r.max(res_l));
    debug_assert!((lambda - lambda_l).abs() <= 1e-6 * lambda.max(1.0));
    Ok(SpectralData {
        lambda,
        t,
        s,
        window,
        anchor,
        period,
        residual,
        iterations: it_r.max(it_l),
        window_lambdas: vec![(window, lambda)],
        extrapolated_lambda: None,
    })
}

/// `max(‖At − λt‖∞/‖t‖∞, ‖sA − λs‖∞/‖s‖∞)`, relative to λ.
pub fn eigen_residual(m: &CsrMatrix, lambda: f64, t: &[f64], s: &[f64]) -> f64 {
    let at = m.mul_vec(t);
    let sa = m.vec_mul(s);
    let r = at.iter().zip(t).map(|(a, x)| (a - lambda * x).abs()).fold(0.0, f64::max) / norm_inf(t);
    let l = sa.iter().zip(s).map(|(a, x)| (a - lambda * x).abs()).fold(0.0, f64::max) / norm_inf(s);
    r.max(l) / lambda.max(f64::MIN_POSITIVE)
}

/// Power iteration on each window of `schedule`; λ is accepted when the last
/// two windows agree within `window_tol`.
pub fn pf_solve(
    family: &dyn WindowedMatrix,
    schedule: &[Window],
    opts: &PfOptions,
) -> Result<SpectralData, PerronError> {
    let mut lambdas: Vec<(Window, f64)> = Vec::with_capacity(schedule.len());
    let mut last = None;
    for &w in schedule {
        let m = family.on_window(w)?;
        let data = pf_solve_matrix(&m, w, opts)?;
        if let Some(&(pw, pl)) = lambdas.last() {
            if data.lambda < pl - opts.monotone_slack {
                return Err(PerronError::WindowUnstable {
                    delta: pl - data.lambda,
                    detail: format!("λ decreased from {pl} on [{}, {}] to {} on [{}, {}]", pw.lo, pw.hi, data.lambda, w.lo, w.hi),
                });
            }
        }
        lambdas.push((w, data.lambda));
        last = Some(data);
    }
    let mut data = last.ok_or(PerronError::EmptySchedule)?;
    if lambdas.len() >= 2 {
        let delta = lambdas[lambdas.len() - 1].1 - lambdas[lambdas.len() - 2].1;
        if delta.abs() > opts.window_tol {
            return Err(PerronError::WindowUnstable {
                delta,
                detail: format!("last two windows differ by {delta:e}"),
            });
        }
    }
    data.extrapolated_lambda = aitken(&lambdas);
    data.window_lambdas = lambdas;
    Ok(data)
}

fn aitken(l: &[(Window, f64)]) -> Option<f64> {
    let n = l.len();
    if n < 3 {
        return None;
    }
    let (a, b, c) = (l[n - 3].1, l[n - 2].1, l[n - 1].1);
    let den = c - 2.0 * b + a;
    if den.abs() < f64::EPSILON * c.abs() {
        Some(c)
    } else {
        Some(c - (c - b).powi(2) / den)
    }
}

/// Window schedule `[c - r, c + r]` for each radius.
pub fn symmetric_schedule(radii: &[i64]) -> Vec<Window> {
    radii.iter().map(|&r| Window::symmetric(r)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Recurrence {
    Transient,
    NullRecurrent,
    PositiveRecurrent,
    Unknown,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecurrenceReport {
    pub classification: Recurrence,
    /// `a^(n)_ii λ^{-n}` for `n = 1..=horizon`.
    pub return_terms: Vec<f64>,
    /// `ℓ_ii(n) λ^{-n}`.
    pub first_return_terms: Vec<f64>,
    /// Partial sums of `return_terms`.
    pub return_sums: Vec<f64>,
    /// Partial sums of `n ℓ_ii(n) λ^{-n}`.
    pub mean_return_sums: Vec<f64>,
    /// `Σ ℓ_ii(n) λ^{-n}` up to the horizon.
    pub first_return_mass: f64,
    /// Fitted exponent `α` in `a^(n)_ii λ^{-n} ≈ C n^{-α}` over the second half.
    pub decay_exponent: Option<f64>,
    pub fit_r2: Option<f64>,
}

/// Return and first-return series of `m` at index `i`, scaled by `λ^{-n}`.
pub fn return_series(m: &CsrMatrix, lambda: f64, i: usize, horizon: usize) -> (Vec<f64>, Vec<f64>) {
    let n = m.nrows();
    let mut a = vec![0.0; n];
    a[i] = 1.0;
    let mut l = m.row(i).iter().fold(vec![0.0; n], |mut v, &(j, x)| {
        v[j] = x / lambda;
        v
    });
    let mut ret = Vec::with_capacity(horizon);
    let mut first = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        a = m.vec_mul(&a).into_iter().map(|x| x / lambda).collect();
        ret.push(a[i]);
        first.push(l[i]);
        l[i] = 0.0;
        l = m.vec_mul(&l).into_iter().map(|x| x / lambda).collect();
    }
    (ret, first)
}

/// Exact integer return series `a^(n)_ii` and first returns `ℓ_ii(n)`, `n = 1..=horizon`.
pub fn return_series_exact(f: &IncidenceMatrix, i: usize, horizon: usize) -> (Vec<BigUint>, Vec<BigUint>) {
    let n = f.nrows();
    assert_eq!(n, f.ncols());
    let step = |x: &[BigUint]| -> Vec<BigUint> {
        let mut out = vec![BigUint::zero(); n];
        for (v, r) in (0..n).map(|v| (v, f.row(v))) {
            for &(w, m) in r {
                out[v] += &x[w] * BigUint::from(m);
            }
        }
        out
    };
    let mut a = vec![BigUint::zero(); n];
    a[i] = BigUint::from(1u8);
    let mut l: Vec<BigUint> = (0..n).map(|v| BigUint::from(f.get(v, i))).collect();
    let mut ret = Vec::with_capacity(horizon);
    let mut first = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        a = step(&a);
        ret.push(a[i].clone());
        first.push(l[i].clone());
        l[i] = BigUint::zero();
        l = step(&l);
    }
    (ret, first)
}

/// Trend classification from the scaled return series at the window center.
pub fn classify_recurrence(m: &CsrMatrix, lambda: f64, horizon: usize) -> RecurrenceReport {
    classify_recurrence_at(m, lambda, (m.nrows() - 1) / 2, horizon)
}

/// Trend classification from the scaled return series at index `i`.
pub fn classify_recurrence_at(m: &CsrMatrix, lambda: f64, i: usize, horizon: usize) -> RecurrenceReport {
    let (ret, first) = return_series(m, lambda, i, horizon);
    let mut acc = 0.0;
    let return_sums = ret.iter().map(|x| { acc += x; acc }).collect();
    let mut acc = 0.0;
    let mean_return_sums =
        first.iter().enumerate().map(|(k, x)| { acc += (k + 1) as f64 * x; acc }).collect();
    let first_return_mass = first.iter().sum();
    let fit = fit_power_decay(&ret);
    let classification = match fit {
        Some((alpha, r2)) if r2 >= 0.9 || alpha.abs() < 0.05 => {
            if alpha < -0.15 {
                Recurrence::Unknown
            } else if alpha < 0.15 {
                Recurrence::PositiveRecurrent
            } else if alpha <= 1.1 {
                Recurrence::NullRecurrent
            } else {
                Recurrence::Transient
            }
        }
        _ => Recurrence::Unknown,
    };
    RecurrenceReport {
        classification,
        return_terms: ret,
        first_return_terms: first,
        return_sums,
        mean_return_sums,
        first_return_mass,
        decay_exponent: fit.map(|f| f.0),
        fit_r2: fit.map(|f| f.1),
    }
}

/// Least-squares slope of `-ln x_n` against `ln n` over the second half.
fn fit_power_decay(x: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .enumerate()
        .skip(x.len() / 2)
        .filter(|(_, v)| **v > 0.0)
        .map(|(k, v)| (((k + 1) as f64).ln(), v.ln()))
        .collect();
    if pts.len() < 4 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy <= 1e-30 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((-slope, r2))
}
