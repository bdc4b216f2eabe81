//! Bratteli diagrams over integer-indexed vertex windows.
//!
//! Level `n` has vertex set `V_n`, realised as a finite [`Window`] of integer
//! labels. The incidence matrix `F_n` has shape `|V_{n+1}| × |V_n|` and its
//! entry `(v, w)` counts edges from `w ∈ V_n` to `v ∈ V_{n+1}`. Local indices
//! (`usize`) are offsets into the window.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::CsrMatrix;

/// Default cap on enumerated cylinders.
pub const DEFAULT_PATH_CAP: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiagramError {
    #[error("level {level}: vertex {vertex} of V_{{level+1}} has no incoming edge")]
    ZeroRow { level: usize, vertex: i64 },
    #[error("level {level}: vertex {vertex} of V_{level} has no outgoing edge")]
    ZeroColumn { level: usize, vertex: i64 },
    #[error("level {level}: window mismatch ({detail})")]
    WindowMismatch { level: usize, detail: String },
    #[error("level {level}: row support of vertex {vertex} leaves the window")]
    InfiniteRow { level: usize, vertex: i64 },
    #[error("level {level}: edge order at vertex {vertex} is not a total order on its incoming edges")]
    OrderNotTotal { level: usize, vertex: i64 },
    #[error("diagram has no edge order")]
    MissingOrder,
    #[error("integer overflow while multiplying incidence matrices")]
    Overflow,
    #[error("{count} paths exceed the enumeration cap {cap}")]
    TooManyPaths { count: String, cap: usize },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid telescoping cuts: {0}")]
    InvalidCuts(String),
    #[error("empty diagram")]
    Empty,
    #[error("level {level}: vertex {vertex} of V_{level} has a single successor")]
    SingleSuccessor { level: usize, vertex: i64 },
}

/// Inclusive integer interval `[lo, hi]` of vertex labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(i64, i64)", into = "(i64, i64)")]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl From<(i64, i64)> for Window {
    fn from((lo, hi): (i64, i64)) -> Self {
        Self { lo, hi }
    }
}

impl From<Window> for (i64, i64) {
    fn from(w: Window) -> Self {
        (w.lo, w.hi)
    }
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Self {
        assert!(lo <= hi, "empty window [{lo}, {hi}]");
        Self { lo, hi }
    }

    /// `[0, len - 1]`
    pub fn first(len: usize) -> Self {
        Self::new(0, len as i64 - 1)
    }

    /// `[-n, n]`
    pub fn symmetric(n: i64) -> Self {
        Self::new(-n, n)
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn contains(&self, i: i64) -> bool {
        self.lo <= i && i <= self.hi
    }

    pub fn local(&self, i: i64) -> Option<usize> {
        self.contains(i).then(|| (i - self.lo) as usize)
    }

    pub fn label(&self, k: usize) -> i64 {
        self.lo + k as i64
    }

    /// Local index of the center label.
    pub fn center(&self) -> usize {
        (self.len() - 1) / 2
    }

    pub fn clamp(&self, i: i64) -> i64 {
        i.clamp(self.lo, self.hi)
    }

    /// Local offset of `inner` inside `self`, when nested.
    pub fn offset_of(&self, inner: &Window) -> Option<usize> {
        (self.lo <= inner.lo && inner.hi <= self.hi).then(|| (inner.lo - self.lo) as usize)
    }
}

/// What happens to band targets that fall outside the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Drop them; affected rows and columns are masked.
    #[default]
    Truncate,
    /// Fold them onto the nearest window endpoint, preserving row sums.
    Reflect,
}

/// Non-negative integer matrix `F_n` with truncation masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceMatrix {
    rows: Window,
    cols: Window,
    entries: Vec<Vec<(usize, u64)>>,
    truncated_rows: Vec<bool>,
    truncated_cols: Vec<bool>,
}

impl IncidenceMatrix {
    fn assemble(rows: Window, cols: Window, raw: Vec<BTreeMap<usize, u64>>) -> Self {
        let entries = raw
            .into_iter()
            .map(|m| m.into_iter().filter(|&(_, x)| x > 0).collect())
            .collect();
        Self {
            rows,
            cols,
            entries,
            truncated_rows: vec![false; rows.len()],
            truncated_cols: vec![false; cols.len()],
        }
    }

    /// Dense matrix with windows starting at label 0.
    pub fn from_dense(dense: &[Vec<u64>]) -> Self {
        let ncols = dense.first().map_or(0, Vec::len);
        let raw = dense
            .iter()
            .map(|r| {
                assert_eq!(r.len(), ncols, "ragged dense matrix");
                r.iter().copied().enumerate().collect()
            })
            .collect();
        Self::assemble(Window::first(dense.len()), Window::first(ncols), raw)
    }

    /// Entries `(target, source, multiplicity)` in global labels; duplicates add up.
    pub fn from_triplets(
        level: usize,
        rows: Window,
        cols: Window,
        triplets: impl IntoIterator<Item = (i64, i64, u64)>,
    ) -> Result<Self, DiagramError> {
        let mut raw = vec![BTreeMap::new(); rows.len()];
        for (v, w, m) in triplets {
            let vi = rows.local(v).ok_or_else(|| DiagramError::WindowMismatch {
                level,
                detail: format!("target {v} outside [{}, {}]", rows.lo, rows.hi),
            })?;
            let wi = cols.local(w).ok_or(DiagramError::InfiniteRow { level, vertex: v })?;
            let e: &mut u64 = raw[vi].entry(wi).or_insert(0);
            *e = e.checked_add(m).ok_or(DiagramError::Overflow)?;
        }
        Ok(Self::assemble(rows, cols, raw))
    }

    /// Square band matrix: row `i` has entry `m` at column `i + o` for each `(o, m)`.
    pub fn band(window: Window, offsets: &BTreeMap<i64, u64>, policy: BoundaryPolicy) -> Self {
        Self::from_row_rule(window, policy, |i| {
            offsets.iter().map(|(&o, &m)| (i + o, m)).collect()
        })
    }

    /// Square matrix on `window` whose row `i` is `rule(i)` in global labels.
    pub fn from_row_rule(
        window: Window,
        policy: BoundaryPolicy,
        rule: impl Fn(i64) -> Vec<(i64, u64)>,
    ) -> Self {
        let n = window.len();
        let mut raw = vec![BTreeMap::new(); n];
        let mut truncated_rows = vec![false; n];
        let mut truncated_cols = vec![false; n];
        for v in 0..n {
            for (w, m) in rule(window.label(v)) {
                let target = match (window.local(w), policy) {
                    (Some(k), _) => Some(k),
                    (None, BoundaryPolicy::Reflect) => window.local(window.clamp(w)),
                    (None, BoundaryPolicy::Truncate) => {
                        log::warn!("dropping out-of-window letter {w} from row {}", window.label(v));
                        truncated_rows[v] = true;
                        None
                    }
                };
                if let Some(k) = target {
                    *raw[v].entry(k).or_insert(0) += m;
                }
            }
        }
        if policy == BoundaryPolicy::Truncate {
            // Columns that would receive edges from rows outside the window.
            let probe = window.len() as i64 + 1;
            for outside in (window.lo - probe..window.lo).chain(window.hi + 1..=window.hi + probe) {
                for (w, _) in rule(outside) {
                    if let Some(k) = window.local(w) {
                        truncated_cols[k] = true;
                    }
                }
            }
        }
        let mut out = Self::assemble(window, window, raw);
        out.truncated_rows = truncated_rows;
        out.truncated_cols = truncated_cols;
        out
    }

    pub fn row_window(&self) -> Window {
        self.rows
    }

    pub fn col_window(&self) -> Window {
        self.cols
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    /// Sources of row `v` with multiplicities, sorted by source.
    pub fn row(&self, v: usize) -> &[(usize, u64)] {
        &self.entries[v]
    }

    pub fn get(&self, v: usize, w: usize) -> u64 {
        self.entries[v]
            .binary_search_by_key(&w, |&(k, _)| k)
            .map_or(0, |p| self.entries[v][p].1)
    }

    /// Targets of each column with multiplicities.
    pub fn columns(&self) -> Vec<Vec<(usize, u64)>> {
        let mut cols = vec![Vec::new(); self.ncols()];
        for (v, r) in self.entries.iter().enumerate() {
            for &(w, m) in r {
                cols[w].push((v, m));
            }
        }
        cols
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.entries.iter().map(|r| r.iter().map(|&(_, m)| m).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let mut s = vec![0; self.ncols()];
        for r in &self.entries {
            for &(w, m) in r {
                s[w] += m;
            }
        }
        s
    }

    pub fn truncated_rows(&self) -> &[bool] {
        &self.truncated_rows
    }

    pub fn truncated_cols(&self) -> &[bool] {
        &self.truncated_cols
    }

    pub fn to_f64(&self) -> CsrMatrix {
        let rows = self
            .entries
            .iter()
            .map(|r| r.iter().map(|&(w, m)| (w, m as f64)).collect())
            .collect();
        CsrMatrix::from_rows(self.ncols(), rows)
    }

    /// `A_n = F_nᵀ` as a real matrix.
    pub fn transpose_f64(&self) -> CsrMatrix {
        self.to_f64().transpose()
    }

    pub fn to_dense(&self) -> Vec<Vec<u64>> {
        let mut d = vec![vec![0; self.ncols()]; self.nrows()];
        for (v, r) in self.entries.iter().enumerate() {
            for &(w, m) in r {
                d[v][w] = m;
            }
        }
        d
    }

    /// `self · rhs` with overflow checking.
    pub fn checked_mul(&self, rhs: &IncidenceMatrix) -> Result<IncidenceMatrix, DiagramError> {
        if self.cols != rhs.rows {
            return Err(DiagramError::WindowMismatch {
                level: 0,
                detail: "inner windows differ in product".into(),
            });
        }
        let mut raw = vec![BTreeMap::new(); self.nrows()];
        let mut truncated_rows = self.truncated_rows.clone();
        for (v, r) in self.entries.iter().enumerate() {
            for &(u, a) in r {
                truncated_rows[v] |= rhs.truncated_rows[u];
                for &(w, b) in &rhs.entries[u] {
                    let e: &mut u64 = raw[v].entry(w).or_insert(0);
                    let ab = a.checked_mul(b).ok_or(DiagramError::Overflow)?;
                    *e = e.checked_add(ab).ok_or(DiagramError::Overflow)?;
                }
            }
        }
        let mut truncated_cols = rhs.truncated_cols.clone();
        for (u, r) in rhs.entries.iter().enumerate() {
            if self.truncated_cols[u] {
                for &(w, _) in r {
                    truncated_cols[w] = true;
                }
            }
        }
        let mut out = Self::assemble(self.rows, rhs.cols, raw);
        out.truncated_rows = truncated_rows;
        out.truncated_cols = truncated_cols;
        Ok(out)
    }
}

/// Edge `source → target` between levels `level` and `level + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Edge {
    pub level: usize,
    pub source: usize,
    pub target: usize,
    pub rank: u32,
}

/// Finite path starting at `origin ∈ V_0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct FinitePath {
    pub origin: usize,
    pub edges: Vec<Edge>,
}

impl FinitePath {
    pub fn empty(origin: usize) -> Self {
        Self { origin, edges: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// `(level, local index)` of the last vertex.
    pub fn end(&self) -> (usize, usize) {
        self.edges.last().map_or((0, self.origin), |e| (e.level + 1, e.target))
    }

    pub fn extended(&self, e: Edge) -> Self {
        let mut p = self.clone();
        p.edges.push(e);
        p
    }
}

/// Total orders on incoming edge sets: `levels[n][v]` lists the edges into
/// `v ∈ V_{n+1}` as `(source, rank)`, smallest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EdgeOrder {
    levels: Vec<Vec<Vec<(usize, u32)>>>,
}

impl EdgeOrder {
    pub fn new(levels: Vec<Vec<Vec<(usize, u32)>>>) -> Self {
        Self { levels }
    }

    /// Order by source, then rank.
    pub fn natural(matrices: &[IncidenceMatrix]) -> Self {
        let levels = matrices
            .iter()
            .map(|f| {
                (0..f.nrows())
                    .map(|v| {
                        f.row(v)
                            .iter()
                            .flat_map(|&(w, m)| (0..m as u32).map(move |r| (w, r)))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { levels }
    }

    pub fn incoming(&self, level: usize, v: usize) -> &[(usize, u32)] {
        &self.levels[level][v]
    }

    fn position(&self, e: &Edge) -> Option<usize> {
        self.levels[e.level][e.target].iter().position(|&x| x == (e.source, e.rank))
    }
}

/// Successor under the Vershik map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Successor {
    Next(FinitePath),
    Maximal,
}

/// Outcome of the tail comparison of two equal-length paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailRelation {
    /// Edges agree at every level `≥ from_level`.
    Equivalent { from_level: usize },
    NotEquivalent,
}

/// Validated Bratteli diagram truncated at depth `matrices.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagram {
    matrices: Vec<IncidenceMatrix>,
    order: Option<EdgeOrder>,
    stationary: bool,
}

impl Diagram {
    /// Validates and wraps `F_0, …, F_{N-1}`.
    pub fn new(matrices: Vec<IncidenceMatrix>) -> Result<Self, DiagramError> {
        if let Some(e) = Self::violations(&matrices).into_iter().next() {
            return Err(e);
        }
        Ok(Self { matrices, order: None, stationary: false })
    }

    /// `F` repeated `depth` times.
    pub fn stationary(f: IncidenceMatrix, depth: usize) -> Result<Self, DiagramError> {
        if f.row_window() != f.col_window() {
            return Err(DiagramError::WindowMismatch {
                level: 0,
                detail: "stationary matrix must be square over one window".into(),
            });
        }
        let mut d = Self::new(vec![f; depth])?;
        d.stationary = true;
        Ok(d)
    }

    /// Every structural violation, in level order.
    pub fn violations(matrices: &[IncidenceMatrix]) -> Vec<DiagramError> {
        let mut out = Vec::new();
        if matrices.is_empty() {
            out.push(DiagramError::Empty);
            return out;
        }
        for (n, f) in matrices.iter().enumerate() {
            if n > 0 && matrices[n - 1].row_window() != f.col_window() {
                let (a, b) = (matrices[n - 1].row_window(), f.col_window());
                out.push(DiagramError::WindowMismatch {
                    level: n,
                    detail: format!("V_{n} is [{}, {}] above but [{}, {}] below", a.lo, a.hi, b.lo, b.hi),
                });
            }
            for (v, s) in f.row_sums().into_iter().enumerate() {
                if s == 0 {
                    out.push(DiagramError::ZeroRow { level: n, vertex: f.row_window().label(v) });
                }
            }
            for (w, s) in f.col_sums().into_iter().enumerate() {
                if s == 0 {
                    out.push(DiagramError::ZeroColumn { level: n, vertex: f.col_window().label(w) });
                }
            }
        }
        out
    }

    /// Vertices with at most one outgoing edge: the opt-in "no isolated points" check.
    pub fn single_successor_violations(matrices: &[IncidenceMatrix]) -> Vec<DiagramError> {
        matrices
            .iter()
            .enumerate()
            .flat_map(|(n, f)| {
                f.col_sums()
                    .into_iter()
                    .enumerate()
                    .filter(|&(_, c)| c <= 1)
                    .map(move |(w, _)| DiagramError::SingleSuccessor { level: n, vertex: f.col_window().label(w) })
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    /// Attaches an edge order after checking it is a bijection onto each `r⁻¹(v)`.
    pub fn with_order(mut self, order: EdgeOrder) -> Result<Self, DiagramError> {
        if order.levels.len() != self.depth() {
            return Err(DiagramError::OrderNotTotal { level: order.levels.len(), vertex: 0 });
        }
        for (n, f) in self.matrices.iter().enumerate() {
            if order.levels[n].len() != f.nrows() {
                return Err(DiagramError::OrderNotTotal { level: n, vertex: 0 });
            }
            for v in 0..f.nrows() {
                let mut got = order.levels[n][v].clone();
                got.sort_unstable();
                let want: Vec<(usize, u32)> = f
                    .row(v)
                    .iter()
                    .flat_map(|&(w, m)| (0..m as u32).map(move |r| (w, r)))
                    .collect();
                if got != want {
                    return Err(DiagramError::OrderNotTotal {
                        level: n,
                        vertex: f.row_window().label(v),
                    });
                }
            }
        }
        self.order = Some(order);
        Ok(self)
    }

    pub fn with_natural_order(self) -> Self {
        let order = EdgeOrder::natural(&self.matrices);
        Self { order: Some(order), ..self }
    }

    pub fn depth(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    pub fn matrices(&self) -> &[IncidenceMatrix] {
        &self.matrices
    }

    pub fn matrix(&self, n: usize) -> &IncidenceMatrix {
        &self.matrices[n]
    }

    pub fn order(&self) -> Option<&EdgeOrder> {
        self.order.as_ref()
    }

    pub fn level_window(&self, n: usize) -> Window {
        if n == 0 {
            self.matrices[0].col_window()
        } else {
            self.matrices[n - 1].row_window()
        }
    }

    pub fn level_size(&self, n: usize) -> usize {
        self.level_window(n).len()
    }

    /// Truncated to the first `depth` levels of edges.
    pub fn truncate(&self, depth: usize) -> Result<Self, DiagramError> {
        if depth == 0 || depth > self.depth() {
            return Err(DiagramError::InvalidCuts(format!("depth {depth} not in 1..={}", self.depth())));
        }
        Ok(Self {
            matrices: self.matrices[..depth].to_vec(),
            order: self.order.as_ref().map(|o| EdgeOrder { levels: o.levels[..depth].to_vec() }),
            stationary: self.stationary,
        })
    }

    /// `H^(0), …, H^(N)` with `H^(0) = 1` and `H^(n+1) = F_n H^(n)`.
    pub fn heights(&self) -> Vec<Vec<BigUint>> {
        let mut h = vec![vec![BigUint::one(); self.level_size(0)]];
        for f in &self.matrices {
            let prev = h.last().expect("nonempty");
            let next = (0..f.nrows())
                .map(|v| f.row(v).iter().map(|&(w, m)| &prev[w] * BigUint::from(m)).sum())
                .collect();
            h.push(next);
        }
        h
    }

    pub fn heights_f64(&self) -> Vec<Vec<f64>> {
        self.heights()
            .iter()
            .map(|l| l.iter().map(|x| x.to_f64().unwrap_or(f64::INFINITY)).collect())
            .collect()
    }

    /// Diagram with matrices `F_{n_{k+1}-1} ⋯ F_{n_k}` for consecutive cuts.
    pub fn telescope(&self, cuts: &[usize]) -> Result<Self, DiagramError> {
        if cuts.len() < 2 || cuts[0] != 0 {
            return Err(DiagramError::InvalidCuts("need at least two cuts starting at 0".into()));
        }
        if cuts.windows(2).any(|c| c[0] >= c[1]) || *cuts.last().unwrap() > self.depth() {
            return Err(DiagramError::InvalidCuts(format!(
                "cuts must increase strictly and stay within depth {}",
                self.depth()
            )));
        }
        let mut matrices = Vec::with_capacity(cuts.len() - 1);
        for c in cuts.windows(2) {
            let mut m = self.matrices[c[0]].clone();
            for j in c[0] + 1..c[1] {
                m = self.matrices[j].checked_mul(&m)?;
            }
            matrices.push(m);
        }
        let gaps_equal = cuts.windows(2).all(|c| c[1] - c[0] == cuts[1] - cuts[0]);
        let mut d = Self::new(matrices)?;
        d.stationary = self.stationary && gaps_equal;
        Ok(d)
    }

    fn natural_incoming(&self, level: usize, v: usize) -> Vec<(usize, u32)> {
        self.matrices[level]
            .row(v)
            .iter()
            .flat_map(|&(w, m)| (0..m as u32).map(move |r| (w, r)))
            .collect()
    }

    /// Incoming edges of `v ∈ V_{level+1}` in order (natural order if none is attached).
    pub fn incoming(&self, level: usize, v: usize) -> Vec<Edge> {
        let list = match &self.order {
            Some(o) => o.incoming(level, v).to_vec(),
            None => self.natural_incoming(level, v),
        };
        list.into_iter()
            .map(|(source, rank)| Edge { level, source, target: v, rank })
            .collect()
    }

    /// Outgoing edges of `w ∈ V_level`.
    pub fn outgoing(&self, level: usize, w: usize) -> Vec<Edge> {
        let f = &self.matrices[level];
        let mut out = Vec::new();
        for v in 0..f.nrows() {
            let m = f.get(v, w);
            out.extend((0..m as u32).map(|rank| Edge { level, source: w, target: v, rank }));
        }
        out
    }

    /// Checks connectivity and multiplicities of a path.
    pub fn check_path(&self, p: &FinitePath) -> Result<(), DiagramError> {
        if p.origin >= self.level_size(0) {
            return Err(DiagramError::InvalidPath(format!("origin {} outside V_0", p.origin)));
        }
        let mut at = p.origin;
        for (i, e) in p.edges.iter().enumerate() {
            if e.level != i || e.source != at || i >= self.depth() {
                return Err(DiagramError::InvalidPath(format!("edge {i} is disconnected")));
            }
            if e.target >= self.matrices[i].nrows()
                || u64::from(e.rank) >= self.matrices[i].get(e.target, e.source)
            {
                return Err(DiagramError::InvalidPath(format!("edge {i} does not exist")));
            }
            at = e.target;
        }
        Ok(())
    }

    /// Number of paths from `V_0` into `v ∈ V_level`.
    pub fn path_count(&self, level: usize, v: usize) -> BigUint {
        self.heights()[level][v].clone()
    }

    /// All paths from `V_0` to `v ∈ V_level`, ascending in the reverse
    /// lexicographic order induced by the edge order.
    pub fn enumerate_paths_to(
        &self,
        level: usize,
        v: usize,
        cap: usize,
    ) -> Result<Vec<FinitePath>, DiagramError> {
        let count = self.path_count(level, v);
        if count > BigUint::from(cap) {
            return Err(DiagramError::TooManyPaths { count: count.to_string(), cap });
        }
        Ok(self.paths_rec(level, v))
    }

    fn paths_rec(&self, level: usize, v: usize) -> Vec<FinitePath> {
        if level == 0 {
            return vec![FinitePath::empty(v)];
        }
        let mut out = Vec::new();
        for e in self.incoming(level - 1, v) {
            for p in self.paths_rec(level - 1, e.source) {
                out.push(p.extended(e));
            }
        }
        out
    }

    /// All paths from `V_0` to `V_level`.
    pub fn enumerate_cylinders(&self, level: usize, cap: usize) -> Result<Vec<FinitePath>, DiagramError> {
        let total: BigUint = self.heights()[level].iter().sum();
        if total > BigUint::from(cap) {
            return Err(DiagramError::TooManyPaths { count: total.to_string(), cap });
        }
        Ok((0..self.level_size(level)).flat_map(|v| self.paths_rec(level, v)).collect())
    }

    fn require_order(&self) -> Result<&EdgeOrder, DiagramError> {
        self.order.as_ref().ok_or(DiagramError::MissingOrder)
    }

    /// Path of minimal edges from `V_0` into `v ∈ V_level`.
    pub fn minimal_path_to(&self, level: usize, v: usize) -> Result<FinitePath, DiagramError> {
        self.extreme_path_to(level, v, false)
    }

    pub fn maximal_path_to(&self, level: usize, v: usize) -> Result<FinitePath, DiagramError> {
        self.extreme_path_to(level, v, true)
    }

    fn extreme_path_to(&self, level: usize, v: usize, max: bool) -> Result<FinitePath, DiagramError> {
        let order = self.require_order()?;
        let mut rev = Vec::with_capacity(level);
        let mut at = v;
        for n in (0..level).rev() {
            let inc = order.incoming(n, at);
            let &(source, rank) = if max { inc.last() } else { inc.first() }.ok_or(
                DiagramError::ZeroRow { level: n, vertex: self.matrices[n].row_window().label(at) },
            )?;
            rev.push(Edge { level: n, source, target: at, rank });
            at = source;
        }
        rev.reverse();
        Ok(FinitePath { origin: at, edges: rev })
    }

    pub fn is_maximal(&self, p: &FinitePath) -> Result<bool, DiagramError> {
        let order = self.require_order()?;
        Ok(p.edges.iter().all(|e| order.position(e) == Some(order.incoming(e.level, e.target).len() - 1)))
    }

    pub fn is_minimal(&self, p: &FinitePath) -> Result<bool, DiagramError> {
        let order = self.require_order()?;
        Ok(p.edges.iter().all(|e| order.position(e) == Some(0)))
    }

    /// Vershik successor: bump the first non-maximal edge and reset the prefix to minimal.
    pub fn vershik_successor(&self, p: &FinitePath) -> Result<Successor, DiagramError> {
        self.check_path(p)?;
        let order = self.require_order()?;
        for (k, e) in p.edges.iter().enumerate() {
            let inc = order.incoming(e.level, e.target);
            let pos = order.position(e).expect("checked path edge is ordered");
            if pos + 1 < inc.len() {
                let (source, rank) = inc[pos + 1];
                let next = Edge { level: e.level, source, target: e.target, rank };
                let mut q = self.minimal_path_to(k, source)?;
                q.edges.push(next);
                q.edges.extend_from_slice(&p.edges[k + 1..]);
                return Ok(Successor::Next(q));
            }
        }
        Ok(Successor::Maximal)
    }

    /// Smallest level from which the two paths share every edge.
    pub fn tail_equivalent(&self, p: &FinitePath, q: &FinitePath) -> Result<TailRelation, DiagramError> {
        self.check_path(p)?;
        self.check_path(q)?;
        if p.len() != q.len() {
            return Err(DiagramError::InvalidPath(format!("lengths {} and {} differ", p.len(), q.len())));
        }
        let n = p.len();
        let from = (0..n).rev().take_while(|&i| p.edges[i] == q.edges[i]).count();
        let m = n - from;
        if n == 0 {
            return Ok(if p.origin == q.origin {
                TailRelation::Equivalent { from_level: 0 }
            } else {
                TailRelation::NotEquivalent
            });
        }
        if m == n {
            return Ok(TailRelation::NotEquivalent);
        }
        Ok(TailRelation::Equivalent { from_level: m })
    }
}
