//! JSON spec files: a diagram plus optional Markov and kernel-chain blocks.

use std::collections::BTreeMap;

use bratteli_core::diagram::{BoundaryPolicy, Diagram, DiagramError, EdgeOrder, IncidenceMatrix, Window};
use bratteli_core::markov::{markov_from_tail_invariant, EdgeWeights, MarkovError, MarkovSystem, TransitionLevel};
use bratteli_core::measurable::{Kernel, KernelChain, KernelError};
use bratteli_core::laplacian::LaplacianError;
use bratteli_core::measures::{solve_tail_invariant, stationary_pf_measure, MeasureError, MeasureSequence};
use bratteli_core::perron::{PerronError, PfOptions};
use bratteli_core::substitution::{build_ordered_diagram, Substitution, SubstitutionError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub diagram: DiagramSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markov: Option<MarkovSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<KernelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagramSpec {
    pub depth: usize,
    pub matrices: MatrixSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<OrderSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSpec {
    /// One dense matrix repeated at every level.
    Stationary { dense: Vec<Vec<u64>> },
    /// `[level, target, source, multiplicity]` entries over per-level windows `V_0, …, V_depth`.
    Triplets { windows: Vec<Window>, entries: Vec<[i64; 4]> },
    /// Square band matrix on `window` with `{offset: multiplicity}` rows.
    Band {
        window: Window,
        offsets: BTreeMap<i64, u64>,
        #[serde(default)]
        boundary: BoundaryPolicy,
    },
    /// Substitution matrix with left-to-right edge order.
    Substitution {
        rule: Substitution,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<Window>,
        #[serde(default)]
        boundary: BoundaryPolicy,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OrderSpec {
    /// Sources ascending, ranks ascending.
    Natural,
    /// `levels[n][v]` lists `(source, rank)` from smallest to largest.
    Explicit(Vec<Vec<Vec<(usize, u32)>>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSpec {
    /// Initial distribution on `V_0`; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<Vec<f64>>,
    pub p: TransitionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TransitionSpec {
    Uniform,
    /// Induced by the Perron measure (stationary) or the uniform backward solution.
    FromTailInvariant,
    Entries(Vec<EdgeProbability>),
}

/// Probability of the edges `source ∈ V_level → target ∈ V_{level+1}` (labels);
/// all parallel edges when `rank` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeProbability {
    pub level: usize,
    pub source: i64,
    pub target: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<u32>,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub nu0: Vec<f64>,
    /// Row-stochastic kernels `P_0, P_1, …` as dense rows.
    pub kernels: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("cannot read spec: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse spec: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Substitution(#[from] SubstitutionError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Perron(#[from] PerronError),
    #[error(transparent)]
    Laplacian(#[from] LaplacianError),
    #[error("spec has no {0} block")]
    Missing(&'static str),
    #[error("invalid spec: {0}")]
    Invalid(String),
}

impl SpecError {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> String {
        match self {
            Self::Io(_) => "Io".into(),
            Self::Parse(_) => "Parse".into(),
            Self::Diagram(e) => variant_name(e),
            Self::Substitution(SubstitutionError::Diagram(e)) => variant_name(e),
            Self::Substitution(e) => variant_name(e),
            Self::Markov(MarkovError::Diagram(e)) => variant_name(e),
            Self::Markov(e) => variant_name(e),
            Self::Kernel(e) => variant_name(e),
            Self::Measure(e) => variant_name(e),
            Self::Perron(e) => variant_name(e),
            Self::Laplacian(e) => variant_name(e),
            Self::Missing(_) => "Missing".into(),
            Self::Invalid(_) => "Invalid".into(),
        }
    }
}

/// `Foo { .. }` / `Foo(..)` → `Foo`.
pub fn variant_name(e: &impl std::fmt::Debug) -> String {
    let s = format!("{e:?}");
    s.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_string()
}

impl SpecFile {
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &std::path::Path) -> Result<Self, SpecError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Incidence matrices before structural validation.
    pub fn raw_matrices(&self) -> Result<Vec<IncidenceMatrix>, SpecError> {
        let depth = self.diagram.depth;
        match &self.diagram.matrices {
            MatrixSpec::Stationary { dense } => {
                let cols = dense.first().map_or(0, Vec::len);
                if dense.iter().any(|r| r.len() != cols) {
                    return Err(SpecError::Invalid("ragged dense matrix".into()));
                }
                Ok(vec![IncidenceMatrix::from_dense(dense); depth])
            }
            MatrixSpec::Triplets { windows, entries } => {
                if windows.len() != depth + 1 {
                    return Err(SpecError::Invalid(format!("{} windows for depth {depth}", windows.len())));
                }
                (0..depth)
                    .map(|n| {
                        let rows = entries
                            .iter()
                            .filter(|e| e[0] == n as i64)
                            .map(|e| (e[1], e[2], u64::try_from(e[3]).unwrap_or(0)));
                        if let Some(e) = entries.iter().find(|e| e[3] < 0 || e[0] < 0 || e[0] >= depth as i64) {
                            return Err(SpecError::Invalid(format!("bad entry {e:?}")));
                        }
                        Ok(IncidenceMatrix::from_triplets(n, windows[n + 1], windows[n], rows)?)
                    })
                    .collect()
            }
            MatrixSpec::Band { window, offsets, boundary } => {
                let span = match (offsets.keys().next(), offsets.keys().next_back()) {
                    (Some(lo), Some(hi)) => (hi - lo + 1) as usize,
                    _ => return Err(SpecError::Invalid("band has no offsets".into())),
                };
                if window.len() < span {
                    return Err(DiagramError::WindowMismatch {
                        level: 0,
                        detail: format!("window of {} vertices is narrower than the offset span {span}", window.len()),
                    }
                    .into());
                }
                Ok(vec![IncidenceMatrix::band(*window, offsets, *boundary); depth])
            }
            MatrixSpec::Substitution { rule, window, boundary } => {
                let m = bratteli_core::substitution::substitution_matrix(rule, *window, *boundary)?;
                Ok(vec![m; depth])
            }
        }
    }

    /// Every structural violation of the diagram block.
    pub fn violations(&self) -> Result<Vec<DiagramError>, SpecError> {
        if self.diagram.depth == 0 {
            return Ok(vec![DiagramError::Empty]);
        }
        Ok(Diagram::violations(&self.raw_matrices()?))
    }

    pub fn build_diagram(&self) -> Result<Diagram, SpecError> {
        let depth = self.diagram.depth;
        let d = match &self.diagram.matrices {
            MatrixSpec::Substitution { rule, window, boundary } => {
                self.raw_matrices()?;
                let d = build_ordered_diagram(rule, *window, *boundary, depth)?;
                return match &self.diagram.order {
                    None => Ok(d),
                    Some(o) => Ok(apply_order(d, o)?),
                };
            }
            MatrixSpec::Triplets { .. } => Diagram::new(self.raw_matrices()?)?,
            _ => {
                let mats = self.raw_matrices()?;
                let first = mats.first().cloned().ok_or(DiagramError::Empty)?;
                Diagram::stationary(first, depth)?
            }
        };
        Ok(match &self.diagram.order {
            None => d,
            Some(o) => apply_order(d, o)?,
        })
    }

    pub fn build_markov(&self, d: &Diagram) -> Result<MarkovSystem, SpecError> {
        let spec = self.markov.as_ref().ok_or(SpecError::Missing("markov"))?;
        let q0 = spec.q0.clone().unwrap_or_else(|| vec![1.0 / d.level_size(0) as f64; d.level_size(0)]);
        match &spec.p {
            TransitionSpec::Uniform => Ok(MarkovSystem::uniform(d.clone(), q0)?),
            TransitionSpec::FromTailInvariant => {
                let nu = tail_invariant(d)?;
                let nu = match &spec.q0 {
                    Some(q) => {
                        let scale = q.iter().sum::<f64>() / nu.total_mass();
                        nu.scaled(scale)
                    }
                    None => nu.normalized(),
                };
                Ok(markov_from_tail_invariant(d, &nu)?)
            }
            TransitionSpec::Entries(entries) => Ok(MarkovSystem::new(d.clone(), q0, transition_levels(d, entries)?)?),
        }
    }

    pub fn build_chain(&self) -> Result<KernelChain, SpecError> {
        let spec = self.kernels.as_ref().ok_or(SpecError::Missing("kernels"))?;
        let kernels = spec.kernels.iter().map(|k| Kernel::from_rows(k.clone())).collect::<Result<_, _>>()?;
        Ok(KernelChain::new(spec.nu0.clone(), kernels)?)
    }
}

/// Perron measure for stationary diagrams, backward solution from a uniform top level otherwise.
pub fn tail_invariant(d: &Diagram) -> Result<MeasureSequence, MeasureError> {
    if d.is_stationary() {
        Ok(stationary_pf_measure(d, &PfOptions::default())?.measure)
    } else {
        solve_tail_invariant(d, None)
    }
}

fn apply_order(d: Diagram, o: &OrderSpec) -> Result<Diagram, DiagramError> {
    match o {
        OrderSpec::Natural => Ok(d.with_natural_order()),
        OrderSpec::Explicit(levels) => d.with_order(EdgeOrder::new(levels.clone())),
    }
}

/// Probability per rank; `None` covers every parallel edge.
type RankProbabilities = BTreeMap<Option<u32>, f64>;

fn transition_levels(d: &Diagram, entries: &[EdgeProbability]) -> Result<Vec<TransitionLevel>, SpecError> {
    let mut acc: Vec<BTreeMap<(usize, usize), RankProbabilities>> = vec![BTreeMap::new(); d.depth()];
    for e in entries {
        if e.level >= d.depth() {
            return Err(SpecError::Invalid(format!("entry at level {} beyond depth {}", e.level, d.depth())));
        }
        let src = d.level_window(e.level).local(e.source);
        let tgt = d.level_window(e.level + 1).local(e.target);
        let (Some(v), Some(u)) = (src, tgt) else {
            return Err(SpecError::Invalid(format!("edge {} -> {} at level {} leaves the windows", e.source, e.target, e.level)));
        };
        acc[e.level].entry((v, u)).or_default().insert(e.rank, e.p);
    }
    (0..d.depth())
        .map(|n| {
            let f = d.matrix(n);
            let out = f
                .columns()
                .iter()
                .enumerate()
                .map(|(v, targets)| {
                    targets
                        .iter()
                        .map(|&(u, m)| {
                            let given = acc[n].get(&(v, u)).ok_or_else(|| {
                                SpecError::Invalid(format!("level {n}: no probability for edge {} -> {}", d.level_window(n).label(v), d.level_window(n + 1).label(u)))
                            })?;
                            let w = match given.get(&None) {
                                Some(&p) if given.len() == 1 => EdgeWeights::Shared { p, multiplicity: m },
                                _ => EdgeWeights::PerRank(
                                    (0..m as u32)
                                        .map(|r| {
                                            given.get(&Some(r)).copied().ok_or_else(|| {
                                                SpecError::Invalid(format!("level {n}: rank {r} of edge {v} -> {u} missing"))
                                            })
                                        })
                                        .collect::<Result<_, _>>()?,
                                ),
                            };
                            Ok((u, w))
                        })
                        .collect::<Result<Vec<_>, SpecError>>()
                })
                .collect::<Result<_, _>>()?;
            Ok(TransitionLevel { out })
        })
        .collect()
}

/// Built-in example specs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Example {
    AllOnes,
    Fibonacci,
    Odometer,
    DrunkenMan,
    Random,
}

pub fn example(kind: Example, depth: usize, seed: u64) -> SpecFile {
    let matrices = match kind {
        Example::AllOnes => MatrixSpec::Stationary { dense: vec![vec![1, 1], vec![1, 1]] },
        Example::Fibonacci => MatrixSpec::Stationary { dense: vec![vec![1, 1], vec![1, 0]] },
        Example::Odometer => MatrixSpec::Stationary { dense: vec![vec![2]] },
        Example::DrunkenMan => MatrixSpec::Substitution {
            rule: Substitution::drunken_man(),
            window: Some(Window::symmetric(20)),
            boundary: BoundaryPolicy::Reflect,
        },
        Example::Random => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let d = bratteli_core::gen::random_diagram(&mut rng, depth, 2..=4, 2);
            let windows = (0..=depth).map(|n| d.level_window(n)).collect();
            let entries = (0..depth)
                .flat_map(|n| {
                    let f = d.matrix(n);
                    (0..f.nrows())
                        .flat_map(move |v| f.row(v).iter().map(move |&(w, m)| [n as i64, v as i64, w as i64, m as i64]))
                        .collect::<Vec<_>>()
                })
                .collect();
            MatrixSpec::Triplets { windows, entries }
        }
    };
    let markov = Some(MarkovSpec { q0: None, p: TransitionSpec::Uniform });
    SpecFile { diagram: DiagramSpec { depth, matrices, order: Some(OrderSpec::Natural) }, markov, kernels: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        for kind in [Example::AllOnes, Example::Fibonacci, Example::Odometer, Example::DrunkenMan, Example::Random] {
            let s = example(kind, 3, 1);
            assert_eq!(SpecFile::parse(&s.to_json()).unwrap(), s);
        }
        let mut s = example(Example::AllOnes, 2, 0);
        s.markov = Some(MarkovSpec {
            q0: Some(vec![0.25, 0.75]),
            p: TransitionSpec::Entries(vec![EdgeProbability { level: 0, source: 0, target: 1, rank: Some(0), p: 0.5 }]),
        });
        s.kernels = Some(KernelSpec { nu0: vec![1.0], kernels: vec![vec![vec![1.0]]] });
        s.diagram.matrices = MatrixSpec::Band { window: Window::new(-3, 3), offsets: [(-1, 1), (1, 2)].into(), boundary: BoundaryPolicy::Truncate };
        assert_eq!(SpecFile::parse(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = r#"{"diagram": {"depth": 1, "matrices": {"stationary": {"dense": [[1]]}}, "extra": 1}}"#;
        assert!(matches!(SpecFile::parse(text), Err(SpecError::Parse(_))));
    }

    #[test]
    fn narrow_band_window() {
        let text = r#"{"diagram": {"depth": 2, "matrices": {"band": {"window": [0, 1], "offsets": {"-1": 1, "0": 2, "1": 1}}}}}"#;
        let s = SpecFile::parse(text).unwrap();
        let e = s.raw_matrices().unwrap_err();
        assert_eq!(e.kind(), "WindowMismatch");
    }

    #[test]
    fn explicit_probabilities() {
        let text = r#"{
            "diagram": {"depth": 1, "matrices": {"stationary": {"dense": [[1, 1], [1, 1]]}}},
            "markov": {"q0": [0.5, 0.5], "p": {"entries": [
                {"level": 0, "source": 0, "target": 0, "p": 0.5},
                {"level": 0, "source": 0, "target": 1, "p": 0.5},
                {"level": 0, "source": 1, "target": 0, "p": 0.5},
                {"level": 0, "source": 1, "target": 1, "p": 0.4}
            ]}}
        }"#;
        let s = SpecFile::parse(text).unwrap();
        let d = s.build_diagram().unwrap();
        let e = s.build_markov(&d).unwrap_err();
        assert_eq!(e.kind(), "StochasticityViolation");
    }
}
