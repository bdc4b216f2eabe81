//! Harmonic analysis on generalized Bratteli diagrams.
//!
//! Diagrams with integer-labelled levels ([`diagram`]), Perron–Frobenius data
//! for banded and finite incidence matrices ([`perron`]), tail-invariant
//! measures ([`measures`]), Markov path measures and their dual kernels
//! ([`markov`]), weighted-network Laplacians ([`laplacian`]), substitution
//! diagrams ([`substitution`]) and finite-cell measurable kernels
//! ([`measurable`]). Random instances live in [`gen`].

pub mod diagram;
pub mod gen;
pub mod laplacian;
pub mod linalg;
pub mod markov;
pub mod measurable;
pub mod measures;
pub mod perron;
pub mod substitution;

pub use diagram::{BoundaryPolicy, Diagram, DiagramError, Edge, EdgeOrder, FinitePath, IncidenceMatrix, Window};
pub use laplacian::{Boundary, LaplacianError, WeightedNetwork};
pub use markov::{HatKernels, MarkovError, MarkovSystem};
pub use measurable::{DualPair, Kernel, KernelChain, KernelError};
pub use measures::{MeasureError, MeasureSequence};
pub use perron::{PerronError, PfOptions, SpectralData};
pub use substitution::{Substitution, SubstitutionError};

/// Any error raised by this crate.
#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Perron(#[from] PerronError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    Laplacian(#[from] LaplacianError),
    #[error(transparent)]
    Substitution(#[from] SubstitutionError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}
