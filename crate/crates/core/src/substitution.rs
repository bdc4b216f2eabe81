//! Substitutions and the stationary ordered diagrams they generate.
//!
//! Row `a` of the substitution matrix counts the letters of `σ(a)`, so the
//! diagram has `m_ab` edges from `b ∈ V_n` to `a ∈ V_{n+1}`, ordered by their
//! position in `σ(a)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagram::{BoundaryPolicy, Diagram, DiagramError, EdgeOrder, IncidenceMatrix, Window};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubstitutionError {
    #[error("letter {0} has an empty image")]
    EmptyImage(i64),
    #[error("unknown letter '{0}' in image")]
    UnknownLetter(char),
    #[error("an affine substitution needs a window")]
    MissingWindow,
    #[error(transparent)]
    Diagram(#[from] DiagramError),
}

/// Letters are integers; finite alphabets use `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Substitution {
    /// Explicit images over a finite alphabet of named letters.
    Finite { letters: Vec<char>, images: Vec<Vec<usize>> },
    /// `σ(n) = (n + o_1)(n + o_2)⋯` except at listed letters, on letters `≥ min_letter` if set.
    Affine {
        offsets: Vec<i64>,
        #[serde(default)]
        exceptions: BTreeMap<i64, Vec<i64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_letter: Option<i64>,
    },
}

/// Whether every image has the same length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConstantLength {
    Yes(usize),
    No,
}

impl Substitution {
    /// From `(letter, image)` pairs such as `("a", "ab")`; letters are sorted.
    pub fn from_words(rules: &[(char, &str)]) -> Result<Self, SubstitutionError> {
        let mut letters: Vec<char> = rules.iter().map(|r| r.0).collect();
        letters.sort_unstable();
        letters.dedup();
        let index = |c: char| letters.iter().position(|&l| l == c).ok_or(SubstitutionError::UnknownLetter(c));
        let mut images = vec![Vec::new(); letters.len()];
        for &(a, word) in rules {
            images[index(a)?] = word.chars().map(index).collect::<Result<_, _>>()?;
        }
        let s = Self::Finite { letters, images };
        s.check()?;
        Ok(s)
    }

    /// `n ↦ (n−2) n n (n+2)` on `2ℤ`, written in the coordinate `n / 2`.
    pub fn drunken_man() -> Self {
        Self::Affine { offsets: vec![-1, 0, 0, 1], exceptions: BTreeMap::new(), min_letter: None }
    }

    pub fn check(&self) -> Result<(), SubstitutionError> {
        match self {
            Self::Finite { images, .. } => match images.iter().position(Vec::is_empty) {
                Some(a) => Err(SubstitutionError::EmptyImage(a as i64)),
                None => Ok(()),
            },
            Self::Affine { offsets, exceptions, .. } => {
                if offsets.is_empty() {
                    return Err(SubstitutionError::EmptyImage(i64::MIN));
                }
                match exceptions.iter().find(|(_, w)| w.is_empty()) {
                    Some((&a, _)) => Err(SubstitutionError::EmptyImage(a)),
                    None => Ok(()),
                }
            }
        }
    }

    pub fn is_letter(&self, a: i64) -> bool {
        match self {
            Self::Finite { letters, .. } => a >= 0 && (a as usize) < letters.len(),
            Self::Affine { min_letter, .. } => min_letter.is_none_or(|m| a >= m),
        }
    }

    /// `σ(a)` as a word of letters.
    pub fn image(&self, a: i64) -> Vec<i64> {
        if !self.is_letter(a) {
            return Vec::new();
        }
        match self {
            Self::Finite { images, .. } => images[a as usize].iter().map(|&b| b as i64).collect(),
            Self::Affine { offsets, exceptions, .. } => match exceptions.get(&a) {
                Some(w) => w.clone(),
                None => offsets.iter().map(|o| a + o).collect(),
            },
        }
    }

    /// Natural window: the whole alphabet for finite substitutions.
    pub fn default_window(&self) -> Option<Window> {
        match self {
            Self::Finite { letters, .. } => Some(Window::first(letters.len())),
            Self::Affine { .. } => None,
        }
    }

    pub fn constant_length(&self) -> ConstantLength {
        let lens: Vec<usize> = match self {
            Self::Finite { images, .. } => images.iter().map(Vec::len).collect(),
            Self::Affine { offsets, exceptions, .. } => {
                std::iter::once(offsets.len()).chain(exceptions.values().map(Vec::len)).collect()
            }
        };
        match lens.split_first() {
            Some((&l, rest)) if rest.iter().all(|&x| x == l) => ConstantLength::Yes(l),
            _ => ConstantLength::No,
        }
    }

    fn resolve_window(&self, window: Option<Window>) -> Result<Window, SubstitutionError> {
        window.or_else(|| self.default_window()).ok_or(SubstitutionError::MissingWindow)
    }
}

/// `m_ab = #{b in σ(a)}` on `window`; out-of-window letters follow `policy`.
pub fn substitution_matrix(
    s: &Substitution,
    window: Option<Window>,
    policy: BoundaryPolicy,
) -> Result<IncidenceMatrix, SubstitutionError> {
    s.check()?;
    let w = s.resolve_window(window)?;
    Ok(IncidenceMatrix::from_row_rule(w, policy, |a| s.image(a).into_iter().map(|b| (b, 1)).collect()))
}

/// Stationary diagram of depth `depth` with left-to-right edge order.
pub fn build_ordered_diagram(
    s: &Substitution,
    window: Option<Window>,
    policy: BoundaryPolicy,
    depth: usize,
) -> Result<Diagram, SubstitutionError> {
    let f = substitution_matrix(s, window, policy)?;
    let w = f.row_window();
    let row_order: Vec<Vec<(usize, u32)>> = (0..w.len())
        .map(|v| {
            let mut seen: BTreeMap<usize, u32> = BTreeMap::new();
            s.image(w.label(v))
                .into_iter()
                .filter_map(|b| match w.local(b) {
                    Some(k) => Some(k),
                    None if policy == BoundaryPolicy::Reflect => w.local(w.clamp(b)),
                    None => None,
                })
                .map(|k| {
                    let r = seen.entry(k).or_insert(0);
                    *r += 1;
                    (k, *r - 1)
                })
                .collect()
        })
        .collect();
    let d = Diagram::stationary(f, depth)?;
    let order = EdgeOrder::new(vec![row_order; depth]);
    Ok(d.with_order(order)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{FinitePath, Successor};

    fn fib_sub() -> Substitution {
        Substitution::from_words(&[('a', "ab"), ('b', "a")]).unwrap()
    }

    #[test]
    fn matrix_counts_letters() {
        let m = substitution_matrix(&fib_sub(), None, BoundaryPolicy::Truncate).unwrap();
        assert_eq!(m.to_dense(), vec![vec![1, 1], vec![1, 0]]);
        assert_eq!(m.row_sums(), vec![2, 1]);
    }

    #[test]
    fn empty_image_rejected() {
        let s = Substitution::Finite { letters: vec!['a', 'b'], images: vec![vec![0], vec![]] };
        assert_eq!(substitution_matrix(&s, None, BoundaryPolicy::Truncate), Err(SubstitutionError::EmptyImage(1)));
    }

    #[test]
    fn constant_lengths() {
        assert_eq!(Substitution::drunken_man().constant_length(), ConstantLength::Yes(4));
        assert_eq!(fib_sub().constant_length(), ConstantLength::No);
        let s = Substitution::Affine {
            offsets: vec![-2, 1],
            exceptions: [(0, vec![0, 1]), (1, vec![0, 2])].into(),
            min_letter: Some(0),
        };
        assert_eq!(s.constant_length(), ConstantLength::Yes(2));
        assert_eq!(s.image(5), vec![3, 6]);
        assert_eq!(s.image(1), vec![0, 2]);
        assert!(s.image(-1).is_empty());
    }

    #[test]
    fn drunken_man_rows() {
        let m = substitution_matrix(&Substitution::drunken_man(), Some(Window::symmetric(3)), BoundaryPolicy::Reflect).unwrap();
        assert_eq!(m.row_sums(), vec![4; 7]);
        assert_eq!(m.get(3, 2), 1);
        assert_eq!(m.get(3, 3), 2);
    }

    #[test]
    fn order_is_left_to_right() {
        let d = build_ordered_diagram(&fib_sub(), None, BoundaryPolicy::Truncate, 2).unwrap();
        let inc = d.incoming(0, 0);
        assert_eq!(inc.iter().map(|e| e.source).collect::<Vec<_>>(), vec![0, 1]);
        let ba = Substitution::from_words(&[('a', "ba"), ('b', "a")]).unwrap();
        let d = build_ordered_diagram(&ba, None, BoundaryPolicy::Truncate, 2).unwrap();
        assert_eq!(d.incoming(0, 0).iter().map(|e| e.source).collect::<Vec<_>>(), vec![1, 0]);
    }

    #[test]
    fn vershik_bijection_on_fibonacci_paths() {
        let d = build_ordered_diagram(&fib_sub(), None, BoundaryPolicy::Truncate, 3).unwrap();
        let paths = d.enumerate_cylinders(3, 100).unwrap();
        let non_max: Vec<&FinitePath> = paths.iter().filter(|p| !d.is_maximal(p).unwrap()).collect();
        let non_min: Vec<&FinitePath> = paths.iter().filter(|p| !d.is_minimal(p).unwrap()).collect();
        let mut images: Vec<FinitePath> = non_max
            .iter()
            .map(|p| match d.vershik_successor(p).unwrap() {
                Successor::Next(q) => q,
                Successor::Maximal => panic!("non-maximal path has a successor"),
            })
            .collect();
        images.sort_by(|a, b| format!("{a:?}").cmp(&format!("{b:?}")));
        let mut want: Vec<FinitePath> = non_min.into_iter().cloned().collect();
        want.sort_by(|a, b| format!("{a:?}").cmp(&format!("{b:?}")));
        assert_eq!(images, want);
        assert_eq!(paths.len(), 8);
        assert_eq!(non_max.len(), 6);
    }
}
