//! Exterior calculus in a fixed chart.
//!
//! Forms and fields are chart-local: each carries the [`Frame`] whose
//! coordinates index its components, and binary operations refuse to mix
//! frames. A global object is a family of chart representatives related by
//! [`AffineMap`] pullbacks.

mod field;
mod form;
mod map;

pub use field::VectorField;
pub use form::DifferentialForm;
pub use map::AffineMap;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::symcore::{Polynomial, SymError, Vars};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExteriorError {
    #[error("objects live on different charts (`{left}` vs `{right}`)")]
    FrameMismatch { left: String, right: String },
    #[error("map targets chart `{expected}` but the form lives on `{found}`")]
    MapTarget { expected: String, found: String },
    #[error("map image for `{symbol}` has degree {degree}; only affine maps can pull back")]
    NonAffine { symbol: String, degree: u32 },
    #[error("expected {expected} image polynomials, got {found}")]
    ImageCount { expected: usize, found: usize },
    #[error(transparent)]
    Sym(#[from] SymError),
}

/// A chart: an identifier plus its ordered coordinate symbols.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    id: Arc<str>,
    vars: Vars,
}

impl Frame {
    pub fn new<S: AsRef<str>>(id: &str, names: &[S]) -> Self {
        Frame {
            id: id.into(),
            vars: crate::symcore::vars(names),
        }
    }

    /// A new chart sharing another chart's coordinate symbols.
    pub fn with_vars(id: &str, vars: Vars) -> Self {
        Frame {
            id: id.into(),
            vars,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn vars(&self) -> &Vars {
        &self.vars
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    pub fn require(&self, name: &str) -> Result<usize, ExteriorError> {
        self.index_of(name)
            .ok_or_else(|| SymError::UnknownSymbol(name.to_string()).into())
    }

    pub fn coordinate(&self, idx: usize) -> Polynomial {
        Polynomial::variable(&self.vars, idx)
    }

    pub fn coordinate_named(&self, name: &str) -> Result<Polynomial, ExteriorError> {
        Ok(self.coordinate(self.require(name)?))
    }

    pub fn zero(&self) -> Polynomial {
        Polynomial::zero(&self.vars)
    }

    pub(crate) fn check_same(&self, other: &Frame) -> Result<(), ExteriorError> {
        if self == other {
            Ok(())
        } else {
            Err(ExteriorError::FrameMismatch {
                left: self.id.to_string(),
                right: other.id.to_string(),
            })
        }
    }

    /// Brings a polynomial onto this frame's variable list.
    pub(crate) fn adopt(&self, p: &Polynomial) -> Result<Polynomial, ExteriorError> {
        Ok(p.embed(&self.vars)?)
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Frame({}: {})", self.id, self.vars.join(","))
    }
}

/// Sign of the permutation sorting `idx` ascending, or `None` if an entry repeats.
pub(crate) fn sort_sign(idx: &mut [usize]) -> Option<i32> {
    let mut sign = 1;
    // insertion sort; index lists never exceed the chart dimension
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 && idx[j - 1] > idx[j] {
            idx.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
        if j > 0 && idx[j - 1] == idx[j] {
            return None;
        }
    }
    if idx.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some(sign)
}

#[cfg(test)]
mod examples;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sort_sign_tracks_parity() {
        let mut a = [0, 1, 2];
        assert_eq!(sort_sign(&mut a), Some(1));
        let mut b = [1, 0, 2];
        assert_eq!(sort_sign(&mut b), Some(-1));
        assert_eq!(b, [0, 1, 2]);
        let mut c = [2, 0, 1];
        assert_eq!(sort_sign(&mut c), Some(1));
        let mut d = [2, 1, 2];
        assert_eq!(sort_sign(&mut d), None);
    }
}
