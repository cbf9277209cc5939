use std::collections::BTreeMap;

use super::{ExteriorError, Frame};
use crate::symcore::{Polynomial, Rational};

/// An affine map from `source` coordinates to `target` coordinates.
///
/// `images[i]` expresses target coordinate `i` as a polynomial of degree at
/// most one in the source coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineMap {
    source: Frame,
    target: Frame,
    images: Vec<Polynomial>,
}

impl AffineMap {
    pub fn new(
        source: &Frame,
        target: &Frame,
        images: Vec<Polynomial>,
    ) -> Result<Self, ExteriorError> {
        if images.len() != target.dim() {
            return Err(ExteriorError::ImageCount {
                expected: target.dim(),
                found: images.len(),
            });
        }
        let mut adopted = Vec::with_capacity(images.len());
        for (name, img) in target.vars().iter().zip(images) {
            let degree = img.total_degree();
            if degree > 1 {
                return Err(ExteriorError::NonAffine {
                    symbol: name.clone(),
                    degree,
                });
            }
            adopted.push(source.adopt(&img)?);
        }
        Ok(AffineMap {
            source: source.clone(),
            target: target.clone(),
            images: adopted,
        })
    }

    pub fn identity(frame: &Frame) -> Self {
        AffineMap {
            source: frame.clone(),
            target: frame.clone(),
            images: (0..frame.dim()).map(|i| frame.coordinate(i)).collect(),
        }
    }

    /// `target_i = source_i + shift_i` between two charts with the same symbols.
    pub fn translation(
        source: &Frame,
        target: &Frame,
        shift: &[Rational],
    ) -> Result<Self, ExteriorError> {
        assert_eq!(shift.len(), target.dim(), "one shift per coordinate");
        let images = target
            .vars()
            .iter()
            .zip(shift)
            .map(|(name, t)| {
                let x = source.coordinate_named(name)?;
                Ok(&x + &Polynomial::constant(source.vars(), t.clone()))
            })
            .collect::<Result<Vec<_>, ExteriorError>>()?;
        AffineMap::new(source, target, images)
    }

    /// The projection forgetting every source coordinate absent from `target`.
    pub fn projection(source: &Frame, target: &Frame) -> Result<Self, ExteriorError> {
        let images = target
            .vars()
            .iter()
            .map(|name| source.coordinate_named(name))
            .collect::<Result<Vec<_>, _>>()?;
        AffineMap::new(source, target, images)
    }

    pub fn source(&self) -> &Frame {
        &self.source
    }

    pub fn target(&self) -> &Frame {
        &self.target
    }

    pub fn images(&self) -> &[Polynomial] {
        &self.images
    }

    pub(crate) fn substitution(&self) -> BTreeMap<String, Polynomial> {
        self.target
            .vars()
            .iter()
            .cloned()
            .zip(self.images.iter().cloned())
            .collect()
    }

    /// `self` followed by `then`: source of `self` to target of `then`.
    pub fn then(&self, then: &AffineMap) -> Result<AffineMap, ExteriorError> {
        self.target.check_same(&then.source)?;
        let sub = self.substitution();
        let images = then
            .images
            .iter()
            .map(|img| img.substitute_affine(&sub))
            .collect::<Result<Vec<_>, _>>()?;
        AffineMap::new(&self.source, &then.target, images)
    }

    /// Maps a source point (exactly) to target coordinates.
    pub fn apply_exact(&self, point: &[Rational]) -> Vec<Rational> {
        self.images.iter().map(|f| f.eval_exact(point)).collect()
    }

    pub fn apply(&self, point: &[f64]) -> Vec<f64> {
        self.images.iter().map(|f| f.eval_f64(point)).collect()
    }
}
