use std::fmt;
use std::ops::{Add, Neg, Sub};

use super::{ExteriorError, Frame};
use crate::symcore::{CompiledPolynomial, Polynomial, Rational};

/// A polynomial vector field `v = v^i ∂/∂x^i` in one chart.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VectorField {
    frame: Frame,
    components: Vec<Polynomial>,
}

impl VectorField {
    pub fn zero(frame: &Frame) -> Self {
        VectorField {
            frame: frame.clone(),
            components: vec![frame.zero(); frame.dim()],
        }
    }

    /// The coordinate field `∂/∂x^idx`.
    pub fn coordinate(frame: &Frame, idx: usize) -> Self {
        let mut v = VectorField::zero(frame);
        v.components[idx] = Polynomial::one(frame.vars());
        v
    }

    pub fn coordinate_named(frame: &Frame, name: &str) -> Result<Self, ExteriorError> {
        Ok(VectorField::coordinate(frame, frame.require(name)?))
    }

    /// A field from `(symbol, component)` pairs; unnamed components are zero.
    pub fn from_named<'a, I>(frame: &Frame, comps: I) -> Result<Self, ExteriorError>
    where
        I: IntoIterator<Item = (&'a str, Polynomial)>,
    {
        let mut v = VectorField::zero(frame);
        for (name, f) in comps {
            let i = frame.require(name)?;
            v.components[i] = &v.components[i] + &frame.adopt(&f)?;
        }
        Ok(v)
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn component(&self, idx: usize) -> &Polynomial {
        &self.components[idx]
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Polynomial::is_zero)
    }

    /// Directional derivative `v(f)`.
    pub fn apply(&self, f: &Polynomial) -> Polynomial {
        self.components
            .iter()
            .enumerate()
            .filter(|(_, vi)| !vi.is_zero())
            .fold(self.frame.zero(), |acc, (i, vi)| {
                &acc + &(vi * &f.derivative(i))
            })
    }

    /// Commutator `[self, other]^i = self(other^i) - other(self^i)`.
    pub fn lie_bracket(&self, other: &VectorField) -> Result<VectorField, ExteriorError> {
        self.frame.check_same(&other.frame)?;
        let components = (0..self.frame.dim())
            .map(|i| &self.apply(&other.components[i]) - &other.apply(&self.components[i]))
            .collect();
        Ok(VectorField {
            frame: self.frame.clone(),
            components,
        })
    }

    pub fn scale(&self, c: &Rational) -> VectorField {
        VectorField {
            frame: self.frame.clone(),
            components: self.components.iter().map(|f| f.scale(c)).collect(),
        }
    }

    pub fn eval(&self, point: &[f64]) -> Vec<f64> {
        self.components.iter().map(|f| f.eval_f64(point)).collect()
    }

    pub fn eval_exact(&self, point: &[Rational]) -> Vec<Rational> {
        self.components
            .iter()
            .map(|f| f.eval_exact(point))
            .collect()
    }

    pub fn compile(&self) -> Vec<CompiledPolynomial> {
        self.components.iter().map(Polynomial::compile).collect()
    }

    fn combine(&self, rhs: &VectorField, negate: bool) -> VectorField {
        assert_eq!(
            self.frame, rhs.frame,
            "cannot combine fields on different charts"
        );
        let components = self
            .components
            .iter()
            .zip(&rhs.components)
            .map(|(a, b)| if negate { a - b } else { a + b })
            .collect();
        VectorField {
            frame: self.frame.clone(),
            components,
        }
    }
}

impl Add<&VectorField> for &VectorField {
    type Output = VectorField;
    fn add(self, rhs: &VectorField) -> VectorField {
        self.combine(rhs, false)
    }
}

impl Add for VectorField {
    type Output = VectorField;
    fn add(self, rhs: VectorField) -> VectorField {
        self.combine(&rhs, false)
    }
}

impl Sub<&VectorField> for &VectorField {
    type Output = VectorField;
    fn sub(self, rhs: &VectorField) -> VectorField {
        self.combine(rhs, true)
    }
}

impl Sub for VectorField {
    type Output = VectorField;
    fn sub(self, rhs: VectorField) -> VectorField {
        self.combine(&rhs, true)
    }
}

impl Neg for &VectorField {
    type Output = VectorField;
    fn neg(self) -> VectorField {
        VectorField {
            frame: self.frame.clone(),
            components: self.components.iter().map(|f| -f).collect(),
        }
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = self.frame.vars();
        let parts: Vec<String> = self
            .components
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| match c.constant_value() {
                Some(v) if v == Rational::from_integer(1.into()) => format!("d/d{}", names[i]),
                _ => format!("({c})*d/d{}", names[i]),
            })
            .collect();
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}
