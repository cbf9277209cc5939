use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_traits::{One, Zero};

use super::{sort_sign, AffineMap, ExteriorError, Frame, VectorField};
use crate::symcore::{Polynomial, Rational};

/// A differential `k`-form in one chart.
///
/// Components are stored in the canonical antisymmetric representation:
/// keys are strictly increasing coordinate index lists of length `k`,
/// values are nonzero polynomials over the frame's variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DifferentialForm {
    frame: Frame,
    degree: usize,
    components: BTreeMap<Vec<usize>, Polynomial>,
}

impl DifferentialForm {
    pub fn zero(frame: &Frame, degree: usize) -> Self {
        DifferentialForm {
            frame: frame.clone(),
            degree,
            components: BTreeMap::new(),
        }
    }

    /// A 0-form.
    pub fn function(frame: &Frame, f: &Polynomial) -> Result<Self, ExteriorError> {
        let f = frame.adopt(f)?;
        let mut out = DifferentialForm::zero(frame, 0);
        out.accumulate(Vec::new(), f);
        Ok(out)
    }

    pub fn constant(frame: &Frame, c: Rational) -> Self {
        let mut out = DifferentialForm::zero(frame, 0);
        out.accumulate(Vec::new(), Polynomial::constant(frame.vars(), c));
        out
    }

    /// The coordinate differential `dx^idx`.
    pub fn differential(frame: &Frame, idx: usize) -> Self {
        assert!(idx < frame.dim(), "coordinate index {idx} out of range");
        let mut out = DifferentialForm::zero(frame, 1);
        out.accumulate(vec![idx], Polynomial::one(frame.vars()));
        out
    }

    pub fn differential_named(frame: &Frame, name: &str) -> Result<Self, ExteriorError> {
        Ok(DifferentialForm::differential(frame, frame.require(name)?))
    }

    /// Builds a form from arbitrary (not necessarily sorted) index lists,
    /// applying the permutation sign and dropping repeated indices.
    pub fn from_components<I>(frame: &Frame, degree: usize, comps: I) -> Result<Self, ExteriorError>
    where
        I: IntoIterator<Item = (Vec<usize>, Polynomial)>,
    {
        let mut out = DifferentialForm::zero(frame, degree);
        for (mut idx, f) in comps {
            assert_eq!(
                idx.len(),
                degree,
                "component index length must equal the degree"
            );
            assert!(
                idx.iter().all(|&i| i < frame.dim()),
                "component index out of range"
            );
            if let Some(sign) = sort_sign(&mut idx) {
                let f = frame.adopt(&f)?;
                out.accumulate(idx, if sign < 0 { -f } else { f });
            }
        }
        Ok(out)
    }

    fn accumulate(&mut self, idx: Vec<usize>, f: Polynomial) {
        if f.is_zero() {
            return;
        }
        match self.components.remove(&idx) {
            Some(existing) => {
                let sum = &existing + &f;
                if !sum.is_zero() {
                    self.components.insert(idx, sum);
                }
            }
            None => {
                self.components.insert(idx, f);
            }
        }
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn components(&self) -> impl Iterator<Item = (&Vec<usize>, &Polynomial)> {
        self.components.iter()
    }

    pub fn component(&self, idx: &[usize]) -> Polynomial {
        self.components
            .get(idx)
            .cloned()
            .unwrap_or_else(|| self.frame.zero())
    }

    pub fn is_zero(&self) -> bool {
        self.components.is_empty()
    }

    /// The coefficient of a 0-form.
    pub fn as_function(&self) -> Polynomial {
        debug_assert_eq!(self.degree, 0);
        self.component(&[])
    }

    pub fn scale(&self, c: &Rational) -> Self {
        let mut out = DifferentialForm::zero(&self.frame, self.degree);
        for (idx, f) in &self.components {
            out.accumulate(idx.clone(), f.scale(c));
        }
        out
    }

    /// Multiplication by a function.
    pub fn mul_function(&self, g: &Polynomial) -> Result<Self, ExteriorError> {
        let g = self.frame.adopt(g)?;
        let mut out = DifferentialForm::zero(&self.frame, self.degree);
        for (idx, f) in &self.components {
            out.accumulate(idx.clone(), f * &g);
        }
        Ok(out)
    }

    /// Exterior product.
    pub fn wedge(&self, other: &DifferentialForm) -> Result<Self, ExteriorError> {
        self.frame.check_same(&other.frame)?;
        let mut out = DifferentialForm::zero(&self.frame, self.degree + other.degree);
        for (i, f) in &self.components {
            for (j, g) in &other.components {
                let mut idx: Vec<usize> = i.iter().chain(j.iter()).copied().collect();
                if let Some(sign) = sort_sign(&mut idx) {
                    let prod = f * g;
                    out.accumulate(idx, if sign < 0 { -prod } else { prod });
                }
            }
        }
        Ok(out)
    }

    /// Exterior derivative.
    pub fn d(&self) -> Self {
        let mut out = DifferentialForm::zero(&self.frame, self.degree + 1);
        for (idx, f) in &self.components {
            for j in 0..self.frame.dim() {
                if idx.contains(&j) {
                    continue;
                }
                let df = f.derivative(j);
                if df.is_zero() {
                    continue;
                }
                let pos = idx.iter().filter(|&&i| i < j).count();
                let mut new_idx = idx.clone();
                new_idx.insert(pos, j);
                out.accumulate(new_idx, if pos % 2 == 1 { -df } else { df });
            }
        }
        out
    }

    /// Interior product `v ⌟ self`; a 0-form contracts to zero.
    pub fn interior(&self, v: &VectorField) -> Result<Self, ExteriorError> {
        self.frame.check_same(v.frame())?;
        if self.degree == 0 {
            return Ok(DifferentialForm::zero(&self.frame, 0));
        }
        let mut out = DifferentialForm::zero(&self.frame, self.degree - 1);
        for (idx, f) in &self.components {
            for (r, &i) in idx.iter().enumerate() {
                let vi = v.component(i);
                if vi.is_zero() {
                    continue;
                }
                let mut rest = idx.clone();
                rest.remove(r);
                let term = vi * f;
                out.accumulate(rest, if r % 2 == 1 { -term } else { term });
            }
        }
        Ok(out)
    }

    /// Lie derivative through Cartan's formula `L_v = v⌟d + d(v⌟·)`.
    pub fn lie_derivative(&self, v: &VectorField) -> Result<Self, ExteriorError> {
        let a = self.d().interior(v)?;
        let b = self.interior(v)?.d();
        Ok(if self.degree == 0 { a } else { a + b })
    }

    /// Lie derivative from the coordinate formula: transport of the
    /// coefficients plus the action of `dv^i` on each basis slot.
    pub fn lie_derivative_coordinate(&self, v: &VectorField) -> Result<Self, ExteriorError> {
        self.frame.check_same(v.frame())?;
        let mut out = DifferentialForm::zero(&self.frame, self.degree);
        for (idx, f) in &self.components {
            out.accumulate(idx.clone(), v.apply(f));
            for (r, &i) in idx.iter().enumerate() {
                let vi = v.component(i);
                for j in 0..self.frame.dim() {
                    let dvi = vi.derivative(j);
                    if dvi.is_zero() {
                        continue;
                    }
                    let mut new_idx = idx.clone();
                    new_idx[r] = j;
                    if let Some(sign) = sort_sign(&mut new_idx) {
                        let term = f * &dvi;
                        out.accumulate(new_idx, if sign < 0 { -term } else { term });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Pullback along an affine chart map whose target is this form's chart.
    pub fn pullback(&self, map: &AffineMap) -> Result<Self, ExteriorError> {
        if map.target() != &self.frame {
            return Err(ExteriorError::MapTarget {
                expected: map.target().id().to_string(),
                found: self.frame.id().to_string(),
            });
        }
        let source = map.source();
        let substitution = map.substitution();
        let differentials: Vec<DifferentialForm> = map
            .images()
            .iter()
            .map(|img| DifferentialForm::function(source, img).map(|f| f.d()))
            .collect::<Result<_, _>>()?;
        let mut out = DifferentialForm::zero(source, self.degree);
        for (idx, f) in &self.components {
            let g = f.substitute_affine(&substitution)?;
            let mut piece = DifferentialForm::function(source, &g)?;
            for &i in idx {
                piece = piece.wedge(&differentials[i])?;
            }
            for (k, h) in piece.components {
                out.accumulate(k, h);
            }
        }
        Ok(out)
    }

    /// Basic with respect to `xi`: both `xi ⌟ self` and `L_xi self` vanish.
    pub fn is_basic(&self, xi: &VectorField) -> Result<bool, ExteriorError> {
        Ok(self.interior(xi)?.is_zero() && self.lie_derivative(xi)?.is_zero())
    }

    /// Value of a 0-form that is a constant, if it is one.
    pub fn constant_value(&self) -> Option<Rational> {
        match self.degree {
            0 => self.as_function().constant_value(),
            _ if self.is_zero() => Some(Rational::zero()),
            _ => None,
        }
    }

    pub fn is_one(&self) -> bool {
        self.degree == 0 && self.constant_value().is_some_and(|c| c.is_one())
    }

    /// Numeric components at a point as `(index list, value)` pairs.
    pub fn eval_components(&self, point: &[f64]) -> Vec<(Vec<usize>, f64)> {
        self.components
            .iter()
            .map(|(idx, f)| (idx.clone(), f.eval_f64(point)))
            .collect()
    }

    pub fn eval_components_exact(&self, point: &[Rational]) -> Vec<(Vec<usize>, Rational)> {
        self.components
            .iter()
            .map(|(idx, f)| (idx.clone(), f.eval_exact(point)))
            .collect()
    }

    fn combine(self, rhs: &DifferentialForm, negate: bool) -> DifferentialForm {
        assert_eq!(
            self.frame, rhs.frame,
            "cannot combine forms on different charts"
        );
        assert_eq!(
            self.degree, rhs.degree,
            "cannot add forms of different degree"
        );
        let mut out = self;
        for (idx, f) in &rhs.components {
            out.accumulate(idx.clone(), if negate { -f } else { f.clone() });
        }
        out
    }
}

impl Add<&DifferentialForm> for DifferentialForm {
    type Output = DifferentialForm;
    fn add(self, rhs: &DifferentialForm) -> DifferentialForm {
        self.combine(rhs, false)
    }
}

impl Add for DifferentialForm {
    type Output = DifferentialForm;
    fn add(self, rhs: DifferentialForm) -> DifferentialForm {
        self.combine(&rhs, false)
    }
}

impl Add<&DifferentialForm> for &DifferentialForm {
    type Output = DifferentialForm;
    fn add(self, rhs: &DifferentialForm) -> DifferentialForm {
        self.clone().combine(rhs, false)
    }
}

impl Sub<&DifferentialForm> for DifferentialForm {
    type Output = DifferentialForm;
    fn sub(self, rhs: &DifferentialForm) -> DifferentialForm {
        self.combine(rhs, true)
    }
}

impl Sub for DifferentialForm {
    type Output = DifferentialForm;
    fn sub(self, rhs: DifferentialForm) -> DifferentialForm {
        self.combine(&rhs, true)
    }
}

impl Sub<&DifferentialForm> for &DifferentialForm {
    type Output = DifferentialForm;
    fn sub(self, rhs: &DifferentialForm) -> DifferentialForm {
        self.clone().combine(rhs, true)
    }
}

impl Neg for DifferentialForm {
    type Output = DifferentialForm;
    fn neg(self) -> DifferentialForm {
        self.scale(&-Rational::one())
    }
}

impl Neg for &DifferentialForm {
    type Output = DifferentialForm;
    fn neg(self) -> DifferentialForm {
        self.scale(&-Rational::one())
    }
}

impl fmt::Display for DifferentialForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.components.is_empty() {
            return write!(f, "0");
        }
        let names = self.frame.vars();
        for (k, (idx, coeff)) in self.components.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            let basis: Vec<String> = idx.iter().map(|&i| format!("d{}", names[i])).collect();
            let basis = basis.join("^");
            let c = coeff.constant_value();
            match (basis.is_empty(), c) {
                (true, _) => write!(f, "{coeff}")?,
                (false, Some(c)) if c.is_one() => write!(f, "{basis}")?,
                (false, Some(c)) if (-c.clone()).is_one() => write!(f, "-{basis}")?,
                (false, _) => write!(f, "({coeff})*{basis}")?,
            }
        }
        Ok(())
    }
}
