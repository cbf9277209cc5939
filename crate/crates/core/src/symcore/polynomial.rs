use std::borrow::Cow;
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_traits::{One, Signed, Zero};

use super::{fmt_rational, to_f64, Rational, SymError, Vars};

/// Exponent multi-index, one entry per variable of the owning polynomial.
///
/// Ordered graded-lexicographically: total degree first, then
/// lexicographically on the exponents.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    pub fn one(nvars: usize) -> Self {
        Monomial(vec![0; nvars])
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multivariate polynomial with exact rational coefficients.
///
/// Zero coefficients are never stored and terms are kept in graded-lex order,
/// so two polynomials over the same variables are equal iff their term maps
/// are equal. Polynomials over different variable lists are compared (and
/// combined) after aligning both to the union of their symbols.
#[derive(Clone, Debug)]
pub struct Polynomial {
    vars: Vars,
    terms: BTreeMap<Monomial, Rational>,
}

impl Polynomial {
    pub fn zero(vars: &Vars) -> Self {
        Polynomial {
            vars: vars.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: &Vars, c: Rational) -> Self {
        let mut p = Polynomial::zero(vars);
        if !c.is_zero() {
            p.terms.insert(Monomial::one(vars.len()), c);
        }
        p
    }

    pub fn one(vars: &Vars) -> Self {
        Polynomial::constant(vars, Rational::one())
    }

    /// The coordinate function for variable index `idx`.
    pub fn variable(vars: &Vars, idx: usize) -> Self {
        assert!(idx < vars.len(), "variable index {idx} out of range");
        let mut e = vec![0; vars.len()];
        e[idx] = 1;
        Polynomial::from_terms(vars, [(Monomial(e), Rational::one())])
    }

    pub fn var(vars: &Vars, name: &str) -> Result<Self, SymError> {
        let idx = vars
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| SymError::UnknownSymbol(name.to_string()))?;
        Ok(Polynomial::variable(vars, idx))
    }

    /// Builds a polynomial from `(monomial, coefficient)` pairs, summing
    /// repeated monomials and dropping zeros.
    pub fn from_terms<I>(vars: &Vars, terms: I) -> Self
    where
        I: IntoIterator<Item = (Monomial, Rational)>,
    {
        let mut p = Polynomial::zero(vars);
        for (m, c) in terms {
            assert_eq!(m.0.len(), vars.len(), "multi-index length mismatch");
            p.add_term(m, c);
        }
        p
    }

    fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(existing) => {
                *existing += c;
                if existing.is_zero() {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    pub fn vars(&self) -> &Vars {
        &self.vars
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// `Some(c)` when the polynomial has degree 0 (the zero polynomial gives `Some(0)`).
    pub fn constant_value(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => self
                .terms
                .iter()
                .next()
                .filter(|(m, _)| m.degree() == 0)
                .map(|(_, c)| c.clone()),
            _ => None,
        }
    }

    /// Total degree; the zero polynomial reports 0.
    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn degree_in(&self, idx: usize) -> u32 {
        self.terms.keys().map(|m| m.0[idx]).max().unwrap_or(0)
    }

    /// Indices of variables that occur with nonzero exponent.
    pub fn used_vars(&self) -> Vec<usize> {
        (0..self.vars.len())
            .filter(|&i| self.terms.keys().any(|m| m.0[i] > 0))
            .collect()
    }

    /// Re-expresses this polynomial over `target`, which must contain every
    /// symbol that actually occurs.
    pub fn embed(&self, target: &Vars) -> Result<Polynomial, SymError> {
        if Arc::ptr_eq(&self.vars, target) || self.vars[..] == target[..] {
            return Ok(Polynomial {
                vars: target.clone(),
                terms: self.terms.clone(),
            });
        }
        let mut map = Vec::with_capacity(self.vars.len());
        for (i, name) in self.vars.iter().enumerate() {
            match target.iter().position(|t| t == name) {
                Some(j) => map.push(Some(j)),
                None if self.terms.keys().all(|m| m.0[i] == 0) => map.push(None),
                None => return Err(SymError::UnknownSymbol(name.clone())),
            }
        }
        let terms = self.terms.iter().map(|(m, c)| {
            let mut e = vec![0; target.len()];
            for (i, &exp) in m.0.iter().enumerate() {
                if let Some(j) = map[i] {
                    e[j] = exp;
                }
            }
            (Monomial(e), c.clone())
        });
        Ok(Polynomial::from_terms(target, terms))
    }

    fn aligned<'a>(&'a self, other: &'a Polynomial) -> (Cow<'a, Polynomial>, Cow<'a, Polynomial>) {
        if Arc::ptr_eq(&self.vars, &other.vars) || self.vars[..] == other.vars[..] {
            return (Cow::Borrowed(self), Cow::Borrowed(other));
        }
        let mut names: Vec<String> = self.vars.to_vec();
        for v in other.vars.iter() {
            if !names.contains(v) {
                names.push(v.clone());
            }
        }
        let union: Vars = names.into();
        let a = self.embed(&union).expect("union contains all symbols");
        let b = other.embed(&union).expect("union contains all symbols");
        (Cow::Owned(a), Cow::Owned(b))
    }

    pub fn scale(&self, c: &Rational) -> Polynomial {
        if c.is_zero() {
            return Polynomial::zero(&self.vars);
        }
        Polynomial {
            vars: self.vars.clone(),
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut acc = Polynomial::one(&self.vars);
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Formal partial derivative with respect to the variable at `idx`.
    pub fn derivative(&self, idx: usize) -> Polynomial {
        let terms = self.terms.iter().filter_map(|(m, c)| {
            let e = m.0[idx];
            (e > 0).then(|| {
                let mut m2 = m.0.clone();
                m2[idx] -= 1;
                (Monomial(m2), c * Rational::from_integer(e.into()))
            })
        });
        Polynomial::from_terms(&self.vars, terms)
    }

    pub fn partial_derivative(&self, name: &str) -> Result<Polynomial, SymError> {
        let idx = self
            .var_index(name)
            .ok_or_else(|| SymError::UnknownSymbol(name.to_string()))?;
        Ok(self.derivative(idx))
    }

    /// Antiderivative in the variable at `idx` with zero constant of integration.
    pub fn antiderivative(&self, idx: usize) -> Polynomial {
        let terms = self.terms.iter().map(|(m, c)| {
            let mut m2 = m.0.clone();
            m2[idx] += 1;
            let e = m2[idx];
            (Monomial(m2), c / Rational::from_integer(e.into()))
        });
        Polynomial::from_terms(&self.vars, terms)
    }

    /// Sets the variable at `idx` to the constant `value` (the symbol stays in the list).
    pub fn substitute_value(&self, idx: usize, value: &Rational) -> Polynomial {
        let mut cache: HashMap<u32, Rational> = HashMap::new();
        let terms = self.terms.iter().map(|(m, c)| {
            let e = m.0[idx];
            let factor = cache
                .entry(e)
                .or_insert_with(|| num_traits::pow(value.clone(), e as usize))
                .clone();
            let mut m2 = m.0.clone();
            m2[idx] = 0;
            (Monomial(m2), c * factor)
        });
        Polynomial::from_terms(&self.vars, terms)
    }

    /// Composes with an affine change of variables.
    ///
    /// `map` sends each symbol of `self` to a polynomial of total degree at
    /// most one; all images are aligned to a common variable list, which becomes
    /// the variable list of the result.
    pub fn substitute_affine(
        &self,
        map: &BTreeMap<String, Polynomial>,
    ) -> Result<Polynomial, SymError> {
        for (symbol, image) in map {
            let degree = image.total_degree();
            if degree > 1 {
                return Err(SymError::NonAffine {
                    symbol: symbol.clone(),
                    degree,
                });
            }
        }
        let target: Vars = {
            let mut names: Vec<String> = Vec::new();
            for image in map.values() {
                for v in image.vars.iter() {
                    if !names.contains(v) {
                        names.push(v.clone());
                    }
                }
            }
            if map.is_empty() {
                self.vars.clone()
            } else {
                names.into()
            }
        };
        let mut images: Vec<Option<Polynomial>> = Vec::with_capacity(self.vars.len());
        for (i, name) in self.vars.iter().enumerate() {
            match map.get(name) {
                Some(image) => images.push(Some(image.embed(&target)?)),
                None if self.terms.keys().all(|m| m.0[i] == 0) => images.push(None),
                None => return Err(SymError::MissingSubstitution(name.clone())),
            }
        }
        let mut powers: HashMap<(usize, u32), Polynomial> = HashMap::new();
        let mut out = Polynomial::zero(&target);
        for (m, c) in &self.terms {
            let mut term = Polynomial::constant(&target, c.clone());
            for (i, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let image = images[i].as_ref().expect("image present for used symbol");
                let p = powers.entry((i, e)).or_insert_with(|| image.pow(e));
                term = &term * &*p;
            }
            out = &out + &term;
        }
        Ok(out)
    }

    /// Floating-point evaluation at a named point.
    pub fn evaluate(&self, point: &HashMap<String, f64>) -> Result<f64, SymError> {
        let mut values = Vec::with_capacity(self.vars.len());
        for (i, name) in self.vars.iter().enumerate() {
            match point.get(name) {
                Some(&v) => values.push(v),
                None if self.terms.keys().all(|m| m.0[i] == 0) => values.push(0.0),
                None => return Err(SymError::MissingCoordinate(name.clone())),
            }
        }
        Ok(self.eval_f64(&values))
    }

    /// Evaluation with coordinates given positionally, matching [`Self::vars`].
    pub fn eval_f64(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.vars.len());
        self.terms
            .iter()
            .map(|(m, c)| {
                m.0.iter()
                    .zip(point)
                    .fold(to_f64(c), |acc, (&e, &x)| acc * x.powi(e as i32))
            })
            .sum()
    }

    pub fn eval_exact(&self, point: &[Rational]) -> Rational {
        debug_assert_eq!(point.len(), self.vars.len());
        let mut acc = Rational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (&e, x) in m.0.iter().zip(point) {
                if e > 0 {
                    t *= num_traits::pow(x.clone(), e as usize);
                }
            }
            acc += t;
        }
        acc
    }

    pub fn compile(&self) -> CompiledPolynomial {
        CompiledPolynomial {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| {
                    let factors =
                        m.0.iter()
                            .enumerate()
                            .filter(|(_, &e)| e > 0)
                            .map(|(i, &e)| (i, e as i32))
                            .collect();
                    (to_f64(c), factors)
                })
                .collect(),
        }
    }
}

/// Polynomial flattened to `f64` coefficients for repeated evaluation.
#[derive(Clone, Debug, Default)]
pub struct CompiledPolynomial {
    terms: Vec<(f64, Vec<(usize, i32)>)>,
}

impl CompiledPolynomial {
    pub fn eval(&self, point: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, factors)| {
                factors
                    .iter()
                    .fold(*c, |acc, &(i, e)| acc * point[i].powi(e))
            })
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

impl PartialEq for Polynomial {
    fn eq(&self, other: &Self) -> bool {
        let (a, b) = self.aligned(other);
        a.terms == b.terms
    }
}

impl Eq for Polynomial {}

impl<'a> Add<&'a Polynomial> for &'a Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let (a, b) = self.aligned(rhs);
        let mut out = a.into_owned();
        for (m, c) in &b.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl<'a> Sub<&'a Polynomial> for &'a Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let (a, b) = self.aligned(rhs);
        let mut out = a.into_owned();
        for (m, c) in &b.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
}

impl<'a> Mul<&'a Polynomial> for &'a Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let (a, b) = self.aligned(rhs);
        let mut out = Polynomial::zero(&a.vars);
        for (ma, ca) in &a.terms {
            for (mb, cb) in &b.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait<Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: Polynomial) -> Polynomial {
                (&self).$method(&rhs)
            }
        }
        impl<'a> $trait<&'a Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: &Polynomial) -> Polynomial {
                (&self).$method(rhs)
            }
        }
        impl<'a> $trait<Polynomial> for &'a Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: Polynomial) -> Polynomial {
                self.$method(&rhs)
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        Polynomial {
            vars: self.vars.clone(),
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }
}

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        -&self
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, c)) in self.terms.iter().rev().enumerate() {
            let negative = c.is_negative();
            let mag = c.abs();
            match (k, negative) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let factors: Vec<String> =
                m.0.iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(i, &e)| match e {
                        1 => self.vars[i].clone(),
                        _ => format!("{}^{}", self.vars[i], e),
                    })
                    .collect();
            if factors.is_empty() {
                write!(f, "{}", fmt_rational(&mag))?;
            } else if mag.is_one() {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{}*{}", fmt_rational(&mag), factors.join("*"))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcore::{int, rat, vars};

    fn xp() -> (Vars, Polynomial, Polynomial) {
        let v = vars(&["x", "p"]);
        let x = Polynomial::var(&v, "x").unwrap();
        let p = Polynomial::var(&v, "p").unwrap();
        (v, x, p)
    }

    #[test]
    fn arithmetic_examples() {
        let (v, x, p) = xp();
        assert_eq!(&(&x + &p) + &(&x - &p), x.scale(&int(2)));
        assert_eq!((&p * &x).to_string(), "x*p");
        let one = Polynomial::one(&v);
        let d = &(&x + &one) - &(&x + &one);
        assert!(d.is_zero());
        assert_eq!(d.len(), 0);
    }

    #[test]
    fn derivative_examples() {
        let (_, x, p) = xp();
        let f = &x.pow(2) * &p;
        assert_eq!(f.partial_derivative("x").unwrap(), (&x * &p).scale(&int(2)));
        assert!(p.partial_derivative("x").unwrap().is_zero());
        assert_eq!(f.partial_derivative("p").unwrap(), x.pow(2));
        assert_eq!(
            f.partial_derivative("q"),
            Err(SymError::UnknownSymbol("q".into()))
        );
    }

    #[test]
    fn affine_substitution_examples() {
        let (v, x, p) = xp();
        let one = Polynomial::one(&v);
        let shift: BTreeMap<String, Polynomial> =
            [("x".to_string(), x.clone()), ("p".to_string(), &p + &one)].into();
        assert_eq!(p.substitute_affine(&shift).unwrap(), &p + &one);
        let ident: BTreeMap<String, Polynomial> =
            [("x".to_string(), x.clone()), ("p".to_string(), p.clone())].into();
        assert_eq!((&p * &x).substitute_affine(&ident).unwrap(), &p * &x);
        let sq = p.pow(2).substitute_affine(&shift).unwrap();
        assert_eq!(sq, &(&p.pow(2) + &p.scale(&int(2))) + &one);

        let bad: BTreeMap<String, Polynomial> = [("p".to_string(), x.pow(2))].into();
        assert!(matches!(
            p.substitute_affine(&bad),
            Err(SymError::NonAffine { .. })
        ));
        let partial: BTreeMap<String, Polynomial> = [("p".to_string(), p.clone())].into();
        assert_eq!(
            (&x * &p).substitute_affine(&partial),
            Err(SymError::MissingSubstitution("x".into()))
        );
    }

    #[test]
    fn evaluation_examples() {
        let (v, x, p) = xp();
        let pt: HashMap<String, f64> = [("x".into(), 1.0), ("p".into(), 2.0)].into();
        assert_eq!((&x + &p).evaluate(&pt).unwrap(), 3.0);
        assert_eq!(Polynomial::zero(&v).evaluate(&pt).unwrap(), 0.0);
        let half: HashMap<String, f64> = [("x".into(), 0.5), ("p".into(), 0.5)].into();
        assert_eq!((&p * &x).evaluate(&half).unwrap(), 0.25);
        let missing: HashMap<String, f64> = [("x".into(), 0.5)].into();
        assert_eq!(
            (&p * &x).evaluate(&missing),
            Err(SymError::MissingCoordinate("p".into()))
        );
        assert_eq!((&p * &x).eval_exact(&[rat(1, 2), rat(1, 2)]), rat(1, 4));
        assert_eq!((&p * &x).compile().eval(&[0.5, 0.5]), 0.25);
    }

    #[test]
    fn union_alignment() {
        let a = Polynomial::var(&vars(&["x"]), "x").unwrap();
        let b = Polynomial::var(&vars(&["p"]), "p").unwrap();
        let s = &a + &b;
        assert_eq!(s.vars().len(), 2);
        assert_eq!(&s - &b, a);
    }

    #[test]
    fn grlex_order_and_display() {
        let (v, x, p) = xp();
        let f = &(&x.pow(2) - &p.scale(&rat(1, 2))) + &Polynomial::constant(&v, int(3));
        assert_eq!(f.to_string(), "x^2 - 1/2*p + 3");
        assert_eq!(f.total_degree(), 2);
        assert_eq!(f.antiderivative(0).derivative(0), f);
        assert_eq!(f.substitute_value(0, &int(2)).constant_value(), None);
        assert_eq!(
            f.substitute_value(0, &int(2))
                .substitute_value(1, &int(2))
                .constant_value(),
            Some(int(6))
        );
    }
}
