#![allow(dead_code)]

use pfaffian::exterior::{AffineMap, DifferentialForm, Frame, VectorField};
use pfaffian::symcore::{rat, Monomial, Polynomial, Rational};
use proptest::prelude::*;
use rand::Rng;

pub const NAMES: [&str; 4] = ["a", "b", "c", "d"];

pub fn frame(id: &str) -> Frame {
    Frame::new(id, &NAMES)
}

fn coeff() -> impl Strategy<Value = Rational> {
    (-5i64..=5, 1i64..=3).prop_map(|(n, d)| rat(n, d))
}

/// Up to `terms` monomials of total degree at most 3.
pub fn poly(f: &Frame, terms: usize) -> impl Strategy<Value = Polynomial> {
    let vars = f.vars().clone();
    let n = vars.len();
    prop::collection::vec((prop::collection::vec(0u32..=2, n), coeff()), 0..=terms).prop_map(
        move |ts| {
            let ts = ts
                .into_iter()
                .filter(|(e, _)| e.iter().sum::<u32>() <= 3)
                .map(|(e, c)| (Monomial::new(e), c));
            Polynomial::from_terms(&vars, ts)
        },
    )
}

pub fn form(f: &Frame, degree: usize) -> impl Strategy<Value = DifferentialForm> {
    let frame = f.clone();
    let idx = prop::collection::vec(0..f.dim(), degree);
    prop::collection::vec((idx, poly(f, 3)), 1..=3)
        .prop_map(move |comps| DifferentialForm::from_components(&frame, degree, comps).unwrap())
}

pub fn any_form(f: &Frame) -> impl Strategy<Value = DifferentialForm> {
    let f = f.clone();
    (0..=f.dim()).prop_flat_map(move |k| form(&f, k))
}

pub fn field(f: &Frame) -> impl Strategy<Value = VectorField> {
    let frame = f.clone();
    prop::collection::vec(poly(f, 2), f.dim()).prop_map(move |comps| {
        let named = NAMES.iter().copied().zip(comps);
        VectorField::from_named(&frame, named).unwrap()
    })
}

/// An affine map `source -> target` with small rational coefficients.
pub fn affine(source: &Frame, target: &Frame) -> impl Strategy<Value = AffineMap> {
    let (s, t) = (source.clone(), target.clone());
    prop::collection::vec(prop::collection::vec(coeff(), s.dim() + 1), t.dim()).prop_map(
        move |rows| {
            let images = rows
                .into_iter()
                .map(|row| {
                    let mut p = Polynomial::constant(s.vars(), row[0].clone());
                    for (i, c) in row[1..].iter().enumerate() {
                        p = p + s.coordinate(i).scale(c);
                    }
                    p
                })
                .collect();
            AffineMap::new(&s, &t, images).unwrap()
        },
    )
}

/// A random polynomial drawn with an ordinary RNG, for fixed-count loops.
pub fn random_poly<R: Rng>(f: &Frame, rng: &mut R, terms: usize) -> Polynomial {
    let n = f.dim();
    let ts = (0..terms).map(|_| {
        let mut e = vec![0u32; n];
        for _ in 0..rng.random_range(0..=3) {
            e[rng.random_range(0..n)] += 1;
        }
        (
            Monomial::new(e),
            rat(rng.random_range(-5..=5), rng.random_range(1..=3)),
        )
    });
    Polynomial::from_terms(f.vars(), ts)
}

pub fn random_form<R: Rng>(f: &Frame, rng: &mut R) -> DifferentialForm {
    let degree = rng.random_range(0..=f.dim());
    let comps: Vec<_> = (0..rng.random_range(1..=3))
        .map(|_| {
            let idx = (0..degree).map(|_| rng.random_range(0..f.dim())).collect();
            (idx, random_poly(f, rng, 3))
        })
        .collect();
    DifferentialForm::from_components(f, degree, comps).unwrap()
}

pub fn random_field<R: Rng>(f: &Frame, rng: &mut R) -> VectorField {
    let comps: Vec<_> = NAMES.iter().map(|&n| (n, random_poly(f, rng, 2))).collect();
    VectorField::from_named(f, comps).unwrap()
}
