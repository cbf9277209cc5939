use super::*;
use crate::symcore::int;

const P_COORDS: [&str; 4] = ["s", "x0", "x1", "p1"];
const M_COORDS: [&str; 3] = ["x0", "x1", "p1"];

struct Lifted {
    frame: Frame,
    alpha: DifferentialForm,
    beta: DifferentialForm,
    omega: DifferentialForm,
    theta: DifferentialForm,
    big_omega: DifferentialForm,
    e: VectorField,
    x: VectorField,
    y: VectorField,
}

fn lifted() -> Lifted {
    let frame = Frame::new("P", &P_COORDS);
    let d = |n: &str| DifferentialForm::differential_named(&frame, n).unwrap();
    let p = frame.coordinate_named("p1").unwrap();
    let p_dx = d("x1").mul_function(&p).unwrap();
    let alpha = d("x0") + &p_dx;
    let beta = d("s") + &p_dx;
    let omega = d("p1").wedge(&d("x1")).unwrap();
    let theta = &alpha - &beta;
    let big_omega = alpha.wedge(&beta).unwrap() + &omega;
    let e = VectorField::coordinate_named(&frame, "s").unwrap();
    let x = VectorField::coordinate_named(&frame, "x0").unwrap();
    let y = &x + &e;
    Lifted {
        frame,
        alpha,
        beta,
        omega,
        theta,
        big_omega,
        e,
        x,
        y,
    }
}

/// Brute-force (a ⊗ b − b ⊗ a)(e_i, e_j) for 1-forms, as a dense matrix.
fn bilinear_oracle(a: &DifferentialForm, b: &DifferentialForm) -> Vec<Vec<Polynomial>> {
    let n = a.frame().dim();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    &(&a.component(&[i]) * &b.component(&[j]))
                        - &(&a.component(&[j]) * &b.component(&[i]))
                })
                .collect()
        })
        .collect()
}

#[test]
fn wedge_of_coordinate_differentials_is_canonically_signed() {
    let l = lifted();
    let w = DifferentialForm::differential(&l.frame, 1)
        .wedge(&DifferentialForm::differential(&l.frame, 0))
        .unwrap();
    let comps: Vec<_> = w.components().collect();
    assert_eq!(comps.len(), 1);
    assert_eq!(comps[0].0, &vec![0, 1]);
    assert_eq!(comps[0].1.constant_value(), Some(int(-1)));
}

#[test]
fn presymplectic_form_expansion_matches_bilinear_oracle() {
    let l = lifted();
    let f = &l.frame;
    let d = |n: &str| DifferentialForm::differential_named(f, n).unwrap();
    let p = f.coordinate_named("p1").unwrap();
    let expected = d("x0").wedge(&d("s")).unwrap()
        + &d("x0").wedge(&d("x1")).unwrap().mul_function(&p).unwrap()
        + &d("x1").wedge(&d("s")).unwrap().mul_function(&p).unwrap()
        + &d("p1").wedge(&d("x1")).unwrap();
    assert_eq!(l.big_omega, expected);

    let wedge_part = l.alpha.wedge(&l.beta).unwrap();
    let oracle = bilinear_oracle(&l.alpha, &l.beta);
    for i in 0..f.dim() {
        for j in (i + 1)..f.dim() {
            assert_eq!(
                wedge_part.component(&[i, j]),
                oracle[i][j],
                "component ({i},{j})"
            );
        }
    }
}

#[test]
fn odd_forms_square_to_zero() {
    let l = lifted();
    assert!(l.alpha.wedge(&l.alpha).unwrap().is_zero());
    assert!(l.theta.wedge(&l.theta).unwrap().is_zero());
}

#[test]
fn exterior_derivative_examples() {
    let l = lifted();
    let m = Frame::new("M", &M_COORDS);
    let d = |n: &str| DifferentialForm::differential_named(&m, n).unwrap();
    let p = m.coordinate_named("p1").unwrap();
    let alpha = d("x0") + &d("x1").mul_function(&p).unwrap();
    assert_eq!(alpha.d(), d("p1").wedge(&d("x1")).unwrap());

    let x = m.coordinate_named("x1").unwrap();
    let f = DifferentialForm::function(&m, &(&x.pow(2) * &p)).unwrap();
    assert!(f.d().d().is_zero());

    // dΩ̄ expands to dᾱ∧β̄ − ᾱ∧dβ̄ = (β̄ − ᾱ)∧ω̄, i.e. −θ̄∧ω̄.
    let d_big_omega = l.big_omega.d();
    let theta_omega = l.theta.wedge(&l.omega).unwrap();
    assert_eq!(d_big_omega, -&theta_omega);
    assert_ne!(d_big_omega, theta_omega);
}

#[test]
fn interior_product_examples() {
    let l = lifted();
    assert!(l.alpha.interior(&l.e).unwrap().is_zero());
    assert!(l.theta.interior(&l.x).unwrap().is_one());
    assert_eq!(l.big_omega.interior(&l.y).unwrap(), -&l.theta);
    assert_eq!(l.big_omega.interior(&l.y).unwrap(), &l.beta - &l.alpha);
    let f = DifferentialForm::function(&l.frame, &l.frame.coordinate(2)).unwrap();
    assert!(f.interior(&l.x).unwrap().is_zero());
}

#[test]
fn lie_derivative_examples() {
    let l = lifted();
    assert!(l.alpha.lie_derivative(&l.e).unwrap().is_zero());
    assert!(l.big_omega.lie_derivative(&l.y).unwrap().is_zero());

    let line = Frame::new("R", &["x"]);
    let x = line.coordinate(0);
    let v = VectorField::coordinate(&line, 0);
    let f = DifferentialForm::function(&line, &x.pow(2)).unwrap();
    assert_eq!(
        f.lie_derivative(&v).unwrap().as_function(),
        x.scale(&int(2))
    );
    assert_eq!(
        f.lie_derivative_coordinate(&v).unwrap().as_function(),
        x.scale(&int(2))
    );
}

#[test]
fn lie_bracket_examples() {
    let l = lifted();
    assert!(l.e.lie_bracket(&l.x).unwrap().is_zero());
    assert!(l.y.lie_bracket(&l.y).unwrap().is_zero());

    let plane = Frame::new("R2", &["x", "p"]);
    let x = plane.coordinate(0);
    let x_dp = VectorField::from_named(&plane, [("p", x)]).unwrap();
    let dx = VectorField::coordinate(&plane, 0);
    let expected = -&VectorField::coordinate(&plane, 1);
    assert_eq!(x_dp.lie_bracket(&dx).unwrap(), expected);
}

#[test]
fn pullback_examples() {
    let l = lifted();
    let m = Frame::new("M", &M_COORDS);
    let d = |n: &str| DifferentialForm::differential_named(&m, n).unwrap();
    let p = m.coordinate_named("p1").unwrap();
    let alpha = d("x0") + &d("x1").mul_function(&p).unwrap();

    let proj = AffineMap::projection(&l.frame, &m).unwrap();
    let lifted_alpha = alpha.pullback(&proj).unwrap();
    assert_eq!(lifted_alpha, l.alpha);
    assert_eq!(lifted_alpha.frame().dim(), 4);

    let shifted = Frame::with_vars("M'", m.vars().clone());
    let shift = AffineMap::translation(&shifted, &m, &[int(0), int(0), int(1)]).unwrap();
    let p_dx = d("x1").mul_function(&p).unwrap();
    let pulled = p_dx.pullback(&shift).unwrap();
    let p_s = shifted.coordinate_named("p1").unwrap();
    let one = Polynomial::one(shifted.vars());
    let expected = DifferentialForm::differential(&shifted, 1)
        .mul_function(&(&p_s + &one))
        .unwrap();
    assert_eq!(pulled, expected);

    assert_eq!(alpha.pullback(&AffineMap::identity(&m)).unwrap(), alpha);

    // composition is contravariant
    let back = AffineMap::translation(&m, &shifted, &[int(0), int(0), int(-1)]).unwrap();
    let round = back.then(&shift).unwrap();
    assert_eq!(
        p_dx.pullback(&round).unwrap(),
        pulled.pullback(&back).unwrap()
    );
    assert_eq!(p_dx.pullback(&round).unwrap(), p_dx);

    assert!(matches!(
        alpha.pullback(&AffineMap::identity(&l.frame)),
        Err(ExteriorError::MapTarget { .. })
    ));
    let x = m.coordinate_named("x1").unwrap();
    let bad = AffineMap::new(&m, &m, vec![x.pow(2), x.clone(), p.clone()]);
    assert!(matches!(bad, Err(ExteriorError::NonAffine { .. })));
}

#[test]
fn basicness_examples() {
    let m = Frame::new("M", &M_COORDS);
    let xi = VectorField::coordinate_named(&m, "x0").unwrap();
    let d = |n: &str| DifferentialForm::differential_named(&m, n).unwrap();
    let p = m.coordinate_named("p1").unwrap();
    let beta_u = d("x1").mul_function(&p).unwrap();
    assert!(beta_u.is_basic(&xi).unwrap());
    let alpha = d("x0") + &beta_u;
    assert!(!alpha.is_basic(&xi).unwrap());
    assert!(DifferentialForm::zero(&m, 1).is_basic(&xi).unwrap());
    // x0-dependence breaks invariance even without a dx0 component
    let x0 = m.coordinate_named("x0").unwrap();
    assert!(!beta_u.mul_function(&x0).unwrap().is_basic(&xi).unwrap());
}

#[test]
fn frames_must_match() {
    let a = Frame::new("A", &["x"]);
    let b = Frame::new("B", &["x"]);
    let fa = DifferentialForm::differential(&a, 0);
    let fb = DifferentialForm::differential(&b, 0);
    assert!(matches!(
        fa.wedge(&fb),
        Err(ExteriorError::FrameMismatch { .. })
    ));
    let vb = VectorField::coordinate(&b, 0);
    assert!(fa.interior(&vb).is_err());
}

#[test]
fn degree_beyond_dimension_is_zero() {
    let line = Frame::new("R", &["x"]);
    let dx = DifferentialForm::differential(&line, 0);
    let top = dx.wedge(&dx).unwrap();
    assert!(top.is_zero());
    assert_eq!(top.degree(), 2);
    assert!(dx.d().is_zero());
}
