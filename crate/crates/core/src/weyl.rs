//! The Weyl `U(1)`-bundle `P → M` built from integral Čech data, its
//! canonical objects, and the identity suite they satisfy.
//!
//! A chart of `P` has coordinates `s, x0, x1..xn, p1..pn`, with `s` the
//! fiber coordinate of period 1. Across an overlap the fiber coordinate
//! shifts by the transition potential, `s_V = s_U + β_UV`, which makes the
//! connection `β̄ = ds + β_U` a single global form.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::{One, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::atlas::{pull_function, symplectic_form, AtlasError, CechData, Covering, ManifoldSpec};
use crate::exterior::{AffineMap, DifferentialForm, ExteriorError, Frame, VectorField};
use crate::symcore::{fmt_rational, int, rat, to_f64, vars, Monomial, Polynomial, Rational};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeylError {
    #[error("integrality condition violated on {} triple(s), e.g. {:?}", offending.len(), offending.first())]
    Integrality {
        offending: Vec<([usize; 3], String)>,
    },
    #[error("Ω̄ is singular at the point (kernel dimension {kernel_dim})")]
    Singular { kernel_dim: usize },
    #[error("gauge function depends on `{0}`; basic gauges may only use x^i and p_i")]
    NotBasic(String),
    #[error(transparent)]
    Atlas(#[from] AtlasError),
    #[error(transparent)]
    Exterior(#[from] ExteriorError),
}

/// Coordinate names of a bundle chart.
pub fn bundle_coordinates(spec: &ManifoldSpec) -> Vec<String> {
    let mut names = vec!["s".to_string()];
    names.extend(spec.coordinate_names());
    names
}

#[derive(Clone, Debug)]
pub struct WeylBundle {
    cech: CechData,
    frames: Vec<Frame>,
    projections: Vec<AffineMap>,
}

impl WeylBundle {
    /// Refuses data whose cocycle representative is not integral.
    pub fn build(cech: CechData) -> Result<WeylBundle, WeylError> {
        let report = cech.integrality();
        if !report.integral {
            return Err(WeylError::Integrality {
                offending: report.offending,
            });
        }
        WeylBundle::build_unchecked(cech)
    }

    /// Skips the integrality test; only meaningful for diagnostics.
    pub fn build_unchecked(cech: CechData) -> Result<WeylBundle, WeylError> {
        let names = bundle_coordinates(&cech.covering.spec);
        let shared = vars(&names);
        let mut frames = Vec::new();
        let mut projections = Vec::new();
        for chart in cech.covering.charts() {
            let f = Frame::with_vars(&format!("P{}", chart.id), shared.clone());
            projections.push(AffineMap::projection(&f, &chart.frame)?);
            frames.push(f);
        }
        Ok(WeylBundle {
            cech,
            frames,
            projections,
        })
    }

    pub fn cech(&self) -> &CechData {
        &self.cech
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.cech.covering.spec
    }

    pub fn covering(&self) -> &Covering {
        &self.cech.covering
    }

    pub fn frame(&self, chart: usize) -> &Frame {
        &self.frames[chart]
    }

    /// Pulls a base-chart form up to the bundle chart over it.
    pub fn lift_form(
        &self,
        chart: usize,
        form: &DifferentialForm,
    ) -> Result<DifferentialForm, WeylError> {
        Ok(form.pullback(&self.projections[chart])?)
    }

    pub fn lift_function(&self, chart: usize, f: &Polynomial) -> Result<Polynomial, WeylError> {
        Ok(pull_function(&self.projections[chart], f)?)
    }

    /// The connection `β̄_U = ds + β_U`.
    pub fn connection(&self, chart: usize) -> Result<DifferentialForm, WeylError> {
        let ds = DifferentialForm::differential(&self.frames[chart], 0);
        Ok(ds + &self.lift_form(chart, &self.cech.potentials[chart])?)
    }

    /// Amount `s` shifts by from chart `u` to chart `v`, as a function of `U` coordinates.
    pub fn fiber_shift(&self, u: usize, v: usize) -> Option<&Polynomial> {
        self.cech.transitions.get(&(u, v))
    }

    /// Maps a point from bundle chart `u` to bundle chart `v` (no wrapping of `s`).
    pub fn transition_point(&self, u: usize, v: usize, point: &[f64]) -> Option<Vec<f64>> {
        let ov = self.covering().overlap(u, v)?;
        let base = &point[1..];
        let mut out = Vec::with_capacity(point.len());
        out.push(point[0] + self.cech.transitions[&(u, v)].eval_f64(base));
        out.extend(base.iter().zip(&ov.shift).map(|(x, t)| x - to_f64(t)));
        Some(out)
    }

    /// On every overlap, pulling `β̄_V` back along the bundle transition gives `β̄_U`.
    ///
    /// With `s_V = s_U + β_UV(x)` and `x_V = x_U − t`, the pullback is
    /// `ds + dβ_UV + σ*β_V`; this is compared with `ds + β_U` exactly.
    pub fn check_connection(&self) -> Result<Vec<(usize, usize)>, WeylError> {
        let mut bad = Vec::new();
        for ov in self.covering().overlaps() {
            let lhs = self.connection(ov.u)?;
            let frame = &self.frames[ov.u];
            let shift = self.lift_function(ov.u, &self.cech.transitions[&(ov.u, ov.v)])?;
            let pulled_base = self.cech.potentials[ov.v].pullback(&ov.to_v)?;
            let rhs = DifferentialForm::differential(frame, 0)
                + &DifferentialForm::function(frame, &shift)?.d()
                + &self.lift_form(ov.u, &pulled_base)?;
            if lhs != rhs {
                bad.push((ov.u, ov.v));
            }
        }
        Ok(bad)
    }

    /// Chern numbers on each coordinate 2-torus `(a, b)`, `a > b`, oriented so
    /// that a `(p_i, x^i)` face carries `+k P_x P_p`.
    pub fn chern_numbers(&self) -> Result<Vec<ChernEntry>, WeylError> {
        let spec = self.spec();
        let names = spec.coordinate_names();
        let periodic: Vec<usize> = (1..spec.dim())
            .filter(|&c| spec.transversal_period(c).is_some())
            .collect();
        let mut out = Vec::new();
        for (i, &b) in periodic.iter().enumerate() {
            for &a in &periodic[i + 1..] {
                out.push(ChernEntry {
                    face: format!("{},{}", names[a], names[b]),
                    value: fmt_rational(&self.cech.fundamental_total(a, b)?),
                });
            }
        }
        Ok(out)
    }

    /// The Chern number on the `(p1, x1)` torus, or 0 if that face is not compact.
    pub fn chern_number(&self) -> Result<Rational, WeylError> {
        let spec = self.spec();
        let (x, p) = (spec.x_index(1), spec.p_index(1));
        if spec.transversal_period(x).is_none() || spec.transversal_period(p).is_none() {
            return Ok(Rational::zero());
        }
        Ok(self.cech.fundamental_total(p, x)?)
    }

    /// A single chart and no transitions: `P = M × S¹`.
    pub fn is_product(&self) -> bool {
        self.covering().charts().len() == 1
    }

    pub fn canonical_objects(&self, chart: usize) -> Result<CanonicalObjects, WeylError> {
        let frame = self.frames[chart].clone();
        let canonical = crate::atlas::local_potentials(self.spec(), self.covering());
        let potential = self.lift_form(chart, &canonical[chart])?;
        let gauge = self.lift_function(chart, &self.cech.gauges[chart])?;
        CanonicalObjects::assemble(self.spec(), frame, potential, gauge)
    }

    /// Max of `|a_UV a_VW a_WU − 1|` with `a = e^{2πiβ}` over random triple-overlap points.
    pub fn verify_cocycle_numeric<R: Rng>(&self, samples: usize, rng: &mut R) -> f64 {
        let triples = self.covering().triples();
        if triples.is_empty() {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let t = &triples[rng.random_range(0..triples.len())];
            let point: Vec<f64> = t
                .bounds
                .iter()
                .map(|iv| iv.sample(rng.random::<f64>(), 2.0))
                .collect();
            let [u, v, w] = t.charts;
            let cov = self.covering();
            let at = |a: usize, b: usize, x: &[f64]| self.cech.transitions[&(a, b)].eval_f64(x);
            let shifted = |c: usize| -> Vec<f64> {
                let ov = cov.overlap(u, c).expect("triple overlaps");
                point
                    .iter()
                    .zip(&ov.shift)
                    .map(|(x, s)| x - to_f64(s))
                    .collect()
            };
            let (pv, pw) = (shifted(v), shifted(w));
            let product = Complex64::cis(TAU * at(u, v, &point))
                * Complex64::cis(TAU * at(v, w, &pv))
                * Complex64::cis(TAU * at(w, u, &pw));
            worst = worst.max((product - Complex64::new(1.0, 0.0)).norm());
        }
        worst
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChernEntry {
    pub face: String,
    pub value: String,
}

/// `ᾱ, β̄, ω̄, θ̄, Ω̄` and `E, X, Y` on one bundle chart.
#[derive(Clone, Debug)]
pub struct CanonicalObjects {
    pub spec: ManifoldSpec,
    pub frame: Frame,
    pub alpha: DifferentialForm,
    pub beta: DifferentialForm,
    pub omega: DifferentialForm,
    pub theta: DifferentialForm,
    pub big_omega: DifferentialForm,
    pub e: VectorField,
    pub x: VectorField,
    pub y: VectorField,
    /// Canonical `k p_i dx^i` (with lifts), before any gauge.
    pub potential: DifferentialForm,
    pub gauge: Polynomial,
    /// `β̄ = ds + B_i dx^i + A^i dp_i`.
    pub a: Vec<Polynomial>,
    pub b: Vec<Polynomial>,
}

impl CanonicalObjects {
    /// The single-chart objects over `ℝ^{2n+1}` with `α = dx0 + k p_i dx^i`.
    pub fn standard(n: usize, k: &Rational) -> CanonicalObjects {
        let spec = ManifoldSpec::euclidean(n).with_scale(k.clone());
        let names = bundle_coordinates(&spec);
        let frame = Frame::new("P", &names);
        let potential = (1..=n).fold(DifferentialForm::zero(&frame, 1), |acc, i| {
            let p = frame.coordinate(1 + spec.p_index(i)).scale(k);
            acc + &DifferentialForm::differential(&frame, 1 + spec.x_index(i))
                .mul_function(&p)
                .expect("same frame")
        });
        let gauge = frame.zero();
        CanonicalObjects::assemble(&spec, frame, potential, gauge).expect("canonical data is basic")
    }

    pub(crate) fn assemble(
        spec: &ManifoldSpec,
        frame: Frame,
        potential: DifferentialForm,
        gauge: Polynomial,
    ) -> Result<CanonicalObjects, WeylError> {
        for name in ["s", "x0"] {
            let idx = frame.require(name)?;
            if gauge.degree_in(idx) > 0 {
                return Err(WeylError::NotBasic(name.to_string()));
            }
        }
        let d = |i: usize| DifferentialForm::differential(&frame, i);
        let alpha = d(1) + &potential;
        let basic = &potential + &DifferentialForm::function(&frame, &gauge)?.d();
        let beta = d(0) + &basic;
        let omega = symplectic_form(spec, &frame);
        let theta = &alpha - &beta;
        let big_omega = alpha.wedge(&beta)? + &omega;
        let e = VectorField::coordinate(&frame, 0);
        let x = VectorField::coordinate(&frame, 1);
        let y = &x + &e;
        let a = (1..=spec.n)
            .map(|i| basic.component(&[1 + spec.p_index(i)]))
            .collect();
        let b = (1..=spec.n)
            .map(|i| basic.component(&[1 + spec.x_index(i)]))
            .collect();
        Ok(CanonicalObjects {
            spec: spec.clone(),
            frame,
            alpha,
            beta,
            omega,
            theta,
            big_omega,
            e,
            x,
            y,
            potential,
            gauge,
            a,
            b,
        })
    }

    /// Replaces `β_U` by `β_U + df` for a basic `f` (a function of `x^i`, `p_i`).
    pub fn with_gauge(&self, f: &Polynomial) -> Result<CanonicalObjects, WeylError> {
        let f = self.frame.adopt(f)?;
        CanonicalObjects::assemble(
            &self.spec,
            self.frame.clone(),
            self.potential.clone(),
            &self.gauge + &f,
        )
    }

    /// `Ω̄^{n+1}` as a multiple of the coordinate volume form.
    pub fn top_power(&self) -> Polynomial {
        let mut acc = self.big_omega.clone();
        for _ in 0..self.spec.n {
            acc = acc.wedge(&self.big_omega).expect("same frame");
        }
        let all: Vec<usize> = (0..self.frame.dim()).collect();
        acc.component(&all)
    }

    /// `Ω̄` at a point as the antisymmetric matrix `M` with `(v⌟Ω̄)_j = Σ_i v_i M_ij`.
    pub fn omega_matrix(&self, point: &[f64]) -> DMatrix<f64> {
        let n = self.frame.dim();
        let mut m = DMatrix::zeros(n, n);
        for (idx, val) in self.big_omega.eval_components(point) {
            m[(idx[0], idx[1])] = val;
            m[(idx[1], idx[0])] = -val;
        }
        m
    }

    pub fn omega_matrix_exact(&self, point: &[Rational]) -> Vec<Vec<Rational>> {
        let n = self.frame.dim();
        let mut m = vec![vec![Rational::zero(); n]; n];
        for (idx, val) in self.big_omega.eval_components_exact(point) {
            m[idx[1]][idx[0]] = -val.clone();
            m[idx[0]][idx[1]] = val;
        }
        m
    }
}

/// The raising operator: the `v` with `v⌟Ω̄ = γ` at `point`.
pub fn sharp(
    objs: &CanonicalObjects,
    gamma: &DifferentialForm,
    point: &[f64],
) -> Result<Vec<f64>, WeylError> {
    let m = objs.omega_matrix(point);
    let g: Vec<f64> = (0..objs.frame.dim())
        .map(|j| gamma.component(&[j]).eval_f64(point))
        .collect();
    // v⌟Ω̄ = γ  ⇔  Mᵀ v = γ
    let mt = m.transpose();
    if mt.determinant().abs() < 1e-12 {
        let svd = mt.clone().svd(false, false);
        let scale = svd.singular_values.max().max(1.0);
        let kernel_dim = svd
            .singular_values
            .iter()
            .filter(|s| **s < 1e-10 * scale)
            .count();
        return Err(WeylError::Singular { kernel_dim });
    }
    let v = mt
        .lu()
        .solve(&DVector::from_vec(g))
        .ok_or(WeylError::Singular { kernel_dim: 1 })?;
    Ok(v.iter().copied().collect())
}

/// Exact version of [`sharp`] at a rational point.
pub fn sharp_exact(
    objs: &CanonicalObjects,
    gamma: &DifferentialForm,
    point: &[Rational],
) -> Result<Vec<Rational>, WeylError> {
    let m = objs.omega_matrix_exact(point);
    let n = m.len();
    let mut aug: Vec<Vec<Rational>> = (0..n)
        .map(|j| {
            let mut row: Vec<Rational> = (0..n).map(|i| m[i][j].clone()).collect();
            row.push(gamma.component(&[j]).eval_exact(point));
            row
        })
        .collect();
    let mut rank = 0;
    for col in 0..n {
        let Some(pivot) = (rank..n).find(|&r| !aug[r][col].is_zero()) else {
            continue;
        };
        aug.swap(rank, pivot);
        let inv = Rational::one() / &aug[rank][col];
        for c in col..=n {
            aug[rank][c] = &aug[rank][c] * &inv;
        }
        for r in 0..n {
            if r != rank && !aug[r][col].is_zero() {
                let factor = aug[r][col].clone();
                for c in col..=n {
                    let sub = &factor * &aug[rank][c];
                    aug[r][c] -= sub;
                }
            }
        }
        rank += 1;
    }
    if rank < n {
        return Err(WeylError::Singular {
            kernel_dim: n - rank,
        });
    }
    Ok(aug.into_iter().map(|row| row[n].clone()).collect())
}

/// A random polynomial in the `x^i, p_i` coordinates of `frame`.
pub fn random_basic_gauge<R: Rng>(
    frame: &Frame,
    spec: &ManifoldSpec,
    rng: &mut R,
    max_degree: u32,
) -> Polynomial {
    let offset = frame.dim() - spec.dim();
    let transversal: Vec<usize> = (1..spec.dim()).map(|c| c + offset).collect();
    let terms = rng.random_range(1..=4);
    let mut out = frame.zero();
    for _ in 0..terms {
        let mut exps = vec![0u32; frame.dim()];
        let degree = rng.random_range(1..=max_degree);
        for _ in 0..degree {
            exps[transversal[rng.random_range(0..transversal.len())]] += 1;
        }
        let num = rng.random_range(-5i64..=5);
        let den = rng.random_range(1i64..=3);
        out = &out + &Polynomial::from_terms(frame.vars(), [(Monomial::new(exps), rat(num, den))]);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityRow {
    pub name: String,
    pub anchor: String,
    pub expected: String,
    pub computed: String,
    /// Number of nonzero components of `computed − expected`.
    pub residual_terms: usize,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub n: usize,
    pub rows: Vec<IdentityRow>,
    pub pass: bool,
    pub sign_notes: Vec<String>,
}

const Y_OMEGA_NOTE: &str = "usually stated as \\overline{\\theta}; with \\overline{\\theta} = \\overline{\\alpha} - \\overline{\\beta} the contraction is \\overline{\\beta} - \\overline{\\alpha} = -\\overline{\\theta}";
const D_OMEGA_NOTE: &str = "usually stated as \\overline{\\theta} \\wedge \\overline{\\omega}; expanding d(\\overline{\\alpha} \\wedge \\overline{\\beta}) gives -\\overline{\\theta} \\wedge \\overline{\\omega}";

impl CanonicalObjects {
    /// Evaluates every contraction and Lie-derivative row for `E`, `X`, `Y`,
    /// the differentials of `ᾱ, β̄, θ̄, Ω̄`, and `[E, X]`.
    pub fn identity_suite(&self) -> Result<IdentityReport, WeylError> {
        let f = &self.frame;
        let zero = |deg: usize| DifferentialForm::zero(f, deg);
        let one = DifferentialForm::constant(f, int(1));
        let minus_one = DifferentialForm::constant(f, int(-1));
        let forms: [(&str, &str, &DifferentialForm); 5] = [
            ("ᾱ", "\\overline{\\alpha}", &self.alpha),
            ("β̄", "\\overline{\\beta}", &self.beta),
            ("θ̄", "\\overline{\\theta}", &self.theta),
            ("ω̄", "\\overline{\\omega}", &self.omega),
            ("Ω̄", "\\overline{\\Omega}", &self.big_omega),
        ];
        type Expected = (DifferentialForm, &'static str, Option<&'static str>);
        let contraction = |field: &str| -> [Expected; 5] {
            match field {
                "E" => [
                    (zero(0), "0", None),
                    (one.clone(), "1", None),
                    (minus_one.clone(), "-1", None),
                    (zero(1), "0", None),
                    (-&self.alpha, "- \\alpha", None),
                ],
                "X" => [
                    (one.clone(), "1", None),
                    (zero(0), "0", None),
                    (one.clone(), "1", None),
                    (zero(1), "0", None),
                    (self.beta.clone(), "\\beta", None),
                ],
                _ => [
                    (one.clone(), "1", None),
                    (one.clone(), "1", None),
                    (zero(0), "0", None),
                    (zero(1), "0", None),
                    (-&self.theta, "\\theta", Some(Y_OMEGA_NOTE)),
                ],
            }
        };
        let fields: [(&str, &VectorField); 3] = [("E", &self.e), ("X", &self.x), ("Y", &self.y)];

        let mut jobs: Vec<(
            String,
            String,
            DifferentialForm,
            DifferentialForm,
            Option<String>,
        )> = Vec::new();
        for (fname, v) in fields {
            for ((sym, tex, form), (expected, stated, note)) in
                forms.iter().zip(contraction(fname))
            {
                jobs.push((
                    format!("{fname} ⌟ {sym}"),
                    format!("{fname} \\rfloor {tex} = {stated}"),
                    expected,
                    form.interior(v)?,
                    note.map(str::to_string),
                ));
            }
            for (sym, tex, form) in forms.iter() {
                let cartan = form.lie_derivative(v)?;
                let coord = form.lie_derivative_coordinate(v)?;
                let note = (cartan != coord)
                    .then(|| "Cartan and coordinate formulas disagree".to_string());
                jobs.push((
                    format!("L_{fname} {sym}"),
                    format!("{{\\cal L}}_{fname} {tex} = 0"),
                    zero(form.degree()),
                    if note.is_some() {
                        &cartan + &coord
                    } else {
                        cartan
                    },
                    note,
                ));
            }
        }
        jobs.push((
            "dᾱ".into(),
            "d\\overline{\\alpha} = \\overline{\\omega}".into(),
            self.omega.clone(),
            self.alpha.d(),
            None,
        ));
        jobs.push((
            "dβ̄".into(),
            "d\\overline{\\beta} = \\overline{\\omega}".into(),
            self.omega.clone(),
            self.beta.d(),
            None,
        ));
        jobs.push((
            "dθ̄".into(),
            "d\\overline{\\theta} = 0".into(),
            zero(2),
            self.theta.d(),
            None,
        ));
        jobs.push((
            "dΩ̄".into(),
            "d \\overline{\\Omega} = \\overline{\\theta} \\wedge \\overline{\\omega}".into(),
            -&self.theta.wedge(&self.omega)?,
            self.big_omega.d(),
            Some(D_OMEGA_NOTE.to_string()),
        ));

        let mut rows: Vec<IdentityRow> = jobs
            .into_par_iter()
            .map(|(name, anchor, expected, computed, note)| {
                let diff = &computed - &expected;
                let residual_terms = diff.components().count();
                IdentityRow {
                    name,
                    anchor,
                    expected: expected.to_string(),
                    computed: computed.to_string(),
                    residual_terms,
                    pass: residual_terms == 0,
                    note,
                }
            })
            .collect();

        let bracket = self.e.lie_bracket(&self.x)?;
        rows.push(IdentityRow {
            name: "[E, X]".into(),
            anchor: "[E, X] = 0".into(),
            expected: "0".into(),
            computed: bracket.to_string(),
            residual_terms: bracket.components().iter().filter(|c| !c.is_zero()).count(),
            pass: bracket.is_zero(),
            note: None,
        });

        let pass = rows.iter().all(|r| r.pass);
        let sign_notes = rows.iter().filter_map(|r| r.note.clone()).collect();
        Ok(IdentityReport {
            n: self.spec.n,
            rows,
            pass,
            sign_notes,
        })
    }
}

/// Runs the suite on the objects and on `gauges` gauge-shifted copies of them.
pub fn run_identity_suite<R: Rng>(
    objs: &CanonicalObjects,
    gauges: usize,
    rng: &mut R,
) -> Result<Vec<IdentityReport>, WeylError> {
    let mut variants = vec![objs.clone()];
    for _ in 0..gauges {
        let f = random_basic_gauge(&objs.frame, &objs.spec, rng, 3);
        variants.push(objs.with_gauge(&f)?);
    }
    variants
        .par_iter()
        .map(CanonicalObjects::identity_suite)
        .collect()
}

/// Row-by-row summary across several suites.
pub fn merge_reports(reports: &[IdentityReport]) -> BTreeMap<String, bool> {
    let mut out = BTreeMap::new();
    for r in reports {
        for row in &r.rows {
            *out.entry(row.name.clone()).or_insert(true) &= row.pass;
        }
    }
    out
}
