//! Box-quotient base manifolds, their covering by canonical charts, and the
//! Čech data `β_U`, `β_UV`, `c_UVW` of the Pfaffian structure.
//!
//! Coordinates of the base are ordered `x0, x1..xn, p1..pn`. Each periodic
//! transversal coordinate (some `x^i` or `p_i`) is cut into `g ≥ 3` cells,
//! widened by a margin of a quarter cell, so that every nonempty pairwise
//! and triple intersection is a single box. Charts span the whole `x0`
//! direction: basic objects do not depend on `x0`, so only the transversal
//! directions need a simple cover.
//!
//! Chart coordinates are quotient-fixed (each chart reads its own cell);
//! a chart's integer lift offsets say which lattice copy its canonical
//! momenta `p_i` come from, and enter only the local potential
//! `β_U = k (p_i + lift_i P_i) dx^i`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::exterior::{AffineMap, DifferentialForm, ExteriorError, Frame, VectorField};
use crate::symcore::{fmt_rational, int, is_integer, to_f64, vars, Polynomial, Rational, Vars};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AtlasError {
    #[error("invalid manifold: {0}")]
    InvalidSpec(String),
    #[error(
        "grid {grid} on periodic coordinate `{coordinate}` is too coarse (need at least 3 cells)"
    )]
    GridTooCoarse { coordinate: String, grid: u32 },
    #[error("β_U − β_V is not closed on the overlap of charts {u} and {v}")]
    NotClosed { u: usize, v: usize },
    #[error("cocycle sum on triple {triple:?} is not constant: {value}")]
    NonConstantCocycle { triple: [usize; 3], value: String },
    #[error("coordinate `{0}` is not a periodic transversal coordinate")]
    NotPeriodic(String),
    #[error("no overlap between charts {0} and {1}")]
    NoOverlap(usize, usize),
    #[error(transparent)]
    Exterior(#[from] ExteriorError),
}

/// The base manifold `M` of dimension `2n + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldSpec {
    pub n: usize,
    /// Period of the characteristic coordinate `x0`; `None` means unbounded.
    pub x0_period: Option<f64>,
    pub x_periods: Vec<Option<Rational>>,
    pub p_periods: Vec<Option<Rational>>,
    /// Multiplies the `p_i dx^i` term of `α`.
    pub scale: Rational,
}

impl ManifoldSpec {
    /// `ℝ^{2n+1}` with `α = dx0 + p_i dx^i`.
    pub fn euclidean(n: usize) -> Self {
        ManifoldSpec {
            n,
            x0_period: None,
            x_periods: vec![None; n],
            p_periods: vec![None; n],
            scale: Rational::one(),
        }
    }

    /// Every `x^i` and `p_i` periodic with the same period.
    pub fn torus(n: usize, period: Rational) -> Self {
        ManifoldSpec {
            n,
            x0_period: None,
            x_periods: vec![Some(period.clone()); n],
            p_periods: vec![Some(period); n],
            scale: Rational::one(),
        }
    }

    pub fn with_scale(mut self, k: Rational) -> Self {
        self.scale = k;
        self
    }

    pub fn with_x0_period(mut self, tau: Option<f64>) -> Self {
        self.x0_period = tau;
        self
    }

    pub fn validate(&self) -> Result<(), AtlasError> {
        let bad = |msg: String| Err(AtlasError::InvalidSpec(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.x_periods.len() != self.n || self.p_periods.len() != self.n {
            return bad(format!("expected {} x and p periods", self.n));
        }
        if let Some(t) = self.x0_period {
            if !(t.is_finite() && t > 0.0) {
                return bad(format!("x0 period must be positive, got {t}"));
            }
        }
        for p in self.x_periods.iter().chain(&self.p_periods).flatten() {
            if !p.is_positive() {
                return bad(format!("periods must be positive, got {}", fmt_rational(p)));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    pub fn coordinate_names(&self) -> Vec<String> {
        let mut names = vec!["x0".to_string()];
        names.extend((1..=self.n).map(|i| format!("x{i}")));
        names.extend((1..=self.n).map(|i| format!("p{i}")));
        names
    }

    /// Index of `x^i` (1-based `i`) in the base coordinates.
    pub fn x_index(&self, i: usize) -> usize {
        i
    }

    /// Index of `p_i` (1-based `i`) in the base coordinates.
    pub fn p_index(&self, i: usize) -> usize {
        self.n + i
    }

    /// Exact period of each base coordinate; `x0` is never part of the grid.
    pub fn transversal_period(&self, coord: usize) -> Option<&Rational> {
        if coord == 0 {
            None
        } else if coord <= self.n {
            self.x_periods[coord - 1].as_ref()
        } else {
            self.p_periods[coord - self.n - 1].as_ref()
        }
    }

    /// Periods of all base coordinates as floats, `x0` included.
    pub fn float_periods(&self) -> Vec<Option<f64>> {
        (0..self.dim())
            .map(|c| {
                if c == 0 {
                    self.x0_period
                } else {
                    self.transversal_period(c).map(to_f64)
                }
            })
            .collect()
    }

    pub fn has_periodic_transversal(&self) -> bool {
        (1..self.dim()).any(|c| self.transversal_period(c).is_some())
    }
}

/// Number of cells per transversal coordinate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Grid {
    Uniform(u32),
    /// One entry per `x1..xn, p1..pn`.
    PerCoordinate(Vec<u32>),
}

impl Grid {
    fn cells(&self, coord: usize) -> u32 {
        match self {
            Grid::Uniform(g) => *g,
            Grid::PerCoordinate(v) => v.get(coord - 1).copied().unwrap_or(0),
        }
    }
}

/// Open interval; both ends `None` means the whole line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interval {
    pub lo: Option<Rational>,
    pub hi: Option<Rational>,
}

impl Interval {
    pub fn line() -> Self {
        Interval { lo: None, hi: None }
    }

    pub fn new(lo: Rational, hi: Rational) -> Self {
        Interval {
            lo: Some(lo),
            hi: Some(hi),
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_some() && self.hi.is_some()
    }

    /// Midpoint, or 0 for an unbounded interval.
    pub fn center(&self) -> Rational {
        match (&self.lo, &self.hi) {
            (Some(a), Some(b)) => (a + b) / int(2),
            _ => Rational::zero(),
        }
    }

    pub fn shifted(&self, t: &Rational) -> Interval {
        Interval {
            lo: self.lo.as_ref().map(|a| a + t),
            hi: self.hi.as_ref().map(|b| b + t),
        }
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = match (&self.lo, &other.lo) {
            (Some(a), Some(b)) => Some(a.max(b).clone()),
            (a, b) => a.clone().or(b.clone()),
        };
        let hi = match (&self.hi, &other.hi) {
            (Some(a), Some(b)) => Some(a.min(b).clone()),
            (a, b) => a.clone().or(b.clone()),
        };
        match (&lo, &hi) {
            (Some(a), Some(b)) if a >= b => None,
            _ => Some(Interval { lo, hi }),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo.as_ref().is_none_or(|a| x > to_f64(a))
            && self.hi.as_ref().is_none_or(|b| x < to_f64(b))
    }

    /// Affine image of `u ∈ [0, 1]`; unbounded intervals map to `[-width/2, width/2]`.
    pub fn sample(&self, u: f64, width: f64) -> f64 {
        match (&self.lo, &self.hi) {
            (Some(a), Some(b)) => {
                let (a, b) = (to_f64(a), to_f64(b));
                a + (b - a) * u
            }
            _ => (u - 0.5) * width,
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.lo, &self.hi) {
            (Some(a), Some(b)) => write!(f, "({}, {})", fmt_rational(a), fmt_rational(b)),
            _ => write!(f, "(-inf, inf)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Chart {
    pub id: usize,
    pub frame: Frame,
    /// Cell index per base coordinate (`None` where the coordinate is not gridded).
    pub cell: Vec<Option<u32>>,
    /// Box in quotient-fixed coordinates.
    pub bounds: Vec<Interval>,
    /// Lattice copy of each coordinate read by the chart's canonical coordinates.
    pub lift: Vec<i64>,
}

impl Chart {
    /// The box in the universal cover, `bounds + lift · period`.
    pub fn lifted_bounds(&self, spec: &ManifoldSpec) -> Vec<Interval> {
        self.bounds
            .iter()
            .enumerate()
            .map(|(c, iv)| match spec.transversal_period(c) {
                Some(p) => iv.shifted(&(p * int(self.lift[c]))),
                None => iv.clone(),
            })
            .collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        self.bounds.iter().zip(point).all(|(iv, &x)| iv.contains(x))
    }
}

#[derive(Clone, Debug)]
pub struct Overlap {
    pub u: usize,
    pub v: usize,
    /// Intersection box in `U` coordinates.
    pub bounds: Vec<Interval>,
    /// `x_U = x_V + shift`.
    pub shift: Vec<Rational>,
    /// The transition `U → V`, `x_V = x_U − shift`.
    pub to_v: AffineMap,
}

impl Overlap {
    /// Point of `U` coordinates where `β_UV` is made to vanish.
    pub fn base_point(&self, norm: Normalization) -> Vec<Rational> {
        match norm {
            Normalization::OverlapCenter => self.bounds.iter().map(Interval::center).collect(),
            Normalization::ChartOrigin => vec![Rational::zero(); self.bounds.len()],
        }
    }
}

/// Additive constant fixed on each `β_UV`.
///
/// `ChartOrigin` integrates from the origin of the `U` coordinates; with
/// lattice-valued shifts this keeps `c_UVW ∈ k ℤ P_x P_p`. `OverlapCenter`
/// integrates from the middle of the overlap box, which moves each `c` by a
/// coboundary of centre offsets (the class and the fundamental total are unchanged).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    ChartOrigin,
    OverlapCenter,
}

#[derive(Clone, Debug)]
pub struct Triple {
    /// Sorted chart ids.
    pub charts: [usize; 3],
    /// Triple intersection in coordinates of `charts[0]`.
    pub bounds: Vec<Interval>,
}

/// The simple covering `{U}` of `M` and all of its intersections.
#[derive(Clone, Debug)]
pub struct Covering {
    pub spec: ManifoldSpec,
    vars: Vars,
    charts: Vec<Chart>,
    overlaps: BTreeMap<(usize, usize), Overlap>,
    triples: Vec<Triple>,
    cells: Vec<u32>,
    by_cell: HashMap<Vec<Option<u32>>, usize>,
}

/// Builds the grid covering. Periodic transversal coordinates need `grid ≥ 3`.
pub fn build_covering(spec: &ManifoldSpec, grid: &Grid) -> Result<Covering, AtlasError> {
    spec.validate()?;
    let names = spec.coordinate_names();
    let vars = vars(&names);
    let dim = spec.dim();

    let mut cells = vec![0u32; dim];
    for c in 1..dim {
        if spec.transversal_period(c).is_some() {
            let g = grid.cells(c);
            if g < 3 {
                return Err(AtlasError::GridTooCoarse {
                    coordinate: names[c].clone(),
                    grid: g,
                });
            }
            cells[c] = g;
        }
    }

    let gridded: Vec<usize> = (0..dim).filter(|&c| cells[c] > 0).collect();
    let mut cell_vectors: Vec<Vec<Option<u32>>> = vec![vec![None; dim]];
    for &c in &gridded {
        cell_vectors = cell_vectors
            .into_iter()
            .flat_map(|cv| {
                (0..cells[c]).map(move |i| {
                    let mut next = cv.clone();
                    next[c] = Some(i);
                    next
                })
            })
            .collect();
    }

    let charts: Vec<Chart> = cell_vectors
        .into_iter()
        .enumerate()
        .map(|(id, cell)| {
            let bounds = (0..dim)
                .map(|c| match (cell[c], spec.transversal_period(c)) {
                    (Some(i), Some(p)) => cell_interval(p, cells[c], i),
                    _ => Interval::line(),
                })
                .collect();
            Chart {
                id,
                frame: Frame::with_vars(&format!("U{id}"), vars.clone()),
                cell,
                bounds,
                lift: vec![0; dim],
            }
        })
        .collect();
    let by_cell = charts.iter().map(|c| (c.cell.clone(), c.id)).collect();

    let mut covering = Covering {
        spec: spec.clone(),
        vars,
        charts,
        overlaps: BTreeMap::new(),
        triples: Vec::new(),
        cells,
        by_cell,
    };
    covering.overlaps = covering.find_overlaps()?;
    covering.triples = covering.find_triples();
    Ok(covering)
}

fn cell_interval(period: &Rational, g: u32, i: u32) -> Interval {
    let g = int(g as i64);
    let margin = period / (int(4) * &g);
    let lo = period * int(i as i64) / &g - &margin;
    let hi = period * int(i as i64 + 1) / &g + &margin;
    Interval::new(lo, hi)
}

impl Covering {
    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn chart(&self, id: usize) -> &Chart {
        &self.charts[id]
    }

    pub fn vars(&self) -> &Vars {
        &self.vars
    }

    pub fn overlaps(&self) -> impl Iterator<Item = &Overlap> {
        self.overlaps.values()
    }

    /// Unordered overlaps, one per pair `u < v`.
    pub fn pair_count(&self) -> usize {
        self.overlaps.len() / 2
    }

    pub fn overlap(&self, u: usize, v: usize) -> Option<&Overlap> {
        self.overlaps.get(&(u, v))
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn cells(&self, coord: usize) -> u32 {
        self.cells[coord]
    }

    pub fn chart_at_cell(&self, cell: &[Option<u32>]) -> Option<usize> {
        self.by_cell.get(cell).copied()
    }

    /// Sets chart `id`'s lattice copy along `coord` (used to exercise lift bookkeeping).
    pub fn set_lift(&mut self, id: usize, coord: usize, copy: i64) -> Result<(), AtlasError> {
        if self.spec.transversal_period(coord).is_none() {
            return Err(AtlasError::NotPeriodic(
                self.spec.coordinate_names()[coord].clone(),
            ));
        }
        self.charts[id].lift[coord] = copy;
        Ok(())
    }

    /// Chart whose cell contains the quotient point, and the point's
    /// coordinates in that chart.
    pub fn locate(&self, point: &[f64]) -> (usize, Vec<f64>) {
        let mut cell = vec![None; self.spec.dim()];
        let mut local = point.to_vec();
        for c in 0..self.spec.dim() {
            if let Some(p) = self.spec.transversal_period(c) {
                let p = to_f64(p);
                let g = self.cells[c];
                let w = point[c].rem_euclid(p);
                let i = ((w / p * g as f64).floor() as u32).min(g - 1);
                cell[c] = Some(i);
                local[c] = w;
            }
        }
        (self.by_cell[&cell], local)
    }

    fn neighbour_cells(&self, cell: &[Option<u32>]) -> Vec<Vec<Option<u32>>> {
        let mut out = vec![cell.to_vec()];
        for c in 0..cell.len() {
            if let Some(i) = cell[c] {
                let g = self.cells[c];
                out = out
                    .into_iter()
                    .flat_map(|cv| {
                        [(i + g - 1) % g, i, (i + 1) % g].into_iter().map(move |j| {
                            let mut next = cv.clone();
                            next[c] = Some(j);
                            next
                        })
                    })
                    .collect();
            }
        }
        out.sort();
        out.dedup();
        out
    }

    fn find_overlaps(&self) -> Result<BTreeMap<(usize, usize), Overlap>, AtlasError> {
        let mut out = BTreeMap::new();
        for a in &self.charts {
            for cell in self.neighbour_cells(&a.cell) {
                let b = &self.charts[self.by_cell[&cell]];
                if b.id == a.id {
                    continue;
                }
                let mut shift = Vec::with_capacity(self.spec.dim());
                let mut bounds = Vec::with_capacity(self.spec.dim());
                let mut empty = false;
                for c in 0..self.spec.dim() {
                    let t = match (a.cell[c], b.cell[c], self.spec.transversal_period(c)) {
                        (Some(i), Some(j), Some(p)) => {
                            let g = self.cells[c];
                            if i == j {
                                Rational::zero()
                            } else if j == (i + 1) % g && i == g - 1 {
                                p.clone()
                            } else if j == (i + g - 1) % g && i == 0 {
                                -p.clone()
                            } else {
                                Rational::zero()
                            }
                        }
                        _ => Rational::zero(),
                    };
                    match a.bounds[c].intersect(&b.bounds[c].shifted(&t)) {
                        Some(iv) => bounds.push(iv),
                        None => {
                            empty = true;
                            break;
                        }
                    }
                    shift.push(t);
                }
                if empty {
                    continue;
                }
                let back: Vec<Rational> = shift.iter().map(|t| -t.clone()).collect();
                let to_v = AffineMap::translation(&a.frame, &b.frame, &back)?;
                out.insert(
                    (a.id, b.id),
                    Overlap {
                        u: a.id,
                        v: b.id,
                        bounds,
                        shift,
                        to_v,
                    },
                );
            }
        }
        Ok(out)
    }

    fn find_triples(&self) -> Vec<Triple> {
        let mut adjacency: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(u, v) in self.overlaps.keys() {
            adjacency.entry(u).or_default().push(v);
        }
        let mut out = Vec::new();
        for (&a, nbrs) in &adjacency {
            for &b in nbrs.iter().filter(|&&b| b > a) {
                for &c in nbrs.iter().filter(|&&c| c > b) {
                    let (Some(ab), Some(ac), Some(bc)) = (
                        self.overlaps.get(&(a, b)),
                        self.overlaps.get(&(a, c)),
                        self.overlaps.get(&(b, c)),
                    ) else {
                        continue;
                    };
                    let consistent =
                        (0..self.spec.dim()).all(|k| &ab.shift[k] + &bc.shift[k] == ac.shift[k]);
                    if !consistent {
                        continue;
                    }
                    let bounds: Option<Vec<Interval>> = (0..self.spec.dim())
                        .map(|k| ab.bounds[k].intersect(&ac.bounds[k]))
                        .collect();
                    if let Some(bounds) = bounds {
                        out.push(Triple {
                            charts: [a, b, c],
                            bounds,
                        });
                    }
                }
            }
        }
        out
    }

    /// The characteristic field `ξ = ∂/∂x0` in a chart.
    pub fn xi(&self, id: usize) -> VectorField {
        VectorField::coordinate(&self.charts[id].frame, 0)
    }
}

/// The local basic potentials `β_U = k (p_i + lift_i P_i) dx^i`.
pub fn local_potentials(spec: &ManifoldSpec, covering: &Covering) -> Vec<DifferentialForm> {
    covering
        .charts()
        .iter()
        .map(|chart| {
            let f = &chart.frame;
            (1..=spec.n).fold(DifferentialForm::zero(f, 1), |acc, i| {
                let pc = spec.p_index(i);
                let offset = spec
                    .transversal_period(pc)
                    .map(|p| p * int(chart.lift[pc]))
                    .unwrap_or_else(Rational::zero);
                let momentum = &f.coordinate(pc) + &Polynomial::constant(f.vars(), offset);
                let term = DifferentialForm::differential(f, spec.x_index(i))
                    .mul_function(&momentum.scale(&spec.scale))
                    .expect("same frame");
                acc + term
            })
        })
        .collect()
}

/// `ω = dα = k dp_i ∧ dx^i` in a chart frame.
pub fn symplectic_form(spec: &ManifoldSpec, frame: &Frame) -> DifferentialForm {
    let offset = frame.dim() - spec.dim();
    (1..=spec.n).fold(DifferentialForm::zero(frame, 2), |acc, i| {
        let dp = DifferentialForm::differential(frame, offset + spec.p_index(i));
        let dx = DifferentialForm::differential(frame, offset + spec.x_index(i));
        acc + dp.wedge(&dx).expect("same frame").scale(&spec.scale)
    })
}

/// Pulls a function on chart `V` back to chart `U` through `U → V`.
pub fn pull_function(map: &AffineMap, f: &Polynomial) -> Result<Polynomial, ExteriorError> {
    Ok(DifferentialForm::function(map.target(), f)?
        .pullback(map)?
        .as_function())
}

/// Primitive of a closed 1-form along the axis-ordered path from `base`.
///
/// The path moves coordinate `order[0]` first, then `order[1]`, … ; the
/// result vanishes at `base`.
pub fn axis_path_primitive(
    delta: &DifferentialForm,
    base: &[Rational],
    order: &[usize],
) -> Polynomial {
    let frame = delta.frame();
    let mut total = frame.zero();
    for (k, &c) in order.iter().enumerate() {
        let mut anti = delta.component(&[c]).antiderivative(c);
        for &later in &order[k + 1..] {
            anti = anti.substitute_value(later, &base[later]);
        }
        let at_start = anti.substitute_value(c, &base[c]);
        total = &(&total + &anti) - &at_start;
    }
    total
}

/// `β_UV` with `dβ_UV = β_U − β_V` on the overlap, vanishing at the chosen base point.
pub fn transition_potential(
    beta_u: &DifferentialForm,
    beta_v: &DifferentialForm,
    overlap: &Overlap,
    norm: Normalization,
) -> Result<Polynomial, AtlasError> {
    let order: Vec<usize> = (0..beta_u.frame().dim()).collect();
    transition_potential_ordered(beta_u, beta_v, overlap, norm, &order)
}

pub fn transition_potential_ordered(
    beta_u: &DifferentialForm,
    beta_v: &DifferentialForm,
    overlap: &Overlap,
    norm: Normalization,
    order: &[usize],
) -> Result<Polynomial, AtlasError> {
    let delta = beta_u - &beta_v.pullback(&overlap.to_v)?;
    if !delta.d().is_zero() {
        return Err(AtlasError::NotClosed {
            u: overlap.u,
            v: overlap.v,
        });
    }
    let primitive = axis_path_primitive(&delta, &overlap.base_point(norm), order);
    let check = DifferentialForm::function(delta.frame(), &primitive)?.d();
    if check != delta {
        return Err(AtlasError::NotClosed {
            u: overlap.u,
            v: overlap.v,
        });
    }
    Ok(primitive)
}

/// The Čech data of the Pfaffian structure on a covering.
#[derive(Clone, Debug)]
pub struct CechData {
    pub covering: Covering,
    pub normalization: Normalization,
    pub potentials: Vec<DifferentialForm>,
    /// Gauge functions `f_U` already folded into `potentials` (zero for the canonical choice).
    pub gauges: Vec<Polynomial>,
    /// `β_UV` in `U` coordinates, for both orientations of every overlap.
    pub transitions: BTreeMap<(usize, usize), Polynomial>,
    /// `β_UV + β_VU` for `u < v` as integrated before antisymmetrising
    /// (the stored transitions satisfy `β_VU = −β_UV` exactly).
    pub antisymmetry: BTreeMap<(usize, usize), Rational>,
    /// `c_UVW` for sorted triples.
    pub cocycle: BTreeMap<[usize; 3], Rational>,
}

impl CechData {
    /// Canonical potentials with the default normalisation.
    pub fn compute(covering: &Covering) -> Result<CechData, AtlasError> {
        CechData::compute_with(covering, Normalization::default())
    }

    pub fn compute_with(covering: &Covering, norm: Normalization) -> Result<CechData, AtlasError> {
        let potentials = local_potentials(&covering.spec, covering);
        CechData::from_potentials(covering, potentials, norm)
    }

    /// Runs the pipeline on arbitrary local potentials (each must satisfy `dβ_U = ω`).
    pub fn from_potentials(
        covering: &Covering,
        potentials: Vec<DifferentialForm>,
        norm: Normalization,
    ) -> Result<CechData, AtlasError> {
        let overlaps: Vec<&Overlap> = covering.overlaps().collect();
        let raw: BTreeMap<(usize, usize), Polynomial> = overlaps
            .par_iter()
            .map(|ov| {
                transition_potential(&potentials[ov.u], &potentials[ov.v], ov, norm)
                    .map(|p| ((ov.u, ov.v), p))
            })
            .collect::<Result<_, _>>()?;
        // keep β_UV for u < v and set β_VU = −β_UV so that c is alternating;
        // the raw β_UV + β_VU constants are kept as a record of the gauge
        let mut transitions = BTreeMap::new();
        let mut antisymmetry = BTreeMap::new();
        for ov in covering.overlaps().filter(|ov| ov.u < ov.v) {
            let back = covering
                .overlap(ov.v, ov.u)
                .expect("overlaps are symmetric");
            let forward = raw[&(ov.u, ov.v)].clone();
            let reverse = -&pull_function(&back.to_v, &forward)?;
            let raw_sum = &forward + &pull_function(&ov.to_v, &raw[&(ov.v, ov.u)])?;
            let c = raw_sum
                .constant_value()
                .ok_or_else(|| AtlasError::NonConstantCocycle {
                    triple: [ov.u, ov.v, ov.u],
                    value: raw_sum.to_string(),
                })?;
            antisymmetry.insert((ov.u, ov.v), c);
            transitions.insert((ov.u, ov.v), forward);
            transitions.insert((ov.v, ov.u), reverse);
        }
        let gauges = covering.charts().iter().map(|c| c.frame.zero()).collect();
        CechData::assemble(
            covering,
            norm,
            potentials,
            gauges,
            transitions,
            antisymmetry,
        )
    }

    fn assemble(
        covering: &Covering,
        normalization: Normalization,
        potentials: Vec<DifferentialForm>,
        gauges: Vec<Polynomial>,
        transitions: BTreeMap<(usize, usize), Polynomial>,
        antisymmetry: BTreeMap<(usize, usize), Rational>,
    ) -> Result<CechData, AtlasError> {
        let mut data = CechData {
            covering: covering.clone(),
            normalization,
            potentials,
            gauges,
            transitions,
            antisymmetry,
            cocycle: BTreeMap::new(),
        };
        data.cocycle = cocycle_constants(&data, covering.triples())?;
        Ok(data)
    }

    /// Applies per-chart basic gauges `β_U ↦ β_U + df_U`, transporting each
    /// gauge through the primitives: `β_UV ↦ β_UV + f_U − f_V`.
    pub fn with_gauge(&self, gauges: &[Polynomial]) -> Result<CechData, AtlasError> {
        let charts = self.covering.charts();
        assert_eq!(gauges.len(), charts.len(), "one gauge function per chart");
        let mut potentials = Vec::with_capacity(charts.len());
        for (chart, f) in charts.iter().zip(gauges) {
            let df = DifferentialForm::function(&chart.frame, f)?.d();
            potentials.push(&self.potentials[chart.id] + &df);
        }
        let mut transitions = BTreeMap::new();
        for ov in self.covering.overlaps() {
            let fu = charts[ov.u].frame.adopt(&gauges[ov.u])?;
            let fv = pull_function(&ov.to_v, &gauges[ov.v])?;
            let shifted = &(&self.transitions[&(ov.u, ov.v)] + &fu) - &fv;
            transitions.insert((ov.u, ov.v), shifted);
        }
        let merged = self.gauges.iter().zip(gauges).map(|(a, b)| a + b).collect();
        CechData::assemble(
            &self.covering,
            self.normalization,
            potentials,
            merged,
            transitions,
            self.antisymmetry.clone(),
        )
    }

    /// `c` for any ordering of three charts (antisymmetric), or `None` if they do not meet.
    pub fn cocycle_value(&self, a: usize, b: usize, c: usize) -> Option<Rational> {
        let mut idx = [a, b, c];
        let mut sign = 1;
        for i in 0..3 {
            for j in 0..2 - i {
                if idx[j] > idx[j + 1] {
                    idx.swap(j, j + 1);
                    sign = -sign;
                }
            }
        }
        if idx[0] == idx[1] || idx[1] == idx[2] {
            return None;
        }
        self.cocycle
            .get(&idx)
            .map(|v| if sign < 0 { -v.clone() } else { v.clone() })
    }

    /// Signed sum of `c` over a triangulation of the `(first, second)` torus
    /// oriented by `(first, second)`: the pairing of the cocycle with that
    /// 2-cycle, which equals `∫ ω(∂_first, ∂_second)` over the fundamental domain.
    pub fn fundamental_total(&self, first: usize, second: usize) -> Result<Rational, AtlasError> {
        let names = self.covering.spec.coordinate_names();
        for c in [first, second] {
            if self.covering.spec.transversal_period(c).is_none() {
                return Err(AtlasError::NotPeriodic(names[c].clone()));
            }
        }
        let (ga, gb) = (self.covering.cells(first), self.covering.cells(second));
        let base: Vec<Option<u32>> = self
            .covering
            .chart(0)
            .cell
            .iter()
            .map(|c| c.map(|_| 0))
            .collect();
        let at = |i: u32, j: u32| {
            let mut cell = base.clone();
            cell[first] = Some(i % ga);
            cell[second] = Some(j % gb);
            self.covering
                .chart_at_cell(&cell)
                .expect("grid cell exists")
        };
        let mut total = Rational::zero();
        for i in 0..ga {
            for j in 0..gb {
                let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
                for (u, v, w) in [(a, b, c), (a, c, d)] {
                    total += self
                        .cocycle_value(u, v, w)
                        .ok_or(AtlasError::NoOverlap(u, w))?;
                }
            }
        }
        Ok(total)
    }

    /// `∫ ω(∂_first, ∂_second)` over the fundamental domain by Gauss–Legendre
    /// quadrature on each grid cell, reading `ω = dβ_U` from the chart owning the point.
    pub fn curvature_flux(&self, first: usize, second: usize) -> Result<f64, AtlasError> {
        let spec = &self.covering.spec;
        let names = spec.coordinate_names();
        let period = |c: usize| {
            spec.transversal_period(c)
                .map(to_f64)
                .ok_or_else(|| AtlasError::NotPeriodic(names[c].clone()))
        };
        let (pa, pb) = (period(first)?, period(second)?);
        let (ga, gb) = (self.covering.cells(first), self.covering.cells(second));
        let curvatures: Vec<DifferentialForm> =
            self.potentials.iter().map(DifferentialForm::d).collect();
        let (lo, hi, sign) = if first < second {
            (first, second, 1.0)
        } else {
            (second, first, -1.0)
        };
        let mut total = 0.0;
        for i in 0..ga {
            for j in 0..gb {
                let (a0, b0) = (pa * i as f64 / ga as f64, pb * j as f64 / gb as f64);
                let (ha, hb) = (pa / ga as f64, pb / gb as f64);
                for (na, wa) in GAUSS_LEGENDRE_5 {
                    for (nb, wb) in GAUSS_LEGENDRE_5 {
                        let mut point = vec![0.0; spec.dim()];
                        for c in 1..spec.dim() {
                            if let Some(p) = spec.transversal_period(c) {
                                point[c] = to_f64(p) / (2.0 * self.covering.cells(c) as f64);
                            }
                        }
                        point[first] = a0 + ha * 0.5 * (na + 1.0);
                        point[second] = b0 + hb * 0.5 * (nb + 1.0);
                        let (chart, local) = self.covering.locate(&point);
                        let value = curvatures[chart].component(&[lo, hi]).eval_f64(&local);
                        total += sign * value * wa * wb * 0.25 * ha * hb;
                    }
                }
            }
        }
        Ok(total)
    }

    /// Fiber transition constants are integral on every triple.
    pub fn integrality(&self) -> IntegralityReport {
        integrality_check(&self.cocycle)
    }
}

const GAUSS_LEGENDRE_5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];

/// `c_UVW = β_UV + β_VW + β_WU` on each triple, all read in `U` coordinates.
pub fn cocycle_constants(
    cech: &CechData,
    triples: &[Triple],
) -> Result<BTreeMap<[usize; 3], Rational>, AtlasError> {
    let cov = &cech.covering;
    triples
        .par_iter()
        .map(|t| {
            let [u, v, w] = t.charts;
            let uv = cov.overlap(u, v).ok_or(AtlasError::NoOverlap(u, v))?;
            let uw = cov.overlap(u, w).ok_or(AtlasError::NoOverlap(u, w))?;
            let b_uv = &cech.transitions[&(u, v)];
            let b_vw = pull_function(&uv.to_v, &cech.transitions[&(v, w)])?;
            let b_wu = pull_function(&uw.to_v, &cech.transitions[&(w, u)])?;
            let sum = &(b_uv + &b_vw) + &b_wu;
            let c = sum
                .constant_value()
                .ok_or_else(|| AtlasError::NonConstantCocycle {
                    triple: t.charts,
                    value: sum.to_string(),
                })?;
            Ok((t.charts, c))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegralityReport {
    pub integral: bool,
    pub triples_checked: usize,
    /// Triples whose constant is not an integer, with the constant as `"a/b"`.
    pub offending: Vec<([usize; 3], String)>,
    pub caveat: Option<String>,
}

/// Exact integer test on the computed cocycle representative.
pub fn integrality_check(cocycle: &BTreeMap<[usize; 3], Rational>) -> IntegralityReport {
    let offending: Vec<([usize; 3], String)> = cocycle
        .iter()
        .filter(|(_, c)| !is_integer(c))
        .map(|(t, c)| (*t, fmt_rational(c)))
        .collect();
    let integral = offending.is_empty();
    IntegralityReport {
        integral,
        triples_checked: cocycle.len(),
        caveat: (!integral).then(|| {
            "the computed representative is not integral; a cohomologous integer cocycle is not searched for"
                .to_string()
        }),
        offending,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcore::rat;

    fn unit_torus(k: Rational) -> (ManifoldSpec, Covering) {
        let spec = ManifoldSpec::torus(1, int(1)).with_scale(k);
        let cov = build_covering(&spec, &Grid::Uniform(3)).unwrap();
        (spec, cov)
    }

    #[test]
    fn grid_covering_counts() {
        let (_, cov) = unit_torus(int(1));
        assert_eq!(cov.charts().len(), 9);
        // every cell meets its 8 neighbours
        assert_eq!(cov.pair_count(), 9 * 8 / 2);
        // four charts meet at each of the 9 corners
        assert_eq!(cov.triples().len(), 9 * 4);
        let side = cov.chart(0).bounds[1].clone();
        let width = side.hi.unwrap() - side.lo.unwrap();
        assert_eq!(width, rat(1, 3) + int(2) * rat(1, 12));
    }

    #[test]
    fn covering_contains_every_quotient_point() {
        let (_, cov) = unit_torus(int(1));
        for i in 0..40 {
            for j in 0..40 {
                let pt = [0.3, i as f64 / 40.0, j as f64 / 40.0];
                assert!(cov.charts().iter().any(|c| c.contains(&pt)), "{pt:?}");
            }
        }
    }

    #[test]
    fn euclidean_space_is_one_chart() {
        let spec = ManifoldSpec::euclidean(2);
        let cov = build_covering(&spec, &Grid::Uniform(3)).unwrap();
        assert_eq!(cov.charts().len(), 1);
        assert_eq!(cov.pair_count(), 0);
        assert!(cov.triples().is_empty());
        let cech = CechData::compute(&cov).unwrap();
        assert!(cech.integrality().integral);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let spec = ManifoldSpec::torus(1, int(1));
        let err = build_covering(&spec, &Grid::Uniform(2)).unwrap_err();
        assert!(matches!(err, AtlasError::GridTooCoarse { grid: 2, .. }));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = ManifoldSpec::torus(1, int(1));
        spec.p_periods[0] = Some(int(-1));
        assert!(spec.validate().is_err());
        assert!(ManifoldSpec::euclidean(0).validate().is_err());
        assert!(ManifoldSpec::euclidean(1)
            .with_x0_period(Some(0.0))
            .validate()
            .is_err());
    }

    #[test]
    fn local_potential_examples() {
        let (spec, mut cov) = unit_torus(int(1));
        let pots = local_potentials(&spec, &cov);
        let f = &cov.chart(0).frame.clone();
        let p_dx = DifferentialForm::differential(f, 1)
            .mul_function(&f.coordinate(2))
            .unwrap();
        assert_eq!(pots[0], p_dx);
        let omega = symplectic_form(&spec, f);
        for (chart, beta) in cov.charts().iter().zip(&pots) {
            assert_eq!(beta.d(), symplectic_form(&spec, &chart.frame));
            assert!(beta.is_basic(&cov.xi(chart.id)).unwrap());
        }
        assert_eq!(pots[0].d(), omega);

        cov.set_lift(0, 2, 1).unwrap();
        let lifted = local_potentials(&spec, &cov);
        let one = Polynomial::one(f.vars());
        let expected = DifferentialForm::differential(f, 1)
            .mul_function(&(&f.coordinate(2) + &one))
            .unwrap();
        assert_eq!(lifted[0], expected);
        assert_eq!(lifted[0].d(), omega);

        let half_spec = spec.clone().with_scale(rat(1, 2));
        let halved = local_potentials(&half_spec, &cov);
        assert_eq!(halved[1], pots[1].scale(&rat(1, 2)));
    }

    #[test]
    fn transition_potential_examples() {
        let (spec, cov) = unit_torus(int(1));
        let pots = local_potentials(&spec, &cov);
        let half_spec = spec.clone().with_scale(rat(1, 2));
        let hp = local_potentials(&half_spec, &cov);
        // charts whose p-cells are 2 and 0 with equal x-cell: p wraps by one period
        let top = cov.chart_at_cell(&[None, Some(0), Some(2)]).unwrap();
        let bottom = cov.chart_at_cell(&[None, Some(0), Some(0)]).unwrap();
        let left = cov.chart_at_cell(&[None, Some(2), Some(1)]).unwrap();
        let right = cov.chart_at_cell(&[None, Some(0), Some(1)]).unwrap();
        let f = &cov.chart(top).frame;
        for norm in [Normalization::ChartOrigin, Normalization::OverlapCenter] {
            let ov = cov.overlap(top, bottom).unwrap();
            assert_eq!(ov.shift[2], int(1));
            let b = transition_potential(&pots[top], &pots[bottom], ov, norm).unwrap();
            let base = ov.base_point(norm);
            let expected = &f.coordinate(1) - &Polynomial::constant(f.vars(), base[1].clone());
            assert_eq!(b, expected);
            assert_eq!(b.eval_exact(&base), Rational::zero());

            let b = transition_potential(&hp[top], &hp[bottom], ov, norm).unwrap();
            assert_eq!(b, expected.scale(&rat(1, 2)));

            // pure x-translation overlap
            let ov = cov.overlap(left, right).unwrap();
            assert!(transition_potential(&pots[left], &pots[right], ov, norm)
                .unwrap()
                .is_zero());
        }
        let ov = cov.overlap(top, bottom).unwrap();
        assert_eq!(ov.base_point(Normalization::OverlapCenter)[1], rat(1, 6));
    }

    #[test]
    fn centre_normalisation_shifts_c_by_a_coboundary() {
        let (_, cov) = unit_torus(int(1));
        let origin = CechData::compute_with(&cov, Normalization::ChartOrigin).unwrap();
        let centre = CechData::compute_with(&cov, Normalization::OverlapCenter).unwrap();
        assert_eq!(centre.fundamental_total(2, 1).unwrap(), int(1));
        assert!(centre.antisymmetry.values().all(Rational::is_zero));
        assert!(!centre.integrality().integral);
        assert!(origin.integrality().integral);
    }

    #[test]
    fn non_closed_difference_is_an_error() {
        let (spec, cov) = unit_torus(int(1));
        let pots = local_potentials(&spec, &cov);
        let ov = cov.overlaps().next().unwrap();
        let f = &cov.chart(ov.u).frame;
        let bad = &pots[ov.u]
            + &DifferentialForm::differential(f, 1)
                .mul_function(&f.coordinate(2))
                .unwrap();
        assert!(matches!(
            transition_potential(&bad, &pots[ov.v], ov, Normalization::default()),
            Err(AtlasError::NotClosed { .. })
        ));
    }

    #[test]
    fn cocycle_on_unit_torus() {
        let (_, cov) = unit_torus(int(1));
        let cech = CechData::compute(&cov).unwrap();
        assert!(cech.antisymmetry.values().all(is_integer));
        assert!(cech
            .cocycle
            .values()
            .all(|c| is_integer(c) && c.abs() <= int(1)));
        assert!(cech.cocycle.values().any(|c| !c.is_zero()));
        assert_eq!(cech.fundamental_total(2, 1).unwrap(), int(1));
        assert_eq!(cech.fundamental_total(1, 2).unwrap(), int(-1));
        assert!(cech.integrality().integral);
    }

    #[test]
    fn half_scale_breaks_integrality() {
        let (_, cov) = unit_torus(rat(1, 2));
        let cech = CechData::compute(&cov).unwrap();
        assert_eq!(cech.fundamental_total(2, 1).unwrap(), rat(1, 2));
        let report = cech.integrality();
        assert!(!report.integral);
        assert!(report
            .offending
            .iter()
            .any(|(_, c)| c == "1/2" || c == "-1/2"));
        assert!(report.caveat.is_some());
    }

    #[test]
    fn cocycle_is_totally_antisymmetric() {
        let (_, cov) = unit_torus(int(1));
        let cech = CechData::compute(&cov).unwrap();
        for t in cov.triples() {
            let [a, b, c] = t.charts;
            let v = cech.cocycle_value(a, b, c).unwrap();
            assert_eq!(cech.cocycle_value(b, a, c).unwrap(), -v.clone());
            assert_eq!(cech.cocycle_value(b, c, a).unwrap(), v.clone());
            assert_eq!(cech.cocycle_value(c, b, a).unwrap(), -v);
        }
    }

    #[test]
    fn lifting_a_chart_keeps_the_class() {
        let (spec, mut cov) = unit_torus(int(1));
        let base = CechData::compute(&cov).unwrap();
        let id = cov.chart_at_cell(&[None, Some(0), Some(0)]).unwrap();
        cov.set_lift(id, 2, 1).unwrap();
        let lifted = CechData::compute(&cov).unwrap();
        assert_ne!(base.transitions, lifted.transitions);
        assert_eq!(lifted.fundamental_total(2, 1).unwrap(), int(1));
        assert!(lifted.integrality().integral);
        assert!(cov.set_lift(id, 0, 1).is_err());
        let _ = spec;
    }

    #[test]
    fn path_ordering_does_not_matter() {
        let (spec, cov) = unit_torus(int(1));
        let pots = local_potentials(&spec, &cov);
        for ov in cov.overlaps() {
            for norm in [Normalization::ChartOrigin, Normalization::OverlapCenter] {
                let fwd =
                    transition_potential_ordered(&pots[ov.u], &pots[ov.v], ov, norm, &[0, 1, 2])
                        .unwrap();
                let rev =
                    transition_potential_ordered(&pots[ov.u], &pots[ov.v], ov, norm, &[2, 1, 0])
                        .unwrap();
                assert!((&fwd - &rev).is_zero());
            }
        }
    }

    #[test]
    fn flux_quadrature_matches_total() {
        let (_, cov) = unit_torus(int(2));
        let cech = CechData::compute(&cov).unwrap();
        assert_eq!(cech.fundamental_total(2, 1).unwrap(), int(2));
        assert!((cech.curvature_flux(2, 1).unwrap() - 2.0).abs() < 1e-12);
        assert!(cech.curvature_flux(0, 1).is_err());
    }
}
