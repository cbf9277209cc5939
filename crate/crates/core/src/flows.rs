//! Flows of `E`, `X`, `Y` on the bundle and of `ξ` on the base, period
//! detection, and the θ̄-foliation experiments.
//!
//! Trajectories are integrated in lifted (unwrapped) coordinates with RK4;
//! wrapping into the fundamental domain `[0, P)` and winding counts are
//! derived from the lift, so they are exact integers.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::Signed;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::atlas::ManifoldSpec;
use crate::exterior::VectorField;
use crate::weyl::{bundle_coordinates, CanonicalObjects, WeylBundle, WeylError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("duration must be non-negative and finite, got {0}")]
    InvalidDuration(f64),
    #[error("start point has {found} coordinates, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("trajectory left the configured range of `{coordinate}` at t = {t} (value {value})")]
    LeftRange {
        coordinate: String,
        t: f64,
        value: f64,
    },
    #[error("only {found} of {requested} fiber crossings within the integrated duration")]
    InsufficientDuration { found: usize, requested: usize },
    #[error(transparent)]
    Weyl(#[from] WeylError),
}

/// Right-hand side `f(x, out)` of an autonomous ODE.
pub type Rhs = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// The state space of a flow: named coordinates, periods, and optional
/// admissible ranges for the non-compact ones.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSpace {
    pub names: Vec<String>,
    pub periods: Vec<Option<f64>>,
    pub ranges: Vec<Option<(f64, f64)>>,
}

impl PhaseSpace {
    pub fn new(names: Vec<String>, periods: Vec<Option<f64>>) -> Self {
        assert_eq!(names.len(), periods.len());
        let ranges = vec![None; names.len()];
        PhaseSpace {
            names,
            periods,
            ranges,
        }
    }

    /// `P` with coordinates `s, x0, x, p`; `s` has period 1.
    pub fn bundle(spec: &ManifoldSpec) -> Self {
        let mut periods = vec![Some(1.0)];
        periods.extend(spec.float_periods());
        PhaseSpace::new(bundle_coordinates(spec), periods)
    }

    pub fn base(spec: &ManifoldSpec) -> Self {
        PhaseSpace::new(spec.coordinate_names(), spec.float_periods())
    }

    pub fn with_range(mut self, coord: usize, lo: f64, hi: f64) -> Self {
        self.ranges[coord] = Some((lo, hi));
        self
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn wrap(&self, lift: &[f64]) -> Vec<f64> {
        lift.iter()
            .zip(&self.periods)
            .map(|(&x, p)| match p {
                Some(p) => x.rem_euclid(*p),
                None => x,
            })
            .collect()
    }

    /// Displacement from `b` to the nearest lattice image of `a`, and that image's lattice offset.
    pub fn displacement(&self, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<i64>) {
        let mut delta = Vec::with_capacity(a.len());
        let mut image = Vec::with_capacity(a.len());
        for ((&x, &y), p) in a.iter().zip(b).zip(&self.periods) {
            match p {
                Some(p) => {
                    let k = ((x - y) / p).round();
                    delta.push(x - y - k * p);
                    image.push(k as i64);
                }
                None => {
                    delta.push(x - y);
                    image.push(0);
                }
            }
        }
        (delta, image)
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.displacement(a, b)
            .0
            .iter()
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt()
    }
}

pub fn field_rhs(field: &VectorField) -> Rhs {
    let compiled = field.compile();
    Arc::new(move |x: &[f64], out: &mut [f64]| {
        for (o, c) in out.iter_mut().zip(&compiled) {
            *o = c.eval(x);
        }
    })
}

#[derive(Clone)]
pub struct Trajectory {
    pub field: String,
    pub start: Vec<f64>,
    pub h: f64,
    pub times: Vec<f64>,
    /// Unwrapped states, one per entry of `times`.
    pub lifts: Vec<Vec<f64>>,
    pub space: PhaseSpace,
    rhs: Rhs,
}

impl fmt::Debug for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Trajectory")
            .field("field", &self.field)
            .field("start", &self.start)
            .field("h", &self.h)
            .field("samples", &self.times.len())
            .finish()
    }
}

fn rk4_step(rhs: &Rhs, x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    rhs(x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    rhs(&tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    rhs(&tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    rhs(&tmp, &mut k4);
    (0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Integrates a polynomial vector field whose components are ordered like `space`.
pub fn integrate(
    name: &str,
    field: &VectorField,
    space: &PhaseSpace,
    start: &[f64],
    duration: f64,
    h: f64,
) -> Result<Trajectory, FlowError> {
    integrate_fn(name, field_rhs(field), space, start, duration, h)
}

pub fn integrate_fn(
    name: &str,
    rhs: Rhs,
    space: &PhaseSpace,
    start: &[f64],
    duration: f64,
    h: f64,
) -> Result<Trajectory, FlowError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(FlowError::InvalidStep(h));
    }
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(FlowError::InvalidDuration(duration));
    }
    if start.len() != space.dim() {
        return Err(FlowError::Dimension {
            expected: space.dim(),
            found: start.len(),
        });
    }
    let steps = ((duration / h) - 1e-9).ceil().max(0.0) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut lifts = Vec::with_capacity(steps + 1);
    times.push(0.0);
    lifts.push(start.to_vec());
    let mut x = start.to_vec();
    for i in 1..=steps {
        let t_prev = (i - 1) as f64 * h;
        let t = if i == steps { duration } else { i as f64 * h };
        x = rk4_step(&rhs, &x, t - t_prev);
        for (c, r) in space.ranges.iter().enumerate() {
            if let Some((lo, hi)) = r {
                if x[c] < *lo || x[c] > *hi {
                    return Err(FlowError::LeftRange {
                        coordinate: space.names[c].clone(),
                        t,
                        value: x[c],
                    });
                }
            }
        }
        times.push(t);
        lifts.push(x.clone());
    }
    Ok(Trajectory {
        field: name.to_string(),
        start: start.to_vec(),
        h,
        times,
        lifts,
        space: space.clone(),
        rhs,
    })
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.space.wrap(&self.lifts[i])
    }

    /// Completed turns around each periodic coordinate since the start.
    pub fn windings(&self, i: usize) -> Vec<i64> {
        self.lifts[i]
            .iter()
            .zip(&self.start)
            .zip(&self.space.periods)
            .map(|((&x, &x0), p)| match p {
                Some(p) => ((x / p).floor() - (x0 / p).floor()) as i64,
                None => 0,
            })
            .collect()
    }

    /// Lifted state at any `t` in range, by a partial RK4 step from the previous sample.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let i = match self.times.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(i) => return self.lifts[i].clone(),
            Err(0) => 0,
            Err(i) => i - 1,
        };
        let i = i.min(self.len() - 1);
        rk4_step(&self.rhs, &self.lifts[i], t - self.times[i])
    }

    pub fn velocity(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; x.len()];
        (self.rhs)(x, &mut v);
        v
    }

    /// `t, <coordinates>, w_<coordinate>...` for every sample.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(self.space.names.iter().cloned());
        header.extend(
            self.space
                .names
                .iter()
                .zip(&self.space.periods)
                .filter(|(_, p)| p.is_some())
                .map(|(n, _)| format!("w_{n}")),
        );
        writeln!(out, "# field {}", self.field)?;
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = vec![format!("{}", self.times[i])];
            row.extend(self.point(i).iter().map(|x| format!("{x}")));
            row.extend(
                self.windings(i)
                    .into_iter()
                    .zip(&self.space.periods)
                    .filter(|(_, p)| p.is_some())
                    .map(|(w, _)| w.to_string()),
            );
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Earliest return of the orbit to its start within `tol` in quotient distance.
///
/// Candidate returns are local minima of the distance to the nearest lattice
/// image of the start, found as `−→+` sign changes of `Δ·v` between samples
/// whose nearest image agrees, after the orbit has first left the `2 tol` ball.
pub fn detect_period(traj: &Trajectory, tol: f64) -> Option<f64> {
    let g = |t: f64| {
        let x = traj.state_at(t);
        let (delta, image) = traj.space.displacement(&x, &traj.start);
        let v = traj.velocity(&x);
        let dot: f64 = delta.iter().zip(&v).map(|(a, b)| a * b).sum();
        let dist = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
        (dot, image, dist)
    };
    let mut left = false;
    let mut prev = g(0.0);
    for i in 1..traj.len() {
        let (t0, t1) = (traj.times[i - 1], traj.times[i]);
        let cur = g(t1);
        if !left && cur.2 > 2.0 * tol {
            left = true;
            prev = cur;
            continue;
        }
        if left && prev.0 < 0.0 && cur.0 >= 0.0 && prev.1 == cur.1 {
            let (mut a, mut b) = (t0, t1);
            while b - a > 1e-10 {
                let m = 0.5 * (a + b);
                let gm = g(m);
                if gm.1 != prev.1 {
                    break;
                }
                if gm.0 < 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            let t = 0.5 * (a + b);
            if g(t).2 < tol {
                return Some(t);
            }
        }
        prev = cur;
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitType {
    Torus,
    Cylinder,
}

/// Orbits of the `U(1) × ℝ` action: tori if the `X`-orbit closes, else cylinders.
pub fn orbit_type(e_orbit: &Trajectory, x_orbit: &Trajectory, tol: f64) -> OrbitType {
    debug_assert_eq!(e_orbit.start, x_orbit.start);
    if detect_period(x_orbit, tol).is_some() {
        OrbitType::Torus
    } else {
        OrbitType::Cylinder
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaPeriod {
    pub cycle: String,
    pub value: f64,
}

const GAUSS_LEGENDRE_5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];

/// `∮ θ̄` over the fiber cycle, the `x0` cycle (if compact) and each compact
/// `x^i`, `p_i` cycle through `base` (a point of `M`).
///
/// The path is cut at chart boundaries implicitly: each quadrature node is
/// evaluated in the chart whose cell contains it.
pub fn theta_periods(bundle: &WeylBundle, base: &[f64]) -> Result<Vec<ThetaPeriod>, FlowError> {
    let cov = bundle.covering();
    let objects: Vec<CanonicalObjects> = (0..cov.charts().len())
        .map(|c| bundle.canonical_objects(c))
        .collect::<Result<_, _>>()?;
    let space = PhaseSpace::bundle(bundle.spec());
    let mut out = Vec::new();
    for c in 0..space.dim() {
        let Some(period) = space.periods[c] else {
            continue;
        };
        let pieces = nodes_for(cov.cells(c.saturating_sub(1)).max(1) as usize);
        let hw = period / pieces as f64;
        let mut total = 0.0;
        for k in 0..pieces {
            for (node, w) in GAUSS_LEGENDRE_5 {
                let t = hw * (k as f64 + 0.5 * (node + 1.0));
                let mut pt = vec![0.0];
                pt.extend_from_slice(base);
                pt[c] += t;
                let (chart, local) = cov.locate(&pt[1..]);
                let mut local_pt = vec![pt[0]];
                local_pt.extend(local);
                let value = objects[chart].theta.component(&[c]).eval_f64(&local_pt);
                total += value * w * 0.5 * hw;
            }
        }
        out.push(ThetaPeriod {
            cycle: space.names[c].clone(),
            value: total,
        });
    }
    Ok(out)
}

fn nodes_for(cells: usize) -> usize {
    16 * cells
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TischlerCase {
    #[serde(rename = "case1_flagged")]
    Case1Flagged,
    #[serde(rename = "case2")]
    Case2,
    #[serde(rename = "case3")]
    Case3,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TischlerVerdict {
    pub case: TischlerCase,
    /// Positive generator of the period group (Case 2 only).
    pub basic_period: Option<f64>,
    pub exact: bool,
    pub inconsistency: Option<String>,
}

/// Smallest `q ≤ max_q` with `q·r` within `tol` of an integer, as `m/q`.
pub fn rational_relation(r: f64, max_q: i64, tol: f64) -> Option<Ratio<i64>> {
    (1..=max_q).find_map(|q| {
        let m = (q as f64 * r).round();
        ((q as f64 * r - m).abs() < tol).then(|| Ratio::new(m as i64, q))
    })
}

pub const DENOMINATOR_BOUND: i64 = 1_000_000;

/// Classifies the θ̄-foliation from its periods.
pub fn tischler_classify(periods: &[f64], tol: f64) -> TischlerVerdict {
    let nonzero: Vec<f64> = periods.iter().copied().filter(|p| p.abs() > tol).collect();
    let Some(&unit) = nonzero.first() else {
        return TischlerVerdict {
            case: TischlerCase::Case1Flagged,
            basic_period: None,
            exact: true,
            inconsistency: Some(
                "all periods vanish, but E ⌟ θ̄ = −1 forces fiber period −1; θ̄ cannot be exact"
                    .into(),
            ),
        };
    };
    let mut gcd = Ratio::from_integer(1i64);
    for &p in &nonzero[1..] {
        match rational_relation(p / unit, DENOMINATOR_BOUND, 1e-9) {
            Some(r) => gcd = ratio_gcd(gcd, r.abs()),
            None => {
                return TischlerVerdict {
                    case: TischlerCase::Case3,
                    basic_period: None,
                    exact: false,
                    inconsistency: None,
                }
            }
        }
    }
    TischlerVerdict {
        case: TischlerCase::Case2,
        basic_period: Some(unit.abs() * (*gcd.numer() as f64) / (*gcd.denom() as f64)),
        exact: false,
        inconsistency: None,
    }
}

fn ratio_gcd(a: Ratio<i64>, b: Ratio<i64>) -> Ratio<i64> {
    let num = (a.numer() * b.denom()).gcd(&(b.numer() * a.denom()));
    Ratio::new(num, a.denom() * b.denom())
}

/// `s mod 1` at the first `crossings` returns of a `Y`-orbit to the fiber over its base point.
///
/// Crossings are sign changes of `x0_lift − (x0_start + m τ)`, refined by bisection.
pub fn fiber_intersections(
    y_orbit: &Trajectory,
    tau: f64,
    crossings: usize,
) -> Result<Vec<f64>, FlowError> {
    let x0_start = y_orbit.start[1];
    let mut out = Vec::with_capacity(crossings);
    let mut m = 1.0;
    for i in 1..y_orbit.len() {
        if out.len() == crossings {
            break;
        }
        let target = x0_start + m * tau;
        let (a_val, b_val) = (
            y_orbit.lifts[i - 1][1] - target,
            y_orbit.lifts[i][1] - target,
        );
        if a_val < 0.0 && b_val >= 0.0 {
            let (mut a, mut b) = (y_orbit.times[i - 1], y_orbit.times[i]);
            while b - a > 1e-12 {
                let mid = 0.5 * (a + b);
                if y_orbit.state_at(mid)[1] - target < 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let s = y_orbit.state_at(0.5 * (a + b))[0];
            out.push(s.rem_euclid(1.0));
            m += 1.0;
        }
    }
    if out.len() < crossings {
        return Err(FlowError::InsufficientDuration {
            found: out.len(),
            requested: crossings,
        });
    }
    Ok(out)
}

/// Number of distinct values on the unit circle, merging values closer than `tol`.
pub fn crossing_classes(values: &[f64], tol: f64) -> usize {
    if values.is_empty() {
        return 0;
    }
    let mut v: Vec<f64> = values.iter().map(|x| x.rem_euclid(1.0)).collect();
    v.sort_by(f64::total_cmp);
    let mut classes = 1;
    for w in v.windows(2) {
        if w[1] - w[0] > tol {
            classes += 1;
        }
    }
    if classes > 1 && v[0] + 1.0 - v[v.len() - 1] <= tol {
        classes -= 1;
    }
    classes
}

/// Largest gap between consecutive values on the unit circle.
pub fn max_circular_gap(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    let mut v: Vec<f64> = values.iter().map(|x| x.rem_euclid(1.0)).collect();
    v.sort_by(f64::total_cmp);
    let inner = v.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    inner.max(v[0] + 1.0 - v[v.len() - 1])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodRow {
    pub field: String,
    pub start: Vec<f64>,
    pub period: Option<f64>,
    pub multiplier: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodTable {
    pub applicable: bool,
    pub rows: Vec<PeriodRow>,
    pub pass: bool,
}

impl PeriodTable {
    pub fn not_applicable() -> Self {
        PeriodTable {
            applicable: false,
            rows: Vec::new(),
            pass: true,
        }
    }
}

/// Flow parameters shared by the experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowParams {
    pub h: f64,
    pub period_tol: f64,
    pub crossings: usize,
    pub trials: usize,
    pub gap_threshold: f64,
    pub multiple_tol: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            h: 0.01,
            period_tol: 1e-6,
            crossings: 200,
            trials: 8,
            gap_threshold: 0.02,
            multiple_tol: 1e-6,
        }
    }
}

/// Random-start `X`- and `ξ`-periods divided by `T` must be integers.
pub fn check_period_multiplicity<R: Rng>(
    bundle: &WeylBundle,
    verdict: &TischlerVerdict,
    params: &FlowParams,
    rng: &mut R,
) -> Result<PeriodTable, FlowError> {
    let (TischlerCase::Case2, Some(t)) = (verdict.case, verdict.basic_period) else {
        return Ok(PeriodTable::not_applicable());
    };
    let spec = bundle.spec();
    // X- and ξ-orbits are lines when x0 is unbounded
    let Some(tau) = spec.x0_period else {
        return Ok(PeriodTable::not_applicable());
    };
    let p_space = PhaseSpace::bundle(spec);
    let m_space = PhaseSpace::base(spec);
    let duration = 2.5 * tau.max(t);
    let mut jobs = Vec::new();
    for _ in 0..params.trials {
        let p_start: Vec<f64> = p_space
            .periods
            .iter()
            .map(|p| rng.random::<f64>() * p.unwrap_or(2.0))
            .collect();
        let m_start = p_start[1..].to_vec();
        jobs.push(("X", p_start));
        jobs.push(("ξ", m_start));
    }
    let rows = jobs
        .into_par_iter()
        .map(|(name, start)| -> Result<PeriodRow, FlowError> {
            let traj = if name == "X" {
                let (chart, _) = bundle.covering().locate(&start[1..]);
                let objs = bundle.canonical_objects(chart)?;
                integrate(name, &objs.x, &p_space, &start, duration, params.h)?
            } else {
                let (chart, _) = bundle.covering().locate(&start);
                integrate(
                    name,
                    &bundle.covering().xi(chart),
                    &m_space,
                    &start,
                    duration,
                    params.h,
                )?
            };
            let period = detect_period(&traj, params.period_tol);
            let multiplier = period.map(|p| p / t);
            let pass = multiplier
                .is_some_and(|m| (m - m.round()).abs() < params.multiple_tol && m.round() >= 1.0);
            Ok(PeriodRow {
                field: name.to_string(),
                start,
                period,
                multiplier,
                pass,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let pass = rows.iter().all(|r| r.pass);
    Ok(PeriodTable {
        applicable: true,
        rows,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoliationReport {
    pub tau: Option<f64>,
    pub theta_periods: Vec<ThetaPeriod>,
    pub fiber_period: f64,
    pub fiber_period_ok: bool,
    pub verdict: TischlerVerdict,
    pub e_period: Option<f64>,
    /// `T_O`: period of `X` on the orbit through the base point.
    pub orbit_period: Option<f64>,
    pub orbit_type: OrbitType,
    /// `T_O / T`.
    pub orbit_multiplier: Option<f64>,
    /// `ℓ`: distinct fiber-crossing values of the `Y`-orbit.
    pub covering_count: Option<usize>,
    pub l_times_t: Option<f64>,
    pub l_times_t_o: Option<f64>,
    pub crossings: usize,
    pub max_fiber_gap: Option<f64>,
    pub density_pass: Option<bool>,
    pub period_table: PeriodTable,
}

/// All foliation experiments for a bundle through one base point.
pub fn foliation_experiment<R: Rng>(
    bundle: &WeylBundle,
    base: &[f64],
    params: &FlowParams,
    rng: &mut R,
) -> Result<(FoliationReport, Vec<Trajectory>), FlowError> {
    let spec = bundle.spec();
    let space = PhaseSpace::bundle(spec);
    let theta = theta_periods(bundle, base)?;
    let fiber_period = theta[0].value;
    let values: Vec<f64> = theta.iter().map(|p| p.value).collect();
    let verdict = tischler_classify(&values, 1e-9);

    let (chart, local) = bundle.covering().locate(base);
    let objs = bundle.canonical_objects(chart)?;
    let mut start = vec![0.0];
    start.extend(local);
    let tau = spec.x0_period;

    let e_orbit = integrate("E", &objs.e, &space, &start, 1.5, params.h)?;
    let e_period = detect_period(&e_orbit, params.period_tol);
    let x_orbit = integrate(
        "X",
        &objs.x,
        &space,
        &start,
        1.5 * tau.unwrap_or(1.0),
        params.h,
    )?;
    let orbit_period = detect_period(&x_orbit, params.period_tol);
    let kind = orbit_type(&e_orbit, &x_orbit, params.period_tol);
    let mut trajectories = vec![e_orbit, x_orbit];

    let t = verdict.basic_period;
    let mut report = FoliationReport {
        tau,
        theta_periods: theta,
        fiber_period,
        fiber_period_ok: (fiber_period + 1.0).abs() < 1e-9,
        verdict: verdict.clone(),
        e_period,
        orbit_period,
        orbit_type: kind,
        orbit_multiplier: orbit_period.zip(t).map(|(o, t)| o / t),
        covering_count: None,
        l_times_t: None,
        l_times_t_o: None,
        crossings: 0,
        max_fiber_gap: None,
        density_pass: None,
        period_table: PeriodTable::not_applicable(),
    };

    if let Some(tau) = tau {
        let duration = tau * (params.crossings as f64 + 0.5);
        let y_orbit = integrate("Y", &objs.y, &space, &start, duration, params.h)?;
        let hits = fiber_intersections(&y_orbit, tau, params.crossings)?;
        report.crossings = hits.len();
        match verdict.case {
            TischlerCase::Case2 => {
                let l = crossing_classes(&hits, 1e-6);
                report.covering_count = Some(l);
                report.l_times_t = t.map(|t| l as f64 * t);
                report.l_times_t_o = orbit_period.map(|o| l as f64 * o);
            }
            TischlerCase::Case3 => {
                let gap = max_circular_gap(&hits);
                report.max_fiber_gap = Some(gap);
                report.density_pass = Some(gap < params.gap_threshold);
            }
            TischlerCase::Case1Flagged => {}
        }
        trajectories.push(y_orbit);
    }
    report.period_table = check_period_multiplicity(bundle, &verdict, params, rng)?;
    Ok((report, trajectories))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::{build_covering, CechData, Grid};
    use crate::symcore::int;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bundle(tau: Option<f64>) -> WeylBundle {
        let spec = ManifoldSpec::torus(1, int(1)).with_x0_period(tau);
        let cov = build_covering(&spec, &Grid::Uniform(3)).unwrap();
        WeylBundle::build(CechData::compute(&cov).unwrap()).unwrap()
    }

    fn objects() -> CanonicalObjects {
        CanonicalObjects::standard(1, &int(1))
    }

    fn bundle_space(tau: Option<f64>) -> PhaseSpace {
        PhaseSpace::new(
            vec!["s".into(), "x0".into(), "x1".into(), "p1".into()],
            vec![Some(1.0), tau, Some(1.0), Some(1.0)],
        )
    }

    #[test]
    fn e_orbit_closes_after_one_turn() {
        let o = objects();
        let traj = integrate(
            "E",
            &o.e,
            &bundle_space(Some(1.0)),
            &[0.0, 0.2, 0.3, 0.4],
            1.0,
            0.01,
        )
        .unwrap();
        let last = traj.len() - 1;
        assert!(traj.space.distance(&traj.point(last), &traj.start) < 1e-12);
        assert_eq!(traj.windings(last)[0], 1);
        let period = detect_period(
            &integrate(
                "E",
                &o.e,
                &bundle_space(Some(1.0)),
                &[0.0, 0.2, 0.3, 0.4],
                1.5,
                0.01,
            )
            .unwrap(),
            1e-6,
        )
        .unwrap();
        assert!((period - 1.0).abs() < 1e-8, "{period}");
    }

    #[test]
    fn x_flow_is_a_translation() {
        let o = objects();
        let traj = integrate(
            "X",
            &o.x,
            &bundle_space(None),
            &[0.1, 0.0, 0.3, 0.4],
            2.0,
            0.1,
        )
        .unwrap();
        for (t, x) in traj.times.iter().zip(&traj.lifts) {
            assert!((x[1] - t).abs() < 1e-12);
            assert_eq!(&x[2..], &[0.3, 0.4]);
            assert_eq!(x[0], 0.1);
        }
        assert_eq!(detect_period(&traj, 1e-6), None);
    }

    #[test]
    fn x_period_with_half_circle() {
        let o = objects();
        let traj = integrate(
            "X",
            &o.x,
            &bundle_space(Some(0.5)),
            &[0.0, 0.1, 0.3, 0.4],
            1.0,
            0.01,
        )
        .unwrap();
        let p = detect_period(&traj, 1e-6).unwrap();
        assert!((p - 0.5).abs() < 1e-8, "{p}");
    }

    #[test]
    fn y_orbit_returns_with_unit_x0_period() {
        let o = objects();
        let traj = integrate("Y", &o.y, &bundle_space(Some(1.0)), &[0.0; 4], 1.0, 0.01).unwrap();
        let last = traj.len() - 1;
        assert!(traj.space.distance(&traj.point(last), &[0.0; 4]) < 1e-12);
        assert_eq!(traj.windings(last), vec![1, 1, 0, 0]);
    }

    #[test]
    fn orbit_types() {
        let o = objects();
        let start = [0.0, 0.0, 0.5, 0.5];
        let closed = bundle_space(Some(1.0));
        let open = bundle_space(None);
        let e = integrate("E", &o.e, &closed, &start, 1.5, 0.01).unwrap();
        let x = integrate("X", &o.x, &closed, &start, 1.5, 0.01).unwrap();
        assert_eq!(orbit_type(&e, &x, 1e-6), OrbitType::Torus);
        let e = integrate("E", &o.e, &open, &start, 1.5, 0.01).unwrap();
        let x = integrate("X", &o.x, &open, &start, 1.5, 0.01).unwrap();
        assert_eq!(orbit_type(&e, &x, 1e-6), OrbitType::Cylinder);
        let helix = integrate("Y", &o.y, &open, &start, 5.0, 0.01).unwrap();
        assert_eq!(detect_period(&helix, 1e-6), None);
    }

    #[test]
    fn range_error() {
        let o = objects();
        let space = bundle_space(None).with_range(1, -1.0, 1.0);
        let err = integrate("X", &o.x, &space, &[0.0; 4], 3.0, 0.1).unwrap_err();
        assert!(matches!(err, FlowError::LeftRange { ref coordinate, .. } if coordinate == "x0"));
        assert!(matches!(
            integrate("X", &o.x, &space, &[0.0; 4], 1.0, 0.0),
            Err(FlowError::InvalidStep(_))
        ));
    }

    #[test]
    fn rk4_is_fourth_order() {
        let rhs: Rhs = Arc::new(|x: &[f64], out: &mut [f64]| out[0] = x[0] * x[0]);
        let space = PhaseSpace::new(vec!["x".into()], vec![None]);
        let exact = |t: f64| 0.5 / (1.0 - 0.5 * t);
        let err = |h: f64| {
            let traj = integrate_fn("q", rhs.clone(), &space, &[0.5], 1.0, h).unwrap();
            traj.times
                .iter()
                .zip(&traj.lifts)
                .map(|(t, x)| (x[0] - exact(*t)).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(0.02), err(0.01));
        let ratio = e1 / e2;
        assert!((ratio - 16.0).abs() < 1.0, "{ratio}");
    }

    #[test]
    fn dense_output_matches_samples() {
        let rhs: Rhs = Arc::new(|x: &[f64], out: &mut [f64]| out[0] = x[0] * x[0]);
        let space = PhaseSpace::new(vec!["x".into()], vec![None]);
        let traj = integrate_fn("q", rhs, &space, &[0.5], 1.0, 0.01).unwrap();
        let mid = traj.state_at(0.505)[0];
        assert!((mid - 0.5 / (1.0 - 0.5 * 0.505)).abs() < 1e-9);
        assert_eq!(traj.state_at(0.5), traj.lifts[50]);
    }

    #[test]
    fn e_and_x_flows_commute() {
        let o = objects();
        let space = bundle_space(Some(1.0));
        let start = [0.1, 0.2, 0.3, 0.4];
        let (t1, t2) = (0.37, 0.81);
        let ex = integrate("E", &o.e, &space, &start, t1, 0.01).unwrap();
        let ex = integrate("X", &o.x, &space, ex.lifts.last().unwrap(), t2, 0.01).unwrap();
        let xe = integrate("X", &o.x, &space, &start, t2, 0.01).unwrap();
        let xe = integrate("E", &o.e, &space, xe.lifts.last().unwrap(), t1, 0.01).unwrap();
        let a = ex.point(ex.len() - 1);
        let b = xe.point(xe.len() - 1);
        assert!(space.distance(&a, &b) < 1e-8);
    }

    #[test]
    fn theta_periods_on_unit_torus() {
        let b = bundle(Some(1.0));
        let p = theta_periods(&b, &[0.0, 0.2, 0.7]).unwrap();
        let v: Vec<f64> = p.iter().map(|p| p.value).collect();
        let expected = [-1.0, 1.0, 0.0, 0.0];
        assert!(
            v.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-12),
            "{v:?}"
        );
        let names: Vec<&str> = p.iter().map(|p| p.cycle.as_str()).collect();
        assert_eq!(names, ["s", "x0", "x1", "p1"]);

        let b = bundle(Some(2f64.sqrt()));
        let p = theta_periods(&b, &[0.0, 0.2, 0.7]).unwrap();
        assert!((p[1].value - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn tischler_examples() {
        let v = tischler_classify(&[-1.0, 1.0], 1e-9);
        assert_eq!(v.case, TischlerCase::Case2);
        assert!((v.basic_period.unwrap() - 1.0).abs() < 1e-12);
        let v = tischler_classify(&[-1.0, 0.5, 0.0], 1e-9);
        assert_eq!(v.case, TischlerCase::Case2);
        assert!((v.basic_period.unwrap() - 0.5).abs() < 1e-12);
        let v = tischler_classify(&[-1.0, 2.0 / 3.0], 1e-9);
        assert!((v.basic_period.unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let v = tischler_classify(&[-1.0, 2f64.sqrt()], 1e-9);
        assert_eq!(v.case, TischlerCase::Case3);
        assert_eq!(v.basic_period, None);
        let v = tischler_classify(&[0.0, 0.0], 1e-9);
        assert_eq!(v.case, TischlerCase::Case1Flagged);
        assert!(v.inconsistency.is_some());
    }

    #[test]
    fn sqrt_two_has_no_small_integer_relation() {
        assert_eq!(
            rational_relation(2f64.sqrt(), DENOMINATOR_BOUND, 1e-9),
            None
        );
        assert_eq!(
            rational_relation(-0.5, DENOMINATOR_BOUND, 1e-9),
            Some(Ratio::new(-1, 2))
        );
    }

    #[test]
    fn fiber_crossings() {
        let o = objects();
        for (tau, l) in [(1.0, 1), (0.5, 2), (1.0 / 3.0, 3), (0.4, 5)] {
            let space = bundle_space(Some(tau));
            let y = integrate("Y", &o.y, &space, &[0.0, 0.0, 0.5, 0.5], tau * 20.5, 0.01).unwrap();
            let hits = fiber_intersections(&y, tau, 20).unwrap();
            assert_eq!(crossing_classes(&hits, 1e-6), l, "tau = {tau}");
        }
        let space = bundle_space(Some(1.0));
        let y = integrate("Y", &o.y, &space, &[0.0; 4], 3.5, 0.01).unwrap();
        assert!(matches!(
            fiber_intersections(&y, 1.0, 5),
            Err(FlowError::InsufficientDuration {
                found: 3,
                requested: 5
            })
        ));
    }

    #[test]
    fn circular_statistics() {
        assert_eq!(crossing_classes(&[0.0, 0.9999999999, 0.5], 1e-6), 2);
        assert!((max_circular_gap(&[0.1, 0.3, 0.6]) - 0.5).abs() < 1e-12);
        assert_eq!(max_circular_gap(&[]), 1.0);
    }

    #[test]
    fn foliation_case_two_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = bundle(Some(0.5));
        let params = FlowParams {
            crossings: 20,
            trials: 2,
            ..FlowParams::default()
        };
        let (r, trajs) = foliation_experiment(&b, &[0.0, 0.2, 0.7], &params, &mut rng).unwrap();
        assert_eq!(r.verdict.case, TischlerCase::Case2);
        assert_eq!(r.covering_count, Some(2));
        assert!((r.l_times_t.unwrap() - 1.0).abs() < 1e-6);
        assert!((r.l_times_t_o.unwrap() - 1.0).abs() < 1e-6);
        assert!(r.fiber_period_ok);
        assert!(r.period_table.pass && r.period_table.applicable);
        assert_eq!(trajs.len(), 3);
        let mut csv = Vec::new();
        trajs[0].write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("t,s,x0,x1,p1,w_s"));
    }
}
