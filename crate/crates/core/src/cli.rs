//! Configuration, orchestration and reports for the `pfaffian` binary.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atlas::{
    build_covering, AtlasError, CechData, Grid, IntegralityReport, ManifoldSpec, Normalization,
};
use crate::flows::{foliation_experiment, FlowError, FlowParams, FoliationReport, Trajectory};
use crate::symcore::{fmt_rational, parse_rational, to_f64, Rational};
use crate::weyl::{
    merge_reports, run_identity_suite, CanonicalObjects, ChernEntry, IdentityReport, WeylBundle,
    WeylError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED_CHECKS: i32 = 1;
pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_INTEGRALITY: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Atlas(#[from] AtlasError),
    #[error(transparent)]
    Weyl(#[from] WeylError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InvalidConfig(_) | CliError::Io { .. } => EXIT_INVALID_CONFIG,
            CliError::Atlas(AtlasError::InvalidSpec(_) | AtlasError::GridTooCoarse { .. }) => {
                EXIT_INVALID_CONFIG
            }
            _ => EXIT_FAILED_CHECKS,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "pfaffian",
    version,
    about = "Čech integrality, Weyl bundles and flow checks for Pfaffian structures"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Report destination; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Write the integrated trajectories as CSV.
    #[arg(long, global = true)]
    pub emit_orbit_csv: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Covering, cocycle constants and the integrality test.
    Cech,
    /// Weyl bundle: Chern numbers, connection check, cocycle residual.
    Bundle,
    /// Identity suite on a chart and random gauge shifts.
    Identities,
    /// Flow experiments and the foliation report.
    Flows,
    /// θ̄-periods and the Tischler case only.
    Classify,
    All,
}

/// A rational given as a JSON number or as text (`"3"`, `"-2/5"`, `"0.25"`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RatValue {
    Number(f64),
    Text(String),
}

impl RatValue {
    pub fn to_rational(&self) -> Result<Rational, CliError> {
        let text = match self {
            RatValue::Number(x) => format!("{x}"),
            RatValue::Text(t) => t.clone(),
        };
        parse_rational(&text).map_err(|e| CliError::InvalidConfig(e.to_string()))
    }

    /// Also accepts `"sqrt(N)"`.
    pub fn to_f64(&self) -> Result<f64, CliError> {
        match self {
            RatValue::Number(x) => Ok(*x),
            RatValue::Text(t) => {
                let t = t.trim();
                if let Some(inner) = t.strip_prefix("sqrt(").and_then(|r| r.strip_suffix(')')) {
                    let v = RatValue::Text(inner.to_string()).to_rational()?;
                    return Ok(to_f64(&v).sqrt());
                }
                Ok(to_f64(&self.to_rational()?))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldConfig {
    pub n: usize,
    /// Common period of every `x^i` and `p_i`; ignored where the lists below are given.
    pub period: Option<RatValue>,
    pub x_periods: Option<Vec<Option<RatValue>>>,
    pub p_periods: Option<Vec<Option<RatValue>>>,
    /// `τ`; `null` for an unbounded `x0`.
    pub x0_period: Option<RatValue>,
    pub scale: RatValue,
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        ManifoldConfig {
            n: 1,
            period: Some(RatValue::Number(1.0)),
            x_periods: None,
            p_periods: None,
            x0_period: Some(RatValue::Number(1.0)),
            scale: RatValue::Number(1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub h: f64,
    pub period_tol: f64,
    pub crossings: usize,
    pub trials: usize,
    pub gap_threshold: f64,
    pub multiple_tol: f64,
    /// Base point of the experiments, in coordinates `x0, x, p`.
    pub base_point: Option<Vec<f64>>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        let p = FlowParams::default();
        FlowConfig {
            h: p.h,
            period_tol: p.period_tol,
            crossings: p.crossings,
            trials: p.trials,
            gap_threshold: p.gap_threshold,
            multiple_tol: p.multiple_tol,
            base_point: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifold: ManifoldConfig,
    pub grid: u32,
    pub normalization: Normalization,
    /// Random gauge-shifted copies checked by the identity suite.
    pub gauge_tests: usize,
    /// Dimension used by `identities` (defaults to the manifold's `n`).
    pub identity_n: Option<usize>,
    pub cocycle_samples: usize,
    pub flows: FlowConfig,
    pub seed: u64,
    pub record_timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifold: ManifoldConfig::default(),
            grid: 3,
            normalization: Normalization::default(),
            gauge_tests: 20,
            identity_n: None,
            cocycle_samples: 100,
            flows: FlowConfig::default(),
            seed: 0,
            record_timing: false,
        }
    }
}

impl<'de> Deserialize<'de> for Normalization {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match String::deserialize(d)?.as_str() {
            "chart_origin" => Ok(Normalization::ChartOrigin),
            "overlap_center" => Ok(Normalization::OverlapCenter),
            other => Err(serde::de::Error::custom(format!(
                "unknown normalization `{other}`"
            ))),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::InvalidConfig(m.to_string()));
        let f = &self.flows;
        for (name, v) in [
            ("flows.h", f.h),
            ("flows.period_tol", f.period_tol),
            ("flows.gap_threshold", f.gap_threshold),
            ("flows.multiple_tol", f.multiple_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if f.crossings == 0 {
            return bad("flows.crossings must be positive");
        }
        if let Some(b) = &f.base_point {
            if b.len() != 2 * self.manifold.n + 1 {
                return bad("flows.base_point must have 2n+1 coordinates");
            }
        }
        if self.identity_n == Some(0) {
            return bad("identity_n must be at least 1");
        }
        let spec = self.manifold_spec()?;
        spec.validate()?;
        if spec.has_periodic_transversal() && self.grid < 3 {
            return bad("grid must be at least 3 on periodic coordinates");
        }
        Ok(())
    }

    pub fn manifold_spec(&self) -> Result<ManifoldSpec, CliError> {
        let m = &self.manifold;
        let list =
            |given: &Option<Vec<Option<RatValue>>>| -> Result<Vec<Option<Rational>>, CliError> {
                match given {
                    Some(v) => v
                        .iter()
                        .map(|p| p.as_ref().map(RatValue::to_rational).transpose())
                        .collect(),
                    None => Ok(vec![
                        m.period
                            .as_ref()
                            .map(RatValue::to_rational)
                            .transpose()?;
                        m.n
                    ]),
                }
            };
        Ok(ManifoldSpec {
            n: m.n,
            x0_period: m.x0_period.as_ref().map(RatValue::to_f64).transpose()?,
            x_periods: list(&m.x_periods)?,
            p_periods: list(&m.p_periods)?,
            scale: m.scale.to_rational()?,
        })
    }

    pub fn flow_params(&self) -> FlowParams {
        let f = &self.flows;
        FlowParams {
            h: f.h,
            period_tol: f.period_tol,
            crossings: f.crossings,
            trials: f.trials,
            gap_threshold: f.gap_threshold,
            multiple_tol: f.multiple_tol,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

impl Status {
    fn from_bool(ok: bool) -> Status {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoveringSummary {
    pub charts: usize,
    pub overlaps: usize,
    pub triples: usize,
    pub grid: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CocycleEntry {
    pub triple: [usize; 3],
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CechSummary {
    pub normalization: Normalization,
    pub cocycle: Vec<CocycleEntry>,
    pub fundamental_totals: Vec<ChernEntry>,
    pub curvature_flux: Vec<(String, f64)>,
    pub integrality: IntegralityReport,
    /// No compact `(x, p)` direction: the cocycle is empty.
    pub basic_exact_case: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BundleSummary {
    pub product: bool,
    pub chern_numbers: Vec<ChernEntry>,
    pub connection_mismatches: Vec<(usize, usize)>,
    pub cocycle_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentitySummary {
    pub n: usize,
    pub canonical: IdentityReport,
    pub gauge_variants: usize,
    /// Rows failing in at least one gauge variant.
    pub gauge_failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub command: Command,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covering: Option<CoveringSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cech: Option<CechSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bundle: Option<BundleSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identities: Option<IdentitySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub foliation: Option<FoliationReport>,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<BTreeMap<String, f64>>,
    pub exit_code: i32,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub struct RunOutcome {
    pub report: RunReport,
    pub trajectories: Vec<Trajectory>,
}

struct Timer {
    enabled: bool,
    laps: BTreeMap<String, f64>,
}

impl Timer {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        if self.enabled {
            self.laps
                .insert(name.to_string(), start.elapsed().as_secs_f64() * 1e3);
        }
        out
    }
}

fn check(checks: &mut Vec<Check>, name: &str, ok: bool, detail: impl Into<String>) {
    checks.push(Check {
        name: name.to_string(),
        status: Status::from_bool(ok),
        detail: detail.into(),
    });
}

/// Runs one subcommand. Config errors are returned; failed checks and
/// integrality violations are reported through `exit_code`.
pub fn run(command: Command, config: &RunConfig) -> Result<RunOutcome, CliError> {
    config.validate()?;
    let spec = config.manifold_spec()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut timer = Timer {
        enabled: config.record_timing,
        laps: BTreeMap::new(),
    };
    let mut checks = Vec::new();
    let mut report = RunReport {
        command,
        seed: config.seed,
        covering: None,
        cech: None,
        bundle: None,
        identities: None,
        foliation: None,
        checks: Vec::new(),
        timing_ms: None,
        exit_code: EXIT_OK,
    };
    let mut trajectories = Vec::new();
    let mut integrality_violated = false;

    let wants = |c: Command| command == c || command == Command::All;
    let needs_cech = command != Command::Identities;
    let needs_bundle = matches!(
        command,
        Command::Bundle | Command::Flows | Command::Classify | Command::All
    );

    let mut bundle = None;
    if needs_cech {
        let covering = timer.time("covering", || {
            build_covering(&spec, &Grid::Uniform(config.grid))
        })?;
        report.covering = Some(CoveringSummary {
            charts: covering.charts().len(),
            overlaps: covering.pair_count(),
            triples: covering.triples().len(),
            grid: config.grid,
        });
        let cech = timer.time("cech", || {
            CechData::compute_with(&covering, config.normalization)
        })?;
        let integrality = cech.integrality();
        let periodic: Vec<usize> = (1..spec.dim())
            .filter(|&c| spec.transversal_period(c).is_some())
            .collect();
        let mut totals = Vec::new();
        let mut fluxes = Vec::new();
        let names = spec.coordinate_names();
        for (i, &b) in periodic.iter().enumerate() {
            for &a in &periodic[i + 1..] {
                let total = cech.fundamental_total(a, b)?;
                let flux = cech.curvature_flux(a, b)?;
                let face = format!("{},{}", names[a], names[b]);
                check(
                    &mut checks,
                    &format!("flux matches cocycle total on {face}"),
                    (flux - to_f64(&total)).abs() < 1e-9,
                    format!("total {} flux {flux}", fmt_rational(&total)),
                );
                totals.push(ChernEntry {
                    face: face.clone(),
                    value: fmt_rational(&total),
                });
                fluxes.push((face, flux));
            }
        }
        if wants(Command::Cech) {
            check(
                &mut checks,
                "integrality",
                integrality.integral,
                format!(
                    "{} triples, {} non-integral",
                    integrality.triples_checked,
                    integrality.offending.len()
                ),
            );
        }
        integrality_violated = !integrality.integral;
        report.cech = Some(CechSummary {
            normalization: cech.normalization,
            cocycle: cech
                .cocycle
                .iter()
                .map(|(t, v)| CocycleEntry {
                    triple: *t,
                    value: fmt_rational(v),
                })
                .collect(),
            fundamental_totals: totals,
            curvature_flux: fluxes,
            integrality,
            basic_exact_case: !spec.has_periodic_transversal(),
        });
        if needs_bundle && !integrality_violated {
            bundle = Some(WeylBundle::build(cech)?);
        }
    }

    if needs_bundle && integrality_violated {
        check(
            &mut checks,
            "bundle construction",
            false,
            "integrality condition violated",
        );
    }

    if let (Some(b), true) = (&bundle, wants(Command::Bundle)) {
        let mismatches = timer.time("bundle", || b.check_connection())?;
        let residual = b.verify_cocycle_numeric(config.cocycle_samples, &mut rng);
        check(
            &mut checks,
            "connection is global",
            mismatches.is_empty(),
            format!("{} mismatches", mismatches.len()),
        );
        check(
            &mut checks,
            "cocycle residual",
            residual < 1e-12,
            format!("{residual:e}"),
        );
        report.bundle = Some(BundleSummary {
            product: b.is_product(),
            chern_numbers: b.chern_numbers()?,
            connection_mismatches: mismatches,
            cocycle_residual: residual,
        });
    }

    if wants(Command::Identities) {
        let n = config.identity_n.unwrap_or(spec.n);
        let objs = CanonicalObjects::standard(n, &spec.scale);
        let reports = timer.time("identities", || {
            run_identity_suite(&objs, config.gauge_tests, &mut rng)
        })?;
        let merged = merge_reports(&reports);
        let gauge_failures: Vec<String> = merged
            .iter()
            .filter(|(_, ok)| !**ok)
            .map(|(k, _)| k.clone())
            .collect();
        let canonical = reports[0].clone();
        for row in &canonical.rows {
            check(
                &mut checks,
                &format!("identity {}", row.name),
                row.pass,
                row.anchor.clone(),
            );
        }
        check(
            &mut checks,
            "identities under gauge shifts",
            gauge_failures.is_empty(),
            format!("{} variants", reports.len() - 1),
        );
        let top = objs.top_power();
        check(
            &mut checks,
            "Ω̄ top power nonzero",
            !top.is_zero(),
            top.to_string(),
        );
        report.identities = Some(IdentitySummary {
            n,
            canonical,
            gauge_variants: reports.len() - 1,
            gauge_failures,
        });
    }

    if let (Some(b), true) = (&bundle, wants(Command::Flows) || wants(Command::Classify)) {
        let base = config
            .flows
            .base_point
            .clone()
            .unwrap_or_else(|| default_base(&spec));
        let params = config.flow_params();
        let (fol, trajs) = timer.time("flows", || {
            foliation_experiment(b, &base, &params, &mut rng)
        })?;
        check(
            &mut checks,
            "fiber θ̄-period is −1",
            fol.fiber_period_ok,
            format!("{}", fol.fiber_period),
        );
        check(
            &mut checks,
            "case 1 only with inconsistency marker",
            fol.verdict.inconsistency.is_some()
                == (fol.verdict.case == crate::flows::TischlerCase::Case1Flagged),
            format!("{:?}", fol.verdict.case),
        );
        if wants(Command::Flows) {
            let e_ok = fol.e_period.is_some_and(|p| (p - 1.0).abs() < 1e-6);
            check(
                &mut checks,
                "E-period is 1",
                e_ok,
                format!("{:?}", fol.e_period),
            );
            match (fol.l_times_t, fol.density_pass) {
                (Some(lt), _) => check(
                    &mut checks,
                    "ℓ·T = 1",
                    (lt - 1.0).abs() < 1e-6,
                    format!("{lt}"),
                ),
                (None, Some(ok)) => check(
                    &mut checks,
                    "fiber crossings dense",
                    ok,
                    format!(
                        "max gap {:?} after {} crossings",
                        fol.max_fiber_gap, fol.crossings
                    ),
                ),
                _ => checks.push(Check {
                    name: "fiber crossings".into(),
                    status: Status::NotApplicable,
                    detail: "x0 is not periodic".into(),
                }),
            }
            checks.push(Check {
                name: "periods are multiples of T".into(),
                status: if fol.period_table.applicable {
                    Status::from_bool(fol.period_table.pass)
                } else {
                    Status::NotApplicable
                },
                detail: format!("{} rows", fol.period_table.rows.len()),
            });
            trajectories = trajs;
        }
        report.foliation = Some(fol);
    }

    let failed = checks.iter().any(|c| c.status == Status::Fail);
    report.exit_code = if integrality_violated && needs_bundle {
        EXIT_INTEGRALITY
    } else if failed {
        EXIT_FAILED_CHECKS
    } else {
        EXIT_OK
    };
    report.checks = checks;
    if config.record_timing {
        report.timing_ms = Some(timer.laps);
    }
    Ok(RunOutcome {
        report,
        trajectories,
    })
}

/// A generic point: each compact coordinate at 0.37 of its period, others at 0.
fn default_base(spec: &ManifoldSpec) -> Vec<f64> {
    spec.float_periods()
        .iter()
        .enumerate()
        .map(|(c, p)| {
            if c == 0 {
                0.0
            } else {
                p.map_or(0.0, |p| 0.37 * p)
            }
        })
        .collect()
}

/// Entry point used by `main`; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    };
    let mut config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let outcome = match run(cli.command, &config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let json = outcome.report.to_json();
    let written = match &cli.out {
        Some(path) => fs::write(path, format!("{json}\n")),
        None => writeln!(std::io::stdout(), "{json}"),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return EXIT_FAILED_CHECKS;
    }
    if let Some(path) = &cli.emit_orbit_csv {
        let result = fs::File::create(path).and_then(|mut f| {
            for t in &outcome.trajectories {
                t.write_csv(&mut f)?;
            }
            Ok(())
        });
        if let Err(e) = result {
            eprintln!("error: cannot write orbit CSV: {e}");
            return EXIT_FAILED_CHECKS;
        }
    }
    for c in outcome
        .report
        .checks
        .iter()
        .filter(|c| c.status == Status::Fail)
    {
        eprintln!("FAIL {}: {}", c.name, c.detail);
    }
    outcome.report.exit_code
}

/// Convenience for tests: an `n`-torus config with scale `k` and `τ`.
pub fn torus_config(n: usize, k: &str, tau: Option<&str>) -> RunConfig {
    RunConfig {
        manifold: ManifoldConfig {
            n,
            period: Some(RatValue::Text("1".into())),
            x_periods: None,
            p_periods: None,
            x0_period: tau.map(|t| RatValue::Text(t.into())),
            scale: RatValue::Text(k.into()),
        },
        ..RunConfig::default()
    }
}
