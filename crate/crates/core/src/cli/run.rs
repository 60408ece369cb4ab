//! Subcommand execution and exit-code policy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use super::config::{BoundaryConfig, RunConfig, SweepCommand, SweepPoint};
use super::report::{Cell, Table};
use crate::comparison::{
    admissible_rolling_radius, distortion_factor, extension_norm_bound, focal_radius, ComparisonProfile,
    CurvatureData, RatioProfile,
};
use crate::error::{Error, Result};
use crate::extension::{operator_norm_estimate, ExtendedField, QuadSpec, ScalarField};
use crate::fermi::{check_regularity, FermiChart};
use crate::geometry::Point;
use crate::heat::{
    assemble, diagonal_bound_check, doubling_constant, eigenvalue_diagnostic, geometric_grid, kato_quantity,
    li_yau_check, sample_nodes, vev_sweep, CurvatureField, DiscreteDomain, SpectralOptions,
};

/// Largest Dunford–Pettis mismatch accepted by the heat command.
pub const DUNFORD_PETTIS_TOL: f64 = 1e-10;
const CSV_GRID: usize = 48;
const DOUBLING_STEPS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Violation,
    Invalid,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Violation => 1,
            Status::Invalid => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, passed: bool) -> Self {
        Self {
            name: name.into(),
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub status: Status,
    pub checks: Vec<Check>,
    pub error: Option<String>,
    pub result: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Report,
    pub csv: Option<Table>,
}

impl Outcome {
    fn from_checks(command: &str, checks: Vec<Check>, result: Value, csv: Option<Table>) -> Self {
        let status = if checks.iter().all(|c| c.passed) {
            Status::Pass
        } else {
            Status::Violation
        };
        Self {
            report: Report {
                command: command.into(),
                status,
                checks,
                error: None,
                result,
            },
            csv,
        }
    }

    /// A failed run; bound and regularity failures count as violations,
    /// everything else as invalid input.
    pub fn from_error(command: &str, err: &Error) -> Self {
        Self {
            report: Report {
                command: command.into(),
                status: error_status(err),
                checks: Vec::new(),
                error: Some(err.to_string()),
                result: Value::Null,
            },
            csv: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.report.status.exit_code()
    }
}

pub fn error_status(err: &Error) -> Status {
    match err {
        Error::Regularity(_) | Error::ComparisonBreakdown(_) | Error::DegenerateTube(_) | Error::FocalPoint(_) => {
            Status::Violation
        }
        _ => Status::Invalid,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Single(SweepCommand),
    Sweep,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Single(c) => command_name(c),
            Task::Sweep => "sweep",
        }
    }
}

fn command_name(c: SweepCommand) -> &'static str {
    match c {
        SweepCommand::Constants => "constants",
        SweepCommand::Regularity => "regularity",
        SweepCommand::VerifyExtension => "verify-extension",
        SweepCommand::Heat => "heat",
    }
}

/// Runs a task; errors are folded into the outcome.
pub fn run(cfg: &RunConfig, task: Task) -> Outcome {
    let result = match task {
        Task::Single(c) => run_single(cfg, c),
        Task::Sweep => run_sweep(cfg),
    };
    result.unwrap_or_else(|e| Outcome::from_error(task.name(), &e))
}

fn run_single(cfg: &RunConfig, command: SweepCommand) -> Result<Outcome> {
    match command {
        SweepCommand::Constants => constants(cfg),
        SweepCommand::Regularity => regularity(cfg),
        SweepCommand::VerifyExtension => verify_extension(cfg),
        SweepCommand::Heat => heat(cfg),
    }
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Serialize)]
struct ProfileSample {
    s: f64,
    d: Option<f64>,
    #[serde(rename = "D")]
    big_d: Option<f64>,
}

#[allow(non_snake_case)]
#[derive(Serialize)]
struct ConstantsResult {
    K: f64,
    H: f64,
    n: usize,
    r0: Option<f64>,
    admissible_r: f64,
    r: f64,
    G: f64,
    ratios: RatioProfile,
    distortion: f64,
    norm_bound: f64,
    profile: Vec<ProfileSample>,
}

fn constants(cfg: &RunConfig) -> Result<Outcome> {
    let c = &cfg.constants;
    let h = c.H.or(c.R0.map(|r0| 1.0 / r0)).unwrap_or(0.0);
    let r0 = match c.R0 {
        Some(radius) if c.K == 0.0 => radius,
        _ => focal_radius(c.K, h),
    };
    if c.R0.is_some() && c.K != 0.0 {
        return Err(Error::Config("constants.R0 describes a flat ball and needs K = 0".into()));
    }
    let admissible_r = admissible_rolling_radius(c.K, h);
    let r = cfg.r.unwrap_or(admissible_r);
    let cutoff = cfg.G.family()?;
    let profile = match c.R0 {
        Some(radius) => ComparisonProfile::ball(radius, c.n, r)?,
        None => ComparisonProfile::from_data(&CurvatureData::symmetric(c.K, h, c.n)?, r)?,
    };
    let distortion = distortion_factor(&profile, r)?;
    let norm_bound = extension_norm_bound(distortion, cutoff.g, r);
    let mut table = Table::new(&["s", "d", "D"]);
    let samples: Vec<ProfileSample> = (0..=c.profile_steps)
        .map(|i| {
            let s = r * i as f64 / c.profile_steps as f64;
            let (d, big_d) = profile.bounds(s).unwrap_or((f64::NAN, f64::NAN));
            table.push(vec![s.into(), d.into(), big_d.into()]);
            ProfileSample {
                s,
                d: finite_or_none(d),
                big_d: finite_or_none(big_d),
            }
        })
        .collect();
    let checks = vec![
        Check::new("r_within_focal_radius", r <= r0),
        Check::new("distortion_finite", distortion.is_finite()),
    ];
    let result = ConstantsResult {
        K: c.K,
        H: h,
        n: c.n,
        r0: finite_or_none(r0),
        admissible_r,
        r,
        G: cutoff.g,
        ratios: profile.ratios,
        distortion,
        norm_bound,
        profile: samples,
    };
    Ok(Outcome::from_checks(
        "constants",
        checks,
        serde_json::to_value(result)?,
        Some(table),
    ))
}

fn regularity(cfg: &RunConfig) -> Result<Outcome> {
    let domain = cfg.domain()?;
    let report = check_regularity(&domain, cfg.tube_radius()?);
    let checks = vec![
        Check::new("interior_ball", report.interior_ball_ok),
        Check::new("exterior_ball", report.exterior_ball_ok),
        Check::new("injectivity", report.injectivity_ok),
        Check::new("admissible", report.admissible),
    ];
    Ok(Outcome::from_checks("regularity", checks, serde_json::to_value(report)?, None))
}

#[allow(non_snake_case)]
#[derive(Serialize)]
struct ExtensionResult {
    r: f64,
    G: f64,
    quad: usize,
    samples: usize,
    seed: u64,
    distortion: f64,
    max_ratio: f64,
    bound: f64,
    per_sample: Vec<f64>,
}

fn verify_extension(cfg: &RunConfig) -> Result<Outcome> {
    let domain = cfg.domain()?;
    let r = cfg.tube_radius()?;
    let cutoff = cfg.G.family()?;
    let chart = FermiChart::new(domain, r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fields: Vec<ScalarField> = (0..cfg.samples).map(|_| ScalarField::random(&mut rng)).collect();
    let quad = QuadSpec::new(cfg.quad)?;
    let est = operator_norm_estimate(&chart, &cutoff, &fields, &quad)?;
    let csv = if cfg.csv.is_some() {
        Some(extension_grid(&ExtendedField::new(chart, fields[0].clone(), cutoff))?)
    } else {
        None
    };
    let checks = vec![
        Check::new("ratios_finite", est.per_sample.iter().all(|x| x.is_finite())),
        Check::new("max_ratio_within_bound", est.max_ratio <= est.bound),
    ];
    let result = ExtensionResult {
        r,
        G: cutoff.g,
        quad: cfg.quad,
        samples: cfg.samples,
        seed: cfg.seed,
        distortion: est.distortion,
        max_ratio: est.max_ratio,
        bound: est.bound,
        per_sample: est.per_sample,
    };
    Ok(Outcome::from_checks(
        "verify-extension",
        checks,
        serde_json::to_value(result)?,
        csv,
    ))
}

/// `Eu` on a Cartesian grid covering the domain and its tube.
fn extension_grid(field: &ExtendedField) -> Result<Table> {
    let chart = &field.chart;
    let r = chart.radius();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for b in chart.boundary_samples() {
        let x = b.point.to_cartesian();
        for a in 0..2 {
            lo[a] = lo[a].min(x[a]);
            hi[a] = hi[a].max(x[a]);
        }
    }
    // the chart metric can stretch distances, so pad generously
    let pad = 1.5 * r;
    let mut table = Table::new(&["x", "y", "Eu"]);
    for i in 0..CSV_GRID {
        for j in 0..CSV_GRID {
            let x = lo[0] - pad + (hi[0] - lo[0] + 2.0 * pad) * i as f64 / (CSV_GRID - 1) as f64;
            let y = lo[1] - pad + (hi[1] - lo[1] + 2.0 * pad) * j as f64 / (CSV_GRID - 1) as f64;
            let p = Point::from_cartesian(x, y);
            if !chart.domain().surface().contains(&p) {
                continue;
            }
            let v = field.extend(&p).unwrap_or(f64::NAN);
            table.push(vec![x.into(), y.into(), v.into()]);
        }
    }
    Ok(table)
}

#[derive(Serialize)]
struct HeatResult {
    nodes: usize,
    modes: usize,
    volume: f64,
    diameter: f64,
    eta1: f64,
    eta1_diam_sq: f64,
    eigenvalues: Vec<f64>,
    diagonal: crate::heat::DiagonalBound,
    doubling: crate::heat::DoublingReport,
    vev: crate::heat::VevSweep,
    kato: f64,
    li_yau: crate::heat::LiYauProfile,
}

/// Heat mesh from the config: `N` cells on an interval, `resolution/2`
/// rings of `resolution` nodes otherwise.
pub fn discrete_domain(cfg: &RunConfig) -> Result<DiscreteDomain> {
    match cfg.boundary()? {
        BoundaryConfig::Interval { length } => DiscreteDomain::interval(*length, cfg.resolution),
        _ => DiscreteDomain::disk_like(cfg.domain()?, cfg.resolution / 2, cfg.resolution),
    }
}

fn heat(cfg: &RunConfig) -> Result<Outcome> {
    let h = &cfg.heat;
    let domain = discrete_domain(cfg)?;
    // the vEv sweep also evaluates the semigroup at t/2
    let opts = SpectralOptions {
        t_min: h.t_min / 2.0,
        max_modes: h.modes,
    };
    let system = assemble(&domain, &opts)?;
    let diam = domain.diameter();
    let t_max = h.t_max.unwrap_or(diam * diam);
    let t_grid = geometric_grid(h.t_min, t_max, h.t_steps);
    let points = sample_nodes(&domain, h.points);
    let diagonal = diagonal_bound_check(&domain, &system, &t_grid, &points)?;
    let doubling = doubling_constant(&domain, diam, &points, DOUBLING_STEPS)?;
    let (eta1, eta1_diam_sq) = eigenvalue_diagnostic(&system, &domain)?;
    let vev = vev_sweep(&domain, &system, &t_grid)?;
    let curvature = CurvatureField::from_domain(&domain)?;
    let kato = kato_quantity(&system, &curvature.rho_minus, t_max)?;
    let u0 = positive_datum(&system);
    let li_yau = li_yau_check(&domain, &system, &u0, &t_grid, h.alpha)?;

    let eigenvalues: Vec<f64> = system.eigenvalues().iter().take(20).copied().collect();
    let mut table = Table::new(&["table", "key", "value"]);
    for (t, c) in &diagonal.profile {
        table.push(vec!["diagonal".into(), (*t).into(), (*c).into()]);
    }
    for (k, lam) in system.eigenvalues().iter().enumerate() {
        table.push(vec!["eigenvalue".into(), k.into(), (*lam).into()]);
    }
    let checks = vec![
        Check::new("diagonal_bound_finite", diagonal.c_obs.is_finite()),
        Check::new("doubling_finite", doubling.c_d.is_finite()),
        Check::new("dunford_pettis", vev.max_dunford_pettis_gap <= DUNFORD_PETTIS_TOL),
        Check::new("vev_conditions_agree", vev.agree),
        Check::new("li_yau_envelope", li_yau.violations.is_empty()),
    ];
    let result = HeatResult {
        nodes: domain.len(),
        modes: system.mode_count(),
        volume: domain.volume(),
        diameter: diam,
        eta1,
        eta1_diam_sq,
        eigenvalues,
        diagonal,
        doubling,
        vev,
        kato,
        li_yau,
    };
    Ok(Outcome::from_checks("heat", checks, serde_json::to_value(result)?, Some(table)))
}

/// `1 + φ₁/(2 max|φ₁|)`: positive and not stationary.
fn positive_datum(system: &crate::heat::NeumannSystem) -> Vec<f64> {
    if system.mode_count() < 2 {
        return vec![1.0; system.len()];
    }
    let phi = system.mode_vector(1);
    let m = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    phi.iter().map(|v| 1.0 + 0.5 * v / m).collect()
}

#[derive(Serialize)]
struct SweepEntry {
    index: usize,
    params: SweepPoint,
    status: Status,
    error: Option<String>,
    result: Value,
}

#[derive(Serialize)]
struct SweepResult {
    command: &'static str,
    points: Vec<SweepEntry>,
}

fn run_sweep(cfg: &RunConfig) -> Result<Outcome> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("missing key `sweep`".into()))?;
    let command = sweep.command;
    let points = sweep.points();
    let mut entries: Vec<SweepEntry> = points
        .par_iter()
        .map(|p| {
            let out = cfg
                .at_point(p, command)
                .and_then(|c| run_single(&c, command))
                .unwrap_or_else(|e| Outcome::from_error(command_name(command), &e));
            SweepEntry {
                index: p.index,
                params: *p,
                status: out.report.status,
                error: out.report.error,
                result: out.report.result,
            }
        })
        .collect();
    entries.sort_by_key(|e| e.index);
    let status = entries.iter().map(|e| e.status).max().unwrap_or(Status::Pass);
    let mut table = Table::new(&["index", "K", "H", "r", "R0", "status"]);
    for e in &entries {
        let opt = |x: Option<f64>| Cell::Float(x.unwrap_or(f64::NAN));
        let p = &e.params;
        table.push(vec![
            e.index.into(),
            opt(p.K),
            opt(p.H),
            opt(p.r),
            opt(p.R0),
            match e.status {
                Status::Pass => "pass",
                Status::Violation => "violation",
                Status::Invalid => "invalid",
            }
            .into(),
        ]);
    }
    let checks = entries
        .iter()
        .map(|e| Check::new(&format!("point_{}", e.index), e.status == Status::Pass))
        .collect();
    let result = SweepResult {
        command: command_name(command),
        points: entries,
    };
    let mut out = Outcome::from_checks("sweep", checks, serde_json::to_value(result)?, Some(table));
    out.report.status = status;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::parse_config;
    use proptest::prelude::*;

    #[test]
    fn constants_flat_unit_curvature() {
        let cfg = parse_config(r#"{"constants": {"K": 0, "H": 1}}"#).unwrap();
        let out = run(&cfg, Task::Single(SweepCommand::Constants));
        assert_eq!(out.report.status, Status::Pass, "{:?}", out.report.error);
        assert_eq!(out.report.result["r0"].as_f64(), Some(1.0));
        assert_eq!(out.report.result["admissible_r"].as_f64(), Some(0.5));
        assert!((out.report.result["distortion"].as_f64().unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn tube_beyond_focal_radius_is_a_violation() {
        let cfg = parse_config(r#"{"r": 2.0, "constants": {"K": 0, "H": 1}}"#).unwrap();
        let out = run(&cfg, Task::Single(SweepCommand::Constants));
        assert_eq!(out.exit_code(), 1);
        assert!(out.report.error.is_some());
    }

    #[test]
    fn missing_domain_is_invalid() {
        let cfg = parse_config("{}").unwrap();
        let out = run(&cfg, Task::Single(SweepCommand::Regularity));
        assert_eq!(out.exit_code(), 2);
        assert!(out.report.error.unwrap().contains("boundary"));
    }

    #[test]
    fn sweep_orders_points_and_aggregates() {
        let cfg = parse_config(
            r#"{"constants": {"K": 0, "H": 1}, "sweep": {"r": {"from": 0.25, "to": 1.25, "steps": 5}}}"#,
        )
        .unwrap();
        let out = run(&cfg, Task::Sweep);
        let pts = out.report.result["points"].as_array().unwrap();
        assert_eq!(pts.len(), 5);
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(p["index"].as_u64(), Some(i as u64));
        }
        // r = 1.25 exceeds the focal radius 1
        assert_eq!(pts[4]["status"], "violation");
        assert_eq!(out.exit_code(), 1);
    }

    fn arb_error() -> impl Strategy<Value = Error> {
        prop_oneof![
            any::<u8>().prop_map(|_| Error::Regularity("x".into())),
            any::<u8>().prop_map(|_| Error::ComparisonBreakdown("x".into())),
            any::<u8>().prop_map(|_| Error::DegenerateTube("x".into())),
            any::<u8>().prop_map(|_| Error::Config("x".into())),
            any::<u8>().prop_map(|_| Error::Parameter("x".into())),
            any::<u8>().prop_map(|_| Error::InvalidDomain("x".into())),
        ]
    }

    proptest! {
        #[test]
        fn exit_code_contract(flags in proptest::collection::vec(any::<bool>(), 0..12)) {
            let checks: Vec<Check> = flags.iter().enumerate().map(|(i, &p)| Check::new(&i.to_string(), p)).collect();
            let out = Outcome::from_checks("t", checks, Value::Null, None);
            let expect = if flags.iter().all(|p| *p) { 0 } else { 1 };
            prop_assert_eq!(out.exit_code(), expect);
        }

        #[test]
        fn error_exit_codes(err in arb_error()) {
            let out = Outcome::from_error("t", &err);
            let violation = matches!(err, Error::Regularity(_) | Error::ComparisonBreakdown(_) | Error::DegenerateTube(_));
            prop_assert_eq!(out.exit_code(), if violation { 1 } else { 2 });
        }
    }
}
