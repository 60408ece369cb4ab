//! Reflection-type extension of `C¹(Ω̄)` functions across `∂Ω`, and the
//! quadrature needed to compare `H¹` norms on both sides.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::{distortion_factor, extension_norm_bound, ComparisonProfile, CurvatureData};
use crate::error::{Error, Result};
use crate::fermi::{check_regularity, FermiChart, RegularityReport};
use crate::geometry::{ModelSurface, Point};
use crate::quadrature::GaussLegendre;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    C1,
    C2,
}

type Eval = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
type Grad = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// A function on `Ω̄` written in normal coordinates `x = r (cos θ, sin θ)`
/// about the chart pole, together with its coordinate gradient.
#[derive(Clone)]
pub struct ScalarField {
    value: Eval,
    gradient: Grad,
    pub smoothness: Smoothness,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("smoothness", &self.smoothness)
            .finish_non_exhaustive()
    }
}

impl ScalarField {
    pub fn new(
        value: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static,
        smoothness: Smoothness,
    ) -> Self {
        Self {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            smoothness,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c, |_| [0.0, 0.0], Smoothness::C2)
    }

    /// `a + b·x`
    pub fn affine(a: f64, b: [f64; 2]) -> Self {
        Self::new(
            move |x| a + b[0] * x[0] + b[1] * x[1],
            move |_| b,
            Smoothness::C2,
        )
    }

    /// Quadratic part plus three random plane waves.
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let mut u = || rng.gen_range(-1.0..1.0);
        let c0 = u();
        let lin = [u(), u()];
        let quad = [u(), u(), u()];
        let waves: Vec<(f64, [f64; 2], f64)> = (0..3)
            .map(|_| (u(), [3.0 * u(), 3.0 * u()], 3.0 * u()))
            .collect();
        let w2 = waves.clone();
        Self::new(
            move |x| {
                let mut v = c0
                    + lin[0] * x[0]
                    + lin[1] * x[1]
                    + 0.5 * quad[0] * x[0] * x[0]
                    + quad[1] * x[0] * x[1]
                    + 0.5 * quad[2] * x[1] * x[1];
                for (a, w, ph) in &waves {
                    v += a * (w[0] * x[0] + w[1] * x[1] + ph).sin();
                }
                v
            },
            move |x| {
                let mut g = [
                    lin[0] + quad[0] * x[0] + quad[1] * x[1],
                    lin[1] + quad[1] * x[0] + quad[2] * x[1],
                ];
                for (a, w, ph) in &w2 {
                    let c = a * (w[0] * x[0] + w[1] * x[1] + ph).cos();
                    g[0] += c * w[0];
                    g[1] += c * w[1];
                }
                g
            },
            Smoothness::C2,
        )
    }

    pub fn eval(&self, p: &Point) -> f64 {
        (self.value)(p.to_cartesian())
    }

    pub fn eval_xy(&self, x: [f64; 2]) -> f64 {
        (self.value)(x)
    }

    /// Gradient in chart components `(∂_r u, ∂_θ u)`.
    pub fn chart_gradient(&self, p: &Point) -> [f64; 2] {
        let g = (self.gradient)(p.to_cartesian());
        let (c, s) = (p.theta.cos(), p.theta.sin());
        [g[0] * c + g[1] * s, p.r * (-g[0] * s + g[1] * c)]
    }

    /// `|∇u|²` w.r.t. the surface metric.
    pub fn grad_norm_sq(&self, surface: &ModelSurface, p: &Point) -> f64 {
        let d = self.chart_gradient(p);
        let (f, _, _) = surface.warp(p.r);
        if p.r == 0.0 {
            let g = (self.gradient)([0.0, 0.0]);
            return g[0] * g[0] + g[1] * g[1];
        }
        d[0] * d[0] + d[1] * d[1] / (f * f)
    }

    /// `a·self + b·other`
    pub fn combine(&self, a: f64, other: &ScalarField, b: f64) -> ScalarField {
        let (u, v) = (self.clone(), other.clone());
        let (gu, gv) = (self.clone(), other.clone());
        let smooth = if self.smoothness == Smoothness::C2 && other.smoothness == Smoothness::C2 {
            Smoothness::C2
        } else {
            Smoothness::C1
        };
        ScalarField::new(
            move |x| a * u.eval_xy(x) + b * v.eval_xy(x),
            move |x| {
                let (p, q) = ((gu.gradient)(x), (gv.gradient)(x));
                [a * p[0] + b * q[0], a * p[1] + b * q[1]]
            },
            smooth,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CutoffProfile {
    /// `1 - (3t² - 2t³)`, `t = 2(x - 1/2)`.
    Smoothstep,
    /// C¹ profile whose slope ramps linearly to `-slope`, stays there and
    /// ramps back.
    Trapezoid { slope: f64 },
}

/// Radial cutoff `η`: `1` on `[0, 1/2]`, `0` on `[1, ∞)`, `|η'| ≤ G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffFamily {
    pub profile: CutoffProfile,
    pub g: f64,
}

impl CutoffFamily {
    pub fn smoothstep() -> Self {
        Self {
            profile: CutoffProfile::Smoothstep,
            g: 3.0,
        }
    }

    /// Preset reproducing the ball constant `164 G² = 1312`.
    pub fn ball() -> Self {
        Self::trapezoid(8f64.sqrt()).expect("sqrt 8 > 2")
    }

    pub fn trapezoid(slope: f64) -> Result<Self> {
        if !(slope > 2.0) || !slope.is_finite() {
            return Err(Error::Parameter(format!(
                "a C¹ cutoff dropping over [1/2, 1] needs G > 2, got {slope}"
            )));
        }
        Ok(Self {
            profile: CutoffProfile::Trapezoid { slope },
            g: slope,
        })
    }

    /// Smoothstep for `G = 3`, trapezoid otherwise.
    pub fn with_gradient_bound(g: f64) -> Result<Self> {
        if g == 3.0 {
            Ok(Self::smoothstep())
        } else {
            Self::trapezoid(g)
        }
    }

    fn trapezoid_shape(slope: f64) -> (f64, f64) {
        let a = (0.5 - 1.0 / slope).min(0.5 / slope);
        (a, 1.0 / slope - a)
    }

    pub fn eta(&self, x: f64) -> f64 {
        if x <= 0.5 {
            return 1.0;
        }
        if x >= 1.0 {
            return 0.0;
        }
        match self.profile {
            CutoffProfile::Smoothstep => {
                let t = 2.0 * (x - 0.5);
                1.0 - t * t * (3.0 - 2.0 * t)
            }
            CutoffProfile::Trapezoid { slope: m } => {
                let (a, b) = Self::trapezoid_shape(m);
                let y = x - 0.5;
                if y < a {
                    1.0 - m * y * y / (2.0 * a)
                } else if y < a + b {
                    1.0 - m * a / 2.0 - m * (y - a)
                } else if y < 2.0 * a + b {
                    let rest = 2.0 * a + b - y;
                    m * rest * rest / (2.0 * a)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn eta_prime(&self, x: f64) -> f64 {
        if x <= 0.5 || x >= 1.0 {
            return 0.0;
        }
        match self.profile {
            CutoffProfile::Smoothstep => {
                let t = 2.0 * (x - 0.5);
                -2.0 * 6.0 * t * (1.0 - t)
            }
            CutoffProfile::Trapezoid { slope: m } => {
                let (a, b) = Self::trapezoid_shape(m);
                let y = x - 0.5;
                if y < a {
                    -m * y / a
                } else if y < a + b {
                    -m
                } else if y < 2.0 * a + b {
                    -m * (2.0 * a + b - y) / a
                } else {
                    0.0
                }
            }
        }
    }

    /// Points in `[1/2, 1]` where `η` is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.profile {
            CutoffProfile::Smoothstep => vec![0.5, 1.0],
            CutoffProfile::Trapezoid { slope } => {
                let (a, b) = Self::trapezoid_shape(slope);
                let mut v = vec![0.5, 0.5 + a, 0.5 + a + b, 0.5 + 2.0 * a + b, 1.0];
                v.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
                v
            }
        }
    }
}

/// `η(d(center, point)/r)` with the closed-form surface distance.
pub fn cutoff_value(
    family: &CutoffFamily,
    surface: &ModelSurface,
    center: &Point,
    r: f64,
    point: &Point,
) -> Result<f64> {
    Ok(family.eta(surface.distance(center, point)? / r))
}

/// One-dimensional extension of `trace` (given on `(-r, 0]`) to `(-r, r)`.
pub fn extend_1d(trace: &dyn Fn(f64) -> f64, cutoff: &dyn Fn(f64) -> f64, s: f64) -> f64 {
    if s <= 0.0 {
        trace(s)
    } else {
        (-3.0 * trace(-s) + 4.0 * trace(-s / 2.0)) * cutoff(s)
    }
}

/// `E_Ω u` for a Fermi chart, source field and cutoff.
#[derive(Debug, Clone)]
pub struct ExtendedField {
    pub chart: FermiChart,
    pub source: ScalarField,
    pub cutoff: CutoffFamily,
}

const INVERT_TOL: f64 = 1e-9;

impl ExtendedField {
    pub fn new(chart: FermiChart, source: ScalarField, cutoff: CutoffFamily) -> Self {
        Self {
            chart,
            source,
            cutoff,
        }
    }

    pub fn extend(&self, p: &Point) -> Result<f64> {
        if self.chart.domain().contains(p)? {
            return Ok(self.source.eval(p));
        }
        match self.chart.fermi_invert(p, INVERT_TOL) {
            Ok((s, theta)) => self.eval_fermi(s, theta),
            Err(Error::OutOfTube { .. }) => Ok(0.0),
            Err(Error::Ambiguous { first, second }) => Err(Error::Regularity(format!(
                "foot point of ({}, {}) is ambiguous between θ = {first} and θ = {second}",
                p.r, p.theta
            ))),
            Err(e) => Err(e),
        }
    }

    /// `Eu(ψ(s, θ))` for `s ∈ (-r, r)`; zero for `s ≥ r`.
    pub fn eval_fermi(&self, s: f64, theta: f64) -> Result<f64> {
        let r = self.chart.radius();
        if s >= r {
            return Ok(0.0);
        }
        let domain = self.chart.domain();
        if s <= 0.0 {
            return Ok(self.source.eval(&domain.normal_point(s, theta)?));
        }
        let cut = self.cutoff.eta(s / r);
        if cut == 0.0 {
            return Ok(0.0);
        }
        let u1 = self.source.eval(&domain.normal_point(-s, theta)?);
        let u2 = self.source.eval(&domain.normal_point(-s / 2.0, theta)?);
        Ok((-3.0 * u1 + 4.0 * u2) * cut)
    }

    /// One-sided normal derivatives and the tangential mismatch of `Eu`
    /// at `ψ(0, θ)`, using second-order stencils of step `h`.
    pub fn c1_defect(&self, theta: f64, h: f64) -> Result<C1Defect> {
        let f = |s: f64| self.eval_fermi(s, theta);
        let (f0, fm1, fm2, fp1, fp2) = (f(0.0)?, f(-h)?, f(-2.0 * h)?, f(h)?, f(2.0 * h)?);
        let inner = (3.0 * f0 - 4.0 * fm1 + fm2) / (2.0 * h);
        let outer = (-3.0 * f0 + 4.0 * fp1 - fp2) / (2.0 * h);
        let dt = |s: f64| -> Result<f64> {
            Ok((self.eval_fermi(s, theta + h)? - self.eval_fermi(s, theta - h)?) / (2.0 * h))
        };
        let t_in = dt(0.0)?;
        // extrapolate the exterior tangential derivative to s = 0
        let t_out = 2.0 * dt(h)? - dt(2.0 * h)?;
        Ok(C1Defect {
            normal_inside: inner,
            normal_outside: outer,
            tangential_inside: t_in,
            tangential_outside: t_out,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C1Defect {
    pub normal_inside: f64,
    pub normal_outside: f64,
    pub tangential_inside: f64,
    pub tangential_outside: f64,
}

impl C1Defect {
    pub fn max_gap(&self) -> f64 {
        (self.normal_inside - self.normal_outside)
            .abs()
            .max((self.tangential_inside - self.tangential_outside).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Omega,
    TubeExterior,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    /// Gauss nodes per panel and axis.
    pub nodes: usize,
    pub theta_panels: usize,
}

impl QuadSpec {
    pub fn new(nodes: usize) -> Result<Self> {
        if nodes < 16 {
            return Err(Error::Parameter(format!(
                "quadrature needs at least 16 nodes per axis, got {nodes}"
            )));
        }
        Ok(Self {
            nodes,
            theta_panels: 4,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct H1Norm {
    pub l2_sq: f64,
    pub grad_l2_sq: f64,
}

impl H1Norm {
    pub fn total(&self) -> f64 {
        self.l2_sq + self.grad_l2_sq
    }
}

impl std::ops::Add for H1Norm {
    type Output = H1Norm;
    fn add(self, o: H1Norm) -> H1Norm {
        H1Norm {
            l2_sq: self.l2_sq + o.l2_sq,
            grad_l2_sq: self.grad_l2_sq + o.grad_l2_sq,
        }
    }
}

/// What to integrate: a source field on `Ω`, or its extension.
#[derive(Clone, Copy)]
pub enum Integrand<'a> {
    Field(&'a ScalarField),
    Extended(&'a ExtendedField),
}

impl Integrand<'_> {
    fn source(&self) -> &ScalarField {
        match self {
            Integrand::Field(u) => u,
            Integrand::Extended(e) => &e.source,
        }
    }
}

fn check_finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation(format!("non-finite {what}")))
    }
}

/// Derivative of `f` at `x` with step `h`; one-sided (second order) when a
/// central stencil would cross `lo` or `hi`.
fn fd(f: &dyn Fn(f64) -> Result<f64>, x: f64, h: f64, lo: f64, hi: f64) -> Result<f64> {
    if x - h < lo {
        Ok((-3.0 * f(x)? + 4.0 * f(x + h)? - f(x + 2.0 * h)?) / (2.0 * h))
    } else if x + h > hi {
        Ok((3.0 * f(x)? - 4.0 * f(x - h)? + f(x - 2.0 * h)?) / (2.0 * h))
    } else {
        Ok((f(x + h)? - f(x - h)?) / (2.0 * h))
    }
}

/// Tensor Gauss rule `[(σ or s, weight)] × [(θ, weight)]`.
fn theta_rule(quad: &QuadSpec) -> Vec<(f64, f64)> {
    GaussLegendre::new(quad.nodes).composite_nodes(0.0, TAU, quad.theta_panels)
}

/// `(‖·‖²_{L²}, ‖∇·‖²_{L²})` over a region, by Gauss quadrature in interior
/// polar coordinates on `Ω` and Fermi coordinates on the tube exterior.
pub fn h1_norm(
    integrand: Integrand<'_>,
    region: Region,
    chart: &FermiChart,
    quad: &QuadSpec,
) -> Result<H1Norm> {
    match region {
        Region::Omega => h1_omega(integrand.source(), chart, quad),
        Region::TubeExterior => match integrand {
            Integrand::Extended(e) => h1_tube(e, quad),
            Integrand::Field(_) => Err(Error::Evaluation(
                "a source field is only defined on the closed domain".into(),
            )),
        },
        Region::All => Ok(h1_norm(integrand, Region::Omega, chart, quad)?
            + h1_norm(integrand, Region::TubeExterior, chart, quad)?),
    }
}

fn h1_omega(u: &ScalarField, chart: &FermiChart, quad: &QuadSpec) -> Result<H1Norm> {
    let domain = chart.domain();
    let h = 1e-5 * domain.diameter().min(1.0).max(1e-3);
    let sig = GaussLegendre::new(quad.nodes).composite_nodes(0.0, 1.0, 1);
    let th = theta_rule(quad);
    let parts: Vec<Result<H1Norm>> = th
        .par_iter()
        .map(|&(theta, wt)| {
            let mut acc = H1Norm::default();
            for &(sigma, ws) in &sig {
                let g = domain.interior_metric(sigma, theta);
                let det = g[0][0] * g[1][1] - g[0][1] * g[0][1];
                let sq = det.sqrt();
                let p = domain.interior_map(sigma, theta)?;
                let v = check_finite(u.eval(&p), "field value")?;
                let along_s = |x: f64| -> Result<f64> { Ok(u.eval(&domain.interior_map(x, theta)?)) };
                let along_t = |x: f64| -> Result<f64> { Ok(u.eval(&domain.interior_map(sigma, x)?)) };
                let ds = fd(&along_s, sigma, h, 0.0, 1.0)?;
                let dt = fd(&along_t, theta, h, f64::NEG_INFINITY, f64::INFINITY)?;
                // g^{-1} = adj(g)/det
                let grad = (g[1][1] * ds * ds - 2.0 * g[0][1] * ds * dt + g[0][0] * dt * dt) / det;
                let w = ws * wt * sq;
                acc.l2_sq += w * v * v;
                acc.grad_l2_sq += w * check_finite(grad, "gradient")?;
            }
            Ok(acc)
        })
        .collect();
    parts
        .into_iter()
        .try_fold(H1Norm::default(), |a, b| Ok(a + b?))
}

/// Fermi-coordinate nodes `(s, w_s)` on `(0, r)` split at cutoff breakpoints.
fn tube_depths(field: &ExtendedField, quad: &QuadSpec) -> Vec<(f64, f64)> {
    let r = field.chart.radius();
    let g = GaussLegendre::new(quad.nodes);
    let mut cuts = vec![0.0];
    cuts.extend(field.cutoff.breakpoints().into_iter().map(|x| x * r));
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    cuts.windows(2)
        .flat_map(|w| g.on(w[0], w[1]).collect::<Vec<_>>())
        .collect()
}

fn h1_tube(field: &ExtendedField, quad: &QuadSpec) -> Result<H1Norm> {
    let chart = &field.chart;
    let r = chart.radius();
    let h = 1e-5 * chart.domain().diameter().min(1.0).max(1e-3);
    let depths = tube_depths(field, quad);
    let th = theta_rule(quad);
    let parts: Vec<Result<H1Norm>> = th
        .par_iter()
        .map(|&(theta, wt)| {
            let speed = chart.boundary_point(theta)?.speed;
            let mut acc = H1Norm::default();
            for &(s, ws) in &depths {
                let j = chart.volume_element_ratio(theta, s)?;
                let v = check_finite(field.eval_fermi(s, theta)?, "extension value")?;
                let along_s = |x: f64| field.eval_fermi(x, theta);
                let along_t = |x: f64| field.eval_fermi(s, x);
                let ds = fd(&along_s, s, h, 0.0, r)?;
                let dt = fd(&along_t, theta, h, f64::NEG_INFINITY, f64::INFINITY)?;
                let lin = speed * j;
                let w = ws * wt * lin;
                acc.l2_sq += w * v * v;
                acc.grad_l2_sq += w * check_finite(ds * ds + dt * dt / (lin * lin), "gradient")?;
            }
            Ok(acc)
        })
        .collect();
    parts
        .into_iter()
        .try_fold(H1Norm::default(), |a, b| Ok(a + b?))
}

/// A one-dimensional trace `s ↦ u(γ(s))` on `[-r, 0]` with its derivative.
#[derive(Clone)]
pub struct Trace {
    value: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    derivative: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Trace {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c, |_| 0.0)
    }

    /// `c₀ + Σ_k a_k cos(k π s / r) + b_k sin(k π s / r)`, `k ≤ modes`.
    pub fn random_fourier<R: Rng>(rng: &mut R, r: f64, modes: usize) -> Self {
        let c0: f64 = rng.gen_range(-1.0..1.0);
        let terms: Vec<(f64, f64, f64)> = (1..=modes)
            .map(|k| {
                (
                    k as f64 * std::f64::consts::PI / r,
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let t2 = terms.clone();
        Self::new(
            move |s| {
                c0 + terms
                    .iter()
                    .map(|(w, a, b)| a * (w * s).cos() + b * (w * s).sin())
                    .sum::<f64>()
            },
            move |s| {
                t2.iter()
                    .map(|(w, a, b)| w * (-a * (w * s).sin() + b * (w * s).cos()))
                    .sum()
            },
        )
    }

    pub fn value(&self, s: f64) -> f64 {
        (self.value)(s)
    }

    pub fn derivative(&self, s: f64) -> f64 {
        (self.derivative)(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Compares `‖E u‖²_{H¹(0,r)}` with
/// `164 ‖u'‖²_{L²(-r,0)} + (82 + 164 G² r⁻²) ‖u‖²_{L²(-r,0)}`.
pub fn verify_1d_inequality(
    trace: &Trace,
    r: f64,
    cutoff: &CutoffFamily,
    quad: usize,
) -> Result<InequalityCheck> {
    if !(r > 0.0) {
        return Err(Error::Parameter(format!("r must be positive, got {r}")));
    }
    let g = GaussLegendre::new(quad.max(16));
    let mut cuts = vec![0.0, 0.25 * r];
    cuts.extend(cutoff.breakpoints().into_iter().map(|x| x * r));
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let mut lhs = 0.0;
    for w in cuts.windows(2) {
        for (s, wt) in g.on(w[0], w[1]) {
            let eta = cutoff.eta(s / r);
            let deta = cutoff.eta_prime(s / r) / r;
            let base = -3.0 * trace.value(-s) + 4.0 * trace.value(-s / 2.0);
            let dbase = 3.0 * trace.derivative(-s) - 2.0 * trace.derivative(-s / 2.0);
            let e = base * eta;
            let de = dbase * eta + base * deta;
            lhs += wt * (e * e + de * de);
        }
    }
    let mut l2 = 0.0;
    let mut d2 = 0.0;
    for w in [[-r, -0.5 * r], [-0.5 * r, 0.0]] {
        for (s, wt) in g.on(w[0], w[1]) {
            l2 += wt * trace.value(s).powi(2);
            d2 += wt * trace.derivative(s).powi(2);
        }
    }
    let rhs = 164.0 * d2 + (82.0 + 164.0 * cutoff.g * cutoff.g / (r * r)) * l2;
    let ratio = if rhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(InequalityCheck { lhs, rhs, ratio })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub max_ratio: f64,
    pub bound: f64,
    pub distortion: f64,
    pub per_sample: Vec<f64>,
}

/// Comparison-derived distortion `max D/d` on `[0, r]` from a regularity
/// report.
pub fn distortion_from_report(report: &RegularityReport, n: usize) -> Result<f64> {
    let data = CurvatureData::new(report.sec_min, report.sec_max, -report.h, report.h, n)?;
    let profile = ComparisonProfile::from_data(&data, report.r)?;
    distortion_factor(&profile, report.r)
}

/// `max ‖E u‖²_{H¹(M)} / ‖u‖²_{H¹(Ω)}` over the samples, against the bound.
pub fn operator_norm_estimate(
    chart: &FermiChart,
    cutoff: &CutoffFamily,
    samples: &[ScalarField],
    quad: &QuadSpec,
) -> Result<NormEstimate> {
    let report = check_regularity(chart.domain(), chart.radius());
    if !report.admissible {
        return Err(Error::Regularity(format!(
            "domain is not admissible at r = {}",
            chart.radius()
        )));
    }
    let n = chart.domain().surface().dimension();
    let distortion = distortion_from_report(&report, n)?;
    let bound = extension_norm_bound(distortion, cutoff.g, chart.radius());
    let mut per_sample = Vec::with_capacity(samples.len());
    for u in samples {
        let e = ExtendedField::new(chart.clone(), u.clone(), *cutoff);
        let inside = h1_norm(Integrand::Field(u), Region::Omega, chart, quad)?;
        let outside = h1_norm(Integrand::Extended(&e), Region::TubeExterior, chart, quad)?;
        let ratio = if inside.total() == 0.0 {
            0.0
        } else {
            (inside.total() + outside.total()) / inside.total()
        };
        per_sample.push(ratio);
    }
    let max_ratio = per_sample.iter().copied().fold(0.0, f64::max);
    Ok(NormEstimate {
        max_ratio,
        bound,
        distortion,
        per_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fermi::{Boundary, DomainSpec, FourierProfile};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn blob() -> DomainSpec {
        DomainSpec::new(
            ModelSurface::flat(),
            Boundary::RadialProfile(FourierProfile {
                cos: vec![1.0, 0.0, 0.1],
                sin: vec![0.0, 0.0, 0.05],
            }),
        )
        .unwrap()
    }

    #[test]
    fn cutoff_examples() {
        let c = CutoffFamily::smoothstep();
        let flat = ModelSurface::flat();
        let o = Point::new(0.0, 0.0);
        assert_eq!(cutoff_value(&c, &flat, &o, 1.0, &Point::new(0.2, 0.0)).unwrap(), 1.0);
        assert_eq!(cutoff_value(&c, &flat, &o, 1.0, &Point::new(1.1, 0.0)).unwrap(), 0.0);
        assert_relative_eq!(
            cutoff_value(&c, &flat, &o, 1.0, &Point::new(0.75, 0.0)).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn cutoff_profiles_are_c1_with_declared_slope() {
        for c in [
            CutoffFamily::smoothstep(),
            CutoffFamily::ball(),
            CutoffFamily::trapezoid(3.5).unwrap(),
            CutoffFamily::trapezoid(8.0).unwrap(),
        ] {
            let n = 20000;
            let mut max_slope = 0.0f64;
            let mut prev = c.eta(0.0);
            for i in 1..=n {
                let x = 1.2 * i as f64 / n as f64;
                let v = c.eta(x);
                assert!((0.0..=1.0).contains(&v));
                assert!(v <= prev + 1e-15, "not monotone");
                let fd = (c.eta(x + 1e-7) - c.eta(x - 1e-7)) / 2e-7;
                assert!((fd - c.eta_prime(x)).abs() < 1e-5, "eta' mismatch at {x}");
                max_slope = max_slope.max(fd.abs());
                prev = v;
            }
            assert!(max_slope <= c.g + 1e-6, "{max_slope} > {}", c.g);
            assert!(max_slope >= c.g - 1e-3);
            assert_eq!(c.eta(0.5), 1.0);
            assert_eq!(c.eta(1.0), 0.0);
        }
        assert!(CutoffFamily::trapezoid(2.0).is_err());
    }

    #[test]
    fn extend_1d_examples() {
        let one = |_: f64| 1.0;
        assert_eq!(extend_1d(&|_| 1.0, &one, 0.3), 1.0);
        assert_relative_eq!(extend_1d(&|s| s, &one, 0.4), 0.4, epsilon = 1e-15);
        assert_relative_eq!(extend_1d(&|s| s * s, &one, 0.4), -0.32, epsilon = 1e-15);
        assert_eq!(extend_1d(&|s| s * s, &one, -0.4), 0.16000000000000003);
    }

    #[test]
    fn extend_examples() {
        let chart = FermiChart::new(DomainSpec::unit_disk(), 0.5).unwrap();
        let e = ExtendedField::new(chart.clone(), ScalarField::constant(1.0), CutoffFamily::smoothstep());
        assert_eq!(e.extend(&Point::new(1.1, 0.4)).unwrap(), 1.0);
        let x1 = ExtendedField::new(
            chart,
            ScalarField::affine(0.0, [1.0, 0.0]),
            CutoffFamily::smoothstep(),
        );
        for s in [0.05, 0.1, 0.25] {
            assert_relative_eq!(x1.extend(&Point::new(1.0 + s, 0.0)).unwrap(), 1.0 + s, epsilon = 1e-12);
        }
        assert_eq!(x1.extend(&Point::new(1.6, 0.3)).unwrap(), 0.0);
        assert_eq!(x1.extend(&Point::new(1.5, 0.3)).unwrap(), 0.0);
    }

    #[test]
    fn restriction_and_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let chart = FermiChart::new(blob(), 0.25).unwrap();
        let (u, v) = (ScalarField::random(&mut rng), ScalarField::random(&mut rng));
        let cut = CutoffFamily::smoothstep();
        let eu = ExtendedField::new(chart.clone(), u.clone(), cut);
        let ev = ExtendedField::new(chart.clone(), v.clone(), cut);
        let euv = ExtendedField::new(chart.clone(), u.combine(2.0, &v, -0.5), cut);
        for i in 0..40 {
            let t = TAU * i as f64 / 40.0;
            for s in [-0.5, -0.1, 0.0, 0.05, 0.12, 0.2, 0.3] {
                let p = chart.domain().normal_point(s, t).unwrap();
                let val = eu.extend(&p).unwrap();
                if chart.domain().contains(&p).unwrap() {
                    assert_eq!(val.to_bits(), u.eval(&p).to_bits());
                }
                let lin = 2.0 * val - 0.5 * ev.extend(&p).unwrap();
                assert!((euv.extend(&p).unwrap() - lin).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn c1_matching_on_disk() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let chart = FermiChart::new(DomainSpec::unit_disk(), 0.5).unwrap();
        let e = ExtendedField::new(chart, ScalarField::random(&mut rng), CutoffFamily::smoothstep());
        for i in 0..64 {
            let d = e.c1_defect(TAU * i as f64 / 64.0, 1e-4).unwrap();
            assert!(d.max_gap() < 1e-5, "{d:?}");
        }
    }

    #[test]
    fn h1_examples() {
        let chart = FermiChart::new(DomainSpec::unit_disk(), 0.5).unwrap();
        let q = QuadSpec::new(32).unwrap();
        let one = ScalarField::constant(1.0);
        let n = h1_norm(Integrand::Field(&one), Region::Omega, &chart, &q).unwrap();
        assert_relative_eq!(n.l2_sq, PI, epsilon = 1e-12);
        assert!(n.grad_l2_sq.abs() < 1e-12);
        let x1 = ScalarField::affine(0.0, [1.0, 0.0]);
        let n = h1_norm(Integrand::Field(&x1), Region::Omega, &chart, &q).unwrap();
        assert_relative_eq!(n.l2_sq, PI / 4.0, epsilon = 1e-12);
        assert!((n.grad_l2_sq - PI).abs() < 1e-6 * PI);
        // degree 8 integrand: ∫ x⁴y⁴ = 3π/640
        let q4 = ScalarField::new(
            |x| x[0] * x[0] * x[1] * x[1],
            |x| [2.0 * x[0] * x[1] * x[1], 2.0 * x[0] * x[0] * x[1]],
            Smoothness::C2,
        );
        let n = h1_norm(Integrand::Field(&q4), Region::Omega, &chart, &q).unwrap();
        assert!((n.l2_sq - 3.0 * PI / 640.0).abs() < 1e-6 * 3.0 * PI / 640.0);
        // ∫ 4x²y⁴ + 4x⁴y² = 8 ∫ x²y⁴ = 8 · π/64
        assert!((n.grad_l2_sq - PI / 8.0).abs() < 1e-6 * PI / 8.0, "{}", n.grad_l2_sq);

        let e = ExtendedField::new(chart.clone(), one, CutoffFamily::smoothstep());
        let t = h1_norm(Integrand::Extended(&e), Region::TubeExterior, &chart, &q).unwrap();
        let ring = PI * (1.5f64.powi(2) - 1.0);
        assert!(t.l2_sq > 0.0 && t.l2_sq <= ring);
        assert!(matches!(
            h1_norm(Integrand::Field(&x1), Region::TubeExterior, &chart, &q),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn tube_quadrature_matches_closed_form() {
        // u ≡ 1 on the unit disk: Eu = η(s/r) on the ring, area element (1+s)
        let r = 0.5;
        let chart = FermiChart::new(DomainSpec::unit_disk(), r).unwrap();
        let c = CutoffFamily::smoothstep();
        let e = ExtendedField::new(chart.clone(), ScalarField::constant(1.0), c);
        let t = h1_norm(Integrand::Extended(&e), Region::TubeExterior, &chart, &QuadSpec::new(32).unwrap())
            .unwrap();
        let g = GaussLegendre::new(64);
        let l2 = TAU * g.composite(0.0, r, 8, |s| c.eta(s / r).powi(2) * (1.0 + s));
        let d2 = TAU * g.composite(0.0, r, 8, |s| (c.eta_prime(s / r) / r).powi(2) * (1.0 + s));
        assert!((t.l2_sq - l2).abs() < 1e-8 * l2);
        assert!((t.grad_l2_sq - d2).abs() < 1e-6 * d2, "{} vs {d2}", t.grad_l2_sq);
    }

    #[test]
    fn frame_identity_cross_check() {
        // |∇Eu|² from finite differences vs. the normal/tangential split
        // through Jacobi fields
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let chart = FermiChart::new(blob(), 0.25).unwrap();
        let u = ScalarField::random(&mut rng);
        let cut = CutoffFamily::smoothstep();
        let e = ExtendedField::new(chart.clone(), u.clone(), cut);
        let r = chart.radius();
        let unit = |t: f64| {
            let b = chart.boundary_point(t).unwrap();
            let p = b.point;
            let (c, s) = (p.theta.cos(), p.theta.sin());
            // Cartesian outward normal
            [b.normal[0] * c - p.r * b.normal[1] * s, b.normal[0] * s + p.r * b.normal[1] * c]
        };
        for k in 0..20 {
            let theta = rng.gen_range(0.0..TAU);
            let s = rng.gen_range(0.01..0.95) * r;
            let nu = unit(theta);
            let tau = [-nu[1], nu[0]];
            let grad_at = |t: f64| {
                let p = chart.domain().normal_point(t, theta).unwrap();
                let g = (u.gradient)(p.to_cartesian());
                (g[0] * nu[0] + g[1] * nu[1], g[0] * tau[0] + g[1] * tau[1])
            };
            let (n1, t1) = grad_at(-s);
            let (n2, t2) = grad_at(-s / 2.0);
            let p1 = chart.domain().normal_point(-s, theta).unwrap();
            let p2 = chart.domain().normal_point(-s / 2.0, theta).unwrap();
            let base = -3.0 * u.eval(&p1) + 4.0 * u.eval(&p2);
            let eta = cut.eta(s / r);
            let normal = (3.0 * n1 - 2.0 * n2) * eta + base * cut.eta_prime(s / r) / r;
            let j = |x: f64| chart.volume_element_ratio(theta, x).unwrap();
            let tangential = eta * (-3.0 * j(-s) * t1 + 4.0 * j(-s / 2.0) * t2) / j(s);
            let frame = normal * normal + tangential * tangential;

            let h = 1e-5;
            let speed = chart.boundary_point(theta).unwrap().speed;
            let ds = (e.eval_fermi(s + h, theta).unwrap() - e.eval_fermi(s - h, theta).unwrap()) / (2.0 * h);
            let dt = (e.eval_fermi(s, theta + h).unwrap() - e.eval_fermi(s, theta - h).unwrap()) / (2.0 * h);
            let fdv = ds * ds + (dt / (speed * j(s))).powi(2);
            assert!((frame - fdv).abs() < 1e-4 * (1.0 + fdv), "sample {k}: {frame} vs {fdv}");
        }
    }

    #[test]
    fn one_dimensional_examples() {
        let c = CutoffFamily::smoothstep();
        let z = verify_1d_inequality(&Trace::constant(0.0), 1.0, &c, 32).unwrap();
        assert_eq!((z.lhs, z.rhs, z.ratio), (0.0, 0.0, 0.0));
        let one = verify_1d_inequality(&Trace::constant(1.0), 1.0, &c, 32).unwrap();
        assert_relative_eq!(one.rhs, 1558.0, epsilon = 1e-10);
        assert!(one.ratio < 1.0);
        let g = GaussLegendre::new(64);
        let lhs = g.composite(0.0, 1.0, 4, |s| c.eta(s).powi(2) + c.eta_prime(s).powi(2));
        assert_relative_eq!(one.lhs, lhs, epsilon = 1e-12);
    }

    #[test]
    fn random_traces_satisfy_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for r in [0.25, 0.5, 1.0] {
            for _ in 0..30 {
                let t = Trace::random_fourier(&mut rng, r, 6);
                let v = verify_1d_inequality(&t, r, &CutoffFamily::smoothstep(), 32).unwrap();
                assert!(v.ratio < 1.0, "{v:?}");
            }
        }
    }

    #[test]
    fn operator_norm_on_unit_disk() {
        let chart = FermiChart::new(DomainSpec::unit_disk(), 0.5).unwrap();
        let q = QuadSpec::new(24).unwrap();
        let samples = vec![
            ScalarField::constant(1.0),
            ScalarField::affine(0.0, [1.0, 0.0]),
            ScalarField::affine(0.3, [0.0, 1.0]),
            ScalarField::constant(0.0),
        ];
        let est = operator_norm_estimate(&chart, &CutoffFamily::smoothstep(), &samples, &q).unwrap();
        assert_relative_eq!(est.distortion, 3.0, epsilon = 1e-9);
        assert_relative_eq!(est.bound, 1.0 + 3.0 * (82.0 + 164.0 * 9.0 / 0.25), epsilon = 1e-9);
        assert!(est.max_ratio <= est.bound);
        assert_eq!(est.per_sample[3], 0.0);
        assert!(est.per_sample[0] > 1.0);

        let bad = FermiChart::new(DomainSpec::unit_disk(), 1.2).unwrap();
        assert!(matches!(
            operator_norm_estimate(&bad, &CutoffFamily::smoothstep(), &samples, &q),
            Err(Error::Regularity(_))
        ));
    }

    #[test]
    fn field_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let u = ScalarField::random(&mut rng);
            for _ in 0..10 {
                let x = [rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7)];
                let h = 1e-5;
                let g = (u.gradient)(x);
                let fx = (u.eval_xy([x[0] + h, x[1]]) - u.eval_xy([x[0] - h, x[1]])) / (2.0 * h);
                let fy = (u.eval_xy([x[0], x[1] + h]) - u.eval_xy([x[0], x[1] - h])) / (2.0 * h);
                let scale = g[0].hypot(g[1]).max(1e-3);
                assert!((fx - g[0]).abs() < 1e-5 * scale && (fy - g[1]).abs() < 1e-5 * scale);
            }
        }
    }
}
