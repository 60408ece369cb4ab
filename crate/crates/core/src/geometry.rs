//! Analytic model surfaces.
//!
//! Every surface is written in a single rotationally symmetric chart with
//! coordinates `(r, theta)` and metric `dr² + f(r)² dθ²`. Constant curvature
//! surfaces use geodesic polar coordinates (`f = sn_kappa`), warped products
//! use a user supplied profile `f`. Gauss curvature is `-f''/f` in both cases.
//!
//! Constant curvature surfaces additionally carry closed forms for distance
//! and the exponential map, computed in the standard embeddings (plane,
//! round sphere of radius `1/sqrt(kappa)`, hyperboloid of radius
//! `1/sqrt(-kappa)`).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{dopri5, StepControl};

pub const DEFAULT_TOL: f64 = 1e-10;

/// A point in chart coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub r: f64,
    pub theta: f64,
}

impl Point {
    pub const fn new(r: f64, theta: f64) -> Self {
        Self { r, theta }
    }

    /// Polar point of a Cartesian pair; meaningful for flat charts.
    pub fn from_cartesian(x: f64, y: f64) -> Self {
        Self {
            r: x.hypot(y),
            theta: y.atan2(x),
        }
    }

    pub fn to_cartesian(self) -> [f64; 2] {
        [self.r * self.theta.cos(), self.r * self.theta.sin()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicState {
    pub position: Point,
    /// `(dr/ds, dθ/ds)`
    pub velocity: [f64; 2],
    pub arclength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiValue {
    pub value: f64,
    pub derivative: f64,
}

impl JacobiValue {
    pub const fn new(value: f64, derivative: f64) -> Self {
        Self { value, derivative }
    }
}

/// Warping function `f(r) = Σ poly[k] r^k + cosh·cosh(r) + sinh·sinh(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpProfile {
    pub poly: Vec<f64>,
    #[serde(default)]
    pub cosh: f64,
    #[serde(default)]
    pub sinh: f64,
}

impl WarpProfile {
    pub fn cosh() -> Self {
        Self {
            poly: vec![],
            cosh: 1.0,
            sinh: 0.0,
        }
    }

    pub fn polynomial(poly: Vec<f64>) -> Self {
        Self {
            poly,
            cosh: 0.0,
            sinh: 0.0,
        }
    }

    /// `k`-th derivative, `k <= 3`.
    pub fn derivative(&self, k: usize, r: f64) -> f64 {
        let mut poly = 0.0;
        for (i, &c) in self.poly.iter().enumerate().skip(k) {
            let falling: f64 = (0..k).map(|j| (i - j) as f64).product();
            poly += c * falling * r.powi((i - k) as i32);
        }
        let (ch, sh) = (r.cosh(), r.sinh());
        let hyp = if k % 2 == 0 {
            self.cosh * ch + self.sinh * sh
        } else {
            self.cosh * sh + self.sinh * ch
        };
        poly + hyp
    }

    pub fn value(&self, r: f64) -> f64 {
        self.derivative(0, r)
    }

    /// `f(0) = 0, f'(0) = 1`: the chart origin is a smooth pole.
    pub fn has_pole(&self) -> bool {
        self.value(0.0).abs() < 1e-14 && (self.derivative(1, 0.0) - 1.0).abs() < 1e-14
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceKind {
    Constant { kappa: f64 },
    Warped { profile: WarpProfile, r_min: f64, r_max: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSurface {
    kind: SurfaceKind,
    dim: usize,
}

/// `sn_kappa(r)`: solution of `y'' + kappa y = 0`, `y(0) = 0`, `y'(0) = 1`.
pub fn sn(kappa: f64, r: f64) -> f64 {
    if kappa > 0.0 {
        let q = kappa.sqrt();
        (q * r).sin() / q
    } else if kappa < 0.0 {
        let q = (-kappa).sqrt();
        (q * r).sinh() / q
    } else {
        r
    }
}

/// `sn_kappa'(r)`.
pub fn cs(kappa: f64, r: f64) -> f64 {
    if kappa > 0.0 {
        (kappa.sqrt() * r).cos()
    } else if kappa < 0.0 {
        ((-kappa).sqrt() * r).cosh()
    } else {
        1.0
    }
}

type Vec3 = [f64; 3];

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(s: f64, a: Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

impl ModelSurface {
    pub fn constant(kappa: f64) -> Self {
        Self {
            kind: SurfaceKind::Constant { kappa },
            dim: 2,
        }
    }

    pub fn flat() -> Self {
        Self::constant(0.0)
    }

    /// Warped product on `(r_min, r_max)`; `f` must be positive there
    /// (a pole at `r_min = 0` is allowed).
    pub fn warped(profile: WarpProfile, r_min: f64, r_max: f64) -> Result<Self> {
        if !(r_min < r_max) {
            return Err(Error::InvalidSurface(format!(
                "empty radial range [{r_min}, {r_max}]"
            )));
        }
        let pole = r_min == 0.0 && profile.has_pole();
        let probes = 257;
        for i in 0..probes {
            let t = i as f64 / (probes - 1) as f64;
            let hi = if r_max.is_finite() { r_max } else { r_min + 50.0 };
            let r = r_min + t * (hi - r_min);
            if pole && r == 0.0 {
                continue;
            }
            if profile.value(r) <= 0.0 && r < r_max {
                return Err(Error::InvalidSurface(format!(
                    "warping function is not positive at r = {r}"
                )));
            }
        }
        Ok(Self {
            kind: SurfaceKind::Warped {
                profile,
                r_min,
                r_max,
            },
            dim: 2,
        })
    }

    /// Sets the dimension entering volume exponents; 3 is only allowed for
    /// constant curvature.
    pub fn with_dimension(mut self, n: usize) -> Result<Self> {
        match (n, &self.kind) {
            (2, _) | (3, SurfaceKind::Constant { .. }) => {
                self.dim = n;
                Ok(self)
            }
            _ => Err(Error::InvalidSurface(format!(
                "dimension {n} is not supported for this surface"
            ))),
        }
    }

    pub fn kind(&self) -> &SurfaceKind {
        &self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn kappa(&self) -> Option<f64> {
        match self.kind {
            SurfaceKind::Constant { kappa } => Some(kappa),
            SurfaceKind::Warped { .. } => None,
        }
    }

    /// Whether the chart origin `r = 0` is a smooth pole.
    pub fn has_pole(&self) -> bool {
        match &self.kind {
            SurfaceKind::Constant { .. } => true,
            SurfaceKind::Warped { profile, r_min, .. } => *r_min == 0.0 && profile.has_pole(),
        }
    }

    /// Radial extent `[lo, hi)` of the chart.
    pub fn radial_range(&self) -> (f64, f64) {
        match &self.kind {
            SurfaceKind::Constant { kappa } if *kappa > 0.0 => (0.0, PI / kappa.sqrt()),
            SurfaceKind::Constant { .. } => (0.0, f64::INFINITY),
            SurfaceKind::Warped { r_min, r_max, .. } => (*r_min, *r_max),
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        let (lo, hi) = self.radial_range();
        p.r.is_finite() && p.theta.is_finite() && p.r >= lo && p.r < hi
    }

    fn check(&self, p: &Point) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "(r, theta) = ({}, {}) outside radial range {:?}",
                p.r,
                p.theta,
                self.radial_range()
            )))
        }
    }

    /// `(f, f', f'')` at radius `r`.
    pub fn warp(&self, r: f64) -> (f64, f64, f64) {
        match &self.kind {
            SurfaceKind::Constant { kappa } => {
                let s = sn(*kappa, r);
                (s, cs(*kappa, r), -kappa * s)
            }
            SurfaceKind::Warped { profile, .. } => (
                profile.value(r),
                profile.derivative(1, r),
                profile.derivative(2, r),
            ),
        }
    }

    /// Curvature as a function of the radial coordinate only.
    fn curvature_at_radius(&self, r: f64) -> Result<f64> {
        match &self.kind {
            SurfaceKind::Constant { kappa } => Ok(*kappa),
            SurfaceKind::Warped { profile, .. } => {
                let f = profile.value(r);
                if r == 0.0 && self.has_pole() {
                    // l'Hôpital: f(0) = f''(0) = 0 on a smooth pole
                    return Ok(-profile.derivative(3, 0.0) / profile.derivative(1, 0.0));
                }
                if f <= 0.0 {
                    return Err(Error::InvalidSurface(format!(
                        "warping function is {f} <= 0 at r = {r}"
                    )));
                }
                Ok(-profile.derivative(2, r) / f)
            }
        }
    }

    pub fn metric_at(&self, p: &Point) -> Result<[[f64; 2]; 2]> {
        self.check(p)?;
        let (f, _, _) = self.warp(p.r);
        if f <= 0.0 && !(p.r == 0.0 && self.has_pole()) {
            return Err(Error::InvalidSurface(format!(
                "warping function is {f} <= 0 at r = {}",
                p.r
            )));
        }
        Ok([[1.0, 0.0], [0.0, f * f]])
    }

    pub fn gauss_curvature(&self, p: &Point) -> Result<f64> {
        self.check(p)?;
        self.curvature_at_radius(p.r)
    }

    /// Squared length of a chart tangent vector at `p`.
    pub fn norm_sq(&self, p: &Point, v: [f64; 2]) -> f64 {
        let (f, _, _) = self.warp(p.r);
        v[0] * v[0] + f * f * v[1] * v[1]
    }

    /// Unit tangent at `p` making angle `phi` with the frame
    /// `(∂_r, ∂_θ / f)`; at a pole the direction is the chart ray `theta = phi`.
    pub fn direction(&self, p: &Point, phi: f64) -> (Point, [f64; 2]) {
        if p.r == 0.0 && self.has_pole() {
            return (Point::new(0.0, phi), [1.0, 0.0]);
        }
        let (f, _, _) = self.warp(p.r);
        (*p, [phi.cos(), phi.sin() / f])
    }

    fn geodesic_rhs(&self, y: &[f64; 4]) -> Result<[f64; 4]> {
        let (f, fp, _) = self.warp(y[0]);
        let theta_acc = if y[3] == 0.0 {
            0.0
        } else {
            if f <= 0.0 {
                return Err(Error::Integration(format!(
                    "non-radial geodesic reached the chart singularity at r = {}",
                    y[0]
                )));
            }
            -2.0 * fp / f * y[2] * y[3]
        };
        Ok([y[2], y[3], f * fp * y[3] * y[3], theta_acc])
    }

    /// Integrates the unit-speed geodesic from `start` over `length`.
    pub fn integrate_geodesic(
        &self,
        start: &GeodesicState,
        length: f64,
        tol: f64,
    ) -> Result<Vec<GeodesicState>> {
        self.integrate_geodesic_with(start, length, &GeodesicOptions::with_tol(tol))
    }

    pub fn integrate_geodesic_with(
        &self,
        start: &GeodesicState,
        length: f64,
        opts: &GeodesicOptions,
    ) -> Result<Vec<GeodesicState>> {
        if !(opts.tol > 0.0) {
            return Err(Error::Parameter(format!("tol must be positive, got {}", opts.tol)));
        }
        if !(length >= 0.0) {
            return Err(Error::Parameter(format!("length must be >= 0, got {length}")));
        }
        self.check(&start.position)?;
        let y0 = [
            start.position.r,
            start.position.theta,
            start.velocity[0],
            start.velocity[1],
        ];
        let s0 = start.arclength;
        let mut out = vec![*start];
        let control = StepControl {
            tol: opts.tol,
            max_steps: opts.max_steps,
        };
        let result = dopri5(
            |_, y: &[f64; 4]| self.geodesic_rhs(y),
            y0,
            s0,
            s0 + length,
            &control,
            |s, y| {
                let mut y = *y;
                let p = Point::new(y[0], y[1]);
                if !self.contains(&p) {
                    return Err(Error::Truncated {
                        reached: s - s0,
                        partial: Vec::new(),
                    });
                }
                if opts.renormalize {
                    let n = self.norm_sq(&p, [y[2], y[3]]).sqrt();
                    y[2] /= n;
                    y[3] /= n;
                }
                out.push(GeodesicState {
                    position: p,
                    velocity: [y[2], y[3]],
                    arclength: s,
                });
                Ok(if opts.renormalize { Some(y) } else { None })
            },
        );
        match result {
            Ok(_) => Ok(out),
            Err(Error::Truncated { .. }) => Err(Error::Truncated {
                reached: out.last().map_or(0.0, |g| g.arclength - s0),
                partial: out,
            }),
            Err(e) => Err(e),
        }
    }

    /// Transports a normal Jacobi field along `trajectory`, solving
    /// `J'' + K(γ(s)) J = 0`; returns the value at the trajectory's end.
    pub fn jacobi_transport(
        &self,
        trajectory: &[GeodesicState],
        initial: JacobiValue,
        tol: f64,
    ) -> Result<JacobiValue> {
        let profile = self.jacobi_profile(trajectory, initial, tol)?;
        Ok(profile.last().map(|(_, j)| *j).unwrap_or(initial))
    }

    /// Jacobi field at every accepted step of the coupled geodesic/Jacobi
    /// system started from `trajectory[0]`.
    pub fn jacobi_profile(
        &self,
        trajectory: &[GeodesicState],
        initial: JacobiValue,
        tol: f64,
    ) -> Result<Vec<(f64, JacobiValue)>> {
        let (first, last) = match (trajectory.first(), trajectory.last()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Parameter("empty trajectory".into())),
        };
        let y0 = [
            first.position.r,
            first.position.theta,
            first.velocity[0],
            first.velocity[1],
            initial.value,
            initial.derivative,
        ];
        let mut out = vec![(first.arclength, initial)];
        let control = StepControl {
            tol,
            max_steps: 1_000_000,
        };
        dopri5(
            |_, y: &[f64; 6]| {
                let g = self.geodesic_rhs(&[y[0], y[1], y[2], y[3]])?;
                let k = self.curvature_at_radius(y[0])?;
                Ok([g[0], g[1], g[2], g[3], y[5], -k * y[4]])
            },
            y0,
            first.arclength,
            last.arclength,
            &control,
            |s, y| {
                out.push((s, JacobiValue::new(y[4], y[5])));
                Ok(None)
            },
        )?;
        Ok(out)
    }

    /// Exponential map `exp_p(s·v)` for a unit chart vector `v`.
    pub fn exp(&self, p: &Point, v: [f64; 2], s: f64) -> Result<Point> {
        match self.kind {
            SurfaceKind::Constant { kappa } => {
                let m = Embedded::new(kappa);
                let x = m.embed(p);
                let dv = m.push_tangent(p, v);
                let (y, _) = m.geodesic(x, dv, s);
                Ok(m.chart(y))
            }
            SurfaceKind::Warped { .. } => {
                let (start, v) = if s < 0.0 {
                    (*p, [-v[0], -v[1]])
                } else {
                    (*p, v)
                };
                let state = GeodesicState {
                    position: start,
                    velocity: v,
                    arclength: 0.0,
                };
                let traj = self.integrate_geodesic(&state, s.abs(), 1e-12)?;
                Ok(traj.last().map(|g| g.position).unwrap_or(*p))
            }
        }
    }

    /// Exponential map along the frame direction `phi` at `p`.
    pub fn exp_dir(&self, p: &Point, phi: f64, s: f64) -> Result<Point> {
        let (base, v) = self.direction(p, phi);
        if base.r == 0.0 && self.has_pole() && matches!(self.kind, SurfaceKind::Warped { .. }) {
            // radial lines from a pole are geodesics
            return Ok(if s >= 0.0 {
                Point::new(s, phi)
            } else {
                Point::new(-s, phi + PI)
            });
        }
        self.exp(&base, v, s)
    }

    /// Geodesic distance; closed form on constant curvature surfaces, and on
    /// warped surfaces only from the pole.
    pub fn distance(&self, p: &Point, q: &Point) -> Result<f64> {
        match self.kind {
            SurfaceKind::Constant { kappa } => {
                let m = Embedded::new(kappa);
                Ok(m.distance(m.embed(p), m.embed(q)))
            }
            SurfaceKind::Warped { .. } => {
                if self.has_pole() && p.r == 0.0 {
                    Ok(q.r)
                } else if self.has_pole() && q.r == 0.0 {
                    Ok(p.r)
                } else {
                    Err(Error::Parameter(
                        "closed-form distance on warped surfaces is only available from the pole"
                            .into(),
                    ))
                }
            }
        }
    }

    /// Distance from `center` to `p` and the frame angle of the initial
    /// direction of the connecting geodesic.
    pub fn polar_about(&self, center: &Point, p: &Point) -> Result<(f64, f64)> {
        match self.kind {
            SurfaceKind::Constant { kappa } => {
                let m = Embedded::new(kappa);
                let x = m.embed(center);
                let y = m.embed(p);
                let d = m.distance(x, y);
                let w = m.log_direction(x, y);
                let (e1, e2) = m.frame(center);
                Ok((d, m.dot(w, e2).atan2(m.dot(w, e1))))
            }
            SurfaceKind::Warped { .. } if center.r == 0.0 && self.has_pole() => Ok((p.r, p.theta)),
            SurfaceKind::Warped { .. } => Err(Error::Parameter(
                "geodesic polar coordinates on warped surfaces are only available about the pole"
                    .into(),
            )),
        }
    }

    /// Velocity (chart components) at `exp_c(s·u(phi))` of the geodesic
    /// leaving `center` in frame direction `phi`.
    pub fn radial_velocity(&self, center: &Point, phi: f64, s: f64) -> Result<(Point, [f64; 2])> {
        match self.kind {
            SurfaceKind::Constant { kappa } => {
                let m = Embedded::new(kappa);
                let x = m.embed(center);
                let (e1, e2) = m.frame(center);
                let u = add(scale(phi.cos(), e1), scale(phi.sin(), e2));
                let (y, v) = m.geodesic(x, u, s);
                let p = m.chart(y);
                Ok((p, m.pull_tangent(&p, v)))
            }
            SurfaceKind::Warped { .. } if center.r == 0.0 && self.has_pole() => {
                Ok((Point::new(s, phi), [1.0, 0.0]))
            }
            SurfaceKind::Warped { .. } => Err(Error::Parameter(
                "radial geodesics on warped surfaces are only available from the pole".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GeodesicOptions {
    pub tol: f64,
    /// Rescale the velocity to unit length after every accepted step.
    pub renormalize: bool,
    pub max_steps: usize,
}

impl GeodesicOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            renormalize: false,
            max_steps: 1_000_000,
        }
    }
}

/// Constant curvature surface in its standard embedding.
struct Embedded {
    kappa: f64,
    radius: f64,
}

impl Embedded {
    fn new(kappa: f64) -> Self {
        let radius = if kappa == 0.0 {
            f64::INFINITY
        } else {
            1.0 / kappa.abs().sqrt()
        };
        Self { kappa, radius }
    }

    fn dot(&self, a: Vec3, b: Vec3) -> f64 {
        let third = if self.kappa > 0.0 {
            a[2] * b[2]
        } else if self.kappa < 0.0 {
            -a[2] * b[2]
        } else {
            0.0
        };
        a[0] * b[0] + a[1] * b[1] + third
    }

    fn embed(&self, p: &Point) -> Vec3 {
        let (c, s) = (p.theta.cos(), p.theta.sin());
        let rad = self.radius;
        if self.kappa > 0.0 {
            let a = p.r / rad;
            [rad * a.sin() * c, rad * a.sin() * s, rad * a.cos()]
        } else if self.kappa < 0.0 {
            let a = p.r / rad;
            [rad * a.sinh() * c, rad * a.sinh() * s, rad * a.cosh()]
        } else {
            [p.r * c, p.r * s, 0.0]
        }
    }

    /// `(∂_r X, ∂_θ X)`
    fn coordinate_tangents(&self, p: &Point) -> (Vec3, Vec3) {
        let (c, s) = (p.theta.cos(), p.theta.sin());
        let f = sn(self.kappa, p.r);
        let fp = cs(self.kappa, p.r);
        let third = if self.kappa > 0.0 {
            -(p.r / self.radius).sin()
        } else if self.kappa < 0.0 {
            (p.r / self.radius).sinh()
        } else {
            0.0
        };
        ([fp * c, fp * s, third], [-f * s, f * c, 0.0])
    }

    fn push_tangent(&self, p: &Point, v: [f64; 2]) -> Vec3 {
        let (dr, dth) = self.coordinate_tangents(p);
        if p.r == 0.0 {
            // at the pole only the radial part is meaningful
            return scale(v[0], dr);
        }
        add(scale(v[0], dr), scale(v[1], dth))
    }

    fn pull_tangent(&self, p: &Point, v: Vec3) -> [f64; 2] {
        let (dr, dth) = self.coordinate_tangents(p);
        let f = sn(self.kappa, p.r);
        if f == 0.0 {
            return [self.dot(v, dr), 0.0];
        }
        [self.dot(v, dr), self.dot(v, dth) / (f * f)]
    }

    fn chart(&self, x: Vec3) -> Point {
        let rho = x[0].hypot(x[1]);
        let theta = if rho == 0.0 { 0.0 } else { x[1].atan2(x[0]) };
        let r = if self.kappa > 0.0 {
            self.radius * rho.atan2(x[2])
        } else if self.kappa < 0.0 {
            self.radius * (rho / self.radius).asinh()
        } else {
            rho
        };
        Point::new(r, theta)
    }

    fn geodesic(&self, x: Vec3, v: Vec3, s: f64) -> (Vec3, Vec3) {
        let rad = self.radius;
        if self.kappa > 0.0 {
            let a = s / rad;
            (
                add(scale(a.cos(), x), scale(rad * a.sin(), v)),
                add(scale(-a.sin() / rad, x), scale(a.cos(), v)),
            )
        } else if self.kappa < 0.0 {
            let a = s / rad;
            (
                add(scale(a.cosh(), x), scale(rad * a.sinh(), v)),
                add(scale(a.sinh() / rad, x), scale(a.cosh(), v)),
            )
        } else {
            (add(x, scale(s, v)), v)
        }
    }

    fn distance(&self, x: Vec3, y: Vec3) -> f64 {
        let d = sub(x, y);
        if self.kappa > 0.0 {
            let cross = [
                x[1] * y[2] - x[2] * y[1],
                x[2] * y[0] - x[0] * y[2],
                x[0] * y[1] - x[1] * y[0],
            ];
            let cn = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
            self.radius * cn.atan2(x[0] * y[0] + x[1] * y[1] + x[2] * y[2])
        } else if self.kappa < 0.0 {
            let chord = self.dot(d, d).max(0.0).sqrt();
            2.0 * self.radius * (chord / (2.0 * self.radius)).asinh()
        } else {
            (d[0] * d[0] + d[1] * d[1]).sqrt()
        }
    }

    /// Unnormalised initial direction at `x` of the geodesic towards `y`.
    fn log_direction(&self, x: Vec3, y: Vec3) -> Vec3 {
        if self.kappa == 0.0 {
            return sub(y, x);
        }
        let r2 = self.radius * self.radius;
        let xy = self.dot(x, y);
        if self.kappa > 0.0 {
            sub(y, scale(xy / r2, x))
        } else {
            add(y, scale(xy / r2, x))
        }
    }

    /// Orthonormal frame `(∂_r, ∂_θ/f)` at `p`, or the chart axes at the pole.
    fn frame(&self, p: &Point) -> (Vec3, Vec3) {
        if p.r == 0.0 {
            let (e1, _) = self.coordinate_tangents(&Point::new(0.0, 0.0));
            let (e2, _) = self.coordinate_tangents(&Point::new(0.0, PI / 2.0));
            return (e1, e2);
        }
        let (dr, dth) = self.coordinate_tangents(p);
        (dr, scale(1.0 / sn(self.kappa, p.r), dth))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state(r: f64, theta: f64, v: [f64; 2]) -> GeodesicState {
        GeodesicState {
            position: Point::new(r, theta),
            velocity: v,
            arclength: 0.0,
        }
    }

    #[test]
    fn metric_examples() {
        let g = ModelSurface::flat().metric_at(&Point::new(1.0, 0.0)).unwrap();
        assert_eq!(g, [[1.0, 0.0], [0.0, 1.0]]);
        let g = ModelSurface::constant(1.0)
            .metric_at(&Point::new(PI / 2.0, 0.3))
            .unwrap();
        assert_relative_eq!(g[1][1], 1.0, epsilon = 1e-15);
        let cosh = ModelSurface::warped(WarpProfile::cosh(), -5.0, 5.0).unwrap();
        let g = cosh.metric_at(&Point::new(1.0, 0.0)).unwrap();
        assert_relative_eq!(g[1][1], 1f64.cosh().powi(2), epsilon = 1e-14);
        assert_relative_eq!(g[1][1], 2.381_097_845_541_816, epsilon = 1e-12);
    }

    #[test]
    fn metric_outside_chart_is_domain_error() {
        let sphere = ModelSurface::constant(1.0);
        assert!(matches!(
            sphere.metric_at(&Point::new(4.0, 0.0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            ModelSurface::flat().metric_at(&Point::new(-0.1, 0.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn curvature_examples() {
        let hyp = ModelSurface::constant(-1.0);
        assert_eq!(hyp.gauss_curvature(&Point::new(0.7, 2.0)).unwrap(), -1.0);
        let cosh = ModelSurface::warped(WarpProfile::cosh(), -5.0, 5.0).unwrap();
        for r in [-2.0, 0.0, 0.5, 3.0] {
            assert_relative_eq!(
                cosh.gauss_curvature(&Point::new(r, 0.0)).unwrap(),
                -1.0,
                epsilon = 1e-14
            );
        }
        let cubic =
            ModelSurface::warped(WarpProfile::polynomial(vec![0.0, 1.0, 0.0, 0.1]), 0.0, 10.0)
                .unwrap();
        // -f''/f = -0.3 / 0.5125
        assert_relative_eq!(
            cubic.gauss_curvature(&Point::new(0.5, 0.0)).unwrap(),
            -0.585_365_853_658_536_6,
            epsilon = 1e-14
        );
        // pole limit -f'''(0)/f'(0)
        assert_relative_eq!(
            cubic.gauss_curvature(&Point::new(0.0, 0.0)).unwrap(),
            -0.6,
            epsilon = 1e-14
        );
    }

    #[test]
    fn nonpositive_warp_is_rejected() {
        let bad = WarpProfile::polynomial(vec![1.0, -1.0]);
        assert!(matches!(
            ModelSurface::warped(bad, 0.0, 2.0),
            Err(Error::InvalidSurface(_))
        ));
    }

    #[test]
    fn flat_geodesic_from_origin() {
        let flat = ModelSurface::flat();
        let traj = flat
            .integrate_geodesic(&state(0.0, 0.0, [1.0, 0.0]), 2.0, 1e-10)
            .unwrap();
        let end = traj.last().unwrap();
        assert_relative_eq!(end.position.r, 2.0, epsilon = 1e-12);
        assert_relative_eq!(end.position.theta, 0.0, epsilon = 1e-12);
        assert_relative_eq!(end.arclength, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn sphere_equator_reaches_antipode() {
        let sphere = ModelSurface::constant(1.0);
        let traj = sphere
            .integrate_geodesic(&state(PI / 2.0, 0.0, [0.0, 1.0]), PI, 1e-10)
            .unwrap();
        let end = traj.last().unwrap().position;
        assert!((end.r - PI / 2.0).abs() < 1e-8);
        assert!((end.theta - PI).abs() < 1e-8);
    }

    #[test]
    fn hyperbolic_radial_geodesic() {
        let hyp = ModelSurface::constant(-1.0);
        let traj = hyp
            .integrate_geodesic(&state(0.4, 1.0, [1.0, 0.0]), 1.7, 1e-10)
            .unwrap();
        let end = traj.last().unwrap().position;
        assert_relative_eq!(end.r, 2.1, epsilon = 1e-12);
        assert_eq!(end.theta, 1.0);
    }

    #[test]
    fn leaving_the_chart_truncates() {
        let flat = ModelSurface::flat();
        let err = flat
            .integrate_geodesic(&state(1.0, 0.0, [-1.0, 0.0]), 3.0, 1e-10)
            .unwrap_err();
        match err {
            Error::Truncated { reached, partial } => {
                assert!(reached > 0.0 && reached <= 1.0, "{reached}");
                assert!(partial.iter().all(|g| g.position.r >= 0.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn jacobi_closed_forms() {
        let flat = ModelSurface::flat();
        let traj = flat
            .integrate_geodesic(&state(1.0, 0.0, [0.0, 1.0]), 0.8, 1e-10)
            .unwrap();
        let j = flat
            .jacobi_transport(&traj, JacobiValue::new(0.0, 1.0), 1e-10)
            .unwrap();
        assert_relative_eq!(j.value, 0.8, epsilon = 1e-12);

        let sphere = ModelSurface::constant(1.0);
        let traj = sphere
            .integrate_geodesic(&state(PI / 2.0, 0.0, [0.0, 1.0]), 1.3, 1e-10)
            .unwrap();
        let j = sphere
            .jacobi_transport(&traj, JacobiValue::new(1.0, 0.0), 1e-10)
            .unwrap();
        assert_relative_eq!(j.value, 1.3f64.cos(), epsilon = 1e-10);

        let cosh = ModelSurface::warped(WarpProfile::cosh(), -5.0, 5.0).unwrap();
        let traj = cosh
            .integrate_geodesic(&state(0.0, 0.0, [1.0, 0.0]), 2.0, 1e-10)
            .unwrap();
        let j = cosh
            .jacobi_transport(&traj, JacobiValue::new(1.0, 0.0), 1e-10)
            .unwrap();
        assert!((j.value - 2f64.cosh()).abs() < 1e-8);
    }

    #[test]
    fn closed_form_exp_and_distance_agree() {
        for kappa in [1.0, 0.0, -1.0, 0.25] {
            let m = ModelSurface::constant(kappa);
            let p = Point::new(0.7, 0.4);
            let q = m.exp_dir(&p, 1.1, 0.9).unwrap();
            assert_relative_eq!(m.distance(&p, &q).unwrap(), 0.9, epsilon = 1e-12);
            let (d, phi) = m.polar_about(&p, &q).unwrap();
            assert_relative_eq!(d, 0.9, epsilon = 1e-12);
            assert_relative_eq!(phi, 1.1, epsilon = 1e-10);
        }
    }

    fn curvature_fd(m: &ModelSurface, p: &Point) -> f64 {
        // K = -(sqrt G)_rr / sqrt G from the metric alone
        let h = 1e-4;
        let root = |r: f64| m.metric_at(&Point::new(r, p.theta)).unwrap()[1][1].sqrt();
        let g = root(p.r);
        -(root(p.r + h) - 2.0 * g + root(p.r - h)) / (h * h) / g
    }

    #[test]
    fn curvature_from_metric_matches_kappa() {
        for kappa in [-2.0, -1.0, 0.0, 0.5, 1.0] {
            let m = ModelSurface::constant(kappa);
            for r in [0.3, 0.8, 1.4] {
                let k = curvature_fd(&m, &Point::new(r, 0.2));
                assert!((k - kappa).abs() < 1e-6, "kappa {kappa}, r {r}: {k}");
            }
        }
    }

    fn surfaces() -> Vec<ModelSurface> {
        vec![
            ModelSurface::constant(1.0),
            ModelSurface::constant(-1.0),
            ModelSurface::flat(),
            ModelSurface::warped(WarpProfile::cosh(), -6.0, 6.0).unwrap(),
            ModelSurface::warped(WarpProfile::polynomial(vec![0.0, 1.0, 0.0, 0.1]), 0.0, 10.0)
                .unwrap(),
        ]
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn unit_speed_is_conserved(
            which in 0usize..5, r in 0.6f64..1.2, theta in 0.0f64..6.28,
            phi in 0.0f64..6.28, len in 0.1f64..1.2,
        ) {
            let m = &surfaces()[which];
            let p = Point::new(r, theta);
            let (base, v) = m.direction(&p, phi);
            let start = GeodesicState { position: base, velocity: v, arclength: 0.0 };
            match m.integrate_geodesic(&start, len, 1e-10) {
                Ok(traj) => {
                    for g in &traj {
                        let e = m.norm_sq(&g.position, g.velocity) - 1.0;
                        proptest::prop_assert!(e.abs() < 1e-10, "speed error {e}");
                    }
                    proptest::prop_assert!((traj.last().unwrap().arclength - len).abs() < 1e-10);
                    if m.kappa().is_some() {
                        let end = traj.last().unwrap().position;
                        let exact = m.exp(&p, v, len).unwrap();
                        let d = m.distance(&end, &exact).unwrap();
                        proptest::prop_assert!(d < 1e-9, "closed form mismatch {d}");
                    }
                }
                Err(Error::Truncated { .. }) => {}
                Err(e) => return Err(proptest::test_runner::TestCaseError::fail(e.to_string())),
            }
        }

        #[test]
        fn jacobi_is_linear(
            which in 0usize..5, phi in 0.0f64..6.28, a in -2.0f64..2.0, b in -2.0f64..2.0,
        ) {
            let m = &surfaces()[which];
            let (base, v) = m.direction(&Point::new(1.0, 0.5), phi);
            let start = GeodesicState { position: base, velocity: v, arclength: 0.0 };
            let traj = match m.integrate_geodesic(&start, 0.8, 1e-10) {
                Ok(t) => t,
                Err(_) => return Ok(()),
            };
            let j1 = m.jacobi_transport(&traj, JacobiValue::new(1.0, 0.0), 1e-10).unwrap();
            let j2 = m.jacobi_transport(&traj, JacobiValue::new(0.0, 1.0), 1e-10).unwrap();
            let j = m.jacobi_transport(&traj, JacobiValue::new(a, b), 1e-10).unwrap();
            proptest::prop_assert!((j.value - (a * j1.value + b * j2.value)).abs() < 1e-10);
            proptest::prop_assert!((j.derivative - (a * j1.derivative + b * j2.derivative)).abs() < 1e-10);
        }
    }

    #[test]
    fn jacobi_residual_on_dyadic_grid() {
        for m in surfaces() {
            let (base, v) = m.direction(&Point::new(1.0, 0.3), 0.9);
            let start = GeodesicState { position: base, velocity: v, arclength: 0.0 };
            let len = 0.8;
            let traj = m.integrate_geodesic(&start, len, 1e-10).unwrap();
            let init = JacobiValue::new(1.0, 0.4);
            // J on a dyadic grid by re-integrating to each node
            let n = 64;
            let h = len / n as f64;
            let mut js = Vec::new();
            let mut pos = Vec::new();
            for i in 0..=n {
                let s = i as f64 * h;
                let sub = m.integrate_geodesic(&start, s, 1e-12).unwrap();
                js.push(m.jacobi_transport(&sub, init, 1e-12).unwrap().value);
                pos.push(sub.last().unwrap().position);
            }
            let jmax = js.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            for i in 2..n - 1 {
                let k = m.gauss_curvature(&pos[i]).unwrap();
                let d2 = (-js[i + 2] + 16.0 * js[i + 1] - 30.0 * js[i] + 16.0 * js[i - 1]
                    - js[i - 2])
                    / (12.0 * h * h);
                let res = d2 + k * js[i];
                assert!(res.abs() < 1e-6 * jmax, "residual {res}");
            }
            assert!(!traj.is_empty());
        }
    }
}
