//! Smooth domains on model surfaces and their Fermi (normal exponential)
//! coordinates.
//!
//! A domain is either a geodesic disk or, on the flat plane, a star-shaped
//! region `{ρ < ρ(θ)}` with a finite Fourier series `ρ`. The boundary is
//! parametrised by `θ ∈ [0, 2π)`; `ψ(s, θ)` is the point at signed distance
//! `s` along the outward normal geodesic (`s < 0` inside).
//!
//! The second fundamental form `II` is taken w.r.t. the outward normal with
//! the sign that makes normal Jacobi fields satisfy `X(0) = 1, X'(0) = II`;
//! the unit disk has `II = 1`.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::focal_radius;
use crate::error::{Error, Result};
use crate::geometry::{cs, sn, JacobiValue, ModelSurface, Point, SurfaceKind};
use crate::ode::{dopri5, StepControl};

/// `ρ(θ) = cos[0] + Σ_{k≥1} cos[k] cos kθ + sin[k-1] sin kθ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierProfile {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl FourierProfile {
    pub fn circle(radius: f64) -> Self {
        Self {
            cos: vec![radius],
            sin: vec![],
        }
    }

    /// `d^k ρ / dθ^k`, `k ≤ 2`.
    pub fn derivative(&self, k: u32, theta: f64) -> f64 {
        let mut v = if k == 0 {
            self.cos.first().copied().unwrap_or(0.0)
        } else {
            0.0
        };
        let modes = self.cos.len().max(self.sin.len() + 1);
        for m in 1..modes {
            let a = self.cos.get(m).copied().unwrap_or(0.0);
            let b = self.sin.get(m - 1).copied().unwrap_or(0.0);
            let w = m as f64;
            let (c, s) = ((w * theta).cos(), (w * theta).sin());
            v += match k {
                0 => a * c + b * s,
                1 => w * (-a * s + b * c),
                _ => -w * w * (a * c + b * s),
            };
        }
        v
    }

    pub fn value(&self, theta: f64) -> f64 {
        self.derivative(0, theta)
    }

    fn cartesian(&self, theta: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let (r, r1, r2) = (
            self.value(theta),
            self.derivative(1, theta),
            self.derivative(2, theta),
        );
        let (c, s) = (theta.cos(), theta.sin());
        (
            [r * c, r * s],
            [r1 * c - r * s, r1 * s + r * c],
            [r2 * c - 2.0 * r1 * s - r * c, r2 * s + 2.0 * r1 * c - r * s],
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Boundary {
    GeodesicDisk { center: Point, radius: f64 },
    /// Flat plane only.
    RadialProfile(FourierProfile),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub point: Point,
    /// Outward unit normal, chart components.
    pub normal: [f64; 2],
    pub curvature: f64,
    /// `|dγ/dθ|`
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    surface: ModelSurface,
    boundary: Boundary,
}

const BOUNDARY_TOL: f64 = 1e-12;
const PROFILE_PROBES: usize = 4096;
const FOOT_SAMPLES: usize = 512;

fn wrap(theta: f64) -> f64 {
    theta.rem_euclid(TAU)
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

impl DomainSpec {
    pub fn new(surface: ModelSurface, boundary: Boundary) -> Result<Self> {
        match &boundary {
            Boundary::GeodesicDisk { center, radius } => {
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::InvalidDomain(format!(
                        "disk radius must be positive, got {radius}"
                    )));
                }
                if !surface.contains(center) {
                    return Err(Error::InvalidDomain("disk center outside the chart".into()));
                }
                match surface.kind() {
                    SurfaceKind::Constant { kappa } => {
                        if *kappa > 0.0 && *radius >= PI / kappa.sqrt() {
                            return Err(Error::InvalidDomain(format!(
                                "disk radius {radius} covers the whole sphere"
                            )));
                        }
                    }
                    SurfaceKind::Warped { r_max, .. } => {
                        if !(center.r == 0.0 && surface.has_pole()) {
                            return Err(Error::InvalidDomain(
                                "disks on warped surfaces must be centered at the pole".into(),
                            ));
                        }
                        if *radius >= *r_max {
                            return Err(Error::InvalidDomain(format!(
                                "disk radius {radius} exceeds the chart range {r_max}"
                            )));
                        }
                    }
                }
            }
            Boundary::RadialProfile(profile) => {
                if surface.kappa() != Some(0.0) {
                    return Err(Error::InvalidDomain(
                        "radial profiles are only supported on the flat plane".into(),
                    ));
                }
                if profile.cos.is_empty() {
                    return Err(Error::InvalidDomain("empty Fourier profile".into()));
                }
                if profile.cos.iter().chain(&profile.sin).any(|c| !c.is_finite()) {
                    return Err(Error::InvalidDomain("non-finite Fourier coefficient".into()));
                }
                for i in 0..PROFILE_PROBES {
                    let theta = TAU * i as f64 / PROFILE_PROBES as f64;
                    let rho = profile.value(theta);
                    if !(rho > 0.0) {
                        return Err(Error::InvalidDomain(format!(
                            "rho({theta}) = {rho} is not positive"
                        )));
                    }
                }
            }
        }
        Ok(Self { surface, boundary })
    }

    pub fn unit_disk() -> Self {
        Self::new(
            ModelSurface::flat(),
            Boundary::GeodesicDisk {
                center: Point::new(0.0, 0.0),
                radius: 1.0,
            },
        )
        .expect("unit disk is valid")
    }

    pub fn surface(&self) -> &ModelSurface {
        &self.surface
    }

    pub fn boundary(&self) -> &Boundary {
        &self.boundary
    }

    pub fn boundary_point(&self, theta: f64) -> Result<BoundaryPoint> {
        match &self.boundary {
            Boundary::GeodesicDisk { center, radius } => {
                let (point, normal) = self.surface.radial_velocity(center, theta, *radius)?;
                let (f, fp, _) = self.radial_warp(*radius);
                Ok(BoundaryPoint {
                    point,
                    normal,
                    curvature: fp / f,
                    speed: f,
                })
            }
            Boundary::RadialProfile(profile) => {
                let rho = profile.value(theta);
                if !(rho > 0.0) {
                    return Err(Error::InvalidDomain(format!(
                        "rho({theta}) = {rho} is not positive"
                    )));
                }
                let (c, t, _) = profile.cartesian(theta);
                let speed = t[0].hypot(t[1]);
                let nu = [t[1] / speed, -t[0] / speed];
                let point = Point::from_cartesian(c[0], c[1]);
                let (ct, st) = (point.theta.cos(), point.theta.sin());
                let normal = [dot(nu, [ct, st]), dot(nu, [-st, ct]) / point.r];
                Ok(BoundaryPoint {
                    point,
                    normal,
                    curvature: self.profile_curvature(profile, theta),
                    speed,
                })
            }
        }
    }

    fn profile_curvature(&self, profile: &FourierProfile, theta: f64) -> f64 {
        let (r, r1, r2) = (
            profile.value(theta),
            profile.derivative(1, theta),
            profile.derivative(2, theta),
        );
        (r * r + 2.0 * r1 * r1 - r * r2) / (r * r + r1 * r1).powf(1.5)
    }

    /// `(f, f', f'')` of geodesic polar coordinates about the disk center.
    fn radial_warp(&self, rho: f64) -> (f64, f64, f64) {
        match self.surface.kind() {
            SurfaceKind::Constant { kappa } => {
                let s = sn(*kappa, rho);
                (s, cs(*kappa, rho), -kappa * s)
            }
            SurfaceKind::Warped { .. } => self.surface.warp(rho),
        }
    }

    /// `ψ(s, θ)` without a tube-radius check.
    pub fn normal_point(&self, s: f64, theta: f64) -> Result<Point> {
        match &self.boundary {
            Boundary::GeodesicDisk { center, radius } => {
                self.surface.exp_dir(center, theta, radius + s)
            }
            Boundary::RadialProfile(profile) => {
                let [x, y] = self.normal_cartesian(profile, s, theta);
                Ok(Point::from_cartesian(x, y))
            }
        }
    }

    fn normal_cartesian(&self, profile: &FourierProfile, s: f64, theta: f64) -> [f64; 2] {
        let (c, t, _) = profile.cartesian(theta);
        let speed = t[0].hypot(t[1]);
        [c[0] + s * t[1] / speed, c[1] - s * t[0] / speed]
    }

    /// Negative inside, zero on the boundary, positive outside. For disks this
    /// is the signed distance.
    pub fn level(&self, p: &Point) -> Result<f64> {
        match &self.boundary {
            Boundary::GeodesicDisk { center, radius } => {
                Ok(self.surface.distance(center, p)? - radius)
            }
            Boundary::RadialProfile(profile) => {
                let [x, y] = p.to_cartesian();
                Ok(x.hypot(y) - profile.value(y.atan2(x)))
            }
        }
    }

    /// Closed domain membership; points within rounding of `∂Ω` count as
    /// boundary points.
    pub fn contains(&self, p: &Point) -> Result<bool> {
        Ok(self.level(p)? <= BOUNDARY_TOL)
    }

    /// Local minima of `θ ↦ d(p, γ(θ))`, nearest first.
    pub fn boundary_feet(&self, p: &Point) -> Result<Vec<(f64, f64)>> {
        match &self.boundary {
            Boundary::GeodesicDisk { center, .. } => {
                let (d, phi) = self.surface.polar_about(center, p)?;
                let level = self.level(p)?;
                if d == 0.0 {
                    // every boundary point is equidistant from the center
                    return Ok(vec![(0.0, level.abs()), (PI, level.abs())]);
                }
                Ok(vec![(wrap(phi), level.abs())])
            }
            Boundary::RadialProfile(profile) => Ok(profile_feet(profile, p.to_cartesian())),
        }
    }

    pub fn distance_to_boundary(&self, p: &Point) -> Result<f64> {
        let feet = self.boundary_feet(p)?;
        Ok(feet.first().map_or(f64::INFINITY, |f| f.1))
    }

    /// `Φ(σ, θ)`, `σ ∈ [0, 1]`, mapping the unit polar square onto `Ω̄`.
    pub fn interior_map(&self, sigma: f64, theta: f64) -> Result<Point> {
        match &self.boundary {
            Boundary::GeodesicDisk { center, radius } => {
                self.surface.exp_dir(center, theta, sigma * radius)
            }
            Boundary::RadialProfile(profile) => {
                let rho = sigma * profile.value(theta);
                Ok(Point::new(rho, theta))
            }
        }
    }

    /// Pull-back of the metric under `Φ`, in `(σ, θ)` coordinates.
    pub fn interior_metric(&self, sigma: f64, theta: f64) -> [[f64; 2]; 2] {
        match &self.boundary {
            Boundary::GeodesicDisk { radius, .. } => {
                let (f, _, _) = self.radial_warp(sigma * radius);
                [[radius * radius, 0.0], [0.0, f * f]]
            }
            Boundary::RadialProfile(profile) => {
                let (r, r1) = (profile.value(theta), profile.derivative(1, theta));
                [
                    [r * r, sigma * r * r1],
                    [sigma * r * r1, sigma * sigma * (r * r + r1 * r1)],
                ]
            }
        }
    }

    /// Riemannian area of `Ω`.
    pub fn area(&self) -> f64 {
        match &self.boundary {
            Boundary::GeodesicDisk { radius, .. } => match self.surface.kind() {
                SurfaceKind::Constant { kappa } if *kappa != 0.0 => {
                    TAU * (1.0 - cs(*kappa, *radius)) / kappa
                }
                SurfaceKind::Constant { .. } => PI * radius * radius,
                SurfaceKind::Warped { .. } => {
                    let q = crate::quadrature::GaussLegendre::new(64);
                    TAU * q.integrate(0.0, *radius, |r| self.surface.warp(r).0)
                }
            },
            Boundary::RadialProfile(profile) => {
                let q = crate::quadrature::GaussLegendre::new(64);
                let m = profile.cos.len().max(profile.sin.len() + 1);
                let panels = m.max(4);
                0.5 * q.composite(0.0, TAU, panels, |t| profile.value(t).powi(2))
            }
        }
    }

    /// Geodesic diameter of `Ω̄`.
    pub fn diameter(&self) -> f64 {
        match &self.boundary {
            Boundary::GeodesicDisk { radius, .. } => match self.surface.kind() {
                SurfaceKind::Constant { kappa } if *kappa > 0.0 => {
                    (2.0 * radius).min(PI / kappa.sqrt())
                }
                _ => 2.0 * radius,
            },
            Boundary::RadialProfile(profile) => {
                let n = 1024;
                let pts: Vec<[f64; 2]> = (0..n)
                    .map(|i| profile.cartesian(TAU * i as f64 / n as f64).0)
                    .collect();
                let mut best = (0.0f64, 0usize, 0usize);
                for i in 0..n {
                    for j in i + 1..n {
                        let d = (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]);
                        if d > best.0 {
                            best = (d, i, j);
                        }
                    }
                }
                // polish both ends on the smooth curve
                let (mut a, mut b) = (
                    TAU * best.1 as f64 / n as f64,
                    TAU * best.2 as f64 / n as f64,
                );
                let dist = |a: f64, b: f64| {
                    let (p, q) = (profile.cartesian(a).0, profile.cartesian(b).0);
                    (p[0] - q[0]).hypot(p[1] - q[1])
                };
                let mut h = TAU / n as f64;
                let mut d = best.0;
                while h > 1e-13 {
                    let mut improved = false;
                    for (da, db) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
                        let v = dist(a + da, b + db);
                        if v > d {
                            d = v;
                            a += da;
                            b += db;
                            improved = true;
                        }
                    }
                    if !improved {
                        h *= 0.5;
                    }
                }
                d
            }
        }
    }
}

/// Safeguarded Newton solve of `⟨c(θ) - x, c'(θ)⟩ = 0` on a bracket.
fn refine_foot(profile: &FourierProfile, x: [f64; 2], mut lo: f64, mut hi: f64) -> f64 {
    let g = |t: f64| {
        let (c, d1, d2) = profile.cartesian(t);
        let e = [c[0] - x[0], c[1] - x[1]];
        (dot(e, d1), dot(d1, d1) + dot(e, d2))
    };
    let (glo, _) = g(lo);
    let (ghi, _) = g(hi);
    if glo > 0.0 || ghi < 0.0 {
        // no sign change: keep the better sampled end
        return if dist_sq(profile, x, lo) < dist_sq(profile, x, hi) {
            lo
        } else {
            hi
        };
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..100 {
        let (gv, dg) = g(t);
        if gv < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - gv / dg;
        let next = if dg > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - t).abs() < 1e-15 * (1.0 + t.abs()) {
            return next;
        }
        t = next;
        if hi - lo < 1e-15 {
            break;
        }
    }
    t
}

fn dist_sq(profile: &FourierProfile, x: [f64; 2], t: f64) -> f64 {
    let c = profile.cartesian(t).0;
    (c[0] - x[0]).powi(2) + (c[1] - x[1]).powi(2)
}

fn profile_feet(profile: &FourierProfile, x: [f64; 2]) -> Vec<(f64, f64)> {
    let n = FOOT_SAMPLES;
    let h = TAU / n as f64;
    let d: Vec<f64> = (0..n).map(|i| dist_sq(profile, x, i as f64 * h)).collect();
    let mut feet: Vec<(f64, f64)> = Vec::new();
    for i in 0..n {
        let prev = d[(i + n - 1) % n];
        let next = d[(i + 1) % n];
        if d[i] <= prev && d[i] < next {
            let t = wrap(refine_foot(profile, x, (i as f64 - 1.0) * h, (i as f64 + 1.0) * h));
            let dist = dist_sq(profile, x, t).sqrt();
            let dup = feet.iter().any(|f| {
                let gap = (f.0 - t).abs();
                gap.min(TAU - gap) < 1e-9
            });
            if !dup {
                feet.push((t, dist));
            }
        }
    }
    feet.sort_by(|a, b| a.1.total_cmp(&b.1));
    feet
}

/// Tube-radius bound below which Fermi coordinates are single valued.
#[derive(Debug, Clone)]
pub struct FermiChart {
    domain: DomainSpec,
    r: f64,
    samples: Vec<BoundaryPoint>,
}

pub const CHART_SAMPLES: usize = 256;
const AMBIGUITY_GAP: f64 = 1e-6;

impl FermiChart {
    pub fn new(domain: DomainSpec, r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Parameter(format!("r must be positive, got {r}")));
        }
        let samples = (0..CHART_SAMPLES)
            .map(|i| domain.boundary_point(TAU * i as f64 / CHART_SAMPLES as f64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { domain, r, samples })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn boundary_samples(&self) -> &[BoundaryPoint] {
        &self.samples
    }

    pub fn boundary_point(&self, theta: f64) -> Result<BoundaryPoint> {
        self.domain.boundary_point(theta)
    }

    pub fn fermi_map(&self, s: f64, theta: f64) -> Result<Point> {
        if !(s.abs() < self.r) {
            return Err(Error::OutOfTube {
                depth: s,
                radius: self.r,
            });
        }
        self.domain.normal_point(s, theta)
    }

    /// Signed depth and foot parameter of a tube point.
    pub fn fermi_invert(&self, p: &Point, tol: f64) -> Result<(f64, f64)> {
        let feet = self.domain.boundary_feet(p)?;
        let (theta, dist) = *feet.first().ok_or_else(|| Error::OutOfTube {
            depth: f64::INFINITY,
            radius: self.r,
        })?;
        let level = self.domain.level(p)?;
        let s = if level < 0.0 { -dist } else { dist };
        if !(s.abs() < self.r) {
            return Err(Error::OutOfTube {
                depth: s,
                radius: self.r,
            });
        }
        if let Some(&(second, d2)) = feet.get(1) {
            if d2 - dist < AMBIGUITY_GAP {
                return Err(Error::Ambiguous {
                    first: theta,
                    second,
                });
            }
        }
        let q = self.domain.normal_point(s, theta)?;
        let gap = match &self.domain.boundary {
            Boundary::RadialProfile(_) => {
                let (a, b) = (p.to_cartesian(), q.to_cartesian());
                (a[0] - b[0]).hypot(a[1] - b[1])
            }
            Boundary::GeodesicDisk { .. } => self.domain.surface.distance(p, &q)?,
        };
        if gap > tol.max(1e-12) {
            return Err(Error::Integration(format!(
                "foot point residual {gap} exceeds tolerance {tol}"
            )));
        }
        Ok((s, theta))
    }

    /// Gauss curvature at `ψ(s, θ)`.
    pub fn curvature_at(&self, s: f64, theta: f64) -> Result<f64> {
        match (self.domain.surface.kind(), &self.domain.boundary) {
            (SurfaceKind::Constant { kappa }, _) => Ok(*kappa),
            (SurfaceKind::Warped { .. }, Boundary::GeodesicDisk { radius, .. }) => self
                .domain
                .surface
                .gauss_curvature(&Point::new((radius + s).abs(), theta)),
            (SurfaceKind::Warped { .. }, Boundary::RadialProfile(_)) => {
                unreachable!("radial profiles live on the flat plane")
            }
        }
    }

    /// Normal Jacobi field `X(s)` with `X(0) = 1`, `X'(0) = II(θ)`.
    pub fn volume_element_jacobi(&self, theta: f64, s: f64) -> Result<JacobiValue> {
        if !(s.abs() < self.r) {
            return Err(Error::OutOfTube {
                depth: s,
                radius: self.r,
            });
        }
        let ii = self.domain.boundary_point(theta)?.curvature;
        self.jacobi_along(theta, ii, s)
    }

    fn jacobi_along(&self, theta: f64, ii: f64, s: f64) -> Result<JacobiValue> {
        if s == 0.0 {
            return Ok(JacobiValue::new(1.0, ii));
        }
        // integrate in σ = |s| with the direction folded into the sign
        let dir = s.signum();
        let control = StepControl {
            tol: 1e-12,
            max_steps: 1_000_000,
        };
        let mut hit = None;
        let y = dopri5(
            |sigma, y: &[f64; 2]| {
                let k = self.curvature_at(dir * sigma, theta)?;
                Ok([y[1], -k * y[0]])
            },
            [1.0, dir * ii],
            0.0,
            s.abs(),
            &control,
            |sigma, y| {
                if y[0] <= 0.0 && hit.is_none() {
                    hit = Some(sigma);
                }
                Ok(None)
            },
        )?;
        if let Some(at) = hit {
            return Err(Error::FocalPoint(dir * at));
        }
        Ok(JacobiValue::new(y[0], dir * y[1]))
    }

    /// `dvol_s / dvol_0` along the normal geodesic at `θ`.
    pub fn volume_element_ratio(&self, theta: f64, s: f64) -> Result<f64> {
        Ok(self.volume_element_jacobi(theta, s)?.value)
    }

    /// Distance to the first zero of the normal Jacobi field, inward or
    /// outward, searched up to `limit`; `+∞` if none.
    pub fn focal_distance(&self, theta: f64, inward: bool, limit: f64) -> Result<f64> {
        let ii = self.domain.boundary_point(theta)?.curvature;
        let dir = if inward { -1.0 } else { 1.0 };
        let control = StepControl {
            tol: 1e-12,
            max_steps: 1_000_000,
        };
        let mut last = (0.0, [1.0, dir * ii]);
        let mut bracket = None;
        let result = dopri5(
            |sigma, y: &[f64; 2]| {
                let k = self.curvature_at(dir * sigma, theta)?;
                Ok([y[1], -k * y[0]])
            },
            [1.0, dir * ii],
            0.0,
            limit,
            &control,
            |sigma, y| {
                if bracket.is_none() {
                    if y[0] <= 0.0 {
                        bracket = Some((last, (sigma, *y)));
                        return Err(Error::FocalPoint(sigma));
                    }
                    last = (sigma, *y);
                }
                Ok(None)
            },
        );
        let ((s0, y0), _) = match (result, bracket) {
            (_, Some(b)) => b,
            (Ok(_), None) => return Ok(f64::INFINITY),
            (Err(e), None) => return Err(e),
        };
        // Newton from the last positive state
        let step = |sigma_from: f64, y_from: [f64; 2], len: f64| -> Result<[f64; 2]> {
            if len == 0.0 {
                return Ok(y_from);
            }
            dopri5(
                |sigma, y: &[f64; 2]| {
                    let k = self.curvature_at(dir * sigma, theta)?;
                    Ok([y[1], -k * y[0]])
                },
                y_from,
                sigma_from,
                sigma_from + len,
                &control,
                |_, _| Ok(None),
            )
        };
        let mut len = -y0[0] / y0[1];
        for _ in 0..50 {
            let y = step(s0, y0, len)?;
            let delta = -y[0] / y[1];
            len += delta;
            if delta.abs() < 1e-15 {
                break;
            }
        }
        Ok(s0 + len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub r: f64,
    pub interior_ball_ok: bool,
    pub exterior_ball_ok: bool,
    /// `min_θ dist(ψ(-r,θ), ∂Ω) - r`; negative values are violations.
    pub interior_margin: f64,
    pub exterior_margin: f64,
    /// Smallest `H ≥ 0` with `II ≥ -H` w.r.t. both normals.
    pub h: f64,
    /// `sup |Sec|` over tube samples.
    pub k: f64,
    pub sec_min: f64,
    pub sec_max: f64,
    pub ii_min: f64,
    pub ii_max: f64,
    /// Focal distance bound `r₀(K, H)`; `None` when infinite.
    pub r0: Option<f64>,
    pub injectivity_ok: bool,
    /// `min (dist(ψ(s,θ), ∂Ω) - |s|)` over tube samples.
    pub injectivity_margin: f64,
    pub admissible: bool,
}

impl RegularityReport {
    pub fn r0_value(&self) -> f64 {
        self.r0.unwrap_or(f64::INFINITY)
    }
}

pub const REGULARITY_THETA: usize = 256;
pub const REGULARITY_BALL: usize = 512;
const REGULARITY_DEPTHS: usize = 32;
const MARGIN_TOL: f64 = 1e-9;

/// Sampled certification of the `(r, H, K)` regularity conditions.
pub fn check_regularity(domain: &DomainSpec, r: f64) -> RegularityReport {
    let thetas: Vec<f64> = (0..REGULARITY_THETA)
        .map(|i| TAU * i as f64 / REGULARITY_THETA as f64)
        .collect();

    let ii: Vec<f64> = thetas
        .iter()
        .map(|&t| domain.boundary_point(t).map_or(f64::NAN, |b| b.curvature))
        .collect();
    let ii_min = ii.iter().copied().fold(f64::INFINITY, f64::min);
    let ii_max = ii.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let h = ii_min.abs().max(ii_max.abs());

    let ball = |inward: bool| -> (bool, f64) {
        let sign = if inward { -1.0 } else { 1.0 };
        let per_theta: Vec<(bool, f64)> = thetas
            .par_iter()
            .map(|&t| {
                let Ok(p) = domain.normal_point(sign * r, t) else {
                    return (false, f64::NEG_INFINITY);
                };
                let margin = match domain.distance_to_boundary(&p) {
                    Ok(d) => d - r,
                    Err(_) => f64::NEG_INFINITY,
                };
                let side_ok = domain.level(&p).map_or(false, |l| sign * l > 0.0);
                let mut ok = side_ok && margin >= -MARGIN_TOL;
                // dense ball sampling where the exponential map is closed form;
                // on warped disks the distance margin above is already exact
                let rings: &[f64] = if domain.surface.kappa().is_some() {
                    &[1.0, 0.75, 0.5, 0.25]
                } else {
                    &[]
                };
                'rings: for &ring in rings {
                    for j in 0..REGULARITY_BALL {
                        let phi = TAU * j as f64 / REGULARITY_BALL as f64;
                        let q = domain.surface.exp_dir(&p, phi, ring * r);
                        let l = match q.and_then(|q| domain.level(&q)) {
                            Ok(l) => l,
                            Err(_) => {
                                ok = false;
                                break 'rings;
                            }
                        };
                        if sign * l < -MARGIN_TOL {
                            ok = false;
                            break 'rings;
                        }
                    }
                }
                (ok, margin)
            })
            .collect();
        let ok = per_theta.iter().all(|x| x.0);
        let margin = per_theta.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        (ok, margin)
    };
    let (interior_ball_ok, interior_margin) = ball(true);
    let (exterior_ball_ok, exterior_margin) = ball(false);

    // curvature and injectivity over the open tube
    let depths: Vec<f64> = (0..REGULARITY_DEPTHS)
        .map(|j| r * (-1.0 + 2.0 * (j as f64 + 0.5) / REGULARITY_DEPTHS as f64))
        .collect();
    let tube: Vec<(f64, f64, f64)> = thetas
        .par_iter()
        .flat_map_iter(|&t| {
            let depths = &depths;
            depths.iter().map(move |&s| {
                let Ok(p) = domain.normal_point(s, t) else {
                    return (f64::NAN, f64::NAN, f64::NEG_INFINITY);
                };
                let sec = domain.surface.gauss_curvature(&p).unwrap_or(f64::NAN);
                let margin = domain
                    .distance_to_boundary(&p)
                    .map_or(f64::NEG_INFINITY, |d| d - s.abs());
                (sec, sec, margin)
            })
        })
        .collect();
    let nan_seen = tube.iter().any(|x| x.0.is_nan());
    let sec_min = tube.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    let sec_max = tube.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    let injectivity_margin = tube.iter().map(|x| x.2).fold(f64::INFINITY, f64::min);
    let injectivity_ok = !nan_seen && injectivity_margin >= -1e-8 * r.max(1.0);
    let k = sec_min.abs().max(sec_max.abs());

    let r0 = if h.is_finite() && k.is_finite() {
        focal_radius(k, h)
    } else {
        0.0
    };
    let admissible = interior_ball_ok
        && exterior_ball_ok
        && injectivity_ok
        && !nan_seen
        && ii.iter().all(|x| x.is_finite())
        && r <= r0;
    RegularityReport {
        r,
        interior_ball_ok,
        exterior_ball_ok,
        interior_margin,
        exterior_margin,
        h,
        k,
        sec_min,
        sec_max,
        ii_min,
        ii_max,
        r0: r0.is_finite().then_some(r0),
        injectivity_ok,
        injectivity_margin,
        admissible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparison::{mean_curvature_bound, mu};
    use crate::geometry::WarpProfile;
    use approx::assert_relative_eq;

    fn cap() -> DomainSpec {
        DomainSpec::new(
            ModelSurface::constant(1.0),
            Boundary::GeodesicDisk {
                center: Point::new(0.0, 0.0),
                radius: PI / 4.0,
            },
        )
        .unwrap()
    }

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

    fn circle_profile() -> DomainSpec {
        DomainSpec::new(
            ModelSurface::flat(),
            Boundary::RadialProfile(FourierProfile::circle(1.0)),
        )
        .unwrap()
    }

    #[test]
    fn fourier_derivatives() {
        let p = FourierProfile {
            cos: vec![1.0, 0.2, 0.1],
            sin: vec![0.3, -0.05],
        };
        let e = 1e-5;
        for t in [0.1, 1.0, 4.0] {
            let d1 = (p.value(t + e) - p.value(t - e)) / (2.0 * e);
            let d2 = (p.derivative(1, t + e) - p.derivative(1, t - e)) / (2.0 * e);
            assert!((d1 - p.derivative(1, t)).abs() < 1e-8);
            assert!((d2 - p.derivative(2, t)).abs() < 1e-8);
        }
        assert_relative_eq!(p.value(0.0), 1.3, epsilon = 1e-15);
    }

    #[test]
    fn boundary_point_examples() {
        let disk = DomainSpec::unit_disk();
        for t in [0.0, 1.0, 4.0] {
            let b = disk.boundary_point(t).unwrap();
            assert_relative_eq!(b.curvature, 1.0, epsilon = 1e-15);
            assert_relative_eq!(b.point.r, 1.0, epsilon = 1e-15);
            assert_relative_eq!(b.normal[0], 1.0, epsilon = 1e-15);
            assert_relative_eq!(b.speed, 1.0, epsilon = 1e-15);
        }
        let c = cap().boundary_point(0.7).unwrap();
        assert_relative_eq!(c.curvature, 1.0 / (PI / 4.0).tan(), epsilon = 1e-14);
        assert_relative_eq!(c.speed, (PI / 4.0).sin(), epsilon = 1e-14);

        let circle = circle_profile();
        for t in [0.0, 0.3, 2.0, 5.5] {
            let a = circle.boundary_point(t).unwrap();
            let b = disk.boundary_point(t).unwrap();
            assert!((a.point.r - b.point.r).abs() < 1e-10);
            assert!((wrap(a.point.theta) - wrap(b.point.theta)).abs() < 1e-10);
            assert!((a.normal[0] - b.normal[0]).abs() < 1e-10);
            assert!((a.normal[1] - b.normal[1]).abs() < 1e-10);
            assert!((a.curvature - b.curvature).abs() < 1e-10);
            assert!((a.speed - b.speed).abs() < 1e-10);
        }
    }

    #[test]
    fn cap_curvature_by_jacobi_shooting() {
        // inward Jacobi field of the cap boundary vanishes at the pole
        let chart = FermiChart::new(cap(), 0.3).unwrap();
        let f = chart.focal_distance(0.4, true, 3.0).unwrap();
        assert!((f - PI / 4.0).abs() < 1e-10, "{f}");
    }

    #[test]
    fn nonpositive_profile_is_rejected() {
        let err = DomainSpec::new(
            ModelSurface::flat(),
            Boundary::RadialProfile(FourierProfile {
                cos: vec![0.5, 1.0],
                sin: vec![],
            }),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidDomain(_)));
    }

    #[test]
    fn fermi_map_examples() {
        let chart = FermiChart::new(DomainSpec::unit_disk(), 0.5).unwrap();
        let p = chart.fermi_map(0.3, 0.0).unwrap();
        assert_relative_eq!(p.r, 1.3, epsilon = 1e-15);
        let p = chart.fermi_map(-0.3, 0.0).unwrap();
        assert_relative_eq!(p.r, 0.7, epsilon = 1e-15);
        assert!(matches!(
            chart.fermi_map(0.5, 0.0),
            Err(Error::OutOfTube { .. })
        ));
        let cap = FermiChart::new(cap(), 0.3).unwrap();
        let p = cap.fermi_map(0.2, 1.0).unwrap();
        assert_relative_eq!(p.r, PI / 4.0 + 0.2, epsilon = 1e-14);
    }

    #[test]
    fn fermi_invert_examples() {
        let chart = FermiChart::new(DomainSpec::unit_disk(), 0.6).unwrap();
        let (s, t) = chart
            .fermi_invert(&Point::from_cartesian(1.2, 0.0), 1e-12)
            .unwrap();
        assert_relative_eq!(s, 0.2, epsilon = 1e-15);
        assert_relative_eq!(t, 0.0, epsilon = 1e-15);
        let (s, t) = chart
            .fermi_invert(&Point::from_cartesian(0.5 * 1f64.cos(), 0.5 * 1f64.sin()), 1e-12)
            .unwrap();
        assert_relative_eq!(s, -0.5, epsilon = 1e-15);
        assert_relative_eq!(t, 1.0, epsilon = 1e-15);

        let wavy = DomainSpec::new(
            ModelSurface::flat(),
            Boundary::RadialProfile(FourierProfile {
                cos: vec![1.0, 0.0, 0.2],
                sin: vec![],
            }),
        )
        .unwrap();
        let chart = FermiChart::new(wavy, 0.2).unwrap();
        let t = PI / 4.0;
        let rho = 1.0 + 0.2 * (2.0 * t).cos();
        let p = Point::new(rho + 0.05, t);
        let (s, theta) = chart.fermi_invert(&p, 1e-9).unwrap();
        let q = chart.fermi_map(s, theta).unwrap();
        let (a, b) = (p.to_cartesian(), q.to_cartesian());
        assert!((a[0] - b[0]).hypot(a[1] - b[1]) < 1e-9);
        assert!(s > 0.0);
    }

    #[test]
    fn disk_center_is_ambiguous_or_outside() {
        let chart = FermiChart::new(DomainSpec::unit_disk(), 1.5).unwrap();
        assert!(matches!(
            chart.fermi_invert(&Point::new(0.0, 0.0), 1e-9),
            Err(Error::Ambiguous { .. })
        ));
        let chart = FermiChart::new(DomainSpec::unit_disk(), 0.5).unwrap();
        assert!(matches!(
            chart.fermi_invert(&Point::new(0.0, 0.0), 1e-9),
            Err(Error::OutOfTube { .. })
        ));
    }

    #[test]
    fn round_trip_on_grid() {
        for (domain, r) in [
            (DomainSpec::unit_disk(), 0.5),
            (cap(), 0.3),
            (blob(), 0.25),
        ] {
            let chart = FermiChart::new(domain, r).unwrap();
            for i in 0..24 {
                let t = TAU * (i as f64 + 0.37) / 24.0;
                for j in 0..=10 {
                    let s = 0.95 * r * (-1.0 + 2.0 * j as f64 / 10.0);
                    let p = chart.fermi_map(s, t).unwrap();
                    let (s2, t2) = chart.fermi_invert(&p, 1e-9).unwrap();
                    assert!((s - s2).abs() < 1e-8, "s {s} vs {s2}");
                    let gap = (t - t2).abs();
                    assert!(gap.min(TAU - gap) < 1e-8, "theta {t} vs {t2}");
                }
            }
        }
    }

    #[test]
    fn gauss_lemma_splitting() {
        for (domain, r) in [(cap(), 0.3), (blob(), 0.25)] {
            let chart = FermiChart::new(domain.clone(), r).unwrap();
            let h = 1e-6;
            for i in 0..16 {
                let t = TAU * (i as f64 + 0.2) / 16.0;
                for s in [-0.2 * r, 0.0, 0.5 * r] {
                    let p = chart.fermi_map(s, t).unwrap();
                    let d = |a: Point, b: Point| {
                        let mut dt = a.theta - b.theta;
                        dt = (dt + PI).rem_euclid(TAU) - PI;
                        [(a.r - b.r) / (2.0 * h), dt / (2.0 * h)]
                    };
                    let ds = d(
                        chart.fermi_map(s + h, t).unwrap(),
                        chart.fermi_map(s - h, t).unwrap(),
                    );
                    let dth = d(
                        domain.normal_point(s, t + h).unwrap(),
                        domain.normal_point(s, t - h).unwrap(),
                    );
                    let g = domain.surface().metric_at(&p).unwrap();
                    let gss = g[0][0] * ds[0] * ds[0] + g[1][1] * ds[1] * ds[1];
                    let gst = g[0][0] * ds[0] * dth[0] + g[1][1] * ds[1] * dth[1];
                    assert!((gss - 1.0).abs() < 1e-7, "g_ss = {gss}");
                    assert!(gst.abs() < 1e-7, "g_st = {gst}");
                }
            }
        }
    }

    #[test]
    fn volume_element_examples() {
        let chart = FermiChart::new(DomainSpec::unit_disk(), 0.6).unwrap();
        assert_relative_eq!(chart.volume_element_ratio(0.3, 0.5).unwrap(), 1.5, epsilon = 1e-12);
        assert_eq!(chart.volume_element_ratio(0.3, 0.0).unwrap(), 1.0);
        let a = PI / 4.0;
        let c = FermiChart::new(cap(), 0.3).unwrap();
        for s in [-0.25, 0.1, 0.29] {
            assert_relative_eq!(
                c.volume_element_ratio(2.0, s).unwrap(),
                (a + s).sin() / a.sin(),
                epsilon = 1e-11
            );
        }
        let warped = DomainSpec::new(
            ModelSurface::warped(WarpProfile::cosh(), -6.0, 6.0).unwrap(),
            Boundary::GeodesicDisk {
                center: Point::new(0.0, 0.0),
                radius: 1.0,
            },
        );
        assert!(warped.is_err(), "cosh chart has no pole");
    }

    #[test]
    fn focal_point_error() {
        let chart = FermiChart::new(DomainSpec::unit_disk(), 1.5).unwrap();
        assert!(matches!(
            chart.volume_element_ratio(0.0, -1.2),
            Err(Error::FocalPoint(_))
        ));
    }

    #[test]
    fn comparison_sandwich_and_mean_curvature() {
        let pole_disk = DomainSpec::new(
            ModelSurface::warped(
                WarpProfile::polynomial(vec![0.0, 1.0, 0.0, 0.2, 0.0, -0.05]),
                0.0,
                2.5,
            )
            .unwrap(),
            Boundary::GeodesicDisk {
                center: Point::new(0.0, 0.0),
                radius: 1.0,
            },
        )
        .unwrap();
        for (domain, r) in [(cap(), 0.3), (blob(), 0.25), (pole_disk, 0.3)] {
            let rep = check_regularity(&domain, r);
            assert!(rep.admissible, "{rep:?}");
            let chart = FermiChart::new(domain, r).unwrap();
            for i in 0..32 {
                let t = TAU * i as f64 / 32.0;
                let ii = chart.boundary_point(t).unwrap().curvature;
                for j in 0..=18 {
                    let s = 0.9 * r * j as f64 / 18.0;
                    let jv = chart.volume_element_jacobi(t, s).unwrap();
                    let lo = mu(rep.sec_max, ii, s);
                    let hi = mu(rep.sec_min, ii, s);
                    assert!(jv.value >= lo * (1.0 - 1e-6), "{} < {lo}", jv.value);
                    assert!(jv.value <= hi * (1.0 + 1e-6), "{} > {hi}", jv.value);
                    let mc = jv.derivative / jv.value;
                    let bound = mean_curvature_bound(rep.sec_min, ii, s, 2).unwrap();
                    assert!(mc <= bound + 1e-6, "{mc} > {bound}");
                }
            }
        }
    }

    #[test]
    fn regularity_of_unit_disk() {
        let rep = check_regularity(&DomainSpec::unit_disk(), 0.5);
        assert!(rep.admissible);
        assert_relative_eq!(rep.h, 1.0, epsilon = 1e-14);
        assert_eq!(rep.k, 0.0);
        assert_eq!(rep.r0, Some(1.0));
        let rep = check_regularity(&DomainSpec::unit_disk(), 1.5);
        assert!(!rep.interior_ball_ok);
        assert!(!rep.admissible);
    }

    #[test]
    fn regularity_of_cap_and_blob() {
        let rep = check_regularity(&cap(), 0.3);
        assert!(rep.admissible, "{rep:?}");
        assert_relative_eq!(rep.h, 1.0, epsilon = 1e-12);
        assert_eq!(rep.k, 1.0);
        assert_relative_eq!(rep.r0.unwrap(), PI / 4.0, epsilon = 1e-14);
        let rep = check_regularity(&blob(), 0.25);
        assert!(rep.admissible, "{rep:?}");
    }

    #[test]
    fn three_lobed_blob_fails() {
        let domain = DomainSpec::new(
            ModelSurface::flat(),
            Boundary::RadialProfile(FourierProfile {
                cos: vec![1.0, 0.0, 0.0, 0.45],
                sin: vec![],
            }),
        )
        .unwrap();
        let rep = check_regularity(&domain, 0.3);
        assert!(!rep.admissible);
        assert!(!rep.exterior_ball_ok || !rep.injectivity_ok);
        assert!(rep.ii_min < -10.0, "{}", rep.ii_min);
    }

    #[test]
    fn area_and_diameter() {
        assert_relative_eq!(DomainSpec::unit_disk().area(), PI, epsilon = 1e-14);
        assert_relative_eq!(
            cap().area(),
            TAU * (1.0 - (PI / 4.0).cos()),
            epsilon = 1e-14
        );
        assert_relative_eq!(circle_profile().area(), PI, epsilon = 1e-13);
        assert_relative_eq!(circle_profile().diameter(), 2.0, epsilon = 1e-10);
        assert_relative_eq!(cap().diameter(), PI / 2.0, epsilon = 1e-14);
    }
}
