//! Comparison functions, focal radii and the explicit extension constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `μ_{k,h}(s)`: solution of `μ'' + kμ = 0`, `μ(0) = 1`, `μ'(0) = h`.
pub fn mu(k: f64, h: f64, s: f64) -> f64 {
    if k > 0.0 {
        let q = k.sqrt();
        (q * s).cos() + h / q * (q * s).sin()
    } else if k < 0.0 {
        let q = (-k).sqrt();
        (q * s).cosh() + h / q * (q * s).sinh()
    } else {
        1.0 + h * s
    }
}

pub fn mu_prime(k: f64, h: f64, s: f64) -> f64 {
    if k > 0.0 {
        let q = k.sqrt();
        -q * (q * s).sin() + h * (q * s).cos()
    } else if k < 0.0 {
        let q = (-k).sqrt();
        q * (q * s).sinh() + h * (q * s).cosh()
    } else {
        h
    }
}

pub fn mu_second(k: f64, h: f64, s: f64) -> f64 {
    -k * mu(k, h, s)
}

/// First positive zero of `μ_{k,h}`, or `+∞`.
pub fn first_zero(k: f64, h: f64) -> f64 {
    focal_radius(k, -h)
}

/// Distance to the first focal point of a hypersurface with `II ≥ h`
/// (shape operator w.r.t. the normal along which geodesics leave) in a
/// region with `Sec ≤ k`. For `k < 0`, `√k` is read as `√|k|`.
pub fn focal_radius(k: f64, h: f64) -> f64 {
    if k > 0.0 {
        let q = k.sqrt();
        q.atan2(h) / q
    } else if k < 0.0 {
        let q = (-k).sqrt();
        if h > q {
            (q / h).atanh() / q
        } else {
            f64::INFINITY
        }
    } else if h > 0.0 {
        1.0 / h
    } else {
        f64::INFINITY
    }
}

/// Largest `r ∈ (0, 1]` with `√K tan(r√K) ≤ (1+H)/2` and
/// `(H/√K) tan(r√K) ≤ 1/2` (first branch of `tan`; `K → 0` limits).
pub fn admissible_rolling_radius(k: f64, h: f64) -> f64 {
    let mut r = 1.0f64;
    if k > 0.0 {
        let q = k.sqrt();
        r = r.min(((1.0 + h) / (2.0 * q)).atan() / q);
        if h > 0.0 {
            r = r.min((q / (2.0 * h)).atan() / q);
        }
    } else if h > 0.0 {
        r = r.min(0.5 / h);
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureData {
    pub k_lower: f64,
    pub k_upper: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub n: usize,
}

impl CurvatureData {
    pub fn new(k_lower: f64, k_upper: f64, h_min: f64, h_max: f64, n: usize) -> Result<Self> {
        let all = [k_lower, k_upper, h_min, h_max];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parameter("curvature data must be finite".into()));
        }
        if k_lower > k_upper {
            return Err(Error::Parameter(format!(
                "k_lower = {k_lower} exceeds K_upper = {k_upper}"
            )));
        }
        if h_min > h_max {
            return Err(Error::Parameter(format!("H_min = {h_min} exceeds H_max = {h_max}")));
        }
        if !(2..=3).contains(&n) {
            return Err(Error::Parameter(format!("dimension {n} not in {{2, 3}}")));
        }
        Ok(Self {
            k_lower,
            k_upper,
            h_min,
            h_max,
            n,
        })
    }

    /// Two-sided data `|Sec| ≤ K`, `|II| ≤ H`.
    pub fn symmetric(k: f64, h: f64, n: usize) -> Result<Self> {
        Self::new(-k.abs(), k.abs(), -h.abs(), h.abs(), n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuDescriptor {
    pub k: f64,
    pub h: f64,
}

impl MuDescriptor {
    pub fn eval(&self, s: f64) -> f64 {
        mu(self.k, self.h, s)
    }

    pub fn zero(&self) -> f64 {
        first_zero(self.k, self.h)
    }
}

/// Source of the volume-ratio pair `(d, D)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RatioProfile {
    /// `d = μ_{K,H_min}^{n-1}`, `D = μ_{k,H_max}^{n-1}`.
    Comparison { mu_d: MuDescriptor, mu_big_d: MuDescriptor },
    /// Exact ratios of a Euclidean ball of radius `radius`:
    /// `d = (R₀/(R₀+s))^{n-1}`, `D = (R₀/(R₀-s))^{n-1}`.
    Ball { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonProfile {
    pub ratios: RatioProfile,
    pub n: usize,
    /// Largest depth on which both ratios stay positive.
    pub r0: f64,
    pub r: f64,
}

impl ComparisonProfile {
    pub fn from_data(data: &CurvatureData, r: f64) -> Result<Self> {
        let mu_d = MuDescriptor {
            k: data.k_upper,
            h: data.h_min,
        };
        let mu_big_d = MuDescriptor {
            k: data.k_lower,
            h: data.h_max,
        };
        let r0 = mu_d.zero().min(mu_big_d.zero());
        Self::checked(
            RatioProfile::Comparison { mu_d, mu_big_d },
            data.n,
            r0,
            r,
        )
    }

    pub fn ball(radius: f64, n: usize, r: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Parameter(format!("ball radius must be positive, got {radius}")));
        }
        Self::checked(RatioProfile::Ball { radius }, n, radius, r)
    }

    fn checked(ratios: RatioProfile, n: usize, r0: f64, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::Parameter(format!("r must be positive, got {r}")));
        }
        if r > r0 {
            return Err(Error::ComparisonBreakdown(format!(
                "tube radius {r} exceeds the comparison radius {r0}"
            )));
        }
        Ok(Self { ratios, n, r0, r })
    }

    /// `(d(s), D(s))` for `0 ≤ s < r0`.
    pub fn bounds(&self, s: f64) -> Result<(f64, f64)> {
        let e = (self.n - 1) as i32;
        let (d, big_d) = match self.ratios {
            RatioProfile::Comparison { mu_d, mu_big_d } => {
                if !(s >= 0.0 && s < self.r0) {
                    return Err(Error::ComparisonBreakdown(format!(
                        "depth {s} outside [0, {})",
                        self.r0
                    )));
                }
                (mu_d.eval(s), mu_big_d.eval(s))
            }
            RatioProfile::Ball { radius } => {
                if !(s >= 0.0 && s < radius) {
                    return Err(Error::ComparisonBreakdown(format!(
                        "depth {s} outside [0, {radius})"
                    )));
                }
                (radius / (radius + s), radius / (radius - s))
            }
        };
        Ok((d.powi(e), big_d.powi(e)))
    }
}

/// `(d(s), D(s))` from comparison data.
pub fn volume_ratio_bounds(data: &CurvatureData, s: f64) -> Result<(f64, f64)> {
    let fd = first_zero(data.k_upper, data.h_min);
    let fbig = first_zero(data.k_lower, data.h_max);
    if !(s >= 0.0) || s >= fd || s >= fbig {
        return Err(Error::ComparisonBreakdown(format!(
            "depth {s} beyond focal radii ({fd}, {fbig})"
        )));
    }
    let e = (data.n - 1) as i32;
    Ok((
        mu(data.k_upper, data.h_min, s).powi(e),
        mu(data.k_lower, data.h_max, s).powi(e),
    ))
}

const GRID: usize = 1024;

/// Extremum of `f` on `[0, r]`: grid search followed by golden-section
/// refinement around the best node.
fn extremum(f: &dyn Fn(f64) -> Result<f64>, r: f64, maximize: bool) -> Result<f64> {
    let sign = if maximize { 1.0 } else { -1.0 };
    let h = r / GRID as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..=GRID {
        let v = sign * f(i as f64 * h)?;
        if v > best.1 {
            best = (i, v);
        }
    }
    let mut lo = (best.0 as f64 - 1.0).max(0.0) * h;
    let mut hi = ((best.0 + 1) as f64 * h).min(r);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (sign * f(a)?, sign * f(b)?);
    while hi - lo > 1e-12 * r.max(1.0) {
        if fa > fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = sign * f(a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = sign * f(b)?;
        }
    }
    Ok(sign * best.1.max(fa).max(fb))
}

/// `max_{s,t ∈ [0,r]} D(t)/d(s)`.
pub fn distortion_factor(profile: &ComparisonProfile, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Parameter(format!("r must be positive, got {r}")));
    }
    let probe = |s: f64| -> Result<(f64, f64)> {
        profile.bounds(s).map_err(|_| {
            Error::DegenerateTube(format!("volume ratio vanishes on [0, {r}] (r0 = {})", profile.r0))
        })
    };
    let max_big_d = extremum(&|t| probe(t).map(|p| p.1), r, true)?;
    let min_d = extremum(&|s| probe(s).map(|p| p.0), r, false)?;
    if !(min_d > 0.0) {
        return Err(Error::DegenerateTube(format!("min d = {min_d} on [0, {r}]")));
    }
    Ok((max_big_d / min_d).max(1.0))
}

/// Squared operator norm bound `1 + distortion·max(164, 82 + 164 G²/r²)`.
pub fn extension_norm_bound(distortion: f64, g: f64, r: f64) -> f64 {
    1.0 + distortion * 164f64.max(82.0 + 164.0 * g * g / (r * r))
}

/// Comparison bound `(n-1) μ'/μ` for the mean curvature of parallel curves.
pub fn mean_curvature_bound(k: f64, h: f64, s: f64, n: usize) -> Result<f64> {
    let m = mu(k, h, s);
    if !(m > 0.0) {
        return Err(Error::ComparisonBreakdown(format!(
            "mu({k}, {h}, {s}) = {m} is not positive"
        )));
    }
    Ok((n - 1) as f64 * mu_prime(k, h, s) / m)
}
