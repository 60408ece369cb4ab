//! Observed constants for the heat-kernel inequalities on a discrete system.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::discrete::{BallProfile, DiscreteDomain, DomainKind, NeumannSystem};
use crate::error::{Error, Result};
use crate::fermi::DomainSpec;
use crate::geometry::{Point, SurfaceKind};
use crate::quadrature::{adaptive, GaussLegendre};

/// `count` node indices spread evenly over the domain (boundary included).
pub fn sample_nodes(domain: &DiscreteDomain, count: usize) -> Vec<usize> {
    let n = domain.len();
    let count = count.clamp(1, n);
    let mut v: Vec<usize> = (0..count)
        .map(|k| ((k as f64 + 0.5) * n as f64 / count as f64) as usize)
        .map(|i| i.min(n - 1))
        .collect();
    if let DomainKind::DiskLike { .. } = domain.kind() {
        v.push(0);
        v.push(n - 1);
    }
    v.sort_unstable();
    v.dedup();
    v
}

/// Geometric grid of `steps` points on `[a, b]`.
pub fn geometric_grid(a: f64, b: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![b];
    }
    let r = (b / a).ln() / (steps - 1) as f64;
    (0..steps).map(|k| a * (r * k as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalBound {
    pub c_obs: f64,
    pub t: f64,
    pub node: usize,
    /// `(t, max_x h_t(x,x) Vol_Ω(B(x,√t)))`
    pub profile: Vec<(f64, f64)>,
}

pub fn diagonal_bound_check(
    domain: &DiscreteDomain,
    system: &NeumannSystem,
    t_grid: &[f64],
    x_samples: &[usize],
) -> Result<DiagonalBound> {
    let d2 = domain.diameter().powi(2);
    if let Some(t) = t_grid.iter().find(|t| !(**t > 0.0 && **t <= d2 * (1.0 + 1e-12))) {
        return Err(Error::Parameter(format!("t = {t} is outside (0, diam²]")));
    }
    let per_sample: Vec<Result<Vec<f64>>> = x_samples
        .par_iter()
        .map(|&x| {
            let ball = domain.ball_profile(x)?;
            t_grid
                .iter()
                .map(|&t| Ok(system.heat_kernel(t, x, x)? * ball.volume(t.sqrt())))
                .collect()
        })
        .collect();
    let rows = per_sample.into_iter().collect::<Result<Vec<_>>>()?;
    let mut best = DiagonalBound {
        c_obs: f64::NEG_INFINITY,
        t: f64::NAN,
        node: 0,
        profile: Vec::with_capacity(t_grid.len()),
    };
    for (k, &t) in t_grid.iter().enumerate() {
        let mut col = f64::NEG_INFINITY;
        for (s, row) in rows.iter().enumerate() {
            col = col.max(row[k]);
            if row[k] > best.c_obs {
                best.c_obs = row[k];
                best.t = t;
                best.node = x_samples[s];
            }
        }
        best.profile.push((t, col));
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub c_d: f64,
    pub node: usize,
    pub s: f64,
    pub t: f64,
}

fn radius_grid(domain: &DiscreteDomain, r: f64, steps: usize) -> Vec<f64> {
    let lo = match domain.kind() {
        DomainKind::Interval { .. } => r / 64.0,
        // below a couple of cells node sums only see the centre node
        DomainKind::DiskLike { .. } => (r / 64.0).max(2.0 * domain.mesh_width()),
    };
    if lo >= r {
        vec![r]
    } else {
        geometric_grid(lo, r, steps)
    }
}

/// Smallest `C` with `V(x,t) ≤ C (t/s)^n V(x,s)`, `s ≤ t ≤ R`, over samples.
pub fn doubling_constant(
    domain: &DiscreteDomain,
    r: f64,
    x_samples: &[usize],
    steps: usize,
) -> Result<DoublingReport> {
    if !(r > 0.0 && r <= domain.diameter() * (1.0 + 1e-12)) {
        return Err(Error::Parameter(format!("R = {r} is outside (0, diam]")));
    }
    let grid = radius_grid(domain, r, steps);
    let n = domain.dimension() as i32;
    let found: Vec<Result<DoublingReport>> = x_samples
        .par_iter()
        .map(|&x| {
            let ball = domain.ball_profile(x)?;
            let vols: Vec<f64> = grid.iter().map(|s| ball.volume(*s)).collect();
            let mut best = DoublingReport {
                c_d: 0.0,
                node: x,
                s: grid[0],
                t: grid[0],
            };
            for (a, &s) in grid.iter().enumerate() {
                for (b, &t) in grid.iter().enumerate().skip(a) {
                    let c = vols[b] / vols[a] * (s / t).powi(n);
                    if c > best.c_d {
                        best = DoublingReport { c_d: c, node: x, s, t };
                    }
                }
            }
            Ok(best)
        })
        .collect();
    found
        .into_iter()
        .try_fold(None::<DoublingReport>, |acc, r| -> Result<Option<DoublingReport>> {
            let r = r?;
            Ok(match acc {
                Some(a) if a.c_d >= r.c_d => Some(a),
                _ => Some(r),
            })
        })?
        .ok_or_else(|| Error::Parameter("no sample points".into()))
}

/// `max V(y,s) / (2ⁿ C_D V(x,s))` over sample pairs with `d(x,y) ≤ s`; at
/// most 1 when the comparability step holds.
pub fn comparability_ratio(
    domain: &DiscreteDomain,
    c_d: f64,
    x_samples: &[usize],
    radii: &[f64],
) -> Result<f64> {
    let profiles: Vec<BallProfile> = x_samples
        .iter()
        .map(|&x| domain.ball_profile(x))
        .collect::<Result<_>>()?;
    let factor = 2f64.powi(domain.dimension() as i32) * c_d;
    let mut worst = 0.0f64;
    for (a, &x) in x_samples.iter().enumerate() {
        let d = domain.distances_from(x)?;
        for (b, &y) in x_samples.iter().enumerate() {
            for &s in radii {
                if d[y] <= s {
                    worst = worst.max(profiles[b].volume(s) / (factor * profiles[a].volume(s)));
                }
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnReport {
    pub q: f64,
    pub per_r: Vec<(f64, f64)>,
    pub c_gn: f64,
}

fn weighted_norm(values: &[f64], w: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        values.iter().fold(0.0, |m, v| m.max(v.abs()))
    } else {
        values
            .iter()
            .zip(w)
            .map(|(v, w)| w * v.abs().powf(q))
            .sum::<f64>()
            .powf(1.0 / q)
    }
}

/// Eigenfunctions, a constant and random smooth combinations of modes.
pub fn gn_test_fields<R: Rng>(system: &NeumannSystem, rng: &mut R, random: usize) -> Vec<Vec<f64>> {
    let m = system.mode_count();
    let mut out: Vec<Vec<f64>> = (0..m.min(6)).map(|k| system.mode_vector(k)).collect();
    for _ in 0..random {
        let tau = rng.gen_range(0.001..0.1);
        let c: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let Ok(f) = system.synthesize(&c, |l| (-l * tau).exp()) {
            out.push(f);
        }
    }
    out
}

/// Smallest `C` with `‖v_r^{½-1/q} f‖_q ≤ C(‖f‖₂ + r‖Δ^{½}f‖₂)` over the
/// given fields, for each `r`.
pub fn gn_check(
    domain: &DiscreteDomain,
    system: &NeumannSystem,
    q: f64,
    r_grid: &[f64],
    fields: &[Vec<f64>],
) -> Result<GnReport> {
    let n = domain.dimension() as f64;
    let admissible = if q.is_infinite() {
        n < 2.0
    } else {
        q > 2.0 && (q - 2.0) / q * n < 2.0
    };
    if !admissible {
        return Err(Error::Parameter(format!(
            "q = {q} is not admissible in dimension {n}: need q > 2 and (q-2)/q·n < 2"
        )));
    }
    let alpha = 0.5 - if q.is_infinite() { 0.0 } else { 1.0 / q };
    let w = system.mass();
    let mut per_r = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        if !(r > 0.0 && r <= domain.diameter() / 2.0 * (1.0 + 1e-12)) {
            return Err(Error::Parameter(format!("r = {r} is outside (0, diam/2]")));
        }
        let v = domain.ball_volumes(r)?;
        let vw: Vec<f64> = v.iter().map(|x| x.powf(alpha)).collect();
        let mut c = 0.0f64;
        for f in fields {
            let l2 = weighted_norm(f, w, 2.0);
            let energy = system.stiffness().quadratic_form(f).max(0.0).sqrt();
            let rhs = l2 + r * energy;
            if rhs == 0.0 {
                continue;
            }
            let g: Vec<f64> = f.iter().zip(&vw).map(|(a, b)| a * b).collect();
            c = c.max(weighted_norm(&g, w, q) / rhs);
        }
        per_r.push((r, c));
    }
    let c_gn = per_r.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(GnReport { q, per_r, c_gn })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VevPair {
    OneTwo,
    OneInf,
    TwoInf,
    InfInf,
}

impl VevPair {
    /// `1/p - 1/q`
    pub fn exponent_sum(self) -> f64 {
        match self {
            VevPair::OneTwo => 0.5,
            VevPair::OneInf => 1.0,
            VevPair::TwoInf => 0.5,
            VevPair::InfInf => 0.0,
        }
    }
}

/// Operator norm of `v^γ e^{-tΔ} v^δ` between mass-weighted `L^p`, `L^q`,
/// `δ = 1/p - 1/q - γ`.
pub fn vev_norm(system: &NeumannSystem, v: &[f64], pair: VevPair, gamma: f64, t: f64) -> Result<f64> {
    if v.len() != system.len() || v.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::Parameter("v must be positive at every node".into()));
    }
    let delta = pair.exponent_sum() - gamma;
    let h = system.kernel_matrix(t)?;
    let w = system.mass();
    let n = system.len();
    let vg: Vec<f64> = v.iter().map(|x| x.powf(gamma)).collect();
    let vd: Vec<f64> = v.iter().map(|x| x.powf(delta)).collect();
    let k = |i: usize, j: usize| vg[i] * h[(i, j)] * vd[j];
    let norm = match pair {
        VevPair::OneInf => (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .fold(0.0f64, |m, (i, j)| m.max(k(i, j).abs())),
        VevPair::InfInf => (0..n)
            .map(|i| (0..n).map(|j| k(i, j).abs() * w[j]).sum::<f64>())
            .fold(0.0, f64::max),
        VevPair::OneTwo => (0..n)
            .map(|j| (0..n).map(|i| w[i] * k(i, j).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max),
        VevPair::TwoInf => (0..n)
            .map(|i| (0..n).map(|j| w[j] * k(i, j).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max),
    };
    Ok(norm)
}

/// `(‖e^{-(t/2)Δ} v^{½}‖²_{1,2}, ‖v^{½} e^{-tΔ} v^{½}‖_{1,∞})`.
pub fn dunford_pettis_pair(system: &NeumannSystem, v: &[f64], t: f64) -> Result<(f64, f64)> {
    let a = vev_norm(system, v, VevPair::OneTwo, 0.0, t / 2.0)?;
    let b = vev_norm(system, v, VevPair::OneInf, 0.5, t)?;
    Ok((a * a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VevRow {
    pub t: f64,
    pub inf_inf: f64,
    pub one_inf: f64,
    pub one_two: Option<f64>,
    pub two_inf: Option<f64>,
    pub diagonal: f64,
    pub dunford_pettis_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VevSweep {
    pub rows: Vec<VevRow>,
    /// Finiteness of the sup over the sweep, in the order
    /// `(∞,∞,½), (1,∞,½), (1,2,0), (2,∞,½)`, then the diagonal bound.
    pub finite: [bool; 5],
    pub agree: bool,
    pub max_dunford_pettis_gap: f64,
}

/// The four `vEv` conditions over a time grid; the `(1,2)` and `(2,∞)`
/// conditions are only evaluated up to half the largest time.
pub fn vev_sweep(domain: &DiscreteDomain, system: &NeumannSystem, t_grid: &[f64]) -> Result<VevSweep> {
    let t0 = t_grid.iter().copied().fold(0.0, f64::max);
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let v = domain.ball_volumes(t.sqrt())?;
        let half = t <= t0 / 2.0;
        let (dp_a, dp_b) = dunford_pettis_pair(system, &v, t)?;
        let diag = system.kernel_diagonal(t)?;
        rows.push(VevRow {
            t,
            inf_inf: vev_norm(system, &v, VevPair::InfInf, 0.5, t)?,
            one_inf: dp_b,
            one_two: if half {
                Some(vev_norm(system, &v, VevPair::OneTwo, 0.0, t)?)
            } else {
                None
            },
            two_inf: if half {
                Some(vev_norm(system, &v, VevPair::TwoInf, 0.5, t)?)
            } else {
                None
            },
            diagonal: diag.iter().zip(&v).map(|(h, v)| h * v).fold(0.0, f64::max),
            dunford_pettis_gap: (dp_a - dp_b).abs() / dp_b.abs().max(f64::MIN_POSITIVE),
        });
    }
    let sup = |f: &dyn Fn(&VevRow) -> Option<f64>| {
        rows.iter().filter_map(f).fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x) })
    };
    let finite = [
        sup(&|r| Some(r.inf_inf)).is_finite(),
        sup(&|r| Some(r.one_inf)).is_finite(),
        sup(&|r| r.one_two).is_finite(),
        sup(&|r| r.two_inf).is_finite(),
        sup(&|r| Some(r.diagonal)).is_finite(),
    ];
    let agree = finite.iter().all(|f| *f == finite[0]);
    let max_dunford_pettis_gap = rows.iter().map(|r| r.dunford_pettis_gap).fold(0.0, f64::max);
    Ok(VevSweep {
        rows,
        finite,
        agree,
        max_dunford_pettis_gap,
    })
}

/// Lowest Ricci eigenvalue `ρ` and `ρ₋ = max(0, -ρ)` at the nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureField {
    pub rho: Vec<f64>,
    pub rho_minus: Vec<f64>,
}

fn ricci_min(domain: &DomainSpec, p: &Point) -> Result<f64> {
    let s = domain.surface();
    match s.kind() {
        SurfaceKind::Constant { kappa } => Ok((s.dimension() as f64 - 1.0) * kappa),
        SurfaceKind::Warped { .. } => s.gauss_curvature(p),
    }
}

impl CurvatureField {
    pub fn from_domain(domain: &DiscreteDomain) -> Result<Self> {
        let rho: Vec<f64> = match domain.kind() {
            DomainKind::Interval { .. } => vec![0.0; domain.len()],
            DomainKind::DiskLike { domain: d, .. } => domain
                .points()
                .iter()
                .map(|p| ricci_min(d, p))
                .collect::<Result<_>>()?,
        };
        let rho_minus = rho.iter().map(|r| (-r).max(0.0)).collect();
        Ok(Self { rho, rho_minus })
    }
}

/// Sub-intervals of `[0, 1]` where `inside` holds, with extra cut points
/// where `kink` changes sign.
fn ray_pieces(
    inside: &dyn Fn(f64) -> Result<f64>,
    kink: &dyn Fn(f64) -> Result<f64>,
    samples: usize,
) -> Result<Vec<(f64, f64)>> {
    let refine = |f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64| -> Result<f64> {
        let fa = f(a)?;
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if (f(m)? < 0.0) == (fa < 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    };
    let mut cuts = vec![0.0, 1.0];
    let mut prev = (inside(0.0)?, kink(0.0)?);
    for k in 1..=samples {
        let x = k as f64 / samples as f64;
        let cur = (inside(x)?, kink(x)?);
        let a = (k - 1) as f64 / samples as f64;
        if (cur.0 < 0.0) != (prev.0 < 0.0) {
            cuts.push(refine(inside, a, x)?);
        }
        if (cur.1 < 0.0) != (prev.1 < 0.0) {
            cuts.push(refine(kink, a, x)?);
        }
        prev = cur;
    }
    cuts.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        if w[1] - w[0] > 1e-15 && inside(0.5 * (w[0] + w[1]))? < 0.0 {
            out.push((w[0], w[1]));
        }
    }
    Ok(out)
}

/// `sup_x ((1/Vol_Ω(B(x,R))) ∫_{Ω∩B(x,R)} ρ₋^p)^{1/p}` over sample points,
/// by Gauss quadrature in the interior polar chart with rays clipped at the
/// ball boundary and at sign changes of `ρ`.
pub fn integral_ricci(domain: &DomainSpec, p: f64, r: f64, samples: &[Point], quad: usize) -> Result<f64> {
    let n = domain.surface().dimension() as f64;
    if !(p > n / 2.0) {
        return Err(Error::Parameter(format!("p = {p} must exceed n/2 = {}", n / 2.0)));
    }
    if !(r > 0.0) {
        return Err(Error::Parameter(format!("R must be positive, got {r}")));
    }
    let g = GaussLegendre::new(quad.max(8));
    let thetas = g.composite_nodes(0.0, TAU, 8);
    let surface = domain.surface();
    let mut best = 0.0f64;
    for x in samples {
        let per_ray: Vec<Result<(f64, f64)>> = thetas
            .par_iter()
            .map(|&(theta, wt)| {
                let inside = |s: f64| -> Result<f64> {
                    Ok(surface.distance(x, &domain.interior_map(s, theta)?)? - r)
                };
                let kink = |s: f64| ricci_min(domain, &domain.interior_map(s, theta)?);
                let mut num = 0.0;
                let mut den = 0.0;
                for (a, b) in ray_pieces(&inside, &kink, 64)? {
                    for (s, ws) in g.on(a, b) {
                        let m = domain.interior_metric(s, theta);
                        let sq = (m[0][0] * m[1][1] - m[0][1] * m[0][1]).sqrt();
                        let rho = ricci_min(domain, &domain.interior_map(s, theta)?)?;
                        num += wt * ws * sq * (-rho).max(0.0).powf(p);
                        den += wt * ws * sq;
                    }
                }
                Ok((num, den))
            })
            .collect();
        let (mut num, mut den) = (0.0, 0.0);
        for pr in per_ray {
            let (a, b) = pr?;
            num += a;
            den += b;
        }
        if den > 0.0 {
            best = best.max((num / den).powf(1.0 / p));
        }
    }
    Ok(best)
}

/// `∫₀^T max_i (e^{-tΔ} ρ₋)(i) dt`.
pub fn kato_quantity(system: &NeumannSystem, rho_minus: &[f64], t_end: f64) -> Result<f64> {
    if !(t_end > 0.0) {
        return Err(Error::Parameter(format!("T must be positive, got {t_end}")));
    }
    if rho_minus.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let c = system.project(rho_minus)?;
    let scale = rho_minus.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut f = |t: f64| -> Result<f64> {
        let u = system.synthesize(&c, |l| (-l * t).exp())?;
        Ok(u.into_iter().fold(f64::NEG_INFINITY, f64::max))
    };
    adaptive(&mut f, 0.0, t_end, 1e-11 * scale * t_end, 48)
}

/// `(η₁, η₁ diam²)`
pub fn eigenvalue_diagnostic(system: &NeumannSystem, domain: &DiscreteDomain) -> Result<(f64, f64)> {
    let eta1 = *system
        .eigenvalues()
        .get(1)
        .ok_or_else(|| Error::Parameter("the first nonzero eigenvalue was not resolved".into()))?;
    Ok((eta1, eta1 * domain.diameter().powi(2)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiYauProfile {
    pub alpha: f64,
    pub t: Vec<f64>,
    /// `max_x [α|∇ ln u|² - ∂_t ln u]` at each time.
    pub lhs: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub violations: Vec<usize>,
    pub clipped: usize,
}

/// Smallest envelope `a + b/t` (`a, b ≥ 0`, least total height over the
/// grid) lying above every sample.
pub fn fit_envelope(t: &[f64], lhs: &[f64]) -> (f64, f64) {
    let feasible = |a: f64, b: f64| {
        a >= 0.0
            && b >= 0.0
            && t.iter().zip(lhs).all(|(t, l)| a + b / t >= l - 1e-12 * l.abs().max(1.0))
    };
    let cost = |a: f64, b: f64| t.iter().map(|t| a + b / t).sum::<f64>();
    let mut cands = vec![
        (lhs.iter().copied().fold(0.0, f64::max), 0.0),
        (0.0, t.iter().zip(lhs).map(|(t, l)| t * l).fold(0.0, f64::max)),
    ];
    for i in 0..t.len() {
        for j in i + 1..t.len() {
            let (x1, x2) = (1.0 / t[i], 1.0 / t[j]);
            if (x1 - x2).abs() < 1e-300 {
                continue;
            }
            let b = (lhs[i] - lhs[j]) / (x1 - x2);
            cands.push((lhs[i] - b * x1, b));
        }
    }
    cands
        .into_iter()
        .filter(|(a, b)| feasible(*a, *b))
        .min_by(|x, y| cost(x.0, x.1).total_cmp(&cost(y.0, y.1)))
        .unwrap_or((f64::INFINITY, f64::INFINITY))
}

/// Indices where `lhs` exceeds `(1 + slack)(a + b/t)`.
pub fn envelope_violations(t: &[f64], lhs: &[f64], a: f64, b: f64, slack: f64) -> Vec<usize> {
    t.iter()
        .zip(lhs)
        .enumerate()
        .filter(|(_, (t, l))| **l > (1.0 + slack) * (a + b / **t) + 1e-12)
        .map(|(k, _)| k)
        .collect()
}

/// `|∇u|²` at an interior node from chart central differences.
fn grad_sq(domain: &DiscreteDomain, u: &[f64], node: usize) -> f64 {
    match domain.kind() {
        DomainKind::Interval { .. } => {
            let h = domain.mesh_width();
            let d = (u[node + 1] - u[node - 1]) / (2.0 * h);
            d * d
        }
        DomainKind::DiskLike { domain: region, nr, nt } => {
            let (i, j) = (1 + (node - 1) / nt, (node - 1) % nt);
            let idx = |ring: usize, jj: usize| domain.node(ring, jj).expect("ring in range");
            let ds = (u[idx(i + 1, j)] - u[idx(i - 1, j)]) * *nr as f64 / 2.0;
            let dth = TAU / *nt as f64;
            let dt = (u[idx(i, j + 1)] - u[idx(i, j + nt - 1)]) / (2.0 * dth);
            let g = region.interior_metric(i as f64 / *nr as f64, j as f64 * dth);
            let det = g[0][0] * g[1][1] - g[0][1] * g[0][1];
            (g[1][1] * ds * ds - 2.0 * g[0][1] * ds * dt + g[0][0] * dt * dt) / det
        }
    }
}

pub fn li_yau_check(
    domain: &DiscreteDomain,
    system: &NeumannSystem,
    u0: &[f64],
    t_grid: &[f64],
    alpha: f64,
) -> Result<LiYauProfile> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Parameter(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if u0.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Parameter("initial data must be positive".into()));
    }
    let c = system.project(u0)?;
    let interior = domain.interior_nodes();
    let mut lhs = Vec::with_capacity(t_grid.len());
    let mut clipped = 0;
    for &t in t_grid {
        let mut u = system.synthesize(&c, |l| (-l * t).exp())?;
        let du = system.synthesize(&c, |l| -l * (-l * t).exp())?;
        for v in u.iter_mut() {
            if *v <= 0.0 {
                clipped += 1;
                *v = f64::MIN_POSITIVE;
            }
        }
        let m = interior
            .iter()
            .map(|&i| alpha * grad_sq(domain, &u, i) / (u[i] * u[i]) - du[i] / u[i])
            .fold(f64::NEG_INFINITY, f64::max);
        lhs.push(m);
    }
    if clipped > 0 {
        log::warn!("{clipped} non-positive solution values were clipped");
    }
    let (a, b) = fit_envelope(t_grid, &lhs);
    let violations = envelope_violations(t_grid, &lhs, a, b, 0.0);
    Ok(LiYauProfile {
        alpha,
        t: t_grid.to_vec(),
        lhs,
        a,
        b,
        violations,
        clipped,
    })
}
