//! Grid domains, Neumann stiffness/mass assembly and truncated spectra.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::f64::consts::TAU;
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};
use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fermi::DomainSpec;
use crate::geometry::{Point, SurfaceKind};
use crate::quadrature::GaussLegendre;

pub const MIN_RESOLUTION: usize = 16;
/// Relative weight below which dropped modes are considered negligible.
/// Largest non-symmetric mesh handed to the dense eigensolver.
pub const DENSE_NODE_LIMIT: usize = 4225;
pub const TRUNCATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum DomainKind {
    /// `(0, length)` with `n` cells; nodes at cell centres.
    Interval { length: f64, n: usize },
    /// `Ω̄` via its interior polar chart; a merged centre node plus `nr`
    /// rings of `nt` nodes, the last ring on `∂Ω`.
    DiskLike {
        domain: DomainSpec,
        nr: usize,
        nt: usize,
    },
}

#[derive(Debug, Clone)]
pub struct DiscreteDomain {
    kind: DomainKind,
    points: Vec<Point>,
    weights: Vec<f64>,
    dim: usize,
    diameter: f64,
    mesh_width: f64,
    /// Edge lists for the graph metric where no closed-form distance exists.
    graph: Option<Vec<Vec<(usize, f64)>>>,
}

/// 4×4 Gauss rule on `[0, 1]`.
fn unit_rule() -> Vec<(f64, f64)> {
    GaussLegendre::new(4).on(0.0, 1.0).collect()
}

fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), xi * eta, (1.0 - xi) * eta]
}

/// `(∂_ξ N, ∂_η N)` for the four bilinear shape functions.
fn shape_grad(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [
        [-(1.0 - eta), -(1.0 - xi)],
        [1.0 - eta, -xi],
        [eta, xi],
        [-eta, 1.0 - xi],
    ]
}

impl DiscreteDomain {
    pub fn interval(length: f64, n: usize) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::Parameter(format!("interval length must be positive, got {length}")));
        }
        if n < MIN_RESOLUTION {
            return Err(Error::Parameter(format!(
                "resolution must be at least {MIN_RESOLUTION}, got {n}"
            )));
        }
        let h = length / n as f64;
        Ok(Self {
            kind: DomainKind::Interval { length, n },
            points: (0..n).map(|i| Point::new((i as f64 + 0.5) * h, 0.0)).collect(),
            weights: vec![h; n],
            dim: 1,
            diameter: length,
            mesh_width: h,
            graph: None,
        })
    }

    pub fn disk_like(domain: DomainSpec, nr: usize, nt: usize) -> Result<Self> {
        if nr < MIN_RESOLUTION || nt < MIN_RESOLUTION {
            return Err(Error::Parameter(format!(
                "resolution must be at least {MIN_RESOLUTION} per axis, got {nr}×{nt}"
            )));
        }
        let n = 1 + nr * nt;
        let dth = TAU / nt as f64;
        let mut points = Vec::with_capacity(n);
        points.push(domain.interior_map(0.0, 0.0)?);
        for i in 1..=nr {
            for j in 0..nt {
                points.push(domain.interior_map(i as f64 / nr as f64, j as f64 * dth)?);
            }
        }
        let rule = unit_rule();
        let mut weights = vec![0.0; n];
        let mut mesh_width = 0.0f64;
        for i in 0..nr {
            for j in 0..nt {
                let nodes = element_nodes(i, j, nt);
                for &(xi, wx) in &rule {
                    for &(eta, we) in &rule {
                        let sigma = (i as f64 + xi) / nr as f64;
                        let theta = (j as f64 + eta) * dth;
                        let g = domain.interior_metric(sigma, theta);
                        let sq = (g[0][0] * g[1][1] - g[0][1] * g[0][1]).max(0.0).sqrt();
                        let w = wx * we * sq * dth / nr as f64;
                        for (a, na) in shape(xi, eta).iter().enumerate() {
                            weights[nodes[a]] += na * w;
                        }
                    }
                }
                let g = domain.interior_metric((i + 1) as f64 / nr as f64, j as f64 * dth);
                mesh_width = mesh_width
                    .max(g[0][0].sqrt() / nr as f64)
                    .max(g[1][1].sqrt() * dth);
            }
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::Assembly(format!("degenerate node weight {w}")));
        }
        let graph = match domain.surface().kind() {
            SurfaceKind::Warped { .. } => Some(grid_graph(&domain, nr, nt)),
            SurfaceKind::Constant { .. } => None,
        };
        Ok(Self {
            dim: domain.surface().dimension(),
            diameter: domain.diameter(),
            kind: DomainKind::DiskLike { domain, nr, nt },
            points,
            weights,
            mesh_width,
            graph,
        })
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn mesh_width(&self) -> f64 {
        self.mesh_width
    }

    /// Node index of ring `i` (0 is the centre), angle index `j`.
    pub fn node(&self, i: usize, j: usize) -> Option<usize> {
        match self.kind {
            DomainKind::DiskLike { nr, nt, .. } if i <= nr => {
                Some(if i == 0 { 0 } else { 1 + (i - 1) * nt + j % nt })
            }
            _ => None,
        }
    }

    /// Nodes not on `∂Ω` and with a full finite-difference stencil.
    /// Whether the spectrum is obtained without a dense eigensolve.
    pub fn is_rotationally_symmetric(&self) -> bool {
        match &self.kind {
            DomainKind::Interval { .. } => true,
            DomainKind::DiskLike { domain, .. } => rotationally_symmetric(domain),
        }
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        match self.kind {
            DomainKind::Interval { n, .. } => (1..n - 1).collect(),
            DomainKind::DiskLike { nr, nt, .. } => (1..nr)
                .flat_map(|i| (0..nt).map(move |j| 1 + (i - 1) * nt + j))
                .collect(),
        }
    }

    /// Distances from node `i` to every node: closed form where available,
    /// otherwise shortest paths in the metric grid graph.
    pub fn distances_from(&self, i: usize) -> Result<Vec<f64>> {
        match &self.kind {
            DomainKind::Interval { .. } => {
                let x = self.points[i].r;
                Ok(self.points.iter().map(|p| (p.r - x).abs()).collect())
            }
            DomainKind::DiskLike { domain, .. } => match &self.graph {
                None => {
                    let s = domain.surface();
                    self.points.iter().map(|q| s.distance(&self.points[i], q)).collect()
                }
                Some(g) if i == 0 => {
                    let _ = g;
                    Ok(self.points.iter().map(|q| q.r).collect())
                }
                Some(g) => Ok(dijkstra(g, i)),
            },
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        match &self.kind {
            DomainKind::Interval { .. } => Ok((self.points[i].r - self.points[j].r).abs()),
            DomainKind::DiskLike { domain, .. } if self.graph.is_none() => {
                domain.surface().distance(&self.points[i], &self.points[j])
            }
            _ => Ok(self.distances_from(i)?[j]),
        }
    }

    /// `s ↦ Vol_Ω(B(x_i, s))`.
    pub fn ball_profile(&self, i: usize) -> Result<BallProfile> {
        match self.kind {
            DomainKind::Interval { length, .. } => Ok(BallProfile::Interval {
                x: self.points[i].r,
                length,
            }),
            DomainKind::DiskLike { .. } => {
                let d = self.distances_from(i)?;
                let mut pairs: Vec<(f64, f64)> = d.into_iter().zip(self.weights.iter().copied()).collect();
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut acc = 0.0;
                let (dist, cumulative) = pairs
                    .into_iter()
                    .map(|(d, w)| {
                        acc += w;
                        (d, acc)
                    })
                    .unzip();
                Ok(BallProfile::Nodes { dist, cumulative })
            }
        }
    }

    /// `v_s(x_i) = Vol_Ω(B(x_i, s))` for every node.
    pub fn ball_volumes(&self, s: f64) -> Result<Vec<f64>> {
        match self.kind {
            DomainKind::Interval { length, .. } => Ok(self
                .points
                .iter()
                .map(|p| BallProfile::Interval { x: p.r, length }.volume(s))
                .collect()),
            DomainKind::DiskLike { .. } => (0..self.len())
                .map(|i| {
                    let d = self.distances_from(i)?;
                    Ok(d.iter()
                        .zip(&self.weights)
                        .filter(|(d, _)| **d < s)
                        .map(|(_, w)| w)
                        .sum())
                })
                .collect(),
        }
    }
}

/// Corner nodes `(i,j), (i+1,j), (i+1,j+1), (i,j+1)`; ring 0 is the centre.
fn element_nodes(i: usize, j: usize, nt: usize) -> [usize; 4] {
    let idx = |ring: usize, jj: usize| if ring == 0 { 0 } else { 1 + (ring - 1) * nt + jj % nt };
    [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]
}

fn grid_graph(domain: &DomainSpec, nr: usize, nt: usize) -> Vec<Vec<(usize, f64)>> {
    let n = 1 + nr * nt;
    let dth = TAU / nt as f64;
    let mut adj = vec![Vec::new(); n];
    let idx = |ring: usize, j: usize| if ring == 0 { 0 } else { 1 + (ring - 1) * nt + j % nt };
    let len = |s0: f64, t0: f64, ds: f64, dt: f64| {
        let g = domain.interior_metric(s0 + ds / 2.0, t0 + dt / 2.0);
        (g[0][0] * ds * ds + 2.0 * g[0][1] * ds * dt + g[1][1] * dt * dt).sqrt()
    };
    let h = 1.0 / nr as f64;
    for i in 0..=nr {
        for j in 0..nt {
            let (s0, t0) = (i as f64 * h, j as f64 * dth);
            let a = idx(i, j);
            let mut link = |b: usize, l: f64| {
                if a != b {
                    adj[a].push((b, l));
                    adj[b].push((a, l));
                }
            };
            if i > 0 {
                link(idx(i, j + 1), len(s0, t0, 0.0, dth));
            }
            if i < nr {
                link(idx(i + 1, j), len(s0, t0, h, 0.0));
                link(idx(i + 1, j + 1), len(s0, t0, h, dth));
                if i > 0 {
                    link(idx(i + 1, j + nt - 1), len(s0, t0, h, -dth));
                }
            }
        }
    }
    adj
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0)
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], src: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Entry(0.0, src));
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, l) in &adj[u] {
            let nd = d + l;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry(nd, v));
            }
        }
    }
    dist
}

#[derive(Debug, Clone)]
pub enum BallProfile {
    /// Exact lengths `|(x - s, x + s) ∩ (0, L)|`.
    Interval { x: f64, length: f64 },
    /// Sorted node distances with cumulative node weights.
    Nodes { dist: Vec<f64>, cumulative: Vec<f64> },
}

impl BallProfile {
    pub fn volume(&self, s: f64) -> f64 {
        match self {
            BallProfile::Interval { x, length } => {
                ((x + s).min(*length) - (x - s).max(0.0)).max(0.0)
            }
            BallProfile::Nodes { dist, cumulative } => {
                let k = dist.partition_point(|d| *d < s);
                if k == 0 {
                    0.0
                } else {
                    cumulative[k - 1]
                }
            }
        }
    }
}

/// Symmetric sparse matrix stored by rows.
#[derive(Debug, Clone)]
pub struct SparseSym {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseSym {
    fn from_maps(maps: Vec<BTreeMap<usize, f64>>) -> Self {
        Self {
            rows: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |e| e.0)
            .map_or(0.0, |k| self.rows[i][k].1)
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|(j, v)| v * x[*j]).sum())
            .collect()
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.apply(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, r) in self.rows.iter().enumerate() {
            for (j, v) in r {
                m[(i, *j)] = *v;
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    /// Smallest time at which the kernel will be evaluated.
    pub t_min: f64,
    pub max_modes: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            t_min: 1e-3,
            max_modes: 2000,
        }
    }
}

impl SpectralOptions {
    pub fn full() -> Self {
        Self {
            t_min: 0.0,
            max_modes: usize::MAX,
        }
    }
}

#[derive(Debug, Clone)]
enum Modes {
    /// `n × m`, column `k` is `φ_k`.
    Dense(DMatrix<f64>),
    /// Rotationally symmetric domains: `φ(i, j) = a_i cos(mθ_j)` or `sin`.
    Angular {
        nt: usize,
        shapes: Vec<AngularMode>,
    },
}

#[derive(Debug, Clone)]
struct AngularMode {
    m: usize,
    sine: bool,
    /// Index 0 is the centre, `1..=nr` the rings.
    radial: Vec<f64>,
}

#[derive(Debug)]
pub struct NeumannSystem {
    stiffness: SparseSym,
    mass: Vec<f64>,
    eigenvalues: Vec<f64>,
    modes: Modes,
    basis: OnceLock<DMatrix<f64>>,
    warned: AtomicBool,
}

const DENSE_LIMIT: usize = 60_000_000;

/// Assembles the Neumann Laplacian and its lowest eigenpairs.
pub fn assemble(domain: &DiscreteDomain, opts: &SpectralOptions) -> Result<NeumannSystem> {
    let (stiffness, mass) = match &domain.kind {
        DomainKind::Interval { n, .. } => interval_stiffness(*n, domain.mesh_width),
        DomainKind::DiskLike { domain: d, nr, nt } => {
            (disk_stiffness(d, *nr, *nt)?, domain.weights.clone())
        }
    };
    let n = mass.len();
    let cap = opts.max_modes.min(n).max(1);
    let threshold = if opts.t_min > 0.0 {
        -TRUNCATION_TOL.ln() / opts.t_min
    } else {
        f64::INFINITY
    };
    let (mut eigenvalues, mut modes) = match &domain.kind {
        DomainKind::Interval { length, n } => interval_modes(*length, *n, cap),
        DomainKind::DiskLike { domain: d, nr, nt } if rotationally_symmetric(d) => {
            angular_modes(&stiffness, &mass, *nr, *nt, cap)?
        }
        DomainKind::DiskLike { .. } if domain.len() > DENSE_NODE_LIMIT => {
            return Err(Error::Parameter(format!(
                "{} nodes exceed the dense eigensolver limit of {DENSE_NODE_LIMIT}; lower the resolution",
                domain.len()
            )))
        }
        DomainKind::DiskLike { .. } => dense_modes(&stiffness, &mass, cap)?,
    };
    // the constant mode is exact
    let vol: f64 = mass.iter().sum();
    eigenvalues[0] = 0.0;
    match &mut modes {
        Modes::Dense(m) => m.column_mut(0).fill(1.0 / vol.sqrt()),
        Modes::Angular { shapes, .. } => {
            let s = &mut shapes[0];
            debug_assert!(s.m == 0 && !s.sine);
            s.radial.iter_mut().for_each(|a| *a = 1.0 / vol.sqrt());
        }
    }
    let keep = eigenvalues
        .iter()
        .position(|l| *l > threshold)
        .map_or(eigenvalues.len(), |k| (k + 1).min(eigenvalues.len()));
    eigenvalues.truncate(keep);
    match &mut modes {
        Modes::Dense(m) => {
            if m.ncols() > keep {
                *m = m.columns(0, keep).into_owned();
            }
        }
        Modes::Angular { shapes, .. } => shapes.truncate(keep),
    }
    Ok(NeumannSystem {
        stiffness,
        mass,
        eigenvalues,
        modes,
        basis: OnceLock::new(),
        warned: AtomicBool::new(false),
    })
}

fn interval_stiffness(n: usize, h: f64) -> (SparseSym, Vec<f64>) {
    let inv = 1.0 / h;
    let rows = (0..n)
        .map(|i| {
            let mut r = Vec::with_capacity(3);
            let mut diag = 0.0;
            if i > 0 {
                r.push((i - 1, -inv));
                diag += inv;
            }
            r.push((i, 0.0));
            if i + 1 < n {
                r.push((i + 1, -inv));
                diag += inv;
            }
            for e in &mut r {
                if e.0 == i {
                    e.1 = diag;
                }
            }
            r
        })
        .collect();
    (SparseSym { rows }, vec![h; n])
}

/// Cell-centred Neumann eigenpairs in closed form (DCT-II basis).
fn interval_modes(length: f64, n: usize, cap: usize) -> (Vec<f64>, Modes) {
    let h = length / n as f64;
    let vals = (0..cap)
        .map(|k| {
            let s = (k as f64 * std::f64::consts::PI / (2.0 * n as f64)).sin();
            4.0 / (h * h) * s * s
        })
        .collect();
    let m = DMatrix::from_fn(n, cap, |i, k| {
        if k == 0 {
            1.0 / length.sqrt()
        } else {
            (2.0 / length).sqrt()
                * (k as f64 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos()
        }
    });
    (vals, Modes::Dense(m))
}

fn disk_stiffness(domain: &DomainSpec, nr: usize, nt: usize) -> Result<SparseSym> {
    let n = 1 + nr * nt;
    let dth = TAU / nt as f64;
    let rule = unit_rule();
    let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for i in 0..nr {
        for j in 0..nt {
            let nodes = element_nodes(i, j, nt);
            let mut local = [[0.0; 4]; 4];
            for &(xi, wx) in &rule {
                for &(eta, we) in &rule {
                    let sigma = (i as f64 + xi) / nr as f64;
                    let theta = (j as f64 + eta) * dth;
                    let g = domain.interior_metric(sigma, theta);
                    let det = g[0][0] * g[1][1] - g[0][1] * g[0][1];
                    if !(det > 0.0) || !det.is_finite() {
                        return Err(Error::Assembly(format!(
                            "degenerate metric at σ = {sigma}, θ = {theta}"
                        )));
                    }
                    let sq = det.sqrt();
                    let w = wx * we * sq * dth / nr as f64;
                    let grads = shape_grad(xi, eta).map(|d| [d[0] * nr as f64, d[1] / dth]);
                    for a in 0..4 {
                        for b in 0..4 {
                            let (p, q) = (grads[a], grads[b]);
                            let form = (g[1][1] * p[0] * q[0] - g[0][1] * (p[0] * q[1] + p[1] * q[0])
                                + g[0][0] * p[1] * q[1])
                                / det;
                            local[a][b] += w * form;
                        }
                    }
                }
            }
            for a in 0..4 {
                for b in 0..4 {
                    if nodes[a] != nodes[b] {
                        *maps[nodes[a]].entry(nodes[b]).or_insert(0.0) += local[a][b];
                    }
                }
            }
        }
    }
    // diagonal from the off-diagonal entries, so constants are in the kernel
    for (i, m) in maps.iter_mut().enumerate() {
        let off: f64 = m.values().sum();
        m.insert(i, -off);
    }
    Ok(SparseSym::from_maps(maps))
}

fn rotationally_symmetric(domain: &DomainSpec) -> bool {
    for k in 1..=8 {
        let sigma = k as f64 / 8.0;
        let g0 = domain.interior_metric(sigma, 0.0);
        for t in [0.7, 2.1, 4.4] {
            let g = domain.interior_metric(sigma, t);
            for a in 0..2 {
                for b in 0..2 {
                    if (g[a][b] - g0[a][b]).abs() > 1e-13 * (1.0 + g0[a][b].abs()) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Eigenpairs of a dense symmetric matrix, ascending; the first `count`
/// are returned with eigenvectors as columns.
fn sym_eigen(a: DMatrix<f64>, count: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let e = nalgebra::SymmetricEigen::try_new(a, f64::EPSILON, 0)
        .ok_or_else(|| Error::Assembly("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|x, y| e.eigenvalues[*x].total_cmp(&e.eigenvalues[*y]));
    order.truncate(count);
    let vals = order.iter().map(|k| e.eigenvalues[*k]).collect();
    let vecs = DMatrix::from_fn(n, order.len(), |i, c| e.eigenvectors[(i, order[c])]);
    Ok((vals, vecs))
}

fn dense_modes(k: &SparseSym, mass: &[f64], cap: usize) -> Result<(Vec<f64>, Modes)> {
    let n = mass.len();
    let s: Vec<f64> = mass.iter().map(|w| 1.0 / w.sqrt()).collect();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for (j, v) in k.row(i) {
            a[(i, *j)] = v * s[i] * s[*j];
        }
    }
    let (vals, mut phi) = sym_eigen(a, cap)?;
    for mut col in phi.column_iter_mut() {
        for i in 0..n {
            col[i] *= s[i];
        }
    }
    Ok((vals, Modes::Dense(phi)))
}

fn angular_modes(
    k: &SparseSym,
    mass: &[f64],
    nr: usize,
    nt: usize,
    cap: usize,
) -> Result<(Vec<f64>, Modes)> {
    let idx = |ring: usize, j: usize| if ring == 0 { 0 } else { 1 + (ring - 1) * nt + j % nt };
    let dth = TAU / nt as f64;
    // K_d(i, i') = K[(i, 0), (i', d)] for d ∈ {-1, 0, 1}
    let kd = |i: usize, ip: usize, d: i64| k.get(idx(i, 0), idx(ip, (nt as i64 + d) as usize));
    let w: Vec<f64> = (1..=nr).map(|i| mass[idx(i, 0)]).collect();
    let mut all: Vec<(f64, AngularMode)> = Vec::new();
    for m in 0..=nt / 2 {
        let full = m == 0 || 2 * m == nt;
        let scale = if full { nt as f64 } else { nt as f64 / 2.0 };
        let c = (m as f64 * dth).cos();
        let ring = |i: usize, ip: usize| scale * (kd(i, ip, 0) + c * (kd(i, ip, 1) + kd(i, ip, -1)));
        // unknowns: [centre,] rings 1..=nr
        let off = usize::from(m == 0);
        let dimm = nr + off;
        let mut wts = Vec::with_capacity(dimm);
        let mut diag = Vec::with_capacity(dimm);
        let mut sub = Vec::with_capacity(dimm);
        if m == 0 {
            wts.push(mass[0]);
            diag.push(k.get(0, 0));
            sub.push(nt as f64 * k.get(0, idx(1, 0)));
        }
        for i in 1..=nr {
            wts.push(scale * w[i - 1]);
            diag.push(ring(i, i));
            if i < nr {
                sub.push(ring(i, i + 1));
            }
        }
        let s: Vec<f64> = wts.iter().map(|v| 1.0 / v.sqrt()).collect();
        let mut t = DMatrix::zeros(dimm, dimm);
        for a in 0..dimm {
            t[(a, a)] = diag[a] * s[a] * s[a];
            if a + 1 < dimm {
                let v = sub[a] * s[a] * s[a + 1];
                t[(a, a + 1)] = v;
                t[(a + 1, a)] = v;
            }
        }
        let (vals, z) = sym_eigen(t, dimm.min(cap))?;
        for (q, lam) in vals.iter().enumerate() {
            let mut radial = vec![0.0; nr + 1];
            for a in 0..dimm {
                radial[a + 1 - off] = z[(a, q)] * s[a];
            }
            let lam = lam.max(0.0);
            all.push((lam, AngularMode { m, sine: false, radial: radial.clone() }));
            if !full {
                all.push((lam, AngularMode { m, sine: true, radial }));
            }
        }
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.m.cmp(&b.1.m)).then(a.1.sine.cmp(&b.1.sine)));
    all.truncate(cap);
    let (vals, shapes) = all.into_iter().unzip();
    Ok((vals, Modes::Angular { nt, shapes }))
}

impl NeumannSystem {
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn stiffness(&self) -> &SparseSym {
        &self.stiffness
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mode_count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn volume(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// `φ_k` at a node.
    pub fn mode_value(&self, k: usize, node: usize) -> f64 {
        match &self.modes {
            Modes::Dense(m) => m[(node, k)],
            Modes::Angular { nt, shapes, .. } => {
                let s = &shapes[k];
                if node == 0 {
                    return s.radial[0];
                }
                let (i, j) = (1 + (node - 1) / nt, (node - 1) % nt);
                let arg = s.m as f64 * TAU * j as f64 / *nt as f64;
                s.radial[i] * if s.sine { arg.sin() } else { arg.cos() }
            }
        }
    }

    pub fn mode_vector(&self, k: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.mode_value(k, i)).collect()
    }

    /// The `n × m` matrix of retained modes.
    pub fn basis(&self) -> Result<&DMatrix<f64>> {
        if let Modes::Dense(m) = &self.modes {
            return Ok(m);
        }
        if self.len() * self.mode_count() > DENSE_LIMIT {
            return Err(Error::Parameter(format!(
                "basis of {} nodes × {} modes is too large to materialize",
                self.len(),
                self.mode_count()
            )));
        }
        Ok(self.basis.get_or_init(|| {
            DMatrix::from_fn(self.len(), self.mode_count(), |i, k| self.mode_value(k, i))
        }))
    }

    /// Weight `e^{-λ_last t}` of the last retained mode.
    pub fn tail_weight(&self, t: f64) -> f64 {
        if self.mode_count() == self.len() {
            return 0.0;
        }
        (-self.eigenvalues.last().copied().unwrap_or(0.0) * t).exp()
    }

    fn check_truncation(&self, t: f64) {
        let tail = self.tail_weight(t);
        if tail > TRUNCATION_TOL && !self.warned.swap(true, AtomicOrdering::Relaxed) {
            log::warn!(
                "spectral truncation at t = {t}: last retained mode still has weight {tail:.3e}"
            );
        }
    }

    /// `h_t(x_i, x_j) = Σ_k e^{-λ_k t} φ_k(i) φ_k(j)`.
    pub fn heat_kernel(&self, t: f64, i: usize, j: usize) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Parameter(format!("heat kernel needs t > 0, got {t}")));
        }
        self.check_truncation(t);
        Ok(self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, l)| (-l * t).exp() * self.mode_value(k, i) * self.mode_value(k, j))
            .sum())
    }

    /// On-diagonal kernel `h_t(x_i, x_i)` for every node.
    pub fn kernel_diagonal(&self, t: f64) -> Result<Vec<f64>> {
        if !(t > 0.0) {
            return Err(Error::Parameter(format!("heat kernel needs t > 0, got {t}")));
        }
        self.check_truncation(t);
        let e: Vec<f64> = self.eigenvalues.iter().map(|l| (-l * t).exp()).collect();
        Ok((0..self.len())
            .map(|i| {
                e.iter()
                    .enumerate()
                    .map(|(k, ek)| ek * self.mode_value(k, i).powi(2))
                    .sum()
            })
            .collect())
    }

    /// Dense kernel matrix `[h_t(x_i, x_j)]`.
    pub fn kernel_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t > 0.0) {
            return Err(Error::Parameter(format!("heat kernel needs t > 0, got {t}")));
        }
        self.check_truncation(t);
        let phi = self.basis()?;
        let mut scaled = phi.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= (-self.eigenvalues[k] * t).exp();
        }
        Ok(&scaled * phi.transpose())
    }

    /// Mass-weighted coefficients `⟨u, φ_k⟩`.
    pub fn project(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.len() {
            return Err(Error::Parameter(format!(
                "expected {} node values, got {}",
                self.len(),
                u.len()
            )));
        }
        let wu: Vec<f64> = u.iter().zip(&self.mass).map(|(a, w)| a * w).collect();
        let phi = self.basis()?;
        Ok((phi.transpose() * nalgebra::DVector::from_vec(wu)).data.into())
    }

    /// `Σ_k g(λ_k) c_k φ_k`.
    pub fn synthesize(&self, coeffs: &[f64], g: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        let phi = self.basis()?;
        let c = nalgebra::DVector::from_iterator(
            coeffs.len(),
            coeffs.iter().zip(&self.eigenvalues).map(|(c, l)| c * g(*l)),
        );
        Ok((phi * c).data.into())
    }

    /// `e^{-tΔ} u` within the retained modes.
    pub fn evolve(&self, u: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_truncation(t.max(f64::MIN_POSITIVE));
        let c = self.project(u)?;
        self.synthesize(&c, |l| (-l * t).exp())
    }
}
