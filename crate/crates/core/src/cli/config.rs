//! Strict JSON run configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::CutoffFamily;
use crate::fermi::{Boundary, DomainSpec, FourierProfile};
use crate::geometry::{ModelSurface, Point, WarpProfile};

pub const DEFAULT_QUAD: usize = 64;
pub const DEFAULT_RESOLUTION: usize = 256;
pub const DEFAULT_G: f64 = 3.0;
pub const DEFAULT_SEED: u64 = 42;
pub const MIN_RESOLUTION: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceConfig {
    Constant {
        kappa: f64,
        #[serde(default = "default_dimension")]
        dimension: usize,
    },
    Warped {
        profile: ProfileConfig,
        #[serde(default)]
        r_min: f64,
        /// Absent means unbounded.
        #[serde(default)]
        r_max: Option<f64>,
    },
}

fn default_dimension() -> usize {
    2
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig::Constant {
            kappa: 0.0,
            dimension: 2,
        }
    }
}

/// `f(r) = Σ coeffs[k] r^k + cosh·cosh r + sinh·sinh r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileConfig {
    PolyCoshMix {
        coeffs: Vec<f64>,
        #[serde(default)]
        cosh: f64,
        #[serde(default)]
        sinh: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryConfig {
    /// Geodesic disk; `center` in normal Cartesian coordinates of the chart.
    Disk {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
    },
    /// `ρ(θ) = c₀ + Σ_k cos[k] cos kθ + sin[k-1] sin kθ` on the flat plane.
    Fourier {
        coeffs_cos: Vec<f64>,
        #[serde(default)]
        coeffs_sin: Vec<f64>,
    },
    /// `(0, length)`, heat diagnostics only.
    Interval { length: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffPreset {
    Ball,
    Smoothstep,
}

/// Cutoff gradient bound: a number or a named preset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CutoffChoice {
    Value(f64),
    Preset(CutoffPreset),
}

impl Default for CutoffChoice {
    fn default() -> Self {
        CutoffChoice::Value(DEFAULT_G)
    }
}

impl CutoffChoice {
    pub fn family(&self) -> Result<CutoffFamily> {
        match self {
            CutoffChoice::Preset(CutoffPreset::Ball) => Ok(CutoffFamily::ball()),
            CutoffChoice::Preset(CutoffPreset::Smoothstep) => Ok(CutoffFamily::smoothstep()),
            CutoffChoice::Value(g) => CutoffFamily::with_gradient_bound(*g)
                .map_err(|e| Error::Config(format!("G: {e}"))),
        }
    }

    /// Parses a command-line value: a number, `ball` or `smoothstep`.
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "ball" => Ok(CutoffChoice::Preset(CutoffPreset::Ball)),
            "smoothstep" => Ok(CutoffChoice::Preset(CutoffPreset::Smoothstep)),
            t => t
                .parse::<f64>()
                .map(CutoffChoice::Value)
                .map_err(|_| Error::Config(format!("G: expected a number, `ball` or `smoothstep`, got `{t}`"))),
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    #[serde(default)]
    pub K: f64,
    /// Defaults to `1/R0` when a ball radius is given, else 0.
    #[serde(default)]
    pub H: Option<f64>,
    #[serde(default = "default_dimension")]
    pub n: usize,
    /// Use the exact ratios of a flat ball of this radius.
    #[serde(default)]
    pub R0: Option<f64>,
    #[serde(default = "default_profile_steps")]
    pub profile_steps: usize,
}

fn default_profile_steps() -> usize {
    16
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            K: 0.0,
            H: None,
            n: 2,
            R0: None,
            profile_steps: default_profile_steps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatConfig {
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    /// Defaults to `diam²`.
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default = "default_t_steps")]
    pub t_steps: usize,
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// Base points for the diagonal and doubling checks.
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_t_min() -> f64 {
    1e-3
}
fn default_t_steps() -> usize {
    12
}
fn default_modes() -> usize {
    2000
}
fn default_points() -> usize {
    16
}
fn default_alpha() -> f64 {
    1.0
}

impl Default for HeatConfig {
    fn default() -> Self {
        Self {
            t_min: default_t_min(),
            t_max: None,
            t_steps: default_t_steps(),
            modes: default_modes(),
            points: default_points(),
            alpha: default_alpha(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl Range {
    /// `steps` equispaced values from `from` to `to` inclusive.
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.from];
        }
        let h = (self.to - self.from) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.from + i as f64 * h).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepCommand {
    #[default]
    Constants,
    Regularity,
    VerifyExtension,
    Heat,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub command: SweepCommand,
    #[serde(default)]
    pub K: Option<Range>,
    #[serde(default)]
    pub H: Option<Range>,
    #[serde(default)]
    pub r: Option<Range>,
    #[serde(default)]
    pub R0: Option<Range>,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub K: Option<f64>,
    pub H: Option<f64>,
    pub r: Option<f64>,
    pub R0: Option<f64>,
}

impl SweepConfig {
    /// Cartesian product of the ranges, `K` varying slowest.
    pub fn points(&self) -> Vec<SweepPoint> {
        let axis = |r: &Option<Range>| match r {
            Some(r) => r.values().into_iter().map(Some).collect(),
            None => vec![None],
        };
        let (ks, hs, rs, r0s): (Vec<_>, Vec<_>, Vec<_>, Vec<_>) =
            (axis(&self.K), axis(&self.H), axis(&self.r), axis(&self.R0));
        let mut out = Vec::new();
        for &k in &ks {
            for &h in &hs {
                for &r in &rs {
                    for &r0 in &r0s {
                        out.push(SweepPoint {
                            index: out.len(),
                            K: k,
                            H: h,
                            r,
                            R0: r0,
                        });
                    }
                }
            }
        }
        out
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub surface: SurfaceConfig,
    #[serde(default)]
    pub boundary: Option<BoundaryConfig>,
    /// Tube radius.
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default)]
    pub G: CutoffChoice,
    #[serde(default = "default_quad")]
    pub quad: usize,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Random fields per extension check.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default)]
    pub heat: HeatConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

fn default_quad() -> usize {
    DEFAULT_QUAD
}
fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}
fn default_samples() -> usize {
    16
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            surface: SurfaceConfig::default(),
            boundary: None,
            r: None,
            G: CutoffChoice::default(),
            quad: DEFAULT_QUAD,
            resolution: DEFAULT_RESOLUTION,
            samples: default_samples(),
            seed: DEFAULT_SEED,
            constants: ConstantsConfig::default(),
            heat: HeatConfig::default(),
            sweep: None,
            report: None,
            csv: None,
        }
    }
}

/// Deserializes `text` with errors prefixed by the offending key path.
pub(crate) fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." || path == "?" {
            Error::Config(e.into_inner().to_string())
        } else {
            Error::Config(format!("{path}: {}", e.into_inner()))
        }
    })?;
    de.end().map_err(|e| Error::Config(e.to_string()))?;
    Ok(value)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = from_json(text)?;
    cfg.validate()?;
    Ok(cfg)
}

fn finite(key: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{key} must be finite")))
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    finite(key, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{key} must be positive")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        match &self.surface {
            SurfaceConfig::Constant { kappa, dimension } => {
                finite("surface.kappa", *kappa)?;
                if !(2..=3).contains(dimension) {
                    return Err(Error::Config("surface.dimension must be 2 or 3".into()));
                }
            }
            SurfaceConfig::Warped {
                profile: ProfileConfig::PolyCoshMix { coeffs, cosh, sinh },
                r_min,
                r_max,
            } => {
                for (i, c) in coeffs.iter().enumerate() {
                    finite(&format!("surface.profile.coeffs[{i}]"), *c)?;
                }
                finite("surface.profile.cosh", *cosh)?;
                finite("surface.profile.sinh", *sinh)?;
                finite("surface.r_min", *r_min)?;
                if let Some(m) = r_max {
                    finite("surface.r_max", *m)?;
                }
            }
        }
        match &self.boundary {
            Some(BoundaryConfig::Disk { center, radius }) => {
                finite("boundary.center[0]", center[0])?;
                finite("boundary.center[1]", center[1])?;
                positive("boundary.radius", *radius)?;
            }
            Some(BoundaryConfig::Fourier {
                coeffs_cos,
                coeffs_sin,
            }) => {
                if coeffs_cos.is_empty() {
                    return Err(Error::Config("boundary.coeffs_cos must not be empty".into()));
                }
                for (i, c) in coeffs_cos.iter().enumerate() {
                    finite(&format!("boundary.coeffs_cos[{i}]"), *c)?;
                }
                for (i, c) in coeffs_sin.iter().enumerate() {
                    finite(&format!("boundary.coeffs_sin[{i}]"), *c)?;
                }
            }
            Some(BoundaryConfig::Interval { length }) => positive("boundary.length", *length)?,
            None => {}
        }
        if let Some(r) = self.r {
            positive("r", r)?;
        }
        self.G.family()?;
        if self.quad < 16 {
            return Err(Error::Config("quad must be at least 16".into()));
        }
        if self.resolution < MIN_RESOLUTION {
            return Err(Error::Config(format!("resolution must be at least {MIN_RESOLUTION}")));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        let c = &self.constants;
        finite("constants.K", c.K)?;
        if let Some(h) = c.H {
            finite("constants.H", h)?;
        }
        if let Some(r0) = c.R0 {
            positive("constants.R0", r0)?;
        }
        if !(2..=3).contains(&c.n) {
            return Err(Error::Config("constants.n must be 2 or 3".into()));
        }
        if c.profile_steps == 0 {
            return Err(Error::Config("constants.profile_steps must be at least 1".into()));
        }
        let h = &self.heat;
        positive("heat.t_min", h.t_min)?;
        if let Some(t) = h.t_max {
            positive("heat.t_max", t)?;
            if t < h.t_min {
                return Err(Error::Config("heat.t_max must not be below heat.t_min".into()));
            }
        }
        if h.t_steps < 2 {
            return Err(Error::Config("heat.t_steps must be at least 2".into()));
        }
        if h.modes == 0 {
            return Err(Error::Config("heat.modes must be at least 1".into()));
        }
        if h.points == 0 {
            return Err(Error::Config("heat.points must be at least 1".into()));
        }
        if !(h.alpha > 0.0 && h.alpha <= 1.0) {
            return Err(Error::Config("heat.alpha must lie in (0, 1]".into()));
        }
        if let Some(s) = &self.sweep {
            for (key, range) in [("K", &s.K), ("H", &s.H), ("r", &s.r), ("R0", &s.R0)] {
                if let Some(range) = range {
                    finite(&format!("sweep.{key}.from"), range.from)?;
                    finite(&format!("sweep.{key}.to"), range.to)?;
                    if range.steps == 0 {
                        return Err(Error::Config(format!("sweep.{key}.steps must be at least 1")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn model_surface(&self) -> Result<ModelSurface> {
        match &self.surface {
            SurfaceConfig::Constant { kappa, dimension } => {
                ModelSurface::constant(*kappa).with_dimension(*dimension)
            }
            SurfaceConfig::Warped {
                profile: ProfileConfig::PolyCoshMix { coeffs, cosh, sinh },
                r_min,
                r_max,
            } => {
                let profile = WarpProfile {
                    poly: coeffs.clone(),
                    cosh: *cosh,
                    sinh: *sinh,
                };
                ModelSurface::warped(profile, *r_min, r_max.unwrap_or(f64::INFINITY))
            }
        }
    }

    pub fn boundary(&self) -> Result<&BoundaryConfig> {
        self.boundary
            .as_ref()
            .ok_or_else(|| Error::Config("missing key `boundary`".into()))
    }

    /// The smooth domain; interval boundaries are rejected.
    pub fn domain(&self) -> Result<DomainSpec> {
        let boundary = match self.boundary()? {
            BoundaryConfig::Disk { center, radius } => Boundary::GeodesicDisk {
                center: Point::from_cartesian(center[0], center[1]),
                radius: *radius,
            },
            BoundaryConfig::Fourier {
                coeffs_cos,
                coeffs_sin,
            } => Boundary::RadialProfile(FourierProfile {
                cos: coeffs_cos.clone(),
                sin: coeffs_sin.clone(),
            }),
            BoundaryConfig::Interval { .. } => {
                return Err(Error::Config(
                    "boundary: an interval is only supported by the heat command".into(),
                ))
            }
        };
        DomainSpec::new(self.model_surface()?, boundary)
    }

    pub fn tube_radius(&self) -> Result<f64> {
        self.r.ok_or_else(|| Error::Config("missing key `r`".into()))
    }

    /// Copy with one sweep point applied.
    pub fn at_point(&self, p: &SweepPoint, command: SweepCommand) -> Result<RunConfig> {
        let mut cfg = self.clone();
        cfg.sweep = None;
        if let Some(r) = p.r {
            cfg.r = Some(r);
        }
        match command {
            SweepCommand::Constants => {
                if let Some(k) = p.K {
                    cfg.constants.K = k;
                }
                if let Some(h) = p.H {
                    cfg.constants.H = Some(h);
                }
                if let Some(r0) = p.R0 {
                    cfg.constants.R0 = Some(r0);
                }
            }
            _ => {
                if p.H.is_some() {
                    return Err(Error::Config(
                        "sweep.H is only supported by the constants command".into(),
                    ));
                }
                if let Some(k) = p.K {
                    match &mut cfg.surface {
                        SurfaceConfig::Constant { kappa, .. } => *kappa = k,
                        SurfaceConfig::Warped { .. } => {
                            return Err(Error::Config(
                                "sweep.K needs a constant-curvature surface".into(),
                            ))
                        }
                    }
                }
                if let Some(r0) = p.R0 {
                    match &mut cfg.boundary {
                        Some(BoundaryConfig::Disk { radius, .. }) => *radius = r0,
                        Some(BoundaryConfig::Interval { length }) => *length = r0,
                        _ => {
                            return Err(Error::Config("sweep.R0 needs a disk boundary".into()))
                        }
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
