//! JSON run configuration and its translation into library types.

use std::path::Path;

use panelflutter_core::aero::{AeroModel, Closure, DEFAULT_CUBIC, DEFAULT_N_THETA};
use panelflutter_core::dynamics::{
    Integrator, PlateConfig, DEFAULT_BLOWUP_AMPLITUDE, DEFAULT_FP_MAX_ITER, DEFAULT_FP_TOL,
};
use panelflutter_core::vonkarman::{InPlaneLoad, NonlinearityKind};
use panelflutter_core::{Domain, Field, Grid};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSection,
    pub grid: GridSection,
    pub plate: PlateSection,
    pub aero: AeroSection,
    pub time: TimeSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateSection {
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub k: f64,
    pub nonlinearity: NonlinearitySection,
    #[serde(rename = "F0", default)]
    pub f0: LoadPreset,
    #[serde(default)]
    pub p0: LoadPreset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySection {
    pub kind: NonlinearityName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityName {
    VonKarman,
    Berger,
    None,
}

/// Named load presets for `F0` and `p0`.
///
/// `radial` is the buckling device `F0 = -lambda (x^2 + y^2) / 2`, which
/// compresses the plate uniformly in both directions for `lambda > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadPreset {
    #[default]
    Zero,
    Sine { amplitude: f64 },
    Radial { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeroSection {
    pub model: AeroName,
    #[serde(rename = "U", default)]
    pub mach: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_theta: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cubic: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_star: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AeroName {
    Off,
    PistonLinear,
    PistonCubic,
    LowFreqSupersonic,
    CorrectedPiston,
    DelayedPotential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub integrator: IntegratorName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fp_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fp_max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blowup_amplitude: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorName {
    #[default]
    Newmark,
    Rk4,
}

/// Initial displacement and velocity. Every non-zero shape carries the factor
/// `sin(pi x / lx) sin(pi y / ly)` so that it vanishes with its slope on the
/// clamped edges: `bump` is that factor squared, `mode` multiplies it by
/// `sin(m pi x / lx) sin(n pi y / ly)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub u0: Shape,
    #[serde(default)]
    pub u1: Shape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    #[default]
    Zero,
    /// `A sin^2(pi x/lx) sin^2(pi y/ly)`, the smooth clamped bump.
    Bump { amplitude: f64 },
    /// `A sin(pi x/lx) sin(m pi x/lx) sin(pi y/ly) sin(n pi y/ly)`; clamped for every m, n >= 1.
    Mode { m: u32, n: u32, amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default)]
    pub probes: Vec<(f64, f64)>,
}

fn default_sample_every() -> usize {
    1
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            sample_every: default_sample_every(),
            probes: Vec::new(),
        }
    }
}

/// Configuration failures; all map to exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<panelflutter_core::Error> for ConfigError {
    fn from(e: panelflutter_core::Error) -> Self {
        ConfigError(e.to_string())
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid config: {e}")))?;
        cfg.plate_config()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        let domain = Domain::new(self.domain.lx, self.domain.ly)?;
        Ok(Grid::new(domain, self.grid.nx, self.grid.ny)?)
    }

    fn nonlinearity(&self) -> Result<NonlinearityKind, ConfigError> {
        let n = &self.plate.nonlinearity;
        match n.kind {
            NonlinearityName::VonKarman | NonlinearityName::None => {
                if n.b0.is_some() || n.b1.is_some() {
                    return Err(ConfigError(
                        "nonlinearity.b0/b1 only apply to kind \"berger\"".into(),
                    ));
                }
                Ok(if n.kind == NonlinearityName::None {
                    NonlinearityKind::None
                } else {
                    NonlinearityKind::VonKarman
                })
            }
            NonlinearityName::Berger => Ok(NonlinearityKind::Berger {
                b0: n.b0.unwrap_or(0.0),
                b1: n.b1.unwrap_or(1.0),
            }),
        }
    }

    fn closure(&self) -> Result<Closure, ConfigError> {
        let a = &self.aero;
        if a.cubic.is_some() && a.model != AeroName::PistonCubic {
            return Err(ConfigError("aero.cubic only applies to model \"piston_cubic\"".into()));
        }
        if (a.n_theta.is_some() || a.t_star.is_some()) && a.model != AeroName::DelayedPotential {
            return Err(ConfigError(
                "aero.n_theta/t_star only apply to model \"delayed_potential\"".into(),
            ));
        }
        Ok(match a.model {
            AeroName::Off => Closure::Off,
            AeroName::PistonLinear => Closure::PistonLinear,
            AeroName::PistonCubic => {
                let [c1, c2, c3] = a.cubic.unwrap_or([DEFAULT_CUBIC.0, DEFAULT_CUBIC.1, DEFAULT_CUBIC.2]);
                Closure::PistonCubic { c1, c2, c3 }
            }
            AeroName::LowFreqSupersonic => Closure::LowFreqSupersonic,
            AeroName::CorrectedPiston => Closure::CorrectedPiston,
            AeroName::DelayedPotential => Closure::DelayedPotential {
                n_theta: a.n_theta.unwrap_or(DEFAULT_N_THETA),
                t_star_override: a.t_star,
            },
        })
    }

    /// Library configuration; validates everything the library checks.
    pub fn plate_config(&self) -> Result<PlateConfig, ConfigError> {
        let g = self.grid()?;
        let mut cfg = PlateConfig::new(g, self.nonlinearity()?, self.time.dt, self.time.t_end);
        cfg.alpha = self.plate.alpha;
        cfg.k = self.plate.k;
        cfg.f0 = match self.plate.f0 {
            LoadPreset::Zero => InPlaneLoad::zero(&g),
            LoadPreset::Sine { amplitude } => {
                InPlaneLoad::from_fn(&g, move |x, y| amplitude * sine(&g, x, y))
            }
            LoadPreset::Radial { lambda } => {
                InPlaneLoad::from_fn(&g, move |x, y| -0.5 * lambda * (x * x + y * y))
            }
        };
        let p0 = match self.plate.p0 {
            LoadPreset::Zero => Field::zeros(&g),
            LoadPreset::Sine { amplitude } => Field::from_fn(&g, |x, y| amplitude * sine(&g, x, y)),
            LoadPreset::Radial { .. } => {
                return Err(ConfigError("p0 preset \"radial\" is only defined for F0".into()))
            }
        };
        cfg.aero = AeroModel::new(self.closure()?, self.aero.mach, p0)?;
        cfg.integrator = match self.time.integrator {
            IntegratorName::Newmark => Integrator::Newmark,
            IntegratorName::Rk4 => Integrator::Rk4,
        };
        cfg.fp_tol = self.time.fp_tol.unwrap_or(DEFAULT_FP_TOL);
        cfg.fp_max_iter = self.time.fp_max_iter.unwrap_or(DEFAULT_FP_MAX_ITER);
        cfg.blowup_amplitude = self.time.blowup_amplitude.unwrap_or(DEFAULT_BLOWUP_AMPLITUDE);
        cfg.sample_every = self.output.sample_every;
        cfg.probes = self.output.probes.clone();
        cfg.validate()?;
        for s in [&self.initial.u0, &self.initial.u1] {
            if let Shape::Mode { m, n, .. } = s {
                if *m == 0 || *n == 0 {
                    return Err(ConfigError("initial mode indices must be >= 1".into()));
                }
            }
        }
        Ok(cfg)
    }

    pub fn initial_fields(&self) -> Result<(Field, Field), ConfigError> {
        let g = self.grid()?;
        Ok((shape_field(&self.initial.u0, &g), shape_field(&self.initial.u1, &g)))
    }
}

fn sine(g: &Grid, x: f64, y: f64) -> f64 {
    (PI * x / g.domain.lx).sin() * (PI * y / g.domain.ly).sin()
}

pub fn shape_field(s: &Shape, g: &Grid) -> Field {
    let (lx, ly) = (g.domain.lx, g.domain.ly);
    match *s {
        Shape::Zero => Field::zeros(g),
        Shape::Bump { amplitude } => Field::from_fn(g, |x, y| amplitude * sine(g, x, y).powi(2)),
        Shape::Mode { m, n, amplitude } => Field::from_fn(g, |x, y| {
            amplitude
                * sine(g, x, y)
                * (m as f64 * PI * x / lx).sin()
                * (n as f64 * PI * y / ly).sin()
        }),
    }
}
