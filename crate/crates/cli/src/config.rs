//! The JSON run configuration.

use std::path::{Path, PathBuf};

use grushin_core::error::{Error, Result};
use grushin_core::fields::ScalarField;
use grushin_core::geometry::{Aabb, Grid, GrushinGeometry, SubBox};
use grushin_core::nonlinearity::{CompactForcing, Nonlinearity, Source};
use grushin_core::solver::{InitialGuess, SolverConfig, TorsionOracle};
use grushin_core::variation::MapKind;
use serde::Deserialize;

/// `(N, l, gamma, p)`, all required.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub n_x: usize,
    pub n_y: usize,
    pub gamma: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportSpec {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
}

/// Dirichlet data; zero unless given.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundarySpec {
    Zero,
    /// Traces of the radial torsion solution of the given radius
    /// (`gamma = 0` only).
    Torsion {
        radius: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySpec {
    pub levels: u32,
    pub radii: Vec<f64>,
    /// Fixed spacing of the whole-space study.
    pub spacing: Option<f64>,
    pub t0: f64,
    pub delta: f64,
    pub maps: Vec<String>,
    /// Amplitude of the control perturbation relative to `max |u|`.
    pub control_amplitude: f64,
}

impl Default for StudySpec {
    fn default() -> Self {
        Self {
            levels: 3,
            radii: Vec::new(),
            spacing: None,
            t0: 0.2,
            delta: 0.25,
            maps: Vec::new(),
            control_amplitude: 0.25,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    /// Per-axis `[a, b]`.
    pub domain: Vec<[f64; 2]>,
    pub resolution: Resolution,
    pub nonlinearity: String,
    #[serde(default)]
    pub forcing_support: Option<SupportSpec>,
    #[serde(default)]
    pub boundary: Option<BoundarySpec>,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Physical corners of `D`; must fall on grid nodes.
    #[serde(default)]
    pub subdomain: Option<BoxSpec>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub study: StudySpec,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Everything validated and built.
pub struct Run {
    pub cfg: RunConfig,
    pub geo: GrushinGeometry,
    pub source: Box<dyn Source>,
    pub maps: Vec<MapKind>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        // serde_json's message already ends in "at line L column C"
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

impl Run {
    pub fn new(mut cfg: RunConfig, seed: Option<u64>) -> Result<Self> {
        let g = &cfg.geometry;
        let geo = GrushinGeometry::new(g.n_x, g.n_y, g.gamma, g.p)?;
        let dim = geo.dim();
        if cfg.domain.len() != dim {
            return Err(Error::Config(format!(
                "domain has {} axes, the geometry needs {dim}",
                cfg.domain.len()
            )));
        }
        if let Resolution::PerAxis(m) = &cfg.resolution {
            if m.len() != dim {
                return Err(Error::Config(format!(
                    "resolution has {} entries, the geometry needs {dim}",
                    m.len()
                )));
            }
        }
        if let Some(s) = seed.or(cfg.seed) {
            if let InitialGuess::Random { .. } = cfg.solver.init {
                cfg.solver.init = InitialGuess::Random { seed: s };
            }
        }
        cfg.solver.validate()?;
        let nl = Nonlinearity::parse(&cfg.nonlinearity, g.n_x, g.n_y)?;
        let source: Box<dyn Source> = match &cfg.forcing_support {
            Some(s) => Box::new(CompactForcing::new(
                nl,
                s.center.clone(),
                s.half_width.clone(),
            )?),
            None => Box::new(nl),
        };
        if let Some(BoundarySpec::Torsion { radius }) = &cfg.boundary {
            TorsionOracle::new(&geo, *radius)?;
        }
        let maps = if cfg.study.maps.is_empty() {
            (0..dim)
                .map(MapKind::Translate)
                .chain([MapKind::Scale])
                .collect()
        } else {
            cfg.study
                .maps
                .iter()
                .map(|s| s.parse())
                .collect::<Result<Vec<MapKind>>>()?
        };
        for m in &maps {
            if let MapKind::Translate(j) = m {
                if *j >= dim {
                    return Err(Error::Config(format!(
                        "map {m}: axis out of range 1..={dim}"
                    )));
                }
            }
        }
        if let Some(t) = cfg.threshold {
            if !(t >= 0.0) {
                return Err(Error::Config(format!("threshold must be >= 0, got {t}")));
            }
        }
        let run = Self {
            cfg,
            geo,
            source,
            maps,
        };
        // builds the base grid and D once to surface shape errors early
        let grid = run.grid(0)?;
        run.subdomain(&grid)?;
        Ok(run)
    }

    fn base_nodes(&self) -> Vec<usize> {
        match &self.cfg.resolution {
            Resolution::Uniform(m) => vec![*m; self.geo.dim()],
            Resolution::PerAxis(m) => m.clone(),
        }
    }

    /// The grid after `level` halvings of the configured spacing.
    pub fn grid(&self, level: u32) -> Result<Grid> {
        let bounds: Vec<(f64, f64)> = self.cfg.domain.iter().map(|b| (b[0], b[1])).collect();
        let nodes: Vec<usize> = self
            .base_nodes()
            .iter()
            .map(|&m| {
                if m < 3 {
                    m
                } else {
                    grushin_core::convergence::refined_nodes(m, level)
                }
            })
            .collect();
        Grid::new(&bounds, &nodes)
    }

    /// `D` on `grid`, if configured.
    pub fn subdomain(&self, grid: &Grid) -> Result<Option<SubBox>> {
        let Some(spec) = &self.cfg.subdomain else {
            return Ok(None);
        };
        let dim = grid.dim();
        if spec.lo.len() != dim || spec.hi.len() != dim {
            return Err(Error::Config(format!(
                "subdomain corners need {dim} coordinates"
            )));
        }
        let aabb = Aabb {
            lo: spec.lo.clone(),
            hi: spec.hi.clone(),
        };
        let d = SubBox::covering(grid, &aabb)?;
        let snapped = d.aabb(grid);
        for k in 0..dim {
            let tol = 1e-9 * grid.spacing()[k];
            if (snapped.lo[k] - aabb.lo[k]).abs() > tol || (snapped.hi[k] - aabb.hi[k]).abs() > tol
            {
                return Err(Error::Config(format!(
                    "subdomain corner on axis {} does not fall on a grid node",
                    k + 1
                )));
            }
        }
        Ok(Some(d))
    }

    pub fn require_subdomain(&self, grid: &Grid) -> Result<SubBox> {
        self.subdomain(grid)?
            .ok_or_else(|| Error::Config("this command needs a 'subdomain'".into()))
    }

    /// Dirichlet data on `grid` (`None` for zero data).
    pub fn boundary(&self, grid: &Grid) -> Result<Option<ScalarField>> {
        match &self.cfg.boundary {
            None | Some(BoundarySpec::Zero) => Ok(None),
            Some(BoundarySpec::Torsion { radius }) => {
                Ok(Some(TorsionOracle::new(&self.geo, *radius)?.field(grid)))
            }
        }
    }

    pub fn threshold(&self, flag: Option<f64>) -> f64 {
        flag.or(self.cfg.threshold).unwrap_or(DEFAULT_THRESHOLD)
    }
}

/// Residual bar when neither the flag nor the config sets one.
pub const DEFAULT_THRESHOLD: f64 = 0.1;
