//! TOML experiment configuration.
//!
//! ```toml
//! [scenario]
//! shape = "custom"                 # cube | pyramid | hexagon | rectangle | custom
//! lattice = { kind = "cubic", nx = 3, ny = 3, nz = 3 }
//! b = 3.0
//! sigma = 0.1
//! rho = 0.5
//!
//! [run]
//! method = "bm_bcd"                # bm_bcd | esdp_bcd
//! trials = 20
//!
//! [bm]
//! r = 4
//! ```
//!
//! Every key except `scenario.shape` is optional; omitted keys take the
//! library defaults. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use rangeloc::bm_bcd::{BmConfig, GammaMode};
use rangeloc::engine::Schedule;
use rangeloc::esdp_bcd::{BarrierConfig, CrossEntryMode, EsdpConfig};
use rangeloc::model::{Lattice, ScenarioSpec, Shape};
use rangeloc::recover::PairSet;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub bm: BmSection,
    #[serde(default)]
    pub esdp: EsdpSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeName {
    Cube,
    Pyramid,
    Hexagon,
    Rectangle,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatticeSection {
    Cubic { nx: usize, ny: usize, nz: usize },
    Tetrahedral { layers: usize },
    Triangular { rings: usize },
    Square { nx: usize, ny: usize },
}

impl From<LatticeSection> for Lattice {
    fn from(l: LatticeSection) -> Self {
        match l {
            LatticeSection::Cubic { nx, ny, nz } => Lattice::Cubic { nx, ny, nz },
            LatticeSection::Tetrahedral { layers } => Lattice::Tetrahedral { layers },
            LatticeSection::Triangular { rings } => Lattice::Triangular { rings },
            LatticeSection::Square { nx, ny } => Lattice::Square { nx, ny },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub shape: ShapeName,
    /// Required when `shape = "custom"`.
    pub lattice: Option<LatticeSection>,
    /// Neighbor spacing in meters.
    pub b: Option<f64>,
    pub sigma: Option<f64>,
    /// Communication radius in meters. Takes precedence over `radius_factor`.
    pub comm_radius: Option<f64>,
    /// Communication radius as a multiple of `b`.
    pub radius_factor: Option<f64>,
    /// Initialization quality ρ.
    pub rho: Option<f64>,
    pub anchor_count: Option<usize>,
    pub eta: Option<f64>,
    pub anchor_noise: Option<f64>,
    pub tilt_range_deg: Option<f64>,
    pub prior_noise_deg: Option<f64>,
}

impl ScenarioSection {
    pub fn spec(&self) -> Result<ScenarioSpec> {
        let shape = match (self.shape, self.lattice) {
            (ShapeName::Cube, None) => Shape::Cube,
            (ShapeName::Pyramid, None) => Shape::Pyramid,
            (ShapeName::Hexagon, None) => Shape::Hexagon,
            (ShapeName::Rectangle, None) => Shape::Rectangle,
            (ShapeName::Custom, Some(l)) => Shape::Custom(l.into()),
            (ShapeName::Custom, None) => bail!("shape \"custom\" needs a [scenario] lattice"),
            (_, Some(_)) => bail!("lattice is only allowed with shape \"custom\""),
        };
        let mut spec = ScenarioSpec::new(shape);
        if let Some(b) = self.b {
            spec.b = b;
        }
        let factor = self
            .radius_factor
            .unwrap_or_else(|| shape.lattice().default_radius_factor());
        spec.comm_radius = self.comm_radius.unwrap_or(factor * spec.b);
        set(&mut spec.sigma, self.sigma);
        set(&mut spec.rho, self.rho);
        set(&mut spec.anchor_count, self.anchor_count);
        set(&mut spec.eta, self.eta);
        set(&mut spec.anchor_noise, self.anchor_noise);
        set(
            &mut spec.tilt_range,
            self.tilt_range_deg.map(f64::to_radians),
        );
        set(
            &mut spec.prior_noise,
            self.prior_noise_deg.map(f64::to_radians),
        );
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Method {
    BmBcd,
    EsdpBcd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::BmBcd => "bm_bcd",
            Method::EsdpBcd => "esdp_bcd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairsName {
    #[default]
    Neighbors,
    AllPairs,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub method: Method,
    pub trials: usize,
    /// Trial `t` uses scenario seed `seed + t`.
    pub seed: u64,
    pub out: PathBuf,
    pub schedule: ScheduleName,
    pub pairs: PairsName,
    /// Write initial, final and true realizations of every trial.
    pub dump_realizations: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            method: Method::BmBcd,
            trials: 1,
            seed: 0,
            out: PathBuf::from("results"),
            schedule: ScheduleName::Sequential,
            pairs: PairsName::Neighbors,
            dump_realizations: true,
        }
    }
}

impl RunSection {
    pub fn schedule(&self) -> Schedule {
        match self.schedule {
            ScheduleName::Sequential => Schedule::Sequential,
            ScheduleName::Parallel => Schedule::Parallel,
        }
    }

    pub fn pair_set(&self) -> PairSet {
        match self.pairs {
            PairsName::Neighbors => PairSet::Neighbors,
            PairsName::AllPairs => PairSet::AllPairs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaName {
    PerRobot,
    Global,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BmSection {
    /// Factor rank; `d + 1` when omitted.
    pub r: Option<usize>,
    pub eps: Option<f64>,
    pub eps_f: Option<f64>,
    pub gamma_mode: Option<GammaName>,
    pub gamma_scale: Option<f64>,
    pub gamma_shrink: Option<f64>,
    pub gamma_stall: Option<f64>,
    pub gamma_floor: Option<f64>,
    pub mu_l: Option<f64>,
    pub mu_z: Option<f64>,
    pub n_c: Option<usize>,
    pub max_dynamic: Option<usize>,
    pub max_continuation: Option<usize>,
    pub max_refine: Option<usize>,
    pub refine: Option<bool>,
    pub lift_scale: Option<f64>,
}

impl BmSection {
    pub fn config(&self, r: usize, schedule: Schedule, seed: u64) -> BmConfig {
        let mut c = BmConfig::new(r);
        set(&mut c.eps, self.eps);
        set(&mut c.eps_f, self.eps_f);
        set(
            &mut c.gamma_mode,
            self.gamma_mode.map(|g| match g {
                GammaName::PerRobot => GammaMode::PerRobot,
                GammaName::Global => GammaMode::Global,
            }),
        );
        set(&mut c.gamma_scale, self.gamma_scale);
        set(&mut c.gamma_shrink, self.gamma_shrink);
        set(&mut c.gamma_stall, self.gamma_stall);
        set(&mut c.gamma_floor, self.gamma_floor);
        set(&mut c.mu_l, self.mu_l);
        set(&mut c.mu_z, self.mu_z);
        set(&mut c.n_c, self.n_c);
        set(&mut c.max_dynamic, self.max_dynamic);
        set(&mut c.max_continuation, self.max_continuation);
        set(&mut c.max_refine, self.max_refine);
        set(&mut c.refine, self.refine);
        set(&mut c.lift_scale, self.lift_scale);
        c.schedule = schedule;
        c.seed = seed;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Overlap,
    StrictDisjoint,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSection {
    pub mu0: Option<f64>,
    pub decrease: Option<f64>,
    pub outer_tol: Option<f64>,
    pub newton_tol: Option<f64>,
    pub max_newton: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsdpSection {
    pub eps: Option<f64>,
    pub max_sweeps: Option<usize>,
    pub mode: Option<ModeName>,
    /// Refine the extracted positions with BM-BCD (default true). The
    /// refinement uses the `[bm]` settings with rank `refine_rank`.
    pub refine: Option<bool>,
    /// `d + 1` when omitted.
    pub refine_rank: Option<usize>,
    #[serde(default)]
    pub barrier: BarrierSection,
}

impl EsdpSection {
    pub fn config(&self, refine: Option<BmConfig>, schedule: Schedule, seed: u64) -> EsdpConfig {
        let mut b = BarrierConfig::default();
        let s = &self.barrier;
        set(&mut b.mu0, s.mu0);
        set(&mut b.decrease, s.decrease);
        set(&mut b.outer_tol, s.outer_tol);
        set(&mut b.newton_tol, s.newton_tol);
        set(&mut b.max_newton, s.max_newton);
        let mut c = EsdpConfig::new(2);
        set(&mut c.eps, self.eps);
        set(&mut c.max_sweeps, self.max_sweeps);
        set(
            &mut c.mode,
            self.mode.map(|m| match m {
                ModeName::Overlap => CrossEntryMode::Overlap,
                ModeName::StrictDisjoint => CrossEntryMode::StrictDisjoint,
            }),
        );
        c.barrier = b;
        c.refine = refine;
        c.schedule = schedule;
        c.seed = seed;
        c
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text)?;
        if cfg.run.trials == 0 {
            bail!("run.trials must be at least 1");
        }
        cfg.scenario.spec()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }
}
