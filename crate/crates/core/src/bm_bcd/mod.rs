//! Burer–Monteiro factorized localization solved by exact block coordinate
//! descent over single columns of the two factors.
//!
//! The cost is
//!
//! ```text
//! F(U, V) = Σ_meas w (ΔUᵀΔV − q̃)²                       measurement terms
//!         + Σ_i 1/σν² ((U_i0 − U_i1)ᵀ(V_i0 − V_i1) − dν)²   sensor separation
//!         + Σ_i 1/(2σz²) [(ΔU_i,z − dz)² + (ΔV_i,z − dz)²]   height difference (3D)
//!         + Σ_i γ_i (‖U_i0 − V_i0‖² + ‖U_i1 − V_i1‖²)         factor coupling
//! ```
//!
//! with `U, V ∈ R^{r×2n}` and the realization read off the first `d` rows.

mod cost;
mod run;
mod update;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::engine::Schedule;
use crate::error::{Error, Result};
use crate::model::{tilt_row, ProblemInstance, Realization};

pub use cost::{cost_f, local_costs};
pub use run::{run_bm_bcd, BmOutput};
pub use update::{block_update_column, column_gradient, solve_column_with, ColumnAccess};

/// The two factors of the lifted realization.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    d: usize,
}

impl FactorPair {
    pub fn new(u: DMatrix<f64>, v: DMatrix<f64>, d: usize) -> Result<Self> {
        if u.shape() != v.shape() {
            return Err(Error::Dimension("factors differ in shape".into()));
        }
        if u.nrows() < d {
            return Err(Error::RankTooSmall { r: u.nrows(), d });
        }
        if !u.ncols().is_multiple_of(2) {
            return Err(Error::Dimension("factor column count must be even".into()));
        }
        Ok(Self { u, v, d })
    }

    pub fn r(&self) -> usize {
        self.u.nrows()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// The fixed projection `[I_d; 0]`.
    pub fn q(&self) -> DMatrix<f64> {
        DMatrix::identity(self.r(), self.d)
    }

    /// `Qᵀ (U + V) / 2`.
    pub fn realization(&self) -> Realization {
        let m = (self.u.rows(0, self.d) + self.v.rows(0, self.d)) * 0.5;
        Realization::new(m).expect("finite factors")
    }

    pub fn average(&mut self) {
        let m = (&self.u + &self.v) * 0.5;
        self.u.copy_from(&m);
        self.v = m;
    }
}

/// Which factor a column update targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    U,
    V,
}

/// Embeds `p0` in the first `d` rows and fills the remaining rows with
/// `N(0, scale²)` entries. Both factors start equal.
pub fn lift_initialization(
    p0: &Realization,
    r: usize,
    scale: f64,
    seed: u64,
) -> Result<FactorPair> {
    let d = p0.d();
    if r < d {
        return Err(Error::RankTooSmall { r, d });
    }
    let cols = p0.matrix().ncols();
    let mut u = DMatrix::zeros(r, cols);
    u.rows_mut(0, d).copy_from(p0.matrix());
    if r > d && scale > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, scale).expect("finite lift scale");
        for c in 0..cols {
            for row in d..r {
                u[(row, c)] = normal.sample(&mut rng);
            }
        }
    }
    FactorPair::new(u.clone(), u, d)
}

/// Per-robot penalty weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyState {
    pub sigma_nu: Vec<f64>,
    /// Unused in 2D.
    pub sigma_z: Vec<f64>,
    pub gamma: Vec<f64>,
    pub mu_l: f64,
    pub mu_z: f64,
}

/// Floor for the initial height-penalty scale, in meters.
const SIGMA_Z_FLOOR: f64 = 1e-3;

impl PenaltyState {
    /// Starting penalties: `σν = 0.2 dν`, `σz` from the sensitivity of `dz` to
    /// the tilt angles times π/45, and the coupling weights from `gamma_init`.
    pub fn initial(inst: &ProblemInstance, cfg: &BmConfig) -> Self {
        let n = inst.n();
        let sigma_nu = inst.dnu().iter().map(|&v| 0.2 * v).collect();
        let sigma_z = (0..n)
            .map(|i| {
                if inst.d() != 3 {
                    return 1.0;
                }
                let pr = inst.priors()[i];
                let dn = inst.offsets()[i].baseline();
                let (sp, cp) = pr.pitch.sin_cos();
                let (sr, cr) = pr.roll.sin_cos();
                let d_pitch = -cp * dn[0] - sp * sr * dn[1] - sp * cr * dn[2];
                let d_roll = cp * cr * dn[1] - cp * sr * dn[2];
                debug_assert!((tilt_row(pr.pitch, pr.roll).dot(&dn) - inst.dz()[i]).abs() < 1e-12);
                ((d_pitch + d_roll).abs() * std::f64::consts::PI / 45.0).max(SIGMA_Z_FLOOR)
            })
            .collect();
        Self {
            sigma_nu,
            sigma_z,
            gamma: gamma_init(inst, cfg),
            mu_l: cfg.mu_l,
            mu_z: cfg.mu_z,
        }
    }

    pub fn w_nu(&self, i: usize) -> f64 {
        1.0 / (self.sigma_nu[i] * self.sigma_nu[i])
    }

    pub fn w_z(&self, i: usize) -> f64 {
        1.0 / (self.sigma_z[i] * self.sigma_z[i])
    }

    /// One continuation step: `σν ← √μ_l σν`, `σz ← √μ_z σz`.
    pub fn shrink(&mut self) {
        let (a, b) = (self.mu_l.sqrt(), self.mu_z.sqrt());
        self.sigma_nu.iter_mut().for_each(|s| *s *= a);
        self.sigma_z.iter_mut().for_each(|s| *s *= b);
    }
}

/// `γ_i = scale · mean incident weight`, or one shared value in global mode.
fn gamma_init(inst: &ProblemInstance, cfg: &BmConfig) -> Vec<f64> {
    let n = inst.n();
    let robot_mean = |i: usize| {
        let ws: Vec<f64> = (0..2)
            .flat_map(|u| inst.incident(2 * i + u).iter().map(|m| m.weight))
            .collect();
        (!ws.is_empty()).then(|| ws.iter().sum::<f64>() / ws.len() as f64)
    };
    match cfg.gamma_mode {
        GammaMode::PerRobot => (0..n)
            .map(|i| cfg.gamma_scale * robot_mean(i).unwrap_or(1.0))
            .collect(),
        GammaMode::Global => {
            let ws: Vec<f64> = inst
                .graph()
                .edges()
                .iter()
                .flat_map(|e| e.meas.iter().map(|m| m.weight()))
                .collect();
            let mean = if ws.is_empty() {
                1.0
            } else {
                ws.iter().sum::<f64>() / ws.len() as f64
            };
            vec![cfg.gamma_scale * mean; n]
        }
    }
}

/// Whether each robot keeps its own coupling weight or all robots share one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaMode {
    #[default]
    PerRobot,
    Global,
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct BmConfig {
    /// Rank of the factors, at least `d`.
    pub r: usize,
    /// Relative-change tolerance.
    pub eps: f64,
    /// Relative objective-decrease threshold ending the adaptive-γ phase.
    pub eps_f: f64,
    pub gamma_mode: GammaMode,
    /// `γ^(1)` as a multiple of the mean incident measurement weight.
    pub gamma_scale: f64,
    /// Multiplier applied to `γ_i` when its local objective stalls.
    pub gamma_shrink: f64,
    /// Relative local decrease below which a robot counts as stalled.
    pub gamma_stall: f64,
    /// `γ_i` never drops below this fraction of `γ_i^(1)`.
    pub gamma_floor: f64,
    pub mu_l: f64,
    pub mu_z: f64,
    /// Number of continuation rounds.
    pub n_c: usize,
    pub max_dynamic: usize,
    pub max_continuation: usize,
    pub max_refine: usize,
    /// Run the rank-d refinement pass when `r > d`.
    pub refine: bool,
    /// Standard deviation of the lifted rows as a multiple of the lattice spacing.
    pub lift_scale: f64,
    pub schedule: Schedule,
    /// Seed of the lifted rows.
    pub seed: u64,
}

impl BmConfig {
    pub fn new(r: usize) -> Self {
        Self {
            r,
            eps: 5e-4,
            eps_f: 1e-3,
            gamma_mode: GammaMode::PerRobot,
            gamma_scale: 100.0,
            gamma_shrink: 0.5,
            gamma_stall: 0.01,
            gamma_floor: 0.1,
            mu_l: 1.0 / 20.0,
            mu_z: 1.0 / 20.0,
            n_c: 3,
            max_dynamic: 500,
            max_continuation: 500,
            max_refine: 1000,
            refine: true,
            lift_scale: 0.1,
            schedule: Schedule::Sequential,
            seed: 0,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.r < d {
            return Err(Error::RankTooSmall { r: self.r, d });
        }
        let bad = |m: &str| Err(Error::InvalidScenario(m.to_string()));
        if !(self.eps > 0.0) || !(self.eps_f > 0.0) {
            return bad("eps and eps_f must be positive");
        }
        if !(self.mu_l > 0.0 && self.mu_l < 1.0) || !(self.mu_z > 0.0 && self.mu_z < 1.0) {
            return bad("mu_l and mu_z must lie in (0, 1)");
        }
        if !(self.gamma_scale > 0.0) || !(self.gamma_shrink > 0.0 && self.gamma_shrink <= 1.0) {
            return bad("gamma_scale must be positive and gamma_shrink in (0, 1]");
        }
        if !(self.gamma_floor > 0.0) {
            return bad("gamma_floor must be positive");
        }
        Ok(())
    }
}

/// Row-centered copy: subtracts each row's mean over all columns.
pub(crate) fn centered(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = m.clone();
    let cols = m.ncols().max(1) as f64;
    for mut row in c.row_iter_mut() {
        let mean = row.sum() / cols;
        row.add_scalar_mut(-mean);
    }
    c
}

/// `‖center(a − b)‖ / ‖center(b)‖`, zero when both vanish.
pub(crate) fn rel_change(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let num = centered(&(a - b)).norm();
    let den = centered(b).norm();
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}
