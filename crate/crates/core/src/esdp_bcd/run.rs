use std::sync::Mutex;

use super::{
    apply_solution, assemble_subproblem, solve_subproblem, BarrierConfig, CrossEntryMode,
    EsdpState, SubproblemModel,
};
use crate::bm_bcd::{rel_change, run_bm_bcd, BmConfig};
use crate::engine::{greedy_coloring, run_bcd, BlockAdapter, RoundStats, Schedule, SweepControl};
use crate::error::{Error, Result};
use crate::model::{ProblemInstance, Realization};
use crate::recover::{recover_poses, PoseEstimate};

/// Settings of an ESDP-BCD run.
#[derive(Debug, Clone, PartialEq)]
pub struct EsdpConfig {
    /// Stop once the relative change of the positions in a sweep is below this.
    pub eps: f64,
    pub max_sweeps: usize,
    pub barrier: BarrierConfig,
    pub mode: CrossEntryMode,
    pub schedule: Schedule,
    /// Seed of the scattered start used when no initialization is given.
    pub seed: u64,
    /// BM-BCD refinement of the extracted positions, skipped when `None`.
    pub refine: Option<BmConfig>,
}

impl EsdpConfig {
    /// Defaults with rank `d + 1` refinement.
    pub fn new(d: usize) -> Self {
        Self {
            eps: 5e-2,
            max_sweeps: 100,
            barrier: BarrierConfig::default(),
            mode: CrossEntryMode::Overlap,
            schedule: Schedule::Sequential,
            seed: 0,
            refine: Some(BmConfig::new(d + 1)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || self.max_sweeps == 0 {
            return Err(Error::InvalidScenario(format!(
                "eps {} and max_sweeps {} must be positive",
                self.eps, self.max_sweeps
            )));
        }
        self.barrier.validate()
    }
}

#[derive(Debug, Clone)]
pub struct EsdpOutput {
    /// Final positions, after refinement when enabled.
    pub realization: Realization,
    pub poses: Vec<PoseEstimate>,
    /// Positions extracted from the relaxation before refinement.
    pub extracted: Realization,
    pub state: EsdpState,
    pub esdp_stats: RoundStats,
    pub refine_stats: Option<RoundStats>,
    /// Both stages combined.
    pub stats: RoundStats,
}

impl EsdpOutput {
    /// Iterations as `"relaxation+refinement"`.
    pub fn iterations_label(&self) -> String {
        let r = self.refine_stats.as_ref().map_or(0, |s| s.sweeps);
        format!("{}+{}", self.esdp_stats.sweeps, r)
    }
}

type Observer<'a> = Mutex<&'a mut (dyn FnMut(usize, &EsdpState) + Send)>;

struct EsdpAdapter<'a> {
    inst: &'a ProblemInstance,
    cfg: &'a EsdpConfig,
    state: EsdpState,
    p_prev: Realization,
    observer: Option<Observer<'a>>,
}

impl BlockAdapter for EsdpAdapter<'_> {
    type Update = (SubproblemModel, nalgebra::DVector<f64>);

    fn solve_block(&self, robot: usize) -> Result<Self::Update> {
        let model = assemble_subproblem(&self.state, robot, self.inst, self.cfg.mode)?;
        let sol = solve_subproblem(&model, &self.cfg.barrier)?;
        Ok((model, sol.values))
    }

    fn apply_update(&mut self, robot: usize, (model, values): Self::Update) {
        apply_solution(&mut self.state, &model, &values);
        if let Some(obs) = &mut self.observer {
            let f = obs.get_mut().expect("observer lock");
            f(robot, &self.state);
        }
    }

    fn end_sweep(&mut self, _sweep: usize) -> Result<SweepControl> {
        let change = rel_change(self.state.p.matrix(), self.p_prev.matrix());
        self.p_prev = self.state.p.clone();
        Ok(if change <= self.cfg.eps {
            SweepControl::Converged
        } else {
            SweepControl::Continue
        })
    }
}

/// Runs ESDP-BCD from `p0` (or a scattered start around the anchors), then
/// refines the extracted positions with BM-BCD.
pub fn run_esdp_bcd(
    inst: &ProblemInstance,
    p0: Option<&Realization>,
    cfg: &EsdpConfig,
) -> Result<EsdpOutput> {
    run(inst, p0, cfg, None)
}

/// [`run_esdp_bcd`] calling `observer(robot, state)` after every block update.
pub fn run_esdp_bcd_observed(
    inst: &ProblemInstance,
    p0: Option<&Realization>,
    cfg: &EsdpConfig,
    observer: &mut (dyn FnMut(usize, &EsdpState) + Send),
) -> Result<EsdpOutput> {
    run(inst, p0, cfg, Some(Mutex::new(observer)))
}

fn run<'a>(
    inst: &'a ProblemInstance,
    p0: Option<&Realization>,
    cfg: &'a EsdpConfig,
    observer: Option<Observer<'a>>,
) -> Result<EsdpOutput> {
    cfg.validate()?;
    if inst.anchors().is_empty() {
        return Err(Error::NoAnchors);
    }
    let state = match p0 {
        Some(p) => EsdpState::from_realization(inst, p)?,
        None => EsdpState::scattered(inst, cfg.seed)?,
    };
    let anchors = inst.anchors();
    let classes: Vec<Vec<usize>> = greedy_coloring(&inst.graph().adjacency_lists())
        .into_iter()
        .map(|c| c.into_iter().filter(|&i| !anchors.is_anchor(i)).collect())
        .collect();
    let mut ad = EsdpAdapter {
        inst,
        cfg,
        p_prev: state.p.clone(),
        state,
        observer,
    };
    let phase = run_bcd(&mut ad, &classes, cfg.max_sweeps, cfg.schedule, "esdp")?;
    let mut esdp_stats = RoundStats {
        converged: phase.converged,
        ..RoundStats::default()
    };
    esdp_stats.push(phase);
    esdp_stats.objective = super::cost_g(&ad.state, inst);
    let extracted = ad.state.extract();

    let mut stats = esdp_stats.clone();
    let (realization, refine_stats) = match &cfg.refine {
        Some(bm) => {
            let out = run_bm_bcd(inst, &extracted, bm)?;
            stats.converged &= out.stats.converged;
            stats.objective = out.stats.objective;
            stats.absorb(out.stats.clone());
            (out.realization, Some(out.stats))
        }
        None => (extracted.clone(), None),
    };
    let poses = recover_poses(&realization, inst)?;
    Ok(EsdpOutput {
        realization,
        poses,
        extracted,
        state: ad.state,
        esdp_stats,
        refine_stats,
        stats,
    })
}
