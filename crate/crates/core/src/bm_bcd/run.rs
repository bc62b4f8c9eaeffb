use nalgebra::DMatrix;

use super::{
    cost_f, lift_initialization, local_costs, rel_change, solve_column_with, BmConfig, FactorPair,
    GammaMode, PenaltyState,
};
use crate::engine::{greedy_coloring, run_bcd, BlockAdapter, RoundStats, SweepControl};
use crate::error::Result;
use crate::model::{ProblemInstance, Realization};
use crate::recover::{recover_poses, PoseEstimate};

/// Result of a BM-BCD run.
#[derive(Debug, Clone)]
pub struct BmOutput {
    pub realization: Realization,
    pub poses: Vec<PoseEstimate>,
    pub stats: RoundStats,
    /// Factors at the end of the last phase.
    pub factors: FactorPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Dynamic,
    Continuation,
}

/// Column-update adapter. Block key `2·column + f` selects column `column` of
/// `U` (`f = 0`) or `V` (`f = 1`).
struct BmAdapter<'a> {
    inst: &'a ProblemInstance,
    cfg: &'a BmConfig,
    fp: FactorPair,
    pen: PenaltyState,
    gamma_min: Vec<f64>,
    phase: Phase,
    u_prev: DMatrix<f64>,
    v_prev: DMatrix<f64>,
    f_prev: f64,
    local_prev: Vec<f64>,
}

impl<'a> BmAdapter<'a> {
    fn new(
        inst: &'a ProblemInstance,
        cfg: &'a BmConfig,
        fp: FactorPair,
        pen: PenaltyState,
        phase: Phase,
    ) -> Self {
        let gamma_min = pen.gamma.iter().map(|g| g * cfg.gamma_floor).collect();
        let f_prev = cost_f(&fp, inst, &pen);
        let local_prev = local_costs(&fp, inst, &pen);
        Self {
            u_prev: fp.u.clone(),
            v_prev: fp.v.clone(),
            inst,
            cfg,
            fp,
            pen,
            gamma_min,
            phase,
            f_prev,
            local_prev,
        }
    }

    fn restart(&mut self, phase: Phase) {
        self.phase = phase;
        self.u_prev = self.fp.u.clone();
        self.v_prev = self.fp.v.clone();
        self.f_prev = cost_f(&self.fp, self.inst, &self.pen);
    }

    /// Halves the coupling of robots whose local cost stalled.
    fn adapt_gamma(&mut self) {
        let local = local_costs(&self.fp, self.inst, &self.pen);
        match self.cfg.gamma_mode {
            GammaMode::PerRobot => {
                for i in 0..self.inst.n() {
                    let prev = self.local_prev[i];
                    let gain = if prev > 0.0 {
                        (prev - local[i]) / prev
                    } else {
                        0.0
                    };
                    if gain < self.cfg.gamma_stall {
                        self.pen.gamma[i] =
                            (self.pen.gamma[i] * self.cfg.gamma_shrink).max(self.gamma_min[i]);
                    }
                }
            }
            GammaMode::Global => {
                let prev: f64 = self.local_prev.iter().sum();
                let now: f64 = local.iter().sum();
                let gain = if prev > 0.0 { (prev - now) / prev } else { 0.0 };
                if gain < self.cfg.gamma_stall {
                    for (g, &lo) in self.pen.gamma.iter_mut().zip(&self.gamma_min) {
                        *g = (*g * self.cfg.gamma_shrink).max(lo);
                    }
                }
            }
        }
        self.local_prev = local_costs(&self.fp, self.inst, &self.pen);
    }
}

impl BlockAdapter for BmAdapter<'_> {
    type Update = Vec<f64>;

    fn solve_block(&self, key: usize) -> Result<Vec<f64>> {
        let (k, f) = (key / 2, key % 2);
        let r = self.fp.r();
        if f == 0 {
            solve_column_with(&self.fp.u, &self.fp.v, r, k, self.inst, &self.pen)
        } else {
            solve_column_with(&self.fp.v, &self.fp.u, r, k, self.inst, &self.pen)
        }
    }

    fn apply_update(&mut self, key: usize, x: Vec<f64>) {
        let (k, f) = (key / 2, key % 2);
        let m = if f == 0 {
            &mut self.fp.u
        } else {
            &mut self.fp.v
        };
        m.column_mut(k).copy_from_slice(&x);
    }

    fn end_sweep(&mut self, _sweep: usize) -> Result<SweepControl> {
        let du = rel_change(&self.fp.u, &self.u_prev);
        let dv = rel_change(&self.fp.v, &self.v_prev);
        self.u_prev.copy_from(&self.fp.u);
        self.v_prev.copy_from(&self.fp.v);
        let done = match self.phase {
            Phase::Continuation => du.max(dv) < self.cfg.eps,
            Phase::Dynamic => {
                let f = cost_f(&self.fp, self.inst, &self.pen);
                let decrease = if self.f_prev > 0.0 {
                    (self.f_prev - f) / self.f_prev
                } else {
                    0.0
                };
                let su = super::centered(&self.fp.u).norm();
                let sv = super::centered(&self.fp.v).norm();
                let gap = if su + sv > 0.0 {
                    4.0 * (&self.fp.u - &self.fp.v).norm() / (su + sv)
                } else {
                    0.0
                };
                let done = decrease < self.cfg.eps_f || gap.max(du).max(dv) < self.cfg.eps;
                if !done {
                    self.adapt_gamma();
                    self.f_prev = cost_f(&self.fp, self.inst, &self.pen);
                }
                done
            }
        };
        Ok(if done {
            SweepControl::Converged
        } else {
            SweepControl::Continue
        })
    }
}

/// Column classes: for every robot color, the side-0 columns of `U`, then
/// of `V`, then the side-1 columns of `U` and `V`. Robots in `skip` are left out.
fn column_classes(inst: &ProblemInstance, skip: Option<usize>) -> Vec<Vec<usize>> {
    let colors = greedy_coloring(&inst.graph().adjacency_lists());
    let mut classes = Vec::with_capacity(4 * colors.len());
    for robots in &colors {
        for side in 0..2 {
            for f in 0..2 {
                classes.push(
                    robots
                        .iter()
                        .filter(|&&i| Some(i) != skip)
                        .map(|&i| 2 * (2 * i + side) + f)
                        .collect(),
                );
            }
        }
    }
    classes
}

/// Robot with the most neighbors, smallest id on ties.
fn gauge_robot(inst: &ProblemInstance) -> usize {
    (0..inst.n())
        .max_by(|&a, &b| {
            inst.graph()
                .degree(a)
                .cmp(&inst.graph().degree(b))
                .then(b.cmp(&a))
        })
        .unwrap_or(0)
}

/// One pass of the adaptive-γ, gauge fixing and continuation phases at the
/// factors' current rank. `cap` bounds the total number of sweeps.
fn solve_rank(
    inst: &ProblemInstance,
    cfg: &BmConfig,
    fp: FactorPair,
    cap: Option<usize>,
    tag: &str,
    stats: &mut RoundStats,
) -> Result<FactorPair> {
    let mut budget = cap.unwrap_or(usize::MAX);
    let pen = PenaltyState::initial(inst, cfg);
    let mut ad = BmAdapter::new(inst, cfg, fp, pen, Phase::Dynamic);

    let free = column_classes(inst, None);
    let cap_dyn = cfg.max_dynamic.min(budget);
    let ph = run_bcd(
        &mut ad,
        &free,
        cap_dyn,
        cfg.schedule,
        &format!("{tag}dynamic"),
    )?;
    budget = budget.saturating_sub(ph.sweeps);
    let mut converged = ph.converged;
    stats.push(ph);
    ad.fp.average();

    let fixed = gauge_robot(inst);
    let classes = column_classes(inst, Some(fixed));
    for round in 0..cfg.n_c {
        ad.restart(Phase::Continuation);
        let cap_c = cfg.max_continuation.min(budget);
        let ph = run_bcd(
            &mut ad,
            &classes,
            cap_c,
            cfg.schedule,
            &format!("{tag}continuation{}", round + 1),
        )?;
        budget = budget.saturating_sub(ph.sweeps);
        converged &= ph.converged;
        stats.push(ph);
        ad.fp.average();
        if round + 1 < cfg.n_c {
            ad.pen.shrink();
        }
    }
    stats.converged = converged;
    stats.objective = cost_f(&ad.fp, inst, &ad.pen);
    Ok(ad.fp)
}

/// Runs BM-BCD from `p0`: adaptive-γ, gauge fixing and continuation at rank
/// `cfg.r`, then the same sequence again at rank `d` when `cfg.r > d`.
pub fn run_bm_bcd(inst: &ProblemInstance, p0: &Realization, cfg: &BmConfig) -> Result<BmOutput> {
    let d = inst.d();
    cfg.validate(d)?;
    if p0.d() != d || p0.n_robots() != inst.n() {
        return Err(crate::error::Error::Dimension(
            "initialization does not match the instance".into(),
        ));
    }
    let scale = cfg.lift_scale * inst.scale().spacing;
    let fp = lift_initialization(p0, cfg.r, scale, cfg.seed)?;
    let mut stats = RoundStats::default();
    let mut fp = solve_rank(inst, cfg, fp, None, "", &mut stats)?;
    let mut converged = stats.converged;

    if cfg.refine && cfg.r > d {
        let p = fp.realization();
        let lifted = lift_initialization(&p, d, 0.0, 0)?;
        let mut refine = RoundStats::default();
        fp = solve_rank(
            inst,
            cfg,
            lifted,
            Some(cfg.max_refine),
            "refine-",
            &mut refine,
        )?;
        converged &= refine.converged;
        stats.objective = refine.objective;
        stats.absorb(refine);
    }
    stats.converged = converged;
    let realization = fp.realization();
    let poses = recover_poses(&realization, inst)?;
    Ok(BmOutput {
        realization,
        poses,
        stats,
        factors: fp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bm_bcd::{Factor, PenaltyState};
    use crate::engine::Schedule;
    use crate::model::{
        generate_scenario, sample_initialization, Lattice, ScenarioSpec, SensorIndex, Shape,
    };
    use crate::recover::{rmse_body, PairSet};

    fn cube(sigma: f64, seed: u64) -> ProblemInstance {
        let mut spec = ScenarioSpec::new(Shape::Custom(Lattice::Cubic {
            nx: 3,
            ny: 3,
            nz: 3,
        }));
        spec.sigma = sigma;
        spec.seed = seed;
        spec.anchor_count = 0;
        generate_scenario(&spec).unwrap()
    }

    fn rmse(inst: &ProblemInstance, out: &BmOutput) -> f64 {
        let t = inst.truth().unwrap();
        rmse_body(&out.poses, &t.poses, inst.graph(), PairSet::Neighbors).unwrap()
    }

    #[test]
    fn classes_are_independent() {
        let inst = cube(0.1, 0);
        let classes = column_classes(&inst, Some(gauge_robot(&inst)));
        for class in &classes {
            for (a, &ka) in class.iter().enumerate() {
                for &kb in &class[a + 1..] {
                    let (ra, rb) = (ka / 4, kb / 4);
                    assert_ne!(ra, rb);
                    assert!(inst.graph().neighbors(ra).iter().all(|&(j, _)| j != rb));
                }
            }
        }
        let total: usize = classes.iter().map(Vec::len).sum();
        assert_eq!(total, 4 * (inst.n() - 1));
    }

    #[test]
    fn noiseless_planar_recovers_truth() {
        let mut spec = ScenarioSpec::new(Shape::Custom(Lattice::Square { nx: 4, ny: 4 }));
        spec.sigma = 0.0;
        spec.anchor_count = 0;
        let inst = generate_scenario(&spec).unwrap();
        let p0 = sample_initialization(&inst, 0.0, 2).unwrap();
        let mut cfg = BmConfig::new(inst.d());
        cfg.eps = 1e-6;
        let out = run_bm_bcd(&inst, &p0, &cfg).unwrap();
        assert!(rmse(&inst, &out) < 1e-3, "rmse {}", rmse(&inst, &out));
        assert!(out.stats.pt <= out.stats.st);
    }

    #[test]
    fn noiseless_cube_is_close() {
        // A small global tilt is only restrained by the height penalty, which
        // is weak next to the floored noiseless weights, so 3D stops near 1e-3.
        let inst = cube(0.0, 1);
        let p0 = sample_initialization(&inst, 0.0, 2).unwrap();
        let out = run_bm_bcd(&inst, &p0, &BmConfig::new(inst.d() + 1)).unwrap();
        assert!(rmse(&inst, &out) < 1e-2, "rmse {}", rmse(&inst, &out));
    }

    #[test]
    fn noisy_cube_is_accurate() {
        let inst = cube(0.1, 3);
        let p0 = sample_initialization(&inst, 0.5, 4).unwrap();
        let out = run_bm_bcd(&inst, &p0, &BmConfig::new(inst.d() + 1)).unwrap();
        assert!(rmse(&inst, &out) < 0.4, "rmse {}", rmse(&inst, &out));
    }

    #[test]
    fn schedules_are_bit_identical() {
        let inst = cube(0.1, 5);
        let p0 = sample_initialization(&inst, 0.5, 6).unwrap();
        let mut cfg = BmConfig::new(4);
        let a = run_bm_bcd(&inst, &p0, &cfg).unwrap();
        cfg.schedule = Schedule::Parallel;
        let b = run_bm_bcd(&inst, &p0, &cfg).unwrap();
        assert_eq!(a.factors, b.factors);
        assert_eq!(a.stats.sweeps, b.stats.sweeps);
    }

    #[test]
    fn frozen_phase_descends_per_column() {
        let inst = cube(0.1, 7);
        let p0 = sample_initialization(&inst, 0.5, 8).unwrap();
        let cfg = BmConfig::new(4);
        let mut fp = lift_initialization(&p0, 4, 0.3, 0).unwrap();
        let pen = PenaltyState::initial(&inst, &cfg);
        let mut f = crate::bm_bcd::cost_f(&fp, &inst, &pen);
        for _ in 0..5 {
            for k in 0..2 * inst.n() {
                for which in [Factor::U, Factor::V] {
                    let s = SensorIndex::from_flat(k);
                    let x = crate::bm_bcd::block_update_column(&fp, which, s, &inst, &pen).unwrap();
                    match which {
                        Factor::U => fp.u.set_column(k, &x),
                        Factor::V => fp.v.set_column(k, &x),
                    }
                    let g = crate::bm_bcd::cost_f(&fp, &inst, &pen);
                    assert!(g <= f * (1.0 + 1e-10), "{g} > {f}");
                    f = g;
                }
            }
        }
    }
}
