//! Seeded trials and their aggregation.

use anyhow::{Context, Result};
use rayon::prelude::*;

use rangeloc::bm_bcd::run_bm_bcd;
use rangeloc::esdp_bcd::run_esdp_bcd;
use rangeloc::model::{generate_scenario, sample_initialization, Realization, ScenarioSpec};
use rangeloc::recover::{failure_rate, rmse_a, rmse_body, FAILURE_THRESHOLD};

use crate::config::{Config, Method};

/// The initialization of a trial with scenario seed `s` is drawn with seed
/// `s + INIT_SEED_OFFSET`, so it never shares a stream with the scenario.
pub const INIT_SEED_OFFSET: u64 = 1000;

/// Everything that varies between the points of a sweep.
#[derive(Debug, Clone)]
pub struct Setting {
    pub spec: ScenarioSpec,
    pub method: Method,
    /// BM-BCD rank, or the refinement rank of ESDP-BCD. `d + 1` when `None`.
    pub rank: Option<usize>,
}

impl Setting {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        Ok(Self {
            spec: cfg.scenario.spec()?,
            method: cfg.run.method,
            rank: match cfg.run.method {
                Method::BmBcd => cfg.bm.r,
                Method::EsdpBcd => cfg.esdp.refine_rank,
            },
        })
    }
}

#[derive(Debug, Clone)]
pub struct Dumps {
    pub initial: Realization,
    pub final_: Realization,
    pub truth: Realization,
    /// Positions read off the relaxation before refinement.
    pub extracted: Option<Realization>,
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub seed: u64,
    pub method: Method,
    /// Total sweeps over all phases.
    pub k: usize,
    /// `(relaxation, refinement)` sweeps for ESDP-BCD.
    pub k_split: Option<(usize, usize)>,
    pub comm_rounds: usize,
    pub st: f64,
    pub pt: f64,
    pub rmse: Option<f64>,
    /// Absolute RMSE of the relaxation's positions (ESDP-BCD only).
    pub rmse_a: Option<f64>,
    pub failed: bool,
    pub error: Option<String>,
    pub dumps: Option<Dumps>,
}

impl TrialResult {
    /// `k`, or `"relaxation+refinement"` for ESDP-BCD.
    pub fn k_label(&self) -> String {
        match self.k_split {
            Some((a, b)) => format!("{a}+{b}"),
            None => self.k.to_string(),
        }
    }
}

/// Runs one trial. Scenario errors are returned; solver errors are recorded in
/// the result.
pub fn run_trial(cfg: &Config, setting: &Setting, seed: u64) -> Result<TrialResult> {
    let mut spec = setting.spec.clone();
    spec.seed = seed;
    let inst = generate_scenario(&spec).with_context(|| format!("scenario seed {seed}"))?;
    let truth = inst
        .truth()
        .context("generated scenario lacks ground truth")?;
    let p0 = sample_initialization(&inst, spec.rho, seed + INIT_SEED_OFFSET)?;
    let rank = setting.rank.unwrap_or(inst.d() + 1);
    let schedule = cfg.run.schedule();
    let bm = cfg.bm.config(rank, schedule, seed);

    let mut res = TrialResult {
        seed,
        method: setting.method,
        k: 0,
        k_split: None,
        comm_rounds: 0,
        st: 0.0,
        pt: 0.0,
        rmse: None,
        rmse_a: None,
        failed: true,
        error: None,
        dumps: None,
    };
    let solved = match setting.method {
        Method::BmBcd => {
            run_bm_bcd(&inst, &p0, &bm).map(|out| (out.realization, out.poses, out.stats, None))
        }
        Method::EsdpBcd => {
            let refine = cfg.esdp.refine.unwrap_or(true).then_some(bm);
            let es = cfg.esdp.config(refine, schedule, seed);
            run_esdp_bcd(&inst, Some(&p0), &es).map(|out| {
                let split = (
                    out.esdp_stats.sweeps,
                    out.refine_stats.as_ref().map_or(0, |s| s.sweeps),
                );
                (
                    out.realization,
                    out.poses,
                    out.stats,
                    Some((out.extracted, split)),
                )
            })
        }
    };
    let (fin, poses, stats, esdp) = match solved {
        Ok(s) => s,
        Err(e) => {
            res.error = Some(e.to_string());
            return Ok(res);
        }
    };
    let rmse = rmse_body(&poses, &truth.poses, inst.graph(), cfg.run.pair_set())?;
    res.k = stats.sweeps;
    res.comm_rounds = stats.comm_rounds;
    res.st = stats.st;
    res.pt = stats.pt;
    res.rmse = Some(rmse);
    res.failed = rmse > FAILURE_THRESHOLD;
    let mut extracted = None;
    if let Some((ex, split)) = esdp {
        res.k_split = Some(split);
        res.rmse_a = Some(rmse_a(&ex, &truth.realization)?);
        extracted = Some(ex);
    }
    if cfg.run.dump_realizations {
        res.dumps = Some(Dumps {
            initial: p0,
            final_: fin,
            truth: truth.realization.clone(),
            extracted,
        });
    }
    Ok(res)
}

/// Runs trials `seed_base .. seed_base + trials` concurrently, returned in
/// seed order.
pub fn run_trials(cfg: &Config, setting: &Setting) -> Result<Vec<TrialResult>> {
    let base = cfg.run.seed;
    (0..cfg.run.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(cfg, setting, base + t))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub trials: usize,
    /// Failed trials, solver errors included, over all trials.
    pub fr: f64,
    pub mean_k: f64,
    pub mean_k_split: Option<(f64, f64)>,
    pub mean_comm_rounds: f64,
    pub mean_st: f64,
    pub mean_pt: f64,
    pub mean_rmse: Option<f64>,
    pub mean_rmse_a: Option<f64>,
}

impl Aggregate {
    pub fn k_label(&self) -> String {
        match self.mean_k_split {
            Some((a, b)) => format!("{a:.1}+{b:.1}"),
            None => format!("{:.1}", self.mean_k),
        }
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Means over the trials that finished; FR over all trials.
pub fn aggregate(results: &[TrialResult]) -> Aggregate {
    let ok: Vec<&TrialResult> = results.iter().filter(|r| r.error.is_none()).collect();
    let flags: Vec<f64> = results
        .iter()
        .map(|r| if r.failed { 1.0 } else { 0.0 })
        .collect();
    let m = |f: fn(&TrialResult) -> f64| mean(ok.iter().map(|r| f(r))).unwrap_or(f64::NAN);
    let split = ok.iter().all(|r| r.k_split.is_some()) && !ok.is_empty();
    Aggregate {
        trials: results.len(),
        fr: failure_rate(&flags, 0.5),
        mean_k: m(|r| r.k as f64),
        mean_k_split: split.then(|| {
            (
                m(|r| r.k_split.unwrap().0 as f64),
                m(|r| r.k_split.unwrap().1 as f64),
            )
        }),
        mean_comm_rounds: m(|r| r.comm_rounds as f64),
        mean_st: m(|r| r.st),
        mean_pt: m(|r| r.pt),
        mean_rmse: mean(ok.iter().filter_map(|r| r.rmse)),
        mean_rmse_a: mean(ok.iter().filter_map(|r| r.rmse_a)),
    }
}
