//! Result files.
//!
//! `results.csv` (schema 1) has one `trial` row per seed and a final
//! `aggregate` row:
//!
//! | column | meaning |
//! |---|---|
//! | `schema` | always `1` |
//! | `row` | `trial` or `aggregate` |
//! | `seed` | scenario seed; empty on the aggregate row |
//! | `method` | `bm_bcd` or `esdp_bcd` |
//! | `k` | sweeps; `relaxation+refinement` for `esdp_bcd` |
//! | `comm_rounds` | color rounds over all phases |
//! | `rmse` | body-frame relative RMSE in meters |
//! | `rmse_a` | absolute RMSE of the relaxation's positions (`esdp_bcd`) |
//! | `failed` | `1` when RMSE > 0.6 m or the solver errored; FR on the aggregate row |
//! | `error` | solver error message, if any |
//! | `st_s`, `pt_s` | serial and modeled parallel solve time in seconds |
//!
//! Only `st_s` and `pt_s` vary between identical runs.
//!
//! `sweep_<axis>.csv` (schema 1) has one row per axis value with columns
//! `schema, axis, value, method, trials, fr, k, mean_comm_rounds, mean_rmse,
//! mean_rmse_a, mean_st_s, mean_pt_s`, where `k` is the mean sweep count
//! (`relaxation+refinement` for `esdp_bcd`).

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};

use rangeloc::model::io::write_realization;
use rangeloc::model::Realization;

use crate::experiment::{Aggregate, TrialResult};

pub const SCHEMA: &str = "1";

pub const RUN_HEADER: [&str; 12] = [
    "schema",
    "row",
    "seed",
    "method",
    "k",
    "comm_rounds",
    "rmse",
    "rmse_a",
    "failed",
    "error",
    "st_s",
    "pt_s",
];

pub const SWEEP_HEADER: [&str; 12] = [
    "schema",
    "axis",
    "value",
    "method",
    "trials",
    "fr",
    "k",
    "mean_comm_rounds",
    "mean_rmse",
    "mean_rmse_a",
    "mean_st_s",
    "mean_pt_s",
];

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.6}"))
}

pub fn write_run_csv(path: &Path, results: &[TrialResult], agg: &Aggregate) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(RUN_HEADER)?;
    for r in results {
        w.write_record([
            SCHEMA.to_string(),
            "trial".into(),
            r.seed.to_string(),
            r.method.name().into(),
            r.k_label(),
            r.comm_rounds.to_string(),
            opt(r.rmse),
            opt(r.rmse_a),
            u8::from(r.failed).to_string(),
            r.error.clone().unwrap_or_default(),
            format!("{:.6}", r.st),
            format!("{:.6}", r.pt),
        ])?;
    }
    let method = results.first().map_or("", |r| r.method.name());
    w.write_record([
        SCHEMA.to_string(),
        "aggregate".into(),
        String::new(),
        method.into(),
        agg.k_label(),
        format!("{:.1}", agg.mean_comm_rounds),
        opt(agg.mean_rmse),
        opt(agg.mean_rmse_a),
        format!("{:.4}", agg.fr),
        String::new(),
        format!("{:.6}", agg.mean_st),
        format!("{:.6}", agg.mean_pt),
    ])?;
    w.flush()?;
    Ok(())
}

pub struct SweepRow {
    pub value: String,
    pub method: &'static str,
    pub agg: Aggregate,
}

pub fn write_sweep_csv(path: &Path, axis: &str, rows: &[SweepRow]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        let a = &r.agg;
        w.write_record([
            SCHEMA.to_string(),
            axis.to_string(),
            r.value.clone(),
            r.method.to_string(),
            a.trials.to_string(),
            format!("{:.4}", a.fr),
            a.k_label(),
            format!("{:.1}", a.mean_comm_rounds),
            opt(a.mean_rmse),
            opt(a.mean_rmse_a),
            format!("{:.6}", a.mean_st),
            format!("{:.6}", a.mean_pt),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn dump(path: &Path, p: &Realization) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_realization(BufWriter::new(f), p)?;
    Ok(())
}

/// Writes `seed_<s>_{initial,final,truth}.txt` (and `_extracted` for
/// ESDP-BCD) under `dir`.
pub fn write_dumps(dir: &Path, results: &[TrialResult]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for r in results {
        let Some(d) = &r.dumps else { continue };
        let file = |tag: &str| dir.join(format!("seed_{}_{tag}.txt", r.seed));
        dump(&file("initial"), &d.initial)?;
        dump(&file("final"), &d.final_)?;
        dump(&file("truth"), &d.truth)?;
        if let Some(ex) = &d.extracted {
            dump(&file("extracted"), ex)?;
        }
    }
    Ok(())
}
