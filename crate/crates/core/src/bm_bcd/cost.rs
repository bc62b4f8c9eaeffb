use nalgebra::DMatrix;

use super::{FactorPair, PenaltyState};
use crate::model::ProblemInstance;

fn diff_dot(u: &DMatrix<f64>, v: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let (ua, ub) = (u.column(a), u.column(b));
    let (va, vb) = (v.column(a), v.column(b));
    (0..u.nrows())
        .map(|t| (ua[t] - ub[t]) * (va[t] - vb[t]))
        .sum()
}

fn robot_terms(fp: &FactorPair, inst: &ProblemInstance, pen: &PenaltyState, i: usize) -> f64 {
    let (u, v) = (&fp.u, &fp.v);
    let (k0, k1) = (2 * i, 2 * i + 1);
    let nu = diff_dot(u, v, k0, k1) - inst.dnu()[i];
    let mut f = pen.w_nu(i) * nu * nu;
    if inst.d() == 3 {
        let dz = inst.dz()[i];
        let eu = u[(2, k0)] - u[(2, k1)] - dz;
        let ev = v[(2, k0)] - v[(2, k1)] - dz;
        f += 0.5 * pen.w_z(i) * (eu * eu + ev * ev);
    }
    let coupling =
        (u.column(k0) - v.column(k0)).norm_squared() + (u.column(k1) - v.column(k1)).norm_squared();
    f + pen.gamma[i] * coupling
}

/// Evaluates the penalized factorized cost.
pub fn cost_f(fp: &FactorPair, inst: &ProblemInstance, pen: &PenaltyState) -> f64 {
    let mut f = 0.0;
    for e in inst.graph().edges() {
        for m in &e.meas {
            let res = diff_dot(&fp.u, &fp.v, m.a.flat(), m.b.flat()) - m.q_tilde;
            f += m.weight() * res * res;
        }
    }
    for i in 0..inst.n() {
        f += robot_terms(fp, inst, pen, i);
    }
    f
}

/// Per-robot share of the cost: all measurement terms touching the robot
/// plus its own penalty and coupling terms.
pub fn local_costs(fp: &FactorPair, inst: &ProblemInstance, pen: &PenaltyState) -> Vec<f64> {
    let mut local: Vec<f64> = (0..inst.n())
        .map(|i| robot_terms(fp, inst, pen, i))
        .collect();
    for e in inst.graph().edges() {
        let s: f64 = e
            .meas
            .iter()
            .map(|m| {
                let res = diff_dot(&fp.u, &fp.v, m.a.flat(), m.b.flat()) - m.q_tilde;
                m.weight() * res * res
            })
            .sum();
        local[e.i] += s;
        local[e.j] += s;
    }
    local
}
