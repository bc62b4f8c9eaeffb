//! Anchored edge-based SDP relaxation, solved robot by robot.
//!
//! The relaxation keeps a lifted Gram entry for every sensor, every robot's
//! sensor pair and every measured sensor pair between non-anchor robots. Each
//! block update is a small convex quadratic program over one robot's entries,
//! solved by a log-barrier Newton method. The estimate is then refined with
//! [`crate::bm_bcd::run_bm_bcd`].

mod assemble;
mod barrier;
mod run;

pub use assemble::{apply_solution, assemble_subproblem, CrossEntryMode, EdgeSlot};
pub use barrier::{
    solve_subproblem, BarrierConfig, BarrierSolution, Cone, SquareTerm, SubproblemModel,
};
pub use run::{run_esdp_bcd, run_esdp_bcd_observed, EsdpConfig, EsdpOutput};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{ProblemInstance, Realization, SensorIndex};
use crate::numerics::{min_eigenvalue, SymMatrix};

/// Primal state of the relaxation restricted to its constrained entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EsdpState {
    pub p: Realization,
    /// Diagonal lifted entry of every sensor, indexed by flat sensor index.
    pub x_diag: Vec<f64>,
    /// Lifted entry between the two sensors of each robot.
    pub x_intra: Vec<f64>,
    /// Lifted entries of each graph edge, `[2u + v]` for `(i, u)`, `(j, v)`
    /// with `i` the edge's first robot. Unused when an endpoint is an anchor.
    pub x_edge: Vec<[f64; 4]>,
}

impl EsdpState {
    /// Gram entries of `p` with anchors moved to their estimates and one unit
    /// added to every free diagonal.
    pub fn from_realization(inst: &ProblemInstance, p: &Realization) -> Result<Self> {
        let n = inst.n();
        if p.d() != inst.d() || p.n_robots() != n {
            return Err(Error::Dimension(
                "initialization does not match the instance".into(),
            ));
        }
        let mut p = p.clone();
        for &a in inst.anchors().robots() {
            for side in 0..2 {
                let s = SensorIndex::new(a, side);
                let est = inst
                    .anchors()
                    .estimate(s)
                    .expect("anchor has estimates")
                    .clone();
                p.set_sensor(s, &est);
            }
        }
        let x_diag = (0..2 * n)
            .map(|k| {
                let s = SensorIndex::from_flat(k);
                let g = p.sensor(s).norm_squared();
                if inst.anchors().is_anchor(s.robot) {
                    g
                } else {
                    g + 1.0
                }
            })
            .collect();
        let x_intra = (0..n)
            .map(|i| {
                p.sensor(SensorIndex::new(i, 0))
                    .dot(&p.sensor(SensorIndex::new(i, 1)))
            })
            .collect();
        let x_edge = inst
            .graph()
            .edges()
            .iter()
            .map(|e| {
                let mut x = [0.0; 4];
                for (k, m) in e.meas.iter().enumerate() {
                    x[k] = p.sensor(m.a).dot(&p.sensor(m.b));
                }
                x
            })
            .collect();
        Ok(Self {
            p,
            x_diag,
            x_intra,
            x_edge,
        })
    }

    /// Default start: the anchors' centroid plus Gaussian scatter of one
    /// lattice spacing on every sensor.
    pub fn scattered(inst: &ProblemInstance, seed: u64) -> Result<Self> {
        let anchors = inst.anchors();
        if anchors.is_empty() {
            return Err(Error::NoAnchors);
        }
        let d = inst.d();
        let mut center = DVector::zeros(d);
        for &a in anchors.robots() {
            for side in 0..2 {
                center += anchors
                    .estimate(SensorIndex::new(a, side))
                    .expect("anchor estimate");
            }
        }
        center /= (2 * anchors.robots().len()) as f64;
        let normal = Normal::new(0.0, inst.scale().spacing)
            .map_err(|e| Error::InvalidScenario(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = DMatrix::from_fn(d, 2 * inst.n(), |r, _| center[r] + normal.sample(&mut rng));
        Self::from_realization(inst, &Realization::new(p)?)
    }

    /// The position block of the relaxation.
    pub fn extract(&self) -> Realization {
        self.p.clone()
    }

    /// Lifted entry between two distinct sensors that share a constraint.
    /// Pairs involving an anchor use the eliminated value `aᵀp`.
    pub fn cross(&self, inst: &ProblemInstance, a: SensorIndex, b: SensorIndex) -> Option<f64> {
        if a.robot == b.robot {
            return (a.side != b.side).then(|| self.x_intra[a.robot]);
        }
        let anchors = inst.anchors();
        if anchors.is_anchor(a.robot) || anchors.is_anchor(b.robot) {
            return Some(self.p.sensor(a).dot(&self.p.sensor(b)));
        }
        let nb = inst.graph().neighbors(a.robot);
        let pos = nb.binary_search_by_key(&b.robot, |&(j, _)| j).ok()?;
        let e = nb[pos].1;
        let k = if inst.graph().edges()[e].i == a.robot {
            2 * a.side + b.side
        } else {
            2 * b.side + a.side
        };
        Some(self.x_edge[e][k])
    }

    /// The `(d+2)×(d+2)` matrix `[I, p_a, p_b; ·, X_aa, X_ab; ·, ·, X_bb]`.
    pub fn block_matrix(
        &self,
        inst: &ProblemInstance,
        a: SensorIndex,
        b: SensorIndex,
    ) -> Option<DMatrix<f64>> {
        let x_ab = self.cross(inst, a, b)?;
        let d = self.p.d();
        let mut m = DMatrix::identity(d + 2, d + 2);
        for (col, s) in [(d, a), (d + 1, b)] {
            let ps = self.p.sensor(s);
            for r in 0..d {
                m[(r, col)] = ps[r];
                m[(col, r)] = ps[r];
            }
            m[(col, col)] = self.x_diag[s.flat()];
        }
        m[(d, d + 1)] = x_ab;
        m[(d + 1, d)] = x_ab;
        Some(m)
    }
}

/// `X_kk − ‖p_k‖²` for sensor `k`, floored at `1e-8·max(1, X_kk)`.
pub fn relaxation_error(state: &EsdpState, sensor: SensorIndex) -> f64 {
    let x = state.x_diag[sensor.flat()];
    let gap = x - state.p.sensor(sensor).norm_squared();
    gap.max(1e-8 * x.max(1.0))
}

/// Weighted squared residuals over all graph and anchor measurements.
pub fn cost_g(state: &EsdpState, inst: &ProblemInstance) -> f64 {
    let mut g = 0.0;
    let mut add = |a: SensorIndex, b: SensorIndex, q: f64, w: f64| {
        let x_ab = state
            .cross(inst, a, b)
            .expect("measured pair is constrained");
        let r = state.x_diag[a.flat()] + state.x_diag[b.flat()] - 2.0 * x_ab - q;
        g += w * r * r;
    };
    for e in inst.graph().edges() {
        for m in &e.meas {
            add(m.a, m.b, m.q_tilde, m.weight());
        }
    }
    for m in inst.anchors().measurements() {
        add(m.a, m.b, m.q_tilde, m.weight());
    }
    g
}

/// Smallest eigenvalue over the constraint blocks touching `robot`, or over
/// all blocks when `robot` is `None`.
pub fn min_block_eigenvalue(
    state: &EsdpState,
    inst: &ProblemInstance,
    robot: Option<usize>,
) -> f64 {
    let touches = |i: usize, j: usize| robot.is_none_or(|r| r == i || r == j);
    let mut pairs = Vec::new();
    for i in 0..inst.n() {
        if touches(i, i) {
            pairs.push((SensorIndex::new(i, 0), SensorIndex::new(i, 1)));
        }
    }
    for e in inst.graph().edges() {
        if touches(e.i, e.j) {
            pairs.extend(e.meas.iter().map(|m| (m.a, m.b)));
        }
    }
    for m in inst.anchors().measurements() {
        if touches(m.a.robot, m.b.robot) {
            pairs.push((m.a, m.b));
        }
    }
    pairs
        .into_iter()
        .filter_map(|(a, b)| state.block_matrix(inst, a, b))
        .map(|m| min_eigenvalue(&SymMatrix::new(m).expect("block is square")))
        .fold(f64::INFINITY, f64::min)
}
