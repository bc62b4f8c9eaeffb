use nalgebra::DVector;

use super::{relaxation_error, Cone, EsdpState, SubproblemModel};
use crate::error::{Error, Result};
use crate::model::{ProblemInstance, SensorIndex};

/// Which robot solves for an edge's cross entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossEntryMode {
    /// Both endpoint robots treat the entries as variables.
    #[default]
    Overlap,
    /// Only the smaller robot id updates them; the other holds them fixed.
    StrictDisjoint,
}

/// Four cross entries of one edge inside a robot's block vector.
///
/// Entry `(u, v)` is stored as the scaled deviation `σ` with
/// `X = (p_i^u)ᵀ q_v + √ê_v · σ`, where `q_v` and `ê_v` are the neighbor's
/// position and relaxation error. Its cone then reads `s_u − σ² ≥ 0`, which
/// stays well conditioned when the neighbor's relaxation is tight.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSlot {
    pub neighbor: usize,
    pub edge: usize,
    /// Index of the `(u, v) = (0, 0)` entry; entry `(u, v)` sits at `offset + 2u + v`.
    pub offset: usize,
    /// True when the block robot is the edge's second robot.
    pub flipped: bool,
    pub owned: bool,
    pub q: [DVector<f64>; 2],
    pub sqrt_e_hat: [f64; 2],
}

impl EdgeSlot {
    /// Cross entry `(u, v)` encoded in the block vector `values`.
    pub fn cross_entry(&self, values: &DVector<f64>, d: usize, u: usize, v: usize) -> f64 {
        let pq: f64 = (0..d).map(|k| values[u * d + k] * self.q[v][k]).sum();
        pq + self.sqrt_e_hat[v] * values[self.offset + 2 * u + v]
    }

    /// Position of block entry `(u, v)` in the edge's storage.
    fn storage(&self, u: usize, v: usize) -> usize {
        if self.flipped {
            2 * v + u
        } else {
            2 * u + v
        }
    }
}

/// Block vector layout: `p_i⁰`, `p_i¹`, then `X⁰⁰`, `X¹¹`, `X⁰¹`, then the
/// edge slots.
struct Layout {
    d: usize,
}

impl Layout {
    fn p(&self, u: usize) -> usize {
        u * self.d
    }
    fn x(&self, u: usize) -> usize {
        2 * self.d + u
    }
    fn x01(&self) -> usize {
        2 * self.d + 2
    }
    fn slots_start(&self) -> usize {
        2 * self.d + 3
    }
}

/// Builds robot `robot`'s block program at the current state. Cross entries
/// with anchors are eliminated as `aᵀp`; the start is the current state,
/// repaired where it is not strictly feasible.
pub fn assemble_subproblem(
    state: &EsdpState,
    robot: usize,
    inst: &ProblemInstance,
    mode: CrossEntryMode,
) -> Result<SubproblemModel> {
    let d = inst.d();
    let i = robot;
    let anchors = inst.anchors();
    if anchors.is_anchor(i) {
        return Err(Error::InvalidScenario(format!("robot {i} is an anchor")));
    }
    let lay = Layout { d };
    let graph = inst.graph();
    let anchor_meas = (0..2).any(|u| !inst.anchor_incident(2 * i + u).is_empty());
    if graph.degree(i) == 0 && !anchor_meas {
        return Err(Error::UnconstrainedBlock { robot: i });
    }

    let mut slots = Vec::new();
    let mut next = lay.slots_start();
    for &(j, e) in graph.neighbors(i) {
        if anchors.is_anchor(j) {
            continue;
        }
        let nb = |v| SensorIndex::new(j, v);
        slots.push(EdgeSlot {
            neighbor: j,
            edge: e,
            offset: next,
            flipped: graph.edges()[e].j == i,
            owned: mode == CrossEntryMode::Overlap || i < j,
            q: [0, 1].map(|v| state.p.sensor(nb(v)).into_owned()),
            sqrt_e_hat: [0, 1].map(|v| relaxation_error(state, nb(v)).sqrt()),
        });
        next += 4;
    }
    let mut model = SubproblemModel::new(i, d, next);
    model.slots = slots.clone();

    let anchor_term = |model: &mut SubproblemModel, u: usize, a: &DVector<f64>, q: f64, w: f64| {
        let mut c = vec![(lay.x(u), 1.0)];
        c.extend((0..d).map(|k| (lay.p(u) + k, -2.0 * a[k])));
        model.add_square(&c, q - a.norm_squared(), w);
    };
    for &(j, e) in graph.neighbors(i) {
        if !anchors.is_anchor(j) {
            continue;
        }
        let edge = &graph.edges()[e];
        for u in 0..2 {
            for v in 0..2 {
                let m = if edge.i == i {
                    edge.measurement(u, v)
                } else {
                    edge.measurement(v, u)
                };
                let a = anchors
                    .estimate(SensorIndex::new(j, v))
                    .expect("anchor estimate");
                anchor_term(&mut model, u, a, m.q_tilde, m.weight());
            }
        }
    }
    for u in 0..2 {
        for m in inst.anchor_incident(2 * i + u) {
            let a = anchors
                .estimate(SensorIndex::from_flat(m.other))
                .expect("anchor estimate");
            anchor_term(&mut model, u, a, m.q_tilde, m.weight);
        }
    }

    for s in &slots {
        let edge = &graph.edges()[s.edge];
        for u in 0..2 {
            for v in 0..2 {
                let m = &edge.meas[s.storage(u, v)];
                let sigma = s.offset + 2 * u + v;
                let x_j = state.x_diag[2 * s.neighbor + v];
                let mut c = vec![(lay.x(u), 1.0), (sigma, -2.0 * s.sqrt_e_hat[v])];
                c.extend((0..d).map(|k| (lay.p(u) + k, -2.0 * s.q[v][k])));
                model.add_square(&c, m.q_tilde - x_j, m.weight());
                model.cones.push(Cone::Edge {
                    x: lay.x(u),
                    p: lay.p(u),
                    sigma,
                });
            }
        }
    }
    for u in 0..2 {
        model.cones.push(Cone::Diag {
            x: lay.x(u),
            p: lay.p(u),
        });
    }
    model.cones.push(Cone::Pair {
        xa: lay.x(0),
        pa: lay.p(0),
        xb: lay.x(1),
        pb: lay.p(1),
        xab: lay.x01(),
    });

    model.add_equality(
        &[(lay.x(0), 1.0), (lay.x(1), 1.0), (lay.x01(), -2.0)],
        inst.dnu()[i],
    );
    if d == 3 {
        model.add_equality(&[(lay.p(0) + 2, 1.0), (lay.p(1) + 2, -1.0)], inst.dz()[i]);
    }
    for s in slots.iter().filter(|s| !s.owned) {
        for k in 0..4 {
            let (u, v) = (k / 2, k % 2);
            let mut c = vec![(s.offset + k, s.sqrt_e_hat[v])];
            c.extend((0..d).map(|t| (lay.p(u) + t, s.q[v][t])));
            model.add_equality(&c, state.x_edge[s.edge][s.storage(u, v)]);
        }
    }

    model.start = feasible_start(state, inst, &model, &lay);
    Ok(model)
}

fn current_values(state: &EsdpState, model: &SubproblemModel, lay: &Layout) -> DVector<f64> {
    let i = model.robot;
    let mut v = DVector::zeros(model.n_vars);
    for u in 0..2 {
        let p = state.p.sensor(SensorIndex::new(i, u));
        v.rows_mut(lay.p(u), lay.d).copy_from(&p);
        v[lay.x(u)] = state.x_diag[2 * i + u];
    }
    v[lay.x01()] = state.x_intra[i];
    set_sigmas(&mut v, state, model, lay, |_| true);
    v
}

/// Encodes the stored cross entries of the selected slots at the current
/// positions in `v`.
fn set_sigmas(
    v: &mut DVector<f64>,
    state: &EsdpState,
    model: &SubproblemModel,
    lay: &Layout,
    pick: impl Fn(&EdgeSlot) -> bool,
) {
    for s in model.slots.iter().filter(|s| pick(s)) {
        for k in 0..4 {
            let (u, w) = (k / 2, k % 2);
            let pq: f64 = (0..lay.d).map(|t| v[lay.p(u) + t] * s.q[w][t]).sum();
            v[s.offset + k] = (state.x_edge[s.edge][s.storage(u, w)] - pq) / s.sqrt_e_hat[w];
        }
    }
}

/// Positions and intra entries satisfying the robot's equalities with the
/// sensor-pair gap `S = c·I`, keeping the midpoint of the current positions.
fn rebuild_robot(v: &mut DVector<f64>, inst: &ProblemInstance, i: usize, lay: &Layout) {
    let d = lay.d;
    let dnu = inst.dnu()[i];
    let dz = if d == 3 { inst.dz()[i] } else { 0.0 };
    let p0 = v.rows(lay.p(0), d).into_owned();
    let p1 = v.rows(lay.p(1), d).into_owned();
    let mid = (&p0 + &p1) * 0.5;
    let mut delta = &p0 - &p1;
    // Horizontal part carries half the non-vertical baseline; the rest of
    // the separation budget becomes the slack `c`.
    let h2 = 0.5 * (dnu - dz * dz).max(0.0);
    let mut hnorm = 0.0;
    for k in 0..2 {
        hnorm += delta[k] * delta[k];
    }
    let hnorm = hnorm.sqrt();
    if hnorm > 1e-12 {
        for k in 0..2 {
            delta[k] *= h2.sqrt() / hnorm;
        }
    } else {
        delta[0] = h2.sqrt();
        delta[1] = 0.0;
    }
    if d == 3 {
        delta[2] = dz;
    }
    let c = 0.5 * (dnu - delta.norm_squared());
    let q0 = &mid + &delta * 0.5;
    let q1 = &mid - &delta * 0.5;
    v.rows_mut(lay.p(0), d).copy_from(&q0);
    v.rows_mut(lay.p(1), d).copy_from(&q1);
    v[lay.x(0)] = q0.norm_squared() + c;
    v[lay.x(1)] = q1.norm_squared() + c;
    v[lay.x01()] = q0.dot(&q1);
}

fn feasible_start(
    state: &EsdpState,
    inst: &ProblemInstance,
    model: &SubproblemModel,
    lay: &Layout,
) -> DVector<f64> {
    let d = lay.d;
    let mut v = current_values(state, model, lay);
    let scale = 1.0 + model.eq_rhs.amax();
    let own_ok = model.equality_residual(&v) <= 1e-10 * scale
        && model
            .cones
            .iter()
            .filter(|c| !matches!(c, Cone::Edge { .. }))
            .all(|c| c.value(&v, d).is_some());
    if !own_ok {
        rebuild_robot(&mut v, inst, model.robot, lay);
        set_sigmas(&mut v, state, model, lay, |s| !s.owned);
    }
    // Free cross entries outside their cone restart at `pᵀq`, the cone's
    // center line. Fixed ones are accommodated by widening the sensor gaps.
    let mut lift: f64 = 0.0;
    for cone in &model.cones {
        if let Cone::Edge { x, p, sigma } = cone {
            if cone.value(&v, d).is_some() {
                continue;
            }
            let owned = model
                .slots
                .iter()
                .any(|s| s.owned && (s.offset..s.offset + 4).contains(sigma));
            if owned {
                v[*sigma] = 0.0;
            } else {
                let s: f64 = v[*x] - (0..d).map(|k| v[p + k] * v[p + k]).sum::<f64>();
                lift = lift.max(v[*sigma] * v[*sigma] - s);
            }
        }
    }
    if lift > 0.0 {
        // Adding `c·[1 1; 1 1]` to the intra block keeps the separation
        // equality and widens both sensor gaps.
        let c = 1.01 * lift + 1e-12 * scale;
        v[lay.x(0)] += c;
        v[lay.x(1)] += c;
        v[lay.x01()] += c;
    }
    v
}

/// Writes a block solution back into the state.
pub fn apply_solution(state: &mut EsdpState, model: &SubproblemModel, values: &DVector<f64>) {
    let lay = Layout { d: model.d };
    let i = model.robot;
    for u in 0..2 {
        let p = values.rows(lay.p(u), lay.d).into_owned();
        state.p.set_sensor(SensorIndex::new(i, u), &p);
        state.x_diag[2 * i + u] = values[lay.x(u)];
    }
    state.x_intra[i] = values[lay.x01()];
    for s in model.slots.iter().filter(|s| s.owned) {
        for k in 0..4 {
            let (u, v) = (k / 2, k % 2);
            state.x_edge[s.edge][s.storage(u, v)] = s.cross_entry(values, lay.d, u, v);
        }
    }
}
