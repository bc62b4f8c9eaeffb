//! Problem data model: sensors, measurements, anchors and problem instances.

mod init;
pub mod io;
mod measure;
mod pose;
mod scenario;

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};

pub use init::sample_initialization;
pub use measure::{quadratic_measurement, simulate_measurements, SIGMA_Q_FLOOR};
pub use pose::{poses_to_realization, rotation, tilt_row, Pose};
pub use scenario::{generate_scenario, Lattice, ScenarioSpec, Shape};

/// Identifies one of the two distance sensors mounted on a robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SensorIndex {
    pub robot: usize,
    pub side: usize,
}

impl SensorIndex {
    pub fn new(robot: usize, side: usize) -> Self {
        assert!(side < 2, "sensor side must be 0 or 1, got {side}");
        Self { robot, side }
    }

    /// Column of this sensor in a realization: `2·robot + side`.
    pub fn flat(self) -> usize {
        2 * self.robot + self.side
    }

    pub fn from_flat(k: usize) -> Self {
        Self {
            robot: k / 2,
            side: k % 2,
        }
    }

    pub fn sibling(self) -> Self {
        Self {
            robot: self.robot,
            side: 1 - self.side,
        }
    }
}

/// Sensor positions in the robot body frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyOffset {
    pub nu0: DVector<f64>,
    pub nu1: DVector<f64>,
}

impl BodyOffset {
    /// The offsets used in every shipped scenario: `[0; ±0.35; 0]`.
    pub fn standard(d: usize) -> Self {
        let mut nu0 = DVector::zeros(d);
        let mut nu1 = DVector::zeros(d);
        nu0[1] = 0.35;
        nu1[1] = -0.35;
        Self { nu0, nu1 }
    }

    pub fn side(&self, side: usize) -> &DVector<f64> {
        if side == 0 {
            &self.nu0
        } else {
            &self.nu1
        }
    }

    /// `ν⁰ − ν¹`.
    pub fn baseline(&self) -> DVector<f64> {
        &self.nu0 - &self.nu1
    }
}

/// Measured tilt of a robot. `pitch` rotates about the body y-axis and `roll`
/// about the body x-axis. Only meaningful in 3D.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttitudePrior {
    pub pitch: f64,
    pub roll: f64,
}

/// A noisy distance between two sensors in the squared (quadratic) form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceMeasurement {
    pub a: SensorIndex,
    pub b: SensorIndex,
    /// `d̃² − σ²`, in m². May be negative for very short noisy ranges.
    pub q_tilde: f64,
    /// Standard deviation of `q_tilde`, in m².
    pub sigma_q: f64,
    /// Raw measured distance, in m.
    pub d_tilde: f64,
}

impl DistanceMeasurement {
    pub fn weight(&self) -> f64 {
        1.0 / (self.sigma_q * self.sigma_q)
    }
}

/// One undirected robot pair `i < j` with its four sensor-to-sensor ranges.
/// `meas[2u + v]` is the range between `(i, u)` and `(j, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub meas: [DistanceMeasurement; 4],
}

impl Edge {
    pub fn measurement(&self, u: usize, v: usize) -> &DistanceMeasurement {
        &self.meas[2 * u + v]
    }
}

/// Robot-level measurement graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementGraph {
    n: usize,
    edges: Vec<Edge>,
    /// Sorted `(neighbor, edge index)` lists.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MeasurementGraph {
    pub fn new(n: usize, mut edges: Vec<Edge>) -> Result<Self> {
        for e in &mut edges {
            if e.i == e.j {
                return Err(Error::InvalidScenario(format!(
                    "self-loop on robot {}",
                    e.i
                )));
            }
            if e.i > e.j {
                // Normalize to i < j while keeping each record's endpoints intact.
                std::mem::swap(&mut e.i, &mut e.j);
                let m = e.meas;
                e.meas = [m[0], m[2], m[1], m[3]];
            }
            if e.j >= n {
                return Err(Error::InvalidScenario(format!(
                    "edge ({}, {}) out of range",
                    e.i, e.j
                )));
            }
            for u in 0..2 {
                for v in 0..2 {
                    let m = e.measurement(u, v);
                    let (a, b) = if m.a.robot == e.i {
                        (m.a, m.b)
                    } else {
                        (m.b, m.a)
                    };
                    if a != SensorIndex::new(e.i, u) || b != SensorIndex::new(e.j, v) {
                        return Err(Error::InvalidScenario(format!(
                            "edge ({}, {}) has a mislabeled measurement at ({u}, {v})",
                            e.i, e.j
                        )));
                    }
                    if !(m.sigma_q > 0.0) {
                        return Err(Error::InvalidScenario("sigma_q must be positive".into()));
                    }
                }
            }
        }
        edges.sort_by_key(|e| (e.i, e.j));
        if edges
            .windows(2)
            .any(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j))
        {
            return Err(Error::InvalidScenario("duplicate edge".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            adjacency[e.i].push((e.j, k));
            adjacency[e.j].push((e.i, k));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            edges,
            adjacency,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// `(neighbor, edge index)` pairs of robot `i`, sorted by neighbor.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    pub fn min_degree(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).min().unwrap_or(0)
    }

    /// Robot adjacency as plain neighbor lists.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        self.adjacency
            .iter()
            .map(|l| l.iter().map(|&(j, _)| j).collect())
            .collect()
    }

    /// Number of connected components.
    pub fn components(&self) -> usize {
        let mut seen = vec![false; self.n];
        let mut count = 0;
        for s in 0..self.n {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            let mut stack = vec![s];
            while let Some(i) = stack.pop() {
                for &(j, _) in &self.adjacency[i] {
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        count
    }
}

/// Imperfectly localized anchor robots and their long-range measurements.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnchorSet {
    robots: Vec<usize>,
    is_anchor: Vec<bool>,
    /// `estimates[robot]` is `Some([â⁰, â¹])` for anchors.
    estimates: Vec<Option<[DVector<f64>; 2]>>,
    /// Anchor-to-other measurements (`a` is always the anchor sensor).
    measurements: Vec<DistanceMeasurement>,
}

impl AnchorSet {
    pub fn empty(n: usize) -> Self {
        Self {
            robots: Vec::new(),
            is_anchor: vec![false; n],
            estimates: vec![None; n],
            measurements: Vec::new(),
        }
    }

    pub fn new(
        n: usize,
        estimates: Vec<(usize, [DVector<f64>; 2])>,
        measurements: Vec<DistanceMeasurement>,
    ) -> Result<Self> {
        let mut set = Self::empty(n);
        for (robot, est) in estimates {
            if robot >= n || set.is_anchor[robot] {
                return Err(Error::InvalidScenario(format!("bad anchor robot {robot}")));
            }
            if est.iter().any(|a| a.iter().any(|x| !x.is_finite())) {
                return Err(Error::InvalidScenario("non-finite anchor estimate".into()));
            }
            set.is_anchor[robot] = true;
            set.estimates[robot] = Some(est);
            set.robots.push(robot);
        }
        set.robots.sort_unstable();
        for m in &measurements {
            if !set.is_anchor[m.a.robot] || set.is_anchor[m.b.robot] {
                return Err(Error::InvalidScenario(
                    "anchor measurements must join an anchor sensor to a non-anchor sensor".into(),
                ));
            }
        }
        set.measurements = measurements;
        Ok(set)
    }

    pub fn robots(&self) -> &[usize] {
        &self.robots
    }

    pub fn is_empty(&self) -> bool {
        self.robots.is_empty()
    }

    pub fn is_anchor(&self, robot: usize) -> bool {
        self.is_anchor.get(robot).copied().unwrap_or(false)
    }

    /// Estimated position `â` of an anchor sensor.
    pub fn estimate(&self, s: SensorIndex) -> Option<&DVector<f64>> {
        self.estimates
            .get(s.robot)
            .and_then(|e| e.as_ref())
            .map(|e| &e[s.side])
    }

    pub fn measurements(&self) -> &[DistanceMeasurement] {
        &self.measurements
    }
}

/// A measurement seen from one of its endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Incident {
    /// Flat index of the other sensor.
    pub other: usize,
    pub q_tilde: f64,
    pub weight: f64,
}

/// Ground-truth poses and the realization they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub poses: Vec<Pose>,
    pub realization: Realization,
}

/// Lattice parameters needed to turn `ρ` into an initialization radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeScale {
    /// Neighbor spacing `b` in meters.
    pub spacing: f64,
    /// Number of lattice points `l` along the characteristic side.
    pub extent: usize,
}

impl LatticeScale {
    /// `𝔯 = ρ (l − 1) b`.
    pub fn init_radius(&self, rho: f64) -> f64 {
        rho * (self.extent.saturating_sub(1)) as f64 * self.spacing
    }
}

/// A complete localization problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    d: usize,
    graph: MeasurementGraph,
    offsets: Vec<BodyOffset>,
    priors: Vec<AttitudePrior>,
    dnu: Vec<f64>,
    dz: Vec<f64>,
    anchors: AnchorSet,
    truth: Option<GroundTruth>,
    scale: LatticeScale,
    incidence: Vec<Vec<Incident>>,
    anchor_incidence: Vec<Vec<Incident>>,
}

impl ProblemInstance {
    pub fn new(
        d: usize,
        graph: MeasurementGraph,
        offsets: Vec<BodyOffset>,
        priors: Vec<AttitudePrior>,
        anchors: AnchorSet,
        truth: Option<GroundTruth>,
        scale: LatticeScale,
    ) -> Result<Self> {
        let n = graph.n();
        if d != 2 && d != 3 {
            return Err(Error::InvalidScenario(format!(
                "dimension must be 2 or 3, got {d}"
            )));
        }
        if offsets.len() != n || priors.len() != n {
            return Err(Error::Dimension(format!(
                "{n} robots but {} offsets and {} priors",
                offsets.len(),
                priors.len()
            )));
        }
        if anchors.is_anchor.len() != n {
            return Err(Error::Dimension(
                "anchor set sized for a different robot count".into(),
            ));
        }
        for (i, o) in offsets.iter().enumerate() {
            if o.nu0.len() != d || o.nu1.len() != d {
                return Err(Error::Dimension(format!(
                    "offsets of robot {i} are not {d}-vectors"
                )));
            }
            if o.nu0 == o.nu1 {
                return Err(Error::DegenerateOffsets {
                    robot: i,
                    norm_sq: 0.0,
                });
            }
        }
        let dnu = offsets
            .iter()
            .map(|o| o.baseline().norm_squared())
            .collect();
        let dz = offsets
            .iter()
            .zip(&priors)
            .map(|(o, p)| {
                if d == 3 {
                    tilt_row(p.pitch, p.roll).dot(&o.baseline())
                } else {
                    0.0
                }
            })
            .collect();

        let mut incidence = vec![Vec::new(); 2 * n];
        for e in graph.edges() {
            for m in &e.meas {
                let w = m.weight();
                incidence[m.a.flat()].push(Incident {
                    other: m.b.flat(),
                    q_tilde: m.q_tilde,
                    weight: w,
                });
                incidence[m.b.flat()].push(Incident {
                    other: m.a.flat(),
                    q_tilde: m.q_tilde,
                    weight: w,
                });
            }
        }
        let mut anchor_incidence = vec![Vec::new(); 2 * n];
        for m in anchors.measurements() {
            anchor_incidence[m.b.flat()].push(Incident {
                other: m.a.flat(),
                q_tilde: m.q_tilde,
                weight: m.weight(),
            });
        }
        Ok(Self {
            d,
            graph,
            offsets,
            priors,
            dnu,
            dz,
            anchors,
            truth,
            scale,
            incidence,
            anchor_incidence,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn graph(&self) -> &MeasurementGraph {
        &self.graph
    }

    pub fn offsets(&self) -> &[BodyOffset] {
        &self.offsets
    }

    pub fn priors(&self) -> &[AttitudePrior] {
        &self.priors
    }

    /// `‖ν⁰ − ν¹‖²` per robot.
    pub fn dnu(&self) -> &[f64] {
        &self.dnu
    }

    /// Expected `z⁰ − z¹` per robot given its tilt prior (zero in 2D).
    pub fn dz(&self) -> &[f64] {
        &self.dz
    }

    pub fn anchors(&self) -> &AnchorSet {
        &self.anchors
    }

    pub fn truth(&self) -> Option<&GroundTruth> {
        self.truth.as_ref()
    }

    pub fn scale(&self) -> LatticeScale {
        self.scale
    }

    /// Graph measurements touching a sensor (flat index).
    pub fn incident(&self, sensor: usize) -> &[Incident] {
        &self.incidence[sensor]
    }

    /// Anchor-to-other measurements touching a non-anchor sensor.
    pub fn anchor_incident(&self, sensor: usize) -> &[Incident] {
        &self.anchor_incidence[sensor]
    }

    /// Returns a copy with a different anchor set (used by sweeps over the
    /// anchor configuration).
    pub fn with_anchors(&self, anchors: AnchorSet) -> Result<Self> {
        Self::new(
            self.d,
            self.graph.clone(),
            self.offsets.clone(),
            self.priors.clone(),
            anchors,
            self.truth.clone(),
            self.scale,
        )
    }
}

/// A `d×2n` matrix of sensor coordinates; column `2i+u` holds sensor `(i, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization(DMatrix<f64>);

impl Realization {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if !p.ncols().is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "realization has {} columns",
                p.ncols()
            )));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::Dimension(
                "realization has non-finite entries".into(),
            ));
        }
        Ok(Self(p))
    }

    pub fn zeros(d: usize, n: usize) -> Self {
        Self(DMatrix::zeros(d, 2 * n))
    }

    pub fn d(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_robots(&self) -> usize {
        self.0.ncols() / 2
    }

    pub fn sensor(&self, s: SensorIndex) -> DVectorView<'_, f64> {
        self.0.column(s.flat())
    }

    pub fn set_sensor(&mut self, s: SensorIndex, x: &DVector<f64>) {
        self.0.set_column(s.flat(), x);
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}
