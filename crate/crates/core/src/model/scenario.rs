use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::measure::{quadratic_measurement, simulate_measurements};
use super::pose::{poses_to_realization, Pose};
use super::{
    AnchorSet, AttitudePrior, BodyOffset, DistanceMeasurement, Edge, GroundTruth, LatticeScale,
    MeasurementGraph, ProblemInstance, SensorIndex,
};
use crate::error::{Error, Result};

/// Robot formation. The named shapes are the full-scale formations; `Custom`
/// picks the lattice family and its size explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// 5×5×5 cubic lattice, 125 robots.
    Cube,
    /// 7-layer close-packed tetrahedron, 84 robots.
    Pyramid,
    /// Hexagonal patch of a triangular lattice with 8 rings, 217 robots.
    Hexagon,
    /// 10×20 square lattice, 200 robots.
    Rectangle,
    Custom(Lattice),
}

/// Lattice families and their size parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lattice {
    Cubic { nx: usize, ny: usize, nz: usize },
    Tetrahedral { layers: usize },
    Triangular { rings: usize },
    Square { nx: usize, ny: usize },
}

impl Shape {
    pub fn lattice(self) -> Lattice {
        match self {
            Shape::Cube => Lattice::Cubic {
                nx: 5,
                ny: 5,
                nz: 5,
            },
            Shape::Pyramid => Lattice::Tetrahedral { layers: 7 },
            Shape::Hexagon => Lattice::Triangular { rings: 8 },
            Shape::Rectangle => Lattice::Square { nx: 10, ny: 20 },
            Shape::Custom(l) => l,
        }
    }

    /// Neighbor spacing of the full-scale formation in meters.
    pub fn default_spacing(self) -> f64 {
        match self.lattice() {
            Lattice::Cubic { .. } | Lattice::Square { .. } => 3.0,
            Lattice::Tetrahedral { .. } => 4.0,
            Lattice::Triangular { .. } => 4.5,
        }
    }
}

impl Lattice {
    pub fn dim(self) -> usize {
        match self {
            Lattice::Cubic { .. } | Lattice::Tetrahedral { .. } => 3,
            Lattice::Triangular { .. } | Lattice::Square { .. } => 2,
        }
    }

    /// Communication radius as a multiple of the spacing. Calibrated against
    /// the degree ranges of the full-scale formations.
    pub fn default_radius_factor(self) -> f64 {
        match self {
            Lattice::Cubic { .. } | Lattice::Triangular { .. } => 1.8,
            Lattice::Tetrahedral { .. } | Lattice::Square { .. } => 1.5,
        }
    }

    /// Number of lattice points along the characteristic side.
    pub fn extent(self) -> usize {
        match self {
            Lattice::Cubic { nx, ny, nz } => nx.min(ny).min(nz),
            Lattice::Tetrahedral { layers } => layers,
            Lattice::Triangular { rings } => rings + 1,
            Lattice::Square { nx, ny } => nx.min(ny),
        }
    }

    /// Lattice points with unit spacing, centered at the origin.
    pub fn points(self) -> Vec<DVector<f64>> {
        let mut pts: Vec<Vec<f64>> = Vec::new();
        match self {
            Lattice::Cubic { nx, ny, nz } => {
                for z in 0..nz {
                    for y in 0..ny {
                        for x in 0..nx {
                            pts.push(vec![x as f64, y as f64, z as f64]);
                        }
                    }
                }
            }
            Lattice::Tetrahedral { layers } => {
                let h = (2.0f64 / 3.0).sqrt();
                let s3 = 3.0f64.sqrt();
                for k in 0..layers {
                    let side = layers - k;
                    // Each layer sits over the hollows of the one below.
                    let (ox, oy) = (0.5 * k as f64, k as f64 / (2.0 * s3));
                    for row in 0..side {
                        for col in 0..(side - row) {
                            pts.push(vec![
                                ox + col as f64 + 0.5 * row as f64,
                                oy + row as f64 * s3 / 2.0,
                                k as f64 * h,
                            ]);
                        }
                    }
                }
            }
            Lattice::Triangular { rings } => {
                let k = rings as i64;
                let s3 = 3.0f64.sqrt();
                for r in -k..=k {
                    for q in -k..=k {
                        if (q + r).abs() <= k {
                            pts.push(vec![q as f64 + 0.5 * r as f64, r as f64 * s3 / 2.0]);
                        }
                    }
                }
            }
            Lattice::Square { nx, ny } => {
                for y in 0..ny {
                    for x in 0..nx {
                        pts.push(vec![x as f64, y as f64]);
                    }
                }
            }
        }
        let d = self.dim();
        let m = pts.len().max(1) as f64;
        let mut center = vec![0.0; d];
        for p in &pts {
            for k in 0..d {
                center[k] += p[k] / m;
            }
        }
        pts.into_iter()
            .map(|p| DVector::from_iterator(d, p.iter().zip(&center).map(|(a, c)| a - c)))
            .collect()
    }
}

/// Parameters of a synthetic scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub shape: Shape,
    /// Neighbor spacing in meters.
    pub b: f64,
    /// Range noise standard deviation in meters.
    pub sigma: f64,
    /// Robots closer than this (meters) measure each other.
    pub comm_radius: f64,
    /// Initialization quality; only carried for convenience, generation ignores it.
    pub rho: f64,
    pub anchor_count: usize,
    /// Probability that an anchor sensor ranges to one sensor of a given non-neighbor robot.
    pub eta: f64,
    /// Standard deviation of anchor position estimates in meters.
    pub anchor_noise: f64,
    /// True pitch and roll are drawn uniformly from `[-tilt_range, tilt_range]` radians.
    pub tilt_range: f64,
    /// Standard deviation of the measured pitch/roll in radians.
    pub prior_noise: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Defaults for a shape: its full-scale spacing, calibrated radius, σ = 0.1 m,
    /// 4 anchors, η = 0.3, tilt within ±5°.
    pub fn new(shape: Shape) -> Self {
        let b = shape.default_spacing();
        Self {
            shape,
            b,
            sigma: 0.1,
            comm_radius: shape.lattice().default_radius_factor() * b,
            rho: 0.5,
            anchor_count: 4,
            eta: 0.3,
            anchor_noise: 0.1,
            tilt_range: 5f64.to_radians(),
            prior_noise: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidScenario(m.to_string()));
        if !(self.b > 0.0 && self.b.is_finite()) {
            return bad("b must be positive");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be non-negative");
        }
        if !(self.comm_radius > 0.0) {
            return bad("comm_radius must be positive");
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad("eta must lie in [0, 1]");
        }
        if !(self.rho >= 0.0) {
            return bad("rho must be non-negative");
        }
        if !(self.anchor_noise >= 0.0) || !(self.prior_noise >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        if !(self.tilt_range >= 0.0 && self.tilt_range < PI / 2.0) {
            return bad("tilt_range must lie in [0, pi/2)");
        }
        let n = self.shape.lattice().points().len();
        if n < 2 {
            return bad("formation needs at least two robots");
        }
        if self.anchor_count > n {
            return bad("more anchors than robots");
        }
        Ok(())
    }
}

/// Generates a problem instance.
///
/// All randomness comes from one ChaCha8 stream seeded with `spec.seed`,
/// consumed in this order: per robot yaw, pitch, roll and measured pitch/roll;
/// range noise per edge (sorted `(i, j)`, then `(u, v)` in row order); the
/// anchor seed robot; anchor estimate noise; anchor-other sampling.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<ProblemInstance> {
    spec.validate()?;
    let lattice = spec.shape.lattice();
    let d = lattice.dim();
    let sites: Vec<DVector<f64>> = lattice.points().into_iter().map(|p| p * spec.b).collect();
    let n = sites.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let prior_noise = Normal::new(0.0, spec.prior_noise).expect("finite prior noise");
    let mut poses = Vec::with_capacity(n);
    let mut priors = Vec::with_capacity(n);
    for site in &sites {
        let yaw = rng.random_range(0.0..2.0 * PI);
        let (pitch, roll) = if d == 3 && spec.tilt_range > 0.0 {
            (
                rng.random_range(-spec.tilt_range..=spec.tilt_range),
                rng.random_range(-spec.tilt_range..=spec.tilt_range),
            )
        } else {
            (0.0, 0.0)
        };
        let prior = if d == 3 && spec.prior_noise > 0.0 {
            AttitudePrior {
                pitch: pitch + prior_noise.sample(&mut rng),
                roll: roll + prior_noise.sample(&mut rng),
            }
        } else if d == 3 {
            AttitudePrior { pitch, roll }
        } else {
            AttitudePrior::default()
        };
        poses.push(Pose {
            yaw,
            pitch,
            roll,
            t: site.clone(),
        });
        priors.push(prior);
    }
    let offsets = vec![BodyOffset::standard(d); n];
    let truth_p = poses_to_realization(&poses, &offsets, None);

    let r2 = spec.comm_radius * spec.comm_radius;
    let mut robot_pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if (&sites[i] - &sites[j]).norm_squared() <= r2 {
                robot_pairs.push((i, j));
            }
        }
    }
    let sensor_pairs: Vec<(SensorIndex, SensorIndex)> = robot_pairs
        .iter()
        .flat_map(|&(i, j)| {
            (0..4).map(move |k| (SensorIndex::new(i, k / 2), SensorIndex::new(j, k % 2)))
        })
        .collect();
    let meas = simulate_measurements(&truth_p, spec.sigma, &sensor_pairs, &mut rng);
    let edges = robot_pairs
        .iter()
        .zip(meas.chunks_exact(4))
        .map(|(&(i, j), m)| Edge {
            i,
            j,
            meas: [m[0], m[1], m[2], m[3]],
        })
        .collect();
    let graph = MeasurementGraph::new(n, edges)?;
    let components = graph.components();
    if components > 1 {
        return Err(Error::Disconnected { components });
    }

    let anchors = if spec.anchor_count > 0 {
        sample_anchors(spec, &sites, &graph, &truth_p, &mut rng)?
    } else {
        AnchorSet::empty(n)
    };

    let scale = LatticeScale {
        spacing: spec.b,
        extent: lattice.extent(),
    };
    ProblemInstance::new(
        d,
        graph,
        offsets,
        priors,
        anchors,
        Some(GroundTruth {
            poses,
            realization: truth_p,
        }),
        scale,
    )
}

/// A random seed robot and its nearest robots become anchors.
fn sample_anchors(
    spec: &ScenarioSpec,
    sites: &[DVector<f64>],
    graph: &MeasurementGraph,
    truth: &super::Realization,
    rng: &mut ChaCha8Rng,
) -> Result<AnchorSet> {
    let n = sites.len();
    let seed_robot = rng.random_range(0..n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let da = (&sites[a] - &sites[seed_robot]).norm_squared();
        let db = (&sites[b] - &sites[seed_robot]).norm_squared();
        da.total_cmp(&db).then(a.cmp(&b))
    });
    let mut chosen: Vec<usize> = order[..spec.anchor_count].to_vec();
    chosen.sort_unstable();

    let noise = Normal::new(0.0, spec.anchor_noise).expect("finite anchor noise");
    let estimates: Vec<(usize, [DVector<f64>; 2])> = chosen
        .iter()
        .map(|&k| {
            let mut est = |u: usize| {
                let mut a = truth.sensor(SensorIndex::new(k, u)).into_owned();
                if spec.anchor_noise > 0.0 {
                    for x in a.iter_mut() {
                        *x += noise.sample(rng);
                    }
                }
                a
            };
            let a0 = est(0);
            let a1 = est(1);
            (k, [a0, a1])
        })
        .collect();

    let mut is_anchor = vec![false; n];
    for &k in &chosen {
        is_anchor[k] = true;
    }
    let range_noise = Normal::new(0.0, spec.sigma).expect("finite sigma");
    let mut measurements: Vec<DistanceMeasurement> = Vec::new();
    for &k in &chosen {
        let nbrs: Vec<usize> = graph.neighbors(k).iter().map(|&(j, _)| j).collect();
        for v in 0..2 {
            let a = SensorIndex::new(k, v);
            for i in 0..n {
                if is_anchor[i] || nbrs.binary_search(&i).is_ok() {
                    continue;
                }
                if !rng.random_bool(spec.eta) {
                    continue;
                }
                let b = SensorIndex::new(i, rng.random_range(0..2));
                let d = (truth.sensor(a) - truth.sensor(b)).norm();
                let eps = if spec.sigma > 0.0 {
                    range_noise.sample(rng)
                } else {
                    0.0
                };
                measurements.push(quadratic_measurement(a, b, d + eps, spec.sigma));
            }
        }
    }
    AnchorSet::new(n, estimates, measurements)
}
