//! Generic block-coordinate-descent scheduler.
//!
//! Blocks are grouped into ordered classes. Every block of a class is solved
//! against the same snapshot of the state, then all updates of the class are
//! applied in class order. One class corresponds to one communication round.
//! Because solves never observe same-class updates, the sequential and the
//! parallel schedule produce bit-identical iterates.

use std::time::Instant;

use crate::error::{Error, Result};

/// Greedy `(Δ+1)` coloring. Vertices are visited by descending degree, ties
/// by id, and take the smallest color unused by their colored neighbors.
/// Returns the color classes, each sorted by vertex id.
pub fn greedy_coloring(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| adj[b].len().cmp(&adj[a].len()).then(a.cmp(&b)));
    let mut color = vec![usize::MAX; n];
    let mut used = Vec::new();
    for &v in &order {
        used.clear();
        used.resize(adj[v].len() + 1, false);
        for &w in &adj[v] {
            let c = color[w];
            if c < used.len() {
                used[c] = true;
            }
        }
        color[v] = used.iter().position(|&u| !u).expect("a free color exists");
    }
    let count = color.iter().map(|&c| c + 1).max().unwrap_or(0);
    let mut classes = vec![Vec::new(); count];
    for (v, &c) in color.iter().enumerate() {
        classes[c].push(v);
    }
    classes
}

/// True when no class contains two adjacent vertices and every vertex appears
/// exactly once.
pub fn is_valid_coloring(adj: &[Vec<usize>], classes: &[Vec<usize>]) -> bool {
    let mut color = vec![usize::MAX; adj.len()];
    for (c, class) in classes.iter().enumerate() {
        for &v in class {
            if v >= adj.len() || color[v] != usize::MAX {
                return false;
            }
            color[v] = c;
        }
    }
    color.iter().all(|&c| c != usize::MAX)
        && adj
            .iter()
            .enumerate()
            .all(|(v, nb)| nb.iter().all(|&w| w == v || color[w] != color[v]))
}

/// How the blocks of one class are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    #[default]
    Sequential,
    /// Solve the blocks of a class on the rayon pool. Falls back to sequential
    /// execution when the `parallel` feature is disabled.
    Parallel,
}

/// Decision returned by an adapter at the end of each sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepControl {
    Continue,
    Converged,
}

/// A problem whose blocks can be solved exactly from a read-only snapshot.
pub trait BlockAdapter: Sync {
    type Update: Send;

    fn solve_block(&self, key: usize) -> Result<Self::Update>;

    fn apply_update(&mut self, key: usize, update: Self::Update);

    /// Called after every full sweep, `sweep` counting from 1.
    fn end_sweep(&mut self, sweep: usize) -> Result<SweepControl>;
}

/// Statistics of one call to [`run_bcd`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhaseStats {
    pub name: String,
    pub sweeps: usize,
    pub comm_rounds: usize,
    /// Sum of all block-solve durations in seconds.
    pub st: f64,
    /// Sum over classes of the slowest block-solve duration in seconds.
    pub pt: f64,
    pub converged: bool,
}

/// Accumulated statistics of a solver run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundStats {
    pub sweeps: usize,
    pub comm_rounds: usize,
    pub st: f64,
    pub pt: f64,
    pub converged: bool,
    pub objective: f64,
    pub phases: Vec<PhaseStats>,
}

impl RoundStats {
    pub fn push(&mut self, phase: PhaseStats) {
        self.sweeps += phase.sweeps;
        self.comm_rounds += phase.comm_rounds;
        self.st += phase.st;
        self.pt += phase.pt;
        self.phases.push(phase);
    }

    pub fn absorb(&mut self, other: RoundStats) {
        for p in other.phases {
            self.push(p);
        }
    }
}

/// Runs sweeps over `classes` until the adapter reports convergence or
/// `max_sweeps` is reached. Empty classes are ignored.
pub fn run_bcd<A: BlockAdapter>(
    adapter: &mut A,
    classes: &[Vec<usize>],
    max_sweeps: usize,
    schedule: Schedule,
    name: &str,
) -> Result<PhaseStats> {
    let classes: Vec<&Vec<usize>> = classes.iter().filter(|c| !c.is_empty()).collect();
    let mut stats = PhaseStats {
        name: name.to_string(),
        ..PhaseStats::default()
    };
    while stats.sweeps < max_sweeps {
        let sweep = stats.sweeps + 1;
        for (ci, class) in classes.iter().enumerate() {
            let results = solve_class(adapter, class, schedule);
            let mut slowest = 0.0f64;
            let mut updates = Vec::with_capacity(results.len());
            for (&key, (res, secs)) in class.iter().zip(results) {
                stats.st += secs;
                slowest = slowest.max(secs);
                match res {
                    Ok(u) => updates.push((key, u)),
                    Err(e) => {
                        return Err(Error::Block {
                            sweep,
                            class: ci,
                            key,
                            source: Box::new(e),
                        })
                    }
                }
            }
            stats.pt += slowest;
            for (key, u) in updates {
                adapter.apply_update(key, u);
            }
            stats.comm_rounds += 1;
        }
        stats.sweeps = sweep;
        if adapter.end_sweep(sweep)? == SweepControl::Converged {
            stats.converged = true;
            break;
        }
    }
    Ok(stats)
}

fn timed<A: BlockAdapter>(adapter: &A, key: usize) -> (Result<A::Update>, f64) {
    let start = Instant::now();
    let r = adapter.solve_block(key);
    (r, start.elapsed().as_secs_f64())
}

#[cfg(feature = "parallel")]
fn solve_class<A: BlockAdapter>(
    adapter: &A,
    class: &[usize],
    schedule: Schedule,
) -> Vec<(Result<A::Update>, f64)> {
    use rayon::prelude::*;
    match schedule {
        Schedule::Parallel if class.len() > 1 => {
            class.par_iter().map(|&k| timed(adapter, k)).collect()
        }
        _ => class.iter().map(|&k| timed(adapter, k)).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn solve_class<A: BlockAdapter>(
    adapter: &A,
    class: &[usize],
    _schedule: Schedule,
) -> Vec<(Result<A::Update>, f64)> {
    class.iter().map(|&k| timed(adapter, k)).collect()
}
