use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::null_space;

/// Convex constraint `φ(v) ≥ 0` on a few coordinates of the block vector.
/// Position arguments are offsets of `d` consecutive coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Cone {
    /// `v[x] − ‖p‖² ≥ 0`.
    Diag { x: usize, p: usize },
    /// `v[x] − ‖p‖² − v[sigma]² ≥ 0`.
    Edge { x: usize, p: usize, sigma: usize },
    /// `[v[xa], v[xab]; v[xab], v[xb]] − [pa pb]ᵀ[pa pb] ⪰ 0`.
    Pair {
        xa: usize,
        pa: usize,
        xb: usize,
        pb: usize,
        xab: usize,
    },
}

type Sparse = Vec<(usize, f64)>;

fn gap_grad(v: &DVector<f64>, x: usize, p: usize, d: usize) -> (f64, Sparse) {
    let mut g = Vec::with_capacity(d + 1);
    g.push((x, 1.0));
    let mut s = v[x];
    for k in 0..d {
        s -= v[p + k] * v[p + k];
        g.push((p + k, -2.0 * v[p + k]));
    }
    (s, g)
}

fn add_outer(h: &mut DMatrix<f64>, a: &[(usize, f64)], b: &[(usize, f64)], s: f64) {
    for &(i, ai) in a {
        for &(j, bj) in b {
            h[(i, j)] += s * ai * bj;
        }
    }
}

fn add_eye(h: &mut DMatrix<f64>, r: usize, c: usize, d: usize, s: f64) {
    for k in 0..d {
        h[(r + k, c + k)] += s;
    }
}

fn scaled(a: &[(usize, f64)], s: f64) -> Sparse {
    a.iter().map(|&(i, x)| (i, x * s)).collect()
}

impl Cone {
    /// Constraint value, or `None` outside the open feasible region.
    pub fn value(&self, v: &DVector<f64>, d: usize) -> Option<f64> {
        let phi = match self {
            Cone::Diag { x, p } => gap_grad(v, *x, *p, d).0,
            Cone::Edge { x, p, sigma } => gap_grad(v, *x, *p, d).0 - v[*sigma] * v[*sigma],
            Cone::Pair {
                xa,
                pa,
                xb,
                pb,
                xab,
            } => {
                let sa = gap_grad(v, *xa, *pa, d).0;
                let sb = gap_grad(v, *xb, *pb, d).0;
                let t = v[*xab] - (0..d).map(|k| v[pa + k] * v[pb + k]).sum::<f64>();
                if sa <= 0.0 {
                    return None;
                }
                sa * sb - t * t
            }
        };
        (phi > 0.0 && phi.is_finite()).then_some(phi)
    }

    /// Adds the gradient and Hessian of `−log φ` at a feasible `v`.
    fn add_barrier(&self, v: &DVector<f64>, d: usize, g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
        // grad(−log φ) = −∇φ/φ, hess = ∇φ∇φᵀ/φ² − ∇²φ/φ.
        let (phi, dphi) = match self {
            Cone::Diag { x, p } => {
                let (s, ds) = gap_grad(v, *x, *p, d);
                add_eye(h, *p, *p, d, 2.0 / s);
                (s, ds)
            }
            Cone::Edge { x, p, sigma } => {
                let (s, mut dphi) = gap_grad(v, *x, *p, d);
                let t = v[*sigma];
                let phi = s - t * t;
                dphi.push((*sigma, -2.0 * t));
                add_eye(h, *p, *p, d, 2.0 / phi);
                h[(*sigma, *sigma)] += 2.0 / phi;
                (phi, dphi)
            }
            Cone::Pair {
                xa,
                pa,
                xb,
                pb,
                xab,
            } => {
                let (sa, dsa) = gap_grad(v, *xa, *pa, d);
                let (sb, dsb) = gap_grad(v, *xb, *pb, d);
                let mut dt = vec![(*xab, 1.0)];
                let mut t = v[*xab];
                for k in 0..d {
                    t -= v[pa + k] * v[pb + k];
                    dt.push((pa + k, -v[pb + k]));
                    dt.push((pb + k, -v[pa + k]));
                }
                let phi = sa * sb - t * t;
                let mut dphi = scaled(&dsa, sb);
                dphi.extend(scaled(&dsb, sa));
                dphi.extend(scaled(&dt, -2.0 * t));
                let inv = 1.0 / phi;
                add_outer(h, &dsa, &dsb, -inv);
                add_outer(h, &dsb, &dsa, -inv);
                add_eye(h, *pa, *pa, d, 2.0 * sb * inv);
                add_eye(h, *pb, *pb, d, 2.0 * sa * inv);
                add_outer(h, &dt, &dt, 2.0 * inv);
                add_eye(h, *pa, *pb, d, -2.0 * t * inv);
                add_eye(h, *pb, *pa, d, -2.0 * t * inv);
                (phi, dphi)
            }
        };
        for &(i, x) in &dphi {
            g[i] -= x / phi;
        }
        add_outer(h, &dphi, &dphi, 1.0 / (phi * phi));
    }
}

/// One objective term `w·(cᵀv − β)²` with sparse `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareTerm {
    pub c: Vec<(usize, f64)>,
    pub beta: f64,
    pub w: f64,
}

impl SquareTerm {
    fn residual(&self, v: &DVector<f64>) -> f64 {
        self.c.iter().map(|&(i, x)| x * v[i]).sum::<f64>() - self.beta
    }
}

/// Convex block program: minimize a sum of weighted squares subject to cone
/// constraints and linear equalities.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemModel {
    pub robot: usize,
    pub d: usize,
    pub n_vars: usize,
    pub terms: Vec<SquareTerm>,
    /// `Σ w c cᵀ`, half the objective Hessian.
    pub quad: DMatrix<f64>,
    pub cones: Vec<Cone>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    /// Strictly feasible starting point.
    pub start: DVector<f64>,
    /// Edge cross-entry slots, filled by the assembler.
    pub slots: Vec<super::EdgeSlot>,
}

impl SubproblemModel {
    pub fn new(robot: usize, d: usize, n_vars: usize) -> Self {
        Self {
            robot,
            d,
            n_vars,
            terms: Vec::new(),
            quad: DMatrix::zeros(n_vars, n_vars),
            cones: Vec::new(),
            eq_matrix: DMatrix::zeros(0, n_vars),
            eq_rhs: DVector::zeros(0),
            start: DVector::zeros(n_vars),
            slots: Vec::new(),
        }
    }

    pub fn n_equalities(&self) -> usize {
        self.eq_rhs.len()
    }

    /// Adds `w·(cᵀv − β)²`.
    pub fn add_square(&mut self, c: &[(usize, f64)], beta: f64, w: f64) {
        add_outer(&mut self.quad, c, c, w);
        self.terms.push(SquareTerm {
            c: c.to_vec(),
            beta,
            w,
        });
    }

    /// Adds the equality `cᵀv = rhs`.
    pub fn add_equality(&mut self, c: &[(usize, f64)], rhs: f64) {
        let m = self.n_equalities();
        let n = self.n_vars;
        let mut a = self.eq_matrix.clone().resize(m + 1, n, 0.0);
        for &(i, x) in c {
            a[(m, i)] += x;
        }
        self.eq_matrix = a;
        self.eq_rhs = self.eq_rhs.clone().push(rhs);
    }

    pub fn objective(&self, v: &DVector<f64>) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let r = t.residual(v);
                t.w * r * r
            })
            .sum()
    }

    pub fn objective_gradient(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.n_vars);
        for t in &self.terms {
            let r = 2.0 * t.w * t.residual(v);
            for &(i, x) in &t.c {
                g[i] += r * x;
            }
        }
        g
    }

    /// Largest absolute equality residual.
    pub fn equality_residual(&self, v: &DVector<f64>) -> f64 {
        (&self.eq_matrix * v - &self.eq_rhs).amax()
    }

    pub fn is_strictly_feasible(&self, v: &DVector<f64>) -> bool {
        self.cones.iter().all(|c| c.value(v, self.d).is_some())
    }

    /// `G(v)/μ − Σ log φ`, or `None` when infeasible.
    fn barrier_value(&self, v: &DVector<f64>, mu: f64) -> Option<f64> {
        let mut f = self.objective(v) / mu;
        for c in &self.cones {
            f -= c.value(v, self.d)?.ln();
        }
        Some(f)
    }
}

/// Parameters of the log-barrier method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierConfig {
    /// Initial barrier weight relative to the start: the first centering
    /// stage has duality gap `mu0·max(1, objective)`.
    pub mu0: f64,
    /// Factor applied to μ after each centering stage.
    pub decrease: f64,
    /// Stop once μ times the number of inequalities drops below this
    /// fraction of `max(1, objective)`.
    pub outer_tol: f64,
    /// Centering stops when half the squared Newton decrement is below this.
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            mu0: 1.0,
            decrease: 0.1,
            outer_tol: 1e-8,
            newton_tol: 1e-9,
            max_newton: 50,
        }
    }
}

impl BarrierConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu0 > 0.0
            && self.decrease > 0.0
            && self.decrease < 1.0
            && self.outer_tol > 0.0
            && self.newton_tol > 0.0
            && self.max_newton > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidScenario(format!(
                "invalid barrier parameters {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSolution {
    pub values: DVector<f64>,
    pub objective: f64,
    /// Final barrier weight.
    pub mu: f64,
    pub newton_steps: usize,
}

fn diverged(reason: &str, v: &DVector<f64>) -> Error {
    Error::Diverged {
        reason: reason.into(),
        last_iterate: v.as_slice().to_vec(),
    }
}

/// Solves the block program by a path-following barrier method. Newton steps
/// are taken in the null space of the equality constraints, so the equality
/// residual of the start is preserved.
pub fn solve_subproblem(model: &SubproblemModel, cfg: &BarrierConfig) -> Result<BarrierSolution> {
    follow_path(model, cfg)
}

fn follow_path(model: &SubproblemModel, cfg: &BarrierConfig) -> Result<BarrierSolution> {
    cfg.validate()?;
    let n = model.n_vars;
    let mut v = model.start.clone();
    let scale = 1.0 + model.eq_rhs.amax();
    if model.equality_residual(&v) > 1e-9 * scale {
        return Err(Error::Infeasible(
            "start violates the equality constraints".into(),
        ));
    }
    if !model.is_strictly_feasible(&v) {
        return Err(Error::Infeasible(
            "start is not strictly inside the cones".into(),
        ));
    }
    let basis = null_space(&model.eq_matrix);
    let basis_t = basis.transpose();
    let m = model.cones.len().max(1) as f64;
    // Weights are relative: the duality gap `m·μ` starts at `rel·G(start)`.
    let mut mu = cfg.mu0 * model.objective(&v).max(1.0) / m;
    let mut steps = 0;
    let mut g = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);
    let mut stalled = false;
    loop {
        for _ in 0..cfg.max_newton {
            g.copy_from(&(model.objective_gradient(&v) / mu));
            h.copy_from(&(&model.quad * (2.0 / mu)));
            for c in &model.cones {
                c.add_barrier(&v, model.d, &mut g, &mut h);
            }
            let hr = &basis_t * &h * &basis;
            let gr = &basis_t * &g;
            let Some(dz) = newton_direction(hr, &gr) else {
                // The centering system became numerically singular; the
                // current iterate is the best resolvable point.
                stalled = true;
                break;
            };
            let dv = &basis * dz;
            let slope = g.dot(&dv);
            if !slope.is_finite() {
                return Err(diverged("non-finite Newton step", &v));
            }
            let f0 = model
                .barrier_value(&v, mu)
                .ok_or_else(|| diverged("iterate left the feasible region", &v))?;
            if -slope / 2.0 <= cfg.newton_tol {
                break;
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &v + &dv * alpha;
                if let Some(f) = model.barrier_value(&trial, mu) {
                    if f <= f0 + 0.25 * alpha * slope {
                        v = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            steps += 1;
            if !accepted {
                // No representable decrease left at this weight.
                break;
            }
        }
        if stalled || mu * m < cfg.outer_tol * model.objective(&v).max(1.0) {
            break;
        }
        mu *= cfg.decrease;
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(diverged("non-finite iterate", &v));
    }
    Ok(BarrierSolution {
        objective: model.objective(&v),
        values: v,
        mu,
        newton_steps: steps,
    })
}

fn newton_direction(mut hr: DMatrix<f64>, gr: &DVector<f64>) -> Option<DVector<f64>> {
    if hr.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    let scale = hr.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut reg = 0.0;
    for _ in 0..8 {
        if let Some(ch) = Cholesky::new(hr.clone()) {
            return Some(-ch.solve(gr));
        }
        let next = if reg == 0.0 {
            1e-14 * scale
        } else {
            reg * 100.0
        };
        for k in 0..hr.nrows() {
            hr[(k, k)] += next - reg;
        }
        reg = next;
    }
    None
}
