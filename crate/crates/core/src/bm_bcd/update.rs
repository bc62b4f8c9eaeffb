use nalgebra::{DMatrix, DVector};

use super::{Factor, FactorPair, PenaltyState};
use crate::error::{Error, Result};
use crate::model::{ProblemInstance, SensorIndex};
use crate::numerics::{cholesky_in_place, cholesky_solve};

/// Read access to the columns of a factor. Implemented for `DMatrix`; tests
/// wrap it to record which columns an update touches.
pub trait ColumnAccess {
    fn col_slice(&self, k: usize) -> &[f64];
}

impl ColumnAccess for DMatrix<f64> {
    fn col_slice(&self, k: usize) -> &[f64] {
        let r = self.nrows();
        &self.as_slice()[k * r..(k + 1) * r]
    }
}

/// Normal equations `A x = b` of the cost restricted to column `k` of `x`,
/// with `y` the other factor. `A` is column-major `r×r`.
fn column_system<X, Y>(
    x: &X,
    y: &Y,
    r: usize,
    k: usize,
    inst: &ProblemInstance,
    pen: &PenaltyState,
) -> (Vec<f64>, Vec<f64>)
where
    X: ColumnAccess + ?Sized,
    Y: ColumnAccess + ?Sized,
{
    let s = SensorIndex::from_flat(k);
    let i = s.robot;
    let sib = s.sibling().flat();
    let yk = y.col_slice(k);
    let mut a = vec![0.0; r * r];
    let mut b = vec![0.0; r];
    let mut c = vec![0.0; r];

    let mut add_term = |c: &[f64], w: f64, beta: f64| {
        for col in 0..r {
            let wc = w * c[col];
            for row in 0..r {
                a[col * r + row] += wc * c[row];
            }
            b[col] += w * beta * c[col];
        }
    };

    for m in inst.incident(k) {
        let yo = y.col_slice(m.other);
        let xo = x.col_slice(m.other);
        let mut beta = m.q_tilde;
        for t in 0..r {
            c[t] = yk[t] - yo[t];
            beta += c[t] * xo[t];
        }
        add_term(&c, m.weight, beta);
    }

    let ys = y.col_slice(sib);
    let xs = x.col_slice(sib);
    let mut beta = inst.dnu()[i];
    for t in 0..r {
        c[t] = yk[t] - ys[t];
        beta += c[t] * xs[t];
    }
    add_term(&c, pen.w_nu(i), beta);

    if inst.d() == 3 {
        // Height difference: (x_k − x_sib)_z should equal ±dz (+ for side 0).
        let wz = 0.5 * pen.w_z(i);
        let sign = if s.side == 0 { 1.0 } else { -1.0 };
        a[2 * r + 2] += wz;
        b[2] += wz * (xs[2] + sign * inst.dz()[i]);
    }

    let g = pen.gamma[i];
    for t in 0..r {
        a[t * r + t] += g;
        b[t] += g * yk[t];
    }
    (a, b)
}

/// Exact minimizer of the cost over column `k` of `x`, all else fixed.
pub fn solve_column_with<X, Y>(
    x: &X,
    y: &Y,
    r: usize,
    k: usize,
    inst: &ProblemInstance,
    pen: &PenaltyState,
) -> Result<Vec<f64>>
where
    X: ColumnAccess + ?Sized,
    Y: ColumnAccess + ?Sized,
{
    let (mut a, mut b) = column_system(x, y, r, k, inst, pen);
    let s = SensorIndex::from_flat(k);
    cholesky_in_place(&mut a, r).map_err(|_| Error::SingularBlock {
        robot: s.robot,
        side: s.side,
    })?;
    cholesky_solve(&a, r, &mut b);
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularBlock {
            robot: s.robot,
            side: s.side,
        });
    }
    Ok(b)
}

fn split(fp: &FactorPair, which: Factor) -> (&DMatrix<f64>, &DMatrix<f64>) {
    match which {
        Factor::U => (&fp.u, &fp.v),
        Factor::V => (&fp.v, &fp.u),
    }
}

/// Closed-form update of one column of `U` or `V`.
pub fn block_update_column(
    fp: &FactorPair,
    which: Factor,
    sensor: SensorIndex,
    inst: &ProblemInstance,
    pen: &PenaltyState,
) -> Result<DVector<f64>> {
    let (x, y) = split(fp, which);
    solve_column_with(x, y, fp.r(), sensor.flat(), inst, pen).map(DVector::from_vec)
}

/// Gradient of the cost with respect to one column, `2(A x − b)`.
pub fn column_gradient(
    fp: &FactorPair,
    which: Factor,
    sensor: SensorIndex,
    inst: &ProblemInstance,
    pen: &PenaltyState,
) -> DVector<f64> {
    let (x, y) = split(fp, which);
    let r = fp.r();
    let (a, b) = column_system(x, y, r, sensor.flat(), inst, pen);
    let a = DMatrix::from_column_slice(r, r, &a);
    let xk = DVector::from_column_slice(x.col_slice(sensor.flat()));
    (a * xk - DVector::from_vec(b)) * 2.0
}
