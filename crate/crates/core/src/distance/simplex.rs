//! Dense two-phase tableau simplex with Bland's rule. Used for tiny
//! transport instances and as an independent check of the network simplex.

use crate::error::{Error, Result};

const TOL: f64 = 1e-12;

/// Minimizes `c.x` subject to `A x = b`, `x >= 0`. `a` is row-major with
/// `b.len()` rows and `c.len()` columns. Returns the optimal `x`.
pub fn solve_standard_form(a: &[f64], b: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    let (rows, cols) = (b.len(), c.len());
    if a.len() != rows * cols {
        return Err(Error::Transport("constraint matrix shape mismatch".into()));
    }
    // tableau columns: original, artificial, rhs
    let width = cols + rows + 1;
    let mut t = vec![0.0; (rows + 1) * width];
    let mut basis = vec![0usize; rows];
    for r in 0..rows {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..cols {
            t[r * width + j] = sign * a[r * cols + j];
        }
        t[r * width + cols + r] = 1.0;
        t[r * width + width - 1] = sign * b[r];
        basis[r] = cols + r;
    }

    // phase 1: minimize the sum of artificials
    let obj = rows;
    for j in 0..width {
        t[obj * width + j] = 0.0;
    }
    for r in 0..rows {
        for j in 0..width {
            if !(cols..cols + rows).contains(&j) {
                t[obj * width + j] -= t[r * width + j];
            }
        }
    }
    run(&mut t, &mut basis, rows, width, cols + rows)?;
    if -t[obj * width + width - 1] > 1e-9 {
        return Err(Error::Transport("linear program is infeasible".into()));
    }
    // drive zero-level artificials out of the basis where possible
    for r in 0..rows {
        if basis[r] >= cols {
            if let Some(j) = (0..cols).find(|&j| t[r * width + j].abs() > 1e-9) {
                pivot(&mut t, rows, width, r, j);
                basis[r] = j;
            }
        }
    }

    // phase 2
    for j in 0..width {
        t[obj * width + j] = if j < cols { c[j] } else { 0.0 };
    }
    for r in 0..rows {
        let bj = basis[r];
        let cb = if bj < cols { c[bj] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..width {
                t[obj * width + j] -= cb * t[r * width + j];
            }
        }
    }
    run(&mut t, &mut basis, rows, width, cols)?;

    let mut x = vec![0.0; cols];
    for r in 0..rows {
        if basis[r] < cols {
            x[basis[r]] = t[r * width + width - 1].max(0.0);
        }
    }
    Ok(x)
}

fn pivot(t: &mut [f64], rows: usize, width: usize, pr: usize, pc: usize) {
    let p = t[pr * width + pc];
    for j in 0..width {
        t[pr * width + j] /= p;
    }
    for r in 0..=rows {
        if r == pr {
            continue;
        }
        let f = t[r * width + pc];
        if f != 0.0 {
            for j in 0..width {
                t[r * width + j] -= f * t[pr * width + j];
            }
        }
    }
}

/// Bland's rule iterations; only columns `< enter_limit` may enter.
fn run(t: &mut [f64], basis: &mut [usize], rows: usize, width: usize, enter_limit: usize) -> Result<()> {
    let obj = rows;
    for _ in 0..100_000 {
        let Some(pc) = (0..enter_limit).find(|&j| t[obj * width + j] < -TOL) else {
            return Ok(());
        };
        let mut best: Option<(f64, usize, usize)> = None;
        for r in 0..rows {
            let arc = t[r * width + pc];
            if arc > TOL {
                let ratio = t[r * width + width - 1] / arc;
                let better = match best {
                    None => true,
                    Some((br, _, bb)) => ratio < br - TOL || (ratio <= br + TOL && basis[r] < bb),
                };
                if better {
                    best = Some((ratio, r, basis[r]));
                }
            }
        }
        let Some((_, pr, _)) = best else {
            return Err(Error::Transport("linear program is unbounded".into()));
        };
        pivot(t, rows, width, pr, pc);
        basis[pr] = pc;
    }
    Err(Error::Transport("dense simplex iteration limit".into()))
}

/// Transport problem through the dense solver; returns `(cost, plan)`.
pub fn dense_transport(a: &[f64], b: &[f64], cost: &[f64]) -> Result<(f64, Vec<f64>)> {
    super::ot::validate(a, b, cost)?;
    let (m, n) = (a.len(), b.len());
    let cols = m * n;
    let mut mat = vec![0.0; (m + n) * cols];
    for i in 0..m {
        for j in 0..n {
            mat[i * cols + i * n + j] = 1.0;
            mat[(m + j) * cols + i * n + j] = 1.0;
        }
    }
    let rhs: Vec<f64> = a.iter().chain(b).copied().collect();
    let x = solve_standard_form(&mat, &rhs, cost)?;
    let value = x.iter().zip(cost).map(|(p, c)| p * c).sum();
    Ok((value, x))
}
