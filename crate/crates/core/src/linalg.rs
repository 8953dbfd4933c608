//! Sparse solvers for fixed-point systems `x = Q x + b`.
//!
//! Used for absorption probabilities and expected hitting times on the
//! transient part of a Markov chain.

use crate::prob::{to_f64, Prob};
use num_traits::{One, Zero};
use std::collections::BTreeMap;

/// Exact solve by row-wise sparse Gaussian elimination on `I - Q`.
/// `b[i]` holds one entry per right-hand side. Returns `None` if singular.
pub fn solve_exact(q: &[Vec<(usize, Prob)>], b: &[Vec<Prob>]) -> Option<Vec<Vec<Prob>>> {
    let n = q.len();
    let k = b.first().map_or(0, Vec::len);
    let mut rows: Vec<BTreeMap<usize, Prob>> = Vec::with_capacity(n);
    let mut rhs: Vec<Vec<Prob>> = b.to_vec();
    for (i, qi) in q.iter().enumerate() {
        let mut row = BTreeMap::new();
        row.insert(i, Prob::one());
        for (j, p) in qi {
            let e = row.entry(*j).or_insert_with(Prob::zero);
            *e -= p;
        }
        row.retain(|_, v| !v.is_zero());
        rows.push(row);
    }
    for i in 0..n {
        while let Some((&j, _)) = rows[i].range(..i).next() {
            let a = rows[i].remove(&j).unwrap();
            let factor = a / rows[j].get(&j)?;
            let (done, rest) = rows.split_at_mut(i);
            let pivot_row = &done[j];
            let row = &mut rest[0];
            for (&c, v) in pivot_row.range(j + 1..) {
                let e = row.entry(c).or_insert_with(Prob::zero);
                *e -= &factor * v;
                if e.is_zero() {
                    row.remove(&c);
                }
            }
            let (rd, rr) = rhs.split_at_mut(i);
            for t in 0..k {
                let d = &factor * &rd[j][t];
                rr[0][t] -= d;
            }
        }
        if rows[i].get(&i).is_none_or(|d| d.is_zero()) {
            return None;
        }
    }
    let mut x: Vec<Vec<Prob>> = vec![vec![Prob::zero(); k]; n];
    for i in (0..n).rev() {
        let diag = rows[i][&i].clone();
        let mut acc = rhs[i].clone();
        for (&c, v) in rows[i].range(i + 1..) {
            for t in 0..k {
                acc[t] -= v * &x[c][t];
            }
        }
        for t in 0..k {
            x[i][t] = &acc[t] / &diag;
        }
    }
    Some(x)
}

/// Gauss-Seidel iteration until the max residual drops below `tol`.
/// Returns the solution and the final residual.
pub fn solve_iterative(q: &[Vec<(usize, f64)>], b: &[f64], tol: f64, max_sweeps: usize) -> (Vec<f64>, f64) {
    let n = q.len();
    let mut x = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_sweeps {
        for i in 0..n {
            x[i] = b[i] + q[i].iter().map(|&(j, p)| p * x[j]).sum::<f64>();
        }
        residual = (0..n).map(|i| (b[i] + q[i].iter().map(|&(j, p)| p * x[j]).sum::<f64>() - x[i]).abs()).fold(0.0, f64::max);
        if residual < tol {
            break;
        }
    }
    (x, residual)
}

pub fn to_float_rows(q: &[Vec<(usize, Prob)>]) -> Vec<Vec<(usize, f64)>> {
    q.iter().map(|r| r.iter().map(|(j, p)| (*j, to_f64(p))).collect()).collect()
}
