//! Small dense linear programs in standard form.
//!
//! `min cᵀx  s.t.  Ax = b, x ≥ 0`, solved by a two-phase tableau simplex.
//! Pricing is Dantzig's rule; after a run of degenerate pivots it falls back
//! to Bland's rule, which cannot cycle. The basic solution is re-solved from
//! the original columns at the end so the reported values do not carry the
//! tableau's accumulated rounding.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const LP_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible (phase-one residual {0:e})")]
    Infeasible(f64),
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit reached")]
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
}

/// Dense LP in standard form; `a` is row-major `rows × cols`.
#[derive(Debug, Clone)]
pub struct StandardLp {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

struct Tableau {
    rows: usize,
    // structural + artificial columns, then rhs
    width: usize,
    t: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * self.width + c]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let p = self.t[pr * w + pc];
        let inv = 1.0 / p;
        for x in &mut self.t[pr * w..(pr + 1) * w] {
            *x *= inv;
        }
        self.t[pr * w + pc] = 1.0;
        let (before, rest) = self.t.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[pc];
            if f != 0.0 {
                for (x, &y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
                row[pc] = 0.0;
            }
        }
        let f = self.obj[pc];
        if f != 0.0 {
            for (x, &y) in self.obj.iter_mut().zip(prow.iter()) {
                *x -= f * y;
            }
            self.obj[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Runs simplex over columns `0..allowed`. `obj` holds reduced costs with
    /// `-z` in the rhs slot.
    fn optimize(&mut self, allowed: usize) -> Result<(), LpError> {
        let rhs = self.width - 1;
        let max_iter = 50 * (self.rows + allowed) + 1000;
        let mut degenerate_run = 0usize;
        for _ in 0..max_iter {
            let bland = degenerate_run > 2 * self.rows + 10;
            let mut enter = None;
            let mut best = -LP_TOL;
            for j in 0..allowed {
                let r = self.obj[j];
                if r < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = r;
                }
            }
            let Some(pc) = enter else {
                return Ok(());
            };
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > LP_TOL {
                    let ratio = self.at(r, rhs).max(0.0) / a;
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            if ratio < best_ratio - 1e-12 {
                                true
                            } else if ratio <= best_ratio + 1e-12 {
                                if bland {
                                    self.basis[r] < self.basis[l]
                                } else {
                                    a > self.at(l, pc)
                                }
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        leave = Some(r);
                        best_ratio = ratio;
                    }
                }
            }
            let Some(pr) = leave else {
                return Err(LpError::Unbounded);
            };
            if best_ratio <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(pr, pc);
        }
        Err(LpError::IterationLimit)
    }
}

impl StandardLp {
    pub fn new(rows: usize, cols: usize) -> Self {
        StandardLp {
            rows,
            cols,
            a: vec![0.0; rows * cols],
            b: vec![0.0; rows],
            c: vec![0.0; cols],
        }
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.a[r * self.cols + c] = v;
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let (m, n) = (self.rows, self.cols);
        let width = n + m + 1;
        let mut t = vec![0.0; m * width];
        for r in 0..m {
            let sign = if self.b[r] < 0.0 { -1.0 } else { 1.0 };
            for c in 0..n {
                t[r * width + c] = sign * self.a[r * n + c];
            }
            t[r * width + n + r] = 1.0;
            t[r * width + width - 1] = sign * self.b[r];
        }
        // Phase one: minimise the sum of artificials.
        let mut obj = vec![0.0; width];
        for r in 0..m {
            for c in 0..n {
                obj[c] -= t[r * width + c];
            }
            obj[width - 1] -= t[r * width + width - 1];
        }
        let mut tab = Tableau {
            rows: m,
            width,
            t,
            obj,
            basis: (n..n + m).collect(),
        };
        tab.optimize(n)?;
        let residual = -tab.obj[width - 1];
        let b_scale = self.b.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
        if residual > LP_TOL * b_scale {
            return Err(LpError::Infeasible(residual));
        }
        // Drive remaining artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] >= n {
                let mut best = None;
                let mut best_abs = 1e-9;
                for c in 0..n {
                    let a = tab.at(r, c).abs();
                    if a > best_abs {
                        best_abs = a;
                        best = Some(c);
                    }
                }
                if let Some(c) = best {
                    tab.pivot(r, c);
                }
            }
        }
        // Phase two.
        let mut obj = vec![0.0; width];
        obj[..n].copy_from_slice(&self.c);
        for r in 0..m {
            let bc = tab.basis[r];
            let cb = if bc < n { self.c[bc] } else { 0.0 };
            if cb != 0.0 {
                for (o, t) in obj.iter_mut().zip(&tab.t[r * width..(r + 1) * width]) {
                    *o -= cb * t;
                }
            }
        }
        tab.obj = obj;
        tab.optimize(n)?;

        let x = self.refine(&tab);
        let objective = x.iter().zip(&self.c).map(|(a, b)| a * b).sum();
        Ok(LpSolution { objective, x })
    }

    /// Recomputes the basic variables by solving `B x_B = b` directly.
    fn refine(&self, tab: &Tableau) -> Vec<f64> {
        let (m, n) = (self.rows, self.cols);
        let rhs = tab.width - 1;
        let mut x = vec![0.0; n];
        let structural: Vec<(usize, usize)> = tab
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &c)| c < n)
            .map(|(r, &c)| (r, c))
            .collect();
        for &(r, c) in &structural {
            x[c] = tab.at(r, rhs).max(0.0);
        }
        if structural.len() == m {
            let bmat = DMatrix::from_fn(m, m, |i, k| self.a[i * n + structural[k].1]);
            let bvec = DVector::from_column_slice(&self.b);
            if let Some(sol) = bmat.lu().solve(&bvec) {
                if sol.iter().all(|v| v.is_finite() && *v >= -1e-9) {
                    for (k, &(_, c)) in structural.iter().enumerate() {
                        x[c] = sol[k].max(0.0);
                    }
                }
            }
        }
        x
    }
}
