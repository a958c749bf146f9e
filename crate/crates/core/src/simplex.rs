//! Dense two-phase primal simplex with Bland's anti-cycling rule.
//!
//! Solves `minimize cᵀx subject to Ax = b, x ≥ 0` and returns the primal
//! vertex together with the simplex multipliers `y = c_Bᵀ B⁻¹`, which are
//! optimal for the dual `maximize bᵀy subject to Aᵀy ≤ c`.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub costs: Vec<f64>,
    /// Dense constraint rows, each of length `costs.len()`.
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub duals: Vec<f64>,
    pub pivots: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimplexError {
    #[error("problem is infeasible (phase-one residual {0:e})")]
    Infeasible(f64),
    #[error("problem is unbounded")]
    Unbounded,
    #[error("pivot limit {0} exceeded")]
    PivotLimit(usize),
    #[error("malformed problem: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Reduced-cost and pivot-element threshold.
    pub eps: f64,
    /// Phase-one objective above this means infeasible.
    pub feasibility_tol: f64,
    pub max_pivots: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            eps: 1e-11,
            feasibility_tol: 1e-9,
            max_pivots: 200_000,
        }
    }
}

struct Tableau {
    m: usize,
    // structural columns; artificial columns follow at n..n+m
    n: usize,
    // row-major, m rows of width n + m
    t: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    // reduced costs over all n + m columns, and current objective value
    d: Vec<f64>,
    z: f64,
    pivots: usize,
}

impl Tableau {
    fn width(&self) -> usize {
        self.n + self.m
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width() + j]
    }

    fn pivot(&mut self, r: usize, s: usize) {
        let w = self.width();
        let p = self.t[r * w + s];
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v /= p;
        }
        self.rhs[r] /= p;
        let prow: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        let prhs = self.rhs[r];
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + s];
            if f != 0.0 {
                for (v, pv) in self.t[i * w..(i + 1) * w].iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                self.t[i * w + s] = 0.0;
                self.rhs[i] -= f * prhs;
                if self.rhs[i] < 0.0 && self.rhs[i] > -1e-13 {
                    self.rhs[i] = 0.0;
                }
            }
        }
        let f = self.d[s];
        if f != 0.0 {
            for (v, pv) in self.d.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
            self.d[s] = 0.0;
            self.z += f * prhs;
        }
        self.basis[r] = s;
        self.pivots += 1;
    }

    /// Reset reduced costs for cost vector `c` over all columns.
    fn price(&mut self, c: &[f64]) {
        let w = self.width();
        self.d = c.to_vec();
        self.z = 0.0;
        for i in 0..self.m {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w {
                    self.d[j] -= cb * self.t[i * w + j];
                }
                self.z += cb * self.rhs[i];
            }
        }
    }

    /// Bland's rule iterations over columns `0..limit`.
    fn optimize(&mut self, limit: usize, opts: &SimplexOptions) -> Result<(), SimplexError> {
        loop {
            let Some(s) = (0..limit).find(|&j| self.d[j] < -opts.eps) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, s);
                if a > opts.eps {
                    let ratio = self.rhs[i] / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                            if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else {
                return Err(SimplexError::Unbounded);
            };
            if self.pivots >= opts.max_pivots {
                return Err(SimplexError::PivotLimit(opts.max_pivots));
            }
            self.pivot(r, s);
        }
    }
}

pub fn solve(lp: &LinearProgram, opts: &SimplexOptions) -> Result<Solution, SimplexError> {
    let n = lp.costs.len();
    let m = lp.rows.len();
    if lp.rhs.len() != m {
        return Err(SimplexError::Malformed("rhs length differs from row count".into()));
    }
    if lp.rows.iter().any(|r| r.len() != n) {
        return Err(SimplexError::Malformed("row length differs from cost length".into()));
    }
    let w = n + m;
    let mut t = vec![0.0; m * w];
    let mut rhs = lp.rhs.clone();
    let mut sign = vec![1.0; m];
    for (i, row) in lp.rows.iter().enumerate() {
        if rhs[i] < 0.0 {
            sign[i] = -1.0;
            rhs[i] = -rhs[i];
        }
        for (j, &a) in row.iter().enumerate() {
            t[i * w + j] = sign[i] * a;
        }
        t[i * w + n + i] = 1.0;
    }
    let mut tab = Tableau {
        m,
        n,
        t,
        rhs,
        basis: (n..n + m).collect(),
        d: vec![0.0; w],
        z: 0.0,
        pivots: 0,
    };

    let phase_one: Vec<f64> = (0..w).map(|j| if j < n { 0.0 } else { 1.0 }).collect();
    tab.price(&phase_one);
    tab.optimize(n, opts)?;
    if tab.z > opts.feasibility_tol {
        return Err(SimplexError::Infeasible(tab.z));
    }
    // drive zero-level artificials out where a structural pivot exists
    for r in 0..m {
        if tab.basis[r] >= n {
            if let Some(s) = (0..n).find(|&j| tab.at(r, j).abs() > 1e-9) {
                tab.pivot(r, s);
            }
        }
    }

    let mut phase_two = lp.costs.clone();
    phase_two.resize(w, 0.0);
    tab.price(&phase_two);
    tab.optimize(n, opts)?;

    let mut x = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.rhs[i];
        }
    }
    let objective = lp.costs.iter().zip(&x).map(|(c, v)| c * v).sum();
    // B⁻¹ sits in the artificial block
    let duals = (0..m)
        .map(|k| {
            let y: f64 = (0..m)
                .map(|i| phase_two[tab.basis[i]] * tab.at(i, n + k))
                .sum();
            y * sign[k]
        })
        .collect();
    Ok(Solution {
        x,
        objective,
        duals,
        pivots: tab.pivots,
    })
}
