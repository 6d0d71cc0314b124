//! Primal active-set method for small dense convex QPs:
//!
//! ```text
//! minimize    1/2 x^T Q x + c^T x
//! subject to  e_k . x  = f_k      (equality rows)
//!             a_i . x >= b_i      (inequality rows)
//! ```
//!
//! Each iteration solves the equality-constrained subproblem on the working
//! set through its KKT system. Constraints are added at blocking steps and
//! dropped by most negative multiplier. An infeasible start is repaired by a
//! phase-one problem with one artificial variable.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 500;
/// Added to the Hessian in the KKT solve only.
pub const TIKHONOV: f64 = 1e-12;
const FEASIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub a: DVector<f64>,
    pub b: f64,
}

impl Constraint {
    pub fn new(a: DVector<f64>, b: f64) -> Self {
        Self { a, b }
    }

    /// `a . x - b`; negative when an inequality is violated.
    pub fn slack(&self, x: &DVector<f64>) -> f64 {
        self.a.dot(x) - self.b
    }
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub equalities: Vec<Constraint>,
    pub inequalities: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub status: QpStatus,
    pub eq_multipliers: Vec<f64>,
    /// Zero for constraints outside the final working set.
    pub ineq_multipliers: Vec<f64>,
    /// Final working set, ascending.
    pub active: Vec<usize>,
    pub iterations: usize,
}

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.q.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                context: "qp hessian",
                expected: n,
                found: self.q.nrows(),
            });
        }
        for c in self.equalities.iter().chain(&self.inequalities) {
            if c.a.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "qp constraint",
                    expected: n,
                    found: c.a.len(),
                });
            }
            if !c.b.is_finite() || c.a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("qp constraint"));
            }
        }
        if self.q.iter().chain(self.c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("qp objective"));
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x)
    }

    fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let eq = self.equalities.iter().map(|c| c.slack(x).abs());
        let ineq = self.inequalities.iter().map(|c| (-c.slack(x)).max(0.0));
        eq.chain(ineq).fold(0.0, f64::max)
    }
}

/// Rank test for a set of constraint rows.
fn independent(rows: &[&DVector<f64>]) -> bool {
    if rows.is_empty() {
        return true;
    }
    let m = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    m.rank(1e-10 * (1.0 + m.amax())) == rows.len()
}

struct Kkt {
    step: DVector<f64>,
    eq: Vec<f64>,
    ineq: Vec<f64>,
}

fn solve_kkt(p: &QpProblem, x: &DVector<f64>, working: &[usize]) -> Result<Kkt> {
    let n = p.dim();
    let rows: Vec<&DVector<f64>> = p
        .equalities
        .iter()
        .map(|c| &c.a)
        .chain(working.iter().map(|&i| &p.inequalities[i].a))
        .collect();
    let m = rows.len();
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&p.q);
    for i in 0..n {
        k[(i, i)] += TIKHONOV;
    }
    for (r, a) in rows.iter().enumerate() {
        for j in 0..n {
            k[(n + r, j)] = a[j];
            k[(j, n + r)] = a[j];
        }
    }
    let g = &p.q * x + &p.c;
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-&g));
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParameter("singular KKT system".into()))?;
    // H p + A^T y = -g, so g + H p = A^T (-y).
    let lambda: Vec<f64> = sol.rows(n, m).iter().map(|y| -y).collect();
    let ne = p.equalities.len();
    Ok(Kkt {
        step: sol.rows(0, n).into_owned(),
        eq: lambda[..ne].to_vec(),
        ineq: lambda[ne..].to_vec(),
    })
}

fn initial_working_set(p: &QpProblem, x: &DVector<f64>) -> Vec<usize> {
    let mut working = Vec::new();
    for (i, c) in p.inequalities.iter().enumerate() {
        if c.slack(x).abs() <= FEASIBILITY_TOL * (1.0 + c.b.abs()) {
            let mut rows: Vec<&DVector<f64>> = p.equalities.iter().map(|c| &c.a).collect();
            rows.extend(working.iter().map(|&j: &usize| &p.inequalities[j].a));
            rows.push(&c.a);
            if rows.len() <= p.dim() && independent(&rows) {
                working.push(i);
            }
        }
    }
    working
}

/// Active-set iterations from a feasible `x0`.
fn active_set(p: &QpProblem, x0: DVector<f64>, max_iter: usize) -> Result<QpSolution> {
    let mut x = x0;
    let mut working = initial_working_set(p, &x);
    let scale = 1.0 + p.q.amax() + p.c.amax();
    let mut iterations = 0;
    loop {
        if iterations >= max_iter {
            let kkt = solve_kkt(p, &x, &working)?;
            return Ok(finish(p, x, working, kkt, QpStatus::MaxIter, iterations));
        }
        iterations += 1;
        let kkt = solve_kkt(p, &x, &working)?;
        if kkt.step.amax() <= 1e-12 * (1.0 + x.amax()) {
            let worst = kkt
                .ineq
                .iter()
                .enumerate()
                .filter(|(_, l)| **l < -1e-12 * scale)
                .min_by(|a, b| a.1.total_cmp(b.1));
            match worst {
                None => return Ok(finish(p, x, working, kkt, QpStatus::Optimal, iterations)),
                Some((k, _)) => {
                    working.remove(k);
                }
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for (i, c) in p.inequalities.iter().enumerate() {
            if working.contains(&i) {
                continue;
            }
            let ap = c.a.dot(&kkt.step);
            if ap < 0.0 {
                let t = (c.slack(&x) / -ap).max(0.0);
                if t < alpha {
                    alpha = t;
                    blocking = Some(i);
                }
            }
        }
        x += &kkt.step * alpha;
        if let Some(i) = blocking {
            working.push(i);
        }
    }
}

fn finish(
    p: &QpProblem,
    x: DVector<f64>,
    working: Vec<usize>,
    kkt: Kkt,
    status: QpStatus,
    iterations: usize,
) -> QpSolution {
    let mut ineq = vec![0.0; p.inequalities.len()];
    for (k, &i) in working.iter().enumerate() {
        ineq[i] = kkt.ineq[k];
    }
    let mut active = working;
    active.sort_unstable();
    QpSolution {
        x,
        status,
        eq_multipliers: kkt.eq,
        ineq_multipliers: ineq,
        active,
        iterations,
    }
}

/// Finds a point satisfying every constraint, starting from `x0`, which must
/// already satisfy the equalities. Returns `None` when the constraints are
/// inconsistent.
fn phase_one(p: &QpProblem, x0: &DVector<f64>) -> Result<Option<DVector<f64>>> {
    let n = p.dim();
    let t0 = p
        .inequalities
        .iter()
        .map(|c| (-c.slack(x0)).max(0.0))
        .fold(0.0, f64::max);
    let lift = |a: &DVector<f64>, t: f64| {
        let mut v = DVector::zeros(n + 1);
        v.rows_mut(0, n).copy_from(a);
        v[n] = t;
        v
    };
    let mut q = DMatrix::zeros(n + 1, n + 1);
    q[(n, n)] = 1.0;
    let aux = QpProblem {
        q,
        c: DVector::zeros(n + 1),
        equalities: p
            .equalities
            .iter()
            .map(|c| Constraint::new(lift(&c.a, 0.0), c.b))
            .collect(),
        inequalities: p
            .inequalities
            .iter()
            .map(|c| Constraint::new(lift(&c.a, 1.0), c.b))
            .chain(std::iter::once(Constraint::new(lift(&DVector::zeros(n), 1.0), 0.0)))
            .collect(),
    };
    let mut start = DVector::zeros(n + 1);
    start.rows_mut(0, n).copy_from(x0);
    start[n] = t0;
    let sol = active_set(&aux, start, MAX_ITERATIONS)?;
    if sol.x[n] > FEASIBILITY_TOL {
        return Ok(None);
    }
    Ok(Some(sol.x.rows(0, n).into_owned()))
}

/// Solves `p` from `x0`, which must satisfy the equality rows.
pub fn solve(p: &QpProblem, x0: &DVector<f64>, max_iter: usize) -> Result<QpSolution> {
    p.validate()?;
    if x0.len() != p.dim() {
        return Err(Error::DimensionMismatch {
            context: "qp start",
            expected: p.dim(),
            found: x0.len(),
        });
    }
    if p
        .equalities
        .iter()
        .any(|c| c.slack(x0).abs() > FEASIBILITY_TOL * (1.0 + c.b.abs()))
    {
        return Err(Error::InvalidParameter(
            "qp start must satisfy the equality constraints".into(),
        ));
    }
    let start = if p.max_violation(x0) > 0.0 {
        match phase_one(p, x0)? {
            Some(x) => x,
            None => {
                return Ok(QpSolution {
                    x: x0.clone(),
                    status: QpStatus::Infeasible,
                    eq_multipliers: vec![0.0; p.equalities.len()],
                    ineq_multipliers: vec![0.0; p.inequalities.len()],
                    active: Vec::new(),
                    iterations: 0,
                })
            }
        }
    } else {
        x0.clone()
    };
    active_set(p, start, max_iter)
}
