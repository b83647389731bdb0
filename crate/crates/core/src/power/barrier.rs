//! Phase-1 log-barrier method for small smooth convex feasibility problems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lp::LinearIneq;
use crate::error::{Error, Result};

/// `sum_j w_j (v_j . x)^2 + a . x <= rhs` with every `w_j >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadIneq {
    pub squares: Vec<(f64, Vec<f64>)>,
    pub linear: Vec<f64>,
    pub rhs: f64,
}

impl QuadIneq {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let sq: f64 = self.squares.iter().map(|(w, v)| w * dot(v, x).powi(2)).sum();
        sq + dot(&self.linear, x) - self.rhs
    }

    /// Divides the row by its largest coefficient.
    pub fn normalised(mut self) -> Self {
        let s = self
            .squares
            .iter()
            .map(|(w, _)| w.abs())
            .chain(self.linear.iter().map(|v| v.abs()))
            .fold(0.0, f64::max);
        if s > 0.0 {
            for (w, _) in &mut self.squares {
                *w /= s;
            }
            for v in &mut self.linear {
                *v /= s;
            }
            self.rhs /= s;
        }
        self
    }
}

/// `weight (2^{x_t / scale} - 1) - u_coeff x_u <= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpIneq {
    pub t: usize,
    pub scale: f64,
    pub weight: f64,
    pub u: usize,
    pub u_coeff: f64,
}

impl ExpIneq {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.weight * ((x[self.t] / self.scale).exp2() - 1.0) - self.u_coeff * x[self.u]
    }
}

/// Linear, convex-quadratic and exponential inequalities over a box.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityProblem {
    pub linear: Vec<LinearIneq>,
    pub quadratic: Vec<QuadIneq>,
    pub exponential: Vec<ExpIneq>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

impl FeasibilityProblem {
    pub fn n(&self) -> usize {
        self.lower.len()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.n();
        if self.upper.len() != n {
            return Err(Error::dim("box upper bound", n, self.upper.len()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
            return Err(Error::InvalidInput("feasibility box must be finite with lower <= upper".into()));
        }
        for c in &self.linear {
            if c.coeffs.len() != n {
                return Err(Error::dim("linear constraint", n, c.coeffs.len()));
            }
        }
        for q in &self.quadratic {
            if q.linear.len() != n || q.squares.iter().any(|(_, v)| v.len() != n) {
                return Err(Error::dim("quadratic constraint", n, q.linear.len()));
            }
            if q.squares.iter().any(|(w, _)| !(*w >= 0.0)) {
                return Err(Error::InvalidInput("quadratic constraint has a negative weight".into()));
            }
        }
        for e in &self.exponential {
            if e.t >= n || e.u >= n || !(e.scale > 0.0) {
                return Err(Error::InvalidInput(format!("malformed exponential constraint {e:?}")));
            }
        }
        Ok(())
    }

    /// Value of every constraint (box included) at `x`; feasible when all <= 0.
    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.linear.iter().map(|c| c.eval(x)).collect();
        out.extend(self.quadratic.iter().map(|q| q.eval(x)));
        out.extend(self.exponential.iter().map(|e| e.eval(x)));
        for j in 0..self.n() {
            out.push(x[j] - self.upper[j]);
            out.push(self.lower[j] - x[j]);
        }
        out
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.values(x).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Gradient and (optional) Hessian contribution of each constraint.
    fn derivatives(&self, x: &[f64], mut f: impl FnMut(f64, Vec<f64>, Option<DMatrix<f64>>)) {
        let n = self.n();
        for c in &self.linear {
            f(c.eval(x), c.coeffs.clone(), None);
        }
        for q in &self.quadratic {
            let mut g = q.linear.clone();
            let mut h = DMatrix::zeros(n, n);
            for (w, v) in &q.squares {
                let s = 2.0 * w * dot(v, x);
                for (gi, vi) in g.iter_mut().zip(v) {
                    *gi += s * vi;
                }
                let dv = DVector::from_column_slice(v);
                h += (2.0 * w) * &dv * dv.transpose();
            }
            f(q.eval(x), g, Some(h));
        }
        for e in &self.exponential {
            let k = std::f64::consts::LN_2 / e.scale;
            let p = e.weight * (x[e.t] / e.scale).exp2();
            let mut g = vec![0.0; n];
            g[e.t] += p * k;
            g[e.u] -= e.u_coeff;
            let mut h = DMatrix::zeros(n, n);
            h[(e.t, e.t)] = p * k * k;
            f(e.eval(x), g, Some(h));
        }
        for j in 0..n {
            let mut g = vec![0.0; n];
            g[j] = 1.0;
            f(x[j] - self.upper[j], g.clone(), None);
            g[j] = -1.0;
            f(self.lower[j] - x[j], g, None);
        }
    }
}

/// Newton steps allowed per centring stage.
const CENTRING_CAP: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierOptions {
    /// Stop when the barrier's suboptimality bound `m / tau` drops below this.
    pub gap: f64,
    pub mu: f64,
    pub tau0: f64,
    pub max_newton: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            gap: 1e-9,
            mu: 10.0,
            tau0: 1.0,
            max_newton: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase1 {
    pub x: Vec<f64>,
    /// Minimised largest constraint value; `< 0` means strictly feasible.
    pub s: f64,
    pub newton_steps: usize,
}

impl Phase1 {
    pub fn feasible(&self) -> bool {
        self.s < 0.0
    }
}

/// Minimises `s` subject to `g_i(x) <= s` by a barrier method started at `x0`.
pub fn phase1(problem: &FeasibilityProblem, x0: &[f64], opts: &BarrierOptions) -> Result<Phase1> {
    problem.check()?;
    let n = problem.n();
    if x0.len() != n {
        return Err(Error::dim("barrier start point", n, x0.len()));
    }
    let mut x = x0.to_vec();
    let mut s = problem.max_violation(&x) + 1.0;
    if !s.is_finite() {
        return Err(Error::Solver(format!("constraints not finite at the start point {x0:?}")));
    }
    let m = problem.values(&x).len() as f64;
    let mut tau = opts.tau0;
    let mut steps = 0;
    let objective = |x: &[f64], s: f64, tau: f64| -> f64 {
        let mut f = tau * s;
        for g in problem.values(x) {
            let d = s - g;
            if !(d > 0.0) {
                return f64::INFINITY;
            }
            f -= d.ln();
        }
        f
    };
    loop {
        // centring by damped Newton; a stage ends at a small decrement, when
        // the line search can no longer resolve a decrease, or at the cap
        for _ in 0..CENTRING_CAP {
            if steps >= opts.max_newton {
                return Err(Error::Solver(format!(
                    "barrier did not converge in {} Newton steps (s = {s}, tau = {tau}, x = {x:?})",
                    opts.max_newton
                )));
            }
            steps += 1;
            let mut grad = DVector::zeros(n + 1);
            let mut hess = DMatrix::zeros(n + 1, n + 1);
            grad[n] = tau;
            problem.derivatives(&x, |g, dg, h| {
                let d = s - g;
                let mut a = DVector::from_column_slice(&dg).insert_row(n, -1.0);
                grad += &a / d;
                a /= d;
                hess += &a * a.transpose();
                if let Some(h) = h {
                    let mut view = hess.view_mut((0, 0), (n, n));
                    view += h / d;
                }
            });
            let dir = solve_spd(hess, &grad)?;
            let decrement = grad.dot(&dir);
            if decrement / 2.0 <= 1e-10 {
                break;
            }
            let f0 = objective(&x, s, tau);
            let mut step = 1.0;
            let moved = loop {
                let xn: Vec<f64> = x.iter().enumerate().map(|(j, v)| v - step * dir[j]).collect();
                let sn = s - step * dir[n];
                if objective(&xn, sn, tau) <= f0 - 0.25 * step * decrement {
                    x = xn;
                    s = sn;
                    break true;
                }
                step *= 0.5;
                if step < 1e-10 {
                    break false;
                }
            };
            if !moved {
                break;
            }
        }
        if m / tau < opts.gap {
            break;
        }
        tau *= opts.mu;
    }
    let s = problem.max_violation(&x);
    Ok(Phase1 { x, s, newton_steps: steps })
}

/// Newton system via nalgebra's Cholesky, with diagonal loading on failure.
fn solve_spd(h: DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = h.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += reg;
        }
        if let Some(ch) = hr.cholesky() {
            return Ok(ch.solve(g));
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
    }
    Err(Error::Solver("barrier Newton system is not positive definite".into()))
}
