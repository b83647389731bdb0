//! Dense two-phase simplex for small linear programs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;

/// `min c.x` subject to `A x <= b`, `x >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn new(c: Vec<f64>) -> Self {
        Self { c, a: Vec::new(), b: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn push(&mut self, row: Vec<f64>, rhs: f64) {
        self.a.push(row);
        self.b.push(rhs);
    }

    fn check(&self) -> Result<()> {
        for (i, row) in self.a.iter().enumerate() {
            if row.len() != self.n() {
                return Err(Error::dim("LP row", self.n(), row.len()));
            }
            if row.iter().chain([&self.b[i]]).any(|v| !v.is_finite()) {
                return Err(Error::Solver(format!("LP row {i} is not finite: {row:?} <= {}", self.b[i])));
            }
        }
        if self.a.len() != self.b.len() {
            return Err(Error::dim("LP right-hand side", self.a.len(), self.b.len()));
        }
        Ok(())
    }

    /// Largest violation of `A x <= b` and `x >= 0`, rows scaled by their
    /// largest coefficient.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let rows = self.a.iter().zip(&self.b).map(|(row, &b)| {
            let s = row.iter().fold(b.abs(), |m, v| m.max(v.abs())).max(1e-300);
            (row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() - b) / s
        });
        rows.chain(x.iter().map(|v| -v)).fold(0.0, f64::max)
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        self.check()?;
        Tableau::build(self).run(self)
    }
}

/// Tableau rows are normalised by their largest coefficient; `basis[i]` is
/// the column basic in row `i`. Columns: structural, slack, artificial.
struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    n: usize,
    width: usize,
    artificial_from: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let (m, n) = (lp.a.len(), lp.n());
        let needs_art: Vec<bool> = lp.b.iter().map(|&b| b < 0.0).collect();
        let n_art = needs_art.iter().filter(|&&v| v).count();
        let width = n + m + n_art;
        let mut rows = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut next_art = n + m;
        for i in 0..m {
            let scale = lp.a[i].iter().fold(lp.b[i].abs(), |s, v| s.max(v.abs())).max(1e-300);
            let sign = if needs_art[i] { -1.0 } else { 1.0 };
            let mut row = vec![0.0; width];
            for (j, v) in lp.a[i].iter().enumerate() {
                row[j] = sign * v / scale;
            }
            row[n + i] = sign / scale;
            if needs_art[i] {
                row[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            } else {
                basis.push(n + i);
            }
            rows.push(row);
            rhs.push(sign * lp.b[i] / scale);
        }
        Self {
            rows,
            rhs,
            basis,
            n,
            width,
            artificial_from: n + m,
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        let (pr, prhs) = (self.rows[r].clone(), self.rhs[r]);
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c];
            if f != 0.0 {
                for (v, q) in self.rows[i].iter_mut().zip(&pr) {
                    *v -= f * q;
                }
                self.rhs[i] -= f * prhs;
            }
        }
        self.basis[r] = c;
    }

    /// Minimises `cost . x` over the current basis with Bland's rule; columns
    /// at or beyond `limit` never enter. Returns false when unbounded.
    fn optimise(&mut self, cost: &[f64], limit: usize, cap: usize) -> Result<bool> {
        for _ in 0..cap {
            let reduced = |j: usize| -> f64 {
                cost[j]
                    - self
                        .basis
                        .iter()
                        .zip(&self.rows)
                        .map(|(&b, row)| cost[b] * row[j])
                        .sum::<f64>()
            };
            let Some(enter) = (0..limit).find(|&j| !self.basis.contains(&j) && reduced(j) < -1e-10) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][enter];
                if a > PIVOT_EPS {
                    let ratio = self.rhs[i].max(0.0) / a;
                    leave = match leave {
                        Some((r, best)) if ratio > best + 1e-12 => Some((r, best)),
                        Some((r, best)) if ratio >= best - 1e-12 && self.basis[r] < self.basis[i] => Some((r, best)),
                        _ => Some((i, ratio)),
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, enter),
                None => return Ok(false),
            }
        }
        Err(Error::Solver(format!("simplex hit the iteration cap of {cap}")))
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpOutcome> {
        let cap = 50 * (self.width + self.rows.len()) + 1000;
        if self.artificial_from < self.width {
            let cost: Vec<f64> = (0..self.width)
                .map(|j| if j >= self.artificial_from { 1.0 } else { 0.0 })
                .collect();
            self.optimise(&cost, self.width, cap)?;
            let infeas: f64 = self
                .basis
                .iter()
                .zip(&self.rhs)
                .filter(|(&b, _)| b >= self.artificial_from)
                .map(|(_, &v)| v)
                .sum();
            if infeas > FEAS_TOL {
                return Ok(LpOutcome::Infeasible);
            }
            // drive zero-level artificials out where possible
            for r in 0..self.rows.len() {
                if self.basis[r] >= self.artificial_from {
                    if let Some(c) =
                        (0..self.artificial_from).find(|&c| !self.basis.contains(&c) && self.rows[r][c].abs() > 1e-9)
                    {
                        self.pivot(r, c);
                    }
                }
            }
        }
        let mut cost = vec![0.0; self.width];
        cost[..self.n].copy_from_slice(&lp.c);
        if !self.optimise(&cost, self.artificial_from, cap)? {
            return Ok(LpOutcome::Unbounded);
        }
        let mut x = vec![0.0; self.n];
        for (&b, &v) in self.basis.iter().zip(&self.rhs) {
            if b < self.n {
                x[b] = v.max(0.0);
            }
        }
        let value = lp.c.iter().zip(&x).map(|(c, x)| c * x).sum();
        Ok(LpOutcome::Optimal { x, value })
    }
}

/// Linear constraint `coeffs . x <= rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearIneq {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl LinearIneq {
    pub fn new(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() - self.rhs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpFeasibility {
    pub witness: Option<Vec<f64>>,
    /// Largest uniform slack, each row scaled to unit norm; positive means
    /// the witness is strictly feasible.
    pub margin: f64,
}

impl LpFeasibility {
    pub fn feasible(&self) -> bool {
        self.witness.is_some()
    }
}

/// Feasibility of `linear` inside the box `[lower, upper]`, returning the
/// maximum-margin point.
pub fn lp_feasible(linear: &[LinearIneq], lower: &[f64], upper: &[f64]) -> Result<LpFeasibility> {
    let n = lower.len();
    if upper.len() != n {
        return Err(Error::dim("box bounds", n, upper.len()));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
        return Err(Error::InvalidInput("lp_feasible needs a bounded box with lower <= upper".into()));
    }
    // y = x - lower >= 0, slack s = s_plus - s_minus at columns n, n+1
    let mut lp = LinearProgram::new([vec![0.0; n], vec![-1.0, 1.0]].concat());
    let mut add = |coeffs: &[f64], rhs: f64| {
        let norm = coeffs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let shift: f64 = coeffs.iter().zip(lower).map(|(a, l)| a * l).sum();
        let mut row = coeffs.to_vec();
        row.extend([norm, -norm]);
        lp.push(row, rhs - shift);
    };
    for c in linear {
        if c.coeffs.len() != n {
            return Err(Error::dim("linear constraint", n, c.coeffs.len()));
        }
        add(&c.coeffs, c.rhs);
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        add(&e, upper[j]);
        e[j] = -1.0;
        add(&e, -lower[j]);
    }
    let mut cap = vec![0.0; n + 2];
    cap[n] = 1.0;
    cap[n + 1] = -1.0;
    lp.push(cap, 1.0);
    match lp.solve()? {
        LpOutcome::Optimal { x, value } => {
            let margin = -value;
            let point: Vec<f64> = x[..n].iter().zip(lower).map(|(y, l)| y + l).collect();
            let ok = margin >= -FEAS_TOL;
            Ok(LpFeasibility {
                witness: ok.then_some(point),
                margin,
            })
        }
        LpOutcome::Infeasible => Ok(LpFeasibility {
            witness: None,
            margin: f64::NEG_INFINITY,
        }),
        LpOutcome::Unbounded => Err(Error::Solver(format!("margin LP unbounded: {lp:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_lp() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18  ->  (2, 6), 36
        let mut lp = LinearProgram::new(vec![-3.0, -5.0]);
        lp.push(vec![1.0, 0.0], 4.0);
        lp.push(vec![0.0, 2.0], 12.0);
        lp.push(vec![3.0, 2.0], 18.0);
        match lp.solve().unwrap() {
            LpOutcome::Optimal { x, value } => {
                assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
                assert!((value + 36.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn phase_one_needed() {
        // min x + y with x + y >= 2, x <= 3
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.push(vec![-1.0, -1.0], -2.0);
        lp.push(vec![1.0, 0.0], 3.0);
        match lp.solve().unwrap() {
            LpOutcome::Optimal { value, .. } => assert!((value - 2.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detects_unbounded_and_infeasible() {
        let mut lp = LinearProgram::new(vec![-1.0, 0.0]);
        lp.push(vec![0.0, 1.0], 1.0);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Unbounded);
        let mut lp = LinearProgram::new(vec![0.0]);
        lp.push(vec![1.0], 1.0);
        lp.push(vec![-1.0], -2.0);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn degenerate_does_not_cycle() {
        // Beale's cycling example
        let mut lp = LinearProgram::new(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.push(vec![0.25, -60.0, -0.04, 9.0], 0.0);
        lp.push(vec![0.5, -90.0, -0.02, 3.0], 0.0);
        lp.push(vec![0.0, 0.0, 1.0, 0.0], 1.0);
        match lp.solve().unwrap() {
            LpOutcome::Optimal { value, .. } => assert!((value + 0.05).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn margin_point_is_centred() {
        let f = lp_feasible(&[LinearIneq::new(vec![1.0], 1.0)], &[0.0], &[4.0]).unwrap();
        assert!((f.witness.unwrap()[0] - 0.5).abs() < 1e-9);
        assert!((f.margin - 0.5).abs() < 1e-9);
    }
}
