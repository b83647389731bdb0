//! Power allocation: EPA, max-min by bisection, weighted max-min by SCA and
//! LM user scheduling.

pub mod barrier;
pub mod lp;
pub mod sca;

use serde::{Deserialize, Serialize};

use crate::channel::Group;
use crate::error::{Error, Result};
use crate::se::{closed_form_fzf, prelog_symbols, PzfClosedForm};
use crate::transforms::FrameConfig;

pub use barrier::{phase1, BarrierOptions, ExpIneq, FeasibilityProblem, Phase1, QuadIneq};
pub use lp::{lp_feasible, LinearIneq, LinearProgram, LpFeasibility, LpOutcome};
pub use sca::{sca_bound, sca_tangent, weighted_maxmin_pzf, weighted_objective, PrelogMode, ScaState, WeightedOptions, WeightedResult};

/// Slack allowed on the total power budget.
pub const BUDGET_TOL: f64 = 1e-9;

/// Per-user power coefficients with `eta_k >= 0` and `sum eta <= 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub eta: Vec<f64>,
}

impl PowerAllocation {
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        if eta.is_empty() {
            return Err(Error::InvalidInput("allocation needs at least one user".into()));
        }
        if let Some(e) = eta.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            return Err(Error::InvalidInput(format!("power coefficient {e} is not >= 0")));
        }
        let total: f64 = eta.iter().sum();
        if total > 1.0 + BUDGET_TOL {
            return Err(Error::InvalidInput(format!("power coefficients sum to {total} > 1")));
        }
        Ok(Self { eta })
    }

    pub fn total(&self) -> f64 {
        self.eta.iter().sum()
    }

    pub fn k(&self) -> usize {
        self.eta.len()
    }

    /// Scales every coefficient so the budget is used in full.
    fn saturate(eta: Vec<f64>) -> Result<Self> {
        let total: f64 = eta.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Solver("allocation with zero total power".into()));
        }
        Self::new(eta.into_iter().map(|e| e / total).collect())
    }
}

/// Equal power, `eta_k = 1/K`.
pub fn epa(k: usize) -> Result<PowerAllocation> {
    if k == 0 {
        return Err(Error::InvalidInput("EPA needs K >= 1".into()));
    }
    PowerAllocation::new(vec![1.0 / k as f64; k])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionOptions {
    /// Stop once `t_max - t_min` falls below this (bit/s/Hz).
    pub tolerance: f64,
    /// Initial `t_max` as a multiple of the largest EPA per-user SE.
    pub t_max_multiplier: f64,
    pub max_iterations: usize,
}

impl Default for BisectionOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            t_max_multiplier: 4.0,
            max_iterations: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub t: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BisectionState {
    pub t_min: f64,
    pub t_max: f64,
    pub tolerance: f64,
    pub iterations: usize,
    pub trace: Vec<BisectionStep>,
}

impl BisectionState {
    fn record(&mut self, t: f64, feasible: bool) {
        self.iterations += 1;
        self.trace.push(BisectionStep { t, feasible });
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Bisection on `t` between 0 and `t_init`, doubling the upper end while it
/// is still feasible.
pub fn bisect(
    t_init: f64,
    opts: &BisectionOptions,
    mut feasible: impl FnMut(f64) -> Result<bool>,
) -> Result<BisectionState> {
    if !(opts.tolerance > 0.0) || !(opts.t_max_multiplier > 0.0) {
        return Err(Error::InvalidInput(format!("bad bisection options {opts:?}")));
    }
    let mut st = BisectionState {
        t_min: 0.0,
        t_max: if t_init > 0.0 { t_init } else { 1.0 },
        tolerance: opts.tolerance,
        ..Default::default()
    };
    loop {
        let ok = feasible(st.t_max)?;
        st.record(st.t_max, ok);
        if !ok {
            break;
        }
        st.t_min = st.t_max;
        st.t_max *= 2.0;
        if st.iterations > 64 {
            return Err(Error::Solver(format!("objective unbounded: feasible at t = {}", st.t_min)));
        }
    }
    while st.t_max - st.t_min >= opts.tolerance {
        if st.iterations >= opts.max_iterations {
            return Err(Error::Solver(format!(
                "bisection hit {} iterations with gap {}",
                opts.max_iterations,
                st.t_max - st.t_min
            )));
        }
        let t = 0.5 * (st.t_min + st.t_max);
        let ok = feasible(t)?;
        st.record(t, ok);
        if ok {
            st.t_min = t;
        } else {
            st.t_max = t;
        }
    }
    Ok(st)
}

/// Result of a max-min allocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxMin {
    pub allocation: PowerAllocation,
    /// Largest target SE certified feasible (bit/s/Hz).
    pub t_star: f64,
    /// Closed-form per-user SE at the returned allocation.
    pub se: Vec<f64>,
    pub bisection: BisectionState,
}

impl MaxMin {
    pub fn spread(&self) -> f64 {
        let max = self.se.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.se.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// Closed-form SE model under full zero forcing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FzfModel {
    pub cfg: FrameConfig,
    pub alpha: f64,
    pub rho: f64,
    pub groups: Vec<Group>,
}

impl FzfModel {
    pub fn new(cfg: FrameConfig, alpha: f64, rho: f64, groups: Vec<Group>) -> Result<Self> {
        if !(alpha > 0.0 && rho > 0.0) {
            return Err(Error::InvalidInput(format!("need alpha, rho > 0, got {alpha}, {rho}")));
        }
        if groups.is_empty() {
            return Err(Error::InvalidInput("FZF model needs at least one user".into()));
        }
        cfg.validate()?;
        Ok(Self { cfg, alpha, rho, groups })
    }

    fn gain(&self) -> f64 {
        self.alpha * self.alpha * self.rho
    }

    fn prelog(&self, k: usize) -> f64 {
        self.cfg.alpha_se() * prelog_symbols(&self.cfg, self.groups[k]) as f64
    }

    /// Smallest `eta_k` reaching SE `t`.
    pub fn eta_for(&self, k: usize, t: f64) -> f64 {
        ((t / self.prelog(k)).exp2() - 1.0) / self.gain()
    }

    pub fn power_for(&self, t: f64) -> f64 {
        (0..self.groups.len()).map(|k| self.eta_for(k, t)).sum()
    }

    pub fn se(&self, eta: &[f64]) -> Vec<f64> {
        eta.iter()
            .zip(&self.groups)
            .map(|(&e, &g)| closed_form_fzf(e, self.rho, self.alpha, &self.cfg, g))
            .collect()
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}

/// Max-min fairness under FZF; feasibility of a target is a closed-form sum.
pub fn maxmin_fzf(model: &FzfModel, opts: &BisectionOptions) -> Result<MaxMin> {
    let k = model.groups.len();
    let epa_se = model.se(&epa(k)?.eta);
    let bisection = bisect(opts.t_max_multiplier * max_of(&epa_se), opts, |t| {
        Ok(model.power_for(t) <= 1.0)
    })?;
    let t_star = bisection.t_min;
    let eta: Vec<f64> = (0..k).map(|i| model.eta_for(i, t_star)).collect();
    let allocation = if t_star > 0.0 {
        PowerAllocation::saturate(eta)?
    } else {
        epa(k)?
    };
    let se = model.se(&allocation.eta);
    Ok(MaxMin {
        allocation,
        t_star,
        se,
        bisection,
    })
}

/// SINR target for user `k` of `model` to reach SE `t`.
fn sinr_target(model: &PzfClosedForm<f64>, k: usize, t: f64) -> f64 {
    let c = model.cfg.alpha_se() * prelog_symbols(&model.cfg, model.group(k)) as f64;
    (t / c).exp2() - 1.0
}

/// Linear program for the minimum total power meeting every per-user target
/// SE `t`, in scaled variables `x = unit * eta` so that rows are O(1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLp {
    pub lp: LinearProgram,
    pub unit: f64,
}

impl PowerLp {
    pub fn new(model: &PzfClosedForm<f64>, t: f64) -> Self {
        let k = model.k();
        let mut rows = Vec::with_capacity(k);
        let mut rhs = Vec::with_capacity(k);
        for u in 0..k {
            let g = sinr_target(model, u, t);
            let mut row = vec![0.0; k];
            match model.group(u) {
                // a eta_h >= g (1 + sum_l I_hl eta_l)
                Group::Hm => {
                    row[u] = -model.hm_signal_coeff();
                    for (l, r) in row.iter_mut().enumerate().skip(model.k_h) {
                        *r = g * model.hm_interference_coeff(u, l);
                    }
                }
                // S eta_l >= g (1 + Psi_l - S eta_l)
                Group::Lm => {
                    for (j, r) in row.iter_mut().enumerate() {
                        *r = g * if j == u {
                            model.lm_self_coeff(u)
                        } else {
                            model.lm_cross_coeff(u, j)
                        };
                    }
                    row[u] -= (1.0 + g) * model.lm_signal_coeff(u);
                }
            }
            rows.push(row);
            rhs.push(-g);
        }
        let a_max = rows.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let b_max = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let unit = if a_max > 0.0 && b_max > 0.0 { a_max / b_max } else { 1.0 };
        let mut lp = LinearProgram::new(vec![1.0; k]);
        for (row, b) in rows.into_iter().zip(rhs) {
            lp.push(row.into_iter().map(|v| v / unit).collect(), b);
        }
        Self { lp, unit }
    }

    /// Minimum-power allocation, or `None` when the target is unreachable.
    pub fn solve(&self) -> Result<Option<Vec<f64>>> {
        match self.lp.solve()? {
            LpOutcome::Optimal { x, .. } => {
                let worst = self
                    .lp
                    .a
                    .iter()
                    .zip(&self.lp.b)
                    .map(|(row, &b)| (row.iter().zip(&x).map(|(a, x)| a * x).sum::<f64>() - b) / b.abs().max(1.0))
                    .fold(0.0, f64::max);
                if worst > 1e-7 {
                    return Err(Error::Solver(format!("LP witness violates its constraints by {worst:e}: {self:?}")));
                }
                Ok(Some(x.into_iter().map(|v| v / self.unit).collect()))
            }
            LpOutcome::Infeasible => Ok(None),
            LpOutcome::Unbounded => Err(Error::Solver(format!("minimum-power LP unbounded: {self:?}"))),
        }
    }
}

/// Max-min fairness under PZF: bisection over per-target linear programs.
pub fn maxmin_pzf(model: &PzfClosedForm<f64>, opts: &BisectionOptions) -> Result<MaxMin> {
    let k = model.k();
    let epa_se = model.se_all(&epa(k)?.eta)?;
    let mut best: Option<Vec<f64>> = None;
    let bisection = bisect(opts.t_max_multiplier * max_of(&epa_se), opts, |t| {
        match PowerLp::new(model, t).solve()? {
            Some(eta) if eta.iter().sum::<f64>() <= 1.0 + BUDGET_TOL => {
                best = Some(eta);
                Ok(true)
            }
            _ => Ok(false),
        }
    })?;
    let allocation = match best {
        Some(eta) if bisection.t_min > 0.0 => PowerAllocation::saturate(eta)?,
        _ => epa(k)?,
    };
    let se = model.se_all(&allocation.eta)?;
    Ok(MaxMin {
        allocation,
        t_star: bisection.t_min,
        se,
        bisection,
    })
}

/// Outcome of dropping the weakest LM user and re-allocating.
#[derive(Clone, Debug)]
pub struct UscOutcome<A> {
    /// Index (in the full model) of the dropped LM user.
    pub dropped: usize,
    pub reduced: PzfClosedForm<f64>,
    pub full: A,
    pub scheduled: A,
}

/// LM user with the lowest closed-form SE under EPA; ties go to the lowest index.
pub fn weakest_lm(model: &PzfClosedForm<f64>) -> Result<usize> {
    if model.k_l() < 2 {
        return Err(Error::InvalidInput(format!(
            "user scheduling needs K_l >= 2, got {}",
            model.k_l()
        )));
    }
    let se = model.se_all(&epa(model.k())?.eta)?;
    let mut pick = model.k_h;
    for l in model.k_h + 1..model.k() {
        if se[l] < se[pick] {
            pick = l;
        }
    }
    Ok(pick)
}

/// Runs `allocator` with and without the weakest LM user.
pub fn usc_schedule<A>(
    model: &PzfClosedForm<f64>,
    mut allocator: impl FnMut(&PzfClosedForm<f64>) -> Result<A>,
) -> Result<UscOutcome<A>> {
    let dropped = weakest_lm(model)?;
    let reduced = model.without_lm(dropped)?;
    let full = allocator(model)?;
    let scheduled = allocator(&reduced)?;
    Ok(UscOutcome {
        dropped,
        reduced,
        full,
        scheduled,
    })
}
