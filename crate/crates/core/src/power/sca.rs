//! Weighted max-min under PZF by bisection with successive convex
//! approximation of the bilinear `eta * T` terms.

use serde::{Deserialize, Serialize};

use super::barrier::{phase1, BarrierOptions, ExpIneq, FeasibilityProblem, QuadIneq};
use super::lp::LinearIneq;
use super::{bisect, epa, BisectionOptions, BisectionState, PowerAllocation};
use crate::channel::Group;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::se::{prelog_symbols, PzfClosedForm};

/// Convex upper bound on `x y` around the anchor `(xn, yn)`, tight there.
///
/// Equal to `((x + y)^2 - 2 d (x - y) + d^2) / 4` with `d = xn - yn`; written
/// as `x y` plus a square so that rounding never takes it below `x y` and it
/// is exact at the anchor.
pub fn sca_bound<T: Real>(x: T, y: T, xn: T, yn: T) -> T {
    let gap = (x - y) - (xn - yn);
    x * y + T::lit(0.25) * gap * gap
}

/// [`sca_bound`] with `(x + y)^2` replaced by its tangent at the anchor; an
/// affine function that agrees with `x y` at the anchor.
pub fn sca_tangent<T: Real>(x: T, y: T, xn: T, yn: T) -> T {
    let d = xn - yn;
    let p = xn + yn;
    let two = T::lit(2.0);
    T::lit(0.25) * (p * (two * (x + y) - p) - two * d * (x - y) + d * d)
}

/// How the group rates `t_h`, `t_l` relate to the SINR variables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrelogMode {
    /// `t = alpha_SE c log2(1 + T)` with `c = MN` (HM) or `L_d N` (LM).
    #[default]
    Consistent,
    /// `2^{t_h} - 1 <= T_h` and `2^{t_l / alpha_SE} - 1 <= T_l` as printed.
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedOptions {
    pub bisection: BisectionOptions,
    /// Relative anchor change that ends the inner loop.
    pub inner_tolerance: f64,
    pub inner_cap: usize,
    /// Keep the last feasible anchors between outer steps instead of
    /// restarting from EPA.
    pub warm_start: bool,
    pub prelog: PrelogMode,
    pub barrier: BarrierOptions,
}

impl Default for WeightedOptions {
    fn default() -> Self {
        Self {
            bisection: BisectionOptions::default(),
            inner_tolerance: 1e-3,
            inner_cap: 30,
            warm_start: false,
            prelog: PrelogMode::Consistent,
            barrier: BarrierOptions {
                gap: 1e-7,
                ..BarrierOptions::default()
            },
        }
    }
}

/// SCA anchors: per-user `eta` and one SINR anchor per group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaState {
    pub eta: Vec<f64>,
    pub t_h: f64,
    pub t_l: f64,
    pub tolerance: f64,
    pub cap: usize,
}

/// One outer bisection step of the weighted solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaStep {
    pub t: f64,
    pub feasible: bool,
    pub inner_iterations: usize,
    /// Phase-1 value of the last inner solve (< 0 feasible).
    pub margin: f64,
    pub anchors: Vec<ScaState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedResult {
    pub allocation: PowerAllocation,
    /// `alpha_w (w_h min SE_h + w_l min SE_l)` at the returned allocation.
    pub objective: f64,
    pub objective_epa: f64,
    pub se: Vec<f64>,
    pub bisection: BisectionState,
    pub trace: Vec<ScaStep>,
}

impl WeightedResult {
    pub fn trace_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            bisection: &'a BisectionState,
            sca: &'a [ScaStep],
        }
        Ok(serde_json::to_string_pretty(&Dump {
            bisection: &self.bisection,
            sca: &self.trace,
        })?)
    }
}

/// Group weights after dropping empty groups, normalised to sum to one.
fn active_weights(model: &PzfClosedForm<f64>, w_h: f64, w_l: f64) -> (f64, f64) {
    let wh = if model.k_h > 0 { w_h } else { 0.0 };
    let wl = if model.k_l() > 0 { w_l } else { 0.0 };
    (wh / (wh + wl), wl / (wh + wl))
}

/// Weighted objective evaluated with the closed-form SEs.
pub fn weighted_objective(model: &PzfClosedForm<f64>, w_h: f64, w_l: f64, eta: &[f64]) -> Result<f64> {
    let se = model.se_all(eta)?;
    let (ah, al) = active_weights(model, w_h, w_l);
    let min = |r: std::ops::Range<usize>| se[r].iter().cloned().fold(f64::INFINITY, f64::min);
    let mut obj = 0.0;
    if model.k_h > 0 {
        obj += ah * min(0..model.k_h);
    }
    if model.k_l() > 0 {
        obj += al * min(model.k_h..model.k());
    }
    Ok(obj)
}

/// Builds the convexified constraints for a target `t` and fixed anchors.
struct Builder<'a> {
    model: &'a PzfClosedForm<f64>,
    weights: (f64, f64),
    sigma: (f64, f64),
    u_box: (f64, f64),
    t_box: f64,
    scales: (f64, f64),
}

/// Quadratic row under construction.
struct Row {
    squares: Vec<(f64, Vec<f64>)>,
    linear: Vec<f64>,
    constant: f64,
}

impl Row {
    fn new(n: usize) -> Self {
        Self {
            squares: Vec::new(),
            linear: vec![0.0; n],
            constant: 0.0,
        }
    }

    /// Adds `c * sca_bound(x_i, x_j)` around `(xn, yn)`.
    fn bound(&mut self, c: f64, i: usize, j: usize, xn: f64, yn: f64) {
        let d = xn - yn;
        let mut v = vec![0.0; self.linear.len()];
        v[i] = 1.0;
        v[j] = 1.0;
        self.squares.push((0.25 * c, v));
        self.linear[i] -= 0.5 * c * d;
        self.linear[j] += 0.5 * c * d;
        self.constant += 0.25 * c * d * d;
    }

    /// Adds `c * sca_tangent(x_i, x_j)` around `(xn, yn)`.
    fn tangent(&mut self, c: f64, i: usize, j: usize, xn: f64, yn: f64) {
        let (d, p) = (xn - yn, xn + yn);
        self.linear[i] += 0.5 * c * (p - d);
        self.linear[j] += 0.5 * c * (p + d);
        self.constant += 0.25 * c * (d * d - p * p);
    }

    fn finish(self) -> QuadIneq {
        QuadIneq {
            squares: self.squares,
            linear: self.linear,
            rhs: -self.constant,
        }
        .normalised()
    }
}

impl<'a> Builder<'a> {
    fn new(model: &'a PzfClosedForm<f64>, w_h: f64, w_l: f64, mode: PrelogMode) -> Result<Self> {
        let k = model.k();
        let eta = epa(k)?.eta;
        let sinr: Vec<f64> = (0..k).map(|u| model.sinr(u, &eta)).collect::<Result<_>>()?;
        let group_min = |r: std::ops::Range<usize>| {
            let m = sinr[r].iter().cloned().fold(f64::INFINITY, f64::min);
            if m.is_finite() && m > 0.0 {
                m
            } else {
                1.0
            }
        };
        let sigma = (group_min(0..model.k_h), group_min(model.k_h..k));
        // largest single-user SINRs bound the SINR variables
        let hm_max = model.hm_signal_coeff();
        let lm_max = (model.k_h..k)
            .map(|l| {
                let s = model.lm_signal_coeff(l);
                s / (1.0 + model.lm_self_coeff(l) - s)
            })
            .fold(0.0, f64::max);
        let u_box = (2.0 * hm_max / sigma.0 + 1.0, 2.0 * lm_max / sigma.1 + 1.0);
        let alpha_se = model.cfg.alpha_se();
        let scales = match mode {
            PrelogMode::Consistent => (
                alpha_se * prelog_symbols(&model.cfg, Group::Hm) as f64,
                alpha_se * prelog_symbols(&model.cfg, Group::Lm) as f64,
            ),
            PrelogMode::Literal => (1.0, alpha_se),
        };
        let t_box = (scales.0 * (1.0 + sigma.0 * u_box.0).log2()).max(scales.1 * (1.0 + sigma.1 * u_box.1).log2()) + 1.0;
        Ok(Self {
            model,
            weights: active_weights(model, w_h, w_l),
            sigma,
            u_box,
            t_box,
            scales,
        })
    }

    fn n(&self) -> usize {
        self.model.k() + 4
    }

    fn idx(&self) -> (usize, usize, usize, usize) {
        let k = self.model.k();
        (k, k + 1, k + 2, k + 3)
    }

    fn epa_anchors(&self, opts: &WeightedOptions) -> ScaState {
        let k = self.model.k();
        ScaState {
            eta: vec![1.0 / k as f64; k],
            t_h: self.sigma.0,
            t_l: self.sigma.1,
            tolerance: opts.inner_tolerance,
            cap: opts.inner_cap,
        }
    }

    fn problem(&self, t: f64, a: &ScaState) -> FeasibilityProblem {
        let m = self.model;
        let (k, k_h, n) = (m.k(), m.k_h, self.n());
        let (th, tl, uh, ul) = self.idx();
        let (sh, sl) = self.sigma;
        let (uh_n, ul_n) = (a.t_h / sh, a.t_l / sl);
        let mut quadratic = Vec::new();
        for h in 0..k_h {
            let mut row = Row::new(n);
            for l in k_h..k {
                row.bound(m.hm_interference_coeff(h, l) * sh, l, uh, a.eta[l], uh_n);
            }
            row.linear[h] -= m.hm_signal_coeff();
            row.linear[uh] += sh;
            quadratic.push(row.finish());
        }
        for l in k_h..k {
            let mut row = Row::new(n);
            for j in 0..k {
                let c = if j == l { m.lm_self_coeff(l) } else { m.lm_cross_coeff(l, j) };
                row.bound(c * sl, j, ul, a.eta[j], ul_n);
            }
            let s = m.lm_signal_coeff(l);
            row.tangent(-s * sl, l, ul, a.eta[l], ul_n);
            row.linear[l] -= s;
            row.linear[ul] += sl;
            quadratic.push(row.finish());
        }
        let mut exponential = Vec::new();
        if k_h > 0 {
            exponential.push(ExpIneq {
                t: th,
                scale: self.scales.0,
                weight: 1.0 / sh,
                u: uh,
                u_coeff: 1.0,
            });
        }
        if k_h < k {
            exponential.push(ExpIneq {
                t: tl,
                scale: self.scales.1,
                weight: 1.0 / sl,
                u: ul,
                u_coeff: 1.0,
            });
        }
        let (ah, al) = self.weights;
        let norm = ah.max(al);
        let mut obj = vec![0.0; n];
        obj[th] = -ah / norm;
        obj[tl] = -al / norm;
        let mut budget = vec![0.0; n];
        budget[..k].fill(1.0);
        let mut lower = vec![0.0; n];
        let mut upper = vec![1.0; n];
        upper[th] = self.t_box;
        upper[tl] = self.t_box;
        upper[uh] = self.u_box.0;
        upper[ul] = self.u_box.1;
        lower[..k].fill(0.0);
        FeasibilityProblem {
            linear: vec![LinearIneq::new(obj, -t / norm), LinearIneq::new(budget, 1.0)],
            quadratic,
            exponential,
            lower,
            upper,
        }
    }

    fn start(&self, a: &ScaState) -> Vec<f64> {
        let (th, tl, uh, ul) = self.idx();
        let mut x = vec![0.0; self.n()];
        x[..self.model.k()].copy_from_slice(&a.eta);
        x[uh] = (a.t_h / self.sigma.0).min(self.u_box.0);
        x[ul] = (a.t_l / self.sigma.1).min(self.u_box.1);
        x[th] = (self.scales.0 * (1.0 + a.t_h).log2()).min(self.t_box);
        x[tl] = (self.scales.1 * (1.0 + a.t_l).log2()).min(self.t_box);
        x
    }
}

fn rel_change(new: f64, old: f64) -> f64 {
    (new - old).abs() / new.abs().max(1e-12)
}

/// Weighted max-min of the group minimum SEs under PZF.
pub fn weighted_maxmin_pzf(model: &PzfClosedForm<f64>, w_h: f64, w_l: f64, opts: &WeightedOptions) -> Result<WeightedResult> {
    if !(w_h > 0.0 && w_l > 0.0) {
        return Err(Error::InvalidInput(format!("weights must be positive, got {w_h}, {w_l}")));
    }
    if opts.inner_cap == 0 || !(opts.inner_tolerance > 0.0) {
        return Err(Error::InvalidInput("SCA needs inner_cap >= 1 and a positive tolerance".into()));
    }
    let k = model.k();
    let epa_eta = epa(k)?.eta;
    let objective_epa = weighted_objective(model, w_h, w_l, &epa_eta)?;
    let b = Builder::new(model, w_h, w_l, opts.prelog)?;
    let (_, _, uh, ul) = b.idx();
    let mut best = (objective_epa, epa_eta);
    let mut trace = Vec::new();
    let mut warm: Option<ScaState> = None;
    let epa_se = model.se_all(&epa(k)?.eta)?;
    let t_init = opts.bisection.t_max_multiplier * epa_se.iter().cloned().fold(0.0, f64::max);
    let bisection = bisect(t_init, &opts.bisection, |t| {
        let mut anchors = match (&warm, opts.warm_start) {
            (Some(w), true) => w.clone(),
            _ => b.epa_anchors(opts),
        };
        let mut history = vec![anchors.clone()];
        let mut margin = f64::NAN;
        let mut feasible = false;
        let mut iterations = 0;
        for _ in 0..opts.inner_cap {
            iterations += 1;
            let p = b.problem(t, &anchors);
            let r = phase1(&p, &b.start(&anchors), &opts.barrier).map_err(|e| {
                Error::Solver(format!(
                    "SCA inner solve at t = {t}: {e}; anchors {anchors:?}; violation {}",
                    p.max_violation(&b.start(&anchors))
                ))
            })?;
            margin = r.s;
            if !r.feasible() {
                feasible = false;
                break;
            }
            feasible = true;
            let next = ScaState {
                eta: r.x[..k].to_vec(),
                t_h: b.sigma.0 * r.x[uh],
                t_l: b.sigma.1 * r.x[ul],
                tolerance: anchors.tolerance,
                cap: anchors.cap,
            };
            let total: f64 = next.eta.iter().sum();
            if total > 0.0 {
                let eta: Vec<f64> = next.eta.iter().map(|e| (e / total).max(0.0)).collect();
                let obj = weighted_objective(model, w_h, w_l, &eta)?;
                if obj > best.0 {
                    best = (obj, eta);
                }
            }
            let done = (model.k_h == 0 || rel_change(next.t_h, anchors.t_h) <= opts.inner_tolerance)
                && (model.k_l() == 0 || rel_change(next.t_l, anchors.t_l) <= opts.inner_tolerance);
            anchors = next;
            history.push(anchors.clone());
            if done {
                break;
            }
        }
        if feasible {
            warm = Some(anchors);
        }
        trace.push(ScaStep {
            t,
            feasible,
            inner_iterations: iterations,
            margin,
            anchors: history,
        });
        Ok(feasible)
    })?;
    let allocation = PowerAllocation::new(best.1)?;
    let se = model.se_all(&allocation.eta)?;
    Ok(WeightedResult {
        allocation,
        objective: best.0,
        objective_epa,
        se,
        bisection,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_examples() {
        assert_eq!(sca_bound(2.0, 3.0, 2.0, 3.0), 6.0);
        assert_eq!(sca_bound(1.0, 1.0, 0.0, 0.0), 1.0);
        assert_eq!(sca_bound(2.0f32, 3.0, 2.0, 3.0), 6.0);
        assert_eq!(sca_tangent(2.0, 3.0, 2.0, 3.0), 6.0);
    }

    #[test]
    fn tangent_is_below_bound() {
        for &(x, y, xn, yn) in &[(0.3, 2.0, 1.0, 1.0), (5.0, 0.0, 0.1, 3.0)] {
            assert!(sca_tangent(x, y, xn, yn) <= sca_bound(x, y, xn, yn));
        }
    }
}
