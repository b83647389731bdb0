//! Seeded multi-drop campaigns.
//!
//! Each drop derives its own seed from the master seed and the drop index, so
//! results are identical whatever the number of worker threads.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{AlphaMode, AllocationMethod, Fading, Scenario};
use super::stats::{cdf_stats, CdfStats};
use crate::channel::{draw_drop, ChannelEnsemble, Group, UserProfile};
use crate::error::{Error, Result};
use crate::power::{epa, maxmin_fzf, maxmin_pzf, weakest_lm, weighted_maxmin_pzf, FzfModel};
use crate::precoders::{PrecoderConstants, Scheme, TraceProfile};
use crate::rng::{self, Domain};
use crate::se::{closed_form_se, numerical_se, PzfClosedForm, SeMethod, SeReport};

/// Largest fraction of drops allowed to fail.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

/// One user's result in one drop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserRow {
    pub drop: usize,
    /// Index among the drop's users (HM first), before any scheduling.
    pub user: usize,
    pub group: Group,
    pub position: Option<[f64; 2]>,
    pub beta: f64,
    pub eta: f64,
    pub method: SeMethod,
    pub se: f64,
    pub std_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropResult {
    pub drop: usize,
    pub seed: u64,
    pub alpha_zf: Option<f64>,
    /// LM user removed by scheduling.
    pub unscheduled: Option<usize>,
    /// Weighted objective when the weighted allocator ran.
    pub objective: Option<f64>,
    pub rows: Vec<UserRow>,
    /// Allocator trace, kept only on request.
    pub trace: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropFailure {
    pub drop: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeInfo {
    pub seconds: f64,
    pub threads: usize,
    pub crate_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub scenario: Scenario,
    pub profile: Option<TraceProfile>,
    pub drops: Vec<DropResult>,
    pub failures: Vec<DropFailure>,
    pub runtime: RuntimeInfo,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CampaignOptions {
    /// Keep every allocator's bisection and SCA trace.
    pub debug_traces: bool,
}

impl CampaignResult {
    pub fn rows(&self) -> impl Iterator<Item = &UserRow> {
        self.drops.iter().flat_map(|d| &d.rows)
    }

    /// SE samples of one group and method over all drops.
    pub fn samples(&self, group: Group, method: SeMethod) -> Vec<f64> {
        self.rows()
            .filter(|r| r.group == group && r.method == method)
            .map(|r| r.se)
            .collect()
    }

    pub fn cdf(&self, group: Group, method: SeMethod) -> Result<CdfStats> {
        cdf_stats(&self.samples(group, method))
    }

    /// Mean SE of one group and method; `None` without samples.
    pub fn mean(&self, group: Group, method: SeMethod) -> Option<f64> {
        let s = self.samples(group, method);
        (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64)
    }

    pub fn csv_header() -> &'static str {
        "drop,user,group,x_m,y_m,beta,eta,tx_power_w,method,se_bit_per_s_per_hz,std_error_bit_per_s_per_hz"
    }

    /// Per-drop per-user table. Contains no timing information, so equal
    /// inputs give byte-identical output.
    pub fn to_csv(&self) -> String {
        let p = self.scenario.link.tx_power_w;
        let mut s = String::from(Self::csv_header());
        s.push('\n');
        for r in self.rows() {
            let (x, y) = match r.position {
                Some([x, y]) => (format!("{x:.6}"), format!("{y:.6}")),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(
                s,
                "{},{},{},{x},{y},{:.12e},{:.12e},{:.12e},{},{:.12e},{}",
                r.drop,
                r.user,
                r.group.label(),
                r.beta,
                r.eta,
                r.eta * p,
                r.method.label(),
                r.se,
                r.std_error.map(|e| format!("{e:.6e}")).unwrap_or_default()
            );
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

struct Allocated {
    eta: Vec<f64>,
    objective: Option<f64>,
    trace: Option<serde_json::Value>,
}

fn allocate(
    sc: &Scenario,
    ens: &ChannelEnsemble,
    consts: &PrecoderConstants,
    rho: f64,
    keep_trace: bool,
) -> Result<Allocated> {
    let a = &sc.allocation;
    let mut out = Allocated {
        eta: epa(ens.k())?.eta,
        objective: None,
        trace: None,
    };
    match (a.method, sc.scheme) {
        (AllocationMethod::Epa, _) => {}
        (AllocationMethod::Maxmin, Scheme::Fzf) => {
            let alpha = consts
                .alpha_zf_value()
                .ok_or_else(|| Error::InvalidInput("FZF constants lack alpha".into()))?;
            let groups = ens.users.iter().map(|u| u.group).collect();
            let r = maxmin_fzf(&FzfModel::new(ens.cfg, alpha, rho, groups)?, &a.bisection())?;
            out.eta = r.allocation.eta;
            if keep_trace {
                out.trace = Some(serde_json::to_value(&r.bisection)?);
            }
        }
        (AllocationMethod::Maxmin, Scheme::Pzf) => {
            let r = maxmin_pzf(&PzfClosedForm::from_ensemble(ens, consts, rho)?, &a.bisection())?;
            out.eta = r.allocation.eta;
            if keep_trace {
                out.trace = Some(serde_json::to_value(&r.bisection)?);
            }
        }
        (AllocationMethod::Weighted, Scheme::Pzf) => {
            let model = PzfClosedForm::from_ensemble(ens, consts, rho)?;
            let r = weighted_maxmin_pzf(&model, a.w_h, a.w_l, &a.weighted())?;
            out.eta = r.allocation.eta.clone();
            out.objective = Some(r.objective);
            if keep_trace {
                out.trace = Some(serde_json::from_str(&r.trace_json()?)?);
            }
        }
        (AllocationMethod::Weighted, Scheme::Fzf) => {
            return Err(Error::InvalidInput("weighted max-min requires PZF".into()));
        }
    }
    Ok(out)
}

/// Users of drop `d` with the scenario's mobility bounds.
fn drop_users(sc: &Scenario, seed: u64) -> Result<Vec<UserProfile>> {
    let u = &sc.users;
    let mut users = match sc.fading {
        Fading::Flat => std::iter::repeat_n(UserProfile::flat(Group::Hm), u.k_h)
            .chain(std::iter::repeat_n(UserProfile::flat(Group::Lm), u.k_l))
            .collect(),
        Fading::Geometry => {
            let mut rng = rng::stream(seed, Domain::Drop, 0);
            draw_drop(u.k_h, u.k_l, &sc.geometry, &mut rng)?.0
        }
    };
    for p in &mut users {
        p.mobility = match p.group {
            Group::Hm => sc.mobility.hm,
            Group::Lm => sc.mobility.lm,
        };
    }
    Ok(users)
}

fn ensemble(sc: &Scenario, users: Vec<UserProfile>) -> Result<ChannelEnsemble> {
    ChannelEnsemble::new(users, sc.frame, sc.users.n_t, sc.users.paths, sc.mobility.doppler)
}

fn run_drop(
    sc: &Scenario,
    profile: Option<&TraceProfile>,
    d: usize,
    opts: &CampaignOptions,
) -> Result<DropResult> {
    let seed = rng::child_seed(sc.monte_carlo.seed, d as u64);
    let ens = ensemble(sc, drop_users(sc, seed)?)?;
    let consts = match profile {
        Some(p) => p.constants(&ens)?,
        None => PrecoderConstants::estimate(&ens, sc.scheme, sc.monte_carlo.n_mc_alpha, seed)?,
    };
    let rho = sc.link.rho();

    // scheduling: drop the weakest LM user and keep the original indices
    let (ens, consts, keep, unscheduled) = if sc.allocation.usc {
        let full = PzfClosedForm::from_ensemble(&ens, &consts, rho)?;
        let out = weakest_lm(&full)?;
        let keep: Vec<usize> = (0..ens.k()).filter(|&i| i != out).collect();
        let mut reduced = consts.clone();
        reduced.alpha_mrt.remove(out - ens.k_h());
        (ens.subset(&keep)?, reduced, keep, Some(out))
    } else {
        let keep = (0..ens.k()).collect();
        (ens, consts, keep, None)
    };

    let alloc = allocate(sc, &ens, &consts, rho, opts.debug_traces)?;
    let mut reports: Vec<SeReport> = vec![closed_form_se(&ens, &consts, &alloc.eta, rho)?];
    if sc.monte_carlo.numerical {
        reports.push(numerical_se(&ens, &consts, &alloc.eta, rho, sc.monte_carlo.n_mc, seed)?);
    }
    let rows = reports
        .iter()
        .flat_map(|rep| {
            rep.users.iter().map(|u| {
                let profile = &ens.users[u.user];
                UserRow {
                    drop: d,
                    user: keep[u.user],
                    group: u.group,
                    position: profile.position,
                    beta: profile.beta,
                    eta: alloc.eta[u.user],
                    method: u.method,
                    se: u.se,
                    std_error: u.std_error,
                }
            })
        })
        .collect();
    Ok(DropResult {
        drop: d,
        seed,
        alpha_zf: consts.alpha_zf_value(),
        unscheduled,
        objective: alloc.objective,
        rows,
        trace: alloc.trace,
    })
}

/// The scenario's users with unit large-scale fading.
pub fn flat_ensemble(sc: &Scenario) -> Result<ChannelEnsemble> {
    let users = std::iter::repeat_n(Group::Hm, sc.users.k_h)
        .chain(std::iter::repeat_n(Group::Lm, sc.users.k_l))
        .map(|g| UserProfile {
            mobility: match g {
                Group::Hm => sc.mobility.hm,
                Group::Lm => sc.mobility.lm,
            },
            ..UserProfile::flat(g)
        })
        .collect();
    ensemble(sc, users)
}

/// Unit-gain trace profile shared by every drop.
pub fn campaign_profile(sc: &Scenario) -> Result<TraceProfile> {
    TraceProfile::estimate(
        &flat_ensemble(sc)?,
        sc.scheme,
        sc.monte_carlo.n_mc_alpha,
        sc.monte_carlo.seed,
    )
}

pub fn run_campaign(sc: &Scenario) -> Result<CampaignResult> {
    run_campaign_with(sc, &CampaignOptions::default())
}

pub fn run_campaign_with(sc: &Scenario, opts: &CampaignOptions) -> Result<CampaignResult> {
    sc.validate()?;
    let start = Instant::now();
    let profile = match sc.monte_carlo.alpha {
        AlphaMode::Rescaled => Some(campaign_profile(sc)?),
        AlphaMode::PerDrop => None,
    };
    let outcomes: Vec<Result<DropResult>> = (0..sc.monte_carlo.n_drops)
        .into_par_iter()
        .map(|d| run_drop(sc, profile.as_ref(), d, opts))
        .collect();
    let mut drops = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (d, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => drops.push(r),
            Err(e) => failures.push(DropFailure {
                drop: d,
                error: e.to_string(),
            }),
        }
    }
    let n = sc.monte_carlo.n_drops;
    if failures.len() as f64 > MAX_FAILURE_FRACTION * n as f64 {
        return Err(Error::Solver(format!(
            "{} of {n} drops failed (limit {:.0}%); first: drop {}: {}",
            failures.len(),
            100.0 * MAX_FAILURE_FRACTION,
            failures[0].drop,
            failures[0].error
        )));
    }
    Ok(CampaignResult {
        scenario: sc.clone(),
        profile,
        drops,
        failures,
        runtime: RuntimeInfo {
            seconds: start.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
        },
    })
}
