//! Zero-forcing (full and partial) and maximum-ratio precoders, and the
//! Monte Carlo estimates of their normalisation constants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelEnsemble, ChannelRealization, Group, UserProfile};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Cholesky};
use crate::rng::{self, Domain};

/// Condition estimate above which a Gram matrix is treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Redraws allowed per Monte Carlo sample before giving up.
pub const MAX_REDRAWS: u32 = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Zero forcing over all users.
    #[default]
    Fzf,
    /// Zero forcing over HM users, MRT for LM users.
    Pzf,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Fzf => "FZF",
            Scheme::Pzf => "PZF",
        }
    }
}

/// Block selector `B_k` of size `K MN x MN`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SelectionMatrix {
    pub k: usize,
    pub users: usize,
    pub mn: usize,
}

impl SelectionMatrix {
    pub fn new(k: usize, users: usize, mn: usize) -> Result<Self> {
        if k >= users {
            return Err(Error::InvalidInput(format!("user {k} out of range for K = {users}")));
        }
        Ok(Self { k, users, mn })
    }

    pub fn matrix(&self) -> CMatrix<f64> {
        let mut b = CMatrix::zeros(self.users * self.mn, self.mn);
        b.set_block(self.k * self.mn, 0, &CMatrix::identity(self.mn));
        b
    }
}

/// Row-stacks the time-domain channels of the users in `group` (all users when
/// `None`), keeping their order.
pub fn stack_channels(realizations: &[ChannelRealization], group: Option<Group>) -> Result<CMatrix<f64>> {
    let blocks: Vec<&CMatrix<f64>> = realizations
        .iter()
        .filter(|r| group.is_none_or(|g| r.group() == g))
        .map(|r| r.h_td())
        .collect();
    if blocks.is_empty() {
        return Err(Error::InvalidInput("no users to stack".into()));
    }
    CMatrix::vstack(&blocks)
}

/// Cholesky-based inverse of `H H^H` with a 1-norm condition estimate.
#[derive(Clone, Debug)]
pub struct ZfSolver {
    pub gram_inverse: CMatrix<f64>,
    pub condition: f64,
}

impl ZfSolver {
    pub fn new(h: &CMatrix<f64>) -> Result<Self> {
        if h.rows() > h.cols() {
            return Err(Error::Singular { condition: f64::INFINITY });
        }
        let g = h.gram();
        let ch = Cholesky::factor(&g).map_err(|e| match e {
            Error::NotPositiveDefinite { .. } => Error::Singular { condition: f64::INFINITY },
            other => other,
        })?;
        let gram_inverse = ch.inverse()?;
        let condition = g.norm_one() * gram_inverse.norm_one();
        if !condition.is_finite() || condition > CONDITION_LIMIT {
            return Err(Error::Singular { condition });
        }
        Ok(Self { gram_inverse, condition })
    }

    pub fn trace_inverse(&self) -> f64 {
        self.gram_inverse.trace().re
    }

    /// `alpha H^H (H H^H)^{-1}`, all users' precoders side by side.
    ///
    /// One step of iterative refinement is applied to the zero-forcing
    /// residual `H W - alpha I`.
    pub fn precoders(&self, h: &CMatrix<f64>, alpha: f64) -> Result<CMatrix<f64>> {
        let w = h.adjoint_matmul(&self.gram_inverse)?.scale(alpha);
        let residual = h.matmul(&w)?.sub(&CMatrix::scaled_identity(h.rows(), alpha))?;
        let correction = h.adjoint_matmul(&self.gram_inverse.matmul(&residual)?)?;
        w.sub(&correction)
    }
}

/// `W_k = alpha H^H (H H^H)^{-1} B_k`.
pub fn zf_precoder(h: &CMatrix<f64>, b: &SelectionMatrix, alpha: f64) -> Result<CMatrix<f64>> {
    if h.rows() != b.users * b.mn {
        return Err(Error::dim("zf_precoder", h.rows(), b.users * b.mn));
    }
    let all = ZfSolver::new(h)?.precoders(h, alpha)?;
    Ok(all.block(0, b.k * b.mn, all.rows(), b.mn))
}

/// `1 / sqrt(beta N_t)`.
pub fn alpha_mrt(beta: f64, n_t: usize) -> Result<f64> {
    if !(beta > 0.0) || n_t == 0 {
        return Err(Error::InvalidInput(format!("MRT needs beta > 0 and N_t >= 1, got beta={beta}, N_t={n_t}")));
    }
    Ok(1.0 / (beta * n_t as f64).sqrt())
}

/// `alpha_MRT H^H` together with `alpha_MRT`.
pub fn mrt_precoder(h_td: &CMatrix<f64>, beta: f64, n_t: usize) -> Result<(CMatrix<f64>, f64)> {
    let a = alpha_mrt(beta, n_t)?;
    Ok((h_td.adjoint().scale(a), a))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub alpha: f64,
    /// Delta-method standard error of `alpha`; `None` with fewer than two draws.
    pub std_error: Option<f64>,
    pub redraws: u32,
    pub mean_trace: f64,
    pub draws: usize,
}

impl AlphaEstimate {
    fn from_traces(rows: usize, traces: &[f64], redraws: u32) -> Self {
        let n = traces.len() as f64;
        let mean = traces.iter().sum::<f64>() / n;
        let alpha = (rows as f64 / mean).sqrt();
        let std_error = (traces.len() >= 2).then(|| {
            let var = traces.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
            alpha / (2.0 * mean) * (var / n).sqrt()
        });
        Self {
            alpha,
            std_error,
            redraws,
            mean_trace: mean,
            draws: traces.len(),
        }
    }
}

/// Per-draw diagonal-block traces of `(H H^H)^{-1}`, one per user, and the
/// number of singular redraws.
fn block_traces(ensemble: &ChannelEnsemble, n_mc: usize, seed: u64, domain: Domain) -> Result<(Vec<Vec<f64>>, u32)> {
    if n_mc == 0 {
        return Err(Error::InvalidInput("N_mc must be at least 1".into()));
    }
    let mn = ensemble.cfg.mn();
    let draws: Vec<(Vec<f64>, u32)> = (0..n_mc as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, domain, i);
            let mut redraws = 0;
            loop {
                let real = ensemble.realize_from(&mut r)?;
                match ZfSolver::new(&stack_channels(&real, None)?) {
                    Ok(s) => {
                        let g = &s.gram_inverse;
                        let blocks = (0..ensemble.k())
                            .map(|k| (k * mn..(k + 1) * mn).map(|j| g[(j, j)].re).sum())
                            .collect();
                        return Ok((blocks, redraws));
                    }
                    Err(Error::Singular { .. }) if redraws < MAX_REDRAWS => redraws += 1,
                    Err(e) => {
                        return Err(Error::Draw {
                            draw: i,
                            source: Box::new(e),
                        })
                    }
                }
            }
        })
        .collect::<Result<_>>()?;
    let redraws = draws.iter().map(|d| d.1).sum();
    Ok((draws.into_iter().map(|d| d.0).collect(), redraws))
}

fn estimate_alpha(ensemble: &ChannelEnsemble, n_mc: usize, seed: u64, domain: Domain) -> Result<AlphaEstimate> {
    let rows = ensemble.k() * ensemble.cfg.mn();
    let (blocks, redraws) = block_traces(ensemble, n_mc, seed, domain)?;
    let traces: Vec<f64> = blocks.iter().map(|b| b.iter().sum()).collect();
    Ok(AlphaEstimate::from_traces(rows, &traces, redraws))
}

/// Mean per-user block traces of `(H H^H)^{-1}` at unit large-scale fading.
///
/// With `H = B^{1/2} H_unit`, `Tr (H H^H)^{-1} = sum_k tau_k / beta_k`, so the
/// normalisation for any `beta` follows without redrawing channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceProfile {
    pub scheme: Scheme,
    pub per_user: Vec<f64>,
    pub draws: usize,
    pub redraws: u32,
}

impl TraceProfile {
    /// Estimates the profile of the users `ensemble` would zero-force under
    /// `scheme`, with every beta replaced by one.
    pub fn estimate(ensemble: &ChannelEnsemble, scheme: Scheme, n_mc: usize, seed: u64) -> Result<Self> {
        let users: Vec<_> = ensemble
            .users
            .iter()
            .filter(|u| scheme == Scheme::Fzf || u.group == Group::Hm)
            .map(|u| UserProfile { beta: 1.0, ..u.clone() })
            .collect();
        if users.is_empty() {
            // PZF without HM users: nothing is zero-forced
            return Ok(Self {
                scheme,
                per_user: Vec::new(),
                draws: 0,
                redraws: 0,
            });
        }
        let unit = ChannelEnsemble::new(users, ensemble.cfg, ensemble.n_t, ensemble.paths, ensemble.doppler)?;
        let domain = match scheme {
            Scheme::Fzf => Domain::AlphaFzf,
            Scheme::Pzf => Domain::AlphaPzf,
        };
        let (blocks, redraws) = block_traces(&unit, n_mc, seed, domain)?;
        let per_user = (0..unit.k())
            .map(|k| blocks.iter().map(|b| b[k]).sum::<f64>() / n_mc as f64)
            .collect();
        Ok(Self {
            scheme,
            per_user,
            draws: n_mc,
            redraws,
        })
    }

    /// Normalisation constant for the zero-forced users' `betas`.
    pub fn alpha(&self, betas: &[f64], mn: usize) -> Result<f64> {
        if betas.len() != self.per_user.len() {
            return Err(Error::dim("trace profile", self.per_user.len(), betas.len()));
        }
        let trace: f64 = self.per_user.iter().zip(betas).map(|(t, b)| t / b).sum();
        Ok(((betas.len() * mn) as f64 / trace).sqrt())
    }

    /// Constants for `ensemble` (its betas) from this profile.
    pub fn constants(&self, ensemble: &ChannelEnsemble) -> Result<PrecoderConstants> {
        let forced: Vec<f64> = ensemble
            .users
            .iter()
            .filter(|u| self.scheme == Scheme::Fzf || u.group == Group::Hm)
            .map(|u| u.beta)
            .collect();
        let alpha = if forced.is_empty() {
            None
        } else {
            let trace: f64 = self.per_user.iter().zip(&forced).map(|(t, b)| t / b).sum();
            Some(AlphaEstimate {
                alpha: self.alpha(&forced, ensemble.cfg.mn())?,
                std_error: None,
                redraws: self.redraws,
                mean_trace: trace,
                draws: self.draws,
            })
        };
        let alpha_mrt = match self.scheme {
            Scheme::Fzf => Vec::new(),
            Scheme::Pzf => ensemble
                .users
                .iter()
                .filter(|u| u.group == Group::Lm)
                .map(|u| alpha_mrt(u.beta, ensemble.n_t))
                .collect::<Result<_>>()?,
        };
        Ok(PrecoderConstants {
            scheme: self.scheme,
            alpha_zf: alpha,
            alpha_mrt,
        })
    }
}

/// `sqrt(K MN / E Tr[(H H^H)^{-1}])` over the full stack.
pub fn estimate_alpha_fzf(ensemble: &ChannelEnsemble, n_mc: usize, seed: u64) -> Result<AlphaEstimate> {
    estimate_alpha(ensemble, n_mc, seed, Domain::AlphaFzf)
}

/// `sqrt(K_h MN / E Tr[(H H^H)^{-1}])` over the HM stack.
pub fn estimate_alpha_pzf(ensemble: &ChannelEnsemble, n_mc: usize, seed: u64) -> Result<AlphaEstimate> {
    let hm: Vec<usize> = (0..ensemble.k_h()).collect();
    if hm.is_empty() {
        return Err(Error::InvalidInput("PZF normalisation needs at least one HM user".into()));
    }
    estimate_alpha(&ensemble.subset(&hm)?, n_mc, seed, Domain::AlphaPzf)
}

/// Ensemble-level normalisation constants of a scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecoderConstants {
    pub scheme: Scheme,
    /// Shared FZF constant, or the PZF constant of the HM group.
    pub alpha_zf: Option<AlphaEstimate>,
    /// One MRT constant per LM user (empty under FZF).
    pub alpha_mrt: Vec<f64>,
}

impl PrecoderConstants {
    pub fn estimate(ensemble: &ChannelEnsemble, scheme: Scheme, n_mc: usize, seed: u64) -> Result<Self> {
        match scheme {
            Scheme::Fzf => Ok(Self {
                scheme,
                alpha_zf: Some(estimate_alpha_fzf(ensemble, n_mc, seed)?),
                alpha_mrt: Vec::new(),
            }),
            Scheme::Pzf => {
                let alpha_zf = if ensemble.k_h() > 0 {
                    Some(estimate_alpha_pzf(ensemble, n_mc, seed)?)
                } else {
                    None
                };
                let alpha_mrt = ensemble
                    .users
                    .iter()
                    .filter(|u| u.group == Group::Lm)
                    .map(|u| alpha_mrt(u.beta, ensemble.n_t))
                    .collect::<Result<_>>()?;
                Ok(Self {
                    scheme,
                    alpha_zf,
                    alpha_mrt,
                })
            }
        }
    }

    pub fn alpha_zf_value(&self) -> Option<f64> {
        self.alpha_zf.map(|a| a.alpha)
    }

    /// Normalisation used for user `k` (users ordered HM first).
    pub fn alpha_for(&self, k: usize, k_h: usize) -> f64 {
        match self.scheme {
            Scheme::Fzf => self.alpha_zf_value().unwrap_or(f64::NAN),
            Scheme::Pzf if k < k_h => self.alpha_zf_value().unwrap_or(f64::NAN),
            Scheme::Pzf => self.alpha_mrt.get(k - k_h).copied().unwrap_or(f64::NAN),
        }
    }
}

/// Per-realisation precoders `W_k` (each `N_t MN x MN`), users HM first.
#[derive(Clone, Debug)]
pub struct PrecoderSet {
    pub scheme: Scheme,
    pub w: Vec<CMatrix<f64>>,
    pub alpha: Vec<f64>,
    pub condition: Option<f64>,
    /// Order of the Gram matrix that was factorised, if any.
    pub gram_dim: Option<usize>,
}

impl PrecoderSet {
    pub fn build(realizations: &[ChannelRealization], consts: &PrecoderConstants) -> Result<Self> {
        let k = realizations.len();
        if k == 0 {
            return Err(Error::InvalidInput("no users".into()));
        }
        let mn = realizations[0].h_td().rows();
        let k_h = realizations.iter().filter(|r| r.group() == Group::Hm).count();
        let zf_users = match consts.scheme {
            Scheme::Fzf => k,
            Scheme::Pzf => k_h,
        };
        let mut w = Vec::with_capacity(k);
        let mut alpha = Vec::with_capacity(k);
        let mut condition = None;
        let mut gram_dim = None;
        if zf_users > 0 {
            let a = consts
                .alpha_zf_value()
                .ok_or_else(|| Error::InvalidInput("missing zero-forcing constant".into()))?;
            let group = (consts.scheme == Scheme::Pzf).then_some(Group::Hm);
            let h = stack_channels(realizations, group)?;
            let solver = ZfSolver::new(&h)?;
            condition = Some(solver.condition);
            gram_dim = Some(solver.gram_inverse.rows());
            let all = solver.precoders(&h, a)?;
            for u in 0..zf_users {
                w.push(all.block(0, u * mn, all.rows(), mn));
                alpha.push(a);
            }
        }
        for (j, r) in realizations[zf_users..].iter().enumerate() {
            let a = consts
                .alpha_mrt
                .get(j)
                .copied()
                .ok_or_else(|| Error::InvalidInput("missing MRT constant".into()))?;
            w.push(r.h_td().adjoint().scale(a));
            alpha.push(a);
        }
        Ok(Self {
            scheme: consts.scheme,
            w,
            alpha,
            condition,
            gram_dim,
        })
    }
}
