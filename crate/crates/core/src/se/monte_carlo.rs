//! Monte Carlo estimates of the effective gains and the resulting SE.
//!
//! One pass over `N_mc` channel draws accumulates the mean desired gain and
//! the second moments of every effective matrix `D_kk'`. Draws are split into
//! a fixed number of batches; batch means give the error bars and make the
//! result independent of the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mmse_sic_se, SeMethod, SeReport, UserSe};
use crate::channel::{ChannelEnsemble, ChannelRealization, DopplerGrid, Group, Mobility};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::precoders::{PrecoderConstants, PrecoderSet, Scheme};
use crate::rng::{self, Domain};
use crate::transforms::FrameOperators;

/// Upper bound on the number of batches.
pub const MAX_BATCHES: usize = 10;
/// Fewest batches for which a standard error is reported.
pub const MIN_BATCHES_FOR_ERROR: usize = 4;

fn receive_op(ops: &FrameOperators<f64>, g: Group) -> &CMatrix<f64> {
    match g {
        Group::Hm => &ops.dd_rx,
        Group::Lm => &ops.tf_rx,
    }
}

fn transmit_op(ops: &FrameOperators<f64>, g: Group) -> &CMatrix<f64> {
    match g {
        Group::Hm => &ops.dd_tx,
        Group::Lm => &ops.tf_tx,
    }
}

/// `sqrt(rho eta_k') R_k H_k W_k' T_k'` with the receive transform of user
/// `k`'s waveform and the transmit transform of user `k'`'s.
pub fn effective_gain(
    k: usize,
    kp: usize,
    realizations: &[ChannelRealization],
    precoders: &PrecoderSet,
    ops: &FrameOperators<f64>,
    eta: &[f64],
    rho: f64,
) -> Result<CMatrix<f64>> {
    if eta.len() != realizations.len() || precoders.w.len() != realizations.len() {
        return Err(Error::dim("effective_gain", realizations.len(), eta.len().min(precoders.w.len())));
    }
    let rx = realizations[k].group();
    let tx = realizations[kp].group();
    let hw = realizations[k].h_td().matmul(&precoders.w[kp])?;
    let d = receive_op(ops, rx).matmul(&hw)?.matmul(transmit_op(ops, tx))?;
    Ok(d.scale((rho * eta[kp]).sqrt()))
}

/// Running sums of one batch. The own-gain second moment is accumulated
/// around the analytic mean `S_k = g_k I` so that `E{D D^H} - D_bar D_bar^H`
/// does not cancel catastrophically when `D_kk` is nearly deterministic.
#[derive(Clone, Debug)]
struct Sums {
    draws: usize,
    shift: Vec<f64>,
    /// Per user: sum of `D_kk`.
    d: Vec<CMatrix<f64>>,
    /// Per user: sum of `(D_kk - S_k)(D_kk - S_k)^H`.
    own: Vec<CMatrix<f64>>,
    /// Per pair `k != k'`: sum of `D_kk' D_kk'^H` (diagonal entries unused).
    cov: Vec<Vec<CMatrix<f64>>>,
    /// Per pair: largest entry modulus of `D_kk'` seen.
    max_entry: Vec<Vec<f64>>,
}

impl Sums {
    fn new(dims: &[(usize, usize)], shift: &[f64]) -> Self {
        let k = dims.len();
        Self {
            draws: 0,
            shift: shift.to_vec(),
            d: dims.iter().map(|&(r, c)| CMatrix::zeros(r, c)).collect(),
            own: dims.iter().map(|&(r, _)| CMatrix::zeros(r, r)).collect(),
            cov: dims
                .iter()
                .enumerate()
                .map(|(a, &(r, _))| (0..k).map(|b| if a == b { CMatrix::zeros(0, 0) } else { CMatrix::zeros(r, r) }).collect())
                .collect(),
            max_entry: vec![vec![0.0; k]; k],
        }
    }

    fn add(&mut self, a: usize, b: usize, d: &CMatrix<f64>) -> Result<()> {
        self.max_entry[a][b] = self.max_entry[a][b].max(d.max_abs());
        if a == b {
            self.d[a].add_assign(d)?;
            let centred = d.sub(&CMatrix::scaled_identity(d.rows(), self.shift[a]))?;
            self.own[a].add_assign(&centred.gram())
        } else {
            self.cov[a][b].add_assign(&d.gram())
        }
    }

    fn merge(&mut self, other: &Sums) -> Result<()> {
        self.draws += other.draws;
        for (a, b) in self.d.iter_mut().zip(&other.d) {
            a.add_assign(b)?;
        }
        for (a, b) in self.own.iter_mut().zip(&other.own) {
            a.add_assign(b)?;
        }
        for (ra, rb) in self.cov.iter_mut().zip(&other.cov) {
            for (a, b) in ra.iter_mut().zip(rb) {
                a.add_assign(b)?;
            }
        }
        for (ra, rb) in self.max_entry.iter_mut().zip(&other.max_entry) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a = a.max(*b);
            }
        }
        Ok(())
    }

    fn inv_n(&self) -> f64 {
        1.0 / self.draws as f64
    }

    fn mean_d(&self, k: usize) -> CMatrix<f64> {
        self.d[k].scale(self.inv_n())
    }

    /// `D_bar - S_k`.
    fn mean_offset(&self, k: usize) -> Result<CMatrix<f64>> {
        self.mean_d(k).sub(&CMatrix::scaled_identity(self.d[k].rows(), self.shift[k]))
    }

    fn mean_cov(&self, k: usize, kp: usize) -> Result<CMatrix<f64>> {
        if k != kp {
            return Ok(self.cov[k][kp].scale(self.inv_n()));
        }
        let off = self.mean_offset(k)?;
        let g = self.shift[k];
        let cross = off.add(&off.adjoint())?.scale(g);
        self.own[k]
            .scale(self.inv_n())
            .add(&cross)?
            .add(&CMatrix::scaled_identity(off.rows(), g * g))
    }

    /// `I + sum_{k' != k} E{D D^H}` plus the own-gain term `extra`.
    fn psi_with(&self, k: usize, extra: CMatrix<f64>) -> Result<CMatrix<f64>> {
        let mut psi = CMatrix::identity(extra.rows());
        for kp in 0..self.cov[k].len() {
            if kp != k {
                psi.add_assign(&self.mean_cov(k, kp)?)?;
            }
        }
        psi.add_assign(&extra)?;
        Ok(psi)
    }

    /// Ψ with the sample mean as `D_bar`: the own term is the sample covariance.
    fn se_numerical(&self, k: usize, alpha_se: f64) -> Result<f64> {
        let off = self.mean_offset(k)?;
        let extra = self.own[k].scale(self.inv_n()).sub(&off.gram())?;
        mmse_sic_se(&self.mean_d(k), &self.psi_with(k, extra)?, alpha_se)
    }

    /// Ψ with the analytic `D_bar = S_k`: the own term is `E{D D^H} - S S^H`.
    fn se_analytic(&self, k: usize, alpha_se: f64) -> Result<f64> {
        let off = self.mean_offset(k)?;
        let cross = off.add(&off.adjoint())?.scale(self.shift[k]);
        let extra = self.own[k].scale(self.inv_n()).add(&cross)?;
        let d_bar = CMatrix::scaled_identity(off.rows(), self.shift[k]);
        mmse_sic_se(&d_bar, &self.psi_with(k, extra)?, alpha_se)
    }
}

/// Sample moments of the effective gains over one Monte Carlo pass.
#[derive(Clone, Debug)]
pub struct McEstimates {
    pub scheme: Scheme,
    pub groups: Vec<Group>,
    pub eta: Vec<f64>,
    pub rho: f64,
    pub n_t: usize,
    alpha_se: f64,
    analytic: Vec<f64>,
    batches: Vec<Sums>,
    total: Sums,
}

fn batch_bounds(n: usize) -> Vec<(usize, usize)> {
    let b = n.min(MAX_BATCHES);
    (0..b).map(|i| (i * n / b, (i + 1) * n / b)).collect()
}

impl McEstimates {
    /// Runs `n_mc` draws (stream indices `0..n_mc` under `seed`).
    pub fn run(
        ensemble: &ChannelEnsemble,
        consts: &PrecoderConstants,
        eta: &[f64],
        rho: f64,
        n_mc: usize,
        seed: u64,
    ) -> Result<Self> {
        let k = ensemble.k();
        if eta.len() != k {
            return Err(Error::dim("Monte Carlo SE", k, eta.len()));
        }
        if n_mc < 2 {
            return Err(Error::InvalidInput("Monte Carlo SE needs N_mc >= 2".into()));
        }
        if !(rho >= 0.0) || eta.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::InvalidInput("rho and eta must be nonnegative".into()));
        }
        let cfg = ensemble.cfg;
        let ops = FrameOperators::<f64>::new(&cfg)?;
        let groups: Vec<Group> = ensemble.users.iter().map(|u| u.group).collect();
        let dims: Vec<(usize, usize)> = groups
            .iter()
            .map(|&g| {
                let n = super::prelog_symbols(&cfg, g);
                (n, n)
            })
            .collect();

        let analytic: Vec<f64> = (0..k)
            .map(|u| {
                let a = consts.alpha_for(u, ensemble.k_h());
                let base = a * (rho * eta[u]).sqrt();
                match (consts.scheme, groups[u]) {
                    (Scheme::Pzf, Group::Lm) => base * ensemble.users[u].beta * ensemble.n_t as f64,
                    _ => base,
                }
            })
            .collect();

        let batches: Vec<Sums> = batch_bounds(n_mc)
            .into_par_iter()
            .map(|(lo, hi)| {
                let mut sums = Sums::new(&dims, &analytic);
                for i in lo..hi {
                    let tag = |e: Error| Error::Draw {
                        draw: i as u64,
                        source: Box::new(e),
                    };
                    let real = ensemble.realize(seed, i as u64).map_err(tag)?;
                    let set = PrecoderSet::build(&real, consts).map_err(tag)?;
                    for a in 0..k {
                        for b in 0..k {
                            let d = effective_gain(a, b, &real, &set, &ops, eta, rho).map_err(tag)?;
                            sums.add(a, b, &d)?;
                        }
                    }
                    sums.draws += 1;
                }
                Ok(sums)
            })
            .collect::<Result<_>>()?;

        let mut total = Sums::new(&dims, &analytic);
        for b in &batches {
            total.merge(b)?;
        }

        Ok(Self {
            scheme: consts.scheme,
            groups,
            eta: eta.to_vec(),
            rho,
            n_t: ensemble.n_t,
            alpha_se: cfg.alpha_se(),
            analytic,
            batches,
            total,
        })
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn draws(&self) -> usize {
        self.total.draws
    }

    /// Sample mean of `D_kk`.
    pub fn mean_desired(&self, k: usize) -> CMatrix<f64> {
        self.total.mean_d(k)
    }

    /// Sample mean of `D_kk' D_kk'^H`.
    pub fn mean_second_moment(&self, k: usize, kp: usize) -> Result<CMatrix<f64>> {
        self.total.mean_cov(k, kp)
    }

    /// Largest `|D_kk'|` entry over all draws.
    pub fn max_entry(&self, k: usize, kp: usize) -> f64 {
        self.total.max_entry[k][kp]
    }

    /// Largest cross-gain entry over all pairs `k != k'` that zero forcing
    /// nulls (every pair under FZF, HM pairs under PZF).
    pub fn max_nulled_cross_gain(&self) -> f64 {
        let mut m: f64 = 0.0;
        for a in 0..self.k() {
            for b in 0..self.k() {
                let nulled = match self.scheme {
                    Scheme::Fzf => true,
                    Scheme::Pzf => self.groups[a] == Group::Hm && self.groups[b] == Group::Hm,
                };
                if a != b && nulled {
                    m = m.max(self.max_entry(a, b));
                }
            }
        }
        m
    }

    /// Analytic mean desired gain `g` in `D_bar = g I`.
    pub fn analytic_desired(&self, k: usize) -> f64 {
        self.analytic[k]
    }

    fn report<F>(&self, method: SeMethod, se: F) -> Result<SeReport>
    where
        F: Fn(&Sums, usize) -> Result<f64>,
    {
        let mut users = Vec::with_capacity(self.k());
        for k in 0..self.k() {
            let value = se(&self.total, k)?;
            let std_error = if self.batches.len() >= MIN_BATCHES_FOR_ERROR {
                let per: Vec<f64> = self
                    .batches
                    .iter()
                    .map(|b| se(b, k))
                    .collect::<Result<_>>()?;
                let n = per.len() as f64;
                let mean = per.iter().sum::<f64>() / n;
                let var = per.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                Some((var / n).sqrt())
            } else {
                None
            };
            users.push(UserSe {
                user: k,
                group: self.groups[k],
                method,
                se: value,
                std_error,
            });
        }
        Ok(SeReport {
            scheme: self.scheme,
            k_h: self.groups.iter().filter(|g| **g == Group::Hm).count(),
            k_l: self.groups.iter().filter(|g| **g == Group::Lm).count(),
            n_t: self.n_t,
            rho: self.rho,
            eta: self.eta.clone(),
            users,
        })
    }

    /// Log-det SE with every expectation a sample mean.
    pub fn numerical(&self) -> Result<SeReport> {
        self.report(SeMethod::Numerical, |s, k| s.se_numerical(k, self.alpha_se))
    }

    /// Matrix form with the analytic desired-signal mean `D_bar = g I`.
    pub fn matrix_form(&self) -> Result<SeReport> {
        self.report(SeMethod::Prop, |s, k| s.se_analytic(k, self.alpha_se))
    }
}

/// Log-det SE of every user with Monte Carlo expectations.
pub fn numerical_se(
    ensemble: &ChannelEnsemble,
    consts: &PrecoderConstants,
    eta: &[f64],
    rho: f64,
    n_mc: usize,
    seed: u64,
) -> Result<SeReport> {
    McEstimates::run(ensemble, consts, eta, rho, n_mc, seed)?.numerical()
}

/// Matrix-form SE under partial zero forcing.
pub fn matrix_se_pzf(
    ensemble: &ChannelEnsemble,
    consts: &PrecoderConstants,
    eta: &[f64],
    rho: f64,
    n_mc: usize,
    seed: u64,
) -> Result<SeReport> {
    if consts.scheme != Scheme::Pzf {
        return Err(Error::InvalidInput("matrix_se_pzf needs PZF constants".into()));
    }
    McEstimates::run(ensemble, consts, eta, rho, n_mc, seed)?.matrix_form()
}

/// Entrywise NMSE of `E{D D^H}` against `beta_l I` for one (LM receiver, HM
/// transmitter) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairNmse {
    pub lm_user: usize,
    pub hm_user: usize,
    /// Row-major `L_d N x L_d N` NMSE values.
    pub matrix: Vec<f64>,
    pub dim: usize,
    pub mean_diagonal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmseReport {
    pub n_t: usize,
    pub draws: usize,
    pub pairs: Vec<PairNmse>,
    /// Mean over pairs of the mean diagonal NMSE.
    pub mean_diagonal: f64,
}

/// Entrywise `|E - target|^2 / |E|^2`, with `target = scale * I`. An entry
/// that is zero and meant to be zero counts as exact.
pub fn nmse_matrix(e: &CMatrix<f64>, scale: f64) -> Vec<f64> {
    let n = e.rows();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { scale } else { 0.0 };
            let v = e[(i, j)];
            let diff = (v.re - target).powi(2) + v.im.powi(2);
            out.push(if diff == 0.0 { 0.0 } else { diff / v.norm_sqr() });
        }
    }
    out
}

/// How `E{D D^H}` is estimated for the NMSE diagnostic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmseEstimator {
    /// Sample mean of `D D^H` over joint draws of all channels.
    Plain,
    /// Sample mean over HM draws of the exact expectation over the LM
    /// user's paths given the HM precoder.
    Conditional,
    /// As `Conditional`, with each HM precoder rescaled so that its sample
    /// power is exactly the nominal `MN`. This drops the estimation error of
    /// the scaling constant and of the per-user power split, which otherwise
    /// swamps the structural error; it also hides a genuine per-user power
    /// mismatch, which is zero only when the HM users are exchangeable.
    #[default]
    SelfNormalised,
}

/// `E_{l,k}[Pi^l Delta^k Y (Pi^l Delta^k)^H]` for delays uniform on
/// `0..=l_max` and Dopplers uniform on `[-k_max, k_max]`.
pub fn shift_average(y: &CMatrix<f64>, mobility: &Mobility, grid: DopplerGrid) -> CMatrix<f64> {
    let n = y.rows();
    let doppler = |delta: isize| -> f64 {
        let w = std::f64::consts::TAU * delta as f64 / n as f64;
        match grid {
            DopplerGrid::Continuous => {
                let x = w * mobility.k_max;
                if x == 0.0 {
                    1.0
                } else {
                    x.sin() / x
                }
            }
            DopplerGrid::Integer => {
                let k = mobility.k_max.floor() as i64;
                (-k..=k).map(|q| (w * q as f64).cos()).sum::<f64>() / (2 * k + 1) as f64
            }
        }
    };
    let weights: Vec<f64> = (0..2 * n - 1).map(|d| doppler(d as isize - (n as isize - 1))).collect();
    let lags = mobility.l_max + 1;
    let mut out = CMatrix::zeros(n, n);
    for l in 0..lags {
        for j in 0..n {
            let c = (j + n - l % n) % n;
            for jp in 0..n {
                let cp = (jp + n - l % n) % n;
                let w = weights[(c as isize - cp as isize + n as isize - 1) as usize];
                out[(j, jp)] += y[(c, cp)] * w;
            }
        }
    }
    out.scale(1.0 / lags as f64)
}

/// NMSE of the inter-group interference approximation under PZF.
pub fn nmse_diagnostic(ensemble: &ChannelEnsemble, consts: &PrecoderConstants, n_mc: usize, seed: u64) -> Result<NmseReport> {
    nmse_diagnostic_with(ensemble, consts, n_mc, seed, NmseEstimator::default())
}

pub fn nmse_diagnostic_with(
    ensemble: &ChannelEnsemble,
    consts: &PrecoderConstants,
    n_mc: usize,
    seed: u64,
    estimator: NmseEstimator,
) -> Result<NmseReport> {
    if consts.scheme != Scheme::Pzf {
        return Err(Error::InvalidInput("NMSE diagnostic needs PZF".into()));
    }
    let (k_h, k) = (ensemble.k_h(), ensemble.k());
    if k_h == 0 || k_h == k {
        return Err(Error::InvalidInput("NMSE diagnostic needs both HM and LM users".into()));
    }
    // the ratio is scale free, so unit rho and eta are used
    let moments: Vec<Vec<CMatrix<f64>>> = match estimator {
        NmseEstimator::Plain => {
            let eta = vec![1.0; k];
            let est = McEstimates::run(ensemble, consts, &eta, 1.0, n_mc, seed)?;
            (k_h..k)
                .map(|l| (0..k_h).map(|h| est.mean_second_moment(l, h)).collect())
                .collect::<Result<_>>()?
        }
        NmseEstimator::Conditional => conditional_moments(ensemble, consts, n_mc, seed, false)?,
        NmseEstimator::SelfNormalised => conditional_moments(ensemble, consts, n_mc, seed, true)?,
    };
    let mut pairs = Vec::new();
    for (li, row) in moments.iter().enumerate() {
        let l = k_h + li;
        for (h, e) in row.iter().enumerate() {
            let matrix = nmse_matrix(e, ensemble.users[l].beta);
            let dim = e.rows();
            let mean_diagonal = (0..dim).map(|i| matrix[i * dim + i]).sum::<f64>() / dim as f64;
            pairs.push(PairNmse {
                lm_user: l,
                hm_user: h,
                matrix,
                dim,
                mean_diagonal,
            });
        }
    }
    let mean_diagonal = pairs.iter().map(|p| p.mean_diagonal).sum::<f64>() / pairs.len() as f64;
    Ok(NmseReport {
        n_t: ensemble.n_t,
        draws: n_mc,
        pairs,
        mean_diagonal,
    })
}

/// `E{D_lh D_lh^H}` (unit rho, eta) for every LM `l` and HM `h`, averaging
/// the LM channel out exactly: with independent paths and
/// `E{theta_a conj(theta_b)} = delta_ab`, `E{H X H^H} = beta E_{l,k}[A Y A^H]`
/// with `Y = sum_a X_aa` over antenna blocks.
fn conditional_moments(
    ensemble: &ChannelEnsemble,
    consts: &PrecoderConstants,
    n_mc: usize,
    seed: u64,
    self_normalise: bool,
) -> Result<Vec<Vec<CMatrix<f64>>>> {
    if n_mc == 0 {
        return Err(Error::InvalidInput("N_mc must be at least 1".into()));
    }
    let (k_h, k) = (ensemble.k_h(), ensemble.k());
    let hm = ensemble.subset(&(0..k_h).collect::<Vec<_>>())?;
    let hm_consts = PrecoderConstants {
        scheme: Scheme::Pzf,
        alpha_zf: consts.alpha_zf,
        alpha_mrt: Vec::new(),
    };
    let mn = ensemble.cfg.mn();
    let n_t = ensemble.n_t;
    let sums: Vec<Vec<CMatrix<f64>>> = batch_bounds(n_mc)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc = vec![CMatrix::zeros(mn, mn); k_h];
            for i in lo..hi {
                let tag = |e: Error| Error::Draw {
                    draw: i as u64,
                    source: Box::new(e),
                };
                let real = hm.realize_from(&mut rng::stream(seed, Domain::Nmse, i as u64)).map_err(tag)?;
                let set = PrecoderSet::build(&real, &hm_consts).map_err(tag)?;
                for (h, w) in set.w.iter().enumerate() {
                    for a in 0..n_t {
                        acc[h].add_assign(&w.block(a * mn, 0, mn, mn).gram())?;
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut y = vec![CMatrix::zeros(mn, mn); k_h];
    for batch in &sums {
        for (t, b) in y.iter_mut().zip(batch) {
            t.add_assign(b)?;
        }
    }
    let ops = FrameOperators::<f64>::new(&ensemble.cfg)?;
    let inv = 1.0 / n_mc as f64;
    (k_h..k)
        .map(|l| {
            let u = &ensemble.users[l];
            y.iter()
                .map(|yh| {
                    let scale = if self_normalise { mn as f64 / yh.trace().re } else { inv };
                    let avg = shift_average(&yh.scale(scale), &u.mobility, ensemble.doppler);
                    Ok(ops.tf_rx.matmul(&avg)?.matmul(&ops.tf_rx.adjoint())?.scale(u.beta))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::FrameConfig;

    #[test]
    fn batches_cover_all_draws() {
        for n in [2, 3, 9, 10, 11, 200] {
            let b = batch_bounds(n);
            assert_eq!(b.len(), n.min(MAX_BATCHES));
            assert_eq!(b[0].0, 0);
            assert_eq!(b.last().unwrap().1, n);
            assert!(b.windows(2).all(|w| w[0].1 == w[1].0 && w[0].0 < w[0].1));
        }
    }

    #[test]
    fn exact_target_has_zero_nmse() {
        let e = CMatrix::<f64>::scaled_identity(3, 2.0);
        let m = nmse_matrix(&e, 2.0);
        assert_eq!(m[0], 0.0);
        assert_eq!(m[4], 0.0);
    }

    #[test]
    fn fzf_desired_gain_is_scaled_identity() {
        let cfg = FrameConfig::new(2, 2, 1).unwrap();
        let e = ChannelEnsemble::flat(1, 1, cfg, 8, 2).unwrap();
        let c = PrecoderConstants::estimate(&e, Scheme::Fzf, 20, 5).unwrap();
        let real = e.realize(5, 0).unwrap();
        let set = PrecoderSet::build(&real, &c).unwrap();
        let ops = FrameOperators::new(&cfg).unwrap();
        let eta = [0.5, 0.5];
        let a = c.alpha_zf_value().unwrap();
        for k in 0..2 {
            let d = effective_gain(k, k, &real, &set, &ops, &eta, 4.0).unwrap();
            let want = CMatrix::scaled_identity(d.rows(), a * 2.0f64.sqrt());
            assert!(d.max_abs_diff(&want) < 1e-10);
            let x = effective_gain(k, 1 - k, &real, &set, &ops, &eta, 4.0).unwrap();
            assert!(x.max_abs() < 1e-10);
        }
    }
}
