//! Spectral efficiency: the log-det formula, the scalar closed forms, and
//! per-user reports.

pub mod monte_carlo;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelEnsemble, Group};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Cholesky};
use crate::precoders::{PrecoderConstants, Scheme};
use crate::scalar::Real;
use crate::transforms::FrameConfig;

pub use monte_carlo::{
    effective_gain, matrix_se_pzf, nmse_diagnostic, nmse_diagnostic_with, numerical_se, McEstimates, NmseEstimator,
    NmseReport,
};

/// Boltzmann constant used for the thermal noise floor, J/K.
pub const BOLTZMANN: f64 = 1.381e-23;
/// Reference temperature, K.
pub const T0_KELVIN: f64 = 290.0;

/// Thermal noise power in watts over `bandwidth_hz` with the given noise figure.
pub fn noise_power(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    bandwidth_hz * BOLTZMANN * T0_KELVIN * 10f64.powf(noise_figure_db / 10.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkBudget {
    pub tx_power_w: f64,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
    /// Overrides the computed SNR when set.
    pub rho_db: Option<f64>,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            tx_power_w: 0.2,
            noise_figure_db: 9.0,
            bandwidth_hz: 20e6,
            rho_db: None,
        }
    }
}

impl LinkBudget {
    pub fn with_rho_db(rho_db: f64) -> Self {
        Self {
            rho_db: Some(rho_db),
            ..Self::default()
        }
    }

    pub fn noise_power(&self) -> f64 {
        noise_power(self.bandwidth_hz, self.noise_figure_db)
    }

    /// Normalised transmit SNR (linear).
    pub fn rho(&self) -> f64 {
        match self.rho_db {
            Some(db) => 10f64.powf(db / 10.0),
            None => self.tx_power_w / self.noise_power(),
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.rho_db.is_none() {
            if !(self.tx_power_w > 0.0) {
                out.push(format!("link.tx_power_w must be positive, got {}", self.tx_power_w));
            }
            if !(self.bandwidth_hz > 0.0) {
                out.push(format!("link.bandwidth_hz must be positive, got {}", self.bandwidth_hz));
            }
            if !self.noise_figure_db.is_finite() {
                out.push("link.noise_figure_db must be finite".into());
            }
        } else if !self.rho_db.is_some_and(f64::is_finite) {
            out.push("link.rho_db must be finite".into());
        }
        out
    }
}

pub fn rho(link: &LinkBudget) -> f64 {
    link.rho()
}

/// `alpha_SE log2 det(I + D^H Psi^{-1} D)`, via Cholesky factors only.
pub fn mmse_sic_se<T: Real>(d_bar: &CMatrix<T>, psi: &CMatrix<T>, alpha_se: T) -> Result<T> {
    if d_bar.rows() != psi.rows() {
        return Err(Error::dim("mmse_sic_se", psi.rows(), d_bar.rows()));
    }
    let l = Cholesky::factor(psi)?;
    let x = l.solve_lower(d_bar)?;
    let gram = x.adjoint_matmul(&x)?.add(&CMatrix::identity(d_bar.cols()))?;
    let m = Cholesky::factor(&gram.hermitian_part())?;
    Ok(alpha_se * m.ln_det() / T::LN_2())
}

/// Number of data symbols carrying a user's stream: `MN` for HM, `L_d N` for LM.
pub fn prelog_symbols(cfg: &FrameConfig, group: Group) -> usize {
    match group {
        Group::Hm => cfg.mn(),
        Group::Lm => cfg.ldn(),
    }
}

fn log2_1p<T: Real>(x: T) -> T {
    x.ln_1p() / T::LN_2()
}

/// Full zero forcing: `alpha_SE c log2(1 + alpha^2 rho eta)`.
pub fn closed_form_fzf<T: Real>(eta: T, rho: T, alpha: T, cfg: &FrameConfig, group: Group) -> T {
    let alpha_se = T::lit(cfg.alpha_se());
    let c = T::from_usize_lossy(prelog_symbols(cfg, group));
    alpha_se * c * log2_1p(alpha * alpha * rho * eta)
}

/// Scalar SINR model of partial zero forcing for every user (users HM first).
#[derive(Clone, Debug, PartialEq)]
pub struct PzfClosedForm<T> {
    pub cfg: FrameConfig,
    pub k_h: usize,
    pub betas: Vec<T>,
    pub alpha_pzf: T,
    /// One per LM user.
    pub alpha_mrt: Vec<T>,
    pub rho: T,
    pub n_t: usize,
    pub paths: usize,
}

impl PzfClosedForm<f64> {
    /// Model for `ensemble` using estimated precoder constants.
    pub fn from_ensemble(ensemble: &ChannelEnsemble, consts: &PrecoderConstants, rho: f64) -> Result<Self> {
        if consts.scheme != Scheme::Pzf {
            return Err(Error::InvalidInput("closed-form PZF model needs PZF constants".into()));
        }
        if consts.alpha_mrt.len() != ensemble.k_l() {
            return Err(Error::dim("MRT constants", ensemble.k_l(), consts.alpha_mrt.len()));
        }
        Ok(Self {
            cfg: ensemble.cfg,
            k_h: ensemble.k_h(),
            betas: ensemble.betas(),
            alpha_pzf: consts.alpha_zf_value().unwrap_or(0.0),
            alpha_mrt: consts.alpha_mrt.clone(),
            rho,
            n_t: ensemble.n_t,
            paths: ensemble.paths,
        })
    }
}

impl<T: Real> PzfClosedForm<T> {
    pub fn k(&self) -> usize {
        self.betas.len()
    }

    pub fn k_l(&self) -> usize {
        self.k() - self.k_h
    }

    pub fn group(&self, k: usize) -> Group {
        if k < self.k_h {
            Group::Hm
        } else {
            Group::Lm
        }
    }

    fn nt(&self) -> T {
        T::from_usize_lossy(self.n_t)
    }

    fn check(&self, eta: &[T]) -> Result<()> {
        if eta.len() != self.k() {
            return Err(Error::dim("closed-form SE", self.k(), eta.len()));
        }
        if eta.iter().any(|e| !(*e >= T::zero())) {
            return Err(Error::InvalidInput("power coefficients must be >= 0".into()));
        }
        Ok(())
    }

    /// Interference coefficient of LM user `l` on HM user `h`:
    /// `alpha_MRT,l^2 beta_h beta_l rho N_t`.
    pub fn hm_interference_coeff(&self, h: usize, l: usize) -> T {
        let a = self.alpha_mrt[l - self.k_h];
        a * a * self.betas[h] * self.betas[l] * self.rho * self.nt()
    }

    /// Desired-signal coefficient of an HM user, `alpha_PZF^2 rho`.
    pub fn hm_signal_coeff(&self) -> T {
        self.alpha_pzf * self.alpha_pzf * self.rho
    }

    /// Desired-signal coefficient of LM user `l`, `beta_l N_t rho`.
    pub fn lm_signal_coeff(&self, l: usize) -> T {
        self.betas[l] * self.nt() * self.rho
    }

    /// Self-interference coefficient of LM user `l`,
    /// `rho alpha^2 beta^2 N_t (N_t + 1 + (N_t - 1)/P)`.
    pub fn lm_self_coeff(&self, l: usize) -> T {
        let a = self.alpha_mrt[l - self.k_h];
        let b = self.betas[l];
        let nt = self.nt();
        let p = T::from_usize_lossy(self.paths);
        self.rho * a * a * b * b * nt * (nt + T::one() + (nt - T::one()) / p)
    }

    /// Coefficient of `eta_lp` in LM user `l`'s interference for `lp != l`.
    pub fn lm_cross_coeff(&self, l: usize, lp: usize) -> T {
        if lp < self.k_h {
            self.rho * self.betas[l]
        } else {
            let a = self.alpha_mrt[lp - self.k_h];
            a * a * self.rho * self.betas[l] * self.betas[lp] * self.nt()
        }
    }

    /// SINR of HM user `h`.
    pub fn sinr_hm(&self, h: usize, eta: &[T]) -> Result<T> {
        self.check(eta)?;
        let interference: T = (self.k_h..self.k()).map(|l| self.hm_interference_coeff(h, l) * eta[l]).sum();
        Ok(self.hm_signal_coeff() * eta[h] / (T::one() + interference))
    }

    /// Interference-plus-signal term `Psi` of LM user `l`.
    pub fn psi_lm(&self, l: usize, eta: &[T]) -> Result<T> {
        self.check(eta)?;
        let mut psi = self.lm_self_coeff(l) * eta[l];
        for (k, &e) in eta.iter().enumerate() {
            if k != l {
                psi += self.lm_cross_coeff(l, k) * e;
            }
        }
        Ok(psi)
    }

    /// SINR of LM user `l`; errors when the effective denominator is not positive.
    pub fn sinr_lm(&self, l: usize, eta: &[T]) -> Result<T> {
        let psi = self.psi_lm(l, eta)?;
        let signal = self.lm_signal_coeff(l) * eta[l];
        let denom = T::one() + psi - signal;
        if !(denom > T::zero()) {
            return Err(Error::Approximation(format!(
                "LM user {l}: denominator {denom} <= 0 (beta={}, N_t={}, rho={}, eta={:?})",
                self.betas[l], self.n_t, self.rho, eta
            )));
        }
        Ok(signal / denom)
    }

    pub fn sinr(&self, k: usize, eta: &[T]) -> Result<T> {
        match self.group(k) {
            Group::Hm => self.sinr_hm(k, eta),
            Group::Lm => self.sinr_lm(k, eta),
        }
    }

    pub fn se(&self, k: usize, eta: &[T]) -> Result<T> {
        let c = T::from_usize_lossy(prelog_symbols(&self.cfg, self.group(k)));
        Ok(T::lit(self.cfg.alpha_se()) * c * log2_1p(self.sinr(k, eta)?))
    }

    pub fn se_all(&self, eta: &[T]) -> Result<Vec<T>> {
        (0..self.k()).map(|k| self.se(k, eta)).collect()
    }

    /// Model with user `k` (an LM user) removed.
    pub fn without_lm(&self, k: usize) -> Result<Self> {
        if k < self.k_h || k >= self.k() {
            return Err(Error::InvalidInput(format!("user {k} is not an LM user")));
        }
        let mut out = self.clone();
        out.betas.remove(k);
        out.alpha_mrt.remove(k - self.k_h);
        Ok(out)
    }
}

/// Where an SE number came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeMethod {
    /// Log-det formula with every expectation a Monte Carlo mean.
    Numerical,
    /// Matrix form with analytic desired-signal means, or the exact FZF closed form.
    Prop,
    /// Scalar SINR approximation.
    Corollary,
}

impl SeMethod {
    pub fn label(self) -> &'static str {
        match self {
            SeMethod::Numerical => "numerical",
            SeMethod::Prop => "prop",
            SeMethod::Corollary => "corollary",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSe {
    pub user: usize,
    pub group: Group,
    pub method: SeMethod,
    pub se: f64,
    pub std_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeReport {
    pub scheme: Scheme,
    pub k_h: usize,
    pub k_l: usize,
    pub n_t: usize,
    pub rho: f64,
    pub eta: Vec<f64>,
    pub users: Vec<UserSe>,
}

impl SeReport {
    pub fn values(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.se).collect()
    }

    pub fn min(&self) -> f64 {
        self.users.iter().map(|u| u.se).fold(f64::INFINITY, f64::min)
    }

    pub fn csv_header() -> &'static str {
        "user,group,method,eta,se_bit_per_s_per_hz,std_error_bit_per_s_per_hz"
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::csv_header());
        s.push('\n');
        for u in &self.users {
            let _ = writeln!(
                s,
                "{},{},{},{:.12e},{:.12e},{}",
                u.user,
                u.group.label(),
                u.method.label(),
                self.eta[u.user],
                u.se,
                u.std_error.map(|e| format!("{e:.6e}")).unwrap_or_default()
            );
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Closed-form SE of every user: the exact expression under FZF, the scalar
/// approximations under PZF.
pub fn closed_form_se(ensemble: &ChannelEnsemble, consts: &PrecoderConstants, eta: &[f64], rho: f64) -> Result<SeReport> {
    if eta.len() != ensemble.k() {
        return Err(Error::dim("power coefficients", ensemble.k(), eta.len()));
    }
    let (method, se) = match consts.scheme {
        Scheme::Fzf => {
            let alpha = consts
                .alpha_zf_value()
                .ok_or_else(|| Error::InvalidInput("FZF constants lack alpha".into()))?;
            let se = ensemble
                .users
                .iter()
                .zip(eta)
                .map(|(u, &e)| closed_form_fzf(e, rho, alpha, &ensemble.cfg, u.group))
                .collect();
            (SeMethod::Prop, se)
        }
        Scheme::Pzf => (
            SeMethod::Corollary,
            PzfClosedForm::from_ensemble(ensemble, consts, rho)?.se_all(eta)?,
        ),
    };
    Ok(SeReport {
        scheme: consts.scheme,
        k_h: ensemble.k_h(),
        k_l: ensemble.k_l(),
        n_t: ensemble.n_t,
        rho,
        eta: eta.to_vec(),
        users: ensemble
            .users
            .iter()
            .zip(se)
            .enumerate()
            .map(|(user, (u, se))| UserSe {
                user,
                group: u.group,
                method,
                se,
                std_error: None,
            })
            .collect(),
    })
}
