//! Closed-form versus Monte Carlo comparisons on the scenario's unit-gain users.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::campaign::flat_ensemble;
use super::scenario::Scenario;
use crate::channel::Group;
use crate::error::Result;
use crate::power::epa;
use crate::precoders::{PrecoderConstants, Scheme};
use crate::se::{closed_form_se, nmse_diagnostic, numerical_se, SeMethod};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub rho_db: f64,
    pub user: usize,
    pub group: Group,
    pub closed_form_method: SeMethod,
    pub closed_form: f64,
    pub numerical: f64,
    pub std_error: Option<f64>,
}

impl ValidationRow {
    pub fn relative_gap(&self) -> f64 {
        (self.closed_form - self.numerical).abs() / self.numerical.abs()
    }
}

pub fn validation_csv(rows: &[ValidationRow]) -> String {
    let mut s = String::from(
        "rho_db,user,group,closed_form_method,closed_form_se_bit_per_s_per_hz,numerical_se_bit_per_s_per_hz,std_error_bit_per_s_per_hz,relative_gap\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.12e},{:.12e},{},{:.6e}",
            r.rho_db,
            r.user,
            r.group.label(),
            r.closed_form_method.label(),
            r.closed_form,
            r.numerical,
            r.std_error.map(|e| format!("{e:.6e}")).unwrap_or_default(),
            r.relative_gap()
        );
    }
    s
}

/// Closed-form and numerical SE under EPA with `beta = 1`, one block of rows
/// per SNR. The same channel draws are used at every SNR.
pub fn validate_closed_form(sc: &Scenario, rho_db: &[f64]) -> Result<Vec<ValidationRow>> {
    sc.validate()?;
    let ens = flat_ensemble(sc)?;
    let mc = &sc.monte_carlo;
    let consts = PrecoderConstants::estimate(&ens, sc.scheme, mc.n_mc_alpha, mc.seed)?;
    let eta = epa(ens.k())?.eta;
    let mut rows = Vec::new();
    for &db in rho_db {
        let rho = 10f64.powf(db / 10.0);
        let cf = closed_form_se(&ens, &consts, &eta, rho)?;
        let num = numerical_se(&ens, &consts, &eta, rho, mc.n_mc, mc.seed)?;
        for (c, n) in cf.users.iter().zip(&num.users) {
            rows.push(ValidationRow {
                rho_db: db,
                user: c.user,
                group: c.group,
                closed_form_method: c.method,
                closed_form: c.se,
                numerical: n.se,
                std_error: n.std_error,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmsePoint {
    pub n_t: usize,
    pub mean_diagonal: f64,
    pub draws: usize,
}

/// Mean diagonal NMSE of the interference approximation at each antenna count.
pub fn nmse_vs_antennas(sc: &Scenario, n_t: &[usize]) -> Result<Vec<NmsePoint>> {
    let mut out = Vec::new();
    for &n in n_t {
        let mut s = sc.clone();
        s.users.n_t = n;
        s.scheme = Scheme::Pzf;
        s.validate()?;
        let ens = flat_ensemble(&s)?;
        let mc = &s.monte_carlo;
        let consts = PrecoderConstants::estimate(&ens, Scheme::Pzf, mc.n_mc_alpha, mc.seed)?;
        let r = nmse_diagnostic(&ens, &consts, mc.n_mc, mc.seed)?;
        out.push(NmsePoint {
            n_t: n,
            mean_diagonal: r.mean_diagonal,
            draws: r.draws,
        });
    }
    Ok(out)
}

pub fn nmse_csv(points: &[NmsePoint]) -> String {
    let mut s = String::from("n_t,draws,mean_diagonal_nmse\n");
    for p in points {
        let _ = writeln!(s, "{},{},{:.12e}", p.n_t, p.draws, p.mean_diagonal);
    }
    s
}
