//! One campaign per value of a single scenario parameter.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::campaign::{run_campaign, CampaignResult};
use super::scenario::Scenario;
use super::stats::{quantile_sorted, MIN_SAMPLES};
use crate::channel::Group;
use crate::error::{Error, Result};
use crate::se::SeMethod;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Transmit antennas.
    NT,
    /// HM users with the total K held fixed.
    KH,
    /// Subcarriers (delay bins).
    M,
    /// SNR override in dB.
    RhoDb,
}

impl SweepAxis {
    pub fn column(self) -> &'static str {
        match self {
            SweepAxis::NT => "n_t",
            SweepAxis::KH => "k_h",
            SweepAxis::M => "m",
            SweepAxis::RhoDb => "rho_db",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &Scenario, value: f64) -> Result<Scenario> {
        let mut s = base.clone();
        let count = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 && value < 1e9 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidInput(format!(
                    "{} takes nonnegative integers, got {value}",
                    self.column()
                )))
            }
        };
        match self {
            SweepAxis::NT => s.users.n_t = count()?,
            SweepAxis::KH => {
                let k = s.users.k();
                let k_h = count()?;
                if k_h > k {
                    return Err(Error::InvalidInput(format!("k_h = {k_h} exceeds K = {k}")));
                }
                s.users.k_h = k_h;
                s.users.k_l = k - k_h;
            }
            SweepAxis::M => s.frame.m = count()?,
            SweepAxis::RhoDb => {
                if !value.is_finite() {
                    return Err(Error::InvalidInput(format!("rho_db must be finite, got {value}")));
                }
                s.link.rho_db = Some(value);
            }
        }
        s.validate()?;
        Ok(s)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "n_t" | "nt" => Ok(SweepAxis::NT),
            "k_h" | "kh" => Ok(SweepAxis::KH),
            "m" => Ok(SweepAxis::M),
            "rho_db" | "rho" => Ok(SweepAxis::RhoDb),
            _ => Err(Error::InvalidInput(format!(
                "unknown sweep axis `{s}` (expected n_t, k_h, m or rho_db)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub group: Group,
    pub method: SeMethod,
    pub samples: usize,
    pub mean_se: f64,
    /// 5th percentile when there are enough samples.
    pub p5_se: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn csv_header(axis: SweepAxis) -> String {
        format!(
            "{},group,method,samples,mean_se_bit_per_s_per_hz,p5_se_bit_per_s_per_hz",
            axis.column()
        )
    }

    pub fn to_csv(&self) -> String {
        let mut s = Self::csv_header(self.axis);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.12e},{}",
                r.value,
                r.group.label(),
                r.method.label(),
                r.samples,
                r.mean_se,
                r.p5_se.map(|p| format!("{p:.12e}")).unwrap_or_default()
            );
        }
        s
    }

    /// Mean SE of `group` and `method` at each swept value, in order.
    pub fn means(&self, group: Group, method: SeMethod) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.group == group && r.method == method)
            .map(|r| (r.value, r.mean_se))
            .collect()
    }
}

/// Summary rows of one campaign, tagged with the swept value.
pub fn summarize(value: f64, result: &CampaignResult) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for method in [SeMethod::Numerical, SeMethod::Prop, SeMethod::Corollary] {
        for group in [Group::Hm, Group::Lm] {
            let mut s = result.samples(group, method);
            if s.is_empty() {
                continue;
            }
            s.sort_by(f64::total_cmp);
            rows.push(SweepRow {
                value,
                group,
                method,
                samples: s.len(),
                mean_se: s.iter().sum::<f64>() / s.len() as f64,
                p5_se: (s.len() >= MIN_SAMPLES).then(|| quantile_sorted(&s, 0.05)),
            });
        }
    }
    rows
}

/// Runs one campaign per value; every value is checked before anything runs.
pub fn sweep(base: &Scenario, axis: SweepAxis, values: &[f64]) -> Result<SweepTable> {
    let scenarios = values
        .iter()
        .map(|&v| axis.apply(base, v).map(|s| (v, s)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (v, s) in scenarios {
        rows.extend(summarize(v, &run_campaign(&s)?));
    }
    Ok(SweepTable { axis, rows })
}
