//! Scenario configuration: presets, TOML/JSON loading over a preset, and
//! validation that reports every problem at once.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::channel::{DopplerGrid, Geometry, Mobility};
use crate::error::{Error, Result};
use crate::power::{BisectionOptions, PrelogMode, WeightedOptions};
use crate::precoders::Scheme;
use crate::se::LinkBudget;
use crate::transforms::FrameConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Users {
    pub k_h: usize,
    pub k_l: usize,
    pub n_t: usize,
    /// Propagation paths per user.
    pub paths: usize,
}

impl Users {
    pub fn k(&self) -> usize {
        self.k_h + self.k_l
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityConfig {
    pub hm: Mobility,
    pub lm: Mobility,
    pub doppler: DopplerGrid,
}

/// Large-scale fading model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fading {
    /// `beta_k = 1` for every user.
    Flat,
    /// Dropped users with path loss and correlated shadowing.
    Geometry,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationMethod {
    Epa,
    Maxmin,
    Weighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationConfig {
    pub method: AllocationMethod,
    pub w_h: f64,
    pub w_l: f64,
    /// Drop the weakest LM user before allocating.
    pub usc: bool,
    /// Outer bisection tolerance, bit/s/Hz.
    pub tolerance: f64,
    pub t_max_multiplier: f64,
    pub inner_tolerance: f64,
    pub inner_cap: usize,
    pub warm_start: bool,
    pub prelog: PrelogMode,
}

impl Default for AllocationConfig {
    fn default() -> Self {
        let w = WeightedOptions::default();
        Self {
            method: AllocationMethod::Epa,
            w_h: 1.0,
            w_l: 1.0,
            usc: false,
            tolerance: w.bisection.tolerance,
            t_max_multiplier: w.bisection.t_max_multiplier,
            inner_tolerance: w.inner_tolerance,
            inner_cap: w.inner_cap,
            warm_start: w.warm_start,
            prelog: w.prelog,
        }
    }
}

impl AllocationConfig {
    pub fn bisection(&self) -> BisectionOptions {
        BisectionOptions {
            tolerance: self.tolerance,
            t_max_multiplier: self.t_max_multiplier,
            ..BisectionOptions::default()
        }
    }

    pub fn weighted(&self) -> WeightedOptions {
        WeightedOptions {
            bisection: self.bisection(),
            inner_tolerance: self.inner_tolerance,
            inner_cap: self.inner_cap,
            warm_start: self.warm_start,
            prelog: self.prelog,
            ..WeightedOptions::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarlo {
    pub seed: u64,
    /// Draws per drop for numerical SE.
    pub n_mc: usize,
    /// Draws for the precoder normalisation.
    pub n_mc_alpha: usize,
    pub n_drops: usize,
    /// Also evaluate the numerical (log-det Monte Carlo) SE in every drop.
    pub numerical: bool,
    pub alpha: AlphaMode,
}

/// How the ZF normalisation is obtained in each drop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaMode {
    /// One unit-gain trace profile per campaign, rescaled by each drop's betas.
    #[default]
    Rescaled,
    /// Fresh Monte Carlo estimate in every drop.
    PerDrop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub frame: FrameConfig,
    pub users: Users,
    pub mobility: MobilityConfig,
    pub fading: Fading,
    pub geometry: Geometry,
    pub link: LinkBudget,
    pub scheme: Scheme,
    pub allocation: AllocationConfig,
    pub monte_carlo: MonteCarlo,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::full()
    }
}

/// Input format of a scenario file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

const SECTIONS: [&str; 9] = [
    "frame",
    "users",
    "mobility",
    "fading",
    "geometry",
    "link",
    "scheme",
    "allocation",
    "monte_carlo",
];

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn section<T: DeserializeOwned>(v: &Value, name: &str, errors: &mut Vec<String>) -> Option<T> {
    match serde_json::from_value(v[name].clone()) {
        Ok(x) => Some(x),
        Err(e) => {
            errors.push(format!("{name}: {e}"));
            None
        }
    }
}

impl Scenario {
    /// Full-size setup: M = N = 8, L_CP = 3, K_h = K_l = 3, N_t = 100, P = 3,
    /// dropped users with shadowing.
    pub fn full() -> Self {
        Self {
            frame: FrameConfig { m: 8, n: 8, l_cp: 3 },
            users: Users {
                k_h: 3,
                k_l: 3,
                n_t: 100,
                paths: 3,
            },
            mobility: MobilityConfig {
                hm: Mobility::HM_DEFAULT,
                lm: Mobility::LM_DEFAULT,
                doppler: DopplerGrid::Continuous,
            },
            fading: Fading::Geometry,
            geometry: Geometry::default(),
            link: LinkBudget::default(),
            scheme: Scheme::Pzf,
            allocation: AllocationConfig::default(),
            monte_carlo: MonteCarlo {
                seed: 1,
                n_mc: 200,
                n_mc_alpha: 500,
                n_drops: 200,
                numerical: false,
                alpha: AlphaMode::Rescaled,
            },
        }
    }

    /// Small setup for quick runs: M = N = 4, L_CP = 1, N_t = 16, K_h = K_l = 2.
    pub fn desk() -> Self {
        let mut s = Self::full();
        s.frame = FrameConfig { m: 4, n: 4, l_cp: 1 };
        s.users = Users {
            k_h: 2,
            k_l: 2,
            n_t: 16,
            paths: 3,
        };
        s.monte_carlo.n_mc = 100;
        s.monte_carlo.n_mc_alpha = 200;
        s.monte_carlo.n_drops = 50;
        s
    }

    /// Parses `text`, filling anything missing from `base`.
    pub fn parse(text: &str, format: Format, base: &Scenario) -> Result<Self> {
        let over: Value = match format {
            Format::Json => serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("JSON: {e}")]))?,
            Format::Toml => {
                let t: toml::Table = toml::from_str(text).map_err(|e| Error::Config(vec![format!("TOML: {e}")]))?;
                serde_json::to_value(t)?
            }
        };
        if !over.is_object() {
            return Err(Error::Config(vec!["scenario must be a table/object".into()]));
        }
        let mut v = serde_json::to_value(base)?;
        let mut errors: Vec<String> = over
            .as_object()
            .into_iter()
            .flat_map(|o| o.keys())
            .filter(|k| !SECTIONS.contains(&k.as_str()))
            .map(|k| format!("unknown section `{k}` (expected one of {})", SECTIONS.join(", ")))
            .collect();
        merge(&mut v, over);
        let frame = section(&v, "frame", &mut errors);
        let users = section(&v, "users", &mut errors);
        let mobility = section(&v, "mobility", &mut errors);
        let fading = section(&v, "fading", &mut errors);
        let geometry = section(&v, "geometry", &mut errors);
        let link = section(&v, "link", &mut errors);
        let scheme = section(&v, "scheme", &mut errors);
        let allocation = section(&v, "allocation", &mut errors);
        let monte_carlo = section(&v, "monte_carlo", &mut errors);
        let (
            Some(frame),
            Some(users),
            Some(mobility),
            Some(fading),
            Some(geometry),
            Some(link),
            Some(scheme),
            Some(allocation),
            Some(monte_carlo),
        ) = (frame, users, mobility, fading, geometry, link, scheme, allocation, monte_carlo)
        else {
            return Err(Error::Config(errors));
        };
        let s = Self {
            frame,
            users,
            mobility,
            fading,
            geometry,
            link,
            scheme,
            allocation,
            monte_carlo,
        };
        errors.extend(s.problems());
        if errors.is_empty() {
            Ok(s)
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn load(path: &Path, base: &Scenario) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, Format::from_path(path), base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = match Format::from_path(path) {
            Format::Json => self.to_json()?,
            Format::Toml => self.to_toml()?,
        };
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Every problem with the scenario; empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = self.frame.validate() {
            out.push(format!("frame: {e}"));
        }
        let u = &self.users;
        if u.k() == 0 {
            out.push("users: need at least one user (k_h + k_l >= 1)".into());
        }
        if u.n_t == 0 {
            out.push("users.n_t must be at least 1".into());
        }
        if u.paths == 0 {
            out.push("users.paths must be at least 1".into());
        }
        let forced = match self.scheme {
            Scheme::Fzf => u.k(),
            Scheme::Pzf => u.k_h,
        };
        if u.n_t > 0 && forced > u.n_t {
            out.push(format!(
                "{} zero-forces {forced} users but only N_t = {} antennas are available",
                self.scheme.label(),
                u.n_t
            ));
        }
        for (name, m) in [("hm", self.mobility.hm), ("lm", self.mobility.lm)] {
            if !(m.k_max >= 0.0 && m.k_max.is_finite()) {
                out.push(format!("mobility.{name}.k_max must be finite and >= 0, got {}", m.k_max));
            }
            if m.l_max >= self.frame.mn().max(1) {
                out.push(format!("mobility.{name}.l_max = {} must be below MN", m.l_max));
            }
        }
        if self.fading == Fading::Geometry {
            out.extend(self.geometry.problems());
        }
        out.extend(self.link.problems());
        let a = &self.allocation;
        match a.method {
            AllocationMethod::Weighted => {
                if self.scheme != Scheme::Pzf {
                    out.push("allocation.method = weighted requires scheme = pzf".into());
                }
                if u.k_h == 0 || u.k_l == 0 {
                    out.push("allocation.method = weighted needs both HM and LM users".into());
                }
                if !(a.w_h > 0.0 && a.w_l > 0.0) {
                    out.push(format!("allocation weights must be positive, got w_h={} w_l={}", a.w_h, a.w_l));
                }
                if a.inner_cap == 0 {
                    out.push("allocation.inner_cap must be at least 1".into());
                }
                if !(a.inner_tolerance > 0.0) {
                    out.push("allocation.inner_tolerance must be positive".into());
                }
            }
            AllocationMethod::Maxmin | AllocationMethod::Epa => {}
        }
        if a.method != AllocationMethod::Epa {
            if !(a.tolerance > 0.0) {
                out.push("allocation.tolerance must be positive".into());
            }
            if !(a.t_max_multiplier > 0.0) {
                out.push("allocation.t_max_multiplier must be positive".into());
            }
        }
        if a.usc {
            if self.scheme != Scheme::Pzf {
                out.push("allocation.usc requires scheme = pzf".into());
            }
            if u.k_l < 2 {
                out.push(format!("allocation.usc needs k_l >= 2, got {}", u.k_l));
            }
        }
        let mc = &self.monte_carlo;
        for (name, v) in [("n_mc", mc.n_mc), ("n_mc_alpha", mc.n_mc_alpha), ("n_drops", mc.n_drops)] {
            if v == 0 {
                out.push(format!("monte_carlo.{name} must be at least 1"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}
