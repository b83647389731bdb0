//! Multipath user channels in the time, delay-Doppler and time-frequency domains.

pub mod geometry;

use std::sync::OnceLock;

use num_complex::Complex;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::rng::{self, Domain, Rng};
use crate::scalar::Real;
use crate::transforms::{FrameConfig, FrameOperators};

pub use geometry::{draw_drop, drop_users, large_scale_fading, Geometry, LargeScaleFading};

/// Largest dense matrix (in complex entries) the channel builders will allocate.
pub const MAX_DENSE_ENTRIES: u128 = 1 << 26;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    /// High mobility, served with OTFS.
    Hm,
    /// Low mobility, served with OFDM.
    Lm,
}

impl Group {
    pub fn label(self) -> &'static str {
        match self {
            Group::Hm => "HM",
            Group::Lm => "LM",
        }
    }
}

/// Largest delay and Doppler indices a user's paths can take.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mobility {
    pub l_max: usize,
    pub k_max: f64,
}

impl Mobility {
    pub const HM_DEFAULT: Mobility = Mobility { l_max: 3, k_max: 5.0 };
    pub const LM_DEFAULT: Mobility = Mobility { l_max: 3, k_max: 3.0 };

    pub fn default_for(group: Group) -> Self {
        match group {
            Group::Hm => Self::HM_DEFAULT,
            Group::Lm => Self::LM_DEFAULT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub group: Group,
    /// Position in metres inside the simulation square; `None` in flat mode.
    pub position: Option<[f64; 2]>,
    /// Large-scale fading coefficient (linear).
    pub beta: f64,
    pub mobility: Mobility,
}

impl UserProfile {
    /// Unit-gain user with the default mobility of its group.
    pub fn flat(group: Group) -> Self {
        Self {
            group,
            position: None,
            beta: 1.0,
            mobility: Mobility::default_for(group),
        }
    }
}

/// How Doppler indices are drawn from `[-k_max, k_max]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DopplerGrid {
    #[default]
    Continuous,
    Integer,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Path {
    pub gain: Complex<f64>,
    pub delay: usize,
    pub doppler: f64,
    /// Angle of departure in radians.
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }
}

/// Array response `theta[n] = exp(-i pi n sin(phi))`.
pub fn steering_vector<T: Real>(phi: T, n_t: usize) -> Vec<Complex<T>> {
    let s = -T::PI() * phi.sin();
    (0..n_t)
        .map(|n| {
            let a = s * T::from_usize_lossy(n);
            Complex::new(a.cos(), a.sin())
        })
        .collect()
}

/// Draws `p` paths with uniform delays, uniform Dopplers, `CN(0, 1/p)` gains and
/// `sin(phi)` uniform on `[-1, 1]`.
pub fn draw_paths(mobility: &Mobility, p: usize, grid: DopplerGrid, rng: &mut Rng) -> Result<PathSet> {
    if p == 0 {
        return Err(Error::InvalidInput("path count must be at least 1".into()));
    }
    if !(mobility.k_max >= 0.0) || !mobility.k_max.is_finite() {
        return Err(Error::InvalidInput(format!("k_max must be finite and >= 0, got {}", mobility.k_max)));
    }
    let sd = (0.5 / p as f64).sqrt();
    let paths = (0..p)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let delay = rng.random_range(0..=mobility.l_max);
            let doppler = match grid {
                DopplerGrid::Continuous => rng.random_range(-mobility.k_max..=mobility.k_max),
                DopplerGrid::Integer => {
                    let k = mobility.k_max.floor() as i64;
                    rng.random_range(-k..=k) as f64
                }
            };
            let sin_phi: f64 = rng.random_range(-1.0..=1.0);
            Path {
                gain: Complex::new(re * sd, im * sd),
                delay,
                doppler,
                angle: sin_phi.asin(),
            }
        })
        .collect();
    Ok(PathSet { paths })
}

fn guard(what: &'static str, rows: usize, cols: usize) -> Result<()> {
    let entries = rows as u128 * cols as u128;
    if entries > MAX_DENSE_ENTRIES {
        return Err(Error::Resource {
            what,
            entries,
            limit: MAX_DENSE_ENTRIES,
        });
    }
    Ok(())
}

/// `sqrt(beta) sum_i theta_i ⊗ (h_i Pi^{l_i} Delta^{k_i})`, of size `MN x N_t MN`.
pub fn time_domain_channel(paths: &PathSet, beta: f64, cfg: &FrameConfig, n_t: usize) -> Result<CMatrix<f64>> {
    cfg.validate()?;
    if n_t == 0 {
        return Err(Error::InvalidInput("N_t must be at least 1".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
    }
    let mn = cfg.mn();
    guard("time-domain channel", mn, n_t * mn)?;
    let mut h = CMatrix::zeros(mn, n_t * mn);
    let sb = beta.sqrt();
    for path in &paths.paths {
        if path.delay >= mn {
            return Err(Error::InvalidInput(format!("delay {} exceeds MN = {mn}", path.delay)));
        }
        let theta = steering_vector(path.angle, n_t);
        let step = std::f64::consts::TAU * path.doppler / mn as f64;
        let g = path.gain * sb;
        for j in 0..mn {
            let c = (j + mn - path.delay) % mn;
            let base = g * Complex::from_polar(1.0, step * c as f64);
            for (n, t) in theta.iter().enumerate() {
                h[(j, n * mn + c)] += t * base;
            }
        }
    }
    Ok(h)
}

fn per_antenna(
    h: &CMatrix<f64>,
    n_t: usize,
    left: &CMatrix<f64>,
    right: &CMatrix<f64>,
    context: &'static str,
) -> Result<CMatrix<f64>> {
    let mn = left.cols();
    if h.rows() != mn || h.cols() != n_t * mn {
        return Err(Error::dim(context, format!("{mn}x{}", n_t * mn), format!("{}x{}", h.rows(), h.cols())));
    }
    let mut out = CMatrix::zeros(left.rows(), n_t * right.cols());
    for a in 0..n_t {
        let blk = left.matmul(&h.block(0, a * mn, mn, mn))?.matmul(right)?;
        out.set_block(0, a * right.cols(), &blk);
    }
    Ok(out)
}

/// `(F_N ⊗ I_M) H (I_{N_t} ⊗ F_N^H ⊗ I_M)`.
pub fn dd_channel_with(h_td: &CMatrix<f64>, ops: &FrameOperators<f64>, n_t: usize) -> Result<CMatrix<f64>> {
    per_antenna(h_td, n_t, &ops.dd_rx, &ops.dd_tx, "dd_channel")
}

pub fn dd_channel(h_td: &CMatrix<f64>, cfg: &FrameConfig, n_t: usize) -> Result<CMatrix<f64>> {
    dd_channel_with(h_td, &FrameOperators::new(cfg)?, n_t)
}

/// `(I_N ⊗ F_M) H (I_{N_t} ⊗ I_N ⊗ F_M^H)`.
pub fn tf_channel(h_td: &CMatrix<f64>, cfg: &FrameConfig, n_t: usize) -> Result<CMatrix<f64>> {
    let fm = crate::transforms::dft_matrix::<f64>(cfg.m)?;
    let i_n = CMatrix::identity(cfg.n);
    let left = i_n.kron(&fm);
    let right = i_n.kron(&fm.adjoint());
    per_antenna(h_td, n_t, &left, &right, "tf_channel")
}

/// One user's channel draw, with the transformed channels built on demand.
#[derive(Debug)]
pub struct ChannelRealization {
    pub profile: UserProfile,
    pub paths: PathSet,
    cfg: FrameConfig,
    n_t: usize,
    h_td: CMatrix<f64>,
    h_dd: OnceLock<CMatrix<f64>>,
    h_tf: OnceLock<CMatrix<f64>>,
}

impl ChannelRealization {
    pub fn new(profile: UserProfile, paths: PathSet, cfg: &FrameConfig, n_t: usize) -> Result<Self> {
        let h_td = time_domain_channel(&paths, profile.beta, cfg, n_t)?;
        Ok(Self {
            profile,
            paths,
            cfg: *cfg,
            n_t,
            h_td,
            h_dd: OnceLock::new(),
            h_tf: OnceLock::new(),
        })
    }

    pub fn group(&self) -> Group {
        self.profile.group
    }

    pub fn beta(&self) -> f64 {
        self.profile.beta
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn h_td(&self) -> &CMatrix<f64> {
        &self.h_td
    }

    pub fn h_dd(&self) -> Result<&CMatrix<f64>> {
        if let Some(h) = self.h_dd.get() {
            return Ok(h);
        }
        let h = dd_channel(&self.h_td, &self.cfg, self.n_t)?;
        Ok(self.h_dd.get_or_init(|| h))
    }

    pub fn h_tf(&self) -> Result<&CMatrix<f64>> {
        if let Some(h) = self.h_tf.get() {
            return Ok(h);
        }
        let h = tf_channel(&self.h_td, &self.cfg, self.n_t)?;
        Ok(self.h_tf.get_or_init(|| h))
    }
}

/// Statistical description of all users' channels; realisations are indexed
/// draws from it.
#[derive(Clone, Debug)]
pub struct ChannelEnsemble {
    /// Users ordered HM first, then LM.
    pub users: Vec<UserProfile>,
    pub cfg: FrameConfig,
    pub n_t: usize,
    pub paths: usize,
    pub doppler: DopplerGrid,
}

impl ChannelEnsemble {
    pub fn new(
        mut users: Vec<UserProfile>,
        cfg: FrameConfig,
        n_t: usize,
        paths: usize,
        doppler: DopplerGrid,
    ) -> Result<Self> {
        cfg.validate()?;
        if users.is_empty() {
            return Err(Error::InvalidInput("at least one user is required".into()));
        }
        if n_t == 0 || paths == 0 {
            return Err(Error::InvalidInput("N_t and P must be at least 1".into()));
        }
        if let Some(u) = users.iter().find(|u| !(u.beta > 0.0) || !u.beta.is_finite()) {
            return Err(Error::InvalidInput(format!("beta must be positive and finite, got {}", u.beta)));
        }
        // stable sort keeps the within-group order
        users.sort_by_key(|u| u.group);
        guard("time-domain channel", cfg.mn(), n_t * cfg.mn())?;
        Ok(Self {
            users,
            cfg,
            n_t,
            paths,
            doppler,
        })
    }

    /// `k_h` HM and `k_l` LM users with unit gain.
    pub fn flat(k_h: usize, k_l: usize, cfg: FrameConfig, n_t: usize, paths: usize) -> Result<Self> {
        let users = std::iter::repeat_n(UserProfile::flat(Group::Hm), k_h)
            .chain(std::iter::repeat_n(UserProfile::flat(Group::Lm), k_l))
            .collect();
        Self::new(users, cfg, n_t, paths, DopplerGrid::Continuous)
    }

    pub fn k(&self) -> usize {
        self.users.len()
    }

    pub fn k_h(&self) -> usize {
        self.users.iter().filter(|u| u.group == Group::Hm).count()
    }

    pub fn k_l(&self) -> usize {
        self.k() - self.k_h()
    }

    pub fn betas(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.beta).collect()
    }

    /// Ensemble restricted to the given user indices (order preserved).
    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        let users = keep
            .iter()
            .map(|&i| {
                self.users
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidInput(format!("user index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(users, self.cfg, self.n_t, self.paths, self.doppler)
    }

    /// Realisation `index` of the ensemble under `seed`.
    pub fn realize(&self, seed: u64, index: u64) -> Result<Vec<ChannelRealization>> {
        self.realize_from(&mut rng::stream(seed, Domain::Channel, index))
    }

    pub fn realize_from(&self, rng: &mut Rng) -> Result<Vec<ChannelRealization>> {
        self.users
            .iter()
            .map(|u| {
                let paths = draw_paths(&u.mobility, self.paths, self.doppler, rng)?;
                ChannelRealization::new(u.clone(), paths, &self.cfg, self.n_t)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::FrameConfig;
    use std::f64::consts::PI;

    type C = Complex<f64>;

    #[test]
    fn steering_small_cases() {
        assert!(steering_vector(0.0f64, 4).iter().all(|z| (z - C::new(1.0, 0.0)).norm() < 1e-15));
        let v = steering_vector(PI / 2.0, 2);
        assert!((v[1] - C::new(-1.0, 0.0)).norm() < 1e-15);
        assert!(steering_vector(0.3f64, 7).iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn identity_channel() {
        let cfg = FrameConfig::new(4, 2, 1).unwrap();
        let paths = PathSet {
            paths: vec![Path {
                gain: C::new(1.0, 0.0),
                delay: 0,
                doppler: 0.0,
                angle: 0.0,
            }],
        };
        let h = time_domain_channel(&paths, 1.0, &cfg, 1).unwrap();
        assert_eq!(h, CMatrix::identity(8));
        assert_eq!(dd_channel(&h, &cfg, 1).unwrap().max_abs_diff(&CMatrix::identity(8)) < 1e-14, true);
    }

    #[test]
    fn draws_respect_bounds() {
        let mut r = rng::stream(3, Domain::Channel, 0);
        for _ in 0..200 {
            let p = draw_paths(&Mobility::HM_DEFAULT, 3, DopplerGrid::Continuous, &mut r).unwrap();
            assert!(p.paths.iter().all(|x| x.delay <= 3 && x.doppler.abs() <= 5.0));
            let q = draw_paths(&Mobility::LM_DEFAULT, 3, DopplerGrid::Integer, &mut r).unwrap();
            assert!(q.paths.iter().all(|x| x.doppler.fract() == 0.0 && x.doppler.abs() <= 3.0));
        }
        assert!(draw_paths(&Mobility::HM_DEFAULT, 0, DopplerGrid::Continuous, &mut r).is_err());
    }

    #[test]
    fn resource_guard_trips() {
        let cfg = FrameConfig::new(64, 64, 3).unwrap();
        let err = time_domain_channel(&PathSet::default(), 1.0, &cfg, 100).unwrap_err();
        assert!(matches!(err, Error::Resource { .. }));
    }

    #[test]
    fn ensemble_orders_groups() {
        let cfg = FrameConfig::new(2, 2, 1).unwrap();
        let users = vec![UserProfile::flat(Group::Lm), UserProfile::flat(Group::Hm)];
        let e = ChannelEnsemble::new(users, cfg, 2, 2, DopplerGrid::Continuous).unwrap();
        assert_eq!(e.users[0].group, Group::Hm);
        assert_eq!((e.k_h(), e.k_l()), (1, 1));
        let a = e.realize(9, 4).unwrap();
        let b = e.realize(9, 4).unwrap();
        assert_eq!(a[1].paths, b[1].paths);
        assert_eq!(a[0].h_td(), b[0].h_td());
    }
}
