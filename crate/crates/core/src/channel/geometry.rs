//! User drops, three-slope path loss and correlated shadowing on a wrapped square.

use num_complex::Complex;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Group, Mobility, UserProfile};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Cholesky};
use crate::rng::Rng;

/// Cell layout and propagation constants. Lengths in metres, carrier in MHz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    pub side_m: f64,
    pub d0_m: f64,
    pub d1_m: f64,
    pub d_decorr_m: f64,
    pub delta: f64,
    pub sigma_sh_db: f64,
    pub carrier_mhz: f64,
    pub h_bs_m: f64,
    pub h_u_m: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            side_m: 250.0,
            d0_m: 10.0,
            d1_m: 50.0,
            d_decorr_m: 100.0,
            delta: 0.5,
            sigma_sh_db: 8.0,
            carrier_mhz: 2000.0,
            h_bs_m: 15.0,
            h_u_m: 1.65,
        }
    }
}

impl Geometry {
    /// Problems with the parameters, empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.delta) {
            out.push(format!("geometry.delta must lie in [0, 1], got {}", self.delta));
        }
        if !(0.0 < self.d0_m && self.d0_m < self.d1_m && self.d1_m < self.side_m) {
            out.push(format!(
                "geometry needs 0 < d0 < d1 < side, got d0={} d1={} side={}",
                self.d0_m, self.d1_m, self.side_m
            ));
        }
        if !(self.d_decorr_m > 0.0) {
            out.push(format!("geometry.d_decorr_m must be positive, got {}", self.d_decorr_m));
        }
        if !(self.sigma_sh_db >= 0.0) {
            out.push(format!("geometry.sigma_sh_db must be >= 0, got {}", self.sigma_sh_db));
        }
        for (name, v) in [("carrier_mhz", self.carrier_mhz), ("h_bs_m", self.h_bs_m), ("h_u_m", self.h_u_m)] {
            if !(v > 0.0) {
                out.push(format!("geometry.{name} must be positive, got {v}"));
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

    pub fn bs_position(&self) -> [f64; 2] {
        [self.side_m / 2.0, self.side_m / 2.0]
    }

    /// The constant `L` of the three-slope model, in dB.
    pub fn path_loss_constant_db(&self) -> f64 {
        let lf = self.carrier_mhz.log10();
        46.3 + 33.9 * lf - 13.82 * self.h_bs_m.log10() - (1.1 * lf - 0.7) * self.h_u_m + (1.56 * lf - 0.8)
    }

    /// Path loss in dB (a negative number) at distance `d_m` metres.
    ///
    /// The logarithms take distances in kilometres.
    pub fn path_loss_db(&self, d_m: f64) -> f64 {
        let l = self.path_loss_constant_db();
        let d = d_m / 1000.0;
        let d0 = self.d0_m / 1000.0;
        let d1 = self.d1_m / 1000.0;
        if d > d1 {
            -l - 35.0 * d.log10()
        } else if d > d0 {
            -l - 15.0 * d1.log10() - 20.0 * d.log10()
        } else {
            -l - 15.0 * d1.log10() - 20.0 * d0.log10()
        }
    }

    /// Distance between two points on the square wrapped onto a torus.
    pub fn wrapped_distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let s = self.side_m;
        let mut best = f64::INFINITY;
        for sx in [-s, 0.0, s] {
            for sy in [-s, 0.0, s] {
                let dx = a[0] - b[0] - sx;
                let dy = a[1] - b[1] - sy;
                best = best.min(dx.hypot(dy));
            }
        }
        best
    }

    pub fn distance_to_bs(&self, p: [f64; 2]) -> f64 {
        self.wrapped_distance(p, self.bs_position())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LargeScaleFading {
    pub beta: Vec<f64>,
    pub path_loss_db: Vec<f64>,
    /// Standard-normal shadowing variates.
    pub z: Vec<f64>,
    /// True when the shadowing covariance was not positive definite and was
    /// projected onto the PSD cone.
    pub psd_projected: bool,
}

/// Correlation of the user-side shadowing terms, `2^{-d / d_decorr}`.
pub fn shadowing_covariance(positions: &[[f64; 2]], geom: &Geometry) -> CMatrix<f64> {
    let n = positions.len();
    CMatrix::from_fn(n, n, |i, j| {
        let d = geom.wrapped_distance(positions[i], positions[j]);
        Complex::new((-d / geom.d_decorr_m).exp2(), 0.0)
    })
}

/// Square-root factor `S` with `S S^T = C`; falls back to clipping negative
/// eigenvalues. The flag reports whether the fallback was used.
fn covariance_factor(c: &CMatrix<f64>) -> (Vec<Vec<f64>>, bool) {
    let n = c.rows();
    if let Ok(ch) = Cholesky::factor(c) {
        let l = ch.l();
        return ((0..n).map(|i| (0..n).map(|j| l[(i, j)].re).collect()).collect(), false);
    }
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (c[(i, j)].re + c[(j, i)].re));
    let eig = nalgebra::SymmetricEigen::new(m);
    let s = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| eig.eigenvectors[(i, j)] * eig.eigenvalues[j].max(0.0).sqrt())
                .collect()
        })
        .collect();
    (s, true)
}

/// Large-scale fading for users at `positions`.
pub fn large_scale_fading(positions: &[[f64; 2]], geom: &Geometry, rng: &mut Rng) -> Result<LargeScaleFading> {
    geom.validate()?;
    if let Some(p) = positions
        .iter()
        .find(|p| !(0.0..=geom.side_m).contains(&p[0]) || !(0.0..=geom.side_m).contains(&p[1]))
    {
        return Err(Error::InvalidInput(format!("position {p:?} outside the {} m square", geom.side_m)));
    }
    let dist: Vec<f64> = positions.iter().map(|&p| geom.distance_to_bs(p)).collect();
    let far: Vec<usize> = (0..positions.len()).filter(|&k| dist[k] > geom.d1_m).collect();
    let far_pos: Vec<[f64; 2]> = far.iter().map(|&k| positions[k]).collect();

    let a: f64 = rng.sample(StandardNormal);
    let (s, psd_projected) = covariance_factor(&shadowing_covariance(&far_pos, geom));
    let g: Vec<f64> = (0..far.len()).map(|_| rng.sample(StandardNormal)).collect();

    let mut z = vec![0.0; positions.len()];
    for (row, &k) in far.iter().enumerate() {
        let b: f64 = s[row].iter().zip(&g).map(|(x, y)| x * y).sum();
        z[k] = geom.delta.sqrt() * a + (1.0 - geom.delta).sqrt() * b;
    }
    for (k, zk) in z.iter_mut().enumerate() {
        if dist[k] <= geom.d1_m {
            *zk = rng.sample(StandardNormal);
        }
    }
    let path_loss_db: Vec<f64> = dist.iter().map(|&d| geom.path_loss_db(d)).collect();
    let beta = path_loss_db
        .iter()
        .zip(&z)
        .map(|(pl, zk)| 10f64.powf((pl + geom.sigma_sh_db * zk) / 10.0))
        .collect();
    Ok(LargeScaleFading {
        beta,
        path_loss_db,
        z,
        psd_projected,
    })
}

/// Uniform positions for `k_h` HM and `k_l` LM users; `beta` is left at 1
/// until [`large_scale_fading`] is applied.
pub fn drop_users(k_h: usize, k_l: usize, geom: &Geometry, rng: &mut Rng) -> Result<Vec<UserProfile>> {
    if k_h + k_l == 0 {
        return Err(Error::InvalidInput("a drop needs at least one user".into()));
    }
    let groups = std::iter::repeat_n(Group::Hm, k_h).chain(std::iter::repeat_n(Group::Lm, k_l));
    Ok(groups
        .map(|group| UserProfile {
            group,
            position: Some([
                rng.random_range(0.0..=geom.side_m),
                rng.random_range(0.0..=geom.side_m),
            ]),
            beta: 1.0,
            mobility: Mobility::default_for(group),
        })
        .collect())
}

/// Drops users and fills in their large-scale fading.
pub fn draw_drop(
    k_h: usize,
    k_l: usize,
    geom: &Geometry,
    rng: &mut Rng,
) -> Result<(Vec<UserProfile>, LargeScaleFading)> {
    let mut users = drop_users(k_h, k_l, geom, rng)?;
    let pos: Vec<[f64; 2]> = users.iter().filter_map(|u| u.position).collect();
    let lsf = large_scale_fading(&pos, geom, rng)?;
    for (u, &b) in users.iter_mut().zip(&lsf.beta) {
        u.beta = b;
    }
    Ok((users, lsf))
}
