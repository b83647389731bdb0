//! Frame geometry and the deterministic operators of the discrete model:
//! DFT matrices, CP insertion/removal, delay/Doppler shifts, and the OTFS and
//! OFDM modulation maps.

use num_complex::Complex;
use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::Real;

/// Frame dimensions: `m` delay bins (subcarriers), `n` Doppler bins (symbols),
/// `l_cp` cyclic-prefix samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameConfig {
    pub m: usize,
    pub n: usize,
    pub l_cp: usize,
}

impl FrameConfig {
    pub fn new(m: usize, n: usize, l_cp: usize) -> Result<Self> {
        let cfg = Self { m, n, l_cp };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::dim("frame", "M, N >= 1", format!("M={}, N={}", self.m, self.n)));
        }
        if self.l_cp >= self.m {
            return Err(Error::dim("frame", format!("L_CP < M = {}", self.m), self.l_cp));
        }
        Ok(())
    }

    /// Data samples per OFDM symbol, `M - L_CP`.
    pub fn l_d(&self) -> usize {
        self.m - self.l_cp
    }

    pub fn mn(&self) -> usize {
        self.m * self.n
    }

    /// OFDM data symbols per frame, `L_d N`.
    pub fn ldn(&self) -> usize {
        self.l_d() * self.n
    }

    /// `1 / (MN + L_CP)` as an exact fraction.
    pub fn alpha_se_exact(&self) -> Ratio<u64> {
        Ratio::new(1, (self.mn() + self.l_cp) as u64)
    }

    pub fn alpha_se(&self) -> f64 {
        1.0 / (self.mn() + self.l_cp) as f64
    }

    /// Ratio of the OTFS to OFDM pre-log factors, `MN / (L_d N)`.
    pub fn prelog_ratio(&self) -> Ratio<u64> {
        Ratio::new(self.mn() as u64, self.ldn() as u64)
    }
}

fn cis<T: Real>(phase: T) -> Complex<T> {
    Complex::new(phase.cos(), phase.sin())
}

/// Unitary DFT matrix, `F[j,k] = exp(-i 2 pi j k / n) / sqrt(n)`.
pub fn dft_matrix<T: Real>(n: usize) -> Result<CMatrix<T>> {
    if n == 0 {
        return Err(Error::dim("dft_matrix", "n >= 1", 0));
    }
    let scale = T::one() / T::from_usize_lossy(n).sqrt();
    let step = -T::TAU() / T::from_usize_lossy(n);
    // reduce jk mod n before scaling to keep the phase argument small
    Ok(CMatrix::from_fn(n, n, |j, k| {
        cis(step * T::from_usize_lossy((j * k) % n)) * scale
    }))
}

/// CP insertion `A_CP` (M x L_d) and removal `R_CP` (L_d x M).
///
/// Row `i` of `A_CP` copies sample `(i - L_CP) mod L_d`, so a prefix longer
/// than the symbol wraps around it more than once.
pub fn cp_matrices<T: Real>(cfg: &FrameConfig) -> Result<(CMatrix<T>, CMatrix<T>)> {
    cfg.validate()?;
    let (m, ld, lcp) = (cfg.m, cfg.l_d(), cfg.l_cp);
    let one = Complex::new(T::one(), T::zero());
    let mut a = CMatrix::zeros(m, ld);
    for i in 0..m {
        a[(i, (i + ld * lcp - lcp) % ld)] = one;
    }
    let mut r = CMatrix::zeros(ld, m);
    for i in 0..ld {
        r[(i, lcp + i)] = one;
    }
    Ok((a, r))
}

/// `Pi^l Delta^k` of size `mn x mn`; `k` may be fractional.
pub fn delay_doppler_operator<T: Real>(mn: usize, l: usize, k: T) -> Result<CMatrix<T>> {
    if l >= mn {
        return Err(Error::InvalidInput(format!("delay index {l} out of range for MN = {mn}")));
    }
    let mut out = CMatrix::zeros(mn, mn);
    let step = T::TAU() * k / T::from_usize_lossy(mn);
    for j in 0..mn {
        let c = (j + mn - l) % mn;
        out[(j, c)] = cis(step * T::from_usize_lossy(c));
    }
    Ok(out)
}

fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::dim(context, expected, got))
    }
}

/// `(F_N^H ⊗ I_M) vec(S)` for an `M x N` delay-Doppler grid.
pub fn otfs_modulate<T: Real>(s: &CMatrix<T>, cfg: &FrameConfig) -> Result<Vec<Complex<T>>> {
    if s.shape() != (cfg.m, cfg.n) {
        return Err(Error::dim(
            "otfs_modulate",
            format!("{}x{}", cfg.m, cfg.n),
            format!("{}x{}", s.rows(), s.cols()),
        ));
    }
    let f = dft_matrix::<T>(cfg.n)?;
    let mut x = vec![Complex::zero(); cfg.mn()];
    for t in 0..cfg.n {
        for m in 0..cfg.m {
            let mut acc = Complex::zero();
            for c in 0..cfg.n {
                acc += f[(c, t)].conj() * s[(m, c)];
            }
            x[t * cfg.m + m] = acc;
        }
    }
    Ok(x)
}

/// `(I_N ⊗ A_CP F_{L_d}^H) s` for `L_d N` frequency-domain symbols.
pub fn ofdm_modulate<T: Real>(s: &[Complex<T>], cfg: &FrameConfig) -> Result<Vec<Complex<T>>> {
    check_len("ofdm_modulate", cfg.ldn(), s.len())?;
    let ld = cfg.l_d();
    let (a, _) = cp_matrices::<T>(cfg)?;
    let block = a.matmul(&dft_matrix::<T>(ld)?.adjoint())?;
    let mut x = Vec::with_capacity(cfg.mn());
    for chunk in s.chunks(ld) {
        x.extend(block.mul_vec(chunk)?);
    }
    Ok(x)
}

/// `(F_N ⊗ I_M) y`.
pub fn receive_transform_dd<T: Real>(y: &[Complex<T>], cfg: &FrameConfig) -> Result<Vec<Complex<T>>> {
    check_len("receive_transform_dd", cfg.mn(), y.len())?;
    let f = dft_matrix::<T>(cfg.n)?;
    let mut out = vec![Complex::zero(); cfg.mn()];
    for r in 0..cfg.n {
        for m in 0..cfg.m {
            let mut acc = Complex::zero();
            for c in 0..cfg.n {
                acc += f[(r, c)] * y[c * cfg.m + m];
            }
            out[r * cfg.m + m] = acc;
        }
    }
    Ok(out)
}

/// `(I_N ⊗ F_{L_d} R_CP) y`.
pub fn receive_transform_tf<T: Real>(y: &[Complex<T>], cfg: &FrameConfig) -> Result<Vec<Complex<T>>> {
    check_len("receive_transform_tf", cfg.mn(), y.len())?;
    let f = dft_matrix::<T>(cfg.l_d())?;
    let mut out = Vec::with_capacity(cfg.ldn());
    for block in y.chunks(cfg.m) {
        out.extend(f.mul_vec(&block[cfg.l_cp..])?);
    }
    Ok(out)
}

/// Dense receive/transmit transforms of both waveforms for one frame shape.
#[derive(Clone, Debug)]
pub struct FrameOperators<T> {
    pub cfg: FrameConfig,
    /// `F_N ⊗ I_M`
    pub dd_rx: CMatrix<T>,
    /// `F_N^H ⊗ I_M`
    pub dd_tx: CMatrix<T>,
    /// `I_N ⊗ F_{L_d} R_CP`, `L_d N x MN`
    pub tf_rx: CMatrix<T>,
    /// `I_N ⊗ A_CP F_{L_d}^H`, `MN x L_d N`
    pub tf_tx: CMatrix<T>,
}

impl<T: Real> FrameOperators<T> {
    pub fn new(cfg: &FrameConfig) -> Result<Self> {
        cfg.validate()?;
        let fn_ = dft_matrix::<T>(cfg.n)?;
        let im = CMatrix::identity(cfg.m);
        let in_ = CMatrix::identity(cfg.n);
        let fld = dft_matrix::<T>(cfg.l_d())?;
        let (a, r) = cp_matrices::<T>(cfg)?;
        Ok(Self {
            cfg: *cfg,
            dd_rx: fn_.kron(&im),
            dd_tx: fn_.adjoint().kron(&im),
            tf_rx: in_.kron(&fld.matmul(&r)?),
            tf_tx: in_.kron(&a.matmul(&fld.adjoint())?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type C = Complex<f64>;

    #[test]
    fn frame_validation() {
        assert!(FrameConfig::new(4, 4, 4).is_err());
        assert!(FrameConfig::new(0, 4, 0).is_err());
        let cfg = FrameConfig::new(8, 8, 3).unwrap();
        assert_eq!(cfg.l_d(), 5);
        assert_eq!(cfg.alpha_se_exact() * Ratio::from_integer(67), Ratio::from_integer(1));
        assert_eq!(cfg.prelog_ratio(), Ratio::new(8, 5));
    }

    #[test]
    fn dft_small_cases() {
        let f1 = dft_matrix::<f64>(1).unwrap();
        assert_eq!(f1[(0, 0)], C::new(1.0, 0.0));
        let f2 = dft_matrix::<f64>(2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((f2[(1, 1)] - C::new(-h, 0.0)).norm() < 1e-15);
        assert!((f2[(0, 1)] - C::new(h, 0.0)).norm() < 1e-15);
        assert!(dft_matrix::<f64>(0).is_err());
    }

    #[test]
    fn cp_pair_for_m4() {
        let cfg = FrameConfig::new(4, 2, 1).unwrap();
        let (a, r) = cp_matrices::<f64>(&cfg).unwrap();
        let aa = a.matmul(&a.adjoint()).unwrap();
        let expect = CMatrix::<f64>::from_real_rows(&[
            &[1., 0., 0., 1.],
            &[0., 1., 0., 0.],
            &[0., 0., 1., 0.],
            &[1., 0., 0., 1.],
        ]);
        assert_eq!(aa, expect);
        assert_eq!(r.matmul(&a).unwrap(), CMatrix::identity(3));
    }

    #[test]
    fn zero_cp_is_identity() {
        let cfg = FrameConfig::new(5, 2, 0).unwrap();
        let (a, r) = cp_matrices::<f64>(&cfg).unwrap();
        assert_eq!(a, CMatrix::identity(5));
        assert_eq!(r, CMatrix::identity(5));
    }

    #[test]
    fn shift_operator_layout() {
        let p = delay_doppler_operator::<f64>(4, 1, 0.0).unwrap();
        for j in 0..4 {
            for c in 0..4 {
                let want = if c == (j + 3) % 4 { 1.0 } else { 0.0 };
                assert_eq!(p[(j, c)], C::new(want, 0.0));
            }
        }
        assert_eq!(delay_doppler_operator::<f64>(6, 0, 0.0).unwrap(), CMatrix::identity(6));
        assert!(delay_doppler_operator::<f64>(4, 4, 0.0).is_err());
    }

    #[test]
    fn otfs_single_symbol() {
        let cfg = FrameConfig::new(2, 2, 0).unwrap();
        let mut s = CMatrix::<f64>::zeros(2, 2);
        s[(0, 0)] = C::new(1.0, 0.0);
        let x = otfs_modulate(&s, &cfg).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let want = [h, 0.0, h, 0.0];
        for (xi, w) in x.iter().zip(want) {
            assert!((xi - C::new(w, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn ofdm_first_block() {
        let cfg = FrameConfig::new(4, 2, 1).unwrap();
        let mut s = vec![C::new(0.0, 0.0); 6];
        s[0] = C::new(1.0, 0.0);
        let x = ofdm_modulate(&s, &cfg).unwrap();
        let v = 1.0 / 3f64.sqrt();
        for xi in &x[..4] {
            assert!((xi - C::new(v, 0.0)).norm() < 1e-15);
        }
        for xi in &x[4..] {
            assert!(xi.norm() < 1e-15);
        }
    }

    #[test]
    fn operators_match_vector_maps() {
        let cfg = FrameConfig::new(4, 3, 1).unwrap();
        let ops = FrameOperators::<f64>::new(&cfg).unwrap();
        let y: Vec<C> = (0..12).map(|i| C::new(i as f64 * 0.3 - 1.0, (i * i) as f64 * 0.05)).collect();
        let a = receive_transform_dd(&y, &cfg).unwrap();
        let b = ops.dd_rx.mul_vec(&y).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).norm() < 1e-13));
        let a = receive_transform_tf(&y, &cfg).unwrap();
        let b = ops.tf_rx.mul_vec(&y).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).norm() < 1e-13));
        let s = &y[..9];
        let a = ofdm_modulate(s, &cfg).unwrap();
        let b = ops.tf_tx.mul_vec(s).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).norm() < 1e-13));
    }

    #[test]
    fn length_checks() {
        let cfg = FrameConfig::new(4, 2, 1).unwrap();
        let y = vec![C::new(0.0, 0.0); 7];
        assert!(receive_transform_dd(&y, &cfg).is_err());
        assert!(receive_transform_tf(&y, &cfg).is_err());
        assert!(ofdm_modulate(&y, &cfg).is_err());
        assert!(otfs_modulate(&CMatrix::<f64>::zeros(2, 4), &cfg).is_err());
    }
}
