use nalgebra::DMatrix;
use num_complex::Complex;
use otfs_mimo::channel::{ChannelEnsemble, Group};
use otfs_mimo::linalg::CMatrix;
use otfs_mimo::precoders::{PrecoderConstants, PrecoderSet, Scheme};
use otfs_mimo::rng::{stream, Domain};
use otfs_mimo::se::monte_carlo::nmse_matrix;
use otfs_mimo::se::*;
use otfs_mimo::transforms::{ofdm_modulate, receive_transform_dd, FrameConfig, FrameOperators};
use proptest::prelude::*;
use rand::Rng;

type C = Complex<f64>;

fn desk() -> FrameConfig {
    FrameConfig::new(4, 4, 1).unwrap()
}

fn to_na(a: &CMatrix<f64>) -> DMatrix<C> {
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)])
}

/// `alpha_SE log2 det(I + D^H Psi^{-1} D)` from a dense inverse and the
/// eigenvalues of the Hermitian argument.
fn eigen_oracle(d: &CMatrix<f64>, psi: &CMatrix<f64>, alpha_se: f64) -> f64 {
    let (d, psi) = (to_na(d), to_na(psi));
    let inv = psi.try_inverse().unwrap();
    let m = DMatrix::<C>::identity(d.ncols(), d.ncols()) + d.adjoint() * inv * &d;
    let h = (&m + m.adjoint()) * C::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(h);
    alpha_se * eig.eigenvalues.iter().map(|l| l.log2()).sum::<f64>()
}

fn random_case(n: usize, seed: u64) -> (CMatrix<f64>, CMatrix<f64>) {
    let mut r = stream(seed, Domain::Channel, 1234);
    let mut g = || C::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
    let a = CMatrix::from_fn(n, n, |_, _| g());
    let psi = a.matmul(&a.adjoint()).unwrap().add(&CMatrix::identity(n)).unwrap();
    let d = CMatrix::from_fn(n, n, |_, _| g());
    (d, psi)
}

#[test]
fn noise_and_snr_examples() {
    let n = noise_power(20e6, 9.0);
    assert!((n / 6.36e-13 - 1.0).abs() < 2e-3, "{n}");
    assert!((10.0 * (n * 1e3).log10() + 91.97).abs() < 0.01);
    let r = LinkBudget::default().rho();
    assert!((r / 3.14e11 - 1.0).abs() < 2e-3);
    assert!((10.0 * r.log10() - 115.0).abs() < 0.05);
    assert!((noise_power(1.0, 0.0) / 4.005e-21 - 1.0).abs() < 1e-3);
    assert_eq!(LinkBudget::with_rho_db(100.0).rho(), 1e10);
}

#[test]
fn log_det_examples() {
    let psi = CMatrix::<f64>::identity(4);
    assert_eq!(mmse_sic_se(&CMatrix::zeros(4, 4), &psi, 0.1).unwrap(), 0.0);
    let g = 1.7;
    let se = mmse_sic_se(&CMatrix::scaled_identity(4, g), &psi, 0.1).unwrap();
    assert!((se - 0.1 * 4.0 * (1.0 + g * g).log2()).abs() < 1e-13);
    let (d, psi) = random_case(4, 1);
    assert!((mmse_sic_se(&d, &psi, 1.0).unwrap() - eigen_oracle(&d, &psi, 1.0)).abs() < 1e-10);
}

#[test]
fn fzf_effective_gains() {
    let ens = ChannelEnsemble::flat(2, 2, desk(), 16, 3).unwrap();
    let consts = PrecoderConstants::estimate(&ens, Scheme::Fzf, 100, 1).unwrap();
    let alpha = consts.alpha_zf_value().unwrap();
    let ops = FrameOperators::<f64>::new(&desk()).unwrap();
    let real = ens.realize(3, 0).unwrap();
    let set = PrecoderSet::build(&real, &consts).unwrap();
    let (eta, rho) = (vec![0.1, 0.2, 0.3, 0.4], 1e3);
    for k in 0..4 {
        for kp in 0..4 {
            let d = effective_gain(k, kp, &real, &set, &ops, &eta, rho).unwrap();
            if k == kp {
                let want = CMatrix::scaled_identity(d.rows(), alpha * (rho * eta[k]).sqrt());
                assert!(d.max_abs_diff(&want) < 1e-9 * want.max_abs());
            } else {
                assert!(d.max_abs() < 1e-9, "({k},{kp}) {}", d.max_abs());
            }
        }
    }
}

#[test]
fn pzf_cross_gain_matches_vector_route() {
    // HM receiver, LM (MRT) transmitter: send each OFDM basis symbol through
    // the precoder and channel and read it back in the DD domain
    let c = desk();
    let ens = ChannelEnsemble::flat(1, 1, c, 4, 3).unwrap();
    let consts = PrecoderConstants::estimate(&ens, Scheme::Pzf, 50, 1).unwrap();
    let ops = FrameOperators::<f64>::new(&c).unwrap();
    let real = ens.realize(5, 0).unwrap();
    let set = PrecoderSet::build(&real, &consts).unwrap();
    let (eta, rho) = (vec![0.5, 0.5], 2.0);
    let d = effective_gain(0, 1, &real, &set, &ops, &eta, rho).unwrap();
    assert_eq!(d.shape(), (c.mn(), c.ldn()));
    for j in 0..c.ldn() {
        let mut s = vec![C::new(0.0, 0.0); c.ldn()];
        s[j] = C::new(1.0, 0.0);
        let x = ofdm_modulate(&s, &c).unwrap();
        let tx = set.w[1].mul_vec(&x).unwrap();
        let y = receive_transform_dd(&real[0].h_td().mul_vec(&tx).unwrap(), &c).unwrap();
        for (r, v) in y.iter().enumerate() {
            assert!((d[(r, j)] - v * (rho * eta[1]).sqrt()).norm() < 1e-12);
        }
    }
    assert!(d.max_abs() > 1e-6, "inter-group interference should not vanish");
}

#[test]
fn fzf_numerical_matches_closed_form() {
    let c = desk();
    let ens = ChannelEnsemble::flat(2, 2, c, 16, 3).unwrap();
    let consts = PrecoderConstants::estimate(&ens, Scheme::Fzf, 200, 2).unwrap();
    let eta = vec![0.1, 0.4, 0.2, 0.3];
    let rho = 1e-2;
    let num = numerical_se(&ens, &consts, &eta, rho, 100, 7).unwrap();
    let cf = closed_form_se(&ens, &consts, &eta, rho).unwrap();
    for (n, f) in num.users.iter().zip(&cf.users) {
        let tol = (3.0 * n.std_error.unwrap()).max(1e-9 * f.se);
        assert!((n.se - f.se).abs() <= tol, "{n:?} {f:?}");
        assert_eq!(n.method, SeMethod::Numerical);
        assert_eq!(f.method, SeMethod::Prop);
    }
}

#[test]
fn vanishing_snr_gives_zero_se() {
    let ens = ChannelEnsemble::flat(1, 1, desk(), 8, 3).unwrap();
    for scheme in [Scheme::Fzf, Scheme::Pzf] {
        let consts = PrecoderConstants::estimate(&ens, scheme, 50, 2).unwrap();
        let eta = vec![0.5, 0.5];
        let num = numerical_se(&ens, &consts, &eta, 1e-14, 20, 1).unwrap();
        let cf = closed_form_se(&ens, &consts, &eta, 1e-14).unwrap();
        assert!(num.values().iter().chain(&cf.values()).all(|&s| (0.0..1e-10).contains(&s)));
    }
}

#[test]
fn numerical_se_seed_consistency() {
    let ens = ChannelEnsemble::flat(2, 2, desk(), 16, 3).unwrap();
    let consts = PrecoderConstants::estimate(&ens, Scheme::Pzf, 200, 1).unwrap();
    let eta = vec![0.25; 4];
    let rho = 10f64.powf(10.5);
    let a = numerical_se(&ens, &consts, &eta, rho, 200, 1).unwrap();
    let b = numerical_se(&ens, &consts, &eta, rho, 200, 2).unwrap();
    for (x, y) in a.users.iter().zip(&b.users) {
        let se = x.std_error.unwrap().hypot(y.std_error.unwrap());
        assert!((x.se - y.se).abs() < 3.0 * se, "{x:?} {y:?}");
    }
}

#[test]
fn closed_form_fzf_examples() {
    let c = FrameConfig::new(8, 8, 3).unwrap();
    assert_eq!(closed_form_fzf(0.0, 1e9, 1.0, &c, Group::Hm), 0.0);
    let hm = closed_form_fzf(1.0f64, 1.0, 1.0, &c, Group::Hm);
    assert!((hm - 64.0 / 67.0).abs() < 1e-15);
    assert!((hm - 0.9552).abs() < 5e-5);
    let lm = closed_form_fzf(1.0f64, 1.0, 1.0, &c, Group::Lm);
    assert!((hm / lm - 1.6).abs() < 1e-14);
}

#[test]
fn fzf_beats_pzf_with_equal_power() {
    let ens = ChannelEnsemble::flat(2, 2, desk(), 16, 3).unwrap();
    let eta = vec![0.25; 4];
    for db in [95.0, 105.0, 115.0] {
        let rho = 10f64.powf(db / 10.0);
        let f = closed_form_se(&ens, &PrecoderConstants::estimate(&ens, Scheme::Fzf, 300, 3).unwrap(), &eta, rho).unwrap();
        let p = closed_form_se(&ens, &PrecoderConstants::estimate(&ens, Scheme::Pzf, 300, 3).unwrap(), &eta, rho).unwrap();
        for (a, b) in f.users.iter().zip(&p.users) {
            assert!(a.se >= b.se, "{db} dB user {}: {} < {}", a.user, a.se, b.se);
        }
        // HM above LM under FZF with equal power
        assert!(f.users[0].se > f.users[2].se);
    }
}

#[test]
fn matrix_form_without_lm_is_exact() {
    let ens = ChannelEnsemble::flat(2, 0, desk(), 8, 3).unwrap();
    let consts = PrecoderConstants::estimate(&ens, Scheme::Pzf, 100, 1).unwrap();
    let eta = vec![0.3, 0.7];
    let rho = 1e3;
    let m = matrix_se_pzf(&ens, &consts, &eta, rho, 20, 1).unwrap();
    let a = consts.alpha_zf_value().unwrap();
    for u in &m.users {
        let want = closed_form_fzf(eta[u.user], rho, a, &desk(), Group::Hm);
        assert!((u.se - want).abs() < 1e-9 * want);
        assert_eq!(u.method, SeMethod::Prop);
    }
}

#[test]
fn matrix_form_tracks_numerical() {
    let ens = ChannelEnsemble::flat(2, 2, desk(), 16, 3).unwrap();
    let consts = PrecoderConstants::estimate(&ens, Scheme::Pzf, 300, 1).unwrap();
    let eta = vec![0.25; 4];
    let rho = 1e3;
    let est = McEstimates::run(&ens, &consts, &eta, rho, 300, 4).unwrap();
    let num = est.numerical().unwrap();
    // with Doppler leakage the LM gain mean sits below its analytic value and
    // E{D D^H} - S S^H can lose definiteness; that must surface as an error
    match est.matrix_form() {
        Ok(mat) => {
            for (n, m) in num.users.iter().zip(&mat.users) {
                assert!((n.se - m.se).abs() < (4.0 * n.std_error.unwrap()).max(0.03 * n.se), "{n:?} {m:?}");
            }
        }
        Err(e) => assert!(matches!(e, otfs_mimo::Error::NotPositiveDefinite { .. }), "{e}"),
    }
    // HM rows are exact under PZF regardless
    for u in num.users.iter().filter(|u| u.group == Group::Hm) {
        let a = consts.alpha_zf_value().unwrap();
        assert!(est.analytic_desired(u.user) > 0.0);
        assert!((est.mean_desired(u.user).max_abs_diff(&CMatrix::scaled_identity(desk().mn(), a * (rho * eta[u.user]).sqrt()))) < 1e-6);
    }
}

#[test]
fn nmse_of_exact_target_is_zero() {
    let e = CMatrix::<f64>::scaled_identity(5, 2.5);
    assert!(nmse_matrix(&e, 2.5).iter().all(|&v| v == 0.0));
}

#[test]
fn nmse_small_at_desk_scale() {
    let ens = ChannelEnsemble::flat(2, 2, desk(), 16, 3).unwrap();
    let consts = PrecoderConstants::estimate(&ens, Scheme::Pzf, 200, 1).unwrap();
    for est in [NmseEstimator::SelfNormalised, NmseEstimator::Conditional, NmseEstimator::Plain] {
        let r = nmse_diagnostic_with(&ens, &consts, 300, 3, est).unwrap();
        assert_eq!(r.pairs.len(), 4);
        assert!(r.mean_diagonal < 0.1, "{est:?}: {}", r.mean_diagonal);
        assert!(r.pairs.iter().all(|p| p.matrix.iter().all(|v| v.is_finite())));
    }
}

#[test]
fn nmse_falls_with_antennas_for_every_seed() {
    for seed in 1..4 {
        let v: Vec<f64> = [8, 32]
            .iter()
            .map(|&n_t| {
                let ens = ChannelEnsemble::flat(2, 2, desk(), n_t, 3).unwrap();
                let consts = PrecoderConstants::estimate(&ens, Scheme::Pzf, 100, seed).unwrap();
                nmse_diagnostic(&ens, &consts, 400, seed).unwrap().mean_diagonal
            })
            .collect();
        assert!(v[1] < v[0], "seed {seed}: {v:?}");
    }
}

#[test]
fn report_serialises() {
    let ens = ChannelEnsemble::flat(1, 1, desk(), 8, 3).unwrap();
    let consts = PrecoderConstants::estimate(&ens, Scheme::Pzf, 20, 1).unwrap();
    let r = closed_form_se(&ens, &consts, &[0.5, 0.5], 1e9).unwrap();
    let csv = r.to_csv();
    assert!(csv.starts_with(SeReport::csv_header()));
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.contains(",corollary,"));
    let back: SeReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(back, r);
}

fn pzf_model() -> impl Strategy<Value = (PzfClosedForm<f64>, Vec<f64>)> {
    (0usize..3, 1usize..3, 8usize..64, 1e2..1e4f64)
        .prop_flat_map(|(k_h, k_l, n_t, rho)| {
            let k = k_h + k_l;
            (
                Just((k_h, n_t, rho)),
                prop::collection::vec(0.2..2.0f64, k),
                prop::collection::vec(0.01..1.0f64, k),
            )
        })
        .prop_map(|((k_h, n_t, rho), betas, eta)| {
            let alpha_mrt = betas[k_h..].iter().map(|b| 1.0 / (b * n_t as f64).sqrt()).collect();
            let total: f64 = eta.iter().sum();
            let model = PzfClosedForm {
                cfg: desk(),
                k_h,
                betas,
                alpha_pzf: 2.0,
                alpha_mrt,
                rho,
                n_t,
                paths: 3,
            };
            (model, eta.iter().map(|e| e / total).collect())
        })
}

proptest! {
    #[test]
    fn log_det_matches_eigen_route(n in 1usize..6, seed in 0u64..1000) {
        let (d, psi) = random_case(n, seed);
        let a = mmse_sic_se(&d, &psi, 0.3).unwrap();
        let b = eigen_oracle(&d, &psi, 0.3);
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
    }

    #[test]
    fn own_power_never_hurts((model, eta) in pzf_model(), k_frac in 0.0..1.0f64, bump in 1.0..3.0f64) {
        let k = ((model.k() as f64) * k_frac) as usize % model.k();
        let mut more = eta.clone();
        more[k] *= bump;
        if let (Ok(a), Ok(b)) = (model.se(k, &eta), model.se(k, &more)) {
            prop_assert!(b >= a - 1e-12);
        }
    }

    #[test]
    fn closed_forms_nonnegative((model, eta) in pzf_model()) {
        for k in 0..model.k() {
            if let Ok(s) = model.se(k, &eta) {
                prop_assert!(s >= 0.0);
            }
        }
    }
}
