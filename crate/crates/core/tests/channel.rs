use num_complex::Complex;
use otfs_mimo::channel::geometry::{draw_drop, drop_users, large_scale_fading, shadowing_covariance, Geometry};
use otfs_mimo::channel::*;
use otfs_mimo::linalg::CMatrix;
use otfs_mimo::rng::{stream, Domain};
use otfs_mimo::transforms::{delay_doppler_operator, otfs_modulate, receive_transform_dd, FrameConfig};
use proptest::prelude::*;

type C = Complex<f64>;

fn cfg(m: usize, n: usize) -> FrameConfig {
    FrameConfig::new(m, n, 0).unwrap()
}

#[test]
fn steering_examples() {
    for z in steering_vector(0.0f64, 4) {
        assert!((z - C::new(1.0, 0.0)).norm() < 1e-15);
    }
    let v = steering_vector(std::f64::consts::FRAC_PI_2, 2);
    assert!((v[0] - C::new(1.0, 0.0)).norm() < 1e-15);
    assert!((v[1] - C::new(-1.0, 0.0)).norm() < 1e-15);
}

#[test]
fn steering_entries_average_out() {
    // sin(phi) uniform: E{theta[n]} = sinc(n pi) = 0 for n >= 1, and
    // E{theta^H theta} = I
    let n_t = 4;
    let draws = 20_000;
    let mut mean = vec![C::new(0.0, 0.0); n_t];
    let mut outer = CMatrix::<f64>::zeros(n_t, n_t);
    let mut rng = stream(11, Domain::Channel, 0);
    let mob = Mobility { l_max: 0, k_max: 0.0 };
    for _ in 0..draws {
        let p = draw_paths(&mob, 1, DopplerGrid::Continuous, &mut rng).unwrap();
        let th = steering_vector(p.paths[0].angle, n_t);
        for i in 0..n_t {
            mean[i] += th[i] / draws as f64;
            for j in 0..n_t {
                outer[(i, j)] += th[i].conj() * th[j] / draws as f64;
            }
        }
    }
    // each entry has unit modulus, so the standard error is at most 1/sqrt(draws)
    let se = 1.0 / (draws as f64).sqrt();
    for (i, m) in mean.iter().enumerate().skip(1) {
        assert!(m.norm() < 3.0 * se * 2f64.sqrt(), "n={i}: {m}");
    }
    for i in 0..n_t {
        for j in 0..n_t {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((outer[(i, j)] - C::new(want, 0.0)).norm() < 3.0 * se * 2f64.sqrt());
        }
    }
}

#[test]
fn path_draws_respect_bounds_and_seed() {
    let hm = Mobility::HM_DEFAULT;
    for i in 0..200 {
        let p = draw_paths(&hm, 3, DopplerGrid::Continuous, &mut stream(5, Domain::Channel, i)).unwrap();
        assert_eq!(p.len(), 3);
        for path in &p.paths {
            assert!(path.delay <= 3);
            assert!(path.doppler.abs() <= 5.0);
            assert!(path.angle.abs() <= std::f64::consts::FRAC_PI_2);
        }
        let q = draw_paths(&hm, 3, DopplerGrid::Integer, &mut stream(5, Domain::Channel, i)).unwrap();
        assert!(q.paths.iter().all(|p| p.doppler.fract() == 0.0 && p.doppler.abs() <= 5.0));
    }
    let a = draw_paths(&hm, 3, DopplerGrid::Continuous, &mut stream(9, Domain::Channel, 4)).unwrap();
    let b = draw_paths(&hm, 3, DopplerGrid::Continuous, &mut stream(9, Domain::Channel, 4)).unwrap();
    assert_eq!(a, b);
    assert!(draw_paths(&hm, 0, DopplerGrid::Continuous, &mut stream(9, Domain::Channel, 4)).is_err());
}

#[test]
fn path_power_is_one_on_average() {
    let mut rng = stream(3, Domain::Channel, 0);
    let n = 100_000;
    let total: f64 = (0..n)
        .map(|_| draw_paths(&Mobility::LM_DEFAULT, 3, DopplerGrid::Continuous, &mut rng).unwrap().total_power())
        .sum();
    assert!((total / n as f64 - 1.0).abs() < 0.02);
}

#[test]
fn single_static_path_is_identity() {
    let paths = PathSet {
        paths: vec![Path {
            gain: C::new(1.0, 0.0),
            delay: 0,
            doppler: 0.0,
            angle: 0.0,
        }],
    };
    let h = time_domain_channel(&paths, 1.0, &cfg(3, 2), 1).unwrap();
    assert_eq!(h, CMatrix::identity(6));
    assert!(dd_channel(&h, &cfg(3, 2), 1).unwrap().max_abs_diff(&CMatrix::identity(6)) < 1e-14);
}

/// `sqrt(beta) sum_i theta_i ⊗ h_i Pi^l Delta^k` assembled with Kronecker products.
fn brute_force(paths: &PathSet, beta: f64, mn: usize, n_t: usize) -> CMatrix<f64> {
    let mut h = CMatrix::zeros(mn, n_t * mn);
    for p in &paths.paths {
        let th = CMatrix::from_fn(1, n_t, |_, n| steering_vector(p.angle, n_t)[n]);
        let op = delay_doppler_operator::<f64>(mn, p.delay, p.doppler).unwrap();
        let term = th.kron(&op.scale_complex(p.gain * beta.sqrt()));
        h.add_assign(&term).unwrap();
    }
    h
}

#[test]
fn time_domain_channel_matches_direct_sum() {
    let c = FrameConfig::new(3, 2, 1).unwrap();
    for seed in 0..5 {
        let paths = draw_paths(&Mobility::HM_DEFAULT, 2, DopplerGrid::Continuous, &mut stream(seed, Domain::Channel, 0)).unwrap();
        let fast = time_domain_channel(&paths, 0.3, &c, 2).unwrap();
        assert!(fast.max_abs_diff(&brute_force(&paths, 0.3, 6, 2)) < 1e-13);
    }
}

#[test]
fn channel_energy_matches_beta() {
    let c = cfg(2, 2);
    let (n_t, beta, draws) = (2, 0.7, 10_000);
    let mut acc = 0.0;
    for i in 0..draws {
        let paths = draw_paths(&Mobility::HM_DEFAULT, 3, DopplerGrid::Continuous, &mut stream(1, Domain::Channel, i)).unwrap();
        acc += time_domain_channel(&paths, beta, &c, n_t).unwrap().frobenius_norm_sq();
    }
    let est = acc / (draws as f64 * (n_t * c.mn()) as f64);
    assert!((est / beta - 1.0).abs() < 0.02, "{est}");
}

#[test]
fn dd_channel_column_oracle() {
    // column j of H^DD is the DD response to the j-th unit DD symbol on one antenna
    let c = cfg(2, 2);
    let n_t = 2;
    let mn = c.mn();
    let paths = draw_paths(&Mobility::HM_DEFAULT, 3, DopplerGrid::Continuous, &mut stream(8, Domain::Channel, 0)).unwrap();
    let h = time_domain_channel(&paths, 1.0, &c, n_t).unwrap();
    let hdd = dd_channel(&h, &c, n_t).unwrap();
    for a in 0..n_t {
        for j in 0..mn {
            let s = CMatrix::from_fn(c.m, c.n, |r, q| C::new(if q * c.m + r == j { 1.0 } else { 0.0 }, 0.0));
            let x = otfs_modulate(&s, &c).unwrap();
            let mut full = vec![C::new(0.0, 0.0); n_t * mn];
            full[a * mn..(a + 1) * mn].copy_from_slice(&x);
            let y = receive_transform_dd(&h.mul_vec(&full).unwrap(), &c).unwrap();
            for (r, v) in y.iter().enumerate() {
                assert!((hdd[(r, a * mn + j)] - v).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn realization_caches_consistent_channels() {
    let c = FrameConfig::new(4, 2, 1).unwrap();
    let ens = ChannelEnsemble::flat(1, 1, c, 2, 3).unwrap();
    let real = ens.realize(4, 0).unwrap();
    for r in &real {
        let direct = dd_channel(r.h_td(), &c, 2).unwrap();
        assert!(r.h_dd().unwrap().max_abs_diff(&direct) < 1e-10);
        assert!(r.h_dd().unwrap().max_abs_diff(&direct) < 1e-10);
        assert_eq!(r.h_tf().unwrap().shape(), (8, 16));
    }
    assert!(ChannelEnsemble::flat(0, 0, c, 2, 3).is_err());
}

#[test]
fn guard_rejects_huge_channels() {
    let c = FrameConfig::new(64, 64, 3).unwrap();
    let paths = PathSet::default();
    assert!(matches!(
        time_domain_channel(&paths, 1.0, &c, 100),
        Err(otfs_mimo::Error::Resource { .. })
    ));
}

#[test]
fn path_loss_regression() {
    let g = Geometry::default();
    // 46.3 + 33.9 log f - 13.82 log h_BS - (1.1 log f - 0.7) h_u + (1.56 log f - 0.8)
    assert!((g.path_loss_constant_db() - 141.464_573_003_965).abs() < 1e-9);
    let inner = g.path_loss_db(2.0);
    assert_eq!(inner, g.path_loss_db(9.0));
    let want = -141.464_573_003_965 - 15.0 * 0.05f64.log10() - 20.0 * 0.01f64.log10();
    assert!((inner - want).abs() < 1e-9);
}

#[test]
fn shadowing_correlation_at_decorrelation_distance() {
    let g = Geometry {
        delta: 0.0,
        ..Geometry::default()
    };
    let pos = [[75.0, 30.0], [175.0, 30.0]];
    assert!((g.wrapped_distance(pos[0], pos[1]) - 100.0).abs() < 1e-12);
    assert!(g.distance_to_bs(pos[0]) > g.d1_m && g.distance_to_bs(pos[1]) > g.d1_m);
    let c = shadowing_covariance(&pos, &g);
    assert!((c[(0, 1)].re - 0.5).abs() < 1e-15);
    let n = 4000;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let l = large_scale_fading(&pos, &g, &mut stream(2, Domain::Shadowing, i)).unwrap();
        sxy += l.z[0] * l.z[1];
        sxx += l.z[0] * l.z[0];
        syy += l.z[1] * l.z[1];
    }
    let r = sxy / (sxx * syy).sqrt();
    let sigma = (1.0 - 0.25) / (n as f64).sqrt();
    assert!((r - 0.5).abs() < 3.0 * sigma, "{r}");
}

#[test]
fn drops_are_uniform_and_reproducible() {
    let g = Geometry::default();
    let (users, lsf) = draw_drop(3, 3, &g, &mut stream(1, Domain::Drop, 0)).unwrap();
    assert_eq!(users.len(), 6);
    assert_eq!(users.iter().filter(|u| u.group == Group::Hm).count(), 3);
    for u in &users {
        let p = u.position.unwrap();
        assert!((0.0..=250.0).contains(&p[0]) && (0.0..=250.0).contains(&p[1]));
        assert!(u.beta > 0.0);
    }
    assert_eq!(lsf.beta.len(), 6);
    let again = draw_drop(3, 3, &g, &mut stream(1, Domain::Drop, 0)).unwrap().0;
    assert_eq!(users, again);
    assert_eq!(users[0].mobility, Mobility::HM_DEFAULT);
    assert_eq!(users[5].mobility, Mobility::LM_DEFAULT);

    let mut rng = stream(2, Domain::Geometry, 0);
    let n = 100_000;
    let mut mean = [0.0; 2];
    for _ in 0..n {
        let p = drop_users(1, 0, &g, &mut rng).unwrap()[0].position.unwrap();
        mean[0] += p[0] / n as f64;
        mean[1] += p[1] / n as f64;
    }
    for m in mean {
        assert!((m / 125.0 - 1.0).abs() < 0.01);
    }
}

proptest! {
    #[test]
    fn dd_channel_preserves_norm(seed in 0u64..500, m in 1usize..4, n in 1usize..4) {
        let c = cfg(m, n);
        let paths = draw_paths(&Mobility { l_max: m * n - 1, k_max: 3.0 }, 2, DopplerGrid::Continuous,
            &mut stream(seed, Domain::Channel, 0)).unwrap();
        let h = time_domain_channel(&paths, 1.0, &c, 1).unwrap();
        let d = dd_channel(&h, &c, 1).unwrap();
        prop_assert!((d.frobenius_norm() - h.frobenius_norm()).abs() < 1e-12 * (1.0 + h.frobenius_norm()));
    }

    #[test]
    fn steering_unit_modulus(phi in -3.2..3.2f64, n_t in 1usize..64) {
        let v = steering_vector(phi, n_t);
        prop_assert_eq!(v[0], C::new(1.0, 0.0));
        prop_assert!(v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }
}
