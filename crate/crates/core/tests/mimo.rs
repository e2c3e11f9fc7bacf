use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sepred::channel::{generate_channel, generate_dataset, ScenarioConfig, UserCount};
use sepred::linalg::{fro_norm, svd, CMatrix};
use sepred::mimo::*;

fn random(r: usize, t: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(r, t, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    })
}

fn rel(a: &CMatrix, b: &CMatrix) -> f64 {
    fro_norm(&(a - b)) / fro_norm(b).max(f64::MIN_POSITIVE)
}

fn objects(kind: &str, n: usize, users: usize) -> Vec<sepred::channel::ChannelObject> {
    let cfg = match kind {
        "urban" => ScenarioConfig::urban(21),
        "rural" => ScenarioConfig::rural(21),
        _ => ScenarioConfig::iid(21),
    };
    generate_dataset(&cfg, n, &UserCount::Fixed(users)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_and_is_orthonormal(r in 1usize..=6, extra in 0usize..=60, seed in any::<u64>()) {
        let t = r + extra;
        let h = random(r, t, &mut ChaCha8Rng::seed_from_u64(seed));
        let d = svd(&h).unwrap();
        prop_assert!(rel(&d.reconstruct(), &h) < 1e-9);
        prop_assert!(rel(&(&d.u * d.u.adjoint()), &CMatrix::identity(r, r)) < 1e-9);
        prop_assert!(rel(&(&d.v * d.v.adjoint()), &CMatrix::identity(r, r)) < 1e-9);
        prop_assert!(d.s.windows(2).all(|w| w[0] >= w[1]) && d.s.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn sinr_is_invariant_to_detector_scaling(seed in any::<u64>(), scale_re in 0.1f64..10.0, scale_im in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (random(4, 16, &mut rng), random(16, 3, &mut rng));
        let g: Vec<Complex64> = random(1, 4, &mut rng).iter().copied().collect();
        let c = Complex64::new(scale_re, scale_im);
        let scaled: Vec<Complex64> = g.iter().map(|z| z * c).collect();
        let a = sinr_layer(&w, &h, &g, 1, 0.3).unwrap();
        let b = sinr_layer(&w, &h, &scaled, 1, 0.3).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
    }
}

#[test]
fn reduced_basis_selects_top_rows_in_user_order() {
    let obj = generate_channel(&ScenarioConfig::urban(5), 2, 0).unwrap();
    let basis = build_reduced_basis(&obj).unwrap();
    assert_eq!(basis.total_layers(), 4);
    for (k, h) in obj.users.iter().enumerate() {
        let d = svd(h).unwrap();
        for i in 0..2 {
            assert_eq!(basis.v_tilde.row(2 * k + i), d.v.row(i));
            assert_eq!(basis.s_tilde[2 * k + i], d.s[i]);
        }
    }
    let swapped = build_reduced_basis(&obj.permuted(&[1, 0])).unwrap();
    assert_eq!(swapped.v_tilde.rows(0, 2), basis.v_tilde.rows(2, 2));
    assert_eq!(swapped.v_tilde.rows(2, 2), basis.v_tilde.rows(0, 2));
}

#[test]
fn power_constraint_is_tight_for_every_precoder() {
    for kind in ["urban", "rural", "iid"] {
        for obj in objects(kind, 30, 4) {
            let t = obj.tx_antennas() as f64;
            let basis = build_reduced_basis(&obj).unwrap();
            for method in [PrecoderKind::Mrt, PrecoderKind::Zf] {
                let Ok(p) = precode(&basis, obj.tx_antennas(), method) else {
                    continue;
                };
                let rows: Vec<f64> = (0..p.w.nrows())
                    .map(|i| p.w.row(i).iter().map(|z| z.norm_sqr()).sum())
                    .collect();
                assert!(rows.iter().all(|&r| r <= 1.0 / t + 1e-12));
                let peak = rows.iter().copied().fold(0.0, f64::max);
                assert!((peak - 1.0 / t).abs() < 1e-9, "{kind} {method}: {peak}");
                for j in 0..p.w.ncols() {
                    assert!((p.w.column(j).norm() / p.mu - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn zf_diagonalizes_the_reduced_channel() {
    for kind in ["urban", "iid"] {
        for obj in objects(kind, 40, 4) {
            let basis = build_reduced_basis(&obj).unwrap();
            let Ok(p) = precode_zf(&basis, obj.tx_antennas()) else {
                continue;
            };
            let vw = &basis.v_tilde * &p.w;
            let total = fro_norm(&vw);
            let off: f64 = (0..vw.nrows())
                .flat_map(|i| (0..vw.ncols()).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| vw[(i, j)].norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(off < 1e-8 * total, "{kind}: {off} vs {total}");
        }
    }
}

#[test]
fn mmse_satisfies_its_defining_equation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let (h, w) = (random(4, 16, &mut rng), random(16, 2, &mut rng));
        let sigma2 = rng.random_range(1e-3..1.0);
        let g = detect_mmse(&h, &w, sigma2).unwrap();
        let e = &h * &w;
        // G (E Eᴴ + σ² I) = Eᴴ.
        let lhs = &g * (&e * e.adjoint() + CMatrix::identity(4, 4) * Complex64::new(sigma2, 0.0));
        assert!(rel(&lhs, &e.adjoint()) < 1e-10);
        // Push-through identity: (Eᴴ E + σ² I)⁻¹ Eᴴ.
        let small = e.adjoint() * &e + CMatrix::identity(2, 2) * Complex64::new(sigma2, 0.0);
        let alt = small.try_inverse().unwrap() * e.adjoint();
        assert!(rel(&g, &alt) < 1e-9);
    }
    let zero = detect_mmse(&CMatrix::zeros(4, 16), &random(16, 2, &mut rng), 1.0).unwrap();
    assert!(zero.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
}

#[test]
fn irc_interference_forms_agree_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let k_users = 2 + i % 4;
        let layers = vec![2; k_users];
        let h = random(4, 32, &mut rng);
        let w = random(32, 2 * k_users, &mut rng);
        let k = rng.random_range(0..k_users);
        let a = interference_covariance(&h, &w, &layers, k);
        let b = interference_covariance_difference(&h, &w, &layers, k);
        worst = worst.max(rel(&a, &b));
    }
    assert!(worst < 1e-10, "worst relative gap {worst}");
}

#[test]
fn irc_satisfies_its_defining_equation() {
    let obj = generate_channel(&ScenarioConfig::urban(8), 2, 1).unwrap();
    let basis = build_reduced_basis(&obj).unwrap();
    let p = precode_zf(&basis, obj.tx_antennas()).unwrap();
    let layers = obj.layers();
    for k in 0..2 {
        let h = &obj.users[k];
        let g = detect_mmse_irc(h, &p.w, &layers, k, obj.sigma2).unwrap();
        let e = h * p.user_columns(&layers, k);
        let ruu = interference_covariance(h, &p.w, &layers, k);
        let cov = &e * e.adjoint() + ruu + CMatrix::identity(4, 4) * Complex64::new(obj.sigma2, 0.0);
        assert!(rel(&(&g * cov), &e.adjoint()) < 1e-10);
    }
}

/// Straightforward per-layer SINR with explicit loops over plain vectors.
fn naive_sinr(w: &CMatrix, h: &CMatrix, g: &[Complex64], l: usize, sigma2: f64) -> f64 {
    let (r, t, n) = (h.nrows(), h.ncols(), w.ncols());
    let hv: Vec<Vec<Complex64>> = (0..r).map(|i| (0..t).map(|j| h[(i, j)]).collect()).collect();
    let wv: Vec<Vec<Complex64>> = (0..n).map(|c| (0..t).map(|j| w[(j, c)]).collect()).collect();
    let gain = |c: usize| {
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..r {
            for j in 0..t {
                s += g[i] * hv[i][j] * wv[c][j];
            }
        }
        s.norm_sqr()
    };
    let interference: f64 = (0..n).filter(|&c| c != l).map(gain).sum();
    let gn: f64 = g.iter().map(|z| z.norm_sqr()).sum();
    gain(l) / (interference + sigma2 * gn)
}

#[test]
fn sinr_matches_naive_evaluator() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let (h, w) = (random(4, 24, &mut rng), random(24, 6, &mut rng));
        let g: Vec<Complex64> = random(1, 4, &mut rng).iter().copied().collect();
        let l = rng.random_range(0..6);
        let sigma2 = rng.random_range(1e-3..1.0);
        let ours = sinr_layer(&w, &h, &g, l, sigma2).unwrap();
        let oracle = naive_sinr(&w, &h, &g, l, sigma2);
        assert!(
            (ours - oracle).abs() <= 1e-12 * oracle.abs().max(1e-300),
            "{ours} vs {oracle}"
        );
    }
}

#[test]
fn report_is_internally_consistent() {
    for obj in objects("urban", 20, 4) {
        let basis = build_reduced_basis(&obj).unwrap();
        let p = precode_zf(&basis, obj.tx_antennas()).unwrap();
        let g = detect(&obj, &p, DetectorKind::Mmse).unwrap();
        let r = spectral_efficiency(&obj, &basis, &p, &g).unwrap();
        assert!((r.recompute_average(&obj.layers()) - r.se_avg).abs() < 1e-12 * r.se_avg);
        // Layer SINRs from the report agree with the standalone evaluator.
        let layers = obj.layers();
        for k in 0..obj.num_users() {
            for (i, l) in (2 * k..2 * k + 2).enumerate() {
                let row: Vec<Complex64> = g.g[k].row(i).iter().copied().collect();
                let s = naive_sinr(&p.w, &obj.users[k], &row, l, obj.sigma2);
                assert!((s - r.sinr_layers[l]).abs() <= 1e-10 * s);
            }
        }
        assert_eq!(layers.len(), r.se_user.len());
    }
}

#[test]
fn se_is_permutation_equivariant() {
    let objs = objects("urban", 10, 4);
    let perm = [2, 0, 3, 1];
    for obj in &objs {
        let moved = obj.permuted(&perm);
        for p in [PrecoderKind::Mrt, PrecoderKind::Zf] {
            for d in [DetectorKind::Mmse, DetectorKind::MmseIrc] {
                let a = ground_truth(obj, p, d).unwrap();
                let b = ground_truth(&moved, p, d).unwrap();
                assert!((a.se_avg - b.se_avg).abs() <= 1e-10 * a.se_avg);
                assert!((a.susinr - b.susinr).abs() <= 1e-10 * a.susinr);
                for (new, &old) in perm.iter().enumerate() {
                    assert!((b.se_user[new] - a.se_user[old]).abs() <= 1e-10 * a.se_user[old].max(1e-12));
                }
            }
        }
    }
}

#[test]
fn se_does_not_increase_with_noise() {
    for obj in objects("rural", 5, 4) {
        let basis = build_reduced_basis(&obj).unwrap();
        let p = precode_zf(&basis, obj.tx_antennas()).unwrap();
        let mut last = f64::INFINITY;
        for e in -30..=10 {
            let mut o = obj.clone();
            o.sigma2 = 10f64.powf(e as f64 / 10.0);
            let g = detect(&o, &p, DetectorKind::Mmse).unwrap();
            let se = spectral_efficiency(&o, &basis, &p, &g).unwrap().se_avg;
            assert!(se <= last * (1.0 + 1e-12), "sigma2 {}: {se} > {last}", o.sigma2);
            last = se;
        }
    }
}

#[test]
fn susinr_halves_when_noise_doubles() {
    let obj = generate_channel(&ScenarioConfig::urban(2), 4, 0).unwrap();
    let basis = build_reduced_basis(&obj).unwrap();
    let a = susinr(&basis, 0.1).unwrap();
    let b = susinr(&basis, 0.2).unwrap();
    assert!((a / b - 2.0).abs() < 1e-12);
}
