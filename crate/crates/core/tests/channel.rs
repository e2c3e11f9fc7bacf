use sepred::channel::*;
use sepred::linalg::svd;
use sepred::Error;

#[test]
fn iid_entries_have_unit_complex_gaussian_moments() {
    let cfg = ScenarioConfig::iid(11);
    let objs = generate_dataset(&cfg, 10_000, &UserCount::Fixed(1)).unwrap();
    let (r, t) = (cfg.rx_antennas, cfg.tx_antennas);
    let n = objs.len() as f64;
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for i in 0..r {
        for j in 0..t {
            let vals: Vec<_> = objs.iter().map(|o| o.users[0][(i, j)]).collect();
            let mean = vals.iter().sum::<num_complex::Complex64>() / n;
            let var = vals.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
            worst_mean = worst_mean.max(mean.norm());
            worst_var = worst_var.max((var - 1.0).abs());
        }
    }
    assert!(worst_mean < 0.05, "largest |mean| {worst_mean}");
    assert!(worst_var < 0.1, "largest variance deviation {worst_var}");
}

#[test]
fn iid_entries_are_uncorrelated() {
    // Cross-covariance between a handful of entry pairs, including
    // neighbours in both directions.
    let cfg = ScenarioConfig::iid(12);
    let objs = generate_dataset(&cfg, 10_000, &UserCount::Fixed(1)).unwrap();
    let n = objs.len() as f64;
    for (a, b) in [
        ((0, 0), (0, 1)),
        ((0, 0), (1, 0)),
        ((2, 5), (3, 40)),
        ((1, 63), (1, 62)),
    ] {
        let c: num_complex::Complex64 = objs
            .iter()
            .map(|o| o.users[0][a] * o.users[0][b].conj())
            .sum::<num_complex::Complex64>()
            / n;
        assert!(c.norm() < 0.1, "{a:?} vs {b:?}: {c}");
    }
}

#[test]
fn same_triple_is_bit_identical() {
    for cfg in [
        ScenarioConfig::urban(3),
        ScenarioConfig::rural(3),
        ScenarioConfig::iid(3),
    ] {
        let a = generate_channel(&cfg, 4, 7).unwrap();
        let b = generate_channel(&cfg, 4, 7).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn fixed_and_mixed_user_counts() {
    let objs = generate_dataset(&ScenarioConfig::iid(1), 100, &UserCount::Fixed(4)).unwrap();
    assert_eq!(objs.len(), 100);
    assert!(objs.iter().all(|o| o.num_users() == 4));

    let set = UserCount::Set(vec![2, 4, 8]);
    let counts = (0..3000u64).fold([0usize; 3], |mut acc, i| {
        let k = set.draw(5, i);
        acc[[2, 4, 8].iter().position(|&v| v == k).unwrap()] += 1;
        acc
    });
    // Binomial(3000, 1/3): mean 1000, sd ~25.8; [800, 1200] is beyond 7 sd.
    assert!(counts.iter().all(|&c| (800..=1200).contains(&c)), "{counts:?}");
}

#[test]
fn empty_dataset_is_rejected() {
    assert!(generate_dataset(&ScenarioConfig::iid(1), 0, &UserCount::Fixed(2)).is_err());
}

#[test]
fn single_path_draw_is_rank_one_and_retry_gives_up() {
    let mut cfg = ScenarioConfig::urban(9);
    cfg.num_paths = 1;
    cfg.los_probability = 0.0;
    let raw = draw_candidate(&cfg, 1, 0, 0).unwrap();
    let s = svd(&raw.users[0]).unwrap().s;
    assert!(s[1] < 1e-10 * s[0], "{s:?}");
    assert!(!has_layer_rank(&raw).unwrap());
    assert!(matches!(
        generate_channel(&cfg, 1, 0),
        Err(Error::Generation { attempts, .. }) if attempts == RANK_RETRIES + 1
    ));
}

#[test]
fn emitted_objects_satisfy_invariants() {
    let cfg = ScenarioConfig::urban(4);
    for obj in generate_dataset(&cfg, 50, &UserCount::Set(vec![2, 4, 8])).unwrap() {
        obj.check_shape().unwrap();
        assert!(has_layer_rank(&obj).unwrap());
        let (lo, hi) = cfg.noise_variance_range;
        assert!(obj.sigma2 >= lo && obj.sigma2 <= hi);
        assert!(obj.total_layers() <= obj.num_users() * obj.rx_antennas());
    }
}

#[test]
fn dataset_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.seds");
    let objs = generate_dataset(&ScenarioConfig::rural(2), 10, &UserCount::Set(vec![2, 3])).unwrap();
    save_dataset(&objs, &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), objs);

    let bytes = std::fs::read(&path).unwrap();
    let truncated = &bytes[..bytes.len() - 100];
    assert!(matches!(decode_dataset(truncated), Err(Error::Checksum { .. })));

    let mut flipped = bytes.clone();
    flipped[40] ^= 0x01;
    assert!(matches!(decode_dataset(&flipped), Err(Error::Checksum { .. })));

    let mut versioned = bytes.clone();
    versioned[4] = 0x7f;
    assert!(matches!(
        decode_dataset(&versioned),
        Err(Error::Version { found: 0x7f, .. })
    ));

    let mut magic = bytes;
    magic[0] = b'X';
    assert!(matches!(decode_dataset(&magic), Err(Error::Magic { .. })));
}
