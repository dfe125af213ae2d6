use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttrs_core::empirical::{
    encode_samples, load_samples, marginal, marginal_capped, parse_samples, save_samples,
    ContinuousSamples, DiscreteSamples, SampleFormat, SampleSchema, SampleSet,
};
use ttrs_core::TtError;

fn discrete(set: SampleSet) -> DiscreteSamples {
    match set {
        SampleSet::Discrete(s) => s,
        SampleSet::Continuous(_) => panic!("expected discrete samples"),
    }
}

fn random_samples(extents: &[usize], n: usize, seed: u64) -> DiscreteSamples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<usize>> = (0..n)
        .map(|_| extents.iter().map(|&e| rng.gen_range(0..e)).collect())
        .collect();
    DiscreteSamples::from_rows(extents.to_vec(), &rows).unwrap()
}

#[test]
fn csv_two_rows() {
    let schema = SampleSchema::Discrete { extents: vec![2, 2] };
    let s = discrete(parse_samples(b"x1,x2\n1,2\n2,1\n", &schema).unwrap());
    assert_eq!((s.n_samples(), s.dims()), (2, 2));
    assert_eq!(s.row(0), &[0, 1]);
    assert_eq!(s.row(1), &[1, 0]);
}

#[test]
fn csv_code_out_of_range_reports_row() {
    let schema = SampleSchema::Discrete { extents: vec![2, 2] };
    match parse_samples(b"x1,x2\n1,3\n2,1\n", &schema) {
        Err(TtError::Range { row, col, value }) => {
            assert_eq!((row, col, value.as_str()), (1, 2, "3"));
        }
        other => panic!("expected range error, got {other:?}"),
    }
    assert!(matches!(
        parse_samples(b"x1,x2\n1,1\n0,1\n", &schema),
        Err(TtError::Range { row: 2, col: 1, .. })
    ));
}

#[test]
fn csv_parse_errors_carry_line_numbers() {
    let schema = SampleSchema::Discrete { extents: vec![2, 2] };
    match parse_samples(b"x1,x2\n1,2\n1,a\n", &schema) {
        Err(TtError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected parse error, got {other:?}"),
    }
    assert!(matches!(
        parse_samples(b"a,b\n1,2\n", &schema),
        Err(TtError::Parse { line: 1, .. })
    ));
}

#[test]
fn binary_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let s = random_samples(&[3, 2, 5, 4], 257, 11);
    let path = dir.path().join("s.bin");
    let set = SampleSet::Discrete(s.clone());
    save_samples(&path, &set, SampleFormat::Binary).unwrap();
    let schema = SampleSchema::Discrete { extents: vec![3, 2, 5, 4] };
    let back = load_samples(&path, &schema).unwrap();
    assert_eq!(back, set);
    assert_eq!(std::fs::read(&path).unwrap(), encode_samples(&back, SampleFormat::Binary));
    assert!(std::fs::read(&path).unwrap().starts_with(b"TTSAMP1"));

    let csv = dir.path().join("s.csv");
    save_samples(&csv, &set, SampleFormat::Csv).unwrap();
    assert_eq!(load_samples(&csv, &schema).unwrap(), set);

    let wrong = SampleSchema::Discrete { extents: vec![3, 2, 5, 5] };
    assert!(load_samples(&path, &wrong).is_err());
}

#[test]
fn continuous_round_trip_and_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let values: Vec<f64> = (0..300).map(|_| rng.gen_range(-4.0..4.0)).collect();
    let s = SampleSet::Continuous(ContinuousSamples::new(3, (-4.0, 4.0), values).unwrap());
    let schema = SampleSchema::Continuous { dims: 3, interval: (-4.0, 4.0) };
    for fmt in [SampleFormat::Binary, SampleFormat::Csv] {
        assert_eq!(parse_samples(&encode_samples(&s, fmt), &schema).unwrap(), s);
    }
    assert!(matches!(
        parse_samples(b"x1,x2,x3\n0,0,0\n0,4.5,0\n", &schema),
        Err(TtError::Range { row: 2, col: 2, .. })
    ));
    assert!(ContinuousSamples::new(1, (0.0, 1.0), vec![1.5]).is_err());
}

#[test]
fn hand_counted_marginal() {
    let s = DiscreteSamples::from_rows(vec![2, 2], &[vec![0, 0], vec![0, 1], vec![1, 0], vec![0, 0]]).unwrap();
    let m = marginal(&s, 0..2).unwrap();
    assert_eq!(m.counts(), &[2, 1, 1, 0]);
    assert_eq!(m.frequencies().data(), &[0.5, 0.25, 0.25, 0.0]);
    let single = marginal(&s, 0..1).unwrap().frequencies();
    assert_eq!(single.data(), &[0.75, 0.25]);
}

#[test]
fn marginal_window_and_cap_errors() {
    let s = random_samples(&[4, 4, 4], 10, 1);
    assert!(matches!(marginal(&s, 1..1), Err(TtError::Argument(_))));
    assert!(matches!(marginal(&s, 2..4), Err(TtError::Argument(_))));
    assert!(matches!(marginal_capped(&s, 0..3, 63), Err(TtError::Size { .. })));
    assert!(marginal_capped(&s, 0..3, 64).is_ok());
}

#[test]
fn sample_construction_validates_codes() {
    assert!(matches!(
        DiscreteSamples::from_rows(vec![2, 3], &[vec![0, 3]]),
        Err(TtError::Range { .. })
    ));
    assert!(DiscreteSamples::new(vec![2, 2], vec![0, 1, 1]).is_err());
    let a = random_samples(&[2, 3], 5, 1);
    let b = random_samples(&[2, 4], 5, 1);
    assert!(a.concat(&b).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn frequencies_are_a_distribution(seed in any::<u64>(), n in 1usize..200, lo in 0usize..3, len in 1usize..3) {
        let s = random_samples(&[3, 2, 4, 2], n, seed);
        let hi = (lo + len).min(4);
        let f = marginal(&s, lo..hi).unwrap().frequencies();
        prop_assert!(f.data().iter().all(|&v| v >= 0.0));
        prop_assert!((f.sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn marginals_are_consistent_under_summation(seed in any::<u64>(), n in 1usize..300) {
        let ext = [3, 2, 4, 2];
        let s = random_samples(&ext, n, seed);
        let wide = marginal(&s, 1..4).unwrap();
        let narrow = marginal(&s, 2..3).unwrap();
        // sum the wide counts over variables 1 and 3
        let mut summed = vec![0u64; 4];
        for (flat, &c) in wide.counts().iter().enumerate() {
            summed[(flat / 2) % 4] += c;
        }
        prop_assert_eq!(&summed[..], narrow.counts());
    }

    #[test]
    fn marginals_are_linear_under_concatenation(seed in any::<u64>(), n1 in 1usize..100, n2 in 1usize..100) {
        let ext = [2, 3, 2];
        let a = random_samples(&ext, n1, seed);
        let b = random_samples(&ext, n2, seed ^ 0xdead);
        let ab = a.concat(&b).unwrap();
        let (ma, mb, mab) = (marginal(&a, 0..3).unwrap(), marginal(&b, 0..3).unwrap(), marginal(&ab, 0..3).unwrap());
        for i in 0..mab.counts().len() {
            prop_assert_eq!(mab.counts()[i], ma.counts()[i] + mb.counts()[i]);
        }
        let (fa, fb, fab) = (ma.frequencies(), mb.frequencies(), mab.frequencies());
        let w = (n1 as f64, n2 as f64, (n1 + n2) as f64);
        for i in 0..fab.len() {
            let avg = (w.0 * fa.data()[i] + w.1 * fb.data()[i]) / w.2;
            prop_assert!((fab.data()[i] - avg).abs() <= 1e-14);
        }
    }

    #[test]
    fn csv_round_trip(seed in any::<u64>(), n in 1usize..50) {
        let s = SampleSet::Discrete(random_samples(&[5, 2, 3], n, seed));
        let schema = SampleSchema::Discrete { extents: vec![5, 2, 3] };
        prop_assert_eq!(parse_samples(&encode_samples(&s, SampleFormat::Csv), &schema).unwrap(), s);
    }
}
