use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttrs_core::sketch::{gaussian_sketch_plan, SketchInput};
use ttrs_core::validation::{
    check_sample_complexity, compute_constants, concentration_bound, core_distance, fit_exact_markov,
    perturbation_bound, solve_cde_full, solve_tensor_equation, DiagnosticsReport,
};
use ttrs_core::{markov_to_tt, rel_l2_error, triple_norm, tt_rs, DenseTensor, MarkovSpec, RankSpec, TensorTrain, TtError};

fn random_tt(extents: &[usize], r: usize, seed: u64) -> TensorTrain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = extents.len();
    let cores = (0..d)
        .map(|k| {
            let r0 = if k == 0 { 1 } else { r };
            let r1 = if k == d - 1 { 1 } else { r };
            DenseTensor::from_fn(&[r0, extents[k], r1], |_| rng.gen_range(0.1..1.0))
        })
        .collect();
    TensorTrain::new(cores).unwrap()
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q()
}

fn rotate(g: &DenseTensor, r1: &DMatrix<f64>, r2: &DMatrix<f64>) -> DenseTensor {
    let [a, n, b] = [g.shape()[0], g.shape()[1], g.shape()[2]];
    DenseTensor::from_fn(&[a, n, b], |i| {
        let mut acc = 0.0;
        for p in 0..a {
            for q in 0..b {
                acc += r1[(i[0], p)] * g.at(&[p, i[1], q]) * r2[(q, i[2])];
            }
        }
        acc
    })
}

#[test]
fn full_equations_reconstruct_low_rank_tensor() {
    for seed in 0..5 {
        let tt = random_tt(&[3; 4], 2, seed);
        let p = tt.contract_full().unwrap();
        let full = solve_cde_full(&p, &[2, 2, 2]).unwrap();
        assert_eq!(full.ranks(), vec![1, 2, 2, 2, 1]);
        assert!(full.contract_full().unwrap().max_abs_diff(&p).unwrap() <= 1e-10);
        let plan = gaussian_sketch_plan(&[3; 4], &[3; 3], &[3; 3], seed).unwrap();
        let rs = tt_rs(SketchInput::Dense(&p), &RankSpec::uniform(4, 2), &plan).unwrap();
        assert!(rel_l2_error(&full, &rs.tt).unwrap() <= 1e-9);
    }
}

#[test]
fn full_equations_check_declared_ranks() {
    let p = random_tt(&[3; 4], 2, 1).contract_full().unwrap();
    assert!(matches!(solve_cde_full(&p, &[3, 2, 2]), Err(TtError::Rank(_))));
    assert!(matches!(solve_cde_full(&p, &[2, 2]), Err(TtError::Rank(_))));
    let big = DenseTensor::zeros(&[10; 6]);
    assert!(matches!(solve_cde_full(&big, &[1; 5]), Err(TtError::Size { .. })));
}

#[test]
fn product_tensor_has_unit_ranks() {
    let v = [vec![0.2, 0.8], vec![0.5, 0.3, 0.2], vec![0.1, 0.9]];
    let p = DenseTensor::from_fn(&[2, 3, 2], |x| v[0][x[0]] * v[1][x[1]] * v[2][x[2]]);
    let full = solve_cde_full(&p, &[1, 1]).unwrap();
    assert!(full.contract_full().unwrap().max_abs_diff(&p).unwrap() < 1e-14);
    assert!(solve_cde_full(&p, &[2, 1]).is_err());
}

#[test]
fn core_distance_is_zero_on_itself() {
    let g = random_tt(&[4; 3], 3, 7).core(1).clone();
    let res = core_distance(&g, &g).unwrap();
    assert!(res.distance < 1e-14);
    assert!(res.converged);
}

#[test]
fn core_distance_undoes_rotations() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let g = DenseTensor::from_fn(&[3, 4, 2], |_| rng.gen_range(-1.0..1.0));
        let q1 = random_orthogonal(3, &mut rng);
        let q2 = random_orthogonal(2, &mut rng);
        let hat = rotate(&g, &q1.transpose(), &q2.transpose());
        let res = core_distance(&hat, &g).unwrap();
        assert!(res.distance <= 1e-8, "distance {}", res.distance);
        assert!(rotate(&hat, &res.r1, &res.r2).max_abs_diff(&g).unwrap() <= 1e-8);
    }
    let a = DenseTensor::zeros(&[2, 2, 2]);
    assert!(matches!(core_distance(&a, &DenseTensor::zeros(&[2, 3, 2])), Err(TtError::Shape(_))));
}

fn product_chain(marg: &[f64], d: usize) -> MarkovSpec {
    let n = marg.len();
    let init = DenseTensor::new(vec![n], marg.to_vec()).unwrap();
    let kernel = DenseTensor::from_fn(&[n, n], |x| marg[x[1]]);
    MarkovSpec::homogeneous(1, d, init, kernel).unwrap()
}

#[test]
fn product_constants_are_products_of_norms() {
    let marg = [0.1, 0.6, 0.3];
    let norm = marg.iter().map(|v| v * v).sum::<f64>().sqrt();
    let report = compute_constants(&product_chain(&marg, 5), &RankSpec::uniform(5, 1)).unwrap();
    assert_eq!(report.spectra.len(), 4);
    assert!((report.spectra[0][0] - norm.powi(2)).abs() < 1e-14);
    for s in &report.spectra[1..] {
        assert!((s[0] - norm.powi(3)).abs() < 1e-14);
        assert!(s[1..].iter().all(|&v| v < 1e-14));
    }
    assert!((report.c_p - norm.powi(3)).abs() < 1e-14);
    assert!(report.c_a >= 1.0);
    assert!(report.c_g > 0.0);
}

#[test]
fn homogeneous_constants_do_not_depend_on_length() {
    let reports: Vec<DiagnosticsReport> = [5, 10, 20]
        .iter()
        .map(|&d| {
            let spec = MarkovSpec::random_homogeneous(3, d, 4).unwrap();
            compute_constants(&spec, &RankSpec::uniform(d, 3)).unwrap()
        })
        .collect();
    for r in &reports[1..] {
        assert!((r.c_p - reports[0].c_p).abs() <= 1e-10 * reports[0].c_p);
        assert!((r.c_g - reports[0].c_g).abs() <= 1e-10 * reports[0].c_g);
        assert!((r.c_a - reports[0].c_a).abs() <= 1e-10 * reports[0].c_a);
    }
    assert!(reports.iter().all(|r| r.c_a >= 1.0));
}

#[test]
fn exact_markov_fit_is_accurate() {
    let spec = MarkovSpec::random(1, &[3, 4, 2, 3, 3], 8).unwrap();
    let fit = fit_exact_markov(&spec, &RankSpec::Explicit(vec![3, 2, 2, 3])).unwrap();
    assert!(rel_l2_error(&markov_to_tt(&spec).unwrap(), &fit.tt).unwrap() <= 1e-10);
}

#[test]
fn sample_complexity_scaling() {
    let report = compute_constants(&MarkovSpec::random_homogeneous(3, 6, 2).unwrap(), &RankSpec::uniform(6, 3)).unwrap();
    let a = check_sample_complexity(&report, 3, 3, 6, 0.1, 0.05).unwrap();
    let b = check_sample_complexity(&report, 3, 3, 6, 0.2, 0.05).unwrap();
    assert!((a.per_core / b.per_core - 4.0).abs() < 1e-12);
    assert!((a.contraction / b.contraction - 4.0).abs() < 1e-12);
    assert!((a.contraction / a.per_core - 9.0 * 36.0).abs() < 1e-9);
    let long = check_sample_complexity(&report, 3, 3, 60, 0.1, 0.05).unwrap();
    let log_ratio = (2.0 * 27.0 * 60.0 / 0.05f64).ln() / (2.0 * 27.0 * 6.0 / 0.05f64).ln();
    assert!((long.per_core / a.per_core - log_ratio).abs() < 1e-12);
    assert!(check_sample_complexity(&report, 3, 3, 6, 0.0, 0.05).is_err());
    assert!(check_sample_complexity(&report, 3, 3, 6, 0.1, 1.0).is_err());
    let mut bad = report.clone();
    bad.c_p = 0.0;
    assert!(matches!(check_sample_complexity(&bad, 3, 3, 6, 0.1, 0.05), Err(TtError::DegenerateInput(_))));
}

#[test]
fn concentration_bound_values() {
    let b = concentration_bound(4, 2, 8, 10_000, 0.05);
    let want = ((2.0 * 16.0 * 8.0 / 0.05f64).ln() / 20_000.0).sqrt();
    assert!((b - want).abs() < 1e-15);
    assert!((concentration_bound(4, 2, 8, 40_000, 0.05) - b / 2.0).abs() < 1e-15);
}

#[test]
fn perturbation_bound_refuses_large_perturbations() {
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.5, 0.0, 0.0]);
    let x = DenseTensor::zeros(&[2, 2, 2]);
    let db = DenseTensor::zeros(&[3, 2, 2]);
    assert!(perturbation_bound(&a, &(DMatrix::identity(3, 2) * 0.6), &x, &db).is_none());
    assert!(perturbation_bound(&a, &(DMatrix::identity(3, 2) * 0.1), &x, &db).is_some());
    let rank_deficient = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
    assert!(perturbation_bound(&rank_deficient, &DMatrix::zeros(3, 2), &x, &db).is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn perturbed_solution_respects_bound(seed in any::<u64>(), scale in 1e-6f64..1e-2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, r, l1, l2) = (6, 3, 2, 2);
        let a = DMatrix::from_fn(m, r, |_, _| rng.gen_range(-1.0..1.0));
        let x = DenseTensor::from_fn(&[r, l1, l2], |_| rng.gen_range(-1.0..1.0));
        let b = DenseTensor::from_matrix(&(&a * x.to_matrix(r, l1 * l2).unwrap()), vec![m, l1, l2]).unwrap();
        let da = DMatrix::from_fn(m, r, |_, _| scale * rng.gen_range(-1.0..1.0));
        let db = DenseTensor::from_fn(&[m, l1, l2], |_| scale * rng.gen_range(-1.0..1.0));
        let bound = perturbation_bound(&a, &da, &x, &db);
        prop_assume!(bound.is_some());
        let b_pert = DenseTensor::new(
            vec![m, l1, l2],
            b.data().iter().zip(db.data()).map(|(u, v)| u + v).collect(),
        ).unwrap();
        let sol = solve_tensor_equation(&(&a + &da), &b_pert).unwrap();
        let dx = DenseTensor::new(
            vec![r, l1, l2],
            sol.data().iter().zip(x.data()).map(|(u, v)| u - v).collect(),
        ).unwrap();
        prop_assert!(triple_norm(&dx) <= bound.unwrap() * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn core_distance_never_exceeds_unaligned_norm(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DenseTensor::from_fn(&[2, 3, 3], |_| rng.gen_range(-1.0..1.0));
        let h = DenseTensor::from_fn(&[2, 3, 3], |_| rng.gen_range(-1.0..1.0));
        let diff = DenseTensor::new(
            vec![2, 3, 3],
            g.data().iter().zip(h.data()).map(|(u, v)| u - v).collect(),
        ).unwrap();
        let res = core_distance(&g, &h).unwrap();
        prop_assert!(res.distance <= triple_norm(&diff) + 1e-15);
        prop_assert!(res.distance >= 0.0);
    }
}
