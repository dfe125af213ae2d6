use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttrs_core::continuous::Quadrature;
use ttrs_core::{
    estimate_coeff_marginals, fit_coeff_tensors, markov_to_coeff_tt, rel_l2_error, BasisSet, ChainDensity,
    CoeffTensors, ContinuousSamples, ContinuousTT, DenseTensor, GinzburgLandauSpec, L2Reference, RankSpec,
    TensorTrain, TtError,
};

fn uniform_samples(d: usize, n: usize, a: f64, b: f64, seed: u64) -> ContinuousSamples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..d * n).map(|_| rng.gen_range(a..=b)).collect();
    ContinuousSamples::new(d, (a, b), values).unwrap()
}

#[test]
fn fourier_basis_is_orthonormal() {
    for (size, a, b) in [(7, -4.0, 4.0), (10, 0.0, 1.0), (1, -1.0, 2.0)] {
        let basis = BasisSet::fourier(size, a, b).unwrap();
        let quad = Quadrature::gauss_legendre(80, a, b);
        let g = basis.gram(&quad);
        for i in 0..size {
            for j in 0..size {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - want).abs() < 1e-10, "gram[{i}][{j}] = {}", g[(i, j)]);
            }
        }
        for j in 1..size {
            let integral: f64 = quad
                .nodes
                .iter()
                .zip(&quad.weights)
                .map(|(&z, &w)| w * basis.eval(z)[j])
                .sum();
            assert!(integral.abs() < 1e-12);
        }
    }
    assert!(BasisSet::fourier(0, 0.0, 1.0).is_err());
    assert!(BasisSet::fourier(3, 1.0, 1.0).is_err());
}

#[test]
fn single_sample_moments_are_outer_products() {
    let basis = BasisSet::fourier(3, -4.0, 4.0).unwrap();
    let y = [0.3, -1.7, 2.2];
    let s = ContinuousSamples::new(3, (-4.0, 4.0), y.to_vec()).unwrap();
    let nu = estimate_coeff_marginals(&s, &basis).unwrap().nu;
    let p: Vec<Vec<f64>> = y.iter().map(|&v| basis.eval(v)).collect();
    let c = basis.constant();
    assert_eq!(nu[0].shape(), &[1, 3, 3]);
    assert_eq!(nu[1].shape(), &[3, 3, 3]);
    assert_eq!(nu[2].shape(), &[3, 3, 1]);
    for j in 0..3 {
        for g in 0..3 {
            assert!((nu[0].at(&[0, j, g]) - p[0][j] * p[1][g]).abs() < 1e-15);
            assert!((nu[2].at(&[j, g, 0]) - c * p[1][j] * p[2][g]).abs() < 1e-15);
            for b in 0..3 {
                assert!((nu[1].at(&[b, j, g]) - p[0][b] * p[1][j] * p[2][g]).abs() < 1e-15);
            }
        }
    }
}

/// Moments by explicit triple loops over samples.
fn direct_moments(s: &ContinuousSamples, basis: &BasisSet) -> Vec<DenseTensor> {
    let d = s.dims();
    let m = basis.size;
    let n = s.n_samples() as f64;
    let c = basis.constant();
    let phi = |i: usize, k: usize| basis.eval(s.row(i)[k]);
    let mut out = Vec::new();
    out.push(DenseTensor::from_fn(&[1, m, m], |x| {
        (0..s.n_samples()).map(|i| phi(i, 0)[x[1]] * phi(i, 1)[x[2]]).sum::<f64>() / n
    }));
    for k in 1..d - 1 {
        out.push(DenseTensor::from_fn(&[m, m, m], |x| {
            let sum: f64 = (0..s.n_samples())
                .map(|i| phi(i, k - 1)[x[0]] * phi(i, k)[x[1]] * phi(i, k + 1)[x[2]])
                .sum();
            c.powi(k as i32 - 1) * sum / n
        }));
    }
    out.push(DenseTensor::from_fn(&[m, m, 1], |x| {
        let sum: f64 = (0..s.n_samples()).map(|i| phi(i, d - 2)[x[0]] * phi(i, d - 1)[x[1]]).sum();
        c.powi(d as i32 - 2) * sum / n
    }));
    out
}

#[test]
fn moments_match_direct_sum() {
    let basis = BasisSet::fourier(5, -4.0, 4.0).unwrap();
    for d in [2, 3, 5] {
        let s = uniform_samples(d, 100, -4.0, 4.0, d as u64);
        let got = estimate_coeff_marginals(&s, &basis).unwrap();
        assert_eq!(got.n_samples, 100);
        for (a, b) in got.nu.iter().zip(direct_moments(&s, &basis)) {
            assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
        }
    }
}

#[test]
fn moments_reject_out_of_range_values() {
    let basis = BasisSet::fourier(3, -1.0, 1.0).unwrap();
    let s = ContinuousSamples::new(2, (-4.0, 4.0), vec![0.0, 0.5, 0.2, 1.5]).unwrap();
    match estimate_coeff_marginals(&s, &basis) {
        Err(TtError::Range { row, col, .. }) => assert_eq!((row, col), (2, 2)),
        other => panic!("expected range error, got {other:?}"),
    }
    let one = ContinuousSamples::new(1, (-1.0, 1.0), vec![0.0]).unwrap();
    assert!(estimate_coeff_marginals(&one, &basis).is_err());
}

/// Exact moments of a separable density with coefficient vectors `u[k]`.
fn separable_moments(u: &[Vec<f64>], basis: &BasisSet) -> CoeffTensors {
    let d = u.len();
    let m = basis.size;
    let c = basis.constant();
    let mut nu = vec![DenseTensor::from_fn(&[1, m, m], |x| u[0][x[1]] * u[1][x[2]])];
    for k in 1..d - 1 {
        nu.push(DenseTensor::from_fn(&[m, m, m], |x| {
            c.powi(k as i32 - 1) * u[k - 1][x[0]] * u[k][x[1]] * u[k + 1][x[2]]
        }));
    }
    nu.push(DenseTensor::from_fn(&[m, m, 1], |x| {
        c.powi(d as i32 - 2) * u[d - 2][x[0]] * u[d - 1][x[1]]
    }));
    CoeffTensors {
        basis: basis.clone(),
        nu,
        n_samples: 0,
    }
}

fn normalized_coeffs(rng: &mut ChaCha8Rng, basis: &BasisSet) -> Vec<f64> {
    let mut v: Vec<f64> = (0..basis.size).map(|_| rng.gen_range(-0.1..0.1)).collect();
    v[0] = basis.constant();
    v
}

#[test]
fn separable_density_is_recovered_exactly() {
    let basis = BasisSet::fourier(5, -4.0, 4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for d in [2, 3, 6] {
        let u: Vec<Vec<f64>> = (0..d).map(|_| normalized_coeffs(&mut rng, &basis)).collect();
        let fit = fit_coeff_tensors(&separable_moments(&u, &basis), &RankSpec::uniform(d, 1)).unwrap();
        let truth = TensorTrain::rank_one(&u).unwrap();
        assert!(rel_l2_error(&truth, fit.tt.coeffs()).unwrap() <= 1e-9);
        let y: Vec<f64> = (0..d).map(|k| -3.0 + 1.1 * k as f64).collect();
        let want: f64 = (0..d)
            .map(|k| basis.eval(y[k]).iter().zip(&u[k]).map(|(a, b)| a * b).sum::<f64>())
            .product();
        assert!((fit.tt.eval(&y).unwrap() - want).abs() <= 1e-12 * want.abs().max(1e-3));
    }
}

#[test]
fn fit_rejects_ranks_above_basis_size() {
    let basis = BasisSet::fourier(3, -4.0, 4.0).unwrap();
    let s = uniform_samples(3, 50, -4.0, 4.0, 2);
    let coeffs = estimate_coeff_marginals(&s, &basis).unwrap();
    assert!(matches!(
        fit_coeff_tensors(&coeffs, &RankSpec::Explicit(vec![4, 2])),
        Err(TtError::Rank(_))
    ));
}

fn grid_density(spec: &GinzburgLandauSpec, quad: &Quadrature) -> (DenseTensor, f64) {
    let q = quad.len();
    let d = spec.d;
    let mut p = DenseTensor::from_fn(&vec![q; d], |x| {
        let y: Vec<f64> = x.iter().map(|&i| quad.nodes[i]).collect();
        (-spec.energy(&y)).exp()
    });
    let weight = |x: &[usize]| x.iter().map(|&i| quad.weights[i]).product::<f64>();
    let mut z = 0.0;
    let mut it = ttrs_core::tensor::MultiIndex::new(&vec![q; d]);
    while let Some(x) = it.next_index() {
        z += weight(x) * p.at(x);
    }
    p.scale(1.0 / z);
    (p, z)
}

#[test]
fn coefficient_train_matches_grid_quadrature() {
    let spec = GinzburgLandauSpec::new(3);
    let basis = BasisSet::fourier(5, -4.0, 4.0).unwrap();
    let q = 50;
    let quad = Quadrature::gauss_legendre(q, -4.0, 4.0);
    let (p, _) = grid_density(&spec, &quad);
    let phi: Vec<Vec<f64>> = quad.nodes.iter().map(|&z| basis.eval(z)).collect();
    let oracle = DenseTensor::from_fn(&[5, 5, 5], |j| {
        let mut acc = 0.0;
        for a in 0..q {
            for b in 0..q {
                for c in 0..q {
                    let w = quad.weights[a] * quad.weights[b] * quad.weights[c];
                    acc += w * p.at(&[a, b, c]) * phi[a][j[0]] * phi[b][j[1]] * phi[c][j[2]];
                }
            }
        }
        acc
    });
    let tt = markov_to_coeff_tt(&spec, &basis, q).unwrap();
    let dense = tt.contract_full().unwrap();
    assert!(dense.max_abs_diff(&oracle).unwrap() <= 1e-8);
    assert!((dense.at(&[0, 0, 0]) - basis.constant().powi(3)).abs() < 1e-12);
    assert!(markov_to_coeff_tt(&spec, &basis, 20).is_err());
    let other = BasisSet::fourier(5, -3.0, 3.0).unwrap();
    assert!(markov_to_coeff_tt(&spec, &other, q).is_err());
}

#[test]
fn error_decomposition_matches_plane_quadrature() {
    let mut spec = GinzburgLandauSpec::new(2);
    spec.beta = 0.6;
    let basis = BasisSet::fourier(5, -4.0, 4.0).unwrap();
    let q = 80;
    let s = uniform_samples(2, 400, -2.0, 2.0, 5);
    let s = ContinuousSamples::new(2, (-4.0, 4.0), s.values().to_vec()).unwrap();
    let fit = fit_coeff_tensors(&estimate_coeff_marginals(&s, &basis).unwrap(), &RankSpec::uniform(2, 3))
        .unwrap()
        .tt;
    let quad = Quadrature::gauss_legendre(q, -4.0, 4.0);
    let (p, _) = grid_density(&spec, &quad);
    let (mut diff, mut pp) = (0.0, 0.0);
    for a in 0..q {
        for b in 0..q {
            let w = quad.weights[a] * quad.weights[b];
            let pv = p.at(&[a, b]);
            let qv = fit.eval(&[quad.nodes[a], quad.nodes[b]]).unwrap();
            diff += w * (pv - qv).powi(2);
            pp += w * pv * pv;
        }
    }
    let errs = L2Reference::new(&spec, &basis, q).unwrap().errors(&fit).unwrap();
    assert!((errs.err_t.powi(2) - diff / pp).abs() <= 1e-10);
    assert!((errs.err_t.powi(2) - errs.err_a.powi(2) - errs.err_e.powi(2)).abs() <= 1e-14);
}

#[test]
fn exact_coefficients_have_zero_estimation_error() {
    let spec = GinzburgLandauSpec::new(4);
    let basis = BasisSet::fourier(7, -4.0, 4.0).unwrap();
    let reference = L2Reference::new(&spec, &basis, 50).unwrap();
    let exact = ContinuousTT::new(reference.nu.clone(), basis.clone()).unwrap();
    let errs = reference.errors(&exact).unwrap();
    assert!(errs.err_e < 1e-14);
    assert!((errs.err_t - errs.err_a).abs() < 1e-14);
    assert!(errs.err_a > 0.0 && errs.err_a < 1.0);
    let other_basis = BasisSet::fourier(5, -4.0, 4.0).unwrap();
    let small = ContinuousTT::new(TensorTrain::zeros(&[5; 4]).unwrap(), other_basis).unwrap();
    assert!(reference.errors(&small).is_err());
}

#[test]
fn truncation_error_shrinks_with_basis_size() {
    let spec = GinzburgLandauSpec::new(3);
    let errs: Vec<f64> = [3, 7, 11, 15]
        .iter()
        .map(|&m| {
            let basis = BasisSet::fourier(m, -4.0, 4.0).unwrap();
            L2Reference::new(&spec, &basis, 50).unwrap().err_a().unwrap()
        })
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn continuous_tt_round_trips_and_checks_range() {
    let basis = BasisSet::fourier(5, -4.0, 4.0).unwrap();
    let s = uniform_samples(3, 200, -4.0, 4.0, 9);
    let fit = fit_coeff_tensors(&estimate_coeff_marginals(&s, &basis).unwrap(), &RankSpec::uniform(3, 2))
        .unwrap()
        .tt;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.bin");
    fit.save(&path).unwrap();
    let back = ContinuousTT::load(&path).unwrap();
    assert_eq!(back, fit);
    assert_eq!(back.eval(&[0.1, -2.0, 3.9]).unwrap(), fit.eval(&[0.1, -2.0, 3.9]).unwrap());
    match fit.eval(&[0.0, 4.5, 0.0]) {
        Err(TtError::Range { col, .. }) => assert_eq!(col, 2),
        other => panic!("expected range error, got {other:?}"),
    }
    assert!(fit.eval(&[0.0, 0.0]).is_err());
    assert!(ContinuousTT::from_bytes(b"garbage").is_err());
}

/// Product of identical one-variable factors `exp(-y^2)`.
struct Gaussian(usize);

impl ChainDensity for Gaussian {
    fn dims(&self) -> usize {
        self.0
    }
    fn interval(&self) -> (f64, f64) {
        (-4.0, 4.0)
    }
    fn log_first(&self, x: f64) -> f64 {
        -x * x
    }
    fn log_pair(&self, _k: usize, _x: f64, y: f64) -> f64 {
        -y * y
    }
}

#[test]
fn product_reference_has_product_norms() {
    let basis = BasisSet::fourier(9, -4.0, 4.0).unwrap();
    let one = L2Reference::new(&Gaussian(1), &basis, 60).unwrap();
    let three = L2Reference::new(&Gaussian(3), &basis, 60).unwrap();
    assert!((three.p_norm_sq - one.p_norm_sq.powi(3)).abs() <= 1e-12 * three.p_norm_sq);
    assert!((three.pa_norm_sq - one.pa_norm_sq.powi(3)).abs() <= 1e-10 * three.pa_norm_sq);
    // exp(-y^2) restricted to [-4, 4]: ||p||^2 = sqrt(pi/2) erf(4 sqrt 2) / (pi erf(4)^2)
    let erfc4: f64 = 1.541_725_790_028_002e-8;
    let pi = std::f64::consts::PI;
    let want = (pi / 2.0).sqrt() / (pi * (1.0 - erfc4).powi(2));
    assert!((one.p_norm_sq - want).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn moments_are_linear_under_concatenation(seed in any::<u64>(), n1 in 1usize..40, n2 in 1usize..40) {
        let basis = BasisSet::fourier(4, -4.0, 4.0).unwrap();
        let a = uniform_samples(3, n1, -4.0, 4.0, seed);
        let b = uniform_samples(3, n2, -4.0, 4.0, seed.wrapping_add(1));
        let ab = estimate_coeff_marginals(&a.concat(&b).unwrap(), &basis).unwrap();
        let ma = estimate_coeff_marginals(&a, &basis).unwrap();
        let mb = estimate_coeff_marginals(&b, &basis).unwrap();
        let (wa, wb) = (n1 as f64 / (n1 + n2) as f64, n2 as f64 / (n1 + n2) as f64);
        for k in 0..3 {
            for i in 0..ab.nu[k].len() {
                let want = wa * ma.nu[k].data()[i] + wb * mb.nu[k].data()[i];
                prop_assert!((ab.nu[k].data()[i] - want).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn basis_stays_bounded(size in 1usize..20, x in -4.0f64..4.0) {
        let basis = BasisSet::fourier(size, -4.0, 4.0).unwrap();
        let amp = (2.0f64 / 8.0).sqrt();
        prop_assert!(basis.eval(x).iter().all(|v| v.abs() <= amp + 1e-12));
    }
}
