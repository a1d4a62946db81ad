use islet_core::decomposition::sin_theta_from_cosines;
use islet_core::islet::{assemble, build_sketched_system, covariance_tensor, probe_directions, solve_reduced};
use islet_core::rank_select::{fit_with_rank_selection, RankSelectConfig};
use islet_core::rng::StreamRng;
use islet_core::sparse::{group_lasso, GroupLassoProblem, GroupPartition};
use islet_core::tensor::{multilinear, qr_orth};
use islet_core::{
    fit_islet, hooi, sin_theta, sparse_hooi, DenseTensor, HooiConfig, InMemorySource, Matrix, OrthonormalBasis,
    RegressionSample, SampleSource, SeededSource, SketchBasis, Vector,
};
use proptest::prelude::*;

fn gaussian(rng: &mut StreamRng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

fn orthogonal(rng: &mut StreamRng, r: usize) -> Matrix {
    qr_orth(&gaussian(rng, r, r)).unwrap().into_matrix()
}

fn tucker(dims: &[usize], ranks: &[usize], seed: u64) -> DenseTensor {
    let mut rng = StreamRng::new(seed, 7);
    let mut core = DenseTensor::zeros(ranks);
    rng.fill_normal(core.data_mut());
    let factors: Vec<Matrix> = dims.iter().zip(ranks).map(|(&p, &r)| gaussian(&mut rng, p, r)).collect();
    let refs: Vec<&Matrix> = factors.iter().collect();
    multilinear(&core, &refs).unwrap()
}

fn relative(a: &DenseTensor, b: &DenseTensor) -> f64 {
    a.sub(b).norm() / b.norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn hooi_objective_never_decreases(seed in any::<u64>(), noise in 0.1f64..2.0) {
        let mut t = tucker(&[7, 6, 5], &[2, 2, 2], seed);
        let mut rng = StreamRng::new(seed, 8);
        for v in t.data_mut() {
            *v += noise * rng.normal();
        }
        let fit = hooi(&t, &HooiConfig::new(vec![2, 2, 2])).unwrap();
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] >= w[0] * (1.0 - 1e-12), "{:?}", fit.objective_trace);
        }
    }

    #[test]
    fn hooi_exact_rank_is_rotation_invariant(seed in any::<u64>()) {
        let t = tucker(&[6, 5, 4], &[2, 3, 2], seed);
        let mut rng = StreamRng::new(seed, 9);
        let q: Vec<Matrix> = [6, 5, 4].iter().map(|&p| orthogonal(&mut rng, p)).collect();
        let refs: Vec<&Matrix> = q.iter().collect();
        let rotated = multilinear(&t, &refs).unwrap();
        let cfg = HooiConfig::new(vec![2, 3, 2]);
        prop_assert!(relative(&hooi(&t, &cfg).unwrap().reconstruct(), &t) < 1e-8);
        prop_assert!(relative(&hooi(&rotated, &cfg).unwrap().reconstruct(), &rotated) < 1e-8);
    }

    #[test]
    fn sin_theta_symmetric_and_rotation_invariant(seed in any::<u64>(), p in 3usize..9, r in 1usize..3) {
        let mut rng = StreamRng::new(seed, 10);
        let u = qr_orth(&gaussian(&mut rng, p, r)).unwrap();
        let v = qr_orth(&gaussian(&mut rng, p, r)).unwrap();
        let d = sin_theta(&u, &v).unwrap();
        prop_assert!((d - sin_theta(&v, &u).unwrap()).abs() < 1e-12);
        prop_assert!((d - sin_theta_from_cosines(&u, &v).unwrap()).abs() < 1e-7);
        let uq = u.rotate(&orthogonal(&mut rng, r)).unwrap();
        let vq = v.rotate(&orthogonal(&mut rng, r)).unwrap();
        prop_assert!((d - sin_theta(&uq, &vq).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn sparse_hooi_respects_row_budget(seed in any::<u64>(), s in 2usize..6) {
        let mut t = tucker(&[10, 9, 8], &[2, 2, 2], seed);
        let mut rng = StreamRng::new(seed, 11);
        for v in t.data_mut() {
            *v += 0.5 * rng.normal();
        }
        let cfg = HooiConfig::new(vec![2, 2, 2]).with_sparsity(vec![Some(s), None, Some(s)]);
        let fit = sparse_hooi(&t, &cfg).unwrap();
        for k in [0, 2] {
            let u = fit.factors[k].matrix();
            let rows = (0..u.nrows()).filter(|&i| u.row(i).iter().any(|&x| x != 0.0)).count();
            prop_assert!(rows <= s);
        }
    }

    #[test]
    fn reduced_width_counts_degrees_of_freedom(p1 in 3usize..9, p2 in 3usize..9, p3 in 3usize..9, seed in any::<u64>()) {
        let dims = [p1, p2, p3];
        let ranks = [[1, 1, 1], [2, 2, 1], [1, 2, 2], [2, 2, 2], [3, 2, 2]][(seed % 5) as usize];
        let t = tucker(&dims, &ranks, seed);
        let basis = probe_directions(&t, &HooiConfig::new(ranks.to_vec())).unwrap();
        let expected = ranks.iter().product::<usize>()
            + dims.iter().zip(&ranks).map(|(p, r)| r * (p - r)).sum::<usize>();
        prop_assert_eq!(basis.layout().width(), expected);
    }

    #[test]
    fn estimate_depends_on_subspaces_only(seed in any::<u64>()) {
        let a = tucker(&[6, 6, 6], &[2, 2, 2], seed);
        let src = SeededSource::new(a, 1.0, 400, seed).unwrap();
        let cov = covariance_tensor(&src).unwrap();
        let basis = probe_directions(&cov, &HooiConfig::new(vec![2, 2, 2])).unwrap();
        let est = assemble(&solve_reduced(&build_sketched_system(&src, &basis).unwrap()).unwrap().gamma, &basis).unwrap();
        let mut rng = StreamRng::new(seed, 12);
        let rotated: Vec<OrthonormalBasis> = basis.u_all().iter().map(|u| u.rotate(&orthogonal(&mut rng, 2)).unwrap()).collect();
        let basis2 = SketchBasis::from_factors(rotated, &cov).unwrap();
        let est2 = assemble(&solve_reduced(&build_sketched_system(&src, &basis2).unwrap()).unwrap().gamma, &basis2).unwrap();
        prop_assert!(relative(&est2.a_hat, &est.a_hat) < 1e-8);
    }

    #[test]
    fn group_lasso_diagnostics(seed in any::<u64>(), frac in 0.02f64..0.9) {
        let mut rng = StreamRng::new(seed, 13);
        let x = gaussian(&mut rng, 25, 12);
        let y = Vector::from_fn(25, |_, _| rng.normal());
        let part = GroupPartition::matrix_rows(6, 2);
        let null = GroupLassoProblem::new(x.clone(), y.clone(), part.clone(), 0.0).unwrap().null_penalty();
        let prob = GroupLassoProblem::new(x, y, part.clone(), frac * null).unwrap();
        let fit = group_lasso(&prob, 1e-9, 50_000).unwrap();
        prop_assert!(fit.max_kkt_residual() <= 1e-9);
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
        let nonzero: Vec<usize> = part.groups().iter().enumerate()
            .filter(|(_, g)| g.iter().any(|&i| fit.coef[i] != 0.0)).map(|(j, _)| j).collect();
        prop_assert_eq!(&fit.support, &nonzero);
    }

    #[test]
    fn unpenalized_group_lasso_is_least_squares(seed in any::<u64>()) {
        let mut rng = StreamRng::new(seed, 14);
        let x = gaussian(&mut rng, 30, 8);
        let y = Vector::from_fn(30, |_, _| rng.normal());
        let prob = GroupLassoProblem::new(x.clone(), y.clone(), GroupPartition::matrix_rows(4, 2), 0.0).unwrap();
        let fit = group_lasso(&prob, 1e-11, 100_000).unwrap();
        let ls = x.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        prop_assert!((&fit.coef - &ls).norm() <= 1e-8 * ls.norm());
    }
}

#[test]
fn two_runs_are_bit_identical() {
    let a = tucker(&[6, 5, 4], &[2, 2, 2], 3);
    let src = SeededSource::new(a, 0.5, 300, 21).unwrap();
    let cfg = HooiConfig::new(vec![2, 2, 2]);
    let g1 = fit_islet(&src, &cfg, None).unwrap().gamma;
    let g2 = fit_islet(&src, &cfg, None).unwrap().gamma;
    assert!(g1.iter().zip(g2.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

fn scaled(src: &dyn SampleSource, c: f64) -> InMemorySource {
    let mut samples = Vec::new();
    src.visit(0..src.len(), &mut |_, s| {
        samples.push(RegressionSample { y: c * s.y, x: s.x.clone() });
        Ok(())
    })
    .unwrap();
    InMemorySource::new(src.dims().to_vec(), samples).unwrap()
}

#[test]
fn rank_selection_is_scale_equivariant_and_bounded() {
    let a = tucker(&[8, 8, 8], &[2, 2, 2], 5);
    let src = InMemorySource::collect(&SeededSource::new(a, 0.5, 1500, 6).unwrap()).unwrap();
    let cfg = RankSelectConfig::new(vec![4, 4, 4]);
    let base = fit_with_rank_selection(&src, &cfg).unwrap();
    assert!(base.ranks().iter().all(|&r| r <= 4));
    for c in [0.01, 7.5, 1e3] {
        let out = fit_with_rank_selection(&scaled(&src, c), &cfg).unwrap();
        assert_eq!(out.ranks(), base.ranks(), "scale {c}");
    }
}

#[test]
fn noiseless_error_shrinks_with_sample_size() {
    let cfg = HooiConfig::new(vec![2, 2, 2]);
    for seed in 0..3 {
        let a = tucker(&[6, 6, 6], &[2, 2, 2], 40 + seed);
        let err = |n| {
            let src = SeededSource::new(a.clone(), 0.0, n, seed).unwrap();
            relative(&fit_islet(&src, &cfg, None).unwrap().a_hat, &a)
        };
        let (small, large) = (err(200), err(5000));
        assert!(large < small / 20.0, "seed {seed}: {small:.2e} at n=200, {large:.2e} at n=5000");
    }
}
