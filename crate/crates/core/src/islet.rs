//! Regular importance-sketching estimator.
//!
//! Pass 1 averages `y X` into the covariance tensor and probes the sketch
//! directions from it. Pass 2 sketches every covariate into the reduced design
//! `[body | D_1 | ... | D_d]`, a least-squares fit gives the reduced
//! coefficients, and [`assemble`] maps them back to a full tensor.

use std::ops::Range;

use crate::decomposition::{hooi, hosvd_init, HooiConfig};
use crate::error::{IsletError, Result};
use crate::exact_sum::ExactSum;
use crate::sketch::{BlockLayout, SketchBasis, SketchedSystem};
use crate::source::{check_range, check_sample, SampleSource};
use crate::tensor::{
    condition_number, matricize, multilinear, singular_values, spectral_norm, DenseTensor, Matrix,
    Vector,
};

/// Condition estimates above this count as numerically singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Exact, order-independent sum of `y X` over a range of samples.
#[derive(Clone, Debug)]
pub struct CovarianceSum {
    dims: Vec<usize>,
    entries: Vec<ExactSum>,
    count: usize,
}

impl CovarianceSum {
    pub fn new(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            entries: vec![ExactSum::new(); dims.iter().product()],
            count: 0,
        }
    }

    pub fn add(&mut self, y: f64, x: &DenseTensor) {
        for (acc, &v) in self.entries.iter_mut().zip(x.data()) {
            acc.add(y * v);
        }
        self.count += 1;
    }

    pub fn merge(&mut self, other: &CovarianceSum) -> Result<()> {
        if other.dims != self.dims {
            return Err(IsletError::arg("covariance sums over different dims"));
        }
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            a.merge(b);
        }
        self.count += other.count;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Unnormalized sum, each entry correctly rounded.
    pub fn total(&self) -> DenseTensor {
        let data = self.entries.iter().map(ExactSum::value).collect();
        DenseTensor::new(self.dims.clone(), data).expect("dims validated at construction")
    }

    /// `(1/n) sum y X`.
    pub fn mean(&self) -> Result<DenseTensor> {
        if self.count == 0 {
            return Err(IsletError::arg("covariance of an empty sample set"));
        }
        let mut t = self.total();
        t.scale(1.0 / self.count as f64);
        Ok(t)
    }
}

pub fn accumulate_covariance(src: &dyn SampleSource, range: Range<usize>) -> Result<CovarianceSum> {
    check_range(src, &range)?;
    let dims = src.dims().to_vec();
    let mut sum = CovarianceSum::new(&dims);
    src.visit(range, &mut |i, s| {
        check_sample(&dims, i, s)?;
        sum.add(s.y, &s.x);
        Ok(())
    })?;
    Ok(sum)
}

/// `(1/n) sum_j y_j X_j` over every sample.
pub fn covariance_tensor(src: &dyn SampleSource) -> Result<DenseTensor> {
    covariance_over(src, 0..src.len())
}

pub fn covariance_over(src: &dyn SampleSource, range: Range<usize>) -> Result<DenseTensor> {
    if range.is_empty() {
        return Err(IsletError::arg("covariance of an empty sample set"));
    }
    accumulate_covariance(src, range)?.mean()
}

/// Sketch directions from the covariance tensor. Order-3 and higher use HOOI
/// (or the row-sparse variant when `cfg.sparsity` names sparse modes);
/// matrices use the rank-`r` SVD of the covariance directly.
pub fn probe_directions(cov: &DenseTensor, cfg: &HooiConfig) -> Result<SketchBasis> {
    cfg.validate(cov.dims())?;
    let (factors, padded) = if cov.order() == 2 && cfg.sparse_modes().is_empty() {
        (hosvd_init(cov, &cfg.ranks)?, false)
    } else if cfg.sparse_modes().is_empty() {
        let fit = hooi(cov, cfg)?;
        (fit.factors, fit.padded)
    } else {
        let fit = crate::decomposition::sparse_hooi(cov, cfg)?;
        (fit.factors, fit.padded)
    };
    let mut basis = SketchBasis::from_factors(factors, cov)?;
    basis.padded = padded;
    Ok(basis)
}

pub fn build_sketched_system(src: &dyn SampleSource, basis: &SketchBasis) -> Result<SketchedSystem> {
    build_sketched_over(src, 0..src.len(), basis)
}

pub fn build_sketched_over(
    src: &dyn SampleSource,
    range: Range<usize>,
    basis: &SketchBasis,
) -> Result<SketchedSystem> {
    check_range(src, &range)?;
    let dims = src.dims().to_vec();
    if dims != basis.dims() {
        return Err(IsletError::arg(format!(
            "source dims {dims:?} do not match sketch dims {:?}",
            basis.dims()
        )));
    }
    let layout = basis.layout();
    let (n, m) = (range.len(), layout.width());
    let start = range.start;
    // rows are built contiguously, then transposed into the column-major design
    let mut rows = vec![0.0; n * m];
    let mut response = Vector::zeros(n);
    src.visit(range, &mut |i, s| {
        check_sample(&dims, i, s)?;
        let j = i - start;
        let sketch = basis.sketch(&s.x)?;
        basis.regular_row(&sketch, &mut rows[j * m..(j + 1) * m]);
        response[j] = s.y;
        Ok(())
    })?;
    let design = Matrix::from_row_slice(n, m, &rows);
    Ok(SketchedSystem {
        design,
        response,
        layout,
    })
}

/// Least-squares fit of a reduced system.
#[derive(Clone, Debug)]
pub struct LeastSquaresFit {
    pub gamma: Vector,
    pub residual_norm: f64,
    /// 2-norm condition number of the design (square root of that of `X^T X`).
    pub condition: f64,
}

/// Which layout block carries the most weight in the least-significant
/// right singular vector of `r`.
fn weakest_block(r: &Matrix, layout: &BlockLayout) -> String {
    let svd = r.clone().svd(false, true);
    let Some(vt) = svd.v_t else {
        return "unknown block".into();
    };
    let smallest = (0..svd.singular_values.len())
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .unwrap_or(0);
    let row = vt.row(smallest);
    let mut best = (0.0, 0usize);
    let mut blocks: Vec<Range<usize>> = vec![0..layout.body];
    blocks.extend((0..layout.arms.len()).map(|k| layout.arm_range(k)));
    for range in blocks {
        let mass: f64 = range.clone().map(|c| row[c] * row[c]).sum();
        if mass > best.0 {
            best = (mass, range.start);
        }
    }
    layout.block_name(best.1)
}

/// QR least squares `argmin |y - X gamma|`.
pub fn solve_reduced(sys: &SketchedSystem) -> Result<LeastSquaresFit> {
    solve_least_squares(&sys.design, &sys.response, &sys.layout)
}

pub(crate) fn solve_least_squares(x: &Matrix, y: &Vector, layout: &BlockLayout) -> Result<LeastSquaresFit> {
    let (n, m) = x.shape();
    if y.len() != n {
        return Err(IsletError::arg("design and response lengths differ"));
    }
    if m == 0 {
        return Err(IsletError::arg("empty design"));
    }
    if n < m {
        return Err(IsletError::Underdetermined { n, m });
    }
    if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
        return Err(IsletError::NonFinite("reduced system".into()));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let s = singular_values(&r);
    let condition = match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    };
    if !(condition * condition <= CONDITION_LIMIT) {
        return Err(IsletError::Degenerate {
            what: format!("sketched design ({})", weakest_block(&r, layout)),
            condition: condition * condition,
        });
    }
    let qty = qr.q().tr_mul(y);
    let gamma = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| IsletError::Degenerate {
            what: "triangular factor".into(),
            condition: f64::INFINITY,
        })?;
    let residual_norm = (y - x * &gamma).norm();
    Ok(LeastSquaresFit {
        gamma,
        residual_norm,
        condition,
    })
}

#[derive(Clone, Debug, Default)]
pub struct IsletDiagnostics {
    pub residual_norm: f64,
    /// Condition estimate of `X^T X` for the reduced design.
    pub gram_condition: f64,
    /// `|D_k (B_k V_k)^{-1}|` per mode.
    pub rho: Vec<f64>,
    /// Sketch basis was padded because the probed tensor had too low a rank.
    pub padded: bool,
}

#[derive(Clone, Debug)]
pub struct IsletEstimate {
    pub a_hat: DenseTensor,
    pub b_hat: DenseTensor,
    pub d_hat: Vec<Matrix>,
    pub gamma: Vector,
    pub basis: SketchBasis,
    pub diagnostics: IsletDiagnostics,
}

/// Reduced coefficients split into the body tensor and the per-mode arms.
pub fn split_gamma(gamma: &Vector, basis: &SketchBasis) -> Result<(DenseTensor, Vec<Matrix>)> {
    let layout = basis.layout();
    if gamma.len() != layout.width() {
        return Err(IsletError::arg(format!(
            "coefficient vector of length {} for a layout of width {}",
            gamma.len(),
            layout.width()
        )));
    }
    let ranks = basis.ranks();
    let dims = basis.dims();
    let b_hat = DenseTensor::new(ranks.clone(), gamma.as_slice()[..layout.body].to_vec())?;
    let d_hat = (0..basis.order())
        .map(|k| {
            let range = layout.arm_range(k);
            Matrix::from_column_slice(dims[k] - ranks[k], ranks[k], &gamma.as_slice()[range])
        })
        .collect();
    Ok((b_hat, d_hat))
}

/// `B_k V_k` for every mode.
pub fn body_rotations(b_hat: &DenseTensor, basis: &SketchBasis) -> Result<Vec<Matrix>> {
    (0..basis.order())
        .map(|k| Ok(matricize(b_hat, k)? * basis.v(k).matrix()))
        .collect()
}

/// `A = [[B; L_1, ..., L_d]]` with `L_k = (U_k B_k V_k + U_k_perp D_k)(B_k V_k)^{-1}`.
pub fn assemble(gamma: &Vector, basis: &SketchBasis) -> Result<IsletEstimate> {
    let (b_hat, d_hat) = split_gamma(gamma, basis)?;
    let rotations = body_rotations(&b_hat, basis)?;
    let mut factors = Vec::with_capacity(basis.order());
    let mut rho = Vec::with_capacity(basis.order());
    for k in 0..basis.order() {
        let bv = &rotations[k];
        let condition = condition_number(bv);
        if !(condition <= CONDITION_LIMIT) {
            return Err(IsletError::SingularAssembly { mode: k, condition });
        }
        let inv = bv.clone().try_inverse().ok_or(IsletError::SingularAssembly { mode: k, condition })?;
        let arm = &d_hat[k] * &inv;
        rho.push(spectral_norm(&arm));
        factors.push(basis.u(k).matrix() + basis.u_perp(k) * arm);
    }
    let refs: Vec<&Matrix> = factors.iter().collect();
    let a_hat = multilinear(&b_hat, &refs)?;
    Ok(IsletEstimate {
        a_hat,
        b_hat,
        d_hat,
        gamma: gamma.clone(),
        basis: basis.clone(),
        diagnostics: IsletDiagnostics {
            rho,
            padded: basis.padded,
            ..Default::default()
        },
    })
}

/// Pass-1 and pass-2 sample ranges for an optional split fraction.
pub fn split_ranges(n: usize, split: Option<f64>) -> Result<(Range<usize>, Range<usize>)> {
    if n == 0 {
        return Err(IsletError::arg("empty sample source"));
    }
    match split {
        None => Ok((0..n, 0..n)),
        Some(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(IsletError::arg(format!("split fraction {f} must lie in (0, 1)")));
            }
            let cut = (f * n as f64).ceil() as usize;
            if cut == 0 || cut >= n {
                return Err(IsletError::arg(format!(
                    "split fraction {f} of {n} samples leaves an empty part"
                )));
            }
            Ok((0..cut, cut..n))
        }
    }
}

/// Everything up to the reduced solve, without assembly.
#[derive(Clone, Debug)]
pub struct ReducedFit {
    pub basis: SketchBasis,
    pub fit: LeastSquaresFit,
}

pub fn fit_reduced(src: &dyn SampleSource, cfg: &HooiConfig, split: Option<f64>) -> Result<ReducedFit> {
    cfg.validate(src.dims())?;
    let (first, second) = split_ranges(src.len(), split)?;
    let dense_cfg = HooiConfig {
        sparsity: None,
        ..cfg.clone()
    };
    let basis = probe_directions(&covariance_over(src, first)?, &dense_cfg)?;
    let m = basis.layout().width();
    if second.len() < m {
        return Err(IsletError::Underdetermined { n: second.len(), m });
    }
    let sys = build_sketched_over(src, second, &basis)?;
    let fit = solve_reduced(&sys)?;
    Ok(ReducedFit { basis, fit })
}

/// End-to-end regular estimator. With `split = Some(f)` the first `ceil(f n)`
/// samples feed pass 1 and the rest feed pass 2; otherwise both passes use
/// every sample. Any sparsity levels in `cfg` are ignored.
pub fn fit_islet(src: &dyn SampleSource, cfg: &HooiConfig, split: Option<f64>) -> Result<IsletEstimate> {
    let reduced = fit_reduced(src, cfg, split)?;
    let mut est = assemble(&reduced.fit.gamma, &reduced.basis)?;
    est.diagnostics.residual_norm = reduced.fit.residual_norm;
    est.diagnostics.gram_condition = reduced.fit.condition * reduced.fit.condition;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use crate::source::{InMemorySource, RegressionSample, SeededSource};
    use crate::tensor::{qr_orth, thin_svd, OrthonormalBasis};

    fn gaussian(rng: &mut StreamRng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.normal())
    }

    fn tucker(dims: &[usize], r: usize, seed: u64) -> DenseTensor {
        let mut rng = StreamRng::new(seed, 0);
        let core = DenseTensor::new(vec![r; dims.len()], gaussian(&mut rng, r.pow(dims.len() as u32), 1).as_slice().to_vec()).unwrap();
        let factors: Vec<Matrix> = dims.iter().map(|&p| gaussian(&mut rng, p, r)).collect();
        let refs: Vec<&Matrix> = factors.iter().collect();
        multilinear(&core, &refs).unwrap()
    }

    /// Exact singular bases of `a` and the matching reduced coefficients.
    fn exact_basis(a: &DenseTensor, r: usize) -> (SketchBasis, Vector) {
        let ranks = vec![r; a.order()];
        let u: Vec<OrthonormalBasis> = (0..a.order())
            .map(|k| thin_svd(&matricize(a, k).unwrap(), r).unwrap().u)
            .collect();
        let basis = SketchBasis::from_factors(u, a).unwrap();
        let layout = basis.layout();
        let mut gamma = Vector::zeros(layout.width());
        let mats: Vec<&Matrix> = basis.u_all().iter().map(OrthonormalBasis::matrix).collect();
        let b = crate::tensor::project(a, &mats, None).unwrap();
        gamma.as_mut_slice()[..layout.body].copy_from_slice(b.data());
        for k in 0..a.order() {
            let d = basis.u_perp(k).transpose() * matricize(a, k).unwrap() * basis.w(k);
            gamma.as_mut_slice()[layout.arm_range(k)].copy_from_slice(d.as_slice());
        }
        assert_eq!(ranks, basis.ranks());
        (basis, gamma)
    }

    #[test]
    fn covariance_examples() {
        let ones = DenseTensor::from_fn(&[2, 2, 2], |_| 1.0);
        let one = InMemorySource::new(vec![2, 2, 2], vec![RegressionSample { y: 2.0, x: ones.clone() }]).unwrap();
        assert!(covariance_tensor(&one).unwrap().data().iter().all(|&v| v == 2.0));
        let x = tucker(&[2, 2, 2], 1, 3);
        let pair = InMemorySource::new(
            vec![2, 2, 2],
            vec![RegressionSample { y: 1.0, x: x.clone() }, RegressionSample { y: -1.0, x }],
        )
        .unwrap();
        assert!(covariance_tensor(&pair).unwrap().data().iter().all(|&v| v == 0.0));
        let empty = InMemorySource::new(vec![2, 2], vec![]).unwrap();
        assert!(covariance_tensor(&empty).is_err());
    }

    #[test]
    fn covariance_matches_direct_sum() {
        let a = tucker(&[3, 3, 3], 1, 8);
        let src = SeededSource::new(a.clone(), 0.0, 100, 5).unwrap();
        let cov = covariance_tensor(&src).unwrap();
        let mut direct = DenseTensor::zeros(&[3, 3, 3]);
        for i in 0..100 {
            let s = src.generate(i);
            direct.axpy(s.y / 100.0, &s.x);
        }
        assert!(cov.sub(&direct).norm() < 1e-12 * direct.norm());
        // O(|A| p^{3/2} / sqrt(n)) sampling error
        assert!(cov.sub(&a).norm() < 3.0 * a.norm() * 27f64.sqrt() / 10.0);
    }

    #[test]
    fn nonfinite_sample_rejected() {
        let mut x = DenseTensor::zeros(&[2, 2]);
        x.data_mut()[0] = f64::INFINITY;
        let src = InMemorySource::new(vec![2, 2], vec![RegressionSample { y: 1.0, x }]).unwrap();
        assert!(matches!(covariance_tensor(&src), Err(IsletError::NonFinite(_))));
    }

    #[test]
    fn exact_basis_reproduces_coefficient() {
        for seed in 0..5 {
            let a = tucker(&[6, 5, 4], 2, seed);
            let (basis, gamma) = exact_basis(&a, 2);
            let est = assemble(&gamma, &basis).unwrap();
            assert!(est.a_hat.sub(&a).norm() / a.norm() < 1e-8);
        }
    }

    #[test]
    fn zero_arms_collapse_to_projection() {
        let a = tucker(&[5, 5, 5], 2, 11);
        let (basis, mut gamma) = exact_basis(&a, 2);
        let body = basis.layout().body;
        gamma.as_mut_slice()[body..].fill(0.0);
        let est = assemble(&gamma, &basis).unwrap();
        let mats: Vec<&Matrix> = basis.u_all().iter().map(OrthonormalBasis::matrix).collect();
        let expected = multilinear(&est.b_hat, &mats).unwrap();
        assert!(est.a_hat.sub(&expected).norm() < 1e-10 * expected.norm());
        assert!(est.diagnostics.rho.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn singular_body_is_reported() {
        let a = tucker(&[5, 5, 5], 2, 12);
        let (basis, _) = exact_basis(&a, 2);
        let gamma = Vector::zeros(basis.layout().width());
        assert!(matches!(assemble(&gamma, &basis), Err(IsletError::SingularAssembly { mode: 0, .. })));
    }

    #[test]
    fn least_squares_examples() {
        let layout = BlockLayout { body: 4, arms: vec![] };
        let x = Matrix::identity(4, 4);
        let y = Vector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        let sys = SketchedSystem { design: x, response: y.clone(), layout: layout.clone() };
        assert!((solve_reduced(&sys).unwrap().gamma - &y).norm() < 1e-15);

        let mut rng = StreamRng::new(3, 0);
        let x = gaussian(&mut rng, 40, 4);
        let truth = Vector::from_vec(vec![0.3, -1.0, 2.0, 4.0]);
        let sys = SketchedSystem { design: x.clone(), response: &x * &truth, layout: layout.clone() };
        assert!((solve_reduced(&sys).unwrap().gamma - &truth).norm() < 1e-10);

        let y = Vector::from_fn(40, |_, _| rng.normal());
        let fit = solve_reduced(&SketchedSystem { design: x.clone(), response: y.clone(), layout: layout.clone() }).unwrap();
        let normal = x.transpose() * (&y - &x * &fit.gamma);
        assert!(normal.norm() < 1e-8 * (x.transpose() * &y).norm());

        let short = SketchedSystem { design: Matrix::zeros(3, 4), response: Vector::zeros(3), layout: layout.clone() };
        assert!(matches!(solve_reduced(&short), Err(IsletError::Underdetermined { n: 3, m: 4 })));
    }

    #[test]
    fn degenerate_design_names_block() {
        let layout = BlockLayout { body: 2, arms: vec![2] };
        let mut rng = StreamRng::new(4, 0);
        let mut x = gaussian(&mut rng, 20, 4);
        let col = x.column(1).into_owned();
        x.set_column(3, &col);
        let sys = SketchedSystem { design: x, response: Vector::zeros(20), layout };
        match solve_reduced(&sys) {
            Err(IsletError::Degenerate { what, .. }) => assert!(what.contains("block"), "{what}"),
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn split_ranges_cut_prefix() {
        assert_eq!(split_ranges(10, None).unwrap(), (0..10, 0..10));
        assert_eq!(split_ranges(10, Some(0.25)).unwrap(), (0..3, 3..10));
        assert!(split_ranges(10, Some(1.0)).is_err());
        assert!(split_ranges(1, Some(0.5)).is_err());
    }

    #[test]
    fn matrix_case_matches_direct_svd_route() {
        let a = tucker(&[6, 5], 2, 21);
        let src = SeededSource::new(a.clone(), 0.1, 400, 2).unwrap();
        let cfg = HooiConfig::new(vec![2, 2]);
        let est = fit_islet(&src, &cfg, None).unwrap();
        let cov = covariance_tensor(&src).unwrap();
        let svd = thin_svd(&matricize(&cov, 0).unwrap(), 2).unwrap();
        let svd_t = thin_svd(&matricize(&cov, 1).unwrap(), 2).unwrap();
        assert!((svd.u.projector() - est.basis.u(0).projector()).norm() < 1e-12);
        assert!((svd_t.u.projector() - est.basis.u(1).projector()).norm() < 1e-12);
        // matrix assembly (U B + U_perp D1) B^{-1} (B U2^T + D2^T U2_perp^T)
        let (b, d) = split_gamma(&est.gamma, &est.basis).unwrap();
        let bm = matricize(&b, 0).unwrap();
        let left = est.basis.u(0).matrix() * &bm + est.basis.u_perp(0) * &d[0];
        let right = &bm * est.basis.u(1).matrix().transpose() + d[1].transpose() * est.basis.u_perp(1).transpose();
        let direct = left * bm.try_inverse().unwrap() * right;
        assert!((matricize(&est.a_hat, 0).unwrap() - direct).norm() < 1e-10 * a.norm());
        assert!(est.a_hat.sub(&a).norm() / a.norm() < 0.1);
    }

    #[test]
    fn rotation_of_factors_leaves_estimate_unchanged() {
        let a = tucker(&[5, 5, 5], 2, 30);
        let src = SeededSource::new(a, 0.5, 300, 9).unwrap();
        let cov = covariance_tensor(&src).unwrap();
        let basis = probe_directions(&cov, &HooiConfig::new(vec![2, 2, 2])).unwrap();
        let mut rng = StreamRng::new(31, 0);
        let rotated: Vec<OrthonormalBasis> = (0..3)
            .map(|k| {
                let q = qr_orth(&gaussian(&mut rng, 2, 2)).unwrap();
                basis.u(k).rotate(q.matrix()).unwrap()
            })
            .collect();
        let basis2 = SketchBasis::from_factors(rotated, &cov).unwrap();
        let e1 = assemble(&solve_reduced(&build_sketched_system(&src, &basis).unwrap()).unwrap().gamma, &basis).unwrap();
        let e2 = assemble(&solve_reduced(&build_sketched_system(&src, &basis2).unwrap()).unwrap().gamma, &basis2).unwrap();
        assert!(e1.a_hat.sub(&e2.a_hat).norm() < 1e-8 * e1.a_hat.norm());
    }

    #[test]
    fn two_runs_are_bit_identical() {
        let a = tucker(&[5, 4, 3], 2, 40);
        let src = SeededSource::new(a, 1.0, 200, 7).unwrap();
        let cfg = HooiConfig::new(vec![2, 2, 2]);
        let g1 = fit_islet(&src, &cfg, None).unwrap().gamma;
        let g2 = fit_islet(&src, &cfg, None).unwrap().gamma;
        assert_eq!(g1, g2);
    }
}
