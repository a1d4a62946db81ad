//! Group-sparse importance-sketching estimator.
//!
//! The body coefficients are fitted by least squares on the body block. Each
//! mode then gets its own regression of `y` on the full arm `vec(Z_k)`, by
//! group Lasso over the rows of `E_k` when the mode is sparse and by least
//! squares otherwise. The estimate is `[[B; E_1 (U_1^T E_1)^{-1}, ...]]`.
//!
//! [`group_lasso`] minimizes `0.5 |y - X b|^2 + eta sum_G |b_G|` by cyclic
//! block coordinate descent with exact block minimization. The theory-driven
//! penalty is stated for the unhalved loss, so the fit path halves it.

use std::ops::Range;

use crate::decomposition::{sparse_hooi, HooiConfig};
use crate::error::{IsletError, Result};
use crate::islet::{covariance_over, solve_least_squares, split_ranges, CONDITION_LIMIT};
use crate::sketch::{BlockLayout, SketchBasis};
use crate::source::{check_range, check_sample, SampleSource};
use crate::tensor::{condition_number, multilinear, singular_values, spectral_norm, DenseTensor, Matrix, Vector};

/// Disjoint index groups covering `0..len`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    len: usize,
}

impl GroupPartition {
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        let len: usize = groups.iter().map(Vec::len).sum();
        let mut seen = vec![false; len];
        for g in &groups {
            if g.is_empty() {
                return Err(IsletError::arg("empty group"));
            }
            for &i in g {
                if i >= len || seen[i] {
                    return Err(IsletError::arg("groups must partition 0..len"));
                }
                seen[i] = true;
            }
        }
        Ok(Self { groups, len })
    }

    /// Rows of a column-major `p x r` coefficient matrix:
    /// `G_j = {j, j + p, ..., j + p (r - 1)}`.
    pub fn matrix_rows(p: usize, r: usize) -> Self {
        let groups = (0..p).map(|j| (0..r).map(|i| j + p * i).collect()).collect();
        Self { groups, len: p * r }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Clone, Debug)]
pub struct GroupLassoProblem {
    pub design: Matrix,
    pub response: Vector,
    pub partition: GroupPartition,
    pub eta: f64,
}

impl GroupLassoProblem {
    pub fn new(design: Matrix, response: Vector, partition: GroupPartition, eta: f64) -> Result<Self> {
        if design.ncols() != partition.len() {
            return Err(IsletError::arg(format!(
                "design has {} columns, partition covers {}",
                design.ncols(),
                partition.len()
            )));
        }
        if design.nrows() != response.len() {
            return Err(IsletError::arg("design and response lengths differ"));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(IsletError::arg(format!("penalty {eta} must be finite and >= 0")));
        }
        Ok(Self {
            design,
            response,
            partition,
            eta,
        })
    }

    /// `0.5 |y - X b|^2 + eta sum_G |b_G|`.
    pub fn objective(&self, coef: &Vector) -> f64 {
        let resid = &self.response - &self.design * coef;
        0.5 * resid.norm_squared() + self.eta * self.penalty(coef)
    }

    fn penalty(&self, coef: &Vector) -> f64 {
        self.partition
            .groups()
            .iter()
            .map(|g| g.iter().map(|&i| coef[i] * coef[i]).sum::<f64>().sqrt())
            .sum()
    }

    /// Smallest penalty with an all-zero solution: `max_G |X_G^T y|`.
    pub fn null_penalty(&self) -> f64 {
        let xty = self.design.tr_mul(&self.response);
        self.partition
            .groups()
            .iter()
            .map(|g| g.iter().map(|&i| xty[i] * xty[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct GroupLassoFit {
    pub coef: Vector,
    /// Per-group KKT violation at the returned point.
    pub kkt_residuals: Vec<f64>,
    /// Objective after every sweep.
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
    /// Groups with a nonzero block, ascending.
    pub support: Vec<usize>,
}

impl GroupLassoFit {
    pub fn max_kkt_residual(&self) -> f64 {
        self.kkt_residuals.iter().copied().fold(0.0, f64::max)
    }
}

struct Block {
    cols: Vec<usize>,
    eigvecs: Matrix,
    eigvals: Vec<f64>,
}

/// Exact minimizer of `0.5 b^T H b - c^T b + eta |b|` for `|c| > eta`.
fn block_minimizer(block: &Block, c: &Vector, eta: f64) -> Vector {
    let chat = block.eigvecs.tr_mul(c);
    if eta == 0.0 {
        let scale = block.eigvals.iter().copied().fold(0.0, f64::max);
        let coords = Vector::from_fn(chat.len(), |i, _| {
            let l = block.eigvals[i];
            if l > 1e-14 * scale {
                chat[i] / l
            } else {
                0.0
            }
        });
        return &block.eigvecs * coords;
    }
    // the solution is b = (H + (eta / t) I)^{-1} c with t = |b|, i.e. the root of
    // g(t) = sum chat_i^2 / (lambda_i t + eta)^2 - 1, decreasing in t
    let g = |t: f64| -> (f64, f64) {
        let mut val = -1.0;
        let mut deriv = 0.0;
        for (i, &l) in block.eigvals.iter().enumerate() {
            let den = l.max(0.0) * t + eta;
            let c2 = chat[i] * chat[i];
            val += c2 / (den * den);
            deriv -= 2.0 * c2 * l.max(0.0) / (den * den * den);
        }
        (val, deriv)
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut doublings = 0;
    while g(hi).0 > 0.0 && doublings < 2000 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (val, deriv) = g(t);
        if val > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = if deriv < 0.0 { t - val / deriv } else { f64::NAN };
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - t).abs() <= 1e-15 * t.max(f64::MIN_POSITIVE) || hi - lo <= 1e-15 * hi {
            t = next;
            break;
        }
        t = next;
    }
    let coords = Vector::from_fn(chat.len(), |i, _| chat[i] * t / (block.eigvals[i].max(0.0) * t + eta));
    &block.eigvecs * coords
}

fn gather(v: &Vector, cols: &[usize]) -> Vector {
    Vector::from_iterator(cols.len(), cols.iter().map(|&i| v[i]))
}

fn kkt(
    prob: &GroupLassoProblem,
    gram: &Matrix,
    xty: &Vector,
    coef: &Vector,
) -> Vec<f64> {
    let grad = xty - gram * coef;
    prob.partition
        .groups()
        .iter()
        .map(|g| {
            let gg = gather(&grad, g);
            let bg = gather(coef, g);
            let nb = bg.norm();
            if nb > 0.0 {
                (gg - bg * (prob.eta / nb)).norm()
            } else {
                (gg.norm() - prob.eta).max(0.0)
            }
        })
        .collect()
}

/// Cyclic block coordinate descent over the groups in ascending order.
/// Converges when every group's KKT violation is at most `tol`.
pub fn group_lasso(prob: &GroupLassoProblem, tol: f64, max_iters: usize) -> Result<GroupLassoFit> {
    if !prob.design.iter().chain(prob.response.iter()).all(|v| v.is_finite()) {
        return Err(IsletError::NonFinite("group Lasso problem".into()));
    }
    let gram = prob.design.tr_mul(&prob.design);
    let xty = prob.design.tr_mul(&prob.response);
    let blocks: Vec<Block> = prob
        .partition
        .groups()
        .iter()
        .map(|g| {
            let h = Matrix::from_fn(g.len(), g.len(), |a, b| gram[(g[a], g[b])]);
            let eig = h.symmetric_eigen();
            Block {
                cols: g.clone(),
                eigvecs: eig.eigenvectors,
                eigvals: eig.eigenvalues.iter().copied().collect(),
            }
        })
        .collect();

    let p = prob.partition.len();
    let mut coef = Vector::zeros(p);
    // grad = X^T y - G coef, kept current as blocks change
    let mut grad = xty.clone();
    let mut trace = vec![prob.objective(&coef)];
    let mut residuals = kkt(prob, &gram, &xty, &coef);
    let mut sweeps = 0;
    while residuals.iter().copied().fold(0.0, f64::max) > tol {
        if sweeps >= max_iters {
            return Err(IsletError::NotConverged {
                iterations: sweeps,
                kkt_residual: residuals.iter().copied().fold(0.0, f64::max),
            });
        }
        sweeps += 1;
        for block in &blocks {
            let old = gather(&coef, &block.cols);
            let h_old = Vector::from_fn(block.cols.len(), |a, _| {
                block.cols.iter().zip(old.iter()).map(|(&c, &o)| gram[(block.cols[a], c)] * o).sum()
            });
            let c = gather(&grad, &block.cols) + h_old;
            let new = if c.norm() <= prob.eta {
                Vector::zeros(block.cols.len())
            } else {
                block_minimizer(block, &c, prob.eta)
            };
            let delta = &new - &old;
            if delta.iter().any(|&v| v != 0.0) {
                for (a, &col) in block.cols.iter().enumerate() {
                    coef[col] = new[a];
                    if delta[a] != 0.0 {
                        grad.axpy(-delta[a], &gram.column(col), 1.0);
                    }
                }
            }
        }
        // refresh the gradient to keep rounding drift out of the stopping test
        grad = &xty - &gram * &coef;
        trace.push(prob.objective(&coef));
        residuals = kkt(prob, &gram, &xty, &coef);
    }
    let support = prob
        .partition
        .groups()
        .iter()
        .enumerate()
        .filter(|(_, g)| g.iter().any(|&i| coef[i] != 0.0))
        .map(|(j, _)| j)
        .collect();
    Ok(GroupLassoFit {
        coef,
        kkt_residuals: residuals,
        objective_trace: trace,
        sweeps,
        support,
    })
}

/// `C_0 sigma sqrt(n2 (r + ln p))` with `C_0 = 1`, for the unhalved loss.
pub fn theory_penalty(n2: usize, r: usize, p: f64, sigma_tilde: f64) -> f64 {
    sigma_tilde * ((n2 as f64) * (r as f64 + p.ln())).sqrt()
}

/// Rule for the group Lasso penalty on sparse modes. Penalties are on the
/// scale of the unhalved loss `|y - X b|^2 + eta sum |b_G|`.
#[derive(Clone, Debug, PartialEq)]
pub enum PenaltyPolicy {
    /// `c0 * theory_penalty(n2, r_k, p_k, sqrt(mean y^2))`.
    Theory { c0: f64 },
    Fixed(f64),
    /// K-fold cross-validation over a log grid below the null penalty,
    /// choosing the largest penalty within one standard error of the best.
    CrossValidation { folds: usize, grid: usize },
}

impl Default for PenaltyPolicy {
    fn default() -> Self {
        PenaltyPolicy::Theory { c0: 1.0 }
    }
}

/// Verdict of an exhaustive group restricted isometry check.
#[derive(Clone, Debug)]
pub struct GripReport {
    pub holds: bool,
    /// Smallest `sigma_min^2 / n` over all supports.
    pub min_ratio: f64,
    /// Largest `sigma_max^2 / n` over all supports.
    pub max_ratio: f64,
    /// Support attaining the worst deviation from 1.
    pub worst_support: Vec<usize>,
}

fn for_each_subset(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}

/// Checks `n (1 - delta) |v|^2 <= |X v|^2 <= n (1 + delta) |v|^2` for every
/// `v` supported on at most `s` groups, by enumerating supports.
pub fn check_grip(design: &Matrix, partition: &GroupPartition, s: usize, delta: f64) -> Result<GripReport> {
    if partition.num_groups() > 12 || s > 3 {
        return Err(IsletError::TooLarge(format!(
            "{} groups with support size {s} (limits: 12 groups, size 3)",
            partition.num_groups()
        )));
    }
    if design.ncols() != partition.len() {
        return Err(IsletError::arg("design width does not match partition"));
    }
    let n = design.nrows() as f64;
    let k = s.min(partition.num_groups());
    let mut report = GripReport {
        holds: true,
        min_ratio: f64::INFINITY,
        max_ratio: 0.0,
        worst_support: vec![],
    };
    let mut worst = -1.0;
    // singular values interlace, so supports of exactly k groups are extremal
    for_each_subset(partition.num_groups(), k, &mut |support| {
        let cols: Vec<usize> = support.iter().flat_map(|&g| partition.groups()[g].iter().copied()).collect();
        let sub = design.select_columns(&cols);
        let sv = singular_values(&sub);
        let hi = sv.first().copied().unwrap_or(0.0).powi(2) / n;
        let lo = if sub.ncols() > sub.nrows() { 0.0 } else { sv.last().copied().unwrap_or(0.0).powi(2) / n };
        report.min_ratio = report.min_ratio.min(lo);
        report.max_ratio = report.max_ratio.max(hi);
        let dev = (1.0 - lo).max(hi - 1.0);
        if dev > worst {
            worst = dev;
            report.worst_support = support.to_vec();
        }
    });
    // slack for rounding in the singular values
    let slack = 1e-12;
    report.holds = report.min_ratio >= 1.0 - delta - slack && report.max_ratio <= 1.0 + delta + slack;
    Ok(report)
}

/// Body design and per-mode full arm designs.
#[derive(Clone, Debug)]
pub struct SparseSketchedSystems {
    pub body: Matrix,
    /// `n x p_k r_k`, row `i` is `vec(M_k(X_i) W_k)`.
    pub arms: Vec<Matrix>,
    pub response: Vector,
}

pub fn build_sparse_sketched(
    src: &dyn SampleSource,
    range: Range<usize>,
    basis: &SketchBasis,
) -> Result<SparseSketchedSystems> {
    check_range(src, &range)?;
    let dims = src.dims().to_vec();
    if dims != basis.dims() {
        return Err(IsletError::arg("source dims do not match sketch dims"));
    }
    let ranks = basis.ranks();
    let n = range.len();
    let body_width: usize = ranks.iter().product();
    let mut body = vec![0.0; n * body_width];
    let arm_widths: Vec<usize> = dims.iter().zip(&ranks).map(|(p, r)| p * r).collect();
    let mut arms: Vec<Vec<f64>> = arm_widths.iter().map(|w| vec![0.0; n * w]).collect();
    let mut response = Vector::zeros(n);
    let start = range.start;
    src.visit(range, &mut |i, s| {
        check_sample(&dims, i, s)?;
        let j = i - start;
        let sk = basis.sketch(&s.x)?;
        body[j * body_width..(j + 1) * body_width].copy_from_slice(&sk.body);
        for (k, z) in sk.arms.iter().enumerate() {
            arms[k][j * arm_widths[k]..(j + 1) * arm_widths[k]].copy_from_slice(z.as_slice());
        }
        response[j] = s.y;
        Ok(())
    })?;
    Ok(SparseSketchedSystems {
        body: Matrix::from_row_slice(n, body_width, &body),
        arms: arms
            .iter()
            .zip(&arm_widths)
            .map(|(a, &w)| Matrix::from_row_slice(n, w, a))
            .collect(),
        response,
    })
}

#[derive(Clone, Debug)]
pub struct ModeFit {
    /// `E_k`, `p_k x r_k`.
    pub e_hat: Matrix,
    /// Nonzero rows of `E_k`.
    pub support: Vec<usize>,
    /// Penalty on the unhalved-loss scale; `None` for least-squares modes.
    pub eta: Option<f64>,
    /// Per-group KKT residuals of the group Lasso fit (empty for least squares).
    pub kkt_residuals: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SparseIsletEstimate {
    pub a_hat: DenseTensor,
    pub b_hat: DenseTensor,
    pub modes: Vec<ModeFit>,
    pub basis: SketchBasis,
    /// `|U_k_perp^T E_k (U_k^T E_k)^{-1}|` per mode.
    pub rho: Vec<f64>,
}

impl SparseIsletEstimate {
    pub fn e_hat(&self) -> Vec<Matrix> {
        self.modes.iter().map(|m| m.e_hat.clone()).collect()
    }
}

/// Reduced fits before assembly.
#[derive(Clone, Debug)]
pub struct SparseReducedFit {
    pub basis: SketchBasis,
    pub b_hat: DenseTensor,
    pub modes: Vec<ModeFit>,
}

fn solver_tolerance(prob: &GroupLassoProblem) -> f64 {
    1e-8 * prob.null_penalty().max(1.0)
}

fn cross_validated_penalty(x: &Matrix, y: &Vector, partition: &GroupPartition, folds: usize, grid: usize) -> Result<f64> {
    let n = x.nrows();
    if folds < 2 || folds > n || grid < 2 {
        return Err(IsletError::arg("cross-validation needs >= 2 folds, <= n folds and >= 2 grid points"));
    }
    let full = GroupLassoProblem::new(x.clone(), y.clone(), partition.clone(), 0.0)?;
    let top = full.null_penalty();
    if top == 0.0 {
        return Ok(0.0);
    }
    let etas: Vec<f64> = (0..grid).map(|i| top * 1e-3f64.powf(i as f64 / (grid - 1) as f64)).collect();
    let bounds: Vec<usize> = (0..=folds).map(|f| f * n / folds).collect();
    let mut means = Vec::with_capacity(grid);
    let mut errors = Vec::with_capacity(grid);
    for &eta in &etas {
        let mut fold_err = Vec::with_capacity(folds);
        for f in 0..folds {
            let test: Vec<usize> = (bounds[f]..bounds[f + 1]).collect();
            let train: Vec<usize> = (0..n).filter(|i| !(bounds[f]..bounds[f + 1]).contains(i)).collect();
            let xt = x.select_rows(&train);
            let yt = Vector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
            let prob = GroupLassoProblem::new(xt, yt, partition.clone(), 0.5 * eta)?;
            let fit = group_lasso(&prob, solver_tolerance(&prob), 100_000)?;
            let pred = x.select_rows(&test) * &fit.coef;
            let mse = test.iter().enumerate().map(|(a, &i)| (y[i] - pred[a]).powi(2)).sum::<f64>() / test.len() as f64;
            fold_err.push(mse);
        }
        let mean = fold_err.iter().sum::<f64>() / folds as f64;
        let var = fold_err.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (folds - 1) as f64;
        means.push(mean);
        errors.push((var / folds as f64).sqrt());
    }
    let best = (0..grid).min_by(|&a, &b| means[a].total_cmp(&means[b])).unwrap_or(0);
    let bound = means[best] + errors[best];
    let chosen = (0..grid).find(|&i| means[i] <= bound).unwrap_or(best);
    Ok(etas[chosen])
}

pub fn fit_sparse_reduced(
    src: &dyn SampleSource,
    cfg: &HooiConfig,
    policy: &PenaltyPolicy,
    split: Option<f64>,
) -> Result<SparseReducedFit> {
    cfg.validate(src.dims())?;
    let (first, second) = split_ranges(src.len(), split)?;
    let cov = covariance_over(src, first)?;
    let factors = sparse_hooi(&cov, cfg)?;
    let mut basis = SketchBasis::from_factors(factors.factors, &cov)?;
    basis.padded = factors.padded;

    let n2 = second.len();
    let sys = build_sparse_sketched(src, second, &basis)?;
    let ranks = basis.ranks();
    let dims = basis.dims();
    let body_layout = BlockLayout {
        body: sys.body.ncols(),
        arms: vec![],
    };
    let body_fit = solve_least_squares(&sys.body, &sys.response, &body_layout)?;
    let b_hat = DenseTensor::new(ranks.clone(), body_fit.gamma.as_slice().to_vec())?;
    let sigma_tilde = (sys.response.norm_squared() / n2 as f64).sqrt();

    let mut modes = Vec::with_capacity(basis.order());
    for k in 0..basis.order() {
        let (p, r) = (dims[k], ranks[k]);
        let x = &sys.arms[k];
        let (coef, eta, kkt_residuals) = if cfg.sparsity_level(k).is_some() {
            let partition = GroupPartition::matrix_rows(p, r);
            let eta = match policy {
                PenaltyPolicy::Theory { c0 } => c0 * theory_penalty(n2, r, p as f64, sigma_tilde),
                PenaltyPolicy::Fixed(eta) => *eta,
                PenaltyPolicy::CrossValidation { folds, grid } => {
                    cross_validated_penalty(x, &sys.response, &partition, *folds, *grid)?
                }
            };
            let prob = GroupLassoProblem::new(x.clone(), sys.response.clone(), partition, 0.5 * eta)?;
            let fit = group_lasso(&prob, solver_tolerance(&prob), 100_000)?;
            (fit.coef, Some(eta), fit.kkt_residuals)
        } else {
            let layout = BlockLayout { body: 0, arms: vec![p * r] };
            let fit = solve_least_squares(x, &sys.response, &layout)?;
            (fit.gamma, None, vec![])
        };
        let e_hat = Matrix::from_column_slice(p, r, coef.as_slice());
        let support = (0..p).filter(|&i| e_hat.row(i).iter().any(|&v| v != 0.0)).collect();
        modes.push(ModeFit {
            e_hat,
            support,
            eta,
            kkt_residuals,
        });
    }
    Ok(SparseReducedFit { basis, b_hat, modes })
}

/// `[[B; E_1 (U_1^T E_1)^{-1}, ..., E_d (U_d^T E_d)^{-1}]]`.
pub fn assemble_sparse(reduced: SparseReducedFit) -> Result<SparseIsletEstimate> {
    let SparseReducedFit { basis, b_hat, modes } = reduced;
    let mut factors = Vec::with_capacity(modes.len());
    let mut rho = Vec::with_capacity(modes.len());
    for (k, m) in modes.iter().enumerate() {
        let ute = basis.u(k).matrix().tr_mul(&m.e_hat);
        let condition = condition_number(&ute);
        if !(condition <= CONDITION_LIMIT) {
            return Err(IsletError::SingularAssembly { mode: k, condition });
        }
        let inv = ute.try_inverse().ok_or(IsletError::SingularAssembly { mode: k, condition })?;
        let l = &m.e_hat * &inv;
        rho.push(spectral_norm(&basis.u_perp(k).tr_mul(&l)));
        factors.push(l);
    }
    let refs: Vec<&Matrix> = factors.iter().collect();
    let a_hat = multilinear(&b_hat, &refs)?;
    Ok(SparseIsletEstimate {
        a_hat,
        b_hat,
        modes,
        basis,
        rho,
    })
}

/// End-to-end sparse estimator; `split` behaves as in
/// [`fit_islet`](crate::islet::fit_islet).
pub fn fit_sparse_islet(
    src: &dyn SampleSource,
    cfg: &HooiConfig,
    policy: &PenaltyPolicy,
    split: Option<f64>,
) -> Result<SparseIsletEstimate> {
    assemble_sparse(fit_sparse_reduced(src, cfg, policy, split)?)
}
