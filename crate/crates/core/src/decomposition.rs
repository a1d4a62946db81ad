//! Low-Tucker-rank approximation by higher-order orthogonal iteration.
//!
//! [`hooi`] alternates truncated SVDs of partially projected unfoldings,
//! starting from the per-mode truncated SVDs of [`hosvd_init`].
//! [`sparse_hooi`] runs the same sweeps but, on the modes declared sparse,
//! restricts each SVD to the rows that survive a double-projection
//! hard threshold. The noise level for that threshold comes from the median
//! absolute entry of the input (`median / 0.6744`, the normal 75% quantile).

use crate::error::{IsletError, Result};
use crate::tensor::{
    matricize, project, singular_values, thin_svd, DenseTensor, Matrix, OrthonormalBasis,
};

/// 75% quantile of the standard normal distribution.
pub const NORMAL_Q75: f64 = 0.6744;

#[derive(Clone, Debug, PartialEq)]
pub struct HooiConfig {
    /// Target Tucker rank per mode.
    pub ranks: Vec<usize>,
    pub max_iters: usize,
    /// Stop once the largest per-mode sin-theta change of a sweep drops below this.
    pub tol: f64,
    /// Row-sparsity level `s_k` for each mode in the sparse set, `None` for
    /// dense modes. `None` overall means no sparse modes.
    pub sparsity: Option<Vec<Option<usize>>>,
}

impl HooiConfig {
    pub fn new(ranks: Vec<usize>) -> Self {
        Self {
            ranks,
            max_iters: 20,
            tol: 1e-6,
            sparsity: None,
        }
    }

    pub fn with_sparsity(mut self, levels: Vec<Option<usize>>) -> Self {
        self.sparsity = Some(levels);
        self
    }

    /// Modes with a declared sparsity level.
    pub fn sparse_modes(&self) -> Vec<usize> {
        self.sparsity
            .as_ref()
            .map(|lv| lv.iter().enumerate().filter(|(_, s)| s.is_some()).map(|(k, _)| k).collect())
            .unwrap_or_default()
    }

    pub fn sparsity_level(&self, mode: usize) -> Option<usize> {
        self.sparsity.as_ref().and_then(|lv| lv.get(mode).copied().flatten())
    }

    pub fn validate(&self, dims: &[usize]) -> Result<()> {
        validate_ranks(&self.ranks, dims)?;
        if self.max_iters == 0 {
            return Err(IsletError::arg("max_iters must be positive"));
        }
        if !(self.tol >= 0.0) {
            return Err(IsletError::arg("tol must be non-negative"));
        }
        if let Some(levels) = &self.sparsity {
            if levels.len() != dims.len() {
                return Err(IsletError::arg(format!(
                    "{} sparsity levels for an order-{} tensor",
                    levels.len(),
                    dims.len()
                )));
            }
            for (k, s) in levels.iter().enumerate() {
                if let Some(s) = *s {
                    if s < self.ranks[k] || s > dims[k] {
                        return Err(IsletError::arg(format!(
                            "sparsity level {s} in mode {k} must lie in [{}, {}]",
                            self.ranks[k], dims[k]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Checks `1 <= r_k <= p_k` and `r_k <= prod_{l != k} r_l`.
pub fn validate_ranks(ranks: &[usize], dims: &[usize]) -> Result<()> {
    if ranks.len() != dims.len() {
        return Err(IsletError::arg(format!(
            "{} ranks for an order-{} tensor",
            ranks.len(),
            dims.len()
        )));
    }
    if dims.len() < 2 {
        return Err(IsletError::arg("Tucker ranks need an order >= 2 tensor"));
    }
    let total: usize = ranks.iter().product();
    for (k, (&r, &p)) in ranks.iter().zip(dims).enumerate() {
        if r == 0 || r > p {
            return Err(IsletError::arg(format!("rank {r} in mode {k} must lie in [1, {p}]")));
        }
        if r * r > total {
            return Err(IsletError::arg(format!(
                "rank {r} in mode {k} exceeds the product of the other ranks ({})",
                total / r
            )));
        }
    }
    Ok(())
}

/// Core tensor plus per-mode orthonormal factors.
#[derive(Clone, Debug)]
pub struct TuckerFactorization {
    pub core: DenseTensor,
    pub factors: Vec<OrthonormalBasis>,
    /// `|core|_HS` after initialization and after every sweep.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when some mode had fewer than `r_k` nonzero singular values and
    /// its basis was padded with an arbitrary orthonormal complement.
    pub padded: bool,
}

impl TuckerFactorization {
    pub fn reconstruct(&self) -> DenseTensor {
        let mut out = self.core.clone();
        for (k, f) in self.factors.iter().enumerate() {
            out = crate::tensor::mode_product(&out, f.matrix(), k).expect("consistent factor shapes");
        }
        out
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.factors.iter().map(OrthonormalBasis::rank).collect()
    }
}

/// Leading `r` left singular vectors of `m`; if `m` has numerical rank below
/// `r` the trailing columns are replaced by an orthonormal completion.
fn leading_basis(m: &Matrix, r: usize) -> Result<(OrthonormalBasis, bool)> {
    let svd = thin_svd(m, r)?;
    let top = svd.singular_values[0];
    let numeric = svd
        .singular_values
        .iter()
        .take_while(|&&s| s > 1e-12 * top && s > 0.0)
        .count();
    if numeric == r {
        return Ok((svd.u, false));
    }
    let p = m.nrows();
    let mut u = Matrix::zeros(p, r);
    if numeric == 0 {
        u.view_mut((0, 0), (r, r)).fill_with_identity();
    } else {
        let kept = svd.u.matrix().columns(0, numeric).into_owned();
        let perp = OrthonormalBasis::trusted(kept.clone()).complement();
        u.view_mut((0, 0), (p, numeric)).copy_from(&kept);
        u.view_mut((0, numeric), (p, r - numeric))
            .copy_from(&perp.columns(0, r - numeric));
    }
    Ok((OrthonormalBasis::trusted(u), true))
}

/// Per-mode truncated SVD of the unfoldings: `U_k = SVD_{r_k}(M_k(t))`.
pub fn hosvd_init(t: &DenseTensor, ranks: &[usize]) -> Result<Vec<OrthonormalBasis>> {
    validate_ranks(ranks, t.dims())?;
    if !t.is_finite() {
        return Err(IsletError::NonFinite("decomposition input".into()));
    }
    (0..t.order())
        .map(|k| Ok(leading_basis(&matricize(t, k)?, ranks[k])?.0))
        .collect()
}

/// `|sin Theta(U, V)|` in spectral norm, computed as `|(I - U U^T) V|`.
pub fn sin_theta(u: &OrthonormalBasis, v: &OrthonormalBasis) -> Result<f64> {
    if u.dim() != v.dim() || u.rank() != v.rank() {
        return Err(IsletError::arg(format!(
            "sin-theta between {}x{} and {}x{} bases",
            u.dim(),
            u.rank(),
            v.dim(),
            v.rank()
        )));
    }
    let um = u.matrix();
    let resid = v.matrix() - um * (um.transpose() * v.matrix());
    let s = singular_values(&resid).first().copied().unwrap_or(0.0);
    Ok(s.clamp(0.0, 1.0))
}

/// Same quantity via principal-angle cosines: `sqrt(1 - sigma_min(U^T V)^2)`.
pub fn sin_theta_from_cosines(u: &OrthonormalBasis, v: &OrthonormalBasis) -> Result<f64> {
    if u.dim() != v.dim() || u.rank() != v.rank() {
        return Err(IsletError::arg("sin-theta between mismatched bases"));
    }
    let c = u.matrix().transpose() * v.matrix();
    let smin = singular_values(&c).last().copied().unwrap_or(0.0).min(1.0);
    Ok((1.0 - smin * smin).max(0.0).sqrt())
}

/// Noise-level estimate `median(|vec(t)|) / 0.6744`.
pub fn median_noise_level(t: &DenseTensor) -> f64 {
    let mut abs: Vec<f64> = t.data().iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let n = abs.len();
    let median = if n % 2 == 1 {
        abs[n / 2]
    } else {
        0.5 * (abs[n / 2 - 1] + abs[n / 2])
    };
    median / NORMAL_Q75
}

fn row_norms(m: &Matrix) -> Vec<f64> {
    (0..m.nrows()).map(|i| m.row(i).norm()).collect()
}

/// Indices of the `count` largest values, ties broken by lower index.
fn top_rows(norms: &[f64], candidates: impl Iterator<Item = usize>, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = candidates.collect();
    idx.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    idx.truncate(count);
    idx.sort_unstable();
    idx
}

/// Leading basis of `m` restricted to `rows`; other rows of the basis are exactly zero.
fn restricted_basis(m: &Matrix, rows: &[usize], r: usize) -> Result<(OrthonormalBasis, bool)> {
    let sub = Matrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)]);
    let (basis, padded) = leading_basis(&sub, r)?;
    let mut full = Matrix::zeros(m.nrows(), r);
    for (i, &row) in rows.iter().enumerate() {
        full.set_row(row, &basis.matrix().row(i));
    }
    Ok((OrthonormalBasis::trusted(full), padded))
}

struct RowThreshold {
    level: usize,
    sigma: f64,
}

impl RowThreshold {
    fn select_initial(&self, m: &Matrix) -> Vec<usize> {
        let norms = row_norms(m);
        top_rows(&norms, 0..m.nrows(), self.level)
    }

    /// Double projection: rows are scored on `Z V_r` where `V_r` holds the
    /// leading right singular vectors of `Z`. Rows below the noise threshold
    /// are dropped and at most `level` survivors are kept; if fewer than `r`
    /// survive, the `r` strongest rows are used regardless.
    fn select(&self, z: &Matrix, r: usize) -> Result<Vec<usize>> {
        let p = z.nrows();
        let svd = thin_svd(z, r)?;
        let scores = row_norms(&(z * svd.v.matrix()));
        let cutoff = self.sigma * ((r as f64) + 2.0 * (p as f64).ln()).sqrt();
        let survivors: Vec<usize> = (0..p).filter(|&i| scores[i] > cutoff).collect();
        if survivors.len() >= r {
            Ok(top_rows(&scores, survivors.into_iter(), self.level))
        } else {
            Ok(top_rows(&scores, 0..p, r))
        }
    }
}

fn run_sweeps(t: &DenseTensor, cfg: &HooiConfig, sparse: bool) -> Result<TuckerFactorization> {
    cfg.validate(t.dims())?;
    if !t.is_finite() {
        return Err(IsletError::NonFinite("decomposition input".into()));
    }
    let d = t.order();
    let sigma = if sparse && !cfg.sparse_modes().is_empty() {
        median_noise_level(t)
    } else {
        0.0
    };
    let thresholds: Vec<Option<RowThreshold>> = (0..d)
        .map(|k| {
            sparse
                .then(|| cfg.sparsity_level(k))
                .flatten()
                .map(|level| RowThreshold { level, sigma })
        })
        .collect();

    let mut padded = false;
    let mut factors = Vec::with_capacity(d);
    for k in 0..d {
        let m = matricize(t, k)?;
        let (basis, pad) = match &thresholds[k] {
            Some(th) => restricted_basis(&m, &th.select_initial(&m), cfg.ranks[k])?,
            None => leading_basis(&m, cfg.ranks[k])?,
        };
        padded |= pad;
        factors.push(basis);
    }

    let objective = |factors: &[OrthonormalBasis]| -> Result<f64> {
        let mats: Vec<&Matrix> = factors.iter().map(OrthonormalBasis::matrix).collect();
        Ok(project(t, &mats, None)?.norm())
    };
    let mut trace = vec![objective(&factors)?];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        let mut change = 0.0f64;
        let mut sweep_padded = false;
        for k in 0..d {
            let mats: Vec<&Matrix> = factors.iter().map(OrthonormalBasis::matrix).collect();
            let z = matricize(&project(t, &mats, Some(k))?, k)?;
            let (basis, pad) = match &thresholds[k] {
                Some(th) => restricted_basis(&z, &th.select(&z, cfg.ranks[k])?, cfg.ranks[k])?,
                None => leading_basis(&z, cfg.ranks[k])?,
            };
            sweep_padded |= pad;
            change = change.max(sin_theta(&basis, &factors[k])?);
            factors[k] = basis;
        }
        padded = sweep_padded;
        trace.push(objective(&factors)?);
        if change < cfg.tol {
            converged = true;
            break;
        }
    }

    let mats: Vec<&Matrix> = factors.iter().map(OrthonormalBasis::matrix).collect();
    let core = project(t, &mats, None)?;
    Ok(TuckerFactorization {
        core,
        factors,
        objective_trace: trace,
        iterations,
        converged,
        padded,
    })
}

/// Higher-order orthogonal iteration started from [`hosvd_init`]. The
/// sparsity field of `cfg` is ignored.
pub fn hooi(t: &DenseTensor, cfg: &HooiConfig) -> Result<TuckerFactorization> {
    run_sweeps(t, cfg, false)
}

/// HOOI with row-sparse factors on the modes listed in `cfg.sparsity`.
/// With no sparse modes this is exactly [`hooi`].
pub fn sparse_hooi(t: &DenseTensor, cfg: &HooiConfig) -> Result<TuckerFactorization> {
    run_sweeps(t, cfg, true)
}
