//! Tucker-rank screening from an over-ranked fit.
//!
//! For mode `k`, let `L_k` be the unnormalized factor numerator
//! (`U_k B_k V_k + U_k_perp D_k` in the regular fit, `E_k` in the sparse fit).
//! Rotating by the left singular vectors `U^B` of `B_k` and the right singular
//! vectors `V^A` of `L_k` gives `A_k = L_k V^A` and `J_k = U^B^T (B_k V_k) V^A`.
//! The selected rank is the largest `s` whose leading block `J_k[:s, :s]` is
//! nonsingular with `|A_k[:, :s] J_k[:s, :s]^{-1}|` at most the threshold.

use crate::decomposition::HooiConfig;
use crate::error::{IsletError, Result};
use crate::islet::{assemble, body_rotations, fit_reduced, split_gamma, IsletEstimate};
use crate::sketch::SketchBasis;
use crate::source::SampleSource;
use crate::sparse::{assemble_sparse, fit_sparse_reduced, PenaltyPolicy, SparseIsletEstimate, SparseReducedFit};
use crate::tensor::{singular_values, spectral_norm, thin_svd, DenseTensor, Matrix, Vector};

/// Relative singularity cutoff for the leading blocks of `J_k`.
pub const SINGULAR_CUTOFF: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct RankSelectConfig {
    pub r_ini: Vec<usize>,
    /// Bound on the spectral norm of the assembled factor.
    pub threshold: f64,
    /// Per-mode sparsity levels; `None` selects the regular estimator.
    pub sparsity: Option<Vec<Option<usize>>>,
    pub penalty: PenaltyPolicy,
    pub split: Option<f64>,
}

impl RankSelectConfig {
    pub fn new(r_ini: Vec<usize>) -> Self {
        Self {
            r_ini,
            threshold: 3.0,
            sparsity: None,
            penalty: PenaltyPolicy::default(),
            split: None,
        }
    }

    fn hooi_config(&self, ranks: Vec<usize>) -> HooiConfig {
        let cfg = HooiConfig::new(ranks);
        match &self.sparsity {
            Some(levels) => cfg.with_sparsity(levels.clone()),
            None => cfg,
        }
    }
}

/// The pieces of a fit that the screen needs.
#[derive(Clone, Debug)]
pub struct RankArtifacts {
    pub basis: SketchBasis,
    pub b_hat: DenseTensor,
    /// `L_k` per mode, `p_k x r_k`.
    pub numerators: Vec<Matrix>,
}

impl RankArtifacts {
    pub fn regular(basis: &SketchBasis, gamma: &Vector) -> Result<Self> {
        let (b_hat, d_hat) = split_gamma(gamma, basis)?;
        let rotations = body_rotations(&b_hat, basis)?;
        let numerators = (0..basis.order())
            .map(|k| basis.u(k).matrix() * &rotations[k] + basis.u_perp(k) * &d_hat[k])
            .collect();
        Ok(Self {
            basis: basis.clone(),
            b_hat,
            numerators,
        })
    }

    pub fn sparse(fit: &SparseReducedFit) -> Self {
        Self {
            basis: fit.basis.clone(),
            b_hat: fit.b_hat.clone(),
            numerators: fit.modes.iter().map(|m| m.e_hat.clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankSelection {
    pub ranks: Vec<usize>,
    /// Some rank was lowered to the product of the others.
    pub clamped: bool,
}

/// Largest passing `s` for one mode, 0 if none passes.
pub fn screen_mode(a: &Matrix, j: &Matrix, threshold: f64) -> usize {
    let top = spectral_norm(j);
    if !(top > 0.0) {
        return 0;
    }
    for s in (1..=j.nrows()).rev() {
        let js = j.view((0, 0), (s, s)).into_owned();
        let smin = singular_values(&js).last().copied().unwrap_or(0.0);
        if smin <= SINGULAR_CUTOFF * top {
            continue;
        }
        let Some(inv) = js.try_inverse() else { continue };
        if spectral_norm(&(a.columns(0, s) * inv)) <= threshold {
            return s;
        }
    }
    0
}

/// `(A_k, J_k)` for mode `k`.
pub fn cross_matrices(art: &RankArtifacts, k: usize) -> Result<(Matrix, Matrix)> {
    let bk = crate::tensor::matricize(&art.b_hat, k)?;
    let r = bk.nrows();
    let ub = thin_svd(&bk, r)?.u;
    let numerator = &art.numerators[k];
    let va = thin_svd(numerator, r)?.v;
    let a = numerator * va.matrix();
    let j = ub.matrix().transpose() * (&bk * art.basis.v(k).matrix()) * va.matrix();
    Ok((a, j))
}

pub fn select_rank(art: &RankArtifacts, threshold: f64) -> Result<RankSelection> {
    let mut ranks = Vec::with_capacity(art.basis.order());
    for k in 0..art.basis.order() {
        let bk = crate::tensor::matricize(&art.b_hat, k)?;
        if bk.iter().all(|&v| v == 0.0) {
            ranks.push(0);
            continue;
        }
        let (a, j) = cross_matrices(art, k)?;
        ranks.push(screen_mode(&a, &j, threshold));
    }
    let (ranks, clamped) = clamp_ranks(ranks);
    Ok(RankSelection { ranks, clamped })
}

/// Lowers each `r_k` to `prod_{l != k} r_l` until the ranks are feasible.
pub fn clamp_ranks(mut ranks: Vec<usize>) -> (Vec<usize>, bool) {
    let mut clamped = false;
    loop {
        let mut changed = false;
        for k in 0..ranks.len() {
            let others: usize = ranks.iter().enumerate().filter(|&(l, _)| l != k).map(|(_, &r)| r).product();
            if ranks[k] > others {
                ranks[k] = others;
                changed = true;
            }
        }
        if !changed {
            return (ranks, clamped);
        }
        clamped = true;
    }
}

#[derive(Clone, Debug)]
pub enum RefitEstimate {
    Regular(Box<IsletEstimate>),
    Sparse(Box<SparseIsletEstimate>),
}

impl RefitEstimate {
    pub fn a_hat(&self) -> &DenseTensor {
        match self {
            RefitEstimate::Regular(e) => &e.a_hat,
            RefitEstimate::Sparse(e) => &e.a_hat,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RankSelectOutcome {
    pub selection: RankSelection,
    /// `None` when some selected rank is 0; the estimate is then the zero tensor.
    pub estimate: Option<RefitEstimate>,
    pub a_hat: DenseTensor,
}

impl RankSelectOutcome {
    pub fn ranks(&self) -> &[usize] {
        &self.selection.ranks
    }

    pub fn is_zero(&self) -> bool {
        self.estimate.is_none()
    }
}

/// Over-fits at `r_ini`, screens the ranks, and refits at the selected ranks.
pub fn fit_with_rank_selection(src: &dyn SampleSource, cfg: &RankSelectConfig) -> Result<RankSelectOutcome> {
    let over = cfg.hooi_config(cfg.r_ini.clone());
    over.validate(src.dims())?;
    if !(cfg.threshold > 0.0) {
        return Err(IsletError::arg("rank screen threshold must be positive"));
    }
    let artifacts = if cfg.sparsity.is_some() {
        RankArtifacts::sparse(&fit_sparse_reduced(src, &over, &cfg.penalty, cfg.split)?)
    } else {
        let reduced = fit_reduced(src, &over, cfg.split)?;
        RankArtifacts::regular(&reduced.basis, &reduced.fit.gamma)?
    };
    let selection = select_rank(&artifacts, cfg.threshold)?;
    if selection.ranks.iter().any(|&r| r == 0) {
        return Ok(RankSelectOutcome {
            selection,
            estimate: None,
            a_hat: DenseTensor::zeros(src.dims()),
        });
    }
    let refit_cfg = cfg.hooi_config(selection.ranks.clone());
    let refit_cfg = match &refit_cfg.sparsity {
        // sparsity levels below the selected rank are raised to it
        Some(levels) => {
            let levels = levels
                .iter()
                .zip(&selection.ranks)
                .map(|(s, &r)| s.map(|s| s.max(r)))
                .collect();
            HooiConfig { sparsity: Some(levels), ..refit_cfg }
        }
        None => refit_cfg,
    };
    let estimate = if cfg.sparsity.is_some() {
        let reduced = fit_sparse_reduced(src, &refit_cfg, &cfg.penalty, cfg.split)?;
        RefitEstimate::Sparse(Box::new(assemble_sparse(reduced)?))
    } else {
        let reduced = fit_reduced(src, &refit_cfg, cfg.split)?;
        let mut est = assemble(&reduced.fit.gamma, &reduced.basis)?;
        est.diagnostics.residual_norm = reduced.fit.residual_norm;
        est.diagnostics.gram_condition = reduced.fit.condition * reduced.fit.condition;
        RefitEstimate::Regular(Box::new(est))
    };
    Ok(RankSelectOutcome {
        selection,
        a_hat: estimate.a_hat().clone(),
        estimate: Some(estimate),
    })
}
