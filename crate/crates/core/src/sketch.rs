//! Sketching directions and per-sample sketched covariates.
//!
//! For mode `k` the right directions are `W_k = (U_d (x) ... (x) U_1)_{l != k} V_k`,
//! an orthonormal basis of a subspace of the mode-k unfolding's row space.
//! A covariate `X` maps to a body block `vec(X x_1 U_1^T ... x_d U_d^T)` and,
//! per mode, the arm `Z_k = M_k(X x_{l != k} U_l^T) V_k = M_k(X) W_k`.
//! Regular systems use the complement part `U_k_perp^T Z_k`; sparse systems
//! keep `Z_k` whole.

use std::ops::Range;

use crate::error::{IsletError, Result};
use crate::tensor::{
    kron_except, matricize, mode_product_t, project, qr_orth, DenseTensor, Matrix,
    OrthonormalBasis,
};

#[derive(Clone, Debug)]
pub struct SketchBasis {
    u: Vec<OrthonormalBasis>,
    u_perp: Vec<Matrix>,
    v: Vec<OrthonormalBasis>,
    /// Whether any `U_k` was padded because the probed tensor had too low a rank.
    pub padded: bool,
}

impl SketchBasis {
    pub fn new(u: Vec<OrthonormalBasis>, v: Vec<OrthonormalBasis>) -> Result<Self> {
        let d = u.len();
        if d < 2 || v.len() != d {
            return Err(IsletError::arg(format!(
                "need matching factor lists of length >= 2, got {} and {}",
                d,
                v.len()
            )));
        }
        let ranks: Vec<usize> = u.iter().map(OrthonormalBasis::rank).collect();
        let total: usize = ranks.iter().product();
        for k in 0..d {
            let expected = (total / ranks[k], ranks[k]);
            if (v[k].dim(), v[k].rank()) != expected {
                return Err(IsletError::arg(format!(
                    "V_{k} is {}x{}, expected {}x{}",
                    v[k].dim(),
                    v[k].rank(),
                    expected.0,
                    expected.1
                )));
            }
        }
        let u_perp = u.iter().map(OrthonormalBasis::complement).collect();
        Ok(Self {
            u,
            u_perp,
            v,
            padded: false,
        })
    }

    /// Builds the right directions from the probed core `S = [[cov; U_1^T, ..., U_d^T]]`
    /// as `V_k = QR(M_k(S)^T)`. Matrices (`d = 2`) use `V_k = I`.
    pub fn from_factors(u: Vec<OrthonormalBasis>, cov: &DenseTensor) -> Result<Self> {
        if u.len() != cov.order() {
            return Err(IsletError::arg("factor count does not match tensor order"));
        }
        if u.len() == 2 {
            let r = u[0].rank();
            if u[1].rank() != r {
                return Err(IsletError::arg("matrix sketches need equal ranks"));
            }
            return Self::new(u, vec![OrthonormalBasis::identity(r), OrthonormalBasis::identity(r)]);
        }
        let mats: Vec<&Matrix> = u.iter().map(OrthonormalBasis::matrix).collect();
        let core = project(cov, &mats, None)?;
        let v = (0..cov.order())
            .map(|k| {
                qr_orth(&matricize(&core, k)?.transpose()).map_err(|e| match e {
                    IsletError::Degenerate { condition, .. } => IsletError::Degenerate {
                        what: format!("probed core unfolding in mode {k}"),
                        condition,
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(u, v)
    }

    pub fn order(&self) -> usize {
        self.u.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.u.iter().map(OrthonormalBasis::dim).collect()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.u.iter().map(OrthonormalBasis::rank).collect()
    }

    pub fn u(&self, k: usize) -> &OrthonormalBasis {
        &self.u[k]
    }

    pub fn u_all(&self) -> &[OrthonormalBasis] {
        &self.u
    }

    pub fn u_perp(&self, k: usize) -> &Matrix {
        &self.u_perp[k]
    }

    pub fn v(&self, k: usize) -> &OrthonormalBasis {
        &self.v[k]
    }

    /// `W_k`, of shape `prod_{l != k} p_l x r_k`.
    pub fn w(&self, k: usize) -> Matrix {
        let mats: Vec<&Matrix> = self.u.iter().map(OrthonormalBasis::matrix).collect();
        kron_except(&mats, k) * self.v[k].matrix()
    }

    pub fn layout(&self) -> BlockLayout {
        let ranks = self.ranks();
        BlockLayout {
            body: ranks.iter().product(),
            arms: self
                .u
                .iter()
                .map(|b| (b.dim() - b.rank()) * b.rank())
                .collect(),
        }
    }

    /// Body block and full arms `Z_k` of one covariate.
    pub fn sketch(&self, x: &DenseTensor) -> Result<SampleSketch> {
        let dims = self.dims();
        if x.dims() != dims.as_slice() {
            return Err(IsletError::arg(format!(
                "covariate dims {:?} do not match sketch dims {dims:?}",
                x.dims()
            )));
        }
        let mats: Vec<&Matrix> = self.u.iter().map(OrthonormalBasis::matrix).collect();
        let d = self.order();
        let mut arms = Vec::with_capacity(d);
        let mut body = None;
        for k in 0..d {
            let partial = project(x, &mats, Some(k))?;
            if k == 0 {
                body = Some(mode_product_t(&partial, mats[0], 0)?);
            }
            arms.push(matricize(&partial, k)? * self.v[k].matrix());
        }
        Ok(SampleSketch {
            body: body.expect("order >= 2").into_data(),
            arms,
        })
    }

    /// Writes one row of the regular sketched design into `out`.
    pub fn regular_row(&self, sketch: &SampleSketch, out: &mut [f64]) {
        let layout = self.layout();
        debug_assert_eq!(out.len(), layout.width());
        out[..layout.body].copy_from_slice(&sketch.body);
        for (k, z) in sketch.arms.iter().enumerate() {
            let d = self.u_perp[k].tr_mul(z);
            let range = layout.arm_range(k);
            out[range].copy_from_slice(d.as_slice());
        }
    }
}

/// Sketched covariates of one sample.
#[derive(Clone, Debug)]
pub struct SampleSketch {
    pub body: Vec<f64>,
    /// `Z_k`, `p_k x r_k`.
    pub arms: Vec<Matrix>,
}

/// Column layout `[body | D_1 | ... | D_d]` of a regular sketched design.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockLayout {
    pub body: usize,
    pub arms: Vec<usize>,
}

impl BlockLayout {
    pub fn width(&self) -> usize {
        self.body + self.arms.iter().sum::<usize>()
    }

    pub fn arm_range(&self, k: usize) -> Range<usize> {
        let start = self.body + self.arms[..k].iter().sum::<usize>();
        start..start + self.arms[k]
    }

    /// Name of the block that owns column `col`.
    pub fn block_name(&self, col: usize) -> String {
        if col < self.body {
            return "body block".into();
        }
        (0..self.arms.len())
            .find(|&k| self.arm_range(k).contains(&col))
            .map(|k| format!("arm block of mode {k}"))
            .unwrap_or_else(|| "unknown block".into())
    }
}

/// Dense reduced design with its response.
#[derive(Clone, Debug)]
pub struct SketchedSystem {
    pub design: Matrix,
    pub response: crate::tensor::Vector,
    pub layout: BlockLayout,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{kron, multilinear, row_permute, vec};

    fn pseudo_random(dims: &[usize], salt: u64) -> DenseTensor {
        let mut state = salt.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        DenseTensor::from_fn(dims, |_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
    }

    fn random_basis(p: usize, r: usize, salt: u64) -> OrthonormalBasis {
        let t = pseudo_random(&[p, r], salt);
        qr_orth(&matricize(&t, 0).unwrap()).unwrap()
    }

    fn basis_633() -> SketchBasis {
        let u = vec![random_basis(5, 2, 1), random_basis(4, 2, 2), random_basis(3, 2, 3)];
        let cov = pseudo_random(&[5, 4, 3], 4);
        SketchBasis::from_factors(u, &cov).unwrap()
    }

    #[test]
    fn w_is_orthonormal() {
        let b = basis_633();
        for k in 0..3 {
            let w = b.w(k);
            assert_eq!(w.shape(), (b.dims().iter().product::<usize>() / b.dims()[k], 2));
            assert!(crate::tensor::orthonormality_error(&w) < 1e-10);
        }
    }

    #[test]
    fn degrees_of_freedom() {
        let u = vec![random_basis(2, 1, 1), random_basis(2, 1, 2), random_basis(2, 1, 3)];
        let b = SketchBasis::from_factors(u, &pseudo_random(&[2, 2, 2], 9)).unwrap();
        assert_eq!(b.layout().width(), 4);
        let b = basis_633();
        assert_eq!(b.layout().width(), 8 + 3 * 2 + 2 * 2 + 1 * 2);
    }

    #[test]
    fn covariate_in_sketch_span_has_zero_arms() {
        let b = basis_633();
        let g = pseudo_random(&[2, 2, 2], 5);
        let mats: Vec<&Matrix> = b.u_all().iter().map(OrthonormalBasis::matrix).collect();
        let x = multilinear(&g, &mats).unwrap();
        let s = b.sketch(&x).unwrap();
        let mut row = vec![0.0; b.layout().width()];
        b.regular_row(&s, &mut row);
        for (a, e) in row[..8].iter().zip(g.data()) {
            assert!((a - e).abs() < 1e-12);
        }
        assert!(row[8..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rows_match_kronecker_oracle() {
        let b = basis_633();
        let x = pseudo_random(&[5, 4, 3], 6);
        let s = b.sketch(&x).unwrap();
        let mut row = vec![0.0; b.layout().width()];
        b.regular_row(&s, &mut row);
        let dims = b.dims();
        let vx = vec(&x);
        let u: Vec<&Matrix> = b.u_all().iter().map(OrthonormalBasis::matrix).collect();
        let body = (kron(&kron(u[2], u[1]), u[0])).transpose() * &vx;
        for (a, e) in row[..8].iter().zip(body.iter()) {
            assert!((a - e).abs() < 1e-12);
        }
        for k in 0..3 {
            // vec(U_perp^T M_k(X) W_k) = R_k(W_k (x) U_perp)^T vec(X)
            let op = row_permute(k, &kron(&b.w(k), b.u_perp(k)), &dims).unwrap();
            let expected = op.transpose() * &vx;
            let got = &row[b.layout().arm_range(k)];
            for (a, e) in got.iter().zip(expected.iter()) {
                assert!((a - e).abs() < 1e-12, "mode {k}");
            }
            // full arm agrees with M_k(X) W_k
            let direct = matricize(&x, k).unwrap() * b.w(k);
            assert!((&s.arms[k] - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn matrix_case_uses_identity_rotations() {
        let u = vec![random_basis(5, 2, 1), random_basis(4, 2, 2)];
        let b = SketchBasis::from_factors(u.clone(), &pseudo_random(&[5, 4], 3)).unwrap();
        assert_eq!(b.v(0).matrix(), &Matrix::identity(2, 2));
        assert!((b.w(0) - u[1].matrix()).norm() == 0.0);
        assert!((b.w(1) - u[0].matrix()).norm() == 0.0);
    }

    #[test]
    fn mismatched_covariate_rejected() {
        let b = basis_633();
        assert!(b.sketch(&DenseTensor::zeros(&[5, 4, 4])).is_err());
    }

    #[test]
    fn block_names() {
        let l = BlockLayout { body: 8, arms: vec![6, 4, 2] };
        assert_eq!(l.block_name(3), "body block");
        assert_eq!(l.block_name(9), "arm block of mode 0");
        assert_eq!(l.block_name(19), "arm block of mode 2");
    }
}
