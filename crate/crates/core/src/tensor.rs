//! Dense tensor algebra.
//!
//! Tensors are stored column-major: the entry at multi-index
//! `(i_1, ..., i_d)` (0-based) lives at `i_1 + i_2 p_1 + ... + i_d p_1...p_{d-1}`.
//! Mode-k matricization places mode k on the rows and orders the remaining
//! modes on the columns with the lowest mode varying fastest, so the mode-0
//! unfolding is the raw buffer reinterpreted as a `p_0 x p_-0` matrix.
//!
//! Modes are 0-based throughout the crate.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector};

use crate::error::{IsletError, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Order-d dense array of `f64` in column-major layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(IsletError::arg("tensor must have at least one mode"));
    }
    if dims.iter().any(|&p| p == 0) {
        return Err(IsletError::arg(format!("zero-length mode in dims {dims:?}")));
    }
    Ok(dims.iter().product())
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_dims(&dims)?;
        if data.len() != len {
            return Err(IsletError::arg(format!(
                "buffer of length {} does not match dims {:?} (expected {len})",
                data.len(),
                dims
            )));
        }
        Ok(Self { dims, data })
    }

    /// All-zero tensor. Panics if `dims` is empty or contains a zero.
    pub fn zeros(dims: &[usize]) -> Self {
        let len = check_dims(dims).expect("invalid tensor dims");
        Self {
            dims: dims.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// Builds a tensor by evaluating `f` at every multi-index in storage order.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(dims);
        let mut idx = vec![0usize; dims.len()];
        for slot in t.data.iter_mut() {
            *slot = f(&idx);
            for (i, &p) in idx.iter_mut().zip(dims) {
                *i += 1;
                if *i < p {
                    break;
                }
                *i = 0;
            }
        }
        t
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut offset = 0;
        let mut stride = 1;
        for (&i, &p) in idx.iter().zip(&self.dims) {
            debug_assert!(i < p);
            offset += i * stride;
            stride *= p;
        }
        offset
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let at = self.linear_index(idx);
        self.data[at] = value;
    }

    /// Hilbert-Schmidt (Frobenius) norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &DenseTensor) -> f64 {
        debug_assert_eq!(self.dims, other.dims);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &DenseTensor) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn sub(&self, other: &DenseTensor) -> DenseTensor {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Column-major vectorization.
    pub fn vectorize(&self) -> Vector {
        Vector::from_column_slice(&self.data)
    }

    fn split_at_mode(&self, mode: usize) -> (usize, usize, usize) {
        let left: usize = self.dims[..mode].iter().product();
        let right: usize = self.dims[mode + 1..].iter().product();
        (left, self.dims[mode], right)
    }
}

fn check_mode(order: usize, mode: usize) -> Result<()> {
    if mode >= order {
        return Err(IsletError::arg(format!(
            "mode {mode} out of range for order-{order} tensor"
        )));
    }
    Ok(())
}

/// Mode-k unfolding `M_k(t)` of shape `p_k x prod_{l != k} p_l`.
pub fn matricize(t: &DenseTensor, mode: usize) -> Result<Matrix> {
    check_mode(t.order(), mode)?;
    let (left, pk, right) = t.split_at_mode(mode);
    if mode == 0 {
        return Ok(Matrix::from_column_slice(pk, right, &t.data));
    }
    let mut m = Matrix::zeros(pk, left * right);
    for b in 0..right {
        for i in 0..pk {
            let src = &t.data[left * (i + pk * b)..left * (i + pk * b) + left];
            for (a, &v) in src.iter().enumerate() {
                m[(i, a + left * b)] = v;
            }
        }
    }
    Ok(m)
}

/// Inverse of [`matricize`].
pub fn tensorize(m: &Matrix, dims: &[usize], mode: usize) -> Result<DenseTensor> {
    let len = check_dims(dims)?;
    check_mode(dims.len(), mode)?;
    let pk = dims[mode];
    if m.nrows() != pk || m.ncols() * pk != len {
        return Err(IsletError::arg(format!(
            "{}x{} matrix cannot be folded into dims {dims:?} along mode {mode}",
            m.nrows(),
            m.ncols()
        )));
    }
    let left: usize = dims[..mode].iter().product();
    let right: usize = dims[mode + 1..].iter().product();
    let mut data = vec![0.0; len];
    if mode == 0 {
        data.copy_from_slice(m.as_slice());
    } else {
        for b in 0..right {
            for i in 0..pk {
                let dst = &mut data[left * (i + pk * b)..left * (i + pk * b) + left];
                for (a, slot) in dst.iter_mut().enumerate() {
                    *slot = m[(i, a + left * b)];
                }
            }
        }
    }
    DenseTensor::new(dims.to_vec(), data)
}

/// Column-major vectorization `vec(t)`.
pub fn vec(t: &DenseTensor) -> Vector {
    t.vectorize()
}

fn contract(t: &DenseTensor, u: &Matrix, mode: usize, transpose: bool) -> Result<DenseTensor> {
    check_mode(t.order(), mode)?;
    let (left, pk, right) = t.split_at_mode(mode);
    let (inner, outer) = if transpose {
        (u.nrows(), u.ncols())
    } else {
        (u.ncols(), u.nrows())
    };
    if inner != pk {
        return Err(IsletError::arg(format!(
            "cannot contract mode {mode} of length {pk} with a {}x{} matrix{}",
            u.nrows(),
            u.ncols(),
            if transpose { " (transposed)" } else { "" }
        )));
    }
    let mut dims = t.dims.clone();
    dims[mode] = outer;
    let mut out = vec![0.0; left * outer * right];
    if mode == 0 {
        let src = DMatrixView::from_slice(&t.data, pk, right);
        let mut dst = DMatrixViewMut::from_slice(&mut out, outer, right);
        if transpose {
            dst.gemm_tr(1.0, u, &src, 0.0);
        } else {
            dst.gemm(1.0, u, &src, 0.0);
        }
    } else {
        let factor = if transpose { u.clone() } else { u.transpose() };
        for b in 0..right {
            let src = DMatrixView::from_slice(&t.data[b * left * pk..(b + 1) * left * pk], left, pk);
            let mut dst = DMatrixViewMut::from_slice(
                &mut out[b * left * outer..(b + 1) * left * outer],
                left,
                outer,
            );
            dst.gemm(1.0, &src, &factor, 0.0);
        }
    }
    DenseTensor::new(dims, out)
}

/// k-mode product `t x_k u`: contracts mode k of `t` with the columns of
/// `u`, so that `M_k(result) = u * M_k(t)`.
pub fn mode_product(t: &DenseTensor, u: &Matrix, mode: usize) -> Result<DenseTensor> {
    contract(t, u, mode, false)
}

/// `t x_k u^T` without materializing the transpose.
pub fn mode_product_t(t: &DenseTensor, u: &Matrix, mode: usize) -> Result<DenseTensor> {
    contract(t, u, mode, true)
}

/// `[[t; f_1, ..., f_d]] = t x_1 f_1 x_2 ... x_d f_d`.
pub fn multilinear(t: &DenseTensor, factors: &[&Matrix]) -> Result<DenseTensor> {
    if factors.len() != t.order() {
        return Err(IsletError::arg(format!(
            "{} factors for an order-{} tensor",
            factors.len(),
            t.order()
        )));
    }
    let mut out = t.clone();
    for (k, f) in factors.iter().enumerate() {
        out = mode_product(&out, f, k)?;
    }
    Ok(out)
}

/// `t x_l u_l^T` over every mode `l` except `skip` (pass `None` to project
/// all modes).
pub fn project(t: &DenseTensor, bases: &[&Matrix], skip: Option<usize>) -> Result<DenseTensor> {
    if bases.len() != t.order() {
        return Err(IsletError::arg(format!(
            "{} bases for an order-{} tensor",
            bases.len(),
            t.order()
        )));
    }
    let mut out: Option<DenseTensor> = None;
    for (k, u) in bases.iter().enumerate() {
        if Some(k) == skip {
            continue;
        }
        out = Some(mode_product_t(out.as_ref().unwrap_or(t), u, k)?);
    }
    Ok(out.unwrap_or_else(|| t.clone()))
}

/// Kronecker product with the block layout `[a_ij * b]`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// `m_1 (x) m_2 (x) ... (x) m_q` in the order given.
pub fn kron_all(mats: &[&Matrix]) -> Matrix {
    let mut it = mats.iter();
    let Some(first) = it.next() else {
        return Matrix::identity(1, 1);
    };
    it.fold((*first).clone(), |acc, m| acc.kronecker(*m))
}

/// Kronecker product of `mats[l]` over `l != skip` in descending mode order,
/// the factor that maps between `M_k(t)` columns and the other modes.
pub fn kron_except(mats: &[&Matrix], skip: usize) -> Matrix {
    let ordered: Vec<&Matrix> = (0..mats.len())
        .rev()
        .filter(|&l| l != skip)
        .map(|l| mats[l])
        .collect();
    kron_all(&ordered)
}

fn permutation_source(mode: usize, dims: [usize; 3], row: usize) -> usize {
    let [p1, p2, p3] = dims;
    let i1 = row % p1;
    let i2 = (row / p1) % p2;
    let i3 = row / (p1 * p2);
    match mode {
        0 => row,
        1 => i2 + i1 * p2 + i3 * p2 * p1,
        _ => i3 + i1 * p3 + i2 * p1 * p3,
    }
}

fn order3(mode: usize, m: &Matrix, dims: &[usize]) -> Result<[usize; 3]> {
    let [p1, p2, p3] = <[usize; 3]>::try_from(dims)
        .map_err(|_| IsletError::arg(format!("row permutation needs order-3 dims, got {dims:?}")))?;
    check_mode(3, mode)?;
    if m.nrows() != p1 * p2 * p3 {
        return Err(IsletError::arg(format!(
            "row permutation expects {} rows, got {}",
            p1 * p2 * p3,
            m.nrows()
        )));
    }
    Ok([p1, p2, p3])
}

/// Reorders the rows of `w_k (x) u_k` (indexed as `vec(M_k(t))`) so that
/// row `i` lines up with entry `i` of `vec(t)`. Mode 0 is the identity.
pub fn row_permute(mode: usize, m: &Matrix, dims: &[usize]) -> Result<Matrix> {
    let dims = order3(mode, m, dims)?;
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for row in 0..m.nrows() {
        out.set_row(row, &m.row(permutation_source(mode, dims, row)));
    }
    Ok(out)
}

/// Inverse of [`row_permute`].
pub fn row_permute_inverse(mode: usize, m: &Matrix, dims: &[usize]) -> Result<Matrix> {
    let dims = order3(mode, m, dims)?;
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for row in 0..m.nrows() {
        out.set_row(permutation_source(mode, dims, row), &m.row(row));
    }
    Ok(out)
}

/// Matrix with orthonormal columns (an element of `O_{p,r}`).
#[derive(Clone, Debug, PartialEq)]
pub struct OrthonormalBasis(Matrix);

impl OrthonormalBasis {
    /// Frobenius tolerance on `U^T U - I`.
    pub const TOLERANCE: f64 = 1e-10;

    pub fn new(m: Matrix) -> Result<Self> {
        if m.ncols() > m.nrows() {
            return Err(IsletError::arg(format!(
                "{}x{} matrix cannot have orthonormal columns",
                m.nrows(),
                m.ncols()
            )));
        }
        let err = orthonormality_error(&m);
        if err > Self::TOLERANCE {
            return Err(IsletError::arg(format!(
                "columns are not orthonormal (|U^T U - I|_F = {err:e})"
            )));
        }
        Ok(Self(m))
    }

    pub(crate) fn trusted(m: Matrix) -> Self {
        debug_assert!(orthonormality_error(&m) < 1e-8);
        Self(m)
    }

    pub fn identity(r: usize) -> Self {
        Self(Matrix::identity(r, r))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Ambient dimension `p`.
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Number of columns `r`.
    pub fn rank(&self) -> usize {
        self.0.ncols()
    }

    /// `U U^T`.
    pub fn projector(&self) -> Matrix {
        &self.0 * self.0.transpose()
    }

    /// Orthonormal basis `U_perp` of the orthogonal complement, `p x (p - r)`.
    pub fn complement(&self) -> Matrix {
        let (p, r) = self.0.shape();
        if r == p {
            return Matrix::zeros(p, 0);
        }
        let mut aug = Matrix::zeros(p, r + p);
        aug.view_mut((0, 0), (p, r)).copy_from(&self.0);
        aug.view_mut((0, r), (p, p)).fill_with_identity();
        let q = aug.qr().q();
        q.columns(r, p - r).into_owned()
    }

    /// Right-multiplies by a square orthogonal matrix.
    pub fn rotate(&self, q: &Matrix) -> Result<Self> {
        Self::new(&self.0 * q)
    }
}

/// `|U^T U - I|_F`.
pub fn orthonormality_error(m: &Matrix) -> f64 {
    let g = m.transpose() * m;
    (g - Matrix::identity(m.ncols(), m.ncols())).norm()
}

/// Leading part of a singular value decomposition.
#[derive(Clone, Debug)]
pub struct ThinSvd {
    pub u: OrthonormalBasis,
    pub singular_values: Vec<f64>,
    pub v: OrthonormalBasis,
}

/// Singular values in non-increasing order.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn spectral_norm(m: &Matrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// 2-norm condition number; infinite for singular or empty input.
pub fn condition_number(m: &Matrix) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Leading `r` singular triplets, `SVD_r(m)`.
///
/// Each left singular vector is signed so its largest-magnitude entry (lowest
/// index on ties) is positive; the matching right vector flips with it.
pub fn thin_svd(m: &Matrix, rank: usize) -> Result<ThinSvd> {
    let (rows, cols) = m.shape();
    if rank == 0 || rank > rows.min(cols) {
        return Err(IsletError::arg(format!(
            "rank {rank} out of range for a {rows}x{cols} matrix"
        )));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(IsletError::NonFinite("SVD input".into()));
    }
    let svd = m.clone().svd(true, true);
    let (Some(u_full), Some(vt_full)) = (svd.u, svd.v_t) else {
        return Err(IsletError::Degenerate {
            what: "SVD backend".into(),
            condition: f64::INFINITY,
        });
    };
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut u = Matrix::zeros(rows, rank);
    let mut v = Matrix::zeros(cols, rank);
    let mut s = Vec::with_capacity(rank);
    for (j, &src) in order.iter().take(rank).enumerate() {
        let mut ucol = u_full.column(src).into_owned();
        let mut vcol = vt_full.row(src).transpose();
        // near-ties within rounding count as ties so the lowest index wins
        let largest = ucol.amax();
        let pivot = ucol
            .iter()
            .copied()
            .find(|x| x.abs() >= largest * (1.0 - 1e-12))
            .unwrap_or(0.0);
        if pivot < 0.0 {
            ucol.neg_mut();
            vcol.neg_mut();
        }
        u.set_column(j, &ucol);
        v.set_column(j, &vcol);
        s.push(svd.singular_values[src]);
    }
    Ok(ThinSvd {
        u: OrthonormalBasis::trusted(u),
        singular_values: s,
        v: OrthonormalBasis::trusted(v),
    })
}

/// Q factor of the thin QR decomposition. Fails on rank-deficient input.
pub fn qr_orth(m: &Matrix) -> Result<OrthonormalBasis> {
    let (rows, cols) = m.shape();
    if cols == 0 || cols > rows {
        return Err(IsletError::arg(format!(
            "QR orthogonalization needs 1 <= cols <= rows, got {rows}x{cols}"
        )));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(IsletError::NonFinite("QR input".into()));
    }
    let qr = m.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..cols).map(|i| r[(i, i)].abs()).collect();
    let largest = diag.iter().copied().fold(0.0, f64::max);
    let smallest = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if largest == 0.0 || smallest <= 1e-12 * m.norm() {
        return Err(IsletError::Degenerate {
            what: "QR input (rank-deficient columns)".into(),
            condition: if smallest > 0.0 { largest / smallest } else { f64::INFINITY },
        });
    }
    Ok(OrthonormalBasis::trusted(qr.q()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_cube() -> DenseTensor {
        // T[i1,i2,i3] = i1 + 2(i2-1) + 4(i3-1) with 1-based indices
        DenseTensor::from_fn(&[2, 2, 2], |i| (1 + i[0] + 2 * i[1] + 4 * i[2]) as f64)
    }

    fn pseudo_random(dims: &[usize], salt: u64) -> DenseTensor {
        let mut state = salt.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        DenseTensor::from_fn(dims, |_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
    }

    #[test]
    fn mode_one_unfolding_of_example() {
        let m = matricize(&example_cube(), 0).unwrap();
        let expected = Matrix::from_row_slice(2, 4, &[1., 3., 5., 7., 2., 4., 6., 8.]);
        assert_eq!(m, expected);
        let back = tensorize(&expected, &[2, 2, 2], 0).unwrap();
        assert_eq!(back, example_cube());
    }

    #[test]
    fn vec_is_column_major() {
        assert_eq!(
            vec(&example_cube()).as_slice(),
            &[1., 2., 3., 4., 5., 6., 7., 8.]
        );
        let m = DenseTensor::new(vec![2, 2], vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(matricize(&m, 0).unwrap(), Matrix::from_row_slice(2, 2, &[1., 3., 2., 4.]));
    }

    #[test]
    fn mode_two_unfolding_matches_index_map() {
        let t = pseudo_random(&[3, 4, 5], 11);
        let m = matricize(&t, 1).unwrap();
        assert_eq!(m.shape(), (4, 15));
        for i1 in 0..3 {
            for i2 in 0..4 {
                for i3 in 0..5 {
                    assert_eq!(m[(i2, i1 + i3 * 3)], t.get(&[i1, i2, i3]));
                }
            }
        }
    }

    #[test]
    fn mode_out_of_range_is_rejected() {
        let t = example_cube();
        assert!(matches!(matricize(&t, 3), Err(IsletError::InvalidArgument(_))));
        let m = Matrix::zeros(3, 4);
        assert!(tensorize(&m, &[2, 2, 2], 0).is_err());
    }

    #[test]
    fn zero_matrix_folds_to_zero_tensor() {
        let t = tensorize(&Matrix::zeros(2, 6), &[3, 2, 2], 1).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mode_product_matches_unfolding() {
        let t = pseudo_random(&[3, 4, 5], 3);
        for mode in 0..3 {
            let u = Matrix::from_fn(2, t.dims()[mode], |i, j| (i as f64 + 1.0) * 0.3 - j as f64 * 0.1);
            let prod = mode_product(&t, &u, mode).unwrap();
            let lhs = matricize(&prod, mode).unwrap();
            let rhs = &u * matricize(&t, mode).unwrap();
            assert!((lhs - rhs).norm() < 1e-12);
            let ut = u.transpose();
            let via_t = mode_product_t(&t, &ut, mode).unwrap();
            assert!(via_t.sub(&prod).norm() < 1e-12);
        }
        let id = Matrix::identity(4, 4);
        assert!(mode_product(&t, &id, 1).unwrap().sub(&t).norm() == 0.0);
        assert!(mode_product(&t, &Matrix::zeros(2, 3), 1).is_err());
    }

    #[test]
    fn row_vector_product_of_rank_one() {
        let u = [1.0, -2.0, 0.5];
        let v = [3.0, 1.0];
        let w = [2.0, -1.0];
        let t = DenseTensor::from_fn(&[3, 2, 2], |i| u[i[0]] * v[i[1]] * w[i[2]]);
        let a = Matrix::from_row_slice(1, 3, &[0.5, 1.0, 2.0]);
        let prod = mode_product(&t, &a, 0).unwrap();
        let au = 0.5 * 1.0 + 1.0 * -2.0 + 2.0 * 0.5;
        assert_eq!(prod.dims(), &[1, 2, 2]);
        for i2 in 0..2 {
            for i3 in 0..2 {
                assert!((prod.get(&[0, i2, i3]) - au * v[i2] * w[i3]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn kron_identities() {
        assert_eq!(kron(&Matrix::identity(2, 2), &Matrix::identity(3, 3)), Matrix::identity(6, 6));
    }

    #[test]
    fn row_permutation_mode_one_is_identity() {
        let m = Matrix::from_fn(8, 3, |i, j| (i * 3 + j) as f64);
        assert_eq!(row_permute(0, &m, &[2, 2, 2]).unwrap(), m);
    }

    #[test]
    fn row_permutation_mode_two_on_identity() {
        let p = row_permute(1, &Matrix::identity(8, 8), &[2, 2, 2]).unwrap();
        for row in 0..8 {
            let (i1, i2, i3) = (row % 2, (row / 2) % 2, row / 4);
            let src = i2 + i1 * 2 + i3 * 4;
            for col in 0..8 {
                assert_eq!(p[(row, col)], if col == src { 1.0 } else { 0.0 });
            }
        }
        assert!(row_permute(1, &Matrix::identity(8, 8), &[2, 4]).is_err());
    }

    #[test]
    fn row_permutation_inverse_round_trip() {
        let m = Matrix::from_fn(24, 2, |i, j| (i * 2 + j) as f64);
        for mode in 0..3 {
            let p = row_permute(mode, &m, &[2, 3, 4]).unwrap();
            assert_eq!(row_permute_inverse(mode, &p, &[2, 3, 4]).unwrap(), m);
        }
    }

    #[test]
    fn svd_of_diagonal() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, 2.0, 1.0]));
        let svd = thin_svd(&m, 2).unwrap();
        assert_eq!(svd.singular_values.len(), 2);
        assert!((svd.singular_values[0] - 3.0).abs() < 1e-14);
        assert!((svd.singular_values[1] - 2.0).abs() < 1e-14);
        let u = svd.u.matrix();
        assert!((u[(0, 0)] - 1.0).abs() < 1e-14 && (u[(1, 1)] - 1.0).abs() < 1e-14);
        assert!(thin_svd(&m, 4).is_err());
        assert!(thin_svd(&m, 0).is_err());
    }

    #[test]
    fn svd_of_rank_one() {
        let u = Vector::from_vec(vec![1.0, -2.0, 2.0]);
        let v = Vector::from_vec(vec![0.0, 3.0, 4.0, 0.0]);
        let m = &u * v.transpose();
        let svd = thin_svd(&m, 1).unwrap();
        assert!((svd.singular_values[0] - m.norm()).abs() < 1e-12);
        // largest-magnitude entry of u is -2 (index 1, first of the tie) so the sign flips
        let expected = -&u / u.norm();
        assert!((svd.u.matrix().column(0) - expected).norm() < 1e-12);
    }

    #[test]
    fn svd_truncation_error_matches_tail() {
        let t = pseudo_random(&[6, 4], 5);
        let m = matricize(&t, 0).unwrap();
        let full = singular_values(&m);
        let svd = thin_svd(&m, 3).unwrap();
        let approx = svd.u.matrix()
            * Matrix::from_diagonal(&Vector::from_vec(svd.singular_values.clone()))
            * svd.v.matrix().transpose();
        let residual = spectral_norm(&(&m - approx));
        assert!((residual - full[3]).abs() < 1e-12);
    }

    #[test]
    fn qr_preserves_column_space() {
        let q = qr_orth(&Matrix::from_column_slice(2, 1, &[1.0, 1.0])).unwrap();
        let expected = 1.0 / 2f64.sqrt();
        assert!((q.matrix()[(0, 0)].abs() - expected).abs() < 1e-15);
        assert!((q.matrix()[(0, 0)] - q.matrix()[(1, 0)]).abs() < 1e-15);

        let t = pseudo_random(&[5, 2], 9);
        let m = matricize(&t, 0).unwrap();
        let q = qr_orth(&m).unwrap();
        let svd = thin_svd(&m, 2).unwrap();
        assert!((q.projector() - svd.u.projector()).norm() < 1e-10);

        let again = qr_orth(q.matrix()).unwrap();
        assert!((again.projector() - q.projector()).norm() < 1e-12);
    }

    #[test]
    fn qr_rejects_rank_deficient() {
        let m = Matrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(qr_orth(&m), Err(IsletError::Degenerate { .. })));
    }

    #[test]
    fn complement_is_orthogonal() {
        let t = pseudo_random(&[7, 3], 21);
        let u = qr_orth(&matricize(&t, 0).unwrap()).unwrap();
        let perp = u.complement();
        assert_eq!(perp.shape(), (7, 4));
        assert!(orthonormality_error(&perp) < 1e-12);
        assert!((u.matrix().transpose() * &perp).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(DenseTensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(DenseTensor::new(vec![], vec![]).is_err());
        assert!(DenseTensor::new(vec![2, 0], vec![]).is_err());
    }
}
