//! Synthetic low-rank coefficient tensors with Gaussian designs.
//!
//! Model parameters come from reserved streams of the model seed: the core
//! and the factor entries from [`PARAMETER_STREAM`], row supports from the
//! stream below it, and the dense perturbation from the one below that.
//! Sample streams count up from 0 under the same seed, so a model and its
//! samples never share a stream.

use islet_core::decomposition::validate_ranks;
use islet_core::rng::{StreamRng, PARAMETER_STREAM};
use islet_core::tensor::multilinear;
use islet_core::{DenseTensor, IsletError, Matrix, Result, SeededSource};

const SUPPORT_STREAM: u64 = PARAMETER_STREAM - 1;
const PERTURBATION_STREAM: u64 = PARAMETER_STREAM - 2;

/// A generated coefficient tensor and the seed its samples are drawn under.
#[derive(Clone, Debug)]
pub struct Model {
    pub a: DenseTensor,
    /// Nonzero rows of each factor; every row for dense models.
    pub supports: Vec<Vec<usize>>,
    pub seed: u64,
}

impl Model {
    /// `n` samples `y = <X, A> + sigma * eps` with standard normal `X` and `eps`.
    pub fn sampler(&self, sigma: f64, n: usize) -> Result<SeededSource> {
        SeededSource::new(self.a.clone(), sigma, n, self.seed)
    }
}

fn draw_core_and_factors(ranks: &[usize], rows: &[usize], seed: u64) -> (DenseTensor, Vec<Matrix>) {
    let mut rng = StreamRng::new(seed, PARAMETER_STREAM);
    let mut core = DenseTensor::zeros(ranks);
    rng.fill_normal(core.data_mut());
    let factors = ranks
        .iter()
        .zip(rows)
        .map(|(&r, &s)| {
            let mut m = Matrix::zeros(s, r);
            rng.fill_normal(m.as_mut_slice());
            m
        })
        .collect();
    (core, factors)
}

/// `A = [[S; E_1, ..., E_d]]` with i.i.d. standard normal `S` and `E_k`.
pub fn generate_regular(dims: &[usize], ranks: &[usize], seed: u64) -> Result<Model> {
    generate_sparse(dims, ranks, dims, seed)
}

/// Like [`generate_regular`] but factor `k` is nonzero only on a uniformly
/// random set of `s_k` rows, filled from an `s_k x r_k` Gaussian block.
/// With `s_k = p_k` on every mode the output equals [`generate_regular`].
pub fn generate_sparse(dims: &[usize], ranks: &[usize], sparsity: &[usize], seed: u64) -> Result<Model> {
    validate_ranks(ranks, dims)?;
    if sparsity.len() != dims.len() {
        return Err(IsletError::InvalidArgument(format!(
            "{} sparsity levels for an order-{} tensor",
            sparsity.len(),
            dims.len()
        )));
    }
    for (k, ((&s, &r), &p)) in sparsity.iter().zip(ranks).zip(dims).enumerate() {
        if s < r || s > p {
            return Err(IsletError::InvalidArgument(format!(
                "sparsity {s} of mode {k} must lie in [{r}, {p}]"
            )));
        }
    }
    let (core, blocks) = draw_core_and_factors(ranks, sparsity, seed);
    let mut support_rng = StreamRng::new(seed, SUPPORT_STREAM);
    let mut supports = Vec::with_capacity(dims.len());
    let mut factors = Vec::with_capacity(dims.len());
    for ((&p, &s), block) in dims.iter().zip(sparsity).zip(&blocks) {
        let rows = support_rng.subset(p, s);
        let mut e = Matrix::zeros(p, block.ncols());
        for (j, &i) in rows.iter().enumerate() {
            e.row_mut(i).copy_from(&block.row(j));
        }
        supports.push(rows);
        factors.push(e);
    }
    let refs: Vec<&Matrix> = factors.iter().collect();
    let a = multilinear(&core, &refs)?;
    Ok(Model { a, supports, seed })
}

/// `A = A_0 + tau |A_0| Z / prod(p)` with `A_0` from [`generate_regular`] and
/// i.i.d. standard normal `Z`.
pub fn generate_approx(dims: &[usize], ranks: &[usize], tau: f64, seed: u64) -> Result<Model> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(IsletError::InvalidArgument(format!("perturbation level {tau} must be finite and >= 0")));
    }
    let mut model = generate_regular(dims, ranks, seed)?;
    if tau > 0.0 {
        let mut z = DenseTensor::zeros(dims);
        StreamRng::new(seed, PERTURBATION_STREAM).fill_normal(z.data_mut());
        let scale = tau * model.a.norm() / z.len() as f64;
        model.a.axpy(scale, &z);
    }
    Ok(model)
}
