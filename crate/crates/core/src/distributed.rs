//! Sharded two-pass execution.
//!
//! Shards own contiguous sample ranges. Pass 1 returns exact partial sums of
//! `y X`, so the merged covariance tensor is bit-identical for any shard count.
//! Pass 2 returns the partial Gram matrix `sum x x^T` and cross-moment
//! `sum x y` of the sketched rows, built in small row blocks so the reduced
//! design is never materialized. The coordinator solves the merged normal
//! equations by Cholesky.

use std::hash::{DefaultHasher, Hasher};
use std::ops::Range;

use crate::decomposition::HooiConfig;
use crate::error::{IsletError, Result};
use crate::islet::{accumulate_covariance, assemble, probe_directions, CovarianceSum, IsletEstimate, CONDITION_LIMIT};
use crate::sketch::SketchBasis;
use crate::source::{check_range, check_sample, RegressionSample, SampleSource};
use crate::tensor::{DenseTensor, Matrix, Vector};

/// Rows sketched before each rank-k Gram update.
const ROW_BLOCK: usize = 64;

const FRAME_MAGIC: &[u8; 4] = b"ISLT";
const FRAME_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShardPlan {
    ranges: Vec<Range<usize>>,
}

impl ShardPlan {
    /// `shards` contiguous ranges over `0..n` whose lengths differ by at most one.
    pub fn even(n: usize, shards: usize) -> Result<Self> {
        if shards == 0 {
            return Err(IsletError::arg("shard count must be positive"));
        }
        if n < shards {
            return Err(IsletError::arg(format!("{n} samples cannot fill {shards} shards")));
        }
        let ranges = (0..shards).map(|b| b * n / shards..(b + 1) * n / shards).collect();
        Ok(Self { ranges })
    }

    pub fn from_ranges(ranges: Vec<Range<usize>>, n: usize) -> Result<Self> {
        if ranges.is_empty() {
            return Err(IsletError::arg("shard plan needs at least one shard"));
        }
        let mut next = 0;
        for r in &ranges {
            if r.start != next || r.is_empty() {
                return Err(IsletError::arg("shard ranges must be nonempty, contiguous and ordered"));
            }
            next = r.end;
        }
        if next != n {
            return Err(IsletError::arg(format!("shard ranges cover 0..{next}, expected 0..{n}")));
        }
        Ok(Self { ranges })
    }

    pub fn shards(&self) -> usize {
        self.ranges.len()
    }

    pub fn range(&self, shard: usize) -> Range<usize> {
        self.ranges[shard].clone()
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }
}

fn wrap(shard: usize) -> impl FnOnce(IsletError) -> IsletError {
    move |e| match e {
        e @ (IsletError::Shard { .. } | IsletError::Determinism { .. }) => e,
        e => IsletError::Shard {
            shard,
            source: Box::new(e),
        },
    }
}

/// Fingerprint of one sample's exact bits.
pub fn sample_checksum(s: &RegressionSample) -> u64 {
    let mut h = DefaultHasher::new();
    h.write_u64(s.y.to_bits());
    for &v in s.x.data() {
        h.write_u64(v.to_bits());
    }
    h.finish()
}

#[derive(Clone, Debug)]
pub struct Pass1Result {
    pub shard: usize,
    pub sum: CovarianceSum,
    /// Checksum of the shard's first sample, verified again in pass 2.
    pub first_checksum: u64,
}

/// Unnormalized `sum y X` over one shard.
pub fn shard_pass1(src: &dyn SampleSource, shard: usize, range: Range<usize>) -> Result<Pass1Result> {
    let run = || -> Result<Pass1Result> {
        if range.is_empty() {
            return Err(IsletError::arg("empty shard"));
        }
        let sum = accumulate_covariance(src, range.clone())?;
        let mut first_checksum = 0;
        src.visit(range.start..range.start + 1, &mut |_, s| {
            first_checksum = sample_checksum(s);
            Ok(())
        })?;
        Ok(Pass1Result {
            shard,
            sum,
            first_checksum,
        })
    };
    run().map_err(wrap(shard))
}

/// Partial normal equations of one shard.
#[derive(Clone, Debug, PartialEq)]
pub struct ShardResult {
    pub gram: Matrix,
    pub z: Vector,
    pub count: u64,
}

impl ShardResult {
    pub fn zeros(m: usize) -> Self {
        Self {
            gram: Matrix::zeros(m, m),
            z: Vector::zeros(m),
            count: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.z.len()
    }

    /// `ISLT | u32 version | u64 m | m*m f64 Gram (row-major) | m f64 z | u64 count`,
    /// little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = self.width();
        let mut out = Vec::with_capacity(24 + 8 * m * (m + 1));
        out.extend_from_slice(FRAME_MAGIC);
        out.extend_from_slice(&FRAME_VERSION.to_le_bytes());
        out.extend_from_slice(&(m as u64).to_le_bytes());
        for i in 0..m {
            for j in 0..m {
                out.extend_from_slice(&self.gram[(i, j)].to_le_bytes());
            }
        }
        for &v in self.z.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.count.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| IsletError::Format(format!("shard frame: {msg}"));
        if bytes.len() < 16 || &bytes[..4] != FRAME_MAGIC {
            return Err(bad("missing magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FRAME_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let m = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let expected = m
            .checked_mul(m + 1)
            .and_then(|x| x.checked_mul(8))
            .and_then(|x| x.checked_add(24))
            .ok_or_else(|| bad("width overflow"))?;
        if bytes.len() != expected {
            return Err(bad(&format!("length {} does not match width {m}", bytes.len())));
        }
        let f = |i: usize| f64::from_le_bytes(bytes[16 + 8 * i..24 + 8 * i].try_into().expect("8 bytes"));
        let gram = Matrix::from_fn(m, m, |i, j| f(i * m + j));
        let z = Vector::from_fn(m, |i, _| f(m * m + i));
        let count = u64::from_le_bytes(bytes[expected - 8..].try_into().expect("8 bytes"));
        Ok(Self { gram, z, count })
    }
}

/// Sketches one shard's samples and accumulates `sum x x^T` and `sum x y`.
/// When `expected_checksum` is given, the first regenerated sample must match it.
pub fn shard_pass2(
    src: &dyn SampleSource,
    shard: usize,
    range: Range<usize>,
    basis: &SketchBasis,
    expected_checksum: Option<u64>,
) -> Result<ShardResult> {
    let run = || -> Result<ShardResult> {
        check_range(src, &range)?;
        let dims = src.dims().to_vec();
        if dims != basis.dims() {
            return Err(IsletError::arg("source dims do not match sketch dims"));
        }
        let m = basis.layout().width();
        let mut result = ShardResult::zeros(m);
        let mut block = Matrix::zeros(ROW_BLOCK, m);
        let mut block_y = Vector::zeros(ROW_BLOCK);
        let mut row = vec![0.0; m];
        let mut filled = 0;
        let flush = |block: &Matrix, block_y: &Vector, filled: usize, result: &mut ShardResult| {
            let rows = block.rows(0, filled);
            result.gram.gemm_tr(1.0, &rows, &rows, 1.0);
            result.z.gemv_tr(1.0, &rows, &block_y.rows(0, filled), 1.0);
        };
        let start = range.start;
        src.visit(range, &mut |i, s| {
            check_sample(&dims, i, s)?;
            if i == start {
                if let Some(expected) = expected_checksum {
                    if sample_checksum(s) != expected {
                        return Err(IsletError::Determinism { shard });
                    }
                }
            }
            let sketch = basis.sketch(&s.x)?;
            basis.regular_row(&sketch, &mut row);
            for (c, &v) in row.iter().enumerate() {
                block[(filled, c)] = v;
            }
            block_y[filled] = s.y;
            filled += 1;
            result.count += 1;
            if filled == ROW_BLOCK {
                flush(&block, &block_y, filled, &mut result);
                filled = 0;
            }
            Ok(())
        })?;
        if filled > 0 {
            flush(&block, &block_y, filled, &mut result);
        }
        Ok(result)
    };
    run().map_err(wrap(shard))
}

/// Exact merge of pass-1 partial sums in shard order.
pub fn merge_covariance(parts: &[Pass1Result]) -> Result<DenseTensor> {
    let Some(first) = parts.first() else {
        return Err(IsletError::arg("no pass-1 results to merge"));
    };
    let mut total = CovarianceSum::new(first.sum.dims());
    for p in parts {
        total.merge(&p.sum)?;
    }
    total.mean()
}

/// `(sum_b G_b)^{-1} (sum_b z_b)` by Cholesky, summing in the given order.
pub fn merge_and_solve(results: &[ShardResult]) -> Result<Vector> {
    let Some(first) = results.first() else {
        return Err(IsletError::arg("no shard results to merge"));
    };
    let m = first.width();
    let mut gram = Matrix::zeros(m, m);
    let mut z = Vector::zeros(m);
    for (b, r) in results.iter().enumerate() {
        if r.width() != m || r.gram.shape() != (m, m) {
            return Err(IsletError::arg(format!(
                "shard {b} reports width {}, expected {m}",
                r.width()
            )));
        }
        gram += &r.gram;
        z += &r.z;
    }
    let eig = gram.clone().symmetric_eigen();
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= CONDITION_LIMIT) {
        return Err(IsletError::Degenerate {
            what: "merged Gram matrix".into(),
            condition,
        });
    }
    let chol = gram.cholesky().ok_or(IsletError::Degenerate {
        what: "merged Gram matrix (not positive definite)".into(),
        condition,
    })?;
    Ok(chol.solve(&z))
}

#[derive(Clone, Debug)]
pub struct DistributedFit {
    pub covariance: DenseTensor,
    pub estimate: IsletEstimate,
    pub shard_results: Vec<ShardResult>,
}

fn run_shards<T: Send>(
    plan: &ShardPlan,
    job: impl Fn(usize, Range<usize>) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..plan.shards())
            .map(|b| {
                let job = &job;
                let range = plan.range(b);
                scope.spawn(move || job(b, range))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("shard worker panicked"))
            .collect()
    });
    results.into_iter().collect()
}

/// Regular estimator with both passes sharded. Shards run on scoped threads
/// and hand their pass-2 results to the coordinator as serialized frames.
pub fn fit_distributed(src: &dyn SampleSource, cfg: &HooiConfig, plan: &ShardPlan) -> Result<DistributedFit> {
    cfg.validate(src.dims())?;
    ShardPlan::from_ranges(plan.ranges().to_vec(), src.len())?;
    let pass1 = run_shards(plan, |b, range| shard_pass1(src, b, range))?;
    let covariance = merge_covariance(&pass1)?;
    let dense = HooiConfig {
        sparsity: None,
        ..cfg.clone()
    };
    let basis = probe_directions(&covariance, &dense)?;
    let m = basis.layout().width();
    if src.len() < m {
        return Err(IsletError::Underdetermined { n: src.len(), m });
    }
    let frames = run_shards(plan, |b, range| {
        shard_pass2(src, b, range, &basis, Some(pass1[b].first_checksum)).map(|r| r.to_bytes())
    })?;
    let shard_results = frames
        .iter()
        .map(|f| ShardResult::from_bytes(f))
        .collect::<Result<Vec<_>>>()?;
    let gamma = merge_and_solve(&shard_results)?;
    let estimate = assemble(&gamma, &basis)?;
    Ok(DistributedFit {
        covariance,
        estimate,
        shard_results,
    })
}
