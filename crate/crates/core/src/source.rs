//! Sample streams that can be read more than once.

use std::ops::Range;

use crate::error::{IsletError, Result};
use crate::rng::StreamRng;
use crate::tensor::DenseTensor;

/// One observation `y = <X, A> + eps`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionSample {
    pub y: f64,
    pub x: DenseTensor,
}

/// Random-access stream of regression samples. Every visit of the same
/// range must yield bit-identical samples.
pub trait SampleSource: Sync {
    fn dims(&self) -> &[usize];

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Calls `f(index, sample)` for every index in `range`, in order. The
    /// sample reference is only valid for the duration of the call.
    fn visit(
        &self,
        range: Range<usize>,
        f: &mut dyn FnMut(usize, &RegressionSample) -> Result<()>,
    ) -> Result<()>;
}

pub(crate) fn check_range(src: &dyn SampleSource, range: &Range<usize>) -> Result<()> {
    if range.start > range.end || range.end > src.len() {
        return Err(IsletError::arg(format!(
            "sample range {range:?} outside 0..{}",
            src.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_sample(dims: &[usize], index: usize, s: &RegressionSample) -> Result<()> {
    if s.x.dims() != dims {
        return Err(IsletError::arg(format!(
            "sample {index} has dims {:?}, expected {dims:?}",
            s.x.dims()
        )));
    }
    if !s.y.is_finite() || !s.x.is_finite() {
        return Err(IsletError::NonFinite(format!("sample {index}")));
    }
    Ok(())
}

/// Samples held in memory.
#[derive(Clone, Debug)]
pub struct InMemorySource {
    dims: Vec<usize>,
    samples: Vec<RegressionSample>,
}

impl InMemorySource {
    pub fn new(dims: Vec<usize>, samples: Vec<RegressionSample>) -> Result<Self> {
        DenseTensor::new(dims.clone(), vec![0.0; dims.iter().product()])?;
        for (i, s) in samples.iter().enumerate() {
            if s.x.dims() != dims.as_slice() {
                return Err(IsletError::arg(format!(
                    "sample {i} has dims {:?}, expected {dims:?}",
                    s.x.dims()
                )));
            }
        }
        Ok(Self { dims, samples })
    }

    /// Materializes every sample of another source.
    pub fn collect(src: &dyn SampleSource) -> Result<Self> {
        let mut samples = Vec::with_capacity(src.len());
        src.visit(0..src.len(), &mut |_, s| {
            samples.push(s.clone());
            Ok(())
        })?;
        Self::new(src.dims().to_vec(), samples)
    }

    pub fn samples(&self) -> &[RegressionSample] {
        &self.samples
    }
}

impl SampleSource for InMemorySource {
    fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn len(&self) -> usize {
        self.samples.len()
    }

    fn visit(
        &self,
        range: Range<usize>,
        f: &mut dyn FnMut(usize, &RegressionSample) -> Result<()>,
    ) -> Result<()> {
        check_range(self, &range)?;
        for i in range {
            f(i, &self.samples[i])?;
        }
        Ok(())
    }
}

/// Gaussian-design samples regenerated on demand from `(seed, index)`.
///
/// Sample `i` draws its covariate entries in storage order from stream `i`,
/// followed by one standard normal noise draw, and sets
/// `y = <X, A> + sigma * eps`.
#[derive(Clone, Debug)]
pub struct SeededSource {
    coefficient: DenseTensor,
    sigma: f64,
    n: usize,
    seed: u64,
}

impl SeededSource {
    pub fn new(coefficient: DenseTensor, sigma: f64, n: usize, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(IsletError::arg(format!("noise level {sigma} must be finite and >= 0")));
        }
        if !coefficient.is_finite() {
            return Err(IsletError::NonFinite("coefficient tensor".into()));
        }
        Ok(Self {
            coefficient,
            sigma,
            n,
            seed,
        })
    }

    pub fn coefficient(&self) -> &DenseTensor {
        &self.coefficient
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Regenerates sample `index` into `buf`.
    pub fn generate_into(&self, index: usize, buf: &mut RegressionSample) {
        let mut rng = StreamRng::new(self.seed, index as u64);
        rng.fill_normal(buf.x.data_mut());
        let eps = rng.normal();
        buf.y = buf.x.inner(&self.coefficient) + self.sigma * eps;
    }

    pub fn generate(&self, index: usize) -> RegressionSample {
        let mut s = RegressionSample {
            y: 0.0,
            x: DenseTensor::zeros(self.coefficient.dims()),
        };
        self.generate_into(index, &mut s);
        s
    }

    /// Same design and noise draws with a different coefficient tensor.
    pub fn with_coefficient(&self, coefficient: DenseTensor) -> Result<Self> {
        Self::new(coefficient, self.sigma, self.n, self.seed)
    }
}

impl SampleSource for SeededSource {
    fn dims(&self) -> &[usize] {
        self.coefficient.dims()
    }

    fn len(&self) -> usize {
        self.n
    }

    fn visit(
        &self,
        range: Range<usize>,
        f: &mut dyn FnMut(usize, &RegressionSample) -> Result<()>,
    ) -> Result<()> {
        check_range(self, &range)?;
        let mut buf = RegressionSample {
            y: 0.0,
            x: DenseTensor::zeros(self.coefficient.dims()),
        };
        for i in range {
            self.generate_into(i, &mut buf);
            f(i, &buf)?;
        }
        Ok(())
    }
}

/// Contiguous sub-range of another source, re-indexed from 0.
pub struct SubSource<'a> {
    inner: &'a dyn SampleSource,
    range: Range<usize>,
}

impl<'a> SubSource<'a> {
    pub fn new(inner: &'a dyn SampleSource, range: Range<usize>) -> Result<Self> {
        check_range(inner, &range)?;
        Ok(Self { inner, range })
    }
}

impl SampleSource for SubSource<'_> {
    fn dims(&self) -> &[usize] {
        self.inner.dims()
    }

    fn len(&self) -> usize {
        self.range.len()
    }

    fn visit(
        &self,
        range: Range<usize>,
        f: &mut dyn FnMut(usize, &RegressionSample) -> Result<()>,
    ) -> Result<()> {
        check_range(self, &range)?;
        let offset = self.range.start;
        self.inner
            .visit(range.start + offset..range.end + offset, &mut |i, s| f(i - offset, s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_source_is_reproducible_per_index() {
        let a = DenseTensor::from_fn(&[2, 3, 2], |i| (i[0] + i[1] + i[2]) as f64);
        let src = SeededSource::new(a.clone(), 0.5, 10, 42).unwrap();
        let mut first = Vec::new();
        src.visit(0..10, &mut |_, s| {
            first.push(s.clone());
            Ok(())
        })
        .unwrap();
        let mut tail = Vec::new();
        src.visit(6..10, &mut |_, s| {
            tail.push(s.clone());
            Ok(())
        })
        .unwrap();
        assert_eq!(&first[6..], &tail[..]);
        let s = &first[3];
        let eps = (s.y - s.x.inner(&a)) / 0.5;
        assert!(eps.abs() < 10.0);
        assert_ne!(first[0].x, first[1].x);
    }

    #[test]
    fn sub_source_reindexes() {
        let a = DenseTensor::zeros(&[2, 2]);
        let src = SeededSource::new(a, 1.0, 10, 1).unwrap();
        let sub = SubSource::new(&src, 4..9).unwrap();
        assert_eq!(sub.len(), 5);
        let mut seen = Vec::new();
        sub.visit(1..3, &mut |i, s| {
            seen.push((i, s.clone()));
            Ok(())
        })
        .unwrap();
        assert_eq!(seen[0].0, 1);
        assert_eq!(seen[0].1, src.generate(5));
        assert!(sub.visit(0..6, &mut |_, _| Ok(())).is_err());
    }

    #[test]
    fn in_memory_rejects_mismatched_dims() {
        let s = RegressionSample {
            y: 1.0,
            x: DenseTensor::zeros(&[2, 2]),
        };
        assert!(InMemorySource::new(vec![2, 3], vec![s]).is_err());
    }
}
