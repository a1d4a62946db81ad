//! Low-rank tensor regression by importance sketching.
//!
//! The estimator reads `(y, X)` samples twice. The first pass forms the
//! response-covariate covariance tensor, whose Tucker decomposition yields
//! per-mode sketching directions. The second pass projects each covariate
//! onto the "body" and "arms" spanned by those directions, a small
//! regression is solved on the projected covariates, and the coefficients
//! are assembled back into a full low-Tucker-rank tensor.
//!
//! * [`tensor`]: dense tensors, unfoldings, mode products, SVD/QR helpers
//! * [`decomposition`]: HOSVD, HOOI and a row-sparse thresholded HOOI
//! * [`islet`]: the regular estimator and the sample sources it streams from
//! * [`sparse`]: the group-sparse estimator and its group Lasso solver
//! * [`rank_select`]: rank screening from an over-ranked fit
//! * [`distributed`]: sharded two-pass execution
//! * [`io`]: binary sample and estimate files
//! * [`rng`]: counter-based random streams for reproducible covariates

pub mod decomposition;
pub mod distributed;
pub mod error;
pub mod exact_sum;
pub mod io;
pub mod islet;
pub mod rank_select;
pub mod rng;
pub mod sketch;
pub mod source;
pub mod sparse;
pub mod tensor;

pub use decomposition::{hooi, hosvd_init, sin_theta, sparse_hooi, HooiConfig, TuckerFactorization};
pub use error::{IsletError, Result};
pub use islet::{fit_islet, IsletEstimate};
pub use source::{InMemorySource, RegressionSample, SampleSource, SeededSource};
pub use sketch::SketchBasis;
pub use tensor::{DenseTensor, Matrix, OrthonormalBasis, Vector};
