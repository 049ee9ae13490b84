//! Surrogates for simulators whose output is a 2-D map.
//!
//! Each map is decomposed in a functional basis (2-D wavelets or tensor
//! B-splines), the most informative coefficients are kept, PCA under the
//! basis Gram metric compresses them to a few scores, and one Gaussian
//! process per score maps inputs to outputs. The fitted surrogate drives
//! Monte-Carlo estimation of generalized Sobol indices.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_is_multiple_of)]

pub mod benchfn;
pub mod bspline;
pub mod design;
pub mod error;
pub mod fpca;
pub mod gp;
pub mod grid;
pub mod pipeline;
pub mod select;
pub mod sensitivity;
pub mod wavelet;

pub use error::{Error, Result};
pub use fpca::FpcaModel;
pub use gp::{GpConfig, GpModel};
pub use grid::{Domain, Ensemble, GridSpec, SpatialMap};
pub use pipeline::{
    load_model, run_sensitivity, save_model, train, BasisConfig, PcaMetric, PipelineConfig, SelectionConfig,
    SensitivityOptions, SurrogateModel,
};
pub use select::{SelectionResult, SelectionTarget};
pub use wavelet::WaveletFamily;
