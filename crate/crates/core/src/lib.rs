//! Matrix-entropy analysis and entropy-guided pruning of visual tokens.

pub mod ecl_detector;
pub mod error;
pub mod flops_model;
pub mod matrix;
pub mod matrix_entropy;
pub mod sim_transformer;
pub mod spectral_fastpath;
pub mod tensor_io;
pub mod token_scorer;

pub use error::{Error, ErrorClass, Result};
pub use matrix::DenseMatrix;
