//! Compressive-sensing primitives: the inverse-DFT sparse basis, random
//! row-sampling plans, the composed sensing operator, orthogonal matching
//! pursuit and the mutual-incoherence diagnostic.

pub mod dft;
pub mod mip;
pub mod omp;
pub mod operator;
pub mod plan;

pub use dft::{idft_basis, DftScale, UnitaryDft};
pub use mip::{mutual_incoherence, mutual_incoherence_columns, sample_columns, DENSE_COLUMN_LIMIT};
pub use omp::{noise_scaled_tolerance, omp_solve, OmpConfig, SparseCoefficients};
pub use operator::{Basis, DenseOperator, LinearOperator, SensingOperator};
pub use plan::{make_sampling_plan, SamplingPlan};

pub type C64 = num_complex::Complex64;
