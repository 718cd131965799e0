//! Sparse polynomials over `n x d` sample matrices and their derivative tensors.

pub mod cubic;
pub mod derivatives;
pub mod gram;
pub mod kernel;
pub mod multiset;
pub mod polynomial;
pub mod quadratic;
pub mod restriction;
pub mod samples;
pub mod tensor;

pub use cubic::{CubicContraction, CubicJet, CUBIC_DENSE_CAP};
pub use derivatives::{grad_norms, grad_tensor, gradient, top_order_norm, NormWorkspace};
pub use gram::PenultimateGram;
pub use kernel::{JetKernel, LaneBlock, LaneJets, KERNEL_MAX_DEGREE, LANES};
pub use multiset::MultisetIndexer;
pub use polynomial::Polynomial;
pub use quadratic::{BatchEvaluator, QuadraticForm};
pub use restriction::{dir_deriv_tensor, DirectionalRestriction};
pub use samples::{check_unit, dot, norm, SampleMatrix};
pub use tensor::{checked_size, tensor_contract, tensor_frobenius, DerivTensor, DEFAULT_TENSOR_CAP};
