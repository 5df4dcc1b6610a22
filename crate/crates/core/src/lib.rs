//! CP tensor decomposition and structure-revealing coupled matrix-tensor
//! factorization (ACMTF) for fusing a third-order tensor with a matrix that
//! shares its first mode.
//!
//! The crate covers the whole analysis pipeline: dense containers and
//! kernels ([`tensor`]), Kruskal-form models ([`kruskal`]), a nonlinear
//! conjugate gradient minimizer ([`optimizer`]), multi-start CP and ACMTF
//! fits ([`cp`], [`acmtf`]), centering/scaling ([`preprocess`]), component
//! group-difference tests ([`stats`]), a planted-structure data generator
//! ([`synthetic`]), and the text file formats ([`io`]).
//!
//! Independent starts run on the rayon pool when the `parallel` feature is
//! enabled (the default); see [`parallel::Execution`].

pub mod acmtf;
pub mod cp;
pub mod error;
pub mod io;
pub mod kruskal;
mod multistart;
pub mod optimizer;
pub mod parallel;
pub mod preprocess;
pub mod report;
pub mod stats;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{fold, khatri_rao, mttkrp, unfold, DenseMatrix, DenseTensor3, Mode};
