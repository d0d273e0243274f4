//! Random streams, elementary distributions, dense linear algebra and the
//! summary statistics shared by the rest of the crate.

mod dist;
mod linalg;
mod rng;
mod stats;

pub use dist::{
    expit, logit, sample_dirichlet, sample_mvn, sample_mvn_with_factor, standard_normal, DirichletDraw,
    EXPIT_FLOOR,
};
pub use linalg::{cholesky_solve, dot, norm2, psd_factor, Cholesky, Matrix, PSD_TOL};
pub use rng::{RngStream, StreamRng};
pub use stats::{batch_means_error, default_batch_count, mean, sample_sd, sample_variance};
