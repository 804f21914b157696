//! Fisher information, inverse Cramér–Rao bounds and likelihood fitting for
//! Gaussian random fields with Matérn covariance.

pub mod cli;
pub mod design;
pub mod error;
pub mod fisher;
pub mod io;
pub mod likelihood;
pub mod matern;
pub mod optim;
pub mod par;
pub mod specialfun;

pub use design::{Region, SamplingDesign};
pub use error::{Error, Result};
pub use fisher::{FisherInfo, InfoVector, InfluenceResult};
pub use likelihood::{FitOptions, FitResult, FixedMask, GeoDataset};
pub use matern::{CovarianceParams, Param};
pub use specialfun::QuadratureSpec;
