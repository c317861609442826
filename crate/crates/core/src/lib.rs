//! Certification of high-dimensional polarization/energy-time hyperentanglement
//! from two-photon interference visibilities.
//!
//! Generic numeric code is parameterized by [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

pub mod certify;
pub mod error;
pub mod hyperstate;
pub mod linalg;
pub mod measure;
pub mod par;
pub mod pipeline;
pub mod qcore;
pub mod scalar;
pub mod sdp;
pub mod tagstream;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ComplexMatrix = qcore::ComplexMatrix<f64>;
pub type DensityMatrix = qcore::DensityMatrix<f64>;
pub type PureState = qcore::PureState<f64>;
pub type Observable = qcore::Observable<f64>;
pub type HyperState = hyperstate::HyperState<f64>;
pub type SdpProblem = sdp::SdpProblem<f64>;
pub type SdpSolution = sdp::SdpSolution<f64>;
