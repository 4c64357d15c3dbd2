//! Hyperbolic-cross density estimation and goodness-of-fit testing on the unit cube.

pub mod ahce;
pub mod baselines;
pub mod basis;
pub mod data;
pub mod datagen;
pub mod error;
pub mod experiments;
pub mod gof;
pub mod hypercross;
pub mod quadrature;
pub mod rng;
pub mod selfcheck;
pub mod spectral;

pub use ahce::{fit, AhceModel, SmoothingPolicy, WahbaVariance};
pub use basis::BasisKind;
pub use data::SampleMatrix;
pub use error::{HxdError, Result};
pub use hypercross::{FrequencyIndex, MultiIndex};
pub use spectral::{BasisKey, CoefficientTable, ProductTable};
