//! Limit densities of supercritical multitype Galton–Watson processes in
//! the Schröder case, computed from the Poincaré and Schröder functions of
//! the offspring generating function.

pub mod catalog;
pub mod error;
pub mod fourier;
pub mod gamma;
pub mod julia;
pub mod model;
pub mod montecarlo;
pub mod multi_index;
pub mod numeric;
pub mod poincare;
pub mod poly;
pub mod quadrature;
pub mod schroder;
pub mod series;
pub mod spectral;

pub use error::{Condition, Error, Result};
pub use model::{load_model, PgfModel};
pub use multi_index::MultiIndex;
pub use spectral::SpectralData;
pub use poincare::PoincareEvaluator;
