mod binio;
mod optional;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod frl;
pub mod nn;
pub mod solver;
pub mod spectral;

pub use dataset::{read_dataset, write_dataset, Split, TrajectoryDataset};
pub use error::{Error, ErrorCategory, Result};
pub use field::GridField2D;
pub use solver::{generate_dataset, make_initial_condition, step_rk4, Forcing, SolverConfig};
pub use spectral::{fft2, ifft2, Spectrum2D};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/fields-and-spectra.md")]
    mod fields_and_spectra {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
}
