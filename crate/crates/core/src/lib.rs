pub mod dependence;
pub mod em;
pub mod erlang;
pub mod error;
pub mod extensions;
pub mod functionals;
pub mod io;
pub mod linalg;
pub mod model;
pub mod presets;
pub mod quadrature;
pub mod sampler;

pub use dependence::MphStarRepresentation;
pub use error::{MphError, Result};
pub use functionals::{EvalConfig, MomentMethod, MomentValue, PhaseType};
pub use model::{MphModel, SubIntensityMatrix};
pub use sampler::{sample, sample_with_paths, PathStats, SampleMatrix};
pub use em::{fit, FitConfig, FitReport, FitResult};
