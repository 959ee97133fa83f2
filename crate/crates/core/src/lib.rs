//! Exact sparse simulation of string-net states and the adaptive circuits that
//! prepare them: sequential Abelian gauging, 1-form ungauging/regauging, tube
//! algebra idempotents and anyon string operators, with brute-force oracles.

pub mod afdlu;
pub mod anyons;
pub mod error;
pub mod fusion;
pub mod groups;
pub mod lattice;
pub mod oneform;
pub mod oracle;
pub mod protocol;
pub mod state;
pub mod stringnet;

pub use error::{Error, Result};
pub use fusion::{builtin, FusionCategory, GradingSeries, Level};
pub use groups::{characters, direct_product, make_cyclic, AbelianGroup, Character};
pub use lattice::{Crossing, DualPath, Graph, HoneycombTorus, Region};
pub use num_complex::Complex64;
pub use state::{inner, Kernel, Layout, MeasurementRecord, SparseState};
pub use stringnet::{StringNet, TubeLabels};
pub use anyons::{apply_string, check_tube_algebra, gauge_with_anyons, idempotent, DomainWallOp, HalfBraiding, TubeCheck};
pub use protocol::{builtin_theory, AnyonTheory, FusionTranscript, SuccessCurve};
