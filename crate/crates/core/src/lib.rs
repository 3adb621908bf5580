//! Structure-preserving localization maps for weakly supervised object
//! localization.
//!
//! - [`selfcorr`]: cosine, first-order and high-order self-correlation (HSC)
//! - [`scg`]: CAM-seeded aggregation of HSC rows into a localization map
//! - [`ram`]: pseudo-masks, restricted-activation loss and its gradient
//! - [`eval`]: box extraction, localization error, peak IoU, error taxonomy
//! - [`tensor`]: dense arrays, the SPT file format, map utilities
//! - [`fixture`]: seeded planted-object fixtures

pub mod error;
pub mod eval;
pub mod fixture;
mod kernel;
pub mod ram;
pub mod scg;
pub mod selfcorr;
pub mod tensor;

pub use error::{Result, SpaError};
pub use eval::{BBox, ErrorCase, EvalMode, EvalReport, ImageRecord};
pub use fixture::{generate_fixture, FixtureBundle, FixtureSpec, ObjectShape};
pub use ram::{LossReport, RamConfig, ScoreMap};
pub use scg::{ScgConfig, ScgOutput};
pub use selfcorr::{CorrelationMatrix, FeatureGrid};
pub use tensor::{read_tensor, write_tensor, BinaryMask, DenseTensor, Map2D};
