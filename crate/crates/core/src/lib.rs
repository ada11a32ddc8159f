//! Time-series tokenization and embedding geometry for token-based
//! time-series language models.
//!
//! The crate is organized bottom-up:
//!
//! - [`ts_processor`]: normalization, ε-grid quantization, prompt rendering.
//! - [`embed`]: TS-token embedding blocks under geometric priors.
//! - [`regularizers`]: ordinality / monotonicity hinge losses with exact
//!   gradients through a fixed 3-D PCA projection.
//! - [`synth`]: labeled synthetic multiple-choice tasks.
//! - [`model`]: a micro decoder-only transformer with hand-written backprop.
//! - [`experiment`]: the variant grid runner and geometry/accuracy regression.
//! - [`export`]: plot-ready CSV exports.

pub mod container;
pub mod embed;
pub mod error;
pub mod experiment;
pub mod export;
pub mod linalg;
pub mod model;
pub mod regularizers;
pub mod rng;
pub mod synth;
pub mod ts_processor;

pub use embed::{BaseStats, EmbeddingMatrix, InitScheme, InitSpec};
pub use error::{Error, Result};
pub use regularizers::{GeometryContext, GeometryReport, RegularizerConfig};
pub use synth::{SyntheticSample, TaskKind};
pub use ts_processor::{NormalizedSeries, QuantizedSeries, RawSeries, SeriesStats, TokenVocab};
