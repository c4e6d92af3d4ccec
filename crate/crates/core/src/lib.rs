//! Toolkit for compact binary face templates and their longitudinal behaviour.
//!
//! The pipeline binarizes float embeddings into packed L-bit codes via a PCA
//! projection followed by an iterative Procrustes rotation, then quantifies
//! how genuine-pair Hamming distances grow with the age gap between captures:
//!
//! * [`ingest`] — embedding matrix / manifest loading and validation
//! * [`hashcodes`] — PCA + iterative quantization, sign binarization,
//!   packed templates and Hamming distance
//! * [`pairs`] — genuine / impostor pair enumeration with age-bin assignment
//! * [`drift`] — per-identity distance-vs-age-gap slopes (bits per decade)
//!   summarized by the median with a BCa bootstrap confidence interval
//! * [`roc`] — threshold sweeps, EER and TPR at a target FAR per age bin
//! * [`stability`] — per-bit flip-rate profiling and targeted parity repair
//! * [`synth`] — seeded synthetic corpora with analytically known drift, so
//!   every estimator can be checked against a closed-form oracle
//!
//! All randomized steps (rotation initialization, impostor sampling,
//! bootstrap resampling, synthesis) are driven by explicit seeds and produce
//! identical output for identical input regardless of worker scheduling.

pub mod drift;
pub mod hashcodes;
pub mod ingest;
pub mod pairs;
pub mod roc;
pub mod stability;
pub mod synth;

mod util;

pub use ingest::{EmbeddingSet, Gender, ImageRecord};
pub use hashcodes::{HashModel, TemplateSet};
pub use pairs::{AgeBin, GenuinePair, VerificationPair};
pub use drift::{DriftSummary, SlopeFit};
pub use roc::{RocPoint, RocSummary};
pub use stability::{BitStabilityProfile, ParityScheme};
pub use synth::SynthSpec;
