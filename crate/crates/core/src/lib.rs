//! Chinese word segmentation with CRF decoding fused with n-gram language
//! model perplexity.
//!
//! The pipeline is `normalize -> emission scores -> decoder -> words`.
//! Three decoders are available: per-character argmax, Viterbi over a
//! linear-chain CRF, and a beam search (PCRF) that adds a language-model
//! fluency term over the words a partial path has already committed to.

pub mod corpus;
pub mod decode;
pub mod emission;
pub mod error;
pub mod eval;
pub mod lm;

pub use corpus::{bmes_decode, bmes_encode, normalize, Tag, TaggedSentence};
pub use decode::{BeamWidth, DecodeResult, DecoderConfig, DecoderKind, Segmenter};
pub use emission::{EmissionMatrix, EmissionModel, TransitionMatrix};
pub use error::{Error, Result};
pub use eval::{BenchReport, ConsistencyReport, EvalReport};
pub use lm::{NGramLM, PplResult};
