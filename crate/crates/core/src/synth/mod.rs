//! Training-pair synthesis: reverberation, direct-path targets, noise mixing.

pub mod corpus;
pub mod generate;
pub mod ops;
pub mod pair;

pub use corpus::{Corpus, DemoCorpusSpec, Role, Source};
pub use generate::reference_utterance;
pub use ops::{extract_direct_path, mix_at_snr, reverberate};
pub use pair::{make_pair, Pair, RecipeRanges, SynthesisRecipe, REVERB_PROBABILITY, SNR_RANGE};
