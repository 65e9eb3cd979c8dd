//! Transformer branches: entity-pair encoder, patch image encoder and prompted generator.

mod config;
mod generator;
mod image;
pub mod layers;
mod text;

pub use config::BlockConfig;
pub use generator::{default_allowed, DecoderFamily, PromptedGenerator, TeacherForced};
pub use image::{patchify, PatchImageEncoder};
pub use text::{PairEncoding, TextPairEncoder};
