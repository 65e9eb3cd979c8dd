//! Dataset records, tokenization, model inputs and the synthetic corpus generator.

mod counts;
mod image;
mod inputs;
mod record;
mod synthetic;
mod tokenize;
mod vocab;

pub use counts::{exhvv_expected, validate_counts, CountTable, ExpectedCell, EXHVV_TOTAL};
pub use image::Image;
pub use inputs::{
    build_pair_input, build_prompt, build_prompt_with, parse_prompt, ParsedPrompt, Prompt,
    PromptOptions, SequencePairInput,
};
pub use record::{
    load_dataset, write_dataset, Domain, ImageSource, MemeSample, RawRecord, Role, Split,
};
pub use synthetic::{generate_synthetic_corpus, role_keywords, role_phrase, SyntheticSpec};
pub use tokenize::{detokenize, tokenize, SPECIAL_MARKERS};
pub use vocab::{Vocabulary, BOS, CLS, EOS, NUM_SPECIAL, PAD, SEP, UNK};

/// Fixed words of the generation prompt, added to every vocabulary.
pub const TEMPLATE_WORDS: [&str; 8] = [
    "generate", "explanation", "for", "as", ":", "hero", "villain", "victim",
];

/// Vocabulary over the training split only; every other split falls back to UNK for unseen words.
pub fn build_vocabulary(samples: &[MemeSample]) -> Vocabulary {
    let train = samples.iter().filter(|s| s.split == Split::Train);
    let mut texts: Vec<&str> = TEMPLATE_WORDS.to_vec();
    for s in train {
        texts.push(&s.ocr_text);
        texts.push(&s.caption);
        texts.push(&s.entity);
        texts.extend(s.explanations.iter().map(String::as_str));
    }
    Vocabulary::from_texts(texts)
}
