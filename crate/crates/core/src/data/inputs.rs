//! The two model inputs derived from a sample: the entity sequence pair and the generation prompt.

use serde::{Deserialize, Serialize};

use super::record::Role;
use super::tokenize::{detokenize, tokenize};
use super::vocab::{Vocabulary, CLS, SEP};

/// `[CLS] A [SEP] B [SEP]` with A = OCR text and B = entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequencePairInput {
    pub ids: Vec<usize>,
    pub a_len: usize,
    pub b_len: usize,
}

pub fn build_pair_input(ocr_text: &str, entity: &str, vocab: &Vocabulary) -> SequencePairInput {
    let a = vocab.encode(ocr_text);
    let b = vocab.encode(entity);
    SequencePairInput::from_segments(&a, &b)
}

impl SequencePairInput {
    pub fn from_segments(a: &[usize], b: &[usize]) -> Self {
        let mut ids = Vec::with_capacity(a.len() + b.len() + 3);
        ids.push(CLS);
        ids.extend_from_slice(a);
        ids.push(SEP);
        ids.extend_from_slice(b);
        ids.push(SEP);
        SequencePairInput {
            ids,
            a_len: a.len(),
            b_len: b.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn a_tokens(&self) -> &[usize] {
        &self.ids[1..1 + self.a_len]
    }

    pub fn b_tokens(&self) -> &[usize] {
        &self.ids[2 + self.a_len..2 + self.a_len + self.b_len]
    }

    /// Shortens the pair to at most `max_len` ids, dropping entity tokens before OCR tokens.
    /// Returns whether anything was removed.
    pub fn truncated(&self, max_len: usize) -> (SequencePairInput, bool) {
        let max_len = max_len.max(3);
        if self.len() <= max_len {
            return (self.clone(), false);
        }
        let budget = max_len - 3;
        let a = self.a_tokens();
        let b = self.b_tokens();
        let b_keep = budget.saturating_sub(a.len()).min(b.len());
        let a_keep = (budget - b_keep).min(a.len());
        (Self::from_segments(&a[..a_keep], &b[..b_keep]), true)
    }
}

/// Which sample fields are rendered into the generation prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptOptions {
    pub include_ocr: bool,
    pub include_caption: bool,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions {
            include_ocr: true,
            include_caption: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub text: String,
    pub tokens: Vec<String>,
}

impl Prompt {
    pub fn ids(&self, vocab: &Vocabulary) -> Vec<usize> {
        self.tokens.iter().map(|t| vocab.id(t)).collect()
    }

    /// Re-tokenized and re-joined form; the literal `[SEP]` markers survive.
    pub fn detokenized(&self) -> String {
        detokenize(&self.tokens)
    }
}

const PROMPT_PREFIX: &str = "Generate explanation for ";

/// `Generate explanation for {entity} as {role}: {ocr_text} [SEP] {caption} [SEP]`
pub fn build_prompt(entity: &str, role: Role, ocr_text: &str, caption: &str) -> Prompt {
    build_prompt_with(entity, role, ocr_text, caption, PromptOptions::default())
}

/// Prompt with optional fields. A dropped caption also drops its trailing separator; a dropped OCR
/// text leaves its slot empty.
pub fn build_prompt_with(
    entity: &str,
    role: Role,
    ocr_text: &str,
    caption: &str,
    opts: PromptOptions,
) -> Prompt {
    let ocr = if opts.include_ocr { ocr_text } else { "" };
    let text = if opts.include_caption {
        format!("{PROMPT_PREFIX}{entity} as {role}: {ocr} [SEP] {caption} [SEP]")
    } else {
        format!("{PROMPT_PREFIX}{entity} as {role}: {ocr} [SEP]")
    };
    let tokens = tokenize(&text);
    Prompt { text, tokens }
}

/// Fields recovered from a rendered full prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPrompt {
    pub entity: String,
    pub role: Role,
    pub ocr_text: String,
    pub caption: String,
}

/// Inverse of [`build_prompt`]. Exact when no field contains `": "` or `" [SEP] "`.
pub fn parse_prompt(text: &str) -> Option<ParsedPrompt> {
    let rest = text.strip_prefix(PROMPT_PREFIX)?;
    let colon = rest.find(": ")?;
    let head = &rest[..colon];
    let body = &rest[colon + 2..];
    let as_pos = head.rfind(" as ")?;
    let entity = &head[..as_pos];
    let role: Role = head[as_pos + 4..].parse().ok()?;
    let body = body.strip_suffix(" [SEP]")?;
    let sep = body.find(" [SEP] ")?;
    Some(ParsedPrompt {
        entity: entity.to_string(),
        role,
        ocr_text: body[..sep].to_string(),
        caption: body[sep + 7..].to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::vocab::UNK;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        Vocabulary::from_words(["a", "b"])
    }

    #[test]
    fn pair_pattern() {
        let v = vocab();
        let p = build_pair_input("a", "b", &v);
        assert_eq!(p.ids, vec![CLS, v.id("a"), SEP, v.id("b"), SEP]);
    }

    #[test]
    fn empty_a_segment() {
        let v = vocab();
        let p = build_pair_input("", "b", &v);
        assert_eq!(p.ids, vec![CLS, SEP, v.id("b"), SEP]);
    }

    #[test]
    fn oov_entity_maps_to_unk() {
        let v = vocab();
        let p = build_pair_input("a", "zebra", &v);
        assert_eq!(p.b_tokens(), &[UNK]);
    }

    #[test]
    fn truncation_drops_b_first() {
        let p = SequencePairInput::from_segments(&[10, 11, 12], &[20, 21]);
        let (t, cut) = p.truncated(7);
        assert!(cut);
        assert_eq!(t.ids, vec![CLS, 10, 11, 12, SEP, 20, SEP]);
        let (t, _) = p.truncated(5);
        assert_eq!(t.ids, vec![CLS, 10, 11, SEP, SEP]);
        let (t, cut) = p.truncated(8);
        assert!(!cut);
        assert_eq!(t, p);
    }

    #[test]
    fn prompt_template() {
        let p = build_prompt("X", Role::Villain, "A", "B");
        assert_eq!(p.text, "Generate explanation for X as villain: A [SEP] B [SEP]");
    }

    #[test]
    fn empty_caption_keeps_slot() {
        let p = build_prompt("X", Role::Hero, "A", "");
        assert_eq!(p.text, "Generate explanation for X as hero: A [SEP]  [SEP]");
    }

    #[test]
    fn caption_ablation_drops_segment() {
        let opts = PromptOptions {
            include_ocr: true,
            include_caption: false,
        };
        let p = build_prompt_with("X", Role::Hero, "A", "B", opts);
        assert_eq!(p.text, "Generate explanation for X as hero: A [SEP]");
    }

    #[test]
    fn sep_markers_survive_round_trip() {
        let p = build_prompt("X", Role::Victim, "some text", "a caption");
        let d = p.detokenized();
        assert_eq!(d.matches("[SEP]").count(), 2);
        assert_eq!(tokenize(&d), p.tokens);
    }

    proptest! {
        #[test]
        fn prompt_reparses(entity in "[A-Za-z][A-Za-z :]{0,12}",
                           role in 0usize..3,
                           ocr in "[A-Za-z .,!]{0,20}",
                           caption in "[A-Za-z .]{0,20}") {
            prop_assume!(!entity.contains(": ") && !ocr.contains(": ") && !caption.contains(": "));
            prop_assume!(!entity.ends_with(':'));
            let role = Role::from_index(role).unwrap();
            let p = build_prompt(&entity, role, &ocr, &caption);
            let parsed = parse_prompt(&p.text).unwrap();
            prop_assert_eq!(parsed, ParsedPrompt { entity, role, ocr_text: ocr, caption });
        }
    }
}
