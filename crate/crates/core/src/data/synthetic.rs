//! Deterministic synthetic meme corpus for desk-scale training.
//!
//! Each sample plants its role in two places: the first OCR word is drawn from a role-specific
//! keyword set and the image is tinted with a role-specific colour pattern. Explanations follow
//! `{entity} {role phrase} {topic}` where the topic word also occurs in the OCR text, so the
//! explanation is a function of the prompt.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::Image;
use super::record::{Domain, ImageSource, MemeSample, Role, Split};
use crate::error::{Error, Result};

const KEYWORDS: [[&str; 3]; 3] = [
    ["saves", "protects", "rescues"],
    ["destroys", "attacks", "corrupts"],
    ["suffers", "loses", "endures"],
];

const PHRASES: [&str; 3] = [
    "is praised for defending",
    "is blamed for ruining",
    "is shown suffering from",
];

const ALT_PHRASES: [&str; 3] = [
    "is celebrated over",
    "is portrayed as wrecking",
    "is depicted as a casualty of",
];

const ENTITIES: [&str; 12] = [
    "biden", "trump", "fauci", "obama", "pelosi", "vaccine", "china", "masks", "doctors", "nurses",
    "congress", "media",
];

const TOPICS: [&str; 10] = [
    "healthcare", "taxes", "lockdown", "elections", "jobs", "schools", "borders", "climate",
    "economy", "freedom",
];

const FILLERS: [&str; 10] = [
    "today", "again", "really", "people", "everyone", "this", "now", "america", "world", "news",
];

const OBJECTS: [&str; 6] = ["man", "woman", "crowd", "flag", "building", "podium"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// Samples per role, in the order hero, villain, victim.
    pub per_role: [usize; 3],
    pub n_entities: usize,
    pub n_topics: usize,
    /// Number of filler words after the keyword and topic.
    pub ocr_fillers: usize,
    pub image_size: usize,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 0,
            per_role: [10, 10, 10],
            n_entities: 8,
            n_topics: 8,
            ocr_fillers: 3,
            image_size: 32,
            val_fraction: 0.0,
            test_fraction: 0.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_entities == 0 || self.n_entities > ENTITIES.len() {
            return Err(Error::Invalid(format!(
                "n_entities must be in 1..={}",
                ENTITIES.len()
            )));
        }
        if self.n_topics == 0 || self.n_topics > TOPICS.len() {
            return Err(Error::Invalid(format!(
                "n_topics must be in 1..={}",
                TOPICS.len()
            )));
        }
        if self.image_size == 0 {
            return Err(Error::Invalid("image_size must be positive".into()));
        }
        let f = self.val_fraction + self.test_fraction;
        if !(0.0..=1.0).contains(&self.val_fraction)
            || !(0.0..=1.0).contains(&self.test_fraction)
            || f > 1.0
        {
            return Err(Error::Invalid("split fractions must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Role phrase used by the primary explanation grammar.
pub fn role_phrase(role: Role) -> &'static str {
    PHRASES[role.index()]
}

pub fn role_keywords(role: Role) -> &'static [&'static str; 3] {
    &KEYWORDS[role.index()]
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<Vec<MemeSample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut roles: Vec<Role> = Role::ALL
        .iter()
        .zip(spec.per_role)
        .flat_map(|(&r, n)| std::iter::repeat(r).take(n))
        .collect();
    roles.shuffle(&mut rng);

    // Exact (test, val) counts per role; the shuffle above makes the chosen samples random.
    let quota = spec.per_role.map(|n| {
        let test = (n as f64 * spec.test_fraction).round() as usize;
        let val = ((n as f64 * spec.val_fraction).round() as usize).min(n - test);
        (test, val)
    });
    let mut seen = [0usize; 3];
    let mut out = Vec::with_capacity(roles.len());
    for (i, role) in roles.into_iter().enumerate() {
        let entity = ENTITIES[rng.gen_range(0..spec.n_entities)];
        let topic = TOPICS[rng.gen_range(0..spec.n_topics)];
        let keyword = KEYWORDS[role.index()][rng.gen_range(0..3)];

        let mut rest: Vec<&str> = (0..spec.ocr_fillers)
            .map(|_| FILLERS[rng.gen_range(0..FILLERS.len())])
            .collect();
        let at = rng.gen_range(0..=rest.len());
        rest.insert(at, topic);
        let ocr_text = std::iter::once(keyword)
            .chain(rest)
            .collect::<Vec<_>>()
            .join(" ");

        let caption = format!("a picture of a {}", OBJECTS[rng.gen_range(0..OBJECTS.len())]);
        let explanations = vec![
            format!("{entity} {} {topic}", PHRASES[role.index()]),
            format!("{entity} {} {topic}", ALT_PHRASES[role.index()]),
        ];
        let image = role_image(role, spec.image_size, &mut rng);

        let seen = &mut seen[role.index()];
        let split = if *seen < quota[role.index()].0 {
            Split::Test
        } else if *seen < quota[role.index()].0 + quota[role.index()].1 {
            Split::Val
        } else {
            Split::Train
        };
        *seen += 1;
        let domain = match split {
            Split::Test => Domain::Unspecified,
            _ if rng.gen_bool(0.5) => Domain::UsPolitics,
            _ => Domain::Covid19,
        };

        out.push(MemeSample {
            id: format!("syn-{}-{i:05}", spec.seed),
            image: Some(ImageSource::Inline(image)),
            ocr_text,
            caption,
            entity: entity.to_string(),
            role,
            explanations,
            split,
            domain,
        });
    }
    Ok(out)
}

/// Role-tinted image: one dominant channel per role plus a role-specific stripe orientation.
fn role_image(role: Role, size: usize, rng: &mut ChaCha8Rng) -> Image {
    let mut pixels = Vec::with_capacity(size * size * 3);
    for r in 0..size {
        for c in 0..size {
            let stripe = match role {
                Role::Hero => r % 8 < 4,
                Role::Villain => c % 8 < 4,
                Role::Victim => (r + c) % 8 < 4,
            };
            for ch in 0..3 {
                let base: i32 = if ch == role.index() { 180 } else { 60 };
                let bump = if stripe { 40 } else { 0 };
                let noise: i32 = rng.gen_range(-20..=20);
                pixels.push((base + bump + noise).clamp(0, 255) as u8);
            }
        }
    }
    Image {
        height: size,
        width: size,
        pixels,
    }
}
