use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{FusionMode, LossWeighting, LumenConfig};
use super::lumen::{Lumen, PreparedSample};
use crate::data::{build_vocabulary, generate_synthetic_corpus, Image, SequencePairInput, SyntheticSpec, BOS, EOS};
use crate::error::Result;
use crate::nn::{BlockConfig, DecoderFamily, PatchImageEncoder, PromptedGenerator, TextPairEncoder};
use crate::tensor::gradcheck::{check_params, GradCheckReport, DEFAULT_FLOOR};
use crate::tensor::{ParamStore, Tensor};

/// Central-difference check of the batch-mean joint loss against every parameter group, sampling
/// at most `max_per_param` entries of each tensor.
pub fn gradcheck_lumen(
    model: &mut Lumen<f64>,
    batch: &[PreparedSample<f64>],
    h: f64,
    max_per_param: Option<usize>,
) -> Result<GradCheckReport> {
    let ids: Vec<_> = model.store.ids().collect();
    let Lumen { net, store } = model;
    let refs: Vec<&PreparedSample<f64>> = batch.iter().collect();
    check_params(store, &ids, h, DEFAULT_FLOOR, max_per_param, |g| {
        let (_, _, total) = net.forward_batch(g, &refs)?;
        Ok(total)
    })
}

/// Grad-check outcome of one seeded configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckCase {
    pub name: String,
    pub report: GradCheckReport,
}

/// Checks every block and six full-model variants under `n_seeds` seeds each. Block losses project
/// outputs onto fixed random directions so every output coordinate gets a distinct upstream gradient.
pub fn gradcheck_suite(n_seeds: u64, h: f64) -> Result<Vec<GradCheckCase>> {
    let mut cases = Vec::new();
    let block = |vocab: usize| BlockConfig {
        d_model: 16,
        n_layers: 2,
        n_heads: 2,
        ffn_width: 32,
        max_len: 24,
        vocab_size: vocab,
    };
    let direction = |rng: &mut ChaCha8Rng| -> Result<Tensor<f64>> {
        Tensor::matrix(1, 16, (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };
    for seed in 0..n_seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut store = ParamStore::<f64>::new();
        let enc = TextPairEncoder::new(&mut store, "text", block(20), &mut rng)?;
        let input = SequencePairInput::from_segments(&[6, 9, 11, 6], &[15, 7]);
        let w = direction(&mut rng)?;
        let ids: Vec<_> = store.ids().collect();
        let report = check_params(&mut store, &ids, h, DEFAULT_FLOOR, Some(8), |g| {
            let out = enc.encode_pair(g, &input)?;
            let wv = g.constant(w.clone());
            let p = g.mul(out.pooled, wv)?;
            Ok(g.sum(p))
        })?;
        cases.push(GradCheckCase { name: format!("entity encoder seed {seed}"), report });

        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let mut store = ParamStore::<f64>::new();
        let enc = PatchImageEncoder::new(&mut store, "image", block(2), 4, 8, 8, &mut rng)?;
        let img = Image::new(8, 8, (0..8 * 8 * 3).map(|_| rng.gen()).collect())?;
        let w = direction(&mut rng)?;
        let ids: Vec<_> = store.ids().collect();
        let report = check_params(&mut store, &ids, h, DEFAULT_FLOOR, Some(8), |g| {
            let v = enc.encode_image(g, &img)?;
            let wv = g.constant(w.clone());
            let p = g.mul(v, wv)?;
            Ok(g.sum(p))
        })?;
        cases.push(GradCheckCase { name: format!("visual encoder seed {seed}"), report });

        for family in [DecoderFamily::EncoderDecoder, DecoderFamily::DecoderOnly] {
            let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
            let mut store = ParamStore::<f64>::new();
            let gen = PromptedGenerator::new(&mut store, "gen", block(12), family, &mut rng)?;
            let prompt = [7, 8, 9, 10, 6];
            let target = [BOS, 6, 10, 11, EOS];
            let w = direction(&mut rng)?;
            let ids: Vec<_> = store.ids().collect();
            let report = check_params(&mut store, &ids, h, DEFAULT_FLOOR, Some(8), |g| {
                let out = gen.decode_teacher_forced(g, &prompt, &target)?;
                let wv = g.constant(w.clone());
                let p = g.mul(out.pooled, wv)?;
                let s = g.sum(p);
                g.add(out.loss, s)
            })?;
            cases.push(GradCheckCase { name: format!("generator {family:?} seed {seed}"), report });
        }
    }

    let variants: [(&str, fn(&mut LumenConfig)); 6] = [
        ("full", |_| {}),
        ("self-attend fusion", |c| c.fusion = FusionMode::SelfAttend),
        ("decoder-only", |c| c.decoder = DecoderFamily::DecoderOnly),
        ("unweighted loss", |c| c.loss_weighting = LossWeighting::Unweighted),
        ("no visual branch", |c| c.visual = false),
        ("generation loss only", |c| c.betas = [0.0, 1.0, 0.0]),
    ];
    for seed in 0..n_seeds {
        for (name, tweak) in variants {
            let spec = SyntheticSpec {
                seed: 20 + seed,
                per_role: [1; 3],
                image_size: 8,
                ..SyntheticSpec::default()
            };
            let samples = generate_synthetic_corpus(&spec)?;
            let vocab = build_vocabulary(&samples);
            let mut cfg = LumenConfig::tiny(vocab.len());
            tweak(&mut cfg);
            let mut model = Lumen::<f64>::new(cfg, seed)?;
            let batch = samples[..2]
                .iter()
                .map(|s| model.prepare(s, &vocab))
                .collect::<Result<Vec<_>>>()?;
            let report = gradcheck_lumen(&mut model, &batch, h, Some(3))?;
            cases.push(GradCheckCase { name: format!("lumen {name} seed {seed}"), report });
        }
    }
    Ok(cases)
}
