use lumen_core::data::{build_vocabulary, generate_synthetic_corpus, SyntheticSpec, CLS, EOS, PAD, SEP};
use lumen_core::decoding::{beam_decode, decode, generate, greedy_decode, DecodeConfig, Hypothesis, Strategy};
use lumen_core::model::{train, Lumen, LumenConfig, TrainConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const V: usize = 10;
const CONTENT: [usize; 4] = [6, 7, 8, 9];

/// Deterministic pseudo-random distribution over `EOS` and `CONTENT`, keyed by the prefix.
fn random_scorer(seed: u64, sharp: f64) -> impl FnMut(&[usize]) -> Vec<f64> {
    move |prefix: &[usize]| {
        let key = prefix.iter().fold(seed, |h, &t| h.wrapping_mul(1_000_003).wrapping_add(t as u64 + 1));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let mut out = vec![f64::NEG_INFINITY; V];
        let ids = std::iter::once(EOS).chain(CONTENT);
        let logits: Vec<(usize, f64)> = ids.map(|i| (i, rng.gen_range(-sharp..sharp))).collect();
        let z = logits.iter().map(|(_, l)| l.exp()).sum::<f64>().ln();
        for (i, l) in logits {
            out[i] = l - z;
        }
        out
    }
}

/// Trap: first-step greedy token 6 has a flat tail, token 7 has a confident one.
fn trap(prefix: &[usize]) -> Vec<f64> {
    let mut p = vec![0.0; V];
    match prefix {
        [_] => {
            p[6] = 0.5;
            p[7] = 0.4;
            p[EOS] = 0.1;
        }
        [_, 6] => {
            p[6] = 0.3;
            p[7] = 0.3;
            p[8] = 0.2;
            p[EOS] = 0.2;
        }
        [_, 7] => {
            p[8] = 0.9;
            p[EOS] = 0.1;
        }
        _ => p[EOS] = 1.0,
    }
    p.iter().map(|x: &f64| x.ln()).collect()
}

/// Every sequence that ends in EOS within `max_len` generated ids, with its log-probability.
fn enumerate(scorer: &mut dyn FnMut(&[usize]) -> Vec<f64>, max_len: usize) -> Vec<(Vec<usize>, f64)> {
    let mut done = Vec::new();
    let mut open = vec![(vec![lumen_core::data::BOS], 0.0)];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for (prefix, lp) in open {
            for (id, v) in scorer(&prefix).into_iter().enumerate() {
                if v == f64::NEG_INFINITY {
                    continue;
                }
                let mut p = prefix.clone();
                p.push(id);
                if id == EOS {
                    done.push((p[1..].to_vec(), lp + v));
                } else {
                    next.push((p, lp + v));
                }
            }
        }
        open = next;
    }
    done
}

fn best(all: &[(Vec<usize>, f64)]) -> &(Vec<usize>, f64) {
    all.iter().max_by(|a, b| a.1.partial_cmp(&b.1).unwrap()).unwrap()
}

#[test]
fn trap_needs_two_beams() {
    let mut s = trap;
    let greedy = greedy_decode(&mut s, 3).unwrap();
    assert_eq!(greedy.ids, vec![6, 6, EOS]);
    let beam = beam_decode(&mut s, 2, 3, 0.0).unwrap();
    assert_eq!(beam.ids, vec![7, 8, EOS]);
    let oracle = best(&enumerate(&mut s, 3)).clone();
    assert_eq!(beam.ids, oracle.0);
    assert!((beam.log_prob - oracle.1).abs() < 1e-12);
    assert!((oracle.1 - (0.4f64 * 0.9).ln()).abs() < 1e-12);
}

#[test]
fn alpha_zero_wide_beam_matches_enumeration() {
    for seed in 0..20 {
        let mut s = random_scorer(seed, 2.0);
        let oracle = best(&enumerate(&mut s, 4)).clone();
        // Width 5^4 keeps every prefix, so the search is exhaustive.
        let h = beam_decode(&mut s, 625, 4, 0.0).unwrap();
        if h.finished {
            assert_eq!(h.ids, oracle.0, "seed {seed}");
            assert!((h.log_prob - oracle.1).abs() < 1e-12);
        } else {
            assert!(h.log_prob >= oracle.1);
        }
    }
}

#[test]
fn one_hot_steps_give_same_output_for_any_k() {
    let path = [7, 9, 6, 8, EOS];
    let mut s = |prefix: &[usize]| {
        let mut v = vec![f64::NEG_INFINITY; V];
        v[path[prefix.len() - 1]] = 0.0;
        v
    };
    let reference = greedy_decode(&mut s, 10).unwrap();
    assert_eq!(reference.ids, path);
    for k in 1..6 {
        for alpha in [0.0, 0.7, 1.5] {
            assert_eq!(beam_decode(&mut s, k, 10, alpha).unwrap(), reference);
        }
    }
}

#[test]
fn decode_dispatches_on_strategy() {
    let mut s = trap;
    let cfg = DecodeConfig {
        strategy: Strategy::Beam,
        k: 2,
        max_len: 3,
        alpha: 0.0,
    };
    assert_eq!(decode(&mut s, &cfg).unwrap().ids, vec![7, 8, EOS]);
    let cfg = DecodeConfig {
        strategy: Strategy::Greedy,
        ..cfg
    };
    assert_eq!(decode(&mut s, &cfg).unwrap().ids, vec![6, 6, EOS]);
    assert!(decode(&mut s, &DecodeConfig { k: 0, ..cfg }).is_err());
}

#[test]
fn length_normalization_prefers_longer_at_high_alpha() {
    // Short: EOS now (p=0.45). Long: 6, 7, EOS (0.55 * 0.6 = 0.33 over three ids).
    let mut s = |prefix: &[usize]| {
        let mut p = vec![0.0f64; V];
        if prefix.len() == 1 {
            p[EOS] = 0.45;
            p[6] = 0.55;
        } else if prefix.len() == 2 {
            p[EOS] = 0.4;
            p[7] = 0.6;
        } else {
            p[EOS] = 1.0;
        }
        p.iter().map(|x| x.ln()).collect::<Vec<_>>()
    };
    assert_eq!(beam_decode(&mut s, 4, 3, 0.0).unwrap().ids, vec![EOS]);
    let h: Hypothesis = beam_decode(&mut s, 4, 3, 1.0).unwrap();
    assert_eq!(h.ids, vec![6, 7, EOS]);
}

proptest! {
    #[test]
    fn k1_equals_greedy(seed in any::<u64>(), max_len in 1usize..8) {
        let mut s = random_scorer(seed, 3.0);
        prop_assert_eq!(beam_decode(&mut s, 1, max_len, 0.7).unwrap(), greedy_decode(&mut s, max_len).unwrap());
    }

    #[test]
    fn wider_beam_never_loses_probability(seed in any::<u64>(), k in 2usize..6) {
        let mut s = random_scorer(seed, 3.0);
        let max_len = 12;
        let narrow = beam_decode(&mut s, 1, max_len, 0.0).unwrap();
        let wide = beam_decode(&mut s, k, max_len, 0.0).unwrap();
        prop_assume!(narrow.finished && wide.finished);
        prop_assert!(wide.log_prob >= narrow.log_prob - 1e-12, "{:?} vs {:?}", wide, narrow);
    }

    #[test]
    fn outputs_end_with_eos_or_hit_max_len(seed in any::<u64>(), k in 1usize..4, max_len in 1usize..8) {
        let mut s = random_scorer(seed, 3.0);
        let h = beam_decode(&mut s, k, max_len, 0.7).unwrap();
        prop_assert!(h.ids.len() <= max_len);
        prop_assert!(h.finished || h.ids.len() == max_len);
        prop_assert_eq!(h.finished, h.ids.last() == Some(&EOS));
        prop_assert!(!h.content().contains(&EOS));
    }
}

#[test]
fn generator_never_emits_structural_ids() {
    let spec = SyntheticSpec {
        seed: 3,
        per_role: [1, 1, 1],
        image_size: 8,
        val_fraction: 0.0,
        ..SyntheticSpec::default()
    };
    let samples = generate_synthetic_corpus(&spec).unwrap();
    let vocab = build_vocabulary(&samples);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..3 {
        let model = Lumen::<f64>::new(LumenConfig::tiny(vocab.len()), seed).unwrap();
        for s in &samples {
            let p = model.prepare::<f64>(s, &vocab).unwrap();
            for strategy in [Strategy::Greedy, Strategy::Beam] {
                let cfg = DecodeConfig {
                    strategy,
                    k: rng.gen_range(1..4),
                    max_len: 12,
                    alpha: 0.7,
                };
                let h = generate(&model.generator, &model.store, &p.prompt, &cfg).unwrap();
                for id in &h.ids {
                    assert!(![PAD, CLS, SEP].contains(id));
                }
                assert!(h.finished || h.ids.len() == 12);
            }
        }
    }
}

#[test]
fn overfit_sample_is_regenerated() {
    let spec = SyntheticSpec {
        seed: 11,
        per_role: [1, 0, 0],
        image_size: 8,
        val_fraction: 0.0,
        ..SyntheticSpec::default()
    };
    let samples = generate_synthetic_corpus(&spec).unwrap();
    let vocab = build_vocabulary(&samples);
    let mut model = Lumen::<f64>::new(LumenConfig::tiny(vocab.len()), 2).unwrap();
    let data = vec![model.prepare::<f64>(&samples[0], &vocab).unwrap()];
    let cfg = TrainConfig {
        epochs: 150,
        batch_size: 1,
        lr: 1e-2,
        ..TrainConfig::default()
    };
    train(&mut model, &data, &[], &cfg).unwrap();
    let want = &data[0].target[1..data[0].target.len() - 1];
    for strategy in [Strategy::Greedy, Strategy::Beam] {
        let dc = DecodeConfig {
            strategy,
            ..DecodeConfig::default()
        };
        let h = generate(&model.generator, &model.store, &data[0].prompt, &dc).unwrap();
        assert!(h.finished);
        assert_eq!(h.content(), want, "{:?}", vocab.decode(h.content()));
    }
}
