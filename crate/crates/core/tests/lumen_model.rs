use lumen_core::data::{build_vocabulary, generate_synthetic_corpus, MemeSample, Role, SyntheticSpec, Vocabulary};
use lumen_core::model::{
    evaluate, gradcheck_lumen, train, BranchVars, ClassificationOutput, FusionMode, Lumen, LumenConfig,
    LossWeighting, OptimizerKind, PreparedSample, TrainConfig,
};
use lumen_core::nn::DecoderFamily;
use lumen_core::tensor::{Graph, Tensor};

fn corpus(seed: u64, per_role: usize, val: f64) -> (Vec<MemeSample>, Vocabulary) {
    let spec = SyntheticSpec {
        seed,
        per_role: [per_role; 3],
        image_size: 8,
        val_fraction: val,
        ..SyntheticSpec::default()
    };
    let samples = generate_synthetic_corpus(&spec).unwrap();
    let vocab = build_vocabulary(&samples);
    (samples, vocab)
}

fn prepared(model: &Lumen<f64>, samples: &[MemeSample], vocab: &Vocabulary) -> Vec<PreparedSample<f64>> {
    samples.iter().map(|s| model.prepare(s, vocab).unwrap()).collect()
}

#[test]
fn zero_fusion_weights_give_uniform_probabilities() {
    let (samples, vocab) = corpus(1, 2, 0.0);
    let mut model = Lumen::<f64>::new(LumenConfig::tiny(vocab.len()), 3).unwrap();
    let ids = model.group_ids("fusion");
    for id in ids {
        for v in model.store.get_mut(id).data_mut() {
            *v = 0.0;
        }
    }
    let (_, _, cls) = model.forward_sample(&samples[0], &vocab).unwrap();
    assert_eq!(cls.logits, [0.0; 3]);
    for p in cls.probs {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn concat_widths_follow_enabled_branches() {
    let full = Lumen::<f64>::new(LumenConfig::desk(50), 0).unwrap();
    assert_eq!(full.fusion.concat_width(), 1536);
    let no_vit = Lumen::<f64>::new(
        LumenConfig {
            visual: false,
            ..LumenConfig::desk(50)
        },
        0,
    )
    .unwrap();
    assert_eq!(no_vit.fusion.concat_width(), 1024);
    assert_eq!(no_vit.fusion.out.d_out, 3);
}

#[test]
fn fusion_rejects_wrong_dims() {
    let model = Lumen::<f64>::new(
        LumenConfig {
            visual: false,
            generator: false,
            ..LumenConfig::tiny(30)
        },
        0,
    )
    .unwrap();
    let mut g = Graph::inference(&model.store);
    let bad = g.constant(Tensor::zeros(&[1, 7]));
    let err = model
        .fusion
        .forward(
            &mut g,
            &BranchVars {
                entity: Some(bad),
                ..BranchVars::default()
            },
        )
        .unwrap_err();
    assert_eq!(err.kind(), "shape");
    assert!(model.fusion.forward(&mut g, &BranchVars::default()).is_err());
}

#[test]
fn text_only_config() {
    let (samples, vocab) = corpus(2, 2, 0.0);
    let model = Lumen::<f64>::new(
        LumenConfig {
            visual: false,
            ..LumenConfig::tiny(vocab.len())
        },
        1,
    )
    .unwrap();
    let (branches, losses, _) = model.forward_sample(&samples[0], &vocab).unwrap();
    assert!(branches.visual.is_none());
    assert!(losses.l_seq > 0.0 && losses.l_exp > 0.0 && losses.l_rp > 0.0);
}

#[test]
fn generator_disabled_config() {
    let (samples, vocab) = corpus(3, 2, 0.0);
    let model = Lumen::<f64>::new(
        LumenConfig {
            generator: false,
            ..LumenConfig::tiny(vocab.len())
        },
        1,
    )
    .unwrap();
    let (branches, losses, _) = model.forward_sample(&samples[0], &vocab).unwrap();
    assert!(branches.generator.is_none());
    assert_eq!(losses.l_exp, 0.0);
    let want = 0.2 * losses.l_seq + 0.3 * losses.l_rp;
    assert!((losses.l_total - want).abs() < 1e-12);
}

#[test]
fn missing_image_with_visual_branch_is_an_error() {
    let (mut samples, vocab) = corpus(4, 1, 0.0);
    samples[0].image = None;
    let model = Lumen::<f64>::new(LumenConfig::tiny(vocab.len()), 1).unwrap();
    assert!(model.prepare::<f64>(&samples[0], &vocab).is_err());
}

#[test]
fn full_forward_is_finite_and_satisfies_joint_identity() {
    let (samples, vocab) = corpus(5, 2, 0.0);
    let model = Lumen::<f64>::new(LumenConfig::tiny(vocab.len()), 2).unwrap();
    for s in &samples {
        let (branches, l, cls) = model.forward_sample(s, &vocab).unwrap();
        assert_eq!(branches.visual.as_ref().unwrap().len(), 16);
        assert_eq!(branches.entity.as_ref().unwrap().len(), 16);
        assert_eq!(branches.generator.as_ref().unwrap().len(), 16);
        for v in [l.l_seq, l.l_exp, l.l_rp, l.l_total] {
            assert!(v.is_finite());
        }
        assert!((l.l_total - (0.2 * l.l_seq + 0.5 * l.l_exp + 0.3 * l.l_rp)).abs() < 1e-12);
        assert!((cls.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(cls.target[s.role.index()], 1.0);
    }
}

#[test]
fn argmax_is_scale_invariant() {
    let cases = [[0.3, -1.2, 0.9], [2.0, 2.0, -5.0], [-0.1, -0.2, -0.05]];
    for logits in cases {
        let base = ClassificationOutput::from_logits(logits, Role::Hero).predicted();
        for c in [0.01, 0.5, 3.0, 1e4] {
            let scaled = ClassificationOutput::from_logits(logits.map(|l| l * c), Role::Hero);
            assert_eq!(scaled.predicted(), base);
        }
    }
}

#[test]
fn zero_epochs_leave_params_untouched() {
    let (samples, vocab) = corpus(6, 2, 0.0);
    let mut model = Lumen::<f64>::new(LumenConfig::tiny(vocab.len()), 2).unwrap();
    let before = model.store.clone();
    let data = prepared(&model, &samples, &vocab);
    let log = train(
        &mut model,
        &data,
        &[],
        &TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert!(log.epochs.is_empty() && log.steps.is_empty());
    assert!(model.store.values_equal(&before));
}

#[test]
fn empty_train_split_is_an_error() {
    let mut model = Lumen::<f64>::new(LumenConfig::tiny(30), 2).unwrap();
    assert!(train(&mut model, &[], &[], &TrainConfig::default()).is_err());
}

fn grads_by_group(model: &Lumen<f64>, data: &[PreparedSample<f64>]) -> Vec<(String, f64)> {
    let grads = {
        let mut g = Graph::new(&model.store);
        let refs: Vec<_> = data.iter().collect();
        let (_, _, total) = model.forward_batch(&mut g, &refs).unwrap();
        g.backward(total).unwrap();
        g.param_grads()
    };
    let mut store = model.store.clone();
    store.set_grads(grads);
    ["visual", "entity", "generator", "seq_head", "fusion"]
        .iter()
        .map(|name| (name.to_string(), store.grad_norm(model.group_ids(name))))
        .collect()
}

#[test]
fn every_branch_receives_gradient() {
    let (samples, vocab) = corpus(7, 1, 0.0);
    let model = Lumen::<f64>::new(LumenConfig::tiny(vocab.len()), 4).unwrap();
    let data = prepared(&model, &samples, &vocab);
    for (name, norm) in grads_by_group(&model, &data) {
        assert!(norm > 0.0, "{name} has zero gradient");
    }
}

#[test]
fn disabled_branch_is_independent() {
    let (samples, vocab) = corpus(8, 1, 0.0);
    for (flag, group) in [("visual", "visual"), ("entity", "entity"), ("generator", "generator")] {
        let mut cfg = LumenConfig::tiny(vocab.len());
        match flag {
            "visual" => cfg.visual = false,
            "entity" => cfg.entity = false,
            _ => cfg.generator = false,
        }
        let mut model = Lumen::<f64>::new(cfg, 5).unwrap();
        let data = prepared(&model, &samples, &vocab);
        let norms = grads_by_group(&model, &data);
        let own = norms.iter().find(|(n, _)| n == group).unwrap().1;
        assert_eq!(own, 0.0, "{group}");
        if flag == "entity" {
            assert_eq!(norms.iter().find(|(n, _)| n == "seq_head").unwrap().1, 0.0);
        }
        let total = |m: &Lumen<f64>| {
            let refs: Vec<_> = data.iter().collect();
            let mut g = Graph::inference(&m.store);
            let (_, _, t) = m.forward_batch(&mut g, &refs).unwrap();
            g.value(t).item()
        };
        let before = total(&model);
        for id in model.group_ids(group) {
            for v in model.store.get_mut(id).data_mut() {
                *v += 0.37;
            }
        }
        assert_eq!(total(&model), before, "{group}");
    }
}

#[test]
fn generation_only_weights_zero_both_heads() {
    let (samples, vocab) = corpus(9, 1, 0.0);
    let model = Lumen::<f64>::new(
        LumenConfig {
            betas: [0.0, 1.0, 0.0],
            ..LumenConfig::tiny(vocab.len())
        },
        5,
    )
    .unwrap();
    let data = prepared(&model, &samples, &vocab);
    let norms = grads_by_group(&model, &data);
    for head in ["seq_head", "fusion"] {
        assert_eq!(norms.iter().find(|(n, _)| n == head).unwrap().1, 0.0);
    }
    assert!(norms.iter().find(|(n, _)| n == "generator").unwrap().1 > 0.0);
}

#[test]
fn training_steps_satisfy_joint_identity_and_are_deterministic() {
    let (samples, vocab) = corpus(10, 4, 0.0);
    let run = || {
        let mut model = Lumen::<f64>::new(LumenConfig::tiny(vocab.len()), 6).unwrap();
        let data = prepared(&model, &samples, &vocab);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 4,
            ..TrainConfig::default()
        };
        train(&mut model, &data, &[], &cfg).unwrap()
    };
    let log = run();
    assert_eq!(log.steps.len(), 15);
    for s in &log.steps {
        let want = 0.2 * s.l_seq + 0.5 * s.l_exp + 0.3 * s.l_rp;
        assert!((s.l_total - want).abs() < 1e-12);
    }
    assert_eq!(log, run());
}

#[test]
fn validation_sequence_loss_decreases() {
    let (samples, vocab) = corpus(11, 8, 0.25);
    let mut model = Lumen::<f64>::new(LumenConfig::tiny(vocab.len()), 7).unwrap();
    let (tr, va): (Vec<_>, Vec<_>) = samples
        .iter()
        .partition(|s| s.split == lumen_core::data::Split::Train);
    let tr: Vec<_> = tr.iter().map(|s| model.prepare(s, &vocab).unwrap()).collect();
    let va: Vec<_> = va.iter().map(|s| model.prepare(s, &vocab).unwrap()).collect();
    assert!(!va.is_empty());
    let log = train(
        &mut model,
        &tr,
        &va,
        &TrainConfig {
            epochs: 8,
            batch_size: 6,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let first = log.epochs.first().unwrap().val.as_ref().unwrap().l_seq;
    let last = log.epochs.last().unwrap().val.as_ref().unwrap().l_seq;
    assert!(last < first, "{first} -> {last}");
    // Best-validation parameters are restored.
    let best = log.best_epoch.unwrap();
    let kept = evaluate(&model, &va).unwrap();
    assert_eq!(kept, *log.epochs[best - 1].val.as_ref().unwrap());
}

#[test]
fn checkpoint_round_trip() {
    let (samples, vocab) = corpus(12, 1, 0.0);
    let model = Lumen::<f64>::new(LumenConfig::tiny(vocab.len()), 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    model.save(&path, &vocab).unwrap();
    let (back, v2) = Lumen::<f64>::load(&path).unwrap();
    assert_eq!(v2, vocab);
    assert!(back.store.values_equal(&model.store));
    assert_eq!(
        back.forward_sample(&samples[0], &vocab).unwrap(),
        model.forward_sample(&samples[0], &vocab).unwrap()
    );
}

#[test]
fn composed_loss_gradcheck() {
    let variants: [(u64, fn(&mut LumenConfig)); 6] = [
        (1, |_| {}),
        (2, |c| c.fusion = FusionMode::SelfAttend),
        (3, |c| c.decoder = DecoderFamily::DecoderOnly),
        (4, |c| c.loss_weighting = LossWeighting::Unweighted),
        (5, |c| c.visual = false),
        (6, |c| {
            c.optimizer = OptimizerKind::Adam;
            c.betas = [0.0, 1.0, 0.0];
        }),
    ];
    for (seed, tweak) in variants {
        let (samples, vocab) = corpus(20 + seed, 1, 0.0);
        let mut cfg = LumenConfig::tiny(vocab.len());
        tweak(&mut cfg);
        let mut model = Lumen::<f64>::new(cfg, seed).unwrap();
        let data = prepared(&model, &samples[..2], &vocab);
        let report = gradcheck_lumen(&mut model, &data, 1e-3, Some(3)).unwrap();
        assert!(report.max_rel_error < 1e-4, "seed {seed}: {report:?}");
    }
}
