use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::LumenConfig;
use super::fusion::{BranchVars, FusionHead};
use super::losses::{joint_loss, joint_loss_on_tape, LossBreakdown};
use crate::data::{
    build_pair_input, build_prompt_with, MemeSample, Role, SequencePairInput, Vocabulary, BOS, EOS,
};
use crate::error::{Error, Result};
use crate::nn::layers::Linear;
use crate::nn::{PatchImageEncoder, PromptedGenerator, TextPairEncoder};
use crate::scalar::Scalar;
use crate::tensor::{load_checkpoint, save_checkpoint, Graph, ParamId, ParamStore, Tensor, Var};

/// Pooled branch vectors of one sample, copied off the tape.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BranchOutputs {
    pub visual: Option<Vec<f64>>,
    pub entity: Option<Vec<f64>>,
    pub generator: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationOutput {
    pub logits: [f64; 3],
    pub probs: [f64; 3],
    /// One-hot gold role.
    pub target: [f64; 3],
}

impl ClassificationOutput {
    pub fn from_logits(logits: [f64; 3], gold: Role) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp = logits.map(|l| (l - max).exp());
        let z: f64 = exp.iter().sum();
        let mut target = [0.0; 3];
        target[gold.index()] = 1.0;
        ClassificationOutput {
            logits,
            probs: exp.map(|e| e / z),
            target,
        }
    }

    /// Arg-max role; ties go to the lowest index.
    pub fn predicted(&self) -> Role {
        let mut best = 0;
        for i in 1..3 {
            if self.logits[i] > self.logits[best] {
                best = i;
            }
        }
        Role::from_index(best).expect("three classes")
    }
}

/// Model inputs of one sample, tokenized and patchified once.
#[derive(Debug, Clone)]
pub struct PreparedSample<T> {
    pub id: String,
    pub pair: SequencePairInput,
    pub prompt: Vec<usize>,
    /// `BOS explanation EOS`.
    pub target: Vec<usize>,
    pub patches: Option<Tensor<T>>,
    pub role: Role,
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub branches: BranchVars,
    pub logits: Var,
    pub seq_logits: Option<Var>,
    pub l_seq: Option<Var>,
    pub l_exp: Option<Var>,
    pub l_rp: Var,
    pub total: Var,
    pub exp_steps: usize,
}

/// Parameter groups used for gradient reporting.
pub const PARAM_GROUPS: [(&str, &str); 5] = [
    ("visual", "image."),
    ("entity", "text."),
    ("generator", "gen."),
    ("seq_head", "seq_head."),
    ("fusion", "fusion."),
];

/// Architecture of the model: every branch's parameter handles, without parameter values.
#[derive(Debug, Clone)]
pub struct LumenNet {
    pub config: LumenConfig,
    pub text: TextPairEncoder,
    pub image: PatchImageEncoder,
    pub generator: PromptedGenerator,
    pub seq_head: Linear,
    pub fusion: FusionHead,
}

/// Architecture plus parameter values.
pub struct Lumen<T: Scalar> {
    pub net: LumenNet,
    pub store: ParamStore<T>,
}

impl<T: Scalar> std::ops::Deref for Lumen<T> {
    type Target = LumenNet;

    fn deref(&self) -> &LumenNet {
        &self.net
    }
}

impl LumenNet {
    pub fn prepare<T: Scalar>(&self, sample: &MemeSample, vocab: &Vocabulary) -> Result<PreparedSample<T>> {
        let pair = build_pair_input(&sample.ocr_text, &sample.entity, vocab);
        let prompt = build_prompt_with(
            &sample.entity,
            sample.role,
            &sample.ocr_text,
            &sample.caption,
            self.config.prompt,
        )
        .ids(vocab);
        let mut target = vec![BOS];
        target.extend(vocab.encode(sample.primary_explanation()));
        target.push(EOS);
        let patches = if self.config.visual {
            let size = self.config.image_size;
            let image = sample.load_image(size, size)?.ok_or_else(|| {
                Error::Invalid(format!(
                    "sample {} has no image but the visual branch is enabled",
                    sample.id
                ))
            })?;
            Some(self.image.patchify(&image)?)
        } else {
            None
        };
        Ok(PreparedSample {
            id: sample.id.clone(),
            pair,
            prompt,
            target,
            patches,
            role: sample.role,
        })
    }

    /// Runs the enabled branches, the fusion head and every enabled loss on one tape.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, s: &PreparedSample<T>) -> Result<ForwardVars> {
        let cfg = &self.config;
        let role = s.role.index();
        let mut branches = BranchVars::default();
        if cfg.visual {
            let patches = s.patches.clone().ok_or_else(|| {
                Error::Invalid(format!("sample {} has no image patches", s.id))
            })?;
            branches.visual = Some(self.image.encode_patches(g, patches)?);
        }
        let mut seq_logits = None;
        let mut l_seq = None;
        if cfg.entity {
            let enc = self.text.encode_pair(g, &s.pair)?;
            let logits = self.seq_head.forward(g, enc.pooled)?;
            l_seq = Some(g.cross_entropy(logits, &[role])?);
            seq_logits = Some(logits);
            branches.entity = Some(enc.pooled);
        }
        let mut l_exp = None;
        let mut exp_steps = 0;
        if cfg.generator {
            let tf = self.generator.decode_teacher_forced(g, &s.prompt, &s.target)?;
            l_exp = Some(tf.loss);
            exp_steps = tf.steps;
            branches.generator = Some(tf.pooled);
        }
        let logits = self.fusion.forward(g, &branches)?;
        let l_rp = g.cross_entropy(logits, &[role])?;
        let total = joint_loss_on_tape(g, l_seq, l_exp, l_rp, cfg.betas, cfg.loss_weighting)?;
        Ok(ForwardVars {
            branches,
            logits,
            seq_logits,
            l_seq,
            l_exp,
            l_rp,
            total,
            exp_steps,
        })
    }

    /// Batch-mean losses on one tape. Returns the per-sample passes and the mean components
    /// `(L_SEQ, L_EXP, L_RP, L_total)`.
    pub fn forward_batch<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        batch: &[&PreparedSample<T>],
    ) -> Result<(Vec<ForwardVars>, [Option<Var>; 3], Var)> {
        if batch.is_empty() {
            return Err(Error::Invalid("empty batch".into()));
        }
        let outs = batch
            .iter()
            .map(|s| self.forward(g, s))
            .collect::<Result<Vec<_>>>()?;
        let inv = T::lit(1.0 / batch.len() as f64);
        let mean = |g: &mut Graph<'_, T>, pick: &dyn Fn(&ForwardVars) -> Option<Var>| {
            let vars: Vec<Var> = outs.iter().filter_map(pick).collect();
            if vars.is_empty() {
                return Ok::<_, Error>(None);
            }
            let mut acc = vars[0];
            for &v in &vars[1..] {
                acc = g.add(acc, v)?;
            }
            Ok(Some(g.scale(acc, inv)))
        };
        let l_seq = mean(g, &|o| o.l_seq)?;
        let l_exp = mean(g, &|o| o.l_exp)?;
        let l_rp = mean(g, &|o| Some(o.l_rp))?.expect("batch is non-empty");
        let cfg = &self.config;
        let total = joint_loss_on_tape(g, l_seq, l_exp, l_rp, cfg.betas, cfg.loss_weighting)?;
        Ok((outs, [l_seq, l_exp, Some(l_rp)], total))
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    config: LumenConfig,
    vocab: Vocabulary,
}

impl<T: Scalar> Lumen<T> {
    /// Builds every branch, enabled or not, so checkpoints share one layout per configuration.
    pub fn new(config: LumenConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let text = TextPairEncoder::new(&mut store, "text", config.text_block(), &mut rng)?;
        let image = PatchImageEncoder::new(
            &mut store,
            "image",
            config.image_block(),
            config.patch,
            config.image_size,
            config.image_size,
            &mut rng,
        )?;
        let generator = PromptedGenerator::new(
            &mut store,
            "gen",
            config.generator_block(),
            config.decoder,
            &mut rng,
        )?;
        let seq_head = Linear::new(&mut store, "seq_head", config.d_t, config.n_classes, &mut rng);
        let fusion = FusionHead::new(&mut store, "fusion", &config, &mut rng);
        Ok(Lumen {
            net: LumenNet {
                config,
                text,
                image,
                generator,
                seq_head,
                fusion,
            },
            store,
        })
    }

    pub fn group_ids(&self, group: &str) -> Vec<ParamId> {
        let prefix = PARAM_GROUPS
            .iter()
            .find(|(g, _)| *g == group)
            .map(|(_, p)| *p)
            .unwrap_or(group);
        self.store
            .ids()
            .filter(|&id| self.store.name(id).starts_with(prefix))
            .collect()
    }

    /// Inference pass on one raw sample.
    pub fn forward_sample(
        &self,
        sample: &MemeSample,
        vocab: &Vocabulary,
    ) -> Result<(BranchOutputs, LossBreakdown, ClassificationOutput)> {
        let prepared = self.prepare(sample, vocab)?;
        let mut g = Graph::inference(&self.store);
        let out = self.forward(&mut g, &prepared)?;
        let vec = |v: Option<Var>, g: &Graph<'_, T>| v.map(|v| g.value(v).to_f64());
        let branches = BranchOutputs {
            visual: vec(out.branches.visual, &g),
            entity: vec(out.branches.entity, &g),
            generator: vec(out.branches.generator, &g),
        };
        let item = |v: Var| g.value(v).item().to_f64_lossy();
        let losses = joint_loss(
            out.l_seq.map(item),
            out.l_exp.map(item),
            item(out.l_rp),
            self.config.betas,
            self.config.loss_weighting,
        )?;
        let l = g.value(out.logits).to_f64();
        let cls = ClassificationOutput::from_logits([l[0], l[1], l[2]], sample.role);
        Ok((branches, losses, cls))
    }

    pub fn save(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        let meta = CheckpointMeta {
            config: self.config.clone(),
            vocab: vocab.clone(),
        };
        let meta = serde_json::to_string(&meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
        save_checkpoint(path, &self.store, &meta)
    }

    pub fn load(path: &Path) -> Result<(Self, Vocabulary)> {
        let (store, meta) = load_checkpoint::<T>(path)?;
        let meta: CheckpointMeta =
            serde_json::from_str(&meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut model = Lumen::new(meta.config, 0)?;
        model.replace_params(store)?;
        Ok((model, meta.vocab))
    }

    /// Swaps in parameter values with an identical name and shape layout.
    pub fn replace_params(&mut self, store: ParamStore<T>) -> Result<()> {
        if store.len() != self.store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                store.len(),
                self.store.len()
            )));
        }
        for (a, b) in self.store.ids().zip(store.ids()) {
            if self.store.name(a) != store.name(b)
                || self.store.get(a).shape() != store.get(b).shape()
            {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` {:?} does not match `{}` {:?}",
                    store.name(b),
                    store.get(b).shape(),
                    self.store.name(a),
                    self.store.get(a).shape()
                )));
            }
        }
        self.store = store;
        Ok(())
    }
}
