use rand::Rng;

use super::config::{FusionMode, LumenConfig};
use crate::error::{Error, Result};
use crate::nn::layers::{Linear, MultiHeadAttention};
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamStore, Var};

/// Branch vectors on a tape; absent entries belong to disabled branches.
#[derive(Debug, Clone, Copy, Default)]
pub struct BranchVars {
    pub visual: Option<Var>,
    pub entity: Option<Var>,
    pub generator: Option<Var>,
}

/// Projects each branch to the fusion width and condenses the combination into class logits.
#[derive(Debug, Clone)]
pub struct FusionHead {
    pub mode: FusionMode,
    pub width: usize,
    pub proj_v: Linear,
    pub proj_t: Linear,
    pub proj_e: Linear,
    pub attend: Option<MultiHeadAttention>,
    pub condense: Linear,
    pub out: Linear,
    enabled: [bool; 3],
}

impl FusionHead {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        cfg: &LumenConfig,
        rng: &mut R,
    ) -> Self {
        let w = cfg.fusion_width;
        let proj_v = Linear::new(store, &format!("{name}.proj_v"), cfg.d_v, w, rng);
        let proj_t = Linear::new(store, &format!("{name}.proj_t"), cfg.d_t, w, rng);
        let proj_e = Linear::new(store, &format!("{name}.proj_e"), cfg.d_e, w, rng);
        let attend = (cfg.fusion == FusionMode::SelfAttend)
            .then(|| MultiHeadAttention::new(store, &format!("{name}.attend"), w, cfg.n_heads, rng));
        let condense = Linear::new(store, &format!("{name}.condense"), cfg.concat_width(), w, rng);
        let out = Linear::new(store, &format!("{name}.out"), w, cfg.n_classes, rng);
        FusionHead {
            mode: cfg.fusion,
            width: w,
            proj_v,
            proj_t,
            proj_e,
            attend,
            condense,
            out,
            enabled: [cfg.visual, cfg.entity, cfg.generator],
        }
    }

    /// Width of the combined projections before condensation.
    pub fn concat_width(&self) -> usize {
        self.condense.d_in
    }

    /// Class logits `[1, n_classes]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, branches: &BranchVars) -> Result<Var> {
        let slots = [
            ("visual", branches.visual, &self.proj_v),
            ("entity", branches.entity, &self.proj_t),
            ("generator", branches.generator, &self.proj_e),
        ];
        let mut projected = Vec::with_capacity(3);
        for ((name, var, proj), enabled) in slots.into_iter().zip(self.enabled) {
            match (var, enabled) {
                (Some(v), true) => {
                    let n = g.value(v).numel();
                    if n != proj.d_in {
                        return Err(Error::Shape {
                            op: "fuse_classify",
                            lhs: vec![n],
                            rhs: vec![proj.d_in],
                        });
                    }
                    let v = g.reshape(v, &[1, n])?;
                    let p = proj.forward(g, v)?;
                    projected.push(g.gelu(p));
                }
                (None, false) => {}
                (Some(_), false) => {
                    return Err(Error::Invalid(format!(
                        "{name} vector supplied but the {name} branch is disabled"
                    )))
                }
                (None, true) => {
                    return Err(Error::Invalid(format!("{name} branch enabled but vector absent")))
                }
            }
        }
        let combined = match &self.attend {
            None => g.concat_cols(&projected)?,
            Some(attn) => {
                let tokens = g.concat_rows(&projected)?;
                let mixed = attn.forward(g, tokens, tokens, None)?;
                g.mean_pool(mixed)?
            }
        };
        let h = self.condense.forward(g, combined)?;
        let h = g.gelu(h);
        self.out.forward(g, h)
    }
}
