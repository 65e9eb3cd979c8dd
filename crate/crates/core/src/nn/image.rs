use rand::Rng;

use super::config::BlockConfig;
use super::layers::{EncoderStack, Linear};
use crate::data::Image;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

/// Encoder over non-overlapping square patches of an RGB image.
#[derive(Debug, Clone)]
pub struct PatchImageEncoder {
    pub config: BlockConfig,
    pub patch: usize,
    pub height: usize,
    pub width: usize,
    pub projection: Linear,
    pub positions: ParamId,
    pub stack: EncoderStack,
}

impl PatchImageEncoder {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        config: BlockConfig,
        patch: usize,
        height: usize,
        width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        check_divisible(height, width, patch)?;
        let d = config.d_model;
        let n_patches = (height / patch) * (width / patch);
        Ok(PatchImageEncoder {
            config,
            patch,
            height,
            width,
            projection: Linear::new(store, &format!("{name}.patch"), patch * patch * 3, d, rng),
            positions: store.add_xavier(format!("{name}.positions"), n_patches, d, rng),
            stack: EncoderStack::new(
                store,
                &format!("{name}.stack"),
                d,
                config.n_layers,
                config.n_heads,
                config.ffn_width,
                rng,
            ),
        })
    }

    pub fn n_patches(&self) -> usize {
        (self.height / self.patch) * (self.width / self.patch)
    }

    /// Patch rows `[n_patches, patch*patch*3]` with pixel values scaled to `[0, 1]`.
    pub fn patchify<T: Scalar>(&self, image: &Image) -> Result<Tensor<T>> {
        check_divisible(image.height, image.width, self.patch)?;
        if image.height != self.height || image.width != self.width {
            return Err(Error::Invalid(format!(
                "image is {}x{}, encoder expects {}x{}",
                image.height, image.width, self.height, self.width
            )));
        }
        patchify(image, self.patch)
    }

    /// Mean-pooled last-layer patch states.
    pub fn encode_image<T: Scalar>(&self, g: &mut Graph<'_, T>, image: &Image) -> Result<Var> {
        let patches = self.patchify(image)?;
        self.encode_patches(g, patches)
    }

    pub fn encode_patches<T: Scalar>(&self, g: &mut Graph<'_, T>, patches: Tensor<T>) -> Result<Var> {
        let x = g.constant(patches);
        let x = self.projection.forward(g, x)?;
        let pos = g.param(self.positions);
        let x = g.add(x, pos)?;
        let h = self.stack.forward(g, x, None)?;
        g.mean_pool(h)
    }

    /// The pooled vector produced when every patch token carries only its position embedding.
    pub fn no_content_baseline<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var> {
        let pos = g.param(self.positions);
        let h = self.stack.forward(g, pos, None)?;
        g.mean_pool(h)
    }
}

fn check_divisible(height: usize, width: usize, patch: usize) -> Result<()> {
    if patch == 0 {
        return Err(Error::Config("patch size must be positive".into()));
    }
    if height % patch != 0 || width % patch != 0 || height == 0 || width == 0 {
        let up = |n: usize| n.div_ceil(patch).max(1) * patch;
        return Err(Error::ImageShape {
            height,
            width,
            patch,
            pad_h: up(height),
            pad_w: up(width),
        });
    }
    Ok(())
}

pub fn patchify<T: Scalar>(image: &Image, patch: usize) -> Result<Tensor<T>> {
    check_divisible(image.height, image.width, patch)?;
    let (ph, pw) = (image.height / patch, image.width / patch);
    let row_len = patch * patch * 3;
    let mut data = Vec::with_capacity(ph * pw * row_len);
    for py in 0..ph {
        for px in 0..pw {
            for y in 0..patch {
                for x in 0..patch {
                    for c in 0..3 {
                        let v = image.get(py * patch + y, px * patch + x, c);
                        data.push(T::lit(f64::from(v) / 255.0));
                    }
                }
            }
        }
    }
    Tensor::matrix(ph * pw, row_len, data)
}
