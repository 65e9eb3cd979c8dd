use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;

use super::array::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, ParamId>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, mut tensor: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name {name}"
        );
        tensor.requires_grad = true;
        let id = ParamId(self.tensors.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        id
    }

    /// Glorot-uniform matrix: entries in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn add_xavier<R: Rng>(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> ParamId {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| T::lit(rng.gen_range(-limit..=limit)))
            .collect();
        self.add(
            name,
            Tensor::matrix(fan_in, fan_out, data).expect("sized data"),
        )
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn add_ones(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::full(shape, T::one()))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Replaces every gradient buffer; parameters missing from `grads` get zeros.
    pub fn set_grads(&mut self, grads: Gradients<T>) {
        let mut grads = grads.0;
        grads.resize(self.tensors.len(), None);
        for (t, g) in self.tensors.iter_mut().zip(grads) {
            t.grad = Some(g.unwrap_or_else(|| vec![T::zero(); t.numel()]));
        }
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.grad = Some(vec![T::zero(); t.numel()]);
        }
    }

    pub fn grad(&self, id: ParamId) -> Option<&[T]> {
        self.tensors[id.0].grad.as_deref()
    }

    pub fn grad_norm(&self, ids: impl IntoIterator<Item = ParamId>) -> T {
        ids.into_iter()
            .filter_map(|id| self.grad(id))
            .flat_map(|g| g.iter())
            .map(|&x| x * x)
            .sum::<T>()
            .sqrt()
    }

    /// Scales all gradients so their global L2 norm is at most `max_norm`. Returns the norm before
    /// clipping.
    pub fn clip_grad_norm(&mut self, max_norm: T) -> T {
        let norm = self.grad_norm(self.ids().collect::<Vec<_>>());
        if norm > max_norm && norm > T::zero() {
            let scale = max_norm / norm;
            for t in &mut self.tensors {
                if let Some(g) = &mut t.grad {
                    for x in g.iter_mut() {
                        *x = *x * scale;
                    }
                }
            }
        }
        norm
    }

    /// Copies values (not gradients) from another store with identical layout.
    pub fn copy_values_from(&mut self, other: &ParamStore<T>) {
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            dst.data_mut().copy_from_slice(src.data());
        }
    }

    pub fn values_equal(&self, other: &ParamStore<T>) -> bool {
        self.names == other.names
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape() == b.shape() && a.data() == b.data())
    }
}

/// Per-parameter gradients indexed by [`ParamId`]; `None` means the parameter did not take part.
#[derive(Debug, Clone, Default)]
pub struct Gradients<T>(pub(crate) Vec<Option<Vec<T>>>);

impl<T> Gradients<T> {
    pub fn get(&self, id: ParamId) -> Option<&[T]> {
        self.0.get(id.0).and_then(|g| g.as_deref())
    }
}

const MAGIC: &[u8; 8] = b"LUMENCKP";
const VERSION: u32 = 1;

/// Binary checkpoint: magic, version, dtype tag, a free-form metadata string, then every tensor as
/// `name, shape, little-endian values` in store order.
pub fn encode_checkpoint<T: Scalar>(store: &ParamStore<T>, metadata: &str) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::DTYPE.len() as u8);
    out.extend_from_slice(T::DTYPE.as_bytes());
    out.extend_from_slice(&(metadata.len() as u64).to_le_bytes());
    out.extend_from_slice(metadata.as_bytes());
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for (name, t) in store.names.iter().zip(&store.tensors) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in t.data() {
            x.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid utf-8".into()))
    }
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(ParamStore<T>, String)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dlen = r.take(1)?[0] as usize;
    let dtype = r.string(dlen)?;
    if dtype != T::DTYPE {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {dtype}, requested {}",
            T::DTYPE
        )));
    }
    let mlen = r.u64()? as usize;
    let metadata = r.string(mlen)?;
    let count = r.u64()? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let nlen = r.u32()? as usize;
        let name = r.string(nlen)?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * T::BYTES)?;
        let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        store.add(name, Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok((store, metadata))
}

pub fn save_checkpoint<T: Scalar>(path: &Path, store: &ParamStore<T>, metadata: &str) -> Result<()> {
    fs::write(path, encode_checkpoint(store, metadata)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(ParamStore<T>, String)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn xavier_within_limit_and_seeded() {
        let mut a = ParamStore::<f64>::new();
        let mut b = ParamStore::<f64>::new();
        let id = a.add_xavier("w", 10, 6, &mut ChaCha8Rng::seed_from_u64(3));
        b.add_xavier("w", 10, 6, &mut ChaCha8Rng::seed_from_u64(3));
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(a.get(id).data().iter().all(|x| x.abs() <= limit));
        assert!(a.values_equal(&b));
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut s = ParamStore::<f64>::new();
        let id = s.add_zeros("w", &[2]);
        s.get_mut(id).grad = Some(vec![3.0, 4.0]);
        let before = s.clip_grad_norm(1.0);
        assert_eq!(before, 5.0);
        let g = s.grad(id).unwrap();
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn wrong_dtype_and_corruption_rejected() {
        let mut s = ParamStore::<f64>::new();
        s.add("x", Tensor::vector(vec![1.0, 2.0]));
        let bytes = encode_checkpoint(&s, "{}");
        assert!(decode_checkpoint::<f32>(&bytes).is_err());
        assert!(decode_checkpoint::<f64>(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint::<f64>(&bad).is_err());
    }

    proptest! {
        #[test]
        fn checkpoint_round_trip_is_bit_exact(
            vals in proptest::collection::vec(proptest::num::f64::ANY, 1..40),
            vals32 in proptest::collection::vec(proptest::num::f32::ANY, 1..10),
            meta in "[ -~]{0,30}",
        ) {
            let mut s = ParamStore::<f64>::new();
            s.add("a.b", Tensor::vector(vals.clone()));
            s.add("c", Tensor::matrix(1, vals.len(), vals).unwrap());
            let (back, m) = decode_checkpoint::<f64>(&encode_checkpoint(&s, &meta)).unwrap();
            prop_assert_eq!(m, meta);
            prop_assert_eq!(back.len(), 2);
            for id in s.ids() {
                prop_assert_eq!(back.name(id), s.name(id));
                prop_assert_eq!(back.get(id).shape(), s.get(id).shape());
                let x: Vec<u64> = s.get(id).data().iter().map(|v| v.to_bits()).collect();
                let y: Vec<u64> = back.get(id).data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(x, y);
            }
            let mut s32 = ParamStore::<f32>::new();
            s32.add("z", Tensor::vector(vals32.clone()));
            let (b32, _) = decode_checkpoint::<f32>(&encode_checkpoint(&s32, "")).unwrap();
            let x: Vec<u32> = vals32.iter().map(|v| v.to_bits()).collect();
            let y: Vec<u32> = b32.get(ParamId(0)).data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(x, y);
        }
    }
}
