//! Parameter update rules.

use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One optimizer step over every parameter that carries a gradient buffer.
pub trait Optimizer<T: Scalar> {
    fn step(&mut self, store: &mut ParamStore<T>) -> Result<()>;
    fn steps_taken(&self) -> u64;
}

fn check_finite<T: Scalar>(store: &ParamStore<T>, id: ParamId, grad: &[T]) -> Result<()> {
    if grad.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("gradient of `{}`", store.name(id))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub struct Adam<T> {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros = || {
            store
                .ids()
                .map(|id| vec![T::zero(); store.get(id).numel()])
                .collect()
        };
        Adam {
            config,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

impl<T: Scalar> Optimizer<T> for Adam<T> {
    fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        let ids: Vec<ParamId> = store.ids().collect();
        for &id in &ids {
            if let Some(g) = store.grad(id) {
                check_finite(store, id, g)?;
            }
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bc1 = T::one() - T::lit(c.beta1.powi(self.t as i32));
        let bc2 = T::one() - T::lit(c.beta2.powi(self.t as i32));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        for id in ids {
            let Some(g) = store.grad(id).map(<[T]>::to_vec) else {
                continue;
            };
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            let p = store.get_mut(id).data_mut();
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] = p[i] - lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }

    fn steps_taken(&self) -> u64 {
        self.t
    }
}

/// Factored second-moment optimizer.
///
/// With `relative_step` the step size is `min(lr, 1/sqrt(t))`, and with `scale_parameter` it is
/// further multiplied by `max(eps2, rms(param))`. Otherwise `lr` is used as is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdafactorConfig {
    pub lr: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub clip_threshold: f64,
    pub decay_rate: f64,
    pub beta1: Option<f64>,
    pub relative_step: bool,
    pub scale_parameter: bool,
}

impl Default for AdafactorConfig {
    fn default() -> Self {
        AdafactorConfig {
            lr: 1e-2,
            eps1: 1e-30,
            eps2: 1e-3,
            clip_threshold: 1.0,
            decay_rate: -0.8,
            beta1: None,
            relative_step: true,
            scale_parameter: true,
        }
    }
}

enum Second<T> {
    Factored { row: Vec<T>, col: Vec<T> },
    Full(Vec<T>),
}

struct Slot<T> {
    second: Second<T>,
    momentum: Option<Vec<T>>,
    rows: usize,
    cols: usize,
}

pub struct Adafactor<T> {
    pub config: AdafactorConfig,
    t: u64,
    slots: Vec<Slot<T>>,
}

fn rms<T: Scalar>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    (x.iter().map(|&v| v * v).sum::<T>() / T::lit(x.len() as f64)).sqrt()
}

impl<T: Scalar> Adafactor<T> {
    pub fn new(config: AdafactorConfig, store: &ParamStore<T>) -> Self {
        let slots = store
            .ids()
            .map(|id| {
                let t = store.get(id);
                let factored = t.shape().len() == 2 && t.rows() > 1 && t.cols() > 1;
                let (rows, cols) = (t.rows(), t.cols());
                let second = if factored {
                    Second::Factored {
                        row: vec![T::zero(); rows],
                        col: vec![T::zero(); cols],
                    }
                } else {
                    Second::Full(vec![T::zero(); t.numel()])
                };
                Slot {
                    second,
                    momentum: config.beta1.map(|_| vec![T::zero(); t.numel()]),
                    rows,
                    cols,
                }
            })
            .collect();
        Adafactor {
            config,
            t: 0,
            slots,
        }
    }

    /// Current second-moment estimate of a parameter, expanded to its full shape.
    pub fn second_moment(&self, id: ParamId) -> Vec<T> {
        let slot = &self.slots[id.index()];
        match &slot.second {
            Second::Full(v) => v.clone(),
            Second::Factored { row, col } => {
                let mean = row.iter().copied().sum::<T>() / T::lit(row.len() as f64);
                let mut out = Vec::with_capacity(slot.rows * slot.cols);
                for &r in row {
                    for &c in col {
                        out.push(r * c / mean);
                    }
                }
                out
            }
        }
    }

    /// Whether the parameter uses row/column accumulators.
    pub fn is_factored(&self, id: ParamId) -> bool {
        matches!(self.slots[id.index()].second, Second::Factored { .. })
    }
}

impl<T: Scalar> Optimizer<T> for Adafactor<T> {
    fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        let ids: Vec<ParamId> = store.ids().collect();
        for &id in &ids {
            if let Some(g) = store.grad(id) {
                check_finite(store, id, g)?;
            }
        }
        self.t += 1;
        let c = self.config;
        let t = self.t as f64;
        let beta2t = T::lit(1.0 - t.powf(c.decay_rate));
        let one_minus = T::one() - beta2t;
        let eps1 = T::lit(c.eps1);
        for id in ids {
            let Some(g) = store.grad(id).map(<[T]>::to_vec) else {
                continue;
            };
            let mut lr = T::lit(if c.relative_step {
                c.lr.min(1.0 / t.sqrt())
            } else {
                c.lr
            });
            if c.scale_parameter {
                lr = lr * T::lit(c.eps2).max(rms(store.get(id).data()));
            }
            let sq: Vec<T> = g.iter().map(|&x| x * x + eps1).collect();
            let slot = &mut self.slots[id.index()];
            match &mut slot.second {
                Second::Full(v) => {
                    for (vi, &s) in v.iter_mut().zip(&sq) {
                        *vi = beta2t * *vi + one_minus * s;
                    }
                }
                Second::Factored { row, col } => {
                    let (r, cc) = (slot.rows, slot.cols);
                    for i in 0..r {
                        let m = sq[i * cc..(i + 1) * cc].iter().copied().sum::<T>()
                            / T::lit(cc as f64);
                        row[i] = beta2t * row[i] + one_minus * m;
                    }
                    for j in 0..cc {
                        let m = (0..r).map(|i| sq[i * cc + j]).sum::<T>() / T::lit(r as f64);
                        col[j] = beta2t * col[j] + one_minus * m;
                    }
                }
            }
            let v = self.second_moment(id);
            let slot = &mut self.slots[id.index()];
            let mut update: Vec<T> = g
                .iter()
                .zip(&v)
                .map(|(&gi, &vi)| gi / vi.sqrt())
                .collect();
            let denom = T::one().max(rms(&update) / T::lit(c.clip_threshold));
            for u in &mut update {
                *u = *u * lr / denom;
            }
            if let (Some(b1), Some(m)) = (c.beta1, slot.momentum.as_mut()) {
                let b1 = T::lit(b1);
                for (mi, u) in m.iter_mut().zip(update.iter_mut()) {
                    *mi = b1 * *mi + (T::one() - b1) * *u;
                    *u = *mi;
                }
            }
            let p = store.get_mut(id).data_mut();
            for (pi, u) in p.iter_mut().zip(update) {
                *pi = *pi - u;
            }
        }
        Ok(())
    }

    fn steps_taken(&self) -> u64 {
        self.t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store_with(values: Vec<f64>, shape: &[usize]) -> (ParamStore<f64>, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::new(shape.to_vec(), values).unwrap());
        (s, id)
    }

    fn set_grad(s: &mut ParamStore<f64>, id: ParamId, g: Vec<f64>) {
        s.get_mut(id).grad = Some(g);
    }

    #[test]
    fn adam_zero_grad_keeps_params() {
        let (mut s, id) = store_with(vec![1.0, -2.0, 3.0], &[3]);
        let mut opt = Adam::new(AdamConfig::default(), &s);
        for _ in 0..10 {
            set_grad(&mut s, id, vec![0.0; 3]);
            opt.step(&mut s).unwrap();
        }
        assert_eq!(s.get(id).data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn adam_moves_against_constant_gradient() {
        let g = vec![0.7, -0.01, 3.0, -250.0];
        let (mut s, id) = store_with(vec![0.0; 4], &[4]);
        let mut opt = Adam::new(AdamConfig::default(), &s);
        let mut last = vec![0.0; 4];
        for _ in 0..1000 {
            set_grad(&mut s, id, g.clone());
            last = s.get(id).data().to_vec();
            opt.step(&mut s).unwrap();
        }
        for (i, (&now, &before)) in s.get(id).data().iter().zip(&last).enumerate() {
            let delta: f64 = now - before;
            assert_eq!(delta.signum(), -g[i].signum());
            // Bias-corrected moments of a constant gradient give a step of almost exactly lr.
            assert!((delta.abs() - 1e-3).abs() < 1e-6);
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let (mut s, id) = store_with(vec![0.5, 0.25], &[2]);
            let mut opt = Adam::new(AdamConfig::default(), &s);
            for k in 0..50 {
                let p = s.get(id).data().to_vec();
                set_grad(&mut s, id, vec![p[0] * 2.0 + k as f64 * 0.01, -p[1]]);
                opt.step(&mut s).unwrap();
            }
            s.get(id).data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn adam_rejects_nan() {
        let (mut s, id) = store_with(vec![0.0], &[1]);
        let mut opt = Adam::new(AdamConfig::default(), &s);
        set_grad(&mut s, id, vec![f64::NAN]);
        assert!(matches!(opt.step(&mut s), Err(Error::NonFinite(_))));
    }

    #[test]
    fn adafactor_zero_grad_keeps_params() {
        let (mut s, id) = store_with(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        let mut opt = Adafactor::new(AdafactorConfig::default(), &s);
        for _ in 0..5 {
            set_grad(&mut s, id, vec![0.0; 6]);
            opt.step(&mut s).unwrap();
        }
        assert_eq!(s.get(id).data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn adafactor_rank_one_is_exact() {
        let u = [0.3, -1.2, 2.0, 0.05];
        let v = [1.5, -0.4, 0.9];
        let g: Vec<f64> = u.iter().flat_map(|&a| v.iter().map(move |&b| a * b)).collect();
        let (mut s, id) = store_with(vec![0.1; 12], &[4, 3]);
        let mut opt = Adafactor::new(AdafactorConfig::default(), &s);
        assert!(opt.is_factored(id));
        set_grad(&mut s, id, g.clone());
        opt.step(&mut s).unwrap();
        for (est, gi) in opt.second_moment(id).iter().zip(&g) {
            let want = gi * gi;
            assert!((est - want).abs() / want < 1e-10, "{est} vs {want}");
        }
    }

    #[test]
    fn adafactor_minimizes_bowl() {
        let (mut s, id) = store_with(vec![3.0, -2.0, 1.0, 0.5, -1.5, 2.5], &[2, 3]);
        let cfg = AdafactorConfig {
            lr: 0.05,
            beta1: Some(0.9),
            relative_step: false,
            scale_parameter: false,
            ..AdafactorConfig::default()
        };
        let mut opt = Adafactor::new(cfg, &s);
        let mut steps = 0;
        while steps < 500 {
            let p = s.get(id).data().to_vec();
            if p.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-3 {
                break;
            }
            set_grad(&mut s, id, p.iter().map(|x| 2.0 * x).collect());
            opt.step(&mut s).unwrap();
            steps += 1;
        }
        let norm = s.get(id).data().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "norm {norm} after {steps} steps");
    }

    #[test]
    fn adafactor_rejects_infinite() {
        let (mut s, id) = store_with(vec![0.0, 0.0], &[2]);
        let mut opt = Adafactor::new(AdafactorConfig::default(), &s);
        set_grad(&mut s, id, vec![1.0, f64::INFINITY]);
        assert!(matches!(opt.step(&mut s), Err(Error::NonFinite(_))));
        assert_eq!(opt.steps_taken(), 0);
    }
}
