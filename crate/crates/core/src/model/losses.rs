use serde::{Deserialize, Serialize};

use super::config::LossWeighting;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Var};

/// Component losses and their combination. Disabled components are reported as `0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_seq: f64,
    pub l_exp: f64,
    pub l_rp: f64,
    pub l_total: f64,
}

/// Combines component losses. `None` marks a disabled component, whose weight is ignored.
pub fn joint_loss(
    l_seq: Option<f64>,
    l_exp: Option<f64>,
    l_rp: f64,
    betas: [f64; 3],
    weighting: LossWeighting,
) -> Result<LossBreakdown> {
    let parts = [l_seq, l_exp, Some(l_rp)];
    for (name, v) in ["L_SEQ", "L_EXP", "L_RP"].iter().zip(parts) {
        if let Some(v) = v {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{name} = {v}")));
            }
        }
    }
    let l_total = match weighting {
        LossWeighting::Weighted => parts
            .iter()
            .zip(betas)
            .filter_map(|(p, b)| p.map(|v| b * v))
            .sum(),
        LossWeighting::Unweighted => {
            let live: Vec<f64> = parts.iter().flatten().copied().collect();
            live.iter().sum::<f64>() / live.len() as f64
        }
    };
    Ok(LossBreakdown {
        l_seq: l_seq.unwrap_or(0.0),
        l_exp: l_exp.unwrap_or(0.0),
        l_rp,
        l_total,
    })
}

/// Tape form of [`joint_loss`]. Components with zero weight are left off the tape, so they
/// contribute no gradient at all.
pub fn joint_loss_on_tape<T: Scalar>(
    g: &mut Graph<'_, T>,
    l_seq: Option<Var>,
    l_exp: Option<Var>,
    l_rp: Var,
    betas: [f64; 3],
    weighting: LossWeighting,
) -> Result<Var> {
    let parts = [l_seq, l_exp, Some(l_rp)];
    let mut terms = Vec::with_capacity(3);
    match weighting {
        LossWeighting::Weighted => {
            for (p, b) in parts.iter().zip(betas) {
                if let (Some(v), true) = (p, b > 0.0) {
                    terms.push(g.scale(*v, T::lit(b)));
                }
            }
        }
        LossWeighting::Unweighted => {
            let live: Vec<Var> = parts.iter().flatten().copied().collect();
            let inv = T::lit(1.0 / live.len() as f64);
            terms.extend(live.into_iter().map(|v| g.scale(v, inv)));
        }
    }
    let mut total = match terms.first() {
        Some(&t) => t,
        None => return Ok(g.constant(crate::tensor::Tensor::scalar(T::zero()))),
    };
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    const B: [f64; 3] = [0.2, 0.5, 0.3];

    #[test]
    fn weighted_combination() {
        let l = joint_loss(Some(1.0), Some(2.0), 3.0, B, LossWeighting::Weighted).unwrap();
        assert!((l.l_total - 2.1).abs() < 1e-12);
    }

    #[test]
    fn generation_only_weights() {
        let l = joint_loss(Some(1.0), Some(2.0), 3.0, [0.0, 1.0, 0.0], LossWeighting::Weighted)
            .unwrap();
        assert_eq!(l.l_total, 2.0);
    }

    #[test]
    fn unweighted_is_mean() {
        let l = joint_loss(Some(1.0), Some(2.0), 3.0, B, LossWeighting::Unweighted).unwrap();
        assert!((l.l_total - 2.0).abs() < 1e-12);
        let l = joint_loss(None, Some(2.0), 3.0, B, LossWeighting::Unweighted).unwrap();
        assert!((l.l_total - 2.5).abs() < 1e-12);
    }

    #[test]
    fn disabled_terms_ignore_their_beta() {
        let l = joint_loss(Some(1.0), None, 3.0, B, LossWeighting::Weighted).unwrap();
        assert!((l.l_total - (0.2 + 0.9)).abs() < 1e-12);
        assert_eq!(l.l_exp, 0.0);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(joint_loss(Some(f64::NAN), Some(2.0), 3.0, B, LossWeighting::Weighted).is_err());
        assert!(joint_loss(None, None, f64::INFINITY, B, LossWeighting::Weighted).is_err());
    }

    #[test]
    fn tape_matches_scalar_form() {
        let mut g = Graph::<f64>::detached();
        let a = g.constant(crate::tensor::Tensor::scalar(1.0));
        let b = g.constant(crate::tensor::Tensor::scalar(2.0));
        let c = g.constant(crate::tensor::Tensor::scalar(3.0));
        for w in [LossWeighting::Weighted, LossWeighting::Unweighted] {
            let t = joint_loss_on_tape(&mut g, Some(a), Some(b), c, B, w).unwrap();
            let s = joint_loss(Some(1.0), Some(2.0), 3.0, B, w).unwrap();
            assert_eq!(g.value(t).item(), s.l_total);
        }
    }
}
