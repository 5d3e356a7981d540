//! Loss terms and their gradients, mean-reduced over elements.

use crate::error::{Error, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

fn check_shapes(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch { expected: (target.len(), 1), actual: (pred.len(), 1) });
    }
    if pred.is_empty() {
        return Err(Error::invalid("pred", "loss over zero elements is undefined"));
    }
    Ok(())
}

/// Binary cross entropy `-mean(y ln p + (1 - y) ln(1 - p))` and `d loss / d p`.
///
/// Where `p` falls outside the clamp interval the loss is flat, so the
/// gradient there is zero.
pub fn bce(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_shapes(pred, target)?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let q = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            loss -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
            if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
                0.0
            } else {
                (q - y) / (q * (1.0 - q)) / n
            }
        })
        .collect();
    Ok((loss / n, grad))
}

/// Smooth L1 with unit transition: `0.5 d^2` for `|d| < 1`, `|d| - 0.5` beyond.
pub fn smooth_l1(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_shapes(pred, target)?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p - t;
            if d.abs() < 1.0 {
                loss += 0.5 * d * d;
                d / n
            } else {
                loss += d.abs() - 0.5;
                d.signum() / n
            }
        })
        .collect();
    Ok((loss / n, grad))
}

/// Weights of the proposal, global layering, instance layering and sem-dist terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub proposal: f64,
    pub global_layering: f64,
    pub instance_layering: f64,
    pub semdist: f64,
}

impl Default for LossWeights {
    /// All ones, the fine-tuning setting.
    fn default() -> Self {
        LossWeights { proposal: 1.0, global_layering: 1.0, instance_layering: 1.0, semdist: 1.0 }
    }
}

impl LossWeights {
    pub fn new(proposal: f64, global_layering: f64, instance_layering: f64, semdist: f64) -> Result<Self> {
        let w = LossWeights { proposal, global_layering, instance_layering, semdist };
        if [proposal, global_layering, instance_layering, semdist]
            .iter()
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::invalid("weights", "loss weights must be finite and nonnegative"));
        }
        Ok(w)
    }
}

/// Scalar terms of one training step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub proposal: f64,
    pub global_layering: f64,
    pub instance_layering: f64,
    pub semdist: f64,
}

pub fn total_loss(terms: LossTerms, w: LossWeights) -> f64 {
    w.proposal * terms.proposal
        + w.global_layering * terms.global_layering
        + w.instance_layering * terms.instance_layering
        + w.semdist * terms.semdist
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_closed_form() {
        let (loss, grad) = bce(&[0.5; 4], &[1.0; 4]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(grad.iter().all(|&g| (g - (-0.5)).abs() < 1e-12));
    }

    #[test]
    fn bce_at_clamped_optimum() {
        let (loss, grad) = bce(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert!(loss <= -(1.0 - PROB_EPS).ln() + 1e-15);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn smooth_l1_closed_form() {
        assert_eq!(smooth_l1(&[0.5], &[0.0]).unwrap().0, 0.125);
        assert_eq!(smooth_l1(&[2.0], &[0.0]).unwrap().0, 1.5);
        assert_eq!(smooth_l1(&[-2.0], &[0.0]).unwrap().1, vec![-1.0]);
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(bce(&[0.5], &[0.5, 0.5]), Err(Error::DimensionMismatch { .. })));
        assert!(smooth_l1(&[], &[]).is_err());
    }

    #[test]
    fn weighted_sum() {
        let terms = LossTerms { proposal: 1.0, global_layering: 2.0, instance_layering: 3.0, semdist: 4.0 };
        assert_eq!(total_loss(terms, LossWeights::default()), 10.0);
        let w = LossWeights::new(1.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(total_loss(terms, w), 8.0);
        assert!(LossWeights::new(-1.0, 1.0, 1.0, 1.0).is_err());
    }
}
