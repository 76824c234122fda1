//! GAN value of two discrete distributions under the optimal discriminator.

use serde::Serialize;

use crate::{DualityError, Result};

/// Two distributions count as identical when their total variation
/// distance is at most this.
pub const MATCH_TV: f64 = 1e-9;
/// Probability vectors must sum to one within this.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiscreteGanValue {
    /// `sum_x p log(p / (p + q)) + q log(q / (p + q))`, with `0 log 0 = 0`.
    pub value: f64,
    /// `value - 2 log(1/2)`, which is `2 JS(P || Q) >= 0`.
    pub excess: f64,
    pub total_variation: f64,
    /// True iff `total_variation <= MATCH_TV`.
    pub matched: bool,
}

fn check(p: &[f64], name: &str) -> Result<()> {
    if p.is_empty() {
        return Err(DualityError::InvalidDistribution(format!("{name} is empty")));
    }
    if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(DualityError::InvalidDistribution(format!("{name} has entry {x}")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > NORMALIZATION_TOL {
        return Err(DualityError::InvalidDistribution(format!("{name} sums to {s}")));
    }
    Ok(())
}

/// Value of the two-player game when the discriminator is `D* = p / (p + q)`.
pub fn discrete_gan_value(p: &[f64], q: &[f64]) -> Result<DiscreteGanValue> {
    if p.len() != q.len() {
        return Err(DualityError::SupportMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    check(p, "P")?;
    check(q, "Q")?;
    let xlog = |x: f64, s: f64| if x > 0.0 { x * (x / s).ln() } else { 0.0 };
    let mut value = 0.0;
    let mut tv = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let s = pi + qi;
        value += xlog(pi, s) + xlog(qi, s);
        tv += (pi - qi).abs();
    }
    tv *= 0.5;
    Ok(DiscreteGanValue {
        value,
        excess: value - 2.0 * 0.5f64.ln(),
        total_variation: tv,
        matched: tv <= MATCH_TV,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_distributions_hit_the_equilibrium() {
        let p = [0.2, 0.3, 0.5];
        let r = discrete_gan_value(&p, &p).unwrap();
        assert!((r.value - (-1.3862943611198906)).abs() < 1e-15);
        assert!(r.matched);
    }

    #[test]
    fn disjoint_supports_give_zero() {
        let r = discrete_gan_value(&[0.5, 0.5, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(!r.matched);
        assert_eq!(r.total_variation, 1.0);
    }

    #[test]
    fn input_errors() {
        assert!(matches!(
            discrete_gan_value(&[1.0], &[0.5, 0.5]),
            Err(DualityError::SupportMismatch { .. })
        ));
        assert!(discrete_gan_value(&[0.6, 0.6], &[0.5, 0.5]).is_err());
        assert!(discrete_gan_value(&[1.2, -0.2], &[0.5, 0.5]).is_err());
        assert!(discrete_gan_value(&[], &[]).is_err());
    }
}
