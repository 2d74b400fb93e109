//! Scripted stand-ins for self-localization of a failed chain's first error.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Localizer {
    /// Returns the ground-truth first error.
    Oracle,
    /// Exact with probability `p_exact`; otherwise a nonzero signed offset
    /// uniform on `[-max_offset, max_offset]`, clamped into `1..=depth`.
    Noisy { p_exact: f64, max_offset: usize },
    /// Uniform on `1..=depth`, ignoring the chain.
    Random,
}

impl Localizer {
    pub fn validate(&self) -> Result<()> {
        if let Localizer::Noisy { p_exact, max_offset } = *self {
            if !(0.0..=1.0).contains(&p_exact) {
                return Err(param_err("p_exact", p_exact, "must lie in [0, 1]"));
            }
            if max_offset == 0 && p_exact < 1.0 {
                return Err(param_err("max_offset", max_offset, "must be positive when p_exact < 1"));
            }
        }
        Ok(())
    }

    /// A 1-based step index in `1..=depth` for a chain whose true first error is `truth`.
    pub fn localize<R: Rng + ?Sized>(&self, truth: usize, depth: usize, rng: &mut R) -> usize {
        match *self {
            Localizer::Oracle => truth,
            Localizer::Random => rng.random_range(1..=depth),
            Localizer::Noisy { p_exact, max_offset } => {
                if rng.random::<f64>() < p_exact {
                    return truth;
                }
                let magnitude = rng.random_range(1..=max_offset) as i64;
                let offset = if rng.random::<bool>() { magnitude } else { -magnitude };
                (truth as i64 + offset).clamp(1, depth as i64) as usize
            }
        }
    }
}

/// "Clean" localizations stop at or before the true error.
pub fn is_clean(index: usize, truth: usize) -> bool {
    index <= truth
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn indices_stay_in_range() {
        let mut rng = rng_from_seed(0);
        for loc in [Localizer::Oracle, Localizer::Random, Localizer::Noisy { p_exact: 0.3, max_offset: 4 }] {
            for truth in 1..=5 {
                for _ in 0..200 {
                    let i = loc.localize(truth, 5, &mut rng);
                    assert!((1..=5).contains(&i));
                }
            }
        }
    }

    #[test]
    fn oracle_is_exact() {
        let mut rng = rng_from_seed(0);
        assert!((0..100).all(|_| Localizer::Oracle.localize(3, 6, &mut rng) == 3));
    }

    #[test]
    fn noisy_exact_rate() {
        let mut rng = rng_from_seed(7);
        let loc = Localizer::Noisy { p_exact: 0.6, max_offset: 1 };
        let n = 20_000;
        // Truth in the middle so clamping never maps an offset back onto it.
        let exact = (0..n).filter(|_| loc.localize(3, 5, &mut rng) == 3).count() as f64 / n as f64;
        assert!((exact - 0.6).abs() < 4.0 * (0.24f64 / n as f64).sqrt());
    }

    #[test]
    fn validation() {
        assert!(Localizer::Noisy { p_exact: 1.5, max_offset: 1 }.validate().is_err());
        assert!(Localizer::Noisy { p_exact: 0.5, max_offset: 0 }.validate().is_err());
        assert!(Localizer::Oracle.validate().is_ok());
    }
}
