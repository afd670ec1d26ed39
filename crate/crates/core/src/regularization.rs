//! Mobility cutoff and entropy densities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regularization parameter `ε ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RegEps(f64);

impl RegEps {
    pub fn new(eps: f64) -> Result<Self> {
        if eps > 0.0 && eps <= 1.0 {
            Ok(Self(eps))
        } else {
            Err(Error::Config(format!("eps must lie in (0, 1], got {eps}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for RegEps {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RegEps> for f64 {
    fn from(e: RegEps) -> f64 {
        e.0
    }
}

/// `a_ε(s) = s + ε` for `s ≥ 0`, `ε` otherwise.
#[inline]
pub fn a_eps(s: f64, eps: RegEps) -> f64 {
    if s >= 0.0 {
        s + eps.0
    } else {
        eps.0
    }
}

/// Entropy density `Φ(s) = s ln s - s + 1`, extended by continuity to `Φ(0) = 1`.
pub fn phi(s: f64) -> Result<f64> {
    if s.is_nan() || s < 0.0 {
        return Err(Error::Domain(format!("entropy density needs s >= 0, got {s}")));
    }
    if s == 0.0 {
        return Ok(1.0);
    }
    Ok(s * s.ln() - s + 1.0)
}

/// Regularized entropy density `Φ_ε` and its first two derivatives.
///
/// Above zero it is `Φ` shifted by `ε`; below zero it continues as the
/// quadratic with `Φ_ε'' = 1/ε`, so that `Φ_ε'' = 1/a_ε` everywhere and a
/// negative value `-δ` costs at least `δ²/(2ε)`.
pub fn phi_eps(s: f64, eps: RegEps, deriv: u8) -> Result<f64> {
    let e = eps.0;
    let v = match (deriv, s >= 0.0) {
        (0, true) => {
            let u = s + e;
            u * u.ln() - u + 1.0
        }
        (0, false) => s * s / (2.0 * e) + s * e.ln() + e * e.ln() - e + 1.0,
        (1, true) => (s + e).ln(),
        (1, false) => s / e + e.ln(),
        (2, _) => 1.0 / a_eps(s, eps),
        _ => return Err(Error::Input(format!("derivative order {deriv} not supported"))),
    };
    Ok(v)
}

/// `Φ_ε` without the derivative dispatch; used inside quadrature loops.
#[inline]
pub(crate) fn phi_eps_value(s: f64, eps: RegEps) -> f64 {
    let e = eps.0;
    if s >= 0.0 {
        let u = s + e;
        u * u.ln() - u + 1.0
    } else {
        s * s / (2.0 * e) + s * e.ln() + e * e.ln() - e + 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eps(v: f64) -> RegEps {
        RegEps::new(v).unwrap()
    }

    #[test]
    fn eps_range() {
        assert!(RegEps::new(0.0).is_err());
        assert!(RegEps::new(1.5).is_err());
        assert!(RegEps::new(f64::NAN).is_err());
        assert!(RegEps::new(1.0).is_ok());
    }

    #[test]
    fn mobility_branches() {
        assert_abs_diff_eq!(a_eps(0.5, eps(0.25)), 0.75, epsilon = 1e-15);
        assert_eq!(a_eps(-3.2, eps(0.25)), 0.25);
        assert_eq!(a_eps(0.0, eps(0.3)), 0.3);
        assert_eq!(a_eps(-0.0, eps(0.3)), 0.3);
    }

    #[test]
    fn entropy_density_values() {
        assert_eq!(phi(1.0).unwrap(), 0.0);
        assert_eq!(phi(0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(phi(std::f64::consts::E).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(phi(-1e-9), Err(Error::Domain(_))));
    }

    #[test]
    fn regularized_entropy_values() {
        for e in [1e-3, 0.1, 0.5, 1.0] {
            assert_abs_diff_eq!(phi_eps(1.0 - e, eps(e), 0).unwrap(), 0.0, epsilon = 1e-15);
        }
        assert_eq!(phi_eps(0.0, eps(1.0), 0).unwrap(), 0.0);
        // lower branch: 0.25 + 0.5 ln 2 - 0.5 ln 2 + 0.5
        assert_abs_diff_eq!(phi_eps(-0.5, eps(0.5), 0).unwrap(), 0.75, epsilon = 1e-15);
        assert!(phi_eps(0.0, eps(0.5), 3).is_err());
    }

    #[test]
    fn first_derivative_continuous_at_zero() {
        for e in [1e-3, 0.2, 1.0] {
            let ln_e = f64::ln(e);
            assert_eq!(phi_eps(0.0, eps(e), 1).unwrap(), ln_e);
            assert_abs_diff_eq!(phi_eps(-1e-300, eps(e), 1).unwrap(), ln_e, epsilon = 1e-290);
        }
    }

    #[test]
    fn second_derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-4;
        for _ in 0..1000 {
            let e: f64 = rng.random_range(0.05..1.0);
            let mut s: f64 = rng.random_range(-2.0..2.0);
            if s.abs() < 1e-3 {
                s = 0.5;
            }
            let ep = eps(e);
            let fd = (phi_eps(s + h, ep, 0).unwrap() - 2.0 * phi_eps(s, ep, 0).unwrap()
                + phi_eps(s - h, ep, 0).unwrap())
                / (h * h);
            let exact = phi_eps(s, ep, 2).unwrap();
            assert!((fd - exact).abs() <= 1e-6 * exact, "s={s} e={e} fd={fd} exact={exact}");
        }
    }

    #[test]
    fn pointwise_convergence_as_eps_shrinks() {
        for s in [0.0, 0.3, 1.0, 2.5] {
            let errs: Vec<f64> = [1e-1, 1e-2, 1e-3]
                .iter()
                .map(|&e| (phi_eps(s, eps(e), 0).unwrap() - phi(s).unwrap()).abs())
                .collect();
            assert!(errs[0] > errs[1] && errs[1] > errs[2], "s={s}: {errs:?}");
        }
    }

    proptest! {
        #[test]
        fn nonnegative(s in -50.0f64..50.0, e in 1e-6f64..=1.0) {
            prop_assert!(phi_eps(s, eps(e), 0).unwrap() >= 0.0);
        }

        #[test]
        fn negative_values_penalized(d in 1e-6f64..10.0, e in 1e-6f64..=1.0) {
            let v = phi_eps(-d, eps(e), 0).unwrap();
            prop_assert!(v >= d * d / (2.0 * e) * (1.0 - 1e-12));
        }

        #[test]
        fn curvature_bounds(s in -10.0f64..10.0, t in -10.0f64..10.0, e in 1e-4f64..=1.0) {
            let ep = eps(e);
            let a = phi_eps(s, ep, 2).unwrap();
            let b = phi_eps(t, ep, 2).unwrap();
            prop_assert!(a > 0.0 && a <= 1.0 / e);
            prop_assert!((a - b).abs() <= (s - t).abs() / (e * e) * (1.0 + 1e-12));
        }

        #[test]
        fn value_kernel_agrees(s in -5.0f64..5.0, e in 1e-3f64..=1.0) {
            prop_assert_eq!(phi_eps_value(s, eps(e)), phi_eps(s, eps(e), 0).unwrap());
        }
    }
}
