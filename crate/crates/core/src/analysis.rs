//! Leggett-Garg quantities: correlators, `K`, `K′`, the witness `W`,
//! closed-form predictions for the four-step walk, venality and the
//! macroscopicity measure.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::lattice::PositionDistribution;
use crate::measurement::{q3, Branch, QScheme};

/// Tolerance on the normalization of distributions and arm probabilities.
pub const PROBABILITY_TOLERANCE: f64 = 1e-6;

/// Mass of ¹³³Cs in unified atomic mass units.
pub const CS_MASS_U: f64 = 132.905;
/// Atomic mass unit over electron mass.
pub const U_PER_ELECTRON_MASS: f64 = 1822.888;
/// Largest separation of the walker's branches in a four-step walk, in metres.
pub const MAX_SEPARATION_M: f64 = 2e-6;

/// The three two-time correlators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlators {
    pub k12: f64,
    pub k13: f64,
    pub k23: f64,
}

impl Correlators {
    pub fn k(&self) -> f64 {
        lg_k(self.k12, self.k23, self.k13)
    }

    pub fn k_prime(&self) -> f64 {
        lg_k_prime(self.k12, self.k23, self.k13)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMethod {
    Bootstrap,
    MonteCarlo,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Uncertainty {
    pub sigma: f64,
    pub method: UncertaintyMethod,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub k12: f64,
    pub k13: f64,
    pub k23: f64,
    pub k: f64,
    pub k_prime: f64,
    pub witness_w: f64,
    pub uncertainty: Option<Uncertainty>,
    pub venality_zeta: f64,
    pub adjusted_bound: f64,
}

impl CorrelationReport {
    pub fn new(
        c: Correlators,
        venality_zeta: f64,
        uncertainty: Option<Uncertainty>,
    ) -> Result<Self> {
        check_unit("venality", venality_zeta)?;
        let k = c.k();
        Ok(CorrelationReport {
            k12: c.k12,
            k13: c.k13,
            k23: c.k23,
            k,
            k_prime: c.k_prime(),
            witness_w: witness(k),
            uncertainty,
            venality_zeta,
            adjusted_bound: venality_bound(venality_zeta)?,
        })
    }

    pub fn correlators(&self) -> Correlators {
        Correlators {
            k12: self.k12,
            k13: self.k13,
            k23: self.k23,
        }
    }

    /// True when `K` exceeds the venality-adjusted bound.
    pub fn violates(&self) -> bool {
        self.k > self.adjusted_bound
    }
}

fn check_normalized(total: f64) -> Result<()> {
    if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
        Err(Error::Unnormalized(total))
    } else {
        Ok(())
    }
}

/// `K₁₃ = ⟨Q(t₃)⟩` of a final position distribution.
pub fn k13_from_distribution(dist: &PositionDistribution) -> Result<f64> {
    check_normalized(dist.total())?;
    Ok(dist.iter().map(|(x, p)| p * q3(x)).sum())
}

/// `K₁₂ = Σₓ P(t₂;x)·Q(t₂;x)`; identically 1 for the constant scheme.
pub fn k12_from_arms(p_left: f64, p_right: f64, scheme: &QScheme) -> Result<f64> {
    check_arm_probabilities(p_left, p_right)?;
    Ok(p_left * scheme.q2(Branch::Left) + p_right * scheme.q2(Branch::Right))
}

fn check_arm_probabilities(p_left: f64, p_right: f64) -> Result<()> {
    check_unit("arm probability", p_left)?;
    check_unit("arm probability", p_right)?;
    if (p_left + p_right - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(Error::ProbabilityMismatch(p_left + p_right));
    }
    Ok(())
}

/// Law of total probability: `K₂₃ = Σₓ P(t₂;x)·Q(t₂;x)·⟨Q(t₃)⟩ₓ`.
///
/// A conditional mean only matters when its arm probability is nonzero, so
/// it may be `NaN` (no retained events) for an arm with `p = 0`.
pub fn k23_from_arms(
    p_left: f64,
    mean_left: f64,
    p_right: f64,
    mean_right: f64,
    scheme: &QScheme,
) -> Result<f64> {
    check_arm_probabilities(p_left, p_right)?;
    let term = |p: f64, mean: f64, branch: Branch| -> Result<f64> {
        if p == 0.0 {
            return Ok(0.0);
        }
        if !(mean.abs() <= 1.0) {
            return Err(Error::invalid(
                "conditional mean",
                format!("{mean} is not in [-1, 1]"),
            ));
        }
        Ok(p * scheme.q2(branch) * mean)
    };
    Ok(term(p_left, mean_left, Branch::Left)? + term(p_right, mean_right, Branch::Right)?)
}

/// `K = K₁₂ + K₂₃ − K₁₃`.
pub fn lg_k(k12: f64, k23: f64, k13: f64) -> f64 {
    k12 + (k23 - k13)
}

/// `K′ = K₁₂ − K₂₃ + K₁₃`.
pub fn lg_k_prime(k12: f64, k23: f64, k13: f64) -> f64 {
    k12 - (k23 - k13)
}

/// `W = |K − 1|`.
pub fn witness(k: f64) -> f64 {
    (k - 1.0).abs()
}

/// Closed-form `K(θ)` of the four-step walk with `Q(t₂) = 1`.
pub fn analytic_k_constant(theta: f64) -> f64 {
    (19.0 - 4.0 * (2.0 * theta).cos() + (4.0 * theta).cos()) / 16.0
}

/// Closed-form `K(θ)` of the four-step walk with the dichotomic `ξ = −1`
/// assignment.
pub fn analytic_k_dichotomic(theta: f64) -> f64 {
    (33.0 - 4.0 * theta.cos() - 4.0 * (2.0 * theta).cos()
        + 4.0 * (3.0 * theta).cos()
        + 3.0 * (4.0 * theta).cos())
        / 32.0
}

/// Maximizes `f` on `[lo, hi]`: a coarse scan brackets the best grid point,
/// golden-section search refines it to `tol`.
pub fn maximize(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const GRID: usize = 256;
    let h = (hi - lo) / GRID as f64;
    let best = (0..=GRID)
        .map(|i| lo + h * i as f64)
        .max_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap_or(lo);
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Location and value of the maximum of the dichotomic closed form on `[0, π]`.
pub fn dichotomic_maximum() -> (f64, f64) {
    maximize(analytic_k_dichotomic, 0.0, std::f64::consts::PI, 1e-10)
}

/// `1 + 2ζ`.
pub fn venality_bound(zeta: f64) -> Result<f64> {
    check_unit("venality", zeta)?;
    Ok(1.0 + 2.0 * zeta)
}

/// `K = 1 + (1−ζ)K₂₃ⁱᵈᵉᵃˡ + ζK₂₃ᶜᵒʳʳᵘᵖᵗ − K₁₃`.
pub fn venality_decompose(k23_ideal: f64, k23_corrupt: f64, zeta: f64, k13: f64) -> Result<f64> {
    check_unit("venality", zeta)?;
    for (name, v) in [
        ("k23_ideal", k23_ideal),
        ("k23_corrupt", k23_corrupt),
        ("k13", k13),
    ] {
        if !(v.abs() <= 1.0) {
            return Err(Error::invalid(name, format!("{v} is not in [-1, 1]")));
        }
    }
    Ok(1.0 + (1.0 - zeta) * k23_ideal + zeta * k23_corrupt - k13)
}

/// Caesium-to-electron mass ratio.
pub fn cs_electron_mass_ratio() -> f64 {
    CS_MASS_U * U_PER_ELECTRON_MASS
}

/// Macroscopicity `μ = log₁₀(T·(M_Cs/mₑ)²)` with `T` in seconds. For a
/// classicalization length `ell` above the 2 µm branch separation the
/// measure falls off as `−2·log₁₀(ell / 2 µm)`, matched continuously at 2 µm.
pub fn macroscopicity(total_duration_s: f64, ell_m: Option<f64>) -> Result<f64> {
    if !(total_duration_s > 0.0) || !total_duration_s.is_finite() {
        return Err(Error::invalid(
            "duration",
            format!("{total_duration_s} is not positive"),
        ));
    }
    let mu0 = (total_duration_s * cs_electron_mass_ratio().powi(2)).log10();
    match ell_m {
        None => Ok(mu0),
        Some(ell) if !(ell > 0.0) || !ell.is_finite() => {
            Err(Error::invalid("ell", format!("{ell} is not positive")))
        }
        Some(ell) if ell <= MAX_SEPARATION_M => Ok(mu0),
        Some(ell) => Ok(mu0 - 2.0 * (ell / MAX_SEPARATION_M).log10()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn k13_examples() {
        let delta = PositionDistribution::from_pairs([(-4, 1.0)]).unwrap();
        assert_eq!(k13_from_distribution(&delta).unwrap(), -1.0);
        let sym =
            PositionDistribution::from_pairs([(0, 0.25), (-2, 0.25), (1, 0.3), (3, 0.2)]).unwrap();
        assert_abs_diff_eq!(k13_from_distribution(&sym).unwrap(), 0.0, epsilon = 1e-15);
        let bad = PositionDistribution::from_pairs([(0, 0.5)]).unwrap();
        assert!(matches!(
            k13_from_distribution(&bad),
            Err(Error::Unnormalized(_))
        ));
    }

    #[test]
    fn k23_examples() {
        let c = QScheme::ConstantOne;
        assert_abs_diff_eq!(k23_from_arms(0.5, 0.3, 0.5, -0.3, &c).unwrap(), 0.0);
        assert_eq!(k23_from_arms(1.0, -1.0, 0.0, f64::NAN, &c).unwrap(), -1.0);
        assert!(matches!(
            k23_from_arms(0.6, 0.0, 0.6, 0.0, &c),
            Err(Error::ProbabilityMismatch(_))
        ));
        assert!(k23_from_arms(0.5, 1.5, 0.5, 0.0, &c).is_err());
        let d = QScheme::dichotomic(-1.0).unwrap();
        assert_abs_diff_eq!(k23_from_arms(0.5, 0.4, 0.5, 0.4, &d).unwrap(), 0.0);
    }

    #[test]
    fn k_examples() {
        assert_abs_diff_eq!(lg_k(1.0, -0.14, -0.57), 1.43, epsilon = 1e-12);
        for c in [-1.0, -0.3, 0.0, 0.77] {
            assert_eq!(lg_k(1.0, c, c), 1.0);
            assert_eq!(witness(lg_k(1.0, c, c)), 0.0);
        }
        let (k23, k13) = (-0.14, -0.57);
        let k = lg_k(1.0, k23, k13);
        let kp = lg_k_prime(1.0, k23, k13);
        assert_abs_diff_eq!(kp - 1.0, -(k - 1.0), epsilon = 1e-15);
    }

    #[test]
    fn closed_forms() {
        assert_abs_diff_eq!(analytic_k_constant(FRAC_PI_2), 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(analytic_k_constant(0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(analytic_k_constant(PI), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(analytic_k_dichotomic(FRAC_PI_2), 1.25, epsilon = 1e-15);
        assert_abs_diff_eq!(analytic_k_dichotomic(0.0), 1.0, epsilon = 1e-15);
        let (theta, kmax) = dichotomic_maximum();
        assert!((kmax - 1.31).abs() < 0.005, "{kmax}");
        assert!(theta > FRAC_PI_2 && theta < PI);
        for k in 0..=16 {
            let t = k as f64 * PI / 16.0;
            assert!(analytic_k_constant(t) >= analytic_k_dichotomic(t) - 1e-15);
        }
    }

    #[test]
    fn golden_section_finds_the_peak() {
        let (x, fx) = maximize(|x| -(x - 0.7).powi(2), 0.0, 3.0, 1e-10);
        assert_abs_diff_eq!(x, 0.7, epsilon = 1e-9);
        assert_abs_diff_eq!(fx, 0.0, epsilon = 1e-15);
        // a derivative check at the located maximum of the dichotomic form
        let (t, _) = dichotomic_maximum();
        let h = 1e-5;
        let slope = (analytic_k_dichotomic(t + h) - analytic_k_dichotomic(t - h)) / (2.0 * h);
        assert!(slope.abs() < 1e-6, "{slope}");
    }

    #[test]
    fn venality() {
        assert_eq!(venality_bound(0.01).unwrap(), 1.02);
        assert_eq!(venality_bound(0.0).unwrap(), 1.0);
        assert!(venality_bound(1.2).is_err());
        for zeta in [0.0, 0.01, 0.3, 1.0] {
            assert_abs_diff_eq!(
                venality_decompose(-0.2, -0.2, zeta, -0.6).unwrap(),
                1.0 - 0.2 + 0.6,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn macroscopicity_values() {
        let mu = macroscopicity(4.0 * 26e-6, None).unwrap();
        assert!((mu - 6.8).abs() < 0.05, "{mu}");
        assert_eq!(macroscopicity(104e-6, Some(2e-6)).unwrap(), mu);
        assert_eq!(macroscopicity(104e-6, Some(1e-7)).unwrap(), mu);
        assert_abs_diff_eq!(
            macroscopicity(104e-6, Some(20e-6)).unwrap(),
            mu - 2.0,
            epsilon = 1e-12
        );
        assert!(macroscopicity(0.0, None).is_err());
        assert!(macroscopicity(1.0, Some(-1.0)).is_err());
    }

    #[test]
    fn report_identities() {
        let c = Correlators {
            k12: 1.0,
            k13: -0.5959,
            k23: -0.1541,
        };
        let r = CorrelationReport::new(c, 0.01, None).unwrap();
        assert_eq!(r.k, r.k12 + (r.k23 - r.k13));
        assert_eq!(r.witness_w, (r.k - 1.0).abs());
        assert_eq!(r.adjusted_bound, 1.0 + 2.0 * 0.01);
        assert!(r.violates());
    }
}
